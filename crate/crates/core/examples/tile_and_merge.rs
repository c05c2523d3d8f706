//! Cut a rendered wall into overlapping 512 px tiles, segment each tile with
//! the baseline, pass the masks through the interchange format, and merge
//! them back into whole-image instances.
//!
//!     cargo run --release --example tile_and_merge

use std::path::Path;

use filaqc::camera::*;
use filaqc::geometry::compute_aabb;
use filaqc::render::{render, SplatConfig};
use filaqc::segmentation::{segment_baseline, BaselineParams, Frame, GrayTile, SegmentationResult};
use filaqc::synth::{generate, SynthSpec};
use filaqc::tiling::{merge_instances, reattach, TileGrid};

fn main() -> filaqc::Result<()> {
    let wall = generate(&SynthSpec::default(), 7)?;
    let aabb = compute_aabb(&wall.cloud)?;
    let d = working_distance(0.001, 0.004, 4.0)?;
    let pose = place_pp(&aabb, Side::PosY, d)?;
    let intr = fit_image_to_aabb(&pose, 4.0, 0.004, &aabb, 512)?;
    let visible = clip(&wall.cloud, &build_frustum(&pose, &intr, DEFAULT_NEAR_M, 4.0 * d)?);
    let buffer = render(&wall.cloud, &visible, &pose, &intr, &SplatConfig { radius_px: 0, ..Default::default() })?;

    for overlap in [64, 0] {
        let grid = TileGrid::new(buffer.width, buffer.height, 512, overlap)?;
        let mut results = Vec::new();
        for (i, tile) in grid.tile(&buffer.to_image())?.iter().enumerate() {
            let r = grid.rect(i);
            let gray = GrayTile::from_rgb(tile, Some(buffer.valid_in(&r)))?;
            let res = segment_baseline("wall", &gray, &BaselineParams::default(), Frame::Tile { origin: (r.x0, r.y0) })?;
            // what an external backend would hand back
            results.push(SegmentationResult::from_json(&res.to_json(), Path::new("memory"))?);
        }
        let per_tile: Vec<usize> = results.iter().map(|r| r.masks.len()).collect();
        let merged = merge_instances(&grid, &reattach(&grid, &results)?, 0.5)?;
        println!("overlap {overlap:>2}: tiles at {:?}, masks per tile {per_tile:?} -> {} instances", grid.origins(), merged.len());
        for inst in merged.iter().take(if overlap > 0 { usize::MAX } else { 0 }) {
            println!(
                "  #{} rows {}..{} cols {}..{}, {} px, tiles {:?}, confidence {:.2}",
                inst.id,
                inst.bbox.y0,
                inst.bbox.y1(),
                inst.bbox.x0,
                inst.bbox.x1(),
                inst.area_px,
                inst.member_tiles,
                inst.confidence
            );
        }
    }
    Ok(())
}
