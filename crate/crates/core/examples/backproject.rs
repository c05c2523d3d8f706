//! Carry merged instance labels from the image back onto the 3D points that
//! produced each pixel, and score them against the synthetic ground truth.
//!
//!     cargo run --release --example backproject -- [out_dir]

use std::collections::BTreeMap;
use std::path::PathBuf;

use filaqc::backproject::{export_labeled, label_points, UNLABELED};
use filaqc::camera::*;
use filaqc::geometry::compute_aabb;
use filaqc::io::PlyEncoding;
use filaqc::render::{render, SplatConfig};
use filaqc::segmentation::{segment_baseline, BaselineParams, Frame, GrayTile};
use filaqc::synth::{generate, SynthSpec};
use filaqc::tiling::{merge_instances, reattach, TileGrid};

fn main() -> filaqc::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("filaqc_labels"));
    std::fs::create_dir_all(&out).map_err(|e| filaqc::Error::io(&out, e))?;

    let wall = generate(&SynthSpec::default(), 7)?;
    let aabb = compute_aabb(&wall.cloud)?;
    let d = working_distance(0.001, 0.004, 4.0)?;
    let pose = place_pp(&aabb, Side::PosY, d)?;
    let intr = fit_image_to_aabb(&pose, 4.0, 0.004, &aabb, 512)?;
    let visible = clip(&wall.cloud, &build_frustum(&pose, &intr, DEFAULT_NEAR_M, 4.0 * d)?);
    let buffer = render(&wall.cloud, &visible, &pose, &intr, &SplatConfig { radius_px: 0, ..Default::default() })?;

    let grid = TileGrid::new(buffer.width, buffer.height, 512, 64)?;
    let mut results = Vec::new();
    for (i, tile) in grid.tile(&buffer.to_image())?.iter().enumerate() {
        let r = grid.rect(i);
        let gray = GrayTile::from_rgb(tile, Some(buffer.valid_in(&r)))?;
        results.push(segment_baseline("wall", &gray, &BaselineParams::default(), Frame::Tile { origin: (r.x0, r.y0) })?);
    }
    let instances = merge_instances(&grid, &reattach(&grid, &results)?, 0.5)?;
    let labeled = label_points(&wall.cloud, &buffer, &instances, "example / baseline")?;

    // confusion between predicted instance and true layer
    let mut table: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for (&pred, &truth) in labeled.labels.iter().zip(&wall.labels) {
        if pred != UNLABELED {
            *table.entry(pred).or_default().entry(truth).or_default() += 1;
        }
    }
    println!("{} of {} points labeled (one z-buffer winner per pixel)", labeled.labeled_count(), wall.cloud.len());
    for (pred, row) in &table {
        println!("  instance {pred}: true layers {row:?}");
    }

    let (ply, legend) = (out.join("labeled.ply"), out.join("legend.json"));
    export_labeled(&labeled, &instances, &ply, &legend, PlyEncoding::BinaryLittleEndian)?;
    println!("wrote {} and {}", ply.display(), legend.display());
    Ok(())
}
