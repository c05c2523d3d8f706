//! Render a synthetic five-layer wall into an image plus per-pixel source
//! index and depth rasters.
//!
//!     cargo run --release --example render_synthetic_wall -- [out_dir]

use std::path::PathBuf;

use filaqc::camera::*;
use filaqc::geometry::compute_aabb;
use filaqc::render::{render, SplatConfig};
use filaqc::synth::{generate, SynthSpec};

fn main() -> filaqc::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("filaqc_render"));
    std::fs::create_dir_all(&out).map_err(|e| filaqc::Error::io(&out, e))?;

    let wall = generate(&SynthSpec::default(), 7)?;
    let aabb = compute_aabb(&wall.cloud)?;
    let d = working_distance(0.001, 0.004, 4.0)?;
    let pose = place_pp(&aabb, Side::PosY, d)?;
    let intr = fit_image_to_aabb(&pose, 4.0, 0.004, &aabb, 512)?;
    let visible = clip(&wall.cloud, &build_frustum(&pose, &intr, DEFAULT_NEAR_M, 4.0 * d)?);

    for radius_px in [0, 1] {
        let buffer = render(&wall.cloud, &visible, &pose, &intr, &SplatConfig { radius_px, ..Default::default() })?;
        println!(
            "radius {radius_px}: {}x{} px, {} filled, gsd {:.4} mm/px",
            buffer.width,
            buffer.height,
            buffer.filled_pixels(),
            buffer.gsd_m * 1000.0
        );
        buffer.save_png(&out.join(format!("wall_r{radius_px}.png")))?;
        buffer.save_index_raster(&out.join(format!("wall_r{radius_px}.vcidx")))?;
        buffer.save_depth_raster(&out.join(format!("wall_r{radius_px}.vcdpt")))?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
