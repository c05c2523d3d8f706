//! Plan a virtual camera for a target ground sampling distance, place it both
//! ways (parallel to a bounding-box side, and from a known scanner position)
//! and check which points the frustum keeps.
//!
//!     cargo run --example virtual_camera

use filaqc::camera::*;
use filaqc::geometry::{compute_aabb, compute_centroid, Vec3};
use filaqc::synth::{generate, SynthPath, SynthSpec};

fn main() -> filaqc::Result<()> {
    let (focal_mm, pixel_mm) = (4.0, 0.004);
    // a 20 mm groove needs at most 10 mm/px; we stay at the 1 mm/px ceiling
    let target = shannon_gsd(0.02)?.min(MAX_GSD_M);
    let d = working_distance(target, pixel_mm, focal_mm)?;
    println!("target {:.2} mm/px -> working distance {d:.3} m", target * 1000.0);

    let wall = generate(&SynthSpec { path: SynthPath::Straight { length_m: 0.6 }, ..Default::default() }, 1)?;
    let aabb = compute_aabb(&wall.cloud)?;

    let pp = place_pp(&aabb, Side::PosY, d)?;
    let intr = fit_image_to_aabb(&pp, focal_mm, pixel_mm, &aabb, 512)?;
    let frustum = build_frustum(&pp, &intr, DEFAULT_NEAR_M, 4.0 * d)?;
    println!(
        "side placement: camera at {:.3?}, image {}x{}, {} of {} points in view",
        pp.camera_center().as_slice(),
        intr.width_px,
        intr.height_px,
        clip(&wall.cloud, &frustum).len(),
        wall.cloud.len()
    );

    let scanner = Vec3::new(0.3, 4.0, 1.2);
    for mode in [KspMode::Direct, KspMode::Horizontal] {
        let pose = place_ksp(scanner, compute_centroid(&wall.cloud)?, mode, d)?;
        let axis = pose.optical_axis();
        println!("{mode:?} placement: axis {:.3?}, tilt {:.1} deg", axis.as_slice(), axis.z.asin().to_degrees());
    }

    // projection of the bounding-box center lands near the principal point
    let c = (aabb.min + aabb.max) / 2.0;
    let p = project(&pp, &intr, &c).expect("center is in front of the camera");
    println!("box center projects to ({:.1}, {:.1}), principal point ({:.1}, {:.1})", p.u, p.v, intr.cx, intr.cy);
    Ok(())
}
