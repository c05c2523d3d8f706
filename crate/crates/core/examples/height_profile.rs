//! Filament thickness from the distance transform: twice the per-column
//! ridge of the distance to the nearest background pixel.
//!
//!     cargo run --example height_profile

use filaqc::mask::BitMask;
use filaqc::profile::{column_profile, compare_to_plan, distance_map, ProfileMode};

fn main() -> filaqc::Result<()> {
    let gsd_m = 0.001;
    // two layers: a straight 10 px band and one that thins to 6 px on the right
    let (w, h) = (120, 40);
    let straight = BitMask::from_pixels(w, h, (24..34).flat_map(|y| (0..w).map(move |x| (x, y))));
    let tapered = BitMask::from_pixels(
        w,
        h,
        (0..w).flat_map(|x| {
            let rows = if x < 60 { 10 } else { 6 };
            (8..8 + rows).map(move |y| (x, y))
        }),
    );

    let mut profiles = Vec::new();
    for (id, mask) in [(1, &tapered), (2, &straight)] {
        for mode in [ProfileMode::Max, ProfileMode::Mean] {
            let p = column_profile(&distance_map(id, mask), mode, gsd_m)?;
            let s = p.stats.expect("non-empty instance");
            println!(
                "instance {id} {mode:?}: mean {:.2} mm, min {:.2}, max {:.2}, interior mean {:.2}",
                s.mean_mm,
                s.min_mm,
                s.max_mm,
                p.interior_mm(10).iter().sum::<f64>() / p.interior_mm(10).len() as f64
            );
            if mode == ProfileMode::Max {
                profiles.push(p);
            }
        }
    }

    let cmp = compare_to_plan(&profiles, &[10.0, 10.0])?;
    for l in &cmp.layers {
        println!(
            "layer {} (instance {}): planned {:.1} mm, measured {:?}, deviation {:?}",
            l.layer, l.instance_id, l.planned_mm, l.measured_mm, l.deviation_mm
        );
    }
    Ok(())
}
