//! Colour a cloud by signed distance to a fitted plane, so that grooves
//! between filaments show up regardless of the scanner's intensity channel.
//!
//!     cargo run --example plane_colorize -- [out.ply]

use std::path::PathBuf;

use filaqc::geometry::{fit_plane, signed_distance_colorize, ColorAttr, PlaneFit, RansacParams};
use filaqc::io::{write_ply, PlyEncoding};
use filaqc::synth::{generate, SynthPath, SynthSpec};

fn main() -> filaqc::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("wall_sd.ply"));
    let wall = generate(&SynthSpec { path: SynthPath::Straight { length_m: 0.4 }, ..Default::default() }, 3)?;

    for (name, method) in [("least squares", PlaneFit::LeastSquares), ("ransac", PlaneFit::Ransac(RansacParams::default()))] {
        let plane = fit_plane(&wall.cloud, method)?;
        println!("{name:>13}: normal {:.4?}, offset {:.4} m", plane.normal().as_slice(), plane.offset());
    }

    let plane = fit_plane(&wall.cloud, PlaneFit::Ransac(RansacParams::default()))?;
    let colored = signed_distance_colorize(&wall.cloud, &plane);
    if let ColorAttr::SignedDistance(d) = colored.colors() {
        let (lo, hi) = d.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        println!("signed distance range {:.1} .. {:.1} mm", lo * 1000.0, hi * 1000.0);
    }
    write_ply(&out, &colored, PlyEncoding::BinaryLittleEndian, None)?;
    println!("wrote {}", out.display());
    Ok(())
}
