//! The file-driven pipeline as the command-line tool runs it: synthesize a
//! wall, write a config, run every stage, and read back the reports.
//!
//!     cargo run --release --example full_pipeline -- [work_dir]

use std::path::PathBuf;

use filaqc::pipeline::{cmd_run, cmd_synth, Layout, RawConfig};
use filaqc::synth::SynthSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("filaqc_run"));
    std::fs::create_dir_all(&work)?;
    cmd_synth(&SynthSpec::default(), 7, &work.join("wall.ply"))?;
    std::fs::write(work.join("plan.txt"), "# bottom layer first\n10\n10\n10\n10\n10\n")?;
    std::fs::write(
        work.join("qc.ini"),
        "[input]\npath = wall.ply\n\n[render]\nradius_px = 0\n\n[profile]\nplan = plan.txt\n\n[output]\ndir = out\n",
    )?;

    let cfg = RawConfig::load(&work.join("qc.ini"))?.resolve()?;
    let timing = cmd_run(&cfg)?;
    println!(
        "{} tiles: pre {:.2} ms, segmentation {:.2} ms, post {:.2} ms, total {:.2} ms ({:.0} fps)",
        timing.tiles, timing.pre_processing_ms, timing.segmentation_ms, timing.post_processing_ms, timing.total_ms, timing.fps
    );

    let layout = Layout::new(&cfg.output_dir);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(layout.profile_report())?)?;
    for layer in report["plan"]["layers"].as_array().into_iter().flatten() {
        println!(
            "layer {} <- instance {}: planned {} mm, measured {:.2} mm",
            layer["layer"], layer["instance_id"], layer["planned_mm"], layer["measured_mm"].as_f64().unwrap_or(f64::NAN)
        );
    }
    println!("outputs under {}", layout.root.display());
    Ok(())
}
