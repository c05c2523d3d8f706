use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use filaqc::pipeline::{self, ConfigError, PipelineConfig, RawConfig, RunError};
use filaqc::synth::{CrossSection, NoiseDirection, SynthPath, SynthSpec};

/// Virtual-camera quality control for printed concrete walls.
#[derive(Parser)]
#[command(name = "filaqc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// INI pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the cloud, write rasters, tiles and the tile manifest.
    Render(ConfigArgs),
    /// Segment tiles with the baseline, or validate external mask files.
    Segment(ConfigArgs),
    /// Merge per-tile masks into global instances.
    Merge(ConfigArgs),
    /// Thickness profiles, plots and plan comparison.
    Profile(ConfigArgs),
    /// Label the cloud from the merged instances.
    Backproject(ConfigArgs),
    /// All stages in order, plus a timing report.
    Run(ConfigArgs),
    /// Write a synthetic printed wall with ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Stadium,
    Elliptical,
}

#[derive(Clone, Copy, ValueEnum)]
enum Noise {
    Outward,
    Normal,
}

#[derive(Args)]
struct SynthArgs {
    /// Output PLY; ground truth goes next to it as `<stem>.truth.json`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    layers: usize,
    #[arg(long, default_value_t = 10.0)]
    height_mm: f64,
    #[arg(long, default_value_t = 20.0)]
    width_mm: f64,
    /// Straight wall length.
    #[arg(long, default_value_t = 1.0)]
    length_m: f64,
    /// Print a helix of this radius instead of a straight wall.
    #[arg(long)]
    helix_radius_m: Option<f64>,
    #[arg(long, value_enum, default_value_t = Shape::Stadium)]
    shape: Shape,
    #[arg(long, default_value_t = 0.3)]
    noise_mm: f64,
    #[arg(long, value_enum, default_value_t = Noise::Outward)]
    noise_direction: Noise,
    #[arg(long, default_value_t = 0.5)]
    spacing_mm: f64,
    #[arg(long, default_value_t = 5.0)]
    groove_mm: f64,
}

impl SynthArgs {
    fn spec(&self) -> SynthSpec {
        SynthSpec {
            n_layers: self.layers,
            filament_height_mm: self.height_mm,
            filament_width_mm: self.width_mm,
            path: match self.helix_radius_m {
                Some(radius_m) => SynthPath::Helical {
                    radius_m,
                    pitch_mm: self.height_mm,
                    turns: self.layers as f64,
                },
                None => SynthPath::Straight { length_m: self.length_m },
            },
            cross_section: match self.shape {
                Shape::Stadium => CrossSection::Stadium,
                Shape::Elliptical => CrossSection::Elliptical,
            },
            surface_noise_sigma_mm: self.noise_mm,
            point_spacing_mm: self.spacing_mm,
            groove_depth_mm: self.groove_mm,
            noise_direction: match self.noise_direction {
                Noise::Outward => NoiseDirection::Outward,
                Noise::Normal => NoiseDirection::Normal,
            },
        }
    }
}

fn load(args: &ConfigArgs) -> Result<PipelineConfig, RunError> {
    let mut raw = match &args.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::empty(std::env::current_dir().map_err(|e| ConfigError(e.to_string()))?),
    };
    for o in &args.overrides {
        raw.set(o)?;
    }
    Ok(raw.resolve()?)
}

fn execute(cmd: Command) -> Result<String, RunError> {
    Ok(match cmd {
        Command::Render(a) => {
            let r = pipeline::cmd_render(&load(&a)?, None)?;
            format!(
                "rendered {}x{} at {:.4} mm/px, {} of {} points in view",
                r.width,
                r.height,
                r.gsd_m * 1000.0,
                r.points_in_frustum,
                r.points_total
            )
        }
        Command::Segment(a) => format!("{} masks written", pipeline::cmd_segment(&load(&a)?, None)?),
        Command::Merge(a) => format!("{} instances", pipeline::cmd_merge(&load(&a)?, None)?.instances.len()),
        Command::Profile(a) => {
            let r = pipeline::cmd_profile(&load(&a)?, None)?;
            let mut out = format!("{} profiles ({:?} mode)", r.instances.len(), r.mode);
            for i in &r.instances {
                if let Some(s) = i.stats {
                    out += &format!("\n  instance {}: mean {:.2} mm, max {:.2} mm", i.id, s.mean_mm, s.max_mm);
                }
            }
            out
        }
        Command::Backproject(a) => format!("{} points labeled", pipeline::cmd_backproject(&load(&a)?, None)?),
        Command::Run(a) => {
            let t = pipeline::cmd_run(&load(&a)?)?;
            format!(
                "{} tiles: pre {:.2} ms, segmentation {:.2} ms, post {:.2} ms, total {:.2} ms ({:.1} fps)",
                t.tiles, t.pre_processing_ms, t.segmentation_ms, t.post_processing_ms, t.total_ms, t.fps
            )
        }
        Command::Synth(a) => {
            let truth = pipeline::cmd_synth(&a.spec(), a.seed, &a.out)?;
            format!("wrote {} and {}", a.out.display(), truth.display())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("filaqc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
