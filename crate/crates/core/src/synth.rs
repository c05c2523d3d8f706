//! Synthetic printed walls with ground-truth layer labels.
//!
//! Layers are stacked along +z, layer `t` centered at `(t + 0.5) * height`.
//! Only the outward-facing half of each filament is sampled: the side facing
//! +y for straight walls, the radial outside for helical ones. Points are
//! grey-shaded by the angle between the surface normal and the outward
//! direction, so the recessed grooves between layers render dark.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ColorAttr, PointCloud, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthPath {
    /// Along +x from the origin.
    Straight { length_m: f64 },
    /// Around the z axis; one layer per turn.
    Helical { radius_m: f64, pitch_mm: f64, turns: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossSection {
    /// Flat front with rounded corners whose radius is the groove depth.
    #[default]
    Stadium,
    /// Elliptic bulge of the groove depth over the full filament height.
    Elliptical,
}

/// Direction of the Gaussian surface noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDirection {
    /// Along the outward (viewing) direction, like range noise of a scan
    /// taken from the camera side.
    #[default]
    Outward,
    /// Along the local surface normal.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_layers: usize,
    pub filament_height_mm: f64,
    pub filament_width_mm: f64,
    pub path: SynthPath,
    pub cross_section: CrossSection,
    pub surface_noise_sigma_mm: f64,
    pub point_spacing_mm: f64,
    pub groove_depth_mm: f64,
    pub noise_direction: NoiseDirection,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_layers: 5,
            filament_height_mm: 10.0,
            filament_width_mm: 20.0,
            path: SynthPath::Straight { length_m: 1.0 },
            cross_section: CrossSection::Stadium,
            surface_noise_sigma_mm: 0.3,
            point_spacing_mm: 0.5,
            groove_depth_mm: 5.0,
            noise_direction: NoiseDirection::Outward,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::invalid("need at least one layer"));
        }
        positive("filament_height_mm", self.filament_height_mm)?;
        positive("filament_width_mm", self.filament_width_mm)?;
        positive("point_spacing_mm", self.point_spacing_mm)?;
        positive("groove_depth_mm", self.groove_depth_mm)?;
        if !(self.surface_noise_sigma_mm.is_finite() && self.surface_noise_sigma_mm >= 0.0) {
            return Err(Error::invalid("surface_noise_sigma_mm must be non-negative"));
        }
        if self.point_spacing_mm > self.filament_height_mm / 4.0 {
            return Err(Error::invalid(format!(
                "point spacing {} mm exceeds a quarter of the filament height",
                self.point_spacing_mm
            )));
        }
        let limit = match self.cross_section {
            CrossSection::Stadium => self.filament_height_mm.min(self.filament_width_mm) / 2.0,
            CrossSection::Elliptical => self.filament_width_mm / 2.0,
        };
        if self.groove_depth_mm > limit {
            return Err(Error::invalid(format!(
                "groove depth {} mm exceeds {limit} mm for this cross-section",
                self.groove_depth_mm
            )));
        }
        match self.path {
            SynthPath::Straight { length_m } => positive("length_m", length_m),
            SynthPath::Helical {
                radius_m,
                pitch_mm,
                turns,
            } => {
                positive("radius_m", radius_m)?;
                positive("pitch_mm", pitch_mm)?;
                positive("turns", turns)?;
                if turns.ceil() as usize != self.n_layers {
                    return Err(Error::invalid(format!(
                        "{turns} turns make {} layers, spec says {}",
                        turns.ceil(),
                        self.n_layers
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Ground truth for one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerTruth {
    pub label: u32,
    pub z_center_m: f64,
    pub thickness_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub cloud: PointCloud,
    /// Layer label per point, 1-based from the bottom.
    pub labels: Vec<u32>,
    pub layers: Vec<LayerTruth>,
}

/// A point on the cross-section: outward offset from the filament centerline,
/// vertical offset from the layer center, and the normal's elevation angle.
#[derive(Debug, Clone, Copy)]
struct SectionSample {
    out: f64,
    up: f64,
    elevation: f64,
}

fn section_samples(spec: &SynthSpec) -> Vec<SectionSample> {
    let a = spec.filament_height_mm / 2000.0;
    let b = spec.filament_width_mm / 2000.0;
    let d = spec.groove_depth_mm / 1000.0;
    let step = spec.point_spacing_mm / 1000.0;
    match spec.cross_section {
        CrossSection::Stadium => {
            let arc = FRAC_PI_2 * d;
            let flat = 2.0 * (a - d);
            let total = 2.0 * arc + flat;
            let m = ((total / step).ceil() as usize).max(2);
            (0..m)
                .map(|j| {
                    let l = (j as f64 + 0.5) * total / m as f64;
                    if l < arc {
                        let e = -FRAC_PI_2 + l / d;
                        SectionSample {
                            out: b - d + d * e.cos(),
                            up: -(a - d) + d * e.sin(),
                            elevation: e,
                        }
                    } else if l < arc + flat {
                        SectionSample {
                            out: b,
                            up: -(a - d) + (l - arc),
                            elevation: 0.0,
                        }
                    } else {
                        let e = (l - arc - flat) / d;
                        SectionSample {
                            out: b - d + d * e.cos(),
                            up: (a - d) + d * e.sin(),
                            elevation: e,
                        }
                    }
                })
                .collect()
        }
        CrossSection::Elliptical => {
            // Ramanujan's perimeter approximation, halved
            let h = ((a - d) / (a + d)).powi(2);
            let half = PI * (a + d) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt())) / 2.0;
            let m = ((half / step).ceil() as usize).max(2);
            (0..m)
                .map(|j| {
                    let t = -FRAC_PI_2 + (j as f64 + 0.5) * PI / m as f64;
                    SectionSample {
                        out: b - d + d * t.cos(),
                        up: a * t.sin(),
                        elevation: (t.sin() / a).atan2(t.cos() / d),
                    }
                })
                .collect()
        }
    }
}

/// Grey level for a normal at `elevation` from the outward direction: a
/// Lambertian term plus ambient light so that no surface renders pure black.
fn shade(elevation: f64) -> u8 {
    (255.0 * (0.15 + 0.85 * elevation.cos().max(0.0))).round() as u8
}

pub fn generate(spec: &SynthSpec, seed: u64) -> Result<SynthOutput> {
    spec.validate()?;
    let h = spec.filament_height_mm / 1000.0;
    let step = spec.point_spacing_mm / 1000.0;
    let section = section_samples(spec);
    let sigma = spec.surface_noise_sigma_mm / 1000.0;
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |n: Vec3| if sigma > 0.0 { n * noise.sample(&mut rng) } else { Vec3::zeros() };

    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut labels = Vec::new();
    let mut layers = Vec::new();
    for t in 0..spec.n_layers {
        let label = t as u32 + 1;
        layers.push(LayerTruth {
            label,
            z_center_m: (t as f64 + 0.5) * h,
            thickness_mm: spec.filament_height_mm,
        });
        // (centerline point, outward unit direction) along the path
        let stations: Vec<(Vec3, Vec3)> = match spec.path {
            SynthPath::Straight { length_m } => {
                let n = ((length_m / step).round() as usize).max(1);
                (0..n)
                    .map(|k| {
                        let x = (k as f64 + 0.5) * length_m / n as f64;
                        (Vec3::new(x, 0.0, (t as f64 + 0.5) * h), Vec3::y())
                    })
                    .collect()
            }
            SynthPath::Helical {
                radius_m,
                pitch_mm,
                turns,
            } => {
                let span = (turns - t as f64).min(1.0) * TAU;
                let n = ((span * radius_m / step).round() as usize).max(1);
                (0..n)
                    .map(|k| {
                        let theta = TAU * t as f64 + (k as f64 + 0.5) * span / n as f64;
                        let dir = Vec3::new(theta.cos(), theta.sin(), 0.0);
                        let z = h / 2.0 + pitch_mm / 1000.0 * theta / TAU;
                        (dir * radius_m + Vec3::new(0.0, 0.0, z), dir)
                    })
                    .collect()
            }
        };
        for (center, out) in stations {
            for s in &section {
                let dir = match spec.noise_direction {
                    NoiseDirection::Outward => out,
                    NoiseDirection::Normal => out * s.elevation.cos() + Vec3::z() * s.elevation.sin(),
                };
                let p = center + out * s.out + Vec3::z() * s.up;
                points.push(p + jitter(dir));
                let g = shade(s.elevation);
                colors.push([g, g, g]);
                labels.push(label);
            }
        }
    }
    Ok(SynthOutput {
        cloud: PointCloud::new(points, ColorAttr::Rgb8(colors))?,
        labels,
        layers,
    })
}
