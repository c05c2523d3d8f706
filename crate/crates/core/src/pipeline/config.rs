//! INI pipeline configuration.
//!
//! ```ini
//! [input]
//! path = wall.ply          ; relative paths resolve against the config file
//! format = auto            ; auto | ply_ascii | ply_binary | xyz
//!
//! [camera]
//! mode = pp                ; pp | ksp
//! side = +y                ; pp: +x | -x | +y | -y | top
//! sensor_pos = 0, 2, 0.5   ; ksp: scanner position, metres
//! ksp_mode = horizontal    ; ksp: direct | horizontal
//! focal_mm = 4
//! pixel_size_mm = 0.004
//! target_gsd_m = 0.001     ; sets the working distance
//! width_px = 0             ; 0 fits the image to the cloud, in whole tiles
//! height_px = 0
//! cx =                     ; principal point, default image center
//! cy =
//! near_m = 0.05
//! far_m =                 ; default 4x the working distance
//!
//! [render]
//! radius_px = 1
//! hole_fill = none         ; none | close3
//! color = native           ; native | signed_distance
//! plane_fit = lsq          ; lsq | ransac, for signed_distance
//! colormap_range_m = 0.005
//!
//! [tiling]
//! tile_px = 512
//! overlap_px = 64
//! iou_threshold = 0.5
//!
//! [segmentation]
//! backend = baseline       ; baseline | external
//! mask_dir =               ; external: one tile_NNNN.json per tile
//! k = 1.0
//! min_area_px = 100
//! min_contrast = 0.1
//! min_confidence = 0
//!
//! [profile]
//! mode = max               ; max | mean
//! plan =                   ; optional: one planned height in mm per line, bottom first
//!
//! [output]
//! dir = out
//! ```

use std::path::{Path, PathBuf};

use ini::Ini;

use crate::camera::{KspMode, Side, MAX_GSD_M};
use crate::geometry::{PlaneFit, RansacParams, Vec3};
use crate::io::CloudFormat;
use crate::profile::ProfileMode;
use crate::render::{HoleFill, SplatConfig, MAX_SPLAT_RADIUS};
use crate::segmentation::BaselineParams;

/// A configuration problem, reported before any output is written.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config: {0}")]
pub struct ConfigError(pub String);

type CResult<T> = std::result::Result<T, ConfigError>;

fn err<T>(msg: impl Into<String>) -> CResult<T> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Predefined { side: Side },
    KnownSensor { sensor_pos: Vec3, mode: KspMode },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraConfig {
    pub placement: Placement,
    pub focal_mm: f64,
    pub pixel_size_mm: f64,
    pub target_gsd_m: f64,
    /// 0 fits the image to the cloud.
    pub width_px: u32,
    pub height_px: u32,
    pub principal_point: Option<(f64, f64)>,
    pub near_m: f64,
    /// `None` is four times the working distance.
    pub far_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorMode {
    Native,
    SignedDistance(PlaneFit),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    pub splat: SplatConfig,
    pub color: ColorMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TilingConfig {
    pub tile_px: u32,
    pub overlap_px: u32,
    pub iou_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SegBackend {
    Baseline(BaselineParams),
    External { mask_dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationConfig {
    pub backend: SegBackend,
    pub min_confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub mode: ProfileMode,
    pub plan: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub format: Option<CloudFormat>,
    pub camera: CameraConfig,
    pub render: RenderConfig,
    pub tiling: TilingConfig,
    pub segmentation: SegmentationConfig,
    pub profile: ProfileConfig,
    pub output_dir: PathBuf,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("input", &["path", "format"]),
    (
        "camera",
        &[
            "mode", "side", "sensor_pos", "ksp_mode", "focal_mm", "pixel_size_mm", "target_gsd_m", "width_px",
            "height_px", "cx", "cy", "near_m", "far_m",
        ],
    ),
    ("render", &["radius_px", "hole_fill", "color", "plane_fit", "colormap_range_m"]),
    ("tiling", &["tile_px", "overlap_px", "iou_threshold"]),
    ("segmentation", &["backend", "mask_dir", "k", "min_area_px", "min_contrast", "min_confidence"]),
    ("profile", &["mode", "plan"]),
    ("output", &["dir"]),
];

/// Raw key/value view with override support.
#[derive(Debug, Clone)]
pub struct RawConfig {
    ini: Ini,
    base_dir: PathBuf,
}

impl RawConfig {
    pub fn empty(base_dir: impl Into<PathBuf>) -> Self {
        Self {
            ini: Ini::new(),
            base_dir: base_dir.into(),
        }
    }

    pub fn from_str(text: &str, base_dir: impl Into<PathBuf>) -> CResult<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        let raw = Self {
            ini,
            base_dir: base_dir.into(),
        };
        raw.check_keys()?;
        Ok(raw)
    }

    pub fn load(path: &Path) -> CResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    fn check_keys(&self) -> CResult<()> {
        for (section, props) in self.ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return err(format!("key '{k}' outside any section"));
                }
                continue;
            };
            let Some((_, keys)) = KNOWN.iter().find(|(s, _)| *s == section) else {
                return err(format!("unknown section [{section}]"));
            };
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    return err(format!("unknown key {section}.{k}"));
                }
            }
        }
        Ok(())
    }

    /// Applies `section.key=value`.
    pub fn set(&mut self, assignment: &str) -> CResult<()> {
        let Some((lhs, value)) = assignment.split_once('=') else {
            return err(format!("override '{assignment}' is not section.key=value"));
        };
        let Some((section, key)) = lhs.trim().split_once('.') else {
            return err(format!("override '{assignment}' is not section.key=value"));
        };
        self.ini.with_section(Some(section.trim())).set(key.trim(), value.trim());
        self.check_keys()
    }

    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.get_from(Some(section), key).map(str::trim).filter(|v| !v.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> CResult<T> {
        match self.get(section, key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("{section}.{key}: cannot parse '{v}'"))),
        }
    }

    fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.get(section, key).map(|v| self.base_dir.join(v))
    }

    fn vec3(&self, section: &str, key: &str) -> CResult<Option<Vec3>> {
        let Some(v) = self.get(section, key) else { return Ok(None) };
        let parts: Vec<f64> = v
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| ConfigError(format!("{section}.{key}: expected x, y, z")))?;
        match parts[..] {
            [x, y, z] if parts.iter().all(|c| c.is_finite()) => Ok(Some(Vec3::new(x, y, z))),
            _ => err(format!("{section}.{key}: expected three finite numbers")),
        }
    }

    /// Validates everything and resolves paths; does not touch the filesystem.
    pub fn resolve(&self) -> CResult<PipelineConfig> {
        let Some(input) = self.path("input", "path") else {
            return err("input.path is required");
        };
        let format = match self.get("input", "format").unwrap_or("auto") {
            "auto" => None,
            f => Some(CloudFormat::parse(f).ok_or_else(|| ConfigError(format!("input.format: unknown '{f}'")))?),
        };

        let placement = match self.get("camera", "mode").unwrap_or("pp") {
            "pp" => Placement::Predefined {
                side: self
                    .get("camera", "side")
                    .unwrap_or("+y")
                    .parse()
                    .map_err(|e: crate::Error| ConfigError(format!("camera.side: {e}")))?,
            },
            "ksp" => {
                let Some(sensor_pos) = self.vec3("camera", "sensor_pos")? else {
                    return err("camera.sensor_pos is required when camera.mode = ksp");
                };
                let mode = match self.get("camera", "ksp_mode").unwrap_or("horizontal") {
                    "direct" => KspMode::Direct,
                    "horizontal" => KspMode::Horizontal,
                    m => return err(format!("camera.ksp_mode: unknown '{m}'")),
                };
                Placement::KnownSensor { sensor_pos, mode }
            }
            m => return err(format!("camera.mode: unknown '{m}' (pp|ksp)")),
        };
        let cx: Option<f64> = self.get("camera", "cx").map(|_| self.parse("camera", "cx", 0.0)).transpose()?;
        let cy: Option<f64> = self.get("camera", "cy").map(|_| self.parse("camera", "cy", 0.0)).transpose()?;
        let camera = CameraConfig {
            placement,
            focal_mm: self.parse("camera", "focal_mm", 4.0)?,
            pixel_size_mm: self.parse("camera", "pixel_size_mm", 0.004)?,
            target_gsd_m: self.parse("camera", "target_gsd_m", MAX_GSD_M)?,
            width_px: self.parse("camera", "width_px", 0)?,
            height_px: self.parse("camera", "height_px", 0)?,
            principal_point: match (cx, cy) {
                (Some(x), Some(y)) => Some((x, y)),
                (None, None) => None,
                _ => return err("camera.cx and camera.cy must be given together"),
            },
            near_m: self.parse("camera", "near_m", crate::camera::DEFAULT_NEAR_M)?,
            far_m: self.get("camera", "far_m").map(|_| self.parse("camera", "far_m", 0.0)).transpose()?,
        };
        for (name, v) in [
            ("focal_mm", camera.focal_mm),
            ("pixel_size_mm", camera.pixel_size_mm),
            ("target_gsd_m", camera.target_gsd_m),
            ("near_m", camera.near_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return err(format!("camera.{name} must be positive"));
            }
        }
        if camera.far_m.is_some_and(|f| !(f.is_finite() && f > camera.near_m)) {
            return err("camera.far_m must exceed camera.near_m");
        }
        if (camera.width_px == 0) != (camera.height_px == 0) {
            return err("camera.width_px and camera.height_px must both be 0 or both be set");
        }
        let min = crate::segmentation::MIN_TILE_PX;
        if camera.width_px != 0 && (camera.width_px < min || camera.height_px < min) {
            return err(format!("camera.width_px and camera.height_px must be at least {min}"));
        }

        let splat = SplatConfig {
            radius_px: self.parse("render", "radius_px", 1)?,
            colormap_range_m: self.parse("render", "colormap_range_m", 0.005)?,
            hole_fill: match self.get("render", "hole_fill").unwrap_or("none") {
                "none" => HoleFill::None,
                "close3" => HoleFill::Close3,
                h => return err(format!("render.hole_fill: unknown '{h}'")),
            },
        };
        if splat.radius_px > MAX_SPLAT_RADIUS {
            return err(format!("render.radius_px must be at most {MAX_SPLAT_RADIUS}"));
        }
        splat.validate().map_err(|e| ConfigError(format!("render: {e}")))?;
        let fit = match self.get("render", "plane_fit").unwrap_or("lsq") {
            "lsq" => PlaneFit::LeastSquares,
            "ransac" => PlaneFit::Ransac(RansacParams::default()),
            p => return err(format!("render.plane_fit: unknown '{p}'")),
        };
        let color = match self.get("render", "color").unwrap_or("native") {
            "native" => ColorMode::Native,
            "signed_distance" => ColorMode::SignedDistance(fit),
            c => return err(format!("render.color: unknown '{c}'")),
        };

        let tiling = TilingConfig {
            tile_px: self.parse("tiling", "tile_px", crate::tiling::DEFAULT_TILE_PX)?,
            overlap_px: self.parse("tiling", "overlap_px", crate::tiling::DEFAULT_OVERLAP_PX)?,
            iou_threshold: self.parse("tiling", "iou_threshold", 0.5)?,
        };
        if tiling.tile_px < crate::segmentation::MIN_TILE_PX {
            return err(format!("tiling.tile_px must be at least {}", crate::segmentation::MIN_TILE_PX));
        }
        if tiling.overlap_px >= tiling.tile_px {
            return err("tiling.overlap_px must be smaller than tiling.tile_px");
        }
        if !(0.0..=1.0).contains(&tiling.iou_threshold) {
            return err("tiling.iou_threshold must be in [0, 1]");
        }

        let defaults = BaselineParams::default();
        let backend = match self.get("segmentation", "backend").unwrap_or("baseline") {
            "baseline" => {
                let p = BaselineParams {
                    k: self.parse("segmentation", "k", defaults.k)?,
                    min_area_px: self.parse("segmentation", "min_area_px", defaults.min_area_px)?,
                    min_contrast: self.parse("segmentation", "min_contrast", defaults.min_contrast)?,
                };
                if !(p.k.is_finite() && p.k >= 0.0) {
                    return err("segmentation.k must be non-negative");
                }
                if !(0.0..=1.0).contains(&p.min_contrast) {
                    return err("segmentation.min_contrast must be in [0, 1]");
                }
                SegBackend::Baseline(p)
            }
            "external" => match self.path("segmentation", "mask_dir") {
                Some(mask_dir) => SegBackend::External { mask_dir },
                None => return err("segmentation.mask_dir is required for the external backend"),
            },
            b => return err(format!("segmentation.backend: unknown '{b}' (baseline|external)")),
        };
        let min_confidence = self.parse("segmentation", "min_confidence", 0.0)?;
        if !(0.0..=1.0).contains(&min_confidence) {
            return err("segmentation.min_confidence must be in [0, 1]");
        }

        let profile = ProfileConfig {
            mode: self
                .get("profile", "mode")
                .unwrap_or("max")
                .parse()
                .map_err(|e: crate::Error| ConfigError(format!("profile.mode: {e}")))?,
            plan: self.path("profile", "plan"),
        };
        let output_dir = self.path("output", "dir").unwrap_or_else(|| self.base_dir.join("out"));

        Ok(PipelineConfig {
            input,
            format,
            camera,
            render: RenderConfig { splat, color },
            tiling,
            segmentation: SegmentationConfig { backend, min_confidence },
            profile,
            output_dir,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(text: &str) -> CResult<PipelineConfig> {
        RawConfig::from_str(text, "/base")?.resolve()
    }

    #[test]
    fn defaults() {
        let c = resolve("[input]\npath = wall.ply\n").unwrap();
        assert_eq!(c.input, PathBuf::from("/base/wall.ply"));
        assert_eq!(c.output_dir, PathBuf::from("/base/out"));
        assert_eq!(c.camera.placement, Placement::Predefined { side: Side::PosY });
        assert_eq!(c.tiling.tile_px, 512);
        assert_eq!(c.render.splat.radius_px, 1);
        assert!(matches!(c.segmentation.backend, SegBackend::Baseline(_)));
        assert_eq!(c.profile.mode, ProfileMode::Max);
    }

    #[test]
    fn ksp_requires_sensor_position() {
        let e = resolve("[input]\npath = a.ply\n[camera]\nmode = ksp\n").unwrap_err();
        assert!(e.0.contains("sensor_pos"));
        let c = resolve("[input]\npath = a.ply\n[camera]\nmode = ksp\nsensor_pos = 1, 2, 3\nksp_mode = direct\n").unwrap();
        assert_eq!(
            c.camera.placement,
            Placement::KnownSensor { sensor_pos: Vec3::new(1.0, 2.0, 3.0), mode: KspMode::Direct }
        );
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let mut raw = RawConfig::from_str("[input]\npath = a.ply\n", "/b").unwrap();
        raw.set("tiling.overlap_px=0").unwrap();
        raw.set("render.radius_px = 0").unwrap();
        let c = raw.resolve().unwrap();
        assert_eq!(c.tiling.overlap_px, 0);
        assert_eq!(c.render.splat.radius_px, 0);
        assert!(raw.set("tiling.overlap=3").is_err());
        assert!(raw.set("nonsense").is_err());
        assert!(resolve("[input]\npath = a.ply\n[camera]\nfocus = 3\n").is_err());
        assert!(resolve("[input]\npath = a.ply\n[tiling]\noverlap_px = 600\n").is_err());
        assert!(resolve("[input]\npath = a.ply\n[render]\nradius_px = 9\n").is_err());
        assert!(resolve("[input]\npath = a.ply\n[segmentation]\nbackend = external\n").is_err());
        assert!(resolve("[camera]\nmode = pp\n").is_err());
    }
}
