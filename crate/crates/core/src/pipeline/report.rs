//! File schemas written by the pipeline commands.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, Pose};
use crate::error::{Error, Result};
use crate::mask::{BitMask, Rect};
use crate::profile::{LayerComparison, ProfileMode, ProfileStats};
use crate::render::SplatConfig;
use crate::tiling::GlobalInstance;

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// `render/render.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderReport {
    pub image_id: String,
    pub source: String,
    pub width: u32,
    pub height: u32,
    pub gsd_m: f64,
    pub working_distance_m: f64,
    /// World-to-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub camera_center: [f64; 3],
    pub intrinsics: Intrinsics,
    pub splat: SplatConfig,
    pub points_total: usize,
    pub points_in_frustum: usize,
    pub filled_pixels: usize,
}

impl RenderReport {
    pub fn pose(&self) -> Result<Pose> {
        let r = nalgebra::Matrix3::from_fn(|i, j| self.rotation[i][j]);
        Pose::new(r, nalgebra::Vector3::from(self.translation))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub id: u32,
    pub confidence: f64,
    pub member_tiles: Vec<usize>,
    /// `[x0, y0, w, h]`
    pub bbox: [u32; 4],
    pub area_px: u64,
    /// Full-frame run-length code, same convention as mask files.
    pub rle: Vec<u32>,
}

/// `instances.json`: merged instances in the full render frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancesFile {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub iou_threshold: f64,
    pub instances: Vec<InstanceRecord>,
}

impl InstancesFile {
    pub fn new(image_id: &str, width: u32, height: u32, iou_threshold: f64, instances: &[GlobalInstance]) -> Self {
        Self {
            image_id: image_id.to_string(),
            width,
            height,
            iou_threshold,
            instances: instances
                .iter()
                .map(|i| InstanceRecord {
                    id: i.id,
                    confidence: i.confidence,
                    member_tiles: i.member_tiles.clone(),
                    bbox: [i.bbox.x0, i.bbox.y0, i.bbox.w, i.bbox.h],
                    area_px: i.area_px,
                    rle: i.mask.to_rle(),
                })
                .collect(),
        }
    }

    pub fn to_instances(&self, path: &Path) -> Result<Vec<GlobalInstance>> {
        self.instances
            .iter()
            .map(|r| {
                let mask = BitMask::from_rle(self.width, self.height, &r.rle).map_err(|e| Error::Schema {
                    path: path.to_path_buf(),
                    msg: format!("instance {}: {e}", r.id),
                })?;
                Ok(GlobalInstance {
                    id: r.id,
                    bbox: Rect::new(r.bbox[0], r.bbox[1], r.bbox[2], r.bbox[3]),
                    area_px: mask.area(),
                    mask,
                    confidence: r.confidence,
                    member_tiles: r.member_tiles.clone(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceProfileReport {
    pub id: u32,
    pub mode: ProfileMode,
    /// Image column of the first sample.
    pub x0: u32,
    pub columns: usize,
    pub valid_count: usize,
    /// One value per column; invalid columns are `null`.
    pub thickness_mm: Vec<Option<f64>>,
    pub stats: Option<ProfileStats>,
    pub mean_row: f64,
    pub plot: String,
}

/// `profile/report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileReport {
    pub image_id: String,
    pub gsd_m: f64,
    pub mode: ProfileMode,
    pub instances: Vec<InstanceProfileReport>,
    /// Present when a plan file was given.
    pub plan: Option<PlanReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub source: String,
    pub layers: Vec<LayerComparison>,
    pub ordering_ambiguous: bool,
}

/// `timing.json`, written by `run` only. Stage times exclude file I/O.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TimingReport {
    pub tiles: usize,
    pub pre_processing_ms: f64,
    pub segmentation_ms: f64,
    pub post_processing_ms: f64,
    /// Sum of the three stages above.
    pub total_ms: f64,
    pub fps: f64,
    /// Pre- plus post-processing per tile.
    pub pre_post_per_tile_ms: f64,
    pub segmentation_per_tile_ms: Vec<f64>,
    pub render_ms: f64,
    pub backproject_ms: f64,
}

impl TimingReport {
    pub fn finish(&mut self) {
        self.total_ms = self.pre_processing_ms + self.segmentation_ms + self.post_processing_ms;
        self.fps = if self.total_ms > 0.0 { 1000.0 / self.total_ms } else { 0.0 };
        self.pre_post_per_tile_ms = if self.tiles > 0 {
            (self.pre_processing_ms + self.post_processing_ms) / self.tiles as f64
        } else {
            0.0
        };
    }
}

/// Reads a plan: one planned layer height in mm per line, bottom layer first;
/// blank lines and `#` comments are skipped.
pub fn read_plan(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut plan = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            record: n + 1,
            msg: format!("not a number: '{line}'"),
        })?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                record: n + 1,
                msg: "planned height must be positive".into(),
            });
        }
        plan.push(v);
    }
    Ok(plan)
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut e) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * e;
        if e2 >= dy {
            e += dy;
            x += sx;
        }
        if e2 <= dx {
            e += dx;
            y += sy;
        }
    }
}

/// Line plot of thickness against column. The vertical axis runs from 0 to
/// 1.5x the larger of the planned height and the maximum sample; grey ticks
/// mark every 5 mm. The planned height, if any, is drawn in red.
pub fn plot_profile(thickness_mm: &[Option<f64>], planned_mm: Option<f64>) -> RgbImage {
    const W: u32 = 800;
    const H: u32 = 300;
    const M: i64 = 20;
    let mut img = RgbImage::from_pixel(W, H, Rgb([255, 255, 255]));
    let top = thickness_mm.iter().flatten().copied().fold(planned_mm.unwrap_or(0.0), f64::max).max(1.0) * 1.5;
    let (pw, ph) = (W as i64 - 2 * M, H as i64 - 2 * M);
    let ys = |v: f64| H as i64 - M - (v / top * ph as f64).round() as i64;
    let xs = |c: usize| M + (c as f64 / thickness_mm.len().max(2).saturating_sub(1) as f64 * pw as f64).round() as i64;
    let grey = Rgb([210, 210, 210]);
    let mut tick = 5.0;
    while tick < top {
        draw_line(&mut img, (M, ys(tick)), (W as i64 - M, ys(tick)), grey);
        tick += 5.0;
    }
    let axis = Rgb([0, 0, 0]);
    draw_line(&mut img, (M, H as i64 - M), (W as i64 - M, H as i64 - M), axis);
    draw_line(&mut img, (M, M), (M, H as i64 - M), axis);
    if let Some(p) = planned_mm {
        draw_line(&mut img, (M, ys(p)), (W as i64 - M, ys(p)), Rgb([220, 40, 40]));
    }
    let blue = Rgb([30, 80, 200]);
    let mut prev: Option<(i64, i64)> = None;
    for (c, v) in thickness_mm.iter().enumerate() {
        match v {
            Some(v) => {
                let p = (xs(c), ys(*v));
                draw_line(&mut img, prev.unwrap_or(p), p, blue);
                prev = Some(p);
            }
            None => prev = None,
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("plan.txt");
        std::fs::write(&p, "# bottom first\n10\n\n10.5 # second\n").unwrap();
        assert_eq!(read_plan(&p).unwrap(), vec![10.0, 10.5]);
        std::fs::write(&p, "10\nten\n").unwrap();
        let e = read_plan(&p).unwrap_err().to_string();
        assert!(e.contains("record 2"), "{e}");
    }

    #[test]
    fn plot_draws_samples() {
        let img = plot_profile(&[Some(10.0), Some(10.0), None, Some(12.0)], Some(10.0));
        assert_eq!(img.dimensions(), (800, 300));
        assert!(img.pixels().any(|p| p.0 == [30, 80, 200]));
        assert!(img.pixels().any(|p| p.0 == [220, 40, 40]));
    }

    #[test]
    fn timing_identity() {
        let mut t = TimingReport { tiles: 3, pre_processing_ms: 3.0, segmentation_ms: 10.0, post_processing_ms: 12.0, ..Default::default() };
        t.finish();
        assert_eq!(t.total_ms, 25.0);
        assert_eq!(t.fps, 40.0);
        assert_eq!(t.pre_post_per_tile_ms, 5.0);
    }
}
