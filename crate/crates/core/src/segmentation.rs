//! Filament instance masks: the interchange file shared with external model
//! backends, mask filtering, and a classical row-profile baseline.
//!
//! # Interchange file
//!
//! One JSON document per image or tile:
//!
//! ```json
//! {
//!   "image_id": "tile_0001",
//!   "width": 512,
//!   "height": 512,
//!   "frame": "tile",
//!   "origin": [448, 0],
//!   "backend": "external",
//!   "masks": [ { "id": 1, "confidence": 0.91, "rle": [4, 1, 4] } ]
//! }
//! ```
//!
//! `frame` is `"tile"` (then `origin`, the tile's top-left pixel in the full
//! render, is required) or `"global"`. `rle` is row-major over
//! `width x height`, alternating background/foreground and starting with a
//! background run that may be 0. `backend` is optional and defaults to
//! `"external"`.

use std::collections::{HashSet, VecDeque};
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BitMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// Tile-local pixels; the tile's top-left corner sits at `origin` in the full image.
    Tile { origin: (u32, u32) },
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Baseline,
    #[default]
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMask {
    pub id: u32,
    pub rle: Vec<u32>,
    pub width: u32,
    pub height: u32,
    pub confidence: f64,
    pub frame: Frame,
}

impl InstanceMask {
    pub fn from_bitmask(id: u32, mask: &BitMask, confidence: f64, frame: Frame) -> Self {
        let (width, height) = mask.frame();
        Self {
            id,
            rle: mask.to_rle(),
            width,
            height,
            confidence,
            frame,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Error::Mask { id: self.id, msg };
        let total: u64 = self.rle.iter().map(|&r| r as u64).sum();
        if total != self.width as u64 * self.height as u64 {
            return Err(err(format!(
                "runs sum to {total}, expected {}x{}",
                self.width, self.height
            )));
        }
        if self.area() == 0 {
            return Err(err("mask has no foreground".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(err(format!("confidence {} outside [0, 1]", self.confidence)));
        }
        Ok(())
    }

    pub fn area(&self) -> u64 {
        self.rle.iter().skip(1).step_by(2).map(|&r| r as u64).sum()
    }

    pub fn to_bitmask(&self) -> Result<BitMask> {
        BitMask::from_rle(self.width, self.height, &self.rle).map_err(|e| Error::Mask {
            id: self.id,
            msg: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub frame: Frame,
    pub masks: Vec<InstanceMask>,
    pub backend: Backend,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskFile {
    image_id: String,
    width: u32,
    height: u32,
    frame: FrameTag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<[u32; 2]>,
    #[serde(default)]
    backend: Backend,
    masks: Vec<MaskRecord>,
}

#[derive(Serialize, Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum FrameTag {
    Tile,
    Global,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskRecord {
    id: u32,
    confidence: f64,
    rle: Vec<u32>,
}

impl SegmentationResult {
    pub fn empty(image_id: impl Into<String>, width: u32, height: u32, frame: Frame, backend: Backend) -> Self {
        Self {
            image_id: image_id.into(),
            width,
            height,
            frame,
            masks: Vec::new(),
            backend,
        }
    }

    pub fn to_json(&self) -> String {
        let (frame, origin) = match self.frame {
            Frame::Tile { origin } => (FrameTag::Tile, Some([origin.0, origin.1])),
            Frame::Global => (FrameTag::Global, None),
        };
        let file = MaskFile {
            image_id: self.image_id.clone(),
            width: self.width,
            height: self.height,
            frame,
            origin,
            backend: self.backend,
            masks: self
                .masks
                .iter()
                .map(|m| MaskRecord {
                    id: m.id,
                    confidence: m.confidence,
                    rle: m.rle.clone(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&file).expect("mask file serializes");
        s.push('\n');
        s
    }

    /// Parses and validates an interchange document. `path` is only used in errors.
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let schema = |msg: String| Error::Schema {
            path: path.to_path_buf(),
            msg,
        };
        let file: MaskFile = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        let frame = match (file.frame, file.origin) {
            (FrameTag::Tile, Some([x, y])) => Frame::Tile { origin: (x, y) },
            (FrameTag::Tile, None) => return Err(schema("tile frame requires an origin".into())),
            (FrameTag::Global, None) => Frame::Global,
            (FrameTag::Global, Some(_)) => return Err(schema("global frame must not carry an origin".into())),
        };
        let mut seen = HashSet::new();
        let mut masks = Vec::with_capacity(file.masks.len());
        for rec in file.masks {
            if !seen.insert(rec.id) {
                return Err(schema(format!("mask {}: duplicate id", rec.id)));
            }
            let m = InstanceMask {
                id: rec.id,
                rle: rec.rle,
                width: file.width,
                height: file.height,
                confidence: rec.confidence,
                frame,
            };
            m.validate().map_err(|e| schema(e.to_string()))?;
            masks.push(m);
        }
        Ok(Self {
            image_id: file.image_id,
            width: file.width,
            height: file.height,
            frame,
            masks,
            backend: file.backend,
        })
    }
}

pub fn export_masks(result: &SegmentationResult, path: &Path) -> Result<()> {
    std::fs::write(path, result.to_json()).map_err(|e| Error::io(path, e))
}

pub fn import_masks(path: &Path) -> Result<SegmentationResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SegmentationResult::from_json(&text, path)
}

/// Drops masks smaller than `min_area_px` or less confident than `min_conf`.
pub fn filter_masks(result: &SegmentationResult, min_area_px: u64, min_conf: f64) -> SegmentationResult {
    SegmentationResult {
        masks: result
            .masks
            .iter()
            .filter(|m| m.area() >= min_area_px && m.confidence >= min_conf)
            .cloned()
            .collect(),
        ..result.clone()
    }
}

/// Grayscale tile with a per-pixel validity flag (pixels no point reached are invalid).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayTile {
    pub width: u32,
    pub height: u32,
    /// Luma in `[0, 1]`, row-major.
    pub values: Vec<f32>,
    pub valid: Vec<bool>,
}

impl GrayTile {
    /// Without an explicit validity mask, pure black pixels count as empty.
    pub fn from_rgb(img: &RgbImage, valid: Option<Vec<bool>>) -> Result<Self> {
        let (width, height) = img.dimensions();
        let values: Vec<f32> = img
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0.map(f32::from);
                (0.299 * r + 0.587 * g + 0.114 * b) / 255.0
            })
            .collect();
        let valid = match valid {
            Some(v) if v.len() != values.len() => {
                return Err(Error::invalid("validity mask does not match image size"))
            }
            Some(v) => v,
            None => img.pixels().map(|p| p.0 != [0, 0, 0]).collect(),
        };
        Ok(Self {
            width,
            height,
            values,
            valid,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineParams {
    /// Groove rows have a row mean below `mean - k * std` of all row means.
    pub k: f64,
    pub min_area_px: u64,
    /// Bands whose `(max - min) / max` row-mean contrast is below this are dropped.
    pub min_contrast: f64,
}

impl Default for BaselineParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            min_area_px: 100,
            min_contrast: 0.1,
        }
    }
}

pub const MIN_TILE_PX: u32 = 32;

fn order_free_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Row interval `[start, end]` (inclusive) of one band.
type Band = (usize, usize);

/// Splits a run of valid rows into bands at interior groove valleys.
fn split_segment(means: &[f64], start: usize, end: usize, threshold: f64) -> Vec<Band> {
    let mut bands = Vec::new();
    let mut band_start = start;
    let mut y = start;
    while y <= end {
        if means[y] >= threshold {
            y += 1;
            continue;
        }
        let a = y;
        while y <= end && means[y] < threshold {
            y += 1;
        }
        let b = y - 1;
        if a == start || b == end {
            continue; // edge valleys belong to the outer band
        }
        let m = means[a..=b].iter().copied().fold(f64::INFINITY, f64::min);
        let t0 = (a..=b).find(|&r| means[r] == m).unwrap();
        let t1 = (a..=b).rev().find(|&r| means[r] == m).unwrap();
        let len = t1 - t0 + 1;
        // (last row of upper band, first row of lower band)
        let (upper_end, lower_start) = if len % 2 == 0 {
            (t0 + len / 2 - 1, t0 + len / 2)
        } else {
            let mid = t0 + len / 2;
            let (above, below) = (means[t0 - 1], means[t1 + 1]);
            if above < below {
                (mid - 1, mid)
            } else if below < above {
                (mid, mid + 1)
            } else {
                (mid - 1, mid + 1)
            }
        };
        if upper_end >= band_start {
            bands.push((band_start, upper_end));
        }
        band_start = lower_start;
    }
    if band_start <= end {
        bands.push((band_start, end));
    }
    bands
}

/// 4-connected components of valid pixels within rows `[y0, y1]`.
fn components(tile: &GrayTile, y0: usize, y1: usize) -> Vec<Vec<(u32, u32)>> {
    let w = tile.width as usize;
    let mut seen = vec![false; (y1 - y0 + 1) * w];
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in 0..w {
            let k = (y - y0) * w + x;
            if seen[k] || !tile.valid[y * w + x] {
                continue;
            }
            seen[k] = true;
            let mut comp = Vec::new();
            let mut queue = VecDeque::from([(x, y)]);
            while let Some((cx, cy)) = queue.pop_front() {
                comp.push((cx as u32, cy as u32));
                let mut visit = |nx: usize, ny: usize| {
                    let k = (ny - y0) * w + nx;
                    if !seen[k] && tile.valid[ny * w + nx] {
                        seen[k] = true;
                        queue.push_back((nx, ny));
                    }
                };
                if cx > 0 {
                    visit(cx - 1, cy);
                }
                if cx + 1 < w {
                    visit(cx + 1, cy);
                }
                if cy > y0 {
                    visit(cx, cy - 1);
                }
                if cy < y1 {
                    visit(cx, cy + 1);
                }
            }
            out.push(comp);
        }
    }
    out
}

/// Classical filament segmentation for horizontally layered imagery.
///
/// Row means of valid pixels form a vertical profile; dark valleys in it are
/// the grooves between filaments. Each band between grooves is split into
/// connected components of valid pixels, and each large enough component is
/// one instance. Confidence is the band's row-mean contrast.
pub fn segment_baseline(
    image_id: &str,
    tile: &GrayTile,
    params: &BaselineParams,
    frame: Frame,
) -> Result<SegmentationResult> {
    if tile.width < MIN_TILE_PX || tile.height < MIN_TILE_PX {
        return Err(Error::invalid(format!(
            "baseline needs at least {MIN_TILE_PX}x{MIN_TILE_PX} px, got {}x{}",
            tile.width, tile.height
        )));
    }
    let (w, h) = (tile.width as usize, tile.height as usize);
    if tile.values.len() != w * h || tile.valid.len() != w * h {
        return Err(Error::invalid("tile buffers do not match its dimensions"));
    }
    let mut result = SegmentationResult::empty(image_id, tile.width, tile.height, frame, Backend::Baseline);
    let means: Vec<Option<f64>> = (0..h)
        .map(|y| {
            let (mut s, mut n) = (0.0f64, 0usize);
            for x in 0..w {
                if tile.valid[y * w + x] {
                    s += tile.values[y * w + x] as f64;
                    n += 1;
                }
            }
            (n > 0).then(|| s / n as f64)
        })
        .collect();
    let present: Vec<f64> = means.iter().flatten().copied().collect();
    if present.is_empty() {
        return Ok(result);
    }
    let n = present.len() as f64;
    let mean = order_free_sum(present.clone()) / n;
    let std = (order_free_sum(present.iter().map(|v| (v - mean).powi(2)).collect()) / n).sqrt();
    let threshold = mean - params.k * std;
    let dense: Vec<f64> = means.iter().map(|m| m.unwrap_or(f64::NAN)).collect();

    let mut bands = Vec::new();
    let mut y = 0;
    while y < h {
        if means[y].is_none() {
            y += 1;
            continue;
        }
        let start = y;
        while y < h && means[y].is_some() {
            y += 1;
        }
        bands.extend(split_segment(&dense, start, y - 1, threshold));
    }

    let mut next_id = 1;
    for (y0, y1) in bands {
        let rows = &dense[y0..=y1];
        let hi = rows.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = rows.iter().copied().fold(f64::INFINITY, f64::min);
        let contrast = if hi > 0.0 { ((hi - lo) / hi).clamp(0.0, 1.0) } else { 0.0 };
        if contrast < params.min_contrast {
            continue;
        }
        for comp in components(tile, y0, y1) {
            if (comp.len() as u64) < params.min_area_px {
                continue;
            }
            let bm = BitMask::from_pixels(tile.width, tile.height, comp);
            result.masks.push(InstanceMask::from_bitmask(next_id, &bm, contrast, frame));
            next_id += 1;
        }
    }
    Ok(result)
}
