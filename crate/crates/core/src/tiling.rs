//! Overlapping tiling of large renders and merging of per-tile instances.

use std::collections::BTreeMap;
use std::path::Path;

use image::{imageops, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BitMask, Rect};
use crate::segmentation::{Frame, SegmentationResult};

pub const DEFAULT_TILE_PX: u32 = 512;
pub const DEFAULT_OVERLAP_PX: u32 = 64;

/// Tile origins covering a `width x height` image. Tiles advance by
/// `tile - overlap`; the last tile on each axis is pushed flush against the
/// image edge. Images smaller than a tile get a single clipped tile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileGrid {
    pub width: u32,
    pub height: u32,
    pub tile_px: u32,
    pub overlap_px: u32,
    origins: Vec<(u32, u32)>,
}

fn axis_anchors(len: u32, tile: u32, stride: u32) -> Vec<u32> {
    if len <= tile {
        return vec![0];
    }
    let mut a = vec![];
    let mut x = 0;
    while x + tile < len {
        a.push(x);
        x += stride;
    }
    let flush = len - tile;
    if a.last() != Some(&flush) {
        a.push(flush);
    }
    a
}

impl TileGrid {
    pub fn new(width: u32, height: u32, tile_px: u32, overlap_px: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("cannot tile an empty image"));
        }
        if tile_px == 0 || overlap_px >= tile_px {
            return Err(Error::invalid(format!(
                "overlap {overlap_px} must be smaller than tile size {tile_px}"
            )));
        }
        let stride = tile_px - overlap_px;
        let xs = axis_anchors(width, tile_px, stride);
        let ys = axis_anchors(height, tile_px, stride);
        let origins = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
        Ok(Self {
            width,
            height,
            tile_px,
            overlap_px,
            origins,
        })
    }

    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    /// Tile origins in row-major order.
    pub fn origins(&self) -> &[(u32, u32)] {
        &self.origins
    }

    pub fn rect(&self, index: usize) -> Rect {
        let (x, y) = self.origins[index];
        Rect::new(x, y, self.tile_px.min(self.width), self.tile_px.min(self.height))
    }

    pub fn index_of(&self, origin: (u32, u32)) -> Option<usize> {
        self.origins.iter().position(|&o| o == origin)
    }

    /// Crops every tile out of `image`.
    pub fn tile(&self, image: &RgbImage) -> Result<Vec<RgbImage>> {
        if image.dimensions() != (self.width, self.height) {
            return Err(Error::invalid("image size does not match the tile grid"));
        }
        Ok((0..self.len())
            .map(|i| {
                let r = self.rect(i);
                imageops::crop_imm(image, r.x0, r.y0, r.w, r.h).to_image()
            })
            .collect())
    }
}

/// A per-tile instance mapped into the full image.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacedMask {
    pub tile: usize,
    pub local_id: u32,
    pub confidence: f64,
    pub mask: BitMask,
}

/// Moves tile-frame masks into the global frame of `grid`.
pub fn reattach(grid: &TileGrid, results: &[SegmentationResult]) -> Result<Vec<PlacedMask>> {
    let mut out = Vec::new();
    for r in results {
        let Frame::Tile { origin } = r.frame else {
            return Err(Error::invalid(format!("{}: masks are not in a tile frame", r.image_id)));
        };
        let tile = grid
            .index_of(origin)
            .ok_or_else(|| Error::invalid(format!("{}: origin {origin:?} is not a tile of the grid", r.image_id)))?;
        let rect = grid.rect(tile);
        if (r.width, r.height) != (rect.w, rect.h) {
            return Err(Error::invalid(format!(
                "{}: masks are {}x{} but the tile is {}x{}",
                r.image_id, r.width, r.height, rect.w, rect.h
            )));
        }
        for m in &r.masks {
            let local = m.to_bitmask()?;
            let mask = local.translate(origin.0, origin.1, grid.width, grid.height).map_err(|e| Error::Mask {
                id: m.id,
                msg: e.to_string(),
            })?;
            out.push(PlacedMask {
                tile,
                local_id: m.id,
                confidence: m.confidence,
                mask,
            });
        }
    }
    Ok(out)
}

/// A filament instance in the full render.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalInstance {
    pub id: u32,
    #[serde(skip)]
    pub mask: BitMask,
    pub confidence: f64,
    /// Grid indices of the tiles that contributed, ascending.
    pub member_tiles: Vec<usize>,
    pub bbox: Rect,
    pub area_px: u64,
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn join(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

/// Merges instances from different tiles whose IoU inside the two tiles'
/// shared region is at least `iou_threshold`. Merging is transitive. Output
/// order and ids depend only on the set of inputs, not their order.
pub fn merge_instances(grid: &TileGrid, masks: &[PlacedMask], iou_threshold: f64) -> Result<Vec<GlobalInstance>> {
    if !(0.0..=1.0).contains(&iou_threshold) {
        return Err(Error::invalid(format!("IoU threshold {iou_threshold} outside [0, 1]")));
    }
    let mut sets = DisjointSet((0..masks.len()).collect());
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            let (a, b) = (&masks[i], &masks[j]);
            if a.tile == b.tile {
                continue;
            }
            let shared = grid.rect(a.tile).intersect(&grid.rect(b.tile));
            if shared.is_empty() || a.mask.bbox().intersect(&b.mask.bbox()).intersect(&shared).is_empty() {
                continue;
            }
            let (inter, union) = a.mask.overlap_in(&b.mask, &shared);
            if inter > 0 && inter as f64 >= iou_threshold * union as f64 {
                sets.join(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..masks.len() {
        let root = sets.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut merged: Vec<(Vec<(usize, u32)>, GlobalInstance)> = groups
        .into_values()
        .map(|members| {
            let mut mask = masks[members[0]].mask.clone();
            for &m in &members[1..] {
                mask = mask.union(&masks[m].mask);
            }
            let confidence = members.iter().map(|&m| masks[m].confidence).fold(f64::NEG_INFINITY, f64::max);
            let mut member_tiles: Vec<usize> = members.iter().map(|&m| masks[m].tile).collect();
            member_tiles.sort_unstable();
            member_tiles.dedup();
            let mut key: Vec<(usize, u32)> = members.iter().map(|&m| (masks[m].tile, masks[m].local_id)).collect();
            key.sort_unstable();
            let inst = GlobalInstance {
                id: 0,
                bbox: mask.bbox(),
                area_px: mask.area(),
                mask,
                confidence,
                member_tiles,
            };
            (key, inst)
        })
        .collect();
    merged.sort_by(|(ka, a), (kb, b)| (a.bbox.y0, a.bbox.x0, ka).cmp(&(b.bbox.y0, b.bbox.x0, kb)));
    Ok(merged
        .into_iter()
        .enumerate()
        .map(|(i, (_, mut inst))| {
            inst.id = i as u32 + 1;
            inst
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub index: usize,
    pub origin: [u32; 2],
    pub width: u32,
    pub height: u32,
    /// Tile image path relative to the manifest.
    pub file: String,
}

/// Describes a tiled render so that external backends can segment the tiles
/// and hand back mask files in the tile frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileManifest {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub gsd_m: f64,
    pub tile_px: u32,
    pub overlap_px: u32,
    pub tiles: Vec<TileEntry>,
}

impl TileManifest {
    pub fn new(image_id: &str, grid: &TileGrid, gsd_m: f64) -> Self {
        let tiles = (0..grid.len())
            .map(|i| {
                let r = grid.rect(i);
                TileEntry {
                    index: i,
                    origin: [r.x0, r.y0],
                    width: r.w,
                    height: r.h,
                    file: format!("tile_{i:04}.png"),
                }
            })
            .collect();
        Self {
            image_id: image_id.to_string(),
            width: grid.width,
            height: grid.height,
            gsd_m,
            tile_px: grid.tile_px,
            overlap_px: grid.overlap_px,
            tiles,
        }
    }

    pub fn grid(&self) -> Result<TileGrid> {
        let grid = TileGrid::new(self.width, self.height, self.tile_px, self.overlap_px)?;
        let consistent = grid.len() == self.tiles.len()
            && self.tiles.iter().enumerate().all(|(i, t)| {
                let r = grid.rect(i);
                t.index == i && t.origin == [r.x0, r.y0] && (t.width, t.height) == (r.w, r.h)
            });
        if !consistent {
            return Err(Error::invalid("manifest tiles do not match its grid parameters"));
        }
        Ok(grid)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}
