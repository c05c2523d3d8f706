//! Z-buffered square splatting of a point cloud through a virtual camera.
//!
//! Every pixel keeps the point with the smallest `(depth, index)` whose
//! `(2r+1)^2` footprint covers it, so the result does not depend on the order
//! in which points or image bands are processed. The per-pixel index map is
//! what later carries 2D labels back to 3D points.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;

use crate::camera::{gsd, project, Intrinsics, Pose};
use crate::error::{Error, Result};
use crate::geometry::{AttrValue, PointCloud};
use crate::mask::Rect;

/// Index-map value of a pixel no point reached.
pub const EMPTY: u32 = u32::MAX;

pub const MAX_SPLAT_RADIUS: u32 = 8;

pub const INDEX_MAGIC: &[u8; 6] = b"VCIDX1";
pub const DEPTH_MAGIC: &[u8; 6] = b"VCDPT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoleFill {
    None,
    /// 3x3 closing; filled pixels copy their nearest-depth neighbor.
    Close3,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplatConfig {
    pub radius_px: u32,
    /// Signed distances map linearly from `-range` (blue) through 0 (white) to `+range` (red).
    pub colormap_range_m: f64,
    pub hole_fill: HoleFill,
}

impl Default for SplatConfig {
    fn default() -> Self {
        Self {
            radius_px: 1,
            colormap_range_m: 0.005,
            hole_fill: HoleFill::None,
        }
    }
}

impl SplatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radius_px > MAX_SPLAT_RADIUS {
            return Err(Error::invalid(format!(
                "splat radius {} exceeds {MAX_SPLAT_RADIUS}",
                self.radius_px
            )));
        }
        if !(self.colormap_range_m > 0.0 && self.colormap_range_m.is_finite()) {
            return Err(Error::invalid("colormap range must be > 0"));
        }
        Ok(())
    }
}

/// Display color of one attribute value.
pub fn colorize(value: AttrValue, cfg: &SplatConfig) -> [u8; 3] {
    let byte = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    match value {
        AttrValue::Rgb(c) => c,
        AttrValue::Intensity(v) => {
            let g = byte(v);
            [g, g, g]
        }
        AttrValue::SignedDistance(d) => {
            let s = (d / cfg.colormap_range_m).clamp(-1.0, 1.0);
            if s >= 0.0 {
                let o = byte(1.0 - s);
                [255, o, o]
            } else {
                let o = byte(1.0 + s);
                [o, o, 255]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderBuffer {
    pub width: u32,
    pub height: u32,
    /// Row-major RGB; black where empty.
    pub color: Vec<[u8; 3]>,
    /// Metres along the optical axis; `+inf` where empty.
    pub depth: Vec<f64>,
    /// Source point index per pixel, or [`EMPTY`].
    pub index_map: Vec<u32>,
    /// Metres per pixel at the median rendered depth (0 for an empty render).
    pub gsd_m: f64,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

impl RenderBuffer {
    pub fn index_at(&self, x: u32, y: u32) -> Option<u32> {
        let i = self.index_map[(y * self.width + x) as usize];
        (i != EMPTY).then_some(i)
    }

    pub fn filled_pixels(&self) -> usize {
        self.index_map.iter().filter(|&&i| i != EMPTY).count()
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| {
            image::Rgb(self.color[(y * self.width + x) as usize])
        })
    }

    /// Row-major validity of the pixels inside `r`.
    pub fn valid_in(&self, r: &Rect) -> Vec<bool> {
        let mut out = Vec::with_capacity(r.area() as usize);
        for y in r.y0..r.y1() {
            for x in r.x0..r.x1() {
                out.push(self.index_map[(y * self.width + x) as usize] != EMPTY);
            }
        }
        out
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_image().save_with_format(path, image::ImageFormat::Png).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn save_index_raster(&self, path: &Path) -> Result<()> {
        write_raster(path, INDEX_MAGIC, self.width, self.height, |w| {
            for &i in &self.index_map {
                w.write_all(&i.to_le_bytes())?;
            }
            Ok(())
        })
    }

    pub fn save_depth_raster(&self, path: &Path) -> Result<()> {
        write_raster(path, DEPTH_MAGIC, self.width, self.height, |w| {
            for &d in &self.depth {
                w.write_all(&(d as f32).to_le_bytes())?;
            }
            Ok(())
        })
    }
}

fn write_raster(
    path: &Path,
    magic: &[u8; 6],
    w: u32,
    h: u32,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        out.write_all(magic)?;
        out.write_all(&w.to_le_bytes())?;
        out.write_all(&h.to_le_bytes())?;
        body(&mut out)?;
        out.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

fn read_raster(path: &Path, magic: &[u8; 6]) -> Result<(u32, u32, Vec<[u8; 4]>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| Error::Schema {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    let mut head = [0u8; 14];
    r.read_exact(&mut head).map_err(|_| bad("truncated raster header"))?;
    if &head[..6] != magic {
        return Err(bad("wrong raster magic"));
    }
    let w = u32::from_le_bytes(head[6..10].try_into().unwrap());
    let h = u32::from_le_bytes(head[10..14].try_into().unwrap());
    let mut body = Vec::new();
    r.read_to_end(&mut body).map_err(|e| Error::io(path, e))?;
    if body.len() as u64 != w as u64 * h as u64 * 4 {
        return Err(bad("raster size does not match header"));
    }
    Ok((w, h, body.chunks_exact(4).map(|c| c.try_into().unwrap()).collect()))
}

pub fn read_index_raster(path: &Path) -> Result<(u32, u32, Vec<u32>)> {
    let (w, h, v) = read_raster(path, INDEX_MAGIC)?;
    Ok((w, h, v.into_iter().map(u32::from_le_bytes).collect()))
}

pub fn read_depth_raster(path: &Path) -> Result<(u32, u32, Vec<f32>)> {
    let (w, h, v) = read_raster(path, DEPTH_MAGIC)?;
    Ok((w, h, v.into_iter().map(f32::from_le_bytes).collect()))
}

struct Splat {
    x: i64,
    y: i64,
    depth: f64,
    index: u32,
}

fn prepare(
    cloud: &PointCloud,
    indices: &[usize],
    pose: &Pose,
    intr: &Intrinsics,
    cfg: &SplatConfig,
) -> Result<Vec<Splat>> {
    intr.validate()?;
    cfg.validate()?;
    if cloud.len() >= EMPTY as usize {
        return Err(Error::invalid("cloud too large for a 32-bit index map"));
    }
    let r = cfg.radius_px as i64;
    let (w, h) = (intr.width_px as i64, intr.height_px as i64);
    let mut splats = Vec::with_capacity(indices.len());
    for &i in indices {
        let p = cloud
            .points()
            .get(i)
            .ok_or_else(|| Error::invalid(format!("index {i} outside cloud of {}", cloud.len())))?;
        let Some(q) = project(pose, intr, p) else { continue };
        if !(q.u.is_finite() && q.v.is_finite()) {
            continue;
        }
        let (x, y) = q.pixel();
        if x + r < 0 || y + r < 0 || x - r >= w || y - r >= h {
            continue;
        }
        splats.push(Splat {
            x,
            y,
            depth: q.depth,
            index: i as u32,
        });
    }
    Ok(splats)
}

#[inline]
fn wins(depth: f64, index: u32, cur_depth: f64, cur_index: u32) -> bool {
    depth < cur_depth || (depth == cur_depth && index < cur_index)
}

/// Writes all splats into rows `[y0, y0 + depth.len() / width)`.
fn rasterize_band(splats: &[&Splat], r: i64, width: u32, y0: i64, depth: &mut [f64], index: &mut [u32]) {
    let w = width as i64;
    let rows = (depth.len() / width as usize) as i64;
    for s in splats {
        let ys = (s.y - r).max(y0)..=(s.y + r).min(y0 + rows - 1);
        let xs = (s.x - r).max(0)..=(s.x + r).min(w - 1);
        for y in ys {
            let row = ((y - y0) * w) as usize;
            for x in xs.clone() {
                let k = row + x as usize;
                if wins(s.depth, s.index, depth[k], index[k]) {
                    depth[k] = s.depth;
                    index[k] = s.index;
                }
            }
        }
    }
}

fn finish(
    cloud: &PointCloud,
    pose: &Pose,
    intr: &Intrinsics,
    cfg: &SplatConfig,
    mut depth: Vec<f64>,
    mut index_map: Vec<u32>,
) -> RenderBuffer {
    let (w, h) = (intr.width_px, intr.height_px);
    if cfg.hole_fill == HoleFill::Close3 {
        close3(w, h, &mut depth, &mut index_map);
    }
    let color = index_map
        .iter()
        .map(|&i| if i == EMPTY { [0, 0, 0] } else { colorize(cloud.colors().value(i as usize), cfg) })
        .collect();
    let mut finite: Vec<f64> = depth.iter().copied().filter(|d| d.is_finite()).collect();
    let gsd_m = if finite.is_empty() {
        0.0
    } else {
        let mid = finite.len() / 2;
        let (_, m, _) = finite.select_nth_unstable_by(mid, f64::total_cmp);
        gsd(*m, intr.pixel_size_mm, intr.focal_mm).unwrap_or(0.0)
    };
    RenderBuffer {
        width: w,
        height: h,
        color,
        depth,
        index_map,
        gsd_m,
        pose: *pose,
        intrinsics: *intr,
    }
}

/// Single-threaded render; the reference schedule.
pub fn render_sequential(
    cloud: &PointCloud,
    indices: &[usize],
    pose: &Pose,
    intr: &Intrinsics,
    cfg: &SplatConfig,
) -> Result<RenderBuffer> {
    let splats = prepare(cloud, indices, pose, intr, cfg)?;
    let n = intr.width_px as usize * intr.height_px as usize;
    let mut depth = vec![f64::INFINITY; n];
    let mut index_map = vec![EMPTY; n];
    let refs: Vec<&Splat> = splats.iter().collect();
    rasterize_band(&refs, cfg.radius_px as i64, intr.width_px, 0, &mut depth, &mut index_map);
    Ok(finish(cloud, pose, intr, cfg, depth, index_map))
}

const BAND_ROWS: usize = 32;

/// Render parallelized over horizontal image bands; identical to
/// [`render_sequential`].
pub fn render(
    cloud: &PointCloud,
    indices: &[usize],
    pose: &Pose,
    intr: &Intrinsics,
    cfg: &SplatConfig,
) -> Result<RenderBuffer> {
    let splats = prepare(cloud, indices, pose, intr, cfg)?;
    let (w, h) = (intr.width_px as usize, intr.height_px as usize);
    let r = cfg.radius_px as i64;
    let nbands = h.div_ceil(BAND_ROWS);
    let mut buckets: Vec<Vec<&Splat>> = vec![Vec::new(); nbands];
    for s in &splats {
        let lo = (s.y - r).max(0) as usize / BAND_ROWS;
        let hi = ((s.y + r).min(h as i64 - 1)) as usize / BAND_ROWS;
        for b in buckets.iter_mut().take(hi + 1).skip(lo) {
            b.push(s);
        }
    }
    let mut depth = vec![f64::INFINITY; w * h];
    let mut index_map = vec![EMPTY; w * h];
    depth
        .par_chunks_mut(BAND_ROWS * w)
        .zip(index_map.par_chunks_mut(BAND_ROWS * w))
        .zip(buckets.par_iter())
        .enumerate()
        .for_each(|(b, ((d, i), bucket))| {
            rasterize_band(bucket, r, intr.width_px, (b * BAND_ROWS) as i64, d, i);
        });
    Ok(finish(cloud, pose, intr, cfg, depth, index_map))
}

fn close3(w: u32, h: u32, depth: &mut [f64], index: &mut [u32]) {
    let (w, h) = (w as i64, h as i64);
    let at = |x: i64, y: i64| (y * w + x) as usize;
    let neighbors = |x: i64, y: i64| {
        (-1..=1)
            .flat_map(move |dy| (-1..=1).map(move |dx| (x + dx, y + dy)))
            .filter(move |&(a, b)| a >= 0 && b >= 0 && a < w && b < h)
    };
    let filled: Vec<bool> = index.iter().map(|&i| i != EMPTY).collect();
    let mut dilated = vec![false; filled.len()];
    for y in 0..h {
        for x in 0..w {
            dilated[at(x, y)] = neighbors(x, y).any(|(a, b)| filled[at(a, b)]);
        }
    }
    for y in 0..h {
        for x in 0..w {
            let k = at(x, y);
            if filled[k] || !neighbors(x, y).all(|(a, b)| dilated[at(a, b)]) {
                continue;
            }
            let donor = neighbors(x, y)
                .map(|(a, b)| at(a, b))
                .filter(|&j| filled[j])
                .min_by(|&p, &q| depth[p].total_cmp(&depth[q]).then(index[p].cmp(&index[q])));
            if let Some(j) = donor {
                depth[k] = depth[j];
                index[k] = index[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{place_ksp, KspMode};
    use crate::geometry::{ColorAttr, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Pose, Intrinsics) {
        let pose = place_ksp(Vec3::new(5.0, 0.0, 0.0), Vec3::zeros(), KspMode::Direct, 1.0).unwrap();
        (pose, Intrinsics::centered(4.0, 0.004, 64, 48).unwrap())
    }

    fn cfg(r: u32) -> SplatConfig {
        SplatConfig {
            radius_px: r,
            ..Default::default()
        }
    }

    #[test]
    fn colorize_examples() {
        let c = SplatConfig::default();
        assert_eq!(colorize(AttrValue::Intensity(1.0), &c), [255, 255, 255]);
        assert_eq!(colorize(AttrValue::Intensity(0.0), &c), [0, 0, 0]);
        assert_eq!(colorize(AttrValue::SignedDistance(0.0), &c), [255, 255, 255]);
        assert_eq!(colorize(AttrValue::SignedDistance(0.005), &c), [255, 0, 0]);
        assert_eq!(colorize(AttrValue::SignedDistance(-0.5), &c), [0, 0, 255]);
        assert_eq!(colorize(AttrValue::Rgb([1, 2, 3]), &c), [1, 2, 3]);
        // half range on the linear ramp: 255 * 0.5 = 127.5
        let half = colorize(AttrValue::SignedDistance(0.0025), &c);
        assert_eq!(half[0], 255);
        assert!((half[1] as f64 - 127.5).abs() <= 1.0 && (half[2] as f64 - 127.5).abs() <= 1.0);
    }

    #[test]
    fn single_point_on_axis() {
        let (pose, intr) = setup();
        let cloud = PointCloud::new(vec![Vec3::zeros()], ColorAttr::Rgb8(vec![[10, 20, 30]])).unwrap();
        let buf = render(&cloud, &[0], &pose, &intr, &cfg(0)).unwrap();
        assert_eq!(buf.filled_pixels(), 1);
        assert_eq!(buf.index_at(32, 24), Some(0));
        assert_eq!(buf.color[(24 * 64 + 32) as usize], [10, 20, 30]);
        assert!((buf.depth[(24 * 64 + 32) as usize] - 1.0).abs() < 1e-12);
        assert!((buf.gsd_m - 0.001).abs() < 1e-12);
    }

    #[test]
    fn nearer_point_wins() {
        let (pose, intr) = setup();
        let cloud = PointCloud::new(
            vec![Vec3::new(-1.0, 0.0, 0.0), Vec3::zeros()],
            ColorAttr::Intensity(vec![0.0, 1.0]),
        )
        .unwrap();
        let buf = render(&cloud, &[0, 1], &pose, &intr, &cfg(0)).unwrap();
        assert_eq!(buf.index_at(32, 24), Some(1));
        assert_eq!(buf.filled_pixels(), 1);
    }

    #[test]
    fn equal_depth_prefers_lower_index() {
        let (pose, intr) = setup();
        let cloud = PointCloud::new(vec![Vec3::zeros(); 3], ColorAttr::Intensity(vec![0.1, 0.2, 0.3])).unwrap();
        let buf = render(&cloud, &[2, 1, 0], &pose, &intr, &cfg(1)).unwrap();
        assert_eq!(buf.filled_pixels(), 9);
        assert!(buf.index_map.iter().all(|&i| i == 0 || i == EMPTY));
    }

    #[test]
    fn empty_selection_gives_empty_buffer() {
        let (pose, intr) = setup();
        let cloud = PointCloud::new(vec![Vec3::zeros()], ColorAttr::Intensity(vec![0.5])).unwrap();
        let buf = render(&cloud, &[], &pose, &intr, &cfg(1)).unwrap();
        assert_eq!(buf.filled_pixels(), 0);
        assert!(buf.depth.iter().all(|d| d.is_infinite()));
        assert_eq!(buf.gsd_m, 0.0);
        assert!(render(&cloud, &[3], &pose, &intr, &cfg(1)).is_err());
        assert!(render(&cloud, &[0], &pose, &intr, &cfg(9)).is_err());
    }

    fn random_scene(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random_range(-0.2..0.2), rng.random_range(-0.04..0.04), rng.random_range(-0.03..0.03)))
            .collect();
        let mut pts = pts;
        // duplicate a few points to exercise the index tie-break
        for k in 0..20 {
            pts[n - 1 - k] = pts[k];
        }
        let vals = (0..n).map(|i| (i % 256) as f64 / 255.0).collect();
        PointCloud::new(pts, ColorAttr::Intensity(vals)).unwrap()
    }

    #[test]
    fn parallel_equals_sequential() {
        let (pose, _) = setup();
        let intr = Intrinsics::centered(4.0, 0.004, 96, 100).unwrap();
        let cloud = random_scene(21, 4000);
        let idx: Vec<usize> = (0..cloud.len()).collect();
        for r in [0, 1, 3] {
            for fill in [HoleFill::None, HoleFill::Close3] {
                let c = SplatConfig { radius_px: r, hole_fill: fill, ..Default::default() };
                let a = render_sequential(&cloud, &idx, &pose, &intr, &c).unwrap();
                let b = render(&cloud, &idx, &pose, &intr, &c).unwrap();
                assert_eq!(a, b);
                let mut rev = idx.clone();
                rev.reverse();
                assert_eq!(render(&cloud, &rev, &pose, &intr, &c).unwrap(), a);
            }
        }
    }

    #[test]
    fn soundness_and_occlusion() {
        let (pose, _) = setup();
        let intr = Intrinsics::centered(4.0, 0.004, 96, 100).unwrap();
        let cloud = random_scene(22, 3000);
        let idx: Vec<usize> = (0..cloud.len()).collect();
        let r = 2i64;
        let buf = render(&cloud, &idx, &pose, &intr, &cfg(r as u32)).unwrap();
        for y in 0..buf.height as i64 {
            for x in 0..buf.width as i64 {
                let k = (y * buf.width as i64 + x) as usize;
                match buf.index_at(x as u32, y as u32) {
                    Some(i) => {
                        let q = project(&pose, &intr, &cloud.points()[i as usize]).unwrap();
                        let (px, py) = q.pixel();
                        assert!((px - x).abs() <= r && (py - y).abs() <= r);
                        assert!((q.depth - buf.depth[k]).abs() <= 1e-9);
                    }
                    None => assert!(buf.depth[k].is_infinite()),
                }
            }
        }
        // nothing covering a pixel is nearer than the stored depth
        for &i in &idx {
            let Some(q) = project(&pose, &intr, &cloud.points()[i]) else { continue };
            let (px, py) = q.pixel();
            for y in (py - r).max(0)..=(py + r).min(buf.height as i64 - 1) {
                for x in (px - r).max(0)..=(px + r).min(buf.width as i64 - 1) {
                    assert!(q.depth >= buf.depth[(y * buf.width as i64 + x) as usize]);
                }
            }
        }
    }

    #[test]
    fn close3_fills_pinholes_only() {
        let (pose, intr) = setup();
        // 5x5 pixel patch of points with the center missing
        let mut pts = Vec::new();
        for dy in -2i32..=2 {
            for dx in -2i32..=2 {
                if dx != 0 || dy != 0 {
                    pts.push(Vec3::new(0.0, -(dx as f64 + 0.5) * 0.001, -(dy as f64 + 0.5) * 0.001));
                }
            }
        }
        let n = pts.len();
        let cloud = PointCloud::new(pts, ColorAttr::Intensity(vec![1.0; n])).unwrap();
        let idx: Vec<usize> = (0..n).collect();
        let plain = render(&cloud, &idx, &pose, &intr, &cfg(0)).unwrap();
        assert_eq!(plain.filled_pixels(), 24);
        let c = SplatConfig { radius_px: 0, hole_fill: HoleFill::Close3, ..Default::default() };
        let closed = render(&cloud, &idx, &pose, &intr, &c).unwrap();
        assert_eq!(closed.filled_pixels(), 25);
    }

    #[test]
    fn rasters_round_trip() {
        let (pose, intr) = setup();
        let cloud = random_scene(23, 500);
        let idx: Vec<usize> = (0..cloud.len()).collect();
        let buf = render(&cloud, &idx, &pose, &intr, &cfg(1)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("i.vcidx");
        let dp = dir.path().join("d.vcdpt");
        buf.save_index_raster(&ip).unwrap();
        buf.save_depth_raster(&dp).unwrap();
        let bytes = std::fs::read(&ip).unwrap();
        assert_eq!(&bytes[..6], b"VCIDX1");
        assert_eq!(bytes.len(), 14 + 4 * 64 * 48);
        let (w, h, idxmap) = read_index_raster(&ip).unwrap();
        assert_eq!((w, h), (64, 48));
        assert_eq!(idxmap, buf.index_map);
        let (_, _, d) = read_depth_raster(&dp).unwrap();
        for (a, b) in d.iter().zip(&buf.depth) {
            assert_eq!(*a, *b as f32);
        }
        assert!(read_index_raster(&dp).is_err());
    }
}
