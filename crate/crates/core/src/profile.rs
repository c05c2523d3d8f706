//! Layer thickness from instance masks via the Euclidean distance transform.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mask::{BitMask, Rect};

const FAR: f64 = 1e30;

/// Exact squared 1-D distance transform of a sampled function (lower envelope
/// of parabolas). Samples at `FAR` are not sites; at least one must be finite.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let meet = |q: usize, p: usize| ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
    let mut sites = (0..f.len()).filter(|&q| f[q] < FAR);
    let first = sites.next().expect("at least one site");
    let mut k = 0;
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in sites {
        let mut s = meet(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = meet(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Distance from every foreground pixel to the nearest background pixel
/// (pixel centers, Euclidean); 0 on background. Pixels outside the bitmap
/// count as background.
pub fn distance_transform(width: usize, height: usize, foreground: &[bool]) -> Vec<f64> {
    assert_eq!(foreground.len(), width * height, "bitmap size mismatch");
    // one pixel of background padding on every side
    let (pw, ph) = (width + 2, height + 2);
    let mut grid = vec![0.0; pw * ph];
    for y in 0..height {
        for x in 0..width {
            if foreground[y * width + x] {
                grid[(y + 1) * pw + x + 1] = FAR;
            }
        }
    }
    let n = pw.max(ph);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        edt_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = out[y];
        }
    }
    for y in 0..ph {
        let row = &mut grid[y * pw..(y + 1) * pw];
        f[..pw].copy_from_slice(row);
        edt_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        row.copy_from_slice(&out[..pw]);
    }
    let mut dist = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            dist.push(grid[(y + 1) * pw + x + 1].sqrt());
        }
    }
    dist
}

/// Distance transform of one instance, over its bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub instance_id: u32,
    pub bbox: Rect,
    /// Row-major over `bbox`.
    pub values: Vec<f64>,
    pub foreground: Vec<bool>,
}

pub fn distance_map(instance_id: u32, mask: &BitMask) -> DistanceMap {
    let bbox = mask.bbox();
    let foreground = mask.bbox_bits().to_vec();
    let values = distance_transform(bbox.w as usize, bbox.h as usize, &foreground);
    DistanceMap {
        instance_id,
        bbox,
        values,
        foreground,
    }
}

/// How the per-column ridge value is taken from the distance map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    /// Largest distance in the column: half of the local thickness.
    #[default]
    Max,
    /// Mean distance over the column's foreground.
    Mean,
}

impl std::str::FromStr for ProfileMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Self::Max),
            "mean" => Ok(Self::Mean),
            _ => Err(Error::invalid(format!("unknown profile mode '{s}' (max|mean)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileStats {
    pub mean_mm: f64,
    pub min_mm: f64,
    pub max_mm: f64,
    pub std_mm: f64,
    pub columns: usize,
}

/// Thickness along one instance, one sample per image column of its bounding box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThicknessProfile {
    pub instance_id: u32,
    pub mode: ProfileMode,
    /// Image column of the first sample.
    pub x0: u32,
    pub gsd_m: f64,
    pub ridge_px: Vec<f64>,
    pub thickness_px: Vec<f64>,
    pub thickness_mm: Vec<f64>,
    /// False for columns with no foreground.
    pub valid: Vec<bool>,
    /// Mean foreground row; larger is lower in the image.
    pub mean_row: f64,
    pub row_span: (u32, u32),
    pub stats: Option<ProfileStats>,
}

impl ThicknessProfile {
    /// Valid thickness samples in mm, skipping `trim` columns at each end of the instance.
    pub fn interior_mm(&self, trim: usize) -> Vec<f64> {
        let cols: Vec<usize> = (0..self.valid.len()).filter(|&c| self.valid[c]).collect();
        if cols.len() <= 2 * trim {
            return Vec::new();
        }
        cols[trim..cols.len() - trim].iter().map(|&c| self.thickness_mm[c]).collect()
    }
}

fn stats(values: &[f64]) -> Option<ProfileStats> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(ProfileStats {
        mean_mm: mean,
        min_mm: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_mm: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        std_mm: var.sqrt(),
        columns: values.len(),
    })
}

pub fn column_profile(dmap: &DistanceMap, mode: ProfileMode, gsd_m: f64) -> Result<ThicknessProfile> {
    if !(gsd_m.is_finite() && gsd_m > 0.0) {
        return Err(Error::invalid(format!("GSD must be positive, got {gsd_m}")));
    }
    let (w, h) = (dmap.bbox.w as usize, dmap.bbox.h as usize);
    let mut ridge_px = vec![0.0; w];
    let mut valid = vec![false; w];
    let (mut row_sum, mut count) = (0.0, 0usize);
    for x in 0..w {
        let (mut best, mut sum, mut n) = (0.0f64, 0.0, 0usize);
        for y in 0..h {
            if dmap.foreground[y * w + x] {
                let d = dmap.values[y * w + x];
                best = best.max(d);
                sum += d;
                n += 1;
                row_sum += (dmap.bbox.y0 as usize + y) as f64;
            }
        }
        count += n;
        if n > 0 {
            valid[x] = true;
            ridge_px[x] = match mode {
                ProfileMode::Max => best,
                ProfileMode::Mean => sum / n as f64,
            };
        }
    }
    let thickness_px: Vec<f64> = ridge_px.iter().map(|r| 2.0 * r).collect();
    let thickness_mm: Vec<f64> = thickness_px.iter().map(|t| t * gsd_m * 1000.0).collect();
    let samples: Vec<f64> = (0..w).filter(|&x| valid[x]).map(|x| thickness_mm[x]).collect();
    Ok(ThicknessProfile {
        instance_id: dmap.instance_id,
        mode,
        x0: dmap.bbox.x0,
        gsd_m,
        ridge_px,
        thickness_px,
        thickness_mm,
        valid,
        mean_row: if count > 0 { row_sum / count as f64 } else { f64::NAN },
        row_span: (dmap.bbox.y0, dmap.bbox.y1().saturating_sub(1)),
        stats: stats(&samples),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerComparison {
    /// 0 is the bottom layer.
    pub layer: usize,
    pub instance_id: u32,
    pub planned_mm: f64,
    pub measured_mm: Option<f64>,
    pub deviation_mm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanComparison {
    pub layers: Vec<LayerComparison>,
    /// Set when two consecutive instances overlap vertically, so the
    /// bottom-to-top assignment is ambiguous.
    pub ordering_ambiguous: bool,
}

/// Pairs instances with planned layer heights, bottom layer first. Instances
/// are ordered by mean image row, lowest in the image first; the measured
/// value is the largest valid-column thickness.
pub fn compare_to_plan(profiles: &[ThicknessProfile], planned_mm: &[f64]) -> Result<PlanComparison> {
    if profiles.len() > planned_mm.len() {
        return Err(Error::invalid(format!(
            "{} instances but only {} planned layers",
            profiles.len(),
            planned_mm.len()
        )));
    }
    let mut order: Vec<&ThicknessProfile> = profiles.iter().collect();
    order.sort_by(|a, b| b.mean_row.total_cmp(&a.mean_row).then(a.instance_id.cmp(&b.instance_id)));
    let ordering_ambiguous = order.windows(2).any(|w| w[1].row_span.1 >= w[0].row_span.0);
    let layers = order
        .iter()
        .zip(planned_mm)
        .enumerate()
        .map(|(layer, (p, &planned))| {
            let measured = p.stats.map(|s| s.max_mm);
            LayerComparison {
                layer,
                instance_id: p.instance_id,
                planned_mm: planned,
                measured_mm: measured,
                deviation_mm: measured.map(|m| m - planned),
            }
        })
        .collect();
    Ok(PlanComparison {
        layers,
        ordering_ambiguous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn brute_force(width: usize, height: usize, fg: &[bool]) -> Vec<f64> {
        let (w, h) = (width as i64, height as i64);
        let mut out = vec![0.0; width * height];
        for y in 0..h {
            for x in 0..w {
                if !fg[(y * w + x) as usize] {
                    continue;
                }
                let mut best = i64::MAX;
                for by in -1..=h {
                    for bx in -1..=w {
                        let inside = bx >= 0 && by >= 0 && bx < w && by < h;
                        if inside && fg[(by * w + bx) as usize] {
                            continue;
                        }
                        best = best.min((bx - x).pow(2) + (by - y).pow(2));
                    }
                }
                out[(y * w + x) as usize] = (best as f64).sqrt();
            }
        }
        out
    }

    #[test]
    fn single_pixel_and_background() {
        assert_eq!(distance_transform(1, 1, &[true]), vec![1.0]);
        assert_eq!(distance_transform(3, 2, &[false; 6]), vec![0.0; 6]);
        let mut fg = vec![false; 25];
        fg[12] = true;
        let d = distance_transform(5, 5, &fg);
        assert_eq!(d[12], 1.0);
        assert_eq!(d.iter().filter(|&&v| v > 0.0).count(), 1);
    }

    #[test]
    fn solid_rectangle() {
        // 7 rows tall: the middle row is 4 px from the padding
        let d = distance_transform(50, 7, &vec![true; 350]);
        assert_eq!(d[3 * 50 + 25], 4.0);
        assert_eq!(d[25], 1.0);
    }

    proptest! {
        #[test]
        fn matches_brute_force(w in 1usize..24, h in 1usize..24, seed in any::<u64>(), p in 0.1f64..0.95) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let fg: Vec<bool> = (0..w * h).map(|_| rng.random_bool(p)).collect();
            prop_assert_eq!(distance_transform(w, h, &fg), brute_force(w, h, &fg));
        }
    }

    fn rect_mask(x0: u32, y0: u32, w: u32, h: u32) -> BitMask {
        BitMask::from_pixels(200, 200, (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| (x, y))))
    }

    #[test]
    fn band_thickness() {
        let m = rect_mask(10, 20, 100, 9);
        let p = column_profile(&distance_map(1, &m), ProfileMode::Max, 0.001).unwrap();
        assert_eq!(p.x0, 10);
        assert!(p.valid.iter().all(|&v| v));
        // 9 px tall band: ridge 5 px (center row to padding), 10 px = 10 mm
        assert!(p.thickness_mm[50] == 10.0);
        let odd = column_profile(&distance_map(2, &rect_mask(0, 0, 60, 11)), ProfileMode::Max, 0.001).unwrap();
        // columns further than the ridge from the ends see only the band edges
        assert!(odd.ridge_px[6..54].iter().all(|&r| r == 6.0));
        assert!(odd.thickness_px[6..54].iter().all(|&t| t == 12.0));
        let mean = column_profile(&distance_map(1, &m), ProfileMode::Mean, 0.001).unwrap();
        for x in 0..100 {
            assert!(mean.ridge_px[x] <= p.ridge_px[x]);
        }
        assert_eq!(p.interior_mm(10).len(), 80);
        assert!((p.mean_row - 24.0).abs() < 1e-12);
        assert!(column_profile(&distance_map(1, &m), ProfileMode::Max, 0.0).is_err());
    }

    #[test]
    fn holes_mark_invalid_columns() {
        let m = rect_mask(0, 0, 5, 5).union(&rect_mask(8, 0, 5, 5));
        let p = column_profile(&distance_map(3, &m), ProfileMode::Max, 0.002).unwrap();
        assert_eq!(p.valid, vec![true, true, true, true, true, false, false, false, true, true, true, true, true]);
        assert_eq!(p.stats.unwrap().columns, 10);
    }

    #[test]
    fn plan_ordering() {
        let profiles: Vec<ThicknessProfile> = (0..3u32)
            .map(|i| {
                let m = rect_mask(0, 100 - 30 * i, 50, 10);
                column_profile(&distance_map(i + 1, &m), ProfileMode::Max, 0.001).unwrap()
            })
            .collect();
        let c = compare_to_plan(&profiles, &[10.0, 12.0, 12.0, 12.0]).unwrap();
        assert_eq!(c.layers.iter().map(|l| l.instance_id).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(!c.ordering_ambiguous);
        // 10 px band at 1 mm/px measures 10 mm
        assert_eq!(c.layers[0].measured_mm, Some(10.0));
        assert_eq!(c.layers[0].deviation_mm, Some(0.0));
        assert_eq!(c.layers[1].deviation_mm, Some(-2.0));
        assert!(compare_to_plan(&profiles, &[10.0]).is_err());

        let overlapping = vec![
            column_profile(&distance_map(1, &rect_mask(0, 10, 20, 10)), ProfileMode::Max, 0.001).unwrap(),
            column_profile(&distance_map(2, &rect_mask(30, 15, 20, 10)), ProfileMode::Max, 0.001).unwrap(),
        ];
        assert!(compare_to_plan(&overlapping, &[1.0, 1.0]).unwrap().ordering_ambiguous);
    }
}
