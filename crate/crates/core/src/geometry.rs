//! Point-cloud representation and the basic geometry that operates on it:
//! bounding boxes, centroids, plane fitting, signed-distance colorization and
//! voxel subsampling.
//!
//! Coordinates are metres. Point indices are the position in the point vector
//! and stay stable through every operation that does not drop points.

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Per-point color attribute. Exactly one kind per cloud.
#[derive(Debug, Clone, PartialEq)]
pub enum ColorAttr {
    Rgb8(Vec<[u8; 3]>),
    /// Normalized backscatter intensity in `[0, 1]`.
    Intensity(Vec<f64>),
    /// Signed distance to a reference surface, metres.
    SignedDistance(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttrKind {
    Rgb8,
    Intensity,
    SignedDistance,
}

/// A single point's color attribute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttrValue {
    Rgb([u8; 3]),
    Intensity(f64),
    SignedDistance(f64),
}

impl ColorAttr {
    pub fn len(&self) -> usize {
        match self {
            ColorAttr::Rgb8(v) => v.len(),
            ColorAttr::Intensity(v) | ColorAttr::SignedDistance(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> AttrKind {
        match self {
            ColorAttr::Rgb8(_) => AttrKind::Rgb8,
            ColorAttr::Intensity(_) => AttrKind::Intensity,
            ColorAttr::SignedDistance(_) => AttrKind::SignedDistance,
        }
    }

    pub fn value(&self, i: usize) -> AttrValue {
        match self {
            ColorAttr::Rgb8(v) => AttrValue::Rgb(v[i]),
            ColorAttr::Intensity(v) => AttrValue::Intensity(v[i]),
            ColorAttr::SignedDistance(v) => AttrValue::SignedDistance(v[i]),
        }
    }

    fn select(&self, idx: &[usize]) -> ColorAttr {
        match self {
            ColorAttr::Rgb8(v) => ColorAttr::Rgb8(idx.iter().map(|&i| v[i]).collect()),
            ColorAttr::Intensity(v) => ColorAttr::Intensity(idx.iter().map(|&i| v[i]).collect()),
            ColorAttr::SignedDistance(v) => {
                ColorAttr::SignedDistance(idx.iter().map(|&i| v[i]).collect())
            }
        }
    }
}

/// Min-max normalization to `[0, 1]`. A constant input maps to 0.5.
pub fn normalize_intensity(raw: &[f64]) -> Vec<f64> {
    let (lo, hi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if raw.is_empty() || hi <= lo {
        return vec![0.5; raw.len()];
    }
    raw.iter().map(|&v| (v - lo) / (hi - lo)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Vec3>,
    colors: ColorAttr,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, colors: ColorAttr) -> Result<Self> {
        if points.len() != colors.len() {
            return Err(Error::invalid(format!(
                "{} points but {} color values",
                points.len(),
                colors.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        match &colors {
            ColorAttr::Rgb8(_) => {}
            ColorAttr::Intensity(v) => {
                if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
                    return Err(Error::invalid(format!("intensity {i} outside [0, 1]")));
                }
            }
            ColorAttr::SignedDistance(v) => {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!("signed distance {i} is not finite")));
                }
            }
        }
        Ok(Self { points, colors })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn colors(&self) -> &ColorAttr {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sub-cloud of the given indices, in the given order.
    pub fn select(&self, idx: &[usize]) -> PointCloud {
        PointCloud {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            colors: self.colors.select(idx),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        std::array::from_fn(|i| {
            Vec3::new(
                if i & 1 == 0 { a.x } else { b.x },
                if i & 2 == 0 { a.y } else { b.y },
                if i & 4 == 0 { a.z } else { b.z },
            )
        })
    }
}

pub fn compute_aabb(cloud: &PointCloud) -> Result<Aabb> {
    let first = *cloud.points.first().ok_or(Error::EmptyCloud)?;
    let (min, max) = cloud
        .points
        .iter()
        .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    Ok(Aabb { min, max })
}

/// Neumaier-compensated sum; fixed order, so results are reproducible.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn compute_centroid(cloud: &PointCloud) -> Result<Vec3> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let n = cloud.len() as f64;
    let axis = |k: usize| compensated_sum(cloud.points.iter().map(|p| p[k])) / n;
    Ok(Vec3::new(axis(0), axis(1), axis(2)))
}

/// Plane `normal · p = offset`, with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    normal: Vec3,
    offset: f64,
}

impl Plane {
    /// Builds a plane from any non-zero normal; both normal and offset are rescaled.
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let norm = normal.norm();
        if !(norm.is_finite() && norm > 0.0 && offset.is_finite()) {
            return Err(Error::invalid("plane normal must be finite and non-zero"));
        }
        Ok(Self {
            normal: normal / norm,
            offset: offset / norm,
        })
    }

    pub fn through(point: &Vec3, normal: Vec3) -> Result<Self> {
        let n = Self::new(normal, 0.0)?.normal;
        Ok(Self {
            normal: n,
            offset: n.dot(point),
        })
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    fn canonical(mut self) -> Self {
        let k = self.normal.iamax();
        if self.normal[k] < 0.0 {
            self.normal = -self.normal;
            self.offset = -self.offset;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_tol_m: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 500,
            inlier_tol_m: 0.002,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlaneFit {
    LeastSquares,
    Ransac(RansacParams),
}

pub fn fit_plane(cloud: &PointCloud, method: PlaneFit) -> Result<Plane> {
    match method {
        PlaneFit::LeastSquares => fit_plane_lsq(cloud.points()),
        PlaneFit::Ransac(params) => fit_plane_ransac(cloud.points(), params),
    }
}

/// Total least squares: the normal is the eigenvector of the smallest
/// eigenvalue of the centered scatter matrix.
pub(crate) fn fit_plane_lsq(points: &[Vec3]) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let c = Vec3::from_fn(|k, _| compensated_sum(points.iter().map(|p| p[k])) / n);
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - c;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if largest <= 0.0 || middle <= largest * 1e-12 {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }
    let normal: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    Ok(Plane::through(&c, normal)?.canonical())
}

fn fit_plane_ransac(points: &[Vec3], params: RansacParams) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if params.iterations == 0 || !(params.inlier_tol_m > 0.0) {
        return Err(Error::invalid("ransac needs iterations > 0 and tolerance > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = points.len();
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..params.iterations {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let k = rng.random_range(0..n);
        if i == j || j == k || i == k {
            continue;
        }
        let normal = (points[j] - points[i]).cross(&(points[k] - points[i]));
        let Ok(plane) = Plane::through(&points[i], normal) else {
            continue;
        };
        let count = points
            .iter()
            .filter(|p| plane.signed_distance(p).abs() <= params.inlier_tol_m)
            .count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, plane));
        }
    }
    let Some((_, candidate)) = best else {
        return fit_plane_lsq(points);
    };
    let inliers: Vec<Vec3> = points
        .iter()
        .filter(|p| candidate.signed_distance(p).abs() <= params.inlier_tol_m)
        .copied()
        .collect();
    fit_plane_lsq(&inliers).or(Ok(candidate.canonical()))
}

/// Replaces the color attribute with the signed distance of every point to `plane`.
pub fn signed_distance_colorize(cloud: &PointCloud, plane: &Plane) -> PointCloud {
    let d = cloud.points.iter().map(|p| plane.signed_distance(p)).collect();
    PointCloud {
        points: cloud.points.clone(),
        colors: ColorAttr::SignedDistance(d),
    }
}

/// Output of [`voxel_subsample`]: the reduced cloud and, per output point,
/// the source indices it represents (ascending).
#[derive(Debug, Clone)]
pub struct Subsample {
    pub cloud: PointCloud,
    pub sources: Vec<Vec<usize>>,
}

/// One centroid per occupied voxel. Output order follows the first source
/// point of each voxel.
pub fn voxel_subsample(cloud: &PointCloud, voxel_m: f64) -> Result<Subsample> {
    if !(voxel_m > 0.0 && voxel_m.is_finite()) {
        return Err(Error::invalid(format!("voxel size must be > 0, got {voxel_m}")));
    }
    let mut slot: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sources: Vec<Vec<usize>> = Vec::new();
    for (i, p) in cloud.points.iter().enumerate() {
        let key = [0, 1, 2].map(|k| (p[k] / voxel_m).floor() as i64);
        let s = *slot.entry(key).or_insert_with(|| {
            sources.push(Vec::new());
            sources.len() - 1
        });
        sources[s].push(i);
    }
    let points = sources
        .iter()
        .map(|idx| {
            let m = idx.len() as f64;
            Vec3::from_fn(|k, _| compensated_sum(idx.iter().map(|&i| cloud.points[i][k])) / m)
        })
        .collect();
    let mean = |v: &[f64], idx: &[usize]| {
        compensated_sum(idx.iter().map(|&i| v[i])) / idx.len() as f64
    };
    let colors = match &cloud.colors {
        ColorAttr::Rgb8(v) => ColorAttr::Rgb8(
            sources
                .iter()
                .map(|idx| {
                    std::array::from_fn(|c| {
                        let s: u64 = idx.iter().map(|&i| v[i][c] as u64).sum();
                        ((s as f64) / idx.len() as f64).round() as u8
                    })
                })
                .collect(),
        ),
        ColorAttr::Intensity(v) => {
            ColorAttr::Intensity(sources.iter().map(|idx| mean(v, idx).clamp(0.0, 1.0)).collect())
        }
        ColorAttr::SignedDistance(v) => {
            ColorAttr::SignedDistance(sources.iter().map(|idx| mean(v, idx)).collect())
        }
    };
    Ok(Subsample {
        cloud: PointCloud { points, colors },
        sources,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cloud(points: Vec<Vec3>) -> PointCloud {
        let n = points.len();
        PointCloud::new(points, ColorAttr::Intensity(vec![0.5; n])).unwrap()
    }

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        cloud(
            (0..n)
                .map(|_| Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0)))
                .collect(),
        )
    }

    fn cube_corners() -> PointCloud {
        let b = Aabb {
            min: Vec3::zeros(),
            max: Vec3::new(1.0, 1.0, 1.0),
        };
        cloud(b.corners().to_vec())
    }

    #[test]
    fn rejects_non_finite_and_length_mismatch() {
        assert!(PointCloud::new(vec![Vec3::new(f64::NAN, 0.0, 0.0)], ColorAttr::Intensity(vec![0.1])).is_err());
        assert!(PointCloud::new(vec![Vec3::zeros()], ColorAttr::Intensity(vec![])).is_err());
        assert!(PointCloud::new(vec![Vec3::zeros()], ColorAttr::Intensity(vec![1.5])).is_err());
    }

    #[test]
    fn intensity_normalization() {
        assert_eq!(normalize_intensity(&[2.0, 4.0, 3.0]), vec![0.0, 1.0, 0.5]);
        assert_eq!(normalize_intensity(&[7.0, 7.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn aabb_examples() {
        let b = compute_aabb(&cube_corners()).unwrap();
        assert_eq!(b.min, Vec3::zeros());
        assert_eq!(b.max, Vec3::new(1.0, 1.0, 1.0));

        let p = Vec3::new(0.3, -2.0, 7.5);
        let b = compute_aabb(&cloud(vec![p])).unwrap();
        assert_eq!((b.min, b.max), (p, p));

        assert!(matches!(compute_aabb(&cloud(vec![])), Err(Error::EmptyCloud)));
    }

    #[test]
    fn aabb_matches_scan() {
        let c = random_cloud(1000, 1);
        let b = compute_aabb(&c).unwrap();
        for k in 0..3 {
            let lo = c.points().iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
            let hi = c.points().iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(b.min[k], lo);
            assert_eq!(b.max[k], hi);
        }
        assert!(c.points().iter().all(|p| b.contains(p)));
    }

    #[test]
    fn centroid_examples() {
        let c = compute_centroid(&cloud(vec![Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)])).unwrap();
        assert_eq!(c, Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(compute_centroid(&cube_corners()).unwrap(), Vec3::new(0.5, 0.5, 0.5));
        assert!(compute_centroid(&cloud(vec![])).is_err());
    }

    #[test]
    fn centroid_matches_summation() {
        let c = random_cloud(5000, 2);
        let got = compute_centroid(&c).unwrap();
        let mut s = [0.0f64; 3];
        for p in c.points() {
            for k in 0..3 {
                s[k] += p[k];
            }
        }
        for k in 0..3 {
            let want = s[k] / c.len() as f64;
            assert!((got[k] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn plane_on_z0() {
        let pts = (0..20)
            .map(|i| Vec3::new((i % 5) as f64 * 0.1, (i / 5) as f64 * 0.2, 0.0))
            .collect();
        let p = fit_plane(&cloud(pts), PlaneFit::LeastSquares).unwrap();
        assert!((p.normal().z.abs() - 1.0).abs() < 1e-12);
        assert!(p.offset().abs() < 1e-12);
    }

    #[test]
    fn tilted_plane() {
        let mut pts = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                let (x, y) = (i as f64 * 0.1, j as f64 * 0.1);
                pts.push(Vec3::new(x, y, 1.0 - x - y));
            }
        }
        let p = fit_plane(&cloud(pts), PlaneFit::LeastSquares).unwrap();
        let want = Vec3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        assert!((p.normal().dot(&want).abs() - 1.0).abs() < 1e-12);
        assert!((p.offset().abs() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn plane_fit_errors() {
        let two = cloud(vec![Vec3::zeros(), Vec3::x()]);
        assert!(matches!(fit_plane(&two, PlaneFit::LeastSquares), Err(Error::Degenerate(_))));
        let line = cloud((0..10).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect());
        assert!(matches!(fit_plane(&line, PlaneFit::LeastSquares), Err(Error::Degenerate(_))));
        assert!(fit_plane(&line, PlaneFit::Ransac(RansacParams::default())).is_err());
    }

    #[test]
    fn ransac_ignores_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts: Vec<Vec3> = (0..950)
            .map(|_| Vec3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.0))
            .collect();
        pts.extend((0..50).map(|_| Vec3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 1.0)));
        let params = RansacParams {
            inlier_tol_m: 0.001,
            ..Default::default()
        };
        let plane = fit_plane(&cloud(pts.clone()), PlaneFit::Ransac(params)).unwrap();
        assert!((plane.normal().z - 1.0).abs() < 1e-6);
        assert!(plane.offset().abs() < 1e-6);
        for p in &pts[..950] {
            assert!(plane.signed_distance(p).abs() < 1e-6);
        }
        // the plain fit is dragged by the outliers
        let lsq = fit_plane(&cloud(pts), PlaneFit::LeastSquares).unwrap();
        assert!(lsq.offset().abs() > 1e-3);
    }

    #[test]
    fn lsq_is_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec3> = (0..300)
            .map(|_| {
                let (x, y) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                Vec3::new(x, y, 0.2 * x - 0.1 * y + 0.3 + rng.random_range(-0.01..0.01))
            })
            .collect();
        let rms = |pl: &Plane| {
            (pts.iter().map(|p| pl.signed_distance(p).powi(2)).sum::<f64>() / pts.len() as f64).sqrt()
        };
        let best = fit_plane_lsq(&pts).unwrap();
        let base = rms(&best);
        for _ in 0..100 {
            let dn = Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            let other = Plane::new(best.normal() + dn, best.offset() + rng.random_range(-0.01..0.01)).unwrap();
            assert!(base <= rms(&other) + 1e-15);
        }
    }

    #[test]
    fn signed_distance_examples() {
        let plane = Plane::new(Vec3::z(), 0.0).unwrap();
        let c = cloud(vec![Vec3::new(3.0, 4.0, 0.0), Vec3::z() * 0.01]);
        let out = signed_distance_colorize(&c, &plane);
        assert_eq!(out.points(), c.points());
        let ColorAttr::SignedDistance(d) = out.colors() else { panic!() };
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 0.01).abs() < 1e-15);
    }

    #[test]
    fn signed_distance_matches_dot_product() {
        let c = random_cloud(500, 5);
        let plane = Plane::new(Vec3::new(0.3, -0.4, 0.866), 0.25).unwrap();
        let out = signed_distance_colorize(&c, &plane);
        let ColorAttr::SignedDistance(d) = out.colors() else { panic!() };
        let n = plane.normal();
        for (p, got) in c.points().iter().zip(d) {
            assert_eq!(*got, n.x * p.x + n.y * p.y + n.z * p.z - plane.offset());
        }
    }

    #[test]
    fn voxel_examples() {
        let c = cloud(vec![Vec3::new(0.001, 0.002, 0.003), Vec3::new(0.005, 0.004, 0.003)]);
        let s = voxel_subsample(&c, 0.01).unwrap();
        assert_eq!(s.cloud.len(), 1);
        assert!((s.cloud.points()[0] - Vec3::new(0.003, 0.003, 0.003)).norm() < 1e-15);
        assert_eq!(s.sources, vec![vec![0, 1]]);

        let far = cloud(vec![Vec3::zeros(), Vec3::new(0.05, 0.0, 0.0), Vec3::new(0.0, 0.05, 0.0)]);
        assert_eq!(voxel_subsample(&far, 0.01).unwrap().cloud.len(), 3);

        assert!(voxel_subsample(&far, 0.0).is_err());
        assert!(voxel_subsample(&far, -1.0).is_err());
    }

    #[test]
    fn voxel_grid_of_eight() {
        // points at x = 0.5..7.5 step 1, voxel 2: pairs share a voxel
        let c = cloud((0..8).map(|i| Vec3::new(i as f64 + 0.5, 0.5, 0.5)).collect());
        let s = voxel_subsample(&c, 2.0).unwrap();
        let want: Vec<Vec<usize>> = (0..4).map(|v| vec![2 * v, 2 * v + 1]).collect();
        assert_eq!(s.sources, want);
        for (v, p) in s.cloud.points().iter().enumerate() {
            assert_eq!(p.x, 2.0 * v as f64 + 1.0);
        }
    }
}
