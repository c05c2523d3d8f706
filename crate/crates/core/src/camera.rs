//! Virtual pinhole camera: ground-sampling-distance planning, pose
//! construction from Euler angles or placement strategies, frustum clipping
//! and projection.
//!
//! Conventions:
//! - world up is `+z`;
//! - camera frame is x right, y down, z forward (optical axis);
//! - `p_cam = R * p_world + t`;
//! - pixel `(i, j)` covers `u in [i, i+1)`, `v in [j, j+1)`; an image is the
//!   half-open range `0 <= u < width`, `0 <= v < height`.
//!
//! Placement fixes roll so that world `+z` points up in the image, which keeps
//! printed layers horizontal.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Plane, PointCloud, Vec3};

/// Largest ground sampling distance used for filament capture, 1 mm/px.
pub const MAX_GSD_M: f64 = 0.001;

pub const DEFAULT_NEAR_M: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Intrinsics {
    pub focal_mm: f64,
    pub pixel_size_mm: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(focal_mm: f64, pixel_size_mm: f64, width_px: u32, height_px: u32, cx: f64, cy: f64) -> Result<Self> {
        let intr = Self {
            focal_mm,
            pixel_size_mm,
            width_px,
            height_px,
            cx,
            cy,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Principal point at the image center.
    pub fn centered(focal_mm: f64, pixel_size_mm: f64, width_px: u32, height_px: u32) -> Result<Self> {
        Self::new(focal_mm, pixel_size_mm, width_px, height_px, width_px as f64 / 2.0, height_px as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_mm > 0.0 && self.focal_mm.is_finite()) {
            return Err(Error::invalid(format!("focal_mm must be > 0, got {}", self.focal_mm)));
        }
        if !(self.pixel_size_mm > 0.0 && self.pixel_size_mm.is_finite()) {
            return Err(Error::invalid(format!("pixel_size_mm must be > 0, got {}", self.pixel_size_mm)));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(0.0 <= self.cx && self.cx < self.width_px as f64) || !(0.0 <= self.cy && self.cy < self.height_px as f64) {
            return Err(Error::invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width_px, self.height_px
            )));
        }
        Ok(())
    }

    /// Focal length in pixels (`fx = fy`).
    pub fn focal_px(&self) -> f64 {
        self.focal_mm / self.pixel_size_mm
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let f = self.focal_px();
        Matrix3::new(f, 0.0, self.cx, 0.0, f, self.cy, 0.0, 0.0, 1.0)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be > 0, got {v}")))
    }
}

/// Ground sampling distance in metres per pixel at `distance_m`.
pub fn gsd(distance_m: f64, pixel_size_mm: f64, focal_mm: f64) -> Result<f64> {
    positive("distance", distance_m)?;
    positive("pixel size", pixel_size_mm)?;
    positive("focal length", focal_mm)?;
    Ok(distance_m * pixel_size_mm / focal_mm)
}

/// Distance at which a camera reaches `target_gsd_m_per_px`.
pub fn working_distance(target_gsd_m_per_px: f64, pixel_size_mm: f64, focal_mm: f64) -> Result<f64> {
    positive("target gsd", target_gsd_m_per_px)?;
    positive("pixel size", pixel_size_mm)?;
    positive("focal length", focal_mm)?;
    Ok(target_gsd_m_per_px * focal_mm / pixel_size_mm)
}

/// Sampling needed to resolve a groove of width `inter_filament_gap_m`:
/// half the gap, never coarser than [`MAX_GSD_M`].
pub fn shannon_gsd(inter_filament_gap_m: f64) -> Result<f64> {
    positive("inter-filament gap", inter_filament_gap_m)?;
    Ok((inter_filament_gap_m / 2.0).min(MAX_GSD_M))
}

/// Rotation angles in radians: `psi` about z, `phi` about y, `theta` about x.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub psi: f64,
    pub phi: f64,
    pub theta: f64,
}

pub fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `R = Rx(theta) * Ry(phi) * Rz(psi)`: applied to a vector, z acts first, then y, then x.
pub fn euler_to_rotation(angles: EulerAngles) -> Matrix3<f64> {
    rot_x(angles.theta) * rot_y(angles.phi) * rot_z(angles.psi)
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(ortho <= 1e-9 && (det - 1.0).abs() <= 1e-9) || !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::invalid("rotation must be orthonormal with det +1"));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_euler(angles: EulerAngles, translation: Vector3<f64>) -> Result<Self> {
        Self::new(euler_to_rotation(angles), translation)
    }

    /// Camera at `center` looking along `axis`, rolled so world `+z` is image-up.
    /// When the axis is vertical, world `+y` is used as image-up instead.
    pub fn look_along(center: Vec3, axis: Vec3) -> Result<Self> {
        let norm = axis.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Degenerate("view axis has zero length".into()));
        }
        let forward = axis / norm;
        let mut up = Vec3::z() - forward * forward.z;
        if up.norm() < 1e-9 {
            up = Vec3::y() - forward * forward.y;
        }
        let down = -up.normalize();
        let right = down.cross(&forward);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Self::new(rotation, -(rotation * center))
    }

    pub fn camera_center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn optical_axis(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    PosX,
    NegX,
    PosY,
    NegY,
    Top,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+x" => Ok(Side::PosX),
            "-x" => Ok(Side::NegX),
            "+y" => Ok(Side::PosY),
            "-y" => Ok(Side::NegY),
            "top" | "+z" => Ok(Side::Top),
            _ => Err(Error::invalid(format!("unknown side {s:?} (expected +x, -x, +y, -y, top)"))),
        }
    }
}

impl Side {
    pub fn outward_normal(self) -> Vec3 {
        match self {
            Side::PosX => Vec3::x(),
            Side::NegX => -Vec3::x(),
            Side::PosY => Vec3::y(),
            Side::NegY => -Vec3::y(),
            Side::Top => Vec3::z(),
        }
    }
}

/// Predefined-position placement: the image plane is parallel to one side of
/// the bounding box and the optical axis hits that side's center head-on.
pub fn place_pp(aabb: &Aabb, side: Side, working_distance_m: f64) -> Result<Pose> {
    positive("working distance", working_distance_m)?;
    let n = side.outward_normal();
    let axis = n.iamax();
    let e = aabb.extent();
    let area: f64 = (0..3).filter(|&k| k != axis).map(|k| e[k]).product();
    if !(area > 0.0) {
        return Err(Error::Degenerate(format!("bounding box side {side:?} has zero area")));
    }
    let mut face_center = aabb.center();
    face_center[axis] = if n[axis] > 0.0 { aabb.max[axis] } else { aabb.min[axis] };
    Pose::look_along(face_center + n * working_distance_m, -n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KspMode {
    /// Along the sensor→centroid line.
    Direct,
    /// Along that line projected onto the horizontal plane.
    Horizontal,
}

/// Known-sensor-position placement: the camera sits on the view axis through
/// the centroid, `working_distance_m` before it.
pub fn place_ksp(sensor_pos: Vec3, centroid: Vec3, mode: KspMode, working_distance_m: f64) -> Result<Pose> {
    positive("working distance", working_distance_m)?;
    let mut axis = centroid - sensor_pos;
    if axis.norm() == 0.0 {
        return Err(Error::Degenerate("sensor position coincides with centroid".into()));
    }
    if mode == KspMode::Horizontal {
        axis.z = 0.0;
        if axis.norm() == 0.0 {
            return Err(Error::Degenerate("sensor is vertically above/below the centroid".into()));
        }
    }
    let axis = axis.normalize();
    Pose::look_along(centroid - axis * working_distance_m, axis)
}

/// A projected point: pixel coordinates and depth along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projected {
    pub fn in_image(&self, intr: &Intrinsics) -> bool {
        0.0 <= self.u && self.u < intr.width_px as f64 && 0.0 <= self.v && self.v < intr.height_px as f64
    }

    /// Integer pixel containing the projection.
    pub fn pixel(&self) -> (i64, i64) {
        (self.u.floor() as i64, self.v.floor() as i64)
    }
}

/// Ideal pinhole projection; `None` when the point is at or behind the camera.
pub fn project(pose: &Pose, intr: &Intrinsics, p: &Vec3) -> Option<Projected> {
    let c = pose.to_camera(p);
    if c.z <= 0.0 {
        return None;
    }
    let f = intr.focal_px();
    Some(Projected {
        u: f * c.x / c.z + intr.cx,
        v: f * c.y / c.z + intr.cy,
        depth: c.z,
    })
}

/// Six inward-facing world-frame planes bounding the visible volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    /// left, right, top, bottom, near, far
    planes: [Plane; 6],
    near_m: f64,
    far_m: f64,
}

// right and bottom are open edges of the half-open image range
const STRICT: [bool; 6] = [false, true, false, true, false, false];

impl Frustum {
    pub fn planes(&self) -> &[Plane; 6] {
        &self.planes
    }

    pub fn near_m(&self) -> f64 {
        self.near_m
    }

    pub fn far_m(&self) -> f64 {
        self.far_m
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        self.planes.iter().zip(STRICT).all(|(pl, strict)| {
            let d = pl.signed_distance(p);
            if strict {
                d > 0.0
            } else {
                d >= 0.0
            }
        })
    }
}

pub fn build_frustum(pose: &Pose, intr: &Intrinsics, near_m: f64, far_m: f64) -> Result<Frustum> {
    intr.validate()?;
    if !(0.0 < near_m && near_m < far_m && far_m.is_finite()) {
        return Err(Error::invalid(format!("need 0 < near < far, got near={near_m} far={far_m}")));
    }
    let f = intr.focal_px();
    let (w, h) = (intr.width_px as f64, intr.height_px as f64);
    // camera-frame half-spaces n·p + d >= 0
    let cam: [(Vec3, f64); 6] = [
        (Vec3::new(f, 0.0, intr.cx), 0.0),
        (Vec3::new(-f, 0.0, w - intr.cx), 0.0),
        (Vec3::new(0.0, f, intr.cy), 0.0),
        (Vec3::new(0.0, -f, h - intr.cy), 0.0),
        (Vec3::z(), -near_m),
        (-Vec3::z(), far_m),
    ];
    let rt = pose.rotation.transpose();
    let planes = cam.map(|(n, d)| {
        // n·(R p + t) + d = (Rᵀ n)·p + (n·t + d)
        Plane::new(rt * n, -(n.dot(&pose.translation) + d)).expect("frustum normals are non-zero")
    });
    Ok(Frustum { planes, near_m, far_m })
}

/// Indices of the points inside `frustum`, ascending.
pub fn clip(cloud: &PointCloud, frustum: &Frustum) -> Vec<usize> {
    cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| frustum.contains(p))
        .map(|(i, _)| i)
        .collect()
}

/// Intrinsics whose image just covers the projection of `aabb`, padded by one
/// pixel and rounded up to whole tiles, with the principal point centered.
pub fn fit_image_to_aabb(pose: &Pose, focal_mm: f64, pixel_size_mm: f64, aabb: &Aabb, tile_px: u32) -> Result<Intrinsics> {
    positive("focal length", focal_mm)?;
    positive("pixel size", pixel_size_mm)?;
    if tile_px == 0 {
        return Err(Error::invalid("tile size must be positive"));
    }
    let f = focal_mm / pixel_size_mm;
    let (mut half_u, mut half_v) = (0.0f64, 0.0f64);
    for corner in aabb.corners() {
        let c = pose.to_camera(&corner);
        if c.z <= 0.0 {
            return Err(Error::Degenerate("bounding box reaches behind the camera".into()));
        }
        half_u = half_u.max((f * c.x / c.z).abs());
        half_v = half_v.max((f * c.y / c.z).abs());
    }
    let round_up = |half: f64| -> Result<u32> {
        let px = 2.0 * (half.ceil() + 1.0);
        let tiles = (px / tile_px as f64).ceil().max(1.0);
        let size = tiles * tile_px as f64;
        if size > 65536.0 {
            return Err(Error::invalid(format!("render would be {size} px wide; check GSD and units")));
        }
        Ok(size as u32)
    };
    Intrinsics::centered(focal_mm, pixel_size_mm, round_up(half_u)?, round_up(half_v)?)
}
