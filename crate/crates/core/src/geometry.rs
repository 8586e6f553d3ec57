//! Vector algebra, mirror imaging across planes, and the local frames used by
//! the spatial-correlation formulas.
//!
//! All angles are radians.

use std::f64::consts::FRAC_PI_2;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-12;

/// A point or displacement in 3-D space, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction. `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Arithmetic mean of a non-empty set of points.
    pub fn mean(points: &[Vec3]) -> Option<Vec3> {
        if points.is_empty() {
            return None;
        }
        let sum = points.iter().fold(Vec3::ZERO, |acc, &p| acc + p);
        Some(sum * (1.0 / points.len() as f64))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3::new(v[0], v[1], v[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Placement of a planar surface: its center, unit normal and two in-plane
/// axes, all mutually orthonormal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlanePoseRepr", into = "PlanePoseRepr")]
pub struct PlanePose {
    origin: Vec3,
    normal: Vec3,
    axis_u: Vec3,
    axis_v: Vec3,
}

#[derive(Serialize, Deserialize)]
struct PlanePoseRepr {
    origin_m: Vec3,
    axis_u: Vec3,
    axis_v: Vec3,
}

impl TryFrom<PlanePoseRepr> for PlanePose {
    type Error = Error;
    fn try_from(r: PlanePoseRepr) -> Result<Self> {
        PlanePose::from_axes(r.origin_m, r.axis_u, r.axis_v)
    }
}

impl From<PlanePose> for PlanePoseRepr {
    fn from(p: PlanePose) -> Self {
        PlanePoseRepr {
            origin_m: p.origin,
            axis_u: p.axis_u,
            axis_v: p.axis_v,
        }
    }
}

impl PlanePose {
    /// Builds a pose from two in-plane axes; the normal is `axis_u × axis_v`.
    /// The axes are normalized but must already be orthogonal.
    pub fn from_axes(origin: Vec3, axis_u: Vec3, axis_v: Vec3) -> Result<Self> {
        if !origin.is_finite() {
            return Err(Error::InvalidParameter("plane origin not finite".into()));
        }
        let u = axis_u
            .normalized()
            .ok_or_else(|| Error::InvalidParameter("degenerate plane axis".into()))?;
        let v = axis_v
            .normalized()
            .ok_or_else(|| Error::InvalidParameter("degenerate plane axis".into()))?;
        if u.dot(v).abs() > ORTHO_TOL {
            return Err(Error::InvalidParameter(format!(
                "plane axes not orthogonal (u·v = {:e})",
                u.dot(v)
            )));
        }
        Ok(Self {
            origin,
            normal: u.cross(v),
            axis_u: u,
            axis_v: v,
        })
    }

    /// The plane `z = height` with normal +z and axes x, y.
    pub fn horizontal(height: f64) -> Self {
        Self {
            origin: Vec3::new(0.0, 0.0, height),
            normal: Vec3::Z,
            axis_u: Vec3::X,
            axis_v: Vec3::Y,
        }
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn normal(&self) -> Vec3 {
        self.normal
    }

    pub fn axis_u(&self) -> Vec3 {
        self.axis_u
    }

    pub fn axis_v(&self) -> Vec3 {
        self.axis_v
    }

    /// Signed distance of `p` from the plane, positive on the normal side.
    #[inline]
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        self.normal.dot(p - self.origin)
    }

    /// In-plane coordinates of `p` projected onto the plane.
    pub fn local_coords(&self, p: Vec3) -> (f64, f64) {
        let d = p - self.origin;
        (self.axis_u.dot(d), self.axis_v.dot(d))
    }

    /// Point at in-plane coordinates `(s, t)` lifted by `h` along the normal.
    #[inline]
    pub fn point_at(&self, s: f64, t: f64, h: f64) -> Vec3 {
        self.origin + self.axis_u * s + self.axis_v * t + self.normal * h
    }
}

/// Reflection of `p` across `plane`.
pub fn mirror_image(p: Vec3, plane: &PlanePose) -> Vec3 {
    p - plane.normal * (2.0 * plane.signed_distance(p))
}

/// A local coordinate system used to measure elevation angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame {
    origin: Vec3,
    z_axis: Vec3,
}

impl LocalFrame {
    pub fn new(origin: Vec3, z_axis: Vec3) -> Result<Self> {
        let z_axis = z_axis
            .normalized()
            .ok_or_else(|| Error::InvalidParameter("frame axis is the zero vector".into()))?;
        Ok(Self { origin, z_axis })
    }

    /// Frame centered on the midpoint of an antenna pair with its z-axis
    /// pointing from `first` toward `second`. `None` when the two coincide.
    pub fn for_pair(first: Vec3, second: Vec3) -> Option<Self> {
        let z_axis = (second - first).normalized()?;
        Some(Self {
            origin: (first + second) * 0.5,
            z_axis,
        })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn z_axis(&self) -> Vec3 {
        self.z_axis
    }

    /// `sin θ` of `u` in this frame without the `asin`.
    #[inline]
    pub fn sin_elevation(&self, u: Vec3) -> Option<f64> {
        let d = u - self.origin;
        let r = d.norm();
        (r > 0.0).then(|| (self.z_axis.dot(d) / r).clamp(-1.0, 1.0))
    }
}

/// Elevation of `u` above the plane orthogonal to the frame's z-axis, signed
/// toward +z. Always within `[-π/2, π/2]`.
pub fn elevation_in_frame(u: Vec3, frame: &LocalFrame) -> Result<f64> {
    let s = frame
        .sin_elevation(u)
        .ok_or_else(|| Error::CoincidentPoint("point coincides with frame origin".into()))?;
    Ok(s.asin().clamp(-FRAC_PI_2, FRAC_PI_2))
}

/// Cosines of the incidence angles of `u_tx` and `u_rx` measured from the
/// surface normal at the surface center.
pub fn incidence_cosines(surface: &PlanePose, u_tx: Vec3, u_rx: Vec3) -> Result<(f64, f64)> {
    let cosine = |u: Vec3, which: &str| -> Result<f64> {
        let d = u - surface.origin;
        let r = d.norm();
        let h = surface.normal.dot(d).abs();
        if r == 0.0 || h <= r * 1e-15 {
            return Err(Error::GrazingGeometry(format!("{which} lies on the surface plane")));
        }
        Ok((h / r).min(1.0))
    };
    Ok((cosine(u_tx, "tx")?, cosine(u_rx, "rx")?))
}
