//! Gaze-direction math on the unit sphere.
//!
//! Labels live in R^3 as unit direction vectors. Everything here is pure and
//! reentrant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, norm, Scalar};

/// Below this arc length slerp falls back to normalized linear interpolation.
pub const SLERP_SMALL_ANGLE: f64 = 1e-8;

/// Unit 3-vector gaze direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeVector<T> {
    x: T,
    y: T,
    z: T,
}

impl<T: Scalar> GazeVector<T> {
    /// Normalizes `(x, y, z)` onto the unit sphere.
    pub fn new(x: T, y: T, z: T) -> Result<Self> {
        normalize([x, y, z])
    }

    /// Wraps components that the caller guarantees are already unit-norm.
    pub(crate) fn from_unit(v: [T; 3]) -> Self {
        GazeVector {
            x: v[0],
            y: v[1],
            z: v[2],
        }
    }

    pub fn x(&self) -> T {
        self.x
    }
    pub fn y(&self) -> T {
        self.y
    }
    pub fn z(&self) -> T {
        self.z
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(&self, other: &Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cast<U: Scalar>(&self) -> GazeVector<U> {
        GazeVector {
            x: U::lit(self.x.as_f64()),
            y: U::lit(self.y.as_f64()),
            z: U::lit(self.z.as_f64()),
        }
    }
}

/// Angle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Angle<T>(pub T);

impl<T: Scalar> Angle<T> {
    pub fn degrees(self) -> T {
        self.0
    }

    pub fn radians(self) -> T {
        self.0 * T::PI() / T::lit(180.0)
    }
}

/// Scales `v` to unit length.
pub fn normalize<T: Scalar>(v: [T; 3]) -> Result<GazeVector<T>> {
    let n = norm(&v);
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::DegenerateVector);
    }
    Ok(GazeVector::from_unit([v[0] / n, v[1] / n, v[2] / n]))
}

/// Normalized dot product `(a/|a|) . (b/|b|)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::dims(a.len(), b.len()));
    }
    let na = norm(a);
    let nb = norm(b);
    if !(na > T::zero()) || !(nb > T::zero()) || !na.is_finite() || !nb.is_finite() {
        return Err(Error::DegenerateVector);
    }
    let c = dot(a, b) / (na * nb);
    Ok(c.max(-T::one()).min(T::one()))
}

fn rad_to_deg<T: Scalar>(r: T) -> T {
    r * T::lit(180.0) / T::PI()
}

/// Angle between two gaze directions, in degrees within `[0, 180]`.
pub fn angular_error_deg<T: Scalar>(g: &GazeVector<T>, g_pred: &GazeVector<T>) -> Angle<T> {
    let c = g.dot(g_pred).max(-T::one()).min(T::one());
    Angle(rad_to_deg(c.acos()))
}

/// Spherical linear interpolation along the shorter great-circle arc.
///
/// `t = 0` and `t = 1` return the endpoints bit-for-bit. Antipodal endpoints
/// have no unique arc and are rejected.
pub fn slerp<T: Scalar>(p: &GazeVector<T>, q: &GazeVector<T>, t: T) -> Result<GazeVector<T>> {
    if t == T::zero() {
        return Ok(*p);
    }
    if t == T::one() {
        return Ok(*q);
    }
    let c = p.dot(q).max(-T::one()).min(T::one());
    // sin(omega) below sqrt(eps) with a negative dot means the pair is antipodal
    // to working precision.
    let omega = c.acos();
    if c < T::zero() && omega.sin() < T::epsilon().sqrt() {
        return Err(Error::AmbiguousGeodesic);
    }
    let (pa, qa) = (p.to_array(), q.to_array());
    let mixed = if omega < T::lit(SLERP_SMALL_ANGLE) {
        let s = T::one() - t;
        [
            s * pa[0] + t * qa[0],
            s * pa[1] + t * qa[1],
            s * pa[2] + t * qa[2],
        ]
    } else {
        let so = omega.sin();
        let wp = ((T::one() - t) * omega).sin() / so;
        let wq = (t * omega).sin() / so;
        [
            wp * pa[0] + wq * qa[0],
            wp * pa[1] + wq * qa[1],
            wp * pa[2] + wq * qa[2],
        ]
    };
    normalize(mixed)
}

/// Converts a (yaw, pitch) pair in radians to a gaze vector using
/// `g = (cos p sin y, sin p, -cos p cos y)`, so `(0, 0)` looks down `-z`.
pub fn yaw_pitch_to_vector<T: Scalar>(yaw: T, pitch: T) -> Result<GazeVector<T>> {
    if !(pitch.abs() < T::FRAC_PI_2()) {
        return Err(Error::GimbalBoundary(pitch.as_f64()));
    }
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    normalize([cp * sy, sp, -cp * cy])
}

/// Inverse of [`yaw_pitch_to_vector`]; returns `(yaw, pitch)` in radians.
pub fn vector_to_yaw_pitch<T: Scalar>(g: &GazeVector<T>) -> Result<(T, T)> {
    let pitch = g.y().max(-T::one()).min(T::one()).asin();
    if !(pitch.abs() < T::FRAC_PI_2()) {
        return Err(Error::GimbalBoundary(pitch.as_f64()));
    }
    let yaw = g.x().atan2(-g.z());
    Ok((yaw, pitch))
}
