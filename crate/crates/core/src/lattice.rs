//! Two-dimensional point lattices and their reciprocals.
//!
//! A lattice is generated by a basis `(a, b)`: every point is `n1·a + n2·b`
//! for integers `n1`, `n2`. With `Q = [a|b]` the reciprocal lattice is
//! generated by the columns of `Q^{-T}`. Its points are exactly the
//! frequencies at which a field of impulses on the original lattice has
//! non-zero Fourier transform, which is what ties this module to the
//! spectral side of the crate.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singularity threshold: `|det Q| < DEGENERACY_TOL · |a|·|b|`.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Angular tolerance (degrees) for locating a horizontal lattice vector.
pub const HORIZONTAL_TOL_DEG: f64 = 0.5;

/// Plane vector. Units depend on context: cm in the spatial domain,
/// threads/cm (1/cm) in the frequency domain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Angle from the positive x axis, radians in (-π, π].
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Counter-clockwise rotation by `radians`.
    pub fn rotated(self, radians: f64) -> Vec2 {
        let (s, c) = radians.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned closed rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    /// Square `[-half, half]²`.
    pub fn centered(half: f64) -> Self {
        Self::new(-half, half, -half, half)
    }

    pub fn is_empty(&self) -> bool {
        !(self.x_min <= self.x_max && self.y_min <= self.y_max)
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        p.x >= self.x_min - tol
            && p.x <= self.x_max + tol
            && p.y >= self.y_min - tol
            && p.y <= self.y_max + tol
    }

    fn corners(&self) -> [Vec2; 4] {
        [
            Vec2::new(self.x_min, self.y_min),
            Vec2::new(self.x_max, self.y_min),
            Vec2::new(self.x_min, self.y_max),
            Vec2::new(self.x_max, self.y_max),
        ]
    }
}

/// A pair of linearly independent plane vectors, `Q = [a|b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Basis2D {
    pub a: Vec2,
    pub b: Vec2,
}

impl Basis2D {
    /// Builds a basis, rejecting (near-)singular pairs.
    pub fn new(a: Vec2, b: Vec2) -> Result<Self> {
        let basis = Self { a, b };
        basis.check()?;
        Ok(basis)
    }

    pub fn det(&self) -> f64 {
        self.a.cross(self.b)
    }

    /// Angle between `a` and `b` in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        self.a.cross(self.b).abs().atan2(self.a.dot(self.b))
    }

    fn check(&self) -> Result<()> {
        let det = self.det();
        let threshold = DEGENERACY_TOL * self.a.norm() * self.b.norm();
        if !det.is_finite() || det.abs() < threshold || threshold == 0.0 {
            return Err(Error::DegenerateBasis { det, threshold });
        }
        Ok(())
    }

    /// `n1·a + n2·b`.
    pub fn point(&self, n1: i64, n2: i64) -> Vec2 {
        self.a * n1 as f64 + self.b * n2 as f64
    }

    /// Coordinates `(c1, c2)` with `p = c1·a + c2·b`.
    pub fn coordinates(&self, p: Vec2) -> (f64, f64) {
        let det = self.det();
        (p.cross(self.b) / det, self.a.cross(p) / det)
    }

    /// True when `a` is horizontal with positive length and `0 < θ ≤ 90°`.
    pub fn is_canonical(&self) -> bool {
        let tol = HORIZONTAL_TOL_DEG.to_radians();
        self.a.x > 0.0
            && self.a.angle().abs() <= tol
            && self.b.y > 0.0
            && self.a.dot(self.b) >= -1e-12 * self.a.norm() * self.b.norm()
    }
}

/// Finite window of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet2D {
    pub points: Vec<Vec2>,
    pub bounds: Rect,
}

impl PointSet2D {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Same points up to `tol`, ignoring order.
    pub fn same_points(&self, other: &PointSet2D, tol: f64) -> bool {
        self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .all(|p| other.points.iter().any(|q| p.distance(*q) <= tol))
            && other
                .points
                .iter()
                .all(|q| self.points.iter().any(|p| p.distance(*q) <= tol))
    }
}

/// Basis of the reciprocal lattice, the columns of `Q^{-T}`.
///
/// The result satisfies `a·ā = b·b̄ = 1` and `a·b̄ = b·ā = 0`.
pub fn reciprocal_basis(basis: &Basis2D) -> Result<Basis2D> {
    basis.check()?;
    let det = basis.det();
    let Basis2D { a, b } = *basis;
    let a_rec = Vec2::new(b.y / det, -b.x / det);
    let b_rec = Vec2::new(-a.y / det, a.x / det);
    Ok(Basis2D { a: a_rec, b: b_rec })
}

/// Area of the fundamental parallelogram, `|det Q|`.
pub fn fundamental_area(basis: &Basis2D) -> Result<f64> {
    basis.check()?;
    Ok(basis.det().abs())
}

/// Edge tolerance used when deciding whether a point lies inside `bounds`.
fn bounds_tol(basis: &Basis2D) -> f64 {
    1e-9 * basis.a.norm().max(basis.b.norm())
}

/// All lattice points inside `bounds` (closed), ordered by `(n2, n1)`.
pub fn lattice_points(basis: &Basis2D, bounds: &Rect) -> Result<PointSet2D> {
    basis.check()?;
    if bounds.is_empty() {
        return Err(Error::InvalidParameter("empty bounds".into()));
    }
    let (mut c1_min, mut c1_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut c2_min, mut c2_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for corner in bounds.corners() {
        let (c1, c2) = basis.coordinates(corner);
        c1_min = c1_min.min(c1);
        c1_max = c1_max.max(c1);
        c2_min = c2_min.min(c2);
        c2_max = c2_max.max(c2);
    }
    let tol = bounds_tol(basis);
    let mut points = Vec::new();
    for n2 in (c2_min.floor() as i64 - 1)..=(c2_max.ceil() as i64 + 1) {
        for n1 in (c1_min.floor() as i64 - 1)..=(c1_max.ceil() as i64 + 1) {
            let p = basis.point(n1, n2);
            if bounds.contains(p, tol) {
                points.push(p);
            }
        }
    }
    Ok(PointSet2D {
        points,
        bounds: *bounds,
    })
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a.abs(), a.signum(), 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// Largest integer coefficient searched when looking for a horizontal vector.
const CANONICAL_SEARCH: i64 = 64;

/// Rewrites a basis of the same lattice with horizontal `a` (pointing
/// right) and `b` in the upper half plane with `0 < θ ≤ 90°`.
pub fn canonicalize(basis: &Basis2D) -> Result<Basis2D> {
    basis.check()?;
    let tol = HORIZONTAL_TOL_DEG.to_radians();

    // Shortest primitive lattice vector within the angular tolerance of +x.
    let mut best: Option<(i64, i64, Vec2)> = None;
    for i in -CANONICAL_SEARCH..=CANONICAL_SEARCH {
        for j in -CANONICAL_SEARCH..=CANONICAL_SEARCH {
            if (i == 0 && j == 0) || ext_gcd(i, j).0 != 1 {
                continue;
            }
            let v = basis.point(i, j);
            if v.x <= 0.0 || v.angle().abs() > tol {
                continue;
            }
            let shorter = match best {
                None => true,
                Some((_, _, w)) => v.norm() < w.norm() * (1.0 - 1e-12),
            };
            if shorter {
                best = Some((i, j, v));
            }
        }
    }
    let (i0, j0, a) = best.ok_or(Error::NoCanonicalForm {
        tolerance_deg: HORIZONTAL_TOL_DEG,
    })?;

    // Complete (i0, j0) to a unimodular matrix: i0·l − j0·k = 1.
    let (_, x, y) = ext_gcd(i0, -j0);
    let (l, k) = (x, y);
    debug_assert_eq!(i0 * l - j0 * k, 1);
    let (mut k, mut l) = (k, l);
    let mut b = basis.point(k, l);
    if a.cross(b) < 0.0 {
        k = -k;
        l = -l;
        b = -b;
    }
    // Reduce b modulo a so its projection on a lies in [0, |a|).
    let shift = (b.dot(a) / a.dot(a)).floor() as i64;
    k -= shift * i0;
    l -= shift * j0;
    let b = basis.point(k, l);
    Basis2D::new(a, b)
}
