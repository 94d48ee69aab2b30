//! Planar scenario geometry: positions, the hexagonal region of interest,
//! the bistatic measurement model and its linearisation.
//!
//! All angles stored here are in the global frame (counter-clockwise from
//! the +x axis). Receiver-local angles only appear inside the beamforming
//! conversions.

use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A point in the horizontal plane, meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Position2D<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Position2D<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn from_polar(r: T, angle: T) -> Self {
        Self::new(r * angle.cos(), r * angle.sin())
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> T {
        self.x * self.x + self.y * self.y
    }

    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: Self) -> T {
        (self - other).norm()
    }

    /// Four-quadrant angle of the vector, in (-pi, pi].
    pub fn angle(self) -> T {
        wrap_angle(self.y.atan2(self.x))
    }

    pub fn rotate(self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> Position2D<U> {
        Position2D::new(U::lit(self.x.to_f64_lossy()), U::lit(self.y.to_f64_lossy()))
    }
}

impl<T: Scalar> Add for Position2D<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Position2D<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Mul<T> for Position2D<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl<T: Scalar> Neg for Position2D<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Regular hexagon. `orientation` is the angle of the first vertex as seen
/// from the center; zero gives a flat-top hexagon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HexRegion<T> {
    pub center: Position2D<T>,
    pub circumradius: T,
    pub orientation: T,
}

impl<T: Scalar> HexRegion<T> {
    pub fn new(center: Position2D<T>, circumradius: T, orientation: T) -> Result<Self> {
        if !(circumradius > T::zero()) || !center.is_finite() || !orientation.is_finite() {
            return Err(Error::Config(format!(
                "hexagon needs a finite center and positive circumradius, got {circumradius}"
            )));
        }
        Ok(Self { center, circumradius, orientation })
    }

    pub fn vertex(&self, k: usize) -> Position2D<T> {
        let a = self.orientation + T::FRAC_PI_3() * T::from_usize_lossy(k % 6);
        self.center + Position2D::from_polar(self.circumradius, a)
    }

    pub fn vertices(&self) -> [Position2D<T>; 6] {
        std::array::from_fn(|k| self.vertex(k))
    }

    pub fn apothem(&self) -> T {
        self.circumradius * T::lit(3.0).sqrt() / T::lit(2.0)
    }

    pub fn diameter(&self) -> T {
        self.circumradius * T::lit(2.0)
    }

    /// Closed hexagon membership.
    pub fn contains(&self, p: Position2D<T>) -> bool {
        let q = (p - self.center).rotate(-self.orientation);
        let a = self.apothem() * (T::one() + T::lit(1e-12));
        (0..3).all(|k| {
            let normal_angle = T::FRAC_PI_6() + T::FRAC_PI_3() * T::from_usize_lossy(k);
            let (s, c) = normal_angle.sin_cos();
            (q.x * c + q.y * s).abs() <= a
        })
    }

    /// Index in 0..6 of the center-vertex-vertex triangle holding `p`.
    pub fn sextant(&self, p: Position2D<T>) -> usize {
        let a = wrap_angle((p - self.center).angle() - self.orientation);
        let a = if a < T::zero() { a + T::two_pi() } else { a };
        let k = (a / T::FRAC_PI_3()).floor().to_usize().unwrap_or(0);
        k.min(5)
    }

    /// Axis-aligned bounding box as (min corner, max corner).
    pub fn bounding_box(&self) -> (Position2D<T>, Position2D<T>) {
        let v = self.vertices();
        let mut lo = v[0];
        let mut hi = v[0];
        for p in &v[1..] {
            lo = Position2D::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Position2D::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    /// Uniform sample over the hexagon.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Position2D<T> {
        let k = rng.random_range(0..6usize);
        let mut u: f64 = rng.random();
        let mut v: f64 = rng.random();
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let a = self.vertex(k) - self.center;
        let b = self.vertex(k + 1) - self.center;
        self.center + a * T::lit(u) + b * T::lit(v)
    }
}

/// Uniform draw from the region of interest.
pub fn sample_roi<T: Scalar, R: Rng + ?Sized>(region: &HexRegion<T>, rng: &mut R) -> Position2D<T> {
    region.sample(rng)
}

/// Transmitter and one receiver forming a bistatic pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry<T> {
    pub p_tx: Position2D<T>,
    pub p_rx: Position2D<T>,
    /// 1 or 2.
    pub rx_index: u8,
}

impl<T: Scalar> LinkGeometry<T> {
    pub fn new(p_tx: Position2D<T>, p_rx: Position2D<T>, rx_index: u8) -> Result<Self> {
        if p_tx == p_rx {
            return Err(Error::DegenerateGeometry("transmitter and receiver coincide".into()));
        }
        if !(1..=2).contains(&rx_index) {
            return Err(Error::Config(format!("rx_index must be 1 or 2, got {rx_index}")));
        }
        Ok(Self { p_tx, p_rx, rx_index })
    }

    pub fn baseline(&self) -> T {
        self.p_tx.distance(self.p_rx)
    }
}

/// Per-link measurement standard deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSigmas<T> {
    pub sigma_d: T,
    pub sigma_theta: T,
}

impl<T: Scalar> NoiseSigmas<T> {
    pub fn new(sigma_d: T, sigma_theta: T) -> Result<Self> {
        if !(sigma_d > T::zero() && sigma_theta > T::zero()) {
            return Err(Error::Config(format!(
                "sigmas must be positive, got ({sigma_d}, {sigma_theta})"
            )));
        }
        Ok(Self { sigma_d, sigma_theta })
    }

    pub fn scaled(self, k: T) -> Self {
        Self { sigma_d: self.sigma_d * k, sigma_theta: self.sigma_theta * k }
    }
}

/// Thresholds guarding the linearised geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometryLimits {
    /// Ranges below this (m) are treated as degenerate.
    pub min_range: f64,
    /// Largest admissible condition number of the weighted normal matrix.
    pub max_condition: f64,
}

impl Default for GeometryLimits {
    fn default() -> Self {
        Self { min_range: 1.0, max_condition: 1e12 }
    }
}

/// Row-major 2x2 matrix.
pub type Matrix2<T> = [[T; 2]; 2];

/// Maps any finite angle to (-pi, pi].
pub fn wrap_angle<T: Scalar>(delta: T) -> T {
    let pi = T::PI();
    let tau = T::two_pi();
    let mut r = delta - tau * ((delta + pi) / tau).floor();
    // floor can land one period off when delta + pi rounds across a multiple
    if r < -pi {
        r = r + tau;
    } else if r >= pi {
        r = r - tau;
    }
    if r <= -pi {
        pi
    } else {
        r
    }
}

/// (R_tx, R_rx): distances from the target to the transmitter and receiver.
pub fn bistatic_distances<T: Scalar>(p: Position2D<T>, g: &LinkGeometry<T>) -> (T, T) {
    (p.distance(g.p_tx), p.distance(g.p_rx))
}

/// Noiseless (bistatic distance, global AoA) for a target at `p`.
pub fn measurement_model<T: Scalar>(p: Position2D<T>, g: &LinkGeometry<T>) -> Result<(T, T)> {
    let (r_tx, r_rx) = bistatic_distances(p, g);
    if r_rx == T::zero() {
        return Err(Error::DegenerateGeometry("target at receiver".into()));
    }
    Ok((r_tx + r_rx, (p - g.p_rx).angle()))
}

/// Jacobian of (d, theta) with respect to (x, y).
pub fn geometric_jacobian<T: Scalar>(p: Position2D<T>, g: &LinkGeometry<T>) -> Result<Matrix2<T>> {
    geometric_jacobian_with(p, g, &GeometryLimits::default())
}

pub fn geometric_jacobian_with<T: Scalar>(
    p: Position2D<T>,
    g: &LinkGeometry<T>,
    limits: &GeometryLimits,
) -> Result<Matrix2<T>> {
    let (r_tx, r_rx) = bistatic_distances(p, g);
    let eps = T::lit(limits.min_range);
    if r_tx < eps || r_rx < eps {
        return Err(Error::DegenerateGeometry(format!(
            "range below {} m (R_tx = {r_tx}, R_rx = {r_rx})",
            limits.min_range
        )));
    }
    let dt = p - g.p_tx;
    let dr = p - g.p_rx;
    let r_rx2 = r_rx * r_rx;
    Ok([
        [dt.x / r_tx + dr.x / r_rx, dt.y / r_tx + dr.y / r_rx],
        [-dr.y / r_rx2, dr.x / r_rx2],
    ])
}

/// Fisher information J^T Sigma^-1 J for one link.
pub fn weighted_normal_matrix<T: Scalar>(j: &Matrix2<T>, s: &NoiseSigmas<T>) -> Matrix2<T> {
    let wd = T::one() / (s.sigma_d * s.sigma_d);
    let wt = T::one() / (s.sigma_theta * s.sigma_theta);
    let mut out = [[T::zero(); 2]; 2];
    for (a, row) in out.iter_mut().enumerate() {
        for (b, cell) in row.iter_mut().enumerate() {
            *cell = wd * j[0][a] * j[0][b] + wt * j[1][a] * j[1][b];
        }
    }
    out
}

/// Condition number of a symmetric positive semi-definite 2x2 matrix.
pub fn condition_number_sym<T: Scalar>(m: &Matrix2<T>) -> T {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let half = tr / T::lit(2.0);
    let disc = (half * half - det).max(T::zero()).sqrt();
    let lmax = half + disc;
    // det / lmax avoids the cancellation in half - disc
    let lmin = if lmax > T::zero() { det / lmax } else { T::zero() };
    if lmin <= T::zero() {
        T::infinity()
    } else {
        lmax / lmin
    }
}

/// Geometric dilution of precision of a single link, meters.
pub fn gdop<T: Scalar>(p: Position2D<T>, g: &LinkGeometry<T>, s: &NoiseSigmas<T>) -> Result<T> {
    gdop_with(p, g, s, &GeometryLimits::default())
}

pub fn gdop_with<T: Scalar>(
    p: Position2D<T>,
    g: &LinkGeometry<T>,
    s: &NoiseSigmas<T>,
    limits: &GeometryLimits,
) -> Result<T> {
    let j = geometric_jacobian_with(p, g, limits)?;
    gdop_from_normal(&weighted_normal_matrix(&j, s), limits)
}

/// sqrt(trace(F^-1)) for a symmetric 2x2 information matrix.
pub fn gdop_from_normal<T: Scalar>(f: &Matrix2<T>, limits: &GeometryLimits) -> Result<T> {
    let cond = condition_number_sym(f);
    if !(cond <= T::lit(limits.max_condition)) {
        return Err(Error::SingularGeometry(cond.to_f64_lossy()));
    }
    let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
    Ok(((f[0][0] + f[1][1]) / det).sqrt())
}
