use crate::error::{Error, Result};
use crate::estimation::LinkEstimate;
use crate::geometry::{gdop, LinkGeometry, NoiseSigmas, Position2D};
use crate::scalar::Scalar;

/// GDOP assigned when the single-link geometry is singular or degenerate.
pub const GDOP_CLAMP: f64 = 1e6;

/// |tan| or |cot| beyond which the other closed form is used for a coordinate.
const RAY_FORM_THRESHOLD: f64 = 1e6;

/// Closed-form intersection of the AoA ray with the bistatic ellipse.
pub fn per_link_geo_init<T: Scalar>(est: &LinkEstimate<T>, link: &LinkGeometry<T>) -> Result<Position2D<T>> {
    let b = link.baseline();
    let d = est.d_hat;
    if !(d > b) {
        return Err(Error::InfeasibleEllipse { d: d.to_f64_lossy(), baseline: b.to_f64_lossy() });
    }
    let u = Position2D::from_polar(T::one(), est.theta_hat);
    let denom = T::lit(2.0) * (d + (link.p_rx - link.p_tx).dot(u));
    if denom.abs() <= T::epsilon() * d {
        return Err(Error::TangentRay);
    }
    let r = (d * d - b * b) / denom;
    Ok(link.p_rx + u * r)
}

/// Single-link GDOP with singular or degenerate geometry mapped to [`GDOP_CLAMP`].
pub fn link_gdop<T: Scalar>(p: Position2D<T>, link: &LinkGeometry<T>, s: &NoiseSigmas<T>) -> T {
    match gdop(p, link, s) {
        Ok(g) if g.is_finite() => g.min(T::lit(GDOP_CLAMP)),
        _ => T::lit(GDOP_CLAMP),
    }
}

/// Convex combination with weights 1/GDOP.
pub fn gdop_weighted_init<T: Scalar>(inits: [Position2D<T>; 2], gdops: [T; 2]) -> Position2D<T> {
    let w1 = T::one() / gdops[0];
    let w2 = T::one() / gdops[1];
    (inits[0] * w1 + inits[1] * w2) * (T::one() / (w1 + w2))
}

/// Intersection of the two AoA lines; x from the tangent form, y from the
/// cotangent form, each swapped for the limit value on near-vertical or
/// near-horizontal rays.
pub fn ray_intersection_init<T: Scalar>(theta_hats: [T; 2], rx_positions: [Position2D<T>; 2]) -> Result<Position2D<T>> {
    let [t1, t2] = theta_hats;
    let [p1, p2] = rx_positions;
    if (t1 - t2).sin().abs() < T::lit(1e-12) {
        return Err(Error::ParallelRays);
    }
    let big = T::lit(RAY_FORM_THRESHOLD);
    let (tan1, tan2) = (t1.tan(), t2.tan());
    let x = if tan1.abs() > big {
        p1.x
    } else if tan2.abs() > big {
        p2.x
    } else {
        (p2.y - p1.y + p1.x * tan1 - p2.x * tan2) / (tan1 - tan2)
    };
    let (cot1, cot2) = (t1.cos() / t1.sin(), t2.cos() / t2.sin());
    let y = if cot1.abs() > big {
        p1.y
    } else if cot2.abs() > big {
        p2.y
    } else {
        (p2.x - p1.x + p1.y * cot1 - p2.y * cot2) / (cot1 - cot2)
    };
    Ok(Position2D::new(x, y))
}

/// The GDOP-weighted starting point together with its ingredients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GdopInit<T> {
    pub p0: Position2D<T>,
    pub per_link: [Option<Position2D<T>>; 2],
    pub gdops: [T; 2],
    /// Fewer than two per-link points were available.
    pub fallback: bool,
}

/// Per-link inits weighted by their GDOPs. A link whose ellipse is
/// infeasible drops out; with neither available the ray intersection and
/// then the receiver midpoint are used.
pub fn gdop_init<T: Scalar>(est: &[LinkEstimate<T>; 2], links: &[LinkGeometry<T>; 2]) -> GdopInit<T> {
    let per_link: [Option<Position2D<T>>; 2] = std::array::from_fn(|i| per_link_geo_init(&est[i], &links[i]).ok());
    let gdops: [T; 2] = std::array::from_fn(|i| match per_link[i] {
        Some(p) => link_gdop(p, &links[i], &est[i].sigmas),
        None => T::infinity(),
    });
    let (p0, fallback) = match per_link {
        [Some(a), Some(b)] => (gdop_weighted_init([a, b], gdops), false),
        [Some(a), None] | [None, Some(a)] => (a, true),
        [None, None] => {
            let rx = [links[0].p_rx, links[1].p_rx];
            let p = ray_intersection_init([est[0].theta_hat, est[1].theta_hat], rx)
                .unwrap_or_else(|_| (rx[0] + rx[1]) * T::lit(0.5));
            (p, true)
        }
    };
    GdopInit { p0, per_link, gdops, fallback }
}
