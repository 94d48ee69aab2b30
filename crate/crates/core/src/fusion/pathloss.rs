use super::init::{gdop_init, per_link_geo_init, ray_intersection_init};
use super::simplex::nelder_mead;
use super::{FusionResult, Scheme, SolverSettings};
use crate::error::{Error, Result};
use crate::estimation::LinkEstimate;
use crate::geometry::{bistatic_distances, measurement_model, wrap_angle, LinkGeometry, Position2D};
use crate::scalar::Scalar;

/// (alpha_i, beta_i) = (R_tx^-2 R_rx^-2, R_tx^-2 R_rx^-1) at `p`.
pub fn pl_weights<T: Scalar>(p: Position2D<T>, link: &LinkGeometry<T>) -> Result<(T, T)> {
    let (r_tx, r_rx) = bistatic_distances(p, link);
    if r_tx == T::zero() || r_rx == T::zero() {
        return Err(Error::DegenerateGeometry("path-loss weight at a base station".into()));
    }
    let a = T::one() / (r_tx * r_tx * r_rx * r_rx);
    let b = T::one() / (r_tx * r_tx * r_rx);
    Ok((a, b))
}

/// Path-loss weighted L1 cost; distance and angle parts are each
/// normalised by their weight sums, weights evaluated at `p`.
pub fn pl_cost<T: Scalar>(p: Position2D<T>, est: &[LinkEstimate<T>; 2], links: &[LinkGeometry<T>; 2]) -> Result<T> {
    let (mut num_d, mut den_d, mut num_t, mut den_t) = (T::zero(), T::zero(), T::zero(), T::zero());
    for i in 0..2 {
        let (a, b) = pl_weights(p, &links[i])?;
        let (d, th) = measurement_model(p, &links[i])?;
        num_d = num_d + a * (est[i].d_hat - d).abs();
        den_d = den_d + a;
        num_t = num_t + b * wrap_angle(est[i].theta_hat - th).abs();
        den_t = den_t + b;
    }
    Ok(num_d / den_d + num_t / den_t)
}

fn minimise<T: Scalar>(
    est: &[LinkEstimate<T>; 2],
    links: &[LinkGeometry<T>; 2],
    settings: &SolverSettings,
    p0: Position2D<T>,
    scheme: Scheme,
    fallback: bool,
) -> FusionResult<T> {
    let out = nelder_mead(
        |p| pl_cost(p, est, links).unwrap_or(T::infinity()),
        p0,
        T::lit(settings.simplex_initial_step_m),
        T::lit(settings.simplex_tol_m),
        settings.simplex_max_iters,
        settings.simplex_restarts,
    );
    FusionResult {
        p_hat: out.best,
        p_init: p0,
        scheme,
        iterations: out.iterations,
        converged: out.converged && out.cost.is_finite(),
        cost_final: out.cost,
        fallback,
    }
}

/// Path-loss cost from the unweighted ray intersection. Parallel rays fall
/// back to the midpoint of the per-link inits (flagged).
pub fn solve_gi_pl<T: Scalar>(est: &[LinkEstimate<T>; 2], links: &[LinkGeometry<T>; 2], settings: &SolverSettings) -> FusionResult<T> {
    let rx = [links[0].p_rx, links[1].p_rx];
    let (p0, fallback) = match ray_intersection_init([est[0].theta_hat, est[1].theta_hat], rx) {
        Ok(p) if p.is_finite() => (p, false),
        _ => {
            let inits: Vec<_> = (0..2).filter_map(|i| per_link_geo_init(&est[i], &links[i]).ok()).collect();
            let p = match inits.as_slice() {
                [a, b] => (*a + *b) * T::lit(0.5),
                [a] => *a,
                _ => (rx[0] + rx[1]) * T::lit(0.5),
            };
            (p, true)
        }
    };
    minimise(est, links, settings, p0, Scheme::GiPl, fallback)
}

/// Path-loss cost from the GDOP-weighted init.
pub fn solve_gdop_pl<T: Scalar>(est: &[LinkEstimate<T>; 2], links: &[LinkGeometry<T>; 2], settings: &SolverSettings) -> FusionResult<T> {
    let init = gdop_init(est, links);
    minimise(est, links, settings, init.p0, Scheme::GdopPl, init.fallback)
}
