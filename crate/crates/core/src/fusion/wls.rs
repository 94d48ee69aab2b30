use super::init::{gdop_init, link_gdop};
use super::{FusionResult, Scheme, SolverSettings};
use crate::estimation::LinkEstimate;
use crate::geometry::{geometric_jacobian_with, measurement_model, wrap_angle, GeometryLimits, LinkGeometry, Position2D};
use crate::error::Result;
use crate::scalar::Scalar;

/// Jacobians are allowed arbitrarily close to a base station inside the solver.
const SOLVER_LIMITS: GeometryLimits = GeometryLimits { min_range: 1e-9, max_condition: 1e12 };

/// The four sigma- and sqrt(w)-scaled residuals `estimate - model(p)`.
pub fn wls_residuals<T: Scalar>(p: Position2D<T>, est: &[LinkEstimate<T>; 2], links: &[LinkGeometry<T>; 2], weights: [T; 2]) -> Result<[T; 4]> {
    let mut r = [T::zero(); 4];
    for i in 0..2 {
        let (d, th) = measurement_model(p, &links[i])?;
        let sw = weights[i].sqrt();
        r[2 * i] = sw * (est[i].d_hat - d) / est[i].sigmas.sigma_d;
        r[2 * i + 1] = sw * wrap_angle(est[i].theta_hat - th) / est[i].sigmas.sigma_theta;
    }
    Ok(r)
}

/// Sum over links of w_i times the squared sigma-normalised residuals.
pub fn wls_cost<T: Scalar>(p: Position2D<T>, est: &[LinkEstimate<T>; 2], links: &[LinkGeometry<T>; 2], weights: [T; 2]) -> Result<T> {
    Ok(wls_residuals(p, est, links, weights)?.iter().map(|&v| v * v).sum())
}

fn weights_at<T: Scalar>(p: Position2D<T>, est: &[LinkEstimate<T>; 2], links: &[LinkGeometry<T>; 2]) -> [T; 2] {
    std::array::from_fn(|i| T::one() / link_gdop(p, &links[i], &est[i].sigmas))
}

fn cost_or_inf<T: Scalar>(p: Position2D<T>, est: &[LinkEstimate<T>; 2], links: &[LinkGeometry<T>; 2], w: [T; 2]) -> T {
    match wls_cost(p, est, links, w) {
        Ok(c) if c.is_finite() => c,
        _ => T::infinity(),
    }
}

/// GDOP-WLS with weights frozen at the initialization point.
pub fn solve_gdop_wls<T: Scalar>(est: &[LinkEstimate<T>; 2], links: &[LinkGeometry<T>; 2], settings: &SolverSettings) -> FusionResult<T> {
    solve_gdop_wls_with(est, links, settings, false)
}

/// Levenberg-Marquardt from the GDOP-weighted init. With `refresh_weights`
/// the GDOP weights are re-evaluated at every accepted iterate.
pub fn solve_gdop_wls_with<T: Scalar>(
    est: &[LinkEstimate<T>; 2],
    links: &[LinkGeometry<T>; 2],
    settings: &SolverSettings,
    refresh_weights: bool,
) -> FusionResult<T> {
    let init = gdop_init(est, links);
    let p0 = init.p0;
    let mut w = weights_at(p0, est, links);
    let mut p = p0;
    let mut cost = cost_or_inf(p, est, links, w);
    let mut lambda = T::lit(settings.lm_lambda_init);
    let factor = T::lit(settings.lm_lambda_factor);
    let gtol = T::lit(settings.gradient_tol);
    let stol = T::lit(settings.step_tol);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < settings.max_iters {
        let Ok(r) = wls_residuals(p, est, links, w) else { break };
        // residual Jacobian = -sqrt(w)/sigma * geometric Jacobian rows
        let mut jr = [[T::zero(); 2]; 4];
        let mut ok = true;
        for i in 0..2 {
            match geometric_jacobian_with(p, &links[i], &SOLVER_LIMITS) {
                Ok(g) => {
                    let sw = w[i].sqrt();
                    for c in 0..2 {
                        jr[2 * i][c] = -sw * g[0][c] / est[i].sigmas.sigma_d;
                        jr[2 * i + 1][c] = -sw * g[1][c] / est[i].sigmas.sigma_theta;
                    }
                }
                Err(_) => ok = false,
            }
        }
        if !ok {
            break;
        }
        let mut jtj = [[T::zero(); 2]; 2];
        let mut grad = [T::zero(); 2];
        for k in 0..4 {
            for a in 0..2 {
                grad[a] = grad[a] + jr[k][a] * r[k];
                for b in 0..2 {
                    jtj[a][b] = jtj[a][b] + jr[k][a] * jr[k][b];
                }
            }
        }
        if grad[0].abs().max(grad[1].abs()) < gtol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        // inner loop raises the damping until a step lowers the cost
        for _ in 0..32 {
            let a00 = jtj[0][0] * (T::one() + lambda);
            let a11 = jtj[1][1] * (T::one() + lambda);
            let a01 = jtj[0][1];
            let det = a00 * a11 - a01 * a01;
            if !(det.abs() > T::zero()) {
                lambda = lambda * factor;
                continue;
            }
            let dx = (-grad[0] * a11 + grad[1] * a01) / det;
            let dy = (-grad[1] * a00 + grad[0] * a01) / det;
            let step = Position2D::new(dx, dy);
            let cand = p + step;
            let c_new = cost_or_inf(cand, est, links, w);
            if c_new <= cost {
                p = cand;
                cost = c_new;
                lambda = (lambda / factor).max(T::lit(1e-15));
                accepted = true;
                if step.norm() <= stol * (p.norm() + stol) {
                    converged = true;
                }
                break;
            }
            lambda = lambda * factor;
        }
        if !accepted {
            // no damping produces descent: already at a minimum to machine precision
            converged = true;
            break;
        }
        if converged {
            break;
        }
        if refresh_weights {
            w = weights_at(p, est, links);
            cost = cost_or_inf(p, est, links, w);
        }
    }
    FusionResult {
        p_hat: p,
        p_init: p0,
        scheme: Scheme::GdopWls,
        iterations,
        converged: converged && cost.is_finite(),
        cost_final: cost,
        fallback: init.fallback,
    }
}
