use crate::geometry::Position2D;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplexOutcome<T> {
    pub best: Position2D<T>,
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Nelder-Mead in the plane with standard coefficients. After the simplex
/// collapses it is rebuilt around the best vertex `restarts` times, each
/// time ten times smaller, which guards against premature collapse on
/// nonsmooth costs.
pub fn nelder_mead<T: Scalar, F: FnMut(Position2D<T>) -> T>(
    mut f: F,
    start: Position2D<T>,
    initial_step: T,
    tol: T,
    max_iters: usize,
    restarts: usize,
) -> SimplexOutcome<T> {
    let mut eval = |p: Position2D<T>| {
        let v = f(p);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut best = start;
    let mut best_cost = eval(start);
    let mut iterations = 0;
    let mut converged = false;
    for round in 0..=restarts {
        let step = (initial_step * T::lit(0.1).powi(round as i32)).max(tol * two);
        let mut v = [best, best + Position2D::new(step, T::zero()), best + Position2D::new(T::zero(), step)];
        let mut c = [best_cost, eval(v[1]), eval(v[2])];
        converged = false;
        while iterations < max_iters {
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&a, &b| c[a].partial_cmp(&c[b]).unwrap_or(std::cmp::Ordering::Equal));
            v = idx.map(|k| v[k]);
            c = idx.map(|k| c[k]);
            let diam = v[0].distance(v[1]).max(v[0].distance(v[2]));
            if diam < tol {
                converged = true;
                break;
            }
            iterations += 1;
            let centroid = (v[0] + v[1]) * half;
            let xr = centroid + (centroid - v[2]);
            let fr = eval(xr);
            if fr < c[0] {
                let xe = centroid + (centroid - v[2]) * two;
                let fe = eval(xe);
                if fe < fr {
                    v[2] = xe;
                    c[2] = fe;
                } else {
                    v[2] = xr;
                    c[2] = fr;
                }
            } else if fr < c[1] {
                v[2] = xr;
                c[2] = fr;
            } else {
                let (xc, fc) = if fr < c[2] {
                    let x = centroid + (xr - centroid) * half;
                    (x, eval(x))
                } else {
                    let x = centroid + (v[2] - centroid) * half;
                    (x, eval(x))
                };
                if fc < c[2].min(fr) {
                    v[2] = xc;
                    c[2] = fc;
                } else {
                    for k in 1..3 {
                        v[k] = v[0] + (v[k] - v[0]) * half;
                        c[k] = eval(v[k]);
                    }
                }
            }
        }
        let k = (0..3).min_by(|&a, &b| c[a].partial_cmp(&c[b]).unwrap_or(std::cmp::Ordering::Equal)).unwrap();
        if c[k] <= best_cost {
            best = v[k];
            best_cost = c[k];
        }
        if iterations >= max_iters {
            break;
        }
    }
    SimplexOutcome { best, cost: best_cost, iterations, converged }
}
