use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_trial_at, TrialContext};
use crate::error::{Error, Result};
use crate::geometry::GeometryLimits;
use crate::seeds::{derive_seed, derive_tagged};
use crate::{Position, Scheme};

/// Rejection attempts before a cell is left with fewer trials.
const MAX_DRAWS_PER_TRIAL: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub trials_per_cell: usize,
}

/// One (cell, scheme) entry. `mean_error` is `None` for cells whose center
/// lies outside the hexagon, which are not sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub x: f64,
    pub y: f64,
    pub scheme: Scheme,
    pub mean_error: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub spec: GridSpec,
    pub cell_size: [f64; 2],
    pub cells: Vec<HeatmapCell>,
}

impl HeatmapGrid {
    pub fn scheme_cells(&self, scheme: Scheme) -> impl Iterator<Item = &HeatmapCell> {
        self.cells.iter().filter(move |c| c.scheme == scheme)
    }

    /// Largest over median per-cell mean error.
    pub fn max_to_median(&self, scheme: Scheme) -> f64 {
        let mut v: Vec<f64> = self.scheme_cells(scheme).filter_map(|c| c.mean_error).collect();
        v.sort_by(f64::total_cmp);
        v.last().copied().unwrap_or(f64::NAN) / super::nearest_rank(&v, 50.0)
    }
}

/// Per-cell mean errors over the ROI bounding box. Targets are uniform in
/// the part of each cell inside the hexagon; failures count at the ROI
/// diameter.
pub fn error_heatmap(ctx: &TrialContext, grid: GridSpec, schemes: &[Scheme], seed: u64) -> Result<HeatmapGrid> {
    if grid.nx == 0 || grid.ny == 0 || grid.trials_per_cell == 0 {
        return Err(Error::Config("heatmap grid and trial count must be positive".into()));
    }
    ctx.check_schemes(schemes)?;
    let roi = ctx.chain.cfg.roi::<f64>();
    let (lo, hi) = roi.bounding_box();
    let w = (hi.x - lo.x) / grid.nx as f64;
    let h = (hi.y - lo.y) / grid.ny as f64;
    let clamp = roi.diameter();
    let min_range = GeometryLimits::default().min_range;
    let stations: Vec<Position> =
        std::iter::once(ctx.chain.cfg.tx_position()).chain((0..2).map(|i| ctx.chain.cfg.rx_position(i))).collect();
    let per_cell: Vec<Vec<HeatmapCell>> = (0..grid.nx * grid.ny)
        .into_par_iter()
        .map(|cell| {
            let (ix, iy) = (cell % grid.nx, cell / grid.nx);
            let x0 = lo.x + ix as f64 * w;
            let y0 = lo.y + iy as f64 * h;
            let center = Position::new(x0 + w / 2.0, y0 + h / 2.0);
            let empty = || schemes.iter().map(|&scheme| HeatmapCell { x: center.x, y: center.y, scheme, mean_error: None, count: 0 }).collect();
            if !roi.contains(center) {
                return empty();
            }
            let mut sums = vec![0.0; schemes.len()];
            let mut count = 0;
            for k in 0..grid.trials_per_cell {
                let trial = cell * grid.trials_per_cell + k;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_tagged(seed, trial as u64, 0));
                let p = (0..MAX_DRAWS_PER_TRIAL).map(|_| Position::new(x0 + rng.random::<f64>() * w, y0 + rng.random::<f64>() * h)).find(|&p| {
                    roi.contains(p) && stations.iter().all(|s| p.distance(*s) >= min_range)
                });
                let Some(p) = p else { continue };
                let r = run_trial_at(ctx, p, schemes, trial, derive_seed(seed, trial as u64));
                for (s, o) in sums.iter_mut().zip(&r.outcomes) {
                    *s += o.error_m.unwrap_or(clamp);
                }
                count += 1;
            }
            if count == 0 {
                return empty();
            }
            schemes
                .iter()
                .zip(sums)
                .map(|(&scheme, s)| HeatmapCell { x: center.x, y: center.y, scheme, mean_error: Some(s / count as f64), count })
                .collect()
        })
        .collect();
    let mut cells: Vec<HeatmapCell> = per_cell.into_iter().flatten().collect();
    // long form grouped by scheme
    cells.sort_by_key(|c| schemes.iter().position(|&s| s == c.scheme));
    Ok(HeatmapGrid { spec: grid, cell_size: [w, h], cells })
}
