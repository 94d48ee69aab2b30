use std::time::Instant;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::{fuse, signal_f32, trial_target, TrialContext};
use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::{Estimate, Scheme};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scheme: Scheme,
    pub n_reps: usize,
    pub mean_ms: f64,
    /// Mean latency over GI-PL's.
    pub relative: f64,
}

/// Wall-clock latency of the fusion stage of each scheme over the same
/// `n_reps` pre-simulated observations. The shared sensing front end is not
/// timed. GI-PL is always measured as the reference.
pub fn bench_runtime(ctx: &TrialContext, schemes: &[Scheme], n_reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if n_reps < 30 {
        return Err(Error::Config(format!("benchmark needs >= 30 repetitions, got {n_reps}")));
    }
    ctx.check_schemes(schemes)?;
    let mut inputs: Vec<([Estimate; 2], [Vec<Complex<f32>>; 2])> = Vec::with_capacity(n_reps);
    let mut k = 0u64;
    while inputs.len() < n_reps {
        let p = trial_target(&ctx.chain, seed, k as usize);
        if let Ok(obs) = ctx.chain.observe(p, derive_seed(seed, k)) {
            let est = std::array::from_fn(|i| ctx.chain.attach(&obs[i].1, i, ctx.sigmas[i]));
            inputs.push((est, [signal_f32(&obs[0].0), signal_f32(&obs[1].0)]));
        }
        k += 1;
    }
    let time = |scheme: Scheme| -> f64 {
        let start = Instant::now();
        for (est, sig) in &inputs {
            let r = fuse(ctx, scheme, est, Some([&sig[0], &sig[1]]));
            std::hint::black_box(&r);
        }
        start.elapsed().as_secs_f64() * 1e3 / n_reps as f64
    };
    let reference = time(Scheme::GiPl);
    Ok(schemes
        .iter()
        .map(|&scheme| {
            let mean_ms = if scheme == Scheme::GiPl { reference } else { time(scheme) };
            BenchRow { scheme, n_reps, mean_ms, relative: mean_ms / reference }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::SensingChain;
    use crate::{ScenarioConfig, Sigmas};

    #[test]
    fn rows_and_reference() {
        let chain = SensingChain::new(&ScenarioConfig::default()).unwrap();
        let s = Sigmas::new(0.3, 0.01).unwrap();
        let ctx = TrialContext::new(chain, [s, s]);
        let rows = bench_runtime(&ctx, &[Scheme::GiPl, Scheme::GdopWls, Scheme::GdopInit], 30, 1).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].relative, 1.0);
        assert!(rows.iter().all(|r| r.mean_ms > 0.0));
        assert!(bench_runtime(&ctx, &[Scheme::GiPl], 29, 1).is_err());
    }
}
