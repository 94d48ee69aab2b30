//! Monte-Carlo experiments over the sensing chain and the fusion schemes.

pub mod bench;
pub mod dataset;
pub mod heatmap;
pub mod metrics;
pub mod output;
pub mod sweep;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{gdop_init, solve_gdop_pl, solve_gdop_wls_with, solve_gi_pl};
use crate::neural::LearnedModel;
use crate::sensing::{calibrate_sigmas, SensingChain};
use crate::seeds::{derive_seed, derive_tagged};
use crate::{Chain, Estimate, Position, Scheme, Sigmas, SolverSettings};

pub use metrics::{mean_and_se, nearest_rank, MetricsSummary};

/// Tag of the target-position stream inside a trial.
const TARGET_TAG: u64 = 0;

/// Seed of the sigma calibration run that accompanies master seed `seed`.
/// Kept apart from the trial seeds so evaluation draws are out of sample.
pub fn calibration_seed(seed: u64) -> u64 {
    derive_tagged(seed, u64::MAX, 0xca1)
}

/// Trained networks for the learned schemes; either may be absent.
#[derive(Clone, Debug, Default)]
pub struct Models {
    pub mlp: Option<LearnedModel<f64>>,
    pub cnn: Option<LearnedModel<f32>>,
}

/// Everything fixed across the trials of one experiment.
#[derive(Clone, Debug)]
pub struct TrialContext {
    pub chain: Chain,
    pub sigmas: [Sigmas; 2],
    pub models: Models,
}

impl TrialContext {
    pub fn new(chain: Chain, sigmas: [Sigmas; 2]) -> Self {
        Self { chain, sigmas, models: Models::default() }
    }

    /// Builds the chain and calibrates sigmas with the configured draw count.
    pub fn calibrated(chain: Chain, seed: u64) -> Result<Self> {
        let n = chain.cfg.estimation.calibration_draws;
        let sigmas = calibrate_sigmas(&chain, n, calibration_seed(seed))?;
        Ok(Self::new(chain, sigmas))
    }

    pub fn with_models(mut self, models: Models) -> Self {
        self.models = models;
        self
    }

    pub fn solver(&self) -> &SolverSettings {
        &self.chain.cfg.solver
    }

    /// Learned schemes need their model.
    pub fn check_schemes(&self, schemes: &[Scheme]) -> Result<()> {
        for s in schemes {
            let missing = match s {
                Scheme::PfMlp => self.models.mlp.is_none(),
                Scheme::SfCnn => self.models.cnn.is_none(),
                _ => false,
            };
            if missing {
                return Err(Error::Config(format!("scheme {s} requested without a trained model")));
            }
        }
        Ok(())
    }
}

/// One scheme's result inside a trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    pub p_hat: Option<Position>,
    pub error_m: Option<f64>,
    pub converged: bool,
    pub fallback: bool,
    pub iterations: usize,
    pub failure: Option<String>,
}

impl SchemeOutcome {
    fn failed(scheme: Scheme, why: String) -> Self {
        Self { scheme, p_hat: None, error_m: None, converged: false, fallback: false, iterations: 0, failure: Some(why) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub tx_power_dbm: f64,
    pub p_true: Position,
    /// Absent when the sensing chain itself failed.
    pub estimates: Option<[Estimate; 2]>,
    pub outcomes: Vec<SchemeOutcome>,
}

impl TrialRecord {
    pub fn outcome(&self, scheme: Scheme) -> Option<&SchemeOutcome> {
        self.outcomes.iter().find(|o| o.scheme == scheme)
    }
}

/// Fuses one set of estimates with one scheme.
pub fn fuse(
    ctx: &TrialContext,
    scheme: Scheme,
    est: &[Estimate; 2],
    signals: Option<[&[Complex<f32>]; 2]>,
) -> Result<(Position, bool, bool, usize)> {
    let links = [ctx.chain.front_ends[0].link, ctx.chain.front_ends[1].link];
    let s = ctx.solver();
    let from = |r: crate::Fusion| (r.p_hat, r.converged, r.fallback, r.iterations);
    Ok(match scheme {
        Scheme::GiPl => from(solve_gi_pl(est, &links, s)),
        Scheme::GdopPl => from(solve_gdop_pl(est, &links, s)),
        Scheme::GdopWls => from(solve_gdop_wls_with(est, &links, s, ctx.chain.cfg.fusion.refresh_gdop_weights)),
        Scheme::GdopInit => {
            let g = gdop_init(est, &links);
            (g.p0, true, g.fallback, 0)
        }
        Scheme::PfMlp => {
            let m = ctx.models.mlp.as_ref().ok_or_else(|| Error::Config("no PF-MLP model".into()))?;
            (m.predict_estimates(est)?, true, false, 0)
        }
        Scheme::SfCnn => {
            let m = ctx.models.cnn.as_ref().ok_or_else(|| Error::Config("no SF-CNN model".into()))?;
            let y = signals.ok_or_else(|| Error::Config("SF-CNN needs the received signals".into()))?;
            (m.predict_signals(y)?, true, false, 0)
        }
    })
}

/// Received samples averaged over symbols, in the dump's f32 precision.
pub fn signal_f32(y: &crate::Signal) -> Vec<Complex<f32>> {
    y.symbol_average().iter().map(|c| Complex::new(c.re as f32, c.im as f32)).collect()
}

/// Trial at a given target. Scheme failures are recorded, never raised.
pub fn run_trial_at(ctx: &TrialContext, p: Position, schemes: &[Scheme], trial: usize, seed: u64) -> TrialRecord {
    let mut rec = TrialRecord {
        trial,
        seed,
        tx_power_dbm: ctx.chain.cfg.power.tx_power_dbm,
        p_true: p,
        estimates: None,
        outcomes: Vec::with_capacity(schemes.len()),
    };
    let obs = match ctx.chain.observe(p, seed) {
        Ok(o) => o,
        Err(e) => {
            rec.outcomes = schemes.iter().map(|&s| SchemeOutcome::failed(s, format!("sensing: {e}"))).collect();
            return rec;
        }
    };
    let est: [Estimate; 2] = std::array::from_fn(|i| ctx.chain.attach(&obs[i].1, i, ctx.sigmas[i]));
    rec.estimates = Some(est);
    let sig = schemes.contains(&Scheme::SfCnn).then(|| [signal_f32(&obs[0].0), signal_f32(&obs[1].0)]);
    for &scheme in schemes {
        let y = sig.as_ref().map(|s| [s[0].as_slice(), s[1].as_slice()]);
        let out = match fuse(ctx, scheme, &est, y) {
            Ok((p_hat, converged, fallback, iterations)) if p_hat.is_finite() => SchemeOutcome {
                scheme,
                p_hat: Some(p_hat),
                error_m: Some(p_hat.distance(p)),
                converged,
                fallback,
                iterations,
                failure: None,
            },
            Ok(_) => SchemeOutcome::failed(scheme, "non-finite estimate".into()),
            Err(e) => SchemeOutcome::failed(scheme, e.to_string()),
        };
        rec.outcomes.push(out);
    }
    rec
}

/// Target of trial `trial` under master seed `seed`.
pub fn trial_target(chain: &Chain, seed: u64, trial: usize) -> Position {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_tagged(seed, trial as u64, TARGET_TAG));
    chain.sample_target(&mut rng)
}

/// Trial `trial` of master seed `seed`: target uniform in the ROI.
pub fn run_trial(ctx: &TrialContext, schemes: &[Scheme], trial: usize, seed: u64) -> TrialRecord {
    let p = trial_target(&ctx.chain, seed, trial);
    run_trial_at(ctx, p, schemes, trial, derive_seed(seed, trial as u64))
}

/// What to do with a scheme's failed trials when aggregating.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Count them at the ROI diameter.
    #[default]
    Clamp,
    Exclude,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub metrics: MetricsSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRun {
    pub records: Vec<TrialRecord>,
    pub summaries: Vec<SchemeSummary>,
}

impl MonteCarloRun {
    pub fn summary(&self, scheme: Scheme) -> Option<&MetricsSummary> {
        self.summaries.iter().find(|s| s.scheme == scheme).map(|s| &s.metrics)
    }
}

/// Per-scheme errors of a record set under a failure policy.
pub fn scheme_errors(records: &[TrialRecord], scheme: Scheme, policy: FailurePolicy, clamp_m: f64) -> (Vec<f64>, usize) {
    let mut errors = Vec::with_capacity(records.len());
    let mut failed = 0;
    for r in records {
        match r.outcome(scheme).and_then(|o| o.error_m) {
            Some(e) => errors.push(e),
            None => {
                failed += 1;
                if policy == FailurePolicy::Clamp {
                    errors.push(clamp_m);
                }
            }
        }
    }
    (errors, failed)
}

pub fn summarize(records: &[TrialRecord], schemes: &[Scheme], policy: FailurePolicy, clamp_m: f64) -> Vec<SchemeSummary> {
    schemes
        .iter()
        .map(|&scheme| {
            let (errors, failed) = scheme_errors(records, scheme, policy, clamp_m);
            SchemeSummary { scheme, metrics: MetricsSummary::from_errors(&errors, failed) }
        })
        .collect()
}

/// Trials `0..n` of master seed `seed`. Each trial's seeds depend only on
/// its index, so `parallel` does not change any output.
pub fn run_monte_carlo(
    ctx: &TrialContext,
    n: usize,
    schemes: &[Scheme],
    seed: u64,
    policy: FailurePolicy,
    parallel: bool,
) -> Result<MonteCarloRun> {
    if n == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    ctx.check_schemes(schemes)?;
    let records: Vec<TrialRecord> = if parallel {
        (0..n).into_par_iter().map(|k| run_trial(ctx, schemes, k, seed)).collect()
    } else {
        (0..n).map(|k| run_trial(ctx, schemes, k, seed)).collect()
    };
    let clamp = ctx.chain.cfg.roi::<f64>().diameter();
    let summaries = summarize(&records, schemes, policy, clamp);
    Ok(MonteCarloRun { records, summaries })
}

/// Distance from `p` to the segment between the two receivers.
pub fn distance_to_receiver_segment(chain: &SensingChain<f64>, p: Position) -> f64 {
    let a = chain.cfg.rx_position::<f64>(0);
    let b = chain.cfg.rx_position::<f64>(1);
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Mean error of trials within `halfwidth_m` of the Rx1-Rx2 segment divided
/// by the median error over all trials, with failures at `clamp_m`.
pub fn band_ratio(chain: &Chain, records: &[TrialRecord], scheme: Scheme, halfwidth_m: f64, clamp_m: f64) -> (f64, usize) {
    let err = |r: &TrialRecord| r.outcome(scheme).and_then(|o| o.error_m).unwrap_or(clamp_m);
    let mut all: Vec<f64> = records.iter().map(err).collect();
    all.sort_by(f64::total_cmp);
    let median = nearest_rank(&all, 50.0);
    let band: Vec<f64> = records
        .iter()
        .filter(|r| distance_to_receiver_segment(chain, r.p_true) < halfwidth_m)
        .map(err)
        .collect();
    let mean = band.iter().sum::<f64>() / band.len() as f64;
    (mean / median, band.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ScenarioConfig;
    use std::sync::OnceLock;

    fn chain() -> &'static Chain {
        static C: OnceLock<Chain> = OnceLock::new();
        C.get_or_init(|| SensingChain::new(&ScenarioConfig::default()).unwrap())
    }

    fn ctx() -> TrialContext {
        let s = Sigmas::new(0.3, 0.01).unwrap();
        TrialContext::new(chain().clone(), [s, s])
    }

    #[test]
    fn noiseless_trials_are_exact_for_analytical_schemes() {
        let c = TrialContext { chain: chain().without_noise(), ..ctx() };
        let schemes = [Scheme::GiPl, Scheme::GdopPl, Scheme::GdopWls, Scheme::GdopInit];
        for k in 0..20 {
            let r = run_trial(&c, &schemes, k, 3);
            let est = r.estimates.unwrap();
            // the chain quantises, so feed exact parameters through fuse
            let links = [c.chain.front_ends[0].link, c.chain.front_ends[1].link];
            let exact: [Estimate; 2] = std::array::from_fn(|i| {
                let (d, th) = crate::geometry::measurement_model(r.p_true, &links[i]).unwrap();
                Estimate { theta_hat: th, d_hat: d, ..est[i] }
            });
            for s in Scheme::ANALYTICAL {
                let (p, ..) = fuse(&c, s, &exact, None).unwrap();
                assert!(p.distance(r.p_true) < 1e-3, "{s} {:?}", r.p_true);
            }
            for o in &r.outcomes {
                // quantisation alone leaves metre-level residuals
                assert!(o.error_m.unwrap() < 5.0, "{o:?}");
            }
        }
    }

    #[test]
    fn same_seed_same_record() {
        let c = ctx();
        let schemes = Scheme::ANALYTICAL;
        assert_eq!(run_trial(&c, &schemes, 4, 9), run_trial(&c, &schemes, 4, 9));
        assert_ne!(run_trial(&c, &schemes, 4, 9).p_true, run_trial(&c, &schemes, 5, 9).p_true);
    }

    #[test]
    fn missing_model_is_isolated() {
        let c = ctx();
        let schemes = [Scheme::GdopWls, Scheme::PfMlp, Scheme::GiPl];
        let r = run_trial(&c, &schemes, 0, 1);
        assert!(r.outcome(Scheme::PfMlp).unwrap().failure.is_some());
        assert!(r.outcome(Scheme::GdopWls).unwrap().error_m.is_some());
        assert!(r.outcome(Scheme::GiPl).unwrap().error_m.is_some());
        assert!(run_monte_carlo(&c, 2, &schemes, 1, FailurePolicy::Clamp, false).is_err());
    }

    #[test]
    fn parallel_equals_serial() {
        let c = ctx();
        let a = run_monte_carlo(&c, 24, &Scheme::ANALYTICAL, 5, FailurePolicy::Clamp, true).unwrap();
        let b = run_monte_carlo(&c, 24, &Scheme::ANALYTICAL, 5, FailurePolicy::Clamp, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failure_policies() {
        let mk = |e: Option<f64>| TrialRecord {
            trial: 0,
            seed: 0,
            tx_power_dbm: 52.0,
            p_true: Position::new(0.0, 0.0),
            estimates: None,
            outcomes: vec![SchemeOutcome {
                scheme: Scheme::GiPl,
                p_hat: None,
                error_m: e,
                converged: true,
                fallback: false,
                iterations: 0,
                failure: None,
            }],
        };
        let recs = [mk(Some(3.0)), mk(None), mk(Some(4.0))];
        let (e, f) = scheme_errors(&recs, Scheme::GiPl, FailurePolicy::Clamp, 230.0);
        assert_eq!((e, f), (vec![3.0, 230.0, 4.0], 1));
        let s = summarize(&recs, &[Scheme::GiPl], FailurePolicy::Exclude, 230.0);
        assert!((s[0].metrics.rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[0].metrics.n_failed, 1);
    }

    #[test]
    fn segment_distance() {
        let c = chain();
        let rx = c.cfg.rx_position::<f64>(0);
        assert!(distance_to_receiver_segment(c, Position::new(rx.x - 3.0, 0.0)) - 3.0 < 1e-12);
        assert!((distance_to_receiver_segment(c, Position::new(rx.x, rx.y + 4.0)) - 4.0).abs() < 1e-12);
    }
}
