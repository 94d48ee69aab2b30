use serde::{Deserialize, Serialize};

use super::{run_monte_carlo, FailurePolicy, MetricsSummary, Models, TrialContext};
use crate::error::{Error, Result};
use crate::Scheme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    /// No training involved.
    Analytical,
    /// Trained on data at the evaluated transmit power.
    Matched,
    /// Trained once across powers.
    Generalized,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Analytical => "analytical",
            ModelVariant::Matched => "matched",
            ModelVariant::Generalized => "generalized",
        }
    }
}

/// Learned models for a sweep: one set used at every power and optional
/// sets keyed by the power they were trained at.
#[derive(Clone, Debug, Default)]
pub struct SweepModels {
    pub generalized: Models,
    pub matched: Vec<(f64, Models)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tx_power_dbm: f64,
    pub scheme: Scheme,
    pub variant: ModelVariant,
    pub metrics: MetricsSummary,
}

/// Same trial seeds at every power, so targets and noise draws are shared
/// and neighbouring powers differ only through the SNR. Sigmas are
/// recalibrated per power.
pub fn power_sweep(
    base: &TrialContext,
    powers_dbm: &[f64],
    schemes: &[Scheme],
    n_trials: usize,
    seed: u64,
    models: &SweepModels,
) -> Result<Vec<SweepRow>> {
    if powers_dbm.is_empty() {
        return Err(Error::Config("power list is empty".into()));
    }
    let mut rows = Vec::new();
    for &p in powers_dbm {
        let ctx = TrialContext::calibrated(base.chain.with_tx_power(p), seed)?;
        let analytical: Vec<Scheme> = schemes.iter().copied().filter(|s| !s.is_learned()).collect();
        let learned: Vec<Scheme> = schemes.iter().copied().filter(|s| s.is_learned()).collect();
        if !analytical.is_empty() {
            let run = run_monte_carlo(&ctx, n_trials, &analytical, seed, FailurePolicy::Clamp, true)?;
            rows.extend(run.summaries.into_iter().map(|s| SweepRow {
                tx_power_dbm: p,
                scheme: s.scheme,
                variant: ModelVariant::Analytical,
                metrics: s.metrics,
            }));
        }
        let matched = models.matched.iter().find(|(q, _)| (q - p).abs() < 1e-9).map(|(_, m)| m);
        let variants = [(ModelVariant::Matched, matched), (ModelVariant::Generalized, Some(&models.generalized))];
        for (variant, m) in variants {
            let Some(m) = m else { continue };
            let available: Vec<Scheme> = learned
                .iter()
                .copied()
                .filter(|s| match s {
                    Scheme::PfMlp => m.mlp.is_some(),
                    Scheme::SfCnn => m.cnn.is_some(),
                    _ => false,
                })
                .collect();
            if available.is_empty() {
                continue;
            }
            let c = ctx.clone().with_models(m.clone());
            let run = run_monte_carlo(&c, n_trials, &available, seed, FailurePolicy::Clamp, true)?;
            rows.extend(run.summaries.into_iter().map(|s| SweepRow { tx_power_dbm: p, scheme: s.scheme, variant, metrics: s.metrics }));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::SensingChain;
    use crate::{ScenarioConfig, Sigmas};

    #[test]
    fn one_row_per_power_and_scheme() {
        let mut cfg = ScenarioConfig::default();
        cfg.estimation.calibration_draws = 100;
        let chain = SensingChain::new(&cfg).unwrap();
        let s = Sigmas::new(0.3, 0.01).unwrap();
        let ctx = TrialContext::new(chain, [s, s]);
        let rows = power_sweep(&ctx, &[46.0, 52.0], &[Scheme::GiPl, Scheme::GdopWls, Scheme::PfMlp], 4, 1, &SweepModels::default()).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.variant == ModelVariant::Analytical && r.metrics.n == 4));
        assert!(power_sweep(&ctx, &[], &[Scheme::GiPl], 4, 1, &SweepModels::default()).is_err());
    }
}
