//! Analytical position fusion of the two link estimates.

mod init;
mod pathloss;
mod simplex;
mod wls;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Position2D;

pub use init::{gdop_init, gdop_weighted_init, link_gdop, per_link_geo_init, ray_intersection_init, GdopInit, GDOP_CLAMP};
pub use pathloss::{pl_cost, pl_weights, solve_gdop_pl, solve_gi_pl};
pub use simplex::{nelder_mead, SimplexOutcome};
pub use wls::{solve_gdop_wls, solve_gdop_wls_with, wls_cost, wls_residuals};

/// Localization scheme tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "GI-PL")]
    GiPl,
    #[serde(rename = "GDOP-PL")]
    GdopPl,
    #[serde(rename = "GDOP-WLS")]
    GdopWls,
    /// The GDOP-weighted initialization point on its own.
    #[serde(rename = "GDOP-Init")]
    GdopInit,
    #[serde(rename = "PF-MLP")]
    PfMlp,
    #[serde(rename = "SF-CNN")]
    SfCnn,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::GiPl,
        Scheme::GdopPl,
        Scheme::GdopWls,
        Scheme::GdopInit,
        Scheme::PfMlp,
        Scheme::SfCnn,
    ];
    pub const ANALYTICAL: [Scheme; 3] = [Scheme::GiPl, Scheme::GdopPl, Scheme::GdopWls];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::GiPl => "GI-PL",
            Scheme::GdopPl => "GDOP-PL",
            Scheme::GdopWls => "GDOP-WLS",
            Scheme::GdopInit => "GDOP-Init",
            Scheme::PfMlp => "PF-MLP",
            Scheme::SfCnn => "SF-CNN",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Scheme::PfMlp | Scheme::SfCnn)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

/// Output of any fusion scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionResult<T> {
    pub p_hat: Position2D<T>,
    pub p_init: Position2D<T>,
    pub scheme: Scheme,
    pub iterations: usize,
    pub converged: bool,
    pub cost_final: T,
    /// The preferred initialization was unavailable and a fallback was used.
    pub fallback: bool,
}

/// Iterative solver knobs for LM and the simplex search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub gradient_tol: f64,
    /// Relative step-size tolerance.
    pub step_tol: f64,
    pub lm_lambda_init: f64,
    pub lm_lambda_factor: f64,
    pub simplex_max_iters: usize,
    /// Edge of the initial simplex, meters.
    pub simplex_initial_step_m: f64,
    /// Simplex diameter below which the search stops, meters.
    pub simplex_tol_m: f64,
    pub simplex_restarts: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iters: 50,
            gradient_tol: 1e-8,
            step_tol: 1e-12,
            lm_lambda_init: 1e-3,
            lm_lambda_factor: 10.0,
            simplex_max_iters: 1000,
            simplex_initial_step_m: 5.0,
            simplex_tol_m: 1e-6,
            simplex_restarts: 2,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_tol", self.gradient_tol),
            ("step_tol", self.step_tol),
            ("lm_lambda_init", self.lm_lambda_init),
            ("simplex_initial_step_m", self.simplex_initial_step_m),
            ("simplex_tol_m", self.simplex_tol_m),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("solver.{name} must be positive, got {v}")));
            }
        }
        if !(self.lm_lambda_factor > 1.0) {
            return Err(Error::Config("solver.lm_lambda_factor must exceed 1".into()));
        }
        if self.max_iters == 0 || self.simplex_max_iters == 0 {
            return Err(Error::Config("solver iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::estimation::LinkEstimate;
    use crate::geometry::{measurement_model, LinkGeometry, NoiseSigmas, Position2D};

    pub fn table_links() -> [LinkGeometry<f64>; 2] {
        let l = 200.0;
        let s = 3f64.sqrt() / 2.0 * l;
        let tx = Position2D::new(0.0, 0.0);
        [
            LinkGeometry::new(tx, Position2D::new(s, l / 2.0), 1).unwrap(),
            LinkGeometry::new(tx, Position2D::new(s, -l / 2.0), 2).unwrap(),
        ]
    }

    pub fn sigmas() -> NoiseSigmas<f64> {
        NoiseSigmas { sigma_d: 0.5, sigma_theta: 0.01 }
    }

    pub fn noiseless(p: Position2D<f64>, links: &[LinkGeometry<f64>; 2]) -> [LinkEstimate<f64>; 2] {
        std::array::from_fn(|i| {
            let (d, th) = measurement_model(p, &links[i]).unwrap();
            LinkEstimate { theta_hat: th, d_hat: d, rx_index: i as u8 + 1, peak_index: 0, sigmas: sigmas() }
        })
    }

    /// Uniform points of the Table II hexagon, away from the base stations.
    pub fn roi_points(n: usize, seed: u64) -> Vec<Position2D<f64>> {
        use rand::SeedableRng;
        let l: f64 = 200.0;
        let roi = crate::geometry::HexRegion::new(Position2D::new(l / 3f64.sqrt(), 0.0), l / 3f64.sqrt(), 0.0).unwrap();
        let links = table_links();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let p = roi.sample(&mut rng);
            if p.distance(links[0].p_tx) > 1.0 && p.distance(links[0].p_rx) > 1.0 && p.distance(links[1].p_rx) > 1.0 {
                out.push(p);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.name()));
        }
        assert!("nope".parse::<Scheme>().is_err());
    }

    #[test]
    fn settings_validation() {
        assert!(SolverSettings::default().validate().is_ok());
        let bad = SolverSettings { gradient_tol: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverSettings { lm_lambda_factor: 1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
