//! Scenario configuration and its TOML file format.
//!
//! The defaults reproduce the reference deployment: ISD 200 m, a 32-element
//! half-wavelength ULA per node at 2.6 GHz, 3276 subcarriers at 30 kHz,
//! 52 dBm transmit power, a 61-subcarrier MUSIC sub-band and a 0.1 m^2
//! target. Angles in the file are degrees; everything else is SI.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::NoiseModel;
use crate::error::{Error, Result};
use crate::estimation::MusicGrid;
use crate::fusion::SolverSettings;
use crate::geometry::{HexRegion, LinkGeometry, Position2D};
use crate::pta::{make_pta_config, PtaConfig};
use crate::scalar::{Scalar, SPEED_OF_LIGHT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub isd_m: f64,
    pub tx: [f64; 2],
    pub rx: [[f64; 2]; 2],
    pub boresight_tx_deg: f64,
    pub boresight_rx_deg: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSection {
    /// Defaults to the centroid of the three base stations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
    /// Defaults to ISD / sqrt(3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circumradius_m: Option<f64>,
    pub orientation_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub n_elements: usize,
    /// Defaults to half a carrier wavelength.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmSection {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub n_subcarriers: usize,
    pub symbols_per_trial: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSection {
    pub tx_power_dbm: f64,
    pub rcs_m2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub enabled: bool,
    pub psd_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

/// Receiver rainbow sweep, local angles about each receiver boresight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub theta_start_deg: [f64; 2],
    pub theta_end_deg: [f64; 2],
}

/// Transmit wide-beam sector, local to the transmitter boresight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxBeamSection {
    pub sector_start_deg: f64,
    pub sector_end_deg: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    pub music_subband: usize,
    /// Defaults to the ISD.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_min_m: Option<f64>,
    /// Defaults to four times the ISD.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_max_m: Option<f64>,
    pub grid_step_m: f64,
    pub parabolic_refinement: bool,
    pub calibration_draws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    /// Re-evaluate the GDOP weights at every LM iterate instead of freezing
    /// them at the initialisation point.
    pub refresh_gdop_weights: bool,
}

/// Complete simulation scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: GeometrySection,
    pub roi: RoiSection,
    pub array: ArraySection,
    pub ofdm: OfdmSection,
    pub power: PowerSection,
    pub noise: NoiseSection,
    pub sweep: SweepSection,
    pub tx_beam: TxBeamSection,
    pub estimation: EstimationSection,
    pub solver: SolverSettings,
    pub fusion: FusionSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let l = 200.0;
        let h = 3f64.sqrt() * l / 2.0;
        Self {
            geometry: GeometrySection {
                isd_m: l,
                tx: [0.0, 0.0],
                rx: [[h, l / 2.0], [h, -l / 2.0]],
                boresight_tx_deg: 0.0,
                boresight_rx_deg: [240.0, 120.0],
            },
            roi: RoiSection { center: None, circumradius_m: None, orientation_deg: 0.0 },
            array: ArraySection { n_elements: 32, spacing_m: None },
            ofdm: OfdmSection {
                carrier_hz: 2.6e9,
                subcarrier_spacing_hz: 30e3,
                n_subcarriers: 12 * 273,
                symbols_per_trial: 1,
            },
            power: PowerSection { tx_power_dbm: 52.0, rcs_m2: 0.1 },
            noise: NoiseSection { enabled: true, psd_dbm_per_hz: -174.0, noise_figure_db: 0.0 },
            sweep: SweepSection { theta_start_deg: [-60.0, -60.0], theta_end_deg: [60.0, 60.0] },
            tx_beam: TxBeamSection {
                sector_start_deg: -60.0,
                sector_end_deg: 60.0,
                max_iterations: 200,
            },
            estimation: EstimationSection {
                music_subband: 61,
                grid_min_m: None,
                grid_max_m: None,
                grid_step_m: 0.1,
                parabolic_refinement: true,
                calibration_draws: 500,
            },
            solver: SolverSettings::default(),
            fusion: FusionSection { refresh_gdop_weights: false },
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let g = &self.geometry;
        if !(g.isd_m > 0.0) {
            return fail(format!("isd_m must be positive, got {}", g.isd_m));
        }
        if self.array.n_elements < 2 {
            return fail(format!("n_elements must be >= 2, got {}", self.array.n_elements));
        }
        let m = self.estimation.music_subband;
        if m < 3 || m % 2 == 0 {
            return fail(format!("music_subband must be odd and >= 3, got {m}"));
        }
        if m > self.ofdm.n_subcarriers {
            return fail(format!("music_subband {m} exceeds n_subcarriers"));
        }
        if self.ofdm.n_subcarriers < 2 || !(self.ofdm.subcarrier_spacing_hz > 0.0) {
            return fail("need >= 2 subcarriers with positive spacing".into());
        }
        if self.ofdm.symbols_per_trial == 0 {
            return fail("symbols_per_trial must be >= 1".into());
        }
        if !(self.ofdm.carrier_hz > self.bandwidth_hz() / 2.0) {
            return fail("carrier must exceed half the bandwidth".into());
        }
        if !(self.power.rcs_m2 >= 0.0) || !self.power.tx_power_dbm.is_finite() {
            return fail("rcs must be >= 0 and tx power finite".into());
        }
        if !(self.estimation.grid_step_m > 0.0) {
            return fail("grid_step_m must be positive".into());
        }
        if self.tx_beam.sector_end_deg <= self.tx_beam.sector_start_deg {
            return fail("tx sector end must exceed start".into());
        }
        for i in 0..2 {
            if g.rx[i] == g.tx {
                return fail(format!("receiver {} coincides with transmitter", i + 1));
            }
            let (a, b) = (self.sweep.theta_start_deg[i], self.sweep.theta_end_deg[i]);
            if a.abs() >= 90.0 || b.abs() >= 90.0 || a == b {
                return fail(format!("receiver {} sweep [{a}, {b}] invalid", i + 1));
            }
        }
        if let Some(r) = self.roi.circumradius_m {
            if !(r > 0.0) {
                return fail("roi circumradius must be positive".into());
            }
        }
        self.music_grid::<f64>().validate()?;
        self.solver.validate()?;
        Ok(())
    }

    /// W = N_c * delta_f.
    pub fn bandwidth_hz(&self) -> f64 {
        self.ofdm.n_subcarriers as f64 * self.ofdm.subcarrier_spacing_hz
    }

    /// Lowest subcarrier frequency, placed so the band is centered on the carrier.
    pub fn f0_hz(&self) -> f64 {
        self.ofdm.carrier_hz - self.bandwidth_hz() / 2.0
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.ofdm.carrier_hz
    }

    pub fn element_spacing_m(&self) -> f64 {
        self.array.spacing_m.unwrap_or(self.wavelength_m() / 2.0)
    }

    pub fn tx_position<T: Scalar>(&self) -> Position2D<T> {
        let [x, y] = self.geometry.tx;
        Position2D::new(T::lit(x), T::lit(y))
    }

    /// `i` is zero-based.
    pub fn rx_position<T: Scalar>(&self, i: usize) -> Position2D<T> {
        let [x, y] = self.geometry.rx[i];
        Position2D::new(T::lit(x), T::lit(y))
    }

    /// Zero-based receiver index; the returned link carries the 1-based tag.
    pub fn link<T: Scalar>(&self, i: usize) -> LinkGeometry<T> {
        LinkGeometry::new(self.tx_position(), self.rx_position(i), i as u8 + 1)
            .expect("validated geometry")
    }

    pub fn links<T: Scalar>(&self) -> [LinkGeometry<T>; 2] {
        [self.link(0), self.link(1)]
    }

    pub fn boresight_tx<T: Scalar>(&self) -> T {
        T::lit(self.geometry.boresight_tx_deg.to_radians())
    }

    pub fn boresight_rx<T: Scalar>(&self, i: usize) -> T {
        T::lit(self.geometry.boresight_rx_deg[i].to_radians())
    }

    pub fn roi<T: Scalar>(&self) -> HexRegion<T> {
        let g = &self.geometry;
        let center = self.roi.center.unwrap_or_else(|| {
            [
                (g.tx[0] + g.rx[0][0] + g.rx[1][0]) / 3.0,
                (g.tx[1] + g.rx[0][1] + g.rx[1][1]) / 3.0,
            ]
        });
        let r = self.roi.circumradius_m.unwrap_or(g.isd_m / 3f64.sqrt());
        HexRegion::new(
            Position2D::new(T::lit(center[0]), T::lit(center[1])),
            T::lit(r),
            T::lit(self.roi.orientation_deg.to_radians()),
        )
        .expect("validated roi")
    }

    pub fn pta_config<T: Scalar>(&self, i: usize) -> Result<PtaConfig<T>> {
        make_pta_config(
            T::lit(self.sweep.theta_start_deg[i].to_radians()),
            T::lit(self.sweep.theta_end_deg[i].to_radians()),
            T::lit(self.f0_hz()),
            T::lit(self.bandwidth_hz()),
            self.ofdm.n_subcarriers,
            self.array.n_elements,
            T::lit(self.element_spacing_m()),
        )
    }

    pub fn music_grid<T: Scalar>(&self) -> MusicGrid<T> {
        let l = self.geometry.isd_m;
        MusicGrid {
            r_min: T::lit(self.estimation.grid_min_m.unwrap_or(l)),
            r_max: T::lit(self.estimation.grid_max_m.unwrap_or(4.0 * l)),
            step: T::lit(self.estimation.grid_step_m),
        }
    }

    pub fn noise_model(&self) -> Option<NoiseModel> {
        self.noise.enabled.then_some(NoiseModel {
            psd_dbm_per_hz: self.noise.psd_dbm_per_hz,
            noise_figure_db: self.noise.noise_figure_db,
        })
    }

    pub fn with_tx_power(&self, dbm: f64) -> Self {
        let mut c = self.clone();
        c.power.tx_power_dbm = dbm;
        c
    }

    pub fn without_noise(&self) -> Self {
        let mut c = self.clone();
        c.noise.enabled = false;
        c
    }

    /// SHA-256 of the canonical JSON form, as lowercase hex.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serialises"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First eight bytes of [`Self::hash_hex`] as an integer.
    pub fn hash64(&self) -> u64 {
        let digest = Sha256::digest(serde_json::to_vec(self).expect("config serialises"));
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}
