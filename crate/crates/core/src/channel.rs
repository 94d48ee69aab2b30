//! Beamformed received-signal synthesis for one bistatic link.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::geometry::{bistatic_distances, measurement_model, wrap_angle, LinkGeometry, Position2D};
use crate::pta::{tx_response, BeamResponse, PtaConfig, TxBeam};
use crate::scalar::{dbm_to_watts, Scalar};

/// Single-path bistatic channel parameters. Angles are global.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelParams<T> {
    pub beta: T,
    pub tau: T,
    pub aoa: T,
    pub aod: T,
}

/// Thermal receiver noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub psd_dbm_per_hz: f64,
    pub noise_figure_db: f64,
}

/// Beamformed samples of one receiver. `y` is symbol-major with
/// `n_symbols * N_c` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct RxSignal<T> {
    pub y: Vec<Complex<T>>,
    pub n_symbols: usize,
    pub rx_index: u8,
    pub p_true: Position2D<T>,
    pub seed: u64,
}

impl<T: Scalar> RxSignal<T> {
    pub fn n_subcarriers(&self) -> usize {
        self.y.len() / self.n_symbols.max(1)
    }

    /// Coherent average over the OFDM symbols of the trial.
    pub fn symbol_average(&self) -> Vec<Complex<T>> {
        let nc = self.n_subcarriers();
        if self.n_symbols <= 1 {
            return self.y.clone();
        }
        let k = T::from_usize_lossy(self.n_symbols);
        (0..nc)
            .map(|m| {
                (0..self.n_symbols).fold(Complex::new(T::zero(), T::zero()), |acc, s| acc + self.y[s * nc + m]) / k
            })
            .collect()
    }
}

/// Radar-equation amplitude `sqrt(lambda^2 sigma / ((4 pi)^3 R_tx^2 R_rx^2))`.
pub fn path_gain<T: Scalar>(r_tx: T, r_rx: T, lambda: T, sigma_rcs: T) -> Result<T> {
    if !(r_tx > T::zero() && r_rx > T::zero()) {
        return Err(Error::DegenerateGeometry(format!("nonpositive range ({r_tx}, {r_rx})")));
    }
    let four_pi = T::lit(4.0) * T::PI();
    Ok((lambda * lambda * sigma_rcs / (four_pi * four_pi * four_pi)).sqrt() / (r_tx * r_rx))
}

pub fn link_channel_params<T: Scalar>(
    p: Position2D<T>,
    link: &LinkGeometry<T>,
    cfg: &ScenarioConfig,
) -> Result<ChannelParams<T>> {
    let (r_tx, r_rx) = bistatic_distances(p, link);
    let (_, aoa) = measurement_model(p, link)?;
    if r_tx == T::zero() {
        return Err(Error::DegenerateGeometry("target at transmitter".into()));
    }
    let beta = path_gain(r_tx, r_rx, T::lit(cfg.wavelength_m()), T::lit(cfg.power.rcs_m2))?;
    Ok(ChannelParams { beta, tau: (r_tx + r_rx) / T::speed_of_light(), aoa, aod: (p - link.p_tx).angle() })
}

/// Noise power per subcarrier, watts.
pub fn noise_variance_per_subcarrier(noise: &NoiseModel, delta_f: f64) -> f64 {
    dbm_to_watts(noise.psd_dbm_per_hz + 10.0 * delta_f.log10() + noise.noise_figure_db)
}

/// Everything about a receiver that stays fixed across trials.
#[derive(Clone, Debug)]
pub struct LinkFrontEnd<T> {
    pub link: LinkGeometry<T>,
    pub pta: PtaConfig<T>,
    pub boresight: T,
}

impl<T: Scalar> LinkFrontEnd<T> {
    pub fn from_config(cfg: &ScenarioConfig, i: usize) -> Result<Self> {
        Ok(Self { link: cfg.link(i), pta: cfg.pta_config(i)?, boresight: cfg.boresight_rx(i) })
    }

    pub fn local_angle(&self, global: T) -> T {
        wrap_angle(global - self.boresight)
    }

    pub fn global_angle(&self, local: T) -> T {
        wrap_angle(local + self.boresight)
    }
}

/// Synthesises `y_m = sqrt(P) beta e^{-j2 pi f_m tau} (w_m^H a_r)(a_t^H v) s_m + n_m`
/// through the rank-1 factorisation of the channel matrix.
///
/// The pilot is the constant `sqrt(1/N_c)`. Steering angles are local to
/// each array. `noise = None` gives the noiseless signal; with noise the
/// draw is a deterministic function of `seed`.
pub fn synthesize_received<T: Scalar>(
    p: Position2D<T>,
    fe: &LinkFrontEnd<T>,
    cfg: &ScenarioConfig,
    tx_beam: &TxBeam<T>,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<RxSignal<T>> {
    let params = link_channel_params(p, &fe.link, cfg)?;
    let nc = fe.pta.n_subcarriers;
    let n_symbols = cfg.ofdm.symbols_per_trial.max(1);
    let theta_local = fe.local_angle(params.aoa);
    let phi_local = wrap_angle(params.aod - cfg.boresight_tx::<T>());
    let amp = dbm_to_watts(T::lit(cfg.power.tx_power_dbm)).sqrt()
        * params.beta
        * (T::one() / T::from_usize_lossy(nc)).sqrt();
    let spacing = T::lit(cfg.element_spacing_m());
    let mut rx = BeamResponse::new(&fe.pta);
    let mut scratch = Vec::with_capacity(tx_beam.v.len());
    let mut clean = Vec::with_capacity(nc);
    for m in 0..nc {
        let f = fe.pta.frequency(m);
        let cycles = f * params.tau;
        let delay = Complex::from_polar(T::one(), -T::two_pi() * (cycles - cycles.floor()));
        let g_rx = rx.rx(m, theta_local);
        let g_tx = tx_response(tx_beam, f, phi_local, spacing, &mut scratch);
        clean.push(delay * g_rx * g_tx * amp);
    }
    let mut y = Vec::with_capacity(nc * n_symbols);
    match noise {
        None => {
            for _ in 0..n_symbols {
                y.extend_from_slice(&clean);
            }
        }
        Some(nm) => {
            let sd = (noise_variance_per_subcarrier(nm, cfg.ofdm.subcarrier_spacing_hz) / 2.0).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..n_symbols {
                for s in &clean {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    y.push(*s + Complex::new(T::lit(re * sd), T::lit(im * sd)));
                }
            }
        }
    }
    Ok(RxSignal { y, n_symbols, rx_index: fe.link.rx_index, p_true: p, seed })
}
