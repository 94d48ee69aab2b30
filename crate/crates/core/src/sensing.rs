//! The full decentralised sensing chain of the two receivers, plus sigma
//! calibration and its on-disk cache.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{synthesize_received, LinkFrontEnd, NoiseModel, RxSignal};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::estimation::{estimate_link, sigmas_from_errors, LinkEstimate, MusicGrid, RawEstimate};
use crate::geometry::{measurement_model, wrap_angle, GeometryLimits, NoiseSigmas, Position2D};
use crate::pta::{tx_wide_beam, TxBeam};
use crate::scalar::Scalar;
use crate::seeds::{derive_seed, derive_tagged};

/// Trial-invariant state of the simulated deployment.
#[derive(Clone, Debug)]
pub struct SensingChain<T> {
    pub cfg: ScenarioConfig,
    pub front_ends: [LinkFrontEnd<T>; 2],
    pub tx_beam: TxBeam<T>,
    pub grid: MusicGrid<T>,
    pub noise: Option<NoiseModel>,
}

impl<T: Scalar> SensingChain<T> {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let dl = T::lit(cfg.element_spacing_m() / cfg.wavelength_m());
        let sector = (
            T::lit(cfg.tx_beam.sector_start_deg.to_radians()),
            T::lit(cfg.tx_beam.sector_end_deg.to_radians()),
        );
        let tx_beam = tx_wide_beam(cfg.array.n_elements, dl, sector, cfg.tx_beam.max_iterations)?;
        Self::with_tx_beam(cfg, tx_beam)
    }

    /// Reuses an already synthesised transmit beam, e.g. across a power sweep.
    pub fn with_tx_beam(cfg: &ScenarioConfig, tx_beam: TxBeam<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            front_ends: [LinkFrontEnd::from_config(cfg, 0)?, LinkFrontEnd::from_config(cfg, 1)?],
            tx_beam,
            grid: cfg.music_grid(),
            noise: cfg.noise_model(),
        })
    }

    pub fn with_tx_power(&self, dbm: f64) -> Self {
        let mut c = self.clone();
        c.cfg.power.tx_power_dbm = dbm;
        c
    }

    pub fn without_noise(&self) -> Self {
        let mut c = self.clone();
        c.cfg.noise.enabled = false;
        c.noise = None;
        c
    }

    /// Received signal of receiver `i` (zero-based).
    pub fn synthesize(&self, p: Position2D<T>, i: usize, seed: u64) -> Result<RxSignal<T>> {
        synthesize_received(p, &self.front_ends[i], &self.cfg, &self.tx_beam, self.noise.as_ref(), seed)
    }

    pub fn estimate(&self, y: &RxSignal<T>, i: usize) -> Result<RawEstimate<T>> {
        let fe = &self.front_ends[i];
        estimate_link(
            y,
            &fe.pta,
            fe.boresight,
            self.cfg.estimation.music_subband,
            &self.grid,
            self.cfg.estimation.parabolic_refinement,
        )
    }

    /// Both receivers for one target; receiver noise seeds are children of `seed`.
    pub fn observe(&self, p: Position2D<T>, seed: u64) -> Result<[(RxSignal<T>, RawEstimate<T>); 2]> {
        let one = |i: usize| -> Result<(RxSignal<T>, RawEstimate<T>)> {
            let y = self.synthesize(p, i, derive_seed(seed, i as u64 + 1))?;
            let e = self.estimate(&y, i)?;
            Ok((y, e))
        };
        Ok([one(0)?, one(1)?])
    }

    /// Uniform ROI draw, resampled when it falls within the degeneracy
    /// radius of a base station.
    pub fn sample_target<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Position2D<T> {
        let roi = self.cfg.roi::<T>();
        let min = T::lit(GeometryLimits::default().min_range);
        loop {
            let p = roi.sample(rng);
            let near = std::iter::once(self.cfg.tx_position::<T>())
                .chain((0..2).map(|i| self.cfg.rx_position::<T>(i)))
                .any(|b| p.distance(b) < min);
            if !near {
                return p;
            }
        }
    }

    /// (sigma_d, sigma_theta) quantisation floors of receiver `i`.
    pub fn quantization_floors(&self, i: usize) -> (T, T) {
        let twelve = T::lit(12.0).sqrt();
        (self.grid.step / twelve, self.front_ends[i].pta.mean_angular_spacing() / twelve)
    }

    pub fn attach(&self, raw: &RawEstimate<T>, i: usize, sigmas: NoiseSigmas<T>) -> LinkEstimate<T> {
        LinkEstimate {
            theta_hat: raw.theta_hat,
            d_hat: raw.d_hat,
            rx_index: i as u8 + 1,
            peak_index: raw.peak_index,
            sigmas,
        }
    }
}

/// Empirical per-link sigmas from `n_cal` Monte-Carlo draws uniform in the ROI.
pub fn calibrate_sigmas<T: Scalar>(chain: &SensingChain<T>, n_cal: usize, seed: u64) -> Result<[NoiseSigmas<T>; 2]> {
    if n_cal < 100 {
        return Err(Error::Config(format!("calibration needs >= 100 draws, got {n_cal}")));
    }
    let mut d_err = [Vec::with_capacity(n_cal), Vec::with_capacity(n_cal)];
    let mut t_err = [Vec::with_capacity(n_cal), Vec::with_capacity(n_cal)];
    for k in 0..n_cal {
        let trial_seed = derive_seed(seed, k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_tagged(seed, k as u64, 0));
        let p = chain.sample_target(&mut rng);
        let obs = chain.observe(p, trial_seed)?;
        for (i, (_, est)) in obs.iter().enumerate() {
            let (d, th) = measurement_model(p, &chain.front_ends[i].link)?;
            d_err[i].push(est.d_hat - d);
            t_err[i].push(wrap_angle(est.theta_hat - th));
        }
    }
    Ok(std::array::from_fn(|i| {
        let (fd, ft) = chain.quantization_floors(i);
        sigmas_from_errors(&d_err[i], &t_err[i], fd, ft)
    }))
}

/// One cached calibration result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub config_hash: String,
    pub n_cal: usize,
    /// TOML integers are signed, so the full u64 range goes through a string.
    #[serde(with = "seed_string")]
    pub seed: u64,
    pub sigma_d: [f64; 2],
    pub sigma_theta: [f64; 2],
}

mod seed_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<u64, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

impl CalibrationEntry {
    pub fn sigmas(&self) -> [NoiseSigmas<f64>; 2] {
        std::array::from_fn(|i| NoiseSigmas { sigma_d: self.sigma_d[i], sigma_theta: self.sigma_theta[i] })
    }
}

/// Sidecar file of calibration results keyed by configuration hash.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCache {
    #[serde(default)]
    pub entry: Vec<CalibrationEntry>,
}

impl CalibrationCache {
    pub fn load_or_default(path: impl AsRef<Path>) -> Result<Self> {
        match std::fs::read_to_string(path.as_ref()) {
            Ok(text) => toml::from_str(&text).map_err(|e| Error::Format(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn lookup(&self, hash: &str, n_cal: usize, seed: u64) -> Option<&CalibrationEntry> {
        self.entry.iter().find(|e| e.config_hash == hash && e.n_cal == n_cal && e.seed == seed)
    }

    pub fn insert(&mut self, entry: CalibrationEntry) {
        self.entry.retain(|e| !(e.config_hash == entry.config_hash && e.n_cal == entry.n_cal && e.seed == entry.seed));
        self.entry.push(entry);
    }

    /// Cached sigmas, or a fresh calibration that is then recorded.
    pub fn get_or_calibrate(&mut self, chain: &SensingChain<f64>, n_cal: usize, seed: u64) -> Result<[NoiseSigmas<f64>; 2]> {
        let hash = chain.cfg.hash_hex();
        if let Some(e) = self.lookup(&hash, n_cal, seed) {
            return Ok(e.sigmas());
        }
        let s = calibrate_sigmas(chain, n_cal, seed)?;
        self.insert(CalibrationEntry {
            config_hash: hash,
            n_cal,
            seed,
            sigma_d: [s[0].sigma_d, s[1].sigma_d],
            sigma_theta: [s[0].sigma_theta, s[1].sigma_theta],
        });
        Ok(s)
    }
}
