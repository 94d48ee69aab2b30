//! Per-link parameter extraction: AoA from the peak subcarrier of the
//! rainbow beam, bistatic distance from single-snapshot sub-band MUSIC.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::RxSignal;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, NoiseSigmas};
use crate::pta::{subcarrier_to_angle, PtaConfig};
use crate::scalar::Scalar;

/// Upper clamp of the pseudo-spectrum where the steering vector is
/// (numerically) orthogonal to the noise subspace.
pub const MUSIC_SPECTRUM_MAX: f64 = 1e12;

/// Decentralised estimate of one link. `theta_hat` is global.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkEstimate<T> {
    pub theta_hat: T,
    pub d_hat: T,
    pub rx_index: u8,
    pub peak_index: usize,
    pub sigmas: NoiseSigmas<T>,
}

impl<T: Scalar> LinkEstimate<T> {
    /// The bistatic ellipse exists only when the distance exceeds the baseline.
    pub fn is_feasible(&self, baseline: T) -> bool {
        self.d_hat > baseline
    }
}

/// Candidate bistatic distances `r_min, r_min + step, ..., <= r_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MusicGrid<T> {
    pub r_min: T,
    pub r_max: T,
    pub step: T,
}

impl<T: Scalar> MusicGrid<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min < self.r_max && self.step > T::zero()) {
            return Err(Error::Config(format!(
                "music grid needs r_min < r_max and step > 0, got [{}, {}] / {}",
                self.r_min, self.r_max, self.step
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        ((self.r_max - self.r_min) / self.step + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, k: usize) -> T {
        self.r_min + T::from_usize_lossy(k) * self.step
    }
}

/// Index of the strongest subcarrier; the lowest index wins ties.
pub fn detect_peak_subcarrier<T: Scalar>(y: &[Complex<T>]) -> usize {
    let mut best = 0;
    let mut best_p = T::neg_infinity();
    for (m, z) in y.iter().enumerate() {
        let p = z.norm_sqr();
        if p > best_p {
            best = m;
            best_p = p;
        }
    }
    best
}

/// Global AoA estimate from the peak subcarrier.
pub fn estimate_aoa<T: Scalar>(y: &RxSignal<T>, pta: &PtaConfig<T>, boresight: T) -> T {
    let avg = y.symbol_average();
    aoa_from_peak(detect_peak_subcarrier(&avg), pta, boresight)
}

pub fn aoa_from_peak<T: Scalar>(peak: usize, pta: &PtaConfig<T>, boresight: T) -> T {
    wrap_angle(subcarrier_to_angle(peak, pta) + boresight)
}

/// `||U_n^H a(r)||^2` over the grid for the rank-1 pseudo-covariance
/// `y y^H`. The noise subspace is the orthogonal complement of `y`, so the
/// projection is `||a||^2 - |y^H a|^2 / ||y||^2`.
pub fn music_null_spectrum<T: Scalar>(y_sub: &[Complex<T>], rel_freqs: &[T], grid: &MusicGrid<T>) -> Result<Vec<T>> {
    assert_eq!(y_sub.len(), rel_freqs.len(), "one relative frequency per sample");
    if y_sub.len() < 2 {
        return Err(Error::ShapeMismatch("MUSIC needs at least two subcarriers".into()));
    }
    let energy: T = y_sub.iter().map(|z| z.norm_sqr()).sum();
    if !(energy > T::min_positive_value()) || !energy.is_finite() {
        return Err(Error::ZeroSignal);
    }
    let c = T::speed_of_light();
    let m = T::from_usize_lossy(y_sub.len());
    // a_q(r_min + k step) = a_q(r_min) * rot_q^k
    let mut phasor: Vec<Complex<T>> = rel_freqs
        .iter()
        .map(|&f| Complex::from_polar(T::one(), -T::two_pi() * f * grid.r_min / c))
        .collect();
    let rot: Vec<Complex<T>> =
        rel_freqs.iter().map(|&f| Complex::from_polar(T::one(), -T::two_pi() * f * grid.step / c)).collect();
    let conj_y: Vec<Complex<T>> = y_sub.iter().map(|z| z.conj()).collect();
    let n = grid.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        if k > 0 && k % 256 == 0 {
            // re-anchor to stop rounding drift of the recurrence
            let r = grid.point(k);
            for (ph, &f) in phasor.iter_mut().zip(rel_freqs) {
                *ph = Complex::from_polar(T::one(), -T::two_pi() * f * r / c);
            }
        }
        let mut acc = Complex::new(T::zero(), T::zero());
        for (yq, ph) in conj_y.iter().zip(&phasor) {
            acc = acc + yq * ph;
        }
        out.push((m - acc.norm_sqr() / energy).max(T::zero()));
        for (ph, r) in phasor.iter_mut().zip(&rot) {
            *ph = *ph * r;
        }
    }
    Ok(out)
}

/// MUSIC pseudo-spectrum `1 / ||U_n^H a(r)||^2`, clamped at
/// [`MUSIC_SPECTRUM_MAX`].
pub fn music_spectrum<T: Scalar>(y_sub: &[Complex<T>], rel_freqs: &[T], grid: &MusicGrid<T>) -> Result<Vec<T>> {
    let floor = T::one() / T::lit(MUSIC_SPECTRUM_MAX);
    Ok(music_null_spectrum(y_sub, rel_freqs, grid)?.into_iter().map(|q| T::one() / q.max(floor)).collect())
}

/// First subcarrier of the `m_sub`-wide band centered on `peak`, clamped to
/// the available spectrum.
pub fn subband_start(peak: usize, m_sub: usize, n_subcarriers: usize) -> usize {
    let half = m_sub / 2;
    peak.saturating_sub(half).min(n_subcarriers.saturating_sub(m_sub))
}

/// Bistatic distance from the sub-band around `peak`. Relative frequencies
/// are measured from the first subcarrier of the sub-band.
pub fn estimate_bistatic_distance<T: Scalar>(
    y: &[Complex<T>],
    peak: usize,
    m_sub: usize,
    delta_f: T,
    grid: &MusicGrid<T>,
    parabolic: bool,
) -> Result<T> {
    if m_sub > y.len() {
        return Err(Error::ShapeMismatch(format!("sub-band {m_sub} wider than {} subcarriers", y.len())));
    }
    let start = subband_start(peak, m_sub, y.len());
    let y_sub = &y[start..start + m_sub];
    let rel: Vec<T> = (0..m_sub).map(|q| T::from_usize_lossy(q) * delta_f).collect();
    let null = music_null_spectrum(y_sub, &rel, grid)?;
    let mut k = 0;
    for (i, &q) in null.iter().enumerate() {
        if q < null[k] {
            k = i;
        }
    }
    let mut r = grid.point(k);
    if parabolic && k > 0 && k + 1 < null.len() {
        // the null spectrum is locally quadratic around its minimum
        let (a, b, c) = (null[k - 1], null[k], null[k + 1]);
        let curv = a - T::lit(2.0) * b + c;
        if curv > T::zero() {
            let delta = (T::lit(0.5) * (a - c) / curv).max(-T::lit(0.5)).min(T::lit(0.5));
            r = r + delta * grid.step;
        }
    }
    Ok(r)
}

/// Raw per-link estimate before sigmas are attached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawEstimate<T> {
    pub theta_hat: T,
    pub d_hat: T,
    pub peak_index: usize,
}

/// Runs both estimators on one received signal.
pub fn estimate_link<T: Scalar>(
    y: &RxSignal<T>,
    pta: &PtaConfig<T>,
    boresight: T,
    m_sub: usize,
    grid: &MusicGrid<T>,
    parabolic: bool,
) -> Result<RawEstimate<T>> {
    let avg = y.symbol_average();
    let peak = detect_peak_subcarrier(&avg);
    let theta_hat = aoa_from_peak(peak, pta, boresight);
    let d_hat = estimate_bistatic_distance(&avg, peak, m_sub, pta.subcarrier_spacing(), grid, parabolic)?;
    Ok(RawEstimate { theta_hat, d_hat, peak_index: peak })
}

/// Sample standard deviation with the quantisation floors applied.
pub fn sigmas_from_errors<T: Scalar>(d_err: &[T], theta_err: &[T], floor_d: T, floor_theta: T) -> NoiseSigmas<T> {
    fn sd<T: Scalar>(v: &[T]) -> T {
        if v.len() < 2 {
            return T::zero();
        }
        let n = T::from_usize_lossy(v.len());
        let mean = v.iter().copied().sum::<T>() / n;
        (v.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / (n - T::one())).sqrt()
    }
    NoiseSigmas { sigma_d: sd(d_err).max(floor_d), sigma_theta: sd(theta_err).max(floor_theta) }
}
