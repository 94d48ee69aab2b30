//! Feature encodings, normalisers and the train/val/test split.

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::LinkEstimate;
use crate::geometry::{wrap_angle, HexRegion, Position2D};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// 8:1:1 split of `n` records by a seeded permutation. Validation and test
/// sizes are `round(n / 10)` each.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (n as f64 / 10.0).round() as usize;
    let n_test = n_val.min(n - n_val);
    let mut out = vec![Split::Train; n];
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_val {
            out[i] = Split::Val;
        } else if rank < n_val + n_test {
            out[i] = Split::Test;
        }
    }
    out
}

/// How the complex subcarrier samples are laid out as CNN input channels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalEncoding {
    /// re(y1), im(y1), re(y2), im(y2)
    #[default]
    RealImag,
    /// |y1|, arg(y1), |y2|, arg(y2)
    MagPhase,
}

/// (theta_1, d_1, theta_2, d_2) with global angles.
pub fn parameter_tuple(est: &[LinkEstimate<f64>; 2]) -> [f64; 4] {
    [est[0].theta_hat, est[0].d_hat, est[1].theta_hat, est[1].d_hat]
}

/// PF-MLP input from a parameter tuple: per receiver the AoA relative to
/// its boresight and the bistatic distance. Local angles keep the feature
/// away from the +-pi cut.
pub fn mlp_features(params: &[f64; 4], boresights: [f64; 2]) -> [f64; 4] {
    [
        wrap_angle(params[0] - boresights[0]),
        params[1],
        wrap_angle(params[2] - boresights[1]),
        params[3],
    ]
}

/// SF-CNN input of one sample, `4 x N_c` planar. Both receivers are scaled
/// by one common factor so the sample has unit RMS; relative amplitude
/// between receivers is kept.
pub fn cnn_input<T: Scalar>(y: [&[Complex<f32>]; 2], encoding: SignalEncoding) -> Result<Vec<T>> {
    let nc = y[0].len();
    if y[1].len() != nc || nc == 0 {
        return Err(Error::ShapeMismatch(format!("receiver lengths {} and {}", y[0].len(), y[1].len())));
    }
    let mut out = vec![T::zero(); 4 * nc];
    match encoding {
        SignalEncoding::RealImag => {
            let energy: f64 = y.iter().flat_map(|s| s.iter()).map(|c| c.norm_sqr() as f64).sum();
            let scale = if energy > 0.0 { (4.0 * nc as f64 / energy).sqrt() } else { 1.0 };
            for (r, s) in y.iter().enumerate() {
                for (m, c) in s.iter().enumerate() {
                    out[2 * r * nc + m] = T::lit(c.re as f64 * scale);
                    out[(2 * r + 1) * nc + m] = T::lit(c.im as f64 * scale);
                }
            }
        }
        SignalEncoding::MagPhase => {
            let energy: f64 = y.iter().flat_map(|s| s.iter()).map(|c| c.norm_sqr() as f64).sum();
            let scale = if energy > 0.0 { (4.0 * nc as f64 / energy).sqrt() } else { 1.0 };
            for (r, s) in y.iter().enumerate() {
                for (m, c) in s.iter().enumerate() {
                    out[2 * r * nc + m] = T::lit(c.norm() as f64 * scale);
                    out[(2 * r + 1) * nc + m] = T::lit(c.arg() as f64);
                }
            }
        }
    }
    Ok(out)
}

/// Affine map to zero mean and unit scale. Features are grouped in runs of
/// `group_len` consecutive values that share one (shift, scale) pair, so a
/// 4-channel signal uses four pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    pub group_len: usize,
}

impl Normalizer {
    /// Fit on `x`, `n` samples of `shift.len() * group_len` values each.
    pub fn fit<T: Scalar>(x: &[T], n: usize, n_groups: usize, group_len: usize) -> Result<Self> {
        let dim = n_groups * group_len;
        if n == 0 || x.len() != n * dim {
            return Err(Error::ShapeMismatch(format!("{} values for {n} samples of {dim}", x.len())));
        }
        let count = (n * group_len) as f64;
        let mut shift = vec![0.0; n_groups];
        let mut scale = vec![0.0; n_groups];
        for s in x.chunks_exact(dim) {
            for (g, run) in s.chunks_exact(group_len).enumerate() {
                shift[g] += run.iter().map(|v| v.to_f64_lossy()).sum::<f64>();
            }
        }
        shift.iter_mut().for_each(|m| *m /= count);
        for s in x.chunks_exact(dim) {
            for (g, run) in s.chunks_exact(group_len).enumerate() {
                scale[g] += run.iter().map(|v| (v.to_f64_lossy() - shift[g]).powi(2)).sum::<f64>();
            }
        }
        for (g, v) in scale.iter_mut().enumerate() {
            *v = (*v / count).sqrt();
            if !(*v > 1e-12 * shift[g].abs().max(1e-300)) || !v.is_finite() {
                return Err(Error::DegenerateFeature(g));
            }
        }
        Ok(Self { shift, scale, group_len })
    }

    pub fn dim(&self) -> usize {
        self.shift.len() * self.group_len
    }

    pub fn apply<T: Scalar>(&self, x: &mut [T]) {
        for s in x.chunks_exact_mut(self.dim()) {
            for (g, run) in s.chunks_exact_mut(self.group_len).enumerate() {
                let (m, k) = (T::lit(self.shift[g]), T::lit(1.0 / self.scale[g]));
                run.iter_mut().for_each(|v| *v = (*v - m) * k);
            }
        }
    }

    pub fn invert<T: Scalar>(&self, x: &mut [T]) {
        for s in x.chunks_exact_mut(self.dim()) {
            for (g, run) in s.chunks_exact_mut(self.group_len).enumerate() {
                let (m, k) = (T::lit(self.shift[g]), T::lit(self.scale[g]));
                run.iter_mut().for_each(|v| *v = *v * k + m);
            }
        }
    }
}

/// Maps positions to [-1, 1]^2 over the ROI bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelBox {
    pub center: [f64; 2],
    pub half: [f64; 2],
}

impl LabelBox {
    pub fn from_roi(roi: &HexRegion<f64>) -> Self {
        let (lo, hi) = roi.bounding_box();
        Self {
            center: [(lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0],
            half: [(hi.x - lo.x) / 2.0, (hi.y - lo.y) / 2.0],
        }
    }

    pub fn normalize(&self, p: Position2D<f64>) -> [f64; 2] {
        [(p.x - self.center[0]) / self.half[0], (p.y - self.center[1]) / self.half[1]]
    }

    pub fn denormalize(&self, u: [f64; 2]) -> Position2D<f64> {
        Position2D::new(u[0] * self.half[0] + self.center[0], u[1] * self.half[1] + self.center[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_811_and_seeded() {
        let s = assign_splits(10, 7);
        let count = |k| s.iter().filter(|&&v| v == k).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (8, 1, 1));
        assert_eq!(s, assign_splits(10, 7));
        let big = assign_splits(10_000, 1);
        assert_eq!(big.iter().filter(|&&v| v == Split::Test).count(), 1000);
        assert_ne!(big, assign_splits(10_000, 2));
    }

    #[test]
    fn constant_feature_is_rejected() {
        let x = [1.0, 5.0, 2.0, 5.0, 3.0, 5.0];
        assert!(matches!(Normalizer::fit(&x, 3, 2, 1), Err(Error::DegenerateFeature(1))));
    }

    #[test]
    fn normalizer_round_trip_and_moments() {
        let x: Vec<f64> = (0..40).map(|k| (k as f64 * 0.37).sin() * 10.0 + k as f64).collect();
        let nz = Normalizer::fit(&x, 10, 2, 2).unwrap();
        let mut y = x.clone();
        nz.apply(&mut y);
        for g in 0..2 {
            let vals: Vec<f64> = y.chunks_exact(4).flat_map(|s| s[2 * g..2 * g + 2].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        nz.invert(&mut y);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn label_box_round_trip() {
        let roi = HexRegion::new(Position2D::new(115.47, 0.0), 115.47, 0.0).unwrap();
        let b = LabelBox::from_roi(&roi);
        let p = Position2D::new(40.0, -70.0);
        let q = b.denormalize(b.normalize(p));
        assert!(q.distance(p) < 1e-12);
        let (lo, hi) = roi.bounding_box();
        assert_eq!(b.normalize(hi), [1.0, 1.0]);
        assert_eq!(b.normalize(lo), [-1.0, -1.0]);
    }

    #[test]
    fn cnn_input_layout_and_scale() {
        let a = [Complex::new(1.0f32, 2.0), Complex::new(3.0, 4.0)];
        let b = [Complex::new(0.0f32, 0.0), Complex::new(0.0, 1.0)];
        let x: Vec<f64> = cnn_input([&a, &b], SignalEncoding::RealImag).unwrap();
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / 8.0).sqrt();
        assert!((rms - 1.0).abs() < 1e-6);
        let k = x[0];
        let want = [1.0, 3.0, 2.0, 4.0, 0.0, 0.0, 0.0, 1.0];
        for (g, w) in x.iter().zip(want) {
            assert!((g - w * k).abs() < 1e-6);
        }
        assert!(cnn_input::<f64>([&a, &b[..1]], SignalEncoding::RealImag).is_err());
    }
}
