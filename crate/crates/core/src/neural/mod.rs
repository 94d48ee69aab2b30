//! Learned fusion: the parameter-level MLP and the signal-level CNN, on a
//! small dense/conv engine with explicit backpropagation.

pub mod checkpoint;
pub mod data;
pub mod layers;
pub mod train;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::LinkEstimate;
use crate::geometry::Position2D;
use crate::scalar::Scalar;

pub use data::{assign_splits, cnn_input, mlp_features, parameter_tuple, LabelBox, Normalizer, SignalEncoding, Split};
pub use layers::{LayerSpec, Sequential, Shape};
pub use train::{gradient_check, train, train_with, AdamW, Batch, TrainReport, TrainSettings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: [usize; 2],
    pub output_dim: usize,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self { input_dim: 4, hidden: [128, 64], output_dim: 2 }
    }
}

impl MlpSpec {
    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("MLP sizes must be positive: {self:?}")));
        }
        let [h1, h2] = self.hidden;
        Ok(vec![
            LayerSpec::Dense { inputs: self.input_dim, outputs: h1 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: h1, outputs: h2 },
            LayerSpec::Relu,
            LayerSpec::Dense { inputs: h2, outputs: self.output_dim },
        ])
    }

    pub fn n_params(&self) -> usize {
        let [h1, h2] = self.hidden;
        (self.input_dim + 1) * h1 + (h1 + 1) * h2 + (h2 + 1) * self.output_dim
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnSpec {
    pub input_len: usize,
    pub conv: [ConvSpec; 5],
    pub leaky_slope: f64,
    /// Output length of the adaptive average pool.
    pub pool: usize,
    /// Widths of the first two dense layers; the third outputs 2.
    pub head: [usize; 2],
    pub encoding: SignalEncoding,
}

impl Default for CnnSpec {
    fn default() -> Self {
        let c = |channels| ConvSpec { channels, kernel: 7, stride: 2 };
        Self {
            input_len: 3276,
            conv: [c(16), c(32), c(32), c(64), c(64)],
            leaky_slope: 0.01,
            pool: 8,
            head: [256, 64],
            encoding: SignalEncoding::RealImag,
        }
    }
}

impl CnnSpec {
    pub const INPUT_CHANNELS: usize = 4;

    pub fn with_channels(mut self, channels: [usize; 5]) -> Self {
        for (c, n) in self.conv.iter_mut().zip(channels) {
            c.channels = n;
        }
        self
    }

    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        let bad = self.conv.iter().any(|c| c.channels == 0 || c.kernel == 0 || c.stride == 0)
            || self.pool == 0
            || self.head.contains(&0)
            || !(self.leaky_slope >= 0.0);
        if bad {
            return Err(Error::Config(format!("CNN sizes must be positive: {self:?}")));
        }
        let mut out = Vec::new();
        let mut cin = Self::INPUT_CHANNELS;
        for c in &self.conv {
            out.push(LayerSpec::Conv1d { in_channels: cin, out_channels: c.channels, kernel: c.kernel, stride: c.stride });
            out.push(LayerSpec::BatchNorm { channels: c.channels });
            out.push(LayerSpec::LeakyRelu { slope: self.leaky_slope });
            cin = c.channels;
        }
        out.push(LayerSpec::AvgPool { output: self.pool });
        let [h1, h2] = self.head;
        out.extend([
            LayerSpec::Dense { inputs: cin * self.pool, outputs: h1 },
            LayerSpec::LeakyRelu { slope: self.leaky_slope },
            LayerSpec::Dense { inputs: h1, outputs: h2 },
            LayerSpec::LeakyRelu { slope: self.leaky_slope },
            LayerSpec::Dense { inputs: h2, outputs: 2 },
            LayerSpec::Tanh,
        ]);
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Mlp(MlpSpec),
    Cnn(CnnSpec),
}

impl ModelKind {
    pub fn input_shape(&self) -> Shape {
        match self {
            ModelKind::Mlp(s) => Shape::flat(s.input_dim),
            ModelKind::Cnn(s) => Shape::new(CnnSpec::INPUT_CHANNELS, s.input_len),
        }
    }

    pub fn layers(&self) -> Result<Vec<LayerSpec>> {
        match self {
            ModelKind::Mlp(s) => s.layers(),
            ModelKind::Cnn(s) => s.layers(),
        }
    }

    /// (groups, group length) of the input normaliser.
    pub fn normalizer_groups(&self) -> (usize, usize) {
        match self {
            ModelKind::Mlp(s) => (s.input_dim, 1),
            ModelKind::Cnn(s) => (CnnSpec::INPUT_CHANNELS, s.input_len),
        }
    }

    pub fn build<T: Scalar>(&self) -> Result<Sequential<T>> {
        Sequential::new(self.input_shape(), self.layers()?)
    }
}

/// A network together with everything needed to map raw inputs to positions.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedModel<T> {
    pub kind: ModelKind,
    pub net: Sequential<T>,
    pub input_norm: Normalizer,
    pub labels: LabelBox,
    /// Receiver boresights used for the MLP's local-angle features.
    pub boresights: [f64; 2],
    /// Transmit power of the training data; `None` for a model trained
    /// across powers.
    pub tx_power_dbm: Option<f64>,
}

impl<T: Scalar> LearnedModel<T> {
    /// Positions for `n` raw (unnormalised) input rows. Reentrant.
    pub fn predict_raw(&self, x: &[T], n: usize) -> Result<Vec<Position2D<f64>>> {
        let mut x = x.to_vec();
        self.input_norm.apply(&mut x);
        let out = self.net.predict(&x, n)?;
        Ok(out
            .chunks_exact(2)
            .map(|u| self.labels.denormalize([u[0].to_f64_lossy(), u[1].to_f64_lossy()]))
            .collect())
    }

    pub fn predict_estimates(&self, est: &[LinkEstimate<f64>; 2]) -> Result<Position2D<f64>> {
        if !matches!(self.kind, ModelKind::Mlp(_)) {
            return Err(Error::ShapeMismatch("parameter input given to a signal model".into()));
        }
        let f = mlp_features(&parameter_tuple(est), self.boresights).map(T::lit);
        Ok(self.predict_raw(&f, 1)?[0])
    }

    pub fn predict_signals(&self, y: [&[Complex<f32>]; 2]) -> Result<Position2D<f64>> {
        let ModelKind::Cnn(spec) = &self.kind else {
            return Err(Error::ShapeMismatch("signal input given to a parameter model".into()));
        };
        let x = cnn_input::<T>(y, spec.encoding)?;
        Ok(self.predict_raw(&x, 1)?[0])
    }
}
