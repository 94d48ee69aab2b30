//! Layer definitions and a sequential network with explicit forward and
//! backward passes. Activations are row-major `[sample][channel][position]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// (channels, length) of one sample's activation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub length: usize,
}

impl Shape {
    pub fn new(channels: usize, length: usize) -> Self {
        Self { channels, length }
    }

    pub fn flat(n: usize) -> Self {
        Self { channels: n, length: 1 }
    }

    pub fn size(self) -> usize {
        self.channels * self.length
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Fully connected over all `channels * length` inputs.
    Dense { inputs: usize, outputs: usize },
    /// Valid (unpadded) strided 1-D convolution.
    Conv1d { in_channels: usize, out_channels: usize, kernel: usize, stride: usize },
    BatchNorm { channels: usize },
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    /// Adaptive average pooling to a fixed output length.
    AvgPool { output: usize },
}

impl LayerSpec {
    pub fn output_shape(&self, s: Shape) -> Result<Shape> {
        let bad = |msg: String| Err(Error::ShapeMismatch(msg));
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if s.size() != inputs {
                    return bad(format!("dense expects {inputs} inputs, got {}x{}", s.channels, s.length));
                }
                Ok(Shape::flat(outputs))
            }
            LayerSpec::Conv1d { in_channels, out_channels, kernel, stride } => {
                if s.channels != in_channels {
                    return bad(format!("conv expects {in_channels} channels, got {}", s.channels));
                }
                if s.length < kernel {
                    return bad(format!("conv kernel {kernel} longer than input {}", s.length));
                }
                Ok(Shape::new(out_channels, (s.length - kernel) / stride + 1))
            }
            LayerSpec::BatchNorm { channels } => {
                if s.channels != channels {
                    return bad(format!("batch norm expects {channels} channels, got {}", s.channels));
                }
                Ok(s)
            }
            LayerSpec::AvgPool { output } => {
                if s.length < output {
                    return bad(format!("pool output {output} longer than input {}", s.length));
                }
                Ok(Shape::new(s.channels, output))
            }
            LayerSpec::Relu | LayerSpec::LeakyRelu { .. } | LayerSpec::Tanh => Ok(s),
        }
    }

    pub fn n_params(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs + outputs,
            LayerSpec::Conv1d { in_channels, out_channels, kernel, .. } => in_channels * out_channels * kernel + out_channels,
            LayerSpec::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }

    /// Running statistics (not trained by gradient).
    pub fn n_buffers(&self) -> usize {
        match *self {
            LayerSpec::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }

    /// Multiply-accumulates per sample, for complexity reporting.
    pub fn macs(&self, s: Shape) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } => inputs * outputs,
            LayerSpec::Conv1d { in_channels, out_channels, kernel, stride } => {
                let lo = (s.length - kernel) / stride + 1;
                lo * out_channels * in_channels * kernel
            }
            _ => 0,
        }
    }
}

/// Per-layer values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub enum Cache<T> {
    None,
    Input(Vec<T>),
    Output(Vec<T>),
    BatchNorm { xhat: Vec<T>, inv_std: Vec<T>, mean: Vec<T>, var: Vec<T> },
}

/// Bin edges of adaptive average pooling.
/// Splits a row into its `stride` phases so that `x[t * stride + j]` is
/// `phases[j % stride][t + j / stride]`.
fn deinterleave<T: Scalar>(x: &[T], stride: usize) -> Vec<Vec<T>> {
    (0..stride).map(|r| x.iter().skip(r).step_by(stride).copied().collect()).collect()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (u, v) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = acc[k] + u[k] * v[k];
        }
    }
    let mut s = ra.iter().zip(rb).fold(T::zero(), |s, (&u, &v)| s + u * v);
    for a in acc {
        s = s + a;
    }
    s
}

fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv = *yv + a * xv;
    }
}

fn pool_bin(i: usize, output: usize, length: usize) -> (usize, usize) {
    let start = i * length / output;
    let end = ((i + 1) * length).div_ceil(output);
    (start, end)
}

/// Stack of layers over one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequential<T> {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub params: Vec<T>,
    /// Batch-norm running mean and variance.
    pub buffers: Vec<T>,
    shapes: Vec<Shape>,
    param_offsets: Vec<usize>,
    buffer_offsets: Vec<usize>,
}

impl<T: Scalar> Sequential<T> {
    /// Zero parameters, unit running variance.
    pub fn new(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        let mut shapes = vec![input];
        let mut param_offsets = Vec::with_capacity(layers.len());
        let mut buffer_offsets = Vec::with_capacity(layers.len());
        let (mut np, mut nb) = (0, 0);
        for l in &layers {
            shapes.push(l.output_shape(*shapes.last().unwrap())?);
            param_offsets.push(np);
            buffer_offsets.push(nb);
            np += l.n_params();
            nb += l.n_buffers();
        }
        let mut net = Self {
            input,
            layers,
            params: vec![T::zero(); np],
            buffers: vec![T::zero(); nb],
            shapes,
            param_offsets,
            buffer_offsets,
        };
        for k in 0..net.layers.len() {
            if let LayerSpec::BatchNorm { channels } = net.layers[k] {
                let p = net.param_offsets[k];
                net.params[p..p + channels].fill(T::one());
                let b = net.buffer_offsets[k];
                net.buffers[b + channels..b + 2 * channels].fill(T::one());
            }
        }
        Ok(net)
    }

    /// He-uniform weights for layers feeding a rectifier, Glorot otherwise;
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for k in 0..self.layers.len() {
            let (fan_in, fan_out, n_w) = match self.layers[k] {
                LayerSpec::Dense { inputs, outputs } => (inputs, outputs, inputs * outputs),
                LayerSpec::Conv1d { in_channels, out_channels, kernel, .. } => {
                    (in_channels * kernel, out_channels * kernel, in_channels * out_channels * kernel)
                }
                _ => continue,
            };
            let rectified = self.layers[k + 1..]
                .iter()
                .find(|l| !matches!(l, LayerSpec::BatchNorm { .. }))
                .is_some_and(|l| matches!(l, LayerSpec::Relu | LayerSpec::LeakyRelu { .. }));
            let bound = if rectified {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            let off = self.param_offsets[k];
            for w in &mut self.params[off..off + n_w] {
                *w = T::lit(rng.random_range(-bound..bound));
            }
        }
    }

    pub fn output(&self) -> Shape {
        *self.shapes.last().unwrap()
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn macs(&self) -> usize {
        self.layers.iter().zip(&self.shapes).map(|(l, s)| l.macs(*s)).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Sequential<U> {
        Sequential {
            input: self.input,
            layers: self.layers.clone(),
            params: self.params.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            buffers: self.buffers.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            shapes: self.shapes.clone(),
            param_offsets: self.param_offsets.clone(),
            buffer_offsets: self.buffer_offsets.clone(),
        }
    }

    fn check_input(&self, x: &[T], n: usize) -> Result<()> {
        if x.len() != n * self.input.size() {
            return Err(Error::ShapeMismatch(format!(
                "input of {} values is not {n} samples of {}x{}",
                x.len(),
                self.input.channels,
                self.input.length
            )));
        }
        Ok(())
    }

    /// Inference with running batch-norm statistics.
    pub fn predict(&self, x: &[T], n: usize) -> Result<Vec<T>> {
        self.check_input(x, n)?;
        let mut a = x.to_vec();
        for k in 0..self.layers.len() {
            a = self.layer_forward(k, a, n, false).0;
        }
        Ok(a)
    }

    /// Training-mode forward pass; batch norm uses batch statistics.
    pub fn forward_train(&self, x: &[T], n: usize) -> Result<(Vec<T>, Vec<Cache<T>>)> {
        self.check_input(x, n)?;
        let mut a = x.to_vec();
        let mut caches = Vec::with_capacity(self.layers.len());
        for k in 0..self.layers.len() {
            let (out, c) = self.layer_forward(k, a, n, true);
            a = out;
            caches.push(c);
        }
        Ok((a, caches))
    }

    /// Folds the batch statistics of a training pass into the running ones.
    pub fn update_running_stats(&mut self, caches: &[Cache<T>]) {
        let m = T::lit(BN_MOMENTUM);
        for (k, c) in caches.iter().enumerate() {
            if let (LayerSpec::BatchNorm { channels }, Cache::BatchNorm { mean, var, .. }) = (&self.layers[k], c) {
                let b = self.buffer_offsets[k];
                for ch in 0..*channels {
                    let rm = &mut self.buffers[b + ch];
                    *rm = (T::one() - m) * *rm + m * mean[ch];
                    let rv = &mut self.buffers[b + channels + ch];
                    *rv = (T::one() - m) * *rv + m * var[ch];
                }
            }
        }
    }

    fn layer_forward(&self, k: usize, x: Vec<T>, n: usize, train: bool) -> (Vec<T>, Cache<T>) {
        let s_in = self.shapes[k];
        let s_out = self.shapes[k + 1];
        let p = &self.params[self.param_offsets[k]..self.param_offsets[k] + self.layers[k].n_params()];
        match self.layers[k] {
            LayerSpec::Dense { inputs, outputs } => {
                let (w, b) = p.split_at(inputs * outputs);
                let mut y = vec![T::zero(); n * outputs];
                for (xi, yi) in x.chunks_exact(inputs).zip(y.chunks_exact_mut(outputs)) {
                    for (o, yo) in yi.iter_mut().enumerate() {
                        let row = &w[o * inputs..(o + 1) * inputs];
                        *yo = b[o] + row.iter().zip(xi).map(|(&a, &v)| a * v).sum::<T>();
                    }
                }
                (y, if train { Cache::Input(x) } else { Cache::None })
            }
            LayerSpec::Conv1d { in_channels, out_channels, kernel, stride } => {
                let (w, b) = p.split_at(in_channels * out_channels * kernel);
                let (li, lo) = (s_in.length, s_out.length);
                let mut y = vec![T::zero(); n * out_channels * lo];
                for (xs, ys) in x.chunks_exact(in_channels * li).zip(y.chunks_exact_mut(out_channels * lo)) {
                    let phases: Vec<_> = xs.chunks_exact(li).map(|r| deinterleave(r, stride)).collect();
                    for (co, yrow) in ys.chunks_exact_mut(lo).enumerate() {
                        yrow.fill(b[co]);
                        for (ci, ph) in phases.iter().enumerate() {
                            let wk = &w[(co * in_channels + ci) * kernel..(co * in_channels + ci + 1) * kernel];
                            for (j, &wv) in wk.iter().enumerate() {
                                let off = j / stride;
                                axpy(yrow, wv, &ph[j % stride][off..off + lo]);
                            }
                        }
                    }
                }
                (y, if train { Cache::Input(x) } else { Cache::None })
            }
            LayerSpec::BatchNorm { channels } => {
                let (gamma, beta) = p.split_at(channels);
                let l = s_in.length;
                let eps = T::lit(BN_EPS);
                let mut y = x;
                if train {
                    let count = T::from_usize_lossy(n * l);
                    let mut mean = vec![T::zero(); channels];
                    let mut var = vec![T::zero(); channels];
                    for s in y.chunks_exact(channels * l) {
                        for ch in 0..channels {
                            mean[ch] = mean[ch] + s[ch * l..(ch + 1) * l].iter().copied().sum::<T>();
                        }
                    }
                    for m in mean.iter_mut() {
                        *m = *m / count;
                    }
                    for s in y.chunks_exact(channels * l) {
                        for ch in 0..channels {
                            var[ch] = var[ch] + s[ch * l..(ch + 1) * l].iter().map(|&v| (v - mean[ch]) * (v - mean[ch])).sum::<T>();
                        }
                    }
                    for v in var.iter_mut() {
                        *v = *v / count;
                    }
                    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
                    let mut xhat = vec![T::zero(); y.len()];
                    for (s, h) in y.chunks_exact_mut(channels * l).zip(xhat.chunks_exact_mut(channels * l)) {
                        for ch in 0..channels {
                            for t in ch * l..(ch + 1) * l {
                                h[t] = (s[t] - mean[ch]) * inv_std[ch];
                                s[t] = gamma[ch] * h[t] + beta[ch];
                            }
                        }
                    }
                    // running variance tracks the unbiased estimate
                    let unbias = if n * l > 1 { count / (count - T::one()) } else { T::one() };
                    let var_u = var.iter().map(|&v| v * unbias).collect();
                    (y, Cache::BatchNorm { xhat, inv_std, mean, var: var_u })
                } else {
                    let bo = self.buffer_offsets[k];
                    let (rm, rv) = self.buffers[bo..bo + 2 * channels].split_at(channels);
                    for s in y.chunks_exact_mut(channels * l) {
                        for ch in 0..channels {
                            let scale = gamma[ch] / (rv[ch] + eps).sqrt();
                            for v in &mut s[ch * l..(ch + 1) * l] {
                                *v = (*v - rm[ch]) * scale + beta[ch];
                            }
                        }
                    }
                    (y, Cache::None)
                }
            }
            LayerSpec::Relu => {
                let y = x.iter().map(|&v| v.max(T::zero())).collect();
                (y, if train { Cache::Input(x) } else { Cache::None })
            }
            LayerSpec::LeakyRelu { slope } => {
                let a = T::lit(slope);
                let y = x.iter().map(|&v| if v > T::zero() { v } else { a * v }).collect();
                (y, if train { Cache::Input(x) } else { Cache::None })
            }
            LayerSpec::Tanh => {
                let y: Vec<T> = x.iter().map(|&v| v.tanh()).collect();
                let c = if train { Cache::Output(y.clone()) } else { Cache::None };
                (y, c)
            }
            LayerSpec::AvgPool { output } => {
                let (c, l) = (s_in.channels, s_in.length);
                let mut y = vec![T::zero(); n * c * output];
                for (xs, ys) in x.chunks_exact(l).zip(y.chunks_exact_mut(output)) {
                    for (i, yv) in ys.iter_mut().enumerate() {
                        let (a, b) = pool_bin(i, output, l);
                        *yv = xs[a..b].iter().copied().sum::<T>() / T::from_usize_lossy(b - a);
                    }
                }
                (y, Cache::None)
            }
        }
    }

    /// Gradients of the loss with respect to all parameters, given the
    /// loss gradient with respect to the network output.
    pub fn backward(&self, caches: &[Cache<T>], grad_out: &[T], n: usize) -> Result<Vec<T>> {
        let mut grads = vec![T::zero(); self.params.len()];
        let mut g = grad_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            let off = self.param_offsets[k];
            let np = self.layers[k].n_params();
            let need_input_grad = k > 0;
            g = self.layer_backward(k, &caches[k], g, n, &mut grads[off..off + np], need_input_grad);
        }
        if let Some(i) = grads.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        Ok(grads)
    }

    fn layer_backward(&self, k: usize, cache: &Cache<T>, g: Vec<T>, n: usize, gp: &mut [T], need_dx: bool) -> Vec<T> {
        let s_in = self.shapes[k];
        let s_out = self.shapes[k + 1];
        let p = &self.params[self.param_offsets[k]..self.param_offsets[k] + self.layers[k].n_params()];
        match (&self.layers[k], cache) {
            (&LayerSpec::Dense { inputs, outputs }, Cache::Input(x)) => {
                let (w, _) = p.split_at(inputs * outputs);
                let (gw, gb) = gp.split_at_mut(inputs * outputs);
                let mut dx = if need_dx { vec![T::zero(); n * inputs] } else { Vec::new() };
                for s in 0..n {
                    let xi = &x[s * inputs..(s + 1) * inputs];
                    let gi = &g[s * outputs..(s + 1) * outputs];
                    for (o, &go) in gi.iter().enumerate() {
                        gb[o] = gb[o] + go;
                        let row = &mut gw[o * inputs..(o + 1) * inputs];
                        for (r, &v) in row.iter_mut().zip(xi) {
                            *r = *r + go * v;
                        }
                        if need_dx {
                            let wrow = &w[o * inputs..(o + 1) * inputs];
                            for (d, &wv) in dx[s * inputs..(s + 1) * inputs].iter_mut().zip(wrow) {
                                *d = *d + go * wv;
                            }
                        }
                    }
                }
                dx
            }
            (&LayerSpec::Conv1d { in_channels, out_channels, kernel, stride }, Cache::Input(x)) => {
                let (w, _) = p.split_at(in_channels * out_channels * kernel);
                let (gw, gb) = gp.split_at_mut(in_channels * out_channels * kernel);
                let (li, lo) = (s_in.length, s_out.length);
                let mut dx = if need_dx { vec![T::zero(); n * in_channels * li] } else { Vec::new() };
                for s in 0..n {
                    let xs = &x[s * in_channels * li..(s + 1) * in_channels * li];
                    let gs = &g[s * out_channels * lo..(s + 1) * out_channels * lo];
                    let phases: Vec<_> = xs.chunks_exact(li).map(|r| deinterleave(r, stride)).collect();
                    let mut dphases: Vec<Vec<Vec<T>>> = if need_dx {
                        phases.iter().map(|ph| ph.iter().map(|v| vec![T::zero(); v.len()]).collect()).collect()
                    } else {
                        Vec::new()
                    };
                    for co in 0..out_channels {
                        let grow = &gs[co * lo..(co + 1) * lo];
                        gb[co] = gb[co] + grow.iter().copied().sum::<T>();
                        for (ci, ph) in phases.iter().enumerate() {
                            let base = (co * in_channels + ci) * kernel;
                            for j in 0..kernel {
                                let off = j / stride;
                                gw[base + j] = gw[base + j] + dot(grow, &ph[j % stride][off..off + lo]);
                                if need_dx {
                                    axpy(&mut dphases[ci][j % stride][off..off + lo], w[base + j], grow);
                                }
                            }
                        }
                    }
                    if need_dx {
                        for (ci, dph) in dphases.iter().enumerate() {
                            let drow = &mut dx[s * in_channels * li + ci * li..s * in_channels * li + (ci + 1) * li];
                            for (r, d) in dph.iter().enumerate() {
                                for (u, &v) in d.iter().enumerate() {
                                    drow[u * stride + r] = v;
                                }
                            }
                        }
                    }
                }
                dx
            }
            (&LayerSpec::BatchNorm { channels }, Cache::BatchNorm { xhat, inv_std, .. }) => {
                let (gamma, _) = p.split_at(channels);
                let (gg, gbeta) = gp.split_at_mut(channels);
                let l = s_in.length;
                let m = T::from_usize_lossy(n * l);
                let mut sum_dy = vec![T::zero(); channels];
                let mut sum_dy_xhat = vec![T::zero(); channels];
                for s in 0..n {
                    for ch in 0..channels {
                        let r = s * channels * l + ch * l..s * channels * l + (ch + 1) * l;
                        for (&dy, &h) in g[r.clone()].iter().zip(&xhat[r]) {
                            sum_dy[ch] = sum_dy[ch] + dy;
                            sum_dy_xhat[ch] = sum_dy_xhat[ch] + dy * h;
                        }
                    }
                }
                for ch in 0..channels {
                    gg[ch] = gg[ch] + sum_dy_xhat[ch];
                    gbeta[ch] = gbeta[ch] + sum_dy[ch];
                }
                let mut dx = g;
                for s in 0..n {
                    for ch in 0..channels {
                        let c = gamma[ch] * inv_std[ch] / m;
                        let r = s * channels * l + ch * l..s * channels * l + (ch + 1) * l;
                        for (d, &h) in dx[r.clone()].iter_mut().zip(&xhat[r]) {
                            *d = c * (m * *d - sum_dy[ch] - h * sum_dy_xhat[ch]);
                        }
                    }
                }
                dx
            }
            (LayerSpec::Relu, Cache::Input(x)) => g.iter().zip(x).map(|(&d, &v)| if v > T::zero() { d } else { T::zero() }).collect(),
            (&LayerSpec::LeakyRelu { slope }, Cache::Input(x)) => {
                let a = T::lit(slope);
                g.iter().zip(x).map(|(&d, &v)| if v > T::zero() { d } else { a * d }).collect()
            }
            (LayerSpec::Tanh, Cache::Output(y)) => g.iter().zip(y).map(|(&d, &v)| d * (T::one() - v * v)).collect(),
            (&LayerSpec::AvgPool { output }, _) => {
                let l = s_in.length;
                let mut dx = vec![T::zero(); n * s_in.channels * l];
                for (ds, gs) in dx.chunks_exact_mut(l).zip(g.chunks_exact(output)) {
                    for (i, &gv) in gs.iter().enumerate() {
                        let (a, b) = pool_bin(i, output, l);
                        let share = gv / T::from_usize_lossy(b - a);
                        for d in &mut ds[a..b] {
                            *d = *d + share;
                        }
                    }
                }
                dx
            }
            _ => unreachable!("backward without a training-mode cache"),
        }
    }
}
