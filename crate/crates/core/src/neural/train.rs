//! Mean-squared-error training with AdamW and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::Sequential;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seeds::derive_seed;

/// Mean over all output elements of the squared error, and its gradient.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> (T, Vec<T>) {
    let k = T::from_usize_lossy(pred.len().max(1));
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let e = p - t;
            loss = loss + e * e;
            two * e / k
        })
        .collect();
    (loss / k, grad)
}

/// Loss and gradient on one batch in training mode.
pub fn loss_and_grad<T: Scalar>(net: &Sequential<T>, x: &[T], y: &[T], n: usize) -> Result<(T, Vec<T>)> {
    let (out, caches) = net.forward_train(x, n)?;
    let (loss, g) = mse_loss(&out, y);
    Ok((loss, net.backward(&caches, &g, n)?))
}

/// Largest relative deviation between the analytic gradient and central
/// differences of the training-mode loss, over all parameters. The
/// denominator is floored at `floor` so near-zero entries compare absolutely.
pub fn gradient_check<T: Scalar>(net: &Sequential<T>, x: &[T], y: &[T], n: usize, h: T, floor: T) -> Result<T> {
    let (_, g) = loss_and_grad(net, x, y, n)?;
    let mut probe = net.clone();
    let mut worst = T::zero();
    for k in 0..net.params.len() {
        let p0 = net.params[k];
        probe.params[k] = p0 + h;
        let (up, _) = mse_loss(&probe.forward_train(x, n)?.0, y);
        probe.params[k] = p0 - h;
        let (down, _) = mse_loss(&probe.forward_train(x, n)?.0, y);
        probe.params[k] = p0;
        let fd = (up - down) / (h + h);
        let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(floor);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Train loss above this multiple of the first epoch's loss counts
    /// towards divergence.
    pub divergence_factor: f64,
    pub divergence_epochs: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            batch_size: 256,
            max_epochs: 100,
            patience: 10,
            divergence_factor: 10.0,
            divergence_epochs: 3,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.divergence_factor > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training settings {self:?}")))
        }
    }
}

/// Decoupled weight decay Adam.
#[derive(Clone, Debug)]
pub struct AdamW<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
    s: TrainSettings,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(n_params: usize, settings: &TrainSettings) -> Self {
        Self { m: vec![T::zero(); n_params], v: vec![T::zero(); n_params], step: 0, s: settings.clone() }
    }

    pub fn update(&mut self, params: &mut [T], grads: &[T]) {
        self.step += 1;
        let (b1, b2) = (T::lit(self.s.beta1), T::lit(self.s.beta2));
        let lr = T::lit(self.s.learning_rate);
        let wd = T::lit(self.s.weight_decay);
        let eps = T::lit(self.s.eps);
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = b1 * self.m[k] + (T::one() - b1) * g;
            self.v[k] = b2 * self.v[k] + (T::one() - b2) * g * g;
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] = params[k] - lr * (mh / (vh.sqrt() + eps) + wd * params[k]);
        }
    }
}

/// Input rows and targets, both flat.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a, T> {
    pub x: &'a [T],
    pub y: &'a [T],
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Loss over a set in inference mode, evaluated in chunks.
pub fn evaluate<T: Scalar>(net: &Sequential<T>, data: Batch<T>, chunk: usize) -> Result<f64> {
    let (din, dout) = (net.input.size(), net.output().size());
    let mut total = 0.0;
    let mut start = 0;
    while start < data.n {
        let m = chunk.min(data.n - start);
        let out = net.predict(&data.x[start * din..(start + m) * din], m)?;
        let (l, _) = mse_loss(&out, &data.y[start * dout..(start + m) * dout]);
        total += l.to_f64_lossy() * m as f64;
        start += m;
    }
    Ok(total / data.n.max(1) as f64)
}

/// Mini-batch training. Each epoch's shuffle is seeded from `seed` and the
/// epoch index; the parameters with the lowest validation loss are kept.
pub fn train<T: Scalar>(
    net: &mut Sequential<T>,
    train: Batch<T>,
    val: Batch<T>,
    settings: &TrainSettings,
    seed: u64,
) -> Result<TrainReport> {
    train_with(net, train, val, settings, seed, |_, _, _| {})
}

/// As [`train`], calling `on_epoch(epoch, train_loss, val_loss)` after each epoch.
pub fn train_with<T: Scalar>(
    net: &mut Sequential<T>,
    train: Batch<T>,
    val: Batch<T>,
    settings: &TrainSettings,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64, f64),
) -> Result<TrainReport> {
    settings.validate()?;
    let (din, dout) = (net.input.size(), net.output().size());
    if train.n == 0 || train.x.len() != train.n * din || train.y.len() != train.n * dout {
        return Err(Error::ShapeMismatch("training split".into()));
    }
    if val.x.len() != val.n * din || val.y.len() != val.n * dout {
        return Err(Error::ShapeMismatch("validation split".into()));
    }
    let mut opt = AdamW::new(net.n_params(), settings);
    let mut report = TrainReport { best_val_loss: f64::INFINITY, ..Default::default() };
    let mut best = (net.params.clone(), net.buffers.clone());
    let mut initial = None;
    let mut bad_epochs = 0;
    let mut since_best = 0;
    let bs = settings.batch_size;
    let mut xb = Vec::with_capacity(bs * din);
    let mut yb = Vec::with_capacity(bs * dout);
    for epoch in 0..settings.max_epochs {
        let mut order: Vec<usize> = (0..train.n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, epoch as u64)));
        let mut sum = 0.0;
        for idx in order.chunks(bs) {
            xb.clear();
            yb.clear();
            for &i in idx {
                xb.extend_from_slice(&train.x[i * din..(i + 1) * din]);
                yb.extend_from_slice(&train.y[i * dout..(i + 1) * dout]);
            }
            let (out, caches) = net.forward_train(&xb, idx.len())?;
            let (loss, g) = mse_loss(&out, &yb);
            let grads = net.backward(&caches, &g, idx.len())?;
            net.update_running_stats(&caches);
            opt.update(&mut net.params, &grads);
            sum += loss.to_f64_lossy() * idx.len() as f64;
        }
        let tl = sum / train.n as f64;
        let first = *initial.get_or_insert(tl);
        if !tl.is_finite() || tl > settings.divergence_factor * first {
            bad_epochs += 1;
            if bad_epochs >= settings.divergence_epochs {
                return Err(Error::Diverged(epoch));
            }
        } else {
            bad_epochs = 0;
        }
        let vl = if val.n > 0 { evaluate(net, val, bs.max(256))? } else { tl };
        report.train_loss.push(tl);
        report.val_loss.push(vl);
        on_epoch(epoch, tl, vl);
        if vl < report.best_val_loss {
            report.best_val_loss = vl;
            report.best_epoch = epoch;
            best = (net.params.clone(), net.buffers.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= settings.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    net.params = best.0;
    net.buffers = best.1;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::super::layers::{LayerSpec, Shape};
    use super::*;

    fn tiny() -> Sequential<f64> {
        let mut net = Sequential::new(
            Shape::flat(3),
            vec![LayerSpec::Dense { inputs: 3, outputs: 6 }, LayerSpec::Tanh, LayerSpec::Dense { inputs: 6, outputs: 2 }],
        )
        .unwrap();
        net.init(&mut ChaCha8Rng::seed_from_u64(5));
        net
    }

    fn toy_data(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for k in 0..n {
            let a = (k as f64 * 0.61).sin();
            let b = (k as f64 * 0.23).cos();
            let c = ((k * 7) % 11) as f64 / 11.0 - 0.5;
            x.extend([a, b, c]);
            y.extend([0.5 * a - b, a * c + 0.2]);
        }
        (x, y)
    }

    fn small_cnn() -> Sequential<f64> {
        let mut net = Sequential::new(
            Shape::new(2, 9),
            vec![
                LayerSpec::Conv1d { in_channels: 2, out_channels: 2, kernel: 3, stride: 2 },
                LayerSpec::BatchNorm { channels: 2 },
                LayerSpec::LeakyRelu { slope: 0.1 },
                LayerSpec::AvgPool { output: 3 },
                LayerSpec::Dense { inputs: 6, outputs: 9 },
                LayerSpec::Tanh,
                LayerSpec::Dense { inputs: 9, outputs: 2 },
                LayerSpec::Tanh,
            ],
        )
        .unwrap();
        net.init(&mut ChaCha8Rng::seed_from_u64(11));
        // move batch-norm off its identity initialisation
        net.params[14..18].copy_from_slice(&[1.3, 0.7, 0.2, -0.4]);
        net
    }

    #[test]
    fn gradients_match_finite_differences() {
        let net = small_cnn();
        assert_eq!(net.n_params(), 101);
        let n = 5;
        let x: Vec<f64> = (0..n * 18).map(|k| ((k * 29 % 17) as f64 - 8.0) / 5.0 + (k as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..n * 2).map(|k| (k as f64 * 0.9).cos() * 0.8).collect();
        let worst = gradient_check(&net, &x, &y, n, 1e-5, 1e-6).unwrap();
        assert!(worst < 1e-4, "{worst}");

        let mut mlp = Sequential::new(
            Shape::flat(4),
            vec![
                LayerSpec::Dense { inputs: 4, outputs: 10 },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: 10, outputs: 4 },
                LayerSpec::Relu,
                LayerSpec::Dense { inputs: 4, outputs: 2 },
            ],
        )
        .unwrap();
        mlp.init(&mut ChaCha8Rng::seed_from_u64(12));
        let (x, y) = toy_data(8);
        let x: Vec<f64> = x.chunks(3).flat_map(|r| [r[0], r[1], r[2], r[0] * r[1]]).collect();
        let worst = gradient_check(&mlp, &x, &y, 8, 1e-5, 1e-6).unwrap();
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn tanh_output_gradient_is_bounded() {
        let net = small_cnn();
        let x = vec![0.5; 18];
        let (out, caches) = net.forward_train(&x, 1).unwrap();
        let g = net.backward(&caches, &[1.0, 1.0], 1).unwrap();
        assert!(out.iter().all(|v| v.abs() < 1.0));
        // the last layer's weight gradients are (1 - y^2) h with |h| < 1
        let n = g.len();
        assert!(g[n - 20..].iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn loss_by_hand() {
        let (l, g) = mse_loss(&[1.0, 3.0], &[0.0, 1.0]);
        assert_eq!(l, 2.5);
        assert_eq!(g, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_loss_batch_has_zero_gradient() {
        let net = tiny();
        let (x, _) = toy_data(4);
        let y = net.predict(&x, 4).unwrap();
        let (l, g) = loss_and_grad(&net, &x, &y, 4).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adamw_first_step_by_hand() {
        let s = TrainSettings { weight_decay: 0.1, ..Default::default() };
        let mut opt = AdamW::<f64>::new(2, &s);
        let mut p = vec![1.0, -2.0];
        opt.update(&mut p, &[0.5, -3.0]);
        // bias-corrected first step is lr * sign(g) up to eps
        assert!((p[0] - (1.0 - 1e-3 * (1.0 + 0.1))).abs() < 1e-10);
        assert!((p[1] - (-2.0 + 1e-3 * (1.0 + 0.2))).abs() < 1e-10);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let mut net = tiny();
        let before = net.params.clone();
        let (x, y) = toy_data(64);
        let s = TrainSettings { learning_rate: 0.0, max_epochs: 3, batch_size: 16, ..Default::default() };
        train(&mut net, Batch { x: &x, y: &y, n: 64 }, Batch { x: &x, y: &y, n: 64 }, &s, 1).unwrap();
        assert_eq!(net.params, before);
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let (x, y) = toy_data(512);
        let (xv, yv) = toy_data(64);
        let s = TrainSettings { learning_rate: 1e-2, max_epochs: 40, batch_size: 32, ..Default::default() };
        let run = || {
            let mut net = tiny();
            let r = train(&mut net, Batch { x: &x, y: &y, n: 512 }, Batch { x: &xv, y: &yv, n: 64 }, &s, 9).unwrap();
            (net, r)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a.params, b.params);
        assert_eq!(ra, rb);
        assert!(ra.best_val_loss < 0.2 * ra.val_loss[0], "{ra:?}");
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let (x, mut y) = toy_data(256);
        y.iter_mut().for_each(|v| *v *= 1e3);
        let mut net = Sequential::new(Shape::flat(3), vec![LayerSpec::Dense { inputs: 3, outputs: 2 }]).unwrap();
        net.init(&mut ChaCha8Rng::seed_from_u64(1));
        let s = TrainSettings { learning_rate: 1e6, beta1: 0.0, beta2: 0.0, max_epochs: 20, batch_size: 256, weight_decay: 1.5, ..Default::default() };
        let r = train(&mut net, Batch { x: &x, y: &y, n: 256 }, Batch { x: &[], y: &[], n: 0 }, &s, 0);
        assert!(matches!(r, Err(Error::Diverged(_))), "{r:?}");
    }
}
