//! Training data for the learned schemes: generation, files, training and
//! held-out evaluation.
//!
//! A dataset directory holds `signals.bin` (signal dump, two records per
//! sample in index order), `params.csv`, `labels.csv`, `splits.csv` and
//! `manifest.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fuse, signal_f32, trial_target, MetricsSummary, SchemeSummary, TrialContext};
use crate::dump::{self, SignalRecord};
use crate::error::{Error, Result};
use crate::neural::{
    assign_splits, cnn_input, mlp_features, parameter_tuple, train_with, Batch, CnnSpec, LabelBox, LearnedModel, MlpSpec,
    ModelKind, Normalizer, SignalEncoding, Split, TrainReport, TrainSettings,
};
use crate::scalar::Scalar;
use crate::seeds::{derive_seed, derive_tagged};
use crate::{Chain, Estimate, Position, ScenarioConfig, Scheme};

pub const FORMAT_VERSION: u32 = 1;

/// Candidate indices simulated per parallel round while filling a dataset.
const CHUNK: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub index: usize,
    pub p_true: Position,
    /// (theta_1, d_1, theta_2, d_2), global angles.
    pub params: [f64; 4],
    pub tx_power_dbm: f64,
    pub seed: u64,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config_hash: u64,
    pub n_subcarriers: usize,
    pub records: Vec<DatasetRecord>,
    /// `[record][receiver][subcarrier]`, empty when signals were not kept.
    pub signals: Vec<Complex<f32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n: usize,
    pub seed: u64,
    /// Record `k` uses power `k mod len`.
    pub tx_powers_dbm: Vec<f64>,
    pub keep_signals: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub n_records: usize,
    pub n_subcarriers: usize,
    pub seed: u64,
    pub tx_powers_dbm: Vec<f64>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub has_signals: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_signals(&self) -> bool {
        !self.signals.is_empty()
    }

    pub fn signal(&self, k: usize, rx: usize) -> &[Complex<f32>] {
        let nc = self.n_subcarriers;
        &self.signals[(2 * k + rx) * nc..(2 * k + rx + 1) * nc]
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.records[k].split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.records.iter().filter(|r| r.split == split).count()
    }

    pub fn manifest(&self, seed: u64, tx_powers_dbm: &[f64]) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            config_hash: format!("{:016x}", self.config_hash),
            n_records: self.len(),
            n_subcarriers: self.n_subcarriers,
            seed,
            tx_powers_dbm: tx_powers_dbm.to_vec(),
            n_train: self.count(Split::Train),
            n_val: self.count(Split::Val),
            n_test: self.count(Split::Test),
            has_signals: self.has_signals(),
        }
    }
}

/// Simulates `spec.n` samples. A candidate whose sensing chain fails is
/// skipped and the next index is tried, so indices may have gaps.
pub fn generate_dataset(chain: &Chain, spec: &DatasetSpec) -> Result<Dataset> {
    if spec.n == 0 || spec.tx_powers_dbm.is_empty() {
        return Err(Error::Config("dataset needs n > 0 and at least one power".into()));
    }
    let chains: Vec<Chain> = spec.tx_powers_dbm.iter().map(|&p| chain.with_tx_power(p)).collect();
    let nc = chain.cfg.ofdm.n_subcarriers;
    type Sample = (DatasetRecord, Option<[Vec<Complex<f32>>; 2]>);
    let mut samples: Vec<Sample> = Vec::with_capacity(spec.n);
    let mut next = 0usize;
    while samples.len() < spec.n {
        let batch: Vec<Option<Sample>> = (next..next + CHUNK)
            .into_par_iter()
            .map(|k| {
                let c = &chains[k % chains.len()];
                let p = trial_target(c, spec.seed, k);
                let seed = derive_seed(spec.seed, k as u64);
                let obs = c.observe(p, seed).ok()?;
                let est: [Estimate; 2] = std::array::from_fn(|i| c.attach(&obs[i].1, i, crate::Sigmas { sigma_d: 1.0, sigma_theta: 1.0 }));
                let rec = DatasetRecord {
                    index: k,
                    p_true: p,
                    params: parameter_tuple(&est),
                    tx_power_dbm: c.cfg.power.tx_power_dbm,
                    seed,
                    split: Split::Train,
                };
                let sig = spec.keep_signals.then(|| [signal_f32(&obs[0].0), signal_f32(&obs[1].0)]);
                Some((rec, sig))
            })
            .collect();
        samples.extend(batch.into_iter().flatten().take(spec.n - samples.len()));
        next += CHUNK;
    }
    let splits = assign_splits(spec.n, derive_tagged(spec.seed, u64::MAX, 0x5e1));
    let mut records = Vec::with_capacity(spec.n);
    let mut signals = Vec::with_capacity(if spec.keep_signals { spec.n * 2 * nc } else { 0 });
    for ((mut rec, sig), split) in samples.into_iter().zip(splits) {
        rec.split = split;
        records.push(rec);
        if let Some([a, b]) = sig {
            signals.extend(a);
            signals.extend(b);
        }
    }
    Ok(Dataset { config_hash: chain.cfg.hash64(), n_subcarriers: nc, records, signals })
}

#[derive(Serialize, Deserialize)]
struct ParamRow {
    index: usize,
    theta_hat_1: f64,
    d_hat_1: f64,
    theta_hat_2: f64,
    d_hat_2: f64,
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    index: usize,
    x: f64,
    y: f64,
    tx_power_dbm: f64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SplitRow {
    index: usize,
    split: Split,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>, spec: &DatasetSpec) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut p = csv::Writer::from_path(dir.join("params.csv")).map_err(csv_err)?;
    let mut l = csv::Writer::from_path(dir.join("labels.csv")).map_err(csv_err)?;
    let mut s = csv::Writer::from_path(dir.join("splits.csv")).map_err(csv_err)?;
    for r in &ds.records {
        let [theta_hat_1, d_hat_1, theta_hat_2, d_hat_2] = r.params;
        p.serialize(ParamRow { index: r.index, theta_hat_1, d_hat_1, theta_hat_2, d_hat_2 }).map_err(csv_err)?;
        l.serialize(LabelRow { index: r.index, x: r.p_true.x, y: r.p_true.y, tx_power_dbm: r.tx_power_dbm, seed: r.seed })
            .map_err(csv_err)?;
        s.serialize(SplitRow { index: r.index, split: r.split }).map_err(csv_err)?;
    }
    p.flush()?;
    l.flush()?;
    s.flush()?;
    if ds.has_signals() {
        let mut w = BufWriter::new(File::create(dir.join("signals.bin"))?);
        dump::write_header(&mut w)?;
        for (k, r) in ds.records.iter().enumerate() {
            for rx in 0..2 {
                let rec = SignalRecord {
                    config_hash: ds.config_hash,
                    rx_index: rx as u8 + 1,
                    p_true: r.p_true,
                    seed: r.seed,
                    y: ds.signal(k, rx).to_vec(),
                };
                dump::write_record(&mut w, &rec)?;
            }
        }
        w.flush()?;
    }
    let manifest = ds.manifest(spec.seed, &spec.tx_powers_dbm);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Loads a dataset directory; with `expect` the config hash must match.
pub fn load_dataset(dir: impl AsRef<Path>, expect: Option<&ScenarioConfig>) -> Result<(Dataset, Manifest)> {
    let dir = dir.as_ref();
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)
        .map_err(|e| Error::Format(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("dataset format version {}", manifest.format_version)));
    }
    let hash = u64::from_str_radix(&manifest.config_hash, 16).map_err(|e| Error::Format(format!("config hash: {e}")))?;
    if let Some(cfg) = expect {
        if cfg.hash64() != hash {
            return Err(Error::Format(format!("dataset was generated for config {:016x}, not {:016x}", hash, cfg.hash64())));
        }
    }
    let params: Vec<ParamRow> = read_rows(&dir.join("params.csv"))?;
    let labels: Vec<LabelRow> = read_rows(&dir.join("labels.csv"))?;
    let splits: Vec<SplitRow> = read_rows(&dir.join("splits.csv"))?;
    let n = manifest.n_records;
    if params.len() != n || labels.len() != n || splits.len() != n {
        return Err(Error::Format("record counts differ between files".into()));
    }
    let mut records = Vec::with_capacity(n);
    for ((p, l), s) in params.into_iter().zip(labels).zip(splits) {
        if p.index != l.index || p.index != s.index {
            return Err(Error::Format(format!("index mismatch at record {}", p.index)));
        }
        records.push(DatasetRecord {
            index: p.index,
            p_true: Position::new(l.x, l.y),
            params: [p.theta_hat_1, p.d_hat_1, p.theta_hat_2, p.d_hat_2],
            tx_power_dbm: l.tx_power_dbm,
            seed: l.seed,
            split: s.split,
        });
    }
    let mut signals = Vec::new();
    if manifest.has_signals {
        let dumped = dump::read_all(BufReader::new(File::open(dir.join("signals.bin"))?), Some(hash))?;
        if dumped.len() != 2 * n {
            return Err(Error::Format(format!("{} signal records for {n} samples", dumped.len())));
        }
        signals.reserve(2 * n * manifest.n_subcarriers);
        for (k, d) in dumped.into_iter().enumerate() {
            let r = &records[k / 2];
            if d.seed != r.seed || d.rx_index as usize != k % 2 + 1 || d.y.len() != manifest.n_subcarriers {
                return Err(Error::Format(format!("signal record {k} does not match sample {}", r.index)));
            }
            signals.extend(d.y);
        }
    }
    let ds = Dataset { config_hash: hash, n_subcarriers: manifest.n_subcarriers, records, signals };
    Ok((ds, manifest))
}

fn boresights(cfg: &ScenarioConfig) -> [f64; 2] {
    [cfg.boresight_rx(0), cfg.boresight_rx(1)]
}

fn labels_for(ds: &Dataset, idx: &[usize], labels: &LabelBox) -> Vec<f64> {
    idx.iter().flat_map(|&k| labels.normalize(ds.records[k].p_true)).collect()
}

/// Raw PF-MLP features of the given records.
pub fn mlp_inputs(ds: &Dataset, idx: &[usize], cfg: &ScenarioConfig) -> Vec<f64> {
    let b = boresights(cfg);
    idx.iter().flat_map(|&k| mlp_features(&ds.records[k].params, b)).collect()
}

/// Raw SF-CNN inputs of the given records.
pub fn cnn_inputs<T: Scalar>(ds: &Dataset, idx: &[usize], encoding: SignalEncoding) -> Result<Vec<T>> {
    if !ds.has_signals() {
        return Err(Error::Config("dataset has no signals".into()));
    }
    let mut out = Vec::with_capacity(idx.len() * 4 * ds.n_subcarriers);
    for &k in idx {
        out.extend(cnn_input::<T>([ds.signal(k, 0), ds.signal(k, 1)], encoding)?);
    }
    Ok(out)
}

fn single_power(ds: &Dataset) -> Option<f64> {
    let p = ds.records.first()?.tx_power_dbm;
    ds.records.iter().all(|r| r.tx_power_dbm == p).then_some(p)
}

fn fit_and_train<T: Scalar>(
    kind: ModelKind,
    cfg: &ScenarioConfig,
    ds: &Dataset,
    mut x_train: Vec<T>,
    mut x_val: Vec<T>,
    settings: &TrainSettings,
    seed: u64,
    on_epoch: impl FnMut(usize, f64, f64),
) -> Result<(LearnedModel<T>, TrainReport)> {
    let labels = LabelBox::from_roi(&cfg.roi());
    let (tr, va) = (ds.indices(Split::Train), ds.indices(Split::Val));
    let (groups, len) = kind.normalizer_groups();
    let norm = Normalizer::fit(&x_train, tr.len(), groups, len)?;
    norm.apply(&mut x_train);
    norm.apply(&mut x_val);
    let y_train: Vec<T> = labels_for(ds, &tr, &labels).into_iter().map(T::lit).collect();
    let y_val: Vec<T> = labels_for(ds, &va, &labels).into_iter().map(T::lit).collect();
    let mut net = kind.build::<T>()?;
    net.init(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(derive_tagged(seed, 0, 0x1417)));
    let report = train_with(
        &mut net,
        Batch { x: &x_train, y: &y_train, n: tr.len() },
        Batch { x: &x_val, y: &y_val, n: va.len() },
        settings,
        seed,
        on_epoch,
    )?;
    let model = LearnedModel { kind, net, input_norm: norm, labels, boresights: boresights(cfg), tx_power_dbm: single_power(ds) };
    Ok((model, report))
}

/// Fits the normaliser on the train split and trains a PF-MLP.
pub fn train_mlp(
    ds: &Dataset,
    cfg: &ScenarioConfig,
    spec: &MlpSpec,
    settings: &TrainSettings,
    seed: u64,
    on_epoch: impl FnMut(usize, f64, f64),
) -> Result<(LearnedModel<f64>, TrainReport)> {
    let x_train = mlp_inputs(ds, &ds.indices(Split::Train), cfg);
    let x_val = mlp_inputs(ds, &ds.indices(Split::Val), cfg);
    fit_and_train(ModelKind::Mlp(spec.clone()), cfg, ds, x_train, x_val, settings, seed, on_epoch)
}

/// Fits the normaliser on the train split and trains an SF-CNN in f32.
pub fn train_cnn(
    ds: &Dataset,
    cfg: &ScenarioConfig,
    spec: &CnnSpec,
    settings: &TrainSettings,
    seed: u64,
    on_epoch: impl FnMut(usize, f64, f64),
) -> Result<(LearnedModel<f32>, TrainReport)> {
    if spec.input_len != ds.n_subcarriers {
        return Err(Error::ShapeMismatch(format!("CNN input {} vs {} subcarriers", spec.input_len, ds.n_subcarriers)));
    }
    let x_train = cnn_inputs::<f32>(ds, &ds.indices(Split::Train), spec.encoding)?;
    let x_val = cnn_inputs::<f32>(ds, &ds.indices(Split::Val), spec.encoding)?;
    fit_and_train(ModelKind::Cnn(spec.clone()), cfg, ds, x_train, x_val, settings, seed, on_epoch)
}

/// Scheme errors on one split, using the stored estimates (and signals for
/// SF-CNN) with the context's sigmas. Failures count at the ROI diameter.
pub fn evaluate_split(ctx: &TrialContext, ds: &Dataset, schemes: &[Scheme], split: Split) -> Result<Vec<SchemeSummary>> {
    ctx.check_schemes(schemes)?;
    if schemes.contains(&Scheme::SfCnn) && !ds.has_signals() {
        return Err(Error::Config("SF-CNN evaluation needs stored signals".into()));
    }
    let idx = ds.indices(split);
    let clamp = ctx.chain.cfg.roi::<f64>().diameter();
    let errors: Vec<Vec<Option<f64>>> = idx
        .par_iter()
        .map(|&k| {
            let r = &ds.records[k];
            let est: [Estimate; 2] = std::array::from_fn(|i| Estimate {
                theta_hat: r.params[2 * i],
                d_hat: r.params[2 * i + 1],
                rx_index: i as u8 + 1,
                peak_index: 0,
                sigmas: ctx.sigmas[i],
            });
            let sig = ds.has_signals().then(|| [ds.signal(k, 0), ds.signal(k, 1)]);
            schemes
                .iter()
                .map(|&s| fuse(ctx, s, &est, sig).ok().map(|(p, ..)| p).filter(|p| p.is_finite()).map(|p| p.distance(r.p_true)))
                .collect()
        })
        .collect();
    Ok(schemes
        .iter()
        .enumerate()
        .map(|(j, &scheme)| {
            let failed = errors.iter().filter(|e| e[j].is_none()).count();
            let e: Vec<f64> = errors.iter().map(|e| e[j].unwrap_or(clamp)).collect();
            SchemeSummary { scheme, metrics: MetricsSummary::from_errors(&e, failed) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::SensingChain;

    #[test]
    fn small_dataset_files_round_trip() {
        let cfg = ScenarioConfig::default();
        let chain = SensingChain::new(&cfg).unwrap();
        let spec = DatasetSpec { n: 10, seed: 3, tx_powers_dbm: vec![52.0], keep_signals: true };
        let ds = generate_dataset(&chain, &spec).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!((ds.count(Split::Train), ds.count(Split::Val), ds.count(Split::Test)), (8, 1, 1));
        assert_eq!(ds.signals.len(), 10 * 2 * 3276);
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path(), &spec).unwrap();
        let (back, m) = load_dataset(dir.path(), Some(&cfg)).unwrap();
        assert_eq!(back, ds);
        assert_eq!(m.n_test, 1);
        let other = cfg.with_tx_power(40.0);
        assert!(matches!(load_dataset(dir.path(), Some(&other)), Err(Error::Format(_))));
        let again = generate_dataset(&chain, &spec).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        write_dataset(&again, dir2.path(), &spec).unwrap();
        for f in ["params.csv", "labels.csv", "splits.csv", "signals.bin", "manifest.json"] {
            assert_eq!(std::fs::read(dir.path().join(f)).unwrap(), std::fs::read(dir2.path().join(f)).unwrap(), "{f}");
        }
    }
}
