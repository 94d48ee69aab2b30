use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ptaloc::harness::bench::bench_runtime;
use ptaloc::harness::dataset::{evaluate_split, generate_dataset, load_dataset, train_cnn, train_mlp, write_dataset, DatasetSpec};
use ptaloc::harness::heatmap::{error_heatmap, GridSpec};
use ptaloc::harness::output::{self, create};
use ptaloc::harness::sweep::{power_sweep, SweepModels};
use ptaloc::harness::{calibration_seed, run_monte_carlo, FailurePolicy, Models, TrialContext};
use ptaloc::neural::{checkpoint, CnnSpec, MlpSpec, Split, TrainSettings};
use ptaloc::sensing::CalibrationCache;
use ptaloc::{Chain, Error, ScenarioConfig, Scheme};

#[derive(Parser)]
#[command(name = "ptaloc", version, about = "PTA multistatic OFDM sensing and position fusion")]
struct Cli {
    /// Scenario TOML; the built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct SchemeArgs {
    /// Comma-separated scheme names, e.g. GI-PL,GDOP-WLS,PF-MLP.
    #[arg(long, value_delimiter = ',', default_value = "GI-PL,GDOP-PL,GDOP-WLS")]
    schemes: Vec<String>,
    /// Directory holding pf-mlp.ckpt and/or sf-cnn.ckpt.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Calibration cache to read and update instead of calibrating afresh.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo trials with uniform ROI targets.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[command(flatten)]
        s: SchemeArgs,
        /// Leave failed trials out of the metrics instead of counting them
        /// at the ROI diameter.
        #[arg(long)]
        exclude_failures: bool,
    },
    /// Per-cell mean error over the ROI bounding box.
    Heatmap {
        #[arg(long, default_value_t = 24)]
        nx: usize,
        #[arg(long, default_value_t = 24)]
        ny: usize,
        /// Trials per cell.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[command(flatten)]
        s: SchemeArgs,
    },
    /// RMSE versus transmit power.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "42,44,46,48,50,52")]
        powers: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[command(flatten)]
        s: SchemeArgs,
    },
    /// Simulated training data for the learned schemes.
    GenDataset {
        #[arg(long, alias = "samples", default_value_t = 10_000)]
        trials: usize,
        /// Transmit powers cycled over the records; the config's when omitted.
        #[arg(long, value_delimiter = ',')]
        powers: Vec<f64>,
        /// Skip the raw signal dump (PF-MLP only needs the estimates).
        #[arg(long)]
        no_signals: bool,
    },
    /// Train PF-MLP or SF-CNN on a dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum)]
        model: ModelArg,
        #[arg(long)]
        epochs: Option<usize>,
        /// SF-CNN conv channel counts, five values.
        #[arg(long, value_delimiter = ',')]
        channels: Vec<usize>,
        /// Suffix for the checkpoint name, e.g. 52dBm for a power-matched model.
        #[arg(long)]
        tag: Option<String>,
    },
    /// Fusion-stage latency per scheme.
    Bench {
        #[arg(long, alias = "trials", default_value_t = 200)]
        reps: usize,
        #[command(flatten)]
        s: SchemeArgs,
    },
    /// Calibrate per-link sigmas and store them in the output cache.
    Calibrate {
        #[arg(long)]
        draws: Option<usize>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Mlp,
    Cnn,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn load_config(path: Option<&Path>) -> Res<ScenarioConfig> {
    match path {
        Some(p) => ScenarioConfig::load(p).map_err(|e| Failure::Config(e.to_string())),
        None => Ok(ScenarioConfig::default()),
    }
}

fn parse_schemes(names: &[String]) -> Res<Vec<Scheme>> {
    let mut out: Vec<Scheme> = Vec::new();
    for n in names {
        let s: Scheme = n.parse()?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(Failure::Config("no schemes given".into()));
    }
    Ok(out)
}

fn checkpoint_name(model: ModelArg, tag: Option<&str>) -> String {
    let base = match model {
        ModelArg::Mlp => "pf-mlp",
        ModelArg::Cnn => "sf-cnn",
    };
    match tag {
        Some(t) => format!("{base}@{t}.ckpt"),
        None => format!("{base}.ckpt"),
    }
}

fn load_models(dir: Option<&Path>, tag: Option<&str>) -> Res<Models> {
    let mut m = Models::default();
    let Some(dir) = dir else { return Ok(m) };
    if !dir.is_dir() {
        return Err(Failure::Config(format!("model directory {} not found", dir.display())));
    }
    let mlp = dir.join(checkpoint_name(ModelArg::Mlp, tag));
    if mlp.exists() {
        m.mlp = Some(checkpoint::load(&mlp)?);
    }
    let cnn = dir.join(checkpoint_name(ModelArg::Cnn, tag));
    if cnn.exists() {
        m.cnn = Some(checkpoint::load(&cnn)?);
    }
    Ok(m)
}

fn context(chain: Chain, seed: u64, s: &SchemeArgs) -> Res<TrialContext> {
    let sigmas = match &s.calibration {
        Some(path) => {
            let mut cache = CalibrationCache::load_or_default(path)?;
            let n = chain.cfg.estimation.calibration_draws;
            let sig = cache.get_or_calibrate(&chain, n, calibration_seed(seed))?;
            cache.save(path)?;
            sig
        }
        None => return Ok(TrialContext::calibrated(chain, seed)?.with_models(load_models(s.models.as_deref(), None)?)),
    };
    Ok(TrialContext::new(chain, sigmas).with_models(load_models(s.models.as_deref(), None)?))
}

fn run(cli: Cli) -> Res<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let chain = Chain::new(&cfg)?;
    std::fs::create_dir_all(&cli.out)?;
    let out = |name: &str| cli.out.join(name);
    let hash = cfg.hash_hex();
    let seed = cli.seed;
    let json = cli.format == Format::Json;
    match cli.cmd {
        Cmd::Simulate { trials, s, exclude_failures } => {
            let schemes = parse_schemes(&s.schemes)?;
            let ctx = context(chain, seed, &s)?;
            ctx.check_schemes(&schemes)?;
            let policy = if exclude_failures { FailurePolicy::Exclude } else { FailurePolicy::Clamp };
            let mc = run_monte_carlo(&ctx, trials, &schemes, seed, policy, true)?;
            if json {
                output::write_json(create(out("simulate.json"))?, "simulate", hash, seed, &mc)?;
            } else {
                output::write_trials_csv(create(out("trials.csv"))?, &mc.records, &schemes)?;
                output::write_summary_csv(create(out("summary.csv"))?, &mc.summaries)?;
                output::write_cdf_csv(create(out("cdf.csv"))?, &mc.summaries)?;
            }
            for s in &mc.summaries {
                let m = &s.metrics;
                println!("{:<10} rmse {:>9.3} m  mean {:>9.3} m  p95 {:>9.3} m  failed {}", s.scheme.name(), m.rmse, m.mean_error, m.p95_error, m.n_failed);
            }
        }
        Cmd::Heatmap { nx, ny, trials, s } => {
            let schemes = parse_schemes(&s.schemes)?;
            let ctx = context(chain, seed, &s)?;
            let grid = error_heatmap(&ctx, GridSpec { nx, ny, trials_per_cell: trials }, &schemes, seed)?;
            if json {
                output::write_json(create(out("heatmap.json"))?, "heatmap", hash, seed, &grid)?;
            } else {
                output::write_heatmap_csv(create(out("heatmap.csv"))?, &grid)?;
            }
            for &sc in &schemes {
                println!("{:<10} max/median cell error {:.2}", sc.name(), grid.max_to_median(sc));
            }
        }
        Cmd::Sweep { powers, trials, s } => {
            let schemes = parse_schemes(&s.schemes)?;
            let base = TrialContext::new(chain, [ptaloc::Sigmas { sigma_d: 1.0, sigma_theta: 1.0 }; 2]);
            let mut models = SweepModels { generalized: load_models(s.models.as_deref(), None)?, matched: Vec::new() };
            for &p in &powers {
                let m = load_models(s.models.as_deref(), Some(&format!("{p}dBm")))?;
                if m.mlp.is_some() || m.cnn.is_some() {
                    models.matched.push((p, m));
                }
            }
            let rows = power_sweep(&base, &powers, &schemes, trials, seed, &models)?;
            if json {
                output::write_json(create(out("sweep.json"))?, "sweep", hash, seed, &rows)?;
            } else {
                output::write_sweep_csv(create(out("sweep.csv"))?, &rows)?;
            }
            for r in &rows {
                println!("{:>5} dBm {:<10} {:<12} rmse {:>9.3} m", r.tx_power_dbm, r.scheme.name(), r.variant.name(), r.metrics.rmse);
            }
        }
        Cmd::GenDataset { trials, powers, no_signals } => {
            let powers = if powers.is_empty() { vec![cfg.power.tx_power_dbm] } else { powers };
            let spec = DatasetSpec { n: trials, seed, tx_powers_dbm: powers, keep_signals: !no_signals };
            let ds = generate_dataset(&chain, &spec)?;
            write_dataset(&ds, &cli.out, &spec)?;
            println!(
                "{} records (train {}, val {}, test {}) in {}",
                ds.len(),
                ds.count(Split::Train),
                ds.count(Split::Val),
                ds.count(Split::Test),
                cli.out.display()
            );
        }
        Cmd::Train { dataset, model, epochs, channels, tag } => {
            let (ds, _) = load_dataset(&dataset, Some(&cfg)).map_err(|e| match e {
                Error::Io(io) => Failure::Config(format!("cannot read dataset {}: {io}", dataset.display())),
                other => other.into(),
            })?;
            let mut settings = TrainSettings::default();
            if let Some(e) = epochs {
                settings.max_epochs = e;
            }
            let log = |e: usize, t: f64, v: f64| eprintln!("epoch {:>3}  train {t:.5}  val {v:.5}", e + 1);
            let ctx = TrialContext::calibrated(chain, seed)?;
            let (report, models, learned) = match model {
                ModelArg::Mlp => {
                    let (m, r) = train_mlp(&ds, &cfg, &MlpSpec::default(), &settings, seed, log)?;
                    checkpoint::save(&m, out(&checkpoint_name(model, tag.as_deref())))?;
                    (r, Models { mlp: Some(m), cnn: None }, Scheme::PfMlp)
                }
                ModelArg::Cnn => {
                    let mut spec = CnnSpec { input_len: cfg.ofdm.n_subcarriers, ..Default::default() };
                    if !channels.is_empty() {
                        let c: [usize; 5] = channels.try_into().map_err(|_| Failure::Config("--channels needs five values".into()))?;
                        spec = spec.with_channels(c);
                    }
                    let (m, r) = train_cnn(&ds, &cfg, &spec, &settings, seed, log)?;
                    checkpoint::save(&m, out(&checkpoint_name(model, tag.as_deref())))?;
                    (r, Models { mlp: None, cnn: Some(m) }, Scheme::SfCnn)
                }
            };
            let ctx = ctx.with_models(models);
            let test = evaluate_split(&ctx, &ds, &[Scheme::GdopInit, learned], Split::Test)?;
            if json {
                output::write_json(create(out("train.json"))?, "train", hash, seed, (&report, &test))?;
            } else {
                output::write_curves_csv(create(out("train_curves.csv"))?, &report)?;
                output::write_summary_csv(create(out("test_summary.csv"))?, &test)?;
            }
            for s in &test {
                println!("test {:<10} rmse {:>9.3} m", s.scheme.name(), s.metrics.rmse);
            }
        }
        Cmd::Bench { reps, s } => {
            let schemes = parse_schemes(&s.schemes)?;
            let ctx = context(chain, seed, &s)?;
            let rows = bench_runtime(&ctx, &schemes, reps, seed)?;
            if json {
                output::write_json(create(out("bench.json"))?, "bench", hash, seed, &rows)?;
            } else {
                output::write_bench_csv(create(out("bench.csv"))?, &rows)?;
            }
            for r in &rows {
                println!("{:<10} {:>10.4} ms  x{:.2}", r.scheme.name(), r.mean_ms, r.relative);
            }
        }
        Cmd::Calibrate { draws } => {
            let n = draws.unwrap_or(cfg.estimation.calibration_draws);
            let path = out("calibration.toml");
            let mut cache = CalibrationCache::load_or_default(&path)?;
            let s = cache.get_or_calibrate(&chain, n, calibration_seed(seed))?;
            cache.save(&path)?;
            for (i, v) in s.iter().enumerate() {
                println!("rx{}  sigma_d {:.4} m  sigma_theta {:.6} rad", i + 1, v.sigma_d, v.sigma_theta);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
