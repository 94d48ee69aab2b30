//! Primary acceptance criteria, one PASS/FAIL line each. Built with
//! `harness = false` so the lines appear in plain `cargo test` output.
//!
//! Known-red criteria are listed in `KNOWN_RED`; they print FAIL but do not
//! fail the run.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ptaloc::estimation::{estimate_bistatic_distance, music_null_spectrum};
use ptaloc::fusion::per_link_geo_init;
use ptaloc::geometry::{gdop, geometric_jacobian, measurement_model, wrap_angle};
use ptaloc::harness::dataset::{evaluate_split, generate_dataset, train_cnn, train_mlp, DatasetSpec};
use ptaloc::harness::sweep::{power_sweep, SweepModels};
use ptaloc::harness::{
    band_ratio, distance_to_receiver_segment, fuse, mean_and_se, run_monte_carlo, FailurePolicy, Models, TrialContext,
};
use ptaloc::neural::{gradient_check, CnnSpec, ModelKind, MlpSpec, Split, TrainSettings};
use ptaloc::pta::{rx_weight_vector, steering_vector, subcarrier_to_angle, frequency_to_angle};
use ptaloc::{Chain, Estimate, Position, ScenarioConfig, Scheme, Sigmas};

const KNOWN_RED: &[u32] = &[];

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const ORDERING_TRIALS: usize = 10_000;
const SWEEP_TRIALS: usize = 2_000;
const BAND_HALFWIDTH_M: f64 = 10.0;
const DATASET_SIZE: usize = 10_000;
const CNN_CHANNELS: [usize; 5] = [8, 16, 16, 32, 32];
const CNN_EPOCHS: usize = 30;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn chain(cfg: &ScenarioConfig) -> Chain {
    Chain::new(cfg).expect("default chain")
}

fn targets(c: &Chain, n: usize, seed: u64) -> Vec<Position> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| c.sample_target(&mut rng)).collect()
}

fn exact_estimates(c: &Chain, p: Position, sigmas: Sigmas) -> [Estimate; 2] {
    std::array::from_fn(|i| {
        let (d, th) = measurement_model(p, &c.front_ends[i].link).unwrap();
        Estimate { theta_hat: th, d_hat: d, rx_index: i as u8 + 1, peak_index: 0, sigmas }
    })
}

fn noiseless_round_trip(cfg: &ScenarioConfig) -> Verdict {
    let c = chain(cfg).without_noise();
    let s = Sigmas::new(0.3, 0.01).unwrap();
    let ctx = TrialContext::new(c.clone(), [s, s]);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for p in targets(&c, 1000, 11) {
        let est = exact_estimates(&c, p, s);
        for scheme in Scheme::ANALYTICAL {
            let e = match fuse(&ctx, scheme, &est, None) {
                Ok((q, ..)) => q.distance(p),
                Err(_) => f64::INFINITY,
            };
            worst = worst.max(e);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    // same targets through the noiseless signal chain, for context only
    let mut chain_worst = 0.0f64;
    for (k, p) in targets(&c, 200, 12).into_iter().enumerate() {
        if let Ok(obs) = c.observe(p, k as u64) {
            let est: [Estimate; 2] = std::array::from_fn(|i| c.attach(&obs[i].1, i, s));
            for scheme in Scheme::ANALYTICAL {
                if let Ok((q, ..)) = fuse(&ctx, scheme, &est, None) {
                    chain_worst = chain_worst.max(q.distance(p));
                }
            }
        }
    }
    verdict(
        worst < 1e-3 && secs < 60.0,
        format!(
            "max error {worst:.2e} m over 1000 targets x 4 schemes (< 1e-3), {secs:.1} s single-threaded (< 60); \
             quantised noiseless chain max {chain_worst:.2} m (info)"
        ),
    )
}

fn rainbow_map(cfg: &ScenarioConfig) -> Verdict {
    let mut worst_ratio = 0.0f64;
    let mut worst_end = 0.0f64;
    let mut checked = 0;
    for i in 0..2 {
        let pta = cfg.pta_config::<f64>(i).unwrap();
        worst_end = worst_end
            .max((frequency_to_angle(pta.f0, &pta) - pta.theta_start).abs())
            .max((frequency_to_angle(pta.f_high, &pta) - pta.theta_end).abs());
        for m in (0..pta.n_subcarriers).step_by(64) {
            let w = rx_weight_vector(m, &pta);
            let f = pta.frequency(m);
            let gain = |th: f64| {
                let a = steering_vector(f, th, pta.n_elements, pta.spacing);
                w.w.iter().zip(&a).map(|(x, y)| x.conj() * y).sum::<Complex<f64>>().norm_sqr()
            };
            // coarse scan over the visible half-plane, then golden-section refinement
            let n = 20_000;
            let lim = std::f64::consts::FRAC_PI_2 - 1e-6;
            let mut best = (f64::NEG_INFINITY, 0.0);
            for k in 0..=n {
                let th = -lim + 2.0 * lim * k as f64 / n as f64;
                let g = gain(th);
                if g > best.0 {
                    best = (g, th);
                }
            }
            let step = 2.0 * lim / n as f64;
            let (mut lo, mut hi) = (best.1 - step, best.1 + step);
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..80 {
                let a = hi - phi * (hi - lo);
                let b = lo + phi * (hi - lo);
                if gain(a) > gain(b) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            let argmax = 0.5 * (lo + hi);
            let err = (argmax - subcarrier_to_angle(m, &pta)).abs();
            worst_ratio = worst_ratio.max(err / pta.angular_spacing(m));
            checked += 1;
        }
    }
    verdict(
        worst_ratio < 1.0 && worst_end < 1e-12,
        format!(
            "{checked} subcarriers: worst |argmax - mapped| = {worst_ratio:.2e} inter-beam spacings (< 1); \
             endpoint error {worst_end:.1e} rad (< 1e-12)"
        ),
    )
}

fn music(cfg: &ScenarioConfig) -> Verdict {
    let c = chain(cfg).without_noise();
    let m_sub = cfg.estimation.music_subband;
    let df = cfg.ofdm.subcarrier_spacing_hz;
    let mut worst = 0.0f64;
    let mut first_sub = None;
    for (k, p) in targets(&c, 500, 21).into_iter().enumerate() {
        for i in 0..2 {
            let sig = c.synthesize(p, i, k as u64).unwrap();
            let peak = c.estimate(&sig, i).unwrap().peak_index;
            let y = sig.symbol_average();
            let d = estimate_bistatic_distance(&y, peak, m_sub, df, &c.grid, false).unwrap();
            let (truth, _) = measurement_model(p, &c.front_ends[i].link).unwrap();
            worst = worst.max((d - truth).abs());
            if first_sub.is_none() {
                let start = ptaloc::estimation::subband_start(peak, m_sub, y.len());
                first_sub = Some(y[start..start + m_sub].to_vec());
            }
        }
    }
    // rank-1 projection against the eigendecomposition of y y^H
    let y = first_sub.unwrap();
    let rel: Vec<f64> = (0..m_sub).map(|q| q as f64 * df).collect();
    let analytic = music_null_spectrum(&y, &rel, &c.grid).unwrap();
    let yv = DVector::from_iterator(m_sub, y.iter().map(|z| nalgebra::Complex::new(z.re, z.im)));
    let eig = nalgebra::SymmetricEigen::new(&yv * yv.adjoint());
    let mut idx: Vec<usize> = (0..m_sub).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let cols: Vec<_> = idx[..m_sub - 1].iter().map(|&j| eig.eigenvectors.column(j).into_owned()).collect();
    let un = DMatrix::from_columns(&cols);
    let mut worst_rel = 0.0f64;
    for (k, &q) in analytic.iter().enumerate().step_by(7) {
        let r = c.grid.point(k);
        let a = DVector::from_iterator(
            m_sub,
            rel.iter().map(|&f| nalgebra::Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * f * r / 299_792_458.0)),
        );
        let proj = (un.adjoint() * a).norm_squared();
        worst_rel = worst_rel.max((proj - q).abs() / proj);
    }
    verdict(
        worst <= c.grid.step + 1e-9 && worst_rel < 1e-10,
        format!(
            "500 targets x 2 links: worst |peak - d| = {worst:.3} m (<= {} m grid step); projection vs eigendecomposition rel {worst_rel:.1e} (< 1e-10)",
            c.grid.step
        ),
    )
}

fn jacobian_and_gdop(cfg: &ScenarioConfig) -> Verdict {
    let c = chain(cfg);
    let h = 1e-4;
    let mut worst_fd = 0.0f64;
    let mut points = 0;
    for p in targets(&c, 1000, 31) {
        for fe in &c.front_ends {
            let Ok(j) = geometric_jacobian(p, &fe.link) else { continue };
            for (col, dq) in [Position::new(h, 0.0), Position::new(0.0, h)].into_iter().enumerate() {
                let (dp, tp) = measurement_model(p + dq, &fe.link).unwrap();
                let (dm, tm) = measurement_model(p - dq, &fe.link).unwrap();
                let fd = [(dp - dm) / (2.0 * h), wrap_angle(tp - tm) / (2.0 * h)];
                for row in 0..2 {
                    let scale = j[row][0].abs().max(j[row][1].abs());
                    worst_fd = worst_fd.max((fd[row] - j[row][col]).abs() / scale);
                }
            }
        }
        points += 1;
    }
    // single-link inversion under small noise against the GDOP prediction
    let s = Sigmas::new(0.01, 1e-4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let normal = rand_distr::Normal::new(0.0, 1.0).unwrap();
    let mut worst_gdop = 0.0f64;
    let mut n_pts = 0;
    for p in targets(&c, 200, 33).into_iter().filter(|&p| distance_to_receiver_segment(&c, p) > 5.0).take(40) {
        for (i, fe) in c.front_ends.iter().enumerate() {
            let tx = cfg.tx_position::<f64>();
            let rx = cfg.rx_position::<f64>(i);
            let seg = rx - tx;
            let t = ((p - tx).dot(seg) / seg.norm_sq()).clamp(0.0, 1.0);
            if p.distance(tx + seg * t) < 10.0 {
                continue;
            }
            let g = gdop(p, &fe.link, &s).unwrap();
            let (d, th) = measurement_model(p, &fe.link).unwrap();
            let mut sq = 0.0;
            let draws = 4000;
            for _ in 0..draws {
                use rand::Rng;
                let est = Estimate {
                    theta_hat: th + s.sigma_theta * rng.sample::<f64, _>(normal),
                    d_hat: d + s.sigma_d * rng.sample::<f64, _>(normal),
                    rx_index: i as u8 + 1,
                    peak_index: 0,
                    sigmas: s,
                };
                sq += per_link_geo_init(&est, &fe.link).unwrap().distance(p).powi(2);
            }
            let rmse = (sq / draws as f64).sqrt();
            worst_gdop = worst_gdop.max((rmse / g - 1.0).abs());
            n_pts += 1;
        }
    }
    verdict(
        worst_fd < 1e-6 && worst_gdop < 0.2,
        format!(
            "Jacobian vs central differences rel {worst_fd:.1e} at {points} points (< 1e-6); \
             MC RMSE / GDOP - 1 worst {worst_gdop:.3} over {n_pts} point-links (< 0.2)"
        ),
    )
}

fn gap_line(name: &str, hi: &[f64], lo: &[f64]) -> (bool, String) {
    let gaps: Vec<f64> = hi.iter().zip(lo).map(|(a, b)| a - b).collect();
    let (m, se) = mean_and_se(&gaps);
    (m > 3.0 * se, format!("{name} gap {m:.3} +- {se:.3} m"))
}

fn scheme_ordering(cfg: &ScenarioConfig) -> Verdict {
    let c = chain(cfg);
    let schemes = [Scheme::GiPl, Scheme::GdopPl, Scheme::GdopWls];
    let clamp = cfg.roi::<f64>().diameter();
    let mut rmse = [Vec::new(), Vec::new(), Vec::new()];
    let mut bands = Vec::new();
    let start = Instant::now();
    for seed in SEEDS {
        let ctx = TrialContext::calibrated(c.clone(), seed).unwrap();
        let mc = run_monte_carlo(&ctx, ORDERING_TRIALS, &schemes, seed, FailurePolicy::Clamp, true).unwrap();
        for (k, s) in mc.summaries.iter().enumerate() {
            rmse[k].push(s.metrics.rmse);
        }
        bands.push(band_ratio(&c, &mc.records, Scheme::GiPl, BAND_HALFWIDTH_M, clamp));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ok1, l1) = gap_line("GI-PL - GDOP-PL", &rmse[0], &rmse[1]);
    let (ok2, l2) = gap_line("GDOP-PL - GDOP-WLS", &rmse[1], &rmse[2]);
    let band_min = bands.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    let n_band: usize = bands.iter().map(|b| b.1).sum();
    verdict(
        ok1 && ok2 && band_min > 2.0,
        format!(
            "RMSE GI-PL {:.2} / GDOP-PL {:.2} / GDOP-WLS {:.2} m; {l1}, {l2} (> 3 SE, 5 seeds x {ORDERING_TRIALS}); \
             GI-PL band/median min {band_min:.2} (> 2, {n_band} band trials); {:.0} s",
            mean(&rmse[0]),
            mean(&rmse[1]),
            mean(&rmse[2]),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn learned(cfg: &ScenarioConfig) -> Verdict {
    // gradient checks on the PF-MLP architecture and a narrow SF-CNN
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut mlp = ModelKind::Mlp(MlpSpec::default()).build::<f64>().unwrap();
    mlp.init(&mut rng);
    let x: Vec<f64> = (0..4 * 6).map(|k| (k as f64 * 0.37).sin()).collect();
    let y: Vec<f64> = (0..2 * 6).map(|k| (k as f64 * 0.91).cos() * 0.7).collect();
    let g_mlp = gradient_check(&mlp, &x, &y, 6, 1e-5, 1e-6).unwrap();
    let small = CnnSpec { input_len: 300, pool: 2, head: [8, 4], ..CnnSpec::default() }.with_channels([2, 3, 3, 4, 4]);
    let mut cnn = ModelKind::Cnn(small).build::<f64>().unwrap();
    cnn.init(&mut rng);
    let x: Vec<f64> = (0..4 * 300 * 3).map(|k| (k as f64 * 0.113).sin() + 0.3 * (k as f64 * 0.029).cos()).collect();
    let y: Vec<f64> = (0..2 * 3).map(|k| (k as f64 * 0.5).sin() * 0.6).collect();
    let g_cnn = gradient_check(&cnn, &x, &y, 3, 1e-5, 1e-6).unwrap();

    let c = chain(cfg);
    let spec = DatasetSpec { n: DATASET_SIZE, seed: 1, tx_powers_dbm: vec![cfg.power.tx_power_dbm], keep_signals: true };
    let ds = generate_dataset(&c, &spec).unwrap();
    let settings = TrainSettings::default();
    let (mlp_model, _) = train_mlp(&ds, cfg, &MlpSpec::default(), &settings, 1, |_, _, _| {}).unwrap();
    let cnn_spec = CnnSpec { input_len: cfg.ofdm.n_subcarriers, ..CnnSpec::default() }.with_channels(CNN_CHANNELS);
    let cnn_settings = TrainSettings { max_epochs: CNN_EPOCHS, ..settings };
    let start = Instant::now();
    let (cnn_model, cnn_report) = train_cnn(&ds, cfg, &cnn_spec, &cnn_settings, 1, |_, _, _| {}).unwrap();
    let cnn_secs = start.elapsed().as_secs_f64();
    let ctx = TrialContext::calibrated(c, 1).unwrap().with_models(Models { mlp: Some(mlp_model), cnn: Some(cnn_model) });
    let test = evaluate_split(&ctx, &ds, &[Scheme::GdopInit, Scheme::PfMlp, Scheme::SfCnn], Split::Test).unwrap();
    let r = |s: Scheme| test.iter().find(|x| x.scheme == s).unwrap().metrics.rmse;
    let (init, mlp_r, cnn_r) = (r(Scheme::GdopInit), r(Scheme::PfMlp), r(Scheme::SfCnn));
    let cnn_note = if cnn_r < mlp_r {
        "SF-CNN beats PF-MLP".to_string()
    } else {
        format!(
            "SF-CNN trails PF-MLP by {:.2} m (reduced scale: channels {CNN_CHANNELS:?}, {} epochs, {cnn_secs:.0} s on this host)",
            cnn_r - mlp_r,
            cnn_report.train_loss.len()
        )
    };
    verdict(
        mlp_r < init && g_mlp < 1e-4 && g_cnn < 1e-4,
        format!(
            "test split RMSE GDOP-Init {init:.2} / PF-MLP {mlp_r:.2} / SF-CNN {cnn_r:.2} m; {cnn_note}; \
             gradient check rel MLP {g_mlp:.1e}, CNN {g_cnn:.1e} (< 1e-4)"
        ),
    )
}

fn power_monotonicity(cfg: &ScenarioConfig) -> Verdict {
    let c = chain(cfg);
    let powers: Vec<f64> = (0..6).map(|k| 42.0 + 2.0 * k as f64).collect();
    let schemes = [Scheme::GiPl, Scheme::GdopPl, Scheme::GdopWls];
    let s = Sigmas::new(1.0, 1.0).unwrap();
    let base = TrialContext::new(c, [s, s]);
    // rmse[scheme][power][seed]
    let mut rmse = vec![vec![Vec::new(); powers.len()]; schemes.len()];
    for seed in SEEDS {
        let rows = power_sweep(&base, &powers, &schemes, SWEEP_TRIALS, seed, &SweepModels::default()).unwrap();
        for r in rows {
            let si = schemes.iter().position(|&x| x == r.scheme).unwrap();
            let pi = powers.iter().position(|&x| x == r.tx_power_dbm).unwrap();
            rmse[si][pi].push(r.metrics.rmse);
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (si, scheme) in schemes.iter().enumerate() {
        let means: Vec<String> =
            rmse[si].iter().map(|v| format!("{:.2}", v.iter().sum::<f64>() / v.len() as f64)).collect();
        let mut worst_z = f64::NEG_INFINITY;
        for k in 0..powers.len() - 1 {
            let d: Vec<f64> = rmse[si][k + 1].iter().zip(&rmse[si][k]).map(|(a, b)| a - b).collect();
            let (m, se) = mean_and_se(&d);
            worst_z = worst_z.max(m / se);
            if m > 3.0 * se {
                pass = false;
            }
        }
        parts.push(format!("{} [{}] worst rise {worst_z:.1} SE", scheme.name(), means.join(", ")));
    }
    verdict(pass, format!("RMSE at 42..52 dBm, 5 seeds x {SWEEP_TRIALS}: {} (rise must stay <= 3 SE)", parts.join("; ")))
}

fn run_cli(args: &[&str], out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_ptaloc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let runs: [&[&str]; 7] = [
        &["simulate", "--trials", "50", "--schemes", "GI-PL,GDOP-PL,GDOP-WLS,GDOP-Init", "--seed", "7"],
        &["simulate", "--trials", "20", "--seed", "7", "--format", "json"],
        &["heatmap", "--nx", "4", "--ny", "4", "--trials", "2", "--seed", "7"],
        &["sweep", "--powers", "44,50", "--trials", "10", "--seed", "7"],
        &["sweep", "--powers", "44,50", "--trials", "10", "--seed", "7", "--format", "json"],
        &["gen-dataset", "--trials", "30", "--seed", "7"],
        &["calibrate", "--seed", "7"],
    ];
    let mut compared = 0;
    for args in runs {
        if !run_cli(args, a.path()) || !run_cli(args, b.path()) {
            return verdict(false, format!("CLI run failed: {args:?}"));
        }
    }
    let ds = a.path().to_str().unwrap().to_string();
    for dir in [a.path(), b.path()] {
        if !run_cli(&["train", "--dataset", &ds, "--model", "mlp", "--epochs", "3", "--seed", "7"], &dir.join("m")) {
            return verdict(false, "CLI train failed".into());
        }
    }
    let mut files: Vec<String> = Vec::new();
    for sub in ["", "m"] {
        for e in std::fs::read_dir(a.path().join(sub)).unwrap() {
            let e = e.unwrap();
            if e.file_type().unwrap().is_file() {
                files.push(Path::new(sub).join(e.file_name()).to_string_lossy().into_owned());
            }
        }
    }
    files.sort();
    for f in &files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap_or_default();
        if x != y {
            return verdict(false, format!("{f} differs between identical runs"));
        }
        compared += 1;
    }
    verdict(compared >= 10, format!("{compared} output files byte-identical across repeated runs: {}", files.join(" ")))
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let cfg = ScenarioConfig::default();
    let criteria: [(u32, &str, &dyn Fn() -> Verdict); 8] = [
        (1, "noiseless round-trip", &|| noiseless_round_trip(&cfg)),
        (2, "rainbow-map fidelity", &|| rainbow_map(&cfg)),
        (3, "MUSIC correctness", &|| music(&cfg)),
        (4, "Jacobian and GDOP", &|| jacobian_and_gdop(&cfg)),
        (5, "scheme ordering and GI-PL band", &|| scheme_ordering(&cfg)),
        (6, "learned-scheme sanity", &|| learned(&cfg)),
        (7, "power-sweep monotonicity", &|| power_monotonicity(&cfg)),
        (8, "CLI determinism", &determinism),
    ];
    let filter: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut unexpected = 0;
    for (id, name, run) in criteria {
        if filter.is_some_and(|f| f != id) {
            continue;
        }
        let t = Instant::now();
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} [{tag}] {name}: {} ({:.0} s)", v.detail, t.elapsed().as_secs_f64());
        if !v.pass && !KNOWN_RED.contains(&id) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        std::process::exit(1);
    }
}
