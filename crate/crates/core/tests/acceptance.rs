//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otfs_radar::channel::{
    apply_continuous_channel, apply_discrete_channel, channel_matrix, circulant_channel_matrix, circulant_discrepancy,
    periodic_channel_matrix, ChannelScene, PathParams,
};
use otfs_radar::estimator::{
    coarse_estimate, detect_paths, fractional_estimate, DetectOptions, InterpolationModel, ModelKind,
};
use otfs_radar::harness::{export_ambiguity_maps, run_montecarlo, sweep_grid, ExperimentConfig, InputMode};
use otfs_radar::otfs::{modulate, orthonormality_gram, pilot_grid, FrameConfig, PulseTrain, SampleGrid};
use otfs_radar::receiver::{cross_ambiguity, matched_filter_sample, ObservedSamples};
use otfs_radar::waveforms::{pulse_matched_autocorr, window_autocorr_rrc, PulseShape, WindowShape};

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

// ---------------------------------------------------------------- oracles

/// Gauss-Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / dp;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// Square root of the raised-cosine spectrum.
fn sqrt_rc(x: f64, beta: f64) -> f64 {
    let x = x.abs();
    let flat = (1.0 - beta) / 2.0;
    if x <= flat {
        1.0
    } else if x <= (1.0 + beta) / 2.0 {
        (PI / (2.0 * beta) * (x - flat)).cos()
    } else {
        0.0
    }
}

/// `int sqrt(RC((1+b) x)) sqrt(RC((1+b)(x - nu))) dx`, piecewise Gauss-Legendre
/// between the kinks of both factors.
struct SpectrumOracle {
    nodes: Vec<(f64, f64)>,
}

impl SpectrumOracle {
    fn new() -> Self {
        SpectrumOracle { nodes: gauss_legendre(40) }
    }

    fn eval(&self, nu: f64, beta: f64) -> f64 {
        let g = 1.0 + beta;
        let inner = (1.0 - beta) / (2.0 * g);
        let lo = (-0.5f64).max(nu - 0.5);
        let hi = 0.5f64.min(nu + 0.5);
        if hi <= lo {
            return 0.0;
        }
        let mut cuts = vec![lo, hi];
        for c in [-inner, inner, nu - inner, nu + inner] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.sort_by(f64::total_cmp);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for &(x, wt) in &self.nodes {
                let t = mid + half * x;
                total += wt * half * sqrt_rc(g * t, beta) * sqrt_rc(g * (t - nu), beta);
            }
        }
        total
    }
}

// -------------------------------------------------------------- criteria

fn rrc_closed_form_vs_quadrature() -> Outcome {
    let start = Instant::now();
    let oracle = SpectrumOracle::new();
    let mut worst = 0.0f64;
    let mut peak_err = 0.0f64;
    for beta in [0.1, 0.25, 0.5] {
        for i in 0..=2000 {
            let nu = -1.0 + i as f64 / 1000.0;
            let closed = window_autocorr_rrc(nu, beta).expect("roll-off in range");
            worst = worst.max((closed - oracle.eval(nu, beta)).abs());
        }
        let peak = window_autocorr_rrc(0.0, beta).expect("roll-off in range");
        peak_err = peak_err.max((peak - 1.0 / (1.0 + beta)).abs());
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-6 && peak_err <= 1e-6 && within(t, 5.0),
        format!("max deviation {worst:.2e}, peak error {peak_err:.2e}, {:.2} s", t.as_secs_f64()),
    )
}

fn nyquist_and_orthonormality() -> Outcome {
    let start = Instant::now();
    let zero_err = (1..=10)
        .flat_map(|k| [k, -k])
        .map(|k| pulse_matched_autocorr(PulseShape::Sinc, k as f64).abs())
        .fold(0.0f64, f64::max);
    let at_zero = (pulse_matched_autocorr(PulseShape::Sinc, 0.0) - 1.0).abs();
    // truncated sinc tails of the N pulses add coherently: |G - I| ~ 0.8 / tail
    let cfg = FrameConfig {
        os: 16,
        pulse: PulseShape::Sinc,
        window: WindowShape::Rect,
        pulse_tail: 1024.0,
        ..FrameConfig::default()
    };
    let subset: Vec<(usize, usize)> = (0..8).flat_map(|k| (0..8).map(move |l| (k, l))).collect();
    let gram = orthonormality_gram(&cfg, &subset).expect("gram");
    let mut dev = 0.0f64;
    for i in 0..64 {
        for j in 0..64 {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    let t = start.elapsed();
    outcome(
        zero_err < 1e-9 && at_zero < 1e-12 && dev <= 2e-3 && within(t, 60.0),
        format!(
            "sinc autocorrelation at integers {zero_err:.1e}, max |G - I| {dev:.2e} (64 waveforms, OS 16, tail 1024 T_s), {:.2} s",
            t.as_secs_f64()
        ),
    )
}

fn channel_cross_validation() -> Outcome {
    let start = Instant::now();
    let cfg = FrameConfig { pulse: PulseShape::Rrc { beta: 0.25 }, ..FrameConfig::default() };
    let x = modulate(&pilot_grid(cfg.n, cfg.m).unwrap(), &cfg).unwrap();
    let train = PulseTrain::new(x.clone(), &cfg);
    let l = cfg.pri_samples();
    let mut padded = nalgebra::DVector::from_element(l, Complex64::new(0.0, 0.0));
    for (i, v) in x.iter().enumerate() {
        padded[i] = *v;
    }
    let obs = cfg.observation_window();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        // whole echo inside the observation window
        let t_d = rng.random_range(obs.start as f64..(obs.end - cfg.nm()) as f64) * cfg.ts;
        let f_d = rng.random_range(-0.01..0.01) / cfg.ts;
        let alpha = Complex64::from_polar(rng.random_range(0.5..1.0), rng.random_range(0.0..2.0 * PI));
        let scene = ChannelScene::new(vec![PathParams::new(alpha, t_d, f_d)]);
        let r = apply_continuous_channel(&train, &scene, &cfg, SampleGrid::pri(&cfg)).unwrap();
        let continuous = matched_filter_sample(&r, &cfg).unwrap();
        let discrete = channel_matrix(t_d, f_d, l, cfg.pulse, cfg.ts) * &padded * alpha;
        let mut diff = 0.0;
        let mut norm = 0.0;
        for (i, c) in continuous.samples.iter().enumerate() {
            let d = discrete[obs.start + i];
            diff += (c - d).norm_sqr();
            norm += d.norm_sqr();
        }
        worst = worst.max((diff / norm).sqrt());
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-3 && within(t, 60.0),
        format!("worst relative error {worst:.2e} over 20 scenes (RRC pulse 0.25), {:.2} s", t.as_secs_f64()),
    )
}

fn circulant_discrepancy_check() -> Outcome {
    let ts = 1e-8;
    let len = 16;
    let t_d = 2.5 * ts;
    let zero = circulant_discrepancy(t_d, 0.0, len, PulseShape::Rect, ts);
    let zero_ok = zero.iter().all(|v| *v == Complex64::new(0.0, 0.0));

    let f_d = 0.2 / (len as f64 * ts);
    let periodic = periodic_channel_matrix(t_d, f_d, len, PulseShape::Rect, ts);
    let circulant = circulant_channel_matrix(t_d, f_d, len, PulseShape::Rect, ts);
    let lower = channel_matrix(t_d, f_d, len, PulseShape::Rect, ts);
    let expected = Complex64::from_polar(1.0, -PI * 0.2);
    let mut worst = 0.0f64;
    let mut wrapped = 0;
    for i in 0..len {
        for j in 0..len {
            // entries carried only by the wrapped image
            if lower[(i, j)].norm() == 0.0 && circulant[(i, j)].norm() > 1e-12 {
                wrapped += 1;
                worst = worst.max((periodic[(i, j)] / circulant[(i, j)] - expected).norm());
            }
        }
    }
    outcome(
        zero_ok && wrapped > 0 && worst <= 1e-10,
        format!(
            "zero-Doppler discrepancy exactly zero: {zero_ok}; wrap phase error {worst:.1e} over {wrapped} entries"
        ),
    )
}

fn integer_bin_detection() -> Outcome {
    let start = Instant::now();
    let cfg = FrameConfig::default();
    let x = modulate(&pilot_grid(cfg.n, cfg.m).unwrap(), &cfg).unwrap();
    let obs = cfg.observation_window();
    let last_lag = (obs.end - x.len() + 1) as i64;
    let opts = DetectOptions::default();
    let mut per_p = Vec::new();
    let (mut literal_exact, mut literal_cover) = (0, 0);
    let mut all = true;
    for p in 1..=5usize {
        let mut hits = 0;
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * p as u64 + trial);
            let mut bins: Vec<(i64, i64)> = Vec::new();
            while bins.len() < p {
                let b = (rng.random_range(-4i64..4), rng.random_range(obs.start as i64..=last_lag));
                if !bins.contains(&b) {
                    bins.push(b);
                }
            }
            let paths = bins
                .iter()
                .map(|&(k, l)| {
                    let a = Complex64::from_polar(rng.random_range(0.5..1.0), rng.random_range(0.0..2.0 * PI));
                    PathParams::new(a, l as f64 * cfg.ts, k as f64 / cfg.block_duration())
                })
                .collect();
            let y =
                apply_discrete_channel(&x, &ChannelScene::new(paths), cfg.pri_samples(), cfg.pulse, cfg.ts).unwrap();
            let y = ObservedSamples::from_frame(&y, obs).unwrap();
            let mut truth = bins.clone();
            truth.sort_unstable();
            let mut found = detect_paths(&y, &x, cfg.n, cfg.m, cfg.ts, &opts).unwrap().bins;
            found.sort_unstable();
            hits += usize::from(found == truth);
            let surface = cross_ambiguity(&y, &x, cfg.n, cfg.m, cfg.ts).unwrap();
            let literal = coarse_estimate(&surface, opts.max_paths, opts.cfar_factor).bins();
            literal_exact += usize::from(literal.len() == p);
            literal_cover += usize::from(truth.iter().all(|b| literal.contains(b)));
        }
        all &= hits == 100;
        per_p.push(format!("P={p}: {hits}/100"));
    }
    let t = start.elapsed();
    outcome(
        all,
        format!(
            "{}; candidate list alone has exactly P entries in {literal_exact}/500 and covers every true bin in {literal_cover}/500, {:.2} s",
            per_p.join(", "),
            t.as_secs_f64()
        ),
    )
}

fn eps_f_sweep() -> Outcome {
    let start = Instant::now();
    let beta = 0.25;
    let oracle = SpectrumOracle::new();
    // noise-free blocks from the quadrature oracle: rect pulse triangle in delay
    let block = |eps_f: f64| {
        let mut a = [[0.0; 2]; 2];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (1.0 - i as f64).max(0.0) * oracle.eval(j as f64 - eps_f, beta);
            }
        }
        a
    };
    let linear = InterpolationModel::linear(PulseShape::Rect);
    let rrc = InterpolationModel::rrc(beta, PulseShape::Rect).unwrap();
    let mut max_lin = 0.0f64;
    let mut max_rrc = 0.0f64;
    let mut ends = [[0.0f64; 2]; 2];
    let grid = sweep_grid();
    for (idx, &eps_f) in grid.iter().enumerate() {
        let a = block(eps_f);
        let e_lin = fractional_estimate(&a, &linear).eps_f - eps_f;
        let e_rrc = fractional_estimate(&a, &rrc).eps_f - eps_f;
        max_lin = max_lin.max(e_lin.abs());
        max_rrc = max_rrc.max(e_rrc.abs());
        if idx == 0 {
            ends[0] = [e_lin, e_rrc];
        }
        if idx == grid.len() - 1 {
            ends[1] = [e_lin, e_rrc];
        }
    }
    let ends_ok = ends.iter().flatten().all(|e| e.abs() <= 1e-3);
    let t = start.elapsed();
    outcome(
        max_lin > 0.01 && max_rrc <= 1e-5 && ends_ok && within(t, 120.0),
        format!(
            "linear max {max_lin:.4}, rrc max {max_rrc:.1e}; endpoint errors linear {:+.5}/{:+.5}, rrc {:+.1e}/{:+.1e}, {:.2} s",
            ends[0][0],
            ends[1][0],
            ends[0][1],
            ends[1][1],
            t.as_secs_f64()
        ),
    )
}

fn rmse_ordering(cfg: &ExperimentConfig) -> Outcome {
    let start = Instant::now();
    let result = run_montecarlo(cfg).expect("montecarlo");
    let t = start.elapsed();
    let mut ordered = true;
    let mut comparable = true;
    let mut lines = Vec::new();
    for p in cfg.paths.0..=cfg.paths.1 {
        let row = |m: ModelKind| result.rows.iter().find(|r| r.paths == p && r.model == m).expect("row");
        let (lin, rrc) = (row(ModelKind::Linear), row(ModelKind::RrcAutocorr));
        ordered &= lin.rmse_eps_f > rrc.rmse_eps_f;
        let ratio = |a: f64, b: f64| a.max(b) / a.min(b);
        comparable &= ratio(lin.rmse_alpha, rrc.rmse_alpha) <= 2.0 && ratio(lin.rmse_eps_t, rrc.rmse_eps_t) <= 2.0;
        lines.push(format!(
            "P={p} eps_f {:.2e}/{:.2e} alpha {:.2e}/{:.2e} eps_t {:.2e}/{:.2e}",
            lin.rmse_eps_f, rrc.rmse_eps_f, lin.rmse_alpha, rrc.rmse_alpha, lin.rmse_eps_t, rrc.rmse_eps_t
        ));
    }
    outcome(
        ordered && comparable && within(t, 300.0),
        format!(
            "eps_f ordering holds: {ordered}; alpha and eps_t within 2x: {comparable}; {:.2} s (linear/rrc)\n      {}",
            t.as_secs_f64(),
            lines.join("\n      ")
        ),
    )
}

/// Zero-delay Doppler cut for `nu >= 0` read back from an exported map.
fn cut_from_csv(path: &Path) -> Vec<f64> {
    let text = fs::read_to_string(path).expect("map file");
    let mut cut: Vec<(i64, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .filter_map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let (k, l): (i64, i64) = (f[0].parse().ok()?, f[1].parse().ok()?);
            (l == 0 && k >= 0).then(|| (k, f[4].parse().unwrap()))
        })
        .collect();
    cut.sort_by_key(|c| c.0);
    cut.into_iter().map(|c| c.1).collect()
}

fn interior_maxima(v: &[f64]) -> usize {
    let peak = v.iter().cloned().fold(0.0, f64::max);
    (1..v.len() - 1).filter(|&i| v[i] > v[i - 1] + 1e-6 * peak && v[i] > v[i + 1] + 1e-6 * peak).count()
}

fn ambiguity_oscillation() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    let maps = export_ambiguity_maps(&cfg, dir.path()).expect("maps");
    let sizes_ok = maps.len() == 6
        && maps.iter().all(|m| {
            let rows = fs::read_to_string(&m.path).unwrap().lines().filter(|l| !l.starts_with('#')).count() - 1;
            rows == 101 * 101
        });
    let find = |window: WindowShape| {
        maps.iter().find(|m| m.pulse == PulseShape::Rect && m.window == window).expect("map").path.clone()
    };
    let rrc = interior_maxima(&cut_from_csv(&find(WindowShape::Rrc { beta: 0.25 })));
    let rect = interior_maxima(&cut_from_csv(&find(WindowShape::Rect)));
    let t = start.elapsed();
    outcome(
        sizes_ok && rrc == 0 && rect >= 2 && within(t, 120.0),
        format!(
            "6 maps of 101 x 101: {sizes_ok}; local maxima rect/rrc window {rrc}, rect/rect window {rect}; {:.2} s",
            t.as_secs_f64()
        ),
    )
}

fn determinism(cfg: &ExperimentConfig) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let result = run_montecarlo(cfg).expect("montecarlo");
        files.push(result.write(&out, cfg).expect("write"));
    }
    let mut identical = files[0].len() == files[1].len();
    for (a, b) in files[0].iter().zip(&files[1]) {
        identical &= fs::read(a).unwrap() == fs::read(b).unwrap();
    }
    outcome(identical, format!("{} files compared byte for byte", files[0].len()))
}

fn main() {
    let mc = ExperimentConfig { mode: InputMode::Exact, n_sim: 100, paths: (1, 5), seed: 7, ..Default::default() };
    let criteria: Vec<Criterion> = vec![
        ("RRC window autocorrelation closed form vs quadrature", Box::new(rrc_closed_form_vs_quadrature)),
        ("Nyquist pulses and basis orthonormality", Box::new(nyquist_and_orthonormality)),
        ("discrete vs continuous channel", Box::new(channel_cross_validation)),
        ("circulant discrepancy and wrap phase", Box::new(circulant_discrepancy_check)),
        ("integer-bin detection, 100 trials per P", Box::new(integer_bin_detection)),
        ("fractional Doppler sweep", Box::new(eps_f_sweep)),
        ("Monte Carlo RMSE ordering", Box::new(|| rmse_ordering(&mc))),
        ("ambiguity Doppler-cut oscillation", Box::new(ambiguity_oscillation)),
        ("Monte Carlo determinism", Box::new(|| determinism(&mc))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let o = run();
        failed += usize::from(!o.passed);
        println!("{} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
