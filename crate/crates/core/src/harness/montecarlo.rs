//! Monte Carlo RMSE tables and the fractional Doppler sweep.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, InputMode};
use crate::channel::{add_awgn, apply_discrete_channel, ChannelScene, PathParams};
use crate::error::{Error, Result};
use crate::estimator::{
    associate, block_from_surface, fractional_estimate, model_ambiguity, model_block, InterpolationModel, ModelKind,
    PathEstimate, TruthPath,
};
use crate::io;
use crate::otfs::{modulate, pilot_grid, BasebandSignal, FrameConfig};
use crate::receiver::{cross_ambiguity, ObservedSamples};

/// Attempts at drawing non-colliding bins before giving up.
pub const SCENE_RETRIES: usize = 1000;

/// Per-trial generator: the master seed XOR the trial index, one stream per
/// path count. Trials are independent of scheduling.
pub fn trial_rng(seed: u64, trial: usize, paths: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ trial as u64);
    rng.set_stream(paths as u64);
    rng
}

/// Inclusive integer-bin ranges `((k_lo, k_hi), (l_lo, l_hi))` for drawn paths.
///
/// Delays respect the gating `T_B < t_D < (U - 1) T_B` and keep the 2 x 2
/// block and the whole echo inside the observed lags; Doppler keeps `k + 1`
/// inside the unambiguous span.
pub fn bin_ranges(frame: &FrameConfig) -> ((i64, i64), (i64, i64)) {
    let nm = frame.nm() as i64;
    let obs = frame.observation_window();
    let last_lag = obs.end as i64 - frame.window_len() as i64 + 1;
    let l_lo = (nm + 1).max(obs.start as i64);
    let l_hi = ((frame.u as i64 - 1) * nm - 1).min(last_lag - 1);
    let k_lo = -((frame.n / 2) as i64);
    let k_hi = k_lo + frame.n as i64 - 2;
    ((k_lo, k_hi), (l_lo, l_hi))
}

/// One drawn path: bins, fractional parts, magnitude and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DrawnPath {
    pub truth: TruthPath,
    pub phase: f64,
}

/// Draws `paths` paths whose 2 x 2 blocks do not overlap (bins at least two
/// apart along some axis).
pub fn draw_scene(cfg: &ExperimentConfig, paths: usize, rng: &mut ChaCha8Rng) -> Result<Vec<DrawnPath>> {
    let ((k_lo, k_hi), (l_lo, l_hi)) = bin_ranges(&cfg.frame);
    if k_lo > k_hi || l_lo > l_hi {
        return Err(Error::InfeasibleScene {
            attempts: 0,
            detail: format!("empty bin range k in [{k_lo}, {k_hi}], l in [{l_lo}, {l_hi}]"),
        });
    }
    let mut bins: Vec<(i64, i64)> = Vec::with_capacity(paths);
    let mut attempts = 0;
    while bins.len() < paths {
        if attempts == SCENE_RETRIES {
            return Err(Error::InfeasibleScene {
                attempts,
                detail: format!("{paths} separated bins in k [{k_lo}, {k_hi}] x l [{l_lo}, {l_hi}]"),
            });
        }
        attempts += 1;
        bins.clear();
        for _ in 0..paths {
            let b = (rng.random_range(k_lo..=k_hi), rng.random_range(l_lo..=l_hi));
            if bins.iter().any(|o| (o.0 - b.0).abs() < 2 && (o.1 - b.1).abs() < 2) {
                break;
            }
            bins.push(b);
        }
    }
    let (a_lo, a_hi) = cfg.alpha_range;
    Ok(bins
        .into_iter()
        .map(|(k, l)| {
            let eps_t = rng.random::<f64>();
            let eps_f = rng.random::<f64>();
            let alpha = a_lo + (a_hi - a_lo) * rng.random::<f64>();
            let phase = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            DrawnPath { truth: TruthPath { k, l, eps_t, eps_f, alpha }, phase }
        })
        .collect())
}

/// Fixed per-run data of the pipeline mode.
struct Pipeline {
    x_tilde: Vec<Complex64>,
    /// Block peak produced by a unit on-grid path.
    gain: f64,
}

impl Pipeline {
    fn new(frame: &FrameConfig) -> Result<Self> {
        let x_tilde = modulate(&pilot_grid(frame.n, frame.m)?, frame)?;
        let energy: f64 = x_tilde.iter().map(|v| v.norm_sqr()).sum();
        Ok(Pipeline { gain: energy / (frame.nm() as f64).sqrt(), x_tilde })
    }

    fn blocks(
        &self,
        frame: &FrameConfig,
        drawn: &[DrawnPath],
        sigma: f64,
        noise_seed: u64,
    ) -> Result<Vec<[[f64; 2]; 2]>> {
        let scene = ChannelScene::new(
            drawn
                .iter()
                .map(|d| {
                    PathParams::new(
                        Complex64::from_polar(d.truth.alpha, d.phase),
                        d.truth.delay() * frame.ts,
                        d.truth.doppler() / frame.block_duration(),
                    )
                })
                .collect(),
        );
        scene.validate(frame)?;
        let mut y = apply_discrete_channel(&self.x_tilde, &scene, frame.pri_samples(), frame.pulse, frame.ts)?;
        if sigma > 0.0 {
            let noisy = add_awgn(&BasebandSignal { samples: y, dt: frame.ts, t0: 0.0 }, sigma, noise_seed)?;
            y = noisy.samples;
        }
        let observed = ObservedSamples::from_frame(&y, frame.observation_window())?;
        let surface = cross_ambiguity(&observed, &self.x_tilde, frame.n, frame.m, frame.ts)?;
        drawn
            .iter()
            .map(|d| {
                block_from_surface(&surface, d.truth.k, d.truth.l).ok_or_else(|| {
                    Error::Dimension(format!("block at ({}, {}) leaves the surface", d.truth.k, d.truth.l))
                })
            })
            .collect()
    }
}

/// Model value at the origin; the fitted `alpha` times this is the block peak.
fn peak(model: &InterpolationModel) -> f64 {
    model_ambiguity(model, 0.0, 0.0).0
}

/// One row of the RMSE table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseRow {
    pub paths: usize,
    pub model: ModelKind,
    pub rmse_alpha: f64,
    pub rmse_eps_t: f64,
    pub rmse_eps_f: f64,
    /// Estimate/truth pairs entering the RMSE.
    pub matched: usize,
    pub unmatched_truths: usize,
    pub unmatched_estimates: usize,
    /// Fits where no start met the simplex tolerances.
    pub not_converged: usize,
}

/// One fitted path of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub paths: usize,
    pub trial: usize,
    pub path: usize,
    pub model: ModelKind,
    pub estimate: PathEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub rows: Vec<RmseRow>,
    pub estimates: Vec<EstimateRecord>,
}

struct TrialOutcome {
    truths: Vec<TruthPath>,
    /// Per model, one estimate per truth (same order).
    estimates: Vec<Vec<PathEstimate>>,
}

fn run_trial(
    cfg: &ExperimentConfig,
    paths: usize,
    trial: usize,
    models: &[InterpolationModel],
    truth_model: &InterpolationModel,
    pipeline: Option<&Pipeline>,
) -> Result<TrialOutcome> {
    let mut rng = trial_rng(cfg.seed, trial, paths);
    let drawn = draw_scene(cfg, paths, &mut rng)?;
    let noise_seed: u64 = rng.random();
    let (blocks, gain) = match pipeline {
        None => (
            drawn
                .iter()
                .map(|d| model_block(truth_model, d.truth.alpha, d.truth.eps_t, d.truth.eps_f))
                .collect::<Vec<_>>(),
            peak(truth_model),
        ),
        Some(p) => (p.blocks(&cfg.frame, &drawn, cfg.noise_sigma, noise_seed)?, p.gain),
    };
    let estimates = models
        .iter()
        .map(|model| {
            let to_alpha = peak(model) / gain;
            drawn
                .iter()
                .zip(&blocks)
                .map(|(d, block)| {
                    let fit = fractional_estimate(block, model);
                    let mut est = PathEstimate::from_fit(d.truth.k, d.truth.l, &fit);
                    est.alpha_hat *= to_alpha;
                    est
                })
                .collect()
        })
        .collect();
    Ok(TrialOutcome { truths: drawn.iter().map(|d| d.truth).collect(), estimates })
}

/// Runs every `(P, model)` cell of the experiment.
///
/// Both modes fit a block anchored at the true integer bins. Reported
/// `alpha_hat` is rescaled so that a unit on-grid path gives 1 for every model.
pub fn run_montecarlo(cfg: &ExperimentConfig) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let models: Vec<InterpolationModel> = cfg.models.iter().map(|k| cfg.model(*k)).collect::<Result<_>>()?;
    let truth_model = cfg.truth_model()?;
    let pipeline = match cfg.mode {
        InputMode::Exact => None,
        InputMode::Pipeline => Some(Pipeline::new(&cfg.frame)?),
    };
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for paths in cfg.paths.0..=cfg.paths.1 {
        let outcomes: Vec<TrialOutcome> = (0..cfg.n_sim)
            .into_par_iter()
            .map(|trial| run_trial(cfg, paths, trial, &models, &truth_model, pipeline.as_ref()))
            .collect::<Result<_>>()?;
        for (mi, kind) in cfg.models.iter().enumerate() {
            let mut sums = [0.0f64; 3];
            let mut row = RmseRow {
                paths,
                model: *kind,
                rmse_alpha: 0.0,
                rmse_eps_t: 0.0,
                rmse_eps_f: 0.0,
                matched: 0,
                unmatched_truths: 0,
                unmatched_estimates: 0,
                not_converged: 0,
            };
            for (trial, outcome) in outcomes.iter().enumerate() {
                let estimates = &outcome.estimates[mi];
                let assoc = associate(estimates, &outcome.truths);
                for &(e, t) in &assoc.pairs {
                    let (est, truth) = (&estimates[e], &outcome.truths[t]);
                    sums[0] += (est.alpha_hat - truth.alpha).powi(2);
                    sums[1] += (est.delay() - truth.delay()).powi(2);
                    sums[2] += (est.doppler() - truth.doppler()).powi(2);
                }
                row.matched += assoc.pairs.len();
                row.unmatched_truths += assoc.unmatched_truths.len();
                row.unmatched_estimates += assoc.unmatched_estimates.len();
                for (path, est) in estimates.iter().enumerate() {
                    row.not_converged += usize::from(!est.converged);
                    records.push(EstimateRecord { paths, trial, path, model: *kind, estimate: *est });
                }
            }
            if row.matched > 0 {
                let n = row.matched as f64;
                row.rmse_alpha = (sums[0] / n).sqrt();
                row.rmse_eps_t = (sums[1] / n).sqrt();
                row.rmse_eps_f = (sums[2] / n).sqrt();
            } else {
                row.rmse_alpha = f64::NAN;
                row.rmse_eps_t = f64::NAN;
                row.rmse_eps_f = f64::NAN;
            }
            rows.push(row);
        }
    }
    Ok(MonteCarloResult { rows, estimates: records })
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    schema: u32,
    kind: &'static str,
    crate_version: &'static str,
    config: &'a ExperimentConfig,
    rows: &'a [RmseRow],
    files: Vec<String>,
}

impl MonteCarloResult {
    /// `P,model,rmse_alpha,rmse_eps_t,rmse_eps_f` with the schema comment line.
    pub fn rmse_csv(&self) -> String {
        let mut out = io::schema_line("rmse");
        out.push_str("P,model,rmse_alpha,rmse_eps_t,rmse_eps_f\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:e},{:e},{:e}", r.paths, r.model, r.rmse_alpha, r.rmse_eps_t, r.rmse_eps_f);
        }
        out
    }

    /// Per-path estimates for path count `paths`.
    pub fn estimates_csv(&self, paths: usize) -> String {
        let mut out = io::schema_line("estimates");
        out.push_str("trial,path,k_hat,l_hat,eps_t_hat,eps_f_hat,alpha_hat,model_kind\n");
        for r in self.estimates.iter().filter(|r| r.paths == paths) {
            let e = &r.estimate;
            let _ = writeln!(
                out,
                "{},{},{},{},{:e},{:e},{:e},{}",
                r.trial, r.path, e.k_hat, e.l_hat, e.eps_t_hat, e.eps_f_hat, e.alpha_hat, r.model
            );
        }
        out
    }

    /// Writes `rmse.csv`, `estimates_P<p>.csv` per path count and `montecarlo.json`.
    pub fn write(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
        let mut written = vec![dir.join("rmse.csv")];
        io::write_atomic(&written[0], self.rmse_csv().as_bytes())?;
        for paths in cfg.paths.0..=cfg.paths.1 {
            let path = dir.join(format!("estimates_P{paths}.csv"));
            io::write_atomic(&path, self.estimates_csv(paths).as_bytes())?;
            written.push(path);
        }
        let meta = RunMetadata {
            schema: io::CSV_SCHEMA_VERSION,
            kind: "montecarlo",
            crate_version: env!("CARGO_PKG_VERSION"),
            config: cfg,
            rows: &self.rows,
            files: written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect(),
        };
        let json = dir.join("montecarlo.json");
        io::write_json(&json, &meta)?;
        written.push(json);
        Ok(written)
    }
}

/// One point of the fractional Doppler sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps_f_true: f64,
    pub eps_f_hat: f64,
    pub error: f64,
}

/// Sweep points `0.01, 0.02, ..., 0.99`.
pub fn sweep_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Noise-free sweep of `eps_f` with `eps_t = 0`: blocks come from the RRC
/// window model (roll-off `cfg.window_beta`) and are fitted with `kind`.
pub fn sweep_eps_f(cfg: &ExperimentConfig, kind: ModelKind) -> Result<Vec<SweepRow>> {
    let truth = InterpolationModel::rrc(cfg.window_beta, cfg.frame.pulse)?;
    let model = cfg.model(kind)?;
    Ok(sweep_grid()
        .into_par_iter()
        .map(|eps_f| {
            let fit = fractional_estimate(&model_block(&truth, 1.0, 0.0, eps_f), &model);
            SweepRow { eps_f_true: eps_f, eps_f_hat: fit.eps_f, error: fit.eps_f - eps_f }
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = io::schema_line("sweep");
    out.push_str("eps_f_true,eps_f_hat,error\n");
    for r in rows {
        let _ = writeln!(out, "{},{:e},{:e}", r.eps_f_true, r.eps_f_hat, r.error);
    }
    out
}

#[derive(Serialize)]
struct SweepMetadata<'a> {
    schema: u32,
    kind: &'static str,
    model: ModelKind,
    window_beta: f64,
    eps_t: f64,
    max_abs_error: f64,
    config: &'a ExperimentConfig,
}

/// Writes `sweep_<model>.csv` and its JSON sidecar.
pub fn write_sweep(dir: &Path, cfg: &ExperimentConfig, kind: ModelKind, rows: &[SweepRow]) -> Result<PathBuf> {
    let path = dir.join(format!("sweep_{kind}.csv"));
    io::write_atomic(&path, sweep_csv(rows).as_bytes())?;
    let meta = SweepMetadata {
        schema: io::CSV_SCHEMA_VERSION,
        kind: "sweep",
        model: kind,
        window_beta: cfg.window_beta,
        eps_t: 0.0,
        max_abs_error: rows.iter().fold(0.0, |m, r| m.max(r.error.abs())),
        config: cfg,
    };
    io::write_json(&path.with_extension("json"), &meta)?;
    Ok(path)
}
