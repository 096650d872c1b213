//! Quick oracle checks run by the `selftest` command.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{apply_continuous_channel, apply_discrete_channel, ChannelScene, PathParams};
use crate::error::Result;
use crate::estimator::{detect_paths, fractional_estimate, model_block, DetectOptions, InterpolationModel};
use crate::otfs::{dd_to_td, modulate, pilot_grid, DDGrid, FrameConfig, PulseTrain, SampleGrid};
use crate::receiver::{matched_filter_sample, ObservedSamples};
use crate::waveforms::{numeric_spectrum_autocorr, pulse_matched_autocorr, window_autocorr_rrc, PulseShape};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, limit: f64) -> Check {
    Check { name, passed: value <= limit, detail: format!("{value:.3e} (limit {limit:.0e})") }
}

fn rrc_closed_form_vs_quadrature() -> Result<Check> {
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let nu = -1.0 + i as f64 / 100.0;
        worst = worst.max((window_autocorr_rrc(nu, 0.25)? - numeric_spectrum_autocorr(nu, 0.25)).abs());
    }
    Ok(check("rrc window autocorrelation vs quadrature", worst, 1e-6))
}

fn nyquist_pulses() -> Check {
    let shapes = [PulseShape::Rect, PulseShape::Sinc, PulseShape::Rrc { beta: 0.25 }];
    let worst = shapes
        .iter()
        .flat_map(|s| (1..=10).flat_map(move |k| [k, -k]).map(move |k| pulse_matched_autocorr(*s, k as f64).abs()))
        .fold(0.0f64, f64::max);
    check("matched pulse autocorrelation at nonzero integers", worst, 1e-9)
}

fn parseval() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let symbols = (0..64).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let grid = DDGrid::from_symbols(8, 8, symbols)?;
    let td: f64 = dd_to_td(&grid).iter().map(|v| v.norm_sqr()).sum();
    Ok(check("delay-Doppler to time energy", (td - grid.energy()).abs(), 1e-12))
}

fn inverse_crime_fit() -> Result<Check> {
    let model = InterpolationModel::rrc(0.25, PulseShape::Rect)?;
    let fit = fractional_estimate(&model_block(&model, 1.0, 0.3, 0.7), &model);
    let err = (fit.alpha - 1.0).abs().max((fit.eps_t - 0.3).abs()).max((fit.eps_f - 0.7).abs());
    Ok(check("self-consistent 2x2 fit", err, 1e-6))
}

fn continuous_vs_discrete() -> Result<Check> {
    // smooth pulse: the midpoint rule is then far below the tolerance
    let cfg = FrameConfig { pulse: PulseShape::Rrc { beta: 0.25 }, ..FrameConfig::default() };
    let x = modulate(&pilot_grid(cfg.n, cfg.m)?, &cfg)?;
    let scene = ChannelScene::new(vec![PathParams::new(Complex64::new(0.7, -0.2), 131.37 * cfg.ts, 0.004 / cfg.ts)]);
    let r = apply_continuous_channel(&PulseTrain::new(x.clone(), &cfg), &scene, &cfg, SampleGrid::pri(&cfg))?;
    let y = matched_filter_sample(&r, &cfg)?;
    let d = apply_discrete_channel(&x, &scene, cfg.pri_samples(), cfg.pulse, cfg.ts)?;
    let d = ObservedSamples::from_frame(&d, cfg.observation_window())?;
    let diff: f64 = y.samples.iter().zip(&d.samples).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(check("continuous vs discrete channel", (diff / d.energy()).sqrt(), 1e-3))
}

fn detection() -> Result<Check> {
    let cfg = FrameConfig::default();
    let x = modulate(&pilot_grid(cfg.n, cfg.m)?, &cfg)?;
    let truth = [(-2i64, 97i64), (1, 140), (3, 141)];
    let scene = ChannelScene::new(
        truth
            .iter()
            .map(|&(k, l)| {
                PathParams::new(Complex64::new(0.8, 0.1), l as f64 * cfg.ts, k as f64 / cfg.block_duration())
            })
            .collect(),
    );
    let y = apply_discrete_channel(&x, &scene, cfg.pri_samples(), cfg.pulse, cfg.ts)?;
    let y = ObservedSamples::from_frame(&y, cfg.observation_window())?;
    let mut bins = detect_paths(&y, &x, cfg.n, cfg.m, cfg.ts, &DetectOptions::default())?.bins;
    bins.sort_unstable();
    let passed = bins == [(-2, 97), (1, 140), (3, 141)];
    Ok(Check { name: "integer-bin detection of three paths", passed, detail: format!("{bins:?}") })
}

/// Runs every check; an error inside a check is reported as a failure.
pub fn run_selftest() -> Vec<Check> {
    let wrap = |name: &'static str, r: Result<Check>| {
        r.unwrap_or_else(|e| Check { name, passed: false, detail: e.to_string() })
    };
    vec![
        wrap("rrc window autocorrelation vs quadrature", rrc_closed_form_vs_quadrature()),
        nyquist_pulses(),
        wrap("delay-Doppler to time energy", parseval()),
        wrap("self-consistent 2x2 fit", inverse_crime_fit()),
        wrap("continuous vs discrete channel", continuous_vs_discrete()),
        wrap("integer-bin detection of three paths", detection()),
    ]
}
