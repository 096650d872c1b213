//! Multipath delay-Doppler channel in continuous and discrete form.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::otfs::{BasebandSignal, FrameConfig, SampleGrid, Waveform};
use crate::waveforms::{pulse_matched_autocorr, PulseShape};

/// Largest number of paths a scene may hold.
pub const MAX_PATHS: usize = 10;

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub alpha: Complex64,
    /// Delay in seconds.
    pub t_d: f64,
    /// Doppler shift in Hz.
    pub f_d: f64,
}

impl PathParams {
    pub fn new(alpha: Complex64, t_d: f64, f_d: f64) -> Self {
        PathParams { alpha, t_d, f_d }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScene {
    pub paths: Vec<PathParams>,
    /// Per-sample standard deviation of the complex noise.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Enforce `T_B < t_D < (U - 1) T_B`; tests may switch this off.
    pub enforce_gating: bool,
}

impl ChannelScene {
    pub fn new(paths: Vec<PathParams>) -> Self {
        ChannelScene { paths, noise_sigma: 0.0, seed: 0, enforce_gating: true }
    }

    pub fn ungated(paths: Vec<PathParams>) -> Self {
        ChannelScene { enforce_gating: false, ..Self::new(paths) }
    }

    pub fn validate(&self, cfg: &FrameConfig) -> Result<()> {
        if self.paths.is_empty() || self.paths.len() > MAX_PATHS {
            return Err(Error::Config(format!("scene must hold 1..={MAX_PATHS} paths, got {}", self.paths.len())));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Domain { what: "noise sigma", value: self.noise_sigma, domain: "[0, inf)" });
        }
        let tb = cfg.block_duration();
        let f_max = 0.5 / cfg.ts;
        for (index, p) in self.paths.iter().enumerate() {
            if !(p.alpha.re.is_finite() && p.alpha.im.is_finite() && p.t_d.is_finite() && p.f_d.is_finite()) {
                return Err(Error::Gating { index, reason: "non-finite parameter".into() });
            }
            if p.f_d.abs() >= f_max {
                return Err(Error::Gating {
                    index,
                    reason: format!("|f_D| = {} Hz is not below 1/(2 T_s) = {f_max} Hz", p.f_d.abs()),
                });
            }
            if self.enforce_gating && !(p.t_d > tb && p.t_d < (cfg.u as f64 - 1.0) * tb) {
                return Err(Error::Gating {
                    index,
                    reason: format!("delay {} s outside ({tb}, {}) s", p.t_d, (cfg.u as f64 - 1.0) * tb),
                });
            }
        }
        Ok(())
    }
}

/// `r(t) = sum_i alpha_i s(t - t_i) e^{j 2 pi f_i (t - t_i / 2)}` on `grid`.
///
/// Fractional delays are exact when `s` is a [`crate::otfs::PulseTrain`] and
/// band-limited interpolation when it is a sampled [`BasebandSignal`].
pub fn apply_continuous_channel<W: Waveform + ?Sized>(
    s: &W,
    scene: &ChannelScene,
    cfg: &FrameConfig,
    grid: SampleGrid,
) -> Result<BasebandSignal> {
    scene.validate(cfg)?;
    let samples = (0..grid.len)
        .into_par_iter()
        .map(|i| {
            let t = grid.time(i);
            scene
                .paths
                .iter()
                .map(|p| {
                    let phase = 2.0 * PI * p.f_d * (t - 0.5 * p.t_d);
                    p.alpha * s.value_at(t - p.t_d) * Complex64::from_polar(1.0, phase)
                })
                .sum()
        })
        .collect();
    Ok(BasebandSignal { samples, dt: grid.dt, t0: grid.t0 })
}

/// Adds circular complex Gaussian noise with `E|n|^2 = sigma^2`.
pub fn add_awgn(r: &BasebandSignal, sigma: f64, seed: u64) -> Result<BasebandSignal> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain { what: "noise sigma", value: sigma, domain: "[0, inf)" });
    }
    let mut out = r.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = sigma / 2f64.sqrt();
    for v in out.samples.iter_mut() {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        *v += Complex64::new(re, im) * scale;
    }
    Ok(out)
}

fn half_doppler(f_d: f64, ts: f64, i: usize) -> Complex64 {
    Complex64::from_polar(1.0, PI * f_d * i as f64 * ts)
}

/// `H = D(f/2) Toep(t_D) D(f/2)`, `H[i, j] = e^{j pi f (i + j) T_s} p*p^((i - j) T_s - t_D)`.
pub fn channel_matrix(t_d: f64, f_d: f64, l: usize, pulse: PulseShape, ts: f64) -> DMatrix<Complex64> {
    let d = t_d / ts;
    DMatrix::from_fn(l, l, |i, j| {
        let toep = pulse_matched_autocorr(pulse, i as f64 - j as f64 - d);
        half_doppler(f_d, ts, i) * toep * half_doppler(f_d, ts, j)
    })
}

/// `y = sum_i alpha_i H_i x~` with `x~` embedded at the start of a length-`l`
/// frame. Computed without materializing `H`.
pub fn apply_discrete_channel(
    x_tilde: &[Complex64],
    scene: &ChannelScene,
    l: usize,
    pulse: PulseShape,
    ts: f64,
) -> Result<Vec<Complex64>> {
    if x_tilde.len() > l {
        return Err(Error::FrameOverflow { len: x_tilde.len(), pri: l });
    }
    let mut y = vec![Complex64::new(0.0, 0.0); l];
    for p in &scene.paths {
        let d = p.t_d / ts;
        let right: Vec<Complex64> = x_tilde.iter().enumerate().map(|(j, x)| half_doppler(p.f_d, ts, j) * x).collect();
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, xj) in right.iter().enumerate() {
                let toep = pulse_matched_autocorr(pulse, i as f64 - j as f64 - d);
                if toep != 0.0 {
                    acc += xj * toep;
                }
            }
            *yi += p.alpha * half_doppler(p.f_d, ts, i) * acc;
        }
    }
    Ok(y)
}

/// Phase picked up by wrapped entries under periodic transmission.
pub fn wrapped_phase_factor(f_d: f64, l: usize, ts: f64) -> Complex64 {
    Complex64::from_polar(1.0, -PI * f_d * l as f64 * ts)
}

fn two_term_matrix(t_d: f64, f_d: f64, l: usize, pulse: PulseShape, ts: f64, wrap: Complex64) -> DMatrix<Complex64> {
    let d = t_d / ts;
    let len = l as f64;
    DMatrix::from_fn(l, l, |i, j| {
        let lag = i as f64 - j as f64;
        let lower = pulse_matched_autocorr(pulse, lag - d);
        let wrapped = pulse_matched_autocorr(pulse, lag + len - d);
        half_doppler(f_d, ts, i) * (lower + wrap * wrapped) * half_doppler(f_d, ts, j)
    })
}

/// Periodic-transmission matrix, truncated to the `q = 0` and `q = -1` images.
pub fn periodic_channel_matrix(t_d: f64, f_d: f64, l: usize, pulse: PulseShape, ts: f64) -> DMatrix<Complex64> {
    two_term_matrix(t_d, f_d, l, pulse, ts, wrapped_phase_factor(f_d, l, ts))
}

/// The same two images without the wrap phase: a plain circulant extension.
pub fn circulant_channel_matrix(t_d: f64, f_d: f64, l: usize, pulse: PulseShape, ts: f64) -> DMatrix<Complex64> {
    two_term_matrix(t_d, f_d, l, pulse, ts, Complex64::new(1.0, 0.0))
}

/// Periodic-transmission matrix minus its circulant extension.
pub fn circulant_discrepancy(t_d: f64, f_d: f64, l: usize, pulse: PulseShape, ts: f64) -> DMatrix<Complex64> {
    periodic_channel_matrix(t_d, f_d, l, pulse, ts) - circulant_channel_matrix(t_d, f_d, l, pulse, ts)
}
