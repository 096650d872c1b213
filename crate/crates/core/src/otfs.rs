//! Delay-Doppler symbol grids, the DD-to-time transform, windowing, pulse
//! shaping and PRI frame assembly.
//!
//! The transmit block is causal: coefficient `x~[l]` drives a pulse centred
//! at `l T_s`. Oversampled signals live on cell-centred grids, sample `m` at
//! `t0 + m dt` with `t0` half a sample past a multiple of `T_s / 2`, so that
//! rect-pulse edges never coincide with a sample.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveforms::{self, PulseShape, WindowExtent, WindowShape, PULSE_TAIL_CUTOFF};

/// N x M delay-Doppler symbol array, `symbols[k * m + l] = X_DD[k, l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DDGrid {
    n: usize,
    m: usize,
    symbols: Vec<Complex64>,
}

impl DDGrid {
    pub fn zeros(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Dimension(format!("grid must be non-empty, got {n} x {m}")));
        }
        Ok(DDGrid { n, m, symbols: vec![Complex64::new(0.0, 0.0); n * m] })
    }

    pub fn from_symbols(n: usize, m: usize, symbols: Vec<Complex64>) -> Result<Self> {
        let mut grid = Self::zeros(n, m)?;
        if symbols.len() != n * m {
            return Err(Error::Dimension(format!("{} symbols for a {n} x {m} grid", symbols.len())));
        }
        grid.symbols = symbols;
        Ok(grid)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn get(&self, k: usize, l: usize) -> Complex64 {
        self.symbols[k * self.m + l]
    }

    pub fn set(&mut self, k: usize, l: usize, value: Complex64) -> Result<()> {
        if k >= self.n || l >= self.m {
            return Err(Error::IndexOutOfRange { k, l, n: self.n, m: self.m });
        }
        self.symbols[k * self.m + l] = value;
        Ok(())
    }

    pub fn energy(&self) -> f64 {
        self.symbols.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// Pilot grid: `X_DD[0, 0] = 1`, zero elsewhere.
pub fn pilot_grid(n: usize, m: usize) -> Result<DDGrid> {
    let mut grid = DDGrid::zeros(n, m)?;
    grid.symbols[0] = Complex64::new(1.0, 0.0);
    Ok(grid)
}

/// Frame geometry and waveform choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Doppler bins N.
    pub n: usize,
    /// Delay bins M.
    pub m: usize,
    /// Blocks per PRI.
    pub u: usize,
    /// Sample period `T_s` in seconds.
    pub ts: f64,
    /// Oversampling factor (samples per `T_s`).
    pub os: usize,
    pub pulse: PulseShape,
    pub window: WindowShape,
    pub window_extent: WindowExtent,
    /// Truncation half-width of sinc/RRC pulses, in units of `T_s`.
    pub pulse_tail: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            n: 8,
            m: 8,
            u: 6,
            ts: 1e-8,
            os: 8,
            pulse: PulseShape::Rect,
            window: WindowShape::Rrc { beta: 0.25 },
            window_extent: WindowExtent::Frame,
            pulse_tail: PULSE_TAIL_CUTOFF,
        }
    }
}

/// Inclusive range of observable delay indices inside one PRI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub start: usize,
    pub end: usize,
}

impl ObservationWindow {
    pub fn contains(&self, index: i64) -> bool {
        index >= self.start as i64 && index <= self.end as i64
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub(crate) fn check(&self, index: i64) -> Result<()> {
        if self.contains(index) {
            Ok(())
        } else {
            Err(Error::OutsideObservation { index, start: self.start as i64, end: self.end as i64 })
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::Config(format!("N and M must be positive, got {} x {}", self.n, self.m)));
        }
        if self.u < 2 {
            return Err(Error::Config(format!("U must be at least 2, got {}", self.u)));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(Error::Config(format!("sample period must be positive, got {}", self.ts)));
        }
        if self.os == 0 || !self.os.is_power_of_two() {
            return Err(Error::Config(format!("oversampling must be a power of two, got {}", self.os)));
        }
        if !(self.pulse_tail >= 1.0 && self.pulse_tail.is_finite()) {
            return Err(Error::Config(format!("pulse tail must be at least 1, got {}", self.pulse_tail)));
        }
        if let WindowExtent::Periods(0) = self.window_extent {
            return Err(Error::Config("window extent needs at least one period".into()));
        }
        self.pulse.validate()?;
        self.window.validate()?;
        let len = self.window_len();
        if len > self.pri_samples() {
            return Err(Error::FrameOverflow { len, pri: self.pri_samples() });
        }
        Ok(())
    }

    pub fn nm(&self) -> usize {
        self.n * self.m
    }

    /// OTFS symbol duration `T = M T_s`.
    pub fn symbol_period(&self) -> f64 {
        self.m as f64 * self.ts
    }

    /// Block duration `T_B = N M T_s`; one Doppler bin is `1 / T_B`.
    pub fn block_duration(&self) -> f64 {
        self.nm() as f64 * self.ts
    }

    pub fn pri(&self) -> f64 {
        self.u as f64 * self.block_duration()
    }

    /// PRI length in `T_s` slots.
    pub fn pri_samples(&self) -> usize {
        self.u * self.nm()
    }

    pub fn dt(&self) -> f64 {
        self.ts / self.os as f64
    }

    pub fn window_len(&self) -> usize {
        waveforms::window_len(self.window, self.n, self.m, self.window_extent)
    }

    pub fn window_samples(&self) -> Vec<f64> {
        waveforms::window_samples_with_extent(self.window, self.n, self.m, self.window_extent)
    }

    /// Half-width of the materialized pulse in units of `T_s`.
    pub fn pulse_support(&self) -> f64 {
        match self.pulse {
            PulseShape::Rect => 0.5,
            _ => self.pulse_tail,
        }
    }

    /// Observable delay indices `[floor((1+b)NM), floor((U-(1+b))NM)]`.
    pub fn observation_window(&self) -> ObservationWindow {
        let grow = 1.0 + self.window.beta();
        let nm = self.nm() as f64;
        ObservationWindow { start: (grow * nm).floor() as usize, end: ((self.u as f64 - grow) * nm).floor() as usize }
    }
}

/// Uniform time grid `t0 + i dt`, `i < len`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl SampleGrid {
    /// Cell-centred grid spanning `[start_slot - 1/2, start_slot + slots - 1/2) T_s`.
    pub fn slots(cfg: &FrameConfig, start_slot: i64, slots: usize) -> Self {
        let dt = cfg.dt();
        SampleGrid { t0: (start_slot as f64 - 0.5) * cfg.ts + 0.5 * dt, dt, len: slots * cfg.os }
    }

    /// One PRI starting half a slot before the first transmit pulse centre.
    pub fn pri(cfg: &FrameConfig) -> Self {
        Self::slots(cfg, 0, cfg.pri_samples())
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

/// Oversampled complex baseband signal; sample `i` is at `t0 + i dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSignal {
    pub samples: Vec<Complex64>,
    pub dt: f64,
    pub t0: f64,
}

/// Half-width, in samples, of the windowed-sinc interpolator.
const INTERP_HALF_WIDTH: i64 = 48;

impl BasebandSignal {
    pub fn zeros(len: usize, dt: f64, t0: f64) -> Self {
        BasebandSignal { samples: vec![Complex64::new(0.0, 0.0); len], dt, t0 }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> SampleGrid {
        SampleGrid { t0: self.t0, dt: self.dt, len: self.len() }
    }

    /// Evaluates `w` on `grid`.
    pub fn from_waveform(w: &(impl Waveform + ?Sized), grid: SampleGrid) -> Self {
        let samples = (0..grid.len).into_par_iter().map(|i| w.value_at(grid.time(i))).collect();
        BasebandSignal { samples, dt: grid.dt, t0: grid.t0 }
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.samples.len() as f64 * self.dt
    }

    /// `int |s|^2 dt` in seconds.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.dt
    }
}

/// Anything that can be evaluated at an arbitrary time instant.
pub trait Waveform: Sync {
    fn value_at(&self, t: f64) -> Complex64;
    /// Interval outside which the waveform is zero.
    fn time_support(&self) -> (f64, f64);
}

impl Waveform for BasebandSignal {
    /// Hann-windowed sinc interpolation; exact at sample instants.
    fn value_at(&self, t: f64) -> Complex64 {
        let x = (t - self.t0) / self.dt;
        let nearest = x.round();
        if (x - nearest).abs() < 1e-9 {
            let i = nearest as i64;
            return if i >= 0 && (i as usize) < self.len() {
                self.samples[i as usize]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        let base = x.floor() as i64;
        let lo = (base - INTERP_HALF_WIDTH + 1).max(0);
        let hi = (base + INTERP_HALF_WIDTH).min(self.len() as i64 - 1);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in lo..=hi {
            let d = x - i as f64;
            let taper = 0.5 * (1.0 + (PI * d / INTERP_HALF_WIDTH as f64).cos());
            acc += self.samples[i as usize] * (waveforms::sinc(d) * taper);
        }
        acc
    }

    fn time_support(&self) -> (f64, f64) {
        (self.t0 - INTERP_HALF_WIDTH as f64 * self.dt, self.end_time() + INTERP_HALF_WIDTH as f64 * self.dt)
    }
}

/// Closed-form `sum_l c[l] p((t - t_first) / T_s - l)`, evaluated exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrain {
    pub coeffs: Vec<Complex64>,
    pub pulse: PulseShape,
    pub ts: f64,
    /// Centre of the pulse carrying `coeffs[0]`.
    pub t_first: f64,
    /// Half-width of each pulse in units of `T_s`.
    pub support: f64,
}

impl PulseTrain {
    pub fn new(coeffs: Vec<Complex64>, cfg: &FrameConfig) -> Self {
        PulseTrain { coeffs, pulse: cfg.pulse, ts: cfg.ts, t_first: 0.0, support: cfg.pulse_support() }
    }

    fn pulse_at(&self, u: f64) -> f64 {
        if u.abs() > self.support {
            0.0
        } else {
            waveforms::pulse_value(self.pulse, u)
        }
    }

    /// Cell-centred grid that covers the whole train at `os` samples per `T_s`.
    pub fn natural_grid(&self, os: usize) -> (f64, usize) {
        let pad = (self.support - 0.5).max(0.0).ceil();
        let t0 = self.t_first + (-pad - 0.5) * self.ts + 0.5 * self.ts / os as f64;
        let slots = self.coeffs.len() as f64 + 2.0 * pad;
        (t0, slots as usize * os)
    }

    /// Samples on `t0 + i dt`, by scattering each pulse over its support.
    pub fn sample(&self, t0: f64, dt: f64, len: usize) -> BasebandSignal {
        let mut out = BasebandSignal::zeros(len, dt, t0);
        for (l, &c) in self.coeffs.iter().enumerate() {
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let centre = self.t_first + l as f64 * self.ts;
            let half = self.support * self.ts;
            let first = ((centre - half - t0) / dt).ceil().max(0.0);
            let last = ((centre + half - t0) / dt).floor().min(len as f64 - 1.0);
            if last < first {
                continue;
            }
            for i in first as usize..=last as usize {
                let u = (t0 + i as f64 * dt - centre) / self.ts;
                out.samples[i] += c * self.pulse_at(u);
            }
        }
        out
    }
}

impl Waveform for PulseTrain {
    fn value_at(&self, t: f64) -> Complex64 {
        let u = (t - self.t_first) / self.ts;
        let lo = (u - self.support).ceil().max(0.0);
        let hi = (u + self.support).floor().min(self.coeffs.len() as f64 - 1.0);
        let mut acc = Complex64::new(0.0, 0.0);
        if hi < lo {
            return acc;
        }
        for l in lo as usize..=hi as usize {
            acc += self.coeffs[l] * self.pulse_at(u - l as f64);
        }
        acc
    }

    fn time_support(&self) -> (f64, f64) {
        let half = self.support * self.ts;
        (self.t_first - half, self.t_first + (self.coeffs.len().max(1) - 1) as f64 * self.ts + half)
    }
}

/// `x_TD[n M + l] = (1/sqrt N) sum_k X_DD[k, l] e^{j 2 pi n k / N}`.
pub fn dd_to_td(grid: &DDGrid) -> Vec<Complex64> {
    let (n, m) = (grid.n, grid.m);
    let scale = 1.0 / (n as f64).sqrt();
    let mut out = vec![Complex64::new(0.0, 0.0); n * m];
    for t in 0..n {
        for l in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                let phase = 2.0 * PI * ((t * k) % n) as f64 / n as f64;
                acc += grid.get(k, l) * Complex64::from_polar(1.0, phase);
            }
            out[t * m + l] = acc * scale;
        }
    }
    out
}

/// Inverse of [`dd_to_td`].
pub fn td_to_dd(x_td: &[Complex64], n: usize, m: usize) -> Result<DDGrid> {
    if x_td.len() != n * m {
        return Err(Error::Dimension(format!("{} samples for a {n} x {m} grid", x_td.len())));
    }
    let mut grid = DDGrid::zeros(n, m)?;
    let scale = 1.0 / (n as f64).sqrt();
    for k in 0..n {
        for l in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..n {
                let phase = -2.0 * PI * ((t * k) % n) as f64 / n as f64;
                acc += x_td[t * m + l] * Complex64::from_polar(1.0, phase);
            }
            grid.symbols[k * m + l] = acc * scale;
        }
    }
    Ok(grid)
}

/// `x~[l] = w[l] x_TD[l mod NM]` over the window support.
pub fn apply_window(
    x_td: &[Complex64],
    window: WindowShape,
    extent: WindowExtent,
    n: usize,
    m: usize,
) -> Result<Vec<Complex64>> {
    let nm = n * m;
    if x_td.len() != nm {
        return Err(Error::Dimension(format!("expected {nm} time-domain samples, got {}", x_td.len())));
    }
    let w = waveforms::window_samples_with_extent(window, n, m, extent);
    Ok(w.iter().enumerate().map(|(i, &wi)| x_td[i % nm] * wi).collect())
}

/// Windowed transmit block `x~` for a symbol grid.
pub fn modulate(grid: &DDGrid, cfg: &FrameConfig) -> Result<Vec<Complex64>> {
    if grid.n != cfg.n || grid.m != cfg.m {
        return Err(Error::Dimension(format!("{} x {} grid for a {} x {} frame", grid.n, grid.m, cfg.n, cfg.m)));
    }
    apply_window(&dd_to_td(grid), cfg.window, cfg.window_extent, cfg.n, cfg.m)
}

fn require_continuous(cfg: &FrameConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.os < 8 {
        return Err(Error::Config(format!("continuous-time operations need oversampling >= 8, got {}", cfg.os)));
    }
    Ok(())
}

/// `s(t) = sum_l x~[l] p(t - l T_s)` on the train's natural grid.
pub fn synthesize(x_tilde: &[Complex64], cfg: &FrameConfig) -> Result<BasebandSignal> {
    require_continuous(cfg)?;
    let train = PulseTrain::new(x_tilde.to_vec(), cfg);
    let (t0, len) = train.natural_grid(cfg.os);
    Ok(train.sample(t0, cfg.dt(), len))
}

fn basis_coeffs(k: usize, l: usize, cfg: &FrameConfig) -> Result<Vec<Complex64>> {
    if k >= cfg.n || l >= cfg.m {
        return Err(Error::IndexOutOfRange { k, l, n: cfg.n, m: cfg.m });
    }
    let w = cfg.window_samples();
    let scale = 1.0 / (cfg.n as f64).sqrt();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); w.len()];
    let mut i = l;
    let mut n_idx = 0usize;
    while i < w.len() {
        let phase = 2.0 * PI * ((n_idx * k) % cfg.n) as f64 / cfg.n as f64;
        coeffs[i] = Complex64::from_polar(w[i] * scale, phase);
        i += cfg.m;
        n_idx += 1;
    }
    Ok(coeffs)
}

/// Basis waveform `h_{k,l}(t)` carrying symbol `X_DD[k, l]`, sampled on the
/// same grid as [`synthesize`]; `sum X_DD[k,l] h_{k,l} = s`.
pub fn basis_waveform(k: usize, l: usize, cfg: &FrameConfig) -> Result<BasebandSignal> {
    require_continuous(cfg)?;
    let train = PulseTrain::new(basis_coeffs(k, l, cfg)?, cfg);
    let (t0, len) = train.natural_grid(cfg.os);
    Ok(train.sample(t0, cfg.dt(), len))
}

/// `G[a, b] = (1/T_s) int h_a h_b^* dt` over the listed `(k, l)` pairs.
pub fn orthonormality_gram(cfg: &FrameConfig, subset: &[(usize, usize)]) -> Result<DMatrix<Complex64>> {
    if subset.is_empty() {
        return Err(Error::Dimension("empty basis subset".into()));
    }
    let waves: Vec<BasebandSignal> =
        subset.par_iter().map(|&(k, l)| basis_waveform(k, l, cfg)).collect::<Result<_>>()?;
    let scale = cfg.dt() / cfg.ts;
    let p = waves.len();
    let rows: Vec<Vec<Complex64>> = (0..p)
        .into_par_iter()
        .map(|a| {
            (0..p)
                .map(|b| {
                    let acc: Complex64 =
                        waves[a].samples.iter().zip(&waves[b].samples).map(|(x, y)| x * y.conj()).sum();
                    acc * scale
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(p, p, |a, b| rows[a][b]))
}

/// One PRI: the transmit block at the start, silence for the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub signal: BasebandSignal,
    pub observation: ObservationWindow,
    /// PRI length in `T_s` slots.
    pub pri_slots: usize,
}

/// Places `signal` at the start of a PRI of `U N M OS` samples.
pub fn assemble_frame(signal: &BasebandSignal, cfg: &FrameConfig) -> Result<Frame> {
    cfg.validate()?;
    let len = cfg.pri_samples() * cfg.os;
    if signal.len() > len {
        return Err(Error::FrameOverflow { len: signal.len().div_ceil(cfg.os), pri: cfg.pri_samples() });
    }
    let mut out = BasebandSignal::zeros(len, signal.dt, signal.t0);
    out.samples[..signal.len()].copy_from_slice(&signal.samples);
    Ok(Frame { signal: out, observation: cfg.observation_window(), pri_slots: cfg.pri_samples() })
}
