//! Matched filtering, the discrete cross-ambiguity surface and fine
//! ambiguity maps.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;
use crate::otfs::{BasebandSignal, FrameConfig, ObservationWindow, SampleGrid, Waveform};
use crate::waveforms::pulse_value;

/// Matched-filter outputs `y_TD[l]` for consecutive absolute indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSamples {
    pub start: usize,
    pub samples: Vec<Complex64>,
}

impl ObservedSamples {
    /// Restricts a full-frame vector to the observation window.
    pub fn from_frame(y: &[Complex64], window: ObservationWindow) -> Result<Self> {
        if window.end >= y.len() {
            return Err(Error::Dimension(format!(
                "observation window ends at {} but the frame holds {} samples",
                window.end,
                y.len()
            )));
        }
        Ok(ObservedSamples { start: window.start, samples: y[window.start..=window.end].to_vec() })
    }

    /// Last absolute index held.
    pub fn end(&self) -> usize {
        self.start + self.samples.len() - 1
    }

    pub fn window(&self) -> ObservationWindow {
        ObservationWindow { start: self.start, end: self.end() }
    }

    pub fn get(&self, index: i64) -> Result<Complex64> {
        self.window().check(index)?;
        Ok(self.samples[(index - self.start as i64) as usize])
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v.norm_sqr()).sum()
    }
}

/// `y[l] = (1/T_s) int r(t) p^(t - l T_s) dt` for each `l` in `indices`,
/// by midpoint quadrature on the samples of `r`.
pub fn matched_filter_at(r: &BasebandSignal, cfg: &FrameConfig, indices: ObservationWindow) -> Result<ObservedSamples> {
    let support = cfg.pulse_support() * cfg.ts;
    let tol = 0.5 * r.dt;
    let first_t = r.time(0) - tol;
    let last_t = r.time(r.len().saturating_sub(1)) + tol;
    for edge in [indices.start, indices.end] {
        let centre = edge as f64 * cfg.ts;
        if r.is_empty() || centre - support < first_t || centre + support > last_t {
            return Err(Error::OutsideObservation {
                index: edge as i64,
                start: ((first_t + support) / cfg.ts).ceil() as i64,
                end: ((last_t - support) / cfg.ts).floor() as i64,
            });
        }
    }
    let scale = r.dt / cfg.ts;
    let samples = (indices.start..=indices.end)
        .into_par_iter()
        .map(|l| {
            let centre = l as f64 * cfg.ts;
            let lo = ((centre - support - r.t0) / r.dt).ceil().max(0.0) as usize;
            let hi = (((centre + support - r.t0) / r.dt).floor() as usize).min(r.len() - 1);
            let mut acc = Complex64::new(0.0, 0.0);
            for i in lo..=hi {
                let u = (r.time(i) - centre) / cfg.ts;
                // real, even pulses: p^(t) = p(t)
                acc += r.samples[i] * pulse_value(cfg.pulse, u);
            }
            acc * scale
        })
        .collect();
    Ok(ObservedSamples { start: indices.start, samples })
}

/// Matched filter over the frame's observation window.
pub fn matched_filter_sample(r: &BasebandSignal, cfg: &FrameConfig) -> Result<ObservedSamples> {
    matched_filter_at(r, cfg, cfg.observation_window())
}

/// Complex 2-D surface, row = Doppler index, column = delay index.
///
/// Row `i` carries label `k_first + i`, column `j` label `l_first + j`; the
/// physical coordinates are `label * bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySurface {
    pub values: Vec<Complex64>,
    pub rows: usize,
    pub cols: usize,
    pub k_first: i64,
    pub l_first: i64,
    /// Hz per Doppler step.
    pub doppler_bin: f64,
    /// Seconds per delay step.
    pub delay_bin: f64,
    /// Rows wrap modulo `rows` (discrete Doppler is periodic).
    pub wraps: bool,
    /// Doppler labels searched by the detectors, half-open.
    pub search_k: (i64, i64),
}

#[derive(Serialize)]
struct SurfaceSidecar<'a> {
    schema: u32,
    kind: &'a str,
    doppler_bin_hz: f64,
    delay_bin_s: f64,
    k_first: i64,
    k_count: usize,
    l_first: i64,
    l_count: usize,
    wraps: bool,
}

impl AmbiguitySurface {
    pub fn l_last(&self) -> i64 {
        self.l_first + self.cols as i64 - 1
    }

    fn row_of(&self, k: i64) -> Option<usize> {
        let r = k - self.k_first;
        if self.wraps {
            Some(r.rem_euclid(self.rows as i64) as usize)
        } else if r >= 0 && (r as usize) < self.rows {
            Some(r as usize)
        } else {
            None
        }
    }

    /// Value at Doppler label `k`, delay label `l`.
    pub fn get(&self, k: i64, l: i64) -> Option<Complex64> {
        let row = self.row_of(k)?;
        let col = l - self.l_first;
        if col < 0 || col as usize >= self.cols {
            return None;
        }
        Some(self.values[row * self.cols + col as usize])
    }

    pub fn magnitude(&self, k: i64, l: i64) -> Option<f64> {
        self.get(k, l).map(|v| v.norm())
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// CSV with columns `k,l,re,im,abs` in row-major order.
    pub fn to_csv(&self) -> String {
        let mut out = io::schema_line("surface");
        out.push_str("k,l,re,im,abs\n");
        for row in 0..self.rows {
            for col in 0..self.cols {
                let v = self.values[row * self.cols + col];
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    self.k_first + row as i64,
                    self.l_first + col as i64,
                    v.re,
                    v.im,
                    v.norm()
                );
            }
        }
        out
    }

    /// Writes `path` (CSV) and `path` with extension `json` (bin sizes).
    pub fn write(&self, path: &Path, kind: &str) -> Result<()> {
        io::write_atomic(path, self.to_csv().as_bytes())?;
        let sidecar = SurfaceSidecar {
            schema: io::CSV_SCHEMA_VERSION,
            kind,
            doppler_bin_hz: self.doppler_bin,
            delay_bin_s: self.delay_bin,
            k_first: self.k_first,
            k_count: self.rows,
            l_first: self.l_first,
            l_count: self.cols,
            wraps: self.wraps,
        };
        io::write_json(&path.with_extension("json"), &sidecar)
    }
}

/// Discrete cross-ambiguity
/// `A[k, l] = (1/sqrt(NM)) sum_l' y[l' + l] conj(x~[l']) e^{-j 2 pi k l' / NM}`.
///
/// Lags run from the first observed index up to the last lag whose full
/// correlation stays inside the observed samples. The product is folded
/// modulo NM before a length-NM FFT, which is exact because the kernel is
/// NM-periodic in `l'`.
pub fn cross_ambiguity(
    y: &ObservedSamples,
    x_tilde: &[Complex64],
    n: usize,
    m: usize,
    ts: f64,
) -> Result<AmbiguitySurface> {
    let nm = n * m;
    if nm == 0 || x_tilde.is_empty() {
        return Err(Error::Dimension("empty transmit block".into()));
    }
    if y.samples.len() < x_tilde.len() {
        return Err(Error::Dimension(format!(
            "{} observed samples cannot hold a {}-sample block",
            y.samples.len(),
            x_tilde.len()
        )));
    }
    let lags = y.samples.len() - x_tilde.len() + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nm);
    let scale = 1.0 / (nm as f64).sqrt();
    let columns: Vec<Vec<Complex64>> = (0..lags)
        .into_par_iter()
        .map(|lag| {
            let mut fold = vec![Complex64::new(0.0, 0.0); nm];
            for (i, x) in x_tilde.iter().enumerate() {
                fold[i % nm] += y.samples[lag + i] * x.conj();
            }
            fft.process(&mut fold);
            fold.iter().map(|v| v * scale).collect()
        })
        .collect();
    let mut values = vec![Complex64::new(0.0, 0.0); nm * lags];
    for (col, column) in columns.iter().enumerate() {
        for (k, v) in column.iter().enumerate() {
            values[k * lags + col] = *v;
        }
    }
    let k_lo = -((n / 2) as i64);
    Ok(AmbiguitySurface {
        values,
        rows: nm,
        cols: lags,
        k_first: 0,
        l_first: y.start as i64,
        doppler_bin: 1.0 / (nm as f64 * ts),
        delay_bin: ts,
        wraps: true,
        search_k: (k_lo, k_lo + n as i64),
    })
}

/// Direct `O((NM)^2)` evaluation of one entry of [`cross_ambiguity`].
pub fn cross_ambiguity_direct(
    y: &ObservedSamples,
    x_tilde: &[Complex64],
    nm: usize,
    k: i64,
    l: i64,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, x) in x_tilde.iter().enumerate() {
        let phase = -2.0 * PI * (k * i as i64).rem_euclid(nm as i64) as f64 / nm as f64;
        acc += y.get(l + i as i64)? * x.conj() * Complex64::from_polar(1.0, phase);
    }
    Ok(acc / (nm as f64).sqrt())
}

/// Symmetric-form ambiguity
/// `A(tau, nu) = int s(t + tau/2) conj(s(t - tau/2)) e^{-j 2 pi nu t} dt`
/// on `points` evenly spaced values of `tau` in `[-tau_half, tau_half]` and
/// of `nu` in `[-nu_half, nu_half]`. `grid` is the integration grid.
pub fn fine_ambiguity<W: Waveform + ?Sized>(
    s: &W,
    grid: SampleGrid,
    tau_half: f64,
    nu_half: f64,
    points: usize,
) -> Result<AmbiguitySurface> {
    if points < 3 || points.is_multiple_of(2) {
        return Err(Error::Dimension(format!("fine grid needs an odd point count >= 3, got {points}")));
    }
    if !(tau_half > 0.0 && nu_half > 0.0) {
        return Err(Error::Dimension("fine grid extents must be positive".into()));
    }
    let (a, b) = s.time_support();
    if 2.0 * tau_half > b - a {
        return Err(Error::Dimension(format!("delay extent {tau_half} s exceeds the signal support of {} s", b - a)));
    }
    let half = (points / 2) as i64;
    let tau_step = tau_half / half as f64;
    let nu_step = nu_half / half as f64;
    let times: Vec<f64> = (0..grid.len).map(|i| grid.time(i)).collect();
    let products: Vec<Vec<Complex64>> = (-half..=half)
        .into_par_iter()
        .map(|j| {
            let tau = j as f64 * tau_step;
            times.iter().map(|&t| s.value_at(t + 0.5 * tau) * s.value_at(t - 0.5 * tau).conj()).collect()
        })
        .collect();
    let rows: Vec<Vec<Complex64>> = (-half..=half)
        .into_par_iter()
        .map(|i| {
            let nu = i as f64 * nu_step;
            let phasors: Vec<Complex64> =
                times.iter().map(|&t| Complex64::from_polar(grid.dt, -2.0 * PI * nu * t)).collect();
            products.iter().map(|g| g.iter().zip(&phasors).map(|(x, p)| x * p).sum()).collect()
        })
        .collect();
    Ok(AmbiguitySurface {
        values: rows.into_iter().flatten().collect(),
        rows: points,
        cols: points,
        k_first: -half,
        l_first: -half,
        doppler_bin: nu_step,
        delay_bin: tau_step,
        wraps: false,
        search_k: (-half, half + 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::otfs::{modulate, pilot_grid, DDGrid, PulseTrain};
    use crate::waveforms::{PulseShape, WindowShape};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn window(start: usize, end: usize) -> ObservationWindow {
        ObservationWindow { start, end }
    }

    #[test]
    fn matched_filter_of_a_single_pulse() {
        for pulse in [PulseShape::Rect, PulseShape::Sinc, PulseShape::Rrc { beta: 0.25 }] {
            let cfg = FrameConfig { pulse, ..FrameConfig::default() };
            let train = PulseTrain::new(vec![c(1.0, 0.0)], &cfg);
            let grid = SampleGrid::slots(&cfg, -40, 81);
            let r = BasebandSignal::from_waveform(&train, grid);
            let y = matched_filter_at(&r, &cfg, window(0, 0)).unwrap();
            let tol = if pulse == PulseShape::Sinc { 1e-2 } else { 1e-4 };
            assert_abs_diff_eq!(y.samples[0].re, 1.0, epsilon = tol);
        }
    }

    #[test]
    fn matched_filter_half_sample_offset() {
        let cfg = FrameConfig::default();
        let mut train = PulseTrain::new(vec![c(1.0, 0.0)], &cfg);
        train.t_first = 0.5 * cfg.ts;
        let r = BasebandSignal::from_waveform(&train, SampleGrid::slots(&cfg, -2, 5));
        let y = matched_filter_at(&r, &cfg, window(0, 1)).unwrap();
        assert_eq!(y.samples, vec![c(0.5, 0.0), c(0.5, 0.0)]);
    }

    #[test]
    fn matched_filter_zero_and_bounds() {
        let cfg = FrameConfig::default();
        let r = BasebandSignal::from_waveform(&PulseTrain::new(vec![], &cfg), SampleGrid::pri(&cfg));
        let y = matched_filter_sample(&r, &cfg).unwrap();
        assert_eq!(y.start, 80);
        assert_eq!(y.samples.len(), 225);
        assert!(y.samples.iter().all(|v| *v == c(0.0, 0.0)));
        assert!(matches!(matched_filter_at(&r, &cfg, window(0, 400)), Err(Error::OutsideObservation { .. })));
    }

    fn random_block(len: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn fft_path_matches_direct_sum() {
        let x = random_block(80, 1);
        let y = ObservedSamples { start: 80, samples: random_block(225, 2) };
        let a = cross_ambiguity(&y, &x, 8, 8, 1.0).unwrap();
        assert_eq!(a.cols, 146);
        assert_eq!(a.l_last(), 225);
        let scale = a.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (k, l) in [(0, 80), (5, 100), (-3, 225), (63, 150), (17, 81)] {
            let direct = cross_ambiguity_direct(&y, &x, 64, k, l).unwrap();
            assert!((a.get(k, l).unwrap() - direct).norm() < 1e-10 * scale);
        }
    }

    #[test]
    fn direct_sum_refuses_unobserved_samples() {
        let x = random_block(80, 1);
        let y = ObservedSamples { start: 80, samples: random_block(225, 2) };
        assert!(matches!(
            cross_ambiguity_direct(&y, &x, 64, 0, 226),
            Err(Error::OutsideObservation { index: 305, .. })
        ));
    }

    #[test]
    fn autocorrelation_peak_at_origin() {
        let cfg = FrameConfig { window: WindowShape::Rect, ..FrameConfig::default() };
        let x = modulate(&pilot_grid(8, 8).unwrap(), &cfg).unwrap();
        let mut y = x.clone();
        y.extend(vec![c(0.0, 0.0); 40]);
        let y = ObservedSamples { start: 0, samples: y };
        let a = cross_ambiguity(&y, &x, 8, 8, 1.0).unwrap();
        let energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        assert_abs_diff_eq!(a.magnitude(0, 0).unwrap(), energy / 8.0, epsilon = 1e-12);
        let max = a.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert_abs_diff_eq!(max, energy / 8.0, epsilon = 1e-12);
    }

    #[test]
    fn pure_delay_and_pure_doppler() {
        let x = random_block(64, 5);
        let mut shifted = vec![c(0.0, 0.0); 100];
        shifted[13..77].copy_from_slice(&x);
        let y = ObservedSamples { start: 0, samples: shifted };
        let a = cross_ambiguity(&y, &x, 8, 8, 1.0).unwrap();
        let best =
            (0..a.cols as i64).max_by(|&p, &q| a.magnitude(0, p).unwrap().total_cmp(&a.magnitude(0, q).unwrap()));
        assert_eq!(best, Some(13));

        let k0 = 5;
        let tone: Vec<Complex64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v * Complex64::from_polar(1.0, 2.0 * PI * (k0 * i) as f64 / 64.0))
            .collect();
        let y = ObservedSamples { start: 0, samples: tone };
        let a = cross_ambiguity(&y, &x, 8, 8, 1.0).unwrap();
        let best = (0..64i64).max_by(|&p, &q| a.magnitude(p, 0).unwrap().total_cmp(&a.magnitude(q, 0).unwrap()));
        assert_eq!(best, Some(k0 as i64));
        let direct = cross_ambiguity_direct(&y, &x, 64, k0 as i64, 0).unwrap();
        assert!((a.get(k0 as i64, 0).unwrap() - direct).norm() < 1e-12);
    }

    #[test]
    fn pilot_surface_is_periodic_in_doppler() {
        let cfg = FrameConfig::default();
        let x = modulate(&pilot_grid(8, 8).unwrap(), &cfg).unwrap();
        let y = ObservedSamples { start: 80, samples: random_block(225, 9) };
        let a = cross_ambiguity(&y, &x, 8, 8, cfg.ts).unwrap();
        assert_eq!(a.search_k, (-4, 4));
        for l in [80, 120, 200] {
            for k in -4..4 {
                assert!((a.get(k, l).unwrap() - a.get(k + 8, l).unwrap()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn surface_volume_snapshot() {
        let x = random_block(64, 21);
        let mut y = x.clone();
        y.extend(vec![c(0.0, 0.0); 63]);
        let y = ObservedSamples { start: 0, samples: y };
        let a = cross_ambiguity(&y, &x, 8, 8, 1.0).unwrap();
        let fft: f64 = a.values.iter().map(|v| v.norm_sqr()).sum();
        let mut direct = 0.0;
        for k in 0..64 {
            for l in 0..64 {
                direct += cross_ambiguity_direct(&y, &x, 64, k, l).unwrap().norm_sqr();
            }
        }
        assert!((fft - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn surface_accessors_and_csv() {
        let cfg = FrameConfig::default();
        let x = modulate(&DDGrid::zeros(8, 8).unwrap(), &cfg).unwrap();
        let y = ObservedSamples { start: 80, samples: vec![c(0.0, 0.0); 225] };
        let a = cross_ambiguity(&y, &x, 8, 8, cfg.ts).unwrap();
        assert!(a.get(0, 79).is_none());
        assert!(a.get(0, 226).is_none());
        assert!(a.get(-1, 80).is_some());
        let csv = a.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("# otfs-radar surface schema=1"));
        assert_eq!(lines.next(), Some("k,l,re,im,abs"));
        assert_eq!(lines.count(), 64 * 146);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        a.write(&path, "cross").unwrap();
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
        assert_eq!(meta["l_first"], 80);
        assert_abs_diff_eq!(meta["delay_bin_s"].as_f64().unwrap(), cfg.ts);
    }

    fn fine(pulse: PulseShape, window: WindowShape) -> (AmbiguitySurface, f64) {
        let cfg = FrameConfig { pulse, window, ..FrameConfig::default() };
        let x = modulate(&pilot_grid(8, 8).unwrap(), &cfg).unwrap();
        let train = PulseTrain::new(x, &cfg);
        let pad = (cfg.pulse_support() + 3.0).ceil() as i64;
        let grid = SampleGrid::slots(&cfg, -pad, train.coeffs.len() + 2 * pad as usize);
        let energy = BasebandSignal::from_waveform(&train, grid).energy();
        let surface = fine_ambiguity(&train, grid, 1.0 * cfg.ts, 1.0 / cfg.block_duration(), 21).unwrap();
        (surface, energy)
    }

    #[test]
    fn fine_ambiguity_origin_and_symmetry() {
        let (a, energy) = fine(PulseShape::Rect, WindowShape::Rrc { beta: 0.25 });
        let origin = a.get(0, 0).unwrap();
        assert_abs_diff_eq!(origin.re, energy, epsilon = 1e-12 * energy);
        assert!(origin.im.abs() < 1e-12 * energy);
        for k in -10..=10 {
            for l in -10..=10 {
                let d = a.magnitude(k, l).unwrap() - a.magnitude(-k, -l).unwrap();
                assert!(d.abs() < 1e-12 * energy);
            }
        }
    }

    #[test]
    fn fine_ambiguity_peak_is_unimodal_near_origin() {
        let (a, _) = fine(PulseShape::Rect, WindowShape::Rrc { beta: 0.25 });
        let mut best = (0, 0, 0.0);
        for k in -10..=10 {
            for l in -10..=10 {
                let v = a.magnitude(k, l).unwrap();
                if v > best.2 {
                    best = (k, l, v);
                }
            }
        }
        assert!(best.0.abs() <= 1 && best.1.abs() <= 1);
        // non-increasing along every ray away from the origin
        for (dk, dl) in [(1, 0), (0, 1), (1, 1), (1, -1), (-1, 0), (0, -1), (-1, -1), (-1, 1)] {
            let mut prev = a.magnitude(0, 0).unwrap();
            for s in 1..=10 {
                let v = a.magnitude(dk * s, dl * s).unwrap();
                assert!(v <= prev + 1e-12 * prev, "ray ({dk},{dl}) step {s}");
                prev = v;
            }
        }
    }

    #[test]
    fn fine_ambiguity_rejects_bad_grids() {
        let cfg = FrameConfig::default();
        let train = PulseTrain::new(vec![c(1.0, 0.0)], &cfg);
        let grid = SampleGrid::slots(&cfg, -3, 6);
        assert!(fine_ambiguity(&train, grid, cfg.ts, 1.0, 20).is_err());
        assert!(fine_ambiguity(&train, grid, 5.0 * cfg.ts, 1.0, 21).is_err());
    }
}
