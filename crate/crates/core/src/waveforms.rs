//! Pulse shapes, window functions and their autocorrelations.
//!
//! Time arguments are normalized by the sample period `T_s`; Doppler
//! arguments of the window autocorrelations are normalized by one Doppler
//! bin `1/(N T)`. Everything here is a pure function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width, in units of `T_s`, at which sinc and RRC pulses are truncated
/// during synthesis and matched filtering.
pub const PULSE_TAIL_CUTOFF: f64 = 16.0;

/// Window symbol periods spanned by [`WindowExtent::Periods`] when the
/// ideal (untruncated) RRC window is approximated.
pub const IDEAL_WINDOW_PERIODS: u32 = 8;

/// Distance from a removable singularity below which the analytic limit is
/// returned instead of the closed form.
const SINGULAR_BAND: f64 = 1e-8;

/// Transmit pulse `p(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PulseShape {
    /// `rect(t / T_s)`, centered, value 1/2 on the edges.
    Rect,
    /// `sinc(t / T_s)`.
    Sinc,
    /// Root-raised-cosine with roll-off `beta`.
    Rrc { beta: f64 },
}

/// Window `w(t)` applied across the OTFS block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WindowShape {
    /// `rect(t / (N T))`; a roll-off of zero.
    Rect,
    /// Time-domain RRC with symbol period `(1 + beta) N T`.
    Rrc { beta: f64 },
}

/// How much of the (infinitely long) RRC window is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowExtent {
    /// `floor((1 + beta) N M)` samples, the transmit-frame indexing.
    #[default]
    Frame,
    /// `floor(periods (1 + beta) N M)` samples, approximating the ideal window.
    Periods(u32),
}

fn check_roll_off(what: &'static str, beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { what, value: beta, domain: "(0, 1]" })
    }
}

impl PulseShape {
    pub fn rrc(beta: f64) -> Result<Self> {
        check_roll_off("pulse roll-off", beta)?;
        Ok(PulseShape::Rrc { beta })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PulseShape::Rrc { beta } => check_roll_off("pulse roll-off", beta),
            _ => Ok(()),
        }
    }

    /// Half-width of the support used when the pulse is materialized.
    pub fn support(&self) -> f64 {
        match self {
            PulseShape::Rect => 0.5,
            PulseShape::Sinc | PulseShape::Rrc { .. } => PULSE_TAIL_CUTOFF,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        pulse_value(*self, t)
    }

    /// Truncated pulse: zero outside [`PulseShape::support`].
    pub fn truncated_value(&self, t: f64) -> f64 {
        if t.abs() > self.support() {
            0.0
        } else {
            pulse_value(*self, t)
        }
    }

    pub fn matched_autocorr(&self, tau: f64) -> f64 {
        pulse_matched_autocorr(*self, tau)
    }

    pub fn name(&self) -> &'static str {
        match self {
            PulseShape::Rect => "rect",
            PulseShape::Sinc => "sinc",
            PulseShape::Rrc { .. } => "rrc",
        }
    }
}

impl WindowShape {
    pub fn rrc(beta: f64) -> Result<Self> {
        check_roll_off("window roll-off", beta)?;
        Ok(WindowShape::Rrc { beta })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            WindowShape::Rrc { beta } => check_roll_off("window roll-off", beta),
            WindowShape::Rect => Ok(()),
        }
    }

    /// Roll-off; zero for the rectangular window.
    pub fn beta(&self) -> f64 {
        match *self {
            WindowShape::Rect => 0.0,
            WindowShape::Rrc { beta } => beta,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WindowShape::Rect => "rect",
            WindowShape::Rrc { .. } => "rrc",
        }
    }
}

/// `sin(pi x) / (pi x)` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// `rect(x)`: 1 inside `|x| < 1/2`, 1/2 on the edges.
pub fn rect(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.5 {
        1.0
    } else if ax == 0.5 {
        0.5
    } else {
        0.0
    }
}

fn rc_unchecked(x: f64, beta: f64) -> f64 {
    let ax = x.abs();
    let lo = (1.0 - beta) / 2.0;
    let hi = (1.0 + beta) / 2.0;
    if ax < lo {
        1.0
    } else if ax <= hi {
        0.5 * (1.0 + (PI / beta * (ax - lo)).cos())
    } else {
        0.0
    }
}

/// Raised-cosine spectrum `RC(x; beta)` at normalized frequency `x`.
pub fn raised_cosine_spectrum(x: f64, beta: f64) -> Result<f64> {
    check_roll_off("roll-off", beta)?;
    Ok(rc_unchecked(x, beta))
}

/// Time-domain root-raised-cosine impulse response, the inverse transform of
/// `sqrt(RC(f; beta))`.
pub fn rrc_time(t: f64, beta: f64) -> f64 {
    let edge = 1.0 / (4.0 * beta);
    if (t.abs() - edge).abs() < SINGULAR_BAND * edge {
        let arg = PI / (4.0 * beta);
        return beta * FRAC_1_SQRT_2 * ((1.0 + 2.0 / PI) * arg.sin() + (1.0 - 2.0 / PI) * arg.cos());
    }
    // (1-b) sinc((1-b) t) absorbs the t = 0 singularity.
    let num = (1.0 - beta) * sinc((1.0 - beta) * t) + 4.0 * beta / PI * (PI * (1.0 + beta) * t).cos();
    let q = 4.0 * beta * t;
    num / (1.0 - q * q)
}

/// Time-domain raised-cosine pulse, the matched autocorrelation of [`rrc_time`].
pub fn raised_cosine_time(tau: f64, beta: f64) -> f64 {
    let edge = 1.0 / (2.0 * beta);
    if (tau.abs() - edge).abs() < SINGULAR_BAND * edge {
        return PI / 4.0 * sinc(edge);
    }
    let q = 2.0 * beta * tau;
    sinc(tau) * (PI * beta * tau).cos() / (1.0 - q * q)
}

/// `p(t)` at `t` in units of `T_s`.
pub fn pulse_value(shape: PulseShape, t: f64) -> f64 {
    match shape {
        PulseShape::Rect => rect(t),
        PulseShape::Sinc => sinc(t),
        PulseShape::Rrc { beta } => rrc_time(t, beta),
    }
}

/// `p * p^(tau)` with `p^(t) = conj(p(-t))`, `tau` in units of `T_s`.
pub fn pulse_matched_autocorr(shape: PulseShape, tau: f64) -> f64 {
    match shape {
        PulseShape::Rect => (1.0 - tau.abs()).max(0.0),
        PulseShape::Sinc => sinc(tau),
        PulseShape::Rrc { beta } => raised_cosine_time(tau, beta),
    }
}

/// Number of window samples for the given extent.
pub fn window_len(shape: WindowShape, n: usize, m: usize, extent: WindowExtent) -> usize {
    let nm = n * m;
    match shape {
        WindowShape::Rect => nm,
        WindowShape::Rrc { beta } => {
            let periods = match extent {
                WindowExtent::Frame => 1.0,
                WindowExtent::Periods(p) => p as f64,
            };
            (periods * (1.0 + beta) * nm as f64).floor() as usize
        }
    }
}

/// Window samples `w[l] = w(l T_s)` over the frame extent, re-indexed so that
/// the support starts at `l = 0`.
pub fn window_samples(shape: WindowShape, n: usize, m: usize) -> Vec<f64> {
    window_samples_with_extent(shape, n, m, WindowExtent::Frame)
}

/// Window samples for an explicit extent. Sample `i` sits at time
/// `(i - L/2) T_s` relative to the window center.
pub fn window_samples_with_extent(shape: WindowShape, n: usize, m: usize, extent: WindowExtent) -> Vec<f64> {
    let len = window_len(shape, n, m, extent);
    match shape {
        WindowShape::Rect => vec![1.0; len],
        WindowShape::Rrc { beta } => {
            let period = (1.0 + beta) * (n * m) as f64;
            let center = (len / 2) as f64;
            (0..len).map(|i| rrc_time((i as f64 - center) / period, beta)).collect()
        }
    }
}

/// Triangular window autocorrelation used by linear interpolation.
pub fn window_autocorr_linear(nu: f64) -> f64 {
    (1.0 - nu.abs()).max(0.0)
}

/// Closed-form autocorrelation of the RRC window spectrum, even in `nu`.
///
/// Peaks at `1 / (1 + beta)`. Valid for `beta` in `(0, 1/2]`, where the
/// branch boundaries are ordered.
pub fn window_autocorr_rrc(nu: f64, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta <= 0.5) {
        return Err(Error::Domain { what: "window roll-off", value: beta, domain: "(0, 1/2]" });
    }
    Ok(rrc_autocorr_closed_form(nu.abs(), beta))
}

pub(crate) fn rrc_autocorr_closed_form(nu: f64, beta: f64) -> f64 {
    let a = (1.0 - beta) / (2.0 * (1.0 + beta));
    let b = PI * (1.0 + beta) / (2.0 * beta);
    if nu <= -a + 0.5 {
        0.5 * (b * nu).cos() * (1.0 - 2.0 * nu - 2.0 * a) + (b - b * nu - 2.0 * b * a).sin() / (2.0 * b)
            - 3.0 / (2.0 * b) * (-b * nu).sin()
            + 2.0 * a
            - nu
    } else if nu <= 2.0 * a {
        2.0 / b * (b / 2.0 - b * a).sin() + 2.0 * a - nu
    } else if nu <= a + 0.5 {
        2.0 / b * ((b / 2.0 - b * a).sin() - (-2.0 * b * a + b * nu).sin())
            + 1.0 / (4.0 * b) * ((-2.0 * b * a + b * nu).sin() - (2.0 * b * (a - nu) + b * nu).sin())
            + 0.5 * (b * nu - 2.0 * b * a).cos() * (-2.0 * a + nu)
    } else if nu <= 1.0 {
        0.5 * ((b - b * nu).sin() / b + (-2.0 * b * a + b * nu).cos() * (1.0 - nu))
    } else {
        0.0
    }
}

/// Quadrature steps across the unit support of the window spectrum.
const ORACLE_STEPS: usize = 8192;

/// Autocorrelation of the unit-support sqrt-RC window spectrum by trapezoidal
/// quadrature, `int sqrt(RC((1+b)x)) sqrt(RC((1+b)(x-nu))) dx`.
pub fn numeric_spectrum_autocorr(nu: f64, beta: f64) -> f64 {
    let nu = nu.abs();
    let lo = nu - 0.5;
    let hi = 0.5;
    if lo >= hi {
        return 0.0;
    }
    let h = 1.0 / ORACLE_STEPS as f64;
    let steps = ((hi - lo) / h).ceil() as usize;
    let h = (hi - lo) / steps as f64;
    let f = |x: f64| (rc_unchecked((1.0 + beta) * x, beta) * rc_unchecked((1.0 + beta) * (x - nu), beta)).sqrt();
    let mut acc = 0.5 * (f(lo) + f(hi));
    for i in 1..steps {
        acc += f(lo + i as f64 * h);
    }
    acc * h
}
