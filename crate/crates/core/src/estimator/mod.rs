//! Integer-bin detection and fractional delay/Doppler refinement.
//!
//! A 2 x 2 block `a[i][j]` holds `|A[k + j, l + i]|`: the first index is the
//! delay offset (paired with `eps_t`), the second the Doppler offset (paired
//! with `eps_f`), so that the fitted model is `alpha A_ss(i - eps_t, j - eps_f)`.

mod detect;
pub mod simplex;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::receiver::AmbiguitySurface;
use crate::waveforms::{pulse_matched_autocorr, rrc_autocorr_closed_form, window_autocorr_linear, PulseShape};

pub use detect::{coarse_estimate, detect_paths, Candidate, CandidateList, DetectOptions, Detection};
use simplex::{minimize_with_restarts, SimplexOptions};

/// `|A|` on `[l, l+1] x [k, k+1]`, indexed `[delay offset][Doppler offset]`.
pub type Block2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Triangular Doppler factor.
    Linear,
    /// Closed-form RRC window autocorrelation.
    #[serde(rename = "rrc")]
    RrcAutocorr,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::RrcAutocorr => "rrc",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "rrc" | "rrc_autocorr" => Ok(ModelKind::RrcAutocorr),
            other => Err(Error::Config(format!("unknown model `{other}` (expected linear or rrc)"))),
        }
    }
}

/// Separable ambiguity model `p*p^(tau) W*W^(nu)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationModel {
    pub kind: ModelKind,
    pub beta_w: f64,
    pub pulse: PulseShape,
}

impl InterpolationModel {
    pub fn linear(pulse: PulseShape) -> Self {
        InterpolationModel { kind: ModelKind::Linear, beta_w: 0.0, pulse }
    }

    pub fn rrc(beta_w: f64, pulse: PulseShape) -> Result<Self> {
        crate::waveforms::window_autocorr_rrc(0.0, beta_w)?;
        Ok(InterpolationModel { kind: ModelKind::RrcAutocorr, beta_w, pulse })
    }

    pub fn new(kind: ModelKind, beta_w: f64, pulse: PulseShape) -> Result<Self> {
        match kind {
            ModelKind::Linear => Ok(Self::linear(pulse)),
            ModelKind::RrcAutocorr => Self::rrc(beta_w, pulse),
        }
    }

    fn window_factor(&self, nu: f64) -> f64 {
        match self.kind {
            ModelKind::Linear => window_autocorr_linear(nu),
            ModelKind::RrcAutocorr => rrc_autocorr_closed_form(nu.abs(), self.beta_w),
        }
    }

    fn eval(&self, tau: f64, nu: f64) -> f64 {
        pulse_matched_autocorr(self.pulse, tau) * self.window_factor(nu)
    }
}

/// Model value at `(tau, nu)` (delay in `T_s`, Doppler in bins). Arguments
/// outside `[-1, 1]` give zero and set the flag.
pub fn model_ambiguity(model: &InterpolationModel, tau: f64, nu: f64) -> (f64, bool) {
    if tau.abs() > 1.0 || nu.abs() > 1.0 {
        (0.0, true)
    } else {
        (model.eval(tau, nu), false)
    }
}

/// Noise-free block generated by `model` for a path at `(eps_t, eps_f)`.
pub fn model_block(model: &InterpolationModel, alpha: f64, eps_t: f64, eps_f: f64) -> Block2 {
    let mut a = [[0.0; 2]; 2];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = alpha * model_ambiguity(model, i as f64 - eps_t, j as f64 - eps_f).0;
        }
    }
    a
}

/// Block anchored at Doppler label `k`, delay label `l` of a surface.
pub fn block_from_surface(surface: &AmbiguitySurface, k: i64, l: i64) -> Option<Block2> {
    let mut a = [[0.0; 2]; 2];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = surface.magnitude(k + j as i64, l + i as i64)?;
        }
    }
    Some(a)
}

/// `sum_ij (a_ij - alpha A_ss(i - eps_t, j - eps_f))^2`.
pub fn objective(a: &Block2, alpha: f64, eps_t: f64, eps_f: f64, model: &InterpolationModel) -> f64 {
    let mut total = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let r = v - alpha * model_ambiguity(model, i as f64 - eps_t, j as f64 - eps_f).0;
            total += r * r;
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalFit {
    pub alpha: f64,
    pub eps_t: f64,
    pub eps_f: f64,
    pub residual: f64,
    /// At least one start met both tolerances.
    pub converged: bool,
}

const STARTS: [(f64, f64); 4] = [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)];

/// Least-squares `alpha >= 0` for fixed fractional offsets.
pub fn optimal_alpha(a: &Block2, eps_t: f64, eps_f: f64, model: &InterpolationModel) -> f64 {
    let m = model_block(model, 1.0, eps_t, eps_f);
    let num: f64 = a.iter().flatten().zip(m.iter().flatten()).map(|(x, y)| x * y).sum();
    let den: f64 = m.iter().flatten().map(|y| y * y).sum();
    if den > 0.0 {
        (num / den).max(0.0)
    } else {
        0.0
    }
}

/// Least-squares fit of `(alpha, eps_t, eps_f)` to a block.
///
/// `alpha` enters linearly and is eliminated in closed form; the simplex
/// search runs over `(eps_t, eps_f)` in the unit square from four starts.
/// The block is normalized by its largest entry first, so the result is
/// exactly equivariant under positive scaling.
pub fn fractional_estimate(a: &Block2, model: &InterpolationModel) -> FractionalFit {
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return FractionalFit { alpha: 0.0, eps_t: 0.0, eps_f: 0.0, residual: 0.0, converged: scale == 0.0 };
    }
    let norm = a.map(|row| row.map(|v| v / scale));
    let f = |x: &[f64; 2]| objective(&norm, optimal_alpha(&norm, x[0], x[1], model), x[0], x[1], model);
    let mut best: Option<simplex::SimplexResult<2>> = None;
    let mut any_converged = false;
    for (et, ef) in STARTS {
        let r = minimize_with_restarts(f, [et, ef], [0.1, 0.1], [0.0, 0.0], [1.0, 1.0], SimplexOptions::default());
        any_converged |= r.converged;
        if best.is_none_or(|b| r.f < b.f) {
            best = Some(r);
        }
    }
    let best = best.expect("four starts");
    let [eps_t, eps_f] = best.x;
    FractionalFit {
        alpha: optimal_alpha(&norm, eps_t, eps_f, model) * scale,
        eps_t,
        eps_f,
        residual: best.f * scale * scale,
        converged: any_converged,
    }
}

/// One estimated path: integer bins plus fractional parts in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathEstimate {
    pub k_hat: i64,
    pub l_hat: i64,
    pub eps_t_hat: f64,
    pub eps_f_hat: f64,
    pub alpha_hat: f64,
    pub converged: bool,
}

impl PathEstimate {
    /// Carries a fractional part of exactly 1 into the integer bin.
    pub fn from_fit(k: i64, l: i64, fit: &FractionalFit) -> Self {
        let (l_hat, eps_t_hat) = if fit.eps_t >= 1.0 { (l + 1, fit.eps_t - 1.0) } else { (l, fit.eps_t) };
        let (k_hat, eps_f_hat) = if fit.eps_f >= 1.0 { (k + 1, fit.eps_f - 1.0) } else { (k, fit.eps_f) };
        PathEstimate { k_hat, l_hat, eps_t_hat, eps_f_hat, alpha_hat: fit.alpha, converged: fit.converged }
    }

    pub fn delay(&self) -> f64 {
        self.l_hat as f64 + self.eps_t_hat
    }

    pub fn doppler(&self) -> f64 {
        self.k_hat as f64 + self.eps_f_hat
    }
}

/// Ground truth of one path in bin units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthPath {
    pub k: i64,
    pub l: i64,
    pub eps_t: f64,
    pub eps_f: f64,
    pub alpha: f64,
}

impl TruthPath {
    pub fn delay(&self) -> f64 {
        self.l as f64 + self.eps_t
    }

    pub fn doppler(&self) -> f64 {
        self.k as f64 + self.eps_f
    }
}

/// Picks the 2 x 2 anchor so that candidate `(k, l)` is a corner and the
/// block leans toward the larger neighbour on each axis.
pub fn block_anchor(surface: &AmbiguitySurface, k: i64, l: i64) -> Option<(i64, i64)> {
    let mag = |k: i64, l: i64| surface.magnitude(k, l);
    let l0 = match (mag(k, l - 1), mag(k, l + 1)) {
        (Some(lo), Some(hi)) => {
            if hi >= lo {
                l
            } else {
                l - 1
            }
        }
        (None, Some(_)) => l,
        (Some(_), None) => l - 1,
        (None, None) => return None,
    };
    let k0 = match (mag(k - 1, l), mag(k + 1, l)) {
        (Some(lo), Some(hi)) => {
            if hi >= lo {
                k
            } else {
                k - 1
            }
        }
        (None, Some(_)) => k,
        (Some(_), None) => k - 1,
        (None, None) => return None,
    };
    Some((k0, l0))
}

/// Fits a 2 x 2 block at every detected candidate of a surface.
pub fn estimate_candidates(
    surface: &AmbiguitySurface,
    candidates: &CandidateList,
    model: &InterpolationModel,
) -> Vec<PathEstimate> {
    candidates
        .entries
        .iter()
        .filter_map(|c| {
            let (k0, l0) = block_anchor(surface, c.k, c.l)?;
            let block = block_from_surface(surface, k0, l0)?;
            Some(PathEstimate::from_fit(k0, l0, &fractional_estimate(&block, model)))
        })
        .collect()
}

/// `sqrt(sum (x_hat - x)^2 / count)`.
pub fn rmse(estimates: &[f64], truths: &[f64]) -> Result<f64> {
    if estimates.len() != truths.len() {
        return Err(Error::Dimension(format!("{} estimates for {} truths", estimates.len(), truths.len())));
    }
    if estimates.is_empty() {
        return Err(Error::Dimension("rmse of an empty set".into()));
    }
    let sum: f64 = estimates.iter().zip(truths).map(|(e, t)| (e - t) * (e - t)).sum();
    Ok((sum / estimates.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    /// `(estimate index, truth index)` pairs.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_truths: Vec<usize>,
    pub unmatched_estimates: Vec<usize>,
}

/// Greedy nearest-bin matching. A pair is admissible when the integer bins
/// differ by at most one on each axis; closer continuous positions win.
pub fn associate(estimates: &[PathEstimate], truths: &[TruthPath]) -> Association {
    let mut pairs = Vec::new();
    for (e, est) in estimates.iter().enumerate() {
        for (t, tr) in truths.iter().enumerate() {
            if (est.k_hat - tr.k).abs() <= 1 && (est.l_hat - tr.l).abs() <= 1 {
                let d = (est.delay() - tr.delay()).powi(2) + (est.doppler() - tr.doppler()).powi(2);
                pairs.push((d, e, t));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; estimates.len()];
    let mut used_t = vec![false; truths.len()];
    let mut out = Association::default();
    for (_, e, t) in pairs {
        if !used_e[e] && !used_t[t] {
            used_e[e] = true;
            used_t[t] = true;
            out.pairs.push((e, t));
        }
    }
    out.pairs.sort_unstable();
    out.unmatched_truths = (0..truths.len()).filter(|&t| !used_t[t]).collect();
    out.unmatched_estimates = (0..estimates.len()).filter(|&e| !used_e[e]).collect();
    out
}
