//! Coarse detection: the literal peak/local-maximum/CA-CFAR rule and a
//! sparse-recovery detector built on top of it.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Result;
use crate::receiver::{cross_ambiguity, AmbiguitySurface, ObservedSamples};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    /// Doppler label (signed bins).
    pub k: i64,
    /// Delay label (absolute lag).
    pub l: i64,
    pub magnitude: f64,
}

/// Candidates sorted by descending magnitude, ties by `(l, k)` ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateList {
    pub entries: Vec<Candidate>,
}

impl CandidateList {
    pub fn bins(&self) -> Vec<(i64, i64)> {
        self.entries.iter().map(|c| (c.k, c.l)).collect()
    }
}

const GUARD: i64 = 2;

/// Top `max_paths` cells of the Doppler search span, kept if they are the
/// maximum of their 5 x 5 neighbourhood and exceed `cfar_factor` times the
/// mean magnitude of the (up to 24) neighbours.
pub fn coarse_estimate(surface: &AmbiguitySurface, max_paths: usize, cfar_factor: f64) -> CandidateList {
    let (k_lo, k_hi) = surface.search_k;
    let mut cells: Vec<Candidate> = Vec::new();
    for k in k_lo..k_hi {
        for l in surface.l_first..=surface.l_last() {
            if let Some(magnitude) = surface.magnitude(k, l) {
                cells.push(Candidate { k, l, magnitude });
            }
        }
    }
    cells.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.l.cmp(&b.l)).then(a.k.cmp(&b.k)));
    cells.truncate(max_paths);
    let entries = cells
        .into_iter()
        .filter(|c| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for dk in -GUARD..=GUARD {
                for dl in -GUARD..=GUARD {
                    if dk == 0 && dl == 0 {
                        continue;
                    }
                    if let Some(v) = surface.magnitude(c.k + dk, c.l + dl) {
                        if v > c.magnitude {
                            return false;
                        }
                        sum += v;
                        count += 1;
                    }
                }
            }
            count > 0 && c.magnitude > cfar_factor * sum / count as f64
        })
        .collect();
    CandidateList { entries }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    /// Supports kept per depth.
    pub beam_width: usize,
    /// Candidates taken from each node's residual surface.
    pub expansions: usize,
    /// Largest support size explored.
    pub max_paths: usize,
    pub cfar_factor: f64,
    /// Stop once residual energy <= `residual_tol` x observed energy.
    pub residual_tol: f64,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            beam_width: 8,
            expansions: 8,
            max_paths: crate::channel::MAX_PATHS,
            cfar_factor: 1.0,
            residual_tol: 1e-20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// `(k, l)` bins, ordered by descending fitted amplitude.
    pub bins: Vec<(i64, i64)>,
    pub amplitudes: Vec<Complex64>,
    /// Residual energy over observed energy.
    pub residual_ratio: f64,
    /// The residual tolerance was met.
    pub explained: bool,
}

struct Atoms<'a> {
    y: &'a ObservedSamples,
    x_tilde: &'a [Complex64],
    nm: usize,
}

impl Atoms<'_> {
    /// Echo of the transmit block from an integer bin, over the observed samples.
    fn column(&self, k: i64, l: i64) -> Vec<Complex64> {
        (0..self.y.samples.len())
            .map(|r| {
                let i = (self.y.start + r) as i64;
                let j = i - l;
                if j < 0 || j as usize >= self.x_tilde.len() {
                    return Complex64::new(0.0, 0.0);
                }
                let phase = 2.0 * PI * (k * i).rem_euclid(self.nm as i64) as f64 / self.nm as f64;
                self.x_tilde[j as usize] * Complex64::from_polar(1.0, phase)
            })
            .collect()
    }

    /// Least-squares amplitudes and residual for a support.
    fn fit(&self, support: &[(i64, i64)]) -> (Vec<Complex64>, Vec<Complex64>, f64) {
        let rows = self.y.samples.len();
        let cols: Vec<Vec<Complex64>> = support.iter().map(|&(k, l)| self.column(k, l)).collect();
        let a = DMatrix::from_fn(rows, support.len(), |r, c| cols[c][r]);
        let b = DVector::from_column_slice(&self.y.samples);
        let coef = a.clone().svd(true, true).solve(&b, 1e-12).unwrap_or_else(|_| DVector::zeros(support.len()));
        let residual = &b - &a * &coef;
        let energy = residual.iter().map(|v| v.norm_sqr()).sum();
        (coef.iter().copied().collect(), residual.iter().copied().collect(), energy)
    }
}

type Support = Vec<(i64, i64)>;

/// Integer-bin path detection for a known transmit block.
///
/// Beam search over path supports: each node's least-squares residual is
/// turned into a cross-ambiguity surface and [`coarse_estimate`] proposes the
/// next bins; supports are ranked by residual energy. The first support that
/// explains the observation is pruned by backward elimination.
pub fn detect_paths(
    y: &ObservedSamples,
    x_tilde: &[Complex64],
    n: usize,
    m: usize,
    ts: f64,
    opts: &DetectOptions,
) -> Result<Detection> {
    let atoms = Atoms { y, x_tilde, nm: n * m };
    let total = y.energy();
    if total == 0.0 {
        return Ok(Detection { bins: vec![], amplitudes: vec![], residual_ratio: 0.0, explained: true });
    }
    let tol = opts.residual_tol * total;
    let mut level: Vec<(Support, Vec<Complex64>, f64)> = vec![(vec![], y.samples.clone(), total)];
    let mut best: Option<(Support, f64)> = None;
    for _ in 0..opts.max_paths {
        let mut next: BTreeMap<Support, (Vec<Complex64>, f64)> = BTreeMap::new();
        for (support, residual, _) in &level {
            let r = ObservedSamples { start: y.start, samples: residual.clone() };
            let surface = cross_ambiguity(&r, x_tilde, n, m, ts)?;
            for c in coarse_estimate(&surface, opts.expansions, opts.cfar_factor).entries {
                if support.contains(&(c.k, c.l)) {
                    continue;
                }
                let mut grown = support.clone();
                grown.push((c.k, c.l));
                grown.sort_unstable();
                if next.contains_key(&grown) {
                    continue;
                }
                let (_, res, energy) = atoms.fit(&grown);
                next.insert(grown, (res, energy));
            }
        }
        if next.is_empty() {
            break;
        }
        let mut ranked: Vec<(Support, (Vec<Complex64>, f64))> = next.into_iter().collect();
        ranked.sort_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then_with(|| a.0.cmp(&b.0)));
        let (top, (_, top_energy)) = &ranked[0];
        if best.as_ref().is_none_or(|b| *top_energy < b.1) {
            best = Some((top.clone(), *top_energy));
        }
        if *top_energy <= tol {
            break;
        }
        level = ranked.into_iter().take(opts.beam_width).map(|(s, (r, e))| (s, r, e)).collect();
    }
    let Some((mut support, mut energy)) = best else {
        return Ok(Detection { bins: vec![], amplitudes: vec![], residual_ratio: 1.0, explained: false });
    };
    let explained = energy <= tol;
    let (mut coef, _, _) = atoms.fit(&support);
    if explained {
        'prune: loop {
            let mut order: Vec<usize> = (0..support.len()).collect();
            order.sort_by(|&a, &b| coef[a].norm().total_cmp(&coef[b].norm()));
            for i in order {
                if support.len() == 1 {
                    break 'prune;
                }
                let mut smaller = support.clone();
                smaller.remove(i);
                let (c2, _, e2) = atoms.fit(&smaller);
                if e2 <= tol {
                    support = smaller;
                    coef = c2;
                    energy = e2;
                    continue 'prune;
                }
            }
            break;
        }
    }
    let mut ranked: Vec<((i64, i64), Complex64)> = support.into_iter().zip(coef).collect();
    ranked.sort_by(|a, b| b.1.norm().total_cmp(&a.1.norm()).then(a.0 .1.cmp(&b.0 .1)).then(a.0 .0.cmp(&b.0 .0)));
    Ok(Detection {
        bins: ranked.iter().map(|r| r.0).collect(),
        amplitudes: ranked.iter().map(|r| r.1).collect(),
        residual_ratio: energy / total,
        explained,
    })
}
