//! Box-constrained Nelder-Mead. Trial points are projected onto the box.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Spread of objective values across the simplex.
    pub f_tol: f64,
    /// Largest coordinate distance from the best vertex.
    pub x_tol: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_iter: 2000, f_tol: 1e-10, x_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexResult<const D: usize> {
    pub x: [f64; D],
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn project<const D: usize>(mut x: [f64; D], lo: &[f64; D], hi: &[f64; D]) -> [f64; D] {
    for d in 0..D {
        x[d] = x[d].clamp(lo[d], hi[d]);
    }
    x
}

fn combine<const D: usize>(a: &[f64; D], b: &[f64; D], t: f64) -> [f64; D] {
    let mut out = [0.0; D];
    for d in 0..D {
        out[d] = a[d] + t * (b[d] - a[d]);
    }
    out
}

/// One Nelder-Mead run from `x0` with initial edge lengths `step`.
pub fn minimize<const D: usize>(
    f: impl Fn(&[f64; D]) -> f64,
    x0: [f64; D],
    step: [f64; D],
    lo: [f64; D],
    hi: [f64; D],
    opts: SimplexOptions,
) -> SimplexResult<D> {
    let x0 = project(x0, &lo, &hi);
    let mut pts: Vec<[f64; D]> = vec![x0];
    for d in 0..D {
        let mut p = x0;
        p[d] += step[d];
        if p[d] > hi[d] {
            p[d] = x0[d] - step[d];
        }
        pts.push(project(p, &lo, &hi));
    }
    let mut vals: Vec<f64> = pts.iter().map(&f).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mut order: Vec<usize> = (0..=D).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i]).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[D] - vals[0];
        let diameter =
            pts[1..].iter().flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        if spread <= opts.f_tol && diameter <= opts.x_tol {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = [0.0; D];
        for p in &pts[..D] {
            for d in 0..D {
                centroid[d] += p[d] / D as f64;
            }
        }
        let worst = pts[D];
        let reflected = project(combine(&centroid, &worst, -1.0), &lo, &hi);
        let fr = f(&reflected);
        if fr < vals[0] {
            let expanded = project(combine(&centroid, &worst, -2.0), &lo, &hi);
            let fe = f(&expanded);
            if fe < fr {
                pts[D] = expanded;
                vals[D] = fe;
            } else {
                pts[D] = reflected;
                vals[D] = fr;
            }
            continue;
        }
        if fr < vals[D - 1] {
            pts[D] = reflected;
            vals[D] = fr;
            continue;
        }
        let (contracted, fc) = if fr < vals[D] {
            let c = project(combine(&centroid, &reflected, 0.5), &lo, &hi);
            let fc = f(&c);
            (c, fc)
        } else {
            let c = project(combine(&centroid, &worst, 0.5), &lo, &hi);
            let fc = f(&c);
            (c, fc)
        };
        if fc < vals[D].min(fr) {
            pts[D] = contracted;
            vals[D] = fc;
            continue;
        }
        let best = pts[0];
        for i in 1..=D {
            pts[i] = combine(&best, &pts[i], 0.5);
            vals[i] = f(&pts[i]);
        }
    }
    let best = (0..=D).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    SimplexResult { x: pts[best], f: vals[best], iterations, converged }
}

/// Repeats [`minimize`] from the incumbent with a fresh simplex until a run
/// converges without improving the objective, within a shared budget.
pub fn minimize_with_restarts<const D: usize>(
    f: impl Fn(&[f64; D]) -> f64,
    x0: [f64; D],
    step: [f64; D],
    lo: [f64; D],
    hi: [f64; D],
    opts: SimplexOptions,
) -> SimplexResult<D> {
    let mut best = minimize(&f, x0, step, lo, hi, opts);
    let mut used = best.iterations;
    let mut restart_step = step.map(|s| 0.05 * s);
    while best.converged && used < opts.max_iter {
        let budget = SimplexOptions { max_iter: opts.max_iter - used, ..opts };
        let next = minimize(&f, best.x, restart_step, lo, hi, budget);
        used += next.iterations;
        let improved = next.f < best.f - opts.f_tol;
        let moved = next.x.iter().zip(&best.x).any(|(a, b)| (a - b).abs() > opts.x_tol);
        if next.f <= best.f {
            best = SimplexResult { iterations: used, ..next };
        } else {
            best.iterations = used;
            best.converged = next.converged;
        }
        if !(improved || moved) {
            break;
        }
        restart_step = restart_step.map(|s| 0.5 * s);
    }
    best.iterations = used;
    best
}
