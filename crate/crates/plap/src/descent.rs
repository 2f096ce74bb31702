//! Projected descent with Barzilai-Borwein trial steps and a monotone Armijo
//! backtracking line search. Both energy minimizers drive large, badly
//! conditioned problems through this one engine.

use crate::error::SolverError;

pub struct DescentOptions {
    /// Stop when the caller-computed stationarity measure drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// First trial step before any curvature information exists.
    pub initial_step: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c: f64,
    /// Smallest step the backtracking loop may reach.
    pub min_step: f64,
    /// Length of the non-monotone acceptance window; 1 forces monotone
    /// descent (every accepted energy at most the previous one).
    pub window: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            tol: 1e-8,
            max_iter: 200_000,
            initial_step: 1e-3,
            armijo_c: 1e-4,
            min_step: 1e-18,
            window: 10,
        }
    }
}

#[derive(Debug)]
pub struct DescentReport {
    pub iterations: usize,
    pub energy: f64,
    /// Stationarity measure at exit, as computed by `stationarity`.
    pub residual: f64,
    /// Whether accepted energies never increased (guaranteed for window=1).
    pub energy_nonincreasing: bool,
}

/// Minimize `energy` over the set fixed by `project`.
///
/// `grad` fills the gradient in place. `project` maps any point back to the
/// feasible set (identity for unconstrained problems). `stationarity` turns a
/// (point, gradient) pair into the scalar the caller wants tested against
/// `tol`; it is checked after each accepted step.
///
/// Trial steps follow the spectral (BB1) rule with a BB2 fallback, clamped to
/// keep one bad pair from freezing progress. The Armijo test is non-monotone:
/// sufficient decrease is measured against the worst energy in a short window,
/// which is what lets spectral steps move through badly conditioned valleys.
pub fn minimize<E, G, P, S>(
    x0: Vec<f64>,
    opts: &DescentOptions,
    mut energy: E,
    mut grad: G,
    mut project: P,
    mut stationarity: S,
) -> Result<(Vec<f64>, DescentReport), SolverError>
where
    E: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64], &mut [f64]),
    P: FnMut(&mut [f64]),
    S: FnMut(&[f64], &[f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0;
    project(&mut x);
    let mut g = vec![0.0; dim];
    grad(&x, &mut g);
    let mut e = energy(&x);
    if !e.is_finite() {
        return Err(SolverError::invalid_input(
            "energy is not finite at the initial point",
        ));
    }

    let mut res = stationarity(&x, &g);
    if res <= opts.tol {
        return Ok((
            x,
            DescentReport {
                iterations: 0,
                energy: e,
                residual: res,
                energy_nonincreasing: true,
            },
        ));
    }

    let mut step = opts.initial_step;
    let mut x_prev = vec![0.0; dim];
    let mut g_prev = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    // Recent energies for the non-monotone acceptance test.
    let window = opts.window.max(1);
    let mut recent = std::collections::VecDeque::with_capacity(window);
    recent.push_back(e);
    let mut nonincreasing = true;

    for iter in 1..=opts.max_iter {
        x_prev.copy_from_slice(&x);
        g_prev.copy_from_slice(&g);
        let e_ref = recent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        // Backtrack until sufficient decrease measured against the projected
        // displacement; plain Armijo on the raw step is wrong under projection.
        let mut alpha = step;
        loop {
            for i in 0..dim {
                trial[i] = x[i] - alpha * g[i];
            }
            project(&mut trial);
            let e_trial = energy(&trial);
            let decrease: f64 = (0..dim).map(|i| g[i] * (x[i] - trial[i])).sum();
            if e_trial.is_finite() && e_trial <= e_ref - opts.armijo_c * decrease && decrease >= 0.0
            {
                if e_trial > e {
                    nonincreasing = false;
                }
                e = e_trial;
                x.copy_from_slice(&trial);
                break;
            }
            alpha *= 0.5;
            if alpha < opts.min_step {
                return Err(SolverError::LineSearchFailure { step: alpha });
            }
        }
        if recent.len() == window {
            recent.pop_front();
        }
        recent.push_back(e);

        grad(&x, &mut g);
        res = stationarity(&x, &g);
        if res <= opts.tol {
            return Ok((
                x,
                DescentReport {
                    iterations: iter,
                    energy: e,
                    residual: res,
                    energy_nonincreasing: nonincreasing,
                },
            ));
        }

        // Spectral step from the last accepted pair.
        let mut ss = 0.0;
        let mut sy = 0.0;
        let mut yy = 0.0;
        for i in 0..dim {
            let s = x[i] - x_prev[i];
            let y = g[i] - g_prev[i];
            ss += s * s;
            sy += s * y;
            yy += y * y;
        }
        step = if sy > 0.0 && ss > 0.0 {
            let bb1 = ss / sy;
            if bb1.is_finite() && bb1 > 0.0 {
                bb1
            } else {
                sy / yy
            }
        } else if yy > 0.0 && sy > 0.0 {
            sy / yy
        } else {
            // No usable curvature: grow the last step and let Armijo cut it.
            (alpha * 2.0).max(opts.initial_step)
        };
        step = step.clamp(1e-12, 1e6);
    }

    Err(SolverError::MaxIterations {
        max_iter: opts.max_iter,
        residual: res,
    })
}
