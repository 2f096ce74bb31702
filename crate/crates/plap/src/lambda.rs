//! Finite-coupling two-species problem on a bounded interval: minimize the
//! coupled energy over pairs of unit-`L^p` profiles with zero ends, recover
//! the Lagrange multipliers, check the pointwise conserved combination, and
//! rescale the segregation interface for the large-coupling comparison.

use crate::bvp::SolutionPair;
use crate::descent::{self, DescentOptions};
use crate::error::SolverError;
use crate::mesh::{Grid, Profile};
use crate::numerics::{diff_central, phi_p, phi_p_reg, MonotoneCubic};
use serde::{Deserialize, Serialize};

/// Continuation schedule shared with the limit solver: slope regularization
/// is walked down before the reported solve.
pub const EPS_SCHEDULE: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-6];

const DEFAULT_TOL: f64 = 1e-8;

/// Problem data for the constrained pair on `[a, b]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaParams {
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub n: usize,
    #[serde(default)]
    pub eps_schedule: Vec<f64>,
    #[serde(default)]
    pub tol: f64,
    /// Optional starting profiles; defaults to two displaced bumps, left for
    /// the first component. The bumps break the exchange symmetry, so runs
    /// are deterministic about which component takes which side.
    #[serde(skip)]
    pub warm_start: Option<(Profile, Profile)>,
}

impl LambdaParams {
    pub fn new(p: f64, alpha: f64, beta: f64, lambda: f64, a: f64, b: f64, n: usize) -> Self {
        LambdaParams {
            p,
            alpha,
            beta,
            lambda,
            a,
            b,
            n,
            eps_schedule: EPS_SCHEDULE.to_vec(),
            tol: DEFAULT_TOL,
            warm_start: None,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.p > 1.0) {
            return Err(SolverError::invalid_input("p must satisfy p > 1"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.lambda >= 0.0) {
            return Err(SolverError::invalid_input(
                "alpha, beta and the coupling must be nonnegative",
            ));
        }
        if !(self.b > self.a) {
            return Err(SolverError::invalid_input("interval needs b > a"));
        }
        if self.n < 11 {
            return Err(SolverError::invalid_input("n must be at least 11"));
        }
        if self.eps_schedule.is_empty()
            || self
                .eps_schedule
                .windows(2)
                .any(|w| w[1] >= w[0] || w[0] <= 0.0)
            || *self.eps_schedule.last().expect("nonempty") < 0.0
        {
            return Err(SolverError::invalid_input(
                "eps schedule must be positive and strictly decreasing",
            ));
        }
        if !(self.tol > 0.0) {
            return Err(SolverError::invalid_input("tol must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid, SolverError> {
        Grid::new(self.a, self.b, self.n)
    }
}

/// Converged constrained pair with the recovered multipliers and the level
/// and drift of the pointwise conserved combination.
#[derive(Debug, Clone)]
pub struct LambdaSolution {
    pub p: f64,
    pub u: Profile,
    pub v: Profile,
    pub lambda1: f64,
    pub lambda2: f64,
    pub t_lambda: f64,
    pub t_drift: f64,
}

/// Interface blow-up data: crossing location and value, the two invariant
/// scalings, and the rescaled profiles on the `y` window.
#[derive(Debug, Clone)]
pub struct BlowupReport {
    pub x_cross: f64,
    pub m_cross: f64,
    /// Number of sign changes of `u - v`; the reported crossing is the one
    /// with the smallest common value.
    pub crossings: usize,
    /// `coupling * m^{2p}`: bounded away from 0 and infinity as the coupling
    /// grows.
    pub scale_invariant: f64,
    /// `coupling^{1/(2p)} * min(x - a, b - x)`: grows with the coupling.
    pub edge_scale: f64,
    /// Same distance under the square-root scaling, reported alongside.
    pub edge_scale_sqrt: f64,
    pub rescaled_u: Profile,
    pub rescaled_v: Profile,
}

#[inline]
fn pow_abs(v: f64, p: f64) -> f64 {
    if p == 2.0 {
        v * v
    } else {
        v.abs().powf(p)
    }
}

#[inline]
fn cell_measure(g: f64, p: f64, eps: f64) -> f64 {
    let q = g * g + eps * eps;
    if p == 2.0 {
        q
    } else {
        q.powf(p / 2.0)
    }
}

fn energy_raw(u: &[f64], v: &[f64], h: f64, prm: &LambdaParams, eps: f64) -> f64 {
    let p = prm.p;
    let n = u.len();
    let mut slope_term = 0.0;
    for c in 0..n - 1 {
        let su = (u[c + 1] - u[c]) / h;
        let sv = (v[c + 1] - v[c]) / h;
        slope_term += cell_measure(su, p, eps) + cell_measure(sv, p, eps);
    }
    let mut self_u = 0.0;
    let mut self_v = 0.0;
    let mut coupling = 0.0;
    for j in 0..n {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        self_u += w * pow_abs(u[j], p + 2.0);
        self_v += w * pow_abs(v[j], p + 2.0);
        coupling += w * pow_abs(u[j], p) * pow_abs(v[j], p);
    }
    (h / p) * slope_term
        + h * (prm.alpha * self_u + prm.beta * self_v) / (p + 2.0)
        + (prm.lambda / p) * h * coupling
}

/// Discrete regularized energy of a candidate pair (boundary values enter as
/// given; nothing is pinned here).
pub fn energy_lambda(u: &Profile, v: &Profile, prm: &LambdaParams, eps: f64) -> f64 {
    assert_eq!(u.grid, v.grid, "components must share one grid");
    energy_raw(&u.values, &v.values, u.grid.h(), prm, eps)
}

/// Interior gradient of [`energy_lambda`] in the first component; `out` has
/// length `n - 2`. The second component's gradient is the same formula with
/// the roles and the self-interaction weight swapped.
fn gradient_block(
    own: &[f64],
    other: &[f64],
    h: f64,
    p: f64,
    self_weight: f64,
    coupling: f64,
    eps: f64,
    out: &mut [f64],
) {
    let n = own.len();
    let mut flux_prev = phi_p_reg((own[1] - own[0]) / h, p, eps);
    for j in 1..n - 1 {
        let flux_next = phi_p_reg((own[j + 1] - own[j]) / h, p, eps);
        out[j - 1] = flux_prev - flux_next
            + h * self_weight * phi_p(own[j], p + 2.0)
            + h * coupling * phi_p(own[j], p) * pow_abs(other[j], p);
        flux_prev = flux_next;
    }
}

/// Full-length analytic gradient of [`energy_lambda`] with respect to the
/// node values of both components; boundary entries are zero. Returned as
/// `(grad_u, grad_v)`.
pub fn energy_gradient_lambda(
    u: &Profile,
    v: &Profile,
    prm: &LambdaParams,
    eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(u.grid, v.grid, "components must share one grid");
    let n = u.grid.n;
    let h = u.grid.h();
    let mut gu = vec![0.0; n];
    let mut gv = vec![0.0; n];
    gradient_block(
        &u.values,
        &v.values,
        h,
        prm.p,
        prm.alpha,
        prm.lambda,
        eps,
        &mut gu[1..n - 1],
    );
    gradient_block(
        &v.values,
        &u.values,
        h,
        prm.p,
        prm.beta,
        prm.lambda,
        eps,
        &mut gv[1..n - 1],
    );
    (gu, gv)
}

/// `h * sum |x_j|^p` over a block: the discrete unit-mass constraint (the
/// boundary values are zero, so the trapezoid end weights never matter).
fn mass(block: &[f64], h: f64, p: f64) -> f64 {
    h * block.iter().map(|&x| pow_abs(x, p)).sum::<f64>()
}

fn normalize_block(block: &mut [f64], h: f64, p: f64) {
    for x in block.iter_mut() {
        *x = x.abs();
    }
    let m = mass(block, h, p);
    if m > 0.0 {
        let scale = m.powf(-1.0 / p);
        for x in block.iter_mut() {
            *x *= scale;
        }
    }
}

/// Component of `g` orthogonal to the constraint normal `phi_p(x)`, sup-norm.
fn projected_sup(x: &[f64], g: &[f64], p: f64) -> f64 {
    let mut gn = 0.0;
    let mut nn = 0.0;
    for j in 0..x.len() {
        let nj = phi_p(x[j], p);
        gn += g[j] * nj;
        nn += nj * nj;
    }
    let c = if nn > 0.0 { gn / nn } else { 0.0 };
    (0..x.len()).fold(0.0f64, |m, j| m.max((g[j] - c * phi_p(x[j], p)).abs()))
}

/// `|x|^q` with the base floored away from zero when the exponent is
/// negative, so degenerate nodes cannot poison a matrix.
#[inline]
fn zpow(x: f64, q: f64) -> f64 {
    if q < 0.0 {
        x.abs().max(1e-12).powf(q)
    } else {
        x.abs().powf(q)
    }
}

/// Derivative of the regularized flux `phi_p_reg` in the slope.
#[inline]
fn flux_slope(s: f64, p: f64, eps: f64) -> f64 {
    let q = s * s + eps * eps;
    if p == 2.0 {
        1.0
    } else {
        q.powf((p - 4.0) / 2.0) * ((p - 1.0) * s * s + eps * eps)
    }
}

/// Sup-norm of the stationarity residual with explicit multipliers: the
/// energy gradient minus `theta * h * phi_p` per block.
fn multiplier_residual(
    u: &[f64],
    v: &[f64],
    gu: &[f64],
    gv: &[f64],
    h: f64,
    p: f64,
    th1: f64,
    th2: f64,
) -> f64 {
    let n = u.len();
    let mut worst = 0.0f64;
    for j in 1..n - 1 {
        worst = worst.max((gu[j] - th1 * h * phi_p(u[j], p)).abs());
        worst = worst.max((gv[j] - th2 * h * phi_p(v[j], p)).abs());
    }
    worst
}

/// One assembled Newton system for the stationarity conditions of the
/// constrained pair: both equations with explicit multipliers plus the two
/// unit-mass constraints. Returns the step for `[u_int, v_int, th1, th2]`.
fn newton_step(
    u: &[f64],
    v: &[f64],
    th1: f64,
    th2: f64,
    prm: &LambdaParams,
    h: f64,
    eps: f64,
) -> Option<Vec<f64>> {
    let p = prm.p;
    let n = u.len();
    let m = n - 2;
    let dim = 2 * m + 2;
    let mut a = nalgebra::DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = nalgebra::DVector::<f64>::zeros(dim);

    let mut gu = vec![0.0; n];
    let mut gv = vec![0.0; n];
    gradient_block(u, v, h, p, prm.alpha, prm.lambda, eps, &mut gu[1..n - 1]);
    gradient_block(v, u, h, p, prm.beta, prm.lambda, eps, &mut gv[1..n - 1]);

    let fill_block = |a: &mut nalgebra::DMatrix<f64>,
                      rhs: &mut nalgebra::DVector<f64>,
                      own: &[f64],
                      other: &[f64],
                      g: &[f64],
                      self_weight: f64,
                      theta: f64,
                      base: usize,
                      cross_base: usize,
                      theta_col: usize| {
        for j in 1..n - 1 {
            let r = base + j - 1;
            let s_prev = (own[j] - own[j - 1]) / h;
            let s_next = (own[j + 1] - own[j]) / h;
            let w_prev = flux_slope(s_prev, p, eps);
            let w_next = flux_slope(s_next, p, eps);
            let zero_order = self_weight * (p + 1.0) * pow_abs(own[j], p)
                + prm.lambda * (p - 1.0) * zpow(own[j], p - 2.0) * pow_abs(other[j], p)
                - theta * (p - 1.0) * zpow(own[j], p - 2.0);
            a[(r, r)] = (w_prev + w_next) / h + h * zero_order;
            if j > 1 {
                a[(r, r - 1)] = -w_prev / h;
            }
            if j < n - 2 {
                a[(r, r + 1)] = -w_next / h;
            }
            a[(r, cross_base + j - 1)] =
                h * prm.lambda * p * phi_p(own[j], p) * phi_p(other[j], p);
            a[(r, theta_col)] = -h * phi_p(own[j], p);
            a[(theta_col, r)] = h * p * phi_p(own[j], p);
            rhs[r] = -(g[j] - theta * h * phi_p(own[j], p));
        }
    };
    fill_block(&mut a, &mut rhs, u, v, &gu, prm.alpha, th1, 0, m, 2 * m);
    fill_block(&mut a, &mut rhs, v, u, &gv, prm.beta, th2, m, 0, 2 * m + 1);
    rhs[2 * m] = -(mass(&u[1..n - 1], h, p) - 1.0);
    rhs[2 * m + 1] = -(mass(&v[1..n - 1], h, p) - 1.0);

    a.lu().solve(&rhs).map(|d| d.as_slice().to_vec())
}

/// Newton endgame on the stationarity system. The descent stages certify
/// decrease only down to the rounding floor of the energy, a few orders
/// above `tol` in gradient scale; Newton contracts the residual through that
/// floor to its own plateau. Steps are damped on the residual, kept on the
/// constraint set by the same abs-and-renormalize projection, and rejected
/// if they raise the energy by more than rounding noise.
fn newton_polish(
    u: &mut Vec<f64>,
    v: &mut Vec<f64>,
    prm: &LambdaParams,
    eps: f64,
) -> Result<(f64, f64, usize), SolverError> {
    let p = prm.p;
    let n = u.len();
    let h = (prm.b - prm.a) / (n as f64 - 1.0);
    let tol = prm.tol;

    let measure = |u: &[f64], v: &[f64], th1: f64, th2: f64| -> f64 {
        let mut gu = vec![0.0; n];
        let mut gv = vec![0.0; n];
        gradient_block(u, v, h, p, prm.alpha, prm.lambda, eps, &mut gu[1..n - 1]);
        gradient_block(v, u, h, p, prm.beta, prm.lambda, eps, &mut gv[1..n - 1]);
        multiplier_residual(u, v, &gu, &gv, h, p, th1, th2)
    };

    let (mut th1, mut th2) = integral_multipliers(u, v, h, prm);
    let mut res = measure(u, v, th1, th2);
    let mut energy = energy_raw(u, v, h, prm, eps);
    let mut stalls = 0usize;
    let mut iters = 0usize;
    for _ in 0..60 {
        if res <= tol && stalls > 0 {
            break;
        }
        let Some(delta) = newton_step(u, v, th1, th2, prm, h, eps) else {
            if res <= tol {
                break;
            }
            return Err(SolverError::MaxIterations {
                max_iter: iters,
                residual: res,
            });
        };
        iters += 1;
        let m = n - 2;
        let mut alpha = 1.0f64;
        let mut accepted = false;
        for _ in 0..12 {
            let mut cu = u.clone();
            let mut cv = v.clone();
            for j in 1..n - 1 {
                cu[j] += alpha * delta[j - 1];
                cv[j] += alpha * delta[m + j - 1];
            }
            normalize_block(&mut cu[1..n - 1], h, p);
            normalize_block(&mut cv[1..n - 1], h, p);
            let c1 = th1 + alpha * delta[2 * m];
            let c2 = th2 + alpha * delta[2 * m + 1];
            let new_res = measure(&cu, &cv, c1, c2);
            let new_energy = energy_raw(&cu, &cv, h, prm, eps);
            if new_res < res && new_energy <= energy + 1e-12 * energy.abs().max(1.0) {
                *u = cu;
                *v = cv;
                th1 = c1;
                th2 = c2;
                stalls = if new_res > 0.5 * res { stalls + 1 } else { 0 };
                res = new_res;
                energy = new_energy;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            stalls += 1;
        }
        if stalls >= 3 {
            break;
        }
    }
    if res > tol {
        return Err(SolverError::MaxIterations {
            max_iter: iters,
            residual: res,
        });
    }
    Ok((th1, th2, iters))
}

/// Multiplier identities evaluated on raw value vectors.
fn integral_multipliers(u: &[f64], v: &[f64], h: f64, prm: &LambdaParams) -> (f64, f64) {
    let p = prm.p;
    let n = u.len();
    let mut slope_u = 0.0;
    let mut slope_v = 0.0;
    for c in 0..n - 1 {
        slope_u += pow_abs((u[c + 1] - u[c]) / h, p);
        slope_v += pow_abs((v[c + 1] - v[c]) / h, p);
    }
    let mut self_u = 0.0;
    let mut self_v = 0.0;
    let mut cross = 0.0;
    let mut mass_u = 0.0;
    let mut mass_v = 0.0;
    for j in 0..n {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        self_u += w * pow_abs(u[j], p + 2.0);
        self_v += w * pow_abs(v[j], p + 2.0);
        cross += w * pow_abs(u[j], p) * pow_abs(v[j], p);
        mass_u += w * pow_abs(u[j], p);
        mass_v += w * pow_abs(v[j], p);
    }
    let l1 = (slope_u + prm.alpha * self_u + prm.lambda * cross) / mass_u;
    let l2 = (slope_v + prm.beta * self_v + prm.lambda * cross) / mass_v;
    (l1, l2)
}

fn default_bumps(grid: Grid) -> (Vec<f64>, Vec<f64>) {
    let (a, b) = (grid.a, grid.b);
    let len = b - a;
    let bump = |center: f64, x: f64| -> f64 {
        let t = (x - center) / (0.25 * len);
        if t.abs() >= 1.0 {
            0.0
        } else {
            (1.0 - t * t) * (1.0 - t * t)
        }
    };
    let left: Vec<f64> = grid.nodes().iter().map(|&x| bump(a + 0.3 * len, x)).collect();
    let right: Vec<f64> = grid.nodes().iter().map(|&x| bump(b - 0.3 * len, x)).collect();
    (left, right)
}

/// Minimizes the constrained energy over the eps schedule and fills in the
/// multipliers and the conserved-combination summary. Each component is kept
/// nonnegative and unit-`L^p` by projection after every trial step; a stage
/// converges when the constraint-projected gradient has sup-norm below its
/// tolerance. Certified energy decrease bottoms out near the rounding floor
/// of the energy, so the stages stop at a modest tolerance and a damped
/// Newton pass on the stationarity system finishes the job; its record is
/// appended as one extra stage.
pub fn minimize_lambda(
    prm: &LambdaParams,
) -> Result<(LambdaSolution, Vec<crate::bvp::StageStats>), SolverError> {
    prm.validate()?;
    let grid = prm.grid()?;
    let n = grid.n;
    let h = grid.h();
    let p = prm.p;
    let m = n - 2;

    let (mut full_u, mut full_v) = match &prm.warm_start {
        Some((u0, v0)) => {
            if u0.grid != grid || v0.grid != grid {
                return Err(SolverError::invalid_input(
                    "warm start grids do not match the problem grid",
                ));
            }
            (u0.values.clone(), v0.values.clone())
        }
        None => default_bumps(grid),
    };
    for vals in [&mut full_u, &mut full_v] {
        vals[0] = 0.0;
        vals[n - 1] = 0.0;
        normalize_block(&mut vals[1..n - 1], h, p);
    }

    let mut x0: Vec<f64> = Vec::with_capacity(2 * m);
    x0.extend_from_slice(&full_u[1..n - 1]);
    x0.extend_from_slice(&full_v[1..n - 1]);

    let mut stages = Vec::with_capacity(prm.eps_schedule.len() + 1);
    let mut state = x0;
    for &eps in &prm.eps_schedule {
        let stage_tol = prm.tol.max(1e-5).max(eps * 1e-2);
        let mut ubuf = vec![0.0; n];
        let mut vbuf = vec![0.0; n];
        let prm_c = prm.clone();
        let energy = move |xs: &[f64]| -> f64 {
            ubuf[1..n - 1].copy_from_slice(&xs[..m]);
            vbuf[1..n - 1].copy_from_slice(&xs[m..]);
            energy_raw(&ubuf, &vbuf, h, &prm_c, eps)
        };
        let mut ubuf = vec![0.0; n];
        let mut vbuf = vec![0.0; n];
        let prm_c = prm.clone();
        let grad = move |xs: &[f64], g: &mut [f64]| {
            ubuf[1..n - 1].copy_from_slice(&xs[..m]);
            vbuf[1..n - 1].copy_from_slice(&xs[m..]);
            gradient_block(
                &ubuf,
                &vbuf,
                h,
                prm_c.p,
                prm_c.alpha,
                prm_c.lambda,
                eps,
                &mut g[..m],
            );
            gradient_block(
                &vbuf,
                &ubuf,
                h,
                prm_c.p,
                prm_c.beta,
                prm_c.lambda,
                eps,
                &mut g[m..],
            );
        };
        let project = move |xs: &mut [f64]| {
            let (ub, vb) = xs.split_at_mut(m);
            normalize_block(ub, h, p);
            normalize_block(vb, h, p);
        };
        let stationarity = move |xs: &[f64], g: &[f64]| -> f64 {
            let ru = projected_sup(&xs[..m], &g[..m], p);
            let rv = projected_sup(&xs[m..], &g[m..], p);
            ru.max(rv)
        };
        // window 1 keeps every accepted step a strict energy decrease.
        let opts = DescentOptions {
            tol: stage_tol,
            window: 1,
            ..DescentOptions::default()
        };
        let e0 = {
            let mut ub = vec![0.0; n];
            let mut vb = vec![0.0; n];
            ub[1..n - 1].copy_from_slice(&state[..m]);
            vb[1..n - 1].copy_from_slice(&state[m..]);
            energy_raw(&ub, &vb, h, prm, eps)
        };
        let (next, report) =
            descent::minimize(state.clone(), &opts, energy, grad, project, stationarity)?;
        stages.push(crate::bvp::StageStats {
            eps,
            iterations: report.iterations,
            energy_start: e0,
            energy: report.energy,
            residual: report.residual,
        });
        state = next;
    }

    let mut u_vals = vec![0.0; n];
    let mut v_vals = vec![0.0; n];
    u_vals[1..n - 1].copy_from_slice(&state[..m]);
    v_vals[1..n - 1].copy_from_slice(&state[m..]);
    let eps_last = *prm.eps_schedule.last().expect("validated nonempty");
    let e0 = energy_raw(&u_vals, &v_vals, h, prm, eps_last);
    let (l1, l2, polish_iters) = newton_polish(&mut u_vals, &mut v_vals, prm, eps_last)?;
    let final_energy = energy_raw(&u_vals, &v_vals, h, prm, eps_last);
    let final_residual = {
        let mut gu = vec![0.0; n];
        let mut gv = vec![0.0; n];
        gradient_block(&u_vals, &v_vals, h, p, prm.alpha, prm.lambda, eps_last, &mut gu[1..n - 1]);
        gradient_block(&v_vals, &u_vals, h, p, prm.beta, prm.lambda, eps_last, &mut gv[1..n - 1]);
        multiplier_residual(&u_vals, &v_vals, &gu, &gv, h, p, l1, l2)
    };
    stages.push(crate::bvp::StageStats {
        eps: eps_last,
        iterations: polish_iters,
        energy_start: e0,
        energy: final_energy,
        residual: final_residual,
    });

    let u = Profile::new(grid, u_vals)?;
    let v = Profile::new(grid, v_vals)?;

    let mut sol = LambdaSolution {
        p,
        u,
        v,
        lambda1: l1,
        lambda2: l2,
        t_lambda: f64::NAN,
        t_drift: f64::NAN,
    };
    let (l1, l2) = multipliers(&sol, prm);
    sol.lambda1 = l1;
    sol.lambda2 = l2;
    let (_, t_level, t_drift) = t_lambda_profile(&sol, prm);
    sol.t_lambda = t_level;
    sol.t_drift = t_drift;
    Ok((sol, stages))
}

/// Multipliers from the integrated equations: each is the slope energy of its
/// component plus its self-interaction and coupling integrals, divided by the
/// unit constraint mass. Quadrature matches the discrete energy, so the
/// values make the discrete stationarity identity exact up to the slope
/// regularization.
pub fn multipliers(sol: &LambdaSolution, prm: &LambdaParams) -> (f64, f64) {
    integral_multipliers(&sol.u.values, &sol.v.values, sol.u.grid.h(), prm)
}

/// Pointwise conserved combination of a converged pair, its level (median
/// over the interior), and the worst relative drift from that level.
///
/// The zeroth-order part carries a `1/(p-1)` factor, which is what makes the
/// combination constant along solutions of the divergence-form system; at
/// `p = 2` the factor disappears.
pub fn t_lambda_profile(sol: &LambdaSolution, prm: &LambdaParams) -> (Profile, f64, f64) {
    let p = prm.p;
    let grid = sol.u.grid;
    let n = grid.n;
    let du = diff_central(&sol.u);
    let dv = diff_central(&sol.v);
    let u = &sol.u.values;
    let v = &sol.v.values;
    let mut t = Vec::with_capacity(n);
    for j in 0..n {
        let zeroth = prm.lambda * pow_abs(u[j], p) * pow_abs(v[j], p)
            + p * prm.alpha * pow_abs(u[j], p + 2.0) / (p + 2.0)
            + p * prm.beta * pow_abs(v[j], p + 2.0) / (p + 2.0)
            - sol.lambda1 * pow_abs(u[j], p)
            - sol.lambda2 * pow_abs(v[j], p);
        t.push(pow_abs(du[j], p) + pow_abs(dv[j], p) - zeroth / (p - 1.0));
    }
    let mut interior: Vec<f64> = t[1..n - 1].to_vec();
    interior.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mid = interior.len();
    let level = if mid % 2 == 1 {
        interior[mid / 2]
    } else {
        0.5 * (interior[mid / 2 - 1] + interior[mid / 2])
    };
    let mut drift = 0.0f64;
    for j in 1..n - 1 {
        drift = drift.max((t[j] - level).abs() / level.abs().max(1e-12));
    }
    (Profile { grid, values: t }, level, drift)
}

/// Locates the segregation interface and rescales both components around it.
///
/// The crossing is the sign change of `u - v` with the smallest interpolated
/// common value (both components are small exactly at the interface). The
/// rescaled profiles are `y -> component(m y + x_cross) / m` sampled by
/// monotone cubic interpolation on `window`, clipped to the physical domain.
pub fn blowup_extract(
    sol: &LambdaSolution,
    prm: &LambdaParams,
    window: (f64, f64),
    points: usize,
) -> Result<BlowupReport, SolverError> {
    let grid = sol.u.grid;
    let n = grid.n;
    let u = &sol.u.values;
    let v = &sol.v.values;
    if window.1 <= window.0 || points < 2 {
        return Err(SolverError::invalid_input(
            "rescale window needs positive length and at least 2 points",
        ));
    }

    // Strict sign changes across a cell, plus interior nodes where the
    // difference vanishes exactly between opposite signs. The boundary nodes
    // never qualify: both components are pinned to zero there.
    let d: Vec<f64> = (0..n).map(|j| u[j] - v[j]).collect();
    let mut best: Option<(f64, f64)> = None;
    let mut crossings = 0usize;
    let consider = |x: f64, m: f64, best: &mut Option<(f64, f64)>| {
        if best.map_or(true, |(_, mb)| m < mb) {
            *best = Some((x, m));
        }
    };
    for c in 0..n - 1 {
        if d[c] * d[c + 1] < 0.0 {
            crossings += 1;
            let t = d[c] / (d[c] - d[c + 1]);
            consider(
                grid.x(c) + t * grid.h(),
                u[c] + t * (u[c + 1] - u[c]),
                &mut best,
            );
        }
    }
    for j in 1..n - 1 {
        if d[j] == 0.0 && d[j - 1] * d[j + 1] < 0.0 {
            crossings += 1;
            consider(grid.x(j), u[j], &mut best);
        }
    }
    let (x_cross, m_cross) = best.ok_or_else(|| {
        SolverError::NoCrossing("components do not exchange order inside the interval".into())
    })?;
    if !(m_cross > 0.0) {
        return Err(SolverError::NoCrossing(format!(
            "crossing value {m_cross:.3e} at x = {x_cross:.6} is not positive"
        )));
    }

    let xs = grid.nodes();
    let iu = MonotoneCubic::new(&xs, u)?;
    let iv = MonotoneCubic::new(&xs, v)?;
    let y_lo = window.0.max((grid.a - x_cross) / m_cross);
    let y_hi = window.1.min((grid.b - x_cross) / m_cross);
    if y_hi <= y_lo {
        return Err(SolverError::WindowEmpty(
            "rescale window misses the physical domain".into(),
        ));
    }
    let ygrid = Grid::new(y_lo, y_hi, points)?;
    let ru: Vec<f64> = ygrid
        .nodes()
        .iter()
        .map(|&y| iu.eval(m_cross * y + x_cross) / m_cross)
        .collect();
    let rv: Vec<f64> = ygrid
        .nodes()
        .iter()
        .map(|&y| iv.eval(m_cross * y + x_cross) / m_cross)
        .collect();

    let edge = (x_cross - grid.a).min(grid.b - x_cross);
    Ok(BlowupReport {
        x_cross,
        m_cross,
        crossings,
        scale_invariant: prm.lambda * m_cross.powf(2.0 * prm.p),
        edge_scale: prm.lambda.powf(1.0 / (2.0 * prm.p)) * edge,
        edge_scale_sqrt: prm.lambda.sqrt() * edge,
        rescaled_u: Profile::new(ygrid, ru)?,
        rescaled_v: Profile::new(ygrid, rv)?,
    })
}

/// One row of the sweep report.
#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    #[serde(rename = "T_Lambda")]
    pub t_lambda: f64,
    #[serde(rename = "T_drift")]
    pub t_drift: f64,
    #[serde(rename = "m_Lambda")]
    pub m_cross: f64,
    #[serde(rename = "x_Lambda")]
    pub x_cross: f64,
    pub crossings: usize,
    pub scale_invariant: f64,
    pub edge_scale: f64,
    pub edge_scale_sqrt: f64,
    /// Largest node slope magnitude over both components; bounded along the
    /// sweep.
    pub max_slope: f64,
    /// Sup distance on the rescale window between the rescaled pair and the
    /// reference limit pair.
    pub rescaled_distance: f64,
}

/// Trend report over a nondecreasing list of coupling strengths.
#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub format_version: u32,
    pub entries: Vec<SweepEntry>,
}

/// Reference for the rescaled comparison, sampled at `y`.
///
/// The interface rescaling pins both center values to 1 but leaves the
/// coupling strength `coeff = Lambda * m^{2p}` in front of the limit
/// equations, so the comparison has to happen in that gauge. The unbounded
/// pair solves the coefficient-1 system; `value -> s * value(t x)` maps it to
/// coefficient `(t/s)^p` with center value `s * c`, and `s = 1/c`,
/// `t = coeff^{1/p}/c` lands on center 1 at the entry's own coefficient.
/// Plain division by the center value would move the pair off the solution
/// family entirely.
fn limit_reference(
    pair: &SolutionPair,
    y: &[f64],
    coeff: f64,
) -> Result<(Vec<f64>, Vec<f64>), SolverError> {
    let grid = pair.grid();
    let xs = grid.nodes();
    let iu = MonotoneCubic::new(&xs, &pair.u.values)?;
    let iv = MonotoneCubic::new(&xs, &pair.v.values)?;
    let c = 0.5 * (iu.eval(0.0) + iv.eval(0.0));
    if !(c > 0.0) {
        return Err(SolverError::invalid_input(
            "limit pair has no positive center value",
        ));
    }
    if !(coeff > 0.0) {
        return Err(SolverError::invalid_input(
            "gauge coefficient must be positive",
        ));
    }
    let t = coeff.powf(1.0 / pair.p) / c;
    let reach = y.iter().fold(0.0f64, |m, &v| m.max(v.abs())) * t;
    if reach > grid.b.max(-grid.a) {
        return Err(SolverError::WindowTooSmall(format!(
            "window needs the reference out to {reach:.2} but it only spans {:.2}",
            grid.b
        )));
    }
    let us = y.iter().map(|&v| iu.eval(t * v) / c).collect();
    let vs = y.iter().map(|&v| iv.eval(t * v) / c).collect();
    Ok((us, vs))
}

/// One sweep entry at coupling `lam`: solve, recover the multipliers, rescale
/// at the interface, and measure the distance to `reference` on the window.
/// Also returns the blow-up report and the stage statistics for callers that
/// persist per-entry artifacts.
pub fn sweep_entry(
    template: &LambdaParams,
    lam: f64,
    reference: &SolutionPair,
    window: (f64, f64),
    points: usize,
) -> Result<(SweepEntry, BlowupReport, Vec<crate::bvp::StageStats>), SolverError> {
    let mut prm = template.clone();
    prm.lambda = lam;
    let (sol, stages) = minimize_lambda(&prm)?;
    let blow = blowup_extract(&sol, &prm, window, points)?;
    let ygrid = blow.rescaled_u.grid;
    let ys = ygrid.nodes();
    let (ref_u, ref_v) = limit_reference(reference, &ys, blow.scale_invariant)?;
    // The system is symmetric under exchanging the components, so the
    // reference is matched in the orientation the rescaled pair came out
    // in: its first component may decay to either side.
    let ru = &blow.rescaled_u.values;
    let u_rises = ru[ys.len() - 1] > ru[0];
    let (ref_first, ref_second) = if u_rises {
        (&ref_u, &ref_v)
    } else {
        (&ref_v, &ref_u)
    };
    let mut dist = 0.0f64;
    for k in 0..ys.len() {
        dist = dist.max((blow.rescaled_u.values[k] - ref_first[k]).abs());
        dist = dist.max((blow.rescaled_v.values[k] - ref_second[k]).abs());
    }
    let du = diff_central(&sol.u);
    let dv = diff_central(&sol.v);
    let max_slope = du
        .iter()
        .chain(dv.iter())
        .fold(0.0f64, |m, &s| m.max(s.abs()));
    let entry = SweepEntry {
        lambda: lam,
        lambda1: sol.lambda1,
        lambda2: sol.lambda2,
        t_lambda: sol.t_lambda,
        t_drift: sol.t_drift,
        m_cross: blow.m_cross,
        x_cross: blow.x_cross,
        crossings: blow.crossings,
        scale_invariant: blow.scale_invariant,
        edge_scale: blow.edge_scale,
        edge_scale_sqrt: blow.edge_scale_sqrt,
        max_slope,
        rescaled_distance: dist,
    };
    Ok((entry, blow, stages))
}

/// Runs the solve, the multiplier recovery, and the interface rescaling for
/// each coupling value, and measures the distance of the rescaled pair to
/// `reference` on `window`. Entries are reported in input order; the caller
/// asserts the trends.
pub fn lambda_sweep(
    template: &LambdaParams,
    lambdas: &[f64],
    reference: &SolutionPair,
    window: (f64, f64),
    points: usize,
) -> Result<SweepReport, SolverError> {
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(SolverError::invalid_input(
            "coupling list must be nondecreasing",
        ));
    }
    let mut entries = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let (entry, _, _) = sweep_entry(template, lam, reference, window, points)?;
        entries.push(entry);
    }
    Ok(SweepReport {
        format_version: 1,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::numerics::lp_norm;

    fn base_params(lambda: f64, n: usize) -> LambdaParams {
        LambdaParams::new(2.0, 1.0, 1.0, lambda, -1.0, 1.0, n)
    }

    #[test]
    fn energy_values_on_hand_checkable_inputs() {
        let grid = Grid::new(0.0, 1.0, 41).unwrap();
        let zero = Profile::zeros(grid);
        let prm = LambdaParams::new(2.0, 1.0, 1.0, 10.0, 0.0, 1.0, 41);
        assert_eq!(energy_lambda(&zero, &zero, &prm, 0.0), 0.0);

        let c = 0.7;
        let cprof = Profile::from_fn(grid, |_| c).unwrap();
        let e = energy_lambda(&cprof, &zero, &prm, 0.0);
        assert_relative_eq!(e, c.powi(4) / 4.0, max_relative = 1e-12);

        // The coupling enters linearly in its strength.
        let u = Profile::from_fn(grid, |x| x * (1.0 - x)).unwrap();
        let v = Profile::from_fn(grid, |x| 0.5 + x * 0.1).unwrap();
        let mut p0 = prm.clone();
        p0.lambda = 0.0;
        let mut p10 = prm.clone();
        p10.lambda = 10.0;
        let gap = energy_lambda(&u, &v, &p10, 1e-3) - energy_lambda(&u, &v, &p0, 1e-3);
        let h = grid.h();
        let direct: f64 = (0..grid.n)
            .map(|j| {
                let w = if j == 0 || j == grid.n - 1 { 0.5 } else { 1.0 };
                w * u.values[j].powi(2) * v.values[j].powi(2)
            })
            .sum::<f64>()
            * h
            * 10.0
            / 2.0;
        assert_relative_eq!(gap, direct, max_relative = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use crate::verify::gradient_fd_check;
        let prm = LambdaParams::new(1.5, 0.7, 1.3, 5.0, -1.0, 1.0, 41);
        let grid = prm.grid().unwrap();
        let n = grid.n;
        let eps = 1e-2;
        let u = Profile::from_fn(grid, |x| (1.0 - x * x).max(0.0) * (0.4 + 0.3 * x)).unwrap();
        let v = Profile::from_fn(grid, |x| (1.0 - x * x).max(0.0) * (0.5 - 0.2 * x)).unwrap();
        let mut point = Vec::new();
        point.extend_from_slice(&u.values[1..n - 1]);
        point.extend_from_slice(&v.values[1..n - 1]);
        let m = n - 2;
        let (gu, gv) = energy_gradient_lambda(&u, &v, &prm, eps);
        let mut grad = Vec::new();
        grad.extend_from_slice(&gu[1..n - 1]);
        grad.extend_from_slice(&gv[1..n - 1]);
        let fu = u.values.clone();
        let fv = v.values.clone();
        let worst = gradient_fd_check(
            |pt: &[f64]| {
                let mut uu = fu.clone();
                let mut vv = fv.clone();
                uu[1..n - 1].copy_from_slice(&pt[..m]);
                vv[1..n - 1].copy_from_slice(&pt[m..]);
                energy_raw(&uu, &vv, grid.h(), &prm, eps)
            },
            &grad,
            &point,
        );
        assert!(worst <= 1e-5, "fd mismatch {worst:.3e}");
    }

    #[test]
    fn decoupled_identical_problems_agree() {
        let prm = base_params(0.0, 201);
        let (sol, stages) = minimize_lambda(&prm).unwrap();
        let gap = (0..prm.n)
            .map(|j| (sol.u.values[j] - sol.v.values[j]).abs())
            .fold(0.0, f64::max)
            / sol
                .u
                .values
                .iter()
                .fold(0.0f64, |m, &x| m.max(x.abs()));
        assert!(gap <= 1e-6, "components differ by {gap:.3e}");
        assert_relative_eq!(sol.lambda1, sol.lambda2, max_relative = 1e-8);
        assert!((lp_norm(&sol.u, 2.0) - 1.0).abs() <= 1e-10);
        assert!((lp_norm(&sol.v, 2.0) - 1.0).abs() <= 1e-10);
        for prof in [&sol.u, &sol.v] {
            assert_eq!(prof.values[0], 0.0);
            assert_eq!(prof.values[prm.n - 1], 0.0);
            assert!(prof.values.iter().all(|&x| x >= 0.0));
        }
        for s in &stages {
            assert!(
                s.energy <= s.energy_start + 1e-12 * s.energy_start.abs().max(1.0),
                "stage at eps {:.0e} raised the energy",
                s.eps
            );
        }
    }

    #[test]
    fn validation_names_the_broken_input() {
        let ok = base_params(1.0, 41);
        assert!(ok.validate().is_ok());
        let mut bad = ok.clone();
        bad.p = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.alpha = -0.1;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.b = bad.a;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.n = 10;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.eps_schedule = vec![1e-2, 1e-1];
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.tol = 0.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn multiplier_reduces_to_the_principal_eigenvalue() {
        // alpha = 0 and no coupling turn the first equation into the
        // eigenvalue problem of the second-difference matrix.
        let mut prm = base_params(0.0, 201);
        prm.alpha = 0.0;
        let (sol, _) = minimize_lambda(&prm).unwrap();
        let m = prm.n - 2;
        let h = sol.u.grid.h();
        let mut a = nalgebra::DMatrix::<f64>::zeros(m, m);
        for r in 0..m {
            a[(r, r)] = 2.0 / (h * h);
            if r + 1 < m {
                a[(r, r + 1)] = -1.0 / (h * h);
                a[(r + 1, r)] = -1.0 / (h * h);
            }
        }
        let eig = nalgebra::SymmetricEigen::new(a);
        let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_relative_eq!(sol.lambda1, min_eig, max_relative = 1e-3);
    }

    #[test]
    fn multiplier_shifts_linearly_in_the_self_weight() {
        let prm = base_params(3.0, 121);
        let (sol, _) = minimize_lambda(&prm).unwrap();
        let mut shifted = prm.clone();
        shifted.alpha += 0.5;
        let (l1a, l2a) = multipliers(&sol, &prm);
        let (l1b, l2b) = multipliers(&sol, &shifted);
        let h = sol.u.grid.h();
        let integral: f64 = sol
            .u
            .values
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let w = if j == 0 || j == prm.n - 1 { 0.5 } else { 1.0 };
                w * x.abs().powi(4)
            })
            .sum::<f64>()
            * h;
        assert_relative_eq!(l1b - l1a, 0.5 * integral, max_relative = 1e-10);
        assert_eq!(l2a, l2b);
    }

    #[test]
    fn stationarity_makes_the_equations_hold_with_the_recovered_multipliers() {
        let prm = base_params(100.0, 401);
        let (sol, _) = minimize_lambda(&prm).unwrap();
        let eps = *prm.eps_schedule.last().unwrap();
        let (gu, gv) = energy_gradient_lambda(&sol.u, &sol.v, &prm, eps);
        let h = sol.u.grid.h();
        let p = prm.p;
        let mut worst = 0.0f64;
        for j in 1..prm.n - 1 {
            let ru = gu[j] - sol.lambda1 * h * phi_p(sol.u.values[j], p);
            let rv = gv[j] - sol.lambda2 * h * phi_p(sol.v.values[j], p);
            worst = worst.max(ru.abs()).max(rv.abs());
        }
        assert!(worst <= 10.0 * prm.tol, "equation residual {worst:.3e}");
    }

    #[test]
    fn segregation_overlap_shrinks_with_the_coupling() {
        let overlap = |lambda: f64| -> f64 {
            let prm = base_params(lambda, 201);
            let (sol, _) = minimize_lambda(&prm).unwrap();
            let h = sol.u.grid.h();
            (0..prm.n)
                .map(|j| sol.u.values[j].powi(2) * sol.v.values[j].powi(2))
                .sum::<f64>()
                * h
        };
        let at_1 = overlap(1.0);
        let at_100 = overlap(100.0);
        assert!(
            at_100 < at_1,
            "overlap grew: {at_100:.3e} vs {at_1:.3e}"
        );
    }

    #[test]
    fn conserved_combination_is_flat_and_positive() {
        let prm = base_params(100.0, 801);
        let (sol, _) = minimize_lambda(&prm).unwrap();
        assert!(sol.t_lambda > 0.0, "level {:.3e}", sol.t_lambda);
        assert!(sol.t_drift <= 1e-2, "drift {:.3e}", sol.t_drift);
    }

    #[test]
    fn exchange_symmetry_swaps_the_components() {
        let grid = Grid::new(-1.0, 1.0, 121).unwrap();
        let bump_l = Profile::from_fn(grid, |x| ((0.5 - (x + 0.4).abs()).max(0.0)).powi(2)).unwrap();
        let bump_r = Profile::from_fn(grid, |x| ((0.5 - (x - 0.4).abs()).max(0.0)).powi(2)).unwrap();
        let mut prm = LambdaParams::new(2.0, 0.8, 1.7, 20.0, -1.0, 1.0, 121);
        prm.warm_start = Some((bump_l.clone(), bump_r.clone()));
        let (sol, _) = minimize_lambda(&prm).unwrap();

        let mut swapped = LambdaParams::new(2.0, 1.7, 0.8, 20.0, -1.0, 1.0, 121);
        swapped.warm_start = Some((bump_r, bump_l));
        let (sol_sw, _) = minimize_lambda(&swapped).unwrap();

        let mut gap = 0.0f64;
        for j in 0..prm.n {
            gap = gap.max((sol.u.values[j] - sol_sw.v.values[j]).abs());
            gap = gap.max((sol.v.values[j] - sol_sw.u.values[j]).abs());
        }
        assert!(gap <= 1e-8, "swapped run differs by {gap:.3e}");
        assert_relative_eq!(sol.lambda1, sol_sw.lambda2, max_relative = 1e-8);
        assert_relative_eq!(sol.lambda2, sol_sw.lambda1, max_relative = 1e-8);
    }

    #[test]
    fn interface_sits_at_the_center_for_symmetric_data() {
        let prm = base_params(100.0, 401);
        let (sol, _) = minimize_lambda(&prm).unwrap();
        let blow = blowup_extract(&sol, &prm, (-2.0, 2.0), 161).unwrap();
        assert!(blow.x_cross.abs() <= sol.u.grid.h(), "x {:.3e}", blow.x_cross);
        assert!(blow.m_cross > 0.0);
        assert_eq!(blow.crossings, 1);
        // The rescaled pair passes through height 1 at y = 0 by construction.
        let ygrid = blow.rescaled_u.grid;
        let at0 = (0..ygrid.n)
            .min_by(|&i, &j| {
                ygrid.x(i).abs().partial_cmp(&ygrid.x(j).abs()).unwrap()
            })
            .unwrap();
        assert_relative_eq!(blow.rescaled_u.values[at0], 1.0, epsilon = 0.05);
        assert_relative_eq!(blow.rescaled_v.values[at0], 1.0, epsilon = 0.05);
    }

    #[test]
    fn blowup_needs_a_sign_change() {
        let grid = Grid::new(-1.0, 1.0, 41).unwrap();
        let u = Profile::from_fn(grid, |x| 1.0 + (1.0 - x * x)).unwrap();
        let v = Profile::from_fn(grid, |x| 1.0 - x * x * 0.5).unwrap();
        let sol = LambdaSolution {
            p: 2.0,
            u,
            v,
            lambda1: f64::NAN,
            lambda2: f64::NAN,
            t_lambda: f64::NAN,
            t_drift: f64::NAN,
        };
        let prm = base_params(10.0, 41);
        let err = blowup_extract(&sol, &prm, (-2.0, 2.0), 81).unwrap_err();
        assert!(matches!(err, SolverError::NoCrossing(_)));
    }

    #[test]
    fn sweep_trends_with_growing_coupling() {
        let prob = crate::bvp::LimitProblem::new(2.0, 6.0, 301);
        let (pair, _) = crate::bvp::minimize_limit(&prob).unwrap();
        let template = base_params(1.0, 401);
        let report =
            lambda_sweep(&template, &[1e2, 1e3], &pair, (-1.5, 1.5), 201).unwrap();
        assert_eq!(report.format_version, 1);
        let [first, second] = &report.entries[..] else {
            panic!("expected two entries");
        };
        assert!(second.rescaled_distance <= first.rescaled_distance);
        assert!(second.edge_scale > first.edge_scale);
        assert!(second.m_cross < first.m_cross);
        assert!(first.t_lambda > 0.0 && second.t_lambda > 0.0);
        assert!(second.scale_invariant >= 0.5 * first.scale_invariant);
        assert!(second.scale_invariant <= 1.5 * first.scale_invariant);
        assert!(second.max_slope <= 2.0 * first.max_slope);
        assert_eq!(first.crossings, 1);

        let json = serde_json::to_string(&report).unwrap();
        for key in ["\"Lambda\"", "\"m_Lambda\"", "\"x_Lambda\"", "\"T_Lambda\"", "\"T_drift\""] {
            assert!(json.contains(key), "missing {key} in {json}");
        }
    }

    #[test]
    fn conserved_level_drift_shrinks_under_refinement() {
        let coarse = base_params(1e2, 801);
        let fine = base_params(1e2, 1601);
        let (sol_c, _) = minimize_lambda(&coarse).unwrap();
        let (sol_f, _) = minimize_lambda(&fine).unwrap();
        let ratio = sol_c.t_drift / sol_f.t_drift;
        assert!(
            (3.0..5.5).contains(&ratio),
            "drift ratio {ratio:.2} (coarse {:.3e}, fine {:.3e})",
            sol_c.t_drift,
            sol_f.t_drift
        );
        assert_relative_eq!(sol_c.t_lambda, sol_f.t_lambda, max_relative = 1e-3);
    }
}
