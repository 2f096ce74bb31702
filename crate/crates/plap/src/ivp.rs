//! Initial-value machinery for the scalar profile equation
//! `|y'|^{p-2} y'' = x^p |y|^{p-2} y` on the half line: a hybrid
//! integrator, the shooting construction of positive decaying solutions,
//! a scaling wrapper for barrier profiles, and a monotone relaxation that
//! rebuilds the decaying profile from a subsolution on a compact interval.
//!
//! The equation is advanced as the equivalent first-order system in
//! `(y, z = phi_p(y'))`, which is regular wherever `y'` stays away from 0;
//! where `|y'|` is tiny the solver crosses the zone with a fixed-point
//! window in integral form instead, which has no derivative singularity.

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::mesh::{fmt_f64, Grid, Profile};
use crate::numerics::{phi_p, phi_p_inv};

/// Below this |y'| the (y, z) system is treated as degenerate and the
/// solver crosses the zone with a fixed-point window.
pub const SLOPE_SWITCH: f64 = 1e-6;
/// |y| beyond this is reported as overflow of the numeric guard; the
/// underlying solutions are global, so this never means a true singularity.
pub const BLOW_UP_GUARD: f64 = 1e15;
/// A decaying trajectory must end at or below this value.
pub const DECAY_FLOOR: f64 = 1e-3;
/// Both |y| and |y'| at or below this continue as the zero solution.
const REST: f64 = 1e-300;
/// First trial length of a fixed-point window, in x units.
const WINDOW_START: f64 = 0.5;
/// Default node spacing used by the shooting routines.
const SHOOT_STEP: f64 = 1e-2;
/// Local error tolerance for trajectories driven by the shooting routines.
const SHOOT_TOL: f64 = 1e-10;
/// Absolute residual target for the compact-interval relaxation.
const PERRON_TOL: f64 = 1e-8;
const PERRON_MAX_SWEEPS: usize = 4_000_000;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IvpSpec {
    pub p: f64,
    pub x0: f64,
    pub y0: f64,
    pub y1: f64,
    pub x_max: f64,
    /// Output node spacing; the integrator substeps adaptively between nodes.
    pub step: f64,
    /// Local error tolerance per step, and the fixed-point stopping tolerance.
    pub tol: f64,
}

impl IvpSpec {
    pub fn validate(&self) -> Result<(), SolverError> {
        let all_finite = [self.p, self.x0, self.y0, self.y1, self.x_max, self.step, self.tol]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(SolverError::invalid_input("ivp spec has non-finite fields"));
        }
        if self.p <= 1.0 {
            return Err(SolverError::invalid_input(format!(
                "p must exceed 1, got {}",
                self.p
            )));
        }
        if self.x0 < 0.0 {
            return Err(SolverError::invalid_input("x0 must be nonnegative"));
        }
        if self.x_max <= self.x0 {
            return Err(SolverError::invalid_input("x_max must exceed x0"));
        }
        if self.step <= 0.0 || self.tol <= 0.0 {
            return Err(SolverError::invalid_input("step and tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajectoryStatus {
    ReachedXmax,
    IdenticallyZero,
    BlowUpDetected,
    SignClassifiedNegative,
}

impl TrajectoryStatus {
    pub fn code(self) -> u8 {
        match self {
            TrajectoryStatus::ReachedXmax => 0,
            TrajectoryStatus::IdenticallyZero => 1,
            TrajectoryStatus::BlowUpDetected => 2,
            TrajectoryStatus::SignClassifiedNegative => 3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub nodes: Vec<f64>,
    pub y: Vec<f64>,
    pub dy: Vec<f64>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    fn new(nodes: Vec<f64>, y: Vec<f64>, dy: Vec<f64>, status: TrajectoryStatus) -> Self {
        debug_assert_eq!(nodes.len(), y.len());
        debug_assert_eq!(nodes.len(), dy.len());
        debug_assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        Trajectory { nodes, y, dy, status }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,dy,status_code\n");
        let code = self.status.code();
        for i in 0..self.nodes.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_f64(self.nodes[i]),
                fmt_f64(self.y[i]),
                fmt_f64(self.dy[i]),
                code
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<(), SolverError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScaledShootingSpec {
    pub beta: f64,
    pub gamma: f64,
}

impl ScaledShootingSpec {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.beta.is_finite() && self.beta > 0.0 && self.gamma.is_finite() && self.gamma > 0.0)
        {
            return Err(SolverError::invalid_input("beta and gamma must be positive"));
        }
        Ok(())
    }
}

/// One application of the integral fixed-point map
/// `T(y)(x) = y0 + int phi_p_inv( phi_p(y1) + int (p-1) s^p phi_p(y(s)) ds ) dt`
/// on the window grid of `y`, with nested trapezoid quadrature.
pub fn picard_map(y: &Profile, spec: &IvpSpec) -> Profile {
    let g = y.grid;
    let h = g.h();
    let p = spec.p;
    let n = y.len();
    let integrand: Vec<f64> = (0..n)
        .map(|i| {
            let s = g.x(i);
            (p - 1.0) * s.powf(p) * phi_p(y.values[i], p)
        })
        .collect();
    let z1 = phi_p(spec.y1, p);
    let mut inner = 0.0;
    let mut slope_prev = phi_p_inv(z1, p);
    let mut vals = Vec::with_capacity(n);
    let mut acc = spec.y0;
    vals.push(acc);
    for i in 1..n {
        inner += 0.5 * h * (integrand[i - 1] + integrand[i]);
        let slope = phi_p_inv(z1 + inner, p);
        acc += 0.5 * h * (slope_prev + slope);
        vals.push(acc);
        slope_prev = slope;
    }
    Profile::new(g, vals).expect("fixed-point map keeps values finite")
}

/// Slopes of a converged fixed point, from the same inner integral the map
/// uses; exact for the fixed point, not a finite difference.
fn window_slopes(y: &Profile, spec: &IvpSpec) -> Vec<f64> {
    let g = y.grid;
    let h = g.h();
    let p = spec.p;
    let n = y.len();
    let z1 = phi_p(spec.y1, p);
    let mut inner = 0.0;
    let mut slopes = Vec::with_capacity(n);
    slopes.push(phi_p_inv(z1, p));
    let wt = |i: usize| {
        let s = g.x(i);
        (p - 1.0) * s.powf(p) * phi_p(y.values[i], p)
    };
    let mut prev = wt(0);
    for i in 1..n {
        let cur = wt(i);
        inner += 0.5 * h * (prev + cur);
        slopes.push(phi_p_inv(z1 + inner, p));
        prev = cur;
    }
    slopes
}

/// Iterate the fixed-point map on `[x0, x0 + delta]` until the sup change
/// drops below `spec.tol`. Returns the profile, the iteration count, and the
/// largest observed contraction ratio.
pub fn picard_solve_local(
    spec: &IvpSpec,
    delta: f64,
) -> Result<(Profile, usize, f64), SolverError> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SolverError::invalid_input("window length must be positive"));
    }
    let k = ((delta / spec.step).round() as usize).max(1);
    let m = ((spec.step / spec.tol.sqrt()).ceil() as usize).clamp(1, 4096);
    let n = k * m + 1;
    let grid = Grid::new(spec.x0, spec.x0 + delta, n)?;
    let mut cur =
        Profile::from_fn(grid, |x| spec.y0 + spec.y1 * (x - spec.x0)).expect("affine start");
    let mut prev_diff = f64::INFINITY;
    let mut ratio_max = 0.0f64;
    let mut bad_streak = 0usize;
    let mut last_ratio = f64::INFINITY;
    for it in 1..=500 {
        let next = picard_map(&cur, spec);
        let diff = cur
            .values
            .iter()
            .zip(&next.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        cur = next;
        if prev_diff.is_finite() && prev_diff > 0.0 {
            last_ratio = diff / prev_diff;
            ratio_max = ratio_max.max(last_ratio);
            if last_ratio >= 1.0 {
                bad_streak += 1;
                if bad_streak == 3 {
                    return Err(SolverError::NoContraction {
                        ratio: last_ratio,
                        window: delta,
                    });
                }
            } else {
                bad_streak = 0;
            }
        }
        if diff <= spec.tol {
            return Ok((cur, it, ratio_max));
        }
        prev_diff = diff;
    }
    Err(SolverError::NoContraction {
        ratio: last_ratio,
        window: delta,
    })
}

fn deriv(p: f64, x: f64, y: f64, z: f64) -> (f64, f64) {
    (phi_p_inv(z, p), (p - 1.0) * x.powf(p) * phi_p(y, p))
}

fn rk4_once(p: f64, x: f64, y: f64, z: f64, h: f64) -> (f64, f64) {
    let (k1y, k1z) = deriv(p, x, y, z);
    let (k2y, k2z) = deriv(p, x + 0.5 * h, y + 0.5 * h * k1y, z + 0.5 * h * k1z);
    let (k3y, k3z) = deriv(p, x + 0.5 * h, y + 0.5 * h * k2y, z + 0.5 * h * k2z);
    let (k4y, k4z) = deriv(p, x + h, y + h * k3y, z + h * k3z);
    (
        y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y),
        z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z),
    )
}

/// Advance (y, z) adaptively to `x_target` with step-doubling error control.
/// Returns true if the blow-up guard tripped (state left at the last
/// accepted point).
fn advance_regular(
    p: f64,
    x: &mut f64,
    y: &mut f64,
    z: &mut f64,
    h: &mut f64,
    x_target: f64,
    tol: f64,
    span: f64,
) -> Result<bool, SolverError> {
    loop {
        let remaining = x_target - *x;
        if remaining <= 1e-14 * span {
            *x = x_target;
            return Ok(false);
        }
        let hs = h.min(remaining);
        let (yf, zf) = rk4_once(p, *x, *y, *z, hs);
        let (ya, za) = rk4_once(p, *x, *y, *z, 0.5 * hs);
        let (yb, zb) = rk4_once(p, *x + 0.5 * hs, ya, za, 0.5 * hs);
        let finite = yf.is_finite() && zf.is_finite() && yb.is_finite() && zb.is_finite();
        let err = if finite {
            let ey = (yb - yf).abs() / (1.0 + yb.abs());
            let ez = (zb - zf).abs() / (1.0 + zb.abs());
            ey.max(ez) / 15.0
        } else {
            f64::INFINITY
        };
        if err <= tol {
            *x += hs;
            *y = yb + (yb - yf) / 15.0;
            *z = zb + (zb - zf) / 15.0;
            if !(y.is_finite() && z.is_finite()) || y.abs() > BLOW_UP_GUARD {
                return Ok(true);
            }
            let fac = (0.9 * (tol / err.max(1e-300)).powf(0.2)).clamp(1.0, 4.0);
            *h = hs * fac;
        } else {
            *h = hs * (0.9 * (tol / err).powf(0.2)).max(0.1);
        }
        if *h < 1e-12 * span {
            return Err(SolverError::StepUnderflow { x: *x, step: *h });
        }
    }
}

/// Integrate the initial-value problem across `[x0, x_max]`, switching
/// between the regular (y, z) system and fixed-point windows in degenerate
/// zones, with rest-point and overflow detection.
pub fn ivp_solve(spec: &IvpSpec) -> Result<Trajectory, SolverError> {
    spec.validate()?;
    let span = spec.x_max - spec.x0;
    let n_out = ((span / spec.step).ceil() as usize).max(1) + 1;
    let h_out = span / (n_out - 1) as f64;
    let out_node = |i: usize| {
        if i == n_out - 1 {
            spec.x_max
        } else {
            spec.x0 + i as f64 * h_out
        }
    };

    let mut nodes = Vec::with_capacity(n_out);
    let mut ys = Vec::with_capacity(n_out);
    let mut dys = Vec::with_capacity(n_out);
    nodes.push(spec.x0);
    ys.push(spec.y0);
    dys.push(spec.y1);

    let mut x = spec.x0;
    let mut y = spec.y0;
    let mut dy = spec.y1;
    let mut h = h_out;
    let mut status = None;
    let mut i_next = 1usize;

    while i_next < n_out {
        if y.abs() <= REST && dy.abs() <= REST {
            for i in i_next..n_out {
                nodes.push(out_node(i));
                ys.push(0.0);
                dys.push(0.0);
            }
            status = Some(TrajectoryStatus::IdenticallyZero);
            break;
        }
        if dy.abs() < SLOPE_SWITCH {
            let cells_left = n_out - i_next;
            let mut k = ((WINDOW_START / h_out).round() as usize).clamp(1, cells_left);
            loop {
                let x_end = out_node(i_next - 1 + k);
                let wspec = IvpSpec {
                    x0: x,
                    y0: y,
                    y1: dy,
                    x_max: x_end,
                    step: h_out,
                    ..*spec
                };
                match picard_solve_local(&wspec, x_end - x) {
                    Ok((prof, _, _)) => {
                        let slopes = window_slopes(&prof, &wspec);
                        let m = (prof.len() - 1) / k;
                        for j in 1..=k {
                            nodes.push(out_node(i_next - 1 + j));
                            ys.push(prof.values[j * m]);
                            dys.push(slopes[j * m]);
                        }
                        i_next += k;
                        x = *nodes.last().unwrap();
                        y = *ys.last().unwrap();
                        dy = *dys.last().unwrap();
                        break;
                    }
                    Err(SolverError::NoContraction { .. }) if k > 1 => k /= 2,
                    Err(e) => return Err(e),
                }
            }
            if y.abs() > BLOW_UP_GUARD {
                status = Some(TrajectoryStatus::BlowUpDetected);
                break;
            }
            continue;
        }
        let x_target = out_node(i_next);
        let mut z = phi_p(dy, spec.p);
        let blown = advance_regular(
            spec.p, &mut x, &mut y, &mut z, &mut h, x_target, spec.tol, span,
        )?;
        if blown {
            status = Some(TrajectoryStatus::BlowUpDetected);
            break;
        }
        dy = phi_p_inv(z, spec.p);
        nodes.push(x_target);
        ys.push(y);
        dys.push(dy);
        i_next += 1;
    }

    let status = status.unwrap_or_else(|| {
        if ys.iter().all(|&v| v <= 0.0) {
            TrajectoryStatus::SignClassifiedNegative
        } else {
            TrajectoryStatus::ReachedXmax
        }
    });
    Ok(Trajectory::new(nodes, ys, dys, status))
}

/// Which side of the decaying dichotomy a shot trajectory falls on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShotClass {
    /// Touches or crosses zero: the shot started too low.
    Crosses,
    /// Turns increasing while still positive: the shot started too high.
    TurnsUp,
    /// Positive and decreasing all the way to the far end.
    Undecided,
}

pub fn classify_shot(t: &Trajectory) -> ShotClass {
    for i in 0..t.nodes.len() {
        if t.y[i] <= 0.0 {
            return ShotClass::Crosses;
        }
        if i > 0 && t.dy[i] >= 0.0 {
            return ShotClass::TurnsUp;
        }
    }
    match t.status {
        TrajectoryStatus::BlowUpDetected => ShotClass::TurnsUp,
        _ => ShotClass::Undecided,
    }
}

fn dw(p: f64, x: f64, w: f64) -> f64 {
    x.powf(p) * w.abs().powf(2.0 - p) - w * w
}

fn rk4_w(p: f64, x: f64, w: f64, h: f64) -> f64 {
    let k1 = dw(p, x, w);
    let k2 = dw(p, x + 0.5 * h, w + 0.5 * h * k1);
    let k3 = dw(p, x + 0.5 * h, w + 0.5 * h * k2);
    let k4 = dw(p, x + h, w + h * k3);
    w + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Rebuild the far tail of a nearly decaying trajectory from the
/// log-derivative equation `w' = x^p |w|^{2-p} - w^2`, `w = y'/y`.
///
/// Forward in x the decaying branch `w ~ -x` repels nearby trajectories, so
/// direct integration of a bisection result departs from the decaying
/// solution once the bracket error is amplified past O(1). Backward in x the
/// same branch attracts, so integrating w from the far end toward the body
/// of the trajectory and rebuilding `y = y(x_e) exp(int w)` gives a tail
/// that is decaying to machine accuracy.
fn stabilize_tail(p: f64, t: &Trajectory, x_far: f64) -> Result<Trajectory, SolverError> {
    let n = t.nodes.len();
    if n < 3 {
        return Err(SolverError::WindowTooSmall(
            "trajectory too short to continue".into(),
        ));
    }
    let h = t.nodes[1] - t.nodes[0];
    let mut clean = 0usize;
    for i in 0..n {
        if t.y[i] > 0.0 && (i == 0 || t.dy[i] < 0.0) {
            clean = i;
        } else {
            break;
        }
    }
    if t.nodes[clean] < 1.0 {
        return Err(SolverError::WindowTooSmall(format!(
            "trajectory leaves the positive decreasing cone at x = {:.3}",
            t.nodes[clean]
        )));
    }
    // Stitch while the bisection trajectory is still sharp; the forward
    // error amplification exp(p x^2 / 2) is what bounds this from above.
    let x_switch = 2.5f64.min(t.nodes[clean]);
    let i_e = ((x_switch - t.nodes[0]) / h).floor() as usize;
    let i_e = i_e.min(clean);
    let x_e = t.nodes[i_e];
    let n_tail = ((x_far - x_e) / h).round() as usize;
    if n_tail == 0 {
        return Ok(t.clone());
    }

    let mut w = vec![0.0; n_tail + 1];
    w[n_tail] = -x_far - 1.0 / (p * x_far);
    for k in (0..n_tail).rev() {
        let mut wk = w[k + 1];
        let mut xx = if k + 1 == n_tail { x_far } else { x_e + (k + 1) as f64 * h };
        let sub = 0.25 * h;
        for _ in 0..4 {
            wk = rk4_w(p, xx, wk, -sub);
            xx -= sub;
        }
        w[k] = wk;
    }

    let mut nodes = t.nodes[..=i_e].to_vec();
    let mut ys = t.y[..=i_e].to_vec();
    let mut dys = t.dy[..=i_e].to_vec();
    let mut ycur = ys[i_e];
    for k in 1..=n_tail {
        ycur *= (0.5 * h * (w[k - 1] + w[k])).exp();
        let xk = if k == n_tail { x_far } else { x_e + k as f64 * h };
        nodes.push(xk);
        ys.push(ycur);
        dys.push(w[k] * ycur);
    }
    Ok(Trajectory::new(nodes, ys, dys, TrajectoryStatus::ReachedXmax))
}

/// Full shooting driver; `step` controls the output node spacing of the
/// returned trajectory. Returns (y at 0, trajectory, classification count).
pub fn shoot_decaying_with_step(
    p: f64,
    y1: f64,
    x_far: f64,
    bracket: (f64, f64),
    tol: f64,
    step: f64,
) -> Result<(f64, Trajectory, usize), SolverError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(SolverError::invalid_input("p must exceed 1"));
    }
    if !(y1 < 0.0 && y1.is_finite()) {
        return Err(SolverError::invalid_input(
            "initial slope must be strictly negative",
        ));
    }
    if !(x_far > 0.0 && tol > 0.0 && step > 0.0) {
        return Err(SolverError::invalid_input(
            "x_far, tol and step must be positive",
        ));
    }
    let (blo, bhi) = bracket;
    if !(blo > 0.0 && bhi > blo) {
        return Err(SolverError::BracketInvalid(format!(
            "need 0 < lo < hi, got ({blo}, {bhi})"
        )));
    }
    let run = |y0: f64| {
        ivp_solve(&IvpSpec {
            p,
            x0: 0.0,
            y0,
            y1,
            x_max: x_far,
            step,
            tol: SHOOT_TOL,
        })
    };
    let mut count = 0usize;
    let mut classify_at = |y0: f64| -> Result<ShotClass, SolverError> {
        count += 1;
        Ok(classify_shot(&run(y0)?))
    };
    let c_lo = classify_at(blo)?;
    let c_hi = classify_at(bhi)?;
    let (mut lo, mut hi) = match (c_lo, c_hi) {
        (ShotClass::Crosses, ShotClass::TurnsUp) => (blo, bhi),
        (ShotClass::TurnsUp, ShotClass::Crosses) => (bhi, blo),
        (ShotClass::Crosses, ShotClass::Crosses)
        | (ShotClass::TurnsUp, ShotClass::TurnsUp)
        | (ShotClass::Undecided, ShotClass::Undecided) => {
            return Err(SolverError::BracketInvalid(format!(
                "both bracket endpoints classify as {c_lo:?}"
            )))
        }
        // One endpoint already rode the decaying branch to the far end.
        (ShotClass::Undecided, _) => (blo, blo),
        (_, ShotClass::Undecided) => (bhi, bhi),
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol * mid.abs() {
            break;
        }
        count += 1;
        match classify_shot(&run(mid)?) {
            ShotClass::Crosses => lo = mid,
            ShotClass::TurnsUp => hi = mid,
            ShotClass::Undecided => {
                lo = mid;
                hi = mid;
                break;
            }
        }
    }
    let y0_star = 0.5 * (lo + hi);
    count += 1;
    let raw = run(y0_star)?;
    let traj = stabilize_tail(p, &raw, x_far)?;
    let y_end = *traj.y.last().unwrap();
    if !(y_end <= DECAY_FLOOR) {
        return Err(SolverError::WindowTooSmall(format!(
            "far end value {y_end:.3e} above the decay floor; extend x_far"
        )));
    }
    Ok((y0_star, traj, count))
}

/// Find the initial value whose trajectory decays: bisection on the
/// crosses/turns-up dichotomy, then a stabilized rebuild of the far tail.
pub fn shoot_decaying(
    p: f64,
    y1: f64,
    x_far: f64,
    bracket: (f64, f64),
    tol: f64,
) -> Result<(f64, Trajectory), SolverError> {
    let (y0, t, _) = shoot_decaying_with_step(p, y1, x_far, bracket, tol, SHOOT_STEP)?;
    Ok((y0, t))
}

/// Decaying profile with prescribed initial slope `-gamma`, solving the
/// equation with weight `beta^p x^p`.
///
/// Rescales the unit-slope decaying profile W as `x -> A W(B x)`. Pushing
/// A W(Bx) through the equation multiplies the left side by A^{p-1} B^p and
/// the weight's argument contributes another B^p, so matching weight beta^p
/// forces B = sqrt(beta), and the slope condition A B = gamma then gives
/// A = gamma / sqrt(beta).
pub fn scaled_decaying(spec: &ScaledShootingSpec, p: f64) -> Result<Trajectory, SolverError> {
    spec.validate()?;
    let b = spec.beta.sqrt();
    let x_far = 10.0 * b.max(1.0);
    let step = SHOOT_STEP * b.min(1.0);
    let (_, w, _) = shoot_decaying_with_step(p, -1.0, x_far, (1e-4, 1e4), 1e-10, step)?;
    let scale = spec.gamma / b;
    let nodes: Vec<f64> = w.nodes.iter().map(|t| t / b).collect();
    let ys: Vec<f64> = w.y.iter().map(|v| scale * v).collect();
    let dys: Vec<f64> = w.dy.iter().map(|v| spec.gamma * v).collect();
    Ok(Trajectory::new(nodes, ys, dys, w.status))
}

/// The subsolution anchoring the compact-interval construction.
pub fn perron_subsolution(x: f64) -> f64 {
    (-(x * x + 2.0 * x)).exp()
}

/// Local equilibrium residual of the divergence-form discretization at an
/// interior node, given its neighbors: strictly decreasing in t.
fn perron_local_residual(p: f64, h: f64, x: f64, left: f64, right: f64, t: f64) -> f64 {
    (phi_p((right - t) / h, p) - phi_p((t - left) / h, p)) / h
        - (p - 1.0) * x.powf(p) * phi_p(t, p)
}

fn perron_local_solve(p: f64, h: f64, x: f64, left: f64, right: f64) -> f64 {
    if p == 2.0 {
        return (left + right) / (2.0 + h * h * x * x);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // F(0) > 0 > F(1) whenever neighbors are in (0, 1]; bisection is safe and
    // the safeguarded Newton step just accelerates it.
    let mut t = 0.5 * (left + right);
    for _ in 0..80 {
        let f = perron_local_residual(p, h, x, left, right, t);
        if f > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let a = ((right - t) / h).abs().powf(p - 2.0);
        let b = ((t - left) / h).abs().powf(p - 2.0);
        let fp = -(p - 1.0) * ((a + b) / h + h * x.powf(p) * t.abs().powf(p - 2.0));
        let newton = t - f / fp;
        t = if fp.is_finite() && fp < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 1e-16 {
            break;
        }
    }
    t
}

/// Build the decaying profile on `[0, R]` by monotone relaxation upward from
/// the subsolution, with boundary values 1 at 0 and the subsolution at R.
/// Returns the profile and the sweep count.
pub fn perron_construct(p: f64, r: f64, n: usize) -> Result<(Profile, usize), SolverError> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(SolverError::invalid_input("p must exceed 1"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(SolverError::invalid_input("R must be positive"));
    }
    let grid = Grid::new(0.0, r, n)?;
    let h = grid.h();
    let mut y: Vec<f64> = grid.nodes().iter().map(|&x| perron_subsolution(x)).collect();
    let mut change = f64::INFINITY;
    for sweep in 1..=PERRON_MAX_SWEEPS {
        change = 0.0;
        for i in 1..n - 1 {
            let t = perron_local_solve(p, h, grid.x(i), y[i - 1], y[i + 1]);
            change = change.max((t - y[i]).abs());
            y[i] = t;
        }
        for i in (1..n - 1).rev() {
            let t = perron_local_solve(p, h, grid.x(i), y[i - 1], y[i + 1]);
            change = change.max((t - y[i]).abs());
            y[i] = t;
        }
        if sweep % 64 == 0 || change < PERRON_TOL * h * h {
            let res = (1..n - 1).fold(0.0f64, |m, i| {
                m.max(perron_local_residual(p, h, grid.x(i), y[i - 1], y[i + 1], y[i]).abs())
            });
            if res <= PERRON_TOL {
                return Ok((Profile::new(grid, y)?, sweep));
            }
        }
    }
    Err(SolverError::NoConvergence {
        sweeps: PERRON_MAX_SWEEPS,
        change,
    })
}
