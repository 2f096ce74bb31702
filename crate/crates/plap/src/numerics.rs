//! Scalar kernels shared by every solver: the odd power nonlinearity and its
//! inverse, its regularization, finite differences, quadrature, and monotone
//! interpolation.
//!
//! Sign conventions matter more than speed here. `phi_p` and `phi_p_inv` are
//! exactly odd (computed from `|s|` and the sign bit), so trajectories of odd
//! initial data negate bit-for-bit.

use crate::error::SolverError;
use crate::mesh::Profile;

/// `phi_p(s) = |s|^{p-2} s`, extended by continuity with `phi_p(0) = 0`.
#[inline]
pub fn phi_p(s: f64, p: f64) -> f64 {
    if s == 0.0 || p == 2.0 {
        s
    } else {
        s.signum() * s.abs().powf(p - 1.0)
    }
}

/// Inverse of `phi_p`: `|z|^{1/(p-1) - 1} z`, with `0 -> 0`.
#[inline]
pub fn phi_p_inv(z: f64, p: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        z.signum() * z.abs().powf(1.0 / (p - 1.0))
    }
}

/// Regularized nonlinearity `(s^2 + eps^2)^{(p-2)/2} s`.
///
/// Coincides with `phi_p` at `eps = 0` (including `s = 0`, where the limit is
/// taken first so no `0 * inf` appears for p < 2).
#[inline]
pub fn phi_p_reg(s: f64, p: f64, eps: f64) -> f64 {
    if s == 0.0 || p == 2.0 {
        s
    } else {
        (s * s + eps * eps).powf((p - 2.0) / 2.0) * s
    }
}

/// Forward differences `(f_{i+1} - f_i)/h`: one slope per cell, length n-1.
pub fn diff_forward(f: &Profile) -> Vec<f64> {
    let h = f.grid.h();
    f.values.windows(2).map(|w| (w[1] - w[0]) / h).collect()
}

/// Central differences at interior nodes, second-order one-sided at the two
/// boundary nodes. Length n.
pub fn diff_central(f: &Profile) -> Vec<f64> {
    let h = f.grid.h();
    let v = &f.values;
    let n = v.len();
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    d
}

/// Trapezoid rule over node values.
pub fn quad_trapezoid(values: &[f64], h: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let sum: f64 = values.iter().sum();
    h * (sum - 0.5 * (values[0] + values[values.len() - 1]))
}

/// Midpoint rule over cell values.
pub fn quad_midpoint(cell_values: &[f64], h: f64) -> f64 {
    h * cell_values.iter().sum::<f64>()
}

/// `(integral of |f|^p)^{1/p}` with the trapezoid rule.
pub fn lp_norm(f: &Profile, p: f64) -> f64 {
    let powered: Vec<f64> = f.values.iter().map(|v| v.abs().powf(p)).collect();
    quad_trapezoid(&powered, f.grid.h()).powf(1.0 / p)
}

/// Thomas elimination for a tridiagonal system. `sub` and `sup` have length
/// `n - 1`; the matrix must not need pivoting (diagonally dominant or SPD).
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 1 {
        return vec![rhs[0] / diag[0]];
    }
    debug_assert!(sub.len() == n - 1 && sup.len() == n - 1 && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = sup[i] / denom;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}

/// Monotone cubic (Fritsch-Carlson) interpolant on strictly increasing nodes.
///
/// Used to resample profiles onto rescaled coordinates without overshooting;
/// monotone data stay monotone. Evaluation clamps to the node range.
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>, // node derivatives
}

impl MonotoneCubic {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self, SolverError> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(SolverError::invalid_input(
                "interpolation needs matching xs/ys with at least 2 nodes",
            ));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SolverError::invalid_input(
                "interpolation nodes must be strictly increasing",
            ));
        }
        let n = xs.len();
        let mut slopes = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            slopes.push((ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]));
        }
        let mut ds = vec![0.0; n];
        ds[0] = slopes[0];
        ds[n - 1] = slopes[n - 2];
        for i in 1..n - 1 {
            // Harmonic-mean limiter: zero at local extrema, no overshoot.
            let (s0, s1) = (slopes[i - 1], slopes[i]);
            if s0 * s1 <= 0.0 {
                ds[i] = 0.0;
            } else {
                let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
                let w0 = 2.0 * h1 + h0;
                let w1 = h1 + 2.0 * h0;
                ds[i] = (w0 + w1) / (w0 / s0 + w1 / s1);
            }
        }
        Ok(MonotoneCubic {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            ds,
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let xs = &self.xs;
        let n = xs.len();
        if x <= xs[0] {
            return self.ys[0];
        }
        if x >= xs[n - 1] {
            return self.ys[n - 1];
        }
        let k = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.ys[i],
            Err(i) => i - 1,
        };
        let h = xs[k + 1] - xs[k];
        let t = (x - xs[k]) / h;
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        let (d0, d1) = (self.ds[k], self.ds[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Grid;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn tridiagonal_solver_inverts_a_laplacian_system() {
        // -x'' = 1 on 6 interior nodes, zero boundary: x_i = i(n+1-i)/2 * h^2.
        let n = 6;
        let sub = vec![-1.0; n - 1];
        let sup = vec![-1.0; n - 1];
        let diag = vec![2.0; n];
        let rhs = vec![1.0; n];
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs);
        for i in 0..n {
            let k = (i + 1) as f64;
            let expect = 0.5 * k * (n as f64 + 1.0 - k);
            assert_relative_eq!(x[i], expect, max_relative = 1e-12);
        }
        let single = solve_tridiagonal(&[], &[4.0], &[], &[2.0]);
        assert_eq!(single, vec![0.5]);
    }

    #[test]
    fn phi_p_values() {
        assert_eq!(phi_p(2.0, 3.0), 4.0);
        assert_eq!(phi_p(0.0, 1.5), 0.0);
        assert_relative_eq!(
            phi_p(-0.5, 1.5),
            -0.70710678118654752,
            max_relative = 1e-15
        );
    }

    #[test]
    fn phi_p_reg_values() {
        assert_eq!(phi_p_reg(1.0, 2.0, 0.1), 1.0);
        assert_eq!(phi_p_reg(0.0, 1.5, 0.01), 0.0);
        // (3^2 + 4^2)^{1/2} * 3 = 15
        assert_relative_eq!(phi_p_reg(3.0, 3.0, 4.0), 15.0, max_relative = 1e-14);
    }

    #[test]
    fn phi_p_reg_matches_phi_p_at_eps_zero() {
        for &p in &[1.2, 1.5, 2.0, 3.0, 4.0] {
            for &s in &[-2.0, -1e-3, 0.0, 1e-6, 0.5, 10.0] {
                assert_eq!(phi_p_reg(s, p, 0.0), phi_p(s, p), "p={p} s={s}");
            }
        }
    }

    #[test]
    fn phi_p_reg_eps_convergence() {
        // eps = 1e-8 stays within 1e-6 relative of phi_p for |s| >= 1e-2.
        for &p in &[1.2, 1.5, 2.0, 3.0, 4.0] {
            for k in 0..200 {
                let s = 1e-2 * 10f64.powf(k as f64 * 8.0 / 199.0);
                for s in [s, -s] {
                    let exact = phi_p(s, p);
                    let reg = phi_p_reg(s, p, 1e-8);
                    assert!(
                        ((reg - exact) / exact).abs() <= 1e-6,
                        "p={p} s={s}: {reg} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn inverse_round_trip_log_spaced() {
        for &p in &[1.2, 1.5, 2.0, 3.0, 4.0] {
            for k in 0..=120 {
                let s = 1e-6 * 10f64.powf(k as f64 / 10.0);
                for s in [s, -s] {
                    let rt = phi_p_inv(phi_p(s, p), p);
                    assert!(
                        ((rt - s) / s).abs() <= 1e-12,
                        "p={p} s={s}: round trip {rt}"
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn phi_p_is_odd_and_monotone(s in -1e3f64..1e3, t in -1e3f64..1e3, p in 1.1f64..4.0) {
            prop_assert_eq!(phi_p(-s, p), -phi_p(s, p));
            if s < t {
                prop_assert!(phi_p(s, p) <= phi_p(t, p));
            }
        }
    }

    #[test]
    fn forward_differences() {
        let g = Grid::new(0.0, 1.0, 11).unwrap();
        let c = Profile::from_fn(g, |_| 3.5).unwrap();
        assert!(diff_forward(&c).iter().all(|&d| d == 0.0));
        let lin = Profile::from_fn(g, |x| x).unwrap();
        for d in diff_forward(&lin) {
            assert_relative_eq!(d, 1.0, max_relative = 1e-12);
        }
        // (x_{i+1}^2 - x_i^2)/h = 2 x_i + h exactly.
        let sq = Profile::from_fn(g, |x| x * x).unwrap();
        let h = g.h();
        for (i, d) in diff_forward(&sq).iter().enumerate() {
            assert_relative_eq!(*d, 2.0 * g.x(i) + h, max_relative = 1e-12);
        }
    }

    #[test]
    fn central_differences_exact_on_quadratics() {
        let g = Grid::new(-1.0, 1.0, 21).unwrap();
        let sq = Profile::from_fn(g, |x| x * x).unwrap();
        for (i, d) in diff_central(&sq).iter().enumerate() {
            assert_relative_eq!(*d, 2.0 * g.x(i), epsilon = 1e-12);
        }
    }

    #[test]
    fn trapezoid_exact_on_affine() {
        let g = Grid::new(0.0, 1.0, 101).unwrap();
        let one = Profile::from_fn(g, |_| 1.0).unwrap();
        assert_relative_eq!(quad_trapezoid(&one.values, g.h()), 1.0, max_relative = 1e-14);
        let lin = Profile::from_fn(g, |x| x).unwrap();
        assert_relative_eq!(quad_trapezoid(&lin.values, g.h()), 0.5, max_relative = 1e-14);
    }

    #[test]
    fn midpoint_exact_on_affine() {
        let g = Grid::new(0.0, 1.0, 101).unwrap();
        let h = g.h();
        let mids: Vec<f64> = (0..g.n - 1).map(|i| g.x(i) + 0.5 * h).collect();
        assert_relative_eq!(quad_midpoint(&mids, h), 0.5, max_relative = 1e-13);
        let ones = vec![1.0; g.n - 1];
        assert_relative_eq!(quad_midpoint(&ones, h), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn trapezoid_on_x_squared() {
        let g = Grid::new(0.0, 1.0, 101).unwrap();
        let sq = Profile::from_fn(g, |x| x * x).unwrap();
        let err = (quad_trapezoid(&sq.values, g.h()) - 1.0 / 3.0).abs();
        assert!(err <= 2e-5, "error {err}");
    }

    #[test]
    fn trapezoid_second_order() {
        // Halving h cuts the x^2 error by 4 within 5 percent.
        let err = |n: usize| {
            let g = Grid::new(0.0, 1.0, n).unwrap();
            let sq = Profile::from_fn(g, |x| x * x).unwrap();
            (quad_trapezoid(&sq.values, g.h()) - 1.0 / 3.0).abs()
        };
        let ratio = err(51) / err(101);
        assert!((ratio - 4.0).abs() <= 0.2, "ratio {ratio}");
    }

    #[test]
    fn lp_norm_values() {
        let g = Grid::new(0.0, 1.0, 1001).unwrap();
        let one = Profile::from_fn(g, |_| 1.0).unwrap();
        assert_relative_eq!(lp_norm(&one, 2.5), 1.0, max_relative = 1e-12);
        assert_eq!(lp_norm(&Profile::zeros(g), 3.0), 0.0);
        let lin = Profile::from_fn(g, |x| x).unwrap();
        let expect = 0.25f64.powf(1.0 / 3.0);
        assert!((lp_norm(&lin, 3.0) - expect).abs() <= 1e-4);
    }

    #[test]
    fn monotone_cubic_preserves_monotonicity_and_interpolates() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| (-x * x).exp()).collect();
        let interp = MonotoneCubic::new(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_relative_eq!(interp.eval(*x), *y, max_relative = 1e-14);
        }
        let mut prev = f64::INFINITY;
        for k in 0..=500 {
            let v = interp.eval(xs[0] + k as f64 * (xs[19] - xs[0]) / 500.0);
            assert!(v <= prev + 1e-15, "not monotone at sample {k}");
            prev = v;
        }
    }
}
