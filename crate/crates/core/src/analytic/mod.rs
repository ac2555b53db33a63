//! Closed forms and ODE solutions for the stable branching mechanism ψ(λ) = λ^γ.

mod gamma_fn;

pub use gamma_fn::{gamma as gamma_fn, ln_gamma};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_gamma, domain, Error, Result};

/// Default ODE step in height units.
pub const DEFAULT_STEP: f64 = 1e-4;
/// Tolerance on the step-doubling local error estimate.
pub const STEP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    pub gamma: f64,
}

impl AnalyticParams {
    pub fn new(gamma: f64) -> Result<Self> {
        check_gamma("AnalyticParams", gamma)?;
        Ok(Self { gamma })
    }

    pub fn psi(&self, lambda: f64) -> f64 {
        lambda.powf(self.gamma)
    }

    pub fn psi_prime(&self, lambda: f64) -> f64 {
        self.gamma * lambda.powf(self.gamma - 1.0)
    }
}

fn check_nonneg(op: &'static str, name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && !x.is_nan() {
        Ok(())
    } else {
        Err(domain(op, format!("{name}={x} must be ≥ 0")))
    }
}

fn check_finite_nonneg(op: &'static str, name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(domain(op, format!("{name}={x} must be finite and ≥ 0")))
    }
}

/// u(t,λ) = ((γ−1)t + λ^{1−γ})^{−1/(γ−1)}; `lambda = f64::INFINITY` gives v(t).
pub fn csbp_u(gamma: f64, t: f64, lambda: f64) -> Result<f64> {
    check_gamma("csbp_u", gamma)?;
    check_finite_nonneg("csbp_u", "t", t)?;
    check_nonneg("csbp_u", "lambda", lambda)?;
    if t == 0.0 {
        return Ok(lambda);
    }
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let al = gamma - 1.0;
    let base = al * t + lambda.powf(-al);
    Ok(base.powf(-1.0 / al))
}

fn rk4_u(gamma: f64, u: f64, h: f64) -> f64 {
    let f = |x: f64| -x.max(0.0).powf(gamma);
    let k1 = f(u);
    let k2 = f(u + 0.5 * h * k1);
    let k3 = f(u + 0.5 * h * k2);
    let k4 = f(u + h * k3);
    u + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn integrate_u(gamma: f64, t: f64, lambda: f64, n: usize) -> f64 {
    let h = t / n as f64;
    let mut u = lambda;
    for _ in 0..n {
        u = rk4_u(gamma, u, h);
    }
    u
}

/// RK4 integration of u′ = −u^γ from u(0) = λ, Richardson-extrapolated against the half step.
pub fn csbp_u_ode(gamma: f64, t: f64, lambda: f64, step: f64) -> Result<f64> {
    check_gamma("csbp_u_ode", gamma)?;
    check_finite_nonneg("csbp_u_ode", "t", t)?;
    check_finite_nonneg("csbp_u_ode", "lambda", lambda)?;
    if !(step > 0.0) {
        return Err(domain("csbp_u_ode", format!("step={step} must be > 0")));
    }
    if t == 0.0 {
        return Ok(lambda);
    }
    let n = (t / step).ceil().max(1.0) as usize;
    let coarse = integrate_u(gamma, t, lambda, n);
    let fine = integrate_u(gamma, t, lambda, 2 * n);
    let est = (fine - coarse) / 15.0;
    let scale = fine.abs().max(1.0);
    if est.abs() > 1e-6 * scale {
        return Err(Error::StepRejected {
            estimate: est.abs(),
            tol: 1e-6 * scale,
        });
    }
    Ok(fine + est)
}

/// v(a) = N(sup H ≥ a) = ((γ−1)a)^{−1/(γ−1)}.
pub fn height_tail_v(gamma: f64, a: f64) -> Result<f64> {
    check_gamma("height_tail_v", gamma)?;
    if !(a > 0.0) {
        return Err(domain("height_tail_v", format!("a={a} must be > 0")));
    }
    csbp_u(gamma, a, f64::INFINITY)
}

/// Laplace transform of ⟨ℓ^a⟩ under N^{(a)}.
pub fn zolotarev_lt(gamma: f64, a: f64, lambda: f64) -> Result<f64> {
    check_gamma("zolotarev_lt", gamma)?;
    if !(a > 0.0) || !a.is_finite() {
        return Err(domain(
            "zolotarev_lt",
            format!("a={a} must be finite and > 0"),
        ));
    }
    check_nonneg("zolotarev_lt", "lambda", lambda)?;
    if lambda == f64::INFINITY {
        return Ok(0.0);
    }
    let al = gamma - 1.0;
    let c = al * a * lambda.powf(al);
    Ok(1.0 - (c / (1.0 + c)).powf(1.0 / al))
}

/// Zolotarev transform at complex argument, principal branch (Re s > 0).
pub fn zolotarev_lt_complex(gamma: f64, a: f64, s: Complex64) -> Complex64 {
    let al = gamma - 1.0;
    let c = s.powf(al) * (al * a);
    Complex64::new(1.0, 0.0) - (c / (c + 1.0)).powf(1.0 / al)
}

/// Tabulated solution of ∂κ/∂a = λ − κ^γ, κ_0 = μ.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KappaSolution {
    pub gamma: f64,
    pub lambda: f64,
    pub mu: f64,
    /// (a, κ_a) pairs on a uniform grid from 0 to a_max.
    pub values: Vec<(f64, f64)>,
    /// ∫_0^a κ_s^{γ−1} ds on the same grid.
    pub integral: Vec<f64>,
    pub max_error_estimate: f64,
}

impl KappaSolution {
    pub fn a_max(&self) -> f64 {
        self.values.last().map(|p| p.0).unwrap_or(0.0)
    }

    pub fn last(&self) -> f64 {
        self.values.last().map(|p| p.1).unwrap_or(self.mu)
    }

    /// Cubic Hermite interpolation using the ODE right-hand side as slope.
    pub fn value_at(&self, a: f64) -> f64 {
        let n = self.values.len() - 1;
        if n == 0 || a <= 0.0 {
            return self.values[0].1;
        }
        let amax = self.a_max();
        if a >= amax {
            return self.last();
        }
        let h = amax / n as f64;
        let i = ((a / h).floor() as usize).min(n - 1);
        let (a0, y0) = self.values[i];
        let (_, y1) = self.values[i + 1];
        let f = |y: f64| self.lambda - y.max(0.0).powf(self.gamma);
        let t = (a - a0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * y0 + h10 * h * f(y0) + h01 * y1 + h11 * h * f(y1)
    }
}

fn kappa_rk4(gamma: f64, lambda: f64, y: f64, h: f64) -> (f64, f64) {
    let f = |k: f64| lambda - k.max(0.0).powf(gamma);
    let g = |k: f64| k.max(0.0).powf(gamma - 1.0);
    let k1 = y;
    let d1 = f(k1);
    let k2 = y + 0.5 * h * d1;
    let d2 = f(k2);
    let k3 = y + 0.5 * h * d2;
    let d3 = f(k3);
    let k4 = y + h * d3;
    let d4 = f(k4);
    let y_next = y + h / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
    let integ = h / 6.0 * (g(k1) + 2.0 * g(k2) + 2.0 * g(k3) + g(y_next));
    (y_next, integ)
}

/// Series for κ and ∫κ^{γ−1} on [0, h] when μ = 0, where κ^{γ−1} is not smooth.
fn kappa_first_step(gamma: f64, lambda: f64, h: f64) -> (f64, f64) {
    let al = gamma - 1.0;
    let lg = lambda.powf(gamma - 1.0);
    let kappa = lambda * h * (1.0 - lg * h.powf(gamma) / (gamma + 1.0));
    let i1 = h.powf(1.0 + al) / (1.0 + al);
    let i2 = al * lg * h.powf(1.0 + al + gamma) / ((gamma + 1.0) * (1.0 + al + gamma));
    (kappa, lambda.powf(al) * (i1 - i2))
}

/// Integrates ∂κ/∂a = λ − κ^γ from κ_0 = μ on a uniform grid of step ≤ `step`.
pub fn kappa_solve(
    gamma: f64,
    a_max: f64,
    lambda: f64,
    mu: f64,
    step: f64,
) -> Result<KappaSolution> {
    check_gamma("kappa_solve", gamma)?;
    check_finite_nonneg("kappa_solve", "lambda", lambda)?;
    check_finite_nonneg("kappa_solve", "mu", mu)?;
    if !(a_max > 0.0) || !a_max.is_finite() {
        return Err(domain(
            "kappa_solve",
            format!("a_max={a_max} must be finite and > 0"),
        ));
    }
    if !(step > 0.0) {
        return Err(domain("kappa_solve", format!("step={step} must be > 0")));
    }
    let n = (a_max / step).ceil().max(1.0) as usize;
    let h = a_max / n as f64;
    let mut values = Vec::with_capacity(n + 1);
    let mut integral = Vec::with_capacity(n + 1);
    values.push((0.0, mu));
    integral.push(0.0);
    let mut y = mu;
    let mut acc = 0.0;
    let mut max_err: f64 = 0.0;
    for i in 0..n {
        let (y_next, inc) = if i == 0 && mu == 0.0 && gamma < 2.0 {
            kappa_first_step(gamma, lambda, h)
        } else {
            let (full, inc_full) = kappa_rk4(gamma, lambda, y, h);
            let (half, inc_a) = kappa_rk4(gamma, lambda, y, 0.5 * h);
            let (two_half, inc_b) = kappa_rk4(gamma, lambda, half, 0.5 * h);
            let est = (two_half - full).abs() / 15.0;
            max_err = max_err.max(est);
            if est > STEP_TOL * y.abs().max(1.0) {
                return Err(Error::StepRejected {
                    estimate: est,
                    tol: STEP_TOL * y.abs().max(1.0),
                });
            }
            let _ = inc_full;
            (two_half + (two_half - full) / 15.0, inc_a + inc_b)
        };
        y = y_next;
        acc += inc;
        values.push(((i + 1) as f64 * h, y));
        integral.push(acc);
    }
    Ok(KappaSolution {
        gamma,
        lambda,
        mu,
        values,
        integral,
        max_error_estimate: max_err,
    })
}

/// γ∫_0^r κ_s(λ,0)^{γ−1} ds − [log λ − log(λ − κ^γ)] with κ = `kappa_val`.
pub fn kappa_implicit_residual(gamma: f64, r: f64, lambda: f64, kappa_val: f64) -> Result<f64> {
    kappa_implicit_residual_step(gamma, r, lambda, kappa_val, DEFAULT_STEP)
}

pub fn kappa_implicit_residual_step(
    gamma: f64,
    r: f64,
    lambda: f64,
    kappa_val: f64,
    step: f64,
) -> Result<f64> {
    check_gamma("kappa_implicit_residual", gamma)?;
    check_finite_nonneg("kappa_implicit_residual", "r", r)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(domain(
            "kappa_implicit_residual",
            format!("lambda={lambda} must be > 0"),
        ));
    }
    check_finite_nonneg("kappa_implicit_residual", "kappa_val", kappa_val)?;
    let kg = kappa_val.powf(gamma);
    if kg >= lambda {
        return Err(domain(
            "kappa_implicit_residual",
            format!("kappa_val^gamma={kg} must be < lambda={lambda}"),
        ));
    }
    let lhs = if r == 0.0 {
        0.0
    } else {
        let sol = kappa_solve(gamma, r, lambda, 0.0, step)?;
        gamma * sol.integral.last().copied().unwrap_or(0.0)
    };
    Ok(lhs - (lambda.ln() - (lambda - kg).ln()))
}

fn check_radii(op: &'static str, r_lo: f64, r_hi: f64) -> Result<()> {
    if r_lo >= 0.0 && r_hi >= r_lo && r_hi.is_finite() {
        Ok(())
    } else {
        Err(domain(op, format!("need 0 ≤ r_lo={r_lo} ≤ r_hi={r_hi}")))
    }
}

/// Laplace transform of the level-shell mass Λ_{r_lo,r_hi}(a).
pub fn shell_lt_level(gamma: f64, r_lo: f64, r_hi: f64, lambda: f64) -> Result<f64> {
    check_gamma("shell_lt_level", gamma)?;
    check_radii("shell_lt_level", r_lo, r_hi)?;
    check_finite_nonneg("shell_lt_level", "lambda", lambda)?;
    let al = gamma - 1.0;
    let w = 0.5 * al * lambda.powf(al);
    Ok(((w * r_lo + 1.0) / (w * r_hi + 1.0)).powf(gamma / al))
}

/// Laplace transform of the level-ball mass L*_r(a).
pub fn ball_lt_level(gamma: f64, r: f64, lambda: f64) -> Result<f64> {
    check_gamma("ball_lt_level", gamma)?;
    check_finite_nonneg("ball_lt_level", "r", r)?;
    check_finite_nonneg("ball_lt_level", "lambda", lambda)?;
    let al = gamma - 1.0;
    Ok((1.0 + 0.5 * al * r * lambda.powf(al)).powf(-gamma / al))
}

/// `ball_lt_level` at complex argument, principal branch (Re s > 0).
pub fn ball_lt_level_complex(gamma: f64, r: f64, s: Complex64) -> Complex64 {
    let al = gamma - 1.0;
    (s.powf(al) * (0.5 * al * r) + 1.0).powf(-gamma / al)
}

/// Laplace transform of the mass ball M*_r(a): 1 − κ_r(λ,0)^γ/λ.
pub fn ball_lt_mass(gamma: f64, r: f64, lambda: f64) -> Result<f64> {
    ball_lt_mass_step(gamma, r, lambda, DEFAULT_STEP)
}

pub fn ball_lt_mass_step(gamma: f64, r: f64, lambda: f64, step: f64) -> Result<f64> {
    check_gamma("ball_lt_mass", gamma)?;
    check_finite_nonneg("ball_lt_mass", "r", r)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(domain(
            "ball_lt_mass",
            format!("lambda={lambda} must be finite and > 0"),
        ));
    }
    if r == 0.0 {
        return Ok(1.0);
    }
    let sol = kappa_solve(gamma, r, lambda, 0.0, step)?;
    Ok(1.0 - sol.last().powf(gamma) / lambda)
}

/// Laplace transform of the mass shell Q: depends on the width only.
pub fn shell_lt_mass(gamma: f64, r_lo: f64, r_hi: f64, lambda: f64) -> Result<f64> {
    check_radii("shell_lt_mass", r_lo, r_hi)?;
    ball_lt_mass(gamma, r_hi - r_lo, lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailConstants {
    /// lim x^{γ−1} P(Z ≥ x); absent at γ = 2.
    pub z_tail: Option<f64>,
    /// lim x^{−γ} P(Z ≤ x).
    pub z_small: f64,
    /// lim x^{γ−1} P(Y ≥ x); absent at γ = 2.
    pub y_tail: Option<f64>,
}

pub fn tail_constants(gamma: f64) -> Result<TailConstants> {
    check_gamma("tail_constants", gamma)?;
    let al = gamma - 1.0;
    let z_small = 2f64.powf(gamma / al) / (al.powf(gamma / al) * gamma_fn(1.0 + gamma));
    let (z_tail, y_tail) = if gamma < 2.0 {
        let g2 = gamma_fn(2.0 - gamma);
        (Some(gamma / (2.0 * g2)), Some(1.0 / g2))
    } else {
        (None, None)
    };
    Ok(TailConstants {
        z_tail,
        z_small,
        y_tail,
    })
}

/// z_tail, rejecting γ = 2 where the tail is not polynomial.
pub fn z_tail(gamma: f64) -> Result<f64> {
    tail_constants(gamma)?.z_tail.ok_or_else(|| {
        domain(
            "tail_constants",
            "z_tail undefined at gamma=2 (pole of Γ(2−γ))",
        )
    })
}

/// y_tail, rejecting γ = 2.
pub fn y_tail(gamma: f64) -> Result<f64> {
    tail_constants(gamma)?.y_tail.ok_or_else(|| {
        domain(
            "tail_constants",
            "y_tail undefined at gamma=2 (pole of Γ(2−γ))",
        )
    })
}

/// Leading small-x asymptotic of N^{(1)}(⟨ℓ¹⟩ ≤ x).
pub fn small_mass_cdf_asymptotic(gamma: f64, x: f64) -> Result<f64> {
    check_gamma("small_mass_cdf_asymptotic", gamma)?;
    if !(x > 0.0) {
        return Err(domain(
            "small_mass_cdf_asymptotic",
            format!("x={x} must be > 0"),
        ));
    }
    let al = gamma - 1.0;
    Ok(x.powf(al) / (al * al * gamma_fn(gamma)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csbp_u_examples() {
        assert_eq!(csbp_u(2.0, 0.0, 7.0).unwrap(), 7.0);
        assert!((csbp_u(2.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((csbp_u(1.5, 2.0, f64::INFINITY).unwrap() - 1.0).abs() < 1e-14);
        assert!(csbp_u(2.5, 1.0, 1.0).is_err());
        assert!(csbp_u(2.0, -1.0, 1.0).is_err());
        assert!(csbp_u(2.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn csbp_ode_examples() {
        assert!((csbp_u_ode(2.0, 1.0, 1.0, 1e-4).unwrap() - 0.5).abs() < 1e-8);
        let exact = csbp_u(1.5, 2.0, 10.0).unwrap();
        assert!((csbp_u_ode(1.5, 2.0, 10.0, 1e-4).unwrap() - exact).abs() < 1e-8);
        assert_eq!(csbp_u_ode(2.0, 0.0, 3.0, 0.1).unwrap(), 3.0);
    }

    #[test]
    fn height_tail_examples() {
        assert!((height_tail_v(2.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((height_tail_v(2.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((height_tail_v(1.5, 0.5).unwrap() - 16.0).abs() < 1e-12);
        assert!(height_tail_v(2.0, 0.0).is_err());
    }

    #[test]
    fn zolotarev_examples() {
        assert!((zolotarev_lt(2.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(zolotarev_lt(1.3, 2.0, 0.0).unwrap(), 1.0);
        assert!(zolotarev_lt(2.0, 1.0, 1e12).unwrap() < 1e-11);
        assert_eq!(zolotarev_lt(2.0, 1.0, f64::INFINITY).unwrap(), 0.0);
        let z = zolotarev_lt_complex(1.5, 0.7, Complex64::new(2.0, 0.0));
        assert!((z.re - zolotarev_lt(1.5, 0.7, 2.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn kappa_examples() {
        let sol = kappa_solve(2.0, 3.0, 1.0, 0.0, 1e-3).unwrap();
        for &(a, k) in sol.values.iter().step_by(100) {
            assert!((k - a.tanh()).abs() < 1e-10, "a={a}");
        }
        let zero = kappa_solve(1.5, 2.0, 0.0, 0.0, 1e-2).unwrap();
        assert!(zero.values.iter().all(|p| p.1 == 0.0));
        let four = kappa_solve(2.0, 20.0, 4.0, 0.0, 1e-3).unwrap();
        assert!((four.last() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn kappa_decreases_from_above() {
        let sol = kappa_solve(1.5, 10.0, 1.0, 3.0, 1e-3).unwrap();
        assert!(sol.values.windows(2).all(|w| w[1].1 <= w[0].1));
        assert!((sol.last() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kappa_interpolation() {
        let sol = kappa_solve(2.0, 1.0, 1.0, 0.0, 1e-2).unwrap();
        for a in [0.003, 0.333, 0.5, 0.777, 0.999] {
            assert!((sol.value_at(a) - f64::tanh(a)).abs() < 1e-9);
        }
    }

    #[test]
    fn kappa_residual_examples() {
        let r = kappa_implicit_residual(2.0, 1.0, 1.0, 1f64.tanh()).unwrap();
        assert!(r.abs() < 1e-6);
        assert_eq!(kappa_implicit_residual(1.5, 0.0, 2.0, 0.0).unwrap(), 0.0);
        // κ too small: the log term is too small, residual positive
        let r = kappa_implicit_residual(2.0, 1.0, 1.0, 0.5).unwrap();
        assert!(r > 0.1);
        assert!(kappa_implicit_residual(2.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn shell_and_ball_examples() {
        assert!((shell_lt_level(2.0, 0.5, 1.0, 2.0).unwrap() - 0.5625).abs() < 1e-15);
        assert_eq!(shell_lt_level(1.5, 0.3, 0.3, 5.0).unwrap(), 1.0);
        assert_eq!(shell_lt_level(1.5, 0.1, 0.3, 0.0).unwrap(), 1.0);
        assert!((ball_lt_level(2.0, 1.0, 2.0).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(ball_lt_level(1.7, 0.0, 3.0).unwrap(), 1.0);
        // Gamma(2, r/2) transform
        let (r, l) = (0.7, 1.3);
        let gamma_lt = (1.0f64 + l * r / 2.0).powi(-2);
        assert!((ball_lt_level(2.0, r, l).unwrap() - gamma_lt).abs() < 1e-15);
        assert!(shell_lt_level(2.0, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn mass_ball_examples() {
        for (r, l) in [(0.5, 1.0), (1.0, 2.0), (2.0, 0.3)] {
            let sech = 1.0 / (r * f64::sqrt(l)).cosh();
            assert!((ball_lt_mass(2.0, r, l).unwrap() - sech * sech).abs() < 1e-9);
        }
        assert_eq!(ball_lt_mass(1.5, 0.0, 2.0).unwrap(), 1.0);
        let l = 1e-4;
        let v = ball_lt_mass(2.0, 1.0, l).unwrap();
        assert!(((1.0 - v) / l - 1.0).abs() < 1e-3);
        assert_eq!(shell_lt_mass(1.5, 0.3, 0.3, 1.0).unwrap(), 1.0);
        let s = shell_lt_mass(2.0, 0.0, 1.0, 1.0).unwrap();
        assert!((s - 0.419_974_341_614_026).abs() < 1e-9);
        assert_eq!(
            shell_lt_mass(1.5, 0.25, 0.75, 1.1).unwrap(),
            shell_lt_mass(1.5, 1.25, 1.75, 1.1).unwrap()
        );
    }

    #[test]
    fn tail_constant_examples() {
        let pi_sqrt = std::f64::consts::PI.sqrt();
        let t = tail_constants(1.5).unwrap();
        assert!((t.z_tail.unwrap() - 1.5 / (2.0 * pi_sqrt)).abs() < 1e-12);
        assert!((t.y_tail.unwrap() - 1.0 / pi_sqrt).abs() < 1e-12);
        let t2 = tail_constants(2.0).unwrap();
        assert!((t2.z_small - 2.0).abs() < 1e-13);
        assert!(z_tail(2.0).is_err());
        assert!(y_tail(2.0).is_err());
    }

    #[test]
    fn small_mass_examples() {
        assert!((small_mass_cdf_asymptotic(2.0, 0.3).unwrap() - 0.3).abs() < 1e-14);
        let v = small_mass_cdf_asymptotic(1.5, 0.01).unwrap();
        assert!((v - 0.451_351_666_838_205_4).abs() < 1e-6);
        assert!(small_mass_cdf_asymptotic(1.5, 1e-300).unwrap() < 1e-140);
    }
}
