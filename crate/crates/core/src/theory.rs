//! Closed-form objects: the comparison profile φ, the parameter map of the
//! waiting-time theorem, and the tail exponent.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, thiserror::Error)]
pub enum TheoryError {
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("parameter set rejected: {}", .violations.join("; "))]
    Rejected {
        params: Box<TheoremParams>,
        violations: Vec<String>,
    },
}

/// Volume of the unit ball in R^d.
pub fn unit_ball_volume(d: usize) -> f64 {
    PI.powf(d as f64 / 2.0) / gamma_half_integer(d + 2)
}

/// Γ(n / 2) for a positive integer n.
fn gamma_half_integer(n: usize) -> f64 {
    match n {
        1 => PI.sqrt(),
        2 => 1.0,
        _ => (n as f64 / 2.0 - 1.0) * gamma_half_integer(n - 2),
    }
}

/// Relative isoperimetric ratio `Per(E, Q) / min(|E|, 1 - |E|)^((d-1)/d)`
/// minimized over half-spaces `{x_1 < s}` and balls centered at a corner
/// of the unit cube.
pub fn default_lambda1(d: usize) -> f64 {
    let expo = (d as f64 - 1.0) / d as f64;
    let ratio = |per: f64, vol: f64| per / vol.min(1.0 - vol).powf(expo);
    let steps = 4000;
    let mut best = f64::INFINITY;
    for i in 1..steps {
        let s = i as f64 / steps as f64;
        best = best.min(ratio(1.0, s));
        // a corner ball of radius s < 1 stays inside the cube's corner orthant
        let frac = 0.5f64.powi(d as i32);
        let vol = frac * unit_ball_volume(d) * s.powi(d as i32);
        let per = frac * d as f64 * unit_ball_volume(d) * s.powi(d as i32 - 1);
        best = best.min(ratio(per, vol));
    }
    best
}

/// The two-branch solution of `φ' = ½ λ₁ min(φ, 1 - φ)^((d-1)/d)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phi {
    pub d: usize,
    pub lambda1: f64,
    pub a: f64,
    pub b: f64,
}

impl Phi {
    pub fn new(d: usize, lambda1: f64) -> Result<Self, TheoryError> {
        if d == 0 {
            return Err(TheoryError::UnsupportedDimension(d));
        }
        if !(lambda1 > 0.0) {
            return Err(TheoryError::InvalidParameter {
                name: "lambda1",
                value: lambda1,
            });
        }
        let a = (lambda1 / (2.0 * d as f64)).powi(d as i32);
        let b = (1.0 / (2.0 * a)).powf(1.0 / d as f64);
        Ok(Phi { d, lambda1, a, b })
    }

    /// φ(t), clamped to 0 for t < 0 and to 1 for t > 2b. Evaluated as
    /// `½ (t/b)^d` and `1 - ½ (2 - t/b)^d`, which equal the closed form since
    /// `a b^d = ½` and are exact at `0`, `b` and `2b`.
    pub fn value(&self, t: f64) -> f64 {
        let d = self.d as i32;
        let s = t / self.b;
        if t <= 0.0 {
            0.0
        } else if s <= 1.0 {
            0.5 * s.powi(d)
        } else if s < 2.0 {
            1.0 - 0.5 * (2.0 - s).powi(d)
        } else {
            1.0
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let d = self.d as i32;
        if t <= 0.0 || t >= 2.0 * self.b {
            0.0
        } else if t <= self.b {
            self.d as f64 * self.a * t.powi(d - 1)
        } else {
            self.d as f64 * self.a * (2.0 * self.b - t).powi(d - 1)
        }
    }

    /// `d a b^(d-1)`
    pub fn derivative_bound(&self) -> f64 {
        self.d as f64 * self.a * self.b.powi(self.d as i32 - 1)
    }

    pub fn ode_rhs(&self, phi: f64) -> f64 {
        let m = phi.min(1.0 - phi).max(0.0);
        0.5 * self.lambda1 * m.powf((self.d as f64 - 1.0) / self.d as f64)
    }

    /// `|(φ(t+h) - φ(t-h)) / 2h - ½ λ₁ min(φ, 1-φ)^((d-1)/d)|`
    pub fn ode_residual(&self, t: f64, fd_step: f64) -> f64 {
        let fd = (self.value(t + fd_step) - self.value(t - fd_step)) / (2.0 * fd_step);
        (fd - self.ode_rhs(self.value(t))).abs()
    }
}

pub fn phi(t: f64, params: &TheoremParams) -> f64 {
    params.phi().value(t)
}

pub fn phi_ode_residual(t: f64, params: &TheoremParams, fd_step: f64) -> f64 {
    params.phi().ode_residual(t, fd_step)
}

/// Inputs and derived constants of the waiting-time theorem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremParams {
    #[serde(rename = "M")]
    pub m: f64,
    pub d: usize,
    pub lambda1: f64,
    pub c_theorem: f64,
    pub c_small: f64,
    pub epsilon: f64,
    /// `⌈C M^(5d+2)⌉`, kept as a float because it overflows integers quickly.
    pub n: f64,
    /// `⌈β⁻² ε⁻³ M³⌉`
    pub n_lemma: f64,
    pub l: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// `t₁ - t₀ ≤ t1_offset_factor · r`
    pub t1_offset_factor: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    /// `L / N ≤ β`, evaluated with the lemma's N.
    pub lattice_ratio_ok: bool,
    pub lattice_ratio: f64,
}

impl TheoremParams {
    pub fn phi(&self) -> Phi {
        Phi {
            d: self.d,
            lambda1: self.lambda1,
            a: self.phi_a,
            b: self.phi_b,
        }
    }

    /// `t₁ - t₀` upper bound for a box of side r.
    pub fn t1_offset(&self, r: f64) -> f64 {
        self.t1_offset_factor * r
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            out.push(format!("epsilon = {} is not in (0, 1)", self.epsilon));
        }
        if !(self.l >= 1.0 && self.l < self.n) {
            out.push(format!("1 <= L < N fails (L = {}, N = {})", self.l, self.n));
        }
        let cap = unit_ball_volume(self.d) / 2f64.powi(self.d as i32);
        if self.alpha > cap * (1.0 + 1e-12) {
            out.push(format!("alpha = {} exceeds omega_d / 2^d = {cap}", self.alpha));
        }
        if !(self.gamma > 1.0) {
            out.push(format!("gamma = {} is not > 1", self.gamma));
        }
        out
    }
}

pub fn theorem_parameters(
    m: f64,
    d: usize,
    c_theorem: f64,
    c_small: f64,
    lambda1: f64,
) -> Result<TheoremParams, TheoryError> {
    if d != 2 && d != 3 {
        return Err(TheoryError::UnsupportedDimension(d));
    }
    if !(m >= 0.5) || !m.is_finite() {
        return Err(TheoryError::InvalidParameter { name: "M", value: m });
    }
    for (name, value) in [("C", c_theorem), ("c", c_small), ("lambda1", lambda1)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(TheoryError::InvalidParameter { name, value });
        }
    }
    let df = d as f64;
    let epsilon = 1.0 / (c_theorem * m.powf(df - 1.0));
    let n = (c_theorem * m.powf(5.0 * df + 2.0)).ceil();
    let l = (m / epsilon).ceil();
    let alpha = unit_ball_volume(d) / (2.0 * m).powi(d as i32);
    let beta = c_small * m.powf(-(df + 1.0));
    let n_lemma = (m.powi(3) / (beta * beta * epsilon.powi(3))).ceil();
    let phi = Phi::new(d, lambda1)?;
    let lattice_ratio = l / n_lemma;
    let params = TheoremParams {
        m,
        d,
        lambda1,
        c_theorem,
        c_small,
        epsilon,
        n,
        n_lemma,
        l,
        alpha,
        beta,
        gamma: 1.0 + 2.0 * df / lambda1,
        t1_offset_factor: 1.0 / (2.0 * m),
        phi_a: phi.a,
        phi_b: phi.b,
        lattice_ratio_ok: lattice_ratio <= beta,
        lattice_ratio,
    };
    let violations = params.violations();
    if violations.is_empty() {
        Ok(params)
    } else {
        Err(TheoryError::Rejected {
            params: Box::new(params),
            violations,
        })
    }
}

pub fn predicted_waiting_time(r_star: f64, params: &TheoremParams) -> f64 {
    params.c_theorem * r_star
}

/// `β' = (d+1) β / (d+1+β)`
pub fn bin_tail_rate(beta: f64, d: usize) -> f64 {
    let k = d as f64 + 1.0;
    k * beta / (k + beta)
}

/// `ℓ(M) = C M^(2(d-1)/β') (1 + |log M|)^C`
pub fn tail_length_scale(m: f64, d: usize, beta_prime: f64, c: f64) -> f64 {
    c * m.powf(2.0 * (d as f64 - 1.0) / beta_prime) * (1.0 + m.ln().abs()).powf(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ball_volumes() {
        assert_abs_diff_eq!(unit_ball_volume(2), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(unit_ball_volume(3), 4.0 * PI / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(unit_ball_volume(1), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn lambda1_default_is_the_half_space_ratio() {
        assert_abs_diff_eq!(default_lambda1(2), 2f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(default_lambda1(3), 2f64.powf(2.0 / 3.0), epsilon = 1e-9);
    }

    #[test]
    fn phi_endpoints() {
        for d in [2, 3] {
            let p = Phi::new(d, default_lambda1(d)).unwrap();
            assert_eq!(p.value(0.0), 0.0);
            assert_abs_diff_eq!(p.value(p.b), 0.5, epsilon = 1e-15);
            assert_eq!(p.value(2.0 * p.b), 1.0);
            assert_eq!(p.value(-1.0), 0.0);
            assert_eq!(p.value(10.0 * p.b), 1.0);
        }
    }

    #[test]
    fn phi_solves_the_ode() {
        for d in [2, 3] {
            let p = Phi::new(d, 1.3).unwrap();
            for i in 1..40 {
                let t = 2.0 * p.b * i as f64 / 40.0;
                if (t - p.b).abs() < 1e-3 {
                    continue;
                }
                assert!(p.ode_residual(t, 1e-5) <= 1e-6, "d={d} t={t}");
                assert_abs_diff_eq!(p.derivative(t), p.ode_rhs(p.value(t)), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn residual_is_symmetric_and_second_order() {
        let p = Phi::new(3, default_lambda1(3)).unwrap();
        let t = 0.37 * p.b;
        assert_abs_diff_eq!(p.ode_residual(t, 1e-3), p.ode_residual(2.0 * p.b - t, 1e-3), epsilon = 1e-10);
        let ratio = p.ode_residual(t, 1e-2) / p.ode_residual(t, 5e-3);
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn alpha_at_unit_amplitude() {
        // At M = 1, L = ⌈C⌉ = N, so every choice of C is rejected; the
        // constants are still computed and carried by the error.
        match theorem_parameters(1.0, 2, 4.0, 1.0, default_lambda1(2)) {
            Err(TheoryError::Rejected { params, .. }) => {
                assert_abs_diff_eq!(params.alpha, PI / 4.0, epsilon = 1e-15);
                assert_eq!(params.epsilon, 0.25);
                assert_eq!(params.l, 4.0);
                assert_eq!(params.n, 4.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unit_amplitude_examples_are_rejected() {
        let l1 = default_lambda1(2);
        let err = theorem_parameters(1.0, 2, 1.0, 1.0, l1).unwrap_err();
        assert!(matches!(err, TheoryError::Rejected { .. }));
        match theorem_parameters(1.0, 2, 2.0, 1.0, l1).unwrap_err() {
            TheoryError::Rejected { params, violations } => {
                assert_eq!(params.epsilon, 0.5);
                assert_eq!(params.n, 2.0);
                assert_eq!(params.l, 2.0);
                assert_eq!(violations.len(), 1);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn doubling_m_scales_n() {
        let l1 = default_lambda1(2);
        let a = theorem_parameters(2.0, 2, 2.0, 1.0, l1).unwrap();
        let b = theorem_parameters(4.0, 2, 2.0, 1.0, l1).unwrap();
        assert_abs_diff_eq!(b.n / a.n, 2f64.powi(12), epsilon = 1e-6);
    }

    #[test]
    fn tail_rate() {
        assert_abs_diff_eq!(bin_tail_rate(1.0, 2), 0.75, epsilon = 1e-15);
        assert!(bin_tail_rate(1e9, 2) < 3.0);
        assert!(bin_tail_rate(0.5, 3) < 0.5);
        assert_abs_diff_eq!(tail_length_scale(1.0, 2, 0.75, 2.0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn predicted_time_is_linear() {
        let p = theorem_parameters(2.0, 2, 3.0, 1.0, default_lambda1(2)).unwrap();
        assert_eq!(predicted_waiting_time(0.0, &p), 0.0);
        assert_abs_diff_eq!(predicted_waiting_time(2.5, &p), 7.5);
    }
}
