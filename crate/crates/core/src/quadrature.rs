//! Tensor-product quadrature of velocity fields over space-time boxes.
//!
//! Because every field is a sum of plane waves, the integral of one wave
//! over a product rule factorizes:
//!
//! ```text
//! Σ w sin(φ(u)) = Im( e^{iθ} Π_axis Σ_j w_j e^{i c_axis u_j} )
//! ```
//!
//! so a rule with `q` nodes per axis costs `O((d + 1) q)` per wave instead
//! of `O(q^{d+1})`. The direct sum is kept for cross-checks.

use num_complex::Complex64;

use crate::field::{Vector, VelocityField};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Midpoint,
    GaussLegendre,
}

/// Nodes and weights on one interval. Weights sum to the interval length.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxisRule {
    pub fn new(rule: Rule, lo: f64, hi: f64, q: usize) -> Self {
        assert!(q >= 1, "a rule needs at least one node");
        let len = hi - lo;
        match rule {
            Rule::Midpoint => {
                let w = len / q as f64;
                AxisRule {
                    nodes: (0..q).map(|j| lo + (j as f64 + 0.5) * w).collect(),
                    weights: vec![w; q],
                }
            }
            Rule::GaussLegendre => {
                let (x, w) = gauss_legendre(q);
                let mid = 0.5 * (lo + hi);
                AxisRule {
                    nodes: x.iter().map(|xi| mid + 0.5 * len * xi).collect(),
                    weights: w.iter().map(|wi| 0.5 * len * wi).collect(),
                }
            }
        }
    }

    /// A single node with unit weight: evaluates instead of integrating.
    pub fn point(x: f64) -> Self {
        AxisRule {
            nodes: vec![x],
            weights: vec![1.0],
        }
    }

    fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn exp_sum(&self, c: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let (s, co) = (c * x).sin_cos();
            acc += Complex64::new(w * co, w * s);
        }
        acc
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, z);
            let z1 = z;
            z = z1 - p / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        let pp = legendre(n, z).1;
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
    }
    (p1, n as f64 * (z * p1 - p2) / (z * z - 1.0))
}

/// Weighted sum of V over the product of `axes` (time first, then space).
pub fn integrate(field: &VelocityField, axes: &[AxisRule]) -> Vector {
    let blocks: Vec<Vec<AxisRule>> = axes.iter().map(|a| vec![a.clone()]).collect();
    integrate_blocks(field, &blocks)[0]
}

/// Integrates over every product of one block per axis. Results are in
/// row-major order over the block multi-index (time block slowest).
pub fn integrate_blocks(field: &VelocityField, axes: &[Vec<AxisRule>]) -> Vec<Vector> {
    let dim = field.dim();
    assert_eq!(axes.len(), dim + 1, "expected one time axis and {dim} space axes");
    let waves = field.waves();
    // sums[a][b][w]
    let sums: Vec<Vec<Vec<Complex64>>> = axes
        .iter()
        .enumerate()
        .map(|(a, blocks)| {
            blocks
                .iter()
                .map(|rule| {
                    waves
                        .iter()
                        .map(|w| rule.exp_sum(if a == 0 { w.omega } else { w.k[a - 1] }))
                        .collect()
                })
                .collect()
        })
        .collect();
    let weight_sums: Vec<Vec<f64>> = axes
        .iter()
        .map(|blocks| blocks.iter().map(AxisRule::weight_sum).collect())
        .collect();
    let shape: Vec<usize> = axes.iter().map(Vec::len).collect();
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim + 1];
    let mean = field.mean();
    for _ in 0..total {
        let mut v = [0.0; 3];
        let vol: f64 = (0..=dim).map(|a| weight_sums[a][idx[a]]).product();
        for (c, m) in mean.iter().enumerate() {
            v[c] = m * vol;
        }
        for (wi, w) in waves.iter().enumerate() {
            let mut prod = Complex64::from_polar(1.0, w.phase);
            for a in 0..=dim {
                prod *= sums[a][idx[a]][wi];
            }
            let s = prod.im;
            v[0] += w.velocity[0] * s;
            v[1] += w.velocity[1] * s;
            v[2] += w.velocity[2] * s;
        }
        out.push(v);
        for a in (0..=dim).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    out
}

/// The same sum as [`integrate`], evaluated point by point.
pub fn integrate_direct(field: &VelocityField, axes: &[AxisRule]) -> Vector {
    let dim = field.dim();
    assert_eq!(axes.len(), dim + 1);
    let shape: Vec<usize> = axes.iter().map(|a| a.nodes.len()).collect();
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; dim + 1];
    let mut acc = [0.0; 3];
    let mut x = [0.0; 3];
    for _ in 0..total {
        let t = axes[0].nodes[idx[0]];
        let mut w = axes[0].weights[idx[0]];
        for a in 0..dim {
            x[a] = axes[a + 1].nodes[idx[a + 1]];
            w *= axes[a + 1].weights[idx[a + 1]];
        }
        let v = field.eval(t, &x[..dim]);
        for c in 0..3 {
            acc[c] += w * v[c];
        }
        for a in (0..=dim).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    acc
}
