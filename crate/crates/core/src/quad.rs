//! One-dimensional quadrature building blocks: Gauss-Legendre and
//! Gauss-Jacobi rules (Golub-Welsch on the symmetric Jacobi matrix),
//! composite rules for endpoint power weights, and a small adaptive
//! integrator used by the oracle paths.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::special::beta;

/// Nodes and weights of a quadrature rule, ready to apply.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Affine image of the rule on [a, b] (assumes the rule lives on [0, 1]).
    pub fn mapped(&self, a: f64, b: f64) -> Rule {
        let h = b - a;
        Rule {
            nodes: self.nodes.iter().map(|&x| a + h * x).collect(),
            weights: self.weights.iter().map(|&w| w * h).collect(),
        }
    }
}

/// Gauss-Jacobi rule on [-1, 1] with weight (1-x)^alpha (1+x)^beta.
fn jacobi_rule(n: usize, alpha: f64, beta_e: f64) -> Rule {
    assert!(n >= 1 && alpha > -1.0 && beta_e > -1.0);
    if n == 1 {
        let mu0 = 2f64.powf(alpha + beta_e + 1.0) * beta(alpha + 1.0, beta_e + 1.0);
        let node = (beta_e - alpha) / (alpha + beta_e + 2.0);
        return Rule { nodes: vec![node], weights: vec![mu0] };
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut diag = (beta_e - alpha) / (2.0 + alpha + beta_e);
    for k in 0..n - 1 {
        let kp1 = (k + 1) as f64;
        let denom = 2.0 * kp1 + alpha + beta_e;
        let off = 2.0 / denom
            * (kp1 * (kp1 + alpha) * (kp1 + beta_e) * (kp1 + alpha + beta_e)
                / ((denom + 1.0) * (denom - 1.0)))
                .sqrt();
        m[(k, k)] = diag;
        m[(k, k + 1)] = off;
        m[(k + 1, k)] = off;
        diag = (beta_e * beta_e - alpha * alpha) / (denom * (denom + 2.0));
    }
    m[(n - 1, n - 1)] = diag;

    let eig = m.symmetric_eigen();
    let mu0 = 2f64.powf(alpha + beta_e + 1.0) * beta(alpha + 1.0, beta_e + 1.0);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

type RuleCache = Mutex<HashMap<(usize, u64), Arc<Rule>>>;

fn cache() -> &'static RuleCache {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Gauss-Legendre rule mapped to [0, 1].
pub fn gauss_unit(n: usize) -> Arc<Rule> {
    power_weight_gauss_unit(n, 0.0)
}

/// Rule approximating ∫₀¹ x^delta f(x) dx ≈ Σ wᵢ f(xᵢ) for smooth f,
/// with the weight x^delta built into the wᵢ. Exact for polynomials f of
/// degree ≤ 2n-1. Requires delta > -1.
pub fn power_weight_gauss_unit(n: usize, delta: f64) -> Arc<Rule> {
    let key = (n, delta.to_bits());
    if let Some(r) = cache().lock().unwrap().get(&key) {
        return r.clone();
    }
    // Weight (1+x)^delta on [-1,1] maps to (2t)^delta under t = (1+x)/2.
    let base = jacobi_rule(n, 0.0, delta);
    let scale = 2f64.powf(-delta - 1.0);
    let rule = Arc::new(Rule {
        nodes: base.nodes.iter().map(|&x| 0.5 * (1.0 + x)).collect(),
        weights: base.weights.iter().map(|&w| w * scale).collect(),
    });
    cache().lock().unwrap().insert(key, rule.clone());
    rule
}

/// Composite rule for ∫₀¹ x^delta f(x) dx that is robust when f itself has
/// weak non-smoothness accumulating at x = 0: `levels` dyadic Gauss panels
/// toward the origin and a Gauss-Jacobi panel on the innermost piece.
pub fn graded_power_rule(n: usize, delta: f64, levels: usize) -> Rule {
    let gl = gauss_unit(n);
    let mut nodes = Vec::with_capacity(n * (levels + 1));
    let mut weights = Vec::with_capacity(n * (levels + 1));
    for l in 0..levels {
        let hi = 0.5f64.powi(l as i32);
        let lo = 0.5 * hi;
        for (&x, &w) in gl.nodes.iter().zip(&gl.weights) {
            let t = lo + (hi - lo) * x;
            nodes.push(t);
            weights.push(w * (hi - lo) * t.powf(delta));
        }
    }
    let bottom = power_weight_gauss_unit(n, delta);
    let eps = 0.5f64.powi(levels as i32);
    let scale = eps.powf(delta + 1.0);
    for (&x, &w) in bottom.nodes.iter().zip(&bottom.weights) {
        nodes.push(eps * x);
        weights.push(w * scale);
    }
    Rule { nodes, weights }
}

/// Adaptive Gauss integration of f over [a, b] to the requested absolute
/// tolerance, by comparing nested orders and bisecting. A noise floor
/// proportional to the first whole-interval estimate keeps the recursion
/// from chasing tolerances below double precision. Used by oracle and
/// pointwise-kernel paths, not by the assembly hot loop.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn estimates<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, coarse: &Rule, fine: &Rule) -> (f64, f64) {
        let h = b - a;
        let i_coarse: f64 = coarse
            .nodes
            .iter()
            .zip(&coarse.weights)
            .map(|(&x, &w)| w * h * f(a + h * x))
            .sum();
        let i_fine: f64 = fine
            .nodes
            .iter()
            .zip(&fine.weights)
            .map(|(&x, &w)| w * h * f(a + h * x))
            .sum();
        (i_coarse, i_fine)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        tol: f64,
        floor: f64,
        coarse: &Rule,
        fine: &Rule,
        depth: u32,
    ) -> f64 {
        let (i_coarse, i_fine) = estimates(f, a, b, coarse, fine);
        if (i_fine - i_coarse).abs() <= tol.max(floor) || depth >= 30 {
            return i_fine;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, floor, coarse, fine, depth + 1)
            + recurse(f, mid, b, 0.5 * tol, floor, coarse, fine, depth + 1)
    }
    let coarse = gauss_unit(8);
    let fine = gauss_unit(16);
    let (_, i_root) = estimates(&f, a, b, &coarse, &fine);
    let floor = 1e-15 * i_root.abs();
    recurse(&f, a, b, tol, floor, &coarse, &fine, 0)
}
