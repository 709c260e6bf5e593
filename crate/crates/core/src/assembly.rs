//! Double-integral quadrature for kernels with a |x-y|^{-(1+2s)} diagonal
//! singularity, over products of 1-D mesh elements.
//!
//! Element pairs are classified disjoint / touching / identical. Disjoint
//! pairs use tensor Gauss rules (with recursive splitting when the gap is
//! small relative to the element sizes). Touching and identical pairs use a
//! Duffy-type substitution that factors the singular power out exactly; the
//! remaining fractional weight is integrated by Gauss-Jacobi rules with
//! dyadic refinement toward the singular edge (`diagonal_levels`), so the
//! hat-function difference vanishing linearly on the diagonal is exploited
//! in exact arithmetic.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::QuadSpec;
use crate::quad::{gauss_unit, graded_power_rule, power_weight_gauss_unit, Rule};

/// Symmetric kernel K(x, y) multiplying the difference product, together
/// with its diagonal singularity order α (K·|x-y|^α is bounded near the
/// diagonal).
pub trait DiffKernel: Sync {
    fn eval(&self, x: f64, y: f64) -> f64;
    fn singular_exponent(&self) -> f64;
}

/// Relative cell-convergence target for the near-diagonal refinement.
const CELL_CONVERGENCE: f64 = 1e-6;

const MAX_SPLIT_DEPTH: u32 = 24;

struct Rules {
    /// GJ rule with weight ξ^{2-2s} (identical pairs, radial direction)
    xi_jacobi: std::sync::Arc<Rule>,
    /// graded rules with weight η^{1-2s} at levels L and L+1 (identical)
    eta_graded: Rule,
    eta_graded_fine: Rule,
    /// graded rules with weight ξ^{2-2s} at levels L and L+1 (touching)
    xi_graded: Rule,
    xi_graded_fine: Rule,
    gl: std::sync::Arc<Rule>,
    alpha: f64,
}

impl Rules {
    fn new(alpha: f64, q: &QuadSpec) -> Rules {
        let g = q.gauss_order;
        let l = q.diagonal_levels;
        Rules {
            xi_jacobi: power_weight_gauss_unit(g, 3.0 - alpha),
            eta_graded: graded_power_rule(g, 2.0 - alpha, l),
            eta_graded_fine: graded_power_rule(g, 2.0 - alpha, l + 1),
            xi_graded: graded_power_rule(g, 3.0 - alpha, l),
            xi_graded_fine: graded_power_rule(g, 3.0 - alpha, l + 1),
            gl: gauss_unit(g),
            alpha,
        }
    }
}

/// Emits quadrature nodes (x, y, w) for ∬_{Ea×Eb} with the geometric weight
/// w; the caller multiplies by K(x,y) and the difference product. For the
/// identical pair the emission covers the full square; for distinct pairs it
/// covers the ordered product Ea×Eb once.
fn identical_nodes<F: FnMut(f64, f64, f64)>(a: f64, b: f64, rules: &Rules, fine: bool, emit: &mut F) {
    let h = b - a;
    let alpha = rules.alpha;
    let eta_rule = if fine { &rules.eta_graded_fine } else { &rules.eta_graded };
    for (&xi, &wxi) in rules.xi_jacobi.nodes.iter().zip(&rules.xi_jacobi.weights) {
        let x = a + h * xi;
        let fac = 2.0 * h * h * wxi;
        for (&eta, &weta) in eta_rule.nodes.iter().zip(&eta_rule.weights) {
            let sigma = h * xi * eta;
            let y = x - sigma;
            // rules carry ξ^{3-α} and η^{2-α}; restore the raw integrand
            let w = fac * weta * (xi * eta).powf(alpha - 2.0);
            emit(x, y, w);
        }
    }
}

fn touching_nodes<F: FnMut(f64, f64, f64)>(
    c: f64,
    h1: f64,
    h2: f64,
    rules: &Rules,
    fine: bool,
    emit: &mut F,
) {
    // Ea = [c-h1, c], Eb = [c, c+h2]; x = c - a_c, y = c + b_c with the
    // corner at a_c = b_c = 0. Two Duffy triangles.
    let alpha = rules.alpha;
    let xi_rule = if fine { &rules.xi_graded_fine } else { &rules.xi_graded };
    for (&xi, &wxi) in xi_rule.nodes.iter().zip(&xi_rule.weights) {
        let fac = h1 * h2 * wxi * xi.powf(alpha - 2.0);
        for (&eta, &weta) in rules.gl.nodes.iter().zip(&rules.gl.weights) {
            // T1: a_c = h1 ξ, b_c = h2 ξ η
            emit(c - h1 * xi, c + h2 * xi * eta, fac * weta);
            // T2: a_c = h1 ξ η, b_c = h2 ξ
            emit(c - h1 * xi * eta, c + h2 * xi, fac * weta);
        }
    }
}

fn disjoint_nodes<F: FnMut(f64, f64, f64)>(
    ea: (f64, f64),
    eb: (f64, f64),
    rules: &Rules,
    depth: u32,
    emit: &mut F,
) {
    let ha = ea.1 - ea.0;
    let hb = eb.1 - eb.0;
    let gap = if eb.0 >= ea.1 { eb.0 - ea.1 } else { ea.0 - eb.1 };
    if gap < 0.5 * ha.max(hb) && depth < MAX_SPLIT_DEPTH {
        // split the larger element and recurse toward admissibility
        if ha >= hb {
            let mid = 0.5 * (ea.0 + ea.1);
            disjoint_nodes((ea.0, mid), eb, rules, depth + 1, emit);
            disjoint_nodes((mid, ea.1), eb, rules, depth + 1, emit);
        } else {
            let mid = 0.5 * (eb.0 + eb.1);
            disjoint_nodes(ea, (eb.0, mid), rules, depth + 1, emit);
            disjoint_nodes(ea, (mid, eb.1), rules, depth + 1, emit);
        }
        return;
    }
    for (&tx, &wx) in rules.gl.nodes.iter().zip(&rules.gl.weights) {
        let x = ea.0 + ha * tx;
        let fac = ha * hb * wx;
        for (&ty, &wy) in rules.gl.nodes.iter().zip(&rules.gl.weights) {
            emit(x, eb.0 + hb * ty, fac * wy);
        }
    }
}

#[derive(Clone, Copy)]
struct LocalBlock {
    nodes: [usize; 4],
    len: usize,
    m: [[f64; 4]; 4],
}

impl LocalBlock {
    fn new(nodes: [usize; 4], len: usize) -> Self {
        LocalBlock { nodes, len, m: [[0.0; 4]; 4] }
    }

    fn max_abs(&self) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..self.len {
            for j in 0..self.len {
                v = v.max(self.m[i][j].abs());
            }
        }
        v
    }

    fn max_abs_diff(&self, other: &LocalBlock) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..self.len {
            for j in 0..self.len {
                v = v.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        v
    }
}

/// Hat-function values are evaluated in local coordinates on singular pairs
/// so the difference never suffers cancellation.
fn identical_block<K: DiffKernel>(e: usize, a: f64, b: f64, kernel: &K, rules: &Rules, fine: bool) -> LocalBlock {
    let h = b - a;
    let mut blk = LocalBlock::new([e, e + 1, usize::MAX, usize::MAX], 2);
    identical_nodes(a, b, rules, fine, &mut |x, y, w| {
        let sigma = x - y;
        let wk = w * kernel.eval(x, y);
        // D_left = -(x-y)/h, D_right = (x-y)/h
        let d = sigma / h;
        let v = wk * d * d;
        blk.m[0][0] += v;
        blk.m[0][1] -= v;
        blk.m[1][1] += v;
    });
    blk.m[1][0] = blk.m[0][1];
    blk
}

fn touching_block<K: DiffKernel>(
    e: usize,
    c: f64,
    h1: f64,
    h2: f64,
    kernel: &K,
    rules: &Rules,
    fine: bool,
) -> LocalBlock {
    // elements e = [c-h1, c] and e+1 = [c, c+h2]; involved nodes e, e+1, e+2.
    // Factor 2 accounts for the mirrored ordered pair.
    let mut blk = LocalBlock::new([e, e + 1, e + 2, usize::MAX], 3);
    touching_nodes(c, h1, h2, rules, fine, &mut |x, y, w| {
        let ac = c - x;
        let bc = y - c;
        let wk = 2.0 * w * kernel.eval(x, y);
        let d = [ac / h1, bc / h2 - ac / h1, -bc / h2];
        for i in 0..3 {
            let wi = wk * d[i];
            for j in i..3 {
                blk.m[i][j] += wi * d[j];
            }
        }
    });
    for i in 0..3 {
        for j in 0..i {
            blk.m[i][j] = blk.m[j][i];
        }
    }
    blk
}

fn disjoint_block<K: DiffKernel>(
    ea_idx: usize,
    eb_idx: usize,
    ea: (f64, f64),
    eb: (f64, f64),
    kernel: &K,
    rules: &Rules,
) -> LocalBlock {
    let mut blk = LocalBlock::new([ea_idx, ea_idx + 1, eb_idx, eb_idx + 1], 4);
    let (a0, a1) = ea;
    let (b0, b1) = eb;
    let ha = a1 - a0;
    let hb = b1 - b0;
    disjoint_nodes(ea, eb, rules, 0, &mut |x, y, w| {
        // factor 2 for the mirrored ordered pair Eb×Ea
        let wk = 2.0 * w * kernel.eval(x, y);
        let d = [(a1 - x) / ha, (x - a0) / ha, -(b1 - y) / hb, -(y - b0) / hb];
        for i in 0..4 {
            let wi = wk * d[i];
            for j in i..4 {
                blk.m[i][j] += wi * d[j];
            }
        }
    });
    for i in 0..4 {
        for j in 0..i {
            blk.m[i][j] = blk.m[j][i];
        }
    }
    blk
}

/// Computes the singular-pair block at levels L and L+1 and reports the
/// refinement defect along with the finer value.
fn singular_pair_block<K: DiffKernel>(
    a: usize,
    b: usize,
    mesh: &[f64],
    kernel: &K,
    rules: &Rules,
) -> (LocalBlock, f64, f64) {
    let (coarse, fine) = if a == b {
        let (x0, x1) = (mesh[a], mesh[a + 1]);
        (
            identical_block(a, x0, x1, kernel, rules, false),
            identical_block(a, x0, x1, kernel, rules, true),
        )
    } else {
        let (h1, h2) = (mesh[b] - mesh[a], mesh[b + 1] - mesh[b]);
        (
            touching_block(a, mesh[b], h1, h2, kernel, rules, false),
            touching_block(a, mesh[b], h1, h2, kernel, rules, true),
        )
    };
    let scale = fine.max_abs();
    let defect = fine.max_abs_diff(&coarse);
    (fine, defect, scale)
}

fn check_refinement(defect: f64, scale: f64) -> Result<()> {
    if defect > CELL_CONVERGENCE * scale.max(1e-300) {
        return Err(Error::QuadratureFailure(format!(
            "near-diagonal refinement not converged: defect {:.2e} over scale {:.2e}",
            defect, scale
        )));
    }
    Ok(())
}

/// Assembles A_ij = ∬ (φ_i(x)-φ_i(y))(φ_j(x)-φ_j(y)) K(x,y) dx dy over all
/// hat functions of the mesh (no boundary condition applied; callers select
/// rows/columns). Parallel over element pairs with an order-preserving
/// reduction, so the result is bitwise deterministic for any thread count.
pub fn assemble_diff_matrix<K: DiffKernel>(mesh: &[f64], kernel: &K, q: &QuadSpec) -> Result<DMatrix<f64>> {
    q.validate()?;
    let ne = mesh.len() - 1;
    let rules = Rules::new(kernel.singular_exponent(), q);
    let pairs: Vec<(usize, usize)> = (0..ne).flat_map(|a| (a..ne).map(move |b| (a, b))).collect();
    let blocks: Vec<(LocalBlock, f64, f64)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            if b <= a + 1 {
                singular_pair_block(a, b, mesh, kernel, &rules)
            } else {
                let blk =
                    disjoint_block(a, b, (mesh[a], mesh[a + 1]), (mesh[b], mesh[b + 1]), kernel, &rules);
                (blk, 0.0, 0.0)
            }
        })
        .collect();

    let n = mesh.len();
    let mut mat = DMatrix::<f64>::zeros(n, n);
    let (mut defect, mut scale) = (0.0, 0.0);
    for (blk, d, s) in blocks {
        defect += d;
        scale += s;
        for i in 0..blk.len {
            for j in 0..blk.len {
                mat[(blk.nodes[i], blk.nodes[j])] += blk.m[i][j];
            }
        }
    }
    check_refinement(defect, scale)?;
    Ok(mat)
}

/// ∬ (f(x)-f(y))(g(x)-g(y)) K(x,y) dx dy over mesh × mesh, for smooth-per-
/// element profiles.
pub fn energy_bilinear<K, F, G>(mesh: &[f64], kernel: &K, q: &QuadSpec, f: F, g: G) -> Result<f64>
where
    K: DiffKernel,
    F: Fn(f64) -> f64 + Sync,
    G: Fn(f64) -> f64 + Sync,
{
    q.validate()?;
    let ne = mesh.len() - 1;
    let rules = Rules::new(kernel.singular_exponent(), q);
    let pairs: Vec<(usize, usize)> = (0..ne).flat_map(|a| (a..ne).map(move |b| (a, b))).collect();
    let parts: Vec<(f64, f64, f64)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let mut acc = 0.0;
            let mut sink = |x: f64, y: f64, w: f64| {
                acc += w * kernel.eval(x, y) * (f(x) - f(y)) * (g(x) - g(y));
            };
            if a == b {
                let mut coarse = 0.0;
                identical_nodes(mesh[a], mesh[a + 1], &rules, false, &mut |x, y, w| {
                    coarse += w * kernel.eval(x, y) * (f(x) - f(y)) * (g(x) - g(y));
                });
                identical_nodes(mesh[a], mesh[a + 1], &rules, true, &mut sink);
                (acc, (acc - coarse).abs(), acc.abs())
            } else if b == a + 1 {
                let (h1, h2) = (mesh[b] - mesh[a], mesh[b + 1] - mesh[b]);
                let mut coarse = 0.0;
                touching_nodes(mesh[b], h1, h2, &rules, false, &mut |x, y, w| {
                    coarse += 2.0 * w * kernel.eval(x, y) * (f(x) - f(y)) * (g(x) - g(y));
                });
                touching_nodes(mesh[b], h1, h2, &rules, true, &mut |x, y, w| {
                    sink(x, y, 2.0 * w);
                });
                (acc, (acc - coarse).abs(), acc.abs())
            } else {
                disjoint_nodes((mesh[a], mesh[a + 1]), (mesh[b], mesh[b + 1]), &rules, 0, &mut |x, y, w| {
                    sink(x, y, 2.0 * w);
                });
                (acc, 0.0, 0.0)
            }
        })
        .collect();
    let (mut total, mut defect, mut scale) = (0.0, 0.0, 0.0);
    for (v, d, s) in parts {
        total += v;
        defect += d;
        scale += s;
    }
    check_refinement(defect, scale)?;
    Ok(total)
}

/// Quadratic form ∬ (f(x)-f(y))² K(x,y) dx dy.
pub fn energy_quadratic<K, F>(mesh: &[f64], kernel: &K, q: &QuadSpec, f: F) -> Result<f64>
where
    K: DiffKernel,
    F: Fn(f64) -> f64 + Sync,
{
    energy_bilinear(mesh, kernel, q, &f, &f)
}
