//! Explicit test-function families: logarithmic cutoffs χ_k, the
//! boundary-layer cutoff on the ball, Aubin-Talenti bubbles, the
//! whole-space sharp-constant estimate at the bubble, and the
//! mass-corrected family for the low-dimension pathway.

use std::sync::Arc;

use crate::constants::{Params, RieszConvention};
use crate::error::{Error, Result};
use crate::grid::{QuadSpec, RadialFunction, RadialGrid};
use crate::kernel::LogBallKernel;
use crate::quad::integrate_adaptive;

/// Logarithmic cutoff χ_k: 0 below 1/k², log(k²t)/log k in between, 1 above
/// 1/k. Continuous and nondecreasing; k ≥ 2.
pub fn chi_k(t: f64, k: u32) -> f64 {
    assert!(k >= 2, "cutoff index k must be >= 2");
    assert!(t >= 0.0, "chi_k takes nonnegative arguments");
    let kf = k as f64;
    let lo = 1.0 / (kf * kf);
    let hi = 1.0 / kf;
    if t <= lo {
        0.0
    } else if t >= hi {
        1.0
    } else {
        (kf * kf * t).ln() / kf.ln()
    }
}

/// C² radial cutoff: 1 on [0, plateau], quintic smoothstep down to 0 at
/// 2·plateau, 0 beyond.
pub fn smooth_bump(r: f64, plateau: f64) -> f64 {
    debug_assert!(plateau > 0.0);
    if r <= plateau {
        1.0
    } else if r >= 2.0 * plateau {
        0.0
    } else {
        let t = (r - plateau) / plateau;
        1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Boundary-layer cutoff u_k(x) = χ_k(1 - |x|) interpolated on the grid.
/// The grid must resolve the inner transition: r_{M-1} ≥ 1 - 1/k².
pub fn boundary_cutoff(k: u32, grid: &Arc<RadialGrid>) -> Result<RadialFunction> {
    if k < 2 {
        return Err(Error::InvalidParams(format!("cutoff index k must be >= 2, got {k}")));
    }
    let kf = k as f64;
    let nodes = grid.nodes();
    let second_last = nodes[nodes.len() - 2];
    if second_last < 1.0 - 1.0 / (kf * kf) {
        return Err(Error::UnderResolvedGrid(format!(
            "boundary cutoff k={k} needs r_(M-1) >= 1 - 1/k² = {}, grid has {second_last}",
            1.0 - 1.0 / (kf * kf)
        )));
    }
    Ok(RadialFunction::from_profile(grid.clone(), |r| chi_k(1.0 - r, k)))
}

/// Aubin-Talenti bubble u_ε(x) = γ₀ (ε/(ε²+|x|²))^{(N-2s)/2}, normalized to
/// unit critical norm on R^N.
#[derive(Debug, Clone, Copy)]
pub struct Bubble {
    pub eps: f64,
    pub params: Params,
    gamma0: f64,
    half_exponent: f64,
}

impl Bubble {
    pub fn new(params: Params, eps: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(Error::InvalidParams(format!("bubble scale must be positive, got {eps}")));
        }
        let gamma0 = params.bubble_normalization()?;
        Ok(Bubble {
            eps,
            params,
            gamma0,
            half_exponent: (params.n as f64 - 2.0 * params.s) / 2.0,
        })
    }

    pub fn eval(&self, radius: f64) -> f64 {
        let e = self.eps;
        self.gamma0 * (e / (e * e + radius * radius)).powf(self.half_exponent)
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    /// ε^{(N-2s)/2}, the amplitude of the mass correction.
    pub fn correction_scale(&self) -> f64 {
        self.eps.powf(self.half_exponent)
    }
}

/// Whole-space quotient of the bubble, which is the sharp Sobolev constant
/// S_{N,s}(R^N): the ground-truth comparator for the strict-inequality
/// experiments.
#[derive(Debug, Clone, Copy)]
pub struct SharpConstant {
    /// quotient at the larger truncation radius
    pub value: f64,
    /// quotient at the radius shrunk by e²
    pub value_smaller_radius: f64,
    /// analytic bound on the dropped tail, relative to the value
    pub tail_bound_rel: f64,
    pub radius: f64,
}

impl SharpConstant {
    pub fn radii_gap_rel(&self) -> f64 {
        ((self.value - self.value_smaller_radius) / self.value).abs()
    }
}

/// Conservative analytic bound on the Gagliardo energy carried by the region
/// where either point lies outside B_R, using |u_ε| ≤ A |x|^{2s-N} and
/// |∇u_ε| ≤ A (N-2s) |x|^{2s-N-1}.
fn bubble_tail_bound(p: &Params, eps: f64, radius: f64) -> f64 {
    let n = p.n as f64;
    let s = p.s;
    let c = p.gagliardo_constant();
    let om = p.sphere_area();
    let gamma0 = p.bubble_normalization().expect("validated");
    let a = gamma0 * eps.powf((n - 2.0 * s) / 2.0);
    let a2 = a * a;
    let r_pow = radius.powf(2.0 * s - n);

    // near-diagonal strip, gradient-controlled
    let near = a2 * (n - 2.0 * s) * om * om * 2f64.powf(2.0 * n - 2.0 * s) / (2.0 - 2.0 * s) * r_pow;
    // far pairs, u(y)² side
    let far_outer = 2f64.powf(1.0 + 2.0 * s) * om * om / (2.0 * s) * a2 * r_pow / (n - 2.0 * s);
    // far pairs, u(x)² side: needs ∫_{B_R} u² which depends on the sign of N-4s
    let l2_inside = {
        let u0sq = gamma0 * gamma0 * eps.powf(2.0 * s - n);
        let ball = u0sq * om * eps.powf(n) / n;
        let shell_exp = 4.0 * s - n;
        let shell = if shell_exp.abs() < 1e-12 {
            a2 * om * (radius / eps).ln()
        } else {
            a2 * om * (radius.powf(shell_exp) - eps.powf(shell_exp)) / shell_exp
        };
        ball + shell.max(0.0)
    };
    let far_inner = 2.0 * om * 2f64.powf(n + 2.0 * s) / (2.0 * s)
        * (radius.powf(-2.0 * s) * l2_inside + a2 * om * r_pow / (n - 2.0 * s));
    c * (near + far_outer + far_inner)
}

/// Bound on the energy carried by pairs with a point inside B_{r0}, r0 ≤ ε/2.
fn bubble_origin_bound(p: &Params, eps: f64, r0: f64) -> f64 {
    let n = p.n as f64;
    let s = p.s;
    let c = p.gagliardo_constant();
    let om = p.sphere_area();
    let gamma0 = p.bubble_normalization().expect("validated");
    let u0 = gamma0 * eps.powf((2.0 * s - n) / 2.0);
    let a2 = gamma0 * gamma0 * eps.powf(n - 2.0 * s);
    let grad = gamma0 * eps.powf((2.0 * s - n) / 2.0 - 1.0) * (n - 2.0 * s) / 2.0;
    let quarter = eps / 4.0;
    let g_near = grad * grad * om * quarter.powf(2.0 - 2.0 * s) / (2.0 - 2.0 * s);
    let g_far = 2.0 * u0 * u0 * om * quarter.powf(-2.0 * s) / (2.0 * s)
        + 2.0 * (quarter.powf(-n - 2.0 * s) * u0 * u0 * om * (2.0 * eps).powf(n) / n
            + a2 * 2f64.powf(n + 2.0 * s) * om * (2.0 * eps).powf(2.0 * s - 2.0 * n)
                / (2.0 * n - 2.0 * s));
    c * om * r0.powf(n) / n * (g_near + g_far)
}

fn log_mesh(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).ceil().max(4.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

fn bubble_quotient_on(p: &Params, q: &QuadSpec, bubble: &Bubble, tau_min: f64, tau_max: f64) -> Result<f64> {
    let kernel = LogBallKernel::new(p, q);
    let mesh = log_mesh(tau_min, tau_max, 0.25);
    let energy =
        crate::assembly::energy_quadratic(&mesh, &kernel, q, |t| bubble.eval(t.exp()))?;
    // critical norm over the same radial window; the integrand decays like
    // r^{-N-1}, so the window truncation is far below the energy tail
    let two_star = p.critical_exponent()?;
    let om = p.sphere_area();
    let nf = p.n as f64;
    let norm_int = integrate_adaptive(
        |t| bubble.eval(t.exp()).powf(two_star) * (nf * t).exp(),
        tau_min,
        tau_max,
        1e-12,
    );
    let norm_sq = (om * norm_int).powf(2.0 / two_star);
    Ok(energy / norm_sq)
}

/// Numerically integrated whole-space quotient at the bubble with analytic
/// control of both truncations. `eps` only exercises the scale invariance
/// of the quotient; the default entry point uses ε = 1.
pub fn sharp_constant_estimate_at(p: &Params, q: &QuadSpec, eps: f64) -> Result<SharpConstant> {
    p.critical_exponent()?; // requires N > 2s
    let bubble = Bubble::new(*p, eps)?;

    // proxy scale for relative tolerances; refined after the first pass
    let mut scale_proxy = 0.5;
    let mut radius = 50.0 / eps;
    let mut last = None;
    for _ in 0..40 {
        if bubble_tail_bound(p, eps, radius) <= 1e-5 * scale_proxy {
            break;
        }
        radius *= 4.0;
        if radius.ln() > 250.0 {
            return Err(Error::TailEstimate(format!(
                "cannot certify the far-field tail below 1e-5 relative (radius {radius:.3e})"
            )));
        }
        last = Some(radius);
    }
    let _ = last;

    let mut r0 = eps / 4.0;
    while bubble_origin_bound(p, eps, r0) > 1e-6 * scale_proxy {
        r0 *= 0.25;
        if r0 < 1e-60 {
            break;
        }
    }

    let value = bubble_quotient_on(p, q, &bubble, r0.ln(), radius.ln())?;
    scale_proxy = value;
    // re-verify the bounds against the actual value
    if bubble_tail_bound(p, eps, radius) > 1e-5 * scale_proxy {
        return Err(Error::TailEstimate(
            "tail bound exceeds 1e-5 of the computed quotient".into(),
        ));
    }
    let value_smaller = bubble_quotient_on(p, q, &bubble, r0.ln(), radius.ln() - 2.0)?;
    Ok(SharpConstant {
        value,
        value_smaller_radius: value_smaller,
        tail_bound_rel: bubble_tail_bound(p, eps, radius) / scale_proxy,
        radius,
    })
}

/// S_der ≈ S_{N,s}(R^N) at ε = 1.
pub fn sharp_constant_estimate(p: &Params, q: &QuadSpec) -> Result<SharpConstant> {
    sharp_constant_estimate_at(p, q, 1.0)
}

/// Weak Euler-Lagrange residuals of the bubble: tests
/// (-Δ)^s u_ε = S u_ε^{2*-1} against compactly supported radial tents via
/// the full-space bilinear form. Returns the relative residual per tent.
pub fn bubble_el_residuals(p: &Params, q: &QuadSpec, eps: f64) -> Result<Vec<f64>> {
    let bubble = Bubble::new(*p, eps)?;
    let sharp = sharp_constant_estimate_at(p, q, eps)?;
    let two_star = p.critical_exponent()?;
    let om = p.sphere_area();
    let nf = p.n as f64;
    let kernel = LogBallKernel::new(p, q);

    let centers = [0.3, 0.6, 1.0, 1.6, 2.5];
    let mut residuals = Vec::with_capacity(centers.len());
    for &c0 in &centers {
        let (lo, hi) = (0.75 * c0, 1.25 * c0);
        let tent = move |r: f64| -> f64 {
            if r <= lo || r >= hi {
                0.0
            } else if r <= c0 {
                (r - lo) / (c0 - lo)
            } else {
                (hi - r) / (hi - c0)
            }
        };
        // mesh must contain the tent knots; tails as for the quotient
        let mut mesh = log_mesh((1e-4f64).ln(), (1e6f64).ln(), 0.25);
        for knot in [lo, c0, hi] {
            mesh.push(knot.ln());
        }
        mesh.sort_by(|a, b| a.partial_cmp(b).unwrap());
        mesh.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let lhs = crate::assembly::energy_bilinear(
            &mesh,
            &kernel,
            q,
            |t| bubble.eval(t.exp()),
            |t| tent(t.exp()),
        )?;
        let rhs = sharp.value
            * om
            * integrate_adaptive(
                |t| {
                    let r = t.exp();
                    bubble.eval(r).powf(two_star - 1.0) * tent(r) * (nf * t).exp()
                },
                lo.ln(),
                hi.ln(),
                1e-12,
            );
        residuals.push(((lhs - rhs) / rhs).abs());
    }
    Ok(residuals)
}

/// Mass-corrected family v_ε = η u_ε + ε^{(N-2s)/2} (γ₀/t_{N,s}) κ with the
/// C² bump η of plateau `r_cut` (support 2 r_cut). Only meaningful in the
/// low-dimension window 2s < N < 4s, with κ solved by the Green-mass module
/// using the same cutoff radius.
pub fn mass_corrected_family(
    p: &Params,
    eps: f64,
    r_cut: f64,
    mass_field: &RadialFunction,
    convention: RieszConvention,
) -> Result<RadialFunction> {
    let n = p.n as f64;
    if !(2.0 * p.s < n && n < 4.0 * p.s) {
        return Err(Error::DimensionWindow { n: p.n, s: p.s });
    }
    if !(0.0 < r_cut && r_cut < 0.25) {
        return Err(Error::Domain(format!("cutoff radius must lie in (0, 1/4), got {r_cut}")));
    }
    if eps > r_cut / 4.0 {
        return Err(Error::Domain(format!(
            "bubble scale ε = {eps} too large; require ε ≤ r_cut/4 = {}",
            r_cut / 4.0
        )));
    }
    let bubble = Bubble::new(*p, eps)?;
    let a_s = p.mass_amplitude(convention)?;
    let amp = bubble.correction_scale() * a_s;
    let grid = mass_field.grid().clone();
    let kappa = mass_field.values().to_vec();
    let mut values: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&kappa)
        .map(|(&r, &k)| smooth_bump(r, r_cut) * bubble.eval(r) + amp * k)
        .collect();
    let last = values.len() - 1;
    values[last] = 0.0;
    RadialFunction::new(grid, values)
}
