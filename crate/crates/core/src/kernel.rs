//! The angular reduction kernel of the fractional Gagliardo form on
//! rotationally symmetric geometries, and the killing measure of the unit
//! ball.
//!
//! For radial u the double integral of the quadratic form reduces over
//! spheres to
//!   Q(u) = (c_{N,s}/2) ω_{N-1} ∬ (u(r)-u(ρ))² k(r,ρ) r^{N-1} ρ^{N-1} dr dρ,
//! with k(r,ρ) = ∫_{S^{N-1}} |r e₁ - ρω|^{-(N+2s)} dσ(ω). The polar-angle
//! form used here is |S^{N-2}| ∫₀^π ((r-ρ)² + 4rρ sin²(θ/2))^{-(N+2s)/2}
//! sin^{N-2}θ dθ; for N = 1 the sphere is two points and k degenerates to
//! |r-ρ|^{-1-2s} + (r+ρ)^{-1-2s}.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::constants::Params;
use crate::error::{Error, Result};
use crate::grid::QuadSpec;
use crate::quad::{gauss_unit, integrate_adaptive};
use crate::special::sphere_area;

const MAX_ANGULAR_LEVELS: usize = 48;

/// Precomputed trig values on the dyadic panel decomposition of [0, π].
/// Panel j covers [π 2^{-j-1}, π 2^{-j}]; bottom panel J covers [0, π 2^{-J}].
struct AngularTable {
    /// panel j -> (sin²(θ/2), sin θ, gauss weight × panel length) per node
    panels: Vec<Vec<(f64, f64, f64)>>,
    /// bottom panel for each truncation level J
    bottoms: Vec<Vec<(f64, f64, f64)>>,
}

fn angular_table(order: usize) -> Arc<AngularTable> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<AngularTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&order) {
        return t.clone();
    }
    let gl = gauss_unit(order);
    let pi = std::f64::consts::PI;
    let build = |lo: f64, hi: f64| -> Vec<(f64, f64, f64)> {
        gl.nodes
            .iter()
            .zip(&gl.weights)
            .map(|(&x, &w)| {
                let theta = lo + (hi - lo) * x;
                let sh = (0.5 * theta).sin();
                (sh * sh, theta.sin(), w * (hi - lo))
            })
            .collect()
    };
    let mut panels = Vec::with_capacity(MAX_ANGULAR_LEVELS);
    let mut bottoms = Vec::with_capacity(MAX_ANGULAR_LEVELS + 1);
    for j in 0..MAX_ANGULAR_LEVELS {
        let hi = pi * 0.5f64.powi(j as i32);
        panels.push(build(0.5 * hi, hi));
    }
    for j in 0..=MAX_ANGULAR_LEVELS {
        let hi = pi * 0.5f64.powi(j as i32);
        bottoms.push(build(0.0, hi));
    }
    let table = Arc::new(AngularTable { panels, bottoms });
    cache.lock().unwrap().insert(order, table.clone());
    table
}

/// Reusable evaluator of k(r, ρ) for fixed (N, s) and angular order.
#[derive(Clone)]
pub struct AngularEval {
    n: u32,
    neg_half_exponent: f64,
    sin_power: i32,
    prefactor: f64,
    omega: f64,
    table: Arc<AngularTable>,
}

impl AngularEval {
    pub fn new(p: &Params, q: &QuadSpec) -> Self {
        let n = p.n;
        AngularEval {
            n,
            neg_half_exponent: -(n as f64 + 2.0 * p.s) / 2.0,
            sin_power: n as i32 - 2,
            prefactor: if n >= 2 { sphere_area(n - 1) } else { 0.0 },
            omega: sphere_area(n),
            table: angular_table(q.angular_order),
        }
    }

    /// k(r, ρ) for r ≠ ρ, (r, ρ) ≠ (0, 0).
    pub fn eval(&self, r: f64, rho: f64) -> f64 {
        let d2 = (r - rho) * (r - rho);
        if self.n == 1 {
            return d2.powf(self.neg_half_exponent) + ((r + rho) * (r + rho)).powf(self.neg_half_exponent);
        }
        let a = 4.0 * r * rho;
        if a == 0.0 {
            // one of the radii is zero: the integrand is θ-independent up to
            // the sine weight, whose integral is ω_{N-1}/|S^{N-2}|
            return self.omega * d2.powf(self.neg_half_exponent);
        }
        // refine dyadically until the panel size resolves the peak width
        let w = 2.0 * (d2 / a).sqrt();
        let levels = if w >= std::f64::consts::PI {
            0
        } else {
            (((std::f64::consts::PI / w).log2().ceil()) as usize).min(MAX_ANGULAR_LEVELS)
        };
        let mut acc = 0.0;
        for panel in &self.table.panels[..levels] {
            for &(s2h, sth, wq) in panel {
                acc += wq * (d2 + a * s2h).powf(self.neg_half_exponent) * sth.powi(self.sin_power);
            }
        }
        for &(s2h, sth, wq) in &self.table.bottoms[levels] {
            acc += wq * (d2 + a * s2h).powf(self.neg_half_exponent) * sth.powi(self.sin_power);
        }
        self.prefactor * acc
    }
}

/// Angular average k(r, ρ); symmetric in its arguments, singular on the
/// diagonal (handled by the assembly routines, not here).
pub fn angular_kernel(p: &Params, r: f64, rho: f64, q: &QuadSpec) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) || !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("radii must lie in [0,1], got ({r}, {rho})")));
    }
    if r == rho {
        return Err(Error::SingularInput(format!(
            "angular kernel is singular on the diagonal r = ρ = {r}"
        )));
    }
    Ok(AngularEval::new(p, q).eval(r, rho))
}

/// c_{N,s} ∫_{ρ>1} ρ^{N-1} W(ρ) k(r, ρ) dρ for a smooth weight W.
/// With W ≡ 1 this is the killing measure; with W = R it is the exterior
/// Riesz moment used by the Green-problem consistency check.
pub(crate) fn exterior_weighted_integral<W>(p: &Params, r: f64, q: &QuadSpec, weight: W) -> f64
where
    W: Fn(f64) -> f64 + Copy,
{
    let ang = AngularEval::new(p, q);
    let c = p.gagliardo_constant();
    let npow = p.n as i32 - 1;
    let f = |rho: f64| rho.powi(npow) * weight(rho) * ang.eval(r, rho);
    // scale of the answer, used for the absolute tolerance of the adaptive
    // passes: the closed-form value at the center times the boundary blowup
    let scale = p.killing_bound_coefficient() * (1.0 - r).powf(-2.0 * p.s).max(1.0);
    let tol = 1e-11 * scale;
    let near = integrate_adaptive(&f, 1.0, 2.0, tol);
    // Far field via ρ = 1/t: the substituted integrand is t^{2s-1} times a
    // smooth factor, so a power-weighted rule on (0, 1/2] captures it.
    let far_rule = crate::quad::graded_power_rule(16, 2.0 * p.s - 1.0, 24);
    let half = 0.5f64;
    let far: f64 = far_rule
        .nodes
        .iter()
        .zip(&far_rule.weights)
        .map(|(&u, &w)| {
            let t = half * u;
            w * f(1.0 / t) * t.powf(-1.0 - 2.0 * p.s)
        })
        .sum::<f64>()
        * half.powf(2.0 * p.s);
    c * (near + far)
}

/// Killing measure κ_B(|x|) = c_{N,s} ∫_{R^N \ B} |x-y|^{-N-2s} dy of the
/// unit ball, as a radial profile on [0, 1). Monotone nondecreasing, blows
/// up like dist(x, ∂B)^{-2s} at the boundary.
pub fn killing_measure(p: &Params, x_radius: f64, q: &QuadSpec) -> Result<f64> {
    if !(0.0..1.0).contains(&x_radius) {
        return Err(Error::Domain(format!(
            "killing measure needs 0 <= |x| < 1, got {x_radius}"
        )));
    }
    Ok(exterior_weighted_integral(p, x_radius, q, |_| 1.0))
}

/// Radially reduced Gagliardo kernel in linear coordinates:
/// (c_{N,s}/2) ω_{N-1} k(x, y) (xy)^{N-1}, so that applying it to
/// (u(x)-u(y))² over a radial mesh yields the quadratic form of the domain
/// the mesh covers.
pub struct BallKernel {
    ang: AngularEval,
    pref: f64,
    npow: i32,
    alpha: f64,
}

impl BallKernel {
    pub fn new(p: &Params, q: &QuadSpec) -> Self {
        BallKernel {
            ang: AngularEval::new(p, q),
            pref: p.gagliardo_constant() / 2.0 * p.sphere_area(),
            npow: p.n as i32 - 1,
            alpha: 1.0 + 2.0 * p.s,
        }
    }
}

impl crate::assembly::DiffKernel for BallKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.pref * self.ang.eval(x, y) * (x * y).powi(self.npow)
    }

    fn singular_exponent(&self) -> f64 {
        self.alpha
    }
}

/// Plain interval kernel (c_{1,s}/2) |x-y|^{-1-2s}: the regional form on a
/// one-dimensional interval, without any reflection term.
pub struct IntervalKernel {
    pref: f64,
    alpha: f64,
}

impl IntervalKernel {
    pub fn new(p: &Params) -> Self {
        assert_eq!(p.n, 1, "interval geometry is one-dimensional");
        IntervalKernel { pref: p.gagliardo_constant() / 2.0, alpha: 1.0 + 2.0 * p.s }
    }
}

impl crate::assembly::DiffKernel for IntervalKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.pref * (x - y).abs().powf(-self.alpha)
    }

    fn singular_exponent(&self) -> f64 {
        self.alpha
    }
}

/// Ball kernel in logarithmic radius τ = ln r, used for whole-space
/// integrals where the domain (0, ∞) must be compressed: the r^{N-1} dr
/// weights become e^{Nτ} dτ on each leg.
pub struct LogBallKernel {
    ang: AngularEval,
    pref: f64,
    nf: f64,
    alpha: f64,
}

impl LogBallKernel {
    pub fn new(p: &Params, q: &QuadSpec) -> Self {
        LogBallKernel {
            ang: AngularEval::new(p, q),
            pref: p.gagliardo_constant() / 2.0 * p.sphere_area(),
            nf: p.n as f64,
            alpha: 1.0 + 2.0 * p.s,
        }
    }
}

impl crate::assembly::DiffKernel for LogBallKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.pref * self.ang.eval(x.exp(), y.exp()) * ((x + y) * self.nf).exp()
    }

    fn singular_exponent(&self) -> f64 {
        self.alpha
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q() -> QuadSpec {
        QuadSpec::default()
    }

    #[test]
    fn one_dimensional_two_point_sum() {
        let p = Params::new(1, 0.5).unwrap();
        let got = angular_kernel(&p, 0.5, 0.25, &q()).unwrap();
        let want = 16.0 + 16.0 / 9.0;
        assert!(((got - want) / want).abs() < 1e-14, "got {got}");
    }

    #[test]
    fn center_value_closed_form() {
        // k(r, 0) = ω_{N-1} r^{-(N+2s)}; for N = 2 that is 2π r^{-(2+2s)}
        let p = Params::new(2, 0.75).unwrap();
        let r = 0.37;
        let got = angular_kernel(&p, r, 0.0, &q()).unwrap();
        let want = 2.0 * std::f64::consts::PI * r.powf(-(2.0 + 1.5));
        assert!(((got - want) / want).abs() < 1e-13, "got {got}, want {want}");
        let p3 = Params::new(3, 0.6).unwrap();
        let got = angular_kernel(&p3, 0.0, 0.5, &q()).unwrap();
        let want = 4.0 * std::f64::consts::PI * 0.5f64.powf(-(3.0 + 1.2));
        assert!(((got - want) / want).abs() < 1e-13);
    }

    #[test]
    fn matches_reference_quadrature() {
        // frozen from 30-digit quadrature of the polar-angle integral
        let p = Params::new(3, 0.6).unwrap();
        let got = angular_kernel(&p, 0.8, 0.4, &q()).unwrap();
        let want = 61.0240948417147368;
        assert!(((got - want) / want).abs() < 1e-10, "got {got}");

        let p = Params::new(2, 0.75).unwrap();
        let got = angular_kernel(&p, 0.5, 0.2, &q()).unwrap();
        let want = 119.840993206276022;
        assert!(((got - want) / want).abs() < 1e-10, "got {got}");
    }

    #[test]
    fn matches_independent_adaptive_oracle() {
        let p = Params::new(3, 0.6).unwrap();
        let (r, rho) = (0.8, 0.4);
        let expo = -(3.0 + 1.2) / 2.0;
        let oracle = 2.0
            * std::f64::consts::PI
            * integrate_adaptive(
                |t| (r * r + rho * rho - 2.0 * r * rho * t.cos()).powf(expo) * t.sin(),
                0.0,
                std::f64::consts::PI,
                1e-12,
            );
        let got = angular_kernel(&p, r, rho, &q()).unwrap();
        assert!(((got - oracle) / oracle).abs() < 1e-8, "got {got}, oracle {oracle}");
    }

    #[test]
    fn diagonal_is_rejected() {
        let p = Params::new(2, 0.6).unwrap();
        assert!(matches!(
            angular_kernel(&p, 0.3, 0.3, &q()),
            Err(Error::SingularInput(_))
        ));
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric(
            n in 1u32..4,
            s in 0.1f64..0.95,
            r in 0.01f64..1.0,
            t in 0.05f64..0.9,
        ) {
            let p = Params::new(n, s).unwrap();
            let rho = r * t; // guarantees rho < r
            let a = angular_kernel(&p, r, rho, &q()).unwrap();
            let b = angular_kernel(&p, rho, r, &q()).unwrap();
            prop_assert!(((a - b) / a).abs() < 1e-13);
        }
    }

    #[test]
    fn killing_measure_center_closed_form() {
        // κ(0) = c ω_{N-1} / (2s)
        for (n, s, want) in [
            (2u32, 0.7, 0.801556641995636426),
            (2, 0.75, 0.716983196229187493),
            (3, 0.6, 1.22301457634490975),
        ] {
            let p = Params::new(n, s).unwrap();
            let got = killing_measure(&p, 0.0, &q()).unwrap();
            assert!(((got - want) / want).abs() < 1e-9, "N={n} s={s}: got {got}");
            assert!(((got - p.killing_bound_coefficient()) / got).abs() < 1e-9);
        }
    }

    #[test]
    fn killing_measure_one_dimensional_closed_form() {
        // N = 1: κ(r) = c/(2s) [(1-r)^{-2s} + (1+r)^{-2s}]
        let p = Params::new(1, 0.3).unwrap();
        let c = p.gagliardo_constant();
        for &r in &[0.0f64, 0.4, 0.85] {
            let want = c / 0.6 * ((1.0 - r).powf(-0.6) + (1.0 + r).powf(-0.6));
            let got = killing_measure(&p, r, &q()).unwrap();
            assert!(((got - want) / want).abs() < 1e-9, "r={r}: got {got}, want {want}");
        }
    }

    #[test]
    fn killing_measure_monotone_and_bounded() {
        let p = Params::new(2, 0.7).unwrap();
        let a = p.killing_bound_coefficient();
        let mut prev = 0.0;
        for &r in &[0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.95] {
            let k = killing_measure(&p, r, &q()).unwrap();
            assert!(k >= prev, "not monotone at r={r}");
            // Lemma-type bound with ρ = r
            assert!(k <= a * (1.0 - r).powf(-1.4) * (1.0 + 1e-9));
            prev = k;
        }
        assert!(killing_measure(&p, 1.0, &q()).is_err());
    }
}
