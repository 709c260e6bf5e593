//! Energy functionals and their matrices over the radial hat basis:
//! regional stiffness, killing-weighted mass, potential and L² mass
//! matrices, L^p norms of interpolants, and the critical Rayleigh quotient.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::assemble_diff_matrix;
use crate::constants::Params;
use crate::error::{Error, Result};
use crate::grid::{QuadSpec, RadialFunction, RadialGrid};
use crate::kernel::{killing_measure, BallKernel};
use crate::quad::{gauss_unit, graded_power_rule};

/// Bounded radial potential sampled at the grid nodes, interpolated
/// piecewise-linearly.
#[derive(Debug, Clone)]
pub struct Potential {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    bound: f64,
}

impl Potential {
    pub fn constant(grid: Arc<RadialGrid>, value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidParams("potential value must be finite".into()));
        }
        let n = grid.nodes().len();
        Ok(Potential { grid, values: vec![value; n], bound: value.abs() })
    }

    /// Interpolates (r, h(r)) samples onto the grid; samples must be sorted
    /// by radius and lie in [0, 1].
    pub fn from_samples(grid: Arc<RadialGrid>, samples: &[(f64, f64)]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParams("potential needs at least one sample".into()));
        }
        for w in samples.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidParams(
                    "potential samples must be strictly increasing in r".into(),
                ));
            }
        }
        if samples.iter().any(|&(r, v)| !(0.0..=1.0).contains(&r) || !v.is_finite()) {
            return Err(Error::InvalidParams(
                "potential samples must have r in [0,1] and finite values".into(),
            ));
        }
        let interp = |r: f64| -> f64 {
            if r <= samples[0].0 {
                return samples[0].1;
            }
            if r >= samples[samples.len() - 1].0 {
                return samples[samples.len() - 1].1;
            }
            let i = samples.iter().rposition(|&(x, _)| x <= r).unwrap();
            let (x0, v0) = samples[i];
            let (x1, v1) = samples[i + 1];
            v0 + (v1 - v0) * (r - x0) / (x1 - x0)
        };
        let values: Vec<f64> = grid.nodes().iter().map(|&r| interp(r)).collect();
        let bound = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        Ok(Potential { grid, values, bound })
    }

    pub fn eval(&self, r: f64) -> f64 {
        let nodes = self.grid.nodes();
        if r <= 0.0 {
            return self.values[0];
        }
        if r >= 1.0 {
            return self.values[self.values.len() - 1];
        }
        let i = match nodes.binary_search_by(|n| n.partial_cmp(&r).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let t = (r - nodes[i]) / (nodes[i + 1] - nodes[i]);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Recorded L^∞ bound of the samples.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
}

/// Assembled matrices of the radial forms, all over the free nodes
/// r₀..r_{M-1} (the trace node is eliminated).
pub struct FormMatrices {
    params: Params,
    quad: QuadSpec,
    grid: Arc<RadialGrid>,
    a_reg: DMatrix<f64>,
    k: DMatrix<f64>,
    m2: DMatrix<f64>,
    mh: DMatrix<f64>,
    h: Option<Potential>,
}

impl FormMatrices {
    /// Assembles the regional stiffness, killing, L² and potential matrices
    /// on the grid. The potential matrix is zero when `h` is `None`.
    pub fn assemble(
        params: &Params,
        grid: &Arc<RadialGrid>,
        quad: &QuadSpec,
        h: Option<&Potential>,
    ) -> Result<Self> {
        quad.validate()?;
        if let Some(pot) = h {
            if pot.grid.nodes() != grid.nodes() {
                return Err(Error::GridMismatch);
            }
        }
        let kernel = BallKernel::new(params, quad);
        let full = assemble_diff_matrix(grid.nodes(), &kernel, quad)?;
        let m = grid.num_elements();
        let a_reg = full.view((0, 0), (m, m)).into_owned();

        let k = assemble_weighted_mass(params, grid, quad, WeightKind::Killing)?;
        let m2 = assemble_weighted_mass(params, grid, quad, WeightKind::One)?;
        let mh = match h {
            Some(pot) => assemble_weighted_mass(params, grid, quad, WeightKind::Potential(pot))?,
            None => DMatrix::zeros(m, m),
        };
        Ok(FormMatrices {
            params: *params,
            quad: *quad,
            grid: grid.clone(),
            a_reg,
            k,
            m2,
            mh,
            h: h.cloned(),
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn quad(&self) -> &QuadSpec {
        &self.quad
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn potential(&self) -> Option<&Potential> {
        self.h.as_ref()
    }

    pub fn a_reg(&self) -> &DMatrix<f64> {
        &self.a_reg
    }

    pub fn killing(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn m2(&self) -> &DMatrix<f64> {
        &self.m2
    }

    pub fn mh(&self) -> &DMatrix<f64> {
        &self.mh
    }

    fn check_grid(&self, u: &RadialFunction) -> Result<()> {
        if u.grid().nodes() != self.grid.nodes() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn quad_form(&self, mat: &DMatrix<f64>, u: &RadialFunction) -> f64 {
        let v = DVector::from_column_slice(u.free_values());
        (v.transpose() * mat * &v)[(0, 0)]
    }

    /// Regional quadratic form Q_{N,s,B}(u_h) = uᵀ A_reg u.
    pub fn regional_energy(&self, u: &RadialFunction) -> Result<f64> {
        self.check_grid(u)?;
        Ok(self.quad_form(&self.a_reg, u))
    }

    /// Whole-space form via the killing identity: uᵀ (A_reg + K) u.
    pub fn full_energy(&self, u: &RadialFunction) -> Result<f64> {
        self.check_grid(u)?;
        Ok(self.quad_form(&self.a_reg, u) + self.quad_form(&self.k, u))
    }

    /// ∫ κ_B u² term alone.
    pub fn killing_term(&self, u: &RadialFunction) -> Result<f64> {
        self.check_grid(u)?;
        Ok(self.quad_form(&self.k, u))
    }

    /// ∫ h u² term (zero without a potential).
    pub fn potential_term(&self, u: &RadialFunction) -> Result<f64> {
        self.check_grid(u)?;
        Ok(self.quad_form(&self.mh, u))
    }

    /// ‖u‖²_{L²(B)} through the mass matrix (exact for the interpolant).
    pub fn l2_norm_sq(&self, u: &RadialFunction) -> Result<f64> {
        self.check_grid(u)?;
        Ok(self.quad_form(&self.m2, u))
    }

    /// Numerator of the quotient: regional energy plus potential term.
    pub fn numerator(&self, u: &RadialFunction) -> Result<f64> {
        self.check_grid(u)?;
        Ok(self.quad_form(&self.a_reg, u) + self.quad_form(&self.mh, u))
    }

    /// A_reg + Mh, the operator behind the quotient minimization.
    pub fn operator(&self) -> DMatrix<f64> {
        &self.a_reg + &self.mh
    }

    /// Verifies the standing positivity assumption on A_reg + Mh (a
    /// Cholesky factorization must exist). Required before any quotient
    /// minimization with a nontrivial potential.
    pub fn check_coercive(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        nalgebra::Cholesky::new(self.operator()).ok_or_else(|| {
            Error::NonCoercive(
                "A_reg + Mh admits no Cholesky factorization; the discrete form with this potential is not positive"
                    .into(),
            )
        })
    }

    /// Same check for the whole-space operator A_reg + K + Mh used by the
    /// Green-function mass solve.
    pub fn check_coercive_full(&self) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        nalgebra::Cholesky::new(&self.a_reg + &self.k + &self.mh).ok_or_else(|| {
            Error::NonCoercive("A_reg + K + Mh admits no Cholesky factorization".into())
        })
    }
}

enum WeightKind<'a> {
    One,
    Killing,
    Potential(&'a Potential),
}

/// ∫ h φ_i φ_j ω r^{N-1} dr alone, for callers assembling operators with
/// several potentials on one grid.
pub(crate) fn potential_mass_matrix(
    params: &Params,
    grid: &Arc<RadialGrid>,
    quad: &QuadSpec,
    h: &Potential,
) -> Result<DMatrix<f64>> {
    assemble_weighted_mass(params, grid, quad, WeightKind::Potential(h))
}

/// Assembles ∫ w(r) φ_i φ_j ω_{N-1} r^{N-1} dr over free nodes. The killing
/// weight blows up like (1-r)^{-2s} at the boundary; its last-element
/// contribution is integrated with a power-weighted rule in 1-r.
fn assemble_weighted_mass(
    params: &Params,
    grid: &Arc<RadialGrid>,
    quad: &QuadSpec,
    kind: WeightKind,
) -> Result<DMatrix<f64>> {
    let m = grid.num_elements();
    let omega = params.sphere_area();
    let npow = params.n as i32 - 1;
    let rule = gauss_unit(2 * quad.gauss_order);

    let locals: Vec<Result<[f64; 3]>> = (0..m)
        .into_par_iter()
        .map(|e| {
            let (a, b) = grid.element(e);
            let h = b - a;
            let mut loc = [0.0f64; 3]; // (left,left), (left,right), (right,right)
            let boundary_killing = matches!(kind, WeightKind::Killing) && e == m - 1;
            if boundary_killing {
                // substitute σ = 1 - r: κ ~ σ^{-2s} and the surviving hat
                // contributes σ²/h², so the integrand is σ^{2-2s} × smooth
                let delta = 2.0 - 2.0 * params.s;
                let grule =
                    graded_power_rule(2 * quad.gauss_order, delta, quad.diagonal_levels + 8);
                for (&u, &w) in grule.nodes.iter().zip(&grule.weights) {
                    let sigma = h * u;
                    let r = 1.0 - sigma;
                    let smooth = killing_measure(params, r, quad)?
                        * sigma.powf(2.0 * params.s)
                        * omega
                        * r.powi(npow)
                        / (h * h);
                    loc[0] += w * h.powf(delta + 1.0) * smooth;
                }
            } else {
                for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let r = a + h * x;
                    let wv = match &kind {
                        WeightKind::One => 1.0,
                        WeightKind::Killing => killing_measure(params, r, quad)?,
                        WeightKind::Potential(hpot) => hpot.eval(r),
                    };
                    let phi_l = (b - r) / h;
                    let phi_r = (r - a) / h;
                    let base = w * h * omega * wv * r.powi(npow);
                    loc[0] += base * phi_l * phi_l;
                    loc[1] += base * phi_l * phi_r;
                    loc[2] += base * phi_r * phi_r;
                }
            }
            Ok(loc)
        })
        .collect();

    let mut mat = DMatrix::<f64>::zeros(m, m);
    for (e, loc) in locals.into_iter().enumerate() {
        let loc = loc?;
        mat[(e, e)] += loc[0];
        if e + 1 < m {
            mat[(e, e + 1)] += loc[1];
            mat[(e + 1, e)] += loc[1];
            mat[(e + 1, e + 1)] += loc[2];
        }
    }
    Ok(mat)
}

/// L^p norm of the interpolant: (ω_{N-1} ∫₀¹ |u(r)|^p r^{N-1} dr)^{1/p},
/// integrated element-wise with elements split at sign changes so the
/// integrand stays smooth.
pub fn lp_norm(u: &RadialFunction, p_exp: f64, params: &Params, quad: &QuadSpec) -> Result<f64> {
    if p_exp < 1.0 {
        return Err(Error::Domain(format!("L^p norm needs p >= 1, got {p_exp}")));
    }
    let grid = u.grid();
    let omega = params.sphere_area();
    let npow = params.n as i32 - 1;
    let rule = gauss_unit(2 * quad.gauss_order);
    let vals = u.values();
    let mut total = 0.0;
    for e in 0..grid.num_elements() {
        let (a, b) = grid.element(e);
        let (va, vb) = (vals[e], vals[e + 1]);
        let mut pieces = [(a, b), (0.0, 0.0)];
        let mut npieces = 1;
        if va * vb < 0.0 {
            let root = a + (b - a) * va / (va - vb);
            pieces = [(a, root), (root, b)];
            npieces = 2;
        }
        for &(lo, hi) in pieces.iter().take(npieces) {
            let h = hi - lo;
            if h <= 0.0 {
                continue;
            }
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let r = lo + h * x;
                let t = (r - a) / (b - a);
                let uv = va * (1.0 - t) + vb * t;
                total += w * h * uv.abs().powf(p_exp) * r.powi(npow);
            }
        }
    }
    Ok((omega * total).powf(1.0 / p_exp))
}

/// Critical Rayleigh quotient (Q_B(u) + ∫ h u²)/‖u‖²_{2*_s}.
pub fn rayleigh_quotient(u: &RadialFunction, forms: &FormMatrices, params: &Params) -> Result<f64> {
    if u.is_zero() {
        return Err(Error::ZeroFunction("Rayleigh quotient of the zero function".into()));
    }
    let two_star = params.critical_exponent()?;
    let num = forms.numerator(u)?;
    let den = lp_norm(u, two_star, params, forms.quad())?;
    Ok(num / (den * den))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(n: u32, s: f64, m: usize) -> (Params, Arc<RadialGrid>, QuadSpec) {
        let p = Params::new(n, s).unwrap();
        let g = RadialGrid::graded(m, 2.0).unwrap();
        (p, g, QuadSpec::default())
    }

    #[test]
    fn lp_norm_closed_form_and_homogeneity() {
        // u = 1 - r² at N = 2, p = 2: ω₁ ∫ (1-r²)² r dr = 2π/6
        let (p, g, q) = setup(2, 0.75, 256);
        let u = RadialFunction::from_profile(g.clone(), |r| 1.0 - r * r);
        let got = lp_norm(&u, 2.0, &p, &q).unwrap();
        let want = (std::f64::consts::PI / 3.0).sqrt();
        assert!(
            ((got - want) / want).abs() < 1e-4,
            "got {got}, want {want} (interpolation-limited)"
        );
        let mut cu = u.clone();
        cu.scale(-3.0);
        let got_scaled = lp_norm(&cu, 2.0, &p, &q).unwrap();
        assert!(((got_scaled - 3.0 * got) / got_scaled).abs() < 1e-13);
        let z = RadialFunction::zero(g);
        assert_eq!(lp_norm(&z, 4.0, &p, &q).unwrap(), 0.0);
    }

    #[test]
    fn l2_via_mass_matrix_matches_lp_norm() {
        let (p, g, q) = setup(2, 0.7, 64);
        let f = FormMatrices::assemble(&p, &g, &q, None).unwrap();
        let u = RadialFunction::from_profile(g, |r| (1.0 - r) * (0.5 + r));
        let a = f.l2_norm_sq(&u).unwrap().sqrt();
        let b = lp_norm(&u, 2.0, &p, &q).unwrap();
        assert!(((a - b) / b).abs() < 1e-12, "mass {a} vs lp {b}");
    }

    #[test]
    fn killing_identity_holds_at_matrix_level() {
        let (p, g, q) = setup(2, 0.75, 48);
        let f = FormMatrices::assemble(&p, &g, &q, None).unwrap();
        let u =
            RadialFunction::from_profile(g, |r| if r < 0.5 { (1.0 - 2.0 * r).powi(2) } else { 0.0 });
        let full = f.full_energy(&u).unwrap();
        let reg = f.regional_energy(&u).unwrap();
        let kill = f.killing_term(&u).unwrap();
        assert!(kill > 0.0);
        assert_eq!(full, reg + kill);
        assert!(full > reg);
    }

    #[test]
    fn zero_function_energies_vanish() {
        let (p, g, q) = setup(3, 0.6, 32);
        let f = FormMatrices::assemble(&p, &g, &q, None).unwrap();
        let z = RadialFunction::zero(g);
        assert_eq!(f.regional_energy(&z).unwrap(), 0.0);
        assert_eq!(f.full_energy(&z).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch_is_detected() {
        let (p, g, q) = setup(2, 0.6, 32);
        let f = FormMatrices::assemble(&p, &g, &q, None).unwrap();
        let other = RadialGrid::graded(16, 2.0).unwrap();
        let u = RadialFunction::from_profile(other, |r| 1.0 - r);
        assert!(matches!(f.regional_energy(&u), Err(Error::GridMismatch)));
    }

    #[test]
    fn quotient_scale_invariance_and_positivity() {
        let (p, g, q) = setup(2, 0.75, 64);
        let f = FormMatrices::assemble(&p, &g, &q, None).unwrap();
        let u = RadialFunction::from_profile(g.clone(), |r| (1.0 - r * r).powi(2));
        let q1 = rayleigh_quotient(&u, &f, &p).unwrap();
        assert!(q1 > 0.0);
        let mut cu = u.clone();
        cu.scale(7.3);
        let q2 = rayleigh_quotient(&cu, &f, &p).unwrap();
        assert!(((q2 - q1) / q1).abs() < 1e-12);
        let z = RadialFunction::zero(g);
        assert!(rayleigh_quotient(&z, &f, &p).is_err());
    }

    #[test]
    fn coercivity_detected_and_refused() {
        let (p, g, q) = setup(2, 0.7, 48);
        let ok = Potential::constant(g.clone(), -0.5).unwrap();
        let f = FormMatrices::assemble(&p, &g, &q, Some(&ok)).unwrap();
        assert!(f.check_coercive().is_ok());
        // far beyond the first eigenvalue
        let bad = Potential::constant(g.clone(), -1e4).unwrap();
        let f = FormMatrices::assemble(&p, &g, &q, Some(&bad)).unwrap();
        assert!(matches!(f.check_coercive(), Err(Error::NonCoercive(_))));
    }

    #[test]
    fn negative_quotient_below_first_eigenvalue_shift() {
        // h ≡ -λ with λ above the first regional eigenvalue: the first
        // eigenvector gets a negative quotient.
        let (p, g, q) = setup(2, 0.7, 48);
        let plain = FormMatrices::assemble(&p, &g, &q, None).unwrap();
        let (lam1, v1) = crate::minimize::smallest_generalized_eig(plain.a_reg(), plain.m2());
        assert!(lam1 > 0.0);
        let pot = Potential::constant(g.clone(), -1.5 * lam1).unwrap();
        let shifted = FormMatrices::assemble(&p, &g, &q, Some(&pot)).unwrap();
        let mut vals: Vec<f64> = v1.iter().copied().collect();
        vals.push(0.0);
        let u = RadialFunction::new(g, vals).unwrap();
        let quot = rayleigh_quotient(&u, &shifted, &p).unwrap();
        assert!(quot < 0.0, "expected negative quotient, got {quot}");
    }

    #[test]
    fn regional_energy_stable_under_refinement() {
        // hat interpolant of (1-r) at N=2, s=0.75: < 0.5% change M -> 2M
        let (p, g, q) = setup(2, 0.75, 256);
        let f1 = FormMatrices::assemble(&p, &g, &q, None).unwrap();
        let u1 = RadialFunction::from_profile(g.clone(), |r| 1.0 - r);
        let e1 = f1.regional_energy(&u1).unwrap();
        let g2 = g.refined();
        let f2 = FormMatrices::assemble(&p, &g2, &q, None).unwrap();
        let u2 = RadialFunction::from_profile(g2, |r| 1.0 - r);
        let e2 = f2.regional_energy(&u2).unwrap();
        assert!(((e1 - e2) / e2).abs() < 5e-3, "e1={e1} e2={e2}");
    }
}
