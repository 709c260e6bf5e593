//! Closed-form scalars attached to a (N, s) parameter pair: the critical
//! exponent, the Gagliardo normalization, the Riesz constant (both printed
//! conventions), and the bubble normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{beta, gamma, sphere_area};

/// Dimension and fractional order. The main theorems live on s ∈ (1/2, 1);
/// diagnostics are permitted on all of (0, 1), so construction only enforces
/// 0 < s < 1 and N ≥ 1. Operations that need N > 2s check it themselves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: u32,
    pub s: f64,
}

/// Which printed value of t_{N,s} to use for the Riesz potential.
///
/// `Standard` is the fundamental-solution normalization consistent with
/// (-Δ)^s R = δ₀ under this crate's Gagliardo constant, and is the default
/// everywhere; `Paper` is kept selectable for comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RieszConvention {
    #[default]
    Standard,
    Paper,
}

impl Params {
    pub fn new(n: u32, s: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidParams(format!("dimension N must be >= 1, got {n}")));
        }
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidParams(format!("fractional order s must lie in (0, 1), got {s}")));
        }
        Ok(Params { n, s })
    }

    fn require_subcritical(&self) -> Result<()> {
        if (self.n as f64) <= 2.0 * self.s {
            return Err(Error::Domain(format!(
                "operation requires N > 2s, got N={}, s={}",
                self.n, self.s
            )));
        }
        Ok(())
    }

    /// Critical Sobolev exponent 2N/(N-2s). Requires N > 2s.
    pub fn critical_exponent(&self) -> Result<f64> {
        self.require_subcritical()?;
        Ok(2.0 * self.n as f64 / (self.n as f64 - 2.0 * self.s))
    }

    /// Gagliardo normalization c_{N,s} = 2^{2s} s Γ((N+2s)/2) / (π^{N/2} Γ(1-s)),
    /// the constant making the integro-differential operator the Fourier
    /// multiplier |ξ|^{2s}.
    pub fn gagliardo_constant(&self) -> f64 {
        let n = self.n as f64;
        let s = self.s;
        2f64.powf(2.0 * s) * s * gamma((n + 2.0 * s) / 2.0)
            / (std::f64::consts::PI.powf(n / 2.0) * gamma(1.0 - s))
    }

    /// Riesz potential constant t_{N,s} in the requested convention.
    /// Requires N > 2s so |x|^{2s-N} decays.
    pub fn riesz_constant(&self, convention: RieszConvention) -> Result<f64> {
        self.require_subcritical()?;
        let n = self.n as f64;
        let s = self.s;
        let pi_pow = std::f64::consts::PI.powf(-n / 2.0);
        Ok(match convention {
            RieszConvention::Paper => pi_pow * 2f64.powf(-s) * gamma((n - s) / 2.0) / gamma(s / 2.0),
            RieszConvention::Standard => {
                pi_pow * 2f64.powf(-2.0 * s) * gamma((n - 2.0 * s) / 2.0) / gamma(s)
            }
        })
    }

    /// Normalization γ₀ making the bubble have unit critical norm:
    /// γ₀^{2*_s} ∫ (1+|x|²)^{-N} dx = 1 with the integral equal to
    /// ω_{N-1}/2 · B(N/2, N/2).
    pub fn bubble_normalization(&self) -> Result<f64> {
        let two_star = self.critical_exponent()?;
        let n = self.n as f64;
        let integral = self.sphere_area() / 2.0 * beta(n / 2.0, n / 2.0);
        Ok(integral.powf(-1.0 / two_star))
    }

    /// Area of the unit (N-1)-sphere.
    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.n)
    }

    /// Killing bound coefficient a_{N,s} = c_{N,s} ω_{N-1} / (2s); this is
    /// also the value of the killing measure at the center of the unit ball.
    pub fn killing_bound_coefficient(&self) -> f64 {
        self.gagliardo_constant() * self.sphere_area() / (2.0 * self.s)
    }

    /// a_s = γ₀ / t_{N,s}, the amplitude in the mass-corrected family.
    pub fn mass_amplitude(&self, convention: RieszConvention) -> Result<f64> {
        Ok(self.bubble_normalization()? / self.riesz_constant(convention)?)
    }
}
