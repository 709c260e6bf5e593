//! Radial meshes on [0, 1], nodal piecewise-linear radial functions with
//! zero trace at r = 1, and quadrature configuration.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Graded radial mesh 0 = r₀ < r₁ < … < r_M = 1 with rᵢ = 1 - (1 - i/M)^β.
/// β ≥ 1 concentrates nodes toward the boundary, where minimizers are only
/// C^{2s-1}. Doubling M keeps the coarse nodes (nested refinement).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    grading: f64,
}

impl RadialGrid {
    pub fn graded(m: usize, grading: f64) -> Result<Arc<Self>> {
        if m < 4 {
            return Err(Error::InvalidParams(format!("grid needs M >= 4 elements, got {m}")));
        }
        if grading < 1.0 {
            return Err(Error::InvalidParams(format!("grading exponent must be >= 1, got {grading}")));
        }
        let mut nodes = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let t = 1.0 - i as f64 / m as f64;
            nodes.push(1.0 - t.powf(grading));
        }
        nodes[0] = 0.0;
        nodes[m] = 1.0;
        Ok(Arc::new(RadialGrid { nodes, grading }))
    }

    /// Same grading law with 2M elements; contains every node of `self`.
    pub fn refined(&self) -> Arc<Self> {
        RadialGrid::graded(2 * self.num_elements(), self.grading).expect("refinement of a valid grid")
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// Number of elements M (= number of free nodes; node M carries the
    /// zero trace).
    pub fn num_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn element(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }
}

/// Quadrature configuration: Gauss points per element direction, dyadic
/// refinement depth for touching/identical element pairs, and the angular
/// rule order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub gauss_order: usize,
    pub diagonal_levels: usize,
    pub angular_order: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { gauss_order: 6, diagonal_levels: 4, angular_order: 16 }
    }
}

impl QuadSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gauss_order < 4 {
            return Err(Error::InvalidParams(format!(
                "gauss_order must be >= 4, got {}",
                self.gauss_order
            )));
        }
        if self.diagonal_levels < 3 {
            return Err(Error::InvalidParams(format!(
                "diagonal_levels must be >= 3, got {}",
                self.diagonal_levels
            )));
        }
        if self.angular_order < 16 {
            return Err(Error::InvalidParams(format!(
                "angular_order must be >= 16, got {}",
                self.angular_order
            )));
        }
        Ok(())
    }
}

/// Nodal coefficients of a piecewise-linear radial function with zero trace:
/// values at r₀..r_M with the last value pinned to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialFunction {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialFunction {
    /// Wraps nodal values; the trace value at r_M must already be 0.
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes().len() {
            return Err(Error::InvalidParams(format!(
                "expected {} nodal values, got {}",
                grid.nodes().len(),
                values.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("nodal values must be finite".into()));
        }
        if values[values.len() - 1] != 0.0 {
            return Err(Error::InvalidParams("zero trace requires u(r_M) = 0".into()));
        }
        Ok(RadialFunction { grid, values })
    }

    /// Samples a radial profile at the nodes, forcing the trace to zero.
    pub fn from_profile<F: Fn(f64) -> f64>(grid: Arc<RadialGrid>, f: F) -> Self {
        let mut values: Vec<f64> = grid.nodes().iter().map(|&r| f(r)).collect();
        let last = values.len() - 1;
        values[last] = 0.0;
        RadialFunction { grid, values }
    }

    pub fn zero(grid: Arc<RadialGrid>) -> Self {
        let n = grid.nodes().len();
        RadialFunction { grid, values: vec![0.0; n] }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Free coefficients (all nodes except the trace node).
    pub fn free_values(&self) -> &[f64] {
        &self.values[..self.values.len() - 1]
    }

    pub fn set_free_values(&mut self, v: &[f64]) {
        assert_eq!(v.len() + 1, self.values.len());
        self.values[..v.len()].copy_from_slice(v);
    }

    /// Piecewise-linear evaluation; zero beyond r = 1.
    pub fn eval(&self, r: f64) -> f64 {
        let nodes = self.grid.nodes();
        if r <= 0.0 {
            return self.values[0];
        }
        if r >= 1.0 {
            return 0.0;
        }
        let i = match nodes.binary_search_by(|n| n.partial_cmp(&r).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let (a, b) = (nodes[i], nodes[i + 1]);
        let t = (r - a) / (b - a);
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    pub fn abs_in_place(&mut self) {
        for v in &mut self.values {
            *v = v.abs();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Prolongation onto a refinement whose nodes contain this grid's nodes;
    /// piecewise-linear interpolation is exact on the shared function.
    pub fn prolong(&self, fine: Arc<RadialGrid>) -> RadialFunction {
        let values: Vec<f64> = fine.nodes().iter().map(|&r| self.eval(r)).collect();
        let mut out = RadialFunction { grid: fine, values };
        let last = out.values.len() - 1;
        out.values[last] = 0.0;
        out
    }
}
