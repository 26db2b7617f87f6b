//! Boundary data for the standard runs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::ScalarField;
use crate::geometry::Grid;
use crate::solver::coons_extension;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryData {
    /// `c₀ x₁ + c₁ x₂ + c₂`.
    Affine { coeffs: [f64; 3] },
    /// `|x₁|^{p'} − |x₂|^{p'}` with `p' = p/(p−1)`, a weak solution for the
    /// scenario's `p`.
    ExactSolution,
    /// `sin(2π x₁) + cos(2π x₂) / 2`.
    Oscillatory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub p: f64,
    pub data: BoundaryData,
}

/// `|x₁|^{p'} − |x₂|^{p'}`.
pub fn exact_solution(p: f64, x: [f64; 2]) -> f64 {
    let q = p / (p - 1.0);
    x[0].abs().powf(q) - x[1].abs().powf(q)
}

impl Scenario {
    pub fn new(name: impl Into<String>, p: f64, data: BoundaryData) -> Self {
        Self {
            name: name.into(),
            p,
            data,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match &self.data {
            BoundaryData::Affine { coeffs: c } => c[0] * x[0] + c[1] * x[1] + c[2],
            BoundaryData::ExactSolution => exact_solution(self.p, x),
            BoundaryData::Oscillatory => (2.0 * PI * x[0]).sin() + 0.5 * (2.0 * PI * x[1]).cos(),
        }
    }

    /// The data sampled at every node; solvers only read the boundary.
    pub fn boundary_field(&self, grid: Grid) -> Result<ScalarField> {
        ScalarField::from_fn(grid, |x| self.eval(x))
    }

    /// Known solution of the limit equation, if any.
    pub fn exact(&self, grid: Grid) -> Result<Option<ScalarField>> {
        match self.data {
            BoundaryData::Affine { .. } | BoundaryData::ExactSolution => self.boundary_field(grid).map(Some),
            BoundaryData::Oscillatory => Ok(None),
        }
    }

    /// Extension of the boundary data used on the right of the energy
    /// bounds: the exact solution when known, otherwise the Coons patch.
    pub fn extension(&self, grid: Grid) -> Result<ScalarField> {
        match self.exact(grid)? {
            Some(u) => Ok(u),
            None => Ok(coons_extension(&self.boundary_field(grid)?)),
        }
    }
}

pub fn standard_suite() -> Vec<Scenario> {
    let mut suite = vec![Scenario::new(
        "affine",
        1.5,
        BoundaryData::Affine {
            coeffs: [3.0, -2.0, 1.0],
        },
    )];
    for p in [1.2, 1.5, 1.8] {
        suite.push(Scenario::new(format!("ustar_p{p}"), p, BoundaryData::ExactSolution));
    }
    suite.push(Scenario::new("oscillatory", 1.5, BoundaryData::Oscillatory));
    suite
}

pub fn find_standard(name: &str) -> Option<Scenario> {
    standard_suite().into_iter().find(|s| s.name == name)
}
