//! Discrete regularized orthotropic energy and its variations.
//!
//! Every quantity uses one-point quadrature on the cell-average gradient
//! `g = (g₁, g₂)`:
//!
//! ```text
//! I^ε(v) = Σ_cells h² Σᵢ (gᵢ² + ε)^{p/2} / p
//! ```
//!
//! so the residual is the exact gradient of this sum with respect to the
//! nodal values and the Hessian is its exact second derivative. The per-axis
//! Hessian weight `(gᵢ² + ε)^{(p−4)/2} (ε + (p−1) gᵢ²)` is also the
//! coefficient of the linear equation satisfied by the derivatives of the
//! minimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{cell_grad, cell_gradient, check_exponent, integrate_cells, ScalarField};
use crate::geometry::{CellRegion, Grid};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub p: f64,
    pub eps: f64,
}

impl EnergyParams {
    pub fn new(p: f64, eps: f64) -> Result<Self> {
        let params = Self { p, eps };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_exponent(self.p)?;
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(Error::InvalidEps(self.eps));
        }
        Ok(())
    }

    /// Integrand `(g² + ε)^{p/2} / p` of one axis.
    #[inline]
    pub fn density(&self, g: f64) -> f64 {
        (g * g + self.eps).powf(0.5 * self.p) / self.p
    }

    /// Flux `(g² + ε)^{(p−2)/2} g`; `None` at the singular point `g = ε = 0`.
    #[inline]
    pub fn flux(&self, g: f64) -> Option<f64> {
        let a = g * g + self.eps;
        if a == 0.0 {
            return None;
        }
        Some(a.powf(0.5 * (self.p - 2.0)) * g)
    }

    /// Derivative of the flux, `(g² + ε)^{(p−4)/2} (ε + (p−1) g²)`.
    #[inline]
    pub fn weight(&self, g: f64) -> f64 {
        let a = g * g + self.eps;
        a.powf(0.5 * (self.p - 4.0)) * (self.eps + (self.p - 1.0) * g * g)
    }

    /// `density(g + dg) − density(g)` without cancellation when `dg` is tiny.
    #[inline]
    pub fn density_change(&self, g: f64, dg: f64) -> f64 {
        let a = g * g + self.eps;
        let b = (g + dg) * (g + dg) + self.eps;
        if a == 0.0 {
            return b.powf(0.5 * self.p) / self.p;
        }
        let rel = dg * (2.0 * g + dg) / a;
        a.powf(0.5 * self.p) * (0.5 * self.p * rel.ln_1p()).exp_m1() / self.p
    }
}

fn cell_pairs<F>(grid: &Grid, f: F) -> Vec<[f64; 2]>
where
    F: Fn(usize, usize) -> [f64; 2] + Sync + Send,
{
    let m = grid.cells_per_side();
    let mut out = vec![[0.0; 2]; m * m];
    par::fill_pair_rows(&mut out, m, |cj, row| {
        for (ci, v) in row.iter_mut().enumerate() {
            *v = f(ci, cj);
        }
    });
    out
}

/// Assembles `out_k = (h/2) Σ_cells ±q₁ ± q₂` for interior nodes, i.e. the
/// pairing of per-cell axis quantities `q` with `∂gᵢ/∂v_k`. Boundary rows are 0.
fn gather(grid: &Grid, q: &[[f64; 2]], out: &mut [f64]) {
    let n = grid.n();
    let m = n - 1;
    let half_h = 0.5 * grid.h();
    par::fill_rows(out, n, |j, row| {
        if j == 0 || j == n - 1 {
            row.fill(0.0);
            return;
        }
        row[0] = 0.0;
        row[n - 1] = 0.0;
        for (i, r) in row.iter_mut().enumerate().take(n - 1).skip(1) {
            // node is NE of (i-1,j-1), NW of (i,j-1), SE of (i-1,j), SW of (i,j)
            let ne = q[(j - 1) * m + i - 1];
            let nw = q[(j - 1) * m + i];
            let se = q[j * m + i - 1];
            let sw = q[j * m + i];
            let s = (ne[0] + ne[1]) + (-nw[0] + nw[1]) + (se[0] - se[1]) + (-sw[0] - sw[1]);
            *r = half_h * s;
        }
    });
}

/// `I^ε` over the cells of `region`. `eps = 0` gives the degenerate energy.
pub fn energy(field: &ScalarField, params: &EnergyParams, region: CellRegion) -> Result<f64> {
    params.validate()?;
    let grid = *field.grid();
    let (n, h) = (grid.n(), grid.h());
    let v = field.values();
    integrate_cells(&grid, region, |ci, cj| {
        let [a, b] = cell_grad(v, n, h, ci, cj);
        params.density(a) + params.density(b)
    })
}

/// First variation of the whole-grid energy against each nodal hat
/// function; zero on the Dirichlet (boundary) nodes.
pub fn residual(field: &ScalarField, params: &EnergyParams) -> Result<ScalarField> {
    params.validate()?;
    let grid = *field.grid();
    let (n, h) = (grid.n(), grid.h());
    let v = field.values();
    let fluxes = cell_pairs(&grid, |ci, cj| {
        let [a, b] = cell_grad(v, n, h, ci, cj);
        [
            params.flux(a).unwrap_or(f64::NAN),
            params.flux(b).unwrap_or(f64::NAN),
        ]
    });
    if let Some((cell, pair)) = fluxes.iter().enumerate().find(|(_, f)| f[0].is_nan() || f[1].is_nan()) {
        let axis = if pair[0].is_nan() { 1 } else { 2 };
        return Err(Error::SingularFlux { cell, axis });
    }
    let mut out = vec![0.0; n * n];
    gather(&grid, &fluxes, &mut out);
    ScalarField::new(grid, out)
}

/// Second variation of the energy frozen at a base field.
#[derive(Debug, Clone)]
pub struct Linearization {
    grid: Grid,
    weights: Vec<[f64; 2]>,
}

impl Linearization {
    pub fn new(field: &ScalarField, params: &EnergyParams) -> Result<Self> {
        params.validate()?;
        if params.eps <= 0.0 {
            return Err(Error::EpsRequired("the energy Hessian"));
        }
        let grid = *field.grid();
        let (n, h) = (grid.n(), grid.h());
        let v = field.values();
        let weights = cell_pairs(&grid, |ci, cj| {
            let [a, b] = cell_grad(v, n, h, ci, cj);
            [params.weight(a), params.weight(b)]
        });
        Ok(Self { grid, weights })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Per-cell, per-axis weights.
    pub fn weights(&self) -> &[[f64; 2]] {
        &self.weights
    }

    /// `out = H d`. `d` must vanish on boundary nodes.
    pub fn apply(&self, d: &[f64], out: &mut [f64]) {
        let (n, h) = (self.grid.n(), self.grid.h());
        let m = n - 1;
        let w = &self.weights;
        let q = cell_pairs(&self.grid, |ci, cj| {
            let [a, b] = cell_grad(d, n, h, ci, cj);
            let wc = w[cj * m + ci];
            [wc[0] * a, wc[1] * b]
        });
        gather(&self.grid, &q, out);
    }

    /// Diagonal of `H`; 1 on boundary nodes.
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.grid.n();
        let m = n - 1;
        let w = &self.weights;
        let mut out = vec![1.0; n * n];
        par::fill_rows(&mut out, n, |j, row| {
            if j == 0 || j == n - 1 {
                return;
            }
            for (i, r) in row.iter_mut().enumerate().take(n - 1).skip(1) {
                let s: f64 = [
                    w[(j - 1) * m + i - 1],
                    w[(j - 1) * m + i],
                    w[j * m + i - 1],
                    w[j * m + i],
                ]
                .iter()
                .map(|c| c[0] + c[1])
                .sum();
                *r = 0.25 * s;
            }
        });
        out
    }
}

/// Action of the energy Hessian at `field` on `direction`. Boundary values of
/// `direction` are treated as zero.
pub fn hessian_apply(
    field: &ScalarField,
    params: &EnergyParams,
    direction: &ScalarField,
) -> Result<ScalarField> {
    field.same_grid(direction)?;
    let lin = Linearization::new(field, params)?;
    let grid = *field.grid();
    let n = grid.n();
    let mut d = direction.values().to_vec();
    for t in 0..n {
        for (i, j) in [(t, 0), (t, n - 1), (0, t), (n - 1, t)] {
            d[grid.index(i, j)] = 0.0;
        }
    }
    let mut out = vec![0.0; n * n];
    lin.apply(&d, &mut out);
    ScalarField::new(grid, out)
}

/// Whole-grid `I^ε(field + t·direction) − I^ε(field)`, accurate for small steps.
pub fn energy_change(
    field: &ScalarField,
    params: &EnergyParams,
    direction: &[f64],
    t: f64,
) -> f64 {
    let grid = *field.grid();
    let (n, h) = (grid.n(), grid.h());
    let m = n - 1;
    let v = field.values();
    let total = par::sum_rows(m, |cj| {
        let mut s = 0.0;
        for ci in 0..m {
            let [a, b] = cell_grad(v, n, h, ci, cj);
            let [da, db] = cell_grad(direction, n, h, ci, cj);
            s += params.density_change(a, t * da) + params.density_change(b, t * db);
        }
        s
    });
    total * h * h
}

/// Weak form of the derivative equation with coefficients frozen at `base`:
/// returns the pairing and the L¹ size of its integrand.
pub fn derivative_residual_parts(
    dfield: &ScalarField,
    base: &ScalarField,
    params: &EnergyParams,
    testfn: &ScalarField,
) -> Result<(f64, f64)> {
    params.validate()?;
    if params.eps <= 0.0 {
        return Err(Error::EpsRequired("the derivative equation"));
    }
    dfield.same_grid(base)?;
    dfield.same_grid(testfn)?;
    let grid = *base.grid();
    let (lo, hi) = testfn.boundary_range();
    if lo != 0.0 || hi != 0.0 {
        return Err(Error::TestFunctionBoundary);
    }
    let (n, h) = (grid.n(), grid.h());
    let (b, d, t) = (base.values(), dfield.values(), testfn.values());
    let m = n - 1;
    let parts = par::map_range(m, |cj| {
        let mut s = 0.0;
        let mut mag = 0.0;
        for ci in 0..m {
            let g = cell_grad(b, n, h, ci, cj);
            let dg = cell_grad(d, n, h, ci, cj);
            let tg = cell_grad(t, n, h, ci, cj);
            for i in 0..2 {
                let term = params.weight(g[i]) * dg[i] * tg[i];
                s += term;
                mag += term.abs();
            }
        }
        (s, mag)
    });
    let h2 = h * h;
    let (s, mag) = parts
        .into_iter()
        .fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
    Ok((s * h2, mag * h2))
}

pub fn derivative_residual(
    dfield: &ScalarField,
    base: &ScalarField,
    params: &EnergyParams,
    testfn: &ScalarField,
) -> Result<f64> {
    derivative_residual_parts(dfield, base, params, testfn).map(|(v, _)| v)
}

/// Cell gradients of a field paired with the energy weights; exposed for
/// checks that need both.
pub fn weights_at(field: &ScalarField, params: &EnergyParams) -> Vec<[f64; 2]> {
    cell_gradient(field)
        .cells()
        .iter()
        .map(|g| [params.weight(g[0]), params.weight(g[1])])
        .collect()
}
