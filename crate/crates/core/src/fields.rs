//! Node-valued fields, discrete derivatives, ball integrals and oscillation.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{ball_nodes, BallSpec, CellRegion, Grid};
use crate::par;

/// Coordinate direction `x₁` or `x₂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X1, Axis::X2];

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }

    /// 1-based label used in reports.
    pub fn label(self) -> usize {
        self.index() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::SizeMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Samples `f` at the node coordinates.
    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Result<Self> {
        let n = grid.n();
        let mut values = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                values.push(f(grid.coords(i, j)));
            }
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; callers must keep values finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest absolute difference over the given nodes (all nodes if `None`).
    pub fn max_abs_diff(&self, other: &ScalarField, nodes: Option<&[usize]>) -> Result<f64> {
        self.same_grid(other)?;
        Ok(match nodes {
            Some(ks) => ks
                .iter()
                .map(|&k| (self.values[k] - other.values[k]).abs())
                .fold(0.0, f64::max),
            None => self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        })
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<()> {
        if self.grid.n() != other.grid.n() || self.grid.h() != other.grid.h() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn sub(&self, other: &ScalarField) -> Result<ScalarField> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(ScalarField {
            grid: self.grid,
            values,
        })
    }

    pub fn scaled(&self, factor: f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Mirror across the diagonal `x₁ = x₂`: node `(i, j)` takes the value of `(j, i)`.
    pub fn transposed(&self) -> ScalarField {
        let n = self.grid.n();
        let mut values = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                values[self.grid.index(i, j)] = self.values[self.grid.index(j, i)];
            }
        }
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    /// True when both fields agree exactly on every boundary node.
    pub fn same_boundary(&self, other: &ScalarField) -> bool {
        if self.same_grid(other).is_err() {
            return false;
        }
        let n = self.grid.n();
        (0..n).all(|t| {
            [(t, 0), (t, n - 1), (0, t), (n - 1, t)].iter().all(|&(i, j)| {
                let k = self.grid.index(i, j);
                self.values[k] == other.values[k]
            })
        })
    }

    /// Minimum and maximum over boundary nodes.
    pub fn boundary_range(&self) -> (f64, f64) {
        let n = self.grid.n();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for t in 0..n {
            for (i, j) in [(t, 0), (t, n - 1), (0, t), (n - 1, t)] {
                let v = self.at(i, j);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    /// Same values on a grid whose center is moved by whole cells.
    pub fn on_shifted_grid(&self, di: i64, dj: i64) -> ScalarField {
        ScalarField {
            grid: self.grid.shifted(di, dj),
            values: self.values.clone(),
        }
    }
}

/// Cell-constant gradient of the bilinear interpolant, averaged over the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    grid: Grid,
    cells: Vec<[f64; 2]>,
}

impl GradientField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn cells(&self) -> &[[f64; 2]] {
        &self.cells
    }

    #[inline]
    pub fn at(&self, ci: usize, cj: usize) -> [f64; 2] {
        self.cells[self.grid.cell_index(ci, cj)]
    }

    pub fn sup_norm(&self, region: CellRegion) -> Result<f64> {
        Ok(region
            .cells(&self.grid)?
            .into_iter()
            .map(|c| self.cells[c][0].hypot(self.cells[c][1]))
            .fold(0.0, f64::max))
    }
}

/// Gradient components of the cell whose south-west node is `(ci, cj)`.
#[inline]
pub(crate) fn cell_grad(values: &[f64], n: usize, h: f64, ci: usize, cj: usize) -> [f64; 2] {
    let sw = values[cj * n + ci];
    let se = values[cj * n + ci + 1];
    let nw = values[(cj + 1) * n + ci];
    let ne = values[(cj + 1) * n + ci + 1];
    let inv = 0.5 / h;
    [(se - sw + ne - nw) * inv, (nw - sw + ne - se) * inv]
}

pub fn cell_gradient(field: &ScalarField) -> GradientField {
    let grid = *field.grid();
    let n = grid.n();
    let m = n - 1;
    let h = grid.h();
    let values = field.values();
    let mut cells = vec![[0.0; 2]; m * m];
    par::fill_pair_rows(&mut cells, m, |cj, row| {
        for (ci, g) in row.iter_mut().enumerate() {
            *g = cell_grad(values, n, h, ci, cj);
        }
    });
    GradientField { grid, cells }
}

/// Centered difference along `axis` in the interior, one-sided second order
/// at the two ends of each grid line.
pub fn node_derivative(field: &ScalarField, axis: Axis) -> ScalarField {
    let grid = *field.grid();
    let n = grid.n();
    let h = grid.h();
    let v = field.values();
    let mut out = vec![0.0; n * n];
    let inv2h = 0.5 / h;
    par::fill_rows(&mut out, n, |j, row| {
        for (i, d) in row.iter_mut().enumerate() {
            // position t along the grid line through (i, j)
            let (t, base, stride) = match axis {
                Axis::X1 => (i, j * n, 1),
                Axis::X2 => (j, i, n),
            };
            let at = |s: usize| v[base + s * stride];
            *d = if t == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2h
            } else if t == n - 1 {
                (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) * inv2h
            } else {
                (at(t + 1) - at(t - 1)) * inv2h
            };
        }
    });
    ScalarField { grid, values: out }
}

/// `Σ integrand(cell) · h²` over cells whose centers lie in `region`.
pub fn integrate_cells<F>(grid: &Grid, region: CellRegion, integrand: F) -> Result<f64>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    region.validate(grid)?;
    let m = grid.cells_per_side();
    let h2 = grid.h() * grid.h();
    let mut any = false;
    for cj in 0..m {
        for ci in 0..m {
            if region.contains(grid.cell_offset(ci, cj)) {
                any = true;
                break;
            }
        }
        if any {
            break;
        }
    }
    if !any {
        return Err(Error::EmptyRegion(match region {
            CellRegion::Whole => grid.half_side(),
            CellRegion::Ball(b) => b.radius,
            CellRegion::Annulus { outer, .. } => outer,
        }));
    }
    let total = par::sum_rows(m, |cj| {
        let mut s = 0.0;
        for ci in 0..m {
            if region.contains(grid.cell_offset(ci, cj)) {
                s += integrand(ci, cj);
            }
        }
        s
    });
    Ok(total * h2)
}

/// Integral over a ball of a per-cell quantity.
pub fn integrate_ball<F>(grid: &Grid, ball: &BallSpec, integrand: F) -> Result<f64>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    integrate_cells(grid, CellRegion::Ball(*ball), integrand)
}

/// Ball average normalized by the continuum area `π r²`.
pub fn average_ball<F>(grid: &Grid, ball: &BallSpec, integrand: F) -> Result<f64>
where
    F: Fn(usize, usize) -> f64 + Sync + Send,
{
    let area = CellRegion::Ball(*ball).area(grid);
    Ok(integrate_ball(grid, ball, integrand)? / area)
}

/// `max − min` of the field over the nodes strictly inside the ball.
pub fn oscillation(field: &ScalarField, ball: &BallSpec) -> Result<f64> {
    let nodes = ball_nodes(field.grid(), ball)?;
    oscillation_on(field, &nodes).ok_or(Error::EmptyRegion(ball.radius))
}

pub(crate) fn oscillation_on(field: &ScalarField, nodes: &[usize]) -> Option<f64> {
    let (lo, hi) = extrema_on(field, nodes)?;
    Some(hi - lo)
}

pub(crate) fn extrema_on(field: &ScalarField, nodes: &[usize]) -> Option<(f64, f64)> {
    if nodes.is_empty() {
        return None;
    }
    let v = field.values();
    Some(nodes.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
        (lo.min(v[k]), hi.max(v[k]))
    }))
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if !(p > 1.0 && p < 2.0) {
        return Err(Error::ExponentOutOfRange(p));
    }
    Ok(())
}

/// `∫_B |∇v|^p` with cell gradients.
pub fn lp_gradient_norm(field: &ScalarField, ball: &BallSpec, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let grad = cell_gradient(field);
    integrate_ball(field.grid(), ball, |ci, cj| {
        let [a, b] = grad.at(ci, cj);
        (a * a + b * b).powf(0.5 * p)
    })
}

/// Writes the plain-text snapshot: a header line `n h p eps`, then `n`
/// rows of `n` values, south row first.
pub fn write_snapshot<W: Write>(field: &ScalarField, p: f64, eps: f64, mut w: W) -> Result<()> {
    let n = field.grid().n();
    writeln!(w, "{} {} {} {}", n, field.grid().h(), p, eps)?;
    for j in 0..n {
        let row: Vec<String> = (0..n).map(|i| format!("{}", field.at(i, j))).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Snapshot contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub field: ScalarField,
    pub p: f64,
    pub eps: f64,
}

/// Reads a snapshot; the grid is placed at `center` since the format does
/// not record it.
pub fn read_snapshot<R: BufRead>(r: R, center: [f64; 2]) -> Result<Snapshot> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Snapshot("missing header".into()))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(Error::Snapshot(format!("header must have 4 entries: {header:?}")));
    }
    let bad = |what: &str| Error::Snapshot(format!("cannot parse {what} in header {header:?}"));
    let n: usize = parts[0].parse().map_err(|_| bad("n"))?;
    let h: f64 = parts[1].parse().map_err(|_| bad("h"))?;
    let p: f64 = parts[2].parse().map_err(|_| bad("p"))?;
    let eps: f64 = parts[3].parse().map_err(|_| bad("eps"))?;
    let grid = Grid::with_spacing(n, h, center)?;
    let mut values = Vec::with_capacity(n * n);
    for row in 0..n {
        let line = lines
            .next()
            .ok_or_else(|| Error::Snapshot(format!("missing row {row}")))??;
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::Snapshot(format!("bad value {tok:?} in row {row}")))?,
            );
        }
        if values.len() - before != n {
            return Err(Error::Snapshot(format!(
                "row {row} has {} values, expected {n}",
                values.len() - before
            )));
        }
    }
    Ok(Snapshot {
        field: ScalarField::new(grid, values)?,
        p,
        eps,
    })
}
