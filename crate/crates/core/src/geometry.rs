//! Uniform square grids, concentric balls and radial cutoff functions.
//!
//! The computational domain is a square of side `side` sampled by `n × n`
//! nodes, `n` odd so that a node sits exactly at the center. Every ball is
//! centered at that node. Membership tests use integer lattice offsets
//! scaled by `h`, so shifting the grid center never changes which nodes or
//! cells belong to a ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node counts below this are rejected.
pub const MIN_NODES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    h: f64,
    side: f64,
    center: [f64; 2],
}

impl Grid {
    pub fn new(n: usize, side: f64, center: [f64; 2]) -> Result<Self> {
        Self::check_n(n)?;
        if !(side.is_finite() && side > 0.0) {
            return Err(Error::NonPositiveSide(side));
        }
        Ok(Self {
            n,
            h: side / (n - 1) as f64,
            side,
            center,
        })
    }

    /// Builds a grid from its spacing rather than its side length. Used when
    /// reading snapshots, which store `h` verbatim.
    pub fn with_spacing(n: usize, h: f64, center: [f64; 2]) -> Result<Self> {
        Self::check_n(n)?;
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::NonPositiveSide(h));
        }
        Ok(Self {
            n,
            h,
            side: h * (n - 1) as f64,
            center,
        })
    }

    fn check_n(n: usize) -> Result<()> {
        if n.is_multiple_of(2) {
            return Err(Error::EvenNodeCount(n));
        }
        if n < MIN_NODES {
            return Err(Error::TooFewNodes(n));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn half_side(&self) -> f64 {
        0.5 * self.side
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n
    }

    /// Cells per side.
    pub fn cells_per_side(&self) -> usize {
        self.n - 1
    }

    pub fn cell_count(&self) -> usize {
        (self.n - 1) * (self.n - 1)
    }

    /// Row-major index, row 0 being the south row.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn node(&self, k: usize) -> (usize, usize) {
        (k % self.n, k / self.n)
    }

    #[inline]
    fn half(&self) -> f64 {
        ((self.n - 1) / 2) as f64
    }

    /// Offset of node `(i, j)` from the grid center.
    #[inline]
    pub fn node_offset(&self, i: usize, j: usize) -> [f64; 2] {
        let half = self.half();
        [self.h * (i as f64 - half), self.h * (j as f64 - half)]
    }

    #[inline]
    pub fn coords(&self, i: usize, j: usize) -> [f64; 2] {
        let [dx, dy] = self.node_offset(i, j);
        [self.center[0] + dx, self.center[1] + dy]
    }

    /// Offset of the center of cell `(ci, cj)` (south-west corner at node `(ci, cj)`).
    #[inline]
    pub fn cell_offset(&self, ci: usize, cj: usize) -> [f64; 2] {
        let half = self.half();
        [
            self.h * (ci as f64 + 0.5 - half),
            self.h * (cj as f64 + 0.5 - half),
        ]
    }

    #[inline]
    pub fn cell_index(&self, ci: usize, cj: usize) -> usize {
        cj * (self.n - 1) + ci
    }

    #[inline]
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1
    }

    /// Same lattice, center moved by whole cells.
    pub fn shifted(&self, di: i64, dj: i64) -> Self {
        Self {
            center: [
                self.center[0] + di as f64 * self.h,
                self.center[1] + dj as f64 * self.h,
            ],
            ..*self
        }
    }
}

/// A ball concentric with the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub radius: f64,
}

impl BallSpec {
    pub fn new(radius: f64) -> Self {
        Self { radius }
    }

    /// Checks `0 < radius` and `radius + 2h < side/2`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::NonPositiveRadius(self.radius));
        }
        if self.radius + 2.0 * grid.h() >= grid.half_side() {
            return Err(Error::BallOutsideGrid {
                radius: self.radius,
                half_side: grid.half_side(),
                h: grid.h(),
            });
        }
        Ok(())
    }
}

#[inline]
fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

/// Nodes strictly inside the ball, in row-major order.
pub fn ball_nodes(grid: &Grid, ball: &BallSpec) -> Result<Vec<usize>> {
    ball.validate(grid)?;
    Ok(nodes_where(grid, |d| d < ball.radius))
}

/// Discrete circle `∂B_r`: nodes with `r − h√2 ≤ |x| ≤ r + h√2`.
///
/// The band is the thinnest one that separates the inside of the ball from
/// the outside on a square lattice. Radii not exceeding `h√2` have no ring.
pub fn boundary_ring(grid: &Grid, ball: &BallSpec) -> Result<Vec<usize>> {
    ball.validate(grid)?;
    let band = grid.h() * std::f64::consts::SQRT_2;
    let lo = ball.radius - band;
    if lo <= 0.0 {
        return Err(Error::EmptyRing {
            radius: ball.radius,
            h: grid.h(),
        });
    }
    let hi = ball.radius + band;
    let ring = nodes_where(grid, |d| d >= lo && d <= hi);
    if ring.is_empty() {
        return Err(Error::EmptyRing {
            radius: ball.radius,
            h: grid.h(),
        });
    }
    Ok(ring)
}

fn nodes_where(grid: &Grid, keep: impl Fn(f64) -> bool) -> Vec<usize> {
    let n = grid.n();
    let mut out = Vec::new();
    for j in 0..n {
        for i in 0..n {
            if keep(norm(grid.node_offset(i, j))) {
                out.push(grid.index(i, j));
            }
        }
    }
    out
}

/// Set of cells selected by the position of their centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellRegion {
    Whole,
    Ball(BallSpec),
    /// `inner ≤ |c| < outer`.
    Annulus { inner: f64, outer: f64 },
}

impl CellRegion {
    #[inline]
    pub fn contains(&self, offset: [f64; 2]) -> bool {
        match *self {
            CellRegion::Whole => true,
            CellRegion::Ball(b) => norm(offset) < b.radius,
            CellRegion::Annulus { inner, outer } => {
                let d = norm(offset);
                d >= inner && d < outer
            }
        }
    }

    /// Continuum area of the region (the square for `Whole`).
    pub fn area(&self, grid: &Grid) -> f64 {
        use std::f64::consts::PI;
        match *self {
            CellRegion::Whole => grid.side() * grid.side(),
            CellRegion::Ball(b) => PI * b.radius * b.radius,
            CellRegion::Annulus { inner, outer } => PI * (outer * outer - inner * inner),
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        match *self {
            CellRegion::Whole => Ok(()),
            CellRegion::Ball(b) => b.validate(grid),
            CellRegion::Annulus { inner, outer } => {
                if !(inner >= 0.0 && inner < outer) {
                    return Err(Error::InvalidRadii(format!(
                        "annulus needs 0 <= inner < outer, got {inner}, {outer}"
                    )));
                }
                BallSpec::new(outer).validate(grid)
            }
        }
    }

    fn outer_radius(&self, grid: &Grid) -> f64 {
        match *self {
            CellRegion::Whole => grid.half_side(),
            CellRegion::Ball(b) => b.radius,
            CellRegion::Annulus { outer, .. } => outer,
        }
    }

    /// Cell indices inside the region, row-major.
    pub fn cells(&self, grid: &Grid) -> Result<Vec<usize>> {
        self.validate(grid)?;
        let m = grid.cells_per_side();
        let mut out = Vec::new();
        for cj in 0..m {
            for ci in 0..m {
                if self.contains(grid.cell_offset(ci, cj)) {
                    out.push(grid.cell_index(ci, cj));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::EmptyRegion(self.outer_radius(grid)));
        }
        Ok(out)
    }
}

/// Quintic smoothstep `6s⁵ − 15s⁴ + 10s³` and its first two derivatives.
#[inline]
pub fn smoothstep5(s: f64) -> (f64, f64, f64) {
    let s = s.clamp(0.0, 1.0);
    let s2 = s * s;
    let s3 = s2 * s;
    let v = s3 * (10.0 + s * (-15.0 + 6.0 * s));
    let d1 = 30.0 * s2 * (1.0 - s) * (1.0 - s);
    let d2 = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
    (v, d1, d2)
}

/// Peak of the smoothstep slope, attained at `s = 1/2`.
pub const SMOOTHSTEP_MAX_SLOPE: f64 = 1.875;

/// Value, gradient and Hessian of a radial cutoff at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSample {
    pub value: f64,
    pub grad: [f64; 2],
    /// Hessian entries `[h11, h12, h22]`.
    pub hess: [f64; 3],
}

impl CutoffSample {
    pub fn grad_norm(&self) -> f64 {
        norm(self.grad)
    }

    /// Largest absolute Hessian entry.
    pub fn hess_norm(&self) -> f64 {
        self.hess.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Radial cutoff equal to 1 on `B_inner` and 0 outside `B_outer`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    grid: Grid,
    pub inner: f64,
    pub outer: f64,
    pub values: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub hess_norm: Vec<f64>,
}

impl Cutoff {
    /// Analytic bound on `|∇ξ|`.
    pub fn grad_bound(&self) -> f64 {
        SMOOTHSTEP_MAX_SLOPE / (self.outer - self.inner)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Evaluates the profile at an offset from the grid center.
    pub fn sample(&self, offset: [f64; 2]) -> CutoffSample {
        sample_radial(self.inner, self.outer, offset)
    }
}

fn sample_radial(inner: f64, outer: f64, offset: [f64; 2]) -> CutoffSample {
    let d = norm(offset);
    let width = outer - inner;
    if d <= inner {
        return CutoffSample {
            value: 1.0,
            grad: [0.0; 2],
            hess: [0.0; 3],
        };
    }
    if d >= outer {
        return CutoffSample {
            value: 0.0,
            grad: [0.0; 2],
            hess: [0.0; 3],
        };
    }
    let (v, ds, dss) = smoothstep5((outer - d) / width);
    // radial derivatives of xi(d) = S((outer - d) / width)
    let f1 = -ds / width;
    let f2 = dss / (width * width);
    let (c, s) = (offset[0] / d, offset[1] / d);
    let tang = f1 / d;
    CutoffSample {
        value: v,
        grad: [f1 * c, f1 * s],
        hess: [
            f2 * c * c + tang * s * s,
            (f2 - tang) * c * s,
            f2 * s * s + tang * c * c,
        ],
    }
}

pub fn make_cutoff(grid: &Grid, inner: f64, outer: f64) -> Result<Cutoff> {
    let h = grid.h();
    if !(inner > 2.0 * h && inner < outer && outer <= grid.half_side()) {
        return Err(Error::InvalidCutoff { inner, outer, h });
    }
    let n = grid.n();
    let mut values = Vec::with_capacity(n * n);
    let mut grad_norm = Vec::with_capacity(n * n);
    let mut hess_norm = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let s = sample_radial(inner, outer, grid.node_offset(i, j));
            values.push(s.value);
            grad_norm.push(s.grad_norm());
            hess_norm.push(s.hess_norm());
        }
    }
    Ok(Cutoff {
        grid: *grid,
        inner,
        outer,
        values,
        grad_norm,
        hess_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g(n: usize) -> Grid {
        Grid::new(n, 2.0, [0.0, 0.0]).unwrap()
    }

    #[test]
    fn build_grid_examples() {
        let g9 = g(9);
        assert_eq!(g9.h(), 0.25);
        assert_eq!(g9.coords(0, 0), [-1.0, -1.0]);
        assert_eq!(g(65).h(), 0.03125);
        assert!(matches!(
            Grid::new(8, 2.0, [0.0, 0.0]),
            Err(Error::EvenNodeCount(8))
        ));
        assert!(matches!(Grid::new(7, 2.0, [0.0; 2]), Err(Error::TooFewNodes(7))));
        assert!(Grid::new(9, 0.0, [0.0; 2]).is_err());
        assert!(Grid::new(9, -1.0, [0.0; 2]).is_err());
    }

    #[test]
    fn spacing_times_cells_is_side() {
        for n in [9, 17, 65, 129, 257] {
            for side in [1.0, 2.0, 0.9, std::f64::consts::PI] {
                let grid = Grid::new(n, side, [0.3, -0.7]).unwrap();
                assert_relative_eq!(grid.h() * (n - 1) as f64, side, max_relative = 1e-15);
                let c = grid.coords((n - 1) / 2, (n - 1) / 2);
                assert_eq!(c, [0.3, -0.7]);
            }
        }
    }

    #[test]
    fn ball_node_examples() {
        let grid = g(65);
        let h = grid.h();
        let center = grid.index(32, 32);
        assert_eq!(ball_nodes(&grid, &BallSpec::new(0.6 * h)).unwrap(), vec![center]);
        let five = ball_nodes(&grid, &BallSpec::new(1.1 * h)).unwrap();
        assert_eq!(five.len(), 5);
        assert!(five.contains(&center));
        assert!(ball_nodes(&grid, &BallSpec::new(2.0)).is_err());
        assert!(ball_nodes(&grid, &BallSpec::new(0.0)).is_err());
    }

    #[test]
    fn ring_examples() {
        let grid = g(65);
        let h = grid.h();
        let center = grid.index(32, 32);
        let ring = boundary_ring(&grid, &BallSpec::new(4.0 * h)).unwrap();
        assert!(!ring.is_empty());
        assert!(!ring.contains(&center));
        assert!(matches!(
            boundary_ring(&grid, &BallSpec::new(0.5 * h)),
            Err(Error::EmptyRing { .. })
        ));
        assert!(boundary_ring(&grid, &BallSpec::new(2.0 * h)).is_ok());
    }

    fn ring_max_distance(n: usize, radius: f64) -> f64 {
        let grid = g(n);
        boundary_ring(&grid, &BallSpec::new(radius))
            .unwrap()
            .into_iter()
            .map(|k| {
                let (i, j) = grid.node(k);
                (norm(grid.node_offset(i, j)) - radius).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn ring_converges_to_circle() {
        let coarse = ring_max_distance(65, 0.5);
        let fine = ring_max_distance(129, 0.5);
        let ratio = coarse / fine;
        assert!((ratio - 2.0).abs() <= 0.4, "ratio {ratio}");
    }

    #[test]
    fn ring_measure_shrinks() {
        let measure = |n: usize| {
            let grid = g(n);
            boundary_ring(&grid, &BallSpec::new(0.5)).unwrap().len() as f64 * grid.h().powi(2)
        };
        let (a, b, c) = (measure(65), measure(129), measure(257));
        assert!(b < a && c < b);
        assert!(c < 0.6 * a);
    }

    #[test]
    fn cutoff_plateau_and_support() {
        let grid = g(65);
        let cut = make_cutoff(&grid, 0.3, 0.6).unwrap();
        for k in 0..grid.node_count() {
            let (i, j) = grid.node(k);
            let d = norm(grid.node_offset(i, j));
            let v = cut.values[k];
            assert!((0.0..=1.0).contains(&v));
            if d < 0.3 {
                assert_eq!(v, 1.0);
                assert_eq!(cut.grad_norm[k], 0.0);
            }
            if d > 0.6 {
                assert_eq!(v, 0.0);
            }
        }
        let mid = cut.sample([0.45, 0.0]);
        assert_relative_eq!(mid.value, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn cutoff_rejects_bad_radii() {
        let grid = g(65);
        let h = grid.h();
        assert!(make_cutoff(&grid, 0.6, 0.3).is_err());
        assert!(make_cutoff(&grid, 0.5, 0.5).is_err());
        assert!(make_cutoff(&grid, 2.0 * h, 0.5).is_err());
        assert!(make_cutoff(&grid, 0.3, 1.5).is_err());
    }

    #[test]
    fn cutoff_gradient_bound_matches_at_fine_grid() {
        let grid = g(129);
        let cut = make_cutoff(&grid, 0.4, 0.8).unwrap();
        let max = cut.grad_norm.iter().cloned().fold(0.0, f64::max);
        let bound = cut.grad_bound();
        assert!(max <= bound * (1.0 + 1e-12));
        assert!((max - bound).abs() / bound < 0.02, "{max} vs {bound}");
    }

    #[test]
    fn cutoff_derivatives_match_finite_differences() {
        let grid = g(65);
        let cut = make_cutoff(&grid, 0.3, 0.7).unwrap();
        let x = [0.31, 0.27];
        let s = cut.sample(x);
        let d = 1e-6;
        let fx = (cut.sample([x[0] + d, x[1]]).value - cut.sample([x[0] - d, x[1]]).value) / (2.0 * d);
        let fy = (cut.sample([x[0], x[1] + d]).value - cut.sample([x[0], x[1] - d]).value) / (2.0 * d);
        assert_relative_eq!(s.grad[0], fx, max_relative = 1e-6);
        assert_relative_eq!(s.grad[1], fy, max_relative = 1e-6);
        let hxx = (cut.sample([x[0] + d, x[1]]).grad[0] - cut.sample([x[0] - d, x[1]]).grad[0]) / (2.0 * d);
        let hxy = (cut.sample([x[0], x[1] + d]).grad[0] - cut.sample([x[0], x[1] - d]).grad[0]) / (2.0 * d);
        let hyy = (cut.sample([x[0], x[1] + d]).grad[1] - cut.sample([x[0], x[1] - d]).grad[1]) / (2.0 * d);
        assert_relative_eq!(s.hess[0], hxx, max_relative = 1e-5);
        assert_relative_eq!(s.hess[1], hxy, max_relative = 1e-5);
        assert_relative_eq!(s.hess[2], hyy, max_relative = 1e-5);
    }

    #[test]
    fn membership_is_translation_invariant() {
        let grid = g(65);
        let moved = grid.shifted(3, -5);
        let ball = BallSpec::new(0.4);
        assert_eq!(ball_nodes(&grid, &ball).unwrap(), ball_nodes(&moved, &ball).unwrap());
        assert_eq!(
            CellRegion::Ball(ball).cells(&grid).unwrap(),
            CellRegion::Ball(ball).cells(&moved).unwrap()
        );
    }

    #[test]
    fn empty_cell_region() {
        let grid = g(65);
        let tiny = CellRegion::Ball(BallSpec::new(0.1 * grid.h()));
        assert!(matches!(tiny.cells(&grid), Err(Error::EmptyRegion(_))));
    }

    proptest::proptest! {
        #[test]
        fn nested_balls_nest(r in 0.05f64..0.8, frac in 0.05f64..0.99) {
            let grid = g(65);
            let big = ball_nodes(&grid, &BallSpec::new(r)).unwrap();
            let small = ball_nodes(&grid, &BallSpec::new(r * frac)).unwrap();
            proptest::prop_assert!(small.iter().all(|k| big.contains(k)));
        }
    }
}
