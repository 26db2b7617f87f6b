//! Measured-ratio checks of the regularity estimates.
//!
//! Inequalities with an explicit constant (Lebesgue's oscillation lemma,
//! the derivative min/max principle) are checked directly. Inequalities
//! whose constant is only known to depend on `p` are measured as ratios
//! `lhs / rhs` and checked for stability across resolutions or across
//! regularization levels: a bounded constant must not drift as `h` or `ε`
//! shrinks.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::fields::{
    average_ball, cell_gradient, extrema_on, integrate_ball, integrate_cells, node_derivative,
    oscillation, Axis, ScalarField,
};
use crate::geometry::{ball_nodes, boundary_ring, make_cutoff, BallSpec, CellRegion, Grid};
use crate::par;
use crate::solver::{LadderReport, LADDER_DIFF_FLOOR};

/// Slack for checks whose constant is explicit.
pub const EXPLICIT_TOL: f64 = 0.05;
/// Band for measured constants compared across resolutions or eps levels.
pub const STABILITY_BAND: f64 = 0.25;
/// Band for the energy estimate across eps levels.
pub const ENERGY_BAND: f64 = 0.20;
/// Band for the monotonicity sweep under refinement.
pub const SWEEP_BAND: f64 = 0.05;
/// Required shrink factor of the derivative-equation residual per halving of h.
pub const DERIVATIVE_EQ_FACTOR: f64 = 1.4;
/// Allowed size of the single tolerated increase in a difference sequence.
pub const CONVERGENCE_ALLOWANCE: f64 = 1.10;
/// Measured constants below this are treated as zero.
pub const RATIO_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, absent when `rhs` is not positive.
    pub ratio: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    pub context: BTreeMap<String, Value>,
}

impl EstimateReport {
    /// Report for `lhs ≤ rhs · (1 + tolerance)`.
    pub fn bound(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            ratio: (rhs > 0.0).then(|| lhs / rhs),
            tolerance,
            pass: lhs.is_finite() && lhs <= rhs * (1.0 + tolerance),
            context: BTreeMap::new(),
        }
    }

    /// Same report judged with another tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.lhs.is_finite() && self.lhs <= self.rhs * (1.0 + tolerance);
        self
    }

    /// The report with the largest `lhs / rhs`, passing only if all pass.
    /// The others are kept under `"all"` in the context.
    pub fn worst_of(reports: Vec<EstimateReport>) -> Option<EstimateReport> {
        let spread = |r: &EstimateReport| match r.ratio {
            Some(x) => x,
            None if r.pass => 0.0,
            None => f64::INFINITY,
        };
        let all_pass = reports.iter().all(|r| r.pass);
        let all: Vec<Value> = reports
            .iter()
            .map(|r| serde_json::json!({"lhs": r.lhs, "rhs": r.rhs, "pass": r.pass, "context": r.context}))
            .collect();
        let worst = reports.into_iter().max_by(|a, b| spread(a).total_cmp(&spread(b)))?;
        let mut worst = worst.with("all", all);
        worst.pass = all_pass;
        Some(worst)
    }

    /// Stability of positive measured values: `max ≤ min · (1 + band)`.
    /// Values under [`RATIO_FLOOR`] count as zero.
    pub fn stability(name: impl Into<String>, values: &[f64], band: f64) -> Self {
        let snapped: Vec<f64> = values
            .iter()
            .map(|v| if v.abs() < RATIO_FLOOR { 0.0 } else { *v })
            .collect();
        let hi = snapped.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lo = snapped.iter().cloned().fold(f64::INFINITY, f64::min);
        let lo = if values.iter().all(|v| v.is_finite()) { lo } else { f64::NAN };
        Self::bound(name, hi, lo, band).with("values", values.to_vec())
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.context.insert(key.to_string(), value.into());
        self
    }

    /// Adds every entry of `ctx`.
    pub fn with_context(mut self, ctx: &BTreeMap<String, Value>) -> Self {
        for (k, v) in ctx {
            self.context.insert(k.clone(), v.clone());
        }
        self
    }
}

/// `lhs / rhs` pair of one measured inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub lhs: f64,
    pub rhs: f64,
}

impl Ratio {
    pub fn value(&self) -> f64 {
        if self.lhs == 0.0 {
            0.0
        } else {
            self.lhs / self.rhs
        }
    }
}

fn context(grid: &Grid, params: &EnergyParams, radius: f64) -> BTreeMap<String, Value> {
    let mut ctx = BTreeMap::new();
    ctx.insert("p".into(), params.p.into());
    ctx.insert("eps".into(), params.eps.into());
    ctx.insert("n".into(), grid.n().into());
    ctx.insert("R".into(), radius.into());
    ctx
}

// ---------------------------------------------------------------------------
// Lebesgue oscillation lemma

/// `(osc_{B_r} v)² log(R/r) ≤ π ∫_{B_R∖B_r} |∇v|²`.
pub fn check_lebesgue(vfield: &ScalarField, r: f64, big_r: f64) -> Result<EstimateReport> {
    let grid = vfield.grid();
    if !(r >= 4.0 * grid.h() && r < big_r) {
        return Err(Error::InvalidRadii(format!(
            "Lebesgue check needs 4h <= r < R (r = {r}, R = {big_r}, h = {})",
            grid.h()
        )));
    }
    BallSpec::new(big_r).validate(grid)?;
    let osc = oscillation(vfield, &BallSpec::new(r))?;
    let lhs = osc * osc * (big_r / r).ln();
    let grad = cell_gradient(vfield);
    let dirichlet = integrate_cells(grid, CellRegion::Annulus { inner: r, outer: big_r }, |ci, cj| {
        let [a, b] = grad.at(ci, cj);
        a * a + b * b
    })?;
    let rhs = PI * dirichlet;
    Ok(EstimateReport::bound("lebesgue", lhs, rhs, EXPLICIT_TOL)
        .with("r", r)
        .with("R", big_r)
        .with("n", grid.n())
        .with("osc", osc))
}

// ---------------------------------------------------------------------------
// Min/max principle for derivatives

/// Per ball: `violation = max(0, max_in − max_ring, min_ring − min_in)`.
/// Passes when the worst violation is at most `h · sup |∇dfield|` near the
/// balls.
pub fn check_maxmin(dfield: &ScalarField, balls: &[BallSpec]) -> Result<EstimateReport> {
    let grid = dfield.grid();
    if balls.is_empty() {
        return Err(Error::InsufficientInput {
            check: "maxmin",
            detail: "no balls".into(),
        });
    }
    let mut worst: f64 = 0.0;
    let mut per_ball = Vec::new();
    for ball in balls {
        let inside = ball_nodes(grid, ball)?;
        let ring = boundary_ring(grid, ball)?;
        let (min_in, max_in) = extrema_on(dfield, &inside).ok_or(Error::EmptyRegion(ball.radius))?;
        let (min_ring, max_ring) = extrema_on(dfield, &ring).ok_or(Error::EmptyRing {
            radius: ball.radius,
            h: grid.h(),
        })?;
        let v = 0.0_f64.max(max_in - max_ring).max(min_ring - min_in);
        per_ball.push(v);
        worst = worst.max(v);
    }
    let outer = balls.iter().map(|b| b.radius).fold(0.0, f64::max) + 2.0 * grid.h();
    let region = if BallSpec::new(outer).validate(grid).is_ok() {
        CellRegion::Ball(BallSpec::new(outer))
    } else {
        CellRegion::Whole
    };
    let slope = cell_gradient(dfield).sup_norm(region)?;
    let rhs = grid.h() * slope;
    Ok(EstimateReport::bound("maxmin", worst, rhs, 0.0)
        .with("n", grid.n())
        .with("radii", balls.iter().map(|b| b.radius).collect::<Vec<_>>())
        .with("violations", per_ball))
}

// ---------------------------------------------------------------------------
// Logarithmic modulus of continuity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationProfile {
    pub radius: f64,
    /// Strictly decreasing.
    pub radii: Vec<f64>,
    /// `osc_{B_r} ∂_j u` for `j = 1, 2`.
    pub osc: [Vec<f64>; 2],
    /// `(log(R/r))^{−1/2}`.
    pub factor: Vec<f64>,
    /// `(⨍_{B_R} |∇u|^p)^{1/p}`.
    pub gradient_scale: f64,
    /// `osc · (log(R/r))^{1/2} / gradient_scale`.
    pub measured_c: [Vec<f64>; 2],
    pub sup_c: f64,
}

/// `count` radii spaced logarithmically from `R/2` down to `r_min`.
pub fn radii_ladder(big_r: f64, count: usize, r_min: f64) -> Result<Vec<f64>> {
    let top = 0.5 * big_r;
    if count < 2 || !(r_min > 0.0 && r_min < top) {
        return Err(Error::InvalidRadii(format!(
            "radii ladder needs count >= 2 and 0 < r_min < R/2 (count {count}, r_min {r_min}, R {big_r})"
        )));
    }
    let ratio = (r_min / top).ln() / (count - 1) as f64;
    Ok((0..count).map(|k| top * (ratio * k as f64).exp()).collect())
}

/// Default smallest radius `max(4h, R/32)`.
pub fn default_min_radius(grid: &Grid, big_r: f64) -> f64 {
    (4.0 * grid.h()).max(big_r / 32.0)
}

pub fn measure_oscillation_profile(
    ufield: &ScalarField,
    p: f64,
    big_r: f64,
    radii: &[f64],
) -> Result<OscillationProfile> {
    let grid = *ufield.grid();
    if radii.is_empty() {
        return Err(Error::InvalidRadii("empty radii ladder".into()));
    }
    for w in radii.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidRadii("radii must be strictly decreasing".into()));
        }
    }
    let slack = 1e-12 * big_r;
    if radii[0] > 0.5 * big_r + slack || *radii.last().unwrap() < 4.0 * grid.h() - slack {
        return Err(Error::InvalidRadii(format!(
            "radii must lie in [4h, R/2] (h = {}, R = {big_r})",
            grid.h()
        )));
    }
    let ball = BallSpec::new(big_r);
    let grad = cell_gradient(ufield);
    let avg = average_ball(&grid, &ball, |ci, cj| {
        let [a, b] = grad.at(ci, cj);
        (a * a + b * b).powf(0.5 * p)
    })?;
    let gradient_scale = avg.powf(1.0 / p);
    let derivs = [node_derivative(ufield, Axis::X1), node_derivative(ufield, Axis::X2)];
    let mut osc = [Vec::new(), Vec::new()];
    let mut measured_c = [Vec::new(), Vec::new()];
    let factor: Vec<f64> = radii.iter().map(|r| (big_r / r).ln().powf(-0.5)).collect();
    for (j, d) in derivs.iter().enumerate() {
        for (r, f) in radii.iter().zip(&factor) {
            let o = oscillation(d, &BallSpec::new(*r))?;
            osc[j].push(o);
            measured_c[j].push(if o == 0.0 { 0.0 } else { o / f / gradient_scale });
        }
    }
    let sup_c = measured_c
        .iter()
        .flatten()
        .cloned()
        .fold(0.0, f64::max);
    Ok(OscillationProfile {
        radius: big_r,
        radii: radii.to_vec(),
        osc,
        factor,
        gradient_scale,
        measured_c,
        sup_c,
    })
}

/// Stability of `sup_r C(r, j)` across the two finest grids and across the
/// two smallest eps levels; the worse pair is reported.
pub fn check_theorem(
    across_resolution: Option<(&OscillationProfile, &OscillationProfile)>,
    across_eps: Option<(&OscillationProfile, &OscillationProfile)>,
) -> Result<EstimateReport> {
    let mut reports = Vec::new();
    if let Some((a, b)) = across_resolution {
        reports.push(EstimateReport::stability("theorem", &[a.sup_c, b.sup_c], STABILITY_BAND).with("pair", "resolution"));
    }
    if let Some((a, b)) = across_eps {
        reports.push(EstimateReport::stability("theorem", &[a.sup_c, b.sup_c], STABILITY_BAND).with("pair", "eps"));
    }
    EstimateReport::worst_of(reports).ok_or(Error::InsufficientInput {
        check: "theorem",
        detail: "needs two resolutions or two eps levels".into(),
    })
}

// ---------------------------------------------------------------------------
// Interior Lipschitz bound

/// `sup_{B_{R/2}} (ε + |∇u|²)` against `(⨍_{B_R} (ε + |∇u|²)^{p/2})^{2/p}`.
pub fn measure_lipschitz(ufield: &ScalarField, params: &EnergyParams, big_r: f64) -> Result<Ratio> {
    let grid = *ufield.grid();
    let grad = cell_gradient(ufield);
    let w = |ci: usize, cj: usize| {
        let [a, b] = grad.at(ci, cj);
        params.eps + a * a + b * b
    };
    let half = CellRegion::Ball(BallSpec::new(0.5 * big_r));
    let lhs = half
        .cells(&grid)?
        .into_iter()
        .map(|c| {
            let [a, b] = grad.cells()[c];
            params.eps + a * a + b * b
        })
        .fold(0.0, f64::max);
    let avg = average_ball(&grid, &BallSpec::new(big_r), |ci, cj| w(ci, cj).powf(0.5 * params.p))?;
    Ok(Ratio {
        lhs,
        rhs: avg.powf(2.0 / params.p),
    })
}

/// Lipschitz ratio stable across two resolutions.
pub fn check_lipschitz(fields: [&ScalarField; 2], params: &EnergyParams, big_r: f64) -> Result<EstimateReport> {
    let a = measure_lipschitz(fields[0], params, big_r)?;
    let b = measure_lipschitz(fields[1], params, big_r)?;
    Ok(EstimateReport::stability("lipschitz", &[a.value(), b.value()], STABILITY_BAND)
        .with_context(&context(fields[1].grid(), params, big_r))
        .with("n_pair", vec![fields[0].grid().n(), fields[1].grid().n()]))
}

// ---------------------------------------------------------------------------
// L² bound on second derivatives

/// `Σ_j ∫_{B_{R/2}} |∇∂_j u|²` against `(⨍_{B_R} (|∇u_ext|^p + ε^{p/2}))^{2/p}`.
pub fn measure_grad_l2(
    ufield: &ScalarField,
    extension: &ScalarField,
    params: &EnergyParams,
    big_r: f64,
) -> Result<Ratio> {
    ufield.same_grid(extension)?;
    let grid = *ufield.grid();
    let half = BallSpec::new(0.5 * big_r);
    let mut lhs = 0.0;
    for axis in Axis::BOTH {
        let g = cell_gradient(&node_derivative(ufield, axis));
        lhs += integrate_ball(&grid, &half, |ci, cj| {
            let [a, b] = g.at(ci, cj);
            a * a + b * b
        })?;
    }
    let ge = cell_gradient(extension);
    let floor = params.eps.powf(0.5 * params.p);
    let avg = average_ball(&grid, &BallSpec::new(big_r), |ci, cj| {
        let [a, b] = ge.at(ci, cj);
        (a * a + b * b).powf(0.5 * params.p) + floor
    })?;
    Ok(Ratio {
        lhs,
        rhs: avg.powf(2.0 / params.p),
    })
}

/// Ratio stable over a set of eps levels (usually the last three).
pub fn check_grad_l2(levels: &[(&ScalarField, EnergyParams)], extension: &ScalarField, big_r: f64) -> Result<EstimateReport> {
    if levels.len() < 2 {
        return Err(Error::InsufficientInput {
            check: "grad_l2",
            detail: "needs at least two eps levels".into(),
        });
    }
    let ratios = levels
        .iter()
        .map(|(u, params)| measure_grad_l2(u, extension, params, big_r).map(|r| r.value()))
        .collect::<Result<Vec<_>>>()?;
    let last = levels.last().unwrap();
    Ok(EstimateReport::stability("grad_l2", &ratios, STABILITY_BAND)
        .with_context(&context(last.0.grid(), &last.1, big_r))
        .with("eps_levels", levels.iter().map(|l| l.1.eps).collect::<Vec<_>>()))
}

// ---------------------------------------------------------------------------
// Energy bound

/// `∫_{B_R} |∇u^ε|^p` against `∫_{B_R} |∇u_ext|^p + ε^{p/2} π R²`.
pub fn measure_energy_estimate(
    ufield: &ScalarField,
    extension: &ScalarField,
    params: &EnergyParams,
    big_r: f64,
) -> Result<Ratio> {
    let ball = BallSpec::new(big_r);
    let lhs = crate::fields::lp_gradient_norm(ufield, &ball, params.p)?;
    let ext = crate::fields::lp_gradient_norm(extension, &ball, params.p)?;
    Ok(Ratio {
        lhs,
        rhs: ext + params.eps.powf(0.5 * params.p) * PI * big_r * big_r,
    })
}

pub fn check_energy_estimate(
    levels: &[(&ScalarField, EnergyParams)],
    extension: &ScalarField,
    big_r: f64,
) -> Result<EstimateReport> {
    if levels.len() < 2 {
        return Err(Error::InsufficientInput {
            check: "energy_estimate",
            detail: "needs at least two eps levels".into(),
        });
    }
    let ratios = levels
        .iter()
        .map(|(u, params)| measure_energy_estimate(u, extension, params, big_r).map(|r| r.value()))
        .collect::<Result<Vec<_>>>()?;
    let last = levels.last().unwrap();
    Ok(EstimateReport::stability("energy_estimate", &ratios, ENERGY_BAND)
        .with_context(&context(last.0.grid(), &last.1, big_r))
        .with("eps_levels", levels.iter().map(|l| l.1.eps).collect::<Vec<_>>()))
}

// ---------------------------------------------------------------------------
// Caccioppoli estimate at α = 0

/// Both sides on the unit ball after `u_R(x) = u(x₀ + R x)`, with
/// `w = εR² + |∇u_R|²` and a cutoff between `B_{1/2}` and `B_1`:
///
/// ```text
/// Σ_j ∫ w^{(p−2)/2} |∇∂_j u_R|² ξ²   vs   ∫ (|∇ξ|² + |∇²ξ|) w^{p/2}
/// ```
pub fn measure_caccioppoli(ufield: &ScalarField, params: &EnergyParams, big_r: f64) -> Result<Ratio> {
    if params.eps <= 0.0 {
        return Err(Error::EpsRequired("the Caccioppoli check"));
    }
    let grid = *ufield.grid();
    let cutoff = make_cutoff(&grid, 0.5 * big_r, big_r)?;
    let grad = cell_gradient(ufield);
    let second = [
        cell_gradient(&node_derivative(ufield, Axis::X1)),
        cell_gradient(&node_derivative(ufield, Axis::X2)),
    ];
    let r2 = big_r * big_r;
    // cell measure in rescaled coordinates is h²/R²
    let scale = 1.0 / r2;
    let ball = BallSpec::new(big_r);
    let lhs = scale
        * integrate_ball(&grid, &ball, |ci, cj| {
            let [a, b] = grad.at(ci, cj);
            let w = r2 * (params.eps + a * a + b * b);
            let xi = cutoff.sample(grid.cell_offset(ci, cj)).value;
            let mut s = 0.0;
            for g in &second {
                let [c, d] = g.at(ci, cj);
                // ∇∂_j u_R = R² ∇∂_j u
                s += r2 * r2 * (c * c + d * d);
            }
            w.powf(0.5 * (params.p - 2.0)) * s * xi * xi
        })?;
    let rhs = scale
        * integrate_ball(&grid, &ball, |ci, cj| {
            let [a, b] = grad.at(ci, cj);
            let w = r2 * (params.eps + a * a + b * b);
            let cs = cutoff.sample(grid.cell_offset(ci, cj));
            // ∇ξ_R = R ∇ξ, ∇²ξ_R = R² ∇²ξ
            let weight = r2 * cs.grad_norm().powi(2) + r2 * cs.hess_norm();
            weight * w.powf(0.5 * params.p)
        })?;
    Ok(Ratio { lhs, rhs })
}

pub fn check_caccioppoli(fields: [&ScalarField; 2], params: &EnergyParams, big_r: f64) -> Result<EstimateReport> {
    let a = measure_caccioppoli(fields[0], params, big_r)?;
    let b = measure_caccioppoli(fields[1], params, big_r)?;
    Ok(EstimateReport::stability("caccioppoli", &[a.value(), b.value()], STABILITY_BAND)
        .with_context(&context(fields[1].grid(), params, big_r))
        .with("n_pair", vec![fields[0].grid().n(), fields[1].grid().n()]))
}

// ---------------------------------------------------------------------------
// Scalar monotonicity inequality

/// Flux `(ε + a²)^{(p−2)/2} a`, with value 0 at `a = ε = 0`.
#[inline]
pub fn scalar_flux(a: f64, p: f64, eps: f64) -> f64 {
    let s = eps + a * a;
    if s == 0.0 {
        0.0
    } else {
        s.powf(0.5 * (p - 2.0)) * a
    }
}

/// Both sides of `|a−b|² (ε+a²+b²)^{(p−2)/2} ≤ C (flux(a) − flux(b))(a − b)`.
#[inline]
pub fn monotonicity_sides(a: f64, b: f64, p: f64, eps: f64) -> (f64, f64) {
    let d = a - b;
    let lhs = d * d * (eps + a * a + b * b).powf(0.5 * (p - 2.0));
    let rhs = (scalar_flux(a, p, eps) - scalar_flux(b, p, eps)) * d;
    (lhs, rhs)
}

/// Largest `lhs/rhs` over the `points × points` grid on `[−range, range]²`
/// minus its diagonal, with the maximizing pair.
pub fn sweep_max_ratio(p: f64, eps: f64, points: usize, range: f64) -> Result<(f64, f64, f64)> {
    if points < 2 {
        return Err(Error::InsufficientInput {
            check: "monotonicity",
            detail: "needs at least 2 sample points".into(),
        });
    }
    let step = 2.0 * range / (points - 1) as f64;
    let coord = |k: usize| -range + step * k as f64;
    let rows = par::map_range(points, |ia| {
        let a = coord(ia);
        let mut best = (f64::NEG_INFINITY, a, a);
        for ib in 0..points {
            if ib == ia {
                continue;
            }
            let b = coord(ib);
            let (lhs, rhs) = monotonicity_sides(a, b, p, eps);
            if !(rhs > 0.0) {
                return Err(Error::NonMonotone { a, b, p, eps, rhs });
            }
            let r = lhs / rhs;
            if r > best.0 {
                best = (r, a, b);
            }
        }
        Ok(best)
    });
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for row in rows {
        let r = row?;
        if r.0 > best.0 {
            best = r;
        }
    }
    Ok(best)
}

/// Max ratio finite and stable (±5%) when the sample spacing is halved.
pub fn sweep_monotonicity_inequality(p: f64, eps: f64, points: usize, range: f64) -> Result<EstimateReport> {
    let coarse = sweep_max_ratio(p, eps, points, range)?;
    let fine = sweep_max_ratio(p, eps, 2 * points - 1, range)?;
    Ok(EstimateReport::stability("monotonicity", &[coarse.0, fine.0], SWEEP_BAND)
        .with("p", p)
        .with("eps", eps)
        .with("points", points)
        .with("range", range)
        .with("argmax_coarse", vec![coarse.1, coarse.2])
        .with("argmax_fine", vec![fine.1, fine.2]))
}

// ---------------------------------------------------------------------------
// Derivative equation

/// Smooth test functions supported in `B_{R/2}`-centered bumps of radius
/// `R/3`, defined in continuum coordinates so every resolution samples the
/// same functions.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub center: [f64; 2],
    pub radius: f64,
    pub tilt: [f64; 3],
}

impl TestFunction {
    pub fn eval(&self, offset: [f64; 2]) -> f64 {
        let dx = offset[0] - self.center[0];
        let dy = offset[1] - self.center[1];
        let s = 1.0 - (dx * dx + dy * dy) / (self.radius * self.radius);
        if s <= 0.0 {
            return 0.0;
        }
        s * s * s * (self.tilt[0] + self.tilt[1] * dx / self.radius + self.tilt[2] * dy / self.radius)
    }

    pub fn sample(&self, grid: &Grid) -> ScalarField {
        let n = grid.n();
        let mut values = vec![0.0; n * n];
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                values[grid.index(i, j)] = self.eval(grid.node_offset(i, j));
            }
        }
        ScalarField::new(*grid, values).expect("bounded bump")
    }
}

pub fn standard_test_functions(big_r: f64, count: usize, seed: u64) -> Vec<TestFunction> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let rho = 0.5 * big_r * rng.gen_range(0.0..1.0f64).sqrt();
            let th = rng.gen_range(0.0..2.0 * PI);
            TestFunction {
                center: [rho * th.cos(), rho * th.sin()],
                radius: big_r / 3.0,
                tilt: [1.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            }
        })
        .collect()
}

/// Largest normalized `|∫ weight ∂_i(∂_j u) ∂_i φ|` over test functions and
/// both axes.
pub fn measure_derivative_equation(
    ufield: &ScalarField,
    params: &EnergyParams,
    tests: &[TestFunction],
) -> Result<f64> {
    let grid = *ufield.grid();
    let derivs = [node_derivative(ufield, Axis::X1), node_derivative(ufield, Axis::X2)];
    let mut worst: f64 = 0.0;
    for t in tests {
        let phi = t.sample(&grid);
        for d in &derivs {
            let (v, mag) = crate::energy::derivative_residual_parts(d, ufield, params, &phi)?;
            if mag > 0.0 {
                worst = worst.max(v.abs() / mag);
            }
        }
    }
    Ok(worst)
}

/// The normalized residual must shrink by [`DERIVATIVE_EQ_FACTOR`] from the
/// coarse to the fine grid. Encoded as `factor · fine ≤ coarse`.
pub fn check_derivative_equation(
    coarse: &ScalarField,
    fine: &ScalarField,
    params: &EnergyParams,
    tests: &[TestFunction],
) -> Result<EstimateReport> {
    let a = measure_derivative_equation(coarse, params, tests)?;
    let b = measure_derivative_equation(fine, params, tests)?;
    let floor = 1e-12;
    let lhs = DERIVATIVE_EQ_FACTOR * (b - floor).max(0.0);
    let rhs = (a - floor).max(0.0);
    Ok(EstimateReport::bound("derivative_equation", lhs, rhs, 0.0)
        .with_context(&context(fine.grid(), params, 0.0))
        .with("coarse", a)
        .with("fine", b)
        .with("n_pair", vec![coarse.grid().n(), fine.grid().n()]))
}

// ---------------------------------------------------------------------------
// ε-convergence

/// Largest ratio in the tail after forgiving one increase of at most 10%.
fn tail_ratio(diffs: &[f64], tail: usize) -> f64 {
    let ratios: Vec<f64> = diffs
        .windows(2)
        .map(|w| {
            if w[1] <= LADDER_DIFF_FLOOR {
                0.0
            } else if w[0] <= LADDER_DIFF_FLOOR {
                f64::INFINITY
            } else {
                w[1] / w[0]
            }
        })
        .collect();
    let start = ratios.len().saturating_sub(tail);
    let mut last: Vec<f64> = ratios[start..].to_vec();
    last.sort_by(f64::total_cmp);
    match last.as_slice() {
        [] => 0.0,
        [.., second, top] if *top >= 1.0 && *top <= CONVERGENCE_ALLOWANCE && *second < 1.0 => *second,
        [.., top] => *top,
    }
}

/// Both consecutive-difference sequences eventually decreasing: the last
/// three ratios at most 1, one increase of at most 10% forgiven.
pub fn check_convergence(ladder: &LadderReport) -> Result<EstimateReport> {
    if ladder.eps.len() < 4 {
        return Err(Error::InsufficientInput {
            check: "convergence",
            detail: format!("ladder has {} levels, needs 4", ladder.eps.len()),
        });
    }
    let sup = tail_ratio(&ladder.sup_diff, 3);
    let grad = tail_ratio(&ladder.grad_lp_diff, 3);
    let worst = sup.max(grad);
    Ok(EstimateReport::bound("convergence", worst, 1.0, 0.0)
        .with("p", ladder.p)
        .with("R", ladder.radius)
        .with("eps_levels", ladder.eps.clone())
        .with("sup_diff", ladder.sup_diff.clone())
        .with("grad_lp_diff", ladder.grad_lp_diff.clone())
        .with("sup_tail_ratio", sup)
        .with("grad_tail_ratio", grad))
}

/// Errors against a known solution must be nonincreasing along the ladder.
pub fn check_exact_error(errors: &[f64]) -> EstimateReport {
    let worst = errors
        .windows(2)
        .map(|w| if w[0] == 0.0 { if w[1] == 0.0 { 0.0 } else { f64::INFINITY } } else { w[1] / w[0] })
        .fold(0.0, f64::max);
    EstimateReport::bound("exact_error_decrease", worst, 1.0, 0.0).with("errors", errors.to_vec())
}
