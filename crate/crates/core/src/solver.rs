//! Newton–CG minimization of the regularized energy and the ε-continuation
//! ladder.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{energy, energy_change, residual, EnergyParams, Linearization};
use crate::error::{Error, Result};
use crate::fields::{cell_gradient, integrate_ball, ScalarField};
use crate::geometry::{ball_nodes, BallSpec, CellRegion, Grid};
use crate::par;
use crate::verify::EstimateReport;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    /// Target for the sup-norm of the interior nodal residual.
    pub tol_residual: f64,
    pub max_newton: usize,
    pub max_cg: usize,
    /// Relative residual at which the inner CG stops.
    pub cg_rel_tol: f64,
    /// Sufficient-decrease fraction of the Armijo rule.
    pub armijo_slope: f64,
    /// Backtracking factor.
    pub armijo_shrink: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tol_residual: 1e-10,
            max_newton: 200,
            max_cg: 5000,
            cg_rel_tol: 1e-8,
            armijo_slope: 1e-4,
            armijo_shrink: 0.5,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSolveConfig(m.to_string()));
        if !(self.tol_residual > 0.0) {
            return bad("tol_residual must be positive");
        }
        if self.max_newton < 1 || self.max_cg < 1 {
            return bad("iteration caps must be at least 1");
        }
        if !(self.cg_rel_tol > 0.0 && self.cg_rel_tol < 1.0) {
            return bad("cg_rel_tol must lie in (0, 1)");
        }
        if !(self.armijo_slope > 0.0 && self.armijo_slope <= 0.5) {
            return bad("armijo_slope must lie in (0, 1/2]");
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return bad("armijo_shrink must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub p: f64,
    pub eps: f64,
    pub n: usize,
    pub iterations: usize,
    pub cg_iterations: usize,
    pub residual: f64,
    pub energy: f64,
    /// Energy after each accepted step, starting with the initial iterate.
    pub energy_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub converged: bool,
    pub failure: Option<String>,
    pub wall_time_s: f64,
}

/// Transfinite (Coons) bilinear interpolation of the boundary values into
/// the interior. Reproduces bilinear fields exactly.
pub fn coons_extension(boundary: &ScalarField) -> ScalarField {
    let grid = *boundary.grid();
    let n = grid.n();
    let b = |i: usize, j: usize| boundary.at(i, j);
    let last = (n - 1) as f64;
    let mut values = boundary.values().to_vec();
    for j in 1..n - 1 {
        let t = j as f64 / last;
        for i in 1..n - 1 {
            let s = i as f64 / last;
            let edges = (1.0 - s) * b(0, j) + s * b(n - 1, j) + (1.0 - t) * b(i, 0) + t * b(i, n - 1);
            let corners = (1.0 - s) * (1.0 - t) * b(0, 0)
                + s * (1.0 - t) * b(n - 1, 0)
                + (1.0 - s) * t * b(0, n - 1)
                + s * t * b(n - 1, n - 1);
            values[grid.index(i, j)] = edges - corners;
        }
    }
    ScalarField::new(grid, values).expect("convex combination of finite values")
}

/// Preconditioned conjugate gradients for `H x = b` with Jacobi scaling.
/// Returns the iterate and the number of iterations used.
fn pcg(lin: &Linearization, b: &[f64], cfg: &SolveConfig) -> (Vec<f64>, usize) {
    let len = b.len();
    let diag = lin.diagonal();
    let mut x = vec![0.0; len];
    let bnorm = par::dot(b, b).sqrt();
    if bnorm == 0.0 {
        return (x, 0);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
    let mut dir = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut ad = vec![0.0; len];
    let mut it = 0;
    while it < cfg.max_cg {
        it += 1;
        lin.apply(&dir, &mut ad);
        let curv = par::dot(&dir, &ad);
        if !(curv > 0.0) {
            break;
        }
        let alpha = rz / curv;
        par::axpy(alpha, &dir, &mut x);
        par::axpy(-alpha, &ad, &mut r);
        if par::dot(&r, &r).sqrt() <= cfg.cg_rel_tol * bnorm {
            break;
        }
        z.iter_mut()
            .zip(&r)
            .zip(&diag)
            .for_each(|((zi, ri), di)| *zi = ri / di);
        let rz_next = par::dot(&r, &z);
        par::xpby(&z, rz_next / rz, &mut dir);
        rz = rz_next;
    }
    (x, it)
}

/// Solves the regularized Dirichlet problem with the boundary values of
/// `boundary`, starting from their Coons extension.
pub fn solve_dirichlet(
    boundary: &ScalarField,
    params: &EnergyParams,
    cfg: &SolveConfig,
) -> Result<(ScalarField, SolveReport)> {
    solve_from(coons_extension(boundary), params, cfg)
}

/// Newton–CG with Armijo backtracking from `initial`, whose boundary values
/// are kept fixed.
///
/// Failing to reach `tol_residual` is not an error: the last (lowest-energy)
/// iterate is returned with `converged = false` and a reason.
pub fn solve_from(
    initial: ScalarField,
    params: &EnergyParams,
    cfg: &SolveConfig,
) -> Result<(ScalarField, SolveReport)> {
    params.validate()?;
    cfg.validate()?;
    if params.eps <= 0.0 {
        return Err(Error::EpsRequired("solve_dirichlet"));
    }
    let start = Instant::now();
    let grid = *initial.grid();
    let mut u = initial;
    let mut e = energy(&u, params, CellRegion::Whole)?;
    let mut report = SolveReport {
        p: params.p,
        eps: params.eps,
        n: grid.n(),
        iterations: 0,
        cg_iterations: 0,
        residual: f64::INFINITY,
        energy: e,
        energy_history: vec![e],
        residual_history: Vec::new(),
        converged: false,
        failure: None,
        wall_time_s: 0.0,
    };
    loop {
        let r = residual(&u, params)?;
        let rsup = r.sup_norm();
        report.residual = rsup;
        report.residual_history.push(rsup);
        if rsup <= cfg.tol_residual {
            report.converged = true;
            break;
        }
        if report.iterations >= cfg.max_newton {
            report.failure = Some(format!(
                "no convergence in {} Newton steps (residual {rsup:e})",
                cfg.max_newton
            ));
            break;
        }
        let lin = Linearization::new(&u, params)?;
        let neg: Vec<f64> = r.values().iter().map(|v| -v).collect();
        let (mut d, cg_its) = pcg(&lin, &neg, cfg);
        report.cg_iterations += cg_its;
        let mut slope = par::dot(r.values(), &d);
        if !(slope < 0.0) {
            // not a descent direction: fall back to scaled steepest descent
            let diag = lin.diagonal();
            d = neg.iter().zip(&diag).map(|(a, b)| a / b).collect();
            slope = par::dot(r.values(), &d);
        }
        let mut t = 1.0;
        let accepted = loop {
            let de = energy_change(&u, params, &d, t);
            if de <= cfg.armijo_slope * t * slope {
                break Some(de);
            }
            t *= cfg.armijo_shrink;
            if t < 1e-12 {
                break None;
            }
        };
        let Some(mut best) = accepted else {
            report.failure = Some(format!("line search stagnated (residual {rsup:e})"));
            break;
        };
        // Newton overshoots on the sub-quadratic density (for a pure power
        // with p = 1.5 the full step flips the sign), so keep shrinking while
        // the energy keeps dropping.
        while t > 1e-12 {
            let de = energy_change(&u, params, &d, t * cfg.armijo_shrink);
            if de >= best {
                break;
            }
            best = de;
            t *= cfg.armijo_shrink;
        }
        par::axpy(t, &d, u.values_mut());
        e = energy(&u, params, CellRegion::Whole)?;
        report.energy_history.push(e);
        report.iterations += 1;
    }
    report.energy = e;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((u, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderReport {
    pub p: f64,
    /// Strictly decreasing, `eps_k = eps0 · 4^{−k}`.
    pub eps: Vec<f64>,
    pub solves: Vec<SolveReport>,
    /// Radius `R` of the ball used for the differences.
    pub radius: f64,
    /// `max_{B_{R/2}} |u^{ε_k} − u^{ε_{k+1}}|`, one entry per consecutive pair.
    pub sup_diff: Vec<f64>,
    /// `(∫_{B_R} |∇(u^{ε_k} − u^{ε_{k+1}})|^p)^{1/p}`.
    pub grad_lp_diff: Vec<f64>,
    /// Both differences shrank by at least [`LADDER_CAUCHY_FACTOR`] over the
    /// last two pairs. Heuristic.
    pub converged: bool,
}

pub const LADDER_RATIO: f64 = 4.0;
pub const LADDER_CAUCHY_FACTOR: f64 = 1.5;

/// Differences below this are treated as zero by the ladder's Cauchy test.
pub const LADDER_DIFF_FLOOR: f64 = 1e-11;

pub fn ladder_eps(eps0: f64, levels: usize) -> Vec<f64> {
    (0..levels)
        .map(|k| eps0 / LADDER_RATIO.powi(k as i32))
        .collect()
}

/// Solves for `eps0 · 4^{−k}`, `k = 0..levels`, warm-starting each level
/// from the previous minimizer. Returns all level fields (last = smallest
/// eps) and the report.
pub fn epsilon_ladder(
    boundary: &ScalarField,
    p: f64,
    eps0: f64,
    levels: usize,
    ball: &BallSpec,
    cfg: &SolveConfig,
) -> Result<(Vec<ScalarField>, LadderReport)> {
    if levels < 2 {
        return Err(Error::LadderTooShort(levels));
    }
    if !(eps0.is_finite() && eps0 > 0.0) {
        return Err(Error::EpsRequired("epsilon_ladder"));
    }
    ball.validate(boundary.grid())?;
    let eps = ladder_eps(eps0, levels);
    let mut fields: Vec<ScalarField> = Vec::with_capacity(levels);
    let mut solves = Vec::with_capacity(levels);
    for (k, &e) in eps.iter().enumerate() {
        let params = EnergyParams::new(p, e)?;
        let start = match fields.last() {
            Some(prev) => prev.clone(),
            None => coons_extension(boundary),
        };
        let (u, rep) = solve_from(start, &params, cfg)?;
        if !rep.converged {
            return Err(Error::LevelFailed {
                level: k,
                eps: e,
                reason: rep.failure.clone().unwrap_or_default(),
            });
        }
        fields.push(u);
        solves.push(rep);
    }
    let report = ladder_report(&fields, p, eps, solves, ball)?;
    Ok((fields, report))
}

/// Consecutive differences of already solved ladder levels.
pub fn ladder_report(
    fields: &[ScalarField],
    p: f64,
    eps: Vec<f64>,
    solves: Vec<SolveReport>,
    ball: &BallSpec,
) -> Result<LadderReport> {
    if fields.len() != eps.len() {
        return Err(Error::SizeMismatch {
            expected: eps.len(),
            got: fields.len(),
        });
    }
    let Some(first) = fields.first() else {
        return Err(Error::LadderTooShort(0));
    };
    let half = ball_nodes(first.grid(), &BallSpec::new(0.5 * ball.radius))?;
    let mut sup_diff = Vec::new();
    let mut grad_lp_diff = Vec::new();
    for w in fields.windows(2) {
        sup_diff.push(w[1].max_abs_diff(&w[0], Some(&half))?);
        grad_lp_diff.push(gradient_lp_distance(&w[1], &w[0], ball, p)?);
    }
    let converged = cauchy_converged(&sup_diff) && cauchy_converged(&grad_lp_diff);
    Ok(LadderReport {
        p,
        eps,
        solves,
        radius: ball.radius,
        sup_diff,
        grad_lp_diff,
        converged,
    })
}

fn cauchy_converged(diffs: &[f64]) -> bool {
    match diffs {
        [.., a, b] => *b <= LADDER_DIFF_FLOOR || *b * LADDER_CAUCHY_FACTOR <= *a,
        [a] => *a <= LADDER_DIFF_FLOOR,
        [] => false,
    }
}

/// `(∫_B |∇(a − b)|^p)^{1/p}` with cell gradients.
pub fn gradient_lp_distance(a: &ScalarField, b: &ScalarField, ball: &BallSpec, p: f64) -> Result<f64> {
    let diff = cell_gradient(&a.sub(b)?);
    let total = integrate_ball(a.grid(), ball, |ci, cj| {
        let [x, y] = diff.at(ci, cj);
        (x * x + y * y).powf(0.5 * p)
    })?;
    Ok(total.powf(1.0 / p))
}

/// Relative slack allowed when comparing energies of competitors.
pub const MINIMALITY_SLACK: f64 = 1e-10;

/// Checks `I^ε(solution) ≤ I^ε(competitor)` for each competitor.
pub fn minimality_check(
    solution: &ScalarField,
    competitors: &[ScalarField],
    params: &EnergyParams,
) -> Result<EstimateReport> {
    for (k, c) in competitors.iter().enumerate() {
        if !solution.same_boundary(c) {
            return Err(Error::BoundaryMismatch(k));
        }
    }
    let e_sol = energy(solution, params, CellRegion::Whole)?;
    let energies: Vec<f64> = par::map_slice(competitors, |c| {
        energy(c, params, CellRegion::Whole).unwrap_or(f64::NAN)
    });
    let min_competitor = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let violations = energies
        .iter()
        .filter(|&&ec| !(e_sol <= ec * (1.0 + MINIMALITY_SLACK)))
        .count();
    let rep = EstimateReport::bound("minimality", e_sol, min_competitor, MINIMALITY_SLACK);
    Ok(rep
        .with("p", params.p)
        .with("eps", params.eps)
        .with("n", solution.grid().n())
        .with("competitors", competitors.len())
        .with("violations", violations)
        .with("worst_margin", min_competitor - e_sol))
}

/// Same-boundary competitors `solution + a·φ` with log-uniform amplitudes
/// `a ∈ [1e−3, 1]` and random smooth-plus-rough interior shapes `φ`
/// (`max |φ| = 1`).
pub fn random_competitors(solution: &ScalarField, count: usize, seed: u64) -> Vec<ScalarField> {
    let grid = *solution.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    type Spec = (f64, Vec<(f64, f64, f64)>, u64);
    let specs: Vec<Spec> = (0..count)
        .map(|_| {
            let amp = 10f64.powf(rng.gen_range(-3.0..=0.0));
            let modes = (0..3)
                .map(|_| {
                    (
                        rng.gen_range(1..6) as f64,
                        rng.gen_range(1..6) as f64,
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            (amp, modes, rng.gen())
        })
        .collect();
    par::map_slice(&specs, |(amp, modes, noise_seed)| {
        perturb(solution, &grid, *amp, modes, *noise_seed)
    })
}

fn perturb(
    solution: &ScalarField,
    grid: &Grid,
    amp: f64,
    modes: &[(f64, f64, f64)],
    noise_seed: u64,
) -> ScalarField {
    use std::f64::consts::PI;
    let n = grid.n();
    let last = (n - 1) as f64;
    let mut noise = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut shape = vec![0.0; n * n];
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let (s, t) = (i as f64 / last, j as f64 / last);
            let smooth: f64 = modes
                .iter()
                .map(|(a, b, c)| c * (a * PI * s).sin() * (b * PI * t).sin())
                .sum();
            shape[grid.index(i, j)] = smooth + 0.1 * noise.gen_range(-1.0..1.0);
        }
    }
    let peak = shape.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let values = solution
        .values()
        .iter()
        .zip(&shape)
        .map(|(u, s)| u + amp * s / peak)
        .collect();
    ScalarField::new(*grid, values).expect("finite perturbation")
}
