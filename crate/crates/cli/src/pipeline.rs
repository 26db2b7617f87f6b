use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use orthoplap::fields::{node_derivative, read_snapshot, write_snapshot};
use orthoplap::scenario::Scenario;
use orthoplap::solver::{
    coons_extension, epsilon_ladder, ladder_report, minimality_check, random_competitors, solve_from, LadderReport,
    SolveReport, LADDER_RATIO,
};
use orthoplap::verify::{
    check_caccioppoli, check_convergence, check_derivative_equation, check_energy_estimate, check_exact_error,
    check_grad_l2, check_lebesgue, check_lipschitz, check_maxmin, check_theorem, measure_caccioppoli,
    measure_energy_estimate, measure_grad_l2, measure_lipschitz, measure_oscillation_profile, radii_ladder,
    standard_test_functions, sweep_monotonicity_inequality,
};
use orthoplap::{par, Axis, BallSpec, EnergyParams, EstimateReport, Grid, ScalarField};
use serde::Serialize;
use serde_json::Value;

use crate::config::{NegativeControl, RunConfig};

/// One resolution of a scenario: all ladder levels, smallest eps last.
pub struct ResolutionRun {
    pub grid: Grid,
    pub fields: Vec<ScalarField>,
    pub ladder: LadderReport,
}

pub struct ScenarioRun {
    pub scenario: Scenario,
    /// Ascending in n.
    pub runs: Vec<ResolutionRun>,
}

fn eps_dir(out: &Path, scenario: &str, n: usize, eps: f64) -> PathBuf {
    out.join(scenario).join(n.to_string()).join(format!("{eps:e}"))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

/// Solves every scenario × resolution job and writes the level artifacts.
pub fn solve_all(cfg: &RunConfig) -> Result<Vec<ScenarioRun>> {
    let scenarios = cfg.scenarios()?;
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|s| cfg.n.iter().map(move |&n| (s, n)))
        .collect();
    let results = par::map_slice(&jobs, |&(s, n)| solve_one(cfg, &scenarios[s], n));
    let mut runs: Vec<ScenarioRun> = scenarios
        .into_iter()
        .map(|scenario| ScenarioRun { scenario, runs: Vec::new() })
        .collect();
    for ((s, _), r) in jobs.into_iter().zip(results) {
        runs[s].runs.push(r?);
    }
    Ok(runs)
}

fn solve_one(cfg: &RunConfig, scenario: &Scenario, n: usize) -> Result<ResolutionRun> {
    let grid = cfg.grid(n)?;
    let boundary = scenario.boundary_field(grid)?;
    let (fields, ladder) = epsilon_ladder(
        &boundary,
        scenario.p,
        cfg.eps0,
        cfg.levels,
        &BallSpec::new(cfg.radius),
        &cfg.solver,
    )
    .with_context(|| format!("scenario {} at n = {n}", scenario.name))?;
    for ((field, rep), &eps) in fields.iter().zip(&ladder.solves).zip(&ladder.eps) {
        let dir = eps_dir(&cfg.out, &scenario.name, n, eps);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let f = File::create(dir.join("field.txt"))?;
        write_snapshot(field, scenario.p, eps, BufWriter::new(f))?;
        write_json(&dir.join("solve.json"), rep)?;
    }
    write_json(&cfg.out.join(&scenario.name).join(n.to_string()).join("ladder.json"), &ladder)?;
    Ok(ResolutionRun { grid, fields, ladder })
}

/// Reloads the artifacts written by [`solve_all`].
pub fn load_all(cfg: &RunConfig) -> Result<Vec<ScenarioRun>> {
    let mut out = Vec::new();
    for scenario in cfg.scenarios()? {
        let mut runs = Vec::new();
        for &n in &cfg.n {
            let eps = cfg.eps_levels();
            let mut fields = Vec::new();
            let mut solves = Vec::new();
            for &e in &eps {
                let dir = eps_dir(&cfg.out, &scenario.name, n, e);
                let path = dir.join("field.txt");
                let f = File::open(&path).with_context(|| format!("missing artifact {}", path.display()))?;
                let snap = read_snapshot(BufReader::new(f), cfg.center)
                    .with_context(|| format!("reading {}", path.display()))?;
                fields.push(snap.field);
                let path = dir.join("solve.json");
                let f = File::open(&path).with_context(|| format!("missing artifact {}", path.display()))?;
                let rep: SolveReport =
                    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?;
                solves.push(rep);
            }
            let ladder = ladder_report(&fields, scenario.p, eps, solves, &BallSpec::new(cfg.radius))?;
            runs.push(ResolutionRun {
                grid: *fields[0].grid(),
                fields,
                ladder,
            });
        }
        out.push(ScenarioRun { scenario, runs });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    pub scenario: String,
    pub config: Value,
    pub reports: Vec<EstimateReport>,
    /// Expected to fail; a passing control means the harness is blind.
    pub negative_control: EstimateReport,
    /// Checks that need more resolutions or levels than configured.
    pub skipped: Vec<String>,
}

impl Verification {
    pub fn all_pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass) && !self.negative_control.pass
    }
}

fn tag(r: EstimateReport, n: usize, axis: Option<Axis>) -> EstimateReport {
    let r = r.with("n", n);
    match axis {
        Some(a) => r.with("j", a.label()),
        None => r,
    }
}

pub fn verify_scenario(cfg: &RunConfig, sr: &ScenarioRun) -> Result<Verification> {
    let p = sr.scenario.p;
    let big_r = cfg.radius;
    let tol = &cfg.tolerances;
    let r_min = cfg.min_radius()?;
    let radii = radii_ladder(big_r, cfg.radii_count, r_min)?;
    let balls: Vec<BallSpec> = radii_ladder(big_r, 5, r_min)?.into_iter().map(BallSpec::new).collect();
    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    let last_params = |run: &ResolutionRun| EnergyParams::new(p, *run.ladder.eps.last().unwrap());

    for run in &sr.runs {
        let n = run.grid.n();
        let u = run.fields.last().unwrap();
        if run.ladder.eps.len() >= 4 {
            reports.push(tag(check_convergence(&run.ladder)?, n, None));
        } else {
            skipped.push(format!("convergence at n = {n}: needs 4 levels"));
        }
        if let Some(exact) = sr.scenario.exact(run.grid)? {
            let errors = run
                .fields
                .iter()
                .map(|f| f.max_abs_diff(&exact, None))
                .collect::<orthoplap::Result<Vec<_>>>()?;
            reports.push(tag(check_exact_error(&errors), n, None));
        }
        let competitors = random_competitors(u, cfg.competitors, cfg.seed);
        reports.push(tag(minimality_check(u, &competitors, &last_params(run)?)?, n, None));
        for axis in Axis::BOTH {
            let d = node_derivative(u, axis);
            reports.push(tag(check_maxmin(&d, &balls)?, n, Some(axis)));
            let leb = radii
                .iter()
                .map(|&r| check_lebesgue(&d, r, big_r))
                .collect::<orthoplap::Result<Vec<_>>>()?;
            let worst = EstimateReport::worst_of(leb).unwrap().with_tolerance(tol.explicit);
            reports.push(tag(worst, n, Some(axis)));
        }
    }

    let finest = sr.runs.last().unwrap();
    let fine_n = finest.grid.n();
    let profile = |u: &ScalarField| measure_oscillation_profile(u, p, big_r, &radii);
    let eps_pair = if finest.fields.len() >= 2 {
        let k = finest.fields.len();
        Some((profile(&finest.fields[k - 2])?, profile(&finest.fields[k - 1])?))
    } else {
        None
    };
    if sr.runs.len() >= 2 {
        let coarse = &sr.runs[sr.runs.len() - 2];
        let (uc, uf) = (coarse.fields.last().unwrap(), finest.fields.last().unwrap());
        let params = last_params(finest)?;
        let res_pair = (profile(uc)?, profile(uf)?);
        let theorem = check_theorem(Some((&res_pair.0, &res_pair.1)), eps_pair.as_ref().map(|(a, b)| (a, b)))?;
        reports.push(tag(theorem.with_tolerance(tol.stability).with("p", p), fine_n, None));
        reports.push(tag(check_lipschitz([uc, uf], &params, big_r)?.with_tolerance(tol.stability), fine_n, None));
        reports.push(tag(check_caccioppoli([uc, uf], &params, big_r)?.with_tolerance(tol.stability), fine_n, None));
        // at the first level, where h resolves the regularization scale
        let first = EnergyParams::new(p, finest.ladder.eps[0])?;
        let tests = standard_test_functions(big_r, 8, cfg.seed);
        reports.push(tag(
            check_derivative_equation(&coarse.fields[0], &finest.fields[0], &first, &tests)?,
            fine_n,
            None,
        ));
    } else {
        skipped.push("theorem, lipschitz, caccioppoli, derivative_equation: need two resolutions".into());
    }

    let extension = sr.scenario.extension(finest.grid)?;
    let levels: Vec<(&ScalarField, EnergyParams)> = finest
        .fields
        .iter()
        .zip(&finest.ladder.eps)
        .map(|(f, &e)| Ok((f, EnergyParams::new(p, e)?)))
        .collect::<Result<_>>()?;
    let tail = &levels[levels.len().saturating_sub(3)..];
    reports.push(tag(check_grad_l2(tail, &extension, big_r)?.with_tolerance(tol.stability), fine_n, None));
    reports.push(tag(check_energy_estimate(&levels, &extension, big_r)?.with_tolerance(tol.energy), fine_n, None));

    let sweeps = [0.0, 0.1, 1.0]
        .iter()
        .map(|&e| sweep_monotonicity_inequality(p, e, cfg.sweep_points, 10.0))
        .collect::<orthoplap::Result<Vec<_>>>()?;
    reports.push(EstimateReport::worst_of(sweeps).unwrap().with_tolerance(tol.sweep));

    let control = match cfg.negative_control_field {
        NegativeControl::RadialBump => ScalarField::from_fn(finest.grid, |x| x[0] * x[0] + x[1] * x[1])?,
        NegativeControl::Affine => ScalarField::from_fn(finest.grid, |x| x[0] - 2.0 * x[1])?,
    };
    let negative_control = tag(check_maxmin(&control, &balls)?, fine_n, None)
        .with("field", serde_json::to_value(cfg.negative_control_field)?);

    let config = serde_json::to_value(cfg)?;
    let stamp = |r: EstimateReport| r.with("scenario", sr.scenario.name.clone()).with("config", config.clone());
    let mut reports: Vec<EstimateReport> = reports.into_iter().map(stamp).collect();
    reports.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(Verification {
        scenario: sr.scenario.name.clone(),
        config: config.clone(),
        reports,
        negative_control: stamp(negative_control),
        skipped,
    })
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    scenario: &'a str,
    check: &'a str,
    n: Option<u64>,
    j: Option<u64>,
    lhs: f64,
    rhs: f64,
    ratio: Option<f64>,
    tolerance: f64,
    pass: bool,
    expected_fail: bool,
}

pub fn write_verification(cfg: &RunConfig, v: &Verification) -> Result<()> {
    let dir = cfg.out.join(&v.scenario);
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("reports.json"), v)?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    let rows = v.reports.iter().map(|r| (r, false)).chain([(&v.negative_control, true)]);
    for (r, expected_fail) in rows {
        let ctx_u = |k: &str| r.context.get(k).and_then(Value::as_u64);
        w.serialize(SummaryRow {
            scenario: &v.scenario,
            check: &r.name,
            n: ctx_u("n"),
            j: ctx_u("j"),
            lhs: r.lhs,
            rhs: r.rhs,
            ratio: r.ratio,
            tolerance: r.tolerance,
            pass: r.pass,
            expected_fail,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// `eps0 · 4^{−k}` down to `target`, ending exactly at `target`.
pub fn continuation_levels(eps0: f64, target: f64) -> Vec<f64> {
    let mut levels = Vec::new();
    let mut k = 0;
    loop {
        let e = eps0 / LADDER_RATIO.powi(k);
        if e <= target * (1.0 + 1e-9) {
            levels.push(target);
            return levels;
        }
        levels.push(e);
        k += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub check: String,
    pub scenario: String,
    pub p: f64,
    pub eps: f64,
    pub n: usize,
    pub r: Option<f64>,
    pub j: Option<usize>,
    pub ratio: f64,
}

/// Measured constants over scenario × p × eps × n, in that nesting order.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    let scenarios = cfg.scenarios()?;
    let targets = cfg.sweep_targets();
    if cfg.sweep_p.is_empty() || targets.is_empty() {
        bail!("empty parameter grid: sweep_p and sweep_eps must be non-empty");
    }
    let mut jobs = Vec::new();
    for s in &scenarios {
        for &p in &cfg.sweep_p {
            for &eps in &targets {
                for &n in &cfg.n {
                    jobs.push((s, p, eps, n));
                }
            }
        }
    }
    let results = par::map_slice(&jobs, |&(s, p, eps, n)| sweep_point(cfg, s, p, eps, n));
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    Ok(rows)
}

fn sweep_point(cfg: &RunConfig, scenario: &Scenario, p: f64, eps: f64, n: usize) -> Result<Vec<SweepRow>> {
    let grid = cfg.grid(n)?;
    let mut s = scenario.clone();
    s.p = p;
    let boundary = s.boundary_field(grid)?;
    let mut u = coons_extension(&boundary);
    for e in continuation_levels(cfg.eps0, eps) {
        let (next, rep) = solve_from(u, &EnergyParams::new(p, e)?, &cfg.solver)?;
        if !rep.converged {
            return Err(orthoplap::Error::LevelFailed {
                level: 0,
                eps: e,
                reason: rep.failure.unwrap_or_default(),
            })
            .with_context(|| format!("sweep {} p = {p} n = {n}", s.name));
        }
        u = next;
    }
    let params = EnergyParams::new(p, eps)?;
    let big_r = cfg.radius;
    let radii = radii_ladder(big_r, cfg.radii_count, cfg.min_radius()?)?;
    let ext = s.extension(grid)?;
    let row = |check: &str, r: Option<f64>, j: Option<usize>, ratio: f64| SweepRow {
        check: check.into(),
        scenario: s.name.clone(),
        p,
        eps,
        n,
        r,
        j,
        ratio,
    };
    let mut rows = Vec::new();
    let profile = measure_oscillation_profile(&u, p, big_r, &radii)?;
    for axis in Axis::BOTH {
        for (k, &r) in radii.iter().enumerate() {
            rows.push(row("theorem", Some(r), Some(axis.label()), profile.measured_c[axis.index()][k]));
        }
    }
    rows.push(row("lipschitz", None, None, measure_lipschitz(&u, &params, big_r)?.value()));
    rows.push(row("grad_l2", None, None, measure_grad_l2(&u, &ext, &params, big_r)?.value()));
    rows.push(row("caccioppoli", None, None, measure_caccioppoli(&u, &params, big_r)?.value()));
    rows.push(row("energy_estimate", None, None, measure_energy_estimate(&u, &ext, &params, big_r)?.value()));
    Ok(rows)
}

pub fn write_sweep(cfg: &RunConfig, rows: &[SweepRow]) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use orthoplap::solver::ladder_eps;

    #[test]
    fn continuation_hits_ladder_levels_exactly() {
        let ladder = ladder_eps(1e-2, 6);
        let levels = continuation_levels(1e-2, *ladder.last().unwrap());
        assert_eq!(levels.len(), 6);
        for (a, b) in levels.iter().zip(&ladder) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(continuation_levels(1e-2, 1e-2), vec![1e-2]);
        assert_eq!(continuation_levels(1e-2, 3e-3), vec![1e-2, 3e-3]);
    }
}
