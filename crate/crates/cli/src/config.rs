use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use orthoplap::scenario::{find_standard, standard_suite, BoundaryData, Scenario};
use orthoplap::solver::{ladder_eps, SolveConfig};
use orthoplap::verify::{EXPLICIT_TOL, ENERGY_BAND, STABILITY_BAND, SWEEP_BAND};
use orthoplap::{BallSpec, Grid};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Checks with an explicit constant (the Lebesgue lemma).
    pub explicit: f64,
    /// Measured constants across resolutions or eps levels.
    pub stability: f64,
    /// Energy bound across eps levels.
    pub energy: f64,
    /// Monotonicity sweep under refinement.
    pub sweep: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            explicit: EXPLICIT_TOL,
            stability: STABILITY_BAND,
            energy: ENERGY_BAND,
            sweep: SWEEP_BAND,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeControl {
    /// `x₁² + x₂²`, whose derivatives have interior extrema.
    RadialBump,
    /// An affine field; the control then passes and the run must fail.
    Affine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `"standard"` for the whole suite, a standard scenario name, or a
    /// custom name together with `boundary`.
    pub scenario: String,
    pub boundary: Option<BoundaryData>,
    /// Overrides the scenario exponent.
    pub p: Option<f64>,
    pub eps0: f64,
    pub levels: usize,
    /// Odd node counts, ascending.
    pub n: Vec<usize>,
    pub side: f64,
    pub center: [f64; 2],
    #[serde(rename = "R")]
    pub radius: f64,
    pub radii_count: usize,
    /// Smallest radius in units of the coarsest h; default `max(4h, R/32)`.
    pub radii_min_h: Option<f64>,
    pub out: PathBuf,
    pub seed: u64,
    pub competitors: usize,
    pub tolerances: Tolerances,
    pub solver: SolveConfig,
    pub solve_then_verify: bool,
    pub negative_control_field: NegativeControl,
    /// Sample points per axis of the monotonicity sweep.
    pub sweep_points: usize,
    pub sweep_p: Vec<f64>,
    /// Target eps values for `sweep`; default is the ladder's last level.
    pub sweep_eps: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "standard".into(),
            boundary: None,
            p: None,
            eps0: 1e-2,
            levels: 6,
            n: vec![129, 257],
            side: 2.0,
            center: [0.0, 0.0],
            radius: 0.8,
            radii_count: 8,
            radii_min_h: None,
            out: PathBuf::from("runs"),
            seed: 20240601,
            competitors: 100,
            tolerances: Tolerances::default(),
            solver: SolveConfig::default(),
            solve_then_verify: true,
            negative_control_field: NegativeControl::RadialBump,
            sweep_points: 401,
            sweep_p: vec![1.2, 1.5, 1.8],
            sweep_eps: None,
        }
    }
}

impl RunConfig {
    /// Reads a JSON config (missing keys take defaults) and applies
    /// `key=value` overrides; values parse as JSON, falling back to strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str::<Value>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Value::Object(Default::default()),
        };
        // start from the defaults so dotted overrides find their parents
        let mut full = serde_json::to_value(RunConfig::default())?;
        merge(&mut full, std::mem::take(&mut value));
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .with_context(|| format!("override `{o}` is not key=value"))?;
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut full, key, parsed)?;
        }
        let cfg: RunConfig = serde_json::from_value(full).context("invalid config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            bail!("n must list at least one resolution");
        }
        if self.n.windows(2).any(|w| w[1] <= w[0]) {
            bail!("n must be strictly ascending");
        }
        for &n in &self.n {
            let grid = Grid::new(n, self.side, self.center).with_context(|| format!("grid with n = {n}"))?;
            BallSpec::new(self.radius)
                .validate(&grid)
                .with_context(|| format!("ball R = {} needs R + 2h < side/2 at n = {n}", self.radius))?;
        }
        if !(self.eps0 > 0.0) {
            bail!("eps0 must be positive");
        }
        if self.levels < 2 {
            bail!("levels must be at least 2");
        }
        if self.radii_count < 2 {
            bail!("radii_count must be at least 2");
        }
        let r_min = self.min_radius()?;
        let h = self.coarse_grid()?.h();
        if r_min < 4.0 * h * (1.0 - 1e-12) || r_min >= 0.5 * self.radius {
            bail!("smallest radius {r_min} must satisfy 4h <= r < R/2 (h = {h}, R = {})", self.radius);
        }
        self.solver.validate()?;
        self.scenarios()?;
        if let Some(eps) = &self.sweep_eps {
            if eps.iter().any(|e| !(*e > 0.0 && *e <= self.eps0)) {
                bail!("sweep_eps values must lie in (0, eps0]");
            }
        }
        Ok(())
    }

    pub fn coarse_grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.n[0], self.side, self.center)?)
    }

    pub fn grid(&self, n: usize) -> Result<Grid> {
        Ok(Grid::new(n, self.side, self.center)?)
    }

    pub fn min_radius(&self) -> Result<f64> {
        let h = self.coarse_grid()?.h();
        Ok(match self.radii_min_h {
            Some(k) => k * h,
            None => (4.0 * h).max(self.radius / 32.0),
        })
    }

    pub fn eps_levels(&self) -> Vec<f64> {
        ladder_eps(self.eps0, self.levels)
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        let mut list = match (self.scenario.as_str(), &self.boundary) {
            ("standard", None) => standard_suite(),
            (name, Some(data)) => vec![Scenario::new(name, self.p.unwrap_or(1.5), data.clone())],
            (name, None) => vec![find_standard(name).with_context(|| {
                let names: Vec<String> = standard_suite().into_iter().map(|s| s.name).collect();
                format!("unknown scenario `{name}` (known: standard, {})", names.join(", "))
            })?],
        };
        if let Some(p) = self.p {
            if !(p > 1.0 && p < 2.0) {
                bail!("p = {p} must lie in (1, 2)");
            }
            for s in &mut list {
                s.p = p;
            }
        }
        Ok(list)
    }

    pub fn sweep_targets(&self) -> Vec<f64> {
        self.sweep_eps
            .clone()
            .unwrap_or_else(|| vec![*self.eps_levels().last().unwrap()])
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut slot = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = slot
            .as_object_mut()
            .with_context(|| format!("`{key}`: `{part}` is not inside an object"))?;
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        slot = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::default().scenarios().unwrap().len(), 5);
    }

    #[test]
    fn overrides_apply() {
        let cfg = RunConfig::load(
            None,
            &[
                "n=[33,65]".into(),
                "scenario=affine".into(),
                "solver.max_newton=7".into(),
                "tolerances.stability=0.3".into(),
                "R=0.7".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.n, vec![33, 65]);
        assert_eq!(cfg.scenario, "affine");
        assert_eq!(cfg.solver.max_newton, 7);
        assert_eq!(cfg.solver.max_cg, SolveConfig::default().max_cg);
        assert_eq!(cfg.tolerances.stability, 0.3);
        assert_eq!(cfg.radius, 0.7);
    }

    #[test]
    fn rejects_bad_configs() {
        let err = |o: &[&str]| {
            let o: Vec<String> = o.iter().map(|s| s.to_string()).collect();
            format!("{:#}", RunConfig::load(None, &o).unwrap_err())
        };
        assert!(err(&["n=[64]"]).contains("odd"));
        assert!(err(&["n=[]"]).contains("at least one"));
        assert!(err(&["scenario=nope"]).contains("unknown scenario"));
        assert!(err(&["bogus=1"]).contains("unknown field"));
        assert!(err(&["R=0.99"]).contains("R + 2h"));
        assert!(err(&["p=2.5"]).contains("(1, 2)"));
    }

    #[test]
    fn custom_boundary() {
        let cfg = RunConfig::load(
            None,
            &[
                "scenario=tilted".into(),
                r#"boundary={"kind":"affine","coeffs":[1,1,0]}"#.into(),
                "p=1.3".into(),
            ],
        )
        .unwrap();
        let s = cfg.scenarios().unwrap();
        assert_eq!(s[0].name, "tilted");
        assert_eq!(s[0].p, 1.3);
    }
}
