// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration: one strict JSON document.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{KitError, KitResult};

/// Environment variable overriding the configured seed.
pub const SEED_ENV: &str = "CHERNOFF_KIT_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Converge,
    Unique,
    Tk,
    Diagnostics,
    ExaGap,
    All,
}

impl SuiteName {
    pub const CONCRETE: [SuiteName; 5] =
        [SuiteName::Converge, SuiteName::Unique, SuiteName::Tk, SuiteName::Diagnostics, SuiteName::ExaGap];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Converge => "converge",
            SuiteName::Unique => "unique",
            SuiteName::Tk => "tk",
            SuiteName::Diagnostics => "diagnostics",
            SuiteName::ExaGap => "exa-gap",
            SuiteName::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    Heat,
    Schrodinger,
    Dissipative,
    MultExample,
}

impl ScenarioName {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Heat => "heat",
            ScenarioName::Schrodinger => "schrodinger",
            ScenarioName::Dissipative => "dissipative",
            ScenarioName::MultExample => "mult-example",
        }
    }

    pub fn default_t0(self) -> f64 {
        match self {
            ScenarioName::Schrodinger => 0.5,
            _ => 1.0,
        }
    }

    /// Suites that make sense for this scenario; `all` expands to these.
    pub fn applicable(self) -> &'static [SuiteName] {
        match self {
            ScenarioName::MultExample => {
                &[SuiteName::Converge, SuiteName::Tk, SuiteName::Diagnostics, SuiteName::ExaGap]
            }
            _ => &[SuiteName::Converge, SuiteName::Unique, SuiteName::Tk, SuiteName::Diagnostics],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialConfig {
    /// `1 + cos x` for heat, the height-5 barrier for Schrödinger.
    Default,
    Zero,
    Constant(f64),
    Samples(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: ScenarioName,
    /// Grid size (heat, schrodinger).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<PotentialConfig>,
    /// Matrix dimension (dissipative).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Matrix seed (dissipative); defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Seminorm radii (mult-example).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rings: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angles: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Errors at or below this count as exact.
    pub exact: f64,
    pub rate_low: f64,
    pub rate_high: f64,
    /// Largest allowed pairwise deviation in the uniqueness suite.
    pub uniqueness: f64,
    /// Largest allowed grid error in the range-gap suite.
    pub gap_eps: f64,
    /// Bound on `M exp(a l0)` in the equicontinuity check.
    pub equicontinuity_budget: f64,
    /// Allowed distance of the quadrature defect order from 2.
    pub defect_order_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            exact: 1e-10,
            rate_low: 0.8,
            rate_high: 1.2,
            uniqueness: 1e-2,
            gap_eps: 0.02,
            equicontinuity_budget: 1e6,
            defect_order_slack: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixSource {
    Diag(Vec<f64>),
    Rows(Vec<Vec<f64>>),
    /// Text file, relative to the config file's directory.
    File(PathBuf),
    /// The scenario's own generator.
    Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TkConfig {
    pub z0: MatrixSource,
    pub w: MatrixSource,
    pub l0: f64,
    pub quadrature_n: usize,
}

impl Default for TkConfig {
    fn default() -> Self {
        TkConfig {
            z0: MatrixSource::Diag(vec![-1.0, -2.0]),
            w: MatrixSource::Rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]),
            l0: 1.0,
            quadrature_n: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExaConfig {
    /// `[re, im]`.
    pub lambda: [f64; 2],
    /// Defaults to the largest scenario radius.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    pub candidates: usize,
    pub degree: usize,
}

impl Default for ExaConfig {
    fn default() -> Self {
        ExaConfig { lambda: [0.0, 0.0], radius: None, candidates: 100, degree: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub csv: PathBuf,
    pub json: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { csv: PathBuf::from("results.csv"), json: PathBuf::from("summary.json") }
    }
}

fn default_suites() -> Vec<SuiteName> {
    vec![SuiteName::All]
}

fn default_unique_n() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    #[serde(default = "default_suites")]
    pub suites: Vec<SuiteName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    /// Trotter-Kato perturbation parameters, strictly decreasing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_grid: Option<Vec<f64>>,
    /// Small-step consistency thresholds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_grid: Option<Vec<f64>>,
    /// Step sizes of the effective-derivative probe, strictly decreasing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_s_grid: Option<Vec<f64>>,
    #[serde(default = "default_unique_n")]
    pub unique_n: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub tk: TkConfig,
    #[serde(default)]
    pub exa: ExaConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

fn bad(key: impl Into<String>, message: impl Into<String>) -> KitError {
    KitError::config(key, message)
}

fn positive(key: &str, v: f64) -> KitResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive and finite, got {v}")))
    }
}

fn strictly_decreasing_positive(key: &str, grid: &[f64]) -> KitResult<()> {
    if grid.is_empty() {
        return Err(bad(key, "must not be empty"));
    }
    for (i, &v) in grid.iter().enumerate() {
        positive(&format!("{key}[{i}]"), v)?;
        if i > 0 && v >= grid[i - 1] {
            return Err(bad(format!("{key}[{i}]"), "must be strictly decreasing"));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    /// Parses and validates.
    pub fn from_json(text: &str) -> KitResult<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> KitResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| KitError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Replaces the seed with `CHERNOFF_KIT_SEED` when it is set.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> KitResult<()> {
        if let Some(v) = value {
            self.seed = v.trim().parse().map_err(|_| bad(SEED_ENV, format!("not an unsigned integer: {v:?}")))?;
        }
        Ok(())
    }

    pub fn t0(&self) -> f64 {
        self.t0.unwrap_or_else(|| self.scenario.name.default_t0())
    }

    /// Concrete suites to run, in canonical order, with `all` expanded to the
    /// scenario's applicable suites.
    pub fn resolved_suites(&self) -> Vec<SuiteName> {
        let applicable = self.scenario.name.applicable();
        let mut out: Vec<SuiteName> = if self.suites.contains(&SuiteName::All) {
            applicable.to_vec()
        } else {
            self.suites.clone()
        };
        out.sort();
        out.dedup();
        out
    }

    pub fn validate(&self) -> KitResult<()> {
        self.validate_scenario()?;
        if self.suites.is_empty() {
            return Err(bad("suites", "must not be empty"));
        }
        let applicable = self.scenario.name.applicable();
        for s in &self.suites {
            if *s != SuiteName::All && !applicable.contains(s) {
                return Err(bad(
                    "suites",
                    format!("suite {} does not apply to scenario {}", s.as_str(), self.scenario.name.as_str()),
                ));
            }
        }
        if let Some(t0) = self.t0 {
            positive("t0", t0)?;
        }
        let t0 = self.t0();
        if let Some(ns) = &self.n_grid {
            if ns.is_empty() {
                return Err(bad("n_grid", "must not be empty"));
            }
            for (i, &n) in ns.iter().enumerate() {
                if n == 0 {
                    return Err(bad(format!("n_grid[{i}]"), "must be at least 1"));
                }
                if i > 0 && n <= ns[i - 1] {
                    return Err(bad(format!("n_grid[{i}]"), "must be strictly increasing"));
                }
            }
        }
        if let Some(ts) = &self.t_grid {
            if ts.is_empty() {
                return Err(bad("t_grid", "must not be empty"));
            }
            for (i, &t) in ts.iter().enumerate() {
                if !(0.0..=t0).contains(&t) {
                    return Err(bad(format!("t_grid[{i}]"), format!("{t} lies outside [0, t0 = {t0}]")));
                }
            }
        }
        if let Some(s) = &self.s_grid {
            strictly_decreasing_positive("s_grid", s)?;
        }
        if let Some(s) = &self.probe_s_grid {
            strictly_decreasing_positive("probe_s_grid", s)?;
        }
        if let Some(eps) = &self.eps_grid {
            if eps.is_empty() {
                return Err(bad("eps_grid", "must not be empty"));
            }
            for (i, &e) in eps.iter().enumerate() {
                positive(&format!("eps_grid[{i}]"), e)?;
            }
        }
        if self.unique_n == 0 {
            return Err(bad("unique_n", "must be at least 1"));
        }
        let tol = &self.tolerances;
        for (key, v) in [
            ("tolerances.exact", tol.exact),
            ("tolerances.rate_low", tol.rate_low),
            ("tolerances.rate_high", tol.rate_high),
            ("tolerances.uniqueness", tol.uniqueness),
            ("tolerances.gap_eps", tol.gap_eps),
            ("tolerances.equicontinuity_budget", tol.equicontinuity_budget),
            ("tolerances.defect_order_slack", tol.defect_order_slack),
        ] {
            positive(key, v)?;
        }
        if tol.rate_low >= tol.rate_high {
            return Err(bad("tolerances.rate_low", "must be below tolerances.rate_high"));
        }
        positive("tk.l0", self.tk.l0)?;
        if self.tk.quadrature_n < 2 {
            return Err(bad("tk.quadrature_n", "must be at least 2"));
        }
        self.validate_matrix("tk.z0", &self.tk.z0)?;
        self.validate_matrix("tk.w", &self.tk.w)?;
        if self.exa.lambda.iter().any(|v| !v.is_finite()) {
            return Err(bad("exa.lambda", "must be finite"));
        }
        if let Some(r) = self.exa.radius {
            positive("exa.radius", r)?;
        }
        if self.exa.candidates == 0 {
            return Err(bad("exa.candidates", "must be at least 1"));
        }
        if self.output.csv.as_os_str().is_empty() || self.output.json.as_os_str().is_empty() {
            return Err(bad("output", "paths must not be empty"));
        }
        Ok(())
    }

    fn validate_matrix(&self, key: &str, m: &MatrixSource) -> KitResult<()> {
        match m {
            MatrixSource::Diag(d) if d.is_empty() || d.iter().any(|v| !v.is_finite()) => {
                Err(bad(key, "diagonal must be nonempty and finite"))
            }
            MatrixSource::Rows(rows) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n || r.iter().any(|v| !v.is_finite())) {
                    Err(bad(key, "rows must form a finite square matrix"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    fn validate_scenario(&self) -> KitResult<()> {
        let sc = &self.scenario;
        let name = sc.name.as_str();
        let unused = |key: &str, present: bool| -> KitResult<()> {
            if present {
                Err(bad(format!("scenario.{key}"), format!("not used by scenario {name}")))
            } else {
                Ok(())
            }
        };
        match sc.name {
            ScenarioName::Heat | ScenarioName::Schrodinger => {
                unused("dim", sc.dim.is_some())?;
                unused("seed", sc.seed.is_some())?;
                unused("radii", sc.radii.is_some())?;
                unused("rings", sc.rings.is_some())?;
                unused("angles", sc.angles.is_some())?;
                let n = self.grid_size();
                if n < 2 || !n.is_power_of_two() {
                    return Err(bad("scenario.n", format!("must be a power of two >= 2, got {n}")));
                }
                match &sc.potential {
                    Some(PotentialConfig::Samples(s)) if s.len() != n => {
                        return Err(bad("scenario.potential", format!("expected {n} samples, found {}", s.len())));
                    }
                    Some(PotentialConfig::Samples(s)) if s.iter().any(|v| !v.is_finite()) => {
                        return Err(bad("scenario.potential", "samples must be finite"));
                    }
                    Some(PotentialConfig::Constant(c)) if !c.is_finite() => {
                        return Err(bad("scenario.potential", "constant must be finite"));
                    }
                    _ => {}
                }
            }
            ScenarioName::Dissipative => {
                unused("n", sc.n.is_some())?;
                unused("potential", sc.potential.is_some())?;
                unused("radii", sc.radii.is_some())?;
                unused("rings", sc.rings.is_some())?;
                unused("angles", sc.angles.is_some())?;
                if sc.dim.unwrap_or(DEFAULT_DIM) < 2 {
                    return Err(bad("scenario.dim", "must be at least 2"));
                }
            }
            ScenarioName::MultExample => {
                unused("n", sc.n.is_some())?;
                unused("potential", sc.potential.is_some())?;
                unused("dim", sc.dim.is_some())?;
                unused("seed", sc.seed.is_some())?;
                let radii = self.radii();
                if radii.is_empty() {
                    return Err(bad("scenario.radii", "must not be empty"));
                }
                for (i, &r) in radii.iter().enumerate() {
                    positive(&format!("scenario.radii[{i}]"), r)?;
                    if i > 0 && r <= radii[i - 1] {
                        return Err(bad(format!("scenario.radii[{i}]"), "must be strictly increasing"));
                    }
                }
                if sc.rings == Some(0) {
                    return Err(bad("scenario.rings", "must be at least 1"));
                }
                if sc.angles == Some(0) {
                    return Err(bad("scenario.angles", "must be at least 1"));
                }
                if let Some(r) = self.exa.radius {
                    if r > *radii.last().unwrap() {
                        return Err(bad("exa.radius", "exceeds the largest scenario radius"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        self.scenario.n.unwrap_or(match self.scenario.name {
            ScenarioName::Schrodinger => 64,
            _ => 128,
        })
    }

    pub fn radii(&self) -> Vec<f64> {
        self.scenario.radii.clone().unwrap_or_else(|| vec![0.5, 1.0])
    }
}

/// Default dissipative dimension.
pub const DEFAULT_DIM: usize = 50;
pub const DEFAULT_RINGS: usize = 64;
pub const DEFAULT_ANGLES: usize = 128;
