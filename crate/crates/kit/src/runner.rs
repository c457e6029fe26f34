// SPDX-License-Identifier: Apache-2.0

//! Builds the configured scenario and runs the selected suites.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use chernoff_core::chernoff::{
    chernoff_converge, effective_derivative_probe, small_step_consistency, stability_estimate,
    step_difference_consistency, uniqueness_cross_check, ApproximatingFamily,
};
use chernoff_core::rate::{fit_rate, tail_decreasing, RATE_WINDOW};
use chernoff_core::scenarios::{self, Scenario};
use chernoff_core::trotter_kato::{
    core_condition_check, core_elements_from_integrals, default_s_grid, family_equicontinuity,
    integral_witnesses, semigroup_convergence_sweep, GeneratorFamily,
};
use chernoff_core::{DenseMatrix, LatticeSpec, LinOp, SeminormFamily, StateVector, C64};
use serde_json::json;

use crate::config::{
    ExperimentConfig, MatrixSource, PotentialConfig, ScenarioName, SuiteName, DEFAULT_ANGLES, DEFAULT_DIM,
    DEFAULT_RINGS,
};
use crate::error::{KitError, KitResult};
use crate::matrix_file::read_matrix_file;
use crate::report::{Artifacts, CsvCell, RateRecord, RunSummary, StabilityRecord, SuiteResult, Verdict};

/// Default small-step thresholds.
pub const DEFAULT_EPS_GRID: [f64; 4] = [0.1, 0.05, 0.02, 0.01];

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Upper bound on concurrently running suites.
    pub jobs: usize,
    /// Directory the output paths are resolved against.
    pub out_dir: PathBuf,
    /// Directory matrix files are resolved against.
    pub base_dir: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { jobs: 1, out_dir: PathBuf::from("."), base_dir: PathBuf::from(".") }
    }
}

fn potential_samples(cfg: &ExperimentConfig, n: usize) -> Vec<f64> {
    match (&cfg.scenario.potential, cfg.scenario.name) {
        (Some(PotentialConfig::Zero), _) => vec![0.0; n],
        (Some(PotentialConfig::Constant(c)), _) => vec![*c; n],
        (Some(PotentialConfig::Samples(s)), _) => s.clone(),
        (_, ScenarioName::Schrodinger) => scenarios::default_barrier(n),
        _ => scenarios::default_heat_potential(n),
    }
}

/// Builds the configured scenario with any grid overrides applied.
pub fn build_scenario(cfg: &ExperimentConfig) -> KitResult<Scenario> {
    let sc = &cfg.scenario;
    let mut scn = match sc.name {
        ScenarioName::Heat => {
            let n = cfg.grid_size();
            scenarios::build_heat_potential(n, &potential_samples(cfg, n))?
        }
        ScenarioName::Schrodinger => {
            let n = cfg.grid_size();
            scenarios::build_schrodinger(n, &potential_samples(cfg, n))?
        }
        ScenarioName::Dissipative => {
            scenarios::build_dissipative_random(sc.dim.unwrap_or(DEFAULT_DIM), sc.seed.unwrap_or(cfg.seed))?
        }
        ScenarioName::MultExample => scenarios::build_multiplication_example(
            &cfg.radii(),
            sc.rings.unwrap_or(DEFAULT_RINGS),
            sc.angles.unwrap_or(DEFAULT_ANGLES),
        )?,
    };
    scn.t0 = cfg.t0();
    if let Some(ns) = &cfg.n_grid {
        scn.n_grid = ns.clone();
    }
    scn.t_grid = match &cfg.t_grid {
        Some(ts) => ts.clone(),
        None => (1..=4).map(|k| scn.t0 * k as f64 / 4.0).collect(),
    };
    Ok(scn)
}

/// Largest dimension for which `tk.z0 = "scenario"` is materialized.
pub const MAX_DENSE_TK_DIM: usize = 256;

fn matrix_from(key: &str, src: &MatrixSource, scn: &Scenario, base: &Path) -> KitResult<DenseMatrix> {
    match src {
        MatrixSource::Diag(d) => Ok(DenseMatrix::from_diag(&d.iter().map(|&v| C64::new(v, 0.0)).collect::<Vec<_>>())),
        MatrixSource::Rows(rows) => {
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            DenseMatrix::from_real_rows(&refs).map_err(|e| KitError::config(key, e.to_string()))
        }
        MatrixSource::File(p) => {
            let m = read_matrix_file(&base.join(p))?;
            if !m.is_square() {
                return Err(KitError::config(key, "matrix file must hold a square matrix"));
            }
            Ok(m)
        }
        MatrixSource::Scenario => {
            if scn.dim > MAX_DENSE_TK_DIM {
                return Err(KitError::config(
                    key,
                    format!("scenario dimension {} exceeds {MAX_DENSE_TK_DIM}", scn.dim),
                ));
            }
            Ok(scn.generator().to_dense()?)
        }
    }
}

/// The Trotter-Kato family `Z_s = Z_0 + s W` from the config.
pub fn build_tk_family(cfg: &ExperimentConfig, scn: &Scenario, base: &Path) -> KitResult<GeneratorFamily> {
    let z0 = matrix_from("tk.z0", &cfg.tk.z0, scn, base)?;
    let w = matrix_from("tk.w", &cfg.tk.w, scn, base)?;
    if z0.rows() != w.rows() {
        return Err(KitError::config("tk.w", format!("dimension {} does not match tk.z0 ({})", w.rows(), z0.rows())));
    }
    let grid = cfg.s_grid.clone().unwrap_or_else(default_s_grid);
    Ok(GeneratorFamily::linear(LinOp::dense(z0)?, LinOp::dense(w)?, &grid)?)
}

/// Per-suite seed: the global seed mixed with the suite name, so toggling
/// one suite never shifts another's draws.
pub fn suite_seed(seed: u64, suite: SuiteName) -> u64 {
    use rand_free_hash::fnv1a;
    seed ^ fnv1a(suite.as_str().as_bytes())
}

mod rand_free_hash {
    pub fn fnv1a(bytes: &[u8]) -> u64 {
        bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3))
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    scn: &'a Scenario,
    tk: Option<&'a GeneratorFamily>,
}

type SuiteOutcome = chernoff_core::Result<SuiteResult>;

fn run_converge(ctx: &Context<'_>) -> SuiteOutcome {
    let (cfg, scn) = (ctx.cfg, ctx.scn);
    let tol = &cfg.tolerances;
    let f = scn.primary();
    let rep = chernoff_converge(f, scn.reference(), &scn.initial, scn.t0, &scn.n_grid, &scn.t_grid, &scn.family)?;
    let lattice = LatticeSpec::geometric(scn.t0, 64, 4)?;
    let st = stability_estimate(f, &lattice, 20, suite_seed(cfg.seed, SuiteName::Converge))?.stability;
    let exact = rep.max_error() <= tol.exact;
    let mut verdict = Verdict::Pass;
    if !exact {
        for (alpha, fit) in rep.fitted_rates.iter().enumerate() {
            let v = match fit {
                Ok(fit) if fit.flagged => Verdict::Flagged,
                Ok(fit) => Verdict::from_bool(
                    (tol.rate_low..=tol.rate_high).contains(&fit.slope)
                        && tail_decreasing(rep.uniform(alpha), RATE_WINDOW.min(rep.n_grid.len())),
                ),
                Err(_) => Verdict::Flagged,
            };
            verdict = verdict.and(v);
        }
    }
    let mut out = SuiteResult::new(
        SuiteName::Converge,
        verdict,
        json!({
            "chernoff": f.label(),
            "n_grid": rep.n_grid,
            "t_grid": rep.t_grid,
            "max_error": rep.max_error(),
            "exact": exact,
            "uniform_errors": rep.labels.iter().zip(&rep.uniform_errors)
                .map(|(l, e)| json!({"seminorm": l, "errors": e})).collect::<Vec<_>>(),
        }),
    );
    out.rates = rep.labels.iter().zip(&rep.fitted_rates).map(|(l, f)| RateRecord::new(l, *f)).collect();
    out.stability = Some(StabilityRecord { m: st.m, a: st.a });
    out.cells = rep
        .errors
        .iter()
        .map(|c| CsvCell { seminorm: rep.labels[c.seminorm].clone(), t: c.t, n: c.n, error: c.error })
        .collect();
    Ok(out)
}

fn run_unique(ctx: &Context<'_>) -> SuiteOutcome {
    let (cfg, scn) = (ctx.cfg, ctx.scn);
    let fs: Vec<_> = scn.chernoff.iter().collect();
    let mut s_grid = vec![0.0];
    s_grid.extend(scn.t_grid.iter().copied().filter(|&t| t > 0.0));
    let n = cfg.unique_n;
    let coarse = uniqueness_cross_check(&fs, &scn.initial, scn.t0, n, &s_grid, &scn.family)?;
    let fine = uniqueness_cross_check(&fs, &scn.initial, scn.t0, 4 * n, &s_grid, &scn.family)?;
    let shrinks = fine.max_deviation <= 0.5 * coarse.max_deviation || fine.max_deviation <= cfg.tolerances.exact;
    let verdict = Verdict::from_bool(coarse.max_deviation <= cfg.tolerances.uniqueness && shrinks);
    let labels: Vec<&str> = fs.iter().map(|f| f.label()).collect();
    let pairs = |c: &chernoff_core::chernoff::CrossCheck| {
        c.pairs.iter().map(|&(i, j, d)| json!({"a": labels[i], "b": labels[j], "deviation": d})).collect::<Vec<_>>()
    };
    Ok(SuiteResult::new(
        SuiteName::Unique,
        verdict,
        json!({
            "chernoff": labels,
            "n": n,
            "max_deviation": coarse.max_deviation,
            "pairs": pairs(&coarse),
            "n_refined": 4 * n,
            "max_deviation_refined": fine.max_deviation,
            "pairs_refined": pairs(&fine),
        }),
    ))
}

fn run_tk(ctx: &Context<'_>) -> SuiteOutcome {
    let cfg = ctx.cfg;
    let fam = ctx.tk.expect("family built before suites run");
    let tol = &cfg.tolerances;
    let l0 = cfg.tk.l0;
    let dim = fam.dim();
    let basis: Vec<StateVector> = (0..dim).map(|k| StateVector::basis(dim, k)).collect();
    let sn = SeminormFamily::standard(dim);
    let l_grid: Vec<f64> = (0..=20).map(|i| l0 * i as f64 / 20.0).collect();

    let lattice = LatticeSpec::geometric(l0, 16, 4)?;
    let equi = family_equicontinuity(fam, l0, &lattice, 20, suite_seed(cfg.seed, SuiteName::Tk), tol.equicontinuity_budget)?;

    let mut sweep_pass = true;
    let mut sweep_max = vec![0.0f64; fam.s_grid().len()];
    for b in &basis {
        let rep = semigroup_convergence_sweep(fam, b, l0, &l_grid, &sn)?;
        sweep_pass &= rep.pass;
        for (m, e) in sweep_max.iter_mut().zip(&rep.sup_errors[0]) {
            *m = m.max(*e);
        }
    }

    let witnesses = integral_witnesses(fam, &basis, 0.0, l0, cfg.tk.quadrature_n)?;
    let core = core_condition_check(fam, &witnesses, &basis)?;

    let limit = fam.semigroup(0.0)?;
    let qs: Vec<u64> = vec![8, 16, 32, 64, 128];
    let mut orders = Vec::new();
    for b in &basis {
        let defects = qs
            .iter()
            .map(|&q| core_elements_from_integrals(&limit, b, 0.0, l0, q as usize).map(|e| e.defect))
            .collect::<chernoff_core::Result<Vec<f64>>>()?;
        // a zero defect means the quadrature is exact for this vector
        if let Ok(fit) = fit_rate(&defects, &qs) {
            orders.push(fit.slope);
        } else if defects.iter().any(|&d| d > tol.exact) {
            orders.push(f64::NAN);
        }
    }
    let orders_ok = orders.iter().all(|o| (o - 2.0).abs() <= tol.defect_order_slack);
    let verdict = Verdict::from_bool(equi.pass && sweep_pass && core.pass && orders_ok);
    let mut out = SuiteResult::new(
        SuiteName::Tk,
        verdict,
        json!({
            "dim": dim,
            "s_grid": fam.s_grid(),
            "equicontinuity": {"pass": equi.pass, "bound_at_l0": equi.bound_at_l0},
            "sweep": {"pass": sweep_pass, "sup_l2_errors": sweep_max},
            "core": {"pass": core.pass, "witness_rank": core.witness_rank, "combined_rank": core.combined_rank},
            "defect_orders": orders,
        }),
    );
    out.stability = Some(StabilityRecord { m: equi.stability.m, a: equi.stability.a });
    Ok(out)
}

fn run_diagnostics(ctx: &Context<'_>) -> SuiteOutcome {
    let (cfg, scn) = (ctx.cfg, ctx.scn);
    let eps = cfg.eps_grid.clone().unwrap_or_else(|| DEFAULT_EPS_GRID.to_vec());
    // stops near sqrt(machine epsilon), where roundoff in the difference
    // quotient overtakes truncation
    let probe_grid = cfg.probe_s_grid.clone().unwrap_or_else(|| (2..=8).map(|k| 10f64.powi(-k)).collect());
    let mut verdict = Verdict::Pass;
    let mut rows = Vec::new();
    for f in &scn.chernoff {
        let small = small_step_consistency(f, &scn.initial, &eps, &scn.family)?;
        let diff = step_difference_consistency(f, &scn.initial, scn.t0, &eps, &scn.family)?;
        let probe = match f.claimed_derivative() {
            Some(z) => {
                let g = z.apply(&scn.initial)?;
                let fam = ApproximatingFamily::constant(scn.initial.clone(), g)?;
                Some(effective_derivative_probe(f, &fam, &probe_grid, &scn.family)?)
            }
            None => None,
        };
        let probe_pass = probe.as_ref().is_none_or(|p| p.pass);
        verdict = verdict.and(Verdict::from_bool(small.pass && diff.pass && probe_pass));
        rows.push(json!({
            "chernoff": f.label(),
            "eps": small.eps,
            "small_step": {"pass": small.pass, "max_deviation": small.max_deviation},
            "step_difference": {"pass": diff.pass, "max_deviation": diff.max_deviation},
            "derivative_probe": probe.map(|p| json!({
                "pass": p.pass,
                "quotient_errors": p.quotient_errors,
                "tolerances": p.tolerances,
            })),
        }));
    }
    Ok(SuiteResult::new(SuiteName::Diagnostics, verdict, json!({ "chernoff": rows })))
}

fn run_exa_gap(ctx: &Context<'_>) -> SuiteOutcome {
    let (cfg, scn) = (ctx.cfg, ctx.scn);
    let disc = scn.disc.as_ref().expect("exa-gap only runs on the multiplication example");
    let lambda = C64::new(cfg.exa.lambda[0], cfg.exa.lambda[1]);
    let r = cfg.exa.radius.unwrap_or(disc.radius);
    if lambda.norm() > r {
        return Err(chernoff_core::Error::InvalidArgument("|lambda| exceeds the range-gap radius"));
    }
    let cands = scenarios::random_polynomial_candidates(
        disc,
        cfg.exa.candidates,
        cfg.exa.degree,
        suite_seed(cfg.seed, SuiteName::ExaGap),
    )?;
    let f = &scn.initial;
    let gap = scenarios::resolvent_range_gap(disc, lambda, f, Some(C64::new(1.0, 0.0)), &cands, r)?;
    let gap_ok = gap.min_defect >= gap.lower_bound && gap.eps_grid < cfg.tolerances.gap_eps;

    let radii = cfg.radii();
    let mut bound_ok = true;
    let mut worst_ratio = 0.0f64;
    for &s in &scn.t_grid {
        let ts = scn.semigroup.expm_reference(s, f)?;
        for (alpha, &radius) in radii.iter().enumerate() {
            let lhs = scn.family.eval(alpha, &ts)?;
            let rhs = (s * radius).exp() * scn.family.eval(alpha, f)?;
            bound_ok &= lhs <= rhs * (1.0 + 1e-12);
            worst_ratio = worst_ratio.max(lhs / rhs);
        }
    }
    Ok(SuiteResult::new(
        SuiteName::ExaGap,
        Verdict::from_bool(gap_ok && bound_ok),
        json!({
            "lambda": [lambda.re, lambda.im],
            "radius": r,
            "candidates": cands.len(),
            "min_defect": gap.min_defect,
            "eps_grid": gap.eps_grid,
            "lower_bound": gap.lower_bound,
            "semigroup_bound_holds": bound_ok,
            "max_norm_ratio": worst_ratio,
        }),
    ))
}

fn run_suite(ctx: &Context<'_>, suite: SuiteName) -> SuiteResult {
    let start = Instant::now();
    let outcome = match suite {
        SuiteName::Converge => run_converge(ctx),
        SuiteName::Unique => run_unique(ctx),
        SuiteName::Tk => run_tk(ctx),
        SuiteName::Diagnostics => run_diagnostics(ctx),
        SuiteName::ExaGap => run_exa_gap(ctx),
        SuiteName::All => unreachable!("expanded before running"),
    };
    let mut result = outcome.unwrap_or_else(|e| SuiteResult::failed(suite, e));
    result.elapsed = start.elapsed();
    result
}

/// Runs every resolved suite and assembles the summary. Suites run on up
/// to `opts.jobs` threads; results keep the canonical suite order.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> KitResult<RunSummary> {
    let suites = cfg.resolved_suites();
    let scn = build_scenario(cfg)?;
    let tk = if suites.contains(&SuiteName::Tk) { Some(build_tk_family(cfg, &scn, &opts.base_dir)?) } else { None };
    let ctx = Context { cfg, scn: &scn, tk: tk.as_ref() };

    let slots: Mutex<Vec<Option<SuiteResult>>> = Mutex::new(vec![None; suites.len()]);
    let next = AtomicUsize::new(0);
    let workers = opts.jobs.clamp(1, suites.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&suite) = suites.get(i) else { break };
                let result = run_suite(&ctx, suite);
                slots.lock().expect("no worker panicked holding the lock")[i] = Some(result);
            });
        }
    });
    let results = slots.into_inner().expect("workers finished").into_iter().map(|r| r.expect("every suite ran")).collect();

    Ok(RunSummary {
        schema_version: crate::report::SCHEMA_VERSION,
        scenario: cfg.scenario.name.as_str().to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        suites: results,
        artifacts: Artifacts {
            csv: opts.out_dir.join(&cfg.output.csv).display().to_string(),
            json: opts.out_dir.join(&cfg.output.json).display().to_string(),
        },
    })
}

/// Writes the CSV and JSON reports named in the summary.
pub fn emit_reports(summary: &RunSummary) -> KitResult<()> {
    crate::report::write_atomic(Path::new(&summary.artifacts.csv), &summary.to_csv())?;
    crate::report::write_atomic(Path::new(&summary.artifacts.json), &summary.to_json())
}
