// SPDX-License-Identifier: Apache-2.0

//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use chernoff_core::chernoff::{
    self, chernoff_converge, implicit_euler, lie_trotter, product_apply, small_step_consistency,
    stability_estimate, step_difference_consistency, uniqueness_cross_check, Reference,
};
use chernoff_core::operators::is_dissipative;
use chernoff_core::rate::{fit_rate, fit_rate_window, tail_decreasing, RATE_WINDOW};
use chernoff_core::scenarios::{self, Scenario};
use chernoff_core::trotter_kato::{
    core_condition_check, core_elements_from_integrals, default_s_grid, integral_witnesses,
    semigroup_convergence_sweep, GeneratorFamily,
};
use chernoff_kit::{emit_reports, run, ExperimentConfig, RunOptions};
use chernoff_core::{LatticeSpec, LinOp, SemigroupEvaluator, SeminormFamily, StateVector, C64};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn within(elapsed: Duration, limit: f64) -> bool {
    elapsed.as_secs_f64() < limit
}

fn scalar_oracle() -> Outcome {
    let start = Instant::now();
    let z = LinOp::real_diagonal(&[-1.0]);
    let f = implicit_euler(z.clone()).map_err(err)?;
    let sg = SemigroupEvaluator::new(z).map_err(err)?;
    let h = StateVector::real(&[1.0]).map_err(err)?;
    let exact = sg.expm_reference(1.0, &h).map_err(err)?;
    let mut worst = 0.0f64;
    for n in [10u64, 100, 1000] {
        let y = product_apply(&f, 1.0, n, &h).map_err(err)?.state;
        let error = y.sub(&exact).norm_l2();
        let oracle = ((1.0 + 1.0 / n as f64).powf(-(n as f64)) - (-1.0f64).exp()).abs();
        worst = worst.max((error - oracle).abs());
    }
    let elapsed = start.elapsed();
    check(worst <= 1e-14 && within(elapsed, 0.1), format!("max |error - closed form| = {worst:.2e}, {elapsed:.2?}"))
}

fn lie_nilpotent() -> Outcome {
    let start = Instant::now();
    let a = LinOp::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]).map_err(err)?;
    let b = LinOp::from_real_rows(&[&[0.0, 0.0], &[1.0, 0.0]]).map_err(err)?;
    let sum = LinOp::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).map_err(err)?;
    let f = lie_trotter(SemigroupEvaluator::new(a).map_err(err)?, SemigroupEvaluator::new(b).map_err(err)?)
        .map_err(err)?;
    let sg = SemigroupEvaluator::new(sum).map_err(err)?;
    let ns: Vec<u64> = (4..=10).map(|k| 1u64 << k).collect();
    let h = StateVector::real(&[1.0, 0.0]).map_err(err)?;
    let rep = chernoff_converge(&f, Reference::Semigroup(&sg), &h, 1.0, &ns, &[1.0], &SeminormFamily::l2_only(2))
        .map_err(err)?;
    let e = rep.uniform(0);
    let fit = fit_rate_window(e, &ns, ns.len()).map_err(err)?;
    let ratio = e[3] / e[4];
    let elapsed = start.elapsed();
    check(
        (0.8..=1.2).contains(&fit.slope) && (1.8..=2.2).contains(&ratio) && within(elapsed, 1.0),
        format!("rate {:.3}, error(128)/error(256) = {ratio:.3}, {elapsed:.2?}", fit.slope),
    )
}

fn heat_uniform() -> Outcome {
    let start = Instant::now();
    let scn = scenarios::build_heat_potential(128, &scenarios::default_heat_potential(128)).map_err(err)?;
    let rep = chernoff_converge(scn.primary(), scn.reference(), &scn.initial, scn.t0, &scn.n_grid, &scn.t_grid, &scn.family)
        .map_err(err)?;
    let ok = (0..scn.family.len()).all(|a| tail_decreasing(rep.uniform(a), RATE_WINDOW));
    let elapsed = start.elapsed();
    let rates: Vec<String> = rep
        .fitted_rates
        .iter()
        .map(|r| r.map_or_else(|f| f.to_string(), |fit| format!("{:.3}", fit.slope)))
        .collect();
    check(
        ok && within(elapsed, 30.0),
        format!("uniform errors l2 {:?}, sup {:?}; rates {rates:?}; {elapsed:.2?}", short(rep.uniform(0)), short(rep.uniform(1))),
    )
}

fn short(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| format!("{x:.2e}")).collect()
}

fn uniqueness() -> Outcome {
    let start = Instant::now();
    let scn = scenarios::build_dissipative_random(10, 7).map_err(err)?;
    let fs: Vec<&chernoff::ChernoffFn> = scn.chernoff.iter().collect();
    let s_grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let d1 = uniqueness_cross_check(&fs, &scn.initial, 1.0, 10_000, &s_grid, &scn.family).map_err(err)?.max_deviation;
    let d4 = uniqueness_cross_check(&fs, &scn.initial, 1.0, 40_000, &s_grid, &scn.family).map_err(err)?.max_deviation;
    let elapsed = start.elapsed();
    check(
        d1 < 1e-2 && d4 < 2.5e-3 && within(elapsed, 60.0),
        format!("max deviation {d1:.2e} at n=1e4, {d4:.2e} at n=4e4, ratio {:.2}; {elapsed:.2?}", d1 / d4),
    )
}

fn dissipative() -> Outcome {
    let scn = scenarios::build_dissipative_random(50, 7).map_err(err)?;
    let d = is_dissipative(scn.generator(), &scn.family, 200, 1e-12, 7).map_err(err)?;
    let lattice = LatticeSpec::geometric(1.0, 64, 4).map_err(err)?;
    let st = stability_estimate(scn.primary(), &lattice, 20, 7).map_err(err)?.stability;
    let rep = chernoff_converge(scn.primary(), scn.reference(), &scn.initial, scn.t0, &scn.n_grid, &scn.t_grid, &scn.family)
        .map_err(err)?;
    let fit = rep.fitted_rates[0].map_err(err)?;
    check(
        d.dissipative && d.max_symmetric_eigenvalue <= 1e-12 && st.m <= 1.0 + 1e-8 && (0.8..=1.2).contains(&fit.slope),
        format!(
            "max symmetric eigenvalue {:.2e}, M = {:.10}, a = {:.2e}, rate {:.3}",
            d.max_symmetric_eigenvalue, st.m, st.a, fit.slope
        ),
    )
}

fn trotter_kato() -> Outcome {
    let z0 = LinOp::real_diagonal(&[-1.0, -2.0]);
    let w = LinOp::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).map_err(err)?;
    let fam = GeneratorFamily::linear(z0, w, &default_s_grid()).map_err(err)?;
    let l_grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let f = StateVector::real(&[1.0, 1.0]).map_err(err)?;
    let sweep = semigroup_convergence_sweep(&fam, &f, 1.0, &l_grid, &SeminormFamily::standard(2)).map_err(err)?;
    let l2 = &sweep.sup_errors[0];
    let ratios: Vec<f64> = l2.windows(2).map(|w| w[0] / w[1]).collect();
    let ratios_ok = ratios.iter().all(|r| (1.6..=2.4).contains(r));

    let basis = [StateVector::basis(2, 0), StateVector::basis(2, 1)];
    let witnesses = integral_witnesses(&fam, &basis, 0.0, 1.0, 64).map_err(err)?;
    let core = core_condition_check(&fam, &witnesses, &basis).map_err(err)?;

    let limit = fam.semigroup(0.0).map_err(err)?;
    let qs: Vec<u64> = vec![8, 16, 32, 64, 128];
    let defects = qs
        .iter()
        .map(|&q| core_elements_from_integrals(&limit, &f, 0.0, 1.0, q as usize).map(|e| e.defect))
        .collect::<chernoff_core::Result<Vec<f64>>>()
        .map_err(err)?;
    let order = fit_rate(&defects, &qs).map_err(err)?.slope;
    check(
        sweep.pass && ratios_ok && core.pass && (order - 2.0).abs() <= 0.3,
        format!(
            "halving ratios in [{:.3}, {:.3}], core check {}, defect order {order:.3}",
            ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios.iter().copied().fold(0.0, f64::max),
            if core.pass { "pass" } else { "fail" }
        ),
    )
}

fn range_gap() -> Outcome {
    let scn = scenarios::build_multiplication_example(&[1.0], 64, 128).map_err(err)?;
    let disc = scn.disc.as_ref().ok_or("missing disc grid")?;
    let cands = scenarios::random_polynomial_candidates(disc, 100, 8, 7).map_err(err)?;
    let f = &scn.initial;
    let gap = scenarios::resolvent_range_gap(disc, C64::new(0.0, 0.0), f, Some(C64::new(1.0, 0.0)), &cands, 1.0)
        .map_err(err)?;
    let mut bound_ok = true;
    let mut worst_equality = 0.0f64;
    for s in [0.1, 0.5, 1.0, 2.0] {
        let ts = scn.semigroup.expm_reference(s, f).map_err(err)?;
        for (alpha, r) in [1.0f64].iter().enumerate() {
            let lhs = scn.family.eval(alpha, &ts).map_err(err)?;
            let rhs = (s * r).exp() * scn.family.eval(alpha, f).map_err(err)?;
            bound_ok &= lhs <= rhs * (1.0 + 1e-12);
            worst_equality = worst_equality.max((lhs - rhs).abs() / rhs);
        }
    }
    check(
        gap.min_defect >= 1.0 - gap.eps_grid && gap.eps_grid < 0.02 && bound_ok && worst_equality <= 1e-10,
        format!(
            "min defect {:.6}, eps_grid {:.2e}, semigroup bound equality gap {worst_equality:.2e}",
            gap.min_defect, gap.eps_grid
        ),
    )
}

fn schrodinger_norm() -> Outcome {
    let scn = scenarios::build_schrodinger(64, &scenarios::default_barrier(64)).map_err(err)?;
    let op = scn.primary().step(scn.t0 / 10_000.0).map_err(err)?;
    let h0 = scn.initial.norm_l2();
    let mut y = scn.initial.clone();
    let mut per_step = 0.0f64;
    for _ in 0..10_000 {
        let next = op.apply(&y).map_err(err)?;
        per_step = per_step.max((next.norm_l2() - y.norm_l2()).abs());
        y = next;
    }
    let total = (y.norm_l2() - h0).abs();
    check(per_step <= 1e-12 && total <= 1e-9, format!("max drift per step {per_step:.2e}, total {total:.2e}"))
}

fn diagnostics_for(scn: &Scenario) -> Result<Vec<String>, String> {
    let eps = [0.1, 0.05, 0.02, 0.01];
    let mut failures = Vec::new();
    for f in &scn.chernoff {
        let small = small_step_consistency(f, &scn.initial, &eps, &scn.family).map_err(err)?;
        let diff = step_difference_consistency(f, &scn.initial, scn.t0, &eps, &scn.family).map_err(err)?;
        if !small.pass || !diff.pass {
            failures.push(format!("{}/{}", scn.name, f.label()));
        }
    }
    Ok(failures)
}

fn diagnostics() -> Outcome {
    let built = [
        scenarios::build_heat_potential(128, &scenarios::default_heat_potential(128)),
        scenarios::build_schrodinger(64, &scenarios::default_barrier(64)),
        scenarios::build_dissipative_random(50, 7),
        scenarios::build_multiplication_example(&[0.5, 1.0], 64, 128),
    ];
    let mut failures = Vec::new();
    let mut count = 0;
    for scn in built {
        let scn = scn.map_err(err)?;
        count += scn.chernoff.len();
        failures.extend(diagnostics_for(&scn)?);
    }
    check(failures.is_empty(), format!("{count} Chernoff functions checked; failing: {failures:?}"))
}

fn run_twice(config: &str, dir: &std::path::Path) -> Result<bool, String> {
    let cfg = ExperimentConfig::from_json(config).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for jobs in [1, 4] {
        let opts = RunOptions { jobs, out_dir: dir.to_path_buf(), ..RunOptions::default() };
        let summary = run(&cfg, &opts).map_err(|e| e.to_string())?;
        emit_reports(&summary).map_err(|e| e.to_string())?;
        let csv = std::fs::read(dir.join(&cfg.output.csv)).map_err(|e| e.to_string())?;
        let json = std::fs::read(dir.join(&cfg.output.json)).map_err(|e| e.to_string())?;
        outputs.push((csv, json));
    }
    Ok(outputs[0] == outputs[1])
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs = [
        r#"{"scenario": {"name": "dissipative", "dim": 10}, "suites": ["all"], "seed": 11}"#,
        r#"{"scenario": {"name": "mult-example", "rings": 16, "angles": 32}, "suites": ["all"], "seed": 11}"#,
    ];
    for config in configs {
        if !run_twice(config, dir.path())? {
            return Err(format!("outputs differ for {config}"));
        }
    }
    Ok("dissipative and mult-example full runs byte-identical across reruns (jobs 1 vs 4)".to_string())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("scalar implicit-Euler oracle", scalar_oracle),
        ("Lie-Trotter nilpotent pair", lie_nilpotent),
        ("uniform-in-t convergence, heat", heat_uniform),
        ("uniqueness across Chernoff functions", uniqueness),
        ("dissipative random generator", dissipative),
        ("Trotter-Kato family", trotter_kato),
        ("multiplication semigroup range gap", range_gap),
        ("Schrodinger norm conservation", schrodinger_norm),
        ("small-step diagnostics", diagnostics),
        ("deterministic reports", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
