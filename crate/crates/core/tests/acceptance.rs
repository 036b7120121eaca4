//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::*;
use ringsens_core::dynamics::{build_lti_with_rates, evolve_lti, evolve_projector, fidelity, TransferKernel};
use ringsens_core::ring::{basis_state, spectral_decompose, DegeneracyTol, Hamiltonian, StateVector, C64};
use ringsens_core::sampler::{cp_admissible, generate_pool, DephasingPool, SamplerConfig};
use ringsens_core::sensitivity::{perturbed_error, sensitivity_record, AnalyticSensitivity, PerturbationGrid};
use ringsens_core::stats::{
    classify_orthogonal_pair, classify_states, kendall_tau, kendall_test, pearson_r, pearson_test, Tail,
    DEFAULT_ALPHA, PAIR_TOL,
};
use ringsens_core::synthesis::{
    default_candidates, select_population, steady_overlap, synthesize_population, Bounds, Budget, Controller,
    Objective, ObjectiveSpec, Transfer,
};

const SEED: u64 = 20240601;

// Criterion 1
const PROPAGATOR_TOL: f64 = 1e-9;
const PROPAGATOR_CASES: usize = 200;
const PROPAGATOR_LIMIT: Duration = Duration::from_secs(60);
// Criterion 2
const ORACLE_REL_TOL: f64 = 1e-5;
const ORACLE_CASES: usize = 100;
const ORACLE_STEP: f64 = 1e-5;
const ORACLE_LIMIT: Duration = Duration::from_secs(60);
// Criterion 3
const Z_TAU_GOLDEN: f64 = 14.742;
const Z_TAU_TOL: f64 = 1e-3;
const T_R_GOLDEN: f64 = -41.15;
const T_R_TOL: f64 = 0.05;
// Criteria 4 and 5
const POPULATION: usize = 100;
const POPULATION_RESTARTS: usize = 200;
const POPULATION_ITERATIONS: usize = 300;
const POOL_DRAW: usize = 1000;
const GRID_POINTS: usize = 1001;
const TAU_FLOOR: f64 = 0.9;
// Criterion 6
const PAIR_TOL_6: f64 = 1e-9;
// Criterion 7
const LARGE_POOL: usize = 10_000;
const NORM_TOL: f64 = 1e-12;
const SAMPLER_LIMIT: Duration = Duration::from_secs(300);
// Criterion 8
const PAIR_FLOOR: f64 = 0.9;
const PAIR_POPULATION: usize = 50;
const PAIR_RESTARTS: usize = 256;
// Criterion 9
const PROPERTY_CASES: u32 = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn propagator_equivalence() -> Outcome {
    let start = Instant::now();
    let pools: Vec<DephasingPool> = (3..=6).map(|n| generate_pool(&SamplerConfig::new(n, 50)).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for case in 0..PROPAGATOR_CASES {
        let n = rng.random_range(3..=6);
        let spec = random_spec(&mut rng, n, 100.0, case % 10 == 0);
        let model = model_of(&spec).split();
        let pool = &pools[n - 3];
        let op = &pool.operators[rng.random_range(0..pool.operators.len())];
        let gamma = op.rates().scaled(rng.random_range(0.0..1.0));
        let t = rng.random_range(0.0..100.0);
        let rho0 = basis_state(n, spec.in_node()).unwrap().density();
        let rho_out = basis_state(n, spec.out_node()).unwrap().density();
        let f_projector = fidelity(&evolve_projector(&model, &rho0, &gamma, t).unwrap(), &rho_out).fidelity;
        let sys = build_lti_with_rates(&model, &gamma).unwrap();
        let r = evolve_lti(&sys, &sys.vectorize(&rho0), t).unwrap();
        let f_lti = sys.output_functional(&rho_out).dot(&r);
        worst = worst.max((f_projector - f_lti).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst < PROPAGATOR_TOL && elapsed < PROPAGATOR_LIMIT,
        format!("max |ΔF| = {worst:.2e} (< {PROPAGATOR_TOL:e}) over {PROPAGATOR_CASES} instances"),
    )
}

fn sensitivity_oracle() -> Outcome {
    let start = Instant::now();
    let pools: Vec<DephasingPool> = (3..=6).map(|n| generate_pool(&SamplerConfig::new(n, 50)).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < ORACLE_CASES {
        let n = rng.random_range(3..=6);
        let c = controller(random_spec(&mut rng, n, 70.0, false));
        if c.nominal_error < 1e-6 {
            continue;
        }
        let pool = &pools[n - 3];
        let op = &pool.operators[rng.random_range(0..pool.operators.len())];
        let e = |d: f64| perturbed_error(&c, op, d).unwrap();
        let h = ORACLE_STEP;
        let slope = (-3.0 * e(0.0) + 4.0 * e(h) - e(2.0 * h)) / (2.0 * h);
        let fd = (slope / c.nominal_error).abs();
        let s = AnalyticSensitivity::new(&c).unwrap().per_operator(op).unwrap();
        worst = worst.max((s - fd).abs() / fd.max(1e-300));
        checked += 1;
    }
    let elapsed = start.elapsed();
    outcome(
        worst < ORACLE_REL_TOL && elapsed < ORACLE_LIMIT,
        format!("max relative gap {worst:.2e} (< {ORACLE_REL_TOL:e}) over {ORACLE_CASES} pairs"),
    )
}

fn golden_statistics() -> Outcome {
    let k = kendall_test(1.0, 100, Tail::Right);
    let p = pearson_test(-0.9723, 100, Tail::Left);
    let pass = (k.statistic - Z_TAU_GOLDEN).abs() <= Z_TAU_TOL && k.p < 1e-15 && (p.statistic - T_R_GOLDEN).abs() <= T_R_TOL;
    outcome(
        pass,
        format!("Z_τ = {:.4}, p = {:.1e}; t_r = {:.3}", k.statistic, k.p, p.statistic),
    )
}

struct Population {
    records: Vec<(f64, f64, f64)>,
    undefined: usize,
}

/// Fidelity-objective N = 5, 1→2 population with both sensitivities.
fn sensitivity_population() -> Population {
    let pool = generate_pool(&SamplerConfig::new(5, 2 * POOL_DRAW)).unwrap();
    let draw = pool.draw(POOL_DRAW, SEED).unwrap();
    let all = synthesize_population(
        &Transfer::new(5, 1, 2),
        &ObjectiveSpec::Fidelity,
        &Budget::new(POPULATION_RESTARTS, POPULATION_ITERATIONS),
        &Bounds::default(),
        SEED,
        None,
    )
    .unwrap();
    let chosen = select_population(&all, POPULATION, default_candidates(POPULATION)).unwrap();
    let grid = PerturbationGrid::uniform(GRID_POINTS).unwrap();
    let results: Vec<_> = chosen
        .par_iter()
        .map(|c| sensitivity_record(c, "", &draw.operators, &grid).map(|(r, _)| r))
        .collect();
    let mut records = Vec::new();
    let mut undefined = 0;
    for r in results {
        match r {
            Ok(r) => records.push((r.nominal_error, r.s_a, r.s_k_abs)),
            Err(_) => undefined += 1,
        }
    }
    Population { records, undefined }
}

fn concordance(pop: &Population) -> Outcome {
    let sa: Vec<f64> = pop.records.iter().map(|r| r.1).collect();
    let sk: Vec<f64> = pop.records.iter().map(|r| r.2).collect();
    match kendall_tau(&sk, &sa) {
        Ok(tau) => {
            let t = kendall_test(tau, sa.len(), Tail::Right);
            outcome(
                tau >= TAU_FLOOR && t.p < DEFAULT_ALPHA,
                format!(
                    "τ(s_k, s_a) = {tau:.4} (≥ {TAU_FLOOR}), p = {:.1e}, n = {} ({} undefined)",
                    t.p,
                    sa.len(),
                    pop.undefined
                ),
            )
        }
        Err(e) => outcome(false, format!("τ undefined: {e}")),
    }
}

fn trade_off(pop: &Population) -> Outcome {
    let kept: Vec<&(f64, f64, f64)> = pop.records.iter().filter(|r| r.0 > 0.0 && r.1 > 0.0).collect();
    let x: Vec<f64> = kept.iter().map(|r| r.1.log10()).collect();
    let y: Vec<f64> = kept.iter().map(|r| r.0.log10()).collect();
    match pearson_r(&x, &y) {
        Ok(r) => {
            let t = pearson_test(r, x.len(), Tail::Left);
            outcome(
                r < 0.0 && t.p < DEFAULT_ALPHA,
                format!("r(log s_a, log e) = {r:.4}, t = {:.2}, left p = {:.1e}, n = {}", t.statistic, t.p, x.len()),
            )
        }
        Err(e) => outcome(false, format!("r undefined: {e}")),
    }
}

fn orthogonal_pair_construction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let n = 5;
    let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    let lambda = DVector::from_vec(vec![-1.7, -0.4, 0.3, 1.1, 2.6]);
    let h = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    let h = (&h + h.transpose()) * 0.5;
    let model = spectral_decompose(&Hamiltonian::from_symmetric(h).unwrap(), DegeneracyTol::default()).unwrap();
    let (a, b) = (1, 3);
    let v = model.eigenvectors();
    let root2 = C64::new(2f64.sqrt(), 0.0);
    let input = StateVector::new((v.column(a) + v.column(b)).map(|x| C64::new(x, 0.0)) / root2).unwrap();
    let output = StateVector::new((v.column(a) - v.column(b)).map(|x| C64::new(x, 0.0)) / root2).unwrap();
    let omega = model.eigenvalues()[b] - model.eigenvalues()[a];
    let mut worst_f: f64 = 0.0;
    let mut worst_overlap: f64 = 0.0;
    let mut worst_objective: f64 = 0.0;
    let alpha = 0.5;
    let objective = Objective::new(ObjectiveSpec::Overlap { alpha }, None).unwrap();
    for k in 0..5 {
        let t = (2 * k + 1) as f64 * std::f64::consts::PI / omega;
        let kernel = TransferKernel::from_states(&model, &input, &output, t).unwrap();
        worst_f = worst_f.max((kernel.nominal_fidelity() - 1.0).abs());
        worst_overlap = worst_overlap.max((steady_overlap(&model, kernel.overlaps()) - 0.5).abs());
        let value = objective.evaluate_kernel(&model, &kernel).unwrap();
        worst_objective = worst_objective.max((value - (alpha + (1.0 - alpha) * 0.5)).abs());
    }
    let classified = classify_states(&model, &input, &output, PAIR_TOL).unwrap().is_orthogonal_pair;
    outcome(
        worst_f < PAIR_TOL_6 && worst_overlap < PAIR_TOL_6 && worst_objective < PAIR_TOL_6 && classified,
        format!(
            "|F − 1| = {worst_f:.1e}, |Tr[ρ_∞ρ_OUT] − ½| = {worst_overlap:.1e}, overlap objective gap {worst_objective:.1e}, classified = {classified}"
        ),
    )
}

fn sampler_validity() -> Outcome {
    let start = Instant::now();
    let cfg = SamplerConfig::new(5, LARGE_POOL);
    let pool = generate_pool(&cfg).unwrap();
    let dense: Vec<f64> = (0..41).map(|i| 10f64.powf(-3.0 + 0.125 * i as f64)).collect();
    let bad_cp = pool
        .operators
        .par_iter()
        .filter(|op| !(cp_admissible(&op.rates(), &cfg.cp.probe_times) && cp_admissible(&op.rates(), &dense)))
        .count();
    let worst_norm = pool.operators.iter().map(|op| (op.l1_norm() - 1.0).abs()).fold(0.0, f64::max);
    let bytes = |p: &DephasingPool| {
        let mut buf = Vec::new();
        p.write_jsonl(&mut buf).unwrap();
        buf
    };
    let first = bytes(&pool);
    let second = bytes(&generate_pool(&cfg).unwrap());
    let identical = first == second;
    let reloaded = DephasingPool::read_jsonl(first.as_slice()).map(|p| p == pool).unwrap_or(false);
    let elapsed = start.elapsed();
    outcome(
        pool.operators.len() == LARGE_POOL
            && bad_cp == 0
            && worst_norm <= NORM_TOL
            && identical
            && reloaded
            && elapsed < SAMPLER_LIMIT,
        format!(
            "{} operators, CP failures {bad_cp}, max |‖Γ̄‖₁ − 1| = {worst_norm:.1e}, byte-identical = {identical}, \
             reload equal = {reloaded}, acceptance rate {:.3}",
            pool.operators.len(),
            pool.stats.acceptance_rate()
        ),
    )
}

fn pair_fraction(transfer: &Transfer) -> (usize, usize) {
    let all = synthesize_population(
        transfer,
        &ObjectiveSpec::overlap(),
        &Budget::new(PAIR_RESTARTS, 500),
        &Bounds::default(),
        SEED,
        None,
    )
    .unwrap();
    let chosen: Vec<Controller> =
        select_population(&all, PAIR_POPULATION, default_candidates(PAIR_POPULATION)).unwrap();
    let pairs = chosen
        .iter()
        .filter(|c| classify_orthogonal_pair(c, PAIR_TOL).unwrap().is_orthogonal_pair)
        .count();
    (pairs, chosen.len())
}

fn classifier_pattern() -> Outcome {
    let (pairs, total) = pair_fraction(&Transfer::new(5, 1, 2));
    let fraction = pairs as f64 / total as f64;
    let mut others = Vec::new();
    for t in [Transfer::new(5, 1, 3), Transfer::new(6, 1, 2), Transfer::new(6, 1, 3), Transfer::new(6, 1, 4)] {
        let (p, n) = pair_fraction(&t);
        others.push(format!("{} {:.0}%", t.label(), 100.0 * p as f64 / n as f64));
    }
    outcome(
        fraction >= PAIR_FLOOR,
        format!(
            "N5_1to2 overlap: {pairs}/{total} = {:.0}% pairs (≥ {:.0}%); reported only: {}",
            100.0 * fraction,
            100.0 * PAIR_FLOOR,
            others.join(", ")
        ),
    )
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, check).map_err(|e| format!("{name}: {e}"))
}

fn property_suites() -> Outcome {
    let results = [
        run_property("trace", ring_case(), check_trace_preservation),
        run_property("purity", ring_case(), check_purity_monotone),
        run_property("projectors", ring_case(), check_projectors),
        run_property("tau-b", tau_case(), check_tau_b),
        run_property("phi", phi_case(), check_phi_symmetry),
    ];
    let failures: Vec<String> = results.into_iter().filter_map(|r| r.err()).collect();
    outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("5 suites × {PROPERTY_CASES} cases")
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, run: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} [{id}] {name}: {} ({:.1?})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed()
        );
    };
    report(1, "propagator equivalence", &propagator_equivalence);
    report(2, "sensitivity oracle agreement", &sensitivity_oracle);
    report(3, "statistical golden values", &golden_statistics);
    let population = std::cell::OnceCell::new();
    let pop = || population.get_or_init(sensitivity_population);
    report(4, "KDE/analytic concordance", &|| concordance(pop()));
    report(5, "trade-off trend", &|| trade_off(pop()));
    report(6, "orthogonal-pair construction", &orthogonal_pair_construction);
    report(7, "sampler validity", &sampler_validity);
    report(8, "classifier pattern", &classifier_pattern);
    report(9, "property suites", &property_suites);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
