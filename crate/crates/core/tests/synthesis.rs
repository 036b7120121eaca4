mod common;

use common::*;
use ringsens_core::dynamics::propagate_pure;
use ringsens_core::ring::{basis_state, RingSpec};
use ringsens_core::sampler::{generate_pool, SamplerConfig};
use ringsens_core::synthesis::{
    default_candidates, objective_value, select_population, select_top, synthesize, synthesize_population, Bounds,
    Budget, Controller, ObjectiveSpec, Transfer,
};

/// Independent recomputation of `1 − |⟨OUT|e^{−iHT}|IN⟩|²`.
fn recomputed_error(spec: &RingSpec) -> f64 {
    let model = model_of(spec);
    let psi = basis_state(spec.n(), spec.in_node()).unwrap();
    let out = basis_state(spec.n(), spec.out_node()).unwrap();
    1.0 - out.vector().dotc(propagate_pure(&model, &psi, spec.readout_time()).vector()).norm_sqr()
}

#[test]
fn small_ring_reaches_near_perfect_transfer() {
    let c = synthesize(
        &Transfer::new(3, 1, 2),
        &ObjectiveSpec::Fidelity,
        &Budget::new(32, 300),
        &Bounds::default(),
        7,
        None,
    )
    .unwrap();
    assert!(c.nominal_error < 1e-3, "{}", c.nominal_error);
    assert!((recomputed_error(&c.spec) - c.nominal_error).abs() < 1e-9);
    assert_eq!(c.restarts_used, 32);
    assert!(c.warning.is_none());
}

#[test]
fn fixed_seed_is_reproducible() {
    let run = || {
        synthesize(
            &Transfer::new(4, 1, 3),
            &ObjectiveSpec::overlap(),
            &Budget::new(8, 100),
            &Bounds::default(),
            99,
            None,
        )
        .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn more_restarts_never_hurt() {
    let transfer = Transfer::new(5, 1, 3);
    let mut last = f64::NEG_INFINITY;
    for restarts in [4, 16, 32, 48] {
        let c = synthesize(
            &transfer,
            &ObjectiveSpec::Fidelity,
            &Budget::new(restarts, 80),
            &Bounds::default(),
            3,
            None,
        )
        .unwrap();
        assert!(c.achieved_objective >= last, "{restarts}: {} < {last}", c.achieved_objective);
        last = c.achieved_objective;
    }
}

#[test]
fn population_is_consistent_and_bounded() {
    let alpha = 0.5;
    let pop = synthesize_population(
        &Transfer::new(5, 1, 2),
        &ObjectiveSpec::Overlap { alpha },
        &Budget::new(24, 150),
        &Bounds::default(),
        5,
        None,
    )
    .unwrap();
    assert_eq!(pop.len(), 24);
    let b = Bounds::default();
    for (r, c) in pop.iter().enumerate() {
        assert_eq!(c.provenance.restart, r);
        assert!((recomputed_error(&c.spec) - c.nominal_error).abs() < 1e-9);
        assert!(c.achieved_objective <= alpha + (1.0 - alpha) * 0.5 + 1e-9);
        let re = objective_value(&c.spec, &c.objective, None).unwrap();
        assert!((re - c.achieved_objective).abs() < 1e-12);
        assert!(c.spec.biases().iter().all(|d| (b.d_min..=b.d_max).contains(d)));
        assert!((b.t_min..=b.t_max).contains(&c.spec.readout_time()));
    }
}

#[test]
fn dephasing_objective_is_below_the_coherent_optimum() {
    let transfer = Transfer::new(4, 1, 2);
    let pool = generate_pool(&SamplerConfig::new(4, 200)).unwrap();
    let draw = pool.draw(100, 1).unwrap();
    let budget = Budget::new(16, 150);
    let deph = synthesize(&transfer, &ObjectiveSpec::Dephasing { count: 100 }, &budget, &Bounds::default(), 2, Some(&draw))
        .unwrap();
    let coherent = synthesize(&transfer, &ObjectiveSpec::Fidelity, &budget, &Bounds::default(), 2, None).unwrap();
    assert!(deph.achieved_objective <= coherent.achieved_objective + 1e-9);
    // The mean over dephasing processes also bounds this controller's own fidelity.
    assert!(deph.achieved_objective <= 1.0 - deph.nominal_error + 1e-12);
    assert_eq!(deph.provenance.pool_hash.as_deref(), Some(draw.pool_hash.as_str()));
}

#[test]
fn objective_examples() {
    let self_transfer = RingSpec::self_transfer(4, 1.0, vec![0.3, 1.0, 2.0, 0.0], 0.0, 2).unwrap();
    let f = objective_value(&self_transfer, &ObjectiveSpec::Fidelity, None).unwrap();
    assert!((f - 1.0).abs() < 1e-14);

    let spec = RingSpec::new(5, 1.0, vec![0.1, 2.0, 3.3, 0.7, 5.0], 4.2, 1, 3).unwrap();
    let fid = objective_value(&spec, &ObjectiveSpec::Fidelity, None).unwrap();
    let collapsed = objective_value(&spec, &ObjectiveSpec::Overlap { alpha: 1.0 }, None).unwrap();
    assert!((fid - collapsed).abs() < 1e-15);
    assert!(objective_value(&spec, &ObjectiveSpec::Dephasing { count: 10 }, None).is_err());
}

#[test]
fn controllers_round_trip_through_json() {
    let c = controller(RingSpec::new(5, 1.0, vec![0.1, 2.0, 3.3, 0.7, 5.0], 4.2, 1, 3).unwrap());
    let line = serde_json::to_string(&c).unwrap();
    let back: Controller = serde_json::from_str(&line).unwrap();
    assert_eq!(back, c);
    assert!(serde_json::from_str::<Controller>(&line.replacen("{", "{\"extra\":1,", 1)).is_err());
}

#[test]
fn two_stage_selection() {
    let mk = |e: f64, obj: f64| {
        let mut c = controller(RingSpec::new(3, 1.0, vec![0.0; 3], 1.0, 1, 2).unwrap());
        c.nominal_error = e;
        c.achieved_objective = obj;
        c
    };
    let pop = vec![mk(0.1, 0.9), mk(0.01, 0.2), mk(0.05, 0.8), mk(0.2, f64::NAN), mk(0.02, 0.95)];
    let top = select_top(&pop, 2).unwrap();
    assert_eq!(top.iter().map(|c| c.nominal_error).collect::<Vec<_>>(), [0.01, 0.02]);
    let filtered = select_population(&pop, 2, 3).unwrap();
    assert_eq!(filtered.iter().map(|c| c.nominal_error).collect::<Vec<_>>(), [0.02, 0.05]);
    let errors = |v: Vec<Controller>| v.iter().map(|c| c.nominal_error).collect::<Vec<_>>();
    assert_eq!(errors(select_population(&pop, 5, 0).unwrap()), errors(select_top(&pop, 5).unwrap()));
    assert!(select_population(&pop, 6, 6).is_err());
    assert_eq!(default_candidates(50), 75);
    assert_eq!(default_candidates(100), 150);
}
