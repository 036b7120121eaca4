//! Fixtures, oracles and property checks shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ringsens_core::dynamics::{evolve_projector, DephasingRates};
use ringsens_core::ring::{
    basis_state, build_hamiltonian, spectral_decompose, DegeneracyTol, DensityMatrix, RingSpec, SpectralModel, C64,
};
use ringsens_core::stats::{kendall_tau, normal_cdf, student_t_cdf};
use ringsens_core::synthesis::{Bounds, Budget, Controller, ObjectiveSpec, Provenance};

pub fn provenance() -> Provenance {
    Provenance {
        bounds: Bounds::default(),
        budget: Budget::new(1, 1),
        seed: 0,
        restart: 0,
        pool_hash: None,
        pool_draw_seed: None,
    }
}

/// Random ring spec. With `degenerate` all biases are equal, which gives the
/// bare ring's paired spectrum.
pub fn random_spec(rng: &mut ChaCha8Rng, n: usize, t_max: f64, degenerate: bool) -> RingSpec {
    let biases = if degenerate {
        vec![rng.random_range(0.0..10.0); n]
    } else {
        (0..n).map(|_| rng.random_range(0.0..10.0)).collect()
    };
    let t = rng.random_range(1e-3..t_max);
    let a = rng.random_range(1..=n);
    let mut b = rng.random_range(1..n);
    if b >= a {
        b += 1;
    }
    RingSpec::new(n, 1.0, biases, t, a, b).unwrap()
}

pub fn controller(spec: RingSpec) -> Controller {
    Controller::evaluate(spec, ObjectiveSpec::Fidelity, None, provenance()).unwrap()
}

pub fn model_of(spec: &RingSpec) -> SpectralModel {
    spectral_decompose(&build_hamiltonian(spec), DegeneracyTol::default()).unwrap()
}

/// Symmetric, zero-diagonal, nonnegative rates of size `m`.
pub fn random_rates(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DephasingRates {
    let mut g = DMatrix::zeros(m, m);
    for k in 1..m {
        for l in 0..k {
            let v = rng.random_range(0.0..scale);
            g[(k, l)] = v;
            g[(l, k)] = v;
        }
    }
    DephasingRates::new(g).unwrap()
}

/// Mixed state `Σ p_i |ψ_i⟩⟨ψ_i|` from random complex vectors.
pub fn random_density(rng: &mut ChaCha8Rng, n: usize) -> DensityMatrix {
    let mut rho = DMatrix::<C64>::zeros(n, n);
    let mut weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    for w in weights {
        let v = DVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let v = v.unscale(v.norm());
        rho += v.clone() * v.adjoint() * C64::new(w, 0.0);
    }
    DensityMatrix::new(rho).unwrap()
}

/// τ-b as the cosine between the pairwise sign matrices of `x` and `y`.
pub fn tau_b_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    let sign = |d: f64| (d > 0.0) as i64 - (d < 0.0) as i64;
    let (mut sxy, mut sxx, mut syy) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in 0..n {
            let a = sign(x[i] - x[j]);
            let b = sign(y[i] - y[j]);
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
    }
    if sxx == 0 || syy == 0 {
        None
    } else {
        Some(sxy as f64 / ((sxx as f64) * (syy as f64)).sqrt())
    }
}

/// Student-t CDF for integer degrees of freedom from the finite
/// trigonometric series for `P(|T| < t)`.
pub fn student_t_series(t: f64, nu: u32) -> f64 {
    let theta = (t.abs() / (nu as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let a = if nu % 2 == 1 {
        let mut sum = 0.0;
        if nu > 1 {
            let mut term = 1.0;
            sum = 1.0;
            let mut k = 2;
            while k + 1 < nu {
                term *= k as f64 / (k + 1) as f64 * c * c;
                sum += term;
                k += 2;
            }
        }
        2.0 / std::f64::consts::PI * (theta + s * c * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while k + 1 < nu {
            term *= k as f64 / (k + 1) as f64 * c * c;
            sum += term;
            k += 2;
        }
        s * sum
    };
    if t >= 0.0 {
        0.5 * (1.0 + a)
    } else {
        0.5 * (1.0 - a)
    }
}

// Property strategies and checks. Each check returns a proptest error on
// violation so it can run under `proptest!` or a manual `TestRunner`.

pub fn ring_case() -> impl Strategy<Value = (u64, usize, bool, f64)> {
    (any::<u64>(), 3usize..=6, prop::bool::weighted(0.2), 0.0f64..100.0)
}

fn case_model(seed: u64, n: usize, degenerate: bool) -> (ChaCha8Rng, RingSpec, SpectralModel) {
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = random_spec(&mut rng, n, 100.0, degenerate);
    let model = model_of(&spec);
    (rng, spec, model)
}

pub fn check_trace_preservation(case: (u64, usize, bool, f64)) -> Result<(), TestCaseError> {
    let (seed, n, degenerate, t) = case;
    let (mut rng, _, model) = case_model(seed, n, degenerate);
    let rho0 = random_density(&mut rng, n);
    let gamma = random_rates(&mut rng, model.num_groups(), 2.0);
    let rho = evolve_projector(&model, &rho0, &gamma, t).unwrap();
    prop_assert!((rho.trace() - 1.0).abs() < 1e-10, "trace {}", rho.trace());
    let herm = (rho.matrix() - rho.matrix().adjoint()).camax();
    prop_assert!(herm < 1e-10, "hermiticity defect {herm}");
    Ok(())
}

pub fn check_purity_monotone(case: (u64, usize, bool, f64)) -> Result<(), TestCaseError> {
    let (seed, n, degenerate, t) = case;
    let (mut rng, spec, model) = case_model(seed, n, degenerate);
    let rho0 = basis_state(n, spec.in_node()).unwrap().density();
    let gamma = random_rates(&mut rng, model.num_groups(), 2.0);
    let t2 = t + rng.random_range(0.0..10.0);
    let p1 = evolve_projector(&model, &rho0, &gamma, t).unwrap().purity();
    let p2 = evolve_projector(&model, &rho0, &gamma, t2).unwrap().purity();
    prop_assert!(p2 <= p1 + 1e-10, "purity rose from {p1} to {p2}");
    prop_assert!(p1 <= 1.0 + 1e-10);
    Ok(())
}

pub fn check_projectors(case: (u64, usize, bool, f64)) -> Result<(), TestCaseError> {
    let (seed, n, degenerate, _) = case;
    let (_, _, model) = case_model(seed, n, degenerate);
    let p = model.projectors();
    let sum = p.iter().fold(DMatrix::<f64>::zeros(n, n), |a, b| a + b);
    prop_assert!((sum - DMatrix::<f64>::identity(n, n)).amax() < 1e-10);
    for (k, pk) in p.iter().enumerate() {
        for (l, pl) in p.iter().enumerate() {
            let prod = pk * pl;
            let expected = if k == l { pk.clone() } else { DMatrix::zeros(n, n) };
            prop_assert!((prod - expected).amax() < 1e-10, "Π_{k}Π_{l}");
        }
    }
    Ok(())
}

pub fn tau_case() -> impl Strategy<Value = (Vec<i32>, Vec<i32>)> {
    (2usize..=50).prop_flat_map(|n| (prop::collection::vec(-6i32..6, n), prop::collection::vec(-6i32..6, n)))
}

pub fn check_tau_b(case: (Vec<i32>, Vec<i32>)) -> Result<(), TestCaseError> {
    let x: Vec<f64> = case.0.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = case.1.iter().map(|&v| v as f64).collect();
    match (tau_b_oracle(&x, &y), kendall_tau(&x, &y)) {
        (Some(expected), Ok(got)) => prop_assert!((expected - got).abs() < 1e-12, "{expected} vs {got}"),
        (None, Err(_)) => {}
        (o, g) => return Err(TestCaseError::fail(format!("oracle {o:?}, library {g:?}"))),
    }
    Ok(())
}

pub fn phi_case() -> impl Strategy<Value = (f64, f64)> {
    (-40.0f64..40.0, 1.0f64..200.0)
}

pub fn check_phi_symmetry(case: (f64, f64)) -> Result<(), TestCaseError> {
    let (z, nu) = case;
    let s = normal_cdf(z) + normal_cdf(-z);
    prop_assert!((s - 1.0).abs() < 1e-15, "Φ(z) + Φ(−z) = {s}");
    let t = student_t_cdf(z, nu) + student_t_cdf(-z, nu);
    prop_assert!((t - 1.0).abs() < 1e-14, "T(z) + T(−z) = {t}");
    Ok(())
}
