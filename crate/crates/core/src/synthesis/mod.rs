//! Static bias-field controllers `(D_1, …, D_N, T)` found by restarted
//! quasi-Newton search.
//!
//! Three objectives are supported, all to be maximized:
//!
//! - `fidelity`: `Tr[ρ_OUT ρ(T)]` under unitary dynamics.
//! - `overlap`: `α Tr[ρ_OUT ρ(T)] + (1 − α) Tr[ρ_OUT ρ_∞]`, where `ρ_∞` is the
//!   dephased steady state.
//! - `dephasing`: the transfer fidelity at unit strength averaged over a
//!   fixed draw of sampled dephasing processes.
//!
//! The search runs in an unconstrained space. Biases map through a logistic
//! function onto `[d_min, d_max]`; `log T` maps the same way onto
//! `[log t_min, log t_max]`. Restart starting points come from Latin
//! hypercubes drawn in fixed-size blocks, so the first `r` restarts are the
//! same whatever the total budget.

pub mod lbfgs;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::TransferKernel;
use crate::error::{Error, Result};
use crate::ring::{build_hamiltonian, spectral_decompose, DegeneracyTol, RingSpec, SpectralModel, C64};
use crate::sampler::PoolDraw;
use crate::seed::stream_rng;
use lbfgs::{minimize, LbfgsOptions};

/// Restarts sharing one Latin hypercube.
pub const LHS_BLOCK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObjectiveSpec {
    Fidelity,
    Overlap { alpha: f64 },
    Dephasing { count: usize },
}

impl ObjectiveSpec {
    pub fn overlap() -> Self {
        ObjectiveSpec::Overlap { alpha: 0.5 }
    }

    pub fn dephasing() -> Self {
        ObjectiveSpec::Dephasing { count: 1000 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveSpec::Fidelity => "fidelity",
            ObjectiveSpec::Overlap { .. } => "overlap",
            ObjectiveSpec::Dephasing { .. } => "dephasing",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ObjectiveSpec::Overlap { alpha } if !(0.0..=1.0).contains(&alpha) => {
                Err(Error::InvalidInput(format!("overlap weight α = {alpha} outside [0, 1]")))
            }
            ObjectiveSpec::Dephasing { count: 0 } => {
                Err(Error::InvalidInput("dephasing objective needs at least one operator".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Ring size, coupling and transfer endpoints (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transfer {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "in")]
    pub in_node: usize,
    #[serde(rename = "out")]
    pub out_node: usize,
    #[serde(rename = "J", default = "unit_coupling")]
    pub coupling: f64,
}

fn unit_coupling() -> f64 {
    1.0
}

impl Transfer {
    pub fn new(n: usize, in_node: usize, out_node: usize) -> Self {
        Transfer {
            n,
            in_node,
            out_node,
            coupling: 1.0,
        }
    }

    pub fn label(&self) -> String {
        format!("N{}_{}to{}", self.n, self.in_node, self.out_node)
    }

    fn spec(&self, biases: Vec<f64>, t: f64) -> Result<RingSpec> {
        RingSpec::new(self.n, self.coupling, biases, t, self.in_node, self.out_node)
    }
}

/// Search box. Biases are absolute (in units where `J` is the coupling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub d_min: f64,
    pub d_max: f64,
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            d_min: 0.0,
            d_max: 10.0,
            t_min: 1e-2,
            t_max: 70.0,
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.d_min, self.d_max, self.t_min, self.t_max].iter().all(|v| v.is_finite());
        if !finite || self.d_min >= self.d_max || self.t_min <= 0.0 || self.t_min >= self.t_max {
            return Err(Error::InvalidInput(format!("invalid search bounds {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub restarts: usize,
    pub max_iterations: usize,
    #[serde(default = "default_gradient_tol")]
    pub gradient_tol: f64,
}

fn default_gradient_tol() -> f64 {
    1e-8
}

impl Budget {
    pub fn new(restarts: usize, max_iterations: usize) -> Self {
        Budget {
            restarts,
            max_iterations,
            gradient_tol: default_gradient_tol(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iterations == 0 {
            return Err(Error::InvalidInput("budget must be positive".into()));
        }
        Ok(())
    }
}

/// Everything needed to reproduce a controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub bounds: Bounds,
    pub budget: Budget,
    pub seed: u64,
    pub restart: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_draw_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Controller {
    pub spec: RingSpec,
    pub objective: ObjectiveSpec,
    pub nominal_error: f64,
    /// `NaN` for a diverged restart.
    #[serde(with = "crate::float_serde")]
    pub achieved_objective: f64,
    pub restarts_used: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub provenance: Provenance,
}

impl Controller {
    /// A controller for a fixed spec, e.g. hand-built or reloaded, with
    /// its nominal error and objective recomputed.
    pub fn evaluate(
        spec: RingSpec,
        objective: ObjectiveSpec,
        pool: Option<&PoolDraw>,
        provenance: Provenance,
    ) -> Result<Controller> {
        let achieved = Objective::new(objective, pool)?.evaluate(&spec)?;
        let fidelity = Objective::new(ObjectiveSpec::Fidelity, None)?.evaluate(&spec)?;
        Ok(Controller {
            spec,
            objective,
            nominal_error: (1.0 - fidelity).clamp(0.0, 1.0),
            achieved_objective: achieved,
            restarts_used: 1,
            converged: true,
            warning: None,
            provenance,
        })
    }

    pub fn model(&self) -> Result<SpectralModel> {
        spectral_decompose(&build_hamiltonian(&self.spec), DegeneracyTol::default())
    }

    pub fn kernel(&self) -> Result<TransferKernel> {
        TransferKernel::new(
            &self.model()?,
            self.spec.in_node(),
            self.spec.out_node(),
            self.spec.readout_time(),
        )
    }
}

/// An objective prepared for repeated evaluation.
pub struct Objective {
    spec: ObjectiveSpec,
    ensemble: Vec<Vec<f64>>,
}

impl Objective {
    pub fn new(spec: ObjectiveSpec, pool: Option<&PoolDraw>) -> Result<Self> {
        spec.validate()?;
        let ensemble = match (spec, pool) {
            (ObjectiveSpec::Dephasing { count }, Some(draw)) => {
                if draw.operators.len() != count {
                    return Err(Error::InsufficientPopulation {
                        requested: count,
                        available: draw.operators.len(),
                    });
                }
                draw.operators.iter().map(|op| op.gamma_lower.clone()).collect()
            }
            (ObjectiveSpec::Dephasing { .. }, None) => return Err(Error::MissingPool),
            (_, Some(_)) => {
                return Err(Error::InvalidInput(format!(
                    "{} objective takes no dephasing pool",
                    spec.name()
                )))
            }
            (_, None) => Vec::new(),
        };
        Ok(Objective { spec, ensemble })
    }

    pub fn spec(&self) -> ObjectiveSpec {
        self.spec
    }

    /// Objective value in `[0, 1]`.
    pub fn evaluate(&self, ring: &RingSpec) -> Result<f64> {
        let model = spectral_decompose(&build_hamiltonian(ring), DegeneracyTol::default())?;
        let kernel = TransferKernel::new(&model, ring.in_node(), ring.out_node(), ring.readout_time())?;
        self.evaluate_kernel(&model, &kernel)
    }

    /// Objective value for a prepared transfer, e.g. between non-site states.
    pub fn evaluate_kernel(&self, model: &SpectralModel, kernel: &TransferKernel) -> Result<f64> {
        Ok(match self.spec {
            ObjectiveSpec::Fidelity => kernel.nominal_fidelity(),
            ObjectiveSpec::Overlap { alpha } => {
                alpha * kernel.nominal_fidelity() + (1.0 - alpha) * steady_overlap(model, kernel.overlaps())
            }
            ObjectiveSpec::Dephasing { .. } => {
                let n = model.dim();
                if let Some(bad) = self.ensemble.iter().find(|g| g.len() != n * (n - 1) / 2) {
                    return Err(Error::DimensionMismatch {
                        expected: n * (n - 1) / 2,
                        actual: bad.len(),
                        context: "dephasing operator vs Hilbert space",
                    });
                }
                let total: f64 = self.ensemble.iter().map(|g| kernel.fidelity_lower(g, 1.0)).sum();
                total / self.ensemble.len() as f64
            }
        })
    }
}

/// `Tr[ρ_OUT ρ_∞] = Σ_k |⟨OUT|Π_k|IN⟩|²` from per-eigenvector overlaps.
pub fn steady_overlap(model: &SpectralModel, overlaps: &[C64]) -> f64 {
    model
        .groups()
        .iter()
        .map(|g| overlaps[g.clone()].iter().sum::<C64>().norm_sqr())
        .sum()
}

/// One-shot objective evaluation.
pub fn objective_value(ring: &RingSpec, obj: &ObjectiveSpec, pool: Option<&PoolDraw>) -> Result<f64> {
    Objective::new(*obj, pool)?.evaluate(ring)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn logit(u: f64) -> f64 {
    let u = u.clamp(1e-9, 1.0 - 1e-9);
    (u / (1.0 - u)).ln()
}

fn decode(z: &[f64], b: &Bounds) -> (Vec<f64>, f64) {
    let n = z.len() - 1;
    let biases = z[..n].iter().map(|&v| b.d_min + (b.d_max - b.d_min) * logistic(v)).collect();
    let (lo, hi) = (b.t_min.ln(), b.t_max.ln());
    let t = (lo + (hi - lo) * logistic(z[n])).exp().clamp(b.t_min, b.t_max);
    (biases, t)
}

/// Unit-cube starting point of restart `r`.
fn start_point(seed: u64, r: usize, dim: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, (r / LHS_BLOCK) as u64);
    let mut columns = Vec::with_capacity(dim);
    for _ in 0..dim {
        let mut strata: Vec<usize> = (0..LHS_BLOCK).collect();
        strata.shuffle(&mut rng);
        let jitter: Vec<f64> = (0..LHS_BLOCK).map(|_| rng.random::<f64>()).collect();
        columns.push((strata, jitter));
    }
    let row = r % LHS_BLOCK;
    columns
        .iter()
        .map(|(s, j)| (s[row] as f64 + j[row]) / LHS_BLOCK as f64)
        .collect()
}

struct RestartOutcome {
    biases: Vec<f64>,
    t: f64,
    value: f64,
    converged: bool,
}

fn run_restart(transfer: &Transfer, objective: &Objective, bounds: &Bounds, budget: &Budget, seed: u64, r: usize) -> RestartOutcome {
    let dim = transfer.n + 1;
    let z0: Vec<f64> = start_point(seed, r, dim).into_iter().map(logit).collect();
    let cost = |z: &[f64]| {
        let (d, t) = decode(z, bounds);
        match transfer.spec(d, t).and_then(|s| objective.evaluate(&s)) {
            Ok(v) => -v,
            Err(_) => f64::NAN,
        }
    };
    let opts = LbfgsOptions {
        max_iterations: budget.max_iterations,
        gradient_tol: budget.gradient_tol,
        ..Default::default()
    };
    let m = minimize(cost, &z0, &opts);
    let (biases, t) = decode(&m.x, bounds);
    RestartOutcome {
        biases,
        t,
        value: -m.f,
        converged: m.status.converged(),
    }
}

fn check_inputs(transfer: &Transfer, bounds: &Bounds, budget: &Budget) -> Result<()> {
    bounds.validate()?;
    budget.validate()?;
    transfer.spec(vec![0.0; transfer.n], 1.0).map(|_| ())
}

/// One locally optimized controller per restart, in restart order.
pub fn synthesize_population(
    transfer: &Transfer,
    obj: &ObjectiveSpec,
    budget: &Budget,
    bounds: &Bounds,
    seed: u64,
    pool: Option<&PoolDraw>,
) -> Result<Vec<Controller>> {
    check_inputs(transfer, bounds, budget)?;
    let objective = Objective::new(*obj, pool)?;
    let outcomes: Vec<RestartOutcome> = (0..budget.restarts)
        .into_par_iter()
        .map(|r| run_restart(transfer, &objective, bounds, budget, seed, r))
        .collect();
    outcomes
        .into_iter()
        .enumerate()
        .map(|(r, o)| {
            let spec = transfer.spec(o.biases, o.t)?;
            let fidelity = Objective::new(ObjectiveSpec::Fidelity, None)?.evaluate(&spec)?;
            let finite = o.value.is_finite();
            Ok(Controller {
                spec,
                objective: *obj,
                nominal_error: (1.0 - fidelity).clamp(0.0, 1.0),
                achieved_objective: if finite { o.value } else { f64::NAN },
                restarts_used: 1,
                converged: o.converged,
                warning: (!finite).then(|| "restart diverged".to_string()),
                provenance: Provenance {
                    bounds: *bounds,
                    budget: *budget,
                    seed,
                    restart: r,
                    pool_hash: pool.map(|p| p.pool_hash.clone()),
                    pool_draw_seed: pool.map(|p| p.seed),
                },
            })
        })
        .collect()
}

/// Best controller over all restarts (ties go to the earlier restart).
pub fn synthesize(
    transfer: &Transfer,
    obj: &ObjectiveSpec,
    budget: &Budget,
    bounds: &Bounds,
    seed: u64,
    pool: Option<&PoolDraw>,
) -> Result<Controller> {
    let population = synthesize_population(transfer, obj, budget, bounds, seed, pool)?;
    let all_diverged = population.iter().all(|c| !c.achieved_objective.is_finite());
    let any_converged = population.iter().any(|c| c.converged);
    let mut best = population
        .into_iter()
        .reduce(|a, b| {
            if b.achieved_objective > a.achieved_objective || !a.achieved_objective.is_finite() {
                b
            } else {
                a
            }
        })
        .expect("budget has at least one restart");
    best.restarts_used = budget.restarts;
    best.warning = if all_diverged {
        Some("all restarts diverged".into())
    } else if !any_converged {
        Some("no restart met the stopping tolerance".into())
    } else {
        None
    };
    Ok(best)
}

/// The `k` controllers with smallest nominal error. The sort is stable, so
/// equal errors keep their synthesis order.
pub fn select_top(controllers: &[Controller], k: usize) -> Result<Vec<Controller>> {
    if k > controllers.len() {
        return Err(Error::InsufficientPopulation {
            requested: k,
            available: controllers.len(),
        });
    }
    let mut sorted = controllers.to_vec();
    sorted.sort_by(|a, b| a.nominal_error.total_cmp(&b.nominal_error));
    sorted.truncate(k);
    Ok(sorted)
}

/// Default size of the objective pre-filter used by [`select_population`].
pub fn default_candidates(k: usize) -> usize {
    k + k.div_ceil(2)
}

/// Two-stage selection: keep the `candidates` restarts with the best achieved
/// objective (dropping poor local optima), then take the `k` with smallest
/// nominal error. `candidates` is clamped to at least `k`.
pub fn select_population(controllers: &[Controller], k: usize, candidates: usize) -> Result<Vec<Controller>> {
    if k > controllers.len() {
        return Err(Error::InsufficientPopulation {
            requested: k,
            available: controllers.len(),
        });
    }
    let mut sorted = controllers.to_vec();
    let key = |c: &Controller| {
        if c.achieved_objective.is_finite() {
            c.achieved_objective
        } else {
            f64::NEG_INFINITY
        }
    };
    sorted.sort_by(|a, b| key(b).total_cmp(&key(a)));
    sorted.truncate(candidates.max(k).min(controllers.len()));
    select_top(&sorted, k)
}
