//! Response of the transfer error to dephasing switched on at strength `δ`.
//!
//! For a controller with nominal error `e(T)` and a dephasing process `S_μ`
//! the perturbed error `ẽ(T; S_μ, δ)` grows from `e(T)` at `δ = 0`. Two
//! estimates of the log-sensitivity `(1/e) ∂ẽ/∂δ |_{δ=0}` are provided:
//!
//! - analytic: `s(S_μ, T) = |(1/e) c·e^{AT} S_μ T r_0|` from the LTI form,
//!   averaged over the operators into `s_a`;
//! - statistical: a smoothing spline through the operator-averaged error
//!   curve, differentiated at the boundary, giving `s_k`.

pub mod kde;
pub mod spline;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::gellmann::HermitianBasis;
use crate::dynamics::{
    apply_perturbation, build_lti_with_rates, evolve_lti, evolve_projector, fidelity, DephasingRates,
};
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::ring::{basis_state, DensityMatrix};
use crate::sampler::DephasingOperator;
use crate::synthesis::Controller;
use spline::SmoothingSpline;

pub use kde::{density_map, gaussian_kde, scott_bandwidth, DensityMap};

/// Nominal errors at or below this make the log-sensitivity undefined.
pub const MIN_ERROR: f64 = 1e-12;

/// Strengths `0 = δ_0 < δ_1 < … ≤ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PerturbationGrid(Vec<f64>);

impl PerturbationGrid {
    /// `points` equally spaced strengths on `[0, 1]`.
    pub fn uniform(points: usize) -> Result<Self> {
        if points < 3 {
            return Err(Error::InvalidInput(format!("grid of {points} points; need ≥ 3")));
        }
        PerturbationGrid::new((0..points).map(|i| i as f64 / (points - 1) as f64).collect())
    }

    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.len() < 3 || deltas[0] != 0.0 {
            return Err(Error::InvalidInput("grid must start at 0 and have ≥ 3 points".into()));
        }
        if deltas.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) || deltas[deltas.len() - 1] > 1.0 {
            return Err(Error::InvalidInput("grid must increase strictly within [0, 1]".into()));
        }
        Ok(PerturbationGrid(deltas))
    }

    pub fn deltas(&self) -> &[f64] {
        &self.0
    }
}

impl Default for PerturbationGrid {
    fn default() -> Self {
        PerturbationGrid::uniform(1001).expect("1001 points is a valid grid")
    }
}

impl TryFrom<Vec<f64>> for PerturbationGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        PerturbationGrid::new(v)
    }
}

impl From<PerturbationGrid> for Vec<f64> {
    fn from(g: PerturbationGrid) -> Self {
        g.0
    }
}

fn endpoint_states(controller: &Controller) -> Result<(DensityMatrix, DensityMatrix)> {
    let n = controller.spec.n();
    Ok((
        basis_state(n, controller.spec.in_node())?.density(),
        basis_state(n, controller.spec.out_node())?.density(),
    ))
}

fn check_operator(controller: &Controller, op: &DephasingOperator) -> Result<()> {
    if op.n != controller.spec.n() {
        return Err(Error::DimensionMismatch {
            expected: controller.spec.n(),
            actual: op.n,
            context: "dephasing operator vs ring size",
        });
    }
    Ok(())
}

/// `ẽ(T; S_μ, δ)` from the projector expansion with rates `δ γ^μ`.
pub fn perturbed_error(controller: &Controller, op: &DephasingOperator, delta: f64) -> Result<f64> {
    check_operator(controller, op)?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidInput(format!("strength δ = {delta} outside [0, 1]")));
    }
    let model = controller.model()?.split();
    let (rho0, rho_out) = endpoint_states(controller)?;
    let rho = evolve_projector(&model, &rho0, &op.rates().scaled(delta), controller.spec.readout_time())?;
    Ok(fidelity(&rho, &rho_out).error)
}

/// `1 − c·exp((A + δS_μ)T) r_0` from the vectorized form.
pub fn perturbed_error_lti(controller: &Controller, op: &DephasingOperator, delta: f64) -> Result<f64> {
    check_operator(controller, op)?;
    let model = controller.model()?.split();
    let (rho0, rho_out) = endpoint_states(controller)?;
    let sys = build_lti_with_rates(&model, &op.rates().scaled(delta))?;
    let r = evolve_lti(&sys, &sys.vectorize(&rho0), controller.spec.readout_time())?;
    Ok(1.0 - sys.output_functional(&rho_out).dot(&r))
}

/// Operator-independent parts of the analytic log-sensitivity:
/// `w = (e^{AT})ᵀ c` and `r_0`.
pub struct AnalyticSensitivity {
    nominal_error: f64,
    readout_time: f64,
    weights: DVector<f64>,
    r0: DVector<f64>,
    basis: HermitianBasis,
    n: usize,
}

impl AnalyticSensitivity {
    pub fn new(controller: &Controller) -> Result<Self> {
        let model = controller.model()?.split();
        let n = model.dim();
        let (rho0, rho_out) = endpoint_states(controller)?;
        let sys = build_lti_with_rates(&model, &DephasingRates::zero(n))?;
        let t = controller.spec.readout_time();
        let propagator = expm(&(sys.liouville() * t))?;
        let c = sys.output_functional(&rho_out);
        let r0 = sys.vectorize(&rho0);
        let nominal_error = 1.0 - c.dot(&(&propagator * &r0));
        Ok(AnalyticSensitivity {
            nominal_error,
            readout_time: t,
            weights: propagator.transpose() * c,
            r0,
            basis: sys.basis().clone(),
            n,
        })
    }

    pub fn nominal_error(&self) -> f64 {
        self.nominal_error
    }

    /// `s(S_μ, T)`.
    pub fn per_operator(&self, op: &DephasingOperator) -> Result<f64> {
        if op.n != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: op.n,
                context: "dephasing operator vs ring size",
            });
        }
        if self.nominal_error <= MIN_ERROR {
            return Err(Error::Undefined(format!(
                "log-sensitivity at nominal error {:e}",
                self.nominal_error
            )));
        }
        let sr = apply_perturbation(&self.basis, op.rates().matrix(), &self.r0);
        let response = self.weights.dot(&sr) * self.readout_time;
        Ok((-response / self.nominal_error).abs())
    }
}

pub fn analytic_log_sensitivity(controller: &Controller, op: &DephasingOperator) -> Result<f64> {
    AnalyticSensitivity::new(controller)?.per_operator(op)
}

/// Errors for every (operator, strength) pair, with per-strength statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSurface {
    deltas: Vec<f64>,
    rows: usize,
    data: Vec<f64>,
    mean: Vec<f64>,
    variance: Vec<f64>,
}

impl ErrorSurface {
    /// Surface from explicit rows (one per operator, one entry per strength).
    pub fn from_rows(grid: &PerturbationGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = grid.deltas().len();
        if rows.is_empty() {
            return Err(Error::InvalidInput("surface needs at least one row".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                actual: r.len(),
                context: "surface row",
            });
        }
        let m = rows.len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let mut mean = vec![0.0; cols];
        for row in data.chunks(cols) {
            mean.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        mean.iter_mut().for_each(|s| *s /= m as f64);
        let mut variance = vec![0.0; cols];
        if m > 1 {
            for row in data.chunks(cols) {
                variance
                    .iter_mut()
                    .zip(row.iter().zip(&mean))
                    .for_each(|(s, (v, mu))| *s += (v - mu) * (v - mu));
            }
            variance.iter_mut().for_each(|s| *s /= (m - 1) as f64);
        }
        Ok(ErrorSurface {
            deltas: grid.deltas().to_vec(),
            rows: m,
            data,
            mean,
            variance,
        })
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, mu: usize) -> &[f64] {
        let c = self.deltas.len();
        &self.data[mu * c..(mu + 1) * c]
    }

    pub fn get(&self, mu: usize, j: usize) -> f64 {
        self.data[mu * self.deltas.len() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|mu| self.get(mu, j)).collect()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Sample variance (divisor `n − 1`) per strength.
    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    pub fn min(&self) -> f64 {
        self.data.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluates `ẽ(T; S_μ, δ)` for every operator and strength.
pub fn build_error_surface(
    controller: &Controller,
    operators: &[DephasingOperator],
    grid: &PerturbationGrid,
) -> Result<ErrorSurface> {
    for op in operators {
        check_operator(controller, op)?;
    }
    let kernel = controller.kernel()?;
    let rows: Vec<Vec<f64>> = operators
        .par_iter()
        .map(|op| kernel.error_curve_lower(&op.gamma_lower, grid.deltas()))
        .collect();
    ErrorSurface::from_rows(grid, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeSensitivity {
    /// `(1/e) dê/dδ` at `δ = 0`.
    pub signed: f64,
    /// Smoothing parameter of the spline; `None` when the surface had no
    /// spread and the raw mean curve was differentiated instead.
    pub smoothing: Option<f64>,
}

/// Log-sensitivity from the operator-averaged error curve.
pub fn kde_log_sensitivity(surface: &ErrorSurface, e_nominal: f64) -> Result<KdeSensitivity> {
    if e_nominal <= MIN_ERROR {
        return Err(Error::Undefined(format!("log-sensitivity at nominal error {e_nominal:e}")));
    }
    let x = surface.deltas();
    let y = surface.mean();
    if surface.variance().iter().all(|v| *v == 0.0) {
        // Quadratic through the first three points, differentiated at x_0.
        let (h1, h2) = (x[1] - x[0], x[2] - x[0]);
        let slope = (y[1] - y[0]) * h2 / (h1 * (h2 - h1)) - (y[2] - y[0]) * h1 / (h2 * (h2 - h1));
        return Ok(KdeSensitivity {
            signed: slope / e_nominal,
            smoothing: None,
        });
    }
    let fit = SmoothingSpline::fit_gcv(x, y)?;
    Ok(KdeSensitivity {
        signed: fit.derivative_at_start() / e_nominal,
        smoothing: Some(fit.lambda()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityRecord {
    pub controller: String,
    pub nominal_error: f64,
    #[serde(with = "crate::float_serde")]
    pub s_a: f64,
    /// Signed spline estimate.
    #[serde(with = "crate::float_serde")]
    pub s_k: f64,
    #[serde(with = "crate::float_serde")]
    pub s_k_abs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthogonal_pair: Option<bool>,
    pub per_operator: Vec<f64>,
}

/// Both log-sensitivities of one controller against a set of operators.
pub fn sensitivity_record(
    controller: &Controller,
    reference: &str,
    operators: &[DephasingOperator],
    grid: &PerturbationGrid,
) -> Result<(SensitivityRecord, ErrorSurface)> {
    if operators.is_empty() {
        return Err(Error::InvalidInput("no dephasing operators".into()));
    }
    let analytic = AnalyticSensitivity::new(controller)?;
    let per_operator = operators
        .iter()
        .map(|op| analytic.per_operator(op))
        .collect::<Result<Vec<f64>>>()?;
    let s_a = per_operator.iter().sum::<f64>() / per_operator.len() as f64;
    let surface = build_error_surface(controller, operators, grid)?;
    let kde = kde_log_sensitivity(&surface, controller.nominal_error)?;
    Ok((
        SensitivityRecord {
            controller: reference.to_string(),
            nominal_error: controller.nominal_error,
            s_a,
            s_k: kde.signed,
            s_k_abs: kde.signed.abs(),
            smoothing: kde.smoothing,
            orthogonal_pair: None,
            per_operator,
        },
        surface,
    ))
}
