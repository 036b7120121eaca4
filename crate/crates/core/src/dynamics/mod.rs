//! State propagation under unitary and Hamiltonian-basis dephasing dynamics.
//!
//! Two independent routes are provided. The projector route evaluates the
//! closed-form solution
//!
//! ```text
//! ρ(t) = Σ_kl exp(−t(jω_kl + γ_kl)) Π_k ρ_0 Π_l
//! ```
//!
//! directly. The [`lti`] route vectorizes the master equation in a Gell-Mann
//! basis and exponentiates the generator. `ħ = 1` throughout.

pub mod gellmann;
pub mod lti;
pub mod transfer;

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ring::{DensityMatrix, SpectralModel, StateVector, C64};

pub use lti::{
    apply_perturbation, build_lti, build_lti_with_rates, eigenvector_rates, evolve_lti, perturbation_matrix, LtiSystem,
};
pub use transfer::TransferKernel;

/// Symmetric, nonnegative, zero-diagonal dephasing rates `γ_kl` indexed by
/// projector group.
#[derive(Debug, Clone, PartialEq)]
pub struct DephasingRates(DMatrix<f64>);

impl DephasingRates {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput("rate table must be square".into()));
        }
        let n = m.nrows();
        for k in 0..n {
            if m[(k, k)] != 0.0 {
                return Err(Error::InvalidInput(format!("γ_{k}{k} = {} ≠ 0", m[(k, k)])));
            }
            for l in 0..n {
                let g = m[(k, l)];
                if !g.is_finite() || g < 0.0 {
                    return Err(Error::InvalidInput(format!("γ_{k}{l} = {g} must be finite and ≥ 0")));
                }
                if g != m[(l, k)] {
                    return Err(Error::InvalidInput("rate table is not symmetric".into()));
                }
            }
        }
        Ok(DephasingRates(m))
    }

    pub fn zero(n: usize) -> Self {
        DephasingRates(DMatrix::zeros(n, n))
    }

    /// Symmetric extension of a strict lower triangle listed row by row:
    /// `(2,1), (3,1), (3,2), (4,1), …`.
    pub fn from_lower(n: usize, lower: &[f64]) -> Result<Self> {
        if lower.len() != n * (n - 1) / 2 {
            return Err(Error::DimensionMismatch {
                expected: n * (n - 1) / 2,
                actual: lower.len(),
                context: "strict lower triangle",
            });
        }
        let mut m = DMatrix::zeros(n, n);
        let mut it = lower.iter();
        for k in 1..n {
            for l in 0..k {
                let g = *it.next().unwrap();
                m[(k, l)] = g;
                m[(l, k)] = g;
            }
        }
        DephasingRates::new(m)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn scaled(&self, delta: f64) -> DephasingRates {
        DephasingRates(&self.0 * delta)
    }
}

/// `γ_kl = (c_k − c_l)² / 2` for a Lindblad operator `V = Σ_k c_k Π_k`.
pub fn rates_from_dephasing_operator(model: &SpectralModel, c: &[f64]) -> Result<DephasingRates> {
    let m = model.num_groups();
    if c.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: c.len(),
            context: "dephasing eigenvalues vs projector groups",
        });
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite dephasing eigenvalue".into()));
    }
    DephasingRates::new(DMatrix::from_fn(m, m, |k, l| 0.5 * (c[k] - c[l]).powi(2)))
}

fn complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|x| C64::new(x, 0.0))
}

/// Closed-form propagation through the projector expansion.
pub fn evolve_projector(
    model: &SpectralModel,
    rho0: &DensityMatrix,
    gamma: &DephasingRates,
    t: f64,
) -> Result<DensityMatrix> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time {t} must be finite and ≥ 0")));
    }
    let m = model.num_groups();
    if gamma.dim() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: gamma.dim(),
            context: "rate table vs projector groups",
        });
    }
    if rho0.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: rho0.dim(),
            context: "density matrix",
        });
    }
    let projectors: Vec<DMatrix<C64>> = model.projectors().iter().map(complex).collect();
    let left: Vec<DMatrix<C64>> = projectors.iter().map(|p| p * rho0.matrix()).collect();
    let n = model.dim();
    let mut rho = DMatrix::zeros(n, n);
    for (k, lk) in left.iter().enumerate() {
        for (l, pl) in projectors.iter().enumerate() {
            let w = model.frequency(k, l);
            let g = gamma.matrix()[(k, l)];
            let factor = C64::new(-t * g, -t * w).exp();
            rho += (lk * pl) * factor;
        }
    }
    Ok(DensityMatrix::from_matrix_unchecked(rho))
}

/// Decoherent steady state `Σ_k Π_k ρ_0 Π_k`.
pub fn steady_state(model: &SpectralModel, rho0: &DensityMatrix) -> DensityMatrix {
    let n = model.dim();
    let rho = model.projectors().iter().map(complex).fold(DMatrix::zeros(n, n), |acc, p| {
        acc + &p * rho0.matrix() * &p
    });
    DensityMatrix::from_matrix_unchecked(rho)
}

/// `exp(−iHt)|ψ⟩` through the eigenvectors, independent of projector grouping.
pub fn propagate_pure(model: &SpectralModel, psi: &StateVector, t: f64) -> StateVector {
    let u = complex(model.eigenvectors());
    let coeffs = u.transpose() * psi.vector();
    let phased = DVector::from_iterator(
        coeffs.len(),
        coeffs
            .iter()
            .zip(model.eigenvalues())
            .map(|(c, &lam)| c * C64::new(0.0, -lam * t).exp()),
    );
    StateVector::new(&u * phased).expect("unitary propagation preserves the norm")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fidelity {
    pub fidelity: f64,
    pub error: f64,
}

/// `F = Tr(ρ_OUT ρ)` and `e = 1 − F`.
pub fn fidelity(rho: &DensityMatrix, rho_out: &DensityMatrix) -> Fidelity {
    let f = (rho_out.matrix() * rho.matrix()).trace().re;
    Fidelity {
        fidelity: f,
        error: 1.0 - f,
    }
}

/// Sampled fidelity, error and purity along a caller-provided time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub fidelity: Vec<f64>,
    pub purity: Vec<f64>,
}

pub fn sample_trajectory(
    model: &SpectralModel,
    rho0: &DensityMatrix,
    rho_out: &DensityMatrix,
    gamma: &DephasingRates,
    times: &[f64],
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        states.push(evolve_projector(model, rho0, gamma, t)?);
    }
    let fid = states.iter().map(|s| fidelity(s, rho_out).fidelity).collect();
    let purity = states.iter().map(DensityMatrix::purity).collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        fidelity: fid,
        purity,
    })
}

impl Trajectory {
    /// CSV with columns `t,F,e,purity`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,F,e,purity")?;
        for ((t, f), p) in self.times.iter().zip(&self.fidelity).zip(&self.purity) {
            writeln!(w, "{t},{f},{},{p}", 1.0 - f)?;
        }
        Ok(())
    }
}
