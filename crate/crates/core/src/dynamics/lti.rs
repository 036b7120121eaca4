//! Vectorized linear time-invariant form `ṙ = (A + L) r`.
//!
//! States are expressed in the Hamiltonian eigenbasis (`ρ̃ = Uᵀ ρ U`) and
//! expanded in the Gell-Mann basis of [`HermitianBasis`]. `A` carries the
//! commutator with the diagonal eigenvalue matrix; `L` carries dephasing.

use nalgebra::{DMatrix, DVector};

use super::gellmann::HermitianBasis;
use super::DephasingRates;
use crate::error::{Error, Result};
use crate::expm::expm;
use crate::ring::{DensityMatrix, SpectralModel, C64};

#[derive(Debug, Clone)]
pub struct LtiSystem {
    liouville: DMatrix<f64>,
    lindblad: DMatrix<f64>,
    basis: HermitianBasis,
    rotation: DMatrix<f64>,
}

fn liouville_matrix(model: &SpectralModel, basis: &HermitianBasis) -> DMatrix<f64> {
    let lambda = model.eigenvalues();
    let n2 = basis.len();
    DMatrix::from_fn(n2, n2, |k, l| {
        // Tr(jΛ[σ_k, σ_l])
        let c = basis.weighted_diag_product(k, l, lambda) - basis.weighted_diag_product(l, k, lambda);
        (C64::new(0.0, 1.0) * c).re
    })
}

/// Per-eigenvector expansion of a per-group table.
fn expand_groups(model: &SpectralModel, per_group: &[f64]) -> Vec<f64> {
    (0..model.dim()).map(|i| per_group[model.group_of(i)]).collect()
}

/// Dephasing generator from the eigenvalues `c_k` of a commuting Lindblad
/// operator: `L_kl = Tr(Cσ_kCσ_l) − ½ Tr(C²{σ_k, σ_l})`.
fn lindblad_from_operator(model: &SpectralModel, basis: &HermitianBasis, c: &[f64]) -> DMatrix<f64> {
    let ce = expand_groups(model, c);
    let c2: Vec<f64> = ce.iter().map(|x| x * x).collect();
    let outer = DMatrix::from_fn(ce.len(), ce.len(), |i, j| ce[i] * ce[j]);
    let n2 = basis.len();
    DMatrix::from_fn(n2, n2, |k, l| {
        let sandwich = basis.pair_weighted_product(k, l, &outer);
        let anti = basis.weighted_diag_product(k, l, &c2) + basis.weighted_diag_product(l, k, &c2);
        (sandwich - anti * 0.5).re
    })
}

/// Matrix of the superoperator `ρ̃ ↦ −γ ∘ ρ̃` (entrywise damping) in the
/// Gell-Mann basis. `gamma` is indexed by eigenvector.
pub fn perturbation_matrix(basis: &HermitianBasis, gamma: &DMatrix<f64>) -> DMatrix<f64> {
    let neg = -gamma;
    let n2 = basis.len();
    DMatrix::from_fn(n2, n2, |k, l| basis.pair_weighted_product(k, l, &neg).re)
}

/// Applies `−γ ∘ ·` to a vectorized state without forming the matrix.
pub fn apply_perturbation(basis: &HermitianBasis, gamma: &DMatrix<f64>, r: &DVector<f64>) -> DVector<f64> {
    let rho = basis.devectorize(r);
    let damped = DMatrix::from_fn(rho.nrows(), rho.ncols(), |i, j| rho[(i, j)] * -gamma[(i, j)]);
    basis.vectorize(&damped)
}

/// Rate table expanded from projector groups to eigenvector indices.
pub fn eigenvector_rates(model: &SpectralModel, rates: &DephasingRates) -> Result<DMatrix<f64>> {
    if rates.dim() != model.num_groups() {
        return Err(Error::DimensionMismatch {
            expected: model.num_groups(),
            actual: rates.dim(),
            context: "rate table vs projector groups",
        });
    }
    let n = model.dim();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        rates.matrix()[(model.group_of(i), model.group_of(j))]
    }))
}

/// LTI system with dephasing given by the eigenvalues `c` (one per projector
/// group) of a Hermitian Lindblad operator commuting with the Hamiltonian.
pub fn build_lti(model: &SpectralModel, c: &[f64]) -> Result<LtiSystem> {
    if c.len() != model.num_groups() {
        return Err(Error::DimensionMismatch {
            expected: model.num_groups(),
            actual: c.len(),
            context: "dephasing eigenvalues vs projector groups",
        });
    }
    let basis = HermitianBasis::new(model.dim());
    Ok(LtiSystem {
        liouville: liouville_matrix(model, &basis),
        lindblad: lindblad_from_operator(model, &basis, c),
        rotation: model.eigenvectors().clone(),
        basis,
    })
}

/// LTI system with dephasing given directly as a rate table.
pub fn build_lti_with_rates(model: &SpectralModel, rates: &DephasingRates) -> Result<LtiSystem> {
    let gamma = eigenvector_rates(model, rates)?;
    let basis = HermitianBasis::new(model.dim());
    Ok(LtiSystem {
        liouville: liouville_matrix(model, &basis),
        lindblad: perturbation_matrix(&basis, &gamma),
        rotation: model.eigenvectors().clone(),
        basis,
    })
}

impl LtiSystem {
    /// `A`.
    pub fn liouville(&self) -> &DMatrix<f64> {
        &self.liouville
    }

    /// `L`.
    pub fn lindblad(&self) -> &DMatrix<f64> {
        &self.lindblad
    }

    pub fn basis(&self) -> &HermitianBasis {
        &self.basis
    }

    pub fn generator(&self) -> DMatrix<f64> {
        &self.liouville + &self.lindblad
    }

    /// Vectorizes a site-basis density matrix in the Hamiltonian basis.
    pub fn vectorize(&self, rho: &DensityMatrix) -> DVector<f64> {
        let u = self.rotation.map(|x| C64::new(x, 0.0));
        let tilde = u.transpose() * rho.matrix() * &u;
        self.basis.vectorize(&tilde)
    }

    /// Inverse of [`LtiSystem::vectorize`], back to the site basis.
    pub fn devectorize(&self, r: &DVector<f64>) -> DensityMatrix {
        let u = self.rotation.map(|x| C64::new(x, 0.0));
        let tilde = self.basis.devectorize(r);
        DensityMatrix::from_matrix_unchecked(&u * tilde * u.transpose())
    }

    /// Output row vector `c` with `c·r = Tr(ρ_OUT ρ)`.
    pub fn output_functional(&self, rho_out: &DensityMatrix) -> DVector<f64> {
        self.vectorize(rho_out)
    }

    /// Same system with `L` replaced.
    pub fn with_lindblad(&self, lindblad: DMatrix<f64>) -> LtiSystem {
        LtiSystem {
            lindblad,
            ..self.clone()
        }
    }
}

/// `r(t) = exp(t(A + L)) r_0`.
pub fn evolve_lti(sys: &LtiSystem, r0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidInput(format!("time {t} must be finite and ≥ 0")));
    }
    if r0.len() != sys.basis.len() {
        return Err(Error::DimensionMismatch {
            expected: sys.basis.len(),
            actual: r0.len(),
            context: "vectorized state",
        });
    }
    if t == 0.0 {
        return Ok(r0.clone());
    }
    let prop = expm(&(sys.generator() * t))?;
    Ok(prop * r0)
}
