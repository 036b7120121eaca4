//! Transfer fidelity between two pure states as an explicit sum over
//! eigenvector pairs.
//!
//! With `u_k = ⟨OUT|e_k⟩⟨e_k|IN⟩` and rates `γ_kl` indexed by eigenvector,
//!
//! ```text
//! F(T; δ) = Σ_kl b_kl exp(−δ T γ_kl),   b_kl = Re(u_k ū_l exp(−jω_kl T)).
//! ```
//!
//! This is the projector expansion contracted with `ρ_OUT`; it costs `O(N²)`
//! per evaluation and is what error surfaces are built from.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ring::{SpectralModel, StateVector, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct TransferKernel {
    readout_time: f64,
    overlaps: Vec<C64>,
    diagonal: f64,
    // Strict lower-triangle pairs (k, l, 2 b_kl), row by row.
    pairs: Vec<(usize, usize, f64)>,
}

impl TransferKernel {
    /// Nodes are 1-based site indices.
    pub fn new(model: &SpectralModel, in_node: usize, out_node: usize, readout_time: f64) -> Result<Self> {
        let n = model.dim();
        if in_node == 0 || in_node > n || out_node == 0 || out_node > n {
            return Err(Error::InvalidInput(format!("nodes ({in_node}, {out_node}) outside 1..={n}")));
        }
        let v = model.eigenvectors();
        let overlaps = (0..n)
            .map(|k| C64::new(v[(out_node - 1, k)] * v[(in_node - 1, k)], 0.0))
            .collect();
        Self::from_overlaps(model, overlaps, readout_time)
    }

    /// Arbitrary pure input and output states.
    pub fn from_states(
        model: &SpectralModel,
        input: &StateVector,
        output: &StateVector,
        readout_time: f64,
    ) -> Result<Self> {
        let n = model.dim();
        if input.dim() != n || output.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: if input.dim() != n { input.dim() } else { output.dim() },
                context: "transfer state",
            });
        }
        let v = model.eigenvectors();
        let overlaps = (0..n)
            .map(|k| {
                let e = v.column(k);
                let out: C64 = e.iter().zip(output.vector().iter()).map(|(a, b)| b.conj() * *a).sum();
                let inp: C64 = e.iter().zip(input.vector().iter()).map(|(a, b)| b * *a).sum();
                out * inp
            })
            .collect();
        Self::from_overlaps(model, overlaps, readout_time)
    }

    fn from_overlaps(model: &SpectralModel, overlaps: Vec<C64>, readout_time: f64) -> Result<Self> {
        if !(readout_time >= 0.0 && readout_time.is_finite()) {
            return Err(Error::InvalidInput(format!("readout time {readout_time}")));
        }
        let n = model.dim();
        let lambda = model.eigenvalues();
        let diagonal = overlaps.iter().map(|u| u.norm_sqr()).sum();
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for k in 1..n {
            for l in 0..k {
                let phase = C64::new(0.0, -(lambda[k] - lambda[l]) * readout_time).exp();
                pairs.push((k, l, 2.0 * (overlaps[k] * overlaps[l].conj() * phase).re));
            }
        }
        Ok(TransferKernel {
            readout_time,
            overlaps,
            diagonal,
            pairs,
        })
    }

    pub fn readout_time(&self) -> f64 {
        self.readout_time
    }

    /// `u_k = ⟨OUT|e_k⟩⟨e_k|IN⟩`.
    pub fn overlaps(&self) -> &[C64] {
        &self.overlaps
    }

    /// Full coefficient matrix `b_kl`.
    pub fn coefficients(&self) -> DMatrix<f64> {
        let n = self.overlaps.len();
        let mut b = DMatrix::zeros(n, n);
        for k in 0..n {
            b[(k, k)] = self.overlaps[k].norm_sqr();
        }
        for &(k, l, c) in &self.pairs {
            b[(k, l)] = 0.5 * c;
            b[(l, k)] = 0.5 * c;
        }
        b
    }

    pub fn nominal_fidelity(&self) -> f64 {
        self.diagonal + self.pairs.iter().map(|p| p.2).sum::<f64>()
    }

    pub fn nominal_error(&self) -> f64 {
        1.0 - self.nominal_fidelity()
    }

    /// Fidelity with eigenvector-indexed rates `γ` at strength `δ`.
    pub fn fidelity(&self, gamma: &DMatrix<f64>, delta: f64) -> f64 {
        let s = -delta * self.readout_time;
        self.diagonal
            + self
                .pairs
                .iter()
                .map(|&(k, l, c)| c * (s * gamma[(k, l)]).exp())
                .sum::<f64>()
    }

    /// Same as [`TransferKernel::fidelity`] for a strict lower triangle
    /// listed row by row.
    pub fn fidelity_lower(&self, gamma_lower: &[f64], delta: f64) -> f64 {
        let s = -delta * self.readout_time;
        self.diagonal
            + self
                .pairs
                .iter()
                .zip(gamma_lower)
                .map(|(&(_, _, c), g)| c * (s * g).exp())
                .sum::<f64>()
    }

    pub fn error(&self, gamma: &DMatrix<f64>, delta: f64) -> f64 {
        1.0 - self.fidelity(gamma, delta)
    }

    /// `∂e/∂δ` at `δ = 0`, i.e. `T Σ_kl b_kl γ_kl`.
    pub fn error_slope_lower(&self, gamma_lower: &[f64]) -> f64 {
        self.readout_time
            * self
                .pairs
                .iter()
                .zip(gamma_lower)
                .map(|(&(_, _, c), g)| c * g)
                .sum::<f64>()
    }

    /// Errors along a δ grid for one rate table.
    pub fn error_curve_lower(&self, gamma_lower: &[f64], deltas: &[f64]) -> Vec<f64> {
        deltas.iter().map(|&d| 1.0 - self.fidelity_lower(gamma_lower, d)).collect()
    }
}
