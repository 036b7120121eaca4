//! Complete-positivity screening for pure-dephasing rate tables.
//!
//! Entrywise damping `ρ_kl ↦ exp(−tγ_kl) ρ_kl` is completely positive iff the
//! damping matrix `[exp(−tγ_kl)]` is positive semidefinite. The screen probes
//! a finite set of times and, optionally, the `t → 0⁺` limit, where the
//! condition becomes conditional negative definiteness of `γ` (which by
//! Schoenberg's theorem also implies the condition at every `t > 0`).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::DephasingRates;

/// Smallest eigenvalue accepted as nonnegative.
pub const PSD_TOL: f64 = 1e-10;

fn min_eigenvalue(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// `[exp(−tγ_kl)]_kl`.
pub fn hadamard_exponential(gamma: &DephasingRates, t: f64) -> DMatrix<f64> {
    gamma.matrix().map(|g| (-t * g).exp())
}

/// True iff the Hadamard exponential is PSD at every probe time.
pub fn cp_admissible(gamma: &DephasingRates, probe_times: &[f64]) -> bool {
    probe_times
        .iter()
        .all(|&t| min_eigenvalue(hadamard_exponential(gamma, t)) >= -PSD_TOL)
}

/// True iff `xᵀγx ≤ 0` for every `x` with `Σx = 0`, i.e. `−PγP ⪰ 0` with
/// `P = I − 11ᵀ/N`.
pub fn conditionally_negative_definite(gamma: &DephasingRates) -> bool {
    let n = gamma.dim();
    let p = DMatrix::<f64>::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
    let m = -(&p * gamma.matrix() * &p);
    let scale = gamma.matrix().amax().max(1.0);
    min_eigenvalue(m) >= -PSD_TOL * scale
}

/// Screen applied by the pool generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CpScreen {
    pub probe_times: Vec<f64>,
    /// Also require the small-time (conditionally negative definite) limit.
    pub small_time_limit: bool,
}

impl Default for CpScreen {
    fn default() -> Self {
        CpScreen {
            probe_times: default_probe_times(),
            small_time_limit: true,
        }
    }
}

/// Nine log-spaced times from 10⁻² to 10².
pub fn default_probe_times() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-2.0 + 0.5 * i as f64)).collect()
}

impl CpScreen {
    pub fn admits(&self, gamma: &DephasingRates) -> bool {
        (!self.small_time_limit || conditionally_negative_definite(gamma))
            && cp_admissible(gamma, &self.probe_times)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rates_are_admissible() {
        let g = DephasingRates::zero(4);
        assert!(cp_admissible(&g, &default_probe_times()));
        assert!(CpScreen::default().admits(&g));
    }

    #[test]
    fn operator_derived_rates_are_admissible() {
        // γ_kl = (c_k − c_l)²/2 is a squared distance, hence CND.
        let c = [0.3, -1.2, 2.0, 0.9, 0.0];
        let m = DMatrix::from_fn(5, 5, |k, l| 0.5 * (c[k] - c[l]) * (c[k] - c[l]));
        let g = DephasingRates::new(m).unwrap();
        assert!(cp_admissible(&g, &[1e-3, 0.1, 1.0, 10.0, 1e3]));
        assert!(conditionally_negative_definite(&g));
    }

    #[test]
    fn three_level_violation() {
        // γ_12 = γ_13 = 0, γ_23 = 1: det[exp(−tγ)] = −(1 − e^{−t})² < 0.
        let g = DephasingRates::from_lower(3, &[0.0, 0.0, 1.0]).unwrap();
        for t in [0.1, 1.0, 10.0] {
            let m = hadamard_exponential(&g, t);
            let det = m.determinant();
            let expected = -(1.0 - (-t).exp()).powi(2);
            assert!((det - expected).abs() < 1e-12);
            assert!(!cp_admissible(&g, &[t]));
        }
        assert!(!conditionally_negative_definite(&g));
    }

    #[test]
    fn probe_grid() {
        let t = default_probe_times();
        assert_eq!(t.len(), 9);
        assert!((t[0] - 0.01).abs() < 1e-15 && (t[8] - 100.0).abs() < 1e-12);
    }
}
