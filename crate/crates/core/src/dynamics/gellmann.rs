//! Orthonormal Hermitian basis of generalized Gell-Mann matrices.
//!
//! Order: symmetric family over pairs `j < k` (lexicographic), antisymmetric
//! family over the same pairs, diagonal family `l = 1..N-1`, then `I/√N` last.
//! Every element satisfies `Tr(σ_m σ_n) = δ_mn`.

use nalgebra::{DMatrix, DVector};

use crate::ring::C64;

/// Sparse `(row, col, value)` entries of one basis matrix.
pub type Entries = Vec<(usize, usize, C64)>;

#[derive(Debug, Clone)]
pub struct HermitianBasis {
    n: usize,
    elements: Vec<Entries>,
}

impl HermitianBasis {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "basis dimension must be positive");
        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let mut elements = Vec::with_capacity(n * n);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
            .collect();
        for &(j, k) in &pairs {
            elements.push(vec![(j, k, C64::new(r2, 0.0)), (k, j, C64::new(r2, 0.0))]);
        }
        for &(j, k) in &pairs {
            elements.push(vec![(j, k, C64::new(0.0, -r2)), (k, j, C64::new(0.0, r2))]);
        }
        for l in 1..n {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut e: Entries = (0..l).map(|i| (i, i, C64::new(norm, 0.0))).collect();
            e.push((l, l, C64::new(-(l as f64) * norm, 0.0)));
            elements.push(e);
        }
        let id = 1.0 / (n as f64).sqrt();
        elements.push((0..n).map(|i| (i, i, C64::new(id, 0.0))).collect());
        HermitianBasis { n, elements }
    }

    /// Matrix dimension `N`.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of basis elements, `N²`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn entries(&self, m: usize) -> &Entries {
        &self.elements[m]
    }

    pub fn dense(&self, m: usize) -> DMatrix<C64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.elements[m] {
            d[(i, j)] = v;
        }
        d
    }

    /// `r_m = Tr(ρ σ_m)`.
    pub fn vectorize(&self, rho: &DMatrix<C64>) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.elements.iter().map(|e| {
                e.iter()
                    .map(|&(i, j, v)| (rho[(j, i)] * v).re)
                    .sum::<f64>()
            }),
        )
    }

    /// `ρ = Σ_m r_m σ_m`.
    pub fn devectorize(&self, r: &DVector<f64>) -> DMatrix<C64> {
        let mut rho = DMatrix::zeros(self.n, self.n);
        for (e, &rm) in self.elements.iter().zip(r.iter()) {
            for &(i, j, v) in e {
                rho[(i, j)] += v * rm;
            }
        }
        rho
    }

    /// `Σ_i w_i (σ_k σ_l)_ii`.
    pub(crate) fn weighted_diag_product(&self, k: usize, l: usize, w: &[f64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(i, p, a) in &self.elements[k] {
            for &(q, r, b) in &self.elements[l] {
                if q == p && r == i {
                    acc += a * b * w[i];
                }
            }
        }
        acc
    }

    /// `Σ_{x,y} W_xy (σ_k)_xy (σ_l)_yx`.
    pub(crate) fn pair_weighted_product(&self, k: usize, l: usize, w: &DMatrix<f64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(x, y, a) in &self.elements[k] {
            for &(q, r, b) in &self.elements[l] {
                if q == y && r == x {
                    acc += a * b * w[(x, y)];
                }
            }
        }
        acc
    }
}
