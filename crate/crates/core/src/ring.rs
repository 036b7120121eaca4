//! Ring Hamiltonians in the single-excitation subspace.
//!
//! A ring of `N` spins with uniform nearest-neighbour coupling `J` and static
//! control biases `D_n` on the diagonal. Node indices are 1-based everywhere in
//! the public API, matching how transfers are usually written (`1 -> 2`).

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;

/// Static controller description: ring size, coupling, biases, readout time and
/// the transfer endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RingSpecRepr", into = "RingSpecRepr")]
pub struct RingSpec {
    n: usize,
    // Uniform coupling. A per-edge table would replace this scalar if
    // non-uniform rings are ever needed.
    coupling: f64,
    biases: Vec<f64>,
    readout_time: f64,
    in_node: usize,
    out_node: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RingSpecRepr {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "J")]
    coupling: f64,
    #[serde(rename = "D")]
    biases: Vec<f64>,
    #[serde(rename = "T")]
    readout_time: f64,
    #[serde(rename = "in")]
    in_node: usize,
    #[serde(rename = "out")]
    out_node: usize,
}

impl TryFrom<RingSpecRepr> for RingSpec {
    type Error = Error;

    fn try_from(r: RingSpecRepr) -> Result<Self> {
        RingSpec::new(r.n, r.coupling, r.biases, r.readout_time, r.in_node, r.out_node)
    }
}

impl From<RingSpec> for RingSpecRepr {
    fn from(s: RingSpec) -> Self {
        RingSpecRepr {
            n: s.n,
            coupling: s.coupling,
            biases: s.biases,
            readout_time: s.readout_time,
            in_node: s.in_node,
            out_node: s.out_node,
        }
    }
}

impl RingSpec {
    pub fn new(
        n: usize,
        coupling: f64,
        biases: Vec<f64>,
        readout_time: f64,
        in_node: usize,
        out_node: usize,
    ) -> Result<Self> {
        let spec = RingSpec {
            n,
            coupling,
            biases,
            readout_time,
            in_node,
            out_node,
        };
        spec.validate(false)?;
        Ok(spec)
    }

    /// A spec with `in == out` and `T >= 0`, for diagnostics only.
    pub fn self_transfer(
        n: usize,
        coupling: f64,
        biases: Vec<f64>,
        readout_time: f64,
        node: usize,
    ) -> Result<Self> {
        let spec = RingSpec {
            n,
            coupling,
            biases,
            readout_time,
            in_node: node,
            out_node: node,
        };
        spec.validate(true)?;
        Ok(spec)
    }

    fn validate(&self, diagnostic: bool) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidSpec(format!("ring size {} < 3", self.n)));
        }
        if !self.coupling.is_finite() {
            return Err(Error::InvalidSpec("coupling is not finite".into()));
        }
        if self.biases.len() != self.n {
            return Err(Error::InvalidSpec(format!(
                "{} biases for a ring of {}",
                self.biases.len(),
                self.n
            )));
        }
        if let Some(k) = self.biases.iter().position(|d| !d.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "bias D_{} = {} is not finite",
                k + 1,
                self.biases[k]
            )));
        }
        let time_ok = if diagnostic {
            self.readout_time >= 0.0
        } else {
            self.readout_time > 0.0
        };
        if !time_ok || !self.readout_time.is_finite() {
            return Err(Error::InvalidSpec(format!(
                "readout time {} out of range",
                self.readout_time
            )));
        }
        for (name, node) in [("in", self.in_node), ("out", self.out_node)] {
            if node == 0 || node > self.n {
                return Err(Error::InvalidSpec(format!(
                    "{name} node {node} outside 1..={}",
                    self.n
                )));
            }
        }
        if !diagnostic && self.in_node == self.out_node {
            return Err(Error::InvalidSpec("in and out nodes coincide".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn readout_time(&self) -> f64 {
        self.readout_time
    }

    pub fn in_node(&self) -> usize {
        self.in_node
    }

    pub fn out_node(&self) -> usize {
        self.out_node
    }

    /// Same ring and transfer with different biases and readout time.
    pub fn with_controls(&self, biases: Vec<f64>, readout_time: f64) -> Result<Self> {
        let spec = RingSpec {
            biases,
            readout_time,
            ..self.clone()
        };
        spec.validate(self.in_node == self.out_node)?;
        Ok(spec)
    }
}

/// Real symmetric ring Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian(DMatrix<f64>);

impl Hamiltonian {
    /// Wraps an arbitrary symmetric matrix, e.g. `c·I` in tests.
    pub fn from_symmetric(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput("Hamiltonian must be square".into()));
        }
        let scale = m.amax().max(1.0);
        if (&m - m.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidInput("Hamiltonian is not symmetric".into()));
        }
        Ok(Hamiltonian(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

pub fn build_hamiltonian(spec: &RingSpec) -> Hamiltonian {
    let n = spec.n;
    let mut h = DMatrix::from_diagonal(&DVector::from_column_slice(&spec.biases));
    for k in 0..n {
        let l = (k + 1) % n;
        h[(k, l)] = spec.coupling;
        h[(l, k)] = spec.coupling;
    }
    Hamiltonian(h)
}

/// How close two eigenvalues must be to share a projector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DegeneracyTol {
    /// Multiple of `max |λ|`.
    Relative(f64),
    Absolute(f64),
}

impl Default for DegeneracyTol {
    fn default() -> Self {
        DegeneracyTol::Relative(1e-10)
    }
}

/// Eigenvalues, eigenvectors and grouped eigenprojectors of a Hamiltonian.
///
/// Eigenvalues are sorted ascending. Eigenvalues within the degeneracy
/// tolerance of their predecessor share a group; each group owns one
/// projector and one level (the group's mean eigenvalue).
#[derive(Debug, Clone)]
pub struct SpectralModel {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    groups: Vec<Range<usize>>,
    levels: Vec<f64>,
    projectors: Vec<DMatrix<f64>>,
}

pub fn spectral_decompose(h: &Hamiltonian, tol: DegeneracyTol) -> Result<SpectralModel> {
    let n = h.dim();
    let eig = h
        .0
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Eigen("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        eigenvectors.set_column(col, &eig.eigenvectors.column(i));
    }
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }

    let abs_tol = match tol {
        DegeneracyTol::Relative(r) => {
            r * eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
        }
        DegeneracyTol::Absolute(a) => a,
    };
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || eigenvalues[i] - eigenvalues[i - 1] > abs_tol {
            groups.push(start..i);
            start = i;
        }
    }
    Ok(SpectralModel::assemble(eigenvalues, eigenvectors, groups))
}

impl SpectralModel {
    fn assemble(eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>, groups: Vec<Range<usize>>) -> Self {
        let n = eigenvalues.len();
        let mut levels = Vec::with_capacity(groups.len());
        let mut projectors = Vec::with_capacity(groups.len());
        for g in &groups {
            levels.push(eigenvalues[g.clone()].iter().sum::<f64>() / g.len() as f64);
            let mut p = DMatrix::zeros(n, n);
            for i in g.clone() {
                let v = eigenvectors.column(i);
                p += v * v.transpose();
            }
            projectors.push(p);
        }
        SpectralModel {
            eigenvalues,
            eigenvectors,
            groups,
            levels,
            projectors,
        }
    }

    /// Hilbert-space dimension `N`.
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of projector groups.
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors as columns, in eigenvalue order.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn projectors(&self) -> &[DMatrix<f64>] {
        &self.projectors
    }

    /// Group index owning eigenvector `i`.
    pub fn group_of(&self, i: usize) -> usize {
        self.groups
            .iter()
            .position(|g| g.contains(&i))
            .expect("eigenvector index out of range")
    }

    /// Transition frequency `ω_kl = λ_k - λ_l` between groups.
    pub fn frequency(&self, k: usize, l: usize) -> f64 {
        self.levels[k] - self.levels[l]
    }

    pub fn frequencies(&self) -> DMatrix<f64> {
        let m = self.num_groups();
        DMatrix::from_fn(m, m, |k, l| self.frequency(k, l))
    }

    /// True when every group is one-dimensional.
    pub fn is_nondegenerate(&self) -> bool {
        self.groups.len() == self.dim()
    }

    /// One group per eigenvector, ignoring degeneracy. Rate tables indexed by
    /// eigenvector (the sampled dephasing operators) act on this resolution.
    pub fn split(&self) -> SpectralModel {
        let groups = (0..self.dim()).map(|i| i..i + 1).collect();
        SpectralModel::assemble(self.eigenvalues.clone(), self.eigenvectors.clone(), groups)
    }

    /// `Σ_k λ_k Π_k`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.levels
            .iter()
            .zip(&self.projectors)
            .fold(DMatrix::zeros(n, n), |acc, (l, p)| acc + p * *l)
    }
}

/// Pure state as a complex column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(DVector<C64>);

impl StateVector {
    pub fn new(v: DVector<C64>) -> Result<Self> {
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!("state norm {norm} != 1")));
        }
        Ok(StateVector(v))
    }

    pub fn vector(&self) -> &DVector<C64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix(&self.0 * self.0.adjoint())
    }
}

/// Localized excitation `|node⟩` on a ring of `n` spins.
pub fn basis_state(n: usize, node: usize) -> Result<StateVector> {
    if node == 0 || node > n {
        return Err(Error::InvalidInput(format!("node {node} outside 1..={n}")));
    }
    let mut v = DVector::zeros(n);
    v[node - 1] = C64::new(1.0, 0.0);
    Ok(StateVector(v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(DMatrix<C64>);

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity (eigenvalues ≥ −1e−10).
    pub fn new(m: DMatrix<C64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidInput("density matrix must be square".into()));
        }
        let rho = DensityMatrix(m);
        if (&rho.0 - rho.0.adjoint()).camax() > 1e-10 {
            return Err(Error::InvalidInput("density matrix is not Hermitian".into()));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!("trace {tr} != 1")));
        }
        let min = rho.min_eigenvalue();
        if min < -1e-10 {
            return Err(Error::InvalidInput(format!("negative eigenvalue {min}")));
        }
        Ok(rho)
    }

    /// Wraps without validation; used for propagated states whose invariants
    /// hold by construction up to rounding.
    pub fn from_matrix_unchecked(m: DMatrix<C64>) -> Self {
        DensityMatrix(m)
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityMatrix(DMatrix::identity(n, n) * C64::new(1.0 / n as f64, 0.0))
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        // Tr(ρρ) = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ.
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        herm.symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(*v))
    }
}
