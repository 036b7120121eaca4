//! Correlation hypothesis tests and the orthogonal-pair classifier.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::ring::{basis_state, SpectralModel, StateVector, C64};
use crate::sensitivity::SensitivityRecord;
use crate::synthesis::Controller;

/// Significance level used throughout.
pub const DEFAULT_ALPHA: f64 = 0.02;

/// Smallest sample for which the normal approximation is trusted.
pub const KENDALL_MIN_N: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Left,
    Right,
}

/// Standard normal CDF `Φ(z) = ½ erfc(−z/√2)`.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_tail(z: f64, tail: Tail) -> f64 {
    match tail {
        Tail::Left => normal_cdf(z),
        Tail::Right => normal_cdf(-z),
    }
}

/// Student-t CDF with `nu` degrees of freedom via the regularized incomplete
/// beta function; both tails are computed without cancellation.
pub fn student_t_cdf(t: f64, nu: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let lower = 0.5 * beta_reg(nu / 2.0, 0.5, nu / (nu + t * t));
    if t <= 0.0 {
        lower
    } else {
        1.0 - lower
    }
}

fn student_t_tail(t: f64, nu: f64, tail: Tail) -> f64 {
    match tail {
        Tail::Left => student_t_cdf(t, nu),
        Tail::Right => student_t_cdf(-t, nu),
    }
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
            context: "paired samples",
        });
    }
    if x.len() < min {
        return Err(Error::InvalidInput(format!("{} samples; need ≥ {min}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }
    Ok(())
}

/// Kendall τ-b, counting all pairs.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.len();
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = (x[i] - x[j]).partial_cmp(&0.0).expect("finite");
            let dy = (y[i] - y[j]).partial_cmp(&0.0).expect("finite");
            use std::cmp::Ordering::Equal;
            match (dx, dy) {
                (Equal, Equal) => {}
                (Equal, _) => tie_x += 1,
                (_, Equal) => tie_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let nx = (concordant + discordant + tie_y) as f64;
    let ny = (concordant + discordant + tie_x) as f64;
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::Undefined("Kendall τ of a constant sample".into()));
    }
    Ok((concordant - discordant) as f64 / (nx * ny).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestStatistic {
    #[serde(with = "crate::float_serde")]
    pub statistic: f64,
    pub p: f64,
    /// Set when the sample is too small for the approximation used.
    pub small_sample: bool,
}

/// `Z_τ = τ / √(2(2n + 5) / (9n(n − 1)))` with a normal tail probability.
pub fn kendall_test(tau: f64, n: usize, tail: Tail) -> TestStatistic {
    let nf = n as f64;
    let z = tau / (2.0 * (2.0 * nf + 5.0) / (9.0 * nf * (nf - 1.0))).sqrt();
    TestStatistic {
        statistic: z,
        p: normal_tail(z, tail),
        small_sample: n < KENDALL_MIN_N,
    }
}

/// Pearson product-moment correlation.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 3)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("Pearson r of a constant sample".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// `t_r = r / √((1 − r²)/(n − 2))` with a Student-t tail on `n − 2` degrees
/// of freedom.
pub fn pearson_test(r: f64, n: usize, tail: Tail) -> TestStatistic {
    let nu = n as f64 - 2.0;
    let t = if r.abs() >= 1.0 {
        r.signum() * f64::INFINITY
    } else {
        r / ((1.0 - r * r) / nu).sqrt()
    };
    TestStatistic {
        statistic: t,
        p: student_t_tail(t, nu, tail),
        small_sample: n < 3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    /// `s_a` against `|s_k|`, right tail.
    SaVsSk,
    /// `log₁₀ s_a` against `log₁₀ e(T)`, left tail.
    LogSaVsLogError,
    /// `log₁₀ |s_k|` against `log₁₀ e(T)`, left tail.
    LogSkVsLogError,
}

impl PairKind {
    pub fn tail(self) -> Tail {
        match self {
            PairKind::SaVsSk => Tail::Right,
            _ => Tail::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    RejectH0,
    AcceptH0,
}

impl Decision {
    fn at(p: f64, alpha: f64) -> Self {
        if p < alpha {
            Decision::RejectH0
        } else {
            Decision::AcceptH0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTest {
    pub kind: PairKind,
    pub tail: Tail,
    pub n: usize,
    pub tau: f64,
    #[serde(with = "crate::float_serde")]
    pub z_tau: f64,
    pub p_tau: f64,
    pub r: f64,
    /// Infinite when `|r| = 1`.
    #[serde(with = "crate::float_serde")]
    pub t_r: f64,
    pub p_r: f64,
    pub alpha: f64,
    pub decision_tau: Decision,
    pub decision_r: Decision,
    pub small_sample: bool,
}

/// Both tests on one pair of samples.
pub fn correlation_test(kind: PairKind, x: &[f64], y: &[f64], alpha: f64) -> Result<CorrelationTest> {
    let tail = kind.tail();
    let tau = kendall_tau(x, y)?;
    let r = pearson_r(x, y)?;
    let kt = kendall_test(tau, x.len(), tail);
    let pt = pearson_test(r, x.len(), tail);
    Ok(CorrelationTest {
        kind,
        tail,
        n: x.len(),
        tau,
        z_tau: kt.statistic,
        p_tau: kt.p,
        r,
        t_r: pt.statistic,
        p_r: pt.p,
        alpha,
        decision_tau: Decision::at(kt.p, alpha),
        decision_r: Decision::at(pt.p, alpha),
        small_sample: kt.small_sample,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSuite {
    pub tests: Vec<CorrelationTest>,
    /// Records dropped for `e(T) = 0`.
    pub excluded_zero_error: usize,
    /// Per test, records dropped for a zero sensitivity on a log axis.
    pub excluded_zero_sensitivity: Vec<usize>,
}

/// Concordance of the two sensitivities and their trends against `e(T)`.
pub fn run_trend_suite(records: &[SensitivityRecord], alpha: f64) -> Result<TrendSuite> {
    let valid: Vec<&SensitivityRecord> = records.iter().filter(|r| r.nominal_error > 0.0).collect();
    let excluded_zero_error = records.len() - valid.len();
    if valid.len() < KENDALL_MIN_N {
        return Err(Error::InsufficientPopulation {
            requested: KENDALL_MIN_N,
            available: valid.len(),
        });
    }
    let mut tests = Vec::new();
    let mut excluded = Vec::new();

    let sa: Vec<f64> = valid.iter().map(|r| r.s_a).collect();
    let sk: Vec<f64> = valid.iter().map(|r| r.s_k_abs).collect();
    tests.push(correlation_test(PairKind::SaVsSk, &sa, &sk, alpha)?);
    excluded.push(0);

    for (kind, pick) in [
        (PairKind::LogSaVsLogError, (|r: &SensitivityRecord| r.s_a) as fn(&SensitivityRecord) -> f64),
        (PairKind::LogSkVsLogError, |r: &SensitivityRecord| r.s_k_abs),
    ] {
        let kept: Vec<&&SensitivityRecord> = valid.iter().filter(|r| pick(r) > 0.0).collect();
        excluded.push(valid.len() - kept.len());
        let x: Vec<f64> = kept.iter().map(|r| pick(r).log10()).collect();
        let y: Vec<f64> = kept.iter().map(|r| r.nominal_error.log10()).collect();
        tests.push(correlation_test(kind, &x, &y, alpha)?);
    }
    Ok(TrendSuite {
        tests,
        excluded_zero_error,
        excluded_zero_sensitivity: excluded,
    })
}

/// Default tolerance on overlap mass for the orthogonal-pair test.
pub const PAIR_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalPairVerdict {
    pub is_orthogonal_pair: bool,
    /// `⟨IN|Π_k|IN⟩` per eigenprojector.
    pub input_support: Vec<f64>,
    /// `⟨OUT|Π_k|OUT⟩` per eigenprojector.
    pub output_support: Vec<f64>,
    /// Projector indices of the two best-supported levels.
    pub pair: (usize, usize),
    pub tolerance: f64,
}

fn projector_overlap(p: &nalgebra::DMatrix<f64>, a: &StateVector, b: &StateVector) -> C64 {
    let pc = p.map(|x| C64::new(x, 0.0));
    (a.vector().adjoint() * pc * b.vector())[(0, 0)]
}

/// Orthogonal-pair test for arbitrary pure states against the eigenprojectors
/// of `model` (basis-free under degeneracy).
pub fn classify_states(
    model: &SpectralModel,
    input: &StateVector,
    output: &StateVector,
    tol: f64,
) -> Result<OrthogonalPairVerdict> {
    if input.dim() != model.dim() || output.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: input.dim().min(output.dim()),
            context: "classified state",
        });
    }
    let projectors = model.projectors();
    let p: Vec<f64> = projectors.iter().map(|pk| projector_overlap(pk, input, input).re).collect();
    let q: Vec<f64> = projectors.iter().map(|pk| projector_overlap(pk, output, output).re).collect();
    let pair = if projectors.len() < 2 {
        (0, 0)
    } else {
        let mut order: Vec<usize> = (0..projectors.len()).collect();
        order.sort_by(|&a, &b| (p[b] + q[b]).total_cmp(&(p[a] + q[a])).then(a.cmp(&b)));
        let (a, b) = (order[0], order[1]);
        (a.min(b), a.max(b))
    };
    let (a, b) = pair;
    let is_pair = projectors.len() >= 2 && {
        let half = |v: f64| (v - 0.5).abs() <= tol;
        let coherence = projector_overlap(&(&projectors[a] + &projectors[b]), input, output).norm();
        p[a] + p[b] >= 1.0 - tol
            && q[a] + q[b] >= 1.0 - tol
            && half(p[a])
            && half(p[b])
            && half(q[a])
            && half(q[b])
            && coherence <= tol
    };
    Ok(OrthogonalPairVerdict {
        is_orthogonal_pair: is_pair,
        input_support: p,
        output_support: q,
        pair,
        tolerance: tol,
    })
}

/// Orthogonal-pair test for a controller's site-basis endpoints.
pub fn classify_orthogonal_pair(controller: &Controller, tol: f64) -> Result<OrthogonalPairVerdict> {
    let model = controller.model()?;
    let n = controller.spec.n();
    classify_states(
        &model,
        &basis_state(n, controller.spec.in_node())?,
        &basis_state(n, controller.spec.out_node())?,
        tol,
    )
}
