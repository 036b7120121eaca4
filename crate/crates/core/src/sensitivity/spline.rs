//! Cubic smoothing spline (Reinsch form) with the smoothing parameter chosen
//! by generalized cross-validation.
//!
//! For knots `x_1 < … < x_n` the fitted values `g` and interior second
//! derivatives `γ` solve
//!
//! ```text
//! (R + λ QᵀQ) γ = Qᵀ y,     g = y − λ Q γ,
//! ```
//!
//! with `Q` (n × n−2) and `R` (n−2 × n−2) the usual banded matrices. The GCV
//! score `n·RSS / tr(I − A)²` needs `tr(B⁻¹QᵀQ)`, which only touches the
//! central band of `B⁻¹`; that band comes from the LDLᵀ factors.

use crate::error::{Error, Result};

/// Symmetric matrix with half-bandwidth 2, stored by diagonals.
#[derive(Debug, Clone)]
struct Band5 {
    d0: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Band5 {
    fn zeros(m: usize) -> Self {
        Band5 {
            d0: vec![0.0; m],
            d1: vec![0.0; m.saturating_sub(1)],
            d2: vec![0.0; m.saturating_sub(2)],
        }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        match b - a {
            0 => self.d0[a],
            1 => self.d1[a],
            2 => self.d2[a],
            _ => 0.0,
        }
    }

    fn combine(&self, other: &Band5, lambda: f64) -> Band5 {
        let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + lambda * y).collect();
        Band5 {
            d0: f(&self.d0, &other.d0),
            d1: f(&self.d1, &other.d1),
            d2: f(&self.d2, &other.d2),
        }
    }
}

/// `B = L D Lᵀ` with unit lower-triangular `L` of bandwidth 2.
struct Ldl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl Ldl {
    fn factor(b: &Band5) -> Result<Self> {
        let m = b.d0.len();
        let mut d = vec![0.0; m];
        let mut l1 = vec![0.0; m.saturating_sub(1)];
        let mut l2 = vec![0.0; m.saturating_sub(2)];
        for i in 0..m {
            let mut di = b.d0[i];
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            if di <= 0.0 || !di.is_finite() {
                return Err(Error::Undefined("smoothing system is not positive definite".into()));
            }
            d[i] = di;
            if i + 1 < m {
                let mut v = b.d1[i];
                if i >= 1 {
                    v -= l2[i - 1] * l1[i - 1] * d[i - 1];
                }
                l1[i] = v / di;
            }
            if i + 2 < m {
                l2[i] = b.d2[i] / di;
            }
        }
        Ok(Ldl { d, l1, l2 })
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = self.d.len();
        let mut z = rhs.to_vec();
        for i in 0..m {
            if i >= 1 {
                z[i] -= self.l1[i - 1] * z[i - 1];
            }
            if i >= 2 {
                z[i] -= self.l2[i - 2] * z[i - 2];
            }
        }
        for (zi, di) in z.iter_mut().zip(&self.d) {
            *zi /= di;
        }
        for i in (0..m).rev() {
            if i + 1 < m {
                z[i] -= self.l1[i] * z[i + 1];
            }
            if i + 2 < m {
                z[i] -= self.l2[i] * z[i + 2];
            }
        }
        z
    }

    /// Central band (half-bandwidth 2) of `B⁻¹`.
    fn inverse_band(&self) -> Band5 {
        let m = self.d.len();
        let mut s = Band5::zeros(m);
        let l = |k: usize, i: usize| -> f64 {
            match k - i {
                1 => self.l1[i],
                2 => self.l2[i],
                _ => 0.0,
            }
        };
        for i in (0..m).rev() {
            let hi = (i + 2).min(m - 1);
            for j in (i + 1..=hi).rev() {
                let mut v = 0.0;
                for k in i + 1..=hi {
                    v -= l(k, i) * s.get(k, j);
                }
                if j == i + 1 {
                    s.d1[i] = v;
                } else {
                    s.d2[i] = v;
                }
            }
            let mut v = 1.0 / self.d[i];
            for k in i + 1..=hi {
                v -= l(k, i) * s.get(k, i);
            }
            s.d0[i] = v;
        }
        s
    }
}

/// Knot-dependent pieces shared by every smoothing level.
struct Design {
    h: Vec<f64>,
    r: Band5,
    qtq: Band5,
}

impl Design {
    fn new(x: &[f64]) -> Result<Self> {
        let n = x.len();
        if n < 3 {
            return Err(Error::InvalidInput(format!("{n} knots; a smoothing spline needs ≥ 3")));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        if h.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidInput("knots must be finite and strictly increasing".into()));
        }
        let m = n - 2;
        let mut r = Band5::zeros(m);
        for j in 0..m {
            r.d0[j] = (h[j] + h[j + 1]) / 3.0;
            if j + 1 < m {
                r.d1[j] = h[j + 1] / 6.0;
            }
        }
        // Column j of Q has entries at rows j, j+1, j+2.
        let col = |j: usize| [1.0 / h[j], -1.0 / h[j] - 1.0 / h[j + 1], 1.0 / h[j + 1]];
        let mut qtq = Band5::zeros(m);
        for j in 0..m {
            let a = col(j);
            qtq.d0[j] = a.iter().map(|v| v * v).sum();
            if j + 1 < m {
                let b = col(j + 1);
                qtq.d1[j] = a[1] * b[0] + a[2] * b[1];
            }
            if j + 2 < m {
                let c = col(j + 2);
                qtq.d2[j] = a[2] * c[0];
            }
        }
        Ok(Design { h, r, qtq })
    }

    fn qt(&self, y: &[f64]) -> Vec<f64> {
        (0..self.h.len() - 1)
            .map(|j| (y[j + 2] - y[j + 1]) / self.h[j + 1] - (y[j + 1] - y[j]) / self.h[j])
            .collect()
    }

    fn q(&self, gamma: &[f64]) -> Vec<f64> {
        let n = self.h.len() + 1;
        let mut out = vec![0.0; n];
        for (j, g) in gamma.iter().enumerate() {
            out[j] += g / self.h[j];
            out[j + 1] -= g * (1.0 / self.h[j] + 1.0 / self.h[j + 1]);
            out[j + 2] += g / self.h[j + 1];
        }
        out
    }

    fn fit(&self, y: &[f64], lambda: f64) -> Result<(SmoothingSpline, f64)> {
        let b = self.r.combine(&self.qtq, lambda);
        let ldl = Ldl::factor(&b)?;
        let gamma = ldl.solve(&self.qt(y));
        let qg = self.q(&gamma);
        let values: Vec<f64> = y.iter().zip(&qg).map(|(yi, q)| yi - lambda * q).collect();
        let inv = ldl.inverse_band();
        let m = gamma.len();
        let mut trace = 0.0;
        for i in 0..m {
            trace += inv.d0[i] * self.qtq.d0[i];
            if i + 1 < m {
                trace += 2.0 * inv.d1[i] * self.qtq.d1[i];
            }
            if i + 2 < m {
                trace += 2.0 * inv.d2[i] * self.qtq.d2[i];
            }
        }
        let n = y.len() as f64;
        let rss: f64 = qg.iter().map(|q| (lambda * q).powi(2)).sum();
        let free = lambda * trace;
        let gcv = n * rss / (free * free);
        let mut second = Vec::with_capacity(m + 2);
        second.push(0.0);
        second.extend_from_slice(&gamma);
        second.push(0.0);
        Ok((
            SmoothingSpline {
                knots: Vec::new(),
                values,
                second_derivatives: second,
                lambda,
            },
            gcv,
        ))
    }
}

/// A fitted natural cubic spline.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second_derivatives: Vec<f64>,
    lambda: f64,
}

impl SmoothingSpline {
    /// Fit with a fixed smoothing parameter.
    pub fn fit(x: &[f64], y: &[f64], lambda: f64) -> Result<Self> {
        check_data(x, y)?;
        if lambda <= 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("smoothing parameter {lambda}")));
        }
        let mut s = Design::new(x)?.fit(y, lambda)?.0;
        s.knots = x.to_vec();
        Ok(s)
    }

    /// Fit with `λ` minimizing the GCV score. The search runs over
    /// `log₁₀(λ / h̄³) ∈ [−6, 12]` (`h̄` the mean knot spacing): a coarse grid
    /// followed by golden-section refinement.
    pub fn fit_gcv(x: &[f64], y: &[f64]) -> Result<Self> {
        check_data(x, y)?;
        let design = Design::new(x)?;
        let hbar = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
        let lam = |p: f64| 10f64.powf(p) * hbar.powi(3);
        let score = |p: f64| -> f64 {
            match design.fit(y, lam(p)) {
                Ok((_, g)) if g.is_finite() => g,
                _ => f64::INFINITY,
            }
        };
        let (lo, hi, steps) = (-6.0, 12.0, 36);
        let grid: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
        let scores: Vec<f64> = grid.iter().map(|&p| score(p)).collect();
        let best = (0..grid.len())
            .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .expect("grid is not empty");
        let p = if scores[best].is_finite() && scores[best] > 0.0 {
            let step = (hi - lo) / steps as f64;
            golden_section(&score, (grid[best] - step).max(lo), (grid[best] + step).min(hi), 1e-4)
        } else {
            // Exact data (zero residual everywhere); interpolate as closely as
            // the parameterization allows.
            grid[best]
        };
        let mut s = design.fit(y, lam(p))?.0;
        s.knots = x.to_vec();
        Ok(s)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Right derivative at the first knot.
    pub fn derivative_at_start(&self) -> f64 {
        let h = self.knots[1] - self.knots[0];
        (self.values[1] - self.values[0]) / h - h * (2.0 * self.second_derivatives[0] + self.second_derivatives[1]) / 6.0
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        let x = &self.knots;
        let i = match x.partition_point(|k| *k <= t) {
            0 => 0,
            p if p >= x.len() => x.len() - 2,
            p => p - 1,
        };
        let h = x[i + 1] - x[i];
        let (g0, g1) = (self.values[i], self.values[i + 1]);
        let (c0, c1) = (self.second_derivatives[i], self.second_derivatives[i + 1]);
        if t < x[0] || t > x[x.len() - 1] {
            // Linear extrapolation, as for a natural spline.
            let (edge, slope) = if t < x[0] {
                (0, self.derivative_at_start())
            } else {
                let k = x.len() - 1;
                let hk = x[k] - x[k - 1];
                (k, (self.values[k] - self.values[k - 1]) / hk + hk * (self.second_derivatives[k - 1] + 2.0 * self.second_derivatives[k]) / 6.0)
            };
            return self.values[edge] + slope * (t - x[edge]);
        }
        let a = t - x[i];
        let b = x[i + 1] - t;
        (a * g1 + b * g0) / h - a * b / 6.0 * ((1.0 + a / h) * c1 + (1.0 + b / h) * c0)
    }
}

fn check_data(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
            context: "spline data",
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite spline data".into()));
    }
    Ok(())
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn dense(b: &Band5) -> DMatrix<f64> {
        let m = b.d0.len();
        DMatrix::from_fn(m, m, |i, j| b.get(i, j))
    }

    #[test]
    fn inverse_band_matches_dense_inverse() {
        let x: Vec<f64> = (0..9).map(|i| (i as f64).powf(1.3)).collect();
        let d = Design::new(&x).unwrap();
        let b = d.r.combine(&d.qtq, 0.7);
        let inv = dense(&b).try_inverse().unwrap();
        let band = Ldl::factor(&b).unwrap().inverse_band();
        for i in 0..b.d0.len() {
            for j in i..(i + 3).min(b.d0.len()) {
                assert!((band.get(i, j) - inv[(i, j)]).abs() < 1e-10 * inv.amax());
            }
        }
        let rhs: Vec<f64> = (0..b.d0.len()).map(|i| (i as f64).sin()).collect();
        let sol = Ldl::factor(&b).unwrap().solve(&rhs);
        let check = dense(&b) * nalgebra::DVector::from_vec(sol);
        for (c, r) in check.iter().zip(&rhs) {
            assert!((c - r).abs() < 1e-10);
        }
    }

    #[test]
    fn fitted_values_solve_penalized_problem() {
        // g minimizes ‖y − g‖² + λ gᵀKg with K = Q R⁻¹ Qᵀ: (I + λK) g = y.
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.1 + 0.01 * (i * i) as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| (3.0 * t).sin() + 0.1 * (17.0 * t).cos()).collect();
        let lambda = 0.05;
        let s = SmoothingSpline::fit(&x, &y, lambda).unwrap();
        let d = Design::new(&x).unwrap();
        let n = x.len();
        let q = DMatrix::from_fn(n, n - 2, |i, j| {
            let mut e = vec![0.0; n - 2];
            e[j] = 1.0;
            d.q(&e)[i]
        });
        let k = &q * dense(&d.r).try_inverse().unwrap() * q.transpose();
        let g = (DMatrix::identity(n, n) + k * lambda).lu().solve(&nalgebra::DVector::from_vec(y)).unwrap();
        for (a, b) in s.values().iter().zip(g.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn linear_data_is_reproduced() {
        let x: Vec<f64> = (0..1001).map(|i| i as f64 * 1e-3).collect();
        let y: Vec<f64> = x.iter().map(|t| 0.02 + 0.37 * t).collect();
        let s = SmoothingSpline::fit_gcv(&x, &y).unwrap();
        assert!((s.derivative_at_start() - 0.37).abs() < 1e-8);
        assert!((s.evaluate(0.4567) - (0.02 + 0.37 * 0.4567)).abs() < 1e-10);
    }

    #[test]
    fn noisy_curve_slope() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..1001).map(|i| i as f64 * 1e-3).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|t| 0.1 + 0.5 * t - 0.2 * t * t + 1e-4 * (rng.random::<f64>() - 0.5))
            .collect();
        let s = SmoothingSpline::fit_gcv(&x, &y).unwrap();
        assert!((s.derivative_at_start() - 0.5).abs() < 0.02, "{}", s.derivative_at_start());
    }

    #[test]
    fn evaluation_interpolates_knot_values() {
        let x = [0.0, 0.5, 1.5, 2.0, 3.0];
        let y = [1.0, 0.0, 2.0, 1.0, 0.5];
        let s = SmoothingSpline::fit(&x, &y, 0.1).unwrap();
        for (xi, gi) in x.iter().zip(s.values()) {
            assert!((s.evaluate(*xi) - gi).abs() < 1e-12);
        }
        let eps = 1e-7;
        let fd = (s.evaluate(eps) - s.evaluate(0.0)) / eps;
        assert!((fd - s.derivative_at_start()).abs() < 1e-5);
    }
}
