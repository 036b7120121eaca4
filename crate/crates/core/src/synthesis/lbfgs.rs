//! Limited-memory BFGS with central-difference gradients and a backtracking
//! Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop when `‖∇f‖∞` falls below this.
    pub gradient_tol: f64,
    /// Stop when the decrease is below `function_tol · max(1, |f|)`.
    pub function_tol: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            memory: 8,
            max_iterations: 300,
            gradient_tol: 1e-8,
            function_tol: 1e-13,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    GradientTol,
    FunctionTol,
    LineSearchStall,
    MaxIterations,
    NonFinite,
}

impl Status {
    pub fn converged(self) -> bool {
        matches!(self, Status::GradientTol | Status::FunctionTol | Status::LineSearchStall)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Counted<F> {
    f: F,
    calls: usize,
}

impl<F: Fn(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.calls += 1;
        (self.f)(x)
    }

    fn gradient(&mut self, x: &[f64], step: f64) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let h = step * x[i].abs().max(1.0);
                probe[i] = x[i] + h;
                let up = self.eval(&probe);
                probe[i] = x[i] - h;
                let down = self.eval(&probe);
                probe[i] = x[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

/// Minimizes `f` from `x0`. Non-finite values are treated as `+∞` by the line
/// search; a non-finite start returns immediately.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &LbfgsOptions) -> Minimum {
    let mut obj = Counted { f, calls: 0 };
    let mut x = x0.to_vec();
    let mut fx = obj.eval(&x);
    let finish = |x: Vec<f64>, f: f64, iterations, calls, status| Minimum {
        x,
        f,
        iterations,
        evaluations: calls,
        status,
    };
    if !fx.is_finite() {
        return finish(x, fx, 0, obj.calls, Status::NonFinite);
    }
    let mut g = obj.gradient(&x, opts.fd_step);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);

    for iter in 0..opts.max_iterations {
        if g.iter().any(|v| !v.is_finite()) {
            return finish(x, fx, iter, obj.calls, Status::NonFinite);
        }
        if g.iter().fold(0.0_f64, |m, v| m.max(v.abs())) < opts.gradient_tol {
            return finish(x, fx, iter, obj.calls, Status::GradientTol);
        }

        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let scale = match history.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0),
        };
        q.iter_mut().for_each(|qi| *qi *= scale);
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
            let ft = obj.eval(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            return finish(x, fx, iter, obj.calls, Status::LineSearchStall);
        };
        let g_new = obj.gradient(&x_new, opts.fd_step);
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - f_new;
        x = x_new;
        g = g_new;
        fx = f_new;
        if decrease <= opts.function_tol * fx.abs().max(1.0) {
            return finish(x, fx, iter + 1, obj.calls, Status::FunctionTol);
        }
    }
    finish(x, fx, opts.max_iterations, obj.calls, Status::MaxIterations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 10.0 * (x[1] + 2.0).powi(2) + 0.5 * x[2] * x[2];
        let m = minimize(f, &[5.0, 5.0, 5.0], &LbfgsOptions::default());
        assert!(m.status.converged());
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] + 2.0).abs() < 1e-5 && m.x[2].abs() < 1e-5);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = LbfgsOptions {
            max_iterations: 2000,
            ..Default::default()
        };
        let m = minimize(f, &[-1.2, 1.0], &opts);
        assert!(m.f < 1e-9, "{m:?}");
    }

    #[test]
    fn non_finite_start() {
        let m = minimize(|_| f64::NAN, &[0.0], &LbfgsOptions::default());
        assert_eq!(m.status, Status::NonFinite);
    }
}
