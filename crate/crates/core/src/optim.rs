//! Limited-memory BFGS minimizer with a backtracking Armijo line search.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    /// Stop when `|f_k − f_{k+1}| < rel_tol·max(1, |f_k|)`.
    pub rel_tol: f64,
    /// Stop when the gradient sup-norm drops below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-9, grad_tol: 1e-6, max_iter: 500, memory: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    RelativeChange,
    MaxIterations,
    /// No step along the search direction decreased the objective.
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective at the start and at every accepted iterate.
    pub trace: Vec<f64>,
}

impl LbfgsResult {
    pub fn converged(&self) -> bool {
        matches!(self.termination, Termination::Gradient | Termination::RelativeChange)
    }

    pub fn grad_sup_norm(&self) -> f64 {
        sup_norm(&self.gradient)
    }
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`. The callback writes the gradient into its second argument
/// and returns the value, or `None` when the point is outside the domain
/// (the line search then shortens the step).
///
/// Errors from the initial evaluation are returned to the caller.
pub fn minimize<F, E>(mut f: F, x0: Vec<f64>, opts: &LbfgsOptions) -> Result<LbfgsResult, E>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<Option<f64>, E>,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = match f(&x, &mut g)? {
        Some(v) if v.is_finite() && g.iter().all(|v| v.is_finite()) => v,
        _ => {
            return Ok(LbfgsResult {
                x,
                value: f64::NAN,
                gradient: g,
                iterations: 0,
                termination: Termination::LineSearchFailed,
                trace: Vec::new(),
            })
        }
    };
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut alpha = vec![0.0; opts.memory.max(1)];

    let mut trace = vec![fx];
    let finish = |x, fx, g, it, termination, trace| LbfgsResult { x, value: fx, gradient: g, iterations: it, termination, trace };

    if sup_norm(&g) < opts.grad_tol {
        return Ok(finish(x, fx, g, 0, Termination::Gradient, trace));
    }

    for iter in 1..=opts.max_iter {
        // Two-loop recursion.
        dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
        for (i, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha[i] = a;
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        } else {
            let norm = dot(&g, &g).sqrt();
            dir.iter_mut().for_each(|d| *d /= norm);
        }
        for (i, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (alpha[i] - b) * si);
        }
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // Lost descent: restart from steepest descent.
            hist.clear();
            let norm = dot(&g, &g).sqrt();
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi / norm);
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            x_new.iter_mut().zip(&x).zip(&dir).for_each(|((xn, xi), di)| *xn = xi + step * di);
            if let Some(v) = f(&x_new, &mut g_new)? {
                if v.is_finite() && g_new.iter().all(|v| v.is_finite()) && v <= fx + ARMIJO_C1 * step * slope {
                    accepted = Some(v);
                    break;
                }
            }
            step *= BACKTRACK;
        }
        let Some(f_new) = accepted else {
            return Ok(finish(x, fx, g, iter - 1, Termination::LineSearchFailed, trace));
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        let change = (fx - f_new).abs();
        let scale = fx.abs().max(1.0);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        trace.push(fx);

        if sup_norm(&g) < opts.grad_tol {
            return Ok(finish(x, fx, g, iter, Termination::Gradient, trace));
        }
        if change < opts.rel_tol * scale {
            return Ok(finish(x, fx, g, iter, Termination::RelativeChange, trace));
        }
    }
    Ok(finish(x, fx, g, opts.max_iter, Termination::MaxIterations, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> Result<Option<f64>, Infallible> {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        Ok(Some((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)))
    }

    #[test]
    fn solves_rosenbrock() {
        let opts = LbfgsOptions { rel_tol: 0.0, grad_tol: 1e-9, ..Default::default() };
        let r = minimize(rosenbrock, vec![-1.2, 1.0], &opts).unwrap();
        assert_eq!(r.termination, Termination::Gradient);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6, "{:?}", r.x);
    }

    #[test]
    fn quadratic_is_monotone_and_fast() {
        let diag = [1.0, 10.0, 100.0, 1000.0];
        let mut values = Vec::new();
        let r = minimize(
            |x: &[f64], g: &mut [f64]| -> Result<_, Infallible> {
                let mut v = 0.0;
                for i in 0..4 {
                    g[i] = diag[i] * (x[i] - 1.0);
                    v += 0.5 * diag[i] * (x[i] - 1.0).powi(2);
                }
                values.push(v);
                Ok(Some(v))
            },
            vec![0.0; 4],
            &LbfgsOptions { rel_tol: 0.0, grad_tol: 1e-10, ..Default::default() },
        )
        .unwrap();
        assert!(r.converged());
        assert!(r.iterations < 30, "{}", r.iterations);
        assert_eq!(r.trace.len(), r.iterations + 1);
        assert!(r.trace.windows(2).all(|w| w[1] < w[0]));
        assert!(r.trace.iter().all(|v| values.contains(v)));
    }

    #[test]
    fn rejects_out_of_domain_steps() {
        // f(x) = x − ln x on x > 0, minimized at 1; start near the boundary
        let r = minimize(
            |x: &[f64], g: &mut [f64]| -> Result<_, Infallible> {
                if x[0] <= 0.0 {
                    return Ok(None);
                }
                g[0] = 1.0 - 1.0 / x[0];
                Ok(Some(x[0] - x[0].ln()))
            },
            vec![0.01],
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert!(r.converged());
        assert!((r.x[0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn stationary_start_stops_immediately() {
        let r = minimize(
            |x: &[f64], g: &mut [f64]| -> Result<_, Infallible> {
                g[0] = 2.0 * x[0];
                Ok(Some(x[0] * x[0]))
            },
            vec![0.0],
            &LbfgsOptions::default(),
        )
        .unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.termination, Termination::Gradient);
    }
}
