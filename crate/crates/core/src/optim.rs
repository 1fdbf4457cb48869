//! Limited-memory BFGS minimizer with a backtracking Armijo line search.

use std::collections::VecDeque;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the gradient max-norm falls below this.
    pub gtol: f64,
    /// Stop when the relative objective decrease falls below this.
    pub ftol: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iter: 2000, gtol: 1e-6, ftol: 1e-9, max_backtracks: 60 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub converged: bool,
    pub iterations: usize,
    /// Objective value after every accepted step, starting at the initial point.
    pub trace: Vec<T>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn max_norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Minimizes `objective`, which returns the value and gradient at a point,
/// or `None` where the objective is undefined (the line search backtracks).
/// Panics if the starting point is undefined.
pub fn minimize<T: Real>(
    mut objective: impl FnMut(&[T]) -> Option<(T, Vec<T>)>,
    x0: Vec<T>,
    opts: &LbfgsOptions,
) -> Minimum<T> {
    let (mut f, mut g) = objective(&x0).expect("objective must be defined at the starting point");
    let mut x = x0;
    let mut trace = vec![f];
    let mut history: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(opts.memory);
    let gtol = T::lit(opts.gtol);
    let ftol = T::lit(opts.ftol);
    let c1 = T::lit(1e-4);
    let half = T::lit(0.5);

    for iter in 0..opts.max_iter {
        if max_norm(&g) < gtol {
            return Minimum { x, value: f, converged: true, iterations: iter, trace };
        }
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = *rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, &yi)| *qi = *qi - a * yi);
            alphas.push(a);
        }
        let gamma = history.back().map_or(T::one(), |(s, y, _)| dot(s, y) / dot(y, y));
        q.iter_mut().for_each(|qi| *qi = *qi * gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = *rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, &si)| *qi = *qi + (a - b) * si);
        }
        let mut dir: Vec<T> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < T::zero()) || !slope.is_finite() {
            history.clear();
            dir = g.iter().map(|&v| -v).collect();
            slope = -dot(&g, &g);
        }
        // First step of plain gradient descent is scaled to unit length.
        let mut step = if history.is_empty() { T::one().min(T::one() / max_norm(&dir)) } else { T::one() };

        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<T> = x.iter().zip(&dir).map(|(&xi, &di)| xi + step * di).collect();
            if let Some((ft, gt)) = objective(&trial) {
                if ft.is_finite() && ft <= f + c1 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step = step * half;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            return Minimum { x, value: f, converged: false, iterations: iter, trace };
        };

        let s: Vec<T> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y) {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, T::one() / sy));
        }
        let rel = (f - f_new) / f.abs().max(f_new.abs()).max(T::one());
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        if rel < ftol {
            return Minimum { x, value: f, converged: true, iterations: iter + 1, trace };
        }
    }
    let converged = max_norm(&g) < gtol;
    Minimum { x, value: f, converged, iterations: opts.max_iter, trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let obj = |x: &[f64]| Some((x[0] * x[0] + 10.0 * (x[1] - 1.0).powi(2), vec![2.0 * x[0], 20.0 * (x[1] - 1.0)]));
        let m = minimize(obj, vec![3.0, -2.0], &LbfgsOptions { ftol: 0.0, ..Default::default() });
        assert!(m.converged);
        assert!(m.x[0].abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rosenbrock() {
        let obj = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Some((f, g))
        };
        let m = minimize(obj, vec![-1.2, 1.0], &LbfgsOptions { ftol: 0.0, gtol: 1e-8, ..Default::default() });
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn undefined_region_is_avoided() {
        // Defined only for x < 2; minimum of (x-3)^2 on that region is at the edge.
        let obj = |x: &[f64]| (x[0] < 2.0).then(|| ((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]));
        let m = minimize(obj, vec![0.0], &LbfgsOptions::default());
        assert!(m.x[0] < 2.0 && m.x[0] > 1.9);
    }
}
