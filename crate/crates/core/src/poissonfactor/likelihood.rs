//! Poisson log-likelihood, the smooth training loss and its gradients.

use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

use super::{FactorModel, Link};

/// Stand-in mean for the `ln N̄` term of the ReLU loss where `N̄ = 0`.
pub const RELU_FLOOR: f64 = 1e-8;

/// Exact `ln k!`.
pub fn ln_factorial<T: Real>(k: u64) -> T {
    T::lit(statrs::function::factorial::ln_factorial(k))
}

/// Stirling series `k ln(k/e) + ½ ln(2πk) + 1/(12k)` for `ln k!`
/// (absolute error below `2.3e-3` for every `k ≥ 1`; `0` at `k = 0`).
pub fn stirling_ln_factorial<T: Real>(k: u64) -> T {
    if k == 0 {
        return T::zero();
    }
    let x = T::from_count(k);
    let two_pi = T::lit(std::f64::consts::TAU);
    x * (x.ln() - T::one()) + T::lit(0.5) * (two_pi * x).ln() + T::one() / (T::lit(12.0) * x)
}

/// One cell of the log-likelihood: `N ln N̄ − ln N! − N̄`, with the Stirling
/// series for `ln N!` once `N̄ > stirling_cutoff`. `0·ln 0 = 0`; a zero mean
/// with a positive count gives `−∞`.
pub fn poisson_term<T: Real>(count: u64, mean: T, stirling_cutoff: T) -> T {
    let log_fact = if mean > stirling_cutoff { stirling_ln_factorial(count) } else { ln_factorial(count) };
    if count == 0 {
        return -mean;
    }
    if mean <= T::zero() {
        return T::neg_infinity();
    }
    T::from_count(count) * mean.ln() - log_fact - mean
}

/// Poisson log-likelihood `ℒ = Σ_ij N_ij ln N̄_ij − ln N_ij! − N̄_ij`.
pub fn poisson_loglik<T: Real>(counts: &Counts, mean: &Matrix<T>, stirling_cutoff: T) -> Result<T> {
    if counts.shape() != mean.shape() {
        return Err(Error::ShapeMismatch { expected: counts.shape(), got: mean.shape() });
    }
    Ok(counts.as_slice().iter().zip(mean.as_slice()).map(|(&c, &mu)| poisson_term(c, mu, stirling_cutoff)).sum())
}

/// The training loss `−ℒ` with exact `ln N!`. For the ReLU link, zero
/// means inside the log are replaced by [`RELU_FLOOR`], keeping it finite.
pub fn negative_loglik<T: Real>(counts: &Counts, model: &FactorModel<T>) -> T {
    let m = model.linear_predictor();
    let floor = T::lit(RELU_FLOOR);
    let mut total = T::zero();
    for (&c, &x) in counts.as_slice().iter().zip(m.as_slice()) {
        let n = T::from_count(c);
        let cell = match model.link {
            Link::Exp => x.exp() - n * x,
            Link::Relu => {
                let mu = x.max(T::zero());
                mu - if c == 0 { T::zero() } else { n * mu.max(floor).ln() }
            }
        };
        total = total + cell + ln_factorial::<T>(c);
    }
    total
}

/// Gradient of the loss `−ℒ` with respect to `U`, `V` and `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub u: Matrix<T>,
    pub v: Matrix<T>,
    pub w: Vec<T>,
}

impl<T: Real> Gradients<T> {
    /// Flattened as `[U row-major, V row-major, w]`.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.u.as_slice().len() + self.v.as_slice().len() + self.w.len());
        out.extend_from_slice(self.u.as_slice());
        out.extend_from_slice(self.v.as_slice());
        out.extend_from_slice(&self.w);
        out
    }
}

/// Residual matrix `D = ∂(−ℒ)/∂M`: `N̄ − N` for `exp`, `(1 − N/N̄)·θ(N̄)` for
/// ReLU. With `mask` off, a zero ReLU mean under a positive count is an error.
pub(crate) fn residual<T: Real>(counts: &Counts, m: &Matrix<T>, link: Link, mask: bool) -> Result<Matrix<T>> {
    let cols = m.cols();
    let mut d = Vec::with_capacity(m.as_slice().len());
    for (idx, (&c, &x)) in counts.as_slice().iter().zip(m.as_slice()).enumerate() {
        let n = T::from_count(c);
        d.push(match link {
            Link::Exp => x.exp() - n,
            Link::Relu if x > T::zero() => T::one() - n / x,
            Link::Relu => {
                if c > 0 && !mask {
                    return Err(Error::DivisionByZero { row: idx / cols, col: idx % cols });
                }
                T::zero()
            }
        });
    }
    Ok(Matrix::from_row_major(m.rows(), cols, d))
}

/// Analytic gradients `∇U = D V W`, `∇V = Dᵗ U W`, `∂w_k = (Uᵗ D V)_kk`.
pub fn gradients<T: Real>(counts: &Counts, model: &FactorModel<T>, mask: bool) -> Result<Gradients<T>> {
    if counts.shape() != model.shape() {
        return Err(Error::ShapeMismatch { expected: counts.shape(), got: model.shape() });
    }
    let m = model.linear_predictor();
    let d = residual(counts, &m, model.link, mask)?;
    Ok(gradients_from_residual(&d, model))
}

pub(crate) fn gradients_from_residual<T: Real>(d: &Matrix<T>, model: &FactorModel<T>) -> Gradients<T> {
    let dv = d.matmul(&model.v);
    let grad_u = dv.scale_columns(&model.w);
    let grad_v = d.t_matmul(&model.u).scale_columns(&model.w);
    let r = model.rank();
    let grad_w = (0..r).map(|k| (0..model.u.rows()).map(|i| model.u[(i, k)] * dv[(i, k)]).sum()).collect();
    Gradients { u: grad_u, v: grad_v, w: grad_w }
}
