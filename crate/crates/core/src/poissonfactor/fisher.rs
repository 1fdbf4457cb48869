//! Diagonal observed-Fisher error bars for the factor coordinates.

use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

use super::{FactorModel, Link};

/// Per-coordinate observed information and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherErrors<T> {
    /// `m × r` information of each `U_ik` with all other parameters fixed.
    pub info_u: Matrix<T>,
    /// `n × r` information of each `V_jk`.
    pub info_v: Matrix<T>,
}

impl<T: Real> FisherErrors<T> {
    /// `F^(-1/2)`, or `None` where the information is not positive.
    pub fn std_u(&self, i: usize, k: usize) -> Option<T> {
        std_from_info(self.info_u[(i, k)])
    }

    pub fn std_v(&self, j: usize, k: usize) -> Option<T> {
        std_from_info(self.info_v[(j, k)])
    }
}

fn std_from_info<T: Real>(f: T) -> Option<T> {
    (f > T::zero() && f.is_finite()).then(|| T::one() / f.sqrt())
}

/// Curvature of the loss with respect to `M_ij`: `N̄` for `exp`,
/// `N/M²` where `M > 0` for ReLU (zero elsewhere).
fn cell_curvature<T: Real>(count: u64, m: T, link: Link) -> T {
    match link {
        Link::Exp => m.exp(),
        Link::Relu if m > T::zero() => T::from_count(count) / (m * m),
        Link::Relu => T::zero(),
    }
}

/// Observed information of every `U` and `V` coordinate:
/// `F(U_ik) = Σ_j c_ij (w_k V_jk)²`, `F(V_jk) = Σ_i c_ij (w_k U_ik)²`,
/// with `c_ij` the loss curvature in `M_ij`. Because `M` is linear in each
/// single coordinate, this is the exact second derivative.
pub fn fisher_information<T: Real>(counts: &Counts, model: &FactorModel<T>) -> Result<FisherErrors<T>> {
    if counts.shape() != model.shape() {
        return Err(Error::ShapeMismatch { expected: counts.shape(), got: model.shape() });
    }
    let (m, n) = model.shape();
    let r = model.rank();
    let pred = model.linear_predictor();
    let curv = Matrix::from_fn(m, n, |i, j| cell_curvature(counts.get(i, j), pred[(i, j)], model.link));
    let wv2 = Matrix::from_fn(n, r, |j, k| (model.w[k] * model.v[(j, k)]).powi(2));
    let wu2 = Matrix::from_fn(m, r, |i, k| (model.w[k] * model.u[(i, k)]).powi(2));
    Ok(FisherErrors { info_u: curv.matmul(&wv2), info_v: curv.t_matmul(&wu2) })
}

/// Columns of `U` and `V` that carry bias (column 0 tracks overall phrase
/// popularity and is not reported).
pub const PLOTTED_COMPONENTS: [usize; 2] = [1, 2];

/// Standard deviations of the [`PLOTTED_COMPONENTS`] columns of `U` and `V`,
/// indexed `[row][0 | 1]`. `None` marks coordinates whose information is not
/// positive. Needs rank ≥ 3.
#[allow(clippy::type_complexity)]
pub fn fisher_errorbars<T: Real>(
    counts: &Counts,
    model: &FactorModel<T>,
) -> Result<(Vec<[Option<T>; 2]>, Vec<[Option<T>; 2]>)> {
    if model.rank() < 3 {
        return Err(Error::InsufficientRank(model.rank()));
    }
    let f = fisher_information(counts, model)?;
    let (m, n) = model.shape();
    let [a, b] = PLOTTED_COMPONENTS;
    let su = (0..m).map(|i| [f.std_u(i, a), f.std_u(i, b)]).collect();
    let sv = (0..n).map(|j| [f.std_v(j, a), f.std_v(j, b)]).collect();
    Ok((su, sv))
}
