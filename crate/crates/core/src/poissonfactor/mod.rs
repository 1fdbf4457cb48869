//! Poisson-likelihood low-rank factorization of phrase-by-source counts.
//!
//! The model mean is `N̄ = f(M)` with `M = U diag(w) Vᵗ` and `f` either
//! `ReLU` or `exp`. Fitting minimizes the negative Poisson log-likelihood.

mod components;
mod fisher;
mod fit;
mod io;
mod likelihood;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd, thin_qr, Matrix};
use crate::scalar::Real;

pub use components::{
    component_coordinates, per_article_frequency, BiasComponents, Coordinate, PerArticleFrequency, PlotThresholds,
    ThresholdRecord,
};
pub use fisher::{fisher_errorbars, fisher_information, FisherErrors, PLOTTED_COMPONENTS};
pub use fit::{fit, fit_link, initial_model, FitConfig, FitResult, LinkFit};
pub use likelihood::{
    gradients, ln_factorial, negative_loglik, poisson_loglik, poisson_term, stirling_ln_factorial, Gradients,
    RELU_FLOOR,
};

/// Largest supported factorization rank.
pub const MAX_RANK: usize = 10;
/// Default bound on `exp` arguments; larger arguments signal divergence.
pub const EXP_OVERFLOW_BOUND: f64 = 50.0;
/// Weights below this are treated as zero by [`canonicalize`].
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Link between the bilinear predictor `M` and the mean `N̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Relu,
    Exp,
}

impl Link {
    pub const ALL: [Link; 2] = [Link::Relu, Link::Exp];

    pub fn name(self) -> &'static str {
        match self {
            Link::Relu => "relu",
            Link::Exp => "exp",
        }
    }

    #[inline]
    pub fn apply<T: Real>(self, m: T) -> T {
        match self {
            Link::Relu => m.max(T::zero()),
            Link::Exp => m.exp(),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Link::Relu),
            "exp" => Ok(Link::Exp),
            other => Err(Error::InvalidInput(format!("unknown link `{other}`"))),
        }
    }
}

/// Rank-`r` factorization `(U, w, V)` with a link function.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel<T> {
    /// `m × r` phrase factors.
    pub u: Matrix<T>,
    /// `r` component weights.
    pub w: Vec<T>,
    /// `n × r` source factors.
    pub v: Matrix<T>,
    pub link: Link,
}

impl<T: Real> FactorModel<T> {
    pub fn new(u: Matrix<T>, w: Vec<T>, v: Matrix<T>, link: Link) -> Result<Self> {
        let r = w.len();
        if u.cols() != r {
            return Err(Error::ShapeMismatch { expected: (u.rows(), r), got: u.shape() });
        }
        if v.cols() != r {
            return Err(Error::ShapeMismatch { expected: (v.rows(), r), got: v.shape() });
        }
        Ok(Self { u, w, v, link })
    }

    pub fn rank(&self) -> usize {
        self.w.len()
    }

    /// `(m, n)` of the modelled count matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }

    /// The bilinear predictor `M = U diag(w) Vᵗ`.
    pub fn linear_predictor(&self) -> Matrix<T> {
        self.u.scale_columns(&self.w).matmul(&self.v.transpose())
    }

    /// Mean matrix `N̄` without the overflow guard.
    pub fn mean(&self) -> Matrix<T> {
        let link = self.link;
        self.linear_predictor().map(|m| link.apply(m))
    }

    /// Mean matrix `N̄`. For the `exp` link every argument must stay at or
    /// below `overflow_bound`.
    pub fn predict(&self, overflow_bound: T) -> Result<Matrix<T>> {
        let m = self.linear_predictor();
        if self.link == Link::Exp {
            if let Some(&bad) = m.as_slice().iter().find(|&&x| !(x <= overflow_bound)) {
                return Err(Error::OverflowGuard { value: bad.to_f64_lossy(), bound: overflow_bound.to_f64_lossy() });
            }
        }
        let link = self.link;
        Ok(m.map(|x| link.apply(x)))
    }

    /// Flips the sign of column `k` in both `U` and `V`.
    pub fn flip_component(&mut self, k: usize) {
        for i in 0..self.u.rows() {
            self.u[(i, k)] = -self.u[(i, k)];
        }
        for j in 0..self.v.rows() {
            self.v[(j, k)] = -self.v[(j, k)];
        }
    }
}

/// Re-expresses the model with orthonormal `U`, `V` columns and positive,
/// descending `w`, leaving `U diag(w) Vᵗ` unchanged.
///
/// Both factors are QR-decomposed and the `r × r` core `R_u diag(w) R_vᵗ` is
/// diagonalized by SVD. Column signs are fixed so that every `V` column sums
/// to a non-negative value (ties: largest-magnitude entry positive).
pub fn canonicalize<T: Real>(model: &FactorModel<T>) -> Result<FactorModel<T>> {
    let r = model.rank();
    let (qu, ru) = thin_qr(&model.u);
    let (qv, rv) = thin_qr(&model.v);
    let core = ru.scale_columns(&model.w).matmul(&rv.transpose());
    let dec = svd(&core);
    let tol = T::lit(RANK_TOLERANCE);
    let effective = dec.singular_values.iter().filter(|&&s| s > tol).count();
    if effective < r {
        return Err(Error::RankDeficiency { effective, requested: r });
    }
    let mut out = FactorModel {
        u: qu.matmul(&dec.u),
        w: dec.singular_values,
        v: qv.matmul(&dec.v),
        link: model.link,
    };
    for k in 0..r {
        if component_sign(&out.v.column(k)) < T::zero() {
            out.flip_component(k);
        }
    }
    Ok(out)
}

/// `+1` or `-1`: the sign of the column sum, or of the largest-magnitude
/// entry when the sum vanishes.
fn component_sign<T: Real>(col: &[T]) -> T {
    let sum: T = col.iter().copied().sum();
    let scale: T = col.iter().map(|x| x.abs()).sum();
    if sum.abs() > T::lit(1e-9) * scale.max(T::min_positive_value()) {
        return sum.signum();
    }
    let peak = col.iter().copied().fold(T::zero(), |best, x| if x.abs() > best.abs() { x } else { best });
    if peak < T::zero() { -T::one() } else { T::one() }
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(m: usize, n: usize, r: usize, link: Link, seed: u64) -> FactorModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Matrix::from_fn(m, r, |_, _| rng.gen_range(-1.0..1.0));
        let v = Matrix::from_fn(n, r, |_, _| rng.gen_range(-1.0..1.0));
        let w = (0..r).map(|_| rng.gen_range(0.2..2.0)).collect();
        FactorModel::new(u, w, v, link).unwrap()
    }

    #[test]
    fn predict_scalar_cases() {
        let one = Matrix::from_rows(&[vec![1.0]]);
        let relu = FactorModel::new(one.clone(), vec![2.0], one.clone(), Link::Relu).unwrap();
        assert_eq!(relu.predict(50.0).unwrap()[(0, 0)], 2.0);
        let exp = FactorModel { link: Link::Exp, ..relu };
        assert!((exp.predict(50.0).unwrap()[(0, 0)] - 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn predict_matches_triple_loop() {
        for link in Link::ALL {
            let model = random_model(5, 4, 3, link, 7);
            let mean = model.predict(50.0).unwrap();
            for i in 0..5 {
                for j in 0..4 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        s += model.w[k] * model.u[(i, k)] * model.v[(j, k)];
                    }
                    let expected = match link {
                        Link::Relu => s.max(0.0),
                        Link::Exp => s.exp(),
                    };
                    assert!((mean[(i, j)] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn overflow_guard() {
        let one = Matrix::from_rows(&[vec![1.0]]);
        let model = FactorModel::new(one.clone(), vec![60.0], one, Link::Exp).unwrap();
        assert!(matches!(model.predict(50.0), Err(Error::OverflowGuard { .. })));
        assert!(model.predict(100.0).is_ok());
    }

    #[test]
    fn canonicalize_orthonormal_and_preserving() {
        for seed in 0..20 {
            let model = random_model(7, 5, 3, Link::Exp, seed);
            let canon = canonicalize(&model).unwrap();
            let eye = Matrix::<f64>::identity(3);
            assert!(canon.u.t_matmul(&canon.u).sub(&eye).max_abs() < 1e-8);
            assert!(canon.v.t_matmul(&canon.v).sub(&eye).max_abs() < 1e-8);
            assert!(canon.w.windows(2).all(|p| p[0] >= p[1]) && canon.w.iter().all(|&w| w > 0.0));
            let before = model.mean();
            let after = canon.mean();
            for (a, b) in before.as_slice().iter().zip(after.as_slice()) {
                assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0));
            }
            let again = canonicalize(&canon).unwrap();
            assert!(again.u.sub(&canon.u).max_abs() < 1e-10);
            assert!(again.v.sub(&canon.v).max_abs() < 1e-10);
        }
    }

    #[test]
    fn canonicalize_sorts_weights() {
        let u = Matrix::from_rows(&[vec![1.0f64, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let v = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);
        let model = FactorModel::new(u, vec![1.0, 3.0], v, Link::Relu).unwrap();
        let canon = canonicalize(&model).unwrap();
        assert!((canon.w[0] - 3.0).abs() < 1e-12 && (canon.w[1] - 1.0).abs() < 1e-12);
        assert!(canon.mean().sub(&model.mean()).max_abs() < 1e-12);
    }

    #[test]
    fn canonicalize_rank_deficiency() {
        let u = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![0.0, 0.0]]);
        let v = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let model = FactorModel::new(u.clone(), vec![1.0, 1.0], u.clone(), Link::Exp).unwrap();
        assert!(matches!(canonicalize(&model), Err(Error::RankDeficiency { effective: 1, requested: 2 })));
        let model = FactorModel::new(u, vec![1.0, 0.0], v, Link::Exp).unwrap();
        assert!(matches!(canonicalize(&model), Err(Error::RankDeficiency { .. })));
    }

    #[test]
    fn column_sign_flip_invariance() {
        let model = random_model(4, 3, 2, Link::Relu, 3);
        let mut flipped = model.clone();
        flipped.flip_component(1);
        assert_eq!(model.mean(), flipped.mean());
    }

    #[test]
    fn canonicalize_f32() {
        let u = Matrix::<f32>::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0], vec![0.3, -0.4]]);
        let v = Matrix::<f32>::from_rows(&[vec![0.7, 0.1], vec![-0.2, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]);
        let model = FactorModel::new(u, vec![2.0, 1.0], v, Link::Exp).unwrap();
        let canon = canonicalize(&model).unwrap();
        assert!(canon.mean().sub(&model.mean()).max_abs() < 1e-4);
    }
}
