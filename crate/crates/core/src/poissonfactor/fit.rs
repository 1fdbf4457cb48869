//! Maximum-likelihood fitting for both links with SVD warm starts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::counts::Counts;
use crate::error::{Error, Result};
use crate::linalg::{svd, Matrix};
use crate::optim::{minimize, LbfgsOptions};
use crate::scalar::Real;

use super::likelihood::{gradients_from_residual, negative_loglik, poisson_loglik, residual};
use super::{canonicalize, FactorModel, Link, EXP_OVERFLOW_BOUND, MAX_RANK};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub rank: usize,
    pub max_iter: usize,
    pub gtol: f64,
    pub ftol: f64,
    /// Total number of starts per link; the first one is not jittered.
    pub restarts: usize,
    pub seed: u64,
    pub exp_overflow_bound: f64,
    /// Mean above which `ln N!` uses the Stirling series in reported `ℒ`.
    pub stirling_cutoff: f64,
    /// Relative jitter applied to the SVD start on restarts.
    pub jitter: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rank: 3,
            max_iter: 2000,
            gtol: 1e-6,
            ftol: 1e-9,
            restarts: 3,
            seed: 0,
            exp_overflow_bound: EXP_OVERFLOW_BOUND,
            stirling_cutoff: 50.0,
            jitter: 0.05,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.rank > MAX_RANK {
            return Err(Error::config("fit.rank", format!("must be in 1..={MAX_RANK}")));
        }
        if self.max_iter == 0 {
            return Err(Error::config("fit.max_iter", "must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::config("fit.restarts", "must be positive"));
        }
        for (key, value) in [
            ("fit.gtol", self.gtol),
            ("fit.ftol", self.ftol),
            ("fit.exp_overflow_bound", self.exp_overflow_bound),
            ("fit.stirling_cutoff", self.stirling_cutoff),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::config(key, "must be positive and finite"));
            }
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::config("fit.jitter", "must be non-negative"));
        }
        Ok(())
    }
}

/// Best fit for one link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkFit<T> {
    /// Canonical model.
    pub model: FactorModel<T>,
    /// Reported log-likelihood (`−∞` if a ReLU mean vanishes under a count).
    pub loglik: T,
    /// Log-likelihood of the unjittered starting point.
    pub initial_loglik: T,
    pub converged: bool,
    pub iterations: usize,
    /// Loss after every accepted step of the winning start.
    pub loss_trace: Vec<T>,
}

/// Outcome of fitting both links.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub model: FactorModel<T>,
    pub loglik: T,
    pub converged: bool,
    pub iterations: usize,
    pub chosen_link: Link,
    pub rejected_loglik: T,
    pub rejected_converged: bool,
}

impl<T: Real> FitResult<T> {
    pub fn rank(&self) -> usize {
        self.model.rank()
    }
}

fn check_input(counts: &Counts, rank: usize) -> Result<()> {
    let (m, n) = counts.shape();
    if rank == 0 || rank > MAX_RANK || rank >= m.min(n) {
        return Err(Error::InvalidRank { rank, rows: m, cols: n });
    }
    if let Some(i) = counts.row_totals().iter().position(|&t| t == 0) {
        return Err(Error::DegenerateInput(format!("row {i} is all zero")));
    }
    if let Some(j) = counts.col_totals().iter().position(|&t| t == 0) {
        return Err(Error::DegenerateInput(format!("column {j} is all zero")));
    }
    Ok(())
}

/// SVD warm start: `ln(N + 1)` for `exp`, `N` for ReLU. The singular values
/// become `w`; the factors keep orthonormal columns.
pub fn initial_model<T: Real>(counts: &Counts, rank: usize, link: Link) -> FactorModel<T> {
    let target: Matrix<T> = match link {
        Link::Exp => counts.to_matrix::<T>().map(|x| (x + T::one()).ln()),
        Link::Relu => counts.to_matrix(),
    };
    let dec = svd(&target);
    let mut model = FactorModel {
        u: dec.u.leading_columns(rank),
        w: dec.singular_values[..rank].to_vec(),
        v: dec.v.leading_columns(rank),
        link,
    };
    // The leading singular pair of a non-negative matrix can be chosen
    // non-negative; orient it so.
    for k in 0..rank {
        if model.v.column(k).iter().copied().sum::<T>() < T::zero() {
            model.flip_component(k);
        }
    }
    model
}

/// Balanced optimization variables `A = U diag(√w)`, `B = V diag(√w)`.
/// Keeping `w` as a free variable makes the problem badly conditioned
/// (its scale trades off against the factors), so the optimizer sees only
/// the balanced factors and `w` is recovered by canonicalization.
fn flatten<T: Real>(model: &FactorModel<T>) -> Vec<T> {
    let root: Vec<T> = model.w.iter().map(|w| w.abs().sqrt()).collect();
    let signed: Vec<T> = model.w.iter().zip(&root).map(|(&w, &s)| if w < T::zero() { -s } else { s }).collect();
    let mut x = Vec::with_capacity(model.u.as_slice().len() + model.v.as_slice().len());
    x.extend_from_slice(model.u.scale_columns(&root).as_slice());
    x.extend_from_slice(model.v.scale_columns(&signed).as_slice());
    x
}

fn unflatten<T: Real>(x: &[T], m: usize, n: usize, r: usize, link: Link) -> FactorModel<T> {
    let (u, v) = x.split_at(m * r);
    FactorModel {
        u: Matrix::from_row_major(m, r, u.to_vec()),
        w: vec![T::one(); r],
        v: Matrix::from_row_major(n, r, v.to_vec()),
        link,
    }
}

fn jittered<T: Real>(model: &FactorModel<T>, scale: f64, rng: &mut ChaCha8Rng) -> FactorModel<T> {
    let mut out = model.clone();
    let mut perturb = |mat: &mut Matrix<T>| {
        let amp = mat.max_abs().to_f64_lossy() * scale;
        if amp > 0.0 {
            let normal = Normal::new(0.0, amp).expect("positive std");
            mat.as_mut_slice().iter_mut().for_each(|x| *x = *x + T::lit(normal.sample(rng)));
        }
    };
    perturb(&mut out.u);
    perturb(&mut out.v);
    out
}

fn reported_loglik<T: Real>(counts: &Counts, model: &FactorModel<T>, config: &FitConfig) -> T {
    match model.predict(T::lit(config.exp_overflow_bound)) {
        Ok(mean) => poisson_loglik(counts, &mean, T::lit(config.stirling_cutoff)).unwrap_or(T::neg_infinity()),
        Err(_) => T::neg_infinity(),
    }
}

fn stream_seed(seed: u64, link: Link) -> u64 {
    seed ^ match link {
        Link::Relu => 0x5157_0000_0000_0001,
        Link::Exp => 0x5157_0000_0000_0002,
    }
}

/// Fits one link from the SVD start plus jittered restarts, keeping the
/// start with the highest reported log-likelihood.
pub fn fit_link<T: Real>(counts: &Counts, link: Link, config: &FitConfig) -> Result<LinkFit<T>> {
    config.validate()?;
    check_input(counts, config.rank)?;
    let (m, n) = counts.shape();
    let r = config.rank;
    let bound = T::lit(config.exp_overflow_bound);
    let opts = LbfgsOptions { max_iter: config.max_iter, gtol: config.gtol, ftol: config.ftol, ..Default::default() };
    let objective = |x: &[T]| -> Option<(T, Vec<T>)> {
        let model = unflatten(x, m, n, r, link);
        let pred = model.linear_predictor();
        if link == Link::Exp && pred.as_slice().iter().any(|&v| !(v <= bound)) {
            return None;
        }
        let loss = negative_loglik(counts, &model);
        if !loss.is_finite() {
            return None;
        }
        let d = residual(counts, &pred, link, true).ok()?;
        let g = gradients_from_residual(&d, &model);
        let mut flat = g.u.into_vec();
        flat.extend(g.v.into_vec());
        Some((loss, flat))
    };

    let start = initial_model::<T>(counts, r, link);
    let initial_loglik = reported_loglik(counts, &start, config);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(config.seed, link));
    let mut best: Option<LinkFit<T>> = None;
    for attempt in 0..config.restarts {
        let init = if attempt == 0 { start.clone() } else { jittered(&start, config.jitter, &mut rng) };
        if objective(&flatten(&init)).is_none() {
            continue;
        }
        let min = minimize(objective, flatten(&init), &opts);
        let raw = unflatten(&min.x, m, n, r, link);
        let model = canonicalize(&raw).unwrap_or(raw);
        let loglik = reported_loglik(counts, &model, config);
        let candidate = LinkFit {
            model,
            loglik,
            initial_loglik,
            converged: min.converged,
            iterations: min.iterations,
            loss_trace: min.trace,
        };
        let better = match &best {
            None => true,
            Some(b) => candidate.loglik > b.loglik || (b.loglik.is_nan() && !candidate.loglik.is_nan()),
        };
        if better {
            best = Some(candidate);
        }
    }
    best.ok_or_else(|| Error::NumericalFailure(format!("no valid {link} starting point")))
}

/// Fits both links and keeps the one with the higher log-likelihood
/// (ties go to `exp`).
pub fn fit<T: Real>(counts: &Counts, config: &FitConfig) -> Result<FitResult<T>> {
    config.validate()?;
    check_input(counts, config.rank)?;
    let (relu, exp) = rayon::join(|| fit_link::<T>(counts, Link::Relu, config), || fit_link::<T>(counts, Link::Exp, config));
    let (winner, loser) = match (relu, exp) {
        (Ok(r), Ok(e)) => {
            if r.loglik > e.loglik { (r, Some(e)) } else { (e, Some(r)) }
        }
        (Ok(r), Err(_)) => (r, None),
        (Err(_), Ok(e)) => (e, None),
        (Err(e), Err(_)) => return Err(e),
    };
    Ok(FitResult {
        chosen_link: winner.model.link,
        loglik: winner.loglik,
        converged: winner.converged,
        iterations: winner.iterations,
        rejected_loglik: loser.as_ref().map_or(T::neg_infinity(), |l| l.loglik),
        rejected_converged: loser.as_ref().is_some_and(|l| l.converged),
        model: winner.model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::Poisson;

    fn planted_rank1(seed: u64) -> (Counts, Matrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..20).map(|_| rng.gen_range(5f64.ln()..25f64.ln())).collect();
        let b: Vec<f64> = (0..10).map(|_| rng.gen_range(0.0..2f64.ln())).collect();
        let mean = Matrix::from_fn(20, 10, |i, j| (a[i] + b[j]).exp());
        let counts = Counts::from_row_major(
            20,
            10,
            mean.as_slice().iter().map(|&mu| Poisson::new(mu).unwrap().sample(&mut rng) as u64).collect(),
        );
        (counts, mean)
    }

    fn rel_frobenius(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
        a.sub(b).frobenius_norm() / b.frobenius_norm()
    }

    #[test]
    fn planted_rank1_recovery() {
        let (counts, mean) = planted_rank1(11);
        let config = FitConfig { rank: 1, ..Default::default() };
        let result = fit::<f64>(&counts, &config).unwrap();
        assert!(rel_frobenius(&result.model.mean(), &mean) < 0.15);
        assert!(result.loglik >= result.rejected_loglik);
    }

    #[test]
    fn constant_matrix() {
        let counts = Counts::from_row_major(4, 3, vec![7; 12]);
        for link in Link::ALL {
            let f = fit_link::<f64>(&counts, link, &FitConfig { rank: 1, ..Default::default() }).unwrap();
            assert!(f.model.mean().as_slice().iter().all(|&x| (x - 7.0).abs() < 0.07), "{link}");
        }
    }

    #[test]
    fn descent_property_and_monotone_trace() {
        let (counts, _) = planted_rank1(5);
        for link in Link::ALL {
            let f = fit_link::<f64>(&counts, link, &FitConfig { rank: 2, ..Default::default() }).unwrap();
            assert!(f.loglik >= f.initial_loglik - 1e-6 * f.initial_loglik.abs(), "{link}");
            assert!(f.loss_trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn input_validation() {
        let counts = Counts::from_rows(&[vec![1, 2, 3], vec![0, 0, 0], vec![4, 5, 6]]);
        let config = FitConfig { rank: 1, ..Default::default() };
        assert!(matches!(fit::<f64>(&counts, &config), Err(Error::DegenerateInput(_))));
        let counts = Counts::from_rows(&[vec![1, 2], vec![3, 4]]);
        assert!(matches!(fit::<f64>(&counts, &FitConfig { rank: 2, ..Default::default() }), Err(Error::InvalidRank { .. })));
        assert!(FitConfig { restarts: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let (counts, _) = planted_rank1(3);
        let config = FitConfig { rank: 2, seed: 9, ..Default::default() };
        assert_eq!(fit::<f64>(&counts, &config).unwrap(), fit::<f64>(&counts, &config).unwrap());
    }

    #[test]
    fn fits_in_f32() {
        let (counts, mean) = planted_rank1(2);
        let config = FitConfig { rank: 1, gtol: 1e-3, ftol: 1e-6, ..Default::default() };
        let result = fit_link::<f32>(&counts, Link::Exp, &config).unwrap();
        let fitted = Matrix::from_fn(20, 10, |i, j| result.model.mean()[(i, j)] as f64);
        assert!(rel_frobenius(&fitted, &mean) < 0.15);
    }
}
