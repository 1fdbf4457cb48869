//! Small dense linear algebra: row-major matrices, Householder QR,
//! one-sided Jacobi SVD and cyclic Jacobi symmetric eigendecomposition.
//!
//! Sizes in this crate are modest (at most a few thousand rows and about a
//! hundred columns), so the Jacobi methods are accurate and fast enough.

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[T]) {
        for (i, &v) in values.iter().enumerate() {
            self[(i, j)] = v;
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// `selfᵗ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// Multiplies column `k` by `scale[k]`.
    pub fn scale_columns(&self, scale: &[T]) -> Self {
        assert_eq!(scale.len(), self.cols);
        Self::from_fn(self.rows, self.cols, |i, j| self[(i, j)] * scale[j])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        assert!(k <= self.cols);
        Self::from_fn(self.rows, k, |i, j| self[(i, j)])
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self::from_fn(rows.len(), self.cols, |i, j| self[(rows[i], j)])
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |i, j| self[(i, cols[j])])
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        if self.rows != self.cols {
            return false;
        }
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

/// Thin QR factorization of an `m × k` matrix with `m ≥ k`.
///
/// Returns `(Q, R)` with `Q` of shape `m × k` having orthonormal columns
/// and `R` upper triangular `k × k`, so that `A = Q R`.
pub fn thin_qr<T: Real>(a: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let (m, k) = a.shape();
    assert!(m >= k, "thin_qr needs rows >= cols");
    let mut r = a.clone();
    let mut reflectors: Vec<Vec<T>> = Vec::with_capacity(k);
    for j in 0..k {
        let norm = (j..m).map(|i| r[(i, j)] * r[(i, j)]).sum::<T>().sqrt();
        let mut v: Vec<T> = (j..m).map(|i| r[(i, j)]).collect();
        if norm == T::zero() {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if v[0] >= T::zero() { -norm } else { norm };
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().map(|&x| x * x).sum::<T>();
        if vnorm2 == T::zero() {
            reflectors.push(Vec::new());
            continue;
        }
        let two = T::lit(2.0);
        for c in j..k {
            let dot = (j..m).map(|i| v[i - j] * r[(i, c)]).sum::<T>();
            let f = two * dot / vnorm2;
            for i in j..m {
                r[(i, c)] = r[(i, c)] - f * v[i - j];
            }
        }
        reflectors.push(v);
    }
    // Accumulate Q = H_0 H_1 ... H_{k-1} applied to the first k unit vectors.
    let mut q = Matrix::from_fn(m, k, |i, j| if i == j { T::one() } else { T::zero() });
    for j in (0..k).rev() {
        let v = &reflectors[j];
        if v.is_empty() {
            continue;
        }
        let vnorm2 = v.iter().map(|&x| x * x).sum::<T>();
        let two = T::lit(2.0);
        for c in 0..k {
            let dot = (j..m).map(|i| v[i - j] * q[(i, c)]).sum::<T>();
            let f = two * dot / vnorm2;
            for i in j..m {
                q[(i, c)] = q[(i, c)] - f * v[i - j];
            }
        }
    }
    let r_top = Matrix::from_fn(k, k, |i, j| if i <= j { r[(i, j)] } else { T::zero() });
    (q, r_top)
}

/// Thin singular value decomposition `A = U diag(s) Vᵗ`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub singular_values: Vec<T>,
    pub v: Matrix<T>,
}

/// One-sided Jacobi SVD. Singular values are returned in descending order;
/// the factor shapes are `m × p`, `p`, `n × p` with `p = min(m, n)`.
pub fn svd<T: Real>(a: &Matrix<T>) -> Svd<T> {
    let (m, n) = a.shape();
    if m < n {
        let t = svd(&a.transpose());
        return Svd { u: t.v, singular_values: t.singular_values, v: t.u };
    }
    // m >= n: orthogonalize the columns of a working copy.
    let mut w = a.clone();
    let mut v = Matrix::<T>::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    alpha = alpha + wp * wp;
                    beta = beta + wq * wq;
                    gamma = gamma + wp * wq;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = c * wp - s * wq;
                    w[(i, q)] = s * wp + c * wq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = (0..n).map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<T>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut u = Matrix::zeros(m, n);
    let mut vs = Matrix::zeros(n, n);
    let mut s = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s.push(sigma);
        for i in 0..n {
            vs[(i, dst)] = v[(i, src)];
        }
        if sigma > T::zero() {
            for i in 0..m {
                u[(i, dst)] = w[(i, src)] / sigma;
            }
        }
    }
    complete_null_columns(&mut u, &s);
    Svd { u, singular_values: s, v: vs }
}

/// Replaces columns of `u` belonging to zero singular values with unit vectors
/// orthogonal to the rest, so `u` always has orthonormal columns.
fn complete_null_columns<T: Real>(u: &mut Matrix<T>, s: &[T]) {
    let (m, p) = u.shape();
    for j in 0..p {
        if s[j] > T::zero() {
            continue;
        }
        for e in 0..m {
            let mut cand: Vec<T> = (0..m).map(|i| if i == e { T::one() } else { T::zero() }).collect();
            for c in 0..p {
                if c == j || (s[c] == T::zero() && c > j) {
                    continue;
                }
                let dot = (0..m).map(|i| cand[i] * u[(i, c)]).sum::<T>();
                for i in 0..m {
                    cand[i] = cand[i] - dot * u[(i, c)];
                }
            }
            let norm = cand.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm > T::lit(1e-3) {
                for i in 0..m {
                    u[(i, j)] = cand[i] / norm;
                }
                break;
            }
        }
    }
}

/// Eigensystem of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// Eigenvectors stored as columns, matching `values`.
    pub vectors: Matrix<T>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> SymmetricEigen<T> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "symmetric_eigen needs a square matrix");
    let mut d = a.clone();
    let mut v = Matrix::<T>::identity(n);
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let off: T = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| d[(i, j)] * d[(i, j)]).sum();
        let scale: T = (0..n).map(|i| d[(i, i)] * d[(i, i)]).sum::<T>() + off;
        if off <= eps * eps * scale || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = d[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = d[(p, p)];
                let aqq = d[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = if theta.is_infinite() {
                    T::zero()
                } else {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (T::one() + theta * theta).sqrt())
                };
                if t == T::zero() {
                    continue;
                }
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let dkp = d[(k, p)];
                    let dkq = d[(k, q)];
                    d[(k, p)] = c * dkp - s * dkq;
                    d[(k, q)] = s * dkp + c * dkq;
                }
                for k in 0..n {
                    let dpk = d[(p, k)];
                    let dqk = d[(q, k)];
                    d[(p, k)] = c * dpk - s * dqk;
                    d[(q, k)] = s * dpk + c * dqk;
                }
                d[(p, q)] = T::zero();
                d[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let diag: Vec<T> = (0..n).map(|i| d[(i, i)]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[b].partial_cmp(&diag[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let values = order.iter().map(|&i| diag[i]).collect();
    let vectors = v.select_columns(&order);
    SymmetricEigen { values, vectors }
}

/// Principal angles (radians, ascending) between the column spans of two
/// tall matrices.
pub fn principal_angles<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Vec<T> {
    let (qa, _) = thin_qr(a);
    let (qb, _) = thin_qr(b);
    let cross = qa.t_matmul(&qb);
    let mut cosines = svd(&cross).singular_values;
    cosines.iter_mut().for_each(|c| *c = c.min(T::one()).max(-T::one()));
    let mut angles: Vec<T> = cosines.into_iter().map(|c| c.acos()).collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    angles
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut s = seed;
        Matrix::from_fn(rows, cols, |_, _| lcg(&mut s))
    }

    #[test]
    fn qr_reconstructs_and_is_orthonormal() {
        let a = random(7, 3, 1);
        let (q, r) = thin_qr(&a);
        assert!(q.matmul(&r).sub(&a).max_abs() < 1e-12);
        assert!(q.t_matmul(&q).sub(&Matrix::identity(3)).max_abs() < 1e-12);
        for i in 0..3 {
            for j in 0..i {
                assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn svd_reconstructs_wide_and_tall() {
        for (m, n) in [(6, 4), (4, 6), (5, 5), (1, 3)] {
            let a = random(m, n, (m * 10 + n) as u64);
            let d = svd(&a);
            let rec = d.u.scale_columns(&d.singular_values).matmul(&d.v.transpose());
            assert!(rec.sub(&a).max_abs() < 1e-12, "{m}x{n}");
            assert!(d.singular_values.windows(2).all(|w| w[0] >= w[1]));
            let p = m.min(n);
            assert!(d.u.t_matmul(&d.u).sub(&Matrix::identity(p)).max_abs() < 1e-12);
            assert!(d.v.t_matmul(&d.v).sub(&Matrix::identity(p)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn svd_of_rank_deficient_keeps_orthonormal_u() {
        let a = Matrix::from_rows(&[vec![1.0f64, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        let d = svd(&a);
        assert!(d.singular_values[1].abs() < 1e-12);
        assert!(d.u.t_matmul(&d.u).sub(&Matrix::identity(2)).max_abs() < 1e-12);
    }

    #[test]
    fn eigen_two_by_two_closed_form() {
        let r = Matrix::from_rows(&[vec![1.0f64, 0.9], vec![0.9, 1.0]]);
        let e = symmetric_eigen(&r);
        assert!((e.values[0] - 1.9).abs() < 1e-12);
        assert!((e.values[1] - 0.1).abs() < 1e-12);
        let lead = e.vectors.column(0);
        let c = std::f64::consts::FRAC_1_SQRT_2;
        assert!((lead[0].abs() - c).abs() < 1e-12 && (lead[1].abs() - c).abs() < 1e-12);
        assert!(lead[0] * lead[1] > 0.0);
    }

    #[test]
    fn eigen_identity() {
        let e = symmetric_eigen(&Matrix::<f64>::identity(4));
        assert!(e.values.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        let rec = e.vectors.scale_columns(&e.values).matmul(&e.vectors.transpose());
        assert!(rec.sub(&Matrix::identity(4)).max_abs() < 1e-10);
    }

    #[test]
    fn principal_angles_of_same_span_are_zero() {
        let a = random(8, 2, 3);
        let mix = Matrix::from_rows(&[vec![2.0, 1.0], vec![-1.0, 0.5]]);
        let b = a.matmul(&mix);
        assert!(principal_angles(&a, &b).iter().all(|&t| t < 1e-6));
    }

    #[test]
    fn f32_svd_works() {
        let a = Matrix::<f32>::from_rows(&[vec![3.0, 1.0], vec![1.0, 3.0], vec![0.0, 1.0]]);
        let d = svd(&a);
        let rec = d.u.scale_columns(&d.singular_values).matmul(&d.v.transpose());
        assert!(rec.sub(&a).max_abs() < 1e-5);
    }
}
