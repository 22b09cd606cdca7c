//! Dense and sparse complex operators.
//!
//! The composite space never exceeds a few hundred dimensions, so states and
//! density operators are dense row-major buffers. Physical operators (ladder,
//! spin flips, Hamiltonians assembled from them) have a handful of non-zeros
//! per row and are kept as coordinate lists; every product that the
//! propagators need is "sparse on the left, dense on the right".

use nalgebra::DMatrix;

use crate::scalar::{czero, Real, C};

/// Square complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<T: Real = f64> {
    dim: usize,
    data: Vec<C<T>>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![czero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = C::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    /// Panics if `data.len() != dim * dim`.
    pub fn from_row_major(dim: usize, data: Vec<C<T>>) -> Self {
        assert_eq!(data.len(), dim * dim, "row-major buffer has wrong length");
        Self { dim, data }
    }

    /// `|v><v|`
    pub fn outer(v: &[C<T>]) -> Self {
        Self::from_fn(v.len(), |r, c| v[r] * v[c].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C<T>> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[C<T>] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self[(c, r)].conj())
    }

    pub fn trace(&self) -> C<T> {
        (0..self.dim).fold(czero(), |acc, i| acc + self[(i, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for r in 0..n {
            for k in 0..n {
                let a = self[(r, k)];
                if a == czero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[r * n..(r + 1) * n];
                for (d, b) in dst.iter_mut().zip(orow) {
                    *d = *d + a * *b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C<T>]) -> Vec<C<T>> {
        (0..self.dim)
            .map(|r| self.row(r).iter().zip(v).fold(czero(), |acc, (a, b)| acc + *a * *b))
            .collect()
    }

    pub fn scaled(&self, s: C<T>) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| *x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a + *b).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a - *b).collect(),
        }
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }

    /// `max |M - M^dagger|`
    pub fn hermiticity_error(&self) -> T {
        let n = self.dim;
        let mut worst = T::zero();
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Replaces `M` by `(M + M^dagger)/2` and returns the removed anti-Hermitian size.
    pub fn symmetrize(&mut self) -> T {
        let n = self.dim;
        let half = T::lit(0.5);
        let mut worst = T::zero();
        for r in 0..n {
            for c in r..n {
                let a = self[(r, c)];
                let b = self[(c, r)].conj();
                worst = worst.max((a - b).norm());
                let m = (a + b) * half;
                self[(r, c)] = m;
                self[(c, r)] = m.conj();
            }
        }
        worst
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.dim, other.dim);
        Self::from_fn(n * m, |r, c| self[(r / m, c / m)] * other[(r % m, c % m)])
    }

    pub fn to_nalgebra(&self) -> DMatrix<C<f64>> {
        DMatrix::from_fn(self.dim, self.dim, |r, c| {
            let z = self[(r, c)];
            C::new(z.re.to_f64_lossy(), z.im.to_f64_lossy())
        })
    }

    /// Eigenvalues of the Hermitian part, ascending. Diagnostics run in `f64`.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let mut m = self.to_nalgebra();
        m = (&m + m.adjoint()) * C::new(0.5, 0.0);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Eigen-decomposition of the Hermitian part as `(eigenvalue, eigenvector)` pairs.
    pub fn hermitian_eigensystem(&self) -> Vec<(f64, Vec<C<T>>)> {
        let mut m = self.to_nalgebra();
        m = (&m + m.adjoint()) * C::new(0.5, 0.0);
        let eig = m.symmetric_eigen();
        (0..self.dim)
            .map(|k| {
                let v = eig
                    .eigenvectors
                    .column(k)
                    .iter()
                    .map(|z| C::new(T::lit(z.re), T::lit(z.im)))
                    .collect();
                (eig.eigenvalues[k], v)
            })
            .collect()
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for DenseMatrix<T> {
    type Output = C<T>;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &C<T> {
        &self.data[r * self.dim + c]
    }
}

impl<T: Real> std::ops::IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C<T> {
        &mut self.data[r * self.dim + c]
    }
}

/// Sparse square operator stored as `(row, col, value)` triplets.
///
/// Duplicate coordinates are allowed and add up, which lets time-dependent
/// Hamiltonians be assembled by concatenating scaled fixed terms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseOp<T: Real = f64> {
    dim: usize,
    entries: Vec<(usize, usize, C<T>)>,
}

impl<T: Real> SparseOp<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            entries: (0..dim).map(|i| (i, i, C::new(T::one(), T::zero()))).collect(),
        }
    }

    pub fn from_triplets(dim: usize, entries: Vec<(usize, usize, C<T>)>) -> Self {
        debug_assert!(entries.iter().all(|&(r, c, _)| r < dim && c < dim));
        Self { dim, entries }
    }

    pub fn from_dense(m: &DenseMatrix<T>) -> Self {
        let n = m.dim();
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let v = m[(r, c)];
                if v != czero() {
                    entries.push((r, c, v));
                }
            }
        }
        Self { dim: n, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, C<T>)] {
        &self.entries
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Appends `s * other` (duplicates allowed).
    pub fn push_scaled(&mut self, other: &Self, s: C<T>) {
        debug_assert_eq!(self.dim, other.dim);
        if s == czero() {
            return;
        }
        self.entries.extend(other.entries.iter().map(|&(r, c, v)| (r, c, v * s)));
    }

    pub fn scaled(&self, s: C<T>) -> Self {
        let mut out = Self::zeros(self.dim);
        out.push_scaled(self, s);
        out
    }

    pub fn plus(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.push_scaled(other, C::new(T::one(), T::zero()));
        out
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect(),
        }
    }

    /// Merges duplicates and drops exact zeros.
    pub fn compressed(&self) -> Self {
        Self::from_dense(&self.to_dense())
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] = m[(r, c)] + v;
        }
        m
    }

    pub fn kron(&self, other: &Self) -> Self {
        let m = other.dim;
        let mut entries = Vec::with_capacity(self.nnz() * other.nnz());
        for &(r1, c1, v1) in &self.entries {
            for &(r2, c2, v2) in &other.entries {
                entries.push((r1 * m + r2, c1 * m + c2, v1 * v2));
            }
        }
        Self {
            dim: self.dim * m,
            entries,
        }
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut by_row: Vec<Vec<(usize, C<T>)>> = vec![Vec::new(); self.dim];
        for &(r, c, v) in &other.entries {
            by_row[r].push((c, v));
        }
        let mut entries = Vec::new();
        for &(r, k, a) in &self.entries {
            for &(c, b) in &by_row[k] {
                entries.push((r, c, a * b));
            }
        }
        Self { dim: self.dim, entries }.compressed()
    }

    /// `out += self * x`
    #[inline]
    pub fn mul_vec_acc(&self, x: &[C<T>], out: &mut [C<T>]) {
        for &(r, c, v) in &self.entries {
            out[r] = out[r] + v * x[c];
        }
    }

    pub fn mul_vec(&self, x: &[C<T>]) -> Vec<C<T>> {
        let mut out = vec![czero(); self.dim];
        self.mul_vec_acc(x, &mut out);
        out
    }

    /// `out += self * m` for row-major square buffers of this dimension.
    #[inline]
    pub fn mul_dense_acc(&self, m: &[C<T>], out: &mut [C<T>]) {
        let n = self.dim;
        for &(r, k, v) in &self.entries {
            let src = &m[k * n..(k + 1) * n];
            let dst = &mut out[r * n..(r + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *d + v * *s;
            }
        }
    }

    pub fn mul_dense(&self, m: &DenseMatrix<T>) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.dim);
        self.mul_dense_acc(m.as_slice(), out.as_mut_slice());
        out
    }

    /// `<x| self |y>`
    pub fn expectation(&self, x: &[C<T>], y: &[C<T>]) -> C<T> {
        self.entries
            .iter()
            .fold(czero(), |acc, &(r, c, v)| acc + x[r].conj() * v * y[c])
    }

    /// `max |H - H^dagger|` after merging duplicates.
    pub fn hermiticity_error(&self) -> T {
        self.to_dense().hermiticity_error()
    }
}

/// In-place conjugate transpose of a row-major square buffer.
pub(crate) fn adjoint_in_place<T: Real>(m: &mut [C<T>], n: usize) {
    for r in 0..n {
        m[r * n + r] = m[r * n + r].conj();
        for c in (r + 1)..n {
            let a = m[r * n + c];
            let b = m[c * n + r];
            m[r * n + c] = b.conj();
            m[c * n + r] = a.conj();
        }
    }
}

/// Squared Euclidean norm.
pub fn norm_sqr<T: Real>(v: &[C<T>]) -> T {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `<a|b>`
pub fn inner<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(czero(), |acc, (x, y)| acc + x.conj() * *y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{ci, cone};

    #[test]
    fn sparse_dense_products_agree() {
        let a = DenseMatrix::<f64>::from_fn(3, |r, c| C::new((r + 2 * c) as f64, r as f64 - c as f64));
        let s = SparseOp::from_dense(&a);
        let b = DenseMatrix::<f64>::from_fn(3, |r, c| C::new((r * c) as f64, 1.0));
        assert!(s.mul_dense(&b).max_abs_diff(&a.matmul(&b)) < 1e-14);
        let v = vec![cone(), ci(), C::new(2.0, -1.0)];
        let dv = a.matvec(&v);
        let sv = s.mul_vec(&v);
        for (x, y) in dv.iter().zip(&sv) {
            assert!((x - y).norm() < 1e-14);
        }
        assert!(s.matmul(&s).to_dense().max_abs_diff(&a.matmul(&a)) < 1e-12);
    }

    #[test]
    fn kron_matches_dense() {
        let a = DenseMatrix::<f64>::from_fn(2, |r, c| C::new(r as f64, c as f64 + 1.0));
        let b = DenseMatrix::<f64>::from_fn(3, |r, c| C::new((r * 3 + c) as f64, 0.5));
        let sk = SparseOp::from_dense(&a).kron(&SparseOp::from_dense(&b));
        assert!(sk.to_dense().max_abs_diff(&a.kron(&b)) < 1e-14);
    }

    #[test]
    fn adjoint_in_place_matches_adjoint() {
        let a = DenseMatrix::<f64>::from_fn(4, |r, c| C::new(r as f64 * 0.3, c as f64 - 1.0));
        let mut buf = a.as_slice().to_vec();
        adjoint_in_place(&mut buf, 4);
        assert_eq!(buf, a.adjoint().into_vec());
    }

    #[test]
    fn symmetrize_reports_drift() {
        let mut a = DenseMatrix::<f64>::identity(2);
        a[(0, 1)] = C::new(0.0, 1e-3);
        let drift = a.symmetrize();
        assert!((drift - 1e-3).abs() < 1e-15);
        assert!(a.hermiticity_error() < 1e-18);
    }

    #[test]
    fn eigenvalues_of_projector() {
        let v = vec![C::new(0.6, 0.0), C::new(0.0, 0.8)];
        let p = DenseMatrix::outer(&v);
        let ev = p.hermitian_eigenvalues();
        assert!(ev[0].abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }
}
