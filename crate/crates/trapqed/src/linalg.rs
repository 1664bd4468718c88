//! Small dense linear algebra used by the DVR, the quadrature rules and the
//! steady-state solver.
//!
//! Everything here operates on matrices of at most a few hundred rows, so the
//! implementations favour robustness and genericity over the scalar type
//! rather than blocking/vectorization.

use crate::error::{Error, Result};
use crate::scalar::{c, cone, czero, Scalar, C};

// ---------------------------------------------------------------------------
// dense matrices
// ---------------------------------------------------------------------------

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat<T: Scalar> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C<T>>,
}

impl<T: Scalar> CMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![czero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = cone();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[C<T>] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [C<T>] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self * other`, accumulated in a fresh matrix.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == czero() {
                    continue;
                }
                let src = other.row(k);
                let dst = out.row_mut(i);
                for j in 0..other.cols {
                    dst[j] += a * src[j];
                }
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for CMat<T> {
    type Output = C<T>;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C<T> {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for CMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C<T> {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RMat<T: Scalar> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> RMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

impl<T: Scalar> std::ops::Index<(usize, usize)> for RMat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T: Scalar> std::ops::IndexMut<(usize, usize)> for RMat<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

// ---------------------------------------------------------------------------
// symmetric tridiagonal eigenproblem (implicit-shift QL)
// ---------------------------------------------------------------------------

/// Eigendecomposition of a symmetric tridiagonal matrix.
///
/// `diag` has length n, `off` length n-1 (sub/superdiagonal). Returns
/// eigenvalues in ascending order and the orthogonal matrix whose *columns*
/// are the matching eigenvectors: `A = Z diag(w) Z^T`.
pub fn sym_tridiag_eigen<T: Scalar>(diag: &[T], off: &[T]) -> Result<(Vec<T>, RMat<T>)> {
    let n = diag.len();
    assert_eq!(off.len(), n.saturating_sub(1));
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..n - 1].copy_from_slice(off);
    let mut z = RMat::identity(n);
    let eps = T::epsilon();

    for l in 0..n {
        let mut iter = 0usize;
        loop {
            // look for a negligible subdiagonal element
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::EigenNonConvergence(iter));
            }
            let two = T::lit(2.0);
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            let sign_r = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let (mut s, mut cth) = (T::one(), T::one());
            let mut p = T::zero();
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = cth * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                cth = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * cth * b;
                p = s * r;
                d[i + 1] = g + p;
                g = cth * r - b;
                for k in 0..n {
                    f = z[(k, i + 1)];
                    z[(k, i + 1)] = s * z[(k, i)] + cth * f;
                    z[(k, i)] = cth * z[(k, i)] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }

    // sort ascending, permuting eigenvector columns along
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("NaN eigenvalue"));
    let w: Vec<T> = order.iter().map(|&j| d[j]).collect();
    let mut zs = RMat::zeros(n, n);
    for (newj, &oldj) in order.iter().enumerate() {
        for k in 0..n {
            zs[(k, newj)] = z[(k, oldj)];
        }
    }
    Ok((w, zs))
}

// ---------------------------------------------------------------------------
// complex LU with partial pivoting
// ---------------------------------------------------------------------------

/// LU factorization of a square complex matrix with partial pivoting.
pub struct Lu<T: Scalar> {
    lu: CMat<T>,
    piv: Vec<usize>,
}

pub fn lu_factor<T: Scalar>(a: &CMat<T>) -> Result<Lu<T>> {
    assert_eq!(a.rows, a.cols, "LU needs a square matrix");
    let n = a.rows;
    let mut lu = a.clone();
    let mut piv = vec![0usize; n];
    let mut pivot_max = T::zero();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].norm_sqr();
        for i in k + 1..n {
            let v = lu[(i, k)].norm_sqr();
            if v > best {
                best = v;
                p = i;
            }
        }
        pivot_max = pivot_max.max(best);
        // numerically singular: pivot collapsed relative to the largest seen
        let ratio = T::epsilon() * T::lit(100.0);
        if best == T::zero() || best.sqrt() < pivot_max.sqrt() * ratio {
            return Err(Error::SingularSystem(k));
        }
        piv[k] = p;
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let m = lu[(i, k)] / pivot;
            lu[(i, k)] = m;
            if m != czero() {
                for j in k + 1..n {
                    let sub = m * lu[(k, j)];
                    lu[(i, j)] -= sub;
                }
            }
        }
    }
    Ok(Lu { lu, piv })
}

impl<T: Scalar> Lu<T> {
    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [C<T>]) {
        let n = self.lu.rows;
        assert_eq!(b.len(), n);
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for i in 1..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..n {
                acc -= self.lu[(i, j)] * b[j];
            }
            b[i] = acc / self.lu[(i, i)];
        }
    }
}

/// Solve `A x = b` with one pass of iterative refinement.
pub fn solve_refined<T: Scalar>(a: &CMat<T>, b: &[C<T>]) -> Result<Vec<C<T>>> {
    let lu = lu_factor(a)?;
    let mut x = b.to_vec();
    lu.solve(&mut x);
    // residual r = b - A x, correction A dx = r
    let n = a.rows;
    let mut r = b.to_vec();
    for i in 0..n {
        let mut acc = czero();
        for j in 0..n {
            acc += a[(i, j)] * x[j];
        }
        r[i] -= acc;
    }
    lu.solve(&mut r);
    for i in 0..n {
        x[i] += r[i];
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// complex Schur decomposition (Hessenberg + explicitly shifted QR)
// ---------------------------------------------------------------------------

/// Schur form `A = Q T Q^dagger` with `T` upper triangular and `Q` unitary.
#[derive(Debug, Clone)]
pub struct Schur<T: Scalar> {
    pub q: CMat<T>,
    pub t: CMat<T>,
}

impl<T: Scalar> Schur<T> {
    /// Diagonal of `T`, i.e. the eigenvalues.
    pub fn eigenvalues(&self) -> Vec<C<T>> {
        (0..self.t.rows).map(|i| self.t[(i, i)]).collect()
    }
}

/// Complex Givens rotation `[[c, s], [-conj(s), c]]` (c real) with
/// `G [a; b] = [r; 0]`.
#[inline]
fn givens<T: Scalar>(a: C<T>, b: C<T>) -> (T, C<T>) {
    if b == czero() {
        return (T::one(), czero());
    }
    if a == czero() {
        return (T::zero(), b.conj() / C::from(b.norm()));
    }
    let na = a.norm();
    let r = (na * na + b.norm_sqr()).sqrt();
    let cth = na / r;
    let s = a * b.conj() / C::from(r * na);
    (cth, s)
}

fn hessenberg<T: Scalar>(a: &CMat<T>) -> (CMat<T>, CMat<T>) {
    let n = a.rows;
    let mut h = a.clone();
    let mut q = CMat::identity(n);
    // zero column k below the first subdiagonal with a chain of Givens rotations
    for k in 0..n.saturating_sub(2) {
        for i in (k + 2..n).rev() {
            let (cth, s) = givens(h[(i - 1, k)], h[(i, k)]);
            if s == czero() && cth == T::one() {
                continue;
            }
            rot_rows(&mut h, i - 1, i, cth, s, k, n);
            rot_cols(&mut h, i - 1, i, cth, s, 0, n);
            rot_cols(&mut q, i - 1, i, cth, s, 0, n);
        }
    }
    (h, q)
}

/// Left-apply `G` to rows (r1, r2), columns `[jlo, jhi)`.
#[inline]
fn rot_rows<T: Scalar>(m: &mut CMat<T>, r1: usize, r2: usize, cth: T, s: C<T>, jlo: usize, jhi: usize) {
    for j in jlo..jhi {
        let x = m[(r1, j)];
        let y = m[(r2, j)];
        m[(r1, j)] = x * C::from(cth) + s * y;
        m[(r2, j)] = -s.conj() * x + y * C::from(cth);
    }
}

/// Right-apply `G^dagger` to columns (c1, c2), rows `[ilo, ihi)`.
#[inline]
fn rot_cols<T: Scalar>(m: &mut CMat<T>, c1: usize, c2: usize, cth: T, s: C<T>, ilo: usize, ihi: usize) {
    for i in ilo..ihi {
        let x = m[(i, c1)];
        let y = m[(i, c2)];
        m[(i, c1)] = x * C::from(cth) + y * s.conj();
        m[(i, c2)] = -s * x + y * C::from(cth);
    }
}

/// Complex Schur decomposition by explicitly shifted Hessenberg QR iteration.
pub fn schur<T: Scalar>(a: &CMat<T>) -> Result<Schur<T>> {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    if n == 0 {
        return Ok(Schur { q: CMat::identity(0), t: CMat::identity(0) });
    }
    let (mut h, mut q) = hessenberg(a);
    let eps = T::epsilon();
    let scale = h.max_abs().max(T::lit(1e-300));
    let mut hi = n - 1;
    let mut total_iter = 0usize;
    let max_iter = 60 * n.max(4);

    while hi > 0 {
        // deflate converged subdiagonals
        let mut deflated = false;
        for i in (1..=hi).rev() {
            let tol = eps * (h[(i - 1, i - 1)].norm() + h[(i, i)].norm()).max(scale * eps);
            if h[(i, i - 1)].norm() <= tol {
                h[(i, i - 1)] = czero();
                if i == hi {
                    hi -= 1;
                    deflated = true;
                    break;
                }
            }
        }
        if deflated {
            continue;
        }
        if hi == 0 {
            break;
        }
        // active block [lo, hi]
        let mut lo = hi;
        while lo > 0 && h[(lo, lo - 1)] != czero() {
            lo -= 1;
        }
        total_iter += 1;
        if total_iter > max_iter {
            return Err(Error::EigenNonConvergence(total_iter));
        }
        // Wilkinson shift from the trailing 2x2 of the active block
        let mu = {
            let am = h[(hi - 1, hi - 1)];
            let bm = h[(hi - 1, hi)];
            let cm = h[(hi, hi - 1)];
            let dm = h[(hi, hi)];
            if total_iter.is_multiple_of(16) {
                // exceptional shift to break symmetry-induced stalls
                dm + C::from(cm.norm() + bm.norm()) * c::<T>(0.75, 0.4375)
            } else {
                let half = c::<T>(0.5, 0.0);
                let tr2 = (am + dm) * half;
                let disc = ((am - dm) * half * ((am - dm) * half) + bm * cm).sqrt();
                let e1 = tr2 + disc;
                let e2 = tr2 - disc;
                if (e1 - dm).norm() < (e2 - dm).norm() {
                    e1
                } else {
                    e2
                }
            }
        };
        // explicit shifted QR sweep on [lo, hi]
        for k in lo..=hi {
            h[(k, k)] -= mu;
        }
        let mut rots: Vec<(T, C<T>)> = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (cth, s) = givens(h[(k, k)], h[(k + 1, k)]);
            rot_rows(&mut h, k, k + 1, cth, s, k, n);
            h[(k + 1, k)] = czero();
            rots.push((cth, s));
        }
        for (idx, &(cth, s)) in rots.iter().enumerate() {
            let k = lo + idx;
            rot_cols(&mut h, k, k + 1, cth, s, 0, (k + 2).min(hi + 1));
            rot_cols(&mut q, k, k + 1, cth, s, 0, n);
        }
        for k in lo..=hi {
            h[(k, k)] += mu;
        }
    }
    // clean below-diagonal noise
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = czero();
        }
    }
    Ok(Schur { q, t: h })
}

// ---------------------------------------------------------------------------
// Sylvester solve from Schur forms
// ---------------------------------------------------------------------------

/// Solve `-i (A X - X B^dagger) = C` given Schur forms of `A` and `B`.
///
/// Denominators are the eigenvalue differences `lam_A - conj(lam_B)`; any
/// below `tol` counts as a dark (singular) direction and aborts.
pub fn sylvester_neg_i<T: Scalar>(
    sa: &Schur<T>,
    sb: &Schur<T>,
    rhs: &CMat<T>,
    tol: T,
) -> Result<CMat<T>> {
    let na = sa.t.rows;
    let nb = sb.t.rows;
    assert_eq!(rhs.rows, na);
    assert_eq!(rhs.cols, nb);
    // nullity scan first so the error is informative
    let nullity = (0..na)
        .flat_map(|i| (0..nb).map(move |j| (i, j)))
        .filter(|&(i, j)| (sa.t[(i, i)] - sb.t[(j, j)].conj()).norm() < tol)
        .count();
    if nullity > 0 {
        return Err(Error::SingularSteadyState { nullity });
    }
    let ctil = sa.q.adjoint().mul(rhs).mul(&sb.q);
    let mut y = CMat::zeros(na, nb);
    let i_unit = c::<T>(0.0, 1.0);
    for i in (0..na).rev() {
        for j in (0..nb).rev() {
            let mut acc = czero();
            for k in i + 1..na {
                acc += sa.t[(i, k)] * y[(k, j)];
            }
            for k in j + 1..nb {
                acc -= y[(i, k)] * sb.t[(j, k)].conj();
            }
            let lam = sa.t[(i, i)] - sb.t[(j, j)].conj();
            y[(i, j)] = (i_unit * ctil[(i, j)] - acc) / lam;
        }
    }
    Ok(sa.q.mul(&y).mul(&sb.q.adjoint()))
}

// ---------------------------------------------------------------------------
// one-sided Jacobi SVD (real, small)
// ---------------------------------------------------------------------------

/// Thin SVD `M = U diag(s) V^T` of a small real matrix via one-sided Jacobi.
/// Singular values come out unsorted but non-negative.
pub fn jacobi_svd<T: Scalar>(m: &RMat<T>) -> (RMat<T>, Vec<T>, RMat<T>) {
    let rows = m.rows;
    let cols = m.cols;
    let mut u = m.clone();
    let mut v = RMat::identity(cols);
    let eps = T::epsilon() * T::lit(8.0);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let mut app = T::zero();
                let mut aqq = T::zero();
                let mut apq = T::zero();
                for i in 0..rows {
                    app += u[(i, p)] * u[(i, p)];
                    aqq += u[(i, q)] * u[(i, q)];
                    apq += u[(i, p)] * u[(i, q)];
                }
                if apq.abs() <= eps * (app * aqq).sqrt() || apq == T::zero() {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (T::lit(2.0) * apq);
                let t = {
                    let sign = if zeta >= T::zero() { T::one() } else { -T::one() };
                    sign / (zeta.abs() + (T::one() + zeta * zeta).sqrt())
                };
                let cth = T::one() / (T::one() + t * t).sqrt();
                let s = cth * t;
                for i in 0..rows {
                    let x = u[(i, p)];
                    let y = u[(i, q)];
                    u[(i, p)] = cth * x - s * y;
                    u[(i, q)] = s * x + cth * y;
                }
                for i in 0..cols {
                    let x = v[(i, p)];
                    let y = v[(i, q)];
                    v[(i, p)] = cth * x - s * y;
                    v[(i, q)] = s * x + cth * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sig = vec![T::zero(); cols];
    for j in 0..cols {
        let mut nrm = T::zero();
        for i in 0..rows {
            nrm += u[(i, j)] * u[(i, j)];
        }
        let nrm = nrm.sqrt();
        sig[j] = nrm;
        if nrm > T::zero() {
            for i in 0..rows {
                u[(i, j)] /= nrm;
            }
        }
    }
    (u, sig, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(n: usize, seed: u64) -> CMat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, n, |_, _| {
            C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    #[test]
    fn tridiag_eigen_2x2() {
        // [[0, s], [s, 0]] has eigenvalues -s, +s
        let (w, z) = sym_tridiag_eigen(&[0.0f64, 0.0], &[0.7]).unwrap();
        assert!((w[0] + 0.7).abs() < 1e-14);
        assert!((w[1] - 0.7).abs() < 1e-14);
        // orthogonality
        let zt = z.transpose().mul(&z);
        assert!(zt.max_abs_diff(&RMat::identity(2)) < 1e-14);
    }

    #[test]
    fn tridiag_eigen_reconstructs() {
        let n = 12;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64) * 0.3 - 1.0).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 0.5 + 0.1 * (i as f64)).collect();
        let (w, z) = sym_tridiag_eigen(&diag, &off).unwrap();
        // A z_j = w_j z_j
        for j in 0..n {
            for i in 0..n {
                let mut av = diag[i] * z[(i, j)];
                if i > 0 {
                    av += off[i - 1] * z[(i - 1, j)];
                }
                if i + 1 < n {
                    av += off[i] * z[(i + 1, j)];
                }
                assert!((av - w[j] * z[(i, j)]).abs() < 1e-12, "residual at ({i},{j})");
            }
        }
        let zt = z.transpose().mul(&z);
        assert!(zt.max_abs_diff(&RMat::identity(n)) < 1e-13);
    }

    #[test]
    fn lu_solves() {
        let a = random_cmat(9, 1);
        let b: Vec<C<f64>> = (0..9).map(|i| C::new(i as f64, -0.5 * i as f64)).collect();
        let x = solve_refined(&a, &b).unwrap();
        for i in 0..9 {
            let mut acc = C::new(0.0, 0.0);
            for j in 0..9 {
                acc += a[(i, j)] * x[j];
            }
            assert!((acc - b[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn lu_detects_singular() {
        let mut a = CMat::<f64>::zeros(3, 3);
        a[(0, 0)] = C::new(1.0, 0.0);
        a[(1, 1)] = C::new(1.0, 0.0);
        // third row/col all zero
        assert!(matches!(lu_factor(&a), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn schur_residual_random() {
        for seed in [2u64, 3, 4] {
            let a = random_cmat(14, seed);
            let s = schur(&a).unwrap();
            // unitarity of Q
            let qq = s.q.adjoint().mul(&s.q);
            assert!(qq.max_abs_diff(&CMat::identity(14)) < 1e-12, "Q not unitary");
            // A Q = Q T
            let aq = a.mul(&s.q);
            let qt = s.q.mul(&s.t);
            assert!(aq.max_abs_diff(&qt) < 1e-11, "Schur residual too large");
            // strictly triangular
            for i in 0..14 {
                for j in 0..i {
                    assert_eq!(s.t[(i, j)], C::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn schur_diagonal_input() {
        let mut a = CMat::<f64>::zeros(4, 4);
        for i in 0..4 {
            a[(i, i)] = C::new(i as f64, -(i as f64));
        }
        let s = schur(&a).unwrap();
        let aq = a.mul(&s.q);
        let qt = s.q.mul(&s.t);
        assert!(aq.max_abs_diff(&qt) < 1e-13);
    }

    #[test]
    fn sylvester_solves() {
        let a = random_cmat(8, 7);
        let b = random_cmat(6, 8);
        let rhs = CMat::from_fn(8, 6, |i, j| C::new((i + j) as f64 * 0.1, 0.3 - j as f64 * 0.05));
        let sa = schur(&a).unwrap();
        let sb = schur(&b).unwrap();
        let x = sylvester_neg_i(&sa, &sb, &rhs, 1e-12).unwrap();
        // -i (A X - X B^dagger) should equal rhs
        let ax = a.mul(&x);
        let xb = x.mul(&b.adjoint());
        let mut res = CMat::zeros(8, 6);
        for i in 0..8 {
            for j in 0..6 {
                res[(i, j)] = C::new(0.0, -1.0) * (ax[(i, j)] - xb[(i, j)]) - rhs[(i, j)];
            }
        }
        assert!(res.max_abs() < 1e-10, "sylvester residual {}", res.max_abs());
    }

    #[test]
    fn svd_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = {
            let mut m = RMat::<f64>::zeros(10, 10);
            for i in 0..10 {
                for j in 0..10 {
                    m[(i, j)] = rng.gen_range(-1.0..1.0);
                }
            }
            m
        };
        let (u, s, v) = jacobi_svd(&m);
        let mut rec = RMat::<f64>::zeros(10, 10);
        for i in 0..10 {
            for j in 0..10 {
                let mut acc = 0.0;
                for k in 0..10 {
                    acc += u[(i, k)] * s[k] * v[(j, k)];
                }
                rec[(i, j)] = acc;
            }
        }
        assert!(rec.max_abs_diff(&m) < 1e-12);
    }
}
