//! Composite basis bookkeeping and sparse operator algebra on the
//! `(2 N_vib)^N`-dimensional electronic ⊗ vibrational product space.
//!
//! Flat-index convention used everywhere in the crate: atom 1 is slowest and,
//! within an atom, the electronic index is slower than the vibrational one:
//!
//! ```text
//! k = (((i_1 * N_vib + n_1) * 2 + i_2) * N_vib + n_2) ...
//! ```
//!
//! so each atom contributes a factor `2 * N_vib` with its electronic bit on
//! top of its vibrational quantum number.

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::scalar::{cone, czero, Scalar, C};

/// Product basis |i₁ n₁ i₂ n₂ …⟩ of `n_atoms` two-level atoms with `n_vib`
/// vibrational levels each.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeBasis {
    n_atoms: usize,
    n_vib: usize,
    dim: usize,
}

impl CompositeBasis {
    /// Build the basis; errors if `(2 n_vib)^n_atoms` overflows.
    pub fn new(n_atoms: usize, n_vib: usize) -> Result<Self> {
        if n_atoms < 1 || n_vib < 1 {
            return Err(Error::InvalidParameter(
                "n_atoms and n_vib must be at least 1".into(),
            ));
        }
        let loc = 2usize
            .checked_mul(n_vib)
            .ok_or(Error::DimensionOverflow { n_atoms, n_vib })?;
        let mut dim = 1usize;
        for _ in 0..n_atoms {
            dim = dim
                .checked_mul(loc)
                .ok_or(Error::DimensionOverflow { n_atoms, n_vib })?;
        }
        Ok(Self { n_atoms, n_vib, dim })
    }

    #[inline]
    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    #[inline]
    pub fn n_vib(&self) -> usize {
        self.n_vib
    }

    /// Highest vibrational quantum number, `N_vib - 1`.
    #[inline]
    pub fn n_max(&self) -> usize {
        self.n_vib - 1
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Per-atom local dimension `2 * N_vib`.
    #[inline]
    pub fn local_dim(&self) -> usize {
        2 * self.n_vib
    }

    /// Stride of atom `j` in the flat index.
    #[inline]
    pub fn stride(&self, j: usize) -> usize {
        self.local_dim().pow((self.n_atoms - 1 - j) as u32)
    }

    /// Flat index from per-atom (electronic, vibrational) pairs.
    pub fn index(&self, config: &[(usize, usize)]) -> usize {
        debug_assert_eq!(config.len(), self.n_atoms);
        let mut k = 0usize;
        for &(i, n) in config {
            debug_assert!(i < 2 && n < self.n_vib);
            k = k * self.local_dim() + i * self.n_vib + n;
        }
        k
    }

    /// Per-atom (electronic, vibrational) pairs from a flat index.
    pub fn unindex(&self, mut k: usize) -> Vec<(usize, usize)> {
        debug_assert!(k < self.dim);
        let mut out = vec![(0usize, 0usize); self.n_atoms];
        for j in (0..self.n_atoms).rev() {
            let loc = k % self.local_dim();
            k /= self.local_dim();
            out[j] = (loc / self.n_vib, loc % self.n_vib);
        }
        out
    }

    /// Electronic index (0 = ground, 1 = excited) of atom `j` in state `k`.
    #[inline]
    pub fn electronic(&self, k: usize, j: usize) -> usize {
        (k / self.stride(j)) % self.local_dim() / self.n_vib
    }

    /// Vibrational quantum number of atom `j` in state `k`.
    #[inline]
    pub fn vibrational(&self, k: usize, j: usize) -> usize {
        (k / self.stride(j)) % self.n_vib
    }

    /// Number of electronically excited atoms in state `k`.
    pub fn excitations(&self, k: usize) -> usize {
        (0..self.n_atoms).map(|j| self.electronic(k, j)).sum()
    }

    /// Sum of vibrational quanta in state `k`.
    pub fn vib_sum(&self, k: usize) -> usize {
        (0..self.n_atoms).map(|j| self.vibrational(k, j)).sum()
    }

    /// Flat index of the global ground state |g 0 g 0 …⟩.
    #[inline]
    pub fn ground_index(&self) -> usize {
        0
    }

    /// Embed a local `2 N_vib × 2 N_vib` single-atom operator on atom `j`
    /// into the composite space, acting as the identity on all other atoms.
    pub fn lift<T: Scalar>(&self, j: usize, local: &CMat<T>) -> Result<SparseOperator<T>> {
        if j >= self.n_atoms {
            return Err(Error::InvalidParameter(format!(
                "atom index {j} out of range for {} atoms",
                self.n_atoms
            )));
        }
        let loc = self.local_dim();
        if local.rows != loc || local.cols != loc {
            return Err(Error::DimensionMismatch { expected: loc, got: local.rows });
        }
        let right = self.stride(j);
        let left = self.dim / (loc * right);
        let mut triplets = Vec::new();
        for r in 0..loc {
            for col in 0..loc {
                let v = local[(r, col)];
                if v == czero() {
                    continue;
                }
                for a in 0..left {
                    let base = a * loc * right;
                    for b in 0..right {
                        triplets.push((base + r * right + b, base + col * right + b, v));
                    }
                }
            }
        }
        Ok(SparseOperator::from_triplets(self.dim, triplets))
    }
}

/// Local operator helpers on the `2 N_vib` single-atom space, electronic
/// factor ⊗ vibrational factor.
pub mod local {
    use super::*;

    /// kron(elec 2×2, vib N_vib×N_vib) as a dense local matrix.
    pub fn kron_elec_vib<T: Scalar>(elec: [[C<T>; 2]; 2], vib: &CMat<T>) -> CMat<T> {
        let nv = vib.rows;
        CMat::from_fn(2 * nv, 2 * nv, |r, c| {
            elec[r / nv][c / nv] * vib[(r % nv, c % nv)]
        })
    }

    pub fn sigma_minus<T: Scalar>(vib: &CMat<T>) -> CMat<T> {
        kron_elec_vib([[czero(), cone()], [czero(), czero()]], vib)
    }

    pub fn sigma_plus<T: Scalar>(vib: &CMat<T>) -> CMat<T> {
        kron_elec_vib([[czero(), czero()], [cone(), czero()]], vib)
    }

    pub fn excited_projector<T: Scalar>(vib: &CMat<T>) -> CMat<T> {
        kron_elec_vib([[czero(), czero()], [czero(), cone()]], vib)
    }

    pub fn identity<T: Scalar>(n_vib: usize) -> CMat<T> {
        CMat::identity(2 * n_vib)
    }
}

/// Complex sparse matrix in CSR form; all Hamiltonian and jump operators of
/// the model live here.
#[derive(Debug, Clone)]
pub struct SparseOperator<T: Scalar> {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C<T>>,
}

impl<T: Scalar> SparseOperator<T> {
    /// Assemble from (row, col, value) triplets: sorts, merges duplicates and
    /// drops entries that are exactly zero.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, C<T>)>) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C<T>> = Vec::with_capacity(triplets.len());
        let mut rows = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            debug_assert!(r < dim && c < dim);
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().expect("parallel vec") += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        // drop exact zeros created by cancellation
        let mut k = 0usize;
        for idx in 0..vals.len() {
            if vals[idx] != czero() {
                rows[k] = rows[idx];
                cols[k] = cols[idx];
                vals[k] = vals[idx];
                k += 1;
            }
        }
        rows.truncate(k);
        cols.truncate(k);
        vals.truncate(k);
        for &r in &rows {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { dim, row_ptr, cols, vals }
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_triplets(dim, Vec::new())
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, cone())).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Sorted (row, col, value) view.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C<T>)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn to_triplets(&self) -> Vec<(usize, usize, C<T>)> {
        self.entries().collect()
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.dim,
            self.entries().map(|(r, c, v)| (c, r, v.conj())).collect(),
        )
    }

    pub fn scale(&self, factor: C<T>) -> Self {
        Self::from_triplets(
            self.dim,
            self.entries().map(|(r, c, v)| (r, c, v * factor)).collect(),
        )
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut t = self.to_triplets();
        t.extend(other.entries());
        Self::from_triplets(self.dim, t)
    }

    /// Sparse-sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut acc: Vec<C<T>> = vec![czero(); self.dim];
        let mut touched: Vec<usize> = Vec::new();
        let mut triplets = Vec::new();
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.vals[k];
                let mid = self.cols[k];
                for k2 in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    let ccol = other.cols[k2];
                    if acc[ccol] == czero() {
                        touched.push(ccol);
                    }
                    acc[ccol] += a * other.vals[k2];
                }
            }
            for &ccol in &touched {
                if acc[ccol] != czero() {
                    triplets.push((r, ccol, acc[ccol]));
                }
                acc[ccol] = czero();
            }
            touched.clear();
        }
        Self::from_triplets(self.dim, triplets)
    }

    /// Dense product `A * rho` into a fresh dense matrix (row-major slice of
    /// length dim²).
    pub fn apply_left(&self, rho: &[C<T>]) -> Vec<C<T>> {
        let mut out = vec![czero(); self.dim * self.dim];
        self.apply_left_into(rho, &mut out);
        out
    }

    pub fn apply_left_into(&self, rho: &[C<T>], out: &mut [C<T>]) {
        let n = self.dim;
        assert_eq!(rho.len(), n * n);
        assert_eq!(out.len(), n * n);
        out.fill(czero());
        for r in 0..n {
            let dst = &mut out[r * n..(r + 1) * n];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.vals[k];
                let src = &rho[self.cols[k] * n..(self.cols[k] + 1) * n];
                for j in 0..n {
                    dst[j] += a * src[j];
                }
            }
        }
    }

    /// Dense product `rho * A`.
    pub fn apply_right(&self, rho: &[C<T>]) -> Vec<C<T>> {
        let mut out = vec![czero(); self.dim * self.dim];
        self.apply_right_into(rho, &mut out);
        out
    }

    pub fn apply_right_into(&self, rho: &[C<T>], out: &mut [C<T>]) {
        let n = self.dim;
        assert_eq!(rho.len(), n * n);
        assert_eq!(out.len(), n * n);
        out.fill(czero());
        for k_row in 0..n {
            for k in self.row_ptr[k_row]..self.row_ptr[k_row + 1] {
                let a = self.vals[k];
                let j = self.cols[k];
                for i in 0..n {
                    out[i * n + j] += rho[i * n + k_row] * a;
                }
            }
        }
    }

    /// `out += factor * (A rho)` without zeroing `out`.
    pub fn apply_left_scaled_acc(&self, rho: &[C<T>], factor: C<T>, out: &mut [C<T>]) {
        let n = self.dim;
        debug_assert_eq!(rho.len(), n * n);
        debug_assert_eq!(out.len(), n * n);
        for r in 0..n {
            let dst = &mut out[r * n..(r + 1) * n];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let a = self.vals[k] * factor;
                let src = &rho[self.cols[k] * n..(self.cols[k] + 1) * n];
                for j in 0..n {
                    dst[j] += a * src[j];
                }
            }
        }
    }

    /// `out += factor * (rho A)` without zeroing `out`.
    pub fn apply_right_scaled_acc(&self, rho: &[C<T>], factor: C<T>, out: &mut [C<T>]) {
        let n = self.dim;
        debug_assert_eq!(rho.len(), n * n);
        debug_assert_eq!(out.len(), n * n);
        for k_row in 0..n {
            for k in self.row_ptr[k_row]..self.row_ptr[k_row + 1] {
                let a = self.vals[k] * factor;
                let j = self.cols[k];
                for i in 0..n {
                    out[i * n + j] += rho[i * n + k_row] * a;
                }
            }
        }
    }

    /// `Tr[A rho] = Σ_{ik} A[i,k] rho[k,i]` without forming the product.
    pub fn trace_of_product(&self, rho: &[C<T>]) -> C<T> {
        let n = self.dim;
        assert_eq!(rho.len(), n * n);
        let mut acc = czero();
        for r in 0..n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * rho[self.cols[k] * n + r];
            }
        }
        acc
    }

    /// `Tr[A^dagger A rho]` without forming `A^dagger A`:
    /// `Σ_{rc} conj(A[r,c]) (A rho)[r,c]`.
    pub fn flux_expectation(&self, rho: &[C<T>]) -> C<T> {
        let arho = self.apply_left(rho);
        let n = self.dim;
        let mut acc = czero();
        for r in 0..n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k].conj() * arho[r * n + self.cols[k]];
            }
        }
        acc
    }

    /// Dense copy, for small cross-checks.
    pub fn to_dense(&self) -> CMat<T> {
        let mut m = CMat::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }

    /// Max |A - A^dagger| entry, for Hermiticity checks.
    pub fn herm_residual(&self) -> T {
        self.add(&self.adjoint().scale(crate::scalar::c(-1.0, 0.0)))
            .vals
            .iter()
            .map(|v| v.norm())
            .fold(T::zero(), T::max)
    }
}

/// Hermitian, unit-trace dense complex matrix on the composite space.
#[derive(Debug, Clone)]
pub struct DensityMatrix<T: Scalar> {
    dim: usize,
    pub data: Vec<C<T>>,
}

impl<T: Scalar> DensityMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![czero(); dim * dim] }
    }

    /// Pure state |k⟩⟨k|.
    pub fn pure(dim: usize, k: usize) -> Self {
        let mut rho = Self::zeros(dim);
        rho.data[k * dim + k] = cone();
        rho
    }

    /// All atoms in |g⟩ with every atom in its vibrational ground state.
    pub fn ground(basis: &CompositeBasis) -> Self {
        Self::pure(basis.dim(), basis.ground_index())
    }

    /// Electronic ground ⊗ product vibrational distribution with per-level
    /// populations `pops` (normalized here) on every atom.
    pub fn ground_with_vib(basis: &CompositeBasis, pops: &[T]) -> Self {
        assert_eq!(pops.len(), basis.n_vib());
        let norm: T = pops.iter().copied().sum();
        let mut rho = Self::zeros(basis.dim());
        for k in 0..basis.dim() {
            let cfg = basis.unindex(k);
            if cfg.iter().any(|&(i, _)| i != 0) {
                continue;
            }
            let mut w = T::one();
            for &(_, n) in &cfg {
                w *= (pops[n] / norm);
            }
            rho.data[k * basis.dim() + k] = C::from(w);
        }
        rho
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C<T> {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> C<T> {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).fold(czero(), |a, b| a + b)
    }

    /// `rho <- (rho + rho^dagger)/2`.
    pub fn hermitize(&mut self) {
        let n = self.dim;
        let half = T::lit(0.5);
        for i in 0..n {
            for j in i..n {
                let a = self.data[i * n + j];
                let b = self.data[j * n + i];
                let sym = (a + b.conj()) * C::from(half);
                self.data[i * n + j] = sym;
                self.data[j * n + i] = sym.conj();
            }
        }
    }

    /// Max |rho - rho^dagger| entry.
    pub fn herm_residual(&self) -> T {
        let n = self.dim;
        let mut worst = T::zero();
        for i in 0..n {
            for j in i..n {
                let d = (self.data[i * n + j] - self.data[j * n + i].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Most negative real part of the diagonal (positivity monitor).
    pub fn min_diag(&self) -> T {
        (0..self.dim)
            .map(|i| self.data[i * self.dim + i].re)
            .fold(T::infinity(), T::min)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }

    /// Expectation value `Tr[A rho]`.
    pub fn expectation(&self, op: &SparseOperator<T>) -> C<T> {
        op.trace_of_product(&self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn basis_dims() {
        assert_eq!(CompositeBasis::new(2, 5).unwrap().dim(), 100);
        assert_eq!(CompositeBasis::new(1, 1).unwrap().dim(), 2);
        assert_eq!(CompositeBasis::new(2, 1).unwrap().dim(), 4);
    }

    #[test]
    fn basis_overflow_errors() {
        assert!(matches!(
            CompositeBasis::new(64, 10),
            Err(crate::error::Error::DimensionOverflow { .. })
        ));
    }

    #[test]
    fn basis_roundtrip_exhaustive() {
        for (n_atoms, n_vib) in [(1usize, 7usize), (2, 5), (3, 3), (2, 50), (4, 2)] {
            let b = CompositeBasis::new(n_atoms, n_vib).unwrap();
            assert!(b.dim() <= 10_000);
            for k in 0..b.dim() {
                let cfg = b.unindex(k);
                assert_eq!(b.index(&cfg), k);
                for (j, &(i, n)) in cfg.iter().enumerate() {
                    assert_eq!(b.electronic(k, j), i);
                    assert_eq!(b.vibrational(k, j), n);
                }
            }
        }
    }

    #[test]
    fn lift_identity_is_identity() {
        let b = CompositeBasis::new(3, 2).unwrap();
        let id = b.lift(1, &local::identity::<f64>(2)).unwrap();
        let full = SparseOperator::identity(b.dim());
        assert_eq!(id.to_triplets(), full.to_triplets());
    }

    #[test]
    fn two_level_completeness() {
        // lift(σ₁⁻)·lift(σ₁⁺) + lift(σ₁⁺)·lift(σ₁⁻) = identity
        let b = CompositeBasis::new(2, 3).unwrap();
        let vib_id = CMat::identity(3);
        let sm = b.lift(0, &local::sigma_minus::<f64>(&vib_id)).unwrap();
        let sp = b.lift(0, &local::sigma_plus::<f64>(&vib_id)).unwrap();
        let sum = sm.matmul(&sp).add(&sp.matmul(&sm));
        assert_eq!(sum.to_triplets(), SparseOperator::identity(b.dim()).to_triplets());
    }

    #[test]
    fn lift_sigma_minus_pinned_two_entries() {
        // basis (2,1): σ₂⁻ = I ⊗ |g⟩⟨e| has exactly the entries (0,1) and (2,3)
        let b = CompositeBasis::new(2, 1).unwrap();
        let sm = b.lift(1, &local::sigma_minus::<f64>(&CMat::identity(1))).unwrap();
        let t = sm.to_triplets();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].0, t[0].1), (0, 1));
        assert_eq!((t[1].0, t[1].1), (2, 3));
    }

    #[test]
    fn lift_is_homomorphism() {
        // lift(A)·lift(B) = lift(A·B) on the same atom
        let b = CompositeBasis::new(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = CMat::from_fn(4, 4, |_, _| c::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = CMat::from_fn(4, 4, |_, _| c::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let lhs = b.lift(1, &a).unwrap().matmul(&b.lift(1, &m).unwrap());
        let rhs = b.lift(1, &a.mul(&m)).unwrap();
        assert!(lhs.to_dense().max_abs_diff(&rhs.to_dense()) < 1e-14);
    }

    #[test]
    fn lift_disjoint_atoms_commute() {
        let b = CompositeBasis::new(3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = CMat::from_fn(4, 4, |_, _| c::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = CMat::from_fn(4, 4, |_, _| c::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let ab = b.lift(0, &a).unwrap().matmul(&b.lift(2, &m).unwrap());
        let ba = b.lift(2, &m).unwrap().matmul(&b.lift(0, &a).unwrap());
        assert!(ab.to_dense().max_abs_diff(&ba.to_dense()) < 1e-14);
    }

    #[test]
    fn lift_dimension_mismatch() {
        let b = CompositeBasis::new(2, 2).unwrap();
        assert!(b.lift(0, &CMat::<f64>::identity(3)).is_err());
        assert!(b.lift(5, &CMat::<f64>::identity(4)).is_err());
    }

    #[test]
    fn adjoint_involution_and_no_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut triplets = Vec::new();
        for _ in 0..60 {
            triplets.push((
                rng.gen_range(0..12),
                rng.gen_range(0..12),
                c::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ));
        }
        // plant an exact cancellation
        triplets.push((3, 4, c(0.25, -0.5)));
        triplets.push((3, 4, c(-0.25, 0.5)));
        let a = SparseOperator::from_triplets(12, triplets);
        assert!(a.entries().all(|(_, _, v)| v != c(0.0, 0.0)));
        let aa = a.adjoint().adjoint();
        assert_eq!(a.to_triplets(), aa.to_triplets());
    }

    #[test]
    fn apply_identity_left_is_identity() {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rho: Vec<C<f64>> = (0..n * n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let id = SparseOperator::identity(n);
        assert_eq!(id.apply_left(&rho), rho);
        assert_eq!(id.apply_right(&rho), rho);
    }

    #[test]
    fn trace_of_product_identity_is_trace() {
        let b = CompositeBasis::new(2, 2).unwrap();
        let rho = DensityMatrix::<f64>::ground(&b);
        let id = SparseOperator::identity(b.dim());
        let tr = id.trace_of_product(&rho.data);
        assert!((tr - c(1.0, 0.0)).norm() < 1e-15);
    }

    /// Dense reference multiply for the sparse-application oracle.
    fn dense_mul(a: &CMat<f64>, b: &[C<f64>], n: usize) -> Vec<C<f64>> {
        let mut out = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let v = a[(i, k)];
                if v == c(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += v * b[k * n + j];
                }
            }
        }
        out
    }

    #[test]
    fn sparse_apply_matches_dense_reference() {
        let n = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut triplets = Vec::new();
        for _ in 0..900 {
            triplets.push((
                rng.gen_range(0..n),
                rng.gen_range(0..n),
                c::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            ));
        }
        let a = SparseOperator::from_triplets(n, triplets);
        let rho: Vec<C<f64>> = (0..n * n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let sparse = a.apply_left(&rho);
        let dense = dense_mul(&a.to_dense(), &rho, n);
        let scale = dense.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let worst = sparse
            .iter()
            .zip(&dense)
            .map(|(x, y)| (*x - *y).norm())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-13 * scale.max(1.0), "relative error {}", worst / scale);

        // trace of product against the dense route
        let tr_sparse = a.trace_of_product(&rho);
        let tr_dense: C<f64> = (0..n).map(|i| dense[i * n + i]).sum();
        assert!((tr_sparse - tr_dense).norm() < 1e-12 * tr_dense.norm().max(1.0));
    }

    #[test]
    fn trace_of_product_hermitian_is_real() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        // random Hermitian sparse A
        let mut triplets = Vec::new();
        for _ in 0..200 {
            let (r, cidx) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let v = c::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            triplets.push((r, cidx, v));
            triplets.push((cidx, r, v.conj()));
        }
        let a = SparseOperator::from_triplets(n, triplets);
        // random Hermitian unit-trace rho (positive by construction: G G^dagger)
        let g = CMat::from_fn(n, n, |_, _| c::<f64>(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let gg = g.mul(&g.adjoint());
        let mut rho = DensityMatrix::<f64>::zeros(n);
        rho.data.copy_from_slice(&gg.data);
        let t = rho.trace();
        for v in rho.data.iter_mut() {
            *v = *v / t;
        }
        rho.hermitize();
        let val = a.trace_of_product(&rho.data);
        assert!(val.im.abs() < 1e-12, "imaginary residue {}", val.im);
    }

    #[test]
    fn density_matrix_ground_with_vib() {
        let b = CompositeBasis::new(2, 3).unwrap();
        let rho = DensityMatrix::<f64>::ground_with_vib(&b, &[0.5, 0.3, 0.2]);
        assert!((rho.trace().re - 1.0).abs() < 1e-14);
        assert!(rho.herm_residual() == 0.0);
        // element (g1, g1) for both atoms = 0.3 * 0.3
        let k = b.index(&[(0, 1), (0, 1)]);
        assert!((rho.get(k, k).re - 0.09).abs() < 1e-14);
    }
}
