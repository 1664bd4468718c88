//! Discrete-variable evaluation of vibrational matrix elements
//! ⟨n|F(X + x̂)|n′⟩: diagonalize the truncated position operator and apply F
//! at its eigenvalues. No derivatives of F are ever needed, and for
//! unimodular F the resulting square matrix is exactly unitary.

use crate::error::{Error, Result};
use crate::linalg::{sym_tridiag_eigen, CMat, RMat};
use crate::scalar::{Scalar, C};

/// Matrix of the position operator on the harmonic-oscillator basis
/// 0..=n_fin: tridiagonal with ⟨n|x̂|n+1⟩ = length_scale·√(n+1).
///
/// `length_scale` is √(ħ/(2Mω_t)) in internal units, i.e. η/k₀ per direction.
pub fn position_matrix<T: Scalar>(n_fin: usize, length_scale: T) -> Result<RMat<T>> {
    if length_scale < T::zero() {
        return Err(Error::InvalidParameter("negative DVR length scale".into()));
    }
    let n = n_fin + 1;
    let mut m = RMat::zeros(n, n);
    for k in 0..n_fin {
        let v = length_scale * T::from_usize(k + 1).expect("small integer").sqrt();
        m[(k, k + 1)] = v;
        m[(k + 1, k)] = v;
    }
    Ok(m)
}

/// Position grid: eigenvalues (nodes) and eigenvectors (transform) of the
/// truncated position operator.
#[derive(Debug, Clone)]
pub struct DvrGrid<T: Scalar> {
    n_fin: usize,
    /// Eigenvalues x_β, ascending.
    nodes: Vec<T>,
    /// Orthogonal transform, `transform[(n, β)] = U_{nβ}`.
    transform: RMat<T>,
}

impl<T: Scalar> DvrGrid<T> {
    /// Diagonalize a symmetric tridiagonal position matrix.
    pub fn build(matrix: &RMat<T>) -> Result<Self> {
        let n = matrix.rows;
        if n == 0 || matrix.cols != n {
            return Err(Error::InvalidParameter("position matrix must be square".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if matrix[(i, j)] != matrix[(j, i)] {
                    return Err(Error::InvalidParameter("position matrix not symmetric".into()));
                }
                if j > i + 1 && matrix[(i, j)] != T::zero() {
                    return Err(Error::InvalidParameter("position matrix not tridiagonal".into()));
                }
            }
        }
        let diag: Vec<T> = (0..n).map(|i| matrix[(i, i)]).collect();
        let off: Vec<T> = (0..n - 1).map(|i| matrix[(i, i + 1)]).collect();
        let (nodes, transform) = sym_tridiag_eigen(&diag, &off)?;
        Ok(Self { n_fin: n - 1, nodes, transform })
    }

    /// Harmonic grid with basis cutoff `n_fin` and the given length scale.
    pub fn harmonic(n_fin: usize, length_scale: T) -> Result<Self> {
        Self::build(&position_matrix(n_fin, length_scale)?)
    }

    #[inline]
    pub fn n_fin(&self) -> usize {
        self.n_fin
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n_fin + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    #[inline]
    pub fn transform(&self) -> &RMat<T> {
        &self.transform
    }

    /// Largest node magnitude (excursion of the grid).
    pub fn max_excursion(&self) -> T {
        self.nodes.iter().map(|x| x.abs()).fold(T::zero(), T::max)
    }

    /// ⟨n|F(X + x̂)|n′⟩ ≈ Σ_β U_{nβ} F(X + x_β) U_{n′β} over the full
    /// (n_fin+1)-dimensional basis.
    pub fn matrix_elements(&self, offset: T, f: impl Fn(T) -> C<T>) -> CMat<T> {
        self.matrix_elements_truncated(self.len(), offset, f)
    }

    /// Same sum with rows/columns restricted to `n_keep` basis states; used
    /// when the grid oversamples the simulation cutoff.
    pub fn matrix_elements_truncated(
        &self,
        n_keep: usize,
        offset: T,
        f: impl Fn(T) -> C<T>,
    ) -> CMat<T> {
        assert!(n_keep <= self.len(), "cannot keep more states than the grid carries");
        let vals: Vec<C<T>> = self.nodes.iter().map(|&x| f(offset + x)).collect();
        let u = &self.transform;
        CMat::from_fn(n_keep, n_keep, |n, m| {
            let mut acc = crate::scalar::czero();
            for b in 0..self.len() {
                acc += vals[b] * C::from(u[(n, b)] * u[(m, b)]);
            }
            acc
        })
    }

    /// Two-atom kernel tensor for a real function of the separation
    /// `offset + x_j − x_j′`: evaluates on the product grid and transforms
    /// each factor independently.
    ///
    /// Returned as an (n_keep²)×(n_keep²) real matrix whose row index packs
    /// the (n, m) pair of this grid's atom and whose column index packs the
    /// (n′, m′) pair of `other`'s atom.
    pub fn pair_tensor(
        &self,
        other: &DvrGrid<T>,
        n_keep: usize,
        offset: T,
        kernel: impl Fn(T) -> T,
    ) -> RMat<T> {
        assert!(n_keep <= self.len() && n_keep <= other.len());
        let na = self.len();
        let nb = other.len();
        // kernel values on the product grid
        let mut g = RMat::zeros(na, nb);
        for b in 0..na {
            for bp in 0..nb {
                g[(b, bp)] = kernel(offset + self.nodes[b] - other.nodes[bp]);
            }
        }
        // t1[b][(n,m)] = U_nb U_mb for each grid
        let pack = |u: &RMat<T>, npts: usize| -> RMat<T> {
            let mut t = RMat::zeros(npts, n_keep * n_keep);
            for b in 0..npts {
                for n in 0..n_keep {
                    for m in 0..n_keep {
                        t[(b, n * n_keep + m)] = u[(n, b)] * u[(m, b)];
                    }
                }
            }
            t
        };
        let ta = pack(&self.transform, na);
        let tb = pack(&other.transform, nb);
        // mid[b][q] = Σ_b' g[b][b'] tb[b'][q]
        let mid = g.mul(&tb);
        // out[p][q] = Σ_b ta[b][p] mid[b][q]
        ta.transpose().mul(&mid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;

    #[test]
    fn position_matrix_entries() {
        let m0 = position_matrix::<f64>(0, 0.3).unwrap();
        assert_eq!(m0.rows, 1);
        assert_eq!(m0[(0, 0)], 0.0);

        let s = 0.25;
        let m1 = position_matrix::<f64>(1, s).unwrap();
        assert_eq!(m1[(0, 1)], s);
        assert_eq!(m1[(1, 0)], s);
        assert_eq!(m1[(0, 0)], 0.0);

        let m2 = position_matrix::<f64>(2, s).unwrap();
        assert!((m2[(1, 2)] - s * 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn negative_scale_rejected() {
        assert!(position_matrix::<f64>(3, -1.0).is_err());
    }

    #[test]
    fn non_symmetric_rejected() {
        let mut m = position_matrix::<f64>(2, 1.0).unwrap();
        m[(0, 1)] = 2.0;
        assert!(DvrGrid::build(&m).is_err());
    }

    #[test]
    fn grid_nodes_small_cases() {
        let g = DvrGrid::<f64>::harmonic(1, 0.7).unwrap();
        assert!((g.nodes()[0] + 0.7).abs() < 1e-14);
        assert!((g.nodes()[1] - 0.7).abs() < 1e-14);

        let g0 = DvrGrid::<f64>::harmonic(0, 0.7).unwrap();
        assert_eq!(g0.nodes(), &[0.0]);
    }

    #[test]
    fn grid_nodes_match_hermite_roots() {
        // n_fin = 4: nodes are the roots of H₅ scaled by s·√2
        let s = 0.31;
        let g = DvrGrid::harmonic(4, s).unwrap();
        let h5_roots = [
            -2.020182870456085632929,
            -0.9585724646138185071128,
            0.0,
            0.9585724646138185071128,
            2.020182870456085632929,
        ];
        for (x, r) in g.nodes().iter().zip(h5_roots) {
            assert!((x - s * 2.0f64.sqrt() * r).abs() < 1e-12, "node {x} vs {r}");
        }
    }

    #[test]
    fn grid_invariants() {
        for n_fin in [1usize, 4, 9, 16] {
            let g = DvrGrid::<f64>::harmonic(n_fin, 0.056).unwrap();
            let n = g.len();
            // orthogonality
            let u = g.transform();
            let utu = u.transpose().mul(u);
            assert!(utu.max_abs_diff(&RMat::identity(n)) < 1e-12);
            // node symmetry about zero
            for b in 0..n {
                assert!((g.nodes()[b] + g.nodes()[n - 1 - b]).abs() < 1e-12);
            }
            // tridiagonal reconstruction Σ_β U_{nβ} x_β U_{n′β} = ⟨n|x̂|n′⟩
            let pm = position_matrix(n_fin, 0.056).unwrap();
            let mut rec = RMat::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for b in 0..n {
                        acc += u[(i, b)] * g.nodes()[b] * u[(j, b)];
                    }
                    rec[(i, j)] = acc;
                }
            }
            assert!(rec.max_abs_diff(&pm) < 1e-12);
        }
    }

    #[test]
    fn constant_function_gives_identity() {
        let g = DvrGrid::harmonic(5, 0.4).unwrap();
        let m = g.matrix_elements(1.3, |_| c(1.0, 0.0));
        assert!(m.max_abs_diff(&CMat::identity(6)) < 1e-13);
    }

    #[test]
    fn two_node_phase_closed_form() {
        // n_fin = 1, F = exp(i x), scale η: nodes ±η with equal weights,
        // so the (0,0) element is cos(η)
        let eta = 0.036;
        let g = DvrGrid::harmonic(1, eta).unwrap();
        let m = g.matrix_elements(0.0, |x| c(0.0, x).exp());
        assert!((m[(0, 0)] - c(eta.cos(), 0.0)).norm() < 1e-14);
        // and |⟨0|e^{ix}|1⟩| = sin(η)
        assert!((m[(0, 1)].norm() - eta.sin()).abs() < 1e-14);
    }

    #[test]
    fn ground_state_phase_converges_to_gaussian() {
        // ⟨0|e^{ik₀x̂}|0⟩ → e^{−η²/2}; within 1e-10 by n_fin = 12 at η = 0.056
        let eta = 0.056f64;
        let exact = (-eta * eta / 2.0).exp();
        let mut prev_err = f64::INFINITY;
        for n_fin in [2usize, 4, 8, 12] {
            let g = DvrGrid::harmonic(n_fin, eta).unwrap();
            let m = g.matrix_elements(0.0, |x| c(0.0, x).exp());
            let err = (m[(0, 0)].re - exact).abs().max(m[(0, 0)].im.abs());
            // monotone until the rounding floor
            assert!(err <= prev_err * 1.0001 + 1e-14, "error must shrink monotonically");
            prev_err = err;
        }
        let g = DvrGrid::harmonic(12, eta).unwrap();
        let m = g.matrix_elements(0.0, |x| c(0.0, x).exp());
        assert!((m[(0, 0)].re - exact).abs() < 1e-10);
    }

    #[test]
    fn unimodular_gives_exactly_unitary() {
        // any real phase θ(x): the full square DVR matrix of e^{iθ(x)} is unitary
        let g = DvrGrid::<f64>::harmonic(6, 0.4).unwrap();
        let m = g.matrix_elements(0.2, |x| c(0.0, x + 0.3 * x * x).exp());
        let mtm = m.adjoint().mul(&m);
        assert!(mtm.max_abs_diff(&CMat::identity(7)) < 1e-12);
    }

    #[test]
    fn truncated_oversampled_loses_unitarity() {
        let g = DvrGrid::<f64>::harmonic(20, 0.4).unwrap();
        let m = g.matrix_elements_truncated(3, 0.0, |x| c(0.0, x).exp());
        let mtm = m.adjoint().mul(&m);
        let dev = mtm.max_abs_diff(&CMat::identity(3));
        assert!(dev > 1e-9, "oversampled truncation should not be exactly unitary");
    }

    #[test]
    fn linear_polynomial_is_exact() {
        // F(x) = a + b x: equals F(X)·I + b·⟨n|x̂|n′⟩ exactly for any n_fin ≥ 1
        let (a, b) = (0.7, -0.4);
        let xoff = 0.9;
        for n_fin in [1usize, 2, 5] {
            let g = DvrGrid::harmonic(n_fin, 0.3).unwrap();
            let m = g.matrix_elements(xoff, |x| c(a + b * x, 0.0));
            let pm = position_matrix(n_fin, 0.3).unwrap();
            let n = n_fin + 1;
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { a + b * xoff } else { 0.0 } + b * pm[(i, j)];
                    assert!((m[(i, j)].re - expect).abs() < 1e-13);
                    assert!(m[(i, j)].im.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn pair_tensor_matches_direct_sum() {
        // compare against a brute-force evaluation of the quoted double sum
        let ga = DvrGrid::harmonic(3, 0.2).unwrap();
        let gb = DvrGrid::harmonic(3, 0.2).unwrap();
        let off = 1.1;
        let kern = |s: f64| s.cos();
        let n_keep = 2;
        let t = ga.pair_tensor(&gb, n_keep, off, kern);
        for n in 0..n_keep {
            for m in 0..n_keep {
                for np in 0..n_keep {
                    for mp in 0..n_keep {
                        let mut acc = 0.0;
                        for b in 0..ga.len() {
                            for bp in 0..gb.len() {
                                acc += ga.transform()[(n, b)]
                                    * ga.transform()[(m, b)]
                                    * kern(off + ga.nodes()[b] - gb.nodes()[bp])
                                    * gb.transform()[(np, bp)]
                                    * gb.transform()[(mp, bp)];
                            }
                        }
                        let got = t[(n * n_keep + m, np * n_keep + mp)];
                        assert!((got - acc).abs() < 1e-13);
                    }
                }
            }
        }
    }
}
