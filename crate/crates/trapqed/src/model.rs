//! Physical model assembly: trap + electronic Hamiltonian, plane-wave drive,
//! dipole-dipole exchange and the collective jump structure, for both the 1D
//! waveguide and 3D free-space kernels.
//!
//! Internal units throughout: Γ = 1, k₀ = 1, ħ = 1. Lengths are k₀·x, rates
//! are in units of Γ, and the detuning grid is Δ/Γ.

use crate::dvr::DvrGrid;
use crate::error::{Error, Result};
use crate::hilbert::{local, CompositeBasis, DensityMatrix, SparseOperator};
use crate::linalg::{jacobi_svd, CMat, RMat};
use crate::scalar::{c, ci, czero, Scalar, C};

/// Field geometry the atoms couple to.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry<T: Scalar> {
    /// Atoms emit into / absorb from a single 1D waveguide along x.
    /// `drive_sign` is the propagation direction of the incident wave.
    Waveguide1D { drive_sign: T },
    /// Free space, far from surfaces. Quantized motion is carried along
    /// `motion_axis` (unit vector); `dipole` is the complex unit vector q.
    FreeSpace3D { dipole: [C<T>; 3], motion_axis: [T; 3], drive_direction: [T; 3] },
}

/// All physical symbols of the model, in internal units.
#[derive(Debug, Clone)]
pub struct ModelParams<T: Scalar> {
    /// Single-atom decay rate; 1 by convention.
    pub gamma: T,
    /// Rabi frequency Ω in units of Γ.
    pub rabi: T,
    /// Laser detuning Δ in units of Γ.
    pub detuning: T,
    /// Trap angular frequency ω_t in units of Γ.
    pub trap_freq: T,
    /// Lamb-Dicke parameter η = k₀ √(ħ/(2 M ω_t)) along the motion axis.
    pub eta: T,
    /// Trap centers k₀ R_j.
    pub centers: Vec<[T; 3]>,
    pub geometry: Geometry<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// 1D waveguide setup with trap centers at k₀ X_j, driven along +x.
    pub fn waveguide_1d(rabi: T, detuning: T, trap_freq: T, eta: T, centers_x: &[T]) -> Self {
        Self {
            gamma: T::one(),
            rabi,
            detuning,
            trap_freq,
            eta,
            centers: centers_x.iter().map(|&x| [x, T::zero(), T::zero()]).collect(),
            geometry: Geometry::Waveguide1D { drive_sign: T::one() },
        }
    }

    /// 3D free-space setup.
    pub fn free_space_3d(
        rabi: T,
        detuning: T,
        trap_freq: T,
        eta: T,
        centers: Vec<[T; 3]>,
        dipole: [C<T>; 3],
        motion_axis: [T; 3],
        drive_direction: [T; 3],
    ) -> Self {
        Self {
            gamma: T::one(),
            rabi,
            detuning,
            trap_freq,
            eta,
            centers,
            geometry: Geometry::FreeSpace3D { dipole, motion_axis, drive_direction },
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.centers.len()
    }

    /// Position of atom j along the waveguide (1D geometries).
    pub fn center_x(&self, j: usize) -> T {
        self.centers[j][0]
    }

    /// Unit drive wavevector.
    pub fn drive_direction(&self) -> [T; 3] {
        match &self.geometry {
            Geometry::Waveguide1D { drive_sign } => [*drive_sign, T::zero(), T::zero()],
            Geometry::FreeSpace3D { drive_direction, .. } => *drive_direction,
        }
    }

    /// Axis carrying the quantized motion.
    pub fn motion_axis(&self) -> [T; 3] {
        match &self.geometry {
            Geometry::Waveguide1D { .. } => [T::one(), T::zero(), T::zero()],
            Geometry::FreeSpace3D { motion_axis, .. } => *motion_axis,
        }
    }

    /// Hard validation plus soft regime warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        if self.centers.is_empty() {
            return Err(Error::InvalidParameter("need at least one atom".into()));
        }
        if self.eta < T::zero() {
            return Err(Error::InvalidParameter("eta must be non-negative".into()));
        }
        if self.rabi < T::zero() || self.gamma <= T::zero() || self.trap_freq < T::zero() {
            return Err(Error::InvalidParameter("rates must be non-negative".into()));
        }
        let mut warnings = Vec::new();
        if self.eta > T::lit(0.3) {
            warnings.push(format!(
                "eta = {} is outside the Lamb-Dicke regime (eta << 1)",
                self.eta
            ));
        }
        if self.rabi > T::lit(0.1) {
            warnings.push(format!(
                "rabi = {} strains the weak-drive assumption (Omega << Gamma)",
                self.rabi
            ));
        }
        if let Geometry::FreeSpace3D { dipole, motion_axis, drive_direction } = &self.geometry {
            let qn: T = dipole.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
            if (qn - T::one()).abs() > T::lit(1e-10) {
                return Err(Error::InvalidParameter(format!(
                    "dipole orientation must be a unit vector, |q| = {qn}"
                )));
            }
            for v in [motion_axis, drive_direction] {
                let n: T = v.iter().map(|&x| x * x).sum::<T>().sqrt();
                if (n - T::one()).abs() > T::lit(1e-10) {
                    return Err(Error::InvalidParameter("axis vectors must be unit length".into()));
                }
            }
        }
        Ok(warnings)
    }
}

// ---------------------------------------------------------------------------
// dipole-dipole kernels
// ---------------------------------------------------------------------------

/// 1D waveguide kernels at total separation `s = k₀(X_j + x_j − X_j′ − x_j′)`:
/// `omega = (Γ/2) sin|s|`, `gamma = Γ cos s`.
pub fn kernel_1d<T: Scalar>(gamma: T, s: T) -> (T, T) {
    (gamma * T::lit(0.5) * s.abs().sin(), gamma * s.cos())
}

/// Spherical Bessel j_l by a cancellation-free power series (used below the
/// series threshold).
fn sph_j_series<T: Scalar>(l: usize, s: T) -> T {
    // j_l(s) = s^l Σ_k (-s²/2)^k / (k! (2l+2k+1)!!)
    let mut dfact = T::one();
    let mut m = 1usize;
    while m <= 2 * l + 1 {
        dfact *= T::from_usize(m).expect("small");
        m += 2;
    }
    let mut term = s.powi(l as i32) / dfact;
    let mut sum = term;
    let half_s2 = s * s * T::lit(0.5);
    for k in 0..40 {
        let denom = T::from_usize((k + 1) * (2 * l + 2 * k + 3)).expect("small");
        term = -term * half_s2 / denom;
        sum += term;
        if term.abs() <= T::epsilon() * sum.abs() {
            break;
        }
    }
    sum
}

const SERIES_THRESHOLD: f64 = 0.5;

fn sph_j0<T: Scalar>(s: T) -> T {
    if s < T::lit(SERIES_THRESHOLD) {
        sph_j_series(0, s)
    } else {
        s.sin() / s
    }
}

fn sph_j2<T: Scalar>(s: T) -> T {
    if s < T::lit(SERIES_THRESHOLD) {
        sph_j_series(2, s)
    } else {
        let (sn, cs) = (s.sin(), s.cos());
        let s2 = s * s;
        (T::lit(3.0) / (s2 * s) - T::one() / s) * sn - T::lit(3.0) * cs / s2
    }
}

fn sph_n0<T: Scalar>(s: T) -> T {
    -s.cos() / s
}

fn sph_n2<T: Scalar>(s: T) -> T {
    let (sn, cs) = (s.sin(), s.cos());
    let s2 = s * s;
    (-T::lit(3.0) / (s2 * s) + T::one() / s) * cs - T::lit(3.0) * sn / s2
}

/// Angular factor `(3 |ŝ·q|² − 1)/2` for separation direction `sep/|sep|`.
fn angular_factor<T: Scalar>(sep: [T; 3], s: T, q: &[C<T>; 3]) -> T {
    let mut dot = czero();
    for a in 0..3 {
        dot += q[a] * C::from(sep[a] / s);
    }
    (T::lit(3.0) * dot.norm_sqr() - T::one()) * T::lit(0.5)
}

/// 3D free-space kernels at separation `sep` (units of 1/k₀) with dipole
/// orientation `q`: coherent part from Neumann functions, dissipative part
/// from spherical Bessels. Errors at exactly zero separation, where the
/// coherent part is singular.
pub fn kernel_3d<T: Scalar>(gamma: T, sep: [T; 3], q: &[C<T>; 3]) -> Result<(T, T)> {
    let s = (sep[0] * sep[0] + sep[1] * sep[1] + sep[2] * sep[2]).sqrt();
    if s == T::zero() {
        return Err(Error::SingularKernel);
    }
    let ang = angular_factor(sep, s, q);
    let omega = gamma * T::lit(0.5) * (sph_n0(s) + ang * sph_n2(s));
    let g = gamma * (sph_j0(s) + ang * sph_j2(s));
    Ok((omega, g))
}

/// Dissipative 3D kernel alone; regular everywhere (`γ → Γ` as `s → 0`).
pub fn kernel_3d_gamma<T: Scalar>(gamma: T, sep: [T; 3], q: &[C<T>; 3]) -> T {
    let s = (sep[0] * sep[0] + sep[1] * sep[1] + sep[2] * sep[2]).sqrt();
    if s == T::zero() {
        return gamma;
    }
    let ang = angular_factor(sep, s, q);
    gamma * (sph_j0(s) + ang * sph_j2(s))
}

/// Pairwise kernel abstraction: the model assembly only ever asks for the
/// coherent/dissipative kernel values at a node displacement `delta =
/// u_j − u_j′` along the motion axis, so swapping 1D for 3D (or a mock in
/// tests) changes the tables but not the superoperator plumbing.
pub trait PairKernel<T: Scalar> {
    /// (omega, gamma) for atoms (j, j′) at node displacement `delta`.
    fn eval(&self, j: usize, jp: usize, delta: T) -> (T, T);
    /// Dissipative part only; must be regular for coincident arguments.
    fn eval_gamma(&self, j: usize, jp: usize, delta: T) -> T {
        self.eval(j, jp, delta).1
    }
    /// Validate that the node displacement range `[lo, hi]` keeps the kernel
    /// well-defined for the pair (sign of |s| fixed, no zero separation).
    fn validate_range(&self, j: usize, jp: usize, lo: T, hi: T) -> Result<()>;
}

/// Built-in 1D waveguide kernel.
pub struct WaveguideKernel<T: Scalar> {
    gamma: T,
    centers_x: Vec<T>,
}

impl<T: Scalar> PairKernel<T> for WaveguideKernel<T> {
    fn eval(&self, j: usize, jp: usize, delta: T) -> (T, T) {
        kernel_1d(self.gamma, self.centers_x[j] - self.centers_x[jp] + delta)
    }

    fn validate_range(&self, j: usize, jp: usize, lo: T, hi: T) -> Result<()> {
        if j == jp {
            return Ok(());
        }
        let base = self.centers_x[j] - self.centers_x[jp];
        if (base + lo) * (base + hi) < T::zero() {
            return Err(Error::SignFlip(j, jp));
        }
        Ok(())
    }
}

/// Built-in 3D free-space kernel with motion along a single axis.
pub struct FreeSpaceKernel<T: Scalar> {
    gamma: T,
    centers: Vec<[T; 3]>,
    axis: [T; 3],
    dipole: [C<T>; 3],
}

impl<T: Scalar> FreeSpaceKernel<T> {
    fn separation(&self, j: usize, jp: usize, delta: T) -> [T; 3] {
        let mut sep = [T::zero(); 3];
        for a in 0..3 {
            sep[a] = self.centers[j][a] - self.centers[jp][a] + delta * self.axis[a];
        }
        sep
    }
}

impl<T: Scalar> PairKernel<T> for FreeSpaceKernel<T> {
    fn eval(&self, j: usize, jp: usize, delta: T) -> (T, T) {
        kernel_3d(self.gamma, self.separation(j, jp, delta), &self.dipole)
            .expect("separation validated at assembly")
    }

    fn eval_gamma(&self, j: usize, jp: usize, delta: T) -> T {
        kernel_3d_gamma(self.gamma, self.separation(j, jp, delta), &self.dipole)
    }

    fn validate_range(&self, j: usize, jp: usize, lo: T, hi: T) -> Result<()> {
        if j == jp {
            return Ok(());
        }
        // minimum |s|² over delta in [lo, hi] along the axis
        let sep0 = self.separation(j, jp, T::zero());
        let par: T = (0..3).map(|a| sep0[a] * self.axis[a]).sum();
        let perp2: T = (0..3).map(|a| sep0[a] * sep0[a]).sum::<T>() - par * par;
        let dmin = if -par < lo {
            lo
        } else if -par > hi {
            hi
        } else {
            -par
        };
        let smin2 = perp2 + (par + dmin) * (par + dmin);
        if smin2 <= T::zero() {
            return Err(Error::CoincidentCenters(j, jp));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// vibrational kernel sampling mode
// ---------------------------------------------------------------------------

/// How vibrational matrix elements are sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VibKernelMode {
    /// DVR grid with n_fin = n_max: every phase factor is exactly unitary on
    /// the truncated space and the 1D model conserves R + T to machine
    /// precision. Pinned atoms (N_vib = 1) reduce to scalar kernels here.
    Unitary,
    /// Exact matrix elements from an oversampled grid, truncated to the
    /// simulation cutoff. This is what a converged physical calculation
    /// needs: the residual 1 − R − T then measures basis truncation.
    Oversampled { n_fin: usize },
}

impl VibKernelMode {
    /// Oversampling that converges the matrix elements to machine precision
    /// for Lamb-Dicke parameters well below 1.
    pub fn auto(n_max: usize) -> Self {
        VibKernelMode::Oversampled { n_fin: n_max + 24 }
    }

    fn grid_cutoff(&self, n_max: usize) -> Result<usize> {
        match *self {
            VibKernelMode::Unitary => Ok(n_max),
            VibKernelMode::Oversampled { n_fin } => {
                if n_fin < n_max {
                    Err(Error::InvalidParameter(format!(
                        "oversampled n_fin = {n_fin} below simulation cutoff {n_max}"
                    )))
                } else {
                    Ok(n_fin)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// assembled model
// ---------------------------------------------------------------------------

/// One separable term of a pairwise jump kernel: the `left` factor multiplies
/// the density matrix from the left, `right` from the right.
#[derive(Debug, Clone)]
pub struct GainTerm<T: Scalar> {
    pub left: SparseOperator<T>,
    pub right: SparseOperator<T>,
}

/// Assembled Hamiltonian and jump structure on the composite space.
#[derive(Debug, Clone)]
pub struct LindbladModel<T: Scalar> {
    basis: CompositeBasis,
    params: ModelParams<T>,
    grids: Vec<DvrGrid<T>>,
    h0: SparseOperator<T>,
    h_drive: SparseOperator<T>,
    h_dd: SparseOperator<T>,
    h_total: SparseOperator<T>,
    /// K = Σ_{jj′} σ_j′⁺ σ_j⁻ Γ̂_{jj′} (one-sided kernels).
    loss: SparseOperator<T>,
    gain: Vec<GainTerm<T>>,
    warnings: Vec<String>,
}

/// Relative singular-value cutoff for the separable kernel expansion.
const SCHMIDT_TOL: f64 = 1e-14;

impl<T: Scalar> LindbladModel<T> {
    /// Assemble with the geometry's built-in kernel.
    pub fn build(params: ModelParams<T>, n_vib: usize, mode: VibKernelMode) -> Result<Self> {
        match &params.geometry {
            Geometry::Waveguide1D { .. } => {
                let kernel = WaveguideKernel {
                    gamma: params.gamma,
                    centers_x: (0..params.n_atoms()).map(|j| params.center_x(j)).collect(),
                };
                Self::build_with_kernel(params, n_vib, mode, &kernel)
            }
            Geometry::FreeSpace3D { dipole, motion_axis, .. } => {
                let kernel = FreeSpaceKernel {
                    gamma: params.gamma,
                    centers: params.centers.clone(),
                    axis: *motion_axis,
                    dipole: *dipole,
                };
                Self::build_with_kernel(params, n_vib, mode, &kernel)
            }
        }
    }

    /// Assemble against an arbitrary pairwise kernel (mock kernels in tests
    /// exercise the identical plumbing).
    pub fn build_with_kernel(
        params: ModelParams<T>,
        n_vib: usize,
        mode: VibKernelMode,
        kernel: &dyn PairKernel<T>,
    ) -> Result<Self> {
        let warnings = params.validate()?;
        let basis = CompositeBasis::new(params.n_atoms(), n_vib)?;
        let n_max = n_vib - 1;
        let n_fin = mode.grid_cutoff(n_max)?;
        let n = params.n_atoms();
        let dim = basis.dim();

        // one grid per atom (identical traps; kept per-atom for generality)
        let grids: Vec<DvrGrid<T>> = (0..n)
            .map(|_| DvrGrid::harmonic(n_fin, params.eta))
            .collect::<Result<_>>()?;

        for j in 0..n {
            for jp in 0..n {
                if j == jp {
                    continue;
                }
                let lo = -grids[j].max_excursion() - grids[jp].max_excursion();
                kernel.validate_range(j, jp, lo, -lo)?;
            }
        }

        // H0: diagonal trap + electronic energies
        let h0 = SparseOperator::from_triplets(
            dim,
            (0..dim)
                .filter_map(|k| {
                    let mut e = T::zero();
                    for j in 0..n {
                        e += params.trap_freq
                            * (T::from_usize(basis.vibrational(k, j)).expect("small") + T::lit(0.5));
                        if basis.electronic(k, j) == 1 {
                            e -= params.detuning;
                        }
                    }
                    (e != T::zero()).then_some((k, k, C::from(e)))
                })
                .collect(),
        );

        // H_L: (Ω/2) Σ_j e^{i k₀·R_j} E_j σ_j⁺ + h.c., with E_j the DVR matrix
        // of the plane-wave phase along the motion axis
        let kvec = params.drive_direction();
        let axis = params.motion_axis();
        let k_dot_axis: T = (0..3).map(|a| kvec[a] * axis[a]).sum();
        let mut h_drive = SparseOperator::zero(dim);
        for j in 0..n {
            let k_dot_r: T = (0..3).map(|a| kvec[a] * params.centers[j][a]).sum();
            let e_j = grids[j]
                .matrix_elements_truncated(n_vib, T::zero(), |u| {
                    (ci::<T>() * C::from(k_dot_r + k_dot_axis * u)).exp()
                });
            let term = basis
                .lift(j, &local::sigma_plus(&e_j))?
                .scale(C::from(params.rabi * T::lit(0.5)));
            h_drive = h_drive.add(&term).add(&term.adjoint());
        }

        // pairwise kernel tensors: H_dd from the coherent part, gain/loss from
        // the dissipative part
        let mut h_dd = SparseOperator::zero(dim);
        let mut loss = SparseOperator::zero(dim);
        let mut gain = Vec::new();
        for j in 0..n {
            for jp in 0..n {
                if j == jp {
                    // self-kernel: the one-sided Γ̂_jj is exactly Γ (scalar),
                    // while the two-sided gain keeps its full node structure
                    let vib_e = CMat::identity(n_vib);
                    loss = loss.add(
                        &basis
                            .lift(j, &local::excited_projector(&vib_e))?
                            .scale(C::from(params.gamma)),
                    );
                } else {
                    let omega_tensor = grids[j].pair_tensor(&grids[jp], n_vib, T::zero(), |d| {
                        kernel.eval(j, jp, d).0
                    });
                    for (w, a, b) in schmidt_terms(&omega_tensor, n_vib) {
                        let left = basis.lift(j, &local::sigma_plus(&a))?.scale(C::from(w));
                        let right = basis.lift(jp, &local::sigma_minus(&b))?;
                        h_dd = h_dd.add(&left.matmul(&right));
                    }
                }

                let gamma_tensor = grids[j].pair_tensor(&grids[jp], n_vib, T::zero(), |d| {
                    kernel.eval_gamma(j, jp, d)
                });
                for (w, a, b) in schmidt_terms(&gamma_tensor, n_vib) {
                    let left = basis.lift(j, &local::sigma_minus(&a))?.scale(C::from(w));
                    let right = basis.lift(jp, &local::sigma_plus(&b))?;
                    if j != jp {
                        loss = loss.add(&right.matmul(&left));
                    }
                    gain.push(GainTerm { left, right });
                }
            }
        }

        let h_total = h0.add(&h_drive).add(&h_dd);
        debug_assert!(h_total.herm_residual() < T::lit(1e-12));

        // pinned-limit positivity of the dissipative kernel matrix
        if n > 1 {
            let mut g = RMat::zeros(n, n);
            for j in 0..n {
                for jp in 0..n {
                    g[(j, jp)] = kernel.eval_gamma(j, jp, T::zero());
                }
            }
            psd_check(&g)?;
        }

        Ok(Self {
            basis,
            params,
            grids,
            h0,
            h_drive,
            h_dd,
            h_total,
            loss,
            gain,
            warnings,
        })
    }

    pub fn basis(&self) -> &CompositeBasis {
        &self.basis
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn grids(&self) -> &[DvrGrid<T>] {
        &self.grids
    }

    /// Full Hamiltonian H₀ + H_L + H_dd.
    pub fn hamiltonian(&self) -> &SparseOperator<T> {
        &self.h_total
    }

    pub fn h0(&self) -> &SparseOperator<T> {
        &self.h0
    }

    pub fn h_drive(&self) -> &SparseOperator<T> {
        &self.h_drive
    }

    pub fn h_dd(&self) -> &SparseOperator<T> {
        &self.h_dd
    }

    /// One-sided anticommutator operator K = Σ σ⁺σ⁻ Γ̂.
    pub fn loss(&self) -> &SparseOperator<T> {
        &self.loss
    }

    /// Separable two-sided jump terms (left factor acts from the left).
    pub fn gain(&self) -> &[GainTerm<T>] {
        &self.gain
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Right-hand side of the master equation:
    /// dρ/dt = −i[H, ρ] + Σ L ρ R − ½{K, ρ}.
    pub fn liouvillian_apply(&self, rho: &DensityMatrix<T>) -> DensityMatrix<T> {
        let mut out = DensityMatrix::zeros(self.basis.dim());
        let mut scratch = vec![czero(); rho.data.len()];
        self.liouvillian_apply_into(&rho.data, &mut out.data, &mut scratch);
        out
    }

    /// Low-allocation form for integrators; `scratch` must be dim² long.
    pub fn liouvillian_apply_into(&self, rho: &[C<T>], out: &mut [C<T>], scratch: &mut [C<T>]) {
        out.fill(czero());
        let minus_i = c::<T>(0.0, -1.0);
        let plus_i = c::<T>(0.0, 1.0);
        let minus_half = c::<T>(-0.5, 0.0);
        self.h_total.apply_left_scaled_acc(rho, minus_i, out);
        self.h_total.apply_right_scaled_acc(rho, plus_i, out);
        self.loss.apply_left_scaled_acc(rho, minus_half, out);
        self.loss.apply_right_scaled_acc(rho, minus_half, out);
        for term in &self.gain {
            term.left.apply_left_into(rho, scratch);
            term.right.apply_right_scaled_acc(scratch, c(1.0, 0.0), out);
        }
    }
}

/// Separable (operator-Schmidt) expansion of a pair tensor: returns weighted
/// factor matrices (w, A, B) with tensor = Σ w A ⊗ B.
fn schmidt_terms<T: Scalar>(tensor: &RMat<T>, n_vib: usize) -> Vec<(T, CMat<T>, CMat<T>)> {
    let (u, sig, v) = jacobi_svd(tensor);
    let smax = sig.iter().copied().fold(T::zero(), T::max);
    let tol = smax * T::lit(SCHMIDT_TOL);
    let mut out = Vec::new();
    for (s_idx, &s) in sig.iter().enumerate() {
        if s <= tol || s == T::zero() {
            continue;
        }
        let a = CMat::from_fn(n_vib, n_vib, |r, ccol| C::from(u[(r * n_vib + ccol, s_idx)]));
        let b = CMat::from_fn(n_vib, n_vib, |r, ccol| C::from(v[(r * n_vib + ccol, s_idx)]));
        out.push((s, a, b));
    }
    out
}

/// LDLᵀ positivity check with a tolerance scaled to the matrix.
fn psd_check<T: Scalar>(g: &RMat<T>) -> Result<()> {
    let n = g.rows;
    let scale = g.data.iter().map(|x| x.abs()).fold(T::zero(), T::max);
    let tol = scale * T::lit(1e-10);
    let mut a = g.clone();
    for k in 0..n {
        let d = a[(k, k)];
        if d < -tol {
            return Err(Error::InvalidParameter(format!(
                "dissipative kernel matrix is not positive semidefinite (pivot {d} at {k})"
            )));
        }
        if d.abs() <= tol {
            continue;
        }
        for i in k + 1..n {
            let f = a[(i, k)] / d;
            for jj in k..n {
                let sub = f * a[(k, jj)];
                a[(i, jj)] -= sub;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn two_atom_params(n_vib_eta: f64, delta: f64, d_over_lambda: f64) -> ModelParams<f64> {
        let d = d_over_lambda * 2.0 * PI;
        ModelParams::waveguide_1d(1e-4, delta, 1.6e-5, n_vib_eta, &[0.0, d])
    }

    #[test]
    fn kernel_1d_examples() {
        let (om, ga) = kernel_1d(1.0f64, 0.0);
        assert_eq!((om, ga), (0.0, 1.0));

        let s = 1.8 * PI;
        let (om, ga) = kernel_1d(1.0f64, s);
        assert!((om - 0.5 * (1.8 * PI).sin()).abs() < 1e-15);
        assert!((om + 0.5 * 0.5877852522924732).abs() < 1e-12);
        assert!((ga - 0.8090169943749473).abs() < 1e-12);

        let (om, ga) = kernel_1d(1.0f64, PI / 2.0);
        assert!((om - 0.5).abs() < 1e-15);
        assert!(ga.abs() < 1e-15);
    }

    /// Independent series oracle for j2 (truncated Taylor sum, not the
    /// closed form used in the implementation above threshold).
    fn j2_oracle(s: f64) -> f64 {
        let mut term = s * s / 15.0;
        let mut sum = term;
        for k in 0..60 {
            let kk = k as f64;
            term *= -(s * s) / (2.0 * (kk + 1.0) * (2.0 * kk + 7.0));
            sum += term;
        }
        sum
    }

    #[test]
    fn kernel_3d_examples() {
        let q = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]; // linear along x
        // gamma -> Gamma as s -> 0
        let g: f64 = kernel_3d_gamma(1.0, [1e-9, 0.0, 0.0], &q);
        assert!((g - 1.0).abs() < 1e-12);
        // s perpendicular to q: angular factor -1/2
        let s = 1.3f64;
        let (_, g) = kernel_3d(1.0, [0.0, s, 0.0], &q).unwrap();
        let expect = (s.sin() / s) - 0.5 * j2_oracle(s);
        assert!((g - expect).abs() < 1e-12);
        // s = 2 pi, perpendicular: j0(2pi) = 0 so gamma = -j2(2pi)/2
        let (_, g) = kernel_3d(1.0, [0.0, 2.0 * PI, 0.0], &q).unwrap();
        assert!((g + 0.5 * j2_oracle(2.0 * PI)).abs() < 1e-12);
        // singular omega at zero separation
        assert!(kernel_3d(1.0, [0.0, 0.0, 0.0], &q).is_err());
    }

    #[test]
    fn series_matches_closed_form_at_threshold() {
        for s in [0.49f64, 0.5, 0.51, 0.7] {
            let closed = {
                let s2: f64 = s * s;
                (3.0 / (s2 * s) - 1.0 / s) * s.sin() - 3.0 * s.cos() / s2
            };
            assert!((sph_j2(s) - closed).abs() < 1e-14);
            assert!((sph_j0(s) - s.sin() / s).abs() < 1e-15);
        }
    }

    #[test]
    fn h0_diagonal_examples() {
        // N=1, N_vib=1, Delta=0: diag(w_t/2, w_t/2)
        let p = ModelParams::<f64>::waveguide_1d(1e-4, 0.0, 0.2, 0.0, &[0.0]);
        let m = LindbladModel::build(p, 1, VibKernelMode::Unitary).unwrap();
        let h0 = m.h0().to_dense();
        assert!((h0[(0, 0)].re - 0.1).abs() < 1e-15);
        assert!((h0[(1, 1)].re - 0.1).abs() < 1e-15);

        // N=1, N_vib=2, Delta=0.36: diag {w/2, 3w/2, w/2 - D, 3w/2 - D}
        let w = 0.2;
        let d = 0.36;
        let p = ModelParams::<f64>::waveguide_1d(1e-4, d, w, 0.036, &[0.0]);
        let m = LindbladModel::build(p, 2, VibKernelMode::Unitary).unwrap();
        let h0 = m.h0().to_dense();
        let expect = [w / 2.0, 3.0 * w / 2.0, w / 2.0 - d, 3.0 * w / 2.0 - d];
        for (i, e) in expect.iter().enumerate() {
            assert!((h0[(i, i)].re - e).abs() < 1e-14, "diag {i}");
        }
    }

    #[test]
    fn h0_trace_explicit_sum() {
        let w = 0.37;
        let p = ModelParams::<f64>::waveguide_1d(1e-4, 0.0, w, 0.036, &[0.0, 5.0]);
        let m = LindbladModel::build(p, 5, VibKernelMode::Unitary).unwrap();
        let b = m.basis();
        let expect: f64 = (0..b.dim())
            .map(|k| (0..2).map(|j| w * (b.vibrational(k, j) as f64 + 0.5)).sum::<f64>())
            .sum();
        let got: f64 = m.h0().entries().map(|(_, _, v)| v.re).sum();
        assert!((got - expect).abs() < 1e-10);
    }

    #[test]
    fn drive_vibrational_sideband_amplitude() {
        // N=1, N_vib=2, eta = 0.036: |<0| e^{ikx} |1>| = sin(eta) on the
        // 2-node grid, so the drive block carries (Omega/2) sin(eta)
        let eta = 0.036;
        let p = ModelParams::<f64>::waveguide_1d(1e-4, 0.0, 1.6e-5, eta, &[0.0]);
        let m = LindbladModel::build(p, 2, VibKernelMode::Unitary).unwrap();
        let hl = m.h_drive().to_dense();
        let b = m.basis();
        let g0 = b.index(&[(0, 0)]);
        let e1 = b.index(&[(1, 1)]);
        assert!((hl[(e1, g0)].norm() - 0.5e-4 * eta.sin()).abs() < 1e-18);
        assert!(m.h_drive().herm_residual() < 1e-13);
    }

    #[test]
    fn drive_pinned_limit_is_phase_only() {
        // eta -> 0: vibrational factor is the identity
        let p = ModelParams::<f64>::waveguide_1d(2e-2, 0.1, 1e-4, 0.0, &[0.7]);
        let m = LindbladModel::build(p, 3, VibKernelMode::Unitary).unwrap();
        let hl = m.h_drive().to_dense();
        let b = m.basis();
        for nv in 0..3 {
            let g = b.index(&[(0, nv)]);
            let e = b.index(&[(1, nv)]);
            let expect = c::<f64>(0.0, 0.7).exp() * c(1e-2, 0.0);
            assert!((hl[(e, g)] - expect).norm() < 1e-15);
        }
        // no sidebands
        let g0 = b.index(&[(0, 0)]);
        let e1 = b.index(&[(1, 1)]);
        assert_eq!(hl[(e1, g0)], c(0.0, 0.0));
    }

    #[test]
    fn pinned_kernels_reduce_to_scalars() {
        let p = two_atom_params(0.0, 0.36, 0.9);
        let m = LindbladModel::build(p, 1, VibKernelMode::Unitary).unwrap();
        // Gamma_12 = cos(1.8 pi) = 0.8090...
        let b = m.basis();
        let gg = b.index(&[(0, 0), (0, 0)]);
        let ge = b.index(&[(0, 0), (1, 0)]);
        let eg = b.index(&[(1, 0), (0, 0)]);
        // K = sum sp_j' sm_j Gamma_jj': cross element <eg|K|ge> = Gamma_21
        let k = m.loss().to_dense();
        assert!((k[(eg, ge)].re - 0.8090169943749473).abs() < 1e-12);
        assert!((k[(gg, gg)]).norm() < 1e-15);
        // H_dd cross element = Omega_12 = (1/2) sin(1.8 pi)
        let hdd = m.h_dd().to_dense();
        assert!((hdd[(eg, ge)].re + 0.5 * 0.5877852522924732).abs() < 1e-12);
    }

    #[test]
    fn gamma_matrix_element_vs_quadrature_oracle() {
        // <00|Gamma_12|00> on the 2-node grid vs independent Gauss-Hermite
        // integration of cos over two ground-state Gaussians, agreement 1e-6
        let eta = 0.036;
        let d = 0.9 * 2.0 * PI;
        let p = two_atom_params(eta, 0.36, 0.9);
        let _m = LindbladModel::build(p, 2, VibKernelMode::Unitary).unwrap();
        // reassemble the one-sided cross kernel element from the loss table:
        // <g0 e0| K |e0 g0> = <00|Gamma_21 vib|00>-ish; use the gain tensor
        // route instead: sum over gain terms for the (1,2) pair acting on
        // |00><00| reproduces the matrix element. Simplest: rebuild via DVR.
        let grid = DvrGrid::harmonic(1, eta).unwrap();
        let tens = grid.pair_tensor(&grid, 2, d, |s: f64| s.cos());
        let got = tens[(0, 0)]; // (n,m)=(0,0),(n',m')=(0,0)
        // 40-node Gauss-Hermite oracle over two independent Gaussians of
        // variance eta^2 (ground state of each trap)
        let gh = crate::spatial::QuadratureRule::gauss_hermite(40, eta).unwrap();
        let mut exact = 0.0;
        for (x1, w1) in gh.nodes.iter().zip(&gh.weights) {
            for (x2, w2) in gh.nodes.iter().zip(&gh.weights) {
                exact += w1 * w2 * (d + x1 - x2).cos();
            }
        }
        assert!(
            (got - exact).abs() < 1e-6,
            "DVR {got} vs quadrature {exact}"
        );
    }

    #[test]
    fn liouvillian_dark_vacuum() {
        let p = two_atom_params(0.036, 0.36, 0.9);
        let mut p0 = p.clone();
        p0.rabi = 0.0;
        let m = LindbladModel::build(p0, 2, VibKernelMode::auto(1)).unwrap();
        let rho = DensityMatrix::ground(m.basis());
        let drho = m.liouvillian_apply(&rho);
        assert!(drho.max_abs() < 1e-15);
    }

    #[test]
    fn liouvillian_single_atom_decay_rate() {
        // N=1 pinned, rho = |e><e|: d<e>/dt = -Gamma
        let p = ModelParams::<f64>::waveguide_1d(0.0, 0.0, 1e-4, 0.0, &[0.0]);
        let m = LindbladModel::build(p, 1, VibKernelMode::Unitary).unwrap();
        let b = m.basis();
        let rho = DensityMatrix::pure(b.dim(), b.index(&[(1, 0)]));
        let drho = m.liouvillian_apply(&rho);
        let e_idx = b.index(&[(1, 0)]);
        assert!((drho.get(e_idx, e_idx).re + 1.0).abs() < 1e-14);
        // and trace is conserved
        assert!(drho.trace().norm() < 1e-14);
    }

    #[test]
    fn liouvillian_symmetric_state_superradiant_rate() {
        // N=2 pinned, d = 0.9 lambda: symmetric single-excitation state decays
        // at Gamma (1 + cos 1.8 pi) = 1.8090 Gamma
        let p = two_atom_params(0.0, 0.0, 0.9);
        let m = LindbladModel::build(p, 1, VibKernelMode::Unitary).unwrap();
        let b = m.basis();
        let eg = b.index(&[(1, 0), (0, 0)]);
        let ge = b.index(&[(0, 0), (1, 0)]);
        let mut rho = DensityMatrix::<f64>::zeros(b.dim());
        for &i in &[eg, ge] {
            for &j in &[eg, ge] {
                rho.data[i * b.dim() + j] = c(0.5, 0.0);
            }
        }
        let drho = m.liouvillian_apply(&rho);
        // d/dt of the symmetric-state population
        let mut pdot = 0.0;
        for &i in &[eg, ge] {
            for &j in &[eg, ge] {
                pdot += drho.get(i, j).re * 0.5;
            }
        }
        let expect = -(1.0 + (1.8 * PI).cos());
        assert!((pdot - expect).abs() < 1e-12, "pdot = {pdot}, expect {expect}");
    }

    fn random_unit_trace_rho(dim: usize, seed: u64) -> DensityMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rho = DensityMatrix::<f64>::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                rho.data[i * dim + j] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        rho.hermitize();
        let t = rho.trace();
        for v in rho.data.iter_mut() {
            *v = *v / t;
        }
        rho
    }

    #[test]
    fn liouvillian_preserves_trace_and_hermiticity() {
        // unitary kernels: the truncated generator is exactly trace-free
        let p = two_atom_params(0.056, 0.2, 0.9);
        let m = LindbladModel::build(p, 3, VibKernelMode::Unitary).unwrap();
        let rho = random_unit_trace_rho(m.basis().dim(), 4);
        let drho = m.liouvillian_apply(&rho);
        assert!(drho.trace().norm() < 1e-12, "trace leak {}", drho.trace().norm());
        assert!(drho.herm_residual() < 1e-12);
    }

    #[test]
    fn oversampled_generator_stays_hermitian() {
        // exact matrix elements leak trace through truncated excited weight
        // (that is the convergence diagnostic) but never break Hermiticity
        let p = two_atom_params(0.056, 0.2, 0.9);
        let m = LindbladModel::build(p, 3, VibKernelMode::auto(2)).unwrap();
        let rho = random_unit_trace_rho(m.basis().dim(), 7);
        let drho = m.liouvillian_apply(&rho);
        assert!(drho.herm_residual() < 1e-12);
        // the leak is confined to excited-state weight: a ground-manifold
        // state with pinned vibrations is still exactly stationary in trace
        let ground = DensityMatrix::ground(m.basis());
        let dg = m.liouvillian_apply(&ground);
        assert!(dg.trace().norm() < 1e-14);
    }

    #[test]
    fn mock_kernel_same_plumbing() {
        // assembling with an injected kernel that reproduces the waveguide
        // values gives identical operators
        struct Mock {
            xs: Vec<f64>,
        }
        impl PairKernel<f64> for Mock {
            fn eval(&self, j: usize, jp: usize, d: f64) -> (f64, f64) {
                kernel_1d(1.0, self.xs[j] - self.xs[jp] + d)
            }
            fn validate_range(&self, _: usize, _: usize, _: f64, _: f64) -> Result<()> {
                Ok(())
            }
        }
        let p = two_atom_params(0.036, 0.36, 0.9);
        let built_in = LindbladModel::build(p.clone(), 2, VibKernelMode::auto(1)).unwrap();
        let mock = Mock { xs: vec![0.0, 0.9 * 2.0 * PI] };
        let injected = LindbladModel::build_with_kernel(p, 2, VibKernelMode::auto(1), &mock).unwrap();
        assert!(
            built_in
                .hamiltonian()
                .to_dense()
                .max_abs_diff(&injected.hamiltonian().to_dense())
                < 1e-14
        );
        assert!(built_in.loss().to_dense().max_abs_diff(&injected.loss().to_dense()) < 1e-14);
    }

    #[test]
    fn kernel_tensor_reciprocity() {
        // Omega/Gamma tables symmetric under j <-> j' with factor transpose
        let eta = 0.056;
        let d = 0.9 * 2.0 * PI;
        let g1 = DvrGrid::harmonic(12, eta).unwrap();
        let g2 = DvrGrid::harmonic(12, eta).unwrap();
        for kern in [
            (|s: f64| 0.5 * s.abs().sin()) as fn(f64) -> f64,
            (|s: f64| s.cos()) as fn(f64) -> f64,
        ] {
            let t12 = g1.pair_tensor(&g2, 3, d, kern);
            let t21 = g2.pair_tensor(&g1, 3, -d, kern);
            // t12[(n,m),(n',m')] = t21[(n',m'),(n,m)]
            for p in 0..9 {
                for q in 0..9 {
                    assert!((t12[(p, q)] - t21[(q, p)]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn sign_flip_guard_trips_for_overlapping_traps() {
        // traps closer than the node excursions flip the sign of |s|
        let p = ModelParams::<f64>::waveguide_1d(1e-4, 0.0, 1.6e-5, 0.5, &[0.0, 0.4]);
        let err = LindbladModel::build(p, 6, VibKernelMode::auto(5));
        assert!(matches!(err, Err(Error::SignFlip(_, _))));
    }

    #[test]
    fn coincident_3d_centers_error() {
        let q = [c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let p = ModelParams::free_space_3d(
            1e-4,
            0.0,
            1.6e-5,
            0.036,
            vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            q,
            [1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
        );
        assert!(matches!(
            LindbladModel::build(p, 1, VibKernelMode::Unitary),
            Err(Error::CoincidentCenters(_, _))
        ));
    }

    #[test]
    fn warning_thresholds() {
        let mut p = two_atom_params(0.4, 0.0, 0.9);
        p.rabi = 0.2;
        let w = p.validate().unwrap();
        assert_eq!(w.len(), 2);
    }
}
