//! Steady state of the master equation, two ways: a direct linear solve of
//! the flattened superoperator and adaptive time propagation, cross-validated
//! against each other.
//!
//! The direct solve targets the operational steady state: electronic degrees
//! of freedom relaxed, slow vibrational drift frozen at the initial
//! condition. The drive-free generator is block-triangular over excitation
//! sectors (the jump gain only lowers both indices), so each Born step in the
//! drive solves the flattened system exactly by sector back-substitution;
//! within a sector the resolvent is a Sylvester equation handled through the
//! Schur form of the sector's effective Hamiltonian. The electronic-ground
//! energy-degenerate elements are the near-null directions (relaxation
//! ~η²Ω²Γ): they are pinned to ρ₀, with the trace row carried by the ground
//! population.

use crate::error::{Error, Result};
use crate::hilbert::{CompositeBasis, DensityMatrix};
use crate::linalg::{schur, CMat, Schur};
use crate::model::LindbladModel;
use crate::observables::{self, tau_operator, theta_operator};
use crate::scalar::{c, czero, Scalar, C};

/// Which steady-state route to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Propagate,
    Both,
}

/// Solver knobs; time quantities in units of 1/Γ.
#[derive(Debug, Clone)]
pub struct SolverConfig<T: Scalar> {
    pub method: Method,
    /// Initial integrator step.
    pub dt: T,
    /// Relative change of (T, R) per window that declares convergence.
    pub convergence: T,
    /// Hard cap on propagation time.
    pub t_max: T,
    /// Observable-sampling interval.
    pub window: T,
    /// Local error control of the embedded Runge-Kutta pair.
    pub rtol: T,
    pub atol: T,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            method: Method::Direct,
            dt: T::lit(0.05),
            convergence: T::lit(1e-9),
            t_max: T::lit(5e3),
            window: T::lit(10.0),
            rtol: T::lit(1e-10),
            // absolute floor far below any element that can influence the
            // (Γ/Ω)²-amplified observables
            atol: T::lit(1e-24),
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.dt <= T::zero() || self.convergence <= T::zero() {
            return Err(Error::InvalidParameter(
                "solver needs dt > 0 and convergence > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics attached to a direct solve.
#[derive(Debug, Clone)]
pub struct DirectInfo<T: Scalar> {
    /// Born iterations used by the drive expansion.
    pub iterations: usize,
    /// Max |dρ/dt| over the solved (fast) rows, units of Γ.
    pub residual: T,
    /// Max |dρ/dt| over the pinned slow-manifold rows (physical heating
    /// flux), units of Γ.
    pub drift_rate: T,
    /// drift_rate × electronic settling horizon: how much the pinned
    /// populations would move while the fast sectors relax.
    pub drift_estimate: T,
    pub warnings: Vec<String>,
}

/// Diagnostics attached to a propagation run.
#[derive(Debug, Clone)]
pub struct PropagateInfo<T: Scalar> {
    pub t_end: T,
    pub steps: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

struct Sectors {
    /// Flat indices per excitation count.
    members: Vec<Vec<usize>>,
    /// Flat index -> (sector, position within sector).
    locate: Vec<(usize, usize)>,
}

fn split_sectors(basis: &CompositeBasis) -> Sectors {
    let n = basis.n_atoms();
    let mut members = vec![Vec::new(); n + 1];
    let mut locate = vec![(0usize, 0usize); basis.dim()];
    for k in 0..basis.dim() {
        let m = basis.excitations(k);
        locate[k] = (m, members[m].len());
        members[m].push(k);
    }
    Sectors { members, locate }
}

/// Singular-denominator threshold for dark-resonance detection.
const DARK_TOL: f64 = 1e-13;
/// Max |Δρ| per sweep that stops the stationary iteration.
const BORN_TOL: f64 = 1e-15;
const BORN_MAX_ITER: usize = 80;
/// Relative residual target of the GMRES fallback.
const GMRES_TOL: f64 = 1e-13;
const GMRES_MAX_ITER: usize = 160;

enum BornOutcome<T: Scalar> {
    Converged(Vec<C<T>>, usize),
    Diverged,
}

/// Direct steady state from the default initial condition (all atoms in |g⟩,
/// vibrational ground).
pub fn steady_state_direct<T: Scalar>(
    model: &LindbladModel<T>,
) -> Result<(DensityMatrix<T>, DirectInfo<T>)> {
    steady_state_direct_from(model, &DensityMatrix::ground(model.basis()))
}

/// Direct steady state with the slow manifold pinned to `rho0`.
pub fn steady_state_direct_from<T: Scalar>(
    model: &LindbladModel<T>,
    rho0: &DensityMatrix<T>,
) -> Result<(DensityMatrix<T>, DirectInfo<T>)> {
    let dim = model.basis().dim();
    if rho0.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: rho0.dim() });
    }
    let solver = DirectSolver::new(model)?;

    // fixed point of x = b + A x, with A the drive fed back through the
    // drive-free resolvent. The stationary (Born) iteration reproduces every
    // element at its own relative accuracy — essential because the
    // observables amplify second-order elements by (Γ/Ω)² — and converges
    // whenever the drive ladder contracts. When it diverges (strong drive
    // against a shallow trap) GMRES on (I - A) x = b takes over; its
    // absolute-residual accuracy is sufficient exactly in that regime.
    let b = solver.solve_l0(None, Some(rho0), rho0.trace().re)?;
    let (x, iterations) = match solver.born(&b)? {
        BornOutcome::Converged(x, iters) => (x, iters),
        BornOutcome::Diverged => solver.gmres(&b)?,
    };

    let mut rho = DensityMatrix::zeros(dim);
    rho.data = x;
    rho.hermitize();

    // residual diagnostics via the independent sparse-application path
    let drho = model.liouvillian_apply(&rho);
    let mut residual = T::zero();
    let mut drift_rate = T::zero();
    for i in 0..dim {
        for j in 0..dim {
            if solver.is_pinned(i, j) {
                drift_rate = drift_rate.max(drho.get(i, j).norm());
            } else {
                residual = residual.max(drho.get(i, j).norm());
            }
        }
    }
    // settling horizon from the slowest single-excitation width
    let width_min = solver
        .schur_blocks
        .get(1)
        .map(|s| {
            s.eigenvalues()
                .iter()
                .map(|l| -T::lit(2.0) * l.im)
                .fold(T::infinity(), T::min)
        })
        .unwrap_or(T::one());
    let horizon = T::lit(10.0) / width_min.max(T::lit(1e-30));
    let drift_estimate = drift_rate * horizon;

    let mut warnings = model.warnings().to_vec();
    if drift_estimate > T::lit(1e-6) {
        warnings.push(format!(
            "vibrational populations drift by ~{drift_estimate:e} during electronic convergence"
        ));
    }
    if rho.min_diag() < -T::lit(1e-9) {
        warnings.push(format!("negative population {:e} (truncation artifact)", rho.min_diag()));
    }

    Ok((
        rho,
        DirectInfo { iterations, residual, drift_rate, drift_estimate, warnings },
    ))
}

struct DirectSolver<'a, T: Scalar> {
    model: &'a LindbladModel<T>,
    sectors: Sectors,
    schur_blocks: Vec<Schur<T>>,
    dim: usize,
}

impl<'a, T: Scalar> DirectSolver<'a, T> {
    fn new(model: &'a LindbladModel<T>) -> Result<Self> {
        let sectors = split_sectors(model.basis());
        let heff_blocks = build_heff_blocks(model, &sectors)?;
        let schur_blocks: Vec<Schur<T>> = heff_blocks.iter().map(schur).collect::<Result<_>>()?;
        Ok(Self { model, sectors, schur_blocks, dim: model.basis().dim() })
    }

    /// Electronic-ground elements whose H₀ energies coincide relax only at
    /// the slow heating rate; they are constraint rows, not solve rows.
    fn degenerate(&self, a: usize, b: usize) -> bool {
        let basis = self.model.basis();
        self.model.params().trap_freq == T::zero() || basis.vib_sum(a) == basis.vib_sum(b)
    }

    fn is_pinned(&self, i: usize, j: usize) -> bool {
        self.sectors.locate[i].0 == 0 && self.sectors.locate[j].0 == 0 && self.degenerate(i, j)
    }

    /// Exact solve of the drive-free flattened system by excitation-sector
    /// back-substitution (the jump gain only lowers both sector indices).
    ///
    /// Solves L₀ x = -i[H_L, y] (when `drive_source` is given) on the fast
    /// rows; pinned rows are set from `pins` (zero if `None`) and the trace
    /// row assigns the ground population so the total trace is
    /// `trace_target`.
    fn solve_l0(
        &self,
        drive_source: Option<&[C<T>]>,
        pins: Option<&DensityMatrix<T>>,
        trace_target: T,
    ) -> Result<Vec<C<T>>> {
        let dim = self.dim;
        let n_sec = self.sectors.members.len();
        let basis = self.model.basis();
        let g0 = basis.ground_index();
        let wt = self.model.params().trap_freq;

        // rhs = -V(y) = +i [H_L, y]
        let mut rhs = vec![czero::<T>(); dim * dim];
        if let Some(y) = drive_source {
            self.model.h_drive().apply_left_scaled_acc(y, c(0.0, 1.0), &mut rhs);
            self.model.h_drive().apply_right_scaled_acc(y, c(0.0, -1.0), &mut rhs);
        }

        let mut xn = vec![czero::<T>(); dim * dim];
        let mut gain_buf = vec![czero::<T>(); dim * dim];
        let mut scratch = vec![czero::<T>(); dim * dim];

        for level in (0..2 * n_sec - 1).rev() {
            // the (m, m') block of the gain only reads (m+1, m'+1), which is
            // already solved: one application per level suffices
            gain_buf.fill(czero());
            for term in self.model.gain() {
                term.left.apply_left_into(&xn, &mut scratch);
                term.right.apply_right_scaled_acc(&scratch, c(1.0, 0.0), &mut gain_buf);
            }
            for m_l in 0..n_sec {
                if level < m_l {
                    continue;
                }
                let m_r = level - m_l;
                if m_r >= n_sec || m_l < m_r {
                    continue;
                }
                let rows = &self.sectors.members[m_l];
                let cols = &self.sectors.members[m_r];
                if m_l == 0 && m_r == 0 {
                    self.solve_ground_sector(&rhs, &gain_buf, &mut xn, pins, trace_target, g0, wt);
                    continue;
                }
                let rhs_block = CMat::from_fn(rows.len(), cols.len(), |i, j| {
                    rhs[rows[i] * dim + cols[j]] - gain_buf[rows[i] * dim + cols[j]]
                });
                let xb = crate::linalg::sylvester_neg_i(
                    &self.schur_blocks[m_l],
                    &self.schur_blocks[m_r],
                    &rhs_block,
                    T::lit(DARK_TOL),
                )?;
                for (i, &gi) in rows.iter().enumerate() {
                    for (j, &gj) in cols.iter().enumerate() {
                        xn[gi * dim + gj] = xb[(i, j)];
                        if m_l != m_r {
                            // Hermitian mirror into the (m_r, m_l) block
                            xn[gj * dim + gi] = xb[(i, j)].conj();
                        }
                    }
                }
            }
        }
        Ok(xn)
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_ground_sector(
        &self,
        rhs: &[C<T>],
        gain_buf: &[C<T>],
        xn: &mut [C<T>],
        pins: Option<&DensityMatrix<T>>,
        trace_target: T,
        g0: usize,
        wt: T,
    ) {
        let dim = self.dim;
        let basis = self.model.basis();
        let ground = &self.sectors.members[0];
        for &a in ground {
            for &b in ground {
                if a == g0 && b == g0 {
                    continue; // trace row handled last
                }
                let v = if self.degenerate(a, b) {
                    pins.map(|p| p.get(a, b)).unwrap_or_else(czero)
                } else {
                    let dn = T::from_isize(basis.vib_sum(a) as isize - basis.vib_sum(b) as isize)
                        .expect("small");
                    let cval = rhs[a * dim + b] - gain_buf[a * dim + b];
                    // -i w_t dn x = c  =>  x = c / (-i w_t dn)
                    cval / (c::<T>(0.0, -1.0) * C::from(wt * dn))
                };
                xn[a * dim + b] = v;
            }
        }
        // trace row: the ground population absorbs every other diagonal
        let mut others = czero::<T>();
        for k in 0..dim {
            if k != g0 {
                others += xn[k * dim + k];
            }
        }
        xn[g0 * dim + g0] = C::from(trace_target) - others;
    }

    /// Stationary iteration x ← b + A x. Each sweep rebuilds the drive
    /// response from scratch, so converged elements carry their own relative
    /// rounding rather than an absolute floor.
    fn born(&self, b: &[C<T>]) -> Result<BornOutcome<T>> {
        let mut x = b.to_vec();
        let mut prev_diff = T::infinity();
        for iter in 0..BORN_MAX_ITER {
            let ax = self.solve_l0(Some(&x), None, T::zero())?;
            let mut diff = T::zero();
            let mut xn = b.to_vec();
            for (k, a) in ax.iter().enumerate() {
                xn[k] += *a;
                diff = diff.max((xn[k] - x[k]).norm());
            }
            x = xn;
            if diff <= T::lit(BORN_TOL) {
                return Ok(BornOutcome::Converged(x, iter + 1));
            }
            if iter > 3 && diff >= prev_diff {
                return Ok(BornOutcome::Diverged);
            }
            prev_diff = diff;
        }
        Ok(BornOutcome::Diverged)
    }

    /// Unrestarted GMRES on (I - A) x = b with A y = L₀⁻¹(-V y); modified
    /// Gram-Schmidt Arnoldi with Givens least squares. Returns the solution
    /// and the iteration count.
    fn gmres(&self, b: &[C<T>]) -> Result<(Vec<C<T>>, usize)> {
        let n = b.len();
        let dot = |u: &[C<T>], v: &[C<T>]| -> C<T> {
            u.iter().zip(v).fold(czero(), |acc, (x, y)| acc + x.conj() * *y)
        };
        let nrm = |u: &[C<T>]| -> T { dot(u, u).re.sqrt() };

        let beta = nrm(b);
        if beta == T::zero() {
            return Ok((vec![czero(); n], 0));
        }
        let tol = T::lit(GMRES_TOL) * beta;
        let max_iter = GMRES_MAX_ITER;

        let mut basis_v: Vec<Vec<C<T>>> = Vec::with_capacity(max_iter + 1);
        basis_v.push(b.iter().map(|z| *z / C::from(beta)).collect());
        let mut h = vec![vec![czero::<T>(); max_iter]; max_iter + 1];
        let mut cs = vec![czero::<T>(); max_iter];
        let mut sn = vec![czero::<T>(); max_iter];
        let mut g = vec![czero::<T>(); max_iter + 1];
        g[0] = C::from(beta);

        for j in 0..max_iter {
            // w = (I - A) v_j
            let av = self.solve_l0(Some(&basis_v[j]), None, T::zero())?;
            let mut w: Vec<C<T>> = basis_v[j]
                .iter()
                .zip(&av)
                .map(|(v, a)| *v - *a)
                .collect();
            for i in 0..=j {
                let hij = dot(&basis_v[i], &w);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&basis_v[i]) {
                    *wk -= hij * *vk;
                }
            }
            let hnext = nrm(&w);
            h[j + 1][j] = C::from(hnext);
            // apply accumulated rotations to the new column
            for i in 0..j {
                let tmp = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i].conj() * h[i][j] + cs[i].conj() * h[i + 1][j];
                h[i][j] = tmp;
            }
            // new rotation zeroing h[j+1][j]
            let (cj, sj) = {
                let a = h[j][j];
                let bb = h[j + 1][j];
                let r = (a.norm_sqr() + bb.norm_sqr()).sqrt();
                if r == T::zero() {
                    (crate::scalar::cone::<T>(), czero::<T>())
                } else if a == czero() {
                    (czero::<T>(), bb.conj() / C::from(r))
                } else {
                    let alpha = a / C::from(a.norm());
                    (
                        C::from(a.norm() / r),
                        alpha * bb.conj() / C::from(r),
                    )
                }
            };
            cs[j] = cj;
            sn[j] = sj;
            h[j][j] = cj * h[j][j] + sj * h[j + 1][j];
            h[j + 1][j] = czero();
            g[j + 1] = -sj.conj() * g[j];
            g[j] = cj * g[j];

            let res = g[j + 1].norm();
            if res <= tol || j + 1 == max_iter {
                if res > tol {
                    return Err(Error::InvalidParameter(format!(
                        "direct solve did not converge (GMRES residual {res:e} after {max_iter} \
                         iterations); use the propagation method"
                    )));
                }
                // back-substitute y from the triangular system
                let m = j + 1;
                let mut y = vec![czero::<T>(); m];
                for i in (0..m).rev() {
                    let mut acc = g[i];
                    for k2 in i + 1..m {
                        acc -= h[i][k2] * y[k2];
                    }
                    y[i] = acc / h[i][i];
                }
                let mut x = vec![czero::<T>(); n];
                for (i, yi) in y.iter().enumerate() {
                    for (xk, vk) in x.iter_mut().zip(&basis_v[i]) {
                        *xk += *yi * *vk;
                    }
                }
                return Ok((x, m));
            }
            basis_v.push(w.iter().map(|z| *z / C::from(hnext)).collect());
        }
        unreachable!("GMRES loop always returns or errors at max_iter");
    }
}

fn build_heff_blocks<T: Scalar>(
    model: &LindbladModel<T>,
    sectors: &Sectors,
) -> Result<Vec<CMat<T>>> {
    let dim = model.basis().dim();
    let mut blocks: Vec<CMat<T>> = sectors
        .members
        .iter()
        .map(|m| CMat::zeros(m.len(), m.len()))
        .collect();
    let mut place = |r: usize, col: usize, v: C<T>| {
        let (ms, i) = sectors.locate[r];
        let (mc, j) = sectors.locate[col];
        debug_assert_eq!(ms, mc, "drive-free generator must be sector-diagonal");
        blocks[ms][(i, j)] += v;
    };
    let _ = dim;
    for (r, col, v) in model.h0().entries() {
        place(r, col, v);
    }
    for (r, col, v) in model.h_dd().entries() {
        place(r, col, v);
    }
    for (r, col, v) in model.loss().entries() {
        place(r, col, v * c(0.0, -0.5));
    }
    Ok(blocks)
}

/// Adaptive Dormand-Prince 5(4) propagation of dρ/dt until the observables
/// stop moving (or `t_max`). Re-Hermitizes after every accepted step.
pub fn propagate<T: Scalar>(
    model: &LindbladModel<T>,
    rho0: &DensityMatrix<T>,
    config: &SolverConfig<T>,
) -> Result<(DensityMatrix<T>, PropagateInfo<T>)> {
    config.validate()?;
    let dim = model.basis().dim();
    if rho0.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: rho0.dim() });
    }

    // convergence target: (T, R) in driven 1D geometries, max|ρ| change
    // otherwise
    let flux_ops = match (&model.params().geometry, model.params().rabi > T::zero()) {
        (crate::model::Geometry::Waveguide1D { .. }, true) => Some((
            tau_operator(model)?,
            theta_operator(model)?,
        )),
        _ => None,
    };

    let a: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    let b_err: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];

    let n2 = dim * dim;
    let mut y = rho0.data.clone();
    let mut k: Vec<Vec<C<T>>> = (0..7).map(|_| vec![czero::<T>(); n2]).collect();
    let mut ytmp = vec![czero::<T>(); n2];
    let mut scratch = vec![czero::<T>(); n2];

    let mut t = T::zero();
    let mut h = config.dt;
    let mut steps = 0usize;
    let mut next_sample = config.window;
    let mut prev_obs: Option<(T, T)> = None;
    let mut converged = false;

    model.liouvillian_apply_into(&y, &mut k[0], &mut scratch);

    while t < config.t_max {
        let h_step = h.min(next_sample - t).min(config.t_max - t).max(T::lit(1e-12));
        // stages 2..7
        for s in 0..6 {
            ytmp.copy_from_slice(&y);
            for (j, row) in a[s].iter().enumerate().take(s + 1) {
                if *row == 0.0 {
                    continue;
                }
                let w = C::from(h_step * T::lit(*row));
                let kj = &k[j];
                for idx in 0..n2 {
                    ytmp[idx] += w * kj[idx];
                }
            }
            let (head, tail) = k.split_at_mut(s + 1);
            let _ = head;
            model.liouvillian_apply_into(&ytmp, &mut tail[0], &mut scratch);
        }
        // 5th-order solution is ytmp from the last stage (FSAL layout)
        // per-element relative error control: the weak-drive observables
        // amplify tiny coherences by (Γ/Ω)², so a global error scale would
        // let integrator noise swamp them
        let mut err = T::zero();
        for idx in 0..n2 {
            let mut e = czero::<T>();
            for (j, w) in b_err.iter().enumerate() {
                if *w != 0.0 {
                    e += C::from(h_step * T::lit(*w)) * k[j][idx];
                }
            }
            let scale = config.atol + config.rtol * y[idx].norm().max(ytmp[idx].norm());
            err = err.max(e.norm() / scale);
        }
        if err <= T::one() {
            // accept
            t += h_step;
            std::mem::swap(&mut y, &mut ytmp);
            steps += 1;
            // re-Hermitize
            for i in 0..dim {
                for j in i..dim {
                    let s1 = y[i * dim + j];
                    let s2 = y[j * dim + i];
                    let sym = (s1 + s2.conj()) * C::from(T::lit(0.5));
                    y[i * dim + j] = sym;
                    y[j * dim + i] = sym.conj();
                }
            }
            model.liouvillian_apply_into(&y, &mut k[0], &mut scratch);

            if t >= next_sample - T::lit(1e-12) {
                next_sample += config.window;
                let obs = match &flux_ops {
                    Some((tau, theta)) => (
                        observables::flux_probability(tau, &y),
                        observables::flux_probability(theta, &y),
                    ),
                    None => {
                        let m = y.iter().map(|z| z.norm()).fold(T::zero(), T::max);
                        (m, T::zero())
                    }
                };
                if let Some((pt, pr)) = prev_obs {
                    // probabilities sum to ~1, so a floor on the scale keeps
                    // the relative criterion meaningful when T or R is tiny
                    let rel = |new: T, old: T| {
                        (new - old).abs() / new.abs().max(old.abs()).max(T::lit(0.01))
                    };
                    if rel(obs.0, pt).max(rel(obs.1, pr)) < config.convergence {
                        converged = true;
                    }
                }
                prev_obs = Some(obs);
                if converged {
                    break;
                }
            }
        }
        // step-size update
        let factor = if err > T::zero() {
            T::lit(0.9) * err.powf(T::lit(-0.2))
        } else {
            T::lit(5.0)
        };
        h = h_step * factor.max(T::lit(0.2)).min(T::lit(5.0));
        if h < T::lit(1e-10) {
            return Err(Error::InvalidParameter(
                "integrator step collapsed below 1e-10/Gamma".into(),
            ));
        }
        if steps > 50_000_000 {
            return Err(Error::InvalidParameter("propagation exceeded step budget".into()));
        }
    }

    let mut rho = DensityMatrix::zeros(dim);
    rho.data = y;
    let mut warnings = model.warnings().to_vec();
    if !converged {
        warnings.push(format!(
            "propagation reached t_max = {} without meeting the convergence threshold",
            config.t_max
        ));
    }
    Ok((rho, PropagateInfo { t_end: t, steps, converged, warnings }))
}

/// Run the configured method(s); with `Method::Both` the two results are
/// cross-checked and the direct one is returned.
pub fn steady_state<T: Scalar>(
    model: &LindbladModel<T>,
    rho0: &DensityMatrix<T>,
    config: &SolverConfig<T>,
) -> Result<(DensityMatrix<T>, Vec<String>)> {
    match config.method {
        Method::Direct => {
            let (rho, info) = steady_state_direct_from(model, rho0)?;
            Ok((rho, info.warnings))
        }
        Method::Propagate => {
            let (rho, info) = propagate(model, rho0, config)?;
            Ok((rho, info.warnings))
        }
        Method::Both => {
            let (rho_d, info_d) = steady_state_direct_from(model, rho0)?;
            let (rho_p, info_p) = propagate(model, rho0, config)?;
            let dev = rho_d.max_abs_diff(&rho_p);
            let mut warnings = info_d.warnings;
            warnings.extend(info_p.warnings);
            if dev > T::lit(1e-8) {
                warnings.push(format!("direct and propagated steady states differ by {dev:e}"));
            }
            Ok((rho_d, warnings))
        }
    }
}
