//! Sudden-approximation pipeline: fixed-atom observables averaged over the
//! position distribution, the weak-drive coupled-dipole solver used as the
//! fast fixed-position route, and the validity diagnostics for the
//! approximation itself.

use crate::error::{Error, Result};
use crate::linalg::{schur, solve_refined, sym_tridiag_eigen, CMat};
use crate::model::{
    kernel_1d, kernel_3d, Geometry, LindbladModel, ModelParams, VibKernelMode,
};
use crate::observables::transmission_reflection;
use crate::scalar::{ci, czero, Scalar, C};
use crate::steadystate::steady_state_direct;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

// ---------------------------------------------------------------------------
// position distributions and quadrature
// ---------------------------------------------------------------------------

/// Spread of the atoms' positions about their trap centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind<T: Scalar> {
    /// Harmonic ground state: σ = √(ħ/(2Mω_t)) = η/k₀ per atom.
    VibrationalGround,
    /// Thermal state with mean occupation n̄: σ widened by √(2n̄+1).
    Thermal { n_bar: T },
    /// Atoms pinned at their centers.
    Delta,
}

/// Gaussian position distribution along the motion axis.
#[derive(Debug, Clone)]
pub struct PositionDistribution<T: Scalar> {
    pub kind: DistributionKind<T>,
    /// Per-atom standard deviation (units of 1/k₀).
    pub sigmas: Vec<T>,
}

impl<T: Scalar> PositionDistribution<T> {
    /// Distribution matching the model parameters.
    pub fn new(params: &ModelParams<T>, kind: DistributionKind<T>) -> Self {
        let base = params.eta; // k₀ σ_ground = η
        let sigma = match kind {
            DistributionKind::VibrationalGround => base,
            DistributionKind::Thermal { n_bar } => {
                base * (T::lit(2.0) * n_bar + T::one()).sqrt()
            }
            DistributionKind::Delta => T::zero(),
        };
        Self { kind, sigmas: vec![sigma; params.n_atoms()] }
    }

    pub fn is_delta(&self) -> bool {
        self.sigmas.iter().all(|s| *s == T::zero())
    }
}

/// Gauss-Hermite rule integrating against a Gaussian of standard deviation σ:
/// Σ w_i f(x_i) ≈ ∫ f(x) N(0, σ²) dx, exact for polynomials of degree
/// ≤ 2·order − 1.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T: Scalar> {
    pub order: usize,
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn gauss_hermite(order: usize, sigma: T) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("quadrature order must be positive".into()));
        }
        if sigma == T::zero() {
            return Ok(Self { order: 1, nodes: vec![T::zero()], weights: vec![T::one()] });
        }
        // Golub-Welsch on the oscillator position matrix: its ground state is
        // exactly the target Gaussian, so nodes/weights come from the
        // tridiagonal ⟨n|x̂|n+1⟩ = σ√(n+1)
        let diag = vec![T::zero(); order];
        let off: Vec<T> = (1..order)
            .map(|k| sigma * T::from_usize(k).expect("small").sqrt())
            .collect();
        let (nodes, z) = sym_tridiag_eigen(&diag, &off)?;
        let weights: Vec<T> = (0..order).map(|b| z[(0, b)] * z[(0, b)]).collect();
        Ok(Self { order, nodes, weights })
    }
}

/// Pairwise (cascade) summation: deterministic and accurate independent of
/// evaluation order choices upstream.
fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

// ---------------------------------------------------------------------------
// coupled-dipole fixed-position solver
// ---------------------------------------------------------------------------

/// N×N weak-drive coupling matrix at atom displacements `u` along the motion
/// axis: diagonal Δ + iΓ/2, off-diagonal −Ω_{jj′} + (i/2)Γ_{jj′}.
pub fn coupling_matrix<T: Scalar>(params: &ModelParams<T>, displacements: &[T]) -> Result<CMat<T>> {
    let n = params.n_atoms();
    if displacements.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: displacements.len() });
    }
    let axis = params.motion_axis();
    let mut m = CMat::zeros(n, n);
    for j in 0..n {
        m[(j, j)] = C::new(params.detuning, params.gamma * T::lit(0.5));
        for jp in 0..n {
            if jp == j {
                continue;
            }
            let (om, ga) = match &params.geometry {
                Geometry::Waveguide1D { .. } => kernel_1d(
                    params.gamma,
                    params.center_x(j) + displacements[j]
                        - params.center_x(jp)
                        - displacements[jp],
                ),
                Geometry::FreeSpace3D { dipole, .. } => {
                    let mut sep = [T::zero(); 3];
                    for a in 0..3 {
                        sep[a] = params.centers[j][a] + displacements[j] * axis[a]
                            - params.centers[jp][a]
                            - displacements[jp] * axis[a];
                    }
                    kernel_3d(params.gamma, sep, dipole)?
                }
            };
            m[(j, jp)] = C::new(-om, ga * T::lit(0.5));
        }
    }
    Ok(m)
}

/// Steady dipole amplitudes β_j of the weak-drive linearized model.
pub fn coupled_dipole_solve<T: Scalar>(
    params: &ModelParams<T>,
    displacements: &[T],
) -> Result<Vec<C<T>>> {
    let m = coupling_matrix(params, displacements)?;
    let kvec = params.drive_direction();
    let axis = params.motion_axis();
    let n = params.n_atoms();
    let rhs: Vec<C<T>> = (0..n)
        .map(|j| {
            let mut phase = T::zero();
            for a in 0..3 {
                phase += kvec[a] * (params.centers[j][a] + displacements[j] * axis[a]);
            }
            (ci::<T>() * C::from(phase)).exp() * C::from(params.rabi * T::lit(0.5))
        })
        .collect();
    solve_refined(&m, &rhs)
}

/// Which machinery evaluates a fixed-position (T, R) point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedPositionRoute {
    /// N×N linear solve (fast path; default).
    CoupledDipole,
    /// Full pinned master equation: N_vib = 1, trap centers shifted.
    PinnedMasterEquation,
}

/// Transmission/reflection for atoms frozen at `X_j + u_j` (1D geometry).
pub fn fixed_position_observables<T: Scalar>(
    params: &ModelParams<T>,
    displacements: &[T],
    route: FixedPositionRoute,
) -> Result<(T, T)> {
    if !matches!(params.geometry, Geometry::Waveguide1D { .. }) {
        return Err(Error::WrongGeometry { expected: "1D waveguide" });
    }
    match route {
        FixedPositionRoute::CoupledDipole => {
            let beta = coupled_dipole_solve(params, displacements)?;
            let pref = -ci::<T>() * C::from(params.gamma / params.rabi);
            let mut tau = crate::scalar::cone::<T>();
            let mut theta = czero::<T>();
            for (j, b) in beta.iter().enumerate() {
                let x = params.center_x(j) + displacements[j];
                tau += pref * *b * (-ci::<T>() * C::from(x)).exp();
                theta += pref * *b * (ci::<T>() * C::from(x)).exp();
            }
            Ok((tau.norm_sqr(), theta.norm_sqr()))
        }
        FixedPositionRoute::PinnedMasterEquation => {
            let shifted: Vec<T> = (0..params.n_atoms())
                .map(|j| params.center_x(j) + displacements[j])
                .collect();
            let p = ModelParams::waveguide_1d(
                params.rabi,
                params.detuning,
                params.trap_freq,
                T::zero(),
                &shifted,
            );
            let model = LindbladModel::build(p, 1, VibKernelMode::Unitary)?;
            let (rho, _) = steady_state_direct(&model)?;
            transmission_reflection(&model, &rho)
        }
    }
}

// ---------------------------------------------------------------------------
// position averaging
// ---------------------------------------------------------------------------

/// How the multi-atom average is carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AverageScheme {
    /// Integrate over the relative coordinate only (two atoms, 1D; exploits
    /// translation invariance of T and R).
    Relative,
    /// Full tensor-product rule over every atom.
    Product,
}

/// Doubling the order must move the probabilities by less than this for the
/// average to count as converged.
const QUADRATURE_TOL: f64 = 1e-6;

/// Averaged observables with a quadrature-convergence estimate.
#[derive(Debug, Clone, Copy)]
pub struct AverageResult<T: Scalar> {
    pub transmission: T,
    pub reflection: T,
    /// |change on doubling the quadrature order|.
    pub convergence: T,
    pub converged: bool,
}

/// Position-averaged (T̄, R̄) over the distribution, Gauss-Hermite with the
/// given order per active dimension; the convergence estimate doubles the
/// order. Two atoms in 1D default to the relative-coordinate integral.
pub fn average_observables<T: Scalar>(
    params: &ModelParams<T>,
    dist: &PositionDistribution<T>,
    order: usize,
) -> Result<AverageResult<T>> {
    let scheme = if params.n_atoms() == 2 && matches!(params.geometry, Geometry::Waveguide1D { .. })
    {
        AverageScheme::Relative
    } else {
        AverageScheme::Product
    };
    average_observables_with(params, dist, order, scheme)
}

pub fn average_observables_with<T: Scalar>(
    params: &ModelParams<T>,
    dist: &PositionDistribution<T>,
    order: usize,
    scheme: AverageScheme,
) -> Result<AverageResult<T>> {
    if dist.is_delta() {
        let (t, r) =
            fixed_position_observables(params, &vec![T::zero(); params.n_atoms()], FixedPositionRoute::CoupledDipole)?;
        return Ok(AverageResult { transmission: t, reflection: r, convergence: T::zero(), converged: true });
    }
    let eval = |ord: usize| -> Result<(T, T)> {
        match scheme {
            AverageScheme::Relative => {
                if params.n_atoms() != 2 {
                    return Err(Error::InvalidParameter(
                        "relative-coordinate averaging needs exactly two atoms".into(),
                    ));
                }
                // separation variance is the sum of the two single-atom ones
                let sig_rel =
                    (dist.sigmas[0] * dist.sigmas[0] + dist.sigmas[1] * dist.sigmas[1]).sqrt();
                let rule = QuadratureRule::gauss_hermite(ord, sig_rel)?;
                let mut ts = Vec::with_capacity(ord);
                let mut rs = Vec::with_capacity(ord);
                for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                    let (t, r) = fixed_position_observables(
                        params,
                        &[u, T::zero()],
                        FixedPositionRoute::CoupledDipole,
                    )?;
                    ts.push(w * t);
                    rs.push(w * r);
                }
                Ok((pairwise_sum(&ts), pairwise_sum(&rs)))
            }
            AverageScheme::Product => {
                let n = params.n_atoms();
                let rules: Vec<QuadratureRule<T>> = dist
                    .sigmas
                    .iter()
                    .map(|&s| QuadratureRule::gauss_hermite(ord, s))
                    .collect::<Result<_>>()?;
                let mut ts = Vec::new();
                let mut rs = Vec::new();
                let mut idx = vec![0usize; n];
                loop {
                    let mut w = T::one();
                    let mut u = vec![T::zero(); n];
                    for j in 0..n {
                        w *= rules[j].weights[idx[j]];
                        u[j] = rules[j].nodes[idx[j]];
                    }
                    let (t, r) =
                        fixed_position_observables(params, &u, FixedPositionRoute::CoupledDipole)?;
                    ts.push(w * t);
                    rs.push(w * r);
                    // odometer increment
                    let mut carry = 0usize;
                    loop {
                        idx[carry] += 1;
                        if idx[carry] < rules[carry].nodes.len() {
                            break;
                        }
                        idx[carry] = 0;
                        carry += 1;
                        if carry == n {
                            break;
                        }
                    }
                    if carry == n {
                        break;
                    }
                }
                Ok((pairwise_sum(&ts), pairwise_sum(&rs)))
            }
        }
    };
    let (t1, r1) = eval(order)?;
    let (t2, r2) = eval(2 * order)?;
    let conv = (t2 - t1).abs().max((r2 - r1).abs());
    Ok(AverageResult {
        transmission: t2,
        reflection: r2,
        convergence: conv,
        converged: conv <= T::lit(QUADRATURE_TOL),
    })
}

/// Monte-Carlo averaging behind the same interface (3D / many-atom use);
/// deterministic for a fixed seed and sample count.
pub fn average_observables_mc<T: Scalar>(
    params: &ModelParams<T>,
    dist: &PositionDistribution<T>,
    n_samples: usize,
    seed: u64,
) -> Result<AverageResult<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.n_atoms();
    let mut ts = Vec::with_capacity(n_samples);
    let mut rs = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let u: Vec<T> = (0..n)
            .map(|j| {
                let g: f64 = StandardNormal.sample(&mut rng);
                dist.sigmas[j] * T::lit(g)
            })
            .collect();
        let (t, r) = fixed_position_observables(params, &u, FixedPositionRoute::CoupledDipole)?;
        ts.push(t);
        rs.push(r);
    }
    let inv = T::one() / T::from_usize(n_samples).expect("small");
    let tbar = pairwise_sum(&ts) * inv;
    let rbar = pairwise_sum(&rs) * inv;
    // standard error of the mean as the convergence figure
    let var: T = pairwise_sum(
        &ts.iter().map(|&t| (t - tbar) * (t - tbar)).collect::<Vec<_>>(),
    ) * inv;
    let sem = (var / T::from_usize(n_samples.max(2) - 1).expect("small")).sqrt();
    Ok(AverageResult { transmission: tbar, reflection: rbar, convergence: sem, converged: true })
}

// ---------------------------------------------------------------------------
// sudden-approximation validity
// ---------------------------------------------------------------------------

/// Diagnostics comparing the trap period against the slowest collective
/// lifetime (the sudden approximation needs lifetime ≪ period).
#[derive(Debug, Clone)]
pub struct ValidityReport<T: Scalar> {
    /// Collective decay widths (2 × imaginary parts of the pinned coupling
    /// matrix eigenvalues), units of Γ.
    pub widths: Vec<T>,
    pub slowest_width: T,
    /// 2π/ω_t in units of 1/Γ (infinite for untrapped atoms).
    pub trap_period: T,
    /// (subradiant lifetime) / (trap period); the approximation degrades as
    /// this approaches 1.
    pub lifetime_over_period: T,
    pub sudden_ok: bool,
    pub warnings: Vec<String>,
}

const SUDDEN_WARN_RATIO: f64 = 0.05;

pub fn sudden_validity_check<T: Scalar>(params: &ModelParams<T>) -> Result<ValidityReport<T>> {
    let m = coupling_matrix(params, &vec![T::zero(); params.n_atoms()])?;
    let s = schur(&m)?;
    let widths: Vec<T> = s
        .eigenvalues()
        .iter()
        .map(|l| T::lit(2.0) * l.im)
        .collect();
    let slowest_width = widths
        .iter()
        .copied()
        .fold(T::infinity(), T::min)
        .max(T::zero());
    let trap_period = if params.trap_freq > T::zero() {
        T::lit(2.0) * T::PI() / params.trap_freq
    } else {
        T::infinity()
    };
    let ratio = if slowest_width > T::zero() && trap_period.is_finite() {
        T::one() / (slowest_width * trap_period)
    } else if trap_period.is_finite() {
        T::infinity() // perfectly dark mode never settles
    } else {
        T::zero()
    };
    let mut warnings = Vec::new();
    let sudden_ok = ratio < T::lit(SUDDEN_WARN_RATIO);
    if !sudden_ok {
        warnings.push(format!(
            "subradiant lifetime is {ratio} trap periods; spatial averaging may misrepresent the full dynamics"
        ));
    }
    if params.rabi > T::lit(0.1) {
        warnings.push(format!(
            "rabi = {} violates the weak-drive assumption behind the sudden approximation",
            params.rabi
        ));
    }
    Ok(ValidityReport {
        widths,
        slowest_width,
        trap_period,
        lifetime_over_period: ratio,
        sudden_ok,
        warnings,
    })
}
