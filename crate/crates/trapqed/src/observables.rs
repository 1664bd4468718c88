//! Transmission and reflection probabilities of the 1D waveguide from the
//! steady-state density matrix: T = Tr[τ̂†τ̂ ρ̂], R = Tr[θ̂†θ̂ ρ̂].
//!
//! The position operators inside τ̂ and θ̂ connect vibrationally off-diagonal
//! elements of ρ̂, so both traces always run over the full composite space.

use crate::error::{Error, Result};
use crate::hilbert::{local, DensityMatrix, SparseOperator};
use crate::model::{Geometry, LindbladModel, ModelParams};
use crate::scalar::{ci, Scalar, C};

/// τ̂ = 1 − i (Γ/Ω) Σ_j σ_j⁻ e^{−i k₀ (X_j + x_j)}.
pub fn tau_operator<T: Scalar>(model: &LindbladModel<T>) -> Result<SparseOperator<T>> {
    transit_operator(model, true)
}

/// θ̂ = −i (Γ/Ω) Σ_j σ_j⁻ e^{+i k₀ (X_j + x_j)}.
pub fn theta_operator<T: Scalar>(model: &LindbladModel<T>) -> Result<SparseOperator<T>> {
    transit_operator(model, false)
}

fn transit_operator<T: Scalar>(
    model: &LindbladModel<T>,
    with_identity: bool,
) -> Result<SparseOperator<T>> {
    let params = model.params();
    if !matches!(params.geometry, Geometry::Waveguide1D { .. }) {
        return Err(Error::WrongGeometry { expected: "1D waveguide" });
    }
    if params.rabi <= T::zero() {
        return Err(Error::ZeroRabi);
    }
    let basis = model.basis();
    let n_vib = basis.n_vib();
    // e^{-i k x} for transmission, e^{+i k x} for reflection
    let sign = if with_identity { -T::one() } else { T::one() };
    let mut op = if with_identity {
        SparseOperator::identity(basis.dim())
    } else {
        SparseOperator::zero(basis.dim())
    };
    let pref = -ci::<T>() * C::from(params.gamma / params.rabi);
    for j in 0..params.n_atoms() {
        let xj = params.center_x(j);
        let phase = model.grids()[j].matrix_elements_truncated(n_vib, T::zero(), |u| {
            (ci::<T>() * C::from(sign * (xj + u))).exp()
        });
        let term = basis.lift(j, &local::sigma_minus(&phase))?.scale(pref);
        op = op.add(&term);
    }
    Ok(op)
}

/// `Tr[A† A ρ]` for a flux operator A and a raw density-matrix slice.
pub fn flux_probability<T: Scalar>(op: &SparseOperator<T>, rho: &[C<T>]) -> T {
    op.flux_expectation(rho).re
}

/// Transmission probability T = Tr[τ̂†τ̂ ρ̂]; the imaginary residue must
/// vanish and is asserted against at debug level.
pub fn transmission<T: Scalar>(rho: &DensityMatrix<T>, tau: &SparseOperator<T>) -> T {
    let v = tau.flux_expectation(&rho.data);
    debug_assert!(v.im.abs() < T::lit(1e-12), "transmission picked up an imaginary part");
    v.re
}

/// Reflection probability R = Tr[θ̂†θ̂ ρ̂].
pub fn reflection<T: Scalar>(rho: &DensityMatrix<T>, theta: &SparseOperator<T>) -> T {
    let v = theta.flux_expectation(&rho.data);
    debug_assert!(v.im.abs() < T::lit(1e-12), "reflection picked up an imaginary part");
    v.re
}

/// Both probabilities from a steady state.
pub fn transmission_reflection<T: Scalar>(
    model: &LindbladModel<T>,
    rho: &DensityMatrix<T>,
) -> Result<(T, T)> {
    let tau = tau_operator(model)?;
    let theta = theta_operator(model)?;
    Ok((transmission(rho, &tau), reflection(rho, &theta)))
}

/// How a spectrum row was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesTag {
    Fixed,
    Averaged,
    FullQuantum,
}

impl SeriesTag {
    pub fn label(&self, n_max: usize) -> String {
        match self {
            SeriesTag::Fixed => "fixed".into(),
            SeriesTag::Averaged => "averaged".into(),
            SeriesTag::FullQuantum => format!("nmax{n_max}"),
        }
    }
}

/// One detuning point of a spectrum.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumRow<T: Scalar> {
    pub delta_over_gamma: T,
    pub transmission: T,
    pub reflection: T,
}

impl<T: Scalar> SpectrumRow<T> {
    pub fn loss(&self) -> T {
        T::one() - self.transmission - self.reflection
    }
}

/// Detuning sweep results plus the provenance needed to reproduce them.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Scalar> {
    pub rows: Vec<SpectrumRow<T>>,
    pub params: ModelParams<T>,
    pub n_max: usize,
    pub series: String,
}

impl<T: Scalar> Spectrum<T> {
    pub fn new(params: ModelParams<T>, n_max: usize, series: impl Into<String>) -> Self {
        Self { rows: Vec::new(), params, n_max, series: series.into() }
    }

    pub fn push(&mut self, delta: T, t: T, r: T) {
        self.rows.push(SpectrumRow { delta_over_gamma: delta, transmission: t, reflection: r });
    }

    /// Probability-range sanity check (weak drive): 0 ≤ T, R ≤ 1 and
    /// loss ≥ 0, all up to 1e-9 slack.
    pub fn check_ranges(&self) -> Result<()> {
        let slack = T::lit(1e-9);
        for row in &self.rows {
            let ok = row.transmission >= -slack
                && row.transmission <= T::one() + slack
                && row.reflection >= -slack
                && row.reflection <= T::one() + slack
                && row.loss() >= -slack;
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "spectrum row at delta = {} out of probability range: T = {}, R = {}",
                    row.delta_over_gamma, row.transmission, row.reflection
                )));
            }
        }
        Ok(())
    }
}
