//! Experiment runner around the `trapqed` library: plain-text configs,
//! detuning sweeps over the standard parameter sets, CSV output.
//!
//! All SI-to-internal conversion lives here; the library itself only ever
//! sees quantities in units of Γ and 1/k₀.

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

use trapqed::model::{LindbladModel, ModelParams, VibKernelMode};
use trapqed::observables::transmission_reflection;
use trapqed::spatial::{
    average_observables, fixed_position_observables, sudden_validity_check, DistributionKind,
    FixedPositionRoute, PositionDistribution,
};
use trapqed::steadystate::steady_state_direct;

pub const HBAR: f64 = 1.0545718e-34;

/// Configuration of one experiment, SI units at the boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `1d-waveguide` or `3d-free-space`.
    pub geometry: String,
    pub n_atoms: usize,
    /// Vibrational cutoff n_max (N_vib = n_max + 1).
    pub n_max: usize,
    /// Atomic decay rate Γ, angular, s⁻¹ (e.g. 2π × 10 MHz).
    pub gamma_hz: f64,
    pub rabi_over_gamma: f64,
    pub wavelength_m: f64,
    pub separation_over_lambda: f64,
    pub mass_kg: f64,
    /// Trap frequency ω_t, angular, s⁻¹.
    pub trap_freq_s: f64,
    pub delta_start: f64,
    pub delta_stop: f64,
    pub delta_step: f64,
    /// `fixed`, `averaged` or `full-quantum`.
    pub mode: String,
    pub quadrature_order: usize,
    pub output: String,
}

impl Default for ExperimentConfig {
    /// The 3.1 mm reference case: Γ = 2π·10 MHz, Ω = 10⁻⁴ Γ, d = 0.9 λ,
    /// M = 1.6605e-28 kg, ω_t = 10³ s⁻¹.
    fn default() -> Self {
        Self {
            geometry: "1d-waveguide".into(),
            n_atoms: 2,
            n_max: 4,
            gamma_hz: 2.0 * std::f64::consts::PI * 1.0e7,
            rabi_over_gamma: 1e-4,
            wavelength_m: 3.1e-3,
            separation_over_lambda: 0.9,
            mass_kg: 1.6605e-28,
            trap_freq_s: 1.0e3,
            delta_start: 0.0,
            delta_stop: 0.72,
            delta_step: 0.72 / 199.0,
            mode: "fixed".into(),
            quadrature_order: 15,
            output: "spectrum.csv".into(),
        }
    }
}

/// Config-file problem with position information.
#[derive(Debug)]
pub struct ConfigError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}, field `{}`: {}", self.line, self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    /// Parse the flat `key = value` format; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError {
                    line: line_no,
                    field: line.into(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            let bad = |msg: String| ConfigError { line: line_no, field: key.into(), message: msg };
            macro_rules! num {
                ($t:ty) => {
                    value.parse::<$t>().map_err(|e| bad(format!("{e}")))?
                };
            }
            match key {
                "geometry" => {
                    if value != "1d-waveguide" && value != "3d-free-space" {
                        return Err(bad("expected `1d-waveguide` or `3d-free-space`".into()));
                    }
                    cfg.geometry = value.into();
                }
                "n_atoms" => cfg.n_atoms = num!(usize),
                "n_max" => cfg.n_max = num!(usize),
                "gamma_hz" => cfg.gamma_hz = num!(f64),
                "rabi_over_gamma" => cfg.rabi_over_gamma = num!(f64),
                "wavelength_m" => cfg.wavelength_m = num!(f64),
                "separation_over_lambda" => cfg.separation_over_lambda = num!(f64),
                "mass_kg" => cfg.mass_kg = num!(f64),
                "trap_freq_s" => cfg.trap_freq_s = num!(f64),
                "delta_start" => cfg.delta_start = num!(f64),
                "delta_stop" => cfg.delta_stop = num!(f64),
                "delta_step" => cfg.delta_step = num!(f64),
                "mode" => {
                    if !["fixed", "averaged", "full-quantum"].contains(&value) {
                        return Err(bad("expected `fixed`, `averaged` or `full-quantum`".into()));
                    }
                    cfg.mode = value.into();
                }
                "quadrature_order" => cfg.quadrature_order = num!(usize),
                "output" => cfg.output = value.into(),
                other => {
                    return Err(ConfigError {
                        line: line_no,
                        field: other.into(),
                        message: "unknown key".into(),
                    })
                }
            }
        }
        if cfg.delta_step <= 0.0 || cfg.delta_stop < cfg.delta_start {
            return Err(ConfigError {
                line: 0,
                field: "delta_step".into(),
                message: "detuning grid must have positive step and stop >= start".into(),
            });
        }
        Ok(cfg)
    }

    /// Canonical `key = value` text; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "geometry = {}", self.geometry);
        let _ = writeln!(s, "n_atoms = {}", self.n_atoms);
        let _ = writeln!(s, "n_max = {}", self.n_max);
        let _ = writeln!(s, "gamma_hz = {:e}", self.gamma_hz);
        let _ = writeln!(s, "rabi_over_gamma = {:e}", self.rabi_over_gamma);
        let _ = writeln!(s, "wavelength_m = {:e}", self.wavelength_m);
        let _ = writeln!(s, "separation_over_lambda = {:e}", self.separation_over_lambda);
        let _ = writeln!(s, "mass_kg = {:e}", self.mass_kg);
        let _ = writeln!(s, "trap_freq_s = {:e}", self.trap_freq_s);
        let _ = writeln!(s, "delta_start = {:e}", self.delta_start);
        let _ = writeln!(s, "delta_stop = {:e}", self.delta_stop);
        let _ = writeln!(s, "delta_step = {:e}", self.delta_step);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "quadrature_order = {}", self.quadrature_order);
        let _ = writeln!(s, "output = {}", self.output);
        s
    }

    /// Dimensionless quantities derived from the SI inputs.
    pub fn derive(&self) -> DerivedParams {
        let k0 = 2.0 * std::f64::consts::PI / self.wavelength_m;
        let eta = k0 * (HBAR / (2.0 * self.mass_kg * self.trap_freq_s)).sqrt();
        let n_vib = self.n_max + 1;
        DerivedParams {
            eta,
            eta_sq: eta * eta,
            sigma_over_lambda: eta / (std::f64::consts::PI * 2.0f64.sqrt()),
            trap_freq_over_gamma: self.trap_freq_s / self.gamma_hz,
            separation_k0x: 2.0 * std::f64::consts::PI * self.separation_over_lambda,
            dim: (2usize * n_vib).pow(self.n_atoms as u32),
        }
    }

    /// Internal-unit model parameters at detuning `delta` (units of Γ).
    pub fn model_params(&self, delta: f64) -> ModelParams<f64> {
        let d = self.derive();
        let centers: Vec<f64> = (0..self.n_atoms)
            .map(|j| j as f64 * d.separation_k0x)
            .collect();
        ModelParams::waveguide_1d(
            self.rabi_over_gamma,
            delta,
            d.trap_freq_over_gamma,
            d.eta,
            &centers,
        )
    }

    pub fn detunings(&self) -> Vec<f64> {
        let n = ((self.delta_stop - self.delta_start) / self.delta_step + 1.5).floor() as usize;
        (0..n).map(|i| self.delta_start + i as f64 * self.delta_step).collect()
    }
}

/// Echo report of the derived dimensionless parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    pub eta: f64,
    pub eta_sq: f64,
    pub sigma_over_lambda: f64,
    pub trap_freq_over_gamma: f64,
    pub separation_k0x: f64,
    pub dim: usize,
}

impl DerivedParams {
    pub fn report(&self) -> String {
        format!(
            "eta = {:.6}\neta^2 = {:.6e}\nsigma/lambda = {:.6}\nomega_t/Gamma = {:.6e}\nk0 d = {:.6}\ndim = {}\n",
            self.eta, self.eta_sq, self.sigma_over_lambda, self.trap_freq_over_gamma,
            self.separation_k0x, self.dim
        )
    }
}

/// One curve to compute: how each detuning point is evaluated.
#[derive(Debug, Clone)]
pub enum SeriesSpec {
    /// Atoms pinned at the trap centers (coupled-dipole fast path).
    Fixed,
    /// Gauss-Hermite average over the ground-state position distribution.
    Averaged,
    /// Full master-equation steady state at the given cutoff; optional
    /// trap-frequency override in s⁻¹ with the mass rescaled to keep the
    /// spatial spread σ fixed (tagged wt1e5/wt1e6/... in that case).
    FullQuantum { n_max: usize, trap_freq_override_s: Option<f64> },
}

impl SeriesSpec {
    pub fn tag(&self) -> String {
        match self {
            SeriesSpec::Fixed => "fixed".into(),
            SeriesSpec::Averaged => "averaged".into(),
            SeriesSpec::FullQuantum { n_max, trap_freq_override_s: None } => format!("nmax{n_max}"),
            SeriesSpec::FullQuantum { trap_freq_override_s: Some(wt), .. } => {
                format!("wt{}", format_pow10(*wt))
            }
        }
    }
}

/// Compact power-of-ten tag: 1e5 -> "1e5".
fn format_pow10(x: f64) -> String {
    let exp = x.log10().round() as i32;
    if (x - 10f64.powi(exp)).abs() < 1e-6 * x {
        format!("1e{exp}")
    } else {
        format!("{x:.0e}")
    }
}

/// A full experiment: base config plus the list of series to sweep.
#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub config: ExperimentConfig,
    pub series: Vec<SeriesSpec>,
    pub label: String,
}

impl SweepPlan {
    /// Single-series plan straight from a parsed config file.
    pub fn from_config(config: ExperimentConfig) -> Self {
        let series = match config.mode.as_str() {
            "fixed" => SeriesSpec::Fixed,
            "averaged" => SeriesSpec::Averaged,
            _ => SeriesSpec::FullQuantum { n_max: config.n_max, trap_freq_override_s: None },
        };
        SweepPlan { label: format!("sweep ({})", config.mode), series: vec![series], config }
    }
}

/// One CSV row.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub delta: f64,
    pub transmission: f64,
    pub reflection: f64,
    pub series: String,
    pub flagged: bool,
}

/// Sweep output: rows in deterministic order plus the provenance header.
#[derive(Debug)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub header: String,
    pub any_flagged: bool,
}

/// Group rows into per-series spectra (the library exchange type).
pub fn spectra_of(rows: &[SweepRow], cfg: &ExperimentConfig) -> Vec<trapqed::Spectrum64> {
    let mut out: Vec<trapqed::Spectrum64> = Vec::new();
    for row in rows {
        if out.last().map(|s| s.series != row.series).unwrap_or(true) {
            out.push(trapqed::observables::Spectrum::new(
                cfg.model_params(cfg.delta_start),
                cfg.n_max,
                row.series.clone(),
            ));
        }
        out.last_mut()
            .expect("just pushed")
            .push(row.delta, row.transmission, row.reflection);
    }
    out
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = self.header.clone();
        out.push_str("delta_over_gamma,T,R,loss,series\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:.11e},{:.11e},{:.11e},{:.11e},{}",
                r.delta,
                r.transmission,
                r.reflection,
                1.0 - r.transmission - r.reflection,
                r.series
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }

    /// Rows of one series, in detuning order.
    pub fn series(&self, tag: &str) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.series == tag).collect()
    }
}

/// Evaluate one (series, detuning) point.
fn eval_point(cfg: &ExperimentConfig, spec: &SeriesSpec, delta: f64) -> trapqed::Result<SweepRow> {
    let tag = spec.tag();
    match spec {
        SeriesSpec::Fixed => {
            let params = cfg.model_params(delta);
            let zeros = vec![0.0; cfg.n_atoms];
            let (t, r) =
                fixed_position_observables(&params, &zeros, FixedPositionRoute::CoupledDipole)?;
            Ok(SweepRow { delta, transmission: t, reflection: r, series: tag, flagged: false })
        }
        SeriesSpec::Averaged => {
            let params = cfg.model_params(delta);
            let dist = PositionDistribution::new(&params, DistributionKind::VibrationalGround);
            let avg = average_observables(&params, &dist, cfg.quadrature_order)?;
            Ok(SweepRow {
                delta,
                transmission: avg.transmission,
                reflection: avg.reflection,
                series: tag,
                flagged: !avg.converged,
            })
        }
        SeriesSpec::FullQuantum { n_max, trap_freq_override_s } => {
            let mut c = cfg.clone();
            c.n_max = *n_max;
            if let Some(wt) = trap_freq_override_s {
                // rescale the mass to keep sigma = sqrt(hbar/(M w_t)) fixed
                c.mass_kg = cfg.mass_kg * cfg.trap_freq_s / wt;
                c.trap_freq_s = *wt;
            }
            let params = c.model_params(delta);
            let model = LindbladModel::build(params, c.n_max + 1, VibKernelMode::auto(c.n_max))?;
            let (rho, info) = steady_state_direct(&model)?;
            let (t, r) = transmission_reflection(&model, &rho)?;
            Ok(SweepRow {
                delta,
                transmission: t,
                reflection: r,
                series: tag,
                flagged: info.residual > 1e-10,
            })
        }
    }
}

/// Run every series of the plan over the detuning grid, parallel across
/// points, output assembled in deterministic (series, detuning) order.
pub fn run_sweep(plan: &SweepPlan) -> trapqed::Result<SweepResult> {
    let detunings = plan.config.detunings();
    let jobs: Vec<(&SeriesSpec, f64)> = plan
        .series
        .iter()
        .flat_map(|s| detunings.iter().map(move |&d| (s, d)))
        .collect();
    let mut rows: Vec<(usize, SweepRow)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, &(spec, delta))| eval_point(&plan.config, spec, delta).map(|r| (i, r)))
        .collect::<trapqed::Result<_>>()?;
    rows.sort_by_key(|(i, _)| *i);
    let rows: Vec<SweepRow> = rows.into_iter().map(|(_, r)| r).collect();
    let any_flagged = rows.iter().any(|r| r.flagged);
    // probability-range invariants before anything is written out
    for spectrum in spectra_of(&rows, &plan.config) {
        spectrum.check_ranges()?;
    }

    // provenance header: resolved config echo + derived parameters + hash
    let derived = plan.config.derive();
    let mut provenance = plan.config.serialize();
    let _ = writeln!(
        provenance,
        "series = {}",
        plan.series.iter().map(|s| s.tag()).collect::<Vec<_>>().join("+")
    );
    provenance.push_str(&derived.report());
    let mut hasher = Sha256::new();
    hasher.update(provenance.as_bytes());
    let digest = hasher.finalize();
    let hash_hex: String = digest.iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    });

    let mut header = String::new();
    let _ = writeln!(header, "# {}", plan.label);
    for line in provenance.lines() {
        let _ = writeln!(header, "# {line}");
    }
    let _ = writeln!(header, "# params_sha256 = {hash_hex}");
    Ok(SweepResult { rows, header, any_flagged })
}

/// Paper-parameter presets.
pub fn preset(name: &str) -> Option<SweepPlan> {
    let mut cfg = ExperimentConfig::default();
    match name {
        // 3.1 mm case, full detuning range: fixed-separation vs averaged
        "fig1" => Some(SweepPlan {
            config: cfg,
            series: vec![SeriesSpec::Fixed, SeriesSpec::Averaged],
            label: "fig1: lambda = 3.1 mm, d = 0.9 lambda, fixed vs ground-state averaged".into(),
        }),
        // 3.1 mm case, zoom on the transmission peak, with full-quantum points
        "fig2" => {
            cfg.delta_start = 0.32;
            cfg.delta_stop = 0.44;
            cfg.delta_step = 0.005;
            Some(SweepPlan {
                config: cfg,
                series: vec![
                    SeriesSpec::Fixed,
                    SeriesSpec::Averaged,
                    SeriesSpec::FullQuantum { n_max: 0, trap_freq_override_s: None },
                    SeriesSpec::FullQuantum { n_max: 4, trap_freq_override_s: None },
                ],
                label: "fig2: lambda = 3.1 mm zoom, restricted vs converged quantum".into(),
            })
        }
        // 2 mm case: larger spread, truncation ladder
        "fig3" => {
            cfg.wavelength_m = 2.0e-3;
            cfg.delta_start = 0.32;
            cfg.delta_stop = 0.44;
            cfg.delta_step = 0.005;
            Some(SweepPlan {
                config: cfg,
                series: vec![
                    SeriesSpec::Fixed,
                    SeriesSpec::Averaged,
                    SeriesSpec::FullQuantum { n_max: 0, trap_freq_override_s: None },
                    SeriesSpec::FullQuantum { n_max: 1, trap_freq_override_s: None },
                    SeriesSpec::FullQuantum { n_max: 2, trap_freq_override_s: None },
                ],
                label: "fig3: lambda = 2 mm, n_max ladder".into(),
            })
        }
        // 2 mm case: trap-frequency scan at fixed sigma (mass rescaled)
        "fig4" => {
            cfg.wavelength_m = 2.0e-3;
            cfg.delta_start = 0.32;
            cfg.delta_stop = 0.44;
            cfg.delta_step = 0.005;
            Some(SweepPlan {
                config: cfg,
                series: vec![
                    SeriesSpec::Averaged,
                    SeriesSpec::FullQuantum { n_max: 4, trap_freq_override_s: Some(1.0e5) },
                    SeriesSpec::FullQuantum { n_max: 4, trap_freq_override_s: Some(1.0e6) },
                    SeriesSpec::FullQuantum { n_max: 4, trap_freq_override_s: Some(1.0e7) },
                ],
                label: "fig4: lambda = 2 mm, omega_t scan at fixed sigma".into(),
            })
        }
        // d = 0.95 lambda, omega_t = 4e3: longer-lived subradiance
        "d095" => {
            cfg.separation_over_lambda = 0.95;
            cfg.trap_freq_s = 4.0e3;
            cfg.delta_start = 0.10;
            cfg.delta_stop = 0.30;
            cfg.delta_step = 0.005;
            Some(SweepPlan {
                config: cfg,
                series: vec![
                    SeriesSpec::Averaged,
                    SeriesSpec::FullQuantum { n_max: 0, trap_freq_override_s: None },
                ],
                label: "d095: d = 0.95 lambda, omega_t = 4e3 /s".into(),
            })
        }
        _ => None,
    }
}

/// Quick analytic self-checks; returns (name, pass) pairs.
pub fn selftest() -> Vec<(String, bool)> {
    let mut results = Vec::new();

    // single-atom line shape against the closed form
    let mut worst = 0.0f64;
    for delta in [0.0, 0.25, 0.5, 1.0] {
        let p = ModelParams::<f64>::waveguide_1d(1e-4, delta, 1e-4, 0.0, &[0.0]);
        let m = LindbladModel::build(p, 1, VibKernelMode::Unitary).unwrap();
        let (rho, _) = steady_state_direct(&m).unwrap();
        let (t, r) = transmission_reflection(&m, &rho).unwrap();
        let ta = 4.0 * delta * delta / (4.0 * delta * delta + 1.0);
        worst = worst.max((t - ta).abs()).max((r - (1.0 - ta)).abs());
    }
    results.push((format!("single-atom line shape (worst {worst:.2e})"), worst < 1e-6));

    // coupled dipole vs pinned master equation
    let mut worst = 0.0f64;
    for delta in [0.1, 0.36, 0.6] {
        let p = ModelParams::<f64>::waveguide_1d(
            1e-5,
            delta,
            1.6e-5,
            0.0,
            &[0.0, 0.9 * 2.0 * std::f64::consts::PI],
        );
        let (t1, r1) =
            fixed_position_observables(&p, &[0.0, 0.0], FixedPositionRoute::CoupledDipole)
                .unwrap();
        let (t2, r2) =
            fixed_position_observables(&p, &[0.0, 0.0], FixedPositionRoute::PinnedMasterEquation)
                .unwrap();
        worst = worst.max((t1 - t2).abs()).max((r1 - r2).abs());
    }
    results.push((format!("coupled-dipole vs master equation (worst {worst:.2e})"), worst < 1e-8));

    // DVR ground-state phase expectation
    let eta = 0.056f64;
    let g = trapqed::dvr::DvrGrid::<f64>::harmonic(12, eta).unwrap();
    let m = g.matrix_elements(0.0, |x| trapqed::scalar::c(0.0, x).exp());
    let err = (m[(0, 0)].re - (-eta * eta / 2.0).exp()).abs();
    results.push((format!("DVR Gaussian phase factor (err {err:.2e})"), err < 1e-10));

    // sudden-approximation diagnostics on the reference case
    let p = ExperimentConfig::default().model_params(0.36);
    let rep = sudden_validity_check(&p).unwrap();
    results.push((
        format!("sudden validity ratio {:.2e} for the reference case", rep.lifetime_over_period),
        rep.sudden_ok,
    ));

    results
}
