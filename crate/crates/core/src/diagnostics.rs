//! Energy bookkeeping, a-priori bounds and norm time series.
//!
//! Every quadratic form reuses the assembled unit matrices, so the discrete
//! energy balance of a Crank–Nicolson trajectory closes to rounding.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{integrate, AssembledSystem};
use crate::forcing::{ForcingSpec, InitialData};
use crate::geometry::GeometryError;
use crate::integrator::{derivative_initial_state, integrate as run, IntegratorError, Trajectory};
use crate::sparse::{dot, CsrMatrix};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("unknown norm `{0}`")]
    UnknownNorm(String),
    #[error("initial data must be homogeneous for this bound")]
    NotHomogeneous,
    #[error("body force must be the gradient of a potential for this bound")]
    NotPotential,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("slope fit needs at least two positive points, got {0}")]
    Slope(usize),
}

/// How the time maxima on the left of the energy estimate are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimateForm {
    /// each of the five energies maximized separately, as the estimate is stated
    #[default]
    SumOfMaxima,
    /// running maximum of stored energy plus dissipation, which is what the
    /// energy balance controls
    MaxOfSum,
}

/// Per-frame energy terms; dissipations and work are cumulative from t = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub solid_shear: Vec<f64>,
    pub solid_compress: Vec<f64>,
    pub fluid_compress: Vec<f64>,
    pub thermal: Vec<f64>,
    pub diss_nu: Vec<f64>,
    pub diss_mu: Vec<f64>,
    pub diss_kappa: Vec<f64>,
    pub work: Vec<f64>,
    pub residual: Vec<f64>,
}

pub const ENERGY_COLUMNS: [&str; 11] = [
    "t",
    "kinetic",
    "solid_shear",
    "solid_compress",
    "fluid_compress",
    "thermal",
    "diss_nu",
    "diss_mu",
    "diss_kappa",
    "work",
    "residual",
];

impl EnergyReport {
    pub fn n_frames(&self) -> usize {
        self.times.len()
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.kinetic[k] + self.solid_shear[k] + self.solid_compress[k] + self.fluid_compress[k] + self.thermal[k]
    }

    pub fn dissipation(&self, k: usize) -> f64 {
        self.diss_nu[k] + self.diss_mu[k] + self.diss_kappa[k]
    }

    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    /// Values in [`ENERGY_COLUMNS`] order.
    pub fn row(&self, k: usize) -> [f64; 11] {
        [
            self.times[k],
            self.kinetic[k],
            self.solid_shear[k],
            self.solid_compress[k],
            self.fluid_compress[k],
            self.thermal[k],
            self.diss_nu[k],
            self.diss_mu[k],
            self.diss_kappa[k],
            self.work[k],
            self.residual[k],
        ]
    }

    /// Left side of the energy estimate at each frame in the chosen form.
    pub fn estimate_lhs_as(&self, form: EstimateForm) -> Vec<f64> {
        match form {
            EstimateForm::SumOfMaxima => self.estimate_lhs(),
            EstimateForm::MaxOfSum => {
                let mut peak = 0.0f64;
                (0..self.n_frames())
                    .map(|k| {
                        peak = peak.max(self.energy(k) + self.dissipation(k));
                        peak
                    })
                    .collect()
            }
        }
    }

    /// Left side of the energy estimate at each frame: the running maximum of
    /// each stored energy plus the cumulative dissipations.
    pub fn estimate_lhs(&self) -> Vec<f64> {
        let mut peaks = [0.0f64; 5];
        (0..self.n_frames())
            .map(|k| {
                let terms = [
                    self.kinetic[k],
                    self.thermal[k],
                    self.solid_compress[k],
                    self.fluid_compress[k],
                    self.solid_shear[k],
                ];
                for (p, v) in peaks.iter_mut().zip(terms) {
                    *p = p.max(v);
                }
                peaks.iter().sum::<f64>() + self.dissipation(k)
            })
            .collect()
    }
}

/// Energy terms of a trajectory and the defect of the discrete balance
/// E(τ) + D(τ) = E(0) + W(τ).
pub fn energy_audit(traj: &Trajectory, sys: &AssembledSystem, forcing: &ForcingSpec) -> EnergyReport {
    let d = &sys.params;
    let p = &sys.pieces;
    let dt = traj.dt;
    let frames: Vec<[f64; 5]> = traj
        .states
        .par_iter()
        .map(|s| {
            [
                0.5 * sys.a.quad_form(&s.c),
                0.5 * d.alpha_lambda * p.strain_s.quad_form(&s.a),
                0.5 * d.alpha_eta * p.div_s.quad_form(&s.a),
                0.5 * d.alpha_p * p.div_f.quad_form(&s.a),
                0.5 * sys.b.quad_form(&s.b),
            ]
        })
        .collect();
    let steps: Vec<[f64; 4]> = traj
        .states
        .par_windows(2)
        .map(|w| {
            let (s0, s1) = (&w[0], &w[1]);
            let c: Vec<f64> = s0.c.iter().zip(&s1.c).map(|(x, y)| 0.5 * (x + y)).collect();
            let b: Vec<f64> = s0.b.iter().zip(&s1.b).map(|(x, y)| 0.5 * (x + y)).collect();
            let work = if forcing.is_zero() {
                0.0
            } else {
                let (f, psi) = sys.load_vectors(forcing, s0.t + 0.5 * dt);
                dot(&c, &f) + dot(&b, &psi)
            };
            [
                dt * d.alpha_nu * p.div_f.quad_form(&c),
                dt * d.alpha_mu * p.strain_f.quad_form(&c),
                dt * sys.b1.quad_form(&b),
                dt * work,
            ]
        })
        .collect();
    let n = frames.len();
    let mut r = EnergyReport {
        times: traj.times(),
        kinetic: frames.iter().map(|f| f[0]).collect(),
        solid_shear: frames.iter().map(|f| f[1]).collect(),
        solid_compress: frames.iter().map(|f| f[2]).collect(),
        fluid_compress: frames.iter().map(|f| f[3]).collect(),
        thermal: frames.iter().map(|f| f[4]).collect(),
        diss_nu: Vec::with_capacity(n),
        diss_mu: Vec::with_capacity(n),
        diss_kappa: Vec::with_capacity(n),
        work: Vec::with_capacity(n),
        residual: Vec::with_capacity(n),
    };
    let mut acc = [0.0f64; 4];
    for k in 0..n {
        if k > 0 {
            for (a, s) in acc.iter_mut().zip(&steps[k - 1]) {
                *a += s;
            }
        }
        r.diss_nu.push(acc[0]);
        r.diss_mu.push(acc[1]);
        r.diss_kappa.push(acc[2]);
        r.work.push(acc[3]);
    }
    let e0 = r.energy(0);
    for k in 0..n {
        let (e, dk, w) = (r.energy(k), r.dissipation(k), r.work[k]);
        let scale = e + dk + e0 + w.abs();
        let defect = e + dk - e0 - w;
        r.residual.push(if scale > 0.0 { defect.abs() / scale } else { 0.0 });
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
    pub margin: f64,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        let tol = 1e-8 * lhs.abs().max(rhs.abs()).max(1.0);
        BoundCheck {
            name: name.into(),
            lhs,
            rhs,
            satisfied: margin >= -tol && lhs.is_finite() && rhs.is_finite(),
            margin,
        }
    }

    /// margin scaled by the larger side
    pub fn relative_margin(&self) -> f64 {
        self.margin / self.lhs.abs().max(self.rhs.abs()).max(f64::MIN_POSITIVE)
    }
}

impl fmt::Display for BoundCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} lhs {:>12.5e}  rhs {:>12.5e}  margin {:>12.5e}  {}",
            self.name,
            self.lhs,
            self.rhs,
            self.margin,
            if self.satisfied { "ok" } else { "VIOLATED" }
        )
    }
}

/// The violated check with the most negative relative margin, else the
/// tightest satisfied one.
pub fn worst(checks: &[BoundCheck]) -> Option<&BoundCheck> {
    checks.iter().min_by(|a, b| {
        (a.satisfied, a.relative_margin())
            .partial_cmp(&(b.satisfied, b.relative_margin()))
            .unwrap_or(std::cmp::Ordering::Equal)
    })
}

/// g(t) = α_F²/(2α_τ)·‖√ρ̄ F(t)‖² + 1/(2·min c_p)·‖Ψ(t)‖².
pub fn forcing_density(sys: &AssembledSystem, forcing: &ForcingSpec, t: f64) -> f64 {
    if forcing.is_zero() {
        return 0.0;
    }
    let d = &sys.params;
    let g = sys.geometry();
    let dim = g.dim();
    let order = sys.options.load_order;
    let rho = &sys.coeffs.rho_bar;
    let f2 = if forcing.body.is_zero() {
        0.0
    } else {
        integrate(g, order, |cell, x| {
            let f = forcing.body.force(dim, x, t);
            rho[cell] * f.iter().map(|v| v * v).sum::<f64>()
        })
    };
    let psi2 = if forcing.heat.is_zero() {
        0.0
    } else {
        integrate(g, order, |_, x| forcing.heat.value(dim, x, t).powi(2))
    };
    d.alpha_f * d.alpha_f / (2.0 * d.alpha_tau) * f2 + psi2 / (2.0 * d.min_heat_capacity())
}

/// Cumulative ∫₀^{t_k} f dt by Simpson's rule on each step.
pub fn cumulative_simpson(times: &[f64], f: impl Fn(f64) -> f64 + Sync) -> Vec<f64> {
    let pieces: Vec<f64> = times
        .par_windows(2)
        .map(|w| {
            let h = w[1] - w[0];
            h / 6.0 * (f(w[0]) + 4.0 * f(0.5 * (w[0] + w[1])) + f(w[1]))
        })
        .collect();
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for p in pieces {
        acc += p;
        out.push(acc);
    }
    out
}

/// ∫₀^{t_k} G(t)·e^{t_k − t} dt for G linear between the given samples.
pub fn gronwall_integral(times: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..times.len() {
        let h = times[k] - times[k - 1];
        let e = h.exp_m1();
        acc = acc * h.exp() + g[k - 1] * e + (g[k] - g[k - 1]) / h * (e - h);
        out.push(acc);
    }
    out
}

/// C(τ_k) = G(τ) + ∫₀^τ G e^{τ−t} dt + (e^τ+1)/2·kinetic_data + e^τ/2·elastic_data,
/// where G is the cumulative forcing density.
pub fn energy_constant(
    times: &[f64],
    cumulative_forcing: &[f64],
    kinetic_data: f64,
    elastic_data: f64,
) -> Vec<f64> {
    let gr = gronwall_integral(times, cumulative_forcing);
    times
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let e = tau.exp();
            cumulative_forcing[k] + gr[k] + 0.5 * (e + 1.0) * kinetic_data + 0.5 * e * elastic_data
        })
        .collect()
}

/// The energy constant C_en at every frame of an audited trajectory.
pub fn energy_constant_series(report: &EnergyReport, sys: &AssembledSystem, forcing: &ForcingSpec) -> Vec<f64> {
    let g = cumulative_simpson(&report.times, |t| forcing_density(sys, forcing, t));
    // the initial terms are those of the projected data the solver starts from
    let kinetic = 2.0 * (report.kinetic[0] + report.thermal[0]);
    let elastic = 2.0 * (report.solid_compress[0] + report.fluid_compress[0] + report.solid_shear[0]);
    energy_constant(&report.times, &g, kinetic, elastic)
}

/// Energy estimate at every stored time.
pub fn energy_estimate_series(report: &EnergyReport, sys: &AssembledSystem, forcing: &ForcingSpec) -> Vec<BoundCheck> {
    energy_estimate_series_as(report, sys, forcing, EstimateForm::SumOfMaxima)
}

pub fn energy_estimate_series_as(
    report: &EnergyReport,
    sys: &AssembledSystem,
    forcing: &ForcingSpec,
    form: EstimateForm,
) -> Vec<BoundCheck> {
    let rhs = energy_constant_series(report, sys, forcing);
    report
        .estimate_lhs_as(form)
        .into_iter()
        .zip(rhs)
        .zip(&report.times)
        .map(|((l, r), t)| BoundCheck::new(format!("energy estimate t={t:.4}"), l, r))
        .collect()
}

/// Energy estimate, reported at its tightest stored time.
pub fn check_energy_estimate(report: &EnergyReport, sys: &AssembledSystem, forcing: &ForcingSpec) -> BoundCheck {
    let checks = energy_estimate_series(report, sys, forcing);
    worst(&checks).cloned().expect("report has frames")
}

/// Trajectory of (∂w/∂t, ∂²w/∂t², ∂θ/∂t) for homogeneous data, driven by the
/// time-differentiated forcing.
pub fn derivative_trajectory(
    sys: &AssembledSystem,
    forcing: &ForcingSpec,
    dt: f64,
    t_final: f64,
) -> Result<Trajectory, DiagnosticsError> {
    let init = derivative_initial_state(sys, forcing).map_err(IntegratorError::from)?;
    Ok(run(&init, sys, &forcing.time_derivative(), dt, t_final)?)
}

/// Bound on the time-differentiated solution, at every stored time.
pub fn time_derivative_estimate_series(
    derivative_report: &EnergyReport,
    sys: &AssembledSystem,
    forcing: &ForcingSpec,
    initial: &InitialData,
) -> Result<Vec<BoundCheck>, DiagnosticsError> {
    if !initial.is_homogeneous() {
        return Err(DiagnosticsError::NotHomogeneous);
    }
    let rate = forcing.time_derivative();
    let times = &derivative_report.times;
    let g = cumulative_simpson(times, |t| forcing_density(sys, &rate, t));
    let start = 2.0 * forcing_density(sys, forcing, 0.0);
    let rhs = energy_constant(times, &g, start, 0.0);
    Ok(derivative_report
        .estimate_lhs()
        .into_iter()
        .zip(rhs)
        .zip(times)
        .map(|((l, r), t)| BoundCheck::new(format!("rate estimate t={t:.4}"), l, r))
        .collect())
}

pub fn check_time_derivative_estimate(
    derivative_report: &EnergyReport,
    sys: &AssembledSystem,
    forcing: &ForcingSpec,
    initial: &InitialData,
) -> Result<BoundCheck, DiagnosticsError> {
    let checks = time_derivative_estimate_series(derivative_report, sys, forcing, initial)?;
    Ok(worst(&checks).cloned().expect("report has frames"))
}

/// max_{t≤τ} ‖(1−χ̄)D(w)‖² ≤ C_en(τ)/α_λ at every stored τ; the tightest is returned.
pub fn check_deformation_bound(report: &EnergyReport, sys: &AssembledSystem, forcing: &ForcingSpec) -> BoundCheck {
    let al = sys.params.alpha_lambda;
    let c_en = energy_constant_series(report, sys, forcing);
    let mut peak = 0.0f64;
    let checks: Vec<BoundCheck> = report
        .solid_shear
        .iter()
        .zip(&c_en)
        .zip(&report.times)
        .map(|((s, c), t)| {
            peak = peak.max(2.0 * s / al);
            BoundCheck::new(format!("deformation bound t={t:.4}"), peak, c / al)
        })
        .collect();
    worst(&checks).cloned().expect("report has frames")
}

/// Left side of the uniform-in-α_λ solidification bound, from an audit at the final time.
pub fn solidification_lhs(report: &EnergyReport, sys: &AssembledSystem) -> f64 {
    let al = sys.params.alpha_lambda;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let last = report.n_frames() - 1;
    al * (max(&report.kinetic)
        + report.diss_nu[last]
        + report.diss_mu[last]
        + 0.5 * (max(&report.solid_compress) + max(&report.fluid_compress) + max(&report.solid_shear)))
}

/// ‖Φ‖²_{W¹₂(Q)} + ‖∂t∇Φ‖²_Q + ‖Ψ‖²_Q + ‖∂tΨ‖²_Q.
pub fn solidification_data_norm(sys: &AssembledSystem, forcing: &ForcingSpec, times: &[f64]) -> Result<f64, DiagnosticsError> {
    if !forcing.body.is_potential() {
        return Err(DiagnosticsError::NotPotential);
    }
    let g = sys.geometry();
    let dim = g.dim();
    let order = sys.options.load_order;
    let sq = |v: [f64; 3]| v.iter().map(|x| x * x).sum::<f64>();
    let density = |t: f64| {
        let b = &forcing.body;
        let h = &forcing.heat;
        integrate(g, order, |_, x| {
            let phi = b.potential(dim, x, t).unwrap_or(0.0);
            let phi_t = b.potential_rate(dim, x, t).unwrap_or(0.0);
            phi * phi + sq(b.force(dim, x, t)) + phi_t * phi_t + sq(b.force_rate(dim, x, t)) + h.value(dim, x, t).powi(2) + h.rate(dim, x, t).powi(2)
        })
    };
    Ok(*cumulative_simpson(times, density).last().unwrap_or(&0.0))
}

/// Rejects setups outside the hypotheses of the solidification bound.
pub fn require_solidification_setting(
    sys: &AssembledSystem,
    forcing: &ForcingSpec,
    initial: &InitialData,
) -> Result<(), DiagnosticsError> {
    sys.geometry().require_solid_anchored()?;
    if !forcing.body.is_potential() {
        return Err(DiagnosticsError::NotPotential);
    }
    if !initial.is_homogeneous() {
        return Err(DiagnosticsError::NotHomogeneous);
    }
    Ok(())
}

/// One point of an α sweep for the solidification bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolidificationPoint {
    pub alpha_lambda: f64,
    pub alpha_eta: f64,
    pub alpha_p: f64,
    pub lhs: f64,
    pub data_norm: f64,
}

impl SolidificationPoint {
    pub fn weight(&self) -> f64 {
        1.0 + self.alpha_lambda / self.alpha_eta + self.alpha_lambda / self.alpha_p
    }
}

/// Measures C_sol at the first point and checks every point against
/// `stability`·C_sol·weight·data. Returns (C_sol, checks).
pub fn check_solidification_bounds(points: &[SolidificationPoint], stability: f64) -> (f64, Vec<BoundCheck>) {
    let Some(first) = points.first() else {
        return (0.0, Vec::new());
    };
    let denom = first.weight() * first.data_norm;
    let c_sol = if denom > 0.0 { first.lhs / denom } else { 0.0 };
    let checks = points
        .iter()
        .map(|p| {
            BoundCheck::new(
                format!("solidification α_λ={:.0e}", p.alpha_lambda),
                p.lhs,
                stability * c_sol * p.weight() * p.data_norm,
            )
        })
        .collect();
    (c_sol, checks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormKind {
    /// ‖χ̄ div w‖
    FluidDiv,
    /// ‖(1−χ̄) div w‖
    SolidDiv,
    /// ‖(1−χ̄) D(w)‖
    SolidStrain,
    /// ‖(1−χ̄) w‖
    SolidDisplacement,
    Theta,
    GradTheta,
    Displacement,
    /// W¹₂ norm of w
    DisplacementH1,
}

impl NormKind {
    pub const ALL: [NormKind; 8] = [
        NormKind::FluidDiv,
        NormKind::SolidDiv,
        NormKind::SolidStrain,
        NormKind::SolidDisplacement,
        NormKind::Theta,
        NormKind::GradTheta,
        NormKind::Displacement,
        NormKind::DisplacementH1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormKind::FluidDiv => "fluid_div",
            NormKind::SolidDiv => "solid_div",
            NormKind::SolidStrain => "solid_strain",
            NormKind::SolidDisplacement => "solid_w",
            NormKind::Theta => "theta",
            NormKind::GradTheta => "grad_theta",
            NormKind::Displacement => "w",
            NormKind::DisplacementH1 => "w_h1",
        }
    }

    /// Gram matrix of the squared norm together with whether it acts on θ.
    pub fn matrix(self, sys: &AssembledSystem) -> (CsrMatrix, bool) {
        let p = &sys.pieces;
        match self {
            NormKind::FluidDiv => (p.div_f.clone(), false),
            NormKind::SolidDiv => (p.div_s.clone(), false),
            NormKind::SolidStrain => (p.strain_s.clone(), false),
            NormKind::SolidDisplacement => (p.mass_s.clone(), false),
            NormKind::Theta => (CsrMatrix::combine(&[(1.0, &p.tmass_f), (1.0, &p.tmass_s)]), true),
            NormKind::GradTheta => (CsrMatrix::combine(&[(1.0, &p.tgrad_f), (1.0, &p.tgrad_s)]), true),
            NormKind::Displacement => (CsrMatrix::combine(&[(1.0, &p.mass_f), (1.0, &p.mass_s)]), false),
            NormKind::DisplacementH1 => (
                CsrMatrix::combine(&[(1.0, &p.mass_f), (1.0, &p.mass_s), (1.0, &p.grad_f), (1.0, &p.grad_s)]),
                false,
            ),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormKind {
    type Err = DiagnosticsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NormKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DiagnosticsError::UnknownNorm(s.to_string()))
    }
}

/// The named norm at every frame.
pub fn norm_series(traj: &Trajectory, sys: &AssembledSystem, which: NormKind) -> Vec<f64> {
    let (m, on_theta) = which.matrix(sys);
    traj.states
        .par_iter()
        .map(|s| {
            let v = if on_theta { &s.b } else { &s.a };
            m.quad_form(v).max(0.0).sqrt()
        })
        .collect()
}

/// Σ_k dt·‖(v_k + v_{k+1})/2‖²_M, the midpoint-rule L²(0,T) norm in the M inner product.
pub fn space_time_norm_sq(frames: &[&[f64]], m: &CsrMatrix, dt: f64) -> f64 {
    frames
        .windows(2)
        .map(|w| {
            let mid: Vec<f64> = w[0].iter().zip(w[1]).map(|(a, b)| 0.5 * (a + b)).collect();
            dt * m.quad_form(&mid)
        })
        .sum()
}

/// Least-squares slope of ln y against ln x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64, DiagnosticsError> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 || pts.len() != x.len().min(y.len()) {
        return Err(DiagnosticsError::Slope(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
