//! Parameter sweeps toward the incompressible and rigid-solid limits, and a
//! direct solver for the decoupled quasi-static limit model.
//!
//! Every point of a sweep shares mesh, basis and time grid, so solutions at
//! different α are directly comparable coefficient vectors.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::{build_system, solid_dofs, AssembledSystem};
use crate::diagnostics::{
    energy_audit, energy_constant_series, loglog_slope, norm_series, space_time_norm_sq, BoundCheck,
    DiagnosticsError, NormKind,
};
use crate::forcing::ForcingSpec;
use crate::geometry::{GeometryError, MediumGeometry};
use crate::integrator::{integrate, step_count, IntegratorError, State, Trajectory};
use crate::linalg::{LdlFactor, LinearSolve, SolverError};
use crate::params::{validate, DimensionlessParams, ParamError};
use crate::pressures::{self, PressureError};
use crate::quadrature::{shape, CellRule};
use crate::sparse::{max_abs, CsrMatrix};

#[derive(Debug, Error)]
pub enum LimitError {
    #[error("invalid sweep plan: {0}")]
    Plan(String),
    #[error("{0}")]
    WrongMode(String),
    #[error("unknown sweep mode `{0}`")]
    UnknownMode(String),
    #[error("elastic limit system is singular: {0}")]
    Singular(SolverError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Pressure(#[from] PressureError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// Which coefficients grow along the ladder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepMode {
    /// α_η = α
    IncompSolid,
    /// α_p = α
    IncompFluid,
    /// α_p = α_η = α
    IncompBoth,
    /// α_λ = α
    Solidify,
    /// α_λ = α, α_p = α_p⁰·α, α_η = α_η⁰·α
    JointSolidify,
}

impl SweepMode {
    pub const ALL: [SweepMode; 5] = [
        SweepMode::IncompSolid,
        SweepMode::IncompFluid,
        SweepMode::IncompBoth,
        SweepMode::Solidify,
        SweepMode::JointSolidify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepMode::IncompSolid => "incomp_solid",
            SweepMode::IncompFluid => "incomp_fluid",
            SweepMode::IncompBoth => "incomp_both",
            SweepMode::Solidify => "solidify",
            SweepMode::JointSolidify => "joint_solidify",
        }
    }

    fn needs_anchored_solid(self) -> bool {
        matches!(self, SweepMode::Solidify | SweepMode::JointSolidify)
    }

    /// Constraint norms the mode drives to zero.
    pub fn decaying_norms(self) -> &'static [NormKind] {
        match self {
            SweepMode::IncompSolid => &[NormKind::SolidDiv],
            SweepMode::IncompFluid => &[NormKind::FluidDiv],
            SweepMode::IncompBoth => &[NormKind::FluidDiv, NormKind::SolidDiv],
            SweepMode::Solidify | SweepMode::JointSolidify => &[NormKind::SolidStrain],
        }
    }
}

impl fmt::Display for SweepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepMode {
    type Err = LimitError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_lowercase();
        SweepMode::ALL
            .into_iter()
            .find(|m| m.name().replace('_', "") == key)
            .ok_or_else(|| LimitError::UnknownMode(s.to_string()))
    }
}

/// How the additive constant of the limit fluid pressure is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gauge {
    /// p = −α_p⁰ div U with U solving the joint fluid/solid elastic problem;
    /// this is the limit the solid/fluid model actually approaches.
    #[default]
    VolumeBalanced,
    /// p = −α_θf θ + α_F ρ_f Φ exactly, no additive constant.
    Literal,
}

impl FromStr for Gauge {
    type Err = LimitError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "volume_balanced" | "volume-balanced" => Ok(Gauge::VolumeBalanced),
            "literal" => Ok(Gauge::Literal),
            _ => Err(LimitError::Plan(format!("unknown gauge `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub mode: SweepMode,
    /// growing coefficient values α; ε = 1/α
    pub ladder: Vec<f64>,
    /// coefficients that stay fixed; final_time is the horizon
    pub base: DimensionlessParams,
    pub alpha_p0: f64,
    pub alpha_eta0: f64,
    pub geometry: MediumGeometry,
    pub forcing: ForcingSpec,
    pub dt: f64,
    pub gauge: Gauge,
}

impl SweepPlan {
    pub const MIN_POINTS: usize = 4;

    pub fn default_ladder() -> Vec<f64> {
        vec![1e2, 1e3, 1e4, 1e5]
    }

    pub fn new(mode: SweepMode, geometry: MediumGeometry, base: DimensionlessParams, forcing: ForcingSpec, dt: f64) -> Self {
        SweepPlan {
            mode,
            ladder: Self::default_ladder(),
            base,
            alpha_p0: 1.0,
            alpha_eta0: 1.0,
            geometry,
            forcing,
            dt,
            gauge: Gauge::default(),
        }
    }

    /// Coefficients at ladder value α.
    pub fn params_at(&self, alpha: f64) -> DimensionlessParams {
        let mut d = self.base;
        match self.mode {
            SweepMode::IncompSolid => d.alpha_eta = alpha,
            SweepMode::IncompFluid => d.alpha_p = alpha,
            SweepMode::IncompBoth => {
                d.alpha_p = alpha;
                d.alpha_eta = alpha;
            }
            SweepMode::Solidify => d.alpha_lambda = alpha,
            SweepMode::JointSolidify => {
                d.alpha_lambda = alpha;
                d.alpha_p = self.alpha_p0 * alpha;
                d.alpha_eta = self.alpha_eta0 * alpha;
            }
        }
        d
    }

    pub fn validate(&self) -> Result<(), LimitError> {
        let n = self.ladder.len();
        if n < Self::MIN_POINTS {
            return Err(LimitError::Plan(format!("ladder needs at least {} points, got {n}", Self::MIN_POINTS)));
        }
        if self.ladder.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(LimitError::Plan("ladder values must be positive and finite".into()));
        }
        let ratio = self.ladder[1] / self.ladder[0];
        if ratio <= 1.0 {
            return Err(LimitError::Plan("ladder must be increasing".into()));
        }
        for w in self.ladder.windows(2) {
            if ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-9 {
                return Err(LimitError::Plan("ladder must be geometric".into()));
            }
        }
        validate(&self.base).into_result()?;
        step_count(self.base.final_time, self.dt)?;
        if self.dt <= 0.0 {
            return Err(LimitError::Plan("dt must be positive".into()));
        }
        if self.mode.needs_anchored_solid() {
            self.geometry.require_solid_anchored()?;
        }
        if self.mode == SweepMode::JointSolidify {
            if !self.forcing.body.is_potential() {
                return Err(DiagnosticsError::NotPotential.into());
            }
            if !(self.alpha_p0 > 0.0 && self.alpha_eta0 > 0.0 && self.alpha_p0.is_finite() && self.alpha_eta0.is_finite()) {
                return Err(LimitError::Plan("α_p⁰ and α_η⁰ must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Everything measured at one ladder point. Gaps compare with the previous
/// point; C2 errors exist only for the joint solidification mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPoint {
    pub alpha: f64,
    pub epsilon: f64,
    pub alpha_p: f64,
    pub alpha_eta: f64,
    pub alpha_lambda: f64,
    /// max_t of the squared constraint norms
    pub max_fluid_div_sq: f64,
    pub max_solid_div_sq: f64,
    pub max_solid_strain_sq: f64,
    pub max_solid_w_sq: f64,
    pub max_w_sq: f64,
    /// ‖q − p‖ in L²(Q)
    pub q_minus_p: f64,
    pub c_en_final: f64,
    /// max_t‖χ̄ div w‖² ≤ 2C_en(T)/α_p
    pub fluid_div_bound: BoundCheck,
    /// max_t‖(1−χ̄) div w‖² ≤ 2C_en(T)/α_η
    pub solid_div_bound: BoundCheck,
    pub gap_w: Option<f64>,
    /// gap of (1−χ̄)α_λ w
    pub gap_u: Option<f64>,
    pub gap_theta: Option<f64>,
    pub gap_p: Option<f64>,
    pub gap_pi: Option<f64>,
    pub c2_u: Option<f64>,
    pub c2_theta: Option<f64>,
    pub c2_p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitReport {
    pub mode: SweepMode,
    pub points: Vec<LimitPoint>,
}

pub const SWEEP_COLUMNS: [&str; 22] = [
    "mode",
    "epsilon",
    "alpha_p",
    "alpha_eta",
    "alpha_lambda",
    "max_fluid_div_sq",
    "max_solid_div_sq",
    "max_solid_strain_sq",
    "max_solid_w_sq",
    "max_w_sq",
    "q_minus_p",
    "c_en_final",
    "fluid_div_bound",
    "solid_div_bound",
    "gap_w",
    "gap_u",
    "gap_theta",
    "gap_p",
    "gap_pi",
    "c2_u",
    "c2_theta",
    "c2_p",
];

impl LimitReport {
    /// Values of one CSV row after the mode column; None where undefined.
    pub fn row(&self, i: usize) -> Vec<Option<f64>> {
        let p = &self.points[i];
        vec![
            Some(p.epsilon),
            Some(p.alpha_p),
            Some(p.alpha_eta),
            Some(p.alpha_lambda),
            Some(p.max_fluid_div_sq),
            Some(p.max_solid_div_sq),
            Some(p.max_solid_strain_sq),
            Some(p.max_solid_w_sq),
            Some(p.max_w_sq),
            Some(p.q_minus_p),
            Some(p.c_en_final),
            Some(p.fluid_div_bound.rhs),
            Some(p.solid_div_bound.rhs),
            p.gap_w,
            p.gap_u,
            p.gap_theta,
            p.gap_p,
            p.gap_pi,
            p.c2_u,
            p.c2_theta,
            p.c2_p,
        ]
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.alpha).collect()
    }

    /// max_t of a squared constraint norm at every point.
    pub fn series(&self, kind: NormKind) -> Result<Vec<f64>, LimitError> {
        let pick = |p: &LimitPoint| match kind {
            NormKind::FluidDiv => Some(p.max_fluid_div_sq),
            NormKind::SolidDiv => Some(p.max_solid_div_sq),
            NormKind::SolidStrain => Some(p.max_solid_strain_sq),
            NormKind::SolidDisplacement => Some(p.max_solid_w_sq),
            NormKind::Displacement => Some(p.max_w_sq),
            _ => None,
        };
        self.points
            .iter()
            .map(|p| pick(p).ok_or_else(|| LimitError::Plan(format!("norm `{kind}` is not tracked by sweeps"))))
            .collect()
    }

    /// Log-log slope of the squared max-in-time norm against α.
    pub fn slope(&self, kind: NormKind) -> Result<f64, LimitError> {
        Ok(loglog_slope(&self.alphas(), &self.series(kind)?)?)
    }

    /// The rate bounds of the incompressibility limits at every point.
    pub fn rate_checks(&self) -> Vec<BoundCheck> {
        self.points
            .iter()
            .flat_map(|p| [p.fluid_div_bound.clone(), p.solid_div_bound.clone()])
            .collect()
    }
}

/// Whether a sequence decreases strictly.
pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// ‖q − p‖ in L²(Q) must fall strictly along the ladder (or vanish throughout).
/// lhs is the largest ratio of successive values, rhs is 1.
pub fn check_q_equals_p_limit(report: &LimitReport) -> Result<BoundCheck, LimitError> {
    if !matches!(report.mode, SweepMode::IncompBoth | SweepMode::IncompFluid) {
        return Err(LimitError::WrongMode(format!(
            "q = p limit needs an incomp_both or incomp_fluid sweep, got {}",
            report.mode
        )));
    }
    if report.points.len() < 2 {
        return Err(LimitError::Plan(format!("need at least 2 ladder points, got {}", report.points.len())));
    }
    let v: Vec<f64> = report.points.iter().map(|p| p.q_minus_p).collect();
    let all_zero = v.iter().all(|x| *x == 0.0);
    let worst_ratio = if all_zero {
        0.0
    } else {
        v.windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { f64::INFINITY })
            .fold(0.0, f64::max)
    };
    let mut check = BoundCheck::new("q - p decay", worst_ratio, 1.0);
    check.satisfied = all_zero || strictly_decreasing(&v);
    Ok(check)
}

struct PointRun {
    point: LimitPoint,
    traj: Trajectory,
    p: Vec<Vec<f64>>,
    pi: Vec<Vec<f64>>,
}

fn run_point(plan: &SweepPlan, base: &AssembledSystem, alpha: f64, c2: Option<&C2Solution>) -> Result<PointRun, LimitError> {
    let d = plan.params_at(alpha);
    let sys = base.with_params(&d);
    let init = State::zeros(sys.n_w(), sys.n_theta());
    let traj = integrate(&init, &sys, &plan.forcing, plan.dt, d.final_time)?;
    let report = energy_audit(&traj, &sys, &plan.forcing);
    let c_en = *energy_constant_series(&report, &sys, &plan.forcing).last().expect("frames");
    let max_sq = |k: NormKind| norm_series(&traj, &sys, k).iter().map(|v| v * v).fold(0.0, f64::max);
    let fluid_div = max_sq(NormKind::FluidDiv);
    let solid_div = max_sq(NormKind::SolidDiv);
    let g = sys.geometry();
    let press = pressures::reconstruct(&traj, &sys)?;
    let q_minus_p: Vec<Vec<f64>> = press
        .raw
        .q
        .iter()
        .zip(&press.raw.p)
        .map(|(q, p)| q.iter().zip(p).map(|(a, b)| a - b).collect())
        .collect();
    let q_minus_p = pressures::space_time_norm_sq(g, &q_minus_p, plan.dt).sqrt();
    let (c2_u, c2_theta, c2_p) = match c2 {
        Some(sol) => {
            let (u, th, p) = c2_errors(&sys, &traj, sol)?;
            (Some(u), Some(th), Some(p))
        }
        None => (None, None, None),
    };
    let point = LimitPoint {
        alpha,
        epsilon: 1.0 / alpha,
        alpha_p: d.alpha_p,
        alpha_eta: d.alpha_eta,
        alpha_lambda: d.alpha_lambda,
        max_fluid_div_sq: fluid_div,
        max_solid_div_sq: solid_div,
        max_solid_strain_sq: max_sq(NormKind::SolidStrain),
        max_solid_w_sq: max_sq(NormKind::SolidDisplacement),
        max_w_sq: max_sq(NormKind::Displacement),
        q_minus_p,
        c_en_final: c_en,
        fluid_div_bound: BoundCheck::new(format!("fluid div rate α_p={:.0e}", d.alpha_p), fluid_div, 2.0 * c_en / d.alpha_p),
        solid_div_bound: BoundCheck::new(format!("solid div rate α_η={:.0e}", d.alpha_eta), solid_div, 2.0 * c_en / d.alpha_eta),
        gap_w: None,
        gap_u: None,
        gap_theta: None,
        gap_p: None,
        gap_pi: None,
        c2_u,
        c2_theta,
        c2_p,
    };
    Ok(PointRun {
        point,
        traj,
        p: press.raw.p,
        pi: press.raw.pi,
    })
}

fn diff_frames<'a>(x: impl Iterator<Item = (&'a [f64], &'a [f64])>, sx: f64, sy: f64) -> Vec<Vec<f64>> {
    x.map(|(a, b)| a.iter().zip(b).map(|(u, v)| sx * u - sy * v).collect()).collect()
}

fn gap(frames: &[Vec<f64>], m: &CsrMatrix, dt: f64) -> f64 {
    let refs: Vec<&[f64]> = frames.iter().map(Vec::as_slice).collect();
    space_time_norm_sq(&refs, m, dt).max(0.0).sqrt()
}

/// Solves the model at every ladder point (in parallel) and assembles the report.
pub fn run_sweep(plan: &SweepPlan) -> Result<LimitReport, LimitError> {
    plan.validate()?;
    let base = build_system(&plan.geometry, &plan.params_at(plan.ladder[0]));
    let c2 = if plan.mode == SweepMode::JointSolidify {
        Some(solve_c2(&base, plan.alpha_p0, plan.alpha_eta0, &plan.forcing, plan.dt, plan.base.final_time, plan.gauge)?)
    } else {
        None
    };
    let runs: Vec<PointRun> = plan
        .ladder
        .par_iter()
        .map(|&a| run_point(plan, &base, a, c2.as_ref()))
        .collect::<Result<_, _>>()?;
    let gram_w = base.gram_w();
    let gram_t = base.gram_theta();
    let mass_s = &base.pieces.mass_s;
    let g = base.geometry();
    let dt = plan.dt;
    let mut points: Vec<LimitPoint> = runs.iter().map(|r| r.point.clone()).collect();
    for i in 1..runs.len() {
        let (prev, cur) = (&runs[i - 1], &runs[i]);
        let pairs = || cur.traj.states.iter().zip(&prev.traj.states);
        let dw = diff_frames(pairs().map(|(x, y)| (x.a.as_slice(), y.a.as_slice())), 1.0, 1.0);
        let du = diff_frames(
            pairs().map(|(x, y)| (x.a.as_slice(), y.a.as_slice())),
            cur.point.alpha_lambda,
            prev.point.alpha_lambda,
        );
        let dth = diff_frames(pairs().map(|(x, y)| (x.b.as_slice(), y.b.as_slice())), 1.0, 1.0);
        let dp = diff_frames(cur.p.iter().zip(&prev.p).map(|(x, y)| (x.as_slice(), y.as_slice())), 1.0, 1.0);
        let dpi = diff_frames(cur.pi.iter().zip(&prev.pi).map(|(x, y)| (x.as_slice(), y.as_slice())), 1.0, 1.0);
        let pt = &mut points[i];
        pt.gap_w = Some(gap(&dw, &gram_w, dt));
        pt.gap_u = Some(gap(&du, mass_s, dt));
        pt.gap_theta = Some(gap(&dth, &gram_t, dt));
        pt.gap_p = Some(pressures::space_time_norm_sq(g, &dp, dt).sqrt());
        pt.gap_pi = Some(pressures::space_time_norm_sq(g, &dpi, dt).sqrt());
    }
    Ok(LimitReport { mode: plan.mode, points })
}

/// Quasi-static limit: θ by itself, then one elastic solve per time level.
/// `u*` and `p*` at the frames, `*_mid` at the step midpoints, where the
/// Crank–Nicolson solution of the full model is compared.
#[derive(Debug, Clone, PartialEq)]
pub struct C2Solution {
    pub gauge: Gauge,
    pub dt: f64,
    pub times: Vec<f64>,
    pub theta: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    /// per-cell fluid pressure, zero on solid cells
    pub p: Vec<Vec<f64>>,
    pub mid_times: Vec<f64>,
    pub theta_mid: Vec<Vec<f64>>,
    pub u_mid: Vec<Vec<f64>>,
    pub p_mid: Vec<Vec<f64>>,
}

/// Factored elastic operator of the limit problem for one gauge.
struct ElasticSolver {
    gauge: Gauge,
    factor: LdlFactor,
    /// unknowns of the reduced system (all dofs or solid dofs)
    dofs: Vec<usize>,
    alpha_p0: f64,
}

impl ElasticSolver {
    fn new(sys: &AssembledSystem, alpha_p0: f64, alpha_eta0: f64, gauge: Gauge) -> Result<Self, LimitError> {
        let p = &sys.pieces;
        let (k, dofs) = match gauge {
            Gauge::VolumeBalanced => (
                CsrMatrix::combine(&[(alpha_p0, &p.div_f), (alpha_eta0, &p.div_s), (1.0, &p.strain_s)]),
                (0..sys.n_w()).collect(),
            ),
            Gauge::Literal => {
                let dofs = solid_dofs(&sys.basis);
                (
                    CsrMatrix::combine(&[(alpha_eta0, &p.div_s), (1.0, &p.strain_s)]).submatrix(&dofs, &dofs),
                    dofs,
                )
            }
        };
        let factor = LdlFactor::new(&k).map_err(LimitError::Singular)?;
        if factor.negative_pivots() > 0 {
            return Err(LimitError::Singular(SolverError::Pivot(0)));
        }
        Ok(ElasticSolver {
            gauge,
            factor,
            dofs,
            alpha_p0,
        })
    }

    /// (u, per-cell p) for temperature coefficients `theta` at time t.
    fn solve(&self, sys: &AssembledSystem, forcing: &ForcingSpec, theta: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>), LimitError> {
        let (f, _) = sys.load_vectors(forcing, t);
        let mut rhs = sys.a3.transpose().mul_vec(theta);
        for (r, v) in rhs.iter_mut().zip(&f) {
            *r += v;
        }
        let g = sys.geometry();
        match self.gauge {
            Gauge::VolumeBalanced => {
                let u = self.factor.solve(&rhs)?;
                let div = sys.basis.cell_mean_divergence(&u);
                let p = (0..g.n_cells())
                    .map(|c| if g.is_fluid(c) { -self.alpha_p0 * div[c] } else { 0.0 })
                    .collect();
                Ok((u, p))
            }
            Gauge::Literal => {
                let pf = hydrostatic(sys, forcing, theta, t);
                let load = fluid_pressure_load(sys, &pf);
                let reduced: Vec<f64> = self.dofs.iter().map(|&j| rhs[j] + load[j]).collect();
                let x = self.factor.solve(&reduced)?;
                let mut u = vec![0.0; sys.n_w()];
                for (&j, v) in self.dofs.iter().zip(x) {
                    u[j] = v;
                }
                let p = cell_means(sys, &pf);
                Ok((u, p))
            }
        }
    }
}

/// Pointwise fluid pressure −α_θf θ + α_F ρ_f Φ.
fn hydrostatic<'a>(sys: &'a AssembledSystem, forcing: &'a ForcingSpec, theta: &'a [f64], t: f64) -> impl Fn(usize, &[f64; 3], &[f64; 3]) -> f64 + 'a {
    let d = sys.params;
    let dim = sys.dim();
    move |cell, xi, x| {
        let th = sys.basis.temperature_in_cell(theta, cell, xi).0;
        let phi = forcing.body.potential(dim, x, t).unwrap_or(0.0);
        -d.alpha_theta_f * th + d.alpha_f * d.rho_f * phi
    }
}

fn quad_order(sys: &AssembledSystem) -> usize {
    sys.options.order.max(sys.options.load_order)
}

/// Calls `f(cell, xi, x, weight)` at every quadrature point of the given cells.
fn for_each_point(sys: &AssembledSystem, fluid: Option<bool>, mut f: impl FnMut(usize, &[f64; 3], &[f64; 3], f64)) {
    let g = sys.geometry();
    let dim = g.dim();
    let rule = CellRule::new(dim, quad_order(sys));
    let h = g.h();
    let vol = g.cell_volume();
    for cell in 0..g.n_cells() {
        if fluid.is_some_and(|fl| fl != g.is_fluid(cell)) {
            continue;
        }
        let origin = g.cell_origin(cell);
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = [0.0; 3];
            for a in 0..dim {
                x[a] = origin[a] + h * xi[a];
            }
            f(cell, xi, &x, w * vol);
        }
    }
}

/// ∫_{Ω_f} p div φ_j for every displacement basis function.
fn fluid_pressure_load(sys: &AssembledSystem, p: &impl Fn(usize, &[f64; 3], &[f64; 3]) -> f64) -> Vec<f64> {
    let dim = sys.dim();
    let h = sys.geometry().h();
    let mut out = vec![0.0; sys.n_w()];
    for_each_point(sys, Some(true), |cell, xi, x, w| {
        let pv = p(cell, xi, x);
        let (_, grads) = shape(dim, xi);
        for (c, dof) in sys.basis.cell_dofs(cell).into_iter().enumerate() {
            if let Some(k) = dof {
                for i in 0..dim {
                    out[k * dim + i] += w * pv * grads[c][i] / h;
                }
            }
        }
    });
    out
}

fn cell_means(sys: &AssembledSystem, p: &impl Fn(usize, &[f64; 3], &[f64; 3]) -> f64) -> Vec<f64> {
    let g = sys.geometry();
    let mut out = vec![0.0; g.n_cells()];
    for_each_point(sys, Some(true), |cell, xi, x, w| out[cell] += w * p(cell, xi, x));
    let vol = g.cell_volume();
    out.iter_mut().for_each(|v| *v /= vol);
    out
}

/// Solves the limit model on the mesh of `sys` with the same Crank–Nicolson
/// time grid as the full model. Only the thermal, forcing and density
/// coefficients of `sys.params` are used.
pub fn solve_c2(
    sys: &AssembledSystem,
    alpha_p0: f64,
    alpha_eta0: f64,
    forcing: &ForcingSpec,
    dt: f64,
    t_final: f64,
    gauge: Gauge,
) -> Result<C2Solution, LimitError> {
    sys.geometry().require_solid_anchored()?;
    if !forcing.body.is_potential() {
        return Err(DiagnosticsError::NotPotential.into());
    }
    if !(dt > 0.0) {
        return Err(LimitError::Plan("dt must be positive".into()));
    }
    let n = step_count(t_final, dt)?;
    let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    let mid_times: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) * dt).collect();

    // heat equation alone, started from rest
    let lhs = CsrMatrix::combine(&[(1.0, &sys.b), (0.5 * dt, &sys.b1)]);
    let rhs_op = CsrMatrix::combine(&[(1.0, &sys.b), (-0.5 * dt, &sys.b1)]);
    let heat = LdlFactor::new(&lhs)?;
    let mut theta = vec![vec![0.0; sys.n_theta()]];
    for &tm in &mid_times {
        let (_, psi) = sys.load_vectors(forcing, tm);
        let mut r = rhs_op.mul_vec(theta.last().expect("nonempty"));
        for (x, p) in r.iter_mut().zip(&psi) {
            *x += dt * p;
        }
        theta.push(heat.solve(&r)?);
    }
    let theta_mid: Vec<Vec<f64>> = theta
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect())
        .collect();

    let elastic = ElasticSolver::new(sys, alpha_p0, alpha_eta0, gauge)?;
    let solve_all = |ts: &[f64], th: &[Vec<f64>]| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), LimitError> {
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = ts
            .par_iter()
            .zip(th)
            .map(|(&t, b)| elastic.solve(sys, forcing, b, t))
            .collect::<Result<_, _>>()?;
        Ok(pairs.into_iter().unzip())
    };
    let (u, p) = solve_all(&times, &theta)?;
    let (u_mid, p_mid) = solve_all(&mid_times, &theta_mid)?;
    Ok(C2Solution {
        gauge,
        dt,
        times,
        theta,
        u,
        p,
        mid_times,
        theta_mid,
        u_mid,
        p_mid,
    })
}

/// L²(Q) distances between the full model at midpoints and the limit model:
/// ((1−χ̄)α_λ w − u, θ − θ_C2, p − p_C2).
pub fn c2_errors(sys: &AssembledSystem, traj: &Trajectory, c2: &C2Solution) -> Result<(f64, f64, f64), LimitError> {
    if traj.states.len() != c2.times.len() || (traj.dt - c2.dt).abs() > 1e-14 * c2.dt {
        return Err(LimitError::Plan("limit solution and trajectory use different time grids".into()));
    }
    let d = &sys.params;
    let g = sys.geometry();
    let mass_s = &sys.pieces.mass_s;
    let gram_t = sys.gram_theta();
    let dt = c2.dt;
    let mut eu = 0.0;
    let mut et = 0.0;
    let mut ep = 0.0;
    for (k, w) in traj.states.windows(2).enumerate() {
        let a_mid: Vec<f64> = w[0].a.iter().zip(&w[1].a).map(|(x, y)| 0.5 * (x + y)).collect();
        let b_mid: Vec<f64> = w[0].b.iter().zip(&w[1].b).map(|(x, y)| 0.5 * (x + y)).collect();
        let du: Vec<f64> = a_mid.iter().zip(&c2.u_mid[k]).map(|(x, u)| d.alpha_lambda * x - u).collect();
        let dth: Vec<f64> = b_mid.iter().zip(&c2.theta_mid[k]).map(|(x, y)| x - y).collect();
        eu += dt * mass_s.quad_form(&du);
        et += dt * gram_t.quad_form(&dth);
        let div = sys.basis.cell_mean_divergence(&a_mid);
        let vol = g.cell_volume();
        for c in (0..g.n_cells()).filter(|&c| g.is_fluid(c)) {
            ep += dt * vol * (-d.alpha_p * div[c] - c2.p_mid[k][c]).powi(2);
        }
    }
    Ok((eu.max(0.0).sqrt(), et.max(0.0).sqrt(), ep.sqrt()))
}

/// Relative residual of the limit elastic weak form for displacement
/// coefficients `u`, evaluated by its own element loop:
///
/// ∫ (χ̄p − (1−χ̄)α_η⁰ div u + ᾱ_θ θ) div φ − (1−χ̄) D(u):D(φ) + α_F ρ̄ ∇Φ·φ
///
/// for every displacement basis function φ (or only those in `tests`).
/// The pressure is a pointwise function `p(cell, xi, x)` on fluid cells.
pub fn weak_residual(
    sys: &AssembledSystem,
    forcing: &ForcingSpec,
    alpha_eta0: f64,
    u: &[f64],
    theta: &[f64],
    p: &dyn Fn(usize, &[f64; 3], &[f64; 3]) -> f64,
    t: f64,
    tests: Option<&[usize]>,
) -> f64 {
    let dim = sys.dim();
    let g = sys.geometry();
    let h = g.h();
    let d = sys.params;
    let mut res = vec![0.0; sys.n_w()];
    let mut scale = vec![0.0; sys.n_w()];
    for_each_point(sys, None, |cell, xi, x, w| {
        let fluid = g.is_fluid(cell);
        let (_, du) = sys.basis.displacement_in_cell(u, cell, xi);
        let th = sys.basis.temperature_in_cell(theta, cell, xi).0;
        let div_u: f64 = (0..dim).map(|i| du[i][i]).sum();
        let f = forcing.body.force(dim, x, t);
        let rho = if fluid { d.rho_f } else { d.rho_s };
        let a_th = if fluid { d.alpha_theta_f } else { d.alpha_theta_s };
        let pv = if fluid { p(cell, xi, x) } else { 0.0 };
        let (vals, grads) = shape(dim, xi);
        for (c, dof) in sys.basis.cell_dofs(cell).into_iter().enumerate() {
            let Some(k) = dof else { continue };
            for i in 0..dim {
                // φ = N_c e_i
                let div_phi = grads[c][i] / h;
                let mut strain = 0.0;
                if !fluid {
                    for j in 0..dim {
                        let dphi_ij = grads[c][j] / h; // ∂_j φ_i
                        strain += 0.5 * (du[i][j] + du[j][i]) * dphi_ij;
                    }
                }
                let terms = [
                    pv * div_phi,
                    if fluid { 0.0 } else { -alpha_eta0 * div_u * div_phi },
                    a_th * th * div_phi,
                    -strain,
                    d.alpha_f * rho * f[i] * vals[c],
                ];
                res[k * dim + i] += w * terms.iter().sum::<f64>();
                scale[k * dim + i] += w * terms.iter().map(|v| v.abs()).sum::<f64>();
            }
        }
    });
    let idx: Vec<usize> = match tests {
        Some(t) => t.to_vec(),
        None => (0..sys.n_w()).collect(),
    };
    let r = idx.iter().map(|&j| res[j].abs()).fold(0.0, f64::max);
    let s = idx.iter().map(|&j| scale[j]).fold(0.0, f64::max);
    if s == 0.0 {
        0.0
    } else {
        r / s
    }
}

impl C2Solution {
    /// Weak-form residual at frame `k`, with the pressure the gauge prescribes.
    /// The volume-balanced gauge satisfies it for every basis function, the
    /// literal gauge for the basis functions of the solid.
    pub fn residual_at(&self, sys: &AssembledSystem, forcing: &ForcingSpec, alpha_p0: f64, alpha_eta0: f64, k: usize) -> f64 {
        let t = self.times[k];
        let u = &self.u[k];
        let th = &self.theta[k];
        match self.gauge {
            Gauge::VolumeBalanced => {
                let p = |cell: usize, xi: &[f64; 3], _: &[f64; 3]| {
                    let (_, du) = sys.basis.displacement_in_cell(u, cell, xi);
                    -alpha_p0 * (0..sys.dim()).map(|i| du[i][i]).sum::<f64>()
                };
                weak_residual(sys, forcing, alpha_eta0, u, th, &p, t, None)
            }
            Gauge::Literal => {
                let p = hydrostatic(sys, forcing, th, t);
                let dofs = solid_dofs(&sys.basis);
                weak_residual(sys, forcing, alpha_eta0, u, th, &p, t, Some(&dofs))
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.theta
            .iter()
            .chain(&self.u)
            .chain(&self.p)
            .map(|v| max_abs(v))
            .fold(0.0, f64::max)
    }
}
