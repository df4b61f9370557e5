//! One function per run mode. Each computes everything first and returns the
//! files to write, so all output goes through a single writer.

use std::fmt::Write as _;

use thermofsi_core::assembly::build_system;
use thermofsi_core::battery::{random_case, run_case_as};
use thermofsi_core::diagnostics::{
    check_deformation_bound, derivative_trajectory, energy_estimate_series_as, time_derivative_estimate_series, worst,
    ENERGY_COLUMNS,
};
use thermofsi_core::integrator::{integrate_with, project_initial};
use thermofsi_core::limits::{check_q_equals_p_limit, solve_c2, SweepPlan, SWEEP_COLUMNS};
use thermofsi_core::pressures::{l2_norm, reconstruct};
use thermofsi_core::sparse::max_abs;
use thermofsi_core::{energy_audit, run_sweep, BoundCheck, Error, NormKind, SweepMode};
use thiserror::Error as ThisError;

use crate::config::{ConfigError, Mode, RunConfig};
use crate::output::{num, opt, Artifact};

#[derive(Debug, ThisError)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
}

/// Lifts any core error into [`RunError`].
macro_rules! core {
    ($e:expr) => {
        $e.map_err(|e| RunError::Core(e.into()))
    };
}

/// Files produced by a run plus whether every checked bound held.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: Vec<String>,
    pub violated: bool,
}

pub fn execute(cfg: &RunConfig, mode: Mode) -> Result<Outcome, RunError> {
    match mode {
        Mode::Solve => solve(cfg, false),
        Mode::Audit => solve(cfg, true),
        Mode::Sweep => sweep(cfg),
        Mode::C2 => c2(cfg),
        Mode::Selftest => selftest(cfg),
    }
}

fn csv_line(values: impl IntoIterator<Item = String>) -> String {
    let mut s = values.into_iter().collect::<Vec<_>>().join(",");
    s.push('\n');
    s
}

fn checks_table(checks: &[BoundCheck]) -> (String, String) {
    let mut txt = String::new();
    for c in checks {
        writeln!(txt, "{c}").unwrap();
    }
    let mut csv = csv_line(["name", "lhs", "rhs", "margin", "satisfied"].map(String::from));
    for c in checks {
        csv.push_str(&csv_line([c.name.clone(), num(c.lhs), num(c.rhs), num(c.margin), c.satisfied.to_string()]));
    }
    (txt, csv)
}

fn solve(cfg: &RunConfig, audit: bool) -> Result<Outcome, RunError> {
    let d = cfg.params()?;
    let g = cfg.geometry()?;
    let forcing = cfg.forcing()?;
    let initial = cfg.initial();
    let backend = cfg.backend()?;
    let form = cfg.estimate_form()?;
    let sys = build_system(&g, &d);
    let init = core!(project_initial(&initial, &sys))?;
    let traj = core!(integrate_with(&init, &sys, &forcing, cfg.run.dt, d.final_time, backend))?;

    let mut artifacts = Vec::new();
    let series: Vec<Vec<f64>> = NormKind::ALL
        .iter()
        .map(|&k| thermofsi_core::diagnostics::norm_series(&traj, &sys, k))
        .collect();
    let mut norms = csv_line(std::iter::once("t".to_string()).chain(NormKind::ALL.iter().map(|k| k.name().to_string())));
    for (i, t) in traj.times().iter().enumerate() {
        norms.push_str(&csv_line(std::iter::once(num(*t)).chain(series.iter().map(|s| num(s[i])))));
    }
    artifacts.push(Artifact::text("norms.csv", norms));

    let pf = core!(reconstruct(&traj, &sys))?;
    let mut press = csv_line(
        ["t", "L2_p", "L2_q", "L2_pi", "mean_p_tilde", "mean_q_tilde", "mean_pi_tilde"].map(String::from),
    );
    for r in pf.summary(&g) {
        press.push_str(&csv_line(
            [r.t, r.l2_p, r.l2_q, r.l2_pi, r.mean_p_tilde, r.mean_q_tilde, r.mean_pi_tilde].map(num),
        ));
    }
    artifacts.push(Artifact::text("pressures.csv", press));

    if cfg.run.dump_state {
        let mut bytes = Vec::new();
        traj.write_binary(&mut bytes).expect("writing to memory");
        artifacts.push(Artifact::binary("trajectory.bin", bytes));
    }

    let mut summary = vec![format!(
        "solved {} steps, {} displacement and {} temperature unknowns, max |state| {:.6e}",
        traj.n_steps(),
        sys.n_w(),
        sys.n_theta(),
        traj.max_abs()
    )];
    let mut violated = false;
    if audit {
        let report = energy_audit(&traj, &sys, &forcing);
        let mut energy = csv_line(ENERGY_COLUMNS.map(String::from));
        for k in 0..report.n_frames() {
            energy.push_str(&csv_line(report.row(k).map(num)));
        }
        artifacts.push(Artifact::text("energy.csv", energy));

        let mut checks = vec![BoundCheck::new("energy identity residual", report.max_residual(), 1e-8)];
        let est = energy_estimate_series_as(&report, &sys, &forcing, form);
        let mut e = worst(&est).cloned().expect("frames");
        e.name = "energy estimate".into();
        checks.push(e);
        let mut def = check_deformation_bound(&report, &sys, &forcing);
        def.name = "deformation bound".into();
        checks.push(def);
        if initial.is_homogeneous() {
            let deriv = core!(derivative_trajectory(&sys, &forcing, cfg.run.dt, d.final_time))?;
            let dreport = energy_audit(&deriv, &sys, &forcing.time_derivative());
            let series = core!(time_derivative_estimate_series(&dreport, &sys, &forcing, &initial))?;
            let mut r = worst(&series).cloned().expect("frames");
            r.name = "rate estimate".into();
            checks.push(r);
        }
        let coupling = (sys.b2.to_dense() - sys.a3.transpose().to_dense()).amax();
        checks.push(BoundCheck::new("coupling cancellation", coupling, 1e-12));
        let (txt, csv) = checks_table(&checks);
        artifacts.push(Artifact::text("bounds.txt", txt.clone()));
        artifacts.push(Artifact::text("bounds.csv", csv));
        violated = checks.iter().any(|c| !c.satisfied);
        summary.extend(txt.lines().map(String::from));
    }
    Ok(Outcome {
        artifacts,
        summary,
        violated,
    })
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let d = cfg.params()?;
    let mode = cfg.sweep_mode()?;
    let mut plan = SweepPlan::new(mode, cfg.geometry()?, d, cfg.forcing()?, cfg.run.dt);
    plan.ladder = cfg.sweep.ladder.clone();
    plan.alpha_p0 = cfg.sweep.alpha_p0;
    plan.alpha_eta0 = cfg.sweep.alpha_eta0;
    plan.gauge = cfg.gauge()?;
    let report = core!(run_sweep(&plan))?;

    let mut csv = csv_line(SWEEP_COLUMNS.map(String::from));
    for i in 0..report.points.len() {
        csv.push_str(&csv_line(std::iter::once(mode.name().to_string()).chain(report.row(i).into_iter().map(opt))));
    }
    let mut summary_csv = csv_line(["quantity", "value"].map(String::from));
    let mut summary = Vec::new();
    for k in [NormKind::FluidDiv, NormKind::SolidDiv, NormKind::SolidStrain, NormKind::SolidDisplacement, NormKind::Displacement] {
        let s = report.slope(k).ok();
        summary_csv.push_str(&csv_line([format!("slope_{}", k.name()), opt(s)]));
        if mode.decaying_norms().contains(&k) {
            summary.push(format!("slope of max_t {}² vs alpha: {}", k.name(), s.map_or("undefined".into(), |v| format!("{v:.4}"))));
        }
    }
    let rate = report.rate_checks();
    let held = rate.iter().filter(|c| c.satisfied).count();
    summary_csv.push_str(&csv_line(["rate_bounds_held".into(), held.to_string()]));
    summary_csv.push_str(&csv_line(["rate_bounds_total".into(), rate.len().to_string()]));
    summary.push(format!("rate bounds held at {held}/{} points", rate.len()));
    if matches!(mode, SweepMode::IncompBoth | SweepMode::IncompFluid) {
        let c = core!(check_q_equals_p_limit(&report))?;
        summary_csv.push_str(&csv_line(["q_minus_p_decreasing".into(), c.satisfied.to_string()]));
        summary.push(format!("q - p decreasing along ladder: {}", c.satisfied));
    }
    Ok(Outcome {
        artifacts: vec![
            Artifact::text(format!("sweep_{}.csv", mode.name()), csv),
            Artifact::text(format!("sweep_{}_summary.csv", mode.name()), summary_csv),
        ],
        summary,
        violated: false,
    })
}

fn c2(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let d = cfg.params()?;
    let g = cfg.geometry()?;
    let forcing = cfg.forcing()?;
    let gauge = cfg.gauge()?;
    let sys = build_system(&g, &d);
    let (ap0, ae0) = (cfg.sweep.alpha_p0, cfg.sweep.alpha_eta0);
    let sol = core!(solve_c2(&sys, ap0, ae0, &forcing, cfg.run.dt, d.final_time, gauge))?;
    let mass_s = &sys.pieces.mass_s;
    let gram_t = sys.gram_theta();
    let mut csv = csv_line(["t", "L2_theta", "L2_u_solid", "L2_p", "weak_residual"].map(String::from));
    let mut worst_res = 0.0f64;
    for k in 0..sol.times.len() {
        let res = sol.residual_at(&sys, &forcing, ap0, ae0, k);
        worst_res = worst_res.max(res);
        csv.push_str(&csv_line([
            num(sol.times[k]),
            num(gram_t.quad_form(&sol.theta[k]).max(0.0).sqrt()),
            num(mass_s.quad_form(&sol.u[k]).max(0.0).sqrt()),
            num(l2_norm(&g, &sol.p[k])),
            num(res),
        ]));
    }
    let peak = sol.u.iter().map(|u| max_abs(u)).fold(0.0, f64::max);
    Ok(Outcome {
        artifacts: vec![Artifact::text("c2.csv", csv)],
        summary: vec![format!(
            "limit model solved on {} frames ({:?} gauge), max |u| {peak:.6e}, worst weak residual {worst_res:.3e}",
            sol.times.len(),
            gauge
        )],
        violated: false,
    })
}

fn selftest(cfg: &RunConfig) -> Result<Outcome, RunError> {
    use rayon::prelude::*;
    let form = cfg.estimate_form()?;
    let first = cfg.run.seed;
    let outcomes: Vec<_> = (first..first + cfg.run.battery as u64)
        .into_par_iter()
        .map(|s| {
            let case = random_case(s);
            run_case_as(&case, form).map(|o| (case, o))
        })
        .collect::<Result<_, _>>()
        .map_err(|e| RunError::Core(e.into()))?;
    let mut csv = csv_line(
        ["seed", "dim", "n", "layout", "max_residual", "estimate_lhs", "estimate_rhs", "relative_margin", "violations"]
            .map(String::from),
    );
    let mut bad = 0;
    let mut worst_res = 0.0f64;
    for (case, o) in &outcomes {
        worst_res = worst_res.max(o.max_residual);
        if o.violations > 0 || o.max_residual > 1e-8 {
            bad += 1;
        }
        csv.push_str(&csv_line([
            case.seed.to_string(),
            case.dim.to_string(),
            case.n.to_string(),
            case.layout.to_string(),
            num(o.max_residual),
            num(o.estimate.lhs),
            num(o.estimate.rhs),
            num(o.estimate.relative_margin()),
            o.violations.to_string(),
        ]));
    }
    Ok(Outcome {
        artifacts: vec![Artifact::text("selftest.csv", csv)],
        summary: vec![format!(
            "{} configurations, worst identity residual {worst_res:.3e}, {bad} with a violated invariant",
            outcomes.len()
        )],
        violated: bad > 0,
    })
}
