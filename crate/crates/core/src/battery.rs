//! Randomized configurations for invariant checks.
//!
//! A case is fully determined by its seed, so failures can be replayed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::assembly::build_system;
use crate::diagnostics::{energy_audit, energy_estimate_series_as, worst, BoundCheck, EstimateForm};
use crate::forcing::{BodyForce, Envelope, ForcingSpec, HeatSource, InitialData, ScalarField, VectorField};
use crate::geometry::{build_geometry, CellBox, Layout};
use crate::integrator::{integrate, project_initial, IntegratorError};
use crate::params::DimensionlessParams;

#[derive(Debug, Clone)]
pub struct Case {
    pub seed: u64,
    pub dim: usize,
    pub n: usize,
    pub layout: Layout,
    pub params: DimensionlessParams,
    pub forcing: ForcingSpec,
    pub initial: InitialData,
    pub dt: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub seed: u64,
    pub max_residual: f64,
    /// tightest point of the energy estimate over all stored times
    pub estimate: BoundCheck,
    pub violations: usize,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn envelope(rng: &mut ChaCha8Rng) -> Envelope {
    match rng.random_range(0..4) {
        0 => Envelope::Constant,
        1 => Envelope::SmoothRamp {
            duration: rng.random_range(0.1..0.8),
        },
        2 => Envelope::Sine {
            omega: rng.random_range(1.0..10.0),
        },
        _ => Envelope::Linear {
            rate: rng.random_range(-3.0..3.0),
        },
    }
}

fn modes(rng: &mut ChaCha8Rng) -> [u32; 3] {
    [rng.random_range(1..3), rng.random_range(1..3), 1]
}

/// A valid random configuration with dim ∈ {1,2}, n ∈ {4,8} and zero initial
/// displacement; velocity and temperature data are random.
pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=2);
    let n = if rng.random_bool(0.5) { 4 } else { 8 };
    let layout = if dim == 2 && n == 8 && rng.random_bool(0.3) {
        Layout::FluidInclusion(CellBox::uniform(2, 6))
    } else {
        Layout::SolidSlab(rng.random_range(1..n))
    };
    let mut p = DimensionlessParams::unit();
    for v in [
        &mut p.alpha_tau,
        &mut p.alpha_f,
        &mut p.alpha_nu,
        &mut p.alpha_eta,
        &mut p.alpha_lambda,
        &mut p.alpha_p,
        &mut p.alpha_mu,
        &mut p.alpha_theta_s,
        &mut p.alpha_theta_f,
        &mut p.c_pf,
        &mut p.c_ps,
        &mut p.rho_s,
        &mut p.rho_f,
        &mut p.kappa_s,
        &mut p.kappa_f,
    ] {
        *v = log_uniform(&mut rng, 0.1, 10.0);
    }
    p.final_time = if rng.random_bool(0.5) { 0.5 } else { 1.0 };
    let dt = if rng.random_bool(0.5) { 0.05 } else { 0.025 };
    let body = match rng.random_range(0..3) {
        0 => BodyForce::Zero,
        1 => BodyForce::Gravity {
            g: rng.random_range(-3.0..3.0),
            envelope: envelope(&mut rng),
        },
        _ => BodyForce::Potential {
            amplitude: rng.random_range(-2.0..2.0),
            wave: [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), 1.0],
            envelope: envelope(&mut rng),
        },
    };
    let heat = if rng.random_bool(0.7) {
        HeatSource::Bump {
            center: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.5],
            width: rng.random_range(0.1..0.5),
            amplitude: rng.random_range(-5.0..5.0),
            envelope: envelope(&mut rng),
        }
    } else {
        HeatSource::Zero
    };
    let v0 = if rng.random_bool(0.6) {
        VectorField::Sine {
            amplitude: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0],
            modes: modes(&mut rng),
        }
    } else {
        VectorField::Zero
    };
    let theta0 = if rng.random_bool(0.6) {
        ScalarField::Sine {
            amplitude: rng.random_range(-1.0..1.0),
            modes: modes(&mut rng),
        }
    } else {
        ScalarField::Zero
    };
    Case {
        seed,
        dim,
        n,
        layout,
        params: p,
        forcing: ForcingSpec { body, heat },
        initial: InitialData {
            w0: VectorField::Zero,
            v0,
            theta0,
        },
        dt,
    }
}

pub fn run_case(case: &Case) -> Result<Outcome, IntegratorError> {
    run_case_as(case, EstimateForm::SumOfMaxima)
}

pub fn run_case_as(case: &Case, form: EstimateForm) -> Result<Outcome, IntegratorError> {
    let g = build_geometry(case.dim, case.n, case.layout.clone()).expect("battery layouts are valid");
    let sys = build_system(&g, &case.params);
    let init = project_initial(&case.initial, &sys)?;
    let traj = integrate(&init, &sys, &case.forcing, case.dt, case.params.final_time)?;
    let report = energy_audit(&traj, &sys, &case.forcing);
    let checks = energy_estimate_series_as(&report, &sys, &case.forcing, form);
    Ok(Outcome {
        seed: case.seed,
        max_residual: report.max_residual(),
        violations: checks.iter().filter(|c| !c.satisfied).count(),
        estimate: worst(&checks).cloned().expect("nonempty"),
    })
}

/// Runs seeds `first..first + count` in parallel; results are in seed order.
pub fn run_battery(first: u64, count: usize) -> Vec<Result<Outcome, IntegratorError>> {
    (first..first + count as u64)
        .into_par_iter()
        .map(|s| run_case(&random_case(s)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cases_are_reproducible_and_valid() {
        for seed in 0..20 {
            let a = random_case(seed);
            let b = random_case(seed);
            assert_eq!(a.params, b.params);
            assert_eq!(a.layout, b.layout);
            assert!(crate::params::validate(&a.params).is_valid());
            assert!(a.initial.w0.is_zero());
        }
    }

    #[test]
    fn small_battery_passes() {
        for r in run_battery(1000, 6) {
            let o = r.unwrap();
            assert!(o.max_residual <= 1e-8, "seed {}: {}", o.seed, o.max_residual);
            assert_eq!(o.violations, 0, "seed {}: {}", o.seed, o.estimate);
        }
    }
}
