//! Physical constants of the rest state and the dimensionless coefficient set.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Ratio of specific heats of air; fixed by the scaling.
pub const GAMMA_0: f64 = 7.0 / 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("constraint violated: {0}")]
    Constraint(&'static str),
    #[error("nonpositive parameter(s): {}", .0.join(", "))]
    Nonpositive(Vec<&'static str>),
}

/// Physical (SI) constants. Units: conductivities W/(m K), viscosities Pa s,
/// elastic moduli Pa, gamma_s 1/K, densities kg/m^3, scales in their own units.
/// The free-energy derivatives carry mixed units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub kappa_s: f64,
    pub kappa_f: f64,
    pub nu: f64,
    pub mu: f64,
    pub eta: f64,
    pub lambda: f64,
    pub gamma_s: f64,
    pub rho_s: f64,
    pub rho_f: f64,
    pub c_frho: f64,
    pub c_frhorho: f64,
    pub c_frhotheta: f64,
    pub c_svv: f64,
    pub c_fvv: f64,
    #[serde(rename = "L0")]
    pub l0: f64,
    pub tau0: f64,
    pub g: f64,
    pub p0: f64,
    pub rho0: f64,
    pub theta0: f64,
    pub theta_star: f64,
}

impl PhysicalParams {
    /// Air-like fluid next to a steel-like solid at laboratory scales.
    pub fn reference() -> Self {
        PhysicalParams {
            kappa_s: 50.0,
            kappa_f: 0.025,
            nu: 1.0e-3,
            mu: 1.8e-5,
            eta: 1.6e11,
            lambda: 8.0e10,
            gamma_s: 1.2e-5,
            rho_s: 7850.0,
            rho_f: 1.2,
            c_frho: 1.0e5 / 1.2,
            c_frhorho: 1.0e4,
            c_frhotheta: 0.3,
            c_svv: -0.06,
            c_fvv: -3.5,
            l0: 1.0,
            tau0: 1.0,
            g: 9.81,
            p0: 1.013e5,
            rho0: 1.29,
            theta0: 100.0,
            theta_star: 293.0,
        }
    }

    pub fn check(&self) -> Result<(), ParamError> {
        let positive = [
            ("kappa_s", self.kappa_s),
            ("kappa_f", self.kappa_f),
            ("nu", self.nu),
            ("mu", self.mu),
            ("eta", self.eta),
            ("lambda", self.lambda),
            ("gamma_s", self.gamma_s),
            ("rho_s", self.rho_s),
            ("rho_f", self.rho_f),
            ("L0", self.l0),
            ("tau0", self.tau0),
            ("g", self.g),
            ("p0", self.p0),
            ("rho0", self.rho0),
            ("theta0", self.theta0),
            ("theta_star", self.theta_star),
        ];
        let bad: Vec<&'static str> = positive
            .iter()
            .filter(|(_, v)| !(*v > 0.0 && v.is_finite()))
            .map(|(k, _)| *k)
            .collect();
        if !bad.is_empty() {
            return Err(ParamError::Nonpositive(bad));
        }
        if !(self.nu > 2.0 / 3.0 * self.mu) {
            return Err(ParamError::Constraint("ν>2/3·μ"));
        }
        if !(self.eta > 2.0 / 3.0 * self.lambda) {
            return Err(ParamError::Constraint("η>2/3·λ"));
        }
        if !(self.c_frhotheta > 0.0) {
            return Err(ParamError::Constraint("c_frhotheta>0"));
        }
        if !(2.0 * self.c_frho + self.c_frhorho * self.rho_f > 0.0) {
            return Err(ParamError::Constraint("2·c_frho+c_frhorho·rho_f>0"));
        }
        if !(self.c_svv < 0.0) {
            return Err(ParamError::Constraint("c_svv<0"));
        }
        if !(self.c_fvv < 0.0) {
            return Err(ParamError::Constraint("c_fvv<0"));
        }
        Ok(())
    }
}

/// Dimensionless coefficients of the linearized model plus the final time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    pub alpha_tau: f64,
    #[serde(rename = "alpha_F")]
    pub alpha_f: f64,
    pub alpha_nu: f64,
    pub alpha_eta: f64,
    pub alpha_lambda: f64,
    pub alpha_p: f64,
    pub alpha_mu: f64,
    pub alpha_theta_s: f64,
    pub alpha_theta_f: f64,
    pub c_pf: f64,
    pub c_ps: f64,
    pub rho_s: f64,
    pub rho_f: f64,
    pub kappa_s: f64,
    pub kappa_f: f64,
    #[serde(rename = "T")]
    pub final_time: f64,
}

impl DimensionlessParams {
    /// Every coefficient equal to one.
    pub fn unit() -> Self {
        DimensionlessParams {
            alpha_tau: 1.0,
            alpha_f: 1.0,
            alpha_nu: 1.0,
            alpha_eta: 1.0,
            alpha_lambda: 1.0,
            alpha_p: 1.0,
            alpha_mu: 1.0,
            alpha_theta_s: 1.0,
            alpha_theta_f: 1.0,
            c_pf: 1.0,
            c_ps: 1.0,
            rho_s: 1.0,
            rho_f: 1.0,
            kappa_s: 1.0,
            kappa_f: 1.0,
            final_time: 1.0,
        }
    }

    pub fn fields(&self) -> [(&'static str, f64); 16] {
        [
            ("alpha_tau", self.alpha_tau),
            ("alpha_F", self.alpha_f),
            ("alpha_nu", self.alpha_nu),
            ("alpha_eta", self.alpha_eta),
            ("alpha_lambda", self.alpha_lambda),
            ("alpha_p", self.alpha_p),
            ("alpha_mu", self.alpha_mu),
            ("alpha_theta_s", self.alpha_theta_s),
            ("alpha_theta_f", self.alpha_theta_f),
            ("c_pf", self.c_pf),
            ("c_ps", self.c_ps),
            ("rho_s", self.rho_s),
            ("rho_f", self.rho_f),
            ("kappa_s", self.kappa_s),
            ("kappa_f", self.kappa_f),
            ("T", self.final_time),
        ]
    }

    pub fn min_heat_capacity(&self) -> f64 {
        self.c_pf.min(self.c_ps)
    }
}

/// Names of nonpositive (or non-finite) fields; empty when the set is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub nonpositive: Vec<&'static str>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.nonpositive.is_empty()
    }

    pub fn into_result(self) -> Result<(), ParamError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(ParamError::Nonpositive(self.nonpositive))
        }
    }
}

pub fn validate(d: &DimensionlessParams) -> ValidationReport {
    ValidationReport {
        nonpositive: d
            .fields()
            .iter()
            .filter(|(_, v)| !(*v > 0.0 && v.is_finite()))
            .map(|(k, _)| *k)
            .collect(),
    }
}

pub fn nondimensionalize(
    p: &PhysicalParams,
    final_time: f64,
) -> Result<DimensionlessParams, ParamError> {
    p.check()?;
    let c0_sq = GAMMA_0 * p.p0 / p.rho0;
    let c_sq = 2.0 * p.c_frho * p.rho_f + p.c_frhorho * p.rho_f * p.rho_f;
    let rho_f_prime = p.rho_f / p.rho0;
    let kappa_scale = p.l0 * p.l0 * p.p0 * p.theta_star / (p.tau0 * p.theta0 * p.theta0);
    let d = DimensionlessParams {
        alpha_tau: GAMMA_0 * p.l0 * p.l0 / (c0_sq * p.tau0 * p.tau0),
        alpha_f: GAMMA_0 * p.g * p.l0 / c0_sq,
        alpha_nu: (p.nu - 2.0 / 3.0 * p.mu) / (p.tau0 * p.p0),
        alpha_eta: (p.eta - 2.0 / 3.0 * p.lambda) / p.p0,
        alpha_lambda: 2.0 * p.lambda / p.p0,
        alpha_p: GAMMA_0 * c_sq / c0_sq * rho_f_prime,
        alpha_mu: 2.0 * p.mu / (p.tau0 * p.p0),
        alpha_theta_s: p.gamma_s * p.eta * p.theta0 / p.p0,
        alpha_theta_f: p.c_frhotheta * p.rho_f * p.rho_f * p.theta0 / p.p0,
        c_pf: -p.c_fvv * p.rho_f * p.theta0 * p.theta0 / p.p0,
        c_ps: -p.c_svv * p.rho_s * p.theta0 * p.theta0 / p.p0,
        rho_s: p.rho_s / p.rho0,
        rho_f: rho_f_prime,
        kappa_s: p.kappa_s / kappa_scale,
        kappa_f: p.kappa_f / kappa_scale,
        final_time,
    };
    validate(&d).into_result()?;
    Ok(d)
}
