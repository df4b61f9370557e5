//! Run configuration: built-in defaults, then the TOML file, then `--set`
//! overrides. Every accepted key exists in the defaults, so a typo is an
//! error that names the key.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thermofsi_core::forcing::{BodyForce, Envelope, ForcingSpec, HeatSource, InitialData, ScalarField, VectorField};
use thermofsi_core::geometry::{build_geometry, Layout, MediumGeometry};
use thermofsi_core::params::{validate, DimensionlessParams};
use thermofsi_core::{EstimateForm, Gauge, SweepMode};
use thermofsi_core::integrator::Backend;
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("override `{0}` must look like section.key=value")]
    Override(String),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySection {
    pub dim: usize,
    pub n: usize,
    /// `slab:<k>`, `inclusion:<lo>:<hi>[...]` or `solid-inclusion:<lo>:<hi>[...]`
    pub layout: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSection {
    /// zero | gravity | potential
    pub body: String,
    /// g for gravity, amplitude for potential
    pub body_amplitude: f64,
    pub body_wave: [f64; 3],
    /// constant | ramp:<duration> | sine:<omega> | linear:<rate>
    pub body_envelope: String,
    /// zero | bump
    pub heat: String,
    pub heat_center: [f64; 3],
    pub heat_width: f64,
    pub heat_amplitude: f64,
    pub heat_envelope: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSection {
    pub w0_amplitude: [f64; 3],
    pub w0_modes: [u32; 3],
    pub v0_amplitude: [f64; 3],
    pub v0_modes: [u32; 3],
    pub theta0_amplitude: f64,
    pub theta0_modes: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    /// solve | audit | c2 | selftest | sweep | sweep:<mode>
    pub mode: String,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub output_dir: String,
    /// first seed of the selftest battery
    pub seed: u64,
    /// number of selftest configurations
    pub battery: usize,
    /// direct | iterative
    pub backend: String,
    /// sum_of_maxima | max_of_sum
    pub estimate_form: String,
    /// also write the full state of every frame as binary
    pub dump_state: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub mode: String,
    pub ladder: Vec<f64>,
    pub alpha_p0: f64,
    pub alpha_eta0: f64,
    /// volume_balanced | literal
    pub gauge: String,
}

/// Coefficients without the final time, which lives in [run].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSection {
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: ParamsSection,
    pub geometry: GeometrySection,
    pub forcing: ForcingSection,
    pub initial: InitialSection,
    pub run: RunSection,
    pub sweep: SweepSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            params: ParamsSection {
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
            },
            geometry: GeometrySection {
                dim: 2,
                n: 8,
                layout: "slab:4".into(),
            },
            forcing: ForcingSection {
                body: "zero".into(),
                body_amplitude: 0.0,
                body_wave: [1.0, 1.0, 1.0],
                body_envelope: "constant".into(),
                heat: "zero".into(),
                heat_center: [0.5, 0.5, 0.5],
                heat_width: 0.25,
                heat_amplitude: 0.0,
                heat_envelope: "constant".into(),
            },
            initial: InitialSection {
                w0_amplitude: [0.0; 3],
                w0_modes: [1, 1, 1],
                v0_amplitude: [0.0; 3],
                v0_modes: [1, 1, 1],
                theta0_amplitude: 0.0,
                theta0_modes: [1, 1, 1],
            },
            run: RunSection {
                mode: "solve".into(),
                dt: 0.02,
                t_final: 1.0,
                output_dir: "out".into(),
                seed: 0,
                battery: 64,
                backend: "direct".into(),
                estimate_form: "sum_of_maxima".into(),
                dump_state: false,
            },
            sweep: SweepSection {
                mode: "incomp_both".into(),
                ladder: vec![1e2, 1e3, 1e4, 1e5],
                alpha_p0: 1.0,
                alpha_eta0: 1.0,
                gauge: "volume_balanced".into(),
            },
        }
    }
}

/// Defaults < file < overrides, merged key by key.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let defaults = Value::try_from(RunConfig::default()).expect("defaults serialize");
    let Value::Table(mut merged) = defaults else {
        unreachable!("config serializes to a table")
    };
    if let Some(path) = path {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let file: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        merge(&mut merged, file, "")?;
    }
    for o in overrides {
        let (key, value) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.clone()))?;
        let (section, field) = key.trim().split_once('.').ok_or_else(|| ConfigError::Override(o.clone()))?;
        let mut patch = Table::new();
        let mut inner = Table::new();
        inner.insert(field.to_string(), parse_value(value.trim()));
        patch.insert(section.to_string(), Value::Table(inner));
        merge(&mut merged, patch, "")?;
    }
    Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(s: &str) -> Value {
    format!("v = {s}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(s.to_string()))
}

fn merge(base: &mut Table, patch: Table, prefix: &str) -> Result<(), ConfigError> {
    for (k, v) in patch {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let Some(slot) = base.get_mut(&k) else {
            return Err(ConfigError::UnknownKey(path));
        };
        match (slot, v) {
            (Value::Table(b), Value::Table(p)) => merge(b, p, &path)?,
            (Value::Table(_), _) => return Err(invalid(&path, "expected a section")),
            (slot, v) => {
                // integers are accepted where floats are expected
                *slot = match (&*slot, v) {
                    (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
                    (Value::Array(a), Value::Array(b)) if a.first().is_some_and(Value::is_float) => {
                        Value::Array(b.into_iter().map(|x| x.as_integer().map_or(x.clone(), |i| Value::Float(i as f64))).collect())
                    }
                    (_, v) => v,
                };
            }
        }
    }
    Ok(())
}

/// What the run section asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Audit,
    Sweep,
    C2,
    Selftest,
}

fn parse_envelope(key: &str, s: &str) -> Result<Envelope, ConfigError> {
    let (kind, arg) = match s.split_once(':') {
        Some((k, a)) => (k, Some(a.trim().parse::<f64>().map_err(|_| invalid(key, format!("bad number in `{s}`")))?)),
        None => (s, None),
    };
    match (kind.trim(), arg) {
        ("constant", None) => Ok(Envelope::Constant),
        ("ramp", Some(duration)) if duration > 0.0 => Ok(Envelope::SmoothRamp { duration }),
        ("sine", Some(omega)) => Ok(Envelope::Sine { omega }),
        ("linear", Some(rate)) => Ok(Envelope::Linear { rate }),
        _ => Err(invalid(key, format!("`{s}` is not constant | ramp:<duration> | sine:<omega> | linear:<rate>"))),
    }
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the effective config, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.output_dir.clear();
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn mode(&self) -> Result<Mode, ConfigError> {
        let m = self.run.mode.trim();
        match m {
            "solve" => Ok(Mode::Solve),
            "audit" => Ok(Mode::Audit),
            "c2" => Ok(Mode::C2),
            "selftest" => Ok(Mode::Selftest),
            "sweep" => Ok(Mode::Sweep),
            _ if m.starts_with("sweep:") => Ok(Mode::Sweep),
            _ => Err(invalid("run.mode", format!("`{m}` is not solve | audit | sweep[:<mode>] | c2 | selftest"))),
        }
    }

    pub fn sweep_mode(&self) -> Result<SweepMode, ConfigError> {
        let name = self.run.mode.strip_prefix("sweep:").unwrap_or(&self.sweep.mode);
        let key = if self.run.mode.starts_with("sweep:") { "run.mode" } else { "sweep.mode" };
        name.parse().map_err(|e: thermofsi_core::limits::LimitError| invalid(key, e))
    }

    pub fn gauge(&self) -> Result<Gauge, ConfigError> {
        self.sweep.gauge.parse().map_err(|_| invalid("sweep.gauge", "expected volume_balanced | literal"))
    }

    pub fn backend(&self) -> Result<Backend, ConfigError> {
        match self.run.backend.as_str() {
            "direct" => Ok(Backend::Direct),
            "iterative" => Ok(Backend::Iterative),
            _ => Err(invalid("run.backend", "expected direct | iterative")),
        }
    }

    pub fn estimate_form(&self) -> Result<EstimateForm, ConfigError> {
        match self.run.estimate_form.as_str() {
            "sum_of_maxima" => Ok(EstimateForm::SumOfMaxima),
            "max_of_sum" => Ok(EstimateForm::MaxOfSum),
            _ => Err(invalid("run.estimate_form", "expected sum_of_maxima | max_of_sum")),
        }
    }

    pub fn params(&self) -> Result<DimensionlessParams, ConfigError> {
        let p = &self.params;
        let d = DimensionlessParams {
            alpha_tau: p.alpha_tau,
            alpha_f: p.alpha_f,
            alpha_nu: p.alpha_nu,
            alpha_eta: p.alpha_eta,
            alpha_lambda: p.alpha_lambda,
            alpha_p: p.alpha_p,
            alpha_mu: p.alpha_mu,
            alpha_theta_s: p.alpha_theta_s,
            alpha_theta_f: p.alpha_theta_f,
            c_pf: p.c_pf,
            c_ps: p.c_ps,
            rho_s: p.rho_s,
            rho_f: p.rho_f,
            kappa_s: p.kappa_s,
            kappa_f: p.kappa_f,
            final_time: self.run.t_final,
        };
        let report = validate(&d);
        if let Some(bad) = report.nonpositive.first() {
            let key = if *bad == "T" { "run.T".to_string() } else { format!("params.{bad}") };
            return Err(invalid(&key, "must be positive and finite"));
        }
        if !(self.run.dt > 0.0 && self.run.dt.is_finite()) {
            return Err(invalid("run.dt", "must be positive"));
        }
        Ok(d)
    }

    pub fn geometry(&self) -> Result<MediumGeometry, ConfigError> {
        let g = &self.geometry;
        let layout: Layout = g.layout.parse().map_err(|e| invalid("geometry.layout", e))?;
        build_geometry(g.dim, g.n, layout).map_err(|e| invalid("geometry", e))
    }

    pub fn forcing(&self) -> Result<ForcingSpec, ConfigError> {
        let f = &self.forcing;
        let body = match f.body.as_str() {
            "zero" => BodyForce::Zero,
            "gravity" => BodyForce::Gravity {
                g: f.body_amplitude,
                envelope: parse_envelope("forcing.body_envelope", &f.body_envelope)?,
            },
            "potential" => BodyForce::Potential {
                amplitude: f.body_amplitude,
                wave: f.body_wave,
                envelope: parse_envelope("forcing.body_envelope", &f.body_envelope)?,
            },
            other => return Err(invalid("forcing.body", format!("`{other}` is not zero | gravity | potential"))),
        };
        let heat = match f.heat.as_str() {
            "zero" => HeatSource::Zero,
            "bump" => {
                if !(f.heat_width > 0.0) {
                    return Err(invalid("forcing.heat_width", "must be positive"));
                }
                HeatSource::Bump {
                    center: f.heat_center,
                    width: f.heat_width,
                    amplitude: f.heat_amplitude,
                    envelope: parse_envelope("forcing.heat_envelope", &f.heat_envelope)?,
                }
            }
            other => return Err(invalid("forcing.heat", format!("`{other}` is not zero | bump"))),
        };
        Ok(ForcingSpec { body, heat })
    }

    pub fn initial(&self) -> InitialData {
        let i = &self.initial;
        let vector = |amplitude: [f64; 3], modes| {
            if amplitude == [0.0; 3] {
                VectorField::Zero
            } else {
                VectorField::Sine { amplitude, modes }
            }
        };
        InitialData {
            w0: vector(i.w0_amplitude, i.w0_modes),
            v0: vector(i.v0_amplitude, i.v0_modes),
            theta0: if i.theta0_amplitude == 0.0 {
                ScalarField::Zero
            } else {
                ScalarField::Sine {
                    amplitude: i.theta0_amplitude,
                    modes: i.theta0_modes,
                }
            },
        }
    }
}
