//! Analytic mass-force, heat-source and initial-data presets.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Time profile multiplying a spatial pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Envelope {
    Constant,
    /// (1 − cos(πt/duration))/2 up to `duration`, then 1.
    SmoothRamp { duration: f64 },
    /// sin(ωt)
    Sine { omega: f64 },
    /// rate·t
    Linear { rate: f64 },
}

impl Envelope {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 1.0,
            Envelope::SmoothRamp { duration } => {
                if t >= duration {
                    1.0
                } else {
                    0.5 * (1.0 - (PI * t / duration).cos())
                }
            }
            Envelope::Sine { omega } => (omega * t).sin(),
            Envelope::Linear { rate } => rate * t,
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant => 0.0,
            Envelope::SmoothRamp { duration } => {
                if t >= duration {
                    0.0
                } else {
                    0.5 * PI / duration * (PI * t / duration).sin()
                }
            }
            Envelope::Sine { omega } => omega * (omega * t).cos(),
            Envelope::Linear { rate } => rate,
        }
    }

    pub fn second_rate(&self, t: f64) -> f64 {
        match *self {
            Envelope::Constant | Envelope::Linear { .. } => 0.0,
            Envelope::SmoothRamp { duration } => {
                if t >= duration {
                    0.0
                } else {
                    0.5 * (PI / duration).powi(2) * (PI * t / duration).cos()
                }
            }
            Envelope::Sine { omega } => -omega * omega * (omega * t).sin(),
        }
    }
}

pub type PointFn<T> = Arc<dyn Fn(usize, &[f64; 3], f64) -> T + Send + Sync>;

/// Distributed mass force F (before the α_F ρ̄ factor).
#[derive(Clone)]
pub enum BodyForce {
    Zero,
    /// Φ = g·x_d·envelope(t), with x_d the last coordinate.
    Gravity { g: f64, envelope: Envelope },
    /// Φ = amplitude·envelope(t)·Π cos(π k_a x_a).
    Potential {
        amplitude: f64,
        wave: [f64; 3],
        envelope: Envelope,
    },
    /// Arbitrary field with its time derivative; not assumed to be a gradient.
    Custom { field: PointFn<[f64; 3]>, rate: PointFn<[f64; 3]> },
}

impl fmt::Debug for BodyForce {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BodyForce::Zero => write!(f, "Zero"),
            BodyForce::Gravity { g, envelope } => write!(f, "Gravity({g}, {envelope:?})"),
            BodyForce::Potential {
                amplitude,
                wave,
                envelope,
            } => write!(f, "Potential({amplitude}, {wave:?}, {envelope:?})"),
            BodyForce::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl BodyForce {
    pub fn is_zero(&self) -> bool {
        match self {
            BodyForce::Zero => true,
            BodyForce::Gravity { g, .. } => *g == 0.0,
            BodyForce::Potential { amplitude, .. } => *amplitude == 0.0,
            BodyForce::Custom { .. } => false,
        }
    }

    pub fn is_potential(&self) -> bool {
        !matches!(self, BodyForce::Custom { .. })
    }

    fn potential_parts(&self, dim: usize, x: &[f64; 3]) -> Option<(f64, [f64; 3], Envelope)> {
        match *self {
            BodyForce::Zero => Some((0.0, [0.0; 3], Envelope::Constant)),
            BodyForce::Gravity { g, envelope } => {
                let mut grad = [0.0; 3];
                grad[dim - 1] = g;
                Some((g * x[dim - 1], grad, envelope))
            }
            BodyForce::Potential {
                amplitude,
                wave,
                envelope,
            } => {
                let mut phi = amplitude;
                let mut grad = [amplitude; 3];
                for a in 0..dim {
                    let (s, c) = (PI * wave[a] * x[a]).sin_cos();
                    phi *= c;
                    for (b, gb) in grad.iter_mut().enumerate().take(dim) {
                        *gb *= if a == b { -PI * wave[a] * s } else { c };
                    }
                }
                for gb in grad.iter_mut().skip(dim) {
                    *gb = 0.0;
                }
                Some((phi, grad, envelope))
            }
            BodyForce::Custom { .. } => None,
        }
    }

    pub fn force(&self, dim: usize, x: &[f64; 3], t: f64) -> [f64; 3] {
        match self {
            BodyForce::Custom { field, .. } => field(dim, x, t),
            _ => {
                let (_, grad, env) = self.potential_parts(dim, x).unwrap();
                let e = env.value(t);
                grad.map(|v| v * e)
            }
        }
    }

    pub fn force_rate(&self, dim: usize, x: &[f64; 3], t: f64) -> [f64; 3] {
        match self {
            BodyForce::Custom { rate, .. } => rate(dim, x, t),
            _ => {
                let (_, grad, env) = self.potential_parts(dim, x).unwrap();
                let e = env.rate(t);
                grad.map(|v| v * e)
            }
        }
    }

    pub fn force_second_rate(&self, dim: usize, x: &[f64; 3], t: f64) -> [f64; 3] {
        match self {
            BodyForce::Custom { rate, .. } => difference(|s| rate(dim, x, s), t),
            _ => {
                let (_, grad, env) = self.potential_parts(dim, x).unwrap();
                let e = env.second_rate(t);
                grad.map(|v| v * e)
            }
        }
    }

    /// Φ(x,t) when the force is a gradient.
    pub fn potential(&self, dim: usize, x: &[f64; 3], t: f64) -> Option<f64> {
        self.potential_parts(dim, x).map(|(p, _, env)| p * env.value(t))
    }

    pub fn potential_rate(&self, dim: usize, x: &[f64; 3], t: f64) -> Option<f64> {
        self.potential_parts(dim, x).map(|(p, _, env)| p * env.rate(t))
    }

    /// Same force multiplied by `s`.
    pub fn scaled(&self, s: f64) -> BodyForce {
        match self {
            BodyForce::Zero => BodyForce::Zero,
            BodyForce::Gravity { g, envelope } => BodyForce::Gravity {
                g: g * s,
                envelope: *envelope,
            },
            BodyForce::Potential {
                amplitude,
                wave,
                envelope,
            } => BodyForce::Potential {
                amplitude: amplitude * s,
                wave: *wave,
                envelope: *envelope,
            },
            BodyForce::Custom { field, rate } => {
                let (f, r) = (field.clone(), rate.clone());
                BodyForce::Custom {
                    field: Arc::new(move |d, x, t| f(d, x, t).map(|v| v * s)),
                    rate: Arc::new(move |d, x, t| r(d, x, t).map(|v| v * s)),
                }
            }
        }
    }
}

/// Volumetric heat application Ψ.
#[derive(Clone)]
pub enum HeatSource {
    Zero,
    /// amplitude·envelope(t)·exp(−|x − center|²/width²)
    Bump {
        center: [f64; 3],
        width: f64,
        amplitude: f64,
        envelope: Envelope,
    },
    Custom { field: PointFn<f64>, rate: PointFn<f64> },
}

impl fmt::Debug for HeatSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeatSource::Zero => write!(f, "Zero"),
            HeatSource::Bump {
                center,
                width,
                amplitude,
                envelope,
            } => write!(f, "Bump({center:?}, {width}, {amplitude}, {envelope:?})"),
            HeatSource::Custom { .. } => write!(f, "Custom"),
        }
    }
}

fn gaussian(dim: usize, x: &[f64; 3], center: &[f64; 3], width: f64) -> f64 {
    let r2: f64 = (0..dim).map(|a| (x[a] - center[a]).powi(2)).sum();
    (-r2 / (width * width)).exp()
}

impl HeatSource {
    pub fn is_zero(&self) -> bool {
        match self {
            HeatSource::Zero => true,
            HeatSource::Bump { amplitude, .. } => *amplitude == 0.0,
            HeatSource::Custom { .. } => false,
        }
    }

    pub fn value(&self, dim: usize, x: &[f64; 3], t: f64) -> f64 {
        match self {
            HeatSource::Zero => 0.0,
            HeatSource::Bump {
                center,
                width,
                amplitude,
                envelope,
            } => amplitude * envelope.value(t) * gaussian(dim, x, center, *width),
            HeatSource::Custom { field, .. } => field(dim, x, t),
        }
    }

    pub fn rate(&self, dim: usize, x: &[f64; 3], t: f64) -> f64 {
        match self {
            HeatSource::Zero => 0.0,
            HeatSource::Bump {
                center,
                width,
                amplitude,
                envelope,
            } => amplitude * envelope.rate(t) * gaussian(dim, x, center, *width),
            HeatSource::Custom { rate, .. } => rate(dim, x, t),
        }
    }

    pub fn second_rate(&self, dim: usize, x: &[f64; 3], t: f64) -> f64 {
        match self {
            HeatSource::Zero => 0.0,
            HeatSource::Bump {
                center,
                width,
                amplitude,
                envelope,
            } => amplitude * envelope.second_rate(t) * gaussian(dim, x, center, *width),
            HeatSource::Custom { rate, .. } => difference(|s| [rate(dim, x, s)], t)[0],
        }
    }

    pub fn scaled(&self, s: f64) -> HeatSource {
        match self {
            HeatSource::Zero => HeatSource::Zero,
            HeatSource::Bump {
                center,
                width,
                amplitude,
                envelope,
            } => HeatSource::Bump {
                center: *center,
                width: *width,
                amplitude: amplitude * s,
                envelope: *envelope,
            },
            HeatSource::Custom { field, rate } => {
                let (f, r) = (field.clone(), rate.clone());
                HeatSource::Custom {
                    field: Arc::new(move |d, x, t| s * f(d, x, t)),
                    rate: Arc::new(move |d, x, t| s * r(d, x, t)),
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForcingSpec {
    pub body: BodyForce,
    pub heat: HeatSource,
}

impl ForcingSpec {
    pub fn zero() -> Self {
        ForcingSpec {
            body: BodyForce::Zero,
            heat: HeatSource::Zero,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.body.is_zero() && self.heat.is_zero()
    }

    pub fn scaled(&self, s: f64) -> Self {
        ForcingSpec {
            body: self.body.scaled(s),
            heat: self.heat.scaled(s),
        }
    }

    /// Forcing whose fields are the time derivatives of this one.
    pub fn time_derivative(&self) -> ForcingSpec {
        let body = if self.body.is_zero() {
            BodyForce::Zero
        } else {
            let (b1, b2) = (self.body.clone(), self.body.clone());
            BodyForce::Custom {
                field: Arc::new(move |d, x, t| b1.force_rate(d, x, t)),
                rate: Arc::new(move |d, x, t| b2.force_second_rate(d, x, t)),
            }
        };
        let heat = if self.heat.is_zero() {
            HeatSource::Zero
        } else {
            let (h1, h2) = (self.heat.clone(), self.heat.clone());
            HeatSource::Custom {
                field: Arc::new(move |d, x, t| h1.rate(d, x, t)),
                rate: Arc::new(move |d, x, t| h2.second_rate(d, x, t)),
            }
        };
        ForcingSpec { body, heat }
    }
}

// central difference of a rate, one-sided at t = 0
fn difference<const N: usize>(f: impl Fn(f64) -> [f64; N], t: f64) -> [f64; N] {
    let h = 1e-6;
    let lo = (t - h).max(0.0);
    let (p, m) = (f(t + h), f(lo));
    std::array::from_fn(|k| (p[k] - m[k]) / (t + h - lo))
}

/// Initial vector field.
#[derive(Clone)]
pub enum VectorField {
    Zero,
    /// component i = amplitude[i]·Π sin(π m_a x_a)
    Sine { amplitude: [f64; 3], modes: [u32; 3] },
    Custom(Arc<dyn Fn(&[f64; 3]) -> [f64; 3] + Send + Sync>),
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Zero => write!(f, "Zero"),
            VectorField::Sine { amplitude, modes } => write!(f, "Sine({amplitude:?}, {modes:?})"),
            VectorField::Custom(_) => write!(f, "Custom"),
        }
    }
}

fn sine_product(dim: usize, x: &[f64; 3], modes: &[u32; 3]) -> f64 {
    (0..dim).map(|a| (PI * modes[a] as f64 * x[a]).sin()).product()
}

impl VectorField {
    pub fn is_zero(&self) -> bool {
        match self {
            VectorField::Zero => true,
            VectorField::Sine { amplitude, .. } => amplitude.iter().all(|&a| a == 0.0),
            VectorField::Custom(_) => false,
        }
    }

    pub fn eval(&self, dim: usize, x: &[f64; 3]) -> [f64; 3] {
        match self {
            VectorField::Zero => [0.0; 3],
            VectorField::Sine { amplitude, modes } => {
                let s = sine_product(dim, x, modes);
                let mut out = [0.0; 3];
                for a in 0..dim {
                    out[a] = amplitude[a] * s;
                }
                out
            }
            VectorField::Custom(f) => f(x),
        }
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        match self {
            VectorField::Zero => VectorField::Zero,
            VectorField::Sine { amplitude, modes } => VectorField::Sine {
                amplitude: amplitude.map(|a| a * s),
                modes: *modes,
            },
            VectorField::Custom(f) => {
                let f = f.clone();
                VectorField::Custom(Arc::new(move |x| f(x).map(|v| v * s)))
            }
        }
    }
}

/// Initial scalar field.
#[derive(Clone)]
pub enum ScalarField {
    Zero,
    Sine { amplitude: f64, modes: [u32; 3] },
    Custom(Arc<dyn Fn(&[f64; 3]) -> f64 + Send + Sync>),
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Zero => write!(f, "Zero"),
            ScalarField::Sine { amplitude, modes } => write!(f, "Sine({amplitude}, {modes:?})"),
            ScalarField::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ScalarField {
    pub fn is_zero(&self) -> bool {
        match self {
            ScalarField::Zero => true,
            ScalarField::Sine { amplitude, .. } => *amplitude == 0.0,
            ScalarField::Custom(_) => false,
        }
    }

    pub fn eval(&self, dim: usize, x: &[f64; 3]) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Sine { amplitude, modes } => amplitude * sine_product(dim, x, modes),
            ScalarField::Custom(f) => f(x),
        }
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        match self {
            ScalarField::Zero => ScalarField::Zero,
            ScalarField::Sine { amplitude, modes } => ScalarField::Sine {
                amplitude: amplitude * s,
                modes: *modes,
            },
            ScalarField::Custom(f) => {
                let f = f.clone();
                ScalarField::Custom(Arc::new(move |x| s * f(x)))
            }
        }
    }
}

/// Initial displacement, velocity and temperature.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub w0: VectorField,
    pub v0: VectorField,
    pub theta0: ScalarField,
}

impl InitialData {
    pub fn homogeneous() -> Self {
        InitialData {
            w0: VectorField::Zero,
            v0: VectorField::Zero,
            theta0: ScalarField::Zero,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.w0.is_zero() && self.v0.is_zero() && self.theta0.is_zero()
    }

    pub fn scaled(&self, s: f64) -> Self {
        InitialData {
            w0: self.w0.scaled(s),
            v0: self.v0.scaled(s),
            theta0: self.theta0.scaled(s),
        }
    }
}
