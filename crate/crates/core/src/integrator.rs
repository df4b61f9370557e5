//! Initial projection and Crank–Nicolson time stepping of the Galerkin system.
//!
//! One step solves, for x = (c⁺, b⁺),
//!
//! ```text
//! [ A + dt/2·A1 + dt²/4·A2    −dt/2·A3ᵀ      ] [c⁺]   [r_c]
//! [ −dt/2·B2ᵀ                 −(B + dt/2·B1) ] [b⁺] = [−r_b]
//! ```
//!
//! which is symmetric quasi-definite because B2 = A3ᵀ. The matrix is constant,
//! so it is factored once.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::assembly::AssembledSystem;
use crate::forcing::{ForcingSpec, InitialData};
use crate::linalg::{Gmres, LdlFactor, LinearSolve, SolverError};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error)]
pub enum IntegratorError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("final time {t_final} is not an integer multiple of dt = {dt}")]
    StepCount { t_final: f64, dt: f64 },
    #[error("time step must be nonzero and finite, got {0}")]
    TimeStep(f64),
    #[error("state has lengths ({0}, {1}, {2}) but the system expects ({3}, {3}, {4})")]
    Shape(usize, usize, usize, usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    /// displacement coefficients
    pub a: Vec<f64>,
    /// velocity coefficients
    pub c: Vec<f64>,
    /// temperature coefficients
    pub b: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn zeros(n_w: usize, n_theta: usize) -> Self {
        State {
            a: vec![0.0; n_w],
            c: vec![0.0; n_w],
            b: vec![0.0; n_theta],
            t: 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.a
            .iter()
            .chain(&self.c)
            .chain(&self.b)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.c).chain(&self.b).all(|v| v.is_finite())
    }

    /// Concatenation (a, c, b).
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.a.len() + self.b.len());
        v.extend_from_slice(&self.a);
        v.extend_from_slice(&self.c);
        v.extend_from_slice(&self.b);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory has at least one frame")
    }

    pub fn max_abs(&self) -> f64 {
        self.states.iter().map(State::max_abs).fold(0.0, f64::max)
    }

    /// Little-endian dump: magic `CTFSTRJ1`, u64 n_w, u64 n_theta,
    /// u64 n_frames, f64 dt, then per frame f64 t followed by a, c, b.
    pub fn write_binary<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n_w = self.states.first().map_or(0, |s| s.a.len());
        let n_theta = self.states.first().map_or(0, |s| s.b.len());
        out.write_all(TRAJECTORY_MAGIC)?;
        out.write_all(&(n_w as u64).to_le_bytes())?;
        out.write_all(&(n_theta as u64).to_le_bytes())?;
        out.write_all(&(self.states.len() as u64).to_le_bytes())?;
        out.write_all(&self.dt.to_le_bytes())?;
        for s in &self.states {
            out.write_all(&s.t.to_le_bytes())?;
            for v in s.a.iter().chain(&s.c).chain(&s.b) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut input: R) -> io::Result<Trajectory> {
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != TRAJECTORY_MAGIC {
            return Err(bad("not a trajectory file"));
        }
        let mut word = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> io::Result<u64> {
            input.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let n_w = next_u64(&mut input)? as usize;
        let n_theta = next_u64(&mut input)? as usize;
        let n_frames = next_u64(&mut input)? as usize;
        let read_f64 = |input: &mut R| -> io::Result<f64> {
            let mut w = [0u8; 8];
            input.read_exact(&mut w)?;
            Ok(f64::from_le_bytes(w))
        };
        let dt = read_f64(&mut input)?;
        let mut states = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            let t = read_f64(&mut input)?;
            let mut vec = |n: usize| -> io::Result<Vec<f64>> {
                (0..n).map(|_| read_f64(&mut input)).collect()
            };
            let a = vec(n_w)?;
            let c = vec(n_w)?;
            let b = vec(n_theta)?;
            states.push(State { a, c, b, t });
        }
        Ok(Trajectory { dt, states })
    }
}

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"CTFSTRJ1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Sparse LDLᵀ, factored once.
    #[default]
    Direct,
    /// Restarted GMRES with Jacobi preconditioning.
    Iterative,
}

/// L²-projection of the initial fields onto the discrete spaces.
pub fn project_initial(init: &InitialData, sys: &AssembledSystem) -> Result<State, SolverError> {
    let mut s = State::zeros(sys.n_w(), sys.n_theta());
    let g = sys.geometry();
    let dim = g.dim();
    let rule = crate::quadrature::CellRule::new(dim, sys.options.load_order);
    let shapes: Vec<Vec<f64>> = rule
        .points
        .iter()
        .map(|xi| crate::quadrature::shape(dim, xi).0)
        .collect();
    let h = g.h();
    let vol = g.cell_volume();
    let project_vector = |f: &crate::forcing::VectorField| -> Result<Vec<f64>, SolverError> {
        let mut rhs = vec![0.0; sys.n_w()];
        for cell in 0..g.n_cells() {
            let origin = g.cell_origin(cell);
            let dofs = sys.basis.cell_dofs(cell);
            for (q, xi) in rule.points.iter().enumerate() {
                let x = std::array::from_fn(|a| if a < dim { origin[a] + h * xi[a] } else { 0.0 });
                let v = f.eval(dim, &x);
                let w = rule.weights[q] * vol;
                for (c, dof) in dofs.iter().enumerate() {
                    if let Some(k) = dof {
                        for i in 0..dim {
                            rhs[k * dim + i] += w * v[i] * shapes[q][c];
                        }
                    }
                }
            }
        }
        LdlFactor::new(&sys.gram_w())?.solve(&rhs)
    };
    if !init.w0.is_zero() {
        s.a = project_vector(&init.w0)?;
    }
    if !init.v0.is_zero() {
        s.c = project_vector(&init.v0)?;
    }
    if !init.theta0.is_zero() {
        let mut rhs = vec![0.0; sys.n_theta()];
        for cell in 0..g.n_cells() {
            let origin = g.cell_origin(cell);
            let dofs = sys.basis.cell_dofs(cell);
            for (q, xi) in rule.points.iter().enumerate() {
                let x = std::array::from_fn(|a| if a < dim { origin[a] + h * xi[a] } else { 0.0 });
                let v = init.theta0.eval(dim, &x);
                let w = rule.weights[q] * vol;
                for (c, dof) in dofs.iter().enumerate() {
                    if let Some(k) = dof {
                        rhs[*k] += w * v * shapes[q][c];
                    }
                }
            }
        }
        s.b = LdlFactor::new(&sys.gram_theta())?.solve(&rhs)?;
    }
    Ok(s)
}

/// Initial state of the time-differentiated system for homogeneous data:
/// zero displacement rate, acceleration A⁻¹F̃(0), temperature rate B⁻¹Ψ̃(0).
pub fn derivative_initial_state(sys: &AssembledSystem, forcing: &ForcingSpec) -> Result<State, SolverError> {
    let (f0, psi0) = sys.load_vectors(forcing, 0.0);
    let mut s = State::zeros(sys.n_w(), sys.n_theta());
    if f0.iter().any(|&v| v != 0.0) {
        s.c = LdlFactor::new(&sys.a)?.solve(&f0)?;
    }
    if psi0.iter().any(|&v| v != 0.0) {
        s.b = LdlFactor::new(&sys.b)?.solve(&psi0)?;
    }
    Ok(s)
}

/// Crank–Nicolson stepper with a reusable factorization.
pub struct Stepper<'a> {
    sys: &'a AssembledSystem,
    dt: f64,
    solver: Box<dyn LinearSolve + 'a>,
    /// A − dt/2·A1 − dt²/4·A2
    rhs_c: CsrMatrix,
    /// B − dt/2·B1
    rhs_b: CsrMatrix,
    a3t: CsrMatrix,
    b2t: CsrMatrix,
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a AssembledSystem, dt: f64, backend: Backend) -> Result<Self, IntegratorError> {
        if dt == 0.0 || !dt.is_finite() {
            return Err(IntegratorError::TimeStep(dt));
        }
        let h = 0.5 * dt;
        let q = 0.25 * dt * dt;
        let s = CsrMatrix::combine(&[(1.0, &sys.a), (h, &sys.a1), (q, &sys.a2)]);
        let t = CsrMatrix::combine(&[(1.0, &sys.b), (h, &sys.b1)]);
        let a3t = sys.a3.transpose();
        let b2t = sys.b2.transpose();
        let (nw, nt) = (sys.n_w(), sys.n_theta());
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(s.nnz() + t.nnz() + 2 * a3t.nnz());
        trip.extend(s.triplets());
        trip.extend(a3t.triplets().map(|(i, j, v)| (i, nw + j, -h * v)));
        trip.extend(b2t.triplets().map(|(i, j, v)| (nw + i, j, -h * v)));
        trip.extend(t.triplets().map(|(i, j, v)| (nw + i, nw + j, -v)));
        let k = CsrMatrix::from_triplets(nw + nt, nw + nt, trip);
        let solver: Box<dyn LinearSolve> = match backend {
            Backend::Direct => Box::new(LdlFactor::new(&k)?),
            Backend::Iterative => Box::new(Gmres::new(&k)?),
        };
        Ok(Stepper {
            sys,
            dt,
            solver,
            rhs_c: CsrMatrix::combine(&[(1.0, &sys.a), (-h, &sys.a1), (-q, &sys.a2)]),
            rhs_b: CsrMatrix::combine(&[(1.0, &sys.b), (-h, &sys.b1)]),
            a3t,
            b2t,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance one step; the loads are evaluated at the midpoint time.
    pub fn step(&self, s: &State, forcing: &ForcingSpec) -> Result<State, IntegratorError> {
        let t_half = s.t + 0.5 * self.dt;
        let (f, psi) = if forcing.is_zero() {
            (vec![0.0; self.sys.n_w()], vec![0.0; self.sys.n_theta()])
        } else {
            self.sys.load_vectors(forcing, t_half)
        };
        self.step_with_loads(s, &f, &psi)
    }

    pub fn step_with_loads(&self, s: &State, f: &[f64], psi: &[f64]) -> Result<State, IntegratorError> {
        let (nw, nt) = (self.sys.n_w(), self.sys.n_theta());
        if s.a.len() != nw || s.c.len() != nw || s.b.len() != nt {
            return Err(IntegratorError::Shape(s.a.len(), s.c.len(), s.b.len(), nw, nt));
        }
        let dt = self.dt;
        let h = 0.5 * dt;
        let mut rhs = vec![0.0; nw + nt];
        {
            let (rc, rb) = rhs.split_at_mut(nw);
            self.rhs_c.mul_vec_into(&s.c, rc);
            self.sys.a2.mul_vec_acc(-dt, &s.a, rc);
            self.a3t.mul_vec_acc(h, &s.b, rc);
            rc.iter_mut().zip(f).for_each(|(r, fi)| *r += dt * fi);
            self.rhs_b.mul_vec_into(&s.b, rb);
            self.b2t.mul_vec_acc(-h, &s.c, rb);
            rb.iter_mut().zip(psi).for_each(|(r, p)| *r = -(*r + dt * p));
        }
        let x = self.solver.solve(&rhs)?;
        let c_new = x[..nw].to_vec();
        let b_new = x[nw..].to_vec();
        let a_new = s
            .a
            .iter()
            .zip(&s.c)
            .zip(&c_new)
            .map(|((a, c0), c1)| a + h * (c0 + c1))
            .collect();
        Ok(State {
            a: a_new,
            c: c_new,
            b: b_new,
            t: s.t + dt,
        })
    }
}

/// Number of uniform steps of size `dt` that reach `t_final`.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize, IntegratorError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(IntegratorError::TimeStep(dt));
    }
    let k = (t_final / dt).round();
    if k < 1.0 || (k * dt - t_final).abs() > 1e-9 * t_final.abs().max(dt) {
        return Err(IntegratorError::StepCount { t_final, dt });
    }
    Ok(k as usize)
}

pub fn integrate(
    init: &State,
    sys: &AssembledSystem,
    forcing: &ForcingSpec,
    dt: f64,
    t_final: f64,
) -> Result<Trajectory, IntegratorError> {
    integrate_with(init, sys, forcing, dt, t_final, Backend::Direct)
}

pub fn integrate_with(
    init: &State,
    sys: &AssembledSystem,
    forcing: &ForcingSpec,
    dt: f64,
    t_final: f64,
    backend: Backend,
) -> Result<Trajectory, IntegratorError> {
    let k = step_count(t_final, dt)?;
    let stepper = Stepper::new(sys, dt, backend)?;
    let mut states = Vec::with_capacity(k + 1);
    let mut s = init.clone();
    s.t = 0.0;
    states.push(s);
    for step in 0..k {
        let mut next = stepper.step(states.last().unwrap(), forcing)?;
        // keep the grid exact instead of accumulating rounding in t
        next.t = (step + 1) as f64 * dt;
        states.push(next);
    }
    Ok(Trajectory { dt, states })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{build_basis, build_system, AssemblyOptions};
    use crate::forcing::{BodyForce, Envelope, HeatSource, ScalarField, VectorField};
    use crate::geometry::{build_geometry, coefficient_fields, Layout};
    use crate::params::DimensionlessParams;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn system(dim: usize, n: usize) -> AssembledSystem {
        let g = build_geometry(dim, n, Layout::SolidSlab(n / 2)).unwrap();
        build_system(&g, &DimensionlessParams::unit())
    }

    fn gravity() -> ForcingSpec {
        ForcingSpec {
            body: BodyForce::Gravity {
                g: -1.0,
                envelope: Envelope::SmoothRamp { duration: 0.3 },
            },
            heat: HeatSource::Bump {
                center: [0.4, 0.6, 0.5],
                width: 0.3,
                amplitude: 2.0,
                envelope: Envelope::Sine { omega: 5.0 },
            },
        }
    }

    #[test]
    fn homogeneous_projection_is_exactly_zero() {
        let sys = system(2, 4);
        let s = project_initial(&InitialData::homogeneous(), &sys).unwrap();
        assert_eq!(s, State::zeros(sys.n_w(), sys.n_theta()));
    }

    #[test]
    fn projection_reproduces_discrete_fields() {
        let sys = system(2, 4);
        let nodal: Vec<f64> = (0..sys.n_w()).map(|k| (k as f64 * 0.7).sin()).collect();
        let basis = sys.basis.clone();
        let a = nodal.clone();
        let w0 = VectorField::Custom(Arc::new(move |x| basis.eval_displacement(&a, x)));
        let init = InitialData {
            w0,
            v0: VectorField::Zero,
            theta0: ScalarField::Zero,
        };
        let s = project_initial(&init, &sys).unwrap();
        for (p, q) in s.a.iter().zip(&nodal) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn temperature_projection_matches_dense_least_squares() {
        let sys = system(2, 6);
        let theta0 = ScalarField::Sine {
            amplitude: 1.5,
            modes: [1, 2, 1],
        };
        let init = InitialData {
            w0: VectorField::Zero,
            v0: VectorField::Zero,
            theta0: theta0.clone(),
        };
        let s = project_initial(&init, &sys).unwrap();
        // dense oracle: normal equations built from brute-force basis evaluation
        let n = sys.n_theta();
        let basis = &sys.basis;
        let rule = crate::quadrature::CellRule::new(2, sys.options.load_order);
        let g = sys.geometry();
        let mut gram = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for cell in 0..g.n_cells() {
            let o = g.cell_origin(cell);
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let x = [o[0] + g.h() * xi[0], o[1] + g.h() * xi[1], 0.0];
                let w = w * g.cell_volume();
                let vals: Vec<f64> = (0..n)
                    .map(|k| {
                        let mut e = vec![0.0; n];
                        e[k] = 1.0;
                        basis.temperature_in_cell(&e, cell, xi).0
                    })
                    .collect();
                let f = theta0.eval(2, &x);
                for i in 0..n {
                    rhs[i] += w * f * vals[i];
                    for j in 0..n {
                        gram[(i, j)] += w * vals[i] * vals[j];
                    }
                }
            }
        }
        let want = gram.lu().solve(&rhs).unwrap();
        for k in 0..n {
            assert!((s.b[k] - want[k]).abs() < 1e-9, "{k}: {} vs {}", s.b[k], want[k]);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let sys = system(2, 4);
        let init = State::zeros(sys.n_w(), sys.n_theta());
        let traj = integrate(&init, &sys, &ForcingSpec::zero(), 0.05, 1.0).unwrap();
        assert_eq!(traj.states.len(), 21);
        assert_eq!(traj.max_abs(), 0.0);
    }

    #[test]
    fn rejects_incommensurate_final_time() {
        assert!(matches!(step_count(1.0, 0.3), Err(IntegratorError::StepCount { .. })));
        assert_eq!(step_count(1.0, 0.1).unwrap(), 10);
        assert!(matches!(step_count(1.0, 0.0), Err(IntegratorError::TimeStep(_))));
    }

    #[test]
    fn identity_fixture_is_explicit_midpoint() {
        // A = B = I, everything else zero
        let mut sys = system(1, 4);
        let nw = sys.n_w();
        let nt = sys.n_theta();
        sys.a = CsrMatrix::identity(nw);
        sys.b = CsrMatrix::identity(nt);
        for m in [&mut sys.a1, &mut sys.a2] {
            *m = CsrMatrix::zeros(nw, nw);
        }
        sys.b1 = CsrMatrix::zeros(nt, nt);
        sys.a3 = CsrMatrix::zeros(nt, nw);
        sys.b2 = CsrMatrix::zeros(nw, nt);
        let dt = 0.1;
        let stepper = Stepper::new(&sys, dt, Backend::Direct).unwrap();
        let s = State {
            a: vec![0.3, -0.2, 1.0],
            c: vec![1.0, 2.0, -0.5],
            b: vec![0.1, 0.2, 0.3],
            t: 0.0,
        };
        let f = vec![0.5, -1.0, 2.0];
        let next = stepper.step_with_loads(&s, &f, &[0.0; 3]).unwrap();
        for i in 0..3 {
            let c1 = s.c[i] + dt * f[i];
            assert!((next.c[i] - c1).abs() < 1e-14);
            assert!((next.a[i] - (s.a[i] + dt * (s.c[i] + c1) / 2.0)).abs() < 1e-14);
            assert!((next.b[i] - s.b[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn heat_only_run_decays_in_b_norm() {
        let g = build_geometry(2, 6, Layout::SolidSlab(3)).unwrap();
        let mut d = DimensionlessParams::unit();
        d.alpha_theta_f = 0.0;
        d.alpha_theta_s = 0.0;
        let sys = build_system(&g, &d);
        let init = project_initial(
            &InitialData {
                w0: VectorField::Zero,
                v0: VectorField::Zero,
                theta0: ScalarField::Sine {
                    amplitude: 1.0,
                    modes: [1, 1, 1],
                },
            },
            &sys,
        )
        .unwrap();
        let traj = integrate(&init, &sys, &ForcingSpec::zero(), 0.02, 0.4).unwrap();
        let norms: Vec<f64> = traj.states.iter().map(|s| sys.b.quad_form(&s.b)).collect();
        for w in norms.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(traj.states.iter().all(|s| s.c.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn second_order_self_convergence() {
        let sys = system(2, 4);
        let init = project_initial(
            &InitialData {
                w0: VectorField::Sine {
                    amplitude: [0.1, -0.2, 0.0],
                    modes: [1, 1, 1],
                },
                v0: VectorField::Zero,
                theta0: ScalarField::Zero,
            },
            &sys,
        )
        .unwrap();
        let f = gravity();
        let coarse = integrate(&init, &sys, &f, 0.04, 0.4).unwrap();
        let fine = integrate(&init, &sys, &f, 0.02, 0.4).unwrap();
        let finest = integrate(&init, &sys, &f, 0.005, 0.4).unwrap();
        let err = |t: &Trajectory| {
            let x = t.last().flat();
            let y = finest.last().flat();
            x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let ratio = err(&coarse) / err(&fine);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn time_reversal_without_dissipation() {
        let g = build_geometry(2, 4, Layout::SolidSlab(2)).unwrap();
        let mut d = DimensionlessParams::unit();
        d.alpha_nu = 0.0;
        d.alpha_mu = 0.0;
        d.kappa_f = 0.0;
        d.kappa_s = 0.0;
        let sys = build_system(&g, &d);
        let init = project_initial(
            &InitialData {
                w0: VectorField::Sine {
                    amplitude: [0.3, 0.1, 0.0],
                    modes: [1, 2, 1],
                },
                v0: VectorField::Sine {
                    amplitude: [0.0, 1.0, 0.0],
                    modes: [2, 1, 1],
                },
                theta0: ScalarField::Sine {
                    amplitude: 0.5,
                    modes: [1, 1, 1],
                },
            },
            &sys,
        )
        .unwrap();
        let fwd = Stepper::new(&sys, 0.05, Backend::Direct).unwrap();
        let bwd = Stepper::new(&sys, -0.05, Backend::Direct).unwrap();
        let mut s = init.clone();
        for _ in 0..20 {
            s = fwd.step(&s, &ForcingSpec::zero()).unwrap();
        }
        for _ in 0..20 {
            s = bwd.step(&s, &ForcingSpec::zero()).unwrap();
        }
        let diff = s
            .flat()
            .iter()
            .zip(init.flat())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn direct_and_iterative_backends_agree() {
        let sys = system(2, 4);
        let init = State::zeros(sys.n_w(), sys.n_theta());
        let f = gravity();
        let d = integrate_with(&init, &sys, &f, 0.05, 0.5, Backend::Direct).unwrap();
        let i = integrate_with(&init, &sys, &f, 0.05, 0.5, Backend::Iterative).unwrap();
        let scale = d.max_abs();
        for (x, y) in d.states.iter().zip(&i.states) {
            for (p, q) in x.flat().iter().zip(y.flat()) {
                assert!((p - q).abs() <= 1e-8 * scale);
            }
        }
    }

    #[test]
    fn derivative_initial_state_solves_mass_systems() {
        let sys = system(2, 4);
        let f = ForcingSpec {
            body: BodyForce::Gravity {
                g: 1.0,
                envelope: Envelope::Constant,
            },
            heat: HeatSource::Bump {
                center: [0.5; 3],
                width: 0.2,
                amplitude: 1.0,
                envelope: Envelope::Constant,
            },
        };
        let s = derivative_initial_state(&sys, &f).unwrap();
        let (f0, p0) = sys.load_vectors(&f, 0.0);
        let r = sys.a.mul_vec(&s.c);
        for (x, y) in r.iter().zip(&f0) {
            assert!((x - y).abs() < 1e-12);
        }
        let r = sys.b.mul_vec(&s.b);
        for (x, y) in r.iter().zip(&p0) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(s.a.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn system_options_keep_defaults() {
        let g = build_geometry(1, 4, Layout::SolidSlab(2)).unwrap();
        let d = DimensionlessParams::unit();
        let sys = crate::assembly::assemble_with(
            &g,
            &coefficient_fields(&g, &d),
            &d,
            &build_basis(&g),
            AssemblyOptions::default(),
        );
        assert_eq!(sys.options.order, 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn binary_dump_round_trips(seed in 0u64..1000, frames in 1usize..5, n_w in 0usize..7, n_theta in 0usize..5) {
            let val = |k: usize| ((k as u64 * 2654435761 + seed) % 1000) as f64 / 7.0 - 50.0;
            let states = (0..frames)
                .map(|f| State {
                    a: (0..n_w).map(|k| val(k + 17 * f)).collect(),
                    c: (0..n_w).map(|k| val(k + 31 * f + 3)).collect(),
                    b: (0..n_theta).map(|k| val(k + 13 * f + 5)).collect(),
                    t: f as f64 * 0.25,
                })
                .collect();
            let traj = Trajectory { dt: 0.25, states };
            let mut buf = Vec::new();
            traj.write_binary(&mut buf).unwrap();
            prop_assert_eq!(buf.len(), 40 + frames * 8 * (1 + 2 * n_w + n_theta));
            prop_assert_eq!(&buf[..8], b"CTFSTRJ1");
            let back = Trajectory::read_binary(&buf[..]).unwrap();
            prop_assert_eq!(back, traj);
        }

        #[test]
        fn trajectories_are_linear_in_data(scale in -3.0f64..3.0) {
            let sys = system(1, 6);
            let init = InitialData {
                w0: VectorField::Sine { amplitude: [0.2, 0.0, 0.0], modes: [1, 1, 1] },
                v0: VectorField::Zero,
                theta0: ScalarField::Sine { amplitude: 1.0, modes: [2, 1, 1] },
            };
            let f = gravity();
            let s1 = project_initial(&init, &sys).unwrap();
            let s2 = project_initial(&init.scaled(scale), &sys).unwrap();
            let t1 = integrate(&s1, &sys, &f, 0.05, 0.25).unwrap();
            let t2 = integrate(&s2, &sys, &f.scaled(scale), 0.05, 0.25).unwrap();
            let tol = 1e-9 * t1.max_abs().max(1.0) * scale.abs().max(1.0);
            for (x, y) in t1.states.iter().zip(&t2.states) {
                for (p, q) in x.flat().iter().zip(y.flat()) {
                    prop_assert!((scale * p - q).abs() <= tol);
                }
            }
        }
    }
}
