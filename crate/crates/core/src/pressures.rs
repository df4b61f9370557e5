//! Algebraic pressure reconstruction and phase-mean normalization.
//!
//! Pressures are piecewise constant per cell, built from the cell-mean
//! divergence of the displacement and velocity coefficients.

use rayon::prelude::*;
use thiserror::Error;

use crate::assembly::AssembledSystem;
use crate::geometry::MediumGeometry;
use crate::integrator::Trajectory;

#[derive(Debug, Error, PartialEq)]
pub enum PressureError {
    #[error("phase {0} has zero measure")]
    DegeneratePhase(&'static str),
    #[error("field has {got} cells, geometry has {want}")]
    Shape { got: usize, want: usize },
}

/// Per-frame, per-cell pressure values.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureSet {
    /// fluid pressure p
    pub p: Vec<Vec<f64>>,
    /// ∂p/∂t
    pub p_rate: Vec<Vec<f64>>,
    /// viscous pressure q = p + (α_ν/α_p)·∂p/∂t
    pub q: Vec<Vec<f64>>,
    /// solid pressure π
    pub pi: Vec<Vec<f64>>,
}

impl PressureSet {
    pub fn n_frames(&self) -> usize {
        self.p.len()
    }

    /// q + π, whose two parts have disjoint supports.
    pub fn z(&self, frame: usize) -> Vec<f64> {
        self.q[frame].iter().zip(&self.pi[frame]).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureFields {
    pub times: Vec<f64>,
    /// α_ν/α_p
    pub ratio: f64,
    pub raw: PressureSet,
    pub normalized: PressureSet,
}

/// Raw pressures of every frame together with their normalized counterparts.
pub fn reconstruct(traj: &Trajectory, sys: &AssembledSystem) -> Result<PressureFields, PressureError> {
    let g = sys.geometry();
    let d = &sys.params;
    let ratio = d.alpha_nu / d.alpha_p;
    let frames: Vec<_> = traj
        .states
        .par_iter()
        .map(|s| {
            let div_w = sys.basis.cell_mean_divergence(&s.a);
            let div_c = sys.basis.cell_mean_divergence(&s.c);
            raw_frame(g, d.alpha_p, d.alpha_eta, ratio, &div_w, &div_c)
        })
        .collect();
    let mut raw = PressureSet {
        p: Vec::with_capacity(frames.len()),
        p_rate: Vec::with_capacity(frames.len()),
        q: Vec::with_capacity(frames.len()),
        pi: Vec::with_capacity(frames.len()),
    };
    for (p, p_rate, q, pi) in frames {
        raw.p.push(p);
        raw.p_rate.push(p_rate);
        raw.q.push(q);
        raw.pi.push(pi);
    }
    let normalized = normalize(&raw, g, ratio)?;
    Ok(PressureFields {
        times: traj.times(),
        ratio,
        raw,
        normalized,
    })
}

type Frame = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

/// p, ∂p/∂t, q, π of one frame from per-cell div w and div ∂w/∂t.
pub fn raw_frame(g: &MediumGeometry, alpha_p: f64, alpha_eta: f64, ratio: f64, div_w: &[f64], div_c: &[f64]) -> Frame {
    let n = g.n_cells();
    let mut p = vec![0.0; n];
    let mut p_rate = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut pi = vec![0.0; n];
    for cell in 0..n {
        if g.is_fluid(cell) {
            p[cell] = -alpha_p * div_w[cell];
            p_rate[cell] = -alpha_p * div_c[cell];
            q[cell] = p[cell] + ratio * p_rate[cell];
        } else {
            pi[cell] = -alpha_eta * div_w[cell];
        }
    }
    (p, p_rate, q, pi)
}

/// Subtract the fluid mean from p and ∂p/∂t, the solid mean from π, and rebuild q.
pub fn normalize(set: &PressureSet, g: &MediumGeometry, ratio: f64) -> Result<PressureSet, PressureError> {
    if g.fluid_measure() <= 0.0 {
        return Err(PressureError::DegeneratePhase("fluid"));
    }
    if g.solid_measure() <= 0.0 {
        return Err(PressureError::DegeneratePhase("solid"));
    }
    for f in set.p.iter().chain(&set.pi).chain(&set.p_rate) {
        if f.len() != g.n_cells() {
            return Err(PressureError::Shape {
                got: f.len(),
                want: g.n_cells(),
            });
        }
    }
    let p: Vec<_> = set.p.iter().map(|f| remove_phase_mean(g, f, true)).collect();
    let p_rate: Vec<_> = set.p_rate.iter().map(|f| remove_phase_mean(g, f, true)).collect();
    let pi = set.pi.iter().map(|f| remove_phase_mean(g, f, false)).collect();
    let q = p
        .iter()
        .zip(&p_rate)
        .map(|(a, r)| a.iter().zip(r).map(|(x, y)| x + ratio * y).collect())
        .collect();
    Ok(PressureSet { p, p_rate, q, pi })
}

/// Removes the phase mean; a second pass cleans up the rounding left by the first.
fn remove_phase_mean(g: &MediumGeometry, f: &[f64], fluid: bool) -> Vec<f64> {
    let cells: Vec<usize> = (0..g.n_cells()).filter(|&c| g.is_fluid(c) == fluid).collect();
    let mut out = f.to_vec();
    for _ in 0..2 {
        let mean = cells.iter().map(|&c| out[c]).sum::<f64>() / cells.len() as f64;
        for &c in &cells {
            out[c] -= mean;
        }
    }
    out
}

/// ∫_Ω f for a per-cell field.
pub fn integral(g: &MediumGeometry, f: &[f64]) -> f64 {
    f.iter().sum::<f64>() * g.cell_volume()
}

/// ‖f‖_{L²(Ω)} for a per-cell field.
pub fn l2_norm(g: &MediumGeometry, f: &[f64]) -> f64 {
    (f.iter().map(|v| v * v).sum::<f64>() * g.cell_volume()).sqrt()
}

/// ‖f‖²_{L²(Q)} with the midpoint value of each time step.
pub fn space_time_norm_sq(g: &MediumGeometry, frames: &[Vec<f64>], dt: f64) -> f64 {
    frames
        .windows(2)
        .map(|w| {
            let s: f64 = w[0].iter().zip(&w[1]).map(|(a, b)| (0.5 * (a + b)).powi(2)).sum();
            s * g.cell_volume() * dt
        })
        .sum()
}

/// One row of the per-frame pressure summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureSummary {
    pub t: f64,
    pub l2_p: f64,
    pub l2_q: f64,
    pub l2_pi: f64,
    pub mean_p_tilde: f64,
    pub mean_q_tilde: f64,
    pub mean_pi_tilde: f64,
}

impl PressureFields {
    pub fn summary(&self, g: &MediumGeometry) -> Vec<PressureSummary> {
        (0..self.times.len())
            .map(|k| PressureSummary {
                t: self.times[k],
                l2_p: l2_norm(g, &self.raw.p[k]),
                l2_q: l2_norm(g, &self.raw.q[k]),
                l2_pi: l2_norm(g, &self.raw.pi[k]),
                mean_p_tilde: integral(g, &self.normalized.p[k]) / total_measure(g),
                mean_q_tilde: integral(g, &self.normalized.q[k]) / total_measure(g),
                mean_pi_tilde: integral(g, &self.normalized.pi[k]) / total_measure(g),
            })
            .collect()
    }

    /// Largest |∫f̃| / max(‖f‖, ‖f̃‖) over frames and the three normalized fields.
    pub fn worst_mean_defect(&self, g: &MediumGeometry) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.times.len() {
            for (raw, tilde) in [
                (&self.raw.p[k], &self.normalized.p[k]),
                (&self.raw.q[k], &self.normalized.q[k]),
                (&self.raw.pi[k], &self.normalized.pi[k]),
            ] {
                let scale = l2_norm(g, raw).max(l2_norm(g, tilde));
                let m = integral(g, tilde).abs();
                if m > 0.0 {
                    worst = worst.max(m / scale);
                }
            }
        }
        worst
    }
}

fn total_measure(g: &MediumGeometry) -> f64 {
    g.fluid_measure() + g.solid_measure()
}
