//! Nodal d-linear basis and the Galerkin matrices of the coupled system.
//!
//! Displacement unknowns are numbered node-major, `dof = node·d + component`,
//! over interior nodes only; temperature unknowns are numbered by interior
//! node. Every matrix is kept split by phase with unit coefficients so that a
//! parameter change only recombines sparse matrices.

use std::fs;
use std::io::{self, BufWriter};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::forcing::ForcingSpec;
use crate::geometry::{coefficient_fields, CoefficientFields, MediumGeometry};
use crate::params::DimensionlessParams;
use crate::quadrature::{shape, CellRule};
use crate::sparse::CsrMatrix;

pub const DEFAULT_ORDER: usize = 2;
pub const DEFAULT_LOAD_ORDER: usize = 4;

/// Conforming basis vanishing on the outer boundary.
#[derive(Debug, Clone)]
pub struct Basis {
    geometry: MediumGeometry,
    pub n_w: usize,
    pub n_theta: usize,
}

pub fn build_basis(g: &MediumGeometry) -> Basis {
    let n_int = g.interior_nodes().len();
    Basis {
        geometry: g.clone(),
        n_w: g.dim() * n_int,
        n_theta: n_int,
    }
}

/// Cell containing `x` (upper faces belong to the lower cell at the boundary)
/// and the local coordinates in [0,1]^d.
pub fn locate(g: &MediumGeometry, x: &[f64; 3]) -> (usize, [f64; 3]) {
    let n = g.n();
    let mut cell = 0;
    let mut stride = 1;
    let mut xi = [0.0; 3];
    for a in 0..g.dim() {
        let s = x[a] * n as f64;
        let i = (s.floor().max(0.0) as usize).min(n - 1);
        xi[a] = s - i as f64;
        cell += i * stride;
        stride *= n;
    }
    (cell, xi)
}

impl Basis {
    pub fn geometry(&self) -> &MediumGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    /// Interior-node numbers of the cell corners (None on the boundary).
    pub fn cell_dofs(&self, cell: usize) -> Vec<Option<usize>> {
        self.geometry
            .cell_nodes(cell)
            .into_iter()
            .map(|v| self.geometry.interior_index(v))
            .collect()
    }

    /// Interior-node number of the node with grid index `idx`.
    pub fn interior_index_at(&self, idx: [usize; 3]) -> usize {
        let side = self.geometry.n() + 1;
        let mut v = 0;
        let mut stride = 1;
        for a in idx.iter().take(self.dim()) {
            v += a * stride;
            stride *= side;
        }
        self.geometry.interior_index(v).expect("node is on the boundary")
    }

    /// Position of interior node `k`.
    pub fn node_position(&self, k: usize) -> [f64; 3] {
        self.geometry.node_coords(self.geometry.interior_nodes()[k])
    }

    /// Value and gradient of the displacement at local point `xi` of `cell`.
    pub fn displacement_in_cell(&self, a: &[f64], cell: usize, xi: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let d = self.dim();
        let h = self.geometry.h();
        let (vals, grads) = shape(d, xi);
        let mut u = [0.0; 3];
        let mut du = [[0.0; 3]; 3];
        for (c, dof) in self.cell_dofs(cell).into_iter().enumerate() {
            if let Some(k) = dof {
                for i in 0..d {
                    let coef = a[k * d + i];
                    u[i] += coef * vals[c];
                    for j in 0..d {
                        du[i][j] += coef * grads[c][j] / h;
                    }
                }
            }
        }
        (u, du)
    }

    pub fn temperature_in_cell(&self, b: &[f64], cell: usize, xi: &[f64; 3]) -> (f64, [f64; 3]) {
        let d = self.dim();
        let h = self.geometry.h();
        let (vals, grads) = shape(d, xi);
        let mut t = 0.0;
        let mut dt = [0.0; 3];
        for (c, dof) in self.cell_dofs(cell).into_iter().enumerate() {
            if let Some(k) = dof {
                t += b[k] * vals[c];
                for j in 0..d {
                    dt[j] += b[k] * grads[c][j] / h;
                }
            }
        }
        (t, dt)
    }

    pub fn eval_displacement(&self, a: &[f64], x: &[f64; 3]) -> [f64; 3] {
        let (cell, xi) = locate(&self.geometry, x);
        self.displacement_in_cell(a, cell, &xi).0
    }

    pub fn eval_temperature(&self, b: &[f64], x: &[f64; 3]) -> f64 {
        let (cell, xi) = locate(&self.geometry, x);
        self.temperature_in_cell(b, cell, &xi).0
    }

    /// Nodal interpolant of a vector field.
    pub fn interpolate_vector(&self, f: impl Fn(&[f64; 3]) -> [f64; 3]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; self.n_w];
        for k in 0..self.n_theta {
            let v = f(&self.node_position(k));
            out[k * d..k * d + d].copy_from_slice(&v[..d]);
        }
        out
    }

    pub fn interpolate_scalar(&self, f: impl Fn(&[f64; 3]) -> f64) -> Vec<f64> {
        (0..self.n_theta).map(|k| f(&self.node_position(k))).collect()
    }

    /// Mean of div w over every cell.
    pub fn cell_mean_divergence(&self, a: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let h = self.geometry.h();
        // ∫ ∂_k N_c over the reference cell is ±2^(1−d)
        let weight = 0.5f64.powi(d as i32 - 1);
        (0..self.geometry.n_cells())
            .map(|cell| {
                let mut s = 0.0;
                for (c, dof) in self.cell_dofs(cell).into_iter().enumerate() {
                    if let Some(k) = dof {
                        for i in 0..d {
                            let sign = if (c >> i) & 1 == 1 { 1.0 } else { -1.0 };
                            s += a[k * d + i] * sign * weight;
                        }
                    }
                }
                s / h
            })
            .collect()
    }
}

/// Unit-coefficient matrices split by phase (suffix `_f` fluid, `_s` solid).
#[derive(Debug, Clone)]
pub struct UnitPieces {
    /// ∫ φ·φ
    pub mass_f: CsrMatrix,
    pub mass_s: CsrMatrix,
    /// ∫ ∇φ:∇φ
    pub grad_f: CsrMatrix,
    pub grad_s: CsrMatrix,
    /// ∫ div φ div φ
    pub div_f: CsrMatrix,
    pub div_s: CsrMatrix,
    /// ∫ D(φ):D(φ)
    pub strain_f: CsrMatrix,
    pub strain_s: CsrMatrix,
    /// ∫ ψ ψ
    pub tmass_f: CsrMatrix,
    pub tmass_s: CsrMatrix,
    /// ∫ ∇ψ·∇ψ
    pub tgrad_f: CsrMatrix,
    pub tgrad_s: CsrMatrix,
    /// ∫ ψ_l div φ_j, rows temperature
    pub couple_f: CsrMatrix,
    pub couple_s: CsrMatrix,
    /// ∫ div φ_l ψ_j, rows displacement, integrated separately
    pub couple_t_f: CsrMatrix,
    pub couple_t_s: CsrMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct AssemblyOptions {
    pub order: usize,
    pub load_order: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions {
            order: DEFAULT_ORDER,
            load_order: DEFAULT_LOAD_ORDER,
        }
    }
}

/// Galerkin matrices: `a` (𝔸), `a1`..`a3`, `b` (𝔹), `b1`, `b2`.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub params: DimensionlessParams,
    pub basis: Basis,
    pub coeffs: CoefficientFields,
    pub options: AssemblyOptions,
    pub pieces: UnitPieces,
    pub a: CsrMatrix,
    pub a1: CsrMatrix,
    pub a2: CsrMatrix,
    pub a3: CsrMatrix,
    pub b: CsrMatrix,
    pub b1: CsrMatrix,
    pub b2: CsrMatrix,
}

struct LocalMatrices {
    nc: usize,
    mass: Vec<f64>,
    grad: Vec<f64>,
    div: Vec<f64>,
    strain: Vec<f64>,
    couple: Vec<f64>,
    couple_t: Vec<f64>,
}

impl LocalMatrices {
    fn new(dim: usize, h: f64, order: usize) -> Self {
        let nc = 1 << dim;
        let nv = nc * dim;
        let rule = CellRule::new(dim, order);
        let vol = h.powi(dim as i32);
        let mut m = LocalMatrices {
            nc,
            mass: vec![0.0; nc * nc],
            grad: vec![0.0; nc * nc],
            div: vec![0.0; nv * nv],
            strain: vec![0.0; nv * nv],
            couple: vec![0.0; nc * nv],
            couple_t: vec![0.0; nv * nc],
        };
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let w = w * vol;
            let (n, gref) = shape(dim, xi);
            let g: Vec<[f64; 3]> = gref.iter().map(|g| g.map(|v| v / h)).collect();
            for c1 in 0..nc {
                for c2 in 0..nc {
                    let gg: f64 = (0..dim).map(|a| g[c1][a] * g[c2][a]).sum();
                    m.mass[c1 * nc + c2] += w * n[c1] * n[c2];
                    m.grad[c1 * nc + c2] += w * gg;
                    for i in 0..dim {
                        for k in 0..dim {
                            let r = c1 * dim + i;
                            let s = c2 * dim + k;
                            m.div[r * nv + s] += w * g[c1][i] * g[c2][k];
                            let delta = if i == k { gg } else { 0.0 };
                            m.strain[r * nv + s] += w * 0.5 * (delta + g[c1][k] * g[c2][i]);
                        }
                    }
                    for k in 0..dim {
                        m.couple[c1 * nv + c2 * dim + k] += w * n[c1] * g[c2][k];
                        m.couple_t[(c1 * dim + k) * nc + c2] += w * g[c1][k] * n[c2];
                    }
                }
            }
        }
        m
    }
}

type Trip = Vec<(usize, usize, f64)>;

fn assemble_pieces(basis: &Basis, order: usize) -> UnitPieces {
    let g = basis.geometry();
    let dim = g.dim();
    let loc = LocalMatrices::new(dim, g.h(), order);
    let nc = loc.nc;
    let nv = nc * dim;
    // 16 triplet lists: [mass, grad, div, strain, tmass, tgrad, couple, couple_t] × [fluid, solid]
    let cells: Vec<usize> = (0..g.n_cells()).collect();
    let chunks: Vec<Vec<Trip>> = cells
        .par_chunks(64)
        .map(|chunk| {
            let mut out: Vec<Trip> = vec![Vec::new(); 16];
            for &cell in chunk {
                let off = if g.is_fluid(cell) { 0 } else { 8 };
                let dofs = basis.cell_dofs(cell);
                for (c1, d1) in dofs.iter().enumerate() {
                    let Some(k1) = *d1 else { continue };
                    for (c2, d2) in dofs.iter().enumerate() {
                        let Some(k2) = *d2 else { continue };
                        let m = loc.mass[c1 * nc + c2];
                        let gg = loc.grad[c1 * nc + c2];
                        out[off + 4].push((k1, k2, m));
                        out[off + 5].push((k1, k2, gg));
                        for i in 0..dim {
                            out[off].push((k1 * dim + i, k2 * dim + i, m));
                            out[off + 1].push((k1 * dim + i, k2 * dim + i, gg));
                            for k in 0..dim {
                                let r = c1 * dim + i;
                                let s = c2 * dim + k;
                                out[off + 2].push((k1 * dim + i, k2 * dim + k, loc.div[r * nv + s]));
                                out[off + 3].push((k1 * dim + i, k2 * dim + k, loc.strain[r * nv + s]));
                            }
                        }
                        for k in 0..dim {
                            out[off + 6].push((k1, k2 * dim + k, loc.couple[c1 * nv + c2 * dim + k]));
                            out[off + 7].push((k1 * dim + k, k2, loc.couple_t[(c1 * dim + k) * nc + c2]));
                        }
                    }
                }
            }
            out
        })
        .collect();
    let (nw, nt) = (basis.n_w, basis.n_theta);
    let shapes = [(nw, nw), (nw, nw), (nw, nw), (nw, nw), (nt, nt), (nt, nt), (nt, nw), (nw, nt)];
    let mut mats: Vec<CsrMatrix> = (0..16)
        .into_par_iter()
        .map(|slot| {
            let trip: Trip = chunks.iter().flat_map(|c| c[slot].iter().copied()).collect();
            let (r, c) = shapes[slot % 8];
            CsrMatrix::from_triplets(r, c, trip)
        })
        .collect();
    let mut take = || mats.remove(0);
    let (mass_f, grad_f, div_f, strain_f) = (take(), take(), take(), take());
    let (tmass_f, tgrad_f, couple_f, couple_t_f) = (take(), take(), take(), take());
    let (mass_s, grad_s, div_s, strain_s) = (take(), take(), take(), take());
    let (tmass_s, tgrad_s, couple_s, couple_t_s) = (take(), take(), take(), take());
    UnitPieces {
        mass_f,
        mass_s,
        grad_f,
        grad_s,
        div_f,
        div_s,
        strain_f,
        strain_s,
        tmass_f,
        tmass_s,
        tgrad_f,
        tgrad_s,
        couple_f,
        couple_s,
        couple_t_f,
        couple_t_s,
    }
}

pub fn assemble(g: &MediumGeometry, c: &CoefficientFields, d: &DimensionlessParams, b: &Basis) -> AssembledSystem {
    assemble_with(g, c, d, b, AssemblyOptions::default())
}

pub fn assemble_with(
    g: &MediumGeometry,
    c: &CoefficientFields,
    d: &DimensionlessParams,
    b: &Basis,
    options: AssemblyOptions,
) -> AssembledSystem {
    assert_eq!(g, b.geometry(), "basis built on a different geometry");
    let pieces = assemble_pieces(b, options.order);
    AssembledSystem::from_pieces(pieces, b.clone(), c.clone(), *d, options)
}

/// Geometry, coefficients, basis and matrices in one call.
pub fn build_system(g: &MediumGeometry, d: &DimensionlessParams) -> AssembledSystem {
    let basis = build_basis(g);
    let coeffs = coefficient_fields(g, d);
    assemble(g, &coeffs, d, &basis)
}

impl AssembledSystem {
    fn from_pieces(
        pieces: UnitPieces,
        basis: Basis,
        coeffs: CoefficientFields,
        d: DimensionlessParams,
        options: AssemblyOptions,
    ) -> Self {
        let p = &pieces;
        let a = CsrMatrix::combine(&[(d.alpha_tau * d.rho_f, &p.mass_f), (d.alpha_tau * d.rho_s, &p.mass_s)]);
        let a1 = CsrMatrix::combine(&[(d.alpha_nu, &p.div_f), (d.alpha_mu, &p.strain_f)]);
        let a2 = CsrMatrix::combine(&[
            (d.alpha_p, &p.div_f),
            (d.alpha_eta, &p.div_s),
            (d.alpha_lambda, &p.strain_s),
        ]);
        let a3 = CsrMatrix::combine(&[(d.alpha_theta_f, &p.couple_f), (d.alpha_theta_s, &p.couple_s)]);
        let b = CsrMatrix::combine(&[(d.c_pf, &p.tmass_f), (d.c_ps, &p.tmass_s)]);
        let b1 = CsrMatrix::combine(&[(d.kappa_f, &p.tgrad_f), (d.kappa_s, &p.tgrad_s)]);
        let b2 = CsrMatrix::combine(&[(d.alpha_theta_f, &p.couple_t_f), (d.alpha_theta_s, &p.couple_t_s)]);
        AssembledSystem {
            params: d,
            basis,
            coeffs,
            options,
            pieces,
            a,
            a1,
            a2,
            a3,
            b,
            b1,
            b2,
        }
    }

    /// Same mesh and basis with a different coefficient set.
    pub fn with_params(&self, d: &DimensionlessParams) -> AssembledSystem {
        let coeffs = coefficient_fields(self.basis.geometry(), d);
        Self::from_pieces(self.pieces.clone(), self.basis.clone(), coeffs, *d, self.options)
    }

    pub fn geometry(&self) -> &MediumGeometry {
        self.basis.geometry()
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_w(&self) -> usize {
        self.basis.n_w
    }

    pub fn n_theta(&self) -> usize {
        self.basis.n_theta
    }

    /// Unweighted Gram matrices of the two bases.
    pub fn gram_w(&self) -> CsrMatrix {
        CsrMatrix::combine(&[(1.0, &self.pieces.mass_f), (1.0, &self.pieces.mass_s)])
    }

    pub fn gram_theta(&self) -> CsrMatrix {
        CsrMatrix::combine(&[(1.0, &self.pieces.tmass_f), (1.0, &self.pieces.tmass_s)])
    }

    pub fn named_matrices(&self) -> [(&'static str, &CsrMatrix); 7] {
        [
            ("A", &self.a),
            ("A1", &self.a1),
            ("A2", &self.a2),
            ("A3", &self.a3),
            ("B", &self.b),
            ("B1", &self.b1),
            ("B2", &self.b2),
        ]
    }

    /// Writes one triplet file per matrix into `dir`.
    pub fn dump(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, m) in self.named_matrices() {
            let f = fs::File::create(dir.join(format!("{name}.txt")))?;
            m.write_triplets(BufWriter::new(f))?;
        }
        Ok(())
    }

    /// (F̃(t), Ψ̃(t)): ∫ α_F ρ̄ F·φ_j and ∫ Ψ ψ_j.
    pub fn load_vectors(&self, forcing: &ForcingSpec, t: f64) -> (Vec<f64>, Vec<f64>) {
        load_vectors(self, forcing, t)
    }
}

pub fn load_vectors(sys: &AssembledSystem, forcing: &ForcingSpec, t: f64) -> (Vec<f64>, Vec<f64>) {
    let g = sys.geometry();
    let dim = g.dim();
    let mut f = vec![0.0; sys.n_w()];
    let mut psi = vec![0.0; sys.n_theta()];
    let body = !forcing.body.is_zero();
    let heat = !forcing.heat.is_zero();
    if !body && !heat {
        return (f, psi);
    }
    let rule = CellRule::new(dim, sys.options.load_order);
    let h = g.h();
    let vol = g.cell_volume();
    let shapes: Vec<Vec<f64>> = rule.points.iter().map(|xi| shape(dim, xi).0).collect();
    let alpha_f = sys.params.alpha_f;
    for cell in 0..g.n_cells() {
        let dofs = sys.basis.cell_dofs(cell);
        let origin = g.cell_origin(cell);
        let rho = sys.coeffs.rho_bar[cell];
        for (q, xi) in rule.points.iter().enumerate() {
            let mut x = [0.0; 3];
            for a in 0..dim {
                x[a] = origin[a] + h * xi[a];
            }
            let w = rule.weights[q] * vol;
            let fx = if body { forcing.body.force(dim, &x, t) } else { [0.0; 3] };
            let px = if heat { forcing.heat.value(dim, &x, t) } else { 0.0 };
            for (c, dof) in dofs.iter().enumerate() {
                if let Some(k) = dof {
                    let n = shapes[q][c];
                    for i in 0..dim {
                        f[k * dim + i] += w * alpha_f * rho * fx[i] * n;
                    }
                    psi[*k] += w * px * n;
                }
            }
        }
    }
    (f, psi)
}

/// ∫_Ω f(cell, x) dx by cell-wise Gauss quadrature.
pub fn integrate(g: &MediumGeometry, order: usize, f: impl Fn(usize, &[f64; 3]) -> f64) -> f64 {
    let dim = g.dim();
    let rule = CellRule::new(dim, order);
    let h = g.h();
    let vol = g.cell_volume();
    let mut total = 0.0;
    for cell in 0..g.n_cells() {
        let origin = g.cell_origin(cell);
        let mut s = 0.0;
        for (xi, w) in rule.points.iter().zip(&rule.weights) {
            let mut x = [0.0; 3];
            for a in 0..dim {
                x[a] = origin[a] + h * xi[a];
            }
            s += w * f(cell, &x);
        }
        total += s * vol;
    }
    total
}

/// Discrete Korn constant on the solid phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KornEstimate {
    /// Smallest generalized eigenvalue of the strain form against the H¹ form.
    pub lambda_min: f64,
    /// ‖φ‖_{W¹₂(Ω_s)} ≤ c_k·‖D(φ)‖_{L²(Ω_s)} on the discrete space.
    pub c_k: f64,
    pub n_dofs: usize,
}

/// Displacement unknowns attached to nodes of solid cells.
pub fn solid_dofs(basis: &Basis) -> Vec<usize> {
    let g = basis.geometry();
    let d = g.dim();
    let mut touched = vec![false; basis.n_theta];
    for cell in (0..g.n_cells()).filter(|&c| !g.is_fluid(c)) {
        for k in basis.cell_dofs(cell).into_iter().flatten() {
            touched[k] = true;
        }
    }
    (0..basis.n_theta)
        .filter(|&k| touched[k])
        .flat_map(|k| (0..d).map(move |i| k * d + i))
        .collect()
}

pub fn korn_constant(sys: &AssembledSystem) -> KornEstimate {
    let dofs = solid_dofs(&sys.basis);
    let p = &sys.pieces;
    let strain = p.strain_s.submatrix(&dofs, &dofs).to_dense();
    let h1 = CsrMatrix::combine(&[(1.0, &p.grad_s), (1.0, &p.mass_s)])
        .submatrix(&dofs, &dofs)
        .to_dense();
    let lambda_min = smallest_generalized_eigenvalue(&strain, &h1);
    let c_k = if lambda_min > 1e-12 {
        1.0 / lambda_min.sqrt()
    } else {
        f64::INFINITY
    };
    KornEstimate {
        lambda_min,
        c_k,
        n_dofs: dofs.len(),
    }
}

/// Smallest λ with K x = λ M x for symmetric K and SPD M.
pub fn smallest_generalized_eigenvalue(k: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let chol = m.clone().cholesky().expect("H1 Gram matrix must be SPD");
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .expect("triangular factor is invertible");
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    c.symmetric_eigen().eigenvalues.min()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{BodyForce, Envelope, HeatSource};
    use crate::geometry::{build_geometry, CellBox, Layout};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng) -> DimensionlessParams {
        let mut r = || rng.random_range(0.1..3.0);
        DimensionlessParams {
            alpha_tau: r(),
            alpha_f: r(),
            alpha_nu: r(),
            alpha_eta: r(),
            alpha_lambda: r(),
            alpha_p: r(),
            alpha_mu: r(),
            alpha_theta_s: r(),
            alpha_theta_f: r(),
            c_pf: r(),
            c_ps: r(),
            rho_s: r(),
            rho_f: r(),
            kappa_s: r(),
            kappa_f: r(),
            final_time: 1.0,
        }
    }

    fn slab(dim: usize, n: usize) -> MediumGeometry {
        build_geometry(dim, n, Layout::SolidSlab(n / 2)).unwrap()
    }

    #[test]
    fn basis_counts() {
        let b = build_basis(&slab(1, 4));
        assert_eq!((b.n_w, b.n_theta), (3, 3));
        let b = build_basis(&slab(2, 4));
        assert_eq!((b.n_w, b.n_theta), (18, 9));
        let b = build_basis(&slab(3, 4));
        assert_eq!((b.n_w, b.n_theta), (81, 27));
    }

    #[test]
    fn nodal_property() {
        let b = build_basis(&slab(2, 4));
        for l in 0..b.n_w {
            let mut a = vec![0.0; b.n_w];
            a[l] = 1.0;
            for k in 0..b.n_theta {
                let u = b.eval_displacement(&a, &b.node_position(k));
                for i in 0..2 {
                    let want = if l == k * 2 + i { 1.0 } else { 0.0 };
                    assert_eq!(u[i], want);
                }
            }
            // zero on the boundary
            assert_eq!(b.eval_displacement(&a, &[0.0, 0.37, 0.0]), [0.0; 3]);
            assert_eq!(b.eval_displacement(&a, &[0.61, 1.0, 0.0]), [0.0; 3]);
        }
    }

    #[test]
    fn one_interior_node_conduction_by_hand() {
        // n = 2 in 1D: single hat on [0,1] peaked at 1/2, slope ±2,
        // ∫ κ (ψ')² = κ·4·1 = 4κ = κ·2/h
        let g = build_geometry(1, 2, Layout::SolidSlab(1)).unwrap();
        let mut d = DimensionlessParams::unit();
        d.kappa_f = 1.7;
        d.kappa_s = 1.7;
        let sys = build_system(&g, &d);
        assert_eq!(sys.b1.nrows(), 1);
        assert!((sys.b1.get(0, 0) - 1.7 * 2.0 / 0.5).abs() < 1e-14);
        // ∫ ψ² = 2h/3 = 1/3
        assert!((sys.gram_theta().get(0, 0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn second_difference_stencil_1d() {
        let g = build_geometry(1, 8, Layout::SolidSlab(4)).unwrap();
        let mut d = DimensionlessParams::unit();
        d.kappa_f = 2.0;
        d.kappa_s = 2.0;
        let sys = build_system(&g, &d);
        let h = 1.0 / 8.0;
        for i in 0..7 {
            assert!((sys.b1.get(i, i) - 2.0 * 2.0 / h).abs() < 1e-12);
            if i + 1 < 7 {
                assert!((sys.b1.get(i, i + 1) + 2.0 / h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_thermal_expansion_decouples() {
        let g = slab(2, 4);
        let mut d = DimensionlessParams::unit();
        d.alpha_theta_f = 0.0;
        d.alpha_theta_s = 0.0;
        let sys = build_system(&g, &d);
        assert_eq!(sys.a3.max_abs(), 0.0);
        assert_eq!(sys.b2.max_abs(), 0.0);
    }

    #[test]
    fn kernel_structure() {
        let g = slab(2, 6);
        let mut d = DimensionlessParams::unit();
        d.alpha_p = 0.0;
        d.alpha_eta = 0.0;
        d.alpha_lambda = 0.0;
        let sys = build_system(&g, &d);
        assert_eq!(sys.a2.max_abs(), 0.0);
        // no fluid cell touches the first column of cells: dofs there see no A1
        let sys = build_system(&g, &DimensionlessParams::unit());
        let left = sys.basis.interior_index_at([1, 1, 0]);
        assert_eq!(sys.a1.get(2 * left, 2 * left), 0.0);
    }

    #[test]
    fn pieces_reproduce_affine_divergence() {
        // w = (x, 0) is not in the zero-trace space, so test the cell-mean
        // divergence on the nodal interpolant of a bubble instead
        let g = slab(2, 8);
        let b = build_basis(&g);
        let a = b.interpolate_vector(|x| [x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]), 0.0, 0.0]);
        let div = b.cell_mean_divergence(&a);
        // compare against quadrature of the discrete field
        for cell in [0, 9, 27, 63] {
            let rule = CellRule::new(2, 3);
            let mut s = 0.0;
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let (_, du) = b.displacement_in_cell(&a, cell, xi);
                s += w * (du[0][0] + du[1][1]);
            }
            assert!((div[cell] - s).abs() < 1e-13, "cell {cell}");
        }
    }

    #[test]
    fn korn_constant_is_stable_under_refinement() {
        let mut values = Vec::new();
        for n in [4, 8, 16] {
            let sys = build_system(&slab(2, n), &DimensionlessParams::unit());
            let k = korn_constant(&sys);
            assert!(k.lambda_min > 0.0);
            values.push(k.c_k);
        }
        let (lo, hi) = values.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi / lo < 1.5, "{values:?}");
    }

    #[test]
    fn floating_solid_has_rigid_modes() {
        let g = build_geometry(2, 6, Layout::SolidInclusion(CellBox::uniform(2, 4))).unwrap();
        let sys = build_system(&g, &DimensionlessParams::unit());
        let k = korn_constant(&sys);
        assert!(k.lambda_min < 1e-10, "{k:?}");
        assert!(k.c_k.is_infinite());
    }

    #[test]
    fn uniform_heat_source_load() {
        // Ψ ≡ 1: Ψ̃_j = ∫ψ_j = h^d for every interior node
        let g = slab(2, 4);
        let sys = build_system(&g, &DimensionlessParams::unit());
        let forcing = ForcingSpec {
            body: BodyForce::Zero,
            heat: HeatSource::Custom {
                field: std::sync::Arc::new(|_, _, _| 1.0),
                rate: std::sync::Arc::new(|_, _, _| 0.0),
            },
        };
        let (f, psi) = sys.load_vectors(&forcing, 0.3);
        assert!(f.iter().all(|&v| v == 0.0));
        for v in psi {
            assert!((v - 1.0 / 16.0).abs() < 1e-15);
        }
        let (f, psi) = sys.load_vectors(&ForcingSpec::zero(), 0.0);
        assert!(f.iter().chain(&psi).all(|&v| v == 0.0));
    }

    #[test]
    fn constant_potential_gives_constant_load() {
        let g = slab(2, 4);
        let sys = build_system(&g, &DimensionlessParams::unit());
        let forcing = ForcingSpec {
            body: BodyForce::Gravity {
                g: 2.0,
                envelope: Envelope::Constant,
            },
            heat: HeatSource::Zero,
        };
        let (f0, _) = sys.load_vectors(&forcing, 0.0);
        let (f1, _) = sys.load_vectors(&forcing, 0.7);
        assert_eq!(f0, f1);
        // only the last component is loaded: ∫ α_F ρ̄ g ψ_j = 2 h² per node
        for k in 0..9 {
            assert_eq!(f0[2 * k], 0.0);
            assert!((f0[2 * k + 1] - 2.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn matrix_dump_writes_seven_files() {
        let dir = std::env::temp_dir().join(format!("thermofsi-dump-{}", std::process::id()));
        let sys = build_system(&slab(1, 4), &DimensionlessParams::unit());
        sys.dump(&dir).unwrap();
        for (name, m) in sys.named_matrices() {
            let text = std::fs::read_to_string(dir.join(format!("{name}.txt"))).unwrap();
            assert_eq!(&CsrMatrix::read_triplets(&text).unwrap(), m);
        }
        std::fs::remove_dir_all(dir).unwrap();
    }

    fn geometries() -> impl Strategy<Value = MediumGeometry> {
        prop_oneof![
            (1usize..=3, 2usize..=5).prop_flat_map(|(dim, n)| (Just(dim), Just(n), 1..n)).prop_map(
                |(dim, n, k)| build_geometry(dim, n, Layout::SolidSlab(k)).unwrap()
            ),
            (1usize..=2).prop_map(|dim| build_geometry(dim, 4, Layout::FluidInclusion(CellBox::uniform(1, 3))).unwrap()),
            Just(build_geometry(2, 5, Layout::SolidInclusion(CellBox::uniform(1, 3))).unwrap()),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn coupling_matrices_are_transposes(g in geometries(), seed in 0u64..u64::MAX) {
            let d = random_params(&mut ChaCha8Rng::seed_from_u64(seed));
            let sys = build_system(&g, &d);
            let diff = CsrMatrix::combine(&[(1.0, &sys.b2), (-1.0, &sys.a3.transpose())]);
            prop_assert!(diff.max_abs() <= 1e-12);
        }

        #[test]
        fn symmetry_and_positivity(g in geometries(), seed in 0u64..u64::MAX) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_params(&mut rng);
            let sys = build_system(&g, &d);
            for m in [&sys.a, &sys.a1, &sys.a2, &sys.b, &sys.b1] {
                prop_assert!(m.asymmetry() <= 1e-12 * m.max_abs().max(1e-300));
            }
            for m in [&sys.a, &sys.b] {
                let e = m.to_dense().symmetric_eigen().eigenvalues.min();
                prop_assert!(e > 0.0);
            }
            for m in [&sys.a1, &sys.a2, &sys.b1] {
                for _ in 0..5 {
                    let x: Vec<f64> = (0..m.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
                    prop_assert!(m.quad_form(&x) >= -1e-13 * m.max_abs());
                }
            }
        }

        #[test]
        fn raising_quadrature_order_changes_nothing(g in geometries(), seed in 0u64..u64::MAX) {
            let d = random_params(&mut ChaCha8Rng::seed_from_u64(seed));
            let basis = build_basis(&g);
            let c = coefficient_fields(&g, &d);
            let lo = assemble(&g, &c, &d, &basis);
            let hi = assemble_with(&g, &c, &d, &basis, AssemblyOptions { order: 3, load_order: 4 });
            for ((_, m1), (_, m2)) in lo.named_matrices().iter().zip(hi.named_matrices().iter()) {
                let diff = CsrMatrix::combine(&[(1.0, m1), (-1.0, m2)]);
                prop_assert!(diff.max_abs() <= 1e-12 * m1.max_abs().max(1e-300));
            }
        }

        #[test]
        fn fluid_dissipation_ignores_solid_supported_fields(seed in 0u64..u64::MAX) {
            let g = build_geometry(2, 6, Layout::SolidSlab(3)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_params(&mut rng);
            let sys = build_system(&g, &d);
            // nodes with first index ≤ 2 only touch solid cells
            let mut a = vec![0.0; sys.n_w()];
            for k in 0..sys.n_theta() {
                if sys.basis.node_position(k)[0] < 2.5 / 6.0 {
                    a[2 * k] = rng.random_range(-1.0..1.0);
                    a[2 * k + 1] = rng.random_range(-1.0..1.0);
                }
            }
            prop_assert_eq!(sys.a1.quad_form(&a), 0.0);
            prop_assert!(sys.a2.quad_form(&a) > 0.0);
        }
    }
}
