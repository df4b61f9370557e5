//! Sparse LDLᵀ factorization and a restarted GMRES fallback.

use std::collections::VecDeque;

use thiserror::Error;

use crate::sparse::{norm2, CsrMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("zero or non-finite pivot at row {0}")]
    Pivot(usize),
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("iterative solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("right-hand side length {got} does not match system size {want}")]
    Length { got: usize, want: usize },
}

pub const DEFAULT_TOL: f64 = 1e-10;

/// Anything that solves a fixed linear system for many right-hand sides.
pub trait LinearSolve: Send + Sync {
    fn size(&self) -> usize;
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolverError>;
}

/// Reverse Cuthill–McKee ordering of the symmetrized pattern.
pub fn rcm_ordering(m: &CsrMatrix) -> Vec<usize> {
    let n = m.nrows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in m.triplets() {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let start = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree[v], v))
            .unwrap();
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// LDLᵀ factors of P·M·Pᵀ for a symmetric matrix M without pivoting. Works for
/// definite and quasi-definite matrices.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    d: Vec<f64>,
    matrix: CsrMatrix,
    tol: f64,
}

impl LdlFactor {
    pub fn new(m: &CsrMatrix) -> Result<Self, SolverError> {
        let perm = rcm_ordering(m);
        Self::with_ordering(m, perm)
    }

    pub fn with_ordering(m: &CsrMatrix, perm: Vec<usize>) -> Result<Self, SolverError> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(SolverError::NotSquare(n, m.ncols()));
        }
        let mut inv = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        // upper part of the permuted matrix stored by columns
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in m.triplets() {
            let (pi, pj) = (inv[i], inv[j]);
            if pi <= pj {
                cols[pj].push((pi, v));
            }
        }
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for &(i0, _) in &cols[k] {
                let mut i = i0;
                while i < k && flag[i] != k {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut l_ptr = vec![0; n + 1];
        for k in 0..n {
            l_ptr[k + 1] = l_ptr[k] + lnz[k];
        }
        let total = l_ptr[n];
        let mut l_idx = vec![0; total];
        let mut l_val = vec![0.0; total];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        lnz.iter_mut().for_each(|x| *x = 0);
        flag.iter_mut().for_each(|x| *x = usize::MAX);
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            for &(i0, v) in &cols[k] {
                y[i0] += v;
                let mut len = 0;
                let mut i = i0;
                while i < k && flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            while top < n {
                let i = pattern[top];
                let yi = y[i];
                y[i] = 0.0;
                let p2 = l_ptr[i] + lnz[i];
                for p in l_ptr[i]..p2 {
                    y[l_idx[p]] -= l_val[p] * yi;
                }
                let lki = yi / d[i];
                d[k] -= lki * yi;
                l_idx[p2] = k;
                l_val[p2] = lki;
                lnz[i] += 1;
                top += 1;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(SolverError::Pivot(perm[k]));
            }
        }
        Ok(LdlFactor {
            n,
            perm,
            l_ptr,
            l_idx,
            l_val,
            d,
            matrix: m.clone(),
            tol: DEFAULT_TOL,
        })
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_val.len()
    }

    /// Number of negative pivots (the inertia of the matrix).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    fn solve_once(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for j in 0..n {
            let xj = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                x[self.l_idx[p]] -= self.l_val[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in self.l_ptr[j]..self.l_ptr[j + 1] {
                s -= self.l_val[p] * x[self.l_idx[p]];
            }
            x[j] = s;
        }
        let mut out = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = x[k];
        }
        out
    }
}

fn relative_residual(m: &CsrMatrix, x: &[f64], b: &[f64], r: &mut [f64]) -> f64 {
    m.mul_vec_into(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let bn = norm2(b);
    if bn == 0.0 {
        norm2(r)
    } else {
        norm2(r) / bn
    }
}

impl LinearSolve for LdlFactor {
    fn size(&self) -> usize {
        self.n
    }

    /// Direct solve followed by at most a few refinement sweeps.
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
        if rhs.len() != self.n {
            return Err(SolverError::Length {
                got: rhs.len(),
                want: self.n,
            });
        }
        let mut x = self.solve_once(rhs);
        let mut r = vec![0.0; self.n];
        let mut res = relative_residual(&self.matrix, &x, rhs, &mut r);
        let mut sweeps = 0;
        while res > self.tol && sweeps < 3 {
            let dx = self.solve_once(&r);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            res = relative_residual(&self.matrix, &x, rhs, &mut r);
            sweeps += 1;
        }
        if res > self.tol || !res.is_finite() {
            return Err(SolverError::NoConvergence {
                iterations: sweeps,
                residual: res,
            });
        }
        Ok(x)
    }
}

/// Restarted GMRES with a diagonal (Jacobi) right preconditioner.
#[derive(Debug, Clone)]
pub struct Gmres {
    matrix: CsrMatrix,
    inv_diag: Vec<f64>,
    pub restart: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Gmres {
    pub fn new(m: &CsrMatrix) -> Result<Self, SolverError> {
        if m.nrows() != m.ncols() {
            return Err(SolverError::NotSquare(m.nrows(), m.ncols()));
        }
        let inv_diag = m
            .diagonal()
            .iter()
            .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        Ok(Gmres {
            matrix: m.clone(),
            inv_diag,
            restart: 60,
            max_iter: 20_000,
            tol: DEFAULT_TOL,
        })
    }
}

impl LinearSolve for Gmres {
    fn size(&self) -> usize {
        self.matrix.nrows()
    }

    fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        let n = self.size();
        if b.len() != n {
            return Err(SolverError::Length {
                got: b.len(),
                want: n,
            });
        }
        let bnorm = norm2(b);
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let m = self.restart;
        let mut r = vec![0.0; n];
        let mut iterations = 0;
        let mut res = relative_residual(&self.matrix, &x, b, &mut r);
        while res > self.tol && iterations < self.max_iter {
            let beta = norm2(&r);
            let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
            let mut h = vec![vec![0.0; m]; m + 1];
            let mut cs = vec![0.0; m];
            let mut sn = vec![0.0; m];
            let mut g = vec![0.0; m + 1];
            g[0] = beta;
            let mut k_used = 0;
            let mut w = vec![0.0; n];
            for k in 0..m {
                let z: Vec<f64> = v[k].iter().zip(&self.inv_diag).map(|(a, d)| a * d).collect();
                self.matrix.mul_vec_into(&z, &mut w);
                // modified Gram–Schmidt, twice for stability
                for _ in 0..2 {
                    for (i, vi) in v.iter().enumerate() {
                        let hij: f64 = w.iter().zip(vi).map(|(a, b)| a * b).sum();
                        h[i][k] += hij;
                        w.iter_mut().zip(vi).for_each(|(a, b)| *a -= hij * b);
                    }
                }
                let wn = norm2(&w);
                h[k + 1][k] = wn;
                for i in 0..k {
                    let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                    h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                    h[i][k] = t;
                }
                let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
                if denom == 0.0 {
                    break;
                }
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
                h[k][k] = denom;
                h[k + 1][k] = 0.0;
                g[k + 1] = -sn[k] * g[k];
                g[k] *= cs[k];
                k_used = k + 1;
                iterations += 1;
                if g[k + 1].abs() / bnorm <= 0.1 * self.tol || wn == 0.0 {
                    break;
                }
                v.push(w.iter().map(|a| a / wn).collect());
            }
            let mut y = vec![0.0; k_used];
            for i in (0..k_used).rev() {
                let mut s = g[i];
                for j in i + 1..k_used {
                    s -= h[i][j] * y[j];
                }
                y[i] = s / h[i][i];
            }
            for (j, yj) in y.iter().enumerate() {
                for ((xi, vi), d) in x.iter_mut().zip(&v[j]).zip(&self.inv_diag) {
                    *xi += yj * vi * d;
                }
            }
            res = relative_residual(&self.matrix, &x, b, &mut r);
            if k_used == 0 {
                break;
            }
        }
        if res > self.tol || !res.is_finite() {
            return Err(SolverError::NoConvergence {
                iterations,
                residual: res,
            });
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_2d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let k = i + n * j;
                t.push((k, k, 4.0));
                if i > 0 {
                    t.push((k, k - 1, -1.0));
                }
                if i + 1 < n {
                    t.push((k, k + 1, -1.0));
                }
                if j > 0 {
                    t.push((k, k - n, -1.0));
                }
                if j + 1 < n {
                    t.push((k, k + n, -1.0));
                }
            }
        }
        CsrMatrix::from_triplets(n * n, n * n, t)
    }

    fn quasi_definite(seed: u64, n1: usize, n2: usize) -> CsrMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = n1 + n2;
        let mut m = DMatrix::<f64>::zeros(n, n);
        let g1 = DMatrix::<f64>::from_fn(n1, n1, |_, _| rng.random_range(-1.0..1.0));
        let g2 = DMatrix::<f64>::from_fn(n2, n2, |_, _| rng.random_range(-1.0..1.0));
        let a = &g1 * g1.transpose() + DMatrix::identity(n1, n1);
        let c = &g2 * g2.transpose() + DMatrix::identity(n2, n2);
        let b = DMatrix::<f64>::from_fn(n2, n1, |_, _| rng.random_range(-1.0..1.0));
        m.view_mut((0, 0), (n1, n1)).copy_from(&a);
        m.view_mut((n1, n1), (n2, n2)).copy_from(&(-c));
        m.view_mut((n1, 0), (n2, n1)).copy_from(&b);
        m.view_mut((0, n1), (n1, n2)).copy_from(&b.transpose());
        CsrMatrix::from_dense(&m)
    }

    #[test]
    fn rcm_is_a_permutation() {
        let m = laplacian_2d(5);
        let mut p = rcm_ordering(&m);
        p.sort_unstable();
        assert_eq!(p, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn ldl_solves_laplacian() {
        let m = laplacian_2d(7);
        let f = LdlFactor::new(&m).unwrap();
        assert_eq!(f.negative_pivots(), 0);
        let b: Vec<f64> = (0..49).map(|k| (k as f64).sin()).collect();
        let x = f.solve(&b).unwrap();
        let r = m.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(LdlFactor::new(&m), Err(SolverError::Pivot(_))));
    }

    #[test]
    fn gmres_reports_nonconvergence() {
        let m = laplacian_2d(12);
        let mut g = Gmres::new(&m).unwrap();
        g.max_iter = 3;
        g.restart = 3;
        let b = vec![1.0; 144];
        match g.solve(&b) {
            Err(SolverError::NoConvergence { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-10);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn direct_and_iterative_agree_on_quasi_definite(seed in 0u64..10_000, n1 in 1usize..12, n2 in 1usize..8) {
            let m = quasi_definite(seed, n1, n2);
            let b: Vec<f64> = (0..n1 + n2).map(|k| ((k as u64 + seed) % 7) as f64 - 3.0).collect();
            let direct = LdlFactor::new(&m).unwrap();
            prop_assert_eq!(direct.negative_pivots(), n2);
            let x1 = direct.solve(&b).unwrap();
            let x2 = Gmres::new(&m).unwrap().solve(&b).unwrap();
            let xd = m.to_dense().lu().solve(&DVector::from_vec(b.clone())).unwrap();
            let scale = xd.amax().max(1.0);
            for k in 0..n1 + n2 {
                prop_assert!((x1[k] - xd[k]).abs() < 1e-9 * scale);
                prop_assert!((x2[k] - xd[k]).abs() < 1e-8 * scale);
            }
        }
    }
}
