//! Structured mesh of the unit cube with a cell-wise fluid indicator.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::DimensionlessParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be 1, 2 or 3, got {0}")]
    Dimension(usize),
    #[error("need at least 2 cells per axis, got {0}")]
    TooCoarse(usize),
    #[error("slab index {index} must lie strictly inside 1..{n}")]
    SlabIndex { index: usize, n: usize },
    #[error("inclusion box {0} must be nonempty and strictly interior")]
    InclusionBox(String),
    #[error("layout leaves only one phase")]
    SinglePhase,
    #[error("assumption violated: solid phase must be connected and share a face with the outer boundary")]
    SolidNotAnchored,
    #[error("cannot parse layout `{0}`")]
    Parse(String),
}

/// Per-axis half-open cell index ranges. One entry means the same range on
/// every axis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub ranges: Vec<(usize, usize)>,
}

impl CellBox {
    pub fn uniform(lo: usize, hi: usize) -> Self {
        CellBox {
            ranges: vec![(lo, hi)],
        }
    }

    fn range(&self, axis: usize) -> (usize, usize) {
        if self.ranges.len() == 1 {
            self.ranges[0]
        } else {
            self.ranges[axis]
        }
    }

    fn contains(&self, idx: &[usize; 3], dim: usize) -> bool {
        (0..dim).all(|a| {
            let (lo, hi) = self.range(a);
            idx[a] >= lo && idx[a] < hi
        })
    }

    fn scaled(&self, k: usize) -> Self {
        CellBox {
            ranges: self.ranges.iter().map(|&(a, b)| (a * k, b * k)).collect(),
        }
    }
}

impl fmt::Display for CellBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .ranges
            .iter()
            .map(|(a, b)| format!("{a}:{b}"))
            .collect();
        write!(f, "{}", parts.join(":"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// Cells whose first-axis index is below the given value are solid.
    SolidSlab(usize),
    /// Fluid box inside a solid matrix.
    FluidInclusion(CellBox),
    /// Solid box inside a fluid matrix (the solid never reaches the boundary).
    SolidInclusion(CellBox),
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layout::SolidSlab(k) => write!(f, "slab:{k}"),
            Layout::FluidInclusion(b) => write!(f, "inclusion:{b}"),
            Layout::SolidInclusion(b) => write!(f, "solid-inclusion:{b}"),
        }
    }
}

impl FromStr for Layout {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || GeometryError::Parse(s.to_string());
        let mut parts = s.trim().split(':');
        let kind = parts.next().ok_or_else(err)?;
        let nums: Vec<usize> = parts
            .map(|p| p.trim().parse::<usize>().map_err(|_| err()))
            .collect::<Result<_, _>>()?;
        let boxed = |nums: &[usize]| {
            if nums.is_empty() || nums.len() % 2 != 0 || nums.len() > 6 {
                return Err(err());
            }
            Ok(CellBox {
                ranges: nums.chunks(2).map(|c| (c[0], c[1])).collect(),
            })
        };
        match kind {
            "slab" if nums.len() == 1 => Ok(Layout::SolidSlab(nums[0])),
            "inclusion" => Ok(Layout::FluidInclusion(boxed(&nums)?)),
            "solid-inclusion" => Ok(Layout::SolidInclusion(boxed(&nums)?)),
            _ => Err(err()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediumGeometry {
    dim: usize,
    n: usize,
    layout: Layout,
    /// 1 on fluid cells, 0 on solid cells.
    chi: Vec<u8>,
    interior_index: Vec<Option<usize>>,
    interior_nodes: Vec<usize>,
}

pub fn build_geometry(
    dim: usize,
    n: usize,
    layout: Layout,
) -> Result<MediumGeometry, GeometryError> {
    if !(1..=3).contains(&dim) {
        return Err(GeometryError::Dimension(dim));
    }
    if n < 2 {
        return Err(GeometryError::TooCoarse(n));
    }
    let check_box = |b: &CellBox| -> Result<(), GeometryError> {
        if b.ranges.len() != 1 && b.ranges.len() != dim {
            return Err(GeometryError::InclusionBox(b.to_string()));
        }
        for a in 0..dim {
            let (lo, hi) = b.range(a);
            if lo < 1 || hi > n - 1 || lo >= hi {
                return Err(GeometryError::InclusionBox(b.to_string()));
            }
        }
        Ok(())
    };
    match &layout {
        Layout::SolidSlab(k) => {
            if *k < 1 || *k >= n {
                return Err(GeometryError::SlabIndex { index: *k, n });
            }
        }
        Layout::FluidInclusion(b) | Layout::SolidInclusion(b) => check_box(b)?,
    }
    let n_cells = n.pow(dim as u32);
    let chi: Vec<u8> = (0..n_cells)
        .map(|c| {
            let idx = multi_index(c, n, dim);
            let fluid = match &layout {
                Layout::SolidSlab(k) => idx[0] >= *k,
                Layout::FluidInclusion(b) => b.contains(&idx, dim),
                Layout::SolidInclusion(b) => !b.contains(&idx, dim),
            };
            fluid as u8
        })
        .collect();
    let n_fluid = chi.iter().filter(|&&x| x == 1).count();
    if n_fluid == 0 || n_fluid == n_cells {
        return Err(GeometryError::SinglePhase);
    }
    let n_nodes = (n + 1).pow(dim as u32);
    let mut interior_index = vec![None; n_nodes];
    let mut interior_nodes = Vec::new();
    for (v, slot) in interior_index.iter_mut().enumerate() {
        let idx = multi_index(v, n + 1, dim);
        if (0..dim).all(|a| idx[a] >= 1 && idx[a] < n) {
            *slot = Some(interior_nodes.len());
            interior_nodes.push(v);
        }
    }
    Ok(MediumGeometry {
        dim,
        n,
        layout,
        chi,
        interior_index,
        interior_nodes,
    })
}

pub(crate) fn multi_index(mut flat: usize, side: usize, dim: usize) -> [usize; 3] {
    let mut idx = [0; 3];
    for slot in idx.iter_mut().take(dim) {
        *slot = flat % side;
        flat /= side;
    }
    idx
}

impl MediumGeometry {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn chi(&self) -> &[u8] {
        &self.chi
    }

    pub fn is_fluid(&self, cell: usize) -> bool {
        self.chi[cell] == 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn n_cells(&self) -> usize {
        self.chi.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    pub fn n_nodes(&self) -> usize {
        self.interior_index.len()
    }

    pub fn cell_index(&self, cell: usize) -> [usize; 3] {
        multi_index(cell, self.n, self.dim)
    }

    pub fn node_index(&self, node: usize) -> [usize; 3] {
        multi_index(node, self.n + 1, self.dim)
    }

    pub fn node_coords(&self, node: usize) -> [f64; 3] {
        let idx = self.node_index(node);
        let h = self.h();
        [idx[0] as f64 * h, idx[1] as f64 * h, idx[2] as f64 * h]
    }

    /// Lower corner of a cell.
    pub fn cell_origin(&self, cell: usize) -> [f64; 3] {
        let idx = self.cell_index(cell);
        let h = self.h();
        [idx[0] as f64 * h, idx[1] as f64 * h, idx[2] as f64 * h]
    }

    /// Global node numbers of the 2^d corners, local corner bit `a` set means
    /// the upper node along axis `a`.
    pub fn cell_nodes(&self, cell: usize) -> Vec<usize> {
        let idx = self.cell_index(cell);
        let side = self.n + 1;
        (0..1usize << self.dim)
            .map(|corner| {
                let mut node = 0;
                let mut stride = 1;
                for a in 0..self.dim {
                    node += (idx[a] + ((corner >> a) & 1)) * stride;
                    stride *= side;
                }
                node
            })
            .collect()
    }

    pub fn interior_index(&self, node: usize) -> Option<usize> {
        self.interior_index[node]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn fluid_measure(&self) -> f64 {
        self.chi.iter().filter(|&&x| x == 1).count() as f64 * self.cell_volume()
    }

    pub fn solid_measure(&self) -> f64 {
        self.chi.iter().filter(|&&x| x == 0).count() as f64 * self.cell_volume()
    }

    fn neighbours(&self, cell: usize) -> Vec<usize> {
        let idx = self.cell_index(cell);
        let mut out = Vec::with_capacity(2 * self.dim);
        let mut stride = 1;
        for a in 0..self.dim {
            if idx[a] > 0 {
                out.push(cell - stride);
            }
            if idx[a] + 1 < self.n {
                out.push(cell + stride);
            }
            stride *= self.n;
        }
        out
    }

    fn on_boundary(&self, cell: usize) -> bool {
        let idx = self.cell_index(cell);
        (0..self.dim).any(|a| idx[a] == 0 || idx[a] + 1 == self.n)
    }

    /// Solid cells form one face-connected component and at least one of them
    /// has a face on the outer boundary.
    pub fn solid_anchored(&self) -> bool {
        let solid: Vec<usize> = (0..self.n_cells()).filter(|&c| !self.is_fluid(c)).collect();
        let Some(&start) = solid.first() else {
            return false;
        };
        let mut seen = vec![false; self.n_cells()];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut reached = 0;
        while let Some(c) = queue.pop_front() {
            reached += 1;
            for nb in self.neighbours(c) {
                if !seen[nb] && !self.is_fluid(nb) {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        reached == solid.len() && solid.iter().any(|&c| self.on_boundary(c))
    }

    pub fn require_solid_anchored(&self) -> Result<(), GeometryError> {
        if self.solid_anchored() {
            Ok(())
        } else {
            Err(GeometryError::SolidNotAnchored)
        }
    }

    /// Same layout on a mesh with every cell split into 2^d children.
    pub fn refined(&self) -> Self {
        let layout = match &self.layout {
            Layout::SolidSlab(k) => Layout::SolidSlab(2 * k),
            Layout::FluidInclusion(b) => Layout::FluidInclusion(b.scaled(2)),
            Layout::SolidInclusion(b) => Layout::SolidInclusion(b.scaled(2)),
        };
        build_geometry(self.dim, 2 * self.n, layout).expect("refinement of a valid layout")
    }
}

/// Piecewise-constant material coefficients, one value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFields {
    pub rho_bar: Vec<f64>,
    pub c_p_bar: Vec<f64>,
    pub kappa_bar: Vec<f64>,
    pub alpha_theta_bar: Vec<f64>,
}

pub fn coefficient_fields(g: &MediumGeometry, d: &DimensionlessParams) -> CoefficientFields {
    let pick = |f: f64, s: f64| -> Vec<f64> {
        g.chi()
            .iter()
            .map(|&x| if x == 1 { f } else { s })
            .collect()
    };
    CoefficientFields {
        rho_bar: pick(d.rho_f, d.rho_s),
        c_p_bar: pick(d.c_pf, d.c_ps),
        kappa_bar: pick(d.kappa_f, d.kappa_s),
        alpha_theta_bar: pick(d.alpha_theta_f, d.alpha_theta_s),
    }
}
