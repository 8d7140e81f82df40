//! Nodal stress recovery, principal decomposition and in-cell interpolation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{shape_gradients, DisplacementField, MaterialModel};
use crate::grid::CartesianGrid;

/// Relative eigenvalue gap below which a tensor is flagged isotropic.
pub const ISOTROPY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StressTensor {
    pub sxx: f64,
    pub syy: f64,
    pub txy: f64,
}

impl StressTensor {
    pub const fn new(sxx: f64, syy: f64, txy: f64) -> Self {
        Self { sxx, syy, txy }
    }

    /// `sxx - syy`, the first degenerate-point residual.
    #[inline]
    pub fn diff(&self) -> f64 {
        self.sxx - self.syy
    }

    pub fn norm(&self) -> f64 {
        (self.sxx * self.sxx + self.syy * self.syy + 2.0 * self.txy * self.txy).sqrt()
    }

    /// Eigenvalue gap `σ1 - σ2`.
    #[inline]
    pub fn anisotropy(&self) -> f64 {
        (self.diff() * self.diff() + 4.0 * self.txy * self.txy).sqrt()
    }

    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            sxx: c * c * self.sxx - 2.0 * s * c * self.txy + s * s * self.syy,
            syy: s * s * self.sxx + 2.0 * s * c * self.txy + c * c * self.syy,
            txy: s * c * (self.sxx - self.syy) + (c * c - s * s) * self.txy,
        }
    }

    fn lerp4(t: &[StressTensor; 4], w: [f64; 4]) -> Self {
        let mut out = StressTensor::default();
        for (t, w) in t.iter().zip(w) {
            out.sxx += w * t.sxx;
            out.syy += w * t.syy;
            out.txy += w * t.txy;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalDecomposition {
    pub sigma1: f64,
    pub sigma2: f64,
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    pub degenerate: bool,
}

/// Eigen-decomposition with `σ1 >= σ2`; `v1` has a nonnegative x component
/// (nonnegative y on ties) and `v2` is `v1` rotated by +90°.
pub fn principal_decomposition(t: &StressTensor) -> PrincipalDecomposition {
    let mean = 0.5 * (t.sxx + t.syy);
    let radius = 0.5 * t.anisotropy();
    let (sigma1, sigma2) = (mean + radius, mean - radius);
    let v1 = if t.txy == 0.0 {
        if t.sxx >= t.syy {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    } else {
        let theta = 0.5 * (2.0 * t.txy).atan2(t.diff());
        let (s, c) = theta.sin_cos();
        if c < 0.0 || (c == 0.0 && s < 0.0) {
            [-c, -s]
        } else {
            [c, s]
        }
    };
    PrincipalDecomposition {
        sigma1,
        sigma2,
        v1,
        v2: [-v1[1], v1[0]],
        degenerate: sigma1 - sigma2 <= ISOTROPY_EPS * (sigma1.abs() + sigma2.abs()).max(1.0),
    }
}

/// Symmetric stress tensors at the grid nodes, bilinear inside each cell.
#[derive(Debug, Clone)]
pub struct NodalTensorField {
    grid: CartesianGrid,
    tensors: Vec<StressTensor>,
}

impl NodalTensorField {
    pub fn new(grid: &CartesianGrid, tensors: Vec<StressTensor>) -> Result<Self> {
        if tensors.len() != grid.num_nodes() {
            return Err(Error::Parameter(format!(
                "{} nodal tensors for {} nodes",
                tensors.len(),
                grid.num_nodes()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            tensors,
        })
    }

    /// Sample an analytic field at the node coordinates.
    pub fn from_fn(grid: &CartesianGrid, f: impl Fn(f64, f64) -> StressTensor) -> Self {
        let tensors = (0..grid.num_nodes())
            .map(|n| {
                let [x, y] = grid.node_coords(n);
                f(x, y)
            })
            .collect();
        Self {
            grid: grid.clone(),
            tensors,
        }
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn tensors(&self) -> &[StressTensor] {
        &self.tensors
    }

    #[inline]
    pub fn node(&self, n: usize) -> StressTensor {
        self.tensors[n]
    }

    /// The four corner tensors of element `e`, counter-clockwise from lower-left.
    #[inline]
    pub fn cell(&self, e: usize) -> [StressTensor; 4] {
        self.grid.element_nodes(e).map(|n| self.tensors[n])
    }

    /// Component-wise bilinear interpolation at domain coordinates.
    pub fn eval(&self, x: f64, y: f64) -> Result<StressTensor> {
        let e = self
            .grid
            .locate(x, y)
            .ok_or_else(|| Error::Parameter(format!("point ({x}, {y}) is outside the active domain")))?;
        let (i, j) = self.grid.cell_of(e);
        Ok(interpolate_cell(&self.cell(e), x - i as f64, y - j as f64))
    }
}

/// Bilinear weights of the four corners at local `(u, v)`.
#[inline]
pub fn bilinear_weights(u: f64, v: f64) -> [f64; 4] {
    [(1.0 - u) * (1.0 - v), u * (1.0 - v), u * v, (1.0 - u) * v]
}

#[inline]
pub fn interpolate_cell(cell: &[StressTensor; 4], u: f64, v: f64) -> StressTensor {
    StressTensor::lerp4(cell, bilinear_weights(u, v))
}

pub fn eval_tensor(field: &NodalTensorField, x: f64, y: f64) -> Result<StressTensor> {
    field.eval(x, y)
}

/// Stress at local point `(u, v)` of element `e` from its nodal displacements.
pub fn element_stress_at(
    grid: &CartesianGrid,
    u: &DisplacementField,
    mat: &MaterialModel,
    e: usize,
    lu: f64,
    lv: f64,
) -> StressTensor {
    let ue = u.element(grid, e);
    let (dx, dy) = shape_gradients(lu, lv);
    let mut strain = [0.0; 3];
    for k in 0..4 {
        strain[0] += dx[k] * ue[2 * k];
        strain[1] += dy[k] * ue[2 * k + 1];
        strain[2] += dy[k] * ue[2 * k] + dx[k] * ue[2 * k + 1];
    }
    let d = mat.plane_stress(mat.e0);
    let s: Vec<f64> = (0..3)
        .map(|r| (0..3).map(|c| d[r][c] * strain[c]).sum())
        .collect();
    StressTensor::new(s[0], s[1], s[2])
}

const CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];

/// Corner evaluation per element, averaged over the incident active elements.
pub fn recover_nodal_stress(
    grid: &CartesianGrid,
    u: &DisplacementField,
    mat: &MaterialModel,
) -> NodalTensorField {
    let nxn = grid.nx() + 1;
    let tensors = (0..grid.num_nodes())
        .into_par_iter()
        .map(|node| {
            let (i, j) = ((node % nxn) as isize, (node / nxn) as isize);
            let mut acc = StressTensor::default();
            let mut count = 0usize;
            for (ci, cj, corner) in [(i - 1, j - 1, 2), (i, j - 1, 3), (i, j, 0), (i - 1, j, 1)] {
                if let Some(e) = grid.element_at(ci, cj) {
                    let (lu, lv) = CORNERS[corner];
                    let s = element_stress_at(grid, u, mat, e, lu, lv);
                    acc.sxx += s.sxx;
                    acc.syy += s.syy;
                    acc.txy += s.txy;
                    count += 1;
                }
            }
            if count > 0 {
                let w = 1.0 / count as f64;
                acc.sxx *= w;
                acc.syy *= w;
                acc.txy *= w;
            }
            acc
        })
        .collect();
    NodalTensorField {
        grid: grid.clone(),
        tensors,
    }
}
