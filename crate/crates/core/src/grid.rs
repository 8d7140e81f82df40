//! Cartesian design domain: unit square elements, node numbering, boundary
//! conditions, per-element scalar fields and disc neighborhoods.
//!
//! Elements are numbered row-major over the active cells (x fastest, row 0 at
//! the bottom, y pointing up). Nodes are numbered over the full lattice as
//! `j * (nx + 1) + i`, whether or not an active element touches them.

use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

const NO_ELEMENT: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct CartesianGrid {
    nx: usize,
    ny: usize,
    cell_to_element: Vec<u32>,
    element_cells: Vec<(u32, u32)>,
}

impl CartesianGrid {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        Self::build(nx, ny, None)
    }

    /// `mask` is a row-major `nx * ny` lattice (row 0 at the bottom); `true` marks an active cell.
    pub fn with_mask(nx: usize, ny: usize, mask: &[bool]) -> Result<Self> {
        Self::build(nx, ny, Some(mask))
    }

    fn build(nx: usize, ny: usize, mask: Option<&[bool]>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Grid(format!("dimensions must be positive, got {nx}x{ny}")));
        }
        let cells = nx
            .checked_mul(ny)
            .filter(|&c| c < NO_ELEMENT as usize)
            .ok_or_else(|| Error::Grid(format!("{nx}x{ny} grid is too large")))?;
        if let Some(mask) = mask {
            if mask.len() != cells {
                return Err(Error::Grid(format!(
                    "mask has {} entries, expected {cells}",
                    mask.len()
                )));
            }
        }
        let mut cell_to_element = vec![NO_ELEMENT; cells];
        let mut element_cells = Vec::with_capacity(cells);
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                if mask.map_or(true, |m| m[c]) {
                    cell_to_element[c] = element_cells.len() as u32;
                    element_cells.push((i as u32, j as u32));
                }
            }
        }
        if element_cells.is_empty() {
            return Err(Error::Grid("mask has no active cell".into()));
        }
        Ok(Self {
            nx,
            ny,
            cell_to_element,
            element_cells,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of active elements.
    pub fn num_elements(&self) -> usize {
        self.element_cells.len()
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn is_rectangular(&self) -> bool {
        self.element_cells.len() == self.nx * self.ny
    }

    /// Element index of cell `(i, j)`, or `None` when out of range or masked out.
    #[inline]
    pub fn element_at(&self, i: isize, j: isize) -> Option<usize> {
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny {
            return None;
        }
        let e = self.cell_to_element[j as usize * self.nx + i as usize];
        (e != NO_ELEMENT).then_some(e as usize)
    }

    #[inline]
    pub fn cell_of(&self, e: usize) -> (usize, usize) {
        let (i, j) = self.element_cells[e];
        (i as usize, j as usize)
    }

    #[inline]
    pub fn centroid(&self, e: usize) -> [f64; 2] {
        let (i, j) = self.cell_of(e);
        [i as f64 + 0.5, j as f64 + 0.5]
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    #[inline]
    pub fn node_lattice(&self, node: usize) -> (usize, usize) {
        (node % (self.nx + 1), node / (self.nx + 1))
    }

    #[inline]
    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        let (i, j) = self.node_lattice(node);
        [i as f64, j as f64]
    }

    /// Corner nodes counter-clockwise from the lower-left corner.
    #[inline]
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = self.cell_of(e);
        let n0 = self.node_index(i, j);
        let n3 = self.node_index(i, j + 1);
        [n0, n0 + 1, n3 + 1, n3]
    }

    /// Whether any active element has `node` as a corner.
    pub fn node_is_attached(&self, node: usize) -> bool {
        if node >= self.num_nodes() {
            return false;
        }
        let (i, j) = self.node_lattice(node);
        let (i, j) = (i as isize, j as isize);
        [(i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)]
            .iter()
            .any(|&(ci, cj)| self.element_at(ci, cj).is_some())
    }

    /// Active element whose closed cell contains `(x, y)`.
    pub fn locate(&self, x: f64, y: f64) -> Option<usize> {
        if !(x >= 0.0 && y >= 0.0 && x <= self.nx as f64 && y <= self.ny as f64) {
            return None;
        }
        let candidates = |v: f64, n: usize| {
            let k = (v.floor() as usize).min(n - 1);
            let alt = if v == v.floor() && k > 0 && k as f64 == v { Some(k - 1) } else { None };
            (k, alt)
        };
        let (i, ia) = candidates(x, self.nx);
        let (j, ja) = candidates(y, self.ny);
        for ci in std::iter::once(i).chain(ia) {
            for cj in std::iter::once(j).chain(ja) {
                if let Some(e) = self.element_at(ci as isize, cj as isize) {
                    return Some(e);
                }
            }
        }
        None
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.locate(x, y).is_some()
    }
}

/// Degree-of-freedom direction at a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dir {
    X,
    Y,
}

impl Dir {
    pub fn offset(self) -> usize {
        match self {
            Dir::X => 0,
            Dir::Y => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodalLoad {
    pub node: usize,
    pub fx: f64,
    pub fy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditions {
    pub fixed: Vec<(usize, Dir)>,
    pub loads: Vec<NodalLoad>,
}

impl BoundaryConditions {
    pub fn validate(&self, grid: &CartesianGrid) -> Result<()> {
        if self.fixed.is_empty() {
            return Err(Error::Boundary("no fixed degrees of freedom".into()));
        }
        for &(node, dir) in &self.fixed {
            if !grid.node_is_attached(node) {
                return Err(Error::Boundary(format!(
                    "fixed node {node} ({dir:?}) is not a corner of any active element"
                )));
            }
        }
        for load in &self.loads {
            if !grid.node_is_attached(load.node) {
                return Err(Error::Boundary(format!(
                    "loaded node {} is not a corner of any active element",
                    load.node
                )));
            }
            if !(load.fx.is_finite() && load.fy.is_finite()) {
                return Err(Error::Boundary(format!("non-finite load on node {}", load.node)));
            }
            for (dir, f) in [(Dir::X, load.fx), (Dir::Y, load.fy)] {
                if f != 0.0 && self.fixed.contains(&(load.node, dir)) {
                    return Err(Error::Boundary(format!(
                        "load on node {} acts on a fixed {dir:?} degree of freedom",
                        load.node
                    )));
                }
            }
        }
        Ok(())
    }

    /// Global force vector over all `2 * num_nodes` lattice DOFs.
    pub fn force_vector(&self, grid: &CartesianGrid) -> Vec<f64> {
        let mut f = vec![0.0; 2 * grid.num_nodes()];
        for load in &self.loads {
            f[2 * load.node] += load.fx;
            f[2 * load.node + 1] += load.fy;
        }
        f
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            fixed: self.fixed.clone(),
            loads: self
                .loads
                .iter()
                .map(|l| NodalLoad {
                    node: l.node,
                    fx: l.fx * factor,
                    fy: l.fy * factor,
                })
                .collect(),
        }
    }
}

/// One value per active element.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScalarField(pub Vec<f64>);

impl ScalarField {
    pub fn constant(grid: &CartesianGrid, value: f64) -> Self {
        Self(vec![value; grid.num_elements()])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Deref for ScalarField {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for ScalarField {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for ScalarField {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// How a per-element parameter (alpha, R) is laid out over the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParameterSpec {
    Constant(f64),
    /// Linear in the centroid x-coordinate, from the left edge to the right edge.
    RampX { left: f64, right: f64 },
}

impl ParameterSpec {
    pub fn value_at(&self, x: f64, width: f64) -> f64 {
        match *self {
            ParameterSpec::Constant(v) => v,
            ParameterSpec::RampX { left, right } => left + (right - left) * (x / width),
        }
    }

    pub fn min(&self) -> f64 {
        match *self {
            ParameterSpec::Constant(v) => v,
            ParameterSpec::RampX { left, right } => left.min(right),
        }
    }

    pub fn max(&self) -> f64 {
        match *self {
            ParameterSpec::Constant(v) => v,
            ParameterSpec::RampX { left, right } => left.max(right),
        }
    }

    fn is_finite(&self) -> bool {
        self.min().is_finite() && self.max().is_finite()
    }
}

/// What a parameter field represents, which fixes its admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    /// Open interval (0, 1), e.g. a local volume bound.
    Fraction,
    /// Strictly positive, e.g. a radius.
    Positive,
}

pub fn build_parameter_field(
    grid: &CartesianGrid,
    spec: ParameterSpec,
    role: FieldRole,
) -> Result<ScalarField> {
    if !spec.is_finite() {
        return Err(Error::Parameter(format!("non-finite parameter {spec:?}")));
    }
    let (lo, hi) = (spec.min(), spec.max());
    match role {
        FieldRole::Fraction if !(lo > 0.0 && hi < 1.0) => {
            return Err(Error::Parameter(format!(
                "volume bound must lie in (0, 1), got {spec:?}"
            )))
        }
        FieldRole::Positive if lo <= 0.0 => {
            return Err(Error::Parameter(format!("value must be positive, got {spec:?}")))
        }
        _ => {}
    }
    let width = grid.nx() as f64;
    Ok(ScalarField(
        (0..grid.num_elements())
            .map(|e| spec.value_at(grid.centroid(e)[0], width))
            .collect(),
    ))
}

/// Largest squared integer offset length admitted by radius `r`.
#[inline]
pub(crate) fn radius_key(r: f64) -> u64 {
    (r * r).floor() as u64
}

/// Integer centroid offsets `(di, dj)` with `di² + dj² <= key`.
pub(crate) fn disc_offsets(key: u64) -> Vec<(i32, i32)> {
    let reach = (key as f64).sqrt().floor() as i32;
    let mut out = Vec::new();
    for dj in -reach..=reach {
        for di in -reach..=reach {
            if (di * di + dj * dj) as u64 <= key {
                out.push((di, dj));
            }
        }
    }
    out
}

/// Disc neighborhoods `N_e = { i : |x_i - x_e| <= R_e }` over active elements.
///
/// Every admissible disc is a lattice stencil fixed by `floor(R_e²)`, so the
/// table stores one offset list per distinct radius class instead of an
/// explicit index list per element.
#[derive(Debug, Clone)]
pub struct NeighborhoodTable {
    grid: CartesianGrid,
    stencils: Vec<Vec<(i32, i32)>>,
    keys: Vec<u64>,
    stencil_of: Vec<u32>,
    key_of: Vec<u64>,
    counts: Vec<u32>,
}

impl NeighborhoodTable {
    pub fn build(grid: &CartesianGrid, radius: &ScalarField) -> Result<Self> {
        if radius.len() != grid.num_elements() {
            return Err(Error::Parameter(format!(
                "radius field has {} values for {} elements",
                radius.len(),
                grid.num_elements()
            )));
        }
        if let Some(bad) = radius.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::Parameter(format!("neighborhood radius must be positive, got {bad}")));
        }
        let mut keys: Vec<u64> = Vec::new();
        let mut stencils = Vec::new();
        let mut stencil_of = Vec::with_capacity(radius.len());
        let mut key_of = Vec::with_capacity(radius.len());
        for &r in radius.iter() {
            let key = radius_key(r);
            let idx = match keys.iter().position(|&k| k == key) {
                Some(idx) => idx,
                None => {
                    keys.push(key);
                    stencils.push(disc_offsets(key));
                    keys.len() - 1
                }
            };
            stencil_of.push(idx as u32);
            key_of.push(key);
        }
        let mut table = Self {
            grid: grid.clone(),
            stencils,
            keys,
            stencil_of,
            key_of,
            counts: Vec::new(),
        };
        table.counts = (0..grid.num_elements())
            .map(|e| table.neighbors(e).count() as u32)
            .collect();
        Ok(table)
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    /// `|N_e|`.
    #[inline]
    pub fn count(&self, e: usize) -> usize {
        self.counts[e] as usize
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Elements of `N_e`.
    pub fn neighbors(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = self.grid.cell_of(e);
        let (i, j) = (i as isize, j as isize);
        self.stencils[self.stencil_of[e] as usize]
            .iter()
            .filter_map(move |&(di, dj)| self.grid.element_at(i + di as isize, j + dj as isize))
    }

    /// Elements `e` with `i ∈ N_e`; equals `N_i` when the radius is homogeneous.
    pub fn members_of(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let max_key = self.keys.iter().copied().max().unwrap_or(0);
        let widest = self
            .keys
            .iter()
            .position(|&k| k == max_key)
            .map(|s| &self.stencils[s][..])
            .unwrap_or(&[]);
        let (ci, cj) = self.grid.cell_of(i);
        let (ci, cj) = (ci as isize, cj as isize);
        widest.iter().filter_map(move |&(di, dj)| {
            let e = self.grid.element_at(ci + di as isize, cj + dj as isize)?;
            ((di * di + dj * dj) as u64 <= self.key_of[e]).then_some(e)
        })
    }

    pub fn is_homogeneous(&self) -> bool {
        self.keys.len() == 1
    }
}
