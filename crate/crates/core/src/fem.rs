//! Plane-stress finite element analysis with bilinear unit-square elements.
//!
//! Local element DOF order is `[u0x, u0y, u1x, u1y, u2x, u2y, u3x, u3y]` with
//! corners counter-clockwise from the lower-left (see
//! [`CartesianGrid::element_nodes`]). Fixed DOFs and nodes without an active
//! element are eliminated from the global system.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{MatMut, Side};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{BoundaryConditions, CartesianGrid, Dir};

pub type ElementMatrix = [[f64; 8]; 8];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialModel {
    pub e0: f64,
    pub emin: f64,
    pub nu: f64,
    pub penal: f64,
}

impl Default for MaterialModel {
    fn default() -> Self {
        Self {
            e0: 1.0,
            emin: 1e-6,
            nu: 0.3,
            penal: 3.0,
        }
    }
}

impl MaterialModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.e0 > 0.0 && self.e0.is_finite()) {
            return Err(Error::Parameter(format!("E0 must be positive, got {}", self.e0)));
        }
        if !(self.emin > 0.0 && self.emin < self.e0) {
            return Err(Error::Parameter(format!(
                "Emin must lie in (0, E0), got {}",
                self.emin
            )));
        }
        if !(self.nu > -1.0 && self.nu < 0.5) {
            return Err(Error::Parameter(format!(
                "Poisson ratio must lie in (-1, 0.5), got {}",
                self.nu
            )));
        }
        if !(self.penal >= 1.0 && self.penal.is_finite()) {
            return Err(Error::Parameter(format!(
                "penalization exponent must be >= 1, got {}",
                self.penal
            )));
        }
        Ok(())
    }

    /// Plane-stress constitutive matrix for modulus `e`, acting on `[exx, eyy, gxy]`.
    pub fn plane_stress(&self, e: f64) -> [[f64; 3]; 3] {
        let f = e / (1.0 - self.nu * self.nu);
        [
            [f, f * self.nu, 0.0],
            [f * self.nu, f, 0.0],
            [0.0, 0.0, f * 0.5 * (1.0 - self.nu)],
        ]
    }
}

/// Modified SIMP interpolation `Emin + rho^p (E0 - Emin)`.
#[inline]
pub fn simp_modulus(rho: f64, mat: &MaterialModel) -> f64 {
    mat.emin + rho.powf(mat.penal) * (mat.e0 - mat.emin)
}

/// Derivative of [`simp_modulus`] with respect to the density.
#[inline]
pub fn simp_modulus_derivative(rho: f64, mat: &MaterialModel) -> f64 {
    mat.penal * rho.powf(mat.penal - 1.0) * (mat.e0 - mat.emin)
}

// Exact integrals over the unit square of products of shape function
// derivatives: XX = dN/dx dN/dx, YY = dN/dy dN/dy, and the x-y cross term is
// the outer product of the column integrals below.
const XX: [[f64; 4]; 4] = [
    [1.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0],
    [-1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0, -1.0 / 6.0],
    [-1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0, -1.0 / 3.0],
    [1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0, 1.0 / 3.0],
];
const YY: [[f64; 4]; 4] = [
    [1.0 / 3.0, 1.0 / 6.0, -1.0 / 6.0, -1.0 / 3.0],
    [1.0 / 6.0, 1.0 / 3.0, -1.0 / 3.0, -1.0 / 6.0],
    [-1.0 / 6.0, -1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
    [-1.0 / 3.0, -1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0],
];
const DX_MEAN: [f64; 4] = [-0.5, 0.5, 0.5, -0.5];
const DY_MEAN: [f64; 4] = [-0.5, -0.5, 0.5, 0.5];

/// Stiffness of a unit-square element with unit Young's modulus.
pub fn element_stiffness_unit(nu: f64) -> Result<ElementMatrix> {
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::Parameter(format!("Poisson ratio must lie in (-1, 0.5), got {nu}")));
    }
    let f = 1.0 / (1.0 - nu * nu);
    let shear = 0.5 * (1.0 - nu);
    let mut k = [[0.0; 8]; 8];
    for i in 0..4 {
        for j in 0..4 {
            let xy = DX_MEAN[i] * DY_MEAN[j];
            let yx = DY_MEAN[i] * DX_MEAN[j];
            k[2 * i][2 * j] = f * (XX[i][j] + shear * YY[i][j]);
            k[2 * i + 1][2 * j + 1] = f * (YY[i][j] + shear * XX[i][j]);
            k[2 * i][2 * j + 1] = f * (nu * xy + shear * yx);
            k[2 * i + 1][2 * j] = f * (nu * yx + shear * xy);
        }
    }
    Ok(k)
}

/// Shape function derivatives `(dN/dx, dN/dy)` at local point `(u, v)` of a unit cell.
#[inline]
pub fn shape_gradients(u: f64, v: f64) -> ([f64; 4], [f64; 4]) {
    (
        [-(1.0 - v), 1.0 - v, v, -v],
        [-(1.0 - u), -u, u, 1.0 - u],
    )
}

#[inline]
fn quad_form(k: &ElementMatrix, ue: &[f64; 8]) -> f64 {
    let mut s = 0.0;
    for a in 0..8 {
        let mut row = 0.0;
        for b in 0..8 {
            row += k[a][b] * ue[b];
        }
        s += ue[a] * row;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    /// Sparse Cholesky factorization.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient { max_iterations: usize },
}

impl SolverKind {
    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Direct => "direct",
            SolverKind::ConjugateGradient { .. } => "cg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystemSummary {
    pub solver: &'static str,
    pub iterations: Option<usize>,
    pub relative_residual: f64,
}

/// Nodal displacements over the full node lattice, `[ux, uy]` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField(pub Vec<f64>);

impl DisplacementField {
    #[inline]
    pub fn node(&self, n: usize) -> [f64; 2] {
        [self.0[2 * n], self.0[2 * n + 1]]
    }

    pub fn element(&self, grid: &CartesianGrid, e: usize) -> [f64; 8] {
        let mut ue = [0.0; 8];
        for (k, &n) in grid.element_nodes(e).iter().enumerate() {
            ue[2 * k] = self.0[2 * n];
            ue[2 * k + 1] = self.0[2 * n + 1];
        }
        ue
    }
}

const NONE: u32 = u32::MAX;

/// Assembled problem structure for one grid and one set of boundary
/// conditions; re-solved for many density fields.
pub struct FeSystem {
    grid: CartesianGrid,
    mat: MaterialModel,
    ke: ElementMatrix,
    solver: SolverKind,
    tolerance: f64,
    free_index: Vec<u32>,
    free_dofs: Vec<u32>,
    force: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    scatter: Vec<[u32; 36]>,
    symbolic: Option<SymbolicLlt<usize>>,
}

impl FeSystem {
    pub fn new(
        grid: &CartesianGrid,
        bc: &BoundaryConditions,
        mat: MaterialModel,
        solver: SolverKind,
    ) -> Result<Self> {
        mat.validate()?;
        bc.validate(grid)?;
        check_rigid_modes(grid, bc)?;
        let ke = element_stiffness_unit(mat.nu)?;
        let ndof = 2 * grid.num_nodes();

        let mut free_index = vec![NONE; ndof];
        let mut attached = vec![false; grid.num_nodes()];
        for e in 0..grid.num_elements() {
            for n in grid.element_nodes(e) {
                attached[n] = true;
            }
        }
        let mut fixed = vec![false; ndof];
        for &(node, dir) in &bc.fixed {
            fixed[2 * node + dir.offset()] = true;
        }
        let mut free_dofs = Vec::new();
        for dof in 0..ndof {
            if attached[dof / 2] && !fixed[dof] {
                free_index[dof] = free_dofs.len() as u32;
                free_dofs.push(dof as u32);
            }
        }
        if free_dofs.is_empty() {
            return Err(Error::Boundary("every degree of freedom is fixed".into()));
        }

        let nf = free_dofs.len();
        let element_free = |e: usize| -> [u32; 8] {
            let mut out = [NONE; 8];
            for (k, &n) in grid.element_nodes(e).iter().enumerate() {
                out[2 * k] = free_index[2 * n];
                out[2 * k + 1] = free_index[2 * n + 1];
            }
            out
        };

        // Lower-triangular CSC pattern.
        let mut columns: Vec<Vec<u32>> = vec![Vec::new(); nf];
        for e in 0..grid.num_elements() {
            let dofs = element_free(e);
            for &a in &dofs {
                for &b in &dofs {
                    if a != NONE && b != NONE && a >= b {
                        columns[b as usize].push(a);
                    }
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(nf + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut columns {
            col.sort_unstable();
            col.dedup();
            row_idx.extend(col.iter().map(|&r| r as usize));
            col_ptr.push(row_idx.len());
        }
        drop(columns);

        let scatter = (0..grid.num_elements())
            .map(|e| {
                let dofs = element_free(e);
                let mut pos = [NONE; 36];
                let mut t = 0;
                for a in 0..8 {
                    for b in a..8 {
                        let (ga, gb) = (dofs[a], dofs[b]);
                        if ga != NONE && gb != NONE {
                            let (r, c) = (ga.max(gb) as usize, ga.min(gb) as usize);
                            let rows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
                            let k = rows.binary_search(&r).expect("pattern covers element");
                            pos[t] = (col_ptr[c] + k) as u32;
                        }
                        t += 1;
                    }
                }
                pos
            })
            .collect();

        Ok(Self {
            grid: grid.clone(),
            mat,
            ke,
            solver,
            tolerance: 1e-8,
            free_index,
            free_dofs,
            force: bc.force_vector(grid),
            col_ptr,
            row_idx,
            scatter,
            symbolic: None,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn material(&self) -> &MaterialModel {
        &self.mat
    }

    pub fn unit_stiffness(&self) -> &ElementMatrix {
        &self.ke
    }

    pub fn num_free_dofs(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn force(&self) -> &[f64] {
        &self.force
    }

    pub fn replace_loads(&mut self, bc: &BoundaryConditions) {
        self.force = bc.force_vector(&self.grid);
    }

    /// Solve `K(rho) U = F`.
    pub fn solve(&mut self, rho: &[f64]) -> Result<(DisplacementField, LinearSystemSummary)> {
        if rho.len() != self.grid.num_elements() {
            return Err(Error::Parameter(format!(
                "density field has {} values for {} elements",
                rho.len(),
                self.grid.num_elements()
            )));
        }
        let moduli: Vec<f64> = rho.iter().map(|&r| simp_modulus(r, &self.mat)).collect();
        self.solve_moduli(&moduli)
    }

    /// Solve with explicit per-element Young's moduli.
    pub fn solve_moduli(&mut self, moduli: &[f64]) -> Result<(DisplacementField, LinearSystemSummary)> {
        let f: Vec<f64> = self.free_dofs.iter().map(|&d| self.force[d as usize]).collect();
        let fnorm = norm(&f);
        if fnorm == 0.0 {
            return Ok((
                DisplacementField(vec![0.0; self.force.len()]),
                LinearSystemSummary {
                    solver: self.solver.name(),
                    iterations: Some(0),
                    relative_residual: 0.0,
                },
            ));
        }
        let (x, iterations) = match self.solver {
            SolverKind::Direct => (self.solve_direct(moduli, &f)?, None),
            SolverKind::ConjugateGradient { max_iterations } => {
                let (x, it) = self.solve_cg(moduli, &f, max_iterations)?;
                (x, Some(it))
            }
        };
        let residual = self.relative_residual(moduli, &x, &f, fnorm);
        if !(residual <= self.tolerance) {
            return Err(Error::Solver(format!(
                "relative residual {residual:.3e} exceeds tolerance {:.1e}",
                self.tolerance
            )));
        }
        let mut u = vec![0.0; self.force.len()];
        for (k, &d) in self.free_dofs.iter().enumerate() {
            u[d as usize] = x[k];
        }
        Ok((
            DisplacementField(u),
            LinearSystemSummary {
                solver: self.solver.name(),
                iterations,
                relative_residual: residual,
            },
        ))
    }

    fn solve_direct(&mut self, moduli: &[f64], f: &[f64]) -> Result<Vec<f64>> {
        let nf = self.free_dofs.len();
        let mut vals = vec![0.0; self.row_idx.len()];
        for (e, pos) in self.scatter.iter().enumerate() {
            let m = moduli[e];
            let mut t = 0;
            for a in 0..8 {
                for b in a..8 {
                    let p = pos[t];
                    if p != NONE {
                        vals[p as usize] += m * self.ke[a][b];
                    }
                    t += 1;
                }
            }
        }
        let sym = SymbolicSparseColMatRef::new_checked(nf, nf, &self.col_ptr, None, &self.row_idx);
        if self.symbolic.is_none() {
            let s = SymbolicLlt::try_new(sym, Side::Lower)
                .map_err(|e| Error::Solver(format!("symbolic factorization: {e:?}")))?;
            self.symbolic = Some(s);
        }
        let symbolic = self.symbolic.clone().expect("symbolic factorization");
        let llt = Llt::try_new_with_symbolic(symbolic, SparseColMatRef::new(sym, &vals), Side::Lower)
            .map_err(|e| Error::Solver(format!("stiffness matrix is singular ({e:?})")))?;
        let mut x = f.to_vec();
        llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, nf, 1));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("non-finite displacement; system is singular".into()));
        }
        // One step of iterative refinement keeps the residual contract under
        // strong stiffness contrast.
        let r = self.residual_vector(moduli, &x, f);
        let mut dx = r;
        llt.solve_in_place(MatMut::from_column_major_slice_mut(&mut dx, nf, 1));
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
        Ok(x)
    }

    fn solve_cg(&self, moduli: &[f64], f: &[f64], max_iterations: usize) -> Result<(Vec<f64>, usize)> {
        let nf = f.len();
        let diag = self.diagonal(moduli);
        let fnorm = norm(f);
        let mut x = vec![0.0; nf];
        let mut r = f.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for it in 0..max_iterations {
            if norm(&r) <= 0.1 * self.tolerance * fnorm {
                return Ok((x, it));
            }
            let q = self.apply(moduli, &p);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::Solver("stiffness matrix is not positive definite".into()));
            }
            let alpha = rz / pq;
            x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
            r.par_iter_mut().zip(&q).for_each(|(r, q)| *r -= alpha * q);
            z.par_iter_mut()
                .zip(&r)
                .zip(&diag)
                .for_each(|((z, r), d)| *z = r / d);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
        }
        if norm(&r) <= 0.1 * self.tolerance * fnorm {
            return Ok((x, max_iterations));
        }
        Err(Error::Solver(format!(
            "conjugate gradients did not converge in {max_iterations} iterations"
        )))
    }

    fn diagonal(&self, moduli: &[f64]) -> Vec<f64> {
        let mut diag = vec![0.0; self.free_dofs.len()];
        for e in 0..self.grid.num_elements() {
            for (k, &n) in self.grid.element_nodes(e).iter().enumerate() {
                for d in 0..2 {
                    let g = self.free_index[2 * n + d];
                    if g != NONE {
                        diag[g as usize] += moduli[e] * self.ke[2 * k + d][2 * k + d];
                    }
                }
            }
        }
        diag
    }

    /// Matrix-free product `K x` on the free DOFs.
    fn apply(&self, moduli: &[f64], x: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        let nxn = grid.nx() + 1;
        self.free_dofs
            .par_iter()
            .map(|&dof| {
                let dof = dof as usize;
                let node = dof / 2;
                let row_off = dof % 2;
                let (i, j) = (node % nxn, node / nxn);
                let mut acc = 0.0;
                // Incident cells and the local corner index of `node` in each.
                for (ci, cj, corner) in [
                    (i as isize - 1, j as isize - 1, 2usize),
                    (i as isize, j as isize - 1, 3),
                    (i as isize, j as isize, 0),
                    (i as isize - 1, j as isize, 1),
                ] {
                    let Some(e) = grid.element_at(ci, cj) else { continue };
                    let krow = &self.ke[2 * corner + row_off];
                    let mut s = 0.0;
                    for (k, &n) in grid.element_nodes(e).iter().enumerate() {
                        for d in 0..2 {
                            let g = self.free_index[2 * n + d];
                            if g != NONE {
                                s += krow[2 * k + d] * x[g as usize];
                            }
                        }
                    }
                    acc += moduli[e] * s;
                }
                acc
            })
            .collect()
    }

    fn residual_vector(&self, moduli: &[f64], x: &[f64], f: &[f64]) -> Vec<f64> {
        let kx = self.apply(moduli, x);
        f.iter().zip(&kx).map(|(f, k)| f - k).collect()
    }

    fn relative_residual(&self, moduli: &[f64], x: &[f64], f: &[f64], fnorm: f64) -> f64 {
        norm(&self.residual_vector(moduli, x, f)) / fnorm
    }

    /// `c = ½ Fᵀ U`.
    pub fn compliance(&self, u: &DisplacementField) -> f64 {
        0.5 * self
            .force
            .iter()
            .zip(&u.0)
            .filter(|(f, _)| **f != 0.0)
            .map(|(f, u)| f * u)
            .sum::<f64>()
    }

    /// `u_eᵀ k̂ u_e` with the unit-modulus element stiffness, for every element.
    pub fn unit_element_energies(&self, u: &DisplacementField) -> Vec<f64> {
        (0..self.grid.num_elements())
            .into_par_iter()
            .map(|e| quad_form(&self.ke, &u.element(&self.grid, e)))
            .collect()
    }
}

/// Reject supports that leave a rigid-body motion of the whole domain unconstrained.
fn check_rigid_modes(grid: &CartesianGrid, bc: &BoundaryConditions) -> Result<()> {
    // Rows of the constraint-by-rigid-mode matrix: (tx, ty, rotation about
    // the centroid of the constrained nodes, so the test is shift invariant).
    let n = bc.fixed.len().max(1) as f64;
    let (cx, cy) = bc.fixed.iter().fold((0.0, 0.0), |(sx, sy), &(node, _)| {
        let [x, y] = grid.node_coords(node);
        (sx + x / n, sy + y / n)
    });
    let rows: Vec<[f64; 3]> = bc
        .fixed
        .iter()
        .map(|&(node, dir)| {
            let [x, y] = grid.node_coords(node);
            let (x, y) = (x - cx, y - cy);
            match dir {
                Dir::X => [1.0, 0.0, -y],
                Dir::Y => [0.0, 1.0, x],
            }
        })
        .collect();
    let mut gram = [[0.0; 3]; 3];
    for r in &rows {
        for a in 0..3 {
            for b in 0..3 {
                gram[a][b] += r[a] * r[b];
            }
        }
    }
    let scale = gram[0][0] + gram[1][1] + gram[2][2];
    let det = gram[0][0] * (gram[1][1] * gram[2][2] - gram[1][2] * gram[2][1])
        - gram[0][1] * (gram[1][0] * gram[2][2] - gram[1][2] * gram[2][0])
        + gram[0][2] * (gram[1][0] * gram[2][1] - gram[1][1] * gram[2][0]);
    if det <= 1e-12 * scale.powi(3) {
        return Err(Error::Solver(
            "supports do not prevent rigid-body motion; stiffness matrix is singular".into(),
        ));
    }
    Ok(())
}

/// Assemble and solve in one call.
pub fn assemble_and_solve(
    grid: &CartesianGrid,
    rho: &[f64],
    bc: &BoundaryConditions,
    mat: &MaterialModel,
) -> Result<(DisplacementField, LinearSystemSummary)> {
    FeSystem::new(grid, bc, *mat, SolverKind::Direct)?.solve(rho)
}

/// `c = ½ Σ F·U` over the loaded DOFs.
pub fn compliance(u: &DisplacementField, grid: &CartesianGrid, bc: &BoundaryConditions) -> f64 {
    let f = bc.force_vector(grid);
    0.5 * f.iter().zip(&u.0).map(|(f, u)| f * u).sum::<f64>()
}

/// `u_eᵀ k_e u_e` with `k_e = E(rho_e) k̂`.
pub fn element_strain_energy_density(
    u: &DisplacementField,
    grid: &CartesianGrid,
    e: usize,
    rho_e: f64,
    mat: &MaterialModel,
) -> Result<f64> {
    let ke = element_stiffness_unit(mat.nu)?;
    Ok(simp_modulus(rho_e, mat) * quad_form(&ke, &u.element(grid, e)))
}

const CHUNK: usize = 4096;

/// Dot product with a fixed reduction order, independent of the thread count.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(x, y)| x * y).sum::<f64>())
        .collect();
    partial.iter().sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
