//! Porous infill optimization: SIMP compliance minimization under a p-mean
//! local volume constraint (optionally with a global volume bound), with a
//! density filter, Heaviside projection under β-continuation, and MMA updates.

mod filter;
mod init;
mod projection;
mod volume;

pub use filter::{density_filter, filter_adjoint, DensityFilter};
pub use init::{segment_meets_box, skeleton_initialization, supercover};
pub use projection::{
    heaviside, heaviside_derivative, heaviside_project, heaviside_slope, mean_density, sharpness,
};
pub use volume::{aggregate_constraint, constraint_sensitivity, global_constraint, local_volume};

use std::fmt;
use std::str::FromStr;

use log::debug;

use crate::error::{Error, Result};
use crate::fem::{simp_modulus_derivative, FeSystem, LinearSystemSummary, MaterialModel, SolverKind};
use crate::grid::{BoundaryConditions, CartesianGrid, NeighborhoodTable, ScalarField};
use crate::mma::{MmaParams, MmaWorkspace};

/// `β(k) = min(max, initial · 2^(k / period))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub initial: f64,
    pub period: usize,
    pub max: f64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self {
            initial: 1.0,
            period: 40,
            max: 128.0,
        }
    }
}

impl BetaSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        let doublings = (iteration / self.period.max(1)).min(1023) as i32;
        (self.initial * 2f64.powi(doublings)).min(self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Uniform,
    Topology,
}

impl InitMode {
    pub fn name(self) -> &'static str {
        match self {
            InitMode::Uniform => "uniform",
            InitMode::Topology => "topo",
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" | "homogeneous" => Ok(InitMode::Uniform),
            "topo" | "topology" | "guided" => Ok(InitMode::Topology),
            _ => Err(format!("unknown init mode '{s}' (expected uniform or topo)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationConfig {
    /// Local volume bound `α_e`.
    pub alpha: ScalarField,
    pub alpha_total: Option<f64>,
    /// Local volume radius `R_e` in element widths.
    pub radius: ScalarField,
    pub filter_radius: f64,
    pub p: f64,
    pub beta: BetaSchedule,
    pub max_iterations: usize,
    pub material: MaterialModel,
    pub solver: SolverKind,
    /// MMA constants; `mma.move_limit` is the design-variable move limit.
    pub mma: MmaParams,
}

impl OptimizationConfig {
    pub fn new(alpha: ScalarField, radius: ScalarField, filter_radius: f64) -> Self {
        Self {
            alpha,
            alpha_total: None,
            radius,
            filter_radius,
            p: 16.0,
            beta: BetaSchedule::default(),
            max_iterations: 1000,
            material: MaterialModel::default(),
            solver: SolverKind::Direct,
            mma: MmaParams::default(),
        }
    }

    pub fn validate(&self, grid: &CartesianGrid) -> Result<()> {
        let n = grid.num_elements();
        let param = |msg: String| Err(Error::Parameter(msg));
        if self.alpha.len() != n || self.radius.len() != n {
            return param(format!("parameter fields must have {n} values"));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return param(format!("alpha must lie in (0, 1), got {a}"));
        }
        if let Some(a) = self.alpha_total {
            if !(a > 0.0 && a < 1.0) {
                return param(format!("alpha_total must lie in (0, 1), got {a}"));
            }
        }
        let r_min = self.radius.min();
        if !(r_min > 0.0) || !self.radius.iter().all(|r| r.is_finite()) {
            return param("local volume radius R must be positive and finite".into());
        }
        if !(self.filter_radius > 0.0 && self.filter_radius < r_min) {
            return param(format!(
                "filter radius r = {} must be positive and smaller than the local volume radius R (min {r_min})",
                self.filter_radius
            ));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return param(format!("aggregation exponent p must be >= 1, got {}", self.p));
        }
        let m = self.mma.move_limit;
        if !(m > 0.0 && m <= 1.0) {
            return param(format!("move limit must lie in (0, 1], got {m}"));
        }
        let b = &self.beta;
        if !(b.initial > 0.0 && b.max >= b.initial && b.period > 0) {
            return param("beta schedule needs initial > 0, max >= initial and period >= 1".into());
        }
        self.material.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRecord {
    pub iteration: usize,
    pub beta: f64,
    pub compliance: f64,
    pub g_local: f64,
    pub g_global: Option<f64>,
    pub sharpness: f64,
    pub mean_density: f64,
}

#[derive(Debug, Clone)]
pub struct SensitivityFields {
    pub dc_drho: Vec<f64>,
    pub dg_drho: Vec<f64>,
    pub dc_dphi: Vec<f64>,
    pub dg_dphi: Vec<f64>,
}

impl SensitivityFields {
    /// `-(∂c/∂ρ) / (∂g/∂ρ)`, zero where the constraint sensitivity vanishes.
    pub fn ratio(&self) -> Vec<f64> {
        self.dc_drho
            .iter()
            .zip(&self.dg_drho)
            .map(|(dc, dg)| if *dg > 1e-300 { -dc / dg } else { 0.0 })
            .collect()
    }
}

/// Response of the structure and the constraints at one density field.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub compliance: f64,
    pub g_local: f64,
    pub g_global: Option<f64>,
    pub sharpness: f64,
    pub mean_density: f64,
    pub dc_drho: Vec<f64>,
    pub dg_drho: Vec<f64>,
    pub solve: LinearSystemSummary,
}

#[derive(Debug, Clone)]
pub struct OptimizationState {
    pub iteration: usize,
    pub beta: f64,
    pub phi: Vec<f64>,
    pub phi_tilde: Vec<f64>,
    pub rho: Vec<f64>,
    pub history: Vec<HistoryRecord>,
    /// Sensitivities at the final state; absent when no iteration ran.
    pub sensitivities: Option<SensitivityFields>,
}

/// `∂c/∂ρ_e = -½ ∂E/∂ρ_e · u_eᵀ k̂ u_e`.
pub fn compliance_sensitivity(unit_energies: &[f64], rho: &[f64], mat: &MaterialModel) -> Vec<f64> {
    unit_energies
        .iter()
        .zip(rho)
        .map(|(w, &r)| -0.5 * simp_modulus_derivative(r, mat) * w)
        .collect()
}

/// Chain `∂X/∂ρ` through the projection and the filter to `∂X/∂φ`.
pub fn chain_to_design(dx_drho: &[f64], phi_tilde: &[f64], beta: f64, filter: &DensityFilter) -> Vec<f64> {
    let local: Vec<f64> = dx_drho
        .iter()
        .zip(phi_tilde)
        .map(|(d, &x)| d * heaviside_slope(x, beta))
        .collect();
    filter.adjoint(&local)
}

/// Everything that stays fixed over one optimization run.
pub struct InfillProblem {
    grid: CartesianGrid,
    cfg: OptimizationConfig,
    fe: FeSystem,
    filter: DensityFilter,
    nb: NeighborhoodTable,
}

impl InfillProblem {
    pub fn new(grid: &CartesianGrid, bc: &BoundaryConditions, cfg: OptimizationConfig) -> Result<Self> {
        cfg.validate(grid)?;
        let fe = FeSystem::new(grid, bc, cfg.material, cfg.solver)?;
        let filter = DensityFilter::new(grid, cfg.filter_radius);
        let nb = NeighborhoodTable::build(grid, &cfg.radius)?;
        Ok(Self {
            grid: grid.clone(),
            cfg,
            fe,
            filter,
            nb,
        })
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn config(&self) -> &OptimizationConfig {
        &self.cfg
    }

    pub fn filter(&self) -> &DensityFilter {
        &self.filter
    }

    pub fn neighborhoods(&self) -> &NeighborhoodTable {
        &self.nb
    }

    pub fn fe_system(&mut self) -> &mut FeSystem {
        &mut self.fe
    }

    /// `(φ̃, ρ)` for design variables `φ` at projection sharpness `β`.
    pub fn project(&self, phi: &[f64], beta: f64) -> (Vec<f64>, Vec<f64>) {
        let phi_tilde = self.filter.apply(phi);
        let rho = heaviside_project(&phi_tilde, beta);
        (phi_tilde, rho)
    }

    pub fn evaluate(&mut self, rho: &[f64]) -> Result<Evaluation> {
        let (u, solve) = self.fe.solve(rho)?;
        let compliance = self.fe.compliance(&u);
        if !compliance.is_finite() {
            return Err(Error::Solver(format!("compliance is not finite ({compliance})")));
        }
        let energies = self.fe.unit_element_energies(&u);
        let dc_drho = compliance_sensitivity(&energies, rho, &self.cfg.material);
        let rho_bar = local_volume(rho, &self.nb);
        let g_local = aggregate_constraint(&rho_bar, &self.cfg.alpha, self.cfg.p);
        let dg_drho = constraint_sensitivity(&rho_bar, &self.cfg.alpha, self.cfg.p, &self.nb);
        Ok(Evaluation {
            compliance,
            g_local,
            g_global: self.cfg.alpha_total.map(|a| global_constraint(rho, a)),
            sharpness: sharpness(rho),
            mean_density: mean_density(rho),
            dc_drho,
            dg_drho,
            solve,
        })
    }

    fn sensitivities(&self, eval: &Evaluation, state: &OptimizationState) -> SensitivityFields {
        SensitivityFields {
            dc_dphi: chain_to_design(&eval.dc_drho, &state.phi_tilde, state.beta, &self.filter),
            dg_dphi: chain_to_design(&eval.dg_drho, &state.phi_tilde, state.beta, &self.filter),
            dc_drho: eval.dc_drho.clone(),
            dg_drho: eval.dg_drho.clone(),
        }
    }

    pub fn initial_state(&self, phi: Vec<f64>) -> Result<OptimizationState> {
        if phi.len() != self.grid.num_elements() {
            return Err(Error::Parameter(format!(
                "initial design has {} values for {} elements",
                phi.len(),
                self.grid.num_elements()
            )));
        }
        if let Some(v) = phi.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("initial design value {v} outside [0, 1]")));
        }
        let beta = self.cfg.beta.at(0);
        let (phi_tilde, rho) = self.project(&phi, beta);
        Ok(OptimizationState {
            iteration: 0,
            beta,
            phi,
            phi_tilde,
            rho,
            history: Vec::new(),
            sensitivities: None,
        })
    }

    /// Run the optimization loop from `phi0`. `observer` sees the state and its
    /// evaluation after every iteration; an error from it aborts the run.
    pub fn run(
        &mut self,
        phi0: Vec<f64>,
        mut observer: impl FnMut(&OptimizationState, &Evaluation) -> Result<()>,
    ) -> Result<OptimizationState> {
        let mut state = self.initial_state(phi0)?;
        if self.cfg.max_iterations == 0 {
            return Ok(state);
        }
        let n = self.grid.num_elements();
        let mut mma = MmaWorkspace::new(n, self.cfg.mma);
        let mut eval = self.evaluate(&state.rho)?;
        // The objective is normalized by the initial compliance so that its
        // gradient is O(1) next to MMA's fixed constraint penalties.
        let c_ref = eval.compliance;
        if !(c_ref > 0.0) {
            return Err(Error::Optimizer(format!(
                "initial compliance is {c_ref}; the load case does no work"
            )));
        }
        let global_grad = vec![1.0 / n as f64; n];
        for k in 1..=self.cfg.max_iterations {
            let sens = self.sensitivities(&eval, &state);
            if sens.dg_dphi.iter().all(|g| *g == 0.0) {
                return Err(Error::Optimizer("local volume constraint gradient vanishes".into()));
            }
            let df0: Vec<f64> = sens.dc_dphi.iter().map(|d| d / c_ref).collect();
            let mut fval = vec![eval.g_local];
            let mut grads: Vec<&[f64]> = vec![&sens.dg_dphi];
            let global_dphi;
            if let Some(gg) = eval.g_global {
                global_dphi = chain_to_design(&global_grad, &state.phi_tilde, state.beta, &self.filter);
                fval.push(gg);
                grads.push(&global_dphi);
            }
            state.phi = mma.update(&state.phi, &df0, &fval, &grads)?;
            state.iteration = k;
            state.beta = self.cfg.beta.at(k);
            (state.phi_tilde, state.rho) = self.project(&state.phi, state.beta);
            eval = self.evaluate(&state.rho)?;
            let record = HistoryRecord {
                iteration: k,
                beta: state.beta,
                compliance: eval.compliance,
                g_local: eval.g_local,
                g_global: eval.g_global,
                sharpness: eval.sharpness,
                mean_density: eval.mean_density,
            };
            debug!(
                "iter {k}: beta {} c {:.6e} g {:.4e} s {:.4e} mean {:.4}",
                record.beta, record.compliance, record.g_local, record.sharpness, record.mean_density
            );
            state.history.push(record);
            observer(&state, &eval)?;
        }
        state.sensitivities = Some(self.sensitivities(&eval, &state));
        Ok(state)
    }
}

/// One-shot optimization without an observer.
pub fn run_optimization(
    cfg: OptimizationConfig,
    grid: &CartesianGrid,
    bc: &BoundaryConditions,
    phi0: Vec<f64>,
) -> Result<OptimizationState> {
    InfillProblem::new(grid, bc, cfg)?.run(phi0, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_schedule_doubles_every_period_and_caps() {
        let s = BetaSchedule::default();
        assert_eq!(s.at(0), 1.0);
        assert_eq!(s.at(39), 1.0);
        assert_eq!(s.at(40), 2.0);
        assert_eq!(s.at(279), 64.0);
        assert_eq!(s.at(280), 128.0);
        assert_eq!(s.at(100_000), 128.0);
    }

    #[test]
    fn ratio_is_zero_where_constraint_sensitivity_vanishes() {
        let f = SensitivityFields {
            dc_drho: vec![-2.0, -1.0, 0.0],
            dg_drho: vec![4.0, 0.0, 1.0],
            dc_dphi: vec![],
            dg_dphi: vec![],
        };
        assert_eq!(f.ratio(), vec![0.5, 0.0, 0.0]);
    }

    #[test]
    fn init_mode_parsing() {
        assert_eq!("topo".parse::<InitMode>().unwrap(), InitMode::Topology);
        assert_eq!("uniform".parse::<InitMode>().unwrap(), InitMode::Uniform);
        assert!("random".parse::<InitMode>().is_err());
    }
}
