//! The four-step run: solid-domain analysis, skeleton extraction, material
//! initialization, optimization. Every step writes its artifacts into the
//! output directory as it completes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::fem::FeSystem;
use crate::grid::{BoundaryConditions, CartesianGrid};
use crate::io;
use crate::optimizer::{skeleton_initialization, InfillProblem, InitMode, OptimizationConfig, OptimizationState};
use crate::stress::{recover_nodal_stress, NodalTensorField};
use crate::topology::{extract_skeleton, DegenerateKind, TopologicalSkeleton};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    /// Solid-domain FEA and skeleton extraction.
    Analyze,
    /// Adds the initial material field.
    Init,
    /// The full pipeline.
    Optimize,
}

/// Command-line adjustments applied on top of a parsed config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub max_iterations: Option<usize>,
    pub move_limit: Option<f64>,
    pub init: Option<InitMode>,
    pub single_thread: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(n) = self.max_iterations {
            cfg.optimization.max_iterations = n;
        }
        if let Some(m) = self.move_limit {
            if !(m > 0.0 && m <= 1.0) {
                return Err(Error::Parameter(format!("move limit must lie in (0, 1], got {m}")));
            }
            cfg.optimization.move_limit = m;
            cfg.mma.move_limit = m;
        }
        if let Some(init) = self.init {
            cfg.optimization.init = init;
        }
        cfg.run.single_thread |= self.single_thread;
        Ok(())
    }
}

/// Timestamped progress log mirrored to `run.log` and the `log` facade.
pub struct RunLog {
    start: Instant,
    file: BufWriter<File>,
    path: PathBuf,
}

impl RunLog {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            start: Instant::now(),
            file: BufWriter::new(file),
            path: path.to_owned(),
        })
    }

    pub fn line(&mut self, msg: impl AsRef<str>) -> Result<()> {
        let msg = msg.as_ref();
        info!("{msg}");
        writeln!(self.file, "[{:10.3} s] {msg}", self.start.elapsed().as_secs_f64())
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Everything the pipeline needs that follows from the config alone.
pub struct Setup {
    pub grid: CartesianGrid,
    pub bc: BoundaryConditions,
    pub optimization: OptimizationConfig,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    let grid = match &cfg.grid.mask {
        None => CartesianGrid::new(cfg.grid.nx, cfg.grid.ny)?,
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::input(path, e))?;
            let mask = io::parse_mask(&text)?;
            if (mask.nx, mask.ny) != (cfg.grid.nx, cfg.grid.ny) {
                return Err(Error::Grid(format!(
                    "mask {} is {}x{} but the grid is {}x{}",
                    path.display(),
                    mask.nx,
                    mask.ny,
                    cfg.grid.nx,
                    cfg.grid.ny
                )));
            }
            CartesianGrid::with_mask(mask.nx, mask.ny, &mask.active)?
        }
    };
    let bc = cfg.boundary_conditions(&grid)?;
    let optimization = cfg.optimization_config(&grid)?;
    Ok(Setup { grid, bc, optimization })
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub solid_compliance: f64,
    pub stress: NodalTensorField,
    pub skeleton: TopologicalSkeleton,
    pub initial_design: Option<Vec<f64>>,
    pub state: Option<OptimizationState>,
}

/// Run `cfg` up to `stage`, writing artifacts into `out`. `source_text` is
/// the config file as read, copied verbatim next to the canonical echo.
pub fn run_pipeline(cfg: &RunConfig, source_text: Option<&str>, out: &Path, stage: Stage) -> Result<PipelineOutcome> {
    if cfg.run.single_thread {
        faer::set_global_parallelism(faer::Par::Seq);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::Optimizer(format!("cannot build thread pool: {e}")))?;
        pool.install(|| run_stages(cfg, source_text, out, stage))
    } else {
        run_stages(cfg, source_text, out, stage)
    }
}

fn run_stages(cfg: &RunConfig, source_text: Option<&str>, out: &Path, stage: Stage) -> Result<PipelineOutcome> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut log = RunLog::create(&out.join("run.log"))?;
    io::write_file(&out.join("config.toml"), cfg.echo())?;
    if let Some(text) = source_text {
        io::write_file(&out.join("config.source.toml"), text)?;
    }
    let Setup { grid, bc, optimization } = setup(cfg)?;
    log.line(format!(
        "grid {}x{}, {} active elements, {} fixed dofs, {} loaded nodes, {} threads",
        grid.nx(),
        grid.ny(),
        grid.num_elements(),
        bc.fixed.len(),
        bc.loads.len(),
        rayon::current_num_threads()
    ))?;

    // Step 1: solid-domain analysis.
    let t = Instant::now();
    let mut fe = FeSystem::new(&grid, &bc, cfg.material, cfg.run.solver)?;
    let (u, summary) = fe.solve(&vec![1.0; grid.num_elements()])?;
    let solid_compliance = fe.compliance(&u);
    let stress = recover_nodal_stress(&grid, &u, &cfg.material);
    io::write_file(&out.join("nodal_stress.tsv"), io::format_nodal_stress(&stress))?;
    log.line(format!(
        "step 1 solid-domain FEA: compliance {solid_compliance:.6e}, {} solver, residual {:.2e} ({:.2} s)",
        summary.solver,
        summary.relative_residual,
        t.elapsed().as_secs_f64()
    ))?;
    drop(fe);

    // Step 2: topological skeleton.
    let t = Instant::now();
    let skeleton = extract_skeleton(&stress, &cfg.topology);
    io::write_file(&out.join("degenerate_points.tsv"), io::format_degenerate_points(&skeleton))?;
    io::write_file(&out.join("skeleton.psl"), io::format_skeleton(&skeleton))?;
    log.line(format!(
        "step 2 skeleton: {} degenerate points ({} trisectors, {} wedges), {} separatrices ({:.2} s)",
        skeleton.points.len(),
        skeleton.count(DegenerateKind::Trisector),
        skeleton.count(DegenerateKind::Wedge),
        skeleton.separatrices.len(),
        t.elapsed().as_secs_f64()
    ))?;
    let mut outcome = PipelineOutcome {
        solid_compliance,
        stress,
        skeleton,
        initial_design: None,
        state: None,
    };
    if stage == Stage::Analyze {
        log.line("done (analyze)")?;
        return Ok(outcome);
    }

    // Step 3: initial material field.
    let phi0 = match cfg.optimization.init {
        InitMode::Uniform => optimization.alpha.to_vec(),
        InitMode::Topology => skeleton_initialization(&outcome.skeleton, &grid, &optimization.alpha),
    };
    let solid = phi0.iter().filter(|v| **v == 1.0).count();
    io::write_density_field(&phi0, &grid, out, "init_density")?;
    log.line(format!(
        "step 3 initialization ({}): {solid} solid elements, mean {:.6}",
        cfg.optimization.init,
        phi0.iter().sum::<f64>() / phi0.len() as f64
    ))?;
    outcome.initial_design = Some(phi0.clone());
    if stage == Stage::Init || cfg.optimization.max_iterations == 0 {
        log.line("done (initialization only)")?;
        return Ok(outcome);
    }

    // Step 4: optimization.
    let t = Instant::now();
    let history_path = out.join("history.csv");
    let mut history = BufWriter::new(File::create(&history_path).map_err(|e| Error::io(&history_path, e))?);
    writeln!(history, "{}", io::HISTORY_HEADER).map_err(|e| Error::io(&history_path, e))?;
    let mut problem = InfillProblem::new(&grid, &bc, optimization)?;
    let period = cfg.run.snapshot_period;
    let total = cfg.optimization.max_iterations;
    let snapshots = out.join("snapshots");
    let state = problem.run(phi0, |state, eval| {
        let rec = state.history.last().expect("history row per iteration");
        writeln!(history, "{}", io::format_history_row(rec))
            .and_then(|_| history.flush())
            .map_err(|e| Error::io(&history_path, e))?;
        if period > 0 && state.iteration % period == 0 {
            io::write_density_field(&state.rho, &grid, &snapshots, &format!("density_{:05}", state.iteration))?;
        }
        if state.iteration % 10 == 0 || state.iteration == total {
            log.line(format!(
                "iter {:5} beta {:5} c {:.6e} g {:+.3e} s {:.4e} mean {:.4} ({:.1} s)",
                state.iteration,
                state.beta,
                eval.compliance,
                eval.g_local,
                eval.sharpness,
                eval.mean_density,
                t.elapsed().as_secs_f64()
            ))?;
        }
        Ok(())
    })?;
    drop(history);

    io::write_density_field(&state.rho, &grid, out, "final_density")?;
    if let Some(sens) = &state.sensitivities {
        io::write_file(&out.join("dc_drho.txt"), io::format_field_text(&sens.dc_drho, &grid))?;
        io::write_file(&out.join("dg_drho.txt"), io::format_field_text(&sens.dg_drho, &grid))?;
        io::write_file(&out.join("ratio.txt"), io::format_field_text(&sens.ratio(), &grid))?;
    }
    let last = state.history.last().expect("at least one iteration");
    log.line(format!(
        "step 4 optimization: {} iterations, compliance {:.6e}, g_local {:+.4e}, sharpness {:.4e}, mean density {:.6} ({:.1} s)",
        last.iteration,
        last.compliance,
        last.g_local,
        last.sharpness,
        last.mean_density,
        t.elapsed().as_secs_f64()
    ))?;
    outcome.state = Some(state);
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub compliance: f64,
    pub g_local: f64,
    pub g_global: Option<f64>,
    pub sharpness: f64,
    pub mean_density: f64,
}

impl Metrics {
    pub const HEADER: &'static str = "compliance,g_local,g_global,sharpness,mean_density";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.compliance,
            self.g_local,
            self.g_global.map(|g| g.to_string()).unwrap_or_default(),
            self.sharpness,
            self.mean_density
        )
    }
}

/// Compliance, constraints and convergence measures of a given density field.
pub fn compute_metrics(cfg: &RunConfig, rho: &[f64]) -> Result<Metrics> {
    let Setup { grid, bc, optimization } = setup(cfg)?;
    if rho.len() != grid.num_elements() {
        return Err(Error::Parameter(format!(
            "density field has {} values for {} elements",
            rho.len(),
            grid.num_elements()
        )));
    }
    if let Some(v) = rho.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Parameter(format!("density value {v} outside [0, 1]")));
    }
    let eval = InfillProblem::new(&grid, &bc, optimization)?.evaluate(rho)?;
    Ok(Metrics {
        compliance: eval.compliance,
        g_local: eval.g_local,
        g_global: eval.g_global,
        sharpness: eval.sharpness,
        mean_density: eval.mean_density,
    })
}

/// Read a density text matrix laid out on the config's grid.
pub fn read_density(cfg: &RunConfig, path: &Path) -> Result<Vec<f64>> {
    let grid = setup(cfg)?.grid;
    io::read_field_text(path, &grid)
}
