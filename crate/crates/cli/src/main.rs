use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use infill_core::config::{load_config, RunConfig};
use infill_core::optimizer::InitMode;
use infill_core::pipeline::{compute_metrics, read_density, run_pipeline, Metrics, Overrides, Stage};
use infill_core::{io, Error, Result};

/// Porous infill topology optimization seeded by the stress-field skeleton.
#[derive(Parser)]
#[command(name = "infill", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solid-domain analysis and skeleton extraction.
    Analyze(Common),
    /// Analysis plus the initial material field.
    Init(Common),
    /// The full pipeline.
    Optimize(Common),
    /// Recompute compliance, constraints and sharpness of a density field.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Density text matrix, e.g. final_density.txt of a previous run.
        #[arg(long)]
        density: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `out` in the config's [run] section.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    #[arg(long = "move-limit")]
    move_limit: Option<f64>,
    /// uniform or topo
    #[arg(long, value_parser = parse_init)]
    init: Option<InitMode>,
    /// One worker thread and sequential factorization, for bit-exact reruns.
    #[arg(long = "single-thread")]
    single_thread: bool,
}

fn parse_init(s: &str) -> std::result::Result<InitMode, String> {
    s.parse()
}

impl Common {
    fn load(&self) -> Result<(RunConfig, String)> {
        let text = std::fs::read_to_string(&self.config).map_err(|e| Error::Input {
            path: self.config.clone(),
            source: e,
        })?;
        let mut cfg = load_config(&self.config)?;
        Overrides {
            max_iterations: self.max_iters,
            move_limit: self.move_limit,
            init: self.init,
            single_thread: self.single_thread,
        }
        .apply(&mut cfg)?;
        Ok((cfg, text))
    }

    fn out_dir(&self, cfg: &RunConfig) -> Result<PathBuf> {
        self.out
            .clone()
            .or_else(|| cfg.run.out.clone())
            .ok_or_else(|| Error::Parameter("no output directory: pass --out or set [run] out".into()))
    }
}

fn stage_run(common: &Common, stage: Stage) -> Result<()> {
    let (cfg, text) = common.load()?;
    let out = common.out_dir(&cfg)?;
    run_pipeline(&cfg, Some(&text), &out, stage)?;
    Ok(())
}

fn metrics(common: &Common, density: &Path) -> Result<()> {
    let (cfg, _) = common.load()?;
    let rho = read_density(&cfg, density)?;
    let m: Metrics = compute_metrics(&cfg, &rho)?;
    let table = format!("{}\n{}\n", Metrics::HEADER, m.csv_row());
    print!("{table}");
    if let Some(out) = common.out.as_ref() {
        io::write_file(&out.join("metrics.csv"), table)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage problems are input errors (1), not numerical failures (2).
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = match &cli.command {
        Command::Analyze(c) => stage_run(c, Stage::Analyze),
        Command::Init(c) => stage_run(c, Stage::Init),
        Command::Optimize(c) => stage_run(c, Stage::Optimize),
        Command::Metrics { common, density } => metrics(common, density),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
