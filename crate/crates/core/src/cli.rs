//! Command-line driver: `tlc <subcommand> --config <scenario|file> [flags]`.

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::RunConfig;
use crate::error::{ConfigError, IpaError, OptError, SimError};
use crate::experiments::{brute_force_surface, run_scenario, ScenarioOptions};
use crate::ipa::{estimate, Estimator};
use crate::optimizer::{eval_seed_base, optimize};
use crate::sim::eventlog::write_event_log;
use crate::sim::{sample_cost, simulate};

/// Switch count used by `--fast`.
pub const FAST_SWITCHES: u64 = 1000;

/// Environment variable that overrides the output directory when `--out`
/// is not given.
pub const OUT_DIR_ENV: &str = "TLC_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "tlc", about = "Threshold-based traffic light control with IPA gradient descent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one sample path and write its event log.
    Simulate(Common),
    /// Estimate the cost gradient on one sample path.
    Gradient(Common),
    /// Descend from the configured (or --s1/--s2) thresholds.
    Optimize(Common),
    /// Brute-force mean-cost surface over the configured grid.
    Surface(Common),
    /// Optimize from every starting point of a scenario and report.
    Scenario {
        #[command(flatten)]
        common: Common,
        /// Skip the brute-force surface.
        #[arg(long)]
        no_surface: bool,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Built-in scenario name or path to a TOML config.
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_hyphen_values = true)]
    s1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    s2: Option<f64>,
    /// Stop after this many light switches.
    #[arg(long)]
    switches: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Short paths for quick checks.
    #[arg(long)]
    fast: bool,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estimator(#[from] IpaError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: io::Error },
}

impl CliError {
    /// Process exit status; 2 is left to argument errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) => 3,
            CliError::Config(ConfigError::Parse(_)) => 4,
            CliError::Config(ConfigError::UnknownScenario(_)) => 5,
            CliError::Config(ConfigError::Invalid(_)) => 6,
            CliError::Sim(SimError::Model(_) | SimError::InvalidConfig(_) | SimError::EmptyHorizon) => 6,
            CliError::Opt(OptError::InvalidRule(_) | OptError::Model(_) | OptError::NonPositiveCost(_)) => 6,
            CliError::Sim(SimError::Stalled { .. }) | CliError::Opt(OptError::Sim { .. } | OptError::Eval(_)) => 7,
            CliError::Estimator(_) | CliError::Opt(OptError::Estimator { .. }) => 8,
            CliError::Output { .. } => 9,
        }
    }
}

fn output_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Output { path: path.display().to_string(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(output_err(path))
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    if let Some(s1) = common.s1 {
        cfg.sim.thresholds[0] = s1;
    }
    if let Some(s2) = common.s2 {
        cfg.sim.thresholds[1] = s2;
    }
    if common.fast {
        cfg.sim.switches = Some(FAST_SWITCHES);
        cfg.sim.horizon = None;
    }
    if let Some(n) = common.switches {
        cfg.sim.switches = Some(n);
        cfg.sim.horizon = None;
    }
    if let Some(out) = &common.out {
        cfg.output.dir = out.display().to_string();
    } else if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
        cfg.output.dir = dir;
    }
    cfg.validate()?;
    if let Some(jobs) = common.jobs {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    let dir = PathBuf::from(&cfg.output.dir);
    fs::create_dir_all(&dir).map_err(output_err(&dir))?;
    Ok((cfg, dir))
}

fn cmd_simulate(common: &Common) -> Result<String, CliError> {
    let (cfg, dir) = load(common)?;
    let sim = cfg.sim_config()?;
    let path = simulate(&sim)?;
    let cost = sample_cost(&path, sim.weights, path.horizon);
    let file = dir.join(format!("events_seed{}.csv", sim.seed));
    let mut out = create(&file)?;
    write_event_log(&path, &cfg.header(sim.seed), &mut out).map_err(output_err(&file))?;
    out.flush().map_err(output_err(&file))?;
    Ok(format!(
        "cost={cost:.6} switches={} horizon={:.3} events={} file={}",
        path.switch_count,
        path.horizon,
        path.events.len(),
        file.display()
    ))
}

fn cmd_gradient(common: &Common) -> Result<String, CliError> {
    let (cfg, dir) = load(common)?;
    let sim = cfg.sim_config()?;
    let path = simulate(&sim)?;
    let g = estimate(&path, sim.weights, path.horizon, Estimator::for_mode(sim.mode))?;
    let file = dir.join("gradients.csv");
    let fresh = !file.exists();
    let mut out = OpenOptions::new().create(true).append(true).open(&file).map_err(output_err(&file))?;
    let s = sim.thresholds;
    let mut text = String::new();
    if fresh {
        for c in cfg.header(sim.seed) {
            text.push_str(&format!("# {c}\n"));
        }
        text.push_str("s1,s2,dLds1,dLds2,T,seed\n");
    }
    text.push_str(&format!("{},{},{},{},{},{}\n", s.s1, s.s2, g.dl_ds[0], g.dl_ds[1], g.horizon, sim.seed));
    out.write_all(text.as_bytes()).map_err(output_err(&file))?;
    Ok(format!(
        "dL/ds = [{:.6}, {:.6}] T={:.3} file={}",
        g.dl_ds[0],
        g.dl_ds[1],
        g.horizon,
        file.display()
    ))
}

fn cmd_optimize(common: &Common) -> Result<String, CliError> {
    let (cfg, dir) = load(common)?;
    let sim = cfg.sim_config()?;
    let rec = optimize(&sim, &cfg.step_rule(), sim.thresholds, sim.seed)?;
    let file = dir.join(format!("trajectory_seed{}.csv", sim.seed));
    let mut out = create(&file)?;
    rec.write_csv(&cfg.header(sim.seed), &mut out).map_err(output_err(&file))?;
    out.flush().map_err(output_err(&file))?;
    Ok(format!(
        "s* = [{:.3}, {:.3}] J* = {:.4} J0 = {:.4} R = {:.1}% iterations={} converged={} file={}",
        rec.s_star.s1,
        rec.s_star.s2,
        rec.j_star,
        rec.j0,
        rec.reduction,
        rec.iterations.len(),
        rec.converged,
        file.display()
    ))
}

fn cmd_surface(common: &Common) -> Result<String, CliError> {
    let (cfg, dir) = load(common)?;
    let sim = cfg.sim_config()?;
    let surface = brute_force_surface(&sim, &cfg.grid(), cfg.surface.replications, eval_seed_base(sim.seed))?;
    let file = dir.join(format!("surface_seed{}.csv", sim.seed));
    let mut out = create(&file)?;
    surface.write_matrix(&cfg.header(sim.seed), &mut out).map_err(output_err(&file))?;
    out.flush().map_err(output_err(&file))?;
    Ok(format!(
        "argmin = [{}, {}] J = {:.4} file={}",
        surface.argmin.s1,
        surface.argmin.s2,
        surface.min,
        file.display()
    ))
}

fn cmd_scenario(common: &Common, no_surface: bool) -> Result<String, CliError> {
    let (cfg, dir) = load(common)?;
    let sim = cfg.sim_config()?;
    let spec = cfg
        .scenario_spec()
        .ok_or_else(|| ConfigError::Invalid("config has no [scenario] section".into()))??;
    let opts = ScenarioOptions { seed: sim.seed, replications: cfg.surface.replications, with_surface: !no_surface };
    let report = run_scenario(&spec, &sim, &cfg.step_rule(), &cfg.grid(), &opts)?;
    let header: String = cfg.header(sim.seed).iter().map(|c| format!("# {c}\n")).collect();
    let write = |name: String, body: &str| -> Result<PathBuf, CliError> {
        let file = dir.join(name);
        fs::write(&file, format!("{header}{body}")).map_err(output_err(&file))?;
        Ok(file)
    };
    let text = report.to_text();
    let txt = write(format!("{}_report.txt", spec.name), &text)?;
    write(format!("{}_report.csv", spec.name), &report.to_csv())?;
    for (k, run) in report.runs.iter().enumerate() {
        let file = dir.join(format!("{}_trajectory{k}.csv", spec.name));
        let mut out = create(&file)?;
        run.write_csv(&cfg.header(sim.seed), &mut out).map_err(output_err(&file))?;
        out.flush().map_err(output_err(&file))?;
    }
    if let Some(surface) = &report.surface {
        let file = dir.join(format!("{}_surface.csv", spec.name));
        let mut out = create(&file)?;
        surface.write_matrix(&cfg.header(sim.seed), &mut out).map_err(output_err(&file))?;
        out.flush().map_err(output_err(&file))?;
    }
    Ok(format!("{text}report={}", txt.display()))
}

/// Parse `argv`, run, print a summary or a diagnostic, return the exit
/// status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Gradient(c) => cmd_gradient(c),
        Command::Optimize(c) => cmd_optimize(c),
        Command::Surface(c) => cmd_surface(c),
        Command::Scenario { common, no_surface } => cmd_scenario(common, *no_surface),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
