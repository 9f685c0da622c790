//! Command-line front end: `simulate`, `first-jump`, `positions` and
//! `convergence`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Experiment, Real, SimConfig};
use crate::ensemble::{convergence_study, first_jump_ensemble, run_paths};
use crate::io::{self, JumpRow, SnapshotEntry};
use crate::measures::JumpKind;
use crate::pdp::{Engine, FirstJump, RateBound};
use crate::stats::{analytic_first_jump, histogram, ks_critical_value, ks_distance, uniform_edges, Ecdf};
use crate::Error;

/// Sample counts below this get a warning next to the KS distance.
pub const LOW_SAMPLE: usize = 100;

/// Number of refinement rows written by `convergence`.
pub const CONVERGENCE_ROWS: usize = 3;

#[derive(Debug, Parser)]
#[command(name = "lwr-accidents", version, about = "Traffic on a ring road with random accidents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    /// Adaptive Bernoulli steps.
    Approx,
    /// Thinning against the a-priori rate bound.
    Exact,
}

impl CommonArgs {
    pub fn engine(&self) -> Engine {
        match (self.engine, self.rate_bound) {
            (EngineArg::Approx, _) => Engine::Approximate,
            (EngineArg::Exact, None) => Engine::Exact(RateBound::APriori),
            (EngineArg::Exact, Some(b)) => Engine::Exact(RateBound::Fixed(b)),
        }
    }
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of paths or samples, overriding the file.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Position mixture weight, overriding the file.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Output directory, overriding the file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = EngineArg::Approx)]
    pub engine: EngineArg,
    /// Fixed thinning bound for the exact engine instead of the a-priori one.
    #[arg(long, global = true)]
    pub rate_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Full paths: jump chain and density snapshots.
    Simulate,
    /// First jump times against their analytic law.
    FirstJump,
    /// Histogram of first accident positions.
    Positions,
    /// Accident-free grid refinement study.
    Convergence,
}

/// Loads the config and applies command-line overrides.
pub fn load(args: &CommonArgs) -> Result<Experiment, Error> {
    let path = args
        .config
        .as_deref()
        .ok_or_else(|| Error::Usage("--config is required".into()))?;
    let mut cfg = SimConfig::from_file(path)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(samples) = args.samples {
        if samples == 0 {
            return Err(Error::Usage("--samples must be at least 1".into()));
        }
        cfg.samples = samples;
    }
    if let Some(beta) = args.beta {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Usage(format!("--beta must lie in [0, 1], got {beta}")));
        }
        cfg.rates.beta = Real(beta);
    }
    if let Some(out) = &args.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg.build()?)
}

/// Runs one subcommand and returns the lines it reports.
pub fn run(command: Command, args: &CommonArgs) -> Result<Vec<String>, Error> {
    let exp = load(args)?;
    let engine = args.engine();
    match command {
        Command::Simulate => simulate(&exp, engine, args.threads),
        Command::FirstJump => first_jump_cmd(&exp, engine, args.threads),
        Command::Positions => positions(&exp, engine, args.threads),
        Command::Convergence => convergence(&exp, args.threads),
    }
}

pub fn simulate(exp: &Experiment, engine: Engine, threads: usize) -> Result<Vec<String>, Error> {
    let dir = &exp.output.dir;
    let paths = run_paths(
        &exp.path,
        &exp.initial,
        &exp.snapshot_times,
        engine,
        exp.seed,
        exp.samples,
        threads,
    )?;
    let rows: Vec<JumpRow> = paths.iter().enumerate().flat_map(|(i, p)| io::jump_rows(i, p)).collect();
    io::to_file(&dir.join("jumps.csv"), |w| io::write_jumps(w, &rows))?;

    let grid = &exp.path.model.grid;
    let mut index = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        for (k, snap) in path.snapshots.iter().enumerate() {
            let file = format!("snapshots/path{i:05}_{k:03}.csv");
            io::to_file(&dir.join(&file), |w| io::write_snapshot(w, grid, &snap.rho))?;
            index.push(SnapshotEntry {
                path_id: i,
                time: snap.time,
                file,
            });
        }
    }
    io::to_file(&dir.join("snapshots.csv"), |w| io::write_snapshot_index(w, &index))?;

    let jumps = rows.len() - paths.len();
    Ok(vec![
        format!("paths: {}", paths.len()),
        format!("jumps: {jumps}"),
        format!("snapshots: {}", index.len()),
        format!("output: {}", dir.display()),
    ])
}

fn write_first_jumps(dir: &Path, samples: &[FirstJump]) -> Result<(), Error> {
    io::to_file(&dir.join("first_jumps.csv"), |w| io::write_first_jumps(w, samples))?;
    Ok(())
}

pub fn first_jump_cmd(exp: &Experiment, engine: Engine, threads: usize) -> Result<Vec<String>, Error> {
    let dir = &exp.output.dir;
    let samples = first_jump_ensemble(&exp.path, &exp.initial, engine, exp.seed, exp.samples, threads)?;
    write_first_jumps(dir, &samples)?;

    let times: Vec<f64> = samples.iter().filter_map(|s| s.time).collect();
    let censored = samples.len() - times.len();
    let ecdf = Ecdf::with_censored(&times, censored)?;
    let law = analytic_first_jump(&exp.path, &exp.initial)?;
    let ks = ks_distance(&ecdf, &law.cdf);

    let ecdf_rows = ecdf.steps();
    io::to_file(&dir.join("ecdf.csv"), |w| io::write_table(w, ("t", "value"), &ecdf_rows))?;
    let cdf_rows: Vec<(f64, f64)> = law.cdf.times.iter().copied().zip(law.cdf.values.iter().copied()).collect();
    io::to_file(&dir.join("cdf.csv"), |w| io::write_table(w, ("t", "value"), &cdf_rows))?;
    let pdf_rows: Vec<(f64, f64)> = law.cdf.times.iter().copied().zip(law.pdf.iter().copied()).collect();
    io::to_file(&dir.join("pdf.csv"), |w| io::write_table(w, ("t", "value"), &pdf_rows))?;

    let mut report = vec![
        format!("samples: {}", samples.len()),
        format!("censored: {censored}"),
        format!("ks: {ks}"),
        format!("ks_critical_5pct: {}", ks_critical_value(samples.len(), 0.05)),
    ];
    if samples.len() < LOW_SAMPLE {
        report.push(format!("warning: only {} samples, KS distance is not informative", samples.len()));
    }
    Ok(report)
}

pub fn positions(exp: &Experiment, engine: Engine, threads: usize) -> Result<Vec<String>, Error> {
    let dir = &exp.output.dir;
    let samples = first_jump_ensemble(&exp.path, &exp.initial, engine, exp.seed, exp.samples, threads)?;
    write_first_jumps(dir, &samples)?;
    let xs: Vec<f64> = samples
        .iter()
        .filter_map(|s| s.outcome)
        .filter(|o| o.kind == JumpKind::Accident)
        .map(|o| o.accident.position)
        .collect();
    let l = exp.path.model.grid.half_length();
    let edges = uniform_edges(-l, l, exp.output.bins.max(1));
    let counts = histogram(&xs, &edges)?;
    io::to_file(&dir.join("positions.csv"), |w| io::write_histogram(w, &edges, &counts))?;

    let mut report = vec![
        format!("samples: {}", samples.len()),
        format!("accidents: {}", xs.len()),
    ];
    if let Some(k) = (0..counts.len()).max_by_key(|&k| (counts[k], std::cmp::Reverse(k))) {
        if counts[k] > 0 {
            report.push(format!("mode: [{}, {})", edges[k], edges[k + 1]));
        }
    }
    Ok(report)
}

pub fn convergence(exp: &Experiment, threads: usize) -> Result<Vec<String>, Error> {
    let rows = convergence_study(
        &exp.path,
        &exp.path.model.grid,
        CONVERGENCE_ROWS,
        |g| exp.initial_on(g).rho,
        threads,
    )?;
    io::to_file(&exp.output.dir.join("convergence.csv"), |w| io::write_convergence(w, &rows))?;
    Ok(rows
        .iter()
        .map(|r| match r.order {
            Some(o) => format!("dx {}: l1 {} order {o}", r.dx, r.l1_diff),
            None => format!("dx {}: l1 {}", r.dx, r.l1_diff),
        })
        .collect())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command, &cli.common) {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
