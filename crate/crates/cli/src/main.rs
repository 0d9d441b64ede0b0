//! Command-line runner for DLMPC experiments.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dlmpc::experiment::{build_model, run_benchmark, simulate, verify, write_benchmark_csv, ExperimentConfig, Sweep};
use dlmpc::sls::{check_localizability, HorizonSpec};

#[derive(Parser)]
#[command(name = "dlmpc", version, about = "Distributed and localized MPC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario in closed loop with DLMPC and the oracle and write CSVs.
    Simulate(Common),
    /// Sweep network size or locality and write the runtime CSV.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SweepArg::Subsystems)]
        sweep: SweepArg,
    },
    /// Check equivalence, audit, achievability and scenario constraints; exit code 1 on failure.
    Verify(Common),
    /// Check whether the model admits a d-localized response and write per-column residuals.
    Localizability(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Subsystems,
    Locality,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory; overrides the file and the environment.
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
    /// Scenario or case (s1, s2, s3, c1, c2, c3, c4).
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    subsystems: Option<usize>,
    #[arg(long)]
    locality: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON model file; selects `system = import`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Any other configuration key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        cfg.apply_env();
        let flags: [(&str, Option<String>); 9] = [
            ("scenario", self.scenario.clone()),
            ("subsystems", self.subsystems.map(|v| v.to_string())),
            ("locality", self.locality.map(|v| v.to_string())),
            ("horizon", self.horizon.map(|v| v.to_string())),
            ("steps", self.steps.map(|v| v.to_string())),
            ("rho", self.rho.map(|v| v.to_string())),
            ("mu", self.mu.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("model_path", self.model.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.sets {
            let (k, v) = kv.split_once('=').with_context(|| format!("`--set {kv}` is not `key=value`"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output_dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run_simulate(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let sim = simulate(cfg)?;
    sim.write(&cfg.output_dir)?;
    let (pd, po) = sim.costs();
    let iters: usize = sim.dlmpc.solves.iter().map(|s| s.iterations).sum();
    println!("scenario {} over {} steps", cfg.problem, sim.dlmpc.steps());
    println!("max relative deviation from oracle {:.3e}", sim.max_deviation());
    println!("closed-loop cost {pd:.6} (oracle {po:.6})");
    println!("ADMM iterations {iters}");
    println!("wrote {}", cfg.output_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run_bench(cfg: &ExperimentConfig, sweep: SweepArg) -> Result<ExitCode> {
    let sweep = match sweep {
        SweepArg::Subsystems => Sweep::Subsystems,
        SweepArg::Locality => Sweep::Locality,
    };
    let rows = run_benchmark(cfg, sweep)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("runtime.csv");
    write_benchmark_csv(BufWriter::new(File::create(&path)?), &rows)?;
    for r in &rows {
        println!("{} N={} d={}: {:.4} ms/iteration, {:.1} iterations/step", r.case, r.subsystems, r.locality, r.iteration_ms, r.mean_iterations);
    }
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn run_verify(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let report = verify(cfg)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run_localizability(cfg: &ExperimentConfig) -> Result<ExitCode> {
    let model = build_model::<f64>(cfg)?;
    let h = HorizonSpec::for_partition(cfg.horizon(), model.partition())?;
    let report = check_localizability(&model, cfg.locality, &h)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("localizability.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["column", "residual"])?;
    for (k, r) in report.column_residuals.iter().enumerate() {
        w.write_record([k.to_string(), format!("{r:.6e}")])?;
    }
    w.flush()?;
    println!(
        "d = {}: {} (worst relative residual {:.3e}, tolerance {:.1e})",
        cfg.locality,
        if report.feasible { "localizable" } else { "not localizable" },
        report.worst_residual,
        report.tolerance
    );
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Simulate(c) => run_simulate(&c.config()?),
        Command::Benchmark { common, sweep } => run_bench(&common.config()?, sweep),
        Command::Verify(c) => run_verify(&c.config()?),
        Command::Localizability(c) => run_localizability(&c.config()?),
    }
}
