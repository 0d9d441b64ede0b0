use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::admm::AdmmParams;
use crate::agents::Scheduler;
use crate::consensus::ConsensusParams;
use crate::error::{Error, Result};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "DLMPC_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq)]
pub enum SystemKind {
    PendulumChain,
    BenchmarkChain,
    /// JSON model file written by [`crate::model::write_model`].
    Import(PathBuf),
}

/// Pendulum scenarios and benchmark cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProblemKind {
    S1,
    S2,
    S3,
    C1,
    C2,
    C3,
    C4,
}

impl ProblemKind {
    pub const CASES: [ProblemKind; 4] = [ProblemKind::C1, ProblemKind::C2, ProblemKind::C3, ProblemKind::C4];
    pub const SCENARIOS: [ProblemKind; 3] = [ProblemKind::S1, ProblemKind::S2, ProblemKind::S3];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::S1 => "s1",
            ProblemKind::S2 => "s2",
            ProblemKind::S3 => "s3",
            ProblemKind::C1 => "c1",
            ProblemKind::C2 => "c2",
            ProblemKind::C3 => "c3",
            ProblemKind::C4 => "c4",
        }
    }

    /// Whether the objective couples subsystems, which selects the consensus algorithm.
    pub fn is_coupled(self) -> bool {
        matches!(self, ProblemKind::S2 | ProblemKind::S3 | ProblemKind::C3 | ProblemKind::C4)
    }

    /// Whether the row step has a closed form (no inequality constraints).
    pub fn is_closed_form(self) -> bool {
        matches!(self, ProblemKind::S1 | ProblemKind::S2 | ProblemKind::C1 | ProblemKind::C3)
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "s1" => ProblemKind::S1,
            "s2" => ProblemKind::S2,
            "s3" => ProblemKind::S3,
            "c1" => ProblemKind::C1,
            "c2" => ProblemKind::C2,
            "c3" => ProblemKind::C3,
            "c4" => ProblemKind::C4,
            other => return Err(Error::Config(format!("unknown scenario or case `{other}`"))),
        })
    }
}

/// Settings of one experiment, read from flat `key = value` text.
///
/// Keys: `system` (`pendulum_chain`, `benchmark_chain`, `import`),
/// `model_path`, `subsystems`, `locality`, `horizon`, `dt`, `scenario` or
/// `case`, `terminal_constraint`, `rho`, `mu`, `eps_p`, `eps_d`, `eps_x`,
/// `max_iter`, `max_inner`, `seed`, `steps`, `scheduler` (`sequential`,
/// `parallel`), `output_dir`, `sweep_subsystems`, `sweep_locality`,
/// `cases`, `cold_start`, `assemble_psi`, `inject_fault`. Lines starting with `#` are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    pub subsystems: usize,
    pub locality: usize,
    /// Prediction horizon in steps; `None` uses 50 for the pendulum chain and 5 otherwise.
    pub horizon: Option<usize>,
    pub dt: f64,
    pub problem: ProblemKind,
    pub terminal_constraint: bool,
    pub rho: f64,
    pub mu: f64,
    pub eps_p: f64,
    pub eps_d: f64,
    pub eps_x: f64,
    pub max_iter: usize,
    pub max_inner: usize,
    pub seed: u64,
    /// Closed-loop steps.
    pub steps: usize,
    pub scheduler: Scheduler,
    pub output_dir: PathBuf,
    pub sweep_subsystems: Vec<usize>,
    pub sweep_locality: Vec<usize>,
    pub cases: Vec<ProblemKind>,
    /// Restart the distributed solver from zero at every MPC step.
    pub cold_start: bool,
    /// Record the achievability residual of the globally assembled `Psi` after every iteration.
    pub assemble_psi: bool,
    /// Have `verify` deliver one message outside the communication topology.
    pub inject_fault: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemKind::PendulumChain,
            subsystems: 4,
            locality: 1,
            horizon: None,
            dt: 0.2,
            problem: ProblemKind::S1,
            terminal_constraint: false,
            rho: 1.0,
            mu: 1.0,
            eps_p: 1e-5,
            eps_d: 1e-5,
            eps_x: 1e-5,
            max_iter: 5000,
            max_inner: 2000,
            seed: 2020,
            steps: 15,
            scheduler: Scheduler::Sequential,
            output_dir: PathBuf::from("out"),
            sweep_subsystems: vec![10, 25, 50, 100],
            sweep_locality: vec![1, 2, 3],
            cases: ProblemKind::CASES.to_vec(),
            cold_start: false,
            assemble_psi: false,
            inject_fault: false,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.trim().parse().map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
    }
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

impl ExperimentConfig {
    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one key; command-line overrides go through here too.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "system" => {
                self.system = match value {
                    "pendulum_chain" => SystemKind::PendulumChain,
                    "benchmark_chain" => SystemKind::BenchmarkChain,
                    "import" => match &self.system {
                        SystemKind::Import(p) => SystemKind::Import(p.clone()),
                        _ => SystemKind::Import(PathBuf::new()),
                    },
                    _ => return Err(Error::Config(format!("unknown system `{value}`"))),
                }
            }
            "model_path" => self.system = SystemKind::Import(PathBuf::from(value)),
            "subsystems" => self.subsystems = parse(key, value)?,
            "locality" => self.locality = parse(key, value)?,
            "horizon" => self.horizon = Some(parse(key, value)?),
            "dt" => self.dt = parse(key, value)?,
            "scenario" | "case" => self.problem = value.parse()?,
            "terminal_constraint" => self.terminal_constraint = parse_bool(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "mu" => self.mu = parse(key, value)?,
            "eps_p" => self.eps_p = parse(key, value)?,
            "eps_d" => self.eps_d = parse(key, value)?,
            "eps_x" => self.eps_x = parse(key, value)?,
            "max_iter" => self.max_iter = parse(key, value)?,
            "max_inner" => self.max_inner = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "scheduler" => {
                self.scheduler = match value {
                    "sequential" => Scheduler::Sequential,
                    "parallel" => Scheduler::Parallel,
                    _ => return Err(Error::Config(format!("unknown scheduler `{value}`"))),
                }
            }
            "output_dir" => self.output_dir = PathBuf::from(value),
            "sweep_subsystems" => self.sweep_subsystems = parse_list(key, value)?,
            "sweep_locality" => self.sweep_locality = parse_list(key, value)?,
            "cases" => self.cases = parse_list(key, value)?,
            "cold_start" => self.cold_start = parse_bool(key, value)?,
            "assemble_psi" => self.assemble_psi = parse_bool(key, value)?,
            "inject_fault" => self.inject_fault = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies the output directory override from the environment.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon.unwrap_or(match self.system {
            SystemKind::PendulumChain => 50,
            _ => 5,
        })
    }

    pub fn admm_params(&self) -> AdmmParams {
        AdmmParams { rho: self.rho, eps_p: self.eps_p, eps_d: self.eps_d, max_iter: self.max_iter }
    }

    pub fn consensus_params(&self) -> ConsensusParams {
        ConsensusParams { mu: self.mu, eps_x: self.eps_x, max_inner: self.max_inner }
    }

    /// Checks value ranges and that the scenario fits the system.
    pub fn validate(&self) -> Result<()> {
        let positive = [("dt", self.dt), ("rho", self.rho), ("mu", self.mu), ("eps_p", self.eps_p), ("eps_d", self.eps_d), ("eps_x", self.eps_x)];
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("`{k}` must be positive, got {v}")));
            }
        }
        let counts = [("subsystems", self.subsystems), ("locality", self.locality), ("horizon", self.horizon()), ("max_iter", self.max_iter), ("max_inner", self.max_inner)];
        for (k, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("`{k}` must be positive")));
            }
        }
        if self.sweep_subsystems.contains(&0) || self.sweep_locality.contains(&0) {
            return Err(Error::Config("sweep values must be positive".into()));
        }
        let scenario = ProblemKind::SCENARIOS.contains(&self.problem);
        match (&self.system, scenario) {
            (SystemKind::BenchmarkChain, true) => {
                return Err(Error::Config(format!("scenario {} needs the pendulum chain", self.problem)));
            }
            (SystemKind::PendulumChain, false) => {
                return Err(Error::Config(format!("case {} needs the benchmark chain or an imported model", self.problem)));
            }
            (SystemKind::Import(p), _) if p.as_os_str().is_empty() => {
                return Err(Error::Config("`system = import` needs `model_path`".into()));
            }
            (SystemKind::Import(_), true) if self.problem != ProblemKind::S1 => {
                return Err(Error::Config(format!("scenario {} needs the pendulum chain", self.problem)));
            }
            _ => {}
        }
        Ok(())
    }
}
