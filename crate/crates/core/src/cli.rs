//! Command-line front end: flag/config-file resolution, dispatch to the
//! library modules, and JSON/JSONL/CSV emission.
//!
//! Config files are flat key-value JSON mirroring the flag names; explicit
//! flags override config keys and unknown keys are rejected. Every
//! randomized command prints its effective seed on stderr, and `--dry-run`
//! prints the resolved configuration without executing or touching files.

use crate::analysis::{
    exact_joint_independence_gap, joint_block_experiment, lln_experiment, marginal_experiment,
    moment_experiment, rate_experiment, AnalysisError, Block, BlockReport, LlnRow, SamplerKind,
};
use crate::entropy::{solve_typical, SolveError, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::margins::{
    build_block_margins, classify_regime, BlockParams, MarginError, MarginPair,
};
use crate::mcmc::{
    bernoulli_rejection_sample, corner_cell_psrf, run_chain, ChainConfig, McmcError,
};
use crate::oracle::{count_tables, enumerate_tables, exact_sample, verify_barvinok_uniformity, OracleError};
use clap::{Args, Parser, Subcommand};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::Serialize;
use serde_json::Value;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Margin(#[from] MarginError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Mcmc(#[from] McmcError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Exit codes: 1 usage, 2 infeasible, 3 not-converged, 4 state-space,
    /// 5 assertion-failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) | CliError::Json(_) => 1,
            CliError::Margin(e) => match e {
                MarginError::EntryExceedsLength { .. } | MarginError::DegenerateMargin { .. } => 2,
                _ => 1,
            },
            CliError::Solve(e) => match e {
                SolveError::Infeasible | SolveError::NoInterior => 2,
                SolveError::NotConverged { .. } => 3,
                _ => 1,
            },
            CliError::Oracle(e) => match e {
                OracleError::EmptySet => 2,
                OracleError::StateSpaceExceeded { .. } | OracleError::CapExceeded { .. } => 4,
                OracleError::AssertionFailed { .. } => 5,
                _ => 1,
            },
            CliError::Mcmc(e) => match e {
                McmcError::Infeasible => 2,
                McmcError::Exhausted { .. } => 3,
                McmcError::InvalidThin => 1,
            },
            CliError::Analysis(e) => match e {
                AnalysisError::Margin(m) => CliError::Margin(m.clone()).exit_code(),
                AnalysisError::Solve(SolveError::Infeasible | SolveError::NoInterior) => 2,
                AnalysisError::Solve(SolveError::NotConverged { .. }) => 3,
                AnalysisError::Oracle(OracleError::EmptySet) => 2,
                AnalysisError::Oracle(OracleError::StateSpaceExceeded { .. }) => 4,
                AnalysisError::Oracle(OracleError::AssertionFailed { .. }) => 5,
                AnalysisError::Mcmc(McmcError::Infeasible) => 2,
                AnalysisError::Mcmc(McmcError::Exhausted { .. }) => 3,
                _ => 1,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Typical,
    Count,
    Enumerate,
    Sample,
    Marginal,
    Joint,
    Moments,
    Lln,
    Rates,
    Verify,
}

impl CommandKind {
    fn is_randomized(&self) -> bool {
        matches!(
            self,
            CommandKind::Sample
                | CommandKind::Marginal
                | CommandKind::Joint
                | CommandKind::Moments
                | CommandKind::Lln
                | CommandKind::Rates
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Jsonl,
    Csv,
}

/// Fully resolved run configuration (flags merged over config file).
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    pub params: Option<BlockParams>,
    pub margins_file: Option<PathBuf>,
    pub sampler: SamplerKind,
    pub k: usize,
    pub seed: u64,
    pub tol: f64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub threads: usize,
    pub dry_run: bool,
    pub cap: usize,
    pub burn_in: Option<u64>,
    pub thin: Option<u64>,
    pub max_tries: u64,
    pub block: Option<Block>,
    pub k_cells: usize,
    pub cells: Vec<(usize, usize)>,
    pub powers: Vec<u32>,
    pub which: Option<LlnRow>,
    pub n_sweep: Vec<usize>,
    pub exact_gap: bool,
}

// ---------------------------------------------------------------------------
// Flag definitions
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "binmargin",
    about = "Maximum-entropy typical tables, exact oracles and MCMC samplers \
             for binary contingency tables with block margins",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct CommonArgs {
    /// Block parameters n,delta,b,c
    #[arg(long)]
    params: Option<String>,
    /// Margins file (JSON {"r": [...], "c": [...]})
    #[arg(long)]
    margins: Option<PathBuf>,
    /// Config file with flat key-value defaults for the flags
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed for randomized commands
    #[arg(long)]
    seed: Option<u64>,
    /// Solver / verification tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format: json, jsonl or csv
    #[arg(long)]
    format: Option<String>,
    /// Shorthand for `--format csv --out PATH`
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Worker thread cap for sweep experiments
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved config and regime classification, run nothing
    #[arg(long = "dry-run")]
    dry_run: bool,
}

#[derive(Args, Debug, Default, Clone)]
struct SamplerArgs {
    /// Sample with the exact oracle
    #[arg(long)]
    exact: bool,
    /// Sample with the swap Markov chain
    #[arg(long)]
    mcmc: bool,
    /// Sample with Bernoulli rejection off the typical table
    #[arg(long)]
    rejection: bool,
    /// Number of samples
    #[arg(short, long)]
    k: Option<usize>,
    /// Chain burn-in steps (mcmc)
    #[arg(long = "burn-in")]
    burn_in: Option<u64>,
    /// Steps between retained samples (mcmc)
    #[arg(long)]
    thin: Option<u64>,
    /// Rejection attempts before giving up
    #[arg(long = "max-tries")]
    max_tries: Option<u64>,
}

#[derive(Args, Debug, Default, Clone)]
struct ExperimentArgs {
    /// Sampler backend: exact, mcmc or rejection
    #[arg(long)]
    sampler: Option<String>,
    /// Number of samples per experiment point
    #[arg(short, long)]
    k: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the maximum-entropy typical table
    Typical(CommonArgs),
    /// Exactly count the tables with the margins
    Count(CommonArgs),
    /// List every table with the margins
    Enumerate {
        #[command(flatten)]
        common: CommonArgs,
        /// Refuse to emit more than this many tables
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Draw tables with the exact, MCMC or rejection sampler
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Per-block marginal law versus the limiting Bernoulli law
    Marginal {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Joint bit-pattern law of cells in one block versus the product law
    Joint {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Block: tl, side or br
        #[arg(long)]
        block: Option<String>,
        /// Number of observed cells in the block
        #[arg(long)]
        cells: Option<usize>,
        /// Also report the exact finite-n independence gap (oracle scale)
        #[arg(long)]
        exact_gap: bool,
    },
    /// Product moments of cells in one block versus the limit
    Moments {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Cells as "i,j;i,j;..."
        #[arg(long)]
        cells: Option<String>,
        /// Powers as "a;b;..." (collapse to 1 for 0/1 entries)
        #[arg(long)]
        powers: Option<String>,
    },
    /// Law of large numbers for a truncated row sum across an n sweep
    Lln {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Which row sum: side or br
        #[arg(long)]
        which: Option<String>,
        /// Sweep of n values, e.g. 16,24,36,54
        #[arg(long = "n-sweep")]
        n_sweep: Option<String>,
    },
    /// Fit per-block TV decay exponents across an n sweep
    Rates {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long = "n-sweep")]
        n_sweep: Option<String>,
    },
    /// Check the equal-log-density law of the conditioned Bernoulli matrix
    Verify(CommonArgs),
}

// ---------------------------------------------------------------------------
// Config-file overlay
// ---------------------------------------------------------------------------

struct ConfigMap(BTreeMap<String, Value>);

impl ConfigMap {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(ConfigMap(BTreeMap::new()));
        };
        let text = std::fs::read_to_string(path)?;
        let value: Value = serde_json::from_str(&text)?;
        let Value::Object(map) = value else {
            return Err(CliError::Usage(format!(
                "config file {} must be a flat JSON object",
                path.display()
            )));
        };
        Ok(ConfigMap(map.into_iter().collect()))
    }

    fn take_str(&mut self, key: &str) -> Result<Option<String>, CliError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(Value::Number(n)) => Ok(Some(n.to_string())),
            Some(other) => Err(CliError::Usage(format!(
                "config key '{key}' has unsupported value {other}"
            ))),
        }
    }

    fn take_u64(&mut self, key: &str) -> Result<Option<u64>, CliError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| CliError::Usage(format!("config key '{key}' must be an integer"))),
        }
    }

    fn take_usize(&mut self, key: &str) -> Result<Option<usize>, CliError> {
        Ok(self.take_u64(key)?.map(|v| v as usize))
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| CliError::Usage(format!("config key '{key}' must be a number"))),
        }
    }

    fn take_bool(&mut self, key: &str) -> Result<Option<bool>, CliError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(b)),
            Some(_) => Err(CliError::Usage(format!("config key '{key}' must be a boolean"))),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        if let Some(key) = self.0.keys().next() {
            return Err(CliError::Usage(format!("unknown config key '{key}'")));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Parsing helpers
// ---------------------------------------------------------------------------

fn parse_block_params(text: &str) -> Result<BlockParams, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 4 {
        return Err(CliError::Usage(format!(
            "--params expects n,delta,b,c, got '{text}'"
        )));
    }
    let n: usize = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--params: bad n '{}'", parts[0])))?;
    let delta: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--params: bad delta '{}'", parts[1])))?;
    let b: f64 = parts[2]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--params: bad b '{}'", parts[2])))?;
    let c: f64 = parts[3]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("--params: bad c '{}'", parts[3])))?;
    Ok(BlockParams::new(n, delta, b, c)?)
}

fn parse_format(text: &str) -> Result<OutputFormat, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "json" => Ok(OutputFormat::Json),
        "jsonl" => Ok(OutputFormat::Jsonl),
        "csv" => Ok(OutputFormat::Csv),
        other => Err(CliError::Usage(format!("--format must be json, jsonl or csv, got '{other}'"))),
    }
}

fn parse_sampler(text: &str) -> Result<SamplerKind, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "exact" => Ok(SamplerKind::Exact),
        "mcmc" => Ok(SamplerKind::Mcmc),
        "rejection" => Ok(SamplerKind::Rejection),
        other => Err(CliError::Usage(format!(
            "--sampler must be exact, mcmc or rejection, got '{other}'"
        ))),
    }
}

fn parse_block(text: &str) -> Result<Block, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "tl" | "top-left" => Ok(Block::TopLeft),
        "side" => Ok(Block::Side),
        "br" | "bottom-right" => Ok(Block::BottomRight),
        other => Err(CliError::Usage(format!("--block must be tl, side or br, got '{other}'"))),
    }
}

fn parse_which(text: &str) -> Result<LlnRow, CliError> {
    match text.to_ascii_lowercase().as_str() {
        "side" => Ok(LlnRow::Side),
        "br" | "bottom-right" => Ok(LlnRow::BottomRight),
        other => Err(CliError::Usage(format!("--which must be side or br, got '{other}'"))),
    }
}

fn parse_n_sweep(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| CliError::Usage(format!("--n-sweep: bad value '{s}'")))
        })
        .collect()
}

fn parse_cell_list(text: &str) -> Result<Vec<(usize, usize)>, CliError> {
    text.split(';')
        .map(|pair| {
            let mut it = pair.split(',');
            let i = it
                .next()
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| CliError::Usage(format!("--cells: bad pair '{pair}'")))?;
            let j = it
                .next()
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| CliError::Usage(format!("--cells: bad pair '{pair}'")))?;
            if it.next().is_some() {
                return Err(CliError::Usage(format!("--cells: bad pair '{pair}'")));
            }
            Ok((i, j))
        })
        .collect()
}

fn parse_powers(text: &str) -> Result<Vec<u32>, CliError> {
    text.split(';')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Usage(format!("--powers: bad value '{s}'")))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// parse_config: argv + optional config file -> RunConfig
// ---------------------------------------------------------------------------

/// Parse argv (and the `--config` file it may name) into a resolved
/// [`RunConfig`]. Flags always win over config-file keys; unknown config
/// keys are rejected by name.
pub fn parse_config<I, S>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;

    let (kind, common, sampler_args, exp_args, extras) = match cli.command {
        Command::Typical(c) => (CommandKind::Typical, c, None, None, Extras::default()),
        Command::Count(c) => (CommandKind::Count, c, None, None, Extras::default()),
        Command::Enumerate { common, cap } => {
            (CommandKind::Enumerate, common, None, None, Extras { cap, ..Default::default() })
        }
        Command::Sample { common, sampler } => {
            (CommandKind::Sample, common, Some(sampler), None, Extras::default())
        }
        Command::Marginal { common, exp } => {
            (CommandKind::Marginal, common, None, Some(exp), Extras::default())
        }
        Command::Joint { common, exp, block, cells, exact_gap } => (
            CommandKind::Joint,
            common,
            None,
            Some(exp),
            Extras { block, k_cells: cells, exact_gap, ..Default::default() },
        ),
        Command::Moments { common, exp, cells, powers } => (
            CommandKind::Moments,
            common,
            None,
            Some(exp),
            Extras { cell_list: cells, powers, ..Default::default() },
        ),
        Command::Lln { common, exp, which, n_sweep } => (
            CommandKind::Lln,
            common,
            None,
            Some(exp),
            Extras { which, n_sweep, ..Default::default() },
        ),
        Command::Rates { common, exp, n_sweep } => {
            (CommandKind::Rates, common, None, Some(exp), Extras { n_sweep, ..Default::default() })
        }
        Command::Verify(c) => (CommandKind::Verify, c, None, None, Extras::default()),
    };

    let mut cfg = ConfigMap::load(common.config.as_deref())?;

    // Flags override config-file keys.
    let params_text = common.params.or(cfg.take_str("params")?);
    let margins_file = common
        .margins
        .or(cfg.take_str("margins")?.map(PathBuf::from));
    let seed = common.seed.or(cfg.take_u64("seed")?).unwrap_or(0);
    let tol = common.tol.or(cfg.take_f64("tol")?);
    let csv_shorthand = common.csv.or(cfg.take_str("csv")?.map(PathBuf::from));
    let mut out = common.out.or(cfg.take_str("out")?.map(PathBuf::from));
    let mut format_text = common.format.or(cfg.take_str("format")?);
    if let Some(path) = csv_shorthand {
        out.get_or_insert(path);
        format_text.get_or_insert_with(|| "csv".into());
    }
    let threads = common.threads.or(cfg.take_usize("threads")?).unwrap_or(1);
    let dry_run = common.dry_run || cfg.take_bool("dry-run")?.unwrap_or(false);

    let mut sampler_choice: Option<SamplerKind> = None;
    let mut k: Option<usize> = None;
    let mut burn_in: Option<u64> = None;
    let mut thin: Option<u64> = None;
    let mut max_tries: Option<u64> = None;
    if let Some(s) = sampler_args {
        let picked = [s.exact, s.mcmc, s.rejection].iter().filter(|&&b| b).count();
        if picked > 1 {
            return Err(CliError::Usage(
                "pick exactly one of --exact, --mcmc, --rejection".into(),
            ));
        }
        sampler_choice = if s.exact {
            Some(SamplerKind::Exact)
        } else if s.mcmc {
            Some(SamplerKind::Mcmc)
        } else if s.rejection {
            Some(SamplerKind::Rejection)
        } else {
            None
        };
        k = s.k;
        burn_in = s.burn_in;
        thin = s.thin;
        max_tries = s.max_tries;
    }
    if let Some(e) = exp_args {
        sampler_choice = match e.sampler {
            Some(text) => Some(parse_sampler(&text)?),
            None => None,
        };
        k = e.k;
    }
    if sampler_choice.is_none() {
        if let Some(text) = cfg.take_str("sampler")? {
            sampler_choice = Some(parse_sampler(&text)?);
        }
    } else {
        let _ = cfg.take_str("sampler")?;
    }
    let k = match k.or(cfg.take_usize("k")?) {
        Some(v) => v,
        None => default_k(kind),
    };
    let burn_in = match burn_in {
        Some(v) => Some(v),
        None => cfg.take_u64("burn-in")?,
    };
    let thin = match thin {
        Some(v) => Some(v),
        None => cfg.take_u64("thin")?,
    };
    let max_tries = max_tries.or(cfg.take_u64("max-tries")?).unwrap_or(10_000_000);

    let cap = extras.cap.or(cfg.take_usize("cap")?).unwrap_or(100_000);
    let block = match extras.block.or(cfg.take_str("block")?) {
        Some(text) => Some(parse_block(&text)?),
        None => None,
    };
    // "cells" is an integer for joint and a pair list for moments.
    let k_cells = match (kind, extras.k_cells) {
        (_, Some(v)) => v,
        (CommandKind::Joint, None) => cfg.take_usize("cells")?.unwrap_or(2),
        _ => 2,
    };
    let cells = match (kind, extras.cell_list) {
        (_, Some(text)) => parse_cell_list(&text)?,
        (CommandKind::Moments, None) => match cfg.take_str("cells")? {
            Some(text) => parse_cell_list(&text)?,
            None => Vec::new(),
        },
        _ => Vec::new(),
    };
    let powers = match extras.powers.or(cfg.take_str("powers")?) {
        Some(text) => parse_powers(&text)?,
        None => vec![1; cells.len().max(1)],
    };
    let which = match extras.which.or(cfg.take_str("which")?) {
        Some(text) => Some(parse_which(&text)?),
        None => None,
    };
    let n_sweep = match extras.n_sweep.or(cfg.take_str("n-sweep")?) {
        Some(text) => parse_n_sweep(&text)?,
        None => vec![16, 24, 36, 54],
    };
    let exact_gap = extras.exact_gap || cfg.take_bool("exact-gap")?.unwrap_or(false);
    cfg.finish()?;

    let params = match params_text {
        Some(text) => Some(parse_block_params(&text)?),
        None => None,
    };

    let config = RunConfig {
        command: kind,
        params,
        margins_file,
        sampler: sampler_choice.unwrap_or(default_sampler(kind)),
        k,
        seed,
        tol: tol.unwrap_or(default_tol(kind)),
        out,
        format: match format_text {
            Some(text) => parse_format(&text)?,
            None => default_format(kind),
        },
        threads,
        dry_run,
        cap,
        burn_in,
        thin,
        max_tries,
        block,
        k_cells,
        cells,
        powers,
        which,
        n_sweep,
        exact_gap,
    };
    validate(&config, sampler_choice.is_none())?;
    Ok(config)
}

#[derive(Default)]
struct Extras {
    cap: Option<usize>,
    block: Option<String>,
    k_cells: Option<usize>,
    cell_list: Option<String>,
    powers: Option<String>,
    which: Option<String>,
    n_sweep: Option<String>,
    exact_gap: bool,
}

fn default_k(kind: CommandKind) -> usize {
    match kind {
        CommandKind::Sample => 1,
        CommandKind::Joint => 5_000,
        _ => 2_000,
    }
}

fn default_tol(kind: CommandKind) -> f64 {
    match kind {
        CommandKind::Verify => 1e-8,
        _ => DEFAULT_TOL,
    }
}

fn default_sampler(_kind: CommandKind) -> SamplerKind {
    // `sample` itself refuses to default (validated below); experiments
    // default to the chain, which works at every scale.
    SamplerKind::Mcmc
}

fn default_format(kind: CommandKind) -> OutputFormat {
    match kind {
        CommandKind::Sample | CommandKind::Enumerate => OutputFormat::Jsonl,
        _ => OutputFormat::Json,
    }
}

fn validate(cfg: &RunConfig, sampler_defaulted: bool) -> Result<(), CliError> {
    match (cfg.params.is_some(), cfg.margins_file.is_some()) {
        (true, true) => {
            return Err(CliError::Usage("give either --params or --margins, not both".into()))
        }
        (false, false) => {
            return Err(CliError::Usage("one of --params or --margins is required".into()))
        }
        _ => {}
    }
    let needs_params = matches!(
        cfg.command,
        CommandKind::Marginal
            | CommandKind::Joint
            | CommandKind::Moments
            | CommandKind::Lln
            | CommandKind::Rates
    );
    if needs_params && cfg.params.is_none() {
        return Err(CliError::Usage(format!(
            "{:?} experiments require --params (block structure)",
            cfg.command
        )));
    }
    if cfg.command.is_randomized() && cfg.k < 1 {
        return Err(CliError::Usage("-k must be at least 1 for sampling commands".into()));
    }
    if cfg.command == CommandKind::Sample && sampler_defaulted {
        return Err(CliError::Usage(
            "sample requires one of --exact, --mcmc, --rejection".into(),
        ));
    }
    if cfg.command == CommandKind::Moments && cfg.cells.is_empty() {
        return Err(CliError::Usage("moments requires --cells \"i,j;i,j;...\"".into()));
    }
    if cfg.command == CommandKind::Lln && cfg.which.is_none() {
        return Err(CliError::Usage("lln requires --which side|br".into()));
    }
    if cfg.command == CommandKind::Joint && cfg.block.is_none() {
        return Err(CliError::Usage("joint requires --block tl|side|br".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

fn load_margins(cfg: &RunConfig) -> Result<MarginPair, CliError> {
    if let Some(p) = &cfg.params {
        return Ok(build_block_margins(p)?);
    }
    let path = cfg.margins_file.as_ref().expect("validated");
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn emit(cfg: &RunConfig, content: String) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, content)?;
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
        }
    }
    Ok(())
}

fn block_reports_csv(reports: &[&BlockReport]) -> String {
    let mut out = String::from("n,block,k,empirical,target,tv,stderr\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n, r.block.label(), r.k, r.empirical, r.target, r.tv, r.stderr
        ));
    }
    out
}

fn log_level() -> u8 {
    match std::env::var("BINMARGIN_LOG").as_deref() {
        Ok("debug") => 2,
        Ok("info") => 1,
        _ => 0,
    }
}

/// Execute a resolved configuration. Returns the process exit code 0 on
/// success; errors carry their own exit codes.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.command.is_randomized() {
        eprintln!("effective seed: {}", cfg.seed);
    }
    if cfg.dry_run {
        let mut doc = serde_json::to_value(cfg)?;
        if let Some(p) = &cfg.params {
            let classification = classify_regime(p);
            doc.as_object_mut()
                .expect("config serializes to an object")
                .insert("regimes".into(), serde_json::to_value(&classification)?);
            if classification.regimes.is_empty() || !classification.global_bound_ok {
                eprintln!(
                    "warning: parameters satisfy no block-limit hypothesis (global bound ok: {})",
                    classification.global_bound_ok
                );
            }
        }
        // Dry runs always go to stdout: they must not create files.
        println!("{}", serde_json::to_string_pretty(&doc)?);
        return Ok(());
    }
    if let Some(p) = &cfg.params {
        let classification = classify_regime(p);
        if classification.regimes.is_empty() || !classification.global_bound_ok {
            eprintln!(
                "warning: parameters {:?} satisfy no block-limit hypothesis (regimes {:?}, global bound ok: {})",
                p, classification.regimes, classification.global_bound_ok
            );
        }
    }

    match cfg.command {
        CommandKind::Typical => {
            let mp = load_margins(cfg)?;
            let table = solve_typical(&mp, cfg.tol, DEFAULT_MAX_ITER)?;
            emit(cfg, serde_json::to_string_pretty(&table)? + "\n")
        }
        CommandKind::Count => {
            let mp = load_margins(cfg)?;
            let ct = count_tables(&mp)?;
            let doc = serde_json::json!({
                "count": ct.count.to_string(),
                "log_count": ct.log_count,
            });
            emit(cfg, serde_json::to_string_pretty(&doc)? + "\n")
        }
        CommandKind::Enumerate => {
            let mp = load_margins(cfg)?;
            let tables = enumerate_tables(&mp, cfg.cap)?;
            match cfg.format {
                OutputFormat::Jsonl => {
                    let mut out = String::new();
                    for t in &tables {
                        out.push_str(&serde_json::to_string(t)?);
                        out.push('\n');
                    }
                    emit(cfg, out)
                }
                OutputFormat::Json => emit(cfg, serde_json::to_string_pretty(&tables)? + "\n"),
                OutputFormat::Csv => {
                    Err(CliError::Usage("enumerate does not support csv output".into()))
                }
            }
        }
        CommandKind::Sample => {
            let mp = load_margins(cfg)?;
            let tables = match cfg.sampler {
                SamplerKind::Exact => exact_sample(&mp, cfg.seed, cfg.k)?,
                SamplerKind::Mcmc => {
                    let rec = ChainConfig::recommended(&mp, cfg.seed);
                    let chain_cfg = ChainConfig {
                        burn_in: cfg.burn_in.unwrap_or(rec.burn_in),
                        thin: cfg.thin.unwrap_or(rec.thin),
                        seed: cfg.seed,
                    };
                    if log_level() >= 1 {
                        let psrf = corner_cell_psrf(&mp, &chain_cfg, (cfg.k).min(1_000))?;
                        eprintln!("gelman-rubin psrf (corner cell, 4 chains): {psrf:.4}");
                    }
                    run_chain(&mp, &chain_cfg, cfg.k)?
                }
                SamplerKind::Rejection => {
                    let t = solve_typical(&mp, cfg.tol, DEFAULT_MAX_ITER)?;
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    let mut tables = Vec::with_capacity(cfg.k);
                    let mut total_tries = 0u64;
                    for _ in 0..cfg.k {
                        let out = bernoulli_rejection_sample(&t, &mp, &mut rng, cfg.max_tries)?;
                        total_tries += out.tries;
                        tables.push(out.table);
                    }
                    if log_level() >= 1 {
                        eprintln!(
                            "rejection acceptance rate: {:.6}",
                            cfg.k as f64 / total_tries as f64
                        );
                    }
                    tables
                }
            };
            match cfg.format {
                OutputFormat::Jsonl => {
                    let mut out = String::new();
                    for t in &tables {
                        out.push_str(&serde_json::to_string(t)?);
                        out.push('\n');
                    }
                    emit(cfg, out)
                }
                OutputFormat::Json => emit(cfg, serde_json::to_string_pretty(&tables)? + "\n"),
                OutputFormat::Csv => Err(CliError::Usage("sample does not support csv output".into())),
            }
        }
        CommandKind::Marginal => {
            let p = cfg.params.as_ref().expect("validated");
            let reports = marginal_experiment(p, cfg.sampler, cfg.k, cfg.seed)?;
            match cfg.format {
                OutputFormat::Csv => {
                    emit(cfg, block_reports_csv(&reports.iter().collect::<Vec<_>>()))
                }
                _ => emit(cfg, serde_json::to_string_pretty(&reports)? + "\n"),
            }
        }
        CommandKind::Joint => {
            if cfg.format == OutputFormat::Csv {
                return Err(CliError::Usage("joint does not support csv output".into()));
            }
            let p = cfg.params.as_ref().expect("validated");
            let block = cfg.block.expect("validated");
            let report =
                joint_block_experiment(p, block, cfg.k_cells, cfg.k, cfg.seed, cfg.sampler)?;
            let mut doc = serde_json::to_value(&report)?;
            if cfg.sampler == SamplerKind::Exact || cfg.exact_gap {
                let gap = exact_joint_independence_gap(p, block, cfg.k_cells)?;
                doc.as_object_mut()
                    .expect("report serializes to an object")
                    .insert("exact_independence_gap".into(), serde_json::json!(gap));
            }
            emit(cfg, serde_json::to_string_pretty(&doc)? + "\n")
        }
        CommandKind::Moments => {
            if cfg.format == OutputFormat::Csv {
                return Err(CliError::Usage("moments does not support csv output".into()));
            }
            let p = cfg.params.as_ref().expect("validated");
            let report =
                moment_experiment(p, &cfg.cells, &cfg.powers, cfg.k, cfg.seed, cfg.sampler)?;
            emit(cfg, serde_json::to_string_pretty(&report)? + "\n")
        }
        CommandKind::Lln => {
            let p = cfg.params.as_ref().expect("validated");
            let which = cfg.which.expect("validated");
            let report =
                lln_experiment(p, which, &cfg.n_sweep, cfg.k, cfg.seed, cfg.sampler)?;
            match cfg.format {
                OutputFormat::Csv => {
                    let mut out = String::from("n,which,k,mean,std,target,gap\n");
                    for pt in &report.points {
                        out.push_str(&format!(
                            "{},{:?},{},{},{},{},{}\n",
                            pt.n, report.which, pt.k, pt.mean, pt.std, pt.target, pt.gap
                        ));
                    }
                    emit(cfg, out)
                }
                _ => emit(cfg, serde_json::to_string_pretty(&report)? + "\n"),
            }
        }
        CommandKind::Rates => {
            let p = cfg.params.as_ref().expect("validated");
            let (reports, fit) =
                rate_experiment(p, &cfg.n_sweep, cfg.k, cfg.seed, cfg.sampler, cfg.threads)?;
            match cfg.format {
                OutputFormat::Csv => {
                    let flat: Vec<&BlockReport> = reports.iter().flatten().collect();
                    emit(cfg, block_reports_csv(&flat))
                }
                _ => {
                    let doc = serde_json::json!({
                        "sweep": reports,
                        "fit": fit,
                    });
                    emit(cfg, serde_json::to_string_pretty(&doc)? + "\n")
                }
            }
        }
        CommandKind::Verify => {
            let mp = load_margins(cfg)?;
            let table = solve_typical(&mp, 1e-12, DEFAULT_MAX_ITER)?;
            let report = verify_barvinok_uniformity(&mp, &table, cfg.tol)?;
            emit(cfg, serde_json::to_string_pretty(&report)? + "\n")
        }
    }
}

/// Top-level entry used by the binary: parse, run, map errors to exit
/// codes, and print machine-readable JSON errors on stderr.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cfg = match parse_config(argv) {
        Ok(cfg) => cfg,
        Err(e) => return report_error(e),
    };
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => report_error(e),
    }
}

fn report_error(e: CliError) -> i32 {
    let code = e.exit_code();
    let doc = serde_json::json!({
        "error": e.to_string(),
        "exit_code": code,
    });
    eprintln!("{doc}");
    code
}
