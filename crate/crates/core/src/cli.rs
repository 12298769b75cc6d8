//! The `auction-lab` command line: experiment runs, exact lemma checks,
//! frontier sweeps and bound tables.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{self, FrontierBase};
use crate::config::{parse_config, Experiment, ExperimentConfig};
use crate::error::{Error, Result};
use crate::mechanism::{Mechanism, MechanismKind, MechanismParams};
use crate::money::{parse_fraction, ExactNumber, Fraction, Money};
use crate::oracle::{self, InstanceSummary, LookaheadOracle, VerificationReport, Witness};
use crate::simulator::run_experiment;
use crate::valuation::{DistributionSpec, MoneyGrid, ValuationDistribution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

/// Witnesses kept per check in the oracle report.
const MAX_WITNESSES: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "auction-lab", version, about = "Repeated-auction simulation lab and exact lemma oracle")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; drawn from entropy and printed when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Per-round CSV of the first replication.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    #[arg(long, global = true)]
    reps: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct InstanceArgs {
    /// Uniform value grid with N evenly spaced points on [0, 1].
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long = "T")]
    horizon: Option<u64>,
    /// Comma-separated list for `frontier`; a single value elsewhere.
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<String>,
    #[arg(long)]
    rho: Option<String>,
    /// Lookahead depths, comma-separated.
    #[arg(long, value_delimiter = ',')]
    k: Vec<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a configured experiment and write its JSON revenue report.
    Simulate(InstanceArgs),
    /// Exhaustively verify the good-state lemmas on a small instance.
    Oracle(InstanceArgs),
    /// Sweep epsilon and write the revenue-tradeoff frontier as CSV.
    Frontier(InstanceArgs),
    /// Tabulate the ex-post IR revenue bound ln(k mu) + 1 as CSV.
    Bounds {
        #[command(flatten)]
        instance: InstanceArgs,
        /// Mean value; the config distribution's mean when omitted.
        #[arg(long)]
        mu: Option<f64>,
    },
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let common = &cli.common;
    let pool = match common.threads {
        Some(0) => return Err(Error::param("threads", "must be at least 1")),
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::param("threads", e.to_string()))?,
        ),
        None => None,
    };
    let run = || match &cli.command {
        Command::Simulate(a) => simulate(common, a),
        Command::Oracle(a) => oracle_cmd(common, a),
        Command::Frontier(a) => frontier(common, a),
        Command::Bounds { instance, mu } => bounds(common, instance, *mu),
    };
    match pool {
        Some(pool) => pool.install(run),
        None => run(),
    }
}

fn read_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

fn parse_number(field: &str, text: &str) -> Result<Fraction> {
    parse_fraction(text).map_err(|e| Error::param(field, e.to_string()))
}

fn single_epsilon(a: &InstanceArgs) -> Result<Option<Fraction>> {
    match a.epsilon.as_slice() {
        [] => Ok(None),
        [one] => parse_number("epsilon", one).map(Some),
        _ => Err(Error::param("epsilon", "expects a single value here")),
    }
}

fn uniform_spec(points: usize) -> Result<DistributionSpec> {
    if points < 2 {
        return Err(Error::param("grid", "needs at least 2 points"));
    }
    Ok(DistributionSpec::Uniform { max_value: Money::from_integer(1), tick: Money::new(1, points as i128 - 1) })
}

fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> u64 {
    flag.or(config).unwrap_or_else(|| {
        let seed = rand::random::<u64>();
        eprintln!("seed: {seed}");
        seed
    })
}

fn write_output(out: Option<&Path>, body: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, body)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(body)?;
            stdout.flush()?;
        }
    }
    Ok(())
}

/// Applies command-line overrides on top of a parsed config.
fn apply_overrides(cfg: &mut ExperimentConfig, common: &CommonArgs, a: &InstanceArgs) -> Result<()> {
    if let Some(eps) = single_epsilon(a)? {
        cfg.mechanism.epsilon = ExactNumber(eps);
    }
    if let Some(rho) = &a.rho {
        cfg.mechanism.rho = ExactNumber(parse_number("rho", rho)?);
    }
    if let Some(t) = a.horizon {
        cfg.horizon = t;
    }
    if let Some(n) = a.grid {
        cfg.distribution = uniform_spec(n)?;
    }
    if let Some(reps) = common.reps {
        cfg.reps = reps;
    }
    if common.seed.is_some() {
        cfg.seed = common.seed;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    if common.trace.is_some() {
        cfg.trace = common.trace.clone();
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    Ok(())
}

fn simulate(common: &CommonArgs, a: &InstanceArgs) -> Result<i32> {
    let path = common.config.as_deref().ok_or_else(|| Error::param("config", "simulate needs --config"))?;
    let mut cfg = read_config(path)?;
    apply_overrides(&mut cfg, common, a)?;
    if !a.k.is_empty() {
        return Err(Error::param("k", "set the lookahead in the config's agent section"));
    }
    let seed = resolve_seed(cfg.seed, None);
    cfg.seed = Some(seed);
    let exp = cfg.build()?;
    let report = run_experiment(&exp, seed)?;
    let mut body = serde_json::to_vec_pretty(&report)?;
    body.push(b'\n');
    write_output(exp.config.out.as_deref(), &body)?;
    Ok(EXIT_OK)
}

/// One verification check merged over every `(k, t)` it ran on.
#[derive(Debug, Serialize)]
pub struct CheckSummary {
    pub check: String,
    pub cases: u64,
    pub violations: usize,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
}

impl CheckSummary {
    fn from_reports(check: &str, reports: Vec<VerificationReport>) -> Self {
        let cases = reports.iter().map(|r| r.cases).sum();
        let all: Vec<Witness> = reports.into_iter().flat_map(|r| r.violations).collect();
        Self {
            check: check.to_string(),
            cases,
            violations: all.len(),
            passed: all.is_empty(),
            witnesses: all.into_iter().take(MAX_WITNESSES).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct GeometricSummary {
    pub cases: usize,
    pub max_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct OracleReport {
    pub instance: InstanceSummary,
    pub ks: Vec<u64>,
    pub checks: Vec<CheckSummary>,
    pub geometric: GeometricSummary,
    pub passed: bool,
}

/// Closed form against enumeration over `rho` in {0.1, ..., 1} and `k` in 1..=10.
pub fn geometric_grid() -> Result<GeometricSummary> {
    let tolerance = 1e-12;
    let mut max_gap: f64 = 0.0;
    let mut cases = 0;
    for i in 1..=10 {
        for k in 1..=10 {
            let check = oracle::geometric_truncated_mean(i as f64 / 10.0, k)?;
            max_gap = max_gap.max(check.gap());
            cases += 1;
        }
    }
    Ok(GeometricSummary { cases, max_gap, tolerance, passed: max_gap <= tolerance })
}

/// Runs every lemma check on one instance.
pub fn verify_instance(mech: &Mechanism, dist: &ValuationDistribution, ks: &[u64]) -> Result<OracleReport> {
    let mut o = LookaheadOracle::new(mech, dist)?;
    let horizon = o.horizon();
    let persistence = oracle::verify_good_persistence(&mut o, ks);
    let instance = persistence.instance.clone();
    let closed = oracle::verify_closed_form_bids(&mut o, ks);
    let mut border = Vec::new();
    let mut delta = Vec::new();
    for &k in ks {
        for t in 1..horizon {
            border.push(oracle::verify_border_dominance(&mut o, k, t));
            delta.push(oracle::verify_delta_positive(&mut o, k, t));
        }
    }
    let checks = vec![
        CheckSummary::from_reports("good_persistence", vec![persistence]),
        CheckSummary::from_reports("border_dominance", border),
        CheckSummary::from_reports("delta_positive", delta),
        CheckSummary::from_reports("closed_form_bids", vec![closed]),
    ];
    let geometric = geometric_grid()?;
    let passed = geometric.passed && checks.iter().all(|c| c.passed);
    Ok(OracleReport { instance, ks: ks.to_vec(), checks, geometric, passed })
}

fn oracle_cmd(common: &CommonArgs, a: &InstanceArgs) -> Result<i32> {
    let ks = if a.k.is_empty() { vec![1, 2, 3] } else { a.k.clone() };
    let (mech, dist) = match &common.config {
        Some(path) => {
            let mut cfg = read_config(path)?;
            apply_overrides(&mut cfg, common, a)?;
            let Experiment { mechanism, distribution, .. } = cfg.build()?;
            (mechanism, distribution)
        }
        None => {
            let dist = ValuationDistribution::uniform(MoneyGrid::unit(a.grid.unwrap_or(5))?)?;
            let eps = single_epsilon(a)?.unwrap_or(Fraction::new(1, 2));
            let rho = match &a.rho {
                Some(r) => parse_number("rho", r)?,
                None => MechanismParams::boundary_rho(eps),
            };
            let params = MechanismParams::for_distribution(&dist, eps, rho, a.horizon.unwrap_or(8))?;
            (Mechanism::new(MechanismKind::Threshold, params), dist)
        }
    };
    let report = verify_instance(&mech, &dist, &ks)?;
    for c in &report.checks {
        eprintln!("{:<18} {:>8} cases {:>6} violations", c.check, c.cases, c.violations);
    }
    let mut body = serde_json::to_vec_pretty(&report)?;
    body.push(b'\n');
    write_output(common.out.as_deref(), &body)?;
    Ok(if report.passed { EXIT_OK } else { EXIT_VIOLATION })
}

fn frontier(common: &CommonArgs, a: &InstanceArgs) -> Result<i32> {
    let eps_list: Vec<Fraction> = if a.epsilon.is_empty() {
        (1..10).map(|i| Fraction::new(i, 10)).collect()
    } else {
        a.epsilon.iter().map(|e| parse_number("epsilon", e)).collect::<Result<_>>()?
    };
    if a.rho.is_some() {
        return Err(Error::param("rho", "frontier sets rho = epsilon / (2 - epsilon) itself"));
    }
    let cfg = common.config.as_deref().map(read_config).transpose()?;
    let distribution = match (a.grid, &cfg) {
        (Some(n), _) => uniform_spec(n)?,
        (None, Some(c)) => c.distribution.clone(),
        (None, None) => uniform_spec(101)?,
    };
    let base = FrontierBase {
        distribution,
        horizon: a.horizon.or(cfg.as_ref().map(|c| c.horizon)).unwrap_or(1000),
        reps: common.reps.or(cfg.as_ref().map(|c| c.reps)).unwrap_or(100),
        seed: resolve_seed(common.seed, cfg.as_ref().and_then(|c| c.seed)),
    };
    let points = analysis::frontier_sweep(&eps_list, &base)?;
    let mut body = Vec::new();
    analysis::write_frontier_csv(&points, &mut body)?;
    write_output(common.out.as_deref(), &body)?;
    let bad: Vec<_> = points.iter().filter(|p| !p.respects_impossibility()).collect();
    for p in &bad {
        eprintln!("epsilon {}: beta_hat {} above the impossibility line", p.epsilon, p.beta_hat);
    }
    Ok(if bad.is_empty() { EXIT_OK } else { EXIT_VIOLATION })
}

fn bounds(common: &CommonArgs, a: &InstanceArgs, mu: Option<f64>) -> Result<i32> {
    let ks = if a.k.is_empty() { vec![1, 2, 3] } else { a.k.clone() };
    let mu = match (mu, &common.config) {
        (Some(mu), _) => mu,
        (None, Some(path)) => read_config(path)?.build()?.distribution.mean().to_f64(),
        (None, None) => return Err(Error::param("mu", "bounds needs --mu or --config")),
    };
    let rows = analysis::expost_bound_table(&ks, mu)?;
    for r in rows.iter().filter(|r| r.vacuous) {
        eprintln!("k={}: k*mu < 1, bound is vacuous", r.k);
    }
    let mut body = Vec::new();
    analysis::write_bounds_csv(&rows, &mut body)?;
    write_output(common.out.as_deref(), &body)?;
    Ok(EXIT_OK)
}
