//! Command-line harness: `sample`, `verify`, `lemma-check`, `distinguish`.
//!
//! Exit codes: 0 ok, 1 I/O failure, 2 configuration error, 3 invalid graph,
//! 4 violated invariant.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{stream_id, LazyChain, RandomStream, StateId, StreamPurpose};
use crate::estimator::{self, EstimatorResult, ParamSet, StageRecord};
use crate::graphs::{self, GraphError, RegularGraph};
use crate::oracle::{self, MAX_DENSE_STATES};
use crate::stats::{self, DistributionVector};

pub const SCHEMA_VERSION: &str = "1";

pub const CSV_HEADER: [&str; 7] = [
    "stage_i",
    "horizon",
    "experiments",
    "successes",
    "mean_z",
    "threshold",
    "steps_charged",
];

const INVARIANT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Graph(_) => 3,
            CliError::Invariant(_) => 4,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "birthday-mix",
    version,
    about = "Collision-based mixing detection and sampling for random walks on regular graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Find a mixed horizon and draw samples from it.
    Sample(SampleArgs),
    /// Run the exact-oracle invariant checks on a graph.
    Verify(VerifyArgs),
    /// Check the collision moment formulas against brute-force enumeration.
    LemmaCheck(LemmaArgs),
    /// Compare the short-horizon collision statistic on K_n and glued cliques.
    Distinguish(DistinguishArgs),
}

#[derive(Debug, Args, Default)]
struct SampleArgs {
    /// family:params (complete:16, glued:32, cycle:9, hypercube:6, regular:100,3) or edgelist:path
    #[arg(long)]
    graph: Option<String>,
    #[arg(long)]
    x0: Option<u64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Multiplier on the copy and experiment counts; below 1 voids the guarantee.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of samples drawn at the chosen horizon.
    #[arg(long)]
    samples: Option<u64>,
    /// JSON result path (stdout when absent).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Stage table path (defaults to the output path with a .csv extension).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Audit the chosen horizon with the exact oracle.
    #[arg(long)]
    verify: bool,
    /// TOML file with any of the above keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    graph: String,
    #[arg(long, default_value_t = 0)]
    x0: u64,
    /// Extra epsilon for the cap-bound check, on top of 0.25 and 1.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LemmaArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    l: u32,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DistinguishArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Experiments per graph family.
    #[arg(long, default_value_t = 200)]
    budget: u64,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    scale: f64,
    /// Stage index; the horizon is 2^stage.
    #[arg(long, default_value_t = 1)]
    stage: u32,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Graph family and parameters as written on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    Complete(usize),
    Glued(usize),
    Cycle(usize),
    Hypercube(u32),
    Regular {
        n: usize,
        d: usize,
        seed: Option<u64>,
    },
    EdgeList(PathBuf),
}

impl FromStr for GraphSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (family, params) = s
            .split_once(':')
            .ok_or_else(|| config_err(format!("graph spec {s:?} is not family:params")))?;
        let int = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| config_err(format!("bad graph parameter {t:?} in {s:?}")))
        };
        match family {
            "complete" => Ok(GraphSpec::Complete(int(params)?)),
            "glued" => Ok(GraphSpec::Glued(int(params)?)),
            "cycle" => Ok(GraphSpec::Cycle(int(params)?)),
            "hypercube" => Ok(GraphSpec::Hypercube(int(params)? as u32)),
            "regular" => {
                let parts: Vec<&str> = params.split(',').collect();
                match parts.as_slice() {
                    [n, d] => Ok(GraphSpec::Regular {
                        n: int(n)?,
                        d: int(d)?,
                        seed: None,
                    }),
                    [n, d, seed] => Ok(GraphSpec::Regular {
                        n: int(n)?,
                        d: int(d)?,
                        seed: Some(int(seed)? as u64),
                    }),
                    _ => Err(config_err(format!(
                        "regular graph spec {s:?} needs n,d[,seed]"
                    ))),
                }
            }
            "edgelist" => Ok(GraphSpec::EdgeList(PathBuf::from(params))),
            other => Err(config_err(format!("unknown graph family {other:?}"))),
        }
    }
}

impl GraphSpec {
    /// Builds the graph; `regular` without an explicit seed uses `run_seed`.
    pub fn build(&self, run_seed: u64) -> Result<RegularGraph, CliError> {
        let g = match self {
            GraphSpec::Complete(n) => graphs::complete_graph(*n)?,
            GraphSpec::Glued(n) => graphs::glued_cliques(*n)?,
            GraphSpec::Cycle(n) => graphs::cycle(*n)?,
            GraphSpec::Hypercube(dim) => graphs::hypercube(*dim)?,
            GraphSpec::Regular { n, d, seed } => {
                graphs::random_regular(*n, *d, seed.unwrap_or(run_seed))?
            }
            GraphSpec::EdgeList(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
                graphs::from_edge_list(&text)?
            }
        };
        Ok(g)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    graph: Option<String>,
    x0: Option<u64>,
    epsilon: Option<f64>,
    scale: Option<f64>,
    seed: Option<u64>,
    samples: Option<u64>,
    output: Option<PathBuf>,
    csv: Option<PathBuf>,
    verify: Option<bool>,
}

/// Fully resolved settings for `sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph_text: String,
    pub graph: GraphSpec,
    pub x0: u64,
    pub epsilon: f64,
    pub scale: f64,
    pub seed: u64,
    pub samples: u64,
    pub output: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub verify: bool,
}

fn resolve_sample(args: SampleArgs, err: &mut dyn Write) -> Result<ExperimentConfig, CliError> {
    let file = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str::<ConfigFile>(&text).map_err(config_err)?
        }
        None => ConfigFile::default(),
    };
    let graph_text = args
        .graph
        .or(file.graph)
        .ok_or_else(|| config_err("--graph is required"))?;
    let graph = graph_text.parse()?;
    let seed = resolve_seed(args.seed.or(file.seed), err)?;
    let config = ExperimentConfig {
        graph_text,
        graph,
        x0: args.x0.or(file.x0).unwrap_or(0),
        epsilon: args.epsilon.or(file.epsilon).unwrap_or(1.0),
        scale: args.scale.or(file.scale).unwrap_or(1.0),
        seed,
        samples: args.samples.or(file.samples).unwrap_or(1),
        output: args.output.or(file.output),
        csv: args.csv.or(file.csv),
        verify: args.verify || file.verify.unwrap_or(false),
    };
    if !(config.epsilon > 0.0 && config.epsilon <= 1.0) {
        return Err(config_err(format!(
            "epsilon must lie in (0, 1], got {}",
            config.epsilon
        )));
    }
    if !(config.scale > 0.0 && config.scale <= 1.0) {
        return Err(config_err(format!(
            "scale must lie in (0, 1], got {}",
            config.scale
        )));
    }
    if config.samples == 0 {
        return Err(config_err("samples must be at least 1"));
    }
    Ok(config)
}

fn resolve_seed(seed: Option<u64>, err: &mut dyn Write) -> Result<u64, CliError> {
    Ok(match seed {
        Some(s) => s,
        None => {
            let s = rand::random::<u64>();
            writeln!(err, "seed: {s}")?;
            s
        }
    })
}

/// Entry point used by the binary. Parses `args` (including the program
/// name) and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Sample(a) => resolve_sample(a, err).and_then(|c| cmd_sample(&c, out, err)),
        Command::Verify(a) => cmd_verify_args(a, out, err),
        Command::LemmaCheck(a) => resolve_seed(a.seed, err)
            .and_then(|seed| cmd_lemma_check(a.n, a.l, a.trials, seed, out)),
        Command::Distinguish(a) => cmd_distinguish_args(a, out, err),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug, Serialize)]
struct StageRow {
    i: u32,
    horizon: u64,
    experiments: u64,
    successes: u64,
    mean_z: f64,
    threshold: f64,
    steps_charged: u64,
    stop: bool,
    z_values: Vec<u64>,
}

impl From<&StageRecord> for StageRow {
    fn from(s: &StageRecord) -> Self {
        Self {
            i: s.i,
            horizon: s.horizon,
            experiments: s.experiments,
            successes: s.successes,
            mean_z: s.mean_z(),
            threshold: s.threshold,
            steps_charged: s.steps_charged,
            stop: s.stop,
            z_values: s.z_values.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Audit {
    pub deviation_squared: f64,
    pub deviation: f64,
    pub within_delta: bool,
    pub tv_to_uniform: f64,
}

#[derive(Debug, Serialize)]
struct SampleOutput<'a> {
    schema: &'static str,
    command: &'static str,
    graph: &'a str,
    n: usize,
    degree: usize,
    x0: u64,
    seed: u64,
    guarantee: &'static str,
    params: &'a ParamSet,
    i_final: u32,
    horizon: u64,
    capped: bool,
    samples: &'a [StateId],
    estimation_steps: u64,
    sampling_steps: u64,
    total_steps: u64,
    stages: Vec<StageRow>,
    audit: Option<Audit>,
}

fn guarantee_label(params: &ParamSet) -> &'static str {
    if params.guarantee_voided() {
        "voided_by_scale"
    } else {
        "theorem"
    }
}

/// Exact `||n mu - 1||^2` and TV to uniform at the chosen horizon.
pub fn audit_result(
    g: &RegularGraph,
    x0: usize,
    result: &EstimatorResult,
) -> Result<Audit, CliError> {
    let m = oracle::lazy_matrix(g).map_err(config_err)?;
    let mu = oracle::evolve_by_squaring(
        &DistributionVector::point_mass(g.n(), x0),
        &m,
        result.horizon,
    )
    .map_err(config_err)?;
    let dev2 = stats::l2_deviation_squared(&mu);
    let tv = stats::tv_distance(&mu, &DistributionVector::uniform(g.n())).map_err(config_err)?;
    Ok(Audit {
        deviation_squared: dev2,
        deviation: dev2.sqrt(),
        within_delta: dev2 <= result.params.delta,
        tv_to_uniform: tv,
    })
}

/// Writes the stage table with the fixed [`CSV_HEADER`].
pub fn write_stage_csv<W: Write>(w: W, stages: &[StageRecord]) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(CSV_HEADER)
        .map_err(|e| CliError::Io(e.into()))?;
    for s in stages {
        csv.write_record([
            s.i.to_string(),
            s.horizon.to_string(),
            s.experiments.to_string(),
            s.successes.to_string(),
            s.mean_z().to_string(),
            s.threshold.to_string(),
            s.steps_charged.to_string(),
        ])
        .map_err(|e| CliError::Io(e.into()))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn cmd_sample(
    config: &ExperimentConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let g = config.graph.build(config.seed)?;
    let x0 = StateId(config.x0);
    let walk = g.as_oracle(x0).map_err(config_err)?;
    let result = estimator::sample_many(
        walk,
        config.epsilon,
        config.samples,
        config.scale,
        config.seed,
    )
    .map_err(config_err)?;
    if result.params.guarantee_voided() {
        writeln!(
            err,
            "warning: scale {} < 1, accuracy guarantee voided",
            config.scale
        )?;
    }
    let audit = if config.verify {
        if g.n() > MAX_DENSE_STATES {
            return Err(config_err(format!(
                "--verify needs n <= {MAX_DENSE_STATES}, graph has {}",
                g.n()
            )));
        }
        Some(audit_result(&g, x0.index(), &result)?)
    } else {
        None
    };
    let doc = SampleOutput {
        schema: SCHEMA_VERSION,
        command: "sample",
        graph: &config.graph_text,
        n: g.n(),
        degree: g.degree(),
        x0: config.x0,
        seed: config.seed,
        guarantee: guarantee_label(&result.params),
        params: &result.params,
        i_final: result.i_final,
        horizon: result.horizon,
        capped: result.capped,
        samples: &result.samples,
        estimation_steps: result.estimation_steps,
        sampling_steps: result.sampling_steps,
        total_steps: result.total_steps,
        stages: result.stages.iter().map(StageRow::from).collect(),
        audit,
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.into()))?;
    match &config.output {
        Some(path) => {
            fs::write(path, format!("{json}\n"))?;
            writeln!(out, "wrote {}", path.display())?;
        }
        None => writeln!(out, "{json}")?,
    }
    let csv_path = config
        .csv
        .clone()
        .or_else(|| config.output.as_ref().map(|p| p.with_extension("csv")));
    if let Some(path) = csv_path {
        write_stage_csv(fs::File::create(&path)?, &result.stages)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub graph: String,
    pub n: usize,
    pub degree: usize,
    pub gap: f64,
    pub min_eigenvalue: f64,
    pub tau_mix: u64,
    pub checks: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Runs the exact invariant checks on the lazy walk over `g`.
pub fn verify_graph(
    label: &str,
    g: &RegularGraph,
    x0: usize,
    epsilons: &[f64],
) -> Result<VerifyReport, CliError> {
    let n = g.n();
    if n > MAX_DENSE_STATES {
        return Err(config_err(format!(
            "verify needs n <= {MAX_DENSE_STATES}, graph has {n}"
        )));
    }
    if x0 >= n {
        return Err(config_err(format!("x0 {x0} out of range for n={n}")));
    }
    let m = oracle::lazy_matrix(g).map_err(config_err)?;
    let nf = n as f64;
    let mut checks = Vec::new();
    let mut check = |name: &str, pass: bool, detail: String| {
        checks.push(CheckRow {
            name: name.to_string(),
            pass,
            detail,
        })
    };

    let (row_err, col_err) = (m.row_sum_error(), m.column_sum_error());
    check(
        "doubly_stochastic",
        row_err <= INVARIANT_TOLERANCE && col_err <= INVARIANT_TOLERANCE,
        format!("max row error {row_err:.3e}, max column error {col_err:.3e}"),
    );
    let asym = m.asymmetry();
    check(
        "symmetric",
        asym <= INVARIANT_TOLERANCE,
        format!("max asymmetry {asym:.3e}"),
    );

    let spectrum = oracle::spectral_check(&m).map_err(|e| CliError::Invariant(e.to_string()))?;
    let floor = -1.0 + 2.0 / nf;
    check(
        "min_eigenvalue",
        spectrum.min_eigenvalue >= floor - INVARIANT_TOLERANCE,
        format!("lambda_min {:.12} >= {floor:.12}", spectrum.min_eigenvalue),
    );
    let gap_floor = 1.0 / nf.powi(4);
    check(
        "spectral_gap",
        spectrum.gap >= gap_floor,
        format!("gap {:.12} >= 1/n^4 = {gap_floor:.3e}", spectrum.gap),
    );

    let tau_mix = oracle::exact_tau_mix(&m).map_err(|e| CliError::Invariant(e.to_string()))?;
    check("tau_mix_finite", true, format!("tau_mix = {tau_mix}"));

    let mut worst_rise = f64::NEG_INFINITY;
    for start in 0..n {
        let trace = oracle::deviation_trace(&m, start, 2 * tau_mix).map_err(config_err)?;
        for w in trace.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    if n == 1 || tau_mix == 0 {
        worst_rise = 0.0;
    }
    check(
        "monotone_decay",
        worst_rise <= INVARIANT_TOLERANCE,
        format!(
            "largest one-step increase {worst_rise:.3e} over t <= {}",
            2 * tau_mix
        ),
    );

    for &eps in epsilons {
        let params = estimator::derive_params(n as u64, eps, 1.0).map_err(config_err)?;
        let target = (params.delta / 2.0).powi(2);
        let tau =
            oracle::exact_tau(&m, x0, target).map_err(|e| CliError::Invariant(e.to_string()))?;
        check(
            &format!("cap_bound_eps_{eps}"),
            (tau as f64) <= params.a_n,
            format!("tau((delta/2)^2) = {tau} <= A_n = {:.6e}", params.a_n),
        );
    }

    Ok(VerifyReport {
        schema: SCHEMA_VERSION,
        command: "verify",
        graph: label.to_string(),
        n,
        degree: g.degree(),
        gap: spectrum.gap,
        min_eigenvalue: spectrum.min_eigenvalue,
        tau_mix,
        checks,
    })
}

fn cmd_verify_args(
    a: VerifyArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let spec: GraphSpec = a.graph.parse()?;
    let needs_seed = matches!(spec, GraphSpec::Regular { seed: None, .. });
    let seed = if needs_seed {
        resolve_seed(a.seed, err)?
    } else {
        a.seed.unwrap_or(0)
    };
    let g = spec.build(seed)?;
    let mut epsilons = vec![0.25, 1.0];
    if let Some(e) = a.epsilon {
        if !(e > 0.0 && e <= 1.0) {
            return Err(config_err(format!("epsilon must lie in (0, 1], got {e}")));
        }
        if !epsilons.contains(&e) {
            epsilons.push(e);
        }
    }
    let report = verify_graph(&a.graph, &g, a.x0 as usize, &epsilons)?;
    let mut table = String::new();
    writeln!(
        table,
        "graph {} (n={}, d={})",
        report.graph, report.n, report.degree
    )
    .unwrap();
    writeln!(
        table,
        "gap={:.12} lambda_min={:.12} tau_mix={}",
        report.gap, report.min_eigenvalue, report.tau_mix
    )
    .unwrap();
    for c in &report.checks {
        writeln!(
            table,
            "{:<4} {:<24} {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        )
        .unwrap();
    }
    write!(out, "{table}")?;
    if let Some(path) = &a.output {
        let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.into()))?;
        fs::write(path, format!("{json}\n"))?;
    }
    if report.all_pass() {
        Ok(())
    } else {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Invariant(failed.join(", ")))
    }
}

/// Random distribution with a tunable amount of skew, so that trials cover
/// near-uniform, spiky and point-mass-like cases.
pub fn random_distribution(n: usize, rng: &mut RandomStream) -> DistributionVector {
    let sharpness = [1, 2, 4, 8][rng.below(4) as usize];
    loop {
        let w: Vec<f64> = (0..n).map(|_| rng.unit().powi(sharpness)).collect();
        if w.iter().sum::<f64>() > 0.0 {
            return DistributionVector::from_weights(w).expect("positive weights");
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub trials: u64,
    pub worst_mean_error: f64,
    /// Smallest `bound - var` seen; negative means a violation.
    pub worst_variance_slack: f64,
    pub failures: u64,
}

/// Checks `E(Z) = C(l,2) sum p^2` and the variance bound on `trials` random
/// distributions against exact enumeration.
pub fn lemma_check(n: usize, l: u32, trials: u64, seed: u64) -> Result<LemmaSummary, CliError> {
    if n == 0 || l < 2 {
        return Err(config_err("lemma-check needs n >= 1 and l >= 2"));
    }
    match (n as u64).checked_pow(l) {
        Some(c) if c <= oracle::MAX_ENUMERATION => {}
        _ => {
            return Err(config_err(format!(
                "{n}^{l} outcomes exceeds the enumeration cap of {}",
                oracle::MAX_ENUMERATION
            )))
        }
    }
    let mut rng = RandomStream::new(seed, stream_id(StreamPurpose::Auxiliary, 0, 0, 0));
    let mut summary = LemmaSummary {
        trials,
        worst_mean_error: 0.0,
        worst_variance_slack: f64::INFINITY,
        failures: 0,
    };
    for _ in 0..trials {
        let p = random_distribution(n, &mut rng);
        let (mean, var) = oracle::enumerate_collision_moments(&p, l).map_err(config_err)?;
        let mean_error = (mean - stats::expected_z(&p, u64::from(l))).abs();
        let slack = stats::variance_bound(mean, n as u64, u64::from(l)) - var;
        summary.worst_mean_error = summary.worst_mean_error.max(mean_error);
        summary.worst_variance_slack = summary.worst_variance_slack.min(slack);
        if mean_error > INVARIANT_TOLERANCE || slack < -INVARIANT_TOLERANCE {
            summary.failures += 1;
        }
    }
    Ok(summary)
}

pub fn cmd_lemma_check(
    n: usize,
    l: u32,
    trials: u64,
    seed: u64,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let s = lemma_check(n, l, trials, seed)?;
    writeln!(
        out,
        "lemma-check n={n} l={l} trials={} seed={seed}: worst mean error {:.3e}, worst variance slack {:.6e}, failures {}",
        s.trials, s.worst_mean_error, s.worst_variance_slack, s.failures
    )?;
    if s.failures == 0 {
        writeln!(out, "PASS")?;
        Ok(())
    } else {
        writeln!(out, "FAIL")?;
        Err(CliError::Invariant(format!(
            "{} of {} trials violated the moment checks",
            s.failures, s.trials
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyReport {
    pub family: String,
    pub mean_z: f64,
    pub sd_z: f64,
    pub min_z: u64,
    pub max_z: u64,
    pub successes: u64,
    /// Exact `C(l,2) sum mu_x^2` at the horizon.
    pub predicted_mean_z: f64,
    pub z_values: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistinguishReport {
    pub schema: &'static str,
    pub command: &'static str,
    pub n: usize,
    pub seed: u64,
    pub stage: u32,
    pub horizon: u64,
    pub l: u64,
    pub experiments: u64,
    pub threshold: f64,
    pub guarantee: &'static str,
    pub complete: FamilyReport,
    pub glued: FamilyReport,
}

fn family_report(
    family: &str,
    g: &RegularGraph,
    stage: u32,
    params: &ParamSet,
    budget: u64,
    seed: u64,
) -> Result<FamilyReport, CliError> {
    let chain = LazyChain::new(g.as_oracle(StateId(0)).map_err(config_err)?);
    let reports: Vec<_> = (0..budget)
        .into_par_iter()
        .map(|e| estimator::run_experiment(&chain, stage, e, params, seed))
        .collect();
    let z: Vec<u64> = reports.iter().map(|r| r.z).collect();
    let mean = z.iter().sum::<u64>() as f64 / z.len().max(1) as f64;
    let var =
        z.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (z.len().max(2) - 1) as f64;
    let m = oracle::lazy_matrix(g).map_err(config_err)?;
    let mu = oracle::evolve_by_squaring(
        &DistributionVector::point_mass(g.n(), 0),
        &m,
        estimator::horizon(stage),
    )
    .map_err(config_err)?;
    Ok(FamilyReport {
        family: family.to_string(),
        mean_z: mean,
        sd_z: var.sqrt(),
        min_z: z.iter().copied().min().unwrap_or(0),
        max_z: z.iter().copied().max().unwrap_or(0),
        successes: reports.iter().filter(|r| r.success() == Some(true)).count() as u64,
        predicted_mean_z: stats::expected_z(&mu, params.l),
        z_values: z,
    })
}

/// Runs the stage-`stage` collision experiment `budget` times on `K_n` and
/// on the glued cliques, with the same streams for both.
pub fn distinguish(
    n: usize,
    seed: u64,
    budget: u64,
    epsilon: f64,
    scale: f64,
    stage: u32,
) -> Result<DistinguishReport, CliError> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(config_err(format!(
            "distinguish needs even n >= 4, got {n}"
        )));
    }
    if n > MAX_DENSE_STATES {
        return Err(config_err(format!(
            "distinguish needs n <= {MAX_DENSE_STATES}"
        )));
    }
    if budget == 0 || stage == 0 || stage >= 40 {
        return Err(config_err("budget must be positive and stage in 1..40"));
    }
    let params = estimator::derive_params(n as u64, epsilon, scale).map_err(config_err)?;
    let complete = graphs::complete_graph(n)?;
    let glued = graphs::glued_cliques(n)?;
    Ok(DistinguishReport {
        schema: SCHEMA_VERSION,
        command: "distinguish",
        n,
        seed,
        stage,
        horizon: estimator::horizon(stage),
        l: params.l,
        experiments: budget,
        threshold: params.threshold().value(),
        guarantee: guarantee_label(&params),
        complete: family_report("complete", &complete, stage, &params, budget, seed)?,
        glued: family_report("glued", &glued, stage, &params, budget, seed)?,
    })
}

fn cmd_distinguish_args(
    a: DistinguishArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let seed = resolve_seed(a.seed, err)?;
    let report = distinguish(a.n, seed, a.budget, a.epsilon, a.scale, a.stage)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.into()))?;
    match &a.output {
        Some(path) => {
            fs::write(path, format!("{json}\n"))?;
            for f in [&report.complete, &report.glued] {
                writeln!(
                    out,
                    "{:<8} mean Z {:.3} (exact {:.3}), sd {:.3}, successes {}/{}",
                    f.family, f.mean_z, f.predicted_mean_z, f.sd_z, f.successes, report.experiments
                )?;
            }
        }
        None => writeln!(out, "{json}")?,
    }
    Ok(())
}

/// Parses a sample-command config from a TOML string, for tests and callers
/// embedding the harness.
pub fn parse_config_file(text: &str) -> Result<(), CliError> {
    toml::from_str::<ConfigFile>(text)
        .map(|_| ())
        .map_err(config_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_spec_grammar() {
        assert_eq!(
            "complete:16".parse::<GraphSpec>().unwrap(),
            GraphSpec::Complete(16)
        );
        assert_eq!(
            "glued:32".parse::<GraphSpec>().unwrap(),
            GraphSpec::Glued(32)
        );
        assert_eq!("cycle:9".parse::<GraphSpec>().unwrap(), GraphSpec::Cycle(9));
        assert_eq!(
            "hypercube:6".parse::<GraphSpec>().unwrap(),
            GraphSpec::Hypercube(6)
        );
        assert_eq!(
            "regular:100,3".parse::<GraphSpec>().unwrap(),
            GraphSpec::Regular {
                n: 100,
                d: 3,
                seed: None
            }
        );
        assert_eq!(
            "edgelist:a/b.txt".parse::<GraphSpec>().unwrap(),
            GraphSpec::EdgeList(PathBuf::from("a/b.txt"))
        );
        for bad in ["complete", "torus:4", "cycle:x", "regular:4"] {
            assert_eq!(bad.parse::<GraphSpec>().unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn config_file_rejects_unknown_keys() {
        assert!(parse_config_file("graph = \"complete:4\"\nseed = 3\n").is_ok());
        assert!(parse_config_file("grpah = \"complete:4\"\n").is_err());
    }

    #[test]
    fn lemma_check_guard_and_pass() {
        assert_eq!(lemma_check(4, 20, 1, 0).unwrap_err().exit_code(), 2);
        let s = lemma_check(2, 2, 100, 1).unwrap();
        assert_eq!(s.failures, 0);
        assert!(s.worst_variance_slack >= 0.0);
    }
}
