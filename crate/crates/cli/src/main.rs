//! `opdyn`: run, analyze and check migration dynamics from the command line.
//!
//! Every subcommand resolves its configuration as defaults, then the file
//! given by `--config`, then flags. It writes its outputs and a
//! `manifest.json` into `--out`; `opdyn replay <manifest>` reproduces them.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use opdyn::harness::{LogBase, StartSpec};
use opdyn::{InfluenceAssignment, InfluenceFunction, TypeId};

use commands::{execute, materialize};
use config::{load, ConfigError, GraphSpec, Job, StartConfig};
use manifest::RunManifest;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "opdyn", version, about = "Migration dynamics on influence graphs")]
struct Cli {
    /// Worker threads for trials and grid cells. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the deterministic map until it converges.
    Simulate(SimulateArgs),
    /// Run the birth/death process for a fixed horizon.
    Evolve(EvolveArgs),
    /// Linear stability of a fixed point.
    Analyze(AnalyzeArgs),
    /// Label a grid over the 3-type simplex by limit.
    Basin(BasinArgs),
    /// Monte Carlo checks of the long-run bounds.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Re-run a manifest and rewrite its outputs.
    Replay(ReplayArgs),
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Existence of a long window without births or migration.
    Stability(TheoremArgs),
    /// Bound on the number of surviving types.
    Types(TheoremArgs),
    /// Random starts converge to independent active sets.
    Convergence(ConvergenceArgs),
    /// Per-step changes of the potential during birth/death runs.
    PhiBounds(PhiBoundsArgs),
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DynamicsFlags {
    /// Name (triangle, edge, path-acb, path:N, cycle:N, complete:N, star:N),
    /// inline JSON literal, or JSON file.
    #[arg(long)]
    graph: Option<String>,
    /// Influence function on every edge, e.g. `linear:0.49`.
    #[arg(long = "f")]
    influence: Option<InfluenceFunction>,
}

#[derive(Args)]
struct ConvergenceFlags {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    dynamics: DynamicsFlags,
    /// Initial masses in vertex-id order; random from the seed when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Option<Vec<f64>>,
    #[command(flatten)]
    convergence: ConvergenceFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum StartKind {
    RandomSimplex,
    EqualMass,
}

#[derive(Args)]
struct ModelFlags {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Influence function on every edge, e.g. `linear:0.5`.
    #[arg(long = "f")]
    influence: Option<InfluenceFunction>,
}

#[derive(Args)]
struct StartFlags {
    /// Random initial population.
    #[arg(long)]
    start: Option<StartKind>,
    /// Types in the initial population.
    #[arg(long, requires = "start")]
    types: Option<usize>,
    /// Extra edge probability of the initial random connected graph.
    #[arg(long, requires = "start")]
    edge_prob: Option<f64>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    start: StartFlags,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    dynamics: DynamicsFlags,
    /// Candidate fixed point in vertex-id order.
    #[arg(long, value_delimiter = ',')]
    x: Option<Vec<f64>>,
    /// Coordinate removed by the projection.
    #[arg(long)]
    eliminate: Option<u64>,
}

#[derive(Args)]
struct BasinArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    dynamics: DynamicsFlags,
    /// Grid points per simplex edge.
    #[arg(long)]
    resolution: Option<usize>,
    #[command(flatten)]
    convergence: ConvergenceFlags,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogBaseArg {
    Natural,
    Binary,
    Decimal,
}

#[derive(Args)]
struct TheoremArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    log_base: Option<LogBaseArg>,
    #[command(flatten)]
    start: StartFlags,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    dynamics: DynamicsFlags,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    convergence: ConvergenceFlags,
}

#[derive(Args)]
struct PhiBoundsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    runs: Option<usize>,
    #[command(flatten)]
    start: StartFlags,
}

#[derive(Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl DynamicsFlags {
    fn apply(self, graph: &mut GraphSpec, influence: &mut InfluenceAssignment) -> anyhow::Result<()> {
        if let Some(g) = self.graph {
            *graph = GraphSpec::from_arg(&g)?;
        }
        set(influence, self.influence.map(InfluenceAssignment::uniform));
        Ok(())
    }
}

impl ConvergenceFlags {
    fn apply(self, opts: &mut opdyn::dynamics::ConvergenceOptions) {
        set(&mut opts.tol, self.tol);
        set(&mut opts.max_iters, self.max_iters);
    }
}

impl ModelFlags {
    fn apply(self, m: &mut opdyn::evolution::EvolutionConfig) {
        set(&mut m.p, self.p);
        set(&mut m.epsilon, self.epsilon);
        set(&mut m.delta, self.delta);
        set(&mut m.beta_min, self.beta_min);
        set(&mut m.beta_max, self.beta_max);
        set(&mut m.horizon, self.horizon);
        set(&mut m.influence, self.influence.map(InfluenceAssignment::uniform));
    }
}

impl StartFlags {
    /// Flag values for the random start, filling gaps from `current` when
    /// it is random as well.
    fn spec(self, current: &StartConfig) -> Option<StartSpec> {
        let kind = self.start?;
        let fallback = StartConfig::default();
        let current = match current {
            StartConfig::Explicit { .. } => &fallback,
            random => random,
        };
        let (mut types, mut edge_prob) = match *current {
            StartConfig::RandomSimplex { types, edge_prob }
            | StartConfig::EqualMass { types, edge_prob } => (types, edge_prob),
            StartConfig::Explicit { .. } => unreachable!("replaced by the default start"),
        };
        set(&mut types, self.types);
        set(&mut edge_prob, self.edge_prob);
        Some(match kind {
            StartKind::RandomSimplex => StartSpec::RandomSimplex { types, edge_prob },
            StartKind::EqualMass => StartSpec::EqualMass { types, edge_prob },
        })
    }
}

/// Resolve the job for a command: defaults, then file, then flags.
fn resolve(command: Command) -> anyhow::Result<(Job, PathBuf)> {
    Ok(match command {
        Command::Simulate(a) => {
            let mut c: config::SimulateConfig = load(a.common.config.as_deref())?;
            a.dynamics.apply(&mut c.graph, &mut c.influence)?;
            if a.x0.is_some() {
                c.x0 = a.x0;
            }
            a.convergence.apply(&mut c.convergence);
            set(&mut c.seed, a.common.seed);
            (Job::Simulate(c), a.common.out)
        }
        Command::Evolve(a) => {
            let mut c: config::EvolveConfig = load(a.common.config.as_deref())?;
            a.model.apply(&mut c.model);
            set(&mut c.model.seed, a.common.seed);
            let start = a.start.spec(&c.start).map(Into::into);
            set(&mut c.start, start);
            (Job::Evolve(c), a.common.out)
        }
        Command::Analyze(a) => {
            let mut c: config::AnalyzeConfig = load(a.common.config.as_deref())?;
            a.dynamics.apply(&mut c.graph, &mut c.influence)?;
            set(&mut c.x, a.x);
            if let Some(id) = a.eliminate {
                c.stability.eliminate = Some(TypeId(id));
            }
            set(&mut c.seed, a.common.seed);
            (Job::Analyze(c), a.common.out)
        }
        Command::Basin(a) => {
            let mut c: config::BasinConfig = load(a.common.config.as_deref())?;
            a.dynamics.apply(&mut c.graph, &mut c.influence)?;
            set(&mut c.resolution, a.resolution);
            a.convergence.apply(&mut c.convergence);
            set(&mut c.seed, a.common.seed);
            (Job::Basin(c), a.common.out)
        }
        Command::Verify(VerifyCommand::Stability(a)) => {
            let (c, out) = resolve_theorem(a)?;
            (Job::VerifyStability(c), out)
        }
        Command::Verify(VerifyCommand::Types(a)) => {
            let (c, out) = resolve_theorem(a)?;
            (Job::VerifyTypes(c), out)
        }
        Command::Verify(VerifyCommand::Convergence(a)) => {
            let mut c: config::ConvergenceConfig = load(a.common.config.as_deref())?;
            a.dynamics.apply(&mut c.graph, &mut c.influence)?;
            set(&mut c.trials, a.trials);
            a.convergence.apply(&mut c.convergence);
            set(&mut c.seed, a.common.seed);
            (Job::VerifyConvergence(c), a.common.out)
        }
        Command::Verify(VerifyCommand::PhiBounds(a)) => {
            let mut c: config::PhiBoundsConfig = load(a.common.config.as_deref())?;
            a.model.apply(&mut c.model);
            set(&mut c.model.seed, a.common.seed);
            set(&mut c.runs, a.runs);
            let start = a.start.spec(&c.start).map(Into::into);
            set(&mut c.start, start);
            (Job::VerifyPhiBounds(c), a.common.out)
        }
        Command::Replay(_) => unreachable!("replay is handled before resolution"),
    })
}

fn resolve_theorem(a: TheoremArgs) -> anyhow::Result<(config::TheoremConfig, PathBuf)> {
    let mut c: config::TheoremConfig = load(a.common.config.as_deref())?;
    a.model.apply(&mut c.model);
    set(&mut c.options.root_seed, a.common.seed);
    set(&mut c.options.trials, a.trials);
    if let Some(b) = a.log_base {
        c.options.log_base = match b {
            LogBaseArg::Natural => LogBase::Natural,
            LogBaseArg::Binary => LogBase::Binary,
            LogBaseArg::Decimal => LogBase::Decimal,
        };
    }
    let current: StartConfig = c.options.start.into();
    set(&mut c.options.start, a.start.spec(&current));
    Ok((c, a.common.out))
}

fn run_job(mut job: Job, out: &Path) -> anyhow::Result<u8> {
    materialize(&mut job)?;
    let outcome = execute(&job, out)?;
    RunManifest::new(&job, outcome.outputs).write(out)?;
    println!("{}: {}", job.subcommand(), outcome.summary);
    println!("outputs in {}", out.display());
    Ok(outcome.code as u8)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(config::config_error("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Replay(a) => {
            let m = RunManifest::read(&a.manifest)?;
            let out = match a.out {
                Some(o) => o,
                None => a
                    .manifest
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from(".")),
            };
            if m.tool_version != env!("CARGO_PKG_VERSION") {
                eprintln!(
                    "warning: manifest written by version {}, replaying with {}",
                    m.tool_version,
                    env!("CARGO_PKG_VERSION")
                );
            }
            run_job(m.job()?, &out)
        }
        command => {
            let (job, out) = resolve(command)?;
            run_job(job, &out)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<opdyn::Error>() {
        Some(opdyn::Error::Numeric(_)) | None => EXIT_FAILURE,
        Some(opdyn::Error::Hypothesis(_)) => commands::EXIT_VACUOUS as u8,
        Some(_) => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
