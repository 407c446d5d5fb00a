//! Resolved job configurations. Every field has a default, so a config file
//! only needs the keys it changes; unknown keys are rejected.

use std::fmt;
use std::path::Path;

use opdyn::dynamics::{ConvergenceOptions, DEFAULT_THETA_ACTIVE};
use opdyn::evolution::EvolutionConfig;
use opdyn::harness::{StartSpec, TheoremOptions};
use opdyn::stability::StabilityOptions;
use opdyn::{InfluenceAssignment, InfluenceFunction, InfluenceGraph};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Invalid user input. Maps to exit code 64.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Parse `text` as `T`, reporting the offending field path and position.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &str) -> anyhow::Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            config_error(format!("{origin}: {inner}"))
        } else {
            config_error(format!("{origin}: field `{path}`: {inner}"))
        }
    })
}

/// Defaults overlaid with the file at `path`, if any.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| config_error(format!("{}: {e}", p.display())))?;
            parse_json(&text, &p.display().to_string())
        }
    }
}

/// A graph given by name (`triangle`, `path:5`, ...) or as a literal.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphSpec {
    Named(String),
    Literal(InfluenceGraph),
}

impl Default for GraphSpec {
    fn default() -> Self {
        GraphSpec::Named("triangle".into())
    }
}

fn sized(name: &str, arg: &str, min: usize) -> Result<usize, String> {
    match arg.parse::<usize>() {
        Ok(n) if n >= min => Ok(n),
        _ => Err(format!("`{name}:{arg}` needs an integer size >= {min}")),
    }
}

fn named_graph(spec: &str) -> Result<InfluenceGraph, String> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (spec, None),
    };
    let g = match (name, arg) {
        ("edge", None) => InfluenceGraph::path(2),
        ("triangle", None) => InfluenceGraph::complete(3),
        ("path-acb", None) => InfluenceGraph::from_edges(3, &[(0, 2), (2, 1)])
            .map_err(|e| e.to_string())?,
        ("path", Some(a)) => InfluenceGraph::path(sized(name, a, 1)?),
        ("cycle", Some(a)) => InfluenceGraph::cycle(sized(name, a, 3)?),
        ("complete", Some(a)) => InfluenceGraph::complete(sized(name, a, 1)?),
        ("star", Some(a)) => InfluenceGraph::star(sized(name, a, 1)?),
        _ => {
            return Err(format!(
                "unknown graph `{spec}`; expected edge, triangle, path-acb, path:N, cycle:N, complete:N, star:N or a JSON literal"
            ))
        }
    };
    Ok(g)
}

impl GraphSpec {
    pub fn build(&self) -> anyhow::Result<InfluenceGraph> {
        match self {
            GraphSpec::Named(s) => named_graph(s).map_err(config_error),
            GraphSpec::Literal(g) => Ok(g.clone()),
        }
    }

    /// Flag form: a name, an inline JSON literal, or a path to a JSON file.
    pub fn from_arg(arg: &str) -> anyhow::Result<Self> {
        let trimmed = arg.trim_start();
        if trimmed.starts_with('{') {
            return Ok(GraphSpec::Literal(parse_json(arg, "--graph")?));
        }
        let path = Path::new(arg);
        if path.is_file() || arg.ends_with(".json") {
            let text = std::fs::read_to_string(path)
                .map_err(|e| config_error(format!("{arg}: {e}")))?;
            return Ok(GraphSpec::Literal(parse_json(&text, arg)?));
        }
        named_graph(arg).map_err(config_error)?;
        Ok(GraphSpec::Named(arg.to_string()))
    }
}

impl Serialize for GraphSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            GraphSpec::Named(n) => s.serialize_str(n),
            GraphSpec::Literal(g) => g.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for GraphSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(name) => {
                named_graph(&name).map_err(D::Error::custom)?;
                Ok(GraphSpec::Named(name))
            }
            v => InfluenceGraph::deserialize(v)
                .map(GraphSpec::Literal)
                .map_err(D::Error::custom),
        }
    }
}

fn linear(a: f64) -> InfluenceAssignment {
    InfluenceAssignment::uniform(InfluenceFunction::Linear { a })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub graph: GraphSpec,
    pub influence: InfluenceAssignment,
    /// Masses in vertex-id order. Drawn uniformly from the simplex when absent.
    pub x0: Option<Vec<f64>>,
    pub seed: u64,
    pub convergence: ConvergenceOptions,
    pub theta_active: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            graph: GraphSpec::default(),
            influence: linear(0.49),
            x0: None,
            seed: 0,
            convergence: ConvergenceOptions::default(),
            theta_active: DEFAULT_THETA_ACTIVE,
        }
    }
}

/// Initial population of a birth/death run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartConfig {
    RandomSimplex { types: usize, edge_prob: f64 },
    EqualMass { types: usize, edge_prob: f64 },
    Explicit { graph: GraphSpec, x0: Vec<f64> },
}

impl Default for StartConfig {
    fn default() -> Self {
        StartSpec::default().into()
    }
}

impl From<StartSpec> for StartConfig {
    fn from(s: StartSpec) -> Self {
        match s {
            StartSpec::RandomSimplex { types, edge_prob } => {
                StartConfig::RandomSimplex { types, edge_prob }
            }
            StartSpec::EqualMass { types, edge_prob } => StartConfig::EqualMass { types, edge_prob },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub model: EvolutionConfig,
    pub start: StartConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    pub graph: GraphSpec,
    pub influence: InfluenceAssignment,
    /// Candidate fixed point, masses in vertex-id order.
    pub x: Vec<f64>,
    pub seed: u64,
    pub stability: StabilityOptions,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            graph: GraphSpec::Named("edge".into()),
            influence: linear(0.5),
            x: vec![0.5, 0.5],
            seed: 0,
            stability: StabilityOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasinConfig {
    pub graph: GraphSpec,
    pub influence: InfluenceAssignment,
    pub resolution: usize,
    pub seed: u64,
    pub convergence: ConvergenceOptions,
}

impl Default for BasinConfig {
    fn default() -> Self {
        Self {
            graph: GraphSpec::default(),
            influence: linear(0.49),
            resolution: 400,
            seed: 0,
            convergence: ConvergenceOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremConfig {
    pub model: EvolutionConfig,
    pub options: TheoremOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub graph: GraphSpec,
    pub influence: InfluenceAssignment,
    pub trials: usize,
    pub seed: u64,
    pub convergence: ConvergenceOptions,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            graph: GraphSpec::default(),
            influence: linear(0.49),
            trials: 1000,
            seed: 0,
            convergence: ConvergenceOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhiBoundsConfig {
    pub model: EvolutionConfig,
    pub start: StartConfig,
    /// Independent runs; run `i` uses seed `trial_seed(model.seed, i)`.
    pub runs: usize,
}

impl Default for PhiBoundsConfig {
    fn default() -> Self {
        Self {
            model: EvolutionConfig {
                delta: 0.3,
                ..EvolutionConfig::default()
            },
            start: StartConfig::default(),
            runs: 10,
        }
    }
}

/// A fully resolved unit of work, as recorded in a manifest.
#[derive(Clone, Debug, PartialEq)]
pub enum Job {
    Simulate(SimulateConfig),
    Evolve(EvolveConfig),
    Analyze(AnalyzeConfig),
    Basin(BasinConfig),
    VerifyStability(TheoremConfig),
    VerifyTypes(TheoremConfig),
    VerifyConvergence(ConvergenceConfig),
    VerifyPhiBounds(PhiBoundsConfig),
}

impl Job {
    pub fn subcommand(&self) -> &'static str {
        match self {
            Job::Simulate(_) => "simulate",
            Job::Evolve(_) => "evolve",
            Job::Analyze(_) => "analyze",
            Job::Basin(_) => "basin",
            Job::VerifyStability(_) => "verify stability",
            Job::VerifyTypes(_) => "verify types",
            Job::VerifyConvergence(_) => "verify convergence",
            Job::VerifyPhiBounds(_) => "verify phi-bounds",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Job::Simulate(c) => c.seed,
            Job::Evolve(c) => c.model.seed,
            Job::Analyze(c) => c.seed,
            Job::Basin(c) => c.seed,
            Job::VerifyStability(c) | Job::VerifyTypes(c) => c.options.root_seed,
            Job::VerifyConvergence(c) => c.seed,
            Job::VerifyPhiBounds(c) => c.model.seed,
        }
    }

    pub fn config_value(&self) -> serde_json::Value {
        let v = match self {
            Job::Simulate(c) => serde_json::to_value(c),
            Job::Evolve(c) => serde_json::to_value(c),
            Job::Analyze(c) => serde_json::to_value(c),
            Job::Basin(c) => serde_json::to_value(c),
            Job::VerifyStability(c) | Job::VerifyTypes(c) => serde_json::to_value(c),
            Job::VerifyConvergence(c) => serde_json::to_value(c),
            Job::VerifyPhiBounds(c) => serde_json::to_value(c),
        };
        v.expect("configs serialize to JSON")
    }

    pub fn from_value(subcommand: &str, config: serde_json::Value) -> anyhow::Result<Self> {
        let text = config.to_string();
        let origin = "manifest config";
        Ok(match subcommand {
            "simulate" => Job::Simulate(parse_json(&text, origin)?),
            "evolve" => Job::Evolve(parse_json(&text, origin)?),
            "analyze" => Job::Analyze(parse_json(&text, origin)?),
            "basin" => Job::Basin(parse_json(&text, origin)?),
            "verify stability" => Job::VerifyStability(parse_json(&text, origin)?),
            "verify types" => Job::VerifyTypes(parse_json(&text, origin)?),
            "verify convergence" => Job::VerifyConvergence(parse_json(&text, origin)?),
            "verify phi-bounds" => Job::VerifyPhiBounds(parse_json(&text, origin)?),
            other => return Err(config_error(format!("manifest: unknown subcommand `{other}`"))),
        })
    }
}
