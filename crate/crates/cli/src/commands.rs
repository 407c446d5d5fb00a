//! Execution of resolved jobs. Outputs depend only on the job, never on the
//! thread count or the wall clock.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use opdyn::dynamics::{
    active_set, classify_fixed_point, run_to_convergence_with, PopulationState, TrajectoryCsv,
};
use opdyn::evolution::{run_evolution, EvolutionConfig, Timeline};
use opdyn::harness::{
    basin_map, monte_carlo_convergence, sample_simplex, set_label, verify_phi_bounds,
    verify_stability_theorem, verify_type_bound, HypothesisCheck, PhiBoundsReport, StartSpec,
    TheoremReport, TrialStats, Verdict,
};
use opdyn::rng::{trial_seed, Phase, RunRng};
use opdyn::stability::classify_stability;
use opdyn::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    AnalyzeConfig, BasinConfig, ConvergenceConfig, EvolveConfig, Job, PhiBoundsConfig,
    SimulateConfig, StartConfig, TheoremConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_VERDICT_FAIL: i32 = 3;
pub const EXIT_VACUOUS: i32 = 4;

#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    /// One-line result for the terminal.
    pub summary: String,
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Resolve defaults that depend on the seed, so the manifest pins them.
pub fn materialize(job: &mut Job) -> anyhow::Result<()> {
    if let Job::Simulate(c) = job {
        if c.x0.is_none() {
            let n = c.graph.build()?.vertex_count();
            let mut rng = RunRng::new(c.seed).phase(0, Phase::Init);
            c.x0 = Some(sample_simplex(&mut rng, n)?);
        }
    }
    Ok(())
}

pub fn execute(job: &Job, out: &Path) -> anyhow::Result<Outcome> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match job {
        Job::Simulate(c) => simulate(c, out),
        Job::Evolve(c) => evolve(c, out),
        Job::Analyze(c) => analyze(c, out),
        Job::Basin(c) => basin(c, out),
        Job::VerifyStability(c) => verify_theorem(c, out, true),
        Job::VerifyTypes(c) => verify_theorem(c, out, false),
        Job::VerifyConvergence(c) => verify_convergence(c, out),
        Job::VerifyPhiBounds(c) => verify_phi(c, out),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    limit: Vec<f64>,
    iterations: u64,
    converged: bool,
    independent: Option<bool>,
    active: String,
    phi: f64,
}

fn simulate(c: &SimulateConfig, out: &Path) -> anyhow::Result<Outcome> {
    let graph = c.graph.build()?;
    let x0 = c
        .x0
        .as_deref()
        .ok_or_else(|| crate::config::config_error("simulate: x0 is unresolved"))?;
    let start = PopulationState::new(graph, x0)?;

    let mut csv = TrajectoryCsv::new(create(out, "trajectory.csv")?, start.graph(), c.theta_active)?;
    let mut io_err = None;
    let run = run_to_convergence_with(&start, &c.influence, c.convergence, |s| {
        if io_err.is_none() {
            io_err = csv.row(s).err();
        }
    });
    if let Some(e) = io_err {
        return Err(e).context("writing trajectory.csv");
    }
    csv.finish()?;

    let active = active_set(&run.limit, c.theta_active);
    let summary = SimulateSummary {
        limit: run.limit.masses(),
        iterations: run.iterations,
        converged: run.converged,
        independent: classify_fixed_point(&run.limit, c.theta_active, 1e-6)
            .ok()
            .map(|cls| cls.independent),
        active: set_label(&active),
        phi: run.limit.phi(),
    };
    write_json(out, "summary.json", &summary)?;
    Ok(Outcome {
        code: if run.converged { EXIT_OK } else { EXIT_MAX_ITERS },
        outputs: vec!["trajectory.csv".into(), "summary.json".into()],
        summary: format!(
            "{} after {} steps, active {}",
            if run.converged { "converged" } else { "hit max_iters" },
            run.iterations,
            summary.active
        ),
    })
}

fn build_start(start: &StartConfig, seed: u64) -> anyhow::Result<PopulationState> {
    let mut rng = RunRng::new(seed).phase(0, Phase::Init);
    Ok(match start {
        StartConfig::RandomSimplex { types, edge_prob } => StartSpec::RandomSimplex {
            types: *types,
            edge_prob: *edge_prob,
        }
        .build(&mut rng)?,
        StartConfig::EqualMass { types, edge_prob } => StartSpec::EqualMass {
            types: *types,
            edge_prob: *edge_prob,
        }
        .build(&mut rng)?,
        StartConfig::Explicit { graph, x0 } => PopulationState::new(graph.build()?, x0)?,
    })
}

fn run_from(start: &StartConfig, model: &EvolutionConfig) -> anyhow::Result<Timeline> {
    let x0 = build_start(start, model.seed)?;
    Ok(run_evolution(&x0, model)?)
}

#[derive(Serialize)]
struct Terminal<'a> {
    step: u64,
    phi: f64,
    type_count: usize,
    births: usize,
    state: &'a PopulationState,
}

fn evolve(c: &EvolveConfig, out: &Path) -> anyhow::Result<Outcome> {
    let timeline = run_from(&c.start, &c.model)?;
    let mut w = create(out, "timeline.jsonl")?;
    timeline.write_jsonl(&mut w)?;
    w.flush()?;
    let mut w = create(out, "summary.csv")?;
    timeline.write_summary_csv(&mut w)?;
    w.flush()?;
    let terminal = Terminal {
        step: timeline.terminal.step(),
        phi: timeline.terminal.phi(),
        type_count: timeline.terminal.type_count(),
        births: timeline.births(),
        state: &timeline.terminal,
    };
    write_json(out, "terminal.json", &terminal)?;
    Ok(Outcome {
        code: EXIT_OK,
        outputs: vec!["timeline.jsonl".into(), "summary.csv".into(), "terminal.json".into()],
        summary: format!(
            "{} steps, {} births, final type count {}",
            timeline.records.len(),
            terminal.births,
            terminal.type_count
        ),
    })
}

fn analyze(c: &AnalyzeConfig, out: &Path) -> anyhow::Result<Outcome> {
    let state = PopulationState::new(c.graph.build()?, &c.x)?;
    let report = classify_stability(&state, &c.influence, c.stability)?;
    write_json(out, "analysis.json", &report)?;
    Ok(Outcome {
        code: EXIT_OK,
        outputs: vec!["analysis.json".into()],
        summary: format!(
            "projected spectral radius {:.6}, {}",
            report.spectral_radius_projected,
            if report.linearly_stable { "linearly stable" } else { "unstable" }
        ),
    })
}

#[derive(Serialize)]
struct BasinSummary {
    resolution: usize,
    legend: std::collections::BTreeMap<String, usize>,
    area_fractions: std::collections::BTreeMap<String, f64>,
}

fn basin(c: &BasinConfig, out: &Path) -> anyhow::Result<Outcome> {
    let map = basin_map(&c.graph.build()?, &c.influence, c.resolution, c.convergence)?;
    let mut w = create(out, "basin.csv")?;
    map.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(out, "basin.pgm")?;
    map.write_pgm(&mut w)?;
    w.flush()?;
    let summary = BasinSummary {
        resolution: map.resolution,
        legend: map.legend(),
        area_fractions: map.area_fractions(),
    };
    write_json(out, "basin.json", &summary)?;
    let areas: Vec<String> = summary
        .area_fractions
        .iter()
        .map(|(k, v)| format!("{k} {v:.4}"))
        .collect();
    Ok(Outcome {
        code: EXIT_OK,
        outputs: vec!["basin.csv".into(), "basin.pgm".into(), "basin.json".into()],
        summary: format!("{} cells: {}", map.cells.len(), areas.join(", ")),
    })
}

fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => EXIT_OK,
        Verdict::Fail => EXIT_VERDICT_FAIL,
        Verdict::Vacuous => EXIT_VACUOUS,
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Vacuous => "vacuous",
    }
}

fn verdict_line<A>(s: &TrialStats<A>) -> String {
    format!(
        "verdict {}: {}/{} = {:.4} (Wilson 95% [{:.4}, {:.4}]) vs bound {:.4}",
        verdict_name(s.verdict),
        s.successes,
        s.trials,
        s.estimate,
        s.wilson95[0],
        s.wilson95[1],
        s.paper_bound
    )
}

/// Flat report: the config echo followed by the tally fields.
#[derive(Serialize)]
struct StatsReport<'a, C: Serialize, X: Serialize, A: Serialize> {
    config: &'a C,
    #[serde(flatten)]
    extra: X,
    #[serde(flatten)]
    stats: &'a TrialStats<A>,
}

#[derive(Serialize)]
struct Rejected<'a, C: Serialize> {
    config: &'a C,
    verdict: &'static str,
    reason: String,
}

/// Report and exit code for a hypothesis the parameters do not satisfy.
fn rejected<C: Serialize>(config: &C, reason: String, out: &Path) -> anyhow::Result<Outcome> {
    write_json(
        out,
        "report.json",
        &Rejected {
            config,
            verdict: "hypothesis-rejected",
            reason: reason.clone(),
        },
    )?;
    Ok(Outcome {
        code: EXIT_VACUOUS,
        outputs: vec!["report.json".into()],
        summary: format!("hypothesis rejected: {reason}"),
    })
}

#[derive(Serialize)]
struct TheoremExtra<'a> {
    hypotheses: &'a [HypothesisCheck],
    threshold: f64,
}

fn theorem_outcome<A: Serialize>(
    c: &TheoremConfig,
    rep: &TheoremReport<A>,
    out: &Path,
) -> anyhow::Result<Outcome> {
    let report = StatsReport {
        config: c,
        extra: TheoremExtra {
            hypotheses: &rep.hypotheses,
            threshold: rep.threshold,
        },
        stats: &rep.stats,
    };
    write_json(out, "report.json", &report)?;
    Ok(Outcome {
        code: verdict_code(rep.stats.verdict),
        outputs: vec!["report.json".into()],
        summary: verdict_line(&rep.stats),
    })
}

fn verify_theorem(c: &TheoremConfig, out: &Path, stability: bool) -> anyhow::Result<Outcome> {
    let result = if stability {
        verify_stability_theorem(&c.model, &c.options).map(|r| theorem_outcome(c, &r, out))
    } else {
        verify_type_bound(&c.model, &c.options).map(|r| theorem_outcome(c, &r, out))
    };
    match result {
        Ok(outcome) => outcome,
        Err(Error::Hypothesis(reason)) => rejected(c, reason, out),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct Census<'a> {
    census: &'a std::collections::BTreeMap<String, usize>,
}

fn verify_convergence(c: &ConvergenceConfig, out: &Path) -> anyhow::Result<Outcome> {
    let graph = c.graph.build()?;
    match monte_carlo_convergence(&graph, &c.influence, c.trials, c.seed, c.convergence) {
        Ok(study) => {
            let report = StatsReport {
                config: c,
                extra: Census { census: &study.census },
                stats: &study.stats,
            };
            write_json(out, "report.json", &report)?;
            Ok(Outcome {
                code: verdict_code(study.stats.verdict),
                outputs: vec!["report.json".into()],
                summary: verdict_line(&study.stats),
            })
        }
        Err(Error::Hypothesis(reason)) => rejected(c, reason, out),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct PhiRun {
    seed: u64,
    #[serde(flatten)]
    report: PhiBoundsReport,
}

#[derive(Serialize)]
struct PhiReport<'a> {
    config: &'a PhiBoundsConfig,
    runs: Vec<PhiRun>,
    violations: usize,
    verdict: Verdict,
}

fn verify_phi(c: &PhiBoundsConfig, out: &Path) -> anyhow::Result<Outcome> {
    let runs = (0..c.runs as u64)
        .into_par_iter()
        .map(|i| {
            let model = EvolutionConfig {
                seed: trial_seed(c.model.seed, i),
                ..c.model.clone()
            };
            let timeline = run_from(&c.start, &model)?;
            Ok(PhiRun {
                seed: model.seed,
                report: verify_phi_bounds(&timeline, &model),
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let violations: usize = runs.iter().map(|r| r.report.violations.len()).sum();
    let migrations: usize = runs.iter().map(|r| r.report.migrations_checked).sum();
    let births: usize = runs.iter().map(|r| r.report.births_checked).sum();
    let verdict = if violations == 0 { Verdict::Pass } else { Verdict::Fail };
    write_json(
        out,
        "report.json",
        &PhiReport {
            config: c,
            runs,
            violations,
            verdict,
        },
    )?;
    Ok(Outcome {
        code: verdict_code(verdict),
        outputs: vec!["report.json".into()],
        summary: format!(
            "verdict {}: {violations} violations over {migrations} migration and {births} birth steps",
            verdict_name(verdict)
        ),
    })
}
