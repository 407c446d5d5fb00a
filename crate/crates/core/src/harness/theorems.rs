use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{detect_stable_windows, StableWindow, StartSpec, TrialStats, Verdict};
use crate::error::{Error, Result};
use crate::evolution::{run_evolution, EvolutionConfig, Timeline};
use crate::rng::{trial_seed, Phase, RunRng};

/// Absolute slack on every potential comparison.
const PHI_SLACK: f64 = 1e-12;
/// Statistical slack, in standard deviations of the bound, before a
/// frequency counts as below a probability bound.
const SLACK_SIGMAS: f64 = 3.0;

/// Base of the logarithm in the type-count constants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogBase {
    #[default]
    Natural,
    Binary,
    Decimal,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Binary => x.log2(),
            LogBase::Decimal => x.log10(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoremOptions {
    pub trials: usize,
    pub root_seed: u64,
    pub start: StartSpec,
    pub log_base: LogBase,
}

impl Default for TheoremOptions {
    fn default() -> Self {
        Self {
            trials: 200,
            root_seed: 0,
            start: StartSpec::default(),
            log_base: LogBase::Natural,
        }
    }
}

/// One inequality of a hypothesis, `lhs <op> rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl HypothesisCheck {
    fn less(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, holds: lhs < rhs }
    }

    fn at_most(name: &str, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), lhs, rhs, holds: lhs <= rhs }
    }
}

fn reject_failed(checks: &[HypothesisCheck]) -> Result<()> {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.holds)
        .map(|c| format!("{} fails ({} vs {})", c.name, c.lhs, c.rhs))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Hypothesis(failed.join("; ")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport<A> {
    pub config: EvolutionConfig,
    pub options: TheoremOptions,
    pub hypotheses: Vec<HypothesisCheck>,
    /// Window length or type count a trial must reach.
    pub threshold: f64,
    pub stats: TrialStats<A>,
}

fn run_trials<A: Send>(
    config: &EvolutionConfig,
    opts: &TheoremOptions,
    horizon: u64,
    judge: impl Fn(u64, &Timeline) -> (bool, A) + Sync,
) -> Result<Vec<(bool, A)>> {
    (0..opts.trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(opts.root_seed, i);
            let cfg = EvolutionConfig { seed, horizon, ..config.clone() };
            let x0 = opts.start.build(&mut RunRng::new(seed).phase(0, Phase::Init))?;
            let timeline = run_evolution(&x0, &cfg)?;
            Ok(judge(seed, &timeline))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityTrial {
    pub seed: u64,
    /// Longest window starting at or before the horizon.
    pub longest: Option<StableWindow>,
    pub births: usize,
    pub final_types: usize,
}

/// Checks that a run of `config.horizon = t` steps contains a window of
/// length at least `1/(3p)` starting at some `T <= t`. Each run is extended
/// past `t` so that such a window can be observed in full.
pub fn verify_stability_theorem(
    config: &EvolutionConfig,
    opts: &TheoremOptions,
) -> Result<TheoremReport<StabilityTrial>> {
    config.validate()?;
    let (alpha_min, _) = config.influence.alpha_bounds();
    let (p, t) = (config.p, config.horizon as f64);
    let gain = config.epsilon * config.delta.powi(3) * alpha_min;
    let hypotheses = vec![
        HypothesisCheck::less("p < eps*delta^3*alpha_min/(3*beta_max)", p, gain / (3.0 * config.beta_max)),
        HypothesisCheck::less("p < 2/3", p, 2.0 / 3.0),
        HypothesisCheck::less(
            "1/(eps*delta^3*alpha_min - 3*p*beta_max) < t",
            1.0 / (gain - 3.0 * p * config.beta_max),
            t,
        ),
    ];
    reject_failed(&hypotheses)?;

    let min_len = if p > 0.0 { (1.0 / (3.0 * p)).ceil() as u64 } else { 0 };
    let last = config.horizon;
    let run_len = last + min_len + 1;
    let outcomes = run_trials(config, opts, run_len, |seed, tl| {
        let windows = detect_stable_windows(tl);
        let longest = windows
            .iter()
            .filter(|w| w.start <= last)
            .max_by_key(|w| (w.duration, std::cmp::Reverse(w.start)))
            .copied();
        let ok = longest.is_some_and(|w| {
            if p > 0.0 {
                w.duration >= min_len
            } else {
                w.end() + 1 == run_len
            }
        });
        let trial = StabilityTrial {
            seed,
            longest,
            births: tl.births(),
            final_types: tl.terminal.type_count(),
        };
        (ok, trial)
    })?;
    Ok(TheoremReport {
        config: config.clone(),
        options: *opts,
        hypotheses,
        threshold: min_len as f64,
        stats: TrialStats::from_outcomes(outcomes, 1.0 - (-t * p / 6.0).exp(), SLACK_SIGMAS),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeBoundTrial {
    pub seed: u64,
    pub final_types: usize,
    pub max_types: usize,
    /// Whether any step ended with more than `floor(1/eps)` types.
    pub cap_exceeded: bool,
}

/// Checks that after `config.horizon` steps at most `72 log(1/eps)` types
/// remain. Reported as vacuous when that number is at least the hard cap
/// `floor(1/eps)`.
pub fn verify_type_bound(
    config: &EvolutionConfig,
    opts: &TheoremOptions,
) -> Result<TheoremReport<TypeBoundTrial>> {
    config.validate()?;
    let (_, alpha_max) = config.influence.alpha_bounds();
    let p = config.p;
    let l = opts.log_base.log(1.0 / config.epsilon);
    let hypotheses = vec![
        HypothesisCheck::at_most("alpha_max <= p/512", alpha_max, p / 512.0),
        HypothesisCheck::at_most("(16/p)*log^2(1/eps) <= t", 16.0 / p * l * l, config.horizon as f64),
    ];
    reject_failed(&hypotheses)?;

    let bound = 72.0 * l;
    let cap = config.type_cap();
    let outcomes = run_trials(config, opts, config.horizon, |seed, tl| {
        let max_types = tl.records.iter().map(|r| r.type_count).max().unwrap_or(0);
        let final_types = tl.terminal.type_count();
        let trial = TypeBoundTrial {
            seed,
            final_types,
            max_types,
            cap_exceeded: max_types > cap,
        };
        (final_types as f64 <= bound && !trial.cap_exceeded, trial)
    })?;
    let mut stats = TrialStats::from_outcomes(outcomes, 1.0 - 3.0 * config.epsilon, SLACK_SIGMAS);
    if (bound >= cap as f64 || stats.paper_bound <= 0.0) && stats.verdict == Verdict::Pass {
        stats.verdict = Verdict::Vacuous;
    }
    Ok(TheoremReport {
        config: config.clone(),
        options: *opts,
        hypotheses,
        threshold: bound,
        stats,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhiViolationKind {
    Migration,
    Birth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiViolation {
    pub step: u64,
    pub kind: PhiViolationKind,
    /// Signed change of `Phi` in the phase.
    pub delta: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiBoundsReport {
    /// `2 alpha_min eps delta^3`: least gain of an active migration when all masses are at least `eps`.
    pub migration_bound: f64,
    /// `2 beta_max`: largest loss in a birth.
    pub birth_bound: f64,
    pub migrations_checked: usize,
    pub births_checked: usize,
    pub violations: Vec<PhiViolation>,
}

/// Compare the recorded per-phase potentials with the migration gain and
/// birth loss bounds.
pub fn verify_phi_bounds(timeline: &Timeline, config: &EvolutionConfig) -> PhiBoundsReport {
    let (alpha_min, _) = config.influence.alpha_bounds();
    let migration_bound = 2.0 * alpha_min * config.epsilon * config.delta.powi(3);
    let birth_bound = 2.0 * config.beta_max;
    let mut report = PhiBoundsReport {
        migration_bound,
        birth_bound,
        migrations_checked: 0,
        births_checked: 0,
        violations: Vec::new(),
    };
    for r in &timeline.records {
        let gain = r.phi_after_migration - r.phi_before;
        if r.migration_active && r.min_mass_before >= config.epsilon {
            report.migrations_checked += 1;
            if gain < migration_bound - PHI_SLACK {
                report.violations.push(PhiViolation {
                    step: r.step,
                    kind: PhiViolationKind::Migration,
                    delta: gain,
                    bound: migration_bound,
                });
            }
        } else if !r.migration_active && gain != 0.0 {
            report.violations.push(PhiViolation {
                step: r.step,
                kind: PhiViolationKind::Migration,
                delta: gain,
                bound: 0.0,
            });
        }
        if r.birth.is_some() {
            report.births_checked += 1;
            let loss = r.phi_after_migration - r.phi_after_birth;
            if loss > birth_bound + PHI_SLACK {
                report.violations.push(PhiViolation {
                    step: r.step,
                    kind: PhiViolationKind::Birth,
                    delta: -loss,
                    bound: birth_bound,
                });
            }
        }
    }
    report
}
