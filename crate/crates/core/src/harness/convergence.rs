use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{sample_simplex, set_label, TrialStats};
use crate::dynamics::{
    active_set, classify_fixed_point, run_to_convergence, ConvergenceOptions, PopulationState,
    DEFAULT_THETA_ACTIVE,
};
use crate::error::{Error, Result};
use crate::graph::InfluenceGraph;
use crate::influence::InfluenceAssignment;
use crate::rng::trial_seed;
use crate::stability::{classify_stability, StabilityOptions};

/// Required frequency of independent-set limits.
const CONVERGENCE_BOUND: f64 = 0.995;
/// Mass spread tolerated inside an active component of a limit.
const LIMIT_MASS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrial {
    pub seed: u64,
    pub converged: bool,
    pub iterations: u64,
    /// Active set of the final state, e.g. `A+C`.
    pub label: String,
    pub independent: bool,
    /// Projected spectral radius of the limit, when it classifies as a fixed point.
    pub spectral_radius: Option<f64>,
    /// Why the limit could not be classified.
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub stats: TrialStats<ConvergenceTrial>,
    /// Number of trials ending in each active set; non-converged trials
    /// count under `unresolved`.
    pub census: BTreeMap<String, usize>,
}

impl ConvergenceStudy {
    pub fn census_fraction(&self, label: &str) -> f64 {
        self.census.get(label).copied().unwrap_or(0) as f64 / self.stats.trials.max(1) as f64
    }
}

/// Run `trials` uniform random starts to convergence. A trial succeeds when
/// it converges to a fixed point whose active set is independent.
pub fn monte_carlo_convergence(
    graph: &InfluenceGraph,
    assignment: &InfluenceAssignment,
    trials: usize,
    root_seed: u64,
    opts: ConvergenceOptions,
) -> Result<ConvergenceStudy> {
    let sup = assignment.sup_abs();
    if !(sup < 0.5) {
        return Err(Error::Hypothesis(format!(
            "sup|F| < 1/2 fails: sup|F| = {sup}"
        )));
    }
    let n = graph.vertex_count();
    let outcomes: Vec<(bool, ConvergenceTrial)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(root_seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = PopulationState::new(graph.clone(), &sample_simplex(&mut rng, n)?)?;
            Ok(run_trial(seed, &x0, assignment, opts))
        })
        .collect::<Result<_>>()?;

    let mut census = BTreeMap::new();
    for (_, t) in &outcomes {
        let key = if t.converged { t.label.clone() } else { super::UNRESOLVED.to_string() };
        *census.entry(key).or_insert(0) += 1;
    }
    Ok(ConvergenceStudy {
        stats: TrialStats::from_outcomes(outcomes, CONVERGENCE_BOUND, 0.0),
        census,
    })
}

fn run_trial(
    seed: u64,
    x0: &PopulationState,
    assignment: &InfluenceAssignment,
    opts: ConvergenceOptions,
) -> (bool, ConvergenceTrial) {
    let run = run_to_convergence(x0, assignment, opts);
    let active = active_set(&run.limit, DEFAULT_THETA_ACTIVE);
    let mut trial = ConvergenceTrial {
        seed,
        converged: run.converged,
        iterations: run.iterations,
        label: set_label(&active),
        independent: false,
        spectral_radius: None,
        note: None,
    };
    if !run.converged {
        trial.note = Some(format!("no convergence within {} iterations", opts.max_iters));
        return (false, trial);
    }
    match classify_fixed_point(&run.limit, DEFAULT_THETA_ACTIVE, LIMIT_MASS_TOL) {
        Ok(class) => trial.independent = class.independent,
        Err(e) => trial.note = Some(e.to_string()),
    }
    match classify_stability(&run.limit, assignment, StabilityOptions::default()) {
        Ok(report) => trial.spectral_radius = Some(report.spectral_radius_projected),
        Err(e) => trial.note = trial.note.take().or(Some(e.to_string())),
    }
    (trial.independent && trial.note.is_none(), trial)
}
