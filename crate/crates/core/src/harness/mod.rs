//! Monte Carlo drivers: convergence census, basin maps, stable windows and
//! empirical checks of the long-run bounds of the stochastic model.
//!
//! Trial `i` under root seed `r` always uses seed [`trial_seed`]`(r, i)`,
//! and results are collected in trial order, so nothing depends on the
//! number of worker threads.
//!
//! [`trial_seed`]: crate::rng::trial_seed

mod basin;
mod convergence;
mod stats;
mod theorems;
mod windows;

pub use basin::{basin_map, BasinCell, BasinMap, UNRESOLVED};
pub use convergence::{monte_carlo_convergence, ConvergenceStudy, ConvergenceTrial};
pub use stats::{binomial_sigma, wilson95, TrialStats, Verdict};
pub use theorems::{
    verify_phi_bounds, verify_stability_theorem, verify_type_bound, HypothesisCheck, LogBase,
    PhiBoundsReport, PhiViolation, StabilityTrial, TheoremOptions, TheoremReport, TypeBoundTrial,
};
pub use windows::{detect_stable_windows, stable_windows, StableWindow};

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::dynamics::PopulationState;
use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, TypeId};

/// Uniform point of the simplex with `n` coordinates: normalized standard
/// exponential draws.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("simplex dimension must be positive".into()));
    }
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|e: f64| e / total).collect())
}

/// Initial condition for stochastic runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StartSpec {
    /// Random connected graph with uniformly random masses.
    RandomSimplex { types: usize, edge_prob: f64 },
    /// Random connected graph with equal masses.
    EqualMass { types: usize, edge_prob: f64 },
}

impl Default for StartSpec {
    fn default() -> Self {
        StartSpec::RandomSimplex {
            types: 5,
            edge_prob: 0.3,
        }
    }
}

impl StartSpec {
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PopulationState> {
        match *self {
            StartSpec::RandomSimplex { types, edge_prob } => {
                let g = InfluenceGraph::random_connected(types, edge_prob, rng);
                let x = sample_simplex(rng, types)?;
                PopulationState::new(g, &x)
            }
            StartSpec::EqualMass { types, edge_prob } => {
                if types == 0 {
                    return Err(Error::InvalidArgument("start needs at least one type".into()));
                }
                Ok(PopulationState::uniform(InfluenceGraph::random_connected(
                    types, edge_prob, rng,
                )))
            }
        }
    }
}

/// `A`..`Z` for ids below 26, `T<id>` beyond.
pub fn type_label(v: TypeId) -> String {
    match u8::try_from(v.0) {
        Ok(i) if i < 26 => char::from(b'A' + i).to_string(),
        _ => format!("T{}", v.0),
    }
}

/// Labels of a set joined with `+`, in id order.
pub fn set_label(s: &BTreeSet<TypeId>) -> String {
    s.iter().map(|&v| type_label(v)).collect::<Vec<_>>().join("+")
}
