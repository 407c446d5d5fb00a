//! Binomial summaries shared by the Monte Carlo drivers.

use serde::{Deserialize, Serialize};

/// z-score of a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The bound is implied by a hard constraint and says nothing.
    Vacuous,
}

/// Wilson score interval at 95% confidence.
pub fn wilson95(successes: usize, trials: usize) -> [f64; 2] {
    if trials == 0 {
        return [0.0, 1.0];
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    [(center - half).max(0.0), (center + half).min(1.0)]
}

/// Standard deviation of a frequency over `trials` draws with success
/// probability `bound`, clamped to `[0, 1]`.
pub fn binomial_sigma(bound: f64, trials: usize) -> f64 {
    let b = bound.clamp(0.0, 1.0);
    (b * (1.0 - b) / trials as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStats<A> {
    pub trials: usize,
    pub successes: usize,
    pub estimate: f64,
    pub wilson95: [f64; 2],
    /// Lower bound on the success probability claimed by the theory.
    pub paper_bound: f64,
    /// Failure needs `estimate < paper_bound - slack_sigmas * sigma(paper_bound)`.
    pub slack_sigmas: f64,
    pub verdict: Verdict,
    pub artifacts: Vec<A>,
}

impl<A> TrialStats<A> {
    /// Tally `(success, artifact)` pairs against `paper_bound`.
    pub fn from_outcomes(
        outcomes: Vec<(bool, A)>,
        paper_bound: f64,
        slack_sigmas: f64,
    ) -> Self {
        let trials = outcomes.len();
        let successes = outcomes.iter().filter(|(ok, _)| *ok).count();
        let estimate = if trials == 0 {
            0.0
        } else {
            successes as f64 / trials as f64
        };
        let threshold = paper_bound - slack_sigmas * binomial_sigma(paper_bound, trials.max(1));
        let verdict = if trials > 0 && estimate >= threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self {
            trials,
            successes,
            estimate,
            wilson95: wilson95(successes, trials),
            paper_bound,
            slack_sigmas,
            verdict,
            artifacts: outcomes.into_iter().map(|(_, a)| a).collect(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}
