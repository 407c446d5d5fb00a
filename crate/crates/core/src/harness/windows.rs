use serde::{Deserialize, Serialize};

use crate::evolution::Timeline;

/// Maximal run of steps `start..=start + duration` in which migration moved
/// no mass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableWindow {
    pub start: u64,
    pub duration: u64,
}

impl StableWindow {
    pub fn end(&self) -> u64 {
        self.start + self.duration
    }
}

/// Windows over a sequence of per-step migration activity flags.
pub fn stable_windows(active: impl IntoIterator<Item = bool>) -> Vec<StableWindow> {
    let mut out = Vec::new();
    let mut open: Option<u64> = None;
    let mut t = 0u64;
    for a in active {
        match (a, open) {
            (false, None) => open = Some(t),
            (true, Some(s)) => {
                out.push(StableWindow { start: s, duration: t - 1 - s });
                open = None;
            }
            _ => {}
        }
        t += 1;
    }
    if let Some(s) = open {
        out.push(StableWindow { start: s, duration: t - 1 - s });
    }
    out
}

/// Windows of a timeline, in step numbers.
pub fn detect_stable_windows(timeline: &Timeline) -> Vec<StableWindow> {
    let offset = timeline.records.first().map_or(0, |r| r.step);
    stable_windows(timeline.records.iter().map(|r| r.migration_active))
        .into_iter()
        .map(|w| StableWindow { start: w.start + offset, ..w })
        .collect()
}
