use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::set_label;
use crate::dynamics::{active_set, run_to_convergence, ConvergenceOptions, PopulationState, DEFAULT_THETA_ACTIVE};
use crate::error::{Error, Result};
use crate::graph::InfluenceGraph;
use crate::influence::InfluenceAssignment;

/// Label of cells that hit the iteration cap.
pub const UNRESOLVED: &str = "unresolved";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinCell {
    /// Barycentric grid indices with `i + j + k = resolution`.
    pub ijk: [usize; 3],
    pub label: String,
}

/// Limit labels over the grid `x = (i, j, k) / resolution` of the 2-simplex.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasinMap {
    pub resolution: usize,
    /// Row-major: `k` ascending, then `i` ascending.
    pub cells: Vec<BasinCell>,
}

/// Label every grid cell with the active set of its limit.
pub fn basin_map(
    graph: &InfluenceGraph,
    assignment: &InfluenceAssignment,
    resolution: usize,
    opts: ConvergenceOptions,
) -> Result<BasinMap> {
    if graph.vertex_count() != 3 {
        return Err(Error::InvalidArgument(format!(
            "basin maps need exactly 3 types, got {}",
            graph.vertex_count()
        )));
    }
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let r = resolution;
    let grid: Vec<[usize; 3]> = (0..=r)
        .flat_map(|k| (0..=r - k).map(move |i| [i, r - k - i, k]))
        .collect();
    let cells = grid
        .into_par_iter()
        .map(|ijk| {
            let x = ijk.map(|c| c as f64 / r as f64);
            let x0 = PopulationState::new(graph.clone(), &x)?;
            let run = run_to_convergence(&x0, assignment, opts);
            let label = if run.converged {
                set_label(&active_set(&run.limit, DEFAULT_THETA_ACTIVE))
            } else {
                UNRESOLVED.to_string()
            };
            Ok(BasinCell { ijk, label })
        })
        .collect::<Result<_>>()?;
    Ok(BasinMap { resolution, cells })
}

impl BasinMap {
    /// Cell count per label.
    pub fn legend(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for c in &self.cells {
            *out.entry(c.label.clone()).or_insert(0) += 1;
        }
        out
    }

    /// Fraction of cells per label.
    pub fn area_fractions(&self) -> BTreeMap<String, f64> {
        let n = self.cells.len() as f64;
        self.legend().into_iter().map(|(l, c)| (l, c as f64 / n)).collect()
    }

    pub fn label_at(&self, ijk: [usize; 3]) -> Option<&str> {
        self.cells.iter().find(|c| c.ijk == ijk).map(|c| c.label.as_str())
    }

    /// One row per `k` (top row `k = resolution`), one column per `i`;
    /// cells outside the simplex are empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let r = self.resolution;
        let mut rows = vec![vec![String::new(); r + 1]; r + 1];
        for c in &self.cells {
            rows[r - c.ijk[2]][c.ijk[0]] = c.label.clone();
        }
        for row in rows {
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Plain PGM with one gray level per legend entry (in legend order) and
    /// white outside the simplex. Same layout as [`BasinMap::write_csv`].
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let r = self.resolution;
        let labels: Vec<String> = self.legend().into_keys().collect();
        let level = |l: &str| {
            let i = labels.iter().position(|x| x == l).unwrap_or(0);
            (i * 200 / labels.len().max(1)) as u8
        };
        let mut px = vec![vec![255u8; r + 1]; r + 1];
        for c in &self.cells {
            px[r - c.ijk[2]][c.ijk[0]] = level(&c.label);
        }
        writeln!(out, "P2\n{} {}\n255", r + 1, r + 1)?;
        for row in px {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}
