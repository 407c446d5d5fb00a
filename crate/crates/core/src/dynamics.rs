//! The deterministic migration map and its convergence analysis.
//!
//! One step moves `x_u * x_v * F_uv(x_u - x_v)` from `v` to `u` along every
//! edge simultaneously, so mass flows from smaller to larger neighbors. The
//! potential `sum x_v^2` never decreases along a trajectory.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, TypeId};
use crate::influence::{InfluenceAssignment, InfluenceFunction};

/// Tolerance on `|sum x - 1|` when a state is built from user input.
const INPUT_SUM_TOL: f64 = 1e-9;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_TOL_FLOW: f64 = 1e-12;
pub const DEFAULT_THETA_ACTIVE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: u64 = 1_000_000;

/// A population vector on the simplex over the vertices of a graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    graph: InfluenceGraph,
    mass: BTreeMap<TypeId, f64>,
    step: u64,
}

impl PopulationState {
    /// Masses listed in increasing vertex-id order. They must be nonnegative
    /// and sum to 1 within `1e-9`; the sum is then normalized exactly.
    pub fn new(graph: InfluenceGraph, masses: &[f64]) -> Result<Self> {
        if masses.len() != graph.vertex_count() {
            return Err(Error::InvalidArgument(format!(
                "{} masses for {} types",
                masses.len(),
                graph.vertex_count()
            )));
        }
        let mass = graph.vertices().zip(masses.iter().copied()).collect();
        Self::from_map(graph, mass)
    }

    pub fn from_map(graph: InfluenceGraph, mass: BTreeMap<TypeId, f64>) -> Result<Self> {
        if !mass.keys().copied().eq(graph.vertices()) {
            return Err(Error::InvalidArgument(
                "mass map and graph have different vertex sets".into(),
            ));
        }
        if let Some((v, m)) = mass.iter().find(|(_, m)| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidArgument(format!("mass of {v} is {m}")));
        }
        let total: f64 = mass.values().sum();
        if graph.vertex_count() > 0 && (total - 1.0).abs() > INPUT_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        let mut state = Self {
            graph,
            mass,
            step: 0,
        };
        state.renormalize();
        Ok(state)
    }

    /// Equal mass on every type.
    pub fn uniform(graph: InfluenceGraph) -> Self {
        let n = graph.vertex_count();
        let mass = graph.vertices().map(|v| (v, 1.0 / n as f64)).collect();
        Self {
            graph,
            mass,
            step: 0,
        }
    }

    pub(crate) fn from_parts_unchecked(
        graph: InfluenceGraph,
        mass: BTreeMap<TypeId, f64>,
        step: u64,
    ) -> Self {
        Self { graph, mass, step }
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut InfluenceGraph, &mut BTreeMap<TypeId, f64>) {
        (&mut self.graph, &mut self.mass)
    }

    pub fn graph(&self) -> &InfluenceGraph {
        &self.graph
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn mass(&self, v: TypeId) -> Result<f64> {
        self.mass.get(&v).copied().ok_or(Error::UnknownType(v))
    }

    pub fn mass_map(&self) -> &BTreeMap<TypeId, f64> {
        &self.mass
    }

    /// Masses in increasing vertex-id order.
    pub fn masses(&self) -> Vec<f64> {
        self.mass.values().copied().collect()
    }

    pub fn type_count(&self) -> usize {
        self.mass.len()
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn phi(&self) -> f64 {
        phi(self.mass.values().copied())
    }

    /// Divide by the total mass; returns `total - 1` from before the division.
    pub(crate) fn renormalize(&mut self) -> f64 {
        let total = self.total();
        if total > 0.0 {
            for m in self.mass.values_mut() {
                *m /= total;
            }
        }
        total - 1.0
    }
}

/// `Phi(x) = sum x_v^2`.
pub fn phi(masses: impl IntoIterator<Item = f64>) -> f64 {
    masses.into_iter().map(|m| m * m).sum()
}

pub fn potential_phi(state: &PopulationState) -> f64 {
    state.phi()
}

/// `Psi(x, p) = sum over types with p_v > 0 of (p_v - x_v)`.
pub fn local_potential_psi(x: &PopulationState, p: &PopulationState) -> Result<f64> {
    let active: BTreeSet<TypeId> = p
        .mass
        .iter()
        .filter(|(_, &m)| m > 0.0)
        .map(|(&v, _)| v)
        .collect();
    local_potential_psi_over(x, p, &active)
}

/// `Psi` summed over an explicit active set of `p` (e.g. from [`active_set`]).
pub fn local_potential_psi_over(
    x: &PopulationState,
    p: &PopulationState,
    active: &BTreeSet<TypeId>,
) -> Result<f64> {
    if !x.mass.keys().eq(p.mass.keys()) {
        return Err(Error::InvalidArgument(
            "states are over different vertex sets".into(),
        ));
    }
    active
        .iter()
        .map(|v| Ok(p.mass(*v)? - x.mass(*v)?))
        .sum()
}

/// Dense view of a graph with its influence functions, for the hot loops.
pub(crate) struct EdgeKernel<'a> {
    pub ids: Vec<TypeId>,
    pub edges: Vec<(usize, usize, &'a InfluenceFunction)>,
}

impl<'a> EdgeKernel<'a> {
    pub fn new(graph: &InfluenceGraph, assignment: &'a InfluenceAssignment) -> Self {
        let ids: Vec<TypeId> = graph.vertices().collect();
        let index: BTreeMap<TypeId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let edges = graph
            .edges()
            .map(|(u, v)| (index[&u], index[&v], assignment.get(u, v)))
            .collect();
        Self { ids, edges }
    }

    /// Synchronous update `out = x + net inflow`, before renormalization.
    /// Returns the largest flow magnitude over all edges.
    pub fn apply(&self, x: &[f64], delta: f64, out: &mut [f64]) -> f64 {
        self.apply_with_movement(x, delta, out).0
    }

    /// Like [`EdgeKernel::apply`], also returning the L1 norm of the net
    /// flows. Net flows are summed before being added to `x`, so the norm
    /// keeps full relative precision even when it is far below the ulp of
    /// the largest mass.
    pub fn apply_with_movement(&self, x: &[f64], delta: f64, out: &mut [f64]) -> (f64, f64) {
        out.fill(0.0);
        let mut max_flow = 0.0_f64;
        for &(u, v, f) in &self.edges {
            let flow = edge_flow(x[u], x[v], f, delta);
            out[u] += flow;
            out[v] -= flow;
            max_flow = max_flow.max(flow.abs());
        }
        let movement = out.iter().map(|d| d.abs()).sum();
        for (o, xi) in out.iter_mut().zip(x) {
            *o += xi;
        }
        (max_flow, movement)
    }

    pub fn max_flow(&self, x: &[f64], delta: f64) -> f64 {
        self.edges
            .iter()
            .map(|&(u, v, f)| edge_flow(x[u], x[v], f, delta).abs())
            .fold(0.0, f64::max)
    }
}

/// Mass moving from `v` into `u`.
#[inline]
fn edge_flow(xu: f64, xv: f64, f: &InfluenceFunction, delta: f64) -> f64 {
    let d = xu - xv;
    if d.abs() <= delta {
        0.0
    } else {
        xu * xv * f.value(d)
    }
}

/// Mass moving from `v` into `u` in one step; negative when it moves the other way.
pub fn flow(
    state: &PopulationState,
    u: TypeId,
    v: TypeId,
    assignment: &InfluenceAssignment,
    delta: f64,
) -> Result<f64> {
    if !state.graph.has_edge(u, v) {
        return Err(Error::InvalidArgument(format!("{u}-{v} is not an edge")));
    }
    Ok(edge_flow(
        state.mass(u)?,
        state.mass(v)?,
        assignment.get(u, v),
        delta,
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MigrationStep {
    pub state: PopulationState,
    /// True iff some edge carried a nonzero flow.
    pub migration_active: bool,
    /// `sum x - 1` before renormalization.
    pub residual: f64,
}

/// One synchronous migration step with dead-zone `delta` (0 in pure mode).
pub fn migrate_step(
    state: &PopulationState,
    assignment: &InfluenceAssignment,
    delta: f64,
) -> MigrationStep {
    let mut next = state.clone();
    let (migration_active, residual) = migrate_in_place(&mut next, assignment, delta);
    MigrationStep {
        state: next,
        migration_active,
        residual,
    }
}

/// In-place [`migrate_step`]; returns `(migration_active, residual)`.
pub(crate) fn migrate_in_place(
    state: &mut PopulationState,
    assignment: &InfluenceAssignment,
    delta: f64,
) -> (bool, f64) {
    let kernel = EdgeKernel::new(&state.graph, assignment);
    let x = state.masses();
    let mut out = vec![0.0; x.len()];
    let max_flow = kernel.apply(&x, delta, &mut out);
    state.step += 1;
    // an inactive step leaves the state bit-identical
    if max_flow == 0.0 {
        return (false, state.total() - 1.0);
    }
    for (m, new) in state.mass.values_mut().zip(out) {
        *m = new;
    }
    (true, state.renormalize())
}

/// True iff every edge flow (with no dead-zone) is below `tol_flow` in magnitude.
pub fn is_fixed_point(
    state: &PopulationState,
    assignment: &InfluenceAssignment,
    tol_flow: f64,
) -> bool {
    EdgeKernel::new(&state.graph, assignment).max_flow(&state.masses(), 0.0) < tol_flow
}

/// Types with mass strictly above `theta_active`.
pub fn active_set(state: &PopulationState, theta_active: f64) -> BTreeSet<TypeId> {
    state
        .mass
        .iter()
        .filter(|(_, &m)| m > theta_active)
        .map(|(&v, _)| v)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveComponent {
    pub types: Vec<TypeId>,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointClass {
    pub components: Vec<ActiveComponent>,
    pub independent: bool,
}

impl FixedPointClass {
    pub fn active(&self) -> BTreeSet<TypeId> {
        self.components
            .iter()
            .flat_map(|c| c.types.iter().copied())
            .collect()
    }
}

/// Group the active types of a fixed point into connected components of
/// equal mass.
pub fn classify_fixed_point(
    state: &PopulationState,
    theta_active: f64,
    tol_mass: f64,
) -> Result<FixedPointClass> {
    let active = active_set(state, theta_active);
    let mut components = Vec::new();
    for types in state.graph.components_within(&active) {
        let ms: Vec<f64> = types.iter().map(|v| state.mass[v]).collect();
        let lo = ms.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo >= tol_mass {
            return Err(Error::NotAFixedPoint(format!(
                "component {types:?} has mass spread {}",
                hi - lo
            )));
        }
        let mass = ms.iter().sum::<f64>() / ms.len() as f64;
        components.push(ActiveComponent { types, mass });
    }
    let independent = state.graph.is_independent_set(&active)?;
    Ok(FixedPointClass {
        components,
        independent,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceOptions {
    /// Stop once the L1 change of one step falls below this and so does the
    /// geometric tail estimate `change * r / (1 - r)`, where `r` is the
    /// ratio of successive changes. The change is measured on the net
    /// flows, before renormalization.
    pub tol: f64,
    pub max_iters: u64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    pub limit: PopulationState,
    /// Steps that moved the state by at least `tol`.
    pub iterations: u64,
    pub converged: bool,
    /// `Phi` of the start state followed by `Phi` after every effective step.
    pub phi_trace: Vec<f64>,
}

pub fn run_to_convergence(
    x0: &PopulationState,
    assignment: &InfluenceAssignment,
    opts: ConvergenceOptions,
) -> Convergence {
    run_to_convergence_with(x0, assignment, opts, |_| {})
}

/// Like [`run_to_convergence`], calling `observe` on the start state and on
/// every state accepted afterwards.
pub fn run_to_convergence_with(
    x0: &PopulationState,
    assignment: &InfluenceAssignment,
    opts: ConvergenceOptions,
    mut observe: impl FnMut(&PopulationState),
) -> Convergence {
    let kernel = EdgeKernel::new(&x0.graph, assignment);
    let mut x = x0.masses();
    let mut next = vec![0.0; x.len()];
    let mut phi_trace = vec![phi(x.iter().copied())];
    let mut iterations = 0;
    let mut converged = false;
    let to_state = |masses: &[f64], step: u64| {
        PopulationState::from_parts_unchecked(
            x0.graph.clone(),
            kernel.ids.iter().copied().zip(masses.iter().copied()).collect(),
            step,
        )
    };
    observe(x0);

    let mut prev_change = f64::INFINITY;
    loop {
        let (_, change) = kernel.apply_with_movement(&x, 0.0, &mut next);
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|m| *m /= total);
        let ratio = change / prev_change;
        let tail = if ratio < 1.0 {
            change * ratio / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        prev_change = change;
        if change < opts.tol && tail < opts.tol {
            converged = true;
            std::mem::swap(&mut x, &mut next);
            break;
        }
        if iterations == opts.max_iters {
            break;
        }
        std::mem::swap(&mut x, &mut next);
        iterations += 1;
        phi_trace.push(phi(x.iter().copied()));
        observe(&to_state(&x, x0.step + iterations));
    }

    Convergence {
        limit: to_state(&x, x0.step + iterations),
        iterations,
        converged,
        phi_trace,
    }
}

/// Writes `step,phi,active_count,<one column per type id>` rows.
pub struct TrajectoryCsv<W: Write> {
    out: W,
    columns: Vec<TypeId>,
    theta_active: f64,
}

impl<W: Write> TrajectoryCsv<W> {
    pub fn new(mut out: W, graph: &InfluenceGraph, theta_active: f64) -> std::io::Result<Self> {
        let columns: Vec<TypeId> = graph.vertices().collect();
        write!(out, "step,phi,active_count")?;
        for v in &columns {
            write!(out, ",x{v}")?;
        }
        writeln!(out)?;
        Ok(Self {
            out,
            columns,
            theta_active,
        })
    }

    pub fn row(&mut self, state: &PopulationState) -> std::io::Result<()> {
        write!(
            self.out,
            "{},{:e},{}",
            state.step,
            state.phi(),
            active_set(state, self.theta_active).len()
        )?;
        for v in &self.columns {
            write!(self.out, ",{:e}", state.mass.get(v).copied().unwrap_or(0.0))?;
        }
        writeln!(self.out)
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}
