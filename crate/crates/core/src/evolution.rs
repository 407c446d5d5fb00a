//! The stochastic model: every step runs migration, then birth, then death.
//!
//! A birth happens with probability `p`. The newborn takes a fraction
//! `Z_u ~ D` of every existing type's mass, with `D` supported on
//! `[beta_min, beta_max]`. A type whose mass is at most `epsilon` dies and
//! splits its mass equally among its current neighbors.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Triangular, Uniform};
use serde::{Deserialize, Serialize};

use crate::dynamics::{migrate_in_place, PopulationState};
use crate::error::{Error, Result};
use crate::graph::{RewiringPolicy, TypeId};
use crate::influence::{InfluenceAssignment, InfluenceFunction};
use crate::rng::{Phase, RunRng};

/// Distribution of the fraction `Z_u` a newborn takes from type `u`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BirthDistribution {
    /// Uniform on `[beta_min, beta_max]`.
    #[default]
    Uniform,
    PointMass { value: f64 },
    /// Triangular on `[beta_min, beta_max]` with the given mode.
    Triangular { mode: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttachmentPolicy {
    /// `k` uniform in `1..=min(3, |V|)`, then `k` distinct uniform types.
    #[default]
    UniformSubset,
    ConnectToAll,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Birth probability per step.
    pub p: f64,
    /// Death threshold: a type with mass `<= epsilon` dies.
    pub epsilon: f64,
    /// Migration dead-zone: no flow across an edge with `|x_u - x_v| <= delta`.
    pub delta: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub distribution: BirthDistribution,
    pub seed: u64,
    pub attachment: AttachmentPolicy,
    pub rewiring: RewiringPolicy,
    pub influence: InfluenceAssignment,
    /// Number of steps in a run.
    pub horizon: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self {
            p: 0.01,
            epsilon: 0.01,
            delta: 0.0,
            beta_min: 0.05,
            beta_max: 0.1,
            distribution: BirthDistribution::Uniform,
            seed: 0,
            attachment: AttachmentPolicy::UniformSubset,
            rewiring: RewiringPolicy::NeighborPath,
            influence: InfluenceAssignment::uniform(InfluenceFunction::Linear { a: 0.5 }),
            horizon: 1000,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::config("p", "must lie in [0, 1]"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config("epsilon", "must lie in (0, 1)"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::config("delta", "must be nonnegative"));
        }
        if !(self.beta_min > 0.0 && self.beta_min <= self.beta_max && self.beta_max < 1.0) {
            return Err(Error::config(
                "beta_min/beta_max",
                "need 0 < beta_min <= beta_max < 1",
            ));
        }
        match self.distribution {
            BirthDistribution::Uniform => {}
            BirthDistribution::PointMass { value: v } | BirthDistribution::Triangular { mode: v } => {
                if !(self.beta_min..=self.beta_max).contains(&v) {
                    return Err(Error::config(
                        "distribution",
                        format!("{v} lies outside [beta_min, beta_max]"),
                    ));
                }
            }
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        self.influence.check_simplex_admissible(1001)
    }

    /// Draw one `Z` from the birth distribution.
    pub fn sample_z<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = (self.beta_min, self.beta_max);
        match self.distribution {
            BirthDistribution::PointMass { value } => value,
            _ if lo == hi => lo,
            BirthDistribution::Uniform => Uniform::new_inclusive(lo, hi)
                .expect("validated bounds")
                .sample(rng),
            BirthDistribution::Triangular { mode } => Triangular::new(lo, hi, mode)
                .expect("validated bounds")
                .sample(rng),
        }
    }

    /// Largest number of types that can survive a death phase: `floor(1/epsilon)`.
    pub fn type_cap(&self) -> usize {
        (1.0 / self.epsilon).floor() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirthEvent {
    pub id: TypeId,
    /// One draw per pre-existing type, in id order.
    pub z: Vec<f64>,
    pub mass: f64,
    pub neighbors: Vec<TypeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeathEvent {
    pub id: TypeId,
    pub mass: f64,
    pub recipients: Vec<TypeId>,
    /// Edges added to keep the graph connected.
    pub rewired: Vec<[TypeId; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub phi_before: f64,
    pub phi_after_migration: f64,
    pub phi_after_birth: f64,
    pub phi_after: f64,
    /// Smallest mass when the migration phase started.
    pub min_mass_before: f64,
    pub migration_active: bool,
    pub birth: Option<BirthEvent>,
    pub deaths: Vec<DeathEvent>,
    pub type_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub terminal: PopulationState,
}

impl Timeline {
    pub fn births(&self) -> usize {
        self.records.iter().filter(|r| r.birth.is_some()).count()
    }

    /// One JSON object per step.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            writeln!(out)?;
        }
        Ok(())
    }

    /// `step,phi,type_count,migration_active,births,deaths`.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,phi,type_count,migration_active,births,deaths")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{},{},{},{}",
                r.step,
                r.phi_after,
                r.type_count,
                u8::from(r.migration_active),
                u8::from(r.birth.is_some()),
                r.deaths.len()
            )?;
        }
        Ok(())
    }
}

/// Create a type that takes `z[i] * x_i` from the `i`-th existing type (id
/// order) and attaches to `neighbors`.
pub fn apply_birth(
    state: &mut PopulationState,
    z: &[f64],
    neighbors: &BTreeSet<TypeId>,
) -> Result<BirthEvent> {
    if z.len() != state.type_count() {
        return Err(Error::InvalidArgument(format!(
            "{} draws for {} types",
            z.len(),
            state.type_count()
        )));
    }
    let (graph, mass) = state.parts_mut();
    let id = graph.add_type(neighbors)?;
    let mut newborn = 0.0;
    for (m, &zu) in mass.values_mut().zip(z) {
        let taken = zu * *m;
        newborn += taken;
        *m -= taken;
    }
    mass.insert(id, newborn);
    Ok(BirthEvent {
        id,
        z: z.to_vec(),
        mass: newborn,
        neighbors: neighbors.iter().copied().collect(),
    })
}

/// With probability `p`, create a new type.
pub fn birth_phase<R: Rng + ?Sized>(
    state: &mut PopulationState,
    config: &EvolutionConfig,
    rng: &mut R,
) -> Result<Option<BirthEvent>> {
    if !rng.random_bool(config.p) {
        return Ok(None);
    }
    let z: Vec<f64> = (0..state.type_count())
        .map(|_| config.sample_z(rng))
        .collect();
    let existing: Vec<TypeId> = state.graph().vertices().collect();
    let neighbors: BTreeSet<TypeId> = match config.attachment {
        AttachmentPolicy::ConnectToAll => existing.iter().copied().collect(),
        AttachmentPolicy::UniformSubset => {
            let k = rng.random_range(1..=existing.len().min(3));
            index::sample(rng, existing.len(), k)
                .into_iter()
                .map(|i| existing[i])
                .collect()
        }
    };
    apply_birth(state, &z, &neighbors).map(Some)
}

/// Repeatedly kill the lightest type at or below `epsilon` until none is left
/// or a single type remains.
pub fn death_phase<R: Rng + ?Sized>(
    state: &mut PopulationState,
    config: &EvolutionConfig,
    rng: &mut R,
) -> Result<Vec<DeathEvent>> {
    let mut events = Vec::new();
    while state.type_count() >= 2 {
        // ties resolve to the lowest id
        let (v, m) = state
            .mass_map()
            .iter()
            .fold(None::<(TypeId, f64)>, |best, (&v, &m)| match best {
                Some((_, bm)) if bm <= m => best,
                _ => Some((v, m)),
            })
            .expect("at least two types");
        if m > config.epsilon {
            break;
        }
        let recipients: Vec<TypeId> = state.graph().neighbors(v)?.collect();
        if recipients.is_empty() {
            return Err(Error::InvalidState(format!(
                "type {v} has no neighbors to inherit its mass"
            )));
        }
        let share = m / recipients.len() as f64;
        let (graph, mass) = state.parts_mut();
        for u in &recipients {
            *mass.get_mut(u).expect("neighbor has mass") += share;
        }
        mass.remove(&v);
        let rewired = graph
            .remove_type(v, config.rewiring, rng)?
            .into_iter()
            .map(|(a, b)| [a, b])
            .collect();
        events.push(DeathEvent {
            id: v,
            mass: m,
            recipients,
            rewired,
        });
    }
    Ok(events)
}

/// Migration, then birth, then death.
pub fn evolution_step(
    state: &mut PopulationState,
    config: &EvolutionConfig,
    rng: &RunRng,
) -> Result<StepRecord> {
    let step = state.step();
    let phi_before = state.phi();
    let min_mass_before = state
        .mass_map()
        .values()
        .copied()
        .fold(f64::INFINITY, f64::min);

    let (migration_active, _) = migrate_in_place(state, &config.influence, config.delta);
    let phi_after_migration = state.phi();

    let birth = birth_phase(state, config, &mut rng.phase(step, Phase::Birth))?;
    let phi_after_birth = state.phi();

    let deaths = death_phase(state, config, &mut rng.phase(step, Phase::Death))?;
    state.renormalize();
    state.set_step(step + 1);

    Ok(StepRecord {
        step,
        phi_before,
        phi_after_migration,
        phi_after_birth,
        phi_after: state.phi(),
        min_mass_before,
        migration_active,
        birth,
        deaths,
        type_count: state.type_count(),
    })
}

/// Run `config.horizon` steps from `x0` (whose graph must be connected).
pub fn run_evolution(x0: &PopulationState, config: &EvolutionConfig) -> Result<Timeline> {
    config.validate()?;
    if !x0.graph().is_connected() {
        return Err(Error::InvalidArgument(
            "birth/death runs need a connected initial graph".into(),
        ));
    }
    let rng = RunRng::new(config.seed);
    let mut state = x0.clone();
    let mut records = Vec::with_capacity(config.horizon as usize);
    for _ in 0..config.horizon {
        records.push(evolution_step(&mut state, config, &rng)?);
    }
    Ok(Timeline {
        seed: config.seed,
        records,
        terminal: state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run_to_convergence, ConvergenceOptions};
    use crate::graph::InfluenceGraph;
    use crate::graph::TypeId as T;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(g: InfluenceGraph, x: &[f64]) -> PopulationState {
        PopulationState::new(g, x).unwrap()
    }

    fn cfg() -> EvolutionConfig {
        EvolutionConfig::default()
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = [
            EvolutionConfig { p: 1.5, ..cfg() },
            EvolutionConfig { epsilon: 0.0, ..cfg() },
            EvolutionConfig { beta_max: 1.0, ..cfg() },
            EvolutionConfig { beta_min: 0.2, beta_max: 0.1, ..cfg() },
            EvolutionConfig {
                distribution: BirthDistribution::PointMass { value: 0.5 },
                ..cfg()
            },
            EvolutionConfig { horizon: 0, ..cfg() },
            EvolutionConfig {
                influence: InfluenceAssignment::uniform(InfluenceFunction::Linear { a: 1.2 }),
                ..cfg()
            },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config { .. })), "{c:?}");
        }
    }

    #[test]
    fn config_json_defaults() {
        let c: EvolutionConfig = serde_json::from_str(r#"{"p":0.2,"seed":9}"#).unwrap();
        assert_eq!(c.p, 0.2);
        assert_eq!(c.seed, 9);
        assert_eq!(c.epsilon, cfg().epsilon);
        let c: EvolutionConfig = serde_json::from_str(
            r#"{"distribution":{"kind":"point-mass","value":0.07},"rewiring":"neighbor-clique"}"#,
        )
        .unwrap();
        assert_eq!(c.distribution, BirthDistribution::PointMass { value: 0.07 });
        assert_eq!(c.rewiring, RewiringPolicy::NeighborClique);
    }

    #[test]
    fn birth_arithmetic() {
        let mut s = state(InfluenceGraph::path(2), &[0.5, 0.5]);
        let ev = apply_birth(&mut s, &[0.2, 0.1], &BTreeSet::from([T(0)])).unwrap();
        assert_eq!(ev.id, T(2));
        let x = s.masses();
        assert!((x[0] - 0.4).abs() < 1e-15);
        assert!((x[1] - 0.45).abs() < 1e-15);
        assert!((x[2] - 0.15).abs() < 1e-15);
        assert!(s.graph().has_edge(T(0), T(2)));
        assert!((s.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_birth_probability_is_identity() {
        let c = EvolutionConfig { p: 0.0, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = state(InfluenceGraph::path(3), &[0.2, 0.3, 0.5]);
        let before = s.clone();
        for _ in 0..100 {
            assert!(birth_phase(&mut s, &c, &mut rng).unwrap().is_none());
        }
        assert_eq!(s, before);
    }

    #[test]
    fn death_single_neighbor() {
        let c = EvolutionConfig { epsilon: 0.01, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = state(InfluenceGraph::path(3), &[0.005, 0.495, 0.5]);
        let ev = death_phase(&mut s, &c, &mut rng).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].id, T(0));
        assert_eq!(ev[0].recipients, vec![T(1)]);
        assert_eq!(s.masses(), vec![0.5, 0.5]);
        assert_eq!(s.graph().edges().collect::<Vec<_>>(), vec![(T(1), T(2))]);
    }

    #[test]
    fn death_of_star_center_splits_by_degree() {
        let c = EvolutionConfig { epsilon: 0.01, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = state(InfluenceGraph::star(4), &[0.009, 0.331, 0.33, 0.33]);
        death_phase(&mut s, &c, &mut rng).unwrap();
        let x = s.masses();
        assert!((x[0] - 0.334).abs() < 1e-15);
        assert!((x[1] - 0.333).abs() < 1e-15 && (x[2] - 0.333).abs() < 1e-15);
        assert!(s.graph().is_connected());
    }

    /// Re-simulates the cascade by hand: the lighter type dies first.
    #[test]
    fn cascading_deaths() {
        let c = EvolutionConfig { epsilon: 0.01, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = state(InfluenceGraph::path(3), &[0.009, 0.002, 0.989]);
        let ev = death_phase(&mut s, &c, &mut rng).unwrap();
        // 1 (0.002) splits into 0 and 2; then 0 (0.010) <= eps dies into 2.
        assert_eq!(ev.iter().map(|e| e.id).collect::<Vec<_>>(), vec![T(1), T(0)]);
        assert!((ev[1].mass - 0.010).abs() < 1e-15);
        assert_eq!(s.type_count(), 1);
        assert!((s.total() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sole_survivor_ends_the_loop() {
        let c = EvolutionConfig { epsilon: 0.5, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = state(InfluenceGraph::path(2), &[0.3, 0.7]);
        death_phase(&mut s, &c, &mut rng).unwrap();
        assert_eq!(s.masses(), vec![1.0]);
    }

    #[test]
    fn inactive_step_with_wide_dead_zone() {
        let c = EvolutionConfig {
            p: 0.0,
            delta: 0.9,
            horizon: 1,
            ..cfg()
        };
        let s = state(InfluenceGraph::path(3), &[0.2, 0.3, 0.5]);
        let tl = run_evolution(&s, &c).unwrap();
        assert_eq!(tl.records.len(), 1);
        let r = &tl.records[0];
        assert!(!r.migration_active && r.birth.is_none() && r.deaths.is_empty());
        assert_eq!(r.phi_before, r.phi_after);
        assert_eq!(tl.terminal.masses(), s.masses());
    }

    /// Composite step on an edge with a point-mass birth distribution:
    /// migration (0.6, 0.4) -> (0.624, 0.376); birth with Z = 0.1 gives
    /// (0.5616, 0.3384, 0.1); nobody is below epsilon.
    #[test]
    fn composite_step_by_hand() {
        let c = EvolutionConfig {
            p: 1.0,
            epsilon: 0.01,
            beta_min: 0.1,
            beta_max: 0.1,
            distribution: BirthDistribution::PointMass { value: 0.1 },
            attachment: AttachmentPolicy::ConnectToAll,
            horizon: 1,
            ..cfg()
        };
        let tl = run_evolution(&state(InfluenceGraph::path(2), &[0.6, 0.4]), &c).unwrap();
        let x = tl.terminal.masses();
        for (got, want) in x.iter().zip([0.5616, 0.3384, 0.1]) {
            assert!((got - want).abs() < 1e-14, "{got} vs {want}");
        }
        let r = &tl.records[0];
        assert!(r.migration_active);
        assert_eq!(r.birth.as_ref().unwrap().neighbors, vec![T(0), T(1)]);
        assert!(r.deaths.is_empty());
    }

    #[test]
    fn same_seed_same_timeline() {
        let c = EvolutionConfig {
            p: 0.3,
            epsilon: 0.02,
            seed: 77,
            horizon: 300,
            ..cfg()
        };
        let s = state(InfluenceGraph::path(4), &[0.1, 0.2, 0.3, 0.4]);
        let bytes = |tl: &Timeline| {
            let mut v = Vec::new();
            tl.write_jsonl(&mut v).unwrap();
            v
        };
        let a = run_evolution(&s, &c).unwrap();
        let b = run_evolution(&s, &c).unwrap();
        assert_eq!(bytes(&a), bytes(&b));
        let other = run_evolution(&s, &EvolutionConfig { seed: 78, ..c }).unwrap();
        assert_ne!(bytes(&a), bytes(&other));
    }

    #[test]
    fn driver_equivalence_without_births() {
        let c = EvolutionConfig {
            p: 0.0,
            delta: 0.0,
            epsilon: 1e-13,
            horizon: 5000,
            ..cfg()
        };
        let s = state(InfluenceGraph::complete(3), &[0.5, 0.3, 0.2]);
        let tl = run_evolution(&s, &c).unwrap();
        let lim = run_to_convergence(&s, &c.influence, ConvergenceOptions::default()).limit;
        for (v, m) in tl.terminal.mass_map() {
            assert!((m - lim.mass(*v).unwrap()).abs() < 1e-9);
        }
        for (v, m) in lim.mass_map() {
            if !tl.terminal.graph().contains(*v) {
                assert!(*m < 1e-9);
            }
        }
    }

    #[test]
    fn disconnected_start_is_rejected() {
        let s = PopulationState::uniform(InfluenceGraph::with_vertices(2));
        assert!(matches!(
            run_evolution(&s, &cfg()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn summary_csv_layout() {
        let c = EvolutionConfig { p: 1.0, horizon: 2, ..cfg() };
        let tl = run_evolution(&state(InfluenceGraph::path(2), &[0.5, 0.5]), &c).unwrap();
        let mut v = Vec::new();
        tl.write_summary_csv(&mut v).unwrap();
        let text = String::from_utf8(v).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "step,phi,type_count,migration_active,births,deaths");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("0,"));
        assert!(lines[1].ends_with(",1,0") || lines[1].ends_with(",1,1"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn newborn_mass_within_beta_range(seed in any::<u64>(), n in 1usize..10, lo in 0.01f64..0.5, width in 0.0f64..0.4) {
            let hi = (lo + width).min(0.99);
            let c = EvolutionConfig { p: 1.0, beta_min: lo, beta_max: hi, ..cfg() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = InfluenceGraph::random_connected(n, 0.3, &mut rng);
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
            let t: f64 = raw.iter().sum();
            let mut s = state(g, &raw.iter().map(|r| r / t).collect::<Vec<_>>());
            let ev = birth_phase(&mut s, &c, &mut rng).unwrap().unwrap();
            prop_assert!(ev.mass >= lo - 1e-15 && ev.mass <= hi + 1e-15);
            prop_assert!((s.total() - 1.0).abs() < 1e-12);
            prop_assert!(s.graph().is_connected());
        }

        #[test]
        fn phase_invariants_hold(seed in any::<u64>(), p in 0.0f64..1.0, eps in 0.005f64..0.1) {
            let c = EvolutionConfig { p, epsilon: eps, delta: 0.01, seed, horizon: 200, ..cfg() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = InfluenceGraph::random_connected(5, 0.3, &mut rng);
            let x0 = PopulationState::uniform(g);
            let tl = run_evolution(&x0, &c).unwrap();
            for r in &tl.records {
                prop_assert!(r.type_count >= 1);
                prop_assert!(r.type_count <= c.type_cap());
                prop_assert!(r.phi_after_migration >= r.phi_before - 1e-14);
                prop_assert!(r.phi_after_migration - r.phi_after_birth <= 2.0 * c.beta_max + 1e-12);
            }
            prop_assert!((tl.terminal.total() - 1.0).abs() < 1e-12);
            prop_assert!(tl.terminal.graph().is_connected());
        }

        #[test]
        fn deaths_never_shrink_survivors(seed in any::<u64>(), n in 2usize..12) {
            let c = EvolutionConfig { epsilon: 0.08, ..cfg() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = InfluenceGraph::random_connected(n, 0.3, &mut rng);
            let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(3)).collect();
            let t: f64 = raw.iter().sum();
            let mut s = state(g, &raw.iter().map(|r| r / t).collect::<Vec<_>>());
            let before = s.mass_map().clone();
            death_phase(&mut s, &c, &mut rng).unwrap();
            for (v, m) in s.mass_map() {
                prop_assert!(*m >= before[v]);
            }
            prop_assert!((s.total() - 1.0).abs() < 1e-12);
            prop_assert!(s.type_count() == 1 || s.mass_map().values().all(|&m| m > c.epsilon));
        }
    }
}
