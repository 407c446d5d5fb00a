//! Acceptance criteria. Each test writes one `criterion NN ...: PASS|FAIL`
//! line to stderr (bypassing libtest capture) and then asserts the result.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::time::Instant;

use opdyn::dynamics::{
    is_fixed_point, migrate_step, ConvergenceOptions, PopulationState,
};
use opdyn::evolution::{run_evolution, EvolutionConfig, Timeline};
use opdyn::harness::{
    basin_map, binomial_sigma, monte_carlo_convergence, verify_phi_bounds,
    verify_stability_theorem, verify_type_bound, BasinMap, StartSpec, TheoremOptions,
    Verdict,
};
use opdyn::rng::{trial_seed, Phase, RunRng};
use opdyn::stability::{
    check_diagonal_dominance, eigenvalues, jacobian, jacobian_fd, projected_jacobian,
    spectrum_distance, without_unit_eigenvalue,
};
use opdyn::{InfluenceAssignment, InfluenceFunction, InfluenceGraph, TypeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

fn report(id: u32, name: &str, ok: bool, detail: String) {
    let line = format!(
        "criterion {id:02} {name}: {} ({detail})\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {id} failed: {detail}");
}

fn lin(a: f64) -> InfluenceAssignment {
    InfluenceAssignment::uniform(InfluenceFunction::Linear { a })
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> PopulationState {
    let p = rng.random_range(0.0..0.6);
    let g = InfluenceGraph::random_connected(n, p, rng);
    let x = opdyn::harness::sample_simplex(rng, n).unwrap();
    PopulationState::new(g, &x).unwrap()
}

/// Smooth odd increasing function with `sup|F| = sup`.
fn function_with_sup(rng: &mut ChaCha8Rng, sup: f64) -> InfluenceFunction {
    match rng.random_range(0..3) {
        0 => InfluenceFunction::Linear { a: sup },
        1 => InfluenceFunction::Cubic { a: sup },
        _ => InfluenceFunction::ScaledOddSmooth { a: 2.0 * sup },
    }
}

/// Per-edge functions with sup in `(0, max_sup]`.
fn random_assignment(rng: &mut ChaCha8Rng, g: &InfluenceGraph, max_sup: f64) -> InfluenceAssignment {
    let sup = rng.random_range(0.05..=max_sup);
    let default = function_with_sup(rng, sup);
    let mut a = InfluenceAssignment::uniform(default);
    for (u, v) in g.edges().collect::<Vec<_>>() {
        if rng.random_bool(0.5) {
            let sup = rng.random_range(0.05..=max_sup);
            let f = function_with_sup(rng, sup);
            a = a.with_edge(u, v, f);
        }
    }
    a
}

/// Criteria 1 and 2 share one sweep.
struct PhiSweep {
    min_delta: f64,
    min_nontrivial_delta: f64,
    nontrivial_steps: usize,
    max_residual: f64,
    coords_in_unit: bool,
    secs: f64,
}

fn phi_sweep() -> &'static PhiSweep {
    static SWEEP: std::sync::OnceLock<PhiSweep> = std::sync::OnceLock::new();
    SWEEP.get_or_init(|| {
        let start = Instant::now();
        // A step whose largest edge flow is at least this is not a fixed point.
        const NONTRIVIAL_FLOW: f64 = 1e-6;
        let per: Vec<(f64, f64, usize, f64, bool)> = (0..500u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(1, i));
                let n = rng.random_range(2..=16);
                let mut s = random_state(&mut rng, n);
                let f = random_assignment(&mut rng, s.graph(), 1.0);
                let (mut min_d, mut min_nt, mut nt, mut res, mut unit) =
                    (f64::INFINITY, f64::INFINITY, 0, 0.0f64, true);
                for _ in 0..1000 {
                    let nontrivial = !is_fixed_point(&s, &f, NONTRIVIAL_FLOW);
                    let step = migrate_step(&s, &f, 0.0);
                    let d = step.state.phi() - s.phi();
                    min_d = min_d.min(d);
                    if nontrivial {
                        nt += 1;
                        min_nt = min_nt.min(d);
                    }
                    res = res.max(step.residual.abs());
                    unit &= step.state.masses().iter().all(|m| (0.0..=1.0).contains(m));
                    s = step.state;
                }
                (min_d, min_nt, nt, res, unit)
            })
            .collect();
        PhiSweep {
            min_delta: per.iter().map(|r| r.0).fold(f64::INFINITY, f64::min),
            min_nontrivial_delta: per.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
            nontrivial_steps: per.iter().map(|r| r.2).sum(),
            max_residual: per.iter().map(|r| r.3).fold(0.0, f64::max),
            coords_in_unit: per.iter().all(|r| r.4),
            secs: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn c01_phi_monotone() {
    let s = phi_sweep();
    let ok = s.min_delta >= -1e-14 && s.min_nontrivial_delta > 1e-12 && s.secs < 60.0;
    report(
        1,
        "phi-monotonicity",
        ok,
        format!(
            "min dPhi {:.3e}, min dPhi over {} non-fixed steps {:.3e}, {:.1}s",
            s.min_delta, s.nontrivial_steps, s.min_nontrivial_delta, s.secs
        ),
    );
}

#[test]
fn c02_simplex_preserved() {
    let s = phi_sweep();
    let ok = s.max_residual <= 1e-9 && s.coords_in_unit && s.secs < 60.0;
    report(
        2,
        "simplex-preservation",
        ok,
        format!("max |sum-1| {:.3e}, coordinates in [0,1]: {}", s.max_residual, s.coords_in_unit),
    );
}

#[test]
fn c03_jacobian_matches_finite_differences() {
    let start = Instant::now();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_col = 0.0f64;
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(3, i));
        let n = rng.random_range(2..=12);
        let s = random_state(&mut rng, n);
        let f = random_assignment(&mut rng, s.graph(), 1.0);
        let an = jacobian(&s, &f);
        let fd = jacobian_fd(&s, &f, 1e-6);
        for r in 0..n {
            for c in 0..n {
                let tol = (1e-4 * an.get(r, c).abs()).max(1e-6);
                worst_excess = worst_excess.max((an.get(r, c) - fd.get(r, c)).abs() - tol);
            }
        }
        for cs in an.column_sums() {
            worst_col = worst_col.max((cs - 1.0).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        3,
        "jacobian-correctness",
        worst_excess <= 0.0 && worst_col <= 1e-12 && secs < 10.0,
        format!("worst |an-fd| - tol {worst_excess:.3e}, worst |colsum-1| {worst_col:.3e}, {secs:.1}s"),
    );
}

#[test]
fn c04_projection_preserves_spectrum() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(4, i));
        let n = rng.random_range(2..=8);
        let s = random_state(&mut rng, n);
        let f = random_assignment(&mut rng, s.graph(), 1.0);
        let j = jacobian(&s, &f);
        let full = without_unit_eigenvalue(&eigenvalues(&j).unwrap().eigenvalues);
        for v in s.graph().vertices() {
            let proj = eigenvalues(&projected_jacobian(&j, v).unwrap()).unwrap();
            worst = worst.max(spectrum_distance(&full, &proj.eigenvalues));
            cases += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        4,
        "projection-lemma",
        worst <= 1e-8 && secs < 30.0,
        format!("{cases} projections, worst eigenvalue mismatch {worst:.3e}, {secs:.1}s"),
    );
}

/// Connected graphs on `n` vertices, one per isomorphism class, as edge lists.
fn connected_graphs(n: usize) -> Vec<Vec<(u64, u64)>> {
    let pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    let perms = permutations(n);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for mask in 0u32..(1 << pairs.len()) {
        let edges: Vec<(usize, usize)> =
            (0..pairs.len()).filter(|b| mask >> b & 1 == 1).map(|b| pairs[b]).collect();
        let g = InfluenceGraph::from_edges(
            n,
            &edges.iter().map(|&(u, v)| (u as u64, v as u64)).collect::<Vec<_>>(),
        )
        .unwrap();
        if !g.is_connected() {
            continue;
        }
        let canon = perms
            .iter()
            .map(|p| {
                let mut e: Vec<(usize, usize)> = edges
                    .iter()
                    .map(|&(u, v)| (p[u].min(p[v]), p[u].max(p[v])))
                    .collect();
                e.sort_unstable();
                e
            })
            .min()
            .unwrap();
        if seen.insert(canon) {
            out.push(edges.iter().map(|&(u, v)| (u as u64, v as u64)).collect());
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn c05_non_independent_fixed_points_unstable() {
    let start = Instant::now();
    // Connected graphs up to isomorphism (OEIS A001349).
    let classes: Vec<usize> = (2..=6).map(|n| connected_graphs(n).len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases = 0usize;
    let mut min_radius = f64::INFINITY;
    for n in 2..=6usize {
        for edges in connected_graphs(n) {
            let g = InfluenceGraph::from_edges(n, &edges).unwrap();
            for subset in 1u32..(1 << n) {
                let active: BTreeSet<TypeId> =
                    (0..n as u64).filter(|b| subset >> b & 1 == 1).map(TypeId).collect();
                if g.is_independent_set(&active).unwrap() {
                    continue;
                }
                let comps = g.components_within(&active);
                for variant in 0..2 {
                    let weights: Vec<f64> = comps
                        .iter()
                        .map(|_| if variant == 0 { 1.0 } else { rng.random_range(0.2..1.0) })
                        .collect();
                    let total: f64 = comps.iter().zip(&weights).map(|(c, w)| c.len() as f64 * w).sum();
                    let mut x = vec![0.0; n];
                    for (c, w) in comps.iter().zip(&weights) {
                        for v in c {
                            x[v.0 as usize] = w / total;
                        }
                    }
                    let s = PopulationState::new(g.clone(), &x).unwrap();
                    for a in [0.49, 0.5] {
                        let f = lin(a);
                        assert!(is_fixed_point(&s, &f, 1e-15));
                        let j = jacobian(&s, &f);
                        let u = TypeId(n as u64 - 1);
                        let r = eigenvalues(&projected_jacobian(&j, u).unwrap())
                            .unwrap()
                            .spectral_radius;
                        min_radius = min_radius.min(r);
                        cases += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        5,
        "non-independent-fixed-points-unstable",
        classes == [1, 2, 6, 21, 112] && min_radius > 1.0 + 1e-9 && secs < 60.0,
        format!(
            "graph classes {classes:?}, {cases} fixed points, min projected radius {min_radius:.6}, {secs:.1}s"
        ),
    );
}

#[test]
fn c06_diagonal_dominance() {
    let start = Instant::now();
    let fails: usize = (0..10_000u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(6, i));
            let n = rng.random_range(2..=16);
            let s = random_state(&mut rng, n);
            let g = s.graph().clone();
            let mut f = InfluenceAssignment::uniform(function_with_sup(&mut rng, 0.49));
            for (u, v) in g.edges().collect::<Vec<_>>() {
                f = f.with_edge(u, v, function_with_sup(&mut rng, 0.49));
            }
            !check_diagonal_dominance(&jacobian(&s, &f))
        })
        .count();
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        "diagonal-dominance",
        fails == 0 && secs < 30.0,
        format!("{fails} of 10000 states not dominant, {secs:.1}s"),
    );
}

fn path_acb() -> InfluenceGraph {
    // A = 0, B = 1, C = 2 with C in the middle.
    InfluenceGraph::from_edges(3, &[(0, 2), (2, 1)]).unwrap()
}

#[test]
fn c07_convergence_to_independent_sets() {
    let start = Instant::now();
    let opts = ConvergenceOptions { tol: 1e-10, max_iters: 1_000_000 };
    let graphs = [
        ("triangle", InfluenceGraph::complete(3)),
        ("path", path_acb()),
        ("C5", InfluenceGraph::cycle(5)),
        ("K4", InfluenceGraph::complete(4)),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, (name, g)) in graphs.iter().enumerate() {
        let study = monte_carlo_convergence(g, &lin(0.49), 1000, 70 + k as u64, opts).unwrap();
        let radius_ok = study
            .stats
            .artifacts
            .iter()
            .filter_map(|t| t.spectral_radius)
            .all(|r| r <= 1.0 + 1e-6);
        ok &= study.stats.estimate >= 0.995 && radius_ok;
        parts.push(format!("{name} {:.3}", study.stats.estimate));
        if *name == "triangle" {
            let census: Vec<f64> = ["A", "B", "C"].iter().map(|l| study.census_fraction(l)).collect();
            ok &= census.iter().all(|c| (c - 1.0 / 3.0).abs() <= 0.05);
            parts.push(format!("triangle census {census:.3?}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        7,
        "convergence-to-independent-sets",
        ok && secs < 300.0,
        format!("{}, {secs:.1}s", parts.join(", ")),
    );
}

fn letter(i: usize) -> &'static str {
    ["A", "B", "C"][i]
}

/// Triangle cells go to the argmax; exact two-way ties keep both tied types.
fn triangle_mismatches(m: &BasinMap) -> usize {
    m.cells
        .iter()
        .filter(|c| {
            let hi = *c.ijk.iter().max().unwrap();
            let tied: Vec<&str> = (0..3).filter(|&i| c.ijk[i] == hi).map(letter).collect();
            c.label != tied.join("+")
        })
        .count()
}

#[test]
fn c08_basin_maps() {
    let start = Instant::now();
    let r = 200;
    let opts = ConvergenceOptions::default();
    let tri = basin_map(&InfluenceGraph::complete(3), &lin(0.5), r, opts).unwrap();
    let path = basin_map(&path_acb(), &lin(0.5), r, opts).unwrap();

    let tri_bad = triangle_mismatches(&tri);
    let interior = |c: &&opdyn::harness::BasinCell| c.ijk.iter().all(|&v| v > 0);
    let stray = path
        .cells
        .iter()
        .filter(interior)
        .filter(|c| c.label != "C" && c.label != "A+B")
        .count();
    // C is absorbed along the bottom edge; the C corner keeps C.
    let edge_ab = path
        .cells
        .iter()
        .filter(|c| c.ijk[2] == 0 && c.ijk[0] > 0 && c.ijk[1] > 0)
        .all(|c| c.label == "A+B");
    let corner_c = path.label_at([1, 1, r - 2]) == Some("C");
    let areas = path.area_fractions();
    let (c_area, ab_area) = (areas.get("C").copied().unwrap_or(0.0), areas.get("A+B").copied().unwrap_or(0.0));
    let secs = start.elapsed().as_secs_f64();
    report(
        8,
        "basin-maps",
        tri_bad == 0 && stray == 0 && edge_ab && corner_c && c_area > 0.05 && ab_area > 0.05 && secs < 600.0,
        format!(
            "triangle argmax mismatches {tri_bad}; path areas C {c_area:.4}, A+B {ab_area:.4}, other interior {stray}; {} cells each, {secs:.1}s",
            tri.cells.len()
        ),
    );
}

#[test]
fn c09_phi_delta_bounds() {
    let start = Instant::now();
    let families = [
        InfluenceFunction::Linear { a: 0.5 },
        InfluenceFunction::Cubic { a: 0.9 },
        InfluenceFunction::ScaledOddSmooth { a: 0.9 },
    ];
    let results: Vec<(usize, usize, usize, bool)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(9, i);
            let cfg = EvolutionConfig {
                p: 0.05,
                epsilon: 0.02,
                delta: 0.05,
                beta_min: 0.05,
                beta_max: 0.1,
                influence: InfluenceAssignment::uniform(families[i as usize % 3].clone()),
                seed,
                horizon: 1000,
                ..EvolutionConfig::default()
            };
            let start = StartSpec::RandomSimplex { types: 8, edge_prob: 0.3 };
            let x0 = start.build(&mut RunRng::new(seed).phase(0, Phase::Init)).unwrap();
            let tl = run_evolution(&x0, &cfg).unwrap();
            let rep = verify_phi_bounds(&tl, &cfg);
            let phi_oracle: f64 = tl.terminal.masses().iter().map(|m| m * m).sum();
            let consistent = (phi_oracle - tl.records.last().unwrap().phi_after).abs() < 1e-15;
            (rep.violations.len(), rep.migrations_checked, rep.births_checked, consistent)
        })
        .collect();
    let violations: usize = results.iter().map(|r| r.0).sum();
    let migrations: usize = results.iter().map(|r| r.1).sum();
    let births: usize = results.iter().map(|r| r.2).sum();
    let consistent = results.iter().all(|r| r.3);
    let secs = start.elapsed().as_secs_f64();
    report(
        9,
        "phi-delta-lemmas",
        violations == 0 && migrations > 0 && births > 0 && consistent && secs < 120.0,
        format!("{violations} violations over {migrations} migrations and {births} births, {secs:.1}s"),
    );
}

#[test]
fn c10_chernoff_birth_counts() {
    let start = Instant::now();
    let runs = 2000;
    let cfg = EvolutionConfig { p: 0.1, horizon: 400, ..EvolutionConfig::default() };
    let births: Vec<usize> = (0..runs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(10, i);
            let x0 = StartSpec::default().build(&mut RunRng::new(seed).phase(0, Phase::Init)).unwrap();
            run_evolution(&x0, &EvolutionConfig { seed, ..cfg.clone() }).unwrap().births()
        })
        .collect();
    let lower = births.iter().filter(|&&b| b >= 20).count() as f64 / runs as f64;
    let upper = births.iter().filter(|&&b| b <= 60).count() as f64 / runs as f64;
    let b_lo = 1.0 - (-5.0f64).exp();
    let b_hi = 1.0 - (-20.0f64 / 3.0).exp();
    let mean = births.iter().sum::<usize>() as f64 / runs as f64;
    let secs = start.elapsed().as_secs_f64();
    report(
        10,
        "chernoff-birth-counts",
        lower >= b_lo - 3.0 * binomial_sigma(b_lo, runs)
            && upper >= b_hi - 3.0 * binomial_sigma(b_hi, runs)
            && secs < 60.0,
        format!(
            "P(>=20) {lower:.4} vs {b_lo:.4}, P(<=60) {upper:.4} vs {b_hi:.4}, mean births {mean:.2}, {secs:.1}s"
        ),
    );
}

#[test]
fn c11_stability_theorem() {
    let start = Instant::now();
    let cfg = EvolutionConfig {
        p: 0.001,
        epsilon: 0.05,
        delta: 0.3,
        beta_min: 0.05,
        beta_max: 0.1,
        influence: lin(0.5),
        horizon: 3000,
        ..EvolutionConfig::default()
    };
    let opts = TheoremOptions { trials: 200, root_seed: 11, ..TheoremOptions::default() };
    let rep = verify_stability_theorem(&cfg, &opts).unwrap();
    let s = &rep.stats;
    let secs = start.elapsed().as_secs_f64();
    report(
        11,
        "stability-theorem",
        rep.threshold == 334.0 && s.verdict == Verdict::Pass && secs < 600.0,
        format!(
            "window >= {}, success {}/{} = {:.3} (wilson {:.3?}) vs bound {:.3}, {secs:.1}s",
            rep.threshold, s.successes, s.trials, s.estimate, s.wilson95, s.paper_bound
        ),
    );
}

#[test]
fn c12_lack_of_explosion() {
    let start = Instant::now();
    let cfg = EvolutionConfig {
        p: 0.5,
        epsilon: 1e-4,
        influence: lin(9e-4),
        horizon: 2715,
        ..EvolutionConfig::default()
    };
    let limit = (72.0 * 1e4f64.ln()).ceil() as usize;
    let starts = [
        ("random", StartSpec::RandomSimplex { types: 5, edge_prob: 0.3 }),
        ("adversarial", StartSpec::EqualMass { types: 50, edge_prob: 0.1 }),
    ];
    let mut ok = limit == 664;
    let mut parts = Vec::new();
    for (k, (name, start_spec)) in starts.iter().enumerate() {
        let opts = TheoremOptions { trials: 50, root_seed: 120 + k as u64, start: *start_spec, ..TheoremOptions::default() };
        let rep = verify_type_bound(&cfg, &opts).unwrap();
        let worst_final = rep.stats.artifacts.iter().map(|t| t.final_types).max().unwrap();
        let worst_any = rep.stats.artifacts.iter().map(|t| t.max_types).max().unwrap();
        ok &= rep.stats.successes == rep.stats.trials
            && worst_final <= limit
            && worst_any <= cfg.type_cap();
        parts.push(format!(
            "{name}: {}/{} within bound, max final types {worst_final}, max types at any step {worst_any}",
            rep.stats.successes, rep.stats.trials
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        12,
        "lack-of-explosion",
        ok && secs < 900.0,
        format!("limit {limit}; {}; {secs:.1}s", parts.join("; ")),
    );
}

fn timeline_bytes(tl: &Timeline) -> Vec<u8> {
    let mut v = Vec::new();
    tl.write_jsonl(&mut v).unwrap();
    serde_json::to_writer(&mut v, &tl.terminal).unwrap();
    v
}

#[test]
fn c13_determinism_across_jobs() {
    let start = Instant::now();
    let cfg = EvolutionConfig { p: 0.3, epsilon: 0.02, delta: 0.02, horizon: 500, ..EvolutionConfig::default() };
    let batch = || -> Vec<Vec<u8>> {
        (0..24u64)
            .into_par_iter()
            .map(|i| {
                let seed = trial_seed(13, i);
                let x0 = StartSpec::default().build(&mut RunRng::new(seed).phase(0, Phase::Init)).unwrap();
                timeline_bytes(&run_evolution(&x0, &EvolutionConfig { seed, ..cfg.clone() }).unwrap())
            })
            .collect()
    };
    let mut by_jobs = BTreeMap::new();
    for jobs in [1, 2, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().unwrap();
        by_jobs.insert(jobs, pool.install(batch));
    }
    let repeat = batch();
    let reference = &by_jobs[&1];
    let identical = by_jobs.values().all(|b| b == reference) && &repeat == reference;
    let distinct = reference.iter().collect::<BTreeSet<_>>().len() == reference.len();
    let secs = start.elapsed().as_secs_f64();
    report(
        13,
        "determinism",
        identical && distinct && secs < 60.0,
        format!(
            "24 timelines ({} bytes) identical across jobs 1/2/8 and a repeat: {identical}, {secs:.1}s",
            reference.iter().map(Vec::len).sum::<usize>()
        ),
    );
}
