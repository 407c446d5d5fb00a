//! Influence functions `F_uv` and their per-edge assignment.
//!
//! Flow along an edge is `x_u * x_v * F_uv(x_u - x_v)`. An admissible `F` is
//! odd, non-decreasing, continuously differentiable and bounded by 1 in
//! absolute value on `[-1, 1]`. A bound strictly below 1/2 is what makes the
//! update map a local diffeomorphism.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{InfluenceGraph, TypeId};

/// Grid used for derivative bounds of families without a closed form.
pub const DEFAULT_ALPHA_GRID: usize = 10_001;

const ODD_TOL: f64 = 1e-12;
const MONOTONE_TOL: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum InfluenceFunction {
    /// `a * x`
    Linear { a: f64 },
    /// `a * x^3`
    Cubic { a: f64 },
    /// `a * x / (1 + |x|)`
    ScaledOddSmooth { a: f64 },
    /// Values on a uniform grid over `[-1, 1]`, linearly interpolated.
    CustomSampled { values: Vec<f64> },
}

impl InfluenceFunction {
    /// Sample an arbitrary function onto a `CustomSampled` grid of `points` nodes.
    pub fn sampled(points: usize, f: impl Fn(f64) -> f64) -> Self {
        let values = grid(points).map(f).collect();
        InfluenceFunction::CustomSampled { values }
    }

    pub fn family(&self) -> &'static str {
        match self {
            InfluenceFunction::Linear { .. } => "linear",
            InfluenceFunction::Cubic { .. } => "cubic",
            InfluenceFunction::ScaledOddSmooth { .. } => "scaled-odd-smooth",
            InfluenceFunction::CustomSampled { .. } => "custom-sampled",
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.value(x))
    }

    pub fn eval_deriv(&self, x: f64) -> Result<f64> {
        check_domain(x)?;
        Ok(self.derivative(x))
    }

    /// Unchecked evaluation; callers guarantee `x` lies in `[-1, 1]`.
    #[inline]
    pub(crate) fn value(&self, x: f64) -> f64 {
        match *self {
            InfluenceFunction::Linear { a } => a * x,
            InfluenceFunction::Cubic { a } => a * x * x * x,
            InfluenceFunction::ScaledOddSmooth { a } => a * x / (1.0 + x.abs()),
            InfluenceFunction::CustomSampled { ref values } => {
                let (i, t) = locate(values.len(), x);
                if t == 0.0 {
                    values[i]
                } else {
                    values[i] + t * (values[i + 1] - values[i])
                }
            }
        }
    }

    #[inline]
    pub(crate) fn derivative(&self, x: f64) -> f64 {
        match *self {
            InfluenceFunction::Linear { a } => a,
            InfluenceFunction::Cubic { a } => 3.0 * a * x * x,
            InfluenceFunction::ScaledOddSmooth { a } => {
                let d = 1.0 + x.abs();
                a / (d * d)
            }
            InfluenceFunction::CustomSampled { ref values } => {
                let n = values.len();
                let h = 2.0 / (n - 1) as f64;
                let (i, t) = locate(n, x);
                let slope = |j: usize| (values[j + 1] - values[j]) / h;
                if i + 1 >= n {
                    slope(n - 2)
                } else if t == 0.0 && i > 0 {
                    0.5 * (slope(i - 1) + slope(i))
                } else {
                    slope(i)
                }
            }
        }
    }

    /// `sup |F|` on `[-1, 1]`: closed form for built-in families.
    pub fn sup_abs(&self) -> f64 {
        match *self {
            InfluenceFunction::Linear { a } | InfluenceFunction::Cubic { a } => a.abs(),
            InfluenceFunction::ScaledOddSmooth { a } => a.abs() / 2.0,
            InfluenceFunction::CustomSampled { ref values } => {
                values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }
        }
    }

    /// `(min F', max F')` over `[-1, 1]`.
    pub fn derivative_bounds(&self, grid_size: usize) -> (f64, f64) {
        match *self {
            InfluenceFunction::Linear { a } => (a, a),
            InfluenceFunction::Cubic { a } => (0.0_f64.min(3.0 * a), 0.0_f64.max(3.0 * a)),
            InfluenceFunction::ScaledOddSmooth { a } => {
                let (lo, hi) = (a / 4.0, a);
                (lo.min(hi), lo.max(hi))
            }
            InfluenceFunction::CustomSampled { .. } => grid(grid_size.max(3))
                .map(|x| self.derivative(x))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
                    (lo.min(d), hi.max(d))
                }),
        }
    }

    /// Grid check of the admissibility axioms.
    pub fn validate(&self, grid_size: usize) -> AdmissibilityReport {
        let m = grid_size.max(3);
        let xs: Vec<f64> = grid(m).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| self.value(x)).collect();
        let mut failures = Vec::new();

        let f0 = self.value(0.0);
        let zero_at_origin = f0 == 0.0;
        if !zero_at_origin {
            failures.push(format!("F(0) = {f0}, expected 0"));
        }

        let odd = xs
            .iter()
            .zip(&fs)
            .all(|(&x, &f)| (self.value(-x) + f).abs() <= ODD_TOL * f.abs().max(1.0));
        if !odd {
            failures.push("F is not odd on the grid".into());
        }

        let monotone = fs.windows(2).all(|w| w[1] >= w[0] - MONOTONE_TOL);
        if !monotone {
            failures.push("F decreases somewhere on the grid".into());
        }

        let derivative_nonnegative = xs.iter().all(|&x| self.derivative(x) >= -MONOTONE_TOL);
        if !derivative_nonnegative {
            failures.push("F' < 0 somewhere on the grid".into());
        }

        let sup_abs = fs.iter().fold(0.0_f64, |m, f| m.max(f.abs()));
        let admissible = zero_at_origin && odd && monotone && derivative_nonnegative;
        let bound = if !admissible || sup_abs > 1.0 {
            SupBound::Inadmissible
        } else if sup_abs < 0.5 {
            SupBound::BelowHalf
        } else {
            SupBound::WithinUnit
        };
        if sup_abs > 1.0 {
            failures.push(format!("sup|F| = {sup_abs} exceeds 1"));
        }

        AdmissibilityReport {
            family: self.family().to_string(),
            zero_at_origin,
            odd,
            monotone,
            derivative_nonnegative,
            sup_abs,
            bound,
            failures,
        }
    }
}

impl fmt::Display for InfluenceFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InfluenceFunction::Linear { a } => write!(f, "linear:{a}"),
            InfluenceFunction::Cubic { a } => write!(f, "cubic:{a}"),
            InfluenceFunction::ScaledOddSmooth { a } => write!(f, "smooth:{a}"),
            InfluenceFunction::CustomSampled { values } => {
                write!(f, "custom-sampled[{} points]", values.len())
            }
        }
    }
}

/// Parses the shorthand `family:a`, e.g. `linear:0.49`, `cubic:0.4`, `smooth:0.8`.
impl FromStr for InfluenceFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("influence", format!("expected `family:a`, got `{s}`"));
        let (family, a) = s.split_once(':').ok_or_else(bad)?;
        let a: f64 = a.trim().parse().map_err(|_| bad())?;
        match family.trim() {
            "linear" => Ok(InfluenceFunction::Linear { a }),
            "cubic" => Ok(InfluenceFunction::Cubic { a }),
            "smooth" | "scaled-odd-smooth" => Ok(InfluenceFunction::ScaledOddSmooth { a }),
            _ => Err(bad()),
        }
    }
}

fn check_domain(x: f64) -> Result<()> {
    if (-1.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain { x })
    }
}

/// Uniform grid of `m` points over `[-1, 1]`, endpoints included.
fn grid(m: usize) -> impl Iterator<Item = f64> {
    let h = 2.0 / (m - 1) as f64;
    (0..m).map(move |i| {
        if i == m - 1 {
            1.0
        } else {
            -1.0 + i as f64 * h
        }
    })
}

/// Segment index and fractional offset of `x` on an `n`-node uniform grid.
fn locate(n: usize, x: f64) -> (usize, f64) {
    let pos = (x + 1.0) * (n - 1) as f64 / 2.0;
    let i = (pos.floor() as usize).min(n - 1);
    (i, pos - i as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupBound {
    /// `sup|F| < 1/2`: the update map is a local diffeomorphism.
    BelowHalf,
    /// `1/2 <= sup|F| <= 1`: the map is well defined on the simplex only.
    WithinUnit,
    Inadmissible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub family: String,
    pub zero_at_origin: bool,
    pub odd: bool,
    pub monotone: bool,
    pub derivative_nonnegative: bool,
    pub sup_abs: f64,
    pub bound: SupBound,
    pub failures: Vec<String>,
}

impl AdmissibilityReport {
    pub fn simplex_admissible(&self) -> bool {
        self.bound != SupBound::Inadmissible
    }

    pub fn diffeomorphism_admissible(&self) -> bool {
        self.bound == SupBound::BelowHalf
    }
}

/// One influence function per unordered edge, with a shared default.
#[derive(Clone, Debug, PartialEq)]
pub struct InfluenceAssignment {
    default: InfluenceFunction,
    overrides: BTreeMap<(TypeId, TypeId), InfluenceFunction>,
}

fn key(u: TypeId, v: TypeId) -> (TypeId, TypeId) {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

impl InfluenceAssignment {
    pub fn uniform(f: InfluenceFunction) -> Self {
        Self {
            default: f,
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_edge(mut self, u: TypeId, v: TypeId, f: InfluenceFunction) -> Self {
        self.overrides.insert(key(u, v), f);
        self
    }

    pub fn default_function(&self) -> &InfluenceFunction {
        &self.default
    }

    /// The function on edge `uv` (same as on `vu`).
    pub fn get(&self, u: TypeId, v: TypeId) -> &InfluenceFunction {
        self.overrides.get(&key(u, v)).unwrap_or(&self.default)
    }

    /// The default and every per-edge override.
    pub fn functions(&self) -> impl Iterator<Item = &InfluenceFunction> {
        std::iter::once(&self.default).chain(self.overrides.values())
    }

    /// Largest `sup|F|` over every function the assignment can hand out.
    pub fn sup_abs(&self) -> f64 {
        self.functions().map(InfluenceFunction::sup_abs).fold(0.0, f64::max)
    }

    /// `(alpha_min, alpha_max)` over every function in the assignment,
    /// including the default that newborn edges receive.
    pub fn alpha_bounds(&self) -> (f64, f64) {
        self.alpha_bounds_with_grid(DEFAULT_ALPHA_GRID)
    }

    pub fn alpha_bounds_with_grid(&self, grid_size: usize) -> (f64, f64) {
        fold_bounds(self.functions().map(|f| f.derivative_bounds(grid_size)))
    }

    /// `(alpha_min, alpha_max)` over the edges of `g` only.
    pub fn alpha_bounds_on(&self, g: &InfluenceGraph) -> (f64, f64) {
        if g.edge_count() == 0 {
            return self.default.derivative_bounds(DEFAULT_ALPHA_GRID);
        }
        fold_bounds(
            g.edges()
                .map(|(u, v)| self.get(u, v).derivative_bounds(DEFAULT_ALPHA_GRID)),
        )
    }

    /// Validate every function; the first failing report, if any, is returned
    /// as a configuration error.
    pub fn check_simplex_admissible(&self, grid_size: usize) -> Result<()> {
        for f in self.functions() {
            let report = f.validate(grid_size);
            if !report.simplex_admissible() {
                return Err(Error::config(
                    "influence",
                    format!("{f} is inadmissible: {}", report.failures.join("; ")),
                ));
            }
        }
        Ok(())
    }
}

fn fold_bounds(it: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
        (lo.min(a), hi.max(b))
    })
}

#[derive(Serialize, Deserialize)]
struct EdgeEntry {
    edge: [u64; 2],
    #[serde(flatten)]
    function: InfluenceFunction,
}

#[derive(Serialize, Deserialize)]
struct AssignmentRepr {
    default: InfluenceFunction,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    edges: Vec<EdgeEntry>,
}

impl Serialize for InfluenceAssignment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        AssignmentRepr {
            default: self.default.clone(),
            edges: self
                .overrides
                .iter()
                .map(|(&(u, v), f)| EdgeEntry {
                    edge: [u.0, v.0],
                    function: f.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

/// Accepts either a bare function (`{"family":"linear","a":0.5}`), used for
/// every edge, or `{"default": {...}, "edges": [{"edge":[u,v], ...}]}`.
impl<'de> Deserialize<'de> for InfluenceAssignment {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Either {
            Full(AssignmentRepr),
            Single(InfluenceFunction),
        }
        Ok(match Either::deserialize(d)? {
            Either::Single(f) => InfluenceAssignment::uniform(f),
            Either::Full(repr) => {
                let mut a = InfluenceAssignment::uniform(repr.default);
                for e in repr.edges {
                    a = a.with_edge(TypeId(e.edge[0]), TypeId(e.edge[1]), e.function);
                }
                a
            }
        })
    }
}
