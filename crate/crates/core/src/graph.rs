//! The influence graph: an undirected simple graph whose vertices are types.
//!
//! Vertex ids are handed out monotonically and never reused, so every event
//! in a birth/death log refers to exactly one type.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier of a type (vertex). Stable for the lifetime of a run.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct TypeId(pub u64);

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How edges are restored after a vertex removal disconnects the graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewiringPolicy {
    /// Walk the former neighbors in id order and join consecutive ones that
    /// now sit in different components.
    #[default]
    NeighborPath,
    /// Add every missing edge among the former neighbors.
    NeighborClique,
    /// Like `NeighborPath`, but the neighbors are walked in a random order.
    RandomNeighbor,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InfluenceGraph {
    adjacency: BTreeMap<TypeId, BTreeSet<TypeId>>,
    next_id: u64,
}

impl InfluenceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// `n` isolated vertices with ids `0..n`.
    pub fn with_vertices(n: usize) -> Self {
        let mut g = Self::new();
        for _ in 0..n {
            g.add_vertex();
        }
        g
    }

    /// Build a graph on ids `0..n` from an edge list.
    pub fn from_edges(n: usize, edges: &[(u64, u64)]) -> Result<Self> {
        let mut g = Self::with_vertices(n);
        for &(u, v) in edges {
            g.add_edge(TypeId(u), TypeId(v))?;
        }
        Ok(g)
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n as u64).map(|i| (i - 1, i)).collect();
        Self::from_edges(n, &edges).expect("path edges are valid")
    }

    pub fn cycle(n: usize) -> Self {
        let mut g = Self::path(n);
        if n >= 3 {
            g.add_edge(TypeId(0), TypeId(n as u64 - 1))
                .expect("cycle closing edge is valid");
        }
        g
    }

    pub fn complete(n: usize) -> Self {
        let mut edges = Vec::new();
        for u in 0..n as u64 {
            for v in u + 1..n as u64 {
                edges.push((u, v));
            }
        }
        Self::from_edges(n, &edges).expect("complete edges are valid")
    }

    /// Star with center 0 and leaves `1..n`.
    pub fn star(n: usize) -> Self {
        let edges: Vec<_> = (1..n as u64).map(|i| (0, i)).collect();
        Self::from_edges(n, &edges).expect("star edges are valid")
    }

    /// Random connected graph: a random recursive tree plus each remaining
    /// pair independently with probability `extra_edge_prob`.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, extra_edge_prob: f64, rng: &mut R) -> Self {
        let mut g = Self::with_vertices(n);
        for v in 1..n as u64 {
            let u = rng.random_range(0..v);
            g.add_edge(TypeId(u), TypeId(v)).expect("tree edge is valid");
        }
        for u in 0..n as u64 {
            for v in u + 1..n as u64 {
                if !g.has_edge(TypeId(u), TypeId(v)) && rng.random::<f64>() < extra_edge_prob {
                    g.add_edge(TypeId(u), TypeId(v)).expect("extra edge is valid");
                }
            }
        }
        g
    }

    /// Add an isolated vertex. Only pure-dynamics graphs may stay disconnected.
    pub fn add_vertex(&mut self) -> TypeId {
        let id = TypeId(self.next_id);
        self.next_id += 1;
        self.adjacency.insert(id, BTreeSet::new());
        id
    }

    pub fn add_edge(&mut self, u: TypeId, v: TypeId) -> Result<()> {
        self.require(u)?;
        self.require(v)?;
        if u == v {
            return Err(Error::InvalidArgument(format!("self-loop on {u}")));
        }
        self.adjacency.get_mut(&u).unwrap().insert(v);
        self.adjacency.get_mut(&v).unwrap().insert(u);
        Ok(())
    }

    pub fn contains(&self, v: TypeId) -> bool {
        self.adjacency.contains_key(&v)
    }

    fn require(&self, v: TypeId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(Error::UnknownType(v))
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeSet::len).sum::<usize>() / 2
    }

    /// Vertices in increasing id order.
    pub fn vertices(&self) -> impl Iterator<Item = TypeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn neighbors(&self, v: TypeId) -> Result<impl Iterator<Item = TypeId> + '_> {
        self.adjacency
            .get(&v)
            .map(|s| s.iter().copied())
            .ok_or(Error::UnknownType(v))
    }

    pub fn degree(&self, v: TypeId) -> Result<usize> {
        self.adjacency
            .get(&v)
            .map(BTreeSet::len)
            .ok_or(Error::UnknownType(v))
    }

    pub fn has_edge(&self, u: TypeId, v: TypeId) -> bool {
        self.adjacency.get(&u).is_some_and(|s| s.contains(&v))
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (TypeId, TypeId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&u, nbrs)| nbrs.range(u..).map(move |&v| (u, v)))
            .filter(|(u, v)| u != v)
    }

    /// The id the next added vertex will receive.
    pub fn next_id(&self) -> TypeId {
        TypeId(self.next_id)
    }

    /// True iff no edge has both endpoints in `s`.
    pub fn is_independent_set(&self, s: &BTreeSet<TypeId>) -> Result<bool> {
        for &v in s {
            self.require(v)?;
        }
        Ok(s.iter().all(|v| self.adjacency[v].iter().all(|w| !s.contains(w))))
    }

    /// Connected components, each sorted by id, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<TypeId>> {
        self.components_within(&self.adjacency.keys().copied().collect())
    }

    /// Connected components of the subgraph induced by `subset`.
    pub fn components_within(&self, subset: &BTreeSet<TypeId>) -> Vec<Vec<TypeId>> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in subset {
            if !self.contains(start) || !seen.insert(start) {
                continue;
            }
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &w in &self.adjacency[&u] {
                    if subset.contains(&w) && seen.insert(w) {
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().len() <= 1
    }

    /// Attach a new type to `neighbors` and return its fresh id.
    pub fn add_type(&mut self, neighbors: &BTreeSet<TypeId>) -> Result<TypeId> {
        if neighbors.is_empty() {
            return Err(Error::InvalidArgument(
                "a new type needs at least one neighbor".into(),
            ));
        }
        for &u in neighbors {
            self.require(u)?;
        }
        let id = self.add_vertex();
        for &u in neighbors {
            self.add_edge(id, u)?;
        }
        Ok(id)
    }

    /// Remove `v` and, if that disconnects the graph, add edges among its
    /// former neighbors per `policy`. Returns the edges that were added.
    pub fn remove_type<R: Rng + ?Sized>(
        &mut self,
        v: TypeId,
        policy: RewiringPolicy,
        rng: &mut R,
    ) -> Result<Vec<(TypeId, TypeId)>> {
        self.require(v)?;
        if self.vertex_count() < 2 {
            return Err(Error::InvalidState("cannot remove the last type".into()));
        }
        let former: Vec<TypeId> = self.adjacency.remove(&v).unwrap().into_iter().collect();
        for u in &former {
            self.adjacency.get_mut(u).unwrap().remove(&v);
        }

        let mut added = Vec::new();
        if self.is_connected() {
            return Ok(added);
        }

        match policy {
            RewiringPolicy::NeighborClique => {
                for (i, &a) in former.iter().enumerate() {
                    for &b in &former[i + 1..] {
                        if !self.has_edge(a, b) {
                            self.add_edge(a, b)?;
                            added.push(ordered(a, b));
                        }
                    }
                }
            }
            RewiringPolicy::NeighborPath | RewiringPolicy::RandomNeighbor => {
                let mut order = former.clone();
                if policy == RewiringPolicy::RandomNeighbor {
                    order.shuffle(rng);
                }
                let mut labels = ComponentLabels::new(self);
                for pair in order.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    if labels.union(a, b) {
                        self.add_edge(a, b)?;
                        added.push(ordered(a, b));
                    }
                }
            }
        }

        // Bridge whatever is still apart via the lowest ids of each component.
        let comps = self.connected_components();
        for pair in comps.windows(2) {
            let (a, b) = (pair[0][0], pair[1][0]);
            self.add_edge(a, b)?;
            added.push(ordered(a, b));
        }
        Ok(added)
    }
}

fn ordered(a: TypeId, b: TypeId) -> (TypeId, TypeId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Union-find over the current components of a graph.
struct ComponentLabels {
    parent: BTreeMap<TypeId, TypeId>,
}

impl ComponentLabels {
    fn new(g: &InfluenceGraph) -> Self {
        let mut parent = BTreeMap::new();
        for comp in g.connected_components() {
            let root = comp[0];
            for v in comp {
                parent.insert(v, root);
            }
        }
        Self { parent }
    }

    fn find(&mut self, v: TypeId) -> TypeId {
        let mut root = v;
        while self.parent[&root] != root {
            root = self.parent[&root];
        }
        let mut cur = v;
        while cur != root {
            let next = self.parent[&cur];
            self.parent.insert(cur, root);
            cur = next;
        }
        root
    }

    /// Merge the sets of `a` and `b`; false if they were already joined.
    fn union(&mut self, a: TypeId, b: TypeId) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent.insert(ra.max(rb), ra.min(rb));
        true
    }
}

/// JSON form of a graph: `{"vertices":[ids],"edges":[[u,v],...]}` with `u < v`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphLiteral {
    pub vertices: Vec<u64>,
    pub edges: Vec<[u64; 2]>,
}

impl From<&InfluenceGraph> for GraphLiteral {
    fn from(g: &InfluenceGraph) -> Self {
        GraphLiteral {
            vertices: g.vertices().map(|v| v.0).collect(),
            edges: g.edges().map(|(u, v)| [u.0, v.0]).collect(),
        }
    }
}

impl TryFrom<GraphLiteral> for InfluenceGraph {
    type Error = Error;

    fn try_from(lit: GraphLiteral) -> Result<Self> {
        let mut g = InfluenceGraph::new();
        for &v in &lit.vertices {
            if g.adjacency.insert(TypeId(v), BTreeSet::new()).is_some() {
                return Err(Error::config("graph.vertices", format!("duplicate id {v}")));
            }
            g.next_id = g.next_id.max(v + 1);
        }
        for [u, v] in lit.edges {
            g.add_edge(TypeId(u), TypeId(v)).map_err(|e| {
                Error::config("graph.edges", format!("edge [{u},{v}]: {e}"))
            })?;
        }
        Ok(g)
    }
}

impl Serialize for InfluenceGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphLiteral::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for InfluenceGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let lit = GraphLiteral::deserialize(d)?;
        InfluenceGraph::try_from(lit).map_err(serde::de::Error::custom)
    }
}
