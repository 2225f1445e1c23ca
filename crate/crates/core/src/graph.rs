//! Exchange graph: patient-donor pairs, non-directed donors (NDDs) and the
//! failure-prone compatibility arcs between them.
//!
//! Vertex and edge ids are dense indices into the owning graph. A graph is
//! immutable once built, so it can be shared read-only across threads.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VertexId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Pair,
    Ndd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub src: VertexId,
    pub dst: VertexId,
    pub weight: f64,
    pub fail_prob: f64,
}

impl Edge {
    /// Probability that the transplant goes ahead.
    pub fn success_prob(&self) -> f64 {
        1.0 - self.fail_prob
    }
}

/// Edge description used when building a graph; ids are assigned in order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSpec {
    pub src: VertexId,
    pub dst: VertexId,
    pub weight: f64,
    pub fail_prob: f64,
}

impl EdgeSpec {
    pub fn new(src: VertexId, dst: VertexId, weight: f64, fail_prob: f64) -> Self {
        Self {
            src,
            dst,
            weight,
            fail_prob,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    in_edges: Vec<Vec<EdgeId>>,
    out_edges: Vec<Vec<EdgeId>>,
}

impl ExchangeGraph {
    /// Builds a graph from vertex kinds (vertex `i` gets id `i`) and edges
    /// (edge `j` gets id `j`).
    ///
    /// Only structural problems that make adjacency impossible (endpoints out
    /// of range) are rejected here; every other invariant is reported by
    /// [`validate_graph`].
    pub fn new(kinds: Vec<VertexKind>, edges: Vec<EdgeSpec>) -> Result<Self> {
        let n = kinds.len();
        let vertices: Vec<Vertex> = kinds
            .into_iter()
            .enumerate()
            .map(|(id, kind)| Vertex { id, kind })
            .collect();
        let mut in_edges = vec![Vec::new(); n];
        let mut out_edges = vec![Vec::new(); n];
        let mut built = Vec::with_capacity(edges.len());
        for (id, spec) in edges.into_iter().enumerate() {
            if spec.src >= n || spec.dst >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {id} ({} -> {}) references a vertex outside 0..{n}",
                    spec.src, spec.dst
                )));
            }
            out_edges[spec.src].push(id);
            in_edges[spec.dst].push(id);
            built.push(Edge {
                id,
                src: spec.src,
                dst: spec.dst,
                weight: spec.weight,
                fail_prob: spec.fail_prob,
            });
        }
        Ok(Self {
            vertices,
            edges: built,
            in_edges,
            out_edges,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex(&self, id: VertexId) -> &Vertex {
        &self.vertices[id]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn kind(&self, id: VertexId) -> VertexKind {
        self.vertices[id].kind
    }

    pub fn is_pair(&self, id: VertexId) -> bool {
        self.vertices[id].kind == VertexKind::Pair
    }

    /// δ⁻(i): edges entering `id`.
    pub fn in_edges(&self, id: VertexId) -> &[EdgeId] {
        &self.in_edges[id]
    }

    /// δ⁺(i): edges leaving `id`.
    pub fn out_edges(&self, id: VertexId) -> &[EdgeId] {
        &self.out_edges[id]
    }

    pub fn pairs(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .iter()
            .filter(|v| v.kind == VertexKind::Pair)
            .map(|v| v.id)
    }

    pub fn ndds(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.vertices
            .iter()
            .filter(|v| v.kind == VertexKind::Ndd)
            .map(|v| v.id)
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs().count()
    }

    pub fn num_ndds(&self) -> usize {
        self.ndds().count()
    }

    pub fn find_edge(&self, src: VertexId, dst: VertexId) -> Option<EdgeId> {
        self.out_edges
            .get(src)?
            .iter()
            .copied()
            .find(|&e| self.edges[e].dst == dst)
    }

    /// Subgraph on the same vertex set keeping edges for which `keep` holds.
    ///
    /// Returns the subgraph and, for each of its edges, the id of the edge it
    /// came from in `self`.
    pub fn filter_edges(&self, mut keep: impl FnMut(&Edge) -> bool) -> (Self, Vec<EdgeId>) {
        let mut origin = Vec::new();
        let mut specs = Vec::new();
        for e in &self.edges {
            if keep(e) {
                origin.push(e.id);
                specs.push(EdgeSpec::new(e.src, e.dst, e.weight, e.fail_prob));
            }
        }
        let kinds = self.vertices.iter().map(|v| v.kind).collect();
        let sub = Self::new(kinds, specs).expect("subgraph of a well-formed graph");
        (sub, origin)
    }

    /// Copy of the graph with every failure probability replaced.
    pub fn with_uniform_fail_prob(&self, p: f64) -> Self {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.fail_prob = p;
        }
        g
    }
}

/// Cycle and chain length limits. Both count edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub cycle_cap: usize,
    pub chain_cap: usize,
}

impl Caps {
    pub fn new(cycle_cap: usize, chain_cap: usize) -> Result<Self> {
        let caps = Self {
            cycle_cap,
            chain_cap,
        };
        caps.check()?;
        Ok(caps)
    }

    pub fn check(&self) -> Result<()> {
        if self.cycle_cap < 2 {
            return Err(Error::InvalidConfig(format!(
                "cycle cap must be at least 2, got {}",
                self.cycle_cap
            )));
        }
        if self.chain_cap < 1 {
            return Err(Error::InvalidConfig(format!(
                "chain cap must be at least 1, got {}",
                self.chain_cap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cycle {
    /// Edges in traversal order, starting with the edge leaving the smallest vertex.
    pub edges: Vec<EdgeId>,
    /// Vertices in traversal order; `vertices[i]` is the source of `edges[i]`.
    pub vertices: Vec<VertexId>,
}

impl Cycle {
    /// Builds a cycle from its edges, rotating it into canonical form.
    pub fn from_edges(graph: &ExchangeGraph, edges: &[EdgeId]) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidMatching(format!(
                "cycle needs at least 2 edges, got {}",
                edges.len()
            )));
        }
        for (i, &e) in edges.iter().enumerate() {
            if e >= graph.num_edges() {
                return Err(Error::InvalidMatching(format!("unknown edge {e}")));
            }
            let next = edges[(i + 1) % edges.len()];
            if next >= graph.num_edges() || graph.edge(e).dst != graph.edge(next).src {
                return Err(Error::InvalidMatching(format!(
                    "cycle edges {e} and {next} are not consecutive"
                )));
            }
        }
        let start = (0..edges.len())
            .min_by_key(|&i| graph.edge(edges[i]).src)
            .unwrap_or(0);
        let edges: Vec<EdgeId> = edges[start..].iter().chain(&edges[..start]).copied().collect();
        let vertices = edges.iter().map(|&e| graph.edge(e).src).collect();
        Ok(Self { edges, vertices })
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// w_c: the undiscounted sum of edge weights.
    pub fn weight(&self, graph: &ExchangeGraph) -> f64 {
        self.edges.iter().map(|&e| graph.edge(e).weight).sum()
    }

    /// v_c: probability that every edge of the cycle succeeds.
    pub fn success_prob(&self, graph: &ExchangeGraph) -> f64 {
        self.edges.iter().map(|&e| graph.edge(e).success_prob()).product()
    }

    pub fn contains_vertex(&self, v: VertexId) -> bool {
        self.vertices.contains(&v)
    }
}

impl fmt::Display for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vs: Vec<String> = self.vertices.iter().map(|v| v.to_string()).collect();
        write!(f, "cycle({})", vs.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chain {
    /// Edges in chain order; position `k` (1-based) is `edges[k - 1]`.
    pub edges: Vec<EdgeId>,
    /// `edges.len() + 1` vertices, beginning with the NDD.
    pub vertices: Vec<VertexId>,
}

impl Chain {
    pub fn from_edges(graph: &ExchangeGraph, edges: &[EdgeId]) -> Result<Self> {
        let first = *edges
            .first()
            .ok_or_else(|| Error::InvalidMatching("chain with no edges".into()))?;
        if first >= graph.num_edges() {
            return Err(Error::InvalidMatching(format!("unknown edge {first}")));
        }
        let mut vertices = vec![graph.edge(first).src];
        for (i, &e) in edges.iter().enumerate() {
            if e >= graph.num_edges() {
                return Err(Error::InvalidMatching(format!("unknown edge {e}")));
            }
            let edge = graph.edge(e);
            if i > 0 && edge.src != *vertices.last().unwrap() {
                return Err(Error::InvalidMatching(format!(
                    "chain edge {e} does not continue from vertex {}",
                    vertices.last().unwrap()
                )));
            }
            vertices.push(edge.dst);
        }
        Ok(Self {
            edges: edges.to_vec(),
            vertices,
        })
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn weight(&self, graph: &ExchangeGraph) -> f64 {
        self.edges.iter().map(|&e| graph.edge(e).weight).sum()
    }

    pub fn ndd(&self) -> VertexId {
        self.vertices[0]
    }
}

impl fmt::Display for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vs: Vec<String> = self.vertices.iter().map(|v| v.to_string()).collect();
        write!(f, "chain({})", vs.join(","))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    pub cycles: Vec<Cycle>,
    pub chains: Vec<Chain>,
}

impl Matching {
    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty() && self.chains.is_empty()
    }

    /// Undiscounted weight: every selected edge counts in full.
    pub fn weight(&self, graph: &ExchangeGraph) -> f64 {
        self.cycles.iter().map(|c| c.weight(graph)).sum::<f64>()
            + self.chains.iter().map(|c| c.weight(graph)).sum::<f64>()
    }

    /// All edges used by the matching, sorted by id.
    pub fn edge_ids(&self) -> Vec<EdgeId> {
        let mut ids: Vec<EdgeId> = self
            .cycles
            .iter()
            .flat_map(|c| c.edges.iter())
            .chain(self.chains.iter().flat_map(|c| c.edges.iter()))
            .copied()
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Sorts cycles and chains so that equal matchings compare equal.
    pub fn normalize(&mut self) {
        self.cycles.sort_by(|a, b| a.edges.cmp(&b.edges));
        self.chains.sort_by(|a, b| a.edges.cmp(&b.edges));
    }
}

impl fmt::Display for Matching {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .cycles
            .iter()
            .map(|c| c.to_string())
            .chain(self.chains.iter().map(|c| c.to_string()))
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SelfLoop { edge: EdgeId },
    EdgeIntoNdd { edge: EdgeId, ndd: VertexId },
    DuplicateEdge { edge: EdgeId, first: EdgeId },
    BadWeight { edge: EdgeId },
    BadFailProb { edge: EdgeId },
    VertexIdMismatch { position: usize, id: VertexId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SelfLoop { edge } => write!(f, "edge {edge} is a self-loop"),
            Violation::EdgeIntoNdd { edge, ndd } => {
                write!(f, "edge {edge} enters non-directed donor {ndd}")
            }
            Violation::DuplicateEdge { edge, first } => {
                write!(f, "edge {edge} duplicates edge {first}")
            }
            Violation::BadWeight { edge } => {
                write!(f, "edge {edge} has a non-positive or non-finite weight")
            }
            Violation::BadFailProb { edge } => {
                write!(f, "edge {edge} has a failure probability outside [0, 1]")
            }
            Violation::VertexIdMismatch { position, id } => {
                write!(f, "vertex at position {position} has id {id}")
            }
        }
    }
}

/// Lists every broken graph invariant. An empty list means the graph is valid.
pub fn validate_graph(graph: &ExchangeGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    for (position, v) in graph.vertices.iter().enumerate() {
        if v.id != position {
            out.push(Violation::VertexIdMismatch { position, id: v.id });
        }
    }
    let mut seen = std::collections::HashMap::new();
    for e in &graph.edges {
        if e.src == e.dst {
            out.push(Violation::SelfLoop { edge: e.id });
        }
        if graph.kind(e.dst) == VertexKind::Ndd {
            out.push(Violation::EdgeIntoNdd {
                edge: e.id,
                ndd: e.dst,
            });
        }
        if let Some(&first) = seen.get(&(e.src, e.dst)) {
            out.push(Violation::DuplicateEdge { edge: e.id, first });
        } else {
            seen.insert((e.src, e.dst), e.id);
        }
        if !(e.weight.is_finite() && e.weight > 0.0) {
            out.push(Violation::BadWeight { edge: e.id });
        }
        if !(0.0..=1.0).contains(&e.fail_prob) {
            out.push(Violation::BadFailProb { edge: e.id });
        }
    }
    out
}

/// All simple directed cycles over Pair vertices with 2..=`cycle_cap` edges.
///
/// Depth-first search from each Pair root, only stepping to vertices with a
/// larger id than the root, so every cycle is produced once, already rotated
/// to start at its smallest vertex.
pub fn enumerate_cycles(graph: &ExchangeGraph, cycle_cap: usize) -> Vec<Cycle> {
    let mut cycles = Vec::new();
    let mut on_path = vec![false; graph.num_vertices()];
    let mut path_edges = Vec::with_capacity(cycle_cap);
    for root in graph.pairs() {
        on_path[root] = true;
        cycle_dfs(
            graph,
            root,
            root,
            cycle_cap,
            &mut on_path,
            &mut path_edges,
            &mut cycles,
        );
        on_path[root] = false;
    }
    cycles
}

fn cycle_dfs(
    graph: &ExchangeGraph,
    root: VertexId,
    at: VertexId,
    cap: usize,
    on_path: &mut [bool],
    path_edges: &mut Vec<EdgeId>,
    out: &mut Vec<Cycle>,
) {
    for &e in graph.out_edges(at) {
        let next = graph.edge(e).dst;
        if next == root {
            if !path_edges.is_empty() {
                path_edges.push(e);
                let vertices = path_edges.iter().map(|&pe| graph.edge(pe).src).collect();
                out.push(Cycle {
                    edges: path_edges.clone(),
                    vertices,
                });
                path_edges.pop();
            }
            continue;
        }
        // path_edges.len() + 1 edges so far including e; need one more to close
        if next < root || on_path[next] || !graph.is_pair(next) || path_edges.len() + 2 > cap {
            continue;
        }
        on_path[next] = true;
        path_edges.push(e);
        cycle_dfs(graph, root, next, cap, on_path, path_edges, out);
        path_edges.pop();
        on_path[next] = false;
    }
}

/// All chains with 1..=`chain_cap` edges, starting at any NDD.
pub fn enumerate_chains(graph: &ExchangeGraph, chain_cap: usize) -> Vec<Chain> {
    let mut chains = Vec::new();
    let mut on_path = vec![false; graph.num_vertices()];
    let mut path = Vec::with_capacity(chain_cap);
    for ndd in graph.ndds() {
        on_path[ndd] = true;
        chain_dfs(graph, ndd, ndd, chain_cap, &mut on_path, &mut path, &mut chains);
        on_path[ndd] = false;
    }
    chains
}

fn chain_dfs(
    graph: &ExchangeGraph,
    ndd: VertexId,
    at: VertexId,
    cap: usize,
    on_path: &mut [bool],
    path: &mut Vec<EdgeId>,
    out: &mut Vec<Chain>,
) {
    if path.len() == cap {
        return;
    }
    for &e in graph.out_edges(at) {
        let next = graph.edge(e).dst;
        if on_path[next] || !graph.is_pair(next) {
            continue;
        }
        path.push(e);
        on_path[next] = true;
        let mut vertices = vec![ndd];
        vertices.extend(path.iter().map(|&pe| graph.edge(pe).dst));
        out.push(Chain {
            edges: path.clone(),
            vertices,
        });
        chain_dfs(graph, ndd, next, cap, on_path, path, out);
        on_path[next] = false;
        path.pop();
    }
}

/// 𝒦(e): chain positions (1-based) edge `e` may occupy under chain cap `chain_cap`.
pub fn chain_positions(graph: &ExchangeGraph, edge: EdgeId, chain_cap: usize) -> Vec<usize> {
    match graph.kind(graph.edge(edge).src) {
        VertexKind::Ndd if chain_cap >= 1 => vec![1],
        VertexKind::Ndd => Vec::new(),
        VertexKind::Pair => (2..=chain_cap).collect(),
    }
}

/// True iff the matching is a valid set of vertex-disjoint cycles and chains
/// under `caps`.
pub fn is_feasible_matching(graph: &ExchangeGraph, matching: &Matching, caps: Caps) -> bool {
    matching_problems(graph, matching, caps).is_empty()
}

/// Human-readable reasons a matching is infeasible; empty iff feasible.
pub fn matching_problems(graph: &ExchangeGraph, matching: &Matching, caps: Caps) -> Vec<String> {
    let mut problems = Vec::new();
    let mut used: HashSet<VertexId> = HashSet::new();
    let mut claim = |v: VertexId, what: &dyn fmt::Display, problems: &mut Vec<String>| {
        if !used.insert(v) {
            problems.push(format!("vertex {v} reused by {what}"));
        }
    };
    for c in &matching.cycles {
        if c.edges.len() < 2 || c.edges.len() > caps.cycle_cap {
            problems.push(format!("{c} has {} edges (cap {})", c.len(), caps.cycle_cap));
        }
        if c.edges.iter().any(|&e| e >= graph.num_edges()) || c.vertices.len() != c.edges.len() {
            problems.push(format!("{c} is malformed"));
            continue;
        }
        for (i, &e) in c.edges.iter().enumerate() {
            let edge = graph.edge(e);
            let next = graph.edge(c.edges[(i + 1) % c.len()]);
            if edge.dst != next.src || edge.src != c.vertices[i] {
                problems.push(format!("{c} is not a closed walk"));
                break;
            }
        }
        for &v in &c.vertices {
            if !graph.is_pair(v) {
                problems.push(format!("{c} visits non-directed donor {v}"));
            }
            claim(v, c, &mut problems);
        }
    }
    for ch in &matching.chains {
        if ch.edges.is_empty() || ch.edges.len() > caps.chain_cap {
            problems.push(format!("{ch} has {} edges (cap {})", ch.len(), caps.chain_cap));
        }
        if ch.edges.iter().any(|&e| e >= graph.num_edges())
            || ch.vertices.len() != ch.edges.len() + 1
        {
            problems.push(format!("{ch} is malformed"));
            continue;
        }
        for (i, &e) in ch.edges.iter().enumerate() {
            let edge = graph.edge(e);
            if edge.src != ch.vertices[i] || edge.dst != ch.vertices[i + 1] {
                problems.push(format!("{ch} is not a path"));
                break;
            }
        }
        if graph.kind(ch.vertices[0]) != VertexKind::Ndd {
            problems.push(format!("{ch} does not start at a non-directed donor"));
        }
        for &v in &ch.vertices[1..] {
            if !graph.is_pair(v) {
                problems.push(format!("{ch} passes through non-directed donor {v}"));
            }
        }
        for &v in &ch.vertices {
            claim(v, ch, &mut problems);
        }
    }
    problems
}
