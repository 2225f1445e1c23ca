//! Expected (discounted) weights of cycles, chains and matchings under
//! independent edge failures, plus a brute-force optimal-matching oracle for
//! desk-sized graphs.

use crate::error::{Error, Result};
use crate::graph::{
    enumerate_chains, enumerate_cycles, Caps, Chain, Cycle, EdgeId, ExchangeGraph, Matching,
    VertexId,
};

/// Weight and failure probability of one edge, detached from any graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTerm {
    pub weight: f64,
    pub fail_prob: f64,
}

impl EdgeTerm {
    pub fn new(weight: f64, fail_prob: f64) -> Self {
        Self { weight, fail_prob }
    }
}

fn terms(graph: &ExchangeGraph, edges: &[EdgeId]) -> Vec<EdgeTerm> {
    edges
        .iter()
        .map(|&e| {
            let edge = graph.edge(e);
            EdgeTerm::new(edge.weight, edge.fail_prob)
        })
        .collect()
}

/// u(c) = (Σ w_e) · Π (1 − p_e): a cycle pays out only if every edge succeeds.
pub fn cycle_value(edges: &[EdgeTerm]) -> f64 {
    let weight: f64 = edges.iter().map(|t| t.weight).sum();
    let success: f64 = edges.iter().map(|t| 1.0 - t.fail_prob).product();
    weight * success
}

/// Expected chain weight summed over the step at which the chain first fails.
///
/// Position `i` (1-based) failing after `i − 1` successes keeps the weight of
/// the first `i − 1` edges; a failure at position 1 keeps nothing, so the sum
/// starts at `i = 2`. The last term is the fully executed chain.
pub fn chain_value_direct(edges: &[EdgeTerm]) -> f64 {
    let k = edges.len();
    let mut total = 0.0;
    for i in 2..=k {
        let head = &edges[..i - 1];
        let head_weight: f64 = head.iter().map(|t| t.weight).sum();
        let head_success: f64 = head.iter().map(|t| 1.0 - t.fail_prob).product();
        total += edges[i - 1].fail_prob * head_weight * head_success;
    }
    let weight: f64 = edges.iter().map(|t| t.weight).sum();
    let success: f64 = edges.iter().map(|t| 1.0 - t.fail_prob).product();
    total + weight * success
}

/// Expected chain weight as a sum of per-edge discounted weights:
/// Σ_i w_i Π_{j ≤ i} (1 − p_j).
pub fn chain_value_prefix(edges: &[EdgeTerm]) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for t in edges {
        discount *= 1.0 - t.fail_prob;
        total += t.weight * discount;
    }
    total
}

pub fn cycle_discounted_weight(graph: &ExchangeGraph, cycle: &Cycle) -> f64 {
    cycle_value(&terms(graph, &cycle.edges))
}

pub fn chain_discounted_weight_direct(graph: &ExchangeGraph, chain: &Chain) -> f64 {
    chain_value_direct(&terms(graph, &chain.edges))
}

pub fn chain_discounted_weight_prefix(graph: &ExchangeGraph, chain: &Chain) -> f64 {
    chain_value_prefix(&terms(graph, &chain.edges))
}

pub fn matching_expected_weight(graph: &ExchangeGraph, matching: &Matching) -> f64 {
    let cycles: f64 = matching
        .cycles
        .iter()
        .map(|c| cycle_discounted_weight(graph, c))
        .sum();
    let chains: f64 = matching
        .chains
        .iter()
        .map(|c| chain_discounted_weight_prefix(graph, c))
        .sum();
    cycles + chains
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Plain matched weight, ignoring failures.
    Deterministic,
    /// Expected matched weight under independent edge failures.
    Expected,
}

impl Objective {
    pub fn evaluate(self, graph: &ExchangeGraph, matching: &Matching) -> f64 {
        match self {
            Objective::Deterministic => matching.weight(graph),
            Objective::Expected => matching_expected_weight(graph, matching),
        }
    }
}

/// Default cap on the number of feasible matchings the oracle will visit.
pub const DEFAULT_ENUMERATION_LIMIT: usize = 20_000_000;

#[derive(Debug, Clone)]
pub struct EnumeratedOptimum {
    pub matching: Matching,
    pub value: f64,
    /// Number of feasible matchings visited, including the empty one.
    pub visited: usize,
}

enum Structure {
    Cycle(Cycle),
    Chain(Chain),
}

impl Structure {
    fn vertices(&self) -> &[VertexId] {
        match self {
            Structure::Cycle(c) => &c.vertices,
            Structure::Chain(c) => &c.vertices,
        }
    }
}

/// Visits every feasible matching of `graph` under `caps` exactly once.
///
/// Fails with [`Error::ResourceLimit`] once more than `limit` matchings have
/// been visited.
pub fn for_each_matching(
    graph: &ExchangeGraph,
    caps: Caps,
    limit: usize,
    mut visit: impl FnMut(&Matching),
) -> Result<usize> {
    // Every structure is filed under its smallest vertex. Walking vertices in
    // order, an uncovered vertex is either left out or covered by a structure
    // filed under it; structures filed earlier were already decided.
    let n = graph.num_vertices();
    let mut by_min: Vec<Vec<Structure>> = (0..n).map(|_| Vec::new()).collect();
    for c in enumerate_cycles(graph, caps.cycle_cap) {
        let m = *c.vertices.iter().min().expect("cycle has vertices");
        by_min[m].push(Structure::Cycle(c));
    }
    for c in enumerate_chains(graph, caps.chain_cap) {
        let m = *c.vertices.iter().min().expect("chain has vertices");
        by_min[m].push(Structure::Chain(c));
    }
    let mut covered = vec![false; n];
    let mut current = Matching::default();
    let mut visited = 0usize;
    walk(
        &by_min,
        0,
        &mut covered,
        &mut current,
        &mut visited,
        limit,
        &mut visit,
    )?;
    Ok(visited)
}

fn walk(
    by_min: &[Vec<Structure>],
    at: usize,
    covered: &mut [bool],
    current: &mut Matching,
    visited: &mut usize,
    limit: usize,
    visit: &mut impl FnMut(&Matching),
) -> Result<()> {
    let Some(v) = (at..by_min.len()).find(|&v| !covered[v]) else {
        *visited += 1;
        if *visited > limit {
            return Err(Error::ResourceLimit(format!(
                "more than {limit} feasible matchings"
            )));
        }
        visit(current);
        return Ok(());
    };
    walk(by_min, v + 1, covered, current, visited, limit, visit)?;
    for s in &by_min[v] {
        if s.vertices().iter().any(|&u| covered[u]) {
            continue;
        }
        for &u in s.vertices() {
            covered[u] = true;
        }
        match s {
            Structure::Cycle(c) => current.cycles.push(c.clone()),
            Structure::Chain(c) => current.chains.push(c.clone()),
        }
        walk(by_min, v + 1, covered, current, visited, limit, visit)?;
        match s {
            Structure::Cycle(_) => {
                current.cycles.pop();
            }
            Structure::Chain(_) => {
                current.chains.pop();
            }
        }
        for &u in s.vertices() {
            covered[u] = false;
        }
    }
    Ok(())
}

/// Returns true if `(value, edges)` beats `(best_value, best_edges)`: strictly
/// larger value, or a tie broken by the lexicographically smaller sorted
/// edge-id list.
pub fn better_candidate(value: f64, edges: &[EdgeId], best_value: f64, best_edges: &[EdgeId]) -> bool {
    let tol = 1e-9 * value.abs().max(best_value.abs()).max(1.0);
    if value > best_value + tol {
        true
    } else if value < best_value - tol {
        false
    } else {
        edges < best_edges
    }
}

/// Best matching under an arbitrary score, found by visiting every feasible
/// matching.
pub fn best_matching_by(
    graph: &ExchangeGraph,
    caps: Caps,
    limit: usize,
    mut score: impl FnMut(&Matching) -> f64,
) -> Result<EnumeratedOptimum> {
    let mut best: Option<(f64, Vec<EdgeId>, Matching)> = None;
    let visited = for_each_matching(graph, caps, limit, |m| {
        let value = score(m);
        let edges = m.edge_ids();
        let replace = match &best {
            None => true,
            Some((bv, be, _)) => better_candidate(value, &edges, *bv, be),
        };
        if replace {
            best = Some((value, edges, m.clone()));
        }
    })?;
    let (value, _, mut matching) = best.expect("the empty matching is always visited");
    matching.normalize();
    Ok(EnumeratedOptimum {
        matching,
        value,
        visited,
    })
}

/// Optimal matching by exhaustive search. Intended for graphs of about a dozen
/// vertices.
pub fn solve_by_enumeration(
    graph: &ExchangeGraph,
    caps: Caps,
    objective: Objective,
    limit: usize,
) -> Result<EnumeratedOptimum> {
    best_matching_by(graph, caps, limit, |m| objective.evaluate(graph, m))
}
