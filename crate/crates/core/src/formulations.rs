//! Position-indexed chain/edge models: plain KEP, identical-probability
//! KEP-IP and the failure-aware KEP-NP.
//!
//! Chains use one binary `y[e,k]` per edge and legal position, cycles one
//! binary `z[c]` each. KEP-NP adds, per `(e,k)`, the survival level `O[e,k]`
//! (probability the chain is still alive after its `k`-th edge, when `e` is
//! used there) and its cap `o[e,k] ≤ 1 - p_e`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{chain_positions, Caps, Chain, Cycle, EdgeId, ExchangeGraph, Matching, VertexId};
use crate::milp::{ConstraintId, MilpModel, ObjSense, Sense, Solution, SolveStatus, VarId, VarKind};

/// Variable bookkeeping for a position-indexed model.
#[derive(Debug, Clone, Default)]
pub struct PicefHandles {
    pub chain_cap: usize,
    /// `y[e,k]`, keyed by (edge, 1-based position).
    pub y: BTreeMap<(EdgeId, usize), VarId>,
    pub cycles: Vec<Cycle>,
    /// `z[c]`, parallel to `cycles`.
    pub z: Vec<VarId>,
    /// Cycle success probabilities, parallel to `cycles`.
    pub v_const: Vec<f64>,
    /// Survival levels `O[e,k]` (KEP-NP only).
    pub big_o: Option<BTreeMap<(EdgeId, usize), VarId>>,
    /// Discount caps `o[e,k]` (KEP-NP only).
    pub small_o: Option<BTreeMap<(EdgeId, usize), VarId>>,
    /// Capacity row of each vertex, when one was emitted.
    pub capacity_rows: Vec<Option<ConstraintId>>,
}

impl PicefHandles {
    /// Σ_e |𝒦(e)| over the edges that received variables.
    pub fn num_positions(&self) -> usize {
        self.y.len()
    }

    /// `y` variables for edge `e`, ordered by position.
    pub fn positions_of(&self, e: EdgeId) -> impl Iterator<Item = (usize, VarId)> + '_ {
        self.y.range((e, 0)..(e + 1, 0)).map(|(&(_, k), &v)| (k, v))
    }
}

/// Edges whose transplant can never happen. They are dropped from the
/// failure-aware models: they carry no weight and `1/(1-p)` is undefined.
fn certain_failure(graph: &ExchangeGraph, e: EdgeId) -> bool {
    graph.edge(e).fail_prob >= 1.0
}

/// Builds the feasible set shared by every model: vertex capacity, chain
/// flow conservation and one chain per NDD.
///
/// A flow row whose left-hand side would be empty (no edge can reach the
/// vertex at that position) is not emitted; instead the outgoing variables it
/// would constrain get upper bound 0.
pub fn build_picef_base(
    graph: &ExchangeGraph,
    caps: Caps,
    cycles: &[Cycle],
) -> Result<(MilpModel, PicefHandles)> {
    build_base_with(graph, caps, cycles, VarKind::Binary, |_| true)
}

fn build_base_with(
    graph: &ExchangeGraph,
    caps: Caps,
    cycles: &[Cycle],
    kind: VarKind,
    usable: impl Fn(EdgeId) -> bool,
) -> Result<(MilpModel, PicefHandles)> {
    caps.check()?;
    let l = caps.chain_cap;
    let mut model = MilpModel::new(ObjSense::Max);
    let mut h = PicefHandles {
        chain_cap: l,
        capacity_rows: vec![None; graph.num_vertices()],
        ..Default::default()
    };
    // without an NDD no chain can start, so no chain variables at all
    let chains_possible = graph.num_ndds() > 0;
    for e in graph.edges() {
        if !usable(e.id) || !chains_possible {
            continue;
        }
        for k in chain_positions(graph, e.id, l) {
            let v = model.add_var(kind, 0.0, 1.0, format!("y{}_{k}", e.id));
            h.y.insert((e.id, k), v);
        }
    }
    for c in cycles {
        if c.len() > caps.cycle_cap {
            return Err(Error::Model(format!("{c} exceeds cycle cap {}", caps.cycle_cap)));
        }
        if c.edges.iter().any(|&e| !usable(e)) {
            continue;
        }
        let idx = h.cycles.len();
        h.z.push(model.add_var(kind, 0.0, 1.0, format!("z{idx}")));
        h.v_const.push(c.success_prob(graph));
        h.cycles.push(c.clone());
    }

    let mut covering: Vec<Vec<VarId>> = vec![Vec::new(); graph.num_vertices()];
    for (c, &z) in h.cycles.iter().zip(&h.z) {
        for &v in &c.vertices {
            covering[v].push(z);
        }
    }

    for i in graph.pairs() {
        let mut terms: Vec<(VarId, f64)> = Vec::new();
        for &e in graph.in_edges(i) {
            terms.extend(h.positions_of(e).map(|(_, v)| (v, 1.0)));
        }
        terms.extend(covering[i].iter().map(|&z| (z, 1.0)));
        if !terms.is_empty() {
            h.capacity_rows[i] = Some(model.add_constraint(terms, Sense::Le, 1.0, format!("cap{i}")));
        }
    }

    for i in graph.pairs() {
        for k in 1..l {
            let incoming = position_vars(&h, graph.in_edges(i), k);
            let outgoing = position_vars(&h, graph.out_edges(i), k + 1);
            if outgoing.is_empty() {
                continue;
            }
            if incoming.is_empty() {
                for v in outgoing {
                    model.set_bounds(v, 0.0, 0.0);
                }
                continue;
            }
            let terms = incoming
                .into_iter()
                .map(|v| (v, 1.0))
                .chain(outgoing.into_iter().map(|v| (v, -1.0)))
                .collect();
            model.add_constraint(terms, Sense::Ge, 0.0, format!("flow{i}_{k}"));
        }
    }

    for n in graph.ndds() {
        let terms: Vec<(VarId, f64)> = position_vars(&h, graph.out_edges(n), 1)
            .into_iter()
            .map(|v| (v, 1.0))
            .collect();
        if !terms.is_empty() {
            h.capacity_rows[n] = Some(model.add_constraint(terms, Sense::Le, 1.0, format!("ndd{n}")));
        }
    }
    Ok((model, h))
}

fn position_vars(h: &PicefHandles, edges: &[EdgeId], k: usize) -> Vec<VarId> {
    edges.iter().filter_map(|&e| h.y.get(&(e, k)).copied()).collect()
}

/// Deterministic clearing: maximize plain matched weight.
pub fn build_kep(graph: &ExchangeGraph, caps: Caps, cycles: &[Cycle]) -> Result<(MilpModel, PicefHandles)> {
    let (mut model, h) = build_picef_base(graph, caps, cycles)?;
    for (&(e, _), &v) in &h.y {
        model.add_objective_term(v, graph.edge(e).weight);
    }
    for (c, &z) in h.cycles.iter().zip(&h.z) {
        model.add_objective_term(z, c.weight(graph));
    }
    Ok((model, h))
}

/// Failure-aware clearing: maximize expected matched weight exactly, with
/// chain discounts carried by the `O`/`o` levels.
pub fn build_kep_np(graph: &ExchangeGraph, caps: Caps, cycles: &[Cycle]) -> Result<(MilpModel, PicefHandles)> {
    build_kep_np_with(graph, caps, cycles, VarKind::Binary)
}

/// Same model with every binary relaxed to `[0, 1]`.
pub fn build_kep_np_relaxed(
    graph: &ExchangeGraph,
    caps: Caps,
    cycles: &[Cycle],
) -> Result<(MilpModel, PicefHandles)> {
    build_kep_np_with(graph, caps, cycles, VarKind::Continuous)
}

fn build_kep_np_with(
    graph: &ExchangeGraph,
    caps: Caps,
    cycles: &[Cycle],
    kind: VarKind,
) -> Result<(MilpModel, PicefHandles)> {
    let (mut model, mut h) = build_base_with(graph, caps, cycles, kind, |e| !certain_failure(graph, e))?;
    let mut big_o = BTreeMap::new();
    let mut small_o = BTreeMap::new();
    for (&(e, k), &y) in &h.y {
        let edge = graph.edge(e);
        let o_big = model.add_continuous(0.0, 1.0, format!("O{e}_{k}"));
        let o_small = model.add_continuous(0.0, edge.success_prob(), format!("o{e}_{k}"));
        // a y pinned to zero by the base pins its level too
        if model.var(y).upper == 0.0 {
            model.set_bounds(o_big, 0.0, 0.0);
        }
        model.add_objective_term(o_big, edge.weight);
        big_o.insert((e, k), o_big);
        small_o.insert((e, k), o_small);
    }
    for (i, (c, &z)) in h.cycles.iter().zip(&h.z).enumerate() {
        model.add_objective_term(z, c.weight(graph) * h.v_const[i]);
    }

    for i in graph.pairs() {
        for k in 1..caps.chain_cap {
            let incoming: Vec<(VarId, f64)> = graph
                .in_edges(i)
                .iter()
                .filter_map(|&e| big_o.get(&(e, k)).map(|&v| (v, 1.0)))
                .collect();
            let outgoing: Vec<(VarId, f64)> = graph
                .out_edges(i)
                .iter()
                .filter_map(|&e| {
                    big_o
                        .get(&(e, k + 1))
                        .map(|&v| (v, -1.0 / graph.edge(e).success_prob()))
                })
                .collect();
            // empty left-hand sides were turned into bounds above
            if outgoing.is_empty() || incoming.is_empty() {
                continue;
            }
            let terms = incoming.into_iter().chain(outgoing).collect();
            model.add_constraint(terms, Sense::Ge, 0.0, format!("oflow{i}_{k}"));
        }
    }
    for (&(e, k), &y) in &h.y {
        model.add_constraint(vec![(big_o[&(e, k)], 1.0), (y, -1.0)], Sense::Le, 0.0, format!("Oy{e}_{k}"));
    }
    for (&(e, k), &o) in &small_o {
        model.add_constraint(vec![(big_o[&(e, k)], 1.0), (o, -1.0)], Sense::Le, 0.0, format!("Oo{e}_{k}"));
    }
    h.big_o = Some(big_o);
    h.small_o = Some(small_o);
    Ok((model, h))
}

/// KEP-NP on a copy of the graph where every edge fails with `p_uniform`.
pub fn build_kep_ip(
    graph: &ExchangeGraph,
    caps: Caps,
    cycles: &[Cycle],
    p_uniform: f64,
) -> Result<(MilpModel, PicefHandles)> {
    if !(0.0..1.0).contains(&p_uniform) {
        return Err(Error::InvalidConfig(format!(
            "uniform failure probability must lie in [0, 1), got {p_uniform}"
        )));
    }
    let uniform = graph.with_uniform_fail_prob(p_uniform);
    build_kep_np(&uniform, caps, cycles)
}

/// Reads the matching off a solved model.
///
/// Cycles come from `z = 1`; chains are traced from each NDD by following
/// `y[e,k] = 1` through positions 1, 2, .... Every selected `y` must lie on a
/// traced chain.
pub fn extract_matching(
    solution: &Solution,
    handles: &PicefHandles,
    graph: &ExchangeGraph,
    caps: Caps,
) -> Result<Matching> {
    if solution.status == SolveStatus::Infeasible {
        return Err(Error::Solver("model is infeasible".into()));
    }
    let empty_model = handles.y.is_empty() && handles.z.is_empty();
    if !solution.has_values() && !empty_model {
        return Err(Error::Solver(format!("no solution values (status {:?})", solution.status)));
    }
    let tol = 1e-6;
    let pick = |v: VarId| -> Result<bool> {
        let x = solution.value(v);
        if x.abs() <= tol {
            Ok(false)
        } else if (x - 1.0).abs() <= tol {
            Ok(true)
        } else {
            Err(Error::Integrality {
                name: format!("x{}", v.0),
                value: x,
                tolerance: tol,
            })
        }
    };

    let mut matching = Matching::default();
    for (c, &z) in handles.cycles.iter().zip(&handles.z) {
        if pick(z)? {
            matching.cycles.push(c.clone());
        }
    }

    let mut selected: BTreeMap<(EdgeId, usize), bool> = BTreeMap::new();
    for (&key, &v) in &handles.y {
        if pick(v)? {
            selected.insert(key, false);
        }
    }
    for n in graph.ndds() {
        let mut edges = Vec::new();
        let mut at: VertexId = n;
        for k in 1..=handles.chain_cap {
            let next: Vec<EdgeId> = graph
                .out_edges(at)
                .iter()
                .copied()
                .filter(|&e| selected.contains_key(&(e, k)))
                .collect();
            match next.as_slice() {
                [] => break,
                [e] => {
                    selected.insert((*e, k), true);
                    edges.push(*e);
                    at = graph.edge(*e).dst;
                }
                many => {
                    return Err(Error::BrokenChain(format!(
                        "vertex {at} starts {} edges at position {k}",
                        many.len()
                    )))
                }
            }
        }
        if !edges.is_empty() {
            matching.chains.push(Chain::from_edges(graph, &edges)?);
        }
    }
    if let Some((&(e, k), _)) = selected.iter().find(|(_, &used)| !used) {
        return Err(Error::BrokenChain(format!(
            "edge {e} selected at position {k} is not reachable from an NDD"
        )));
    }
    matching.normalize();
    let problems = crate::graph::matching_problems(graph, &matching, caps);
    if !problems.is_empty() {
        return Err(Error::InvalidMatching(problems.join("; ")));
    }
    Ok(matching)
}

/// Upper bound on the row count of a KEP-NP model:
/// `2·L·|V| + 2·L·|E| + |C|`.
pub fn kep_np_row_bound(graph: &ExchangeGraph, caps: Caps, num_cycles: usize) -> usize {
    2 * caps.chain_cap * graph.num_vertices() + 2 * caps.chain_cap * graph.num_edges() + num_cycles
}
