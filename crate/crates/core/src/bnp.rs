//! Branch-and-price for the failure-aware model when the cycle set is too
//! large to enumerate up front.
//!
//! Chains stay position-indexed (polynomially many variables); cycles enter as
//! columns. Each tree node solves the LP relaxation over the active cycles,
//! prices all other cycles against the vertex-capacity duals and repeats until
//! no cycle prices out, then branches on the fractional `y`/`z` nearest 0.5.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expected::matching_expected_weight;
use crate::formulations::{build_kep_np_relaxed, extract_matching, PicefHandles};
use crate::graph::{enumerate_cycles, Caps, Cycle, EdgeId, ExchangeGraph, Matching, VertexId};
use crate::milp::{solve, MilpModel, Solution, SolveStatus, SolverConfig, VarId};

/// Identity of a branching variable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    /// `y[e,k]`.
    Y(EdgeId, usize),
    /// `z[c]`, keyed by the cycle's canonical edge list.
    Z(Vec<EdgeId>),
}

/// Variables pinned by the branching decisions above a node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixedSet {
    assignments: BTreeMap<VarKey, bool>,
}

impl FixedSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pins `key`; fails if it is already pinned.
    pub fn fix(&mut self, key: VarKey, value: bool) -> Result<()> {
        if self.assignments.contains_key(&key) {
            return Err(Error::InvalidConfig(format!("{key:?} fixed twice")));
        }
        self.assignments.insert(key, value);
        Ok(())
    }

    pub fn with(&self, key: VarKey, value: bool) -> Result<Self> {
        let mut next = self.clone();
        next.fix(key, value)?;
        Ok(next)
    }

    pub fn get(&self, key: &VarKey) -> Option<bool> {
        self.assignments.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    fn cycles_fixed_to(&self, value: bool) -> impl Iterator<Item = &Vec<EdgeId>> + '_ {
        self.assignments.iter().filter_map(move |(k, &v)| match k {
            VarKey::Z(edges) if v == value => Some(edges),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingResult {
    pub cycle: Cycle,
    pub price: f64,
}

/// `w_c · Π(1 − p_e) − Σ_{i∈c} λ_i`, with `duals` indexed by vertex.
pub fn cycle_price(graph: &ExchangeGraph, cycle: &Cycle, duals: &[f64]) -> f64 {
    cycle.weight(graph) * cycle.success_prob(graph) - cycle.vertices.iter().map(|&v| duals[v]).sum::<f64>()
}

/// Solved restricted relaxation at one node.
#[derive(Debug, Clone)]
pub struct RelaxedLp {
    pub model: MilpModel,
    pub handles: PicefHandles,
    pub solution: Solution,
    /// Capacity-row duals by vertex (0 where no row exists).
    pub lambda: Vec<f64>,
}

/// LP relaxation of the failure-aware model over `active_cycles`, with the
/// fixings applied as variable bounds.
///
/// A cycle fixed to 1 must be among `active_cycles`. Cycles fixed to 0 may be
/// present and simply get upper bound 0.
pub fn solve_lp_relaxation(
    graph: &ExchangeGraph,
    caps: Caps,
    active_cycles: &[Cycle],
    fixed: &FixedSet,
    config: &SolverConfig,
) -> Result<RelaxedLp> {
    let (mut model, handles) = build_kep_np_relaxed(graph, caps, active_cycles)?;
    let z_of: HashMap<&[EdgeId], VarId> = handles
        .cycles
        .iter()
        .zip(&handles.z)
        .map(|(c, &z)| (c.edges.as_slice(), z))
        .collect();
    let mut infeasible = false;
    for (key, &value) in &fixed.assignments {
        let target = if value { 1.0 } else { 0.0 };
        let var = match key {
            VarKey::Y(e, k) => handles.y.get(&(*e, *k)).copied(),
            VarKey::Z(edges) => z_of.get(edges.as_slice()).copied(),
        };
        match var {
            Some(v) => {
                let def = model.var(v);
                if target < def.lower || target > def.upper {
                    infeasible = true;
                } else {
                    model.set_bounds(v, target, target);
                }
            }
            // an absent variable is implicitly 0
            None if value => infeasible = true,
            None => {}
        }
    }
    if infeasible {
        let solution = Solution {
            status: SolveStatus::Infeasible,
            objective: f64::NAN,
            values: Vec::new(),
            duals: None,
            solve_seconds: 0.0,
        };
        return Ok(RelaxedLp {
            model,
            handles,
            solution,
            lambda: vec![0.0; graph.num_vertices()],
        });
    }
    let solution = solve(&model, config)?;
    let mut lambda = vec![0.0; graph.num_vertices()];
    if let Some(duals) = &solution.duals {
        for (v, row) in handles.capacity_rows.iter().enumerate() {
            if let Some(r) = row {
                lambda[v] = duals[r.0];
            }
        }
    }
    Ok(RelaxedLp {
        model,
        handles,
        solution,
        lambda,
    })
}

/// Cycles of length ≤ `cycle_cap` whose price exceeds `epsilon`, best first,
/// at most `limit` of them.
pub fn find_positive_price_cycles(
    graph: &ExchangeGraph,
    duals: &[f64],
    cycle_cap: usize,
    epsilon: f64,
    limit: usize,
) -> Vec<PricingResult> {
    price_cycles(graph, duals, cycle_cap, epsilon, limit, |_| false)
}

struct PricingSearch<'a, F> {
    graph: &'a ExchangeGraph,
    duals: &'a [f64],
    cap: usize,
    epsilon: f64,
    max_weight: f64,
    min_dual: f64,
    skip: F,
    on_path: Vec<bool>,
    path: Vec<EdgeId>,
    found: Vec<PricingResult>,
}

impl<F: Fn(&[EdgeId]) -> bool> PricingSearch<'_, F> {
    fn dfs(&mut self, root: VertexId, at: VertexId, weight: f64, prob: f64, dual_sum: f64) {
        let graph = self.graph;
        for &e in graph.out_edges(at) {
            let edge = graph.edge(e);
            let next = edge.dst;
            let w = weight + edge.weight;
            let q = prob * edge.success_prob();
            if next == root {
                if !self.path.is_empty() {
                    let price = w * q - dual_sum;
                    self.path.push(e);
                    if price > self.epsilon && !(self.skip)(&self.path) {
                        let vertices = self.path.iter().map(|&pe| graph.edge(pe).src).collect();
                        self.found.push(PricingResult {
                            cycle: Cycle {
                                edges: self.path.clone(),
                                vertices,
                            },
                            price,
                        });
                    }
                    self.path.pop();
                }
                continue;
            }
            if next < root || self.on_path[next] || !graph.is_pair(next) || self.path.len() + 2 > self.cap {
                continue;
            }
            // best completion: every remaining edge at max weight and certain,
            // every remaining vertex at the smallest dual
            let nd = dual_sum + self.duals[next];
            let remaining = (self.cap - self.path.len() - 1) as f64;
            let bound = (w + remaining * self.max_weight) * q - nd - (remaining - 1.0).max(0.0) * self.min_dual;
            if bound <= self.epsilon {
                continue;
            }
            self.on_path[next] = true;
            self.path.push(e);
            self.dfs(root, next, w, q, nd);
            self.path.pop();
            self.on_path[next] = false;
        }
    }
}

fn price_cycles(
    graph: &ExchangeGraph,
    duals: &[f64],
    cycle_cap: usize,
    epsilon: f64,
    limit: usize,
    skip: impl Fn(&[EdgeId]) -> bool,
) -> Vec<PricingResult> {
    let max_weight = graph.edges().iter().map(|e| e.weight).fold(0.0, f64::max);
    let min_dual = duals.iter().copied().fold(0.0, f64::min);
    let mut search = PricingSearch {
        graph,
        duals,
        cap: cycle_cap,
        epsilon,
        max_weight,
        min_dual,
        skip,
        on_path: vec![false; graph.num_vertices()],
        path: Vec::with_capacity(cycle_cap),
        found: Vec::new(),
    };
    for root in graph.pairs() {
        search.on_path[root] = true;
        search.dfs(root, root, 0.0, 1.0, duals[root]);
        search.on_path[root] = false;
    }
    let mut found = search.found;
    found.sort_by(|a, b| b.price.total_cmp(&a.price).then_with(|| a.cycle.edges.cmp(&b.cycle.edges)));
    found.truncate(limit);
    found
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnpConfig {
    pub epsilon: f64,
    pub columns_per_round: usize,
    pub max_nodes: usize,
    pub time_limit_seconds: f64,
}

impl Default for BnpConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            columns_per_round: 50,
            max_nodes: 100_000,
            time_limit_seconds: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnpOutcome {
    pub matching: Matching,
    /// Expected weight of `matching`.
    pub objective: f64,
    /// False when the node or time budget ran out first.
    pub optimal: bool,
    pub nodes: usize,
    pub columns: usize,
    pub solve_seconds: f64,
}

/// Optimal failure-aware matching by branch-and-price.
///
/// Children are explored depth first, the `= 1` branch before `= 0`; nodes
/// whose relaxation cannot beat the incumbent are pruned.
pub fn branch_and_price(graph: &ExchangeGraph, caps: Caps, config: &BnpConfig) -> Result<BnpOutcome> {
    caps.check()?;
    if !(config.epsilon > 0.0) || config.columns_per_round == 0 {
        return Err(Error::InvalidConfig("pricing needs epsilon > 0 and at least one column per round".into()));
    }
    let start = Instant::now();
    let solver = SolverConfig::default();

    let mut active: Vec<Cycle> = enumerate_cycles(graph, 2.min(caps.cycle_cap));
    let mut seen: HashSet<Vec<EdgeId>> = active.iter().map(|c| c.edges.clone()).collect();

    let mut best = Matching::default();
    let mut best_value: f64 = 0.0;
    let mut nodes = 0;
    let mut optimal = true;
    let mut stack = vec![FixedSet::new()];

    while let Some(fixed) = stack.pop() {
        if nodes >= config.max_nodes || start.elapsed().as_secs_f64() > config.time_limit_seconds {
            optimal = false;
            break;
        }
        nodes += 1;

        let lp = loop {
            let lp = solve_lp_relaxation(graph, caps, &active, &fixed, &solver)?;
            if lp.solution.status != SolveStatus::Optimal {
                break lp;
            }
            let excluded: HashSet<&Vec<EdgeId>> = fixed.cycles_fixed_to(false).collect();
            let priced = price_cycles(
                graph,
                &lp.lambda,
                caps.cycle_cap,
                config.epsilon,
                config.columns_per_round,
                |edges| seen.contains(edges) || excluded.contains(&edges.to_vec()),
            );
            if priced.is_empty() {
                break lp;
            }
            for p in priced {
                seen.insert(p.cycle.edges.clone());
                active.push(p.cycle);
            }
        };
        match lp.solution.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => continue,
            SolveStatus::LimitReached => {
                optimal = false;
                continue;
            }
        }
        let bound = lp.solution.objective;
        if bound <= best_value + 1e-7 * best_value.abs().max(1.0) {
            continue;
        }

        match most_fractional(&lp) {
            None => {
                let matching = extract_matching(&lp.solution, &lp.handles, graph, caps)?;
                let value = matching_expected_weight(graph, &matching);
                if value > best_value {
                    best_value = value;
                    best = matching;
                }
            }
            Some(key) => {
                stack.push(fixed.with(key.clone(), false)?);
                stack.push(fixed.with(key, true)?);
            }
        }
    }
    log::debug!("branch-and-price: {nodes} nodes, {} columns", active.len());
    Ok(BnpOutcome {
        matching: best,
        objective: best_value,
        optimal,
        nodes,
        columns: active.len(),
        solve_seconds: start.elapsed().as_secs_f64(),
    })
}

/// The `y`/`z` variable whose value is fractional and closest to 0.5.
fn most_fractional(lp: &RelaxedLp) -> Option<VarKey> {
    let tol = 1e-6;
    let mut best: Option<(f64, VarKey)> = None;
    let mut consider = |x: f64, key: VarKey| {
        if (x - x.round()).abs() <= tol {
            return;
        }
        let dist = (x - 0.5).abs();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, key));
        }
    };
    for (&(e, k), &v) in &lp.handles.y {
        consider(lp.solution.value(v), VarKey::Y(e, k));
    }
    for (c, &z) in lp.handles.cycles.iter().zip(&lp.handles.z) {
        consider(lp.solution.value(z), VarKey::Z(c.edges.clone()));
    }
    best.map(|(_, k)| k)
}
