//! Mean-risk clearing: expected weight plus a CVaR tail term, solved by
//! sample average approximation over sampled edge realizations.
//!
//! The model works in losses (negative weights) and minimizes
//!
//! ```text
//! (1/N) Σ_n L_n + γ · (d + 1/(αN) Σ_n Π_n),   Π_n ≥ L_n − d,  Π_n ≥ 0
//! ```
//!
//! where `L_n` is minus the weight the matching realizes in sample `n`.
//! Negating the optimum gives the weight-side objective `μ + γ·μ_α`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formulations::{build_picef_base, PicefHandles};
use crate::graph::{Caps, Cycle, EdgeId, ExchangeGraph, Matching};
use crate::milp::{MilpModel, ObjSense, Sense, Solution, VarId};

/// One joint draw of edge existence; `exists[e]` is true when edge `e`
/// would go ahead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Realization {
    pub exists: Vec<bool>,
}

impl Realization {
    pub fn all_exist(num_edges: usize) -> Self {
        Self {
            exists: vec![true; num_edges],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvarParams {
    pub gamma: f64,
    pub alpha: f64,
    pub num_samples: usize,
    pub seed: u64,
}

impl Default for CvarParams {
    fn default() -> Self {
        Self {
            gamma: 10.0,
            alpha: 0.5,
            num_samples: 10,
            seed: 0,
        }
    }
}

impl CvarParams {
    pub fn check(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if self.num_samples == 0 {
            return Err(Error::InvalidConfig("need at least one sample".into()));
        }
        Ok(())
    }
}

/// `num_samples` realizations from a generator seeded with `seed`.
pub fn sample_realizations(graph: &ExchangeGraph, num_samples: usize, seed: u64) -> Vec<Realization> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_realizations_with(graph, num_samples, &mut rng)
}

/// Realizations drawn from a caller-supplied generator. Edge `e` exists with
/// probability `1 - p_e`.
pub fn sample_realizations_with<R: Rng>(graph: &ExchangeGraph, num_samples: usize, rng: &mut R) -> Vec<Realization> {
    (0..num_samples)
        .map(|_| Realization {
            exists: graph
                .edges()
                .iter()
                .map(|e| rng.random::<f64>() < e.success_prob())
                .collect(),
        })
        .collect()
}

/// Weight a matching actually delivers under `realization`: a cycle pays
/// only if every edge exists, a chain pays for its longest existing prefix.
pub fn realized_weight(graph: &ExchangeGraph, matching: &Matching, realization: &Realization) -> f64 {
    let mut total = 0.0;
    for c in &matching.cycles {
        if c.edges.iter().all(|&e| realization.exists[e]) {
            total += c.weight(graph);
        }
    }
    for ch in &matching.chains {
        for &e in &ch.edges {
            if !realization.exists[e] {
                break;
            }
            total += graph.edge(e).weight;
        }
    }
    total
}

fn tail_count(n: usize, alpha: f64) -> usize {
    ((alpha * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Mean of the ⌈αN⌉ smallest values (weights: small is bad).
pub fn cvar_of_samples(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("no samples".into()));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let n = values.len();
    let k = tail_count(n, alpha);
    if k == n {
        return Ok(values.iter().sum::<f64>() / n as f64);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// `min_d d + 1/(αN) Σ (L_n − d)⁺` over the sample losses. The minimum of
/// this piecewise-linear function is attained at one of the losses, so those
/// are the only candidates tried.
pub fn rockafellar_uryasev(losses: &[f64], alpha: f64) -> f64 {
    let scale = 1.0 / (alpha * losses.len() as f64);
    losses
        .iter()
        .map(|&d| d + scale * losses.iter().map(|&l| (l - d).max(0.0)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// The SAA objective (loss convention) of a fixed matching.
pub fn saa_objective(graph: &ExchangeGraph, matching: &Matching, realizations: &[Realization], params: &CvarParams) -> f64 {
    let losses: Vec<f64> = realizations
        .iter()
        .map(|r| -realized_weight(graph, matching, r))
        .collect();
    let mean = losses.iter().sum::<f64>() / losses.len() as f64;
    mean + params.gamma * rockafellar_uryasev(&losses, params.alpha)
}

/// Variable bookkeeping for the SAA model.
#[derive(Debug, Clone)]
pub struct SaaHandles {
    pub base: PicefHandles,
    /// Per-sample survival levels `O[e,k,n]`.
    pub big_o: Vec<BTreeMap<(EdgeId, usize), VarId>>,
    /// Per-sample gated caps `o[e,k,n] ≤ r[e,n]`.
    pub small_o: Vec<BTreeMap<(EdgeId, usize), VarId>>,
    /// Per-sample cycle validity `v[c,n]`, parallel to `base.cycles`.
    pub v: Vec<Vec<f64>>,
    /// Tail excess `Π_n`.
    pub pi: Vec<VarId>,
    /// Value-at-risk level `d` (free).
    pub d: VarId,
    pub params: CvarParams,
}

impl SaaHandles {
    /// Weight realized in each sample at `solution`: Σ w_e O[e,k,n] + Σ w_c v[c,n] z_c.
    pub fn sample_weights(&self, graph: &ExchangeGraph, solution: &Solution) -> Vec<f64> {
        (0..self.big_o.len())
            .map(|n| {
                let chains: f64 = self.big_o[n]
                    .iter()
                    .map(|(&(e, _), &v)| graph.edge(e).weight * solution.value(v))
                    .sum();
                let cycles: f64 = self
                    .base
                    .cycles
                    .iter()
                    .zip(&self.base.z)
                    .enumerate()
                    .map(|(c, (cycle, &z))| cycle.weight(graph) * self.v[n][c] * solution.value(z))
                    .sum();
                chains + cycles
            })
            .collect()
    }

    /// The tail term `d + 1/(αN) Σ Π_n` at `solution` (loss convention).
    pub fn cvar_term(&self, solution: &Solution) -> f64 {
        let n = self.pi.len() as f64;
        solution.value(self.d) + self.pi.iter().map(|&p| solution.value(p)).sum::<f64>() / (self.params.alpha * n)
    }
}

/// Builds the SAA model over the given realizations. The model minimizes
/// loss; see the module docs.
pub fn build_cvar_saa(
    graph: &ExchangeGraph,
    caps: Caps,
    cycles: &[Cycle],
    realizations: &[Realization],
    params: &CvarParams,
) -> Result<(MilpModel, SaaHandles)> {
    params.check()?;
    if realizations.is_empty() {
        return Err(Error::InvalidConfig("SAA needs at least one realization".into()));
    }
    if let Some(r) = realizations.iter().find(|r| r.exists.len() != graph.num_edges()) {
        return Err(Error::InvalidConfig(format!(
            "realization covers {} edges, graph has {}",
            r.exists.len(),
            graph.num_edges()
        )));
    }
    let (mut model, base) = build_picef_base(graph, caps, cycles)?;
    model.sense = ObjSense::Min;
    let n_samples = realizations.len() as f64;
    let mean_coef = 1.0 / n_samples;
    let tail_coef = params.gamma / (params.alpha * n_samples);

    let d = model.add_continuous(f64::NEG_INFINITY, f64::INFINITY, "d");
    model.add_objective_term(d, params.gamma);

    let cycle_weights: Vec<f64> = base.cycles.iter().map(|c| c.weight(graph)).collect();
    let mut handles = SaaHandles {
        base,
        big_o: Vec::with_capacity(realizations.len()),
        small_o: Vec::with_capacity(realizations.len()),
        v: Vec::with_capacity(realizations.len()),
        pi: Vec::with_capacity(realizations.len()),
        d,
        params: *params,
    };

    for (n, r) in realizations.iter().enumerate() {
        let mut big_o = BTreeMap::new();
        let mut small_o = BTreeMap::new();
        // weight realized in this sample, as linear terms
        let mut weight_terms: Vec<(VarId, f64)> = Vec::new();
        for (&(e, k), &y) in &handles.base.y {
            let gate = if r.exists[e] { 1.0 } else { 0.0 };
            let ob = model.add_continuous(0.0, 1.0, format!("O{e}_{k}_{n}"));
            let os = model.add_continuous(0.0, gate, format!("o{e}_{k}_{n}"));
            if model.var(y).upper == 0.0 {
                model.set_bounds(ob, 0.0, 0.0);
            }
            model.add_constraint(vec![(ob, 1.0), (y, -1.0)], Sense::Le, 0.0, format!("Oy{e}_{k}_{n}"));
            model.add_constraint(vec![(ob, 1.0), (os, -1.0)], Sense::Le, 0.0, format!("Oo{e}_{k}_{n}"));
            weight_terms.push((ob, graph.edge(e).weight));
            big_o.insert((e, k), ob);
            small_o.insert((e, k), os);
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
                    .filter_map(|&e| big_o.get(&(e, k + 1)).map(|&v| (v, -1.0)))
                    .collect();
                if incoming.is_empty() || outgoing.is_empty() {
                    continue;
                }
                let terms = incoming.into_iter().chain(outgoing).collect();
                model.add_constraint(terms, Sense::Ge, 0.0, format!("oflow{i}_{k}_{n}"));
            }
        }
        let v_n: Vec<f64> = handles
            .base
            .cycles
            .iter()
            .map(|c| if c.edges.iter().all(|&e| r.exists[e]) { 1.0 } else { 0.0 })
            .collect();
        for (c, &z) in handles.base.z.iter().enumerate() {
            if v_n[c] > 0.0 {
                weight_terms.push((z, cycle_weights[c]));
            }
        }

        // mean term: loss = −weight
        for &(v, w) in &weight_terms {
            model.add_objective_term(v, -w * mean_coef);
        }
        let pi = model.add_continuous(0.0, f64::INFINITY, format!("Pi{n}"));
        model.add_objective_term(pi, tail_coef);
        // Π_n ≥ −weight_n − d  ⇔  Π_n + weight_n + d ≥ 0
        let mut row = weight_terms;
        row.push((pi, 1.0));
        row.push((d, 1.0));
        model.add_constraint(row, Sense::Ge, 0.0, format!("tail{n}"));

        handles.big_o.push(big_o);
        handles.small_o.push(small_o);
        handles.v.push(v_n);
        handles.pi.push(pi);
    }
    Ok((model, handles))
}
