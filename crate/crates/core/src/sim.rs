//! Realization-based evaluation of clearing policies.
//!
//! Each method is solved once per graph; its matching is then scored against
//! a shared set of simulated edge realizations and compared with the
//! omniscient matching (the best matching once failures are known).

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bnp::{branch_and_price, BnpConfig};
use crate::cvar::{build_cvar_saa, cvar_of_samples, realized_weight, sample_realizations, sample_realizations_with, CvarParams, Realization};
use crate::error::{Error, Result};
use crate::expected::matching_expected_weight;
use crate::formulations::{build_kep, build_kep_ip, build_kep_np, extract_matching};
use crate::gen::{generate_instance, GenConfig, GenMode, WeightDist};
use crate::graph::{enumerate_cycles, Caps, ExchangeGraph, Matching};
use crate::milp::{solve, Solution, SolveStatus, SolverConfig};
use crate::rng::{child_seed, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Kep,
    KepIp(f64),
    KepNp,
    Cvar(CvarParams),
    Bnp,
}

impl Method {
    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Kep => f.write_str("KEP"),
            Method::KepIp(p) => write!(f, "KEP-IP({p})"),
            Method::KepNp => f.write_str("KEP-NP"),
            Method::Cvar(_) => f.write_str("CVAR"),
            Method::Bnp => f.write_str("BNP"),
        }
    }
}

/// Parses `kep`, `kep-ip`, `kep-ip(0.3)`, `kep-np`, `cvar` or `bnp`
/// (case-insensitive) with default parameters.
impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "kep" => Ok(Method::Kep),
            "kep-ip" => Ok(Method::KepIp(0.5)),
            "kep-np" => Ok(Method::KepNp),
            "cvar" => Ok(Method::Cvar(CvarParams::default())),
            "bnp" => Ok(Method::Bnp),
            other => other
                .strip_prefix("kep-ip(")
                .and_then(|rest| rest.strip_suffix(')'))
                .and_then(|p| p.parse::<f64>().ok())
                .map(Method::KepIp)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}"))),
        }
    }
}

/// A method's matching and how it was obtained.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub matching: Matching,
    /// The model's own objective at the returned matching. For CVaR this is
    /// the weight convention `μ + γ·μ_α`; the loss is in `objective_loss`.
    pub objective: f64,
    pub objective_loss: Option<f64>,
    pub status: SolveStatus,
    pub solve_seconds: f64,
}

fn finish(
    sol: &Solution,
    handles: &crate::formulations::PicefHandles,
    graph: &ExchangeGraph,
    caps: Caps,
) -> Result<Matching> {
    match sol.status {
        SolveStatus::Infeasible => Err(Error::Solver("model reported infeasible".into())),
        SolveStatus::LimitReached if !sol.has_values() => {
            Err(Error::ResourceLimit("time limit reached before any incumbent".into()))
        }
        _ => extract_matching(sol, handles, graph, caps),
    }
}

/// Builds and solves the model for `method`. `solve_seconds` covers the
/// solver call (or the whole tree search for branch-and-price).
pub fn solve_method(graph: &ExchangeGraph, caps: Caps, method: &Method, config: &SolverConfig) -> Result<MethodOutcome> {
    caps.check()?;
    let build_and_solve = |model_and_handles: (crate::milp::MilpModel, crate::formulations::PicefHandles)| -> Result<MethodOutcome> {
        let (model, handles) = model_and_handles;
        let sol = solve(&model, config)?;
        let matching = finish(&sol, &handles, graph, caps)?;
        Ok(MethodOutcome {
            matching,
            objective: sol.objective,
            objective_loss: None,
            status: sol.status,
            solve_seconds: sol.solve_seconds,
        })
    };
    match method {
        Method::Kep => build_and_solve(build_kep(graph, caps, &enumerate_cycles(graph, caps.cycle_cap))?),
        Method::KepNp => build_and_solve(build_kep_np(graph, caps, &enumerate_cycles(graph, caps.cycle_cap))?),
        Method::KepIp(p) => build_and_solve(build_kep_ip(graph, caps, &enumerate_cycles(graph, caps.cycle_cap), *p)?),
        Method::Cvar(params) => {
            params.check()?;
            let reals = sample_realizations(graph, params.num_samples, params.seed);
            let cycles = enumerate_cycles(graph, caps.cycle_cap);
            let (model, handles) = build_cvar_saa(graph, caps, &cycles, &reals, params)?;
            let sol = solve(&model, config)?;
            let matching = finish(&sol, &handles.base, graph, caps)?;
            Ok(MethodOutcome {
                matching,
                objective: -sol.objective,
                objective_loss: Some(sol.objective),
                status: sol.status,
                solve_seconds: sol.solve_seconds,
            })
        }
        Method::Bnp => {
            let cfg = BnpConfig {
                time_limit_seconds: config.time_limit_seconds,
                ..BnpConfig::default()
            };
            let out = branch_and_price(graph, caps, &cfg)?;
            Ok(MethodOutcome {
                objective: matching_expected_weight(graph, &out.matching),
                matching: out.matching,
                objective_loss: None,
                status: if out.optimal {
                    SolveStatus::Optimal
                } else {
                    SolveStatus::LimitReached
                },
                solve_seconds: out.solve_seconds,
            })
        }
    }
}

/// Best plain weight achievable once `realization` is known: deterministic
/// clearing on the surviving edges.
pub fn omniscient_weight(graph: &ExchangeGraph, realization: &Realization, caps: Caps, config: &SolverConfig) -> Result<f64> {
    let (sub, _) = graph.filter_edges(|e| realization.exists[e.id]);
    if sub.num_edges() == 0 {
        return Ok(0.0);
    }
    let cycles = enumerate_cycles(&sub, caps.cycle_cap);
    let (model, handles) = build_kep(&sub, caps, &cycles)?;
    let sol = solve(&model, config)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!("omniscient solve ended with {:?}", sol.status)));
    }
    Ok(extract_matching(&sol, &handles, &sub, caps)?.weight(&sub))
}

/// `100 · w_method / w_opt`, with 100 when both are zero.
pub fn pct_opt(w_method: f64, w_opt: f64) -> f64 {
    if w_opt == 0.0 {
        100.0
    } else {
        100.0 * w_method / w_opt
    }
}

/// `100 · (μ_method − μ_kep) / μ_kep`; undefined for a zero baseline.
pub fn delta_alpha(mu_method: f64, mu_kep: f64) -> Result<f64> {
    if mu_kep == 0.0 {
        return Err(Error::UndefinedBaseline("baseline α-mean is 0".into()));
    }
    Ok(100.0 * (mu_method - mu_kep) / mu_kep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub num_graphs: usize,
    pub graph_size: usize,
    pub num_realizations: usize,
    pub caps: Caps,
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Arc model for generated graphs.
    pub gen_mode: GenMode,
    /// Tail fraction for the α-worst-case means.
    pub report_alpha: f64,
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    /// 64- or 128-node protocol: unit weights, p ~ U[0.1, 0.9], M = 3, L = 4,
    /// 200 realizations, all four policies.
    pub fn paper(num_graphs: usize, graph_size: usize, seed: u64) -> Self {
        Self {
            num_graphs,
            graph_size,
            num_realizations: 200,
            caps: Caps {
                cycle_cap: 3,
                chain_cap: 4,
            },
            methods: vec![
                Method::Kep,
                Method::KepIp(0.5),
                Method::KepNp,
                Method::Cvar(CvarParams::default()),
            ],
            seed,
            gen_mode: GenMode::Density(crate::gen::DEFAULT_DENSITY),
            report_alpha: 0.5,
            solver: SolverConfig::default(),
        }
    }

    pub fn check(&self) -> Result<()> {
        self.caps.check()?;
        if self.num_graphs == 0 || self.graph_size < 2 || self.num_realizations == 0 || self.methods.is_empty() {
            return Err(Error::InvalidConfig(
                "need at least one graph of two or more vertices, one realization and one method".into(),
            ));
        }
        if !(self.report_alpha > 0.0 && self.report_alpha <= 1.0) {
            return Err(Error::InvalidConfig("report alpha must lie in (0, 1]".into()));
        }
        self.solver.check()
    }

    fn gen_config(&self, graph_seed: u64) -> GenConfig {
        GenConfig {
            mode: self.gen_mode,
            weight_dist: WeightDist::Unit,
            ..GenConfig::with_size(self.graph_size, graph_seed)
        }
    }
}

/// One method on one graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRun {
    pub method: String,
    /// Realized weight per realization, or the failure message.
    pub realized: std::result::Result<Vec<f64>, String>,
    pub solve_seconds: Option<f64>,
    pub expected_weight: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphRun {
    pub graph: usize,
    pub seed: u64,
    pub num_vertices: usize,
    pub num_edges: usize,
    pub omniscient: std::result::Result<Vec<f64>, String>,
    pub runs: Vec<MethodRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub methods: Vec<String>,
    pub report_alpha: f64,
    pub graphs: Vec<GraphRun>,
}

const EVAL_STREAM: u64 = 1;
const SAA_STREAM: u64 = 2;

/// Runs the full protocol. Graphs are processed in parallel; every random
/// stream is derived from `config.seed` by graph index, so results do not
/// depend on scheduling. Each graph's evaluation realizations are shared by
/// all methods, and CVaR's own samples come from a separate stream.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.check()?;
    let graphs = (0..config.num_graphs)
        .into_par_iter()
        .map(|g| run_graph(config, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult {
        methods: config.methods.iter().map(Method::name).collect(),
        report_alpha: config.report_alpha,
        graphs,
    })
}

fn run_graph(config: &ExperimentConfig, g: usize) -> Result<GraphRun> {
    let seed = child_seed(config.seed, g as u64);
    let graph = generate_instance(&config.gen_config(seed))?;
    let mut rng = stream_rng(seed, EVAL_STREAM);
    let reals = sample_realizations_with(&graph, config.num_realizations, &mut rng);
    let started = Instant::now();
    let omniscient = reals
        .iter()
        .map(|r| omniscient_weight(&graph, r, config.caps, &config.solver))
        .collect::<Result<Vec<f64>>>()
        .map_err(|e| e.to_string());
    log::info!(
        "graph {g}: {} edges, omniscient solves took {:.1}s",
        graph.num_edges(),
        started.elapsed().as_secs_f64()
    );
    let runs = config
        .methods
        .iter()
        .map(|method| {
            let method = match method {
                Method::Cvar(p) => Method::Cvar(CvarParams {
                    seed: child_seed(seed ^ p.seed, SAA_STREAM),
                    ..*p
                }),
                m => *m,
            };
            match solve_method(&graph, config.caps, &method, &config.solver) {
                Ok(out) => MethodRun {
                    method: method.name(),
                    realized: Ok(reals.iter().map(|r| realized_weight(&graph, &out.matching, r)).collect()),
                    solve_seconds: Some(out.solve_seconds),
                    expected_weight: Some(matching_expected_weight(&graph, &out.matching)),
                },
                Err(e) => MethodRun {
                    method: method.name(),
                    realized: Err(e.to_string()),
                    solve_seconds: None,
                    expected_weight: None,
                },
            }
        })
        .collect();
    Ok(GraphRun {
        graph: g,
        seed,
        num_vertices: graph.num_vertices(),
        num_edges: graph.num_edges(),
        omniscient,
        runs,
    })
}

impl ExperimentResult {
    fn method_index(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    /// %OPT of every (graph, realization) cell for `method`.
    pub fn pct_opt_cells(&self, method: &str) -> Vec<f64> {
        let Some(m) = self.method_index(method) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for g in &self.graphs {
            if let (Ok(opt), Ok(real)) = (&g.omniscient, &g.runs[m].realized) {
                out.extend(real.iter().zip(opt).map(|(&w, &o)| pct_opt(w, o)));
            }
        }
        out
    }

    /// α-worst-case mean realized weight per graph (None for failed cells).
    pub fn alpha_means(&self, method: &str) -> Vec<Option<f64>> {
        let Some(m) = self.method_index(method) else {
            return Vec::new();
        };
        self.graphs
            .iter()
            .map(|g| {
                g.runs[m]
                    .realized
                    .as_ref()
                    .ok()
                    .and_then(|r| cvar_of_samples(r, self.report_alpha).ok())
            })
            .collect()
    }

    /// Δα% per graph of `method` against `baseline` (None where undefined).
    pub fn delta_alpha_cells(&self, method: &str, baseline: &str) -> Vec<Option<f64>> {
        self.alpha_means(method)
            .into_iter()
            .zip(self.alpha_means(baseline))
            .map(|(m, b)| match (m, b) {
                (Some(m), Some(b)) => delta_alpha(m, b).ok(),
                _ => None,
            })
            .collect()
    }

    pub fn solve_times(&self, method: &str) -> Vec<f64> {
        let Some(m) = self.method_index(method) else {
            return Vec::new();
        };
        self.graphs.iter().filter_map(|g| g.runs[m].solve_seconds).collect()
    }

    /// One row per (graph, method, realization).
    pub fn write_cells_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["graph", "method", "realization", "realized_weight", "omniscient_weight", "pct_opt", "status"])?;
        for g in &self.graphs {
            for run in &g.runs {
                match (&run.realized, &g.omniscient) {
                    (Ok(real), Ok(opt)) => {
                        for (r, (&w_m, &w_o)) in real.iter().zip(opt).enumerate() {
                            w.write_record([
                                g.graph.to_string(),
                                run.method.clone(),
                                r.to_string(),
                                w_m.to_string(),
                                w_o.to_string(),
                                pct_opt(w_m, w_o).to_string(),
                                "ok".into(),
                            ])?;
                        }
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        w.write_record([
                            g.graph.to_string(),
                            run.method.clone(),
                            String::new(),
                            String::new(),
                            String::new(),
                            String::new(),
                            format!("failed: {e}"),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// One row per (graph, method): medians, α-mean, Δα% against KEP, timing.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "graph",
            "method",
            "num_edges",
            "expected_weight",
            "mean_realized",
            "median_pct_opt",
            "alpha_mean",
            "delta_alpha_pct",
            "solve_seconds",
            "status",
        ])?;
        let opt_str = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let kep = self.method_index("KEP");
        for g in &self.graphs {
            let kep_alpha = kep.and_then(|k| g.runs[k].realized.as_ref().ok()).and_then(|r| cvar_of_samples(r, self.report_alpha).ok());
            for run in &g.runs {
                let (mean, median, alpha_mean, status) = match (&run.realized, &g.omniscient) {
                    (Ok(real), Ok(opt)) => {
                        let pcts: Vec<f64> = real.iter().zip(opt).map(|(&a, &b)| pct_opt(a, b)).collect();
                        (
                            Some(real.iter().sum::<f64>() / real.len() as f64),
                            Some(BoxStats::from_values(&pcts).median),
                            cvar_of_samples(real, self.report_alpha).ok(),
                            "ok".to_string(),
                        )
                    }
                    (Err(e), _) | (_, Err(e)) => (None, None, None, format!("failed: {e}")),
                };
                let delta = match (alpha_mean, kep_alpha) {
                    (Some(m), Some(b)) => delta_alpha(m, b).ok(),
                    _ => None,
                };
                w.write_record([
                    g.graph.to_string(),
                    run.method.clone(),
                    g.num_edges.to_string(),
                    opt_str(run.expected_weight),
                    opt_str(mean),
                    opt_str(median),
                    opt_str(alpha_mean),
                    opt_str(delta),
                    opt_str(run.solve_seconds),
                    status,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Solve time of every (graph, method).
    pub fn write_timing_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["graph", "method", "solve_seconds"])?;
        for g in &self.graphs {
            for run in &g.runs {
                let t = run.solve_seconds.map(|t| t.to_string()).unwrap_or_default();
                w.write_record([g.graph.to_string(), run.method.clone(), t])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Box-plot statistics per method for %OPT (over all cells), Δα% against
    /// KEP (over graphs) and solve time (over graphs).
    pub fn boxplot_summary(&self) -> serde_json::Value {
        let mut methods = serde_json::Map::new();
        for m in &self.methods {
            let deltas: Vec<f64> = self.delta_alpha_cells(m, "KEP").into_iter().flatten().collect();
            let entry = serde_json::json!({
                "pct_opt": BoxStats::from_values(&self.pct_opt_cells(m)),
                "delta_alpha_pct": BoxStats::from_values(&deltas),
                "solve_seconds": BoxStats::from_values(&self.solve_times(m)),
            });
            methods.insert(m.clone(), entry);
        }
        serde_json::json!({
            "report_alpha": self.report_alpha,
            "num_graphs": self.graphs.len(),
            "whisker_rule": "1.5 IQR",
            "methods": methods,
        })
    }
}

/// Tukey box-plot statistics: quartiles by linear interpolation, whiskers at
/// the most extreme points within 1.5·IQR of the box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub mean: f64,
}

impl BoxStats {
    pub fn from_values(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                count: 0,
                min: f64::NAN,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
                max: f64::NAN,
                whisker_low: f64::NAN,
                whisker_high: f64::NAN,
                mean: f64::NAN,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        let (q1, median, q3) = (q(0.25), q(0.5), q(0.75));
        let iqr = q3 - q1;
        let lo_fence = q1 - 1.5 * iqr;
        let hi_fence = q3 + 1.5 * iqr;
        Self {
            count: v.len(),
            min: v[0],
            q1,
            median,
            q3,
            max: v[v.len() - 1],
            whisker_low: v.iter().copied().find(|&x| x >= lo_fence).unwrap_or(v[0]),
            whisker_high: v.iter().rev().copied().find(|&x| x <= hi_fence).unwrap_or(v[v.len() - 1]),
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

/// Median of a sample (NaN when empty).
pub fn median(values: &[f64]) -> f64 {
    BoxStats::from_values(values).median
}
