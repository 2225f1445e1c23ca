//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochkep_core::bnp::{branch_and_price, BnpConfig};
use stochkep_core::cvar::{
    build_cvar_saa, cvar_of_samples, realized_weight, sample_realizations, saa_objective, CvarParams, Realization,
};
use stochkep_core::expected::{
    best_matching_by, chain_value_direct, chain_value_prefix, for_each_matching, solve_by_enumeration, EdgeTerm,
    Objective, DEFAULT_ENUMERATION_LIMIT,
};
use stochkep_core::fixtures::*;
use stochkep_core::formulations::{build_kep_np, kep_np_row_bound};
use stochkep_core::gen::{generate_instance, GenConfig};
use stochkep_core::graph::{chain_positions, enumerate_cycles, Caps, EdgeSpec, ExchangeGraph, Matching, VertexKind};
use stochkep_core::milp::{model_stats, solve, MilpModel, Sense, SolveStatus, SolverConfig, VarKind};
use stochkep_core::sim::{median, run_experiment, solve_method, ExperimentConfig, Method};

type Check = Result<String, String>;

fn caps(m: usize, l: usize) -> Caps {
    Caps::new(m, l).unwrap()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_graph(rng: &mut ChaCha8Rng, pairs: usize, ndds: usize, density: f64, p: impl Fn(&mut ChaCha8Rng) -> f64) -> ExchangeGraph {
    let mut kinds = vec![VertexKind::Ndd; ndds];
    kinds.extend(vec![VertexKind::Pair; pairs]);
    let mut edges = Vec::new();
    for s in 0..kinds.len() {
        for d in ndds..kinds.len() {
            if s != d && rng.random_bool(density) {
                let w = rng.random_range(1..=10) as f64;
                let fail = p(rng);
                edges.push(EdgeSpec::new(s, d, w, fail));
            }
        }
    }
    ExchangeGraph::new(kinds, edges).unwrap()
}

fn small_graph(rng: &mut ChaCha8Rng, max_vertices: usize) -> ExchangeGraph {
    let n = rng.random_range(3..=max_vertices);
    let ndds = rng.random_range(0..=2.min(n - 2));
    let density = rng.random_range(0.2..0.5);
    random_graph(rng, n - ndds, ndds, density, |r| r.random_range(0.0..0.9))
}

fn kep_np_optimum(graph: &ExchangeGraph, c: Caps) -> Result<(f64, Matching), String> {
    let out = solve_method(graph, c, &Method::KepNp, &SolverConfig::default()).map_err(|e| e.to_string())?;
    Ok((out.objective, out.matching))
}

fn lemma_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let chains: Vec<Vec<EdgeTerm>> = (0..10_000)
        .map(|_| {
            let len = rng.random_range(1..=6);
            (0..len)
                .map(|_| EdgeTerm::new(rng.random_range(0.0..10.0), rng.random_range(0.0..=1.0)))
                .collect()
        })
        .collect();
    let started = Instant::now();
    let mut worst = 0.0f64;
    for c in &chains {
        let (a, b) = (chain_value_direct(c), chain_value_prefix(c));
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(worst <= 1e-12, || format!("max relative gap {worst:e}"))?;
    ensure(secs < 1.0, || format!("took {secs:.3}s"))?;
    Ok(format!("10000 chains, max relative gap {worst:.1e}, {secs:.3}s"))
}

fn oracle_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let started = Instant::now();
    for i in 0..100 {
        let g = small_graph(&mut rng, 10);
        let c = caps(3, [2, 3, 4][i % 3]);
        let (obj, m) = kep_np_optimum(&g, c)?;
        let oracle = solve_by_enumeration(&g, c, Objective::Expected, DEFAULT_ENUMERATION_LIMIT).map_err(|e| e.to_string())?;
        ensure(rel_close(obj, oracle.value, 1e-6), || format!("instance {i}: MILP {obj} vs oracle {}", oracle.value))?;
        let achieved = stochkep_core::expected::matching_expected_weight(&g, &m);
        ensure(rel_close(achieved, oracle.value, 1e-6), || format!("instance {i}: matching worth {achieved}"))?;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("100 instances, {secs:.1}s"))
}

fn degenerate_reductions() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = SolverConfig::default();
    for i in 0..50 {
        let g = small_graph(&mut rng, 12).with_uniform_fail_prob(0.0);
        let c = caps(3, 3);
        let kep = solve_method(&g, c, &Method::Kep, &config).map_err(|e| e.to_string())?;
        let np = solve_method(&g, c, &Method::KepNp, &config).map_err(|e| e.to_string())?;
        let (a, b) = (kep.matching.weight(&g), np.matching.weight(&g));
        ensure(a == b, || format!("p=0 instance {i}: KEP {a} vs KEP-NP {b}"))?;
    }
    for i in 0..50 {
        let pc = rng.random_range(0.05..0.95);
        let base = small_graph(&mut rng, 12);
        let g = base.with_uniform_fail_prob(pc);
        let c = caps(3, 3);
        let np = solve_method(&g, c, &Method::KepNp, &config).map_err(|e| e.to_string())?;
        let ip = solve_method(&base, c, &Method::KepIp(pc), &config).map_err(|e| e.to_string())?;
        ensure((np.objective - ip.objective).abs() <= 1e-9 * np.objective.abs().max(1.0), || {
            format!("p={pc} instance {i}: KEP-NP {} vs KEP-IP {}", np.objective, ip.objective)
        })?;
    }
    Ok("50 instances at p=0, 50 at uniform p".into())
}

fn figure1_fixture() -> Check {
    let g = figure1();
    let c = caps(3, 2);
    let config = SolverConfig::default();
    let kep = solve_method(&g, c, &Method::Kep, &config).map_err(|e| e.to_string())?;
    ensure(kep.matching.cycles.len() == 1 && kep.matching.cycles[0].vertices == [1, 2], || {
        format!("KEP chose {}", kep.matching)
    })?;
    let np = solve_method(&g, c, &Method::KepNp, &config).map_err(|e| e.to_string())?;
    ensure(np.matching.cycles.len() == 1 && np.matching.cycles[0].vertices == [1, 3], || {
        format!("KEP-NP chose {}", np.matching)
    })?;
    ensure((np.objective - 5.67).abs() <= 1e-9, || format!("KEP-NP objective {}", np.objective))?;

    let params = CvarParams {
        gamma: 10.0,
        alpha: 0.1,
        num_samples: 200,
        seed: 0,
    };
    let reals = sample_realizations(&g, params.num_samples, params.seed);
    let cycles = enumerate_cycles(&g, c.cycle_cap);
    let (model, h) = build_cvar_saa(&g, c, &cycles, &reals, &params).map_err(|e| e.to_string())?;
    let sol = solve(&model, &config).map_err(|e| e.to_string())?;
    let m = stochkep_core::formulations::extract_matching(&sol, &h.base, &g, c).map_err(|e| e.to_string())?;
    ensure(m.chains.len() == 1 && m.chains[0].edges[0] == FIG1_E5, || format!("CVaR chose {m}"))?;
    let brute = best_matching_by(&g, c, DEFAULT_ENUMERATION_LIMIT, |m| -saa_objective(&g, m, &reals, &params))
        .map_err(|e| e.to_string())?;
    ensure(rel_close(sol.objective, -brute.value, 1e-6), || {
        format!("SAA MILP loss {} vs brute force {}", sol.objective, -brute.value)
    })?;
    ensure(rel_close(saa_objective(&g, &m, &reals, &params), -brute.value, 1e-6), || {
        "CVaR matching is not a brute-force minimizer".into()
    })?;
    Ok(format!("KEP (1,2), KEP-NP (1,3) = {:.2}, CVaR {m}", np.objective))
}

/// A row as `{var name → coef}`, `sense`, `rhs`, scaled so that the
/// first-named variable has coefficient ±1 and turned into `≤` form.
fn canonical_row(names: &[(String, f64)], sense: Sense, rhs: f64) -> (Vec<(String, i64)>, char, i64) {
    let mut terms: BTreeMap<String, f64> = BTreeMap::new();
    for (n, c) in names {
        *terms.entry(n.clone()).or_default() += c;
    }
    terms.retain(|_, c| *c != 0.0);
    let flip = if sense == Sense::Ge { -1.0 } else { 1.0 };
    let scale = terms.values().next().map_or(1.0, |c| c.abs());
    let q = |x: f64| (x * flip / scale * 1e9).round() as i64;
    (
        terms.iter().map(|(n, &c)| (n.clone(), q(c))).collect(),
        if sense == Sense::Eq { '=' } else { '<' },
        q(rhs),
    )
}

fn model_rows(model: &MilpModel) -> Vec<(Vec<(String, i64)>, char, i64)> {
    let mut rows: Vec<_> = model
        .constraints
        .iter()
        .map(|r| {
            let named: Vec<(String, f64)> = r.terms.iter().map(|&(v, c)| (model.var_name(v), c)).collect();
            canonical_row(&named, r.sense, r.rhs)
        })
        .collect();
    rows.sort();
    rows
}

fn appendix_rows() -> Check {
    let g = figure1();
    let c = caps(3, 2);
    let cycles = enumerate_cycles(&g, c.cycle_cap);
    let (model, _) = build_kep_np(&g, c, &cycles).map_err(|e| e.to_string())?;
    // Edges and cycles are numbered from 1 on paper: e1..e5, z1 = (1,2), z2 = (1,3).
    let y = |e: usize, k: usize| format!("y{}_{k}", e - 1);
    let big = |e: usize, k: usize| format!("O{}_{k}", e - 1);
    let small = |e: usize, k: usize| format!("o{}_{k}", e - 1);
    let z = |i: usize| format!("z{}", i - 1);
    let p = |e: usize| g.edge(e - 1).fail_prob;
    let mut expected = vec![
        canonical_row(
            &[(y(5, 1), 1.0), (y(2, 2), 1.0), (y(4, 2), 1.0), (z(1), 1.0), (z(2), 1.0)],
            Sense::Le,
            1.0,
        ),
        canonical_row(&[(y(1, 2), 1.0), (z(1), 1.0)], Sense::Le, 1.0),
        canonical_row(&[(y(3, 2), 1.0), (z(2), 1.0)], Sense::Le, 1.0),
        canonical_row(&[(y(5, 1), 1.0), (y(1, 2), -1.0), (y(3, 2), -1.0)], Sense::Ge, 0.0),
        canonical_row(&[(y(5, 1), 1.0)], Sense::Le, 1.0),
        canonical_row(
            &[(big(5, 1), 1.0), (big(1, 2), -1.0 / (1.0 - p(1))), (big(3, 2), -1.0 / (1.0 - p(3)))],
            Sense::Ge,
            0.0,
        ),
    ];
    for (e, k) in [(1, 2), (2, 2), (3, 2), (4, 2), (5, 1)] {
        expected.push(canonical_row(&[(big(e, k), 1.0), (y(e, k), -1.0)], Sense::Le, 0.0));
        expected.push(canonical_row(&[(big(e, k), 1.0), (small(e, k), -1.0)], Sense::Le, 0.0));
    }
    expected.sort();
    let got = model_rows(&model);
    ensure(got == expected, || {
        let extra: Vec<_> = got.iter().filter(|r| !expected.contains(r)).collect();
        let missing: Vec<_> = expected.iter().filter(|r| !got.contains(r)).collect();
        format!("extra rows {extra:?}, missing rows {missing:?}")
    })?;

    // Bounds on O and o; flow into vertices 2 and 3 at position 1 is
    // impossible, so their outgoing position-2 variables are fixed at 0.
    for (e, k) in [(1, 2), (2, 2), (3, 2), (4, 2), (5, 1)] {
        let dead = e == 2 || e == 4;
        let find = |name: &str| model.vars.iter().find(|v| v.name.as_deref() == Some(name)).cloned();
        let (yv, ov, sv) = (find(&y(e, k)), find(&big(e, k)), find(&small(e, k)));
        let (Some(yv), Some(ov), Some(sv)) = (yv, ov, sv) else {
            return Err(format!("missing variables for edge {e}"));
        };
        let top = if dead { 0.0 } else { 1.0 };
        ensure(yv.kind == VarKind::Binary && yv.upper == top, || format!("y bounds for e{e}"))?;
        ensure(ov.kind == VarKind::Continuous && ov.lower == 0.0 && ov.upper == top, || format!("O bounds for e{e}"))?;
        ensure(sv.lower == 0.0 && (sv.upper - (1.0 - p(e))).abs() < 1e-15, || format!("o bounds for e{e}"))?;
    }
    let stats = model_stats(&model);
    ensure(stats.num_binary == 7 && stats.num_continuous == 10, || {
        format!("{} binary, {} continuous", stats.num_binary, stats.num_continuous)
    })?;
    Ok(format!("{} rows match, 7 binary + 10 continuous", got.len()))
}

/// Gated-variable model for one realization with the structure variables
/// fixed to `m`; its optimum is the realized weight of `m`.
fn gated_optimum(g: &ExchangeGraph, c: Caps, m: &Matching, r: &Realization) -> Result<f64, String> {
    let cycles = enumerate_cycles(g, c.cycle_cap);
    let params = CvarParams {
        gamma: 0.0,
        alpha: 1.0,
        num_samples: 1,
        seed: 0,
    };
    let (mut model, h) = build_cvar_saa(g, c, &cycles, std::slice::from_ref(r), &params).map_err(|e| e.to_string())?;
    for &v in h.base.y.values().chain(&h.base.z) {
        model.set_bounds(v, 0.0, 0.0);
    }
    for chain in &m.chains {
        for (i, &e) in chain.edges.iter().enumerate() {
            let v = h.base.y.get(&(e, i + 1)).ok_or("chain edge without a variable")?;
            model.set_bounds(*v, 1.0, 1.0);
        }
    }
    for cycle in &m.cycles {
        let i = h.base.cycles.iter().position(|c| c.edges == cycle.edges).ok_or("unknown cycle")?;
        model.set_bounds(h.base.z[i], 1.0, 1.0);
    }
    let sol = solve(&model, &SolverConfig::default()).map_err(|e| e.to_string())?;
    ensure(sol.status == SolveStatus::Optimal, || format!("status {:?}", sol.status))?;
    Ok(-sol.objective)
}

fn saa_semantics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = caps(3, 3);
    let mut pairs = 0;
    while pairs < 100 {
        let g = small_graph(&mut rng, 8);
        let mut all = Vec::new();
        for_each_matching(&g, c, DEFAULT_ENUMERATION_LIMIT, |m| all.push(m.clone())).map_err(|e| e.to_string())?;
        for _ in 0..4 {
            let m = &all[rng.random_range(0..all.len())];
            let r = sample_realizations(&g, 1, rng.random()).remove(0);
            let want = realized_weight(&g, m, &r);
            let got = gated_optimum(&g, c, m, &r)?;
            ensure(rel_close(want, got, 1e-6), || format!("realized {want} vs gated model {got} for {m}"))?;
            pairs += 1;
        }
    }

    for n in [1usize, 2, 7, 200] {
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let mean = values.iter().sum::<f64>() / n as f64;
        let got = cvar_of_samples(&values, 1.0).map_err(|e| e.to_string())?;
        ensure(got == mean, || format!("cvar(·, 1) = {got}, mean = {mean}"))?;
    }

    for i in 0..20 {
        let g = small_graph(&mut rng, 8);
        let params = CvarParams {
            gamma: 0.0,
            alpha: 0.5,
            num_samples: 30,
            seed: i,
        };
        let reals = sample_realizations(&g, params.num_samples, params.seed);
        let cycles = enumerate_cycles(&g, c.cycle_cap);
        let (model, _) = build_cvar_saa(&g, c, &cycles, &reals, &params).map_err(|e| e.to_string())?;
        let sol = solve(&model, &SolverConfig::default()).map_err(|e| e.to_string())?;
        let brute = best_matching_by(&g, c, DEFAULT_ENUMERATION_LIMIT, |m| {
            reals.iter().map(|r| realized_weight(&g, m, r)).sum::<f64>() / reals.len() as f64
        })
        .map_err(|e| e.to_string())?;
        ensure(rel_close(-sol.objective, brute.value, 1e-6), || {
            format!("γ=0 instance {i}: SAA {} vs brute force {}", -sol.objective, brute.value)
        })?;
    }
    Ok("100 gated pairs, cvar(·,1) = mean, 20 γ=0 instances".into())
}

fn branch_and_price_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let c = caps(4, 3);
    let started = Instant::now();
    for i in 0..25 {
        let n = rng.random_range(15..=30);
        let ndds = rng.random_range(0..=3);
        let density = rng.random_range(0.08..0.16);
        let g = random_graph(&mut rng, n - ndds, ndds, density, |r| r.random_range(0.0..0.9));
        let (direct, _) = kep_np_optimum(&g, c)?;
        let bnp = branch_and_price(&g, c, &BnpConfig::default()).map_err(|e| e.to_string())?;
        ensure(bnp.optimal, || format!("instance {i}: search budget exhausted"))?;
        ensure(rel_close(bnp.objective, direct, 1e-6), || {
            format!("instance {i}: branch-and-price {} vs direct {direct}", bnp.objective)
        })?;
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 600.0, || format!("took {secs:.1}s"))?;
    Ok(format!("25 instances, {secs:.1}s"))
}

fn model_size() -> Check {
    let c = caps(3, 4);
    let mut report = Vec::new();
    for size in [64, 128] {
        for seed in 0..3 {
            let g = generate_instance(&GenConfig::with_size(size, seed)).map_err(|e| e.to_string())?;
            let cycles = enumerate_cycles(&g, c.cycle_cap);
            let (model, _) = build_kep_np(&g, c, &cycles).map_err(|e| e.to_string())?;
            let positions: usize = (0..g.num_edges()).map(|e| chain_positions(&g, e, c.chain_cap).len()).sum();
            let stats = model_stats(&model);
            let var_bound = 3 * positions + cycles.len();
            let row_bound = kep_np_row_bound(&g, c, cycles.len());
            ensure(stats.num_vars <= var_bound, || format!("{size}/{seed}: {} vars > {var_bound}", stats.num_vars))?;
            ensure(stats.num_constraints <= row_bound, || {
                format!("{size}/{seed}: {} rows > {row_bound}", stats.num_constraints)
            })?;
            if seed == 0 {
                report.push(format!(
                    "{size} nodes: {}/{var_bound} vars, {}/{row_bound} rows",
                    stats.num_vars, stats.num_constraints
                ));
            }
        }
    }
    Ok(report.join("; "))
}

fn fmt_median(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        median(values)
    }
}

fn paper_scale(timing: &mut Option<(f64, f64)>) -> Check {
    let started = Instant::now();
    let config = ExperimentConfig::paper(32, 64, 2018);
    let result = run_experiment(&config).map_err(|e| e.to_string())?;
    let failed = result.graphs.iter().flat_map(|g| &g.runs).filter(|r| r.realized.is_err()).count();
    ensure(failed == 0, || format!("{failed} failed cells"))?;
    let opt = |m: &str| fmt_median(&result.pct_opt_cells(m));
    let delta = |m: &str| fmt_median(&result.delta_alpha_cells(m, "KEP").into_iter().flatten().collect::<Vec<_>>());
    let (kep, ip, np, cvar) = (opt("KEP"), opt("KEP-IP(0.5)"), opt("KEP-NP"), opt("CVAR"));
    let (d_np, d_cvar) = (delta("KEP-NP"), delta("CVAR"));
    *timing = Some((fmt_median(&result.solve_times("KEP")), fmt_median(&result.solve_times("KEP-NP"))));
    let summary = format!(
        "median %OPT KEP {kep:.1}, KEP-IP {ip:.1}, KEP-NP {np:.1}, CVAR {cvar:.1}; median Δα% KEP-NP {d_np:.1}, CVAR {d_cvar:.1}; {:.0}s",
        started.elapsed().as_secs_f64()
    );
    ensure(np >= kep && np >= ip, || format!("%OPT ordering violated: {summary}"))?;
    ensure(d_cvar >= d_np, || format!("Δα ordering violated: {summary}"))?;
    Ok(summary)
}

fn timing_sanity(timing: Option<(f64, f64)>) -> Check {
    let (kep, np) = timing.ok_or("paper-scale run did not produce timings")?;
    ensure(np <= 2.0 * kep, || format!("median KEP-NP {np:.3}s vs KEP {kep:.3}s"))?;
    let mut per_n = Vec::new();
    for n in [5usize, 10, 20] {
        let mut times = Vec::new();
        for seed in 0..4 {
            let g = generate_instance(&GenConfig::with_size(64, 500 + seed)).map_err(|e| e.to_string())?;
            let method = Method::Cvar(CvarParams {
                num_samples: n,
                seed,
                ..CvarParams::default()
            });
            let out = solve_method(&g, caps(3, 4), &method, &SolverConfig::default()).map_err(|e| e.to_string())?;
            times.push(out.solve_seconds);
        }
        per_n.push(median(&times));
    }
    let summary = format!(
        "median KEP {kep:.3}s, KEP-NP {np:.3}s; CVAR N=5/10/20: {:.2}s/{:.2}s/{:.2}s",
        per_n[0], per_n[1], per_n[2]
    );
    ensure(per_n[0] < per_n[1] && per_n[1] < per_n[2], || format!("CVAR time not increasing: {summary}"))?;
    Ok(summary)
}

fn run(name: &str, check: impl FnOnce() -> Check) -> bool {
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS {name}: {detail} [{secs:.1}s]");
            true
        }
        Err(detail) => {
            println!("FAIL {name}: {detail} [{secs:.1}s]");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut timing = None;
    let results = [
        run("1 chain value identity", lemma_identity),
        run("2 oracle equivalence", oracle_equivalence),
        run("3 degenerate reductions", degenerate_reductions),
        run("4 four-vertex fixture", figure1_fixture),
        run("5 explicit model rows", appendix_rows),
        run("6 SAA/CVaR semantics", saa_semantics),
        run("7 branch-and-price", branch_and_price_correctness),
        run("8 model size", model_size),
        run("9 paper-scale ordering", || paper_scale(&mut timing)),
        run("10 timing sanity", || timing_sanity(timing)),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
