//! `stochkep`: generate pools, clear them, benchmark clearing policies.
//!
//! Exit codes: 0 success, 1 I/O or other error, 2 bad arguments,
//! 3 solver failure or infeasible model, 4 time limit hit (the incumbent is
//! still written).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stochkep_core::cvar::CvarParams;
use stochkep_core::gen::{generate_instance, GenConfig, GenMode, WeightDist, DEFAULT_DENSITY};
use stochkep_core::graph::Caps;
use stochkep_core::io::{edge_lists, instance_hash, read_instance, write_instance, MatchingFile};
use stochkep_core::milp::{SolveStatus, SolverConfig};
use stochkep_core::sim::{median, run_experiment, solve_method, ExperimentConfig, Method};
use stochkep_core::Error;

#[derive(Parser)]
#[command(name = "stochkep", version, about = "Failure-aware kidney exchange clearing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random exchange pool as instance JSON.
    Generate(GenerateArgs),
    /// Clear one pool and write the matching JSON.
    Solve(SolveArgs),
    /// Run the realization benchmark and write CSV/JSON tables.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Density,
    Bloodtype,
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of patient-donor pairs.
    #[arg(long)]
    pairs: usize,
    /// Number of non-directed donors.
    #[arg(long, default_value_t = 0)]
    ndds: usize,
    #[arg(long, value_enum, default_value = "density")]
    mode: ModeArg,
    /// Arc probability in density mode.
    #[arg(long, default_value_t = DEFAULT_DENSITY)]
    density: f64,
    /// Lower end of the failure-probability range.
    #[arg(long, default_value_t = 0.1)]
    prob_lo: f64,
    /// Upper end of the failure-probability range.
    #[arg(long, default_value_t = 0.9)]
    prob_hi: f64,
    /// Edge weights: `unit` or `LO:HI` for uniform weights.
    #[arg(long, default_value = "unit")]
    weight: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output instance path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Kep,
    KepIp,
    KepNp,
    Cvar,
    Bnp,
}

#[derive(Args)]
struct SolverArgs {
    /// Solver threads.
    #[arg(long, env = "STOCHKEP_THREADS", default_value_t = 1)]
    threads: usize,
    /// Wall-clock limit per solve, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            threads: self.threads,
            time_limit_seconds: self.time_limit.unwrap_or(f64::INFINITY),
            ..SolverConfig::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, default_value_t = 3)]
    cycle_cap: usize,
    #[arg(long, default_value_t = 4)]
    chain_cap: usize,
    /// Failure probability assumed for every edge by kep-ip.
    #[arg(long, default_value_t = 0.5)]
    p_uniform: f64,
    /// Risk weight (cvar).
    #[arg(long, default_value_t = 10.0)]
    gamma: f64,
    /// Tail fraction (cvar).
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Sampled realizations (cvar).
    #[arg(long, default_value_t = 10)]
    samples: usize,
    /// Sampling seed (cvar).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output matching path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 32)]
    graphs: usize,
    /// Vertices per graph (split into pairs and NDDs 59:5).
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 200)]
    realizations: usize,
    /// Comma-separated: kep, kep-ip, kep-ip(P), kep-np, cvar, bnp.
    #[arg(long, default_value = "kep,kep-ip,kep-np,cvar", value_delimiter = ',')]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    cycle_cap: usize,
    #[arg(long, default_value_t = 4)]
    chain_cap: usize,
    /// Arc probability of the generated graphs.
    #[arg(long, default_value_t = DEFAULT_DENSITY)]
    density: f64,
    /// Tail fraction for α-worst-case means.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    outdir: PathBuf,
}

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_TIME_LIMIT: u8 = 4;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) | Error::InvalidGraph(_) => EXIT_USAGE,
        Error::Solver(_) | Error::Integrality { .. } | Error::BrokenChain(_) | Error::Model(_) => EXIT_SOLVER,
        Error::ResourceLimit(_) => EXIT_TIME_LIMIT,
        _ => EXIT_IO,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn parse_weight(s: &str) -> Result<WeightDist, Error> {
    if s == "unit" {
        return Ok(WeightDist::Unit);
    }
    let parsed = s
        .split_once(':')
        .and_then(|(lo, hi)| Some((lo.parse::<f64>().ok()?, hi.parse::<f64>().ok()?)));
    match parsed {
        Some((lo, hi)) => Ok(WeightDist::Uniform(lo, hi)),
        None => Err(Error::InvalidConfig(format!("--weight must be `unit` or LO:HI, got {s:?}"))),
    }
}

fn generate(a: GenerateArgs) -> Result<u8, Error> {
    let config = GenConfig {
        num_pairs: a.pairs,
        num_ndds: a.ndds,
        mode: match a.mode {
            ModeArg::Density => GenMode::Density(a.density),
            ModeArg::Bloodtype => GenMode::BloodType,
        },
        weight_dist: parse_weight(&a.weight)?,
        prob_lo: a.prob_lo,
        prob_hi: a.prob_hi,
        seed: a.seed,
    };
    let graph = generate_instance(&config)?;
    write_instance(&graph, &a.out)?;
    println!(
        "wrote {}: {} vertices ({} pairs, {} NDDs), {} edges",
        a.out.display(),
        graph.num_vertices(),
        graph.num_pairs(),
        graph.num_ndds(),
        graph.num_edges()
    );
    Ok(0)
}

fn solve(a: SolveArgs) -> Result<u8, Error> {
    let graph = read_instance(&a.instance)?;
    let caps = Caps::new(a.cycle_cap, a.chain_cap)?;
    let method = match a.method {
        MethodArg::Kep => Method::Kep,
        MethodArg::KepIp => Method::KepIp(a.p_uniform),
        MethodArg::KepNp => Method::KepNp,
        MethodArg::Bnp => Method::Bnp,
        MethodArg::Cvar => {
            let params = CvarParams {
                gamma: a.gamma,
                alpha: a.alpha,
                num_samples: a.samples,
                seed: a.seed,
            };
            params.check()?;
            Method::Cvar(params)
        }
    };
    let config = a.solver.config();
    config.check()?;
    let out = solve_method(&graph, caps, &method, &config)?;
    let (cycles, chains) = edge_lists(&out.matching);
    let file = MatchingFile {
        instance_hash: instance_hash(&graph)?,
        method: method.name(),
        caps,
        objective_value: out.objective,
        objective_loss: out.objective_loss,
        cycles,
        chains,
        solve_seconds: out.solve_seconds,
        optimal: out.status == SolveStatus::Optimal,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(&a.out, text)?;

    print!("{}: objective {:.6}", method.name(), out.objective);
    if let Some(loss) = out.objective_loss {
        print!(" (loss {loss:.6})");
    }
    println!(
        ", {} cycles, {} chains, {:.3}s",
        out.matching.cycles.len(),
        out.matching.chains.len(),
        out.solve_seconds
    );
    println!("{}", out.matching);
    if out.status == SolveStatus::LimitReached {
        eprintln!("time limit reached; wrote best incumbent");
        return Ok(EXIT_TIME_LIMIT);
    }
    Ok(0)
}

fn bench(a: BenchArgs) -> Result<u8, Error> {
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    let config = ExperimentConfig {
        num_realizations: a.realizations,
        caps: Caps::new(a.cycle_cap, a.chain_cap)?,
        methods,
        gen_mode: GenMode::Density(a.density),
        report_alpha: a.alpha,
        solver: a.solver.config(),
        ..ExperimentConfig::paper(a.graphs, a.size, a.seed)
    };
    let result = run_experiment(&config)?;
    fs::create_dir_all(&a.outdir)?;
    result.write_cells_csv(&a.outdir.join("cells.csv"))?;
    result.write_summary_csv(&a.outdir.join("summary.csv"))?;
    result.write_timing_csv(&a.outdir.join("timing.csv"))?;
    let boxplot = serde_json::to_string_pretty(&result.boxplot_summary())?;
    fs::write(a.outdir.join("boxplot.json"), boxplot + "\n")?;
    fs::write(a.outdir.join("config.json"), serde_json::to_string_pretty(&config)? + "\n")?;

    println!(
        "{} graphs x {} realizations -> {}",
        a.graphs,
        a.realizations,
        a.outdir.display()
    );
    println!("{:<14} {:>12} {:>14} {:>12}", "method", "median %OPT", "median Δα%", "median s");
    for m in &result.methods {
        let deltas: Vec<f64> = result.delta_alpha_cells(m, "KEP").into_iter().flatten().collect();
        println!(
            "{:<14} {:>12.2} {:>14.2} {:>12.4}",
            m,
            median(&result.pct_opt_cells(m)),
            median(&deltas),
            median(&result.solve_times(m))
        );
    }
    let failures = result
        .graphs
        .iter()
        .flat_map(|g| g.runs.iter())
        .filter(|r| r.realized.is_err())
        .count();
    if failures > 0 {
        eprintln!("{failures} (graph, method) cells failed; see cells.csv");
    }
    Ok(0)
}
