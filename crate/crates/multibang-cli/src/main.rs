//! `mbc` — experiment driver for multibang optimal control of the 1D Poisson
//! equation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
//!
//! Subcommands: `solve` (single solve, optional nodal CSV), `sweep` (γ/h rate
//! table), `reg-estimate` (singular-set measure fit), `check` (benchmark
//! construction diagnostics). Exit codes: 0 success, 1 solver or check
//! failure, 2 usage error.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multibang::experiments::{
    build_example, consistency_check, fit_reg_kappa, geometric_grid, level_set_gradients,
    min_gradient_on_levelsets, ExampleId,
};
use multibang::harness::{emit_csv, mesh_for_h, run_sweep, SweepConfig, DEFAULT_MAX_ITER};
use multibang::solver::{active_set_solve, ProblemInstance};
use multibang::Piecewise64;

#[derive(Parser)]
#[command(
    name = "mbc",
    about = "Multibang optimal control experiments on the 1D Poisson equation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one regularized problem and optionally write nodal fields
    Solve(SolveArgs),
    /// Run a γ/h sweep and emit the rate table as CSV
    Sweep(SweepArgs),
    /// Estimate the singular-set regularity exponent κ
    RegEstimate(RegArgs),
    /// Run construction consistency checks for a benchmark
    Check(CheckArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Benchmark problem id (1 or 2)
    #[arg(long)]
    example: u8,
    /// Regularization parameter γ > 0
    #[arg(long)]
    gamma: f64,
    /// Mesh size of the form 1/n
    #[arg(long)]
    h: f64,
    /// Override the penalty weight α
    #[arg(long)]
    alpha: Option<f64>,
    /// Write nodal x,u,y,p,lambda CSV here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Active-set iteration budget
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// Benchmark problem id (1 or 2)
    #[arg(long)]
    example: Option<u8>,
    /// Exponent range LO:HI[:STEP]; rows at γ = 2^-e
    #[arg(long, value_name = "LO:HI[:STEP]")]
    gamma_exponents: Option<String>,
    /// Comma-separated mesh sizes, each of the form 1/n (default: 1e-4,1e-5)
    #[arg(long, value_name = "H1,H2,...")]
    h: Option<String>,
    /// Output CSV path
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lanes run concurrently (default: MBC_WORKERS or 1)
    #[arg(long)]
    workers: Option<usize>,
    /// Active-set iteration budget per solve
    #[arg(long)]
    max_iter: Option<usize>,
    /// Permit meshes finer than 1e-5 (multi-million-unknown solves)
    #[arg(long)]
    allow_fine_mesh: bool,
    /// Flat key = value config file; flags override file entries
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RegArgs {
    /// Benchmark problem id (1 or 2)
    #[arg(long)]
    example: u8,
    /// Geometric ε grid LO:HI:POINTS
    #[arg(long, value_name = "LO:HI:POINTS")]
    eps: Option<String>,
    /// Output CSV path (epsilon, measure, kappa_fit rows)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Benchmark problem id (1 or 2)
    #[arg(long)]
    example: u8,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::RegEstimate(args) => cmd_reg_estimate(args),
        Command::Check(args) => cmd_check(args),
    };
    match outcome {
        Ok(code) => code,
        Err(UsageOr::Usage(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(2)
        }
        Err(UsageOr::Lib(err)) => {
            eprintln!("error: {}", err);
            match err {
                multibang::Error::InvalidArgument(_) | multibang::Error::Domain(_) => {
                    ExitCode::from(2)
                }
                _ => ExitCode::from(1),
            }
        }
    }
}

enum UsageOr {
    Usage(String),
    Lib(multibang::Error),
}

impl From<multibang::Error> for UsageOr {
    fn from(e: multibang::Error) -> Self {
        UsageOr::Lib(e)
    }
}

type CmdResult = Result<ExitCode, UsageOr>;

fn cmd_solve(args: SolveArgs) -> CmdResult {
    if !(args.gamma > 0.0) {
        return Err(UsageOr::Usage("--gamma must be > 0".into()));
    }
    let id = ExampleId::from_index(args.example)?;
    let example = build_example(id)?;
    let mesh = mesh_for_h(args.h)?;
    let mut cfg = example.cfg.with_gamma(args.gamma)?;
    if let Some(alpha) = args.alpha {
        cfg = multibang::penalty::MultibangConfig::new(cfg.levels().to_vec(), alpha, args.gamma)?;
    }
    let target: Piecewise64 = example.z.to_float();
    let problem = ProblemInstance::new(mesh, cfg, target);
    let result = active_set_solve(&problem, None, args.max_iter)?;
    println!(
        "example {} γ={} h={}: converged={} iterations={} optimality_residual={:.3e}",
        args.example,
        args.gamma,
        args.h,
        result.converged,
        result.iterations,
        result.optimality_residual
    );
    if let Some(path) = args.out {
        write_state_csv(&path, &result.state).map_err(UsageOr::Lib)?;
        println!("nodal fields written to {}", path.display());
    }
    Ok(if result.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn write_state_csv(
    path: &Path,
    state: &multibang::solver::SolverState<f64>,
) -> Result<(), multibang::Error> {
    let mesh = state.u.mesh();
    let mut out = String::from("x,u,y,p,lambda\n");
    for j in 0..mesh.n_nodes() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            mesh.node::<f64>(j),
            state.u.values()[j],
            state.y.values()[j],
            state.p.values()[j],
            state.lambda.values()[j]
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|source| multibang::Error::Io {
            path: path.display().to_string(),
            source,
        })
}

fn parse_exponents(spec: &str) -> Result<Vec<u32>, UsageOr> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() < 2 || parts.len() > 3 {
        return Err(UsageOr::Usage(format!(
            "--gamma-exponents expects LO:HI[:STEP], got {:?}",
            spec
        )));
    }
    let parse = |s: &str| -> Result<u32, UsageOr> {
        s.parse()
            .map_err(|_| UsageOr::Usage(format!("bad exponent {:?}", s)))
    };
    let lo = parse(parts[0])?;
    let hi = parse(parts[1])?;
    let step = if parts.len() == 3 { parse(parts[2])? } else { 1 };
    if step == 0 || hi < lo {
        return Err(UsageOr::Usage("exponent range must be increasing with step >= 1".into()));
    }
    Ok((lo..=hi).step_by(step as usize).collect())
}

fn parse_h_list(spec: &str) -> Result<Vec<f64>, UsageOr> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| UsageOr::Usage(format!("bad mesh size {:?}", s)))
        })
        .collect()
}

fn read_config_file(path: &Path) -> Result<HashMap<String, String>, UsageOr> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        UsageOr::Lib(multibang::Error::Io {
            path: path.display().to_string(),
            source,
        })
    })?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(UsageOr::Usage(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn env_workers() -> Option<usize> {
    std::env::var("MBC_WORKERS").ok()?.parse().ok()
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let file_cfg = match &args.config {
        Some(path) => read_config_file(path)?,
        None => HashMap::new(),
    };
    let from_file = |key: &str| file_cfg.get(key).cloned();

    let example_idx = args
        .example
        .or_else(|| from_file("example").and_then(|s| s.parse().ok()))
        .ok_or_else(|| UsageOr::Usage("missing --example (or `example` in config)".into()))?;
    let exponents_spec = args
        .gamma_exponents
        .or_else(|| from_file("gamma_exponents"))
        .ok_or_else(|| {
            UsageOr::Usage("missing --gamma-exponents (or `gamma_exponents` in config)".into())
        })?;
    let h_spec = args
        .h
        .or_else(|| from_file("h"))
        .unwrap_or_else(|| "1e-4,1e-5".into());
    let out_path = args
        .out
        .or_else(|| from_file("out").map(PathBuf::from))
        .ok_or_else(|| UsageOr::Usage("missing --out (or `out` in config)".into()))?;
    let workers = args
        .workers
        .or_else(|| from_file("workers").and_then(|s| s.parse().ok()))
        .or_else(env_workers)
        .unwrap_or(1);
    let max_iter = args
        .max_iter
        .or_else(|| from_file("max_iter").and_then(|s| s.parse().ok()))
        .unwrap_or(DEFAULT_MAX_ITER);

    let id = ExampleId::from_index(example_idx)?;
    let exponents = parse_exponents(&exponents_spec)?;
    let h_list = parse_h_list(&h_spec)?;
    let allow_fine = args.allow_fine_mesh
        || from_file("allow_fine_mesh").map(|s| s == "true").unwrap_or(false);
    if !allow_fine {
        if let Some(&h) = h_list.iter().find(|&&h| h < 0.99e-5) {
            return Err(UsageOr::Usage(format!(
                "mesh size {} needs --allow-fine-mesh (multi-million-unknown solves)",
                h
            )));
        }
    }
    let sweep = SweepConfig::new(id, exponents, h_list)?
        .with_workers(workers)
        .with_max_iter(max_iter);
    let table = run_sweep(&sweep)?;
    emit_csv(&table, &out_path)?;
    let failures = table.rows.iter().filter(|r| !r.converged).count();
    println!(
        "sweep complete: {} rows written to {} ({} unconverged)",
        table.rows.len(),
        out_path.display(),
        failures
    );
    for row in table.rows.iter().filter(|r| !r.converged) {
        eprintln!("unconverged: gamma={} h={}", row.gamma, row.h);
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_reg_estimate(args: RegArgs) -> CmdResult {
    let id = ExampleId::from_index(args.example)?;
    let example = build_example(id)?;
    let grid = match &args.eps {
        Some(spec) => {
            let parts: Vec<&str> = spec.split(':').collect();
            if parts.len() != 3 {
                return Err(UsageOr::Usage(format!(
                    "--eps expects LO:HI:POINTS, got {:?}",
                    spec
                )));
            }
            let lo: f64 = parts[0]
                .parse()
                .map_err(|_| UsageOr::Usage("bad eps low".into()))?;
            let hi: f64 = parts[1]
                .parse()
                .map_err(|_| UsageOr::Usage("bad eps high".into()))?;
            let n: usize = parts[2]
                .parse()
                .map_err(|_| UsageOr::Usage("bad eps point count".into()))?;
            if !(lo > 0.0) || !(hi > lo) || n < 4 {
                return Err(UsageOr::Usage(
                    "need 0 < LO < HI and POINTS >= 4".into(),
                ));
            }
            geometric_grid(lo, hi, n)
        }
        None => multibang::experiments::default_epsilon_grid(),
    };
    let estimate = fit_reg_kappa(&example.p_bar, &example.cfg, &grid)?;
    println!(
        "example {}: kappa_fit = {:.6}, c_fit = {:.6e} over {} epsilons",
        args.example,
        estimate.kappa_fit,
        estimate.c_fit,
        estimate.epsilons.len()
    );
    if let Some(path) = args.out {
        let mut out = String::from("epsilon,measure,kappa_fit\n");
        for (e, m) in estimate.epsilons.iter().zip(&estimate.measures) {
            out.push_str(&format!("{},{},{}\n", e, m, estimate.kappa_fit));
        }
        std::fs::write(&path, out).map_err(|source| {
            UsageOr::Lib(multibang::Error::Io {
                path: path.display().to_string(),
                source,
            })
        })?;
        println!("measures written to {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(args: CheckArgs) -> CmdResult {
    let id = ExampleId::from_index(args.example)?;
    let example = build_example(id)?;
    let report = consistency_check(&example);
    println!(
        "boundary values exact: {}",
        if report.boundary_exact { "yes" } else { "NO" }
    );
    println!(
        "adjoint reconstruction max deviation over {} grid points: {:.3e}",
        report.grid_points, report.max_deviation
    );
    println!(
        "classification violations: {}",
        report.classification_violations
    );
    let min_grad = min_gradient_on_levelsets(&example.p_bar, &example.cfg)?;
    println!("min |p'| over threshold level sets: {:.6e}", min_grad);
    if min_grad <= 1e-6 {
        let mut flats: Vec<_> = level_set_gradients(&example.p_bar, &example.cfg)?
            .into_iter()
            .filter(|c| c.gradient_abs <= 1e-6)
            .collect();
        flats.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
        flats.dedup_by(|a, b| (a.x - b.x).abs() < 1e-5);
        for c in flats {
            println!(
                "degenerate level-set point near x = {:.6} (threshold index {})",
                c.x, c.threshold_index
            );
        }
    }
    let ok = report.boundary_exact
        && report.max_deviation <= 1e-10
        && report.classification_violations == 0;
    println!("construction check: {}", if ok { "PASS" } else { "FAIL" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
