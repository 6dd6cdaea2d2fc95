//! `emarket`: solve and sweep the two-stage electricity market model.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 when the solver fails
//! to certify an equilibrium.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use market_core::{
    params, run_sweep, sample_scenarios, solve_equilibrium, stability_study, sweep_point,
    EquilibriumSolution, MarketConfig, SolveError, SweepError, SweepParameter, SweepRow, SweepSpec,
};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "emarket", version, about = "Two-stage electricity market equilibrium solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration file and report every violation.
    Validate(CommonArgs),
    /// Solve a single equilibrium and report prices, positions and profits.
    Solve(SolveArgs),
    /// Sweep RES penetration or the CO2 price over a grid.
    Sweep(SweepArgs),
    /// Re-solve under several scenario counts and report price stability.
    Stability(StabilityArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to a TOML market configuration.
    #[arg(long, env = "EMARKET_CONFIG")]
    config: PathBuf,
    /// Override the competition mode from the config file.
    #[arg(long, value_enum)]
    competition: Option<Competition>,
    /// Override the risk attitude: neutral sets phi = 0, averse sets phi = 1.
    #[arg(long, value_enum)]
    risk: Option<RiskMode>,
    /// Override the risk-aversion weight phi in [0, 1].
    #[arg(long)]
    phi: Option<f64>,
    /// Override the CVaR confidence level alpha in (0, 1).
    #[arg(long)]
    alpha: Option<f64>,
    /// Override the scenario count.
    #[arg(long)]
    scenarios: Option<usize>,
    /// Override the sampling seed.
    #[arg(long, env = "EMARKET_SEED")]
    seed: Option<u64>,
    /// Print solver progress to stderr.
    #[arg(long)]
    verbose: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum Competition {
    Cournot,
    Perfect,
}

#[derive(Copy, Clone, ValueEnum)]
enum RiskMode {
    Neutral,
    Averse,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write the solution as JSON to this path instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Param {
    Res,
    Co2,
}

#[derive(Copy, Clone, PartialEq, ValueEnum)]
enum Market {
    General,
    SpotOnly,
    Both,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Swept parameter: res (MWh penetration) or co2 (EUR/tCO2 price).
    #[arg(long, value_enum)]
    param: Param,
    /// First grid value.
    #[arg(long)]
    from: f64,
    /// Last grid value (inclusive when it lies on the step lattice).
    #[arg(long)]
    to: f64,
    /// Grid step, must be positive.
    #[arg(long)]
    step: f64,
    /// Which market design to evaluate at each point.
    #[arg(long, value_enum, default_value = "general")]
    market: Market,
    /// Write rows as CSV to this path; a .manifest.json sidecar records
    /// the run metadata. Defaults to stdout with no manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of worker threads for grid points (0 = rayon default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated scenario counts, e.g. 150,200,320,400.
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(args) => cmd_validate(&args),
        Command::Solve(args) => cmd_solve(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Stability(args) => cmd_stability(&args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

/// Loads the config file and applies the command-line overrides.
fn build_config(args: &CommonArgs) -> Result<MarketConfig> {
    let file = config::load(&args.config)?;
    let mut cfg = file.to_market_config()?;
    if let Some(mode) = args.competition {
        let name = match mode {
            Competition::Cournot => "cournot",
            Competition::Perfect => "perfect",
        };
        cfg.conjecture = config::conjecture_for(name, cfg.conventional.len(), cfg.res.len())?;
    }
    if let Some(mode) = args.risk {
        cfg.risk.phi = match mode {
            RiskMode::Neutral => 0.0,
            RiskMode::Averse => 1.0,
        };
    }
    if let Some(phi) = args.phi {
        cfg.risk.phi = phi;
    }
    if let Some(alpha) = args.alpha {
        cfg.risk.alpha = alpha;
    }
    if let Some(n) = args.scenarios {
        cfg.n_scenarios = n;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let report = params::validate(&cfg);
    if !report.violations.is_empty() {
        bail!("invalid configuration:\n  {}", report.violations.join("\n  "));
    }
    Ok(cfg)
}

fn cmd_validate(args: &CommonArgs) -> Result<ExitCode> {
    build_config(args)?;
    println!("ok: configuration is valid");
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let cfg = build_config(&args.common)?;
    let scenarios = sample_scenarios(&cfg).map_err(|e| anyhow::anyhow!("sampling failed: {e:?}"))?;
    let start = Instant::now();
    let sol = match solve_equilibrium(&cfg, &scenarios) {
        Ok(sol) => sol,
        Err(SolveError::NonConvergence { residual, kkt_residual, best }) => {
            eprintln!(
                "error: solver did not certify an equilibrium \
                 (complementarity {residual:.3e}, stationarity {kkt_residual:.3e}); \
                 best iterate: pf = {:.6}",
                best.fd.pf
            );
            return Ok(ExitCode::from(2));
        }
        Err(e) => bail!("solve failed: {e:?}"),
    };
    if args.common.verbose {
        for row in &sol.trace {
            eprintln!(
                "iter {:3}  residual {:.3e}  step {:.3e}",
                row.iteration, row.residual, row.step
            );
        }
        eprintln!("solved in {:.2?} ({} iterations)", start.elapsed(), sol.iterations);
    }
    let json = solution_json(&cfg, &scenarios.seed, &sol)?;
    match &args.out {
        Some(path) => std::fs::write(path, &json)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn solution_json(cfg: &MarketConfig, seed: &u64, sol: &EquilibriumSolution) -> Result<String> {
    let n_conv = cfg.conventional.len();
    let ids: Vec<&str> = cfg
        .conventional
        .iter()
        .map(|g| g.id.as_str())
        .chain(cfg.res.iter().map(|g| g.id.as_str()))
        .collect();
    let value = serde_json::json!({
        "seed": seed,
        "n_scenarios": cfg.n_scenarios,
        "phi": cfg.risk.phi,
        "alpha": cfg.risk.alpha,
        "futures_price": sol.fd.pf,
        "generators": ids.iter().enumerate().map(|(k, id)| serde_json::json!({
            "id": id,
            "qf": sol.fd.qf[k],
            "epsf": if k < n_conv { Some(sol.fd.epsf[k]) } else { None },
            "expected_profit": sol.panel.expected[k],
            "cvar_profit": sol.panel.cvar[k],
        })).collect::<Vec<_>>(),
        "certificate": {
            "complementarity": sol.residual,
            "complementarity_tolerance": sol.residual_tolerance(),
            "stationarity": sol.kkt_residual,
            "stationarity_tolerance": sol.stationarity_tolerance(),
            "iterations": sol.iterations,
        },
    });
    Ok(serde_json::to_string_pretty(&value)?)
}

/// Formats a number with nine significant digits.
fn sig(x: f64) -> String {
    format!("{x:.8e}")
}

fn csv_rows(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "value,pf,ps_expected,ps_spot_only,qf_conventional_total,qs_conventional_total,\
         qf_res_total,qs_res_total,total_emissions,expected_profit_total,cvar_profit_total,\
         converged,kkt_residual,residual\n",
    );
    for r in rows {
        let spot_only = r.ps_spot_only.map(sig).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            sig(r.value),
            sig(r.pf),
            sig(r.ps_expected),
            spot_only,
            sig(r.qf_conventional_total),
            sig(r.qs_conventional_total),
            sig(r.qf_res_total),
            sig(r.qs_res_total),
            sig(r.total_emissions),
            sig(r.expected_profit.iter().sum::<f64>()),
            sig(r.cvar_profit.iter().sum::<f64>()),
            r.converged,
            sig(r.kkt_residual),
            sig(r.residual),
        ));
    }
    out
}

fn grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        bail!("--step must be positive");
    }
    if to < from {
        bail!("--to must be at least --from");
    }
    let n = ((to - from) / step).round() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| from + i as f64 * step).collect();
    grid.retain(|&v| v <= to + 1e-9 * step);
    Ok(grid)
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode> {
    let cfg = build_config(&args.common)?;
    let parameter = match args.param {
        Param::Res => SweepParameter::ResPenetration,
        Param::Co2 => SweepParameter::Co2Price,
    };
    let spec = SweepSpec {
        parameter,
        grid: grid(args.from, args.to, args.step)?,
        base: cfg,
        general: args.market != Market::SpotOnly,
        spot_only: args.market != Market::General,
    };

    let started = Instant::now();
    let rows: Vec<SweepRow> = if args.threads == 1 {
        run_sweep(&spec).map_err(sweep_error)?
    } else {
        // Grid points are independent; parallel collect keeps grid order.
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build()
            .context("cannot build thread pool")?;
        pool.install(|| {
            spec.grid
                .par_iter()
                .map(|&v| sweep_point(&spec, v))
                .collect::<Result<Vec<_>, _>>()
        })
        .map_err(sweep_error)?
    };
    if args.common.verbose {
        eprintln!("{} grid points in {:.2?}", rows.len(), started.elapsed());
    }

    let csv = csv_rows(&rows);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &csv)
                .with_context(|| format!("cannot write {}", path.display()))?;
            let manifest = manifest_json(args, &spec, &rows)?;
            let mut sidecar = path.clone();
            let name = format!(
                "{}.manifest.json",
                path.file_name().and_then(|s| s.to_str()).unwrap_or("sweep")
            );
            sidecar.set_file_name(name);
            std::fs::write(&sidecar, manifest)
                .with_context(|| format!("cannot write {}", sidecar.display()))?;
        }
        None => print!("{csv}"),
    }
    if rows.iter().any(|r| !r.converged) {
        eprintln!("error: one or more grid points did not converge");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep_error(e: SweepError) -> anyhow::Error {
    anyhow::anyhow!("sweep failed: {e:?}")
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

fn manifest_json(args: &SweepArgs, spec: &SweepSpec, rows: &[SweepRow]) -> Result<String> {
    let value = serde_json::json!({
        "config_path": args.common.config.display().to_string(),
        "config_sha256": sha256_file(&args.common.config)?,
        "seed": spec.base.seed,
        "n_scenarios": spec.base.n_scenarios,
        "phi": spec.base.risk.phi,
        "alpha": spec.base.risk.alpha,
        "parameter": match spec.parameter {
            SweepParameter::ResPenetration => "res",
            SweepParameter::Co2Price => "co2",
        },
        "grid": spec.grid,
        "tolerance_rule": {
            "complementarity": "1e-6 * profit scale",
            "stationarity": "1e-6 * gradient scale",
        },
        "points": rows.iter().map(|r| serde_json::json!({
            "value": r.value,
            "converged": r.converged,
            "kkt_residual": r.kkt_residual,
            "residual": r.residual,
        })).collect::<Vec<_>>(),
    });
    Ok(serde_json::to_string_pretty(&value)?)
}

fn cmd_stability(args: &StabilityArgs) -> Result<ExitCode> {
    let cfg = build_config(&args.common)?;
    let report = stability_study(&cfg, &args.counts).map_err(sweep_error)?;
    println!("count,pf,ps_expected,converged");
    for row in &report.rows {
        println!("{},{},{},{}", row.count, sig(row.pf), sig(row.ps_expected), row.converged);
    }
    println!("# relative spread of pf: {}", sig(report.pf_relative_spread));
    if report.rows.iter().any(|r| !r.converged) {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
