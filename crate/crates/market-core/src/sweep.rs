//! Sensitivity experiments: RES-penetration and CO2-price sweeps plus the
//! scenario-count stability study.

use alloc::string::String;
use alloc::vec::Vec;

use crate::futures::{solve_equilibrium, EquilibriumSolution, SolveError};
use crate::params::MarketConfig;
use crate::scenario::{sample_scenarios, SamplingError, ScenarioSet};
use crate::spot::spot_only_equilibrium;

/// Which market parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    /// Total RES production mean [MWh]; grid must lie in [0, 10000].
    ResPenetration,
    /// Both CO2 prices (futures and spot mean) [EUR/tCO2]; grid in [0, 50].
    Co2Price,
}

/// A sweep over one parameter: ordered grid values applied to a base
/// configuration, with scenarios redrawn from the same seed at each point
/// (common random numbers).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub base: MarketConfig,
    /// Solve the two-stage model at each point.
    pub general: bool,
    /// Also evaluate the spot-only benchmark at each point.
    pub spot_only: bool,
}

impl SweepSpec {
    /// Builds a grid from an inclusive [from, to] range with a positive step.
    pub fn with_range(
        parameter: SweepParameter,
        base: MarketConfig,
        from: f64,
        to: f64,
        step: f64,
    ) -> Self {
        let mut grid = Vec::new();
        if step > 0.0 && to >= from {
            let n = ((to - from) / step + 1e-9) as usize;
            for i in 0..=n {
                grid.push(from + step * i as f64);
            }
        }
        Self { parameter, grid, base, general: true, spot_only: true }
    }
}

/// One grid point of a sweep: prices, per-generator profit statistics and
/// quantity/emission aggregates, all expectation-weighted by scenario
/// probability. Generators are ordered I then J everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// Futures electricity price; NaN when the general model was not solved.
    pub pf: f64,
    /// Expected spot price of the general model.
    pub ps_expected: f64,
    /// Expected spot price of the spot-only benchmark, when requested.
    pub ps_spot_only: Option<f64>,
    pub expected_profit: Vec<f64>,
    pub cvar_profit: Vec<f64>,
    /// Expected futures/spot quantity totals by technology.
    pub qf_conventional_total: f64,
    pub qs_conventional_total: f64,
    pub qf_res_total: f64,
    pub qs_res_total: f64,
    /// Expected total conventional emissions sum_i (eps_s + eps_f) [tCO2].
    pub total_emissions: f64,
    pub converged: bool,
    pub kkt_residual: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepError {
    InvalidSpec(String),
    Sampling(SamplingError),
    Solve(SolveError),
}

impl core::fmt::Display for SweepError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SweepError::InvalidSpec(m) => write!(f, "invalid sweep spec: {m}"),
            SweepError::Sampling(e) => write!(f, "{e}"),
            SweepError::Solve(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SweepError {}

impl From<SamplingError> for SweepError {
    fn from(e: SamplingError) -> Self {
        SweepError::Sampling(e)
    }
}

fn validate_spec(spec: &SweepSpec) -> Result<(), SweepError> {
    if spec.grid.is_empty() {
        return Err(SweepError::InvalidSpec(String::from("empty grid")));
    }
    if spec.grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SweepError::InvalidSpec(String::from("grid must be strictly increasing")));
    }
    let (lo, hi) = match spec.parameter {
        SweepParameter::ResPenetration => (0.0, 10_000.0),
        SweepParameter::Co2Price => (0.0, 50.0),
    };
    if spec.grid.iter().any(|&v| v < lo || v > hi) {
        return Err(SweepError::InvalidSpec(alloc::format!(
            "grid values must lie in [{lo}, {hi}]"
        )));
    }
    if !spec.general && !spec.spot_only {
        return Err(SweepError::InvalidSpec(String::from("no market variant selected")));
    }
    Ok(())
}

/// Applies one grid value to a copy of the base configuration. RES
/// penetration distributes the target total over RES generators in
/// proportion to their base means (evenly when all means are zero).
pub fn apply_parameter(base: &MarketConfig, parameter: SweepParameter, value: f64) -> MarketConfig {
    let mut cfg = base.clone();
    match parameter {
        SweepParameter::ResPenetration => {
            let total: f64 = base.res.iter().map(|g| g.q_mean).sum();
            let n = base.res.len().max(1) as f64;
            for (g, b) in cfg.res.iter_mut().zip(&base.res) {
                g.q_mean = if total > 0.0 { value * b.q_mean / total } else { value / n };
                // Forward sales are capped at the expected production, so a
                // zero-penetration point is a conventional-only market.
                g.qf_max = b.qf_max.min(g.q_mean);
                g.qf_min = b.qf_min.min(g.qf_max);
            }
        }
        SweepParameter::Co2Price => {
            cfg.carbon.pf_co2 = value;
            cfg.carbon.ps_co2_mean = value;
        }
    }
    cfg
}

/// Solves one grid point. A non-converged solve yields its best iterate
/// with `converged = false`; every other failure aborts.
pub fn sweep_point(spec: &SweepSpec, value: f64) -> Result<SweepRow, SweepError> {
    let cfg = apply_parameter(&spec.base, spec.parameter, value);
    let scenarios = sample_scenarios(&cfg)?;
    let ps_spot_only = if spec.spot_only {
        let mut acc = 0.0;
        for s in &scenarios.scenarios {
            let out = spot_only_equilibrium(s, &cfg.conjecture)
                .map_err(|e| SweepError::Solve(SolveError::Degenerate(e)))?;
            acc += s.prob * out.ps;
        }
        Some(acc)
    } else {
        None
    };

    if !spec.general {
        let mut row = spot_only_row(&cfg, &scenarios)?;
        row.value = value;
        row.ps_spot_only = ps_spot_only;
        return Ok(row);
    }

    let (sol, converged) = match solve_equilibrium(&cfg, &scenarios) {
        Ok(sol) => (sol, true),
        Err(SolveError::NonConvergence { best, .. }) => (*best, false),
        Err(e) => return Err(SweepError::Solve(e)),
    };
    let mut row = summarize_equilibrium(value, &sol, &scenarios);
    row.ps_spot_only = ps_spot_only;
    row.converged = converged;
    Ok(row)
}

/// Runs the whole sweep sequentially; rows ordered by grid value.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, SweepError> {
    validate_spec(spec)?;
    let mut rows = Vec::with_capacity(spec.grid.len());
    for &v in &spec.grid {
        rows.push(sweep_point(spec, v)?);
    }
    Ok(rows)
}

/// Aggregates a solved equilibrium into one sweep row.
pub fn summarize_equilibrium(
    value: f64,
    sol: &EquilibriumSolution,
    scenarios: &ScenarioSet,
) -> SweepRow {
    let n_conv = sol.fd.epsf.len();
    let n_players = sol.fd.qf.len();

    let mut ps_expected = 0.0;
    let mut qs_conv = 0.0;
    let mut qs_res = 0.0;
    let mut eps_s = 0.0;
    for (s, out) in scenarios.scenarios.iter().zip(&sol.spot) {
        ps_expected += s.prob * out.ps;
        qs_conv += s.prob * out.qs_conventional.iter().sum::<f64>();
        qs_res += s.prob * out.qs_res.iter().sum::<f64>();
        eps_s += s.prob * out.eps_s.iter().sum::<f64>();
    }
    let eps_f: f64 = sol.fd.epsf.iter().sum();

    SweepRow {
        value,
        pf: sol.fd.pf,
        ps_expected,
        ps_spot_only: None,
        expected_profit: sol.panel.expected.clone(),
        cvar_profit: sol.panel.cvar.clone(),
        qf_conventional_total: sol.fd.qf[..n_conv].iter().sum(),
        qs_conventional_total: qs_conv,
        qf_res_total: sol.fd.qf[n_conv..n_players].iter().sum(),
        qs_res_total: qs_res,
        total_emissions: eps_s + eps_f,
        converged: true,
        kkt_residual: sol.kkt_residual,
        residual: sol.residual,
    }
}

/// Row for the spot-only benchmark: zero futures positions, per-scenario
/// closed-form outcomes.
fn spot_only_row(cfg: &MarketConfig, scenarios: &ScenarioSet) -> Result<SweepRow, SweepError> {
    let n_conv = cfg.conventional.len();
    let n_res = cfg.res.len();
    let fd = crate::payoff::FuturesDecision::zero(n_conv, n_res);
    let probs: Vec<f64> = scenarios.scenarios.iter().map(|s| s.prob).collect();
    let mut profit = alloc::vec![Vec::with_capacity(scenarios.len()); n_conv + n_res];
    let mut ps_expected = 0.0;
    let mut qs_conv = 0.0;
    let mut qs_res = 0.0;
    let mut eps_s = 0.0;
    for s in &scenarios.scenarios {
        let out = spot_only_equilibrium(s, &cfg.conjecture)
            .map_err(|e| SweepError::Solve(SolveError::Degenerate(e)))?;
        ps_expected += s.prob * out.ps;
        qs_conv += s.prob * out.qs_conventional.iter().sum::<f64>();
        qs_res += s.prob * out.qs_res.iter().sum::<f64>();
        eps_s += s.prob * out.eps_s.iter().sum::<f64>();
        for i in 0..n_conv {
            profit[i].push(crate::payoff::profit_conventional(
                s,
                i,
                &fd,
                cfg.carbon.pf_co2,
                out.ps,
                out.qs_conventional[i],
                out.eps_s[i],
            ));
        }
        for j in 0..n_res {
            profit[n_conv + j].push(crate::payoff::profit_res(s, j, &fd, n_conv, out.ps));
        }
    }
    let panel = crate::payoff::ProfitPanel::build(profit, &probs, cfg.risk.alpha)
        .map_err(|_| SweepError::InvalidSpec(String::from("CVaR tail holds no scenario")))?;
    Ok(SweepRow {
        value: f64::NAN,
        pf: f64::NAN,
        ps_expected,
        ps_spot_only: None,
        expected_profit: panel.expected,
        cvar_profit: panel.cvar,
        qf_conventional_total: 0.0,
        qs_conventional_total: qs_conv,
        qf_res_total: 0.0,
        qs_res_total: qs_res,
        total_emissions: eps_s,
        converged: true,
        kkt_residual: 0.0,
        residual: 0.0,
    })
}

/// One scenario-count point of the stability study.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub count: usize,
    pub pf: f64,
    pub ps_expected: f64,
    pub expected_profit: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    /// (max - min) / mean of the expected futures price across counts.
    pub pf_relative_spread: f64,
}

/// Re-solves one configuration at each scenario count and reports the
/// spread of the expected futures price.
pub fn stability_study(config: &MarketConfig, counts: &[usize]) -> Result<StabilityReport, SweepError> {
    if counts.is_empty() {
        return Err(SweepError::InvalidSpec(String::from("no scenario counts given")));
    }
    let tail = 1.0 - config.risk.alpha;
    for &n in counts {
        if n < 30 || tail * (n as f64) < 1.0 {
            return Err(SweepError::InvalidSpec(alloc::format!(
                "scenario count {n} is below the CVaR tail support"
            )));
        }
    }
    let mut rows = Vec::with_capacity(counts.len());
    for &n in counts {
        let mut cfg = config.clone();
        cfg.n_scenarios = n;
        let scenarios = sample_scenarios(&cfg)?;
        let (sol, converged) = match solve_equilibrium(&cfg, &scenarios) {
            Ok(sol) => (sol, true),
            Err(SolveError::NonConvergence { best, .. }) => (*best, false),
            Err(e) => return Err(SweepError::Solve(e)),
        };
        let row = summarize_equilibrium(n as f64, &sol, &scenarios);
        rows.push(StabilityRow {
            count: n,
            pf: row.pf,
            ps_expected: row.ps_expected,
            expected_profit: row.expected_profit,
            converged,
        });
    }
    let max = rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.pf));
    let min = rows.iter().fold(f64::INFINITY, |m, r| m.min(r.pf));
    let mean = rows.iter().map(|r| r.pf).sum::<f64>() / rows.len() as f64;
    let spread = if mean.abs() > 0.0 { (max - min) / mean.abs() } else { 0.0 };
    Ok(StabilityReport { rows, pf_relative_spread: spread })
}
