//! First-stage equilibrium: conjectured partial derivatives, per-generator
//! KKT systems, and the joint solve.
//!
//! The spot stage is always eliminated through the closed forms, so the
//! solver works on futures quantities, allowance positions and the bound
//! multipliers only. Risk duals (VaR, tail weights) are recovered exactly
//! from the sorted profit distribution. A damped diagonalization pass
//! produces a warm start; a smoothed Fischer-Burmeister Newton refinement
//! then drives the complementarity objective to tolerance.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::params::{CompetitionConjecture, DemandParams, MarketConfig};
use crate::payoff::{cvar, profit_conventional, profit_res, FuturesDecision, ProfitPanel};
use crate::scenario::{Scenario, ScenarioSet};
use crate::spot::{spot_outcome, DegenerateTau, SpotOutcome};
use crate::params::validate;

/// Conjectured derivatives of the futures price, spot price and own spot
/// quantity with respect to a generator's futures quantity, for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDerivatives {
    /// dPF/dqF_k for every generator k (I then J order); scenario free.
    pub dpf_dqf: Vec<f64>,
    /// dPS/dqF_i per conventional generator.
    pub dps_dqf_conv: Vec<f64>,
    /// dqS_i/dqF_i per conventional generator.
    pub dqs_dqf_conv: Vec<f64>,
    /// dPS/dqF_j per RES generator; identically zero.
    pub dps_dqf_res: Vec<f64>,
    /// dqS_j/dqF_j per RES generator; identically -1.
    pub dqs_dqf_res: Vec<f64>,
}

/// Inverse demand curve of the futures market.
pub fn futures_price(qf_all: &[f64], demand: &DemandParams) -> f64 {
    demand.gamma_f - demand.beta_f * qf_all.iter().sum::<f64>()
}

/// The conjectured partial derivative families for one scenario.
///
/// The spot-price derivative is the response of the closed-form price when
/// the rivals in I follow generator i's move at the conjectured rate psi:
/// `phi * beta_s * [-(1 + (I-1) psi_i) + c_i tau_i + sum_{k != i} c_k psi_k tau_k]`.
pub fn partials(
    s: &Scenario,
    conj: &CompetitionConjecture,
    demand: &DemandParams,
) -> Result<PartialDerivatives, DegenerateTau> {
    let n_conv = s.quad_cost.len();
    let n_total = conj.psi.len();
    let n_res = n_total - n_conv;
    let (tau, phi) = crate::spot::competition_factors(s, conj)?;

    let dpf_dqf: Vec<f64> = conj
        .psi
        .iter()
        .map(|&psi| -demand.beta_f * (1.0 + (n_total as f64 - 1.0) * psi))
        .collect();

    let cross: f64 = (0..n_conv).map(|k| s.quad_cost[k] * conj.psi[k] * tau[k]).sum();
    let mut dps_dqf_conv = Vec::with_capacity(n_conv);
    let mut dqs_dqf_conv = Vec::with_capacity(n_conv);
    for i in 0..n_conv {
        let own = s.quad_cost[i] * tau[i];
        let own_psi_term = s.quad_cost[i] * conj.psi[i] * tau[i];
        let dps = phi
            * s.beta_s
            * (-(1.0 + (n_conv as f64 - 1.0) * conj.psi[i]) + own + (cross - own_psi_term));
        dps_dqf_conv.push(dps);
        dqs_dqf_conv.push(tau[i] * (dps - s.quad_cost[i]));
    }

    Ok(PartialDerivatives {
        dpf_dqf,
        dps_dqf_conv,
        dqs_dqf_conv,
        dps_dqf_res: alloc::vec![0.0; n_res],
        dqs_dqf_res: alloc::vec![-1.0; n_res],
    })
}

/// Per-scenario profit derivatives with respect to the futures decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGradients {
    /// dPi_k/dqF_k per generator k (I then J order).
    pub dpi_dqf: Vec<f64>,
    /// dPi_i/depsF_i per conventional generator; the CO2 price spread.
    pub dpi_depsf: Vec<f64>,
}

/// Chains the conjectured partials through the profit definitions for one
/// scenario at the given futures decision.
pub fn profit_gradients(
    s: &Scenario,
    fd: &FuturesDecision,
    conj: &CompetitionConjecture,
    demand: &DemandParams,
    pf_co2: f64,
) -> Result<ScenarioGradients, DegenerateTau> {
    let out = spot_outcome(s, fd, conj)?;
    let pd = partials(s, conj, demand)?;
    Ok(gradients_from_parts(s, fd, &out, &pd, pf_co2))
}

fn gradients_from_parts(
    s: &Scenario,
    fd: &FuturesDecision,
    out: &SpotOutcome,
    pd: &PartialDerivatives,
    pf_co2: f64,
) -> ScenarioGradients {
    let n_conv = s.quad_cost.len();
    let n_res = s.res_output.len();
    let mut dpi_dqf = Vec::with_capacity(n_conv + n_res);
    for i in 0..n_conv {
        let dps = pd.dps_dqf_conv[i];
        let dqs = pd.dqs_dqf_conv[i];
        let q_total = fd.qf[i] + out.qs_conventional[i];
        let g = dps * out.qs_conventional[i] + out.ps * dqs
            - s.linear_cost[i] * (1.0 + dqs)
            - s.quad_cost[i] * q_total * (1.0 + dqs)
            + pd.dpf_dqf[i] * fd.qf[i]
            - s.intensity[i] * s.ps_co2 * (1.0 + dqs)
            + fd.pf;
        dpi_dqf.push(g);
    }
    for j in 0..n_res {
        let k = n_conv + j;
        let g = (pd.dpf_dqf[k] - pd.dps_dqf_res[j]) * fd.qf[k] - out.ps
            + pd.dps_dqf_res[j] * s.res_output[j]
            + fd.pf;
        dpi_dqf.push(g);
    }
    let dpi_depsf = alloc::vec![s.ps_co2 - pf_co2; n_conv];
    ScenarioGradients { dpi_dqf, dpi_depsf }
}

/// Lagrangian dual state of every generator's risk-averse problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// VaR auxiliary per generator [EUR].
    pub xi: Vec<f64>,
    /// Shortfall below VaR per generator and scenario [EUR].
    pub eta: Vec<Vec<f64>>,
    /// Tail weights; sum_w mu_kw = phi.
    pub mu: Vec<Vec<f64>>,
    /// Complement of mu: mu + theta = phi sigma / (1 - alpha).
    pub theta: Vec<Vec<f64>>,
    /// Bound multipliers on futures quantities, per generator.
    pub nu_min: Vec<f64>,
    pub nu_max: Vec<f64>,
    /// Bound multipliers on allowance positions, per conventional generator.
    pub lambda_min: Vec<f64>,
    pub lambda_max: Vec<f64>,
}

/// Solver diagnostics: one row per refinement iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    pub step: f64,
}

/// A certified (or best-effort) joint equilibrium state.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    pub fd: FuturesDecision,
    pub spot: Vec<SpotOutcome>,
    pub duals: DualState,
    pub panel: ProfitPanel,
    /// Value of the complementarity-sum objective.
    pub residual: f64,
    /// Max absolute stationarity violation.
    pub kkt_residual: f64,
    pub profit_scale: f64,
    pub gradient_scale: f64,
    pub iterations: usize,
    /// Allowance directions that were flat and resolved by projecting to
    /// the expected own emissions.
    pub epsf_flat: Vec<bool>,
    pub trace: Vec<TraceRow>,
}

impl EquilibriumSolution {
    pub fn residual_tolerance(&self) -> f64 {
        1e-6 * self.profit_scale
    }

    pub fn stationarity_tolerance(&self) -> f64 {
        1e-6 * self.gradient_scale
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    InvalidConfig(crate::params::ValidationReport),
    InfeasibleBounds,
    Degenerate(DegenerateTau),
    NonConvergence {
        residual: f64,
        kkt_residual: f64,
        best: Box<EquilibriumSolution>,
    },
}

impl core::fmt::Display for SolveError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SolveError::InvalidConfig(r) => write!(f, "invalid config: {:?}", r.violations),
            SolveError::InfeasibleBounds => write!(f, "no point satisfies the box constraints"),
            SolveError::Degenerate(d) => write!(f, "{d}"),
            SolveError::NonConvergence { residual, kkt_residual, .. } => write!(
                f,
                "residual floor not reached: complementarity {residual:.3e}, stationarity {kkt_residual:.3e}"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SolveError {}

impl From<DegenerateTau> for SolveError {
    fn from(d: DegenerateTau) -> Self {
        SolveError::Degenerate(d)
    }
}

// ---------------------------------------------------------------------------
// Internal solver machinery
// ---------------------------------------------------------------------------

/// Everything derived from one strategic point x = [qf.., epsf..].
struct Assembled {
    fd: FuturesDecision,
    spot: Vec<SpotOutcome>,
    /// profit[k][w]
    profit: Vec<Vec<f64>>,
    /// grad_qf[k][w]
    grad_qf: Vec<Vec<f64>>,
    /// grad_epsf[i][w]
    grad_epsf: Vec<Vec<f64>>,
}

struct Problem<'a> {
    config: &'a MarketConfig,
    scenarios: &'a [Scenario],
    n_conv: usize,
    n_res: usize,
    /// Strategic bounds, [qf.., epsf..].
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(config: &'a MarketConfig, scenarios: &'a ScenarioSet) -> Result<Self, SolveError> {
        let report = validate(config);
        if !report.is_valid() {
            return Err(SolveError::InvalidConfig(report));
        }
        let n_conv = config.conventional.len();
        let n_res = config.res.len();
        let mut lo = Vec::with_capacity(n_conv + n_res + n_conv);
        let mut hi = Vec::with_capacity(n_conv + n_res + n_conv);
        for g in &config.conventional {
            lo.push(g.qf_min);
            hi.push(g.qf_max);
        }
        for g in &config.res {
            lo.push(g.qf_min);
            hi.push(g.qf_max);
        }
        for g in &config.conventional {
            lo.push(g.epsf_min);
            hi.push(g.epsf_max);
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(SolveError::InfeasibleBounds);
        }
        Ok(Self { config, scenarios: &scenarios.scenarios, n_conv, n_res, lo, hi })
    }

    fn n_players(&self) -> usize {
        self.n_conv + self.n_res
    }

    fn n_vars(&self) -> usize {
        self.n_conv + self.n_res + self.n_conv
    }

    fn decision(&self, x: &[f64]) -> FuturesDecision {
        let n_players = self.n_players();
        let qf: Vec<f64> = x[..n_players].to_vec();
        let pf = futures_price(&qf, &self.config.demand);
        FuturesDecision { qf, epsf: x[n_players..].to_vec(), pf }
    }

    fn assemble(&self, x: &[f64]) -> Result<Assembled, DegenerateTau> {
        let fd = self.decision(x);
        let n_players = self.n_players();
        let mut spot = Vec::with_capacity(self.scenarios.len());
        let mut profit = alloc::vec![Vec::with_capacity(self.scenarios.len()); n_players];
        let mut grad_qf = alloc::vec![Vec::with_capacity(self.scenarios.len()); n_players];
        let mut grad_epsf = alloc::vec![Vec::with_capacity(self.scenarios.len()); self.n_conv];
        for s in self.scenarios {
            let out = spot_outcome(s, &fd, &self.config.conjecture)?;
            let pd = partials(s, &self.config.conjecture, &self.config.demand)?;
            let g = gradients_from_parts(s, &fd, &out, &pd, self.config.carbon.pf_co2);
            for i in 0..self.n_conv {
                profit[i].push(profit_conventional(
                    s,
                    i,
                    &fd,
                    self.config.carbon.pf_co2,
                    out.ps,
                    out.qs_conventional[i],
                    out.eps_s[i],
                ));
                grad_epsf[i].push(g.dpi_depsf[i]);
            }
            for j in 0..self.n_res {
                profit[self.n_conv + j].push(profit_res(s, j, &fd, self.n_conv, out.ps));
            }
            for k in 0..n_players {
                grad_qf[k].push(g.dpi_dqf[k]);
            }
            spot.push(out);
        }
        Ok(Assembled { fd, spot, profit, grad_qf, grad_epsf })
    }

    fn probs(&self) -> Vec<f64> {
        self.scenarios.iter().map(|s| s.prob).collect()
    }
}

/// Tail weights mu for one generator's profit row: assign the per-scenario
/// cap phi*sigma/(1-alpha) in ascending profit order until the total mass
/// phi is exhausted. Returns (VaR, mu).
fn tail_weights(profits: &[f64], probs: &[f64], phi: f64, alpha: f64) -> (f64, Vec<f64>) {
    let n = profits.len();
    let mut mu = alloc::vec![0.0; n];
    if phi == 0.0 {
        // Risk neutral: keep the inequality eta + Pi - xi >= 0 satisfiable.
        let min = profits.iter().copied().fold(f64::INFINITY, f64::min);
        return (min, mu);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        profits[a].partial_cmp(&profits[b]).unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut remaining = phi;
    let mut var = profits[order[n - 1]];
    for &w in &order {
        if remaining <= 1e-15 * phi {
            break;
        }
        let cap = phi * probs[w] / (1.0 - alpha);
        let take = if cap < remaining { cap } else { remaining };
        mu[w] = take;
        remaining -= take;
        var = profits[w];
    }
    (var, mu)
}

/// Scenario weights of the risk-adjusted gradient: (1-phi) sigma + mu.
fn risk_weights(profits: &[f64], probs: &[f64], phi: f64, alpha: f64) -> Vec<f64> {
    let (_, mu) = tail_weights(profits, probs, phi, alpha);
    probs
        .iter()
        .zip(&mu)
        .map(|(&s, &m)| (1.0 - phi) * s + m)
        .collect()
}

/// Risk-adjusted stationarity gradients for every strategic variable.
fn adjusted_gradients(p: &Problem, asm: &Assembled, phi: f64) -> Vec<f64> {
    let probs = p.probs();
    let alpha = p.config.risk.alpha;
    let mut g = Vec::with_capacity(p.n_vars());
    for k in 0..p.n_players() {
        let w = risk_weights(&asm.profit[k], &probs, phi, alpha);
        g.push(asm.grad_qf[k].iter().zip(&w).map(|(gi, wi)| gi * wi).sum());
    }
    for i in 0..p.n_conv {
        let w = risk_weights(&asm.profit[i], &probs, phi, alpha);
        g.push(asm.grad_epsf[i].iter().zip(&w).map(|(gi, wi)| gi * wi).sum());
    }
    g
}

fn gradient_at(p: &Problem, x: &[f64], v: usize, phi: f64) -> Result<f64, DegenerateTau> {
    let asm = p.assemble(x)?;
    Ok(adjusted_gradients(p, &asm, phi)[v])
}

/// Expected own emissions of conventional generator i at point x; the
/// projection target for a flat allowance direction.
fn expected_emissions(p: &Problem, asm: &Assembled, i: usize) -> f64 {
    p.scenarios
        .iter()
        .zip(&asm.spot)
        .map(|(s, out)| s.prob * s.intensity[i] * (asm.fd.qf[i] + out.qs_conventional[i]))
        .sum()
}

/// One-generator stationarity solve in a single coordinate: bound, root, or
/// flat. Returns (target, flat).
fn coordinate_solve(
    p: &Problem,
    x: &mut Vec<f64>,
    v: usize,
    phi: f64,
    flat_tol: f64,
) -> Result<(f64, bool), DegenerateTau> {
    let (lo, hi) = (p.lo[v], p.hi[v]);
    if hi - lo <= 0.0 {
        return Ok((lo, false));
    }
    let old = x[v];
    x[v] = lo;
    let g_lo = gradient_at(p, x, v, phi)?;
    x[v] = hi;
    let g_hi = gradient_at(p, x, v, phi)?;
    x[v] = old;
    if g_lo.abs() <= flat_tol && g_hi.abs() <= flat_tol {
        return Ok((old, true));
    }
    if g_lo <= 0.0 {
        return Ok((lo, false));
    }
    if g_hi >= 0.0 {
        return Ok((hi, false));
    }
    // Sign change: bisect the stationarity condition.
    let (mut a, mut b) = (lo, hi);
    for _ in 0..64 {
        let m = 0.5 * (a + b);
        x[v] = m;
        let g = gradient_at(p, x, v, phi)?;
        if g > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    x[v] = old;
    Ok((0.5 * (a + b), false))
}

const DIAGONALIZATION_SWEEPS: usize = 200;
const DIAGONALIZATION_DAMPING: f64 = 0.5;
const NEWTON_STEP_BUDGET: usize = 100;

/// Damped diagonalization: cyclic stationarity solves per strategic
/// variable until a fixed point. Returns (x, flat mask over epsf).
fn diagonalize(p: &Problem, phi: f64) -> Result<(Vec<f64>, Vec<bool>), SolveError> {
    let n = p.n_vars();
    let mut x: Vec<f64> = (0..n)
        .map(|v| {
            if p.hi[v].is_finite() && p.lo[v].is_finite() {
                0.5 * (p.lo[v] + p.hi[v])
            } else {
                0.0
            }
        })
        .collect();
    let mut flat = alloc::vec![false; p.n_conv];
    let flat_tol = 1e-9 * (1.0 + p.config.carbon.pf_co2.abs());
    let n_players = p.n_players();

    for _sweep in 0..DIAGONALIZATION_SWEEPS {
        let mut max_move = 0.0f64;
        for v in 0..n {
            let (target, is_flat) = coordinate_solve(p, &mut x, v, phi, flat_tol)?;
            let target = if is_flat && v >= n_players {
                let i = v - n_players;
                flat[i] = true;
                let asm = p.assemble(&x).map_err(SolveError::from)?;
                clamp(expected_emissions(p, &asm, i), p.lo[v], p.hi[v])
            } else {
                if v >= n_players {
                    flat[v - n_players] = false;
                }
                target
            };
            let step = DIAGONALIZATION_DAMPING * (target - x[v]);
            max_move = max_move.max(step.abs() / (1.0 + x[v].abs()));
            x[v] += step;
        }
        if max_move < 1e-10 {
            break;
        }
    }
    // Land flat coordinates exactly on their projection target.
    for i in 0..p.n_conv {
        if flat[i] {
            let v = n_players + i;
            let asm = p.assemble(&x).map_err(SolveError::from)?;
            x[v] = clamp(expected_emissions(p, &asm, i), p.lo[v], p.hi[v]);
        }
    }
    Ok((x, flat))
}

fn clamp(x: f64, lo: f64, hi: f64) -> f64 {
    if x < lo {
        lo
    } else if x > hi {
        hi
    } else {
        x
    }
}

/// Smoothed Fischer-Burmeister function and its partial derivatives.
fn fb(a: f64, b: f64, mu_s: f64) -> f64 {
    a + b - libm::sqrt(a * a + b * b + 2.0 * mu_s * mu_s)
}

fn fb_partials(a: f64, b: f64, mu_s: f64) -> (f64, f64) {
    let r = libm::sqrt(a * a + b * b + 2.0 * mu_s * mu_s);
    if r == 0.0 {
        return (1.0, 1.0);
    }
    (1.0 - a / r, 1.0 - b / r)
}

/// Dense LU solve with partial pivoting; returns false on singularity.
fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return false;
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let d = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= f * a[col * n + j];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for j in col + 1..n {
            s -= a[col * n + j] * b[j];
        }
        b[col] = s / a[col * n + col];
    }
    true
}

fn infinity_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Full residual/dual report for a candidate state.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// The complementarity-sum objective over all pairs.
    pub complementarity_sum: f64,
    /// Max absolute violation over the four stationarity families.
    pub max_stationarity: f64,
    pub stationarity_qf: Vec<f64>,
    pub stationarity_epsf: Vec<f64>,
}

/// Evaluates the stationarity families and complementarity slacks of a
/// candidate (futures decision, dual state) pair.
pub fn stationarity_residuals(
    config: &MarketConfig,
    scenarios: &ScenarioSet,
    fd: &FuturesDecision,
    duals: &DualState,
) -> Result<ResidualReport, SolveError> {
    let p = Problem::new(config, scenarios)?;
    let n_players = p.n_players();
    let mut x = Vec::with_capacity(p.n_vars());
    x.extend_from_slice(&fd.qf);
    x.extend_from_slice(&fd.epsf);
    let asm = p.assemble(&x)?;
    let phi = config.risk.phi;
    let alpha = config.risk.alpha;
    let probs = p.probs();

    let mut stationarity_qf = Vec::with_capacity(n_players);
    let mut stationarity_epsf = Vec::with_capacity(p.n_conv);
    let mut max_stat = 0.0f64;
    let mut comp = 0.0f64;

    for k in 0..n_players {
        let mu = &duals.mu[k];
        // (a): -(1-phi) sum sigma dPi - sum mu dPi - nu_min + nu_max = 0
        let weighted: f64 = asm.grad_qf[k]
            .iter()
            .zip(probs.iter().zip(mu))
            .map(|(g, (&s, &m))| ((1.0 - phi) * s + m) * g)
            .sum();
        let r = -weighted - duals.nu_min[k] + duals.nu_max[k];
        stationarity_qf.push(r);
        max_stat = max_stat.max(r.abs());

        // (c) and (d)
        let mut mu_sum = 0.0;
        for (w, (&m, &t)) in mu.iter().zip(&duals.theta[k]).enumerate() {
            let rc = phi * probs[w] / (1.0 - alpha) - m - t;
            max_stat = max_stat.max(rc.abs());
            mu_sum += m;
            let _ = w;
        }
        max_stat = max_stat.max((mu_sum - phi).abs());

        // (e) and (f) products
        for w in 0..probs.len() {
            let slack = duals.eta[k][w] + asm.profit[k][w] - duals.xi[k];
            comp += duals.mu[k][w] * slack;
            comp += duals.eta[k][w] * duals.theta[k][w];
        }
        // (g)-(h) products
        comp += (x[k] - p.lo[k]) * duals.nu_min[k];
        comp += (p.hi[k] - x[k]) * duals.nu_max[k];
    }
    for i in 0..p.n_conv {
        let mu = &duals.mu[i];
        let weighted: f64 = asm.grad_epsf[i]
            .iter()
            .zip(probs.iter().zip(mu))
            .map(|(g, (&s, &m))| ((1.0 - phi) * s + m) * g)
            .sum();
        let r = -weighted - duals.lambda_min[i] + duals.lambda_max[i];
        stationarity_epsf.push(r);
        max_stat = max_stat.max(r.abs());
        let v = n_players + i;
        comp += (x[v] - p.lo[v]) * duals.lambda_min[i];
        comp += (p.hi[v] - x[v]) * duals.lambda_max[i];
    }

    Ok(ResidualReport {
        complementarity_sum: comp,
        max_stationarity: max_stat,
        stationarity_qf,
        stationarity_epsf,
    })
}

/// Solves the joint risk-averse futures equilibrium.
pub fn solve_equilibrium(
    config: &MarketConfig,
    scenarios: &ScenarioSet,
) -> Result<EquilibriumSolution, SolveError> {
    solve_with_phi(config, scenarios, config.risk.phi)
}

/// Risk-neutral path: solves the expected-profit stationarity system with
/// box complementarity, without the VaR/tail machinery.
pub fn risk_neutral_equilibrium(
    config: &MarketConfig,
    scenarios: &ScenarioSet,
) -> Result<EquilibriumSolution, SolveError> {
    solve_with_phi(config, scenarios, 0.0)
}

fn solve_with_phi(
    config: &MarketConfig,
    scenarios: &ScenarioSet,
    phi: f64,
) -> Result<EquilibriumSolution, SolveError> {
    let p = Problem::new(config, scenarios)?;
    let (mut x, flat) = diagonalize(&p, phi)?;

    // Scales are pinned at the warm start.
    let warm = p.assemble(&x).map_err(SolveError::from)?;
    let profit_scale = warm
        .profit
        .iter()
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1.0);
    let gradient_scale = warm
        .grad_qf
        .iter()
        .chain(warm.grad_epsf.iter())
        .flat_map(|row| row.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1.0);

    let n_players = p.n_players();
    let active: Vec<usize> = (0..p.n_vars())
        .filter(|&v| {
            if p.hi[v] - p.lo[v] <= 0.0 {
                return false;
            }
            if v >= n_players && flat[v - n_players] {
                return false;
            }
            true
        })
        .collect();

    let n = active.len();
    let mut trace = Vec::new();
    let mut iterations = 0usize;

    // Multiplier state, initialized from the warm-start gradient signs.
    let mut z = alloc::vec![0.0; 3 * n];
    {
        let g = adjusted_gradients(&p, &warm, phi);
        for (a, &v) in active.iter().enumerate() {
            z[a] = x[v];
            if g[v] < 0.0 {
                z[n + a] = -g[v];
            } else {
                z[2 * n + a] = g[v];
            }
        }
    }

    let stat_tol = 1e-9 * gradient_scale.max(1.0);
    if n > 0 {
        'outer: for &mu_s in &[1e-2, 1e-4, 1e-6, 1e-8] {
            let mut r = newton_residual(&p, &active, &x, &z, mu_s, phi)?;
            let mut norm = infinity_norm(&r);
            for _ in 0..NEWTON_STEP_BUDGET / 4 {
                if iterations >= NEWTON_STEP_BUDGET {
                    break 'outer;
                }
                if norm <= stat_tol.max(mu_s * 1e-3) {
                    break;
                }
                iterations += 1;
                let mut jac = newton_jacobian(&p, &active, &x, &z, mu_s, phi)?;
                let mut step = r.iter().map(|v| -v).collect::<Vec<f64>>();
                if !solve_linear(&mut jac, &mut step, 3 * n) {
                    break;
                }
                // Backtracking line search on the residual norm.
                let mut t = 1.0f64;
                let mut accepted = false;
                for _ in 0..40 {
                    let mut z_new = z.clone();
                    for idx in 0..3 * n {
                        z_new[idx] += t * step[idx];
                    }
                    for (a, &v) in active.iter().enumerate() {
                        z_new[a] = clamp(z_new[a], p.lo[v], p.hi[v]);
                        z_new[n + a] = z_new[n + a].max(0.0);
                        z_new[2 * n + a] = z_new[2 * n + a].max(0.0);
                    }
                    match newton_residual(&p, &active, &x, &z_new, mu_s, phi) {
                        Ok(r_new) => {
                            let norm_new = infinity_norm(&r_new);
                            if norm_new < norm * (1.0 - 1e-4 * t) || norm_new < stat_tol {
                                z = z_new;
                                r = r_new;
                                norm = norm_new;
                                accepted = true;
                                trace.push(TraceRow { iteration: iterations, residual: norm, step: t });
                                break;
                            }
                        }
                        Err(_) => {}
                    }
                    t *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
        }
        for (a, &v) in active.iter().enumerate() {
            x[v] = clamp(z[a], p.lo[v], p.hi[v]);
        }
    }

    // The CVaR objective is piecewise smooth: equilibria sit on kinks where
    // the tail membership changes and the smoothed Newton stalls. Polish by
    // maximizing each player's own objective directly, including a slide
    // along the kink ridge that coordinate searches cannot traverse.
    if phi > 0.0 {
        let tie_tol = 1e-5 * profit_scale;
        let gtol = 1e-8 * gradient_scale;
        polish_nonsmooth(&p, &mut x, &flat, phi, tie_tol, gtol)?;
    }

    // Re-project flat allowance coordinates at the refined quantities.
    for i in 0..p.n_conv {
        if flat[i] {
            let v = n_players + i;
            let asm = p.assemble(&x).map_err(SolveError::from)?;
            x[v] = clamp(expected_emissions(&p, &asm, i), p.lo[v], p.hi[v]);
        }
    }

    // Snap near-bound coordinates so the bound complementarity products
    // vanish identically.
    for v in 0..p.n_vars() {
        let snap = 1e-6 * (p.hi[v] - p.lo[v]);
        if x[v] - p.lo[v] <= snap {
            x[v] = p.lo[v];
        } else if p.hi[v] - x[v] <= snap {
            x[v] = p.hi[v];
        }
    }
    let _ = z;

    let solution =
        build_solution(&p, &x, flat, phi, profit_scale, gradient_scale, iterations, trace)?;

    if solution.residual <= solution.residual_tolerance()
        && solution.kkt_residual <= solution.stationarity_tolerance()
    {
        Ok(solution)
    } else {
        Err(SolveError::NonConvergence {
            residual: solution.residual,
            kkt_residual: solution.kkt_residual,
            best: Box::new(solution),
        })
    }
}

fn newton_residual(
    p: &Problem,
    active: &[usize],
    x_full: &[f64],
    z: &[f64],
    mu_s: f64,
    phi: f64,
) -> Result<Vec<f64>, SolveError> {
    let n = active.len();
    let mut x = x_full.to_vec();
    for (a, &v) in active.iter().enumerate() {
        x[v] = z[a];
    }
    let asm = p.assemble(&x).map_err(SolveError::from)?;
    let g = adjusted_gradients(p, &asm, phi);
    let mut r = alloc::vec![0.0; 3 * n];
    for (a, &v) in active.iter().enumerate() {
        let (nu_min, nu_max) = (z[n + a], z[2 * n + a]);
        r[a] = -g[v] - nu_min + nu_max;
        r[n + a] = fb(z[a] - p.lo[v], nu_min, mu_s);
        r[2 * n + a] = fb(p.hi[v] - z[a], nu_max, mu_s);
    }
    Ok(r)
}

fn newton_jacobian(
    p: &Problem,
    active: &[usize],
    x_full: &[f64],
    z: &[f64],
    mu_s: f64,
    phi: f64,
) -> Result<Vec<f64>, SolveError> {
    let n = active.len();
    let dim = 3 * n;
    let mut jac = alloc::vec![0.0; dim * dim];

    // dG/dx by central differences over the active coordinates.
    let mut x = x_full.to_vec();
    for (a, &v) in active.iter().enumerate() {
        x[v] = z[a];
    }
    for (col, &vc) in active.iter().enumerate() {
        let h = (1e-4 * (p.hi[vc] - p.lo[vc])).max(1e-6);
        let mut x_hi = x.clone();
        x_hi[vc] += h;
        let g_hi = {
            let asm = p.assemble(&x_hi).map_err(SolveError::from)?;
            adjusted_gradients(p, &asm, phi)
        };
        let mut x_lo = x.clone();
        x_lo[vc] -= h;
        let g_lo = {
            let asm = p.assemble(&x_lo).map_err(SolveError::from)?;
            adjusted_gradients(p, &asm, phi)
        };
        for (row, &vr) in active.iter().enumerate() {
            jac[row * dim + col] = -(g_hi[vr] - g_lo[vr]) / (2.0 * h);
        }
    }
    for (a, &v) in active.iter().enumerate() {
        // Stationarity row: multipliers enter linearly.
        jac[a * dim + (n + a)] = -1.0;
        jac[a * dim + (2 * n + a)] = 1.0;
        // FB rows.
        let (da_lo, db_lo) = fb_partials(z[a] - p.lo[v], z[n + a], mu_s);
        jac[(n + a) * dim + a] = da_lo;
        jac[(n + a) * dim + (n + a)] = db_lo;
        let (da_hi, db_hi) = fb_partials(p.hi[v] - z[a], z[2 * n + a], mu_s);
        jac[(2 * n + a) * dim + a] = -da_hi;
        jac[(2 * n + a) * dim + (2 * n + a)] = db_hi;
    }
    Ok(jac)
}

/// Player k's perceived risk-adjusted objective along the line x + t d,
/// where d is sparse over k's own strategic coordinates.
///
/// Under the conjectured market response, the per-scenario own gradient is
/// an affine function of t, so two evaluations pin an exact quadratic model
/// of the perceived profit in every scenario. The perceived objective is
/// the risk-adjusted combination of these concave quadratics and is itself
/// concave in t, which makes golden-section maximization sound. For
/// Cournot conjectures the perceived profit coincides with the actual one.
struct PerceivedLine {
    /// Actual profits at t = 0.
    base: Vec<f64>,
    /// Directional conjectured gradient per scenario at t = 0.
    g0: Vec<f64>,
    /// Constant second derivative of the perceived profit along the line.
    curv: Vec<f64>,
    probs: Vec<f64>,
    alpha: f64,
}

impl PerceivedLine {
    /// `d` lists (strategic coordinate, direction component); `span` is a
    /// second sample offset used to identify the gradient slope (any
    /// nonzero value inside the move range works; zero yields a linear
    /// model).
    fn build(
        p: &Problem,
        x: &[f64],
        k: usize,
        d: &[(usize, f64)],
        span: f64,
    ) -> Result<Self, SolveError> {
        let directional = |asm: &Assembled| -> Vec<f64> {
            let n = p.scenarios.len();
            let mut g = alloc::vec![0.0; n];
            for &(v, c) in d {
                let row: &[f64] = if v < p.n_players() {
                    debug_assert_eq!(v, k);
                    &asm.grad_qf[k]
                } else {
                    debug_assert_eq!(v - p.n_players(), k);
                    &asm.grad_epsf[k]
                };
                for (gw, &rw) in g.iter_mut().zip(row) {
                    *gw += c * rw;
                }
            }
            g
        };
        let asm0 = p.assemble(x).map_err(SolveError::from)?;
        let g0 = directional(&asm0);
        let base = asm0.profit[k].clone();
        let curv = if span.abs() > 0.0 {
            let mut x1 = x.to_vec();
            for &(v, c) in d {
                x1[v] = clamp(x[v] + span * c, p.lo[v], p.hi[v]);
            }
            let asm1 = p.assemble(&x1).map_err(SolveError::from)?;
            let g1 = directional(&asm1);
            g0.iter().zip(&g1).map(|(&a, &b)| (b - a) / span).collect()
        } else {
            alloc::vec![0.0; g0.len()]
        };
        Ok(Self { base, g0, curv, probs: p.probs(), alpha: p.config.risk.alpha })
    }

    fn value(&self, t: f64, phi: f64) -> Result<f64, SolveError> {
        let profits: Vec<f64> = self
            .base
            .iter()
            .zip(&self.g0)
            .zip(&self.curv)
            .map(|((&b, &g), &c)| b + g * t + 0.5 * c * t * t)
            .collect();
        let expected: f64 = profits.iter().zip(&self.probs).map(|(pi, s)| pi * s).sum();
        if phi == 0.0 {
            return Ok(expected);
        }
        let (c, _) =
            cvar(&profits, &self.probs, self.alpha).map_err(|_| SolveError::InfeasibleBounds)?;
        Ok(crate::payoff::objective(expected, c, phi))
    }
}

/// Maximizes player k's perceived objective along x + t d over t in
/// [t_lo, t_hi] and applies the move. Returns the accepted t.
fn perceived_line_step(
    p: &Problem,
    x: &mut [f64],
    k: usize,
    d: &[(usize, f64)],
    t_lo: f64,
    t_hi: f64,
    phi: f64,
) -> Result<f64, SolveError> {
    if !(t_lo < t_hi) {
        return Ok(0.0);
    }
    // Identify the gradient slope at the far end of the move range.
    let span = if t_hi.abs() >= t_lo.abs() { t_hi } else { t_lo };
    let line = PerceivedLine::build(p, x, k, d, span)?;
    let best_t = maximize_1d(t_lo, t_hi, |t| line.value(t, phi))?;
    // Keep the incumbent on perceived ties to avoid limit cycles.
    if line.value(best_t, phi)? <= line.value(0.0, phi)? {
        return Ok(0.0);
    }
    for &(v, c) in d {
        x[v] = clamp(x[v] + best_t * c, p.lo[v], p.hi[v]);
    }
    Ok(best_t)
}

/// Slides player k along the local kink ridge: the manifold where the two
/// profit realizations adjacent to the VaR stay tied. Coordinate searches
/// stall on this ridge because the objective is nonsmooth across it.
fn ridge_slide(p: &Problem, x: &mut [f64], k: usize, phi: f64) -> Result<bool, SolveError> {
    let n_players = p.n_players();
    let vq = k;
    let ve = n_players + k;
    let probs = p.probs();
    let profits_at = |x: &[f64]| -> Result<Vec<f64>, SolveError> {
        let fd = p.decision(x);
        let mut out = Vec::with_capacity(p.scenarios.len());
        for s in p.scenarios {
            let o = spot_outcome(s, &fd, &p.config.conjecture).map_err(SolveError::from)?;
            out.push(profit_conventional(
                s,
                k,
                &fd,
                p.config.carbon.pf_co2,
                o.ps,
                o.qs_conventional[k],
                o.eps_s[k],
            ));
        }
        Ok(out)
    };
    let profits = profits_at(x)?;
    let (_, var) = cvar(&profits, &probs, p.config.risk.alpha)
        .map_err(|_| SolveError::InfeasibleBounds)?;
    // The marginal scenario and its nearest neighbor in profit.
    let mut a = usize::MAX;
    for (w, &pi) in profits.iter().enumerate() {
        if (pi - var).abs() < 1e-9 * (1.0 + var.abs()) {
            a = w;
            break;
        }
    }
    if a == usize::MAX {
        return Ok(false);
    }
    let mut b = usize::MAX;
    let mut best_gap = f64::INFINITY;
    for (w, &pi) in profits.iter().enumerate() {
        if w == a {
            continue;
        }
        let gap = (pi - profits[a]).abs();
        if gap < best_gap {
            best_gap = gap;
            b = w;
        }
    }
    if b == usize::MAX || best_gap > 1e-3 * (1.0 + var.abs()) {
        return Ok(false);
    }
    // Tangent of the crossing manifold Pi_a - Pi_b = 0 in the (qF, epsF)
    // plane. The epsF part is analytic; the qF part by central difference.
    let de_coef = p.scenarios[a].ps_co2 - p.scenarios[b].ps_co2;
    let h = 1e-3 * (p.hi[vq] - p.lo[vq]).max(1.0);
    let mut xp = x.to_vec();
    xp[vq] += h;
    let up = profits_at(&xp)?;
    xp[vq] -= 2.0 * h;
    let dn = profits_at(&xp)?;
    let dq_coef = ((up[a] - up[b]) - (dn[a] - dn[b])) / (2.0 * h);
    let norm = libm::sqrt(dq_coef * dq_coef + de_coef * de_coef);
    if norm < 1e-12 {
        return Ok(false);
    }
    let dir = [de_coef / norm, -dq_coef / norm];
    // Largest |t| keeping both coordinates inside their boxes.
    let mut t_lo = f64::NEG_INFINITY;
    let mut t_hi = f64::INFINITY;
    for (d, &v) in dir.iter().zip([vq, ve].iter()) {
        if d.abs() < 1e-15 {
            continue;
        }
        let (a_t, b_t) = ((p.lo[v] - x[v]) / d, (p.hi[v] - x[v]) / d);
        t_lo = t_lo.max(a_t.min(b_t));
        t_hi = t_hi.min(a_t.max(b_t));
    }
    if !(t_lo < t_hi) {
        return Ok(false);
    }
    let d = [(vq, dir[0]), (ve, dir[1])];
    let best_t = perceived_line_step(p, x, k, &d, t_lo, t_hi, phi)?;
    Ok(best_t.abs() >= 1e-12)
}

/// Steepest-ascent step on player k's nonsmooth objective. When no
/// feasible tail-mass split zeroes the player's stationarity, the
/// remaining residual of `own_duals` is minus the minimal-norm
/// subgradient, so its negation is an ascent direction; a perceived-line
/// search along it escapes kink vertices that coordinate and ridge
/// searches cannot leave. Returns the step length taken.
fn subgradient_step(
    p: &Problem,
    x: &mut [f64],
    k: usize,
    phi: f64,
    tie_tol: f64,
    gtol: f64,
) -> Result<f64, SolveError> {
    let n_players = p.n_players();
    let asm = p.assemble(x).map_err(SolveError::from)?;
    let (_, _, residuals) = own_duals(p, &asm, k, phi, tie_tol);
    let own_vars: &[usize] = if k < p.n_conv { &[k, n_players + k] } else { &[k] };
    let mut d: Vec<(usize, f64)> = Vec::with_capacity(2);
    for (&v, &r) in own_vars.iter().zip(&residuals) {
        // Ascent component is -residual; drop moves blocked by a bound.
        let mut c = -r;
        if (x[v] <= p.lo[v] && c < 0.0) || (x[v] >= p.hi[v] && c > 0.0) {
            c = 0.0;
        }
        d.push((v, c));
    }
    let norm = libm::sqrt(d.iter().map(|(_, c)| c * c).sum::<f64>());
    if norm <= gtol {
        return Ok(0.0);
    }
    for (_, c) in d.iter_mut() {
        *c /= norm;
    }
    // Longest feasible step inside the box along the ascent direction.
    let mut t_hi = f64::INFINITY;
    for &(v, c) in &d {
        if c > 0.0 {
            t_hi = t_hi.min((p.hi[v] - x[v]) / c);
        } else if c < 0.0 {
            t_hi = t_hi.min((p.lo[v] - x[v]) / c);
        }
    }
    if !(t_hi > 0.0) || !t_hi.is_finite() {
        return Ok(0.0);
    }
    perceived_line_step(p, x, k, &d, 0.0, t_hi, phi)
}

/// Cyclic exact best responses with ridge slides and min-norm subgradient
/// steps until a fixed point.
fn polish_nonsmooth(
    p: &Problem,
    x: &mut Vec<f64>,
    flat: &[bool],
    phi: f64,
    tie_tol: f64,
    gtol: f64,
) -> Result<(), SolveError> {
    let n_players = p.n_players();
    for _sweep in 0..40 {
        let mut max_move = 0.0f64;
        for k in 0..n_players {
            let has_eps = k < p.n_conv && !flat[k] && p.hi[n_players + k] > p.lo[n_players + k];
            let before_q = x[k];
            let before_e = if k < p.n_conv { x[n_players + k] } else { 0.0 };
            for _round in 0..3 {
                if p.hi[k] > p.lo[k] {
                    let d = [(k, 1.0)];
                    let (t_lo, t_hi) = (p.lo[k] - x[k], p.hi[k] - x[k]);
                    perceived_line_step(p, x, k, &d, t_lo, t_hi, phi)?;
                }
                if has_eps {
                    let ve = n_players + k;
                    let d = [(ve, 1.0)];
                    let (t_lo, t_hi) = (p.lo[ve] - x[ve], p.hi[ve] - x[ve]);
                    perceived_line_step(p, x, k, &d, t_lo, t_hi, phi)?;
                    ridge_slide(p, x, k, phi)?;
                }
            }
            for _ in 0..20 {
                if subgradient_step(p, x, k, phi, tie_tol, gtol)?.abs() < 1e-12 {
                    break;
                }
            }
            max_move = max_move.max((x[k] - before_q).abs() / (1.0 + before_q.abs()));
            if k < p.n_conv {
                let after_e = x[n_players + k];
                max_move = max_move.max((after_e - before_e).abs() / (1.0 + before_e.abs()));
            }
        }
        if max_move < 1e-11 {
            break;
        }
    }
    Ok(())
}

/// Redistributes tail mass among scenarios tied at the VaR (within
/// `tie_tol`) to minimize the given stationarity residuals. The
/// complementarity system leaves exactly this freedom: a tied scenario has
/// eta = 0 and zero slack, so its mu may take any value in [0, cap].
/// Pairwise exact-line-search coordinate descent on the convex quadratic.
fn redistribute_ties(
    profits: &[f64],
    probs: &[f64],
    phi: f64,
    alpha: f64,
    var: f64,
    mu: &mut [f64],
    own_grads: &[&[f64]],
    residuals: &mut [f64],
    tie_tol: f64,
) {
    if phi == 0.0 || own_grads.is_empty() {
        return;
    }
    let ties: Vec<usize> = (0..profits.len())
        .filter(|&w| (profits[w] - var).abs() <= tie_tol)
        .collect();
    if ties.len() < 2 {
        return;
    }
    for _ in 0..200 {
        let mut improved = false;
        for (ai, &wa) in ties.iter().enumerate() {
            for &wb in &ties[ai + 1..] {
                // Transfer t from wa to wb; residual_v(t) = r_v + t * d_v.
                let mut num = 0.0;
                let mut den = 0.0;
                let mut d = alloc::vec![0.0; own_grads.len()];
                for (v, g) in own_grads.iter().enumerate() {
                    // residual = -sum w g, so moving mass changes it by
                    // t * (g[wa] - g[wb]).
                    d[v] = g[wa] - g[wb];
                    num += residuals[v] * d[v];
                    den += d[v] * d[v];
                }
                if den <= 0.0 {
                    continue;
                }
                let cap_b = phi * probs[wb] / (1.0 - alpha);
                let cap_a = phi * probs[wa] / (1.0 - alpha);
                let t = clamp(-num / den, -(cap_a - mu[wa]).min(mu[wb]), mu[wa].min(cap_b - mu[wb]));
                if t.abs() > 1e-18 {
                    mu[wa] -= t;
                    mu[wb] += t;
                    for (v, r) in residuals.iter_mut().enumerate() {
                        *r += t * d[v];
                    }
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
}

/// Tail-rule weights for player k with tie mass redistributed to minimize
/// the player's own stationarity residuals. The minimized residual vector
/// is (minus) the minimal-norm element of the player's risk-adjusted
/// subdifferential over the kink freedom. Returns (VaR, mu, residuals)
/// with residuals ordered [qf, epsf] (epsf only for conventional players).
fn own_duals(
    p: &Problem,
    asm: &Assembled,
    k: usize,
    phi: f64,
    tie_tol: f64,
) -> (f64, Vec<f64>, Vec<f64>) {
    let probs = p.probs();
    let alpha = p.config.risk.alpha;
    let (var, mut mu_k) = tail_weights(&asm.profit[k], &probs, phi, alpha);
    let own_grads: Vec<&[f64]> = if k < p.n_conv {
        alloc::vec![asm.grad_qf[k].as_slice(), asm.grad_epsf[k].as_slice()]
    } else {
        alloc::vec![asm.grad_qf[k].as_slice()]
    };
    let mut residuals: Vec<f64> = own_grads
        .iter()
        .map(|g| {
            -g.iter()
                .zip(probs.iter().zip(&mu_k))
                .map(|(gi, (&s, &m))| ((1.0 - phi) * s + m) * gi)
                .sum::<f64>()
        })
        .collect();
    redistribute_ties(
        &asm.profit[k],
        &probs,
        phi,
        alpha,
        var,
        &mut mu_k,
        &own_grads,
        &mut residuals,
        tie_tol,
    );
    (var, mu_k, residuals)
}

#[allow(clippy::too_many_arguments)]
fn build_solution(
    p: &Problem,
    x: &[f64],
    flat: Vec<bool>,
    phi: f64,
    profit_scale: f64,
    gradient_scale: f64,
    iterations: usize,
    trace: Vec<TraceRow>,
) -> Result<EquilibriumSolution, SolveError> {
    let asm = p.assemble(x).map_err(SolveError::from)?;
    let probs = p.probs();
    let alpha = p.config.risk.alpha;
    let n_players = p.n_players();
    let tie_tol = 1e-5 * profit_scale;

    let mut xi = Vec::with_capacity(n_players);
    let mut eta = Vec::with_capacity(n_players);
    let mut mu = Vec::with_capacity(n_players);
    let mut theta = Vec::with_capacity(n_players);
    let mut nu_min = alloc::vec![0.0; n_players];
    let mut nu_max = alloc::vec![0.0; n_players];
    let mut lambda_min = alloc::vec![0.0; p.n_conv];
    let mut lambda_max = alloc::vec![0.0; p.n_conv];
    for k in 0..n_players {
        let (var, mu_k, residuals) = own_duals(p, &asm, k, phi, tie_tol);

        // Bound multipliers absorb the residual at active bounds; tied at
        // exact bound values thanks to the snapping above.
        let assign = |resid: f64, at_lo: bool, at_hi: bool, lo_m: &mut f64, hi_m: &mut f64| {
            // Stationarity is -G - nu_min + nu_max = 0, with resid = -G here.
            if at_lo && resid > 0.0 {
                *lo_m = resid;
            } else if at_hi && resid < 0.0 {
                *hi_m = -resid;
            }
        };
        assign(
            residuals[0],
            x[k] == p.lo[k],
            x[k] == p.hi[k],
            &mut nu_min[k],
            &mut nu_max[k],
        );
        if k < p.n_conv {
            let v = n_players + k;
            assign(
                residuals[1],
                x[v] == p.lo[v],
                x[v] == p.hi[v],
                &mut lambda_min[k],
                &mut lambda_max[k],
            );
        }

        let eta_k: Vec<f64> = asm.profit[k]
            .iter()
            .map(|&pi| if var > pi { var - pi } else { 0.0 })
            .collect();
        let theta_k: Vec<f64> = probs
            .iter()
            .zip(&mu_k)
            .map(|(&s, &m)| (phi * s / (1.0 - alpha) - m).max(0.0))
            .collect();
        xi.push(var);
        eta.push(eta_k);
        mu.push(mu_k);
        theta.push(theta_k);
    }

    let duals = DualState { xi, eta, mu, theta, nu_min, nu_max, lambda_min, lambda_max };
    let panel = ProfitPanel::build(asm.profit.clone(), &probs, alpha)
        .expect("scenario set validated nonempty");
    let scenario_set = ScenarioSet { scenarios: p.scenarios.to_vec(), seed: p.config.seed };
    let report = stationarity_residuals(p.config_ref(), &scenario_set, &asm.fd, &duals)?;

    Ok(EquilibriumSolution {
        fd: asm.fd,
        spot: asm.spot,
        duals,
        panel,
        residual: report.complementarity_sum,
        kkt_residual: report.max_stationarity,
        profit_scale,
        gradient_scale,
        iterations,
        epsf_flat: flat,
        trace,
    })
}

impl Problem<'_> {
    fn config_ref(&self) -> &MarketConfig {
        self.config
    }
}

/// Numerically maximizes generator k's own objective over its box, holding
/// every other generator's futures decision fixed. Grid bracketing followed
/// by golden-section to 1e-6 of the box width, with coordinate rounds over
/// (qF, epsF) for conventional generators.
pub fn best_response(
    k: usize,
    fd_others: &FuturesDecision,
    scenarios: &ScenarioSet,
    config: &MarketConfig,
) -> Result<(f64, f64, f64), SolveError> {
    let p = Problem::new(config, scenarios)?;
    let n_players = p.n_players();
    let mut fd = fd_others.clone();

    let value_of = |fd: &FuturesDecision| -> Result<f64, SolveError> {
        let mut fd = fd.clone();
        fd.pf = futures_price(&fd.qf, &config.demand);
        let probs = p.probs();
        let mut profits = Vec::with_capacity(p.scenarios.len());
        for s in p.scenarios {
            let out = spot_outcome(s, &fd, &config.conjecture).map_err(SolveError::from)?;
            let pi = if k < p.n_conv {
                profit_conventional(
                    s,
                    k,
                    &fd,
                    config.carbon.pf_co2,
                    out.ps,
                    out.qs_conventional[k],
                    out.eps_s[k],
                )
            } else {
                profit_res(s, k - p.n_conv, &fd, p.n_conv, out.ps)
            };
            profits.push(pi);
        }
        let expected: f64 = profits.iter().zip(&probs).map(|(pi, s)| pi * s).sum();
        let phi = config.risk.phi;
        if phi == 0.0 {
            return Ok(expected);
        }
        let (c, _) = cvar(&profits, &probs, config.risk.alpha)
            .map_err(|_| SolveError::InfeasibleBounds)?;
        Ok(crate::payoff::objective(expected, c, phi))
    };

    let qf_bounds = (p.lo[k], p.hi[k]);
    let eps_bounds = if k < p.n_conv {
        Some((p.lo[n_players + k], p.hi[n_players + k]))
    } else {
        None
    };

    let rounds = if eps_bounds.is_some() { 3 } else { 1 };
    for _ in 0..rounds {
        let best_qf = maximize_1d(qf_bounds.0, qf_bounds.1, |q| {
            let mut f = fd.clone();
            f.qf[k] = q;
            value_of(&f)
        })?;
        fd.qf[k] = best_qf;
        if let Some((lo, hi)) = eps_bounds {
            let best_eps = maximize_1d(lo, hi, |e| {
                let mut f = fd.clone();
                f.epsf[k] = e;
                value_of(&f)
            })?;
            fd.epsf[k] = best_eps;
        }
    }
    let value = {
        let mut f = fd.clone();
        f.pf = futures_price(&f.qf, &config.demand);
        value_of(&f)?
    };
    let eps = if k < p.n_conv { fd.epsf[k] } else { 0.0 };
    Ok((fd.qf[k], eps, value))
}

/// Grid bracketing plus golden-section refinement of a unimodal objective.
fn maximize_1d<F>(lo: f64, hi: f64, mut f: F) -> Result<f64, SolveError>
where
    F: FnMut(f64) -> Result<f64, SolveError>,
{
    if hi <= lo {
        return Ok(lo);
    }
    const GRID: usize = 48;
    let width = hi - lo;
    let mut best_i = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..=GRID {
        let q = lo + width * i as f64 / GRID as f64;
        let v = f(q)?;
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let mut a = lo + width * best_i.saturating_sub(1) as f64 / GRID as f64;
    let mut b = lo + width * (best_i + 1).min(GRID) as f64 / GRID as f64;
    let inv_phi = 0.618_033_988_749_894_9;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd_val = f(d)?;
    while (b - a).abs() > 1e-9 * width.max(1e-12) {
        if fc > fd_val {
            b = d;
            d = c;
            fd_val = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd_val;
            d = a + inv_phi * (b - a);
            fd_val = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}
