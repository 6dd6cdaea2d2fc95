//! Profit evaluation for both technologies and the CVaR machinery of the
//! risk-adjusted objective.

use alloc::vec::Vec;

use crate::scenario::Scenario;

/// First-stage decisions: futures quantities for every generator (I then J
/// order), allowance positions for conventional generators, and the futures
/// price. `pf` is consistent when it equals the inverse futures demand
/// evaluated at the committed quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct FuturesDecision {
    /// Futures quantities per generator k in I+J order [MWh].
    pub qf: Vec<f64>,
    /// Futures allowance positions per conventional generator [tCO2].
    pub epsf: Vec<f64>,
    /// Futures electricity price [EUR/MWh].
    pub pf: f64,
}

impl FuturesDecision {
    pub fn zero(n_conventional: usize, n_res: usize) -> Self {
        Self {
            qf: alloc::vec![0.0; n_conventional + n_res],
            epsf: alloc::vec![0.0; n_conventional],
            pf: 0.0,
        }
    }
}

/// Per-generator profit distribution with its expectation and lower-tail
/// risk statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfitPanel {
    /// profit[k][w] for generator k (I then J order) and scenario w [EUR].
    pub profit: Vec<Vec<f64>>,
    pub expected: Vec<f64>,
    pub cvar: Vec<f64>,
    /// The VaR (maximizing quantile) backing each CVaR value.
    pub var: Vec<f64>,
}

impl ProfitPanel {
    pub fn build(profit: Vec<Vec<f64>>, probs: &[f64], alpha: f64) -> Result<Self, RiskError> {
        let mut expected = Vec::with_capacity(profit.len());
        let mut cvars = Vec::with_capacity(profit.len());
        let mut vars = Vec::with_capacity(profit.len());
        for row in &profit {
            let e: f64 = row.iter().zip(probs).map(|(p, s)| p * s).sum();
            let (c, v) = cvar(row, probs, alpha)?;
            expected.push(e);
            cvars.push(c);
            vars.push(v);
        }
        Ok(Self { profit, expected, cvar: cvars, var: vars })
    }
}

/// CVaR failure: empty input or a tail too thin for the scenario count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskError {
    EmptyScenarioSet,
    TailTooThin,
}

impl core::fmt::Display for RiskError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            RiskError::EmptyScenarioSet => write!(f, "CVaR of an empty scenario set"),
            RiskError::TailTooThin => write!(f, "(1-alpha)|Omega| < 1: tail holds no scenario"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for RiskError {}

/// Profit of conventional generator `i` under scenario `s`: futures and
/// spot revenue, quadratic production cost, the futures allowance purchase
/// at `pf_co2`, and settlement of the spot imbalance `eps_s_i` at the spot
/// CO2 price (negative imbalance sells the surplus).
pub fn profit_conventional(
    s: &Scenario,
    i: usize,
    fd: &FuturesDecision,
    pf_co2: f64,
    ps: f64,
    qs_i: f64,
    eps_s_i: f64,
) -> f64 {
    let q = fd.qf[i] + qs_i;
    let cost = s.fixed_cost[i] + s.linear_cost[i] * q + 0.5 * s.quad_cost[i] * q * q;
    fd.pf * fd.qf[i] + ps * qs_i - cost - pf_co2 * fd.epsf[i] - s.ps_co2 * eps_s_i
}

/// Profit of RES generator `j` (index into the RES list): futures premium
/// plus spot revenue on the whole realized output, at zero cost.
pub fn profit_res(s: &Scenario, j: usize, fd: &FuturesDecision, n_conventional: usize, ps: f64) -> f64 {
    let qf_j = fd.qf[n_conventional + j];
    (fd.pf - ps) * qf_j + ps * s.res_output[j]
}

/// Lower-tail CVaR at level `alpha`, computed exactly by sorting.
///
/// Returns `(cvar, var)` where `var` is the smallest maximizer of
/// `xi - 1/(1-alpha) * sum_w sigma_w * max(xi - profit_w, 0)`.
pub fn cvar(profits: &[f64], probs: &[f64], alpha: f64) -> Result<(f64, f64), RiskError> {
    if profits.is_empty() {
        return Err(RiskError::EmptyScenarioSet);
    }
    let tail = 1.0 - alpha;
    if tail * (profits.len() as f64) < 1.0 - 1e-12 {
        return Err(RiskError::TailTooThin);
    }
    let mut order: Vec<usize> = (0..profits.len()).collect();
    order.sort_by(|&a, &b| profits[a].partial_cmp(&profits[b]).unwrap_or(core::cmp::Ordering::Equal));

    // The optimum is attained at a scenario profit value: take the smallest
    // xi whose cumulative probability reaches the tail mass.
    let mut cum = 0.0;
    let mut var = profits[order[profits.len() - 1]];
    for &w in &order {
        cum += probs[w];
        if cum >= tail - 1e-15 {
            var = profits[w];
            break;
        }
    }
    let shortfall: f64 = profits
        .iter()
        .zip(probs)
        .map(|(&p, &s)| if var > p { s * (var - p) } else { 0.0 })
        .sum();
    Ok((var - shortfall / tail, var))
}

/// The risk-adjusted objective: `(1-phi) * expected + phi * cvar`.
pub fn objective(expected: f64, cvar: f64, phi: f64) -> f64 {
    (1.0 - phi) * expected + phi * cvar
}
