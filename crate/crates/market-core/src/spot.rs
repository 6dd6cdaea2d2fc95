//! Closed-form second-stage equilibrium given futures commitments, and the
//! standalone spot-only market.

use alloc::vec::Vec;

use crate::params::CompetitionConjecture;
use crate::payoff::FuturesDecision;
use crate::scenario::{effective_intercept, Scenario};

/// Per-scenario spot equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotOutcome {
    /// Equilibrium spot price [EUR/MWh].
    pub ps: f64,
    /// Conventional spot quantities [MWh]; negative values are short sales.
    pub qs_conventional: Vec<f64>,
    /// RES spot quantities: realized output minus futures commitment [MWh].
    pub qs_res: Vec<f64>,
    /// Allowance imbalance per conventional generator [tCO2];
    /// positive = shortage bought at the spot CO2 price.
    pub eps_s: Vec<f64>,
    /// tau_i = 1 / (beta_s (1 + delta_i) + c_i) [MWh^2/EUR].
    pub tau: Vec<f64>,
    /// phi = 1 / (1 + beta_s sum_i tau_i), in (0, 1).
    pub phi_factor: f64,
}

/// A conjecture/cost combination with a nonpositive tau denominator; the
/// closed forms divide by it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenerateTau {
    pub generator: usize,
    pub denominator: f64,
}

impl core::fmt::Display for DegenerateTau {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "degenerate tau denominator {} for generator {}",
            self.denominator, self.generator
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DegenerateTau {}

pub(crate) fn competition_factors(
    s: &Scenario,
    conj: &CompetitionConjecture,
) -> Result<(Vec<f64>, f64), DegenerateTau> {
    let mut tau = Vec::with_capacity(s.quad_cost.len());
    for (i, &c) in s.quad_cost.iter().enumerate() {
        let denom = s.beta_s * (1.0 + conj.delta[i]) + c;
        if denom <= 0.0 {
            return Err(DegenerateTau { generator: i, denominator: denom });
        }
        tau.push(1.0 / denom);
    }
    let phi = 1.0 / (1.0 + s.beta_s * tau.iter().sum::<f64>());
    Ok((tau, phi))
}

/// Equilibrium spot price given the futures commitments.
pub fn spot_price(
    s: &Scenario,
    fd: &FuturesDecision,
    conj: &CompetitionConjecture,
) -> Result<f64, DegenerateTau> {
    let (tau, phi) = competition_factors(s, conj)?;
    Ok(price_from_factors(s, fd, &tau, phi))
}

fn price_from_factors(s: &Scenario, fd: &FuturesDecision, tau: &[f64], phi: f64) -> f64 {
    let gamma_hat = effective_intercept(s);
    let mut marginal_term = 0.0;
    let mut qf_sum = 0.0;
    for i in 0..tau.len() {
        marginal_term += tau[i]
            * (s.linear_cost[i] + s.quad_cost[i] * fd.qf[i] + s.intensity[i] * s.ps_co2);
        qf_sum += fd.qf[i];
    }
    phi * (gamma_hat + s.beta_s * marginal_term - s.beta_s * qf_sum)
}

/// Equilibrium conventional spot quantities; sign-free (short selling).
pub fn spot_quantity(
    s: &Scenario,
    fd: &FuturesDecision,
    conj: &CompetitionConjecture,
) -> Result<Vec<f64>, DegenerateTau> {
    let (tau, phi) = competition_factors(s, conj)?;
    let ps = price_from_factors(s, fd, &tau, phi);
    Ok(quantities_from_price(s, fd, &tau, ps))
}

fn quantities_from_price(s: &Scenario, fd: &FuturesDecision, tau: &[f64], ps: f64) -> Vec<f64> {
    tau.iter()
        .enumerate()
        .map(|(i, &t)| {
            t * (ps - s.linear_cost[i] - s.quad_cost[i] * fd.qf[i] - s.intensity[i] * s.ps_co2)
        })
        .collect()
}

/// Allowance imbalance per conventional generator: own realized emissions
/// minus the futures allowance position.
pub fn spot_emissions(s: &Scenario, fd: &FuturesDecision, qs: &[f64]) -> Vec<f64> {
    qs.iter()
        .enumerate()
        .map(|(i, &q)| s.intensity[i] * (q + fd.qf[i]) - fd.epsf[i])
        .collect()
}

/// Full spot equilibrium for one scenario at the given futures decisions.
pub fn spot_outcome(
    s: &Scenario,
    fd: &FuturesDecision,
    conj: &CompetitionConjecture,
) -> Result<SpotOutcome, DegenerateTau> {
    let (tau, phi) = competition_factors(s, conj)?;
    let ps = price_from_factors(s, fd, &tau, phi);
    let qs = quantities_from_price(s, fd, &tau, ps);
    let eps_s = spot_emissions(s, fd, &qs);
    let n_conv = s.quad_cost.len();
    let qs_res = s
        .res_output
        .iter()
        .enumerate()
        .map(|(j, &q)| q - fd.qf[n_conv + j])
        .collect();
    Ok(SpotOutcome { ps, qs_conventional: qs, qs_res, eps_s, tau, phi_factor: phi })
}

/// Equilibrium of the market with no futures trading: identical to the
/// general closed forms evaluated at zero futures positions.
pub fn spot_only_equilibrium(
    s: &Scenario,
    conj: &CompetitionConjecture,
) -> Result<SpotOutcome, DegenerateTau> {
    let fd = FuturesDecision::zero(s.quad_cost.len(), s.res_output.len());
    spot_outcome(s, &fd, conj)
}
