#![cfg_attr(not(test), no_std)]

extern crate alloc;

#[cfg(all(feature = "std", not(test)))]
extern crate std;

pub mod params;
pub mod payoff;
pub mod scenario;
pub mod spot;
pub mod futures;
pub mod sweep;

pub use params::{
    CarbonParams, CompetitionConjecture, ConventionalGeneratorParams, DemandParams, MarketConfig,
    ResGeneratorParams, RiskPreference, ValidationReport,
};
pub use payoff::{cvar, objective, profit_conventional, profit_res, FuturesDecision, ProfitPanel};
pub use scenario::{effective_intercept, sample_scenarios, Scenario, ScenarioSet};
pub use spot::{spot_emissions, spot_only_equilibrium, spot_outcome, spot_price, spot_quantity, SpotOutcome};
pub use futures::{
    best_response, futures_price, partials, profit_gradients, risk_neutral_equilibrium,
    solve_equilibrium, stationarity_residuals, DualState, EquilibriumSolution, PartialDerivatives,
    ResidualReport, ScenarioGradients, SolveError, TraceRow,
};
pub use sweep::{
    apply_parameter, run_sweep, stability_study, summarize_equilibrium, sweep_point,
    StabilityReport, StabilityRow, SweepError, SweepParameter, SweepRow, SweepSpec,
};
