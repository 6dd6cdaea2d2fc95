//! Scenario sampling: independent normal draws per stochastic parameter,
//! sigma = mean * CV, equiprobable scenarios, counter-based substreams so
//! scenario `w` draws the same values regardless of the total count.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::params::MarketConfig;

/// Floor for the realized spot demand slope.
pub const BETA_FLOOR: f64 = 1e-6;
/// Floor for realized quadratic cost coefficients.
pub const QUAD_COST_FLOOR: f64 = 1e-9;

/// One realization of every stochastic parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub index: usize,
    pub prob: f64,
    /// Realized fixed costs per conventional generator [EUR].
    pub fixed_cost: Vec<f64>,
    /// Realized linear costs [EUR/MWh].
    pub linear_cost: Vec<f64>,
    /// Realized quadratic costs [EUR/MWh^2].
    pub quad_cost: Vec<f64>,
    /// Realized emission intensities [tCO2/MWh].
    pub intensity: Vec<f64>,
    /// Realized RES total production per RES generator [MWh].
    pub res_output: Vec<f64>,
    /// Spot demand intercept [EUR/MWh].
    pub gamma_s: f64,
    /// Spot demand slope [EUR/MWh^2].
    pub beta_s: f64,
    /// Spot allowance price [EUR/tCO2].
    pub ps_co2: f64,
}

/// Ordered scenario list with the seed that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub seed: u64,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Number of scenarios whose effective spot intercept is negative
    /// (extreme RES draws). Flagged, never rejected.
    pub fn negative_intercept_count(&self) -> usize {
        self.scenarios.iter().filter(|s| effective_intercept(s) < 0.0).count()
    }
}

/// Sampling failure: a mean/CV pair puts most of its mass below the
/// truncation floor, so draws would be dominated by clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingError {
    pub parameter: String,
    pub mass_below_floor: f64,
}

impl core::fmt::Display for SamplingError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(
            f,
            "parameter {} has {:.1}% of its mass below the truncation floor",
            self.parameter,
            self.mass_below_floor * 100.0
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SamplingError {}

/// Standard normal CDF.
fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / core::f64::consts::SQRT_2))
}

fn check_mass(parameter: &str, mean: f64, cv: f64, floor: f64) -> Result<(), SamplingError> {
    let sd = mean * cv;
    if sd <= 0.0 {
        return Ok(());
    }
    let mass = normal_cdf((floor - mean) / sd);
    if mass > 0.5 {
        return Err(SamplingError {
            parameter: String::from(parameter),
            mass_below_floor: mass,
        });
    }
    Ok(())
}

/// One truncated normal draw: N(mean, mean*cv) clamped below at `floor`.
/// A zero CV returns the mean exactly without consuming randomness.
fn draw(rng: &mut ChaCha12Rng, mean: f64, cv: f64, floor: f64) -> f64 {
    let sd = mean * cv;
    if sd == 0.0 {
        return if mean < floor { floor } else { mean };
    }
    // Box-Muller on two uniform draws; deterministic for a given stream.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    let z = libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2);
    let x = mean + sd * z;
    if x < floor {
        floor
    } else {
        x
    }
}

/// Draws `config.n_scenarios` equiprobable scenarios. Deterministic for a
/// given seed; scenario `w` uses RNG stream `w`, so enlarging the set keeps
/// earlier scenarios bit-identical.
pub fn sample_scenarios(config: &MarketConfig) -> Result<ScenarioSet, SamplingError> {
    for g in &config.conventional {
        check_mass("a", g.a_mean, g.cv_a, 0.0)?;
        check_mass("b", g.b_mean, g.cv_b, 0.0)?;
        check_mass("c", g.c_mean, g.cv_c, QUAD_COST_FLOOR)?;
        check_mass("eta", g.eta_mean, g.cv_eta, 0.0)?;
    }
    for g in &config.res {
        check_mass("Q", g.q_mean, g.cv_q, 0.0)?;
    }
    check_mass("gamma_s", config.demand.gamma_f, config.demand.cv_gamma, 0.0)?;
    check_mass("beta_s", config.demand.beta_f, config.demand.cv_beta, BETA_FLOOR)?;
    check_mass("ps_co2", config.carbon.ps_co2_mean, config.carbon.cv_ps, 0.0)?;

    let n = config.n_scenarios;
    let prob = 1.0 / n as f64;
    let mut scenarios = Vec::with_capacity(n);
    for index in 0..n {
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        rng.set_stream(index as u64 + 1);

        let mut fixed_cost = Vec::with_capacity(config.conventional.len());
        let mut linear_cost = Vec::with_capacity(config.conventional.len());
        let mut quad_cost = Vec::with_capacity(config.conventional.len());
        let mut intensity = Vec::with_capacity(config.conventional.len());
        for g in &config.conventional {
            fixed_cost.push(draw(&mut rng, g.a_mean, g.cv_a, 0.0));
            linear_cost.push(draw(&mut rng, g.b_mean, g.cv_b, 0.0));
            quad_cost.push(draw(&mut rng, g.c_mean, g.cv_c, QUAD_COST_FLOOR));
            intensity.push(draw(&mut rng, g.eta_mean, g.cv_eta, 0.0));
        }
        let mut res_output = Vec::with_capacity(config.res.len());
        for g in &config.res {
            res_output.push(draw(&mut rng, g.q_mean, g.cv_q, 0.0));
        }
        let gamma_s = draw(&mut rng, config.demand.gamma_f, config.demand.cv_gamma, 0.0);
        let beta_s = draw(&mut rng, config.demand.beta_f, config.demand.cv_beta, BETA_FLOOR);
        let ps_co2 = draw(&mut rng, config.carbon.ps_co2_mean, config.carbon.cv_ps, 0.0);

        scenarios.push(Scenario {
            index,
            prob,
            fixed_cost,
            linear_cost,
            quad_cost,
            intensity,
            res_output,
            gamma_s,
            beta_s,
            ps_co2,
        });
    }
    Ok(ScenarioSet { scenarios, seed: config.seed })
}

/// Effective spot intercept after netting out the (cost-free, always
/// dispatched) renewable production: gamma_s - beta_s * sum_j Q_j.
/// May be negative under extreme RES draws.
pub fn effective_intercept(s: &Scenario) -> f64 {
    let total_res: f64 = s.res_output.iter().sum();
    s.gamma_s - s.beta_s * total_res
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::MarketConfig;

    #[test]
    fn zero_cv_reproduces_means_exactly() {
        let mut cfg = MarketConfig::default_calibration(8, 3);
        for g in &mut cfg.conventional {
            g.cv_a = 0.0;
            g.cv_b = 0.0;
            g.cv_c = 0.0;
            g.cv_eta = 0.0;
        }
        cfg.res[0].cv_q = 0.0;
        cfg.demand.cv_gamma = 0.0;
        cfg.demand.cv_beta = 0.0;
        cfg.carbon.cv_ps = 0.0;
        let set = sample_scenarios(&cfg).unwrap();
        for s in &set.scenarios {
            assert_eq!(s.linear_cost, alloc::vec![27.0, 35.0, 43.0]);
            assert_eq!(s.quad_cost, alloc::vec![0.015, 0.008, 0.013]);
            assert_eq!(s.res_output, alloc::vec![5_000.0]);
            assert_eq!(s.gamma_s, 180.0);
            assert_eq!(s.beta_s, 0.005);
            assert_eq!(s.ps_co2, 25.0);
        }
    }

    #[test]
    fn sample_mean_tracks_calibration() {
        // Monte Carlo check against N(27, 27*0.13) for b of generator 1.
        let cfg = MarketConfig::default_calibration(100_000, 42);
        let set = sample_scenarios(&cfg).unwrap();
        let mean: f64 =
            set.scenarios.iter().map(|s| s.linear_cost[0]).sum::<f64>() / set.len() as f64;
        assert!((mean - 27.0).abs() / 27.0 < 0.01, "sample mean {mean}");
    }

    #[test]
    fn equal_seeds_are_bit_identical() {
        let cfg = MarketConfig::default_calibration(64, 9);
        assert_eq!(sample_scenarios(&cfg).unwrap(), sample_scenarios(&cfg).unwrap());
    }

    #[test]
    fn scenario_draws_are_count_independent() {
        let small = MarketConfig::default_calibration(10, 5);
        let large = MarketConfig::default_calibration(200, 5);
        let a = sample_scenarios(&small).unwrap();
        let b = sample_scenarios(&large).unwrap();
        for (sa, sb) in a.scenarios.iter().zip(&b.scenarios) {
            assert_eq!(sa.linear_cost, sb.linear_cost);
            assert_eq!(sa.gamma_s, sb.gamma_s);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let cfg = MarketConfig::default_calibration(320, 11);
        let set = sample_scenarios(&cfg).unwrap();
        let total: f64 = set.scenarios.iter().map(|s| s.prob).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonsensical_cv_is_rejected() {
        let mut cfg = MarketConfig::default_calibration(10, 5);
        // Mean below the floor with positive CV: >50% of mass clipped.
        cfg.conventional[0].c_mean = 1e-12;
        cfg.conventional[0].cv_c = 1.0;
        let err = sample_scenarios(&cfg).unwrap_err();
        assert_eq!(err.parameter, "c");
        assert!(err.mass_below_floor > 0.5);
    }

    fn bare_scenario(gamma: f64, beta: f64, res: &[f64]) -> Scenario {
        Scenario {
            index: 0,
            prob: 1.0,
            fixed_cost: alloc::vec![],
            linear_cost: alloc::vec![],
            quad_cost: alloc::vec![],
            intensity: alloc::vec![],
            res_output: res.to_vec(),
            gamma_s: gamma,
            beta_s: beta,
            ps_co2: 0.0,
        }
    }

    #[test]
    fn effective_intercept_examples() {
        assert_eq!(effective_intercept(&bare_scenario(180.0, 0.005, &[])), 180.0);
        assert_eq!(effective_intercept(&bare_scenario(180.0, 0.005, &[10_000.0])), 130.0);
        assert_eq!(effective_intercept(&bare_scenario(3.0, 1.0, &[3.0])), 0.0);
    }
}
