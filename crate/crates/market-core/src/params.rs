//! Market parameterization: generator cost/emission distributions, demand
//! curves, competition conjectures and risk preferences.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// A conventional (thermal) generator with quadratic costs and a CO2
/// emission intensity. Mean/CV pairs describe the per-scenario normal
/// distributions; `qF`/`epsF` bounds apply to the futures stage only.
#[derive(Debug, Clone, PartialEq)]
pub struct ConventionalGeneratorParams {
    pub id: String,
    /// Fixed cost mean [EUR].
    pub a_mean: f64,
    /// Linear cost mean [EUR/MWh].
    pub b_mean: f64,
    /// Quadratic cost mean [EUR/MWh^2].
    pub c_mean: f64,
    /// Emission intensity mean [tCO2/MWh].
    pub eta_mean: f64,
    pub cv_a: f64,
    pub cv_b: f64,
    pub cv_c: f64,
    pub cv_eta: f64,
    /// Futures quantity bounds [MWh].
    pub qf_min: f64,
    pub qf_max: f64,
    /// Futures allowance bounds [tCO2].
    pub epsf_min: f64,
    pub epsf_max: f64,
}

/// A renewable generator: stochastic total output, zero cost, no emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct ResGeneratorParams {
    pub id: String,
    /// Total production mean [MWh].
    pub q_mean: f64,
    pub cv_q: f64,
    pub qf_min: f64,
    pub qf_max: f64,
}

/// Inverse demand curve parameters. The futures curve is deterministic;
/// the spot curve is drawn per scenario around the same means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandParams {
    /// Futures intercept [EUR/MWh].
    pub gamma_f: f64,
    /// Futures slope [EUR/MWh^2].
    pub beta_f: f64,
    pub cv_gamma: f64,
    pub cv_beta: f64,
}

/// Allowance prices: deterministic futures price, stochastic spot price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarbonParams {
    /// Futures allowance price [EUR/tCO2].
    pub pf_co2: f64,
    /// Spot allowance price mean [EUR/tCO2].
    pub ps_co2_mean: f64,
    pub cv_ps: f64,
}

/// Conjectural variations: `delta[i]` is generator i's spot conjecture,
/// `psi[k]` the futures conjecture for k in I then J order.
///
/// `delta = 0` is Cournot, `delta = -1` perfect competition. The
/// competitive futures value is `psi = -1/(I+J-1)`, which zeroes the
/// conjectured futures price impact.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetitionConjecture {
    pub delta: Vec<f64>,
    pub psi: Vec<f64>,
}

impl CompetitionConjecture {
    pub fn cournot(n_conventional: usize, n_res: usize) -> Self {
        Self {
            delta: alloc::vec![0.0; n_conventional],
            psi: alloc::vec![0.0; n_conventional + n_res],
        }
    }

    pub fn perfect(n_conventional: usize, n_res: usize) -> Self {
        let n = n_conventional + n_res;
        let psi = if n > 1 { -1.0 / (n as f64 - 1.0) } else { -1.0 };
        Self {
            delta: alloc::vec![-1.0; n_conventional],
            psi: alloc::vec![psi; n],
        }
    }
}

/// Weighting between expected profit and CVaR in the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskPreference {
    /// Risk-aversion weight in [0, 1]; 0 is risk neutral.
    pub phi: f64,
    /// CVaR confidence level in (0, 1).
    pub alpha: f64,
}

/// Complete market instance: generators, demand, carbon, conjectures,
/// risk preference and the scenario sampling setup.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    pub conventional: Vec<ConventionalGeneratorParams>,
    pub res: Vec<ResGeneratorParams>,
    pub demand: DemandParams,
    pub carbon: CarbonParams,
    pub conjecture: CompetitionConjecture,
    pub risk: RiskPreference,
    pub n_scenarios: usize,
    pub seed: u64,
}

impl MarketConfig {
    /// The bundled reference calibration: three conventional generators and
    /// one large RES generator under Cournot conjectures, risk neutral at
    /// alpha = 0.90. Matches the `default.cfg` shipped with the CLI.
    pub fn default_calibration(n_scenarios: usize, seed: u64) -> Self {
        let conventional = alloc::vec![
            ConventionalGeneratorParams {
                id: String::from("conv1"),
                a_mean: 35.0,
                b_mean: 27.0,
                c_mean: 0.015,
                eta_mean: 0.67,
                cv_a: 0.10,
                cv_b: 0.13,
                cv_c: 0.15,
                cv_eta: 0.05,
                qf_min: 0.0,
                qf_max: 21_000.0,
                epsf_min: 0.0,
                epsf_max: 20_000.0,
            },
            ConventionalGeneratorParams {
                id: String::from("conv2"),
                a_mean: 45.0,
                b_mean: 35.0,
                c_mean: 0.008,
                eta_mean: 0.50,
                cv_a: 0.10,
                cv_b: 0.13,
                cv_c: 0.15,
                cv_eta: 0.05,
                qf_min: 0.0,
                qf_max: 21_000.0,
                epsf_min: 0.0,
                epsf_max: 23_000.0,
            },
            ConventionalGeneratorParams {
                id: String::from("conv3"),
                a_mean: 50.0,
                b_mean: 43.0,
                c_mean: 0.013,
                eta_mean: 0.49,
                cv_a: 0.10,
                cv_b: 0.13,
                cv_c: 0.15,
                cv_eta: 0.05,
                qf_min: 0.0,
                qf_max: 25_000.0,
                epsf_min: 0.0,
                epsf_max: 19_000.0,
            },
        ];
        let res = alloc::vec![ResGeneratorParams {
            id: String::from("res1"),
            q_mean: 5_000.0,
            cv_q: 0.057,
            qf_min: 0.0,
            qf_max: 10_000.0,
        }];
        MarketConfig {
            conjecture: CompetitionConjecture::cournot(conventional.len(), res.len()),
            conventional,
            res,
            demand: DemandParams {
                gamma_f: 180.0,
                beta_f: 0.005,
                cv_gamma: 0.15,
                cv_beta: 0.057,
            },
            carbon: CarbonParams {
                pf_co2: 25.0,
                ps_co2_mean: 25.0,
                cv_ps: 0.16,
            },
            risk: RiskPreference { phi: 0.0, alpha: 0.90 },
            n_scenarios,
            seed,
        }
    }
}

/// Outcome of [`validate`]: empty iff the config is admissible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant the downstream modules rely on.
/// Report-style: collects all violations instead of failing fast.
pub fn validate(config: &MarketConfig) -> ValidationReport {
    let mut v = Vec::new();

    if config.conventional.is_empty() {
        v.push(String::from("at least one conventional generator is required"));
    }
    if config.n_scenarios == 0 {
        v.push(String::from("n_scenarios must be at least 1"));
    }

    for g in &config.conventional {
        if g.a_mean < 0.0 {
            v.push(format!("{}: fixed cost mean must be nonnegative", g.id));
        }
        if g.b_mean < 0.0 {
            v.push(format!("{}: linear cost mean must be nonnegative", g.id));
        }
        if g.c_mean <= 0.0 {
            v.push(format!("{}: quadratic cost must be positive", g.id));
        }
        if g.eta_mean < 0.0 {
            v.push(format!("{}: emission intensity must be nonnegative", g.id));
        }
        for (cv, name) in [(g.cv_a, "cv_a"), (g.cv_b, "cv_b"), (g.cv_c, "cv_c"), (g.cv_eta, "cv_eta")] {
            if cv < 0.0 {
                v.push(format!("{}: {name} must be nonnegative", g.id));
            }
        }
        if g.qf_min > g.qf_max {
            v.push(format!("{}: qf_min exceeds qf_max", g.id));
        }
        if g.epsf_min > g.epsf_max {
            v.push(format!("{}: epsf_min exceeds epsf_max", g.id));
        }
    }

    for g in &config.res {
        if g.q_mean < 0.0 {
            v.push(format!("{}: RES production mean must be nonnegative", g.id));
        }
        if g.cv_q < 0.0 {
            v.push(format!("{}: cv_q must be nonnegative", g.id));
        }
        if g.qf_min > g.qf_max {
            v.push(format!("{}: qf_min exceeds qf_max", g.id));
        }
    }

    if config.demand.gamma_f <= 0.0 {
        v.push(String::from("demand intercept gamma_f must be positive"));
    }
    if config.demand.beta_f <= 0.0 {
        v.push(String::from("demand slope beta_f must be positive"));
    }
    if config.demand.cv_gamma < 0.0 || config.demand.cv_beta < 0.0 {
        v.push(String::from("demand CVs must be nonnegative"));
    }

    if config.carbon.pf_co2 < 0.0 {
        v.push(String::from("futures CO2 price must be nonnegative"));
    }
    if config.carbon.ps_co2_mean < 0.0 {
        v.push(String::from("spot CO2 price mean must be nonnegative"));
    }
    if config.carbon.cv_ps < 0.0 {
        v.push(String::from("CO2 price CV must be nonnegative"));
    }

    if config.conjecture.delta.len() != config.conventional.len() {
        v.push(String::from("conjecture delta length must match conventional generator count"));
    }
    let n_players = config.conventional.len() + config.res.len();
    if config.conjecture.psi.len() != n_players {
        v.push(String::from("conjecture psi length must match total generator count"));
    }
    for (i, d) in config.conjecture.delta.iter().enumerate() {
        if !(-1.0..=0.0).contains(d) {
            v.push(format!("delta[{i}] must lie in [-1, 0]"));
        }
    }
    for (k, p) in config.conjecture.psi.iter().enumerate() {
        if !(-1.0..=0.0).contains(p) {
            v.push(format!("psi[{k}] must lie in [-1, 0]"));
        }
    }

    let phi = config.risk.phi;
    let alpha = config.risk.alpha;
    if !(0.0..=1.0).contains(&phi) {
        v.push(String::from("risk weight phi must lie in [0, 1]"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        v.push(String::from("CVaR level alpha must lie in (0, 1)"));
    } else if (1.0 - alpha) * (config.n_scenarios as f64) < 1.0 {
        v.push(String::from("(1-alpha)|Omega| < 1: CVaR tail holds no scenario"));
    }

    ValidationReport { violations: v }
}
