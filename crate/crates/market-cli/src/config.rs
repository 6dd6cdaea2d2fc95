//! TOML configuration schema and conversion into the core model types.

use anyhow::{bail, Context, Result};
use market_core::{
    CarbonParams, CompetitionConjecture, ConventionalGeneratorParams, DemandParams, MarketConfig,
    ResGeneratorParams, RiskPreference,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// "cournot" or "perfect".
    pub competition: String,
    pub n_scenarios: usize,
    pub seed: u64,
    pub risk: RiskSection,
    pub demand: DemandSection,
    pub carbon: CarbonSection,
    #[serde(default)]
    pub conventional: Vec<ConventionalSection>,
    #[serde(default)]
    pub res: Vec<ResSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSection {
    pub phi: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSection {
    pub gamma_f: f64,
    pub beta_f: f64,
    #[serde(default)]
    pub cv_gamma: f64,
    #[serde(default)]
    pub cv_beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarbonSection {
    pub pf_co2: f64,
    pub ps_co2_mean: f64,
    #[serde(default)]
    pub cv_ps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConventionalSection {
    pub id: String,
    pub a_mean: f64,
    pub b_mean: f64,
    pub c_mean: f64,
    pub eta_mean: f64,
    #[serde(default)]
    pub cv_a: f64,
    #[serde(default)]
    pub cv_b: f64,
    #[serde(default)]
    pub cv_c: f64,
    #[serde(default)]
    pub cv_eta: f64,
    #[serde(default)]
    pub qf_min: f64,
    pub qf_max: f64,
    #[serde(default)]
    pub epsf_min: f64,
    pub epsf_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResSection {
    pub id: String,
    pub q_mean: f64,
    #[serde(default)]
    pub cv_q: f64,
    #[serde(default)]
    pub qf_min: f64,
    pub qf_max: f64,
}

pub fn load(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let cfg: FileConfig =
        toml::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))?;
    Ok(cfg)
}

pub fn conjecture_for(name: &str, n_conv: usize, n_res: usize) -> Result<CompetitionConjecture> {
    match name {
        "cournot" => Ok(CompetitionConjecture::cournot(n_conv, n_res)),
        "perfect" => Ok(CompetitionConjecture::perfect(n_conv, n_res)),
        other => bail!("unknown competition mode {other:?} (expected \"cournot\" or \"perfect\")"),
    }
}

impl FileConfig {
    pub fn to_market_config(&self) -> Result<MarketConfig> {
        let n_conv = self.conventional.len();
        let n_res = self.res.len();
        Ok(MarketConfig {
            conventional: self
                .conventional
                .iter()
                .map(|g| ConventionalGeneratorParams {
                    id: g.id.clone(),
                    a_mean: g.a_mean,
                    b_mean: g.b_mean,
                    c_mean: g.c_mean,
                    eta_mean: g.eta_mean,
                    cv_a: g.cv_a,
                    cv_b: g.cv_b,
                    cv_c: g.cv_c,
                    cv_eta: g.cv_eta,
                    qf_min: g.qf_min,
                    qf_max: g.qf_max,
                    epsf_min: g.epsf_min,
                    epsf_max: g.epsf_max,
                })
                .collect(),
            res: self
                .res
                .iter()
                .map(|g| ResGeneratorParams {
                    id: g.id.clone(),
                    q_mean: g.q_mean,
                    cv_q: g.cv_q,
                    qf_min: g.qf_min,
                    qf_max: g.qf_max,
                })
                .collect(),
            demand: DemandParams {
                gamma_f: self.demand.gamma_f,
                beta_f: self.demand.beta_f,
                cv_gamma: self.demand.cv_gamma,
                cv_beta: self.demand.cv_beta,
            },
            carbon: CarbonParams {
                pf_co2: self.carbon.pf_co2,
                ps_co2_mean: self.carbon.ps_co2_mean,
                cv_ps: self.carbon.cv_ps,
            },
            conjecture: conjecture_for(&self.competition, n_conv, n_res)?,
            risk: RiskPreference { phi: self.risk.phi, alpha: self.risk.alpha },
            n_scenarios: self.n_scenarios,
            seed: self.seed,
        })
    }
}
