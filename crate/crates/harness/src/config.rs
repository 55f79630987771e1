use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};
use snapmix_core::kspike::{KspikeParams, DEFAULT_DIRECTION_CAP, DEFAULT_LP_SLACK_CONSTANT, DEFAULT_NET_CAP};
use snapmix_core::coin1d::DEFAULT_SLACK_CONSTANT;
use snapmix_core::subspace::ReductionParams;
use snapmix_core::MixtureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    CoinGeneral,
    CoinKspike,
    Kdim,
    Kspike,
}

impl Pipeline {
    pub fn on_simplex(self) -> bool {
        matches!(self, Pipeline::Kdim | Pipeline::Kspike)
    }
}

fn default_epsilon() -> f64 {
    0.5
}
fn default_tau() -> f64 {
    1.0 / 32.0
}
fn default_eps_2() -> f64 {
    0.01
}
fn default_r() -> usize {
    2
}
fn default_sigma() -> f64 {
    0.1
}
fn default_slack() -> f64 {
    DEFAULT_SLACK_CONSTANT
}
fn default_lp_slack() -> f64 {
    DEFAULT_LP_SLACK_CONSTANT
}
fn default_net_cap() -> usize {
    DEFAULT_NET_CAP
}
fn default_direction_cap() -> usize {
    DEFAULT_DIRECTION_CAP
}
fn default_truth_samples() -> usize {
    2000
}

/// One experiment: pipeline, parameters, budgets and seeds.
///
/// Optional fields fall back to pipeline-specific defaults, see the accessor
/// methods. `mixture` is the generating spec when data is synthesized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: Pipeline,
    pub n: usize,
    pub k: usize,
    /// Snapshot length of the main batch.
    #[serde(rename = "K")]
    pub big_k: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub n1: usize,
    #[serde(default)]
    pub n2: usize,
    pub nk: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_prime: Option<f64>,
    #[serde(default = "default_eps_2")]
    pub eps_2: f64,
    #[serde(rename = "R", default = "default_r")]
    pub r: usize,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub seed: u64,
    /// Seed of the learner streams; `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner_seed: Option<u64>,
    #[serde(default = "default_slack")]
    pub coin_slack_constant: f64,
    #[serde(default = "default_lp_slack")]
    pub lp_slack_constant: f64,
    #[serde(default = "default_net_cap")]
    pub net_cap: usize,
    #[serde(default = "default_direction_cap")]
    pub direction_cap: usize,
    #[serde(default)]
    pub poissonize: bool,
    /// Use the exact second-moment matrix of `mixture` instead of estimating it.
    #[serde(default)]
    pub known_a: bool,
    /// Constituents drawn to discretize a continuous ground truth.
    #[serde(default = "default_truth_samples")]
    pub truth_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureSpec>,
}

impl ExperimentConfig {
    pub fn learner_seed(&self) -> u64 {
        self.learner_seed.unwrap_or(self.seed)
    }

    /// Piece accuracy of the general coin learner; `0.5/K` by default.
    pub fn eps_prime(&self) -> f64 {
        self.eps_prime.unwrap_or(0.5 / self.big_k.max(1) as f64)
    }

    /// Hypercube scale: `3k/ε` for k-spike pipelines, `5k²/ε` otherwise.
    pub fn c(&self) -> f64 {
        self.c.unwrap_or_else(|| match self.pipeline {
            Pipeline::Kspike | Pipeline::CoinKspike => 3.0 * self.k as f64 / self.epsilon,
            _ => 5.0 * (self.k * self.k) as f64 / self.epsilon,
        })
    }

    pub fn reduction_params(&self) -> ReductionParams {
        ReductionParams { k: self.k, epsilon: self.epsilon, sigma: self.sigma, c: self.c(), poissonize: self.poissonize }
    }

    pub fn kspike_params(&self) -> KspikeParams {
        KspikeParams {
            r: self.r,
            tau: self.tau,
            epsilon_2: self.eps_2,
            coin_slack_constant: self.coin_slack_constant,
            lp_slack_constant: self.lp_slack_constant,
            direction_cap: self.direction_cap,
            net_cap: self.net_cap,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.big_k == 0 {
            bail!("n, k and K must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            bail!("epsilon = {} must lie in (0, 1)", self.epsilon);
        }
        if self.nk == 0 {
            bail!("the K-snapshot budget must be positive");
        }
        match self.pipeline {
            Pipeline::CoinGeneral | Pipeline::CoinKspike => {
                if self.n != 2 {
                    bail!("coin pipelines need n = 2, got {}", self.n);
                }
            }
            Pipeline::Kdim | Pipeline::Kspike => {
                if self.n1 == 0 || (self.n2 == 0 && !self.known_a) {
                    bail!("subspace pipelines need positive 1- and 2-snapshot budgets");
                }
                if !(self.sigma > 0.0 && self.sigma < self.epsilon / 4.0) {
                    bail!("sigma = {} must lie in (0, epsilon/4)", self.sigma);
                }
            }
        }
        if self.known_a && self.mixture.is_none() {
            bail!("known_a needs the generating mixture");
        }
        if let Some(m) = &self.mixture {
            m.validate()?;
            if m.n != self.n {
                bail!("mixture has n = {}, config n = {}", m.n, self.n);
            }
        }
        Ok(())
    }

    /// Order-of-magnitude budgets from the asymptotic analysis, with all
    /// hidden constants set to one. Reported, never enforced.
    pub fn theory(&self) -> Theory {
        let (n, k, eps, sigma) = (self.n as f64, self.k as f64, self.epsilon, self.sigma);
        Theory {
            n1: n * n.ln().max(1.0) / sigma.powi(3),
            kdim_aperture: k.powi(11) / eps.powi(10),
            kspike_snapshots: (k / eps).powf(k * k),
            kspike_aperture: 2 * self.k - 1,
        }
    }
}

/// Asymptotic budgets with unit constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theory {
    pub n1: f64,
    pub kdim_aperture: f64,
    pub kspike_snapshots: f64,
    pub kspike_aperture: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({"pipeline": "coin-general", "n": 2, "k": 3, "K": 16, "nk": 1000, "seed": 1})
    }

    #[test]
    fn defaults_fill_in() {
        let c: ExperimentConfig = serde_json::from_value(base()).unwrap();
        assert_eq!(c.eps_prime(), 0.5 / 16.0);
        assert_eq!(c.tau, 1.0 / 32.0);
        assert_eq!(c.learner_seed(), 1);
        c.validate().unwrap();
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_bad_values() {
        let mut v = base();
        v["epsilon"] = 1.5.into();
        assert!(serde_json::from_value::<ExperimentConfig>(v).unwrap().validate().is_err());
        let mut v = base();
        v["pipeline"] = "kspike".into();
        v["n"] = 10.into();
        v["n1"] = 10.into();
        v["n2"] = 10.into();
        v["sigma"] = 0.2.into();
        assert!(serde_json::from_value::<ExperimentConfig>(v).unwrap().validate().is_err());
        let mut v = base();
        v["bogus"] = 1.into();
        assert!(serde_json::from_value::<ExperimentConfig>(v).is_err());
    }

    #[test]
    fn c_defaults_by_pipeline() {
        let mut v = base();
        v["pipeline"] = "kspike".into();
        let c: ExperimentConfig = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(c.c(), 3.0 * 3.0 / 0.5);
        v["pipeline"] = "kdim".into();
        let c: ExperimentConfig = serde_json::from_value(v).unwrap();
        assert_eq!(c.c(), 5.0 * 9.0 / 0.5);
    }
}
