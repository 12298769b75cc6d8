//! Experiment configuration: a JSON document validated into ready-to-run
//! mechanism, distribution and agent objects.

use std::path::PathBuf;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::agents::AgentSpec;
use crate::error::{Error, FieldError, Result};
use crate::mechanism::{Mechanism, MechanismKind, MechanismParams, Regime};
use crate::money::{ExactNumber, Money};
use crate::valuation::{DistributionSpec, ValuationDistribution};

pub const DEFAULT_REPS: u64 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    pub epsilon: ExactNumber,
    pub rho: ExactNumber,
    /// Bad-state price; the Myerson price of the distribution when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<Money>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRegretSpec {
    /// Constant benchmark bids; every grid point when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark_bids: Option<Vec<Money>>,
    /// Number of replications that get counterfactual runs; all when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default)]
    pub regret: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_regret: Option<PolicyRegretSpec>,
}

impl MetricsSpec {
    pub fn is_empty(&self) -> bool {
        *self == MetricsSpec::default()
    }
}

fn default_reps() -> u64 {
    DEFAULT_REPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mechanism: MechanismSpec,
    pub agent: AgentSpec,
    pub distribution: DistributionSpec,
    #[serde(rename = "T")]
    pub horizon: u64,
    #[serde(default = "default_reps")]
    pub reps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Per-round CSV of the first replication.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "MetricsSpec::is_empty")]
    pub metrics: MetricsSpec,
}

/// A validated configuration with its derived objects.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub distribution: ValuationDistribution,
    pub mechanism: Mechanism,
    pub regime: Regime,
}

impl Experiment {
    pub fn horizon(&self) -> u64 {
        self.config.horizon
    }
}

/// Parses and validates a JSON document. Every problem found is reported
/// with the dotted path of the offending field.
pub fn parse_config(document: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(vec![FieldError::new(
            if path.is_empty() { ".".to_string() } else { path },
            e.inner().to_string(),
        )])
    })?;
    config.build()?;
    Ok(config)
}

/// Serializes a config so that [`parse_config`] returns it unchanged.
pub fn emit_config(config: &ExperimentConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(config)?)
}

impl ExperimentConfig {
    pub fn build(&self) -> Result<Experiment> {
        let mut errors = Vec::new();
        let eps = self.mechanism.epsilon.0;
        let rho = self.mechanism.rho.0;
        if !(eps > Zero::zero() && eps < One::one()) {
            errors.push(FieldError::new("mechanism.epsilon", format!("must lie in (0, 1), got {eps}")));
        }
        if !(rho >= Zero::zero() && rho <= One::one()) {
            errors.push(FieldError::new("mechanism.rho", format!("must lie in [0, 1], got {rho}")));
        }
        if let Some(p) = self.mechanism.price {
            if p.is_negative() {
                errors.push(FieldError::new("mechanism.price", format!("must be non-negative, got {p}")));
            }
        }
        if self.horizon == 0 {
            errors.push(FieldError::new("T", "must be at least 1"));
        }
        if self.reps == 0 {
            errors.push(FieldError::new("reps", "must be at least 1"));
        }
        if self.threads == Some(0) {
            errors.push(FieldError::new("threads", "must be at least 1"));
        }
        for (field, message) in self.agent.validate() {
            errors.push(FieldError::new(format!("agent.{field}"), message));
        }
        let informed_dp = matches!(self.agent, AgentSpec::Lookahead { .. } | AgentSpec::ForwardLooking { .. });
        if informed_dp && self.mechanism.kind == MechanismKind::Credit {
            errors.push(FieldError::new("agent.kind", "lookahead agents need an average-bid mechanism"));
        }
        if let Some(pr) = &self.metrics.policy_regret {
            if pr.reps == Some(0) {
                errors.push(FieldError::new("metrics.policy_regret.reps", "must be at least 1"));
            }
            if pr.benchmark_bids.as_ref().is_some_and(|b| b.is_empty() || b.iter().any(|x| x.is_negative())) {
                errors.push(FieldError::new(
                    "metrics.policy_regret.benchmark_bids",
                    "need at least one non-negative bid",
                ));
            }
        }
        if self.metrics.regret && self.mechanism.kind == MechanismKind::Credit {
            errors.push(FieldError::new("metrics.regret", "hindsight regret needs an average-bid mechanism"));
        }
        let distribution = match ValuationDistribution::from_spec(&self.distribution) {
            Ok(d) => Some(d),
            Err(e) => {
                errors.push(FieldError::new("distribution", e.to_string()));
                None
            }
        };
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let distribution = distribution.expect("checked above");
        let price = self.mechanism.price.unwrap_or_else(|| distribution.myerson().price);
        let params =
            MechanismParams::new(eps, rho, price, self.horizon, distribution.support_max(), distribution.mean())
                .map_err(|e| match e {
                    Error::InvalidParameter { field, message } => {
                        Error::Config(vec![FieldError::new(format!("mechanism.{field}"), message)])
                    }
                    other => other,
                })?;
        let regime = params.regime();
        Ok(Experiment {
            config: self.clone(),
            mechanism: Mechanism::new(self.mechanism.kind, params),
            distribution,
            regime,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "mechanism": {"kind": "threshold", "epsilon": 0.5, "rho": "1/3"},
        "agent": {"kind": "myopic"},
        "distribution": {"kind": "uniform", "B": 1, "tick": 0.01},
        "T": 1000
    }"#;

    fn field_paths(err: Error) -> Vec<String> {
        match err {
            Error::Config(list) => list.into_iter().map(|f| f.path).collect(),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.reps, 100);
        assert_eq!(c.trace, None);
        assert_eq!(c.seed, None);
        let exp = c.build().unwrap();
        assert_eq!(exp.mechanism.params().price, Money::new(1, 2));
        assert!(exp.regime.k_lookahead);
    }

    #[test]
    fn epsilon_out_of_range_names_the_field() {
        let doc = MINIMAL.replace("\"epsilon\": 0.5", "\"epsilon\": 1.2");
        assert_eq!(field_paths(parse_config(&doc).unwrap_err()), vec!["mechanism.epsilon"]);
    }

    #[test]
    fn large_rho_is_accepted_with_a_regime_note() {
        let doc = MINIMAL.replace("\"1/3\"", "0.4");
        let exp = parse_config(&doc).unwrap().build().unwrap();
        assert!(!exp.regime.k_lookahead);
        assert!(exp.regime.notes.iter().any(|n| n.contains("k-lookahead guarantee not claimed")));
    }

    #[test]
    fn unknown_keys_are_rejected_with_paths() {
        let doc = MINIMAL.replace("\"kind\": \"myopic\"", "\"kind\": \"myopic\", \"k\": 2");
        assert_eq!(field_paths(parse_config(&doc).unwrap_err()), vec!["agent"]);
        let doc = MINIMAL.replace("\"T\": 1000", "\"T\": 1000, \"colour\": 1");
        let err = parse_config(&doc).unwrap_err();
        assert!(err.to_string().contains("colour"));
    }

    #[test]
    fn zero_reps_rejected() {
        let doc = MINIMAL.replace("\"T\": 1000", "\"T\": 1000, \"reps\": 0");
        assert_eq!(field_paths(parse_config(&doc).unwrap_err()), vec!["reps"]);
    }

    #[test]
    fn several_errors_are_reported_together() {
        let doc = MINIMAL.replace("\"epsilon\": 0.5", "\"epsilon\": 0").replace("\"1/3\"", "2");
        let paths = field_paths(parse_config(&doc).unwrap_err());
        assert_eq!(paths, vec!["mechanism.epsilon", "mechanism.rho"]);
    }

    #[test]
    fn emit_then_parse_round_trips() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.seed = Some(7);
        c.metrics.policy_regret =
            Some(PolicyRegretSpec { benchmark_bids: Some(vec![Money::new(1, 4)]), reps: Some(2) });
        c.agent = AgentSpec::Etc { block_length: Some(200), burn_in: None };
        let again = parse_config(&emit_config(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }
}
