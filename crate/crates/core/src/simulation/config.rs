use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::selection::{PolicyConfig, PolicyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    /// Mean and covariance of catalog items plus `ridge * I`.
    FitToCatalog {
        #[serde(default)]
        sample_size: Option<usize>,
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    Isotropic {
        variance: f64,
    },
    Explicit {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
}

fn default_ridge() -> f64 {
    1e-6
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::FitToCatalog {
            sample_size: None,
            ridge: default_ridge(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CatalogSource {
    /// Items drawn from `N(0, I_d)` with a seed derived from the master seed.
    Synthetic { size: usize },
    File { path: PathBuf },
}

impl Default for CatalogSource {
    fn default() -> Self {
        CatalogSource::Synthetic { size: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    /// Questions per trajectory.
    #[serde(rename = "K", alias = "questions")]
    pub questions: usize,
    pub paths: usize,
    pub prior: PriorSpec,
    pub channel: ChannelSpec,
    pub policy: PolicyConfig,
    /// Policies run on identical paths; empty means `policy.policy` alone.
    pub compare: Vec<PolicyKind>,
    pub catalog: CatalogSource,
    /// Posterior draws per step for entropy and misclassification metrics.
    pub metric_samples: usize,
    /// Random evaluation questions per step for the misclassification metric.
    pub misclass_questions: usize,
    /// Prior draws and evaluation questions for estimating `H(W|S)`.
    pub answer_entropy_draws: usize,
    pub answer_entropy_questions: usize,
    pub seed: u64,
    /// Wall-clock decision times are recorded only when set, so that seeded
    /// runs stay byte-identical by default.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            d: 10,
            questions: 20,
            paths: 100,
            prior: PriorSpec::default(),
            channel: ChannelSpec::symmetric(2, 0.7),
            policy: PolicyConfig::default(),
            compare: vec![PolicyKind::EntropyPursuit, PolicyKind::KnowledgeGradient],
            catalog: CatalogSource::default(),
            metric_samples: 20_000,
            misclass_questions: 200,
            answer_entropy_draws: 20_000,
            answer_entropy_questions: 2000,
            seed: 0,
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    /// Reads JSON or TOML, chosen by extension (`.toml`) or by content.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        Self::parse(&text, is_toml).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, toml_hint: bool) -> Result<Self> {
        if toml_hint || !text.trim_start().starts_with('{') {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
        } else {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
        }
    }

    pub fn policies(&self) -> Vec<PolicyKind> {
        if self.compare.is_empty() {
            vec![self.policy.policy]
        } else {
            self.compare.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.questions == 0 {
            return Err(Error::Config("paths and K must be at least 1".into()));
        }
        if self.d < 2 {
            return Err(Error::Config("d must be at least 2".into()));
        }
        if self.metric_samples == 0 || self.misclass_questions == 0 {
            return Err(Error::Config("metric sample counts must be positive".into()));
        }
        if self.policy.evaluation_size < 2 {
            return Err(Error::Config("evaluation size n must be at least 2".into()));
        }
        for kind in self.policies() {
            PolicyConfig {
                policy: kind,
                ..self.policy.clone()
            }
            .validate(None)
            .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_toml_agree() {
        let json = r#"{"d": 3, "K": 5, "paths": 2, "seed": 9,
            "channel": {"symmetric": {"m": 3, "alpha": 0.5}},
            "policy": {"policy": "knowledge_gradient", "m": 3, "N": 6, "n": 2},
            "prior": {"kind": "isotropic", "variance": 2.0}}"#;
        let toml = r#"
            d = 3
            K = 5
            paths = 2
            seed = 9
            [channel.symmetric]
            m = 3
            alpha = 0.5
            [policy]
            policy = "knowledge_gradient"
            m = 3
            N = 6
            n = 2
            [prior]
            kind = "isotropic"
            variance = 2.0
        "#;
        let a = ExperimentConfig::parse(json, false).unwrap();
        let b = ExperimentConfig::parse(toml, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.policy.subsample_size, 6);
        a.validate().unwrap();
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::parse(r#"{"dimension": 3}"#, false).is_err());
    }
}
