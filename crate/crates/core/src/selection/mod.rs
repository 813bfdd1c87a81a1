//! Question selection: entropy pursuit and knowledge gradient over a
//! subsampled catalog, and synthesis of questions whose predictive
//! distribution hits a prescribed target.

mod continuum;
mod fan;
mod policy;
mod recovery;

pub use continuum::{
    construct_question_continuum, construct_question_with_direction, project_predictive, ContinuumOptions, ContinuumQuestion, ProjectedTarget,
};
pub use fan::{construct_fan_2d, ArcMass, EmpiricalAngles, FanConstruction, UniformCircle, FAN_MASS_TOL};
pub use policy::{
    candidate_tuples, entropy_pursuit_select, knowledge_gradient_score, knowledge_gradient_select,
    misclassification_estimate, subsample_indices, Selection,
};
pub use recovery::{recover_alternatives_2d, FeasibleBox};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    EntropyPursuit,
    KnowledgeGradient,
    /// Synthesized questions targeting the capacity-achieving distribution.
    Continuum,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::EntropyPursuit => "entropy_pursuit",
            PolicyKind::KnowledgeGradient => "knowledge_gradient",
            PolicyKind::Continuum => "continuum",
        }
    }
}

/// Posterior sampling knobs used for a decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub count: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            count: 4000,
            burn_in: 1000,
            thinning: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub policy: PolicyKind,
    /// Alternatives per question.
    pub m: usize,
    /// Catalog subsample size `N`.
    #[serde(rename = "N", alias = "subsample_size")]
    pub subsample_size: usize,
    /// Evaluation question size `n` for knowledge gradient.
    #[serde(rename = "n", alias = "evaluation_size")]
    pub evaluation_size: usize,
    /// Slack below `1 - depth` for continuum targets; `None` picks 1e-3 for m > 2 and 0 for m = 2.
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub samples: SamplingConfig,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::EntropyPursuit,
            m: 2,
            subsample_size: 15,
            evaluation_size: 2,
            epsilon: None,
            seed: 0,
            samples: SamplingConfig::default(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self, catalog_len: Option<usize>) -> Result<()> {
        if self.m < 2 {
            return Err(Error::invalid("m must be at least 2"));
        }
        if self.policy != PolicyKind::Continuum {
            if self.subsample_size < self.m {
                return Err(Error::invalid(format!(
                    "subsample size N = {} is below m = {}",
                    self.subsample_size, self.m
                )));
            }
            if let Some(len) = catalog_len {
                if self.subsample_size > len {
                    return Err(Error::invalid(format!(
                        "subsample size N = {} exceeds the catalog size {len}",
                        self.subsample_size
                    )));
                }
            }
        }
        if self.policy == PolicyKind::KnowledgeGradient
            && (self.evaluation_size < 2 || self.evaluation_size > self.subsample_size)
        {
            return Err(Error::invalid("evaluation size n must satisfy 2 <= n <= N"));
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0) {
                return Err(Error::invalid("epsilon must be nonnegative"));
            }
        }
        if self.samples.count == 0 || self.samples.thinning == 0 {
            return Err(Error::invalid("sample count and thinning must be positive"));
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(if self.m > 2 { 1e-3 } else { 0.0 })
    }
}
