//! Posterior over the linear classifier and the objects it is built from.
//!
//! Answer and signal indices are 0-based throughout the crate; external
//! surfaces (HTTP, CLI) translate to 1-based choices.

mod catalog;
mod estimates;
mod prior;
mod sampler;

pub use catalog::{Alternative, Catalog};
pub use estimates::{
    answer_counts, differential_entropy_estimate, halfspace_depth_direction, halfspace_depth_estimate,
    predictive_distribution, sample_answers, EntropyEstimate, DEFAULT_DEPTH_RESTARTS,
};
pub use prior::GaussianPrior;
pub use sampler::{hit_and_run_sample, hit_and_run_sample_from, PosteriorSampleSet, SamplerSettings};

use serde::{Deserialize, Serialize};

use crate::channel::{DiscreteNoiseChannel, PredictiveDistribution};
use crate::error::{Error, Result};

/// Densities below this are clamped before taking logs.
pub(crate) const DENSITY_FLOOR: f64 = 1e-300;

/// An ordered tuple of alternatives offered together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    alternatives: Vec<Alternative>,
}

impl Question {
    pub fn new(alternatives: Vec<Alternative>) -> Result<Self> {
        if alternatives.len() < 2 {
            return Err(Error::invalid("a question needs at least 2 alternatives"));
        }
        let d = alternatives[0].dim();
        if alternatives.iter().any(|a| a.dim() != d) {
            return Err(Error::invalid("alternatives in a question must share a dimension"));
        }
        for (i, a) in alternatives.iter().enumerate() {
            if alternatives[..i].iter().any(|b| b.id == a.id) {
                return Err(Error::invalid(format!("duplicate alternative id {:?}", a.id)));
            }
        }
        Ok(Self { alternatives })
    }

    /// Question made of bare feature vectors, ids `"0"`, `"1"`, ...
    pub fn from_features(features: Vec<Vec<f64>>) -> Result<Self> {
        let alts = features
            .into_iter()
            .enumerate()
            .map(|(i, f)| Alternative::new(i.to_string(), f))
            .collect::<Result<Vec<_>>>()?;
        Self::new(alts)
    }

    pub fn m(&self) -> usize {
        self.alternatives.len()
    }

    pub fn dim(&self) -> usize {
        self.alternatives[0].dim()
    }

    pub fn alternatives(&self) -> &[Alternative] {
        &self.alternatives
    }

    pub fn features(&self, z: usize) -> &[f64] {
        &self.alternatives[z].features
    }

    /// The same question with alternatives reordered: new slot `i` holds old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.m() {
            return Err(Error::invalid("permutation has the wrong length"));
        }
        Self::new(perm.iter().map(|&i| self.alternatives[i].clone()).collect())
    }
}

/// Index of the first alternative with maximal utility `theta'x`.
pub(crate) fn argmax_utility<'a>(theta: &[f64], rows: impl Iterator<Item = &'a [f64]>) -> usize {
    argmax_utility_index(rows.map(|x| dot(theta, x)))
}

/// Position of the first maximum.
#[inline]
pub(crate) fn argmax_utility_index(utilities: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, u) in utilities.enumerate() {
        if u > best.1 {
            best = (i, u);
        }
    }
    best.0
}

/// Model-consistent answer: smallest index attaining `max_i theta'x_i`.
pub fn model_consistent_answer(theta: &[f64], question: &Question) -> Result<usize> {
    if theta.len() != question.dim() {
        return Err(Error::invalid(format!(
            "theta has dimension {} but the question has {}",
            theta.len(),
            question.dim()
        )));
    }
    Ok(argmax_utility(theta, question.alternatives.iter().map(|a| a.features.as_slice())))
}

/// One answered question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub question: Question,
    /// Observed signal, 0-based.
    pub signal: usize,
}

/// Gaussian prior, channel and response history. The posterior density is
/// `p_0(theta) * prod_l P[z_l(theta), y_l]` up to a normalizer tracked by a
/// running ledger of log predictive probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    prior: GaussianPrior,
    channel: DiscreteNoiseChannel,
    history: Vec<ResponseRecord>,
    log_normalizer_estimate: f64,
    /// Delta-method variance of the ledger, in nats squared.
    #[serde(default)]
    log_normalizer_variance: f64,
}

impl BeliefState {
    pub fn new(prior: GaussianPrior, channel: DiscreteNoiseChannel) -> Self {
        Self {
            prior,
            channel,
            history: Vec::new(),
            log_normalizer_estimate: 0.0,
            log_normalizer_variance: 0.0,
        }
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn channel(&self) -> &DiscreteNoiseChannel {
        &self.channel
    }

    pub fn history(&self) -> &[ResponseRecord] {
        &self.history
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    /// Running estimate of `ln Z_k`, in nats.
    pub fn log_normalizer_estimate(&self) -> f64 {
        self.log_normalizer_estimate
    }

    pub fn log_normalizer_variance(&self) -> f64 {
        self.log_normalizer_variance
    }

    /// Appends a response; `predictive` is the current estimate of `u(X)`,
    /// used only for the normalizer ledger.
    pub fn update(
        &self,
        question: &Question,
        signal: usize,
        predictive: &PredictiveDistribution,
    ) -> Result<BeliefState> {
        let m = self.channel.m();
        if question.m() != m {
            return Err(Error::invalid(format!(
                "question has {} alternatives but the channel has m = {m}",
                question.m()
            )));
        }
        if question.dim() != self.dim() {
            return Err(Error::invalid("question dimension does not match the prior"));
        }
        if signal >= m {
            return Err(Error::invalid(format!("signal {signal} out of range for m = {m}")));
        }
        if predictive.len() != m {
            return Err(Error::invalid("predictive estimate has the wrong length"));
        }
        let u = predictive.weights();
        let col = |z: usize| self.channel.entry(z, signal);
        let p: f64 = (0..m).map(|z| u[z] * col(z)).sum();
        let p = p.max(DENSITY_FLOOR);
        let var = match predictive.sample_count() {
            Some(n) if n > 0 => {
                let second: f64 = (0..m).map(|z| u[z] * col(z) * col(z)).sum();
                ((second - p * p).max(0.0) / n as f64) / (p * p)
            }
            _ => 0.0,
        };
        let mut next = self.clone();
        next.history.push(ResponseRecord {
            question: question.clone(),
            signal,
        });
        next.log_normalizer_estimate += p.ln();
        next.log_normalizer_variance += var;
        Ok(next)
    }

    /// `ln p_0(theta) + sum_l ln P[z_l(theta), y_l]`; `-inf` off the support.
    pub fn log_unnormalized_posterior(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.dim() {
            return f64::NAN;
        }
        self.prior.log_density(theta) + self.log_likelihood(theta)
    }

    pub(crate) fn log_likelihood(&self, theta: &[f64]) -> f64 {
        let mut total = 0.0;
        for rec in &self.history {
            let z = argmax_utility(theta, rec.question.alternatives.iter().map(|a| a.features.as_slice()));
            let p = self.channel.entry(z, rec.signal);
            if p <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += p.ln();
        }
        total
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
