//! Simulated-user experiments: ground-truth classifiers, adaptive
//! trajectories under each policy, and aggregate entropy and
//! misclassification metrics.

mod config;
mod experiment;
mod output;
mod trajectory;

pub use config::{CatalogSource, ExperimentConfig, PriorSpec};
pub use experiment::{run_experiment, ExperimentContext, ExperimentReport, PolicySummary, StepSummary};
pub use output::{write_atomic, write_outputs, MetricsRow};
pub use trajectory::{run_trajectory, TrajectoryMetrics};

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::belief::{model_consistent_answer, Question};
use crate::channel::DiscreteNoiseChannel;
use crate::error::Result;

/// Seed for the `index`-th use of stream `stream` under `master`.
pub fn derive_seed(master: u64, stream: &str, index: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stream.as_bytes());
    for i in index {
        h.update(i.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Observed signal for a user with classifier `theta`: the model-consistent
/// answer passed through row `z` of the channel.
pub fn simulate_response<R: Rng + ?Sized>(
    theta: &[f64],
    question: &Question,
    channel: &DiscreteNoiseChannel,
    rng: &mut R,
) -> Result<usize> {
    let z = model_consistent_answer(theta, question)?;
    let row = channel.row(z);
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (y, p) in row.iter().enumerate() {
        acc += p;
        if r < acc {
            return Ok(y);
        }
    }
    Ok(row.iter().rposition(|&p| p > 0.0).unwrap_or(z))
}

/// `max(0, (H(W|S) - C k - 1) / log2 n)`.
pub fn fano_lower_bound(k: usize, capacity_bits: f64, answer_entropy_bits: f64, n: usize) -> f64 {
    ((answer_entropy_bits - capacity_bits * k as f64 - 1.0) / (n as f64).log2()).max(0.0)
}

#[cfg(test)]
use crate::channel::ChannelSpec;
#[cfg(test)]
use crate::selection::{PolicyConfig, PolicyKind, SamplingConfig};

#[cfg(test)]
pub(crate) fn experiment_tests_config() -> ExperimentConfig {
    ExperimentConfig {
        d: 2,
        questions: 3,
        paths: 2,
        channel: ChannelSpec::symmetric(2, 0.7),
        policy: PolicyConfig {
            subsample_size: 6,
            samples: SamplingConfig {
                count: 300,
                burn_in: 100,
                thinning: 2,
            },
            ..PolicyConfig::default()
        },
        compare: vec![PolicyKind::EntropyPursuit, PolicyKind::KnowledgeGradient, PolicyKind::Continuum],
        catalog: CatalogSource::Synthetic { size: 50 },
        metric_samples: 500,
        misclass_questions: 20,
        answer_entropy_draws: 1000,
        answer_entropy_questions: 50,
        seed: 11,
        ..ExperimentConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fano_examples() {
        assert_eq!(fano_lower_bound(3, 0.4, 1.0, 2), 0.0);
        assert!((fano_lower_bound(1, 0.39, 2.0, 4) - 0.305).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ_by_stream_and_index() {
        let a = derive_seed(7, "path", &[0]);
        assert_eq!(a, derive_seed(7, "path", &[0]));
        assert_ne!(a, derive_seed(7, "path", &[1]));
        assert_ne!(a, derive_seed(7, "truth", &[0]));
        assert_ne!(a, derive_seed(8, "path", &[0]));
    }

    fn frequency(alpha: f64, n: usize) -> f64 {
        let ch = DiscreteNoiseChannel::symmetric(2, alpha).unwrap();
        let q = Question::from_features(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..n)
            .filter(|_| simulate_response(&[1.0, 0.0], &q, &ch, &mut rng).unwrap() == 0)
            .count() as f64
            / n as f64
    }

    #[test]
    fn response_frequencies() {
        let n = 10_000;
        assert_eq!(frequency(1.0, n), 1.0);
        let se = (0.25 / n as f64).sqrt();
        assert!((frequency(0.0, n) - 0.5).abs() < 3.0 * se);
        let se = (0.85 * 0.15 / n as f64).sqrt();
        assert!((frequency(0.7, n) - 0.85).abs() < 3.0 * se);
    }
}
