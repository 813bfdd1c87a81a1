use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

use super::experiment::ExperimentContext;
use super::output::MetricsRow;
use super::{derive_seed, simulate_response};
use crate::belief::{
    differential_entropy_estimate, halfspace_depth_direction, hit_and_run_sample_from, predictive_distribution,
    BeliefState, PosteriorSampleSet, Question, SamplerSettings, DEFAULT_DEPTH_RESTARTS,
};
use crate::channel::{channel_equation, PredictiveDistribution};
use crate::error::{Error, Result};
use crate::selection::{
    construct_question_with_direction, entropy_pursuit_select, knowledge_gradient_select,
    misclassification_estimate, project_predictive, PolicyConfig, PolicyKind,
};

/// Per-step metrics of one simulated user under one policy; row 0 is the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMetrics {
    pub policy: PolicyKind,
    pub path: usize,
    pub theta_true: Vec<f64>,
    pub rows: Vec<MetricsRow>,
}

/// Runs `K` questions for the user of path `path`. The classifier, response
/// noise, sampler seeds and evaluation questions depend only on the master
/// seed and the path, so different policies see common random numbers.
pub fn run_trajectory(ctx: &ExperimentContext, policy: PolicyKind, path: usize) -> Result<TrajectoryMetrics> {
    let cfg = &ctx.config;
    let master = cfg.seed;
    let p = path as u64;
    let policy_cfg = PolicyConfig {
        policy,
        ..cfg.policy.clone()
    };
    let sampling = policy_cfg.samples;

    let theta_true = ctx.prior.sample(&mut ChaCha8Rng::seed_from_u64(derive_seed(master, "truth", &[p])));
    let mut response_rng = ChaCha8Rng::seed_from_u64(derive_seed(master, "response", &[p]));

    let mut belief = BeliefState::new(ctx.prior.clone(), ctx.channel.clone());
    let settings = |step: usize| SamplerSettings {
        count: cfg.metric_samples,
        burn_in: sampling.burn_in,
        thinning: sampling.thinning,
        seed: derive_seed(master, "sampler", &[p, step as u64]),
    };
    let mut samples = hit_and_run_sample_from(&belief, settings(0), None)?;
    let (misclass, misclass_se) = misclassification_metric(ctx, &samples, p, 0)?;
    let mut rows = vec![MetricsRow {
        policy,
        path,
        step: 0,
        entropy_bits: ctx.prior.entropy_bits(),
        entropy_se: 0.0,
        misclass,
        misclass_se,
        phi_bits: 0.0,
        decision_ms: 0.0,
    }];

    for step in 1..=cfg.questions {
        let decision_seed = derive_seed(master, "decision", &[p, step as u64]);
        let policy_samples = samples.spread(sampling.count);
        let started = Instant::now();
        let question = match policy {
            PolicyKind::EntropyPursuit => {
                entropy_pursuit_select(&belief, &policy_samples, &ctx.catalog, &policy_cfg, decision_seed)?.question
            }
            PolicyKind::KnowledgeGradient => {
                knowledge_gradient_select(&belief, &policy_samples, &ctx.catalog, &policy_cfg, decision_seed)?
                    .question
            }
            PolicyKind::Continuum => continuum_question(ctx, &policy_samples, &policy_cfg, decision_seed)?,
        };
        let decision_ms = if cfg.record_timing {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };

        let u_hat = predictive_distribution(&samples, &question)?;
        let phi_bits = channel_equation(&u_hat, &ctx.channel)?;
        let signal = simulate_response(&theta_true, &question, &ctx.channel, &mut response_rng)?;
        belief = belief.update(&question, signal, &u_hat)?;
        samples = hit_and_run_sample_from(&belief, settings(step), Some(&samples))?;

        let entropy = differential_entropy_estimate(&belief, &samples)?;
        let (misclass, misclass_se) = misclassification_metric(ctx, &samples, p, step)?;
        rows.push(MetricsRow {
            policy,
            path,
            step,
            entropy_bits: entropy.bits,
            entropy_se: entropy.se,
            misclass,
            misclass_se,
            phi_bits,
            decision_ms,
        });
    }
    Ok(TrajectoryMetrics {
        policy,
        path,
        theta_true,
        rows,
    })
}

/// Mean posterior misclassification over random size-`n` catalog questions,
/// with the standard error over those questions.
fn misclassification_metric(
    ctx: &ExperimentContext,
    samples: &PosteriorSampleSet,
    path: u64,
    step: usize,
) -> Result<(f64, f64)> {
    let count = ctx.config.misclass_questions;
    let n = ctx.config.policy.evaluation_size;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ctx.config.seed, "misclass", &[path, step as u64]));
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let q = random_question(ctx, n, &mut rng)?;
        values.push(misclassification_estimate(samples, None, &q)?);
    }
    Ok(mean_and_se(&values))
}

pub(crate) fn random_question(ctx: &ExperimentContext, n: usize, rng: &mut ChaCha8Rng) -> Result<Question> {
    let idx = index::sample(rng, ctx.catalog.len(), n);
    Question::new(idx.iter().map(|i| ctx.catalog.get(i).clone()).collect())
}

pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Targets the capacity-achieving distribution, projected toward feasibility
/// when the posterior is too concentrated. Construction failures are retried
/// with a tenfold larger slack, up to three times.
fn continuum_question(
    ctx: &ExperimentContext,
    samples: &PosteriorSampleSet,
    cfg: &PolicyConfig,
    seed: u64,
) -> Result<Question> {
    let m = ctx.channel.m();
    let target = {
        let u = ctx.analysis.optimal_u.weights();
        if u.iter().all(|&x| x > 0.0) {
            ctx.analysis.optimal_u.clone()
        } else {
            let mix = 1e-3;
            PredictiveDistribution::from_unnormalized(u.iter().map(|x| (1.0 - mix) * x + mix / m as f64).collect())?
        }
    };
    let (depth, v) = halfspace_depth_direction(samples, DEFAULT_DEPTH_RESTARTS, seed);
    let mut epsilon = cfg.epsilon();
    let mut last = None;
    for _ in 0..4 {
        let projected = project_predictive(&target, depth, epsilon)?;
        match construct_question_with_direction(samples, &projected.u, &ctx.feasible_box, depth, &v) {
            Ok(cq) => return Ok(cq.question),
            Err(e @ (Error::InfeasibleTarget(_) | Error::Construction(_))) => last = Some(e),
            Err(e) => return Err(e),
        }
        epsilon = if epsilon > 0.0 { epsilon * 10.0 } else { 1e-3 };
    }
    Err(last.expect("at least one attempt"))
}
