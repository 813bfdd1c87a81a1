use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CatalogSource, ExperimentConfig, PriorSpec};
use super::trajectory::{mean_and_se, random_question, run_trajectory, TrajectoryMetrics};
use super::{derive_seed, fano_lower_bound};
use crate::belief::{answer_counts, Alternative, Catalog, GaussianPrior, PosteriorSampleSet};
use crate::channel::{compute_capacity, entropy_bits, ChannelAnalysis, DiscreteNoiseChannel, DEFAULT_CAPACITY_TOL};
use crate::error::{Error, Result};
use crate::selection::{FeasibleBox, PolicyKind};

/// Everything shared by the trajectories of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentContext {
    pub config: ExperimentConfig,
    pub catalog: Catalog,
    pub prior: GaussianPrior,
    pub channel: DiscreteNoiseChannel,
    pub analysis: ChannelAnalysis,
    /// Unit cube at the catalog mean, used for synthesized questions.
    pub feasible_box: FeasibleBox,
    /// Monte Carlo `H(W|S)` under the prior, in bits, and its standard error.
    pub answer_entropy_bits: f64,
    pub answer_entropy_se: f64,
}

impl ExperimentContext {
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let catalog = match &config.catalog {
            CatalogSource::Synthetic { size } => synthetic_catalog(*size, config.d, derive_seed(config.seed, "catalog", &[]))?,
            CatalogSource::File { path } => Catalog::load(path)?,
        };
        if catalog.dim() != config.d {
            return Err(Error::Config(format!(
                "catalog dimension {} does not match d = {}",
                catalog.dim(),
                config.d
            )));
        }
        if catalog.len() < config.policy.subsample_size.max(config.policy.evaluation_size) {
            return Err(Error::Config("catalog is smaller than the subsample or evaluation size".into()));
        }
        let prior = match &config.prior {
            PriorSpec::FitToCatalog { sample_size, ridge } => GaussianPrior::fit_to_catalog(&catalog, *sample_size, *ridge)?,
            PriorSpec::Isotropic { variance } => GaussianPrior::isotropic(config.d, *variance)?,
            PriorSpec::Explicit { mean, covariance } => GaussianPrior::new(mean.clone(), covariance.clone())?,
        };
        if prior.dim() != config.d {
            return Err(Error::Config("prior dimension does not match d".into()));
        }
        let channel = config.channel.build()?;
        if channel.m() != config.policy.m {
            return Err(Error::Config(format!(
                "channel has m = {} but the policy asks for m = {}",
                channel.m(),
                config.policy.m
            )));
        }
        let analysis = compute_capacity(&channel, DEFAULT_CAPACITY_TOL)?;
        let feasible_box = FeasibleBox::unit_cube(&catalog.feature_mean());
        let mut ctx = Self {
            config,
            catalog,
            prior,
            channel,
            analysis,
            feasible_box,
            answer_entropy_bits: 0.0,
            answer_entropy_se: 0.0,
        };
        let (h, se) = answer_entropy(&ctx)?;
        ctx.answer_entropy_bits = h;
        ctx.answer_entropy_se = se;
        Ok(ctx)
    }
}

fn synthetic_catalog(size: usize, d: usize, seed: u64) -> Result<Catalog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alts = (0..size)
        .map(|i| Alternative::new(i.to_string(), (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()))
        .collect::<Result<Vec<_>>>()?;
    Catalog::new(alts)
}

/// `E_S[H(W | S)]` with `W` the prior-predictive answer to a random size-`n`
/// catalog question.
fn answer_entropy(ctx: &ExperimentContext) -> Result<(f64, f64)> {
    let cfg = &ctx.config;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "answer_entropy", &[]));
    let draws: Vec<Vec<f64>> = (0..cfg.answer_entropy_draws).map(|_| ctx.prior.sample(&mut rng)).collect();
    let draws = PosteriorSampleSet::from_draws(cfg.d, &draws)?;
    let mut values = Vec::with_capacity(cfg.answer_entropy_questions);
    for _ in 0..cfg.answer_entropy_questions {
        let q = random_question(ctx, cfg.policy.evaluation_size, &mut rng)?;
        let counts = answer_counts(&draws, &q)?;
        let u: Vec<f64> = counts.iter().map(|&c| c as f64 / draws.len() as f64).collect();
        values.push(entropy_bits(&u));
    }
    Ok(mean_and_se(&values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub entropy_bits: f64,
    pub entropy_se: f64,
    pub misclass: f64,
    pub misclass_se: f64,
    pub phi_bits: f64,
    pub fano_bound: f64,
    pub decision_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub steps: Vec<StepSummary>,
}

/// Per-step mean of `first - second` over paired paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDifference {
    pub first: PolicyKind,
    pub second: PolicyKind,
    pub misclass_diff: Vec<f64>,
    pub misclass_diff_se: Vec<f64>,
    pub entropy_diff: Vec<f64>,
    pub entropy_diff_se: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub catalog_hash: String,
    pub capacity_bits: f64,
    pub answer_entropy_bits: f64,
    pub answer_entropy_se: f64,
    pub policies: Vec<PolicySummary>,
    pub paired: Vec<PairedDifference>,
    #[serde(skip)]
    pub trajectories: Vec<TrajectoryMetrics>,
}

impl ExperimentReport {
    pub fn summary(&self, policy: PolicyKind) -> Option<&PolicySummary> {
        self.policies.iter().find(|s| s.policy == policy)
    }
}

/// Runs every configured policy on `paths` simulated users in parallel.
/// Output is independent of the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let ctx = ExperimentContext::build(config.clone())?;
    let policies = ctx.config.policies();
    let jobs: Vec<(PolicyKind, usize)> = policies
        .iter()
        .flat_map(|&k| (0..ctx.config.paths).map(move |p| (k, p)))
        .collect();
    let trajectories = jobs
        .par_iter()
        .map(|&(k, p)| run_trajectory(&ctx, k, p))
        .collect::<Result<Vec<_>>>()?;

    let of = |k: PolicyKind| trajectories.iter().filter(move |t| t.policy == k).collect::<Vec<_>>();
    let summaries = policies
        .iter()
        .map(|&k| summarize(&ctx, k, &of(k)))
        .collect();
    let mut paired = Vec::new();
    for (i, &a) in policies.iter().enumerate() {
        for &b in &policies[i + 1..] {
            paired.push(pair(a, b, &of(a), &of(b), ctx.config.questions));
        }
    }
    Ok(ExperimentReport {
        catalog_hash: ctx.catalog.content_hash(),
        capacity_bits: ctx.analysis.capacity_bits,
        answer_entropy_bits: ctx.answer_entropy_bits,
        answer_entropy_se: ctx.answer_entropy_se,
        config: ctx.config,
        policies: summaries,
        paired,
        trajectories,
    })
}

/// Across-path mean and standard error; a single path reports its own
/// Monte Carlo error.
fn aggregate(values: &[f64], own_se: f64) -> (f64, f64) {
    if values.len() == 1 {
        (values[0], own_se)
    } else {
        mean_and_se(values)
    }
}

fn summarize(ctx: &ExperimentContext, policy: PolicyKind, paths: &[&TrajectoryMetrics]) -> PolicySummary {
    let steps = (0..=ctx.config.questions)
        .map(|k| {
            let col = |f: fn(&super::MetricsRow) -> f64| paths.iter().map(|t| f(&t.rows[k])).collect::<Vec<_>>();
            let own = &paths[0].rows[k];
            let (entropy_bits, entropy_se) = aggregate(&col(|r| r.entropy_bits), own.entropy_se);
            let (misclass, misclass_se) = aggregate(&col(|r| r.misclass), own.misclass_se);
            let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            StepSummary {
                step: k,
                entropy_bits,
                entropy_se,
                misclass,
                misclass_se,
                phi_bits: mean(col(|r| r.phi_bits)),
                fano_bound: fano_lower_bound(
                    k,
                    ctx.analysis.capacity_bits,
                    ctx.answer_entropy_bits,
                    ctx.config.policy.evaluation_size,
                ),
                decision_ms: mean(col(|r| r.decision_ms)),
            }
        })
        .collect();
    PolicySummary { policy, steps }
}

fn pair(
    a: PolicyKind,
    b: PolicyKind,
    ta: &[&TrajectoryMetrics],
    tb: &[&TrajectoryMetrics],
    questions: usize,
) -> PairedDifference {
    let mut out = PairedDifference {
        first: a,
        second: b,
        misclass_diff: Vec::new(),
        misclass_diff_se: Vec::new(),
        entropy_diff: Vec::new(),
        entropy_diff_se: Vec::new(),
    };
    for k in 0..=questions {
        let diffs = |f: fn(&super::MetricsRow) -> f64| {
            ta.iter().zip(tb).map(|(x, y)| f(&x.rows[k]) - f(&y.rows[k])).collect::<Vec<_>>()
        };
        let (m, s) = mean_and_se(&diffs(|r| r.misclass));
        out.misclass_diff.push(m);
        out.misclass_diff_se.push(s);
        let (m, s) = mean_and_se(&diffs(|r| r.entropy_bits));
        out.entropy_diff.push(m);
        out.entropy_diff_se.push(s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelSpec;

    #[test]
    fn seeded_runs_are_reproducible() {
        let cfg = crate::simulation::experiment_tests_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        assert_eq!(a.policies.len(), 3);
        assert_eq!(a.paired.len(), 3);
        for s in &a.policies {
            assert_eq!(s.steps.len(), 4);
            assert!(s.steps.iter().all(|x| x.misclass >= 0.0 && x.misclass <= 0.5));
        }
    }

    #[test]
    fn policies_share_ground_truth() {
        let r = run_experiment(&crate::simulation::experiment_tests_config()).unwrap();
        for p in 0..2 {
            let truths: Vec<_> = r.trajectories.iter().filter(|t| t.path == p).map(|t| &t.theta_true).collect();
            assert!(truths.windows(2).all(|w| w[0] == w[1]));
            let step0: Vec<_> = r.trajectories.iter().filter(|t| t.path == p).map(|t| t.rows[0].misclass).collect();
            assert!(step0.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn single_path_aggregate_matches_trajectory() {
        let mut cfg = crate::simulation::experiment_tests_config();
        cfg.paths = 1;
        cfg.compare = vec![PolicyKind::EntropyPursuit];
        let r = run_experiment(&cfg).unwrap();
        let t = &r.trajectories[0];
        for (s, row) in r.policies[0].steps.iter().zip(&t.rows) {
            assert_eq!(s.entropy_bits, row.entropy_bits);
            assert_eq!(s.entropy_se, row.entropy_se);
            assert_eq!(s.misclass, row.misclass);
            assert_eq!(s.misclass_se, row.misclass_se);
        }
    }

    #[test]
    fn mismatched_channel_is_a_config_error() {
        let mut cfg = crate::simulation::experiment_tests_config();
        cfg.channel = ChannelSpec::symmetric(3, 0.7);
        assert!(matches!(ExperimentContext::build(cfg), Err(Error::Config(_))));
    }
}
