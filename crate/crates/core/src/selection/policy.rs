use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{PolicyConfig, PolicyKind};
use crate::belief::{argmax_utility_index, dot, Alternative, BeliefState, Catalog, PosteriorSampleSet, Question};
use crate::channel::{channel_equation, DiscreteNoiseChannel, PredictiveDistribution};
use crate::error::{Error, Result};

/// A chosen question with the estimates behind the choice.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub question: Question,
    /// Estimated predictive distribution of the chosen question.
    pub predictive: PredictiveDistribution,
    /// `phi(u; P)` for entropy pursuit, expected misclassification for knowledge gradient.
    pub score: f64,
    /// Catalog indices of the subsample the choice was made from, ascending.
    pub subsample: Vec<usize>,
    /// Positions within the subsample of the chosen alternatives, in question order.
    pub chosen: Vec<usize>,
}

/// `n` distinct catalog indices drawn uniformly, returned ascending.
pub fn subsample_indices(catalog_len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > catalog_len {
        return Err(Error::invalid(format!("cannot subsample {n} of {catalog_len} alternatives")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = index::sample(&mut rng, catalog_len, n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Size-`m` tuples of `0..n` in lexicographic order: combinations when the
/// channel is invariant under relabeling, permutations otherwise.
pub fn candidate_tuples(n: usize, m: usize, ordered: bool) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(m);
    let mut used = vec![false; n];
    fn rec(n: usize, m: usize, ordered: bool, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        let start = if ordered { 0 } else { cur.last().map_or(0, |&l| l + 1) };
        for i in start..n {
            if used[i] {
                continue;
            }
            used[i] = true;
            cur.push(i);
            rec(n, m, ordered, cur, used, out);
            cur.pop();
            used[i] = false;
        }
    }
    rec(n, m, ordered, &mut cur, &mut used, &mut out);
    out
}

/// Utilities `theta_s' x_j`, row per draw.
struct UtilityTable {
    n_items: usize,
    values: Vec<f64>,
}

impl UtilityTable {
    fn new(samples: &PosteriorSampleSet, items: &[&Alternative]) -> Self {
        let mut values = Vec::with_capacity(samples.len() * items.len());
        for theta in samples.iter() {
            values.extend(items.iter().map(|a| dot(theta, &a.features)));
        }
        Self {
            n_items: items.len(),
            values,
        }
    }

    fn draws(&self) -> usize {
        self.values.len() / self.n_items
    }

    /// First position in `tuple` of the maximal utility for draw `s`.
    #[inline]
    fn answer(&self, s: usize, tuple: &[usize]) -> usize {
        let row = &self.values[s * self.n_items..(s + 1) * self.n_items];
        argmax_utility_index(tuple.iter().map(|&j| row[j]))
    }

    fn answers(&self, tuple: &[usize]) -> Vec<usize> {
        (0..self.draws()).map(|s| self.answer(s, tuple)).collect()
    }
}

fn gather<'a>(catalog: &'a Catalog, config: &PolicyConfig, seed: u64) -> Result<(Vec<usize>, Vec<&'a Alternative>)> {
    config.validate(Some(catalog.len()))?;
    let sub = subsample_indices(catalog.len(), config.subsample_size, seed)?;
    let items = sub.iter().map(|&i| catalog.get(i)).collect();
    Ok((sub, items))
}

fn check_inputs(belief: &BeliefState, samples: &PosteriorSampleSet, catalog: &Catalog, config: &PolicyConfig) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    if samples.dim() != catalog.dim() || belief.dim() != catalog.dim() {
        return Err(Error::invalid("catalog dimension does not match the belief"));
    }
    if belief.channel().m() != config.m {
        return Err(Error::invalid("policy m does not match the channel"));
    }
    Ok(())
}

fn question_of(items: &[&Alternative], tuple: &[usize]) -> Result<Question> {
    Question::new(tuple.iter().map(|&j| items[j].clone()).collect())
}

fn counts_of(answers: &[usize], m: usize) -> PredictiveDistribution {
    let mut c = vec![0usize; m];
    answers.iter().for_each(|&z| c[z] += 1);
    let n = answers.len();
    PredictiveDistribution::new(c.iter().map(|&k| k as f64 / n as f64).collect())
        .expect("fractions form a distribution")
        .with_sample_count(n)
}

/// Picks the subsampled question maximizing `phi(u^(X); P)`. Ties go to the
/// lexicographically first candidate.
pub fn entropy_pursuit_select(
    belief: &BeliefState,
    samples: &PosteriorSampleSet,
    catalog: &Catalog,
    config: &PolicyConfig,
    seed: u64,
) -> Result<Selection> {
    check_inputs(belief, samples, catalog, config)?;
    if config.policy != PolicyKind::EntropyPursuit {
        return Err(Error::invalid("config does not select entropy pursuit"));
    }
    let channel = belief.channel();
    let (sub, items) = gather(catalog, config, seed)?;
    let table = UtilityTable::new(samples, &items);
    let tuples = candidate_tuples(items.len(), config.m, !channel.is_permutation_invariant());
    let scored: Vec<(f64, PredictiveDistribution)> = tuples
        .par_iter()
        .map(|t| {
            let u = counts_of(&table.answers(t), config.m);
            (channel_equation(&u, channel).expect("dimensions agree"), u)
        })
        .collect();
    let mut best = 0;
    for (i, (s, _)) in scored.iter().enumerate() {
        if *s > scored[best].0 {
            best = i;
        }
    }
    let (score, predictive) = scored[best].clone();
    Ok(Selection {
        question: question_of(&items, &tuples[best])?,
        predictive,
        score,
        subsample: sub,
        chosen: tuples[best].clone(),
    })
}

/// Draw membership of each answer region as a bitset.
struct Bitsets {
    words: usize,
    sets: Vec<u64>,
}

impl Bitsets {
    fn from_answers(answers: &[usize], k: usize) -> Self {
        let words = answers.len().div_ceil(64);
        let mut sets = vec![0u64; k * words];
        for (s, &z) in answers.iter().enumerate() {
            sets[z * words + s / 64] |= 1 << (s % 64);
        }
        Self { words, sets }
    }

    fn get(&self, z: usize) -> &[u64] {
        &self.sets[z * self.words..(z + 1) * self.words]
    }

    fn intersect(&self, z: usize, other: &Bitsets, w: usize) -> u64 {
        self.get(z)
            .iter()
            .zip(other.get(w))
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }
}

/// Expected next-step misclassification of asking `tuple`, averaged over all
/// size-`n` evaluation questions of the subsample.
///
/// After signal `y` the reweighted probability of evaluation answer `w` is
/// `sum_z P[z,y] C[z][w] / sum_z P[z,y] c_z`, where `C[z][w]` counts draws
/// answering `z` to the candidate and `w` to the evaluation question. Its
/// signal-expectation collapses to `1 - (1/n_s) sum_y max_w sum_z P[z,y] C[z][w]`.
fn kg_score(
    channel: &DiscreteNoiseChannel,
    cand: &Bitsets,
    evals: &[Bitsets],
    m: usize,
    n_eval: usize,
    draws: usize,
) -> f64 {
    let mut c = vec![0.0; m * n_eval];
    let mut total = 0.0;
    for ev in evals {
        for z in 0..m {
            for w in 0..n_eval {
                c[z * n_eval + w] = cand.intersect(z, ev, w) as f64;
            }
        }
        let mut correct = 0.0;
        for y in 0..m {
            let mut best = 0.0f64;
            for w in 0..n_eval {
                let v: f64 = (0..m).map(|z| channel.entry(z, y) * c[z * n_eval + w]).sum();
                best = best.max(v);
            }
            correct += best;
        }
        total += 1.0 - correct / draws as f64;
    }
    total / evals.len() as f64
}

/// Knowledge-gradient score of one question: expected misclassification
/// after asking it, averaged over every size-`n` subset of `evaluation_pool`.
pub fn knowledge_gradient_score(
    channel: &DiscreteNoiseChannel,
    samples: &PosteriorSampleSet,
    question: &Question,
    evaluation_pool: &[Alternative],
    n: usize,
) -> Result<f64> {
    let refs: Vec<&Alternative> = evaluation_pool.iter().chain(question.alternatives()).collect();
    let table = UtilityTable::new(samples, &refs);
    let p = evaluation_pool.len();
    let cand_tuple: Vec<usize> = (p..p + question.m()).collect();
    let cand = Bitsets::from_answers(&table.answers(&cand_tuple), question.m());
    let evals: Vec<Bitsets> = candidate_tuples(p, n, false)
        .iter()
        .map(|t| Bitsets::from_answers(&table.answers(t), n))
        .collect();
    Ok(kg_score(channel, &cand, &evals, question.m(), n, samples.len()))
}

/// Picks the subsampled question minimizing expected next-step
/// misclassification. Hypothetical posteriors reweight the existing draws.
pub fn knowledge_gradient_select(
    belief: &BeliefState,
    samples: &PosteriorSampleSet,
    catalog: &Catalog,
    config: &PolicyConfig,
    seed: u64,
) -> Result<Selection> {
    check_inputs(belief, samples, catalog, config)?;
    if config.policy != PolicyKind::KnowledgeGradient {
        return Err(Error::invalid("config does not select knowledge gradient"));
    }
    let channel = belief.channel();
    let (sub, items) = gather(catalog, config, seed)?;
    let table = UtilityTable::new(samples, &items);
    let n_eval = config.evaluation_size;
    let evals: Vec<Bitsets> = candidate_tuples(items.len(), n_eval, false)
        .iter()
        .map(|t| Bitsets::from_answers(&table.answers(t), n_eval))
        .collect();
    let tuples = candidate_tuples(items.len(), config.m, !channel.is_permutation_invariant());
    let scored: Vec<(f64, Vec<usize>)> = tuples
        .par_iter()
        .map(|t| {
            let answers = table.answers(t);
            let cand = Bitsets::from_answers(&answers, config.m);
            (kg_score(channel, &cand, &evals, config.m, n_eval, samples.len()), answers)
        })
        .collect();
    let mut best = 0;
    for (i, (s, _)) in scored.iter().enumerate() {
        if *s < scored[best].0 {
            best = i;
        }
    }
    Ok(Selection {
        question: question_of(&items, &tuples[best])?,
        predictive: counts_of(&scored[best].1, config.m),
        score: scored[best].0,
        subsample: sub,
        chosen: tuples[best].clone(),
    })
}

/// `1 - max_w` weighted fraction of draws answering `w` to `question`.
pub fn misclassification_estimate(
    samples: &PosteriorSampleSet,
    weights: Option<&[f64]>,
    question: &Question,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    if weights.is_some_and(|w| w.len() != samples.len()) {
        return Err(Error::invalid("one weight per draw is required"));
    }
    let answers = crate::belief::sample_answers(samples, question)?;
    let mut mass = vec![0.0; question.m()];
    for (s, &z) in answers.iter().enumerate() {
        mass[z] += weights.map_or(1.0, |w| w[s]);
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("weights must have a positive sum"));
    }
    Ok(1.0 - mass.iter().copied().fold(0.0, f64::max) / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{hit_and_run_sample, GaussianPrior};
    use crate::channel::compute_capacity;

    fn catalog(n: usize, d: usize, seed: u64) -> Catalog {
        let prior = GaussianPrior::isotropic(d, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Catalog::new((0..n).map(|i| Alternative::new(format!("a{i}"), prior.sample(&mut rng)).unwrap()).collect()).unwrap()
    }

    fn setup(alpha: f64, m: usize) -> (BeliefState, PosteriorSampleSet, Catalog) {
        let b = BeliefState::new(GaussianPrior::isotropic(3, 1.0).unwrap(), DiscreteNoiseChannel::symmetric(m, alpha).unwrap());
        let s = hit_and_run_sample(&b, 600, 100, 2, 1).unwrap();
        (b, s, catalog(30, 3, 2))
    }

    #[test]
    fn tuples_enumerate_in_order() {
        assert_eq!(candidate_tuples(4, 2, false), vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(candidate_tuples(3, 2, true).len(), 6);
        assert_eq!(candidate_tuples(15, 3, false).len(), 455);
    }

    #[test]
    fn subsample_is_seeded_and_distinct() {
        let a = subsample_indices(100, 15, 4).unwrap();
        assert_eq!(a, subsample_indices(100, 15, 4).unwrap());
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(subsample_indices(5, 6, 0).is_err());
    }

    #[test]
    fn ep_score_is_channel_equation_of_estimate() {
        let (b, s, c) = setup(0.7, 3);
        let cfg = PolicyConfig { m: 3, ..Default::default() };
        let sel = entropy_pursuit_select(&b, &s, &c, &cfg, 5).unwrap();
        assert_eq!(sel.score, channel_equation(&sel.predictive, b.channel()).unwrap());
        let cap = compute_capacity(b.channel(), 1e-9).unwrap().capacity_bits;
        assert!(sel.score <= cap + 1e-12);
    }

    #[test]
    fn ep_noiseless_pairwise_is_closest_to_half() {
        let (b, s, c) = setup(1.0, 2);
        let cfg = PolicyConfig::default();
        let sel = entropy_pursuit_select(&b, &s, &c, &cfg, 9).unwrap();
        let items: Vec<&Alternative> = sel.subsample.iter().map(|&i| c.get(i)).collect();
        let best_gap = candidate_tuples(items.len(), 2, false)
            .iter()
            .map(|t| {
                let q = question_of(&items, t).unwrap();
                (crate::belief::predictive_distribution(&s, &q).unwrap().weights()[0] - 0.5).abs()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(((sel.predictive.weights()[0] - 0.5).abs() - best_gap).abs() < 1e-15);
    }

    #[test]
    fn single_candidate_catalog() {
        let (b, s, _) = setup(0.7, 2);
        let c = catalog(2, 3, 8);
        let cfg = PolicyConfig { subsample_size: 2, ..Default::default() };
        let sel = entropy_pursuit_select(&b, &s, &c, &cfg, 0).unwrap();
        assert_eq!(sel.question.alternatives()[0].id, "a0");
        assert_eq!(sel.question.alternatives()[1].id, "a1");
        let bad = PolicyConfig { subsample_size: 1, ..Default::default() };
        assert!(matches!(entropy_pursuit_select(&b, &s, &c, &bad, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn kg_pure_noise_scores_are_flat() {
        let (b, s, c) = setup(0.0, 2);
        let cfg = PolicyConfig { policy: PolicyKind::KnowledgeGradient, subsample_size: 6, ..Default::default() };
        let sel = knowledge_gradient_select(&b, &s, &c, &cfg, 1).unwrap();
        let items: Vec<Alternative> = sel.subsample.iter().map(|&i| c.get(i).clone()).collect();
        let refs: Vec<&Alternative> = items.iter().collect();
        for t in candidate_tuples(6, 2, false) {
            let q = question_of(&refs, &t).unwrap();
            let score = knowledge_gradient_score(b.channel(), &s, &q, &items, 2).unwrap();
            assert!((score - sel.score).abs() < 1e-12);
        }
    }

    #[test]
    fn kg_noiseless_asked_question_is_resolved() {
        let (b, s, c) = setup(1.0, 2);
        let items = vec![c.get(0).clone(), c.get(1).clone()];
        let q = Question::new(items.clone()).unwrap();
        // The only evaluation question is the asked one.
        let score = knowledge_gradient_score(b.channel(), &s, &q, &items, 2).unwrap();
        assert!(score.abs() < 1e-15);
    }

    #[test]
    fn kg_scores_invariant_under_relabeling() {
        let (b, s, c) = setup(0.7, 3);
        let pool: Vec<Alternative> = (0..6).map(|i| c.get(i).clone()).collect();
        let q = Question::new(vec![c.get(7).clone(), c.get(8).clone(), c.get(9).clone()]).unwrap();
        let base = knowledge_gradient_score(b.channel(), &s, &q, &pool, 2).unwrap();
        let p = q.permuted(&[2, 0, 1]).unwrap();
        let other = knowledge_gradient_score(b.channel(), &s, &p, &pool, 2).unwrap();
        assert!((base - other).abs() < 1e-12);
    }

    #[test]
    fn misclassification_examples() {
        let q = Question::from_features(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let agree = PosteriorSampleSet::from_draws(2, &[vec![1.0, 0.2], vec![2.0, -1.0]]).unwrap();
        assert_eq!(misclassification_estimate(&agree, None, &q).unwrap(), 0.0);
        let split = PosteriorSampleSet::from_draws(2, &[vec![1.0, 0.2], vec![-2.0, -1.0]]).unwrap();
        assert_eq!(misclassification_estimate(&split, None, &q).unwrap(), 0.5);
        let w = [0.2, 0.8];
        assert!((misclassification_estimate(&split, Some(&w), &q).unwrap() - 0.2).abs() < 1e-15);
    }
}
