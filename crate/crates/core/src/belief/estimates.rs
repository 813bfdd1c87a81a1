use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LOG2_E, PI};

use super::{argmax_utility, dot, BeliefState, PosteriorSampleSet, Question};
use crate::channel::PredictiveDistribution;
use crate::error::{Error, Result};

pub const DEFAULT_DEPTH_RESTARTS: usize = 64;

/// Search for depth directions runs on at most this many draws.
const DEPTH_SEARCH_DRAWS: usize = 2000;

/// Model-consistent answer of every draw.
pub fn sample_answers(samples: &PosteriorSampleSet, question: &Question) -> Result<Vec<usize>> {
    if samples.dim() != question.dim() {
        return Err(Error::invalid("sample and question dimensions differ"));
    }
    let rows: Vec<&[f64]> = question.alternatives().iter().map(|a| a.features.as_slice()).collect();
    Ok(samples
        .iter()
        .map(|theta| argmax_utility(theta, rows.iter().copied()))
        .collect())
}

/// Number of draws in each answer region.
pub fn answer_counts(samples: &PosteriorSampleSet, question: &Question) -> Result<Vec<usize>> {
    let mut counts = vec![0; question.m()];
    for z in sample_answers(samples, question)? {
        counts[z] += 1;
    }
    Ok(counts)
}

/// Fractions of draws in each answer region.
pub fn predictive_distribution(
    samples: &PosteriorSampleSet,
    question: &Question,
) -> Result<PredictiveDistribution> {
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    let n = samples.len();
    let counts = answer_counts(samples, question)?;
    let weights = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(PredictiveDistribution::new(weights)?.with_sample_count(n))
}

/// A Monte Carlo entropy estimate with its standard error, both in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub bits: f64,
    pub se: f64,
}

/// `-(1/n) sum_i log2(p~(theta_i) / Z)` over posterior draws, with the
/// normalizer taken from the belief's ledger. The error combines batch-means
/// variance of the draws with the ledger's delta-method variance.
pub fn differential_entropy_estimate(
    belief: &BeliefState,
    samples: &PosteriorSampleSet,
) -> Result<EntropyEstimate> {
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    if samples.dim() != belief.dim() {
        return Err(Error::invalid("sample and belief dimensions differ"));
    }
    let log_z = belief.log_normalizer_estimate();
    let values: Vec<f64> = samples
        .iter()
        .map(|theta| belief.log_unnormalized_posterior(theta) - log_z)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("a draw lies outside the posterior support"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let batches = ((n as f64).sqrt() as usize).max(1);
    let size = n / batches;
    let mc_var = if batches >= 2 {
        let means: Vec<f64> = (0..batches)
            .map(|b| values[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / batches as f64;
        means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / ((batches - 1) * batches) as f64
    } else {
        0.0
    };
    let var = mc_var + belief.log_normalizer_variance();
    Ok(EntropyEstimate {
        bits: -mean * LOG2_E,
        se: var.sqrt() * LOG2_E,
    })
}

/// Approximate halfspace depth of the origin: the smallest fraction of draws
/// in a closed halfspace `{theta : theta'v >= 0}`.
pub fn halfspace_depth_estimate(samples: &PosteriorSampleSet, restarts: usize, seed: u64) -> f64 {
    halfspace_depth_direction(samples, restarts, seed).0
}

/// Depth together with the normal `v` of the minimizing halfspace.
pub fn halfspace_depth_direction(
    samples: &PosteriorSampleSet,
    restarts: usize,
    seed: u64,
) -> (f64, Vec<f64>) {
    let d = samples.dim();
    if samples.is_empty() {
        let mut v = vec![0.0; d];
        v[0] = 1.0;
        return (0.0, v);
    }
    let v = if d == 2 {
        planar_depth_direction(samples)
    } else {
        searched_depth_direction(samples, restarts, seed)
    };
    (halfspace_fraction(samples.iter(), &v), v)
}

pub(crate) fn halfspace_fraction<'a>(draws: impl ExactSizeIterator<Item = &'a [f64]>, v: &[f64]) -> f64 {
    let n = draws.len();
    draws.filter(|x| dot(x, v) >= 0.0).count() as f64 / n as f64
}

/// Exact angular sweep: the emptiest closed half-plane is the complement of
/// the fullest open half-plane, which starts just before some draw.
fn planar_depth_direction(samples: &PosteriorSampleSet) -> Vec<f64> {
    let mut ang: Vec<f64> = samples.iter().map(|x| x[1].atan2(x[0]).rem_euclid(2.0 * PI)).collect();
    ang.sort_by(f64::total_cmp);
    let n = ang.len();
    let at = |k: usize| ang[k % n] + 2.0 * PI * (k / n) as f64;
    let mut best = (0usize, 0usize);
    let mut j = 0usize;
    for i in 0..n {
        j = j.max(i);
        while j < i + n && at(j) < ang[i] + PI {
            j += 1;
        }
        if j - i > best.1 {
            best = (i, j - i);
        }
    }
    let i = best.0;
    let gap_before = ang[i] - if i == 0 { ang[n - 1] - 2.0 * PI } else { ang[i - 1] };
    let last_inside = at(i + best.1 - 1);
    let gap_after = ang[i] + PI - last_inside;
    let eps = 0.5 * gap_before.min(gap_after).clamp(0.0, PI / 2.0);
    let psi = ang[i] - eps + 1.5 * PI;
    vec![psi.cos(), psi.sin()]
}

fn searched_depth_direction(samples: &PosteriorSampleSet, restarts: usize, seed: u64) -> Vec<f64> {
    let d = samples.dim();
    let pool = samples.spread(DEPTH_SEARCH_DRAWS);
    let scale = (pool.iter().map(|x| dot(x, x)).sum::<f64>() / pool.len() as f64).sqrt().max(1e-12);
    let tau = 0.05 * scale;
    // Smoothed halfspace mass; its minimizers sit where the count is small.
    let surrogate = |v: &[f64]| -> f64 {
        let norm = dot(v, v).sqrt();
        if norm < 1e-12 {
            return 1.0;
        }
        pool.iter()
            .map(|x| 1.0 / (1.0 + (-dot(x, v) / (norm * tau)).exp()))
            .sum::<f64>()
            / pool.len() as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = samples.mean();
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(restarts + 1);
    if dot(&mean, &mean) > 0.0 {
        starts.push(mean.iter().map(|x| -x).collect());
    }
    for _ in 0..restarts {
        starts.push((0..d).map(|_| rng.sample(StandardNormal)).collect());
    }
    let mut best = (f64::INFINITY, starts[0].clone());
    for s in starts {
        let polished = nelder_mead(&surrogate, normalize(s), 0.3, 60 * d);
        let frac = halfspace_fraction(pool.iter(), &polished);
        if frac < best.0 {
            best = (frac, polished);
        }
    }
    normalize(best.1)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Derivative-free polish of an unnormalized direction.
fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: Vec<f64>, step: f64, max_evals: usize) -> Vec<f64> {
    let d = start.len();
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(d + 1);
    simplex.push((f(&start), start.clone()));
    for i in 0..d {
        let mut p = start.clone();
        p[i] += step;
        simplex.push((f(&p), p));
    }
    let mut evals = d + 1;
    let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect() };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        if simplex[d].0 - simplex[0].0 < 1e-9 {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (_, p) in &simplex[..d] {
            centroid.iter_mut().zip(p).for_each(|(c, x)| *c += x / d as f64);
        }
        let worst = simplex[d].1.clone();
        let reflected = lerp(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        evals += 1;
        if fr < simplex[0].0 {
            let expanded = lerp(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            evals += 1;
            simplex[d] = if fe < fr { (fe, expanded) } else { (fr, reflected) };
        } else if fr < simplex[d - 1].0 {
            simplex[d] = (fr, reflected);
        } else {
            let contracted = lerp(&centroid, &worst, 0.5);
            let fc = f(&contracted);
            evals += 1;
            if fc < simplex[d].0 {
                simplex[d] = (fc, contracted);
            } else {
                let best = simplex[0].1.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p = lerp(&best, &entry.1, 0.5);
                    *entry = (f(&p), p);
                }
                evals += d;
            }
        }
    }
    simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
    simplex.swap_remove(0).1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::GaussianPrior;

    fn gaussian_draws(d: usize, n: usize, shift: f64, seed: u64) -> PosteriorSampleSet {
        let prior = GaussianPrior::isotropic(d, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut x = prior.sample(&mut rng);
                x[0] += shift;
                x
            })
            .collect();
        PosteriorSampleSet::from_draws(d, &draws).unwrap()
    }

    #[test]
    fn degenerate_question_puts_mass_on_first() {
        let s = gaussian_draws(2, 100, 0.0, 1);
        let q = Question::from_features(vec![vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let u = predictive_distribution(&s, &q).unwrap();
        assert_eq!(u.weights(), &[1.0, 0.0]);
        assert_eq!(u.sample_count(), Some(100));
    }

    #[test]
    fn predictive_scale_invariant() {
        let s = gaussian_draws(3, 500, 0.3, 2);
        let q = Question::from_features(vec![vec![1.0, 0.2, 0.0], vec![0.0, 1.0, -1.0], vec![0.5, 0.5, 0.5]]).unwrap();
        let q5 = Question::from_features(
            q.alternatives().iter().map(|a| a.features.iter().map(|x| 5.0 * x).collect()).collect(),
        )
        .unwrap();
        assert_eq!(predictive_distribution(&s, &q).unwrap(), predictive_distribution(&s, &q5).unwrap());
    }

    #[test]
    fn empty_samples_rejected() {
        let s = PosteriorSampleSet::from_draws(2, &[]).unwrap();
        let q = Question::from_features(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(predictive_distribution(&s, &q).is_err());
    }

    #[test]
    fn planar_depth_of_symmetric_cloud() {
        let s = gaussian_draws(2, 20_000, 0.0, 3);
        let depth = halfspace_depth_estimate(&s, 0, 0);
        assert!((depth - 0.5).abs() < 3.0 * (0.25f64 / 20_000.0).sqrt() + 0.01, "{depth}");
        // The exact sweep is a true minimum over directions.
        for k in 0..360 {
            let a = k as f64 * PI / 180.0;
            assert!(halfspace_fraction(s.iter(), &[a.cos(), a.sin()]) >= depth);
        }
    }

    #[test]
    fn depth_of_shifted_cloud_matches_tail() {
        let shift = 2.0;
        let expected = 0.5 * statrs::function::erf::erfc(shift / std::f64::consts::SQRT_2);
        for d in [2, 4] {
            let s = gaussian_draws(d, 20_000, shift, 4);
            let depth = halfspace_depth_estimate(&s, 16, 5);
            let se = (expected * (1.0 - expected) / 20_000.0).sqrt();
            assert!(depth <= expected + 3.0 * se, "d={d}: {depth} vs {expected}");
            assert!(depth >= expected - 6.0 * se - 0.005, "d={d}: {depth} vs {expected}");
        }
    }

    #[test]
    fn depth_zero_inside_open_halfspace() {
        let draws: Vec<Vec<f64>> = (0..50).map(|i| vec![1.0 + i as f64 * 0.1, (i as f64).sin(), 0.3]).collect();
        let s = PosteriorSampleSet::from_draws(3, &draws).unwrap();
        assert_eq!(halfspace_depth_estimate(&s, 8, 1), 0.0);
        let planar: Vec<Vec<f64>> = draws.iter().map(|x| x[..2].to_vec()).collect();
        let s2 = PosteriorSampleSet::from_draws(2, &planar).unwrap();
        assert_eq!(halfspace_depth_estimate(&s2, 0, 0), 0.0);
    }
}
