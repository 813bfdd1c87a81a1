use elicit::belief::{
    differential_entropy_estimate, hit_and_run_sample, model_consistent_answer, predictive_distribution,
    BeliefState, GaussianPrior, PosteriorSampleSet, Question,
};
use elicit::channel::{DiscreteNoiseChannel, PredictiveDistribution};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Batch-means standard error of the mean of a correlated series.
fn batch_se(values: &[f64]) -> f64 {
    let n = values.len();
    let b = (n as f64).sqrt() as usize;
    let size = n / b;
    let means: Vec<f64> = (0..b).map(|k| values[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let g = means.iter().sum::<f64>() / b as f64;
    (means.iter().map(|m| (m - g).powi(2)).sum::<f64>() / ((b - 1) * b) as f64).sqrt()
}

fn iid_se(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

#[test]
fn prior_moments_from_empty_history() {
    let prior = GaussianPrior::new(vec![0.5, -1.0, 0.2], vec![
        vec![1.0, 0.3, 0.0],
        vec![0.3, 0.8, -0.2],
        vec![0.0, -0.2, 1.5],
    ])
    .unwrap();
    let b = BeliefState::new(prior.clone(), DiscreteNoiseChannel::symmetric(2, 0.7).unwrap());
    let s = hit_and_run_sample(&b, 20_000, 1000, 5, 11).unwrap();
    for i in 0..3 {
        let xs: Vec<f64> = s.iter().map(|x| x[i]).collect();
        let se = batch_se(&xs);
        assert!((mean(&xs) - prior.mean()[i]).abs() < 3.0 * se, "coordinate {i}");
        let sq: Vec<f64> = s.iter().map(|x| (x[i] - prior.mean()[i]).powi(2)).collect();
        assert!((mean(&sq) - prior.covariance(i, i)).abs() < 3.0 * batch_se(&sq), "variance {i}");
    }
}

#[test]
fn isotropic_cone_fractions() {
    let b = BeliefState::new(GaussianPrior::isotropic(2, 1.0).unwrap(), DiscreteNoiseChannel::identity(3).unwrap());
    let s = hit_and_run_sample(&b, 20_000, 1000, 5, 3).unwrap();
    // Cones with opening angles 135, 135 and 90 degrees.
    let q = Question::from_features(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
    let u = predictive_distribution(&s, &q).unwrap();
    for (z, expected) in [0.375, 0.375, 0.25].into_iter().enumerate() {
        let ind: Vec<f64> = s.iter().map(|x| (model_consistent_answer(x, &q).unwrap() == z) as u8 as f64).collect();
        let se = batch_se(&ind).max(iid_se(&ind));
        assert!((u.weights()[z] - expected).abs() < 3.0 * se, "{z}: {}", u.weights()[z]);
    }
}

#[test]
fn halfspace_truncation_matches_rejection_oracle() {
    let prior = GaussianPrior::new(vec![0.5, -0.3], vec![vec![1.0, 0.3], vec![0.3, 0.5]]).unwrap();
    let q = Question::from_features(vec![vec![-1.0, -0.5], vec![0.0, 0.0]]).unwrap();
    let b = BeliefState::new(prior.clone(), DiscreteNoiseChannel::identity(2).unwrap())
        .update(&q, 0, &PredictiveDistribution::uniform(2))
        .unwrap();
    let s = hit_and_run_sample(&b, 20_000, 1000, 5, 5).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut oracle = Vec::new();
    while oracle.len() < 20_000 {
        let x = prior.sample(&mut rng);
        if model_consistent_answer(&x, &q).unwrap() == 0 {
            oracle.push(x);
        }
    }
    for stat in 0..5 {
        let f = |x: &[f64]| match stat {
            0 => x[0],
            1 => x[1],
            2 => x[0] * x[0],
            3 => x[1] * x[1],
            _ => x[0] * x[1],
        };
        let a: Vec<f64> = s.iter().map(f).collect();
        let o: Vec<f64> = oracle.iter().map(|x| f(x)).collect();
        let se = (batch_se(&a).powi(2) + iid_se(&o).powi(2)).sqrt();
        assert!((mean(&a) - mean(&o)).abs() < 3.0 * se, "statistic {stat}: {} vs {}", mean(&a), mean(&o));
    }
}

#[test]
fn posterior_halfspace_mass_after_noisy_response() {
    // Mass of A(1) becomes 0.85 after observing signal 1 through P(2, 0.7).
    let b = BeliefState::new(GaussianPrior::isotropic(2, 1.0).unwrap(), DiscreteNoiseChannel::symmetric(2, 0.7).unwrap());
    let q = Question::from_features(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
    let post = b.update(&q, 0, &PredictiveDistribution::uniform(2)).unwrap();
    let s = hit_and_run_sample(&post, 20_000, 1000, 5, 8).unwrap();
    let ind: Vec<f64> = s.iter().map(|x| (model_consistent_answer(x, &q).unwrap() == 0) as u8 as f64).collect();
    assert!((mean(&ind) - 0.85).abs() < 3.0 * batch_se(&ind).max(iid_se(&ind)));
}

#[test]
fn step_zero_entropy_matches_analytic() {
    for d in [2usize, 5, 10] {
        let b = BeliefState::new(GaussianPrior::isotropic(d, 1.0).unwrap(), DiscreteNoiseChannel::symmetric(2, 0.7).unwrap());
        let s = hit_and_run_sample(&b, 20_000, 1000, 5, d as u64).unwrap();
        let est = differential_entropy_estimate(&b, &s).unwrap();
        let analytic = b.prior().entropy_bits();
        assert!((est.bits - analytic).abs() < 3.0 * est.se, "d={d}: {} vs {analytic} (se {})", est.bits, est.se);
    }
}

#[test]
fn covariance_scaling_adds_two_bits() {
    let small = BeliefState::new(GaussianPrior::isotropic(2, 1.0).unwrap(), DiscreteNoiseChannel::identity(2).unwrap());
    let wide = BeliefState::new(GaussianPrior::isotropic(2, 4.0).unwrap(), DiscreteNoiseChannel::identity(2).unwrap());
    let es = differential_entropy_estimate(&small, &hit_and_run_sample(&small, 20_000, 1000, 5, 1).unwrap()).unwrap();
    let ew = differential_entropy_estimate(&wide, &hit_and_run_sample(&wide, 20_000, 1000, 5, 2).unwrap()).unwrap();
    assert!((ew.bits - es.bits - 2.0).abs() < 3.0 * (es.se.powi(2) + ew.se.powi(2)).sqrt());
}

#[test]
fn symmetric_noiseless_cut_removes_one_bit() {
    let b = BeliefState::new(GaussianPrior::isotropic(2, 1.0).unwrap(), DiscreteNoiseChannel::identity(2).unwrap());
    let s0 = hit_and_run_sample(&b, 20_000, 1000, 5, 21).unwrap();
    let e0 = differential_entropy_estimate(&b, &s0).unwrap();
    let q = Question::from_features(vec![vec![1.0, 0.3], vec![-1.0, -0.3]]).unwrap();
    let u = predictive_distribution(&s0, &q).unwrap();
    let b1 = b.update(&q, 1, &u).unwrap();
    let s1 = hit_and_run_sample(&b1, 20_000, 1000, 5, 22).unwrap();
    let e1 = differential_entropy_estimate(&b1, &s1).unwrap();
    let se = (e0.se.powi(2) + e1.se.powi(2)).sqrt();
    assert!((e0.bits - e1.bits - 1.0).abs() < 3.0 * se, "drop {} se {se}", e0.bits - e1.bits);
}

#[test]
fn burn_in_and_thinning_do_not_move_the_entropy() {
    let q = Question::from_features(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let b = BeliefState::new(GaussianPrior::isotropic(2, 1.0).unwrap(), DiscreteNoiseChannel::symmetric(2, 0.8).unwrap())
        .update(&q, 0, &PredictiveDistribution::uniform(2))
        .unwrap();
    let a = differential_entropy_estimate(&b, &hit_and_run_sample(&b, 10_000, 500, 2, 1).unwrap()).unwrap();
    let c = differential_entropy_estimate(&b, &hit_and_run_sample(&b, 10_000, 3000, 10, 2).unwrap()).unwrap();
    // Both share the ledger; compare only the Monte Carlo part.
    assert!((a.bits - c.bits).abs() < 4.0 * (a.se.powi(2) + c.se.powi(2)).sqrt());
}

#[test]
fn every_draw_has_positive_density() {
    let b0 = BeliefState::new(GaussianPrior::isotropic(3, 1.0).unwrap(), DiscreteNoiseChannel::identity(3).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let truth = b0.prior().sample(&mut rng);
    let mut b = b0;
    let mut samples: Option<PosteriorSampleSet> = None;
    for k in 0..8 {
        let feats: Vec<Vec<f64>> = (0..3).map(|_| GaussianPrior::isotropic(3, 1.0).unwrap().sample(&mut rng)).collect();
        let q = Question::from_features(feats).unwrap();
        let y = model_consistent_answer(&truth, &q).unwrap();
        b = b.update(&q, y, &PredictiveDistribution::uniform(3)).unwrap();
        let s = elicit::belief::hit_and_run_sample_from(
            &b,
            elicit::belief::SamplerSettings { count: 500, burn_in: 100, thinning: 2, seed: k },
            samples.as_ref(),
        )
        .unwrap();
        assert!(s.iter().all(|x| b.log_unnormalized_posterior(x).is_finite()));
        samples = Some(s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn answer_is_first_maximizer(
        theta in prop::collection::vec(-3.0f64..3.0, 5),
        feats in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 5), 4),
    ) {
        let q = Question::from_features(feats.clone()).unwrap();
        let z = model_consistent_answer(&theta, &q).unwrap();
        let utils: Vec<f64> = feats.iter().map(|x| x.iter().zip(&theta).map(|(a, b)| a * b).sum()).collect();
        let best = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(utils[z], best);
        prop_assert!(utils[..z].iter().all(|u| *u < best));
    }
}
