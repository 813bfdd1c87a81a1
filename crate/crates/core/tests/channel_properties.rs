use elicit::channel::{
    channel_equation, channel_gradient_raw, channel_hessian_raw, channel_value_extended, compute_capacity,
    shannon_closed_form, symmetric_capacity, DiscreteNoiseChannel, PredictiveDistribution, ShannonSolution,
};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

/// `sum_zy u_z P_zy log2(P_zy / q_y)` written out directly.
fn mutual_information(u: &[f64], ch: &DiscreteNoiseChannel) -> f64 {
    let m = ch.m();
    let q: Vec<f64> = (0..m).map(|y| (0..m).map(|z| u[z] * ch.entry(z, y)).sum()).collect();
    let mut s = 0.0;
    for z in 0..m {
        for y in 0..m {
            let p = ch.entry(z, y);
            if u[z] > 0.0 && p > 0.0 {
                s += u[z] * p * (p / q[y]).log2();
            }
        }
    }
    s
}

fn channel_from(raw: &[f64], m: usize, boost: f64) -> DiscreteNoiseChannel {
    let rows = (0..m)
        .map(|z| {
            let row: Vec<f64> = (0..m).map(|y| raw[z * m + y] + if y == z { boost } else { 0.0 }).collect();
            let s: f64 = row.iter().sum();
            row.iter().map(|x| x / s).collect()
        })
        .collect();
    DiscreteNoiseChannel::from_rows(rows).unwrap()
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn instance() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=5).prop_flat_map(|m| {
        (
            Just(m),
            prop::collection::vec(0.01f64..1.0, m * m),
            prop::collection::vec(0.01f64..1.0, m),
            prop::collection::vec(0.01f64..1.0, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_mutual_information((m, raw, a, _b) in instance()) {
        let ch = channel_from(&raw, m, 0.0);
        let u = normalize(&a);
        let phi = channel_equation(&PredictiveDistribution::new(u.clone()).unwrap(), &ch).unwrap();
        prop_assert!((phi - mutual_information(&u, &ch)).abs() < 1e-12);
    }

    #[test]
    fn concave_on_the_simplex((m, raw, a, b) in instance(), t in 0.0f64..1.0) {
        let ch = channel_from(&raw, m, 0.0);
        let (u, v) = (normalize(&a), normalize(&b));
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = channel_value_extended(&w, &ch);
        let rhs = t * channel_value_extended(&u, &ch) + (1.0 - t) * channel_value_extended(&v, &ch);
        prop_assert!(lhs >= rhs - 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences((m, raw, a, _b) in instance()) {
        let ch = channel_from(&raw, m, 0.5);
        let u = normalize(&a);
        let g = channel_gradient_raw(&u, &ch).unwrap();
        let h = 1e-6;
        for z in 0..m {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[z] += h;
            dn[z] -= h;
            let fd = (channel_value_extended(&up, &ch) - channel_value_extended(&dn, &ch)) / (2.0 * h);
            prop_assert!((g[z] - fd).abs() <= 1e-5 * g[z].abs().max(1.0), "z={} g={} fd={}", z, g[z], fd);
        }
    }

    #[test]
    fn hessian_matches_finite_differences((m, raw, a, _b) in instance()) {
        let ch = channel_from(&raw, m, 0.5);
        let u = normalize(&a);
        let hess = channel_hessian_raw(&u, &ch).unwrap();
        let h = 1e-5;
        for w in 0..m {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[w] += h;
            dn[w] -= h;
            let gu = channel_gradient_raw(&up, &ch).unwrap();
            let gd = channel_gradient_raw(&dn, &ch).unwrap();
            for z in 0..m {
                let fd = (gu[z] - gd[z]) / (2.0 * h);
                let exact = hess[z * m + w];
                prop_assert!((exact - fd).abs() <= 1e-3 * exact.abs().max(1e-3));
            }
        }
    }

    #[test]
    fn hessian_is_negative_semidefinite((m, raw, a, _b) in instance()) {
        let ch = channel_from(&raw, m, 0.0);
        let hess = channel_hessian_raw(&normalize(&a), &ch).unwrap();
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(m, m, &hess));
        prop_assert!(eig.eigenvalues.iter().all(|&l| l <= 1e-10));
    }

    #[test]
    fn equivariant_under_relabeling((m, raw, a, _b) in instance(), seed in 0u64..1000) {
        let ch = channel_from(&raw, m, 0.3);
        let u = normalize(&a);
        let mut perm: Vec<usize> = (0..m).collect();
        let mut s = seed;
        for i in (1..m).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let pch = ch.permuted(&perm).unwrap();
        let pu: Vec<f64> = perm.iter().map(|&i| u[i]).collect();
        prop_assert!((channel_value_extended(&u, &ch) - channel_value_extended(&pu, &pch)).abs() < 1e-12);
        let c = compute_capacity(&ch, 1e-10).unwrap();
        let pc = compute_capacity(&pch, 1e-10).unwrap();
        prop_assert!((c.capacity_bits - pc.capacity_bits).abs() < 1e-8);
    }

    #[test]
    fn capacity_dominates_every_input((m, raw, a, _b) in instance()) {
        let ch = channel_from(&raw, m, 0.0);
        let c = compute_capacity(&ch, 1e-9).unwrap();
        prop_assert!(channel_value_extended(&normalize(&a), &ch) <= c.capacity_bits + 1e-9);
        prop_assert!(c.capacity_bits <= (m as f64).log2() + 1e-12);
    }

    #[test]
    fn closed_form_agrees_with_iterations(raw in prop::collection::vec(0.05f64..1.0, 9)) {
        let ch = channel_from(&raw, 3, 2.0);
        let iter = compute_capacity(&ch, 1e-12).unwrap();
        if let ShannonSolution::Optimal(u) = shannon_closed_form(&ch).unwrap() {
            for (x, y) in u.weights().iter().zip(iter.optimal_u.weights()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn symmetric_capacity_below_alpha_log_m(m in 2usize..=6, alpha in 0.0f64..=1.0) {
        let c = symmetric_capacity(m, alpha).unwrap();
        prop_assert!(c <= alpha * (m as f64).log2() + 1e-12);
        let ch = DiscreteNoiseChannel::symmetric(m, alpha).unwrap();
        prop_assert!((compute_capacity(&ch, 1e-10).unwrap().capacity_bits - c).abs() < 1e-8);
    }
}
