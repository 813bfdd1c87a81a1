//! Discrete noise channels and their information-theoretic analysis.
//!
//! A channel is an `m x m` row-stochastic transmission matrix `P`: row `z`
//! is the distribution of the observed signal when the model-consistent
//! answer is `z`. The channel equation `phi(u; P) = h(u'P) - u'h(P)` is the
//! mutual information between answer and signal when the answer follows
//! `u`, i.e. the expected posterior entropy reduction of one question.
//!
//! All public entropies are in bits. Internally the capacity solver works in
//! nats and converts at the boundary.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::error::{Error, Result};

/// `log2(e)`, the constant that appears in every derivative of `phi`.
pub const LOG2_E: f64 = std::f64::consts::LOG2_E;

/// Row sums and simplex sums must match 1 to this precision.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// `u_*` entries at or below this are treated as an inactive face.
pub const INTERIOR_THRESHOLD: f64 = 1e-7;

/// Reciprocal condition numbers below this make the closed form refuse.
pub const SINGULAR_RCOND: f64 = 1e-10;

pub const DEFAULT_CAPACITY_TOL: f64 = 1e-9;
pub const CAPACITY_ITERATION_CAP: usize = 100_000;

const NEWTON_PERIOD: usize = 16;
const DROPPED_FLOOR: f64 = 1e-3 * INTERIOR_THRESHOLD;
const NEWTON_STEPS: usize = 8;
const NEWTON_RESIDUAL: f64 = 1e-15;

/// `-x log2 x` with the `0 log 0 = 0` convention.
#[inline]
pub(crate) fn neg_xlog2x(x: f64) -> f64 {
    if x > 0.0 {
        -x * x.log2()
    } else {
        0.0
    }
}

/// Shannon entropy of a (possibly unnormalized) nonnegative vector, in bits.
pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter().map(|&x| neg_xlog2x(x)).sum()
}

/// Row-stochastic transmission matrix of a discrete noise channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChannelMatrixRepr", into = "ChannelMatrixRepr")]
pub struct DiscreteNoiseChannel {
    m: usize,
    /// Row-major `m * m` entries.
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ChannelMatrixRepr {
    m: usize,
    matrix: Vec<Vec<f64>>,
}

impl TryFrom<ChannelMatrixRepr> for DiscreteNoiseChannel {
    type Error = Error;
    fn try_from(repr: ChannelMatrixRepr) -> Result<Self> {
        if repr.matrix.len() != repr.m {
            return Err(Error::invalid(format!(
                "channel declares m = {} but has {} rows",
                repr.m,
                repr.matrix.len()
            )));
        }
        DiscreteNoiseChannel::from_rows(repr.matrix)
    }
}

impl From<DiscreteNoiseChannel> for ChannelMatrixRepr {
    fn from(ch: DiscreteNoiseChannel) -> Self {
        ChannelMatrixRepr {
            m: ch.m,
            matrix: ch.rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl DiscreteNoiseChannel {
    /// Builds a channel from its rows, validating stochasticity.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::invalid("a channel needs at least 2 alternatives"));
        }
        let mut entries = Vec::with_capacity(m * m);
        for (z, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::invalid(format!(
                    "row {z} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                return Err(Error::invalid(format!("row {z} has entries outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::invalid(format!("row {z} sums to {sum}, not 1")));
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { m, entries })
    }

    /// `P_alpha = alpha I + (1 - alpha)/m ee'`.
    pub fn symmetric(m: usize, alpha: f64) -> Result<Self> {
        check_symmetric_args(m, alpha)?;
        let off = (1.0 - alpha) / m as f64;
        let entries = (0..m * m)
            .map(|k| if k / m == k % m { alpha + off } else { off })
            .collect();
        Ok(Self { m, entries })
    }

    pub fn identity(m: usize) -> Result<Self> {
        Self::symmetric(m, 1.0)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn entry(&self, answer: usize, signal: usize) -> f64 {
        self.entries[answer * self.m + signal]
    }

    pub fn row(&self, answer: usize) -> &[f64] {
        &self.entries[answer * self.m..(answer + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.m)
    }

    /// Signal distribution `u'P` induced by an answer distribution.
    pub fn output_distribution(&self, u: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.m];
        for (uz, row) in u.iter().zip(self.rows()) {
            for (qy, p) in q.iter_mut().zip(row) {
                *qy += uz * p;
            }
        }
        q
    }

    /// Row entropies `h(P)` in bits.
    pub fn row_entropies(&self) -> Vec<f64> {
        self.rows().map(entropy_bits).collect()
    }

    /// Smallest entry of `P`.
    pub fn kappa_min(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest entry of `P`.
    pub fn kappa_max(&self) -> f64 {
        self.entries.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when every relabeling of alternatives leaves `P` unchanged, i.e. a
    /// common diagonal and a common off-diagonal value.
    pub fn is_permutation_invariant(&self) -> bool {
        let diag = self.entry(0, 0);
        let off = self.entry(0, 1);
        (0..self.m).all(|z| {
            (0..self.m).all(|y| {
                let target = if z == y { diag } else { off };
                (self.entry(z, y) - target).abs() <= STOCHASTIC_TOL
            })
        })
    }

    /// Relabels alternatives: new answer `i` is old answer `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.m)?;
        let rows = perm
            .iter()
            .map(|&zi| perm.iter().map(|&yi| self.entry(zi, yi)).collect())
            .collect();
        Self::from_rows(rows)
    }

    pub(crate) fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.m, &self.entries)
    }
}

fn check_symmetric_args(m: usize, alpha: f64) -> Result<()> {
    if m < 2 {
        return Err(Error::invalid(format!("m must be at least 2, got {m}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

fn check_permutation(perm: &[usize], m: usize) -> Result<()> {
    let mut seen = vec![false; m];
    if perm.len() != m {
        return Err(Error::invalid("permutation has the wrong length"));
    }
    for &p in perm {
        if p >= m || std::mem::replace(&mut seen[p], true) {
            return Err(Error::invalid("not a permutation"));
        }
    }
    Ok(())
}

/// A point of the probability simplex: the predictive distribution of the
/// model-consistent answer to a question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    weights: Vec<f64>,
    /// Number of posterior draws behind a Monte Carlo estimate, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sample_count: Option<usize>,
}

impl PredictiveDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("empty distribution"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("distribution entries must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::invalid(format!("distribution sums to {sum}, not 1")));
        }
        Ok(Self {
            weights,
            sample_count: None,
        })
    }

    /// Normalizes nonnegative weights onto the simplex.
    pub fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid("weights must be nonnegative with a positive sum"));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Self::new(weights)
    }

    pub fn uniform(m: usize) -> Self {
        Self {
            weights: vec![1.0 / m as f64; m],
            sample_count: None,
        }
    }

    pub fn with_sample_count(mut self, n: usize) -> Self {
        self.sample_count = Some(n);
        self
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.sample_count
    }

    pub fn max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.weights.iter().copied().fold(1.0, f64::min)
    }

    /// Binomial Monte Carlo standard errors, zero for exact distributions.
    pub fn standard_errors(&self) -> Vec<f64> {
        match self.sample_count {
            Some(n) if n > 0 => self
                .weights
                .iter()
                .map(|p| (p * (1.0 - p) / n as f64).sqrt())
                .collect(),
            _ => vec![0.0; self.weights.len()],
        }
    }
}

/// Channel equation on the nonnegative orthant: `h(u'P) - u'h(P)`.
///
/// Accepts unnormalized `u`; this is the extension the derivative formulas
/// refer to.
pub fn channel_value_extended(u: &[f64], channel: &DiscreteNoiseChannel) -> f64 {
    let q = channel.output_distribution(u);
    let mixed: f64 = u
        .iter()
        .zip(channel.rows())
        .map(|(uz, row)| uz * entropy_bits(row))
        .sum();
    entropy_bits(&q) - mixed
}

fn check_dims(u: &PredictiveDistribution, channel: &DiscreteNoiseChannel) -> Result<()> {
    if u.len() != channel.m() {
        return Err(Error::invalid(format!(
            "distribution has {} entries but the channel has m = {}",
            u.len(),
            channel.m()
        )));
    }
    Ok(())
}

/// `phi(u; P)` in bits: the one-step mutual information between answer and signal.
pub fn channel_equation(u: &PredictiveDistribution, channel: &DiscreteNoiseChannel) -> Result<f64> {
    check_dims(u, channel)?;
    Ok(channel_value_extended(u.weights(), channel).max(0.0))
}

fn positive_output(u: &[f64], channel: &DiscreteNoiseChannel) -> Result<Vec<f64>> {
    let q = channel.output_distribution(u);
    if let Some(y) = q.iter().position(|&qy| qy <= 0.0) {
        return Err(Error::SingularEvaluation(format!(
            "signal {y} has zero probability under u'P"
        )));
    }
    Ok(q)
}

/// Gradient `-P log2(P'u) - h(P) - xi e` of the extended channel equation.
pub fn channel_gradient_raw(u: &[f64], channel: &DiscreteNoiseChannel) -> Result<Vec<f64>> {
    let q = positive_output(u, channel)?;
    Ok(channel
        .rows()
        .map(|row| {
            let cross: f64 = row
                .iter()
                .zip(&q)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, qy)| -p * qy.log2())
                .sum();
            cross - entropy_bits(row) - LOG2_E
        })
        .collect())
}

pub fn channel_gradient(
    u: &PredictiveDistribution,
    channel: &DiscreteNoiseChannel,
) -> Result<Vec<f64>> {
    check_dims(u, channel)?;
    channel_gradient_raw(u.weights(), channel)
}

/// Hessian `-xi P diag(u'P)^-1 P'` (row-major `m x m`).
pub fn channel_hessian_raw(u: &[f64], channel: &DiscreteNoiseChannel) -> Result<Vec<f64>> {
    let q = positive_output(u, channel)?;
    let m = channel.m();
    let mut hess = vec![0.0; m * m];
    for z in 0..m {
        for w in z..m {
            let s: f64 = (0..m)
                .map(|y| channel.entry(z, y) * channel.entry(w, y) / q[y])
                .sum();
            hess[z * m + w] = -LOG2_E * s;
            hess[w * m + z] = -LOG2_E * s;
        }
    }
    Ok(hess)
}

pub fn channel_hessian(
    u: &PredictiveDistribution,
    channel: &DiscreteNoiseChannel,
) -> Result<Vec<f64>> {
    check_dims(u, channel)?;
    channel_hessian_raw(u.weights(), channel)
}

/// Capacity, optimal predictive distribution and their optimality certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelAnalysis {
    pub capacity_bits: f64,
    pub optimal_u: PredictiveDistribution,
    pub admissible: bool,
    pub kappa_min: f64,
    pub kappa_max: f64,
    /// `KL(P_z || u_*'P) - C` per row, in bits.
    pub kkt_residuals: Vec<f64>,
    pub log2_e: f64,
    pub iterations: usize,
}

/// Per-row divergences `KL(P_z || q)` in nats.
fn row_divergences_nats(channel: &DiscreteNoiseChannel, q: &[f64]) -> Vec<f64> {
    channel
        .rows()
        .map(|row| {
            row.iter()
                .zip(q)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, qy)| {
                    if *qy > 0.0 {
                        p * (p / qy).ln()
                    } else {
                        f64::INFINITY
                    }
                })
                .sum()
        })
        .collect()
}

/// Maximizes `phi(.; P)` over the simplex with Blahut-Arimoto updates.
///
/// Stops once the Gallager conditions hold within `tol` bits: every row on
/// the support has divergence within `tol` of the current value and no row
/// exceeds it by more than `tol` (an upper bound on the optimality gap).
pub fn compute_capacity(channel: &DiscreteNoiseChannel, tol: f64) -> Result<ChannelAnalysis> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let m = channel.m();
    let tol_nats = tol * LN_2;
    let mut u = vec![1.0 / m as f64; m];
    let mut gap = f64::INFINITY;
    let mut pruned = false;

    for iteration in 0..CAPACITY_ITERATION_CAP {
        let q = channel.output_distribution(&u);
        let div = row_divergences_nats(channel, &q);
        let info: f64 = u.iter().zip(&div).map(|(uz, d)| uz * d).sum();
        let upper = div.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let support_low = u
            .iter()
            .zip(&div)
            .filter(|(uz, _)| **uz > INTERIOR_THRESHOLD)
            .map(|(_, d)| *d)
            .fold(f64::INFINITY, f64::min);
        gap = upper - info;

        if gap <= tol_nats && info - support_low <= tol_nats {
            let faded: Vec<usize> = (0..m).filter(|&z| u[z] <= INTERIOR_THRESHOLD && u[z] > 0.0).collect();
            if !faded.is_empty() && !pruned {
                // Snap the inactive face to exactly zero and re-certify.
                pruned = true;
                faded.iter().for_each(|&z| u[z] = 0.0);
                let s: f64 = u.iter().sum();
                u.iter_mut().for_each(|x| *x /= s);
                continue;
            }
            let capacity_bits = (info / LN_2).max(0.0);
            let kkt_residuals = div.iter().map(|d| d / LN_2 - capacity_bits).collect();
            let admissible = u.iter().all(|&x| x > INTERIOR_THRESHOLD);
            return Ok(ChannelAnalysis {
                capacity_bits,
                optimal_u: PredictiveDistribution::new(u)?,
                admissible,
                kappa_min: channel.kappa_min(),
                kappa_max: channel.kappa_max(),
                kkt_residuals,
                log2_e: LOG2_E,
                iterations: iteration,
            });
        }

        // Multiplicative update; shifting by `upper` keeps the exponent <= 0.
        for (uz, d) in u.iter_mut().zip(&div) {
            *uz *= (d - upper).exp();
        }
        let s: f64 = u.iter().sum();
        u.iter_mut().for_each(|x| *x /= s);

        // The fixed point contracts slowly when rows are nearly alike or the
        // optimum is on a face, so periodically try a certified Newton step.
        if iteration % NEWTON_PERIOD == NEWTON_PERIOD - 1 {
            if let Some(candidate) = newton_polish(channel, &u) {
                if certificate_gap(channel, &candidate) < certificate_gap(channel, &u) {
                    u = candidate;
                }
            }
        }
    }
    Err(Error::Convergence {
        iterations: CAPACITY_ITERATION_CAP,
        gap: gap / LN_2,
        best: u,
    })
}

/// Gallager upper bound minus the mutual information, in nats.
fn certificate_gap(channel: &DiscreteNoiseChannel, u: &[f64]) -> f64 {
    let div = row_divergences_nats(channel, &channel.output_distribution(u));
    let info: f64 = u.iter().zip(&div).map(|(uz, d)| uz * d).sum();
    div.iter().copied().fold(f64::NEG_INFINITY, f64::max) - info
}

/// Newton iterations on `D(P_z || u'P) = t` over the support of `u`, with
/// `sum u = 1`. A coordinate driven negative may leave the support only if
/// its row is below the average divergence at `u` and at the result.
fn newton_polish(channel: &DiscreteNoiseChannel, u: &[f64]) -> Option<Vec<f64>> {
    let m = channel.m();
    let div_u = row_divergences_nats(channel, &channel.output_distribution(u));
    let info_u: f64 = u.iter().zip(&div_u).map(|(uz, d)| uz * d).sum();
    let mut support: Vec<usize> = (0..m).filter(|&z| u[z] > 0.0).collect();
    let restrict = |support: &[usize]| -> Option<Vec<f64>> {
        let mut base: Vec<f64> = (0..m).map(|z| if support.contains(&z) { u[z] } else { 0.0 }).collect();
        let s: f64 = base.iter().sum();
        (s > 0.0).then(|| {
            base.iter_mut().for_each(|x| *x /= s);
            base
        })
    };
    let mut base = u.to_vec();
    'support: while !support.is_empty() {
        for _ in 0..NEWTON_STEPS {
            let k = support.len();
            let q = channel.output_distribution(&base);
            let div = row_divergences_nats(channel, &q);
            let info: f64 = base.iter().zip(&div).map(|(uz, d)| uz * d).sum();
            if support.iter().all(|&z| (div[z] - info).abs() < NEWTON_RESIDUAL) {
                break;
            }
            let mut a = DMatrix::zeros(k + 1, k + 1);
            let mut rhs = DVector::zeros(k + 1);
            for (i, &z) in support.iter().enumerate() {
                for (j, &w) in support.iter().enumerate() {
                    a[(i, j)] = -(0..m)
                        .filter(|&y| q[y] > 0.0)
                        .map(|y| channel.entry(z, y) * channel.entry(w, y) / q[y])
                        .sum::<f64>();
                }
                a[(i, k)] = -1.0;
                a[(k, i)] = 1.0;
                rhs[i] = info - div[z];
            }
            let step = a.lu().solve(&rhs)?;
            let mut next = vec![0.0; m];
            for (i, &z) in support.iter().enumerate() {
                next[z] = base[z] + step[i];
            }
            if next.iter().any(|x| !x.is_finite()) {
                return None;
            }
            if support.iter().any(|&z| next[z] <= 0.0) {
                // Leave the face one coordinate at a time, most inactive first.
                let drop = support
                    .iter()
                    .copied()
                    .filter(|&z| next[z] <= 0.0 && div_u[z] < info_u)
                    .min_by(|&x, &y| div_u[x].total_cmp(&div_u[y]))?;
                support.retain(|&z| z != drop);
                base = restrict(&support)?;
                continue 'support;
            }
            let s: f64 = next.iter().sum();
            next.iter_mut().for_each(|x| *x /= s);
            base = next;
        }
        let div = row_divergences_nats(channel, &channel.output_distribution(&base));
        let info: f64 = base.iter().zip(&div).map(|(uz, d)| uz * d).sum();
        let dropped: Vec<usize> = (0..m).filter(|&z| u[z] > 0.0 && base[z] == 0.0).collect();
        if dropped.iter().any(|&z| div[z] >= info) {
            return None;
        }
        // A small mass lets the fixed point revive a face chosen too early.
        // The certified prune zeroes the ones that stay inactive.
        dropped.iter().for_each(|&z| base[z] = DROPPED_FLOOR);
        let s: f64 = base.iter().sum();
        base.iter_mut().for_each(|x| *x /= s);
        return Some(base);
    }
    None
}

/// Outcome of the closed-form optimality solve.
#[derive(Debug, Clone, PartialEq)]
pub enum ShannonSolution {
    /// `P^-T v` is a distribution, hence exactly optimal.
    Optimal(PredictiveDistribution),
    /// `P^-T v` has negative entries; the optimum lies on a face of the simplex.
    Inadmissible { unconstrained: Vec<f64> },
}

/// Closed-form optimal predictive distribution for an invertible channel.
///
/// Solves the stationarity condition relaxed to the hyperplane `e'u = 1`:
/// `v ∝ exp(-P^-1 h(P) / xi)` and `u'P = v'`.
pub fn shannon_closed_form(channel: &DiscreteNoiseChannel) -> Result<ShannonSolution> {
    let p = channel.to_matrix();
    let sv = p.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let rcond = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(rcond >= SINGULAR_RCOND) {
        return Err(Error::SingularMatrix { rcond });
    }
    let lu = p.clone().lu();
    let h_nats = DVector::from_iterator(channel.m(), channel.row_entropies().into_iter().map(|h| h / LOG2_E));
    let x = lu
        .solve(&h_nats)
        .ok_or(Error::SingularMatrix { rcond })?;
    // Shift before exponentiating; the normalization absorbs it.
    let shift = x.min();
    let mut v = x.map(|xi| (-(xi - shift)).exp());
    let vs = v.sum();
    v /= vs;
    let u = p
        .transpose()
        .lu()
        .solve(&v)
        .ok_or(Error::SingularMatrix { rcond })?;
    let u: Vec<f64> = u.iter().copied().collect();
    if u.iter().all(|&x| x >= -1e-12) {
        let clipped: Vec<f64> = u.iter().map(|x| x.max(0.0)).collect();
        Ok(ShannonSolution::Optimal(PredictiveDistribution::from_unnormalized(clipped)?))
    } else {
        Ok(ShannonSolution::Inadmissible { unconstrained: u })
    }
}

/// Rows that are (within `tol` in L1) a convex combination of the other rows.
/// Any such row carries zero weight in the capacity-achieving distribution.
pub fn dominated_row_report(channel: &DiscreteNoiseChannel, tol: f64) -> Vec<usize> {
    (0..channel.m())
        .filter(|&z| convex_hull_l1_distance(channel, z) <= tol)
        .collect()
}

/// L1 distance from row `z` to the L2-nearest point of the convex hull of the
/// other rows.
pub(crate) fn convex_hull_l1_distance(channel: &DiscreteNoiseChannel, z: usize) -> f64 {
    let target = channel.row(z);
    let others: Vec<&[f64]> = (0..channel.m()).filter(|&i| i != z).map(|i| channel.row(i)).collect();
    let lambda = if others.len() <= 12 {
        nearest_hull_point_exact(&others, target)
    } else {
        nearest_hull_point_iterative(&others, target)
    };
    let mut comb = vec![0.0; target.len()];
    for (l, row) in lambda.iter().zip(&others) {
        for (c, r) in comb.iter_mut().zip(row.iter()) {
            *c += l * r;
        }
    }
    comb.iter().zip(target).map(|(c, t)| (c - t).abs()).sum()
}

/// Enumerates faces of the simplex and solves the affine least-squares
/// problem on each; the best nonnegative solution is the global minimizer.
fn nearest_hull_point_exact(rows: &[&[f64]], target: &[f64]) -> Vec<f64> {
    let k = rows.len();
    let mut best = (f64::INFINITY, vec![0.0; k]);
    for mask in 1u32..(1u32 << k) {
        let idx: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let s = idx.len();
        // KKT system [G 1; 1' 0] [l; nu] = [B t; 1].
        let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
        let mut rhs = DVector::<f64>::zeros(s + 1);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                kkt[(a, b)] = dot(rows[i], rows[j]);
            }
            kkt[(a, s)] = 1.0;
            kkt[(s, a)] = 1.0;
            rhs[a] = dot(rows[i], target);
        }
        rhs[s] = 1.0;
        let Ok(sol) = kkt.svd(true, true).solve(&rhs, 1e-13) else {
            continue;
        };
        if (0..s).any(|a| sol[a] < -1e-12) {
            continue;
        }
        let mut lambda = vec![0.0; k];
        for (a, &i) in idx.iter().enumerate() {
            lambda[i] = sol[a].max(0.0);
        }
        let d = squared_distance(rows, &lambda, target);
        if d < best.0 {
            best = (d, lambda);
        }
    }
    best.1
}

/// Accelerated projected gradient on the simplex, for larger channels.
fn nearest_hull_point_iterative(rows: &[&[f64]], target: &[f64]) -> Vec<f64> {
    let k = rows.len();
    let lipschitz: f64 = rows.iter().map(|r| dot(r, r)).sum::<f64>().max(1e-12);
    let mut x = vec![1.0 / k as f64; k];
    let mut y = x.clone();
    let mut t = 1.0_f64;
    for _ in 0..20_000 {
        let mut resid = vec![0.0; target.len()];
        for (l, r) in y.iter().zip(rows) {
            for (c, v) in resid.iter_mut().zip(r.iter()) {
                *c += l * v;
            }
        }
        resid.iter_mut().zip(target).for_each(|(c, t)| *c -= t);
        let step: Vec<f64> = y
            .iter()
            .zip(rows)
            .map(|(yi, r)| yi - dot(r, &resid) / lipschitz)
            .collect();
        let next = project_to_simplex(&step);
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = next
            .iter()
            .zip(&x)
            .map(|(n, o)| n + (t - 1.0) / t_next * (n - o))
            .collect();
        x = next;
        t = t_next;
    }
    x
}

pub(crate) fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, s) in sorted.iter().enumerate() {
        cum += s;
        let cand = (cum - 1.0) / (i + 1) as f64;
        if s - cand > 0.0 {
            theta = cand;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn squared_distance(rows: &[&[f64]], lambda: &[f64], target: &[f64]) -> f64 {
    (0..target.len())
        .map(|y| {
            let c: f64 = rows.iter().zip(lambda).map(|(r, l)| l * r[y]).sum();
            (c - target[y]).powi(2)
        })
        .sum()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `C(P_alpha) = log2 m - h(alpha e1 + (1 - alpha)/m e)`.
pub fn symmetric_capacity(m: usize, alpha: f64) -> Result<f64> {
    check_symmetric_args(m, alpha)?;
    let off = (1.0 - alpha) / m as f64;
    let row_entropy = neg_xlog2x(alpha + off) + (m - 1) as f64 * neg_xlog2x(off);
    Ok(((m as f64).log2() - row_entropy).max(0.0))
}

/// Quadratic envelope of the optimality gap `C - phi(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapBounds {
    pub lower: f64,
    pub upper: f64,
}

/// `xi/(2 kappa_max) |(u-u*)'P|^2 <= C - phi(u) <= xi/(2 kappa_min) |(u-u*)'P|^2`.
pub fn sensitivity_gap_bounds(
    channel: &DiscreteNoiseChannel,
    analysis: &ChannelAnalysis,
    u: &PredictiveDistribution,
) -> Result<GapBounds> {
    check_dims(u, channel)?;
    if !analysis.admissible {
        return Err(Error::UnsupportedChannel(
            "gap bounds need a strictly positive optimal distribution".into(),
        ));
    }
    if !(analysis.kappa_min > 0.0) {
        return Err(Error::UnsupportedChannel(
            "gap bounds need every channel entry to be positive".into(),
        ));
    }
    let diff: Vec<f64> = u
        .weights()
        .iter()
        .zip(analysis.optimal_u.weights())
        .map(|(a, b)| a - b)
        .collect();
    let moved = channel.output_distribution(&diff);
    let norm2: f64 = moved.iter().map(|x| x * x).sum();
    Ok(GapBounds {
        lower: LOG2_E / (2.0 * analysis.kappa_max) * norm2,
        upper: LOG2_E / (2.0 * analysis.kappa_min) * norm2,
    })
}

/// Channel file format: an explicit matrix or a symmetric parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelSpec {
    Symmetric { symmetric: SymmetricSpec },
    Matrix(DiscreteNoiseChannel),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricSpec {
    pub m: usize,
    pub alpha: f64,
}

impl ChannelSpec {
    pub fn symmetric(m: usize, alpha: f64) -> Self {
        ChannelSpec::Symmetric {
            symmetric: SymmetricSpec { m, alpha },
        }
    }

    pub fn build(&self) -> Result<DiscreteNoiseChannel> {
        match self {
            ChannelSpec::Symmetric { symmetric } => {
                DiscreteNoiseChannel::symmetric(symmetric.m, symmetric.alpha)
            }
            ChannelSpec::Matrix(ch) => Ok(ch.clone()),
        }
    }
}
