//! Hit-and-run over the posterior.
//!
//! Along a line `theta + t*dir` the prior is a univariate Gaussian in `t` and
//! every channel factor is piecewise constant: record `l` contributes
//! `P[z_l(t), y_l]`, where `z_l(t)` only changes where two utilities cross.
//! The line conditional is therefore a mixture of truncated normals that is
//! sampled exactly. Because every region is a cone through the origin, a
//! Metropolis radial move `theta -> s*theta` only sees the prior; it is
//! interleaved to keep the chain mixing inside thin wedges.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use super::{dot, BeliefState};
use crate::error::{Error, Result};

const PRIOR_RESTARTS: usize = 10_000;
const CACHE_REFRESH: usize = 64;

/// Draws from the posterior, row-major `len x d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSampleSet {
    d: usize,
    data: Vec<f64>,
    pub seed: u64,
    pub burn_in: usize,
    pub thinning: usize,
}

impl PosteriorSampleSet {
    /// Wraps externally generated draws (e.g. from an exact sampler).
    pub fn from_draws(d: usize, draws: &[Vec<f64>]) -> Result<Self> {
        if draws.iter().any(|x| x.len() != d) {
            return Err(Error::invalid("draw dimension mismatch"));
        }
        Ok(Self {
            d,
            data: draws.iter().flatten().copied().collect(),
            seed: 0,
            burn_in: 0,
            thinning: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.d)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for x in self.iter() {
            m.iter_mut().zip(x).for_each(|(a, b)| *a += b);
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// `count` draws spread evenly through the set.
    pub fn spread(&self, count: usize) -> PosteriorSampleSet {
        let n = self.len();
        if count >= n {
            return self.clone();
        }
        let mut data = Vec::with_capacity(count * self.d);
        for k in 0..count {
            data.extend_from_slice(self.get(k * n / count));
        }
        PosteriorSampleSet {
            data,
            ..self.clone()
        }
    }
}

/// Chain length knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub count: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

pub fn hit_and_run_sample(
    belief: &BeliefState,
    count: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
) -> Result<PosteriorSampleSet> {
    hit_and_run_sample_from(
        belief,
        SamplerSettings {
            count,
            burn_in,
            thinning,
            seed,
        },
        None,
    )
}

/// Runs the chain, starting from the first `warm` draw with positive
/// posterior density if one exists, otherwise from prior draws.
pub fn hit_and_run_sample_from(
    belief: &BeliefState,
    settings: SamplerSettings,
    warm: Option<&PosteriorSampleSet>,
) -> Result<PosteriorSampleSet> {
    if settings.thinning == 0 {
        return Err(Error::invalid("thinning must be at least 1"));
    }
    let d = belief.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let start = find_start(belief, warm, &mut rng)?;
    let mut chain = Chain::new(belief, start);
    let total = settings.burn_in + settings.count * settings.thinning;
    let mut data = Vec::with_capacity(settings.count * d);
    for step in 1..=total {
        chain.line_step(&mut rng);
        chain.radial_step(&mut rng);
        if step % CACHE_REFRESH == 0 {
            chain.refresh();
        }
        if step > settings.burn_in && (step - settings.burn_in) % settings.thinning == 0 {
            data.extend_from_slice(&chain.theta);
        }
    }
    Ok(PosteriorSampleSet {
        d,
        data,
        seed: settings.seed,
        burn_in: settings.burn_in,
        thinning: settings.thinning,
    })
}

fn find_start(
    belief: &BeliefState,
    warm: Option<&PosteriorSampleSet>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    if let Some(w) = warm.filter(|w| w.dim() == belief.dim()) {
        if let Some(x) = w.iter().find(|x| belief.log_unnormalized_posterior(x).is_finite()) {
            return Ok(x.to_vec());
        }
    }
    for _ in 0..PRIOR_RESTARTS {
        let x = belief.prior().sample(rng);
        if belief.log_unnormalized_posterior(&x).is_finite() {
            return Ok(x);
        }
    }
    Err(Error::Initialization(format!(
        "no positive-density point among {PRIOR_RESTARTS} prior draws"
    )))
}

struct RecordCache {
    m: usize,
    /// Row-major `m x d` features.
    feats: Vec<f64>,
    /// `ln P[z, y]` for the observed signal.
    log_w: Vec<f64>,
    /// Current utilities `theta'x_i`.
    util: Vec<f64>,
    slope: Vec<f64>,
    /// Answer at the left end of the current sweep position.
    current: usize,
}

struct Chain<'a> {
    belief: &'a BeliefState,
    d: usize,
    theta: Vec<f64>,
    /// `Lambda (theta - mu)`.
    resid: Vec<f64>,
    lambda_mu: Vec<f64>,
    records: Vec<RecordCache>,
    dir: Vec<f64>,
    lambda_dir: Vec<f64>,
    events: Vec<(f64, usize, usize)>,
    segments: Vec<(f64, f64, f64)>,
    breaks: Vec<f64>,
    radial_sd: f64,
}

impl<'a> Chain<'a> {
    fn new(belief: &'a BeliefState, theta: Vec<f64>) -> Self {
        let d = belief.dim();
        let ch = belief.channel();
        let records = belief
            .history()
            .iter()
            .map(|r| {
                let m = r.question.m();
                RecordCache {
                    m,
                    feats: r.question.alternatives().iter().flat_map(|a| a.features.iter().copied()).collect(),
                    log_w: (0..m).map(|z| ch.entry(z, r.signal).ln()).collect(),
                    util: vec![0.0; m],
                    slope: vec![0.0; m],
                    current: 0,
                }
            })
            .collect();
        let lambda_mu = mat_vec(belief.prior().precision(), belief.prior().mean(), d);
        let mut chain = Chain {
            belief,
            d,
            theta,
            resid: vec![0.0; d],
            lambda_mu,
            records,
            dir: vec![0.0; d],
            lambda_dir: vec![0.0; d],
            events: Vec::new(),
            segments: Vec::new(),
            breaks: Vec::new(),
            radial_sd: 1.0 / (d as f64).sqrt(),
        };
        chain.refresh();
        chain
    }

    /// Recomputes cached products from `theta`, discarding rounding drift.
    fn refresh(&mut self) {
        let d = self.d;
        let lt = mat_vec(self.belief.prior().precision(), &self.theta, d);
        for i in 0..d {
            self.resid[i] = lt[i] - self.lambda_mu[i];
        }
        for rec in &mut self.records {
            for i in 0..rec.m {
                rec.util[i] = dot(&rec.feats[i * d..(i + 1) * d], &self.theta);
            }
        }
    }

    fn line_step(&mut self, rng: &mut ChaCha8Rng) {
        let d = self.d;
        let mut norm = 0.0;
        for v in self.dir.iter_mut() {
            *v = rng.sample(StandardNormal);
            norm += *v * *v;
        }
        let norm = norm.sqrt();
        self.dir.iter_mut().for_each(|v| *v /= norm);
        let lambda = self.belief.prior().precision();
        for (i, v) in self.lambda_dir.iter_mut().enumerate() {
            *v = dot(&lambda[i * d..(i + 1) * d], &self.dir);
        }
        let a = dot(&self.dir, &self.lambda_dir);
        let b = dot(&self.dir, &self.resid);
        let center = -b / a;
        let sd = 1.0 / a.sqrt();

        // Per-record answer changes along the line.
        self.events.clear();
        for (l, rec) in self.records.iter_mut().enumerate() {
            for i in 0..rec.m {
                rec.slope[i] = dot(&rec.feats[i * d..(i + 1) * d], &self.dir);
            }
            envelope(rec, l, &mut self.breaks, &mut self.events);
        }
        self.events.sort_by(|x, y| x.0.total_cmp(&y.0));

        // Sweep left to right. Zero channel factors are counted separately so
        // the finite part of the log weight can be updated incrementally.
        let mut zeros = 0usize;
        let mut finite = 0.0;
        for rec in &self.records {
            let w = rec.log_w[rec.current];
            if w == f64::NEG_INFINITY {
                zeros += 1;
            } else {
                finite += w;
            }
        }
        self.segments.clear();
        let mut lo = f64::NEG_INFINITY;
        let mut k = 0;
        while k < self.events.len() {
            let t = self.events[k].0;
            if t > lo {
                let w = if zeros == 0 { finite } else { f64::NEG_INFINITY };
                self.segments.push((lo, t, w));
            }
            while k < self.events.len() && self.events[k].0 == t {
                let (_, l, z) = self.events[k];
                let rec = &mut self.records[l];
                for (w, sign) in [(rec.log_w[rec.current], -1.0), (rec.log_w[z], 1.0)] {
                    if w == f64::NEG_INFINITY {
                        if sign > 0.0 {
                            zeros += 1;
                        } else {
                            zeros -= 1;
                        }
                    } else {
                        finite += sign * w;
                    }
                }
                rec.current = z;
                k += 1;
            }
            lo = t;
        }
        let w = if zeros == 0 { finite } else { f64::NEG_INFINITY };
        self.segments.push((lo, f64::INFINITY, w));

        let mut best = f64::NEG_INFINITY;
        for seg in self.segments.iter_mut() {
            seg.2 = if seg.2 == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                seg.2 + log_normal_mass((seg.0 - center) / sd, (seg.1 - center) / sd)
            };
            best = best.max(seg.2);
        }
        if !best.is_finite() {
            return;
        }
        let total: f64 = self.segments.iter().map(|s| (s.2 - best).exp()).sum();
        let mut target = rng.random::<f64>() * total;
        let mut chosen = self.segments.len() - 1;
        for (i, s) in self.segments.iter().enumerate() {
            let w = (s.2 - best).exp();
            if target < w {
                chosen = i;
                break;
            }
            target -= w;
        }
        let (lo, hi, _) = self.segments[chosen];
        let t = center + sd * truncated_standard_normal((lo - center) / sd, (hi - center) / sd, rng);
        let t = t.clamp(lo, hi);
        if !t.is_finite() {
            return;
        }
        for i in 0..d {
            self.theta[i] += t * self.dir[i];
            self.resid[i] += t * self.lambda_dir[i];
        }
        for rec in &mut self.records {
            for i in 0..rec.m {
                rec.util[i] += t * rec.slope[i];
            }
        }
        // A draw rounded onto a boundary can land in a zero-weight region; undo it.
        if self.records.iter().any(|r| r.log_w[argmax(&r.util)] == f64::NEG_INFINITY) {
            self.step_back(t);
        }
    }

    fn step_back(&mut self, t: f64) {
        for i in 0..self.d {
            self.theta[i] -= t * self.dir[i];
        }
        self.refresh();
    }

    fn radial_step(&mut self, rng: &mut ChaCha8Rng) {
        let log_s: f64 = self.radial_sd * rng.sample::<f64, _>(StandardNormal);
        let s = log_s.exp();
        let d = self.d;
        let mut old_quad = 0.0;
        let mut new_quad = 0.0;
        let mut new_resid = vec![0.0; d];
        let mu = self.belief.prior().mean();
        for i in 0..d {
            new_resid[i] = s * (self.resid[i] + self.lambda_mu[i]) - self.lambda_mu[i];
            old_quad += (self.theta[i] - mu[i]) * self.resid[i];
            new_quad += (s * self.theta[i] - mu[i]) * new_resid[i];
        }
        let log_ratio = -0.5 * (new_quad - old_quad) + d as f64 * log_s;
        if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
            self.theta.iter_mut().for_each(|x| *x *= s);
            self.resid = new_resid;
            for rec in &mut self.records {
                rec.util.iter_mut().for_each(|u| *u *= s);
            }
        }
    }
}

/// Upper envelope of the lines `util_i + t*slope_i` with min-index ties.
/// Sets the answer at `t = -inf` and pushes one event per answer change.
fn envelope(rec: &mut RecordCache, l: usize, breaks: &mut Vec<f64>, events: &mut Vec<(f64, usize, usize)>) {
    let m = rec.m;
    breaks.clear();
    for i in 0..m {
        for j in i + 1..m {
            let ds = rec.slope[i] - rec.slope[j];
            if ds != 0.0 {
                let t = (rec.util[j] - rec.util[i]) / ds;
                if t.is_finite() {
                    breaks.push(t);
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let answer_at = |t: f64| {
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..m {
            let u = rec.util[i] + t * rec.slope[i];
            if u > best.1 {
                best = (i, u);
            }
        }
        best.0
    };
    // Probe points strictly inside each interval.
    let probe = |k: usize| -> f64 {
        match (k, breaks.len()) {
            (_, 0) => 0.0,
            (0, _) => breaks[0] - 1.0 - breaks[0].abs(),
            (k, n) if k == n => breaks[n - 1] + 1.0 + breaks[n - 1].abs(),
            (k, _) => 0.5 * (breaks[k - 1] + breaks[k]),
        }
    };
    let first = answer_at(probe(0));
    let mut prev = first;
    for k in 1..=breaks.len() {
        let z = answer_at(probe(k));
        if z != prev {
            events.push((breaks[k - 1], l, z));
            prev = z;
        }
    }
    rec.current = first;
}

fn argmax(values: &[f64]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn mat_vec(a: &[f64], x: &[f64], d: usize) -> Vec<f64> {
    (0..d).map(|i| dot(&a[i * d..(i + 1) * d], x)).collect()
}

/// `ln P(Z > x)`, accurate far into the upper tail.
fn log_upper_tail(x: f64) -> f64 {
    if x == f64::INFINITY {
        f64::NEG_INFINITY
    } else if x < 30.0 {
        (0.5 * erfc(x * FRAC_1_SQRT_2)).ln()
    } else {
        let x2 = x * x;
        -0.5 * x2 - x.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// `ln P(a < Z < b)` for a standard normal.
pub(crate) fn log_normal_mass(a: f64, b: f64) -> f64 {
    if !(b > a) {
        return f64::NEG_INFINITY;
    }
    if a >= 0.0 {
        let la = log_upper_tail(a);
        let lb = log_upper_tail(b);
        la + ln_1m_exp(lb - la)
    } else if b <= 0.0 {
        log_normal_mass(-b, -a)
    } else {
        let pa = if a == f64::NEG_INFINITY { -1.0 } else { erf(a * FRAC_1_SQRT_2) };
        let pb = if b == f64::INFINITY { 1.0 } else { erf(b * FRAC_1_SQRT_2) };
        (0.5 * (pb - pa)).ln()
    }
}

/// `ln(1 - e^x)` for `x <= 0`.
fn ln_1m_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Standard normal restricted to `(a, b)`.
pub(crate) fn truncated_standard_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a >= 0.0 {
        upper_truncated(a, b, rng)
    } else if b <= 0.0 {
        -upper_truncated(-b, -a, rng)
    } else {
        let pa = 0.5 * erfc(-a * FRAC_1_SQRT_2);
        let pb = 0.5 * erfc(-b * FRAC_1_SQRT_2);
        let p = pa + rng.random::<f64>() * (pb - pa);
        (-SQRT_2 * erfc_inv(2.0 * p)).clamp(a, b)
    }
}

/// Truncated sampling with `0 <= a < b`.
fn upper_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a < 8.0 {
        let qa = 0.5 * erfc(a * FRAC_1_SQRT_2);
        let qb = if b == f64::INFINITY { 0.0 } else { 0.5 * erfc(b * FRAC_1_SQRT_2) };
        if qa - qb > 1e-12 * qa {
            let q = qb + rng.random::<f64>() * (qa - qb);
            if q > 0.0 {
                return (SQRT_2 * erfc_inv(2.0 * q)).clamp(a, b);
            }
        }
    }
    if b - a < 3.0 / a.max(1.0) {
        // Narrow far-tail interval: uniform proposal, density ratio acceptance.
        loop {
            let x = a + rng.random::<f64>() * (b - a);
            if rng.random::<f64>() < (-0.5 * (x - a) * (x + a)).exp() {
                return x;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let x = a + rng.sample::<f64, _>(Exp1) / lambda;
        if x < b && rng.random::<f64>() < (-0.5 * (x - lambda).powi(2)).exp() {
            return x;
        }
    }
}
