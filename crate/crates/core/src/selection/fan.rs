//! Partitions of the circle into `m` arcs of prescribed mass, each shorter
//! than a half circle, so that the cones they span form a salient fan.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

use crate::channel::PredictiveDistribution;
use crate::error::{Error, Result};

/// Bisection stops once an arc mass is this close to its target, or within
/// one atom of the oracle when that is coarser.
pub const FAN_MASS_TOL: f64 = 1e-4;
const BISECTION_ITERS: usize = 40;
const HALF_CIRCLE_GRID: usize = 4096;

/// Mass of angular arcs under a measure on the circle.
pub trait ArcMass: Sync {
    /// Mass of `[start, start + len)`, `0 <= len <= 2 pi`.
    fn arc_mass(&self, start: f64, len: f64) -> f64;

    /// Smallest mass increment the oracle can resolve.
    fn resolution(&self) -> f64 {
        0.0
    }

    /// Angle whose half circle `[a, a + pi)` carries the least mass, with that mass.
    fn min_half_circle(&self) -> (f64, f64) {
        (0..HALF_CIRCLE_GRID)
            .map(|k| {
                let a = TAU * k as f64 / HALF_CIRCLE_GRID as f64;
                (a, self.arc_mass(a, PI))
            })
            .fold((0.0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
    }
}

/// Uniform measure on the circle: mass is arc length over `2 pi`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformCircle;

impl ArcMass for UniformCircle {
    fn arc_mass(&self, _start: f64, len: f64) -> f64 {
        (len / TAU).clamp(0.0, 1.0)
    }

    fn min_half_circle(&self) -> (f64, f64) {
        (0.0, 0.5)
    }
}

/// Empirical measure of the directions of planar points.
#[derive(Debug, Clone)]
pub struct EmpiricalAngles {
    sorted: Vec<f64>,
}

impl EmpiricalAngles {
    pub fn from_points<'a>(points: impl Iterator<Item = [f64; 2]> + 'a) -> Self {
        let mut sorted: Vec<f64> = points.map(|p| p[1].atan2(p[0]).rem_euclid(TAU)).collect();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Count in `[lo, hi)` with `0 <= lo <= hi <= 2 pi`.
    fn count(&self, lo: f64, hi: f64) -> usize {
        self.sorted.partition_point(|&a| a < hi) - self.sorted.partition_point(|&a| a < lo)
    }
}

impl ArcMass for EmpiricalAngles {
    fn arc_mass(&self, start: f64, len: f64) -> f64 {
        if self.sorted.is_empty() {
            return 0.0;
        }
        if len >= TAU {
            return 1.0;
        }
        let s = start.rem_euclid(TAU);
        let e = s + len;
        let c = if e <= TAU {
            self.count(s, e)
        } else {
            self.count(s, TAU) + self.count(0.0, e - TAU)
        };
        c as f64 / self.sorted.len() as f64
    }

    fn resolution(&self) -> f64 {
        1.0 / self.sorted.len().max(1) as f64
    }
}

/// A salient `m`-fan: arc `k` is `[angles[k], angles[k+1])` (cyclically) and
/// carries the target mass of alternative `targets[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanConstruction {
    /// Ascending, in `[0, 2 pi)`.
    pub angles: Vec<f64>,
    pub targets: Vec<usize>,
    /// Oracle mass of each arc.
    pub masses: Vec<f64>,
}

impl FanConstruction {
    pub fn m(&self) -> usize {
        self.angles.len()
    }

    /// Start and length of arc `k`.
    pub fn arc(&self, k: usize) -> (f64, f64) {
        let m = self.m();
        let start = self.angles[k];
        let end = if k + 1 == m { self.angles[0] + TAU } else { self.angles[k + 1] };
        (start, end - start)
    }

    /// Position of the arc assigned to alternative `z`.
    pub fn position_of(&self, z: usize) -> usize {
        self.targets.iter().position(|&t| t == z).expect("every alternative has an arc")
    }

    pub fn max_gap(&self) -> f64 {
        (0..self.m()).map(|k| self.arc(k).1).fold(0.0, f64::max)
    }

    /// Index of the arc containing direction `angle`.
    pub fn arc_containing(&self, angle: f64) -> usize {
        let a = angle.rem_euclid(TAU);
        match self.angles.partition_point(|&x| x <= a) {
            0 => self.m() - 1,
            k => k - 1,
        }
    }

    fn from_raw(starts: Vec<f64>, targets: Vec<usize>, oracle: &dyn ArcMass) -> Self {
        let mut pairs: Vec<(f64, usize)> = starts.iter().map(|s| s.rem_euclid(TAU)).zip(targets).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let angles: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let targets = pairs.iter().map(|p| p.1).collect();
        let mut fan = Self {
            angles,
            targets,
            masses: Vec::new(),
        };
        fan.masses = (0..fan.m()).map(|k| {
            let (s, l) = fan.arc(k);
            oracle.arc_mass(s, l)
        }).collect();
        fan
    }
}

fn mass_tol(oracle: &dyn ArcMass) -> f64 {
    FAN_MASS_TOL.max(oracle.resolution())
}

/// Length `len <= max_len` with `arc_mass(start, len)` closest to `target`.
fn bisect_length(oracle: &dyn ArcMass, start: f64, max_len: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, max_len);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECTION_ITERS {
        mid = 0.5 * (lo + hi);
        let mass = oracle.arc_mass(start, mid);
        if (mass - target).abs() <= mass_tol(oracle) {
            break;
        }
        if mass < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Places arcs for `order[..]` one after another from `start`; the last arc
/// closes at `end`. Returns the start angle of each arc.
fn fill(oracle: &dyn ArcMass, start: f64, end: f64, order: &[usize], u: &[f64]) -> Vec<f64> {
    let mut starts = Vec::with_capacity(order.len());
    let mut cur = start;
    for (i, &z) in order.iter().enumerate() {
        starts.push(cur);
        if i + 1 < order.len() {
            cur += bisect_length(oracle, cur, end - cur, u[z]);
        }
    }
    starts
}

fn realized_ok(fan: &FanConstruction, u: &[f64], tol: f64) -> bool {
    fan.max_gap() < PI
        && (0..fan.m()).all(|k| (fan.masses[k] - u[fan.targets[k]]).abs() <= tol)
}

/// Builds a fan whose arc masses match `u_star`.
///
/// With `max u < depth` arcs are laid down consecutively: any half circle
/// holds at least `depth`, so no arc reaches length `pi`. Otherwise the
/// largest arc starts at an angle whose half circle holds a mass strictly
/// between `max u` and `max u + min u`, and the smallest arc sits next to it,
/// which confines the remaining arcs to less than a half circle.
pub fn construct_fan_2d(oracle: &dyn ArcMass, u_star: &PredictiveDistribution, depth: f64) -> Result<FanConstruction> {
    let u = u_star.weights();
    let m = u.len();
    if u.iter().any(|&x| x <= 0.0) {
        return Err(Error::InfeasibleTarget("target must be strictly positive".into()));
    }
    let max_u = u_star.max();
    let min_u = u_star.min();
    if m == 2 {
        if max_u > 1.0 - depth {
            return Err(Error::InfeasibleTarget(format!(
                "max u = {max_u:.4} exceeds 1 - depth = {:.4}",
                1.0 - depth
            )));
        }
        return pairwise_fan(oracle, u);
    }
    if max_u >= 1.0 - depth {
        return Err(Error::InfeasibleTarget(format!(
            "max u = {max_u:.4} is not below 1 - depth = {:.4}",
            1.0 - depth
        )));
    }
    let tol = (m as f64) * mass_tol(oracle);

    if max_u < depth {
        let order: Vec<usize> = (0..m).collect();
        let fan = FanConstruction::from_raw(fill(oracle, 0.0, TAU, &order, u), order, oracle);
        if realized_ok(&fan, u, tol) {
            return Ok(fan);
        }
    }

    let zmax = (0..m).find(|&z| u[z] == max_u).expect("max is attained");
    let zmin = (0..m).rev().find(|&z| u[z] == min_u && z != zmax).expect("m > 2");
    let rest: Vec<usize> = (0..m).filter(|&z| z != zmax && z != zmin).collect();
    let (a, _) = oracle.min_half_circle();
    let lo = max_u.max(depth);
    let hi = (max_u + min_u).min(1.0 - depth);
    for frac in [0.5, 0.25, 0.75, 0.1, 0.9] {
        let tau = lo + frac * (hi - lo);
        // Half-circle mass runs from ~depth at `a` to ~1 - depth at `a + pi`.
        let (mut l, mut h) = (a, a + PI);
        for _ in 0..BISECTION_ITERS {
            let mid = 0.5 * (l + h);
            if oracle.arc_mass(mid, PI) < tau {
                l = mid;
            } else {
                h = mid;
            }
        }
        let eta1 = 0.5 * (l + h);
        let eta2 = eta1 + bisect_length(oracle, eta1, TAU, max_u);

        // Smallest arc right after the largest one.
        let mut order = vec![zmax, zmin];
        order.extend(&rest);
        let fan = FanConstruction::from_raw(fill(oracle, eta1, eta1 + TAU, &order, u), order, oracle);
        if realized_ok(&fan, u, tol) {
            return Ok(fan);
        }

        // Smallest arc closing the circle just before the largest one.
        let end_len = bisect_length_backward(oracle, eta1 + TAU, eta1 + TAU - eta2, min_u);
        let end_start = eta1 + TAU - end_len;
        let mut starts = vec![eta1];
        starts.extend(fill(oracle, eta2, end_start, &rest, u));
        starts.push(end_start);
        let mut order = vec![zmax];
        order.extend(&rest);
        order.push(zmin);
        let fan = FanConstruction::from_raw(starts, order, oracle);
        if realized_ok(&fan, u, tol) {
            return Ok(fan);
        }
    }
    Err(Error::Construction("no salient fan matches the target masses".into()))
}

/// Length `len <= max_len` with `arc_mass(end - len, len)` closest to `target`.
fn bisect_length_backward(oracle: &dyn ArcMass, end: f64, max_len: f64, target: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, max_len);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..BISECTION_ITERS {
        mid = 0.5 * (lo + hi);
        let mass = oracle.arc_mass(end - mid, mid);
        if (mass - target).abs() <= mass_tol(oracle) {
            break;
        }
        if mass < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Two opposite half circles with masses `u`.
fn pairwise_fan(oracle: &dyn ArcMass, u: &[f64]) -> Result<FanConstruction> {
    let (a, _) = oracle.min_half_circle();
    let (mut l, mut h) = (a, a + PI);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (l + h);
        if oracle.arc_mass(mid, PI) < u[0] {
            l = mid;
        } else {
            h = mid;
        }
    }
    let eta = 0.5 * (l + h);
    Ok(FanConstruction::from_raw(vec![eta, eta + PI], vec![0, 1], oracle))
}
