use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use super::FanConstruction;
use crate::belief::{Alternative, Question};
use crate::error::{Error, Result};

/// Axis-aligned box of admissible feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FeasibleBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::invalid("box needs matching bounds with lower < upper"));
        }
        Ok(Self { lower, upper })
    }

    /// Unit hypercube centered at `center`.
    pub fn unit_cube(center: &[f64]) -> Self {
        Self {
            lower: center.iter().map(|c| c - 0.5).collect(),
            upper: center.iter().map(|c| c + 0.5).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    /// Half of the shortest side.
    pub fn inradius(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (u - l)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains_strictly(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l < *v && *v < *u)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Largest `s >= 0` keeping `p + s*dir` inside the box.
    fn max_step(&self, p: &[f64], dir: &[f64]) -> f64 {
        let mut s = f64::INFINITY;
        for i in 0..p.len() {
            if dir[i] > 0.0 {
                s = s.min((self.upper[i] - p[i]) / dir[i]);
            } else if dir[i] < 0.0 {
                s = s.min((self.lower[i] - p[i]) / dir[i]);
            }
        }
        s
    }
}

fn synthetic(z: usize, features: Vec<f64>) -> Result<Alternative> {
    Alternative::new(format!("synthetic-{}", z + 1), features)
}

/// Planar alternatives whose answer regions are the cones over the fan's arcs.
///
/// Vertex `k` of the polygon circumscribing the unit circle with edge normals
/// at the fan angles has normal cone exactly `Cone(arc k)`; the polygon is
/// translated so that alternative 1 sits at `interior` and shrunk to half of
/// the largest scale that keeps every vertex in the box.
pub fn recover_alternatives_2d(fan: &FanConstruction, interior: [f64; 2], bx: &FeasibleBox) -> Result<Question> {
    if bx.dim() != 2 || !bx.contains_strictly(&interior) {
        return Err(Error::Construction("interior point must lie strictly inside a planar box".into()));
    }
    let m = fan.m();
    let p = interior;
    if m == 2 {
        let (eta, _) = fan.arc(fan.position_of(0));
        let w = [(eta + FRAC_PI_2).cos(), (eta + FRAC_PI_2).sin()];
        let neg = [-w[0], -w[1]];
        let c = 0.5 * bx.max_step(&p, &neg);
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Construction("degenerate box".into()));
        }
        return Question::new(vec![
            synthetic(0, p.to_vec())?,
            synthetic(1, vec![p[0] - c * w[0], p[1] - c * w[1]])?,
        ]);
    }
    if fan.max_gap() >= std::f64::consts::PI {
        return Err(Error::Construction("fan is not salient".into()));
    }
    let vertex = |k: usize| -> [f64; 2] {
        let (a, g) = fan.arc(k);
        let b = a + g;
        let denom = 1.0 + g.cos();
        [(a.cos() + b.cos()) / denom, (a.sin() + b.sin()) / denom]
    };
    let base = vertex(fan.position_of(0));
    let offsets: Vec<[f64; 2]> = (0..m)
        .map(|z| {
            let v = vertex(fan.position_of(z));
            [v[0] - base[0], v[1] - base[1]]
        })
        .collect();
    let scale = offsets
        .iter()
        .filter(|o| o[0] != 0.0 || o[1] != 0.0)
        .map(|o| bx.max_step(&p, o))
        .fold(f64::INFINITY, f64::min);
    let s = 0.5 * scale;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Construction("cannot keep the alternatives inside the box".into()));
    }
    let alts = offsets
        .iter()
        .enumerate()
        .map(|(z, o)| synthetic(z, vec![p[0] + s * o[0], p[1] + s * o[1]]))
        .collect::<Result<Vec<_>>>()?;
    Question::new(alts)
}
