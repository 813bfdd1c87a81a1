use serde::{Deserialize, Serialize};

use super::{construct_fan_2d, recover_alternatives_2d, EmpiricalAngles, FanConstruction, FeasibleBox};
use crate::belief::{dot, halfspace_depth_direction, Alternative, PosteriorSampleSet, Question, DEFAULT_DEPTH_RESTARTS};
use crate::channel::PredictiveDistribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumOptions {
    pub depth_restarts: usize,
    pub seed: u64,
}

impl Default for ContinuumOptions {
    fn default() -> Self {
        Self {
            depth_restarts: DEFAULT_DEPTH_RESTARTS,
            seed: 0,
        }
    }
}

/// A synthesized question and the geometry behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumQuestion {
    pub question: Question,
    /// Measured halfspace depth of the draws.
    pub depth: f64,
    /// Depth of the draws projected onto the construction plane.
    pub plane_depth: f64,
    pub fan: FanConstruction,
    /// Orthonormal basis of the construction plane.
    pub plane: [Vec<f64>; 2],
}

/// Synthesizes a question whose predictive distribution under the draws is
/// approximately `u_star`.
///
/// The plane is spanned by the depth-minimizing direction and the top
/// principal direction of the draws orthogonal to it; regions of a question
/// built in the plane and lifted by the basis depend only on the projection
/// of `theta`, so the planar fan fixes the full-dimensional masses.
pub fn construct_question_continuum(
    samples: &PosteriorSampleSet,
    u_star: &PredictiveDistribution,
    bx: &FeasibleBox,
    options: &ContinuumOptions,
) -> Result<ContinuumQuestion> {
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    let (depth, v) = halfspace_depth_direction(samples, options.depth_restarts, options.seed);
    construct_question_with_direction(samples, u_star, bx, depth, &v)
}

/// As [`construct_question_continuum`] with a precomputed depth and its
/// minimizing unit direction `v`.
pub fn construct_question_with_direction(
    samples: &PosteriorSampleSet,
    u_star: &PredictiveDistribution,
    bx: &FeasibleBox,
    depth: f64,
    v: &[f64],
) -> Result<ContinuumQuestion> {
    let d = samples.dim();
    if samples.is_empty() {
        return Err(Error::invalid("empty sample set"));
    }
    if bx.dim() != d || v.len() != d {
        return Err(Error::invalid("box or direction dimension does not match the draws"));
    }
    let m = u_star.len();
    let limit = 1.0 - depth;
    let max_u = u_star.max();
    if (m > 2 && max_u >= limit) || (m == 2 && max_u > limit) {
        return Err(Error::InfeasibleTarget(format!(
            "max u = {max_u:.4} against 1 - depth = {limit:.4}"
        )));
    }
    if u_star.weights().iter().any(|&x| x <= 0.0) {
        return Err(Error::InfeasibleTarget("target must be strictly positive".into()));
    }

    let plane = if d == 2 { [vec![1.0, 0.0], vec![0.0, 1.0]] } else { plane_basis(samples, v) };
    let projected: Vec<Vec<f64>> = samples.iter().map(|x| vec![dot(x, &plane[0]), dot(x, &plane[1])]).collect();
    let projected = PosteriorSampleSet::from_draws(2, &projected)?;
    let (plane_depth, _) = halfspace_depth_direction(&projected, 0, 0);
    let oracle = EmpiricalAngles::from_points(projected.iter().map(|p| [p[0], p[1]]));
    let fan = construct_fan_2d(&oracle, u_star, plane_depth)?;

    let question = if d == 2 {
        let c = bx.center();
        recover_alternatives_2d(&fan, [c[0], c[1]], bx)?
    } else {
        let h = bx.inradius() / std::f64::consts::SQRT_2;
        let planar = FeasibleBox::new(vec![-h, -h], vec![h, h])?;
        let q2 = recover_alternatives_2d(&fan, [0.0, 0.0], &planar)?;
        let center = bx.center();
        let lifted = q2
            .alternatives()
            .iter()
            .map(|a| {
                let x: Vec<f64> = (0..d)
                    .map(|i| center[i] + plane[0][i] * a.features[0] + plane[1][i] * a.features[1])
                    .collect();
                Alternative::new(a.id.clone(), x)
            })
            .collect::<Result<Vec<_>>>()?;
        Question::new(lifted)?
    };
    Ok(ContinuumQuestion {
        question,
        depth,
        plane_depth,
        fan,
        plane,
    })
}

/// `v` together with the dominant direction of the draws orthogonal to it.
fn plane_basis(samples: &PosteriorSampleSet, v: &[f64]) -> [Vec<f64>; 2] {
    let d = samples.dim();
    let mean = samples.mean();
    let project = |x: &mut Vec<f64>| {
        let c = dot(x, v);
        x.iter_mut().zip(v).for_each(|(a, b)| *a -= c * b);
    };
    let mut cov = vec![0.0; d * d];
    for x in samples.iter() {
        let mut c: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
        project(&mut c);
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += c[i] * c[j];
            }
        }
    }
    // Power iteration from the coordinate axis least aligned with `v`.
    let start = (0..d).min_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
    let mut g = vec![0.0; d];
    g[start] = 1.0;
    project(&mut g);
    for _ in 0..200 {
        let mut next: Vec<f64> = (0..d).map(|i| dot(&cov[i * d..(i + 1) * d], &g)).collect();
        project(&mut next);
        let n = dot(&next, &next).sqrt();
        if n < 1e-300 {
            break;
        }
        next.iter_mut().for_each(|x| *x /= n);
        g = next;
    }
    let n = dot(&g, &g).sqrt();
    g.iter_mut().for_each(|x| *x /= n);
    [v.to_vec(), g]
}

/// Target shrunk toward feasibility, with the amount moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedTarget {
    pub u: PredictiveDistribution,
    pub sigma: f64,
    /// True when the shift left the simplex and was clipped and renormalized.
    pub clipped: bool,
}

/// Moves `sigma = (max u - (1 - depth) + epsilon)^+` from the largest
/// component to the others in equal parts.
pub fn project_predictive(u_star: &PredictiveDistribution, depth: f64, epsilon: f64) -> Result<ProjectedTarget> {
    if !(epsilon >= 0.0) {
        return Err(Error::invalid("epsilon must be nonnegative"));
    }
    let m = u_star.len();
    let u = u_star.weights();
    let max_u = u_star.max();
    let sigma = (max_u - (1.0 - depth) + epsilon).max(0.0);
    if sigma == 0.0 {
        return Ok(ProjectedTarget {
            u: u_star.clone(),
            sigma,
            clipped: false,
        });
    }
    let zmax = u.iter().position(|&x| x == max_u).expect("max is attained");
    let mut out: Vec<f64> = u.iter().map(|x| x + sigma / (m - 1) as f64).collect();
    out[zmax] = max_u - sigma;
    let clipped = out.iter().any(|&x| x < 0.0);
    if clipped {
        out.iter_mut().for_each(|x| *x = x.max(0.0));
    }
    Ok(ProjectedTarget {
        u: PredictiveDistribution::from_unnormalized(out)?,
        sigma,
        clipped,
    })
}
