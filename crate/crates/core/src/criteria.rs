//! Necessary condition for a linear-in-momenta first integral: the scalar
//! curvature `R`, `L = |grad R|^2` and `Delta R` must be functionally
//! dependent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};
use crate::geometry::{scalar_curvature, Metric2D};

/// `(R, L, Delta)` with `L = g^{ij} R_i R_j` and `Delta` the
/// Laplace-Beltrami operator applied to `R`.
pub fn criterion_scalars(m: &Metric2D) -> (Expr, Expr, Expr) {
    scalars_with_sign(m, 1.0)
}

fn scalars_with_sign(m: &Metric2D, sign: f64) -> (Expr, Expr, Expr) {
    let [u, v] = m.coords();
    let r = sign * scalar_curvature(m);
    let (ru, rv) = (r.differentiate(u), r.differentiate(v));
    let [i11, i12, i22] = m.inverse();
    let l = Expr::sum([&i11 * &ru * &ru, 2.0 * &i12 * &ru * &rv, &i22 * &rv * &rv]);
    let root = Expr::sqrt(m.det());
    let flux_u = &root * (&i11 * &ru + &i12 * &rv);
    let flux_v = &root * (&i12 * &ru + &i22 * &rv);
    let delta = (flux_u.differentiate(u) + flux_v.differentiate(v)) / root;
    (r, l, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// The metric admits no linear integral on the sampled domain.
    Obstructed,
    /// The necessary condition holds at every sample; this does not imply
    /// that a linear integral exists.
    ConsistentWithLinearIntegral,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CriterionSample {
    pub u1: f64,
    pub u2: f64,
    pub det_rl: f64,
    pub det_rdelta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub threshold: f64,
    pub samples: Vec<CriterionSample>,
    pub skipped: usize,
    /// Fraction of samples where either determinant exceeds the threshold.
    pub exceed_fraction: f64,
    pub verdict: Verdict,
}

pub const DEFAULT_THRESHOLD: f64 = 1e-8;

fn normalized_det(a: [f64; 2], b: [f64; 2]) -> f64 {
    let na = a[0].hypot(a[1]);
    let nb = b[0].hypot(b[1]);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a[0] * b[1] - a[1] * b[0]) / (na * nb)
}

/// Evaluates both Jacobian determinants, with each gradient row normalized
/// to unit length, at the given points. At least 90% of evaluated samples
/// above `threshold` gives [`Verdict::Obstructed`]; all below gives
/// [`Verdict::ConsistentWithLinearIntegral`].
pub fn criterion_determinants(m: &Metric2D, points: &[(f64, f64)], threshold: f64) -> Result<CriterionReport> {
    determinants_with_sign(m, points, threshold, 1.0)
}

/// As [`criterion_determinants`] with the curvature sign convention flipped.
pub fn criterion_determinants_flipped(m: &Metric2D, points: &[(f64, f64)], threshold: f64) -> Result<CriterionReport> {
    determinants_with_sign(m, points, threshold, -1.0)
}

fn determinants_with_sign(m: &Metric2D, points: &[(f64, f64)], threshold: f64, sign: f64) -> Result<CriterionReport> {
    let [u, v] = m.coords();
    let (r, l, delta) = scalars_with_sign(m, sign);
    let outputs = [
        r.differentiate(u),
        r.differentiate(v),
        l.differentiate(u),
        l.differentiate(v),
        delta.differentiate(u),
        delta.differentiate(v),
    ];
    let tape = Tape::compile(&outputs, &[u, v])?;
    let evaluated: Vec<Option<CriterionSample>> = points
        .par_iter()
        .map(|&(a, b)| {
            let g = tape.eval(&[a, b]).ok()?;
            if g.iter().any(|x| !x.is_finite()) {
                return None;
            }
            Some(CriterionSample {
                u1: a,
                u2: b,
                det_rl: normalized_det([g[0], g[1]], [g[2], g[3]]),
                det_rdelta: normalized_det([g[0], g[1]], [g[4], g[5]]),
            })
        })
        .collect();
    let skipped = evaluated.iter().filter(|s| s.is_none()).count();
    let samples: Vec<CriterionSample> = evaluated.into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no admissible sample points".into()));
    }
    let exceed = samples
        .iter()
        .filter(|s| s.det_rl.abs() > threshold || s.det_rdelta.abs() > threshold)
        .count();
    let exceed_fraction = exceed as f64 / samples.len() as f64;
    let verdict = if exceed_fraction >= 0.9 {
        Verdict::Obstructed
    } else if exceed == 0 {
        Verdict::ConsistentWithLinearIntegral
    } else {
        Verdict::Inconclusive
    };
    Ok(CriterionReport {
        threshold,
        samples,
        skipped,
        exceed_fraction,
        verdict,
    })
}
