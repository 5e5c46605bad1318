//! Seeded sampling of admissible points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A coordinate box minus a neighbourhood of singular curves `phi = 0`.
///
/// Distance to a locus is the first-order estimate `|phi| / |grad phi|`.
#[derive(Debug, Clone)]
pub struct Region {
    pub coords: [String; 2],
    pub u1: (f64, f64),
    pub u2: (f64, f64),
    pub loci: Vec<Expr>,
    pub margin: f64,
    tape: Option<Tape>,
}

/// Serializable form of [`Region`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub u1: [f64; 2],
    pub u2: [f64; 2],
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub singular_loci: Vec<String>,
}

fn default_margin() -> f64 {
    0.1
}

impl Region {
    pub fn new(coords: [&str; 2], u1: (f64, f64), u2: (f64, f64), loci: Vec<Expr>, margin: f64) -> Result<Self> {
        let mut outputs = Vec::new();
        for phi in &loci {
            outputs.push(phi.clone());
            outputs.push(phi.differentiate(coords[0]));
            outputs.push(phi.differentiate(coords[1]));
        }
        let tape = if outputs.is_empty() {
            None
        } else {
            Some(Tape::compile(&outputs, &coords)?)
        };
        Ok(Region {
            coords: [coords[0].to_string(), coords[1].to_string()],
            u1,
            u2,
            loci,
            margin,
            tape,
        })
    }

    pub fn from_spec(coords: [&str; 2], spec: &RegionSpec) -> Result<Self> {
        let loci = spec
            .singular_loci
            .iter()
            .map(|s| Expr::parse(s).map_err(Error::from))
            .collect::<Result<Vec<_>>>()?;
        Region::new(
            coords,
            (spec.u1[0], spec.u1[1]),
            (spec.u2[0], spec.u2[1]),
            loci,
            spec.margin,
        )
    }

    pub fn to_spec(&self) -> RegionSpec {
        RegionSpec {
            u1: [self.u1.0, self.u1.1],
            u2: [self.u2.0, self.u2.1],
            margin: self.margin,
            singular_loci: self.loci.iter().map(|e| e.to_string()).collect(),
        }
    }

    /// Smallest estimated distance to any singular locus (infinite if none).
    pub fn distance_to_loci(&self, u1: f64, u2: f64) -> f64 {
        let Some(tape) = &self.tape else {
            return f64::INFINITY;
        };
        let Ok(v) = tape.eval(&[u1, u2]) else {
            return 0.0;
        };
        v.chunks(3)
            .map(|c| {
                let grad = c[1].hypot(c[2]);
                if grad > 0.0 {
                    c[0].abs() / grad
                } else if c[0] == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, u1: f64, u2: f64) -> bool {
        (self.u1.0..=self.u1.1).contains(&u1) && (self.u2.0..=self.u2.1).contains(&u2)
    }

    pub fn is_admissible(&self, u1: f64, u2: f64) -> bool {
        self.contains(u1, u2) && self.distance_to_loci(u1, u2) >= self.margin
    }

    /// Draws `count` admissible points by rejection.
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::with_capacity(count);
        let max_attempts = 1000 * count.max(1);
        let mut attempts = 0;
        while out.len() < count {
            attempts += 1;
            if attempts > max_attempts {
                return Err(Error::InvalidArgument(format!(
                    "could not draw {count} admissible points (got {})",
                    out.len()
                )));
            }
            let u1 = rng.random_range(self.u1.0..=self.u1.1);
            let u2 = rng.random_range(self.u2.0..=self.u2.1);
            if self.distance_to_loci(u1, u2) >= self.margin {
                out.push((u1, u2));
            }
        }
        Ok(out)
    }
}

/// Uniform draws in `[-2, 2]^n` with `|a_{n-1}| >= 0.2`.
pub fn sample_a_points<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..=2.0)).collect();
            let mag = rng.random_range(0.2..=2.0);
            a[n - 1] = if rng.random_bool(0.5) { mag } else { -mag };
            a
        })
        .collect()
}

/// As [`sample_a_points`] with `a_{n-1}` in `[0.2, 2]`, the domain of
/// generators containing `log a_{n-1}`.
pub fn sample_a_points_positive<R: Rng>(n: usize, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = sample_a_points(n, count, rng);
    for p in &mut pts {
        p[n - 1] = p[n - 1].abs();
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_to_parabola() {
        let phi = Expr::parse("y^2 - 2*x").unwrap();
        let r = Region::new(["x", "y"], (-2.0, 2.0), (-2.0, 2.0), vec![phi], 0.1).unwrap();
        // at (0.5, 0): |phi| = 1, |grad| = 2
        assert!((r.distance_to_loci(0.5, 0.0) - 0.5).abs() < 1e-15);
        assert!(!r.is_admissible(0.0, 0.05));
        assert!(r.is_admissible(-1.0, 0.0));
    }

    #[test]
    fn sampling_is_reproducible() {
        let phi = Expr::parse("y^2 - 2*x").unwrap();
        let r = Region::new(["x", "y"], (-2.0, 2.0), (-2.0, 2.0), vec![phi], 0.1).unwrap();
        let a = r.sample(50, &mut seeded_rng(7)).unwrap();
        let b = r.sample(50, &mut seeded_rng(7)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&(x, y)| r.is_admissible(x, y)));
    }

    #[test]
    fn a_points_respect_bounds() {
        let pts = sample_a_points(4, 200, &mut seeded_rng(1));
        for p in pts {
            assert!(p.iter().all(|v| v.abs() <= 2.0));
            assert!(p[3].abs() >= 0.2);
        }
    }
}
