//! Two-dimensional metrics, momentum polynomials, Poisson brackets and
//! Gauss curvature.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Expr, Tape};

/// A 2-D metric `g11 du1^2 + 2 g12 du1 du2 + g22 du2^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric2D {
    pub g11: Expr,
    pub g12: Expr,
    pub g22: Expr,
    coords: [String; 2],
}

impl Metric2D {
    pub fn new(g11: Expr, g12: Expr, g22: Expr, coords: [&str; 2]) -> Self {
        Metric2D {
            g11,
            g12,
            g22,
            coords: [coords[0].to_string(), coords[1].to_string()],
        }
    }

    pub fn identity(coords: [&str; 2]) -> Self {
        Self::new(Expr::one(), Expr::zero(), Expr::one(), coords)
    }

    /// `lambda (du1^2 + du2^2)`.
    pub fn conformal(lambda: Expr, coords: [&str; 2]) -> Self {
        Self::new(lambda.clone(), Expr::zero(), lambda, coords)
    }

    pub fn coords(&self) -> [&str; 2] {
        [&self.coords[0], &self.coords[1]]
    }

    pub fn det(&self) -> Expr {
        &self.g11 * &self.g22 - &self.g12 * &self.g12
    }

    /// Components `(g^11, g^12, g^22)` of the inverse metric.
    pub fn inverse(&self) -> [Expr; 3] {
        let det = self.det();
        [&self.g22 / &det, -(&self.g12 / &det), &self.g11 / &det]
    }

    pub fn components_at(&self, u1: f64, u2: f64) -> Result<[f64; 3]> {
        let tape = Tape::compile(&[self.g11.clone(), self.g12.clone(), self.g22.clone()], &self.coords)?;
        let v = tape.eval(&[u1, u2])?;
        Ok([v[0], v[1], v[2]])
    }

    /// Pulls the metric back along `u = A w + b`, with `w` named `new_coords`.
    pub fn affine_pullback(&self, a: [[f64; 2]; 2], b: [f64; 2], new_coords: [&str; 2]) -> Metric2D {
        let w1 = Expr::var(new_coords[0]);
        let w2 = Expr::var(new_coords[1]);
        let mut map = std::collections::BTreeMap::new();
        map.insert(self.coords[0].clone(), a[0][0] * &w1 + a[0][1] * &w2 + b[0]);
        map.insert(self.coords[1].clone(), a[1][0] * &w1 + a[1][1] * &w2 + b[1]);
        let g = [
            [self.g11.substitute_all(&map), self.g12.substitute_all(&map)],
            [self.g12.substitute_all(&map), self.g22.substitute_all(&map)],
        ];
        let comp = |i: usize, j: usize| {
            let mut terms = Vec::new();
            for (k, gk) in g.iter().enumerate() {
                for (l, gkl) in gk.iter().enumerate() {
                    terms.push(a[k][i] * a[l][j] * gkl);
                }
            }
            Expr::sum(terms)
        };
        Metric2D::new(comp(0, 0), comp(0, 1), comp(1, 1), new_coords)
    }
}

/// A point of the cotangent bundle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub u1: f64,
    pub u2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl PhasePoint {
    pub fn new(u1: f64, u2: f64, p1: f64, p2: f64) -> Self {
        PhasePoint { u1, u2, p1, p2 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.u1, self.u2, self.p1, self.p2]
    }

    pub fn from_array(s: [f64; 4]) -> Self {
        PhasePoint::new(s[0], s[1], s[2], s[3])
    }
}

/// A homogeneous polynomial in momenta, `sum_k c_k p1^(n-k) p2^k`, with
/// coefficients depending on the coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumPoly {
    coords: [String; 2],
    coeffs: Vec<Expr>,
}

impl MomentumPoly {
    /// `coeffs[k]` multiplies `p1^(n-k) p2^k`; the degree is `coeffs.len() - 1`.
    pub fn new(coords: [&str; 2], coeffs: Vec<Expr>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::InvalidArgument(
                "momentum polynomial needs at least one coefficient".into(),
            ));
        }
        Ok(MomentumPoly {
            coords: [coords[0].to_string(), coords[1].to_string()],
            coeffs,
        })
    }

    /// `a p1 + b p2`.
    pub fn linear(coords: [&str; 2], a: Expr, b: Expr) -> Self {
        MomentumPoly::new(coords, vec![a, b]).expect("two coefficients")
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Expr] {
        &self.coeffs
    }

    pub fn coords(&self) -> [&str; 2] {
        [&self.coords[0], &self.coords[1]]
    }

    fn with_coeffs(&self, coeffs: Vec<Expr>) -> Self {
        MomentumPoly {
            coords: self.coords.clone(),
            coeffs,
        }
    }

    pub fn scale(&self, factor: &Expr) -> Self {
        self.with_coeffs(self.coeffs.iter().map(|c| factor * c).collect())
    }

    pub fn mul(&self, other: &MomentumPoly) -> Self {
        let n = self.degree() + other.degree();
        let mut terms: Vec<Vec<Expr>> = vec![Vec::new(); n + 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                terms[i + j].push(a * b);
            }
        }
        self.with_coeffs(terms.into_iter().map(Expr::sum).collect())
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut out = self.with_coeffs(vec![Expr::one()]);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    fn combine(&self, other: &MomentumPoly, sign: f64) -> Result<Self> {
        if self.degree() != other.degree() {
            return Err(Error::Dimension(format!(
                "cannot add momentum polynomials of degrees {} and {}",
                self.degree(),
                other.degree()
            )));
        }
        Ok(self.with_coeffs(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + sign * b)
                .collect(),
        ))
    }

    pub fn add(&self, other: &MomentumPoly) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &MomentumPoly) -> Result<Self> {
        self.combine(other, -1.0)
    }

    /// Coefficient-wise derivative in coordinate `i` (0 or 1).
    pub fn d_coord(&self, i: usize) -> Self {
        let var = &self.coords[i];
        self.with_coeffs(self.coeffs.iter().map(|c| c.differentiate(var)).collect())
    }

    pub fn d_p1(&self) -> Self {
        let n = self.degree();
        if n == 0 {
            return self.with_coeffs(vec![Expr::zero()]);
        }
        self.with_coeffs((0..n).map(|k| (n - k) as f64 * &self.coeffs[k]).collect())
    }

    pub fn d_p2(&self) -> Self {
        let n = self.degree();
        if n == 0 {
            return self.with_coeffs(vec![Expr::zero()]);
        }
        self.with_coeffs((1..=n).map(|k| k as f64 * &self.coeffs[k]).collect())
    }

    pub fn coefficient_values(&self, u1: f64, u2: f64) -> Result<Vec<f64>> {
        let tape = Tape::compile(&self.coeffs, &self.coords)?;
        Ok(tape.eval(&[u1, u2])?)
    }

    pub fn evaluate(&self, s: &PhasePoint) -> Result<f64> {
        let c = self.coefficient_values(s.u1, s.u2)?;
        Ok(monomial_sum(&c, s.p1, s.p2))
    }

    pub fn is_structurally_zero(&self) -> bool {
        self.coeffs.iter().all(Expr::is_zero)
    }
}

/// `sum_k c[k] p1^(n-k) p2^k`.
pub fn monomial_sum(c: &[f64], p1: f64, p2: f64) -> f64 {
    let n = c.len() - 1;
    c.iter()
        .enumerate()
        .map(|(k, ck)| ck * p1.powi((n - k) as i32) * p2.powi(k as i32))
        .sum()
}

/// `H = 1/2 g^{ij} p_i p_j`.
pub fn hamiltonian(m: &Metric2D) -> Result<MomentumPoly> {
    let det = m.det();
    if det.is_zero() {
        return Err(Error::DegenerateMetric);
    }
    let [inv11, inv12, inv22] = m.inverse();
    MomentumPoly::new(m.coords(), vec![0.5 * inv11, inv12, 0.5 * inv22])
}

/// Canonical bracket `{f, h}`; for degrees `(n, m)` the result has degree
/// `n + m - 1`.
pub fn poisson_bracket(f: &MomentumPoly, h: &MomentumPoly) -> Result<MomentumPoly> {
    if f.coords != h.coords {
        return Err(Error::InvalidArgument(format!(
            "coordinate mismatch: {:?} vs {:?}",
            f.coords, h.coords
        )));
    }
    if f.degree() == 0 || h.degree() == 0 {
        return Err(Error::InvalidArgument(
            "bracket operands must have positive degree".into(),
        ));
    }
    let t1 = f.d_coord(0).mul(&h.d_p1());
    let t2 = f.d_coord(1).mul(&h.d_p2());
    let t3 = f.d_p1().mul(&h.d_coord(0));
    let t4 = f.d_p2().mul(&h.d_coord(1));
    t1.add(&t2)?.sub(&t3)?.sub(&t4)
}

/// Relative bracket residual statistics over sampled points.
#[derive(Debug, Clone, Serialize)]
pub struct BracketReport {
    pub degree: usize,
    pub evaluated: usize,
    pub skipped: usize,
    pub max_relative: f64,
    pub mean_relative: f64,
}

/// Evaluates `{f, h}` at the given coordinate points; each coefficient is
/// scaled by `1 + sum |input coefficients|` at that point.
pub fn bracket_residual(f: &MomentumPoly, h: &MomentumPoly, points: &[(f64, f64)]) -> Result<BracketReport> {
    let b = poisson_bracket(f, h)?;
    let nb = b.coeffs.len();
    let outputs: Vec<Expr> = b.coeffs.iter().chain(&f.coeffs).chain(&h.coeffs).cloned().collect();
    let tape = Tape::compile(&outputs, &f.coords)?;
    let mut scratch = Vec::new();
    let mut out = vec![0.0; outputs.len()];
    let (mut max, mut total, mut evaluated, mut skipped) = (0.0f64, 0.0, 0, 0);
    for &(u1, u2) in points {
        if tape.eval_into(&[u1, u2], &mut scratch, &mut out).is_err() {
            skipped += 1;
            continue;
        }
        let scale = 1.0 + out[nb..].iter().map(|v| v.abs()).sum::<f64>();
        let r = out[..nb].iter().map(|v| v.abs()).fold(0.0, f64::max) / scale;
        max = max.max(r);
        total += r;
        evaluated += 1;
    }
    Ok(BracketReport {
        degree: b.degree(),
        evaluated,
        skipped,
        max_relative: max,
        mean_relative: if evaluated > 0 { total / evaluated as f64 } else { 0.0 },
    })
}

fn det3(m: &[[Expr; 3]; 3]) -> Expr {
    Expr::sum([
        &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1]),
        -(&m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])),
        &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0]),
    ])
}

/// Gauss curvature by the Brioschi formula.
pub fn gauss_curvature(m: &Metric2D) -> Expr {
    let [u, v] = m.coords();
    let (e, f, g) = (&m.g11, &m.g12, &m.g22);
    let (eu, ev) = (e.differentiate(u), e.differentiate(v));
    let (fu, fv) = (f.differentiate(u), f.differentiate(v));
    let (gu, gv) = (g.differentiate(u), g.differentiate(v));
    let evv = ev.differentiate(v);
    let fuv = fu.differentiate(v);
    let guu = gu.differentiate(u);
    let m1 = [
        [-0.5 * &evv + &fuv - 0.5 * &guu, 0.5 * &eu, &fu - 0.5 * &ev],
        [&fv - 0.5 * &gu, e.clone(), f.clone()],
        [0.5 * &gv, f.clone(), g.clone()],
    ];
    let m2 = [
        [Expr::zero(), 0.5 * &ev, 0.5 * &gu],
        [0.5 * &ev, e.clone(), f.clone()],
        [0.5 * &gu, f.clone(), g.clone()],
    ];
    (det3(&m1) - det3(&m2)) / Expr::powi(m.det(), 2)
}

/// Scalar curvature `R = 2K`.
pub fn scalar_curvature(m: &Metric2D) -> Expr {
    2.0 * gauss_curvature(m)
}

/// Builds `g^2 dt^2 + dx^2` and `F = sum_k a_k g^(k-n) p1^(n-k) p2^k` in
/// coordinates `(t, x)`. Requires `a_(n-1) = g` and `a_n = 1`.
pub fn semi_geodesic_assembly(g: &Expr, a: &[Expr], n: usize) -> Result<(Metric2D, MomentumPoly)> {
    semi_geodesic_assembly_in(g, a, n, ["t", "x"])
}

pub fn semi_geodesic_assembly_in(
    g: &Expr,
    a: &[Expr],
    n: usize,
    coords: [&str; 2],
) -> Result<(Metric2D, MomentumPoly)> {
    if n == 0 {
        return Err(Error::Normalization("degree must be positive".into()));
    }
    if a.len() != n + 1 {
        return Err(Error::Normalization(format!(
            "expected {} coefficients, got {}",
            n + 1,
            a.len()
        )));
    }
    if !a[n].is_one() {
        return Err(Error::Normalization(format!("a_{n} must be 1, got {}", a[n])));
    }
    if a[n - 1] != *g {
        return Err(Error::Normalization(format!(
            "a_{} must equal g, got {} vs {}",
            n - 1,
            a[n - 1],
            g
        )));
    }
    let metric = Metric2D::new(Expr::powi(g.clone(), 2), Expr::zero(), Expr::one(), coords);
    let coeffs = a
        .iter()
        .enumerate()
        .map(|(k, ak)| ak * Expr::powi(g.clone(), k as i64 - n as i64))
        .collect();
    Ok((metric, MomentumPoly::new(coords, coeffs)?))
}
