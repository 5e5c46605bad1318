//! Quasi-linear systems `U_t + V(U) U_x = 0` for the integral coefficients,
//! their commuting flows, and diagonal (Riemann-invariant) systems.

use std::sync::OnceLock;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Assignment, Expr, Tape};

/// Default unknown names `a0 .. a{n-1}`.
pub fn a_names(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("a{k}")).collect()
}

/// A square matrix of expressions, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMatrix {
    n: usize,
    entries: Vec<Expr>,
}

impl ExprMatrix {
    pub fn zeros(n: usize) -> Self {
        ExprMatrix {
            n,
            entries: vec![Expr::zero(); n * n],
        }
    }

    pub fn from_rows(rows: Vec<Vec<Expr>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("matrix rows must all have length n".into()));
        }
        Ok(ExprMatrix {
            n,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &Expr {
        &self.entries[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: Expr) {
        self.entries[i * self.n + j] = e;
    }

    pub fn entries(&self) -> &[Expr] {
        &self.entries
    }

    pub fn evaluate<A: Assignment + ?Sized>(&self, at: &A) -> Result<DMatrix<f64>> {
        let vals = self
            .entries
            .iter()
            .map(|e| e.evaluate(at))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DMatrix::from_row_slice(self.n, self.n, &vals))
    }

    pub fn compile<S: AsRef<str>>(&self, vars: &[S]) -> Result<CompiledMatrix> {
        Ok(CompiledMatrix {
            n: self.n,
            tape: Tape::compile(&self.entries, vars)?,
        })
    }

    /// Entry-wise difference; `true` when every entry folds to zero.
    pub fn structurally_equal(&self, other: &ExprMatrix) -> bool {
        self.n == other.n
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a == b || (a - b).is_zero())
    }
}

/// An [`ExprMatrix`] compiled against a fixed variable order.
#[derive(Debug, Clone)]
pub struct CompiledMatrix {
    n: usize,
    tape: Tape,
}

impl CompiledMatrix {
    pub fn eval(&self, values: &[f64]) -> Result<DMatrix<f64>> {
        let v = self.tape.eval(values)?;
        Ok(DMatrix::from_row_slice(self.n, self.n, &v))
    }
}

/// The matrix `V` of the quasi-linear system for a degree-`n` integral.
#[derive(Debug, Clone)]
pub struct QuasiLinearSystem {
    pub n: usize,
    pub vars: Vec<String>,
    pub v: ExprMatrix,
}

pub fn build_v(n: usize) -> Result<QuasiLinearSystem> {
    build_v_with(n, &a_names(n))
}

/// Builds `V` in the given unknowns. Row `k` has `a_{n-1}` on the
/// subdiagonal and `(k+1) a_{k+1} - (n-k+1) a_{k-1}` in the last column,
/// with `a_{-1} = 0` and `a_n = 1`.
pub fn build_v_with<S: AsRef<str>>(n: usize, vars: &[S]) -> Result<QuasiLinearSystem> {
    if !(1..=5).contains(&n) {
        return Err(Error::UnsupportedSize {
            n,
            reason: "the quasi-linear system is built for 1 <= n <= 5",
        });
    }
    if vars.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} variable names, got {}",
            vars.len()
        )));
    }
    let a = |k: isize| -> Expr {
        if k < 0 {
            Expr::zero()
        } else if k as usize == n {
            Expr::one()
        } else {
            Expr::var(vars[k as usize].as_ref())
        }
    };
    let mut v = ExprMatrix::zeros(n);
    for k in 0..n {
        if k > 0 {
            v.set(k, k - 1, a(n as isize - 1));
        }
        let ki = k as isize;
        let entry = (k + 1) as f64 * a(ki + 1) - (n - k + 1) as f64 * a(ki - 1);
        v.set(k, n - 1, v.get(k, n - 1) + entry);
    }
    Ok(QuasiLinearSystem {
        n,
        vars: vars.iter().map(|s| s.as_ref().to_string()).collect(),
        v,
    })
}

/// A candidate commuting matrix `W` assembled from generator functions.
#[derive(Debug, Clone)]
pub struct SymmetryFlow {
    pub n: usize,
    pub generators: Vec<Expr>,
    pub w: ExprMatrix,
}

pub fn build_w(n: usize, generators: &[Expr]) -> Result<SymmetryFlow> {
    build_w_with(n, generators, &a_names(n))
}

/// `W` for `n = 3` from `(P, R, S)` or `n = 4` from `(P, R, S, T)`.
pub fn build_w_with<S: AsRef<str>>(n: usize, generators: &[Expr], vars: &[S]) -> Result<SymmetryFlow> {
    if vars.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} variable names, got {}",
            vars.len()
        )));
    }
    if !(3..=4).contains(&n) {
        return Err(Error::UnsupportedSize {
            n,
            reason: "commuting-flow ansatz is available for n = 3 and n = 4 only",
        });
    }
    if generators.len() != n {
        return Err(Error::Dimension(format!(
            "n = {n} needs {n} generators, got {}",
            generators.len()
        )));
    }
    let a: Vec<Expr> = vars.iter().map(|s| Expr::var(s.as_ref())).collect();
    let rows = if n == 3 {
        let (p, r, s) = (&generators[0], &generators[1], &generators[2]);
        let (a0, a1, a2) = (&a[0], &a[1], &a[2]);
        let c = 2.0 * a1 - 3.0;
        vec![
            vec![(3.0 * a0 - 2.0 * a2) * p + &c * r + s, a1 * p, a1 * r],
            vec![&c * p + a2 * r, &c * r + s, a1 * p + (2.0 * a2 - 3.0 * a0) * r],
            vec![a2 * p, a2 * r, s.clone()],
        ]
    } else {
        let (p, r, s, t) = (&generators[0], &generators[1], &generators[2], &generators[3]);
        let (a0, a1, a2, a3) = (&a[0], &a[1], &a[2], &a[3]);
        let b = a2 - 2.0;
        let c = 3.0 * (a1 - a3);
        let d = 2.0 * (a2 - 2.0 * a0);
        let w1 = Expr::sum([2.0 * (2.0 * a0 - a2) * p, &c * r, 2.0 * &b * s, t.clone()]);
        let w2 = Expr::sum([&c * p, 2.0 * &b * r, a3 * s]);
        let w3 = Expr::sum([&c * r, 2.0 * &b * s, t.clone()]);
        let w4 = Expr::sum([a1 * p, &d * r, 3.0 * (a3 - a1) * s]);
        vec![
            vec![w1, a1 * p, a1 * r, a1 * s],
            vec![w2, w3, a1 * p + &d * r, a1 * r + &d * s],
            vec![a3 * r + 2.0 * &b * p, a3 * s + 2.0 * &b * r, t + 2.0 * &b * s, w4],
            vec![a3 * p, a3 * r, a3 * s, t.clone()],
        ]
    };
    Ok(SymmetryFlow {
        n,
        generators: generators.to_vec(),
        w: ExprMatrix::from_rows(rows)?,
    })
}

/// Max-norm of `VW - WV`.
pub fn commutator_norm(v: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<f64> {
    if v.shape() != w.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", v.shape(), w.shape())));
    }
    Ok((v * w - w * v).amax())
}

/// Max-norm of `VW - WV` at a point.
pub fn commutator_residual<A: Assignment + ?Sized>(v: &ExprMatrix, w: &ExprMatrix, at: &A) -> Result<f64> {
    commutator_norm(&v.evaluate(at)?, &w.evaluate(at)?)
}

/// The first-order PDEs the generators must satisfy for `W` to commute with
/// `V` as a flow. Each entry is `lhs - rhs`.
pub fn symmetry_pde_system<S: AsRef<str>>(n: usize, generators: &[Expr], vars: &[S]) -> Result<Vec<Expr>> {
    Ok(symmetry_pde_terms(n, generators, vars)?
        .into_iter()
        .map(Expr::sum)
        .collect())
}

/// As [`symmetry_pde_system`], with each equation kept as the signed terms
/// whose sum is `lhs - rhs`.
pub fn symmetry_pde_terms<S: AsRef<str>>(n: usize, generators: &[Expr], vars: &[S]) -> Result<Vec<Vec<Expr>>> {
    if !(3..=4).contains(&n) {
        return Err(Error::UnsupportedSize {
            n,
            reason: "symmetry PDE systems are available for n = 3 and n = 4 only",
        });
    }
    if generators.len() != n || vars.len() != n {
        return Err(Error::Dimension(format!(
            "n = {n} needs {n} generators and {n} variables"
        )));
    }
    let a: Vec<Expr> = vars.iter().map(|s| Expr::var(s.as_ref())).collect();
    let d = |f: &Expr, i: usize| f.differentiate(vars[i].as_ref());
    let neg = |e: Expr| -1.0 * e;
    let eqs = if n == 3 {
        let (p, r, s) = (&generators[0], &generators[1], &generators[2]);
        let (a0, a1, a2) = (&a[0], &a[1], &a[2]);
        vec![
            vec![
                a1 * d(p, 0),
                neg((3.0 * a0 - 2.0 * a2) * d(r, 0)),
                neg((2.0 * a1 - 3.0) * d(r, 1)),
                neg(a2 * d(r, 2)),
            ],
            vec![d(p, 1), neg(d(r, 0))],
            vec![d(p, 2), neg(d(r, 1))],
            vec![d(s, 0), neg(a2 * d(r, 1)), 2.0 * p],
            vec![d(s, 1), neg(a2 * d(r, 2)), 2.0 * r],
            vec![
                d(s, 2),
                neg(a1 * d(r, 0)),
                neg((2.0 * a2 - 3.0 * a0) * d(r, 1)),
                neg((3.0 - 2.0 * a1) * d(r, 2)),
                neg(p.clone()),
            ],
        ]
    } else {
        let (p, r, s, t) = (&generators[0], &generators[1], &generators[2], &generators[3]);
        let (a0, a1, a2, a3) = (&a[0], &a[1], &a[2], &a[3]);
        let b = a2 - 2.0;
        let common = [
            a1 * d(r, 0),
            2.0 * (a2 - 2.0 * a0) * d(r, 1),
            3.0 * (a3 - a1) * d(r, 2),
            -2.0 * &b * d(r, 3),
            p.clone(),
        ];
        let minus_common = || common.iter().cloned().map(neg).collect::<Vec<_>>();
        let g0 = 2.0 * a1 * (2.0 - a2);
        let g1 = Expr::sum([-4.0 * a2 * a2, 8.0 * a0 * a2, a1 * a3, -16.0 * a0, 8.0 * a2]);
        let g2 = Expr::sum([-4.0 * a0 * a3, 6.0 * a1 * a2, -4.0 * a2 * a3, -12.0 * a1, 12.0 * a3]);
        let g3 = Expr::sum([4.0 * &b * &b, -3.0 * a1 * a3, 3.0 * a3 * a3]);
        let with = |head: Expr, tail: Vec<Expr>| std::iter::once(head).chain(tail).collect::<Vec<_>>();
        vec![
            vec![
                a1 * d(p, 0),
                neg(2.0 * (2.0 * a0 - a2) * d(r, 0)),
                neg(3.0 * (a1 - a3) * d(r, 1)),
                neg(2.0 * &b * d(r, 2)),
                neg(a3 * d(r, 3)),
                neg(r.clone()),
            ],
            vec![d(p, 1), neg(d(r, 0))],
            vec![d(p, 2), neg(d(r, 1))],
            vec![d(p, 3), neg(d(r, 2))],
            vec![d(s, 0), neg(d(r, 1))],
            vec![d(s, 1), neg(d(r, 2))],
            vec![d(s, 2), neg(d(r, 3))],
            with(a3 * d(s, 3), minus_common()),
            vec![d(t, 0), neg(a3 * d(r, 2)), 2.0 * p],
            vec![d(t, 1), neg(a3 * d(r, 3)), 2.0 * r],
            with(d(t, 2), minus_common().into_iter().chain([2.0 * s]).collect()),
            vec![
                a3 * d(t, 3),
                neg(g0 * d(r, 0)),
                neg(g1 * d(r, 1)),
                neg(g2 * d(r, 2)),
                neg(g3 * d(r, 3)),
                neg(2.0 * (2.0 - a2) * p),
                neg(2.0 * a3 * r),
            ],
        ]
    };
    Ok(eqs)
}

/// Per-equation maxima of a residual sweep.
///
/// The relative residual of an equation is `|sum of terms| / (1 + sum of
/// |terms|)`.
#[derive(Debug, Clone, Serialize)]
pub struct PdeResidualReport {
    pub per_equation_max: Vec<f64>,
    pub max: f64,
    pub per_equation_max_relative: Vec<f64>,
    pub max_relative: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Evaluates every equation of [`symmetry_pde_system`] at the given
/// a-points. Points where evaluation fails (e.g. a log of a non-positive
/// argument, or division by a vanishing `a_{n-1}`) are skipped and counted.
pub fn symmetry_pde_residual(n: usize, generators: &[Expr], points: &[Vec<f64>]) -> Result<PdeResidualReport> {
    let vars = a_names(n);
    let eqs = symmetry_pde_terms(n, generators, &vars)?;
    let sizes: Vec<usize> = eqs.iter().map(Vec::len).collect();
    let flat: Vec<Expr> = eqs.into_iter().flatten().collect();
    let tape = Tape::compile(&flat, &vars)?;
    let mut per = vec![0.0f64; sizes.len()];
    let mut per_rel = vec![0.0f64; sizes.len()];
    let (mut evaluated, mut skipped) = (0, 0);
    let mut scratch = Vec::new();
    let mut out = vec![0.0; flat.len()];
    for pt in points {
        if pt.len() != n {
            return Err(Error::Dimension(format!("a-point of length {} for n = {n}", pt.len())));
        }
        if pt[n - 1] == 0.0 || tape.eval_into(pt, &mut scratch, &mut out).is_err() {
            skipped += 1;
            continue;
        }
        let mut offset = 0;
        for (k, &len) in sizes.iter().enumerate() {
            let terms = &out[offset..offset + len];
            offset += len;
            let abs = terms.iter().sum::<f64>().abs();
            let scale = 1.0 + terms.iter().map(|v| v.abs()).sum::<f64>();
            per[k] = per[k].max(abs);
            per_rel[k] = per_rel[k].max(abs / scale);
        }
        evaluated += 1;
    }
    Ok(PdeResidualReport {
        max: per.iter().copied().fold(0.0, f64::max),
        max_relative: per_rel.iter().copied().fold(0.0, f64::max),
        per_equation_max: per,
        per_equation_max_relative: per_rel,
        evaluated,
        skipped,
    })
}

/// Eigenvalues of a numeric matrix with a hyperbolicity verdict.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub eigenvalues: Vec<(f64, f64)>,
    pub hyperbolic: bool,
}

pub const HYPERBOLICITY_TOL: f64 = 1e-10;

pub fn spectrum(m: &DMatrix<f64>) -> Spectrum {
    let mut ev: Vec<Complex<f64>> = m.complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let real = ev.iter().all(|z| z.im.abs() <= HYPERBOLICITY_TOL);
    let distinct = ev.windows(2).all(|w| (w[1] - w[0]).norm() > HYPERBOLICITY_TOL);
    Spectrum {
        eigenvalues: ev.iter().map(|z| (z.re, z.im)).collect(),
        hyperbolic: real && distinct,
    }
}

/// Eigenvalues of `V` at the a-point, sorted by real part.
pub fn eigenvalues_v(sys: &QuasiLinearSystem, point: &[f64]) -> Result<Spectrum> {
    if point.len() != sys.n {
        return Err(Error::Dimension(format!(
            "a-point of length {} for n = {}",
            point.len(),
            sys.n
        )));
    }
    let at: Vec<(&str, f64)> = sys.vars.iter().map(String::as_str).zip(point.iter().copied()).collect();
    Ok(spectrum(&sys.v.evaluate(at.as_slice())?))
}

/// For each simple real eigenvalue of `v`, takes its eigenvector `e` and
/// measures how far `w e` is from being parallel to `e`. Returns the largest
/// such defect, or `None` when `v` has no simple real eigenvalue.
pub fn eigenvector_sharing_defect(v: &DMatrix<f64>, w: &DMatrix<f64>) -> Option<f64> {
    let n = v.nrows();
    let spec = spectrum(v);
    let mut worst: Option<f64> = None;
    for (i, &(re, im)) in spec.eigenvalues.iter().enumerate() {
        if im.abs() > HYPERBOLICITY_TOL {
            continue;
        }
        let simple = spec
            .eigenvalues
            .iter()
            .enumerate()
            .all(|(j, &(r2, i2))| j == i || (r2 - re).hypot(i2 - im) > 1e-6);
        if !simple {
            continue;
        }
        let shifted = v - DMatrix::identity(n, n) * re;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.as_ref()?;
        let k = svd.singular_values.argmin().0;
        let e: DVector<f64> = vt.row(k).transpose();
        let we = w * &e;
        let mu = e.dot(&we);
        let defect = (&we - &e * mu).norm() / (1.0 + w.amax());
        worst = Some(worst.map_or(defect, |d: f64| d.max(defect)));
    }
    worst
}

/// Index triples of the semi-Hamiltonian conditions and their compiled tape.
type Conditions = (Vec<[usize; 3]>, Tape);

/// A diagonal system `r^i_t + v_i(r) r^i_x = 0`.
#[derive(Debug, Clone)]
pub struct DiagonalSystem {
    pub vars: Vec<String>,
    pub velocities: Vec<Expr>,
    conditions: OnceLock<Result<Conditions, String>>,
}

impl DiagonalSystem {
    pub fn new<S: AsRef<str>>(vars: &[S], velocities: Vec<Expr>) -> Result<Self> {
        if vars.len() != velocities.len() {
            return Err(Error::Dimension(format!(
                "{} variables but {} velocities",
                vars.len(),
                velocities.len()
            )));
        }
        Ok(DiagonalSystem {
            vars: vars.iter().map(|s| s.as_ref().to_string()).collect(),
            velocities,
            conditions: OnceLock::new(),
        })
    }

    /// `v_1 = 2 r2`, `v_2 = 2 r1`.
    pub fn n2() -> Self {
        DiagonalSystem::new(&["r1", "r2"], vec![2.0 * Expr::var("r2"), 2.0 * Expr::var("r1")])
            .expect("matching lengths")
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    /// Structural check that `d v_i / d r^i` vanishes for every `i`.
    pub fn is_weakly_nonlinear(&self) -> bool {
        self.velocities
            .iter()
            .zip(&self.vars)
            .all(|(v, r)| v.differentiate(r).is_zero())
    }

    /// Sampled version of [`Self::is_weakly_nonlinear`]: `|d v_i / d r^i|`
    /// stays within `tol` at every point.
    pub fn weakly_nonlinear_at(&self, points: &[Vec<f64>], tol: f64) -> Result<bool> {
        let derivs: Vec<Expr> = self
            .velocities
            .iter()
            .zip(&self.vars)
            .map(|(v, r)| v.differentiate(r))
            .collect();
        let tape = Tape::compile(&derivs, &self.vars)?;
        for p in points {
            if tape.eval(p)?.iter().any(|d| d.abs() > tol) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    fn conditions(&self) -> Result<&Conditions> {
        self.conditions
            .get_or_init(|| {
                let n = self.dim();
                let v = &self.velocities;
                let mut triples = Vec::new();
                let mut exprs = Vec::new();
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            if i == j || j == k || i == k || i > j {
                                continue;
                            }
                            let gamma = |a: usize| v[k].differentiate(&self.vars[a]) / (&v[a] - &v[k]);
                            let lhs = gamma(j).differentiate(&self.vars[i]);
                            let rhs = gamma(i).differentiate(&self.vars[j]);
                            triples.push([i, j, k]);
                            exprs.push(lhs - rhs);
                        }
                    }
                }
                Tape::compile(&exprs, &self.vars)
                    .map(|t| (triples, t))
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(|e| Error::InvalidArgument(e.clone()))
    }

    /// Largest violation of the semi-Hamiltonian condition over index
    /// triples at `point`. Systems with fewer than three components are
    /// semi-Hamiltonian whenever hyperbolic and report 0.
    pub fn semi_hamiltonian_residual(&self, point: &[f64]) -> Result<f64> {
        let n = self.dim();
        if point.len() != n {
            return Err(Error::Dimension(format!("point of length {} for n = {n}", point.len())));
        }
        let at: Vec<(&str, f64)> = self
            .vars
            .iter()
            .map(String::as_str)
            .zip(point.iter().copied())
            .collect();
        let vals = self
            .velocities
            .iter()
            .map(|v| v.evaluate(at.as_slice()))
            .collect::<Result<Vec<_>, _>>()?;
        for j in 0..n {
            for k in j + 1..n {
                if vals[j] == vals[k] {
                    return Err(Error::CoincidingVelocities(j + 1, k + 1));
                }
            }
        }
        if n < 3 {
            return Ok(0.0);
        }
        let (_, tape) = self.conditions()?;
        Ok(tape.eval(point)?.iter().fold(0.0, |m, r| m.max(r.abs())))
    }
}

pub fn semi_hamiltonian_residual(d: &DiagonalSystem, point: &[f64]) -> Result<f64> {
    d.semi_hamiltonian_residual(point)
}

/// Riemann invariants of the `n = 2` system: `a0 = 1 - r1 - r2`,
/// `a1^2 = -4 r1 r2`, with `r1 <= 0 <= r2`.
pub fn riemann_invariants_n2(a0: f64, a1: f64) -> Result<(f64, f64)> {
    if a1 == 0.0 {
        return Err(Error::InvalidArgument("a1 = g must be nonzero".into()));
    }
    let s = 1.0 - a0;
    let root = s.hypot(a1);
    let q = -a1 * a1 / 4.0;
    Ok(if s >= 0.0 {
        let r2 = (s + root) / 2.0;
        (q / r2, r2)
    } else {
        let r1 = (s - root) / 2.0;
        (r1, q / r1)
    })
}

/// Inverse of [`riemann_invariants_n2`] on the branch `g > 0`.
pub fn n2_fields(r1: f64, r2: f64) -> Result<(f64, f64)> {
    let g2 = -4.0 * r1 * r2;
    if g2 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need r1 r2 < 0, got r1 = {r1}, r2 = {r2}"
        )));
    }
    Ok((1.0 - r1 - r2, g2.sqrt()))
}
