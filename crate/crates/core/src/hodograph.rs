//! Implicit hodograph relations: Newton solves, grid continuation, and the
//! finite-difference checks that the solved fields obey the quasi-linear
//! system.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, EvalError, Result};
use crate::expr::{Expr, Tape};
use crate::flows::{a_names, QuasiLinearSystem};
use crate::geometry::{hamiltonian, poisson_bracket, semi_geodesic_assembly};

/// `m` equations in `m` unknowns, parameterized by `t` and `x`.
#[derive(Debug, Clone)]
pub struct ImplicitSystem {
    pub equations: Vec<Expr>,
    pub unknowns: Vec<String>,
    pub constants: BTreeMap<String, f64>,
    tape: Tape,
}

impl ImplicitSystem {
    pub fn new(equations: Vec<Expr>, unknowns: Vec<String>, constants: BTreeMap<String, f64>) -> Result<Self> {
        let m = unknowns.len();
        if equations.len() != m {
            return Err(Error::Dimension(format!(
                "{} equations for {m} unknowns",
                equations.len()
            )));
        }
        let bound: Vec<Expr> = equations.iter().map(|e| e.bind(&constants)).collect();
        let mut outputs = bound.clone();
        for e in &bound {
            for u in &unknowns {
                outputs.push(e.differentiate(u));
            }
        }
        outputs.extend(bound.iter().map(|e| e.differentiate("t")));
        outputs.extend(bound.iter().map(|e| e.differentiate("x")));
        let mut vars = unknowns.clone();
        vars.push("t".into());
        vars.push("x".into());
        let tape = Tape::compile(&outputs, &vars).map_err(|e| match e {
            EvalError::Unassigned(name) => Error::Config(format!("constant `{name}` has no value")),
            other => other.into(),
        })?;
        Ok(ImplicitSystem {
            equations,
            unknowns,
            constants,
            tape,
        })
    }

    /// `P = 0`, `R = t`, `S = (3 - 2 a1) t - x`.
    pub fn from_generators_n3(generators: &[Expr], constants: BTreeMap<String, f64>) -> Result<Self> {
        if generators.len() != 3 {
            return Err(Error::Dimension("n = 3 needs (P, R, S)".into()));
        }
        let (t, x, a1) = (Expr::var("t"), Expr::var("x"), Expr::var("a1"));
        let eqs = vec![
            generators[0].clone(),
            &generators[1] - &t,
            &generators[2] - (3.0 - 2.0 * a1) * &t + &x,
        ];
        ImplicitSystem::new(eqs, a_names(3), constants)
    }

    /// `P = 0`, `R = 0`, `S = t`, `T = (4 - 2 a2) t - x`.
    pub fn from_generators_n4(generators: &[Expr], constants: BTreeMap<String, f64>) -> Result<Self> {
        if generators.len() != 4 {
            return Err(Error::Dimension("n = 4 needs (P, R, S, T)".into()));
        }
        let (t, x, a2) = (Expr::var("t"), Expr::var("x"), Expr::var("a2"));
        let eqs = vec![
            generators[0].clone(),
            generators[1].clone(),
            &generators[2] - &t,
            &generators[3] - (4.0 - 2.0 * a2) * &t + &x,
        ];
        ImplicitSystem::new(eqs, a_names(4), constants)
    }

    pub fn dim(&self) -> usize {
        self.unknowns.len()
    }

    fn eval_all(&self, t: f64, x: f64, a: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut vals = a.to_vec();
        vals.push(t);
        vals.push(x);
        self.tape.eval(&vals)
    }

    pub fn residual(&self, t: f64, x: f64, a: &[f64]) -> Result<Vec<f64>> {
        let m = self.dim();
        Ok(self.eval_all(t, x, a)?[..m].to_vec())
    }

    fn residual_norm(&self, t: f64, x: f64, a: &[f64]) -> Result<f64, EvalError> {
        let m = self.dim();
        Ok(self.eval_all(t, x, a)?[..m].iter().fold(0.0, |s, v| s.max(v.abs())))
    }

    /// Jacobian with respect to the unknowns.
    pub fn jacobian(&self, t: f64, x: f64, a: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.dim();
        let v = self.eval_all(t, x, a)?;
        Ok(DMatrix::from_row_slice(m, m, &v[m..m + m * m]))
    }

    /// Exact `(a_t, a_x)` at a solution, from `J a_t = -F_t`, `J a_x = -F_x`.
    pub fn implicit_derivatives(&self, t: f64, x: f64, a: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m = self.dim();
        let v = self.eval_all(t, x, a)?;
        let j = DMatrix::from_row_slice(m, m, &v[m..m + m * m]);
        let lu = j.lu();
        let ft = DVector::from_column_slice(&v[m + m * m..2 * m + m * m]);
        let fx = DVector::from_column_slice(&v[2 * m + m * m..]);
        let at = lu.solve(&(-ft)).ok_or(Error::SingularJacobian { iteration: 0 })?;
        let ax = lu.solve(&(-fx)).ok_or(Error::SingularJacobian { iteration: 0 })?;
        Ok((at.iter().copied().collect(), ax.iter().copied().collect()))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-11,
            max_iterations: 50,
            max_halvings: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonSolution {
    pub a: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped Newton iteration with the exact Jacobian. A step is halved while
/// it leaves the domain or fails to reduce the max-norm residual.
pub fn newton_solve(
    sys: &ImplicitSystem,
    t: f64,
    x: f64,
    seed: &[f64],
    opts: &NewtonOptions,
) -> Result<NewtonSolution> {
    let m = sys.dim();
    if seed.len() != m {
        return Err(Error::Dimension(format!(
            "seed of length {} for {m} unknowns",
            seed.len()
        )));
    }
    let mut a = seed.to_vec();
    let mut vals = sys.eval_all(t, x, &a).map_err(Error::DomainViolation)?;
    for iteration in 0..=opts.max_iterations {
        let f = DVector::from_column_slice(&vals[..m]);
        let norm = f.amax();
        if !norm.is_finite() {
            return Err(Error::NonConvergence {
                iterations: iteration,
                residual: norm,
            });
        }
        if norm <= opts.tol {
            return Ok(NewtonSolution {
                a,
                iterations: iteration,
                residual: norm,
            });
        }
        if iteration == opts.max_iterations {
            break;
        }
        let j = DMatrix::from_row_slice(m, m, &vals[m..m + m * m]);
        let step = j
            .lu()
            .solve(&(-f))
            .filter(|s| s.iter().all(|v| v.is_finite()))
            .ok_or(Error::SingularJacobian { iteration })?;
        let mut lambda = 1.0;
        let mut last_domain: Option<EvalError> = None;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = a.iter().zip(step.iter()).map(|(ai, si)| ai + lambda * si).collect();
            match sys.eval_all(t, x, &trial) {
                Ok(v) => {
                    let tn = v[..m].iter().fold(0.0f64, |s, r| s.max(r.abs()));
                    if tn < norm {
                        a = trial;
                        vals = v;
                        accepted = true;
                        break;
                    }
                }
                Err(e) => last_domain = Some(e),
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(match last_domain {
                Some(e) => Error::DomainViolation(e),
                None => Error::NonConvergence {
                    iterations: iteration,
                    residual: norm,
                },
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual: sys.residual_norm(t, x, &a).unwrap_or(f64::NAN),
    })
}

/// A rectangular `(t, x)` grid with `nt x nx` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub t0: f64,
    pub t1: f64,
    pub x0: f64,
    pub x1: f64,
    pub nt: usize,
    pub nx: usize,
}

impl GridSpec {
    pub fn new(t0: f64, t1: f64, x0: f64, x1: f64, nt: usize, nx: usize) -> Result<Self> {
        let g = GridSpec { t0, t1, x0, x1, nt, nx };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nt == 0 || self.nx == 0 {
            return Err(Error::InvalidArgument("grid needs at least one node per axis".into()));
        }
        if ![self.t0, self.t1, self.x0, self.x1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("grid bounds must be finite".into()));
        }
        if (self.nt > 1 && self.t1 <= self.t0) || (self.nx > 1 && self.x1 <= self.x0) {
            return Err(Error::InvalidArgument("grid bounds must be increasing".into()));
        }
        Ok(())
    }

    pub fn single(t: f64, x: f64) -> Self {
        GridSpec {
            t0: t,
            t1: t,
            x0: x,
            x1: x,
            nt: 1,
            nx: 1,
        }
    }

    pub fn ht(&self) -> f64 {
        if self.nt > 1 {
            (self.t1 - self.t0) / (self.nt - 1) as f64
        } else {
            0.0
        }
    }

    pub fn hx(&self) -> f64 {
        if self.nx > 1 {
            (self.x1 - self.x0) / (self.nx - 1) as f64
        } else {
            0.0
        }
    }

    pub fn t(&self, i: usize) -> f64 {
        if i + 1 == self.nt && self.nt > 1 {
            self.t1
        } else {
            self.t0 + i as f64 * self.ht()
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.nx && self.nx > 1 {
            self.x1
        } else {
            self.x0 + j as f64 * self.hx()
        }
    }

    pub fn len(&self) -> usize {
        self.nt * self.nx
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.nx + j
    }

    /// Node closest to `(t, x)`.
    pub fn nearest(&self, t: f64, x: f64) -> (usize, usize) {
        let snap = |v: f64, lo: f64, h: f64, n: usize| {
            if n == 1 || h == 0.0 {
                0
            } else {
                (((v - lo) / h).round().max(0.0) as usize).min(n - 1)
            }
        };
        (
            snap(t, self.t0, self.ht(), self.nt),
            snap(x, self.x0, self.hx(), self.nx),
        )
    }

    /// The grid with each step divided by `2^level`, same bounds.
    pub fn refined(&self, level: u32) -> Self {
        let f = 1usize << level;
        GridSpec {
            nt: (self.nt - 1) * f + 1,
            nx: (self.nx - 1) * f + 1,
            ..*self
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    /// `t0,t1,x0,x1,nt,nx`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(Error::Config(format!("grid `{s}` must be t0,t1,x0,x1,nt,nx")));
        }
        let f = |i: usize| {
            parts[i]
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad grid bound `{}`", parts[i])))
        };
        let u = |i: usize| {
            parts[i]
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad grid count `{}`", parts[i])))
        };
        GridSpec::new(f(0)?, f(1)?, f(2)?, f(3)?, u(4)?, u(5)?).map_err(|e| Error::Config(e.to_string()))
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{}",
            self.t0, self.t1, self.x0, self.x1, self.nt, self.nx
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Converged,
    Failed,
    BranchJump,
    Unreached,
}

/// Starting node and initial guess for continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub t: f64,
    pub x: f64,
    pub a: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSolution {
    pub grid: GridSpec,
    pub unknowns: Vec<String>,
    /// Node-major values, `values[grid.index(i, j)]`.
    pub values: Vec<Vec<f64>>,
    pub status: Vec<NodeStatus>,
    pub residuals: Vec<f64>,
}

impl GridSolution {
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        &self.values[self.grid.index(i, j)]
    }

    pub fn is_converged(&self, i: usize, j: usize) -> bool {
        self.status[self.grid.index(i, j)] == NodeStatus::Converged
    }

    pub fn converged_count(&self) -> usize {
        self.status.iter().filter(|s| **s == NodeStatus::Converged).count()
    }

    pub fn all_converged(&self) -> bool {
        self.converged_count() == self.grid.len()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals
            .iter()
            .zip(&self.status)
            .filter(|(_, s)| **s == NodeStatus::Converged)
            .fold(0.0, |m, (r, _)| m.max(*r))
    }

    /// Column `k` of the solution as a `nt x nx` row-major array.
    pub fn field(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }
}

#[derive(Debug, Clone)]
struct NodeResult {
    a: Vec<f64>,
    status: NodeStatus,
    residual: f64,
}

/// Solves on every node by continuation from the node nearest the anchor.
/// Nodes are processed in wavefront layers of increasing Manhattan distance;
/// each node is seeded from a converged neighbour in the previous layer
/// (linearly extrapolated when the next node further back is available).
/// A change larger than ten grid steps relative to the seeding neighbour is
/// flagged as a branch jump.
pub fn solve_on_grid(
    sys: &ImplicitSystem,
    grid: &GridSpec,
    anchor: &Anchor,
    opts: &NewtonOptions,
) -> Result<GridSolution> {
    grid.validate()?;
    let m = sys.dim();
    let (si, sj) = grid.nearest(anchor.t, anchor.x);
    let first = newton_solve(sys, grid.t(si), grid.x(sj), &anchor.a, opts)?;
    let mut nodes: Vec<NodeResult> = vec![
        NodeResult {
            a: vec![f64::NAN; m],
            status: NodeStatus::Unreached,
            residual: f64::NAN,
        };
        grid.len()
    ];
    nodes[grid.index(si, sj)] = NodeResult {
        a: first.a,
        status: NodeStatus::Converged,
        residual: first.residual,
    };
    let max_d = si.max(grid.nt - 1 - si) + sj.max(grid.nx - 1 - sj);
    for d in 1..=max_d {
        let layer: Vec<(usize, usize)> = (0..grid.nt)
            .flat_map(|i| (0..grid.nx).map(move |j| (i, j)))
            .filter(|&(i, j)| i.abs_diff(si) + j.abs_diff(sj) == d)
            .collect();
        let results: Vec<((usize, usize), NodeResult)> = layer
            .par_iter()
            .map(|&(i, j)| ((i, j), solve_node(sys, grid, &nodes, (si, sj), (i, j), opts)))
            .collect();
        for ((i, j), r) in results {
            nodes[grid.index(i, j)] = r;
        }
    }
    let (values, status, residuals) =
        nodes
            .into_iter()
            .fold((Vec::new(), Vec::new(), Vec::new()), |(mut v, mut s, mut r), n| {
                v.push(n.a);
                s.push(n.status);
                r.push(n.residual);
                (v, s, r)
            });
    Ok(GridSolution {
        grid: *grid,
        unknowns: sys.unknowns.clone(),
        values,
        status,
        residuals,
    })
}

fn solve_node(
    sys: &ImplicitSystem,
    grid: &GridSpec,
    nodes: &[NodeResult],
    start: (usize, usize),
    (i, j): (usize, usize),
    opts: &NewtonOptions,
) -> NodeResult {
    let m = sys.dim();
    let ok = |i: usize, j: usize| nodes[grid.index(i, j)].status == NodeStatus::Converged;
    let step_toward = |v: usize, s: usize| -> Option<usize> {
        match v.cmp(&s) {
            std::cmp::Ordering::Greater => Some(v - 1),
            std::cmp::Ordering::Less => Some(v + 1),
            std::cmp::Ordering::Equal => None,
        }
    };
    // predecessors: one step closer to the start along t or along x
    let mut candidates = Vec::new();
    if let Some(pj) = step_toward(j, start.1) {
        candidates.push(((i, pj), step_toward(pj, start.1).map(|qj| (i, qj)), grid.hx()));
    }
    if let Some(pi) = step_toward(i, start.0) {
        candidates.push(((pi, j), step_toward(pi, start.0).map(|qi| (qi, j)), grid.ht()));
    }
    let Some(&(prev, back, h)) = candidates.iter().find(|(p, _, _)| ok(p.0, p.1)) else {
        return NodeResult {
            a: vec![f64::NAN; m],
            status: NodeStatus::Unreached,
            residual: f64::NAN,
        };
    };
    let pa = &nodes[grid.index(prev.0, prev.1)].a;
    let seed: Vec<f64> = match back.filter(|b| ok(b.0, b.1)) {
        Some(b) => {
            let ba = &nodes[grid.index(b.0, b.1)].a;
            pa.iter().zip(ba).map(|(p, q)| 2.0 * p - q).collect()
        }
        None => pa.clone(),
    };
    let (t, x) = (grid.t(i), grid.x(j));
    let solved = newton_solve(sys, t, x, &seed, opts).or_else(|_| newton_solve(sys, t, x, pa, opts));
    match solved {
        Ok(s) => {
            let jump = s.a.iter().zip(pa).fold(0.0f64, |mx, (u, v)| mx.max((u - v).abs()));
            let status = if jump > 10.0 * h {
                NodeStatus::BranchJump
            } else {
                NodeStatus::Converged
            };
            NodeResult {
                a: s.a,
                status,
                residual: s.residual,
            }
        }
        Err(_) => NodeResult {
            a: vec![f64::NAN; m],
            status: NodeStatus::Failed,
            residual: f64::NAN,
        },
    }
}

/// Finite-difference residual of `U_t + V(U) U_x = 0` on the grid interior.
#[derive(Debug, Clone, Serialize)]
pub struct GridResidual {
    pub max: f64,
    pub mean: f64,
    pub nodes: usize,
    /// Per interior node `(i, j, residual)`.
    #[serde(skip)]
    pub per_node: Vec<(usize, usize, f64)>,
}

/// Central differences in `t` and `x` on interior nodes. Border nodes are
/// excluded. Fails if any interior node or its stencil is unconverged.
pub fn pde_residual_on_grid(g: &GridSolution, sys: &QuasiLinearSystem) -> Result<GridResidual> {
    pde_residual_at(g, sys, 1)
}

fn pde_residual_at(g: &GridSolution, sys: &QuasiLinearSystem, stride: usize) -> Result<GridResidual> {
    let grid = &g.grid;
    if sys.n != g.unknowns.len() {
        return Err(Error::Dimension(format!(
            "system of size {} for {} fields",
            sys.n,
            g.unknowns.len()
        )));
    }
    if grid.nt < 2 * stride + 1 || grid.nx < 2 * stride + 1 {
        return Err(Error::InvalidArgument("grid has no interior nodes".into()));
    }
    let interior: Vec<(usize, usize)> = (stride..grid.nt - stride)
        .step_by(stride)
        .flat_map(|i| (stride..grid.nx - stride).step_by(stride).map(move |j| (i, j)))
        .collect();
    let bad = interior
        .iter()
        .filter(|&&(i, j)| {
            !(g.is_converged(i, j)
                && g.is_converged(i - 1, j)
                && g.is_converged(i + 1, j)
                && g.is_converged(i, j - 1)
                && g.is_converged(i, j + 1))
        })
        .count();
    if bad > 0 {
        return Err(Error::Unconverged(bad));
    }
    let vmat = sys.v.compile(&sys.vars)?;
    let (ht, hx) = (grid.ht(), grid.hx());
    let per_node = interior
        .par_iter()
        .map(|&(i, j)| {
            let u = DVector::from_column_slice(g.get(i, j));
            let ut = (DVector::from_column_slice(g.get(i + 1, j)) - DVector::from_column_slice(g.get(i - 1, j)))
                / (2.0 * ht);
            let ux = (DVector::from_column_slice(g.get(i, j + 1)) - DVector::from_column_slice(g.get(i, j - 1)))
                / (2.0 * hx);
            let v = vmat.eval(u.as_slice())?;
            Ok((i, j, (ut + v * ux).amax()))
        })
        .collect::<Result<Vec<_>>>()?;
    let max = per_node.iter().fold(0.0f64, |m, r| m.max(r.2));
    let mean = per_node.iter().map(|r| r.2).sum::<f64>() / per_node.len() as f64;
    Ok(GridResidual {
        max,
        mean,
        nodes: per_node.len(),
        per_node,
    })
}

/// Residuals at successive refinements, measured at the interior nodes of
/// the coarsest grid.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceStudy {
    pub steps: Vec<f64>,
    pub residuals: Vec<f64>,
    pub orders: Vec<f64>,
}

impl ConvergenceStudy {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn convergence_study(
    sys: &ImplicitSystem,
    ql: &QuasiLinearSystem,
    grid: &GridSpec,
    anchor: &Anchor,
    levels: u32,
    opts: &NewtonOptions,
) -> Result<ConvergenceStudy> {
    let mut steps = Vec::new();
    let mut residuals = Vec::new();
    for level in 0..levels {
        let fine = grid.refined(level);
        let sol = solve_on_grid(sys, &fine, anchor, opts)?;
        let r = pde_residual_at(&sol, ql, 1 << level)?;
        steps.push(fine.ht().max(fine.hx()));
        residuals.push(r.max);
    }
    let orders = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(ConvergenceStudy {
        steps,
        residuals,
        orders,
    })
}

/// Relative bracket residual of `F` assembled from the fields at a node,
/// given the values and first derivatives of `a_0 .. a_{n-1}` there.
pub fn bracket_from_jet(a: &[f64], at: &[f64], ax: &[f64]) -> Result<f64> {
    let n = a.len();
    let (tv, xv) = (Expr::var("t"), Expr::var("x"));
    let mut jet: Vec<Expr> = (0..n).map(|k| a[k] + at[k] * &tv + ax[k] * &xv).collect();
    jet.push(Expr::one());
    let g = jet[n - 1].clone();
    let (metric, f) = semi_geodesic_assembly(&g, &jet, n)?;
    let h = hamiltonian(&metric)?;
    let b = poisson_bracket(&f, &h)?;
    let bv = b.coefficient_values(0.0, 0.0)?;
    let scale = 1.0
        + f.coefficient_values(0.0, 0.0)?.iter().map(|v| v.abs()).sum::<f64>()
        + h.coefficient_values(0.0, 0.0)?.iter().map(|v| v.abs()).sum::<f64>();
    Ok(bv.iter().fold(0.0f64, |m, v| m.max(v.abs())) / scale)
}

/// Bracket residual at interior nodes, with `a_t`, `a_x` from fourth-order
/// central differences of the grid (nodes within two of the border are
/// skipped).
pub fn bracket_closure_on_grid(g: &GridSolution) -> Result<f64> {
    let grid = &g.grid;
    if grid.nt < 5 || grid.nx < 5 {
        return Err(Error::InvalidArgument(
            "fourth-order stencil needs at least 5 nodes per axis".into(),
        ));
    }
    let (ht, hx) = (grid.ht(), grid.hx());
    let interior: Vec<(usize, usize)> = (2..grid.nt - 2)
        .flat_map(|i| (2..grid.nx - 2).map(move |j| (i, j)))
        .collect();
    let bad = interior
        .iter()
        .filter(|&&(i, j)| {
            (-2i64..=2)
                .any(|d| !g.is_converged((i as i64 + d) as usize, j) || !g.is_converged(i, (j as i64 + d) as usize))
        })
        .count();
    if bad > 0 {
        return Err(Error::Unconverged(bad));
    }
    let d4 = |m2: &[f64], m1: &[f64], p1: &[f64], p2: &[f64], h: f64| -> Vec<f64> {
        (0..m2.len())
            .map(|k| (m2[k] - 8.0 * m1[k] + 8.0 * p1[k] - p2[k]) / (12.0 * h))
            .collect()
    };
    interior
        .par_iter()
        .map(|&(i, j)| {
            let at = d4(g.get(i - 2, j), g.get(i - 1, j), g.get(i + 1, j), g.get(i + 2, j), ht);
            let ax = d4(g.get(i, j - 2), g.get(i, j - 1), g.get(i, j + 1), g.get(i, j + 2), hx);
            bracket_from_jet(g.get(i, j), &at, &ax)
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// One point of the implicit general solution for `n = 2`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct N2Sample {
    pub t: f64,
    pub x: f64,
    pub a0: f64,
    pub g: f64,
    /// `det d(t, x) / d(r1, r2)`; zero means the map is not locally invertible.
    pub jacobian: f64,
    pub degenerate: bool,
}

/// Evaluates a function of one variable `s` and its first three
/// derivatives.
fn derivs3(f: &Expr, s: f64) -> Result<[f64; 4]> {
    let d1 = f.differentiate("s");
    let d2 = d1.differentiate("s");
    let d3 = d2.differentiate("s");
    let tape = Tape::compile(&[f.clone(), d1, d2, d3], &["s"])?;
    let v = tape.eval(&[s])?;
    Ok([v[0], v[1], v[2], v[3]])
}

fn check_univariate(f: &Expr) -> Result<()> {
    match f.variables().into_iter().find(|v| v != "s") {
        Some(v) => Err(Error::InvalidArgument(format!(
            "expected a function of `s` only, found `{v}`"
        ))),
        None => Ok(()),
    }
}

/// `t = -(u''(r1) + v''(r2))/2`, `x = u'(r1) + v'(r2) - r1 u''(r1) - r2 v''(r2)`,
/// `a0 = 1 - r1 - r2`, `g = sqrt(-4 r1 r2)`. `u`, `v` are functions of `s`.
pub fn n2_general_solution_sample(u: &Expr, v: &Expr, r1: f64, r2: f64) -> Result<N2Sample> {
    check_univariate(u)?;
    check_univariate(v)?;
    if r1 * r2 >= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "need r1 r2 < 0, got r1 = {r1}, r2 = {r2}"
        )));
    }
    let [_, u1, u2, u3] = derivs3(u, r1)?;
    let [_, v1, v2, v3] = derivs3(v, r2)?;
    let t = -0.5 * (u2 + v2);
    let x = u1 + v1 - r1 * u2 - r2 * v2;
    let jacobian = 0.5 * u3 * v3 * (r2 - r1);
    let scale = (1.0 + u3.abs()) * (1.0 + v3.abs()) * (1.0 + r1.abs() + r2.abs());
    Ok(N2Sample {
        t,
        x,
        a0: 1.0 - r1 - r2,
        g: (-4.0 * r1 * r2).sqrt(),
        jacobian,
        degenerate: jacobian.abs() <= 1e-12 * scale,
    })
}

/// Residual of `r^1_t + 2 r^2 r^1_x = 0`, `r^2_t + 2 r^1 r^2_x = 0` for the
/// implicit solution, with `d(t, x)/d(r1, r2)` taken by central differences
/// of the sampled map (step `h`) and inverted.
pub fn n2_diag_residual(u: &Expr, v: &Expr, points: &[(f64, f64)], h: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for &(r1, r2) in points {
        let p = |a: f64, b: f64| n2_general_solution_sample(u, v, a, b);
        let (e1, e2) = (p(r1 + h, r2)?, p(r1 - h, r2)?);
        let (f1, f2) = (p(r1, r2 + h)?, p(r1, r2 - h)?);
        let j = nalgebra::Matrix2::new(
            (e1.t - e2.t) / (2.0 * h),
            (f1.t - f2.t) / (2.0 * h),
            (e1.x - e2.x) / (2.0 * h),
            (f1.x - f2.x) / (2.0 * h),
        );
        let inv = j
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument(format!("map not invertible at ({r1}, {r2})")))?;
        // rows: r1, r2; columns: t, x
        let res1 = inv[(0, 0)] + 2.0 * r2 * inv[(0, 1)];
        let res2 = inv[(1, 0)] + 2.0 * r1 * inv[(1, 1)];
        worst = worst.max(res1.abs()).max(res2.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct EpdReport {
    /// `Psi_{12} + (Psi_1 - Psi_2)/(r1 - r2)`.
    pub epd: f64,
    /// The commuting-flow conditions for `w_i = Psi_{r_i}` against
    /// `v_1 = 2 r2`, `v_2 = 2 r1`.
    pub symmetry: f64,
    /// `dw1/dr2 - dw2/dr1`.
    pub cross: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

/// `Psi = 2u(r1) + 2v(r2) + (r1 - r2)(v'(r2) - u'(r1))`.
pub fn epd_potential(u: &Expr, v: &Expr) -> Result<Expr> {
    check_univariate(u)?;
    check_univariate(v)?;
    let (r1, r2) = (Expr::var("r1"), Expr::var("r2"));
    let ur = u.substitute("s", &r1);
    let vr = v.substitute("s", &r2);
    let up = u.differentiate("s").substitute("s", &r1);
    let vp = v.differentiate("s").substitute("s", &r2);
    Ok(2.0 * ur + 2.0 * vr + (&r1 - &r2) * (vp - up))
}

/// Exact-derivative residuals of the Euler-Poisson-Darboux equation for
/// `Psi` built from `u`, `v`. Points with `|r1 - r2| < 1e-6` are skipped.
pub fn epd_check(u: &Expr, v: &Expr, points: &[(f64, f64)]) -> Result<EpdReport> {
    let psi = epd_potential(u, v)?;
    let (r1, r2) = (Expr::var("r1"), Expr::var("r2"));
    let w1 = psi.differentiate("r1");
    let w2 = psi.differentiate("r2");
    let w12 = w1.differentiate("r2");
    let w21 = w2.differentiate("r1");
    let diff = &r1 - &r2;
    let exprs = [
        &w12 + (&w1 - &w2) / &diff,
        &w12 - (&w1 - &w2) / (&r2 - &r1),
        &w21 - (&w2 - &w1) / &diff,
        w12 - w21,
    ];
    let tape = Tape::compile(&exprs, &["r1", "r2"])?;
    let mut rep = EpdReport {
        epd: 0.0,
        symmetry: 0.0,
        cross: 0.0,
        evaluated: 0,
        skipped: 0,
    };
    for &(a, b) in points {
        if (a - b).abs() < 1e-6 {
            rep.skipped += 1;
            continue;
        }
        let v = tape.eval(&[a, b])?;
        rep.epd = rep.epd.max(v[0].abs());
        rep.symmetry = rep.symmetry.max(v[1].abs()).max(v[2].abs());
        rep.cross = rep.cross.max(v[3].abs());
        rep.evaluated += 1;
    }
    Ok(rep)
}

/// Random `(r1, r2)` with `r1 in [-2, -0.2]`, `r2 in [0.2, 2]`.
pub fn sample_invariants<R: Rng>(count: usize, rng: &mut R) -> Vec<(f64, f64)> {
    (0..count)
        .map(|_| (rng.random_range(-2.0..=-0.2), rng.random_range(0.2..=2.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::build_v;
    use crate::sampling::seeded_rng;

    fn p(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    fn example2(k: f64) -> ImplicitSystem {
        let eqs = vec![
            p("2*a0 + a2"),
            p("k*(a1 + 3*log(a2)) - t"),
            p("2*x + k*(2*a1^2 + 3*a2^2)"),
        ];
        ImplicitSystem::new(eqs, a_names(3), [("k".to_string(), k)].into()).unwrap()
    }

    #[test]
    fn newton_example2_anchor() {
        let s = newton_solve(&example2(1.0), 0.0, -1.5, &[-0.4, 0.1, 0.9], &NewtonOptions::default()).unwrap();
        assert!((s.a[0] + 0.5).abs() < 1e-11);
        assert!(s.a[1].abs() < 1e-11);
        assert!((s.a[2] - 1.0).abs() < 1e-11);
        assert!(s.residual <= 1e-11);
    }

    #[test]
    fn newton_single_equation() {
        let eq = p("75*k^2*a3^2 + 96*k*(6*k*log(a3) - 2*t - k)*log(a3) + 16*t^2 + 16*k*t + 20*k*x");
        let sys = ImplicitSystem::new(vec![eq], vec!["a3".into()], [("k".to_string(), 1.0)].into()).unwrap();
        let s = newton_solve(&sys, 0.0, -3.75, &[0.98], &NewtonOptions::default()).unwrap();
        assert!((s.a[0] - 1.0).abs() < 1e-11);
        // a second root lies between 0.9 and the critical point near 0.963
        let other = newton_solve(&sys, 0.0, -3.75, &[0.9], &NewtonOptions::default()).unwrap();
        assert!((other.a[0] - 0.9276235526151934).abs() < 1e-10);
    }

    #[test]
    fn newton_domain_violation() {
        let r = newton_solve(&example2(1.0), 0.0, -1.5, &[-0.4, 0.1, -1.0], &NewtonOptions::default());
        assert!(matches!(r, Err(Error::DomainViolation(_))));
    }

    #[test]
    fn newton_singular_jacobian() {
        let sys = ImplicitSystem::new(vec![p("a0^2 + 1")], vec!["a0".into()], BTreeMap::new()).unwrap();
        assert!(matches!(
            newton_solve(&sys, 0.0, 0.0, &[0.0], &NewtonOptions::default()),
            Err(Error::SingularJacobian { iteration: 0 })
        ));
        assert!(newton_solve(&sys, 0.0, 0.0, &[1.0], &NewtonOptions::default()).is_err());
    }

    #[test]
    fn missing_constant_is_config_error() {
        let r = ImplicitSystem::new(vec![p("k*a0 - t")], vec!["a0".into()], BTreeMap::new());
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn grid_spec_parse() {
        let g: GridSpec = "-0.1,0.1,-1.7,-1.5,21,21".parse().unwrap();
        assert_eq!(g.nt, 21);
        assert!((g.ht() - 0.01).abs() < 1e-15);
        assert_eq!(g.x(20), -1.5);
        assert!("1,2,3".parse::<GridSpec>().is_err());
        assert!("0,1,0,1,0,3".parse::<GridSpec>().is_err());
        assert_eq!(g.refined(2).nt, 81);
    }

    #[test]
    fn single_node_grid_matches_newton() {
        let sys = example2(1.0);
        let anchor = Anchor {
            t: 0.0,
            x: -1.5,
            a: vec![-0.4, 0.1, 0.9],
        };
        let g = solve_on_grid(&sys, &GridSpec::single(0.0, -1.5), &anchor, &NewtonOptions::default()).unwrap();
        let direct = newton_solve(&sys, 0.0, -1.5, &anchor.a, &NewtonOptions::default()).unwrap();
        assert!(g.all_converged());
        assert_eq!(g.get(0, 0), direct.a.as_slice());
    }

    fn ex2_anchor() -> Anchor {
        Anchor {
            t: 0.0,
            x: -1.5,
            a: vec![-0.5, 0.0, 1.0],
        }
    }

    #[test]
    fn example2_default_patch() {
        let sys = example2(1.0);
        let grid: GridSpec = "-0.1,0.1,-1.7,-1.5,21,21".parse().unwrap();
        let g = solve_on_grid(&sys, &grid, &ex2_anchor(), &NewtonOptions::default()).unwrap();
        assert!(g.all_converged());
        assert!(g.max_residual() <= 1e-11);
        assert!(g.values.iter().all(|a| a[2] > 0.0));
        let r = pde_residual_on_grid(&g, &build_v(3).unwrap()).unwrap();
        assert!(r.max < 1e-3, "{}", r.max);
        let b = bracket_closure_on_grid(&g).unwrap();
        assert!(b <= 1e-6, "{b}");
    }

    #[test]
    fn example2_fold_is_flagged() {
        let sys = example2(1.0);
        let grid: GridSpec = "-0.2,0.2,-1.7,-1.3,21,21".parse().unwrap();
        let g = solve_on_grid(&sys, &grid, &ex2_anchor(), &NewtonOptions::default()).unwrap();
        assert!(!g.all_converged());
        assert!(g.converged_count() > grid.len() / 2);
        assert!(matches!(
            pde_residual_on_grid(&g, &build_v(3).unwrap()),
            Err(Error::Unconverged(_))
        ));
    }

    #[test]
    fn example2_second_order() {
        let sys = example2(1.0);
        let grid: GridSpec = "-0.1,0.1,-1.7,-1.5,11,11".parse().unwrap();
        let study = convergence_study(
            &sys,
            &build_v(3).unwrap(),
            &grid,
            &ex2_anchor(),
            3,
            &NewtonOptions::default(),
        )
        .unwrap();
        for w in study.residuals.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..=4.5).contains(&ratio), "{study:?}");
        }
    }

    #[test]
    fn constant_fields_have_zero_residual() {
        let grid = GridSpec::new(0.0, 1.0, 0.0, 1.0, 4, 4).unwrap();
        let sol = GridSolution {
            grid,
            unknowns: a_names(3),
            values: vec![vec![0.3, -0.2, 1.5]; 16],
            status: vec![NodeStatus::Converged; 16],
            residuals: vec![0.0; 16],
        };
        assert_eq!(pde_residual_on_grid(&sol, &build_v(3).unwrap()).unwrap().max, 0.0);
    }

    #[test]
    fn implicit_derivatives_close_the_bracket() {
        let sys = example2(1.0);
        let (at, ax) = sys.implicit_derivatives(0.0, -1.5, &[-0.5, 0.0, 1.0]).unwrap();
        assert!(bracket_from_jet(&[-0.5, 0.0, 1.0], &at, &ax).unwrap() < 1e-14);
        // a perturbed jet does not
        assert!(bracket_from_jet(&[-0.5, 0.0, 1.0], &[at[0] + 0.1, at[1], at[2]], &ax).unwrap() > 1e-3);
    }

    #[test]
    fn n2_sample_cubic() {
        let c = p("s^3");
        let s = n2_general_solution_sample(&c, &c, -1.0, 1.0).unwrap();
        assert_eq!((s.t, s.x, s.a0, s.g), (0.0, -6.0, 1.0, 2.0));
        assert!(!s.degenerate);
        let z = n2_general_solution_sample(&Expr::zero(), &Expr::zero(), -1.0, 1.0).unwrap();
        assert_eq!((z.t, z.x), (0.0, 0.0));
        assert!(z.degenerate);
        assert!(n2_general_solution_sample(&c, &c, 1.0, 1.0).is_err());
    }

    #[test]
    fn n2_diag_residual_small() {
        let c = p("s^3");
        let pts = sample_invariants(100, &mut seeded_rng(4));
        assert!(n2_diag_residual(&c, &c, &pts, 1e-4).unwrap() <= 1e-8);
    }

    #[test]
    fn epd_examples() {
        let pts = sample_invariants(200, &mut seeded_rng(9));
        let zero = epd_check(&Expr::zero(), &Expr::zero(), &pts).unwrap();
        assert_eq!((zero.epd, zero.symmetry, zero.cross), (0.0, 0.0, 0.0));
        let r = epd_check(&p("s^3"), &p("s^2"), &pts).unwrap();
        assert!(r.epd <= 1e-12 && r.symmetry <= 1e-12 && r.cross <= 1e-12, "{r:?}");
        assert_eq!(r.evaluated, 200);
    }

    #[test]
    fn epd_rejects_multivariate() {
        assert!(epd_check(&p("s*y"), &Expr::zero(), &[]).is_err());
    }
}
