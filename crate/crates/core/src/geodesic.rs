//! Hamilton's equations for geodesic flows, integrated with an adaptive
//! Dormand-Prince 5(4) pair while monitoring conserved quantities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, EvalError, Result};
use crate::expr::{Expr, Tape};
use crate::geometry::{monomial_sum, Metric2D, MomentumPoly, PhasePoint};
use crate::hodograph::{GridSolution, GridSpec};
use crate::sampling::Region;

/// A Hamiltonian vector field on `T*M` with monitored quantities.
pub trait PhaseModel: Sync {
    fn rhs(&self, s: &[f64; 4]) -> Result<[f64; 4]>;
    fn hamiltonian(&self, s: &[f64; 4]) -> Result<f64>;
    /// Values of the monitored first integrals.
    fn integrals(&self, s: &[f64; 4]) -> Result<Vec<f64>>;
    fn integral_names(&self) -> Vec<String>;
    /// Whether `(u1, u2)` is at least `guard` away from the singular set.
    fn admissible(&self, u1: f64, u2: f64, guard: f64) -> bool;
}

/// A metric given by expressions, with optional polynomial integrals.
#[derive(Debug, Clone)]
pub struct SymbolicModel {
    tape: Tape,
    integral_degrees: Vec<usize>,
    names: Vec<String>,
    region: Option<Region>,
}

impl SymbolicModel {
    pub fn new(metric: &Metric2D, integrals: Vec<(String, MomentumPoly)>, region: Option<Region>) -> Result<Self> {
        let [u1, u2] = metric.coords();
        let det = metric.det();
        if det.is_zero() {
            return Err(Error::DegenerateMetric);
        }
        let [i11, i12, i22] = metric.inverse();
        let c = [0.5 * i11, i12, 0.5 * i22];
        let mut outputs: Vec<Expr> = c.to_vec();
        outputs.extend(c.iter().map(|e| e.differentiate(u1)));
        outputs.extend(c.iter().map(|e| e.differentiate(u2)));
        outputs.push(det);
        let mut degrees = Vec::new();
        let mut names = Vec::new();
        for (name, f) in integrals {
            if f.coords() != metric.coords() {
                return Err(Error::InvalidArgument(format!(
                    "integral `{name}` uses different coordinates"
                )));
            }
            degrees.push(f.degree());
            names.push(name);
            outputs.extend(f.coeffs().iter().cloned());
        }
        Ok(SymbolicModel {
            tape: Tape::compile(&outputs, &[u1, u2])?,
            integral_degrees: degrees,
            names,
            region,
        })
    }

    fn eval(&self, s: &[f64; 4]) -> Result<Vec<f64>> {
        let v = self.tape.eval(&[s[0], s[1]]).map_err(|e| match e {
            EvalError::DivisionByZero { .. } => Error::SingularMetric(s[0], s[1]),
            other => other.into(),
        })?;
        if v[9] == 0.0 || !v[9].is_finite() {
            return Err(Error::SingularMetric(s[0], s[1]));
        }
        Ok(v)
    }
}

fn quad(c: &[f64], p1: f64, p2: f64) -> f64 {
    c[0] * p1 * p1 + c[1] * p1 * p2 + c[2] * p2 * p2
}

impl PhaseModel for SymbolicModel {
    fn rhs(&self, s: &[f64; 4]) -> Result<[f64; 4]> {
        let v = self.eval(s)?;
        let (p1, p2) = (s[2], s[3]);
        Ok([
            2.0 * v[0] * p1 + v[1] * p2,
            v[1] * p1 + 2.0 * v[2] * p2,
            -quad(&v[3..6], p1, p2),
            -quad(&v[6..9], p1, p2),
        ])
    }

    fn hamiltonian(&self, s: &[f64; 4]) -> Result<f64> {
        let v = self.eval(s)?;
        Ok(quad(&v[0..3], s[2], s[3]))
    }

    fn integrals(&self, s: &[f64; 4]) -> Result<Vec<f64>> {
        let v = self.eval(s)?;
        let mut off = 10;
        Ok(self
            .integral_degrees
            .iter()
            .map(|&d| {
                let val = monomial_sum(&v[off..off + d + 1], s[2], s[3]);
                off += d + 1;
                val
            })
            .collect())
    }

    fn integral_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn admissible(&self, u1: f64, u2: f64, guard: f64) -> bool {
        self.region.as_ref().is_none_or(|r| r.distance_to_loci(u1, u2) >= guard)
    }
}

/// Time derivative of a phase point: `(dH/dp1, dH/dp2, -dH/du1, -dH/du2)`.
pub fn hamiltonian_rhs(m: &Metric2D, s: &PhasePoint) -> Result<[f64; 4]> {
    SymbolicModel::new(m, Vec::new(), None)?.rhs(&s.to_array())
}

/// Piecewise bicubic Hermite interpolant of a gridded field, with
/// derivatives estimated by finite differences.
#[derive(Debug, Clone)]
pub struct Bicubic {
    grid: GridSpec,
    f: Vec<f64>,
    ft: Vec<f64>,
    fx: Vec<f64>,
    ftx: Vec<f64>,
}

fn diff_along(values: &[f64], n: usize, stride: usize, offset: usize, h: f64, out: &mut [f64]) {
    for k in 0..n {
        let at = |m: usize| values[offset + m * stride];
        out[offset + k * stride] = if n < 2 {
            0.0
        } else if k == 0 {
            (at(1) - at(0)) / h
        } else if k == n - 1 {
            (at(n - 1) - at(n - 2)) / h
        } else {
            (at(k + 1) - at(k - 1)) / (2.0 * h)
        };
    }
}

impl Bicubic {
    /// `values` is row-major `nt x nx`. Needs at least 2 nodes per axis.
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if grid.nt < 2 || grid.nx < 2 {
            return Err(Error::InvalidArgument(
                "interpolation needs at least 2 nodes per axis".into(),
            ));
        }
        if values.len() != grid.len() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "interpolation needs a finite value at every node".into(),
            ));
        }
        let (nt, nx) = (grid.nt, grid.nx);
        let mut ft = vec![0.0; values.len()];
        let mut fx = vec![0.0; values.len()];
        let mut ftx = vec![0.0; values.len()];
        for j in 0..nx {
            diff_along(&values, nt, nx, j, grid.ht(), &mut ft);
        }
        for i in 0..nt {
            diff_along(&values, nx, 1, i * nx, grid.hx(), &mut fx);
        }
        for i in 0..nt {
            diff_along(&ft, nx, 1, i * nx, grid.hx(), &mut ftx);
        }
        Ok(Bicubic {
            grid,
            f: values,
            ft,
            fx,
            ftx,
        })
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        (self.grid.t0..=self.grid.t1).contains(&t) && (self.grid.x0..=self.grid.x1).contains(&x)
    }

    /// Value and first derivatives `(f, f_t, f_x)`.
    pub fn eval(&self, t: f64, x: f64) -> Option<(f64, f64, f64)> {
        if !self.contains(t, x) {
            return None;
        }
        let (ht, hx) = (self.grid.ht(), self.grid.hx());
        let cell = |v: f64, lo: f64, h: f64, n: usize| {
            let i = (((v - lo) / h).floor().max(0.0) as usize).min(n - 2);
            (i, (v - lo) / h - i as f64)
        };
        let (i, u) = cell(t, self.grid.t0, ht, self.grid.nt);
        let (j, w) = cell(x, self.grid.x0, hx, self.grid.nx);
        let basis = |s: f64| {
            let (s2, s3) = (s * s, s * s * s);
            (
                [2.0 * s3 - 3.0 * s2 + 1.0, -2.0 * s3 + 3.0 * s2],
                [s3 - 2.0 * s2 + s, s3 - s2],
                [6.0 * s2 - 6.0 * s, -6.0 * s2 + 6.0 * s],
                [3.0 * s2 - 4.0 * s + 1.0, 3.0 * s2 - 2.0 * s],
            )
        };
        let (h0u, h1u, dh0u, dh1u) = basis(u);
        let (h0w, h1w, dh0w, dh1w) = basis(w);
        let (mut f, mut ftv, mut fxv) = (0.0, 0.0, 0.0);
        for a in 0..2 {
            for b in 0..2 {
                let k = self.grid.index(i + a, j + b);
                let terms = [self.f[k], ht * self.ft[k], hx * self.fx[k], ht * hx * self.ftx[k]];
                let bu = [h0u[a], h1u[a], h0u[a], h1u[a]];
                let bw = [h0w[b], h0w[b], h1w[b], h1w[b]];
                let dbu = [dh0u[a], dh1u[a], dh0u[a], dh1u[a]];
                let dbw = [dh0w[b], dh0w[b], dh1w[b], dh1w[b]];
                for m in 0..4 {
                    f += terms[m] * bu[m] * bw[m];
                    ftv += terms[m] * dbu[m] * bw[m] / ht;
                    fxv += terms[m] * bu[m] * dbw[m] / hx;
                }
            }
        }
        Some((f, ftv, fxv))
    }
}

/// The metric `g^2 dt^2 + dx^2` and integral `F` from a solved grid, with
/// each `a_k` interpolated bicubically (`g = a_{n-1}`).
#[derive(Debug, Clone)]
pub struct GridModel {
    fields: Vec<Bicubic>,
}

impl GridModel {
    pub fn from_solution(sol: &GridSolution) -> Result<Self> {
        if !sol.all_converged() {
            return Err(Error::Unconverged(sol.grid.len() - sol.converged_count()));
        }
        let fields = (0..sol.unknowns.len())
            .map(|k| Bicubic::new(sol.grid, sol.field(k)))
            .collect::<Result<Vec<_>>>()?;
        Ok(GridModel { fields })
    }

    fn values(&self, t: f64, x: f64) -> Result<Vec<(f64, f64, f64)>> {
        self.fields
            .iter()
            .map(|f| f.eval(t, x))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidArgument(format!("({t}, {x}) is outside the solved grid")))
    }
}

impl PhaseModel for GridModel {
    fn rhs(&self, s: &[f64; 4]) -> Result<[f64; 4]> {
        let v = self.values(s[0], s[1])?;
        let (g, gt, gx) = *v.last().expect("at least one field");
        if g == 0.0 {
            return Err(Error::SingularMetric(s[0], s[1]));
        }
        let (p1, p2) = (s[2], s[3]);
        let g3 = g * g * g;
        Ok([p1 / (g * g), p2, p1 * p1 * gt / g3, p1 * p1 * gx / g3])
    }

    fn hamiltonian(&self, s: &[f64; 4]) -> Result<f64> {
        let v = self.values(s[0], s[1])?;
        let g = v.last().expect("at least one field").0;
        Ok(0.5 * (s[2] * s[2] / (g * g) + s[3] * s[3]))
    }

    fn integrals(&self, s: &[f64; 4]) -> Result<Vec<f64>> {
        let v = self.values(s[0], s[1])?;
        let n = v.len();
        let g = v[n - 1].0;
        let mut c: Vec<f64> = (0..n).map(|k| v[k].0 * g.powi(k as i32 - n as i32)).collect();
        c.push(1.0);
        Ok(vec![monomial_sum(&c, s[2], s[3])])
    }

    fn integral_names(&self) -> Vec<String> {
        vec!["F".into()]
    }

    fn admissible(&self, t: f64, x: f64, _guard: f64) -> bool {
        self.fields[0].contains(t, x)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub tol: f64,
    /// Number of output samples, including both endpoints.
    pub samples: usize,
    pub max_steps: usize,
    /// Minimum distance to singular loci before terminating.
    pub guard: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: 1e-10,
            samples: 101,
            max_steps: 1_000_000,
            guard: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Singularity,
    StepUnderflow,
    MaxSteps,
}

#[derive(Debug, Clone, Serialize)]
pub struct Drift {
    pub name: String,
    pub initial: f64,
    pub max_abs: f64,
    pub max_rel: f64,
}

impl Drift {
    fn from_series(name: &str, values: impl Iterator<Item = f64>) -> Self {
        let mut it = values.peekable();
        let initial = it.peek().copied().unwrap_or(0.0);
        let max_abs = it.fold(0.0f64, |m, v| m.max((v - initial).abs()));
        let max_rel = if initial != 0.0 {
            max_abs / initial.abs()
        } else {
            max_abs
        };
        Drift {
            name: name.to_string(),
            initial,
            max_abs,
            max_rel,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GeodesicTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub hamiltonian: Vec<f64>,
    pub integral_names: Vec<String>,
    /// `integrals[i][m]`: integral `m` at sample `i`.
    pub integrals: Vec<Vec<f64>>,
    pub drift: Vec<Drift>,
    pub termination: Termination,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl GeodesicTrajectory {
    pub fn last(&self) -> PhasePoint {
        *self.states.last().expect("trajectory has at least one sample")
    }

    /// Largest relative drift over `H` and all integrals.
    pub fn max_relative_drift(&self) -> f64 {
        self.drift.iter().fold(0.0, |m, d| m.max(d.max_rel))
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["t", "u1", "u2", "p1", "p2", "H"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(self.integral_names.iter().cloned());
        h
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.times.len())
            .map(|i| {
                let s = self.states[i];
                let mut r = vec![self.times[i], s.u1, s.u2, s.p1, s.p2, self.hamiltonian[i]];
                r.extend(self.integrals[i].iter().copied());
                r
            })
            .collect()
    }
}

// Dormand-Prince 5(4) tableau; the field is autonomous so the nodes are unused
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One trial step; returns the new state and the scaled error norm.
fn dopri_step<M: PhaseModel + ?Sized>(model: &M, y: &[f64; 4], h: f64, tol: f64) -> Result<([f64; 4], f64)> {
    let mut k = [[0.0; 4]; 7];
    for s in 0..7 {
        let mut ys = *y;
        for (r, kr) in k.iter().enumerate().take(s) {
            for i in 0..4 {
                ys[i] += h * A[s][r] * kr[i];
            }
        }
        k[s] = model.rhs(&ys)?;
    }
    let mut ynew = *y;
    let mut err = 0.0f64;
    for i in 0..4 {
        let mut inc = 0.0;
        let mut e = 0.0;
        for s in 0..7 {
            inc += B[s] * k[s][i];
            e += E[s] * k[s][i];
        }
        ynew[i] += h * inc;
        let scale = tol + tol * y[i].abs().max(ynew[i].abs());
        err = err.max((h * e).abs() / scale);
    }
    if ynew.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite state".into()));
    }
    Ok((ynew, err))
}

/// Integrates from `s0` over `[0, t_end]`, recording `opts.samples` evenly
/// spaced samples (one sample when `t_end = 0`). Steps are shortened to land
/// on sample times. Terminates early when the path comes within
/// `opts.guard` of a singular locus or the step size underflows.
pub fn integrate<M: PhaseModel + ?Sized>(
    model: &M,
    s0: &PhasePoint,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<GeodesicTrajectory> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "t_end must be finite and non-negative, got {t_end}"
        )));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if !model.admissible(s0.u1, s0.u2, opts.guard) {
        return Err(Error::InvalidArgument(format!(
            "initial point ({}, {}) is too close to a singular locus",
            s0.u1, s0.u2
        )));
    }
    let sample_times: Vec<f64> = if t_end == 0.0 {
        vec![0.0]
    } else {
        let n = opts.samples.max(2);
        (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
    };
    let mut y = s0.to_array();
    let mut traj = GeodesicTrajectory {
        times: Vec::new(),
        states: Vec::new(),
        hamiltonian: Vec::new(),
        integral_names: model.integral_names(),
        integrals: Vec::new(),
        drift: Vec::new(),
        termination: Termination::Completed,
        accepted_steps: 0,
        rejected_steps: 0,
    };
    let record = |traj: &mut GeodesicTrajectory, t: f64, y: &[f64; 4]| -> Result<()> {
        traj.times.push(t);
        traj.states.push(PhasePoint::from_array(*y));
        traj.hamiltonian.push(model.hamiltonian(y)?);
        traj.integrals.push(model.integrals(y)?);
        Ok(())
    };
    record(&mut traj, 0.0, &y)?;
    let mut t = 0.0;
    let mut h = (t_end / 100.0).clamp(f64::MIN_POSITIVE, 1e-2);
    let mut steps = 0;
    'outer: for &target in &sample_times[1..] {
        while t < target {
            if steps >= opts.max_steps {
                traj.termination = Termination::MaxSteps;
                break 'outer;
            }
            steps += 1;
            let remaining = target - t;
            let clipped = remaining <= h;
            let step = if clipped { remaining } else { h };
            let trial = dopri_step(model, &y, step, opts.tol);
            let (ynew, err) = match trial {
                Ok(v) => v,
                Err(_) => (y, f64::INFINITY),
            };
            if err <= 1.0 {
                t = if clipped { target } else { t + step };
                y = ynew;
                traj.accepted_steps += 1;
                if !model.admissible(y[0], y[1], opts.guard) {
                    record(&mut traj, t, &y)?;
                    traj.termination = Termination::Singularity;
                    break 'outer;
                }
            } else {
                traj.rejected_steps += 1;
            }
            let factor = if err == 0.0 {
                5.0
            } else if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                0.2
            };
            let proposal = step * factor;
            // a clipped accepted step should not shrink the controller's step
            h = if clipped && err <= 1.0 {
                h.max(proposal)
            } else {
                proposal
            };
            if h < 1e-14 * t_end.max(1.0) {
                traj.termination = Termination::StepUnderflow;
                break 'outer;
            }
        }
        record(&mut traj, t, &y)?;
    }
    traj.drift
        .push(Drift::from_series("H", traj.hamiltonian.iter().copied()));
    for (m, name) in traj.integral_names.iter().enumerate() {
        traj.drift
            .push(Drift::from_series(name, traj.integrals.iter().map(|v| v[m])));
    }
    Ok(traj)
}

/// Integrates forward, flips the momenta at the endpoint, integrates back,
/// and returns the distance between the returned state (momenta flipped
/// again) and `s0`.
pub fn time_reversal_error<M: PhaseModel + ?Sized>(
    model: &M,
    s0: &PhasePoint,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<f64> {
    let fwd = integrate(model, s0, t_end, opts)?;
    if fwd.termination != Termination::Completed {
        return Err(Error::InvalidArgument(format!(
            "forward integration ended early: {:?}",
            fwd.termination
        )));
    }
    let e = fwd.last();
    let back = integrate(model, &PhasePoint::new(e.u1, e.u2, -e.p1, -e.p2), t_end, opts)?;
    let r = back.last();
    Ok([r.u1 - s0.u1, r.u2 - s0.u2, -r.p1 - s0.p1, -r.p2 - s0.p2]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs())))
}
