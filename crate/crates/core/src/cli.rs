//! Command-line front end. Exit codes: 0 success, 1 check failure,
//! 2 configuration error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::criteria::{criterion_determinants, CriterionReport, Verdict};
use crate::error::{Error, Result};
use crate::flows::symmetry_pde_residual;
use crate::geodesic::{
    integrate, time_reversal_error, GridModel, IntegrateOptions, PhaseModel, SymbolicModel, Termination,
};
use crate::geometry::{bracket_residual, gauss_curvature, hamiltonian, PhasePoint};
use crate::hodograph::{
    bracket_closure_on_grid, convergence_study, pde_residual_on_grid, solve_on_grid, GridSolution, GridSpec,
    NewtonOptions, NodeStatus,
};
use crate::output::{format_f64, write_csv, write_json, Cell};
use crate::registry::{get_example_with, list_examples, ExampleSpec, ExplicitProblem, ImplicitProblem, Problem};
use crate::sampling::{sample_a_points_positive, seeded_rng};

#[derive(Debug, Parser)]
#[command(
    name = "geoflow",
    version,
    about = "Checks polynomial first integrals of 2-D geodesic flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in examples.
    List,
    /// Bracket, curvature and criterion checks (explicit entries), or anchor
    /// and symmetry-equation checks (implicit entries).
    Verify(VerifyArgs),
    /// Solve an implicit entry on a grid by continuation from its anchor.
    Solve(SolveArgs),
    /// Integrate a geodesic and monitor the conserved quantities.
    Geodesic(GeodesicArgs),
    /// Evaluate the obstruction to linear first integrals.
    Criterion(CriterionArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Built-in example id (see `geoflow list`).
    #[arg(long)]
    pub example: Option<String>,
    /// JSON problem file with the same structure as a built-in entry.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a constant, e.g. `--set k=1.0`. Repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE")]
    pub set: Vec<String>,
    /// Family parameter, e.g. `--param n=4` for ex0-family. Repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub param: Vec<String>,
    /// Named preset of constants, anchor and grid.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for CSV and JSON artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Random admissible points for the bracket check.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Bound on the relative bracket residual.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub curvature_samples: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub curvature_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub criterion_samples: usize,
    #[arg(long, default_value_t = crate::criteria::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Random a-points for the symmetry-equation check.
    #[arg(long, default_value_t = 500)]
    pub pde_samples: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub pde_tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    /// `t0,t1,x0,x1,nt,nx`; defaults to the entry's patch.
    #[arg(long, value_name = "t0,t1,x0,x1,nt,nx", allow_hyphen_values = true)]
    pub grid: Option<GridSpec>,
    /// Newton tolerance on the max-norm residual.
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
    /// Refinement levels for the convergence study (0 or 1 skips it).
    #[arg(long, default_value_t = 3)]
    pub levels: u32,
    #[arg(long, default_value_t = 1.9)]
    pub min_order: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GeodesicArgs {
    #[command(flatten)]
    pub common: Common,
    /// Initial state `u1,u2,p1,p2`.
    #[arg(long, value_name = "u1,u2,p1,p2", allow_hyphen_values = true)]
    pub state: String,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    /// Local error tolerance of the integrator.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Output samples including both endpoints.
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    /// Minimum distance to singular loci.
    #[arg(long, default_value_t = 0.05)]
    pub guard: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub drift_tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub reversal_tol: f64,
    /// Grid for implicit entries (bicubic interpolation of the solved fields).
    #[arg(long, value_name = "t0,t1,x0,x1,nt,nx", allow_hyphen_values = true)]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CriterionArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = crate::criteria::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

/// One named pass/fail check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            passed: value <= threshold,
            detail: None,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            passed: value >= threshold,
            detail: None,
        }
    }

    fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

/// Result of a command: the checks run and the text printed to stdout.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub lines: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Exit code for an error: 2 for configuration problems, 1 otherwise.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::UnknownExample { .. }
        | Error::Parse(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::Normalization(_)
        | Error::Dimension(_)
        | Error::DegenerateMetric
        | Error::UnsupportedSize { .. } => 2,
        _ => 1,
    }
}

/// Effective configuration, written next to the artifacts.
#[derive(Debug, Serialize)]
struct RunConfig<'a, A: Serialize> {
    command: &'a str,
    source: String,
    constants: BTreeMap<String, f64>,
    params: BTreeMap<String, f64>,
    args: &'a A,
}

fn parse_assignments(items: &[String], flag: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{flag} `{item}` must be NAME=VALUE")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{flag} `{item}`: `{v}` is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

struct Loaded {
    spec: ExampleSpec,
    source: String,
    constants: BTreeMap<String, f64>,
    params: BTreeMap<String, f64>,
    problem: Problem,
}

fn load(c: &Common) -> Result<Loaded> {
    let params = parse_assignments(&c.param, "--param")?;
    let overrides = parse_assignments(&c.set, "--set")?;
    let (mut spec, source, params) = match (&c.example, &c.config) {
        (Some(id), None) => {
            let entry = get_example_with(id, &params)?;
            (entry.spec, id.clone(), entry.params)
        }
        (None, Some(path)) => {
            if !params.is_empty() {
                return Err(Error::Config("--param applies to built-in families only".into()));
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            (ExampleSpec::from_json(&text)?, path.display().to_string(), params)
        }
        _ => return Err(Error::Config("give exactly one of --example or --config".into())),
    };
    if let Some(p) = &c.preset {
        spec = spec.with_preset(p)?;
    }
    let constants = spec.resolved_constants(&overrides)?;
    let problem = spec.hydrate(&overrides)?;
    Ok(Loaded {
        spec,
        source,
        constants,
        params,
        problem,
    })
}

fn explicit_of(l: &Loaded, cmd: &str) -> Result<ExplicitProblem> {
    match &l.problem {
        Problem::Explicit(e) => Ok(e.clone()),
        Problem::Implicit(_) => Err(Error::Config(format!(
            "`{cmd}` needs an explicit metric; `{}` is implicit",
            l.spec.id
        ))),
    }
}

fn implicit_of(l: &Loaded, cmd: &str) -> Result<ImplicitProblem> {
    match &l.problem {
        Problem::Implicit(p) => Ok(p.clone()),
        Problem::Explicit(_) => Err(Error::Config(format!(
            "`{cmd}` needs an implicit system; `{}` is explicit",
            l.spec.id
        ))),
    }
}

fn write_run_config<A: Serialize>(out: &Path, command: &str, l: &Loaded, args: &A) -> Result<()> {
    write_json(
        &out.join("run_config.json"),
        &RunConfig {
            command,
            source: l.source.clone(),
            constants: l.constants.clone(),
            params: l.params.clone(),
            args,
        },
    )
}

fn check_lines(checks: &[Check]) -> Vec<String> {
    checks
        .iter()
        .map(|c| {
            let status = if c.passed { "PASS" } else { "FAIL" };
            match &c.detail {
                Some(d) => format!(
                    "{status} {}: {:.3e} (threshold {:.1e}; {d})",
                    c.name, c.value, c.threshold
                ),
                None => format!("{status} {}: {:.3e} (threshold {:.1e})", c.name, c.value, c.threshold),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    example: &'a str,
    degree: usize,
    passed: bool,
    checks: &'a [Check],
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<Outcome> {
    let l = load(&a.common)?;
    let mut checks = Vec::new();
    match &l.problem {
        Problem::Explicit(p) => {
            let mut rng = seeded_rng(a.common.seed);
            let h = hamiltonian(&p.metric)?;
            let pts = p.region.sample(a.samples, &mut rng)?;
            for (name, f) in &p.integrals {
                let rep = bracket_residual(f, &h, &pts)?;
                let mut c = Check::at_most(format!("bracket {{{name}, H}}"), rep.max_relative, a.tol);
                if rep.evaluated == 0 {
                    c.passed = false;
                }
                checks.push(c.with_detail(format!("{} points, {} skipped", rep.evaluated, rep.skipped)));
            }
            if let Some(reference) = &p.curvature {
                let k = gauss_curvature(&p.metric);
                let [u, v] = p.metric.coords();
                let mut worst = 0.0f64;
                for (x, y) in p.region.sample(a.curvature_samples, &mut rng)? {
                    let at = [(u, x), (v, y)];
                    let (got, want) = (k.evaluate(&at)?, reference.evaluate(&at)?);
                    worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
                }
                checks.push(Check::at_most("gauss curvature vs reference", worst, a.curvature_tol));
            }
            if let Some(expected) = p.expected_verdict {
                let pts = p.region.sample(a.criterion_samples, &mut rng)?;
                let rep = criterion_determinants(&p.metric, &pts, a.threshold)?;
                checks.push(Check {
                    name: "linear-integral criterion".into(),
                    value: rep.exceed_fraction,
                    threshold: 0.9,
                    passed: rep.verdict == expected,
                    detail: Some(format!("verdict {:?}, expected {expected:?}", rep.verdict)),
                });
            }
        }
        Problem::Implicit(p) => {
            let r = p.system.residual(p.anchor.t, p.anchor.x, &p.anchor.a)?;
            let max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            checks.push(Check::at_most("anchor residual", max, 1e-11));
            if let Some(gens) = &p.generators {
                let pts = sample_a_points_positive(p.n, a.pde_samples, &mut seeded_rng(a.common.seed));
                let rep = symmetry_pde_residual(p.n, gens, &pts)?;
                checks.push(
                    Check::at_most("symmetry equations (relative)", rep.max_relative, a.pde_tol).with_detail(format!(
                        "{} points, {} skipped, absolute {}",
                        rep.evaluated,
                        rep.skipped,
                        format_f64(rep.max)
                    )),
                );
            }
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    if let Some(out) = &a.common.out {
        write_run_config(out, "verify", &l, a)?;
        write_json(
            &out.join("verify.json"),
            &VerifyReport {
                example: &l.spec.id,
                degree: l.spec.degree,
                passed,
                checks: &checks,
            },
        )?;
    }
    let mut lines = vec![format!("verify {}", l.spec.id)];
    lines.extend(check_lines(&checks));
    Ok(Outcome { checks, lines })
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    example: &'a str,
    grid: String,
    unknowns: &'a [String],
    nodes: usize,
    converged: usize,
    max_newton_residual: f64,
    pde_residual_max: Option<f64>,
    pde_residual_mean: Option<f64>,
    convergence_steps: Vec<f64>,
    convergence_residuals: Vec<f64>,
    convergence_orders: Vec<f64>,
    bracket_closure: Option<f64>,
    passed: bool,
    checks: &'a [Check],
}

fn grid_rows(sol: &GridSolution) -> Result<(Vec<String>, Vec<Vec<Cell>>)> {
    let mut header = vec!["t".to_string(), "x".to_string()];
    header.extend(sol.unknowns.iter().cloned());
    header.extend(["converged", "status", "residual"].map(String::from));
    let g = &sol.grid;
    let mut rows = Vec::with_capacity(g.len());
    for i in 0..g.nt {
        for j in 0..g.nx {
            let k = g.index(i, j);
            let mut r: Vec<Cell> = vec![g.t(i).into(), g.x(j).into()];
            r.extend(sol.values[k].iter().map(|v| Cell::Num(*v)));
            r.push((sol.status[k] == NodeStatus::Converged).into());
            r.push(Cell::Text(
                serde_json::to_value(sol.status[k])?
                    .as_str()
                    .unwrap_or_default()
                    .to_string(),
            ));
            r.push(sol.residuals[k].into());
            rows.push(r);
        }
    }
    Ok((header, rows))
}

pub fn cmd_solve(a: &SolveArgs) -> Result<Outcome> {
    let l = load(&a.common)?;
    let p = implicit_of(&l, "solve")?;
    let grid = a.grid.unwrap_or(p.grid);
    let opts = NewtonOptions {
        tol: a.tol,
        ..NewtonOptions::default()
    };
    let sol = solve_on_grid(&p.system, &grid, &p.anchor, &opts)?;
    let mut checks = vec![Check::at_least(
        "converged nodes",
        sol.converged_count() as f64,
        grid.len() as f64,
    )];
    let (mut pde_max, mut pde_mean, mut bracket) = (None, None, None);
    let (mut steps, mut residuals, mut orders) = (Vec::new(), Vec::new(), Vec::new());
    if sol.all_converged() {
        checks.push(Check::at_most("newton residual", sol.max_residual(), a.tol));
        if let Ok(r) = pde_residual_on_grid(&sol, &p.quasi_linear) {
            pde_max = Some(r.max);
            pde_mean = Some(r.mean);
        }
        if let Ok(b) = bracket_closure_on_grid(&sol) {
            bracket = Some(b);
            checks.push(Check::at_most("bracket closure", b, 1e-6));
        }
        if a.levels >= 2 {
            let study = convergence_study(&p.system, &p.quasi_linear, &grid, &p.anchor, a.levels, &opts)?;
            checks.push(Check::at_least("pde residual order", study.min_order(), a.min_order));
            steps = study.steps;
            residuals = study.residuals;
            orders = study.orders;
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    if let Some(out) = &a.common.out {
        write_run_config(out, "solve", &l, a)?;
        let (header, rows) = grid_rows(&sol)?;
        write_csv(&out.join("grid.csv"), &header, &rows)?;
        write_json(
            &out.join("summary.json"),
            &SolveSummary {
                example: &l.spec.id,
                grid: grid.to_string(),
                unknowns: &sol.unknowns,
                nodes: grid.len(),
                converged: sol.converged_count(),
                max_newton_residual: sol.max_residual(),
                pde_residual_max: pde_max,
                pde_residual_mean: pde_mean,
                convergence_steps: steps,
                convergence_residuals: residuals,
                convergence_orders: orders.clone(),
                bracket_closure: bracket,
                passed,
                checks: &checks,
            },
        )?;
    }
    let mut lines = vec![format!("solve {} on {grid}", l.spec.id)];
    if let Some(m) = pde_max {
        lines.push(format!("pde residual max {m:.3e}"));
    }
    if !orders.is_empty() {
        lines.push(format!("orders {orders:?}"));
    }
    lines.extend(check_lines(&checks));
    Ok(Outcome { checks, lines })
}

fn parse_state(s: &str) -> Result<PhasePoint> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config(format!("state `{s}` must be u1,u2,p1,p2")))?;
    if v.len() != 4 {
        return Err(Error::Config(format!("state `{s}` must have four components")));
    }
    Ok(PhasePoint::new(v[0], v[1], v[2], v[3]))
}

#[derive(Serialize)]
struct GeodesicSummary<'a> {
    example: &'a str,
    mode: &'a str,
    initial: [f64; 4],
    t_end: f64,
    samples: usize,
    termination: Termination,
    accepted_steps: usize,
    rejected_steps: usize,
    drift: &'a [crate::geodesic::Drift],
    max_relative_drift: f64,
    time_reversal_error: Option<f64>,
    passed: bool,
    checks: &'a [Check],
}

pub fn cmd_geodesic(a: &GeodesicArgs) -> Result<Outcome> {
    let l = load(&a.common)?;
    let s0 = parse_state(&a.state)?;
    let opts = IntegrateOptions {
        tol: a.tol,
        samples: a.samples,
        guard: a.guard,
        ..IntegrateOptions::default()
    };
    let (model, mode): (Box<dyn PhaseModel>, &str) = match &l.problem {
        Problem::Explicit(p) => (
            Box::new(SymbolicModel::new(
                &p.metric,
                p.integrals.clone(),
                Some(p.region.clone()),
            )?),
            "symbolic",
        ),
        Problem::Implicit(p) => {
            let grid = a.grid.unwrap_or(p.grid);
            let sol = solve_on_grid(&p.system, &grid, &p.anchor, &NewtonOptions::default())?;
            (Box::new(GridModel::from_solution(&sol)?), "grid")
        }
    };
    if !model.admissible(s0.u1, s0.u2, a.guard) {
        return Err(Error::Config(format!(
            "initial point ({}, {}) is not admissible",
            s0.u1, s0.u2
        )));
    }
    let traj = integrate(model.as_ref(), &s0, a.t_end, &opts)?;
    let mut checks = vec![Check {
        name: "termination".into(),
        value: 0.0,
        threshold: 0.0,
        passed: traj.termination == Termination::Completed,
        detail: Some(format!("{:?}", traj.termination)),
    }];
    checks.push(Check::at_most("relative drift", traj.max_relative_drift(), a.drift_tol));
    let reversal = if traj.termination == Termination::Completed && a.t_end > 0.0 {
        let e = time_reversal_error(model.as_ref(), &s0, a.t_end, &opts)?;
        checks.push(Check::at_most("time reversal", e, a.reversal_tol));
        Some(e)
    } else {
        None
    };
    let passed = checks.iter().all(|c| c.passed);
    if let Some(out) = &a.common.out {
        write_run_config(out, "geodesic", &l, a)?;
        let rows: Vec<Vec<Cell>> = traj
            .rows()
            .into_iter()
            .map(|r| r.into_iter().map(Cell::Num).collect())
            .collect();
        write_csv(&out.join("trajectory.csv"), &traj.header(), &rows)?;
        write_json(
            &out.join("geodesic.json"),
            &GeodesicSummary {
                example: &l.spec.id,
                mode,
                initial: s0.to_array(),
                t_end: a.t_end,
                samples: traj.times.len(),
                termination: traj.termination,
                accepted_steps: traj.accepted_steps,
                rejected_steps: traj.rejected_steps,
                drift: &traj.drift,
                max_relative_drift: traj.max_relative_drift(),
                time_reversal_error: reversal,
                passed,
                checks: &checks,
            },
        )?;
    }
    let mut lines = vec![format!("geodesic {} ({mode}), {} samples", l.spec.id, traj.times.len())];
    lines.extend(
        traj.drift
            .iter()
            .map(|d| format!("drift {}: {:.3e} relative", d.name, d.max_rel)),
    );
    lines.extend(check_lines(&checks));
    Ok(Outcome { checks, lines })
}

#[derive(Serialize)]
struct CriterionOutput<'a> {
    example: &'a str,
    expected: Option<Verdict>,
    report: &'a CriterionReport,
}

pub fn cmd_criterion(a: &CriterionArgs) -> Result<Outcome> {
    let l = load(&a.common)?;
    let p = explicit_of(&l, "criterion")?;
    let pts = p.region.sample(a.samples, &mut seeded_rng(a.common.seed))?;
    let rep = criterion_determinants(&p.metric, &pts, a.threshold)?;
    let mut checks = Vec::new();
    if let Some(expected) = p.expected_verdict {
        checks.push(Check {
            name: "verdict".into(),
            value: rep.exceed_fraction,
            threshold: 0.9,
            passed: rep.verdict == expected,
            detail: Some(format!("{:?}, expected {expected:?}", rep.verdict)),
        });
    }
    if let Some(out) = &a.common.out {
        write_run_config(out, "criterion", &l, a)?;
        write_json(
            &out.join("criterion.json"),
            &CriterionOutput {
                example: &l.spec.id,
                expected: p.expected_verdict,
                report: &rep,
            },
        )?;
    }
    let mut lines = vec![
        format!("criterion {}", l.spec.id),
        format!(
            "verdict {:?}: {} of {} samples above {:.1e}",
            rep.verdict,
            (rep.exceed_fraction * rep.samples.len() as f64).round(),
            rep.samples.len(),
            a.threshold
        ),
    ];
    lines.extend(check_lines(&checks));
    Ok(Outcome { checks, lines })
}

fn cmd_list() -> Outcome {
    let lines = list_examples()
        .into_iter()
        .map(|e| {
            let kind = serde_json::to_value(e.kind)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default();
            format!("{:<14} {:<18} degree {}  {}", e.id, kind, e.degree, e.summary)
        })
        .collect();
    Outcome {
        checks: Vec::new(),
        lines,
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::List => Ok(cmd_list()),
        Command::Verify(a) => cmd_verify(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Geodesic(a) => cmd_geodesic(a),
        Command::Criterion(a) => cmd_criterion(a),
    }
}

/// Parses `args`, runs the command, prints the outcome and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            if let Some(c) = outcome.first_failure() {
                eprintln!("check failed: {}", c.name);
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    }
}
