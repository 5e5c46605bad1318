//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::time::Instant;

use geoflow::criteria::{criterion_determinants, Verdict};
use geoflow::flows::{build_v, build_w, commutator_norm, symmetry_pde_residual, DiagonalSystem};
use geoflow::geodesic::{integrate, time_reversal_error, IntegrateOptions, SymbolicModel, Termination};
use geoflow::geometry::{gauss_curvature, hamiltonian, poisson_bracket, Metric2D};
use geoflow::hodograph::{
    convergence_study, epd_check, n2_diag_residual, sample_invariants, solve_on_grid, NewtonOptions,
};
use geoflow::registry::{get_example, get_example_with, ExplicitProblem, ImplicitProblem, Problem};
use geoflow::sampling::{sample_a_points, sample_a_points_positive, seeded_rng, Region};
use geoflow::{Expr, Result};
use rand::Rng;

type Criterion = (&'static str, fn() -> Result<Outcome>);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn explicit(id: &str) -> Result<ExplicitProblem> {
    explicit_with(id, &BTreeMap::new())
}

fn explicit_with(id: &str, params: &BTreeMap<String, f64>) -> Result<ExplicitProblem> {
    match get_example_with(id, params)?.hydrate()? {
        Problem::Explicit(p) => Ok(p),
        Problem::Implicit(_) => unreachable!("{id} is explicit"),
    }
}

fn implicit(id: &str) -> Result<ImplicitProblem> {
    match get_example(id)?.hydrate()? {
        Problem::Implicit(p) => Ok(p),
        Problem::Explicit(_) => unreachable!("{id} is implicit"),
    }
}

fn parse(s: &str) -> Expr {
    Expr::parse(s).expect("valid expression")
}

fn brackets() -> Result<Outcome> {
    let n3: BTreeMap<String, f64> = [("n".to_string(), 3.0)].into();
    let mut parts = Vec::new();
    let mut ok = true;
    for (id, params) in [
        ("ex2-explicit", BTreeMap::new()),
        ("ex7-explicit", BTreeMap::new()),
        ("ex9-explicit", BTreeMap::new()),
        ("ex0-family", n3),
    ] {
        let start = Instant::now();
        let p = explicit_with(id, &params)?;
        let h = hamiltonian(&p.metric)?;
        let pts = p.region.sample(1000, &mut seeded_rng(1))?;
        let mut worst = 0.0f64;
        for (_, f) in &p.integrals {
            let rep = geoflow::geometry::bracket_residual(f, &h, &pts)?;
            ok &= rep.evaluated == 1000;
            worst = worst.max(rep.max_relative);
        }
        let secs = start.elapsed().as_secs_f64();
        ok &= worst <= 1e-9 && secs <= 10.0;
        parts.push(format!("{id} {worst:.1e} in {secs:.2}s"));
    }
    Ok(outcome(ok, parts.join(", ")))
}

fn curvature() -> Result<Outcome> {
    let closed = [
        ("ex2-explicit", "(y^2 + 2*x + 6)/(9*(y^2 - 2*x)^3)"),
        ("ex7-explicit", "25*(25*y^2 - 160*x + 208)/(9*(25*y^2 + 160*x - 16)^3)"),
        ("ex9-explicit", "(y^2 + 2*x + 25)/(100*(y^2 - 2*x - 5)^3)"),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (id, reference) in closed {
        let p = explicit(id)?;
        let k = gauss_curvature(&p.metric);
        let reference = parse(reference);
        let mut worst = 0.0f64;
        for (x, y) in p.region.sample(100, &mut seeded_rng(2))? {
            let at = [("x", x), ("y", y)];
            let (got, want) = (k.evaluate(&at)?, reference.evaluate(&at)?);
            worst = worst.max((got - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        }
        ok &= worst <= 1e-9;
        parts.push(format!("{id} {worst:.1e}"));
    }
    Ok(outcome(ok, parts.join(", ")))
}

fn commuting_flows() -> Result<Outcome> {
    let mut rng = seeded_rng(3);
    let names = ["P", "R", "S", "T"];
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [3usize, 4] {
        let gens: Vec<Expr> = names[..n].iter().map(|s| Expr::var(s)).collect();
        let vars: Vec<String> = (0..n)
            .map(|k| format!("a{k}"))
            .chain(names[..n].iter().map(|s| s.to_string()))
            .collect();
        let v = build_v(n)?.v.compile(&vars)?;
        let w = build_w(n, &gens)?.w.compile(&vars)?;
        let mut worst = 0.0f64;
        for a in sample_a_points(n, 1000, &mut rng) {
            let mut vals = a.clone();
            vals.extend((0..n).map(|_| rng.random_range(-5.0..5.0)));
            worst = worst.max(commutator_norm(&v.eval(&vals)?, &w.eval(&vals)?)?);
        }
        ok &= worst <= 1e-12;
        parts.push(format!("n={n} {worst:.1e}"));
    }
    let w = build_w(3, &[Expr::zero(), Expr::one(), parse("3 - 2*a1")])?
        .w
        .compile(&["a0", "a1", "a2"])?;
    let v = build_v(3)?.v.compile(&["a0", "a1", "a2"])?;
    let mut self_gap = 0.0f64;
    for a in sample_a_points(3, 1000, &mut rng) {
        self_gap = self_gap.max((w.eval(&a)? - v.eval(&a)?).amax());
    }
    ok &= self_gap == 0.0;
    parts.push(format!("W(0,1,3-2a1)-V {self_gap:.1e}"));
    Ok(outcome(ok, parts.join(", ")))
}

fn symmetry_equations() -> Result<Outcome> {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in ["ex1-implicit", "ex4-implicit", "ex5-implicit"] {
        let p = implicit(id)?;
        let gens = p.generators.expect("entry carries generators");
        let pts = sample_a_points_positive(p.n, 500, &mut seeded_rng(4));
        let rep = symmetry_pde_residual(p.n, &gens, &pts)?;
        ok &= rep.evaluated == 500 && rep.max_relative <= 1e-10;
        parts.push(format!(
            "{id} {} eqs rel {:.1e} (abs {:.1e})",
            rep.per_equation_max.len(),
            rep.max_relative,
            rep.max
        ));
    }
    Ok(outcome(ok, parts.join(", ")))
}

fn hodograph_chain() -> Result<Outcome> {
    let opts = NewtonOptions::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for id in ["ex1-implicit", "ex6-implicit", "ex8-implicit"] {
        let p = implicit(id)?;
        let sol = solve_on_grid(&p.system, &p.grid, &p.anchor, &opts)?;
        let study = convergence_study(&p.system, &p.quasi_linear, &p.grid, &p.anchor, 3, &opts)?;
        ok &= sol.all_converged() && sol.max_residual() <= 1e-11 && study.min_order() >= 1.9;
        parts.push(format!(
            "{id} {}/{} nodes, order {:.2}",
            sol.converged_count(),
            p.grid.len(),
            study.min_order()
        ));
    }
    Ok(outcome(ok, parts.join(", ")))
}

fn n2_closed_form() -> Result<Outcome> {
    let cube = parse("s^3");
    let pts = sample_invariants(200, &mut seeded_rng(6));
    let diag = n2_diag_residual(&cube, &cube, &pts, 1e-5)?;
    let epd = epd_check(&parse("s^5 - 3*s^2 + 2*s"), &parse("2*s^4 + s^3 - 7"), &pts)?;
    let worst_epd = epd.epd.max(epd.symmetry).max(epd.cross);
    Ok(outcome(
        diag <= 1e-8 && worst_epd <= 1e-12 && epd.evaluated == pts.len(),
        format!("diagonal residual {diag:.1e}, EPD {worst_epd:.1e}"),
    ))
}

fn conservation() -> Result<Outcome> {
    let opts = IntegrateOptions {
        tol: 1e-10,
        ..Default::default()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (id, s0) in [
        ("ex2-explicit", [1.0, 1.0, 0.7, -0.3]),
        ("ex9-explicit", [0.0, 0.0, 1.0, 0.5]),
    ] {
        let p = explicit(id)?;
        let model = SymbolicModel::new(&p.metric, p.integrals.clone(), Some(p.region.clone()))?;
        let s0 = geoflow::geometry::PhasePoint::from_array(s0);
        let tr = integrate(&model, &s0, 1.0, &opts)?;
        let reversal = time_reversal_error(&model, &s0, 1.0, &opts)?;
        let drift = tr.max_relative_drift();
        ok &= tr.termination == Termination::Completed && drift <= 1e-8 && reversal <= 1e-6;
        parts.push(format!("{id} drift {drift:.1e}, reversal {reversal:.1e}"));
    }
    Ok(outcome(ok, parts.join(", ")))
}

fn linear_criterion() -> Result<Outcome> {
    let conformal = Metric2D::conformal(parse("exp(x)"), ["x", "y"]);
    let region = Region::new(["x", "y"], (-1.0, 1.0), (-1.0, 1.0), vec![], 0.1)?;
    let rep = criterion_determinants(&conformal, &region.sample(200, &mut seeded_rng(8))?, 1e-8)?;
    let det_max = rep
        .samples
        .iter()
        .fold(0.0f64, |m, s| m.max(s.det_rl.abs()).max(s.det_rdelta.abs()));
    let mut ok = det_max <= 1e-12 && rep.verdict == Verdict::ConsistentWithLinearIntegral;
    let mut parts = vec![format!("conformal exp(x) max det {det_max:.1e} {:?}", rep.verdict)];
    for id in ["ex2-explicit", "ex9-explicit"] {
        let p = explicit(id)?;
        let rep = criterion_determinants(&p.metric, &p.region.sample(200, &mut seeded_rng(8))?, 1e-8)?;
        ok &= rep.verdict == Verdict::Obstructed && rep.exceed_fraction >= 0.9;
        parts.push(format!(
            "{id} {:?} ({:.0}% above threshold)",
            rep.verdict,
            100.0 * rep.exceed_fraction
        ));
    }
    Ok(outcome(ok, parts.join(", ")))
}

fn property_suites() -> Result<Outcome> {
    let mut ok = true;
    let mut antisym = 0.0f64;
    let mut degree_law = true;
    let n3: BTreeMap<String, f64> = [("n".to_string(), 3.0)].into();
    for (id, params) in [
        ("ex2-explicit", BTreeMap::new()),
        ("ex7-explicit", BTreeMap::new()),
        ("ex9-explicit", BTreeMap::new()),
        ("liouville-n2", BTreeMap::new()),
        ("ex0-family", n3),
    ] {
        let p = explicit_with(id, &params)?;
        let h = hamiltonian(&p.metric)?;
        let pts = p.region.sample(200, &mut seeded_rng(9))?;
        for (_, f) in &p.integrals {
            let fh = poisson_bracket(f, &h)?;
            let hf = poisson_bracket(&h, f)?;
            degree_law &= fh.degree() == f.degree() + 1;
            let sum = fh.add(&hf)?;
            for &(x, y) in &pts {
                let inputs = f
                    .coefficient_values(x, y)?
                    .into_iter()
                    .chain(h.coefficient_values(x, y)?);
                let scale = 1.0 + inputs.map(f64::abs).sum::<f64>();
                for c in sum.coefficient_values(x, y)? {
                    antisym = antisym.max(c.abs() / scale);
                }
            }
        }
    }
    ok &= antisym <= 1e-12 && degree_law;

    let v = |i: usize, j: usize| Expr::var(&format!("r{i}")) + Expr::var(&format!("r{j}"));
    let sum_others = DiagonalSystem::new(&["r1", "r2", "r3"], vec![v(2, 3), v(1, 3), v(1, 2)])?;
    let mut rng = seeded_rng(10);
    let mut semi = 0.0f64;
    let mut semi_points = 0;
    while semi_points < 1000 {
        let r: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        if (r[0] - r[1]).abs() < 0.1 || (r[1] - r[2]).abs() < 0.1 || (r[0] - r[2]).abs() < 0.1 {
            continue;
        }
        semi = semi.max(sum_others.semi_hamiltonian_residual(&r)?);
        semi_points += 1;
    }
    ok &= semi <= 1e-12;

    let n2 = DiagonalSystem::n2();
    let pts: Vec<Vec<f64>> = (0..1000)
        .map(|_| vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
        .collect();
    let weak = n2.is_weakly_nonlinear() && n2.weakly_nonlinear_at(&pts, 1e-12)?;
    ok &= weak;
    Ok(outcome(
        ok,
        format!(
            "antisymmetry {antisym:.1e}, degree law {degree_law}, semi-Hamiltonian {semi:.1e}, weakly nonlinear {weak}"
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("bracket verification", brackets),
        ("curvature closed forms", curvature),
        ("commuting-flow algebra", commuting_flows),
        ("symmetry equations", symmetry_equations),
        ("hodograph chain", hodograph_chain),
        ("n=2 closed form", n2_closed_form),
        ("conservation along geodesics", conservation),
        ("linear-integral criterion", linear_criterion),
        ("property suites", property_suites),
    ];
    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        if !o.passed {
            failures += 1;
        }
        println!(
            "{} {}. {name}: {}",
            if o.passed { "PASS" } else { "FAIL" },
            k + 1,
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
