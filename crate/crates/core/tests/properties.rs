use geoflow::criteria::{criterion_determinants, Verdict};
use geoflow::flows::{build_v, build_w, commutator_residual, eigenvector_sharing_defect, DiagonalSystem};
use geoflow::geodesic::{integrate, time_reversal_error, IntegrateOptions, SymbolicModel, Termination};
use geoflow::geometry::{hamiltonian, poisson_bracket, Metric2D, MomentumPoly, PhasePoint};
use geoflow::registry::{get_example, list_examples, ExplicitProblem, Kind, Problem};
use geoflow::sampling::{sample_a_points, seeded_rng};
use geoflow::Expr;
use proptest::prelude::*;

const XY: [&str; 2] = ["x", "y"];

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        Just(Expr::var("x")),
        Just(Expr::var("y")),
        (-2.0..2.0f64).prop_map(Expr::constant),
    ]
}

/// Smooth expressions in `x`, `y`, finite on all of R^2.
fn smooth_expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / (2.0 + Expr::sin(b))),
            inner.clone().prop_map(Expr::sin),
            inner.clone().prop_map(Expr::cos),
            inner.clone().prop_map(|a| Expr::exp(0.5 * Expr::sin(a))),
            inner.clone().prop_map(|a| Expr::log(3.0 + Expr::cos(a))),
            inner.clone().prop_map(|a| Expr::sqrt(1.5 + Expr::sin(a))),
            (inner, 0i64..4).prop_map(|(a, k)| Expr::powi(a, k)),
        ]
    })
}

fn eval_xy(e: &Expr, x: f64, y: f64) -> f64 {
    e.evaluate(&[("x", x), ("y", y)]).unwrap()
}

/// Positive definite metric with smooth components.
fn metric() -> impl Strategy<Value = Metric2D> {
    (smooth_expr(), smooth_expr(), smooth_expr())
        .prop_map(|(a, b, c)| Metric2D::new(3.0 + Expr::sin(a), 0.5 * Expr::sin(b), 3.0 + Expr::cos(c), XY))
}

fn momentum_poly() -> impl Strategy<Value = MomentumPoly> {
    (1usize..5)
        .prop_flat_map(|n| proptest::collection::vec(smooth_expr(), n + 1))
        .prop_map(|c| MomentumPoly::new(XY, c).unwrap())
}

fn point() -> impl Strategy<Value = (f64, f64)> {
    (-1.5..1.5f64, -1.5..1.5f64)
}

fn explicit(id: &str) -> ExplicitProblem {
    match get_example(id).unwrap().hydrate().unwrap() {
        Problem::Explicit(p) => p,
        Problem::Implicit(_) => panic!("{id} is implicit"),
    }
}

fn model(p: &ExplicitProblem) -> SymbolicModel {
    SymbolicModel::new(&p.metric, p.integrals.clone(), Some(p.region.clone())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn derivative_matches_central_difference(e in smooth_expr(), (x, y) in point(), wrt_x in any::<bool>()) {
        let h = 1e-6;
        let var = if wrt_x { "x" } else { "y" };
        let exact = eval_xy(&e.differentiate(var), x, y);
        let (fp, fm) = if wrt_x {
            (eval_xy(&e, x + h, y), eval_xy(&e, x - h, y))
        } else {
            (eval_xy(&e, x, y + h), eval_xy(&e, x, y - h))
        };
        let fd = (fp - fm) / (2.0 * h);
        prop_assert!((exact - fd).abs() <= 1e-5 * (1.0 + exact.abs()), "{e}: exact {exact}, fd {fd}");
    }

    #[test]
    fn evaluation_is_deterministic(e in smooth_expr(), (x, y) in point()) {
        prop_assert_eq!(eval_xy(&e, x, y).to_bits(), eval_xy(&e.clone(), x, y).to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn differentiation_is_linear(a in smooth_expr(), b in smooth_expr(), (x, y) in point()) {
        let lhs = eval_xy(&(&a + &b).differentiate("x"), x, y);
        let rhs = eval_xy(&(a.differentiate("x") + b.differentiate("x")), x, y);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn bracket_is_antisymmetric(m in metric(), f in momentum_poly(), (x, y) in point()) {
        let h = hamiltonian(&m).unwrap();
        let fh = poisson_bracket(&f, &h).unwrap();
        let hf = poisson_bracket(&h, &f).unwrap();
        prop_assert_eq!(fh.degree(), hf.degree());
        let sum = fh.add(&hf).unwrap();
        let scale = 1.0 + fh.coefficient_values(x, y).unwrap().iter().map(|v| v.abs()).sum::<f64>();
        for c in sum.coefficient_values(x, y).unwrap() {
            prop_assert!(c.abs() <= 1e-12 * scale, "{c}");
        }
    }

    #[test]
    fn bracket_raises_degree_by_one(m in metric(), f in momentum_poly()) {
        let h = hamiltonian(&m).unwrap();
        prop_assert_eq!(poisson_bracket(&f, &h).unwrap().degree(), f.degree() + 1);
    }

    #[test]
    fn ansatz_commutes_with_v(
        n in 3usize..5,
        a in proptest::collection::vec(-2.0..2.0f64, 4),
        mag in 0.2..2.0f64,
        neg in any::<bool>(),
        gens in proptest::collection::vec(-5.0..5.0f64, 4),
    ) {
        let names = ["P", "R", "S", "T"];
        let g: Vec<Expr> = names[..n].iter().map(|s| Expr::var(s)).collect();
        let w = build_w(n, &g).unwrap().w;
        let v = build_v(n).unwrap().v;
        let mut at: Vec<(String, f64)> = (0..n).map(|k| (format!("a{k}"), a[k])).collect();
        at[n - 1].1 = if neg { -mag } else { mag };
        at.extend(names[..n].iter().zip(&gens).map(|(s, &val)| (s.to_string(), val)));
        let at: Vec<(&str, f64)> = at.iter().map(|(s, val)| (s.as_str(), *val)).collect();
        prop_assert!(commutator_residual(&v, &w, at.as_slice()).unwrap() <= 1e-12);
    }

    #[test]
    fn w_family_contains_v((a0, a1, a2) in (-2.0..2.0f64, -2.0..2.0f64, 0.2..2.0f64)) {
        let s = 3.0 - 2.0 * Expr::var("a1");
        let w = build_w(3, &[Expr::zero(), Expr::one(), s]).unwrap().w;
        let v = build_v(3).unwrap().v;
        let at = [("a0", a0), ("a1", a1), ("a2", a2)];
        prop_assert_eq!(w.evaluate(&at).unwrap(), v.evaluate(&at).unwrap());
    }

    #[test]
    fn sum_of_others_is_semi_hamiltonian(r in proptest::collection::vec(-3.0..3.0f64, 3)) {
        prop_assume!((r[0] - r[1]).abs() > 0.1 && (r[1] - r[2]).abs() > 0.1 && (r[0] - r[2]).abs() > 0.1);
        let v = |i: usize, j: usize| Expr::var(&format!("r{}", i + 1)) + Expr::var(&format!("r{}", j + 1));
        let d = DiagonalSystem::new(&["r1", "r2", "r3"], vec![v(1, 2), v(0, 2), v(0, 1)]).unwrap();
        prop_assert!(d.semi_hamiltonian_residual(&r).unwrap() <= 1e-12);
    }

    #[test]
    fn n2_diagonal_system_is_weakly_nonlinear(pts in proptest::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..20)) {
        let d = DiagonalSystem::n2();
        prop_assert!(d.is_weakly_nonlinear());
        let pts: Vec<Vec<f64>> = pts.into_iter().map(|(a, b)| vec![a, b]).collect();
        prop_assert!(d.weakly_nonlinear_at(&pts, 1e-12).unwrap());
    }
}

#[test]
fn commuting_matrices_share_eigenvectors() {
    let mut rng = seeded_rng(21);
    let v = build_v(3).unwrap().v;
    let gens: Vec<Expr> = ["P", "R", "S"].iter().map(|s| Expr::var(s)).collect();
    let w = build_w(3, &gens).unwrap().w;
    let mut checked = 0;
    for a in sample_a_points(3, 100, &mut rng) {
        let at = [
            ("a0", a[0]),
            ("a1", a[1]),
            ("a2", a[2]),
            ("P", 0.3 * a[0]),
            ("R", 1.7),
            ("S", -0.4 + a[1]),
        ];
        let vm = v.evaluate(&at).unwrap();
        let wm = w.evaluate(&at).unwrap();
        if let Some(defect) = eigenvector_sharing_defect(&vm, &wm) {
            assert!(defect <= 1e-9, "defect {defect} at {a:?}");
            checked += 1;
        }
    }
    assert!(checked >= 50, "only {checked} points had a simple real eigenvalue");
}

#[test]
fn perturbed_ansatz_stops_commuting() {
    let gens: Vec<Expr> = ["P", "R", "S"].iter().map(|s| Expr::var(s)).collect();
    let mut w = build_w(3, &gens).unwrap().w;
    w.set(1, 0, w.get(1, 0) + 1.0);
    let v = build_v(3).unwrap().v;
    let at = [
        ("a0", 0.3),
        ("a1", -1.2),
        ("a2", 2.0),
        ("P", 0.7),
        ("R", -2.5),
        ("S", 1.1),
    ];
    assert!(commutator_residual(&v, &w, &at).unwrap() >= 0.1);
}

#[test]
fn every_implicit_anchor_solves_its_system() {
    for info in list_examples()
        .into_iter()
        .filter(|i| i.kind == Kind::ImplicitHodograph)
    {
        let spec = get_example(info.id).unwrap().spec;
        for name in spec.preset_names() {
            let Problem::Implicit(p) = spec
                .clone()
                .with_preset(&name)
                .unwrap()
                .hydrate(&Default::default())
                .unwrap()
            else {
                unreachable!()
            };
            let r = p.system.residual(p.anchor.t, p.anchor.x, &p.anchor.a).unwrap();
            let max = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(max <= 1e-11, "{} ({name}): {max}", info.id);
        }
    }
}

fn affine_verdicts(p: &ExplicitProblem, a: [[f64; 2]; 2], b: [f64; 2]) -> (Verdict, Verdict) {
    let pts = p.region.sample(60, &mut seeded_rng(4)).unwrap();
    let original = criterion_determinants(&p.metric, &pts, 1e-8).unwrap();
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let moved: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(u, v)| {
            let (du, dv) = (u - b[0], v - b[1]);
            ((a[1][1] * du - a[0][1] * dv) / det, (a[0][0] * dv - a[1][0] * du) / det)
        })
        .collect();
    let pulled = p.metric.affine_pullback(a, b, ["s", "w"]);
    let changed = criterion_determinants(&pulled, &moved, 1e-8).unwrap();
    (original.verdict, changed.verdict)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn criterion_verdict_survives_affine_change(
        m in proptest::array::uniform4(-1.0..1.0f64),
        b in proptest::array::uniform2(-1.0..1.0f64),
    ) {
        let a = [[1.0 + 0.5 * m[0], 0.5 * m[1]], [0.5 * m[2], 1.0 + 0.5 * m[3]]];
        for id in ["ex2-explicit", "ex9-explicit"] {
            let (before, after) = affine_verdicts(&explicit(id), a, b);
            prop_assert_eq!(before, Verdict::Obstructed);
            prop_assert_eq!(after, before);
        }
        let conformal = explicit("n1-family");
        let (before, after) = affine_verdicts(&conformal, a, b);
        prop_assert_eq!(before, Verdict::ConsistentWithLinearIntegral);
        prop_assert_eq!(after, before);
    }

    #[test]
    fn time_reversal_returns_to_start((p1, p2) in (-1.0..1.0f64, -1.0..1.0f64)) {
        prop_assume!(p1.hypot(p2) > 0.1);
        let p = explicit("ex2-explicit");
        let s0 = PhasePoint::new(1.0, 1.0, p1, p2);
        let m = model(&p);
        let fwd = integrate(&m, &s0, 1.0, &IntegrateOptions::default()).unwrap();
        prop_assume!(fwd.termination == Termination::Completed);
        let err = time_reversal_error(&m, &s0, 1.0, &IntegrateOptions::default()).unwrap();
        prop_assert!(err <= 1e-6, "{err}");
    }
}

#[test]
fn integrals_drift_within_hundred_tolerances() {
    let cases = [
        ("ex2-explicit", PhasePoint::new(1.0, 1.0, 0.7, -0.3)),
        ("ex7-explicit", PhasePoint::new(-0.5, 0.0, 0.4, 0.2)),
        ("ex9-explicit", PhasePoint::new(0.0, 0.0, 1.0, 0.5)),
        ("liouville-n2", PhasePoint::new(0.2, 0.3, 0.6, -0.8)),
    ];
    for tol in [1e-8, 1e-10] {
        let opts = IntegrateOptions {
            tol,
            ..Default::default()
        };
        for (id, s0) in cases {
            let tr = integrate(&model(&explicit(id)), &s0, 1.0, &opts).unwrap();
            assert_eq!(tr.termination, Termination::Completed, "{id}");
            for d in &tr.drift {
                assert!(d.max_rel <= 100.0 * tol, "{id} {}: {} at tol {tol}", d.name, d.max_rel);
            }
        }
    }
}

#[test]
fn halving_tolerance_does_not_double_drift() {
    let p = explicit("ex2-explicit");
    let m = model(&p);
    let s0 = PhasePoint::new(1.0, 1.0, 0.7, -0.3);
    let drift = |tol: f64| {
        let opts = IntegrateOptions {
            tol,
            ..Default::default()
        };
        integrate(&m, &s0, 1.0, &opts).unwrap().max_relative_drift()
    };
    let mut tol = 1e-6;
    while tol >= 1e-10 {
        let (coarse, fine) = (drift(tol), drift(tol / 2.0));
        assert!(
            fine <= 2.0 * coarse.max(f64::EPSILON * 16.0),
            "tol {tol}: {coarse} -> {fine}"
        );
        tol /= 4.0;
    }
}
