//! Built-in catalogue of integrable metrics and hodograph systems.
//!
//! Every entry is an [`ExampleSpec`], the same structure accepted from JSON
//! configuration files, so user problems and built-ins share one code path.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::criteria::Verdict;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flows::{build_v, QuasiLinearSystem};
use crate::geometry::{Metric2D, MomentumPoly};
use crate::hodograph::{Anchor, GridSpec, ImplicitSystem};
use crate::sampling::{Region, RegionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    ExplicitMetric,
    ImplicitHodograph,
    Family,
}

/// Serializable problem description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Degree of the polynomial first integral.
    pub degree: usize,
    /// Free constants appearing in the expressions, with their defaults.
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Body {
    Explicit(ExplicitSpec),
    Implicit(ImplicitSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub g11: String,
    pub g12: String,
    pub g22: String,
}

/// `coefficients[k]` multiplies `p1^(n-k) p2^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralSpec {
    pub name: String,
    pub coefficients: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitSpec {
    pub coords: [String; 2],
    pub metric: MetricSpec,
    #[serde(default)]
    pub integrals: Vec<IntegralSpec>,
    pub region: RegionSpec,
    /// Reference closed form of the Gauss curvature.
    #[serde(default)]
    pub curvature: Option<String>,
    #[serde(default)]
    pub expected_verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub constants: BTreeMap<String, f64>,
    pub anchor: Anchor,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicitSpec {
    /// Size of the quasi-linear system; the unknowns are `a0 .. a{n-1}`.
    pub n: usize,
    pub unknowns: Vec<String>,
    /// Each expression vanishes on the solution; may use `t` and `x`.
    pub equations: Vec<String>,
    /// Generators of the commuting flow, when the symmetry PDEs apply.
    #[serde(default)]
    pub generators: Option<Vec<String>>,
    pub anchor: Anchor,
    pub grid: GridSpec,
    /// Alternative constants with matching anchors; the first entry of the
    /// catalogue is always the default.
    #[serde(default)]
    pub presets: Vec<Preset>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleEntry {
    pub kind: Kind,
    /// Family parameters the entry was built with.
    pub params: BTreeMap<String, f64>,
    pub spec: ExampleSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExampleInfo {
    pub id: &'static str,
    pub kind: Kind,
    pub degree: usize,
    pub summary: &'static str,
}

/// Hydrated explicit problem.
#[derive(Debug, Clone)]
pub struct ExplicitProblem {
    pub metric: Metric2D,
    pub integrals: Vec<(String, MomentumPoly)>,
    pub region: Region,
    pub curvature: Option<Expr>,
    pub expected_verdict: Option<Verdict>,
}

/// Hydrated implicit problem.
#[derive(Debug, Clone)]
pub struct ImplicitProblem {
    pub n: usize,
    pub system: ImplicitSystem,
    /// Generators with constants bound.
    pub generators: Option<Vec<Expr>>,
    pub quasi_linear: QuasiLinearSystem,
    pub anchor: Anchor,
    pub grid: GridSpec,
}

#[derive(Debug, Clone)]
pub enum Problem {
    Explicit(ExplicitProblem),
    Implicit(ImplicitProblem),
}

const CATALOGUE: [(&str, Kind, &str); 12] = [
    (
        "ex0-family",
        Kind::Family,
        "Darboux-type metric with an integral of degree n + 1, n in {3, 4, 5}",
    ),
    (
        "ex1-implicit",
        Kind::ImplicitHodograph,
        "cubic integral from a linear generator P",
    ),
    (
        "ex2-explicit",
        Kind::ExplicitMetric,
        "explicit metric with a cubic integral",
    ),
    (
        "ex3-implicit",
        Kind::ImplicitHodograph,
        "cubic integral from a quadratic generator P",
    ),
    (
        "ex4-implicit",
        Kind::ImplicitHodograph,
        "cubic integral from separated generators",
    ),
    (
        "ex5-implicit",
        Kind::ImplicitHodograph,
        "quartic integral from a quadratic generator P",
    ),
    (
        "ex6-implicit",
        Kind::ImplicitHodograph,
        "quartic integral, transcendental equation for g",
    ),
    (
        "ex7-explicit",
        Kind::ExplicitMetric,
        "explicit metric with a quartic integral",
    ),
    (
        "ex8-implicit",
        Kind::ImplicitHodograph,
        "quintic integral, five implicit relations",
    ),
    (
        "ex9-explicit",
        Kind::ExplicitMetric,
        "explicit metric with a quintic integral",
    ),
    (
        "n1-family",
        Kind::Family,
        "g = f(t - x) with the linear integral p1 + p2",
    ),
    (
        "liouville-n2",
        Kind::Family,
        "Liouville metric (f(x) + g(y))(dx^2 + dy^2) with its quadratic integral",
    ),
];

/// All catalogue ids in a stable order.
pub fn list_examples() -> Vec<ExampleInfo> {
    CATALOGUE
        .iter()
        .map(|&(id, kind, summary)| ExampleInfo {
            id,
            kind,
            degree: default_degree(id),
            summary,
        })
        .collect()
}

fn default_degree(id: &str) -> usize {
    match id {
        "n1-family" => 1,
        "liouville-n2" => 2,
        "ex0-family" => 4,
        "ex5-implicit" | "ex6-implicit" | "ex7-explicit" => 4,
        "ex8-implicit" | "ex9-explicit" => 5,
        _ => 3,
    }
}

pub fn get_example(id: &str) -> Result<ExampleEntry> {
    get_example_with(id, &BTreeMap::new())
}

/// Builds an entry, passing family parameters (only `n` for `ex0-family`).
pub fn get_example_with(id: &str, params: &BTreeMap<String, f64>) -> Result<ExampleEntry> {
    let Some(&(_, kind, _)) = CATALOGUE.iter().find(|c| c.0 == id) else {
        return Err(Error::UnknownExample {
            id: id.to_string(),
            available: CATALOGUE.iter().map(|c| c.0).collect::<Vec<_>>().join(", "),
        });
    };
    let allowed: &[&str] = if id == "ex0-family" { &["n"] } else { &[] };
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::Config(format!("`{id}` has no parameter `{bad}`")));
    }
    let mut used = BTreeMap::new();
    let spec = match id {
        "ex0-family" => {
            let n = params.get("n").copied().unwrap_or(3.0);
            if n.fract() != 0.0 || !(3.0..=5.0).contains(&n) {
                return Err(Error::Config(format!("ex0-family needs n in {{3, 4, 5}}, got {n}")));
            }
            used.insert("n".to_string(), n);
            ex0_family(n as u32)?
        }
        "ex1-implicit" => ex1(),
        "ex2-explicit" => ex2(),
        "ex3-implicit" => ex3(),
        "ex4-implicit" => ex4(),
        "ex5-implicit" => ex5(),
        "ex6-implicit" => ex6()?,
        "ex7-explicit" => ex7(),
        "ex8-implicit" => ex8(),
        "ex9-explicit" => ex9()?,
        "n1-family" => n1_family(),
        "liouville-n2" => liouville(),
        _ => unreachable!(),
    };
    Ok(ExampleEntry {
        kind,
        params: used,
        spec,
    })
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn consts(items: &[(&str, f64)]) -> BTreeMap<String, f64> {
    items.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn parse(s: &str) -> Result<Expr> {
    Expr::parse(s).map_err(|e| Error::Config(format!("cannot parse `{s}`: {e}")))
}

fn xy() -> [String; 2] {
    ["x".into(), "y".into()]
}

fn region(u1: [f64; 2], u2: [f64; 2], loci: &[&str]) -> RegionSpec {
    RegionSpec {
        u1,
        u2,
        margin: 0.1,
        singular_loci: strings(loci),
    }
}

fn a_vars(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("a{k}")).collect()
}

fn grid(s: &str) -> GridSpec {
    s.parse().expect("catalogue grid")
}

#[allow(clippy::too_many_arguments)]
fn explicit(
    id: &str,
    description: &str,
    degree: usize,
    metric: [&str; 3],
    integral: Vec<String>,
    region: RegionSpec,
    curvature: Option<&str>,
    verdict: Option<Verdict>,
) -> ExampleSpec {
    ExampleSpec {
        id: id.into(),
        description: description.into(),
        degree,
        constants: BTreeMap::new(),
        body: Body::Explicit(ExplicitSpec {
            coords: xy(),
            metric: MetricSpec {
                g11: metric[0].into(),
                g12: metric[1].into(),
                g22: metric[2].into(),
            },
            integrals: vec![IntegralSpec {
                name: "F".into(),
                coefficients: integral,
            }],
            region,
            curvature: curvature.map(str::to_string),
            expected_verdict: verdict,
        }),
    }
}

/// `alpha * sum_k f_k p1^(n-k) p2^k`.
fn scaled(alpha: &str, f: &[&str]) -> Vec<String> {
    f.iter().map(|fk| format!("({alpha})*({fk})")).collect()
}

fn ex0_family(n: u32) -> Result<ExampleSpec> {
    let nf = n as f64;
    let c = [&"x", &"y"].map(|s| s.to_string());
    let coords = [c[0].as_str(), c[1].as_str()];
    let m = n + 1;
    let e = format!("exp({}*x)", 4.0 * (nf + 1.0) / nf);
    let g11 = format!("{e}*(2*{}*sin({m}*y)^2 + 8*cos({m}*y)^2)", nf * nf);
    let g12 = format!("{e}*{}*sin({}*y)", nf * (nf + 1.0) * (nf - 2.0), 2 * m);
    let g22 = format!(
        "{e}*{}*({} + {}*cos({}*y))",
        nf * nf,
        nf * nf - 2.0 * nf + 2.0,
        nf * (nf - 2.0),
        2 * m
    );
    let prefactor = parse(&format!(
        "exp({}*x)*({} + {}*cos({}*y))^({})",
        -(nf * nf + 3.0 * nf + 2.0) / nf,
        3.0 * nf - 2.0,
        nf - 2.0,
        2 * m,
        -(nf as i64) - 1
    ))?;
    let base = MomentumPoly::linear(
        coords,
        parse(&format!("{nf}*sin({m}*y)"))?,
        parse(&format!("2*cos({m}*y)"))?,
    );
    let tail = MomentumPoly::linear(
        coords,
        parse(&format!("{}*sin({}*y)", (nf - 2.0) * nf, 2 * m))?,
        parse(&format!("{}*cos({}*y) - {}", nf - 2.0, 2 * m, nf + 2.0))?,
    );
    let f = base.powi(n).mul(&tail).scale(&prefactor);
    Ok(explicit(
        "ex0-family",
        "Darboux-type metric; the integral has degree n + 1",
        (n + 1) as usize,
        [&g11, &g12, &g22],
        f.coeffs().iter().map(|e| e.to_string()).collect(),
        region([-0.5, 0.5], [-1.0, 1.0], &[]),
        None,
        None,
    ))
}

fn ex2() -> ExampleSpec {
    explicit(
        "ex2-explicit",
        "explicit metric with a cubic integral; no linear integral",
        3,
        ["4*x^2 + y^2", "3*y*(1 + 2*x)", "9*(1 + y^2)"],
        scaled(
            "(y^2 - 2*x)^(-3)",
            &[
                "27*(y^4 - 2*y^2*(1 + x) - 2)",
                "18*y*(4*x^2 - 2*y^2*(x - 1) + 2*x + 3)",
                "-6*(y^4 + 4*x^3 - y^2*(2*x^2 - 4*x - 3))",
                "2*y^3*(2*x + 1)",
            ],
        ),
        region([-2.0, 2.0], [-2.0, 2.0], &["y^2 - 2*x"]),
        Some("(y^2 + 2*x + 6)/(9*(y^2 - 2*x)^3)"),
        Some(Verdict::Obstructed),
    )
}

fn ex7() -> ExampleSpec {
    explicit(
        "ex7-explicit",
        "explicit metric with a quartic integral; no linear integral",
        4,
        ["64*(10*x - 1)^2 + 100*y^2", "240*y*(5*x - 1)", "9*(25*y^2 + 16)"],
        scaled(
            "(25*y^2 + 160*x - 16)^(-4)",
            &[
                "81*(125*(5*x - 6)*y^4 - 320*(5*x - 1)*y^2 + 256)",
                "-27*y*(1875*y^4 + 400*(100*x^2 - 80*x + 3)*y^2 - 1024*(50*x^2 - 10*x + 3))",
                "72*(125*(80*x - 3)*y^4 + 80*(1500*x^3 - 800*x^2 + 95*x + 12)*y^2 - 512*(10*x - 1)^2*x)",
                "24*y*(625*y^4 - 200*(700*x^2 - 100*x - 7)*y^2 - 128*(10*x - 1)^2*(100*x^2 - 20*x + 3))",
                "4096*(10*x - 1)^4*x + 2560*(10*x - 1)^2*(20*x - 3)*y^2 - 2000*(40*x - 9)*y^4",
            ],
        ),
        region([-1.0, 1.0], [-1.0, 1.0], &["25*y^2 + 160*x - 16"]),
        Some("25*(25*y^2 - 160*x + 208)/(9*(25*y^2 + 160*x - 16)^3)"),
        Some(Verdict::Obstructed),
    )
}

/// Expands `(3 y A^5 - 3 (2x+5) A^4 B - 24 y A^3 B^2 + 8 x A^2 B^3 + 8 y A B^4
/// + 8 B^5) / (y^2 - 2x - 5)^5` with `A = 10 y p1 - (2x+5) p2`,
/// `B = 10 p1 - y p2`.
pub fn ex9_integral() -> Result<MomentumPoly> {
    let c = ["x", "y"];
    let alpha = MomentumPoly::linear(c, parse("10*y")?, parse("-(2*x + 5)")?);
    let beta = MomentumPoly::linear(c, Expr::constant(10.0), parse("-y")?);
    let weights = ["3*y", "-3*(2*x + 5)", "-24*y", "8*x", "8*y", "8"];
    let mut total: Option<MomentumPoly> = None;
    for (j, w) in weights.iter().enumerate() {
        let term = alpha.powi(5 - j as u32).mul(&beta.powi(j as u32)).scale(&parse(w)?);
        total = Some(match total {
            None => term,
            Some(t) => t.add(&term)?,
        });
    }
    Ok(total.expect("six terms").scale(&parse("(y^2 - 2*x - 5)^(-5)")?))
}

fn ex9() -> Result<ExampleSpec> {
    let f = ex9_integral()?;
    Ok(explicit(
        "ex9-explicit",
        "explicit metric with a quintic integral; no linear integral",
        5,
        ["(2*x + 5)^2 + y^2", "20*y*(x + 3)", "100*(y^2 + 1)"],
        f.coeffs().iter().map(|e| e.to_string()).collect(),
        region([-2.0, 2.0], [-2.0, 2.0], &["y^2 - 2*x - 5"]),
        Some("(y^2 + 2*x + 25)/(100*(y^2 - 2*x - 5)^3)"),
        Some(Verdict::Obstructed),
    ))
}

fn n1_family() -> ExampleSpec {
    let mut spec = explicit(
        "n1-family",
        "semi-geodesic metric with g = f(t - x), f(s) = c + sin(s); F = p1 + p2",
        1,
        ["(c + sin(x - y))^2", "0", "1"],
        vec!["1".into(), "1".into()],
        region([-2.0, 2.0], [-2.0, 2.0], &[]),
        None,
        Some(Verdict::ConsistentWithLinearIntegral),
    );
    spec.constants = consts(&[("c", 2.0)]);
    spec
}

fn liouville() -> ExampleSpec {
    let mut spec = explicit(
        "liouville-n2",
        "(f(x) + g(y))(dx^2 + dy^2) with f = 1 + c1 x^2, g = 2 + c2 sin(y); F = (g p1^2 - f p2^2)/(f + g)",
        2,
        ["3 + c1*x^2 + c2*sin(y)", "0", "3 + c1*x^2 + c2*sin(y)"],
        vec![
            "(2 + c2*sin(y))/(3 + c1*x^2 + c2*sin(y))".into(),
            "0".into(),
            "-(1 + c1*x^2)/(3 + c1*x^2 + c2*sin(y))".into(),
        ],
        region([-2.0, 2.0], [-2.0, 2.0], &[]),
        None,
        None,
    );
    spec.constants = consts(&[("c1", 1.0), ("c2", 1.0)]);
    spec
}

#[allow(clippy::too_many_arguments)]
fn implicit(
    id: &str,
    description: &str,
    n: usize,
    equations: Vec<String>,
    generators: Option<Vec<String>>,
    constants: BTreeMap<String, f64>,
    anchor: Anchor,
    grid: GridSpec,
) -> ExampleSpec {
    ExampleSpec {
        id: id.into(),
        description: description.into(),
        degree: n,
        constants,
        body: Body::Implicit(ImplicitSpec {
            n,
            unknowns: a_vars(n),
            equations,
            generators,
            anchor,
            grid,
            presets: Vec::new(),
        }),
    }
}

fn anchor(t: f64, x: f64, a: &[f64]) -> Anchor {
    Anchor { t, x, a: a.to_vec() }
}

fn n3_relations(p: &str, r: &str, s: &str) -> Vec<String> {
    vec![p.into(), format!("{r} - t"), format!("{s} - (3 - 2*a1)*t + x")]
}

fn n4_relations(gens: &[String]) -> Vec<String> {
    vec![
        gens[0].clone(),
        gens[1].clone(),
        format!("{} - t", gens[2]),
        format!("{} - (4 - 2*a2)*t + x", gens[3]),
    ]
}

fn ex1() -> ExampleSpec {
    implicit(
        "ex1-implicit",
        "2 a0 + a2 = 0, k (a1 + 3 log a2) = t, 2x + k (2 a1^2 + 3 a2^2) = 0",
        3,
        strings(&["2*a0 + a2", "k*(a1 + 3*log(a2)) - t", "2*x + k*(2*a1^2 + 3*a2^2)"]),
        Some(strings(&[
            "k*(2*a0 + a2)",
            "k*(a1 + 3*log(a2))",
            "k*(3*a2^2/2 - a0*(2*a0 + a2) + (3 - a1)*a1 + (9 - 6*a1)*log(a2))",
        ])),
        consts(&[("k", 1.0)]),
        anchor(0.0, -1.5, &[-0.5, 0.0, 1.0]),
        grid("-0.1,0.1,-1.7,-1.5,21,21"),
    )
}

const EX3_P: &str = "k1*(5*a0^2 + a1^2 + a2^2 + 2*a0*a2) + k2*(2*a0 + a2) + 2*k1*a1 + k3";
const EX3_R: &str = "2*k1*a1*(a0 + a2) + 2*k1*(a0 + 5*a2) + k2*a1 + k4 + 3*k2*log(a2)";
const EX3_THIRD: &str = "k1*(-10*a0^3 + 5*a2^3 - 3*a0^2*a2 + 6*a0*a1^2 + 9*a1^2*a2) - 6*k2*a0^2 + 3*k2*a1^2 \
     + 9/2*k2*a2^2 - 18*k1*a0*a1 - 3*k2*a0*a2 + 12*k1*a1*a2 - 6*(3*k1 + k3)*a0 + 3*k3*a2 - 9*k4 + 3*k5";

fn ex3() -> ExampleSpec {
    let s = format!("({EX3_THIRD})/3 + (3 - 2*a1)*({EX3_R})");
    let linear = consts(&[("k1", 0.0), ("k2", 1.0), ("k3", 0.0), ("k4", 0.0), ("k5", 0.0)]);
    let quadratic = consts(&[("k1", 1.0), ("k2", 0.0), ("k3", 0.0), ("k4", 0.0), ("k5", 0.0)]);
    let mut spec = implicit(
        "ex3-implicit",
        "generators from a quadratic P; presets `linear` (k2 = 1) and `quadratic` (k1 = 1)",
        3,
        vec![EX3_P.into(), format!("{EX3_R} - t"), format!("{EX3_THIRD} + 3*x")],
        Some(vec![EX3_P.into(), EX3_R.into(), s]),
        linear.clone(),
        anchor(0.0, -1.5, &[-0.5, 0.0, 1.0]),
        grid("-0.1,0.1,-1.7,-1.5,21,21"),
    );
    if let Body::Implicit(imp) = &mut spec.body {
        imp.presets = vec![
            Preset {
                name: "linear".into(),
                constants: linear,
                anchor: imp.anchor.clone(),
                grid: imp.grid,
            },
            Preset {
                name: "quadratic".into(),
                constants: quadratic,
                anchor: anchor(8.0, 0.08, &[-0.4, -1.0, 1.0]),
                grid: grid("7.9,8,0,0.1,21,21"),
            },
        ];
    }
    spec
}

fn ex4() -> ExampleSpec {
    let p = "k1*(k2*(a1 - 3/2)/a2^3 - k4/a2 + k3)";
    let r = "k5 + (4*k1*k4*(2*a1 - 3)*a2^2 + k1*k2*(8*a0*a2 - 8*a2^2 - 3*(3 - 2*a1)^2))/(8*a2^4)";
    let s = "k1*k4*log(a2) - 2*k5*a1 + k1*k3*(a2 - 2*a0) + k6 + k1/(8*a2^4)*(k2*(2*a2^2*(16*a1 - 27) \
             + 20*a0*a2*(3 - 2*a1) + 3*(2*a1 - 3)^3) + 4*k4*a2^2*(6*a0*a2 - 4*a1*(a1 - 3) - 9))";
    implicit(
        "ex4-implicit",
        "separated generator P(a0) Q(a1, a2)",
        3,
        n3_relations(p, r, s),
        Some(strings(&[p, r, s])),
        consts(&[
            ("k1", 1.0),
            ("k2", 1.0),
            ("k3", 0.0),
            ("k4", 0.0),
            ("k5", 0.0),
            ("k6", 0.0),
        ]),
        anchor(-0.5, 0.75, &[0.5, 1.5, 1.0]),
        grid("-0.6,-0.4,0.65,0.85,21,21"),
    )
}

/// `(P, R, S, T)` with free constants `n1 .. n6`.
fn ex5_generators() -> Vec<String> {
    let gamma = "60*n4 - 64*a0*(8*a0^2 + 3*a1^2 - 6*a0)*n6 - 40*a2^3*n6 - 6*a2^2*(15*n2 + 8*(2*a0 + 5)*n6) \
         - 24*a2*((8*a0^2 + 4*a1^2 + 5*a1*a3 - 40)*n6 + 5*(a0 - 3)*n2 + 5*n3) + 60*a2*n5 - 60*a1^2*n2 \
         - 6*a1*a3*(15*n2 + 8*(2*a0 + 5)*n6) - 15*(16*a0^2*n2 - 3*a3^2*(5*n2 + 32*n6) + 8*a0*n5)";
    vec![
        "((64*a0^2 + 8*a1^2 + 4*a2^2 + 5*a3^2 + 16*a0*a2 + 8*a1*a3)*n6 - 32*a0*n6 + 5*(4*a0 + a2)*n2 + 5*n5)/5".into(),
        "(8/5*(2*a0 + a2)*n6 + n2)*a1 + ((8/5*a0 + 2*a2 + 4)*n6 + 3/2*n2)*a3 + n1/a3".into(),
        "4/5*(2*a0^2 + a1^2 + 5/4*a2^2 + 35/8*a3^2 + 2*a0*a2 + 5/2*a1*a3)*n6 + a0*n2 + 4*a2*n6 + 3/2*a2*n2 \
         + (6*n2 + n5 + 16*n6)*log(a3) + (2 - a2)/a3^2*n1 + n3"
            .into(),
        format!("(2*(a2 - 2)^2 - 3*a1*a3)/a3^2*n1 - (n1 + 2*(a2 - 2)*(6*n2 + n5 + 16*n6))*log(a3) + ({gamma})/60"),
    ]
}

fn ex5() -> ExampleSpec {
    let gens = ex5_generators();
    implicit(
        "ex5-implicit",
        "generators from a quadratic P for n = 4",
        4,
        n4_relations(&gens),
        Some(gens),
        consts(&[
            ("n1", 0.0),
            ("n2", 1.0),
            ("n3", 0.0),
            ("n4", 0.0),
            ("n5", -6.0),
            ("n6", 0.0),
        ]),
        anchor(4.0, -1.75, &[1.0, -1.5, 2.0, 1.0]),
        grid("3.9,4.1,-1.85,-1.65,21,21"),
    )
}

fn ex6() -> Result<ExampleSpec> {
    let mut sub = BTreeMap::new();
    for i in 1..=6 {
        let with = if i == 2 { Expr::var("k") } else { Expr::zero() };
        sub.insert(format!("n{i}"), with);
    }
    let gens = ex5_generators()
        .iter()
        .map(|g| Ok(parse(g)?.substitute_all(&sub).to_string()))
        .collect::<Result<Vec<_>>>()?;
    Ok(implicit(
        "ex6-implicit",
        "a0 = (6k log a3 - t)/(5k), a1 = -3 a3/2, a2 = -4 a0, transcendental equation for a3",
        4,
        strings(&[
            "a0 - (6*k*log(a3) - t)/(5*k)",
            "a1 + 3*a3/2",
            "a2 + 4*a0",
            "75*k^2*a3^2 + 96*k*(6*k*log(a3) - 2*t - k)*log(a3) + 16*t^2 + 16*k*t + 20*k*x",
        ]),
        Some(gens),
        consts(&[("k", 1.0)]),
        anchor(0.0, -3.75, &[0.0, -1.5, 0.0, 1.0]),
        grid("-0.2,0,-4,-3.8,21,21"),
    ))
}

fn ex8() -> ExampleSpec {
    let x_anchor = -5745.0 / 224.0;
    implicit(
        "ex8-implicit",
        "five relations, linear in a0 .. a3 up to quadratic terms, log in a4",
        5,
        strings(&[
            "24*a0 + 4*a2 + 3*a4",
            "8*a1 + 6*a3 + 15",
            "8*a0 + 6*a2 + 15*a4",
            "6*a1 + 15*a3 + 105*log(a4) - 8*t/k",
            "96*a0^2 + 16*a1^2 + 12*a2^2 - 30*a3^2 - 105*a4^2 + 32*a0*a2 + 12*a0*a4 + 30*a2*a4 + 120*a1 - 60*a3 - 16*x/k",
        ]),
        None,
        consts(&[("k", 1.0)]),
        anchor(0.0, x_anchor, &[0.375, -75.0 / 28.0, -3.0, 15.0 / 14.0, 1.0]),
        GridSpec {
            t0: -0.1,
            t1: 0.1,
            x0: x_anchor - 0.1,
            x1: x_anchor + 0.1,
            nt: 21,
            nx: 21,
        },
    )
}

impl ExampleSpec {
    /// Reads a spec from JSON text.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid problem file: {e}")))
    }

    pub fn preset_names(&self) -> Vec<String> {
        match &self.body {
            Body::Implicit(imp) => imp.presets.iter().map(|p| p.name.clone()).collect(),
            Body::Explicit(_) => Vec::new(),
        }
    }

    /// Replaces constants, anchor and grid by the named preset.
    pub fn with_preset(mut self, name: &str) -> Result<Self> {
        let Body::Implicit(imp) = &mut self.body else {
            return Err(Error::Config(format!("`{}` has no presets", self.id)));
        };
        let Some(p) = imp.presets.iter().find(|p| p.name == name).cloned() else {
            return Err(Error::Config(format!(
                "`{}` has no preset `{name}`; available: {}",
                self.id,
                imp.presets
                    .iter()
                    .map(|p| p.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )));
        };
        self.constants = p.constants;
        imp.anchor = p.anchor;
        imp.grid = p.grid;
        Ok(self)
    }

    /// Default constants with `overrides` applied. Unknown names are rejected.
    pub fn resolved_constants(&self, overrides: &BTreeMap<String, f64>) -> Result<BTreeMap<String, f64>> {
        let mut c = self.constants.clone();
        for (k, v) in overrides {
            match c.get_mut(k) {
                Some(slot) => *slot = *v,
                None => {
                    return Err(Error::Config(format!(
                        "`{}` has no constant `{k}`; available: {}",
                        self.id,
                        if self.constants.is_empty() {
                            "(none)".to_string()
                        } else {
                            self.constants.keys().cloned().collect::<Vec<_>>().join(", ")
                        }
                    )))
                }
            }
        }
        Ok(c)
    }

    pub fn hydrate(&self, overrides: &BTreeMap<String, f64>) -> Result<Problem> {
        let c = self.resolved_constants(overrides)?;
        let bound = |s: &str| -> Result<Expr> { Ok(parse(s)?.bind(&c)) };
        match &self.body {
            Body::Explicit(e) => {
                let coords = [e.coords[0].as_str(), e.coords[1].as_str()];
                let metric = Metric2D::new(
                    bound(&e.metric.g11)?,
                    bound(&e.metric.g12)?,
                    bound(&e.metric.g22)?,
                    coords,
                );
                let integrals = e
                    .integrals
                    .iter()
                    .map(|i| {
                        let coeffs = i.coefficients.iter().map(|s| bound(s)).collect::<Result<Vec<_>>>()?;
                        Ok((i.name.clone(), MomentumPoly::new(coords, coeffs)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (name, f) in &integrals {
                    check_free(f.coeffs(), coords, name)?;
                }
                check_free(
                    &[metric.g11.clone(), metric.g12.clone(), metric.g22.clone()],
                    coords,
                    "metric",
                )?;
                Ok(Problem::Explicit(ExplicitProblem {
                    region: Region::from_spec(coords, &e.region)?,
                    curvature: e.curvature.as_deref().map(bound).transpose()?,
                    expected_verdict: e.expected_verdict,
                    metric,
                    integrals,
                }))
            }
            Body::Implicit(imp) => {
                if imp.unknowns.len() != imp.n || imp.anchor.a.len() != imp.n {
                    return Err(Error::Config(format!(
                        "`{}`: n = {} needs {0} unknowns and anchor values",
                        self.id, imp.n
                    )));
                }
                let equations = imp.equations.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
                let system = ImplicitSystem::new(equations, imp.unknowns.clone(), c.clone())?;
                let generators = imp
                    .generators
                    .as_ref()
                    .map(|g| g.iter().map(|s| bound(s)).collect::<Result<Vec<_>>>())
                    .transpose()?;
                imp.grid.validate().map_err(|e| Error::Config(e.to_string()))?;
                Ok(Problem::Implicit(ImplicitProblem {
                    n: imp.n,
                    system,
                    generators,
                    quasi_linear: build_v(imp.n)?,
                    anchor: imp.anchor.clone(),
                    grid: imp.grid,
                }))
            }
        }
    }
}

fn check_free(exprs: &[Expr], coords: [&str; 2], what: &str) -> Result<()> {
    for e in exprs {
        if let Some(v) = e.variables().into_iter().find(|v| v != coords[0] && v != coords[1]) {
            return Err(Error::Config(format!(
                "{what}: `{v}` is neither a coordinate nor a constant"
            )));
        }
    }
    Ok(())
}

impl ExampleEntry {
    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn hydrate(&self) -> Result<Problem> {
        self.spec.hydrate(&BTreeMap::new())
    }
}
