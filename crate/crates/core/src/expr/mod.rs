//! Scalar expression trees over named variables.
//!
//! Expressions are immutable, reference-counted DAGs. The smart constructors
//! perform constant folding, flatten nested sums and products, and drop
//! neutral elements; nothing else is rewritten. Differentiation is exact and
//! memoized per call so shared subtrees stay shared.
//!
//! ```
//! use geoflow::expr::Expr;
//!
//! let e = Expr::parse("x^2*y").unwrap();
//! let d = e.differentiate("x");
//! assert_eq!(d.evaluate(&[("x", 3.0), ("y", 2.0)]).unwrap(), 12.0);
//! ```

mod format;
mod parse;
mod tape;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

pub use num_rational::Rational64 as Rational;
pub use tape::Tape;

use crate::error::{EvalError, ParseError};

/// Node kinds of an expression tree.
#[derive(Debug)]
pub enum Node {
    Const(f64),
    Var(Arc<str>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    Quotient(Expr, Expr),
    /// Power with an exact rational exponent.
    Pow(Expr, Rational),
    Log(Expr),
    Exp(Expr),
    Sin(Expr),
    Cos(Expr),
}

#[derive(Clone)]
pub struct Expr(Arc<Node>);

/// Anything that can supply variable values by name.
pub trait Assignment {
    fn value(&self, name: &str) -> Option<f64>;
}

impl Assignment for BTreeMap<String, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Assignment for HashMap<String, f64> {
    fn value(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Assignment for [(&str, f64)] {
    fn value(&self, name: &str) -> Option<f64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Assignment for [(&str, f64); N] {
    fn value(&self, name: &str) -> Option<f64> {
        self.as_slice().value(name)
    }
}

impl Expr {
    fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr_id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn constant(value: f64) -> Self {
        Self::from_node(Node::Const(value))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(name: &str) -> Self {
        Self::from_node(Node::Var(Arc::from(name)))
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_constant() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_constant() == Some(1.0)
    }

    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Self {
        let mut flat = Vec::new();
        let mut constant = 0.0;
        for t in terms {
            match t.node() {
                Node::Const(c) => constant += c,
                Node::Sum(inner) => {
                    for s in inner {
                        match s.node() {
                            Node::Const(c) => constant += c,
                            _ => flat.push(s.clone()),
                        }
                    }
                }
                _ => flat.push(t),
            }
        }
        if constant != 0.0 {
            flat.push(Self::constant(constant));
        }
        match flat.len() {
            0 => Self::zero(),
            1 => flat.pop().unwrap(),
            _ => Self::from_node(Node::Sum(flat)),
        }
    }

    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Self {
        let mut flat = Vec::new();
        let mut coeff = 1.0;
        for f in factors {
            match f.node() {
                Node::Const(c) => coeff *= c,
                Node::Product(inner) => {
                    for g in inner {
                        match g.node() {
                            Node::Const(c) => coeff *= c,
                            _ => flat.push(g.clone()),
                        }
                    }
                }
                _ => flat.push(f),
            }
        }
        if coeff == 0.0 {
            return Self::zero();
        }
        if flat.is_empty() {
            return Self::constant(coeff);
        }
        if coeff != 1.0 {
            flat.insert(0, Self::constant(coeff));
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Self::from_node(Node::Product(flat))
        }
    }

    pub fn quotient(num: Expr, den: Expr) -> Self {
        if den.is_one() {
            return num;
        }
        if num.is_zero() {
            return num;
        }
        if let (Some(a), Some(b)) = (num.as_constant(), den.as_constant()) {
            if b != 0.0 {
                return Self::constant(a / b);
            }
        }
        Self::from_node(Node::Quotient(num, den))
    }

    pub fn pow(base: Expr, exponent: Rational) -> Self {
        if *exponent.numer() == 0 {
            return Self::one();
        }
        if exponent == Rational::from_integer(1) || base.is_one() {
            return base;
        }
        if let Some(b) = base.as_constant() {
            if let Ok(v) = tape::pow_rational(b, exponent) {
                return Self::constant(v);
            }
        }
        Self::from_node(Node::Pow(base, exponent))
    }

    pub fn powi(base: Expr, exponent: i64) -> Self {
        Self::pow(base, Rational::from_integer(exponent))
    }

    pub fn sqrt(base: Expr) -> Self {
        Self::pow(base, Rational::new(1, 2))
    }

    pub fn log(arg: Expr) -> Self {
        match arg.as_constant() {
            Some(c) if c > 0.0 => Self::constant(c.ln()),
            _ => Self::from_node(Node::Log(arg)),
        }
    }

    pub fn exp(arg: Expr) -> Self {
        match arg.as_constant() {
            Some(c) => Self::constant(c.exp()),
            None => Self::from_node(Node::Exp(arg)),
        }
    }

    pub fn sin(arg: Expr) -> Self {
        match arg.as_constant() {
            Some(c) => Self::constant(c.sin()),
            None => Self::from_node(Node::Sin(arg)),
        }
    }

    pub fn cos(arg: Expr) -> Self {
        match arg.as_constant() {
            Some(c) => Self::constant(c.cos()),
            None => Self::from_node(Node::Cos(arg)),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        parse::parse(text)
    }

    /// Exact partial derivative with respect to `var`.
    pub fn differentiate(&self, var: &str) -> Expr {
        let mut memo = HashMap::new();
        diff_rec(self, var, &mut memo)
    }

    /// Replaces every occurrence of `var` by `with`.
    pub fn substitute(&self, var: &str, with: &Expr) -> Expr {
        let mut map = BTreeMap::new();
        map.insert(var.to_string(), with.clone());
        self.substitute_all(&map)
    }

    pub fn substitute_all(&self, map: &BTreeMap<String, Expr>) -> Expr {
        let mut memo = HashMap::new();
        subst_rec(self, map, &mut memo)
    }

    /// Substitutes numeric values for the named variables.
    pub fn bind(&self, values: &BTreeMap<String, f64>) -> Expr {
        let map = values.iter().map(|(k, v)| (k.clone(), Expr::constant(*v))).collect();
        self.substitute_all(&map)
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut seen = std::collections::HashSet::new();
        collect_vars(self, &mut out, &mut seen);
        out
    }

    pub fn depends_on(&self, var: &str) -> bool {
        self.variables().contains(var)
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        count_nodes(self, &mut seen);
        seen.len()
    }

    pub fn evaluate<A: Assignment + ?Sized>(&self, assignment: &A) -> Result<f64, EvalError> {
        let names: Vec<String> = self.variables().into_iter().collect();
        let mut values = Vec::with_capacity(names.len());
        for n in &names {
            values.push(assignment.value(n).ok_or_else(|| EvalError::Unassigned(n.clone()))?);
        }
        let tape = Tape::compile(std::slice::from_ref(self), &names)?;
        Ok(tape.eval(&values)?[0])
    }

    fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Var(_) => Vec::new(),
            Node::Sum(v) | Node::Product(v) => v.iter().collect(),
            Node::Quotient(a, b) => vec![a, b],
            Node::Pow(a, _) | Node::Log(a) | Node::Exp(a) | Node::Sin(a) | Node::Cos(a) => {
                vec![a]
            }
        }
    }
}

fn collect_vars(e: &Expr, out: &mut BTreeSet<String>, seen: &mut std::collections::HashSet<usize>) {
    if !seen.insert(e.ptr_id()) {
        return;
    }
    if let Node::Var(n) = e.node() {
        out.insert(n.to_string());
    }
    for c in e.children() {
        collect_vars(c, out, seen);
    }
}

fn count_nodes(e: &Expr, seen: &mut std::collections::HashSet<usize>) {
    if !seen.insert(e.ptr_id()) {
        return;
    }
    for c in e.children() {
        count_nodes(c, seen);
    }
}

fn diff_rec(e: &Expr, var: &str, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(d) = memo.get(&e.ptr_id()) {
        return d.clone();
    }
    let d = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Var(name) => {
            if &**name == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Sum(terms) => Expr::sum(terms.iter().map(|t| diff_rec(t, var, memo))),
        Node::Product(factors) => {
            let mut terms = Vec::new();
            for (i, f) in factors.iter().enumerate() {
                let df = diff_rec(f, var, memo);
                if df.is_zero() {
                    continue;
                }
                let rest = factors
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, g)| g.clone());
                terms.push(Expr::product(std::iter::once(df).chain(rest)));
            }
            Expr::sum(terms)
        }
        Node::Quotient(num, den) => {
            let dn = diff_rec(num, var, memo);
            let dd = diff_rec(den, var, memo);
            if dd.is_zero() {
                Expr::quotient(dn, den.clone())
            } else {
                let top = Expr::sum([
                    Expr::product([dn, den.clone()]),
                    Expr::product([Expr::constant(-1.0), num.clone(), dd]),
                ]);
                Expr::quotient(top, Expr::powi(den.clone(), 2))
            }
        }
        Node::Pow(base, r) => {
            let db = diff_rec(base, var, memo);
            if db.is_zero() {
                Expr::zero()
            } else {
                let coeff = *r.numer() as f64 / *r.denom() as f64;
                Expr::product([
                    Expr::constant(coeff),
                    Expr::pow(base.clone(), r - Rational::from_integer(1)),
                    db,
                ])
            }
        }
        Node::Log(a) => {
            let da = diff_rec(a, var, memo);
            Expr::quotient(da, a.clone())
        }
        Node::Exp(a) => {
            let da = diff_rec(a, var, memo);
            Expr::product([e.clone(), da])
        }
        Node::Sin(a) => {
            let da = diff_rec(a, var, memo);
            Expr::product([Expr::cos(a.clone()), da])
        }
        Node::Cos(a) => {
            let da = diff_rec(a, var, memo);
            Expr::product([Expr::constant(-1.0), Expr::sin(a.clone()), da])
        }
    };
    memo.insert(e.ptr_id(), d.clone());
    d
}

fn subst_rec(e: &Expr, map: &BTreeMap<String, Expr>, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(s) = memo.get(&e.ptr_id()) {
        return s.clone();
    }
    let out = match e.node() {
        Node::Const(_) => e.clone(),
        Node::Var(name) => map.get(&**name).cloned().unwrap_or_else(|| e.clone()),
        Node::Sum(t) => Expr::sum(t.iter().map(|x| subst_rec(x, map, memo))),
        Node::Product(t) => Expr::product(t.iter().map(|x| subst_rec(x, map, memo))),
        Node::Quotient(a, b) => Expr::quotient(subst_rec(a, map, memo), subst_rec(b, map, memo)),
        Node::Pow(a, r) => Expr::pow(subst_rec(a, map, memo), *r),
        Node::Log(a) => Expr::log(subst_rec(a, map, memo)),
        Node::Exp(a) => Expr::exp(subst_rec(a, map, memo)),
        Node::Sin(a) => Expr::sin(subst_rec(a, map, memo)),
        Node::Cos(a) => Expr::cos(subst_rec(a, map, memo)),
    };
    memo.insert(e.ptr_id(), out.clone());
    out
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a == b,
            (Node::Var(a), Node::Var(b)) => a == b,
            (Node::Sum(a), Node::Sum(b)) | (Node::Product(a), Node::Product(b)) => a == b,
            (Node::Quotient(a, b), Node::Quotient(c, d)) => a == c && b == d,
            (Node::Pow(a, r), Node::Pow(b, s)) => r == s && a == b,
            (Node::Log(a), Node::Log(b))
            | (Node::Exp(a), Node::Exp(b))
            | (Node::Sin(a), Node::Sin(b))
            | (Node::Cos(a), Node::Cos(b)) => a == b,
            _ => false,
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::constant(v)
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        // sign lives in the numerator so `-a/b` prints and parses identically
        match self.node() {
            Node::Quotient(n, d) => Expr::quotient(-n.clone(), d.clone()),
            _ => Expr::product([Expr::constant(-1.0), self]),
        }
    }
}

impl Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -self.clone()
    }
}

macro_rules! binop {
    ($trait:ident, $method:ident, $body:expr) => {
        impl $trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl $trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs.clone())
            }
        }
        impl $trait<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, rhs.clone())
            }
        }
        impl $trait<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), rhs)
            }
        }
        impl $trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self, Expr::constant(rhs))
            }
        }
        impl $trait<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(self.clone(), Expr::constant(rhs))
            }
        }
        impl $trait<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(Expr::constant(self), rhs)
            }
        }
        impl $trait<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(Expr, Expr) -> Expr = $body;
                f(Expr::constant(self), rhs.clone())
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum([a, b]));
binop!(Sub, sub, |a, b| Expr::sum([a, -b]));
binop!(Mul, mul, |a, b| Expr::product([a, b]));
binop!(Div, div, Expr::quotient);

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn derivative_of_monomial() {
        let d = p("x^2*y").differentiate("x");
        for (x, y) in [(1.0, 2.0), (-0.5, 3.0), (2.0, -1.0)] {
            let v = d.evaluate(&[("x", x), ("y", y)]).unwrap();
            assert_eq!(v, 2.0 * x * y);
        }
    }

    #[test]
    fn derivative_of_log() {
        let d = p("3*log(a2)").differentiate("a2");
        assert!((d.evaluate(&[("a2", 1.5)]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_example_metric_component() {
        let d = p("9*(1 + y^2)").differentiate("y");
        for y in [-1.0, 0.25, 2.0] {
            assert!((d.evaluate(&[("y", y)]).unwrap() - 18.0 * y).abs() < 1e-14);
        }
    }

    #[test]
    fn absent_variable_differentiates_to_zero() {
        assert!(p("sin(x)*exp(y)").differentiate("z").is_zero());
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(p("x^2 + 1").evaluate(&[("x", 2.0)]).unwrap(), 5.0);
        assert_eq!(p("log(a2)").evaluate(&[("a2", 1.0)]).unwrap(), 0.0);
        let err = p("log(a2)").evaluate(&[("a2", -1.0)]).unwrap_err();
        assert!(matches!(err, EvalError::Domain { .. }), "{err}");
    }

    #[test]
    fn unassigned_and_division_errors() {
        assert_eq!(
            p("x + y").evaluate(&[("x", 1.0)]),
            Err(EvalError::Unassigned("y".into()))
        );
        let err = p("1/(x - 1)").evaluate(&[("x", 1.0)]).unwrap_err();
        match err {
            EvalError::DivisionByZero { subexpr } => assert_eq!(subexpr, "1/(x - 1)"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn folding_and_neutral_elements() {
        assert!(p("0*x + 0").is_zero());
        assert_eq!(p("1*x"), Expr::var("x"));
        assert_eq!(p("x^1"), Expr::var("x"));
        assert!(p("x^0").is_one());
        assert_eq!(p("2*3 + 1").as_constant(), Some(7.0));
    }

    #[test]
    fn rational_powers_are_exact_nodes() {
        let e = Expr::pow(Expr::var("g"), Rational::new(-3, 1));
        assert!(matches!(e.node(), Node::Pow(_, r) if *r == Rational::new(-3, 1)));
        let d = e.differentiate("g");
        assert!((d.evaluate(&[("g", 2.0)]).unwrap() + 3.0 / 16.0).abs() < 1e-16);
        let cube_root = p("x^(1/3)");
        assert!((cube_root.evaluate(&[("x", -8.0)]).unwrap() + 2.0).abs() < 1e-15);
        assert!(p("x^(1/2)").evaluate(&[("x", -1.0)]).is_err());
    }

    #[test]
    fn substitution() {
        let e = p("s^3 + 2*s").substitute("s", &p("r1 - 1"));
        assert_eq!(e.evaluate(&[("r1", 3.0)]).unwrap(), 12.0);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let e = p("sin(x)*exp(y)/(1 + x^2) - log(y)");
        let a = e.evaluate(&[("x", 0.3), ("y", 1.7)]).unwrap();
        let b = e.evaluate(&[("x", 0.3), ("y", 1.7)]).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
