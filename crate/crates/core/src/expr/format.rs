//! Infix printing. The output re-parses to a structurally identical tree.

use std::fmt::{self, Write};

use super::{Expr, Node, Rational};

pub(crate) fn format_constant(c: f64) -> String {
    let a = c.abs();
    if c == c.trunc() && a < 1e15 {
        format!("{}", c as i64)
    } else if (1e-5..1e15).contains(&a) {
        format!("{c}")
    } else {
        format!("{c:e}")
    }
}

/// Splits a leading negative coefficient off a term: returns the magnitude
/// term when the printed form would start with a minus sign.
fn negated(e: &Expr) -> Option<Expr> {
    match e.node() {
        Node::Const(c) if *c < 0.0 => Some(Expr::constant(-c)),
        Node::Product(f) => match f[0].node() {
            Node::Const(c) if *c < 0.0 => Some(Expr::product(
                std::iter::once(Expr::constant(-c)).chain(f[1..].iter().cloned()),
            )),
            _ => None,
        },
        Node::Quotient(n, d) => negated(n).map(|m| Expr::quotient(m, d.clone())),
        _ => None,
    }
}

fn is_atomic(e: &Expr) -> bool {
    match e.node() {
        Node::Const(c) => *c >= 0.0,
        Node::Var(_) | Node::Log(_) | Node::Exp(_) | Node::Sin(_) | Node::Cos(_) => true,
        _ => false,
    }
}

fn write_paren(f: &mut fmt::Formatter<'_>, e: &Expr, paren: bool) -> fmt::Result {
    if paren {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_exponent(f: &mut fmt::Formatter<'_>, r: &Rational) -> fmt::Result {
    if *r.denom() == 1 && *r.numer() >= 0 {
        write!(f, "^{}", r.numer())
    } else if *r.denom() == 1 {
        write!(f, "^({})", r.numer())
    } else {
        write!(f, "^({}/{})", r.numer(), r.denom())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => f.write_str(&format_constant(*c)),
            Node::Var(name) => f.write_str(name),
            Node::Sum(terms) => {
                for (i, t) in terms.iter().enumerate() {
                    match (i, negated(t)) {
                        (0, _) => write!(f, "{t}")?,
                        (_, Some(m)) => write!(f, " - {m}")?,
                        (_, None) => write!(f, " + {t}")?,
                    }
                }
                Ok(())
            }
            Node::Product(factors) => {
                let mut rest = &factors[..];
                if let Node::Const(c) = factors[0].node() {
                    if *c == -1.0 {
                        f.write_char('-')?;
                    } else {
                        write!(f, "{}*", format_constant(*c))?;
                    }
                    rest = &factors[1..];
                }
                for (i, g) in rest.iter().enumerate() {
                    if i > 0 {
                        f.write_char('*')?;
                    }
                    let paren = matches!(g.node(), Node::Sum(_) | Node::Quotient(..));
                    write_paren(f, g, paren)?;
                }
                Ok(())
            }
            Node::Quotient(n, d) => {
                write_paren(f, n, matches!(n.node(), Node::Sum(_)))?;
                f.write_char('/')?;
                let paren = !(is_atomic(d) || matches!(d.node(), Node::Pow(..)));
                write_paren(f, d, paren)
            }
            Node::Pow(b, r) => {
                write_paren(f, b, !is_atomic(b))?;
                write_exponent(f, r)
            }
            Node::Log(a) => write!(f, "log({a})"),
            Node::Exp(a) => write!(f, "exp({a})"),
            Node::Sin(a) => write!(f, "sin({a})"),
            Node::Cos(a) => write!(f, "cos({a})"),
        }
    }
}
