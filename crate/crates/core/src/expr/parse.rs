//! Recursive-descent parser for the infix expression format.
//!
//! Grammar:
//! ```text
//! sum     := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' exponent)?
//! exponent:= INT | '-' INT | '(' '-'? INT ('/' INT)? ')'
//! atom    := NUMBER | IDENT | FUNC '(' sum ')' | '(' sum ')'
//! ```
//! Functions: `log`, `exp`, `sin`, `cos`, and `sqrt` (read as `^(1/2)`).

use super::{Expr, Rational};
use crate::error::ParseError;

pub(crate) fn parse(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let e = p.sum()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ParseError {
        ParseError {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat(b'+') {
                terms.push(self.term()?);
            } else if self.eat(b'-') {
                terms.push(-self.term()?);
            } else {
                break;
            }
        }
        Ok(if terms.len() == 1 {
            terms.pop().unwrap()
        } else {
            Expr::sum(terms)
        })
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.unary()?;
                acc = Expr::product([acc, rhs]);
            } else if self.eat(b'/') {
                let rhs = self.unary()?;
                acc = Expr::quotient(acc, rhs);
            } else {
                break;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(b'-') {
            Ok(-self.unary()?)
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let r = self.exponent()?;
            Ok(Expr::pow(base, r))
        } else {
            Ok(base)
        }
    }

    fn integer(&mut self) -> Result<i64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected an integer exponent"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| self.error("exponent out of range"))
    }

    fn exponent(&mut self) -> Result<Rational, ParseError> {
        if self.eat(b'(') {
            let sign = if self.eat(b'-') { -1 } else { 1 };
            let num = self.integer()?;
            let den = if self.eat(b'/') { self.integer()? } else { 1 };
            if den == 0 {
                return Err(self.error("zero denominator in exponent"));
            }
            self.expect(b')')?;
            Ok(Rational::new(sign * num, den))
        } else if self.eat(b'-') {
            Ok(Rational::from_integer(-self.integer()?))
        } else {
            Ok(Rational::from_integer(self.integer()?))
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                if self.peek() == Some(b'(') {
                    let func: fn(Expr) -> Expr = match name {
                        "log" => Expr::log,
                        "exp" => Expr::exp,
                        "sin" => Expr::sin,
                        "cos" => Expr::cos,
                        "sqrt" => Expr::sqrt,
                        _ => {
                            self.pos = start;
                            return Err(self.error(&format!("unknown function `{name}`")));
                        }
                    };
                    self.pos += 1;
                    let arg = self.sum()?;
                    self.expect(b')')?;
                    Ok(func(arg))
                } else {
                    Ok(Expr::var(name))
                }
            }
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.pos < self.src.len() && self.src[self.pos] == b'.' {
            self.pos += 1;
            digits(self);
        }
        if self.pos < self.src.len() && matches!(self.src[self.pos], b'e' | b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < self.src.len() && matches!(self.src[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if exp_start == self.pos {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse::<f64>().map(Expr::constant).map_err(|_| ParseError {
            position: start,
            message: format!("invalid number `{text}`"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(s: &str) {
        let e = parse(s).unwrap();
        let printed = e.to_string();
        let again = parse(&printed).unwrap();
        assert_eq!(again, e, "{s} -> {printed}");
        assert_eq!(again.to_string(), printed);
    }

    #[test]
    fn printed_forms_reparse() {
        for s in [
            "x^2 + 1",
            "a - b",
            "-x*y + 3",
            "a - 2*x/y",
            "-(a + b)*c",
            "a/(b*c)/d",
            "(a/b)*c",
            "x^(-3) - y^(1/2)",
            "sin(x)^2 + cos(2*y)",
            "exp(-4/3*x)*(3*n - 2)^(-4)",
            "1e-20*x + 1.5e30",
            "a/(-2)",
            "-1/x",
            "log(a2)*(9 - 6*a1)",
        ] {
            roundtrip(s);
        }
    }

    #[test]
    fn precedence() {
        let e = parse("2 + 3*4^2 - 10/5").unwrap();
        assert_eq!(e.as_constant(), Some(48.0));
        let e = parse("-x^2").unwrap();
        assert_eq!(e.evaluate(&[("x", 3.0)]).unwrap(), -9.0);
        let e = parse("a/b*c").unwrap();
        assert_eq!(e.evaluate(&[("a", 6.0), ("b", 2.0), ("c", 5.0)]).unwrap(), 15.0);
    }

    #[test]
    fn sqrt_is_half_power() {
        assert_eq!(parse("sqrt(x)").unwrap().to_string(), "x^(1/2)");
    }

    #[test]
    fn errors_carry_position() {
        let err = parse("x + * y").unwrap_err();
        assert_eq!(err.position, 4);
        assert!(parse("foo(x)").is_err());
        assert!(parse("x^1.5").is_err());
        assert!(parse("(x + 1").is_err());
    }
}
