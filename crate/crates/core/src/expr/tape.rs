//! Linearized evaluation of expression DAGs.
//!
//! Shared subtrees are evaluated once. The instruction order is fixed at
//! compile time, so results are bit-identical across calls.

use std::collections::HashMap;

use super::{Expr, Node, Rational};
use crate::error::EvalError;

#[derive(Debug, Clone)]
enum Instr {
    Const(f64),
    Var(usize),
    Sum(Vec<usize>),
    Product(Vec<usize>),
    Quotient(usize, usize),
    Pow(usize, Rational),
    Log(usize),
    Exp(usize),
    Sin(usize),
    Cos(usize),
}

/// A compiled set of expressions sharing one variable ordering.
#[derive(Debug, Clone)]
pub struct Tape {
    instrs: Vec<Instr>,
    sources: Vec<Expr>,
    outputs: Vec<usize>,
    n_vars: usize,
}

impl Tape {
    /// Compiles `exprs` against the ordered variable list. Any variable not
    /// in `vars` is reported as unassigned.
    pub fn compile<S: AsRef<str>>(exprs: &[Expr], vars: &[S]) -> Result<Self, EvalError> {
        let index: HashMap<&str, usize> = vars.iter().enumerate().map(|(i, v)| (v.as_ref(), i)).collect();
        let mut tape = Tape {
            instrs: Vec::new(),
            sources: Vec::new(),
            outputs: Vec::with_capacity(exprs.len()),
            n_vars: vars.len(),
        };
        let mut seen = HashMap::new();
        for e in exprs {
            let slot = tape.emit(e, &index, &mut seen)?;
            tape.outputs.push(slot);
        }
        Ok(tape)
    }

    fn emit(
        &mut self,
        e: &Expr,
        index: &HashMap<&str, usize>,
        seen: &mut HashMap<usize, usize>,
    ) -> Result<usize, EvalError> {
        if let Some(&slot) = seen.get(&e.ptr_id()) {
            return Ok(slot);
        }
        let instr = match e.node() {
            Node::Const(c) => Instr::Const(*c),
            Node::Var(name) => match index.get(&**name) {
                Some(&i) => Instr::Var(i),
                None => return Err(EvalError::Unassigned(name.to_string())),
            },
            Node::Sum(t) => Instr::Sum(t.iter().map(|x| self.emit(x, index, seen)).collect::<Result<_, _>>()?),
            Node::Product(t) => Instr::Product(t.iter().map(|x| self.emit(x, index, seen)).collect::<Result<_, _>>()?),
            Node::Quotient(a, b) => {
                let a = self.emit(a, index, seen)?;
                let b = self.emit(b, index, seen)?;
                Instr::Quotient(a, b)
            }
            Node::Pow(a, r) => Instr::Pow(self.emit(a, index, seen)?, *r),
            Node::Log(a) => Instr::Log(self.emit(a, index, seen)?),
            Node::Exp(a) => Instr::Exp(self.emit(a, index, seen)?),
            Node::Sin(a) => Instr::Sin(self.emit(a, index, seen)?),
            Node::Cos(a) => Instr::Cos(self.emit(a, index, seen)?),
        };
        self.instrs.push(instr);
        self.sources.push(e.clone());
        let slot = self.instrs.len() - 1;
        seen.insert(e.ptr_id(), slot);
        Ok(slot)
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn eval(&self, values: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.outputs.len()];
        self.eval_into(values, &mut scratch, &mut out)?;
        Ok(out)
    }

    /// Evaluates into `out`, reusing `scratch` between calls.
    pub fn eval_into(&self, values: &[f64], scratch: &mut Vec<f64>, out: &mut [f64]) -> Result<(), EvalError> {
        assert_eq!(values.len(), self.n_vars, "variable count mismatch");
        scratch.clear();
        scratch.reserve(self.instrs.len());
        for (i, instr) in self.instrs.iter().enumerate() {
            let v = match instr {
                Instr::Const(c) => *c,
                Instr::Var(k) => values[*k],
                Instr::Sum(t) => t.iter().fold(0.0, |acc, &j| acc + scratch[j]),
                Instr::Product(t) => t.iter().fold(1.0, |acc, &j| acc * scratch[j]),
                Instr::Quotient(a, b) => {
                    let d = scratch[*b];
                    if d == 0.0 {
                        return Err(EvalError::DivisionByZero {
                            subexpr: self.describe(i),
                        });
                    }
                    scratch[*a] / d
                }
                Instr::Pow(a, r) => pow_rational(scratch[*a], *r).map_err(|zero_div| {
                    if zero_div {
                        EvalError::DivisionByZero {
                            subexpr: self.describe(i),
                        }
                    } else {
                        EvalError::Domain {
                            subexpr: self.describe(i),
                            reason: "even root of a negative number",
                        }
                    }
                })?,
                Instr::Log(a) => {
                    let x = scratch[*a];
                    if x <= 0.0 {
                        return Err(EvalError::Domain {
                            subexpr: self.describe(i),
                            reason: "logarithm of a non-positive number",
                        });
                    }
                    x.ln()
                }
                Instr::Exp(a) => scratch[*a].exp(),
                Instr::Sin(a) => scratch[*a].sin(),
                Instr::Cos(a) => scratch[*a].cos(),
            };
            scratch.push(v);
        }
        for (o, &slot) in out.iter_mut().zip(&self.outputs) {
            *o = scratch[slot];
        }
        Ok(())
    }

    fn describe(&self, slot: usize) -> String {
        const LIMIT: usize = 200;
        let mut s = self.sources[slot].to_string();
        if s.len() > LIMIT {
            let mut cut = LIMIT;
            while !s.is_char_boundary(cut) {
                cut -= 1;
            }
            s.truncate(cut);
            s.push_str("...");
        }
        s
    }
}

/// Real power with rational exponent. `Err(true)` marks division by zero,
/// `Err(false)` an even root of a negative base.
pub(crate) fn pow_rational(base: f64, r: Rational) -> Result<f64, bool> {
    let (p, q) = (*r.numer(), *r.denom());
    if base == 0.0 && p < 0 {
        return Err(true);
    }
    if q == 1 {
        return Ok(match i32::try_from(p) {
            Ok(k) => base.powi(k),
            Err(_) => base.powf(p as f64),
        });
    }
    let e = p as f64 / q as f64;
    if base >= 0.0 {
        return Ok(base.powf(e));
    }
    if q % 2 == 0 {
        return Err(false);
    }
    let mag = (-base).powf(e);
    Ok(if p % 2 == 0 { mag } else { -mag })
}
