//! Expression trees and their floating-point evaluation.

use std::fmt;
use std::sync::Arc;

use num_traits::{Signed, Zero};

use super::poly::{format_rational, rational_to_f64};
use super::{ExprError, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
        }
    }

    pub fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
        }
    }
}

/// Expression tree node. Variables are 0-based internally and print as `x{i+1}`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Node {
    Const(Rational),
    Var(usize),
    Neg(Arc<Node>),
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Pow(Arc<Node>, u32),
    Func(Func, Arc<Node>),
    Min(Arc<Node>, Arc<Node>),
    Max(Arc<Node>, Arc<Node>),
}

impl Node {
    /// Evaluates in floating point; division by an exact zero is reported.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        Ok(match self {
            Node::Const(c) => rational_to_f64(c),
            Node::Var(i) => x[*i],
            Node::Neg(a) => -a.eval(x)?,
            Node::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Node::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Node::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Node::Div(a, b) => {
                let den = b.eval(x)?;
                if den == 0.0 {
                    return Err(ExprError::DivisionByZero);
                }
                a.eval(x)? / den
            }
            Node::Pow(a, k) => a.eval(x)?.powi(*k as i32),
            Node::Func(f, a) => f.apply(a.eval(x)?),
            Node::Min(a, b) => a.eval(x)?.min(b.eval(x)?),
            Node::Max(a, b) => a.eval(x)?.max(b.eval(x)?),
        })
    }

    /// Evaluation for hot loops: division by zero yields a non-finite value.
    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Node::Const(c) => rational_to_f64(c),
            Node::Var(i) => x[*i],
            Node::Neg(a) => -a.eval_unchecked(x),
            Node::Add(a, b) => a.eval_unchecked(x) + b.eval_unchecked(x),
            Node::Sub(a, b) => a.eval_unchecked(x) - b.eval_unchecked(x),
            Node::Mul(a, b) => a.eval_unchecked(x) * b.eval_unchecked(x),
            Node::Div(a, b) => a.eval_unchecked(x) / b.eval_unchecked(x),
            Node::Pow(a, k) => a.eval_unchecked(x).powi(*k as i32),
            Node::Func(f, a) => f.apply(a.eval_unchecked(x)),
            Node::Min(a, b) => a.eval_unchecked(x).min(b.eval_unchecked(x)),
            Node::Max(a, b) => a.eval_unchecked(x).max(b.eval_unchecked(x)),
        }
    }

    /// True when the tree contains a min or max node.
    pub fn has_min_max(&self) -> bool {
        match self {
            Node::Const(_) | Node::Var(_) => false,
            Node::Min(_, _) | Node::Max(_, _) => true,
            Node::Neg(a) | Node::Pow(a, _) | Node::Func(_, a) => a.has_min_max(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                a.has_min_max() || b.has_min_max()
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Node::Add(_, _) | Node::Sub(_, _) => 1,
            Node::Mul(_, _) | Node::Div(_, _) => 2,
            Node::Neg(_) => 3,
            Node::Pow(_, _) => 4,
            Node::Const(c) if c.is_negative() => 0,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Const(c) => {
                if c.is_negative() {
                    write!(f, "-{}", format_rational(&c.abs()))
                } else if c.is_zero() {
                    write!(f, "0")
                } else {
                    write!(f, "{}", format_rational(c))
                }
            }
            Node::Var(i) => write!(f, "x{}", i + 1),
            Node::Neg(a) => {
                write!(f, "-")?;
                a.write_child(f, 3)
            }
            Node::Add(a, b) => {
                a.write_child(f, 1)?;
                write!(f, " + ")?;
                b.write_child(f, 2)
            }
            Node::Sub(a, b) => {
                a.write_child(f, 1)?;
                write!(f, " - ")?;
                b.write_child(f, 2)
            }
            Node::Mul(a, b) => {
                a.write_child(f, 2)?;
                write!(f, "*")?;
                b.write_child(f, 3)
            }
            Node::Div(a, b) => {
                a.write_child(f, 2)?;
                write!(f, "/")?;
                b.write_child(f, 3)
            }
            Node::Pow(a, k) => {
                a.write_child(f, 5)?;
                write!(f, "^{k}")
            }
            Node::Func(func, a) => write!(f, "{}({a})", func.name()),
            Node::Min(a, b) => write!(f, "min({a}, {b})"),
            Node::Max(a, b) => write!(f, "max({a}, {b})"),
        }
    }
}
