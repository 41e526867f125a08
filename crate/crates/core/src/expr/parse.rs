//! Recursive-descent parser for the expression language.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := ('-'|'+') factor | base ('^' uint)?
//! base   := number | ident | '(' expr ')' | func '(' expr (',' expr)? ')'
//! ```
//!
//! Unary signs are accepted as an extension so printed output re-parses.

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::Pow;

use super::tree::{Func, Node};
use super::{Expr, ExprError, Rational};

pub fn parse(text: &str, dim: usize) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, dim };
    let node = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(Expr::from_tree(node, dim))
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax { offset: self.pos, message: message.to_string() }
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

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = Arc::new(self.term()?);
            lhs = if c == b'+' { Node::Add(Arc::new(lhs), rhs) } else { Node::Sub(Arc::new(lhs), rhs) };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = Arc::new(self.factor()?);
            lhs = if c == b'*' { Node::Mul(Arc::new(lhs), rhs) } else { Node::Div(Arc::new(lhs), rhs) };
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Arc::new(self.factor()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.factor()
            }
            _ => {
                let base = self.base()?;
                if self.peek() == Some(b'^') {
                    self.pos += 1;
                    self.skip_ws();
                    let start = self.pos;
                    let digits = self.digits();
                    if digits.is_empty() {
                        return Err(self.error("expected unsigned integer exponent"));
                    }
                    let k: u32 = digits
                        .parse()
                        .map_err(|_| ExprError::Syntax { offset: start, message: "exponent too large".into() })?;
                    return Ok(Node::Pow(Arc::new(base), k));
                }
                Ok(base)
            }
        }
    }

    fn digits(&mut self) -> String {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        String::from_utf8_lossy(&self.src[start..self.pos]).into_owned()
    }

    fn base(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        let int_part = self.digits();
        let mut frac = String::new();
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            frac = self.digits();
        }
        if int_part.is_empty() && frac.is_empty() {
            return Err(ExprError::Syntax { offset: start, message: "malformed number".into() });
        }
        let mut exp10: i64 = 0;
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            let neg = match self.src.get(self.pos) {
                Some(b'-') => {
                    self.pos += 1;
                    true
                }
                Some(b'+') => {
                    self.pos += 1;
                    false
                }
                _ => false,
            };
            let ed = self.digits();
            if ed.is_empty() {
                self.pos = save;
            } else {
                exp10 = ed
                    .parse::<i64>()
                    .map_err(|_| ExprError::Syntax { offset: save, message: "exponent too large".into() })?;
                if neg {
                    exp10 = -exp10;
                }
            }
        }
        let mantissa: BigInt = format!("{int_part}{frac}").parse().unwrap_or_default();
        exp10 -= frac.len() as i64;
        if exp10.unsigned_abs() > 10_000 {
            return Err(ExprError::Syntax { offset: start, message: "number out of range".into() });
        }
        let ten = BigInt::from(10);
        let scale = Pow::pow(&ten, exp10.unsigned_abs());
        let value = if exp10 >= 0 {
            Rational::from_integer(mantissa * scale)
        } else {
            Rational::new(mantissa, scale)
        };
        Ok(Node::Const(value))
    }

    fn ident(&mut self) -> Result<Node, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default().to_string();
        if let Some(rest) = name.strip_prefix('x') {
            if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
                let index: usize = rest.parse().unwrap_or(usize::MAX);
                if index == 0 || index > self.dim {
                    return Err(ExprError::VariableOutOfRange { index, dim: self.dim });
                }
                return Ok(Node::Var(index - 1));
            }
        }
        let func = match name.as_str() {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "min" | "max" => None,
            _ => return Err(ExprError::UnknownIdentifier { name, offset: start }),
        };
        self.expect(b'(')?;
        let first = Arc::new(self.expr()?);
        let node = match func {
            Some(f) => Node::Func(f, first),
            None => {
                self.expect(b',')?;
                let second = Arc::new(self.expr()?);
                if name == "min" {
                    Node::Min(first, second)
                } else {
                    Node::Max(first, second)
                }
            }
        };
        self.expect(b')')?;
        Ok(node)
    }
}
