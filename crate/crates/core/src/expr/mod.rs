//! Scalar fields on R^d: parsing, evaluation, differentiation and Lie derivatives.
//!
//! Every [`Expr`] carries its parsed tree plus a canonical normal form. When the
//! normal form has no transcendental or piecewise atoms it is also stored as an
//! exact sparse [`Poly`], which is the path used by all symbolic analysis.

mod lie;
mod normal;
mod parse;
mod poly;
mod tree;

use std::fmt;
use std::sync::Arc;

use num_traits::Zero;
use thiserror::Error;

pub use lie::{lie_chain, lie_derivative, lowest_homogeneous, HomogeneousForm};
pub use normal::{normalize, Atom, GenMono, GenPoly};
pub use parse::parse;
pub use poly::{format_rational, rational_from_f64, rational_to_f64, CompiledPoly, Exponents, Poly};
pub use tree::{Func, Node};

pub type Rational = num_rational::BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("variable x{index} out of range (dimension {dim})")]
    VariableOutOfRange { index: usize, dim: usize },
    #[error("division by zero")]
    DivisionByZero,
    #[error("min/max nodes are not differentiable")]
    NonDifferentiable,
    #[error("expression is not polynomial")]
    NotPolynomial,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("polynomial is identically zero")]
    ZeroPolynomial,
    #[error("expression does not vanish at the origin")]
    NonzeroAtOrigin,
}

/// Scalar expression over x1..xd.
#[derive(Clone, Debug)]
pub struct Expr {
    dim: usize,
    tree: Arc<Node>,
    normal: Arc<GenPoly>,
    poly: Option<Arc<Poly>>,
}

impl Expr {
    pub fn parse(text: &str, dim: usize) -> Result<Self, ExprError> {
        parse(text, dim)
    }

    pub fn from_tree(tree: Node, dim: usize) -> Self {
        let normal = normalize(&tree, dim);
        let poly = normal.to_poly().map(Arc::new);
        Expr { dim, tree: Arc::new(tree), normal: Arc::new(normal), poly }
    }

    pub fn from_normal(normal: GenPoly) -> Self {
        let tree = normal.to_node();
        let poly = normal.to_poly().map(Arc::new);
        Expr { dim: normal.dim(), tree: Arc::new(tree), normal: Arc::new(normal), poly }
    }

    pub fn from_poly(p: Poly) -> Self {
        let normal = GenPoly::from_poly(&p);
        Expr { dim: p.dim(), tree: Arc::new(normal.to_node()), normal: Arc::new(normal), poly: Some(Arc::new(p)) }
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_poly(Poly::zero(dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tree(&self) -> &Node {
        &self.tree
    }

    pub fn normal(&self) -> &GenPoly {
        &self.normal
    }

    pub fn poly(&self) -> Option<&Poly> {
        self.poly.as_deref()
    }

    pub fn is_polynomial(&self) -> bool {
        self.poly.is_some()
    }

    pub fn is_zero(&self) -> bool {
        self.normal.is_zero()
    }

    pub fn has_min_max(&self) -> bool {
        self.tree.has_min_max()
    }

    /// Value at `x`. On the polynomial path the sum is formed exactly and rounded once.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, ExprError> {
        if x.len() != self.dim {
            return Err(ExprError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        match &self.poly {
            Some(p) => Ok(p.eval_rounded(x)),
            None => self.tree.eval(x),
        }
    }

    pub fn evaluate_exact(&self, x: &[Rational]) -> Result<Rational, ExprError> {
        if x.len() != self.dim {
            return Err(ExprError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        self.poly.as_ref().map(|p| p.eval_exact(x)).ok_or(ExprError::NotPolynomial)
    }

    pub fn partial(&self, i: usize) -> Result<Expr, ExprError> {
        if i >= self.dim {
            return Err(ExprError::VariableOutOfRange { index: i + 1, dim: self.dim });
        }
        if self.has_min_max() {
            return Err(ExprError::NonDifferentiable);
        }
        if let Some(p) = &self.poly {
            return Ok(Expr::from_poly(p.partial(i)));
        }
        Ok(Expr::from_normal(self.normal.partial(i)?))
    }

    pub fn gradient(&self) -> Result<Vec<Expr>, ExprError> {
        (0..self.dim).map(|i| self.partial(i)).collect()
    }

    pub fn compile(&self) -> CompiledExpr {
        match &self.poly {
            Some(p) => CompiledExpr::Poly(p.compile()),
            None => CompiledExpr::Tree(self.tree.clone()),
        }
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.normal == other.normal
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.poly {
            Some(p) => write!(f, "{p}"),
            None => write!(f, "{}", self.tree),
        }
    }
}

/// Floating-point evaluator for inner loops.
#[derive(Clone, Debug)]
pub enum CompiledExpr {
    Poly(CompiledPoly),
    Tree(Arc<Node>),
}

impl CompiledExpr {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            CompiledExpr::Poly(p) => p.eval(x),
            CompiledExpr::Tree(t) => t.eval_unchecked(x),
        }
    }
}

/// Vector field with one scalar expression per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorFieldExpr {
    components: Vec<Expr>,
}

impl VectorFieldExpr {
    pub fn new(components: Vec<Expr>) -> Result<Self, ExprError> {
        let d = components.len();
        if let Some(bad) = components.iter().find(|c| c.dim() != d) {
            return Err(ExprError::DimensionMismatch { expected: d, found: bad.dim() });
        }
        Ok(VectorFieldExpr { components })
    }

    pub fn parse<S: AsRef<str>>(texts: &[S]) -> Result<Self, ExprError> {
        let d = texts.len();
        let comps = texts.iter().map(|t| parse(t.as_ref(), d)).collect::<Result<Vec<_>, _>>()?;
        Self::new(comps)
    }

    pub fn zero(dim: usize) -> Self {
        VectorFieldExpr { components: vec![Expr::zero(dim); dim] }
    }

    pub fn from_polys(polys: Vec<Poly>) -> Result<Self, ExprError> {
        Self::new(polys.into_iter().map(Expr::from_poly).collect())
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn is_polynomial(&self) -> bool {
        self.components.iter().all(Expr::is_polynomial)
    }

    pub fn has_min_max(&self) -> bool {
        self.components.iter().any(Expr::has_min_max)
    }

    pub fn polys(&self) -> Option<Vec<Poly>> {
        self.components.iter().map(|c| c.poly().cloned()).collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, ExprError> {
        self.components.iter().map(|c| c.evaluate(x)).collect()
    }

    pub fn compile(&self) -> CompiledField {
        CompiledField { comps: self.components.iter().map(Expr::compile).collect() }
    }

    /// Exact Jacobian at the origin for polynomial fields.
    pub fn jacobian_at_origin_exact(&self) -> Option<Vec<Vec<Rational>>> {
        let d = self.dim();
        let polys = self.polys()?;
        Some(
            polys
                .iter()
                .map(|p| {
                    (0..d)
                        .map(|j| {
                            let mut e = vec![0u32; d];
                            e[j] = 1;
                            p.coefficient(&e)
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// Jacobian at the origin; exact on the polynomial path, symbolic partials otherwise.
    pub fn jacobian_at_origin(&self) -> Result<Vec<Vec<f64>>, ExprError> {
        if let Some(j) = self.jacobian_at_origin_exact() {
            return Ok(j.iter().map(|row| row.iter().map(rational_to_f64).collect()).collect());
        }
        let origin = vec![0.0; self.dim()];
        self.components
            .iter()
            .map(|c| c.gradient()?.iter().map(|g| g.evaluate(&origin)).collect())
            .collect()
    }

    pub fn vanishes_at_origin(&self, tol: f64) -> Result<bool, ExprError> {
        let origin = vec![0.0; self.dim()];
        for c in &self.components {
            match c.poly() {
                Some(p) => {
                    if !p.constant_term().is_zero() {
                        return Ok(false);
                    }
                }
                None => {
                    if c.evaluate(&origin)?.abs() > tol {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}

impl fmt::Display for VectorFieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug)]
pub struct CompiledField {
    comps: Vec<CompiledExpr>,
}

impl CompiledField {
    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.comps) {
            *o = c.eval(x);
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        let v = Expr::parse("x1^2 + x2^2", 2).unwrap();
        assert_eq!(v.evaluate(&[3.0, 4.0]).unwrap(), 25.0);
        let l = Expr::parse("-2*x1^2", 2).unwrap();
        assert_eq!(l.evaluate(&[1.0, 5.0]).unwrap(), -2.0);
        let m = Expr::parse("min(x1*x2, 0)^2", 2).unwrap();
        assert!(!m.is_polynomial());
        assert_eq!(m.evaluate(&[1.0, -1.0]).unwrap(), 1.0);
    }

    #[test]
    fn evaluate_reports_division_by_zero() {
        let e = Expr::parse("1/x1", 1).unwrap();
        assert_eq!(e.evaluate(&[0.0]), Err(ExprError::DivisionByZero));
        assert_eq!(e.evaluate(&[2.0]).unwrap(), 0.5);
    }

    #[test]
    fn partial_examples() {
        let e = Expr::parse("x1^4 + 2*x2^2", 2).unwrap();
        assert_eq!(e.partial(0).unwrap(), Expr::parse("4*x1^3", 2).unwrap());
        let e = Expr::parse("x1*cos(x1)", 3).unwrap();
        assert_eq!(e.partial(0).unwrap(), Expr::parse("cos(x1) - x1*sin(x1)", 3).unwrap());
        let e = Expr::parse("7", 2).unwrap();
        assert!(e.partial(1).unwrap().is_zero());
        let e = Expr::parse("max(x1, 0)", 1).unwrap();
        assert_eq!(e.partial(0), Err(ExprError::NonDifferentiable));
    }

    #[test]
    fn jacobian_at_origin_tree_path() {
        let f = VectorFieldExpr::parse(&["-x1 + 2*x3 - 2*x2*cos(x1)", "x1*cos(x1)", "-x3"]).unwrap();
        assert!(!f.is_polynomial());
        let j = f.jacobian_at_origin().unwrap();
        assert_eq!(j, vec![vec![-1.0, -2.0, 2.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, -1.0]]);
    }

    #[test]
    fn field_dimension_checked() {
        let a = Expr::parse("x1", 1).unwrap();
        let b = Expr::parse("x1", 2).unwrap();
        assert!(VectorFieldExpr::new(vec![a, b]).is_err());
    }
}
