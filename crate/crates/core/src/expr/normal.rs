//! Canonical normal form: polynomials over the variables and a set of opaque atoms.
//!
//! Atoms are transcendental calls, min/max and reciprocals of non-constant
//! subexpressions. Arithmetic merges like terms; no identities between atoms
//! (e.g. sin² + cos² = 1) are applied.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::sync::Arc;

use num_traits::{One, Zero};

use super::poly::Poly;
use super::tree::{Func, Node};
use super::{ExprError, Rational};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Func(Func, Arc<Node>),
    Min(Arc<Node>, Arc<Node>),
    Max(Arc<Node>, Arc<Node>),
    Recip(Arc<Node>),
}

impl Atom {
    fn node(&self) -> Node {
        match self {
            Atom::Func(f, a) => Node::Func(*f, a.clone()),
            Atom::Min(a, b) => Node::Min(a.clone(), b.clone()),
            Atom::Max(a, b) => Node::Max(a.clone(), b.clone()),
            Atom::Recip(a) => Node::Div(Arc::new(Node::Const(Rational::one())), a.clone()),
        }
    }
}

/// Monomial in variables and atoms; atom exponents are positive and sorted.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GenMono {
    pub exps: Vec<u32>,
    pub atoms: Vec<(Atom, u32)>,
}

impl GenMono {
    fn one(dim: usize) -> Self {
        GenMono { exps: vec![0; dim], atoms: Vec::new() }
    }

    fn mul(&self, other: &GenMono) -> GenMono {
        let exps = self.exps.iter().zip(&other.exps).map(|(a, b)| a + b).collect();
        let mut merged: BTreeMap<Atom, u32> = BTreeMap::new();
        for (a, k) in self.atoms.iter().chain(&other.atoms) {
            *merged.entry(a.clone()).or_insert(0) += k;
        }
        GenMono { exps, atoms: merged.into_iter().collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GenPoly {
    dim: usize,
    terms: BTreeMap<GenMono, Rational>,
}

impl GenPoly {
    pub fn zero(dim: usize) -> Self {
        GenPoly { dim, terms: BTreeMap::new() }
    }

    pub fn constant(dim: usize, c: Rational) -> Self {
        let mut p = Self::zero(dim);
        p.add_term(GenMono::one(dim), c);
        p
    }

    pub fn var(dim: usize, i: usize) -> Self {
        let mut m = GenMono::one(dim);
        m.exps[i] = 1;
        let mut p = Self::zero(dim);
        p.add_term(m, Rational::one());
        p
    }

    pub fn atom(dim: usize, atom: Atom) -> Self {
        let mut m = GenMono::one(dim);
        m.atoms.push((atom, 1));
        let mut p = Self::zero(dim);
        p.add_term(m, Rational::one());
        p
    }

    pub fn from_poly(p: &Poly) -> Self {
        let mut g = Self::zero(p.dim());
        for (e, c) in p.terms() {
            g.add_term(GenMono { exps: e.clone(), atoms: Vec::new() }, c.clone());
        }
        g
    }

    fn add_term(&mut self, m: GenMono, c: Rational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            Entry::Vacant(v) => {
                v.insert(c);
            }
            Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                (m.atoms.is_empty() && m.exps.iter().all(|&e| e == 0)).then(|| c.clone())
            }
            _ => None,
        }
    }

    /// Polynomial view when no atoms are present.
    pub fn to_poly(&self) -> Option<Poly> {
        let mut p = Poly::zero(self.dim);
        for (m, c) in &self.terms {
            if !m.atoms.is_empty() {
                return None;
            }
            p.add_term(m.exps.clone(), c.clone());
        }
        Some(p)
    }

    pub fn add(&self, other: &GenPoly) -> GenPoly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> GenPoly {
        GenPoly {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), -c)).collect(),
        }
    }

    pub fn sub(&self, other: &GenPoly) -> GenPoly {
        self.add(&other.neg())
    }

    pub fn scale(&self, s: &Rational) -> GenPoly {
        if s.is_zero() {
            return Self::zero(self.dim);
        }
        GenPoly {
            dim: self.dim,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn mul(&self, other: &GenPoly) -> GenPoly {
        let mut out = Self::zero(self.dim);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, n: u32) -> GenPoly {
        let mut acc = Self::constant(self.dim, Rational::one());
        let mut base = self.clone();
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc = acc.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        acc
    }

    /// Exact partial derivative; min/max atoms are rejected.
    pub fn partial(&self, i: usize) -> Result<GenPoly, ExprError> {
        let mut out = Self::zero(self.dim);
        for (m, c) in &self.terms {
            // variable part
            if m.exps[i] > 0 {
                let mut dm = m.clone();
                dm.exps[i] -= 1;
                out.add_term(dm, c * Rational::from_integer(m.exps[i].into()));
            }
            // atom parts (chain rule)
            for (j, (atom, k)) in m.atoms.iter().enumerate() {
                let inner_d = atom_derivative(self.dim, atom, i)?;
                if inner_d.is_zero() {
                    continue;
                }
                let mut rest = m.clone();
                if *k == 1 {
                    rest.atoms.remove(j);
                } else {
                    rest.atoms[j].1 -= 1;
                }
                let mut rest_poly = Self::zero(self.dim);
                rest_poly.add_term(rest, c * Rational::from_integer((*k).into()));
                out = out.add(&rest_poly.mul(&inner_d));
            }
        }
        Ok(out)
    }

    /// Canonical tree; terms in map order, coefficient first.
    pub fn to_node(&self) -> Node {
        let mut acc: Option<Node> = None;
        for (m, c) in &self.terms {
            let mut factors: Vec<Node> = Vec::new();
            for (i, &e) in m.exps.iter().enumerate() {
                if e == 1 {
                    factors.push(Node::Var(i));
                } else if e > 1 {
                    factors.push(Node::Pow(Arc::new(Node::Var(i)), e));
                }
            }
            for (a, k) in &m.atoms {
                let n = a.node();
                factors.push(if *k == 1 { n } else { Node::Pow(Arc::new(n), *k) });
            }
            let negative = c < &Rational::zero();
            let mag = if negative { -c } else { c.clone() };
            let mut term = if factors.is_empty() {
                Node::Const(mag.clone())
            } else {
                let mut it = factors.into_iter();
                let first = it.next().unwrap();
                let prod = it.fold(first, |a, b| Node::Mul(Arc::new(a), Arc::new(b)));
                if mag.is_one() {
                    prod
                } else {
                    Node::Mul(Arc::new(Node::Const(mag)), Arc::new(prod))
                }
            };
            acc = Some(match acc {
                None => {
                    if negative {
                        term = Node::Neg(Arc::new(term));
                    }
                    term
                }
                Some(prev) if negative => Node::Sub(Arc::new(prev), Arc::new(term)),
                Some(prev) => Node::Add(Arc::new(prev), Arc::new(term)),
            });
        }
        acc.unwrap_or(Node::Const(Rational::zero()))
    }
}

fn atom_derivative(dim: usize, atom: &Atom, i: usize) -> Result<GenPoly, ExprError> {
    match atom {
        Atom::Min(_, _) | Atom::Max(_, _) => Err(ExprError::NonDifferentiable),
        Atom::Func(f, a) => {
            let inner = normalize(a, dim).partial(i)?;
            if inner.is_zero() {
                return Ok(inner);
            }
            let outer = match f {
                Func::Sin => GenPoly::atom(dim, Atom::Func(Func::Cos, a.clone())),
                Func::Cos => GenPoly::atom(dim, Atom::Func(Func::Sin, a.clone())).neg(),
                Func::Exp => GenPoly::atom(dim, atom.clone()),
            };
            Ok(outer.mul(&inner))
        }
        Atom::Recip(a) => {
            let inner = normalize(a, dim).partial(i)?;
            if inner.is_zero() {
                return Ok(inner);
            }
            Ok(GenPoly::atom(dim, atom.clone()).pow(2).mul(&inner).neg())
        }
    }
}

/// Normal form of a tree. Constant subexpressions are folded exactly where possible.
pub fn normalize(node: &Node, dim: usize) -> GenPoly {
    match node {
        Node::Const(c) => GenPoly::constant(dim, c.clone()),
        Node::Var(i) => GenPoly::var(dim, *i),
        Node::Neg(a) => normalize(a, dim).neg(),
        Node::Add(a, b) => normalize(a, dim).add(&normalize(b, dim)),
        Node::Sub(a, b) => normalize(a, dim).sub(&normalize(b, dim)),
        Node::Mul(a, b) => normalize(a, dim).mul(&normalize(b, dim)),
        Node::Pow(a, k) => normalize(a, dim).pow(*k),
        Node::Div(a, b) => {
            let num = normalize(a, dim);
            let den = normalize(b, dim);
            match den.as_constant() {
                Some(c) if !c.is_zero() => num.scale(&c.recip()),
                _ => num.mul(&GenPoly::atom(dim, Atom::Recip(Arc::new(den.to_node())))),
            }
        }
        Node::Func(f, a) => {
            let inner = normalize(a, dim);
            if inner.is_zero() {
                // sin(0) = 0, cos(0) = exp(0) = 1
                return match f {
                    Func::Sin => GenPoly::zero(dim),
                    Func::Cos | Func::Exp => GenPoly::constant(dim, Rational::one()),
                };
            }
            GenPoly::atom(dim, Atom::Func(*f, Arc::new(inner.to_node())))
        }
        Node::Min(a, b) | Node::Max(a, b) => {
            let na = normalize(a, dim);
            let nb = normalize(b, dim);
            if let (Some(ca), Some(cb)) = (na.as_constant(), nb.as_constant()) {
                let v = if matches!(node, Node::Min(_, _)) { ca.min(cb) } else { ca.max(cb) };
                return GenPoly::constant(dim, v);
            }
            let (ta, tb) = (Arc::new(na.to_node()), Arc::new(nb.to_node()));
            let atom = if matches!(node, Node::Min(_, _)) {
                Atom::Min(ta, tb)
            } else {
                Atom::Max(ta, tb)
            };
            GenPoly::atom(dim, atom)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: usize) -> Arc<Node> {
        Arc::new(Node::Var(i))
    }

    #[test]
    fn trig_terms_cancel_as_like_terms() {
        // 2*x1*x2*cos(x1) - x2*cos(x1)*x1*2
        let cos = Arc::new(Node::Func(Func::Cos, v(0)));
        let two = Arc::new(Node::Const(Rational::from_integer(2.into())));
        let a = Node::Mul(two.clone(), Arc::new(Node::Mul(v(0), Arc::new(Node::Mul(v(1), cos.clone())))));
        let b = Node::Mul(Arc::new(Node::Mul(Arc::new(Node::Mul(v(1), cos)), v(0))), two);
        let e = Node::Sub(Arc::new(a), Arc::new(b));
        assert!(normalize(&e, 2).is_zero());
    }

    #[test]
    fn product_rule_through_atoms() {
        // d/dx1 (x1*cos(x1)) = cos(x1) - x1*sin(x1)
        let e = Node::Mul(v(0), Arc::new(Node::Func(Func::Cos, v(0))));
        let d = normalize(&e, 1).partial(0).unwrap();
        let expected = GenPoly::atom(1, Atom::Func(Func::Cos, v(0)))
            .sub(&GenPoly::var(1, 0).mul(&GenPoly::atom(1, Atom::Func(Func::Sin, v(0)))));
        assert_eq!(d, expected);
    }

    #[test]
    fn min_is_not_differentiable() {
        let e = Node::Min(v(0), Arc::new(Node::Const(Rational::zero())));
        assert!(matches!(normalize(&e, 1).partial(0), Err(ExprError::NonDifferentiable)));
    }

    #[test]
    fn division_by_constant_stays_polynomial() {
        let e = Node::Div(v(0), Arc::new(Node::Const(Rational::from_integer(4.into()))));
        let p = normalize(&e, 1).to_poly().unwrap();
        assert_eq!(p.coefficient(&[1]), Rational::new(1.into(), 4.into()));
    }
}
