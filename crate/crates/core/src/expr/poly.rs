//! Exact sparse multivariate polynomials with rational coefficients.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::Rational;

/// Exponent vector, one entry per variable.
pub type Exponents = Vec<u32>;

/// Sparse polynomial over `dim` variables. Zero coefficients are never stored.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<Exponents, Rational>,
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: Rational) -> Self {
        let mut p = Poly::zero(dim);
        p.add_term(vec![0; dim], c);
        p
    }

    pub fn from_int(dim: usize, c: i64) -> Self {
        Poly::constant(dim, Rational::from_integer(BigInt::from(c)))
    }

    /// The monomial `x_{index}` (0-based).
    pub fn var(dim: usize, index: usize) -> Self {
        assert!(index < dim, "variable index {index} out of range for dim {dim}");
        let mut e = vec![0; dim];
        e[index] = 1;
        let mut p = Poly::zero(dim);
        p.terms.insert(e, Rational::one());
        p
    }

    pub fn monomial(exps: Exponents, c: Rational) -> Self {
        let mut p = Poly::zero(exps.len());
        p.add_term(exps, c);
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, merging duplicates.
    pub fn from_terms<I>(dim: usize, terms: I) -> Self
    where
        I: IntoIterator<Item = (Exponents, Rational)>,
    {
        let mut p = Poly::zero(dim);
        for (e, c) in terms {
            assert_eq!(e.len(), dim);
            p.add_term(e, c);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponents, &Rational)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, exps: &[u32]) -> Rational {
        self.terms.get(exps).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn add_term(&mut self, exps: Exponents, c: Rational) {
        debug_assert_eq!(exps.len(), self.dim);
        if c.is_zero() {
            return;
        }
        match self.terms.entry(exps) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let sum = o.get() + c;
                if sum.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = sum;
                }
            }
        }
    }

    /// Constant term.
    pub fn constant_term(&self) -> Rational {
        self.coefficient(&vec![0; self.dim])
    }

    /// Returns the constant value when the polynomial has no non-constant monomial.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&k| k == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).max()
    }

    /// Smallest total degree among stored monomials; `None` for zero.
    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| e.iter().sum()).min()
    }

    /// Part of the polynomial made of monomials of total degree exactly `k`.
    pub fn homogeneous_part(&self, k: u32) -> Poly {
        Poly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.iter().sum::<u32>() == k)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    /// Drops every monomial of total degree above `max_degree`.
    pub fn truncate(&self, max_degree: u32) -> Poly {
        Poly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.iter().sum::<u32>() <= max_degree)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.degree() == self.min_degree()
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero(self.dim);
        }
        Poly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(e, k)| (e.clone(), k * c))
                .collect(),
        }
    }

    pub fn pow(&self, n: u32) -> Poly {
        let mut result = Poly::constant(self.dim, Rational::one());
        let mut base = self.clone();
        let mut n = n;
        while n > 0 {
            if n & 1 == 1 {
                result = &result * &base;
            }
            n >>= 1;
            if n > 0 {
                base = &base * &base;
            }
        }
        result
    }

    /// Exact partial derivative with respect to variable `index` (0-based).
    pub fn partial(&self, index: usize) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (e, c) in &self.terms {
            let k = e[index];
            if k == 0 {
                continue;
            }
            let mut e2 = e.clone();
            e2[index] = k - 1;
            out.add_term(e2, c * Rational::from_integer(BigInt::from(k)));
        }
        out
    }

    pub fn gradient(&self) -> Vec<Poly> {
        (0..self.dim).map(|i| self.partial(i)).collect()
    }

    /// Substitutes `x_j -> subs[j]`. All substitutes must share one dimension.
    pub fn compose(&self, subs: &[Poly]) -> Poly {
        assert_eq!(subs.len(), self.dim);
        let target = subs.first().map(|p| p.dim).unwrap_or(0);
        let mut cache: Vec<Vec<Poly>> = subs
            .iter()
            .map(|s| vec![Poly::constant(target, Rational::one()), s.clone()])
            .collect();
        let mut out = Poly::zero(target);
        for (e, c) in &self.terms {
            let mut term = Poly::constant(target, c.clone());
            for (j, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                while cache[j].len() <= k as usize {
                    let next = &cache[j][cache[j].len() - 1] * &subs[j];
                    cache[j].push(next);
                }
                term = &term * &cache[j][k as usize];
            }
            out = &out + &term;
        }
        out
    }

    /// Exact evaluation at a rational point.
    pub fn eval_exact(&self, x: &[Rational]) -> Rational {
        assert_eq!(x.len(), self.dim);
        let mut acc = Rational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    t *= num_traits::pow(xi.clone(), k as usize);
                }
            }
            acc += t;
        }
        acc
    }

    /// Evaluates exactly at the binary value of `x` and rounds once.
    pub fn eval_rounded(&self, x: &[f64]) -> f64 {
        let q: Vec<Rational> = x.iter().map(|&v| rational_from_f64(v)).collect();
        rational_to_f64(&self.eval_exact(&q))
    }

    /// Floating-point evaluation, by direct summation.
    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (e, c) in &self.terms {
            let mut t = rational_to_f64(c);
            for (xi, &k) in x.iter().zip(e) {
                if k > 0 {
                    t *= xi.powi(k as i32);
                }
            }
            acc += t;
        }
        acc
    }

    /// Largest absolute coefficient, as a float.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms
            .values()
            .map(|c| rational_to_f64(&c.abs()))
            .fold(0.0, f64::max)
    }

    /// Re-embeds the polynomial in `dim` variables, keeping the first `self.dim` exponents.
    pub fn embed(&self, dim: usize) -> Poly {
        assert!(dim >= self.dim);
        Poly {
            dim,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| {
                    let mut e2 = e.clone();
                    e2.resize(dim, 0);
                    (e2, c.clone())
                })
                .collect(),
        }
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly::new(self)
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        assert_eq!(self.dim, rhs.dim);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        assert_eq!(self.dim, rhs.dim);
        let mut out = self.clone();
        for (e, c) in &rhs.terms {
            out.add_term(e.clone(), -c.clone());
        }
        out
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        assert_eq!(self.dim, rhs.dim);
        let mut out = Poly::zero(self.dim);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &rhs.terms {
                let e: Exponents = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.clone(), -c.clone()))
                .collect(),
        }
    }
}

impl fmt::Display for Poly {
    /// Prints in the expression grammar, highest degree first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut ordered: Vec<(&Exponents, &Rational)> = self.terms.iter().collect();
        ordered.sort_by(|a, b| {
            let da: u32 = a.0.iter().sum();
            let db: u32 = b.0.iter().sum();
            db.cmp(&da).then_with(|| b.0.cmp(a.0))
        });
        for (n, (e, c)) in ordered.into_iter().enumerate() {
            let negative = c.is_negative();
            let mag = c.abs();
            if n == 0 {
                if negative {
                    write!(f, "-")?;
                }
            } else if negative {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let is_const = e.iter().all(|&k| k == 0);
            let mut factors: Vec<String> = Vec::new();
            if !mag.is_one() || is_const {
                factors.push(format_rational(&mag));
            }
            for (i, &k) in e.iter().enumerate() {
                match k {
                    0 => {}
                    1 => factors.push(format!("x{}", i + 1)),
                    _ => factors.push(format!("x{}^{}", i + 1, k)),
                }
            }
            write!(f, "{}", factors.join("*"))?;
        }
        Ok(())
    }
}

/// Formats a non-negative or negative rational in the expression grammar.
pub fn format_rational(q: &Rational) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("({}/{})", q.numer(), q.denom())
    }
}

/// Exact conversion of a finite float to a rational.
pub fn rational_from_f64(v: f64) -> Rational {
    Rational::from_float(v).unwrap_or_else(Rational::zero)
}

/// Nearest float to a rational (one rounding for moderately sized values).
pub fn rational_to_f64(q: &Rational) -> f64 {
    if let (Some(n), Some(d)) = (q.numer().to_f64(), q.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && n.abs() < 9.0e15 && d < 9.0e15 {
            return n / d;
        }
    }
    // Large numerator or denominator: scale to keep 64 significant bits.
    let nb = q.numer().bits() as i64;
    let db = q.denom().bits() as i64;
    let shift = 64 - (nb - db);
    let scaled = if shift >= 0 {
        (q.numer() << shift as usize) / q.denom()
    } else {
        q.numer() / (q.denom() << (-shift) as usize)
    };
    scaled.to_f64().unwrap_or(f64::NAN) * 2f64.powi(-shift as i32)
}

/// Floating-point evaluator for a fixed polynomial.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    dim: usize,
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    fn new(p: &Poly) -> Self {
        CompiledPoly {
            dim: p.dim,
            terms: p
                .terms
                .iter()
                .map(|(e, c)| {
                    let powers = e
                        .iter()
                        .enumerate()
                        .filter(|(_, &k)| k > 0)
                        .map(|(i, &k)| (i, k as i32))
                        .collect();
                    (rational_to_f64(c), powers)
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, powers) in &self.terms {
            let mut t = *c;
            for &(i, k) in powers {
                t *= match k {
                    1 => x[i],
                    2 => x[i] * x[i],
                    _ => x[i].powi(k),
                };
            }
            acc += t;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn arithmetic_merges_like_terms() {
        let x = Poly::var(2, 0);
        let y = Poly::var(2, 1);
        let s = &(&x + &y) * &(&x - &y);
        let expect = &x.pow(2) - &y.pow(2);
        assert_eq!(s, expect);
        assert_eq!(s.num_terms(), 2);
        assert!((&s - &expect).is_zero());
    }

    #[test]
    fn partial_power_rule() {
        let x1 = Poly::var(2, 0);
        let x2 = Poly::var(2, 1);
        let p = &x1.pow(4) + &x2.pow(2).scale(&q(2, 1));
        assert_eq!(p.partial(0), x1.pow(3).scale(&q(4, 1)));
        assert!(Poly::from_int(2, 7).partial(1).is_zero());
    }

    #[test]
    fn homogeneous_parts_and_degrees() {
        let x1 = Poly::var(1, 0);
        let p = &x1.pow(3) + &x1.pow(5);
        assert_eq!(p.min_degree(), Some(3));
        assert_eq!(p.degree(), Some(5));
        assert_eq!(p.homogeneous_part(3), x1.pow(3));
        assert!(Poly::zero(3).degree().is_none());
    }

    #[test]
    fn compose_substitutes() {
        // p(x, y) = x*y, substitute x -> t^2, y -> t + 1.
        let p = &Poly::var(2, 0) * &Poly::var(2, 1);
        let t = Poly::var(1, 0);
        let one = Poly::from_int(1, 1);
        let r = p.compose(&[t.pow(2), &t + &one]);
        assert_eq!(r, &t.pow(3) + &t.pow(2));
    }

    #[test]
    fn exact_and_float_evaluation_agree() {
        let x1 = Poly::var(2, 0);
        let x2 = Poly::var(2, 1);
        let v = &x1.pow(2) + &x2.pow(2);
        assert_eq!(v.eval_exact(&[q(3, 1), q(4, 1)]), q(25, 1));
        assert_eq!(v.eval_rounded(&[3.0, 4.0]), 25.0);
        assert_eq!(v.compile().eval(&[3.0, 4.0]), 25.0);
    }

    #[test]
    fn display_is_readable() {
        let x1 = Poly::var(3, 0);
        let x3 = Poly::var(3, 2);
        let p = &(&x1 - &x3).pow(2).scale(&q(-1, 1)) + &Poly::constant(3, q(1, 2));
        assert_eq!(p.to_string(), "-x1^2 + 2*x1*x3 - x3^2 + (1/2)");
    }

    #[test]
    fn big_rational_rounding() {
        let big = Rational::new(BigInt::from(10).pow(40) + 1, BigInt::from(10).pow(39));
        assert!((rational_to_f64(&big) - 10.0).abs() < 1e-14);
        assert_eq!(rational_to_f64(&q(1, 3)), 1.0 / 3.0);
    }
}
