//! Lie derivatives along vector fields and lowest homogeneous components.

use std::collections::HashMap;

use num_traits::Zero;

use super::poly::{Exponents, Poly};
use super::{Expr, ExprError, GenPoly, Rational, VectorFieldExpr};

/// L_f V = Σ_j ∂V/∂x_j · f_j.
pub fn lie_derivative(v: &Expr, f: &VectorFieldExpr) -> Result<Expr, ExprError> {
    if v.dim() != f.dim() {
        return Err(ExprError::DimensionMismatch { expected: v.dim(), found: f.dim() });
    }
    if v.has_min_max() {
        return Err(ExprError::NonDifferentiable);
    }
    if let (Some(vp), Some(fp)) = (v.poly(), f.polys()) {
        let mut acc = Poly::zero(v.dim());
        for (j, fj) in fp.iter().enumerate() {
            acc = &acc + &(&vp.partial(j) * fj);
        }
        return Ok(Expr::from_poly(acc));
    }
    let mut acc = GenPoly::zero(v.dim());
    for (j, fj) in f.components().iter().enumerate() {
        acc = acc.add(&v.normal().partial(j)?.mul(fj.normal()));
    }
    Ok(Expr::from_normal(acc))
}

/// [L¹V, …, L^kmax V] for polynomial data.
///
/// Uses the derivation D(x^α) = Σ_j α_j x^{α-e_j} f_j with a per-monomial cache,
/// so monomials shared between successive orders are differentiated once.
pub fn lie_chain(v: &Expr, f: &VectorFieldExpr, kmax: usize) -> Result<Vec<Expr>, ExprError> {
    if v.dim() != f.dim() {
        return Err(ExprError::DimensionMismatch { expected: v.dim(), found: f.dim() });
    }
    let vp = v.poly().ok_or(ExprError::NotPolynomial)?;
    let fp = f.polys().ok_or(ExprError::NotPolynomial)?;
    let d = v.dim();
    let mut cache: HashMap<Exponents, Poly> = HashMap::new();
    let mut current = vp.clone();
    let mut out = Vec::with_capacity(kmax);
    for _ in 0..kmax {
        let mut next = Poly::zero(d);
        for (alpha, c) in current.terms() {
            let dm = cache.entry(alpha.clone()).or_insert_with(|| derive_monomial(alpha, &fp, d));
            for (e, dc) in dm.terms() {
                next.add_term(e.clone(), c * dc);
            }
        }
        out.push(Expr::from_poly(next.clone()));
        current = next;
    }
    Ok(out)
}

fn derive_monomial(alpha: &[u32], f: &[Poly], d: usize) -> Poly {
    let mut acc = Poly::zero(d);
    for (j, fj) in f.iter().enumerate() {
        if alpha[j] == 0 || fj.is_zero() {
            continue;
        }
        let mut lowered = alpha.to_vec();
        lowered[j] -= 1;
        let coeff = Rational::from_integer(alpha[j].into());
        let mono = Poly::monomial(lowered, coeff);
        acc = &acc + &(&mono * fj);
    }
    acc
}

/// Nonzero homogeneous component of lowest degree, D^l e(0)·[x]_l / l!.
#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousForm {
    degree: u32,
    poly: Poly,
}

impl HomogeneousForm {
    pub fn new(poly: Poly) -> Option<Self> {
        if poly.is_zero() || !poly.is_homogeneous() {
            return None;
        }
        let degree = poly.degree()?;
        (degree > 0).then_some(HomogeneousForm { degree, poly })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    pub fn dim(&self) -> usize {
        self.poly.dim()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.poly.eval_f64(x)
    }
}

pub fn lowest_homogeneous(e: &Expr) -> Result<HomogeneousForm, ExprError> {
    let p = e.poly().ok_or(ExprError::NotPolynomial)?;
    if p.is_zero() {
        return Err(ExprError::ZeroPolynomial);
    }
    if !p.constant_term().is_zero() {
        return Err(ExprError::NonzeroAtOrigin);
    }
    let l = p.min_degree().ok_or(ExprError::ZeroPolynomial)?;
    Ok(HomogeneousForm { degree: l, poly: p.homogeneous_part(l) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(s: &[&str]) -> VectorFieldExpr {
        VectorFieldExpr::parse(s).unwrap()
    }

    #[test]
    fn lie_derivative_cubic_pair() {
        let v = Expr::parse("x1^4 + x2^4", 2).unwrap();
        let l = lie_derivative(&v, &field(&["x2^3", "-x1^3 - 2*x2^3"])).unwrap();
        assert_eq!(l, Expr::parse("-8*x2^6", 2).unwrap());
    }

    #[test]
    fn lie_derivative_cancels_trig_terms() {
        let v = Expr::parse("x1^2 + 2*x2^2 + x3^2", 3).unwrap();
        let f = field(&["-x1 + 2*x3 - 2*x2*cos(x1)", "x1*cos(x1)", "-x3"]);
        let l = lie_derivative(&v, &f).unwrap();
        assert!(l.is_polynomial());
        assert_eq!(l, Expr::parse("-2*(x1 - x3)^2", 3).unwrap());
    }

    #[test]
    fn lie_derivative_of_zero_field() {
        let v = Expr::parse("x1^2 + x1*x2", 2).unwrap();
        assert!(lie_derivative(&v, &VectorFieldExpr::zero(2)).unwrap().is_zero());
    }

    #[test]
    fn lie_chain_one_dimensional() {
        let v = Expr::parse("x1^2", 1).unwrap();
        let chain = lie_chain(&v, &field(&["-x1"]), 2).unwrap();
        assert_eq!(chain[0], Expr::parse("-2*x1^2", 1).unwrap());
        assert_eq!(chain[1], Expr::parse("4*x1^2", 1).unwrap());
        let zero = lie_chain(&v, &VectorFieldExpr::zero(1), 5).unwrap();
        assert_eq!(zero.len(), 5);
        assert!(zero.iter().all(Expr::is_zero));
    }

    #[test]
    fn lie_chain_rejects_trees() {
        let v = Expr::parse("x1^2", 1).unwrap();
        assert_eq!(lie_chain(&v, &field(&["-sin(x1)"]), 2), Err(ExprError::NotPolynomial));
    }

    #[test]
    fn lowest_homogeneous_examples() {
        let e = Expr::parse("-2*x1^2 - 8*x2^2 - 2*x1^2*x3^4", 3).unwrap();
        let h = lowest_homogeneous(&e).unwrap();
        assert_eq!(h.degree(), 2);
        assert_eq!(h.poly(), Expr::parse("-2*x1^2 - 8*x2^2", 3).unwrap().poly().unwrap());
        let h = lowest_homogeneous(&Expr::parse("x1^3 + x1^5", 1).unwrap()).unwrap();
        assert_eq!(h.degree(), 3);
        assert_eq!(lowest_homogeneous(&Expr::zero(2)), Err(ExprError::ZeroPolynomial));
        assert_eq!(lowest_homogeneous(&Expr::parse("1 + x1", 1).unwrap()), Err(ExprError::NonzeroAtOrigin));
    }
}
