//! K_i, M_i and their intersections as set oracles; Hessian kernels at the origin.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::subspace::{LinearSubspace, RANK_TOL};
use super::{GeometryError, SetKind, SetOracle, SurfaceSet};
use crate::expr::{lie_chain, rational_to_f64, Expr, ExprError};
use crate::model::SwitchedSystem;
use crate::sampling::{direction_spacing, sphere_directions};

fn check_mode(sys: &SwitchedSystem, i: usize) -> Result<(), GeometryError> {
    if i >= sys.num_modes() {
        return Err(GeometryError::ModeOutOfRange(i));
    }
    Ok(())
}

/// K_i = {L_{f_i}V = 0}.
pub fn k_set(sys: &SwitchedSystem, i: usize, tol: f64) -> Result<SetOracle, GeometryError> {
    check_mode(sys, i)?;
    Ok(SetOracle::new(SetKind::K(i), vec![sys.lie_derivative(i).clone()], tol))
}

/// M_i from the odd Lie derivatives L¹V, L³V, … up to order `kmax`.
pub fn m_set(sys: &SwitchedSystem, i: usize, kmax: usize, tol: f64) -> Result<SetOracle, GeometryError> {
    check_mode(sys, i)?;
    let chain = lie_chain(sys.lyapunov(), &sys.mode(i).field, kmax.max(1))?;
    let odd: Vec<Expr> = chain.into_iter().step_by(2).collect();
    Ok(SetOracle::new(SetKind::M(i), odd, tol).with_truncation(kmax))
}

/// D²e(0) as a symmetric matrix. Exact on the polynomial path; symbolic second
/// partials on trees; central finite differences for non-differentiable trees.
pub fn hessian_matrix_at_origin(e: &Expr) -> Result<DMatrix<f64>, ExprError> {
    let d = e.dim();
    if let Some(p) = e.poly() {
        let q = p.homogeneous_part(2);
        let mut h = DMatrix::zeros(d, d);
        for (exps, c) in q.terms() {
            let c = rational_to_f64(c);
            let idx: Vec<usize> = exps.iter().enumerate().filter(|(_, &k)| k > 0).map(|(j, _)| j).collect();
            match idx.as_slice() {
                [j] => h[(*j, *j)] = 2.0 * c,
                [j, k] => {
                    h[(*j, *k)] = c;
                    h[(*k, *j)] = c;
                }
                _ => unreachable!("degree-2 monomial"),
            }
        }
        return Ok(h);
    }
    let origin = vec![0.0; d];
    match e.gradient() {
        Ok(g) => {
            let mut h = DMatrix::zeros(d, d);
            for (j, gj) in g.iter().enumerate() {
                for k in 0..d {
                    h[(j, k)] = gj.partial(k)?.evaluate(&origin)?;
                }
            }
            Ok((&h + h.transpose()) * 0.5)
        }
        Err(ExprError::NonDifferentiable) => {
            let c = e.compile();
            let step = 1e-4;
            let mut h = DMatrix::zeros(d, d);
            let mut x = origin.clone();
            for j in 0..d {
                for k in 0..d {
                    let mut f = |sj: f64, sk: f64| {
                        x.iter_mut().for_each(|v| *v = 0.0);
                        x[j] += sj;
                        x[k] += sk;
                        c.eval(&x)
                    };
                    h[(j, k)] = (f(step, step) - f(step, -step) - f(-step, step) + f(-step, -step)) / (4.0 * step * step);
                }
            }
            Ok((&h + h.transpose()) * 0.5)
        }
        Err(other) => Err(other),
    }
}

/// ker D²L_{f_i}V(0); rejects a positive eigenvalue (L_{f_i}V would not be maximal at 0).
pub fn hessian_kernel(sys: &SwitchedSystem, i: usize) -> Result<LinearSubspace, GeometryError> {
    check_mode(sys, i)?;
    let h = hessian_matrix_at_origin(sys.lie_derivative(i))?;
    kernel_of_symmetric(&h)
}

pub(crate) fn kernel_of_symmetric(h: &DMatrix<f64>) -> Result<LinearSubspace, GeometryError> {
    let d = h.nrows();
    let eig = SymmetricEigen::try_new(h.clone(), f64::EPSILON, 10_000).ok_or(GeometryError::Eigen)?;
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, l| m.max(l.abs()));
    let cut = RANK_TOL * scale;
    if let Some(&l) = eig.eigenvalues.iter().find(|&&l| l > cut) {
        return Err(GeometryError::PositiveEigenvalue(l));
    }
    let basis: Vec<Vec<f64>> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, l)| l.abs() <= cut)
        .map(|(k, _)| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    Ok(LinearSubspace::span(d, &basis, RANK_TOL))
}

/// K = ∩ K_i with a sampled test of K = {0}.
#[derive(Clone, Debug)]
pub struct KIntersection {
    pub oracle: SetOracle,
    pub k_is_origin: bool,
    pub witness: Option<Vec<f64>>,
    pub radii: Vec<f64>,
    pub mesh: usize,
}

#[derive(Serialize)]
struct KSummary<'a> {
    k_is_origin: bool,
    witness: &'a Option<Vec<f64>>,
    radii: &'a [f64],
    mesh: usize,
    defining: Vec<String>,
}

impl Serialize for KIntersection {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        KSummary {
            k_is_origin: self.k_is_origin,
            witness: &self.witness,
            radii: &self.radii,
            mesh: self.mesh,
            defining: self.oracle.descriptions(),
        }
        .serialize(s)
    }
}

pub fn k_intersection(sys: &SwitchedSystem, tol: f64, mesh: usize) -> KIntersection {
    k_intersection_on(sys, tol, mesh, &[0.1, 0.5, 1.0])
}

/// Same test on spheres of the given radii. Isolated points of K off these spheres are not seen.
pub fn k_intersection_on(sys: &SwitchedSystem, tol: f64, mesh: usize, radii: &[f64]) -> KIntersection {
    let exprs: Vec<Expr> = (0..sys.num_modes()).map(|i| sys.lie_derivative(i).clone()).collect();
    let oracle = SetOracle::new(SetKind::KIntersection, exprs, tol);
    let radii = radii.to_vec();
    let d = sys.dim();
    let dirs = sphere_directions(d, mesh);
    let spacing = direction_spacing(d, mesh);
    // the raw floor is taken relative to the defect scale on each sphere, so that
    // high-order vanishing near the origin is not mistaken for membership
    let probe = oracle.clone().with_tol(0.0);
    let mut witness = None;
    'outer: for &rho in &radii {
        let sphere: Vec<Vec<f64>> = dirs.iter().map(|u| u.iter().map(|v| v * rho).collect()).collect();
        let scale = sphere.iter().map(|x| oracle.membership(x)).fold(0.0, f64::max);
        for x in sphere {
            if probe.near(&x, Some(&x), spacing * rho, tol * scale) {
                witness = Some(x);
                break 'outer;
            }
        }
    }
    KIntersection { oracle, k_is_origin: witness.is_none(), witness, radii, mesh }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_damped() -> SwitchedSystem {
        SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["-x1 - x2", "x1"], &["-x1", "-x2"]]).unwrap()
    }

    #[test]
    fn hessian_kernels_of_rotation_damped_pair() {
        let sys = rotation_damped();
        let k1 = hessian_kernel(&sys, 0).unwrap();
        assert!(k1.same_as(&LinearSubspace::span(2, &[vec![0.0, 1.0]], RANK_TOL), 1e-12));
        assert_eq!(hessian_kernel(&sys, 1).unwrap().rank(), 0);
    }

    #[test]
    fn sextic_has_full_kernel() {
        let sys = SwitchedSystem::from_strings(2, "x1^4 + x2^4", &[&["x2^3", "-x1^3 - 2*x2^3"]]).unwrap();
        assert_eq!(hessian_kernel(&sys, 0).unwrap().rank(), 2);
    }

    #[test]
    fn positive_eigenvalue_rejected() {
        let sys = SwitchedSystem::from_strings(1, "x1^2", &[&["x1"]]).unwrap();
        assert!(matches!(hessian_kernel(&sys, 0), Err(GeometryError::PositiveEigenvalue(_))));
    }

    #[test]
    fn tree_hessian_matches_polynomial() {
        let e = Expr::parse("-2*x1^2 + 4*x1*x3*cos(x2) - 2*x3^2", 3).unwrap();
        let h = hessian_matrix_at_origin(&e).unwrap();
        assert!((h[(0, 2)] - 4.0).abs() < 1e-12 && (h[(0, 0)] + 4.0).abs() < 1e-12);
        let m = Expr::parse("-min(x1, 0)^2 - x2^2", 2).unwrap();
        let h = hessian_matrix_at_origin(&m).unwrap();
        assert!((h[(1, 1)] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn k_sets_and_intersections() {
        let sys = SwitchedSystem::from_strings(
            2,
            "x1^4 + x2^4",
            &[&["x2^3", "-x1^3 - 2*x2^3"], &["-2*x1^3 - x2^3", "x1^3"]],
        )
        .unwrap();
        let k1 = k_set(&sys, 0, 1e-6).unwrap();
        assert!(k1.contains(&[0.7, 0.0]) && !k1.contains(&[0.0, 0.7]));
        assert!(k_intersection(&sys, 1e-6, 400).k_is_origin);

        let planar = SwitchedSystem::from_strings(
            2,
            "x1^4 + 2*x2^2",
            &[&["-x1^3 - x2", "x1^3"], &["-2*x1^3 - x2", "x1^3"]],
        )
        .unwrap();
        let k = k_intersection(&planar, 1e-6, 400);
        assert!(!k.k_is_origin);
        let w = k.witness.unwrap();
        assert!(w[0].abs() < 0.5 * w[1].abs());
    }

    #[test]
    fn zero_field_k_set_is_everything() {
        let sys = SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["0", "0"]]).unwrap();
        let k = k_set(&sys, 0, 1e-6).unwrap();
        assert_eq!(k.membership(&[3.0, -1.0]), 0.0);
    }

    #[test]
    fn m_set_uses_odd_orders() {
        let sys = rotation_damped();
        let m = m_set(&sys, 0, 3, 1e-6).unwrap();
        assert_eq!(m.exprs().len(), 2);
        assert_eq!(m.truncated_at(), Some(3));
        // M1 ∪ M2 = {0}: on {x1 = 0} away from the origin the defect is nonzero
        for t in [0.5, 1.0, -1.0] {
            assert!(m.membership(&[0.0, t]) > 1e-3);
        }
    }
}
