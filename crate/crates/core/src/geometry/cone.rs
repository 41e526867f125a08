//! Cones cut out by lowest homogeneous components of iterated Lie derivatives.

use serde::Serialize;

use super::{first_order_near, GeometryError, Holds, SurfaceSet};
use crate::expr::{lie_chain, lowest_homogeneous, CompiledPoly, HomogeneousForm};
use crate::model::SwitchedSystem;
use crate::sampling::{direction_spacing, norm, sphere_directions};

/// Common zero set of homogeneous forms; the empty family is all of R^d.
#[derive(Clone, Debug)]
pub struct HomogeneousCone {
    dim: usize,
    forms: Vec<HomogeneousForm>,
    compiled: Vec<(CompiledPoly, Vec<CompiledPoly>)>,
    /// Orders k with L^kV ≡ 0, skipped instead of using a degree-1 convention.
    pub zero_orders: Vec<usize>,
    pub truncated_at: Option<usize>,
}

impl HomogeneousCone {
    pub fn new(dim: usize, forms: Vec<HomogeneousForm>) -> Self {
        let compiled = forms
            .iter()
            .map(|f| (f.poly().compile(), f.poly().gradient().iter().map(|g| g.compile()).collect()))
            .collect();
        HomogeneousCone { dim, forms, compiled, zero_orders: Vec::new(), truncated_at: None }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forms(&self) -> &[HomogeneousForm] {
        &self.forms
    }

    pub fn membership(&self, x: &[f64]) -> f64 {
        self.compiled.iter().map(|(c, _)| c.eval(x).abs()).fold(0.0, f64::max)
    }

    pub fn is_everything(&self) -> bool {
        self.forms.is_empty()
    }
}

impl SurfaceSet for HomogeneousCone {
    fn defect(&self, x: &[f64]) -> f64 {
        self.membership(x)
    }

    fn near(&self, x: &[f64], normal: Option<&[f64]>, band: f64, tol: f64) -> bool {
        self.compiled.iter().all(|(c, g)| {
            let v = c.eval(x);
            if v.abs() <= tol {
                return true;
            }
            let grad: Vec<f64> = g.iter().map(|gi| gi.eval(x)).collect();
            band > 0.0 && first_order_near(v, &grad, normal, band)
        })
    }
}

#[derive(Serialize)]
struct ConeSummary {
    forms: Vec<FormSummary>,
    zero_orders: Vec<usize>,
    truncated_at: Option<usize>,
}

#[derive(Serialize)]
struct FormSummary {
    degree: u32,
    form: String,
}

impl Serialize for HomogeneousCone {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ConeSummary {
            forms: self.forms.iter().map(|f| FormSummary { degree: f.degree(), form: f.poly().to_string() }).collect(),
            zero_orders: self.zero_orders.clone(),
            truncated_at: self.truncated_at,
        }
        .serialize(s)
    }
}

/// ∩_{k ≤ kmax} ker of the lowest homogeneous component of L^k_{f_i}V.
pub fn m_cone(sys: &SwitchedSystem, i: usize, kmax: usize) -> Result<HomogeneousCone, GeometryError> {
    if i >= sys.num_modes() {
        return Err(GeometryError::ModeOutOfRange(i));
    }
    let chain = lie_chain(sys.lyapunov(), &sys.mode(i).field, kmax.max(1))?;
    let mut forms = Vec::new();
    let mut zero_orders = Vec::new();
    for (k, lk) in chain.iter().enumerate() {
        if lk.is_zero() {
            zero_orders.push(k + 1);
            continue;
        }
        forms.push(lowest_homogeneous(lk)?);
    }
    let mut cone = HomogeneousCone::new(sys.dim(), forms);
    cone.zero_orders = zero_orders;
    cone.truncated_at = Some(kmax);
    Ok(cone)
}

/// Whether two cones meet only at the origin, by unit-sphere sampling.
pub fn cone_pair_trivial(
    c1: &HomogeneousCone,
    c2: &HomogeneousCone,
    mesh: usize,
    tol: f64,
) -> (Holds, Option<Vec<f64>>) {
    let d = c1.dim();
    if d != c2.dim() {
        return (Holds::Inconclusive, None);
    }
    let band = direction_spacing(d, mesh);
    for u in sphere_directions(d, mesh) {
        debug_assert!((norm(&u) - 1.0).abs() < 1e-9);
        if c1.near(&u, Some(&u), band, tol) && c2.near(&u, Some(&u), band, tol) {
            return (Holds::No, Some(u));
        }
    }
    (Holds::Yes, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;

    fn form(s: &str, d: usize) -> HomogeneousForm {
        HomogeneousForm::new(Expr::parse(s, d).unwrap().poly().unwrap().clone()).unwrap()
    }

    #[test]
    fn pair_tests() {
        let a = HomogeneousCone::new(2, vec![form("-2*x1^2", 2)]);
        let b = HomogeneousCone::new(2, vec![form("-2*x1^2 - 2*x2^2", 2)]);
        assert_eq!(cone_pair_trivial(&a, &b, 400, 1e-6).0, Holds::Yes);
        assert_eq!(cone_pair_trivial(&a, &a, 400, 1e-6).0, Holds::No);
        let x = HomogeneousCone::new(2, vec![form("x2", 2)]);
        let y = HomogeneousCone::new(2, vec![form("x1", 2)]);
        assert_eq!(cone_pair_trivial(&x, &y, 400, 1e-6).0, Holds::Yes);
    }

    #[test]
    fn m_cone_examples() {
        let one_d = SwitchedSystem::from_strings(1, "x1^2", &[&["-x1"]]).unwrap();
        let c = m_cone(&one_d, 0, 3).unwrap();
        assert_eq!(c.forms()[0].poly(), Expr::parse("-2*x1^2", 1).unwrap().poly().unwrap());
        assert!(c.membership(&[1.0]) > 0.0);

        let zero = SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["0", "0"]]).unwrap();
        let c = m_cone(&zero, 0, 5).unwrap();
        assert!(c.is_everything());
        assert_eq!(c.zero_orders, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn centre_graph_mode_cone() {
        let sys = SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["0", "-x2"], &["x1*x2", "-x2 - x1^2"]]).unwrap();
        let c2 = m_cone(&sys, 1, 3).unwrap();
        assert_eq!(c2.forms()[0].poly(), Expr::parse("-2*x2^2", 2).unwrap().poly().unwrap());
        assert_eq!(c2.forms()[2].degree(), 2);
        // M1 = {x2 = 0} lies in its cone
        let c1 = m_cone(&sys, 0, 3).unwrap();
        assert!(c1.membership(&[1.0, 0.0]) == 0.0);
    }
}
