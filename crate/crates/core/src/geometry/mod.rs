//! Tangency and invariance sets, their linear and conic approximations at the
//! origin, and sampling-based checkers for the geometric stability conditions.
//!
//! Connected components are estimated from ε-graphs over level-set samples, so
//! every checker is a falsifier with strong evidence rather than a proof; sparse
//! sampling is reported as `inconclusive`.

mod cone;
mod levelset;
mod sets;
mod subspace;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::expr::{CompiledExpr, Expr, ExprError};
use crate::sampling::norm;

pub use cone::{cone_pair_trivial, m_cone, HomogeneousCone};
pub use levelset::{
    check_condition_c, check_condition_k, check_theo2, components_touching, eps_components, level_set_points,
    mean_nearest_neighbour, LevelSetSample, SamplingParams,
};
pub use sets::{hessian_kernel, hessian_matrix_at_origin, k_intersection, k_intersection_on, k_set, m_set, KIntersection};
pub use subspace::{subspace_conditions, LinearSubspace, SubspaceFamily, RANK_TOL};

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_KMAX: usize = 5;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("mode index {0} out of range")]
    ModeOutOfRange(usize),
    #[error("Hessian of L_fV at 0 has positive eigenvalue {0:e}; V is not a weak Lyapunov function for this mode")]
    PositiveEigenvalue(f64),
    #[error("eigensolver failed")]
    Eigen,
}

/// A set that can be probed on a sampled hypersurface.
pub trait SurfaceSet: Send + Sync {
    /// Raw defect, ≈ 0 inside the set.
    fn defect(&self, x: &[f64]) -> f64;

    /// Membership at sampling resolution: the raw defect is below `tol`, or the
    /// first-order distance estimate within the surface is below `band`.
    /// `normal` is the surface normal at `x` (tangential gradients are used).
    fn near(&self, x: &[f64], normal: Option<&[f64]>, band: f64, tol: f64) -> bool;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetKind {
    K(usize),
    M(usize),
    KIntersection,
    Custom,
}

/// Zero set of one or more expressions.
#[derive(Clone, Debug)]
pub struct SetOracle {
    kind: SetKind,
    tol: f64,
    exprs: Vec<Expr>,
    compiled: Vec<CompiledExpr>,
    grads: Vec<Option<Vec<CompiledExpr>>>,
    truncated_at: Option<usize>,
}

impl SetOracle {
    pub fn new(kind: SetKind, exprs: Vec<Expr>, tol: f64) -> Self {
        let compiled = exprs.iter().map(Expr::compile).collect();
        let grads = exprs
            .iter()
            .map(|e| e.gradient().ok().map(|g| g.iter().map(Expr::compile).collect()))
            .collect();
        SetOracle { kind, tol, exprs, compiled, grads, truncated_at: None }
    }

    pub fn custom(exprs: Vec<Expr>, tol: f64) -> Self {
        Self::new(SetKind::Custom, exprs, tol)
    }

    pub fn with_truncation(mut self, kmax: usize) -> Self {
        self.truncated_at = Some(kmax);
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn truncated_at(&self) -> Option<usize> {
        self.truncated_at
    }

    /// max_k |e_k(x)|.
    pub fn membership(&self, x: &[f64]) -> f64 {
        self.compiled.iter().map(|c| c.eval(x).abs()).fold(0.0, f64::max)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.membership(x) <= self.tol
    }

    pub fn descriptions(&self) -> Vec<String> {
        self.exprs.iter().map(|e| e.to_string()).collect()
    }
}

/// First-order distance test |e| ≤ band·|∇_tan e| for one expression.
pub(crate) fn first_order_near(value: f64, grad: &[f64], normal: Option<&[f64]>, band: f64) -> bool {
    let g: Vec<f64> = match normal {
        Some(n) => {
            let nn = norm(n);
            if nn == 0.0 {
                grad.to_vec()
            } else {
                let dot: f64 = grad.iter().zip(n).map(|(a, b)| a * b).sum::<f64>() / (nn * nn);
                grad.iter().zip(n).map(|(a, b)| a - dot * b).collect()
            }
        }
        None => grad.to_vec(),
    };
    value.abs() <= band * norm(&g)
}

impl SurfaceSet for SetOracle {
    fn defect(&self, x: &[f64]) -> f64 {
        self.membership(x)
    }

    fn near(&self, x: &[f64], normal: Option<&[f64]>, band: f64, tol: f64) -> bool {
        let tol = tol.max(self.tol);
        self.compiled.iter().zip(&self.grads).all(|(c, g)| {
            let v = c.eval(x);
            if v.abs() <= tol {
                return true;
            }
            match g {
                Some(g) if band > 0.0 => {
                    let grad: Vec<f64> = g.iter().map(|gi| gi.eval(x)).collect();
                    first_order_near(v, &grad, normal, band)
                }
                _ => false,
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Holds {
    Yes,
    No,
    Inconclusive,
}

impl Holds {
    pub fn as_str(self) -> &'static str {
        match self {
            Holds::Yes => "yes",
            Holds::No => "no",
            Holds::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Holds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Holds {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// Outcome of one condition check.
#[derive(Clone, Debug, Serialize)]
pub struct ConditionVerdict {
    pub condition: String,
    pub holds: Holds,
    pub witness: Vec<Vec<f64>>,
    pub params: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ConditionVerdict {
    pub fn new(condition: impl Into<String>, holds: Holds) -> Self {
        ConditionVerdict { condition: condition.into(), holds, witness: Vec::new(), params: BTreeMap::new(), notes: Vec::new() }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_membership_is_max_defect() {
        let a = Expr::parse("x1", 2).unwrap();
        let b = Expr::parse("x2^2", 2).unwrap();
        let o = SetOracle::custom(vec![a, b], 1e-6);
        assert_eq!(o.membership(&[0.5, -2.0]), 4.0);
        assert!(o.contains(&[0.0, 1e-4]));
        assert!(!o.contains(&[0.0, 1e-2]));
    }

    #[test]
    fn first_order_test_uses_tangential_gradient() {
        // e = x2 near (1, 0.01) on the unit circle: tangential gradient ≈ (−0.01, 1)
        let o = SetOracle::custom(vec![Expr::parse("x2", 2).unwrap()], 1e-9);
        let x = [1.0, 0.01];
        assert!(o.near(&x, Some(&x), 0.02, 0.0));
        assert!(!o.near(&x, Some(&x), 0.005, 0.0));
        // radial direction: the tangential gradient of |x|² − 1 vanishes
        let r = SetOracle::custom(vec![Expr::parse("x1^2 + x2^2 - 1", 2).unwrap()], 1e-9);
        let y = [1.1, 0.0];
        assert!(!r.near(&y, Some(&y), 10.0, 0.0));
    }

    #[test]
    fn verdict_serialises_holds_as_string() {
        let v = ConditionVerdict::new("K", Holds::Inconclusive).param("mesh", 10);
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"condition":"K","holds":"inconclusive","witness":[],"params":{"mesh":10}}"#);
    }
}
