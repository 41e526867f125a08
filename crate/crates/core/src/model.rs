//! Switched systems ẋ = f_u(x) with a candidate common weak Lyapunov function.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{lie_derivative, CompiledExpr, Expr, ExprError, VectorFieldExpr};
use crate::sampling::{ball_points, norm, sphere_directions};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("mode `{mode}`: {source}")]
    InMode { mode: String, source: ExprError },
    #[error("a switched system needs at least one mode")]
    NoModes,
    #[error("mode `{mode}` has dimension {found}, expected {expected}")]
    DimensionMismatch { mode: String, expected: usize, found: usize },
    #[error("Lyapunov function does not vanish at the origin")]
    LyapunovNonzeroAtOrigin,
    #[error("field of mode `{0}` does not vanish at the origin")]
    FieldNonzeroAtOrigin(String),
    #[error("invalid system file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Hypotheses a user may assert but the tool cannot verify.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Assumptions {
    /// Every mode is globally asymptotically stable on its own.
    pub modes_gas: bool,
    /// Fields and V are analytic.
    pub analytic: bool,
    pub radially_unbounded: bool,
    /// DV(x) = 0 only at x = 0.
    pub dv_nonzero_off_origin: bool,
}

impl Assumptions {
    pub fn all() -> Self {
        Assumptions { modes_gas: true, analytic: true, radially_unbounded: true, dv_nonzero_off_origin: true }
    }
}

#[derive(Clone, Debug)]
pub struct Mode {
    pub name: String,
    pub field: VectorFieldExpr,
}

#[derive(Clone, Debug)]
pub struct SwitchedSystem {
    dim: usize,
    modes: Vec<Mode>,
    lyapunov: Expr,
    lie: Vec<Expr>,
    assumptions: Assumptions,
}

impl SwitchedSystem {
    pub fn new(lyapunov: Expr, modes: Vec<Mode>) -> Result<Self, ModelError> {
        let dim = lyapunov.dim();
        if modes.is_empty() {
            return Err(ModelError::NoModes);
        }
        for m in &modes {
            if m.field.dim() != dim {
                return Err(ModelError::DimensionMismatch { mode: m.name.clone(), expected: dim, found: m.field.dim() });
            }
        }
        let origin = vec![0.0; dim];
        let v0_nonzero = match lyapunov.poly() {
            Some(p) => !num_traits::Zero::is_zero(&p.constant_term()),
            None => lyapunov.evaluate(&origin)?.abs() > 1e-12,
        };
        if v0_nonzero {
            return Err(ModelError::LyapunovNonzeroAtOrigin);
        }
        for m in &modes {
            if !m.field.vanishes_at_origin(1e-12)? {
                return Err(ModelError::FieldNonzeroAtOrigin(m.name.clone()));
            }
        }
        let lie = modes
            .iter()
            .map(|m| lie_derivative(&lyapunov, &m.field).map_err(|e| ModelError::InMode { mode: m.name.clone(), source: e }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SwitchedSystem { dim, modes, lyapunov, lie, assumptions: Assumptions::default() })
    }

    pub fn with_assumptions(mut self, assumptions: Assumptions) -> Self {
        self.assumptions = assumptions;
        self
    }

    /// Builds a system from string expressions; mode names default to `f1`, `f2`, ….
    pub fn from_strings(dim: usize, lyapunov: &str, fields: &[&[&str]]) -> Result<Self, ModelError> {
        let v = Expr::parse(lyapunov, dim)?;
        let modes = fields
            .iter()
            .enumerate()
            .map(|(i, comps)| {
                let name = format!("f{}", i + 1);
                parse_field(dim, comps, &name).map(|field| Mode { name, field })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(v, modes)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: SystemFile = serde_json::from_str(text)?;
        file.build()
    }

    pub fn to_file(&self) -> SystemFile {
        SystemFile {
            dim: self.dim,
            lyapunov: self.lyapunov.to_string(),
            modes: self
                .modes
                .iter()
                .map(|m| ModeFile { name: m.name.clone(), field: m.field.components().iter().map(|c| c.to_string()).collect() })
                .collect(),
            assumptions: Some(self.assumptions),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn mode(&self, i: usize) -> &Mode {
        &self.modes[i]
    }

    pub fn labels(&self) -> Vec<String> {
        self.modes.iter().map(|m| m.name.clone()).collect()
    }

    pub fn lyapunov(&self) -> &Expr {
        &self.lyapunov
    }

    /// L_{f_i}V, computed once at construction.
    pub fn lie_derivative(&self, i: usize) -> &Expr {
        &self.lie[i]
    }

    pub fn assumptions(&self) -> Assumptions {
        self.assumptions
    }

    pub fn is_polynomial(&self) -> bool {
        self.lyapunov.is_polynomial() && self.modes.iter().all(|m| m.field.is_polynomial())
    }

    /// Syntactic analyticity: no min/max anywhere (sin/cos/exp are analytic).
    pub fn is_syntactically_analytic(&self) -> bool {
        !self.lyapunov.has_min_max() && self.modes.iter().all(|m| !m.field.has_min_max())
    }
}

fn parse_field(dim: usize, comps: &[&str], name: &str) -> Result<VectorFieldExpr, ModelError> {
    if comps.len() != dim {
        return Err(ModelError::DimensionMismatch { mode: name.to_string(), expected: dim, found: comps.len() });
    }
    let exprs = comps
        .iter()
        .map(|c| Expr::parse(c, dim))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ModelError::InMode { mode: name.to_string(), source: e })?;
    Ok(VectorFieldExpr::new(exprs)?)
}

/// On-disk system definition.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SystemFile {
    pub dim: usize,
    pub lyapunov: String,
    pub modes: Vec<ModeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumptions: Option<Assumptions>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModeFile {
    pub name: String,
    pub field: Vec<String>,
}

impl SystemFile {
    pub fn build(&self) -> Result<SwitchedSystem, ModelError> {
        let v = Expr::parse(&self.lyapunov, self.dim)?;
        let modes = self
            .modes
            .iter()
            .map(|m| {
                let comps: Vec<&str> = m.field.iter().map(String::as_str).collect();
                parse_field(self.dim, &comps, &m.name).map(|field| Mode { name: m.name.clone(), field })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(SwitchedSystem::new(v, modes)?.with_assumptions(self.assumptions.unwrap_or_default()))
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ModeCertification {
    pub mode: String,
    pub worst_value: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CertificationReport {
    pub modes: Vec<ModeCertification>,
    pub tol: f64,
    pub seed: u64,
    pub pass: bool,
}

/// Sampled check that every L_{f_i}V ≤ tol on `n` Halton points of the ball.
pub fn certify_weak_lyapunov(sys: &SwitchedSystem, radius: f64, n: usize, tol: f64, seed: u64) -> CertificationReport {
    let pts = ball_points(sys.dim(), radius, n.max(1), seed);
    let modes: Vec<ModeCertification> = (0..sys.num_modes())
        .map(|i| {
            let l = sys.lie_derivative(i).compile();
            let mut worst = f64::NEG_INFINITY;
            let mut at = vec![0.0; sys.dim()];
            for p in &pts {
                let v = l.eval(p);
                // NaN counts as a failure
                if v > worst || v.is_nan() {
                    worst = if v.is_nan() { f64::INFINITY } else { v };
                    at = p.clone();
                }
            }
            ModeCertification { mode: sys.mode(i).name.clone(), worst_value: worst, worst_point: at, samples: pts.len(), radius }
        })
        .collect();
    let pass = modes.iter().all(|m| m.worst_value <= tol);
    CertificationReport { modes, tol, seed, pass }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct PositivityReport {
    pub pass: bool,
    pub min_value: f64,
    pub witness: Option<Vec<f64>>,
    pub samples: usize,
}

/// Sampled positive-definiteness of V on the ball minus the origin.
///
/// The Halton scan is followed by projected gradient descent on the outer spheres
/// started from the lowest directions, which finds semidefinite zero sets that a
/// scan alone only approaches.
pub fn positive_definite_check(v: &Expr, radius: f64, n: usize, seed: u64) -> PositivityReport {
    let d = v.dim();
    let c = v.compile();
    let pts = ball_points(d, radius, n.max(1), seed);
    let mut min_value = f64::INFINITY;
    let mut witness = None;
    for p in &pts {
        if norm(p) == 0.0 {
            continue;
        }
        let val = c.eval(p);
        if val < min_value {
            min_value = val;
        }
        if !(val > 0.0) && witness.is_none() {
            witness = Some(p.clone());
        }
    }
    if witness.is_none() {
        for r in [radius, 0.5 * radius] {
            let dirs = sphere_directions(d, 400);
            let mut scored: Vec<(f64, Vec<f64>)> =
                dirs.into_iter().map(|u| (c.eval(&scaled(&u, r)), u)).collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0));
            let vmax = scored.last().map(|s| s.0.abs()).unwrap_or(1.0).max(f64::MIN_POSITIVE);
            for (_, u) in scored.iter().take(8) {
                let (x, val) = sphere_descent(&c, u, r);
                min_value = min_value.min(val);
                if val <= 1e-12 * vmax {
                    witness = Some(x);
                    break;
                }
            }
            if witness.is_some() {
                break;
            }
        }
    }
    PositivityReport { pass: witness.is_none(), min_value, witness, samples: pts.len() }
}

fn scaled(u: &[f64], r: f64) -> Vec<f64> {
    u.iter().map(|v| v * r).collect()
}

fn sphere_descent(c: &CompiledExpr, start: &[f64], r: f64) -> (Vec<f64>, f64) {
    let d = start.len();
    let mut u = start.to_vec();
    let mut val = c.eval(&scaled(&u, r));
    let mut step = 0.1;
    for _ in 0..400 {
        let x = scaled(&u, r);
        let h = 1e-7 * r.max(1e-3);
        let mut g = vec![0.0; d];
        let mut xp = x.clone();
        for k in 0..d {
            xp[k] = x[k] + h;
            let fp = c.eval(&xp);
            xp[k] = x[k] - h;
            let fm = c.eval(&xp);
            xp[k] = x[k];
            g[k] = (fp - fm) / (2.0 * h);
        }
        // tangential component
        let gu: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        let gt: Vec<f64> = g.iter().zip(&u).map(|(a, b)| a - gu * b).collect();
        let gn = norm(&gt);
        if gn < 1e-300 {
            break;
        }
        let mut improved = false;
        while step > 1e-14 {
            let cand: Vec<f64> = u.iter().zip(&gt).map(|(a, b)| a - step * b / gn).collect();
            let cn = norm(&cand);
            let cand: Vec<f64> = cand.iter().map(|v| v / cn).collect();
            let cv = c.eval(&scaled(&cand, r));
            if cv < val {
                u = cand;
                val = cv;
                improved = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !improved || val <= 0.0 {
            break;
        }
    }
    (scaled(&u, r), val)
}
