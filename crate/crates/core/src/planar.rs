//! Planar two-mode systems: the collinearity set Z = {det(f₀, f₁) = 0} and the
//! sign of ⟨f₀, f₁⟩ on it.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::CompiledField;
use crate::geometry::{ConditionVerdict, Holds};
use crate::model::{Assumptions, SwitchedSystem};

pub const DEFAULT_HALF_WIDTH: f64 = 2.0;
pub const DEFAULT_RESOLUTION: usize = 512;
pub const DEFAULT_DET_TOL: f64 = 1e-9;
/// Radius of the excluded ball around the origin.
pub const ORIGIN_EXCLUSION: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PlanarError {
    #[error("planar test needs d = 2 and two modes, got d = {dim} with {modes} modes")]
    NotPlanarPair { dim: usize, modes: usize },
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct ZPoint {
    pub x: [f64; 2],
    pub det: f64,
    pub inner: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ZSample {
    pub half_width: f64,
    pub resolution: usize,
    pub tol: f64,
    pub points: Vec<ZPoint>,
}

impl ZSample {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x1,x2,det,inner\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{}", p.x[0], p.x[1], p.det, p.inner);
        }
        s
    }
}

struct Pair {
    f0: CompiledField,
    f1: CompiledField,
}

impl Pair {
    fn eval(&self, x: [f64; 2]) -> (f64, f64) {
        let mut a = [0.0; 2];
        let mut b = [0.0; 2];
        self.f0.eval_into(&x, &mut a);
        self.f1.eval_into(&x, &mut b);
        (a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])
    }

    fn det(&self, x: [f64; 2]) -> f64 {
        self.eval(x).0
    }

    fn point(&self, x: [f64; 2]) -> ZPoint {
        let (det, inner) = self.eval(x);
        ZPoint { x, det, inner }
    }
}

fn check_pair(sys: &SwitchedSystem) -> Result<Pair, PlanarError> {
    if sys.dim() != 2 || sys.num_modes() != 2 {
        return Err(PlanarError::NotPlanarPair { dim: sys.dim(), modes: sys.num_modes() });
    }
    Ok(Pair { f0: sys.mode(0).field.compile(), f1: sys.mode(1).field.compile() })
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn bisect(p: &Pair, a: [f64; 2], b: [f64; 2], da: f64) -> [f64; 2] {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let dm = p.det(lerp(a, b, mid));
        if dm == 0.0 {
            return lerp(a, b, mid);
        }
        if (dm > 0.0) == (da > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lerp(a, b, 0.5 * (lo + hi))
}

/// Minimises |det| on the segment [a, b] (for zeros without a sign change).
fn golden_min(p: &Pair, a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let mut fc = p.det(lerp(a, b, c)).abs();
    let mut fd = p.det(lerp(a, b, d)).abs();
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = p.det(lerp(a, b, c)).abs();
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = p.det(lerp(a, b, d)).abs();
        }
    }
    lerp(a, b, 0.5 * (lo + hi))
}

/// Z on a (resolution+1)² grid over [−L, L]²: grid nodes within tolerance,
/// bisected sign changes along grid edges, and refined local minima of |det|
/// along grid lines (even-order zeros have no sign change).
pub fn sample_z(sys: &SwitchedSystem, half_width: f64, resolution: usize, tol: f64) -> Result<ZSample, PlanarError> {
    let pair = check_pair(sys)?;
    let n = resolution.max(1);
    let h = 2.0 * half_width / n as f64;
    let node = |i: usize, j: usize| [-half_width + i as f64 * h, -half_width + j as f64 * h];
    let grid: Vec<Vec<f64>> =
        (0..=n).into_par_iter().map(|j| (0..=n).map(|i| pair.det(node(i, j))).collect()).collect();
    let dv = |i: usize, j: usize| grid[j][i];

    let rows: Vec<Vec<ZPoint>> = (0..=n)
        .into_par_iter()
        .map(|j| {
            let mut out = Vec::new();
            for i in 0..=n {
                let d0 = dv(i, j);
                if d0.abs() <= tol {
                    out.push(pair.point(node(i, j)));
                    continue;
                }
                // edges to the right and upwards
                for (ni, nj) in [(i + 1, j), (i, j + 1)] {
                    if ni > n || nj > n {
                        continue;
                    }
                    let d1 = dv(ni, nj);
                    if d1.abs() > tol && (d0 > 0.0) != (d1 > 0.0) {
                        let x = bisect(&pair, node(i, j), node(ni, nj), d0);
                        out.push(pair.point(x));
                    }
                }
                // interior local minima of |det| along both grid lines
                for (prev, next) in [((i.wrapping_sub(1), j), (i + 1, j)), ((i, j.wrapping_sub(1)), (i, j + 1))] {
                    if prev.0 > n || prev.1 > n || next.0 > n || next.1 > n {
                        continue;
                    }
                    let (dp, dn) = (dv(prev.0, prev.1), dv(next.0, next.1));
                    let same = (dp > 0.0) == (d0 > 0.0) && (dn > 0.0) == (d0 > 0.0);
                    if same && d0.abs() < dp.abs() && d0.abs() <= dn.abs() {
                        let x = golden_min(&pair, node(prev.0, prev.1), node(next.0, next.1));
                        let z = pair.point(x);
                        if z.det.abs() <= tol {
                            out.push(z);
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut points: Vec<ZPoint> = rows.into_iter().flatten().filter(|p| p.det.abs() <= tol).collect();
    points.sort_by(|a, b| a.x[0].total_cmp(&b.x[0]).then(a.x[1].total_cmp(&b.x[1])));
    points.dedup_by(|a, b| a.x == b.x);
    Ok(ZSample { half_width, resolution: n, tol, points })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanarOutcome {
    Guas,
    NotGuas,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanarVerdict {
    pub outcome: PlanarOutcome,
    pub witness: Option<ZPoint>,
    pub min_inner: Option<f64>,
    pub checked: usize,
    pub half_width: f64,
    pub resolution: usize,
    pub tol: f64,
    pub assumptions: Assumptions,
    /// No min/max in the fields or V.
    pub syntactically_analytic: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl PlanarVerdict {
    pub fn to_condition(&self) -> ConditionVerdict {
        let holds = match self.outcome {
            PlanarOutcome::Guas => Holds::Yes,
            PlanarOutcome::NotGuas => Holds::No,
            PlanarOutcome::Inconclusive => Holds::Inconclusive,
        };
        let mut v = ConditionVerdict::new("colinear", holds)
            .param("checked", self.checked)
            .param("half_width", self.half_width)
            .param("resolution", self.resolution)
            .param("tol", self.tol);
        if let Some(m) = self.min_inner {
            v = v.param("min_inner", m);
        }
        if let Some(w) = &self.witness {
            v.witness.push(w.x.to_vec());
        }
        v.notes = self.notes.clone();
        v
    }
}

/// GUAS iff no point of Z∖{0} has ⟨f₀, f₁⟩ < 0, under the declared hypotheses.
pub fn planar_guas_test(
    sys: &SwitchedSystem,
    half_width: f64,
    resolution: usize,
    tol: f64,
) -> Result<PlanarVerdict, PlanarError> {
    let z = sample_z(sys, half_width, resolution, tol)?;
    let away: Vec<&ZPoint> = z.points.iter().filter(|p| p.x[0].hypot(p.x[1]) > ORIGIN_EXCLUSION).collect();
    let min = away.iter().copied().min_by(|a, b| a.inner.total_cmp(&b.inner)).copied();
    let assumptions = sys.assumptions();
    let analytic = sys.is_syntactically_analytic();
    let mut notes = Vec::new();
    let outcome = match min {
        // an equilibrium of the convexified system; no hypothesis needed
        Some(p) if p.inner < -tol => PlanarOutcome::NotGuas,
        _ => {
            let declared = assumptions == Assumptions::all();
            if !declared {
                notes.push("hypotheses not all asserted (GAS modes, analyticity, radial unboundedness, DV ≠ 0 off 0)".into());
            }
            if !analytic {
                notes.push("fields or V use min/max: analyticity fails, the equivalence does not apply".into());
            }
            if declared && analytic {
                PlanarOutcome::Guas
            } else {
                PlanarOutcome::Inconclusive
            }
        }
    };
    if away.is_empty() {
        notes.push("Z meets the box only near the origin".into());
    }
    Ok(PlanarVerdict {
        outcome,
        witness: (outcome == PlanarOutcome::NotGuas).then(|| min.unwrap()),
        min_inner: min.map(|p| p.inner),
        checked: away.len(),
        half_width,
        resolution: z.resolution,
        tol,
        assumptions,
        syntactically_analytic: analytic,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planar(f0: [&str; 2], f1: [&str; 2], v: &str) -> SwitchedSystem {
        SwitchedSystem::from_strings(2, v, &[&f0, &f1]).unwrap().with_assumptions(Assumptions::all())
    }

    #[test]
    fn even_order_zero_on_axis() {
        let sys = planar(["-x1^3 - x2", "x1^3"], ["-2*x1^3 - x2", "x1^3"], "x1^4 + 2*x2^2");
        let z = sample_z(&sys, 2.0, 64, 1e-9).unwrap();
        assert!(z.points.len() > 10);
        assert!(z.points.iter().all(|p| p.x[0].abs() < 0.05 && p.det.abs() <= 1e-9));
        let v = planar_guas_test(&sys, 2.0, 64, 1e-9).unwrap();
        assert_eq!(v.outcome, PlanarOutcome::Guas);
        assert!(v.min_inner.unwrap() >= -1e-9);
    }

    #[test]
    fn identical_and_orthogonal_fields() {
        let same = planar(["-x1", "-x2"], ["-x1", "-x2"], "x1^2 + x2^2");
        let z = sample_z(&same, 1.0, 8, 1e-9).unwrap();
        assert_eq!(z.points.len(), 81);
        let orth = planar(["-x1", "-x2"], ["-x2", "x1"], "x1^2 + x2^2");
        let z = sample_z(&orth, 1.0, 16, 1e-9).unwrap();
        assert!(z.points.iter().all(|p| p.x[0].hypot(p.x[1]) < 1e-4));
    }

    #[test]
    fn opposite_fields_are_not_guas() {
        let sys = planar(["-x1 - x2", "x1 - x2"], ["x1 + x2", "-x1 + x2"], "x1^2 + x2^2");
        let v = planar_guas_test(&sys, 1.0, 16, 1e-9).unwrap();
        assert_eq!(v.outcome, PlanarOutcome::NotGuas);
        assert!(v.witness.unwrap().inner < 0.0);
        // a witness does not depend on the declared hypotheses
        let bare = sys.clone().with_assumptions(Assumptions::default());
        assert_eq!(planar_guas_test(&bare, 1.0, 16, 1e-9).unwrap().outcome, PlanarOutcome::NotGuas);
    }

    #[test]
    fn smooth_counterexample_is_inconclusive() {
        let sys = planar(
            ["-min(x1*x2, 0)^2*x1 - x2", "-min(x1*x2, 0)^2*x2 + x1"],
            ["-max(x1*x2, 0)^2*x1 - x2", "-max(x1*x2, 0)^2*x2 + x1"],
            "x1^2 + x2^2",
        );
        let v = planar_guas_test(&sys, 2.0, 64, 1e-9).unwrap();
        assert_eq!(v.outcome, PlanarOutcome::Inconclusive);
        assert!(v.min_inner.unwrap() >= 0.0);
        assert!(!v.syntactically_analytic);
    }

    #[test]
    fn swap_invariance_and_csv() {
        let a = planar(["-x1^3 - x2", "x1^3"], ["-2*x1^3 - x2", "x1^3"], "x1^4 + 2*x2^2");
        let b = planar(["-2*x1^3 - x2", "x1^3"], ["-x1^3 - x2", "x1^3"], "x1^4 + 2*x2^2");
        let (za, zb) = (sample_z(&a, 2.0, 32, 1e-9).unwrap(), sample_z(&b, 2.0, 32, 1e-9).unwrap());
        assert_eq!(za.points.len(), zb.points.len());
        assert_eq!(planar_guas_test(&a, 2.0, 32, 1e-9).unwrap().outcome, planar_guas_test(&b, 2.0, 32, 1e-9).unwrap().outcome);
        assert!(za.to_csv().starts_with("x1,x2,det,inner\n"));
        let three = SwitchedSystem::from_strings(1, "x1^2", &[&["-x1"]]).unwrap();
        assert!(sample_z(&three, 1.0, 4, 1e-9).is_err());
    }
}
