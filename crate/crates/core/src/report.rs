//! One-shot analysis of a switched system: certification, per-mode sets and
//! approximations, every applicable condition check, and the stability claims
//! they support.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{
    check_condition_c, check_condition_k, check_theo2, cone_pair_trivial, hessian_kernel, k_intersection_on, k_set,
    m_cone, m_set, subspace_conditions, ConditionVerdict, HomogeneousCone, Holds, KIntersection, LinearSubspace,
    SamplingParams, SubspaceFamily, DEFAULT_KMAX, DEFAULT_TOL,
};
use crate::linear::{matrix_from_rows, spectral_split, SpectralSplit};
use crate::model::{
    certify_weak_lyapunov, positive_definite_check, Assumptions, CertificationReport, PositivityReport, SwitchedSystem,
    SystemFile,
};
use crate::planar::{planar_guas_test, PlanarOutcome, PlanarVerdict, DEFAULT_DET_TOL, DEFAULT_HALF_WIDTH, DEFAULT_RESOLUTION};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("V is not a weak Lyapunov function: mode `{mode}` has L_fV = {value:e} at {point:?}")]
    Certification { mode: String, value: f64, point: Vec<f64>, report: Box<CertificationReport> },
    #[error("V is not positive definite: V = {value:e} at {point:?}")]
    NotPositiveDefinite { value: f64, point: Vec<f64> },
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisParams {
    pub tol: f64,
    pub kmax: usize,
    pub mesh: usize,
    pub eps: Option<f64>,
    pub radius: f64,
    pub levels: Vec<f64>,
    pub seed: u64,
    pub band_factor: f64,
    pub cert_samples: usize,
    pub planar_half_width: f64,
    pub planar_resolution: usize,
    pub planar_tol: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        let s = SamplingParams::default();
        AnalysisParams {
            tol: DEFAULT_TOL,
            kmax: DEFAULT_KMAX,
            mesh: s.mesh,
            eps: None,
            radius: s.radius,
            levels: s.levels,
            seed: 0,
            band_factor: s.band_factor,
            cert_samples: 4000,
            planar_half_width: DEFAULT_HALF_WIDTH,
            planar_resolution: DEFAULT_RESOLUTION,
            planar_tol: DEFAULT_DET_TOL,
        }
    }
}

impl AnalysisParams {
    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            radius: self.radius,
            levels: self.levels.clone(),
            mesh: self.mesh,
            eps: self.eps,
            tol: self.tol,
            band_factor: self.band_factor,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeSummary {
    /// 1-based.
    pub index: usize,
    pub name: String,
    pub lie_derivative: String,
    pub k_set: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_set: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_cone: Option<HomogeneousCone>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian_kernel: Option<LinearSubspace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linearisation: Option<SpectralSplit>,
    /// Centre subspace V_i, when the linearisation has no unstable part.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tangent_space: Option<LinearSubspace>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unavailable: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionFlags {
    pub declared: Assumptions,
    pub polynomial: bool,
    pub syntactically_analytic: bool,
}

/// A stability statement, always tied to the result it rests on and the inputs it covers.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Claim {
    pub statement: String,
    pub theorem: &'static str,
    pub condition: String,
    /// `regular`, `J_u = {…}`, or `all`.
    pub signal_class: String,
    pub scope: &'static str,
    pub requires: Vec<&'static str>,
    pub hypotheses_declared: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub system: SystemFile,
    pub parameters: AnalysisParams,
    pub assumptions: AssumptionFlags,
    pub certification: CertificationReport,
    pub positivity: PositivityReport,
    pub modes: Vec<ModeSummary>,
    pub k_intersection: KIntersection,
    pub verdicts: Vec<ConditionVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub planar: Option<PlanarVerdict>,
    pub claims: Vec<Claim>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl AnalysisReport {
    pub fn verdict(&self, condition_prefix: &str) -> Option<&ConditionVerdict> {
        self.verdicts
            .iter()
            .find(|v| v.condition == condition_prefix || v.condition.split('.').next() == Some(condition_prefix))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

fn set_list(modes: &[usize]) -> String {
    let items: Vec<String> = modes.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", items.join(","))
}

fn run_certification(sys: &SwitchedSystem, p: &AnalysisParams) -> Result<(CertificationReport, PositivityReport), AnalysisError> {
    let cert = certify_weak_lyapunov(sys, p.radius, p.cert_samples, p.tol, p.seed);
    if !cert.pass {
        let worst = cert.modes.iter().max_by(|a, b| a.worst_value.total_cmp(&b.worst_value)).expect("at least one mode");
        return Err(AnalysisError::Certification {
            mode: worst.mode.clone(),
            value: worst.worst_value,
            point: worst.worst_point.clone(),
            report: Box::new(cert.clone()),
        });
    }
    let pos = positive_definite_check(sys.lyapunov(), p.radius, p.cert_samples, p.seed);
    if !pos.pass {
        return Err(AnalysisError::NotPositiveDefinite {
            value: pos.min_value,
            point: pos.witness.clone().unwrap_or_default(),
        });
    }
    Ok((cert, pos))
}

fn summarise_mode(sys: &SwitchedSystem, i: usize, p: &AnalysisParams) -> ModeSummary {
    let mut unavailable = Vec::new();
    let k = k_set(sys, i, p.tol).expect("mode index in range");
    let m_set = match m_set(sys, i, p.kmax, p.tol) {
        Ok(m) => Some(m.descriptions()),
        Err(e) => {
            unavailable.push(format!("M_i: {e}"));
            None
        }
    };
    let cone = match m_cone(sys, i, p.kmax) {
        Ok(c) => Some(c),
        Err(e) => {
            unavailable.push(format!("cone: {e}"));
            None
        }
    };
    let hk = match hessian_kernel(sys, i) {
        Ok(h) => Some(h),
        Err(e) => {
            unavailable.push(format!("Hessian kernel: {e}"));
            None
        }
    };
    let field = &sys.mode(i).field;
    let split = match field.jacobian_at_origin().map_err(|e| e.to_string()).and_then(|j| {
        matrix_from_rows(&j).and_then(|m| spectral_split(&m)).map_err(|e| e.to_string())
    }) {
        Ok(s) => Some(s),
        Err(e) => {
            unavailable.push(format!("linearisation: {e}"));
            None
        }
    };
    let tangent = match &split {
        Some(s) if !s.has_unstable => Some(s.center.clone()),
        Some(_) => {
            unavailable.push("V_i: linearisation has an unstable eigenvalue".into());
            None
        }
        None => None,
    };
    ModeSummary {
        index: i + 1,
        name: sys.mode(i).name.clone(),
        lie_derivative: sys.lie_derivative(i).to_string(),
        k_set: k.descriptions(),
        m_set,
        m_cone: cone,
        hessian_kernel: hk,
        linearisation: split,
        tangent_space: tangent,
        unavailable,
    }
}

fn condition_c(sys: &SwitchedSystem, modes: &[ModeSummary], p: &AnalysisParams) -> ConditionVerdict {
    let oracles: Result<Vec<_>, _> = (0..sys.num_modes()).map(|i| m_set(sys, i, p.kmax, p.tol)).collect();
    let oracles = match oracles {
        Ok(o) => o,
        Err(e) => return ConditionVerdict::new("C", Holds::Inconclusive).note(format!("M_i unavailable: {e}")),
    };
    let mut v = check_condition_c(sys, &oracles, &p.sampling());
    // isolation of 0 in M_i ∩ M_j, by the cone test (sufficient only)
    let cones: Vec<&HomogeneousCone> = modes.iter().filter_map(|m| m.m_cone.as_ref()).collect();
    if cones.len() == modes.len() {
        let mut overlapping = Vec::new();
        for a in 0..cones.len() {
            for b in a + 1..cones.len() {
                if cone_pair_trivial(cones[a], cones[b], p.mesh, p.tol).0 != Holds::Yes {
                    overlapping.push(vec![a + 1, b + 1]);
                }
            }
        }
        if !overlapping.is_empty() {
            v = v.note("cone test cannot confirm that 0 is isolated in some M_i ∩ M_j");
        }
        v = v.param("cone_overlaps", overlapping);
    }
    if p.kmax < 3 {
        v = v.note(format!("M_i truncated at order {}", p.kmax));
    }
    v
}

fn theo2(modes: &[ModeSummary], p: &AnalysisParams) -> ConditionVerdict {
    let cones: Option<Vec<HomogeneousCone>> = modes.iter().map(|m| m.m_cone.clone()).collect();
    match cones {
        Some(c) => check_theo2(&c, p.mesh, p.eps, p.tol).param("kmax", p.kmax),
        None => ConditionVerdict::new("Theo2", Holds::Inconclusive).note("cones unavailable for some mode"),
    }
}

fn family_check(spaces: Option<Vec<LinearSubspace>>, family: SubspaceFamily, label: &str) -> ConditionVerdict {
    match spaces {
        Some(s) => subspace_conditions(&s, family),
        None => {
            let name = match family {
                SubspaceFamily::Centre => "Cor5",
                SubspaceFamily::HessianKernel => "LinK",
            };
            ConditionVerdict::new(name, Holds::Inconclusive).note(format!("{label} unavailable for some mode"))
        }
    }
}

fn kzero(sys: &SwitchedSystem, k: &KIntersection) -> ConditionVerdict {
    let v = if sys.num_modes() != 2 {
        ConditionVerdict::new("Kzero", Holds::Inconclusive).note("stated for pairs of modes")
    } else if k.k_is_origin {
        ConditionVerdict::new("Kzero", Holds::Yes)
    } else {
        let mut v = ConditionVerdict::new("Kzero", Holds::No);
        v.witness = k.witness.iter().cloned().collect();
        v
    };
    v.param("radii", k.radii.clone()).param("mesh", k.mesh)
}

fn claims_for(
    verdicts: &[ConditionVerdict],
    planar: Option<&PlanarVerdict>,
    sys: &SwitchedSystem,
    all_modes: &[usize],
) -> Vec<Claim> {
    let a = sys.assumptions();
    let mut out = Vec::new();
    for v in verdicts.iter().filter(|v| v.holds == Holds::Yes) {
        let base = v.condition.split('.').next().unwrap_or("");
        let (statement, theorem, class, scope, requires): (&str, &str, String, &str, Vec<&str>) = match base {
            "C" => (
                "asymptotically stable for all regular inputs",
                "condition-C theorem",
                "regular".into(),
                "neighbourhood",
                vec!["analytic"],
            ),
            "Theo2" => (
                "locally asymptotically stable for all regular inputs",
                "cone-condition theorem",
                "regular".into(),
                "local",
                vec!["analytic"],
            ),
            "Cor5" => (
                "locally asymptotically stable for all regular inputs",
                "centre-subspace corollary",
                "regular".into(),
                "local",
                vec!["analytic"],
            ),
            "K" => (
                "globally asymptotically stable for inputs with J_u = J",
                "condition-K theorem",
                format!("J_u = {}", set_list(all_modes)),
                "global",
                vec!["radially_unbounded"],
            ),
            "LinK" => (
                "locally asymptotically stable for inputs with J_u = J",
                "Hessian-kernel corollary",
                format!("J_u = {}", set_list(all_modes)),
                "local",
                vec![],
            ),
            "Kzero" => (
                "globally uniformly asymptotically stable",
                "K-zero corollary",
                "all".into(),
                "global",
                vec!["modes_gas", "radially_unbounded"],
            ),
            _ => continue,
        };
        let declared = requires.iter().all(|r| match *r {
            "analytic" => a.analytic && sys.is_syntactically_analytic(),
            "radially_unbounded" => a.radially_unbounded,
            "modes_gas" => a.modes_gas,
            _ => true,
        });
        out.push(Claim {
            statement: statement.to_string(),
            theorem,
            condition: v.condition.clone(),
            signal_class: class,
            scope,
            requires,
            hypotheses_declared: declared,
        });
    }
    if let Some(pv) = planar {
        if pv.outcome == PlanarOutcome::Guas {
            out.push(Claim {
                statement: "globally uniformly asymptotically stable".into(),
                theorem: "planar collinearity theorem",
                condition: "colinear".into(),
                signal_class: "all".into(),
                scope: "global",
                requires: vec!["modes_gas", "analytic", "radially_unbounded", "dv_nonzero_off_origin"],
                hypotheses_declared: true,
            });
        }
    }
    out
}

/// Runs the full pipeline. Fails only when V is not certified as a weak Lyapunov function.
pub fn analyze(sys: &SwitchedSystem, p: &AnalysisParams) -> Result<AnalysisReport, AnalysisError> {
    let (certification, positivity) = run_certification(sys, p)?;
    let modes: Vec<ModeSummary> = (0..sys.num_modes()).map(|i| summarise_mode(sys, i, p)).collect();
    let all_modes: Vec<usize> = (0..sys.num_modes()).collect();
    let shells: Vec<f64> = (1..=10).map(|j| p.radius * j as f64 / 10.0).collect();
    let k = k_intersection_on(sys, p.tol, p.mesh, &shells);

    let mut verdicts = vec![
        condition_c(sys, &modes, p),
        theo2(&modes, p),
        family_check(modes.iter().map(|m| m.tangent_space.clone()).collect(), SubspaceFamily::Centre, "V_i"),
        family_check(modes.iter().map(|m| m.hessian_kernel.clone()).collect(), SubspaceFamily::HessianKernel, "Hessian kernel"),
    ];
    verdicts.push(match check_condition_k(sys, &all_modes, &p.sampling()) {
        Ok(v) => v,
        Err(e) => ConditionVerdict::new("K", Holds::Inconclusive).note(e.to_string()),
    });
    verdicts.push(kzero(sys, &k));

    let planar = if sys.dim() == 2 && sys.num_modes() == 2 {
        planar_guas_test(sys, p.planar_half_width, p.planar_resolution, p.planar_tol).ok()
    } else {
        None
    };
    if let Some(pv) = &planar {
        verdicts.push(pv.to_condition());
    }
    let claims = claims_for(&verdicts, planar.as_ref(), sys, &all_modes);
    let mut notes = Vec::new();
    if !sys.assumptions().analytic {
        notes.push("analyticity not declared; results resting on it are marked".to_string());
    }
    if claims.is_empty() {
        notes.push("no stability claim".to_string());
    }
    Ok(AnalysisReport {
        tool: "switchlyap",
        version: VERSION,
        system: sys.to_file(),
        parameters: p.clone(),
        assumptions: AssumptionFlags {
            declared: sys.assumptions(),
            polynomial: sys.is_polynomial(),
            syntactically_analytic: sys.is_syntactically_analytic(),
        },
        certification,
        positivity,
        modes,
        k_intersection: k,
        verdicts,
        planar,
        claims,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_system_has_no_claims() {
        let sys = SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["0", "0"], &["0", "0"]]).unwrap();
        let p = AnalysisParams { mesh: 200, planar_resolution: 32, ..Default::default() };
        let r = analyze(&sys, &p).unwrap();
        assert!(r.certification.pass);
        assert!(r.claims.is_empty());
        assert!(r.verdicts.iter().all(|v| v.holds != Holds::Yes));
    }

    #[test]
    fn uncertified_system_aborts_with_witness() {
        let sys = SwitchedSystem::from_strings(1, "x1^2", &[&["x1"]]).unwrap();
        match analyze(&sys, &AnalysisParams::default()) {
            Err(AnalysisError::Certification { point, value, .. }) => assert!(value > 0.0 && point[0] != 0.0),
            other => panic!("expected certification failure, got {other:?}"),
        }
        let indefinite = SwitchedSystem::from_strings(2, "x1^2", &[&["-x1", "0"]]).unwrap();
        assert!(matches!(analyze(&indefinite, &AnalysisParams::default()), Err(AnalysisError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn rotation_damped_pair_report() {
        let sys = SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["-x1 - x2", "x1"], &["-x1", "-x2"]])
            .unwrap()
            .with_assumptions(Assumptions::all());
        let p = AnalysisParams { mesh: 400, planar_resolution: 64, ..Default::default() };
        let r = analyze(&sys, &p).unwrap();
        assert_eq!(r.verdict("C").unwrap().holds, Holds::Yes);
        assert_eq!(r.verdict("Cor5").unwrap().condition, "Cor5.1");
        assert!(r.claims.iter().any(|c| c.theorem == "condition-C theorem" && c.signal_class == "regular"));
        let json = r.to_json();
        assert_eq!(json, analyze(&sys, &p).unwrap().to_json());
        assert!(serde_json::from_str::<serde_json::Value>(&json).is_ok());
    }
}
