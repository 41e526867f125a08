//! Built-in regression corpus: the worked examples with their expected facts
//! and simulation scenarios, and a runner that checks them.

use rayon::prelude::*;
use serde::Serialize;

use crate::expr::Expr;
use crate::geometry::{k_set, m_set, Holds, LinearSubspace, SetOracle, RANK_TOL};
use crate::linear::center_manifold_approx;
use crate::model::{Assumptions, ModeFile, SwitchedSystem, SystemFile};
use crate::planar::{planar_guas_test, PlanarOutcome};
use crate::report::{analyze, AnalysisParams, AnalysisReport};
use crate::signals::parse_signal_spec;
use crate::sim::{integrate_with, omega_estimate, v_monotone_check, IntegrateOptions, DEFAULT_ETA, DEFAULT_RHO};

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Fact {
    /// L_{f_i}V equals the expression exactly. Modes are 1-based.
    LieDerivative { mode: usize, expected: String },
    KSet { mode: usize, on: Vec<Vec<f64>>, off: Vec<Vec<f64>> },
    /// Set membership of M_i; skipped when kmax is below `needs_kmax`.
    MSet { mode: usize, on: Vec<Vec<f64>>, off: Vec<Vec<f64>>, needs_kmax: usize },
    Condition { condition: String, holds: Holds, firing: Option<usize>, needs_kmax: usize },
    KIsOrigin { expected: bool },
    Planar { outcome: PlanarOutcome },
    /// Centre subspace V_i, compared by principal angles.
    TangentSpace { mode: usize, basis: Vec<Vec<f64>> },
    /// Graph h of the centre-manifold approximation, one expression per stable coordinate.
    CentreGraph { mode: usize, order: u32, h: Vec<String>, residual_zero: bool },
    Claim { theorem: String, signal_class: String, needs_kmax: usize },
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpectedFact {
    /// Where the expectation comes from.
    pub source: &'static str,
    pub fact: Fact,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Expectation {
    Monotone,
    Converged,
    NotConverged,
    /// V(T) < V(0).
    Decreasing,
    /// ‖x(T)‖ below the bound.
    NormBelow { bound: f64 },
    /// V varies by at most `tol` over the final `window` time units.
    Plateau { window: f64, tol: f64 },
    /// Every tail point has raw defect ≤ `tol` for the given expressions.
    TailDefect { exprs: Vec<String>, tol: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct Scenario {
    pub signal: String,
    pub x0: Vec<f64>,
    pub h: f64,
    pub t_end: f64,
    pub stride: usize,
    pub expect: Vec<Expectation>,
}

/// Case-specific sampling settings; CLI flags override them.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CaseSettings {
    pub radius: Option<f64>,
    pub levels: Option<Vec<f64>>,
    pub mesh: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusCase {
    pub name: &'static str,
    pub aliases: Vec<&'static str>,
    pub description: &'static str,
    pub system: SystemFile,
    /// Run the full analysis pipeline (off for the non-analytic case).
    pub analyze: bool,
    pub settings: CaseSettings,
    pub facts: Vec<ExpectedFact>,
    pub scenarios: Vec<Scenario>,
}

impl CorpusCase {
    pub fn build(&self) -> SwitchedSystem {
        self.system.build().expect("corpus systems are well formed")
    }

    pub fn matches(&self, filter: &str) -> bool {
        if self.name == filter || self.aliases.contains(&filter) {
            return true;
        }
        // `example-<section>.<n>` style references resolve to `example-<n>`
        match filter.strip_prefix("example-").and_then(|s| s.rsplit_once('.')) {
            Some((_, n)) => self.aliases.iter().any(|a| a.strip_prefix("example-") == Some(n)),
            None => false,
        }
    }
}

fn system(dim: usize, v: &str, modes: &[&[&str]], assumptions: Assumptions) -> SystemFile {
    SystemFile {
        dim,
        lyapunov: v.to_string(),
        modes: modes
            .iter()
            .enumerate()
            .map(|(i, f)| ModeFile { name: format!("f{}", i + 1), field: f.iter().map(|s| s.to_string()).collect() })
            .collect(),
        assumptions: Some(assumptions),
    }
}

fn fact(source: &'static str, fact: Fact) -> ExpectedFact {
    ExpectedFact { source, fact }
}

fn lie(source: &'static str, mode: usize, e: &str) -> ExpectedFact {
    fact(source, Fact::LieDerivative { mode, expected: e.to_string() })
}

fn cond(source: &'static str, c: &str, holds: Holds, firing: Option<usize>, needs_kmax: usize) -> ExpectedFact {
    fact(source, Fact::Condition { condition: c.to_string(), holds, firing, needs_kmax })
}

fn claim(source: &'static str, theorem: &str, class: &str, needs_kmax: usize) -> ExpectedFact {
    fact(source, Fact::Claim { theorem: theorem.to_string(), signal_class: class.to_string(), needs_kmax })
}

fn scenario(signal: &str, x0: &[f64], h: f64, t_end: f64, expect: Vec<Expectation>) -> Scenario {
    Scenario { signal: signal.to_string(), x0: x0.to_vec(), h, t_end, stride: 10, expect }
}

fn vs(points: &[&[f64]]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.to_vec()).collect()
}

fn analytic() -> Assumptions {
    Assumptions::all()
}

/// Declares V radially unbounded and the fields analytic, but not GAS of every mode.
fn analytic_only() -> Assumptions {
    Assumptions { modes_gas: false, ..Assumptions::all() }
}

/// The eight built-in cases, ordered by name.
pub fn corpus() -> Vec<CorpusCase> {
    use Expectation::*;
    let mut cases = vec![
        CorpusCase {
            name: "rotation-damped",
            aliases: vec!["example-0"],
            description: "linear pair whose tangency set is invariant for one mode but whose M_i meet only at 0",
            system: system(2, "x1^2 + x2^2", &[&["-x1 - x2", "x1"], &["-x1", "-x2"]], analytic()),
            analyze: true,
            settings: CaseSettings::default(),
            facts: vec![
                lie("linear example: Lie derivatives", 1, "-2*x1^2"),
                lie("linear example: Lie derivatives", 2, "-2*x1^2 - 2*x2^2"),
                fact("linear example: K_1 ∪ K_2 = {x1 = 0}", Fact::KSet { mode: 1, on: vs(&[&[0.0, 0.7]]), off: vs(&[&[0.5, 0.5]]) }),
                fact(
                    "linear example: third Lie derivative gives M_1 ∪ M_2 = {0}",
                    Fact::MSet { mode: 1, on: vec![], off: vs(&[&[0.0, 0.9], &[0.0, -0.4]]), needs_kmax: 3 },
                ),
                cond("linear example: M_1 ∪ M_2 = {0}", "C", Holds::Yes, None, 3),
                claim("linear example: stable for nonchaotic inputs", "condition-C theorem", "regular", 3),
            ],
            scenarios: vec![
                scenario("dwell:delta=0.5", &[1.0, 1.0], 1e-3, 50.0, vec![Monotone, Converged]),
                scenario("chaotic:tau=1,shrink=0.5", &[-0.5, 2.0], 1e-3, 50.0, vec![Monotone, Converged]),
            ],
        },
        CorpusCase {
            name: "cusp-pair",
            aliases: vec!["example-1"],
            description: "fields vanishing on two cusps; linear parts are zero",
            system: system(
                2,
                "x1^2 + x2^2",
                &[&["-(x1^2 - x2^3)^2*x1", "-(x1^2 - x2^3)^2*x2"], &["-(x2^2 - x1^3)^2*x1", "-(x2^2 - x1^3)^2*x2"]],
                analytic_only(),
            ),
            analyze: true,
            settings: CaseSettings { radius: Some(1.5), levels: Some(vec![0.25, 1.0, 1.96]), mesh: Some(20000) },
            facts: vec![
                lie("cusp example: Lie derivatives", 1, "-2*(x1^2 + x2^2)*(x1^2 - x2^3)^2"),
                lie("cusp example: Lie derivatives", 2, "-2*(x1^2 + x2^2)*(x2^2 - x1^3)^2"),
                fact(
                    "cusp example: M_1 = K_1 = {x1^2 = x2^3}",
                    Fact::MSet { mode: 1, on: vs(&[&[1.0, 1.0], &[-8.0, 4.0]]), off: vs(&[&[1.0, 0.5]]), needs_kmax: 1 },
                ),
                fact(
                    "cusp example: M_2 = K_2 = {x2^2 = x1^3}",
                    Fact::KSet { mode: 2, on: vs(&[&[1.0, 1.0], &[4.0, -8.0]]), off: vs(&[&[0.5, 1.0]]) },
                ),
                cond("cusp example: components of the level sets never meet both cusps", "C", Holds::Yes, None, 1),
                claim("cusp example: asymptotically stable for all regular inputs", "condition-C theorem", "regular", 1),
            ],
            scenarios: vec![scenario("regular:delta=0.5", &[0.8, 0.8], 1e-2, 500.0, vec![Monotone, Decreasing, NormBelow { bound: 0.5 }])],
        },
        CorpusCase {
            name: "centre-graph",
            aliases: vec!["example-2"],
            description: "one mode with a line of equilibria, one with a curved centre manifold",
            system: system(2, "x1^2 + x2^2", &[&["0", "-x2"], &["x1*x2", "-x2 - x1^2"]], analytic_only()),
            analyze: true,
            settings: CaseSettings::default(),
            facts: vec![
                lie("centre-manifold example: Lie derivatives", 1, "-2*x2^2"),
                lie("centre-manifold example: Lie derivatives", 2, "-2*x2^2"),
                fact(
                    "centre-manifold example: M_1 = {x2 = 0}",
                    Fact::MSet { mode: 1, on: vs(&[&[0.8, 0.0], &[-0.3, 0.0]]), off: vs(&[&[0.0, 0.5]]), needs_kmax: 3 },
                ),
                fact(
                    "centre-manifold example: M_2 = {0}",
                    Fact::MSet { mode: 2, on: vec![], off: vs(&[&[0.8, 0.0], &[-0.3, 0.0]]), needs_kmax: 3 },
                ),
                cond("centre-manifold example: globally stable for regular switchings", "C", Holds::Yes, None, 3),
                fact(
                    "centre-manifold example: V_1 = {x2 = 0}",
                    Fact::TangentSpace { mode: 1, basis: vs(&[&[1.0, 0.0]]) },
                ),
                fact(
                    "centre-manifold example: V_2 is the graph x2 = -x1^2 + O(x1^4)",
                    Fact::CentreGraph { mode: 2, order: 3, h: vec!["-x1^2".into()], residual_zero: true },
                ),
                claim("centre-manifold example: asymptotically stable for regular inputs", "condition-C theorem", "regular", 3),
            ],
            scenarios: vec![scenario("regular:delta=0.5", &[0.5, 0.5], 1e-2, 200.0, vec![Monotone, Decreasing])],
        },
        CorpusCase {
            name: "cubic-pair",
            aliases: vec!["example-3"],
            description: "homogeneous cubic pair with disjoint tangency sets",
            system: system(2, "x1^4 + x2^4", &[&["x2^3", "-x1^3 - 2*x2^3"], &["-2*x1^3 - x2^3", "x1^3"]], analytic()),
            analyze: true,
            settings: CaseSettings { radius: Some(1.5), ..Default::default() },
            facts: vec![
                lie("cubic example: Lie derivatives", 1, "-8*x2^6"),
                lie("cubic example: Lie derivatives", 2, "-8*x1^6"),
                fact("cubic example: K_1 = {x2 = 0}", Fact::KSet { mode: 1, on: vs(&[&[0.6, 0.0]]), off: vs(&[&[0.0, 0.6]]) }),
                fact("cubic example: K_2 = {x1 = 0}", Fact::KSet { mode: 2, on: vs(&[&[0.0, 0.6]]), off: vs(&[&[0.6, 0.0]]) }),
                fact("cubic example: K = {0}", Fact::KIsOrigin { expected: true }),
                cond("cubic example: K = {0}", "Kzero", Holds::Yes, None, 1),
                claim("cubic example: GUAS", "K-zero corollary", "all", 1),
            ],
            scenarios: vec![
                scenario("dwell:delta=0.5", &[1.0, 1.0], 1e-2, 500.0, vec![Monotone, Decreasing, NormBelow { bound: 0.1 }]),
                scenario("chaotic:tau=1,shrink=0.5", &[-0.5, 2.0], 1e-2, 200.0, vec![Monotone, Decreasing]),
            ],
        },
        CorpusCase {
            name: "odd-damping",
            aliases: vec!["example-4"],
            description: "rotations with odd-power damping (k = 3); limit sets lie on {x2 = 0}",
            system: system(2, "x1^2 + x2^2", &[&["-x2", "x1 - x2^3"], &["x2", "-x1 - x2^3"]], analytic_only()),
            analyze: true,
            settings: CaseSettings::default(),
            facts: vec![
                lie("odd-damping example: Lie derivatives", 1, "-2*x2^4"),
                lie("odd-damping example: Lie derivatives", 2, "-2*x2^4"),
                fact("odd-damping example: K_1 = K_2 = {x2 = 0}", Fact::KSet { mode: 2, on: vs(&[&[0.9, 0.0]]), off: vs(&[&[0.0, 0.9]]) }),
                cond("odd-damping example: K is a line", "K", Holds::No, None, 1),
                cond("odd-damping example: each M_i reduces to {0}", "C", Holds::Yes, None, 5),
            ],
            scenarios: vec![
                scenario(
                    "chaotic:tau=1,shrink=0.5",
                    &[1.0, 0.5],
                    1e-2,
                    200.0,
                    vec![Monotone, TailDefect { exprs: vec!["-2*x2^4".into()], tol: 1e-3 }],
                ),
                scenario("constant:mode=1", &[1.0, 0.5], 1e-2, 200.0, vec![Monotone, Decreasing]),
            ],
        },
        CorpusCase {
            name: "planar-guas",
            aliases: vec!["example-5"],
            description: "planar pair for which condition K fails but the collinearity test gives GUAS",
            system: system(2, "x1^4 + 2*x2^2", &[&["-x1^3 - x2", "x1^3"], &["-2*x1^3 - x2", "x1^3"]], analytic()),
            analyze: true,
            settings: CaseSettings::default(),
            facts: vec![
                lie("planar example: Lie derivatives", 1, "-4*x1^6"),
                lie("planar example: Lie derivatives", 2, "-8*x1^6"),
                fact("planar example: K = {x1 = 0}", Fact::KIsOrigin { expected: false }),
                cond("planar example: condition K is not fulfilled", "K", Holds::No, None, 1),
                fact("planar example: <f1, f2> = x2^2 on K", Fact::Planar { outcome: PlanarOutcome::Guas }),
                claim("planar example: GUAS", "planar collinearity theorem", "all", 1),
            ],
            scenarios: vec![scenario("regular:delta=0.5", &[1.0, 1.0], 1e-2, 200.0, vec![Monotone, Decreasing])],
        },
        CorpusCase {
            name: "smooth-counterexample",
            aliases: vec!["counterexample"],
            description: "smooth, non-analytic pair satisfying the planar pattern but admitting periodic orbits",
            system: system(
                2,
                "x1^2 + x2^2",
                &[&["-min(x1*x2, 0)^2*x1 - x2", "-min(x1*x2, 0)^2*x2 + x1"], &["-max(x1*x2, 0)^2*x1 - x2", "-max(x1*x2, 0)^2*x2 + x1"]],
                analytic(),
            ),
            analyze: false,
            settings: CaseSettings::default(),
            facts: vec![fact(
                "planar counter-example: analyticity cannot be dropped",
                Fact::Planar { outcome: PlanarOutcome::Inconclusive },
            )],
            scenarios: vec![Scenario {
                signal: "quadrant".into(),
                x0: vec![1.0, 0.0],
                h: 1e-3,
                t_end: 100.0,
                stride: 1,
                expect: vec![Monotone, NotConverged, Plateau { window: 50.0, tol: 1e-6 }],
            }],
        },
        CorpusCase {
            name: "three-mode",
            aliases: vec!["example-6"],
            description: "three modes in R^3 with trigonometric terms",
            system: system(
                3,
                "x1^2 + 2*x2^2 + x3^2",
                &[
                    &["-2*x2 + x1*x3", "x1", "-x3 - x1^2"],
                    &["-x1", "-2*x2", "-x1^2*x3^3"],
                    &["-x1 + 2*x3 - 2*x2*cos(x1)", "x1*cos(x1)", "-x3"],
                ],
                analytic_only(),
            ),
            analyze: true,
            settings: CaseSettings { radius: Some(2.5), levels: Some(vec![0.25, 1.0, 4.0]), mesh: None },
            facts: vec![
                lie("three-mode example: Lie derivatives", 1, "-2*x3^2"),
                lie("three-mode example: Lie derivatives", 2, "-2*x1^2 - 8*x2^2 - 2*x1^2*x3^4"),
                // computed value; the printed form drops the factor 2
                lie("three-mode example: Lie derivatives", 3, "-2*(x1 - x3)^2"),
                fact("three-mode example: K_3 = {x1 = x3}", Fact::KSet { mode: 3, on: vs(&[&[0.5, 0.7, 0.5]]), off: vs(&[&[0.5, 0.0, -0.5]]) }),
                fact("three-mode example: V_1 = {x3 = 0}", Fact::TangentSpace { mode: 1, basis: vs(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]) }),
                fact("three-mode example: V_2 = {x1 = x2 = 0}", Fact::TangentSpace { mode: 2, basis: vs(&[&[0.0, 0.0, 1.0]]) }),
                // computed value: Df_3(0) is Hurwitz
                fact("three-mode example: V_3", Fact::TangentSpace { mode: 3, basis: vec![] }),
                cond("three-mode example: condition 2 on the V_i", "Cor5", Holds::Yes, Some(2), 1),
                cond("three-mode example: condition K for J = {1,2,3}", "K", Holds::Yes, None, 1),
                claim("three-mode example: stable for regular inputs", "centre-subspace corollary", "regular", 1),
                claim("three-mode example: GAS when J_u = {1,2,3}", "condition-K theorem", "J_u = {1,2,3}", 1),
            ],
            scenarios: vec![scenario("regular:delta=0.5", &[1.0, 1.0, 1.0], 1e-2, 100.0, vec![Monotone, Decreasing])],
        },
    ];
    cases.sort_by_key(|c| c.name);
    cases
}

/// Global overrides applied on top of each case's settings.
#[derive(Clone, Debug, Serialize)]
pub struct CorpusParams {
    pub base: AnalysisParams,
    pub radius: Option<f64>,
    pub levels: Option<Vec<f64>>,
    pub mesh: Option<usize>,
    pub run_scenarios: bool,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams { base: AnalysisParams::default(), radius: None, levels: None, mesh: None, run_scenarios: true }
    }
}

impl CorpusParams {
    pub fn for_case(&self, case: &CorpusCase) -> AnalysisParams {
        let mut p = self.base.clone();
        if let Some(r) = self.radius.or(case.settings.radius) {
            p.radius = r;
        }
        if let Some(l) = self.levels.clone().or_else(|| case.settings.levels.clone()) {
            p.levels = l;
        }
        if let Some(m) = self.mesh.or(case.settings.mesh) {
            p.mesh = m;
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    SkippedByParameter,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::SkippedByParameter => "skipped-by-parameter",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FactResult {
    pub source: &'static str,
    pub fact: Fact,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioResult {
    pub signal: String,
    pub x0: Vec<f64>,
    pub status: Status,
    pub final_norm: f64,
    pub v_initial: f64,
    pub v_final: f64,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CaseResult {
    pub name: &'static str,
    pub status: Status,
    pub facts: Vec<FactResult>,
    pub scenarios: Vec<ScenarioResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip)]
    pub report: Option<AnalysisReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub parameters: CorpusParams,
    pub cases: Vec<CaseResult>,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
}

impl CorpusReport {
    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<24} {:<22} {:>6} {:>6} {:>8}\n", "case", "status", "facts", "runs", "skipped");
        for c in &self.cases {
            let ok_facts = c.facts.iter().filter(|f| f.status == Status::Pass).count();
            let ok_runs = c.scenarios.iter().filter(|s| s.status == Status::Pass).count();
            let skipped = c.facts.iter().filter(|f| f.status == Status::SkippedByParameter).count();
            out.push_str(&format!(
                "{:<24} {:<22} {:>6} {:>6} {:>8}\n",
                c.name,
                c.status.as_str(),
                format!("{ok_facts}/{}", c.facts.len()),
                format!("{ok_runs}/{}", c.scenarios.len()),
                skipped
            ));
            for f in c.facts.iter().filter(|f| f.status == Status::Fail) {
                out.push_str(&format!("    fact: {} — {}\n", f.source, f.detail));
            }
            for s in c.scenarios.iter().filter(|s| s.status == Status::Fail) {
                out.push_str(&format!("    run {} from {:?}: {}\n", s.signal, s.x0, s.failures.join("; ")));
            }
            if let Some(e) = &c.error {
                out.push_str(&format!("    error: {e}\n"));
            }
        }
        out.push_str(&format!("{} passed, {} failed, {} skipped-by-parameter\n", self.passed, self.failed, self.skipped));
        out
    }
}

fn contains_all(oracle: &SetOracle, on: &[Vec<f64>], off: &[Vec<f64>]) -> Result<(), String> {
    for x in on {
        if !oracle.contains(x) {
            return Err(format!("{x:?} should be in the set (defect {:e})", oracle.membership(x)));
        }
    }
    for x in off {
        if oracle.contains(x) {
            return Err(format!("{x:?} should not be in the set"));
        }
    }
    Ok(())
}

fn check_fact(sys: &SwitchedSystem, report: Option<&AnalysisReport>, p: &AnalysisParams, f: &Fact) -> (Status, String) {
    let verdict = |ok: bool, detail: String| (if ok { Status::Pass } else { Status::Fail }, detail);
    let needs = match f {
        Fact::MSet { needs_kmax, .. } | Fact::Condition { needs_kmax, .. } | Fact::Claim { needs_kmax, .. } => *needs_kmax,
        _ => 0,
    };
    if p.kmax < needs {
        return (Status::SkippedByParameter, format!("needs kmax ≥ {needs}, have {}", p.kmax));
    }
    let need_report = || report.ok_or_else(|| "analysis not run for this case".to_string());
    let result: Result<(Status, String), String> = (|| match f {
        Fact::LieDerivative { mode, expected } => {
            let e = Expr::parse(expected, sys.dim()).map_err(|e| e.to_string())?;
            let got = sys.lie_derivative(mode - 1);
            Ok(verdict(*got == e, format!("computed {got}")))
        }
        Fact::KSet { mode, on, off } => {
            let k = k_set(sys, mode - 1, p.tol).map_err(|e| e.to_string())?;
            Ok(match contains_all(&k, on, off) {
                Ok(()) => (Status::Pass, String::new()),
                Err(e) => (Status::Fail, e),
            })
        }
        Fact::MSet { mode, on, off, .. } => {
            let m = m_set(sys, mode - 1, p.kmax, p.tol).map_err(|e| e.to_string())?;
            Ok(match contains_all(&m, on, off) {
                Ok(()) => (Status::Pass, String::new()),
                Err(e) => (Status::Fail, e),
            })
        }
        Fact::Condition { condition, holds, firing, .. } => {
            let r = need_report()?;
            let v = r.verdict(condition).ok_or_else(|| format!("condition {condition} not attempted"))?;
            let fires = match firing {
                Some(n) => v.params.get("firing").and_then(|f| f.as_array()).is_some_and(|a| a.iter().any(|x| x.as_u64() == Some(*n as u64))),
                None => true,
            };
            Ok(verdict(v.holds == *holds && fires, format!("{} holds={}", v.condition, v.holds.as_str())))
        }
        Fact::KIsOrigin { expected } => {
            let r = need_report()?;
            Ok(verdict(r.k_intersection.k_is_origin == *expected, format!("k_is_origin={}", r.k_intersection.k_is_origin)))
        }
        Fact::Planar { outcome } => {
            let pv = match report.and_then(|r| r.planar.clone()) {
                Some(pv) => pv,
                None => planar_guas_test(sys, p.planar_half_width, p.planar_resolution, p.planar_tol).map_err(|e| e.to_string())?,
            };
            Ok(verdict(pv.outcome == *outcome, format!("outcome {:?}", pv.outcome)))
        }
        Fact::TangentSpace { mode, basis } => {
            let r = need_report()?;
            let got = r.modes[mode - 1].tangent_space.as_ref().ok_or("V_i unavailable")?;
            let want = LinearSubspace::span(sys.dim(), basis, RANK_TOL);
            let angle = got.max_principal_angle(&want).unwrap_or(0.0);
            Ok(verdict(got.rank() == want.rank() && angle <= 1e-7, format!("dim {} angle {angle:e}", got.rank())))
        }
        Fact::CentreGraph { mode, order, h, residual_zero } => {
            let cm = center_manifold_approx(&sys.mode(mode - 1).field, *order).map_err(|e| e.to_string())?;
            let want: Result<Vec<Expr>, _> = h.iter().map(|s| Expr::parse(s, cm.center_dim)).collect();
            let want = want.map_err(|e| e.to_string())?;
            let got = cm.h_exprs();
            let ok = got == want && (!residual_zero || cm.residual == 0.0);
            let shown: Vec<String> = got.iter().map(|e| e.to_string()).collect();
            Ok(verdict(ok, format!("h = {shown:?}, residual {:e}", cm.residual)))
        }
        Fact::Claim { theorem, signal_class, .. } => {
            let r = need_report()?;
            let ok = r.claims.iter().any(|c| c.theorem == theorem && &c.signal_class == signal_class);
            Ok(verdict(ok, format!("{} claims", r.claims.len())))
        }
    })();
    result.unwrap_or_else(|e| (Status::Fail, e))
}

fn run_scenario(sys: &SwitchedSystem, s: &Scenario, seed: u64) -> ScenarioResult {
    let mut failures = Vec::new();
    let fail = |failures: Vec<String>, msg: String| ScenarioResult {
        signal: s.signal.clone(),
        x0: s.x0.clone(),
        status: Status::Fail,
        final_norm: f64::NAN,
        v_initial: f64::NAN,
        v_final: f64::NAN,
        failures: failures.into_iter().chain([msg]).collect(),
    };
    let sig = match parse_signal_spec(&s.signal, sys.num_modes(), s.t_end, seed) {
        Ok(sig) => sig,
        Err(e) => return fail(failures, e.to_string()),
    };
    let opts = IntegrateOptions { stride: s.stride, error_estimate: false };
    let traj = match integrate_with(sys, &sig, &s.x0, s.h, s.t_end, opts) {
        Ok(t) => t,
        Err(e) => return fail(failures, e.to_string()),
    };
    let omega = omega_estimate(&traj, &[], DEFAULT_RHO, DEFAULT_ETA);
    let v0 = traj.v[0];
    let vt = *traj.v.last().expect("non-empty trajectory");
    let norm = omega.final_norm;
    for e in &s.expect {
        match e {
            Expectation::Monotone => {
                let m = v_monotone_check(&traj, None);
                if !m.pass {
                    failures.push(format!("V increased by {:e} at t={:?}", m.worst_increase, m.at_time));
                }
            }
            Expectation::Converged if !omega.converged => failures.push(format!("‖x(T)‖ = {norm:e} not below {DEFAULT_ETA:e}")),
            Expectation::NotConverged if omega.converged => failures.push(format!("converged (‖x(T)‖ = {norm:e})")),
            Expectation::Decreasing if !(vt < v0) => failures.push(format!("V(T) = {vt:e} not below V(0) = {v0:e}")),
            Expectation::NormBelow { bound } if !(norm < *bound) => failures.push(format!("‖x(T)‖ = {norm:e} ≥ {bound:e}")),
            Expectation::Plateau { window, tol } => {
                let start = traj.times.partition_point(|&t| t < traj.final_time() - window);
                let tail = &traj.v[start..];
                let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
                if !(spread <= *tol) {
                    failures.push(format!("V spread {spread:e} over the final {window} exceeds {tol:e}"));
                }
            }
            Expectation::TailDefect { exprs, tol } => {
                let parsed: Result<Vec<Expr>, _> = exprs.iter().map(|e| Expr::parse(e, sys.dim())).collect();
                match parsed {
                    Ok(es) => {
                        let oracle = SetOracle::custom(es, *tol);
                        let tail_est = omega_estimate(&traj, &[oracle], DEFAULT_RHO, DEFAULT_ETA);
                        let worst = tail_est.oracles[0].max;
                        if !(worst <= *tol) {
                            failures.push(format!("tail defect {worst:e} exceeds {tol:e}"));
                        }
                    }
                    Err(e) => failures.push(e.to_string()),
                }
            }
            _ => {}
        }
    }
    if traj.diverged {
        failures.push("trajectory diverged".into());
    }
    ScenarioResult {
        signal: s.signal.clone(),
        x0: s.x0.clone(),
        status: if failures.is_empty() { Status::Pass } else { Status::Fail },
        final_norm: norm,
        v_initial: v0,
        v_final: vt,
        failures,
    }
}

pub fn run_case(case: &CorpusCase, params: &CorpusParams) -> CaseResult {
    let sys = case.build();
    let p = params.for_case(case);
    let (report, error) = if case.analyze {
        match analyze(&sys, &p) {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    let facts: Vec<FactResult> = case
        .facts
        .iter()
        .map(|f| {
            let (status, detail) = check_fact(&sys, report.as_ref(), &p, &f.fact);
            FactResult { source: f.source, fact: f.fact.clone(), status, detail }
        })
        .collect();
    let scenarios: Vec<ScenarioResult> = if params.run_scenarios {
        case.scenarios.par_iter().map(|s| run_scenario(&sys, s, p.seed)).collect()
    } else {
        Vec::new()
    };
    let failed = error.is_some() || facts.iter().any(|f| f.status == Status::Fail) || scenarios.iter().any(|s| s.status == Status::Fail);
    let skipped = facts.iter().any(|f| f.status == Status::SkippedByParameter);
    CaseResult {
        name: case.name,
        status: if failed {
            Status::Fail
        } else if skipped {
            Status::SkippedByParameter
        } else {
            Status::Pass
        },
        facts,
        scenarios,
        error,
        report,
    }
}

/// Runs the cases matching `filter` (all when `None`) concurrently; results are ordered by name.
pub fn run_corpus(filter: Option<&str>, params: &CorpusParams) -> CorpusReport {
    let cases: Vec<CorpusCase> = corpus().into_iter().filter(|c| filter.is_none_or(|f| c.matches(f))).collect();
    let mut results: Vec<CaseResult> = cases.par_iter().map(|c| run_case(c, params)).collect();
    results.sort_by_key(|r| r.name);
    let count = |s: Status| results.iter().filter(|r| r.status == s).count();
    CorpusReport {
        tool: "switchlyap",
        version: crate::report::VERSION,
        parameters: params.clone(),
        passed: count(Status::Pass),
        failed: count(Status::Fail),
        skipped: count(Status::SkippedByParameter),
        cases: results,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_aliases() {
        let c = corpus();
        assert_eq!(c.len(), 8);
        assert!(c.windows(2).all(|w| w[0].name < w[1].name));
        let cubic = c.iter().find(|c| c.name == "cubic-pair").unwrap();
        assert!(cubic.matches("example-3") && cubic.matches("example-9.3") && !cubic.matches("example-9.4"));
        for case in &c {
            let sys = case.build();
            assert_eq!(sys.num_modes(), case.system.modes.len());
        }
    }

    #[test]
    fn kmax_one_skips_m_dependent_facts() {
        let params = CorpusParams {
            base: AnalysisParams { kmax: 1, mesh: 400, ..Default::default() },
            run_scenarios: false,
            ..Default::default()
        };
        let r = run_corpus(Some("rotation-damped"), &params);
        assert_eq!(r.cases.len(), 1);
        assert_eq!(r.cases[0].status, Status::SkippedByParameter, "{}", r.table());
    }
}

