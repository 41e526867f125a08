//! Fixed-step RK4 integration of ẋ = f_{u(t)}(x) landing exactly on switch
//! times, and ω-limit diagnostics on trajectory tails.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::expr::CompiledField;
use crate::geometry::{k_set, GeometryError, SetOracle};
use crate::model::SwitchedSystem;
use crate::sampling::norm;
use crate::signals::{j_u_estimate, occupancy, SwitchingSignal, DEFAULT_THETA};

/// ‖x‖ beyond which a run is reported as diverged.
pub const DIVERGENCE_BOUND: f64 = 1e8;
pub const DEFAULT_RHO: f64 = 0.2;
pub const DEFAULT_ETA: f64 = 1e-3;
const MAX_HALVING_STEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("final time {t_end} must lie in (0, {horizon}]")]
    BadHorizon { t_end: f64, horizon: f64 },
    #[error("initial state has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("signal uses mode {mode} but the system has {modes} modes")]
    ModeRange { mode: usize, modes: usize },
    #[error("NaN in the state at t = {0}")]
    NotANumber(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Mode active on [t, next sample) (0-based); the last sample repeats the final mode.
    pub modes: Vec<usize>,
    pub v: Vec<f64>,
    pub h: f64,
    pub steps: usize,
    pub stride: usize,
    pub diverged: bool,
    /// ‖x_h − x_{h/2}‖ at the end of the first constancy interval (capped run).
    pub error_estimate: Option<f64>,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has samples")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has samples")
    }

    pub fn to_csv(&self) -> String {
        let d = self.dim();
        let mut s = String::from("t");
        for i in 1..=d {
            let _ = write!(s, ",x{i}");
        }
        s.push_str(",mode,V\n");
        for k in 0..self.times.len() {
            let _ = write!(s, "{}", self.times[k]);
            for v in &self.states[k] {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{},{}", self.modes[k] + 1, self.v[k]);
        }
        s
    }
}

struct Rk4 {
    fields: Vec<CompiledField>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(sys: &SwitchedSystem) -> Self {
        let d = sys.dim();
        Rk4 {
            fields: sys.modes().iter().map(|m| m.field.compile()).collect(),
            k: [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]],
            tmp: vec![0.0; d],
        }
    }

    fn step(&mut self, mode: usize, x: &mut [f64], h: f64) {
        let f = &self.fields[mode];
        let [k1, k2, k3, k4] = &mut self.k;
        f.eval_into(x, k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        f.eval_into(&self.tmp, k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        f.eval_into(&self.tmp, k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * k3[i];
        }
        f.eval_into(&self.tmp, k4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }

    /// Integrates over an interval of length `len` in ⌈len/h⌉ steps, the last one shortened.
    fn interval(&mut self, mode: usize, x: &mut [f64], len: f64, h: f64, max_steps: usize) -> usize {
        let n = steps_for(len, h).min(max_steps);
        for j in 0..n {
            let hj = if j + 1 == n { len - (n - 1) as f64 * h } else { h };
            self.step(mode, x, hj);
        }
        n
    }
}

fn steps_for(len: f64, h: f64) -> usize {
    ((len / h) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    /// Record every `stride`-th step (switch times and T are always recorded).
    pub stride: usize,
    pub error_estimate: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { stride: 1, error_estimate: true }
    }
}

pub fn integrate(
    sys: &SwitchedSystem,
    sig: &SwitchingSignal,
    x0: &[f64],
    h: f64,
    t_end: f64,
) -> Result<Trajectory, SimError> {
    integrate_with(sys, sig, x0, h, t_end, IntegrateOptions::default())
}

pub fn integrate_with(
    sys: &SwitchedSystem,
    sig: &SwitchingSignal,
    x0: &[f64],
    h: f64,
    t_end: f64,
    opts: IntegrateOptions,
) -> Result<Trajectory, SimError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(SimError::BadStep(h));
    }
    if !(t_end > 0.0 && t_end <= sig.horizon() * (1.0 + 1e-12)) {
        return Err(SimError::BadHorizon { t_end, horizon: sig.horizon() });
    }
    if x0.len() != sys.dim() {
        return Err(SimError::Dimension { expected: sys.dim(), found: x0.len() });
    }
    if let Some(&m) = sig.modes().iter().find(|&&m| m >= sys.num_modes()) {
        return Err(SimError::ModeRange { mode: m + 1, modes: sys.num_modes() });
    }
    let v = sys.lyapunov().compile();
    let mut rk = Rk4::new(sys);
    let stride = opts.stride.max(1);
    let mut x = x0.to_vec();
    let intervals: Vec<_> = sig.intervals().take_while(|i| i.start < t_end).collect();
    let mut tr = Trajectory {
        times: vec![0.0],
        states: vec![x.clone()],
        modes: vec![intervals[0].mode],
        v: vec![v.eval(&x)],
        h,
        steps: 0,
        stride,
        diverged: false,
        error_estimate: None,
    };

    if opts.error_estimate {
        let first = intervals[0];
        let len = first.end.min(t_end) - first.start;
        let capped = (steps_for(len, h).min(MAX_HALVING_STEPS) as f64 * h).min(len);
        let mut coarse = x0.to_vec();
        let mut fine = x0.to_vec();
        rk.interval(first.mode, &mut coarse, capped, h, usize::MAX);
        rk.interval(first.mode, &mut fine, capped, 0.5 * h, usize::MAX);
        let diff: f64 = coarse.iter().zip(&fine).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        tr.error_estimate = diff.is_finite().then_some(diff);
    }

    'run: for (idx, iv) in intervals.iter().enumerate() {
        let end = iv.end.min(t_end);
        let len = end - iv.start;
        let n = steps_for(len, h);
        let next_mode = intervals.get(idx + 1).filter(|_| end < t_end).map_or(iv.mode, |n| n.mode);
        for j in 0..n {
            let last = j + 1 == n;
            let hj = if last { len - (n - 1) as f64 * h } else { h };
            rk.step(iv.mode, &mut x, hj);
            tr.steps += 1;
            let t = if last { end } else { iv.start + (j + 1) as f64 * h };
            if x.iter().any(|c| c.is_nan()) {
                return Err(SimError::NotANumber(t));
            }
            let blown = norm(&x) > DIVERGENCE_BOUND;
            if last || blown || tr.steps.is_multiple_of(stride) {
                tr.times.push(t);
                tr.states.push(x.clone());
                tr.modes.push(if last { next_mode } else { iv.mode });
                tr.v.push(v.eval(&x));
            }
            if blown {
                tr.diverged = true;
                break 'run;
            }
        }
    }
    Ok(tr)
}

/// Independent runs in parallel; results in input order.
pub fn integrate_batch(
    sys: &SwitchedSystem,
    runs: &[(SwitchingSignal, Vec<f64>)],
    h: f64,
    t_end: f64,
    opts: IntegrateOptions,
) -> Vec<Result<Trajectory, SimError>> {
    runs.par_iter().map(|(sig, x0)| integrate_with(sys, sig, x0, h, t_end, opts)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MonotoneReport {
    pub pass: bool,
    pub worst_increase: f64,
    pub at_time: Option<f64>,
    pub slack: f64,
}

pub fn default_slack(traj: &Trajectory) -> f64 {
    1e-8 * (1.0 + traj.v[0].abs())
}

/// V must be nonincreasing along the recorded samples, up to `slack`.
pub fn v_monotone_check(traj: &Trajectory, slack: Option<f64>) -> MonotoneReport {
    let slack = slack.unwrap_or_else(|| default_slack(traj));
    let mut worst = 0.0f64;
    let mut at = None;
    for k in 1..traj.v.len() {
        let inc = traj.v[k] - traj.v[k - 1];
        if inc > worst {
            worst = inc;
            at = Some(traj.times[k]);
        }
    }
    MonotoneReport { pass: worst <= slack, worst_increase: worst, at_time: at, slack }
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleDefect {
    pub set: Vec<String>,
    pub max: f64,
    pub min: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OmegaEstimate {
    pub tail_start: f64,
    pub tail_len: usize,
    /// Mean of V over the tail (R̂).
    pub plateau: f64,
    /// Least-squares slope of V against t over the tail.
    pub slope: f64,
    pub v_spread: f64,
    pub oracles: Vec<OracleDefect>,
    pub final_norm: f64,
    pub eta: f64,
    pub converged: bool,
    #[serde(skip)]
    pub tail: Vec<Vec<f64>>,
}

pub fn omega_estimate(traj: &Trajectory, oracles: &[SetOracle], rho: f64, eta: f64) -> OmegaEstimate {
    let n = traj.times.len();
    let rho = rho.clamp(f64::MIN_POSITIVE, 1.0);
    let t_final = traj.final_time();
    let cut = t_final * (1.0 - rho);
    let mut start = traj.times.partition_point(|&t| t < cut).min(n - 1);
    if n - start < 2 && n >= 2 {
        start = n - 2;
    }
    let ts = &traj.times[start..];
    let vs = &traj.v[start..];
    let m = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / m;
    let vm = vs.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in ts.iter().zip(vs) {
        sxy += (t - tm) * (v - vm);
        sxx += (t - tm) * (t - tm);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let vmax = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let vmin = vs.iter().copied().fold(f64::INFINITY, f64::min);
    let tail: Vec<Vec<f64>> = traj.states[start..].to_vec();
    let oracles = oracles
        .iter()
        .map(|o| {
            let ds: Vec<f64> = tail.iter().map(|x| o.membership(x)).collect();
            OracleDefect {
                set: o.descriptions(),
                max: ds.iter().copied().fold(0.0, f64::max),
                min: ds.iter().copied().fold(f64::INFINITY, f64::min),
            }
        })
        .collect();
    let final_norm = norm(traj.final_state());
    OmegaEstimate {
        tail_start: ts[0],
        tail_len: tail.len(),
        plateau: vm.max(0.0),
        slope,
        v_spread: vmax - vmin,
        oracles,
        final_norm,
        eta,
        converged: final_norm <= eta && !traj.diverged,
        tail,
    }
}

#[derive(Clone, Debug)]
pub struct LocalizationParams {
    pub h: f64,
    pub t_end: f64,
    pub rho: f64,
    pub eta: f64,
    pub tol: f64,
    pub stride: usize,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        LocalizationParams { h: 1e-3, t_end: 100.0, rho: DEFAULT_RHO, eta: DEFAULT_ETA, tol: 1e-6, stride: 1 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalizationReport {
    pub omega: OmegaEstimate,
    /// Largest over tail points of the smallest oracle defect.
    pub worst_inclusion_defect: f64,
    pub inclusion: bool,
    pub intersection: bool,
    pub tol: f64,
    pub violations: Vec<String>,
}

/// K_i oracles for the modes the signal occupies (J_u estimate).
pub fn occupied_k_oracles(sys: &SwitchedSystem, sig: &SwitchingSignal, tol: f64) -> Result<Vec<SetOracle>, SimError> {
    let occ = occupancy(sig, sys.num_modes());
    j_u_estimate(&occ, sig.horizon(), DEFAULT_THETA).into_iter().map(|i| Ok(k_set(sys, i, tol)?)).collect()
}

/// Tail points lie near ∪ oracles, and each oracle comes near the tail.
pub fn limit_localization_test(
    sys: &SwitchedSystem,
    sig: &SwitchingSignal,
    x0: &[f64],
    oracles: &[SetOracle],
    params: &LocalizationParams,
) -> Result<LocalizationReport, SimError> {
    let opts = IntegrateOptions { stride: params.stride, error_estimate: false };
    let traj = integrate_with(sys, sig, x0, params.h, params.t_end, opts)?;
    let omega = omega_estimate(&traj, oracles, params.rho, params.eta);
    let mut violations = Vec::new();
    let mut worst = 0.0f64;
    let mut worst_at = None;
    for (k, x) in omega.tail.iter().enumerate() {
        let d = oracles.iter().map(|o| o.membership(x)).fold(f64::INFINITY, f64::min);
        if d > worst {
            worst = d;
            worst_at = Some(k);
        }
    }
    let inclusion = oracles.is_empty() || worst <= params.tol;
    if !inclusion {
        let x = &omega.tail[worst_at.unwrap()];
        violations.push(format!("tail point {x:?} has defect {worst:e} to every set"));
    }
    let mut intersection = true;
    for od in &omega.oracles {
        if od.min > params.tol {
            intersection = false;
            violations.push(format!("set {:?} stays at defect ≥ {:e} from the tail", od.set, od.min));
        }
    }
    if traj.diverged {
        violations.push("trajectory diverged".into());
    }
    Ok(LocalizationReport { omega, worst_inclusion_defect: worst, inclusion, intersection, tol: params.tol, violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{gen_quadrant, gen_regular};

    fn neg_identity() -> SwitchedSystem {
        SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["-x1", "-x2"]]).unwrap()
    }

    #[test]
    fn linear_closed_form() {
        let sys = neg_identity();
        let sig = SwitchingSignal::constant(0, 1.0);
        let tr = integrate(&sys, &sig, &[1.0, 0.0], 1e-3, 1.0).unwrap();
        assert!((tr.final_state()[0] - (-1f64).exp()).abs() < 1e-9);
        assert_eq!(tr.final_time(), 1.0);
        assert!(tr.error_estimate.unwrap() < 1e-12);
        assert!(v_monotone_check(&tr, None).pass);
    }

    #[test]
    fn equilibrium_stays_put() {
        let sys = SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["-x1 - x2", "x1"], &["-x1", "-x2"]]).unwrap();
        let sig = gen_regular(2, 5.0, 0.5);
        let tr = integrate(&sys, &sig, &[0.0, 0.0], 0.01, 5.0).unwrap();
        assert!(tr.states.iter().all(|x| x.iter().all(|&c| c == 0.0)));
        let r = v_monotone_check(&tr, None);
        assert!(r.pass && r.worst_increase == 0.0);
        let om = omega_estimate(&tr, &[], 0.2, 1e-3);
        assert_eq!(om.plateau, 0.0);
        assert!(om.converged);
    }

    #[test]
    fn switch_times_are_hit_exactly() {
        let sys = SwitchedSystem::from_strings(1, "x1^2", &[&["-x1"], &["-2*x1"]]).unwrap();
        let sig = SwitchingSignal::new(1.0, vec![(0.0, 0), (0.3337, 1)]).unwrap();
        let tr = integrate(&sys, &sig, &[1.0], 1e-3, 1.0).unwrap();
        assert!(tr.times.contains(&0.3337));
        let k = tr.times.iter().position(|&t| t == 0.3337).unwrap();
        assert_eq!(tr.modes[k], 1);
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
        let exact = (-0.3337f64).exp() * (-2.0 * (1.0 - 0.3337f64)).exp();
        assert!((tr.final_state()[0] - exact).abs() < 1e-10);
    }

    #[test]
    fn growing_v_fails_monotonicity_and_divergence_is_reported() {
        let sys = SwitchedSystem::from_strings(1, "x1^2", &[&["x1"]]).unwrap();
        let sig = SwitchingSignal::constant(0, 30.0);
        let tr = integrate(&sys, &sig, &[1.0], 0.01, 30.0).unwrap();
        assert!(!v_monotone_check(&tr, None).pass);
        assert!(tr.diverged && tr.final_time() < 30.0);
    }

    #[test]
    fn stride_thins_samples() {
        let sys = neg_identity();
        let sig = SwitchingSignal::constant(0, 1.0);
        let opts = IntegrateOptions { stride: 100, error_estimate: false };
        let tr = integrate_with(&sys, &sig, &[1.0, 1.0], 1e-3, 1.0, opts).unwrap();
        assert_eq!(tr.times.len(), 11);
        assert!(tr.to_csv().starts_with("t,x1,x2,mode,V\n0,1,1,1,2\n"));
    }

    #[test]
    fn rotation_plateau_is_detected() {
        let sys = SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["-x2", "x1"], &["-x2", "x1"]]).unwrap();
        let sig = gen_quadrant(20.0);
        let tr = integrate(&sys, &sig, &[1.0, 0.0], 1e-3, 20.0).unwrap();
        let om = omega_estimate(&tr, &[], 0.2, 1e-3);
        assert!((om.plateau - 1.0).abs() < 1e-9 && om.slope.abs() < 1e-9 && !om.converged);
    }

    #[test]
    fn localisation_for_single_gas_mode() {
        let sys = neg_identity();
        let sig = SwitchingSignal::constant(0, 30.0);
        let oracles = occupied_k_oracles(&sys, &sig, 1e-6).unwrap();
        let params = LocalizationParams { h: 1e-2, t_end: 30.0, ..Default::default() };
        let r = limit_localization_test(&sys, &sig, &[1.0, -1.0], &oracles, &params).unwrap();
        assert!(r.inclusion && r.intersection && r.omega.converged);
    }

    #[test]
    fn argument_errors() {
        let sys = neg_identity();
        let sig = SwitchingSignal::constant(0, 1.0);
        assert!(matches!(integrate(&sys, &sig, &[1.0, 0.0], 0.0, 1.0), Err(SimError::BadStep(_))));
        assert!(matches!(integrate(&sys, &sig, &[1.0, 0.0], 0.1, 2.0), Err(SimError::BadHorizon { .. })));
        assert!(matches!(integrate(&sys, &sig, &[1.0], 0.1, 1.0), Err(SimError::Dimension { .. })));
        let two = SwitchingSignal::constant(1, 1.0);
        assert!(matches!(integrate(&sys, &two, &[1.0, 0.0], 0.1, 1.0), Err(SimError::ModeRange { .. })));
    }
}
