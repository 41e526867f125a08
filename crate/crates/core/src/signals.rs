//! Time-triggered switching signals: generators, finite-horizon classification
//! (dwell time, H(i), chaotic-like) and mode occupancy.
//!
//! Modes are 0-based in the API and 1-based in files and reports.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Run lengths of chaotic-like signals never go below this.
pub const MIN_RUN: f64 = 1e-5;
/// Occupancy fraction above which a mode belongs to the J_u estimate.
pub const DEFAULT_THETA: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid signal: {0}")]
    Invalid(String),
    #[error("invalid signal spec `{spec}`: {reason}")]
    Spec { spec: String, reason: String },
    #[error("invalid signal file: {0}")]
    Json(#[from] serde_json::Error),
}

fn invalid(msg: impl Into<String>) -> SignalError {
    SignalError::Invalid(msg.into())
}

/// Piecewise-constant, right-continuous signal on [0, horizon).
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchingSignal {
    horizon: f64,
    times: Vec<f64>,
    modes: Vec<usize>,
    /// Generator remarks (e.g. a run-length floor was hit).
    pub flags: Vec<String>,
}

/// A constancy interval [start, end).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
    pub mode: usize,
}

impl Interval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl SwitchingSignal {
    pub fn new(horizon: f64, events: Vec<(f64, usize)>) -> Result<Self, SignalError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if events.is_empty() {
            return Err(invalid("no events"));
        }
        if events[0].0 != 0.0 {
            return Err(invalid("first event must be at t = 0"));
        }
        for w in events.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(invalid(format!("event times not strictly increasing at {}", w[1].0)));
            }
        }
        if let Some(&(t, _)) = events.last() {
            if t >= horizon {
                return Err(invalid(format!("event at {t} is not before the horizon {horizon}")));
            }
        }
        let (times, modes) = events.into_iter().unzip();
        Ok(SwitchingSignal { horizon, times, modes, flags: Vec::new() })
    }

    pub fn constant(mode: usize, horizon: f64) -> Self {
        SwitchingSignal { horizon, times: vec![0.0], modes: vec![mode], flags: Vec::new() }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn num_events(&self) -> usize {
        self.times.len()
    }

    pub fn num_switches(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    /// Largest mode index plus one.
    pub fn min_modes(&self) -> usize {
        self.modes.iter().max().map_or(0, |m| m + 1)
    }

    pub fn check_modes(&self, p: usize) -> Result<(), SignalError> {
        match self.modes.iter().find(|&&m| m >= p) {
            Some(m) => Err(invalid(format!("mode {} out of range 1..={p}", m + 1))),
            None => Ok(()),
        }
    }

    pub fn value_at(&self, t: f64) -> usize {
        let k = self.times.partition_point(|&a| a <= t);
        self.modes[k.saturating_sub(1)]
    }

    pub fn intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        (0..self.times.len()).map(move |k| Interval {
            start: self.times[k],
            end: self.times.get(k + 1).copied().unwrap_or(self.horizon),
            mode: self.modes[k],
        })
    }

    pub fn durations(&self) -> Vec<f64> {
        self.intervals().map(|i| i.duration()).collect()
    }

    /// Restriction to [0, t).
    pub fn truncated(&self, t: f64) -> Self {
        let k = self.times.partition_point(|&a| a < t).max(1);
        SwitchingSignal {
            horizon: t,
            times: self.times[..k].to_vec(),
            modes: self.modes[..k].to_vec(),
            flags: self.flags.clone(),
        }
    }

    pub fn to_file(&self) -> SignalFile {
        SignalFile {
            horizon: self.horizon,
            events: self.times.iter().zip(&self.modes).map(|(&t, &m)| (t, m + 1)).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("signal serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, SignalError> {
        serde_json::from_str::<SignalFile>(text)?.build()
    }
}

/// `{ "horizon": T, "events": [[a_n, u_n], …] }` with 1-based modes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignalFile {
    pub horizon: f64,
    pub events: Vec<(f64, usize)>,
}

impl SignalFile {
    pub fn build(&self) -> Result<SwitchingSignal, SignalError> {
        if let Some(&(_, m)) = self.events.iter().find(|(_, m)| *m == 0) {
            return Err(invalid(format!("mode {m}: modes are numbered from 1")));
        }
        SwitchingSignal::new(self.horizon, self.events.iter().map(|&(t, m)| (t, m - 1)).collect())
    }
}

/// Accumulates events, merging equal consecutive modes.
struct Builder {
    horizon: f64,
    events: Vec<(f64, usize)>,
}

impl Builder {
    fn new(horizon: f64) -> Self {
        Builder { horizon, events: Vec::new() }
    }

    fn push(&mut self, t: f64, mode: usize) {
        if t >= self.horizon {
            return;
        }
        if let Some(last) = self.events.last_mut() {
            if last.1 == mode {
                return;
            }
            if t <= last.0 {
                *last = (last.0, mode);
                return;
            }
        }
        self.events.push((t, mode));
    }

    fn finish(self) -> SwitchingSignal {
        SwitchingSignal::new(self.horizon, self.events).expect("generator produces valid events")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DwellPattern {
    Cyclic,
    /// Durations in [δ, 3δ) and uniformly drawn next modes.
    Random { seed: u64 },
}

/// Dwell-time signal: every duration, including the last one, is at least `delta`.
pub fn gen_dwell(p: usize, horizon: f64, delta: f64, pattern: DwellPattern) -> SwitchingSignal {
    assert!(p > 0 && delta > 0.0 && horizon > 0.0);
    let slack = 1e-12 * horizon;
    let mut b = Builder::new(horizon);
    match pattern {
        DwellPattern::Cyclic => {
            let mut k = 0usize;
            loop {
                let a = k as f64 * delta;
                if k > 0 && horizon - a < delta - slack {
                    break;
                }
                b.events.push((a, k % p));
                k += 1;
                if p == 1 {
                    break;
                }
            }
        }
        DwellPattern::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = 0.0;
            let mut mode = rng.random_range(0..p);
            b.events.push((0.0, mode));
            if p > 1 {
                loop {
                    a += delta * (1.0 + 2.0 * rng.random::<f64>());
                    if horizon - a < delta {
                        break;
                    }
                    let step = rng.random_range(1..p);
                    mode = (mode + step) % p;
                    b.events.push((a, mode));
                }
            }
        }
    }
    b.finish()
}

/// Cyclic visits of every mode with duration `delta`.
pub fn gen_regular(p: usize, horizon: f64, delta: f64) -> SwitchingSignal {
    gen_dwell(p, horizon, delta, DwellPattern::Cyclic)
}

/// Windows [2kτ, 2kτ+τ] in which modes alternate with run length
/// τ·shrink^(k+1) (floored at [`MIN_RUN`]); mode 1 is held between windows.
pub fn gen_chaotic_like(p: usize, horizon: f64, tau: f64, shrink: f64) -> SwitchingSignal {
    assert!(p > 0 && tau > 0.0 && shrink > 0.0 && shrink < 1.0);
    let mut b = Builder::new(horizon);
    let mut floored = false;
    let mut k = 0usize;
    loop {
        let start = 2.0 * k as f64 * tau;
        if start >= horizon {
            break;
        }
        let mut run = tau * shrink.powi(k as i32 + 1);
        if run < MIN_RUN {
            run = MIN_RUN;
            floored = true;
        }
        let n = (tau / run).round().max(1.0) as usize;
        for j in 0..n {
            b.push(start + j as f64 * (tau / n as f64), (j + 1) % p);
        }
        b.push(start + tau, 0);
        k += 1;
    }
    if b.events.is_empty() {
        b.events.push((0.0, 0));
    }
    let mut s = b.finish();
    if floored {
        s.flags.push(format!("run length floored at {MIN_RUN:e}"));
    }
    s
}

/// Alternates modes 1, 2, … every `period` (π/2 by default for quadrant switching).
pub fn gen_periodic(p: usize, horizon: f64, period: f64) -> SwitchingSignal {
    let mut b = Builder::new(horizon);
    let mut k = 0usize;
    while (k as f64) * period < horizon {
        b.push(k as f64 * period, k % p);
        k += 1;
        if p == 1 {
            break;
        }
    }
    b.finish()
}

pub fn gen_quadrant(horizon: f64) -> SwitchingSignal {
    gen_periodic(2, horizon, FRAC_PI_2)
}

fn ser_one_based<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|m| m + 1))
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowRun {
    pub start: f64,
    pub max_run: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SignalReport {
    pub horizon: f64,
    pub switches: usize,
    pub occupancy: Vec<f64>,
    /// Modes with occupancy ≥ θ·T.
    #[serde(serialize_with = "ser_one_based")]
    pub j_u: Vec<usize>,
    pub theta: f64,
    pub min_duration: f64,
    pub max_duration: f64,
    pub tau: f64,
    pub delta: f64,
    pub windows: Vec<WindowRun>,
    /// Per mode: number of intervals with that value lasting ≥ δ.
    pub h_counts: Vec<usize>,
    pub h_threshold: usize,
    pub h: Vec<bool>,
    pub chaotic_like: bool,
    pub nonchaotic: bool,
    pub dwell_time: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl SignalReport {
    /// Signal class label used in reports.
    pub fn class(&self) -> &'static str {
        if self.chaotic_like {
            "chaotic-like"
        } else if self.nonchaotic && self.h.iter().all(|&h| h) {
            "regular"
        } else if self.nonchaotic {
            "nonchaotic"
        } else {
            "unclassified"
        }
    }
}

/// Exact time spent in each of `p` modes.
pub fn occupancy(sig: &SwitchingSignal, p: usize) -> Vec<f64> {
    let mut occ = vec![0.0; p.max(sig.min_modes())];
    for i in sig.intervals() {
        occ[i.mode] += i.duration();
    }
    occ
}

pub fn j_u_estimate(occ: &[f64], horizon: f64, theta: f64) -> Vec<usize> {
    (0..occ.len()).filter(|&i| occ[i] >= theta * horizon).collect()
}

/// Longest constant run of `sig` inside [a, b].
fn max_run_in(sig: &SwitchingSignal, a: f64, b: f64) -> f64 {
    let first = sig.times.partition_point(|&t| t <= a).saturating_sub(1);
    sig.intervals().skip(first).take_while(|i| i.start < b).map(|i| i.end.min(b) - i.start.max(a)).fold(0.0, f64::max)
}

/// Finite-horizon surrogates of the asymptotic signal classes.
///
/// Windows start at t_k = k·τ/2. A signal is chaotic-like when the smallest
/// window-maximal run over the second half of the horizon is below δ and the
/// running minimum of window-maximal runs has improved at least three times;
/// nonchaotic when that late minimum is at least δ (meaningful for τ ≥ 2δ).
pub fn classify(sig: &SwitchingSignal, p: usize, tau: f64, delta: f64) -> SignalReport {
    let horizon = sig.horizon();
    let occ = occupancy(sig, p);
    let durations = sig.durations();
    let min_duration = durations.iter().copied().fold(f64::INFINITY, f64::min);
    let max_duration = durations.iter().copied().fold(0.0, f64::max);

    let mut windows = Vec::new();
    let mut k = 0usize;
    loop {
        let start = k as f64 * tau / 2.0;
        if start + tau > horizon * (1.0 + 1e-12) {
            break;
        }
        windows.push(WindowRun { start, max_run: max_run_in(sig, start, start + tau) });
        k += 1;
    }
    let late: Vec<f64> = windows.iter().filter(|w| w.start >= horizon / 2.0).map(|w| w.max_run).collect();
    let late_min = late.iter().copied().fold(f64::INFINITY, f64::min);
    let mut records = 0;
    let mut best = f64::INFINITY;
    for w in &windows {
        if w.max_run < best {
            best = w.max_run;
            records += 1;
        }
    }
    let (chaotic_like, nonchaotic) =
        if late.is_empty() { (false, false) } else { (late_min < delta && records >= 3, late_min >= delta) };

    // the final interval stands for its continuation, in pieces of length δ
    let n = occ.len();
    let mut h_counts = vec![0usize; n];
    let last = sig.num_events() - 1;
    for (k, i) in sig.intervals().enumerate() {
        if k == last {
            h_counts[i.mode] += (i.duration() / delta + 1e-9).floor() as usize;
        } else if i.duration() >= delta * (1.0 - 1e-12) {
            h_counts[i.mode] += 1;
        }
    }
    let h_threshold = ((horizon / (10.0 * delta)) - 1e-9).ceil().max(1.0) as usize;
    let h = h_counts.iter().map(|&c| c >= h_threshold).collect();

    SignalReport {
        horizon,
        switches: sig.num_switches(),
        j_u: j_u_estimate(&occ, horizon, DEFAULT_THETA),
        occupancy: occ,
        theta: DEFAULT_THETA,
        min_duration,
        max_duration,
        tau,
        delta,
        windows,
        h_counts,
        h_threshold,
        h,
        chaotic_like,
        nonchaotic,
        dwell_time: min_duration >= delta * (1.0 - 1e-12),
        flags: sig.flags.clone(),
    }
}

fn spec_err(spec: &str, reason: impl Into<String>) -> SignalError {
    SignalError::Spec { spec: spec.to_string(), reason: reason.into() }
}

/// Builds a signal from `kind[:key=value,…]`:
/// `dwell:delta=1,pattern=cyclic|random,seed=7`, `regular:delta=0.5`,
/// `chaotic:tau=1,shrink=0.5`, `constant:mode=1`, `periodic:period=0.5`, `quadrant`.
pub fn parse_signal_spec(spec: &str, p: usize, horizon: f64, seed: u64) -> Result<SwitchingSignal, SignalError> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for part in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| spec_err(spec, format!("expected key=value, got `{part}`")))?;
        kv.insert(k.trim(), v.trim());
    }
    let num = |key: &str, default: Option<f64>| -> Result<f64, SignalError> {
        match kv.get(key) {
            Some(v) => v.parse::<f64>().map_err(|_| spec_err(spec, format!("`{key}` is not a number"))),
            None => default.ok_or_else(|| spec_err(spec, format!("missing `{key}`"))),
        }
    };
    let positive = |key: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(spec_err(spec, format!("`{key}` must be positive")))
        }
    };
    if p == 0 || !(horizon > 0.0) {
        return Err(spec_err(spec, "need at least one mode and a positive horizon"));
    }
    let sig = match kind.trim() {
        "dwell" => {
            let delta = positive("delta", num("delta", None)?)?;
            let pattern = match kv.get("pattern").copied().unwrap_or("cyclic") {
                "cyclic" => DwellPattern::Cyclic,
                "random" => DwellPattern::Random { seed: num("seed", Some(seed as f64))? as u64 },
                other => return Err(spec_err(spec, format!("unknown pattern `{other}`"))),
            };
            gen_dwell(p, horizon, delta, pattern)
        }
        "regular" => gen_regular(p, horizon, positive("delta", num("delta", None)?)?),
        "chaotic" | "chaotic-like" => {
            let tau = positive("tau", num("tau", Some(1.0))?)?;
            let shrink = num("shrink", Some(0.5))?;
            if !(shrink > 0.0 && shrink < 1.0) {
                return Err(spec_err(spec, "`shrink` must lie in (0, 1)"));
            }
            gen_chaotic_like(p, horizon, tau, shrink)
        }
        "constant" => {
            let mode = num("mode", Some(1.0))? as usize;
            if mode == 0 || mode > p {
                return Err(spec_err(spec, format!("mode {mode} out of range 1..={p}")));
            }
            SwitchingSignal::constant(mode - 1, horizon)
        }
        "periodic" => gen_periodic(p, horizon, positive("period", num("period", None)?)?),
        "quadrant" => gen_periodic(p.min(2), horizon, positive("period", num("period", Some(FRAC_PI_2))?)?),
        other => return Err(spec_err(spec, format!("unknown signal kind `{other}`"))),
    };
    Ok(sig)
}
