//! Level-set sampling by ray bisection, ε-graph components, and the
//! component-based checkers (Conditions C and K, and the cone version on S(1)).

use std::collections::HashMap;

use rayon::prelude::*;
use serde_json::json;

use super::cone::HomogeneousCone;
use super::sets::k_set;
use super::{ConditionVerdict, GeometryError, Holds, SetOracle, SurfaceSet, DEFAULT_TOL};
use crate::expr::{CompiledExpr, Expr};
use crate::model::SwitchedSystem;
use crate::sampling::{direction_spacing, dist, norm, sphere_directions};

const MIN_POINTS: usize = 8;
const RAY_SCAN: usize = 64;
const MAX_WITNESS: usize = 24;

#[derive(Clone, Debug)]
pub struct SamplingParams {
    /// Neighbourhood radius r.
    pub radius: f64,
    pub levels: Vec<f64>,
    /// Number of ray directions.
    pub mesh: usize,
    /// ε-graph radius; `None` uses 3× the mean nearest-neighbour spacing.
    pub eps: Option<f64>,
    pub tol: f64,
    /// Membership band as a multiple of the local mesh spacing.
    pub band_factor: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { radius: 1.0, levels: vec![0.25, 0.5, 1.0], mesh: 2000, eps: None, tol: DEFAULT_TOL, band_factor: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct LevelSetSample {
    pub level: f64,
    pub points: Vec<Vec<f64>>,
    pub normals: Vec<Vec<f64>>,
    pub rays: usize,
    pub skipped: usize,
}

/// Points of {V = R} ∩ ball(r), one per ray that reaches the level inside the ball.
pub fn level_set_points(v: &Expr, level: f64, radius: f64, mesh: usize) -> LevelSetSample {
    let d = v.dim();
    let cv = v.compile();
    let grad: Option<Vec<CompiledExpr>> = v.gradient().ok().map(|g| g.iter().map(Expr::compile).collect());
    let dirs = sphere_directions(d, mesh);
    let mut points = Vec::with_capacity(dirs.len());
    let mut normals = Vec::with_capacity(dirs.len());
    let mut skipped = 0;
    for u in &dirs {
        match ray_root(&cv, u, level, radius) {
            Some(t) => {
                let x: Vec<f64> = u.iter().map(|c| c * t).collect();
                let n = match &grad {
                    Some(g) => g.iter().map(|gi| gi.eval(&x)).collect(),
                    None => x.clone(),
                };
                points.push(x);
                normals.push(n);
            }
            None => skipped += 1,
        }
    }
    LevelSetSample { level, points, normals, rays: dirs.len(), skipped }
}

fn ray_root(v: &CompiledExpr, u: &[f64], level: f64, radius: f64) -> Option<f64> {
    let at = |t: f64| {
        let x: Vec<f64> = u.iter().map(|c| c * t).collect();
        v.eval(&x)
    };
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=RAY_SCAN {
        let t = radius * k as f64 / RAY_SCAN as f64;
        let val = at(t);
        if val.is_nan() {
            return None;
        }
        if val >= level {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let mut hi = hi?;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if at(mid) >= level {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Uniform hash grid over points for radius queries.
struct Grid<'a> {
    cell: f64,
    points: &'a [Vec<f64>],
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Vec<f64>], cell: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p, cell)).or_default().push(i);
        }
        Grid { cell, points, cells }
    }

    fn neighbours(&self, i: usize, mut visit: impl FnMut(usize)) {
        let base = key(&self.points[i], self.cell);
        let d = base.len();
        let mut offset = vec![-1i64; d];
        loop {
            let k: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(list) = self.cells.get(&k) {
                for &j in list {
                    if j != i {
                        visit(j);
                    }
                }
            }
            // odometer over {-1,0,1}^d
            let mut pos = 0;
            loop {
                if pos == d {
                    return;
                }
                offset[pos] += 1;
                if offset[pos] <= 1 {
                    break;
                }
                offset[pos] = -1;
                pos += 1;
            }
        }
    }
}

fn key(p: &[f64], cell: f64) -> Vec<i64> {
    p.iter().map(|v| (v / cell).floor() as i64).collect()
}

/// Mean distance from each point to its nearest neighbour.
pub fn mean_nearest_neighbour(points: &[Vec<f64>]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    // cell size from the bounding box and count
    let d = points[0].len();
    let mut lo = points[0].clone();
    let mut hi = points[0].clone();
    for p in points {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let extent = dist(&lo, &hi).max(1e-300);
    let mut cell = extent / (n as f64).powf(1.0 / (d.max(2) as f64 - 1.0)).max(1.0);
    loop {
        let grid = Grid::new(points, cell);
        let mut total = 0.0;
        let mut ok = true;
        for i in 0..n {
            let mut best = f64::INFINITY;
            grid.neighbours(i, |j| best = best.min(dist(&points[i], &points[j])));
            // a neighbour outside the 3^d block could be closer than one found beyond `cell`
            if best > cell {
                ok = false;
                break;
            }
            total += best;
        }
        if ok {
            return total / n as f64;
        }
        cell *= 2.0;
    }
}

/// Connected components of the ε-graph, as lists of indices (ordered by first index).
pub fn eps_components(points: &[Vec<f64>], eps: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    if n > 0 && eps > 0.0 {
        let grid = Grid::new(points, eps);
        for i in 0..n {
            let mut close = Vec::new();
            grid.neighbours(i, |j| {
                if j > i && dist(&points[i], &points[j]) <= eps {
                    close.push(j);
                }
            });
            for j in close {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

/// For points on a surface: keep those near some set, build the ε-graph, and
/// return the first component that is near every set.
pub fn components_touching(
    points: &[Vec<f64>],
    normals: &[Vec<f64>],
    sets: &[&dyn SurfaceSet],
    eps: f64,
    angular_spacing: f64,
    band_factor: f64,
    tol: f64,
) -> (usize, usize, Option<Vec<Vec<f64>>>) {
    let mut kept = Vec::new();
    let mut touches: Vec<Vec<bool>> = Vec::new();
    for (x, n) in points.iter().zip(normals) {
        let band = band_factor * angular_spacing * norm(x);
        let t: Vec<bool> = sets.iter().map(|s| s.near(x, Some(n), band, tol)).collect();
        if t.iter().any(|&b| b) {
            kept.push(x.clone());
            touches.push(t);
        }
    }
    let comps = eps_components(&kept, eps);
    let n_comps = comps.len();
    for comp in &comps {
        let all = (0..sets.len()).all(|j| comp.iter().any(|&i| touches[i][j]));
        if all {
            let step = (comp.len() / MAX_WITNESS).max(1);
            let w = comp.iter().step_by(step).take(MAX_WITNESS).map(|&i| kept[i].clone()).collect();
            return (kept.len(), n_comps, Some(w));
        }
    }
    (kept.len(), n_comps, None)
}

struct LevelOutcome {
    level: f64,
    samples: usize,
    skipped: usize,
    retained: usize,
    components: usize,
    eps: f64,
    witness: Option<Vec<Vec<f64>>>,
    holds: Holds,
}

fn check_levels(condition: &str, v: &Expr, sets: &[&dyn SurfaceSet], params: &SamplingParams) -> ConditionVerdict {
    let d = v.dim();
    let spacing = direction_spacing(d, params.mesh);
    let mut levels = params.levels.clone();
    levels.sort_by(f64::total_cmp);
    let outcomes: Vec<LevelOutcome> = levels
        .par_iter()
        .map(|&level| {
            let sample = level_set_points(v, level, params.radius, params.mesh);
            let eps = params.eps.unwrap_or_else(|| 3.0 * mean_nearest_neighbour(&sample.points));
            let (retained, components, witness) = components_touching(
                &sample.points,
                &sample.normals,
                sets,
                eps,
                spacing,
                params.band_factor,
                params.tol,
            );
            let sparse = sample.points.len() < MIN_POINTS || 2 * sample.skipped > sample.rays;
            let holds = if witness.is_some() {
                Holds::No
            } else if sparse {
                Holds::Inconclusive
            } else {
                Holds::Yes
            };
            LevelOutcome {
                level,
                samples: sample.points.len(),
                skipped: sample.skipped,
                retained,
                components,
                eps,
                witness,
                holds,
            }
        })
        .collect();

    let holds = if outcomes.iter().any(|o| o.holds == Holds::No) {
        Holds::No
    } else if outcomes.iter().any(|o| o.holds == Holds::Inconclusive) || outcomes.is_empty() {
        Holds::Inconclusive
    } else {
        Holds::Yes
    };
    let mut verdict = ConditionVerdict::new(condition, holds)
        .param("radius", params.radius)
        .param("levels", levels.clone())
        .param("mesh", params.mesh)
        .param("tol", params.tol)
        .param("band_factor", params.band_factor)
        .param(
            "per_level",
            outcomes
                .iter()
                .map(|o| {
                    json!({
                        "level": o.level, "samples": o.samples, "skipped": o.skipped,
                        "retained": o.retained, "components": o.components, "eps": o.eps,
                        "holds": o.holds.as_str(),
                    })
                })
                .collect::<Vec<_>>(),
        );
    if let Some(o) = outcomes.iter().find(|o| o.witness.is_some()) {
        verdict.witness = o.witness.clone().unwrap_or_default();
        verdict = verdict.note(format!("a connected component of the level set {{V = {}}} meets every set", o.level));
    }
    if outcomes.iter().any(|o| o.samples < MIN_POINTS) {
        verdict = verdict.note("fewer than 8 level-set samples on some level");
    }
    verdict
}

/// No component of {V=R} ∩ ball(r) ∩ ∪ sets meets every set, for each sampled R.
pub fn check_condition_c(sys: &SwitchedSystem, oracles: &[SetOracle], params: &SamplingParams) -> ConditionVerdict {
    let sets: Vec<&dyn SurfaceSet> = oracles.iter().map(|o| o as &dyn SurfaceSet).collect();
    let mut v = check_levels("C", sys.lyapunov(), &sets, params);
    if let Some(k) = oracles.iter().filter_map(|o| o.truncated_at()).max() {
        v = v.param("kmax", k);
    }
    v
}

/// Condition C with the sets K_i, i ∈ J.
pub fn check_condition_k(sys: &SwitchedSystem, modes: &[usize], params: &SamplingParams) -> Result<ConditionVerdict, GeometryError> {
    let oracles = modes.iter().map(|&i| k_set(sys, i, params.tol)).collect::<Result<Vec<_>, _>>()?;
    let sets: Vec<&dyn SurfaceSet> = oracles.iter().map(|o| o as &dyn SurfaceSet).collect();
    let j: Vec<usize> = modes.iter().map(|i| i + 1).collect();
    Ok(check_levels("K", sys.lyapunov(), &sets, params).param("J", j))
}

/// No component of S(1) ∩ ∪ cones meets every cone.
pub fn check_theo2(cones: &[HomogeneousCone], mesh: usize, eps: Option<f64>, tol: f64) -> ConditionVerdict {
    let Some(first) = cones.first() else {
        return ConditionVerdict::new("Theo2", Holds::Inconclusive).note("no cones");
    };
    let d = first.dim();
    let dirs = sphere_directions(d, mesh);
    let eps = eps.unwrap_or_else(|| 3.0 * mean_nearest_neighbour(&dirs));
    let sets: Vec<&dyn SurfaceSet> = cones.iter().map(|c| c as &dyn SurfaceSet).collect();
    let (retained, components, witness) =
        components_touching(&dirs, &dirs, &sets, eps, direction_spacing(d, mesh), 1.0, tol);
    let holds = if witness.is_some() { Holds::No } else { Holds::Yes };
    let mut v = ConditionVerdict::new("Theo2", holds)
        .param("mesh", mesh)
        .param("eps", eps)
        .param("retained", retained)
        .param("components", components);
    v.witness = witness.unwrap_or_default();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_system() -> SwitchedSystem {
        SwitchedSystem::from_strings(2, "x1^2 + x2^2", &[&["-x1", "-x2"]]).unwrap()
    }

    fn oracle(s: &str) -> SetOracle {
        SetOracle::custom(vec![Expr::parse(s, 2).unwrap()], 1e-6)
    }

    #[test]
    fn level_points_lie_on_level() {
        let v = Expr::parse("x1^4 + 2*x2^2", 2).unwrap();
        let s = level_set_points(&v, 0.5, 2.0, 300);
        assert_eq!(s.points.len(), 300);
        for p in &s.points {
            assert!((v.evaluate(p).unwrap() - 0.5).abs() < 1e-12);
        }
        let far = level_set_points(&v, 100.0, 1.0, 50);
        assert_eq!(far.skipped, 50);
    }

    #[test]
    fn nearest_neighbour_on_circle() {
        let pts = sphere_directions(2, 1000);
        let m = mean_nearest_neighbour(&pts);
        assert!((m - std::f64::consts::TAU / 1000.0).abs() < 1e-6);
    }

    #[test]
    fn components_of_two_clusters() {
        let mut pts: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64 * 0.1, 0.0]).collect();
        pts.extend((0..10).map(|k| vec![5.0 + k as f64 * 0.1, 0.0]));
        assert_eq!(eps_components(&pts, 0.15).len(), 2);
        assert_eq!(eps_components(&pts, 10.0).len(), 1);
    }

    #[test]
    fn identical_sets_fail() {
        let sys = circle_system();
        let params = SamplingParams { levels: vec![0.5, 1.0], radius: 1.5, mesh: 720, ..Default::default() };
        let v = check_condition_c(&sys, &[oracle("x2"), oracle("x2")], &params);
        assert_eq!(v.holds, Holds::No);
        assert!(!v.witness.is_empty());
    }

    #[test]
    fn axes_pass() {
        let sys = circle_system();
        let params = SamplingParams { levels: vec![1.0], radius: 1.5, mesh: 720, ..Default::default() };
        let v = check_condition_c(&sys, &[oracle("x1"), oracle("x2")], &params);
        assert_eq!(v.holds, Holds::Yes);
    }

    #[test]
    fn sparse_sampling_is_inconclusive() {
        let sys = circle_system();
        // the level lies outside the neighbourhood on every ray
        let params = SamplingParams { levels: vec![4.0], radius: 1.5, mesh: 100, ..Default::default() };
        let v = check_condition_c(&sys, &[oracle("x1"), oracle("x2")], &params);
        assert_eq!(v.holds, Holds::Inconclusive);
    }
}
