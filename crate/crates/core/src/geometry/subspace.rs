//! Linear subspaces with orthonormal bases, and the subspace sufficient conditions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::{first_order_near, ConditionVerdict, Holds, SurfaceSet};
use crate::sampling::norm;

pub const RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct LinearSubspace {
    dim: usize,
    basis: Vec<Vec<f64>>,
    #[serde(skip)]
    tol: f64,
}

impl LinearSubspace {
    pub fn zero(dim: usize) -> Self {
        LinearSubspace { dim, basis: Vec::new(), tol: RANK_TOL }
    }

    pub fn full(dim: usize) -> Self {
        let basis = (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e
            })
            .collect();
        LinearSubspace { dim, basis, tol: RANK_TOL }
    }

    /// Span of `vectors`; singular values below `tol·max(1, σ_max)` are dropped.
    pub fn span(dim: usize, vectors: &[Vec<f64>], tol: f64) -> Self {
        let vs: Vec<&Vec<f64>> = vectors.iter().filter(|v| norm(v) > 0.0).collect();
        if vs.is_empty() {
            return LinearSubspace { dim, basis: Vec::new(), tol };
        }
        let m = DMatrix::from_fn(dim, vs.len(), |r, c| vs[c][r]);
        let svd = m.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.max();
        let cut = tol * smax.max(1.0);
        let basis = svd
            .singular_values
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > cut)
            .map(|(k, _)| u.column(k).iter().copied().collect())
            .collect();
        LinearSubspace { dim, basis, tol }
    }

    /// Subspace from already-orthonormal vectors (re-orthonormalised defensively).
    pub fn from_basis(dim: usize, basis: Vec<Vec<f64>>) -> Self {
        Self::span(dim, &basis, RANK_TOL)
    }

    /// Zero set of linear equations a·x = 0.
    pub fn kernel_of(dim: usize, rows: &[Vec<f64>]) -> Self {
        Self::span(dim, rows, RANK_TOL).complement()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.dim];
        for b in &self.basis {
            let c: f64 = b.iter().zip(x).map(|(u, v)| u * v).sum();
            for (pi, bi) in p.iter_mut().zip(b) {
                *pi += c * bi;
            }
        }
        p
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        let p = self.project(x);
        x.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn contains_vector(&self, x: &[f64], tol: f64) -> bool {
        self.distance(x) <= tol * norm(x).max(1e-300)
    }

    pub fn is_subspace_of(&self, other: &LinearSubspace, tol: f64) -> bool {
        self.basis.iter().all(|b| other.contains_vector(b, tol))
    }

    pub fn complement(&self) -> Self {
        if self.basis.is_empty() {
            return Self::full(self.dim);
        }
        let mut p = DMatrix::<f64>::identity(self.dim, self.dim);
        for b in &self.basis {
            let v = DVector::from_column_slice(b);
            p -= &v * v.transpose();
        }
        let eig = SymmetricEigen::new(p);
        let basis: Vec<Vec<f64>> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| l > 0.5)
            .map(|(k, _)| eig.eigenvectors.column(k).iter().copied().collect())
            .collect();
        Self::span(self.dim, &basis, self.tol)
    }

    pub fn sum(&self, other: &LinearSubspace) -> Self {
        let mut all = self.basis.clone();
        all.extend(other.basis.iter().cloned());
        Self::span(self.dim, &all, self.tol.max(other.tol))
    }

    pub fn intersection(&self, other: &LinearSubspace) -> Self {
        self.complement().sum(&other.complement()).complement()
    }

    /// Principal angles (ascending) between two subspaces.
    pub fn principal_angles(&self, other: &LinearSubspace) -> Vec<f64> {
        if self.basis.is_empty() || other.basis.is_empty() {
            return Vec::new();
        }
        let a = DMatrix::from_fn(self.dim, self.rank(), |r, c| self.basis[c][r]);
        let b = DMatrix::from_fn(other.dim, other.rank(), |r, c| other.basis[c][r]);
        let m = a.transpose() * b;
        let s = m.singular_values();
        let mut angles: Vec<f64> = s.iter().map(|v| v.clamp(-1.0, 1.0).acos()).collect();
        angles.sort_by(f64::total_cmp);
        angles
    }

    /// Equal rank and all principal angles ≤ `tol`.
    pub fn same_as(&self, other: &LinearSubspace, tol: f64) -> bool {
        self.dim == other.dim
            && self.rank() == other.rank()
            && self.principal_angles(other).iter().all(|&a| a <= tol)
    }

    pub fn max_principal_angle(&self, other: &LinearSubspace) -> Option<f64> {
        if self.rank() != other.rank() {
            return None;
        }
        Some(self.principal_angles(other).into_iter().fold(0.0, f64::max))
    }

    /// Applies an orthogonal (or any) linear map to the subspace.
    pub fn transform(&self, q: &DMatrix<f64>) -> Self {
        let vs: Vec<Vec<f64>> = self
            .basis
            .iter()
            .map(|b| (q * DVector::from_column_slice(b)).iter().copied().collect())
            .collect();
        Self::span(self.dim, &vs, self.tol)
    }
}

impl SurfaceSet for LinearSubspace {
    fn defect(&self, x: &[f64]) -> f64 {
        self.distance(x)
    }

    fn near(&self, x: &[f64], normal: Option<&[f64]>, band: f64, tol: f64) -> bool {
        // each complement coordinate is a linear defining function
        let comp = self.complement();
        comp.basis.iter().all(|c| {
            let v: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
            v.abs() <= tol || first_order_near(v, c, normal, band)
        })
    }
}

/// Which family of linear objects is being tested; only affects labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubspaceFamily {
    /// Centre subspaces V_i of the linearised modes.
    Centre,
    /// Kernels K_i of the Hessians of L_{f_i}V at the origin.
    HessianKernel,
}

impl SubspaceFamily {
    fn prefix(self) -> &'static str {
        match self {
            SubspaceFamily::Centre => "Cor5",
            SubspaceFamily::HessianKernel => "LinK",
        }
    }
}

/// Sufficient conditions on a family of subspaces with trivial intersection.
///
/// Reports every firing condition; the verdict's condition name carries the first.
pub fn subspace_conditions(spaces: &[LinearSubspace], family: SubspaceFamily) -> ConditionVerdict {
    let prefix = family.prefix();
    let Some(first) = spaces.first() else {
        return ConditionVerdict::new(prefix, Holds::Inconclusive).note("empty family");
    };
    let d = first.dim();
    let p = spaces.len();
    let tol = 1e-7;

    let complements: Vec<Vec<f64>> = spaces.iter().flat_map(|s| s.complement().basis.clone()).collect();
    let comp_rank = LinearSubspace::span(d, &complements, RANK_TOL).rank();
    let trivial_intersection = comp_rank == d;
    let dims: Vec<usize> = spaces.iter().map(LinearSubspace::rank).collect();
    let sum_dim = spaces.iter().skip(1).fold(first.clone(), |acc, s| acc.sum(s)).rank();

    let mut firing = Vec::new();
    if dims.contains(&0) {
        firing.push(1);
    }
    let cond2 = spaces.iter().enumerate().any(|(i, vi)| {
        vi.rank() == 1
            && spaces
                .iter()
                .enumerate()
                .all(|(j, vj)| j == i || !vi.is_subspace_of(vj, tol) || vi.same_as(vj, tol))
    });
    if cond2 {
        firing.push(2);
    }
    if p == 2 {
        firing.push(3);
    }
    let total: i64 = dims.iter().map(|&k| k as i64).sum();
    if p > 2 && (sum_dim as i64) > total - p as i64 + 1 {
        firing.push(4);
    }

    let mut verdict = if !trivial_intersection {
        ConditionVerdict::new(prefix, Holds::No)
            .note("common intersection is not {0}")
    } else if let Some(&c) = firing.first() {
        ConditionVerdict::new(format!("{prefix}.{c}"), Holds::Yes)
    } else {
        ConditionVerdict::new(prefix, Holds::No).note("no sufficient condition fires")
    };
    if verdict.holds == Holds::No {
        let inter = spaces.iter().skip(1).fold(first.clone(), |acc, s| acc.intersection(s));
        verdict.witness = if inter.rank() > 0 { inter.basis().to_vec() } else { spaces.iter().flat_map(|s| s.basis().to_vec()).collect() };
    }
    verdict
        .param("trivial_intersection", trivial_intersection)
        .param("firing", firing)
        .param("dims", dims)
        .param("sum_dim", sum_dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(d: usize, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        e
    }

    #[test]
    fn complement_and_intersection() {
        let plane = LinearSubspace::span(3, &[axis(3, 0), axis(3, 1)], RANK_TOL);
        assert_eq!(plane.rank(), 2);
        let c = plane.complement();
        assert_eq!(c.rank(), 1);
        assert!(c.contains_vector(&axis(3, 2), 1e-12));
        let other = LinearSubspace::span(3, &[axis(3, 1), axis(3, 2)], RANK_TOL);
        let line = plane.intersection(&other);
        assert!(line.same_as(&LinearSubspace::span(3, &[axis(3, 1)], RANK_TOL), 1e-10));
    }

    #[test]
    fn principal_angle_of_tilted_lines() {
        let a = LinearSubspace::span(2, &[vec![1.0, 0.0]], RANK_TOL);
        let b = LinearSubspace::span(2, &[vec![1.0, 1.0]], RANK_TOL);
        assert!((a.max_principal_angle(&b).unwrap() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn conditions_on_three_mode_example() {
        // {x3=0}, {x1=x2=0}, {x1=x3=0}
        let v1 = LinearSubspace::kernel_of(3, &[axis(3, 2)]);
        let v2 = LinearSubspace::kernel_of(3, &[axis(3, 0), axis(3, 1)]);
        let v3 = LinearSubspace::kernel_of(3, &[axis(3, 0), axis(3, 2)]);
        let v = subspace_conditions(&[v1, v2, v3], SubspaceFamily::Centre);
        assert_eq!(v.holds, Holds::Yes);
        assert_eq!(v.condition, "Cor5.2");
    }

    #[test]
    fn shared_axis_fails() {
        let a = LinearSubspace::kernel_of(3, &[axis(3, 0)]);
        let b = LinearSubspace::kernel_of(3, &[axis(3, 1)]);
        let v = subspace_conditions(&[a, b], SubspaceFamily::Centre);
        assert_eq!(v.holds, Holds::No);
        assert!(!v.witness.is_empty());
    }

    #[test]
    fn two_spaces_fire_condition_three() {
        let a = LinearSubspace::kernel_of(2, &[axis(2, 0)]);
        let b = LinearSubspace::span(2, &[axis(2, 0)], RANK_TOL);
        let v = subspace_conditions(&[a, b], SubspaceFamily::Centre);
        assert_eq!(v.holds, Holds::Yes);
        // two distinct lines also satisfy condition 2, which is listed first
        assert_eq!(v.params["firing"], serde_json::json!([2, 3]));
    }
}
