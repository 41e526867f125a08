//! Spectral splitting of linearisations into centre/stable/unstable parts, and
//! polynomial approximation of centre manifolds as graphs over the centre subspace.

use nalgebra::{Complex, DMatrix};
use num_traits::{One, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::expr::{format_rational, rational_from_f64, rational_to_f64, Expr, ExprError, Poly, Rational, VectorFieldExpr};
use crate::geometry::LinearSubspace;

/// Real parts within this of zero count as centre spectrum.
pub const REAL_PART_TOL: f64 = 1e-9;
const CLUSTER_TOL: f64 = 1e-5;
const KERNEL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LinearError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),
    #[error("linearisation has an unstable eigenvalue (real part {0:e})")]
    Unstable(f64),
    #[error("linearisation is not semisimple on its centre subspace")]
    NotSemisimple,
    #[error("resonance at degree {degree}: homological system of size {size} has rank {rank}")]
    Resonance { degree: u32, size: usize, rank: usize },
}

/// Eigenvalues near each other are merged; `value` is the cluster mean.
#[derive(Clone, Debug, Serialize)]
pub struct EigenCluster {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralSplit {
    #[serde(serialize_with = "ser_matrix")]
    pub matrix: DMatrix<f64>,
    pub eigenvalues: Vec<EigenCluster>,
    pub center: LinearSubspace,
    pub stable: LinearSubspace,
    pub unstable: LinearSubspace,
    pub semisimple_on_center: bool,
    pub has_unstable: bool,
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
    rows.serialize(s)
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, LinearError> {
    let n = rows.len();
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return Err(LinearError::NotSquare { rows: n, cols: r.len() });
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn cluster(eigs: &[Complex<f64>]) -> Vec<EigenCluster> {
    let mut groups: Vec<Vec<Complex<f64>>> = Vec::new();
    for &z in eigs {
        let found = groups.iter_mut().find(|g| {
            let c = g.iter().sum::<Complex<f64>>() / g.len() as f64;
            (c - z).norm() <= CLUSTER_TOL * c.norm().max(1.0)
        });
        match found {
            Some(g) => g.push(z),
            None => groups.push(vec![z]),
        }
    }
    let mut out: Vec<EigenCluster> = groups
        .iter()
        .map(|g| {
            let c = g.iter().sum::<Complex<f64>>() / g.len() as f64;
            EigenCluster { re: c.re, im: c.im, multiplicity: g.len() }
        })
        .collect();
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im)));
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Center,
    Stable,
    Unstable,
}

fn part_of(c: &EigenCluster) -> Part {
    if c.re.abs() <= REAL_PART_TOL {
        Part::Center
    } else if c.re < 0.0 {
        Part::Stable
    } else {
        Part::Unstable
    }
}

/// Real factor (A − a)(A − ā) or (A − a), raised to `power`; `None` for the
/// lower member of a conjugate pair.
fn real_factor(a: &DMatrix<f64>, c: &EigenCluster, power: usize) -> Option<DMatrix<f64>> {
    let d = a.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    // centre values sit on the imaginary axis by definition
    let re = if part_of(c) == Part::Center { 0.0 } else { c.re };
    let base = if c.im.abs() <= REAL_PART_TOL * c.im.hypot(c.re).max(1.0) {
        a - &id * re
    } else if c.im > 0.0 {
        a * a - a * (2.0 * re) + &id * (re * re + c.im * c.im)
    } else {
        return None;
    };
    let mut out = id;
    for _ in 0..power {
        out = &out * &base;
    }
    Some(out)
}

fn kernel(m: &DMatrix<f64>) -> LinearSubspace {
    let d = m.nrows();
    let scale = m.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("right singular vectors requested");
    let basis: Vec<Vec<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= KERNEL_TOL * scale)
        .map(|(k, _)| vt.row(k).iter().copied().collect())
        .collect();
    LinearSubspace::span(d, &basis, 1e-9)
}

fn part_kernel(a: &DMatrix<f64>, clusters: &[EigenCluster], part: Part, simple: bool) -> LinearSubspace {
    let d = a.nrows();
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut any = false;
    for c in clusters.iter().filter(|c| part_of(c) == part) {
        if let Some(f) = real_factor(a, c, if simple { 1 } else { c.multiplicity }) {
            q = &q * f;
            any = true;
        }
    }
    if !any {
        return LinearSubspace::zero(d);
    }
    kernel(&q)
}

/// Centre, stable and unstable generalised eigenspaces of `a`.
pub fn spectral_split(a: &DMatrix<f64>) -> Result<SpectralSplit, LinearError> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(LinearError::NotSquare { rows: d, cols: a.ncols() });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(LinearError::Eigen("non-finite matrix entry".into()));
    }
    let eigs = a.clone().complex_eigenvalues();
    let clusters = cluster(eigs.as_slice());
    let center = part_kernel(a, &clusters, Part::Center, false);
    let stable = part_kernel(a, &clusters, Part::Stable, false);
    let unstable = part_kernel(a, &clusters, Part::Unstable, false);
    if center.rank() + stable.rank() + unstable.rank() != d {
        return Err(LinearError::Eigen(format!(
            "generalised eigenspace dimensions {}+{}+{} do not sum to {d}",
            center.rank(),
            stable.rank(),
            unstable.rank()
        )));
    }
    let semisimple_on_center = part_kernel(a, &clusters, Part::Center, true).rank() == center.rank();
    let has_unstable = clusters.iter().any(|c| part_of(c) == Part::Unstable);
    Ok(SpectralSplit { matrix: a.clone(), eigenvalues: clusters, center, stable, unstable, semisimple_on_center, has_unstable })
}

impl SpectralSplit {
    fn max_unstable_re(&self) -> f64 {
        self.eigenvalues.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// M_i of a stable linear mode: its centre subspace.
pub fn linear_mi(split: &SpectralSplit) -> Result<LinearSubspace, LinearError> {
    if split.has_unstable {
        return Err(LinearError::Unstable(split.max_unstable_re()));
    }
    if !split.semisimple_on_center {
        return Err(LinearError::NotSemisimple);
    }
    Ok(split.center.clone())
}

/// Centre subspace V_i of Df(0).
pub fn tangent_space_vi(f: &VectorFieldExpr) -> Result<LinearSubspace, LinearError> {
    let j = f.jacobian_at_origin()?;
    let split = spectral_split(&matrix_from_rows(&j)?)?;
    if split.has_unstable {
        return Err(LinearError::Unstable(split.max_unstable_re()));
    }
    Ok(split.center)
}

// ---------------------------------------------------------------------------
// exact linear algebra over the rationals

type RMat = Vec<Vec<Rational>>;

/// Solves m·u = rhs by Gauss–Jordan elimination; on singularity returns the rank.
fn solve_exact(m: &RMat, rhs: &[Rational]) -> Result<Vec<Rational>, usize> {
    let n = m.len();
    let cols = if n == 0 { 0 } else { m[0].len() };
    let mut a: Vec<Vec<Rational>> = m.iter().zip(rhs).map(|(r, b)| r.iter().cloned().chain([b.clone()]).collect()).collect();
    let mut rank = 0;
    let mut pivots = Vec::new();
    for c in 0..cols {
        let Some(p) = (rank..n).find(|&r| !a[r][c].is_zero()) else { continue };
        a.swap(rank, p);
        let inv = Rational::one() / a[rank][c].clone();
        for v in a[rank].iter_mut() {
            *v = &*v * &inv;
        }
        let prow = a[rank].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != rank && !row[c].is_zero() {
                let f = row[c].clone();
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v = &*v - &f * pv;
                }
            }
        }
        pivots.push(c);
        rank += 1;
    }
    if rank < cols {
        return Err(rank);
    }
    let mut u = vec![Rational::zero(); cols];
    for (r, &c) in pivots.iter().enumerate() {
        u[c] = a[r][cols].clone();
    }
    // consistency of the remaining rows
    if a[rank..].iter().any(|row| !row[cols].is_zero()) {
        return Err(rank);
    }
    Ok(u)
}

fn invert_exact(m: &RMat) -> Option<RMat> {
    let n = m.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let e: Vec<Rational> = (0..n).map(|i| if i == j { Rational::one() } else { Rational::zero() }).collect();
        cols.push(solve_exact(m, &e).ok()?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i].clone()).collect()).collect())
}

fn mat_mul(a: &RMat, b: &RMat) -> RMat {
    let k = b.len();
    let m = if k == 0 { 0 } else { b[0].len() };
    a.iter()
        .map(|row| {
            (0..m)
                .map(|j| (0..k).fold(Rational::zero(), |acc, l| acc + &row[l] * &b[l][j]))
                .collect()
        })
        .collect()
}

/// Continued-fraction approximation with bounded denominator.
fn small_rational(x: f64, max_den: i64, tol: f64) -> Option<Rational> {
    if !x.is_finite() {
        return None;
    }
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut r = x;
    for _ in 0..40 {
        let a = r.floor();
        if a.abs() > 1e12 {
            break;
        }
        let a = a as i64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (x - h1 as f64 / k1 as f64).abs() <= tol {
            return Some(Rational::new(h1.into(), k1.into()));
        }
        let frac = r - a as f64;
        if frac.abs() < 1e-300 {
            break;
        }
        r = 1.0 / frac;
    }
    ((x - h1 as f64 / k1.max(1) as f64).abs() <= tol && k1 > 0).then(|| Rational::new(h1.into(), k1.into()))
}

/// Reduced row-echelon basis of a subspace, which is often rational.
fn echelon_basis(s: &LinearSubspace) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = s.basis().to_vec();
    let d = s.dim();
    let mut r = 0;
    for c in 0..d {
        if r == rows.len() {
            break;
        }
        let p = (r..rows.len()).max_by(|&a, &b| rows[a][c].abs().total_cmp(&rows[b][c].abs())).unwrap();
        if rows[p][c].abs() < 1e-9 {
            continue;
        }
        rows.swap(r, p);
        let piv = rows[r][c];
        rows[r].iter_mut().for_each(|v| *v /= piv);
        let prow = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                row.iter_mut().zip(&prow).for_each(|(v, p)| *v -= f * p);
            }
        }
        r += 1;
    }
    rows
}

/// Homogeneous exponent vectors of degree k in n variables, in lexicographic order.
fn monomials(n: usize, k: u32) -> Vec<Vec<u32>> {
    if n == 0 {
        return if k == 0 { vec![Vec::new()] } else { Vec::new() };
    }
    let mut out = Vec::new();
    for first in (0..=k).rev() {
        for mut rest in monomials(n - 1, k - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct DegreeResidual {
    pub degree: u32,
    pub norm: f64,
}

/// Graph y_s = h(y_c) of a centre manifold in block coordinates y = T⁻¹x.
#[derive(Clone, Debug)]
pub struct CenterManifoldApprox {
    pub center_dim: usize,
    pub stable_dim: usize,
    pub order: u32,
    /// Columns: centre basis, then stable basis (original coordinates).
    pub transform: Vec<Vec<Rational>>,
    /// Whether T⁻¹·Df(0)·T is exactly block diagonal.
    pub exact_transform: bool,
    /// h in the centre coordinates ξ (polynomials in `center_dim` variables).
    pub h: Vec<Poly>,
    /// x = T_c ξ + T_s h(ξ), the manifold in original coordinates.
    pub embedding: Vec<Poly>,
    pub residual_by_degree: Vec<DegreeResidual>,
    /// Largest residual coefficient over degrees ≤ order.
    pub residual: f64,
}

#[derive(Serialize)]
struct TermOut {
    exponents: Vec<u32>,
    coefficient: String,
}

#[derive(Serialize)]
struct PolyOut {
    expr: String,
    terms: Vec<TermOut>,
}

fn poly_out(p: &Poly) -> PolyOut {
    PolyOut {
        expr: rename_vars(&p.to_string(), "xi"),
        terms: p.terms().map(|(e, c)| TermOut { exponents: e.clone(), coefficient: format_rational(c) }).collect(),
    }
}

/// Centre variables are printed ξ1.. as `xi1`.
fn rename_vars(s: &str, prefix: &str) -> String {
    s.replace('x', prefix)
}

#[derive(Serialize)]
struct CmOut {
    center_dim: usize,
    stable_dim: usize,
    order: u32,
    transform: Vec<Vec<f64>>,
    exact_transform: bool,
    h: Vec<PolyOut>,
    embedding: Vec<PolyOut>,
    residual_by_degree: Vec<DegreeResidual>,
    residual: f64,
}

impl Serialize for CenterManifoldApprox {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CmOut {
            center_dim: self.center_dim,
            stable_dim: self.stable_dim,
            order: self.order,
            transform: self.transform.iter().map(|r| r.iter().map(rational_to_f64).collect()).collect(),
            exact_transform: self.exact_transform,
            h: self.h.iter().map(poly_out).collect(),
            embedding: self.embedding.iter().map(poly_out).collect(),
            residual_by_degree: self.residual_by_degree.clone(),
            residual: self.residual,
        }
        .serialize(s)
    }
}

impl CenterManifoldApprox {
    /// h as expressions in the centre variables.
    pub fn h_exprs(&self) -> Vec<Expr> {
        self.h.iter().cloned().map(Expr::from_poly).collect()
    }
}

fn block_transform(a: &RMat, split: &SpectralSplit) -> (RMat, bool) {
    let d = a.len();
    let cols: Vec<Vec<f64>> = echelon_basis(&split.center).into_iter().chain(echelon_basis(&split.stable)).collect();
    let n = split.center.rank();
    let build = |conv: &dyn Fn(f64) -> Option<Rational>| -> Option<RMat> {
        let mut t = vec![vec![Rational::zero(); d]; d];
        for (j, c) in cols.iter().enumerate() {
            for i in 0..d {
                t[i][j] = conv(c[i])?;
            }
        }
        Some(t)
    };
    let off_diag_zero = |t: &RMat| -> bool {
        let Some(ti) = invert_exact(t) else { return false };
        let b = mat_mul(&mat_mul(&ti, a), t);
        (0..d).all(|i| (0..d).all(|j| (i < n) == (j < n) || b[i][j].is_zero()))
    };
    if let Some(t) = build(&|v| small_rational(v, 10_000, 1e-10)) {
        if off_diag_zero(&t) {
            return (t, true);
        }
    }
    let t = build(&|v| Some(rational_from_f64(v))).expect("finite basis");
    let exact = off_diag_zero(&t);
    (t, exact)
}

/// Polynomial centre-manifold graph up to degree `order`, solved degree by degree.
pub fn center_manifold_approx(f: &VectorFieldExpr, order: u32) -> Result<CenterManifoldApprox, LinearError> {
    let d = f.dim();
    let polys = f.polys().ok_or(ExprError::NotPolynomial)?;
    if polys.iter().any(|p| !p.constant_term().is_zero()) {
        return Err(LinearError::Expr(ExprError::NonzeroAtOrigin));
    }
    let a: RMat = f.jacobian_at_origin_exact().expect("polynomial field");
    let af: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(rational_to_f64).collect()).collect();
    let split = spectral_split(&matrix_from_rows(&af)?)?;
    if split.has_unstable {
        return Err(LinearError::Unstable(split.max_unstable_re()));
    }
    let n = split.center.rank();
    let m = d - n;
    let (t, exact_transform) = block_transform(&a, &split);
    let ti = invert_exact(&t).ok_or_else(|| LinearError::Eigen("singular block transform".into()))?;
    let b = mat_mul(&mat_mul(&ti, &a), &t);

    // g(y) = T⁻¹ f(T y) with the block-diagonal linear part removed
    let ty: Vec<Poly> = (0..d)
        .map(|i| (0..d).fold(Poly::zero(d), |acc, j| &acc + &Poly::var(d, j).scale(&t[i][j])))
        .collect();
    let fy: Vec<Poly> = polys.iter().map(|p| p.compose(&ty)).collect();
    let g: Vec<Poly> = (0..d)
        .map(|i| {
            let mixed = (0..d).fold(Poly::zero(d), |acc, j| &acc + &fy[j].scale(&ti[i][j]));
            let lin = mixed.homogeneous_part(1);
            &mixed - &lin
        })
        .collect();
    let a1: RMat = (0..n).map(|i| b[i][..n].to_vec()).collect();
    let a2: RMat = (n..d).map(|i| b[i][n..].to_vec()).collect();

    let xi: Vec<Poly> = (0..n).map(|j| Poly::var(n, j)).collect();
    let a1xi: Vec<Poly> = (0..n)
        .map(|i| (0..n).fold(Poly::zero(n), |acc, j| &acc + &xi[j].scale(&a1[i][j])))
        .collect();
    let mut h: Vec<Poly> = vec![Poly::zero(n); m];

    // L(h)_s = Dh_s·A1ξ − (A2 h)_s
    let homological = |hh: &[Poly]| -> Vec<Poly> {
        (0..m)
            .map(|s| {
                let adv = (0..n).fold(Poly::zero(n), |acc, j| &acc + &(&hh[s].partial(j) * &a1xi[j]));
                let a2h = (0..m).fold(Poly::zero(n), |acc, r| &acc + &hh[r].scale(&a2[s][r]));
                &adv - &a2h
            })
            .collect()
    };
    let subs = |hh: &[Poly], deg: u32| -> Vec<Poly> {
        let mut s: Vec<Poly> = xi.clone();
        s.extend(hh.iter().map(|p| p.truncate(deg)));
        s
    };
    // forcing term g2(ξ,H) − DH·g1(ξ,H)
    let forcing = |hh: &[Poly], deg: u32| -> Vec<Poly> {
        if n == 0 {
            return vec![Poly::zero(0); m];
        }
        let sb = subs(hh, deg);
        let gc: Vec<Poly> = g.iter().map(|p| p.compose(&sb).truncate(deg)).collect();
        (0..m)
            .map(|s| {
                let transport = (0..n).fold(Poly::zero(n), |acc, j| &acc + &(&hh[s].partial(j) * &gc[j]));
                (&gc[n + s] - &transport).truncate(deg)
            })
            .collect()
    };

    if n > 0 && m > 0 {
        for k in 2..=order {
            let basis = monomials(n, k);
            let nb = basis.len();
            let size = m * nb;
            let mut mat = vec![vec![Rational::zero(); size]; size];
            for t_ in 0..m {
                for (ai, alpha) in basis.iter().enumerate() {
                    let mut unit = vec![Poly::zero(n); m];
                    unit[t_] = Poly::monomial(alpha.clone(), Rational::one());
                    let img = homological(&unit);
                    for s in 0..m {
                        for (bi, beta) in basis.iter().enumerate() {
                            mat[s * nb + bi][t_ * nb + ai] = img[s].coefficient(beta);
                        }
                    }
                }
            }
            let rhs_polys = forcing(&h, k);
            let rhs: Vec<Rational> =
                (0..m).flat_map(|s| basis.iter().map(|beta| rhs_polys[s].coefficient(beta)).collect::<Vec<_>>()).collect();
            let sol = solve_exact(&mat, &rhs).map_err(|rank| LinearError::Resonance { degree: k, size, rank })?;
            for s in 0..m {
                for (bi, beta) in basis.iter().enumerate() {
                    if !sol[s * nb + bi].is_zero() {
                        h[s].add_term(beta.clone(), sol[s * nb + bi].clone());
                    }
                }
            }
        }
    }

    // residual DH·(A1ξ + g1) − A2H − g2 on (ξ, H), per degree up to order + 1
    let top = order + 1;
    let mut residual_by_degree = Vec::new();
    let mut residual = 0.0f64;
    if n > 0 && m > 0 {
        let l = homological(&h);
        let fo = forcing(&h, top);
        for k in 2..=top {
            let norm = (0..m).map(|s| (&l[s] - &fo[s]).homogeneous_part(k).max_abs_coefficient()).fold(0.0, f64::max);
            if k <= order {
                residual = residual.max(norm);
            }
            residual_by_degree.push(DegreeResidual { degree: k, norm });
        }
    }

    let embedding: Vec<Poly> = (0..d)
        .map(|i| {
            let c = (0..n).fold(Poly::zero(n), |acc, j| &acc + &xi[j].scale(&t[i][j]));
            (0..m).fold(c, |acc, s| &acc + &h[s].scale(&t[i][n + s]))
        })
        .collect();

    Ok(CenterManifoldApprox {
        center_dim: n,
        stable_dim: m,
        order,
        transform: t,
        exact_transform,
        h,
        embedding,
        residual_by_degree,
        residual,
    })
}
