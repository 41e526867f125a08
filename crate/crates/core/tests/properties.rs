use nalgebra::DMatrix;
use proptest::prelude::*;

use switchlyap::corpus::corpus;
use switchlyap::geometry::{
    check_condition_c, check_condition_k, k_set, m_cone, m_set, subspace_conditions, LinearSubspace, SamplingParams,
    SubspaceFamily,
};
use switchlyap::linear::{linear_mi, spectral_split, tangent_space_vi};
use switchlyap::model::certify_weak_lyapunov;
use switchlyap::planar::{sample_z, DEFAULT_DET_TOL};
use switchlyap::{Mode, SwitchedSystem};

fn case(name: &str) -> SwitchedSystem {
    corpus().into_iter().find(|c| c.name == name).unwrap().build()
}

fn reversed(sys: &SwitchedSystem) -> SwitchedSystem {
    let modes: Vec<Mode> = sys.modes().iter().rev().cloned().collect();
    SwitchedSystem::new(sys.lyapunov().clone(), modes).unwrap()
}

fn rotation3(a: f64, b: f64) -> DMatrix<f64> {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let rz = DMatrix::from_row_slice(3, 3, &[ca, -sa, 0.0, sa, ca, 0.0, 0.0, 0.0, 1.0]);
    let rx = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, cb, -sb, 0.0, sb, cb]);
    rz * rx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spectral_split_commutes_with_rotations(w in 0.2f64..3.0, damp in 0.1f64..2.0, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, -w, 0.0, w, 0.0, 0.0, 0.0, 0.0, -damp]);
        let q = rotation3(a, b);
        let base = spectral_split(&m).unwrap();
        let conj = spectral_split(&(&q * &m * q.transpose())).unwrap();
        prop_assert_eq!(base.center.rank(), 2);
        prop_assert!(conj.center.same_as(&base.center.transform(&q), 1e-7));
        prop_assert!(conj.stable.same_as(&base.stable.transform(&q), 1e-7));
        prop_assert!(conj.semisimple_on_center && !conj.has_unstable);
    }

    #[test]
    fn cone_forms_are_homogeneous(lambda in 0.05f64..20.0, t in 0.0f64..std::f64::consts::TAU) {
        for name in ["rotation-damped", "centre-graph", "cubic-pair", "odd-damping"] {
            let sys = case(name);
            for i in 0..sys.num_modes() {
                let cone = m_cone(&sys, i, 5).unwrap();
                let x = [t.cos(), t.sin()];
                let y = [lambda * x[0], lambda * x[1]];
                for f in cone.forms() {
                    let want = lambda.powi(f.degree() as i32) * f.eval(&x);
                    prop_assert!((f.eval(&y) - want).abs() <= 1e-9 * (1.0 + want.abs()));
                }
            }
        }
    }

    #[test]
    fn m_defect_grows_with_kmax(x1 in -1.5f64..1.5, x2 in -1.5f64..1.5) {
        for name in ["rotation-damped", "centre-graph", "odd-damping", "planar-guas"] {
            let sys = case(name);
            for i in 0..sys.num_modes() {
                let mut prev = k_set(&sys, i, 1e-6).unwrap().membership(&[x1, x2]);
                for kmax in 2..=6 {
                    let cur = m_set(&sys, i, kmax, 1e-6).unwrap().membership(&[x1, x2]);
                    prop_assert!(cur >= prev, "{} mode {} kmax {}", name, i + 1, kmax);
                    prev = cur;
                }
            }
        }
    }
}

#[test]
fn verdicts_do_not_depend_on_mode_order() {
    let params = SamplingParams { mesh: 600, ..Default::default() };
    for name in ["rotation-damped", "centre-graph", "odd-damping", "planar-guas"] {
        let sys = case(name);
        let rev = reversed(&sys);
        let all: Vec<usize> = (0..sys.num_modes()).collect();
        let k1 = check_condition_k(&sys, &all, &params).unwrap();
        let k2 = check_condition_k(&rev, &all, &params).unwrap();
        assert_eq!(k1.holds, k2.holds, "{name}: condition K");
        let oracles = |s: &SwitchedSystem| (0..s.num_modes()).map(|i| m_set(s, i, 5, 1e-6).unwrap()).collect::<Vec<_>>();
        let c1 = check_condition_c(&sys, &oracles(&sys), &params);
        let c2 = check_condition_c(&rev, &oracles(&rev), &params);
        assert_eq!(c1.holds, c2.holds, "{name}: condition C");
    }
    let sys = case("three-mode");
    let spaces: Vec<LinearSubspace> = (0..3).map(|i| tangent_space_vi(&sys.mode(i).field).unwrap()).collect();
    let rev: Vec<LinearSubspace> = spaces.iter().rev().cloned().collect();
    let (a, b) = (subspace_conditions(&spaces, SubspaceFamily::Centre), subspace_conditions(&rev, SubspaceFamily::Centre));
    assert_eq!((a.holds, &a.params["firing"]), (b.holds, &b.params["firing"]));
}

/// For linear modes the centre subspace and the cone of M_i agree, checked both ways.
#[test]
fn linear_mi_matches_cone() {
    for (name, i) in [("rotation-damped", 0), ("rotation-damped", 1), ("centre-graph", 0)] {
        let sys = case(name);
        let j = sys.mode(i).field.jacobian_at_origin().unwrap();
        let split = spectral_split(&DMatrix::from_row_slice(2, 2, &j.concat())).unwrap();
        let sub = linear_mi(&split).unwrap();
        let cone = m_cone(&sys, i, 5).unwrap();
        for b in sub.basis() {
            assert!(cone.membership(b) <= 1e-9, "{name} mode {}: basis vector {b:?} outside the cone", i + 1);
        }
        let mut in_cone = 0;
        for k in 0..720 {
            let t = k as f64 * std::f64::consts::PI / 360.0;
            let u = [t.cos(), t.sin()];
            if cone.membership(&u) <= 1e-9 {
                in_cone += 1;
                assert!(sub.contains_vector(&u, 1e-6), "{name} mode {}: cone direction {u:?} outside M_i", i + 1);
            }
        }
        assert_eq!(in_cone > 0, sub.rank() > 0, "{name} mode {}", i + 1);
    }
}

#[test]
fn coordinate_m_set_lies_in_its_cone() {
    let sys = case("centre-graph");
    let cone = m_cone(&sys, 0, 5).unwrap();
    assert!(cone.membership(&[1.0, 0.0]) <= 1e-12);
    assert!(cone.membership(&[0.0, 1.0]) > 0.1);
}

#[test]
fn corpus_systems_are_certified() {
    for c in corpus() {
        let sys = c.build();
        let r = certify_weak_lyapunov(&sys, 2.0, 10_000, 1e-12, 0);
        assert!(r.pass, "{}: {:?}", c.name, r.modes);
    }
}

#[test]
fn sampled_k_lies_in_z() {
    for name in ["planar-guas", "cubic-pair", "odd-damping"] {
        let sys = case(name);
        let k = switchlyap::geometry::k_intersection(&sys, 1e-6, 400).oracle;
        let z = sample_z(&sys, 2.0, 64, DEFAULT_DET_TOL).unwrap();
        let det = |x: &[f64]| {
            let a = sys.mode(0).field.evaluate(x).unwrap();
            let b = sys.mode(1).field.evaluate(x).unwrap();
            a[0] * b[1] - a[1] * b[0]
        };
        for i in 0..=40 {
            for j in 0..=40 {
                let x = [-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64];
                if k.membership(&x) == 0.0 {
                    assert!(det(&x).abs() <= DEFAULT_DET_TOL, "{name}: {x:?} in K but not in Z");
                }
            }
        }
        assert!(z.points.iter().all(|p| p.det.abs() <= DEFAULT_DET_TOL));
    }
}
