//! Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned here.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use switchlyap::corpus::{corpus, run_corpus, CorpusParams};
use switchlyap::expr::{lie_chain, lie_derivative, Exponents, Poly, Rational};
use switchlyap::geometry::{
    check_condition_k, hessian_kernel, k_intersection, k_set, subspace_conditions, Holds, LinearSubspace, SamplingParams,
    SetOracle, SubspaceFamily, RANK_TOL,
};
use switchlyap::linear::{center_manifold_approx, tangent_space_vi};
use switchlyap::planar::{planar_guas_test, sample_z, PlanarOutcome, DEFAULT_DET_TOL, DEFAULT_HALF_WIDTH, DEFAULT_RESOLUTION};
use switchlyap::signals::{classify, parse_signal_spec, SwitchingSignal};
use switchlyap::sim::{default_slack, integrate_with, omega_estimate, v_monotone_check, IntegrateOptions};
use switchlyap::{Expr, SwitchedSystem, VectorFieldExpr};

fn verdict(n: u32, title: &str, failures: &[String]) {
    if failures.is_empty() {
        println!("PASS criterion {n}: {title}");
    } else {
        println!("FAIL criterion {n}: {title}");
        for f in failures {
            println!("    {f}");
        }
    }
    assert!(failures.is_empty(), "criterion {n} failed: {failures:#?}");
}

fn case(name: &str) -> SwitchedSystem {
    corpus().into_iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no case {name}")).build()
}

fn expr(s: &str, d: usize) -> Expr {
    Expr::parse(s, d).unwrap()
}

fn axis(d: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    e
}

#[test]
fn criterion_1_lie_derivatives_exact() {
    let pairs: &[(&str, usize, &str)] = &[
        ("rotation-damped", 0, "-2*x1^2"),
        ("rotation-damped", 1, "-2*x1^2 - 2*x2^2"),
        ("cubic-pair", 0, "-8*x2^6"),
        ("cubic-pair", 1, "-8*x1^6"),
        ("odd-damping", 0, "-2*x2^4"),
        ("odd-damping", 1, "-2*x2^4"),
        ("planar-guas", 0, "-4*x1^6"),
        ("planar-guas", 1, "-8*x1^6"),
        ("three-mode", 0, "-2*x3^2"),
        ("three-mode", 1, "-2*x1^2 - 8*x2^2 - 2*x1^2*x3^4"),
        ("three-mode", 2, "-(x1 - x3)^2"),
    ];
    let mut failures = Vec::new();
    for &(name, i, want) in pairs {
        let sys = case(name);
        let got = sys.lie_derivative(i);
        if *got != expr(want, sys.dim()) {
            failures.push(format!("{name} mode {}: expected {want}, computed {got}", i + 1));
        }
    }
    let sys = case("centre-graph");
    let chain = lie_chain(sys.lyapunov(), &sys.mode(1).field, 3).unwrap();
    let want = "-4*(x1^3 + x2*x1^2 + 2*x2^2)";
    if chain[2] != expr(want, 2) {
        failures.push(format!("centre-graph third Lie derivative of mode 2: expected {want}, computed {}", chain[2]));
    }
    verdict(1, "Lie derivatives equal the closed forms exactly", &failures);
}

#[test]
fn criterion_2_subspace_pipeline() {
    let sys = case("three-mode");
    let expected = [
        LinearSubspace::span(3, &[axis(3, 0), axis(3, 1)], RANK_TOL),
        LinearSubspace::span(3, &[axis(3, 2)], RANK_TOL),
        LinearSubspace::span(3, &[axis(3, 1)], RANK_TOL),
    ];
    let mut failures = Vec::new();
    let mut spaces = Vec::new();
    for (i, want) in expected.iter().enumerate() {
        let got = tangent_space_vi(&sys.mode(i).field).unwrap();
        let angle = got.max_principal_angle(want);
        if got.rank() != want.rank() || angle.unwrap_or(0.0) > 1e-7 {
            failures.push(format!("V_{}: dim {} (want {}), max principal angle {angle:?}, basis {:?}", i + 1, got.rank(), want.rank(), got.basis()));
        }
        spaces.push(got);
    }
    let v = subspace_conditions(&spaces, SubspaceFamily::Centre);
    if v.params["trivial_intersection"] != true {
        failures.push("intersection of the V_i is not {0}".into());
    }
    let fires_2 = v.params["firing"].as_array().unwrap().iter().any(|x| x.as_u64() == Some(2));
    if v.holds != Holds::Yes || !fires_2 {
        failures.push(format!("condition 2 does not fire: {} {:?}", v.condition, v.params["firing"]));
    }
    verdict(2, "centre subspaces V_i and condition 2", &failures);
}

#[test]
fn criterion_3_condition_k() {
    let mut failures = Vec::new();
    let sys = case("three-mode");
    let params = SamplingParams { radius: 2.5, levels: vec![0.25, 1.0, 4.0], mesh: 2000, ..Default::default() };
    let start = Instant::now();
    let v = check_condition_k(&sys, &[0, 1, 2], &params).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    if v.holds != Holds::Yes {
        failures.push(format!("three-mode, J = {{1,2,3}}: holds={} {:?}", v.holds.as_str(), v.notes));
    }
    if elapsed > 60.0 {
        failures.push(format!("three-mode check took {elapsed:.1}s"));
    }
    let planar = case("planar-guas");
    let v = check_condition_k(&planar, &[0, 1], &SamplingParams::default()).unwrap();
    if v.holds != Holds::No {
        failures.push(format!("planar-guas: holds={}", v.holds.as_str()));
    }
    // witness points lie in K to the membership tolerance, and the component crosses x1 = 0
    let ks: Vec<SetOracle> = (0..2).map(|i| k_set(&planar, i, 1e-6).unwrap()).collect();
    let closest = v.witness.iter().map(|w| w[0].abs()).fold(f64::INFINITY, f64::min);
    if v.witness.is_empty() || v.witness.iter().any(|w| !ks.iter().any(|k| k.contains(w))) || closest > 1e-3 {
        failures.push(format!("planar-guas witness not on {{x1 = 0}}: {:?}", v.witness));
    }
    verdict(3, &format!("condition K (three-mode in {elapsed:.2}s; planar pair fails on x1 = 0)"), &failures);
}

#[test]
fn criterion_4_planar_test_and_counterexample() {
    let mut failures = Vec::new();
    let sys = case("planar-guas");
    let pv = planar_guas_test(&sys, DEFAULT_HALF_WIDTH, DEFAULT_RESOLUTION, DEFAULT_DET_TOL).unwrap();
    if pv.outcome != PlanarOutcome::Guas {
        failures.push(format!("planar-guas outcome {:?} {:?}", pv.outcome, pv.notes));
    }
    let z = sample_z(&sys, DEFAULT_HALF_WIDTH, DEFAULT_RESOLUTION, DEFAULT_DET_TOL).unwrap();
    let worst = z.points.iter().map(|p| p.inner).fold(f64::INFINITY, f64::min);
    if z.points.is_empty() || worst < -1e-9 {
        failures.push(format!("{} Z points, min inner product {worst:e}", z.points.len()));
    }

    let ce = case("smooth-counterexample");
    let pv = planar_guas_test(&ce, DEFAULT_HALF_WIDTH, DEFAULT_RESOLUTION, DEFAULT_DET_TOL).unwrap();
    if pv.outcome != PlanarOutcome::Inconclusive || pv.syntactically_analytic {
        failures.push(format!("counter-example outcome {:?}, analytic flag {}", pv.outcome, pv.syntactically_analytic));
    }
    let sig = parse_signal_spec("quadrant", 2, 100.0, 0).unwrap();
    let traj = integrate_with(&ce, &sig, &[1.0, 0.0], 1e-3, 100.0, IntegrateOptions { stride: 1, error_estimate: false }).unwrap();
    let start = traj.times.partition_point(|&t| t < 50.0);
    let tail = &traj.v[start..];
    let spread = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tail.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(spread <= 1e-6) || traj.final_state().iter().map(|v| v * v).sum::<f64>().sqrt() < 0.5 {
        failures.push(format!("counter-example V spread {spread:e} over the final 50"));
    }
    verdict(4, &format!("planar test (min inner {worst:e}); counter-example V spread {spread:e}"), &failures);
}

#[test]
fn criterion_5_centre_manifold() {
    let mut failures = Vec::new();
    let f = case("centre-graph").mode(1).field.clone();
    for order in [3, 4] {
        let cm = center_manifold_approx(&f, order).unwrap();
        let h = &cm.h[0];
        let c2 = switchlyap::expr::rational_to_f64(&h.coefficient(&[2]));
        if (c2 + 1.0).abs() > 1e-12 || !h.coefficient(&[3]).eq(&Rational::from_integer(0.into())) {
            failures.push(format!("order {order}: h = {h}"));
        }
        if order == 4 {
            let bad: Vec<_> = cm.residual_by_degree.iter().filter(|r| r.degree <= 4 && r.norm != 0.0).collect();
            if !bad.is_empty() || cm.residual != 0.0 {
                failures.push(format!("order 4: residual through degree 4 not zero: {:?}", cm.residual_by_degree));
            }
        } else if cm.residual != 0.0 {
            failures.push(format!("order 3: residual {}", cm.residual));
        }
    }
    verdict(5, "centre-manifold graph h = -x1^2 with zero residual", &failures);
}

#[test]
fn criterion_6_kzero_and_convergence() {
    let mut failures = Vec::new();
    let sys = case("cubic-pair");
    let k = k_intersection(&sys, 1e-6, 2000);
    if !k.k_is_origin {
        failures.push(format!("K not origin-only: witness {:?}", k.witness));
    }
    let signals = ["dwell:delta=0.5,pattern=random,seed=3", "regular:delta=1", "chaotic:tau=1,shrink=0.5"];
    let mut worst = 0.0f64;
    for x0 in [[1.0, 1.0], [-0.5, 2.0]] {
        for spec in signals {
            let sig = parse_signal_spec(spec, 2, 500.0, 0).unwrap();
            let traj = integrate_with(&sys, &sig, &x0, 1e-3, 500.0, IntegrateOptions { stride: 1000, error_estimate: false }).unwrap();
            let norm = traj.final_state().iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(norm);
            if !(norm < 1e-3) {
                failures.push(format!("{spec} from {x0:?}: ‖x(500)‖ = {norm:.4e}"));
            }
        }
    }
    verdict(6, &format!("K = {{0}} and ‖x(500)‖ < 1e-3 (worst {worst:.3e})"), &failures);
}

#[test]
fn criterion_7_limit_set_localisation() {
    let mut failures = Vec::new();
    let sys = case("odd-damping");
    let on_axis = SetOracle::custom(vec![sys.lie_derivative(0).clone()], 1e-3);

    let sig = parse_signal_spec("chaotic:tau=1,shrink=0.5", 2, 200.0, 0).unwrap();
    let class = classify(&sig, 2, 1.0, 0.01);
    if !class.chaotic_like {
        failures.push("signal is not classified chaotic-like".into());
    }
    let traj = integrate_with(&sys, &sig, &[1.0, 0.5], 1e-3, 200.0, IntegrateOptions { stride: 10, error_estimate: false }).unwrap();
    let om = omega_estimate(&traj, std::slice::from_ref(&on_axis), 0.2, 1e-3);
    if !(om.oracles[0].max <= 1e-3) {
        failures.push(format!("chaotic-like: tail defect {:e} > 1e-3", om.oracles[0].max));
    }

    let t_end = 2.0e6;
    let sig = SwitchingSignal::constant(0, t_end);
    let class = classify(&sig, 2, 1.0, 0.01);
    if !class.h[0] {
        failures.push("constant signal does not satisfy H(1)".into());
    }
    let traj = integrate_with(&sys, &sig, &[1.0, 0.5], 0.05, t_end, IntegrateOptions { stride: 10_000, error_estimate: true }).unwrap();
    let om2 = omega_estimate(&traj, &[on_axis], 0.2, 1e-3);
    if !om2.converged {
        failures.push(format!("H(1) signal: ‖x(T)‖ = {:e}", om2.final_norm));
    }
    verdict(
        7,
        &format!("ω-tail defect {:.2e}; H(1) run ‖x(T)‖ = {:.3e}", om.oracles[0].max, om2.final_norm),
        &failures,
    );
}

#[test]
fn criterion_8_v_monotone_everywhere() {
    let signals = ["dwell:delta=0.5,pattern=random,seed=11", "regular:delta=1", "chaotic:tau=1,shrink=0.5"];
    let starts2 = [vec![1.0, 1.0], vec![-0.5, 2.0], vec![0.3, -0.8]];
    let starts3 = [vec![1.0, 1.0, 1.0], vec![-0.5, 2.0, 0.3], vec![0.3, -0.8, -1.0]];
    let mut failures = Vec::new();
    let mut runs = 0;
    for c in corpus() {
        let sys = c.build();
        let starts = if sys.dim() == 3 { &starts3 } else { &starts2 };
        for spec in signals {
            let sig = parse_signal_spec(spec, sys.num_modes(), 50.0, 0).unwrap();
            for x0 in starts {
                let traj = integrate_with(&sys, &sig, x0, 1e-3, 50.0, IntegrateOptions { stride: 1, error_estimate: false }).unwrap();
                let slack = 1e-8 * (1.0 + traj.v[0]);
                assert_eq!(slack, default_slack(&traj));
                let m = v_monotone_check(&traj, Some(slack));
                runs += 1;
                if !m.pass || traj.diverged {
                    failures.push(format!("{} {spec} from {x0:?}: increase {:e} at {:?}", c.name, m.worst_increase, m.at_time));
                }
            }
        }
    }
    verdict(8, &format!("V nonincreasing on {runs} runs"), &failures);
}

fn random_poly(rng: &mut ChaCha8Rng, d: usize, min_deg: u32, max_deg: u32, terms: usize) -> Poly {
    let mut p = Poly::zero(d);
    for _ in 0..terms {
        let deg = rng.random_range(min_deg..=max_deg);
        let mut e = vec![0u32; d];
        for _ in 0..deg {
            e[rng.random_range(0..d)] += 1;
        }
        let c = Rational::new(rng.random_range(-3i64..=3).into(), rng.random_range(1i64..=2).into());
        p.add_term(Exponents::from(e), c);
    }
    p
}

fn fd_hessian(e: &Expr, d: usize) -> DMatrix<f64> {
    let h = 1e-4;
    let f = |x: &[f64]| e.evaluate(x).unwrap();
    DMatrix::from_fn(d, d, |i, j| {
        let at = |si: f64, sj: f64| {
            let mut x = vec![0.0; d];
            x[i] += si * h;
            x[j] += sj * h;
            f(&x)
        };
        (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
    })
}

fn linear_closed_form(a: f64, b: f64, c: f64, x: &[f64], t: f64) -> Vec<f64> {
    let (s, co) = (b * t).sin_cos();
    let e = (-a * t).exp();
    vec![e * (co * x[0] - s * x[1]), e * (s * x[0] + co * x[1]), (-c * t).exp() * x[2]]
}

#[test]
fn criterion_9_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    let mut kernels = 0;
    for trial in 0..50 {
        let d = rng.random_range(1..=3usize);
        let v = random_poly(&mut rng, d, 1, 4, 4);
        let v = Expr::from_poly(v);
        let f = VectorFieldExpr::from_polys((0..d).map(|_| random_poly(&mut rng, d, 0, 4, 3)).collect()).unwrap();
        let chain = lie_chain(&v, &f, 3).unwrap();
        let mut cur = v.clone();
        for (k, got) in chain.iter().enumerate() {
            cur = lie_derivative(&cur, &f).unwrap();
            if *got != cur {
                failures.push(format!("trial {trial}: order {} differs", k + 1));
            }
        }

        // Hessian kernel: V = |x|², f = -(BᵀB)x + skew·x + higher-order terms
        let b: Vec<Vec<i64>> = (0..d)
            .map(|r| if r + 1 == d && d > 1 && rng.random_bool(0.5) { vec![0; d] } else { (0..d).map(|_| rng.random_range(-2..=2)).collect() })
            .collect();
        let mut comps = Vec::new();
        for i in 0..d {
            let mut p = random_poly(&mut rng, d, 2, 4, 2);
            for j in 0..d {
                let btb: i64 = (0..d).map(|r| b[r][i] * b[r][j]).sum();
                let skew = if i < j { 1 } else if i > j { -1 } else { 0 };
                let mut e = vec![0u32; d];
                e[j] = 1;
                p.add_term(Exponents::from(e), Rational::from_integer((skew - btb).into()));
            }
            comps.push(p);
        }
        let vq: Vec<String> = (1..=d).map(|i| format!("x{i}^2")).collect();
        let sys = SwitchedSystem::new(
            expr(&vq.join(" + "), d),
            vec![switchlyap::Mode { name: "f".into(), field: VectorFieldExpr::from_polys(comps).unwrap() }],
        )
        .unwrap();
        let hk = hessian_kernel(&sys, 0).unwrap();
        let hess = fd_hessian(sys.lie_derivative(0), d);
        let eig = nalgebra::SymmetricEigen::new(hess);
        let scale = eig.eigenvalues.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let basis: Vec<Vec<f64>> = (0..d)
            .filter(|&k| eig.eigenvalues[k].abs() <= 1e-5 * scale)
            .map(|k| eig.eigenvectors.column(k).iter().cloned().collect())
            .collect();
        let fd = LinearSubspace::span(d, &basis, RANK_TOL);
        let angle = hk.max_principal_angle(&fd).unwrap_or(0.0);
        kernels += usize::from(hk.rank() > 0);
        if hk.rank() != fd.rank() || angle > 1e-5 {
            failures.push(format!("trial {trial}: Hessian kernel dim {} vs {} (angle {angle:e})", hk.rank(), fd.rank()));
        }
    }

    // integrator against closed-form linear flows, with switching
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (a1, b1, c1) = (rng.random_range(0.0..2.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0));
        let (a2, b2, c2) = (rng.random_range(0.0..2.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0));
        let field = |a: f64, b: f64, c: f64| vec![format!("-{a}*x1 - {b}*x2"), format!("{b}*x1 - {a}*x2"), format!("-{c}*x3")];
        let (f1, f2) = (field(a1, b1, c1), field(a2, b2, c2));
        let sys = SwitchedSystem::from_strings(
            3,
            "x1^2 + x2^2 + x3^2",
            &[&f1.iter().map(String::as_str).collect::<Vec<_>>(), &f2.iter().map(String::as_str).collect::<Vec<_>>()],
        )
        .unwrap();
        let switch = 0.375;
        let sig = SwitchingSignal::new(1.0, vec![(0.0, 0), (switch, 1)]).unwrap();
        let x0 = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let traj = integrate_with(&sys, &sig, &x0, 1e-3, 1.0, IntegrateOptions::default()).unwrap();
        let mid = linear_closed_form(a1, b1, c1, &x0, switch);
        let want = linear_closed_form(a2, b2, c2, &mid, 1.0 - switch);
        let err = traj.final_state().iter().zip(&want).map(|(g, w)| (g - w).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    if worst > 1e-9 {
        failures.push(format!("integrator error {worst:e} at T = 1"));
    }
    verdict(9, &format!("lie_chain, Hessian kernels ({kernels} nontrivial), integrator error {worst:.2e}"), &failures);
}

#[test]
fn criterion_10_corpus_determinism() {
    let params = CorpusParams::default();
    let a = serde_json::to_string_pretty(&run_corpus(None, &params)).unwrap();
    let b = serde_json::to_string_pretty(&run_corpus(None, &params)).unwrap();
    let failures = if a == b { vec![] } else { vec!["corpus JSON differs between runs".to_string()] };
    verdict(10, &format!("corpus report byte-identical across runs ({} bytes)", a.len()), &failures);
}
