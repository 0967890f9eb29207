mod common;

use neurobs::linalg::{max_abs, Mat, Vector};
use neurobs::nn::{Activation, NeuralNet};
use neurobs::qc::{
    assemble_corollary2, assemble_theorem1, assemble_theorem2, assemble_theorem3, assemble_theorem4, Constraint,
    LmiInstance, Provenance, Sign,
};
use neurobs::sdp::{lyapunov_solve, solve_feasibility, verify_certificate, Certificate, Status};
use neurobs::synthesis::stabilizing_output_injection;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instances(seed: u64) -> Vec<LmiInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.gen_range(2..=3);
    let a = common::mat(&mut rng, ns, ns, 1.0);
    let b = common::mat(&mut rng, ns, 1, 1.0);
    let c = common::mat(&mut rng, 1, ns, 1.0);
    let act = common::activation(&mut rng, seed as usize);
    let obs = common::net(&mut rng, 1, ns, act);
    let ctrl = common::net(&mut rng, ns, 1, act);
    let chain: Vec<NeuralNet> = (0..3).map(|_| common::net(&mut rng, 1, 1, act)).collect();
    let chain_refs: Vec<&NeuralNet> = chain.iter().collect();
    let gains = common::vector(&mut rng, 3, 2.0);
    let b_w = common::mat(&mut rng, ns, 1, 1.0);
    let m1 = common::net(&mut rng, 1, ns, act);
    let m2 = common::net(&mut rng, 1, 1, act);
    vec![
        assemble_theorem1(&a, &c, &obs).unwrap(),
        assemble_theorem2(&a, &b, &c, &ctrl, &obs).unwrap(),
        assemble_theorem3(2, &chain_refs).unwrap(),
        assemble_corollary2(2, &chain[0], &gains).unwrap(),
        assemble_theorem4(&a, &b_w, &c, 0.1, &m1, &m2).unwrap(),
    ]
}

proptest! {
    #![proptest_config(common::proptest_config(40))]

    #[test]
    fn constraint_maps_are_affine_and_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for inst in instances(seed) {
            let n = inst.n_vars();
            let y1: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y2: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
            let zero = vec![0.0; n];
            for j in 0..inst.constraints.len() {
                let f1 = inst.eval_constraint(j, &y1).unwrap();
                let f2 = inst.eval_constraint(j, &y2).unwrap();
                let f0 = inst.eval_constraint(j, &zero).unwrap();
                let fs = inst.eval_constraint(j, &sum).unwrap();
                let scale = 1.0 + max_abs(&f1) + max_abs(&f2);
                prop_assert!(max_abs(&(&f1 + &f2 - &f0 - &fs)) <= 1e-12 * scale);
                prop_assert_eq!(&f1, &f1.transpose());
            }
        }
    }

    #[test]
    fn pack_unpack_round_trip(seed in any::<u64>()) {
        for inst in instances(seed) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = (0..inst.n_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (p, l) = inst.unpack(&y).unwrap();
            prop_assert_eq!(&p, &p.transpose());
            prop_assert_eq!(inst.pack(&p, &l).unwrap(), y);
        }
    }
}

#[test]
fn zero_inner_weights_give_block_diagonal_certificate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let ns = rng.gen_range(2..=4);
        let a = common::mat(&mut rng, ns, ns, 1.0);
        let c = common::mat(&mut rng, 1, ns, 1.0);
        let w = stabilizing_output_injection(&a, &c).unwrap();
        let widths = [3, 2];
        let weights = vec![Mat::zeros(3, 1), Mat::zeros(2, 3), Mat::zeros(ns, 2), w.clone()];
        let net = NeuralNet::new(weights, Activation::Tanh).unwrap();
        let inst = assemble_theorem1(&a, &c, &net).unwrap();
        let q = Vector::from_fn(ns, |_, _| rng.gen_range(0.5..2.0));
        let lambda = Vector::from_fn(widths.iter().sum(), |_, _| rng.gen_range(0.5..2.0));
        let p = lyapunov_solve(&(&a + &w * &c), &Mat::from_diagonal(&q)).unwrap();
        let f = inst.main_at(&p, &lambda).unwrap();
        let mut expected = Mat::zeros(f.nrows(), f.ncols());
        for i in 0..ns {
            expected[(i, i)] = -q[i];
        }
        for i in 0..lambda.len() {
            expected[(ns + i, ns + i)] = -2.0 * lambda[i];
        }
        assert!(max_abs(&(f - expected)) <= 1e-10 * (1.0 + max_abs(&p)));
    }
}

fn sym_basis(n: usize) -> Vec<Mat> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut e = Mat::zeros(n, n);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

/// `AᵀP + PA ≺ 0`, `P ≻ 0`.
fn lyapunov_lmi(a: &Mat) -> LmiInstance {
    let n = a.nrows();
    let basis = sym_basis(n);
    let lyap: Vec<Mat> = basis.iter().map(|e| a.transpose() * e + e * a).collect();
    let cons = vec![
        Constraint::new(Sign::Neg, 1.0, Mat::zeros(n, n), lyap).unwrap(),
        Constraint::new(Sign::Pos, 1.0, Mat::zeros(n, n), basis).unwrap(),
    ];
    LmiInstance::new(n, 0, cons, Provenance::Custom).unwrap().with_margin_rel(1e-6)
}

/// `y·I − D ≺ 0`, `y ≥ 0`; feasible iff every entry of `D` is positive.
fn interval_lmi(d: &[f64]) -> LmiInstance {
    let n = d.len();
    let cons = vec![
        Constraint::new(Sign::Neg, 1e-6, -Mat::from_diagonal(&Vector::from_column_slice(d)), vec![Mat::identity(n, n)])
            .unwrap(),
        Constraint::new(Sign::Pos, 0.0, Mat::zeros(1, 1), vec![Mat::identity(1, 1)]).unwrap(),
    ];
    LmiInstance::new(0, 1, cons, Provenance::Custom).unwrap()
}

#[test]
fn solver_and_verifier_agree_on_toys() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut feasible = 0;
    for k in 0..200 {
        let inst = if k % 2 == 0 {
            let n = rng.gen_range(1..=4);
            let margin = rng.gen_range(0.1..2.0);
            let a = common::hurwitz(&mut rng, n, margin);
            // Known witness: the Lyapunov solution with Q = I.
            let p = lyapunov_solve(&a, &Mat::identity(n, n)).unwrap();
            let inst = lyapunov_lmi(&a);
            let y = inst.pack(&p, &Vector::zeros(0)).unwrap();
            let witness = Certificate { status: Status::Feasible, y, margins: vec![], iterations: 0, final_t: 0.0 };
            let scaled = Certificate { y: witness.y.iter().map(|v| v * 1e3).collect(), ..witness };
            assert!(verify_certificate(&inst, &scaled).pass, "toy {k}: witness rejected");
            inst
        } else {
            let d: Vec<f64> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0.5..5.0)).collect();
            interval_lmi(&d)
        };
        let cert = solve_feasibility(&inst, 2000, 1e-9);
        let rep = verify_certificate(&inst, &cert);
        assert_eq!(cert.status, Status::Feasible, "toy {k}");
        assert!(rep.pass, "toy {k}: solver claimed feasibility the verifier rejects");
        feasible += 1;
    }
    assert_eq!(feasible, 200);

    for k in 0..50 {
        let inst = if k % 2 == 0 {
            let n = rng.gen_range(1..=4);
            // Anti-Hurwitz: −A is Hurwitz, so no P ≻ 0 makes AᵀP + PA negative.
            let margin = rng.gen_range(0.1..2.0);
            let a = -common::hurwitz(&mut rng, n, margin);
            lyapunov_lmi(&a)
        } else {
            // y ≥ 0 and y·I ≺ D with a negative entry in D.
            let mut d: Vec<f64> = (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0.5..5.0)).collect();
            d[0] = -rng.gen_range(0.5..5.0);
            interval_lmi(&d)
        };
        let cert = solve_feasibility(&inst, 2000, 1e-9);
        assert_eq!(cert.status, Status::InfeasibleSuspected, "infeasible toy {k}");
        assert!(!verify_certificate(&inst, &cert).pass);
    }
}

#[test]
fn interval_toy_margins_by_inspection() {
    let inst = interval_lmi(&[2.0, 3.0]);
    let cert = Certificate { status: Status::Feasible, y: vec![1.0], margins: vec![], iterations: 0, final_t: 0.0 };
    let rep = verify_certificate(&inst, &cert);
    assert!(rep.pass);
    assert!((rep.constraints[0].slacks[0] - 1.0).abs() < 1e-12);
    assert!((rep.constraints[0].slacks[1] - 2.0).abs() < 1e-12);
    assert!((rep.constraints[1].min_slack - 1.0).abs() < 1e-12);
}

#[test]
fn zero_p_fails_positivity() {
    let a = -Mat::identity(2, 2);
    let inst = lyapunov_lmi(&a);
    let cert = Certificate { status: Status::Feasible, y: vec![0.0; 3], margins: vec![], iterations: 0, final_t: 0.0 };
    let rep = verify_certificate(&inst, &cert);
    assert!(!rep.pass);
    assert!(!rep.constraints[1].pass);
}

#[test]
fn solver_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = common::mat(&mut rng, 3, 3, 1.0);
    let c = common::mat(&mut rng, 1, 3, 1.0);
    let net = neurobs::synthesis::synthesize_observer_nn(
        &a,
        &c,
        &neurobs::synthesis::Architecture::new(vec![3], Activation::Relu).unwrap(),
        1,
    )
    .unwrap();
    let inst = assemble_theorem1(&a, &c, &net).unwrap();
    let c1 = solve_feasibility(&inst, 2000, 1e-9);
    let c2 = solve_feasibility(&inst, 2000, 1e-9);
    assert_eq!(c1, c2);
    assert_eq!(c1.status, Status::Feasible);
    assert!(c1.margins.iter().all(|m| *m > 0.0));
}

#[test]
fn instance_json_round_trip() {
    let inst = &instances(4)[0];
    let text = serde_json::to_string(inst).unwrap();
    assert!(text.contains("\"m_P\"") && text.contains("\"F0\"") && text.contains("\"provenance\":\"theorem1\""));
    let back: LmiInstance = serde_json::from_str(&text).unwrap();
    let y = vec![0.3; inst.n_vars()];
    assert_eq!(back.eval_constraint(0, &y).unwrap(), inst.eval_constraint(0, &y).unwrap());
}
