mod common;

use common::{brute_force_qp, condensed_cost, motor_design, rollout_cost};
use empc_core::augment::{augment, DisturbanceModel};
use empc_core::condense::{condense, solve_qp_online, MpcSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn motor_default_shapes() {
    let d = motor_design(2, 1e-3);
    assert_eq!(d.qp.h.shape(), (2, 2));
    assert_eq!(d.qp.g.shape(), (4, 2));
    assert_eq!(d.qp.w.as_slice(), &[24.0, 24.0, 0.0, 0.0]);
    assert_eq!(d.qp.w_param.amax(), 0.0);
    assert_eq!(d.qp.dim(), 5);
    assert_eq!(d.qp.h, d.qp.h.transpose());
    let eig = d.qp.h.clone().symmetric_eigen();
    assert!(eig.eigenvalues.min() > 0.0);
}

#[test]
fn motor_cost_matches_rollout() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in 1..=4 {
        let d = motor_design(n, 1e-3);
        for _ in 0..100 {
            let theta = DVector::from_fn(5, |_, _| rng.gen_range(-50.0..50.0));
            let u = DVector::from_fn(n, |_, _| rng.gen_range(-30.0..30.0));
            let want = rollout_cost(&d.aug, &d.spec, theta.as_slice(), u.as_slice());
            let got = condensed_cost(&d.qp, &theta, &u);
            assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "N={n}: {got} vs {want}");
        }
    }
}

#[test]
fn online_qp_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [2, 3] {
        let d = motor_design(n, 1e-3);
        for _ in 0..1000 {
            let theta = DVector::from_vec(vec![
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..150.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(0.0..24.0),
                rng.gen_range(0.0..150.0),
            ]);
            let online = solve_qp_online(&d.qp, &theta).unwrap();
            let brute = brute_force_qp(&d.qp, &theta);
            assert!((online.u - brute).amax() < 1e-9);
        }
    }
}

fn random_system(seed: u64) -> (empc_core::augment::AugmentedModel, MpcSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2;
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let b = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..1.0));
    let c = DMatrix::from_fn(1, n, |_, _| rng.gen_range(-1.0..1.0));
    let plant = empc_core::motor::LtiModel::new(a, b, c, DMatrix::zeros(1, 1), 0.1).unwrap();
    let aug = augment(&plant, &DisturbanceModel::output(n)).unwrap();
    let spec = MpcSpec::siso(3, rng.gen_range(0.1..5.0), rng.gen_range(0.1..5.0), -1.0, 2.0);
    (aug, spec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cost_equivalence_random_systems(seed in any::<u64>(), t in prop::collection::vec(-10.0f64..10.0, 5), u in prop::collection::vec(-5.0f64..5.0, 3)) {
        let (aug, spec) = random_system(seed);
        let qp = condense(&aug, &spec).unwrap();
        let theta = DVector::from_vec(t);
        let u = DVector::from_vec(u);
        let want = rollout_cost(&aug, &spec, theta.as_slice(), u.as_slice());
        let got = condensed_cost(&qp, &theta, &u);
        prop_assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0));
    }

    #[test]
    fn online_qp_feasible_and_optimal(t in prop::collection::vec(-60.0f64..60.0, 5), dir in 0usize..4, sign in prop::bool::ANY) {
        let d = motor_design(2, 1e-3);
        let theta = DVector::from_vec(t);
        let sol = solve_qp_online(&d.qp, &theta).unwrap();
        for v in sol.u.iter() {
            prop_assert!(*v >= -1e-9 && *v <= 24.0 + 1e-9);
        }
        // feasible perturbations never improve the objective
        let mut step = DVector::zeros(2);
        step[dir % 2] = if sign { 1e-4 } else { -1e-4 };
        if dir >= 2 {
            step[1 - dir % 2] = step[dir % 2];
        }
        let moved = &sol.u + &step;
        if moved.iter().all(|v| *v >= 0.0 && *v <= 24.0) {
            prop_assert!(d.qp.objective(&theta, &moved) >= d.qp.objective(&theta, &sol.u) - 1e-9);
        }
    }
}
