mod common;

use common::{char_poly, motor_design, motor_plant};
use empc_core::augment::{augment, check_offset_free_observability, DisturbanceModel};
use empc_core::observer::{design_observer, observer_step, place_observer_poles, real_poles, ObserverState};
use nalgebra::{Complex, DMatrix, DVector};

fn eigen_error(closed: &DMatrix<f64>, want: &[f64]) -> f64 {
    let mut got: Vec<Complex<f64>> = closed.complex_eigenvalues().iter().copied().collect();
    let mut worst = 0.0f64;
    for w in want {
        let (i, d) = got
            .iter()
            .enumerate()
            .map(|(i, z)| (i, ((z.re - w) * (z.re - w) + z.im * z.im).sqrt()))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        worst = worst.max(d);
        got.remove(i);
    }
    worst
}

#[test]
fn motor_observable_rank_is_two() {
    let d = motor_design(2, 1e-3);
    let rep = check_offset_free_observability(&d.aug);
    assert_eq!((rep.rank, rep.required), (2, 3));
    assert!(place_observer_poles(&d.aug, &real_poles(&[0.5, 0.6, 0.7])).is_err());
}

#[test]
fn motor_subspace_poles_placed() {
    let d = motor_design(2, 1e-3);
    let closed = &d.aug.ae - &d.observer.le * &d.aug.ce;
    // placed poles plus the unobservable integrator of position
    assert!(eigen_error(&closed, &[0.5, 0.6, 1.0]) <= 1e-6);
    let cp = char_poly(&closed);
    for (g, w) in cp.iter().zip([1.0, -2.1, 1.4, -0.3]) {
        assert!((g - w).abs() < 1e-9, "{cp:?}");
    }
}

#[test]
fn full_order_placement_on_observable_variant() {
    let mut plant = motor_plant(1e-3);
    plant.c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let aug = augment(&plant, &DisturbanceModel::input(&plant)).unwrap();
    assert!(check_offset_free_observability(&aug).observable());
    let gain = design_observer(&aug, &real_poles(&[0.5, 0.6, 0.7])).unwrap();
    let closed = &aug.ae - &gain.le * &aug.ce;
    assert!(eigen_error(&closed, &[0.5, 0.6, 0.7]) <= 1e-6);
}

#[test]
fn disturbance_estimate_converges() {
    let d = motor_design(2, 1e-3);
    // true system: plant plus a constant output offset, constant input
    let offset = 3.7;
    let u = DVector::from_element(1, 6.0);
    let mut x = DVector::from_vec(vec![0.0, 12.0]);
    let mut est = ObserverState::zeros(&d.aug);
    let mut reached = None;
    for k in 0..500 {
        let y = &d.plant.c * &x + DVector::from_element(1, offset);
        est = observer_step(&d.observer, &d.aug, &est, &u, &y).unwrap();
        x = &d.plant.a * &x + &d.plant.b * &u;
        if reached.is_none() && (est.xe_hat[2] - offset).abs() <= 1e-6 && (est.xe_hat[1] - x[1]).abs() <= 1e-6 {
            reached = Some(k);
        }
    }
    assert!(reached.is_some());
    assert!((est.xe_hat[2] - offset).abs() <= 1e-6);
}
