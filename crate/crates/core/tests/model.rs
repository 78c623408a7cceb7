use empc_core::augment::{augment, DisturbanceModel};
use empc_core::motor::{build_ct_model, derive_first_order, discretize_zoh, plant_step, MotorParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = MotorParams> {
    (1e-5f64..1e-2, 1e-8f64..1e-5, 1e-7f64..1e-3, 0.1f64..20.0, 1e-4f64..1e-2)
        .prop_map(|(km, j, fm, ra, la)| MotorParams { km, j, fm, ra, la })
}

#[test]
fn reference_values() {
    let fom = derive_first_order(&MotorParams::REFERENCE).unwrap();
    let km: f64 = 8.32e-4;
    let f = 3.10e-5 + km * km / 4.1;
    assert!((fom.friction - f).abs() < 1e-15);
    assert!((fom.gain - 6.511).abs() < 1e-3);
    assert!((fom.tau - 7.860e-3).abs() < 1e-6);
    let ct = build_ct_model(&fom);
    assert!((ct.a[(1, 1)] + 127.22).abs() < 0.01);
    assert!((ct.b[1] - 828.3).abs() < 0.1);
    let d = discretize_zoh(&ct, 1e-3).unwrap();
    assert!((d.a[(1, 1)] - (-1e-3 / fom.tau).exp()).abs() < 1e-12);
    assert!((d.a[(1, 1)] - 0.8805).abs() < 1e-4);
}

proptest! {
    #[test]
    fn first_order_identities(p in params()) {
        let fom = derive_first_order(&p).unwrap();
        let f = p.fm + p.km * p.km / p.ra;
        prop_assert!((fom.tau - p.j / f).abs() <= 1e-12 * fom.tau);
        prop_assert!((fom.gain * f * p.ra - p.km).abs() <= 1e-12 * p.km);
    }

    #[test]
    fn zoh_semigroup(p in params(), ts in 1e-5f64..1e-2, x0 in -10.0f64..10.0, x1 in -100.0f64..100.0, u in -24.0f64..24.0) {
        let ct = build_ct_model(&derive_first_order(&p).unwrap());
        let one = discretize_zoh(&ct, ts).unwrap();
        let two = discretize_zoh(&ct, 2.0 * ts).unwrap();
        let x = DVector::from_vec(vec![x0, x1]);
        let uv = DVector::from_element(1, u);
        let z = DVector::zeros(1);
        let (mid, _) = plant_step(&one, &x, &uv, &z, &z).unwrap();
        let (a, _) = plant_step(&one, &mid, &uv, &z, &z).unwrap();
        let (b, _) = plant_step(&two, &x, &uv, &z, &z).unwrap();
        let scale = 1.0 + a.amax();
        prop_assert!((a - b).amax() <= 1e-9 * scale);
    }

    #[test]
    fn plant_step_linear(xa in prop::array::uniform2(-50.0f64..50.0), xb in prop::array::uniform2(-50.0f64..50.0), ua in -24.0f64..24.0, ub in -24.0f64..24.0) {
        let ct = build_ct_model(&derive_first_order(&MotorParams::REFERENCE).unwrap());
        let m = discretize_zoh(&ct, 1e-3).unwrap();
        let z = DVector::zeros(1);
        let step = |x: [f64; 2], u: f64| plant_step(&m, &DVector::from_row_slice(&x), &DVector::from_element(1, u), &z, &z).unwrap();
        let (na, ya) = step(xa, ua);
        let (nb, yb) = step(xb, ub);
        let (ns, ys) = step([xa[0] + xb[0], xa[1] + xb[1]], ua + ub);
        prop_assert!((ns - na - nb).amax() <= 1e-12 * 1e3);
        prop_assert!((ys - ya - yb).amax() <= 1e-12 * 1e3);
    }

    #[test]
    fn augmentation_preserves_plant(x in prop::array::uniform2(-50.0f64..50.0), d in -10.0f64..10.0, u in -24.0f64..24.0, bd in prop::array::uniform2(-1.0f64..1.0)) {
        let ct = build_ct_model(&derive_first_order(&MotorParams::REFERENCE).unwrap());
        let m = discretize_zoh(&ct, 1e-3).unwrap();
        let dist = DisturbanceModel::new(DMatrix::from_column_slice(2, 1, &bd), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let aug = augment(&m, &dist).unwrap();
        let xv = DVector::from_row_slice(&x);
        let uv = DVector::from_element(1, u);
        let xe = DVector::from_vec(vec![x[0], x[1], d]);
        let next = &aug.ae * &xe + &aug.be * &uv;
        let want = &m.a * &xv + &m.b * &uv + &dist.bd * d;
        prop_assert_eq!(aug.ae.view((0, 0), (2, 2)).into_owned(), m.a.clone());
        prop_assert_eq!(aug.ae.view((0, 2), (2, 1)).into_owned(), dist.bd.clone());
        prop_assert!((next.rows(0, 2) - want).amax() <= 1e-12 * 1e2);
        prop_assert_eq!(next[2], d);
        let zero_d = DVector::from_vec(vec![x[0], x[1], 0.0]);
        prop_assert_eq!((&aug.ce * &zero_d)[0], (&m.c * &xv)[0]);
    }
}
