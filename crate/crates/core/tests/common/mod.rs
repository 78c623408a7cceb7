//! Reference computations written independently of the library paths they
//! check.
#![allow(dead_code)]

use empc_core::augment::{augment, AugmentedModel, DisturbanceModel};
use empc_core::condense::{condense, MpQp, MpcSpec, ParamLayout};
use empc_core::explicit::{solve_mpqp, PwaLaw};
use empc_core::harness::LoopSetup;
use empc_core::motor::{build_ct_model, derive_first_order, discretize_zoh, LtiModel, MotorParams};
use empc_core::observer::{design_observer, real_poles, ObserverGain};
use nalgebra::{DMatrix, DVector};

pub const DEFAULT_POLES: [f64; 2] = [0.5, 0.6];

pub struct Design {
    pub plant: LtiModel,
    pub aug: AugmentedModel,
    pub spec: MpcSpec,
    pub qp: MpQp,
    pub law: PwaLaw,
    pub observer: ObserverGain,
}

impl Design {
    pub fn setup(&self) -> LoopSetup<'_> {
        LoopSetup {
            plant: &self.plant,
            aug: &self.aug,
            observer: &self.observer,
            layout: self.qp.layout,
            u_min: self.spec.u_min[0],
            u_max: self.spec.u_max[0],
            x0: DVector::zeros(self.plant.states()),
        }
    }
}

pub fn motor_plant(ts: f64) -> LtiModel {
    let fom = derive_first_order(&MotorParams::REFERENCE).unwrap();
    discretize_zoh(&build_ct_model(&fom), ts).unwrap()
}

/// Default pipeline: output disturbance, Q = R = 1, 0 <= u <= 24.
pub fn motor_design(horizon: usize, ts: f64) -> Design {
    let plant = motor_plant(ts);
    let aug = augment(&plant, &DisturbanceModel::output(plant.states())).unwrap();
    let spec = MpcSpec::siso(horizon, 1.0, 1.0, 0.0, 24.0);
    let qp = condense(&aug, &spec).unwrap();
    let law = solve_mpqp(&qp).unwrap();
    let observer = design_observer(&aug, &real_poles(&DEFAULT_POLES)).unwrap();
    Design {
        plant,
        aug,
        spec,
        qp,
        law,
        observer,
    }
}

/// Tracking cost by forward simulation of the augmented model:
/// Σ_{k<N} (y_k - r)' Q (y_k - r) + Δu_k' R Δu_k with Δu_0 = u_0 - u_prev.
pub fn rollout_cost(aug: &AugmentedModel, spec: &MpcSpec, theta: &[f64], u: &[f64]) -> f64 {
    let ne = aug.ae.nrows();
    let l = aug.be.ncols();
    let m = aug.ce.nrows();
    let mut x = DVector::from_column_slice(&theta[..ne]);
    let mut prev = DVector::from_column_slice(&theta[ne..ne + l]);
    let r = DVector::from_column_slice(&theta[ne + l..ne + l + m]);
    let mut cost = 0.0;
    for k in 0..spec.horizon {
        let uk = DVector::from_column_slice(&u[k * l..(k + 1) * l]);
        let y = &aug.ce * &x + &aug.de * &uk;
        let e = &y - &r;
        let du = &uk - &prev;
        cost += (e.transpose() * &spec.q * &e)[0] + (du.transpose() * &spec.r * &du)[0];
        x = &aug.ae * &x + &aug.be * &uk;
        prev = uk;
    }
    cost
}

pub fn condensed_cost(qp: &MpQp, theta: &DVector<f64>, u: &DVector<f64>) -> f64 {
    (u.transpose() * &qp.h * u)[0] + (theta.transpose() * &qp.f * u)[0] + (theta.transpose() * &qp.y * theta)[0]
}

/// Exhaustive KKT enumeration: every active subset, keep the feasible one
/// with non-negative multipliers and the lowest objective.
pub fn brute_force_qp(qp: &MpQp, theta: &DVector<f64>) -> DVector<f64> {
    let nu = qp.h.nrows();
    let q = qp.g.nrows();
    let rhs = &qp.w + &qp.w_param * theta;
    let lin = qp.f.transpose() * theta;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << q) {
        let active: Vec<usize> = (0..q).filter(|i| mask & (1 << i) != 0).collect();
        if active.len() > nu {
            continue;
        }
        let k = active.len();
        let mut kkt = DMatrix::zeros(nu + k, nu + k);
        kkt.view_mut((0, 0), (nu, nu)).copy_from(&(&qp.h * 2.0));
        let mut b = DVector::zeros(nu + k);
        b.rows_mut(0, nu).copy_from(&(-&lin));
        for (j, &row) in active.iter().enumerate() {
            for c in 0..nu {
                kkt[(nu + j, c)] = qp.g[(row, c)];
                kkt[(c, nu + j)] = qp.g[(row, c)];
            }
            b[nu + j] = rhs[row];
        }
        let Some(sol) = kkt.lu().solve(&b) else { continue };
        let u = sol.rows(0, nu).into_owned();
        let lambda = sol.rows(nu, k);
        let scale = 1.0 + rhs.amax();
        if (&qp.g * &u - &rhs).iter().any(|v| *v > 1e-9 * scale) {
            continue;
        }
        if lambda.iter().any(|v| *v < -1e-9 * scale) {
            continue;
        }
        let val = condensed_cost(qp, theta, &u);
        if best.as_ref().map_or(true, |(bv, _)| val < *bv - 1e-12) {
            best = Some((val, u));
        }
    }
    best.expect("box-constrained QP always has a solution").1
}

/// Characteristic polynomial `[1, c1, .., cn]` by Faddeev-LeVerrier.
pub fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut coeffs = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(n, n);
    let id = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        m = a * &m + &id * coeffs[k - 1];
        let am = a * &m;
        coeffs.push(-am.trace() / k as f64);
    }
    coeffs
}

/// One-dimensional toy problem in θ = [x, r]: minimize u² + 2(x - r)u with
/// 0 <= u <= 1. Optimum u = clamp(r - x, 0, 1): three pieces split at
/// r - x = 0 and r - x = 1.
pub fn toy_qp() -> MpQp {
    let layout = ParamLayout {
        states: 1,
        plant_states: 1,
        inputs: 0,
        outputs: 1,
    };
    MpQp::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_column_slice(2, 1, &[2.0, -2.0]),
        DMatrix::zeros(2, 2),
        DMatrix::from_column_slice(2, 1, &[1.0, -1.0]),
        DVector::from_column_slice(&[1.0, 0.0]),
        DMatrix::zeros(2, 2),
        layout,
        1,
    )
    .unwrap()
}

pub fn toy_solution(x: f64, r: f64) -> f64 {
    (r - x).clamp(0.0, 1.0)
}
