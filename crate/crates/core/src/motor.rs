//! DC motor plant: physical parameters, reduced first-order model,
//! two-state (position, speed) continuous model, zero-order-hold
//! discretization and one-step simulation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dims, ModelError};

/// Physical constants of a permanent-magnet DC motor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    /// Torque / back-emf constant [N·m/A].
    pub km: f64,
    /// Rotor inertia [kg·m²].
    pub j: f64,
    /// Viscous friction [N·m/(rad/s)].
    pub fm: f64,
    /// Armature resistance [Ω].
    pub ra: f64,
    /// Armature inductance [H]. Carried for completeness, unused by the reduced model.
    pub la: f64,
}

impl MotorParams {
    /// Bench motor used throughout the examples and defaults.
    pub const REFERENCE: MotorParams = MotorParams {
        km: 8.32e-4,
        j: 2.45e-7,
        fm: 3.10e-5,
        ra: 4.1,
        la: 2.27e-3,
    };

    /// `km` may be zero (a motor that produces no torque); everything else
    /// has to be strictly positive.
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [("J", self.j), ("fm", self.fm), ("Ra", self.ra), ("La", self.la)];
        for (name, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        if !(self.km >= 0.0) || !self.km.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "km",
                value: self.km,
            });
        }
        Ok(())
    }
}

/// Speed response `K / (tau s + 1)` from armature voltage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderModel {
    /// Steady-state gain [rad/s per V].
    pub gain: f64,
    /// Time constant [s].
    pub tau: f64,
    /// Effective viscous friction including back-emf damping.
    pub friction: f64,
}

/// Reduce the motor to its first-order speed response, neglecting the
/// electrical pole (armature inductance).
pub fn derive_first_order(params: &MotorParams) -> Result<FirstOrderModel, ModelError> {
    params.validate()?;
    let friction = params.fm + params.km * params.km / params.ra;
    Ok(FirstOrderModel {
        gain: params.km / (params.ra * friction),
        tau: params.j / friction,
        friction,
    })
}

/// Continuous-time state-space model `dx = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub state_labels: Vec<String>,
}

impl CtModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self, ModelError> {
        let n = a.nrows();
        check_dims("A", (n, n), a.shape())?;
        check_dims("B", (n, b.ncols()), b.shape())?;
        check_dims("C", (c.nrows(), n), c.shape())?;
        check_dims("D", (c.nrows(), b.ncols()), d.shape())?;
        let state_labels = (0..n).map(|i| alloc::format!("x{}", i + 1)).collect();
        Ok(CtModel {
            a,
            b,
            c,
            d,
            state_labels,
        })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
}

/// Two-state motor model with position and speed as states and speed as
/// the measured output.
pub fn build_ct_model(fom: &FirstOrderModel) -> CtModel {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -1.0 / fom.tau]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, fom.gain / fom.tau]);
    let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let d = DMatrix::zeros(1, 1);
    CtModel {
        a,
        b,
        c,
        d,
        state_labels: vec![String::from("theta_m [rad]"), String::from("omega_m [rad/s]")],
    }
}

/// Discrete-time model sampled every `ts` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub ts: f64,
}

impl LtiModel {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        ts: f64,
    ) -> Result<Self, ModelError> {
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(ModelError::InvalidParameter {
                name: "Ts",
                value: ts,
            });
        }
        let ct = CtModel::new(a, b, c, d)?;
        Ok(LtiModel {
            a: ct.a,
            b: ct.b,
            c: ct.c,
            d: ct.d,
            ts,
        })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

// Series truncation, relative to the running sum, in units of machine epsilon.
const EXPM_TOL: f64 = 1.0;

/// Matrix exponential by scaling and squaring over a truncated Taylor series.
pub(crate) fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.abs().row_sum().max();
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = m * scale;
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..64 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.abs().max() <= EXPM_TOL * f64::EPSILON * result.abs().max() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Zero-order-hold discretization via the exponential of the block matrix
/// `[[A, B], [0, 0]] * ts`.
pub fn discretize_zoh(ct: &CtModel, ts: f64) -> Result<LtiModel, ModelError> {
    if !(ts > 0.0) || !ts.is_finite() {
        return Err(ModelError::InvalidParameter {
            name: "Ts",
            value: ts,
        });
    }
    let n = ct.states();
    let l = ct.b.ncols();
    let mut block = DMatrix::<f64>::zeros(n + l, n + l);
    block.view_mut((0, 0), (n, n)).copy_from(&(&ct.a * ts));
    block.view_mut((0, n), (n, l)).copy_from(&(&ct.b * ts));
    let e = expm(&block);
    Ok(LtiModel {
        a: e.view((0, 0), (n, n)).into_owned(),
        b: e.view((0, n), (n, l)).into_owned(),
        c: ct.c.clone(),
        d: ct.d.clone(),
        ts,
    })
}

/// One plant sample: `x+ = A x + B (u + u_dist)`, `y = C x + D u + noise`.
pub fn plant_step(
    model: &LtiModel,
    x: &DVector<f64>,
    u: &DVector<f64>,
    u_dist: &DVector<f64>,
    noise: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ModelError> {
    let (n, l, m) = (model.states(), model.inputs(), model.outputs());
    check_dims("state", (n, 1), x.shape())?;
    check_dims("input", (l, 1), u.shape())?;
    check_dims("input disturbance", (l, 1), u_dist.shape())?;
    check_dims("output noise", (m, 1), noise.shape())?;
    let x_next = &model.a * x + &model.b * (u + u_dist);
    let y = &model.c * x + &model.d * u + noise;
    Ok((x_next, y))
}
