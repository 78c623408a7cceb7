//! Condensed finite-horizon tracking problem.
//!
//! The horizon cost
//!
//! ```text
//! sum_{k=0}^{N-1} (y_k - r)' Q (y_k - r) + du_k' R du_k,   du_k = u_k - u_{k-1}
//! ```
//!
//! with predictions from the augmented model is rewritten over the stacked
//! input sequence `U` and the parameter vector `θ = [x̂e; u(t-1); r]` as
//!
//! ```text
//! min_U  U' H U + θ' F U + θ' Y θ    s.t.  G U <= w + W θ
//! ```
//!
//! The reference is held constant over the horizon and only input bounds
//! are imposed.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::augment::AugmentedModel;
use crate::error::{check_dims, ModelError};
use crate::polyhedra::{solve_lp, LpStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSpec {
    pub horizon: usize,
    /// Output tracking weight, m×m, positive semi-definite.
    pub q: DMatrix<f64>,
    /// Input-increment weight, l×l, positive definite.
    pub r: DMatrix<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
}

impl MpcSpec {
    /// Single-input, single-output spec with scalar weights.
    pub fn siso(horizon: usize, q: f64, r: f64, u_min: f64, u_max: f64) -> Self {
        MpcSpec {
            horizon,
            q: DMatrix::from_element(1, 1, q),
            r: DMatrix::from_element(1, 1, r),
            u_min: DVector::from_element(1, u_min),
            u_max: DVector::from_element(1, u_max),
        }
    }

    pub fn validate(&self, inputs: usize, outputs: usize) -> Result<(), ModelError> {
        if self.horizon == 0 {
            return Err(ModelError::InvalidParameter {
                name: "N",
                value: 0.0,
            });
        }
        check_dims("Q", (outputs, outputs), self.q.shape())?;
        check_dims("R", (inputs, inputs), self.r.shape())?;
        check_dims("u_min", (inputs, 1), self.u_min.shape())?;
        check_dims("u_max", (inputs, 1), self.u_max.shape())?;
        let q_sym = (&self.q + self.q.transpose()) * 0.5;
        let q_min = q_sym.symmetric_eigenvalues().min();
        if !(q_min >= -1e-12 * self.q.abs().max().max(1.0)) {
            return Err(ModelError::NotDefinite { name: "Q" });
        }
        let r_sym = (&self.r + self.r.transpose()) * 0.5;
        if r_sym.cholesky().is_none() || (&self.r - self.r.transpose()).abs().max() > 1e-12 {
            return Err(ModelError::NotDefinite { name: "R" });
        }
        for i in 0..inputs {
            if !(self.u_min[i] < self.u_max[i]) {
                return Err(ModelError::InvalidParameter {
                    name: "u_min/u_max",
                    value: self.u_min[i],
                });
            }
        }
        Ok(())
    }
}

/// Ordering of the parameter vector: augmented state estimate, previous
/// input, reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub states: usize,
    pub plant_states: usize,
    pub inputs: usize,
    pub outputs: usize,
}

impl ParamLayout {
    pub fn dim(&self) -> usize {
        self.states + self.inputs + self.outputs
    }

    pub fn state_range(&self) -> core::ops::Range<usize> {
        0..self.states
    }

    pub fn prev_input_range(&self) -> core::ops::Range<usize> {
        self.states..self.states + self.inputs
    }

    pub fn reference_range(&self) -> core::ops::Range<usize> {
        self.states + self.inputs..self.dim()
    }

    /// Stack `[x̂e; u_prev; r]`.
    pub fn assemble(&self, xe_hat: &[f64], u_prev: &[f64], reference: &[f64]) -> DVector<f64> {
        let mut theta = DVector::zeros(self.dim());
        theta.rows_mut(0, self.states).copy_from_slice(xe_hat);
        theta.rows_mut(self.states, self.inputs).copy_from_slice(u_prev);
        theta
            .rows_mut(self.states + self.inputs, self.outputs)
            .copy_from_slice(reference);
        theta
    }
}

/// Condensed multi-parametric QP.
#[derive(Debug, Clone, PartialEq)]
pub struct MpQp {
    /// (l·N)×(l·N), symmetric positive definite.
    pub h: DMatrix<f64>,
    /// dim×(l·N) cross term.
    pub f: DMatrix<f64>,
    /// dim×dim parameter-only term.
    pub y: DMatrix<f64>,
    /// q×(l·N) constraint matrix; rows `[I; -I]` for input boxes.
    pub g: DMatrix<f64>,
    /// q constraint offsets.
    pub w: DVector<f64>,
    /// q×dim parametric constraint shift.
    pub w_param: DMatrix<f64>,
    pub layout: ParamLayout,
    /// Inputs per move (l).
    pub inputs: usize,
    pub horizon: usize,
}

impl MpQp {
    /// Check shapes and strict convexity of a directly built problem.
    pub fn new(
        h: DMatrix<f64>,
        f: DMatrix<f64>,
        y: DMatrix<f64>,
        g: DMatrix<f64>,
        w: DVector<f64>,
        w_param: DMatrix<f64>,
        layout: ParamLayout,
        inputs: usize,
    ) -> Result<Self, ModelError> {
        let nu = h.nrows();
        let dim = layout.dim();
        let q = g.nrows();
        check_dims("H", (nu, nu), h.shape())?;
        check_dims("F", (dim, nu), f.shape())?;
        check_dims("Y", (dim, dim), y.shape())?;
        check_dims("G", (q, nu), g.shape())?;
        check_dims("w", (q, 1), w.shape())?;
        check_dims("W", (q, dim), w_param.shape())?;
        if inputs == 0 || nu % inputs != 0 {
            return Err(ModelError::DimensionMismatch {
                what: "H",
                expected: (inputs, inputs),
                found: h.shape(),
            });
        }
        if (&h - h.transpose()).abs().max() > 1e-10 * h.abs().max().max(1.0) || h.clone().cholesky().is_none() {
            return Err(ModelError::NotDefinite { name: "H" });
        }
        Ok(MpQp {
            h,
            f,
            y,
            g,
            w,
            w_param,
            layout,
            inputs,
            horizon: nu / inputs,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn decision_len(&self) -> usize {
        self.h.nrows()
    }

    pub fn constraints(&self) -> usize {
        self.g.nrows()
    }

    /// `U' H U + θ' F U + θ' Y θ`.
    pub fn objective(&self, theta: &DVector<f64>, u: &DVector<f64>) -> f64 {
        u.dot(&(&self.h * u)) + theta.dot(&(&self.f * u)) + theta.dot(&(&self.y * theta))
    }

    /// Right-hand side `w + W θ`.
    pub fn rhs(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.w + &self.w_param * theta
    }
}

/// Build the condensed problem for the augmented model.
pub fn condense(aug: &AugmentedModel, spec: &MpcSpec) -> Result<MpQp, ModelError> {
    let (ne, l, m) = (aug.states(), aug.inputs(), aug.outputs());
    spec.validate(l, m)?;
    let n_h = spec.horizon;
    let layout = ParamLayout {
        states: ne,
        plant_states: aug.layout.plant_states,
        inputs: l,
        outputs: m,
    };
    let dim = layout.dim();
    let nu = l * n_h;

    // Powers Ae^k for k = 0..N-1.
    let mut powers: Vec<DMatrix<f64>> = Vec::with_capacity(n_h);
    powers.push(DMatrix::identity(ne, ne));
    for k in 1..n_h {
        let next = &aug.ae * &powers[k - 1];
        powers.push(next);
    }

    let mut h = DMatrix::<f64>::zeros(nu, nu);
    let mut f = DMatrix::<f64>::zeros(dim, nu);
    let mut y = DMatrix::<f64>::zeros(dim, dim);

    for k in 0..n_h {
        // Tracking residual e_k = P θ + T U.
        let mut p = DMatrix::<f64>::zeros(m, dim);
        p.view_mut((0, 0), (m, ne)).copy_from(&(&aug.ce * &powers[k]));
        p.view_mut((0, ne + l), (m, m)).fill_with_identity();
        p.view_mut((0, ne + l), (m, m)).neg_mut();
        let mut t = DMatrix::<f64>::zeros(m, nu);
        for j in 0..k {
            let block = &aug.ce * &powers[k - 1 - j] * &aug.be;
            t.view_mut((0, j * l), (m, l)).copy_from(&block);
        }
        t.view_mut((0, k * l), (m, l)).copy_from(&aug.de);

        // Input increment du_k = Pd θ + Td U.
        let mut pd = DMatrix::<f64>::zeros(l, dim);
        let mut td = DMatrix::<f64>::zeros(l, nu);
        td.view_mut((0, k * l), (l, l)).fill_with_identity();
        if k == 0 {
            pd.view_mut((0, ne), (l, l)).fill_with_identity();
            pd.view_mut((0, ne), (l, l)).neg_mut();
        } else {
            td.view_mut((0, (k - 1) * l), (l, l)).fill_with_identity();
            td.view_mut((0, (k - 1) * l), (l, l)).neg_mut();
        }

        let qt = &spec.q * &t;
        let rtd = &spec.r * &td;
        h += t.transpose() * &qt + td.transpose() * &rtd;
        f += (p.transpose() * &qt + pd.transpose() * &rtd) * 2.0;
        y += p.transpose() * &spec.q * &p + pd.transpose() * &spec.r * &pd;
    }
    let h = (&h + h.transpose()) * 0.5;
    let y = (&y + y.transpose()) * 0.5;

    // Box constraints: [I; -I] U <= [u_max; -u_min].
    let mut g = DMatrix::<f64>::zeros(2 * nu, nu);
    let mut w = DVector::<f64>::zeros(2 * nu);
    for i in 0..nu {
        g[(i, i)] = 1.0;
        g[(nu + i, i)] = -1.0;
        w[i] = spec.u_max[i % l];
        w[nu + i] = -spec.u_min[i % l];
    }
    let w_param = DMatrix::zeros(2 * nu, dim);

    MpQp::new(h, f, y, g, w, w_param, layout, l)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QpError {
    Infeasible,
    /// Working-set KKT system became singular (dependent active rows).
    Degenerate,
    IterationLimit,
    Dimension,
}

impl core::fmt::Display for QpError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            QpError::Infeasible => f.write_str("QP constraints are infeasible"),
            QpError::Degenerate => f.write_str("degenerate working set"),
            QpError::IterationLimit => f.write_str("active-set iteration limit reached"),
            QpError::Dimension => f.write_str("parameter dimension mismatch"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for QpError {}

/// Solution of one QP instance.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    /// Multiplier per constraint row (zero for inactive rows).
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

const QP_TOL: f64 = 1e-10;

/// Solve the QP for one parameter value with a primal active-set method.
pub fn solve_qp_online(qp: &MpQp, theta: &DVector<f64>) -> Result<QpSolution, QpError> {
    if theta.len() != qp.dim() {
        return Err(QpError::Dimension);
    }
    let nu = qp.decision_len();
    let q = qp.constraints();
    let hess = &qp.h * 2.0;
    let lin = qp.f.transpose() * theta;
    let rhs = qp.rhs(theta);

    // Feasible starting point.
    let mut u = if q == 0 {
        DVector::zeros(nu)
    } else {
        let lp = solve_lp(&DVector::zeros(nu), &qp.g, &rhs);
        match lp.status {
            LpStatus::Optimal => lp.x,
            _ => return Err(QpError::Infeasible),
        }
    };

    let mut working: Vec<usize> = Vec::new();
    let scale = hess.abs().max().max(1.0);
    let max_iter = 50 + 10 * (q + nu);
    for iter in 0..max_iter {
        let grad = &hess * &u + &lin;
        let k = working.len();
        let mut kkt = DMatrix::<f64>::zeros(nu + k, nu + k);
        kkt.view_mut((0, 0), (nu, nu)).copy_from(&hess);
        for (j, &row) in working.iter().enumerate() {
            for c in 0..nu {
                kkt[(nu + j, c)] = qp.g[(row, c)];
                kkt[(c, nu + j)] = qp.g[(row, c)];
            }
        }
        let mut b = DVector::<f64>::zeros(nu + k);
        b.rows_mut(0, nu).copy_from(&(-&grad));
        let sol = kkt.lu().solve(&b).ok_or(QpError::Degenerate)?;
        let step = sol.rows(0, nu).into_owned();

        if step.amax() <= QP_TOL * (1.0 + u.amax()) {
            let lambdas = sol.rows(nu, k).into_owned();
            let most_negative = lambdas
                .iter()
                .enumerate()
                .filter(|(_, v)| **v < -QP_TOL * scale)
                .min_by(|a, b| a.1.total_cmp(b.1).then(working[a.0].cmp(&working[b.0])));
            match most_negative {
                None => {
                    let mut multipliers = DVector::zeros(q);
                    for (j, &row) in working.iter().enumerate() {
                        multipliers[row] = lambdas[j].max(0.0);
                    }
                    let mut active = working.clone();
                    active.sort_unstable();
                    snap_box_rows(&qp.g, &rhs, &active, &mut u);
                    return Ok(QpSolution {
                        u,
                        multipliers,
                        active,
                        iterations: iter,
                    });
                }
                Some((j, _)) => {
                    working.remove(j);
                }
            }
        } else {
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..q {
                if working.contains(&i) {
                    continue;
                }
                let gp = qp.g.row(i).dot(&step.transpose());
                if gp > QP_TOL {
                    let slack = rhs[i] - qp.g.row(i).dot(&u.transpose());
                    let ratio = slack.max(0.0) / gp;
                    if ratio < alpha {
                        alpha = ratio;
                        blocking = Some(i);
                    }
                }
            }
            u += &step * alpha;
            if let Some(i) = blocking {
                working.push(i);
            }
        }
    }
    Err(QpError::IterationLimit)
}

/// Puts active single-variable rows exactly on their bound.
pub(crate) fn snap_box_rows(g: &DMatrix<f64>, rhs: &DVector<f64>, active: &[usize], u: &mut DVector<f64>) {
    for &row in active {
        let coeffs = g.row(row);
        let mut nonzero = coeffs.iter().enumerate().filter(|(_, v)| **v != 0.0);
        if let (Some((col, coef)), None) = (nonzero.next(), nonzero.next()) {
            u[col] = rhs[row] / coef;
        }
    }
}
