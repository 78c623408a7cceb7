//! Disturbance augmentation for offset-free tracking.
//!
//! The plant state is extended with `p` integrating disturbances that enter
//! the state update through `Bd` and the output through `Cd`:
//!
//! ```text
//! [x+]   [A  Bd] [x]   [B]
//! [d+] = [0  I ] [d] + [0] u,     y = [C  Cd] [x; d] + D u
//! ```

use nalgebra::DMatrix;

use crate::error::{check_dims, ModelError};
use crate::motor::LtiModel;

/// Disturbance coupling matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceModel {
    /// n×p state-path coupling.
    pub bd: DMatrix<f64>,
    /// m×p output-path coupling.
    pub cd: DMatrix<f64>,
}

impl DisturbanceModel {
    pub fn new(bd: DMatrix<f64>, cd: DMatrix<f64>) -> Result<Self, ModelError> {
        if bd.ncols() != cd.ncols() {
            return Err(ModelError::DimensionMismatch {
                what: "Cd",
                expected: (cd.nrows(), bd.ncols()),
                found: cd.shape(),
            });
        }
        if bd.ncols() == 0 {
            return Err(ModelError::InvalidParameter {
                name: "p",
                value: 0.0,
            });
        }
        Ok(DisturbanceModel { bd, cd })
    }

    /// Single output disturbance (`Bd = 0`, `Cd = 1`) for an n-state,
    /// single-output plant.
    pub fn output(n: usize) -> Self {
        DisturbanceModel {
            bd: DMatrix::zeros(n, 1),
            cd: DMatrix::from_element(1, 1, 1.0),
        }
    }

    /// Single input disturbance (`Bd = B`, `Cd = 0`).
    pub fn input(model: &LtiModel) -> Self {
        DisturbanceModel {
            bd: model.b.clone(),
            cd: DMatrix::zeros(model.outputs(), model.inputs()),
        }
    }

    pub fn dim(&self) -> usize {
        self.bd.ncols()
    }
}

/// Index layout of the augmented state vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub plant_states: usize,
    pub disturbances: usize,
}

impl StateLayout {
    pub fn len(&self) -> usize {
        self.plant_states + self.disturbances
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plant_range(&self) -> core::ops::Range<usize> {
        0..self.plant_states
    }

    pub fn disturbance_range(&self) -> core::ops::Range<usize> {
        self.plant_states..self.len()
    }
}

/// Plant plus integrating disturbance model.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    pub ae: DMatrix<f64>,
    pub be: DMatrix<f64>,
    pub ce: DMatrix<f64>,
    pub de: DMatrix<f64>,
    pub layout: StateLayout,
    pub ts: f64,
}

impl AugmentedModel {
    pub fn states(&self) -> usize {
        self.layout.len()
    }

    pub fn inputs(&self) -> usize {
        self.be.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.ce.nrows()
    }
}

pub fn augment(model: &LtiModel, dist: &DisturbanceModel) -> Result<AugmentedModel, ModelError> {
    let (n, l, m) = (model.states(), model.inputs(), model.outputs());
    let p = dist.dim();
    check_dims("Bd", (n, p), dist.bd.shape())?;
    check_dims("Cd", (m, p), dist.cd.shape())?;

    let mut ae = DMatrix::zeros(n + p, n + p);
    ae.view_mut((0, 0), (n, n)).copy_from(&model.a);
    ae.view_mut((0, n), (n, p)).copy_from(&dist.bd);
    ae.view_mut((n, n), (p, p)).fill_with_identity();

    let mut be = DMatrix::zeros(n + p, l);
    be.view_mut((0, 0), (n, l)).copy_from(&model.b);

    let mut ce = DMatrix::zeros(m, n + p);
    ce.view_mut((0, 0), (m, n)).copy_from(&model.c);
    ce.view_mut((0, n), (m, p)).copy_from(&dist.cd);

    Ok(AugmentedModel {
        ae,
        be,
        ce,
        de: model.d.clone(),
        layout: StateLayout {
            plant_states: n,
            disturbances: p,
        },
        ts: model.ts,
    })
}

/// Observability matrix `[C; C A; ...; C A^(k-1)]` for `k` block rows.
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (m, n) = c.shape();
    let mut out = DMatrix::zeros(m * k, n);
    let mut block = c.clone();
    for i in 0..k {
        out.view_mut((i * m, 0), (m, n)).copy_from(&block);
        block = &block * a;
    }
    out
}

/// Numerical rank with a tolerance relative to the largest singular value.
pub(crate) fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let svd = m.clone().svd(false, false);
    let largest = svd.singular_values.max();
    if largest == 0.0 {
        return 0;
    }
    let tol = largest * f64::EPSILON * m.nrows().max(m.ncols()) as f64 * 16.0;
    svd.singular_values.iter().filter(|s| **s > tol).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObservabilityReport {
    pub rank: usize,
    pub required: usize,
}

impl ObservabilityReport {
    pub fn observable(&self) -> bool {
        self.rank == self.required
    }
}

/// Rank test of `(Ae, Ce)`; full column rank is needed for every plant
/// state and every disturbance to be reconstructible from the outputs.
pub fn check_offset_free_observability(aug: &AugmentedModel) -> ObservabilityReport {
    let ne = aug.states();
    let o = observability_matrix(&aug.ae, &aug.ce, ne);
    ObservabilityReport {
        rank: numerical_rank(&o),
        required: ne,
    }
}
