//! Luenberger estimator for the augmented (state + disturbance) model.

use alloc::vec::Vec;

use nalgebra::{Complex, DMatrix, DVector};

use crate::augment::{check_offset_free_observability, observability_matrix, AugmentedModel};
use crate::error::{check_dims, ModelError};

/// Estimator gain `Le = [Lx; Ld]`, sized (n+p)×m.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGain {
    pub le: DMatrix<f64>,
    /// Poles assigned to `Ae - Le Ce`.
    pub placed: Vec<Complex<f64>>,
    /// Unobservable modes left at their open-loop location. Empty for a
    /// full-order design.
    pub fixed_modes: Vec<Complex<f64>>,
}

impl ObserverGain {
    pub fn disturbance_gain(&self, aug: &AugmentedModel) -> DMatrix<f64> {
        let r = aug.layout.disturbance_range();
        self.le.rows(r.start, r.len()).into_owned()
    }
}

/// Augmented-state estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub xe_hat: DVector<f64>,
}

impl ObserverState {
    pub fn zeros(aug: &AugmentedModel) -> Self {
        ObserverState {
            xe_hat: DVector::zeros(aug.states()),
        }
    }
}

const CONJUGATE_TOL: f64 = 1e-9;

fn modulus(z: Complex<f64>) -> f64 {
    libm::hypot(z.re, z.im)
}

fn validate_poles(poles: &[Complex<f64>]) -> Result<(), ModelError> {
    let mut used = alloc::vec![false; poles.len()];
    for (i, p) in poles.iter().enumerate() {
        if !p.re.is_finite() || !p.im.is_finite() {
            return Err(ModelError::InvalidPoles("non-finite pole"));
        }
        if modulus(*p) >= 1.0 {
            return Err(ModelError::InvalidPoles("pole on or outside the unit circle"));
        }
        if p.im.abs() <= CONJUGATE_TOL || used[i] {
            continue;
        }
        let partner = (0..poles.len()).find(|&j| {
            j != i && !used[j] && modulus(poles[j] - p.conj()) <= CONJUGATE_TOL
        });
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => return Err(ModelError::InvalidPoles("complex pole without its conjugate")),
        }
    }
    Ok(())
}

/// Monic polynomial coefficients `[1, c1, ..., cn]` with the given roots.
pub fn poly_from_roots(roots: &[Complex<f64>]) -> Vec<f64> {
    let mut coeffs = alloc::vec![Complex::new(1.0, 0.0)];
    for root in roots {
        let mut next = alloc::vec![Complex::new(0.0, 0.0); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k] += c;
            next[k + 1] -= c * root;
        }
        coeffs = next;
    }
    coeffs.into_iter().map(|c| c.re).collect()
}

fn matrix_poly(a: &DMatrix<f64>, coeffs: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    for c in coeffs {
        acc = &acc * a;
        for i in 0..n {
            acc[(i, i)] += c;
        }
    }
    acc
}

/// Ackermann's formula on the dual system, single output only.
fn ackermann(a: &DMatrix<f64>, c: &DMatrix<f64>, poles: &[Complex<f64>]) -> Result<DMatrix<f64>, ModelError> {
    let n = a.nrows();
    let obs = observability_matrix(a, c, n);
    let mut last = DVector::zeros(n);
    last[n - 1] = 1.0;
    let solved = obs
        .lu()
        .solve(&last)
        .ok_or(ModelError::Singular("observability matrix"))?;
    let phi = matrix_poly(a, &poly_from_roots(poles));
    let gain = phi * solved;
    Ok(DMatrix::from_column_slice(n, 1, gain.as_slice()))
}

/// Pole placement for an observable `(Ae, Ce)` pair with one output.
pub fn place_observer_poles(
    aug: &AugmentedModel,
    poles: &[Complex<f64>],
) -> Result<ObserverGain, ModelError> {
    let ne = aug.states();
    if aug.outputs() != 1 {
        return Err(ModelError::Unsupported("multi-output pole placement"));
    }
    if poles.len() != ne {
        return Err(ModelError::InvalidPoles("pole count must equal the augmented state count"));
    }
    validate_poles(poles)?;
    let report = check_offset_free_observability(aug);
    if !report.observable() {
        return Err(ModelError::Unobservable {
            rank: report.rank,
            required: report.required,
        });
    }
    let le = ackermann(&aug.ae, &aug.ce, poles)?;
    Ok(ObserverGain {
        le,
        placed: poles.to_vec(),
        fixed_modes: Vec::new(),
    })
}

/// Pole placement restricted to the observable subspace.
///
/// The state space is split into the row space of the observability matrix
/// and its null space. The null space is `Ae`-invariant and invisible at the
/// output, so in an orthonormal basis `[Vo Vu]` the pair reads
/// `[[Ao, 0], [*, Au]]`, `[Co, 0]`. One pole per observable dimension is
/// placed on `(Ao, Co)`; the modes of `Au` stay where they are.
pub fn place_observable_poles(
    aug: &AugmentedModel,
    poles: &[Complex<f64>],
) -> Result<ObserverGain, ModelError> {
    if aug.outputs() != 1 {
        return Err(ModelError::Unsupported("multi-output pole placement"));
    }
    validate_poles(poles)?;
    let ne = aug.states();
    let report = check_offset_free_observability(aug);
    if poles.len() != report.rank {
        return Err(ModelError::InvalidPoles(
            "pole count must equal the observable subspace dimension",
        ));
    }
    if report.observable() {
        return place_observer_poles(aug, poles);
    }
    if report.rank == 0 {
        return Err(ModelError::Unobservable {
            rank: 0,
            required: ne,
        });
    }

    let obs = observability_matrix(&aug.ae, &aug.ce, ne);
    let svd = obs.svd(false, true);
    let v_t = svd.v_t.ok_or(ModelError::Singular("observability SVD"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    // Right singular vectors beyond the rank complete the basis when the
    // observability matrix has fewer rows than columns (never for m = 1).
    let mut basis = DMatrix::<f64>::zeros(ne, ne);
    for (col, &idx) in order.iter().enumerate() {
        basis.set_column(col, &v_t.row(idx).transpose());
    }
    let r = report.rank;
    let vo = basis.columns(0, r).into_owned();
    let vu = basis.columns(r, ne - r).into_owned();

    let ao = vo.transpose() * &aug.ae * &vo;
    let co = &aug.ce * &vo;
    let au = vu.transpose() * &aug.ae * &vu;
    let lo = ackermann(&ao, &co, poles)?;
    let le = &vo * lo;

    Ok(ObserverGain {
        le,
        placed: poles.to_vec(),
        fixed_modes: au.complex_eigenvalues().iter().copied().collect(),
    })
}

/// Full-order placement when possible, otherwise observable-subspace placement.
pub fn design_observer(
    aug: &AugmentedModel,
    poles: &[Complex<f64>],
) -> Result<ObserverGain, ModelError> {
    if check_offset_free_observability(aug).observable() {
        place_observer_poles(aug, poles)
    } else {
        place_observable_poles(aug, poles)
    }
}

/// `x̂e+ = Ae x̂e + Be u + Le (y - Ce x̂e - De u)`.
pub fn observer_step(
    gain: &ObserverGain,
    aug: &AugmentedModel,
    st: &ObserverState,
    u: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<ObserverState, ModelError> {
    check_dims("estimate", (aug.states(), 1), st.xe_hat.shape())?;
    check_dims("input", (aug.inputs(), 1), u.shape())?;
    check_dims("measurement", (aug.outputs(), 1), y.shape())?;
    check_dims("Le", (aug.states(), aug.outputs()), gain.le.shape())?;
    let y_hat = &aug.ce * &st.xe_hat + &aug.de * u;
    let xe_hat = &aug.ae * &st.xe_hat + &aug.be * u + &gain.le * (y - y_hat);
    Ok(ObserverState { xe_hat })
}

/// Convenience for real pole lists.
pub fn real_poles(values: &[f64]) -> Vec<Complex<f64>> {
    values.iter().map(|&v| Complex::new(v, 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::{augment, DisturbanceModel, StateLayout};
    use crate::motor::{build_ct_model, derive_first_order, discretize_zoh, LtiModel, MotorParams};

    fn motor() -> LtiModel {
        let fom = derive_first_order(&MotorParams::REFERENCE).unwrap();
        discretize_zoh(&build_ct_model(&fom), 1e-3).unwrap()
    }

    /// Position-measured motor with an input disturbance: fully observable.
    fn observable_three_state() -> AugmentedModel {
        let mut plant = motor();
        plant.c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let dist = DisturbanceModel::input(&plant);
        augment(&plant, &dist).unwrap()
    }

    /// Characteristic polynomial by Faddeev-LeVerrier.
    fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        let mut coeffs = alloc::vec![1.0];
        let mut m = DMatrix::<f64>::zeros(n, n);
        let id = DMatrix::<f64>::identity(n, n);
        for k in 1..=n {
            m = a * &m + &id * coeffs[k - 1];
            let am = a * &m;
            coeffs.push(-am.trace() / k as f64);
        }
        coeffs
    }

    #[test]
    fn scalar_ackermann() {
        let aug = AugmentedModel {
            ae: DMatrix::from_element(1, 1, 0.9),
            be: DMatrix::from_element(1, 1, 1.0),
            ce: DMatrix::from_element(1, 1, 1.0),
            de: DMatrix::zeros(1, 1),
            layout: StateLayout {
                plant_states: 1,
                disturbances: 0,
            },
            ts: 1.0,
        };
        let gain = place_observer_poles(&aug, &real_poles(&[0.3])).unwrap();
        assert!((gain.le[(0, 0)] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn full_order_char_poly_matches() {
        let aug = observable_three_state();
        let poles = real_poles(&[0.5, 0.6, 0.7]);
        let gain = place_observer_poles(&aug, &poles).unwrap();
        let closed = &aug.ae - &gain.le * &aug.ce;
        let got = char_poly(&closed);
        let want = [1.0, -1.8, 1.07, -0.21];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-6, "{got:?}");
        }
    }

    #[test]
    fn complex_pair_placement() {
        let aug = observable_three_state();
        let poles = alloc::vec![
            Complex::new(0.4, 0.2),
            Complex::new(0.4, -0.2),
            Complex::new(0.6, 0.0),
        ];
        let gain = place_observer_poles(&aug, &poles).unwrap();
        let got = char_poly(&(&aug.ae - &gain.le * &aug.ce));
        let want = poly_from_roots(&poles);
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-6);
        }
    }

    #[test]
    fn pole_validation() {
        let aug = observable_three_state();
        assert!(matches!(
            place_observer_poles(&aug, &real_poles(&[1.1, 0.5, 0.6])),
            Err(ModelError::InvalidPoles(_))
        ));
        let lonely = alloc::vec![Complex::new(0.2, 0.3), Complex::new(0.5, 0.0), Complex::new(0.1, 0.0)];
        assert!(place_observer_poles(&aug, &lonely).is_err());
        assert!(place_observer_poles(&aug, &real_poles(&[0.5, 0.6])).is_err());
    }

    #[test]
    fn unobservable_pair_rejected_by_full_design() {
        let aug = augment(&motor(), &DisturbanceModel::output(2)).unwrap();
        assert!(matches!(
            place_observer_poles(&aug, &real_poles(&[0.5, 0.6, 0.7])),
            Err(ModelError::Unobservable { rank: 2, required: 3 })
        ));
    }

    #[test]
    fn observable_subspace_design_on_motor() {
        let aug = augment(&motor(), &DisturbanceModel::output(2)).unwrap();
        let gain = place_observable_poles(&aug, &real_poles(&[0.5, 0.6])).unwrap();
        // Position has no output path, so its correction gain vanishes.
        assert!(gain.le[(0, 0)].abs() < 1e-12);
        let got = char_poly(&(&aug.ae - &gain.le * &aug.ce));
        // (z - 1)(z - 0.5)(z - 0.6)
        let want = [1.0, -2.1, 1.4, -0.3];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-6, "{got:?}");
        }
        assert_eq!(gain.fixed_modes.len(), 1);
        assert!(modulus(gain.fixed_modes[0] - Complex::new(1.0, 0.0)) < 1e-9);
    }

    #[test]
    fn zero_innovation_is_pure_propagation() {
        let aug = observable_three_state();
        let gain = place_observer_poles(&aug, &real_poles(&[0.5, 0.6, 0.7])).unwrap();
        let st = ObserverState {
            xe_hat: DVector::from_vec(alloc::vec![0.1, 2.0, -0.5]),
        };
        let u = DVector::from_element(1, 3.0);
        let y = &aug.ce * &st.xe_hat + &aug.de * &u;
        let next = observer_step(&gain, &aug, &st, &u, &y).unwrap();
        assert_eq!(next.xe_hat, &aug.ae * &st.xe_hat + &aug.be * &u);
    }

    #[test]
    fn single_innovation_equals_gain() {
        let aug = observable_three_state();
        let gain = place_observer_poles(&aug, &real_poles(&[0.5, 0.6, 0.7])).unwrap();
        let next = observer_step(
            &gain,
            &aug,
            &ObserverState::zeros(&aug),
            &DVector::zeros(1),
            &DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert_eq!(next.xe_hat, gain.le.column(0).into_owned());
    }

    #[test]
    fn constant_disturbance_is_recovered() {
        let aug = observable_three_state();
        let gain = place_observer_poles(&aug, &real_poles(&[0.5, 0.6, 0.7])).unwrap();
        let mut truth = DVector::from_vec(alloc::vec![0.2, -1.0, 2.5]);
        let mut st = ObserverState::zeros(&aug);
        let u = DVector::zeros(1);
        for _ in 0..500 {
            let y = &aug.ce * &truth;
            st = observer_step(&gain, &aug, &st, &u, &y).unwrap();
            truth = &aug.ae * &truth;
        }
        assert!((st.xe_hat - truth).norm() < 1e-6);
    }

    #[test]
    fn error_decays_geometrically() {
        let aug = observable_three_state();
        let gain = place_observer_poles(&aug, &real_poles(&[0.5, 0.6, 0.7])).unwrap();
        let closed = &aug.ae - &gain.le * &aug.ce;
        let mut e = DVector::from_vec(alloc::vec![1.0, -1.0, 1.0]);
        let e0 = e.norm();
        // Envelope c * (rho + margin)^k with margin for the non-normal transient.
        let mut peak = 0.0f64;
        for k in 1..=200 {
            e = &closed * &e;
            peak = peak.max(e.norm() / (e0 * libm::pow(0.75, k as f64)));
        }
        assert!(peak.is_finite() && peak < 1e6, "{peak}");
        assert!(e.norm() < 1e-20);
    }

    #[test]
    fn dimension_checks() {
        let aug = observable_three_state();
        let gain = place_observer_poles(&aug, &real_poles(&[0.5, 0.6, 0.7])).unwrap();
        let bad = ObserverState {
            xe_hat: DVector::zeros(2),
        };
        assert!(observer_step(&gain, &aug, &bad, &DVector::zeros(1), &DVector::zeros(1)).is_err());
    }
}
