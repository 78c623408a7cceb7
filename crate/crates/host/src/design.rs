//! Config → plant → augmented model → observer → mp-QP → explicit law.

use std::fmt::Write;

use empc_core::augment::{augment, check_offset_free_observability, AugmentedModel};
use empc_core::condense::{condense, MpQp, ParamLayout};
use empc_core::explicit::{solve_mpqp, validate_law, PwaLaw, SamplingBox, ValidationReport};
use empc_core::harness::LoopSetup;
use empc_core::motor::{build_ct_model, derive_first_order, discretize_zoh, LtiModel};
use empc_core::observer::{design_observer, ObserverGain};
use empc_core::runtime::{memory_footprint, ControlLaw, Footprint, ScalarWidth, CODE_ALLOWANCE_BYTES};
use empc_core::ModelError;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::ProjectConfig;

#[derive(Debug, Error, PartialEq)]
#[error("{stage} stage failed")]
pub struct StageError {
    pub stage: &'static str,
    pub source: ModelError,
}

fn stage<T>(name: &'static str, r: Result<T, ModelError>) -> Result<T, StageError> {
    r.map_err(|source| StageError { stage: name, source })
}

/// Everything the loop needs apart from the controller.
#[derive(Debug, Clone)]
pub struct LoopModel {
    pub plant: LtiModel,
    pub aug: AugmentedModel,
    pub observer: ObserverGain,
    pub u_min: f64,
    pub u_max: f64,
}

impl LoopModel {
    pub fn build(cfg: &ProjectConfig) -> Result<Self, StageError> {
        let fom = stage("derive", derive_first_order(&cfg.motor))?;
        let plant = stage("discretize", discretize_zoh(&build_ct_model(&fom), cfg.ts))?;
        let dist = cfg.disturbance();
        let aug = stage("augment", augment(&plant, &dist))?;
        let observer = stage("observer", design_observer(&aug, &cfg.observer_poles))?;
        Ok(LoopModel {
            plant,
            aug,
            observer,
            u_min: cfg.u_min,
            u_max: cfg.u_max,
        })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout {
            states: self.aug.states(),
            plant_states: self.plant.states(),
            inputs: self.plant.inputs(),
            outputs: self.plant.outputs(),
        }
    }

    pub fn setup(&self) -> LoopSetup<'_> {
        LoopSetup {
            plant: &self.plant,
            aug: &self.aug,
            observer: &self.observer,
            layout: self.layout(),
            u_min: self.u_min,
            u_max: self.u_max,
            x0: DVector::zeros(self.plant.states()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Design {
    pub model: LoopModel,
    pub qp: MpQp,
    pub law: PwaLaw,
    pub validation: ValidationReport,
    /// Largest number of half-space tests seen over the validation samples.
    pub measured_dot_products: usize,
}

pub fn run_design(cfg: &ProjectConfig) -> Result<Design, StageError> {
    let model = LoopModel::build(cfg)?;
    let qp = stage("condense", condense(&model.aug, &cfg.mpc_spec()))?;
    let law = stage("enumerate", solve_mpqp(&qp))?;
    let sampling = SamplingBox::standard(&qp.layout, &[cfg.u_min], &[cfg.u_max]);
    let validation = validate_law(&law, &qp, cfg.validation_samples, &sampling, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut measured_dot_products = 0;
    let mut u = vec![0.0; law.inputs];
    for _ in 0..cfg.validation_samples {
        let theta = sampling.sample(&mut rng);
        let mut count = 0;
        let _ = law.evaluate_counted(theta.as_slice(), &mut u, &mut count);
        measured_dot_products = measured_dot_products.max(count);
    }
    Ok(Design {
        model,
        qp,
        law,
        validation,
        measured_dot_products,
    })
}

pub fn footprint_lines(out: &mut String, fp: &Footprint) {
    let _ = writeln!(
        out,
        "footprint at {}-byte scalars: normals {} + offsets {} + gains {} + gain offsets {} + index {} = {} table bytes",
        fp.scalar_width,
        fp.region_normals,
        fp.region_offsets,
        fp.gains,
        fp.gain_offsets,
        fp.index,
        fp.table_bytes()
    );
    let _ = writeln!(
        out,
        "  with {CODE_ALLOWANCE_BYTES} B estimated search/framing code: {} bytes",
        fp.with_code_allowance()
    );
}

pub fn design_report(cfg: &ProjectConfig, d: &Design) -> String {
    let mut out = String::new();
    let obs = check_offset_free_observability(&d.model.aug);
    let _ = writeln!(out, "horizon N = {}, Ts = {} s, Q = {}, R = {}, {} <= u <= {}", cfg.horizon, cfg.ts, cfg.q, cfg.r, cfg.u_min, cfg.u_max);
    let _ = writeln!(
        out,
        "augmented states {} (plant {}, disturbance {}), observability rank {}/{}",
        d.model.aug.states(),
        d.model.plant.states(),
        cfg.p,
        obs.rank,
        obs.required
    );
    let fmt_poles = |p: &[nalgebra::Complex<f64>]| {
        p.iter()
            .map(|z| if z.im == 0.0 { format!("{:.6}", z.re) } else { format!("{:.6}{:+.6}j", z.re, z.im) })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let _ = writeln!(out, "observer poles placed: {}", fmt_poles(&d.model.observer.placed));
    if !d.model.observer.fixed_modes.is_empty() {
        let _ = writeln!(out, "unobservable modes kept: {}", fmt_poles(&d.model.observer.fixed_modes));
    }
    let stats = &d.law.meta.stats;
    let _ = writeln!(
        out,
        "candidates {}, LICQ skipped {}, empty {}, weakly active {}",
        stats.candidates,
        stats.licq_skipped.len(),
        stats.empty,
        stats.weakly_active
    );
    let _ = writeln!(out, "regions M = {}", d.law.len());
    let h: Vec<String> = d.law.regions.iter().map(|r| r.halfspaces().to_string()).collect();
    let _ = writeln!(out, "half-spaces per region: {}", h.join(" "));
    for (i, r) in d.law.regions.iter().enumerate() {
        let _ = writeln!(out, "  region {i}: active set {:?}, radius {:.3e}", r.active_set, r.radius);
    }
    let _ = writeln!(
        out,
        "total half-spaces {}, worst-case dot products per evaluation {} (measured max {})",
        d.law.total_halfspaces(),
        d.law.total_halfspaces(),
        d.measured_dot_products
    );
    for w in [ScalarWidth::Four, ScalarWidth::Eight] {
        footprint_lines(&mut out, &memory_footprint(&d.law, w));
    }
    let v = &d.validation;
    let _ = writeln!(
        out,
        "validation: {} samples, coverage {:.6}, max |u_explicit - u_qp| {:.3e}, QP failures {}",
        v.samples, v.coverage, v.max_deviation, v.qp_failures
    );
    let _ = writeln!(out, "continuity: max facet gap {:.3e} over {} facets", v.continuity_gap, v.facets_checked);
    let _ = writeln!(
        out,
        "KKT: stationarity {:.3e}, primal {:.3e}, min multiplier {:.3e}",
        v.kkt.stationarity, v.kkt.primal, v.kkt.min_multiplier
    );
    out
}
