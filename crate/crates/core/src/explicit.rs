//! Offline solution of the condensed mp-QP by active-set enumeration.
//!
//! Every subset of constraint rows with at most `l·N` members and linearly
//! independent rows is a candidate optimal active set. For each candidate
//! the equality-constrained KKT system gives the input sequence and the
//! multipliers as affine functions of the parameter; the critical region is
//! where the remaining rows hold and the multipliers are non-negative.
//! Candidates whose region has no interior are discarded.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::numerical_rank;
use crate::condense::{solve_qp_online, MpQp, ParamLayout};
use crate::error::ModelError;
use crate::polyhedra::{solve_lp, LpStatus, Polyhedron};
use crate::runtime::ControlLaw;

/// Region interiors are searched for inside `|θ_j| <= REGION_BOX`; pieces
/// that only exist beyond it are dropped.
pub const REGION_BOX: f64 = 1e4;

const DEGENERATE_TOL: f64 = 1e-10;

/// One polyhedral piece of the explicit law.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalRegion {
    /// Normalized, irredundant description of the region.
    pub region: Polyhedron,
    /// First-move gain, l×dim.
    pub gain: DMatrix<f64>,
    /// First-move offset, length l.
    pub offset: DVector<f64>,
    /// Sorted indices of the active constraint rows.
    pub active_set: Vec<usize>,
    /// Whole optimal sequence `U = sequence_gain θ + sequence_offset`.
    pub sequence_gain: DMatrix<f64>,
    pub sequence_offset: DVector<f64>,
    /// Multipliers of the active rows, same order as `active_set`.
    pub multiplier_gain: DMatrix<f64>,
    pub multiplier_offset: DVector<f64>,
    pub center: DVector<f64>,
    pub radius: f64,
}

impl CriticalRegion {
    pub fn halfspaces(&self) -> usize {
        self.region.rows()
    }

    pub fn first_move(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.gain * theta + &self.offset
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnumerationStats {
    pub candidates: usize,
    /// Candidate sets skipped because their rows are linearly dependent.
    pub licq_skipped: Vec<Vec<usize>>,
    /// Candidate sets whose region has no interior.
    pub empty: usize,
    /// Candidate sets with an identically zero multiplier.
    pub weakly_active: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LawMeta {
    pub horizon: usize,
    pub constraints: usize,
    pub layout: ParamLayout,
    pub stats: EnumerationStats,
}

/// Piecewise-affine feedback `u = F_i θ + g_i` for `θ` in region `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaLaw {
    pub regions: Vec<CriticalRegion>,
    pub dim: usize,
    pub inputs: usize,
    pub meta: LawMeta,
}

impl PwaLaw {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn total_halfspaces(&self) -> usize {
        self.regions.iter().map(|r| r.halfspaces()).sum()
    }
}

/// All subsets of `0..q` of size at most `max_size`, by size and then
/// lexicographically.
fn candidate_sets(q: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for size in 1..=max_size.min(q) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.clone());
            // advance to next combination
            let mut i = size;
            while i > 0 && idx[i - 1] == q - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for k in i..size {
                idx[k] = idx[k - 1] + 1;
            }
        }
    }
    out
}

fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Enumerate the critical regions of `qp`.
pub fn solve_mpqp(qp: &MpQp) -> Result<PwaLaw, ModelError> {
    let nu = qp.decision_len();
    let dim = qp.dim();
    let q = qp.constraints();
    let l = qp.inputs;
    let h_inv = qp
        .h
        .clone()
        .cholesky()
        .ok_or(ModelError::NotDefinite { name: "H" })?
        .inverse();
    let ft = qp.f.transpose();

    let mut stats = EnumerationStats::default();
    let mut regions = Vec::new();
    for active in candidate_sets(q, nu) {
        stats.candidates += 1;
        let k = active.len();
        let g_a = select_rows(&qp.g, &active);
        if k > 0 && numerical_rank(&g_a) < k {
            log::debug!("skipping active set {:?}: dependent rows", active);
            stats.licq_skipped.push(active);
            continue;
        }
        let w_a = DVector::from_fn(k, |i, _| qp.w[active[i]]);
        let wp_a = select_rows(&qp.w_param, &active);

        let (mult_gain, mult_offset) = if k == 0 {
            (DMatrix::zeros(0, dim), DVector::zeros(0))
        } else {
            let s = &g_a * &h_inv * g_a.transpose();
            let s_lu = s.lu();
            let rhs = &wp_a * 2.0 + &g_a * &h_inv * &ft;
            let gain = -s_lu.solve(&rhs).ok_or(ModelError::Singular("active-set Schur complement"))?;
            let offset = -s_lu
                .solve(&(&w_a * 2.0))
                .ok_or(ModelError::Singular("active-set Schur complement"))?;
            (gain, offset)
        };
        // A row whose multiplier vanishes for every θ is weakly active
        // everywhere; the smaller set already yields the same region.
        let scale = 1.0 + mult_gain.amax().max(mult_offset.amax());
        let vanishing = (0..k).any(|j| {
            mult_gain.row(j).amax().max(mult_offset[j].abs()) <= DEGENERATE_TOL * scale
        });
        if vanishing {
            stats.weakly_active += 1;
            continue;
        }
        let mut seq_gain = -(&h_inv * (&ft + g_a.transpose() * &mult_gain)) * 0.5;
        let mut seq_offset = -(&h_inv * (g_a.transpose() * &mult_offset)) * 0.5;

        // A bound row touching a single variable pins it exactly.
        for (j, &row) in active.iter().enumerate() {
            let nz: Vec<usize> = (0..nu).filter(|&c| qp.g[(row, c)] != 0.0).collect();
            if nz.len() == 1 {
                let c = nz[0];
                let coef = qp.g[(row, c)];
                seq_gain.set_row(c, &(wp_a.row(j) / coef));
                seq_offset[c] = w_a[j] / coef;
            }
        }

        // Region rows: inactive constraints, then multiplier signs.
        let inactive: Vec<usize> = (0..q).filter(|i| !active.contains(i)).collect();
        let rows = inactive.len() + k;
        let mut a = DMatrix::zeros(rows, dim);
        let mut b = DVector::zeros(rows);
        for (r, &i) in inactive.iter().enumerate() {
            let gi = qp.g.row(i);
            a.set_row(r, &(gi * &seq_gain - qp.w_param.row(i)));
            b[r] = qp.w[i] - (gi * &seq_offset)[0];
        }
        for j in 0..k {
            a.set_row(inactive.len() + j, &(-mult_gain.row(j)));
            b[inactive.len() + j] = mult_offset[j];
        }
        // Rows that vanish up to roundoff (e.g. a weakly active bound left
        // inactive) would otherwise normalize into arbitrary hyperplanes.
        let row_scale = 1.0
            + seq_gain
                .amax()
                .max(seq_offset.amax())
                .max(mult_gain.amax())
                .max(mult_offset.amax())
                .max(qp.w.amax())
                .max(qp.w_param.amax());
        for r in 0..rows {
            if a.row(r).amax() <= DEGENERATE_TOL * row_scale {
                a.row_mut(r).fill(0.0);
                if b[r].abs() <= DEGENERATE_TOL * row_scale {
                    b[r] = 0.0;
                }
            }
        }
        let raw = Polyhedron { a, b }.normalized();
        let ball = raw.chebyshev_within(REGION_BOX, REGION_BOX);
        if !ball.is_full_dimensional() {
            stats.empty += 1;
            continue;
        }
        let region = raw.remove_redundant().map_err(|_| ModelError::Singular("region"))?;

        regions.push(CriticalRegion {
            gain: seq_gain.rows(0, l).into_owned(),
            offset: seq_offset.rows(0, l).into_owned(),
            region,
            active_set: active,
            sequence_gain: seq_gain,
            sequence_offset: seq_offset,
            multiplier_gain: mult_gain,
            multiplier_offset: mult_offset,
            center: ball.center,
            radius: ball.radius,
        });
    }

    // Larger active sets first: near a bound facet the first match is the
    // piece that pins the input exactly on the bound.
    regions.sort_by_key(|r| core::cmp::Reverse(r.active_set.len()));

    Ok(PwaLaw {
        regions,
        dim,
        inputs: l,
        meta: LawMeta {
            horizon: qp.horizon,
            constraints: q,
            layout: qp.layout,
            stats,
        },
    })
}

/// Axis-aligned sampling box over the parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl SamplingBox {
    /// States in ±50, disturbances in ±10, previous input within its bounds,
    /// reference in [0, 50].
    pub fn standard(layout: &ParamLayout, u_min: &[f64], u_max: &[f64]) -> Self {
        let mut lower = Vec::with_capacity(layout.dim());
        let mut upper = Vec::with_capacity(layout.dim());
        for i in 0..layout.states {
            let bound = if i < layout.plant_states { 50.0 } else { 10.0 };
            lower.push(-bound);
            upper.push(bound);
        }
        lower.extend_from_slice(u_min);
        upper.extend_from_slice(u_max);
        for _ in 0..layout.outputs {
            lower.push(0.0);
            upper.push(50.0);
        }
        SamplingBox { lower, upper }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(self.lower.len(), |i, _| {
            if self.upper[i] > self.lower[i] {
                rng.gen_range(self.lower[i]..self.upper[i])
            } else {
                self.lower[i]
            }
        })
    }
}

/// Worst KKT residuals over all region centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal: f64,
    pub min_multiplier: f64,
}

pub fn certify_kkt(law: &PwaLaw, qp: &MpQp) -> KktReport {
    let mut report = KktReport {
        stationarity: 0.0,
        primal: 0.0,
        min_multiplier: f64::INFINITY,
    };
    for region in &law.regions {
        let theta = &region.center;
        let u = &region.sequence_gain * theta + &region.sequence_offset;
        let lambda = &region.multiplier_gain * theta + &region.multiplier_offset;
        let mut grad = &qp.h * &u * 2.0 + qp.f.transpose() * theta;
        for (j, &row) in region.active_set.iter().enumerate() {
            grad += qp.g.row(row).transpose() * lambda[j];
        }
        report.stationarity = report.stationarity.max(grad.amax());
        let slack = qp.rhs(theta) - &qp.g * &u;
        for i in 0..qp.constraints() {
            let viol = if region.active_set.contains(&i) {
                slack[i].abs()
            } else {
                (-slack[i]).max(0.0)
            };
            report.primal = report.primal.max(viol);
        }
        for v in lambda.iter() {
            report.min_multiplier = report.min_multiplier.min(*v);
        }
    }
    report
}

/// Pairs of regions whose descriptions carry the same hyperplane with
/// opposite orientation: `(i, row in i, j, row in j)`.
pub fn shared_facets(law: &PwaLaw) -> Vec<(usize, usize, usize, usize)> {
    const MATCH_TOL: f64 = 1e-9;
    let mut out = Vec::new();
    for i in 0..law.len() {
        let ri = &law.regions[i].region;
        for j in i + 1..law.len() {
            let rj = &law.regions[j].region;
            for fi in 0..ri.rows() {
                for fj in 0..rj.rows() {
                    let normal_gap = (ri.a.row(fi) + rj.a.row(fj)).amax();
                    if normal_gap <= MATCH_TOL && (ri.b[fi] + rj.b[fj]).abs() <= MATCH_TOL * (1.0 + ri.b[fi].abs()) {
                        out.push((i, fi, j, fj));
                    }
                }
            }
        }
    }
    out
}

/// Largest inscribed ball of the common facet, measured inside the facet
/// hyperplane. `None` when the two regions only touch in lower dimension.
fn facet_ball(law: &PwaLaw, facet: (usize, usize, usize, usize)) -> Option<(DVector<f64>, f64)> {
    let (i, fi, j, fj) = facet;
    let ri = &law.regions[i].region;
    let rj = &law.regions[j].region;
    let d = law.dim;
    let normal = ri.a.row(fi).transpose();
    let level = ri.b[fi];

    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for k in (0..ri.rows()).filter(|&k| k != fi) {
        rows.push((ri.a.row(k).transpose(), ri.b[k]));
    }
    for k in (0..rj.rows()).filter(|&k| k != fj) {
        rows.push((rj.a.row(k).transpose(), rj.b[k]));
    }
    let m = rows.len() + 3;
    let mut a = DMatrix::zeros(m, d + 1);
    let mut b = DVector::zeros(m);
    for (r, (row, rhs)) in rows.iter().enumerate() {
        let projected = row - &normal * normal.dot(row);
        for c in 0..d {
            a[(r, c)] = row[c];
        }
        a[(r, d)] = projected.norm();
        b[r] = *rhs;
    }
    let base = rows.len();
    for c in 0..d {
        a[(base, c)] = normal[c];
        a[(base + 1, c)] = -normal[c];
    }
    b[base] = level;
    b[base + 1] = -level;
    a[(base + 2, d)] = 1.0;
    b[base + 2] = 1.0;
    let mut cost = DVector::zeros(d + 1);
    cost[d] = -1.0;
    let lp = solve_lp(&cost, &a, &b);
    if lp.status != LpStatus::Optimal || lp.x[d] <= 1e-9 {
        return None;
    }
    Some((lp.x.rows(0, d).into_owned(), lp.x[d]))
}

/// Largest first-move disagreement between neighbouring laws, sampled on
/// each shared facet. Returns `(max gap, facets checked)`.
pub fn facet_continuity(law: &PwaLaw, samples_per_facet: usize, seed: u64) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for facet in shared_facets(law) {
        let Some((center, radius)) = facet_ball(law, facet) else {
            continue;
        };
        checked += 1;
        let normal = law.regions[facet.0].region.a.row(facet.1).transpose();
        let (ri, rj) = (&law.regions[facet.0], &law.regions[facet.2]);
        for s in 0..samples_per_facet {
            let point = if s == 0 {
                center.clone()
            } else {
                let raw = DVector::from_fn(law.dim, |_, _| rng.gen_range(-1.0..1.0));
                let mut dir = &raw - &normal * normal.dot(&raw);
                let n = dir.norm();
                if n > 0.0 {
                    dir /= n;
                }
                &center + dir * (0.9 * radius)
            };
            let gap = (ri.first_move(&point) - rj.first_move(&point)).amax();
            worst = worst.max(gap);
        }
    }
    (worst, checked)
}

/// Sampled agreement between the explicit law and the online QP.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub samples: usize,
    pub covered: usize,
    pub coverage: f64,
    pub max_deviation: f64,
    pub continuity_gap: f64,
    pub facets_checked: usize,
    pub kkt: KktReport,
    pub qp_failures: usize,
}

pub fn validate_law(
    law: &PwaLaw,
    qp: &MpQp,
    n_samples: usize,
    sampling: &SamplingBox,
    seed: u64,
) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covered = 0;
    let mut max_deviation = 0.0f64;
    let mut qp_failures = 0;
    let mut u = vec![0.0; law.inputs];
    for _ in 0..n_samples {
        let theta = sampling.sample(&mut rng);
        if law.evaluate(theta.as_slice(), &mut u).is_err() {
            continue;
        }
        covered += 1;
        match solve_qp_online(qp, &theta) {
            Ok(sol) => {
                for (k, value) in u.iter().enumerate() {
                    max_deviation = max_deviation.max((value - sol.u[k]).abs());
                }
            }
            Err(_) => qp_failures += 1,
        }
    }
    let (continuity_gap, facets_checked) = facet_continuity(law, 10, seed ^ 0x5eed);
    ValidationReport {
        samples: n_samples,
        covered,
        coverage: if n_samples == 0 { 1.0 } else { covered as f64 / n_samples as f64 },
        max_deviation,
        continuity_gap,
        facets_checked,
        kkt: certify_kkt(law, qp),
        qp_failures,
    }
}
