//! H-polyhedra `{x : A x <= b}` and the dense simplex kernel behind them.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

/// Feasibility tolerance shared by the LP kernel and set tests.
pub const FEAS_TOL: f64 = 1e-9;
/// Chebyshev radius below which a set is treated as lower dimensional.
pub const FULL_DIM_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimizer; zero-length unless `status` is `Optimal`.
    pub x: DVector<f64>,
    pub value: f64,
}

impl LpSolution {
    fn failed(status: LpStatus) -> Self {
        LpSolution {
            status,
            x: DVector::zeros(0),
            value: f64::NAN,
        }
    }
}

const PIVOT_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

/// Dense tableau. Row `rows` holds the objective (reduced costs), the last
/// column holds the right-hand side.
struct Tableau {
    cells: Vec<f64>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
}

impl Tableau {
    fn width(&self) -> usize {
        self.cols + 1
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.width() + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width();
        let p = self.at(pr, pc);
        for c in 0..w {
            self.cells[pr * w + c] /= p;
        }
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let factor = self.cells[r * w + pc];
            if factor == 0.0 {
                continue;
            }
            for c in 0..w {
                let v = self.cells[pr * w + c];
                self.cells[r * w + c] -= factor * v;
            }
            self.cells[r * w + pc] = 0.0;
        }
        self.basis[pr] = pc;
    }

    /// Load `cost` into the objective row and price out the basis.
    fn set_objective(&mut self, cost: &[f64]) {
        let w = self.width();
        let obj = self.rows * w;
        for c in 0..w {
            self.cells[obj + c] = if c < self.cols { cost[c] } else { 0.0 };
        }
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for c in 0..w {
                    let v = self.cells[r * w + c];
                    self.cells[obj + c] -= cb * v;
                }
            }
        }
    }

    /// Bland's rule iterations on columns where `allowed[c]` holds.
    fn run(&mut self, allowed: &[bool]) -> LpStatus {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.cols).find(|&c| allowed[c] && self.at(self.rows, c) < -PIVOT_TOL);
            let Some(pc) = entering else {
                return LpStatus::Optimal;
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, pc);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(r) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - PIVOT_TOL
                                || (ratio <= bv + PIVOT_TOL && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                None => return LpStatus::Unbounded,
                Some((pr, _)) => self.pivot(pr, pc),
            }
        }
        LpStatus::IterationLimit
    }
}

/// Minimize `c'x` subject to `A x <= b` with `x` free.
///
/// Two-phase dense simplex over `x = x+ - x-` with slack and artificial
/// columns; Bland's rule makes the pivot sequence deterministic and
/// cycle-free.
pub fn solve_lp(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> LpSolution {
    let (m, n) = a.shape();
    assert_eq!(c.len(), n, "objective length");
    assert_eq!(b.len(), m, "rhs length");
    if c.iter().chain(a.iter()).chain(b.iter()).any(|v| !v.is_finite()) {
        return LpSolution::failed(LpStatus::Infeasible);
    }

    let flipped: Vec<bool> = b.iter().map(|v| *v < 0.0).collect();
    let n_art = flipped.iter().filter(|f| **f).count();
    let cols = 2 * n + m + n_art;
    let mut tab = Tableau {
        cells: vec![0.0; (m + 1) * (cols + 1)],
        rows: m,
        cols,
        basis: vec![0; m],
    };
    let w = cols + 1;
    let mut art = 2 * n + m;
    for r in 0..m {
        let sign = if flipped[r] { -1.0 } else { 1.0 };
        for j in 0..n {
            tab.cells[r * w + j] = sign * a[(r, j)];
            tab.cells[r * w + n + j] = -sign * a[(r, j)];
        }
        tab.cells[r * w + 2 * n + r] = sign;
        tab.cells[r * w + cols] = sign * b[r];
        if flipped[r] {
            tab.cells[r * w + art] = 1.0;
            tab.basis[r] = art;
            art += 1;
        } else {
            tab.basis[r] = 2 * n + r;
        }
    }

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for v in phase1.iter_mut().skip(2 * n + m) {
            *v = 1.0;
        }
        tab.set_objective(&phase1);
        let status = tab.run(&vec![true; cols]);
        if status == LpStatus::IterationLimit {
            return LpSolution::failed(status);
        }
        let infeasibility: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= 2 * n + m)
            .map(|r| tab.rhs(r))
            .sum();
        let scale = 1.0 + b.amax();
        if infeasibility > FEAS_TOL * scale {
            return LpSolution::failed(LpStatus::Infeasible);
        }
        // Drive remaining (zero-level) artificials out of the basis.
        for r in 0..m {
            if tab.basis[r] >= 2 * n + m {
                if let Some(pc) = (0..2 * n + m).find(|&c| tab.at(r, c).abs() > PIVOT_TOL) {
                    tab.pivot(r, pc);
                }
            }
        }
    }

    let mut phase2 = vec![0.0; cols];
    for j in 0..n {
        phase2[j] = c[j];
        phase2[n + j] = -c[j];
    }
    tab.set_objective(&phase2);
    let allowed: Vec<bool> = (0..cols).map(|c| c < 2 * n + m).collect();
    let status = tab.run(&allowed);
    if status != LpStatus::Optimal {
        return LpSolution::failed(status);
    }

    let mut z = vec![0.0; cols];
    for r in 0..m {
        z[tab.basis[r]] = tab.rhs(r);
    }
    let x = DVector::from_fn(n, |j, _| z[j] - z[n + j]);
    let value = c.dot(&x);
    LpSolution {
        status: LpStatus::Optimal,
        x,
        value,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyError {
    Empty,
    Dimension { expected: usize, found: usize },
}

impl core::fmt::Display for PolyError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PolyError::Empty => f.write_str("polyhedron is empty"),
            PolyError::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PolyError {}

/// `{x : a x <= b}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Largest inscribed ball. `radius` is `+inf` when the set contains
/// arbitrarily large balls and `-inf` when it is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevBall {
    pub center: DVector<f64>,
    pub radius: f64,
}

impl ChebyshevBall {
    pub fn is_full_dimensional(&self) -> bool {
        self.radius > FULL_DIM_TOL
    }
}

impl Polyhedron {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, PolyError> {
        if a.nrows() != b.len() {
            return Err(PolyError::Dimension {
                expected: a.nrows(),
                found: b.len(),
            });
        }
        Ok(Polyhedron { a, b })
    }

    /// Whole space `R^dim`.
    pub fn universe(dim: usize) -> Self {
        Polyhedron {
            a: DMatrix::zeros(0, dim),
            b: DVector::zeros(0),
        }
    }

    /// Axis-aligned box.
    pub fn boxed(lower: &[f64], upper: &[f64]) -> Self {
        let d = lower.len();
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for i in 0..d {
            a[(i, i)] = 1.0;
            b[i] = upper[i];
            a[(d + i, i)] = -1.0;
            b[d + i] = -lower[i];
        }
        Polyhedron { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// Scale each row to unit Euclidean norm. Zero rows that every point
    /// satisfies are dropped; violated zero rows are kept so the set stays
    /// empty.
    pub fn normalized(&self) -> Polyhedron {
        let mut keep = Vec::new();
        for i in 0..self.rows() {
            let norm = self.a.row(i).norm();
            if norm > 0.0 {
                keep.push((i, norm));
            } else if self.b[i] < -FEAS_TOL {
                keep.push((i, 1.0));
            }
        }
        let dim = self.dim();
        let mut a = DMatrix::zeros(keep.len(), dim);
        let mut b = DVector::zeros(keep.len());
        for (k, &(i, norm)) in keep.iter().enumerate() {
            for j in 0..dim {
                a[(k, j)] = self.a[(i, j)] / norm;
            }
            b[k] = self.b[i] / norm;
        }
        Polyhedron { a, b }
    }

    /// Stack the rows of both sets.
    pub fn intersect(&self, other: &Polyhedron) -> Polyhedron {
        let dim = self.dim();
        let (h1, h2) = (self.rows(), other.rows());
        let mut a = DMatrix::zeros(h1 + h2, dim);
        a.view_mut((0, 0), (h1, dim)).copy_from(&self.a);
        a.view_mut((h1, 0), (h2, dim)).copy_from(&other.a);
        let mut b = DVector::zeros(h1 + h2);
        b.rows_mut(0, h1).copy_from(&self.b);
        b.rows_mut(h1, h2).copy_from(&other.b);
        Polyhedron { a, b }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool, PolyError> {
        if x.len() != self.dim() {
            return Err(PolyError::Dimension {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok((0..self.rows()).all(|i| self.a.row(i).transpose().dot(x) <= self.b[i] + tol))
    }

    /// Largest row violation `max_i (a_i x - b_i)`, negative inside.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.rows())
            .map(|i| self.a.row(i).transpose().dot(x) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn chebyshev_lp(&self, radius_cap: Option<f64>) -> LpSolution {
        let (h, d) = (self.rows(), self.dim());
        let extra = usize::from(radius_cap.is_some());
        let mut a = DMatrix::zeros(h + extra, d + 1);
        let mut b = DVector::zeros(h + extra);
        for i in 0..h {
            for j in 0..d {
                a[(i, j)] = self.a[(i, j)];
            }
            a[(i, d)] = self.a.row(i).norm();
            b[i] = self.b[i];
        }
        if let Some(cap) = radius_cap {
            a[(h, d)] = 1.0;
            b[h] = cap;
        }
        let mut c = DVector::zeros(d + 1);
        c[d] = -1.0;
        solve_lp(&c, &a, &b)
    }

    pub fn chebyshev(&self) -> ChebyshevBall {
        let d = self.dim();
        let lp = self.chebyshev_lp(None);
        match lp.status {
            LpStatus::Optimal => ChebyshevBall {
                center: lp.x.rows(0, d).into_owned(),
                radius: lp.x[d],
            },
            LpStatus::Unbounded => {
                let capped = self.chebyshev_lp(Some(1.0));
                let center = if capped.status == LpStatus::Optimal {
                    capped.x.rows(0, d).into_owned()
                } else {
                    DVector::zeros(d)
                };
                ChebyshevBall {
                    center,
                    radius: f64::INFINITY,
                }
            }
            _ => ChebyshevBall {
                center: DVector::zeros(d),
                radius: f64::NEG_INFINITY,
            },
        }
    }

    /// Inscribed ball with its radius capped, always yielding a finite center.
    pub fn chebyshev_capped(&self, cap: f64) -> ChebyshevBall {
        let d = self.dim();
        let lp = self.chebyshev_lp(Some(cap));
        match lp.status {
            LpStatus::Optimal => ChebyshevBall {
                center: lp.x.rows(0, d).into_owned(),
                radius: lp.x[d],
            },
            _ => ChebyshevBall {
                center: DVector::zeros(d),
                radius: f64::NEG_INFINITY,
            },
        }
    }

    /// Largest ball inside the set intersected with the box `|x_j| <= bound`,
    /// radius capped at `cap`. Keeps the LP well scaled on unbounded sets.
    pub fn chebyshev_within(&self, bound: f64, cap: f64) -> ChebyshevBall {
        let d = self.dim();
        let mut lower = vec![-bound; d];
        let upper = vec![bound; d];
        lower.truncate(d);
        self.intersect(&Polyhedron::boxed(&lower, &upper)).chebyshev_capped(cap)
    }

    pub fn is_empty(&self) -> bool {
        let lp = solve_lp(&DVector::zeros(self.dim()), &self.a, &self.b);
        lp.status != LpStatus::Optimal
    }

    /// Drop every row implied by the others. Each removal is certified by
    /// an LP maximizing the row over the remaining rows.
    pub fn remove_redundant(&self) -> Result<Polyhedron, PolyError> {
        let p = self.normalized();
        if p.is_empty() {
            return Err(PolyError::Empty);
        }
        let h = p.rows();
        let d = p.dim();
        let mut kept = vec![true; h];
        for i in 0..h {
            let others: Vec<usize> = (0..h).filter(|&k| k != i && kept[k]).collect();
            let mut a = DMatrix::zeros(others.len() + 1, d);
            let mut b = DVector::zeros(others.len() + 1);
            for (r, &k) in others.iter().enumerate() {
                a.set_row(r, &p.a.row(k));
                b[r] = p.b[k];
            }
            // Bound the objective just past the tested row.
            a.set_row(others.len(), &p.a.row(i));
            b[others.len()] = p.b[i] + 1.0;
            let c = -p.a.row(i).transpose();
            let lp = solve_lp(&c, &a, &b);
            if lp.status == LpStatus::Optimal && -lp.value <= p.b[i] + FEAS_TOL {
                kept[i] = false;
            }
        }
        let rows: Vec<usize> = (0..h).filter(|&k| kept[k]).collect();
        let mut a = DMatrix::zeros(rows.len(), d);
        let mut b = DVector::zeros(rows.len());
        for (r, &k) in rows.iter().enumerate() {
            a.set_row(r, &p.a.row(k));
            b[r] = p.b[k];
        }
        Ok(Polyhedron { a, b })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn one_dimensional_box() {
        let a = DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]);
        let lp = solve_lp(&dv(&[1.0]), &a, &dv(&[0.0, 1.0]));
        assert_eq!(lp.status, LpStatus::Optimal);
        assert!(lp.x[0].abs() < 1e-12);
        assert!(lp.value.abs() < 1e-12);
    }

    #[test]
    fn polygon_facet_optimum() {
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(5, 2, &[
            1.0, 0.0,
            0.0, 1.0,
            1.0, 1.0,
            -1.0, 0.0,
            0.0, -1.0,
        ]);
        let b = dv(&[1.0, 1.0, 1.5, 0.0, 0.0]);
        let lp = solve_lp(&dv(&[-1.0, -1.0]), &a, &b);
        assert_eq!(lp.status, LpStatus::Optimal);
        assert!((lp.value + 1.5).abs() < 1e-9);
        assert!((lp.x[0] + lp.x[1] - 1.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let lp = solve_lp(&dv(&[1.0]), &a, &dv(&[-1.0, 0.0]));
        assert_eq!(lp.status, LpStatus::Infeasible);

        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let lp = solve_lp(&dv(&[1.0]), &a, &dv(&[3.0]));
        assert_eq!(lp.status, LpStatus::Unbounded);
    }

    #[test]
    fn chebyshev_box_point_triangle() {
        let unit = Polyhedron::boxed(&[-1.0, -1.0], &[1.0, 1.0]);
        let ball = unit.chebyshev();
        assert!((ball.radius - 1.0).abs() < 1e-9);
        assert!(ball.center.amax() < 1e-9);

        let point = Polyhedron::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), dv(&[0.0, 0.0])).unwrap();
        assert!(point.chebyshev().radius.abs() < 1e-12);
        assert!(!point.chebyshev().is_full_dimensional());

        #[rustfmt::skip]
        let tri = Polyhedron::new(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            dv(&[0.0, 0.0, 1.0]),
        ).unwrap();
        let ball = tri.chebyshev();
        let r = 1.0 / (2.0 + libm::sqrt(2.0));
        assert!((ball.radius - r).abs() < 1e-9);
        assert!((ball.center[0] - r).abs() < 1e-9 && (ball.center[1] - r).abs() < 1e-9);
    }

    #[test]
    fn chebyshev_unbounded_and_empty() {
        let half = Polyhedron::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), dv(&[0.0])).unwrap();
        let ball = half.chebyshev();
        assert_eq!(ball.radius, f64::INFINITY);
        assert!(half.contains(&ball.center, 1e-9).unwrap());

        let empty = Polyhedron::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), dv(&[-1.0, 0.0])).unwrap();
        assert!(empty.chebyshev().radius < 0.0);
    }

    #[test]
    fn redundancy_removal() {
        let p = Polyhedron::new(DMatrix::from_row_slice(2, 1, &[1.0, 1.0]), dv(&[1.0, 2.0])).unwrap();
        let r = p.remove_redundant().unwrap();
        assert_eq!(r.rows(), 1);
        assert_eq!(r.b[0], 1.0);

        let unit = Polyhedron::boxed(&[-1.0, -1.0], &[1.0, 1.0]);
        let doubled = unit.intersect(&unit);
        assert_eq!(doubled.remove_redundant().unwrap().rows(), 4);

        let empty = Polyhedron::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), dv(&[-1.0, 0.0])).unwrap();
        assert_eq!(empty.remove_redundant(), Err(PolyError::Empty));
    }

    #[test]
    fn containment_tolerance() {
        let unit = Polyhedron::boxed(&[-1.0, -1.0], &[1.0, 1.0]);
        assert!(unit.contains(&dv(&[0.0, 0.0]), 1e-8).unwrap());
        assert!(unit.contains(&dv(&[1.0 + 2e-9, 0.0]), 1e-8).unwrap());
        assert!(!unit.contains(&dv(&[1.1, 0.0]), 1e-8).unwrap());
        assert!(unit.contains(&dv(&[0.0]), 1e-8).is_err());
    }

    #[test]
    fn normalization_drops_trivial_zero_rows() {
        let p = Polyhedron::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 3.0, 4.0]),
            dv(&[1.0, 10.0]),
        )
        .unwrap();
        let n = p.normalized();
        assert_eq!(n.rows(), 1);
        assert!((n.a.row(0).norm() - 1.0).abs() < 1e-15);
        assert!((n.b[0] - 2.0).abs() < 1e-15);
    }
}
