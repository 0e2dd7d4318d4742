//! Dense LP feasibility kernel and the assembler for the localized bootstrap
//! constraint system
//!
//! `{lambda : G_j + (Dg_j / sigma_j) lambda + phi_j <= c, lambda in sqrt(n)(Theta - theta) ∩ rho B, p'lambda = 0}`.
//!
//! Feasibility is decided by a phase-one simplex that minimizes the largest
//! normalized row violation `t` subject to `a_i' x - t <= b_i`.

use crate::error::{Error, Result};
use crate::model::{dot, MomentJacobian, Options, ParameterSpace};
use crate::moments::{EmpiricalMoments, GmsShift};

/// Absolute tolerance on the phase-one objective.
pub const FEAS_TOL: f64 = 1e-7;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const DEGENERATE_STREAK: usize = 50;

/// `A x <= b` with dense rows.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl LinearSystem {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        debug_assert_eq!(a.len(), b.len());
        Self { a, b }
    }

    pub fn push_row(&mut self, row: Vec<f64>, rhs: f64) {
        self.a.push(row);
        self.b.push(rhs);
    }

    pub fn nrows(&self) -> usize {
        self.a.len()
    }

    pub fn ncols(&self) -> usize {
        self.a.first().map_or(0, Vec::len)
    }

    pub fn is_finite(&self) -> bool {
        self.b.iter().all(|v| v.is_finite()) && self.a.iter().flatten().all(|v| v.is_finite())
    }

    /// Largest `a_i' x - b_i` with rows scaled to unit norm.
    pub fn max_normalized_violation(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| {
                let nrm = norm(a);
                if nrm < 1e-14 {
                    -b
                } else {
                    (dot(a, x) - b) / nrm
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Result of the phase-one problem.
#[derive(Clone, Debug)]
pub struct PhaseOne {
    /// Optimal largest normalized violation (capped below at −1 for unbounded systems).
    pub max_violation: f64,
    pub point: Vec<f64>,
    pub pivots: usize,
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `true` iff some `x` satisfies `A x <= b` up to [`FEAS_TOL`].
pub fn is_feasible(sys: &LinearSystem) -> Result<bool> {
    if sys.b.iter().all(|&b| b >= 0.0) {
        return Ok(true);
    }
    Ok(phase_one(sys)?.max_violation <= FEAS_TOL)
}

/// Minimizes `t` subject to `a_i' x / |a_i| - t <= b_i / |a_i|`, `t >= -1`.
pub fn phase_one(sys: &LinearSystem) -> Result<PhaseOne> {
    let d = sys.ncols();
    // Zero rows carry a constant violation and are handled outside the tableau.
    let mut constant_violation = f64::NEG_INFINITY;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(sys.nrows());
    for (a, &b) in sys.a.iter().zip(&sys.b) {
        let nrm = norm(a);
        if nrm < 1e-14 {
            constant_violation = constant_violation.max(-b);
        } else {
            rows.push((a.iter().map(|v| v / nrm).collect(), b / nrm));
        }
    }
    if rows.is_empty() {
        return Ok(PhaseOne {
            max_violation: constant_violation.max(-1.0),
            point: vec![0.0; d],
            pivots: 0,
        });
    }

    let mut tab = Tableau::new(&rows, d);
    let pivots = tab.solve()?;
    let point = tab.primal_point(d);
    let t = rows
        .iter()
        .map(|(a, b)| dot(a, &point) - b)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(PhaseOne {
        max_violation: t.max(constant_violation),
        point,
        pivots,
    })
}

/// Dense simplex tableau for `min s` over columns `[x+ (d), x- (d), s, w (m)]`,
/// with `s = t + 1 >= 0` and slacks `w`.
struct Tableau {
    m: usize,
    ncols: usize,
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    cells: Vec<f64>,
    basis: Vec<usize>,
    s_col: usize,
}

impl Tableau {
    fn new(rows: &[(Vec<f64>, f64)], d: usize) -> Self {
        let m = rows.len();
        let s_col = 2 * d;
        let ncols = 2 * d + 1 + m;
        let width = ncols + 1;
        let mut cells = vec![0.0; (m + 1) * width];
        for (i, (a, b)) in rows.iter().enumerate() {
            let r = &mut cells[i * width..(i + 1) * width];
            for k in 0..d {
                r[k] = a[k];
                r[d + k] = -a[k];
            }
            r[s_col] = -1.0;
            r[s_col + 1 + i] = 1.0;
            r[ncols] = b - 1.0;
        }
        // Objective row holds reduced costs of `min s`.
        cells[m * width + s_col] = 1.0;
        let basis = (0..m).map(|i| s_col + 1 + i).collect();
        let mut tab = Self {
            m,
            ncols,
            cells,
            basis,
            s_col,
        };
        // Chvátal's start: bring s into the most violated row to reach a feasible basis.
        let (imin, rmin) = (0..m)
            .map(|i| (i, tab.rhs(i)))
            .fold(
                (0, f64::INFINITY),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            );
        if rmin < 0.0 {
            tab.pivot(imin, s_col);
        }
        tab
    }

    fn width(&self) -> usize {
        self.ncols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.width() + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.ncols)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.width();
        let p = self.cells[row * w + col];
        for j in 0..w {
            self.cells[row * w + j] /= p;
        }
        let pivot_row: Vec<f64> = self.cells[row * w..(row + 1) * w].to_vec();
        for i in 0..=self.m {
            if i == row {
                continue;
            }
            let factor = self.cells[i * w + col];
            if factor != 0.0 {
                let r = &mut self.cells[i * w..(i + 1) * w];
                for (x, pr) in r.iter_mut().zip(&pivot_row) {
                    *x -= factor * pr;
                }
                r[col] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    fn solve(&mut self) -> Result<usize> {
        let max_pivots = 50 * (self.m + self.ncols) + 1000;
        let mut pivots = 0;
        let mut degenerate = 0;
        loop {
            let bland = degenerate >= DEGENERATE_STREAK;
            let Some(col) = self.entering(bland) else {
                return Ok(pivots);
            };
            let Some(row) = self.leaving(col) else {
                // Cannot happen for `min s` with `s >= 0`; treat as converged.
                return Ok(pivots);
            };
            if self.rhs(row).abs() <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(row, col);
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::LpStalled(pivots));
            }
        }
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let obj = self.m;
        if bland {
            (0..self.ncols).find(|&j| self.at(obj, j) < -COST_TOL)
        } else {
            let mut best = None;
            let mut best_val = -COST_TOL;
            for j in 0..self.ncols {
                let v = self.at(obj, j);
                if v < best_val {
                    best_val = v;
                    best = Some(j);
                }
            }
            best
        }
    }

    fn leaving(&self, col: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let a = self.at(i, col);
            if a > PIVOT_TOL {
                let ratio = self.rhs(i).max(0.0) / a;
                match best {
                    None => best = Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - 1e-13
                            || (ratio <= br + 1e-13 && self.basis[i] < self.basis[bi])
                        {
                            best = Some((i, ratio));
                        }
                    }
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn primal_point(&self, d: usize) -> Vec<f64> {
        let mut x = vec![0.0; d];
        for (i, &col) in self.basis.iter().enumerate() {
            if col < d {
                x[col] += self.rhs(i);
            } else if col < 2 * d {
                x[col - d] -= self.rhs(i);
            }
        }
        debug_assert!(self.s_col == 2 * d);
        x
    }
}

/// Rows of the localized system shared by every bootstrap draw at one `theta`;
/// only the moment right-hand sides depend on `(b, c)`.
#[derive(Clone, Debug)]
pub struct LambdaTemplate {
    /// Index into the stacked `[ineq; eq]` moment vector for each moment row.
    moment_index: Vec<usize>,
    /// Additive shift `phi_j` for each moment row.
    moment_shift: Vec<f64>,
    a: Vec<Vec<f64>>,
    fixed_rhs: Vec<f64>,
    polytope_rows: usize,
}

impl LambdaTemplate {
    pub fn new(
        theta: &[f64],
        gradients: &MomentJacobian,
        moments: &EmpiricalMoments,
        shift: &GmsShift,
        space: &ParameterSpace,
        p: &[f64],
        opts: &Options,
    ) -> Self {
        let d = theta.len();
        let sqrt_n = (moments.n as f64).sqrt();
        let j1 = moments.f_ineq.len();
        let mut moment_index = Vec::new();
        let mut moment_shift = Vec::new();
        let mut a = Vec::new();
        for j in 0..j1 {
            if moments.keep_ineq[j] && !shift.deleted[j] {
                moment_index.push(j);
                moment_shift.push(shift.phi[j]);
                let s = moments.sigma_ineq[j];
                a.push(gradients.ineq.row(j).iter().map(|g| g / s).collect());
            }
        }
        for j in 0..moments.f_eq.len() {
            if moments.keep_eq[j] {
                moment_index.push(j1 + j);
                moment_shift.push(0.0);
                let s = moments.sigma_eq[j];
                a.push(gradients.eq.row(j).iter().map(|g| g / s).collect());
            }
        }
        let mut fixed_rhs = Vec::new();
        for k in 0..d {
            let mut up = vec![0.0; d];
            up[k] = 1.0;
            a.push(up);
            fixed_rhs.push((sqrt_n * (space.ub[k] - theta[k])).min(opts.rho).max(0.0));
            let mut lo = vec![0.0; d];
            lo[k] = -1.0;
            a.push(lo);
            fixed_rhs.push((sqrt_n * (theta[k] - space.lb[k])).min(opts.rho).max(0.0));
        }
        a.push(p.to_vec());
        fixed_rhs.push(0.0);
        a.push(p.iter().map(|v| -v).collect());
        fixed_rhs.push(0.0);
        let (poly_a, poly_b) = space.lambda_polytope_rows(theta, sqrt_n);
        let polytope_rows = poly_a.len();
        a.extend(poly_a);
        fixed_rhs.extend(poly_b);
        Self {
            moment_index,
            moment_shift,
            a,
            fixed_rhs,
            polytope_rows,
        }
    }

    pub fn moment_rows(&self) -> usize {
        self.moment_index.len()
    }

    pub fn polytope_rows(&self) -> usize {
        self.polytope_rows
    }

    /// Stacked-moment indices entering the system, in row order.
    pub fn moment_indices(&self) -> &[usize] {
        &self.moment_index
    }

    /// Smallest `c` at which `lambda = 0` satisfies every moment row.
    pub fn zero_point_threshold(&self, boot_row: &[f64]) -> f64 {
        self.moment_index
            .iter()
            .zip(&self.moment_shift)
            .map(|(&j, phi)| boot_row[j] + phi)
            .fold(0.0, f64::max)
    }

    pub fn system(&self, boot_row: &[f64], c: f64) -> LinearSystem {
        let mut b: Vec<f64> = self
            .moment_index
            .iter()
            .zip(&self.moment_shift)
            .map(|(&j, phi)| c - boot_row[j] - phi)
            .collect();
        b.extend_from_slice(&self.fixed_rhs);
        LinearSystem::new(self.a.clone(), b)
    }

    pub fn is_feasible(&self, boot_row: &[f64], c: f64) -> Result<bool> {
        if c >= self.zero_point_threshold(boot_row) && self.fixed_rhs.iter().all(|&v| v >= 0.0) {
            return Ok(true);
        }
        is_feasible(&self.system(boot_row, c))
    }
}

/// Builds the localized constraint system at `theta` for one bootstrap row.
///
/// Rows, in order: kept and undeleted moments, `2d` merged `lambda` bounds,
/// `p'lambda <= 0` and `-p'lambda <= 0`, then the `S` polytope rows.
#[allow(clippy::too_many_arguments)]
pub fn assemble_lambda_system(
    theta: &[f64],
    c: f64,
    boot_row: &[f64],
    gradients: &MomentJacobian,
    moments: &EmpiricalMoments,
    shift: &GmsShift,
    space: &ParameterSpace,
    p: &[f64],
    opts: &Options,
) -> LinearSystem {
    LambdaTemplate::new(theta, gradients, moments, shift, space, p, opts).system(boot_row, c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(rows: &[(&[f64], f64)]) -> LinearSystem {
        LinearSystem::new(
            rows.iter().map(|(a, _)| a.to_vec()).collect(),
            rows.iter().map(|(_, b)| *b).collect(),
        )
    }

    #[test]
    fn origin_feasible_one_dim() {
        let s = sys(&[(&[1.0], 1.0), (&[-1.0], 1.0), (&[1.0], 0.0), (&[-1.0], 0.0)]);
        assert!(is_feasible(&s).unwrap());
    }

    #[test]
    fn contradictory_bounds_infeasible() {
        let s = sys(&[(&[1.0], -1.0), (&[-1.0], -1.0)]);
        assert!(!is_feasible(&s).unwrap());
        let sol = phase_one(&s).unwrap();
        assert!((sol.max_violation - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shifted_box_needs_pivots() {
        // 2 <= x <= 3, -1 <= y <= -0.5
        let s = sys(&[
            (&[1.0, 0.0], 3.0),
            (&[-1.0, 0.0], -2.0),
            (&[0.0, 1.0], -0.5),
            (&[0.0, -1.0], 1.0),
        ]);
        let sol = phase_one(&s).unwrap();
        assert!(sol.max_violation <= FEAS_TOL);
        assert!(sol.point[0] >= 2.0 - 1e-9 && sol.point[0] <= 3.0 + 1e-9);
        assert!(sol.point[1] >= -1.0 - 1e-9 && sol.point[1] <= -0.5 + 1e-9);
        // Depth of the widest inscribed ball in the normalized sense is 0.25.
        assert!((sol.max_violation + 0.25).abs() < 1e-9);
    }

    #[test]
    fn zero_rows_are_constant_checks() {
        let s = sys(&[(&[0.0, 0.0], -1.0), (&[1.0, 0.0], 1.0)]);
        assert!(!is_feasible(&s).unwrap());
        let s = sys(&[(&[0.0, 0.0], 0.5), (&[1.0, 0.0], -1.0)]);
        assert!(is_feasible(&s).unwrap());
    }

    #[test]
    fn unbounded_depth_is_capped() {
        let s = sys(&[(&[1.0, 1.0], -5.0)]);
        let sol = phase_one(&s).unwrap();
        assert!(sol.max_violation <= -1.0 + 1e-12);
    }
}
