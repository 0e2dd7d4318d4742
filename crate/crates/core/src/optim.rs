//! Local and multistart constrained minimization, plus the point samplers.
//!
//! Problems are `min f(x)` subject to `c_i(x) <= 0`, `A x <= b` and
//! `lb <= x <= ub`. The local method is a PHR augmented Lagrangian over the
//! general constraints whose subproblems are solved by a nonmonotone spectral
//! projected gradient method; the box is enforced exactly by projection.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{dot, ParameterSpace};

/// Stationarity / feasibility target of [`solve_local`].
pub const KKT_TOL: f64 = 1e-6;
/// Outer-iteration cap of [`solve_local`].
pub const MAX_ITER: usize = 200;
/// Attempt budget of [`draw_and_discard`].
pub const DD_BUDGET: usize = 1_000_000;

const INNER_MAX: usize = 400;
const MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;

type Objective<'a> = Box<dyn Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync + 'a>;
type Constraints<'a> = Box<dyn Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>) + Send + Sync + 'a>;

/// Objective and constraints with analytic derivatives.
pub struct NlpProblem<'a> {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub lin_a: Vec<Vec<f64>>,
    pub lin_b: Vec<f64>,
    objective: Objective<'a>,
    constraints: Option<Constraints<'a>>,
    max_outer: usize,
    max_inner: usize,
}

impl<'a> NlpProblem<'a> {
    /// `objective(x)` returns the value and gradient.
    pub fn new(
        lb: Vec<f64>,
        ub: Vec<f64>,
        objective: impl Fn(&[f64]) -> (f64, Vec<f64>) + Send + Sync + 'a,
    ) -> Self {
        Self {
            lb,
            ub,
            lin_a: Vec::new(),
            lin_b: Vec::new(),
            objective: Box::new(objective),
            constraints: None,
            max_outer: MAX_ITER,
            max_inner: INNER_MAX,
        }
    }

    /// `c(x)` returns constraint values (feasible when `<= 0`) and Jacobian rows.
    pub fn with_constraints(
        mut self,
        c: impl Fn(&[f64]) -> (Vec<f64>, Vec<Vec<f64>>) + Send + Sync + 'a,
    ) -> Self {
        self.constraints = Some(Box::new(c));
        self
    }

    pub fn with_linear(mut self, a: Vec<Vec<f64>>, b: Vec<f64>) -> Self {
        self.lin_a.extend(a);
        self.lin_b.extend(b);
        self
    }

    /// Caps outer (multiplier) and inner (SPG) iterations.
    pub fn with_budget(mut self, outer: usize, inner: usize) -> Self {
        self.max_outer = outer.max(1);
        self.max_inner = inner.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn objective(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.objective)(x)
    }

    /// All general constraints (nonlinear then linear) with Jacobian rows.
    pub fn constraints(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (mut v, mut j) = match &self.constraints {
            Some(c) => c(x),
            None => (Vec::new(), Vec::new()),
        };
        for (a, b) in self.lin_a.iter().zip(&self.lin_b) {
            v.push(dot(a, x) - b);
            j.push(a.clone());
        }
        (v, j)
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lb).zip(&self.ub) {
            *v = if v.is_nan() {
                0.5 * (l + u)
            } else {
                v.clamp(*l, *u)
            };
        }
    }

    /// Largest positive constraint value (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints(x).0.into_iter().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalSolution {
    pub x: Vec<f64>,
    pub obj: f64,
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Number of trial points where the model returned a non-finite value.
    pub nonfinite: usize,
}

impl LocalSolution {
    pub fn is_feasible(&self) -> bool {
        self.obj.is_finite() && self.max_violation <= KKT_TOL
    }
}

struct Lagrangian<'p, 'a> {
    prob: &'p NlpProblem<'a>,
    mult: Vec<f64>,
    mu: f64,
}

impl Lagrangian<'_, '_> {
    fn eval(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (f, mut g) = self.prob.objective(x);
        let (c, jac) = self.prob.constraints(x);
        if !f.is_finite() || g.iter().chain(&c).any(|v| !v.is_finite()) {
            return None;
        }
        let mut val = f;
        for (i, ci) in c.iter().enumerate() {
            let shifted = (self.mult[i] + self.mu * ci).max(0.0);
            val += (shifted * shifted - self.mult[i] * self.mult[i]) / (2.0 * self.mu);
            if shifted > 0.0 {
                for (gk, jk) in g.iter_mut().zip(&jac[i]) {
                    *gk += shifted * jk;
                }
            }
        }
        if g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((val, g))
    }
}

fn projected_step(prob: &NlpProblem, x: &[f64], g: &[f64], step: f64) -> Vec<f64> {
    let mut y: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - step * gi).collect();
    prob.project(&mut y);
    y
}

fn pg_norm(prob: &NlpProblem, x: &[f64], g: &[f64]) -> f64 {
    projected_step(prob, x, g, 1.0)
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Nonmonotone SPG on the augmented Lagrangian. Returns the final point and the
/// number of rejected non-finite trial points.
fn spg(lag: &Lagrangian, x0: Vec<f64>, tol: f64) -> (Vec<f64>, usize) {
    let prob = lag.prob;
    let mut nonfinite = 0;
    let mut x = x0;
    let Some((mut f, mut g)) = lag.eval(&x) else {
        return (x, 1);
    };
    let mut history = vec![f];
    let mut step = {
        let n = g.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if n > 0.0 {
            (1.0 / n).clamp(1e-10, 1e10)
        } else {
            1.0
        }
    };
    for _ in 0..prob.max_inner {
        if pg_norm(prob, &x, &g) <= tol {
            break;
        }
        let target = projected_step(prob, &x, &g, step);
        let d: Vec<f64> = target.iter().zip(&x).map(|(a, b)| a - b).collect();
        let slope = dot(&g, &d);
        if slope >= 0.0 {
            break;
        }
        let fmax = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            match lag.eval(&trial) {
                Some((ft, gt)) if ft <= fmax + ARMIJO * t * slope => {
                    accepted = Some((trial, ft, gt));
                    break;
                }
                Some((ft, _)) => {
                    // Safeguarded quadratic backtrack.
                    let q = -0.5 * slope * t * t / (ft - f - slope * t);
                    t = if q.is_finite() && q >= 0.1 * t && q <= 0.5 * t {
                        q
                    } else {
                        0.5 * t
                    };
                }
                None => {
                    nonfinite += 1;
                    t *= 0.5;
                }
            }
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 {
            (dot(&s, &s) / sy).clamp(1e-10, 1e10)
        } else {
            1e10
        };
        x = xn;
        f = fn_;
        g = gn;
        history.push(f);
        if history.len() > MEMORY {
            history.remove(0);
        }
    }
    (x, nonfinite)
}

/// KKT residual: max of projected-gradient norm of the Lagrangian, constraint
/// violation, and complementarity.
fn kkt_residual(prob: &NlpProblem, x: &[f64], mult: &[f64]) -> f64 {
    let (_, mut g) = prob.objective(x);
    let (c, jac) = prob.constraints(x);
    for (row, li) in jac.iter().zip(mult) {
        for (gk, jk) in g.iter_mut().zip(row) {
            *gk += li * jk;
        }
    }
    let stat = pg_norm(prob, x, &g);
    let viol = c.iter().fold(0.0_f64, |m, v| m.max(*v));
    let comp = c
        .iter()
        .zip(mult)
        .fold(0.0_f64, |m, (ci, li)| m.max((ci * li).abs()));
    stat.max(viol).max(comp)
}

/// Local solve from `start` (projected into the box first).
pub fn solve_local(prob: &NlpProblem, start: &[f64]) -> LocalSolution {
    let mut x = start.to_vec();
    prob.project(&mut x);
    let m = prob.constraints(&x).0.len();
    let mut lag = Lagrangian {
        prob,
        mult: vec![0.0; m],
        mu: 10.0,
    };
    let mut nonfinite = 0;
    let mut prev_viol = f64::INFINITY;
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    for k in 0..prob.max_outer {
        iterations = k + 1;
        let tol = (1e-2 * 0.1f64.powi(k as i32)).max(0.1 * KKT_TOL);
        let (xn, nf) = spg(&lag, x.clone(), tol);
        nonfinite += nf;
        x = xn;
        let (c, _) = prob.constraints(&x);
        if c.iter().any(|v| !v.is_finite()) {
            break;
        }
        // Violation measured the PHR way: max(c_i, -lambda_i / mu).
        let viol = c
            .iter()
            .zip(&lag.mult)
            .map(|(ci, li)| ci.max(-li / lag.mu).abs())
            .fold(0.0, f64::max);
        for (li, ci) in lag.mult.iter_mut().zip(&c) {
            *li = (*li + lag.mu * ci).max(0.0);
        }
        let res = kkt_residual(prob, &x, &lag.mult);
        if best.as_ref().is_none_or(|(r, _, _)| res < *r) {
            best = Some((res, x.clone(), lag.mult.clone()));
        }
        if res <= KKT_TOL {
            break;
        }
        if viol > 0.25 * prev_viol {
            lag.mu = (lag.mu * 10.0).min(1e12);
        }
        prev_viol = viol;
    }
    let (res, x, _) = best.unwrap_or((f64::INFINITY, x, vec![0.0; m]));
    let (obj, _) = prob.objective(&x);
    LocalSolution {
        max_violation: prob.max_violation(&x),
        obj,
        kkt_residual: res,
        converged: res <= KKT_TOL,
        iterations,
        nonfinite,
        x,
    }
}

/// Best feasible solution over all starts with every individual run.
#[derive(Clone, Debug)]
pub struct Multistart {
    pub best: LocalSolution,
    pub best_index: usize,
    pub runs: Vec<LocalSolution>,
}

/// Runs [`solve_local`] from every start concurrently. Ties on the objective
/// are broken by KKT residual, then by start index.
pub fn multistart(prob: &NlpProblem, starts: &[Vec<f64>]) -> Result<Multistart> {
    let runs: Vec<LocalSolution> = starts.par_iter().map(|s| solve_local(prob, s)).collect();
    let best_index = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_feasible())
        .min_by(|(i, a), (j, b)| {
            a.obj
                .total_cmp(&b.obj)
                .then(a.kkt_residual.total_cmp(&b.kkt_residual))
                .then(i.cmp(j))
        })
        .map(|(i, _)| i)
        .ok_or(Error::NoLocalSolution)?;
    Ok(Multistart {
        best: runs[best_index].clone(),
        best_index,
        runs,
    })
}

/// `count` i.i.d. uniform draws from `[lb, ub]`.
pub fn draw_uniform_box(lb: &[f64], ub: &[f64], count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            lb.iter()
                .zip(ub)
                .map(|(l, u)| {
                    let r: f64 = rng.random();
                    if u > l {
                        (l + (u - l) * r).min(*u)
                    } else {
                        *l
                    }
                })
                .collect()
        })
        .collect()
}

/// Output of [`draw_and_discard`].
#[derive(Clone, Debug)]
pub struct DdSample {
    pub points: Vec<Vec<f64>>,
    pub attempts: usize,
    /// Fewer than the requested number of points were accepted.
    pub underfilled: bool,
}

/// Rejection sampling from the space's transformed bounding box.
pub fn draw_and_discard(
    space: &ParameterSpace,
    count: usize,
    rng: &mut impl Rng,
) -> Result<DdSample> {
    draw_and_discard_with_budget(space, count, DD_BUDGET, rng)
}

pub fn draw_and_discard_with_budget(
    space: &ParameterSpace,
    count: usize,
    budget: usize,
    rng: &mut impl Rng,
) -> Result<DdSample> {
    let (lb, ub) = space.transform_bounds(&space.lb, &space.ub);
    let mut points = Vec::with_capacity(count);
    let mut attempts = 0;
    while points.len() < count && attempts < budget {
        attempts += 1;
        let x = draw_uniform_box(&lb, &ub, 1, rng).pop().unwrap_or_default();
        if space.contains(&x, 0.0) {
            points.push(x);
        }
    }
    if points.is_empty() && count > 0 {
        return Err(Error::PolytopeTooThin(attempts));
    }
    Ok(DdSample {
        underfilled: points.len() < count,
        points,
        attempts,
    })
}

/// Uniform draws from a space: plain box draws without polytope rows,
/// draw-and-discard otherwise.
pub fn draw_from_space(
    space: &ParameterSpace,
    count: usize,
    rng: &mut impl Rng,
) -> Result<DdSample> {
    if space.has_polytope() {
        draw_and_discard(space, count, rng)
    } else {
        Ok(DdSample {
            points: draw_uniform_box(&space.lb, &space.ub, count, rng),
            attempts: count,
            underfilled: false,
        })
    }
}

/// Starts for the M-step.
#[derive(Clone, Debug)]
pub struct EiSeeds {
    pub starts: Vec<Vec<f64>>,
    /// Fewer than `min_count` positive-EI candidates were found.
    pub underfilled: bool,
}

/// Collects up to `min_count` points with positive EI: first from `region`,
/// then from a shrinking ball around `theta_star` inside `region`. The last
/// start is always `theta_star` nudged along `+q`.
pub fn seed_positive_ei(
    ei: &(dyn Fn(&[f64]) -> f64 + Sync),
    region: &ParameterSpace,
    theta_star: &[f64],
    q: &[f64],
    min_count: usize,
    rng: &mut impl Rng,
) -> EiSeeds {
    const BATCH: usize = 200;
    const BATCHES: usize = 10;
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for _ in 0..BATCHES {
        if starts.len() >= min_count {
            break;
        }
        let Ok(sample) = draw_and_discard_with_budget(region, BATCH, 50 * BATCH, rng) else {
            break;
        };
        for p in sample.points {
            if starts.len() < min_count && ei(&p) > 0.0 {
                starts.push(p);
            }
        }
    }
    let mut radius = 0.1 * region.diameter();
    let d = theta_star.len();
    while starts.len() < min_count && radius > 1e-10 {
        for _ in 0..BATCH {
            let dir: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let mut p: Vec<f64> = theta_star
                .iter()
                .zip(&dir)
                .map(|(t, u)| t + radius * u)
                .collect();
            region.clamp_to_box(&mut p);
            if region.contains(&p, 0.0) && ei(&p) > 0.0 {
                starts.push(p);
                if starts.len() >= min_count {
                    break;
                }
            }
        }
        radius *= 0.5;
    }
    let underfilled = starts.len() < min_count;
    starts.push(nudge_along(region, theta_star, q));
    EiSeeds {
        starts,
        underfilled,
    }
}

/// `theta_star + t q` for the largest `t` in a short ladder that stays inside
/// the region, falling back to the box-clamped point.
fn nudge_along(region: &ParameterSpace, theta_star: &[f64], q: &[f64]) -> Vec<f64> {
    let base = 1e-3 * region.diameter().max(1e-8);
    for k in 0..30 {
        let t = base * 0.5f64.powi(k);
        let p: Vec<f64> = theta_star.iter().zip(q).map(|(a, b)| a + t * b).collect();
        if region.contains(&p, 0.0) {
            return p;
        }
    }
    let mut p: Vec<f64> = theta_star
        .iter()
        .zip(q)
        .map(|(a, b)| a + base * b)
        .collect();
    region.clamp_to_box(&mut p);
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unconstrained_quadratic() {
        let prob = NlpProblem::new(vec![0.0], vec![1.0], |x| {
            ((x[0] - 0.3).powi(2), vec![2.0 * (x[0] - 0.3)])
        });
        let sol = solve_local(&prob, &[0.9]);
        assert!(sol.converged);
        assert!((sol.x[0] - 0.3).abs() < 1e-6, "{:?}", sol);
    }

    #[test]
    fn active_linear_constraint() {
        let prob = NlpProblem::new(vec![0.0], vec![1.0], |x| (-x[0], vec![-1.0]))
            .with_linear(vec![vec![1.0]], vec![0.7]);
        let sol = solve_local(&prob, &[0.1]);
        assert!((sol.x[0] - 0.7).abs() < 1e-6, "{:?}", sol);
        assert!(sol.is_feasible());
    }

    #[test]
    fn nonlinear_constraint() {
        // min x + y outside the unit disc on [0, 2]^2: optimum 1 at (1, 0) or (0, 1)
        let prob = NlpProblem::new(vec![0.0, 0.0], vec![2.0, 2.0], |x| {
            (x[0] + x[1], vec![1.0, 1.0])
        })
        .with_constraints(|x| {
            (
                vec![1.0 - x[0] * x[0] - x[1] * x[1]],
                vec![vec![-2.0 * x[0], -2.0 * x[1]]],
            )
        });
        let sol = solve_local(&prob, &[1.5, 0.2]);
        assert!(sol.is_feasible());
        assert!((sol.obj - 1.0).abs() < 1e-5, "{:?}", sol);
    }

    #[test]
    fn single_start_multistart_matches_local() {
        let prob = NlpProblem::new(vec![-1.0], vec![1.0], |x| {
            ((x[0] - 0.2).powi(2), vec![2.0 * (x[0] - 0.2)])
        });
        let a = solve_local(&prob, &[0.8]);
        let b = multistart(&prob, &[vec![0.8]]).unwrap();
        assert_eq!(a, b.best);
    }

    #[test]
    fn infeasible_everywhere_is_no_solution() {
        let prob = NlpProblem::new(vec![0.0], vec![1.0], |x| (x[0], vec![1.0]))
            .with_constraints(|_| (vec![1.0], vec![vec![0.0]]));
        assert!(matches!(
            multistart(&prob, &[vec![0.2], vec![0.7]]),
            Err(Error::NoLocalSolution)
        ));
    }

    #[test]
    fn degenerate_box_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = draw_uniform_box(&[0.5, 1.0], &[0.5, 1.0], 5, &mut rng);
        assert!(pts.iter().all(|p| p == &vec![0.5, 1.0]));
    }
}
