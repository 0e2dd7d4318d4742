//! Feasible search and the Evaluate–Approximate–Maximize driver.
//!
//! For a direction `q` the driver looks for `max q'theta` over `theta in Theta`
//! subject to `h_j(theta) <= c_hat(theta)` for every kept moment, where
//! `h_j = sqrt(n) (f_j + g_j(theta)) / sigma_j`. `c_hat` is expensive, so it is
//! evaluated on a growing design, interpolated by kriging, and new points are
//! proposed by maximizing expected improvement over a contracted space.

use std::time::Instant;

use rayon::prelude::*;

use crate::critval::{as_critval, calibrated_critval, Critval};
use crate::error::{Error, Result};
use crate::model::{dot, Direction, IntervalType, Method, Options, ParameterSpace, Problem};
use crate::moments::{bootstrap_ensemble, compute_empirical, BootstrapEnsemble, EmpiricalMoments};
use crate::optim::{draw_from_space, multistart, seed_positive_ei, NlpProblem};
use crate::rng::{substream, TAG_EAM, TAG_FEASIBLE};
use crate::stats::{log_norm_cdf, log_norm_cdf_slope, norm_cdf};
use crate::surrogate::{dedupe, KrigingSurrogate, SD_FLOOR};

/// Distance to the boundary (and to the contracted ceiling) treated as "on it".
pub const BOUNDARY_TOL: f64 = 1e-4;
/// Smallest change of `q'theta*` counted as progress.
pub const PROGRESS_TOL: f64 = 1e-6;

/// Solver budget for subproblems built on the surrogate.
const SUB_OUTER: usize = 30;
const SUB_INNER: usize = 150;
const SCREEN_OUTER: usize = 3;
const SCREEN_INNER: usize = 60;
const POLISH: usize = 2;
/// Temperature of the log-sum-exp smoothing of `max_j z_j` in the M-step.
const SOFTMAX_TEMP: f64 = 0.02;

/// θ-free quantities shared by every evaluation of a run.
#[derive(Clone, Debug)]
pub struct Precomputed {
    pub moments: EmpiricalMoments,
    pub boot: BootstrapEnsemble,
}

pub fn precompute(problem: &Problem) -> Result<Precomputed> {
    let opts = &problem.options;
    let moments = compute_empirical(&problem.data, &*problem.model, opts)?;
    let boot = bootstrap_ensemble(&problem.data, &*problem.model, &moments, opts, opts.seed)?;
    Ok(Precomputed { moments, boot })
}

/// `c_hat` and the constraint violation at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub theta: Vec<f64>,
    pub c_hat: f64,
    /// `max_j h_j(theta)` over kept moments.
    pub h_max: f64,
    /// `h_max - c_hat`.
    pub max_violation: f64,
    pub feasible: bool,
    pub lp_count: usize,
}

impl Evaluation {
    /// `max(0, h_max - c_hat)`.
    pub fn constraint_violation(&self) -> f64 {
        self.max_violation.max(0.0)
    }
}

/// Evaluates studentized moments and critical values for one problem.
pub struct Evaluator<'a> {
    pub problem: &'a Problem,
    pub pre: &'a Precomputed,
    kept: Vec<usize>,
    sqrt_n: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(problem: &'a Problem, pre: &'a Precomputed) -> Self {
        Self {
            problem,
            pre,
            kept: pre.moments.kept(),
            sqrt_n: (pre.moments.n as f64).sqrt(),
        }
    }

    pub fn options(&self) -> &Options {
        &self.problem.options
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.problem.space
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    /// `h_j(theta)` for the kept moments, in stacked order.
    pub fn h(&self, theta: &[f64]) -> Vec<f64> {
        let all = self.pre.moments.studentized(&self.problem.model.g(theta));
        self.kept.iter().map(|&j| all[j]).collect()
    }

    /// `h_j` with gradients `sqrt(n) Dg_j / sigma_j`.
    pub fn h_with_grad(&self, theta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let m = &self.pre.moments;
        let h = self.h(theta);
        let jac = self.problem.model.g_gradient(theta);
        let j1 = m.f_ineq.len();
        let grads = self
            .kept
            .iter()
            .map(|&j| {
                let row = if j < j1 {
                    jac.ineq.row(j)
                } else {
                    jac.eq.row(j - j1)
                };
                let s = self.sqrt_n / m.sigma(j);
                row.iter().map(|v| v * s).collect()
            })
            .collect();
        (h, grads)
    }

    pub fn critval(&self, theta: &[f64]) -> Result<Critval> {
        let p = self.problem;
        match p.options.method {
            Method::Calibrated => calibrated_critval(
                theta,
                &self.pre.moments,
                &self.pre.boot,
                &*p.model,
                &p.space,
                &p.p,
                &p.options,
            ),
            Method::AndrewsSoares => Ok(Critval {
                c_hat: as_critval(
                    theta,
                    &*p.model,
                    &self.pre.moments,
                    &self.pre.boot,
                    &p.options,
                ),
                lp_count: 0,
                psi: 0.0,
            }),
        }
    }

    pub fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        let cv = self.critval(theta)?;
        let h_max = self.h(theta).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let max_violation = h_max - cv.c_hat;
        Ok(Evaluation {
            theta: theta.to_vec(),
            c_hat: cv.c_hat,
            h_max,
            max_violation,
            feasible: max_violation <= 0.0,
            lp_count: cv.lp_count,
        })
    }

    pub fn evaluate_all(&self, points: &[Vec<f64>]) -> Result<Vec<Evaluation>> {
        points.par_iter().map(|t| self.evaluate(t)).collect()
    }

    fn dedupe_radius(&self) -> f64 {
        1e-6 * self.space().diameter()
    }

    fn is_new(&self, evaluated: &[Evaluation], theta: &[f64]) -> bool {
        let r = self.dedupe_radius();
        evaluated.iter().all(|e| dist(&e.theta, theta) > r)
    }

    /// Fits the surrogate on the deduplicated design (earlier points win).
    pub fn fit_surrogate(
        &self,
        evaluated: &[Evaluation],
        hint: Option<&[f64]>,
    ) -> Result<KrigingSurrogate> {
        let pts: Vec<Vec<f64>> = evaluated.iter().map(|e| e.theta.clone()).collect();
        let keep = dedupe(&pts, self.dedupe_radius());
        let design: Vec<Vec<f64>> = keep.iter().map(|&i| pts[i].clone()).collect();
        let resp: Vec<f64> = keep.iter().map(|&i| evaluated[i].c_hat).collect();
        KrigingSurrogate::fit_with_hint(&design, &resp, hint)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Largest `t in [0, 1]` (by bisection) with `anchor + t (theta - anchor)` in
/// the space; `anchor` must be inside.
fn pull_inside(space: &ParameterSpace, theta: &[f64], anchor: &[f64]) -> Vec<f64> {
    let mut x = theta.to_vec();
    space.clamp_to_box(&mut x);
    if space.contains(&x, 0.0) {
        return x;
    }
    let at = |t: f64| -> Vec<f64> {
        anchor
            .iter()
            .zip(&x)
            .map(|(a, b)| a + t * (b - a))
            .collect()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if space.contains(&at(mid), 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(lo)
}

/// Output of either feasible search.
#[derive(Clone, Debug, Default)]
pub struct FeasibleSearch {
    /// Every point evaluated during the search.
    pub evaluated: Vec<Evaluation>,
    /// Smallest `h_max - c_hat` among the evaluated points.
    pub best_minmax: f64,
}

impl FeasibleSearch {
    pub fn feasible(&self) -> Vec<&Evaluation> {
        self.evaluated.iter().filter(|e| e.feasible).collect()
    }

    pub fn found(&self) -> bool {
        self.evaluated.iter().any(|e| e.feasible)
    }
}

/// `t ln sum_j exp(v_j / t)` with its gradient; an upper bound on `max_j v_j`
/// within `t ln J`.
fn smooth_max(vals: &[f64], grads: &[Vec<f64>], temp: f64) -> (f64, Vec<f64>) {
    let vmax = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d = grads.first().map_or(0, |g| g.len());
    if !vmax.is_finite() {
        return (vmax, vec![0.0; d]);
    }
    let w: Vec<f64> = vals.iter().map(|v| ((v - vmax) / temp).exp()).collect();
    let wsum: f64 = w.iter().sum();
    let mut grad = vec![0.0; d];
    for (wj, gj) in w.iter().zip(grads) {
        for (g, v) in grad.iter_mut().zip(gj) {
            *g += wj / wsum * v;
        }
    }
    (vmax + temp * wsum.ln(), grad)
}

/// Short solves from every start, then a full-budget polish of the best few.
fn two_stage(nlp: NlpProblem, starts: &[Vec<f64>]) -> Result<crate::optim::Multistart> {
    let nlp = nlp.with_budget(SCREEN_OUTER, SCREEN_INNER);
    let screen = multistart(&nlp, starts)?;
    let mut order: Vec<usize> = (0..screen.runs.len())
        .filter(|&i| screen.runs[i].is_feasible())
        .collect();
    order.sort_by(|&i, &j| {
        screen.runs[i]
            .obj
            .total_cmp(&screen.runs[j].obj)
            .then(i.cmp(&j))
    });
    let polish: Vec<Vec<f64>> = order
        .iter()
        .take(POLISH)
        .map(|&i| screen.runs[i].x.clone())
        .collect();
    let nlp = nlp.with_budget(SUB_OUTER, SUB_INNER);
    let fine = multistart(&nlp, &polish)?;
    Ok(if fine.best.obj <= screen.best.obj {
        fine
    } else {
        screen
    })
}

/// `min_theta max_j h_j(theta)` by multistart, then `c_hat` on `theta_0` and
/// on every local solution.
pub fn feasible_search_direct(ev: &Evaluator, seed: u64) -> Result<FeasibleSearch> {
    let opts = ev.options();
    let space = ev.space();
    let mut rng = substream(seed, TAG_FEASIBLE, 0);
    let mut starts = vec![ev.problem.theta_0.clone()];
    starts.extend(draw_from_space(space, opts.ei_points.max(1), &mut rng)?.points);
    let nlp = NlpProblem::new(space.lb.clone(), space.ub.clone(), |x: &[f64]| {
        let (h, grads) = ev.h_with_grad(x);
        smooth_max(&h, &grads, SOFTMAX_TEMP)
    })
    .with_linear(space.poly_a.clone(), space.poly_b.clone())
    .with_budget(SUB_OUTER, SUB_INNER);
    let mut candidates = vec![ev.problem.theta_0.clone()];
    if let Ok(ms) = multistart(&nlp, &starts) {
        let mut runs: Vec<_> = ms.runs.iter().filter(|r| r.is_feasible()).collect();
        runs.sort_by(|x, y| x.obj.total_cmp(&y.obj));
        for r in runs {
            candidates.push(pull_inside(space, &r.x, &ev.problem.theta_0));
        }
    }
    let mut unique: Vec<Vec<f64>> = Vec::new();
    let r = ev.dedupe_radius();
    for c in candidates {
        if unique.iter().all(|u| dist(u, &c) > r) {
            unique.push(c);
        }
    }
    let evaluated = ev.evaluate_all(&unique)?;
    let best_minmax = evaluated
        .iter()
        .map(|e| e.max_violation)
        .fold(f64::INFINITY, f64::min);
    Ok(FeasibleSearch {
        evaluated,
        best_minmax,
    })
}

/// Surrogate-assisted search on `max_j (h_j(theta) - c_L(theta))`.
pub fn feasible_search_eam(ev: &Evaluator, seed: u64) -> Result<FeasibleSearch> {
    let opts = ev.options();
    let space = ev.space();
    let mut rng = substream(seed, TAG_FEASIBLE, 1);
    let init = draw_from_space(space, opts.mbase * ev.dim(), &mut rng)?.points;
    let mut evaluated = ev.evaluate_all(&init)?;
    let mut best_minmax = evaluated
        .iter()
        .map(|e| e.max_violation)
        .fold(f64::INFINITY, f64::min);
    if evaluated.iter().any(|e| e.feasible) {
        return Ok(FeasibleSearch {
            evaluated,
            best_minmax,
        });
    }
    let mut hint: Option<Vec<f64>> = None;
    for it in 0..opts.eam_maxit {
        let mut rng = substream(seed, TAG_FEASIBLE, 2 + it as u64);
        let sur = ev.fit_surrogate(&evaluated, hint.as_deref())?;
        hint = Some(sur.normalized_lengths().to_vec());
        let sur_ref = &sur;
        let nlp = NlpProblem::new(space.lb.clone(), space.ub.clone(), move |x: &[f64]| {
            let (h, grads) = ev.h_with_grad(x);
            let pred = sur_ref.predict(x);
            let (v, mut g) = smooth_max(&h, &grads, SOFTMAX_TEMP);
            for (gk, pk) in g.iter_mut().zip(&pred.gradient) {
                *gk -= pk;
            }
            (v - pred.value, g)
        })
        .with_linear(space.poly_a.clone(), space.poly_b.clone())
        .with_budget(SUB_OUTER, SUB_INNER);
        let least = evaluated
            .iter()
            .min_by(|x, y| x.max_violation.total_cmp(&y.max_violation))
            .map(|e| e.theta.clone())
            .expect("initial design is non-empty");
        let mut starts = vec![least.clone()];
        starts.extend(draw_from_space(space, opts.ei_points.max(1), &mut rng)?.points);
        let mut new_points = Vec::new();
        if let Ok(ms) = multistart(&nlp, &starts) {
            new_points.push(pull_inside(space, &ms.best.x, &least));
        }
        new_points.extend(draw_from_space(space, 1, &mut rng)?.points);
        new_points.retain(|p| ev.is_new(&evaluated, p));
        let fresh = ev.evaluate_all(&new_points)?;
        best_minmax = fresh
            .iter()
            .map(|e| e.max_violation)
            .fold(best_minmax, f64::min);
        let done = fresh.iter().any(|e| e.feasible);
        evaluated.extend(fresh);
        if done {
            break;
        }
    }
    Ok(FeasibleSearch {
        evaluated,
        best_minmax,
    })
}

/// Mutable state of one EAM run.
#[derive(Clone, Debug)]
pub struct EamState {
    pub q: Vec<f64>,
    pub evaluated: Vec<Evaluation>,
    /// Index of `theta*_L` in `evaluated` (feasible with the largest `q'theta`).
    pub star: Option<usize>,
    /// Least-violating point, used for geometry while nothing is feasible.
    pub anchor: usize,
    pub counter: i32,
    pub iter: usize,
    /// `q'theta_dagger = max over Theta of q'theta`.
    pub opt_dagger: f64,
    /// `q'theta*_L` before the latest update.
    pub prev_star_proj: f64,
    /// Feasible points evaluated by this run (inherited ones excluded).
    pub found_inside: usize,
}

impl EamState {
    pub fn new(q: Vec<f64>, opt_dagger: f64) -> Self {
        Self {
            q,
            evaluated: Vec::new(),
            star: None,
            anchor: 0,
            counter: 0,
            iter: 0,
            opt_dagger,
            prev_star_proj: f64::NEG_INFINITY,
            found_inside: 0,
        }
    }

    pub fn proj(&self, theta: &[f64]) -> f64 {
        dot(&self.q, theta)
    }

    /// Current reference point: `theta*_L` or the fallback anchor.
    pub fn reference(&self) -> &Evaluation {
        &self.evaluated[self.star.unwrap_or(self.anchor)]
    }

    pub fn star_proj(&self) -> f64 {
        self.proj(&self.reference().theta)
    }

    /// Upper limit of `q'theta` in the contracted space.
    pub fn ceiling(&self, h_rate: f64) -> f64 {
        let s = self.star_proj();
        s + (self.opt_dagger - s) / h_rate.powi(self.counter)
    }

    /// Adds evaluations and refreshes `star` and `anchor`. `inherited` points do
    /// not count toward `found_inside`.
    pub fn absorb(&mut self, evals: Vec<Evaluation>, inherited: bool) {
        for e in evals {
            if e.feasible && !inherited {
                self.found_inside += 1;
            }
            self.evaluated.push(e);
            let i = self.evaluated.len() - 1;
            let e = &self.evaluated[i];
            if e.feasible {
                let better = match self.star {
                    None => true,
                    Some(s) => self.proj(&e.theta) > self.proj(&self.evaluated[s].theta),
                };
                if better {
                    self.star = Some(i);
                }
            }
            if e.max_violation < self.evaluated[self.anchor].max_violation {
                self.anchor = i;
            }
        }
    }
}

/// Result of one M-step.
#[derive(Clone, Debug, PartialEq)]
pub struct MStep {
    pub theta: Vec<f64>,
    pub ei: f64,
    /// `q'theta*_L` the improvement was measured against.
    pub base_proj: f64,
    /// Contracted ceiling used.
    pub ceiling: f64,
    /// Fewer positive-EI starts than requested were found.
    pub underfilled: bool,
}

/// Per-criterion outcome of [`check_convergence`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConvergenceReport {
    /// `iter >= eam_minit`.
    pub min_iterations: bool,
    /// `|q'theta_Mstep - q'theta*_L| < eam_obj_tol`.
    pub expected_improvement: bool,
    /// `|q'theta*_L - q'theta*_{L-1}| < eam_tol`.
    pub progress: bool,
    /// A feasible point was found by this run.
    pub found_feasible: bool,
    /// `theta*_L` farther than `1e-4` from the contracted ceiling.
    pub away_from_ceiling: bool,
    /// `|h_max - c_hat|` at `theta*_L` below `eam_maxviol_tol` (vacuous at infinity).
    pub violation: bool,
}

impl ConvergenceReport {
    pub fn criteria(&self) -> [bool; 6] {
        [
            self.min_iterations,
            self.expected_improvement,
            self.progress,
            self.found_feasible,
            self.away_from_ceiling,
            self.violation,
        ]
    }

    pub fn converged(&self) -> bool {
        self.criteria().iter().all(|c| *c)
    }
}

pub fn check_convergence(
    state: &EamState,
    mstep: Option<&MStep>,
    opts: &Options,
) -> ConvergenceReport {
    let star = state.star.map(|i| &state.evaluated[i]);
    let star_proj = star.map_or(f64::NEG_INFINITY, |e| state.proj(&e.theta));
    let change_ei = mstep.map_or(0.0, |m| (state.proj(&m.theta) - m.base_proj).abs());
    let change = (star_proj - state.prev_star_proj).abs();
    let gap = star.map_or(0.0, |_| {
        (state.opt_dagger - star_proj) / opts.h_rate.powi(state.counter)
    });
    ConvergenceReport {
        min_iterations: state.iter >= opts.eam_minit,
        expected_improvement: change_ei < opts.eam_obj_tol,
        progress: change < opts.eam_tol,
        found_feasible: state.found_inside >= 1,
        away_from_ceiling: gap > BOUNDARY_TOL,
        violation: opts.eam_maxviol_tol.is_infinite()
            || star.is_some_and(|e| e.max_violation.abs() < opts.eam_maxviol_tol),
    }
}

/// Outcome of the search in one direction.
#[derive(Clone, Debug)]
pub struct DirectionResult {
    pub q: Vec<f64>,
    /// `theta*_EAM`.
    pub theta_hat: Vec<f64>,
    /// `q'theta*_EAM`.
    pub optbound: f64,
    pub c_at_opt: f64,
    /// `h_max - c_hat` at the optimum.
    pub cv_at_opt: f64,
    pub ei_at_opt: f64,
    pub converged: bool,
    /// `theta*_L` reached the boundary of Θ along `q`.
    pub boundary: bool,
    pub iterations: usize,
    pub counter: i32,
    pub lp_count: usize,
    pub surrogate_fits: usize,
    pub wall_time: f64,
    pub report: ConvergenceReport,
    pub evaluated: Vec<Evaluation>,
    pub warnings: Vec<String>,
}

/// Contracted space `Θ ∩ {q'theta* <= q'theta <= ceiling}`.
pub fn contracted_space(
    space: &ParameterSpace,
    direction: Option<(usize, f64)>,
    q: &[f64],
    star_proj: f64,
    ceiling: f64,
) -> ParameterSpace {
    match direction {
        Some((i, sign)) => {
            let mut lb = space.lb.clone();
            let mut ub = space.ub.clone();
            if sign > 0.0 {
                lb[i] = lb[i].max(star_proj);
                ub[i] = ub[i].min(ceiling).max(lb[i]);
            } else {
                ub[i] = ub[i].min(-star_proj);
                lb[i] = lb[i].max(-ceiling).min(ub[i]);
            }
            space.restricted(lb, ub, Vec::new(), Vec::new())
        }
        None => space.restricted(
            space.lb.clone(),
            space.ub.clone(),
            vec![q.iter().map(|v| -v).collect(), q.to_vec()],
            vec![-star_proj, ceiling],
        ),
    }
}

/// Expected improvement `(q'theta - base)_+ (1 - Phi((h_max - c_L) / s))`.
pub fn expected_improvement(
    ev: &Evaluator,
    sur: &KrigingSurrogate,
    q: &[f64],
    base: f64,
    theta: &[f64],
) -> f64 {
    let gain = dot(q, theta) - base;
    if gain <= 0.0 {
        return 0.0;
    }
    let pred = sur.predict(theta);
    let hmax = ev.h(theta).into_iter().fold(f64::NEG_INFINITY, f64::max);
    gain * norm_cdf(-(hmax - pred.value) / pred.sd.max(SD_FLOOR))
}

/// `ln` of [`expected_improvement`], finite wherever the improvement is positive.
pub fn log_expected_improvement(
    ev: &Evaluator,
    sur: &KrigingSurrogate,
    q: &[f64],
    base: f64,
    theta: &[f64],
) -> f64 {
    let gain = dot(q, theta) - base;
    if gain <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let pred = sur.predict(theta);
    let hmax = ev.h(theta).into_iter().fold(f64::NEG_INFINITY, f64::max);
    gain.ln() + log_norm_cdf(-(hmax - pred.value) / pred.sd.max(SD_FLOOR))
}

fn m_step(
    ev: &Evaluator,
    sur: &KrigingSurrogate,
    state: &EamState,
    basis: Option<(usize, f64)>,
    rng: &mut impl rand::Rng,
) -> Option<MStep> {
    let opts = ev.options();
    let d = ev.dim();
    let q = &state.q;
    let base = state.star_proj();
    let ceiling = state.ceiling(opts.h_rate);
    let region = contracted_space(ev.space(), basis, q, base, ceiling);
    let log_ei = |t: &[f64]| log_expected_improvement(ev, sur, q, base, t);
    let positive = |t: &[f64]| {
        if log_ei(t) > f64::NEG_INFINITY {
            1.0
        } else {
            0.0
        }
    };
    let seeds = seed_positive_ei(
        &positive,
        &region,
        &state.reference().theta,
        q,
        opts.ei_points,
        rng,
    );

    // Maximize ln gain + ln Phi(-z_max), with z_max smoothed by log-sum-exp.
    let (a, b) = (region.poly_a.clone(), region.poly_b.clone());
    let qv = q.clone();
    let nlp = NlpProblem::new(region.lb.clone(), region.ub.clone(), move |th: &[f64]| {
        let gain = dot(&qv, th) - base;
        if gain <= 0.0 {
            return (f64::INFINITY, vec![0.0; d]);
        }
        let (h, grads) = ev.h_with_grad(th);
        let pred = sur.predict(th);
        let s = pred.sd.max(SD_FLOOR);
        let floored = pred.sd < SD_FLOOR;
        let z: Vec<f64> = h.iter().map(|hj| (hj - pred.value) / s).collect();
        let dz: Vec<Vec<f64>> = grads
            .iter()
            .zip(&z)
            .map(|(gj, zj)| {
                (0..d)
                    .map(|k| {
                        let mut v = (gj[k] - pred.gradient[k]) / s;
                        if !floored {
                            v -= zj * pred.sd_gradient[k] / s;
                        }
                        v
                    })
                    .collect()
            })
            .collect();
        let (zs, dzs) = smooth_max(&z, &dz, SOFTMAX_TEMP);
        let slope = log_norm_cdf_slope(-zs);
        let grad = (0..d).map(|k| -qv[k] / gain + slope * dzs[k]).collect();
        (-gain.ln() - log_norm_cdf(-zs), grad)
    })
    .with_linear(a, b);
    let starts = seeds.starts.clone();
    let mut best: Option<(f64, Vec<f64>)> = seeds
        .starts
        .iter()
        .map(|s| (log_ei(s), s.clone()))
        .filter(|(v, _)| *v > f64::NEG_INFINITY)
        .max_by(|a, b| a.0.total_cmp(&b.0));
    if let Ok(ms) = two_stage(nlp, &starts) {
        let theta = pull_inside(&region, &ms.best.x, &state.reference().theta);
        let v = log_ei(&theta);
        if best.as_ref().is_none_or(|(b, _)| v >= *b) {
            best = Some((v, theta));
        }
    }
    let (_, theta) = best?;
    Some(MStep {
        ei: expected_improvement(ev, sur, q, base, &theta),
        theta,
        base_proj: base,
        ceiling,
        underfilled: seeds.underfilled,
    })
}

/// ε-points `theta* + delta_k (q'theta_dagger - q'theta*) q`, pulled into Θ,
/// kept only when they improve `q'theta`.
pub fn epsilon_points(space: &ParameterSpace, state: &EamState, h_rate2: f64) -> Vec<Vec<f64>> {
    let star = &state.reference().theta;
    let base = state.star_proj();
    let span = state.opt_dagger - base;
    let d1 = h_rate2.powi(-state.counter - 1);
    [d1, 0.5 * d1]
        .iter()
        .filter_map(|delta| {
            let raw: Vec<f64> = star
                .iter()
                .zip(&state.q)
                .map(|(t, q)| t + delta * span * q)
                .collect();
            let p = pull_inside(space, &raw, star);
            (state.proj(&p) > base).then_some(p)
        })
        .collect()
}

/// EAM in direction `q`, starting from already evaluated (inherited) points.
pub fn run_eam(
    ev: &Evaluator,
    q: &[f64],
    warm: &[Evaluation],
    stream: u64,
) -> Result<DirectionResult> {
    let start = Instant::now();
    let opts = ev.options();
    let space = ev.space();
    let d = ev.dim();
    let seed = opts.seed;
    let basis = match ev.problem.direction {
        Direction::Basis { index, .. } => {
            let sign = q[index].signum();
            Some((index, sign))
        }
        Direction::General => None,
    };
    let mut state = EamState::new(q.to_vec(), space.support(q)?);
    let mut warnings = Vec::new();
    let mut lp_count = 0;

    let mut rng = substream(seed, TAG_EAM, stream << 32);
    let init = draw_from_space(space, opts.mbase * d, &mut rng)?.points;
    state.absorb(warm.to_vec(), true);
    let init: Vec<Vec<f64>> = init
        .into_iter()
        .filter(|p| ev.is_new(&state.evaluated, p))
        .collect();
    let fresh = ev.evaluate_all(&init)?;
    lp_count += fresh.iter().map(|e| e.lp_count).sum::<usize>();
    state.absorb(fresh, false);
    if state.evaluated.is_empty() {
        return Err(Error::NoFeasiblePoint {
            best_minmax: f64::INFINITY,
        });
    }

    let mut report = ConvergenceReport::default();
    let mut last_mstep: Option<MStep> = None;
    let mut hint: Option<Vec<f64>> = None;
    let mut fits = 0;
    let mut boundary = false;
    while state.iter < opts.eam_maxit {
        state.iter += 1;
        let mut rng = substream(seed, TAG_EAM, (stream << 32) + state.iter as u64);
        // A-step.
        let sur = ev.fit_surrogate(&state.evaluated, hint.as_deref())?;
        fits += 1;
        hint = Some(sur.normalized_lengths().to_vec());
        // M-step.
        let mstep = m_step(ev, &sur, &state, basis, &mut rng);
        let ceiling_used = state.ceiling(opts.h_rate);
        // Update.
        let mut new_points = Vec::new();
        if let Some(m) = mstep.as_ref().filter(|m| m.ei > 0.0) {
            new_points.push(m.theta.clone());
        }
        new_points.extend(draw_from_space(space, 1, &mut rng)?.points);
        new_points.extend(epsilon_points(space, &state, opts.h_rate2));
        let mut unique: Vec<Vec<f64>> = Vec::new();
        for p in new_points {
            if ev.is_new(&state.evaluated, &p)
                && unique.iter().all(|u| dist(u, &p) > ev.dedupe_radius())
            {
                unique.push(p);
            }
        }
        // E-step.
        let fresh = ev.evaluate_all(&unique)?;
        lp_count += fresh.iter().map(|e| e.lp_count).sum::<usize>();
        let before = state.star.map(|_| state.star_proj());
        state.absorb(fresh, false);
        state.prev_star_proj = before.unwrap_or(f64::NEG_INFINITY);
        let after = state.star.map(|_| state.star_proj());
        match (before, after) {
            (Some(b), Some(a)) if a - b < PROGRESS_TOL => state.counter += 1,
            (None, None) => state.counter += 1,
            (_, Some(a)) if state.counter > 0 && (a - ceiling_used).abs() < BOUNDARY_TOL => {
                state.counter -= 1
            }
            _ => {}
        }
        last_mstep = mstep;
        report = check_convergence(&state, last_mstep.as_ref(), opts);
        if state.star.is_some() && (state.star_proj() - state.opt_dagger).abs() < BOUNDARY_TOL {
            boundary = true;
            warnings.push(format!(
                "direction {:?}: parameter is on the boundary of the parameter space",
                q
            ));
            break;
        }
        if report.converged() {
            break;
        }
    }

    let Some(star) = state.star else {
        let best = state
            .evaluated
            .iter()
            .map(|e| e.max_violation)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::NoFeasiblePoint { best_minmax: best });
    };
    let best = state.evaluated[star].clone();
    let converged = boundary || report.converged();
    if !converged {
        warnings.push(format!(
            "direction {:?}: stopped after {} iterations without meeting every convergence criterion",
            q, state.iter
        ));
    }
    Ok(DirectionResult {
        q: q.to_vec(),
        optbound: dot(q, &best.theta),
        theta_hat: best.theta.clone(),
        c_at_opt: best.c_hat,
        cv_at_opt: best.max_violation,
        ei_at_opt: last_mstep.map_or(0.0, |m| m.ei),
        converged,
        boundary,
        iterations: state.iter,
        counter: state.counter,
        lp_count,
        surrogate_fits: fits,
        wall_time: start.elapsed().as_secs_f64(),
        report,
        evaluated: state.evaluated,
        warnings,
    })
}

/// Interval and per-direction diagnostics.
#[derive(Clone, Debug)]
pub struct RunResult {
    /// `-inf` for one-sided intervals.
    pub lower: f64,
    pub upper: f64,
    /// Upper direction first, then (two-sided only) the lower one.
    pub directions: Vec<DirectionResult>,
    /// Points evaluated before the directional searches.
    pub initial: Vec<Evaluation>,
    pub lp_count: usize,
    pub wall_time: f64,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.directions.iter().all(|d| d.converged)
    }
}

/// Precomputes, finds a feasible point, and runs EAM along `p` (and `-p`).
pub fn run_interval(problem: &Problem) -> Result<RunResult> {
    let threads = problem.options.parallel;
    if threads == 0 {
        return run_interval_inner(problem);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidOption {
            field: "parallel",
            reason: e.to_string(),
        })?;
    pool.install(|| run_interval_inner(problem))
}

fn run_interval_inner(problem: &Problem) -> Result<RunResult> {
    let start = Instant::now();
    let pre = precompute(problem)?;
    let ev = Evaluator::new(problem, &pre);
    let seed = problem.options.seed;
    let initial = if !problem.theta_feas.is_empty() {
        let pts: Vec<Vec<f64>> = problem
            .theta_feas
            .iter()
            .filter(|t| problem.space.contains(t, 1e-12))
            .cloned()
            .collect();
        ev.evaluate_all(&pts)?
    } else {
        let direct = feasible_search_direct(&ev, seed)?;
        if direct.found() {
            direct.evaluated
        } else {
            let second = feasible_search_eam(&ev, seed)?;
            if !second.found() {
                return Err(Error::NoFeasiblePoint {
                    best_minmax: direct.best_minmax.min(second.best_minmax),
                });
            }
            let mut all = direct.evaluated;
            all.extend(second.evaluated);
            all
        }
    };
    let mut lp_count: usize = initial.iter().map(|e| e.lp_count).sum();
    let p = problem.p.clone();
    let mut directions = vec![run_eam(&ev, &p, &initial, 1)?];
    if problem.options.interval_type == IntervalType::TwoSided {
        let neg: Vec<f64> = p.iter().map(|v| -v).collect();
        directions.push(run_eam(&ev, &neg, &initial, 2)?);
    }
    lp_count += directions.iter().map(|d| d.lp_count).sum::<usize>();
    let upper = directions[0].optbound;
    let lower = directions.get(1).map_or(f64::NEG_INFINITY, |d| -d.optbound);
    Ok(RunResult {
        lower,
        upper,
        directions,
        initial,
        lp_count,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
