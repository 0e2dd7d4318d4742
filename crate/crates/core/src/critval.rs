//! Critical values at a fixed θ.
//!
//! The calibrated value is the smallest `c >= 0` with
//! `Psi(c) = (1/B) sum_b psi_b(c) - (1 - alpha) >= 0`, where `psi_b(c)` says
//! whether the localized system of draw `b` is feasible. `Psi` is a
//! non-decreasing step function of `c`; the root is bracketed on
//! `[0, Phi^{-1}(1 - alpha / J)]` and located with a Brent–Dekker search that
//! reuses per-draw monotonicity to skip LP solves.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::LambdaTemplate;
use crate::model::{MomentModel, Options, ParameterSpace};
use crate::moments::{gms_shift_from_values, BootstrapEnsemble, EmpiricalMoments, GmsShift};
use crate::stats::norm_quantile;

/// Outcome of one critical-value computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Critval {
    pub c_hat: f64,
    /// Number of feasibility checks handed to the LP kernel.
    pub lp_count: usize,
    /// `Psi(c_hat)`; non-negative for the calibrated value.
    pub psi: f64,
}

/// Bonferroni bracket `Phi^{-1}(1 - alpha / J)`.
pub fn bonferroni_bound(alpha: f64, j: usize) -> f64 {
    norm_quantile(1.0 - alpha / j.max(1) as f64)
}

/// Number of feasible draws needed for `Psi >= 0`.
pub fn required_count(alpha: f64, b: usize) -> usize {
    ((1.0 - alpha) * b as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Per-draw knowledge of `psi_b`: feasible for `c >= feasible_from`,
/// infeasible for `c <= infeasible_upto`.
#[derive(Clone, Debug)]
pub struct PsiCache {
    feasible_from: Vec<f64>,
    infeasible_upto: Vec<f64>,
    enabled: bool,
}

impl PsiCache {
    pub fn new(b: usize, enabled: bool) -> Self {
        Self {
            feasible_from: vec![f64::INFINITY; b],
            infeasible_upto: vec![f64::NEG_INFINITY; b],
            enabled,
        }
    }

    pub fn lookup(&self, b: usize, c: f64) -> Option<bool> {
        if !self.enabled {
            None
        } else if c >= self.feasible_from[b] {
            Some(true)
        } else if c <= self.infeasible_upto[b] {
            Some(false)
        } else {
            None
        }
    }

    fn record(&mut self, b: usize, c: f64, feasible: bool) {
        if feasible {
            self.feasible_from[b] = self.feasible_from[b].min(c);
        } else {
            self.infeasible_upto[b] = self.infeasible_upto[b].max(c);
        }
        debug_assert!(self.infeasible_upto[b] < self.feasible_from[b]);
    }
}

/// Evaluates `psi_b(c)` for every draw at one θ.
pub struct PsiEvaluator<'a> {
    template: LambdaTemplate,
    boot: &'a BootstrapEnsemble,
    cache: PsiCache,
    lp_count: usize,
}

impl<'a> PsiEvaluator<'a> {
    pub fn new(template: LambdaTemplate, boot: &'a BootstrapEnsemble, use_cache: bool) -> Self {
        let cache = PsiCache::new(boot.len(), use_cache);
        Self {
            template,
            boot,
            cache,
            lp_count: 0,
        }
    }

    pub fn template(&self) -> &LambdaTemplate {
        &self.template
    }

    pub fn lp_count(&self) -> usize {
        self.lp_count
    }

    /// Number of draws whose system is feasible at `c`.
    pub fn feasible_count(&mut self, c: f64) -> Result<usize> {
        let template = &self.template;
        let boot = self.boot;
        let cache = &self.cache;
        let outcomes: Vec<(bool, bool)> = (0..boot.len())
            .into_par_iter()
            .map(|b| match cache.lookup(b, c) {
                Some(v) => Ok((v, false)),
                None => template.is_feasible(boot.row(b), c).map(|v| (v, true)),
            })
            .collect::<Result<_>>()?;
        let mut count = 0;
        for (b, (feasible, solved)) in outcomes.into_iter().enumerate() {
            if solved {
                self.lp_count += 1;
                if self.cache.enabled {
                    self.cache.record(b, c, feasible);
                }
            }
            count += feasible as usize;
        }
        Ok(count)
    }
}

/// Everything needed at one θ: the localized template and the GMS shift.
pub fn localize(
    theta: &[f64],
    moments: &EmpiricalMoments,
    model: &dyn MomentModel,
    space: &ParameterSpace,
    p: &[f64],
    opts: &Options,
) -> (LambdaTemplate, GmsShift) {
    let g = model.g(theta);
    let shift = gms_shift_from_values(&g, moments, opts);
    let grad = model.g_gradient(theta);
    let template = LambdaTemplate::new(theta, &grad, moments, &shift, space, p, opts);
    (template, shift)
}

/// Calibrated critical value with the monotonicity cache enabled.
pub fn calibrated_critval(
    theta: &[f64],
    moments: &EmpiricalMoments,
    boot: &BootstrapEnsemble,
    model: &dyn MomentModel,
    space: &ParameterSpace,
    p: &[f64],
    opts: &Options,
) -> Result<Critval> {
    let (template, _) = localize(theta, moments, model, space, p, opts);
    critval_from_template(template, boot, opts.alpha, opts.critval_tol, true)
}

/// Brent–Dekker search on `Psi` for a prepared template.
pub fn critval_from_template(
    template: LambdaTemplate,
    boot: &BootstrapEnsemble,
    alpha: f64,
    tol: f64,
    use_cache: bool,
) -> Result<Critval> {
    let b_total = boot.len();
    let required = required_count(alpha, b_total);
    let psi_of = |count: usize| -> f64 {
        let v = count as f64 / b_total as f64 - (1.0 - alpha);
        if count >= required {
            v.max(0.0)
        } else {
            v.min(-f64::EPSILON)
        }
    };
    let mut eval = PsiEvaluator::new(template, boot, use_cache);

    let j = eval.template().moment_rows();
    if j == 0 {
        // λ = 0 satisfies every remaining row for every draw.
        return Ok(Critval {
            c_hat: 0.0,
            lp_count: 0,
            psi: alpha,
        });
    }

    // Step 0: bracket [0, c_bar].
    let mut c_l = 0.0;
    let mut f_l = psi_of(eval.feasible_count(c_l)?);
    if f_l >= 0.0 {
        return Ok(Critval {
            c_hat: 0.0,
            lp_count: eval.lp_count(),
            psi: f_l,
        });
    }
    let mut c_u = bonferroni_bound(alpha, j);
    let mut f_u = if c_u.is_finite() {
        psi_of(eval.feasible_count(c_u)?)
    } else {
        -1.0
    };
    if f_u < 0.0 {
        // The `required`-th smallest λ = 0 threshold always brackets the root.
        let mut thresholds: Vec<f64> = (0..b_total)
            .map(|b| eval.template().zero_point_threshold(boot.row(b)))
            .collect();
        thresholds.sort_by(|a, b| a.total_cmp(b));
        c_u = thresholds[required.max(1) - 1];
        f_u = psi_of(eval.feasible_count(c_u)?);
        if f_u < 0.0 {
            return Err(Error::CritvalInconsistent(format!(
                "Psi({c_u}) = {f_u} < 0 at the zero-point bracket"
            )));
        }
    }

    // c_{-2} starts unset; the first step is a bisection.
    let mut prev2: Option<(f64, f64)> = None;
    let mut prev1 = (c_l, f_l);
    let mut widths = vec![c_u - c_l];
    let mut last_proposal = f64::NAN;
    for _ in 0..500 {
        // Step 4: convergence.
        if f_u <= tol || c_u - c_l <= tol {
            return Ok(Critval {
                c_hat: c_u,
                lp_count: eval.lp_count(),
                psi: f_u,
            });
        }
        // Step 1: method selection.
        let mut c2 = 0.5 * (c_l + c_u);
        if prev2.is_some() {
            let n = widths.len();
            let slow = n >= 3 && widths[n - 1] > 0.5 * widths[n - 3];
            if !slow {
                let (c_m1, f_m1) = prev1;
                let cand = if c_m1 != c_l && c_m1 != c_u && f_m1 != f_l && f_m1 != f_u && f_l != f_u
                {
                    inverse_quadratic(c_m1, f_m1, c_l, f_l, c_u, f_u)
                } else if f_u != f_l {
                    c_l - f_l * (c_u - c_l) / (f_u - f_l)
                } else {
                    f64::NAN
                };
                let inside = cand > c_l + 1e-12 && cand < c_u - 1e-12;
                let repeats = (cand - last_proposal).abs() <= 1e-12;
                if cand.is_finite() && inside && !repeats {
                    c2 = cand;
                }
            }
        }
        last_proposal = c2;
        // Step 2: evaluate with cached monotonicity.
        let f2 = psi_of(eval.feasible_count(c2)?);
        // Step 3: update.
        prev2 = Some(prev1);
        prev1 = (c_l, f_l);
        if f2 >= 0.0 {
            c_u = c2;
            f_u = f2;
        } else {
            c_l = c2;
            f_l = f2;
        }
        widths.push(c_u - c_l);
    }
    Err(Error::CritvalInconsistent(
        "root search did not terminate".into(),
    ))
}

fn inverse_quadratic(a: f64, fa: f64, b: f64, fb: f64, c: f64, fc: f64) -> f64 {
    a * fb * fc / ((fa - fb) * (fa - fc))
        + b * fa * fc / ((fb - fa) * (fb - fc))
        + c * fa * fb / ((fc - fa) * (fc - fb))
}

/// Andrews–Soares style critical value: the `(1 - alpha)` bootstrap quantile of
/// `max_j (G^b_j + phi_j)` over kept, undeleted moments, floored at zero.
pub fn as_critval(
    theta: &[f64],
    model: &dyn MomentModel,
    moments: &EmpiricalMoments,
    boot: &BootstrapEnsemble,
    opts: &Options,
) -> f64 {
    let shift = gms_shift_from_values(&model.g(theta), moments, opts);
    as_critval_with_shift(&shift, moments, boot, opts.alpha)
}

pub fn as_critval_with_shift(
    shift: &GmsShift,
    moments: &EmpiricalMoments,
    boot: &BootstrapEnsemble,
    alpha: f64,
) -> f64 {
    let j1 = moments.f_ineq.len();
    let active: Vec<(usize, f64)> = (0..j1)
        .filter(|&j| moments.keep_ineq[j] && !shift.deleted[j])
        .map(|j| (j, shift.phi[j]))
        .chain(
            (0..moments.f_eq.len())
                .filter(|&j| moments.keep_eq[j])
                .map(|j| (j1 + j, 0.0)),
        )
        .collect();
    if active.is_empty() || boot.is_empty() {
        return 0.0;
    }
    let mut maxima: Vec<f64> = boot
        .rows()
        .iter()
        .map(|row| {
            active
                .iter()
                .map(|&(j, phi)| row[j] + phi)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    maxima.sort_by(|a, b| a.total_cmp(b));
    let r = required_count(alpha, boot.len()).clamp(1, boot.len());
    maxima[r - 1].max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bonferroni_reference() {
        // Phi^{-1}(1 - 0.05/16)
        let c = bonferroni_bound(0.05, 16);
        assert!((c - 2.7344).abs() < 1e-4, "{c}");
    }

    #[test]
    fn required_count_rounds_up() {
        assert_eq!(required_count(0.05, 201), 191);
        assert_eq!(required_count(0.05, 1000), 950);
        assert_eq!(required_count(0.0, 10), 10);
    }

    #[test]
    fn cache_monotone_lookups() {
        let mut cache = PsiCache::new(2, true);
        cache.record(0, 1.0, true);
        cache.record(0, 0.2, false);
        assert_eq!(cache.lookup(0, 1.5), Some(true));
        assert_eq!(cache.lookup(0, 0.1), Some(false));
        assert_eq!(cache.lookup(0, 0.5), None);
        assert_eq!(cache.lookup(1, 0.5), None);
        let off = PsiCache::new(1, false);
        assert_eq!(off.lookup(0, 1.0), None);
    }
}
