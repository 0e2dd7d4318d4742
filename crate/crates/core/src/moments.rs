//! θ-independent quantities: sample moments, standard deviations, keep flags,
//! the recentered bootstrap ensemble, and the GMS shift.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Dataset, MomentCounts, MomentModel, MomentValues, Options};
use crate::rng::{substream, TAG_BOOTSTRAP};

/// Sample moments and their studentization, fixed for a whole run.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMoments {
    pub counts: MomentCounts,
    pub f_ineq: Vec<f64>,
    pub f_eq: Vec<f64>,
    pub sigma_ineq: Vec<f64>,
    pub sigma_eq: Vec<f64>,
    pub keep_ineq: Vec<bool>,
    pub keep_eq: Vec<bool>,
    pub paired: Vec<Option<usize>>,
    pub n: usize,
}

impl EmpiricalMoments {
    pub fn j_total(&self) -> usize {
        self.f_ineq.len() + self.f_eq.len()
    }

    /// Stacked `[ineq; eq]` indices of the kept moments.
    pub fn kept(&self) -> Vec<usize> {
        let j1 = self.f_ineq.len();
        (0..j1)
            .filter(|&j| self.keep_ineq[j])
            .chain(
                (0..self.f_eq.len())
                    .filter(|&j| self.keep_eq[j])
                    .map(|j| j1 + j),
            )
            .collect()
    }

    pub fn kept_count(&self) -> usize {
        self.keep_ineq
            .iter()
            .chain(&self.keep_eq)
            .filter(|k| **k)
            .count()
    }

    pub fn f(&self, j: usize) -> f64 {
        let j1 = self.f_ineq.len();
        if j < j1 {
            self.f_ineq[j]
        } else {
            self.f_eq[j - j1]
        }
    }

    pub fn sigma(&self, j: usize) -> f64 {
        let j1 = self.f_ineq.len();
        if j < j1 {
            self.sigma_ineq[j]
        } else {
            self.sigma_eq[j - j1]
        }
    }

    /// Studentized moments `sqrt(n) (f_j + g_j) / sigma_j` for every stacked index.
    pub fn studentized(&self, g: &MomentValues) -> Vec<f64> {
        let sqrt_n = (self.n as f64).sqrt();
        let j1 = self.f_ineq.len();
        (0..self.j_total())
            .map(|j| {
                let gj = if j < j1 { g.ineq[j] } else { g.eq[j - j1] };
                sqrt_n * (self.f(j) + gj) / self.sigma(j)
            })
            .collect()
    }
}

/// Computes `f_hat`, `sigma_hat` and keep flags. Dropped moments get `sigma = 1`.
pub fn compute_empirical(
    data: &Dataset,
    model: &dyn MomentModel,
    opts: &Options,
) -> Result<EmpiricalMoments> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::TooFewObservations(n));
    }
    let counts = model.counts();
    let fh = model.f_hat(data, opts.f_keep_threshold);
    check_len("f_ineq", counts.j1, fh.f_ineq.len())?;
    check_len("f_eq", 2 * counts.j2, fh.f_eq.len())?;
    check_len("keep_ineq", counts.j1, fh.keep_ineq.len())?;
    check_len("keep_eq", 2 * counts.j2, fh.keep_eq.len())?;
    if fh.f_ineq.iter().chain(&fh.f_eq).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("f_hat"));
    }
    let (mut sigma_ineq, mut sigma_eq) = model.sigma_hat(data, &fh.f_ineq, &fh.f_eq);
    check_len("sigma_ineq", counts.j1, sigma_ineq.len())?;
    check_len("sigma_eq", 2 * counts.j2, sigma_eq.len())?;
    for (j, (s, keep)) in sigma_ineq
        .iter_mut()
        .zip(&fh.keep_ineq)
        .chain(sigma_eq.iter_mut().zip(&fh.keep_eq))
        .enumerate()
    {
        if !*keep {
            *s = 1.0;
        } else if s.is_nan() || s.is_infinite() {
            return Err(Error::NonFinite("sigma_hat"));
        } else if *s <= 0.0 {
            return Err(Error::ZeroSigma(j));
        }
    }
    let paired = if fh.paired.len() == counts.j1 {
        fh.paired
    } else {
        vec![None; counts.j1]
    };
    Ok(EmpiricalMoments {
        counts,
        f_ineq: fh.f_ineq,
        f_eq: fh.f_eq,
        sigma_ineq,
        sigma_eq,
        keep_ineq: fh.keep_ineq,
        keep_eq: fh.keep_eq,
        paired,
        n,
    })
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Recentered, studentized bootstrap moments `G^b_j`, one stacked row per draw.
#[derive(Clone, Debug, PartialEq)]
pub struct BootstrapEnsemble {
    j1: usize,
    draws: Vec<Vec<f64>>,
}

impl BootstrapEnsemble {
    pub fn from_draws(j1: usize, draws: Vec<Vec<f64>>) -> Self {
        Self { j1, draws }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Stacked `[ineq; eq]` row of draw `b`.
    pub fn row(&self, b: usize) -> &[f64] {
        &self.draws[b]
    }

    pub fn ineq(&self, b: usize) -> &[f64] {
        &self.draws[b][..self.j1]
    }

    pub fn eq(&self, b: usize) -> &[f64] {
        &self.draws[b][self.j1..]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.draws
    }
}

/// Nonparametric bootstrap with `opts.b` draws; draw `b` uses its own RNG stream.
pub fn bootstrap_ensemble(
    data: &Dataset,
    model: &dyn MomentModel,
    moments: &EmpiricalMoments,
    opts: &Options,
    seed: u64,
) -> Result<BootstrapEnsemble> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::TooFewObservations(n));
    }
    bootstrap_ensemble_with(data, model, moments, opts, |b| {
        let mut rng = substream(seed, TAG_BOOTSTRAP, b as u64);
        (0..n).map(|_| rng.random_range(0..n)).collect()
    })
}

/// Same as [`bootstrap_ensemble`] with a caller-supplied resampler mapping the
/// draw index to row indices.
pub fn bootstrap_ensemble_with<F>(
    data: &Dataset,
    model: &dyn MomentModel,
    moments: &EmpiricalMoments,
    opts: &Options,
    resample: F,
) -> Result<BootstrapEnsemble>
where
    F: Fn(usize) -> Vec<usize> + Sync,
{
    if opts.b < 1 {
        return Err(Error::InvalidOption {
            field: "b",
            reason: "need at least one bootstrap repetition".into(),
        });
    }
    let sqrt_n = (moments.n as f64).sqrt();
    let j1 = moments.f_ineq.len();
    let keep: Vec<bool> = moments
        .keep_ineq
        .iter()
        .chain(&moments.keep_eq)
        .copied()
        .collect();
    let draws = (0..opts.b)
        .into_par_iter()
        .map(|b| {
            let sample = data.resample(&resample(b));
            let fb = model.f_hat(&sample, opts.f_keep_threshold);
            let row: Vec<f64> = fb
                .f_ineq
                .iter()
                .chain(&fb.f_eq)
                .enumerate()
                .map(|(j, fbj)| {
                    if keep[j] {
                        sqrt_n * (fbj - moments.f(j)) / moments.sigma(j)
                    } else {
                        0.0
                    }
                })
                .collect();
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("bootstrap f_hat"));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BootstrapEnsemble { j1, draws })
}

/// GMS shift on the inequalities at one θ. Equalities always get shift 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GmsShift {
    /// `xi_j(theta) = sqrt(n) (f_j + g_j) / (sigma_j kappa_n)`.
    pub xi: Vec<f64>,
    pub phi: Vec<f64>,
    /// Moments removed from every bootstrap system at this θ.
    pub deleted: Vec<bool>,
}

impl GmsShift {
    pub fn deleted_count(&self) -> usize {
        self.deleted.iter().filter(|d| **d).count()
    }
}

pub fn gms_shift(
    theta: &[f64],
    model: &dyn MomentModel,
    moments: &EmpiricalMoments,
    opts: &Options,
) -> GmsShift {
    gms_shift_from_values(&model.g(theta), moments, opts)
}

pub fn gms_shift_from_values(
    g: &MomentValues,
    moments: &EmpiricalMoments,
    opts: &Options,
) -> GmsShift {
    let kappa = opts.kappa.value(moments.n);
    let sqrt_n = (moments.n as f64).sqrt();
    let j1 = moments.f_ineq.len();
    let mut xi = Vec::with_capacity(j1);
    let mut phi = Vec::with_capacity(j1);
    let mut deleted = Vec::with_capacity(j1);
    for j in 0..j1 {
        let x = sqrt_n * (moments.f_ineq[j] + g.ineq[j]) / (moments.sigma_ineq[j] * kappa);
        xi.push(x);
        if !moments.keep_ineq[j] {
            phi.push(0.0);
            deleted.push(false);
            continue;
        }
        let v = opts.gms.apply(x);
        if v == f64::NEG_INFINITY {
            phi.push(0.0);
            deleted.push(true);
        } else {
            phi.push(v);
            deleted.push(false);
        }
    }
    GmsShift { xi, phi, deleted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Gms;

    fn toy_moments(f_ineq: Vec<f64>, n: usize) -> EmpiricalMoments {
        let j1 = f_ineq.len();
        EmpiricalMoments {
            counts: MomentCounts::new(j1, 0, 0).unwrap(),
            f_ineq,
            f_eq: vec![],
            sigma_ineq: vec![1.0; j1],
            sigma_eq: vec![],
            keep_ineq: vec![true; j1],
            keep_eq: vec![],
            paired: vec![None; j1],
            n,
        }
    }

    #[test]
    fn hard_threshold_shift() {
        let opts = Options {
            kappa: crate::model::Kappa::Constant(1.0),
            ..Options::default()
        };
        // n = 1 so xi equals f + g directly.
        let m = toy_moments(vec![-0.5, -2.0, 0.3], 1);
        let g = MomentValues {
            ineq: vec![0.0; 3],
            eq: vec![],
        };
        let s = gms_shift_from_values(&g, &m, &opts);
        assert_eq!(s.phi, vec![0.0, 0.0, 0.0]);
        assert_eq!(s.deleted, vec![false, true, false]);
    }

    #[test]
    fn default_kappa_at_4000() {
        // sqrt(ln 4000) = 2.879939...
        let k = crate::model::Kappa::SqrtLogN.value(4000);
        assert!((k - 2.879_939_17).abs() < 1e-8, "{k}");
    }

    #[test]
    fn gms_monotone_in_xi() {
        let gms = Gms::HardThreshold;
        let mut prev_deleted = true;
        for i in 0..400 {
            let x = -4.0 + 0.02 * i as f64;
            let deleted = gms.apply(x) == f64::NEG_INFINITY;
            assert!(prev_deleted || !deleted);
            prev_deleted = deleted;
        }
    }
}
