//! Ordinary kriging with a constant trend and Gaussian correlation
//! `R(x, x') = exp(-sum_k ((z_k - z'_k) / l_k)^2)` on coordinates rescaled to the
//! design's bounding box.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Floor applied to the predictive standard deviation wherever it divides.
pub const SD_FLOOR: f64 = 1e-8;

const LENGTH_MIN: f64 = 1e-3;
const LENGTH_MAX: f64 = 1e2;
const NUGGET_START: f64 = 1e-10;
const NUGGET_MAX: f64 = 1e-4;
const REFINE_STEPS: usize = 20;

/// Prediction with analytic derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub sd: f64,
    pub sd_gradient: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct KrigingSurrogate {
    design: Vec<Vec<f64>>,
    responses: Vec<f64>,
    shift: Vec<f64>,
    scale: Vec<f64>,
    /// Design in normalized coordinates.
    z: Vec<Vec<f64>>,
    /// Correlation lengths in normalized coordinates.
    lengths: Vec<f64>,
    trend: f64,
    process_var: f64,
    nugget: f64,
    chol: Cholesky<f64, Dyn>,
    /// `R^{-1} (y - trend)` refined against the unregularized matrix.
    weights: DVector<f64>,
}

struct Factored {
    chol: Cholesky<f64, Dyn>,
    nugget: f64,
    trend: f64,
    process_var: f64,
    loglik: f64,
    weights: DVector<f64>,
    /// Refined weights reproduce every response to `10 nugget |y| + 1e-8`.
    interpolates: bool,
}

impl KrigingSurrogate {
    pub fn fit(design: &[Vec<f64>], responses: &[f64]) -> Result<Self> {
        Self::fit_with_hint(design, responses, None)
    }

    /// Fits the model; `hint` (normalized correlation lengths from an earlier
    /// fit) replaces the coarse grid with a local refinement around it.
    pub fn fit_with_hint(
        design: &[Vec<f64>],
        responses: &[f64],
        hint: Option<&[f64]>,
    ) -> Result<Self> {
        let l = design.len();
        if l != responses.len() {
            return Err(Error::DimensionMismatch {
                what: "kriging responses",
                expected: l,
                found: responses.len(),
            });
        }
        let d = design.first().map_or(0, Vec::len);
        if d == 0 || l < d + 1 {
            return Err(Error::DegenerateDesign(format!(
                "{l} points for dimension {d}"
            )));
        }
        if design.iter().any(|r| r.len() != d) {
            return Err(Error::DegenerateDesign("ragged design".into()));
        }
        if design
            .iter()
            .flatten()
            .chain(responses)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("kriging design"));
        }
        for i in 0..l {
            for j in 0..i {
                if design[i] == design[j] {
                    return Err(Error::DuplicateDesign(j, i));
                }
            }
        }

        let mut shift = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for k in 0..d {
            let lo = design.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
            let hi = design
                .iter()
                .map(|r| r[k])
                .fold(f64::NEG_INFINITY, f64::max);
            shift[k] = lo;
            if hi > lo {
                scale[k] = hi - lo;
            }
        }
        let z: Vec<Vec<f64>> = design
            .iter()
            .map(|r| (0..d).map(|k| (r[k] - shift[k]) / scale[k]).collect())
            .collect();
        let y = DVector::from_column_slice(responses);

        let lengths = select_lengths(&z, &y, hint)?;
        let fac = factor(&z, &y, &lengths)?;
        Ok(Self {
            design: design.to_vec(),
            responses: responses.to_vec(),
            shift,
            scale,
            z,
            lengths,
            trend: fac.trend,
            process_var: fac.process_var,
            nugget: fac.nugget,
            chol: fac.chol,
            weights: fac.weights,
        })
    }

    pub fn len(&self) -> usize {
        self.design.len()
    }

    pub fn is_empty(&self) -> bool {
        self.design.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn design(&self) -> &[Vec<f64>] {
        &self.design
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn trend(&self) -> f64 {
        self.trend
    }

    pub fn process_var(&self) -> f64 {
        self.process_var
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    /// Correlation lengths in the original coordinates.
    pub fn corr_lengths(&self) -> Vec<f64> {
        self.lengths
            .iter()
            .zip(&self.scale)
            .map(|(l, s)| l * s)
            .collect()
    }

    /// Correlation lengths on the normalized design box (usable as a fit hint).
    pub fn normalized_lengths(&self) -> &[f64] {
        &self.lengths
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn corr_vector(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.z.len(),
            self.z.iter().map(|zi| gauss(z, zi, &self.lengths)),
        )
    }

    /// Predicted value only.
    pub fn value(&self, x: &[f64]) -> f64 {
        let z = self.normalize(x);
        self.trend + self.corr_vector(&z).dot(&self.weights)
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let d = self.dim();
        let l = self.len();
        let z = self.normalize(x);
        let r = self.corr_vector(&z);
        // dr_i / dx_k
        let mut jac = DMatrix::zeros(l, d);
        for i in 0..l {
            let zi = &self.z[i];
            for k in 0..d {
                let t = 1.0 / (self.lengths[k] * self.lengths[k]);
                jac[(i, k)] = -2.0 * t * (z[k] - zi[k]) * r[i] / self.scale[k];
            }
        }
        let value = self.trend + r.dot(&self.weights);
        let gradient: Vec<f64> = (jac.transpose() * &self.weights).iter().copied().collect();

        let v = self.chol.solve(&r);
        let mse = match self.z.iter().position(|zi| *zi == z) {
            // 1 - r'v = nugget - nugget^2 [R^-1]_ii at a design point, free of cancellation
            Some(i) => {
                let mut e = DVector::zeros(l);
                e[i] = 1.0;
                let diag = self
                    .chol
                    .l_dirty()
                    .solve_lower_triangular(&e)
                    .map_or(0.0, |w| w.norm_squared());
                self.process_var * self.nugget * (1.0 - self.nugget * diag).max(0.0)
            }
            None => self.process_var * (1.0 - r.dot(&v)),
        };
        let dmse = (jac.transpose() * &v) * (-2.0 * self.process_var);
        let sd = mse.max(0.0).sqrt();
        let denom = 2.0 * sd.max(SD_FLOOR);
        let sd_gradient = if mse > 0.0 {
            dmse.iter().map(|g| g / denom).collect()
        } else {
            vec![0.0; d]
        };
        Prediction {
            value,
            gradient,
            sd,
            sd_gradient,
        }
    }
}

fn gauss(a: &[f64], b: &[f64], lengths: &[f64]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .zip(lengths)
        .map(|((x, y), l)| {
            let t = (x - y) / l;
            t * t
        })
        .sum();
    (-s).exp()
}

fn correlation(z: &[Vec<f64>], lengths: &[f64]) -> DMatrix<f64> {
    let l = z.len();
    let mut r = DMatrix::identity(l, l);
    for i in 0..l {
        for j in 0..i {
            let v = gauss(&z[i], &z[j], lengths);
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    r
}

/// Factorizes `R + nugget I` with nugget escalation and evaluates the
/// concentrated log-likelihood.
fn factor(z: &[Vec<f64>], y: &DVector<f64>, lengths: &[f64]) -> Result<Factored> {
    let l = z.len();
    let r = correlation(z, lengths);
    let mut nugget = NUGGET_START;
    loop {
        let mut m = r.clone();
        for i in 0..l {
            m[(i, i)] += nugget;
        }
        if let Some(chol) = m.cholesky() {
            let ones = DVector::from_element(l, 1.0);
            let c = chol.solve(&ones);
            let a = ones.dot(&c);
            let trend = y.dot(&c) / a;
            let resid = y.add_scalar(-trend);
            let process_var = (resid.dot(&chol.solve(&resid)) / l as f64).max(0.0);
            let logdet: f64 = 2.0
                * chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|v| v.ln())
                    .sum::<f64>();
            let loglik = -0.5 * l as f64 * process_var.max(1e-300).ln() - 0.5 * logdet;
            // weights refined against the unregularized matrix
            let mut weights = chol.solve(&resid);
            let mut defect = &resid - &r * &weights;
            for _ in 0..REFINE_STEPS {
                weights += chol.solve(&defect);
                defect = &resid - &r * &weights;
            }
            let interpolates = defect
                .iter()
                .zip(y.iter())
                .all(|(e, yi)| e.abs() <= 10.0 * nugget * yi.abs() + 1e-8);
            return Ok(Factored {
                chol,
                nugget,
                trend,
                process_var,
                loglik,
                weights,
                interpolates,
            });
        }
        nugget *= 10.0;
        if nugget > NUGGET_MAX * 1.000_001 {
            return Err(Error::DegenerateDesign(
                "correlation matrix not positive definite at the largest nugget".into(),
            ));
        }
    }
}

/// Lengths that interpolate the design rank above those that do not; ties
/// go to the likelihood.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
struct Score(bool, f64);

const NO_FIT: Score = Score(false, f64::NEG_INFINITY);

fn loglik_at(z: &[Vec<f64>], y: &DVector<f64>, log_lengths: &[f64]) -> Score {
    let lengths: Vec<f64> = log_lengths.iter().map(|v| 10f64.powf(*v)).collect();
    factor(z, y, &lengths).map_or(NO_FIT, |f| Score(f.interpolates, f.loglik))
}

/// Isotropic log grid, then one golden-section sweep per coordinate, on the
/// likelihood restricted to interpolating lengths when any exist.
fn select_lengths(z: &[Vec<f64>], y: &DVector<f64>, hint: Option<&[f64]>) -> Result<Vec<f64>> {
    let d = z[0].len();
    let (lo, hi) = (LENGTH_MIN.log10(), LENGTH_MAX.log10());
    let (mut best, radius, evals) = match hint {
        Some(h) if h.len() == d => (
            h.iter()
                .map(|v| v.clamp(LENGTH_MIN, LENGTH_MAX).log10())
                .collect::<Vec<_>>(),
            0.25,
            5,
        ),
        _ => {
            let mut best_v = NO_FIT;
            let mut best_g = 0.0;
            for i in 0..9 {
                let g = lo + (hi - lo) * i as f64 / 8.0;
                let v = loglik_at(z, y, &vec![g; d]);
                if v > best_v {
                    best_v = v;
                    best_g = g;
                }
            }
            (vec![best_g; d], 0.5, 8)
        }
    };
    let mut best_val = loglik_at(z, y, &best);
    if d > 1 {
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for k in 0..d {
            let mut a = (best[k] - radius).max(lo);
            let mut b = (best[k] + radius).min(hi);
            let eval = |v: f64, base: &[f64]| {
                let mut t = base.to_vec();
                t[k] = v;
                loglik_at(z, y, &t)
            };
            let mut x1 = b - phi * (b - a);
            let mut x2 = a + phi * (b - a);
            let mut f1 = eval(x1, &best);
            let mut f2 = eval(x2, &best);
            for _ in 2..evals {
                if f1 >= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - phi * (b - a);
                    f1 = eval(x1, &best);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + phi * (b - a);
                    f2 = eval(x2, &best);
                }
            }
            let (x, f) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
            if f > best_val {
                best[k] = x;
                best_val = f;
            }
        }
    }
    if best_val == NO_FIT {
        return Err(Error::DegenerateDesign(
            "no correlation length admits a factorization".into(),
        ));
    }
    Ok(best.iter().map(|v| 10f64.powf(*v)).collect())
}

/// Indices of points kept after dropping any point within `radius` of an
/// earlier kept point.
pub fn dedupe(points: &[Vec<f64>], radius: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let close = kept.iter().any(|&j| {
            let d2: f64 = p
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() <= radius
        });
        if !close {
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_design() -> Vec<Vec<f64>> {
        let mut d = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                d.push(vec![i as f64 / 4.0, j as f64 / 4.0 + 0.1 * i as f64]);
            }
        }
        d
    }

    #[test]
    fn constant_field() {
        let design = grid_design();
        let y = vec![3.0; design.len()];
        let m = KrigingSurrogate::fit(&design, &y).unwrap();
        assert!((m.trend() - 3.0).abs() < 1e-9);
        assert!(m.process_var() < 1e-12);
        for x in [[0.3, 0.7], [5.0, -2.0], [0.0, 0.0]] {
            assert!((m.predict(&x).value - 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn duplicate_rows_rejected() {
        let mut design = grid_design();
        design.push(design[3].clone());
        let y: Vec<f64> = (0..design.len()).map(|i| i as f64).collect();
        assert!(matches!(
            KrigingSurrogate::fit(&design, &y),
            Err(Error::DuplicateDesign(3, _))
        ));
    }

    #[test]
    fn far_field_reverts_to_trend() {
        let design = grid_design();
        let y: Vec<f64> = design.iter().map(|r| (3.0 * r[0]).sin() + r[1]).collect();
        let m = KrigingSurrogate::fit(&design, &y).unwrap();
        let far: Vec<f64> = m.corr_lengths().iter().map(|l| 1.0 + 20.0 * l).collect();
        let p = m.predict(&far);
        assert!((p.value - m.trend()).abs() <= 1e-6 * m.trend().abs().max(1.0));
        assert!((p.sd - m.process_var().sqrt()).abs() <= 1e-6 * m.process_var().sqrt());
    }

    #[test]
    fn dedupe_keeps_first() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1e-9, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1e-8],
        ];
        assert_eq!(dedupe(&pts, 1e-6), vec![0, 2]);
    }
}
