//! Models whose moments are signed column means plus a linear function of θ.
//! The axis-aligned and rotated box models are special cases.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::{Dataset, FHat, MomentCounts, MomentJacobian, MomentModel, MomentValues};

/// `sign * E[W_column] + a' theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMoment {
    pub column: usize,
    pub sign: f64,
    pub a: Vec<f64>,
}

impl LinearMoment {
    pub fn new(column: usize, sign: f64, a: Vec<f64>) -> Self {
        Self { column, sign, a }
    }
}

/// Inequalities `E[m_j] <= 0` and undoubled equalities `E[m_j] = 0`, all of the
/// form [`LinearMoment`]. Keep flags are always on.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    d: usize,
    ineq: Vec<LinearMoment>,
    eq: Vec<LinearMoment>,
}

impl LinearModel {
    pub fn new(d: usize, ineq: Vec<LinearMoment>, eq: Vec<LinearMoment>) -> Self {
        assert!(ineq.iter().chain(&eq).all(|m| m.a.len() == d));
        Self { d, ineq, eq }
    }

    /// Identified set `[E L_k, E U_k]` per coordinate; data columns
    /// `L1, U1, L2, U2, ...`.
    pub fn axis_box(d: usize) -> Self {
        Self::rotated(&DMatrix::identity(d, d))
    }

    /// Box constraints on `R theta`: `E[L_k] <= (R theta)_k <= E[U_k]`.
    pub fn rotated(r: &DMatrix<f64>) -> Self {
        let d = r.ncols();
        let mut ineq = Vec::new();
        for k in 0..r.nrows() {
            let row: Vec<f64> = r.row(k).iter().copied().collect();
            ineq.push(LinearMoment::new(
                2 * k,
                1.0,
                row.iter().map(|v| -v).collect(),
            ));
            ineq.push(LinearMoment::new(2 * k + 1, -1.0, row));
        }
        Self::new(d, ineq, Vec::new())
    }

    /// 2-d box rotated by `angle` radians.
    pub fn rotated_2d(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::rotated(&DMatrix::from_row_slice(2, 2, &[c, s, -s, c]))
    }

    pub fn ineq(&self) -> &[LinearMoment] {
        &self.ineq
    }

    pub fn eq(&self) -> &[LinearMoment] {
        &self.eq
    }

    fn means(&self, data: &Dataset) -> Vec<f64> {
        let n = data.nrows() as f64;
        let mut m = vec![0.0; data.ncols()];
        for row in data.rows() {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        m.iter().map(|v| v / n).collect()
    }
}

impl MomentModel for LinearModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn counts(&self) -> MomentCounts {
        MomentCounts {
            j1: self.ineq.len(),
            j2: self.eq.len(),
            j3: 0,
        }
    }

    fn f_hat(&self, data: &Dataset, _f_keep_threshold: f64) -> FHat {
        let means = self.means(data);
        let f_ineq: Vec<f64> = self.ineq.iter().map(|m| m.sign * means[m.column]).collect();
        let half: Vec<f64> = self.eq.iter().map(|m| m.sign * means[m.column]).collect();
        let f_eq: Vec<f64> = half
            .iter()
            .copied()
            .chain(half.iter().map(|v| -v))
            .collect();
        FHat {
            keep_ineq: vec![true; f_ineq.len()],
            keep_eq: vec![true; f_eq.len()],
            paired: vec![None; f_ineq.len()],
            f_ineq,
            f_eq,
        }
    }

    fn g(&self, theta: &[f64]) -> MomentValues {
        let lin = |m: &LinearMoment| m.a.iter().zip(theta).map(|(a, t)| a * t).sum::<f64>();
        let half: Vec<f64> = self.eq.iter().map(lin).collect();
        MomentValues {
            ineq: self.ineq.iter().map(lin).collect(),
            eq: half
                .iter()
                .copied()
                .chain(half.iter().map(|v| -v))
                .collect(),
        }
    }

    fn g_gradient(&self, _theta: &[f64]) -> MomentJacobian {
        let j2 = self.eq.len();
        MomentJacobian {
            ineq: DMatrix::from_fn(self.ineq.len(), self.d, |j, k| self.ineq[j].a[k]),
            eq: DMatrix::from_fn(2 * j2, self.d, |j, k| {
                if j < j2 {
                    self.eq[j].a[k]
                } else {
                    -self.eq[j - j2].a[k]
                }
            }),
        }
    }

    fn sigma_hat(&self, data: &Dataset, _f_ineq: &[f64], _f_eq: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let means = self.means(data);
        let n = data.nrows() as f64;
        let mut ss = vec![0.0; data.ncols()];
        for row in data.rows() {
            for ((acc, v), m) in ss.iter_mut().zip(row).zip(&means) {
                *acc += (v - m) * (v - m);
            }
        }
        let sd: Vec<f64> = ss.iter().map(|s| (s / (n - 1.0)).sqrt()).collect();
        let half: Vec<f64> = self.eq.iter().map(|m| sd[m.column]).collect();
        (
            self.ineq.iter().map(|m| sd[m.column]).collect(),
            half.iter().chain(&half).copied().collect(),
        )
    }
}

/// Draws `n` rows with column `c` distributed `N(means[c], sd^2)`.
pub fn simulate_normal_columns(
    means: &[f64],
    sd: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    let mut values = Vec::with_capacity(n * means.len());
    let noise = Normal::new(0.0, sd).expect("sd must be finite and non-negative");
    for _ in 0..n {
        for m in means {
            values.push(m + noise.sample(rng));
        }
    }
    Dataset::new(n, means.len(), values)
}

/// Data for [`LinearModel::axis_box`] with identified set `[lo_k, hi_k]`.
pub fn simulate_box(
    lo: &[f64],
    hi: &[f64],
    sd: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    let means: Vec<f64> = lo.iter().zip(hi).flat_map(|(l, h)| [*l, *h]).collect();
    simulate_normal_columns(&means, sd, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_identified_set_from_population_moments() {
        let m = LinearModel::axis_box(2);
        // Population data: a single row equal to the means.
        let data = Dataset::from_rows(&[vec![0.0, 1.0, -0.5, 0.5]]).unwrap();
        let f = m.f_hat(&data, 1e-4);
        let inside = |t: &[f64]| {
            let g = m.g(t);
            f.f_ineq.iter().zip(&g.ineq).all(|(a, b)| a + b <= 1e-12)
        };
        assert!(inside(&[0.0, 0.5]) && inside(&[1.0, -0.5]) && inside(&[0.3, 0.0]));
        assert!(!inside(&[1.01, 0.0]) && !inside(&[-0.01, 0.0]) && !inside(&[0.5, 0.51]));
    }

    #[test]
    fn gradient_is_coefficient_matrix() {
        let m = LinearModel::rotated_2d(std::f64::consts::FRAC_PI_4);
        let jac = m.g_gradient(&[0.3, 0.1]);
        let g0 = m.g(&[0.0, 0.0]);
        let g1 = m.g(&[1.0, 0.0]);
        for j in 0..4 {
            assert!((g1.ineq[j] - g0.ineq[j] - jac.ineq[(j, 0)]).abs() < 1e-15);
        }
    }

    #[test]
    fn equalities_are_doubled() {
        let m = LinearModel::new(
            1,
            vec![LinearMoment::new(0, 1.0, vec![-1.0])],
            vec![LinearMoment::new(1, 1.0, vec![-2.0])],
        );
        let g = m.g(&[0.7]);
        assert_eq!(g.eq[1], -g.eq[0]);
        let data = Dataset::from_rows(&[vec![0.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let f = m.f_hat(&data, 1e-4);
        assert_eq!(f.f_eq, vec![2.0, -2.0]);
    }
}
