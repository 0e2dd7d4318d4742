//! Five-dimensional polytope space
//! `{theta_1, theta_2 in [0, 1], theta_k in [0, min(theta_1, theta_2)], k = 3, 4, 5}`
//! with its bound transformation and localized-LP rows, plus a synthetic
//! linear-moment model living on it.

use std::sync::Arc;

use rand::Rng;

use super::linear::{simulate_normal_columns, LinearModel, LinearMoment};
use crate::error::Result;
use crate::model::{dot, Dataset, ParameterSpace};

/// The 13 rows `A theta <= b`.
pub fn polytope_rows() -> (Vec<Vec<f64>>, Vec<f64>) {
    let e = |k: usize, v: f64| {
        let mut r = vec![0.0; 5];
        r[k] = v;
        r
    };
    let mut a = Vec::with_capacity(13);
    let mut b = Vec::with_capacity(13);
    for k in 0..2 {
        a.push(e(k, 1.0));
        b.push(1.0);
    }
    for k in 0..5 {
        a.push(e(k, -1.0));
        b.push(0.0);
    }
    for lead in 0..2 {
        for k in 2..5 {
            let mut r = e(k, 1.0);
            r[lead] = -1.0;
            a.push(r);
            b.push(0.0);
        }
    }
    (a, b)
}

/// `ub_out_k = min(ub_1, ub_2, ub_k)` for `k = 3, 4, 5`; everything else unchanged.
pub fn bound_transform(lb: &[f64], ub: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut out = ub.to_vec();
    for k in 2..5 {
        out[k] = ub[0].min(ub[1]).min(ub[k]);
    }
    (lb.to_vec(), out)
}

/// Localized rows `A lambda <= sqrt(n) (b - A theta)`.
pub fn lambda_rows(theta: &[f64], sqrt_n: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let (a, b) = polytope_rows();
    let rhs = a
        .iter()
        .zip(&b)
        .map(|(r, bi)| sqrt_n * (bi - dot(r, theta)))
        .collect();
    (a, rhs)
}

/// The space with both hooks installed.
pub fn space() -> ParameterSpace {
    let (a, b) = polytope_rows();
    ParameterSpace::new_box(vec![0.0; 5], vec![1.0; 5])
        .and_then(|s| s.with_polytope(a, b))
        .expect("static polytope has an interior")
        .with_bound_transform(Arc::new(bound_transform))
        .with_lambda_rows(Arc::new(lambda_rows))
}

/// Parameter used to simulate the synthetic model.
pub fn true_theta() -> Vec<f64> {
    vec![0.6, 0.7, 0.3, 0.3, 0.2]
}

/// Half-width of the identified interval of each of the first four coordinates.
pub const HALF_WIDTH: f64 = 0.1;

/// Bounds `E[L_k] <= theta_k <= E[U_k]` for `k = 1..4` and the equality
/// `E[D] = theta_3 - theta_4`. Data columns `L1, U1, .., L4, U4, D`.
pub fn synthetic_model() -> LinearModel {
    let e = |k: usize, v: f64| {
        let mut r = vec![0.0; 5];
        r[k] = v;
        r
    };
    let mut ineq = Vec::new();
    for k in 0..4 {
        ineq.push(LinearMoment::new(2 * k, 1.0, e(k, -1.0)));
        ineq.push(LinearMoment::new(2 * k + 1, -1.0, e(k, 1.0)));
    }
    let mut d = e(2, -1.0);
    d[3] = 1.0;
    LinearModel::new(5, ineq, vec![LinearMoment::new(8, 1.0, d)])
}

pub fn simulate_synthetic(theta: &[f64], sd: f64, n: usize, rng: &mut impl Rng) -> Result<Dataset> {
    let mut means = Vec::with_capacity(9);
    for t in theta.iter().take(4) {
        means.push(t - HALF_WIDTH);
        means.push(t + HALF_WIDTH);
    }
    means.push(theta[2] - theta[3]);
    simulate_normal_columns(&means, sd, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirteen_rows() {
        assert_eq!(polytope_rows().0.len(), 13);
        assert_eq!(space().polytope_row_count(), 13);
    }

    #[test]
    fn transform_example() {
        let (lb, ub) = bound_transform(&[0.0; 5], &[1e-4, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(lb, vec![0.0; 5]);
        assert_eq!(ub, vec![1e-4, 1.0, 1e-4, 1e-4, 1e-4]);
    }

    #[test]
    fn lambda_rows_contain_ordering_constraints() {
        let theta = [0.5, 0.6, 0.2, 0.1, 0.3];
        let (a, b) = lambda_rows(&theta, 10.0);
        // -lambda_1 + lambda_k <= -sqrt(n) (-theta_1 + theta_k)
        let k = 2;
        let mut row = vec![0.0; 5];
        row[0] = -1.0;
        row[k] = 1.0;
        let i = a.iter().position(|r| *r == row).unwrap();
        assert!((b[i] + 10.0 * (-theta[0] + theta[k])).abs() < 1e-12);
    }
}
