//! Two-player entry game with binary market characteristics.
//!
//! `theta = (beta1, beta2, delta1, delta2)`, each a (constant, slope) pair, so
//! `d = 8`. Firm `k` enters when `x_k'beta_k + y_{-k} x_k'delta_k + u_k >= 0`.
//! Data rows are `[y1, y2, 1, x1, 1, x2]` with `x1, x2 in {-1, 1}`.
//!
//! For every support point `x` there is a pair of inequalities bounding
//! `P(Y = (0,1), X = x)` and two equalities for `P(Y = (0,0), X = x)` and
//! `P(Y = (1,1), X = x)`, which are point identified when `delta <= 0`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::model::{
    bernoulli_keep, Dataset, FHat, MomentCounts, MomentJacobian, MomentModel, MomentValues,
    ParameterSpace,
};
use crate::stats::{norm_cdf, norm_pdf};

/// Support of `(x1, x2)`, in moment order.
pub const SUPPORT: [(f64, f64); 4] = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];
/// Population probability of each support point.
pub const P_X: f64 = 0.25;

/// How an equilibrium is picked when `(0,1)` and `(1,0)` both are.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Selection {
    /// Each equilibrium with probability one half.
    Uniform,
    /// Always `(0,1)`.
    AlwaysZeroOne,
}

/// Structured view of the 8-vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntryGameTheta {
    pub beta1: [f64; 2],
    pub beta2: [f64; 2],
    pub delta1: [f64; 2],
    pub delta2: [f64; 2],
}

impl EntryGameTheta {
    pub fn from_slice(t: &[f64]) -> Self {
        Self {
            beta1: [t[0], t[1]],
            beta2: [t[2], t[3]],
            delta1: [t[4], t[5]],
            delta2: [t[6], t[7]],
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        [self.beta1, self.beta2, self.delta1, self.delta2].concat()
    }
}

/// The simulation design's parameter.
pub fn true_theta() -> Vec<f64> {
    vec![0.5, 0.25, 0.5, 0.25, -1.0, -1.0, -1.0, -1.0]
}

/// `beta in [-2, 2]^4`, `delta in [-2, 0]^4`.
pub fn default_space() -> ParameterSpace {
    ParameterSpace::new_box(
        vec![-2.0, -2.0, -2.0, -2.0, -2.0, -2.0, -2.0, -2.0],
        vec![2.0, 2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0],
    )
    .expect("static box is valid")
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EntryGame;

/// Per-cell indices: `a = x1'(b1+d1)`, `b = x1'b1`, `c = x2'b2`, `e = x2'(b2+d2)`.
struct Cell {
    x1: [f64; 2],
    x2: [f64; 2],
    a: f64,
    b: f64,
    c: f64,
    e: f64,
}

fn cell(t: &EntryGameTheta, x: (f64, f64)) -> Cell {
    let x1 = [1.0, x.0];
    let x2 = [1.0, x.1];
    let dot = |u: [f64; 2], v: [f64; 2]| u[0] * v[0] + u[1] * v[1];
    let s1 = [t.beta1[0] + t.delta1[0], t.beta1[1] + t.delta1[1]];
    let s2 = [t.beta2[0] + t.delta2[0], t.beta2[1] + t.delta2[1]];
    Cell {
        x1,
        x2,
        a: dot(x1, s1),
        b: dot(x1, t.beta1),
        c: dot(x2, t.beta2),
        e: dot(x2, s2),
    }
}

impl EntryGame {
    /// Relative frequencies of the four outcome cells `(y1, y2)` per support point,
    /// ordered `[(0,0), (0,1), (1,0), (1,1)]`.
    pub fn frequencies(data: &Dataset) -> [[f64; 4]; 4] {
        let mut counts = [[0.0; 4]; 4];
        for row in data.rows() {
            let Some(xi) = SUPPORT
                .iter()
                .position(|&(a, b)| a == row[3] && b == row[5])
            else {
                continue;
            };
            let yi = 2 * (row[0] > 0.5) as usize + (row[1] > 0.5) as usize;
            counts[xi][yi] += 1.0;
        }
        let n = data.nrows() as f64;
        counts.map(|c| c.map(|v| v / n))
    }
}

impl MomentModel for EntryGame {
    fn dim(&self) -> usize {
        8
    }

    fn counts(&self) -> MomentCounts {
        MomentCounts {
            j1: 8,
            j2: 8,
            j3: 4,
        }
    }

    fn f_hat(&self, data: &Dataset, f_keep_threshold: f64) -> FHat {
        let freq = Self::frequencies(data);
        let mut f_ineq = Vec::with_capacity(8);
        let mut half = Vec::with_capacity(8);
        for cellf in &freq {
            f_ineq.push(cellf[1]);
            f_ineq.push(-cellf[1]);
            half.push(cellf[0]);
            half.push(cellf[3]);
        }
        let f_eq: Vec<f64> = half
            .iter()
            .copied()
            .chain(half.iter().map(|v| -v))
            .collect();
        FHat {
            keep_ineq: f_ineq
                .iter()
                .map(|f| bernoulli_keep(*f, f_keep_threshold))
                .collect(),
            keep_eq: f_eq
                .iter()
                .map(|f| bernoulli_keep(*f, f_keep_threshold))
                .collect(),
            paired: (0..8).map(|j| Some(j / 2)).collect(),
            f_ineq,
            f_eq,
        }
    }

    fn g(&self, theta: &[f64]) -> MomentValues {
        let t = EntryGameTheta::from_slice(theta);
        let mut ineq = Vec::with_capacity(8);
        let mut half = Vec::with_capacity(8);
        for &x in &SUPPORT {
            let k = cell(&t, x);
            let upper = norm_cdf(-k.a) * (1.0 - norm_cdf(-k.c));
            let mult = (norm_cdf(-k.a) - norm_cdf(-k.b)) * (norm_cdf(-k.e) - norm_cdf(-k.c));
            ineq.push(-upper * P_X);
            ineq.push((upper - mult) * P_X);
            half.push(-norm_cdf(-k.b) * norm_cdf(-k.c) * P_X);
            half.push(-(1.0 - norm_cdf(-k.a)) * (1.0 - norm_cdf(-k.e)) * P_X);
        }
        MomentValues {
            ineq,
            eq: half
                .iter()
                .copied()
                .chain(half.iter().map(|v| -v))
                .collect(),
        }
    }

    fn g_gradient(&self, theta: &[f64]) -> MomentJacobian {
        let t = EntryGameTheta::from_slice(theta);
        let mut ineq = DMatrix::zeros(8, 8);
        let mut eq = DMatrix::zeros(16, 8);
        // Column blocks.
        const B1: usize = 0;
        const B2: usize = 2;
        const D1: usize = 4;
        const D2: usize = 6;
        for (ci, &x) in SUPPORT.iter().enumerate() {
            let k = cell(&t, x);
            let (pa, pb, pc, pe) = (norm_pdf(k.a), norm_pdf(k.b), norm_pdf(k.c), norm_pdf(k.e));
            let (fa, fb, fc, fe) = (
                norm_cdf(-k.a),
                norm_cdf(-k.b),
                norm_cdf(-k.c),
                norm_cdf(-k.e),
            );
            let put = |m: &mut DMatrix<f64>, row: usize, block: usize, xv: [f64; 2], s: f64| {
                m[(row, block)] += s * xv[0] * P_X;
                m[(row, block + 1)] += s * xv[1] * P_X;
            };
            // upper = fa (1 - fc)
            let du_a = -pa * (1.0 - fc); // d upper / d a
            let du_c = fa * pc; // d upper / d c
                                // mult = (fa - fb)(fe - fc)
            let (am, cm) = (fa - fb, fe - fc);
            let dm_a = -pa * cm;
            let dm_b = pb * cm;
            let dm_c = am * pc;
            let dm_e = -am * pe;
            let r_up = 2 * ci;
            let r_lo = 2 * ci + 1;
            // a depends on beta1 and delta1, b on beta1, c on beta2, e on beta2 and delta2.
            put(&mut ineq, r_up, B1, k.x1, -du_a);
            put(&mut ineq, r_up, D1, k.x1, -du_a);
            put(&mut ineq, r_up, B2, k.x2, -du_c);
            put(&mut ineq, r_lo, B1, k.x1, du_a - dm_a - dm_b);
            put(&mut ineq, r_lo, D1, k.x1, du_a - dm_a);
            put(&mut ineq, r_lo, B2, k.x2, du_c - dm_c - dm_e);
            put(&mut ineq, r_lo, D2, k.x2, -dm_e);
            // P00 = fb fc
            let r00 = 2 * ci;
            put(&mut eq, r00, B1, k.x1, pb * fc);
            put(&mut eq, r00, B2, k.x2, fb * pc);
            // P11 = (1 - fa)(1 - fe)
            let r11 = 2 * ci + 1;
            put(&mut eq, r11, B1, k.x1, -pa * (1.0 - fe));
            put(&mut eq, r11, D1, k.x1, -pa * (1.0 - fe));
            put(&mut eq, r11, B2, k.x2, -(1.0 - fa) * pe);
            put(&mut eq, r11, D2, k.x2, -(1.0 - fa) * pe);
        }
        for j in 0..8 {
            for c in 0..8 {
                eq[(8 + j, c)] = -eq[(j, c)];
            }
        }
        MomentJacobian { ineq, eq }
    }

    fn sigma_hat(&self, _data: &Dataset, f_ineq: &[f64], f_eq: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let sd = |f: &f64| (f.abs() * (1.0 - f.abs())).sqrt();
        (
            f_ineq.iter().map(sd).collect(),
            f_eq.iter().map(sd).collect(),
        )
    }
}

/// Pure-strategy equilibria for given payoff indices, as `(y1, y2)` pairs.
fn equilibria(t: &EntryGameTheta, x: (f64, f64), u: (f64, f64)) -> Vec<(u8, u8)> {
    let k = cell(t, x);
    let enters1 = |y2: u8| {
        if y2 == 1 {
            k.a + u.0 >= 0.0
        } else {
            k.b + u.0 >= 0.0
        }
    };
    let enters2 = |y1: u8| {
        if y1 == 1 {
            k.e + u.1 >= 0.0
        } else {
            k.c + u.1 >= 0.0
        }
    };
    let mut out = Vec::with_capacity(2);
    for y1 in 0..2u8 {
        for y2 in 0..2u8 {
            if enters1(y2) == (y1 == 1) && enters2(y1) == (y2 == 1) {
                out.push((y1, y2));
            }
        }
    }
    out
}

/// Simulates `n` markets. `r` is the correlation of the payoff shocks.
pub fn simulate_entry_game(
    theta: &[f64],
    n: usize,
    r: f64,
    selection: Selection,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    let t = EntryGameTheta::from_slice(theta);
    let mut values = Vec::with_capacity(6 * n);
    let s = (1.0 - r * r).max(0.0).sqrt();
    for _ in 0..n {
        let x = SUPPORT[rng.random_range(0..4)];
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let u = (z1, r * z1 + s * z2);
        let eqs = equilibria(&t, x, u);
        let (y1, y2) = match (eqs.len(), selection) {
            (0, _) => (0, 0),
            (1, _) => eqs[0],
            (_, Selection::AlwaysZeroOne) => *eqs.iter().find(|e| **e == (0, 1)).unwrap_or(&eqs[0]),
            (m, Selection::Uniform) => eqs[rng.random_range(0..m)],
        };
        values.extend_from_slice(&[y1 as f64, y2 as f64, 1.0, x.0, 1.0, x.1]);
    }
    Dataset::new(n, 6, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn displayed_term_at_zero() {
        let g = EntryGame.g(&[0.0; 8]);
        // x = (1, 1) is the last support point; its (0,1) upper moment.
        assert!((g.ineq[6] + 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn doubling_convention() {
        let g = EntryGame.g(&true_theta());
        for k in 0..8 {
            assert_eq!(g.eq[8 + k], -g.eq[k]);
        }
    }

    #[test]
    fn sigma_of_quarter_cell() {
        let (s, _) = EntryGame.sigma_hat(&Dataset::new(0, 6, vec![]).unwrap(), &[0.25, -0.25], &[]);
        assert!((s[0] - 0.433_012_701_892_219_3).abs() < 1e-15);
        assert_eq!(s[0], s[1]);
    }

    #[test]
    fn upper_moment_ignores_delta2() {
        let jac = EntryGame.g_gradient(&true_theta());
        for ci in 0..4 {
            assert_eq!(jac.ineq[(2 * ci, 6)], 0.0);
            assert_eq!(jac.ineq[(2 * ci, 7)], 0.0);
            assert_eq!(jac.ineq[(2 * ci, 0)], jac.ineq[(2 * ci, 4)]);
            assert_eq!(jac.ineq[(2 * ci, 1)], jac.ineq[(2 * ci, 5)]);
        }
    }
}
