//! Simulated entry-game frequencies against the model's analytic probabilities.

use calproj::model::MomentModel;
use calproj::models::entry_game::{true_theta, P_X, SUPPORT};
use calproj::models::{simulate_entry_game, EntryGame, Selection};
use calproj::rng::substream;

const N: usize = 400_000;

/// Per support point: `(P00, P01 upper bound, multiplicity mass, P11)`, conditional on x.
fn analytic(theta: &[f64]) -> Vec<[f64; 4]> {
    let g = EntryGame.g(theta);
    (0..4)
        .map(|c| {
            let upper = -g.ineq[2 * c] / P_X;
            let mult = upper - g.ineq[2 * c + 1] / P_X;
            [-g.eq[2 * c] / P_X, upper, mult, -g.eq[2 * c + 1] / P_X]
        })
        .collect()
}

fn conditional_frequencies(selection: Selection, seed: u64) -> Vec<[f64; 4]> {
    let data =
        simulate_entry_game(&true_theta(), N, 0.0, selection, &mut substream(seed, 0, 0)).unwrap();
    EntryGame::frequencies(&data)
        .iter()
        .map(|cell| {
            let px: f64 = cell.iter().sum();
            cell.map(|v| v / px)
        })
        .collect()
}

/// Five standard errors of a cell frequency with about `N / 4` draws.
fn tol(p: f64) -> f64 {
    5.0 * (p * (1.0 - p) / (N as f64 / 4.0)).sqrt() + 1e-4
}

#[test]
fn uniform_selection_matches_moments() {
    let want = analytic(&true_theta());
    let got = conditional_frequencies(Selection::Uniform, 1);
    for (x, (w, f)) in SUPPORT.iter().zip(want.iter().zip(&got)) {
        let p01 = w[1] - 0.5 * w[2];
        assert!(
            (f[0] - w[0]).abs() < tol(w[0]),
            "x = {x:?}: P00 {} vs {}",
            f[0],
            w[0]
        );
        assert!(
            (f[3] - w[3]).abs() < tol(w[3]),
            "x = {x:?}: P11 {} vs {}",
            f[3],
            w[3]
        );
        assert!(
            (f[1] - p01).abs() < tol(p01),
            "x = {x:?}: P01 {} vs {p01}",
            f[1]
        );
        if w[2] > 2.0 * tol(w[2]) {
            assert!(f[1] < w[1] && f[1] > w[1] - w[2], "x = {x:?}");
        }
    }
}

#[test]
fn always_zero_one_attains_the_upper_bound() {
    let want = analytic(&true_theta());
    let got = conditional_frequencies(Selection::AlwaysZeroOne, 2);
    for (x, (w, f)) in SUPPORT.iter().zip(want.iter().zip(&got)) {
        assert!(
            (f[1] - w[1]).abs() < tol(w[1]),
            "x = {x:?}: P01 {} vs bound {}",
            f[1],
            w[1]
        );
    }
}

#[test]
fn analytic_cells_are_coherent_over_the_space() {
    let mut rng = substream(3, 0, 0);
    let space = calproj::models::entry_game::default_space();
    for _ in 0..200 {
        let mut theta: Vec<f64> = space
            .lb
            .iter()
            .zip(&space.ub)
            .map(|(l, u)| rand::Rng::random_range(&mut rng, *l..*u))
            .collect();
        // competitive effects x'delta <= 0 at both support values
        for k in [4, 6] {
            theta[k + 1] = rand::Rng::random_range(&mut rng, theta[k]..=0.0);
        }
        for [p00, upper, mult, p11] in analytic(&theta) {
            assert!(mult >= -1e-15 && mult <= upper + 1e-15, "{theta:?}");
            // smallest P10 compatible with the bounds
            assert!(1.0 - p00 - p11 - upper >= -1e-12, "{theta:?}");
        }
    }
}
