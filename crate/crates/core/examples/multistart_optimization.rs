//! Multistart augmented-Lagrangian solve of a bimodal problem with a nonlinear
//! constraint.
//!
//! `cargo run --release --example multistart_optimization`

use calproj::optim::{draw_uniform_box, multistart, NlpProblem};
use calproj::rng::substream;

fn main() -> calproj::Result<()> {
    // Two wells at (+-1, 0); the deeper one is at x = -1. Constraint: x^2 + y^2 <= 2.
    let prob = NlpProblem::new(vec![-2.0, -2.0], vec![2.0, 2.0], |x: &[f64]| {
        let a = (x[0] - 1.0).powi(2) + x[1] * x[1];
        let b = (x[0] + 1.0).powi(2) + x[1] * x[1];
        let f = -(-a).exp() - 1.5 * (-b).exp();
        let g = vec![
            2.0 * (x[0] - 1.0) * (-a).exp() + 3.0 * (x[0] + 1.0) * (-b).exp(),
            2.0 * x[1] * (-a).exp() + 3.0 * x[1] * (-b).exp(),
        ];
        (f, g)
    })
    .with_constraints(|x: &[f64]| {
        (
            vec![x[0] * x[0] + x[1] * x[1] - 2.0],
            vec![vec![2.0 * x[0], 2.0 * x[1]]],
        )
    });
    let starts = draw_uniform_box(&prob.lb, &prob.ub, 8, &mut substream(5, 0, 0));
    let ms = multistart(&prob, &starts)?;
    for (s, r) in starts.iter().zip(&ms.runs) {
        println!(
            "start ({:+.2}, {:+.2}) -> ({:+.4}, {:+.4}) f = {:.5} kkt {:.1e}",
            s[0], s[1], r.x[0], r.x[1], r.obj, r.kkt_residual
        );
    }
    println!(
        "best from start {}: f = {:.6} at ({:+.5}, {:+.5})",
        ms.best_index, ms.best.obj, ms.best.x[0], ms.best.x[1]
    );
    Ok(())
}
