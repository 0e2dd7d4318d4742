//! Phase-one feasibility of `A x <= b`.
//!
//! `cargo run --example lp_feasibility`

use calproj::lp::{is_feasible, phase_one, LinearSystem};

fn main() -> calproj::Result<()> {
    // Triangle x >= 0, y >= 0, x + y <= 1, with an optional cut x + y >= t.
    for t in [0.5, 1.0, 1.5] {
        let sys = LinearSystem::new(
            vec![
                vec![-1.0, 0.0],
                vec![0.0, -1.0],
                vec![1.0, 1.0],
                vec![-1.0, -1.0],
            ],
            vec![0.0, 0.0, 1.0, -t],
        );
        let sol = phase_one(&sys)?;
        println!(
            "x + y >= {t}: feasible {}, depth {:+.4}, point ({:.3}, {:.3}), pivots {}",
            is_feasible(&sys)?,
            sol.max_violation,
            sol.point[0],
            sol.point[1],
            sol.pivots
        );
    }
    Ok(())
}
