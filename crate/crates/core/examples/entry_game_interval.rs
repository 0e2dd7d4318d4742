//! Calibrated interval for the first entry-game coefficient on simulated data.
//!
//! `cargo run --release --example entry_game_interval [n] [seed]`

use std::sync::Arc;

use calproj::eam::run_interval;
use calproj::model::{validate_inputs, Options};
use calproj::models::entry_game::{default_space, true_theta};
use calproj::models::{simulate_entry_game, EntryGame, Selection};
use calproj::rng::substream;

fn main() -> calproj::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let theta = true_theta();
    let data = simulate_entry_game(
        &theta,
        n,
        0.0,
        Selection::Uniform,
        &mut substream(seed, 1, 0),
    )?;
    let mut p = vec![0.0; 8];
    p[0] = 1.0;
    let options = Options {
        b: 201,
        seed,
        ..Options::baseline()
    };
    let problem = validate_inputs(
        data,
        Arc::new(EntryGame),
        theta.clone(),
        p,
        default_space(),
        options,
    )?;
    let res = run_interval(&problem)?;
    println!(
        "beta1 constant: [{:.4}, {:.4}] (true value {})",
        res.lower, res.upper, theta[0]
    );
    for d in &res.directions {
        println!(
            "  q_1 = {:+}: bound {:.4}, c_hat {:.3}, iterations {}, converged {}, points {}, LPs {}, {:.1}s",
            d.q[0],
            d.optbound,
            d.c_at_opt,
            d.iterations,
            d.converged,
            d.evaluated.len(),
            d.lp_count,
            d.wall_time
        );
        for w in &d.warnings {
            println!("  warning: {w}");
        }
    }
    println!(
        "initial points {}, wall time {:.1}s",
        res.initial.len(),
        res.wall_time
    );
    Ok(())
}
