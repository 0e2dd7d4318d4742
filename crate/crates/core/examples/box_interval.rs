//! Two-sided interval for the first coordinate of a 2-d box model.
//!
//! `cargo run --release --example box_interval`

use std::sync::Arc;

use calproj::eam::run_interval;
use calproj::model::{validate_inputs, Options, ParameterSpace};
use calproj::models::{simulate_box, LinearModel};
use calproj::rng::substream;

fn main() -> calproj::Result<()> {
    let mut rng = substream(11, 0, 0);
    let data = simulate_box(&[0.0, -0.5], &[1.0, 0.5], 1.0, 4000, &mut rng)?;
    let space = ParameterSpace::new_box(vec![-3.0, -3.0], vec![3.0, 3.0])?;
    let options = Options {
        seed: 11,
        ..Options::baseline()
    };
    let problem = validate_inputs(
        data,
        Arc::new(LinearModel::axis_box(2)),
        vec![0.5, 0.0],
        vec![1.0, 0.0],
        space,
        options,
    )?;
    let res = run_interval(&problem)?;
    println!("interval for theta_1: [{:.4}, {:.4}]", res.lower, res.upper);
    for d in &res.directions {
        println!(
            "  q = {:?}: bound {:.4}, c_hat {:.4}, iterations {}, converged {}, evaluations {}, {:.1}s",
            d.q,
            d.optbound,
            d.c_at_opt,
            d.iterations,
            d.converged,
            d.evaluated.len(),
            d.wall_time
        );
    }
    println!(
        "total LPs {}, wall time {:.1}s",
        res.lp_count, res.wall_time
    );
    Ok(())
}
