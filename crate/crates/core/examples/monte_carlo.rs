//! Small Monte Carlo coverage study on the 2-d box model.
//!
//! `cargo run --release --example monte_carlo [replications]`

use std::sync::Arc;

use calproj::eam::run_interval;
use calproj::model::{validate_inputs, Options, ParameterSpace};
use calproj::models::{simulate_box, LinearModel};
use calproj::rng::{replication_seed, substream};
use calproj::stats::median;

fn main() -> calproj::Result<()> {
    let reps: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10);
    let (lo, hi) = ([0.0, -0.5], [1.0, 0.5]);
    let mut lowers = Vec::new();
    let mut uppers = Vec::new();
    let mut covered = [0usize; 2];
    for i in 1..=reps {
        let seed = replication_seed(2024, i);
        let data = simulate_box(&lo, &hi, 1.0, 1000, &mut substream(seed, 0, 0))?;
        let options = Options {
            b: 201,
            seed,
            ..Options::baseline()
        };
        let problem = validate_inputs(
            data,
            Arc::new(LinearModel::axis_box(2)),
            vec![0.5, 0.0],
            vec![1.0, 0.0],
            ParameterSpace::new_box(vec![-3.0; 2], vec![3.0; 2])?,
            options,
        )?;
        let r = run_interval(&problem)?;
        println!("replication {i:3}: [{:+.4}, {:+.4}]", r.lower, r.upper);
        for (k, v) in [lo[0], hi[0]].iter().enumerate() {
            covered[k] += (r.lower <= *v && *v <= r.upper) as usize;
        }
        lowers.push(r.lower);
        uppers.push(r.upper);
    }
    println!(
        "median interval [{:+.4}, {:+.4}], coverage of the identified-set endpoints {:.2} / {:.2}",
        median(&lowers).unwrap_or(f64::NAN),
        median(&uppers).unwrap_or(f64::NAN),
        covered[0] as f64 / reps as f64,
        covered[1] as f64 / reps as f64
    );
    Ok(())
}
