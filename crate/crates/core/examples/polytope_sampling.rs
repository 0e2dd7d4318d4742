//! Draw-and-discard sampling on the 5-d polytope
//! `theta_1, theta_2 in [0, 1]`, `theta_k in [0, min(theta_1, theta_2)]`.
//!
//! `cargo run --release --example polytope_sampling`

use calproj::models::dgp8;
use calproj::optim::draw_and_discard;
use calproj::rng::substream;

fn main() -> calproj::Result<()> {
    let space = dgp8::space();
    let sample = draw_and_discard(&space, 1000, &mut substream(8, 0, 0))?;
    println!(
        "{} points accepted from {} attempts (acceptance {:.3}), underfilled {}",
        sample.points.len(),
        sample.attempts,
        sample.points.len() as f64 / sample.attempts as f64,
        sample.underfilled
    );
    let worst = sample
        .points
        .iter()
        .map(|x| space.max_polytope_violation(x))
        .fold(f64::NEG_INFINITY, f64::max);
    println!("largest row violation over the sample: {worst:.3e}");
    let (lb, ub) = dgp8::bound_transform(&[0.0; 5], &[1e-4, 1.0, 1.0, 1.0, 1.0]);
    println!("bound transform of ub = (1e-4, 1, 1, 1, 1): lb {lb:?}, ub {ub:?}");
    Ok(())
}
