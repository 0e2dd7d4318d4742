//! Kriging fit of a smooth 2-d function and predictions away from the design.
//!
//! `cargo run --release --example kriging_surrogate`

use calproj::optim::draw_uniform_box;
use calproj::rng::substream;
use calproj::surrogate::KrigingSurrogate;

fn f(x: &[f64]) -> f64 {
    1.5 + 0.3 * (3.0 * x[0]).sin() * x[1] + 0.1 * x[0] * x[0]
}

fn main() -> calproj::Result<()> {
    let mut rng = substream(3, 0, 0);
    let design = draw_uniform_box(&[-1.0, -1.0], &[1.0, 1.0], 40, &mut rng);
    let y: Vec<f64> = design.iter().map(|x| f(x)).collect();
    let k = KrigingSurrogate::fit(&design, &y)?;
    println!(
        "trend {:.4}, process variance {:.3e}, nugget {:.1e}, lengths {:?}",
        k.trend(),
        k.process_var(),
        k.nugget(),
        k.corr_lengths()
    );
    for x in [[0.0, 0.0], [0.5, -0.5], [0.9, 0.9], [5.0, 5.0]] {
        let p = k.predict(&x);
        println!(
            "x = {x:?}: prediction {:.5} (truth {:.5}), sd {:.2e}, gradient [{:.3}, {:.3}]",
            p.value,
            f(&x),
            p.sd,
            p.gradient[0],
            p.gradient[1]
        );
    }
    Ok(())
}
