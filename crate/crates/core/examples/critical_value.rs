//! Calibrated and Andrews–Soares critical values at one parameter value of the
//! entry game, with and without the monotonicity cache.
//!
//! `cargo run --release --example critical_value`

use calproj::critval::{as_critval, critval_from_template, localize};
use calproj::model::Options;
use calproj::models::entry_game::true_theta;
use calproj::models::{simulate_entry_game, EntryGame, Selection};
use calproj::moments::{bootstrap_ensemble, compute_empirical};
use calproj::rng::substream;

fn main() -> calproj::Result<()> {
    let theta = true_theta();
    let data = simulate_entry_game(
        &theta,
        1000,
        0.0,
        Selection::Uniform,
        &mut substream(1, 1, 0),
    )?;
    let opts = Options {
        b: 301,
        seed: 1,
        ..Options::baseline()
    };
    let moments = compute_empirical(&data, &EntryGame, &opts)?;
    let boot = bootstrap_ensemble(&data, &EntryGame, &moments, &opts, opts.seed)?;
    let space = calproj::models::entry_game::default_space();
    let mut p = vec![0.0; 8];
    p[0] = 1.0;
    let (template, shift) = localize(&theta, &moments, &EntryGame, &space, &p, &opts);
    println!(
        "{} moment rows after GMS ({} deleted), {} bootstrap draws",
        template.moment_rows(),
        shift.deleted_count(),
        boot.len()
    );
    for cache in [true, false] {
        let cv =
            critval_from_template(template.clone(), &boot, opts.alpha, opts.critval_tol, cache)?;
        println!(
            "calibrated c = {:.5} (cache {cache}): {} LPs, coverage slack {:+.4}",
            cv.c_hat, cv.lp_count, cv.psi
        );
    }
    println!(
        "AS c = {:.5}",
        as_critval(&theta, &EntryGame, &moments, &boot, &opts)
    );
    Ok(())
}
