//! Local solver and multistart against closed-form optima.

use calproj::optim::{draw_uniform_box, multistart, solve_local, NlpProblem};
use calproj::rng::substream;
use rand::Rng;

fn feasible(x: &[f64], rows: &[(Vec<f64>, f64)]) -> bool {
    x.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v))
        && rows
            .iter()
            .all(|(a, b)| a[0] * x[0] + a[1] * x[1] <= b + 1e-12)
}

/// Projection of `t` onto `[-1,1]^2` cut by half-planes, by enumerating every
/// face of the feasible polygon.
fn projection_oracle(t: &[f64], cuts: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let mut rows = cuts.to_vec();
    for k in 0..2 {
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; 2];
            a[k] = s;
            rows.push((a, 1.0));
        }
    }
    let mut cands = vec![t.to_vec()];
    for (a, b) in &rows {
        let nn = a[0] * a[0] + a[1] * a[1];
        let s = (a[0] * t[0] + a[1] * t[1] - b) / nn;
        cands.push(vec![t[0] - s * a[0], t[1] - s * a[1]]);
    }
    for i in 0..rows.len() {
        for j in 0..i {
            let (a, b) = (&rows[i], &rows[j]);
            let det = a.0[0] * b.0[1] - a.0[1] * b.0[0];
            if det.abs() > 1e-12 {
                cands.push(vec![
                    (a.1 * b.0[1] - a.0[1] * b.1) / det,
                    (a.0[0] * b.1 - a.1 * b.0[0]) / det,
                ]);
            }
        }
    }
    cands
        .into_iter()
        .filter(|x| feasible(x, &rows))
        .min_by(|x, y| {
            let d = |p: &Vec<f64>| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2);
            d(x).total_cmp(&d(y))
        })
}

#[test]
fn box_and_cut_projection_matches_face_enumeration() {
    let mut rng = substream(5, 0, 0);
    let mut checked = 0;
    while checked < 100 {
        let t: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
        let cuts: Vec<(Vec<f64>, f64)> = (0..2)
            .map(|_| {
                (
                    vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                    rng.random_range(-0.3..0.8),
                )
            })
            .collect();
        let Some(want) = projection_oracle(&t, &cuts) else {
            continue;
        };
        let tt = t.clone();
        let prob = NlpProblem::new(vec![-1.0; 2], vec![1.0; 2], move |x| {
            let g = vec![2.0 * (x[0] - tt[0]), 2.0 * (x[1] - tt[1])];
            ((x[0] - tt[0]).powi(2) + (x[1] - tt[1]).powi(2), g)
        })
        .with_linear(
            cuts.iter().map(|c| c.0.clone()).collect(),
            cuts.iter().map(|c| c.1).collect(),
        );
        let sol = solve_local(&prob, &[0.0, 0.0]);
        assert!(sol.is_feasible(), "{sol:?}");
        let err = ((sol.x[0] - want[0]).powi(2) + (sol.x[1] - want[1]).powi(2)).sqrt();
        assert!(
            err < 1e-4,
            "target {t:?}, cuts {cuts:?}: got {:?}, want {want:?}",
            sol.x
        );
        checked += 1;
    }
}

#[test]
fn multistart_finds_the_deeper_well() {
    // two Gaussian wells; the deeper one sits at (-1, 0)
    let f = |x: &[f64]| {
        let w = |cx: f64, depth: f64| {
            let e = (-(x[0] - cx).powi(2) - x[1] * x[1]).exp();
            (
                -depth * e,
                [2.0 * depth * (x[0] - cx) * e, 2.0 * depth * x[1] * e],
            )
        };
        let (a, ga) = w(-1.0, 1.5);
        let (b, gb) = w(1.2, 1.0);
        (a + b, vec![ga[0] + gb[0], ga[1] + gb[1]])
    };
    let prob = NlpProblem::new(vec![-3.0; 2], vec![3.0; 2], f);
    let starts = draw_uniform_box(&[-3.0; 2], &[3.0; 2], 20, &mut substream(6, 0, 0));
    let ms = multistart(&prob, &starts).unwrap();
    // grid oracle for the global minimum
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=6000 {
        let x = -3.0 + 6.0 * i as f64 / 6000.0;
        let v = f(&[x, 0.0]).0;
        if v < best.0 {
            best = (v, x);
        }
    }
    assert!(
        (ms.best.obj - best.0).abs() < 1e-6,
        "{:?} vs {best:?}",
        ms.best
    );
    assert!((ms.best.x[0] - best.1).abs() < 2e-3 && ms.best.x[1].abs() < 1e-3);
    assert!(
        ms.runs.iter().any(|r| r.x[0] > 0.5),
        "no start reached the other well"
    );
}
