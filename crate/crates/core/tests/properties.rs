//! Property tests for invariants of the LP kernel, the critical value, and
//! the samplers.

use std::sync::Arc;

use proptest::prelude::*;

use calproj::critval::{critval_from_template, localize};
use calproj::lp::{is_feasible, LinearSystem};
use calproj::model::{MomentModel, Options, ParameterSpace};
use calproj::models::{simulate_box, LinearModel};
use calproj::moments::{bootstrap_ensemble, compute_empirical, BootstrapEnsemble};
use calproj::optim::draw_and_discard;
use calproj::rng::substream;

fn system(d: usize, rows: &[(Vec<f64>, f64)]) -> LinearSystem {
    let mut a: Vec<Vec<f64>> = rows.iter().map(|r| r.0[..d].to_vec()).collect();
    let mut b: Vec<f64> = rows.iter().map(|r| r.1).collect();
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[k] = s;
            a.push(e);
            b.push(4.0);
        }
    }
    LinearSystem::new(a, b)
}

fn rows_strategy() -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
    prop::collection::vec(
        (prop::collection::vec(-1.0f64..1.0, 3), -1.0f64..1.0),
        1..10,
    )
}

/// Small box-model fixture: moments, ensemble, and a template factory.
struct Fixture {
    model: Arc<LinearModel>,
    moments: calproj::moments::EmpiricalMoments,
    boot: BootstrapEnsemble,
    space: ParameterSpace,
    opts: Options,
}

fn fixture(seed: u64, b: usize) -> Fixture {
    let data = simulate_box(
        &[0.0, -0.5],
        &[1.0, 0.5],
        1.0,
        300,
        &mut substream(seed, 0, 0),
    )
    .unwrap();
    let model = Arc::new(LinearModel::axis_box(2));
    let opts = Options {
        b,
        ..Options::baseline()
    };
    let moments = compute_empirical(&data, model.as_ref(), &opts).unwrap();
    let boot = bootstrap_ensemble(&data, model.as_ref(), &moments, &opts, seed).unwrap();
    Fixture {
        model,
        moments,
        boot,
        space: ParameterSpace::new_box(vec![-3.0; 2], vec![3.0; 2]).unwrap(),
        opts,
    }
}

impl Fixture {
    fn critval(&self, theta: &[f64], alpha: f64, cache: bool) -> calproj::critval::Critval {
        let (t, _) = localize(
            theta,
            &self.moments,
            self.model.as_ref() as &dyn MomentModel,
            &self.space,
            &[1.0, 0.0],
            &self.opts,
        );
        critval_from_template(t, &self.boot, alpha, self.opts.critval_tol, cache).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feasibility_is_monotone_in_the_rhs(d in 1usize..=3, rows in rows_strategy(), shift in 0.0f64..2.0) {
        let sys = system(d, &rows);
        let mut looser = sys.clone();
        for (b, (_, _)) in looser.b.iter_mut().zip(&rows) {
            *b += shift;
        }
        if is_feasible(&sys).unwrap() {
            prop_assert!(is_feasible(&looser).unwrap());
        }
    }

    #[test]
    fn feasibility_ignores_positive_row_scaling(
        d in 1usize..=3,
        rows in rows_strategy(),
        scales in prop::collection::vec(1e-3f64..1e3, 16),
    ) {
        let sys = system(d, &rows);
        let mut scaled = sys.clone();
        for (i, s) in scales.iter().enumerate().take(scaled.nrows()) {
            scaled.a[i].iter_mut().for_each(|v| *v *= s);
            scaled.b[i] *= s;
        }
        prop_assert_eq!(is_feasible(&sys).unwrap(), is_feasible(&scaled).unwrap());
    }

    #[test]
    fn dropping_rows_keeps_feasibility(d in 1usize..=3, rows in rows_strategy(), keep in prop::collection::vec(any::<bool>(), 10)) {
        let sys = system(d, &rows);
        let fewer: Vec<(Vec<f64>, f64)> = rows.iter().zip(&keep).filter(|(_, k)| **k).map(|(r, _)| r.clone()).collect();
        if is_feasible(&sys).unwrap() {
            prop_assert!(is_feasible(&system(d, &fewer)).unwrap());
        }
    }

    #[test]
    fn sampler_stays_inside(
        cuts in prop::collection::vec((prop::collection::vec(-1.0f64..1.0, 2), 0.2f64..1.0), 1..4),
        seed in any::<u64>(),
    ) {
        let space = ParameterSpace::new_box(vec![-1.0; 2], vec![1.0; 2])
            .unwrap()
            .with_polytope(cuts.iter().map(|c| c.0.clone()).collect(), cuts.iter().map(|c| c.1).collect())
            .unwrap();
        let sample = draw_and_discard(&space, 50, &mut substream(seed, 0, 0)).unwrap();
        for x in &sample.points {
            prop_assert!(space.contains(x, 0.0));
            for (a, b) in &cuts {
                prop_assert!(a[0] * x[0] + a[1] * x[1] <= *b);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cache_never_changes_the_critical_value(seed in 0u64..1000, t1 in -0.5f64..1.5, t2 in -1.0f64..1.0) {
        let f = fixture(seed, 101);
        let theta = [t1, t2];
        let on = f.critval(&theta, 0.05, true);
        let off = f.critval(&theta, 0.05, false);
        prop_assert_eq!(on.c_hat, off.c_hat);
        prop_assert!(on.lp_count <= off.lp_count);
    }

    #[test]
    fn critical_value_falls_as_alpha_rises(seed in 0u64..1000, t1 in -0.5f64..1.5, t2 in -1.0f64..1.0) {
        let f = fixture(seed, 101);
        let theta = [t1, t2];
        let mut prev = f64::INFINITY;
        for alpha in [0.01, 0.05, 0.10, 0.20] {
            let c = f.critval(&theta, alpha, true).c_hat;
            // root search tolerance
            prop_assert!(c <= prev + f.opts.critval_tol, "alpha {}: {} after {}", alpha, c, prev);
            prev = c;
        }
    }

    #[test]
    fn shifting_data_and_theta_together_changes_nothing(seed in 0u64..1000, shift in -1.0f64..1.0, t1 in -0.5f64..1.5) {
        let mut rng = substream(seed, 0, 0);
        let base = simulate_box(&[0.0, -0.5], &[1.0, 0.5], 1.0, 300, &mut rng).unwrap();
        let moved_rows: Vec<Vec<f64>> = base
            .rows()
            .map(|r| vec![r[0] + shift, r[1] + shift, r[2], r[3]])
            .collect();
        let moved = calproj::model::Dataset::from_rows(&moved_rows).unwrap();
        let model = LinearModel::axis_box(2);
        let opts = Options { b: 101, ..Options::baseline() };
        let space = ParameterSpace::new_box(vec![-5.0; 2], vec![5.0; 2]).unwrap();
        let run = |data: &calproj::model::Dataset, theta: &[f64]| {
            let m = compute_empirical(data, &model, &opts).unwrap();
            let boot = bootstrap_ensemble(data, &model, &m, &opts, 7).unwrap();
            let (t, _) = localize(theta, &m, &model, &space, &[1.0, 0.0], &opts);
            critval_from_template(t, &boot, opts.alpha, opts.critval_tol, true).unwrap().c_hat
        };
        let a = run(&base, &[t1, 0.0]);
        let b = run(&moved, &[t1 + shift, 0.0]);
        prop_assert!((a - b).abs() <= 2.0 * opts.critval_tol, "{} vs {}", a, b);
    }
}
