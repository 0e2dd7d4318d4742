//! The `calproj` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

use calproj::cli::record::VERSION;
use calproj::cli::{DirectionRecord, ResultRecord};
use calproj::models::simulate_box;
use calproj::rng::substream;
use rand::Rng;

const CONFIG: &str = "\
[model]
name = box
dim = 2

[problem]
theta_0 = 0.5, 0.0
p = 1, 0

[options]
b = 101
seed = 3

[simulate]
n = 400
lo = 0, -0.5
hi = 1, 0.5
";

fn calproj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calproj"))
        .args(args)
        .env_remove("CALPROJ_WORKERS")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_data(dir: &Path) -> std::path::PathBuf {
    let data = simulate_box(&[0.0, -0.5], &[1.0, 0.5], 1.0, 400, &mut substream(4, 0, 0)).unwrap();
    let csv = dir.join("data.csv");
    data.write_csv(&csv).unwrap();
    csv
}

#[test]
fn out_of_range_alpha_is_a_config_error_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(
        &cfg,
        CONFIG.replace("seed = 3\n", "seed = 3\nalpha = 0.7\n"),
    )
    .unwrap();
    let csv = write_data(dir.path());
    let out = dir.path().join("r.result");
    let o = calproj(&[
        "run",
        "--config",
        path(&cfg),
        "--data",
        path(&csv),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("alpha"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_key_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, format!("{CONFIG}bogus = 1\n")).unwrap();
    let o = calproj(&[
        "simulate",
        "--config",
        path(&cfg),
        "--nmc",
        "1",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    let line = CONFIG.lines().count() + 1;
    assert!(
        err.contains(&line.to_string()) && err.contains("bogus"),
        "{err}"
    );
}

#[test]
fn bad_replication_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("box.cfg");
    std::fs::write(&cfg, CONFIG).unwrap();
    let o = calproj(&[
        "simulate",
        "--config",
        path(&cfg),
        "--nmc",
        "4",
        "--sim-lo",
        "3",
        "--sim-hi",
        "2",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("box.cfg");
    std::fs::write(&cfg, CONFIG).unwrap();
    let csv = write_data(dir.path());
    let results = dir.path().join("results");
    std::fs::create_dir(&results).unwrap();
    let out = results.join("one.result");
    let o = calproj(&[
        "--workers",
        "1",
        "run",
        "--config",
        path(&cfg),
        "--data",
        path(&csv),
        "--out",
        path(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let rec = ResultRecord::read(&out).unwrap();
    assert!(rec.lower < 0.5 && 0.5 < rec.upper, "{rec:?}");
    assert_eq!(rec.directions.len(), 2);
    assert_eq!(rec.seed, 3);
    assert!(rec
        .options
        .iter()
        .any(|(k, v)| k == "options.b" && v == "101"));
    let points = std::fs::read_to_string(results.join("one.result.points.csv")).unwrap();
    assert!(points.starts_with("stage,theta_1,theta_2,c_hat,h_max,feasible\n"));

    let o = calproj(&["analyze", path(&results)]);
    assert_eq!(o.status.code(), Some(0));
    let summary = std::fs::read_to_string(results.join("summary.csv")).unwrap();
    assert!(
        summary.contains(&format!("median_lower,{:?}", rec.lower)),
        "{summary}"
    );
    assert!(
        summary.contains(&format!("median_upper,{:?}", rec.upper)),
        "{summary}"
    );
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("box.cfg");
    std::fs::write(&cfg, CONFIG).unwrap();
    let csv = write_data(dir.path());
    let out = dir.path().join("s.result");
    let o = calproj(&[
        "--seed",
        "77",
        "run",
        "--config",
        path(&cfg),
        "--data",
        path(&csv),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(ResultRecord::read(&out).unwrap().seed, 77);
}

fn sorted_median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn analyze_matches_a_sorting_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = substream(9, 0, 0);
    let (mut lowers, mut uppers, mut hits) = (Vec::new(), Vec::new(), 0);
    for i in 0..100u64 {
        let lower: f64 = rng.random_range(-1.0..0.6);
        let upper = lower + rng.random_range(0.0..1.0);
        hits += (lower <= 0.5 && 0.5 <= upper) as usize;
        lowers.push(lower);
        uppers.push(upper);
        let dir_rec = |q: f64| DirectionRecord {
            q: vec![q, 0.0],
            theta: vec![0.0, 0.0],
            optbound: 0.0,
            c_hat: 1.5,
            max_violation: 0.0,
            ei: 0.0,
            converged: true,
            boundary: false,
            iterations: 5,
            lp_count: 10,
            wall_time: 0.1,
        };
        let rec = ResultRecord {
            version: VERSION.into(),
            seed: i,
            replication: Some(i + 1),
            lower,
            upper,
            converged: i % 10 != 0,
            lp_count: 20,
            wall_time: 0.2,
            directions: vec![dir_rec(1.0), dir_rec(-1.0)],
            options: Vec::new(),
            references: vec![("true".into(), 0.5)],
        };
        rec.write(dir.path().join(format!("rep_{:06}.result", i + 1)))
            .unwrap();
    }
    // failed replications count against coverage
    for i in [101, 102] {
        std::fs::write(
            dir.path().join(format!("rep_{i:06}.error")),
            "no feasible point found\n",
        )
        .unwrap();
    }
    // a truncated file is skipped with a warning
    std::fs::write(
        dir.path().join("rep_999999.result"),
        "version = v0\nlower = 1\n",
    )
    .unwrap();

    let o = calproj(&["analyze", path(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rep_999999"));
    let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let get = |k: &str| -> f64 {
        csv.lines()
            .find_map(|l| l.strip_prefix(&format!("{k},")))
            .unwrap_or_else(|| panic!("{k} missing in {csv}"))
            .parse()
            .unwrap()
    };
    assert_eq!(get("files"), 100.0);
    assert_eq!(get("median_lower"), sorted_median(lowers));
    assert_eq!(get("median_upper"), sorted_median(uppers));
    assert_eq!(get("failed"), 2.0);
    assert_eq!(get("coverage_true"), hits as f64 / 102.0);
    assert_eq!(get("converged"), 0.9);
}
