//! The `run`, `simulate` and `analyze` commands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{
    fmt_f64, model_from_config, options_from_config, sim_from_config, Config, ModelSpec, SimSpec,
};
use super::record::{points_csv, write_atomic, ResultRecord};
use crate::eam::{run_interval, RunResult};
use crate::error::{Error, Result};
use crate::model::{dot, validate_inputs, Dataset, Options};
use crate::models::{dgp8, simulate_box, simulate_entry_game};
use crate::rng::{replication_seed, substream, TAG_SIMULATE};
use crate::stats::median;

/// Exit code for success.
pub const EXIT_OK: i32 = 0;
/// Invalid input or a failed computation.
pub const EXIT_ERROR: i32 = 1;
/// Finished, but some direction missed its convergence criteria.
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Command-line values that take precedence over the config file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl Overrides {
    fn apply(&self, o: &mut Options) {
        if let Some(s) = self.seed {
            o.seed = s;
        }
        if let Some(w) = self.workers {
            o.parallel = w;
        }
    }
}

/// `<out>.points.csv` next to a result file.
pub fn points_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".points.csv");
    PathBuf::from(s)
}

/// Builds the problem from a parsed config and runs it.
pub fn run_config(
    cfg: &Config,
    data: Dataset,
    overrides: Overrides,
) -> Result<(RunResult, Options)> {
    let spec = model_from_config(cfg)?;
    let mut options = options_from_config(cfg)?;
    overrides.apply(&mut options);
    let problem = validate_inputs(
        data,
        spec.model,
        spec.theta_0,
        spec.p,
        spec.space,
        options.clone(),
    )?;
    Ok((run_interval(&problem)?, options))
}

fn write_outputs(out: &Path, record: &ResultRecord, res: &RunResult) -> Result<()> {
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    record.write(out)?;
    write_atomic(&points_path(out), &points_csv(res)?)
}

fn try_run(config: &Path, data: &Path, out: &Path, overrides: Overrides) -> Result<bool> {
    let cfg = Config::read(config)?;
    let data = Dataset::read_csv(data)?;
    let (res, options) = run_config(&cfg, data, overrides)?;
    let record = ResultRecord::from_run(&res, &options);
    write_outputs(out, &record, &res)?;
    println!("[{}, {}]", fmt_f64(res.lower), fmt_f64(res.upper));
    for d in &res.directions {
        for w in &d.warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(res.converged())
}

/// Computes one interval and writes `out` plus `out.points.csv`.
pub fn cmd_run(config: &Path, data: &Path, out: &Path, overrides: Overrides) -> i32 {
    match try_run(config, data, out, overrides) {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("not converged; result written and flagged");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Draws a dataset for the configured model.
pub fn simulate_dataset(spec: &ModelSpec, sim: &SimSpec, seed: u64) -> Result<Dataset> {
    let mut rng = substream(seed, TAG_SIMULATE, 0);
    match spec.name.as_str() {
        "entry_game" => simulate_entry_game(&sim.theta_true, sim.n, sim.r, sim.selection, &mut rng),
        "dgp8" => dgp8::simulate_synthetic(&sim.theta_true, sim.sd, sim.n, &mut rng),
        _ => simulate_box(&sim.lo, &sim.hi, sim.sd, sim.n, &mut rng),
    }
}

/// File stem of replication `i`.
pub fn replication_stem(i: u64) -> String {
    format!("rep_{i:06}")
}

enum RepOutcome {
    Converged,
    NotConverged,
    Failed,
}

fn run_replication(cfg: &Config, options: &Options, i: u64, out_dir: &Path) -> Result<bool> {
    let spec = model_from_config(cfg)?;
    let sim = sim_from_config(cfg, &spec)?;
    let seed = replication_seed(options.seed, i);
    let data = simulate_dataset(&spec, &sim, seed)?;
    let mut opts = options.clone();
    opts.seed = seed;
    // Replications share the batch's worker pool.
    opts.parallel = 0;
    let truth = dot(&spec.p, &sim.theta_true) / spec.p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let problem = validate_inputs(
        data,
        spec.model,
        spec.theta_0,
        spec.p,
        spec.space,
        opts.clone(),
    )?;
    let res = run_interval(&problem)?;
    let mut record = ResultRecord::from_run(&res, &opts);
    record.replication = Some(i);
    // `reference.true` in the config replaces the simulated truth.
    if cfg.get("reference.true").is_none() {
        record.references.push(("true".into(), truth));
    }
    for (k, _) in cfg.section("reference") {
        let x = cfg.f64(&format!("reference.{k}"))?.unwrap_or(f64::NAN);
        record.references.push((k, x));
    }
    write_outputs(
        &out_dir.join(format!("{}.result", replication_stem(i))),
        &record,
        &res,
    )?;
    Ok(res.converged())
}

/// Seeded Monte Carlo batch over replications `sim_lo..=sim_hi` of `nmc`.
pub fn cmd_simulate(
    config: &Path,
    dgp: Option<&str>,
    nmc: u64,
    sim_lo: u64,
    sim_hi: u64,
    out_dir: &Path,
    overrides: Overrides,
) -> i32 {
    let setup = (|| -> Result<(Config, Options)> {
        let mut cfg = Config::read(config)?;
        if let Some(name) = dgp {
            cfg.set("model.name", name);
        }
        if !(1 <= sim_lo && sim_lo <= sim_hi && sim_hi <= nmc) {
            return Err(Error::InvalidOption {
                field: "sim_lo",
                reason: format!("need 1 <= sim_lo <= sim_hi <= nmc, got {sim_lo}, {sim_hi}, {nmc}"),
            });
        }
        let spec = model_from_config(&cfg)?;
        sim_from_config(&cfg, &spec)?;
        let mut options = options_from_config(&cfg)?;
        overrides.apply(&mut options);
        options.validate()?;
        fs::create_dir_all(out_dir)?;
        Ok((cfg, options))
    })();
    let (cfg, options) = match setup {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let batch = || -> Vec<RepOutcome> {
        (sim_lo..=sim_hi)
            .into_par_iter()
            .map(|i| match run_replication(&cfg, &options, i, out_dir) {
                Ok(true) => RepOutcome::Converged,
                Ok(false) => RepOutcome::NotConverged,
                Err(e) => {
                    eprintln!("replication {i}: {e}");
                    let path = out_dir.join(format!("{}.error", replication_stem(i)));
                    if let Err(w) = write_atomic(&path, format!("{e}\n").as_bytes()) {
                        eprintln!("replication {i}: could not record failure: {w}");
                    }
                    RepOutcome::Failed
                }
            })
            .collect()
    };
    let outcomes = if options.parallel == 0 {
        batch()
    } else {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(options.parallel)
            .build()
        {
            Ok(pool) => pool.install(batch),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_ERROR;
            }
        }
    };
    let failed = outcomes
        .iter()
        .filter(|o| matches!(o, RepOutcome::Failed))
        .count();
    let unconverged = outcomes
        .iter()
        .filter(|o| matches!(o, RepOutcome::NotConverged))
        .count();
    println!(
        "replications {sim_lo}..={sim_hi}: {} ok, {unconverged} not converged, {failed} failed",
        outcomes.len() - failed - unconverged
    );
    if failed > 0 {
        EXIT_ERROR
    } else if unconverged > 0 {
        EXIT_NOT_CONVERGED
    } else {
        EXIT_OK
    }
}

/// Aggregate statistics over result files.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub files: usize,
    /// Replications that ended in an error, such as an empty confidence set.
    pub failed: usize,
    pub median_lower: f64,
    pub median_upper: f64,
    /// Reference name -> fraction of replications with `lower <= v <= upper`;
    /// failed ones count as misses.
    pub coverage: BTreeMap<String, f64>,
    pub mean_c_upper: f64,
    /// `NaN` for one-sided results.
    pub mean_c_lower: f64,
    pub mean_wall_time: f64,
    pub converged: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Statistics over parsed records plus `failed` replications without one;
/// independent of record order.
pub fn summarize(records: &[ResultRecord], failed: usize) -> Option<Summary> {
    if records.is_empty() {
        return None;
    }
    let lowers: Vec<f64> = records.iter().map(|r| r.lower).collect();
    let uppers: Vec<f64> = records.iter().map(|r| r.upper).collect();
    let mut hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in records {
        for (name, v) in &r.references {
            let e = hits.entry(name.clone()).or_default();
            e.1 += 1;
            if r.lower <= *v && *v <= r.upper {
                e.0 += 1;
            }
        }
    }
    let c_upper: Vec<f64> = records.iter().map(|r| r.directions[0].c_hat).collect();
    let c_lower: Vec<f64> = records
        .iter()
        .filter_map(|r| r.directions.get(1).map(|d| d.c_hat))
        .collect();
    Some(Summary {
        files: records.len(),
        failed,
        median_lower: median(&lowers)?,
        median_upper: median(&uppers)?,
        coverage: hits
            .into_iter()
            .map(|(k, (h, n))| (k, h as f64 / (n + failed) as f64))
            .collect(),
        mean_c_upper: mean(&c_upper),
        mean_c_lower: mean(&c_lower),
        mean_wall_time: mean(&records.iter().map(|r| r.wall_time).collect::<Vec<_>>()),
        converged: records.iter().filter(|r| r.converged).count() as f64 / records.len() as f64,
    })
}

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("statistic,value\n");
        let mut row = |k: &str, v: f64| {
            let _ = writeln!(out, "{k},{}", fmt_f64(v));
        };
        row("files", self.files as f64);
        row("failed", self.failed as f64);
        row("median_lower", self.median_lower);
        row("median_upper", self.median_upper);
        for (k, v) in &self.coverage {
            row(&format!("coverage_{k}"), *v);
        }
        row("mean_c_lower", self.mean_c_lower);
        row("mean_c_upper", self.mean_c_upper);
        row("mean_wall_time", self.mean_wall_time);
        row("converged", self.converged);
        out
    }

    pub fn pretty(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "result files        {}", self.files);
        let _ = writeln!(out, "failed replications {}", self.failed);
        let _ = writeln!(out, "median lower bound  {:.6}", self.median_lower);
        let _ = writeln!(out, "median upper bound  {:.6}", self.median_upper);
        for (k, v) in &self.coverage {
            let _ = writeln!(out, "coverage at {k:<8}{:>7.1}%", 100.0 * v);
        }
        let _ = writeln!(out, "mean c at lower     {:.4}", self.mean_c_lower);
        let _ = writeln!(out, "mean c at upper     {:.4}", self.mean_c_upper);
        let _ = writeln!(out, "mean time (s)       {:.2}", self.mean_wall_time);
        let _ = writeln!(out, "converged           {:.1}%", 100.0 * self.converged);
        out
    }
}

/// Reads every `*.result` in `dir`, skipping malformed ones with a warning.
pub fn read_results(dir: &Path) -> Result<Vec<ResultRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "result"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        match ResultRecord::read(&p) {
            Ok(r) => out.push(r),
            Err(e) => eprintln!("warning: skipping {}: {e}", p.display()),
        }
    }
    Ok(out)
}

/// Number of `*.error` files left by failed replications.
pub fn count_failures(dir: &Path) -> Result<usize> {
    Ok(fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "error"))
        .count())
}

/// Prints the summary table and writes `summary.csv` into `dir`.
pub fn cmd_analyze(dir: &Path) -> i32 {
    let records = match read_results(dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let failed = match count_failures(dir) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let Some(summary) = summarize(&records, failed) else {
        eprintln!("error: no readable result files in {}", dir.display());
        return EXIT_ERROR;
    };
    print!("{}", summary.pretty());
    if let Err(e) = write_atomic(&dir.join("summary.csv"), summary.to_csv().as_bytes()) {
        eprintln!("error: {e}");
        return EXIT_ERROR;
    }
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::record::DirectionRecord;

    fn record(lower: f64, upper: f64, truth: f64) -> ResultRecord {
        let dir = |c| DirectionRecord {
            q: vec![1.0],
            theta: vec![0.0],
            optbound: 0.0,
            c_hat: c,
            max_violation: 0.0,
            ei: 0.0,
            converged: true,
            boundary: false,
            iterations: 1,
            lp_count: 0,
            wall_time: 1.0,
        };
        ResultRecord {
            version: "v".into(),
            seed: 0,
            replication: None,
            lower,
            upper,
            converged: true,
            lp_count: 0,
            wall_time: 2.0,
            directions: vec![dir(1.0), dir(2.0)],
            options: Vec::new(),
            references: vec![("true".into(), truth)],
        }
    }

    #[test]
    fn single_file_medians_are_its_endpoints() {
        let s = summarize(&[record(-1.0, 2.0, 0.0)], 0).unwrap();
        assert_eq!((s.median_lower, s.median_upper), (-1.0, 2.0));
        assert_eq!(s.coverage["true"], 1.0);
        assert_eq!((s.mean_c_upper, s.mean_c_lower), (1.0, 2.0));
    }

    #[test]
    fn coverage_counts_closed_intervals() {
        let recs = [
            record(0.0, 1.0, 1.0),
            record(0.0, 1.0, 1.5),
            record(0.2, 0.4, 0.2),
            record(0.3, 0.4, 0.2),
        ];
        assert_eq!(summarize(&recs, 0).unwrap().coverage["true"], 0.5);
        assert_eq!(summarize(&recs, 2).unwrap().coverage["true"], 2.0 / 6.0);
    }

    #[test]
    fn empty_input_has_no_summary() {
        assert!(summarize(&[], 3).is_none());
    }
}
