//! Line-oriented result files and the evaluated-points CSV.
//!
//! A result file is a list of `key = value` lines:
//!
//! ```text
//! version = v0.1.0
//! seed = 7
//! lower = -0.05
//! upper = 0.89
//! converged = true
//! direction.1.q = 1.0, 0.0
//! direction.1.theta = ...
//! options.alpha = 0.05
//! reference.true = 0.5
//! ```
//!
//! Floats are written in shortest round-trip form, so parsing the text gives
//! back exactly the values that were written.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::config::{
    fmt_f64, fmt_list, options_from_config, options_to_lines, parse_f64, parse_list, Config,
};
use crate::eam::RunResult;
use crate::error::{Error, Result};
use crate::model::Options;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq)]
pub struct DirectionRecord {
    pub q: Vec<f64>,
    pub theta: Vec<f64>,
    pub optbound: f64,
    pub c_hat: f64,
    pub max_violation: f64,
    pub ei: f64,
    pub converged: bool,
    pub boundary: bool,
    pub iterations: usize,
    pub lp_count: usize,
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub version: String,
    pub seed: u64,
    pub replication: Option<u64>,
    pub lower: f64,
    pub upper: f64,
    pub converged: bool,
    pub lp_count: usize,
    pub wall_time: f64,
    pub directions: Vec<DirectionRecord>,
    /// `options.*` lines, in echo order.
    pub options: Vec<(String, String)>,
    /// Named reference values of `p'theta` used for coverage.
    pub references: Vec<(String, f64)>,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedResult(msg.into())
}

impl ResultRecord {
    pub fn from_run(res: &RunResult, options: &Options) -> Self {
        Self {
            version: VERSION.to_string(),
            seed: options.seed,
            replication: None,
            lower: res.lower,
            upper: res.upper,
            converged: res.converged(),
            lp_count: res.lp_count,
            wall_time: res.wall_time,
            directions: res
                .directions
                .iter()
                .map(|d| DirectionRecord {
                    q: d.q.clone(),
                    theta: d.theta_hat.clone(),
                    optbound: d.optbound,
                    c_hat: d.c_at_opt,
                    max_violation: d.cv_at_opt,
                    ei: d.ei_at_opt,
                    converged: d.converged,
                    boundary: d.boundary,
                    iterations: d.iterations,
                    lp_count: d.lp_count,
                    wall_time: d.wall_time,
                })
                .collect(),
            options: options_to_lines(options),
            references: Vec::new(),
        }
    }

    /// Options recovered from the echo.
    pub fn options(&self) -> Result<Options> {
        let text: String = self
            .options
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        options_from_config(&Config::parse(&text)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        put("version", self.version.clone());
        put("seed", self.seed.to_string());
        if let Some(r) = self.replication {
            put("replication", r.to_string());
        }
        put("lower", fmt_f64(self.lower));
        put("upper", fmt_f64(self.upper));
        put("converged", self.converged.to_string());
        put("lp_count", self.lp_count.to_string());
        put("wall_time", fmt_f64(self.wall_time));
        for (i, d) in self.directions.iter().enumerate() {
            let k = |f: &str| format!("direction.{}.{f}", i + 1);
            put(&k("q"), fmt_list(&d.q));
            put(&k("theta"), fmt_list(&d.theta));
            put(&k("optbound"), fmt_f64(d.optbound));
            put(&k("c_hat"), fmt_f64(d.c_hat));
            put(&k("max_violation"), fmt_f64(d.max_violation));
            put(&k("ei"), fmt_f64(d.ei));
            put(&k("converged"), d.converged.to_string());
            put(&k("boundary"), d.boundary.to_string());
            put(&k("iterations"), d.iterations.to_string());
            put(&k("lp_count"), d.lp_count.to_string());
            put(&k("wall_time"), fmt_f64(d.wall_time));
        }
        for (k, v) in &self.options {
            put(k, v.clone());
        }
        for (k, v) in &self.references {
            put(&format!("reference.{k}"), fmt_f64(*v));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut options = Vec::new();
        let mut references = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| malformed(format!("line {}: expected `key = value`", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.starts_with("options.") {
                options.push((k.to_string(), v.to_string()));
            } else if let Some(name) = k.strip_prefix("reference.") {
                let x = parse_f64(v)
                    .ok_or_else(|| malformed(format!("reference `{name}` is not a number")))?;
                references.push((name.to_string(), x));
            } else {
                map.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| {
            map.get(k)
                .ok_or_else(|| malformed(format!("missing `{k}`")))
        };
        let num = |k: &str| {
            get(k).and_then(|v| {
                parse_f64(v).ok_or_else(|| malformed(format!("`{k}` is not a number")))
            })
        };
        let int = |k: &str| {
            get(k).and_then(|v| {
                v.parse::<usize>()
                    .map_err(|_| malformed(format!("`{k}` is not an integer")))
            })
        };
        let flag = |k: &str| {
            get(k).and_then(|v| {
                v.parse::<bool>()
                    .map_err(|_| malformed(format!("`{k}` is not a boolean")))
            })
        };
        let list = |k: &str| {
            get(k).and_then(|v| {
                parse_list(v).ok_or_else(|| malformed(format!("`{k}` is not a list")))
            })
        };
        let mut directions = Vec::new();
        for i in 1.. {
            let k = |f: &str| format!("direction.{i}.{f}");
            if !map.contains_key(&k("q")) {
                break;
            }
            directions.push(DirectionRecord {
                q: list(&k("q"))?,
                theta: list(&k("theta"))?,
                optbound: num(&k("optbound"))?,
                c_hat: num(&k("c_hat"))?,
                max_violation: num(&k("max_violation"))?,
                ei: num(&k("ei"))?,
                converged: flag(&k("converged"))?,
                boundary: flag(&k("boundary"))?,
                iterations: int(&k("iterations"))?,
                lp_count: int(&k("lp_count"))?,
                wall_time: num(&k("wall_time"))?,
            });
        }
        if directions.is_empty() {
            return Err(malformed("no directions"));
        }
        Ok(Self {
            version: get("version")?.clone(),
            seed: get("seed")?
                .parse()
                .map_err(|_| malformed("`seed` is not an integer"))?,
            replication: map
                .get("replication")
                .map(|v| {
                    v.parse()
                        .map_err(|_| malformed("`replication` is not an integer"))
                })
                .transpose()?,
            lower: num("lower")?,
            upper: num("upper")?,
            converged: flag("converged")?,
            lp_count: int("lp_count")?,
            wall_time: num("wall_time")?,
            directions,
            options,
            references,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// Writes through a temporary file and a rename.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_text().as_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Every evaluated point: `stage` is 0 for the feasible search, then one per
/// direction. Columns `stage, theta_1..theta_d, c_hat, h_max, feasible`.
pub fn points_csv(res: &RunResult) -> Result<Vec<u8>> {
    let d = res.directions.first().map_or(0, |r| r.q.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["stage".to_string()];
    header.extend((1..=d).map(|k| format!("theta_{k}")));
    header.extend(["c_hat", "h_max", "feasible"].map(String::from));
    w.write_record(&header)?;
    let stages = std::iter::once(&res.initial).chain(res.directions.iter().map(|r| &r.evaluated));
    for (stage, evals) in stages.enumerate() {
        for e in evals {
            let mut row = vec![stage.to_string()];
            row.extend(e.theta.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(e.c_hat));
            row.push(fmt_f64(e.h_max));
            row.push(e.feasible.to_string());
            w.write_record(&row)?;
        }
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultRecord {
        ResultRecord {
            version: VERSION.into(),
            seed: 42,
            replication: Some(3),
            lower: -0.1 / 3.0,
            upper: f64::INFINITY,
            converged: false,
            lp_count: 123,
            wall_time: 1.5e-3,
            directions: vec![DirectionRecord {
                q: vec![1.0, 0.0],
                theta: vec![std::f64::consts::PI, -1e-300],
                optbound: 0.1 + 0.2,
                c_hat: 1.96,
                max_violation: -0.25,
                ei: 0.0,
                converged: true,
                boundary: false,
                iterations: 7,
                lp_count: 100,
                wall_time: 0.5,
            }],
            options: options_to_lines(&Options::baseline()),
            references: vec![("true".into(), 0.5)],
        }
    }

    #[test]
    fn text_round_trip_is_lossless() {
        let r = sample();
        let back = ResultRecord::parse(&r.to_text()).unwrap();
        assert_eq!(r, back);
        assert_eq!(back.to_text(), r.to_text());
        assert_eq!(
            format!("{:?}", back.options().unwrap()),
            format!("{:?}", Options::baseline())
        );
    }

    #[test]
    fn truncated_file_is_malformed() {
        let text = sample().to_text();
        let cut: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            ResultRecord::parse(&cut),
            Err(Error::MalformedResult(_))
        ));
    }
}
