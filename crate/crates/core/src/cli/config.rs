//! Flat `key = value` configuration.
//!
//! Lines are `key = value`; `#` starts a comment; `[section]` prefixes the
//! following keys with `section.`. Dotted keys may also be written out in full.
//!
//! ```text
//! [model]
//! name = entry_game
//!
//! [problem]
//! theta_0 = 0.5, 0.25, 0.5, 0.25, -1, -1, -1, -1
//! p = 1, 0, 0, 0, 0, 0, 0, 0
//!
//! [options]
//! profile = baseline
//! alpha = 0.05
//! b = 201
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{IntervalType, Kappa, Method, MomentModel, Options, ParameterSpace};
use crate::models::{dgp8, entry_game, EntryGame, LinearModel, Selection};

const SECTIONS: [&str; 5] = ["model", "problem", "options", "simulate", "reference"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    /// `key -> (line number, raw value)`.
    entries: BTreeMap<String, (usize, String)>,
}

fn config_err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| config_err(line_no, "unterminated section header"))?
                    .trim();
                section = name.to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                config_err(line_no, format!("expected `key = value`, got `{line}`"))
            })?;
            let k = k.trim();
            if k.is_empty() {
                return Err(config_err(line_no, "empty key"));
            }
            let key = if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            };
            let top = key.split('.').next().unwrap_or("");
            if !SECTIONS.contains(&top) || !key.contains('.') {
                return Err(config_err(line_no, format!("unknown key `{key}`")));
            }
            if entries
                .insert(key.clone(), (line_no, v.trim().to_string()))
                .is_some()
            {
                return Err(config_err(line_no, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |(l, _)| *l)
    }

    /// Keys under `section.` (without the prefix) and their values.
    pub fn section(&self, section: &str) -> Vec<(String, String)> {
        let prefix = format!("{section}.");
        self.entries
            .iter()
            .filter_map(|(k, (_, v))| k.strip_prefix(&prefix).map(|s| (s.to_string(), v.clone())))
            .collect()
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                parse_f64(v).ok_or_else(|| {
                    config_err(self.line(key), format!("`{key}`: not a number: `{v}`"))
                })
            })
            .transpose()
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| {
                v.parse().map_err(|_| {
                    config_err(
                        self.line(key),
                        format!("`{key}`: not a non-negative integer: `{v}`"),
                    )
                })
            })
            .transpose()
    }

    pub fn vec(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                parse_list(v).ok_or_else(|| {
                    config_err(self.line(key), format!("`{key}`: not a number list: `{v}`"))
                })
            })
            .transpose()
    }
}

/// Accepts `inf`, `-inf` and everything `f64::from_str` does.
pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

pub fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ")
}

/// Options from `options.*` keys on top of `options.profile`.
pub fn options_from_config(cfg: &Config) -> Result<Options> {
    let mut o = match cfg.get("options.profile").unwrap_or("baseline") {
        "baseline" => Options::baseline(),
        "stringent" => Options::stringent(),
        other => {
            return Err(config_err(
                cfg.line("options.profile"),
                format!("`options.profile`: unknown profile `{other}`"),
            ))
        }
    };
    for (key, raw) in cfg.section("options") {
        let full = format!("options.{key}");
        let line = cfg.line(&full);
        let num = || cfg.f64(&full).map(|v| v.unwrap_or(f64::NAN));
        let int = || cfg.usize(&full).map(|v| v.unwrap_or(0));
        match key.as_str() {
            "profile" => {}
            "alpha" => o.alpha = num()?,
            "interval_type" => {
                o.interval_type = match raw.as_str() {
                    "two_sided" => IntervalType::TwoSided,
                    "one_sided" => IntervalType::OneSided,
                    _ => {
                        return Err(config_err(
                            line,
                            format!("`{full}`: expected two_sided or one_sided"),
                        ))
                    }
                }
            }
            "method" => {
                o.method = match raw.as_str() {
                    "calibrated" => Method::Calibrated,
                    "as" => Method::AndrewsSoares,
                    _ => {
                        return Err(config_err(
                            line,
                            format!("`{full}`: expected calibrated or as"),
                        ))
                    }
                }
            }
            "b" => o.b = int()?,
            "kappa" => {
                o.kappa = if raw == "sqrt_log_n" {
                    Kappa::SqrtLogN
                } else {
                    Kappa::Constant(num()?)
                }
            }
            "gms" => {
                if raw != "hard_threshold" {
                    return Err(config_err(
                        line,
                        format!("`{full}`: only hard_threshold is configurable"),
                    ));
                }
            }
            "rho" => o.rho = num()?,
            "eam_maxit" => o.eam_maxit = int()?,
            "eam_minit" => o.eam_minit = int()?,
            "mbase" => o.mbase = int()?,
            "h_rate" => o.h_rate = num()?,
            "h_rate2" => o.h_rate2 = num()?,
            "eam_obj_tol" => o.eam_obj_tol = num()?,
            "eam_tol" => o.eam_tol = num()?,
            "eam_maxviol_tol" => o.eam_maxviol_tol = num()?,
            "ei_points" => o.ei_points = int()?,
            "f_keep_threshold" => o.f_keep_threshold = num()?,
            "critval_tol" => o.critval_tol = num()?,
            "seed" => {
                o.seed = raw
                    .parse()
                    .map_err(|_| config_err(line, format!("`{full}`: not an unsigned integer")))?
            }
            "parallel" => o.parallel = int()?,
            _ => return Err(config_err(line, format!("unknown key `{full}`"))),
        }
    }
    Ok(o)
}

/// `options.*` lines echoing every serializable field.
pub fn options_to_lines(o: &Options) -> Vec<(String, String)> {
    let kappa = match &o.kappa {
        Kappa::SqrtLogN => "sqrt_log_n".to_string(),
        Kappa::Constant(k) => fmt_f64(*k),
        Kappa::Custom(_) => "custom".to_string(),
    };
    let pairs: Vec<(&str, String)> = vec![
        ("alpha", fmt_f64(o.alpha)),
        (
            "interval_type",
            match o.interval_type {
                IntervalType::TwoSided => "two_sided",
                IntervalType::OneSided => "one_sided",
            }
            .into(),
        ),
        (
            "method",
            match o.method {
                Method::Calibrated => "calibrated",
                Method::AndrewsSoares => "as",
            }
            .into(),
        ),
        ("b", o.b.to_string()),
        ("kappa", kappa),
        ("rho", fmt_f64(o.rho)),
        ("eam_maxit", o.eam_maxit.to_string()),
        ("eam_minit", o.eam_minit.to_string()),
        ("mbase", o.mbase.to_string()),
        ("h_rate", fmt_f64(o.h_rate)),
        ("h_rate2", fmt_f64(o.h_rate2)),
        ("eam_obj_tol", fmt_f64(o.eam_obj_tol)),
        ("eam_tol", fmt_f64(o.eam_tol)),
        ("eam_maxviol_tol", fmt_f64(o.eam_maxviol_tol)),
        ("ei_points", o.ei_points.to_string()),
        ("f_keep_threshold", fmt_f64(o.f_keep_threshold)),
        ("critval_tol", fmt_f64(o.critval_tol)),
        ("seed", o.seed.to_string()),
        ("parallel", o.parallel.to_string()),
    ];
    pairs
        .into_iter()
        .map(|(k, v)| (format!("options.{k}"), v))
        .collect()
}

/// A named model with its default space and parameters.
#[derive(Clone)]
pub struct ModelSpec {
    pub name: String,
    pub model: Arc<dyn MomentModel>,
    pub space: ParameterSpace,
    pub theta_0: Vec<f64>,
    pub p: Vec<f64>,
}

fn unit(d: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[k] = 1.0;
    v
}

/// Model named by `model.name` (`entry_game`, `box`, `rotated_box`, `dgp8`),
/// with `problem.theta_0`, `problem.p`, `problem.lb`, `problem.ub` overrides.
pub fn model_from_config(cfg: &Config) -> Result<ModelSpec> {
    let name = cfg.get("model.name").unwrap_or("entry_game").to_string();
    let (model, mut space, theta_0): (Arc<dyn MomentModel>, ParameterSpace, Vec<f64>) =
        match name.as_str() {
            "entry_game" => (
                Arc::new(EntryGame),
                entry_game::default_space(),
                entry_game::true_theta(),
            ),
            "box" => {
                let d = cfg.usize("model.dim")?.unwrap_or(2);
                if d == 0 {
                    return Err(config_err(
                        cfg.line("model.dim"),
                        "`model.dim` must be positive",
                    ));
                }
                (
                    Arc::new(LinearModel::axis_box(d)),
                    ParameterSpace::new_box(vec![-3.0; d], vec![3.0; d])?,
                    vec![0.0; d],
                )
            }
            "rotated_box" => {
                let angle = cfg
                    .f64("model.angle")?
                    .unwrap_or(std::f64::consts::FRAC_PI_4);
                (
                    Arc::new(LinearModel::rotated_2d(angle)),
                    ParameterSpace::new_box(vec![-3.0; 2], vec![3.0; 2])?,
                    vec![0.0; 2],
                )
            }
            "dgp8" => (
                Arc::new(dgp8::synthetic_model()),
                dgp8::space(),
                dgp8::true_theta(),
            ),
            other => {
                return Err(config_err(
                    cfg.line("model.name"),
                    format!("`model.name`: unknown model `{other}`"),
                ))
            }
        };
    for (key, _) in cfg.section("model") {
        if !["name", "dim", "angle"].contains(&key.as_str()) {
            return Err(config_err(
                cfg.line(&format!("model.{key}")),
                format!("unknown key `model.{key}`"),
            ));
        }
    }
    for (key, _) in cfg.section("problem") {
        if !["theta_0", "p", "lb", "ub"].contains(&key.as_str()) {
            return Err(config_err(
                cfg.line(&format!("problem.{key}")),
                format!("unknown key `problem.{key}`"),
            ));
        }
    }
    let d = model.dim();
    if let (Some(lb), Some(ub)) = (cfg.vec("problem.lb")?, cfg.vec("problem.ub")?) {
        let mut s = ParameterSpace::new_box(lb, ub)?;
        if space.has_polytope() {
            s = s.with_polytope(space.poly_a.clone(), space.poly_b.clone())?;
        }
        space = s;
        if name == "dgp8" {
            space = space
                .with_bound_transform(Arc::new(dgp8::bound_transform))
                .with_lambda_rows(Arc::new(dgp8::lambda_rows));
        }
    }
    Ok(ModelSpec {
        theta_0: cfg.vec("problem.theta_0")?.unwrap_or(theta_0),
        p: cfg.vec("problem.p")?.unwrap_or_else(|| unit(d, 0)),
        name,
        model,
        space,
    })
}

/// Data-generation settings from `simulate.*`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    pub theta_true: Vec<f64>,
    /// Entry game: shock correlation.
    pub r: f64,
    pub selection: Selection,
    /// Linear models: noise sd and identified-set bounds.
    pub sd: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn sim_from_config(cfg: &Config, spec: &ModelSpec) -> Result<SimSpec> {
    for (key, _) in cfg.section("simulate") {
        if !["n", "theta_true", "r", "selection", "sd", "lo", "hi"].contains(&key.as_str()) {
            return Err(config_err(
                cfg.line(&format!("simulate.{key}")),
                format!("unknown key `simulate.{key}`"),
            ));
        }
    }
    let d = spec.model.dim();
    let selection = match cfg.get("simulate.selection").unwrap_or("uniform") {
        "uniform" => Selection::Uniform,
        "always_01" => Selection::AlwaysZeroOne,
        other => {
            return Err(config_err(
                cfg.line("simulate.selection"),
                format!("`simulate.selection`: unknown rule `{other}`"),
            ))
        }
    };
    let default_true = match spec.name.as_str() {
        "entry_game" => entry_game::true_theta(),
        "dgp8" => dgp8::true_theta(),
        _ => spec.theta_0.clone(),
    };
    Ok(SimSpec {
        n: cfg.usize("simulate.n")?.unwrap_or(1000),
        theta_true: cfg.vec("simulate.theta_true")?.unwrap_or(default_true),
        r: cfg.f64("simulate.r")?.unwrap_or(0.0),
        selection,
        sd: cfg.f64("simulate.sd")?.unwrap_or(1.0),
        lo: cfg.vec("simulate.lo")?.unwrap_or_else(|| vec![0.0; d]),
        hi: cfg.vec("simulate.hi")?.unwrap_or_else(|| vec![1.0; d]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_dotted_keys_agree() {
        let a = Config::parse("[options]\nalpha = 0.1 # comment\n").unwrap();
        let b = Config::parse("options.alpha=0.1").unwrap();
        assert_eq!(a.get("options.alpha"), b.get("options.alpha"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        match Config::parse("[options]\n\nalpha 0.1") {
            Err(Error::Config { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(Config::parse("bogus.key = 1").is_err());
        assert!(Config::parse("options.alpha = 1\noptions.alpha = 2").is_err());
    }

    #[test]
    fn options_round_trip_through_lines() {
        let mut o = Options::stringent();
        o.alpha = 0.1;
        o.kappa = Kappa::Constant(2.5);
        o.method = Method::AndrewsSoares;
        o.seed = u64::MAX;
        let text: String = options_to_lines(&o)
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let back = options_from_config(&Config::parse(&text).unwrap()).unwrap();
        assert_eq!(format!("{o:?}"), format!("{back:?}"));
    }

    #[test]
    fn profiles_echo_their_values() {
        let base = options_from_config(&Config::default()).unwrap();
        assert_eq!(
            (base.h_rate, base.eam_obj_tol, base.ei_points),
            (1.8, 0.005, 10)
        );
        let cfg = Config::parse("options.profile = stringent").unwrap();
        let s = options_from_config(&cfg).unwrap();
        assert_eq!((s.eam_maxit, s.h_rate), (50, 1.25));
    }

    #[test]
    fn unknown_option_is_rejected() {
        let cfg = Config::parse("options.alhpa = 0.1").unwrap();
        assert!(matches!(
            options_from_config(&cfg),
            Err(Error::Config { line: 1, .. })
        ));
    }
}
