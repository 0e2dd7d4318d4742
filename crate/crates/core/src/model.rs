//! The moment-model abstraction, the parameter space, run options, and input
//! validation.
//!
//! Models are separable: the population moment for index `j` is
//! `E[f_j(W)] + g_j(theta)`. A model supplies the data part `f_hat`, the
//! parameter part `g` with its Jacobian, and the standard deviation estimator.
//! Equalities are carried in doubled form, `[m; -m]`, so the second half of
//! every equality vector is the negation of the first half.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lp::{self, LinearSystem};

/// Row-major data matrix with `n` observations of `d_W` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "dataset values",
                expected: rows * cols,
                found: values.len(),
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "dataset row",
                    expected: cols,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// New dataset made of the rows at `indices` (with repetition).
    pub fn resample(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            values,
        }
    }

    /// Reads a header-less numeric CSV.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let row = record
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Config {
                        line: line + 1,
                        message: format!("not a number: `{s}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        for row in self.rows() {
            writer.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Moment counts: `j1` inequalities, `j2` undoubled equalities, `j3` paired
/// inequality groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MomentCounts {
    pub j1: usize,
    pub j2: usize,
    pub j3: usize,
}

impl MomentCounts {
    pub fn new(j1: usize, j2: usize, j3: usize) -> Result<Self> {
        let counts = Self { j1, j2, j3 };
        if j3 > j1 / 2 {
            return Err(Error::InvalidOption {
                field: "j3",
                reason: format!("{j3} paired groups need at least {} inequalities", 2 * j3),
            });
        }
        if counts.j_total() == 0 {
            return Err(Error::InvalidOption {
                field: "j1",
                reason: "model must have at least one moment".into(),
            });
        }
        Ok(counts)
    }

    /// `j1 + 2 j2`, the number of rows after doubling the equalities.
    pub fn j_total(&self) -> usize {
        self.j1 + 2 * self.j2
    }
}

/// Output of [`MomentModel::f_hat`].
#[derive(Clone, Debug, PartialEq)]
pub struct FHat {
    pub f_ineq: Vec<f64>,
    pub f_eq: Vec<f64>,
    pub keep_ineq: Vec<bool>,
    pub keep_eq: Vec<bool>,
    /// Paired-group label of each inequality, `None` when unpaired.
    pub paired: Vec<Option<usize>>,
}

/// Values of `g(theta)` split into the inequality and doubled-equality blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentValues {
    pub ineq: Vec<f64>,
    pub eq: Vec<f64>,
}

/// Jacobians of `g(theta)`: `ineq` is `j1 x d`, `eq` is `2 j2 x d`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentJacobian {
    pub ineq: DMatrix<f64>,
    pub eq: DMatrix<f64>,
}

/// A separable moment (in)equality model.
///
/// Implementations must be pure: the pipeline calls them concurrently.
pub trait MomentModel: Send + Sync {
    /// Dimension `d` of the parameter.
    fn dim(&self) -> usize;

    fn counts(&self) -> MomentCounts;

    /// Sample moments of the data part with keep flags and pairing labels.
    fn f_hat(&self, data: &Dataset, f_keep_threshold: f64) -> FHat;

    fn g(&self, theta: &[f64]) -> MomentValues;

    fn g_gradient(&self, theta: &[f64]) -> MomentJacobian;

    /// Standard deviations of `f_j(W)`; θ-free under separability.
    fn sigma_hat(&self, data: &Dataset, f_ineq: &[f64], f_eq: &[f64]) -> (Vec<f64>, Vec<f64>);
}

/// Keep flag for a Bernoulli-type sample moment: dropped when `|f|` is within
/// `threshold` of 0 or 1.
pub fn bernoulli_keep(f: f64, threshold: f64) -> bool {
    let a = f.abs();
    a > threshold && a < 1.0 - threshold
}

/// Maps the bounds of a contracted box to a tighter box that still contains
/// the polytope (used by draw-and-discard sampling).
pub type BoundTransform = Arc<dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync>;

/// Produces the polytope rows of the localized LP at `theta` given `sqrt(n)`.
pub type LambdaRowHook = Arc<dyn Fn(&[f64], f64) -> (Vec<Vec<f64>>, Vec<f64>) + Send + Sync>;

/// `{lb <= theta <= ub, A theta <= b}`.
#[derive(Clone)]
pub struct ParameterSpace {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub poly_a: Vec<Vec<f64>>,
    pub poly_b: Vec<f64>,
    bound_transform: Option<BoundTransform>,
    lambda_rows: Option<LambdaRowHook>,
}

impl fmt::Debug for ParameterSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParameterSpace")
            .field("lb", &self.lb)
            .field("ub", &self.ub)
            .field("poly_rows", &self.poly_a.len())
            .field("bound_transform", &self.bound_transform.is_some())
            .field("lambda_rows", &self.lambda_rows.is_some())
            .finish()
    }
}

const SPACE_TOL: f64 = 1e-12;

impl ParameterSpace {
    /// Hyperrectangle `[lb, ub]`.
    pub fn new_box(lb: Vec<f64>, ub: Vec<f64>) -> Result<Self> {
        if lb.len() != ub.len() {
            return Err(Error::DimensionMismatch {
                what: "ub",
                expected: lb.len(),
                found: ub.len(),
            });
        }
        if lb.iter().chain(&ub).any(|v| !v.is_finite()) {
            return Err(Error::InvalidOption {
                field: "bounds",
                reason: "bounds must be finite".into(),
            });
        }
        if lb.iter().zip(&ub).any(|(l, u)| l > u) || !lb.iter().zip(&ub).any(|(l, u)| l < u) {
            return Err(Error::EmptyInterior);
        }
        Ok(Self {
            lb,
            ub,
            poly_a: Vec::new(),
            poly_b: Vec::new(),
            bound_transform: None,
            lambda_rows: None,
        })
    }

    /// Adds polytope rows `A theta <= b` and checks for a strictly interior point.
    pub fn with_polytope(mut self, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "b_theta",
                expected: a.len(),
                found: b.len(),
            });
        }
        if let Some(row) = a.iter().find(|r| r.len() != self.dim()) {
            return Err(Error::DimensionMismatch {
                what: "A_theta row",
                expected: self.dim(),
                found: row.len(),
            });
        }
        self.poly_a = a;
        self.poly_b = b;
        if !self.has_interior()? {
            return Err(Error::EmptyInterior);
        }
        Ok(self)
    }

    pub fn with_bound_transform(mut self, hook: BoundTransform) -> Self {
        self.bound_transform = Some(hook);
        self
    }

    pub fn with_lambda_rows(mut self, hook: LambdaRowHook) -> Self {
        self.lambda_rows = Some(hook);
        self
    }

    /// Same space with a new box and extra rows appended; hooks are kept and no
    /// interior check is made (contracted regions may be thin).
    pub fn restricted(
        &self,
        lb: Vec<f64>,
        ub: Vec<f64>,
        extra_a: Vec<Vec<f64>>,
        extra_b: Vec<f64>,
    ) -> Self {
        let mut out = self.clone();
        out.lb = lb;
        out.ub = ub;
        out.poly_a.extend(extra_a);
        out.poly_b.extend(extra_b);
        out
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn has_polytope(&self) -> bool {
        !self.poly_a.is_empty()
    }

    pub fn has_bound_transform(&self) -> bool {
        self.bound_transform.is_some()
    }

    /// Number of polytope rows `S` contributed to each localized LP.
    pub fn polytope_row_count(&self) -> usize {
        self.poly_a.len()
    }

    /// Euclidean diameter of the bounding box.
    pub fn diameter(&self) -> f64 {
        self.lb
            .iter()
            .zip(&self.ub)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lb
            .iter()
            .zip(&self.ub)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn contains(&self, theta: &[f64], tol: f64) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lb.iter().zip(&self.ub))
                .all(|(t, (l, u))| *t >= l - tol && *t <= u + tol)
            && self.max_polytope_violation(theta) <= tol
    }

    /// Largest value of `a_i' theta - b_i` over the polytope rows (−inf without rows).
    pub fn max_polytope_violation(&self, theta: &[f64]) -> f64 {
        self.poly_a
            .iter()
            .zip(&self.poly_b)
            .map(|(a, b)| dot(a, theta) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamp_to_box(&self, theta: &mut [f64]) {
        for ((t, l), u) in theta.iter_mut().zip(&self.lb).zip(&self.ub) {
            *t = t.clamp(*l, *u);
        }
    }

    /// Applies the bound-transform hook, or returns the input box unchanged.
    pub fn transform_bounds(&self, lb: &[f64], ub: &[f64]) -> (Vec<f64>, Vec<f64>) {
        match &self.bound_transform {
            Some(hook) => hook(lb, ub),
            None => (lb.to_vec(), ub.to_vec()),
        }
    }

    /// Polytope rows of the localized LP, `A lambda <= sqrt(n) (b - A theta)`,
    /// unless a model-specific hook overrides them.
    pub fn lambda_polytope_rows(&self, theta: &[f64], sqrt_n: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        if let Some(hook) = &self.lambda_rows {
            return hook(theta, sqrt_n);
        }
        let rhs = self
            .poly_a
            .iter()
            .zip(&self.poly_b)
            .map(|(a, b)| sqrt_n * (b - dot(a, theta)))
            .collect();
        (self.poly_a.clone(), rhs)
    }

    /// Constraint rows describing the whole space (box rows for free coordinates
    /// and polytope rows), with fixed coordinates substituted out.
    fn interior_system(&self) -> (LinearSystem, Vec<usize>) {
        let free: Vec<usize> = (0..self.dim())
            .filter(|&k| self.lb[k] < self.ub[k])
            .collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (pos, &k) in free.iter().enumerate() {
            let mut up = vec![0.0; free.len()];
            up[pos] = 1.0;
            a.push(up);
            b.push(self.ub[k]);
            let mut lo = vec![0.0; free.len()];
            lo[pos] = -1.0;
            a.push(lo);
            b.push(-self.lb[k]);
        }
        for (row, rhs) in self.poly_a.iter().zip(&self.poly_b) {
            let mut fixed = 0.0;
            for k in 0..self.dim() {
                if self.lb[k] >= self.ub[k] {
                    fixed += row[k] * self.lb[k];
                }
            }
            a.push(free.iter().map(|&k| row[k]).collect());
            b.push(rhs - fixed);
        }
        (LinearSystem::new(a, b), free)
    }

    fn has_interior(&self) -> Result<bool> {
        let (sys, _) = self.interior_system();
        let sol = lp::phase_one(&sys)?;
        Ok(sol.max_violation < -1e-9)
    }

    /// A strictly interior point (deepest in the normalized-row sense).
    pub fn interior_point(&self) -> Result<Vec<f64>> {
        let (sys, free) = self.interior_system();
        let sol = lp::phase_one(&sys)?;
        if sol.max_violation >= -1e-9 {
            return Err(Error::EmptyInterior);
        }
        let mut theta = self.lb.clone();
        for (pos, &k) in free.iter().enumerate() {
            theta[k] = sol.point[pos];
        }
        Ok(theta)
    }

    /// `max_{theta in Theta} q' theta`.
    pub fn support(&self, q: &[f64]) -> Result<f64> {
        let box_max: f64 = q
            .iter()
            .zip(self.lb.iter().zip(&self.ub))
            .map(|(qk, (l, u))| (qk * l).max(qk * u))
            .sum();
        if !self.has_polytope() {
            return Ok(box_max);
        }
        // Bisection on the level v: Theta ∩ {q'theta >= v} nonempty.
        let mut lo = dot(q, &self.interior_point()?);
        let mut hi = box_max;
        let (base, _) = self.full_rows();
        for _ in 0..60 {
            if hi - lo <= 1e-10 * (1.0 + hi.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let mut sys = base.clone();
            sys.push_row(q.iter().map(|v| -v).collect(), -mid);
            if lp::is_feasible(&sys)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(lo)
    }

    /// Box and polytope rows over all coordinates.
    pub(crate) fn full_rows(&self) -> (LinearSystem, usize) {
        let d = self.dim();
        let mut sys = LinearSystem::new(Vec::new(), Vec::new());
        for k in 0..d {
            let mut up = vec![0.0; d];
            up[k] = 1.0;
            sys.push_row(up, self.ub[k]);
            let mut lo = vec![0.0; d];
            lo[k] = -1.0;
            sys.push_row(lo, -self.lb[k]);
        }
        for (a, b) in self.poly_a.iter().zip(&self.poly_b) {
            sys.push_row(a.clone(), *b);
        }
        (sys, d)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntervalType {
    OneSided,
    TwoSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Calibrated,
    AndrewsSoares,
}

/// GMS tuning sequence `kappa(n)`.
#[derive(Clone)]
pub enum Kappa {
    /// `sqrt(ln n)`.
    SqrtLogN,
    Constant(f64),
    Custom(Arc<dyn Fn(usize) -> f64 + Send + Sync>),
}

impl Kappa {
    pub fn value(&self, n: usize) -> f64 {
        match self {
            Kappa::SqrtLogN => (n as f64).ln().sqrt(),
            Kappa::Constant(k) => *k,
            Kappa::Custom(f) => f(n),
        }
    }
}

impl fmt::Debug for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::SqrtLogN => write!(f, "SqrtLogN"),
            Kappa::Constant(k) => write!(f, "Constant({k})"),
            Kappa::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// GMS function `phi`. A return value of `-inf` deletes the moment.
#[derive(Clone)]
pub enum Gms {
    /// `0` if `x >= -1`, `-inf` otherwise.
    HardThreshold,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Gms {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Gms::HardThreshold => {
                if x >= -1.0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            Gms::Custom(f) => f(x),
        }
    }
}

impl fmt::Debug for Gms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gms::HardThreshold => write!(f, "HardThreshold"),
            Gms::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Run-wide algorithm options. Immutable once the problem is validated.
#[derive(Clone, Debug)]
pub struct Options {
    pub alpha: f64,
    pub interval_type: IntervalType,
    pub method: Method,
    /// Bootstrap repetitions `B`.
    pub b: usize,
    pub kappa: Kappa,
    pub gms: Gms,
    /// Radius of the `lambda` box.
    pub rho: f64,
    pub eam_maxit: usize,
    pub eam_minit: usize,
    /// Initial design has `mbase * d` points.
    pub mbase: usize,
    pub h_rate: f64,
    pub h_rate2: f64,
    pub eam_obj_tol: f64,
    pub eam_tol: f64,
    /// `f64::INFINITY` turns the max-violation criterion off.
    pub eam_maxviol_tol: f64,
    pub ei_points: usize,
    pub f_keep_threshold: f64,
    /// Tolerance of the critical-value root search.
    pub critval_tol: f64,
    pub seed: u64,
    /// Worker threads; `0` lets rayon decide.
    pub parallel: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self::baseline()
    }
}

impl Options {
    /// Baseline profile.
    pub fn baseline() -> Self {
        Self {
            alpha: 0.05,
            interval_type: IntervalType::TwoSided,
            method: Method::Calibrated,
            b: 1001,
            kappa: Kappa::SqrtLogN,
            gms: Gms::HardThreshold,
            rho: 1e4,
            eam_maxit: 20,
            eam_minit: 4,
            mbase: 10,
            h_rate: 1.8,
            h_rate2: 1.25,
            eam_obj_tol: 0.005,
            eam_tol: 1e-4,
            eam_maxviol_tol: f64::INFINITY,
            ei_points: 10,
            f_keep_threshold: 1e-4,
            critval_tol: 1e-4,
            seed: 0,
            parallel: 1,
        }
    }

    /// Stringent profile for hard problems such as the correlated-error game.
    pub fn stringent() -> Self {
        Self {
            eam_maxit: 50,
            h_rate: 1.25,
            h_rate2: 1.15,
            eam_obj_tol: 1e-4,
            ei_points: 20,
            ..Self::baseline()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.alpha) || self.alpha.is_nan() {
            return Err(Error::AlphaOutOfRange(self.alpha));
        }
        let bad = |field: &'static str, reason: &str| {
            Err(Error::InvalidOption {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.h_rate2 > 1.0 && self.h_rate2 <= self.h_rate && self.h_rate <= 2.0) {
            return bad("h_rate", "need 1 < h_rate2 <= h_rate <= 2");
        }
        if self.b < 1 {
            return bad("b", "need at least one bootstrap repetition");
        }
        if self.eam_minit > self.eam_maxit {
            return bad("eam_minit", "must not exceed eam_maxit");
        }
        if self.mbase < 1 {
            return bad("mbase", "must be positive");
        }
        for (field, v) in [
            ("eam_obj_tol", self.eam_obj_tol),
            ("eam_tol", self.eam_tol),
            ("eam_maxviol_tol", self.eam_maxviol_tol),
            ("critval_tol", self.critval_tol),
        ] {
            if v.is_nan() || v <= 0.0 {
                return bad(field, "tolerances must be positive");
            }
        }
        if self.rho.is_nan() || self.rho <= 0.0 {
            return bad("rho", "must be positive");
        }
        if !(0.0..0.5).contains(&self.f_keep_threshold) {
            return bad("f_keep_threshold", "must lie in [0, 0.5)");
        }
        if let Kappa::Constant(k) = self.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return bad("kappa", "must be positive");
            }
        }
        Ok(())
    }
}

/// Which search direction `p` is, after normalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Direction {
    /// `p = sign * e_index`.
    Basis {
        index: usize,
        sign: f64,
    },
    General,
}

/// A validated problem ready for [`crate::eam::run_interval`].
#[derive(Clone)]
pub struct Problem {
    pub data: Dataset,
    pub model: Arc<dyn MomentModel>,
    pub theta_0: Vec<f64>,
    /// Unit-length projection direction.
    pub p: Vec<f64>,
    pub direction: Direction,
    pub space: ParameterSpace,
    pub options: Options,
    /// User-supplied feasible points; when non-empty the feasible search is skipped.
    pub theta_feas: Vec<Vec<f64>>,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("n", &self.data.nrows())
            .field("d", &self.theta_0.len())
            .field("p", &self.p)
            .field("space", &self.space)
            .field("options", &self.options)
            .finish()
    }
}

impl Problem {
    pub fn dim(&self) -> usize {
        self.theta_0.len()
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn with_feasible_points(mut self, points: Vec<Vec<f64>>) -> Result<Self> {
        for pt in &points {
            if pt.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    what: "theta_feas row",
                    expected: self.dim(),
                    found: pt.len(),
                });
            }
        }
        self.theta_feas = points;
        Ok(self)
    }

    pub fn with_options(mut self, options: Options) -> Result<Self> {
        options.validate()?;
        self.options = options;
        Ok(self)
    }
}

/// Checks dimensions and ranges and returns a normalized [`Problem`].
pub fn validate_inputs(
    data: Dataset,
    model: Arc<dyn MomentModel>,
    theta_0: Vec<f64>,
    p: Vec<f64>,
    space: ParameterSpace,
    options: Options,
) -> Result<Problem> {
    options.validate()?;
    let d = model.dim();
    for (what, len) in [
        ("theta_0", theta_0.len()),
        ("p", p.len()),
        ("bounds", space.dim()),
    ] {
        if len != d {
            return Err(Error::DimensionMismatch {
                what,
                expected: d,
                found: len,
            });
        }
    }
    if data.nrows() < 2 {
        return Err(Error::TooFewObservations(data.nrows()));
    }
    let norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroDirection);
    }
    let p: Vec<f64> = p.iter().map(|v| v / norm).collect();
    let nonzero: Vec<usize> = (0..d).filter(|&k| p[k] != 0.0).collect();
    let direction = if nonzero.len() == 1 {
        Direction::Basis {
            index: nonzero[0],
            sign: p[nonzero[0]].signum(),
        }
    } else {
        Direction::General
    };
    if direction == Direction::General && !(space.has_polytope() && space.has_bound_transform()) {
        return Err(Error::UnsupportedDirection);
    }
    if !space.lb.iter().zip(&space.ub).any(|(l, u)| l < u) {
        return Err(Error::EmptyInterior);
    }
    if !space.contains(&theta_0, SPACE_TOL) {
        return Err(Error::ThetaOutsideSpace);
    }
    Ok(Problem {
        data,
        model,
        theta_0,
        p,
        direction,
        space,
        options,
        theta_feas: Vec::new(),
    })
}
