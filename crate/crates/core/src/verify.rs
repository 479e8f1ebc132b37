//! Seeded random-point verification of "= 0" identities.
//!
//! Points are drawn from ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`).
//! Each coordinate uses one 64-bit output `u`: `lo + (u >> 11) * 2^-53 * (hi - lo)`,
//! so a given `(box, seed)` yields the same point sequence on every platform.
//! A check that hits a singular point (an [`EvalError`]) rejects that point and
//! draws the next one, up to `4n` attempts.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{EvalError, ScalarExpr, Tape};

pub const DEFAULT_POINTS: usize = 64;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_TOL_ABS: f64 = 1e-9;
pub const DEFAULT_TOL_REL: f64 = 1e-7;

/// Rejections above this fraction of attempts make a check inconclusive.
pub const MAX_REJECTION_RATE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    intervals: Vec<(f64, f64)>,
}

impl SampleBox {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidSampling("box has no coordinates".into()));
        }
        for (i, &(lo, hi)) in intervals.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidSampling(format!(
                    "interval {i} is [{lo}, {hi}]; need finite lo < hi"
                )));
            }
        }
        Ok(Self { intervals })
    }

    /// The same interval on every coordinate.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    /// Infinite deterministic stream of points.
    pub fn stream(&self, seed: u64) -> PointStream<'_> {
        PointStream {
            region: self,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

pub struct PointStream<'a> {
    region: &'a SampleBox,
    rng: ChaCha8Rng,
}

impl Iterator for PointStream<'_> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let point = self
            .region
            .intervals
            .iter()
            .map(|&(lo, hi)| {
                let unit = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                lo + unit * (hi - lo)
            })
            .collect();
        Some(point)
    }
}

pub fn sample_points(region: &SampleBox, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidSampling("n must be at least 1".into()));
    }
    Ok(region.stream(seed).take(n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub points: usize,
    pub seed: u64,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_POINTS,
            seed: DEFAULT_SEED,
            tol_abs: DEFAULT_TOL_ABS,
            tol_rel: DEFAULT_TOL_REL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        }
    }

    /// Worst of several statuses: any FAIL wins, then INCONCLUSIVE.
    pub fn combine(statuses: impl IntoIterator<Item = Status>) -> Status {
        statuses.into_iter().max().unwrap_or(Status::Pass)
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of one sampled identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub status: Status,
    pub max_abs_residual: f64,
    pub magnitude_scale: f64,
    pub worst_point: Vec<f64>,
    pub points_used: usize,
    pub points_rejected: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Merge several checks into one under `name`: the residual and scale
    /// are maxima, the status is the worst status.
    pub fn merge(name: impl Into<String>, parts: &[CheckResult]) -> CheckResult {
        let mut out = CheckResult {
            name: name.into(),
            status: Status::combine(parts.iter().map(|c| c.status)),
            max_abs_residual: 0.0,
            magnitude_scale: 0.0,
            worst_point: Vec::new(),
            points_used: parts.iter().map(|c| c.points_used).min().unwrap_or(0),
            points_rejected: parts.iter().map(|c| c.points_rejected).max().unwrap_or(0),
            note: None,
        };
        for part in parts {
            if part.max_abs_residual > out.max_abs_residual || out.worst_point.is_empty() {
                out.max_abs_residual = out.max_abs_residual.max(part.max_abs_residual);
                out.worst_point = part.worst_point.clone();
            }
            out.magnitude_scale = out.magnitude_scale.max(part.magnitude_scale);
        }
        out
    }
}

/// Residual and term scale observed at a single point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointResidual {
    pub residual: f64,
    pub scale: f64,
}

/// Which comparison a sampled check applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// PASS iff `max residual <= tol_abs + tol_rel * magnitude_scale`.
    Tolerance { tol_abs: f64, tol_rel: f64 },
    /// PASS iff `max residual <= bound` (no relative slack).
    AbsoluteBound(f64),
}

/// A region plus sampling parameters; every check in a run goes through one.
#[derive(Debug, Clone, PartialEq)]
pub struct Sampler {
    pub region: SampleBox,
    pub config: SamplingConfig,
}

impl Sampler {
    pub fn new(region: SampleBox, config: SamplingConfig) -> Self {
        Self { region, config }
    }

    pub fn with_defaults(region: SampleBox) -> Self {
        Self::new(region, SamplingConfig::default())
    }

    /// The first `points` draws of the seeded stream.
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.region
            .stream(self.config.seed)
            .take(self.config.points.max(1))
            .collect()
    }

    /// Evaluate `at` over the point stream with rejection and reduce by max.
    pub fn run<F>(&self, name: &str, criterion: Criterion, mut at: F) -> CheckResult
    where
        F: FnMut(&[f64]) -> Result<PointResidual, EvalError>,
    {
        let n = self.config.points.max(1);
        let max_attempts = 4 * n;
        let mut used = 0;
        let mut attempts = 0;
        let mut max_res = 0.0f64;
        let mut scale = 0.0f64;
        let mut worst = Vec::new();
        for point in self.region.stream(self.config.seed) {
            if used == n || attempts == max_attempts {
                break;
            }
            attempts += 1;
            let Ok(r) = at(&point) else { continue };
            if !(r.residual.is_finite() && r.scale.is_finite()) {
                continue;
            }
            used += 1;
            if r.residual > max_res || worst.is_empty() {
                max_res = max_res.max(r.residual);
                worst = point;
            }
            scale = scale.max(r.scale);
        }
        let rejected = attempts - used;
        let status = if used == 0 || rejected as f64 > MAX_REJECTION_RATE * attempts as f64 {
            Status::Inconclusive
        } else {
            let bound = match criterion {
                Criterion::Tolerance { tol_abs, tol_rel } => tol_abs + tol_rel * scale,
                Criterion::AbsoluteBound(b) => b,
            };
            if max_res <= bound {
                Status::Pass
            } else {
                Status::Fail
            }
        };
        CheckResult {
            name: name.to_string(),
            status,
            max_abs_residual: max_res,
            magnitude_scale: scale,
            worst_point: worst,
            points_used: used,
            points_rejected: rejected,
            note: None,
        }
    }

    fn default_criterion(&self) -> Criterion {
        Criterion::Tolerance {
            tol_abs: self.config.tol_abs,
            tol_rel: self.config.tol_rel,
        }
    }

    /// Check that every coefficient of `object` vanishes at the samples.
    ///
    /// The magnitude scale is the largest absolute value of any additive term
    /// of any coefficient, so an identity that holds by cancellation is judged
    /// against the size of what cancelled.
    pub fn check_zero(&self, name: &str, object: &impl Sampled) -> CheckResult {
        let terms = TermTape::new(&object.sampled_exprs());
        self.run(name, self.default_criterion(), |p| terms.residual_at(p))
    }

    /// Like [`Sampler::check_zero`] but PASS requires `max residual <= bound`.
    pub fn check_zero_within(&self, name: &str, object: &impl Sampled, bound: f64) -> CheckResult {
        let terms = TermTape::new(&object.sampled_exprs());
        self.run(name, Criterion::AbsoluteBound(bound), |p| terms.residual_at(p))
    }

    /// PASS iff `|expr| >= threshold` at every sample. The reported residual
    /// is the shortfall `max(0, threshold - min |expr|)`.
    pub fn check_nonvanishing(&self, name: &str, expr: &ScalarExpr, threshold: f64) -> CheckResult {
        let mut min_abs = f64::INFINITY;
        let mut result = self.run(name, Criterion::AbsoluteBound(0.0), |p| {
            let v = expr.eval(p)?.abs();
            min_abs = min_abs.min(v);
            Ok(PointResidual {
                residual: (threshold - v).max(0.0),
                scale: v,
            })
        });
        result.note = Some(format!("min |coefficient| = {min_abs:e}"));
        result
    }

    /// Check a sampled identity with the configured tolerances.
    pub fn check_with<F>(&self, name: &str, at: F) -> CheckResult
    where
        F: FnMut(&[f64]) -> Result<PointResidual, EvalError>,
    {
        self.run(name, self.default_criterion(), at)
    }
}

/// The additive terms of every coefficient, compiled into one tape.
struct TermTape {
    tape: Tape,
    /// Per coefficient: (sign, root index) of each term.
    coeffs: Vec<Vec<(f64, usize)>>,
}

impl TermTape {
    fn new(exprs: &[ScalarExpr]) -> Self {
        let mut roots = Vec::new();
        let coeffs = exprs
            .iter()
            .map(|e| {
                e.additive_terms()
                    .into_iter()
                    .map(|(sign, t)| {
                        roots.push(t);
                        (sign, roots.len() - 1)
                    })
                    .collect()
            })
            .collect();
        TermTape {
            tape: Tape::new(&roots),
            coeffs,
        }
    }

    fn residual_at(&self, p: &[f64]) -> Result<PointResidual, EvalError> {
        let values = self.tape.eval(p)?;
        let mut residual = 0.0f64;
        let mut scale = 0.0f64;
        for coeff in &self.coeffs {
            let mut value = 0.0;
            for &(sign, k) in coeff {
                scale = scale.max(values[k].abs());
                value += sign * values[k];
            }
            residual = residual.max(value.abs());
        }
        Ok(PointResidual { residual, scale })
    }
}

/// Anything whose vanishing is decided coefficient-wise.
pub trait Sampled {
    fn sampled_exprs(&self) -> Vec<ScalarExpr>;
}

impl Sampled for ScalarExpr {
    fn sampled_exprs(&self) -> Vec<ScalarExpr> {
        vec![self.clone()]
    }
}

impl<T: Sampled> Sampled for [T] {
    fn sampled_exprs(&self) -> Vec<ScalarExpr> {
        self.iter().flat_map(Sampled::sampled_exprs).collect()
    }
}

impl<T: Sampled> Sampled for Vec<T> {
    fn sampled_exprs(&self) -> Vec<ScalarExpr> {
        self.as_slice().sampled_exprs()
    }
}

impl<T: Sampled + ?Sized> Sampled for &T {
    fn sampled_exprs(&self) -> Vec<ScalarExpr> {
        (**self).sampled_exprs()
    }
}

/// Named group of checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub checks: Vec<CheckResult>,
}

impl Suite {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: CheckResult) {
        self.checks.push(check);
    }

    pub fn status(&self) -> Status {
        Status::combine(self.checks.iter().map(|c| c.status))
    }

    pub fn passed(&self) -> bool {
        self.status() == Status::Pass
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Probe functions for conditions quantified over all `f`: the coordinate
/// functions followed by `extra` seeded random quadratics with coefficients in [-1, 1].
pub fn probe_functions(dim: usize, extra: usize, seed: u64) -> Vec<ScalarExpr> {
    let mut out: Vec<ScalarExpr> = (0..dim).map(ScalarExpr::var).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut coeff = || {
        let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        // three decimals keep the printed form short
        ((2.0 * u - 1.0) * 1000.0).round() / 1000.0
    };
    for _ in 0..extra {
        let mut f = ScalarExpr::constant(coeff());
        for i in 0..dim {
            let xi = ScalarExpr::var(i);
            f = f.add(&ScalarExpr::constant(coeff()).mul(&xi));
            for j in i..dim {
                let xj = ScalarExpr::var(j);
                f = f.add(&ScalarExpr::constant(coeff()).mul(&xi.mul(&xj)));
            }
        }
        out.push(f);
    }
    out
}

/// Default number of random quadratic probes.
pub const DEFAULT_EXTRA_PROBES: usize = 8;
