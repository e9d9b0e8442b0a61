//! Penalized model selection over the number of components.
//!
//! The penalty shape is `λ₀ (μ_n D_K + L log K + K log 2)` with model
//! dimension `D_K = K·B` and
//!
//! ```text
//! μ_n = 2 (√log(2τ_n) + √π)² + 1 + log n,   τ_n = log n.
//! ```
//!
//! In practice the constant is calibrated by slope heuristics: for complex
//! enough models the minimized contrast decreases linearly in `D_K` with
//! slope `−λ_min`, and the selected penalty is `2 λ_min D_K`.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::em::{robust_em, EmConfig, FitResult};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("slope heuristics needs at least {needed} points with distinct dimensions, got {found}; add more ladder entries")]
    InsufficientData { found: usize, needed: usize },
    #[error("degenerate regression: every window has a single distinct dimension")]
    DegenerateRegression,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty sweep")]
    EmptySweep,
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SelectionError>;

/// Relative slope change below which two consecutive windows count as a plateau.
pub const PLATEAU_TOLERANCE: f64 = 0.05;
pub const MIN_SLOPE_POINTS: usize = 4;
const MIN_WINDOW: usize = 3;

/// `μ_n` with `τ_n = log n`. Requires `n ≥ 2`.
pub fn mu_n(n: f64) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(SelectionError::Domain(format!("μ_n needs n ≥ 2, got {n}")));
    }
    let tau = n.ln();
    let root = (2.0 * tau).ln().sqrt() + std::f64::consts::PI.sqrt();
    Ok(2.0 * root * root + 1.0 + n.ln())
}

/// `λ₀ (μ_n K B + L log K + K log 2)`.
pub fn theoretical_penalty(k: usize, l: usize, n: f64, b: usize, lambda0: f64) -> Result<f64> {
    if k == 0 || l == 0 {
        return Err(SelectionError::Domain(format!(
            "need K ≥ 1 and L ≥ 1, got K={k}, L={l}"
        )));
    }
    let (kf, lf) = (k as f64, l as f64);
    Ok(lambda0 * (mu_n(n)? * kf * b as f64 + lf * kf.ln() + kf * std::f64::consts::LN_2))
}

/// Penalty when the vocabulary size varies too:
/// `λ₀ (μ_n K (B+1) + L log K + K B log 2)` over `{(1,1)} ∪ {K ≥ 1, B ≥ 2}`.
pub fn varying_b_penalty(k: usize, b: usize, l: usize, n: f64, lambda0: f64) -> Result<f64> {
    let in_collection = (k == 1 && b == 1) || (k >= 1 && b >= 2);
    if !in_collection || l == 0 {
        return Err(SelectionError::Domain(format!(
            "(K, B) = ({k}, {b}) is not in the model collection"
        )));
    }
    let (kf, bf, lf) = (k as f64, b as f64, l as f64);
    Ok(lambda0 * (mu_n(n)? * kf * (bf + 1.0) + lf * kf.ln() + kf * bf * std::f64::consts::LN_2))
}

/// Contrast plus `D_K` (AIC) and plus `D_K log(n) / 2` (BIC), both on the
/// total-contrast scale.
pub fn aic_bic(min_contrast: f64, d_k: usize, n: f64) -> (f64, f64) {
    let d = d_k as f64;
    (min_contrast + d, min_contrast + d * n.ln() / 2.0)
}

/// OLS fit over the `points` largest-dimension models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFit {
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    /// `Σ (D − D̄)²` over the window, for standard errors.
    pub dimension_ss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeDiagnostics {
    /// One entry per trailing window, largest window first.
    pub windows: Vec<WindowFit>,
    pub chosen_window: usize,
    /// False when no two consecutive windows agreed within the tolerance; the
    /// window with the smallest relative slope change was used instead.
    pub plateau_found: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub lambda_min: f64,
    pub diagnostics: SlopeDiagnostics,
}

fn ols(points: &[(f64, f64)]) -> Option<WindowFit> {
    let m = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    Some(WindowFit {
        points: points.len(),
        slope,
        intercept: mean_y - slope * mean_x,
        dimension_ss: sxx,
    })
}

/// Estimates `λ_min` from `(dimension, min_contrast)` pairs.
///
/// Every trailing window of the `w` largest-dimension points
/// (`w = 3..=N`) gets an OLS slope. The chosen window is the largest `w`
/// whose slope is within [`PLATEAU_TOLERANCE`] (relative) of the slope for
/// `w − 1`; `λ_min` is the absolute value of that slope. Without such a
/// plateau the most stable consecutive pair is used.
pub fn slope_heuristics(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < MIN_SLOPE_POINTS {
        return Err(SelectionError::InsufficientData {
            found: points.len(),
            needed: MIN_SLOPE_POINTS,
        });
    }
    if points.iter().any(|(d, c)| !(d.is_finite() && c.is_finite())) {
        return Err(SelectionError::Invalid("non-finite sweep point".into()));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    if sorted.first().map(|p| p.0) == sorted.last().map(|p| p.0) {
        return Err(SelectionError::DegenerateRegression);
    }

    let n = sorted.len();
    // fits[w] for trailing window of size w
    let mut fits: Vec<Option<WindowFit>> = vec![None; n + 1];
    for w in MIN_WINDOW..=n {
        fits[w] = ols(&sorted[n - w..]);
    }
    let windows: Vec<WindowFit> = (MIN_WINDOW..=n).rev().filter_map(|w| fits[w].clone()).collect();
    if windows.is_empty() {
        return Err(SelectionError::DegenerateRegression);
    }

    // relative slope change between window w and window w - 1
    let changes: Vec<(usize, f64)> = (MIN_WINDOW + 1..=n)
        .rev()
        .filter_map(|w| match (&fits[w], &fits[w - 1]) {
            (Some(big), Some(small)) => Some((w, (big.slope - small.slope).abs() / small.slope.abs())),
            _ => None,
        })
        .collect();
    let plateau = changes
        .iter()
        .find(|(_, rel)| *rel < PLATEAU_TOLERANCE)
        .map(|&(w, _)| w);
    let plateau_found = plateau.is_some();
    let chosen = plateau
        .or_else(|| {
            // most stable pair; `changes` runs from large to small windows so
            // min_by keeps the larger window on ties
            changes
                .iter()
                .filter(|(_, rel)| rel.is_finite())
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|&(w, _)| w)
        })
        .unwrap_or_else(|| windows.last().expect("non-empty").points);
    let lambda_min = fits[chosen].as_ref().expect("chosen window has a fit").slope.abs();
    Ok(SlopeFit {
        lambda_min,
        diagnostics: SlopeDiagnostics {
            windows,
            chosen_window: chosen,
            plateau_found,
        },
    })
}

/// One realized model size in a sweep.
#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub k: usize,
    pub d_k: usize,
    /// `−log-likelihood` of the best fit with `k` components.
    pub min_contrast: f64,
    /// Ladder entry that produced the record, when known.
    pub k_max: Option<usize>,
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub k_max: usize,
    pub error: String,
}

/// Records sorted by `K`, one per realized component count.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub num_words: usize,
    pub records: Vec<SweepRecord>,
    pub failures: Vec<SweepFailure>,
}

impl SweepResult {
    /// Builds a sweep from `(K, min_contrast)` pairs; for duplicate `K` the
    /// smaller contrast wins.
    pub fn from_points(num_words: usize, points: &[(usize, f64)]) -> Result<Self> {
        let records = points
            .iter()
            .map(|&(k, c)| SweepRecord {
                k,
                d_k: k * num_words,
                min_contrast: c,
                k_max: None,
                fit: None,
            })
            .collect();
        Self::from_records(num_words, records, Vec::new())
    }

    fn from_records(num_words: usize, mut records: Vec<SweepRecord>, failures: Vec<SweepFailure>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| r.k == 0 || !r.min_contrast.is_finite()) {
            return Err(SelectionError::Invalid(format!(
                "record K = {} has contrast {}",
                r.k, r.min_contrast
            )));
        }
        // stable: among equal K and equal contrast the earlier record stays first
        records.sort_by(|a, b| a.k.cmp(&b.k).then(a.min_contrast.total_cmp(&b.min_contrast)));
        records.dedup_by(|later, earlier| later.k == earlier.k);
        Ok(Self {
            num_words,
            records,
            failures,
        })
    }

    pub fn record(&self, k: usize) -> Option<&SweepRecord> {
        self.records.iter().find(|r| r.k == k)
    }

    /// `(D_K, min_contrast)` pairs for slope heuristics.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.records.iter().map(|r| (r.d_k as f64, r.min_contrast)).collect()
    }
}

/// Runs `robust_em` once per ladder entry. Records are keyed by the
/// realized component count; a failing entry is logged and skipped.
pub fn run_sweep(corpus: &Corpus, ladder: &[usize], config: &EmConfig) -> SweepResult {
    let outcomes: Vec<(usize, std::result::Result<FitResult, String>)> = ladder
        .par_iter()
        .map(|&k_max| (k_max, robust_em(corpus, k_max, config).map_err(|e| e.to_string())))
        .collect();
    let b = corpus.vocab_size();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (k_max, outcome) in outcomes {
        match outcome {
            Ok(fit) => records.push(SweepRecord {
                k: fit.k_final,
                d_k: fit.k_final * b,
                min_contrast: -fit.loglik(),
                k_max: Some(k_max),
                fit: Some(fit),
            }),
            Err(error) => {
                log::warn!("fit with k_max = {k_max} failed: {error}");
                failures.push(SweepFailure { k_max, error });
            }
        }
    }
    SweepResult::from_records(b, records, failures).expect("robust_em yields finite contrasts")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyMode {
    /// `2 λ_min D_K` with `λ_min` from slope heuristics.
    Slope,
    /// Full penalty shape; `λ₀` given, or `2 λ_min / μ_n` when calibrated.
    Theoretical,
    Aic,
    Bic,
}

impl std::str::FromStr for PenaltyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "slope" => Ok(Self::Slope),
            "theoretical" => Ok(Self::Theoretical),
            "aic" => Ok(Self::Aic),
            "bic" => Ok(Self::Bic),
            other => Err(format!("unknown mode {other:?} (slope, theoretical, aic, bic)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub k: usize,
    pub d_k: usize,
    pub min_contrast: f64,
    pub penalty: f64,
    pub criterion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub mode: Option<PenaltyMode>,
    pub lambda_min: Option<f64>,
    /// Constant in front of the penalty shape (`2 λ_min`, `λ₀`, ...).
    pub penalty_multiplier: Option<f64>,
    pub rows: Vec<CriterionRow>,
    pub k_hat: usize,
    pub slope: Option<SlopeDiagnostics>,
}

/// `crit(K) = min_contrast(K) + penalty(K)`, minimized with ties to the smaller K.
pub fn select_model(sweep: &SweepResult, penalty: &[f64]) -> Result<SelectionReport> {
    if sweep.records.is_empty() {
        return Err(SelectionError::EmptySweep);
    }
    if penalty.len() != sweep.records.len() {
        return Err(SelectionError::Invalid(format!(
            "{} penalties for {} sweep records",
            penalty.len(),
            sweep.records.len()
        )));
    }
    let rows: Vec<CriterionRow> = sweep
        .records
        .iter()
        .zip(penalty)
        .map(|(r, &p)| CriterionRow {
            k: r.k,
            d_k: r.d_k,
            min_contrast: r.min_contrast,
            penalty: p,
            criterion: r.min_contrast + p,
        })
        .collect();
    let mut best = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.criterion < rows[best].criterion {
            best = i;
        }
    }
    Ok(SelectionReport {
        mode: None,
        lambda_min: None,
        penalty_multiplier: None,
        k_hat: rows[best].k,
        rows,
        slope: None,
    })
}

/// Slope-calibrated selection with `pen_opt(K) = 2 λ_min D_K`.
pub fn select_slope(sweep: &SweepResult) -> Result<SelectionReport> {
    let fit = slope_heuristics(&sweep.points())?;
    let multiplier = 2.0 * fit.lambda_min;
    let penalty: Vec<f64> = sweep.records.iter().map(|r| multiplier * r.d_k as f64).collect();
    let mut report = select_model(sweep, &penalty)?;
    report.mode = Some(PenaltyMode::Slope);
    report.lambda_min = Some(fit.lambda_min);
    report.penalty_multiplier = Some(multiplier);
    report.slope = Some(fit.diagnostics);
    Ok(report)
}

/// Selection with the full penalty shape. Without an explicit `lambda0` the
/// constant is `2 λ_min / μ_n`, which matches `2 λ_min D_K` on the `D_K` term.
pub fn select_theoretical(
    sweep: &SweepResult,
    num_docs: usize,
    total_tokens: f64,
    lambda0: Option<f64>,
) -> Result<SelectionReport> {
    let (lambda0, slope) = match lambda0 {
        Some(v) => (v, None),
        None => {
            let fit = slope_heuristics(&sweep.points())?;
            (2.0 * fit.lambda_min / mu_n(total_tokens)?, Some(fit))
        }
    };
    let penalty = sweep
        .records
        .iter()
        .map(|r| theoretical_penalty(r.k, num_docs, total_tokens, sweep.num_words, lambda0))
        .collect::<Result<Vec<_>>>()?;
    let mut report = select_model(sweep, &penalty)?;
    report.mode = Some(PenaltyMode::Theoretical);
    report.penalty_multiplier = Some(lambda0);
    report.lambda_min = slope.as_ref().map(|f| f.lambda_min);
    report.slope = slope.map(|f| f.diagnostics);
    Ok(report)
}

pub fn select_information(sweep: &SweepResult, total_tokens: f64, mode: PenaltyMode) -> Result<SelectionReport> {
    if !(total_tokens >= 2.0) {
        return Err(SelectionError::Domain(format!(
            "AIC/BIC need n ≥ 2, got {total_tokens}"
        )));
    }
    let penalty: Vec<f64> = sweep
        .records
        .iter()
        .map(|r| {
            let (aic, bic) = aic_bic(r.min_contrast, r.d_k, total_tokens);
            match mode {
                PenaltyMode::Bic => bic - r.min_contrast,
                _ => aic - r.min_contrast,
            }
        })
        .collect();
    let mut report = select_model(sweep, &penalty)?;
    report.mode = Some(mode);
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D_K")]
    d_k: usize,
    min_contrast: f64,
}

/// Writes `K,D_K,min_contrast` rows.
pub fn write_sweep_csv(sweep: &SweepResult, out: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for r in &sweep.records {
        wtr.serialize(CsvRow {
            k: r.k,
            d_k: r.d_k,
            min_contrast: r.min_contrast,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a `K,D_K,min_contrast` table; `B` is recovered as `D_K / K` and
/// must be the same on every row.
pub fn read_sweep_csv(input: impl Read) -> Result<SweepResult> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut points = Vec::new();
    let mut num_words = None;
    for row in rdr.deserialize::<CsvRow>() {
        let row = row?;
        if row.k == 0 || row.d_k % row.k != 0 {
            return Err(SelectionError::Invalid(format!(
                "D_K = {} is not a multiple of K = {}",
                row.d_k, row.k
            )));
        }
        let b = row.d_k / row.k;
        if *num_words.get_or_insert(b) != b {
            return Err(SelectionError::Invalid("rows disagree on B = D_K / K".into()));
        }
        points.push((row.k, row.min_contrast));
    }
    let b = num_words.ok_or(SelectionError::EmptySweep)?;
    SweepResult::from_points(b, &points)
}
