//! Two-stage repeated-split prediction evaluation.
//!
//! Stage one repeatedly draws random 80/20 splits, fits the chosen model
//! on the 80% part, scores R² on the held-out 20%, and stops once the
//! 95% confidence interval of the mean score is narrower than 5% of its
//! magnitude (checked every 100 runs between the stage bounds). The
//! per-run coefficients are averaged element-wise in run-index order.
//! Stage two freezes that averaged model and re-scores it on freshly
//! drawn 20% evaluation subsets under the same stopping rule; final
//! error metrics come from the residuals pooled across all stage-two
//! runs.
//!
//! Determinism contract: every run's randomness is derived from the
//! master seed and the run index alone, and aggregation happens in
//! run-index order, so results are bit-identical for any worker count.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eeg::feature_matrix;
use crate::error::{CoreError, Result};
use crate::regress::{
    bound_scalar, fit_linear, fit_logistic, LinearModel, LogisticModel, PolynomialBasis,
    CLASS_COUNT, DEFAULT_LAMBDA,
};
use crate::scores::{fit_metrics, FitMetrics};
use crate::session::{BrisqueMap, SubjectSession};

/// z-value of the two-sided 95% normal confidence interval.
const Z_95: f64 = 1.96;
/// Runs added between consecutive stop-criterion checks.
const BATCH: u32 = 100;
/// Maximum redraw attempts for a split whose held-out targets are constant.
const MAX_SPLIT_ATTEMPTS: u32 = 1_000;
/// Smallest dataset run_split accepts (both partitions nonempty with margin).
pub const MIN_DATASET_ROWS: usize = 5;

/// Predictor input columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Scalar no-reference quality value of the displayed image.
    Brisque,
    /// Raw 24-channel post-stimulus window averages.
    Eeg,
    /// Session-normalized 24-channel window averages.
    Eegz,
}

/// Predicted quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Rating,
    Level,
    Brisque,
}

/// Model family fitted on each split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Linear,
    /// Linear fit whose predictions are quantized onto the 1–5 scale.
    BoundLinear,
    Logistic,
}

/// How rows are partitioned into independently evaluated groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    All,
    PerImage,
    PerSubject,
}

/// Everything that parameterizes one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSpec {
    pub source: Source,
    pub target: Target,
    pub method: Method,
    pub degree: u32,
    pub split_fraction: f64,
    pub ci_level: f64,
    /// Stop once the full CI width drops below this fraction of |mean|.
    pub ci_relative_width: f64,
    pub stage1_min: u32,
    pub stage1_max: u32,
    pub stage2_min: u32,
    pub stage2_max: u32,
    pub seed: u64,
    /// L2 strength of the logistic fit.
    pub lambda: f64,
}

impl Default for PredictionSpec {
    fn default() -> Self {
        Self {
            source: Source::Brisque,
            target: Target::Rating,
            method: Method::Linear,
            degree: 1,
            split_fraction: 0.8,
            ci_level: 0.95,
            ci_relative_width: 0.05,
            stage1_min: 500,
            stage1_max: 50_000,
            stage2_min: 50,
            stage2_max: 250,
            seed: 0,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

impl PredictionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction.is_finite() && self.split_fraction > 0.0 && self.split_fraction < 1.0)
        {
            return Err(CoreError::OutOfRange {
                what: "split fraction",
                value: self.split_fraction,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(1..=3).contains(&self.degree) {
            return Err(CoreError::OutOfRange {
                what: "polynomial degree",
                value: f64::from(self.degree),
                lo: 1.0,
                hi: 3.0,
            });
        }
        if self.ci_level != 0.95 {
            return Err(CoreError::InvalidSpec(format!(
                "only the 95% confidence level is supported, got {}",
                self.ci_level
            )));
        }
        if !(self.ci_relative_width.is_finite() && self.ci_relative_width > 0.0) {
            return Err(CoreError::OutOfRange {
                what: "relative CI width",
                value: self.ci_relative_width,
                lo: f64::MIN_POSITIVE,
                hi: f64::INFINITY,
            });
        }
        for (what, min, max) in [
            ("stage-one run bounds", self.stage1_min, self.stage1_max),
            ("stage-two run bounds", self.stage2_min, self.stage2_max),
        ] {
            if min < 2 || min > max {
                return Err(CoreError::InvalidSpec(format!(
                    "{what} must satisfy 2 <= min <= max, got [{min}, {max}]"
                )));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(CoreError::OutOfRange {
                what: "L2 strength",
                value: self.lambda,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if self.method == Method::Logistic && self.target == Target::Brisque {
            return Err(CoreError::InvalidSpec(
                "logistic prediction needs an integer-valued target (rating or level)".into(),
            ));
        }
        if self.source == Source::Brisque && self.target == Target::Brisque {
            return Err(CoreError::InvalidSpec(
                "source and target are both the quality value".into(),
            ));
        }
        Ok(())
    }
}

/// One input/target row with the keys used for grouping.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRow {
    pub subject_id: String,
    pub image_id: String,
    pub inputs: Vec<f64>,
    pub target: f64,
}

/// The rows one evaluation runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    input_dim: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(CoreError::Empty("dataset rows"));
        }
        if inputs.len() != targets.len() {
            return Err(CoreError::LengthMismatch { left: inputs.len(), right: targets.len() });
        }
        let input_dim = inputs[0].len();
        if input_dim == 0 {
            return Err(CoreError::Empty("input columns"));
        }
        for row in &inputs {
            if row.len() != input_dim {
                return Err(CoreError::DimensionMismatch { expected: input_dim, got: row.len() });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::NonFinite("input values"));
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("target values"));
        }
        Ok(Self { inputs, targets, input_dim })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// A model fitted (or assembled from averaged coefficients) under one of
/// the three methods.
#[derive(Debug, Clone)]
pub enum FittedModel {
    Linear(LinearModel),
    BoundLinear(LinearModel),
    Logistic(Box<LogisticModel>),
}

impl FittedModel {
    /// Predict one row; logistic classes and quantized values come back
    /// as their numeric 1–5 values.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            Self::Linear(model) => model.predict(x),
            Self::BoundLinear(model) => Ok(f64::from(bound_scalar(model.predict(x)?)?)),
            Self::Logistic(model) => Ok(f64::from(model.predict(x)?)),
        }
    }

    /// Coefficients as rows: a single row for the linear families, one
    /// row per class (weights then intercept) for logistic.
    pub fn coefficient_rows(&self) -> Vec<Vec<f64>> {
        match self {
            Self::Linear(model) | Self::BoundLinear(model) => vec![model.coefficients().to_vec()],
            Self::Logistic(model) => model
                .class_weights()
                .iter()
                .zip(model.intercepts().iter())
                .map(|(weights, &intercept)| {
                    let mut row = weights.clone();
                    row.push(intercept);
                    row
                })
                .collect(),
        }
    }

    /// Rebuild a model of the same family from averaged coefficient rows.
    pub fn from_coefficient_rows(
        method: Method,
        basis: &PolynomialBasis,
        rows: &[Vec<f64>],
        lambda: f64,
    ) -> Result<Self> {
        match method {
            Method::Linear | Method::BoundLinear => {
                let [row] = rows else {
                    return Err(CoreError::DimensionMismatch { expected: 1, got: rows.len() });
                };
                let model = LinearModel::new(basis.clone(), row.clone())?;
                Ok(if method == Method::Linear {
                    Self::Linear(model)
                } else {
                    Self::BoundLinear(model)
                })
            }
            Method::Logistic => {
                if rows.len() != CLASS_COUNT {
                    return Err(CoreError::DimensionMismatch {
                        expected: CLASS_COUNT,
                        got: rows.len(),
                    });
                }
                let mut weights = Vec::with_capacity(CLASS_COUNT);
                let mut intercepts = Vec::with_capacity(CLASS_COUNT);
                for row in rows {
                    let (intercept, w) = row.split_last().ok_or(CoreError::Empty("coefficients"))?;
                    weights.push(w.to_vec());
                    intercepts.push(*intercept);
                }
                Ok(Self::Logistic(Box::new(LogisticModel::new(
                    basis.clone(),
                    weights,
                    intercepts,
                    lambda,
                )?)))
            }
        }
    }

    fn coefficient_count(&self) -> usize {
        match self {
            Self::Linear(model) | Self::BoundLinear(model) => model.coefficients().len(),
            Self::Logistic(model) => model.coefficient_count(),
        }
    }
}

/// Outcome of one stage of repeated runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageResult {
    pub runs_executed: u32,
    /// Mean per-run held-out R².
    pub estimate: f64,
    pub ci_halfwidth: f64,
    /// False when the run cap was hit with the interval still too wide.
    pub converged: bool,
    /// Splits discarded because their held-out targets were constant.
    pub redraws: u64,
    /// Element-wise mean of per-run coefficients, in run-index order;
    /// one row for linear families, one row per class for logistic.
    pub averaged_coefficients: Vec<Vec<f64>>,
    pub per_run_scores: Vec<f64>,
}

/// (actual, predicted) pairs from scoring held-out rows.
pub type PredictionPairs = Vec<(f64, f64)>;

/// One group's full evaluation: stage results plus pooled final metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub group: String,
    pub grouping: Grouping,
    pub spec: PredictionSpec,
    pub rows: usize,
    /// Length of the expanded polynomial feature vector.
    pub expanded_length: usize,
    /// Total scalar parameters of the fitted model family.
    pub coefficient_count: usize,
    pub stage1: StageResult,
    pub stage2: StageResult,
    /// Metrics over the pooled stage-two held-out predictions.
    pub metrics: FitMetrics,
    /// Stage-two (actual, predicted) pairs, one vector per run, for
    /// scatter export and per-run metric variants.
    #[serde(skip)]
    pub scatter: Vec<PredictionPairs>,
}

/// A group excluded from evaluation, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedGroup {
    pub group: String,
    pub rows: usize,
    pub reason: String,
}

/// All reports of one evaluation call plus the groups it skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationOutcome {
    pub reports: Vec<EvaluationReport>,
    pub skipped: Vec<SkippedGroup>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-run seed: mixes the master seed, a stage tag, the run
/// index, and the redraw attempt so every run draws independent
/// randomness regardless of execution order.
fn run_seed(master: u64, stage: u64, run_index: u64, attempt: u64) -> u64 {
    let mut acc = splitmix64(master);
    for part in [stage, run_index, attempt] {
        acc = splitmix64(acc ^ splitmix64(part));
    }
    acc
}

/// Shuffle row indices and split them into (train, held-out) parts.
fn partition(n: usize, split_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let train_count = ((n as f64 * split_fraction).round() as usize).clamp(1, n - 1);
    let heldout = indices.split_off(train_count);
    (indices, heldout)
}

fn is_constant(values: impl Iterator<Item = f64> + Clone) -> bool {
    let mut iter = values.clone();
    let Some(first) = iter.next() else { return true };
    iter.all(|v| v == first)
}

/// Half-width of the 95% normal-approximation confidence interval of the
/// mean: 1.96·s/√n with s the sample standard deviation.
pub fn ci_halfwidth(scores: &[f64]) -> Result<f64> {
    let n = scores.len();
    if n < 2 {
        return Err(CoreError::TooFewRows { min: 2, got: n });
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let variance =
        scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(Z_95 * variance.sqrt() / (n as f64).sqrt())
}

fn fit_on(
    dataset: &Dataset,
    indices: &[usize],
    spec: &PredictionSpec,
    basis: &PolynomialBasis,
) -> Result<FittedModel> {
    let xs: Vec<Vec<f64>> = indices.iter().map(|&i| dataset.inputs[i].clone()).collect();
    match spec.method {
        Method::Linear | Method::BoundLinear => {
            let ys: Vec<f64> = indices.iter().map(|&i| dataset.targets[i]).collect();
            let model = fit_linear(basis, &xs, &ys)?;
            Ok(if spec.method == Method::Linear {
                FittedModel::Linear(model)
            } else {
                FittedModel::BoundLinear(model)
            })
        }
        Method::Logistic => {
            let ys = indices
                .iter()
                .map(|&i| {
                    let t = dataset.targets[i];
                    if t.fract() == 0.0 && (1.0..=CLASS_COUNT as f64).contains(&t) {
                        Ok(t as u8)
                    } else {
                        Err(CoreError::OutOfRange {
                            what: "logistic target class",
                            value: t,
                            lo: 1.0,
                            hi: CLASS_COUNT as f64,
                        })
                    }
                })
                .collect::<Result<Vec<u8>>>()?;
            Ok(FittedModel::Logistic(Box::new(fit_logistic(basis, &xs, &ys, spec.lambda)?)))
        }
    }
}

/// Score a model on the held-out rows: R² plus the (actual, predicted)
/// pairs. `None` R² cannot occur because callers redraw constant splits.
fn score_heldout(
    dataset: &Dataset,
    model: &FittedModel,
    heldout: &[usize],
) -> Result<(f64, PredictionPairs)> {
    let mut pairs = Vec::with_capacity(heldout.len());
    for &i in heldout {
        let predicted = model.predict(&dataset.inputs[i])?;
        pairs.push((dataset.targets[i], predicted));
    }
    let actual: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let predicted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let metrics = fit_metrics(&actual, &predicted)?;
    let score = metrics
        .r2
        .ok_or(CoreError::UndefinedCorrelation("held-out targets"))?;
    Ok((score, pairs))
}

/// One stage-one run: draw an 80/20 split (redrawing while the held-out
/// targets are constant), fit on the 80%, and score R² on the 20%.
pub fn run_split(
    dataset: &Dataset,
    spec: &PredictionSpec,
    run_index: u64,
) -> Result<(FittedModel, f64, u64)> {
    if dataset.len() < MIN_DATASET_ROWS {
        return Err(CoreError::TooFewRows { min: MIN_DATASET_ROWS, got: dataset.len() });
    }
    let basis = PolynomialBasis::new(dataset.input_dim, spec.degree)?;
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let seed = run_seed(spec.seed, 1, run_index, u64::from(attempt));
        let (train, heldout) = partition(dataset.len(), spec.split_fraction, seed);
        if is_constant(heldout.iter().map(|&i| dataset.targets[i])) {
            continue;
        }
        let model = fit_on(dataset, &train, spec, &basis)?;
        let (score, _) = score_heldout(dataset, &model, &heldout)?;
        return Ok((model, score, u64::from(attempt)));
    }
    Err(CoreError::DegenerateSplits { attempts: MAX_SPLIT_ATTEMPTS })
}

/// One stage-two run: draw a fresh 20% evaluation subset and score the
/// fixed averaged model on it.
fn run_fixed(
    dataset: &Dataset,
    model: &FittedModel,
    spec: &PredictionSpec,
    run_index: u64,
) -> Result<(f64, PredictionPairs, u64)> {
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let seed = run_seed(spec.seed, 2, run_index, u64::from(attempt));
        let (_, heldout) = partition(dataset.len(), spec.split_fraction, seed);
        if is_constant(heldout.iter().map(|&i| dataset.targets[i])) {
            continue;
        }
        let (score, pairs) = score_heldout(dataset, model, &heldout)?;
        return Ok((score, pairs, u64::from(attempt)));
    }
    Err(CoreError::DegenerateSplits { attempts: MAX_SPLIT_ATTEMPTS })
}

fn stop_reached(scores: &[f64], relative_width: f64) -> Result<(f64, f64, bool)> {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let halfwidth = ci_halfwidth(scores)?;
    Ok((mean, halfwidth, 2.0 * halfwidth < relative_width * mean.abs()))
}

/// Repeated split/fit/score runs with CI-based stopping; returns the
/// stage summary and the averaged-coefficient model.
pub fn stage_one(dataset: &Dataset, spec: &PredictionSpec) -> Result<(StageResult, FittedModel)> {
    spec.validate()?;
    if dataset.len() < MIN_DATASET_ROWS {
        return Err(CoreError::TooFewRows { min: MIN_DATASET_ROWS, got: dataset.len() });
    }
    let basis = PolynomialBasis::new(dataset.input_dim, spec.degree)?;

    let mut scores: Vec<f64> = Vec::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut redraws = 0u64;
    let mut executed = 0u32;
    let mut converged = false;

    while executed < spec.stage1_max {
        let batch_end = if executed == 0 {
            spec.stage1_min
        } else {
            (executed + BATCH).min(spec.stage1_max)
        };
        let outcomes: Vec<(FittedModel, f64, u64)> = (executed..batch_end)
            .into_par_iter()
            .map(|run| run_split(dataset, spec, u64::from(run)))
            .collect::<Result<_>>()?;
        for (model, score, attempts) in outcomes {
            scores.push(score);
            redraws += attempts;
            let rows = model.coefficient_rows();
            if sums.is_empty() {
                sums = rows;
            } else {
                for (sum_row, row) in sums.iter_mut().zip(rows.iter()) {
                    for (sum, value) in sum_row.iter_mut().zip(row.iter()) {
                        *sum += value;
                    }
                }
            }
        }
        executed = batch_end;
        let (_, _, stop) = stop_reached(&scores, spec.ci_relative_width)?;
        if stop {
            converged = true;
            break;
        }
    }

    let averaged: Vec<Vec<f64>> = sums
        .iter()
        .map(|row| row.iter().map(|sum| sum / f64::from(executed)).collect())
        .collect();
    let model = FittedModel::from_coefficient_rows(spec.method, &basis, &averaged, spec.lambda)?;
    let (estimate, halfwidth, _) = stop_reached(&scores, spec.ci_relative_width)?;
    Ok((
        StageResult {
            runs_executed: executed,
            estimate,
            ci_halfwidth: halfwidth,
            converged,
            redraws,
            averaged_coefficients: averaged,
            per_run_scores: scores,
        },
        model,
    ))
}

/// Re-score a fixed averaged model on fresh evaluation subsets with the
/// same stopping rule. Metrics are computed over the pooled predictions;
/// the returned pairs keep their per-run grouping.
pub fn stage_two(
    dataset: &Dataset,
    model: &FittedModel,
    spec: &PredictionSpec,
) -> Result<(StageResult, FitMetrics, Vec<PredictionPairs>)> {
    spec.validate()?;
    if dataset.len() < MIN_DATASET_ROWS {
        return Err(CoreError::TooFewRows { min: MIN_DATASET_ROWS, got: dataset.len() });
    }

    let mut scores: Vec<f64> = Vec::new();
    let mut per_run: Vec<PredictionPairs> = Vec::new();
    let mut redraws = 0u64;
    let mut executed = 0u32;
    let mut converged = false;

    while executed < spec.stage2_max {
        let batch_end = if executed == 0 {
            spec.stage2_min
        } else {
            (executed + BATCH).min(spec.stage2_max)
        };
        let outcomes: Vec<(f64, PredictionPairs, u64)> = (executed..batch_end)
            .into_par_iter()
            .map(|run| run_fixed(dataset, model, spec, u64::from(run)))
            .collect::<Result<_>>()?;
        for (score, pairs, attempts) in outcomes {
            scores.push(score);
            redraws += attempts;
            per_run.push(pairs);
        }
        executed = batch_end;
        let (_, _, stop) = stop_reached(&scores, spec.ci_relative_width)?;
        if stop {
            converged = true;
            break;
        }
    }

    let actual: Vec<f64> = per_run.iter().flatten().map(|p| p.0).collect();
    let predicted: Vec<f64> = per_run.iter().flatten().map(|p| p.1).collect();
    let metrics = fit_metrics(&actual, &predicted)?;
    let (estimate, halfwidth, _) = stop_reached(&scores, spec.ci_relative_width)?;
    Ok((
        StageResult {
            runs_executed: executed,
            estimate,
            ci_halfwidth: halfwidth,
            converged,
            redraws,
            averaged_coefficients: model.coefficient_rows(),
            per_run_scores: scores,
        },
        metrics,
        per_run,
    ))
}

/// Assemble one labeled row per rated display event from the sessions.
pub fn assemble_rows(
    sessions: &[SubjectSession],
    brisque_map: &BrisqueMap,
    source: Source,
    target: Target,
) -> Result<Vec<LabeledRow>> {
    let mut rows = Vec::new();
    for session in sessions {
        match source {
            Source::Brisque => {
                for rating in &session.ratings {
                    let quality = brisque_map
                        .get(&(rating.image_id.clone(), rating.level))
                        .ok_or_else(|| CoreError::MissingBrisque {
                            image_id: rating.image_id.clone(),
                            level: rating.level,
                        })?
                        .value;
                    let target_value = match target {
                        Target::Rating => f64::from(rating.q),
                        Target::Level => f64::from(rating.level),
                        Target::Brisque => quality,
                    };
                    rows.push(LabeledRow {
                        subject_id: session.subject_id.clone(),
                        image_id: rating.image_id.clone(),
                        inputs: vec![quality],
                        target: target_value,
                    });
                }
            }
            Source::Eeg | Source::Eegz => {
                let matrix = feature_matrix(session, source == Source::Eegz, brisque_map)?;
                for row in matrix.rows {
                    let target_value = match target {
                        Target::Rating => f64::from(row.q),
                        Target::Level => f64::from(row.level),
                        Target::Brisque => row.brisque,
                    };
                    rows.push(LabeledRow {
                        subject_id: session.subject_id.clone(),
                        image_id: row.image_id,
                        inputs: row.channels.to_vec(),
                        target: target_value,
                    });
                }
            }
        }
    }
    if rows.is_empty() {
        return Err(CoreError::Empty("assembled dataset"));
    }
    Ok(rows)
}

fn group_label(grouping: Grouping, row: &LabeledRow) -> String {
    match grouping {
        Grouping::All => "all".to_string(),
        Grouping::PerImage => row.image_id.clone(),
        Grouping::PerSubject => row.subject_id.clone(),
    }
}

/// Run the full two-stage evaluation for every group of the grouping,
/// skipping groups that cannot be evaluated.
pub fn evaluate(
    sessions: &[SubjectSession],
    brisque_map: &BrisqueMap,
    spec: &PredictionSpec,
    grouping: Grouping,
) -> Result<EvaluationOutcome> {
    spec.validate()?;
    let rows = assemble_rows(sessions, brisque_map, spec.source, spec.target)?;

    let mut groups: BTreeMap<String, Vec<&LabeledRow>> = BTreeMap::new();
    for row in &rows {
        groups.entry(group_label(grouping, row)).or_default().push(row);
    }

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for (group, members) in groups {
        if members.len() < MIN_DATASET_ROWS {
            skipped.push(SkippedGroup {
                group,
                rows: members.len(),
                reason: format!("fewer than {MIN_DATASET_ROWS} rows"),
            });
            continue;
        }
        if is_constant(members.iter().map(|r| r.target)) {
            skipped.push(SkippedGroup {
                group,
                rows: members.len(),
                reason: "constant target values".into(),
            });
            continue;
        }
        let dataset = Dataset::new(
            members.iter().map(|r| r.inputs.clone()).collect(),
            members.iter().map(|r| r.target).collect(),
        )?;
        let (stage1, averaged) = stage_one(&dataset, spec)?;
        let (stage2, metrics, scatter) = stage_two(&dataset, &averaged, spec)?;
        let basis = PolynomialBasis::new(dataset.input_dim(), spec.degree)?;
        reports.push(EvaluationReport {
            group,
            grouping,
            spec: spec.clone(),
            rows: dataset.len(),
            expanded_length: basis.len(),
            coefficient_count: averaged.coefficient_count(),
            stage1,
            stage2,
            metrics,
            scatter,
        });
    }
    Ok(EvaluationOutcome { reports, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    fn noiseless_linear_dataset(n: usize) -> Dataset {
        let inputs: Vec<Vec<f64>> = (0..n).map(|k| vec![k as f64 * 0.5]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| 2.0 + 3.0 * x[0]).collect();
        Dataset::new(inputs, targets).unwrap()
    }

    fn fast_spec() -> PredictionSpec {
        PredictionSpec {
            stage1_min: 20,
            stage1_max: 200,
            stage2_min: 10,
            stage2_max: 60,
            ..PredictionSpec::default()
        }
    }

    #[test]
    fn halfwidth_of_constant_scores_is_zero() {
        assert_eq!(ci_halfwidth(&[0.75; 12]).unwrap(), 0.0);
    }

    #[test]
    fn halfwidth_of_zero_one_pair_is_098() {
        assert_abs_diff_eq!(ci_halfwidth(&[0.0, 1.0]).unwrap(), 0.98, epsilon = 1e-12);
    }

    #[test]
    fn halfwidth_needs_two_scores() {
        assert!(matches!(ci_halfwidth(&[1.0]), Err(CoreError::TooFewRows { min: 2, got: 1 })));
    }

    #[test]
    fn halfwidth_matches_sampled_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let normal = Normal::new(0.5, 0.1).unwrap();
        let scores: Vec<f64> = (0..10_000).map(|_| normal.sample(&mut rng)).collect();
        let halfwidth = ci_halfwidth(&scores).unwrap();
        let expected = 1.96 * 0.1 / (10_000f64).sqrt();
        assert!(
            (halfwidth - expected).abs() < 0.1 * expected,
            "halfwidth {halfwidth} vs expected {expected}"
        );
    }

    #[test]
    fn noiseless_runs_score_one_for_every_seed() {
        let dataset = noiseless_linear_dataset(40);
        let spec = PredictionSpec::default();
        for run in 0..20 {
            let (_, score, redraws) = run_split(&dataset, &spec, run).unwrap();
            assert!((score - 1.0).abs() < 1e-9, "run {run}: {score}");
            assert_eq!(redraws, 0);
        }
    }

    #[test]
    fn same_run_index_reproduces_the_run_exactly() {
        let dataset = noiseless_linear_dataset(25);
        let spec = PredictionSpec::default();
        let (model_a, score_a, _) = run_split(&dataset, &spec, 7).unwrap();
        let (model_b, score_b, _) = run_split(&dataset, &spec, 7).unwrap();
        assert_eq!(score_a.to_bits(), score_b.to_bits());
        assert_eq!(model_a.coefficient_rows(), model_b.coefficient_rows());
    }

    #[test]
    fn four_rows_are_too_few() {
        let dataset = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![0.0, 1.0, 2.0, 3.0],
        )
        .unwrap();
        assert!(matches!(
            run_split(&dataset, &PredictionSpec::default(), 0),
            Err(CoreError::TooFewRows { min: 5, got: 4 })
        ));
    }

    #[test]
    fn noiseless_stage_one_stops_at_the_minimum() {
        let dataset = noiseless_linear_dataset(40);
        let spec = PredictionSpec::default();
        let (result, model) = stage_one(&dataset, &spec).unwrap();
        assert_eq!(result.runs_executed, 500);
        assert!(result.converged);
        assert!((result.estimate - 1.0).abs() < 1e-9);
        assert!(result.ci_halfwidth < 1e-9);
        assert_eq!(result.per_run_scores.len(), 500);
        let rows = model.coefficient_rows();
        assert!((rows[0][0] - 2.0).abs() < 1e-9);
        assert!((rows[0][1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn unstable_scores_hit_the_run_cap_flagged() {
        // Targets are pure noise, so held-out R² bounces around zero and
        // the relative-width criterion cannot hold.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let inputs: Vec<Vec<f64>> = (0..60).map(|k| vec![k as f64]).collect();
        let targets: Vec<f64> = (0..60).map(|_| normal.sample(&mut rng)).collect();
        let dataset = Dataset::new(inputs, targets).unwrap();
        let spec = fast_spec();
        let (result, _) = stage_one(&dataset, &spec).unwrap();
        assert_eq!(result.runs_executed, spec.stage1_max);
        assert!(!result.converged);
    }

    #[test]
    fn generating_model_scores_perfectly_in_stage_two() {
        let dataset = noiseless_linear_dataset(40);
        let spec = PredictionSpec::default();
        let basis = PolynomialBasis::new(1, 1).unwrap();
        let model = FittedModel::Linear(LinearModel::new(basis, vec![2.0, 3.0]).unwrap());
        let (result, metrics, scatter) = stage_two(&dataset, &model, &spec).unwrap();
        assert_eq!(result.runs_executed, 50);
        assert!(result.converged);
        assert!((result.estimate - 1.0).abs() < 1e-12);
        assert_eq!(metrics.r2, Some(1.0));
        assert!(metrics.mse < 1e-24);
        assert!(metrics.mae < 1e-12);
        assert!(metrics.medae < 1e-12);
        assert_eq!(scatter.len(), 50);
        assert!(scatter.iter().all(|pairs| pairs.len() == 8));
    }

    #[test]
    fn mean_predictor_scores_near_zero_in_stage_two() {
        let inputs: Vec<Vec<f64>> = (0..500).map(|k| vec![k as f64]).collect();
        let targets: Vec<f64> = (0..500).map(|k| (k as f64 * 0.11).sin() * 2.0 + 3.0).collect();
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let dataset = Dataset::new(inputs, targets).unwrap();
        let basis = PolynomialBasis::new(1, 1).unwrap();
        let model = FittedModel::Linear(LinearModel::new(basis, vec![mean, 0.0]).unwrap());
        let (result, _, _) = stage_two(&dataset, &model, &fast_spec()).unwrap();
        assert!(result.estimate.abs() < 0.1, "estimate {}", result.estimate);
    }

    #[test]
    fn class_determined_features_give_perfect_stage_two() {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for class in 1..=5u8 {
            for _ in 0..8 {
                inputs.push(vec![f64::from(class)]);
                targets.push(f64::from(class));
            }
        }
        let dataset = Dataset::new(inputs, targets).unwrap();
        let spec = PredictionSpec { method: Method::Logistic, degree: 2, ..fast_spec() };
        let (_, averaged) = stage_one(&dataset, &spec).unwrap();
        let (result, metrics, _) = stage_two(&dataset, &averaged, &spec).unwrap();
        assert_eq!(result.estimate, 1.0);
        assert_eq!(metrics.r2, Some(1.0));
        assert_eq!(metrics.medae, 0.0);
    }

    #[test]
    fn reports_are_identical_across_worker_counts() {
        let dataset = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let normal = Normal::new(0.0, 0.3).unwrap();
            let inputs: Vec<Vec<f64>> = (0..80).map(|k| vec![k as f64 * 0.1]).collect();
            let targets: Vec<f64> =
                inputs.iter().map(|x| 1.0 + 0.5 * x[0] + normal.sample(&mut rng)).collect();
            Dataset::new(inputs, targets).unwrap()
        };
        let spec = fast_spec();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let (s1, model) = stage_one(&dataset, &spec).unwrap();
                let (s2, metrics, _) = stage_two(&dataset, &model, &spec).unwrap();
                serde_json::to_string(&(s1, s2, metrics)).unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn spec_validation_rejects_bad_combinations() {
        let bad = [
            PredictionSpec { split_fraction: 1.0, ..Default::default() },
            PredictionSpec { method: Method::Logistic, target: Target::Brisque, ..Default::default() },
            PredictionSpec { source: Source::Brisque, target: Target::Brisque, ..Default::default() },
            PredictionSpec { degree: 4, ..Default::default() },
            PredictionSpec { ci_level: 0.9, ..Default::default() },
            PredictionSpec { stage1_min: 600, stage1_max: 500, ..Default::default() },
            PredictionSpec { lambda: -1.0, ..Default::default() },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "accepted: {spec:?}");
        }
        assert!(PredictionSpec::default().validate().is_ok());
    }
}
