//! Plain-text epsilon-SVR model loading and RBF scoring.
//!
//! The model file carries a `key value` header (kernel type, gamma, rho)
//! followed by an `SV` section with one support vector per line: the dual
//! coefficient, then sparse `index:value` pairs with 1-based, strictly
//! increasing indices. The companion range file lists per-feature scaling
//! bounds in the `svm-scale` layout; an optional `y` section defines how
//! raw SVR outputs map back to score units (absent = identity).

use std::fs;
use std::path::Path;

use crate::error::{BrisqueError, Result};
use crate::features::{BrisqueFeatures, FEATURE_COUNT};

/// A no-reference quality score; higher means more impaired.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrisqueValue {
    pub value: f64,
}

/// A loaded epsilon-SVR quality model. Immutable and shareable.
#[derive(Debug, Clone)]
pub struct SvrModel {
    kernel_gamma: f64,
    rho: f64,
    support_vectors: Vec<[f64; FEATURE_COUNT]>,
    dual_coefficients: Vec<f64>,
    feature_lower: [f64; FEATURE_COUNT],
    feature_upper: [f64; FEATURE_COUNT],
    /// Target interval features are scaled into (usually [-1, 1]).
    scale_lower: f64,
    scale_upper: f64,
    /// Raw-output interval and the score interval it maps onto.
    score_scaled: (f64, f64),
    score_range: (f64, f64),
}

fn parse_err(file: &'static str, line: usize, message: impl Into<String>) -> BrisqueError {
    BrisqueError::Parse { file, line, message: message.into() }
}

fn parse_f64(file: &'static str, line: usize, token: &str, what: &str) -> Result<f64> {
    token
        .parse()
        .map_err(|_| parse_err(file, line, format!("invalid {what}: {token:?}")))
}

/// Header values and SV section: (gamma, rho, duals, support vectors).
type ParsedModel = (f64, f64, Vec<f64>, Vec<[f64; FEATURE_COUNT]>);

/// Parse the model header and SV section.
fn parse_model(text: &str) -> Result<ParsedModel> {
    const FILE: &str = "model";
    let mut gamma = None;
    let mut rho = None;
    let mut kernel_seen = false;
    let mut lines = text.lines().enumerate();

    for (i, raw) in lines.by_ref() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "SV" {
            if !kernel_seen {
                return Err(parse_err(FILE, line_no, "header missing kernel_type"));
            }
            let gamma = gamma.ok_or_else(|| parse_err(FILE, line_no, "header missing gamma"))?;
            let rho = rho.ok_or_else(|| parse_err(FILE, line_no, "header missing rho"))?;

            let mut duals = Vec::new();
            let mut vectors = Vec::new();
            for (j, raw) in lines.by_ref() {
                let sv_line = j + 1;
                let sv = raw.trim();
                if sv.is_empty() {
                    continue;
                }
                let mut tokens = sv.split_whitespace();
                let dual = tokens.next().expect("non-empty line has a first token");
                duals.push(parse_f64(FILE, sv_line, dual, "dual coefficient")?);

                let mut vector = [0.0; FEATURE_COUNT];
                let mut prev_index = 0usize;
                for pair in tokens {
                    let (idx, val) = pair.split_once(':').ok_or_else(|| {
                        parse_err(FILE, sv_line, format!("expected index:value, got {pair:?}"))
                    })?;
                    let idx: usize = idx.parse().map_err(|_| {
                        parse_err(FILE, sv_line, format!("invalid feature index: {idx:?}"))
                    })?;
                    if idx <= prev_index {
                        return Err(parse_err(
                            FILE,
                            sv_line,
                            format!("feature indices must increase: {idx} after {prev_index}"),
                        ));
                    }
                    if idx > FEATURE_COUNT {
                        return Err(parse_err(
                            FILE,
                            sv_line,
                            format!("feature index {idx} exceeds {FEATURE_COUNT}"),
                        ));
                    }
                    vector[idx - 1] = parse_f64(FILE, sv_line, val, "feature value")?;
                    prev_index = idx;
                }
                vectors.push(vector);
            }
            if vectors.is_empty() {
                return Err(parse_err(FILE, line_no, "SV section has no support vectors"));
            }
            return Ok((gamma, rho, duals, vectors));
        }

        let (key, value) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| parse_err(FILE, line_no, format!("malformed header line: {line:?}")))?;
        let value = value.trim();
        match key {
            "kernel_type" => {
                if value != "rbf" {
                    return Err(parse_err(FILE, line_no, format!("unsupported kernel_type {value:?}")));
                }
                kernel_seen = true;
            }
            "gamma" => {
                let g = parse_f64(FILE, line_no, value, "gamma")?;
                if g.is_nan() || g <= 0.0 {
                    return Err(parse_err(FILE, line_no, format!("gamma must be positive, got {g}")));
                }
                gamma = Some(g);
            }
            "rho" => rho = Some(parse_f64(FILE, line_no, value, "rho")?),
            // svm_type, nr_class, total_sv and friends carry no information
            // the scorer needs; accept and ignore them.
            _ => {}
        }
    }
    Err(parse_err(FILE, text.lines().count(), "missing SV section"))
}

struct RangeFile {
    feature_lower: [f64; FEATURE_COUNT],
    feature_upper: [f64; FEATURE_COUNT],
    scale_lower: f64,
    scale_upper: f64,
    score_scaled: (f64, f64),
    score_range: (f64, f64),
}

/// Parse the per-feature scaling bounds and the optional score mapping.
fn parse_range(text: &str) -> Result<RangeFile> {
    const FILE: &str = "range";
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let two_reals = |line_no: usize, line: &str, what: &str| -> Result<(f64, f64)> {
        let mut t = line.split_whitespace();
        match (t.next(), t.next(), t.next()) {
            (Some(a), Some(b), None) => {
                Ok((parse_f64(FILE, line_no, a, what)?, parse_f64(FILE, line_no, b, what)?))
            }
            _ => Err(parse_err(FILE, line_no, format!("expected two {what} values: {line:?}"))),
        }
    };

    let (mut section_line, mut section) = lines
        .next()
        .ok_or_else(|| parse_err(FILE, 1, "empty range file"))?;

    // Optional score-mapping section: scaled interval, then score interval.
    let mut score_scaled = (0.0, 1.0);
    let mut score_range = (0.0, 1.0);
    if section == "y" {
        let (n, l) = lines
            .next()
            .ok_or_else(|| parse_err(FILE, section_line, "y section missing scaled interval"))?;
        score_scaled = two_reals(n, l, "scaled-interval")?;
        let (n, l) = lines
            .next()
            .ok_or_else(|| parse_err(FILE, n, "y section missing score interval"))?;
        score_range = two_reals(n, l, "score-interval")?;
        (section_line, section) = lines
            .next()
            .ok_or_else(|| parse_err(FILE, n, "missing x section"))?;
    }
    if section != "x" {
        return Err(parse_err(FILE, section_line, format!("expected x section, got {section:?}")));
    }

    let (n, l) = lines
        .next()
        .ok_or_else(|| parse_err(FILE, section_line, "x section missing target interval"))?;
    let (scale_lower, scale_upper) = two_reals(n, l, "target-interval")?;

    let mut feature_lower = [0.0; FEATURE_COUNT];
    let mut feature_upper = [0.0; FEATURE_COUNT];
    let mut count = 0usize;
    let mut last_line = n;
    for (line_no, line) in lines {
        last_line = line_no;
        let mut t = line.split_whitespace();
        let idx = t.next().expect("non-empty line has a first token");
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(FILE, line_no, format!("invalid feature index: {idx:?}")))?;
        if idx != count + 1 {
            return Err(parse_err(
                FILE,
                line_no,
                format!("feature indices must increase: expected {}, got {idx}", count + 1),
            ));
        }
        if idx > FEATURE_COUNT {
            return Err(parse_err(
                FILE,
                line_no,
                format!("feature index {idx} exceeds {FEATURE_COUNT}"),
            ));
        }
        let (min, max) = match (t.next(), t.next(), t.next()) {
            (Some(a), Some(b), None) => {
                (parse_f64(FILE, line_no, a, "bound")?, parse_f64(FILE, line_no, b, "bound")?)
            }
            _ => return Err(parse_err(FILE, line_no, format!("expected index min max: {line:?}"))),
        };
        if max < min {
            return Err(parse_err(FILE, line_no, format!("bounds reversed: {min} > {max}")));
        }
        feature_lower[idx - 1] = min;
        feature_upper[idx - 1] = max;
        count += 1;
    }
    if count != FEATURE_COUNT {
        return Err(parse_err(
            FILE,
            last_line,
            format!("range file covers {count} features, expected {FEATURE_COUNT}"),
        ));
    }

    Ok(RangeFile { feature_lower, feature_upper, scale_lower, scale_upper, score_scaled, score_range })
}

/// Build an [`SvrModel`] from model and range file contents.
pub fn load_model(model_text: &str, range_text: &str) -> Result<SvrModel> {
    let (kernel_gamma, rho, dual_coefficients, support_vectors) = parse_model(model_text)?;
    let range = parse_range(range_text)?;
    Ok(SvrModel {
        kernel_gamma,
        rho,
        support_vectors,
        dual_coefficients,
        feature_lower: range.feature_lower,
        feature_upper: range.feature_upper,
        scale_lower: range.scale_lower,
        scale_upper: range.scale_upper,
        score_scaled: range.score_scaled,
        score_range: range.score_range,
    })
}

impl SvrModel {
    /// Load a model/range pair from disk.
    pub fn load_files(model_path: &Path, range_path: &Path) -> Result<Self> {
        let read = |path: &Path| {
            fs::read_to_string(path).map_err(|source| BrisqueError::Io {
                path: path.to_path_buf(),
                source,
            })
        };
        load_model(&read(model_path)?, &read(range_path)?)
    }

    /// The pretrained model shipped with this crate, compiled in so
    /// binaries can score without locating fixture files.
    pub fn bundled() -> Result<Self> {
        load_model(
            include_str!("../fixtures/model/svr_model.txt"),
            include_str!("../fixtures/model/svr_range.txt"),
        )
    }

    pub fn support_vector_count(&self) -> usize {
        self.support_vectors.len()
    }

    pub fn score_range(&self) -> (f64, f64) {
        self.score_range
    }

    /// Scale raw features into the model's per-feature target interval.
    fn scale(&self, features: &BrisqueFeatures) -> [f64; FEATURE_COUNT] {
        let mut scaled = [0.0; FEATURE_COUNT];
        for (k, (&v, slot)) in features.values().iter().zip(scaled.iter_mut()).enumerate() {
            let (lo, hi) = (self.feature_lower[k], self.feature_upper[k]);
            *slot = if hi > lo {
                self.scale_lower + (v - lo) * (self.scale_upper - self.scale_lower) / (hi - lo)
            } else {
                // Constant feature in the training corpus: carries no signal.
                0.0
            };
        }
        scaled
    }

    /// Score a feature vector: RBF kernel expansion minus the bias, then
    /// the linear map from raw-output units to score units.
    pub fn score(&self, features: &BrisqueFeatures) -> BrisqueValue {
        let x = self.scale(features);
        let mut raw = -self.rho;
        for (sv, dual) in self.support_vectors.iter().zip(&self.dual_coefficients) {
            let dist_sq: f64 = x.iter().zip(sv.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            raw += dual * (-self.kernel_gamma * dist_sq).exp();
        }

        let (s0, s1) = self.score_scaled;
        let (r0, r1) = self.score_range;
        let value = if s1 != s0 { r0 + (raw - s0) * (r1 - r0) / (s1 - s0) } else { raw };
        BrisqueValue { value }
    }
}
