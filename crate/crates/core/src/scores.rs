//! Opinion scores and fit metrics: MOS, crushed differential MOS,
//! Pearson correlation, and the R²/MSE/MAE/MedAE bundle.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::session::Rating;

/// Mean opinion score and rating count per (image, level).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosEntry {
    pub mean: f64,
    pub count: usize,
}

/// MOS per (image, level), levels 0–5 (level 0 kept for reference use).
pub type MosTable = BTreeMap<(String, u8), MosEntry>;

/// Crushed differential MOS per (image, level ≥ 1).
pub type DmosTable = BTreeMap<(String, u8), MosEntry>;

/// Arithmetic mean of ratings per (image, level).
pub fn mos(ratings: &[Rating]) -> MosTable {
    let mut sums: BTreeMap<(String, u8), (f64, usize)> = BTreeMap::new();
    for r in ratings {
        let slot = sums.entry((r.image_id.clone(), r.level)).or_insert((0.0, 0));
        slot.0 += f64::from(r.q);
        slot.1 += 1;
    }
    sums.into_iter()
        .map(|(key, (sum, count))| (key, MosEntry { mean: sum / count as f64, count }))
        .collect()
}

/// Crush one rating against the same subject's reference (level-0)
/// rating: `d = q − q_ref + 5`, kept as-is up to 5 and compressed to
/// `7d / (d + 2)` above, so the result stays in (0, 7].
pub fn dmos_single(q: u8, q_ref: u8) -> Result<f64> {
    for (what, v) in [("rating", q), ("reference rating", q_ref)] {
        if !(1..=5).contains(&v) {
            return Err(CoreError::OutOfRange { what, value: f64::from(v), lo: 1.0, hi: 5.0 });
        }
    }
    let d = f64::from(q) - f64::from(q_ref) + 5.0;
    if d <= 5.0 {
        Ok(d)
    } else {
        Ok(7.0 * d / (d + 2.0))
    }
}

/// Differential MOS: crush each rating of level ≥ 1 against that
/// subject's level-0 rating of the same image, then average per
/// (image, level).
pub fn dmos(ratings: &[Rating]) -> Result<DmosTable> {
    let mut references: BTreeMap<(&str, &str), u8> = BTreeMap::new();
    for r in ratings {
        if r.level == 0 {
            references.insert((r.subject_id.as_str(), r.image_id.as_str()), r.q);
        }
    }

    let mut sums: BTreeMap<(String, u8), (f64, usize)> = BTreeMap::new();
    for r in ratings {
        if r.level == 0 {
            continue;
        }
        let q_ref = references
            .get(&(r.subject_id.as_str(), r.image_id.as_str()))
            .copied()
            .ok_or_else(|| CoreError::MissingReference {
                subject_id: r.subject_id.clone(),
                image_id: r.image_id.clone(),
            })?;
        let crushed = dmos_single(r.q, q_ref)?;
        let slot = sums.entry((r.image_id.clone(), r.level)).or_insert((0.0, 0));
        slot.0 += crushed;
        slot.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(key, (sum, count))| (key, MosEntry { mean: sum / count as f64, count }))
        .collect())
}

/// Sample Pearson product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(CoreError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(CoreError::TooFewRows { min: 2, got: x.len() });
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mean_x) * (b - mean_y);
        var_x += (a - mean_x) * (a - mean_x);
        var_y += (b - mean_y) * (b - mean_y);
    }
    if var_x == 0.0 {
        return Err(CoreError::UndefinedCorrelation("x"));
    }
    if var_y == 0.0 {
        return Err(CoreError::UndefinedCorrelation("y"));
    }
    Ok(cov / (var_x * var_y).sqrt())
}

/// Goodness-of-fit bundle; `r2` is absent when the true values are
/// constant (zero total sum of squares leaves it undefined).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FitMetrics {
    pub r2: Option<f64>,
    pub mse: f64,
    pub mae: f64,
    pub medae: f64,
}

/// R², MSE, MAE, and median absolute error of predictions. The median
/// of an even count is the mean of the two middle values.
pub fn fit_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<FitMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(CoreError::LengthMismatch { left: y_true.len(), right: y_pred.len() });
    }
    if y_true.is_empty() {
        return Err(CoreError::Empty("y_true"));
    }

    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let mut abs: Vec<f64> = Vec::with_capacity(y_true.len());
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let r = t - p;
        ss_res += r * r;
        ss_tot += (t - mean) * (t - mean);
        abs.push(r.abs());
    }

    abs.sort_by(f64::total_cmp);
    let medae = if abs.len() % 2 == 1 {
        abs[abs.len() / 2]
    } else {
        (abs[abs.len() / 2 - 1] + abs[abs.len() / 2]) / 2.0
    };

    Ok(FitMetrics {
        r2: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
        mse: ss_res / n,
        mae: abs.iter().sum::<f64>() / n,
        medae,
    })
}
