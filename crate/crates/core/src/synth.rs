//! Deterministic synthetic experiment generator.
//!
//! Produces complete subject sessions — display schedule, 1–5 ratings,
//! 10 Hz EEG traces — together with a matching quality-value catalog,
//! all derived from one seed. Ratings follow either a linear function of
//! the displayed image's quality value (optionally noisy, then quantized
//! onto the scale) or a fixed level→class map. EEG channels carry a
//! constant stimulus-locked response inside each 500 ms post-stimulus
//! window, an alternating background outside it, and configurable
//! Gaussian jitter and reading dropout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use brisque::BrisqueValue;

use crate::error::{CoreError, Result};
use crate::regress::bound_scalar;
use crate::session::{
    BrisqueMap, DisplayEvent, EEGSample, Rating, SubjectSession, CHANNEL_COUNT,
    DEFAULT_DURATION_MS,
};

/// How ratings are derived from the displayed (image, level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingRule {
    /// `rating = quantize(intercept + slope·quality + N(0, noise_sigma))`.
    LinearOfBrisque { intercept: f64, slope: f64, noise_sigma: f64 },
    /// `rating = clamp(6 − level, 1, 5)`, deterministic.
    ClassMap,
}

/// EEG trace shape parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EegRule {
    /// Resting value per channel; empty selects the default ramp 10+c.
    pub base: Vec<f64>,
    /// Scale of the stimulus-locked in-window response.
    pub response_gain: f64,
    /// Out-of-window readings alternate base ± this spread, giving every
    /// channel nonzero session variance even without jitter.
    pub background_spread: f64,
    /// Standard deviation of Gaussian noise added to every reading.
    pub jitter: f64,
    /// Probability that any single reading is absent.
    pub dropout: f64,
}

impl Default for EegRule {
    fn default() -> Self {
        Self {
            base: Vec::new(),
            response_gain: 1.0,
            background_spread: 1.0,
            jitter: 0.0,
            dropout: 0.0,
        }
    }
}

/// Full generator configuration; serializable as a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub subjects: u32,
    pub images: u32,
    /// Highest impairment level; each image is shown at levels 0..=levels.
    pub levels: u8,
    pub seed: u64,
    pub rating_rule: RatingRule,
    pub eeg: EegRule,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 5,
            images: 6,
            levels: 5,
            seed: 0,
            rating_rule: RatingRule::LinearOfBrisque {
                intercept: 5.37,
                slope: -0.049,
                noise_sigma: 0.0,
            },
            eeg: EegRule::default(),
        }
    }
}

/// Generated sessions plus the quality-value catalog they reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub sessions: Vec<SubjectSession>,
    pub brisque: BrisqueMap,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.images == 0 {
            return Err(CoreError::InvalidSpec(
                "subjects and images must both be at least 1".into(),
            ));
        }
        if self.levels > 5 {
            return Err(CoreError::OutOfRange {
                what: "highest level",
                value: f64::from(self.levels),
                lo: 0.0,
                hi: 5.0,
            });
        }
        if let RatingRule::LinearOfBrisque { intercept, slope, noise_sigma } = &self.rating_rule {
            if !(intercept.is_finite() && slope.is_finite() && *slope != 0.0) {
                return Err(CoreError::InvalidSpec(
                    "linear rating rule needs finite intercept and nonzero slope".into(),
                ));
            }
            if !(noise_sigma.is_finite() && *noise_sigma >= 0.0) {
                return Err(CoreError::OutOfRange {
                    what: "rating noise sigma",
                    value: *noise_sigma,
                    lo: 0.0,
                    hi: f64::INFINITY,
                });
            }
        }
        if !self.eeg.base.is_empty() && self.eeg.base.len() != CHANNEL_COUNT {
            return Err(CoreError::DimensionMismatch {
                expected: CHANNEL_COUNT,
                got: self.eeg.base.len(),
            });
        }
        if !(0.0..=1.0).contains(&self.eeg.dropout) {
            return Err(CoreError::OutOfRange {
                what: "dropout probability",
                value: self.eeg.dropout,
                lo: 0.0,
                hi: 1.0,
            });
        }
        if !(self.eeg.jitter.is_finite() && self.eeg.jitter >= 0.0) {
            return Err(CoreError::OutOfRange {
                what: "jitter sigma",
                value: self.eeg.jitter,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(())
    }

    /// The deterministic rating a level maps to under the class rule.
    fn class_of(level: u8) -> u8 {
        (6i16 - i16::from(level)).clamp(1, 5) as u8
    }

    /// Quality value displayed at a level. Under the linear rule the
    /// values sit exactly where the line hits the integer ratings, so
    /// the noiseless rating is linear in the quality value; otherwise an
    /// evenly spaced increasing ladder.
    fn quality_of(&self, level: u8) -> f64 {
        match &self.rating_rule {
            RatingRule::LinearOfBrisque { intercept, slope, .. } => {
                (f64::from(Self::class_of(level)) - intercept) / slope
            }
            RatingRule::ClassMap => 10.0 + 16.0 * f64::from(level),
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generate the full dataset a configuration describes.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;

    let mut brisque = BrisqueMap::new();
    for image in 0..config.images {
        for level in 0..=config.levels {
            brisque.insert(
                (image_id(image), level),
                BrisqueValue { value: config.quality_of(level) },
            );
        }
    }

    let base: Vec<f64> = if config.eeg.base.is_empty() {
        (0..CHANNEL_COUNT).map(|c| 10.0 + c as f64).collect()
    } else {
        config.eeg.base.clone()
    };

    let mut sessions = Vec::with_capacity(config.subjects as usize);
    for subject in 0..config.subjects {
        let subject_id = format!("s{:02}", subject + 1);
        let mut rng =
            ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ splitmix64(u64::from(subject))));

        let mut events = Vec::new();
        let mut ratings = Vec::new();
        for image in 0..config.images {
            for level in 0..=config.levels {
                let t_start = events.len() as i64 * DEFAULT_DURATION_MS;
                events.push(DisplayEvent {
                    image_id: image_id(image),
                    level,
                    t_start,
                    duration: DEFAULT_DURATION_MS,
                });
                let q = match &config.rating_rule {
                    RatingRule::LinearOfBrisque { intercept, slope, noise_sigma } => {
                        let mut value = intercept + slope * config.quality_of(level);
                        if *noise_sigma > 0.0 {
                            value += Normal::new(0.0, *noise_sigma)
                                .map_err(|_| CoreError::NonFinite("rating noise"))?
                                .sample(&mut rng);
                        }
                        bound_scalar(value)?
                    }
                    RatingRule::ClassMap => SynthConfig::class_of(level),
                };
                ratings.push(Rating {
                    subject_id: subject_id.clone(),
                    image_id: image_id(image),
                    level,
                    q,
                });
            }
        }

        let t_end = events.len() as i64 * DEFAULT_DURATION_MS;
        let jitter = (config.eeg.jitter > 0.0)
            .then(|| Normal::new(0.0, config.eeg.jitter))
            .transpose()
            .map_err(|_| CoreError::NonFinite("jitter sigma"))?;
        let mut trace = Vec::with_capacity((t_end / 100 + 1) as usize);
        for tick in 0..=(t_end / 100) {
            let t = tick * 100;
            let in_window_level = events
                .iter()
                .find(|e| t >= e.t_start && t <= e.t_start + crate::session::WINDOW_MS)
                .map(|e| e.level);
            let mut bands = [None; CHANNEL_COUNT];
            for (channel, slot) in bands.iter_mut().enumerate() {
                let mut value = match in_window_level {
                    Some(level) => {
                        base[channel]
                            + config.eeg.response_gain
                                * f64::from(level + 1)
                                * (1.0 + channel as f64 / CHANNEL_COUNT as f64)
                    }
                    None => {
                        let sign = if tick % 2 == 0 { 1.0 } else { -1.0 };
                        base[channel] + sign * config.eeg.background_spread
                    }
                };
                if let Some(noise) = &jitter {
                    value += noise.sample(&mut rng);
                }
                // The dropout draw happens for every reading so the
                // presence pattern is independent of the dropout rate's
                // effect on other channels.
                let dropped = rng.random::<f64>() < config.eeg.dropout;
                if !dropped {
                    *slot = Some(value);
                }
            }
            trace.push(EEGSample { t, bands });
        }

        sessions.push(
            SubjectSession { subject_id, events, ratings, trace: Vec::new(), t_end }
                .with_trace(trace),
        );
    }

    Ok(SynthData { sessions, brisque })
}

fn image_id(index: u32) -> String {
    format!("img{:02}", index + 1)
}
