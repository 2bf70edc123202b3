//! EEG feature extraction: post-stimulus window averages and their
//! session-normalized (z-scored) variants.
//!
//! A display event contributes one 24-channel feature row: the mean of
//! each channel's present readings in the inclusive window
//! `[t_start, t_start + 500 ms]`. The normalized variant z-scores every
//! reading against its channel's whole-session mean and population
//! standard deviation first, then window-averages.

use crate::error::{CoreError, Result};
use crate::session::{
    channel_name, BrisqueMap, EEGSample, SubjectSession, CHANNEL_COUNT, WINDOW_MS,
};

/// Whole-session per-channel statistics over present readings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
    /// Number of present readings the statistics are computed over.
    pub count: usize,
}

/// Per-event feature vector; a channel is `None` when no reading fell
/// inside the event's window.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFeatures {
    pub image_id: String,
    pub level: u8,
    pub values: [Option<f64>; CHANNEL_COUNT],
    pub present_counts: [u32; CHANNEL_COUNT],
    pub normalized: bool,
}

/// Mean of each channel's present readings within
/// `[t_start, t_start + window]` (both ends inclusive); channels with no
/// present in-window reading come back absent.
pub fn window_average(
    trace: &[EEGSample],
    t_start: i64,
    window: i64,
) -> ([Option<f64>; CHANNEL_COUNT], [u32; CHANNEL_COUNT]) {
    let mut sums = [0.0; CHANNEL_COUNT];
    let mut counts = [0u32; CHANNEL_COUNT];
    for sample in trace {
        if sample.t < t_start || sample.t > t_start + window {
            continue;
        }
        for (channel, reading) in sample.bands.iter().enumerate() {
            if let Some(v) = reading {
                sums[channel] += v;
                counts[channel] += 1;
            }
        }
    }
    let mut values = [None; CHANNEL_COUNT];
    for channel in 0..CHANNEL_COUNT {
        if counts[channel] > 0 {
            values[channel] = Some(sums[channel] / f64::from(counts[channel]));
        }
    }
    (values, counts)
}

/// Whole-session mean and population standard deviation per channel,
/// over present readings only. Channels with fewer than two readings or
/// zero deviation cannot be normalized and are rejected.
pub fn session_stats(trace: &[EEGSample]) -> Result<[ChannelStats; CHANNEL_COUNT]> {
    let mut stats = [ChannelStats { mean: 0.0, std: 0.0, count: 0 }; CHANNEL_COUNT];
    for (channel, slot) in stats.iter_mut().enumerate() {
        let mut sum = 0.0;
        let mut count = 0usize;
        for sample in trace {
            if let Some(v) = sample.bands[channel] {
                sum += v;
                count += 1;
            }
        }
        if count < 2 {
            return Err(CoreError::DegenerateChannel {
                channel: channel_name(channel),
                reason: format!("{count} present readings, need at least 2"),
            });
        }
        let mean = sum / count as f64;
        let mut var = 0.0;
        for sample in trace {
            if let Some(v) = sample.bands[channel] {
                var += (v - mean) * (v - mean);
            }
        }
        var /= count as f64;
        if var == 0.0 {
            return Err(CoreError::DegenerateChannel {
                channel: channel_name(channel),
                reason: "zero standard deviation".into(),
            });
        }
        *slot = ChannelStats { mean, std: var.sqrt(), count };
    }
    Ok(stats)
}

/// Replace every present reading with `(value − mean) / std` of its
/// channel; absences are preserved.
pub fn zscore(trace: &[EEGSample], stats: &[ChannelStats; CHANNEL_COUNT]) -> Vec<EEGSample> {
    trace
        .iter()
        .map(|sample| {
            let mut bands = [None; CHANNEL_COUNT];
            for (channel, reading) in sample.bands.iter().enumerate() {
                if let Some(v) = reading {
                    bands[channel] = Some((v - stats[channel].mean) / stats[channel].std);
                }
            }
            EEGSample { t: sample.t, bands }
        })
        .collect()
}

/// One complete row of the per-event feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub image_id: String,
    pub level: u8,
    pub channels: [f64; CHANNEL_COUNT],
    /// The subject's rating of this event.
    pub q: u8,
    /// Quality value of the displayed (image, level).
    pub brisque: f64,
}

/// Feature matrix of one subject: one row per rated display event whose
/// window had every channel present.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub subject_id: String,
    pub rows: Vec<FeatureRow>,
    /// Rated events dropped because at least one channel was absent.
    pub dropped: usize,
    pub normalized: bool,
}

/// Build the per-event feature matrix of a session. `normalized` selects
/// the z-scored variant (z-score the trace first, then window-average).
/// Rows with any absent channel are dropped; if everything is dropped,
/// that is an error.
pub fn feature_matrix(
    session: &SubjectSession,
    normalized: bool,
    brisque_map: &BrisqueMap,
) -> Result<FeatureMatrix> {
    let trace_storage;
    let trace: &[EEGSample] = if normalized {
        let stats = session_stats(&session.trace)?;
        trace_storage = zscore(&session.trace, &stats);
        &trace_storage
    } else {
        &session.trace
    };

    let mut rows = Vec::new();
    let mut dropped = 0usize;
    for event in &session.events {
        let Some(rating) = session.rating_for(event) else { continue };
        let brisque = brisque_map
            .get(&(event.image_id.clone(), event.level))
            .ok_or_else(|| CoreError::MissingBrisque {
                image_id: event.image_id.clone(),
                level: event.level,
            })?
            .value;

        let (values, _counts) = window_average(trace, event.t_start, WINDOW_MS);
        let mut channels = [0.0; CHANNEL_COUNT];
        let mut complete = true;
        for (slot, value) in channels.iter_mut().zip(values.iter()) {
            match value {
                Some(v) => *slot = *v,
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            dropped += 1;
            continue;
        }
        rows.push(FeatureRow {
            image_id: event.image_id.clone(),
            level: event.level,
            channels,
            q: rating.q,
            brisque,
        });
    }

    if rows.is_empty() {
        return Err(CoreError::EmptyMatrix);
    }
    Ok(FeatureMatrix { subject_id: session.subject_id.clone(), rows, dropped, normalized })
}

/// Write a feature matrix as CSV:
/// `image_id,level,<24 channel columns>,q,l,brisque`.
pub fn write_feature_csv(matrix: &FeatureMatrix, mut w: impl std::io::Write) -> Result<()> {
    let io_err = |source| CoreError::Io { path: "<feature csv>".into(), source };
    let names: Vec<String> = (0..CHANNEL_COUNT).map(channel_name).collect();
    writeln!(w, "image_id,level,{},q,l,brisque", names.join(",")).map_err(io_err)?;
    for row in &matrix.rows {
        let channels: Vec<String> = row.channels.iter().map(|v| format!("{v}")).collect();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.image_id,
            row.level,
            channels.join(","),
            row.q,
            row.level,
            row.brisque
        )
        .map_err(io_err)?;
    }
    Ok(())
}
