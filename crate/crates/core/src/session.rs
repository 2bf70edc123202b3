//! Experiment data model and CSV ingestion.
//!
//! A session records, per subject, which image/impairment-level pairs
//! were shown when, the 1–5 quality rating given to each, and the EEG
//! band-power trace captured alongside. Three CSV schemas feed it:
//!
//! - ratings: `subject_id,image_id,level,rating,t_start_ms`
//! - EEG trace: `t_ms` plus 24 columns named `<band>_<position>`
//! - quality table: `image_id,level,brisque`
//!
//! All files are UTF-8, comma-separated, `.` decimal point, header row
//! mandatory. Empty EEG cells mean a missing reading.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use brisque::BrisqueValue;

use crate::error::{CoreError, Result};

/// Electrode positions, in channel-index order.
pub const POSITIONS: [&str; 4] = ["TP9", "Fp1", "Fp2", "TP10"];
/// Frequency bands, in channel-index order.
pub const BANDS: [&str; 6] = ["low", "delta", "theta", "alpha", "beta", "gamma"];
/// Total channel count: every position × band combination.
pub const CHANNEL_COUNT: usize = POSITIONS.len() * BANDS.len();

/// Default display duration per image, in milliseconds.
pub const DEFAULT_DURATION_MS: i64 = 15_000;
/// Post-stimulus feature window, in milliseconds.
pub const WINDOW_MS: i64 = 500;

/// Column/display name of a channel, e.g. `alpha_TP9`.
pub fn channel_name(index: usize) -> String {
    format!("{}_{}", BANDS[index % BANDS.len()], POSITIONS[index / BANDS.len()])
}

/// Inverse of [`channel_name`]; `None` for unknown names.
pub fn channel_index(name: &str) -> Option<usize> {
    let (band, position) = name.split_once('_')?;
    let b = BANDS.iter().position(|&x| x == band)?;
    let p = POSITIONS.iter().position(|&x| x == position)?;
    Some(p * BANDS.len() + b)
}

/// One image at one impairment level; level 0 is the unimpaired original.
#[derive(Debug, Clone, PartialEq)]
pub struct MediaItem {
    pub image_id: String,
    pub level: u8,
    pub brisque: Option<BrisqueValue>,
}

/// One 15-second presentation of an image to a subject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisplayEvent {
    pub image_id: String,
    pub level: u8,
    pub t_start: i64,
    pub duration: i64,
}

/// One subject's 1–5 quality rating of one presentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rating {
    pub subject_id: String,
    pub image_id: String,
    pub level: u8,
    pub q: u8,
}

/// One timestamped row of band-power readings; any subset may be absent.
#[derive(Debug, Clone, PartialEq)]
pub struct EEGSample {
    pub t: i64,
    pub bands: [Option<f64>; CHANNEL_COUNT],
}

/// Everything recorded for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSession {
    pub subject_id: String,
    pub events: Vec<DisplayEvent>,
    pub ratings: Vec<Rating>,
    pub trace: Vec<EEGSample>,
    /// Last recording time: end of the trace or of the final event.
    pub t_end: i64,
}

impl SubjectSession {
    /// Attach an EEG trace, extending `t_end` if the trace runs longer.
    pub fn with_trace(mut self, trace: Vec<EEGSample>) -> Self {
        if let Some(last) = trace.last() {
            self.t_end = self.t_end.max(last.t);
        }
        self.trace = trace;
        self
    }

    /// The subject's rating for an event, if any.
    pub fn rating_for(&self, event: &DisplayEvent) -> Option<&Rating> {
        self.ratings
            .iter()
            .find(|r| r.image_id == event.image_id && r.level == event.level)
    }
}

fn ingest_err(file: &'static str, row: u64, message: impl Into<String>) -> CoreError {
    CoreError::Ingest { file, row, message: message.into() }
}

fn parse_field<T: std::str::FromStr>(
    file: &'static str,
    row: u64,
    value: &str,
    what: &str,
) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| ingest_err(file, row, format!("invalid {what}: {value:?}")))
}

/// Read the ratings CSV into per-subject session skeletons (events and
/// ratings populated, traces empty), sorted by subject id.
pub fn ingest_ratings(reader: impl Read) -> Result<Vec<SubjectSession>> {
    const FILE: &str = "ratings";
    let mut csv = csv::ReaderBuilder::new().from_reader(reader);

    let headers = csv.headers().map_err(|source| CoreError::Csv { file: FILE.into(), source })?;
    let expected = ["subject_id", "image_id", "level", "rating", "t_start_ms"];
    if headers.iter().map(str::trim).ne(expected) {
        return Err(ingest_err(FILE, 1, format!("expected header {:?}", expected.join(","))));
    }

    let mut sessions: BTreeMap<String, SubjectSession> = BTreeMap::new();
    let mut seen: BTreeSet<(String, String, u8)> = BTreeSet::new();

    for record in csv.records() {
        let record = record.map_err(|source| CoreError::Csv { file: FILE.into(), source })?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(ingest_err(FILE, row, format!("expected {} fields", expected.len())));
        }

        let subject_id = record[0].trim().to_owned();
        let image_id = record[1].trim().to_owned();
        let level: u8 = parse_field(FILE, row, &record[2], "level")?;
        let rating: u8 = parse_field(FILE, row, &record[3], "rating")?;
        let t_start: i64 = parse_field(FILE, row, &record[4], "t_start_ms")?;

        if level > 5 {
            return Err(ingest_err(FILE, row, format!("level {level} outside 0..=5")));
        }
        if !(1..=5).contains(&rating) {
            return Err(ingest_err(FILE, row, format!("rating {rating} outside 1..=5")));
        }
        if t_start < 0 {
            return Err(ingest_err(FILE, row, format!("negative t_start_ms {t_start}")));
        }
        if !seen.insert((subject_id.clone(), image_id.clone(), level)) {
            return Err(ingest_err(
                FILE,
                row,
                format!("duplicate rating for ({subject_id}, {image_id}, {level})"),
            ));
        }

        let session = sessions.entry(subject_id.clone()).or_insert_with(|| SubjectSession {
            subject_id: subject_id.clone(),
            events: Vec::new(),
            ratings: Vec::new(),
            trace: Vec::new(),
            t_end: 0,
        });
        session.events.push(DisplayEvent {
            image_id: image_id.clone(),
            level,
            t_start,
            duration: DEFAULT_DURATION_MS,
        });
        session.ratings.push(Rating { subject_id, image_id, level, q: rating });
        session.t_end = session.t_end.max(t_start + DEFAULT_DURATION_MS);
    }

    Ok(sessions.into_values().collect())
}

/// Read one subject's EEG trace CSV. Samples must be strictly increasing
/// in time; empty cells become absent readings.
pub fn ingest_eeg(reader: impl Read) -> Result<Vec<EEGSample>> {
    const FILE: &str = "eeg";
    let mut csv = csv::ReaderBuilder::new().from_reader(reader);

    let headers = csv.headers().map_err(|source| CoreError::Csv { file: FILE.into(), source })?;
    let headers: Vec<String> = headers.iter().map(|h| h.trim().to_owned()).collect();
    if headers.first().map(String::as_str) != Some("t_ms") {
        return Err(ingest_err(FILE, 1, "first column must be t_ms"));
    }
    // Map each data column to its channel slot; demand each channel once.
    let mut column_channel = Vec::with_capacity(headers.len() - 1);
    let mut covered = [false; CHANNEL_COUNT];
    for name in &headers[1..] {
        let idx = channel_index(name)
            .ok_or_else(|| ingest_err(FILE, 1, format!("unknown channel column {name:?}")))?;
        if covered[idx] {
            return Err(ingest_err(FILE, 1, format!("duplicate channel column {name:?}")));
        }
        covered[idx] = true;
        column_channel.push(idx);
    }
    if let Some(missing) = covered.iter().position(|&c| !c) {
        return Err(ingest_err(FILE, 1, format!("missing channel column {}", channel_name(missing))));
    }

    let mut trace: Vec<EEGSample> = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|source| CoreError::Csv { file: FILE.into(), source })?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() != CHANNEL_COUNT + 1 {
            return Err(ingest_err(FILE, row, format!("expected {} fields", CHANNEL_COUNT + 1)));
        }

        let t: i64 = parse_field(FILE, row, &record[0], "t_ms")?;
        if let Some(prev) = trace.last() {
            if t <= prev.t {
                return Err(ingest_err(
                    FILE,
                    row,
                    format!("timestamps must strictly increase: {t} after {}", prev.t),
                ));
            }
        }

        let mut bands = [None; CHANNEL_COUNT];
        for (cell, &channel) in record.iter().skip(1).zip(&column_channel) {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            let value: f64 = parse_field(FILE, row, cell, "band power")?;
            if !value.is_finite() {
                return Err(ingest_err(FILE, row, format!("non-finite band power {cell:?}")));
            }
            bands[channel] = Some(value);
        }
        trace.push(EEGSample { t, bands });
    }

    Ok(trace)
}

/// Map from (image, level) to its no-reference quality value.
pub type BrisqueMap = BTreeMap<(String, u8), BrisqueValue>;

/// Read the quality-table CSV (`image_id,level,brisque`).
pub fn ingest_brisque_table(reader: impl Read) -> Result<BrisqueMap> {
    const FILE: &str = "brisque";
    let mut csv = csv::ReaderBuilder::new().from_reader(reader);

    let headers = csv.headers().map_err(|source| CoreError::Csv { file: FILE.into(), source })?;
    let expected = ["image_id", "level", "brisque"];
    if headers.iter().map(str::trim).ne(expected) {
        return Err(ingest_err(FILE, 1, format!("expected header {:?}", expected.join(","))));
    }

    let mut map = BrisqueMap::new();
    for record in csv.records() {
        let record = record.map_err(|source| CoreError::Csv { file: FILE.into(), source })?;
        let row = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(ingest_err(FILE, row, format!("expected {} fields", expected.len())));
        }

        let image_id = record[0].trim().to_owned();
        let level: u8 = parse_field(FILE, row, &record[1], "level")?;
        let value: f64 = parse_field(FILE, row, &record[2], "brisque")?;
        if level > 5 {
            return Err(ingest_err(FILE, row, format!("level {level} outside 0..=5")));
        }
        if !value.is_finite() {
            return Err(ingest_err(FILE, row, "non-finite brisque value".to_string()));
        }
        if map.insert((image_id.clone(), level), BrisqueValue { value }).is_some() {
            return Err(ingest_err(FILE, row, format!("duplicate entry for ({image_id}, {level})")));
        }
    }
    Ok(map)
}

/// Findings from [`validate_session`]; empty means the session is usable
/// without caveats.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Events the subject never rated.
    pub unrated_events: Vec<(String, u8)>,
    /// Events whose post-stimulus window contains no EEG samples at all.
    pub empty_windows: Vec<(String, u8)>,
    /// Channels with no present reading anywhere in the trace.
    pub missing_channels: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.unrated_events.is_empty()
            && self.empty_windows.is_empty()
            && self.missing_channels.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "ok");
        }
        for (image, level) in &self.unrated_events {
            writeln!(f, "unrated event: {image} level {level}")?;
        }
        for (image, level) in &self.empty_windows {
            writeln!(f, "no EEG samples in window: {image} level {level}")?;
        }
        for channel in &self.missing_channels {
            writeln!(f, "channel entirely missing: {channel}")?;
        }
        Ok(())
    }
}

/// Report-only consistency check of one session.
pub fn validate_session(session: &SubjectSession) -> ValidationReport {
    let mut report = ValidationReport::default();

    for event in &session.events {
        if session.rating_for(event).is_none() {
            report.unrated_events.push((event.image_id.clone(), event.level));
        }
        if !session.trace.is_empty() {
            let in_window = session
                .trace
                .iter()
                .any(|s| s.t >= event.t_start && s.t <= event.t_start + WINDOW_MS);
            if !in_window {
                report.empty_windows.push((event.image_id.clone(), event.level));
            }
        }
    }

    if !session.trace.is_empty() {
        for channel in 0..CHANNEL_COUNT {
            if session.trace.iter().all(|s| s.bands[channel].is_none()) {
                report.missing_channels.push(channel_name(channel));
            }
        }
    }

    report
}

/// Write sessions back to the ratings CSV schema (inverse of
/// [`ingest_ratings`] up to row order: subjects sorted, events in order).
pub fn write_ratings_csv(sessions: &[SubjectSession], mut w: impl Write) -> Result<()> {
    let io_err = |source| CoreError::Io { path: "<ratings csv>".into(), source };
    writeln!(w, "subject_id,image_id,level,rating,t_start_ms").map_err(io_err)?;
    for session in sessions {
        for event in &session.events {
            let Some(rating) = session.rating_for(event) else { continue };
            writeln!(
                w,
                "{},{},{},{},{}",
                session.subject_id, event.image_id, event.level, rating.q, event.t_start
            )
            .map_err(io_err)?;
        }
    }
    Ok(())
}

/// Write a trace back to the EEG CSV schema (inverse of [`ingest_eeg`]).
pub fn write_eeg_csv(trace: &[EEGSample], mut w: impl Write) -> Result<()> {
    let io_err = |source| CoreError::Io { path: "<eeg csv>".into(), source };
    let names: Vec<String> = (0..CHANNEL_COUNT).map(channel_name).collect();
    writeln!(w, "t_ms,{}", names.join(",")).map_err(io_err)?;
    for sample in trace {
        write!(w, "{}", sample.t).map_err(io_err)?;
        for band in &sample.bands {
            match band {
                Some(v) => write!(w, ",{v}").map_err(io_err)?,
                None => write!(w, ",").map_err(io_err)?,
            }
        }
        writeln!(w).map_err(io_err)?;
    }
    Ok(())
}

/// Write a quality map back to the table CSV schema (inverse of
/// [`ingest_brisque_table`]).
pub fn write_brisque_csv(map: &BrisqueMap, mut w: impl Write) -> Result<()> {
    let io_err = |source| CoreError::Io { path: "<brisque csv>".into(), source };
    writeln!(w, "image_id,level,brisque").map_err(io_err)?;
    for ((image_id, level), value) in map {
        writeln!(w, "{image_id},{level},{}", value.value).map_err(io_err)?;
    }
    Ok(())
}
