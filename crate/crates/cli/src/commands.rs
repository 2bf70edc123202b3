//! Implementations of the `arqoe` subcommands.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;

use arqoe_core::pipeline::{evaluate, EvaluationReport, PredictionSpec, Source};
use arqoe_core::scores::{dmos_single, mos, pearson};
use arqoe_core::session::{
    ingest_brisque_table, ingest_eeg, ingest_ratings, write_brisque_csv, write_eeg_csv,
    write_ratings_csv, BrisqueMap, Rating, SubjectSession,
};
use arqoe_core::synth::{generate, SynthConfig};
use arqoe_core::{regress, CoreError};
use brisque::{extract_features, GrayImage, SvrModel};

use crate::{BrisqueArgs, CorrelateArgs, IqxArgs, PredictArgs, ScoresArgs, SynthArgs};

pub fn brisque(args: BrisqueArgs) -> anyhow::Result<()> {
    let image = GrayImage::open(&args.image)?;
    let features = extract_features(&image)?;
    if args.features {
        let line: Vec<String> = features.values().iter().map(f64::to_string).collect();
        println!("{}", line.join(","));
        return Ok(());
    }
    let model = match (&args.model, &args.range) {
        (Some(model), Some(range)) => SvrModel::load_files(model, range)?,
        _ => SvrModel::bundled()?,
    };
    println!("{}", model.score(&features).value);
    Ok(())
}

pub fn scores(args: ScoresArgs) -> anyhow::Result<()> {
    let sessions = open_ratings(&args.ratings)?;
    let ratings = all_ratings(&sessions);
    let mos_table = mos(&ratings);
    let dmos_table = arqoe_core::scores::dmos(&ratings)?;

    let mut out = create_bufwriter(&args.out)?;
    writeln!(out, "image_id,level,mos,dmos")?;
    for ((image_id, level), entry) in &mos_table {
        let dmos_cell = dmos_table
            .get(&(image_id.clone(), *level))
            .map(|e| e.mean.to_string())
            .unwrap_or_default();
        writeln!(out, "{image_id},{level},{},{dmos_cell}", entry.mean)?;
    }
    out.flush()?;
    println!("wrote {} rows to {}", mos_table.len(), args.out.display());
    Ok(())
}

/// Correlation cell: the coefficient, or `n/a` when it is undefined
/// (constant inputs or too few points).
fn correlation_cell(x: &[f64], y: &[f64]) -> anyhow::Result<String> {
    match pearson(x, y) {
        Ok(r) => Ok(r.to_string()),
        Err(CoreError::UndefinedCorrelation(_)) | Err(CoreError::TooFewRows { .. }) => {
            Ok("n/a".to_string())
        }
        Err(other) => Err(other.into()),
    }
}

pub fn correlate(args: CorrelateArgs) -> anyhow::Result<()> {
    let sessions = open_ratings(&args.ratings)?;
    let map = open_brisque(&args.brisque)?;
    let ratings = all_ratings(&sessions);

    // One point per impaired-level rating: (level, quality value, score).
    // The unimpaired originals are the hidden references, not rated
    // stimuli, so they stay out of both correlation variants.
    let references = reference_ratings(&ratings);
    let mut points: BTreeMap<&str, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for r in &ratings {
        if r.level == 0 {
            continue;
        }
        let value = lookup_brisque(&map, &r.image_id, r.level)?;
        let score = if args.differential {
            let q_ref = *references
                .get(&(r.subject_id.as_str(), r.image_id.as_str()))
                .ok_or_else(|| CoreError::MissingReference {
                    subject_id: r.subject_id.clone(),
                    image_id: r.image_id.clone(),
                })?;
            dmos_single(r.q, q_ref)?
        } else {
            f64::from(r.q)
        };
        points
            .entry(r.image_id.as_str())
            .or_default()
            .push((f64::from(r.level), value, score));
    }

    println!("image,vs_level,vs_brisque");
    let pooled: Vec<(f64, f64, f64)> = points.values().flatten().copied().collect();
    for (label, group) in
        std::iter::once(("all", &pooled)).chain(points.iter().map(|(k, v)| (*k, v)))
    {
        let levels: Vec<f64> = group.iter().map(|p| p.0).collect();
        let values: Vec<f64> = group.iter().map(|p| p.1).collect();
        let scores: Vec<f64> = group.iter().map(|p| p.2).collect();
        println!(
            "{label},{},{}",
            correlation_cell(&levels, &scores)?,
            correlation_cell(&values, &scores)?
        );
    }
    Ok(())
}

pub fn iqx(args: IqxArgs) -> anyhow::Result<()> {
    if args.samples < 2 {
        anyhow::bail!("--samples must be at least 2");
    }
    let sessions = open_ratings(&args.ratings)?;
    let map = open_brisque(&args.brisque)?;
    let ratings = all_ratings(&sessions);

    // Mean opinion score per displayed (image, level) against its
    // quality value, original level included.
    let mut qos = Vec::new();
    let mut qoe = Vec::new();
    for ((image_id, level), entry) in &mos(&ratings) {
        qos.push(lookup_brisque(&map, image_id, *level)?);
        qoe.push(entry.mean);
    }

    let model = regress::fit_iqx(&qos, &qoe)?;
    println!("alpha {}", model.alpha);
    println!("beta {}", model.beta);
    println!("gamma {}", model.gamma);
    println!("residual {}", model.residual);
    println!("iterations {}", model.iterations);

    let (lo, hi) = qos
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut out = create_bufwriter(&args.out)?;
    writeln!(out, "qos,qoe")?;
    for k in 0..args.samples {
        let x = lo + (hi - lo) * k as f64 / (args.samples - 1) as f64;
        writeln!(out, "{x},{}", model.evaluate(x))?;
    }
    out.flush()?;
    println!("wrote {} curve samples to {}", args.samples, args.out.display());
    Ok(())
}

pub fn predict(args: PredictArgs) -> anyhow::Result<()> {
    if let Some(workers) = args.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("worker pool already initialized")?;
    }

    let mut spec = PredictionSpec {
        source: args.source.into(),
        target: args.target.into(),
        method: args.method.into(),
        degree: args.degree,
        seed: resolve_seed(args.seed)?,
        lambda: args.lambda,
        ..PredictionSpec::default()
    };
    if let Some(v) = args.stage1_min {
        spec.stage1_min = v;
    }
    if let Some(v) = args.stage1_max {
        spec.stage1_max = v;
    }
    if let Some(v) = args.stage2_min {
        spec.stage2_min = v;
    }
    if let Some(v) = args.stage2_max {
        spec.stage2_max = v;
    }
    spec.validate()?;

    let mut sessions = open_ratings(&args.ratings)?;
    let map = open_brisque(&args.brisque)?;
    if spec.source != Source::Brisque {
        let dir = args
            .eeg_dir
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("the {:?} source needs --eeg-dir", spec.source))?;
        sessions = sessions
            .into_iter()
            .map(|session| {
                let path = dir.join(format!("{}.csv", session.subject_id));
                let file = File::open(&path)
                    .map_err(|source| CoreError::Io { path: path.clone(), source })?;
                let trace = ingest_eeg(file)?;
                Ok(session.with_trace(trace))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
    }

    let outcome = evaluate(&sessions, &map, &spec, args.group.into())?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let report_path = args.out_dir.join("report.json");
    let mut report_file = create_bufwriter(&report_path)?;
    serde_json::to_writer_pretty(&mut report_file, &outcome)?;
    report_file.write_all(b"\n")?;
    report_file.flush()?;

    let summary_path = args.out_dir.join("summary.csv");
    write_summary(&summary_path, &outcome.reports, args.per_run_medae)?;

    for report in &outcome.reports {
        let name = format!("scatter_{}.csv", sanitize(&report.group));
        let mut out = create_bufwriter(&args.out_dir.join(&name))?;
        writeln!(out, "actual,predicted")?;
        for (actual, predicted) in report.scatter.iter().flatten() {
            writeln!(out, "{actual},{predicted}")?;
        }
        out.flush()?;
    }

    for report in &outcome.reports {
        println!(
            "{}: rows {} runs {}+{} r2 {} converged {}",
            report.group,
            report.rows,
            report.stage1.runs_executed,
            report.stage2.runs_executed,
            cell(report.metrics.r2),
            report.stage1.converged && report.stage2.converged,
        );
    }
    for skipped in &outcome.skipped {
        println!("{}: skipped ({})", skipped.group, skipped.reason);
    }
    println!(
        "wrote report.json, summary.csv, and {} scatter files to {}",
        outcome.reports.len(),
        args.out_dir.display()
    );
    Ok(())
}

pub fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let config: SynthConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    let data = generate(&config)?;

    fs::create_dir_all(args.out_dir.join("eeg"))
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut ratings_file = create_bufwriter(&args.out_dir.join("ratings.csv"))?;
    write_ratings_csv(&data.sessions, &mut ratings_file)?;
    ratings_file.flush()?;
    let mut brisque_file = create_bufwriter(&args.out_dir.join("brisque.csv"))?;
    write_brisque_csv(&data.brisque, &mut brisque_file)?;
    brisque_file.flush()?;
    for session in &data.sessions {
        let path = args.out_dir.join("eeg").join(format!("{}.csv", session.subject_id));
        let mut out = create_bufwriter(&path)?;
        write_eeg_csv(&session.trace, &mut out)?;
        out.flush()?;
    }

    let rated: usize = data.sessions.iter().map(|s| s.ratings.len()).sum();
    println!(
        "wrote {} subjects, {} ratings, {} catalog entries to {}",
        data.sessions.len(),
        rated,
        data.brisque.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn open_ratings(path: &Path) -> anyhow::Result<Vec<SubjectSession>> {
    let file = File::open(path).map_err(|source| CoreError::Io { path: path.into(), source })?;
    Ok(ingest_ratings(file)?)
}

fn open_brisque(path: &Path) -> anyhow::Result<BrisqueMap> {
    let file = File::open(path).map_err(|source| CoreError::Io { path: path.into(), source })?;
    Ok(ingest_brisque_table(file)?)
}

fn create_bufwriter(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let file =
        File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn all_ratings(sessions: &[SubjectSession]) -> Vec<Rating> {
    sessions.iter().flat_map(|s| s.ratings.iter().cloned()).collect()
}

/// Each subject's level-0 rating per image.
fn reference_ratings(ratings: &[Rating]) -> BTreeMap<(&str, &str), u8> {
    ratings
        .iter()
        .filter(|r| r.level == 0)
        .map(|r| ((r.subject_id.as_str(), r.image_id.as_str()), r.q))
        .collect()
}

fn lookup_brisque(map: &BrisqueMap, image_id: &str, level: u8) -> anyhow::Result<f64> {
    Ok(map
        .get(&(image_id.to_string(), level))
        .ok_or_else(|| CoreError::MissingBrisque { image_id: image_id.to_string(), level })?
        .value)
}

/// Seed precedence: flag, then $QOE_SEED, then 0.
fn resolve_seed(flag: Option<u64>) -> anyhow::Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("QOE_SEED") {
        Ok(text) => text
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("QOE_SEED must be an unsigned integer, got {text:?}")),
        Err(_) => Ok(0),
    }
}

fn cell(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_else(|| "n/a".to_string())
}

/// Median absolute error of (actual, predicted) pairs; even counts
/// average the two middle values.
fn median_abs_err(pairs: &[(f64, f64)]) -> f64 {
    let mut abs: Vec<f64> = pairs.iter().map(|(a, p)| (a - p).abs()).collect();
    abs.sort_by(f64::total_cmp);
    if abs.len() % 2 == 1 {
        abs[abs.len() / 2]
    } else {
        (abs[abs.len() / 2 - 1] + abs[abs.len() / 2]) / 2.0
    }
}

fn write_summary(
    path: &Path,
    reports: &[EvaluationReport],
    per_run_medae: bool,
) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_writer(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    writer.write_record(["group", "method", "degree", "r2", "mse", "mae", "medae", "n1", "n2", "converged"])?;
    for report in reports {
        let method = match report.spec.method {
            arqoe_core::pipeline::Method::Linear => "linear",
            arqoe_core::pipeline::Method::BoundLinear => "bound_linear",
            arqoe_core::pipeline::Method::Logistic => "logistic",
        };
        let medae = if per_run_medae {
            let runs = report.scatter.len() as f64;
            report.scatter.iter().map(|pairs| median_abs_err(pairs)).sum::<f64>() / runs
        } else {
            report.metrics.medae
        };
        writer.write_record([
            report.group.clone(),
            method.to_string(),
            report.spec.degree.to_string(),
            cell(report.metrics.r2),
            report.metrics.mse.to_string(),
            report.metrics.mae.to_string(),
            medae.to_string(),
            report.stage1.runs_executed.to_string(),
            report.stage2.runs_executed.to_string(),
            (report.stage1.converged && report.stage2.converged).to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Group labels double as file-name fragments; keep them safe.
fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_keeps_safe_characters_and_replaces_the_rest() {
        assert_eq!(sanitize("img01"), "img01");
        assert_eq!(sanitize("a/b c"), "a_b_c");
        assert_eq!(sanitize("x.y-z_0"), "x.y-z_0");
    }

    #[test]
    fn median_of_even_pair_count_averages_the_middle() {
        let pairs = [(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (10.0, 0.0)];
        assert_eq!(median_abs_err(&pairs), 2.5);
    }

    #[test]
    fn seed_flag_wins_over_environment() {
        assert_eq!(resolve_seed(Some(7)).unwrap(), 7);
    }
}
