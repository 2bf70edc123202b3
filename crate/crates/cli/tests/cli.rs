//! Behavioral tests of the `arqoe` binary: output layouts, exit codes,
//! and the synthetic-data round trip.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use arqoe_core::session::{
    ingest_brisque_table, ingest_eeg, ingest_ratings, validate_session, CHANNEL_COUNT,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arqoe"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).unwrap()
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).unwrap()
}

fn photo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .join("brisque/fixtures/photos")
        .join(name)
}

/// Generate a synthetic dataset into `dir` and return the ratings and
/// catalog paths.
fn synthesize(dir: &Path, config: &str) -> (PathBuf, PathBuf) {
    let config_path = dir.join("config.json");
    fs::write(&config_path, config).unwrap();
    let output = run(&[
        "synth",
        config_path.to_str().unwrap(),
        dir.join("data").to_str().unwrap(),
    ]);
    assert!(output.status.success(), "synth failed: {}", stderr(&output));
    (dir.join("data/ratings.csv"), dir.join("data/brisque.csv"))
}

#[test]
fn brisque_prints_one_finite_score() {
    let output = run(&["brisque", photo("chelsea.png").to_str().unwrap()]);
    assert!(output.status.success());
    let score: f64 = stdout(&output).trim().parse().unwrap();
    assert!(score.is_finite());
    assert!((0.0..=100.0).contains(&score), "score {score}");
}

#[test]
fn brisque_features_flag_prints_36_numbers() {
    let output =
        run(&["brisque", photo("rocket_q50.jpg").to_str().unwrap(), "--features"]);
    assert!(output.status.success());
    let text = stdout(&output);
    let numbers: Vec<f64> =
        text.trim().split(',').map(|field| field.parse().unwrap()).collect();
    assert_eq!(numbers.len(), 36);
}

#[test]
fn brisque_missing_model_file_exits_2() {
    let output = run(&[
        "brisque",
        photo("chelsea.png").to_str().unwrap(),
        "--model",
        "/nonexistent/model.txt",
        "--range",
        "/nonexistent/range.txt",
    ]);
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr(&output));
}

#[test]
fn scores_table_matches_the_class_rule() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, _) = synthesize(
        dir.path(),
        "{\"subjects\": 4, \"seed\": 1, \"rating_rule\": \"class_map\"}",
    );
    let out = dir.path().join("mos_dmos.csv");
    let output =
        run(&["scores", ratings.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));

    let table = fs::read_to_string(&out).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("image_id,level,mos,dmos"));
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let level: u8 = fields[1].parse().unwrap();
        let mos: f64 = fields[2].parse().unwrap();
        let expected = f64::from((6 - level).clamp(1, 5));
        assert_eq!(mos, expected, "line {line}");
        if level == 0 {
            assert!(fields[3].is_empty(), "level 0 must have no differential score");
        } else {
            assert_eq!(fields[3].parse::<f64>().unwrap(), expected, "line {line}");
        }
        rows += 1;
    }
    assert_eq!(rows, 36);
}

#[test]
fn scores_missing_reference_exits_1_and_names_the_subject() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, _) = synthesize(dir.path(), "{\"subjects\": 2, \"seed\": 2}");
    let kept: String = fs::read_to_string(&ratings)
        .unwrap()
        .lines()
        .filter(|line| !line.starts_with("s02,img03,0"))
        .collect::<Vec<_>>()
        .join("\n");
    let pruned = dir.path().join("pruned.csv");
    fs::write(&pruned, kept).unwrap();

    let out = dir.path().join("mos_dmos.csv");
    let output =
        run(&["scores", pruned.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let message = stderr(&output);
    assert!(message.contains("s02"), "stderr: {message}");
}

#[test]
fn scores_on_empty_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("mos_dmos.csv");
    let output =
        run(&["scores", empty.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr(&output));
}

#[test]
fn correlate_exact_line_gives_minus_one_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, brisque) = synthesize(dir.path(), "{\"subjects\": 3, \"seed\": 3}");
    let output = run(&["correlate", ratings.to_str().unwrap(), brisque.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));

    let text = stdout(&output);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("image,vs_level,vs_brisque"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 7, "one pooled row plus one per image");
    assert!(rows[0].starts_with("all,"));
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        for cell in &fields[1..] {
            let r: f64 = cell.parse().unwrap();
            assert!((r + 1.0).abs() < 1e-9, "row {row}");
        }
    }
}

#[test]
fn correlate_constant_ratings_print_na_cells() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let brisque = dir.path().join("brisque.csv");
    let mut rating_rows = String::from("subject_id,image_id,level,rating,t_start_ms\n");
    let mut brisque_rows = String::from("image_id,level,brisque\n");
    for level in 0..=3 {
        for subject in ["s01", "s02"] {
            rating_rows.push_str(&format!(
                "{subject},img01,{level},3,{}\n",
                i64::from(level) * 15_000
            ));
        }
        brisque_rows.push_str(&format!("img01,{level},{}\n", 10 + 20 * level));
    }
    fs::write(&ratings, rating_rows).unwrap();
    fs::write(&brisque, brisque_rows).unwrap();

    let output = run(&["correlate", ratings.to_str().unwrap(), brisque.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr(&output));
    let text = stdout(&output);
    assert_eq!(text.lines().nth(1), Some("all,n/a,n/a"));
    assert_eq!(text.lines().nth(2), Some("img01,n/a,n/a"));
}

#[test]
fn iqx_flat_ratings_fit_with_zero_residual_and_monotone_curve() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let brisque = dir.path().join("brisque.csv");
    let mut rating_rows = String::from("subject_id,image_id,level,rating,t_start_ms\n");
    let mut brisque_rows = String::from("image_id,level,brisque\n");
    for level in 0..=4 {
        rating_rows.push_str(&format!("s01,img01,{level},3,{}\n", i64::from(level) * 15_000));
        brisque_rows.push_str(&format!("img01,{level},{}\n", 5 + 17 * level));
    }
    fs::write(&ratings, rating_rows).unwrap();
    fs::write(&brisque, brisque_rows).unwrap();

    let curve = dir.path().join("curve.csv");
    let output = run(&[
        "iqx",
        ratings.to_str().unwrap(),
        brisque.to_str().unwrap(),
        "--out",
        curve.to_str().unwrap(),
        "--samples",
        "40",
    ]);
    assert!(output.status.success(), "{}", stderr(&output));

    let text = stdout(&output);
    let residual_line = text.lines().find(|l| l.starts_with("residual")).unwrap();
    let residual: f64 = residual_line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!(residual < 1e-9, "flat ratings should fit exactly, residual {residual}");

    let curve_text = fs::read_to_string(&curve).unwrap();
    let mut lines = curve_text.lines();
    assert_eq!(lines.next(), Some("qos,qoe"));
    let xs: Vec<f64> =
        lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(xs.len(), 40);
    assert!(xs.windows(2).all(|w| w[0] < w[1]), "curve x column must ascend");
}

#[test]
fn predict_per_image_writes_one_summary_row_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, brisque) = synthesize(dir.path(), "{\"subjects\": 3, \"seed\": 4}");
    let out_dir = dir.path().join("out");
    let output = run(&[
        "predict",
        ratings.to_str().unwrap(),
        brisque.to_str().unwrap(),
        "--method",
        "linear",
        "--degree",
        "2",
        "--group",
        "per_image",
        "--seed",
        "5",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));

    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 7, "header plus six image rows:\n{summary}");
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1], "linear");
        assert_eq!(fields[3], "1", "noiseless rows must reach a perfect score: {line}");
        assert!(out_dir.join(format!("scatter_{}.csv", fields[0])).exists());
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 6);
}

#[test]
fn predict_seed_env_variable_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, brisque) = synthesize(dir.path(), "{\"subjects\": 2, \"seed\": 5}");

    let flag_dir = dir.path().join("flag");
    let output = run(&[
        "predict",
        ratings.to_str().unwrap(),
        brisque.to_str().unwrap(),
        "--seed",
        "321",
        "--out-dir",
        flag_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr(&output));

    let env_dir = dir.path().join("env");
    let output = bin()
        .args([
            "predict",
            ratings.to_str().unwrap(),
            brisque.to_str().unwrap(),
            "--out-dir",
            env_dir.to_str().unwrap(),
        ])
        .env("QOE_SEED", "321")
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr(&output));

    assert_eq!(
        fs::read(flag_dir.join("report.json")).unwrap(),
        fs::read(env_dir.join("report.json")).unwrap()
    );
}

#[test]
fn predict_rejects_malformed_seed_variable() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, brisque) = synthesize(dir.path(), "{\"subjects\": 2, \"seed\": 6}");
    let output = bin()
        .args([
            "predict",
            ratings.to_str().unwrap(),
            brisque.to_str().unwrap(),
            "--out-dir",
            dir.path().join("out").to_str().unwrap(),
        ])
        .env("QOE_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr(&output));
    assert!(stderr(&output).contains("QOE_SEED"));
}

#[test]
fn predict_eeg_source_needs_the_trace_directory() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, brisque) = synthesize(dir.path(), "{\"subjects\": 2, \"seed\": 7}");

    let output = run(&[
        "predict",
        ratings.to_str().unwrap(),
        brisque.to_str().unwrap(),
        "--source",
        "eegz",
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1), "stderr: {}", stderr(&output));

    let hollow = dir.path().join("hollow");
    fs::create_dir(&hollow).unwrap();
    let output = run(&[
        "predict",
        ratings.to_str().unwrap(),
        brisque.to_str().unwrap(),
        "--source",
        "eegz",
        "--eeg-dir",
        hollow.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr(&output));
}

#[test]
fn synth_output_round_trips_through_every_ingestor() {
    let dir = tempfile::tempdir().unwrap();
    let (ratings, brisque) = synthesize(dir.path(), "{}");

    let sessions = ingest_ratings(File::open(&ratings).unwrap()).unwrap();
    assert_eq!(sessions.len(), 5);
    let catalog = ingest_brisque_table(File::open(&brisque).unwrap()).unwrap();
    assert_eq!(catalog.len(), 36);

    for session in sessions {
        let trace_path =
            dir.path().join("data/eeg").join(format!("{}.csv", session.subject_id));
        let trace = ingest_eeg(File::open(&trace_path).unwrap()).unwrap();
        let session = session.with_trace(trace);
        let report = validate_session(&session);
        assert!(report.is_empty(), "{}: {report}", session.subject_id);
    }
}

#[test]
fn synth_dropout_leaves_the_requested_fraction_absent() {
    let dir = tempfile::tempdir().unwrap();
    synthesize(
        dir.path(),
        "{\"subjects\": 2, \"seed\": 8, \"eeg\": {\"dropout\": 0.2}}",
    );

    let mut absent = 0usize;
    let mut total = 0usize;
    for subject in ["s01", "s02"] {
        let trace_path = dir.path().join("data/eeg").join(format!("{subject}.csv"));
        let trace = ingest_eeg(File::open(&trace_path).unwrap()).unwrap();
        for sample in &trace {
            total += CHANNEL_COUNT;
            absent += sample.bands.iter().filter(|b| b.is_none()).count();
        }
    }
    let fraction = absent as f64 / total as f64;
    assert!(total > 100_000, "need a large trace for a tight estimate, got {total}");
    assert!((fraction - 0.2).abs() <= 0.02, "absent fraction {fraction}");
}
