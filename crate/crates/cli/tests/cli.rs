//! End-to-end runs of the binary against the deterministic backends.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn seqcon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqcon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = seqcon(args);
    assert!(
        out.status.success(),
        "seqcon {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn dir_arg(d: &Path) -> String {
    d.to_str().unwrap().to_string()
}

fn result_lines(d: &Path) -> Vec<Value> {
    std::fs::read_to_string(d.join("results.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// Rows of metrics.csv keyed by (length, base, variant, run).
fn metrics(d: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(d.join("metrics.csv")).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

const SMALL: &[&str] = &["--lengths", "4", "--runs", "2"];

#[test]
fn mine_reports_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dir_arg(tmp.path());
    let stdout = ok(&["mine", "-o", &o]);
    assert!(stdout.contains("199"), "{stdout}");
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("mine_summary.json")).unwrap()).unwrap();
    let text = summary.to_string();
    assert!(text.contains("199"));
    for l in [2, 3, 4] {
        let n = std::fs::read_to_string(tmp.path().join(format!("dataset_L{l}.jsonl")))
            .unwrap()
            .lines()
            .count();
        assert!(n > 0);
    }
    // 9 ambiguous + 399 unambiguous at length 4
    let l4 = std::fs::read_to_string(tmp.path().join("dataset_L4.jsonl")).unwrap();
    assert_eq!(l4.lines().skip(1).filter(|l| !l.trim().is_empty()).count(), 408);
}

#[test]
fn oracle_campaign_is_perfect_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dir_arg(tmp.path());
    let mut args = vec!["run", "-o", &o];
    args.extend_from_slice(SMALL);
    let first = ok(&args);
    let lines = result_lines(tmp.path());
    let n = lines.len() - 1;
    assert!(first.starts_with(&format!("{n} new results, 0 already")), "{first}");
    assert_eq!(lines[0]["schema"], "seqcon-results");

    let again = ok(&args);
    assert!(again.starts_with(&format!("0 new results, {n} already")), "{again}");
    assert_eq!(result_lines(tmp.path()).len(), n + 1);

    // a torn final line is dropped and redone
    let path = tmp.path().join("results.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = text.trim_end().rfind('\n').unwrap() + 20;
    std::fs::write(&path, &text[..cut]).unwrap();
    let resumed = ok(&args);
    assert!(resumed.starts_with("1 new results"), "{resumed}");
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);

    ok(&["analyze", "-o", &o]);
    for row in metrics(tmp.path()) {
        assert_eq!(&row[6], "100.0000", "explanation accuracy {row:?}");
        assert_eq!(&row[7], "100.0000", "completion accuracy {row:?}");
        assert_eq!(&row[9], "100.0000", "consistency {row:?}");
        assert_eq!(&row[11], "100.0000", "ambiguous consistency {row:?}");
    }
    let report = ok(&["report", "-o", &o]);
    assert!(report.contains("reference comparison"));
    assert!(tmp.path().join("report.txt").exists());
}

#[test]
fn identical_configs_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let o = dir_arg(d);
        let mut args = vec!["run", "-o", &o, "--backend", "random-valid", "--top-logprobs", "5", "--bases", "10,2"];
        args.extend_from_slice(SMALL);
        ok(&args);
        ok(&["analyze", "-o", &o]);
    }
    for f in ["results.jsonl", "metrics.csv", "alternatives.csv", "kl.csv", "analysis.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn changed_config_refuses_existing_results() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dir_arg(tmp.path());
    let mut args = vec!["run", "-o", &o];
    args.extend_from_slice(SMALL);
    ok(&args);
    args.extend_from_slice(&["--seed", "9"]);
    let out = seqcon(&args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("another campaign"));
}

#[test]
fn unknown_schema_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dir_arg(tmp.path());
    let mut args = vec!["run", "-o", &o];
    args.extend_from_slice(SMALL);
    ok(&args);
    let path = tmp.path().join("results.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("\"version\":1", "\"version\":2", 1)).unwrap();
    let out = seqcon(&["analyze", "-o", &o]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("version 2 unsupported"));
}

/// Fixtures recorded from an oracle audit log, with the completion for
/// 1, 2, 3, 4 switched to the other valid continuation.
fn scripted_fixtures(dir: &Path) -> Vec<Value> {
    let o = dir_arg(&dir.join("oracle"));
    ok(&[
        "run", "-o", &o, "--lengths", "4", "--max-sequences", "2", "--sequences", "ambiguous", "--runs", "1",
        "--tasks", "completion,explanation", "--audit-log", "audit.jsonl",
    ]);
    std::fs::read_to_string(dir.join("oracle/audit.jsonl"))
        .unwrap()
        .lines()
        .map(|l| {
            let a: Value = serde_json::from_str(l).unwrap();
            let q = a["query"].as_str().unwrap().to_string();
            let mut r = a["response"]["text"].as_str().unwrap().to_string();
            if q.starts_with("Complete") && q.ends_with("Sequence: 1, 2, 3, 4") {
                assert_eq!(r, "0");
                r = "5".into();
            }
            serde_json::json!({"query": q, "response": r})
        })
        .collect()
}

fn write_fixtures(path: &Path, f: &[Value]) {
    let text: String = f.iter().map(|v| v.to_string() + "\n").collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn scripted_campaign_matches_hand_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = scripted_fixtures(tmp.path());
    assert_eq!(fixtures.len(), 4);
    let fx = tmp.path().join("fixtures.jsonl");
    write_fixtures(&fx, &fixtures);
    let o = dir_arg(&tmp.path().join("scripted"));
    ok(&[
        "run", "-o", &o, "--lengths", "4", "--max-sequences", "2", "--sequences", "ambiguous", "--runs", "1",
        "--tasks", "completion,explanation", "--backend", "scripted", "--fixtures", fx.to_str().unwrap(),
    ]);
    ok(&["analyze", "-o", &o]);
    let rows = metrics(&tmp.path().join("scripted"));
    assert_eq!(rows.len(), 2);
    // 5 is a valid answer but does not follow from (x * 1) % (4+1); accuracy
    // is only scored on unambiguous sequences, of which there are none here
    for row in rows {
        assert_eq!(&row[6], "");
        assert_eq!(&row[7], "");
        assert_eq!(&row[9], "50.0000");
        assert_eq!(&row[10], "2");
        assert_eq!(&row[11], "50.0000");
    }
}

#[test]
fn missing_fixture_keeps_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut fixtures = scripted_fixtures(tmp.path());
    fixtures.retain(|f| !f["query"].as_str().unwrap().ends_with("Sequence: 1, 2, 3, 4") || f["query"].as_str().unwrap().starts_with("Complete"));
    let fx = tmp.path().join("fixtures.jsonl");
    write_fixtures(&fx, &fixtures);
    let o = dir_arg(&tmp.path().join("scripted"));
    let args = [
        "run", "-o", &o, "--lengths", "4", "--max-sequences", "2", "--sequences", "ambiguous", "--runs", "1",
        "--tasks", "completion,explanation", "--backend", "scripted", "--fixtures", fx.to_str().unwrap(),
    ];
    let out = seqcon(&args);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("results kept"), "{err}");
    let kept = result_lines(&tmp.path().join("scripted")).len() - 1;
    assert!(kept >= 2, "completions were written before the failure");

    // supplying the fixture completes the campaign without redoing anything
    write_fixtures(&fx, &scripted_fixtures(&tmp.path().join("again")));
    let done = ok(&args);
    assert!(done.starts_with(&format!("{} new results, {kept} already", 4 - kept)), "{done}");
}

#[test]
fn random_valid_consistency_tracks_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let o = dir_arg(tmp.path());
    ok(&[
        "run", "-o", &o, "--lengths", "2", "--runs", "3", "--backend", "random-valid",
        "--tasks", "completion,explanation",
    ]);
    ok(&["analyze", "-o", &o]);
    let mean = metrics(tmp.path()).into_iter().find(|r| &r[4] == "mean").unwrap();
    assert_eq!(&mean[6], "100.0000");
    let consistency: f64 = mean[11].parse().unwrap();
    let closed: f64 = mean[15].parse().unwrap();
    // 3 runs x 48 sequences; binomial sigma about 4.2 points
    assert!((consistency - closed).abs() < 13.0, "{consistency} vs {closed}");
}
