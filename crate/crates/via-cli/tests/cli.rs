//! End-to-end tests of the `via` binary: exit codes, strict config
//! handling, output formats, and CSV/JSON agreement.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn via() -> Command {
    Command::new(env!("CARGO_BIN_EXE_via"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn base_config() -> String {
    r#"
        [grid]
        p = { min = 0.2, max = 0.4, step = 0.2 }
        q = { min = 0.3, max = 0.3, step = 0.1 }
        p_s = [0.8]

        [[policies]]
        kind = "randomized-stationary"
        p_sample = 0.5

        [[policies]]
        kind = "change-aware"

        [[policies]]
        kind = "semantics-aware"

        [simulation]
        slots = 400000
        seed = 1

        [optimization]
        eta = 0.5
        e_max = 0.5
        delta = 0.1
    "#
    .to_string()
}

fn run_ok(output: &Output) {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

#[test]
fn validate_clean_grid_exits_zero() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    let output = via()
        .args(["validate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    run_ok(&output);
    let report = fs::read_to_string(out.join("validate.txt")).unwrap();
    assert!(report.contains("PASS"));
    assert!(!report.contains("FAIL"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("validate.json")).unwrap()).unwrap();
    assert_eq!(sidecar["schema_version"], 1);
    assert_eq!(sidecar["summary"]["failed"], 0);
}

#[test]
fn corrupted_cell_fails_with_named_cell() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    let output = via()
        .args(["validate", "--corrupt-one-cell", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let report = fs::read_to_string(out.join("validate.txt")).unwrap();
    // The corrupted cell is the first one (p = 0.2); it must be named, and
    // no other cell may be flagged.
    let failing: Vec<&str> = report.lines().filter(|l| l.starts_with("FAIL")).collect();
    assert!(!failing.is_empty());
    assert!(failing.iter().all(|l| l.contains("p=0.2 q=0.3")));
}

#[test]
fn unknown_config_key_is_exit_two() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        &base_config().replace("seed = 1", "seed = 1\ntypo_key = 3"),
    );
    let output = via()
        .args(["sweep", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("typo_key"), "{stderr}");
}

#[test]
fn missing_config_file_is_exit_two() {
    let output = via()
        .args(["sweep", "--config", "/nonexistent/config.toml"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn empty_grid_yields_header_only_csv() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &base_config().replace("p_s = [0.8]", "p_s = []"));
    let out = dir.path().join("out");
    let output = via()
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    run_ok(&output);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("p,q,p_s,"));
    assert_eq!(lines.next(), None);
}

#[test]
fn degenerate_cells_are_skipped_with_warning() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        &base_config().replace(
            "p = { min = 0.2, max = 0.4, step = 0.2 }",
            "p = { min = 0.0, max = 0.2, step = 0.2 }",
        ),
    );
    let out = dir.path().join("out");
    let output = via()
        .args(["validate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    run_ok(&output);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("degenerate"), "{stderr}");
}

#[test]
fn sweep_csv_rows_match_json_rows() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &base_config());
    let out = dir.path().join("out");
    run_ok(
        &via()
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );

    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep.json")).unwrap()).unwrap();
    let json_rows = sidecar["rows"].as_array().unwrap();

    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let mut csv_rows = 0;
    for (line, json_row) in lines.zip(json_rows) {
        csv_rows += 1;
        for (name, cell) in header.iter().zip(line.split(',')) {
            let json_value = &json_row[*name];
            if cell.is_empty() {
                assert!(json_value.is_null(), "{name}: empty CSV vs {json_value}");
            } else if let Ok(parsed) = cell.parse::<f64>() {
                assert_eq!(
                    parsed,
                    json_value.as_f64().unwrap(),
                    "{name}: CSV {cell} vs JSON {json_value}"
                );
            } else {
                assert_eq!(cell, json_value.as_str().unwrap(), "{name}");
            }
        }
    }
    assert_eq!(csv_rows, json_rows.len());
    assert!(csv_rows > 0);
}

#[test]
fn sweep_cost_and_rel_diff_columns() {
    let dir = TempDir::new().unwrap();
    // Two cells with known sampling costs at delta = 0.1: the randomized
    // policy costs 0.05 everywhere, change-aware 0.1 * 2pq/(p+q).
    let config = write_config(
        dir.path(),
        &base_config()
            .replace("p = { min = 0.2, max = 0.4, step = 0.2 }", "p = { min = 0.3, max = 0.45, step = 0.15 }")
            .replace("q = { min = 0.3, max = 0.3, step = 0.1 }", "q = { min = 0.45, max = 0.45, step = 0.1 }"),
    );
    let out = dir.path().join("out");
    run_ok(
        &via()
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in lines {
        let row: Vec<&str> = line.split(',').collect();
        let p: f64 = row[col("p")].parse().unwrap();
        let q: f64 = row[col("q")].parse().unwrap();
        let rs_cost: f64 = row[col("rs_cost")].parse().unwrap();
        assert!((rs_cost - 0.05).abs() < 1e-12);
        let ca_cost: f64 = row[col("ca_cost")].parse().unwrap();
        assert!((ca_cost - 0.1 * 2.0 * p * q / (p + q)).abs() < 1e-12);
        // Closed form and simulation sit within a few percent of each other.
        let rel: f64 = row[col("rs_avg_via_rel_diff")].parse().unwrap();
        assert!(rel < 0.05, "rel diff {rel}");
        // No closed-form lag for the semantics-aware policy.
        assert!(row[col("sa_avg_via_closed")].is_empty());
        assert!(row[col("sa_avg_via_rel_diff")].is_empty());
    }
    // The p = q = 0.45 cell pays 0.045 under change-aware sampling, above
    // the 0.02 a budget-capped randomized policy at eta = 0.2 would pay.
    assert!(csv
        .lines()
        .any(|l| l.starts_with("4.50000000000e-1,4.50000000000e-1,")
            && l.contains("4.50000000000e-2")));
}

#[test]
fn optimize_reproduces_threshold_region_example() {
    let dir = TempDir::new().unwrap();
    // p = q = 0.3, p_s = 0.7: the comparison threshold 0.588 exceeds the cap
    // 0.5, so change-aware wins the cell.
    let config = write_config(
        dir.path(),
        &base_config()
            .replace("p = { min = 0.2, max = 0.4, step = 0.2 }", "p = { min = 0.3, max = 0.3, step = 0.1 }")
            .replace("p_s = [0.8]", "p_s = [0.7]"),
    );
    let out = dir.path().join("out");
    run_ok(
        &via()
            .args(["optimize", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    let csv = fs::read_to_string(out.join("optimize.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let get = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(get("status"), "optimal");
    assert_eq!(get("p_star").parse::<f64>().unwrap(), 0.5);
    let ca_via = get("ca_avg_via").parse::<f64>().unwrap();
    assert!((ca_via - 3.0 / 7.0).abs() < 1e-11);
    let threshold = get("rs_beats_ca_threshold").parse::<f64>().unwrap();
    assert!((threshold - 0.18 / 0.306).abs() < 1e-11);
    assert_eq!(get("via_winner"), "ca");
    assert_eq!(get("via_winner_budgeted"), "ca");
}

#[test]
fn optimize_requires_optimization_section() {
    let dir = TempDir::new().unwrap();
    let body = base_config();
    let trimmed = body.split("[optimization]").next().unwrap().to_string();
    let config = write_config(dir.path(), &trimmed);
    let output = via()
        .args(["optimize", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn infeasible_cells_are_labeled() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        &base_config()
            .replace("p = { min = 0.2, max = 0.4, step = 0.2 }", "p = { min = 0.45, max = 0.45, step = 0.1 }")
            .replace("q = { min = 0.3, max = 0.3, step = 0.1 }", "q = { min = 0.45, max = 0.45, step = 0.1 }")
            .replace("p_s = [0.8]", "p_s = [0.5]")
            .replace("eta = 0.5", "eta = 0.2")
            .replace("e_max = 0.5", "e_max = 0.1"),
    );
    let out = dir.path().join("out");
    run_ok(
        &via()
            .args(["optimize", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    let csv = fs::read_to_string(out.join("optimize.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.contains("infeasible"));
    // No optimum: p_star and the achieved columns are empty.
    assert!(row.contains(",,"));
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path(), &base_config());
    let run_with_seed = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        run_ok(
            &via()
                .args(["sweep", "--seed", seed, "--config"])
                .arg(&config)
                .arg("--out")
                .arg(&out)
                .output()
                .unwrap(),
        );
        (
            fs::read_to_string(out.join("sweep.csv")).unwrap(),
            fs::read_to_string(out.join("sweep.json")).unwrap(),
        )
    };
    let (csv_a, json_a) = run_with_seed("500", "a");
    let (csv_b, _) = run_with_seed("501", "b");
    assert_ne!(csv_a, csv_b, "different seeds must change simulated columns");
    let sidecar: serde_json::Value = serde_json::from_str(&json_a).unwrap();
    assert_eq!(sidecar["seed_used"], 500);
}

#[test]
fn csv_only_format_skips_json() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        dir.path(),
        &format!("{}\n[output]\nformat = \"csv\"\n", base_config()),
    );
    let out = dir.path().join("out");
    run_ok(
        &via()
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap(),
    );
    assert!(out.join("sweep.csv").exists());
    assert!(!out.join("sweep.json").exists());
}
