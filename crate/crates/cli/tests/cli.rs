//! End-to-end checks of the bergmanlab binary: exit codes, report files,
//! CSV format, determinism, and the sweep command.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bergmanlab"))
}

fn write_config(dir: &Path, name: &str, json: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

#[test]
fn validate_accepts_good_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_config(
        dir.path(),
        "good.json",
        r#"{"experiment":"geometry-identities","n":2,"samples":10}"#,
    );
    let status = bin().arg("validate").arg(&good).status().unwrap();
    assert!(status.success());

    let bad = write_config(
        dir.path(),
        "bad.json",
        r#"{"experiment":"hyperplane-identity","n":1,"d":1,"degree":4}"#,
    );
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let unparsable = write_config(dir.path(), "broken.json", "{ not json");
    let out = bin().arg("validate").arg(&unparsable).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn run_writes_report_and_returns_zero_on_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "geom.json",
        r#"{"experiment":"geometry-identities","n":2,"samples":50}"#,
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .arg("--threads")
        .arg("2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["payload"]["schema_version"], 1);
    assert_eq!(report["payload"]["experiment"], "geometry-identities");
    assert!(report["payload"]["verdicts"].as_array().unwrap().len() >= 4);
    assert!(report["payload"]["software"]["version"].is_string());

    // CSV: header row plus one data row in 17-significant-digit scientific form
    let csv = std::fs::read_to_string(
        out_dir.join("geometry-identities_identity-residuals.csv"),
    )
    .unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("kernel_identity,"));
    let data = lines.next().unwrap();
    for cell in data.split(',') {
        assert!(cell.contains('e'), "cell {cell} should be scientific");
        let mantissa = cell.split('e').next().unwrap();
        let digits = mantissa.chars().filter(|c| c.is_ascii_digit()).count();
        assert_eq!(digits, 17, "cell {cell} should carry 17 significant digits");
        assert!(cell.parse::<f64>().is_ok());
    }
}

#[test]
fn run_exit_code_two_when_a_verdict_fails() {
    let dir = tempfile::tempdir().unwrap();
    // an impossible tolerance forces a failing verdict
    let cfg = write_config(
        dir.path(),
        "fail.json",
        r#"{"experiment":"geometry-identities","n":2,"samples":50,"tolerance":1e-300}"#,
    );
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn run_exit_code_one_on_execution_error() {
    let out = bin().arg("run").arg("/nonexistent/config.json").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical_apart_from_timings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "geom.json",
        r#"{"experiment":"spectrum","n":2,"d":1,"degree":5}"#,
    );
    let mut payloads = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let status = bin()
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success());
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
                .unwrap();
        payloads.push(serde_json::to_vec(&report["payload"]).unwrap());
        // CSVs are fully deterministic
        let csv = std::fs::read(out_dir.join("spectrum_eigenvalues.csv")).unwrap();
        payloads.push(csv);
    }
    assert_eq!(payloads[0], payloads[2], "payloads differ between reruns");
    assert_eq!(payloads[1], payloads[3], "CSV differs between reruns");
}

#[test]
fn payload_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        r#"{
            "experiment":"spectrum","n":2,"d":1,"degree":6,
            "sweep":{"variable":"degree","values":[4,6]}
        }"#,
    );
    let mut payloads = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(threads);
        let status = bin()
            .arg("sweep")
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .arg("--threads")
            .arg(threads)
            .status()
            .unwrap();
        assert!(status.success());
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
                .unwrap();
        payloads.push(serde_json::to_vec(&report["payload"]).unwrap());
    }
    assert_eq!(payloads[0], payloads[1], "thread count changed the payload");
}

#[test]
fn seed_override_changes_sampled_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "geom.json",
        r#"{"experiment":"geometry-identities","n":2,"samples":50}"#,
    );
    let mut values = Vec::new();
    for seed in ["1", "2"] {
        let out_dir = dir.path().join(seed);
        let status = bin()
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .arg("--seed")
            .arg(seed)
            .status()
            .unwrap();
        assert!(status.success());
        values.push(
            std::fs::read_to_string(out_dir.join("geometry-identities_identity-residuals.csv"))
                .unwrap(),
        );
    }
    assert_ne!(values[0], values[1], "different seeds should sample differently");
}

#[test]
fn sweep_produces_rows_and_trend_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        r#"{
            "experiment":"spectrum","n":2,"d":1,"degree":4,
            "sweep":{
                "variable":"degree","values":[4,6,8],
                "trends":[{"table":"gap","column":"c_star","kind":"drift-below","tolerance":0.01}]
            }
        }"#,
    );
    let out_dir = dir.path().join("out");
    let out = bin()
        .arg("sweep")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let tables = report["payload"]["tables"].as_array().unwrap();
    let gap = tables
        .iter()
        .find(|t| t["name"] == "gap")
        .expect("gap sweep table");
    assert_eq!(gap["rows"].as_array().unwrap().len(), 3);
    assert_eq!(gap["columns"][0], "degree");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("trend-c_star-drift-below"));
}

#[test]
fn gram_single_point_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "gram1.json",
        r#"{"experiment":"gram-criterion","points":[[[0.3,0.1],[0.0,0.2]]],"single_samples":5}"#,
    );
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("configured-point-exact"));
}

#[test]
fn shipped_configs_validate() {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&configs).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().map(|e| e == "json").unwrap_or(false) {
            let status = bin().arg("validate").arg(&path).status().unwrap();
            assert!(status.success(), "shipped config {} must validate", path.display());
            count += 1;
        }
    }
    assert!(count >= 12, "expected the full config set, found {count}");
}

#[test]
fn threads_env_fallback_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "geom.json",
        r#"{"experiment":"geometry-identities","n":2,"samples":20}"#,
    );
    let status = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .env("BERGMANLAB_THREADS", "1")
        .status()
        .unwrap();
    assert!(status.success());
}

#[test]
fn tables_carry_operation_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "spec.json",
        r#"{"experiment":"spectrum","n":2,"d":1,"degree":5}"#,
    );
    let out_dir = dir.path().join("out");
    assert!(bin().arg("run").arg(&cfg).arg("--out").arg(&out_dir).status().unwrap().success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    for table in report["payload"]["tables"].as_array().unwrap() {
        let op = table["operation"].as_str().unwrap();
        assert!(!op.is_empty(), "table {} missing operation", table["name"]);
    }
    for verdict in report["payload"]["verdicts"].as_array().unwrap() {
        assert!(verdict["threshold"].is_number());
        assert!(!verdict["comparison"].as_str().unwrap().is_empty());
    }
}

#[test]
fn measure_file_interface_roundtrips_through_core() {
    // the documented measure interchange format: one JSON record per line
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mu.jsonl");
    std::fs::write(
        &path,
        concat!(
            "{\"type\":\"atom\",\"coords\":[[0.3,0.0],[0.0,0.1]],\"weight\":0.25}\n",
            "{\"type\":\"node\",\"coords\":[[0.1,-0.2],[0.0,0.0]],\"weight\":0.5}\n",
        ),
    )
    .unwrap();
    let mu = bergmanlab_core::measure::MeasureSpec::read_file(&path).unwrap();
    assert_eq!(mu.atoms().len(), 1);
    assert_eq!(mu.nodes().len(), 1);
    assert!((mu.total_mass() - 0.75).abs() < 1e-15);
}
