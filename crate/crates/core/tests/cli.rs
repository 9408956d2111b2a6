use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stabilyze"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    let out = dir.join("out");
    std::fs::write(
        &path,
        format!("{body}\n[output]\ndir = \"{}\"\n", out.display().to_string().replace('\\', "/")),
    )
    .unwrap();
    path
}

const SMALL_GRID: &str = "\
[spectrum]
kind = \"loggrid\"
alpha_min = 1.0
alpha_max = 1e6
count = 80

[scan]
lambda_points = 500
";

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> usize {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.headers().unwrap().iter().position(|h| h == name).unwrap()
}

#[test]
fn corner_sweep_agrees_with_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[model]\nkind = \"timoshenko\"\n[sweep]\ngamma = [0.5, 2.0]\nchi = [0.0, 0.5]\n{SMALL_GRID}"),
    );
    let status = bin().args(["sweep", "--config"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    let report = dir.path().join("out/report.csv");
    let (agree, class) = (column(&report, "agree"), column(&report, "classification"));
    let rows = rows(&report);
    assert_eq!(rows.len(), 4);
    let classes: Vec<&str> = rows.iter().map(|r| &r[class]).collect();
    assert_eq!(classes, ["Exponential", "Semiuniform", "NotSemiuniform", "NotSemiuniform"]);
    assert!(rows.iter().all(|r| &r[agree] == "true"));
    assert!(std::fs::read_to_string(&report).unwrap().ends_with('\n'));
}

#[test]
fn waveheat_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[model]\nkind = \"waveheat\"\n[sweep]\ngamma_range = [0.0, 1.25, 0.25]\n{SMALL_GRID}"),
    );
    assert!(bin().args(["sweep", "--config"]).arg(&cfg).status().unwrap().success());
    let report = dir.path().join("out/report.csv");
    let class = column(&report, "classification");
    let exponential: Vec<String> = rows(&report)
        .iter()
        .filter(|r| &r[class] == "Exponential")
        .map(|r| r[0].to_string())
        .collect();
    assert_eq!(exponential, ["0.5", "0.75", "1"]);
}

#[test]
fn resume_skips_completed_points() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[model]\nkind = \"timoshenko\"\n[sweep]\ngamma = [0.0, 1.0, 1.5]\n{SMALL_GRID}"),
    );
    let report = dir.path().join("out/report.csv");
    assert!(bin().args(["sweep", "--config"]).arg(&cfg).status().unwrap().success());
    let full = std::fs::read_to_string(&report).unwrap();
    let mut lines: Vec<&str> = full.lines().collect();
    lines.remove(2);
    std::fs::write(&report, lines.join("\n") + "\n").unwrap();
    let out = bin()
        .args(["sweep", "--resume", "--workers", "1", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 computed, 2 resumed"));
    assert_eq!(std::fs::read_to_string(&report).unwrap(), full);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "[params]\nrho9 = 1.0\n");
    let out = bin().args(["sweep", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("params.rho9"));

    let missing = bin().args(["sweep", "--config", "/nonexistent/run.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));

    // The exponential corner has no witness sequence: the row records the error.
    let cfg = write_config(dir.path(), &format!("[model]\nkind = \"timoshenko\"\n{SMALL_GRID}"));
    let out = bin().args(["witness", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let summary = dir.path().join("out/witness_summary.csv");
    let status = column(&summary, "status");
    assert!(rows(&summary)[0][status].starts_with("error:"));
}

#[test]
fn classify_prints_the_report_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("[model]\nkind = \"timoshenko\"\n[params]\ngamma = 2.0\n{SMALL_GRID}"),
    );
    let out = bin().args(["classify", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("classification: NotSemiuniform"), "{text}");
    assert!(text.contains("agree: true"));
}
