use std::path::Path;
use std::process::Command;
use vmident_cli::{run, CliError, RunConfig};
use vmident_core::data::METRIC_NAMES;
use vmident_core::model::read_header;

fn vmident(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vmident"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn cli(args: &[&str]) -> Result<String, CliError> {
    run(std::iter::once("vmident").chain(args.iter().copied()))
}

/// Short traces and few epochs keep end-to-end runs fast.
fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, format!("[synth]\nlength = 400\n\n[train]\nepochs = 8\n{extra}")).unwrap();
    path
}

fn generate(dir: &Path, seed: &str) -> std::path::PathBuf {
    let config = write_config(dir, "");
    let out = dir.join(format!("gen{seed}"));
    cli(&["generate", "--config", p(&config), "--seed", seed, "--out", p(&out)]).unwrap();
    out
}

#[test]
fn generate_writes_traces_manifest_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gen");
    cli(&["generate", "--out", p(&out)]).unwrap();
    let manifest = std::fs::read_to_string(out.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 9);
    let csvs: Vec<_> = std::fs::read_dir(out.join("traces")).unwrap().collect();
    assert_eq!(csvs.len(), 8);
    let text = std::fs::read_to_string(out.join("traces/web-server-00.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), METRIC_NAMES.join(","));
    assert_eq!(lines.count(), 2016);
    let echoed = RunConfig::from_toml_str(&std::fs::read_to_string(out.join("run_config.toml")).unwrap()).unwrap();
    assert_eq!(echoed.command, "generate");
}

#[test]
fn generate_echoes_config_and_depends_on_seed() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sep0.toml");
    std::fs::write(&config, "[synth]\nseparability = 0.0\nlength = 50\n").unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    cli(&["generate", "--config", p(&config), "--seed", "1", "--out", p(&a)]).unwrap();
    cli(&["generate", "--config", p(&config), "--seed", "2", "--out", p(&b)]).unwrap();
    let echoed = std::fs::read_to_string(a.join("run_config.toml")).unwrap();
    assert!(echoed.contains("separability = 0.0"), "{echoed}");
    let fa = std::fs::read_to_string(a.join("traces/sql-server-02.csv")).unwrap();
    let fb = std::fs::read_to_string(b.join("traces/sql-server-02.csv")).unwrap();
    assert_ne!(fa, fb);
    assert_eq!(fa.lines().count(), fb.lines().count());
}

#[test]
fn train_classify_evaluate_round() {
    let dir = tempfile::tempdir().unwrap();
    let gen = generate(dir.path(), "4");
    let config = write_config(dir.path(), "");
    let out = dir.path().join("train");
    let manifest = gen.join("manifest.csv");
    let msg = cli(&["train", "--config", p(&config), "--manifest", p(&manifest), "--window", "4", "--out", p(&out)]).unwrap();
    assert!(msg.contains("test error"));
    for f in ["model.dvmw", "history.log", "report.json", "run_config.toml"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(out.join("history.log")).unwrap().lines().count(), 8);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let acc = report["test"]["accuracy"].as_f64().unwrap();
    let err = report["test"]["error_percent"].as_f64().unwrap();
    assert!((err - 100.0 * (1.0 - acc)).abs() < 1e-9);

    let weights = out.join("model.dvmw");
    let csv = gen.join("traces/sql-server-01.csv");
    let text = cli(&["classify", "--weights", p(&weights), "--csv", p(&csv)]).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 100);
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        let sum: f64 = fields[1..3].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
    let summary = text.lines().last().unwrap();
    assert!(summary.starts_with("# majority sql-server-01: sql-server"), "{summary}");

    // a trace of exactly W rows gives exactly one probability row
    let short = dir.path().join("short.csv");
    let full = std::fs::read_to_string(&csv).unwrap();
    std::fs::write(&short, full.lines().take(5).collect::<Vec<_>>().join("\n") + "\n").unwrap();
    let text = cli(&["classify", "--weights", p(&weights), "--csv", p(&short)]).unwrap();
    assert_eq!(text.lines().count(), 3);
    std::fs::write(&short, full.lines().take(4).collect::<Vec<_>>().join("\n") + "\n").unwrap();
    assert_eq!(cli(&["classify", "--weights", p(&weights), "--csv", p(&short)]).unwrap_err().exit_code(), 2);

    let text = cli(&["evaluate", "--weights", p(&weights), "--manifest", p(&manifest)]).unwrap();
    assert!(text.contains("over 800 windows"), "{text}");
}

#[test]
fn deepfft_header_records_frontend() {
    let dir = tempfile::tempdir().unwrap();
    let gen = generate(dir.path(), "5");
    let config = dir.path().join("fft.toml");
    std::fs::write(&config, "[train]\nepochs = 1\n").unwrap();
    let out = dir.path().join("fft");
    cli(&[
        "train", "--config", p(&config), "--manifest", p(&gen.join("manifest.csv")),
        "--window", "16", "--variant", "deepfft", "--out", p(&out),
    ])
    .unwrap();
    let header = read_header(out.join("model.dvmw")).unwrap();
    assert_eq!(header.frontend.as_deref(), Some("fft_magnitude"));
    assert!(header.normalizer.is_some());
    assert!(out.join("report.json").exists());
}

#[test]
fn compare_writes_table_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let gen = generate(dir.path(), "6");
    let config = dir.path().join("cmp.toml");
    std::fs::write(&config, "[train]\nepochs = 1\n").unwrap();
    let out = dir.path().join("cmp");
    let text = cli(&[
        "compare", "--config", p(&config), "--manifest", p(&gen.join("manifest.csv")),
        "--windows", "4,8", "--variants", "deepconv,deepfft", "--out", p(&out),
    ])
    .unwrap();
    assert!(text.contains("AGATE error*"));
    let plot = std::fs::read_to_string(out.join("plot_data.csv")).unwrap();
    assert_eq!(plot.lines().count(), 5);
    let table: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("table.json")).unwrap()).unwrap();
    assert_eq!(table["windows"].as_array().unwrap().len(), 7);
    assert_eq!(table["reference"][1]["values"][6], 2.4);
    assert!(out.join("table.txt").exists());
}

#[test]
fn exit_codes_and_no_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let missing = dir.path().join("missing.csv");
    let r = vmident(&["train", "--manifest", p(&missing), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing.csv"));

    assert_eq!(vmident(&["train", "--window", "abc"]).status.code(), Some(1));
    assert_eq!(vmident(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(vmident(&["train", "--window", "12", "--manifest", "x", "--out", p(&out)]).status.code(), Some(1));
    assert_eq!(vmident(&["--help"]).status.code(), Some(0));
    assert!(!out.exists());

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "path,vm_id,class\nx.csv,vm,database\n").unwrap();
    let r = vmident(&["train", "--manifest", p(&bad), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("bad.csv:2"));
}
