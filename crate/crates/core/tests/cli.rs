//! End-to-end runs of the `repeat` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use repeat::commands::{OodReportFile, SanityReportFile, SynthManifest};
use repeat::io::RawTensor;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_repeat"));
    cmd.env_remove("REPEAT_THREADS");
    cmd
}

fn sample() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/sample64.png")
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(out.status.success(), "command failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn fails(cmd: &mut Command) -> String {
    let out = cmd.output().expect("binary runs");
    assert!(!out.status.success(), "command unexpectedly succeeded");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const EXPLAIN_FILES: [&str; 5] =
    ["importance.rpt", "importance.png", "uncertainty.rpt", "uncertainty.png", "explain.json"];

fn synth(dir: &Path, kind: &str, n: usize, seed: u64, size: usize) -> PathBuf {
    let out = dir.join(format!("{kind}-{seed}"));
    let size = size.to_string();
    run(bin()
        .args(["synth", "--kind", kind, "--n", &n.to_string(), "--seed", &seed.to_string()])
        .args(["--height", &size, "--width", &size, "--out"])
        .arg(&out));
    out
}

#[test]
fn explain_default_config_writes_maps_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(bin().arg("explain").arg("--image").arg(sample()).arg("--out").arg(&out));
    assert!(String::from_utf8_lossy(&o.stdout).contains("10 realizations"));
    for f in EXPLAIN_FILES {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("explain.json")).unwrap()).unwrap();
    assert_eq!(sidecar["schema_version"], 1);
    assert_eq!(sidecar["thresholds"].as_array().unwrap().len(), 10);
    assert_eq!(sidecar["config"]["repeat"]["threshold"], "mean");
}

#[test]
fn explain_rejects_single_realization() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(
        bin().arg("explain").arg("--image").arg(sample()).arg("--out").arg(dir.path()).args(["--k", "1"]),
    );
    assert!(err.contains("repeat.k"), "{err}");
}

#[test]
fn explain_is_byte_identical_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let explain = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        run(bin()
            .arg("explain")
            .arg("--image")
            .arg(sample())
            .args(["--masks", "30", "--k", "4", "--threads", threads, "--out"])
            .arg(&out));
        EXPLAIN_FILES.map(|f| fs::read(out.join(f)).unwrap())
    };
    let a = explain("a", "1");
    assert_eq!(a, explain("b", "1"));
    assert_eq!(a, explain("c", "8"));
}

#[test]
fn threads_env_var_is_honoured() {
    let err = fails(bin().env("REPEAT_THREADS", "0").args([
        "synth",
        "--kind",
        "noise",
        "--n",
        "1",
        "--out",
        "/tmp/never",
    ]));
    assert!(err.contains("threads"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[repeat]\nk = 3\nseed = 4\n[masks]\nn = 10\n[image]\nheight = 16\nwidth = 16\n")
        .unwrap();
    let out = dir.path().join("out");
    run(bin()
        .arg("--config")
        .arg(&cfg)
        .arg("explain")
        .arg("--image")
        .arg(sample())
        .args(["--k", "5", "--out"])
        .arg(&out));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("explain.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["repeat"]["k"], 5);
    assert_eq!(sidecar["config"]["repeat"]["seed"], 4);
    assert_eq!(sidecar["config"]["masks"]["n"], 10);
    assert_eq!(sidecar["thresholds"].as_array().unwrap().len(), 5);
}

#[test]
fn unknown_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[repeat]\nrealizations = 3\n").unwrap();
    let err = fails(
        bin()
            .arg("--config")
            .arg(&cfg)
            .arg("explain")
            .arg("--image")
            .arg(sample())
            .arg("--out")
            .arg(dir.path()),
    );
    assert!(err.contains("run.toml") && err.contains("realizations"), "{err}");
}

#[test]
fn synth_writes_manifest_and_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "structured", 10, 3, 16);
    let manifest: SynthManifest =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.entries.len(), 10);
    let rpt = fs::read_dir(&a)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().unwrap() == "rpt")
        .count();
    assert_eq!(rpt, 10);

    let again = dir.path().join("again");
    run(bin()
        .args([
            "synth",
            "--kind",
            "structured",
            "--n",
            "10",
            "--seed",
            "3",
            "--height",
            "16",
            "--width",
            "16",
            "--out",
        ])
        .arg(&again));
    for e in &manifest.entries {
        assert_eq!(fs::read(a.join(&e.file)).unwrap(), fs::read(again.join(&e.file)).unwrap());
    }
}

#[test]
fn synth_noise_image_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let d = synth(dir.path(), "noise", 1, 9, 64);
    let raw = RawTensor::read(d.join("noise-0000.rpt")).unwrap();
    assert_eq!(raw.data.len(), 4096);
    let mut counts = [0usize; 16];
    for &v in &raw.data {
        counts[((v * 16.0) as usize).min(15)] += 1;
    }
    let expected = raw.data.len() as f64 / 16.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 15 degrees of freedom.
    assert!(chi2 < 30.578, "chi2 = {chi2}");
}

fn small_flags() -> [&'static str; 8] {
    ["--height", "16", "--width", "16", "--masks", "16", "--k", "3"]
}

#[test]
fn eval_ood_report_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "structured", 4, 1, 16);
    let b = synth(dir.path(), "fluctuating", 4, 2, 16);
    let report = dir.path().join("ood.json");
    let hist = dir.path().join("ood.csv");
    run(bin()
        .args(["eval", "ood", "--in"])
        .arg(&a)
        .arg("--ood")
        .arg(&b)
        .args(small_flags())
        .arg("--report")
        .arg(&report)
        .arg("--histogram")
        .arg(&hist));
    let r: OodReportFile = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.schema_version, 1);
    assert!((0.0..=1.0).contains(&r.summary.auroc));
    assert_eq!(r.records.len(), 8);
    assert_eq!(r.records[0].id, "structured-0000");
    let csv = fs::read_to_string(&hist).unwrap();
    assert_eq!(csv.lines().count(), 21);

    // The config echo alone reproduces the report.
    let rerun = dir.path().join("rerun.json");
    run(bin()
        .arg("--config")
        .arg(&report)
        .args(["eval", "ood", "--report"])
        .arg(&rerun)
        .arg("--histogram")
        .arg(dir.path().join("rerun.csv")));
    let r2: OodReportFile = serde_json::from_str(&fs::read_to_string(&rerun).unwrap()).unwrap();
    assert_eq!(r2.records, r.records);
    assert_eq!(r2.summary, r.summary);
}

#[test]
fn eval_sanity_and_complexity_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "structured", 3, 1, 16);
    let report = dir.path().join("sanity.json");
    run(bin().args(["eval", "sanity", "--corpus"]).arg(&a).args(small_flags()).arg("--report").arg(&report));
    let r: SanityReportFile = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r.records.len(), 3);
    assert!(r.records.iter().all(|rec| rec.emprt_score.is_some()));
    assert!(r.summary.median.is_finite());

    let report = dir.path().join("complexity.json");
    run(bin()
        .args(["eval", "complexity", "--method", "relax", "--corpus"])
        .arg(&a)
        .args(small_flags())
        .arg("--report")
        .arg(&report));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["summary"]["method"], "relax");
    assert_eq!(v["records"].as_array().unwrap().len(), 3);
}

#[test]
fn missing_corpus_dir_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-corpus");
    let err = fails(
        bin()
            .args(["eval", "sanity", "--corpus"])
            .arg(&missing)
            .arg("--report")
            .arg(dir.path().join("r.json")),
    );
    assert!(err.contains("no-such-corpus"), "{err}");
    let err = fails(bin().args(["eval", "ood", "--in"]).arg(&missing).arg("--ood").arg(&missing));
    assert!(err.contains("no-such-corpus"), "{err}");
}

#[test]
fn threshold_demo_prints_four_methods() {
    let o = run(bin().arg("threshold-demo").arg("--input").arg(sample()).args(["--masks", "20"]));
    let text = String::from_utf8(o.stdout).unwrap();
    for m in ["mean", "otsu", "triangle", "li"] {
        assert!(text.lines().any(|l| l.starts_with(m)), "{text}");
    }
}
