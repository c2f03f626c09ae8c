use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_portraitqr");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn small_pipeline(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["pipeline", "--json", "--set", "sample.module_size=8", "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn pipeline_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = small_pipeline(dir.path(), &["--message", "hello portrait"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["verify"]["decoded_message"], "hello portrait");
    assert_eq!(report["verify"]["e"], 0);
    for name in ["blueprint.png", "stage2.png", "harmonized.png", "output.png", "reshuffle.json", "trace.jsonl", "verify.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let trace = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let first: Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    for key in ["iteration", "loss", "l_code", "l_aesthetic", "e", "e_f"] {
        assert!(first.get(key).is_some(), "{key}");
    }
}

#[test]
fn pipeline_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(code(&small_pipeline(a.path(), &["--seed", "4"])), 0);
    assert_eq!(code(&small_pipeline(b.path(), &["--seed", "4"])), 0);
    for name in ["output.png", "pipeline.json", "verify.json", "reshuffle.json", "trace.jsonl"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn subcommands_compose_to_pipeline() {
    let full = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_pipeline(full.path(), &[])), 0);
    let f = |name: &str| full.path().join(name).to_str().unwrap().to_string();
    let step = tempfile::tempdir().unwrap();
    let s = |name: &str| step.path().join(name).to_str().unwrap().to_string();
    let out = step.path().to_str().unwrap();
    let steps: Vec<Vec<String>> = vec![
        vec!["extract".into(), "--image".into(), f("source.png")],
        vec!["reshuffle".into(), "--modules".into(), s("modules.json"), "--face-mask".into(), f("face_mask.png")],
        vec!["blueprint".into(), "--target".into(), s("target.json"), "--source".into(), f("source.png"), "--face-mask".into(), f("face_mask.png")],
        vec!["harmonize".into(), "--blueprint".into(), s("blueprint.json"), "--source".into(), f("source.png")],
        vec!["enhance".into(), "--start".into(), s("harmonized.png"), "--blueprint".into(), s("blueprint.json")],
        vec!["verify".into(), "--image".into(), s("output.png"), "--blueprint".into(), s("blueprint.json")],
    ];
    for args in steps {
        let mut args: Vec<&str> = args.iter().map(String::as_str).collect();
        args.extend(["--out-dir", out]);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["modules.json", "target.json", "blueprint.png", "blueprint.json", "stage2.png", "harmonized.png", "output.png", "verify.json"] {
        assert_eq!(fs::read(f(name)).unwrap(), fs::read(s(name)).unwrap(), "{name}");
    }
}

#[test]
fn oversized_mask_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let a = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_pipeline(a.path(), &[])), 0);
    let mask = dir.path().join("mask.png");
    image::GrayImage::from_pixel(360, 360, image::Luma([255])).save(&mask).unwrap();
    let src = a.path().join("source.png");
    let o = small_pipeline(dir.path(), &["--source", src.to_str().unwrap(), "--face-mask", mask.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let report = stdout_json(&o);
    assert_eq!(report["reason"], "infeasible");
    assert_eq!(report["reshuffle"]["feasible"], false);
    assert_eq!(report["reshuffle"]["per_block_errors_after"].as_array().unwrap().len(), 4);
    assert!(dir.path().join("reshuffle.json").exists());
}

#[test]
fn missing_mask_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_pipeline(a.path(), &[])), 0);
    let src = a.path().join("source.png");
    let missing = dir.path().join("absent.png");
    let o = small_pipeline(dir.path(), &["--source", src.to_str().unwrap(), "--face-mask", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout_json(&o)["reason"], "io");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["verify"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["pipeline", "--out-dir", out, "--set", "loss.lambda=2"])), 2);
    assert_eq!(code(&run(&["pipeline", "--out-dir", out, "--set", "loss.nonsense=1"])), 2);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# run settings\nmessage = \"from file\"\nloss.iterations = 5\nsample.module_size = 6\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&["encode", "--config", cfg.to_str().unwrap(), "--message", "from flag", "--out-dir", out.to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["module_size"], 6);
    // the encoded symbol carries the flag's message
    let e = run(&["extract", "--image", out.join("code.png").to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--json"]);
    assert_eq!(code(&e), 0);
    let encoded: Value = serde_json::from_str(&fs::read_to_string(out.join("code.json")).unwrap()).unwrap();
    let extracted: Value = serde_json::from_str(&fs::read_to_string(out.join("modules.json")).unwrap()).unwrap();
    assert_eq!(encoded["values"], extracted["values"]);

    let p = tempfile::tempdir().unwrap();
    let o = run(&["pipeline", "--config", cfg.to_str().unwrap(), "--message", "from flag", "--out-dir", p.path().to_str().unwrap()]);
    assert!(code(&o) <= 1);
    let written = fs::read_to_string(p.path().join("config.txt")).unwrap();
    assert!(written.contains("message = \"from flag\""), "{written}");
    assert!(written.contains("loss.iterations = 5"), "{written}");
}

#[test]
fn robustness_reports_table_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["encode", "--message", "grid", "--out-dir", out])), 0);
    let code_png = dir.path().join("code.png");
    let o = run(&[
        "robustness",
        "--image",
        code_png.to_str().unwrap(),
        "--message",
        "grid",
        "--trials",
        "2",
        "--set",
        "harness.scales=[0.5, 1.0]",
        "--out-dir",
        out,
        "--json",
    ]);
    assert_eq!(code(&o), 0);
    let r = stdout_json(&o);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["cells"].as_array().unwrap().len(), 12);
    assert!(r["cells"].as_array().unwrap().iter().all(|c| c["successes"] == 2));
    assert!(fs::read_to_string(dir.path().join("robustness.txt")).unwrap().contains("overall 100.0%"));
}

#[test]
fn verify_fails_with_exit_1_on_wrong_message() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&small_pipeline(dir.path(), &[])), 0);
    let img = dir.path().join("output.png");
    let bp = dir.path().join("blueprint.json");
    let o = run(&["verify", "--image", img.to_str().unwrap(), "--blueprint", bp.to_str().unwrap(), "--message", "other", "--json", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout_json(&o)["passed"], false);
}
