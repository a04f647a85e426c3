use std::path::Path;
use std::process::{Command, Output};

fn recshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recshape"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = recshape(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_on_a_small_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("corpus.jsonl");
    let dataset = d.join("dataset.jsonl");
    let models = d.join("models");
    let cb = models.join("codebook.json");
    let prior = models.join("prior.json");
    let cond = models.join("cond_model.json");

    ok(&["gen-corpus", "--chairs", "12", "--tables", "6", "--resolution", "8", "--seed", "4", "--out", s(&corpus)]);
    ok(&["build-dataset", "--corpus", s(&corpus), "--out", s(&dataset)]);
    ok(&[
        "train-codebook", "--corpus", s(&corpus), "--k", "6", "--grid", "2", "--iterations", "5", "--restarts", "1",
        "--out", s(&cb),
    ]);
    let data = ["--dataset", s(&dataset), "--corpus", s(&corpus), "--codebook", s(&cb)];
    let mut fit = vec!["fit-prior"];
    fit.extend(data);
    fit.extend(["--order", "2", "--alpha", "0.5", "--out", s(&prior)]);
    ok(&fit);
    let mut train = vec!["train-cond"];
    train.extend(data);
    train.extend([
        "--epochs", "1", "--lr", "0.05", "--width", "8", "--embed-dim", "16", "--max-chains", "20", "--out",
        s(&cond),
    ]);
    ok(&train);

    let out = d.join("gen");
    let stdout = ok(&[
        "generate", "--models", s(&models), "--phrase", "a chair", "--phrase", "with armrests", "--seed", "3",
        "--samples", "4", "--out-dir", s(&out),
    ]);
    assert_eq!(stdout.lines().count(), 2);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.iter().filter(|n| n.ends_with(".obj")).count(), 8);
    assert_eq!(names.iter().filter(|n| n.starts_with("z_")).count(), 2);

    // Same seed, same bytes.
    let again = d.join("gen2");
    ok(&[
        "generate", "--models", s(&models), "--phrase", "a chair", "--phrase", "with armrests", "--seed", "3",
        "--samples", "4", "--out-dir", s(&again),
    ]);
    for n in &names {
        assert_eq!(std::fs::read(out.join(n)).unwrap(), std::fs::read(again.join(n)).unwrap(), "{n}");
    }

    let report = ok(&["evaluate", "--models", s(&models), "--dataset", s(&dataset), "--samples", "2", "--per-bucket", "5"]);
    let tables: Vec<serde_json::Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(tables.iter().filter(|v| v["table"] == "entropy_cd").count(), 4);
    assert_eq!(tables.iter().filter(|v| v["table"] == "unchanged_fraction").count(), 5);
}

#[test]
fn exit_codes() {
    assert_eq!(recshape(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(recshape(&["generate", "--models", "x"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = dir.path().join("d.jsonl");
    assert_eq!(recshape(&["build-dataset", "--corpus", s(&missing), "--out", s(&out)]).status.code(), Some(2));
    let garbage = dir.path().join("garbage.jsonl");
    std::fs::write(&garbage, "{not json}\n").unwrap();
    assert_eq!(recshape(&["build-dataset", "--corpus", s(&garbage), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(
        recshape(&["gen-corpus", "--chairs", "0", "--tables", "0", "--out", s(&out)]).status.code(),
        Some(1)
    );
    assert_eq!(recshape(&["--help"]).status.code(), Some(0));
}
