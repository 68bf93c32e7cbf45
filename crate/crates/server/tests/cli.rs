use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn chatrank(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_chatrank"))
        .args(args)
        .env("RUST_LOG", "warn")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut pipe = child.stdin.take().unwrap();
    if let Some(text) = stdin {
        pipe.write_all(text.as_bytes()).unwrap();
    }
    drop(pipe);
    child.wait_with_output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = chatrank(args, None);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, f: &str) -> String {
    dir.join(f).to_string_lossy().into_owned()
}

#[test]
fn full_pipeline_on_small_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(&["gen-corpus", "--out-dir", &p(d, ""), "--pairs", "300", "--train", "80", "--heldout", "40"]);
    assert!(out.contains("wrote 300 pairs"), "{out}");
    ok(&["build-index", "--pairs", &p(d, "pairs.jsonl"), "--out", &p(d, "pairs.idx")]);
    let out = ok(&[
        "train-cdssm",
        "--pairs",
        &p(d, "pairs.jsonl"),
        "--out",
        &p(d, "model.cdssm"),
        "--conv-dim",
        "16",
        "--sem-dim",
        "8",
        "--epochs",
        "2",
    ]);
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch ")).count(), 2);
    let triples = p(d, "train_triples.jsonl");
    let cdssm = p(d, "model.cdssm");
    ok(&["train-ranker", "--triples", &triples, "--cdssm", &cdssm, "--out", &p(d, "rankers"), "--system", "all", "--trees", "10"]);
    for name in ["ir_status_cmm", "semrel_cmm", "semrel_cmm_ccf"] {
        assert!(d.join("rankers").join(format!("{name}.mart")).is_file());
    }
    let report = p(d, "report.txt");
    let out = ok(&[
        "eval",
        "--heldout",
        &p(d, "heldout_triples.jsonl"),
        "--index",
        &p(d, "pairs.idx"),
        "--cdssm",
        &cdssm,
        "--ranker-dir",
        &p(d, "rankers"),
        "--report",
        &report,
    ]);
    assert_eq!(std::fs::read_to_string(&report).unwrap(), out);
    for name in ["ir_status", "ir_status_cmm", "semrel_cmm", "semrel_cmm_ccf"] {
        assert!(out.contains(name), "{out}");
    }

    let engine = [
        "chat",
        "--index",
        &p(d, "pairs.idx"),
        "--cdssm",
        &cdssm,
        "--ranker",
        &p(d, "rankers/semrel_cmm_ccf.mart"),
    ];
    let script = "how was your weekend\n\n/debug\nreally?\n/reset\nok\n/quit\nnever read\n";
    let first = chatrank(&engine, Some(script));
    assert!(first.status.success());
    let text = String::from_utf8(first.stdout.clone()).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("bot> ")).count(), 3, "{text}");
    assert!(text.lines().any(|l| l.starts_with("  0\t")), "debug listing missing: {text}");
    assert_eq!(chatrank(&engine, Some(script)).stdout, first.stdout);
}

#[test]
fn errors_exit_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = chatrank(&["build-index", "--pairs", &p(dir.path(), "missing.jsonl"), "--out", &p(dir.path(), "x")], None);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("error:") && err.contains("missing.jsonl"), "{err}");

    std::fs::write(dir.path().join("bad.jsonl"), "{\"m\": \"hi\"}\nnot json\n").unwrap();
    let out = chatrank(&["build-index", "--pairs", &p(dir.path(), "bad.jsonl"), "--out", &p(dir.path(), "x")], None);
    assert_eq!(out.status.code(), Some(1));

    let out = chatrank(&["no-such-command"], None);
    assert!(!out.status.success());
}
