use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn surqnn(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_surqnn")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_passes_and_writes_one_row_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = surqnn(&["verify", "--config", s(&config("verify.toml")), "--out", s(dir.path())]);
    assert_eq!(code, 0, "{stdout}");
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("tolerance"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn corrupted_kraus_names_the_failing_check() {
    let (code, stdout, _) = surqnn(&["verify", "--config", s(&config("verify.toml")), "--corrupt-kraus"]);
    assert_eq!(code, 1);
    assert!(stdout.contains("FAIL") && stdout.contains("completeness"), "{stdout}");
}

#[test]
fn gradcheck_emits_one_row_per_angle() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = surqnn(&["gradcheck", "--config", s(&config("verify.toml")), "--out", s(dir.path())]);
    assert_eq!(code, 0, "{stdout}");
    let csv = fs::read_to_string(dir.path().join("gradcheck.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 105);

    let (code, _, _) = surqnn(&["gradcheck", "--config", s(&config("verify.toml")), "--out", s(dir.path()), "--h", "0.5"]);
    assert_eq!(code, 1);
}

#[test]
fn bad_invocations_exit_with_two() {
    assert_eq!(surqnn(&["verify", "--config", "/nonexistent.toml"]).0, 2);
    assert_eq!(surqnn(&["frobnicate"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "seed = 0\nunknown_key = 1\n").unwrap();
    let (code, _, stderr) = surqnn(&["verify", "--config", s(&bad)]);
    assert_eq!(code, 2, "{stderr}");
}

fn train(out: &Path, extra: &[&str]) -> i32 {
    let cfg = config("synthetic.toml");
    let mut args = vec!["train", "--config", s(&cfg), "--out", s(out)];
    args.extend_from_slice(extra);
    surqnn(&args).0
}

#[test]
fn training_writes_manifest_metrics_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert_eq!(train(&a, &[]), 0);
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,split,loss,accuracy,lr,surrogate_mse"));
    assert_eq!(metrics.lines().count(), 1 + 4 * 2);
    assert_eq!(fs::read_to_string(a.join("metrics.jsonl")).unwrap().lines().count(), 8);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert!(manifest["finished"].is_string());
    assert_eq!(manifest["parameters"]["circuit_angles"], 21);
    assert!(manifest["parameters"]["classical"].as_u64().unwrap() > 0);
    assert!(a.join("checkpoint.json").exists());

    let b = dir.path().join("b");
    assert_eq!(train(&b, &[]), 0);
    assert_eq!(fs::read_to_string(b.join("metrics.csv")).unwrap(), metrics);

    let direct = dir.path().join("direct");
    assert_eq!(train(&direct, &["--backend", "direct"]), 0);
    let other = fs::read_to_string(direct.join("metrics.csv")).unwrap();
    assert_eq!(other.lines().next(), metrics.lines().next());
    assert_eq!(other.lines().count(), metrics.lines().count());
    assert_ne!(other, metrics);
}

#[test]
fn interrupted_run_resumes_to_the_same_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let full = dir.path().join("full");
    assert_eq!(train(&full, &[]), 0);
    let part = dir.path().join("part");
    assert_eq!(train(&part, &["--stop-after", "2"]), 0);
    assert_eq!(fs::read_to_string(part.join("metrics.csv")).unwrap().lines().count(), 1 + 2 * 2);
    let ckpt = part.join("checkpoint.json");
    assert_eq!(train(&part, &["--resume", s(&ckpt)]), 0);
    assert_eq!(
        fs::read_to_string(part.join("metrics.csv")).unwrap(),
        fs::read_to_string(full.join("metrics.csv")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(part.join("checkpoint.json")).unwrap(),
        fs::read_to_string(full.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn eval_checks_hash_and_reports_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(train(&run, &[]), 0);
    let ckpt = run.join("checkpoint.json");
    let cfg = config("synthetic.toml");

    let (code, stdout, _) = surqnn(&["eval", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--min-accuracy", "0.95"]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("accuracy"));
    let record: serde_json::Value =
        serde_json::from_str(fs::read_to_string(run.join("eval.jsonl")).unwrap().lines().last().unwrap()).unwrap();
    assert!(record["accuracy"].as_f64().unwrap() >= 0.95);

    let (code, _, stderr) = surqnn(&["eval", "--config", s(&cfg), "--checkpoint", s(&ckpt), "--seed", "2"]);
    assert_eq!(code, 1);
    assert!(stderr.contains("config hash mismatch"), "{stderr}");

    let (code, _, _) = surqnn(&["train", "--config", s(&cfg), "--out", s(&run), "--resume", s(&ckpt), "--seed", "2"]);
    assert_eq!(code, 1);
}

#[test]
fn empty_dataset_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset");
    let cfg = dir.path().join("empty.toml");
    let text = format!(
        "[data]\nkind = \"mnist\"\nclasses = [9]\ntrain_images = \"{0}/train-images-idx3-ubyte\"\ntrain_labels = \"{0}/train-labels-idx1-ubyte\"\ntest_images = \"{0}/test-images-idx3-ubyte\"\ntest_labels = \"{0}/test-labels-idx1-ubyte\"\n",
        data.display()
    );
    fs::write(&cfg, text).unwrap();
    let (code, _, stderr) = surqnn(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("r"))]);
    assert_eq!(code, 2, "{stderr}");
}
