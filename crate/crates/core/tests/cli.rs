use std::process::Command;

fn lmextract(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_lmextract")).args(args).output().unwrap();
    (out.status.success(), String::from_utf8_lossy(&out.stdout).into(), String::from_utf8_lossy(&out.stderr).into())
}

#[test]
fn victim_build_prints_spec() {
    let (ok, out, _) = lmextract(&["victim", "build", "--l", "64", "--h", "4", "--norm", "layernorm", "--norm-bias"]);
    assert!(ok);
    assert!(out.contains("l = 64") && out.contains("norm_kind = \"layernorm\""), "{out}");
}

#[test]
fn export_truth_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("truth");
    let (ok, _, err) =
        lmextract(&["victim", "export-truth", "--l", "50", "--h", "6", "--prompts", "4", "--out", out.to_str().unwrap()]);
    assert!(ok, "{err}");
    let w = lmextract::matfile::load(out.join("weights.mat")).unwrap();
    let hidden = lmextract::matfile::load(out.join("hidden.mat")).unwrap();
    assert_eq!((w.nrows(), w.ncols(), hidden.nrows(), hidden.ncols()), (50, 6, 4, 6));
}

#[test]
fn extract_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (ok, stdout, err) =
        lmextract(&["extract", "dim", "--l", "200", "--h", "12", "--seeds", "0,1", "--out", out, "--transcript"]);
    assert!(ok, "{err}");
    assert!(stdout.contains("extracted_dim") && stdout.contains("1.200000e1"), "{stdout}");
    for f in ["report.json", "report.csv", "spectrum.csv", "transcript.jsonl"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn capability_mismatch_fails_before_querying() {
    let (ok, _, err) = lmextract(&["attack", "k-logprob", "--l", "50", "--mode", "argmax"]);
    assert!(!ok);
    assert!(err.contains("capability"), "{err}");
}

#[test]
fn attack_json_over_loopback() {
    let (ok, stdout, err) =
        lmextract(&["attack", "reference", "--l", "80", "--h", "4", "--transport", "loopback", "--json"]);
    assert!(ok, "{err}");
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["runs"][0]["queries_per_logit"], 0.25);
}

#[test]
fn lower_bound_report_table() {
    let (ok, stdout, err) = lmextract(&["report", "lower-bound", "--l", "120", "--bits", "6"]);
    assert!(ok, "{err}");
    assert!(stdout.starts_with("bits,lower_bound,one_of_n,binary_search,midpoint"), "{stdout}");
    assert!(stdout.lines().nth(1).unwrap().starts_with("6,1.537,"), "{stdout}");
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    std::fs::write(
        &path,
        r#"
name = "from-file"
seeds = [3]
[victim]
l = 150
h = 8
seed = 3
[api.mode]
kind = "all_logits"
[attack]
kind = "extract-dim"
queries = 40
"#,
    )
    .unwrap();
    let (ok, stdout, err) = lmextract(&["extract", "dim", "--config", path.to_str().unwrap(), "--h", "10"]);
    assert!(ok, "{err}");
    assert!(stdout.contains("from-file") && stdout.contains("1.000000e1"), "{stdout}");
}
