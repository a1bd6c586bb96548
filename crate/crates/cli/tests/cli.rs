use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn dpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpp"))
        .args(args)
        .env("DPP_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn data(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
        .display()
        .to_string()
}

fn csvs(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_one_csv_per_repeat_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = dpp(&[
        "run",
        "--dataset",
        &data("topics.txt"),
        "--out",
        out.to_str().unwrap(),
        "--algo",
        "dpp-pbt",
        "--cost",
        "hamming",
        "--m-frac",
        "0.25",
        "--repeats",
        "3",
        "--seed",
        "7",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = csvs(&out);
    assert_eq!(files.len(), 3);
    for (r, f) in files.iter().enumerate() {
        let text = fs::read_to_string(f).unwrap();
        assert!(text.contains(&format!("# seed: {}\n", 7 + r)));
        assert!(text.contains("# algorithm: dpp-pbt\n"));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["groups"].as_array().unwrap().len(), 1);
    assert_eq!(
        summary["groups"][0]["per_repeat"].as_array().unwrap().len(),
        3
    );
}

#[test]
fn unknown_cost_is_a_usage_error() {
    let o = dpp(&[
        "run",
        "--dataset",
        &data("topics.txt"),
        "--out",
        "x",
        "--cost",
        "nope",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown cost"));
}

#[test]
fn invalid_spec_is_a_usage_error() {
    let o = dpp(&[
        "run",
        "--dataset",
        &data("topics.txt"),
        "--out",
        "x",
        "--m-frac",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = dpp(&["run", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreadable_dataset_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let o = dpp(&[
        "run",
        "--dataset",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.txt"));
}

#[test]
fn random_order_cells_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = dpp(&[
            "run",
            "--dataset",
            &data("topics.txt"),
            "--out",
            out.to_str().unwrap(),
            "--algo",
            "cs-dpp-pbt",
            "--cost",
            "f1",
            "--label-order",
            "random",
            "--order-seed",
            "5",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs(&out)
            .iter()
            .map(|p| fs::read(p).unwrap())
            .collect::<Vec<_>>()
    };
    let a = run("a");
    assert_eq!(a.len(), 1);
    assert_eq!(a, run("b"));
    let text = String::from_utf8(a[0].clone()).unwrap();
    assert!(text.contains("# label_order: {\"kind\":\"random\",\"seed\":5}"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = dir.path().join("grid.json");
    let json = serde_json::json!({
        "dataset": data("topics.txt"),
        "output": out,
        "algorithms": ["dpp-pbc", "o-br"],
        "costs": ["accuracy"],
        "repeats": 2,
        "seed": 1,
        "engine": {"kind": "ridge", "lambda": 0.5},
    });
    fs::write(&config, json.to_string()).unwrap();
    let o = dpp(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--repeats",
        "1",
        "--lambda",
        "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = csvs(&out);
    assert_eq!(files.len(), 2);
    let text = fs::read_to_string(&files[0]).unwrap();
    assert!(text.contains("# cost: accuracy\n"));
    assert!(text.contains("\"lambda\":2.0"));
    assert!(text.contains("# seed: 1\n"));
}

#[test]
fn config_file_with_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"datset": "x"}"#).unwrap();
    let o = dpp(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn arff_input_with_label_list() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = dpp(&[
        "run",
        "--dataset",
        &data("topics.arff"),
        "--format",
        "arff",
        "--labels",
        &data("topics.labels"),
        "--out",
        out.to_str().unwrap(),
        "--algo",
        "o-rand",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csvs(&out)[0]).unwrap();
    assert!(text.contains("# iterations: 80\n"));
}

#[test]
fn regret_stride_writes_regret_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = dpp(&[
        "run",
        "--dataset",
        &data("topics.txt"),
        "--out",
        out.to_str().unwrap(),
        "--algo",
        "dpp-pbc",
        "--regret-stride",
        "10",
        "--limit",
        "200",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let files = csvs(&out);
    assert_eq!(files.len(), 2);
    let regret = files
        .iter()
        .find(|p| p.to_string_lossy().ends_with(".regret.csv"))
        .unwrap();
    let text = fs::read_to_string(regret).unwrap();
    assert!(text.contains("t,delta,avg_regret\n1,"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 21);
}

#[test]
fn verify_reports_json() {
    let o = dpp(&["verify", "sherman"]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["suite"], "sherman");
    assert_eq!(report["passed"], true);
    assert!(report["properties"].as_array().unwrap().len() >= 3);
}

#[test]
fn verify_condition_probe_for_one_cost() {
    let o = dpp(&["verify", "lemma3", "--cost", "rank", "--trials", "5000"]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let props = report["properties"].as_array().unwrap();
    assert!(props
        .iter()
        .all(|p| p["name"].as_str().unwrap().ends_with("/rank")));
    let probe = props
        .iter()
        .find(|p| p["name"] == "condition_random/rank")
        .unwrap();
    assert_eq!(probe["checked"], 5000);
    assert!(probe["witness"].is_null());
}

#[test]
fn verify_unknown_suite_is_a_usage_error() {
    let o = dpp(&["verify", "lemma2"]);
    assert_eq!(o.status.code(), Some(2));
}
