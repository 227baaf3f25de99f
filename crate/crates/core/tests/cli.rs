use std::path::Path;
use std::process::{Command, Output};

fn dpodyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpodyn")).args(args).env("DPODYN_JOBS", "1").output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const TRAIN: &str = r#"{"data":{"generate":{"d":8,"n_per_behavior":20,"behaviors":[{"id":"a","delta":0.3},{"id":"b","delta":0.1}]}},
  "train":{"beta":0.3,"eta":0.5,"steps":15},"seeds":[4]}"#;

#[test]
fn train_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "train.json", TRAIN);
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = dpodyn(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        outs.push((std::fs::read(out.join("trace.csv")).unwrap(), std::fs::read(out.join("trace_head.json")).unwrap()));
    }
    assert_eq!(outs[0], outs[1]);
    let csv = String::from_utf8(outs[0].0.clone()).unwrap();
    assert_eq!(csv.lines().count(), 17);
}

#[test]
fn generate_then_train_from_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "gen.json", TRAIN);
    let data = dir.path().join("data");
    let o = dpodyn(&["generate", "--config", &cfg, "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("dataset.jsonl").exists());
    assert!(data.join("dataset_moments.json").exists());

    let cfg2 = write(
        dir.path(),
        "train2.json",
        r#"{"data":{"path":"data/dataset.jsonl"},"train":{"beta":0.3,"eta":0.5,"steps":5}}"#,
    );
    let out = dir.path().join("run");
    let o = dpodyn(&["train", "--config", &cfg2, "--out", out.to_str().unwrap(), "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("trace.json").exists());
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"data":{"generate":{"d":8,"n_per_behavior":20,"behaviors":[]}},"bogus":1}"#);
    assert_eq!(dpodyn(&["train", "--config", &cfg]).status.code(), Some(2));
    let cfg = write(dir.path(), "neg.json", r#"{"data":{"generate":{"d":8,"n_per_behavior":20,"behaviors":[{"id":"a","delta":0.2}]}},"train":{"beta":-1,"eta":0.1,"steps":3}}"#);
    assert_eq!(dpodyn(&["train", "--config", &cfg]).status.code(), Some(2));
    assert_eq!(dpodyn(&["train"]).status.code(), Some(2));
}

#[test]
fn missing_or_malformed_data_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"data":{"path":"nowhere.jsonl"},"train":{"beta":0.3,"eta":0.5,"steps":5}}"#);
    assert_eq!(dpodyn(&["train", "--config", &cfg]).status.code(), Some(4));
    write(dir.path(), "broken.jsonl", "{\"not\": \"a dataset\"}\n");
    let cfg = write(dir.path(), "c2.json", r#"{"data":{"path":"broken.jsonl"},"train":{"beta":0.3,"eta":0.5,"steps":5}}"#);
    assert_eq!(dpodyn(&["train", "--config", &cfg]).status.code(), Some(4));
}

#[test]
fn divergence_exits_3_and_keeps_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "div.json",
        r#"{"data":{"generate":{"d":4,"n_per_behavior":20,"behaviors":[{"id":"a","delta":0.5}]}},"train":{"beta":20,"eta":1000,"steps":50}}"#,
    );
    let out = dir.path().join("o");
    let o = dpodyn(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
}

#[test]
fn recipes_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("sweep", r#"{"kind":"sweep","data":{"generate":{"d":8,"n_per_behavior":20,"behaviors":[{"id":"a","delta":0.2}]}},"train":{"beta":0.3,"eta":0.5,"steps":5},"sweep":{"axis":"eta","values":[0.1,0.5]}}"#, "sweep_summary.json"),
        ("priority", TRAIN, "priority_seed4.json"),
        ("misalign", r#"{"kind":"misalign","data":{"generate":{"d":8,"n_per_behavior":20,"behaviors":[{"id":"a","delta":0.3}]}},"train":{"beta":0.3,"eta":0.5,"steps":40},"misalign":{"kappa_sep":2,"kappa_var":0.5}}"#, "misalign_summary.json"),
        ("bounds", r#"{"kind":"bounds","data":{"generate":{"d":64,"n_per_behavior":20,"behaviors":[{"id":"a","delta":0.2}]}},"bounds":{"beta_prime":1,"steps":10}}"#, "bounds_summary.json"),
        ("project", r#"{"data":{"generate":{"d":8,"n_per_behavior":20,"behaviors":[{"id":"a","delta":0.3}]}},"project":{"shift":[2,0.5]}}"#, "projection_shifted.svg"),
    ];
    for (cmd, text, expect) in cases {
        let text = if cmd == "priority" { text.replacen("{\"data\"", "{\"kind\":\"priority\",\"data\"", 1) } else { text.to_string() };
        let cfg = write(dir.path(), &format!("{cmd}.json"), &text);
        let out = dir.path().join(cmd);
        let o = dpodyn(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let names: Vec<String> =
            std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
        assert!(names.iter().any(|n| n == expect), "{cmd}: {names:?}");
    }
}

#[test]
fn wrong_kind_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "t.json", TRAIN);
    assert_eq!(dpodyn(&["sweep", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn render_chart_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "chart.json",
        r#"{"title":"t","x_label":"x","y_label":"y","log_x":false,"log_y":true,"series":[{"label":"s","x":[0,1,2],"y":[1,10,100]}]}"#,
    );
    let out = dir.path().join("c.svg");
    let o = dpodyn(&["render", "--config", &spec, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("<svg"));

    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"title":"t","x_label":"x","y_label":"y","log_x":false,"log_y":true,"series":[{"label":"s","x":[0,1],"y":[0,1]}]}"#,
    );
    assert_eq!(dpodyn(&["render", "--config", &bad, "--out", out.to_str().unwrap()]).status.code(), Some(2));
}
