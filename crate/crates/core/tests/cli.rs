//! End-to-end runs of the `toolamp` binary.

use std::path::Path;
use std::process::{Command, Output};

use toolamp::amplifier::read_library;
use toolamp::report::{parse_jsonl, AmpRow};
use toolamp::topology::MasRow;

fn toolamp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toolamp")).args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const ENV: &str = r#"{
  "n_instances": 120,
  "tools": [{"name": "A", "p_correct": 0.7}, {"name": "B", "p_correct": 0.6}],
  "policy": {"judge_accuracy": 0.9},
  "seed": 11
}"#;

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("env.json"), ENV).unwrap();
    dir
}

#[test]
fn gen_env_writes_dataset_and_tools() {
    let dir = workspace();
    ok(&toolamp(&["gen-env", "--spec", "env.json", "--out-dir", "gen"], dir.path()));
    let data = toolamp::dataset::load_dataset(dir.path().join("gen/dataset.jsonl")).unwrap();
    assert_eq!(data.len(), 120);
    let tools: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gen/tools.json")).unwrap()).unwrap();
    let ids: Vec<&str> = tools.as_array().unwrap().iter().map(|t| t["tool_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["A_0", "B_0"]);
}

#[test]
fn amplify_is_byte_reproducible_serial_and_parallel() {
    let dir = workspace();
    let run = |out: &str, parallel: bool| {
        let mut args = vec!["amplify", "--env", "env.json", "--metric", "exact", "--seed", "5", "--out", out];
        if parallel {
            args.push("--parallel");
        }
        ok(&toolamp(&args, dir.path()))
    };
    let first = run("lib1.jsonl", false);
    run("lib2.jsonl", false);
    run("lib3.jsonl", true);
    let read = |name: &str| std::fs::read(dir.path().join(name)).unwrap();
    assert_eq!(read("lib1.jsonl"), read("lib2.jsonl"));
    assert_eq!(read("lib1.jsonl"), read("lib3.jsonl"));
    assert!(first.contains("best: "));
    let library = read_library(dir.path().join("lib1.jsonl")).unwrap();
    assert!(library.len() >= 4);
    assert!(library.windows(2).all(|w| w[0].created_step < w[1].created_step));
}

#[test]
fn amplify_rows_cover_every_candidate_and_report_renders_them() {
    let dir = workspace();
    std::fs::create_dir(dir.path().join("run")).unwrap();
    ok(&toolamp(
        &[
            "amplify",
            "--env",
            "env.json",
            "--metric",
            "exact",
            "--out",
            "run/library.jsonl",
            "--rows",
            "run/rows.jsonl",
        ],
        dir.path(),
    ));
    let library = read_library(dir.path().join("run/library.jsonl")).unwrap();
    let rows: Vec<AmpRow> = parse_jsonl(&std::fs::read_to_string(dir.path().join("run/rows.jsonl")).unwrap()).unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, library.iter().map(|r| r.name.as_str()).collect::<Vec<_>>());

    ok(&toolamp(&["mas", "--env", "env.json", "--kind", "star", "--num", "3", "--out", "run/mas.jsonl"], dir.path()));
    let report = ok(&toolamp(&["report", "run"], dir.path()));
    for name in names {
        assert!(report.contains(name), "{name} missing from report");
    }
    assert!(report.contains("star"));
}

#[test]
fn evaluate_scores_a_named_composite() {
    let dir = workspace();
    ok(&toolamp(&["gen-env", "--spec", "env.json", "--out-dir", "gen", "--seed", "99"], dir.path()));
    let out = ok(&toolamp(
        &[
            "evaluate",
            "--env",
            "env.json",
            "--name",
            "['A_0', 'B_1']",
            "--test",
            "gen/dataset.jsonl",
            "--metric",
            "exact",
        ],
        dir.path(),
    ));
    let value: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(value["name"], "['A_0', 'B_1']");
    assert_eq!(value["report"]["count"], 120);
    let fitness = value["report"]["fitness"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&fitness));
    assert!(value["ledger"]["calls"].as_u64().unwrap() > 0);
}

#[test]
fn mas_rows_are_reproducible() {
    let dir = workspace();
    let args =
        ["mas", "--env", "env.json", "--kind", "layered", "--num", "4", "--rounds", "2", "--with-tools", "--seed", "3"];
    let a = ok(&toolamp(&[&args[..], &["--out", "a.jsonl"]].concat(), dir.path()));
    let b = ok(&toolamp(&[&args[..], &["--out", "b.jsonl"]].concat(), dir.path()));
    assert_eq!(a, b);
    let rows: Vec<MasRow> = parse_jsonl(&std::fs::read_to_string(dir.path().join("a.jsonl")).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].num, rows[0].rounds), (4, 2));
    assert!(rows[0].all_tokens > 0);
}

#[test]
fn parse_name_prints_structure() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&toolamp(&["parse-name", "[[\"SMILES2Property_1\",\"UniMol_0\"],'SMILES2Property_1']"], dir.path()));
    let value: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(value["name"], "[['SMILES2Property_1', 'UniMol_0'], 'SMILES2Property_1']");
    assert_eq!(value["leaves"].as_array().unwrap().len(), 3);
    assert_eq!(value["depth"], 2);
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = workspace();
    let code = |args: &[&str]| toolamp(args, dir.path()).status.code().unwrap();

    assert_eq!(code(&["parse-name", "['X_a']"]), 2);
    std::fs::write(dir.path().join("bad.json"), r#"{"serch": {}}"#).unwrap();
    assert_eq!(code(&["--config", "bad.json", "parse-name", "['A_0']"]), 2);
    assert_eq!(code(&["amplify", "--env", "env.json", "--metric", "levenshtein", "--out", "x.jsonl"]), 2);

    std::fs::write(dir.path().join("empty.jsonl"), "").unwrap();
    assert_eq!(code(&["amplify", "--env", "env.json", "--val", "empty.jsonl", "--out", "x.jsonl"]), 3);
    assert_eq!(code(&["report", "missing-dir"]), 3);

    std::fs::write(
        dir.path().join("tools.json"),
        r#"[{"tool_id": "Broken_0", "backend": "external_command", "backend_params": {"command": "false"}}]"#,
    )
    .unwrap();
    std::fs::write(
        dir.path().join("val.jsonl"),
        r#"{"id": "a", "input": "q", "gold": "CCO", "task_kind": "molecule_design"}"#,
    )
    .unwrap();
    assert_eq!(code(&["amplify", "--tools", "tools.json", "--val", "val.jsonl", "--out", "x.jsonl"]), 4);
}
