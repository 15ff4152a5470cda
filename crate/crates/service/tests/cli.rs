mod common;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use phenoflow::fixtures::{self, case1};
use phenoflow::imaging::write_solid_png;
use phenoflow::registry::ModelZoo;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_phenoflow");
const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/adapter_golden.json");

fn phenoflow(store: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--store-root")
        .arg(store)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn sessions_in(store: &Path) -> usize {
    match std::fs::read_dir(store) {
        Ok(entries) => entries
            .flatten()
            .filter(|e| e.path().join("events.jsonl").is_file())
            .count(),
        Err(_) => 0,
    }
}

/// Session id from the final `session <id>: <status>` line on stderr.
fn session_id(out: &Output) -> String {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().rev().find(|l| l.starts_with("session ")).unwrap();
    line["session ".len()..].split(':').next().unwrap().to_owned()
}

struct Case1 {
    _dir: tempfile::TempDir,
    store: std::path::PathBuf,
    work: std::path::PathBuf,
    prompt: std::path::PathBuf,
    turns: std::path::PathBuf,
}

fn case1_setup() -> Case1 {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let work = dir.path().join("work");
    std::fs::create_dir_all(&store).unwrap();
    case1::write_dataset(&work).unwrap();
    let zoo = ModelZoo::open(store.join("model_zoo.json")).unwrap();
    fixtures::install_models(&zoo, &case1::model_zoo_entries().unwrap()).unwrap();
    let prompt = dir.path().join("prompt.txt");
    std::fs::write(&prompt, case1::PROMPT).unwrap();
    let turns = dir.path().join("turns.json");
    std::fs::write(&turns, serde_json::to_string(&case1::turns()).unwrap()).unwrap();
    Case1 {
        _dir: dir,
        store,
        work,
        prompt,
        turns,
    }
}

#[test]
fn run_with_a_missing_prompt_file_exits_2_without_a_session() {
    let dir = tempfile::tempdir().unwrap();
    let out = phenoflow(dir.path(), &["run", "/definitely/not/here.txt"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(sessions_in(dir.path()), 0);
    let missing_config = phenoflow(dir.path(), &["--config", "/nope.conf", "zoo"]);
    assert_eq!(code(&missing_config), 2);
}

#[test]
fn run_case1_then_save_and_replay_the_pipeline() {
    let c = case1_setup();
    let out = phenoflow(
        &c.store,
        &[
            "run",
            c.prompt.to_str().unwrap(),
            "--replay",
            c.turns.to_str().unwrap(),
            "--workdir",
            c.work.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("plan: "), "{stdout}");
    assert!(c.work.join(case1::RESULT_PATH).is_file());
    let id = session_id(&out);

    let mut save = vec!["pipelines", "save", "--session", &id, "--name", case1::PIPELINE_NAME];
    let binds: Vec<String> = vec![
        format!("metadata_path={}", case1::METADATA_PATH),
        format!("output_dir={}", case1::OUTPUT_DIR),
    ];
    let optional = format!("pixel_to_cm={}", case1::PIXEL_TO_CM);
    for b in &binds {
        save.extend(["--bind", b.as_str()]);
    }
    save.extend(["--optional", optional.as_str()]);
    let out = phenoflow(&c.store, &save);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(manifest["steps"].as_array().unwrap().len(), 4);

    let listed = phenoflow(&c.store, &["pipelines"]);
    assert!(String::from_utf8_lossy(&listed.stdout).starts_with(case1::PIPELINE_NAME));

    let rerun = c.work.parent().unwrap().join("rerun");
    case1::write_dataset(&rerun).unwrap();
    let meta = format!("metadata_path={}", case1::METADATA_PATH);
    let missing = phenoflow(
        &c.store,
        &["replay", case1::PIPELINE_NAME, "--arg", &meta, "--workdir", rerun.to_str().unwrap()],
    );
    assert_eq!(code(&missing), 2, "{}", String::from_utf8_lossy(&missing.stderr));
    assert!(!rerun.join(case1::RESULT_PATH).exists());

    let outdir = format!("output_dir={}", case1::OUTPUT_DIR);
    let out = phenoflow(
        &c.store,
        &["replay", case1::PIPELINE_NAME, "--arg", &meta, "--arg", &outdir, "--workdir", rerun.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(c.work.join(case1::RESULT_PATH)).unwrap(),
        std::fs::read(rerun.join(case1::RESULT_PATH)).unwrap()
    );
    assert_eq!(code(&phenoflow(&c.store, &["replay", "no_such_pipeline"])), 2);
}

#[test]
fn gated_run_needs_yes_and_chat_prompts_for_approval() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let turns = dir.path().join("anova.json");
    std::fs::write(&turns, serde_json::to_string(&common::anova_turns()).unwrap()).unwrap();
    let prompt = dir.path().join("prompt.txt");
    std::fs::write(&prompt, "compare the groups").unwrap();
    let work = dir.path().join("work");
    std::fs::create_dir_all(&work).unwrap();
    common::write_groups(&work);
    let base = [
        "--replay",
        turns.to_str().unwrap(),
        "--workdir",
        work.to_str().unwrap(),
        "--gated",
    ];

    let mut args = vec!["run", prompt.to_str().unwrap()];
    args.extend(base);
    let refused = phenoflow(&store, &args);
    assert_eq!(code(&refused), 1);
    assert!(!work.join("anova.csv").exists());
    args.push("--yes");
    assert_eq!(code(&phenoflow(&store, &args)), 0);
    std::fs::remove_file(work.join("anova.csv")).unwrap();

    let mut args = vec!["chat", "--json"];
    args.extend(base);
    let mut child = Command::new(BIN)
        .arg("--store-root")
        .arg(&store)
        .args(&args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"compare the groups\ny\n/quit\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let kinds: Vec<String> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["kind"].as_str().unwrap().to_owned())
        .collect();
    let pos = |k: &str| kinds.iter().position(|x| x == k).unwrap();
    assert!(pos("plan") < pos("approval_requested"));
    assert!(pos("approval_resolved") < pos("tool_call_started"));
    assert_eq!(kinds.last().unwrap(), "terminated");
    assert!(work.join("anova.csv").exists());
}

#[test]
fn eval_writes_reports_and_rejects_unknown_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("reports");
    let out = phenoflow(
        &dir.path().join("store"),
        &["eval", "tool-selection", "--provider", "replay", "--out", out_dir.to_str().unwrap()],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("7/10"));
    let json_report = std::fs::read_dir(&out_dir)
        .unwrap()
        .flatten()
        .map(|e| e.path())
        .find(|p| p.extension().is_some_and(|e| e == "json"))
        .unwrap();
    let report: Value = serde_json::from_str(&std::fs::read_to_string(json_report).unwrap()).unwrap();
    assert_eq!(report["results"].as_array().unwrap().len(), 10);
    assert_eq!(report["total"], 10);

    let bad = phenoflow(dir.path(), &["eval", "vibes"]);
    assert_eq!(code(&bad), 2);
    let live = phenoflow(dir.path(), &["eval", "tool-selection", "--provider", "live"]);
    assert_eq!(code(&live), 2);
}

#[test]
fn zoo_lists_and_registers_models() {
    let dir = tempfile::tempdir().unwrap();
    let entries = dir.path().join("entries.json");
    std::fs::write(&entries, serde_json::to_string(&case1::model_zoo_entries().unwrap()).unwrap()).unwrap();
    let out = phenoflow(dir.path(), &["zoo", "--add", entries.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).lines().any(|l| l == case1::CHECKPOINT));
    let again = phenoflow(dir.path(), &["zoo", "--json"]);
    let models: Value = serde_json::from_slice(&again.stdout).unwrap();
    assert_eq!(models.as_array().unwrap().len(), case1::model_zoo_entries().unwrap().len());
}

#[test]
fn every_command_documents_its_flags() {
    for cmd in ["chat", "run", "replay", "zoo", "pipelines", "eval", "serve"] {
        let out = Command::new(BIN).args([cmd, "--help"]).output().unwrap();
        assert_eq!(code(&out), 0, "{cmd}");
        let help = String::from_utf8_lossy(&out.stdout);
        assert!(help.contains("--store-root") && help.contains("--config"), "{cmd}: {help}");
    }
    assert_eq!(code(&Command::new(BIN).arg("bogus").output().unwrap()), 2);
}

fn scratch(root: &Path) {
    std::fs::create_dir_all(root.join("images")).unwrap();
    write_solid_png(root.join("images/a.png"), 64, 48, [20, 120, 20]).unwrap();
    write_solid_png(root.join("images/b.png"), 80, 80, [30, 140, 30]).unwrap();
    std::fs::create_dir_all(root.join("raw")).unwrap();
    std::fs::create_dir_all(root.join("dataset")).unwrap();
    std::fs::write(
        root.join("dataset/split.json"),
        r#"{"per_class":{"dry":{"train":3,"val":1},"wet":{"train":3,"val":1}}}"#,
    )
    .unwrap();
}

#[test]
fn stub_adapter_subprocess_passes_the_golden_suite() {
    let dir = tempfile::tempdir().unwrap();
    scratch(dir.path());
    let root = dir.path().display().to_string();
    let golden: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(GOLDEN).unwrap()).unwrap();

    let mut child = Command::new(BIN)
        .arg("stub-adapter")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    for case in &golden {
        let line = match &case["request"] {
            Value::String(raw) => raw.clone(),
            req => req.to_string().replace("{root}", &root),
        };
        writeln!(stdin, "{line}").unwrap();
        let mut reply = String::new();
        stdout.read_line(&mut reply).unwrap();
        let got: Value = serde_json::from_str(&reply.replace(&root, "{root}")).unwrap();
        assert_eq!(got, case["response"], "{}", case["name"]);
        if let Some(expected) = case.get("writes") {
            let path = case["response"]["payload"]["output_path"].as_str().unwrap().replace("{root}", &root);
            let written = std::fs::read_to_string(path).unwrap().replace(&root, "{root}");
            assert_eq!(&serde_json::from_str::<Value>(&written).unwrap(), expected, "{}", case["name"]);
        }
    }
    drop(stdin);
    assert!(child.wait().unwrap().success());
}
