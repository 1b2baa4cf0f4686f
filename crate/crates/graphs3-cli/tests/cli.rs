//! Black-box checks of the binary: exit codes, run-dir artifacts, flag
//! precedence, and byte determinism across separate processes.

use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_graphs3");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .unwrap()
        .join("graphs3/fixtures")
        .join(name)
}

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    /// The run directory announced on stdout.
    fn run_dir(&self) -> PathBuf {
        let line = self
            .stdout
            .lines()
            .find(|l| l.starts_with("run dir: "))
            .unwrap_or_else(|| panic!("no run dir line in {:?}", self.stdout));
        PathBuf::from(line.trim_start_matches("run dir: "))
    }
}

fn graphs3(args: &[&str]) -> Run {
    let output = Command::new(BIN)
        .args(args)
        .output()
        .expect("binary spawns");
    Run {
        code: output.status.code().expect("no signal"),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

/// One-question set matching the bundled trajectory fixture.
fn write_questions(dir: &Path) -> PathBuf {
    let path = dir.join("questions.jsonl");
    let row = serde_json::json!({
        "id": "oharu-0",
        "question": "the films that share directors with the film [The Life of Oharu] were in which genres",
        "entities": ["The Life of Oharu"],
        "answers": ["Drama"],
    });
    std::fs::write(&path, format!("{row}\n")).unwrap();
    path
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

#[test]
fn stats_prints_sizes_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let run = graphs3(&["stats", "--graph", &s(&fixture("oharu_graph.tsv")), "--out", &s(&out)]);
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    assert!(run.stdout.contains("triple_count=16"), "stdout: {}", run.stdout);
    assert!(run.stdout.contains("max_degree=9"));

    let dir = run.run_dir();
    let stats = std::fs::read_to_string(dir.join("stats.txt")).unwrap();
    assert!(stats.contains("entity_count=15"));
    let echo = std::fs::read_to_string(dir.join("config.txt")).unwrap();
    assert!(echo.contains("format = tsv"), "defaults echoed: {echo}");
    assert!(echo.contains(&format!("out = {}", s(&out))));
}

#[test]
fn missing_graph_is_a_config_error() {
    let run = graphs3(&["stats", "--graph", "/no/such/file.tsv"]);
    assert_eq!(run.code, 2, "stderr: {}", run.stderr);
    assert!(run.stderr.contains("config error"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "graph = g.tsv\nbogus_knob = 1\n").unwrap();
    let run = graphs3(&["stats", "--config", &s(&cfg)]);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("bogus_knob"), "stderr: {}", run.stderr);
}

#[test]
fn malformed_graph_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let graph = tmp.path().join("broken.tsv");
    std::fs::write(&graph, "only\ttwo\n").unwrap();
    let run = graphs3(&["stats", "--graph", &s(&graph), "--out", &s(&tmp.path().join("out"))]);
    assert_eq!(run.code, 4, "stderr: {}", run.stderr);
}

#[test]
fn unwritable_out_dir_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("blocker");
    std::fs::write(&blocker, "").unwrap();
    let run = graphs3(&[
        "stats",
        "--graph",
        &s(&fixture("oharu_graph.tsv")),
        "--out",
        &s(&blocker.join("sub")),
    ]);
    assert_eq!(run.code, 4, "stderr: {}", run.stderr);
}

#[test]
fn empty_question_set_is_an_empty_result() {
    let tmp = tempfile::tempdir().unwrap();
    let questions = tmp.path().join("none.jsonl");
    std::fs::write(&questions, "").unwrap();
    let run = graphs3(&[
        "eval",
        "--graph",
        &s(&fixture("oharu_graph.tsv")),
        "--questions",
        &s(&questions),
        "--retrievers",
        "khop1",
        "--out",
        &s(&tmp.path().join("out")),
    ]);
    assert_eq!(run.code, 3, "stderr: {}", run.stderr);
}

/// synthesize -> refine -> label over the bundled trajectory, checking the
/// artifacts stay consistent: label reproduces refine's rl.jsonl bytes.
#[test]
fn oracle_pipeline_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let questions = write_questions(tmp.path());
    let out = s(&tmp.path().join("out"));
    let graph = s(&fixture("oharu_graph.tsv"));

    let synth = graphs3(&[
        "synthesize",
        "--graph",
        &graph,
        "--questions",
        &s(&questions),
        "--trajectories",
        &s(&fixture("oharu_trajectory.jsonl")),
        "--policy",
        "oracle",
        "--out",
        &out,
    ]);
    assert_eq!(synth.code, 0, "stderr: {}", synth.stderr);
    assert!(synth.stdout.contains("retained 1 / 1 episodes"), "{}", synth.stdout);
    let synth_dir = synth.run_dir();
    let sft = std::fs::read_to_string(synth_dir.join("sft.jsonl")).unwrap();
    assert_eq!(sft.lines().count(), 7, "one record per decided step");
    for line in sft.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["prompt"].as_str().unwrap().contains("[The Life of Oharu]"));
        assert!(record["completion"].as_str().unwrap().contains("Action Decision:"));
    }

    let dumped = synth_dir.join("trajectories.jsonl");
    let refine = graphs3(&[
        "refine",
        "--graph",
        &graph,
        "--trajectories",
        &s(&dumped),
        "--out",
        &out,
    ]);
    assert_eq!(refine.code, 0, "stderr: {}", refine.stderr);
    assert!(refine.stdout.contains("refined 1 trajectories"), "{}", refine.stdout);
    let refine_dir = refine.run_dir();
    let report = std::fs::read_to_string(refine_dir.join("report.jsonl")).unwrap();
    let entry: serde_json::Value = serde_json::from_str(report.lines().next().unwrap()).unwrap();
    assert_eq!(entry["source_len"], 7);
    assert_eq!(entry["refined_len"], 5);
    assert_eq!(entry["mode_used"], "exact");
    let rl_from_refine = std::fs::read(refine_dir.join("rl.jsonl")).unwrap();
    assert!(!rl_from_refine.is_empty());

    let label = graphs3(&[
        "label",
        "--graph",
        &graph,
        "--questions",
        &s(&questions),
        "--refined",
        &s(&refine_dir.join("refined.jsonl")),
        "--out",
        &out,
    ]);
    assert_eq!(label.code, 0, "stderr: {}", label.stderr);
    let rl_from_label = std::fs::read(label.run_dir().join("rl.jsonl")).unwrap();
    assert_eq!(rl_from_label, rl_from_refine, "label must reproduce refine's labels");
}

#[test]
fn trace_replays_one_question() {
    let tmp = tempfile::tempdir().unwrap();
    let questions = write_questions(tmp.path());
    let args = [
        "trace",
        "oharu-0",
        "--graph",
        &s(&fixture("oharu_graph.tsv")),
        "--questions",
        &s(&questions),
        "--trajectories",
        &s(&fixture("oharu_trajectory.jsonl")),
        "--policy",
        "oracle",
        "--out",
        &s(&tmp.path().join("out")),
    ];
    let run = graphs3(&args);
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    assert!(run.stdout.contains("== step 1"));
    assert!(run.stdout.contains("final: answers=[\"Drama\"]"), "{}", run.stdout);
    let transcript = std::fs::read_to_string(run.run_dir().join("transcript.txt")).unwrap();
    assert!(transcript.contains("-- decision: Finish [\"Drama\"]"));

    let mut bad = args;
    bad[1] = "nope-9";
    let run = graphs3(&bad);
    assert_eq!(run.code, 2);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let questions = write_questions(tmp.path());
    let cfg = tmp.path().join("run.cfg");
    // the file picks settings that would sink the run; flags rescue it
    std::fs::write(
        &cfg,
        format!(
            "graph = {}\nquestions = {}\ntrajectories = {}\npolicy = random\nt_max = 3\nout = {}\n",
            s(&fixture("oharu_graph.tsv")),
            s(&questions),
            s(&fixture("oharu_trajectory.jsonl")),
            s(&tmp.path().join("out")),
        ),
    )
    .unwrap();
    let run = graphs3(&[
        "synthesize",
        "--config",
        &s(&cfg),
        "--policy",
        "oracle",
        "--t-max",
        "20",
    ]);
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let echo = std::fs::read_to_string(run.run_dir().join("config.txt")).unwrap();
    assert!(echo.contains("policy = oracle"), "echo shows the winning value: {echo}");
    assert!(echo.contains("t_max = 20"));
}

#[test]
fn eval_is_byte_deterministic_across_processes() {
    let tmp = tempfile::tempdir().unwrap();
    let questions = write_questions(tmp.path());
    let mut dirs = Vec::new();
    for _ in 0..2 {
        let run = graphs3(&[
            "eval",
            "--graph",
            &s(&fixture("oharu_graph.tsv")),
            "--questions",
            &s(&questions),
            "--retrievers",
            "interactive,khop1,khop2,full_graph,no_graph",
            "--policy",
            "random",
            "--seed",
            "7",
            "--parallelism",
            "3",
            "--strict-acc",
            "true",
            "--out",
            &s(&tmp.path().join("out")),
        ]);
        assert_eq!(run.code, 0, "stderr: {}", run.stderr);
        assert!(run.stdout.contains("khop1"));
        dirs.push(run.run_dir());
    }
    for artifact in ["table.txt", "runs.jsonl"] {
        let a = std::fs::read(dirs[0].join(artifact)).unwrap();
        let b = std::fs::read(dirs[1].join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} must not depend on the process");
    }
}
