use std::path::Path;
use std::process::{Command, Output};

fn neupred(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neupred"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NEUPRED_OUT_DIR")
        .env_remove("NEUPRED_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const RANDOM5: &[&str] = &[
    "search", "--strategy", "random", "--space", "synthetic", "--synthetic", "--oracle-seed", "4",
    "--budget-models", "5", "--out", "r5",
];

#[test]
fn search_writes_events_final_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = neupred(RANDOM5, dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let jsonl = std::fs::read_to_string(dir.path().join("r5.jsonl")).unwrap();
    let lines: Vec<&str> = jsonl.lines().collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines.iter().filter(|l| l.contains("\"type\":\"event\"")).count(), 5);
    assert!(lines[5].contains("\"type\":\"final\""));
    assert!(!jsonl.contains("wall"));
    let csv = std::fs::read_to_string(dir.path().join("r5.csv")).unwrap();
    assert!(csv.starts_with("budget,mean_test,sd_test,mean_val,sd_val\n"));
    let summary = std::fs::read_to_string(dir.path().join("r5.summary.json")).unwrap();
    assert!(summary.contains("wall_seconds"));
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "strategy = \"evolution\"\nspace = \"synthetic\"\nbudget = { models = 40 }\nreplicas = 3\nout = \"evo\"\n\
         oracle = { synthetic = { seed = 9 } }\n[evolution]\npopulation_size = 10\nsample_size = 3\n",
    )
    .unwrap();
    let run = |threads: &str| {
        let o = neupred(&["search", "--config", "exp.toml", "--threads", threads], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        std::fs::read(dir.path().join("evo.jsonl")).unwrap()
    };
    let first = run("1");
    assert_eq!(first, run("1"));
    assert_eq!(first, run("2"));
}

#[test]
fn env_overrides_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_neupred"))
        .args(RANDOM5)
        .current_dir(dir.path())
        .env("NEUPRED_OUT_DIR", dir.path().join("outdir"))
        .env("NEUPRED_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("outdir/r5.jsonl").is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&neupred(&[], dir.path())), 1);
    assert_eq!(code(&neupred(&["search", "--bogus"], dir.path())), 1);
    assert_eq!(code(&neupred(&["--help"], dir.path())), 0);

    std::fs::write(dir.path().join("empty.toml"), "").unwrap();
    let o = neupred(&["search", "--config", "empty.toml"], dir.path());
    assert_eq!(code(&o), 2);
    for field in ["strategy", "space", "budget", "oracle"] {
        assert!(stderr(&o).contains(field), "{}", stderr(&o));
    }

    std::fs::write(
        dir.path().join("typo.toml"),
        "strategy = \"evolution\"\nspace = \"synthetic\"\nbudget = { models = 5 }\n\
         oracle = { synthetic = {} }\n[evolution]\npoplation_size = 5\n",
    )
    .unwrap();
    let o = neupred(&["search", "--config", "typo.toml"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("poplation_size"), "{}", stderr(&o));

    let o = neupred(
        &["search", "--strategy", "random", "--oracle-file", "missing.tsv", "--budget-models", "5"],
        dir.path(),
    );
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    let o = neupred(&["predict", "--model", "nope.json", "--arch", "x"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn table_round_trip_and_oracle_search() {
    let dir = tempfile::tempdir().unwrap();
    let o = neupred(&["gen-synthetic-table", "--oracle-seed", "2", "--out", "synth.tsv"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("synth.tsv")).unwrap();
    assert_eq!(table.lines().filter(|l| !l.starts_with('#')).count(), 1024);
    let o = neupred(&["search", "--strategy", "oracle", "--oracle-file", "synth.tsv", "--out", "orc"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let jsonl = std::fs::read_to_string(dir.path().join("orc.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 1025);
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let o = neupred(
        &["train-predictor", "--synthetic", "--oracle-seed", "3", "--n", "20", "--seed", "1", "--out", "m.json"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = neupred(
        &["predict", "--model", "m.json", "--arch", "ops=0,1,2,3,0;adj=0110000100000110000100000", "--arch", "ops=3,3,3,3,3;adj=0110000100000110000100000"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().count(), 2);
    for line in out.lines() {
        let pred: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
        assert!(pred > 10.0 && pred < 100.0);
    }
    let o = neupred(&["predict", "--model", "m.json", "--arch", "ops=9;adj="], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn report_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    for (s, out) in [("random", "a"), ("evolution", "b")] {
        let o = neupred(
            &["search", "--strategy", s, "--synthetic", "--budget-models", "30", "--replicas", "3", "--out", out],
            dir.path(),
        );
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let o = neupred(&["report", "a.jsonl"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert_eq!(csv, std::fs::read_to_string(dir.path().join("a.csv")).unwrap());

    let o = neupred(&["compare", "a.jsonl", "b.jsonl"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    let mut rows = table.lines();
    assert_eq!(rows.next(), Some("target,budget_a,budget_b,speedup"));
    assert_eq!(rows.count(), 5);
}
