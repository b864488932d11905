use std::fs;
use std::io::{BufRead, BufReader, Cursor, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use fsibo_cli::asktell::{run_asktell, AskTellOutcome, EngineMessage};
use fsibo_cli::config::preset;
use fsibo_cli::output::{PersistedState, STATE_FILE};
use fsibo_cli::run::{run_auto, RunOptions, RunOutcome};
use fsibo_cli::{parse_config, Campaign};
use tempfile::tempdir;

const BIN: &str = env!("CARGO_BIN_EXE_fsibo");

fn campaign(text: &str) -> Campaign {
    parse_config(text).unwrap()
}

fn with_overrides(preset_name: &str, extra_optimizer: &str) -> String {
    let base = preset(preset_name).unwrap();
    let mut out = String::new();
    for line in base.lines() {
        if line.starts_with("max_iters") && extra_optimizer.contains("max_iters") {
            continue;
        }
        out.push_str(line);
        out.push('\n');
        if line == "[optimizer]" {
            out.push_str(extra_optimizer);
            out.push('\n');
        }
    }
    out
}

fn run(c: &Campaign, dir: &Path, resume: bool, stop_after: Option<usize>) -> RunOutcome {
    run_auto(
        c,
        &RunOptions {
            out_dir: Some(dir.to_path_buf()),
            resume,
            stop_after,
        },
    )
    .unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let c = campaign(preset("example3").unwrap());
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    run(&c, a.path(), false, None);
    run(&c, b.path(), false, None);
    for f in ["log.csv", "best.csv", "summary.json", "state.json", "plots/final_delta.csv"] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn example3_structure() {
    let c = campaign(preset("example3").unwrap());
    let dir = tempdir().unwrap();
    let RunOutcome::Finished(summary) = run(&c, dir.path(), false, None) else {
        panic!()
    };
    let log = read(&dir.path().join("log.csv"));
    let rows: Vec<&str> = log.lines().collect();
    assert_eq!(rows[0], "Iteration,x_b,delta,feasible,best");
    assert_eq!(rows.iter().filter(|r| r.starts_with("Init,")).count(), 3);
    let proposals = rows.len() - 4;
    assert!(proposals <= 14);
    assert_eq!(proposals, summary.proposals);
}

#[test]
fn max_iters_zero_logs_only_init() {
    let text = with_overrides("example2", "max_iters = 0");
    let c = campaign(&text);
    let dir = tempdir().unwrap();
    let RunOutcome::Finished(summary) = run(&c, dir.path(), false, None) else {
        panic!()
    };
    assert_eq!(summary.stop_reason.to_string(), "budget");
    let log = read(&dir.path().join("log.csv"));
    assert_eq!(log.lines().count(), 1 + 4);
    assert!(log.lines().skip(1).all(|l| l.starts_with("Init,")));
    assert!(read(&dir.path().join("summary.json")).contains("\"budget\""));
}

#[test]
fn log_matches_state_exactly() {
    let c = campaign(preset("sailplane").unwrap());
    let dir = tempdir().unwrap();
    run(&c, dir.path(), false, None);
    let state = PersistedState::load(&dir.path().join(STATE_FILE)).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("log.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), state.campaign.history.len());
    for (row, rec) in rows.iter().zip(&state.campaign.history) {
        assert_eq!(&row[0], rec.tag.to_string());
        for (i, v) in rec.x.iter().enumerate() {
            assert_eq!(row[1 + i].parse::<f64>().unwrap(), *v);
        }
        assert_eq!(row[3].parse::<f64>().unwrap(), rec.objective().unwrap());
        for (k, v) in rec.constraints().unwrap().iter().enumerate() {
            assert_eq!(row[4 + k].parse::<f64>().unwrap(), *v);
        }
    }
}

#[test]
fn resume_equals_straight_run() {
    let c = campaign(preset("example1").unwrap());
    let straight = tempdir().unwrap();
    run(&c, straight.path(), false, None);
    let total = read(&straight.path().join("log.csv")).lines().count() - 1;
    for k in [1, 4, 6, total] {
        let dir = tempdir().unwrap();
        let RunOutcome::Paused { evaluations } = run(&c, dir.path(), false, Some(k)) else {
            panic!("paused run finished")
        };
        assert_eq!(evaluations, k);
        assert_eq!(read(&dir.path().join("log.csv")).lines().count(), 1 + k);
        run(&c, dir.path(), true, None);
        for f in ["log.csv", "best.csv", "state.json", "summary.json"] {
            assert_eq!(read(&straight.path().join(f)), read(&dir.path().join(f)), "{f} after pause at {k}");
        }
    }
}

#[test]
fn resume_rejects_other_configuration() {
    let dir = tempdir().unwrap();
    run(&campaign(preset("example1").unwrap()), dir.path(), false, Some(2));
    let other = campaign(&with_overrides("example1", "stall_window = 4"));
    let err = run_auto(
        &other,
        &RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            resume: true,
            stop_after: None,
        },
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

fn session(c: &Campaign, state: &Path, lines: &[String]) -> (Vec<EngineMessage>, AskTellOutcome) {
    let input = Cursor::new(lines.join("\n"));
    let mut out = Vec::new();
    let outcome = run_asktell(c, state, input, &mut out).unwrap();
    let msgs = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    (msgs, outcome)
}

fn last_proposal(msgs: &[EngineMessage]) -> (usize, Vec<f64>) {
    msgs.iter()
        .rev()
        .find_map(|m| match m {
            EngineMessage::Propose { iteration, x, .. } => Some((*iteration, x.clone())),
            _ => None,
        })
        .unwrap()
}

fn observe(x: &[f64], f: f64, c: &[f64]) -> String {
    serde_json::json!({"type": "observe", "x": x, "objective": f, "constraints": c}).to_string()
}

const CUSTOM: &str = "[problem]\nfamily = \"custom\"\nparameters = [\"u\", \"v\"]\nobjective = \"f\"\n[bounds]\nlower = [0.0, 0.0]\nupper = [1.0, 1.0]\n[[constraints]]\nname = \"g\"\nsense = \"<=\"\nthreshold = 0.5\n[init]\nn_init = 5\n[optimizer]\nmax_iters = 6\nseed = 4\n";

fn custom_eval(x: &[f64]) -> (f64, Vec<f64>) {
    ((x[0] - 0.7).powi(2) + (x[1] - 0.2).powi(2), vec![x[0] + x[1]])
}

#[test]
fn asktell_round_trip_and_resume() {
    let c = campaign(CUSTOM);
    let dir = tempdir().unwrap();
    let state = dir.path().join("s.json");

    let (msgs, outcome) = session(&c, &state, &[]);
    assert!(matches!(&msgs[0], EngineMessage::Hello { version: 1, evaluations: 0, .. }));
    assert_eq!(outcome, AskTellOutcome::Paused { evaluations: 0 });
    let (mut it, mut x) = last_proposal(&msgs);
    assert_eq!(it, 1);

    // one observation per session, resuming from the state file each time
    let mut straight_proposals = Vec::new();
    loop {
        let (f, g) = custom_eval(&x);
        let (msgs, outcome) = session(&c, &state, &[observe(&x, f, &g)]);
        if let AskTellOutcome::Finished(_) = outcome {
            assert!(matches!(msgs.last(), Some(EngineMessage::Done { .. })));
            break;
        }
        let (next_it, next_x) = last_proposal(&msgs);
        assert_eq!(next_it, it + 1);
        straight_proposals.push(next_x.clone());
        (it, x) = (next_it, next_x);
    }

    // one uninterrupted session gives the same proposals
    let dir2 = tempdir().unwrap();
    let state2 = dir2.path().join("s.json");
    let mut lines = Vec::new();
    let mut proposals = Vec::new();
    let (msgs, _) = session(&c, &state2, &[]);
    let (_, mut x) = last_proposal(&msgs);
    for _ in 0..straight_proposals.len() {
        let (f, g) = custom_eval(&x);
        lines.push(observe(&x, f, &g));
        let (msgs, _) = session(&c, &tempfile_copy(&state2, &lines, &c), &[]);
        let (_, nx) = last_proposal(&msgs);
        proposals.push(nx.clone());
        x = nx;
    }
    assert_eq!(proposals, straight_proposals);
    let a = PersistedState::load(&state).unwrap();
    assert!(a.campaign.history.len() >= 5);
}

/// Feeds `lines` to a fresh state in one session and returns its path.
fn tempfile_copy(base: &Path, lines: &[String], c: &Campaign) -> std::path::PathBuf {
    let path = base.with_file_name(format!("run{}.json", lines.len()));
    let _ = fs::remove_file(&path);
    session(c, &path, lines);
    path
}

#[test]
fn asktell_failed_point_is_quarantined() {
    let c = campaign(CUSTOM);
    let dir = tempdir().unwrap();
    let state = dir.path().join("s.json");
    let mut lines = Vec::new();
    let (msgs, _) = session(&c, &state, &[]);
    let (_, mut x) = last_proposal(&msgs);
    for _ in 0..5 {
        let (f, g) = custom_eval(&x);
        lines.clear();
        lines.push(observe(&x, f, &g));
        let (msgs, _) = session(&c, &state, &lines);
        x = last_proposal(&msgs).1;
    }
    let failed = serde_json::json!({"type": "failed", "x": x, "reason": "solver diverged"}).to_string();
    let (msgs, _) = session(&c, &state, &[failed]);
    let (_, next) = last_proposal(&msgs);
    let persisted = PersistedState::load(&state).unwrap();
    assert!(persisted.campaign.history.last().unwrap().is_failed());
    let r = persisted.campaign.config.quarantine_radius();
    let d = ((next[0] - x[0]).powi(2) + (next[1] - x[1]).powi(2)).sqrt();
    assert!(d > r, "new proposal {next:?} within {r} of failed {x:?}");
}

#[test]
fn asktell_reprompts_on_malformed_observe() {
    let c = campaign(CUSTOM);
    let dir = tempdir().unwrap();
    let state = dir.path().join("s.json");
    let (msgs, _) = session(&c, &state, &[]);
    let (it, x) = last_proposal(&msgs);
    let bad = vec![
        "{not json".to_string(),
        serde_json::json!({"type": "observe", "x": x, "objective": 1.0}).to_string(),
        serde_json::json!({"type": "observe", "x": [0.5], "objective": 1.0, "constraints": [0.0]}).to_string(),
    ];
    let (msgs, outcome) = session(&c, &state, &bad);
    assert_eq!(outcome, AskTellOutcome::Paused { evaluations: 0 });
    let errors = msgs.iter().filter(|m| matches!(m, EngineMessage::Error { .. })).count();
    assert_eq!(errors, 3);
    let reprompts: Vec<_> = msgs
        .iter()
        .filter_map(|m| match m {
            EngineMessage::Propose { iteration, x, .. } => Some((*iteration, x.clone())),
            _ => None,
        })
        .collect();
    assert_eq!(reprompts.len(), 4);
    assert!(reprompts.iter().all(|p| *p == (it, x.clone())));
}

#[test]
fn binary_exit_codes() {
    let dir = tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[problem]\nfamily = \"nope\"\n").unwrap();
    let status = Command::new(BIN).args(["run"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(1));

    let empty = dir.path().join("empty.toml");
    fs::write(&empty, "").unwrap();
    let out = Command::new(BIN).args(["run"]).arg(&empty).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("problem.family") && err.contains("optimizer.seed"), "{err}");

    // identical initial designs make the objective surrogate unfittable
    let cfg = dir.path().join("dup.toml");
    fs::write(
        &cfg,
        "[problem]\nfamily = \"example2\"\n[init]\npoints = [[5.0], [5.0]]\n[optimizer]\nmax_iters = 3\nseed = 0\n",
    )
    .unwrap();
    let status = Command::new(BIN)
        .args(["run"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("dup"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn binary_asktell_interactive_and_echo_violation() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("custom.toml");
    fs::write(&cfg, CUSTOM).unwrap();
    let state = dir.path().join("state.json");
    let mut child = Command::new(BIN)
        .args(["ask-tell"])
        .arg(&cfg)
        .arg("--state")
        .arg(&state)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    let mut done = false;
    let mut evaluations = 0;
    while !done {
        line.clear();
        stdout.read_line(&mut line).unwrap();
        let msg: serde_json::Value = serde_json::from_str(&line).unwrap();
        match msg["type"].as_str().unwrap() {
            "hello" => assert_eq!(msg["version"], 1),
            "propose" => {
                let x: Vec<f64> = serde_json::from_value(msg["x"].clone()).unwrap();
                let (f, g) = custom_eval(&x);
                writeln!(stdin, "{}", observe(&x, f, &g)).unwrap();
                evaluations += 1;
            }
            "done" => done = true,
            other => panic!("unexpected {other}"),
        }
    }
    drop(stdin);
    assert_eq!(child.wait().unwrap().code(), Some(0));
    assert!(evaluations >= 6);

    let plots = dir.path().join("plots");
    let out = Command::new(BIN).args(["plots"]).arg(&state).arg("--out").arg(&plots).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let map = read(&plots.join("state_map.csv"));
    assert!(map.lines().skip(1).all(|l| l.ends_with(",0") || l.ends_with(",1")));

    // an echo off by more than 1e-9 is a protocol violation
    let state2 = dir.path().join("state2.json");
    let mut child = Command::new(BIN)
        .args(["ask-tell"])
        .arg(&cfg)
        .arg("--state")
        .arg(&state2)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    for _ in 0..2 {
        line.clear();
        stdout.read_line(&mut line).unwrap();
    }
    let msg: serde_json::Value = serde_json::from_str(&line).unwrap();
    let mut x: Vec<f64> = serde_json::from_value(msg["x"].clone()).unwrap();
    x[0] += 1e-6;
    writeln!(stdin, "{}", observe(&x, 0.0, &[0.0])).unwrap();
    drop(stdin);
    assert_eq!(child.wait().unwrap().code(), Some(3));
}

#[test]
fn plot_files() {
    let dir = tempdir().unwrap();
    let c = campaign(&with_overrides("example1", "max_iters = 2"));
    run(&c, dir.path(), false, None);
    let text = read(&dir.path().join("plots/iter_001_delta.csv"));
    let mut prev = f64::NEG_INFINITY;
    for l in text.lines().skip(1) {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(v[0] > prev);
        prev = v[0];
        assert!(v[3] >= v[2] && v[2] <= v[1] && v[1] <= v[3]);
        assert!(v[4] >= 0.0);
    }
    assert!(dir.path().join("plots/iter_001_v_x.csv").exists());

    // before any fit the curves are the prior: observation mean and spread
    let dir = tempdir().unwrap();
    let c = campaign(&with_overrides("example2", "max_iters = 0"));
    run(&c, dir.path(), false, None);
    let state = PersistedState::load(&dir.path().join(STATE_FILE)).unwrap();
    let ys: Vec<f64> = state.campaign.history.iter().map(|r| r.objective().unwrap()).collect();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let sd = (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / ys.len() as f64).sqrt();
    let text = read(&dir.path().join("plots/final_delta.csv"));
    for l in text.lines().skip(1) {
        let v: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
        assert!((v[1] - mean).abs() <= 1e-12 * mean.abs());
        assert!(((v[3] - v[2]) / (2.0 * 1.96) - sd).abs() <= 1e-9 * sd);
    }
}

#[test]
fn presets_command_prints_documents() {
    let out = Command::new(BIN).args(["presets"]).output().unwrap();
    let list = String::from_utf8(out.stdout).unwrap();
    assert_eq!(list.lines().collect::<Vec<_>>(), ["example1", "example2", "example3", "sailplane"]);
    let out = Command::new(BIN).args(["presets", "sailplane"]).output().unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), preset("sailplane").unwrap());
    let out = Command::new(BIN).args(["presets", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_echo_is_written_and_reparses() {
    let dir = tempdir().unwrap();
    let c = campaign(&with_overrides("example2", "max_iters = 0"));
    run(&c, dir.path(), false, None);
    let echoed = parse_config(&read(&dir.path().join("config.toml"))).unwrap();
    assert_eq!(echoed, c);
}
