//! Drives the built binary against offline fixtures.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::thread;
use std::time::{Duration, Instant};

fn wavecode(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavecode"))
        .current_dir(root)
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn reports(run: &Path) -> Vec<Vec<u8>> {
    ["report.json", "report.csv", "report.md"]
        .iter()
        .map(|f| fs::read(run.join(f)).unwrap())
        .collect()
}

#[test]
fn help_lists_verbs_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = wavecode(dir.path(), &["--help"]);
    assert_eq!(code(&out), 0);
    let help = text(&out);
    for verb in ["sample", "prompt", "generate", "execute", "embed", "score", "report", "run-all"] {
        assert!(help.contains(verb), "{verb} missing from help");
    }
    for flag in [
        "--config", "--tier", "--method", "--cassette", "--transport", "--runner", "--timeout", "--workers",
        "--keep-workdirs", "--provider", "--force",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn run_all_completes_offline() {
    if !common::python3_available() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    common::notes_fixture(dir.path(), 6, &[4]);
    let out = wavecode(dir.path(), &["--config", "config.toml", "run-all"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    assert!(text(&out).contains("run directory:"));
    let run = dir.path().join("runs/notes-e2e");
    let report: serde_json::Value = serde_json::from_slice(&fs::read(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["summary"]["attempted"], 6);
    assert_eq!(report["summary"]["generated"], 5);

    let again = wavecode(dir.path(), &["--config", "config.toml", "score"]);
    assert_eq!(code(&again), 0);
    assert!(text(&again).contains("already done"));
}

#[test]
fn out_of_order_stage_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    common::notes_fixture(dir.path(), 2, &[]);
    let out = wavecode(dir.path(), &["--config", "config.toml", "execute"]);
    assert_eq!(code(&out), 2, "{}", text(&out));
}

#[test]
fn bad_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "run_id = \"x\"\nbogus = 1\n").unwrap();
    let out = wavecode(dir.path(), &["--config", "c.toml", "sample"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn execute_with_only_failures_completes() {
    let dir = tempfile::tempdir().unwrap();
    common::notes_fixture(dir.path(), 3, &[0, 1, 2]);
    let cfg = ["--config", "config.toml"];
    for verb in ["sample", "prompt", "generate"] {
        assert_eq!(code(&wavecode(dir.path(), &[&cfg[..], &[verb]].concat())), 0);
    }
    // nothing generated, so execute has only failures but still completes
    if common::python3_available() {
        assert_eq!(code(&wavecode(dir.path(), &[&cfg[..], &["execute"]].concat())), 0);
    }
}

#[test]
fn unreachable_sidecar_fails_the_stage() {
    if !common::python3_available() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    common::notes_fixture(dir.path(), 3, &[]);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let sidecar = format!("sidecar:http://127.0.0.1:{port}");
    let out = wavecode(dir.path(), &["--config", "config.toml", "--provider", &sidecar, "run-all"]);
    assert_eq!(code(&out), 1, "{}", text(&out));
    assert!(text(&out).contains("unreachable"), "{}", text(&out));
    assert!(!dir.path().join("runs/notes-e2e/report.json").exists());

    // the file provider from the config picks up where it stopped
    let out = wavecode(dir.path(), &["--config", "config.toml", "run-all"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
}

#[test]
fn interrupted_execute_exits_3_then_resumes() {
    if !common::python3_available() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    common::notes_fixture(dir.path(), 5, &[1]);
    let cfg = ["--config", "config.toml"];
    for verb in ["sample", "prompt", "generate"] {
        assert_eq!(code(&wavecode(dir.path(), &[&cfg[..], &[verb]].concat())), 0);
    }
    let out = wavecode(dir.path(), &[&cfg[..], &["--limit", "2", "execute"]].concat());
    assert_eq!(code(&out), 3, "{}", text(&out));
    let out = wavecode(dir.path(), &[&cfg[..], &["run-all"]].concat());
    assert_eq!(code(&out), 0, "{}", text(&out));

    let clean = wavecode(dir.path(), &[&cfg[..], &["--runs-dir", "clean", "run-all"]].concat());
    assert_eq!(code(&clean), 0, "{}", text(&clean));
    assert_eq!(
        reports(&dir.path().join("runs/notes-e2e")),
        reports(&dir.path().join("clean/notes-e2e"))
    );
}

#[test]
fn killed_run_resumes_to_the_same_report() {
    if !common::python3_available() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    common::notes_fixture(dir.path(), 8, &[5]);
    let slow = dir.path().join("slow.sh");
    fs::write(&slow, "sleep 0.4\nexec python3 \"$1\"\n").unwrap();
    let runner = format!("sh {} {{script_path}}", slow.display());

    let mut child = Command::new(env!("CARGO_BIN_EXE_wavecode"))
        .current_dir(dir.path())
        .args(["--config", "config.toml", "--workers", "1", "--runner", &runner, "run-all"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let outcomes = dir.path().join("runs/notes-e2e/outcomes");
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let done = fs::read_dir(&outcomes).map(|d| d.count()).unwrap_or(0);
        if done >= 3 || Instant::now() > deadline {
            break;
        }
        thread::sleep(Duration::from_millis(20));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("runs/notes-e2e/manifest.json")).unwrap()).unwrap();
    assert_ne!(manifest["stages"]["executed"], "done", "killed too late to test resuming");

    let out = wavecode(dir.path(), &["--config", "config.toml", "run-all"]);
    assert_eq!(code(&out), 0, "{}", text(&out));
    let clean = wavecode(dir.path(), &["--config", "config.toml", "--runs-dir", "clean", "run-all"]);
    assert_eq!(code(&clean), 0, "{}", text(&clean));
    assert_eq!(
        reports(&dir.path().join("runs/notes-e2e")),
        reports(&dir.path().join("clean/notes-e2e"))
    );
}

#[test]
fn cli_overrides_reach_the_run() {
    if !common::python3_available() {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    common::notes_fixture(dir.path(), 3, &[]);
    let out = wavecode(
        dir.path(),
        &["--config", "config.toml", "--run-id", "other", "--keep-workdirs", "--timeout", "30", "run-all"],
    );
    assert_eq!(code(&out), 0, "{}", text(&out));
    let run = dir.path().join("runs/other");
    assert_eq!(fs::read_dir(run.join("workdirs")).unwrap().count(), 3);
    let out = wavecode(dir.path(), &["--config", "config.toml", "--run-id", "other", "--seed", "99", "sample"]);
    assert_eq!(code(&out), 1, "a seed change must not reuse the run: {}", text(&out));
}
