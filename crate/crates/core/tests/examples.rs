//! Runs each example binary with small arguments.

use std::path::PathBuf;
use std::process::Command;

fn example(name: &str) -> Command {
    // target/<profile>/deps/examples-<hash> -> target/<profile>/examples/<name>
    let exe = std::env::current_exe().unwrap();
    let dir = exe.parent().unwrap().parent().unwrap().join("examples");
    Command::new(dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX)))
}

fn run(name: &str, args: &[&str]) -> String {
    let out = example(name).args(args).output().unwrap_or_else(|e| panic!("{name}: {e}"));
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "{name} failed: {text}{}",
        String::from_utf8_lossy(&out.stderr)
    );
    text
}

#[test]
fn virtual_clock_log_is_repeatable() {
    let a = run("virtual_clock", &[]);
    assert_eq!(a, run("virtual_clock", &[]));
    assert!(a.contains("control  step 5 started at  200 ms"), "{a}");
    assert!(a.contains("background item 1 done at  200 ms"), "{a}");
}

#[test]
fn render_frames_writes_ppm() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("render_frames", &[tmp.path().to_str().unwrap(), "40", "24"]);
    assert!(out.contains("150 steps"));
    let f = std::fs::read(tmp.path().join("step000.ppm")).unwrap();
    assert!(f.starts_with(b"P6\n40 24\n255\n"));
    assert_eq!(f.len(), 13 + 40 * 24 * 3);
}

#[test]
fn gradient_check_passes() {
    let out = run("gradient_check", &["3", "1"]);
    assert!(out.contains("critic"));
}

#[test]
fn cycle_timing_table() {
    let out = run("cycle_timing", &["60"]);
    let row = |mode: &str, cycle: &str| -> Vec<String> {
        out.lines()
            .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
            .find(|c| c.len() == 6 && c[0] == mode && c[1] == cycle)
            .unwrap_or_else(|| panic!("no {mode} {cycle} row in {out}"))
    };
    // 80 ms of work: every 40 ms sync step is late, the 120 ms one never is.
    assert_eq!(row("sync", "40ms")[4], "450");
    assert_eq!(row("sync", "40ms")[5], "80.0ms");
    assert_eq!(row("sync", "120ms")[4], "0");
    assert_eq!(row("async", "40ms")[4], "0");
    assert_eq!(row("async", "40ms")[5], "40.0ms");
}

#[test]
fn weight_store_reader_keeps_up() {
    let out = run("weight_store", &["2000"]);
    assert!(out.contains("reader ended at v2000"), "{out}");
}

#[test]
fn update_throughput_reports_timing() {
    let out = run("update_throughput", &["8", "16", "3"]);
    assert!(out.contains("ms per update"));
}

#[test]
fn config_check_accepts_shipped_configs() {
    let out = run("config_check", &[]);
    assert!(out.contains("desk-async.cfg") && out.contains("108000 steps"), "{out}");
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.cfg");
    std::fs::write(&bad, "setting = sync-highres\nbatch_size = 128\n").unwrap();
    let status = example("config_check").arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn desk_experiment_produces_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir: PathBuf = tmp.path().join("desk");
    let out = run("desk_experiment", &[dir.to_str().unwrap(), "0.5", "0,1"]);
    assert!(out.contains("async-baseline") && out.contains("sync-baseline"), "{out}");
    assert!(dir.join("curves.svg").exists());
    assert!(dir.join("async-baseline/seed-1/steps.csv").exists());
}
