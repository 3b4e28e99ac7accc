use std::process::Command;

fn fsflow(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_fsflow")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap(), text)
}

#[test]
fn passing_run_exits_zero_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, text) =
        fsflow(&["run", "--scheme", "EE_STAB", "--dt", "1", "--nx", "10", "--ny", "8", "--source", "--out", out]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("PASS"), "{text}");
    let csv = std::fs::read_to_string(dir.path().join("ledger.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn failed_verdict_exits_one() {
    // one tiny step leaves the semi-implicit drift far below its non-conservation threshold
    let (code, text) = fsflow(&["volume-check", "--dt", "1e-6", "--t-final", "1e-6", "--nx", "8", "--ny", "6"]);
    assert_eq!(code, 1, "{text}");
    assert!(text.contains("FAIL"), "{text}");
}

#[test]
fn bad_input_exits_two() {
    let (code, text) = fsflow(&["run", "--scheme", "RK4"]);
    assert_eq!(code, 2, "{text}");
    let (code, _) = fsflow(&["run", "--config", "/nonexistent/run.cfg"]);
    assert_eq!(code, 2);
}
