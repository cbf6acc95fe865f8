use std::io::Write;
use std::process::{Command, Output};

fn effattn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_effattn"))
        .args(args)
        .env_remove("EFFATTN_SEED")
        .output()
        .expect("binary runs")
}

#[test]
fn success_is_zero() {
    for args in [
        &["mask", "--pattern", "full", "--n", "4"][..],
        &["verify", "--cases", "2"],
        &["bench", "--n", "256,1024"],
        &["eval", "--synthetic", "front", "--docs", "4"],
    ] {
        let out = effattn(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn check_failures_are_one() {
    let out = effattn(&["verify", "--fault", "--cases", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("first failing case"));

    assert_eq!(effattn(&["bench", "--k", "200", "--strict"]).status.code(), Some(1));
    assert_eq!(effattn(&["bench", "--k", "200"]).status.code(), Some(0));
    assert_eq!(effattn(&["mask", "--pattern", "window", "--n", "8", "--w", "3"]).status.code(), Some(1));
}

#[test]
fn malformed_input_names_the_line() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    let good = include_str!("../../evalkit/fixtures/exact.jsonl").lines().next().unwrap();
    writeln!(file, "{good}\n{{not json").unwrap();
    let out = effattn(&["eval", "--in", file.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn usage_errors_are_two() {
    assert_eq!(effattn(&["mask", "--bogus"]).status.code(), Some(2));
    assert_eq!(effattn(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(effattn(&["eval", "--in", "x", "--synthetic", "even"]).status.code(), Some(2));
}

#[test]
fn seed_comes_from_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_effattn"));
        cmd.args(["mask", "--pattern", "window", "--n", "32", "--w", "2", "--r", "4"]).args(args);
        match env {
            Some(v) => cmd.env("EFFATTN_SEED", v),
            None => cmd.env_remove("EFFATTN_SEED"),
        };
        cmd.output().unwrap().stdout
    };
    assert_eq!(run(Some("17"), &[]), run(None, &["--seed", "17"]));
}
