//! End-to-end checks of the binary: determinism of exports, config
//! handling and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn zigzag() -> Command {
    Command::new(env!("CARGO_BIN_EXE_zigzag"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("zigzag-cli-test-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("failed to launch zigzag");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn list_scenarios_names_the_catalog() {
    let out = run_ok(zigzag().arg("list-scenarios"));
    let text = String::from_utf8_lossy(&out.stdout);
    for id in ["SPIN_Y_SINGLE", "SPIN_WEIGHTED", "EPR_FREE", "EPR_SG"] {
        assert!(text.contains(id), "missing {id} in:\n{text}");
    }
}

#[test]
fn identical_seeds_give_byte_identical_outputs() {
    let dir = tmp_dir("det");
    let mut snapshots = Vec::new();
    // run the identical command twice, then once more with a different
    // worker count
    for workers in ["1", "1", "3"] {
        run_ok(zigzag().args([
            "run",
            "SPIN_WEIGHTED",
            "--n",
            "3",
            "--seed",
            "42",
            "--workers",
            workers,
            "--set",
            "t_total=2000",
            "--set",
            "stride_time=50",
            "--out",
            dir.to_str().unwrap(),
        ]));
        snapshots.push(dir_snapshot(&dir));
        for entry in fs::read_dir(&dir).unwrap() {
            fs::remove_file(entry.unwrap().path()).unwrap();
        }
    }
    // identical invocations: every file byte-identical
    let (a, b) = (&snapshots[0], &snapshots[1]);
    assert_eq!(a.len(), b.len());
    for ((name_a, bytes_a), (name_b, bytes_b)) in a.iter().zip(b) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "file {name_a} differs between identical runs");
    }
    assert!(a.iter().any(|(n, _)| n == "manifest.json"));
    assert!(a.iter().any(|(n, _)| n.starts_with("trajectory_")));
    assert!(a.iter().any(|(n, _)| n.starts_with("jumps_")));
    // different worker count: all data files still byte-identical
    let c = &snapshots[2];
    for ((name_a, bytes_a), (name_c, bytes_c)) in a.iter().zip(c) {
        assert_eq!(name_a, name_c);
        if name_a != "manifest.json" {
            assert_eq!(bytes_a, bytes_c, "file {name_a} differs across worker counts");
        }
    }
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn print_config_round_trips_through_a_config_file() {
    let out = run_ok(zigzag().args(["run", "EPR_SG", "--print-config", "--seed", "7"]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("scenario = EPR_SG"));
    assert!(text.contains("rate_dt_cap = 0.0078125"));

    let dir = tmp_dir("cfg");
    let cfg_path = dir.join("run.cfg");
    fs::write(&cfg_path, &text).unwrap();
    let out2 = run_ok(zigzag().args([
        "run",
        "EPR_SG",
        "--config",
        cfg_path.to_str().unwrap(),
        "--print-config",
    ]));
    assert_eq!(text, String::from_utf8(out2.stdout).unwrap());
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn bad_config_exits_with_code_two_and_diagnostics() {
    let dir = tmp_dir("badcfg");
    let cfg_path = dir.join("bad.cfg");
    fs::write(&cfg_path, "n = 5\nnot_a_key = 1\n").unwrap();
    let out = zigzag()
        .args(["run", "SPIN_Y_SINGLE", "--config", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "missing line diagnostics: {err}");
    assert!(err.contains("not_a_key"), "missing key diagnostics: {err}");

    let out = zigzag().args(["run", "NO_SUCH_SCENARIO"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn fields_writes_a_grid() {
    let dir = tmp_dir("fields");
    run_ok(zigzag().args([
        "fields",
        "SPIN_Y_SINGLE",
        "--t",
        "70000",
        "--res",
        "9",
        "--out",
        dir.to_str().unwrap(),
    ]));
    let grid = fs::read_to_string(dir.join("fields_SPIN_Y_SINGLE_t70000.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next().unwrap(), "x,y,z,sx,sy,sz,r_plus,r_minus,rho,valid");
    assert_eq!(lines.count(), 81);
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn verify_subcommand_writes_a_report() {
    let dir = tmp_dir("verify");
    let out = run_ok(zigzag().args([
        "verify",
        "single-particle",
        "--seed",
        "42",
        "--out",
        dir.to_str().unwrap(),
    ]));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("PASS"), "{text}");
    let report = fs::read_to_string(dir.join("verify_report.json")).unwrap();
    assert!(report.contains("\"all_passed\": true"), "{report}");

    let out = zigzag().args(["verify", "no-such-suite"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = fs::remove_dir_all(dir);
}

#[test]
fn rescaled_export_divides_by_one_thousand() {
    let dir = tmp_dir("rescale");
    run_ok(zigzag().args([
        "run",
        "SPIN_Y_SINGLE",
        "--n",
        "1",
        "--seed",
        "5",
        "--rescale",
        "--set",
        "t_total=1000",
        "--set",
        "stride_time=1000",
        "--out",
        dir.to_str().unwrap(),
    ]));
    let text = fs::read_to_string(dir.join("trajectory_0000.csv")).unwrap();
    let last = text.lines().last().unwrap();
    let t_display: f64 = last.split(',').next().unwrap().parse().unwrap();
    assert!((t_display - 1.0).abs() < 1e-12, "display time {t_display}");
    let _ = fs::remove_dir_all(dir);
}
