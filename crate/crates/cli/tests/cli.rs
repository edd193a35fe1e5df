use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_hbkex");

fn hbkex(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("HBKEX_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../sim/scenarios")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn kdf_strength_prints_the_bound() {
    let o = hbkex(&["kdf", "strength", "--n", "128", "--max-len", "1048576"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "128\n");
    let o = hbkex(&["kdf", "strength", "--n", "511", "--max-len", &(1u64 << 40).to_string()]);
    assert_eq!(stdout(&o), "482\n");
}

#[test]
fn kdf_table_has_one_row_per_length() {
    let o = hbkex(&["kdf", "table"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "log2_max_len n=128 n=192 n=256 n=511");
    assert_eq!(lines.len(), 32);
    assert_eq!(lines[31], "40 128 192 256 482");
}

#[test]
fn vectors_emit_matches_checked_in_file() {
    let o = hbkex(&["vectors", "emit"]);
    assert!(o.status.success());
    let golden =
        fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/golden.txt")).unwrap();
    assert_eq!(stdout(&o), golden);
}

#[test]
fn run_twice_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let scn = scenarios().join("baseline-p2.scn");
    let (a, b) = (dir.path().join("a.report"), dir.path().join("b.report"));
    for out in [&a, &b] {
        let o = hbkex(&["run", arg(&scn), "--seed", "7", "--out", arg(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(stdout(&o), "result pass\n");
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn every_shipped_scenario_runs_green_against_its_report() {
    for entry in fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "scn") {
            continue;
        }
        let expect = path.with_extension("report");
        let o = hbkex(&["-q", "run", arg(&path), "--expect", arg(&expect)]);
        assert!(o.status.success(), "{}: {}", path.display(), stderr(&o));
    }
}

#[test]
fn seed_precedence_is_flag_then_scenario_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("s.scn");
    fs::write(
        &scn,
        "name s\nepochs 2\nca p2\ndecoders 2 ca=0\nauthorize from=0 ids=0\n",
    )
    .unwrap();
    let seed_line = |o: &Output| stdout(o).lines().nth(1).unwrap().to_string();
    let o = hbkex(&["run", arg(&scn)]);
    assert_eq!(seed_line(&o), "seed 0");
    let o = Command::new(BIN)
        .args(["run", arg(&scn)])
        .env("HBKEX_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(seed_line(&o), "seed 99");
    let o = Command::new(BIN)
        .args(["run", arg(&scn), "--seed", "5"])
        .env("HBKEX_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(seed_line(&o), "seed 5");
    let pinned = dir.path().join("p.scn");
    fs::write(&pinned, format!("seed 3\n{}", fs::read_to_string(&scn).unwrap())).unwrap();
    let o = Command::new(BIN)
        .args(["run", arg(&pinned)])
        .env("HBKEX_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(seed_line(&o), "seed 3");
    let o = Command::new(BIN)
        .args(["run", arg(&scn)])
        .env("HBKEX_SEED", "x")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("f.scn");
    fs::write(
        &scn,
        "name f\nepochs 3\nca p2\ndecoders 2 ca=0\nauthorize from=0 ids=0\nexpect decoder=1 epochs=0..2 outcome=D\n",
    )
    .unwrap();
    let o = hbkex(&["run", arg(&scn)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("result fail"));
    assert!(stderr(&o).contains("expectation failed"));
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &[][..],
        &["run"],
        &["kdf", "strength", "--n", "x", "--max-len", "1"],
        &["bogus"],
    ] {
        assert_eq!(hbkex(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn malformed_scenario_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let scn = dir.path().join("bad.scn");
    fs::write(&scn, "name bad\nepochs 3\nca p9\n").unwrap();
    let o = hbkex(&["run", arg(&scn)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn capture_decodes_back_and_truncation_names_the_offset() {
    let dir = tempfile::tempdir().unwrap();
    let cap = dir.path().join("run.cap");
    let scn = scenarios().join("simulcrypt-mixed.scn");
    let o = hbkex(&["-q", "run", arg(&scn), "--capture", arg(&cap)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = hbkex(&["wire", "decode", arg(&cap)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("capture frames="));
    assert!(text.contains("  ecm ca_system=0x0b00 epoch=0 protected_secret_len="));
    assert!(text.contains("kind=per_receiver_enroll"));

    let bytes = fs::read(&cap).unwrap();
    let frame = hbkex_sim::runner::decode_capture(&bytes)
        .unwrap()
        .into_iter()
        .find(|f| f.epoch == 5 && !f.ecms.is_empty())
        .unwrap();
    let ecm = frame.ecms[0].clone();
    let ecm_file = dir.path().join("one.ecm");
    fs::write(&ecm_file, &ecm).unwrap();
    let o = hbkex(&["wire", "decode", arg(&ecm_file)]);
    assert_eq!(
        stdout(&o),
        format!(
            "ecm ca_system=0x0b00 epoch=5 protected_secret_len=44 bytes={}\n",
            ecm.len()
        )
    );

    fs::write(&ecm_file, &ecm[..40]).unwrap();
    let o = hbkex(&["wire", "decode", arg(&ecm_file)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("truncated input at offset 19"), "{}", stderr(&o));

    let frame_file = dir.path().join("one.frame");
    fs::write(&frame_file, frame.encode()).unwrap();
    let o = hbkex(&["wire", "decode", arg(&frame_file)]);
    assert!(stdout(&o).starts_with("frame epoch=5 content_len=184 ecms=4"));

    fs::write(&frame_file, b"JUNK").unwrap();
    let o = hbkex(&["wire", "decode", arg(&frame_file)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("offset 0"));
}

#[test]
fn ttp_lifecycle_round_trips_through_the_state_file() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("ttp.state");
    let o = hbkex(&["ttp", "init", "--state", arg(&state), "--seed", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = stdout(&o);
    assert!(first.starts_with("generation 1\npublic_key "));
    assert_eq!(hbkex(&["ttp", "init", "--state", arg(&state)]).status.code(), Some(1));

    let o = hbkex(&["ttp", "rotate", "--state", arg(&state), "--seed", "2"]);
    assert!(o.status.success());
    let rotated = stdout(&o);
    assert!(rotated.starts_with("generation 2\n"));
    assert_ne!(first.lines().nth(1), rotated.lines().nth(1));

    let dir_file = dir.path().join("ttp.dir");
    let o = hbkex(&["ttp", "export", "--state", arg(&state), "--out", arg(&dir_file)]);
    assert!(o.status.success());
    let exported = stdout(&o);
    assert!(exported.starts_with("directory generation=2 receiver_certs=0 sender_certs=0 revoked=0\n"));
    let o = hbkex(&["wire", "decode", arg(&dir_file)]);
    assert_eq!(stdout(&o), exported);

    let o = hbkex(&["ttp", "init", "--state", arg(&state), "--seed", "1", "--force"]);
    assert_eq!(stdout(&o), first);
    fs::write(&state, b"HBTS").unwrap();
    assert_eq!(hbkex(&["ttp", "export", "--state", arg(&state)]).status.code(), Some(1));
}
