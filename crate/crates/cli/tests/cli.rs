use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn molgrow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_molgrow"))
        .args(args)
        .env_remove("MOLGROW_SERVER")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn enumerate_two_carbons_gives_four() {
    let o = molgrow(&["enumerate", "--symbols", "C", "--max-bond-order", "3", "--max-atoms", "2", "--list"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "count 4\nC\nC#C\nC=C\nCC\n");
    let o = molgrow(&["enumerate", "--symbols", "C", "--max-atoms", "7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn score_butane_against_its_formula() {
    let o = molgrow(&[
        "score",
        "--objective",
        r#"{"kind":"isomer_formula","formula":"C4H10"}"#,
        "--smiles",
        "CCCC",
        "CCC",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "CCCC\t1");
    assert!(lines[1].starts_with("CCC\t0."));
}

#[test]
fn bundled_corpus_round_trips() {
    let corpus = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/corpus.smi");
    let o = molgrow(&["roundtrip", "--alphabet", "drug-full", "--corpus", corpus]);
    assert!(o.status.success());
    let out = stdout(&o);
    let last = out.lines().last().unwrap();
    let (passed, total) = last.trim_end_matches(" passed").split_once('/').unwrap();
    assert_eq!(passed, total);
    assert!(total.parse::<usize>().unwrap() >= 1000);
}

#[test]
fn parse_prints_formula() {
    let o = molgrow(&["parse", "c1ccccc1"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("formula C6H6\n"));
}

const DESIGN: &str = r#"{
    "objective": {"kind": "isomer_formula", "formula": "C3H8O"},
    "constraints": {"max_atoms": 5},
    "policy": {"d": 16, "n_layers": 1, "n_heads": 2, "ff_dim": 16},
    "learner": {"archive_size": 5, "beam_width": 8, "step_size": 2, "epochs": 2,
                "batches_per_epoch": 1, "batch_size": 4, "seed": 3},
    "precision": "f64"
}"#;

#[test]
fn design_writes_results_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.json", DESIGN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = molgrow(&["design", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).starts_with("rank\tobjective\tepoch\tsmiles\n"));
    }
    assert_eq!(
        std::fs::read(a.join("best.csv")).unwrap(),
        std::fs::read(b.join("best.csv")).unwrap()
    );
}

#[test]
fn frozen_hydroxy_is_kept_in_every_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.json",
        r#"{
            "objective": {"kind": "atom_count_target", "target": 8},
            "initial": "CCCO",
            "constraints": {"max_atoms": 8, "frozen_atoms": [3], "allowed_ring_sizes": [5, 6]},
            "policy": {"d": 16, "n_layers": 1, "n_heads": 2, "ff_dim": 16},
            "learner": {"archive_size": 20, "beam_width": 16, "step_size": 3, "epochs": 3,
                        "batches_per_epoch": 1, "batch_size": 4}
        }"#,
    );
    let out = dir.path().join("out");
    let o = molgrow(&["design", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rows = csv::Reader::from_path(out.join("best.csv")).unwrap();
    let mut n = 0;
    for r in rows.records() {
        let smiles = r.unwrap()[1].to_string();
        let p = molgrow(&["parse", &smiles]);
        let text = stdout(&p);
        // some O has exactly one bond, a single bond to a carbon
        let atoms: Vec<&str> = text.lines().filter_map(|l| l.strip_prefix("atom ")).collect();
        let bonds: Vec<Vec<usize>> = text
            .lines()
            .filter_map(|l| l.strip_prefix("bond "))
            .map(|l| l.split(' ').map(|x| x.parse().unwrap()).collect())
            .collect();
        let hydroxy = atoms.iter().enumerate().any(|(i, a)| {
            let incident: Vec<&Vec<usize>> = bonds.iter().filter(|b| b[0] == i || b[1] == i).collect();
            a.ends_with(" O")
                && incident.len() == 1
                && incident[0][2] == 1
                && atoms[incident[0][0] + incident[0][1] - i].ends_with(" C")
        });
        assert!(hydroxy, "{smiles}");
        n += 1;
    }
    assert!(n > 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"objective": {"kind": "nope"}}"#);
    assert_eq!(molgrow(&["design", "--config", &bad]).status.code(), Some(2));
    assert_eq!(
        molgrow(&["design", "--config", "/no/such/file.json"]).status.code(),
        Some(2)
    );

    let timed = write(
        dir.path(),
        "timed.json",
        &DESIGN.replace("\"epochs\": 2", "\"epochs\": 50, \"wall_clock_limit_s\": 0"),
    );
    let out = dir.path().join("timed");
    let o = molgrow(&["design", "--config", &timed, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("best.csv").exists());

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let oracle = write(
        dir.path(),
        "oracle.json",
        &format!(
            r#"{{"objective": {{"kind": "solvent_iba", "oracle": {{"tcp": "127.0.0.1:{port}", "timeout_ms": 500}}}},
                "constraints": {{"max_atoms": 4}},
                "policy": {{"d": 16, "n_layers": 1, "n_heads": 2, "ff_dim": 16}},
                "learner": {{"beam_width": 4, "epochs": 1, "batches_per_epoch": 1, "batch_size": 2}}}}"#
        ),
    );
    let out = dir.path().join("oracle");
    let o = molgrow(&["design", "--config", &oracle, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn pretrain_reports_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"policy": {"d": 16, "n_layers": 1, "n_heads": 2, "ff_dim": 16}, "training": {"epochs": 1}}"#,
    );
    let ckpt = dir.path().join("p.gxf");
    let corpus = write(dir.path(), "one.smi", "C\n");
    let o = molgrow(&["pretrain", "--corpus", &corpus, "--out", ckpt.to_str().unwrap(), "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("rejected 0\n"));
    assert!(ckpt.exists());

    let corpus = write(dir.path(), "mixed.smi", "CCO\nC1CC\nCN\n");
    let o = molgrow(&["pretrain", "--corpus", &corpus, "--out", ckpt.to_str().unwrap(), "--config", &cfg]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("rejected 1\n"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2: rejected"));

    let corpus = write(dir.path(), "alien.smi", "Br\nClCl\n");
    let o = molgrow(&["pretrain", "--corpus", &corpus, "--out", ckpt.to_str().unwrap(), "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty corpus"));
}

#[test]
fn talks_to_a_separate_server() {
    let mut server = Command::new(env!("CARGO_BIN_EXE_molgrow"))
        .args(["serve", "--addr", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let o = Command::new(env!("CARGO_BIN_EXE_molgrow"))
        .args(["enumerate", "--symbols", "C", "--max-atoms", "3"])
        .env("MOLGROW_SERVER", format!("http://{addr}"))
        .output()
        .unwrap();
    server.kill().unwrap();
    server.wait().unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("count "));

    let o = molgrow(&["--server", &format!("http://{addr}"), "enumerate", "--symbols", "C", "--max-atoms", "2"]);
    assert_eq!(o.status.code(), Some(1));
}
