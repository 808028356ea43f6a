use std::path::Path;
use std::process::{Command, Output};

fn nssfp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nssfp"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("run nssfp")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = nssfp(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: [&str; 2] = ["--length", "300"];
const SYNTH: [&str; 4] = ["--authors", "40", "--train-words", "60000"];

fn with<'a>(parts: &[&[&'a str]]) -> Vec<&'a str> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(nssfp(dir.path(), &["--help"]).status.success());
    assert!(nssfp(dir.path(), &["evaluate", "--help"]).status.success());
    assert_eq!(nssfp(dir.path(), &["--bogus"]).status.code(), Some(2));
    assert_eq!(nssfp(dir.path(), &[]).status.code(), Some(2));

    let bad = nssfp(dir.path(), &["--set", "q=2", "bench", "--out", "b.csv"]);
    assert_eq!(bad.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("kind=config"), "{stderr}");
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = nssfp(
        dir.path(),
        &["simulate", "--nss", "nope.nss", "--out", "t.tr"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kind=io"));
}

#[test]
fn evaluate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = ok(
        dir.path(),
        &with(&[&SMALL, &["evaluate"], &SYNTH, &["--out", "a.txt"]]),
    );
    ok(
        dir.path(),
        &with(&[&SMALL, &["evaluate"], &SYNTH, &["--out", "b.txt"]]),
    );
    assert!(a.contains("recall"), "{a}");
    let ra = std::fs::read(dir.path().join("a.txt")).unwrap();
    let rb = std::fs::read(dir.path().join("b.txt")).unwrap();
    assert_eq!(ra, rb);

    ok(
        dir.path(),
        &with(&[
            &SMALL,
            &["--seed", "7", "evaluate"],
            &SYNTH,
            &["--out", "c.txt"],
        ]),
    );
    let rc = std::fs::read(dir.path().join("c.txt")).unwrap();
    assert_ne!(ra, rc);
}

fn matched_column(report: &str) -> Vec<(String, bool)> {
    report
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("seq_id"))
        .map(|l| {
            let f: Vec<&str> = l.split(", ").collect();
            (f[0].to_owned(), f[4] == "true")
        })
        .collect()
}

#[test]
fn stages_compose_to_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &with(&[
            &SMALL,
            &["evaluate"],
            &SYNTH,
            &["--out", "eval.txt", "--fit-out", "eval_fit.csv"],
        ]),
    );
    ok(
        d,
        &with(&[
            &SMALL,
            &["train", "--synthetic"],
            &SYNTH,
            &["--emit-corpus", "c.tsv", "--out", "m.json"],
        ]),
    );
    ok(
        d,
        &with(&[
            &SMALL,
            &[
                "nss",
                "--model",
                "m.json",
                "--corpus",
                "c.tsv",
                "--out",
                "s.nss",
                "--seqs-out",
                "s.seq",
            ],
        ]),
    );
    ok(
        d,
        &with(&[&SMALL, &["simulate", "--nss", "s.nss", "--out", "t.tr"]]),
    );
    ok(
        d,
        &with(&[
            &SMALL,
            &[
                "fit", "--nss", "s.nss", "--seqs", "s.seq", "--traces", "t.tr", "--out", "fit.csv",
            ],
        ]),
    );
    ok(
        d,
        &with(&[
            &SMALL,
            &[
                "match", "--nss", "s.nss", "--traces", "t.tr", "--fit", "fit.csv", "--out", "m.csv",
            ],
        ]),
    );

    let read = |name: &str| std::fs::read_to_string(d.join(name)).unwrap();
    assert_eq!(read("fit.csv"), read("eval_fit.csv"));

    let expected = matched_column(&read("eval.txt"));
    let matches = read("m.csv");
    for (id, matched) in expected {
        let row = matches
            .lines()
            .find(|l| l.starts_with(&format!("{id},")))
            .unwrap();
        let own = row.split(", ").nth(2) == Some(id.as_str());
        assert_eq!(own, matched, "{row}");
    }

    let report = ok(
        d,
        &["report", "--fit", "fit.csv", "--evaluation", "eval.txt"],
    );
    assert!(report.contains("recall="), "{report}");
}

#[test]
fn analyze_writes_variability_and_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &with(&[
            &SMALL,
            &["train", "--synthetic"],
            &SYNTH,
            &["--emit-corpus", "c.tsv", "--out", "m.json"],
        ]),
    );
    ok(
        d,
        &with(&[
            &SMALL,
            &[
                "nss",
                "--model",
                "m.json",
                "--corpus",
                "c.tsv",
                "--out",
                "s.nss",
                "--seqs-out",
                "s.seq",
            ],
        ]),
    );
    ok(
        d,
        &with(&[
            &SMALL,
            &[
                "analyze",
                "--nss",
                "s.nss",
                "--seqs",
                "s.seq",
                "--lengths",
                "100,300",
            ],
            &["--out", "v.csv", "--histogram", "h.csv"],
        ]),
    );
    let v = std::fs::read_to_string(d.join("v.csv")).unwrap();
    assert_eq!(v.lines().count(), 41);
    let h = std::fs::read_to_string(d.join("h.csv")).unwrap();
    assert_eq!(h.lines().count(), 1 + 2 * 100);
}

#[test]
fn bench_writes_both_variants() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(
        dir.path(),
        &[
            "bench",
            "--vocab-size",
            "2000",
            "--trials",
            "20",
            "--out",
            "b.csv",
        ],
    );
    assert!(out.contains("slowdown"), "{out}");
    let csv = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 40);
    assert!(csv.lines().any(|l| l.starts_with("mitigated")));
}

#[test]
fn config_file_and_flags_layer() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.conf"), "q = 0.95\nseed = 3\n").unwrap();
    let out = nssfp(
        dir.path(),
        &[
            "--config",
            "c.conf",
            "--seed",
            "4",
            "bench",
            "--trials",
            "5",
            "--vocab-size",
            "100",
            "--out",
            "b.csv",
        ],
    );
    assert!(out.status.success());
    let log = Command::new(env!("CARGO_BIN_EXE_nssfp"))
        .current_dir(dir.path())
        .env("RUST_LOG", "info")
        .args([
            "--config",
            "c.conf",
            "--seed",
            "4",
            "bench",
            "--trials",
            "5",
            "--vocab-size",
            "100",
            "--out",
            "b.csv",
        ])
        .output()
        .unwrap();
    let stderr = String::from_utf8_lossy(&log.stderr);
    assert!(stderr.contains("q = 0.95"), "{stderr}");
    assert!(stderr.contains("seed = 4"), "{stderr}");
}
