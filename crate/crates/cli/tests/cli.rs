use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phrasebias")).current_dir(dir).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn synth_then_full_run_then_stale_input() {
    let dir = tempfile::tempdir().unwrap();
    let synth = run(
        dir.path(),
        &["synth", "--out", "corpus", "--left-right-topics", "2", "--establishment-topics", "2", "--sources", "10", "--articles-per-source", "25"],
    );
    assert_eq!(code(&synth), 0, "{}", String::from_utf8_lossy(&synth.stderr));
    let corpus = dir.path().join("corpus");

    let all = run(&corpus, &["all"]);
    assert_eq!(code(&all), 0, "{}", String::from_utf8_lossy(&all.stderr));
    assert!(corpus.join("out/figures/landscape.svg").is_file());

    let again = run(&corpus, &["all"]);
    assert_eq!(code(&again), 0);
    let report = String::from_utf8_lossy(&again.stdout);
    assert!(report.lines().filter(|l| !l.trim().is_empty()).all(|l| l.contains("up to date")), "{report}");

    let counts = std::fs::read_dir(corpus.join("out/count")).unwrap().map(|e| e.unwrap().path()).find(|p| p.extension().is_some_and(|e| e == "counts")).unwrap();
    std::fs::write(&counts, "garbage\n").unwrap();
    let stale = run(&corpus, &["select"]);
    assert_eq!(code(&stale), 3);
    assert!(String::from_utf8_lossy(&stale.stderr).contains("stale upstream"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["ingest", "--config", "missing.toml"])), 2);
    std::fs::write(dir.path().join("config.toml"), "corpus_path = \"c.jsonl\"\n[fit]\nrank = 2\n").unwrap();
    let out = run(dir.path(), &["fit"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fit.rank"));
}
