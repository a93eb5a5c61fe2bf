use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const QUICK: &str = r#"
[sdt]
n_boot = 50
[evaluate]
n_perm = 10
top1_iters = 50
[rsa]
n_boot = 10
n_perm = 20
[text]
n_boot = 10
"#;

fn cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_covert-lab"))
        .args(args)
        .current_dir(dir)
        .env_remove("COVERT_LAB_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn simulated(dir: &Path, groups: usize) {
    fs::write(dir.join("world.toml"), format!("n_groups = {groups}\nseed = 4\n[planted]\nconversationality = 2.0\nanalytic_style = 1.5\nfunction_word_rate = -1.4\n")).unwrap();
    fs::write(dir.join("quick.toml"), QUICK).unwrap();
    let o = cli(&["simulate", "--config", "world.toml", "--out", "run"], dir);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_then_report_succeeds() {
    let d = tempfile::tempdir().unwrap();
    simulated(d.path(), 149);
    for f in ["events.ndjson", "groups.csv", "roster.csv", "utterances.csv", "judgments.csv", "world.json"] {
        assert!(d.path().join("run").join(f).exists(), "{f}");
    }
    let o = cli(&["report", "--in", "run", "--out", "rep", "--config", "quick.toml"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("rep/report.md").exists());
    assert!(d.path().join("rep/roc.svg").exists());
}

#[test]
fn ingest_round_trips_the_simulated_tables() {
    let d = tempfile::tempdir().unwrap();
    simulated(d.path(), 20);
    assert_eq!(code(&cli(&["ingest", "--log", "run/events.ndjson", "--out", "tables"], d.path())), 0);
    for f in ["groups.csv", "roster.csv", "judgments.csv", "utterances.csv"] {
        assert_eq!(
            fs::read(d.path().join("run").join(f)).unwrap(),
            fs::read(d.path().join("tables").join(f)).unwrap(),
            "{f}"
        );
    }
    let report = fs::read_to_string(d.path().join("tables/ingest_report.json")).unwrap();
    assert!(report.contains("self_judgments_dropped"));
}

#[test]
fn single_stage_writes_its_primary_table() {
    let d = tempfile::tempdir().unwrap();
    simulated(d.path(), 20);
    let o = cli(
        &[
            "analyze",
            "sdt",
            "--in",
            "run/judgments.csv",
            "--out",
            "sdt.csv",
            "--by",
            "overall",
            "--mode",
            "exclude",
            "--boot",
            "20",
        ],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(d.path().join("sdt.csv")).unwrap();
    assert!(table.starts_with("by,stratum,"));
    assert_eq!(table.lines().count(), 2);
    assert!(d.path().join("sdt/manifest.json").exists());

    let o = cli(
        &[
            "analyze",
            "rsa",
            "--in",
            "run",
            "--out",
            "rsa.json",
            "--spaces",
            "cue,truth",
            "--boot",
            "5",
            "--perm",
            "10",
            "--dmid",
            "0.5",
        ],
        d.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("rsa.json")).unwrap()).unwrap();
    assert_eq!(doc["manifest"]["command"], "analyze rsa");
    assert_eq!(doc["tables"]["rsa"][0]["space_a"], "cue");
}

#[test]
fn seed_comes_from_flag_then_environment_then_config() {
    let d = tempfile::tempdir().unwrap();
    simulated(d.path(), 10);
    fs::write(d.path().join("seeded.toml"), "seed = 11\n").unwrap();
    let seed_of = |dir: &str| -> u64 {
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.path().join(dir).join("manifest.json")).unwrap()).unwrap();
        m["seed"].as_u64().unwrap()
    };
    let base = ["analyze", "sdt", "--in", "run", "--config", "seeded.toml", "--boot", "5", "--out"];
    cli(&[&base[..], &["a"]].concat(), d.path());
    assert_eq!(seed_of("a"), 11);
    let o = Command::new(env!("CARGO_BIN_EXE_covert-lab"))
        .args([&base[..], &["b"]].concat())
        .current_dir(d.path())
        .env("COVERT_LAB_SEED", "12")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(seed_of("b"), 12);
    cli(&[&base[..], &["c", "--seed", "13"]].concat(), d.path());
    assert_eq!(seed_of("c"), 13);
}

#[test]
fn exit_codes_follow_the_error_class() {
    let d = tempfile::tempdir().unwrap();
    simulated(d.path(), 30);
    fs::write(d.path().join("bad.toml"), "n_groups = 3\n").unwrap();
    assert_eq!(code(&cli(&["report", "--in", "run", "--out", "x", "--config", "bad.toml"], d.path())), 2);
    assert_eq!(code(&cli(&["report", "--in", "missing", "--out", "x"], d.path())), 3);
    assert_eq!(code(&cli(&["analyze", "regress", "--in", "run", "--out", "x", "--cluster", "planet"], d.path())), 2);
    // Thirty strongly planted groups leave the truth model separable.
    let o = cli(&["analyze", "regress", "--in", "run", "--out", "fit", "--model", "truth_h2"], d.path());
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("fit/models.csv").exists());
}
