use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn bin(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_wattrank"));
    c.current_dir(dir);
    for var in ["WATTRANK_STORE", "WATTRANK_ALPHA", "WATTRANK_BETA", "WATTRANK_APPLIANCES", "WATTRANK_LENIENT", "WATTRANK_CONFIG"] {
        c.env_remove(var);
    }
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin(dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn imported() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for t in ["table1.csv", "table2.csv"] {
        let o = run(dir.path(), &["import", fixture(t).to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    dir
}

#[test]
fn import_rank_and_filter() {
    let dir = imported();
    let o = run(dir.path(), &["rank", "--dataset", "Cityscapes"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let order: Vec<&str> = out
        .lines()
        .skip(2)
        .filter_map(|l| l.split_whitespace().nth(2))
        .collect();
    assert_eq!(order, ["Mask2Former", "BiSeNet", "DeepLabv3", "PSPNet", "SETR", "Segmenter"]);

    let o = run(dir.path(), &["ls", "--task", "action-recognition"]);
    assert_eq!(stdout(&o).lines().count(), 14);

    // Re-importing the same ids is a validation error and leaves the store alone.
    let o = run(dir.path(), &["import", fixture("table1.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &["ls"]);
    assert_eq!(stdout(&o).lines().count(), 22);
}

#[test]
fn report_formats_and_pareto() {
    let dir = imported();
    let o = run(dir.path(), &["report", "--format", "json", "--dataset", "Cityscapes"]);
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let entries = doc["groups"][0]["entries"].as_array().unwrap();
    assert_eq!(entries[0]["model"], "Mask2Former");
    let segmenter = entries.iter().find(|e| e["model"] == "Segmenter").unwrap();
    assert_eq!(segmenter["pareto"], false);

    let o = run(dir.path(), &["report", "--format", "csv", "--out", "r.csv"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);

    let o = run(dir.path(), &["pareto", "--dataset", "Cityscapes"]);
    assert!(!stdout(&o).contains("Segmenter"));
    assert!(stdout(&o).contains("Mask2Former"));
}

#[test]
fn export_round_trips_through_import() {
    let dir = imported();
    let o = run(dir.path(), &["export", "--out", "all.csv"]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(dir.path(), &["--store", "copy.jsonl", "import", "all.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let a = stdout(&run(dir.path(), &["export"]));
    let b = stdout(&run(dir.path(), &["--store", "copy.jsonl", "export"]));
    assert_eq!(a, b);
}

#[test]
fn sweep_reports_crossover() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "run_id,model,task,dataset,hardware,gpu_count,batch_size,epochs,data_fraction,accuracy,train_energy_kwh\n\
               a,A,t,d,h,1,8,1,1,0.95,1000\n\
               b,B,t,d,h,1,8,1,1,0.70,10\n";
    std::fs::write(dir.path().join("ab.csv"), csv).unwrap();
    assert_eq!(run(dir.path(), &["import", "ab.csv"]).status.code(), Some(0));
    let o = run(dir.path(), &["sweep", "--alphas", "1,3,4,8"]);
    let out = stdout(&o);
    assert!(out.contains("alpha 1.00000: b > a"), "{out}");
    assert!(out.contains("alpha 8.00000: a > b"), "{out}");
    assert!(out.contains("rank change between alpha 3.00000 and 4.00000"), "{out}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["sam", "--accuracy", "0.9", "--kwh", "1"]).status.code(), Some(3));
    assert_eq!(run(d, &["sam", "--accuracy", "0.9"]).status.code(), Some(1));
    assert_eq!(run(d, &["sam", "--accuracy", "2", "--kwh", "10"]).status.code(), Some(2));
    assert_eq!(run(d, &["integrate", "missing.csv"]).status.code(), Some(2));
    assert_eq!(run(d, &["track", "--provider", "live:nope", "--", "true"]).status.code(), Some(4));
    assert_eq!(run(d, &["--version"]).status.code(), Some(0));
}

#[test]
fn config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("wattrank.toml"), "alpha = 1.0\nbeta = 2.0\n").unwrap();
    let sam = |cmd: &mut Command| stdout(&cmd.args(["sam", "--accuracy", "0.5", "--kwh", "100"]).output().unwrap());
    // file: 2 * 0.5 / 2
    assert_eq!(sam(&mut bin(d)).trim(), "0.500000");
    // env beats file
    assert_eq!(sam(bin(d).env("WATTRANK_BETA", "4")).trim(), "1.00000");
    // flag beats env
    assert_eq!(sam(bin(d).env("WATTRANK_BETA", "4").args(["--beta", "8"])).trim(), "2.00000");

    let o = bin(d).args(["--show-config", "sam", "--accuracy", "1", "--kwh", "100"]).output().unwrap();
    assert!(stderr(&o).contains("alpha = 1 (config file)"), "{}", stderr(&o));
}

#[cfg(unix)]
#[test]
fn track_integrate_record_and_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(
        d,
        &[
            "track", "--provider", "synthetic:200", "--interval-ms", "20", "--out", "trace.csv",
            "--record", "runs.jsonl", "--model", "toy", "--task", "t", "--dataset", "d",
            "--batch-size", "4", "--accuracy", "81", "--accuracy-unit", "percent",
            "--", "sh", "-c", "sleep 0.3; exit 5",
        ],
    );
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    assert!(stderr(&o).contains("recorded run"));

    let kwh: f64 = stdout(&run(d, &["integrate", "trace.csv"])).trim().parse().unwrap();
    let expected = 200.0 * 0.3 / 3.6e6;
    assert!((kwh - expected).abs() < 0.5 * expected, "{kwh}");

    let ls = stdout(&run(d, &["ls"]));
    assert!(ls.contains("toy") && ls.contains("0.810000"), "{ls}");

    let o = run(
        d,
        &[
            "pipeline", "--trace", "trace.csv", "--probe-fraction", "0.001", "--probe-epochs", "1",
            "--target-fraction", "1", "--target-epochs", "100", "--accuracy", "0.8",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("sam "));

    // Too small an extrapolation reports energies, then exits 3.
    let o = run(
        d,
        &[
            "pipeline", "--trace", "trace.csv", "--probe-fraction", "1", "--probe-epochs", "1",
            "--target-fraction", "1", "--target-epochs", "1", "--accuracy", "0.8",
        ],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("extrapolated_kwh"));
}

#[test]
fn equiv_uses_appliance_file() {
    let dir = tempfile::tempdir().unwrap();
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/appliances.example.csv");
    let o = run(dir.path(), &["--appliances", example.to_str().unwrap(), "equiv", "--kwh", "120"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("laptop: 24.0000 months"));
    assert!(out.contains("refrigerator: 3.00000 months"));
    assert_eq!(run(dir.path(), &["equiv", "--kwh", "1"]).status.code(), Some(1));
}

#[test]
fn fit_probes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("p.csv"), "x,energy_kwh\n1,2\n2,4\n3,7\n").unwrap();
    let o = run(dir.path(), &["fit", "--x", "epochs", "p.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("slope 2.50000"));
    std::fs::write(dir.path().join("q.csv"), "x,energy_kwh\n1,2\n").unwrap();
    assert_eq!(run(dir.path(), &["fit", "--x", "epochs", "q.csv"]).status.code(), Some(2));
}
