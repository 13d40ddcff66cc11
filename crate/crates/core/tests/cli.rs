use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asyncmst")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "\
# two sizes, two policies, two seeds
protocol = pipeline
family = gnp-connected:0.3
n = 12, 24
seeds = 0..2
policy = uniform:40 | reorder
";

#[test]
fn run_prints_a_json_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "e.conf", SMALL);
    let out = cli(&["run", "--config", &cfg, "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["protocol"], "pipeline");
    assert_eq!(v["n"], 12);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["oracle"]["verdict"], "match");
    assert_eq!(v["schema_version"], 1);
}

#[test]
fn configuration_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    for (text, needle) in [
        ("n = 8\nfrobnicate = 3\n", "frobnicate"),
        ("n = 8\nn = 9\n", "n"),
        ("family = hypercube\n", "hypercube"),
        ("n = 10\nfamily = disconnected:0.5:3,3\n", "10"),
        ("policy = sometimes\n", "sometimes"),
    ] {
        let cfg = write(tmp.path(), "bad.conf", text);
        let out = cli(&["run", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{text:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(needle), "{text:?}");
    }
    let out = cli(&["run", "--check", "sometimes"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_reports_and_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "e.conf", SMALL);
    let dir = tmp.path().join("out");
    let out = cli(&["sweep", "--config", &cfg, "--out", dir.to_str().unwrap(), "--threads", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("runs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
    let json = fs::read_dir(&dir).unwrap().filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "json"));
    assert_eq!(json.count(), 8);
}

#[test]
fn sweeps_are_deterministic_apart_from_wallclock() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "e.conf", &SMALL.replace("pipeline", "msf").replace("gnp-connected", "gnp"));
    let strip = |o: Output| -> Vec<String> {
        assert!(o.status.success());
        String::from_utf8(o.stdout)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    let a = strip(cli(&["sweep", "--config", &cfg, "--threads", "1"]));
    let b = strip(cli(&["sweep", "--config", &cfg, "--threads", "4"]));
    assert_eq!(a.len(), 9);
    assert_eq!(a, b);
}

#[test]
fn verify_reports_no_failures_on_healthy_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "e.conf", SMALL);
    let out = cli(&["verify", "--config", &cfg]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("8 runs, 0 failing"));
}

fn synthetic_csv(dir: &Path, exponent: f64) -> String {
    let mut text = String::from("n,protocol,seed,total_messages,phases\n");
    for n in [64u64, 128, 256, 512, 1024] {
        for seed in 0..10 {
            let noise = 1.0 + 0.01 * seed as f64;
            text.push_str(&format!("{n},msf,{seed},{},1\n", ((n as f64).powf(exponent) * noise) as u64));
        }
    }
    write(dir, &format!("s{exponent}.csv"), &text)
}

#[test]
fn scaling_check_passes_or_fails_on_the_slope() {
    let tmp = tempfile::tempdir().unwrap();
    let steep = synthetic_csv(tmp.path(), 2.0);
    let out = cli(&["scaling", "--csv", &steep, "--bound", "1.25"]);
    assert_eq!(out.status.code(), Some(1));
    let fit: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((fit["slope"].as_f64().unwrap() - 2.0).abs() < 1e-3);

    let flat = synthetic_csv(tmp.path(), 1.1);
    assert_eq!(cli(&["scaling", "--csv", &flat, "--bound", "1.25"]).status.code(), Some(0));

    // too few sizes is a configuration error
    let thin = write(tmp.path(), "thin.csv", "n,protocol,seed,total_messages,phases\n8,msf,0,10,1\n");
    assert_eq!(cli(&["scaling", "--csv", &thin, "--bound", "1.25"]).status.code(), Some(2));
}
