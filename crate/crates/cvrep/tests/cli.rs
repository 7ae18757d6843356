use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cvrep"));
    c.env_remove("CVREP_WORKERS");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cvrep-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn sidecar(p: &Path) -> serde_json::Value {
    let mut s = p.as_os_str().to_owned();
    s.push(".json");
    serde_json::from_str(&read(Path::new(&s))).unwrap()
}

#[test]
fn baselines_csv_is_deterministic_and_self_describing() {
    let dir = scratch("baselines");
    let a = dir.join("a.csv");
    let b = dir.join("b.csv");
    let o = run(bin().args(["baselines", "--distance-km", "50:150:50", "--out"]).arg(&a));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(bin()
        .args(["baselines", "--distance-km", "50:150:50", "--workers", "3", "--out"])
        .arg(&b));
    assert_eq!(code(&o), 0);
    let csv = read(&a);
    assert_eq!(csv, read(&b), "worker count must not change the table");
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# schema: cvrep-table/1"));
    assert!(lines.iter().any(|l| l.starts_with("# config_sha256: ")));
    assert!(lines.iter().any(|l| l.starts_with("# units: distance_km[km]")));
    let body: Vec<&str> = lines.iter().filter(|l| !l.starts_with('#')).copied().collect();
    assert_eq!(body.len(), 4);
    assert!(body[0].starts_with("distance_km,eta,plob"));

    let side = sidecar(&a);
    let digest: String = Sha256::digest(csv.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(side["content_sha256"], digest);
    assert_eq!(side["config"]["beta"], 0.95);
    assert_eq!(side["rows"], 3);
    let header_hash = format!("# config_sha256: {}", side["config_sha256"].as_str().unwrap());
    assert!(lines.contains(&header_hash.as_str()));
}

#[test]
fn config_files_match_flags() {
    let dir = scratch("files");
    let toml_cfg = dir.join("c.toml");
    let json_cfg = dir.join("c.json");
    std::fs::write(
        &toml_cfg,
        "experiment = \"baselines\"\ndistance_km = [80.0, 120.0]\nbeta = 0.9\n",
    )
    .unwrap();
    std::fs::write(
        &json_cfg,
        r#"{"experiment": "baselines", "distance_km": [80.0, 120.0], "beta": 0.9}"#,
    )
    .unwrap();
    let outs: Vec<PathBuf> = ["t.csv", "j.csv", "f.csv"].iter().map(|n| dir.join(n)).collect();
    assert_eq!(code(&run(bin().arg("baselines").arg("--config").arg(&toml_cfg).arg("--out").arg(&outs[0]))), 0);
    assert_eq!(code(&run(bin().arg("baselines").arg("--config").arg(&json_cfg).arg("--out").arg(&outs[1]))), 0);
    assert_eq!(
        code(&run(bin()
            .args(["baselines", "--distance-km", "80,120", "--beta", "0.9", "--out"])
            .arg(&outs[2]))),
        0
    );
    assert_eq!(read(&outs[0]), read(&outs[1]));
    assert_eq!(read(&outs[0]), read(&outs[2]));
    // flags override the file
    let o = dir.join("o.csv");
    assert_eq!(
        code(&run(bin().arg("baselines").arg("--config").arg(&toml_cfg).args(["--beta", "0.95", "--out"]).arg(&o))),
        0
    );
    assert_eq!(sidecar(&o)["config"]["beta"], 0.95);
}

#[test]
fn config_errors_exit_2() {
    let dir = scratch("errors");
    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "experiment = \"baselines\"\nunknown_key = 1\n").unwrap();
    let other = dir.join("other.toml");
    std::fs::write(&other, "experiment = \"znp_table\"\n").unwrap();
    let out = dir.join("x.csv");
    let cases: Vec<Vec<String>> = vec![
        vec!["baselines".into(), "--links".into(), "3".into()],
        vec!["baselines".into(), "--distance-km".into(), "-5".into()],
        vec!["baselines".into(), "--distance-km".into(), "1:2".into()],
        vec!["keyrate".into(), "--links".into(), "4".into(), "--bound".into(), "numeric".into()],
        vec!["keyrate".into(), "--gamma-max".into(), "0.1,0.2".into()],
        vec!["eof".into(), "--chi".into(), "1.2".into()],
        vec!["baselines".into(), "--config".into(), bad.display().to_string()],
        vec!["baselines".into(), "--config".into(), other.display().to_string()],
        vec!["baselines".into(), "--config".into(), dir.join("missing.toml").display().to_string()],
    ];
    for args in cases {
        let o = run(bin().args(&args).arg("--out").arg(&out));
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert!(!out.exists(), "nothing is written on config errors");
    let o = run(bin().env("CVREP_WORKERS", "many").args(["baselines", "--out"]).arg(&out));
    assert_eq!(code(&o), 2);
}

#[test]
fn workers_default_comes_from_environment() {
    let dir = scratch("env");
    let a = dir.join("a.csv");
    let o = run(bin()
        .env("CVREP_WORKERS", "2")
        .args(["znp", "--trials", "2000", "--seed", "3", "--out"])
        .arg(&a));
    assert_eq!(code(&o), 0);
    let b = dir.join("b.csv");
    assert_eq!(code(&run(bin().args(["znp", "--trials", "2000", "--seed", "3", "--out"]).arg(&b))), 0);
    assert_eq!(read(&a), read(&b));
    let c = dir.join("c.csv");
    assert_eq!(code(&run(bin().args(["znp", "--trials", "2000", "--seed", "4", "--out"]).arg(&c))), 0);
    assert_ne!(read(&a), read(&c), "seed feeds the Monte Carlo column");
}

#[test]
fn exhausted_optimizer_exits_3_with_flagged_rows() {
    let dir = scratch("budget");
    let cfg = dir.join("c.toml");
    std::fs::write(
        &cfg,
        "experiment = \"keyrate_single\"\ndistance_km = [300.0]\ncutoff = 6\n\n[optimizer]\nmax_evals = 4\n",
    )
    .unwrap();
    let out = dir.join("k.csv");
    let o = run(bin().arg("keyrate").arg("--config").arg(&cfg).arg("--out").arg(&out));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out);
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(body[0].ends_with(",converged"));
    assert!(body[1].ends_with(",0"));
    assert_eq!(sidecar(&out)["unconverged_rows"][0], 0);
}

#[test]
fn eof_subcommand_runs_per_gain() {
    let dir = scratch("eof");
    let out = dir.join("e.csv");
    let o = run(bin()
        .args(["eof", "--distance-km", "60,80", "--gain-max", "3", "--gain-max", "5", "--cutoff", "8", "--out"])
        .arg(&out));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&out);
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 5);
    assert!(csv.contains("# experiment: eof_single"));
}
