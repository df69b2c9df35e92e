use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlgames"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("nlgames-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn eikonal_experiment_writes_three_rows() {
    let out = scratch("eik");
    let cfg = configs().join("eikonal_const.toml");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("eikonal-const.csv"));
    assert_eq!(rows.len(), 3);
    // At speed 1 the plateau's kinks and every reset are grid-aligned, and
    // the game reproduces the characteristics to round-off.
    for r in &rows {
        assert!(r[3].parse::<f64>().unwrap() <= 1e-12, "{r:?}");
        assert_eq!(r[6], "ok");
    }
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("eikonal-const.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["config"]["schedule"].as_array().unwrap().len(), 3);
}

#[test]
fn slower_front_converges() {
    let out = scratch("slow");
    let cfg = configs().join("eikonal_slow.toml");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let level: Vec<f64> = csv_rows(&out.join("eikonal-slow.csv")).iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(level[1] < level[0] && level[2] < level[1], "{level:?}");
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = configs().join("pide_linear.toml");
    let (a, b) = (scratch("det-a"), scratch("det-b"));
    for d in [&a, &b] {
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap(), "--threads", "1"]);
        assert!(o.status.success());
    }
    let read = |d: &Path| std::fs::read(d.join("pide-linear.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("c.toml");
    std::fs::write(&p, body).unwrap();
    p
}

const LINE: &str = r#"
[grid]
dim = 1
lo = -1.0
hi = 1.0
h_over_eps = 0.25
[time]
t_final = 1.0
probe = 0.2
"#;

#[test]
fn empty_schedule_gives_empty_table() {
    let d = scratch("empty");
    let p = write_config(&d, &format!("name = \"e\"\ngame = \"eikonal\"\nschedule = []\n{LINE}[problem]\nterminal = \"cone(0.5)\"\nspeed = \"linear\"\n"));
    let o = run(&["run", "--config", p.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(d.join("e.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("eps,h,dt,error_sup,error_levelset,runtime_s"));
}

#[test]
fn unknown_kernel_exits_with_two() {
    let d = scratch("unknown");
    let p = write_config(&d, &format!("name = \"u\"\ngame = \"icf\"\nschedule = [0.2]\n{LINE}[problem]\nterminal = \"cone(0.5)\"\nkernel = \"gauss(1)\"\n"));
    let o = run(&["run", "--config", p.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&o.stderr);
    assert!(msg.contains("kernel") && msg.contains("bump(R), power(alpha, R)"), "{msg}");
}

#[test]
fn invalid_config_is_rejected() {
    let d = scratch("invalid");
    let p = write_config(&d, &format!("name = \"u\"\ngame = \"eikonal\"\nschedule = [0.1, 0.2]\n{LINE}[problem]\nterminal = \"cone(0.5)\"\nspeed = \"linear\"\n"));
    let o = run(&["run", "--config", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(run(&["run"]).status.code(), Some(2));
}

#[test]
fn default_verify_passes() {
    let d = scratch("verify");
    let o = run(&["verify", "--out", d.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["all_pass"], true);
    assert!(v["verdicts"].as_array().unwrap().len() >= 15);
    assert!(d.join("verify.json").exists());
}

#[test]
fn planted_fault_fails_with_witness() {
    let o = run(&["verify", "--suites", "ellipticity", "--inject-fault", "non-monotone-f"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let bad: Vec<_> = v["verdicts"].as_array().unwrap().iter().filter(|x| x["pass"] == false).collect();
    assert_eq!(bad.len(), 1);
    assert!(bad[0]["witness"]["f_b"].is_number());
}

#[test]
fn empty_suite_selection() {
    let o = run(&["verify", "--suites", ""]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["verdicts"].as_array().unwrap().is_empty());
    assert_eq!(run(&["verify", "--suites", "bogus"]).status.code(), Some(2));
}

#[test]
fn oracle_dump_and_table_merge() {
    let d = scratch("oracle");
    let cfg = configs().join("eikonal_const.toml");
    let o = run(&["oracle", "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = std::fs::read_to_string(d.join("eikonal-const.oracle.eps-0.1.json")).unwrap();
    let body = std::fs::read_to_string(d.join("eikonal-const.oracle.eps-0.1.csv")).unwrap();
    let field = nlgames::fields::field_from_csv(&header, &body).unwrap();
    assert_eq!(field.grid.len(), 81);

    for c in ["eikonal_const", "eikonal_slow"] {
        let p = configs().join(format!("{c}.toml"));
        assert!(run(&["run", "--config", p.to_str().unwrap(), "--out", d.to_str().unwrap()]).status.success());
    }
    let o = run(&[
        "table",
        d.join("eikonal-const.csv").to_str().unwrap(),
        d.join("eikonal-slow.csv").to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("source,eps,"));
}
