use std::path::Path;
use std::process::{Command, Output};

fn bicameral(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bicameral")).args(args).output().unwrap()
}

fn csv_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

const HEADER: &str = "workload,vl_bits,hierarchy,prefetch,cycles,accesses,native_hits,cross_hits,wb_restores,misses,amat,ras,cas,pre,writebacks,pf_issued,pf_filled,pf_useful";

#[test]
fn run_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let out = bicameral(&[
        "run",
        "--workload",
        "axpy",
        "--size",
        "small",
        "--vl",
        "512",
        "--hierarchy",
        "bc",
        "--prefetch",
        "on",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = csv_lines(&csv);
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], HEADER);
    assert!(lines[1].starts_with("axpy,512,bc,on,"));
}

#[test]
fn sweep_two_hierarchies_gives_two_rows_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = bicameral(&[
            "sweep",
            "--workload",
            "spmv",
            "--size",
            "small",
            "--vl",
            "1024",
            "--hierarchy",
            "wc,bc",
            "--seed",
            "3",
            "--csv",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let lines = csv_lines(&a);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("spmv,1024,wc,off,"));
    assert!(lines[2].starts_with("spmv,1024,bc,off,"));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn trace_file_replays_like_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("mv.trace");
    let gen_csv = dir.path().join("gen.csv");
    let file_csv = dir.path().join("file.csv");
    let common = ["--vl", "256", "--hierarchy", "wc", "--size", "small"];
    let mut args =
        vec!["run", "--workload", "mv", "--trace-out", trace.to_str().unwrap(), "--csv", gen_csv.to_str().unwrap()];
    args.extend(common);
    assert!(bicameral(&args).status.success());
    let mut args = vec!["run", "--workload", trace.to_str().unwrap(), "--csv", file_csv.to_str().unwrap()];
    args.extend(common);
    let out = bicameral(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let strip = |l: &str| l.split_once(',').unwrap().1.to_string();
    assert_eq!(strip(&csv_lines(&gen_csv)[1]), strip(&csv_lines(&file_csv)[1]));
}

#[test]
fn csv_goes_to_stdout_without_path() {
    let out = bicameral(&["run", "--workload", "axpy", "--size", "small", "--vl", "4096", "--oracle", "off"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some(HEADER));
    assert!(text.lines().nth(1).unwrap().starts_with("axpy,4096,bc,off,"));
}

#[test]
fn usage_errors_exit_with_one() {
    for args in [
        &["run", "--workload", "axpy", "--hierarchy", "l2"][..],
        &["run", "--workload", "no-such-kernel"],
        &["run", "--workload", "axpy", "--vl", "100"],
        &["sweep", "--workload", "axpy"],
        &["run", "--workload", "axpy", "--config", "/nonexistent/cfg"],
        &["frobnicate"],
    ] {
        let out = bicameral(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn config_file_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(&cfg, "# slower memory\nlat_ras = 40\nhierarchy = white\n").unwrap();
    let out =
        bicameral(&["run", "--workload", "axpy", "--size", "small", "--vl", "512", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("axpy,512,wc,off,"));
    std::fs::write(&cfg, "lat_ras = fast\n").unwrap();
    assert_eq!(bicameral(&["run", "--workload", "axpy", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    assert!(bicameral(&["--help"]).status.success());
}
