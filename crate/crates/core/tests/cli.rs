use std::path::Path;
use std::process::{Command, Output};

fn penosc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_penosc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn penosc_env(args: &[&str], threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_penosc"))
        .env("PENOSC_THREADS", threads)
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let a = penosc(&["simulate", "--model", "fp", "--n", "100", "--T", "50", "--seed", "7"]);
    let b = penosc(&["simulate", "--model", "fp", "--n", "100", "--T", "50", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("t,y,x\n"));
    assert_eq!(text.lines().count(), 1 + 50_001);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(penosc(&["crossing", "--method", "both"]).status.code(), Some(2));
    assert_eq!(penosc(&["crossing", "--method", "mc"]).status.code(), Some(2));
    assert_eq!(
        penosc(&["crossing", "--method", "sideways", "--p", "1"]).status.code(),
        Some(2)
    );
    assert_eq!(penosc(&["frobnicate"]).status.code(), Some(2));
    let o = penosc(&["simulate", "--bogus", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--bogus"));
    assert_eq!(penosc(&[]).status.code(), Some(2));
    assert_eq!(penosc(&["--help"]).status.code(), Some(0));
}

#[test]
fn domain_errors_exit_one() {
    assert_eq!(penosc(&["drift-check", "--potential", "zero"]).status.code(), Some(1));
    assert_eq!(penosc(&["simulate", "--n", "0"]).status.code(), Some(1));
    assert_eq!(penosc(&["fig2a", "--paths", "0", "--N", "101"]).status.code(), Some(1));
    assert_eq!(penosc(&["pde", "--g", "cubic", "--T", "1"]).status.code(), Some(1));
}

#[test]
fn manifest_reruns_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let second = dir.path().join("b.csv");
    let o = penosc(&[
        "simulate",
        "--noise",
        "ou",
        "--T",
        "2",
        "--seed",
        "11",
        "--stride",
        "3",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let manifest = dir.path().join("a.csv.manifest");
    let text = read(&manifest);
    for key in [
        "subcommand=simulate",
        "noise=ou",
        "seed=11",
        "stride=3",
        "dt=0.001",
        "version=",
        "duration_s=",
    ] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
    let o = penosc(&[
        "simulate",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&first), read(&second));
    assert!(read(&first).starts_with("t,eta,y,x\n"));

    // a manifest from another subcommand is refused
    let o = penosc(&["pde", "--config", manifest.to_str().unwrap(), "--T", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# short run\nmodel=op\nT=0.01\nseed=3\n").unwrap();
    let a = penosc(&["simulate", "--config", cfg.to_str().unwrap()]);
    let text = String::from_utf8(a.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 11);
    let b = penosc(&["simulate", "--config", cfg.to_str().unwrap(), "--T", "0.002"]);
    assert_eq!(String::from_utf8(b.stdout).unwrap().lines().count(), 1 + 3);

    std::fs::write(&cfg, "T=0.01\nsed=3\n").unwrap();
    let o = penosc(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn csv_floats_round_trip() {
    let o = penosc(&["simulate", "--noise", "kt", "--T", "0.5", "--seed", "5"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for line in text.lines().skip(1) {
        for field in line.split(',') {
            let v: f64 = field.parse().unwrap();
            assert_eq!(format!("{v:.16e}"), field);
        }
    }
}

#[test]
fn table4_has_six_rows() {
    let o = penosc(&["table4", "--T", "1", "--N", "201"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,v0T"));
    let ns: Vec<u32> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(ns, vec![2, 5, 10, 50, 100, 1000]);
}

#[test]
fn pde_and_gamma_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = penosc(&[
        "pde",
        "--T",
        "2",
        "--N",
        "101",
        "--checkpoints",
        "5",
        "--snapshots",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out);
    assert!(text.starts_with("tau,w0,v0\n"));
    let rows = text.lines().count() - 1;
    assert!(rows >= 5);
    for k in 0..rows {
        let snap = dir.path().join(format!("p.csv.tau_{k}.csv"));
        let s = read(&snap);
        assert!(s.starts_with("y,w,v\n"));
        assert_eq!(s.lines().count(), 1 + 101);
        assert!(dir.path().join(format!("p.csv.tau_{k}.csv.manifest")).exists());
    }
    assert_eq!(penosc(&["pde", "--T", "1", "--snapshots"]).status.code(), Some(2));

    let o = penosc(&["gamma", "--T", "10", "--N", "201"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("n,gamma_sq,gamma,intercept,window_start,window_end,residual\n"));
    let g2: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(g2 > 0.05 && g2 < 0.3, "{g2}");
}

#[test]
fn invariant_histogram_shape() {
    let o = penosc(&["invariant", "--model", "op", "--T", "20", "--bins", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("y_center,x_center,count,density\n"));
    assert_eq!(text.lines().count(), 1 + 64);
    let o = penosc(&["invariant", "--T", "20", "--components", "zeta"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn drift_check_report() {
    let o = penosc(&["drift-check", "--noise", "ou", "--points", "11"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("eta,y,x,value,bound,slack\n"));
}

#[test]
fn crossing_threads_do_not_change_output() {
    let args = [
        "crossing",
        "--method",
        "both",
        "--p",
        "1",
        "--M",
        "200",
        "--T",
        "2",
        "--t-points",
        "4",
        "--gamma-sq",
        "0.1377",
    ];
    let a = penosc_env(&args, "1");
    let b = penosc_env(&args, "3");
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("T,estimate,stderr,method\n"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",mc")).count(), 4);
    assert_eq!(text.lines().filter(|l| l.ends_with(",asymptotic")).count(), 4);
}

#[test]
fn fig2b_emits_five_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f.csv");
    let o = penosc(&[
        "fig2b",
        "--M",
        "100",
        "--T",
        "1",
        "--t-points",
        "4",
        "--gamma-sq",
        "0.1377",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(&out);
    let mut labels: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    labels.dedup();
    assert_eq!(labels, vec!["p=1", "p=10", "p=100", "p=1000", "wstar"]);
    for l in text.lines().skip(1) {
        let p: f64 = l.split(',').nth(2).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    assert!(dir.path().join("f.csv.manifest").exists());
}

#[test]
fn fig2a_writes_two_files() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("fig");
    let o = penosc(&[
        "fig2a",
        "--paths",
        "50",
        "--N",
        "201",
        "--taus",
        "6",
        "--out",
        base.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let pde = read(&dir.path().join("fig_pde.csv"));
    let mc = read(&dir.path().join("fig_mc.csv"));
    assert!(pde.starts_with("tau,v0\n") && mc.starts_with("tau,v0,stderr\n"));
    let taus: Vec<f64> = pde
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(taus.len(), 6);
    assert!(taus.windows(2).all(|w| w[1] > w[0]));
}
