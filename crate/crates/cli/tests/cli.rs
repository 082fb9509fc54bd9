use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use psp_core::Image;

fn psp() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_psp"));
    cmd.env_remove("PSP_OUTPUT_DIR");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn psp");
    assert!(
        out.status.success(),
        "{:?} failed\nstdout:\n{}\nstderr:\n{}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

/// 32×32 image with four flat and ramped quadrants.
fn quadrants(dir: &Path) -> PathBuf {
    let img = Image::from_fn(32, 32, |r, c| match (r < 16, c < 16) {
        (true, true) => 40.0,
        (true, false) => 200.0,
        (false, true) => 60.0 + 8.0 * c as f64,
        (false, false) => 100.0 + 4.0 * r as f64,
    });
    let path = dir.join("quad.pgm");
    img.write_pgm(&path).unwrap();
    path
}

fn noisy(dir: &Path, sigma: f64) -> PathBuf {
    let clean = quadrants(dir);
    let path = dir.join("quad_noisy.pgm");
    run(psp()
        .args([
            "corrupt",
            "--sigma",
            &sigma.to_string(),
            "--seed",
            "5",
            "-i",
        ])
        .arg(&clean)
        .arg("-o")
        .arg(&path));
    path
}

#[test]
fn corrupt_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let clean = quadrants(dir.path());
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    for out in [&a, &b] {
        let o = run(psp()
            .args(["corrupt", "-s", "20", "--seed", "9", "-i"])
            .arg(&clean)
            .arg("-o")
            .arg(out));
        assert!(stdout(&o).starts_with("sigma_hat "));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let zero = dir.path().join("zero.pgm");
    run(psp()
        .args(["corrupt", "-s", "0", "-i"])
        .arg(&clean)
        .arg("-o")
        .arg(&zero));
    assert_eq!(fs::read(&zero).unwrap(), fs::read(&clean).unwrap());
}

#[test]
fn estimate_sigma_prints_a_number() {
    let dir = tempfile::tempdir().unwrap();
    let clean = quadrants(dir.path());
    let out = run(psp().args(["estimate-sigma", "-i"]).arg(&clean));
    let v: f64 = stdout(&out).trim().parse().unwrap();
    assert!(v >= 0.0);
}

#[test]
fn cluster_with_one_cluster_writes_one_montage() {
    let dir = tempfile::tempdir().unwrap();
    let input = noisy(dir.path(), 10.0);
    let out_dir = dir.path().join("out");
    run(psp()
        .args(["cluster", "-k", "1", "-i"])
        .arg(&input)
        .arg("--output-dir")
        .arg(&out_dir));
    let montages: Vec<String> = fs::read_dir(out_dir.join("montages"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(montages, vec!["cluster_00_n16.pgm".to_string()]);
    let labels = fs::read_to_string(out_dir.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().next(), Some("patch_index,row,col,label"));
    assert_eq!(labels.lines().count(), 17);
    assert!(out_dir.join("montage.pgm").exists());
}

#[test]
fn cluster_rejects_nlm() {
    let dir = tempfile::tempdir().unwrap();
    let input = quadrants(dir.path());
    let out = psp()
        .args(["cluster", "-m", "nlm", "-i"])
        .arg(&input)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nlm"));
}

#[test]
fn denoise_with_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let input = noisy(dir.path(), 15.0);
    let clean = dir.path().join("quad.pgm");
    let out_dir = dir.path().join("den");
    let results = dir.path().join("rows.csv");
    let models = dir.path().join("models");
    run(psp()
        .args([
            "denoise",
            "-k",
            "4",
            "-m",
            "psp-nnc,psp-nn,psp-bpdn,nlm",
            "--sigma",
            "15",
            "-i",
        ])
        .arg(&input)
        .arg("-o")
        .arg(&out_dir)
        .arg("--reference")
        .arg(&clean)
        .arg("--results")
        .arg(&results)
        .arg("--model-dir")
        .arg(&models));
    for m in ["psp-nnc", "psp-nn", "psp-bpdn", "nlm"] {
        let img = Image::read_pgm(out_dir.join(format!("quad_noisy_{m}.pgm"))).unwrap();
        assert_eq!((img.width(), img.height()), (32, 32));
    }
    let text = fs::read_to_string(&results).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert_eq!(fs::read_dir(&models).unwrap().count(), 3);
}

#[test]
fn nlm_without_noise_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let input = quadrants(dir.path());
    let out = dir.path().join("same.pgm");
    run(psp()
        .args(["denoise", "-m", "nlm", "--sigma-hat", "0", "-i"])
        .arg(&input)
        .arg("-o")
        .arg(&out));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&input).unwrap());
}

#[test]
fn results_need_a_reference() {
    let dir = tempfile::tempdir().unwrap();
    let input = quadrants(dir.path());
    let out = psp()
        .args(["denoise", "-m", "nlm", "-i"])
        .arg(&input)
        .arg("-o")
        .arg(dir.path().join("x.pgm"))
        .arg("--results")
        .arg(dir.path().join("r.csv"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compare_summary_has_one_row_per_sigma() {
    let dir = tempfile::tempdir().unwrap();
    let input = quadrants(dir.path());
    let out_dir = dir.path().join("cmp");
    run(psp()
        .args(["compare", "-k", "3", "--sigma", "10,20,30,40", "--image"])
        .arg(&input)
        .arg("--output-dir")
        .arg(&out_dir));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "sigma,psp-nnc,psp-nn,psp-bpdn,nlm");
    assert_eq!(lines.len(), 5);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 5));
    let results = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 1 + 16);
    assert!(out_dir.join("timings.csv").exists());
}

#[test]
fn compare_exits_nonzero_when_a_cell_fails() {
    let dir = tempfile::tempdir().unwrap();
    // too small for a single 8×8 patch, but fine for NLM
    let tiny = dir.path().join("tiny.pgm");
    Image::filled(4, 4, 100.0).write_pgm(&tiny).unwrap();
    let out = psp()
        .args([
            "compare",
            "--sigma",
            "10",
            "--method",
            "nlm,psp-nnc",
            "--image",
        ])
        .arg(&tiny)
        .arg("--output-dir")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let input = quadrants(dir.path());
    let from_env = dir.path().join("env");
    let from_cfg = dir.path().join("cfg");
    let from_flag = dir.path().join("flag");
    let compare = |extra: &[&std::ffi::OsStr]| {
        let mut cmd = psp();
        cmd.env("PSP_OUTPUT_DIR", &from_env)
            .args([
                "compare", "-k", "2", "--sigma", "10", "--method", "nlm", "--image",
            ])
            .arg(&input)
            .args(extra);
        run(&mut cmd);
    };

    compare(&[]);
    assert!(from_env.join("results.csv").exists());

    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!("output_dir = {:?}\n", from_cfg.to_str().unwrap()),
    )
    .unwrap();
    compare(&["--config".as_ref(), cfg.as_os_str()]);
    assert!(from_cfg.join("results.csv").exists());

    compare(&[
        "--config".as_ref(),
        cfg.as_os_str(),
        "--output-dir".as_ref(),
        from_flag.as_os_str(),
    ]);
    assert!(from_flag.join("results.csv").exists());
}

#[test]
fn unknown_method_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = quadrants(dir.path());
    let out = psp()
        .args(["denoise", "-m", "bm3d", "-i"])
        .arg(&input)
        .arg("-o")
        .arg(dir.path().join("x.pgm"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown method"));
}
