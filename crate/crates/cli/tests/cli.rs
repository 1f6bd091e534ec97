use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cmrf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cmrf"))
        .args(args)
        .env("CMRF_OUTPUT_DIR", out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn uniform_csv(path: &Path, rows: usize, cols: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for _ in 0..rows {
        let row: Vec<String> = (0..cols)
            .map(|_| rng.gen_range(0.0..1.0f64).to_string())
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

/// Second row of a one-row CSV, keyed by header.
fn score_field(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    row[header.iter().position(|h| *h == key).unwrap()].to_string()
}

#[test]
fn missing_data_file_exits_2_and_names_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let o = cmrf(
        &["fit", "--data", missing.to_str().unwrap(), "-K", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.csv"), "{}", stderr(&o));
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = cmrf(&["sweep", "--config", "no-such.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no-such.toml"));
}

#[test]
fn validation_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    fs::write(&data, "0.1,0.2\n0.3,1.7\n").unwrap();
    let o = cmrf(
        &[
            "fit",
            "--data",
            data.to_str().unwrap(),
            "--graph",
            "chain:2",
            "-K",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("d.csv"));
    let o = cmrf(&["sweep", "--graph", "ring:4"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "K_list = [0, 20]\n").unwrap();
    let o = cmrf(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn zero_order_fit_has_zero_loglik() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("u.csv");
    uniform_csv(&data, 500, 9, 1);
    let o = cmrf(
        &["fit", "--data", data.to_str().unwrap(), "-K", "0"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(score_field(&dir.path().join("score.csv"), "loglik"), "0");
    assert_eq!(score_field(&dir.path().join("score.csv"), "aic"), "0");
}

#[test]
fn uniform_data_gives_small_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("u.csv");
    uniform_csv(&data, 10_000, 9, 2);
    let o = cmrf(
        &["fit", "--data", data.to_str().unwrap(), "-K", "1"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let dump = fs::read_to_string(dir.path().join("coefficients.csv")).unwrap();
    let mut lines = dump.lines();
    assert_eq!(lines.next(), Some("kind,i,j,s,t,value"));
    let values: Vec<f64> = lines
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 9 + 8);
    let worst = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(worst <= 0.05, "max |coefficient| {worst}");
}

#[test]
fn config_file_sections_are_applied() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "seed = 3\ntrials = 2\nN = 200\nK_list = [0, 1]\n\n[graph]\nshape = \"grid:2x2\"\n\n[sampler]\nburn_in = 100\nthinning = 2\n\n[eval]\nM = 1000\nkld = false\n",
    )
    .unwrap();
    let o = cmrf(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let trials = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let rows: Vec<&str> = trials.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    // no KL column when disabled; grid graphs use Monte Carlo normalizers
    for r in &rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[5], "");
        assert_eq!(f[6], "");
    }
    let agg = fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 3);
}

#[test]
fn sweep_rerun_is_byte_identical() {
    let runs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let o = cmrf(
                &[
                    "sweep",
                    "--trials",
                    "1",
                    "-N",
                    "300",
                    "--K-list",
                    "0,1,2",
                    "--seed",
                    "11",
                    "--burn-in",
                    "200",
                    "--kld-samples",
                    "300",
                ],
                dir.path(),
            );
            assert!(o.status.success(), "{}", stderr(&o));
            (
                fs::read(dir.path().join("trials.csv")).unwrap(),
                fs::read(dir.path().join("aggregate.csv")).unwrap(),
            )
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn sample_then_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = cmrf(
        &[
            "sample",
            "-N",
            "300",
            "--graph",
            "chain:4",
            "--burn-in",
            "100",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let data = d.join("samples.csv");
    let o = cmrf(
        &[
            "fit",
            "--data",
            data.to_str().unwrap(),
            "--graph",
            "chain:4",
            "-K",
            "2",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let fitted = fs::read_to_string(d.join("score.csv")).unwrap();
    let model = d.join("model.txt");
    let o = cmrf(
        &[
            "score",
            "--model",
            model.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(d.join("score.csv")).unwrap(), fitted);
    // a model on a different graph than the one requested is rejected
    let o = cmrf(
        &[
            "score",
            "--model",
            model.to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--graph",
            "chain:5",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(3));
}
