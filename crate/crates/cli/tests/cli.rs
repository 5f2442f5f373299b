use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mess_cli::output::{read_samples, read_summary};

fn mess(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mess"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

fn conjugate_run(sampler: &str, iterations: usize) -> String {
    format!(
        r#"{{"schema_version": 1,
            "model": {{"kind": "conjugate", "dim": 4, "noise_variance": 0.5, "data_seed": 2}},
            "sampler": {sampler},
            "chain": {{"iterations": {iterations}}},
            "seed": 11}}"#
    )
}

#[test]
fn generate_is_deterministic_and_validates_d() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "gen.json",
        r#"{"schema_version": 1, "seed": 5, "d_list": [10]}"#,
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = mess(&["generate", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(out_a.join("solute_d10.json")).unwrap();
    assert_eq!(a, fs::read(out_b.join("solute_d10.json")).unwrap());
    let ds: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(ds["a_params"].as_array().unwrap().len(), 45);
    assert_eq!(ds["y"].as_array().unwrap().len(), 3);
    assert_eq!(ds["schema_version"], 1);
    assert!(ds["hyperparameters"]["kappa"].is_number());

    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"schema_version": 1, "seed": 5, "d_list": [10, 5]}"#,
    );
    let o = mess(&[
        "generate",
        "--config",
        &bad,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("d_list[1]"), "{}", stderr(&o));
}

#[test]
fn run_smoke_and_trace_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let mess_cfg = write(
        dir.path(),
        "m.json",
        &conjugate_run(r#"{"kind": "mess", "proposals": 1}"#, 1000),
    );
    let ess_cfg = write(
        dir.path(),
        "e.json",
        &conjugate_run(r#"{"kind": "ess"}"#, 1000),
    );
    let (mo, eo) = (dir.path().join("m"), dir.path().join("e"));
    for (cfg, out) in [(&mess_cfg, &mo), (&ess_cfg, &eo)] {
        let o = mess(&["run", "--config", cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let rows = read_summary(&mo.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].model, "conjugate");
    assert!(rows[0].ess > 0.0);
    assert_eq!(
        data_lines(&mo.join("samples.csv")),
        data_lines(&eo.join("samples.csv"))
    );
    let first = fs::read_to_string(mo.join("samples.csv")).unwrap();
    assert!(first.starts_with("# config: {"));
    assert!(first.lines().next().unwrap().contains("\"seed\":11"));
}

#[test]
fn worker_count_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &conjugate_run(
            r#"{"kind": "mess", "proposals": 8, "distance": "euclidean"}"#,
            2000,
        ),
    );
    let (a, b) = (dir.path().join("w1"), dir.path().join("w8"));
    for (out, w) in [(&a, "1"), (&b, "8")] {
        let o = mess(&[
            "run",
            "--config",
            &cfg,
            "--workers",
            w,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        fs::read(a.join("samples.csv")).unwrap(),
        fs::read(b.join("samples.csv")).unwrap()
    );
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &conjugate_run(r#"{"kind": "mess", "proposals": 2}"#, 300),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(
        mess(&["run", "--config", &cfg, "--out", a.to_str().unwrap()])
            .status
            .success()
    );
    assert!(mess(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "12",
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    assert_ne!(
        data_lines(&a.join("samples.csv")),
        data_lines(&b.join("samples.csv"))
    );
    assert_eq!(read_summary(&b.join("summary.csv")).unwrap()[0].seed, 12);
}

#[test]
fn step_failure_exits_2_and_keeps_partial_samples() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"schema_version": 1,
            "model": {"kind": "conjugate", "dim": 10, "noise_variance": 1e-6, "data_seed": 2},
            "sampler": {"kind": "mess", "proposals": 2, "max_shrink_iterations": 1},
            "chain": {"iterations": 1000}, "seed": 1}"#,
    );
    let out = dir.path().join("o");
    let o = mess(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("step "), "{}", stderr(&o));
    let (names, rows) = read_samples(&out.join("samples.csv")).unwrap();
    assert_eq!(names.len(), 10);
    assert!(rows.len() < 1000);
}

#[test]
fn config_errors_exit_1_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        &conjugate_run(r#"{"kind": "mess", "proposals": 0}"#, 100),
    );
    let o = mess(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sampler.proposals"), "{}", stderr(&o));

    let cfg = write(
        dir.path(),
        "d.json",
        &conjugate_run(r#"{"kind": "mess", "proposals": 2, "colour": 1}"#, 100),
    );
    let o = mess(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sampler"), "{}", stderr(&o));

    assert_eq!(mess(&["run"]).status.code(), Some(1));
    assert_eq!(mess(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn gp_sweep_over_proposals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"schema_version": 1,
            "model": {"kind": "gp_classification", "config": {"n_points": 60}, "data_seed": 4},
            "grid": {"samplers": [{"kind": "mess", "proposals": 1, "distance": "angular"}], "proposals": [1, 2, 4, 8]},
            "chain": {"iterations": 3000, "record": [0, 1], "write_samples": false},
            "seed": 3}"#,
    );
    let out = dir.path().join("o");
    let o = mess(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_summary(&out.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(
        rows.iter().map(|r| r.m).collect::<Vec<_>>(),
        vec![1, 2, 4, 8]
    );
    for w in rows.windows(2) {
        assert!(w[1].mean_shrink_iters <= w[0].mean_shrink_iters, "{rows:?}");
    }
    assert!(!out.join("samples").exists());
    let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
    seeds.dedup();
    assert_eq!(seeds.len(), 4);
}

#[test]
fn solute_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let gen = write(
        dir.path(),
        "g.json",
        r#"{"schema_version": 1, "seed": 9, "d_list": [10, 20]}"#,
    );
    assert!(mess(&[
        "generate",
        "--config",
        &gen,
        "--out",
        data.to_str().unwrap()
    ])
    .status
    .success());

    let tune_body = |target: f64| {
        format!(
            r#"{{"schema_version": 1, "model": {{"kind": "solute", "dataset_dir": {:?}, "d": 20}},
                "target_rate": {target}, "pilot_length": 2000, "warmup_iterations": 500, "verify_length": 4000, "seed": 4}}"#,
            data.to_str().unwrap()
        )
    };
    let tune = write(dir.path(), "t.json", &tune_body(0.234));
    let (ta, tb) = (dir.path().join("ta"), dir.path().join("tb"));
    for out in [&ta, &tb] {
        let o = mess(&["tune-mh", "--config", &tune, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let rec: serde_json::Value =
        serde_json::from_slice(&fs::read(ta.join("mh_tuning.json")).unwrap()).unwrap();
    let scale = rec["tuning"]["scale"].as_f64().unwrap();
    assert!(scale > 0.0);
    assert!(
        (rec["verification_rate"].as_f64().unwrap() - 0.234).abs() <= 0.02,
        "{rec}"
    );
    assert_eq!(
        fs::read(ta.join("mh_tuning.json")).unwrap(),
        fs::read(tb.join("mh_tuning.json")).unwrap()
    );

    let bad = write(dir.path(), "tb.json", &tune_body(1.5));
    assert_eq!(
        mess(&[
            "tune-mh",
            "--config",
            &bad,
            "--out",
            dir.path().to_str().unwrap()
        ])
        .status
        .code(),
        Some(1)
    );

    let sweep = write(
        dir.path(),
        "s.json",
        &format!(
            r#"{{"schema_version": 1, "model": {{"kind": "solute", "dataset_dir": {:?}, "d": 10}},
                "grid": {{"d": [10, 20], "samplers": [{{"kind": "mess", "proposals": 50}}, {{"kind": "mh", "tuning_file": {:?}}}]}},
                "chain": {{"iterations": 400, "record": [0, 1], "per_component": true}}, "seed": 2}}"#,
            data.to_str().unwrap(),
            ta.join("mh_tuning.json").to_str().unwrap()
        ),
    );
    let out = dir.path().join("sweep");
    let o = mess(&["sweep", "--config", &sweep, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_summary(&out.join("summary.csv")).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0].component, "a0_1");
    assert_eq!(rows[1].component, "a0_2");
    let files: Vec<_> = fs::read_dir(out.join("samples")).unwrap().collect();
    assert_eq!(files.len(), 4);

    let o = mess(&[
        "report",
        out.join("summary.csv").to_str().unwrap(),
        "--out",
        dir.path().join("rep").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("rep/report.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 9);
}

#[test]
fn empty_grid_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"schema_version": 1, "model": {"kind": "conjugate", "dim": 2, "noise_variance": 1.0, "data_seed": 1},
            "grid": {"samplers": [{"kind": "mess", "proposals": 2}], "proposals": []},
            "chain": {"iterations": 10}, "seed": 1}"#,
    );
    let o = mess(&[
        "sweep",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("grid.proposals"), "{}", stderr(&o));
}

#[test]
fn missing_dataset_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "r.json",
        r#"{"schema_version": 1, "model": {"kind": "solute", "dataset_dir": "/nonexistent", "d": 10},
            "sampler": {"kind": "ess"}, "chain": {"iterations": 10}, "seed": 1}"#,
    );
    let o = mess(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.dataset_dir"), "{}", stderr(&o));
}
