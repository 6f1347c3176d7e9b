use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn drsel(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_drsel"));
    cmd.args(args).env_remove("DRSEL_SEEDS").env_remove("DRSEL_OUT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_spec(dir: &Path, body: &str) -> String {
    let path = dir.join("spec.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
  "sim": {"n_customers": 12, "horizon": 30, "budget": {"lo": 3.0, "hi": 4.0}},
  "policies": ["ols", "ucb"],
  "seeds": [0, 1, 2],
  "out_dir": "out"
}"#;

#[test]
fn run_writes_every_artifact() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let out = drsel(&["run", &spec, "--jobs", "2"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "{stdout}");

    let o = dir.path().join("out");
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 6);
    for policy in ["ols", "ucb"] {
        for seed in 0..3 {
            let name = format!("trace_{policy}_seed{seed}.csv");
            let text = fs::read_to_string(o.join(&name)).unwrap();
            let mut lines = text.lines();
            assert_eq!(
                lines.next().unwrap(),
                "t,policy,seed,n_selected,spend,reward,expected_reward,oracle_value,step_regret,cum_regret"
            );
            assert_eq!(lines.count(), 30);
            assert!(runs.iter().any(|r| r["trace"] == name.as_str()));
        }
    }
    assert!(runs.iter().all(|r| r.get("wall_time_s").is_some() && r.get("final_cum_regret").is_some()));
    let plot = fs::read_to_string(o.join("plot_data.csv")).unwrap();
    assert!(plot.starts_with("t,policy,median,q25,q75\n"));
    assert_eq!(plot.lines().count(), 1 + 2 * 30);
}

#[test]
fn identical_specs_give_identical_traces() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(drsel(&["run", &spec, "--out-dir", a.to_str().unwrap(), "--jobs", "1"], &[]).status.success());
    assert!(drsel(&["run", &spec, "--out-dir", b.to_str().unwrap(), "--jobs", "3"], &[]).status.success());
    for policy in ["ols", "ucb"] {
        for seed in 0..3 {
            let name = format!("trace_{policy}_seed{seed}.csv");
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap(), "{name}");
        }
    }
}

#[test]
fn zero_horizon_is_a_valid_run() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), &SMALL.replace("\"horizon\": 30", "\"horizon\": 0"));
    let out = drsel(&["run", &spec], &[]);
    assert!(out.status.success());
    let o = dir.path().join("out");
    let text = fs::read_to_string(o.join("trace_ols_seed0.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 6);
}

#[test]
fn config_errors_exit_2_with_location() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), &SMALL.replace("\"ucb\"", "\"thompson\""));
    let out = drsel(&["run", &spec], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("spec.json:3:") && err.contains("policies[1]") && err.contains("thompson"), "{err}");

    let spec = write_spec(dir.path(), &SMALL.replace("\"horizon\"", "\"horizn\""));
    let out = drsel(&["run", &spec], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("horizn"));

    let out = drsel(&["run", dir.path().join("missing.json").to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = drsel(&["frobnicate"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    // out_dir collides with an existing file
    fs::write(dir.path().join("out"), "").unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let out = drsel(&["run", &spec], &[]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn environment_overrides_seeds_and_out_dir() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let elsewhere = dir.path().join("env_out");
    let out = drsel(
        &["run", &spec],
        &[("DRSEL_SEEDS", "7,8"), ("DRSEL_OUT_DIR", elsewhere.to_str().unwrap())],
    );
    assert!(out.status.success());
    assert!(elsewhere.join("trace_ols_seed7.csv").exists());
    assert!(elsewhere.join("trace_ucb_seed8.csv").exists());
    assert!(!elsewhere.join("trace_ols_seed0.csv").exists());

    let out = drsel(&["run", &spec, "--seed-offset", "10", "--out-dir", elsewhere.to_str().unwrap()], &[]);
    assert!(out.status.success());
    assert!(elsewhere.join("trace_ols_seed12.csv").exists());
}

#[test]
fn sweep_points_match_plain_runs() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(dir.path(), SMALL);
    let out = drsel(&["sweep", &spec, "--delta", "0.3", "--sigma", "0.3,0.5"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("out");
    let table = fs::read_to_string(o.join("sweep.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "delta,sigma,median_final_cum_regret,iqr");
    assert_eq!(lines.count(), 2);

    // the defaults are delta = sigma = 0.3, so the first point is a plain run
    let plain = dir.path().join("plain");
    assert!(drsel(&["run", &spec, "--out-dir", plain.to_str().unwrap()], &[]).status.success());
    let point = o.join("delta0.3_sigma0.3");
    for name in ["trace_ols_seed1.csv", "trace_ucb_seed2.csv", "plot_data.csv"] {
        assert_eq!(fs::read(point.join(name)).unwrap(), fs::read(plain.join(name)).unwrap(), "{name}");
    }

    let out = drsel(&["sweep", &spec, "--delta", "0.3"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_reports_split_timings() {
    let dir = TempDir::new().unwrap();
    let spec = write_spec(
        dir.path(),
        r#"{"sim": {"n_customers": 10, "horizon": 50, "budget": {"lo": 3.0, "hi": 4.0}}, "policies": ["ols"], "seeds": [0]}"#,
    );
    for extra in [&[][..], &["--sequential"][..]] {
        let mut args = vec!["bench", spec.as_str()];
        args.extend_from_slice(extra);
        let out = drsel(&args, &[]);
        assert!(out.status.success());
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("out/bench.json")).unwrap()).unwrap();
        assert_eq!(report["events"], 50);
        assert!(report["mean_round_s"].as_f64().unwrap() <= 0.01);
        assert!(report.get("mean_solve_s").is_some() && report.get("mean_update_s").is_some());
    }
}

#[test]
fn target_and_network_objectives_run() {
    let dir = TempDir::new().unwrap();
    let roomy = |n: usize| {
        let buses: Vec<String> = (0..3)
            .map(|b| format!(r#"{{"id": {b}, "u_min": 0.9, "u_max": 1.1}}"#))
            .collect();
        let bus_of: Vec<String> = (0..n).map(|i| (1 + i % 2).to_string()).collect();
        format!(
            r#"{{"buses": [{}], "lines": [{{"from": 0, "to": 1, "r": 0.01, "x": 0.01, "s_cap": 2.0}}, {{"from": 1, "to": 2, "r": 0.01, "x": 0.01, "s_cap": 1.0}}], "root": 0, "customer_bus": [{}], "eta": [{}]}}"#,
            buses.join(","),
            bus_of.join(","),
            vec!["0.2"; n].join(",")
        )
    };
    fs::write(dir.path().join("net.json"), roomy(12)).unwrap();
    let spec = write_spec(
        dir.path(),
        &SMALL.replace("\"out_dir\"", "\"objective\": \"budget_network\", \"network_file\": \"net.json\", \"out_dir\""),
    );
    let out = drsel(&["run", &spec], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let spec = write_spec(
        dir.path(),
        &SMALL
            .replace("\"horizon\": 30", "\"horizon\": 10, \"target\": {\"lo\": 2.0, \"hi\": 3.0}")
            .replace("\"out_dir\"", "\"objective\": \"target_one_sided\", \"out_dir\""),
    );
    let out = drsel(&["run", &spec], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    fs::write(dir.path().join("net.json"), roomy(5)).unwrap();
    let spec = write_spec(
        dir.path(),
        &SMALL.replace("\"out_dir\"", "\"objective\": \"budget_network\", \"network_file\": \"net.json\", \"out_dir\""),
    );
    assert_eq!(drsel(&["run", &spec], &[]).status.code(), Some(2));
}

#[test]
fn shipped_configs_resolve() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut specs = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        if !text.contains("\"policies\"") {
            continue;
        }
        drsel_cli::spec::RunSpec::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        specs += 1;
    }
    assert!(specs >= 5);
}
