use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ioncool::cycles::CycleFile;
use ioncool_cli::run::{chain_schema, trace_schema, verify_schema};
use ioncool_cli::{emit_results, parse_results, render_results, resolve_out_dir, ColumnKind, Row, Schema, Value};

fn ioncool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ioncool"))
        .args(args)
        .env_remove("IONCOOL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, format!("schema = \"ioncool-config/1\"\n{body}")).unwrap();
    path
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path).unwrap()
}

fn mixed_schema() -> Schema {
    Schema::new(&[
        ("i", ColumnKind::Int),
        ("x", ColumnKind::Float),
        ("label", ColumnKind::Text),
        ("ok", ColumnKind::Bool),
    ])
}

#[test]
fn empty_rows_give_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_results(&[], &mixed_schema(), &path).unwrap();
    assert_eq!(read(&path), "i,x,label,ok\n");
    assert!(parse_results(&read(&path), &mixed_schema()).unwrap().is_empty());
}

#[test]
fn rows_round_trip_at_full_precision() {
    let rows: Vec<Row> = vec![
        vec![Value::Int(0), Value::Float(0.1 + 0.2), "a,b".into(), true.into()],
        vec![Value::Int(-7), Value::Float(1.2345678901234567e-300), "\"q\"".into(), false.into()],
        vec![Value::Int(3), Value::Float(-2.5e17), "".into(), true.into()],
    ];
    let text = render_results(&rows, &mixed_schema()).unwrap();
    assert_eq!(parse_results(&text, &mixed_schema()).unwrap(), rows);
    assert_eq!(text, render_results(&rows, &mixed_schema()).unwrap());
    assert!(text.contains("0.30000000000000004"));
}

#[test]
fn mismatched_rows_are_rejected() {
    let bad: Vec<Row> = vec![vec![Value::Float(1.0)]];
    assert!(render_results(&bad, &mixed_schema()).is_err());
    let wrong_kind: Vec<Row> = vec![vec![Value::Float(1.0), Value::Float(1.0), "x".into(), true.into()]];
    assert!(render_results(&wrong_kind, &mixed_schema()).is_err());
    assert!(parse_results("a,b\n1,2\n", &mixed_schema()).is_err());
}

#[test]
fn out_dir_precedence() {
    let flag = Path::new("flag");
    let cfg = Path::new("cfg");
    assert_eq!(resolve_out_dir(Some(flag), Some("env".into()), Some(cfg)), PathBuf::from("flag"));
    assert_eq!(resolve_out_dir(None, Some("env".into()), Some(cfg)), PathBuf::from("env"));
    assert_eq!(resolve_out_dir(None, None, Some(cfg)), PathBuf::from("cfg"));
    assert_eq!(resolve_out_dir(None, None, None), PathBuf::from("ioncool-out"));
}

#[test]
fn chain_sweep_writes_table_series_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chain");
    let res = ioncool(&["chain", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let rows = parse_results(&read(out.join("results.csv")), &chain_schema()).unwrap();
    assert_eq!(rows.len(), 80);
    let series = parse_results(&read(out.join("series_pinned_equidistant.csv")), &Schema::series()).unwrap();
    assert_eq!(series.len(), 40);
    let meta: serde_json::Value = serde_json::from_str(&read(out.join("metadata.json"))).unwrap();
    assert_eq!(meta["schema"], "ioncool-run/1");
    assert_eq!(meta["diagnostics"]["conventions"]["local_frequency"], "curvature");
    let n_com = meta["summary"]["n_com_at_n_max"]["pinned_equidistant"].as_f64().unwrap();
    assert!((n_com - 0.2).abs() < 0.05);
}

#[test]
fn runs_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[chain]\nn_max = 12\n");
    let mut outputs = Vec::new();
    for name in ["one", "two"] {
        let out = dir.path().join(name);
        let res = ioncool(&["chain", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&res), 0);
        let mut files: Vec<(String, String)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                (p.file_name().unwrap().to_string_lossy().into_owned(), read(&p))
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0].len(), 4);
}

#[test]
fn env_var_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[paths]\nout_dir = \"from-config\"\n[chain]\nn_max = 3\n");
    let env_out = dir.path().join("from-env");
    let res = Command::new(env!("CARGO_BIN_EXE_ioncool"))
        .args(["chain", "--config", cfg.to_str().unwrap()])
        .env("IONCOOL_OUT_DIR", &env_out)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&res), 0);
    assert!(env_out.join("results.csv").exists());
    assert!(!dir.path().join("from-config").exists());
}

#[test]
fn simulate_trace_has_one_row_per_cycle_plus_initial() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let res = ioncool(&["simulate", "--out", out.to_str().unwrap(), "--impulsive"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let rows = parse_results(&read(out.join("results.csv")), &trace_schema()).unwrap();
    assert_eq!(rows.len(), 26);
    assert_eq!(rows[25][0], Value::Int(25));
    let meta: serde_json::Value = serde_json::from_str(&read(out.join("metadata.json"))).unwrap();
    assert_eq!(meta["summary"]["dynamics"], "impulsive");
    assert_eq!(meta["config"]["simulate"]["impulsive"], true);
    assert_eq!(meta["diagnostics"]["truncation_check"]["converged"], true);
}

#[test]
fn optimize_then_simulate_the_result() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
seed = 5
[params]
n_fock = 30
[optimize]
initial_nbar = 0.5
rounds = 1
n_sequences = 2
pairs_per_sequence = 2
carrier_bounds_over_nu = [-0.05, 0.05]
t_p_bounds_over_nu = [0.0001, 0.05]
t_f_bounds_over_nu = [0.001, 0.2]
[optimize.anneal]
t0 = 0.02
steps = 30
[optimize.bfgs]
max_iterations = 2
[simulate]
cycle = "opt/cycle.json"
initial_nbar = 0.5
n_reps = 2
"#,
    );
    let opt = dir.path().join("opt");
    let res = ioncool(&["optimize", "--config", cfg.to_str().unwrap(), "--out", opt.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let file = CycleFile::from_json(&read(opt.join("cycle.json"))).unwrap();
    assert_eq!(file.sequences.len(), 2);
    assert_eq!(file.provenance["seed"], 5);
    let meta: serde_json::Value = serde_json::from_str(&read(opt.join("metadata.json"))).unwrap();
    assert!(meta["summary"]["best_objective"].as_f64().unwrap() <= 0.5 + 1e-9);

    let sim = dir.path().join("sim");
    let res = ioncool(&["simulate", "--config", cfg.to_str().unwrap(), "--out", sim.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(parse_results(&read(sim.join("results.csv")), &trace_schema()).unwrap().len(), 3);
}

#[test]
fn robustness_table_covers_every_sigma_and_correlation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
experiment = "robustness"
seed = 3
[params]
n_fock = 40
[robustness]
initial_nbar = 1.0
n_reps = 2
sigmas = [0.0, 0.02]
n_samples = 4
impulsive = true
"#,
    );
    let out = dir.path().join("rob");
    let res = ioncool(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = read(out.join("results.csv"));
    assert!(text.starts_with("sigma,target,correlation,mean_final,std_final,sem_final,n_ok,n_failed,n_escalated\n"));
    assert_eq!(text.lines().count(), 5);
    assert!(out.join("series_per_cycle.csv").exists());
    assert!(out.join("series_per_pulse.csv").exists());
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("verify");
    let res = ioncool(&["verify", "--out", out.to_str().unwrap()]);
    let rows = parse_results(&read(out.join("results.csv")), &verify_schema()).unwrap();
    let failed: Vec<_> = rows.iter().filter(|r| r[3] == Value::Bool(false)).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert_eq!(code(&res), 0);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    for body in [
        "[params]\nbogus = 1\n",
        "[simulate]\nn_reps = 0\n",
        "[params]\neta = -1.0\n",
        "[simulate]\ncycle = \"missing.json\"\n",
        "[chain]\nn_max = 1\n",
    ] {
        let cfg = write_config(dir.path(), body);
        let cmd = if body.contains("chain") { "chain" } else { "simulate" };
        let res = ioncool(&[cmd, "--config", cfg.to_str().unwrap(), "--out", out]);
        assert_eq!(code(&res), 1, "{body}: {}", String::from_utf8_lossy(&res.stderr));
    }
    let wrong_schema = dir.path().join("schema.toml");
    fs::write(&wrong_schema, "schema = \"other/9\"\n").unwrap();
    assert_eq!(code(&ioncool(&["chain", "--config", wrong_schema.to_str().unwrap()])), 1);
    assert_eq!(code(&ioncool(&["run"])), 1);
    assert_eq!(code(&ioncool(&["simulate", "--bogus-flag"])), 1);
}

#[test]
fn truncation_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let res = ioncool(&["simulate", "--n-fock", "8", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("guard-band"));
}

#[test]
fn unwritable_output_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let res = ioncool(&["chain", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&res), 3);
}
