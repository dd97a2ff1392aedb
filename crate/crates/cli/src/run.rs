//! Experiment execution and result files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value as Json};

use ioncool::chain::chain_sweep;
use ioncool::control::{hybrid_optimize, trotter_seed, CycleTemplate, OptimizationProblem};
use ioncool::cycles::{self, CycleFile};
use ioncool::engine::{CoolingCycle, Simulator};
use ioncool::noise::{monte_carlo_robustness, NoiseSpec};
use ioncool::pulse::Dynamics;
use ioncool::quantum::thermal_state;
use ioncool::verify::run_suite;
use ioncool::SystemParams;

use crate::config::{Experiment, ExperimentConfig, StartPoint};
use crate::output::{emit_results, ColumnKind, Row, Schema, Value};
use crate::CliError;

pub const OUT_DIR_ENV: &str = "IONCOOL_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "ioncool-out";
pub const RUN_SCHEMA: &str = "ioncool-run/1";

/// Command-line overrides, applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub n_fock: Option<usize>,
    pub impulsive: bool,
    /// Directory that relative cycle paths are resolved against.
    pub base_dir: Option<PathBuf>,
}

/// `--out`, then the environment, then the config, then the default.
pub fn resolve_out_dir(flag: Option<&Path>, env: Option<OsString>, config: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| env.filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| config.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: Experiment,
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: Json,
}

/// Config with the overrides folded in; this is what metadata echoes.
pub fn effective_config(config: &ExperimentConfig, overrides: &Overrides) -> ExperimentConfig {
    let mut c = config.clone();
    if let Some(seed) = overrides.seed {
        c.seed = seed;
    }
    if let Some(n) = overrides.n_fock {
        c.params.n_fock = n;
        c.params.guard_levels = None;
    }
    if overrides.impulsive {
        c.simulate.impulsive = true;
        c.robustness.impulsive = true;
    }
    c
}

/// A shipped cycle name or a cycle-file path.
pub fn load_cycle(reference: &str, nu: f64, base_dir: Option<&Path>) -> Result<CoolingCycle, CliError> {
    if cycles::shipped_names().iter().any(|n| n.eq_ignore_ascii_case(reference)) {
        return Ok(cycles::shipped(reference)?.to_cycle(nu)?);
    }
    let path = match base_dir {
        Some(dir) if Path::new(reference).is_relative() => dir.join(reference),
        _ => PathBuf::from(reference),
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cycle `{}`: {e}", path.display())))?;
    CycleFile::from_json(&text)
        .and_then(|f| f.to_cycle(nu))
        .map_err(|e| CliError::Config(format!("cycle `{}`: {e}", path.display())))
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn table(&mut self, name: &str, rows: &[Row], schema: &Schema) -> Result<(), CliError> {
        emit_results(rows, schema, &self.dir.join(name))?;
        self.files.push(name.into());
        Ok(())
    }

    fn series(&mut self, name: &str, points: impl IntoIterator<Item = (f64, f64, f64)>) -> Result<(), CliError> {
        let rows: Vec<Row> = points
            .into_iter()
            .map(|(x, y, e)| vec![x.into(), y.into(), e.into()])
            .collect();
        self.table(name, &rows, &Schema::series())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(name.into());
        Ok(())
    }
}

fn dynamics(impulsive: bool) -> Dynamics {
    Dynamics::from_impulsive(impulsive)
}

/// Run one experiment and write its files into the output directory.
pub fn run_experiment(
    experiment: Experiment,
    config: &ExperimentConfig,
    overrides: &Overrides,
) -> Result<RunReport, CliError> {
    let config = effective_config(config, overrides);
    config.validate(experiment)?;
    let params = config.params.to_params()?;
    let base = overrides.base_dir.as_deref();
    let cycle = match experiment {
        Experiment::Simulate => Some(load_cycle(&config.simulate.cycle, params.nu, base)?),
        Experiment::Robustness => Some(load_cycle(&config.robustness.cycle, params.nu, base)?),
        _ => None,
    };
    let out_dir = resolve_out_dir(
        overrides.out.as_deref(),
        std::env::var_os(OUT_DIR_ENV),
        config.paths.out_dir.as_deref(),
    );
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut w = Writer {
        dir: out_dir.clone(),
        files: Vec::new(),
    };

    let outcome = match experiment {
        Experiment::Simulate => simulate(&config, &params, cycle.as_ref().unwrap(), &mut w),
        Experiment::Optimize => optimize(&config, &params, &mut w),
        Experiment::Robustness => robustness(&config, &params, cycle.as_ref().unwrap(), &mut w),
        Experiment::Chain => chain(&config, &params, &mut w),
        Experiment::Verify => verify(&params, &mut w),
    };
    let (summary, diagnostics, failed) = outcome?;

    let metadata = json!({
        "schema": RUN_SCHEMA,
        "experiment": experiment,
        "seed": config.seed,
        "config": config,
        "versions": { "ioncool": env!("CARGO_PKG_VERSION") },
        "tolerances": {
            "leak_threshold": params.leak_threshold,
            "guard_levels": params.guard_levels,
            "truncation_convergence": 1e-3,
        },
        "diagnostics": diagnostics,
        "summary": summary,
        "outputs": w.files,
    });
    w.text("metadata.json", &(serde_json::to_string_pretty(&metadata).expect("json") + "\n"))?;
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(RunReport {
        experiment,
        out_dir,
        files: w.files,
        summary,
    })
}

type Outcome = Result<(Json, Json, usize), CliError>;

/// Per-cycle energy trace schema.
pub fn trace_schema() -> Schema {
    Schema::new(&[("cycle", ColumnKind::Int), ("mean_phonons", ColumnKind::Float)])
}

fn final_energy(params: &SystemParams, cycle: &CoolingCycle, nbar: f64, n_reps: usize, dyn_: Dynamics) -> ioncool::Result<ioncool::engine::EnergyTrace> {
    let sim = Simulator::new(*params)?;
    let state = thermal_state(params, nbar)?;
    Ok(sim.run_repeated(&state, cycle, n_reps, dyn_)?.1)
}

fn simulate(config: &ExperimentConfig, params: &SystemParams, cycle: &CoolingCycle, w: &mut Writer) -> Outcome {
    let s = &config.simulate;
    let d = dynamics(s.impulsive);
    let trace = final_energy(params, cycle, s.initial_nbar, s.n_reps, d)?;
    let rows: Vec<Row> = trace
        .cycles
        .iter()
        .enumerate()
        .map(|(i, &e)| vec![i.into(), e.into()])
        .collect();
    w.table("results.csv", &rows, &trace_schema())?;
    w.series("series_energy_per_cycle.csv", trace.cycles.iter().enumerate().map(|(i, &e)| (i as f64, e, 0.0)))?;
    let per_seq = cycle.sequences.len() as f64;
    w.series(
        "series_energy_per_sequence.csv",
        trace.steps.iter().enumerate().map(|(i, &e)| (i as f64 / per_seq, e, 0.0)),
    )?;
    w.series(
        "series_final_distribution.csv",
        trace.final_distribution.iter().enumerate().map(|(n, &p)| (n as f64, p, 0.0)),
    )?;

    // Same run at a 1.5x cutoff; a large change flags the result.
    let check_n = (3 * params.n_fock).div_ceil(2);
    let check = final_energy(&params.with_n_fock(check_n), cycle, s.initial_nbar, s.n_reps, d)?;
    let delta = (check.final_energy() - trace.final_energy()).abs();
    let summary = json!({
        "cycle": cycle.label,
        "dynamics": d,
        "initial_energy": trace.initial(),
        "final_energy": trace.final_energy(),
        "single_cycle_energy": trace.cycles[1],
        "steady_state_after": trace.steady_state_after,
        "cycle_duration_over_nu": cycle.duration() * params.nu,
        "pulses_per_cycle": cycle.pulse_count(),
    });
    let diagnostics = json!({
        "max_leak": trace.max_leak,
        "truncation_check": {
            "n_fock": check_n,
            "final_energy": check.final_energy(),
            "delta": delta,
            "converged": delta < 1e-3,
        },
    });
    Ok((summary, diagnostics, 0))
}

fn optimize(config: &ExperimentConfig, params: &SystemParams, w: &mut Writer) -> Outcome {
    let o = &config.optimize;
    let template = CycleTemplate {
        n_sequences: o.n_sequences,
        pairs_per_sequence: o.pairs_per_sequence,
    };
    let mut problem = OptimizationProblem::new(*params, o.initial_nbar, o.objective_mode(), config.seed)
        .with_bounds(template, &o.bounds());
    problem.search_n_fock = o.search_n_fock;
    problem.validate().map_err(|e| CliError::Config(format!("[optimize] {e}")))?;
    let start = match o.start {
        StartPoint::Trotter => Some(problem.clip(&trotter_seed(params, &template, 0.5, 6.0))),
        StartPoint::Center => None,
    };
    let result = hybrid_optimize(&problem, o.rounds, &o.anneal, &o.bfgs, start.as_deref())?;
    let validation = result.validation.expect("hybrid_optimize validates");

    let mut provenance = BTreeMap::new();
    provenance.insert("generator".into(), json!("ioncool optimize"));
    provenance.insert("seed".into(), json!(config.seed));
    provenance.insert("initial_nbar".into(), json!(o.initial_nbar));
    provenance.insert("objective_mode".into(), json!(problem.objective_mode));
    provenance.insert("search_objective".into(), json!(result.best_objective));
    provenance.insert("validation".into(), json!(validation));
    let mut cycle = result.best_cycle.clone();
    cycle.label = format!("optimized-seed{}", config.seed);
    w.text("cycle.json", &(CycleFile::from_cycle(&cycle, params.nu, provenance).to_json() + "\n"))?;

    let schema = Schema::new(&[("iteration", ColumnKind::Int), ("objective", ColumnKind::Float)]);
    let rows: Vec<Row> = result
        .history
        .iter()
        .enumerate()
        .map(|(i, &f)| vec![i.into(), f.into()])
        .collect();
    w.table("results.csv", &rows, &schema)?;
    let mut best = f64::INFINITY;
    w.series(
        "series_best_objective.csv",
        result.history.iter().enumerate().map(|(i, &f)| {
            best = best.min(f);
            (i as f64, best, 0.0)
        }),
    )?;
    let summary = json!({
        "best_objective": result.best_objective,
        "impulsive": validation.impulsive,
        "full": validation.full,
        "gap": validation.gap(),
        "within_gap_rule": validation.within_gap_rule(),
        "termination": result.termination_reason,
        "evaluations": result.evaluations,
        "cycle_duration_over_nu": cycle.duration() * params.nu,
    });
    let diagnostics = json!({
        "search_n_fock": result.search_n_fock,
        "validation_n_fock": validation.n_fock,
        "penalty": problem.penalty(),
    });
    Ok((summary, diagnostics, 0))
}

/// Robustness table schema.
pub fn robustness_schema() -> Schema {
    Schema::new(&[
        ("sigma", ColumnKind::Float),
        ("target", ColumnKind::Text),
        ("correlation", ColumnKind::Text),
        ("mean_final", ColumnKind::Float),
        ("std_final", ColumnKind::Float),
        ("sem_final", ColumnKind::Float),
        ("n_ok", ColumnKind::Int),
        ("n_failed", ColumnKind::Int),
        ("n_escalated", ColumnKind::Int),
    ])
}

fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Json::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn robustness(config: &ExperimentConfig, params: &SystemParams, cycle: &CoolingCycle, w: &mut Writer) -> Outcome {
    let r = &config.robustness;
    let d = dynamics(r.impulsive);
    let mut rows = Vec::new();
    let mut failed = 0;
    let mut escalated = 0;
    let mut baseline = None;
    for &correlation in &r.correlations {
        let noise = NoiseSpec {
            target: r.target,
            sigma: 0.0,
            correlation,
            n_samples: r.n_samples,
            seed: config.seed,
        };
        let points = monte_carlo_robustness(cycle, params, r.initial_nbar, r.n_reps, &noise, &r.sigmas, d)?;
        for p in &points {
            failed += p.n_failed;
            escalated += p.n_escalated;
            if p.sigma == 0.0 {
                baseline = Some(p.mean_final);
            }
            rows.push(vec![
                p.sigma.into(),
                label(&p.target).into(),
                label(&p.correlation).into(),
                p.mean_final.into(),
                p.std_final.into(),
                p.sem_final.into(),
                p.n_ok.into(),
                p.n_failed.into(),
                p.n_escalated.into(),
            ]);
        }
        w.series(
            &format!("series_{}.csv", label(&correlation)),
            points.iter().map(|p| (p.sigma, p.mean_final, p.sem_final)),
        )?;
    }
    w.table("results.csv", &rows, &robustness_schema())?;
    let summary = json!({
        "cycle": cycle.label,
        "dynamics": d,
        "noiseless_final": baseline,
        "points": rows.len(),
    });
    let diagnostics = json!({
        "failed_samples": failed,
        "escalated_samples": escalated,
        "max_cutoff_escalations": ioncool::noise::MAX_CUTOFF_ESCALATIONS,
    });
    Ok((summary, diagnostics, 0))
}

/// Chain table schema; `spacing` is NaN for a regular trap.
pub fn chain_schema() -> Schema {
    Schema::new(&[
        ("n_ions", ColumnKind::Int),
        ("kind", ColumnKind::Text),
        ("spacing", ColumnKind::Float),
        ("nu_com", ColumnKind::Float),
        ("n_com", ColumnKind::Float),
    ])
}

fn chain(config: &ExperimentConfig, params: &SystemParams, w: &mut Writer) -> Outcome {
    let c = &config.chain;
    let table = chain_sweep(c.n_max, &c.kinds, params.nu, &c.options())?;
    let rows: Vec<Row> = table
        .iter()
        .map(|r| {
            vec![
                r.n_ions.into(),
                label(&r.kind).into(),
                r.spacing.unwrap_or(f64::NAN).into(),
                r.nu_com.into(),
                r.n_com.into(),
            ]
        })
        .collect();
    w.table("results.csv", &rows, &chain_schema())?;
    let mut last = BTreeMap::new();
    for &kind in &c.kinds {
        let points: Vec<_> = table
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| (r.n_ions as f64, r.n_com, 0.0))
            .collect();
        last.insert(label(&kind), points.last().map(|p| p.1));
        w.series(&format!("series_{}.csv", label(&kind)), points)?;
    }
    let summary = json!({ "n_max": c.n_max, "n_com_at_n_max": last });
    let diagnostics = json!({
        "conventions": {
            "pinned_spacing_over_l": c.pinned_spacing_over_l,
            "local_frequency": c.local_frequency,
            "mass_amu": c.mass_amu,
        },
    });
    Ok((summary, diagnostics, 0))
}

/// Verify table schema.
pub fn verify_schema() -> Schema {
    Schema::new(&[
        ("check", ColumnKind::Text),
        ("value", ColumnKind::Float),
        ("tolerance", ColumnKind::Float),
        ("passed", ColumnKind::Bool),
        ("detail", ColumnKind::Text),
    ])
}

fn verify(params: &SystemParams, w: &mut Writer) -> Outcome {
    let checks = run_suite(params);
    let rows: Vec<Row> = checks
        .iter()
        .map(|c| {
            vec![
                Value::Text(c.name.clone()),
                c.value.into(),
                c.tolerance.into(),
                c.passed.into(),
                Value::Text(c.detail.clone()),
            ]
        })
        .collect();
    w.table("results.csv", &rows, &verify_schema())?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    let summary = json!({ "checks": checks.len(), "failed": failed });
    let failures: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    Ok((summary, json!({ "failed_checks": failures }), failed))
}
