//! Regenerates the shipped cycle files in `cycles/`.
//!
//! `cargo run --release -p ioncool --example ship_cycles [A|B|C ...]`

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ioncool::control::*;
use ioncool::cycles::CycleFile;
use ioncool::engine::Simulator;
use ioncool::pulse::Dynamics;
use ioncool::quantum::thermal_state;
use ioncool::SystemParams;
use serde_json::json;

struct Recipe {
    name: &'static str,
    description: &'static str,
    mode: ObjectiveMode,
    bounds: DurationBounds,
    seed: u64,
    rounds: usize,
}

fn recipes() -> Vec<Recipe> {
    vec![
        Recipe {
            name: "A",
            description: "single-cycle energy from nbar = 3",
            mode: ObjectiveMode::SingleCycle,
            bounds: DurationBounds {
                carrier: (-0.05, 0.05),
                t_p: (5e-5, 0.05),
                t_f: (5e-4, 0.15),
            },
            seed: 11,
            rounds: 3,
        },
        Recipe {
            name: "B",
            description: "energy after three cycles from nbar = 3",
            mode: ObjectiveMode::KCycles(3),
            bounds: DurationBounds {
                carrier: (-0.05, 0.05),
                t_p: (5e-5, 0.05),
                t_f: (5e-4, 0.15),
            },
            seed: 12,
            rounds: 3,
        },
        Recipe {
            name: "C",
            description: "single-cycle energy from nbar = 3, total duration capped at 6/nu",
            mode: ObjectiveMode::SingleCycle,
            bounds: DurationBounds {
                carrier: (-0.02, 0.02),
                t_p: (5e-5, 0.04),
                t_f: (5e-4, 0.1),
            },
            seed: 13,
            rounds: 3,
        },
    ]
}

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).collect();
    let params = SystemParams::default();
    let schedule = AnnealSchedule {
        t0: 0.02,
        cooling_rate: 0.999,
        steps: 1500,
        step_fraction: 0.05,
    };
    let bfgs = BfgsOptions {
        max_iterations: 40,
        ..Default::default()
    };
    for recipe in recipes() {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == recipe.name) {
            continue;
        }
        let started = Instant::now();
        let template = CycleTemplate::default();
        let problem = OptimizationProblem::new(params, 3.0, recipe.mode, recipe.seed).with_bounds(template, &recipe.bounds);
        let start = problem.clip(&trotter_seed(&params, &template, 0.5, 6.0));
        let start_value = objective(&problem, &start).expect("seed evaluates");
        let result = hybrid_optimize(&problem, recipe.rounds, &schedule, &bfgs, Some(&start)).expect("optimization runs");
        let validation = result.validation.expect("hybrid validates");

        let state = thermal_state(&params, 3.0).unwrap();
        let sim = Simulator::new(params).unwrap();
        let (_, trace) = sim.run_repeated(&state, &result.best_cycle, 25, Dynamics::Full).unwrap();

        let mut cycle = result.best_cycle.clone();
        cycle.label = recipe.name.to_string();
        let provenance: BTreeMap<String, serde_json::Value> = [
            ("generator", json!("ioncool example ship_cycles")),
            ("objective", json!(recipe.description)),
            ("objective_mode", json!(recipe.mode)),
            ("initial_nbar", json!(3.0)),
            ("seed", json!(recipe.seed)),
            ("start", json!("trotter_seed(scale 0.5, top level 6)")),
            ("start_objective", json!(start_value)),
            ("rounds", json!(recipe.rounds)),
            ("anneal_schedule", json!(schedule)),
            ("bfgs", json!(bfgs)),
            ("bounds_over_nu", json!(recipe.bounds)),
            ("search_n_fock", json!(result.search_n_fock)),
            ("search_objective", json!(result.best_objective)),
            ("evaluations", json!(result.evaluations)),
            ("validation", json!(validation)),
            ("full_energy_after_25", json!(trace.final_energy())),
            ("duration_over_nu", json!(cycle.duration() * params.nu)),
            ("params", json!(params)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let file = CycleFile::from_cycle(&cycle, params.nu, provenance);
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("cycles/{}.json", recipe.name));
        std::fs::write(&path, file.to_json() + "\n").unwrap();
        println!(
            "{}: start {:.4} search {:.4} impulsive {:.4} full {:.4} after 25 {:.4} duration {:.3}/nu ({:.0?})",
            recipe.name,
            start_value,
            result.best_objective,
            validation.impulsive,
            validation.full,
            trace.final_energy(),
            cycle.duration() * params.nu,
            started.elapsed()
        );
    }
}
