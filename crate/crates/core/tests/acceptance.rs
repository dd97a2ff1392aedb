//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::TAU;
use std::process::ExitCode;
use std::time::Instant;

use ioncool::chain::{chain_sweep, ChainKind, ChainOptions, ChainRow};
use ioncool::control::*;
use ioncool::cycles::{shipped, shipped_names};
use ioncool::engine::{CoolingCycle, Simulator};
use ioncool::linalg::phase_aligned_distance;
use ioncool::noise::{Correlation, NoiseSpec, NoiseTarget, RobustnessPoint, RobustnessRun};
use ioncool::pulse::{demi_coupling_propagator, Dynamics};
use ioncool::quantum::thermal_state;
use ioncool::verify::*;
use ioncool::{Result, SystemParams};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        passed,
        detail: detail.into(),
    })
}

fn checks_outcome(checks: &[Check]) -> Result<Outcome> {
    let detail = checks
        .iter()
        .map(|c| format!("{} {:.3e}/{:.0e}", c.name, c.value, c.tolerance))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(checks.iter().all(|c| c.passed), detail)
}

fn params() -> SystemParams {
    SystemParams::default()
}

fn cycle(name: &str) -> Result<CoolingCycle> {
    shipped(name)?.to_cycle(params().nu)
}

fn energies(p: &SystemParams, cycle: &CoolingCycle, n_reps: usize, dynamics: Dynamics) -> Result<Vec<f64>> {
    let sim = Simulator::new(*p)?;
    let state = thermal_state(p, 3.0)?;
    Ok(sim.run_repeated(&state, cycle, n_reps, dynamics)?.1.cycles)
}

fn sideband() -> Result<Outcome> {
    checks_outcome(&[sideband_identity(40)?])
}

fn demi_oracle() -> Result<Outcome> {
    let (distance, phase) = demi_oracle_grid(&params())?;
    checks_outcome(&[distance, phase])
}

fn trotter() -> Result<Outcome> {
    let p = params().with_n_fock(30);
    let (ratios, values) = trotter_ratios(&p)?;
    let in_band = values.iter().all(|r| (0.4..=0.6).contains(r));
    let pi = trotter_pi_transfer(&p, 256)?;
    outcome(
        in_band && pi.passed,
        format!("ratios {values:.4?} (worst {:.3}), pi infidelity {:.2e}", ratios.value, pi.value),
    )
}

fn standing() -> Result<Outcome> {
    checks_outcome(&[standing_wave(&params())?])
}

fn suite() -> Result<Outcome> {
    let checks = run_suite(&params());
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let truncation: Vec<String> = checks
        .iter()
        .filter(|c| c.name.starts_with("truncation"))
        .map(|c| format!("{} {:.1e}", c.name, c.value))
        .collect();
    let has_truncation = truncation.len() == shipped_names().len();
    outcome(
        failed.is_empty() && has_truncation,
        format!("{} checks, failed {failed:?}; {}", checks.len(), truncation.join(", ")),
    )
}

fn chain_exact() -> Result<Outcome> {
    checks_outcome(&chain_exactness(params().nu)?)
}

struct Rosenbrock;

impl Objective for Rosenbrock {
    fn bounds(&self) -> &[(f64, f64)] {
        &[(-2.0, 2.0), (-2.0, 2.0)]
    }
    fn value(&mut self, x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }
}

struct Bowl;

impl Objective for Bowl {
    fn bounds(&self) -> &[(f64, f64)] {
        &[(-5.0, 5.0); 3]
    }
    fn value(&mut self, x: &[f64]) -> f64 {
        (x[0] - 1.0).powi(2) + 4.0 * (x[1] + 0.5).powi(2) + 0.25 * (x[2] - 2.0).powi(2) + 0.5 * (x[0] - 1.0) * (x[1] + 0.5)
    }
}

struct Smooth;

impl Objective for Smooth {
    fn bounds(&self) -> &[(f64, f64)] {
        &[(-3.0, 3.0), (-1.0, 2.0)]
    }
    fn value(&mut self, x: &[f64]) -> f64 {
        x[0].sin() * x[1].exp() + x[0] * x[0] * x[1]
    }
}

fn optimizer() -> Result<Outcome> {
    let quick = AnnealSchedule {
        steps: 2000,
        ..Default::default()
    };
    let a = hybrid_search(&mut Rosenbrock, &[0.0, 0.0], 2, &quick, &BfgsOptions::default(), 4)?;
    let b = hybrid_search(&mut Rosenbrock, &[0.0, 0.0], 2, &quick, &BfgsOptions::default(), 4)?;
    let deterministic = a.x == b.x && a.history == b.history;

    let bowl = bfgs_search(&mut Bowl, &[-4.0, 4.0, -4.0], &BfgsOptions::default())?;
    let bowl_err = bowl
        .x
        .iter()
        .zip([1.0, -0.5, 2.0])
        .map(|(x, m)| (x - m).abs())
        .fold(0.0, f64::max);

    let mut grad_err = 0.0_f64;
    for x in [[0.4, 0.3], [-2.0, 1.5], [1.1, -0.7]] {
        let g = finite_difference_gradient(&mut Smooth, &x, 1e-6)?;
        let exact = [
            x[0].cos() * x[1].exp() + 2.0 * x[0] * x[1],
            x[0].sin() * x[1].exp() + x[0] * x[0],
        ];
        for (a, b) in g.iter().zip(exact) {
            grad_err = grad_err.max((a - b).abs() / b.abs().max(1e-3));
        }
    }

    // Slower cooling and finer proposals than the cycle-search default.
    let schedule = AnnealSchedule {
        t0: 1.0,
        cooling_rate: 0.9998,
        steps: 50_000,
        step_fraction: 0.01,
    };
    let rosen = anneal_search(&mut Rosenbrock, &[-1.5, 1.5], &schedule, 3)?;

    outcome(
        deterministic && bowl_err < 1e-8 && grad_err < 1e-5 && rosen.value < 1e-2,
        format!(
            "deterministic {deterministic}, bowl {bowl_err:.1e}, gradient {grad_err:.1e}, rosenbrock {:.1e}",
            rosen.value
        ),
    )
}

fn table_cooling() -> Result<Outcome> {
    let p = params();
    let mut any = false;
    let mut details = Vec::new();
    for name in shipped_names() {
        let file = shipped(name)?;
        let cycle = file.to_cycle(p.nu)?;
        let full = energies(&p, &cycle, 25, Dynamics::Full)?;
        let impulsive = energies(&p, &cycle, 1, Dynamics::Impulsive)?;
        let validation = Validation {
            n_fock: p.n_fock,
            impulsive: impulsive[1],
            full: full[1],
        };
        let duration = cycle.duration() * p.nu / TAU;
        let ok = cycle.sequences.len() == 10
            && full[1] <= 1.0
            && full[25] <= 0.1
            && duration <= 10.0
            && validation.within_gap_rule();
        any |= ok;
        details.push(format!(
            "{name}: single {:.3}, after 25 {:.3}, {duration:.2} trap periods, gap {:.3} -> {}",
            full[1],
            full[25],
            validation.gap(),
            if ok { "ok" } else { "no" }
        ));
    }
    outcome(any, details.join("; "))
}

fn faster_than_trap() -> Result<Outcome> {
    let p = params();
    let mut any = false;
    let mut details = Vec::new();
    for name in shipped_names() {
        let cycle = cycle(name)?;
        let sim = Simulator::new(p)?;
        let state = thermal_state(&p, 3.0)?;
        let steps = sim.run_repeated(&state, &cycle, 1, Dynamics::Full)?.1.steps;
        let mut elapsed = 0.0;
        let mut reached = None;
        for (seq, e) in cycle.sequences.iter().zip(&steps[1..]) {
            elapsed += seq.duration();
            if *e <= 0.5 * steps[0] {
                reached = Some((elapsed * p.nu / TAU, *e));
                break;
            }
        }
        let ok = matches!(reached, Some((t, _)) if t < 1.0);
        any |= ok;
        details.push(match reached {
            Some((t, e)) => format!("{name}: {e:.3} after {t:.3} trap periods"),
            None => format!("{name}: never halved"),
        });
    }
    outcome(any, details.join("; "))
}

fn robustness() -> Result<Outcome> {
    let cycle = cycle("C")?;
    let run = RobustnessRun {
        cycle: &cycle,
        params: params(),
        initial_nbar: 3.0,
        n_reps: 25,
        dynamics: Dynamics::Full,
    };
    let noise = |sigma, correlation| NoiseSpec {
        target: NoiseTarget::Both,
        sigma,
        correlation,
        n_samples: 500,
        seed: 2024,
    };
    let sigmas = [0.0, 0.01, 0.02, 0.05];
    let sweep = sigmas
        .iter()
        .enumerate()
        .map(|(i, &s)| run.point(&noise(s, Correlation::PerCycle), i))
        .collect::<Result<Vec<RobustnessPoint>>>()?;
    let per_pulse = run.point(&noise(0.02, Correlation::PerPulse), 2)?;
    let failures: usize = sweep.iter().map(|p| p.n_failed).sum::<usize>() + per_pulse.n_failed;
    let escalated: usize = sweep.iter().map(|p| p.n_escalated).sum::<usize>() + per_pulse.n_escalated;

    let excess = sweep[1].mean_final - sweep[0].mean_final;
    let monotone = sweep.windows(2).all(|w| {
        let err = 2.0 * (w[0].sem_final.powi(2) + w[1].sem_final.powi(2)).sqrt();
        w[1].mean_final >= w[0].mean_final - err
    });
    let per_cycle = &sweep[2];
    let ordered = per_pulse.mean_final > per_cycle.mean_final;
    let curve: Vec<String> = sweep
        .iter()
        .map(|p| format!("{}: {:.4}±{:.4}", p.sigma, p.mean_final, p.sem_final))
        .collect();
    outcome(
        excess < 0.1 && monotone && ordered && failures == 0,
        format!(
            "per-cycle [{}], excess at 1% {excess:.4}, per-pulse at 2% {:.4}±{:.4}, failed samples {failures}, rerun at a larger cutoff {escalated}",
            curve.join(", "),
            per_pulse.mean_final,
            per_pulse.sem_final
        ),
    )
}

fn chain_saturation() -> Result<Outcome> {
    let rows = chain_sweep(
        40,
        &[ChainKind::PinnedEquidistant, ChainKind::RegularTrap],
        params().nu,
        &ChainOptions::default(),
    )?;
    let curve = |kind| -> Vec<f64> { rows.iter().filter(|r: &&ChainRow| r.kind == kind).map(|r| r.n_com).collect() };
    let pinned = curve(ChainKind::PinnedEquidistant);
    let regular = curve(ChainKind::RegularTrap);
    let last = pinned[39];
    // Saturated: growth over the last ten ions under 5 % of the value, and
    // shrinking increments from N = 10 on.
    let tail_growth = (last - pinned[29]) / last;
    let increments: Vec<f64> = pinned[9..].windows(2).map(|w| w[1] - w[0]).collect();
    let flattening = increments.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let saturates = (last - 0.2).abs() <= 0.05 && tail_growth < 0.05 && flattening;
    let rising = regular[20..].windows(2).all(|w| w[1] > w[0]);
    let regular_growth = (regular[39] - regular[29]) / regular[39];
    outcome(
        saturates && rising,
        format!(
            "pinned n_com(40) {last:.4}, growth 30->40 {:.1}%; regular n_com(40) {:.3}, growth 30->40 {:.1}%, strictly increasing {rising}",
            100.0 * tail_growth,
            regular[39],
            100.0 * regular_growth
        ),
    )
}

fn rabi_scaling() -> Result<Outcome> {
    let p = params();
    let k = 10.0;
    let faster = SystemParams { omega: p.omega * k, ..p };
    let mut distance = 0.0_f64;
    for i in 1..=5 {
        for j in 1..=5 {
            let t_p = 0.004 * i as f64 / p.nu;
            let t_f = 0.05 * j as f64 / p.nu;
            let base = demi_coupling_propagator(&p, t_p, t_f)?;
            let rescaled = demi_coupling_propagator(&faster, t_p / k.sqrt(), t_f / k.sqrt())?;
            distance = distance.max(phase_aligned_distance(&base, &rescaled));
        }
    }
    let cycle = cycle("C")?;
    let original = energies(&p, &cycle, 25, Dynamics::Full)?;
    let scaled = energies(&faster, &cycle.rescaled_for_rabi(k), 25, Dynamics::Full)?;
    let single = (original[1] - scaled[1]).abs();
    let final_gap = (original[25] - scaled[25]).abs();
    outcome(
        distance < 1e-8 && single < 0.1 && final_gap < 0.1,
        format!(
            "propagator distance {distance:.1e}; C single {:.3} vs {:.3}, after 25 {:.4} vs {:.4}",
            original[1], scaled[1], original[25], scaled[25]
        ),
    )
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    // `cargo test` passes harness flags; a filter argument selects criteria
    // by number.
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 12] = [
        ("sideband identity", sideband),
        ("demi-pulse oracle equivalence", demi_oracle),
        ("trotter convergence", trotter),
        ("standing-wave emulation", standing),
        ("verify suite and truncation convergence", suite),
        ("chain exactness", chain_exact),
        ("optimizer sanity", optimizer),
        ("ten-sequence cooling cycle", table_cooling),
        ("faster-than-trap cooling", faster_than_trap),
        ("noise robustness", robustness),
        ("chain saturation", chain_saturation),
        ("rabi-frequency scaling", rabi_scaling),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "{} criterion {n:>2} ({name}): {detail} [{:.1}s]",
            if passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
