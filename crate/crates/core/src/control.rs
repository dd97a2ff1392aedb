//! Cycle optimization: simulated annealing, projected BFGS with
//! finite-difference gradients, and their alternation.
//!
//! The search runs in normalized coordinates, one unit interval per bound.
//! Cycle objectives are evaluated in the impulsive limit at a reduced Fock
//! cutoff; the winner is then re-run at the full cutoff under both
//! impulsive and full dynamics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::{CompiledCycle, CoolingCycle, CoolingSequence, Simulator};
use crate::error::{Error, Result};
use crate::pulse::{Dynamics, PulseSpec};
use crate::quantum::{thermal_state, SystemParams};
use crate::sector::{SectorOp, SectorState};

/// A bounded scalar function to minimize.
pub trait Objective {
    fn bounds(&self) -> &[(f64, f64)];
    fn value(&mut self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealSchedule {
    pub t0: f64,
    /// Geometric temperature decay per step.
    pub cooling_rate: f64,
    pub steps: usize,
    /// Proposal standard deviation as a fraction of the bound width.
    pub step_fraction: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            t0: 1.0,
            cooling_rate: 0.999,
            steps: 5000,
            step_fraction: 0.05,
        }
    }
}

impl AnnealSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.t0 > 0.0) {
            return bad("t0", "must be positive");
        }
        if !(self.cooling_rate > 0.0 && self.cooling_rate <= 1.0) {
            return bad("cooling_rate", "must lie in (0, 1]");
        }
        if !(self.step_fraction > 0.0) {
            return bad("step_fraction", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop once the projected gradient (normalized coordinates) is smaller.
    pub gradient_tolerance: f64,
    /// Central-difference step relative to the coordinate magnitude.
    pub relative_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iterations: 100,
            gradient_tolerance: 1e-6,
            relative_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StepsExhausted,
    GradientConverged,
    MaxIterations,
    LineSearchFailed,
    RoundsCompleted,
}

/// Outcome of a search on a generic [`Objective`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective of the current iterate after every step or iteration,
    /// starting with the initial point.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub termination: Termination,
}

struct Normalized<'a, O: Objective + ?Sized> {
    inner: &'a mut O,
    lo: Vec<f64>,
    hi: Vec<f64>,
    width: Vec<f64>,
    evaluations: usize,
}

impl<'a, O: Objective + ?Sized> Normalized<'a, O> {
    fn new(inner: &'a mut O) -> Result<Self> {
        let (lo, hi): (Vec<f64>, Vec<f64>) = inner.bounds().iter().copied().unzip();
        let width: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| b - a).collect();
        if let Some(w) = width.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "bounds",
                reason: format!("every bound needs a finite positive width, got {w}"),
            });
        }
        Ok(Normalized {
            inner,
            lo,
            hi,
            width,
            evaluations: 0,
        })
    }

    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn to_x(&self, u: &[f64]) -> Vec<f64> {
        (0..u.len())
            .map(|i| (self.lo[i] + u[i] * self.width[i]).clamp(self.lo[i], self.hi[i]))
            .collect()
    }

    fn to_u(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.lo)
            .zip(&self.width)
            .map(|((x, lo), w)| ((x - lo) / w).clamp(0.0, 1.0))
            .collect()
    }

    fn value(&mut self, u: &[f64]) -> f64 {
        self.evaluations += 1;
        let x = self.to_x(u);
        self.inner.value(&x)
    }

    /// Central differences in `x` with step `rel · max(|x|, 1e-3 width)`,
    /// shrunk at the bounds; returned as a gradient in `u`.
    fn gradient(&mut self, u: &[f64], rel: f64) -> Vec<f64> {
        let x = self.to_x(u);
        let mut g = vec![0.0; u.len()];
        let mut probe = u.to_vec();
        for i in 0..u.len() {
            let h = rel * x[i].abs().max(1e-3 * self.width[i]) / self.width[i];
            let up = (u[i] + h).min(1.0);
            let down = (u[i] - h).max(0.0);
            probe[i] = up;
            let f_up = self.value(&probe);
            probe[i] = down;
            let f_down = self.value(&probe);
            probe[i] = u[i];
            g[i] = (f_up - f_down) / (up - down);
        }
        g
    }
}

fn check_start(start: &[f64], bounds: &[(f64, f64)]) -> Result<()> {
    if start.len() != bounds.len() {
        return Err(Error::InvalidDimension(format!(
            "start has {} coordinates, bounds have {}",
            start.len(),
            bounds.len()
        )));
    }
    for (i, (&x, &(lo, hi))) in start.iter().zip(bounds).enumerate() {
        if !(lo..=hi).contains(&x) {
            return Err(Error::InvalidParameter {
                name: "start",
                reason: format!("coordinate {i} = {x} outside [{lo}, {hi}]"),
            });
        }
    }
    Ok(())
}

/// Metropolis walk with geometric cooling; each step perturbs one random
/// coordinate. Returns the best point ever visited.
pub fn anneal_search<O: Objective + ?Sized>(
    objective: &mut O,
    start: &[f64],
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<SearchOutcome> {
    schedule.validate()?;
    check_start(start, objective.bounds())?;
    let mut norm = Normalized::new(objective)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = Normal::new(0.0, schedule.step_fraction).expect("validated step fraction");

    let mut u = norm.to_u(start);
    let mut f = norm.value(&u);
    let (mut best_u, mut best_f) = (u.clone(), f);
    let mut history = Vec::with_capacity(schedule.steps + 1);
    history.push(f);
    let mut temperature = schedule.t0;
    for _ in 0..schedule.steps {
        let i = rng.random_range(0..norm.dim());
        let mut trial = u.clone();
        trial[i] = reflect(trial[i] + step.sample(&mut rng));
        let f_trial = norm.value(&trial);
        let accept = f_trial <= f || rng.random::<f64>() < ((f - f_trial) / temperature).exp();
        if accept {
            u = trial;
            f = f_trial;
            if f < best_f {
                best_f = f;
                best_u = u.clone();
            }
        }
        history.push(f);
        temperature *= schedule.cooling_rate;
    }
    Ok(SearchOutcome {
        x: norm.to_x(&best_u),
        value: best_f,
        history,
        evaluations: norm.evaluations,
        termination: Termination::StepsExhausted,
    })
}

/// Fold a proposal back into the unit interval.
fn reflect(mut u: f64) -> f64 {
    loop {
        if u < 0.0 {
            u = -u;
        } else if u > 1.0 {
            u = 2.0 - u;
        } else {
            return u;
        }
    }
}

/// Central finite-difference gradient in the objective's own coordinates.
pub fn finite_difference_gradient<O: Objective + ?Sized>(objective: &mut O, x: &[f64], relative_step: f64) -> Result<Vec<f64>> {
    check_start(x, objective.bounds())?;
    let mut norm = Normalized::new(objective)?;
    let u = norm.to_u(x);
    let g = norm.gradient(&u, relative_step);
    Ok(g.iter().zip(&norm.width).map(|(g, w)| g / w).collect())
}

/// Box-constrained BFGS: inverse-Hessian updates, Armijo backtracking on the
/// projected path, and a projected-gradient stopping rule.
pub fn bfgs_search<O: Objective + ?Sized>(objective: &mut O, start: &[f64], options: &BfgsOptions) -> Result<SearchOutcome> {
    check_start(start, objective.bounds())?;
    let mut norm = Normalized::new(objective)?;
    let n = norm.dim();
    let mut u = norm.to_u(start);
    let mut f = norm.value(&u);
    let mut g = norm.gradient(&u, options.relative_step);
    let mut h = identity(n);
    let mut history = vec![f];
    let mut termination = Termination::MaxIterations;

    for _ in 0..options.max_iterations {
        let active: Vec<bool> = (0..n)
            .map(|i| (u[i] <= 0.0 && g[i] > 0.0) || (u[i] >= 1.0 && g[i] < 0.0))
            .collect();
        let pg: Vec<f64> = (0..n).map(|i| if active[i] { 0.0 } else { g[i] }).collect();
        if norm2(&pg) < options.gradient_tolerance {
            termination = Termination::GradientConverged;
            break;
        }
        let mut d = descent(&h, &pg, &active);
        if dot(&d, &pg) >= 0.0 {
            h = identity(n);
            d = pg.iter().map(|x| -x).collect();
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..n).map(|i| (u[i] + alpha * d[i]).clamp(0.0, 1.0)).collect();
            let s: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
            if norm2(&s) == 0.0 {
                break;
            }
            let f_trial = norm.value(&trial);
            if f_trial <= f + 1e-4 * dot(&g, &s) {
                accepted = Some((trial, f_trial, s));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, f_trial, s)) = accepted else {
            termination = Termination::LineSearchFailed;
            break;
        };
        let g_trial = norm.gradient(&trial, options.relative_step);
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm2(&s) * norm2(&y) {
            bfgs_update(&mut h, &s, &y, sy);
        }
        u = trial;
        f = f_trial;
        g = g_trial;
        history.push(f);
    }
    Ok(SearchOutcome {
        x: norm.to_x(&u),
        value: f,
        history,
        evaluations: norm.evaluations,
        termination,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| (i == j) as u8 as f64).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn descent(h: &[Vec<f64>], g: &[f64], active: &[bool]) -> Vec<f64> {
    h.iter()
        .zip(active)
        .map(|(row, &fixed)| if fixed { 0.0 } else { -dot(row, g) })
        .collect()
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ` with `ρ = 1/(sᵀy)`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = h.iter().map(|row| dot(row, y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Alternate annealing and BFGS for `rounds` rounds, each starting from the
/// best point so far. Round `r` anneals with seed `seed + r`.
pub fn hybrid_search<O: Objective + ?Sized>(
    objective: &mut O,
    start: &[f64],
    rounds: usize,
    schedule: &AnnealSchedule,
    bfgs: &BfgsOptions,
    seed: u64,
) -> Result<SearchOutcome> {
    if rounds == 0 {
        return Err(Error::InvalidParameter {
            name: "rounds",
            reason: "must be at least 1".into(),
        });
    }
    let mut x = start.to_vec();
    let mut history = Vec::new();
    let mut evaluations = 0;
    let mut value = f64::INFINITY;
    for round in 0..rounds {
        let annealed = anneal_search(objective, &x, schedule, seed.wrapping_add(round as u64))?;
        let refined = bfgs_search(objective, &annealed.x, bfgs)?;
        history.extend(&annealed.history);
        history.extend(&refined.history);
        evaluations += annealed.evaluations + refined.evaluations;
        x = refined.x;
        value = refined.value;
    }
    Ok(SearchOutcome {
        x,
        value,
        history,
        evaluations,
        termination: Termination::RoundsCompleted,
    })
}

/// Shape of an optimized cycle: every sequence is a run of
/// (X pulse, demi-pulse) pairs, each pair holding three parameters:
/// carrier duration (signed), demi `t_p` and demi `t_f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleTemplate {
    pub n_sequences: usize,
    pub pairs_per_sequence: usize,
}

impl Default for CycleTemplate {
    fn default() -> Self {
        CycleTemplate {
            n_sequences: 10,
            pairs_per_sequence: 3,
        }
    }
}

pub const PARAMS_PER_PAIR: usize = 3;

impl CycleTemplate {
    pub fn n_pairs(&self) -> usize {
        self.n_sequences * self.pairs_per_sequence
    }

    pub fn n_params(&self) -> usize {
        PARAMS_PER_PAIR * self.n_pairs()
    }

    fn pair(x: &[f64]) -> [PulseSpec; 2] {
        [PulseSpec::carrier(0.0, x[0]), PulseSpec::demi(x[1], x[2])]
    }

    /// Cycle for a parameter vector in seconds.
    pub fn build(&self, x: &[f64], label: impl Into<String>) -> Result<CoolingCycle> {
        if x.len() != self.n_params() {
            return Err(Error::InvalidDimension(format!(
                "template needs {} parameters, got {}",
                self.n_params(),
                x.len()
            )));
        }
        let per_seq = PARAMS_PER_PAIR * self.pairs_per_sequence;
        let sequences = x
            .chunks(per_seq)
            .map(|seq| CoolingSequence::new(seq.chunks(PARAMS_PER_PAIR).flat_map(Self::pair).collect()))
            .collect();
        Ok(CoolingCycle::new(label, sequences))
    }

    /// Parameter vector of a cycle with this template's shape.
    pub fn parameters_of(&self, cycle: &CoolingCycle) -> Result<Vec<f64>> {
        let mismatch = || Error::InvalidDimension("cycle does not match the template shape".into());
        if cycle.sequences.len() != self.n_sequences {
            return Err(mismatch());
        }
        let mut x = Vec::with_capacity(self.n_params());
        for seq in &cycle.sequences {
            if seq.pulses.len() != 2 * self.pairs_per_sequence {
                return Err(mismatch());
            }
            for pair in seq.pulses.chunks(2) {
                match (&pair[0], &pair[1]) {
                    (
                        PulseSpec::CarrierCoupling { duration, .. },
                        PulseSpec::DemiPulse { t_p, t_f, .. },
                    ) => x.extend([*duration, *t_p, *t_f]),
                    _ => return Err(mismatch()),
                }
            }
        }
        Ok(x)
    }
}

/// Starting point built from Trotterized red sidebands: sequence `s` is a
/// three-step sideband of angle `scale · π / √n_s`, with `n_s` falling
/// geometrically from `top_level` to 1, and unit demi-pulse kicks.
pub fn trotter_seed(params: &SystemParams, template: &CycleTemplate, scale: f64, top_level: f64) -> Vec<f64> {
    let g = params.coupling();
    let last = (template.n_sequences.max(2) - 1) as f64;
    let steps = template.pairs_per_sequence as f64;
    let mut x = Vec::with_capacity(template.n_params());
    for s in 0..template.n_sequences {
        let level = top_level.powf((last - s as f64) / last);
        let step = scale * std::f64::consts::PI / level.sqrt() / (4.0 * steps);
        for _ in 0..template.pairs_per_sequence {
            // Positive t_p carries a +Pσy kick, so the X pulse is negative.
            x.extend([-step / g, 1.0 / g, step / params.nu]);
        }
    }
    x
}

/// Duration bounds in units of `1/ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationBounds {
    pub carrier: (f64, f64),
    pub t_p: (f64, f64),
    pub t_f: (f64, f64),
}

impl Default for DurationBounds {
    fn default() -> Self {
        DurationBounds {
            carrier: (-0.5, 0.5),
            t_p: (5e-5, 0.05),
            t_f: (5e-4, 0.5),
        }
    }
}

impl DurationBounds {
    /// Per-parameter bounds in seconds.
    pub fn expand(&self, template: &CycleTemplate, nu: f64) -> Vec<(f64, f64)> {
        let s = |(a, b): (f64, f64)| (a / nu, b / nu);
        (0..template.n_pairs())
            .flat_map(|_| [s(self.carrier), s(self.t_p), s(self.t_f)])
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    SingleCycle,
    /// Energy after this many applications.
    KCycles(usize),
}

impl ObjectiveMode {
    pub fn repetitions(&self) -> usize {
        match *self {
            ObjectiveMode::SingleCycle => 1,
            ObjectiveMode::KCycles(k) => k,
        }
    }
}

/// Cutoff used during search unless the initial state needs more.
pub const DEFAULT_SEARCH_N_FOCK: usize = 30;

/// Largest initial guard-band population allowed at the search cutoff, as a
/// fraction of the leak threshold.
pub const SEARCH_GUARD_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    /// Validation parameters; `params.n_fock` is the validation cutoff.
    pub params: SystemParams,
    pub template: CycleTemplate,
    pub initial_nbar: f64,
    /// Per-parameter bounds in seconds.
    pub bounds: Vec<(f64, f64)>,
    pub objective_mode: ObjectiveMode,
    pub seed: u64,
    pub search_n_fock: usize,
}

impl OptimizationProblem {
    pub fn new(params: SystemParams, initial_nbar: f64, objective_mode: ObjectiveMode, seed: u64) -> Self {
        let template = CycleTemplate::default();
        OptimizationProblem {
            params,
            template,
            initial_nbar,
            bounds: DurationBounds::default().expand(&template, params.nu),
            objective_mode,
            seed,
            search_n_fock: DEFAULT_SEARCH_N_FOCK,
        }
    }

    pub fn with_bounds(mut self, template: CycleTemplate, bounds: &DurationBounds) -> Self {
        self.template = template;
        self.bounds = bounds.expand(&template, self.params.nu);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.initial_nbar >= 0.0 && self.initial_nbar.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "initial_nbar",
                reason: format!("must be finite and non-negative, got {}", self.initial_nbar),
            });
        }
        if self.bounds.len() != self.template.n_params() {
            return Err(Error::InvalidDimension(format!(
                "{} bounds for {} parameters",
                self.bounds.len(),
                self.template.n_params()
            )));
        }
        if let Some((lo, hi)) = self.bounds.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && hi > lo)) {
            return Err(Error::InvalidParameter {
                name: "bounds",
                reason: format!("[{lo}, {hi}] is not a finite interval of positive width"),
            });
        }
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            // t_p and t_f may not reach zero.
            if i % PARAMS_PER_PAIR != 0 && *lo <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: "bounds",
                    reason: format!("demi-pulse bound {i} must stay positive, got [{lo}, {hi}]"),
                });
            }
        }
        if self.objective_mode.repetitions() == 0 {
            return Err(Error::InvalidParameter {
                name: "objective_mode",
                reason: "needs at least one cycle".into(),
            });
        }
        Ok(())
    }

    /// Objective value reported for candidates that fail to simulate.
    pub fn penalty(&self) -> f64 {
        10.0 * self.initial_nbar.max(0.1)
    }

    /// Search cutoff actually used: the configured one, raised until the
    /// initial thermal state keeps its guard band below 1 % of the leak
    /// threshold, which leaves room for the tail to move during a cycle.
    pub fn effective_search_n_fock(&self) -> Result<usize> {
        let mut n = self.search_n_fock.max(2);
        loop {
            let p = self.params.with_n_fock(n);
            let guard = match thermal_state(&p, self.initial_nbar) {
                Ok(state) => state.guard_population(),
                Err(e) if e.is_truncation() => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if guard <= SEARCH_GUARD_MARGIN * p.leak_threshold {
                return Ok(n);
            }
            if n >= 4096 {
                return Err(Error::Truncation {
                    leak: guard,
                    threshold: SEARCH_GUARD_MARGIN * p.leak_threshold,
                    pulse_index: None,
                });
            }
            n += 1;
        }
    }

    /// Midpoint of the bounds.
    pub fn center(&self) -> Vec<f64> {
        self.bounds.iter().map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Clip a candidate into the bounds.
    pub fn clip(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.bounds).map(|(x, (a, b))| x.clamp(*a, *b)).collect()
    }
}

/// Impulsive-limit cycle objective with per-pulse caching: changing one
/// parameter recompiles one pulse pair and one sequence product.
///
/// The guard band is checked at sequence ends only; transients inside a
/// sequence are audited when the result is validated.
pub struct CycleObjective {
    template: CycleTemplate,
    bounds: Vec<(f64, f64)>,
    simulator: Simulator,
    initial: SectorState,
    repetitions: usize,
    penalty: f64,
    pairs: Vec<Option<(Vec<f64>, Result<[SectorOp; 2]>)>>,
    compiled: Option<CompiledCycle>,
    pub evaluations: usize,
}

impl CycleObjective {
    pub fn new(problem: &OptimizationProblem) -> Result<Self> {
        problem.validate()?;
        let n = problem.effective_search_n_fock()?;
        let params = problem.params.with_n_fock(n);
        Ok(CycleObjective {
            template: problem.template,
            bounds: problem.bounds.clone(),
            simulator: Simulator::new(params)?,
            initial: SectorState::from_joint(&thermal_state(&params, problem.initial_nbar)?),
            repetitions: problem.objective_mode.repetitions(),
            penalty: problem.penalty(),
            pairs: vec![None; problem.template.n_pairs()],
            compiled: None,
            evaluations: 0,
        })
    }

    pub fn n_fock(&self) -> usize {
        self.simulator.params().n_fock
    }

    fn compile_pair(&self, x: &[f64]) -> Result<[SectorOp; 2]> {
        let [carrier, demi] = CycleTemplate::pair(x);
        carrier.validate()?;
        demi.validate()?;
        let (a, _) = self.simulator.compile_pulse(&carrier, Dynamics::Impulsive)?;
        let (b, _) = self.simulator.compile_pulse(&demi, Dynamics::Impulsive)?;
        Ok([a, b])
    }

    /// Mean phonon number after the configured number of cycles, or an
    /// error if any pulse or application fails.
    pub fn try_value(&mut self, x: &[f64]) -> Result<f64> {
        self.evaluations += 1;
        if x.len() != self.template.n_params() {
            return Err(Error::InvalidDimension("wrong parameter count".into()));
        }
        let per_seq = self.template.pairs_per_sequence;
        let mut dirty = vec![false; self.template.n_sequences];
        for (j, px) in x.chunks(PARAMS_PER_PAIR).enumerate() {
            let stale = match &self.pairs[j] {
                Some((cached, _)) => cached.as_slice() != px,
                None => true,
            };
            if stale {
                let ops = self.compile_pair(px);
                self.pairs[j] = Some((px.to_vec(), ops));
                dirty[j / per_seq] = true;
            }
        }
        let mut sequences = Vec::with_capacity(self.template.n_sequences);
        for s in 0..self.template.n_sequences {
            let mut pulses = Vec::with_capacity(2 * per_seq);
            for j in s * per_seq..(s + 1) * per_seq {
                let (_, ops) = self.pairs[j].as_ref().expect("all pairs compiled above");
                let [a, b] = ops.as_ref().map_err(|e| e.clone().at_pulse(2 * j))?;
                pulses.push(a.clone());
                pulses.push(b.clone());
            }
            sequences.push(pulses);
        }
        match &mut self.compiled {
            Some(compiled) => {
                for (s, pulses) in sequences.into_iter().enumerate() {
                    if dirty[s] {
                        compiled.replace_sequence(s, pulses);
                    }
                }
            }
            None => self.compiled = Some(CompiledCycle::from_pulses(sequences, 0.0)),
        }
        let mut state = self.initial.clone();
        let compiled = self.compiled.as_ref().expect("assembled above");
        let trace = self.simulator.run_compiled_with(&mut state, compiled, self.repetitions, false)?;
        Ok(trace.final_energy())
    }
}

impl Objective for CycleObjective {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn value(&mut self, x: &[f64]) -> f64 {
        self.try_value(x).unwrap_or(self.penalty)
    }
}

/// One-shot impulsive objective for a candidate (penalty on failure).
pub fn objective(problem: &OptimizationProblem, candidate: &[f64]) -> Result<f64> {
    check_start(candidate, &problem.bounds)?;
    Ok(CycleObjective::new(problem)?.value(candidate))
}

/// Final energies of a cycle at the validation cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub n_fock: usize,
    pub impulsive: f64,
    pub full: f64,
}

impl Validation {
    pub fn gap(&self) -> f64 {
        (self.full - self.impulsive).abs()
    }

    /// Full dynamics within 25 % or 0.2 phonons (whichever is larger) of
    /// the impulsive result.
    pub fn within_gap_rule(&self) -> bool {
        self.gap() <= (0.25 * self.impulsive).max(0.2)
    }
}

/// Run a cycle from the problem's thermal state at the validation cutoff
/// under both dynamics.
pub fn validate_cycle(problem: &OptimizationProblem, cycle: &CoolingCycle) -> Result<Validation> {
    let params = problem.params;
    let state = thermal_state(&params, problem.initial_nbar)?;
    let sim = Simulator::new(params)?;
    let reps = problem.objective_mode.repetitions();
    let run = |dynamics| -> Result<f64> { Ok(sim.run_repeated(&state, cycle, reps, dynamics)?.1.final_energy()) };
    Ok(Validation {
        n_fock: params.n_fock,
        impulsive: run(Dynamics::Impulsive)?,
        full: run(Dynamics::Full)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_cycle: CoolingCycle,
    /// Parameters in seconds.
    pub best_parameters: Vec<f64>,
    /// Impulsive objective at the search cutoff.
    pub best_objective: f64,
    pub history: Vec<f64>,
    pub termination_reason: Termination,
    pub evaluations: usize,
    pub search_n_fock: usize,
    /// Set by [`hybrid_optimize`].
    pub validation: Option<Validation>,
}

fn finish(problem: &OptimizationProblem, outcome: SearchOutcome, search_n_fock: usize) -> Result<OptimizationResult> {
    Ok(OptimizationResult {
        best_cycle: problem.template.build(&outcome.x, "optimized")?,
        best_parameters: outcome.x,
        best_objective: outcome.value,
        history: outcome.history,
        termination_reason: outcome.termination,
        evaluations: outcome.evaluations,
        search_n_fock,
        validation: None,
    })
}

/// Anneal from `start` (default: the bound midpoints).
pub fn anneal(problem: &OptimizationProblem, schedule: &AnnealSchedule, start: Option<&[f64]>) -> Result<OptimizationResult> {
    let mut obj = CycleObjective::new(problem)?;
    let start = start.map(<[f64]>::to_vec).unwrap_or_else(|| problem.center());
    let outcome = anneal_search(&mut obj, &start, schedule, problem.seed)?;
    finish(problem, outcome, obj.n_fock())
}

pub fn bfgs_refine(problem: &OptimizationProblem, start: &[f64], options: &BfgsOptions) -> Result<OptimizationResult> {
    let mut obj = CycleObjective::new(problem)?;
    let outcome = bfgs_search(&mut obj, start, options)?;
    finish(problem, outcome, obj.n_fock())
}

/// Alternating anneal/BFGS rounds, then validation at the full cutoff.
pub fn hybrid_optimize(
    problem: &OptimizationProblem,
    rounds: usize,
    schedule: &AnnealSchedule,
    options: &BfgsOptions,
    start: Option<&[f64]>,
) -> Result<OptimizationResult> {
    let mut obj = CycleObjective::new(problem)?;
    let start = start.map(<[f64]>::to_vec).unwrap_or_else(|| problem.center());
    let outcome = hybrid_search(&mut obj, &start, rounds, schedule, options, problem.seed)?;
    let mut result = finish(problem, outcome, obj.n_fock())?;
    result.validation = Some(validate_cycle(problem, &result.best_cycle)?);
    Ok(result)
}
