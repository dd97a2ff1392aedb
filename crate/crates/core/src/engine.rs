//! Pulse sequences, cooling cycles and their repeated application.
//!
//! A cycle is a list of sequences; the spin is reset to `|g⟩` after every
//! sequence. States are propagated in the parity-sector representation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ONE};
use crate::pulse::{Dynamics, PulseCompiler, PulseSpec};
use crate::quantum::{JointState, SystemParams};
use crate::sector::{SectorOp, SectorState};

/// Cycles whose energy changes by less than this over three consecutive
/// applications are in steady state.
pub const STEADY_STATE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingSequence {
    pub pulses: Vec<PulseSpec>,
}

impl CoolingSequence {
    pub fn new(pulses: Vec<PulseSpec>) -> Self {
        CoolingSequence { pulses }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulses.is_empty() {
            return Err(Error::InvalidParameter {
                name: "pulses",
                reason: "a sequence needs at least one pulse".into(),
            });
        }
        self.pulses.iter().try_for_each(PulseSpec::validate)
    }

    pub fn duration(&self) -> f64 {
        self.pulses.iter().map(PulseSpec::duration).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingCycle {
    pub label: String,
    pub sequences: Vec<CoolingSequence>,
}

impl CoolingCycle {
    pub fn new(label: impl Into<String>, sequences: Vec<CoolingSequence>) -> Self {
        CoolingCycle {
            label: label.into(),
            sequences,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(Error::InvalidParameter {
                name: "sequences",
                reason: "a cycle needs at least one sequence".into(),
            });
        }
        self.sequences.iter().try_for_each(CoolingSequence::validate)
    }

    /// Total time: carrier `|duration|`, demi `2|t_p| + t_f`, resets free.
    pub fn duration(&self) -> f64 {
        self.sequences.iter().map(CoolingSequence::duration).sum()
    }

    /// Carrier pulses count once, demi-pulses twice.
    pub fn pulse_count(&self) -> usize {
        self.pulses().map(PulseSpec::pulse_count).sum()
    }

    pub fn pulses(&self) -> impl Iterator<Item = &PulseSpec> {
        self.sequences.iter().flat_map(|s| s.pulses.iter())
    }

    /// The same cycle for a Rabi frequency `k Ω`: carrier durations scale by
    /// `1/k` (same kick), demi `t_p` and `t_f` by `1/√k` (same coupling
    /// `ηΩν t_p t_f`).
    pub fn rescaled_for_rabi(&self, k: f64) -> CoolingCycle {
        let sequences = self
            .sequences
            .iter()
            .map(|s| CoolingSequence {
                pulses: s
                    .pulses
                    .iter()
                    .map(|p| match p {
                        PulseSpec::CarrierCoupling { .. } => p.scale_durations(1.0 / k),
                        PulseSpec::FreeEvolution { .. } | PulseSpec::DemiPulse { .. } => {
                            p.scale_durations(1.0 / k.sqrt())
                        }
                    })
                    .collect(),
            })
            .collect();
        CoolingCycle {
            label: format!("{} (Ω×{k})", self.label),
            sequences,
        }
    }
}

/// Mean phonon numbers recorded while applying cycles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    /// Initial energy, then the energy after every sequence (post reset).
    pub steps: Vec<f64>,
    /// Initial energy, then the energy after every cycle.
    pub cycles: Vec<f64>,
    /// Largest guard-band population seen.
    pub max_leak: f64,
    /// First cycle count after which three consecutive changes stayed below
    /// [`STEADY_STATE_TOLERANCE`].
    pub steady_state_after: Option<usize>,
    /// Phonon distribution of the final state.
    pub final_distribution: Vec<f64>,
}

impl EnergyTrace {
    fn start(state: &SectorState) -> Self {
        let e = state.mean_phonons();
        EnergyTrace {
            steps: vec![e],
            cycles: vec![e],
            max_leak: 0.0,
            steady_state_after: None,
            final_distribution: state.phonon_distribution(),
        }
    }

    pub fn initial(&self) -> f64 {
        self.cycles[0]
    }

    pub fn final_energy(&self) -> f64 {
        *self.cycles.last().unwrap()
    }

    fn close_cycle(&mut self, state: &SectorState) {
        self.cycles.push(state.mean_phonons());
        self.final_distribution = state.phonon_distribution();
        if self.steady_state_after.is_none() && self.cycles.len() >= 4 {
            let tail = &self.cycles[self.cycles.len() - 4..];
            if tail.windows(2).all(|w| (w[1] - w[0]).abs() < STEADY_STATE_TOLERANCE) {
                self.steady_state_after = Some(self.cycles.len() - 1);
            }
        }
    }
}

/// `ρ → Tr_spin(ρ) ⊗ |g⟩⟨g|`.
pub fn reinitialize_spin(state: &JointState) -> JointState {
    let mut g = CMatrix::zeros((2, 2));
    g[[1, 1]] = ONE;
    JointState {
        rho: linalg::kron(&g, &state.motional_marginal()),
        ..state.clone()
    }
}

/// Propagator of one sequence plus what is needed to audit it.
#[derive(Debug, Clone)]
struct CompiledSequence {
    pulses: Vec<SectorOp>,
    total: SectorOp,
}

/// A cycle turned into per-sequence propagators.
#[derive(Debug, Clone)]
pub struct CompiledCycle {
    sequences: Vec<CompiledSequence>,
    /// Largest convergence leak reported by the propagators.
    pub propagator_leak: f64,
}

impl CompiledCycle {
    /// Assemble a compiled cycle from per-sequence pulse propagators.
    pub fn from_pulses(sequences: Vec<Vec<SectorOp>>, propagator_leak: f64) -> Self {
        CompiledCycle {
            sequences: sequences.into_iter().map(CompiledSequence::from_pulses).collect(),
            propagator_leak,
        }
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Swap in new pulse propagators for sequence `index`.
    pub fn replace_sequence(&mut self, index: usize, pulses: Vec<SectorOp>) {
        self.sequences[index] = CompiledSequence::from_pulses(pulses);
    }
}

/// Runs cycles for one parameter set, reusing generator eigendecompositions.
#[derive(Debug, Clone)]
pub struct Simulator {
    params: SystemParams,
    compiler: PulseCompiler,
}

impl Simulator {
    pub fn new(params: SystemParams) -> Result<Self> {
        params.validate()?;
        Ok(Simulator {
            params,
            compiler: PulseCompiler::new(params),
        })
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn compiler(&self) -> &PulseCompiler {
        &self.compiler
    }

    pub fn compile_pulse(&self, pulse: &PulseSpec, dynamics: Dynamics) -> Result<(SectorOp, f64)> {
        let report = self.compiler.propagator(pulse, dynamics)?;
        Ok((report.u, report.leak))
    }

    pub fn compile(&self, cycle: &CoolingCycle, dynamics: Dynamics) -> Result<CompiledCycle> {
        cycle.validate()?;
        let mut index = 0;
        let mut leak = 0.0_f64;
        let mut sequences = Vec::with_capacity(cycle.sequences.len());
        for seq in &cycle.sequences {
            let mut pulses = Vec::with_capacity(seq.pulses.len());
            for pulse in &seq.pulses {
                let (u, l) = self.compile_pulse(pulse, dynamics).map_err(|e| e.at_pulse(index))?;
                leak = leak.max(l);
                pulses.push(u);
                index += 1;
            }
            sequences.push(CompiledSequence::from_pulses(pulses));
        }
        Ok(CompiledCycle {
            sequences,
            propagator_leak: leak,
        })
    }


    fn check(&self, leak: f64, pulse_index: usize) -> Result<()> {
        if leak > self.params.leak_threshold {
            return Err(Error::Truncation {
                leak,
                threshold: self.params.leak_threshold,
                pulse_index: Some(pulse_index),
            });
        }
        Ok(())
    }

    fn guard_of(&self, distribution: &[f64]) -> f64 {
        distribution[distribution.len() - self.params.guard_levels..].iter().sum()
    }

    /// Apply one compiled cycle in place.
    ///
    /// With `audit_pulses` the guard band is checked after every pulse,
    /// otherwise after every sequence.
    pub fn apply_cycle(
        &self,
        state: &mut SectorState,
        compiled: &CompiledCycle,
        trace: &mut EnergyTrace,
        audit_pulses: bool,
    ) -> Result<()> {
        let mut offset = 0;
        for seq in &compiled.sequences {
            if audit_pulses && self.params.guard_levels > 0 {
                let mut partial: Option<SectorOp> = None;
                for (i, u) in seq.pulses.iter().enumerate() {
                    let next = match &partial {
                        None => u.clone(),
                        Some(p) => u.dot(p),
                    };
                    let leak = self.guard_of(&state.distribution_after(&next));
                    trace.max_leak = trace.max_leak.max(leak);
                    self.check(leak, offset + i)?;
                    partial = Some(next);
                }
            }
            state.apply(&seq.total);
            if self.params.guard_levels > 0 {
                let leak = state.guard_population(self.params.guard_levels);
                trace.max_leak = trace.max_leak.max(leak);
                if leak > self.params.leak_threshold {
                    return Err(Error::Truncation {
                        leak,
                        threshold: self.params.leak_threshold,
                        pulse_index: Some(offset + seq.pulses.len() - 1),
                    });
                }
            }
            state.reinitialize();
            trace.steps.push(state.mean_phonons());
            offset += seq.pulses.len();
        }
        trace.close_cycle(state);
        Ok(())
    }

    /// Apply `n_reps` cycles. Every pulse is audited on the first application,
    /// later ones are checked per sequence.
    pub fn run_repeated(
        &self,
        state: &JointState,
        cycle: &CoolingCycle,
        n_reps: usize,
        dynamics: Dynamics,
    ) -> Result<(JointState, EnergyTrace)> {
        if n_reps == 0 {
            return Err(Error::InvalidParameter {
                name: "n_reps",
                reason: "must be at least 1".into(),
            });
        }
        let compiled = self.compile(cycle, dynamics)?;
        let mut sectors = SectorState::from_joint(state);
        let trace = self.run_compiled(&mut sectors, &compiled, n_reps)?;
        Ok((sectors.to_joint(&self.params)?, trace))
    }

    pub fn run_compiled(&self, state: &mut SectorState, compiled: &CompiledCycle, n_reps: usize) -> Result<EnergyTrace> {
        self.run_compiled_with(state, compiled, n_reps, true)
    }

    /// Like [`Simulator::run_compiled`]; `audit_first` selects per-pulse
    /// checks on the first application, otherwise only sequence ends are
    /// checked.
    pub fn run_compiled_with(
        &self,
        state: &mut SectorState,
        compiled: &CompiledCycle,
        n_reps: usize,
        audit_first: bool,
    ) -> Result<EnergyTrace> {
        let mut trace = EnergyTrace::start(state);
        for rep in 0..n_reps {
            self.apply_cycle(state, compiled, &mut trace, audit_first && rep == 0)?;
        }
        Ok(trace)
    }

    /// Pulses of one sequence in order, no reset; each pulse is audited.
    pub fn run_sequence(&self, state: &JointState, seq: &CoolingSequence, dynamics: Dynamics) -> Result<JointState> {
        seq.validate()?;
        let mut sectors = SectorState::from_joint(state);
        for (i, pulse) in seq.pulses.iter().enumerate() {
            let (u, _) = self.compile_pulse(pulse, dynamics).map_err(|e| e.at_pulse(i))?;
            sectors.apply(&u);
            if self.params.guard_levels > 0 {
                self.check(sectors.guard_population(self.params.guard_levels), i)?;
            }
        }
        sectors.to_joint(&self.params)
    }
}

impl CompiledSequence {
    fn from_pulses(pulses: Vec<SectorOp>) -> Self {
        let mut total = pulses[0].clone();
        for u in &pulses[1..] {
            total = u.dot(&total);
        }
        CompiledSequence { pulses, total }
    }
}

fn simulator_for(state: &JointState, params: &SystemParams) -> Result<Simulator> {
    if state.n_fock != params.n_fock {
        return Err(Error::InvalidDimension(format!(
            "state cutoff {} differs from params.n_fock = {}",
            state.n_fock, params.n_fock
        )));
    }
    Simulator::new(*params)
}

pub fn run_sequence(
    state: &JointState,
    seq: &CoolingSequence,
    params: &SystemParams,
    impulsive: bool,
) -> Result<JointState> {
    simulator_for(state, params)?.run_sequence(state, seq, Dynamics::from_impulsive(impulsive))
}

pub fn run_cycle(
    state: &JointState,
    cycle: &CoolingCycle,
    params: &SystemParams,
    impulsive: bool,
) -> Result<(JointState, EnergyTrace)> {
    simulator_for(state, params)?.run_repeated(state, cycle, 1, Dynamics::from_impulsive(impulsive))
}

pub fn run_repeated(
    state: &JointState,
    cycle: &CoolingCycle,
    params: &SystemParams,
    n_reps: usize,
    dynamics: Dynamics,
) -> Result<EnergyTrace> {
    Ok(simulator_for(state, params)?.run_repeated(state, cycle, n_reps, dynamics)?.1)
}

/// Dense reference implementation of one cycle, used to cross-check the
/// sector engine.
pub fn run_cycle_dense(
    state: &JointState,
    cycle: &CoolingCycle,
    params: &SystemParams,
    dynamics: Dynamics,
) -> Result<JointState> {
    let compiler = PulseCompiler::new(*params);
    let mut current = state.clone();
    for seq in &cycle.sequences {
        for pulse in &seq.pulses {
            let u = compiler.propagator(pulse, dynamics)?.matrix();
            current.rho = u.dot(&current.rho).dot(&linalg::dagger(&u));
        }
        current = reinitialize_spin(&current);
    }
    Ok(current)
}

/// Physical pulse list for a first-order Trotterized red sideband of angle
/// `theta`: `n_steps` pairs of an X pulse and a demi-pulse of unit kick.
pub fn trotter_sequence(params: &SystemParams, theta: f64, n_steps: usize) -> CoolingSequence {
    let g = params.coupling();
    let step = theta / (4.0 * n_steps as f64);
    let mut pulses = Vec::with_capacity(2 * n_steps);
    for _ in 0..n_steps {
        pulses.push(PulseSpec::carrier(0.0, step / g));
        pulses.push(PulseSpec::demi(-theta.signum() / g, step.abs() / params.nu));
    }
    CoolingSequence::new(pulses)
}
