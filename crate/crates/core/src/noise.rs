//! Monte Carlo robustness of cycles under multiplicative Gaussian noise on
//! pulse timings and Rabi frequency.
//!
//! Every sample draws from its own ChaCha8 stream, numbered
//! `(sigma_index << 32) | sample`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{CoolingCycle, CoolingSequence, Simulator};
use crate::error::{Error, Result};
use crate::pulse::{Dynamics, PulseSpec};
use crate::quantum::{thermal_state, SystemParams};

/// Draws with `1 + ε ≤ 0` are repeated at most this many times.
pub const MAX_RESAMPLES: usize = 100;

/// A sample that trips the leak check is rerun at `⌈1.5 n_fock⌉` at most
/// this many times. Noisy pulses scatter a thin tail to high phonon numbers
/// that decays slowly with the cutoff but carries almost no energy.
pub const MAX_CUTOFF_ESCALATIONS: usize = 2;

/// Default sweep of relative standard deviations.
pub const DEFAULT_SIGMAS: [f64; 6] = [0.0, 0.005, 0.01, 0.02, 0.05, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    Timings,
    RabiPower,
    Both,
}

impl NoiseTarget {
    fn timings(self) -> bool {
        matches!(self, NoiseTarget::Timings | NoiseTarget::Both)
    }

    fn power(self) -> bool {
        matches!(self, NoiseTarget::RabiPower | NoiseTarget::Both)
    }
}

/// How often a fresh `ε` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    /// Independent draws for every pulse, including the two halves and the
    /// free flight of a demi-pulse.
    PerPulse,
    /// One draw per cycle realization, shared by all pulses.
    PerCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub target: NoiseTarget,
    pub sigma: f64,
    pub correlation: Correlation,
    pub n_samples: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("must be finite and non-negative, got {}", self.sigma),
            });
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidParameter {
                name: "n_samples",
                reason: "must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        NoiseSpec { sigma, ..self }
    }
}

/// Stream of sample `sample` at sweep position `sigma_index`.
pub fn sample_rng(seed: u64, sigma_index: usize, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((sigma_index as u64) << 32) | sample as u64);
    rng
}

/// `ε ~ N(0, σ²)`, redrawn while `1 + ε ≤ 0`.
pub fn draw_epsilon(rng: &mut ChaCha8Rng, sigma: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::NoiseDraw(e.to_string()))?;
    for _ in 0..=MAX_RESAMPLES {
        let eps = normal.sample(rng);
        if 1.0 + eps > 0.0 {
            return Ok(eps);
        }
    }
    Err(Error::NoiseDraw(format!(
        "no positive factor 1 + ε in {} draws at sigma = {sigma}",
        MAX_RESAMPLES + 1
    )))
}

struct Factors<'a> {
    rng: &'a mut ChaCha8Rng,
    noise: &'a NoiseSpec,
    shared: Option<(f64, f64)>,
}

impl Factors<'_> {
    fn fresh(&mut self, enabled: bool) -> Result<f64> {
        Ok(if enabled {
            1.0 + draw_epsilon(self.rng, self.noise.sigma)?
        } else {
            1.0
        })
    }

    fn time(&mut self) -> Result<f64> {
        match self.shared {
            Some((t, _)) => Ok(t),
            None => self.fresh(self.noise.target.timings()),
        }
    }

    fn power(&mut self) -> Result<f64> {
        match self.shared {
            Some((_, p)) => Ok(p),
            None => self.fresh(self.noise.target.power()),
        }
    }
}

/// One noisy realization of `cycle`: every targeted quantity `q` becomes
/// `(1 + ε) q`.
pub fn perturb_cycle(cycle: &CoolingCycle, noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> Result<CoolingCycle> {
    noise.validate()?;
    if noise.sigma == 0.0 {
        return Ok(cycle.clone());
    }
    let mut factors = Factors {
        rng,
        noise,
        shared: None,
    };
    if noise.correlation == Correlation::PerCycle {
        let t = factors.fresh(noise.target.timings())?;
        let p = factors.fresh(noise.target.power())?;
        factors.shared = Some((t, p));
    }
    let mut sequences = Vec::with_capacity(cycle.sequences.len());
    for seq in &cycle.sequences {
        let mut pulses = Vec::with_capacity(seq.pulses.len());
        for pulse in &seq.pulses {
            pulses.push(perturb_pulse(pulse, &mut factors)?);
        }
        sequences.push(CoolingSequence::new(pulses));
    }
    Ok(CoolingCycle::new(cycle.label.clone(), sequences))
}

fn perturb_pulse(pulse: &PulseSpec, f: &mut Factors) -> Result<PulseSpec> {
    Ok(match *pulse {
        PulseSpec::CarrierCoupling {
            theta,
            duration,
            rabi_scale,
        } => PulseSpec::CarrierCoupling {
            theta,
            duration: duration * f.time()?,
            rabi_scale: rabi_scale * f.power()?,
        },
        PulseSpec::FreeEvolution { duration } => PulseSpec::FreeEvolution {
            duration: duration * f.time()?,
        },
        PulseSpec::DemiPulse {
            t_p,
            t_f,
            t_p_close,
            rabi_scale_open,
            rabi_scale_close,
        } => {
            let open = t_p * f.time()?;
            let close = t_p_close.unwrap_or(t_p.abs()) * f.time()?;
            PulseSpec::DemiPulse {
                t_p: open,
                t_f: t_f * f.time()?,
                t_p_close: Some(close),
                rabi_scale_open: rabi_scale_open * f.power()?,
                rabi_scale_close: rabi_scale_close * f.power()?,
            }
        }
    })
}

/// Summary of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub sigma: f64,
    pub target: NoiseTarget,
    pub correlation: Correlation,
    pub mean_final: f64,
    pub std_final: f64,
    /// Standard error of `mean_final`.
    pub sem_final: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    /// Samples that needed a larger cutoff (included in `n_ok`).
    pub n_escalated: usize,
}

/// Setup shared by all points of a sweep.
#[derive(Debug, Clone)]
pub struct RobustnessRun<'a> {
    pub cycle: &'a CoolingCycle,
    pub params: SystemParams,
    pub initial_nbar: f64,
    pub n_reps: usize,
    pub dynamics: Dynamics,
}

impl RobustnessRun<'_> {
    /// Final energy after `n_reps` noiseless cycles.
    pub fn baseline(&self) -> Result<f64> {
        let sim = Simulator::new(self.params)?;
        let state = thermal_state(&self.params, self.initial_nbar)?;
        Ok(sim.run_repeated(&state, self.cycle, self.n_reps, self.dynamics)?.1.final_energy())
    }

    /// Final energy of one cycle, escalating the cutoff on truncation
    /// failures. Returns the energy and the number of escalations.
    pub fn final_energy(&self, cycle: &CoolingCycle) -> Result<(f64, usize)> {
        let mut params = self.params;
        let mut escalations = 0;
        loop {
            let sim = Simulator::new(params)?;
            let state = thermal_state(&params, self.initial_nbar)?;
            match sim.run_repeated(&state, cycle, self.n_reps, self.dynamics) {
                Ok((_, trace)) => return Ok((trace.final_energy(), escalations)),
                Err(e) if e.is_truncation() && escalations < MAX_CUTOFF_ESCALATIONS => {
                    params = params.with_n_fock((3 * params.n_fock).div_ceil(2));
                    escalations += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Final energies and escalation counts of every sample at one sweep
    /// point; failures are kept as errors.
    pub fn samples(&self, noise: &NoiseSpec, sigma_index: usize) -> Result<Vec<Result<(f64, usize)>>> {
        noise.validate()?;
        Ok((0..noise.n_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(noise.seed, sigma_index, i);
                let cycle = perturb_cycle(self.cycle, noise, &mut rng)?;
                self.final_energy(&cycle)
            })
            .collect())
    }

    pub fn point(&self, noise: &NoiseSpec, sigma_index: usize) -> Result<RobustnessPoint> {
        // Every sigma = 0 realization is the noiseless cycle.
        let finals: Vec<Result<(f64, usize)>> = if noise.sigma == 0.0 {
            noise.validate()?;
            let e = self.final_energy(self.cycle);
            (0..noise.n_samples).map(|_| e.clone()).collect()
        } else {
            self.samples(noise, sigma_index)?
        };
        let n_escalated = finals.iter().filter(|r| matches!(r, Ok((_, k)) if *k > 0)).count();
        let ok: Vec<f64> = finals.iter().filter_map(|r| r.as_ref().ok().map(|(e, _)| *e)).collect();
        let n_ok = ok.len();
        let (mean, std) = mean_std(&ok);
        Ok(RobustnessPoint {
            sigma: noise.sigma,
            target: noise.target,
            correlation: noise.correlation,
            mean_final: mean,
            std_final: std,
            sem_final: if n_ok > 0 { std / (n_ok as f64).sqrt() } else { f64::NAN },
            n_ok,
            n_failed: finals.len() - n_ok,
            n_escalated,
        })
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Robustness curve: one [`RobustnessPoint`] per entry of `sigmas`, all
/// other noise settings taken from `noise`.
pub fn monte_carlo_robustness(
    cycle: &CoolingCycle,
    params: &SystemParams,
    initial_nbar: f64,
    n_reps: usize,
    noise: &NoiseSpec,
    sigmas: &[f64],
    dynamics: Dynamics,
) -> Result<Vec<RobustnessPoint>> {
    let run = RobustnessRun {
        cycle,
        params: *params,
        initial_nbar,
        n_reps,
        dynamics,
    };
    sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| run.point(&noise.with_sigma(sigma), i))
        .collect()
}
