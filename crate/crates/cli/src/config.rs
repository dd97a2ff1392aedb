//! TOML experiment configuration. Physical quantities carry their unit in
//! the field name; durations are in units of `1/ν`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ioncool::chain::{ChainKind, ChainOptions, LocalFrequency, PinnedSpacing};
use ioncool::control::{AnnealSchedule, BfgsOptions, DurationBounds, ObjectiveMode};
use ioncool::noise::{Correlation, NoiseTarget, DEFAULT_SIGMAS};
use ioncool::quantum::{default_guard_levels, DEFAULT_LEAK_THRESHOLD};
use ioncool::SystemParams;

use crate::CliError;

pub const CONFIG_SCHEMA: &str = "ioncool-config/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Simulate,
    Optimize,
    Robustness,
    Chain,
    Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Optimize => "optimize",
            Experiment::Robustness => "robustness",
            Experiment::Chain => "chain",
            Experiment::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    /// Experiment to run when no subcommand names one.
    pub experiment: Option<Experiment>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub optimize: OptimizeConfig,
    #[serde(default)]
    pub robustness: RobustnessConfig,
    #[serde(default)]
    pub chain: ChainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema: CONFIG_SCHEMA.into(),
            experiment: None,
            seed: 0,
            params: ParamsConfig::default(),
            paths: PathsConfig::default(),
            simulate: SimulateConfig::default(),
            optimize: OptimizeConfig::default(),
            robustness: RobustnessConfig::default(),
            chain: ChainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub nu_over_2pi_hz: f64,
    pub omega_over_2pi_hz: f64,
    pub delta_over_2pi_hz: f64,
    pub eta: f64,
    pub n_fock: usize,
    /// Defaults to ⌈n_fock/10⌉.
    pub guard_levels: Option<usize>,
    pub leak_threshold: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            nu_over_2pi_hz: 1e6,
            omega_over_2pi_hz: 1e8,
            delta_over_2pi_hz: 0.0,
            eta: 0.31,
            n_fock: 60,
            guard_levels: None,
            leak_threshold: DEFAULT_LEAK_THRESHOLD,
        }
    }
}

impl ParamsConfig {
    pub fn to_params(&self) -> Result<SystemParams, CliError> {
        let p = SystemParams {
            nu: 2.0 * PI * self.nu_over_2pi_hz,
            omega: 2.0 * PI * self.omega_over_2pi_hz,
            eta: self.eta,
            delta: 2.0 * PI * self.delta_over_2pi_hz,
            n_fock: self.n_fock,
            guard_levels: self.guard_levels.unwrap_or(default_guard_levels(self.n_fock)),
            leak_threshold: self.leak_threshold,
        };
        p.validate().map_err(|e| CliError::Config(format!("[params] {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Shipped cycle name (`A`, `B`, `C`) or a cycle-file path.
    pub cycle: String,
    pub initial_nbar: f64,
    pub n_reps: usize,
    pub impulsive: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            cycle: "C".into(),
            initial_nbar: 3.0,
            n_reps: 25,
            impulsive: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPoint {
    /// Trotterized sideband seed.
    Trotter,
    /// Midpoint of the bounds.
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub initial_nbar: f64,
    /// Cycles per objective evaluation; 1 is the single-cycle objective.
    pub k_cycles: usize,
    pub rounds: usize,
    pub n_sequences: usize,
    pub pairs_per_sequence: usize,
    pub search_n_fock: usize,
    pub carrier_bounds_over_nu: (f64, f64),
    pub t_p_bounds_over_nu: (f64, f64),
    pub t_f_bounds_over_nu: (f64, f64),
    pub start: StartPoint,
    pub anneal: AnnealSchedule,
    pub bfgs: BfgsOptions,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let b = DurationBounds::default();
        OptimizeConfig {
            initial_nbar: 3.0,
            k_cycles: 1,
            rounds: 3,
            n_sequences: 10,
            pairs_per_sequence: 3,
            search_n_fock: ioncool::control::DEFAULT_SEARCH_N_FOCK,
            carrier_bounds_over_nu: b.carrier,
            t_p_bounds_over_nu: b.t_p,
            t_f_bounds_over_nu: b.t_f,
            start: StartPoint::Trotter,
            anneal: AnnealSchedule::default(),
            bfgs: BfgsOptions::default(),
        }
    }
}

impl OptimizeConfig {
    pub fn objective_mode(&self) -> ObjectiveMode {
        match self.k_cycles {
            1 => ObjectiveMode::SingleCycle,
            k => ObjectiveMode::KCycles(k),
        }
    }

    pub fn bounds(&self) -> DurationBounds {
        DurationBounds {
            carrier: self.carrier_bounds_over_nu,
            t_p: self.t_p_bounds_over_nu,
            t_f: self.t_f_bounds_over_nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustnessConfig {
    pub cycle: String,
    pub initial_nbar: f64,
    pub n_reps: usize,
    pub sigmas: Vec<f64>,
    pub target: NoiseTarget,
    pub correlations: Vec<Correlation>,
    pub n_samples: usize,
    pub impulsive: bool,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            cycle: "C".into(),
            initial_nbar: 3.0,
            n_reps: 25,
            sigmas: DEFAULT_SIGMAS.to_vec(),
            target: NoiseTarget::Both,
            correlations: vec![Correlation::PerCycle, Correlation::PerPulse],
            n_samples: 500,
            impulsive: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpacingConfig {
    /// Mean spacing of the regular crystal with the same N.
    RegularMean,
}

/// Either a fixed spacing in units of `ℓ` or a named rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PinnedSpacingConfig {
    Fixed(f64),
    Rule(SpacingConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub n_max: usize,
    pub kinds: Vec<ChainKind>,
    pub pinned_spacing_over_l: PinnedSpacingConfig,
    pub local_frequency: LocalFrequency,
    pub mass_amu: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_max: 40,
            kinds: vec![ChainKind::RegularTrap, ChainKind::PinnedEquidistant],
            pinned_spacing_over_l: PinnedSpacingConfig::Fixed(1.0),
            local_frequency: LocalFrequency::Curvature,
            mass_amu: 40.0,
        }
    }
}

impl ChainConfig {
    pub fn options(&self) -> ChainOptions {
        ChainOptions {
            pinned_spacing: match self.pinned_spacing_over_l {
                PinnedSpacingConfig::Fixed(d) => PinnedSpacing::Fixed(d),
                PinnedSpacingConfig::Rule(SpacingConfig::RegularMean) => PinnedSpacing::RegularMean,
            },
            local_frequency: self.local_frequency,
            mass_amu: self.mass_amu,
        }
    }
}

fn field_error(field: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {reason}"))
}

fn check_nbar(field: &str, nbar: f64) -> Result<(), CliError> {
    if nbar >= 0.0 && nbar.is_finite() {
        Ok(())
    } else {
        Err(field_error(field, format!("must be finite and non-negative, got {nbar}")))
    }
}

fn check_positive(field: &str, n: usize) -> Result<(), CliError> {
    if n == 0 {
        Err(field_error(field, "must be at least 1"))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if config.schema != CONFIG_SCHEMA {
            return Err(field_error(
                "schema",
                format!("unsupported `{}` (expected `{CONFIG_SCHEMA}`)", config.schema),
            ));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Field-level range checks for the section `experiment` uses.
    pub fn validate(&self, experiment: Experiment) -> Result<(), CliError> {
        self.params.to_params()?;
        match experiment {
            Experiment::Simulate => {
                check_nbar("simulate.initial_nbar", self.simulate.initial_nbar)?;
                check_positive("simulate.n_reps", self.simulate.n_reps)?;
            }
            Experiment::Optimize => {
                let o = &self.optimize;
                check_nbar("optimize.initial_nbar", o.initial_nbar)?;
                check_positive("optimize.k_cycles", o.k_cycles)?;
                check_positive("optimize.rounds", o.rounds)?;
                check_positive("optimize.n_sequences", o.n_sequences)?;
                check_positive("optimize.pairs_per_sequence", o.pairs_per_sequence)?;
                o.anneal.validate().map_err(|e| field_error("optimize.anneal", e))?;
                for (name, (lo, hi)) in [
                    ("optimize.carrier_bounds_over_nu", o.carrier_bounds_over_nu),
                    ("optimize.t_p_bounds_over_nu", o.t_p_bounds_over_nu),
                    ("optimize.t_f_bounds_over_nu", o.t_f_bounds_over_nu),
                ] {
                    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                        return Err(field_error(name, format!("[{lo}, {hi}] is not an interval")));
                    }
                }
                if o.t_p_bounds_over_nu.0 <= 0.0 || o.t_f_bounds_over_nu.0 <= 0.0 {
                    return Err(field_error("optimize.t_p_bounds_over_nu", "demi-pulse bounds must be positive"));
                }
            }
            Experiment::Robustness => {
                let r = &self.robustness;
                check_nbar("robustness.initial_nbar", r.initial_nbar)?;
                check_positive("robustness.n_reps", r.n_reps)?;
                check_positive("robustness.n_samples", r.n_samples)?;
                if r.sigmas.is_empty() {
                    return Err(field_error("robustness.sigmas", "needs at least one value"));
                }
                if let Some(s) = r.sigmas.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
                    return Err(field_error("robustness.sigmas", format!("{s} is not a non-negative number")));
                }
                if r.correlations.is_empty() {
                    return Err(field_error("robustness.correlations", "needs at least one entry"));
                }
            }
            Experiment::Chain => {
                let c = &self.chain;
                if c.n_max < 2 {
                    return Err(field_error("chain.n_max", format!("must be at least 2, got {}", c.n_max)));
                }
                if c.kinds.is_empty() {
                    return Err(field_error("chain.kinds", "needs at least one kind"));
                }
                if let PinnedSpacingConfig::Fixed(d) = c.pinned_spacing_over_l {
                    if !(d > 0.0 && d.is_finite()) {
                        return Err(field_error("chain.pinned_spacing_over_l", format!("must be positive, got {d}")));
                    }
                }
                if !(c.mass_amu > 0.0) {
                    return Err(field_error("chain.mass_amu", "must be positive"));
                }
            }
            Experiment::Verify => {}
        }
        Ok(())
    }
}
