//! Propagators of the pulse primitives.
//!
//! `H_free = δσz + ν a†a` and `H_pulse = H_free + ηΩ (a+a†) σθ`. A negative
//! signed duration applies `σθ → -σθ` (θ → θ+π) for `|duration|`, never
//! backwards time.
//!
//! Demi-pulse convention: `U = U_pulse(+t_p) · U_free(t_f) · U_pulse(-t_p)`
//! with σy coupling, so for `t_p > 0` the `-σy` half acts first. In the
//! impulsive limit this equals
//! `exp(-i t_f ν [a†a + λ P σy + λ²])` with `λ = ηΩ t_p` and `P = i(a†-a)`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, dagger, matrix_exp, CMatrix, C64};
use crate::quantum::{
    build_fock_operators, sigma_minus, sigma_plus, sigma_theta, sigma_x, sigma_z, spin_identity,
    tensor_spin_fock, SystemParams,
};
use crate::sector::{conjugate_by_phases, Parity, SectorOp, Spectral, Tridiagonal};

/// Column weight allowed in the top band of an elevated-cutoff factor.
pub const ELEVATED_LEAK_TOLERANCE: f64 = 1e-10;
const ELEVATION_RETRIES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// Free evolution neglected while a pulse is on.
    Impulsive,
    /// `H_free` kept in the generator during pulses.
    Full,
}

impl Dynamics {
    pub fn from_impulsive(impulsive: bool) -> Self {
        if impulsive {
            Dynamics::Impulsive
        } else {
            Dynamics::Full
        }
    }
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

/// One pulse primitive. Durations in seconds.
///
/// The Rabi scales multiply Ω for that pulse (or demi half) and default to 1;
/// `t_p_close` gives the closing half its own length. Both exist so noisy
/// realizations stay representable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseSpec {
    CarrierCoupling {
        theta: f64,
        duration: f64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        rabi_scale: f64,
    },
    FreeEvolution {
        duration: f64,
    },
    DemiPulse {
        t_p: f64,
        t_f: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_p_close: Option<f64>,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        rabi_scale_open: f64,
        #[serde(default = "one", skip_serializing_if = "is_one")]
        rabi_scale_close: f64,
    },
}

impl PulseSpec {
    pub fn carrier(theta: f64, duration: f64) -> Self {
        PulseSpec::CarrierCoupling {
            theta,
            duration,
            rabi_scale: 1.0,
        }
    }

    pub fn free(duration: f64) -> Self {
        PulseSpec::FreeEvolution { duration }
    }

    pub fn demi(t_p: f64, t_f: f64) -> Self {
        PulseSpec::DemiPulse {
            t_p,
            t_f,
            t_p_close: None,
            rabi_scale_open: 1.0,
            rabi_scale_close: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {v}"),
                })
            }
        };
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        match *self {
            PulseSpec::CarrierCoupling {
                theta,
                duration,
                rabi_scale,
            } => {
                if !(0.0..2.0 * PI).contains(&theta) {
                    return Err(Error::InvalidParameter {
                        name: "theta",
                        reason: format!("must lie in [0, 2π), got {theta}"),
                    });
                }
                finite("duration", duration)?;
                if duration == 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "duration",
                        reason: "must be nonzero".into(),
                    });
                }
                positive("rabi_scale", rabi_scale)
            }
            PulseSpec::FreeEvolution { duration } => positive("duration", duration),
            PulseSpec::DemiPulse {
                t_p,
                t_f,
                t_p_close,
                rabi_scale_open,
                rabi_scale_close,
            } => {
                finite("t_p", t_p)?;
                if t_p == 0.0 {
                    return Err(Error::InvalidParameter {
                        name: "t_p",
                        reason: "must be nonzero".into(),
                    });
                }
                positive("t_f", t_f)?;
                if let Some(close) = t_p_close {
                    positive("t_p_close", close)?;
                }
                positive("rabi_scale_open", rabi_scale_open)?;
                positive("rabi_scale_close", rabi_scale_close)
            }
        }
    }

    /// Wall-clock duration: `|duration|` or `2|t_p| + t_f`.
    pub fn duration(&self) -> f64 {
        match *self {
            PulseSpec::CarrierCoupling { duration, .. } => duration.abs(),
            PulseSpec::FreeEvolution { duration } => duration,
            PulseSpec::DemiPulse {
                t_p, t_f, t_p_close, ..
            } => t_p.abs() + t_p_close.unwrap_or(t_p.abs()) + t_f,
        }
    }

    /// Laser pulses contained: carrier 1, demi 2, free evolution 0.
    pub fn pulse_count(&self) -> usize {
        match self {
            PulseSpec::CarrierCoupling { .. } => 1,
            PulseSpec::FreeEvolution { .. } => 0,
            PulseSpec::DemiPulse { .. } => 2,
        }
    }

    /// Multiply every duration by `factor`.
    pub fn scale_durations(&self, factor: f64) -> PulseSpec {
        let mut out = self.clone();
        match &mut out {
            PulseSpec::CarrierCoupling { duration, .. } => *duration *= factor,
            PulseSpec::FreeEvolution { duration } => *duration *= factor,
            PulseSpec::DemiPulse {
                t_p, t_f, t_p_close, ..
            } => {
                *t_p *= factor;
                *t_f *= factor;
                if let Some(c) = t_p_close {
                    *c *= factor;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorMethod {
    /// Single exponential of a piecewise-constant generator.
    Direct,
    AnalyticBch,
    ExactProduct,
    Trotter,
}

#[derive(Debug, Clone)]
pub struct PropagatorReport {
    pub u: SectorOp,
    /// Largest top-band weight seen while building the propagator.
    pub leak: f64,
    pub method: PropagatorMethod,
    /// Internal Fock cutoff used before projecting back to `n_fock`.
    pub cutoff: usize,
}

impl PropagatorReport {
    /// Dense joint-space matrix.
    pub fn matrix(&self) -> CMatrix {
        self.u.to_dense()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HamiltonianKind {
    Free,
    Pulse,
}

/// Dense joint-space Hamiltonian. `Pulse` includes the free part.
pub fn hamiltonian(params: &SystemParams, kind: HamiltonianKind, theta: f64) -> Result<CMatrix> {
    params.validate()?;
    let ops = build_fock_operators(params.n_fock)?;
    let free = tensor_spin_fock(&sigma_z(), &linalg::identity(params.n_fock))?
        * C64::new(params.delta, 0.0)
        + tensor_spin_fock(&spin_identity(), &ops.n_op)? * C64::new(params.nu, 0.0);
    Ok(match kind {
        HamiltonianKind::Free => free,
        HamiltonianKind::Pulse => {
            free + tensor_spin_fock(&sigma_theta(theta), &(&ops.a + &ops.a_dag))?
                * C64::new(params.coupling(), 0.0)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct SpectralKey {
    dim: usize,
    coupling_bits: u64,
    full: bool,
    parity: Option<Parity>,
}

/// Builds sector propagators, caching generator eigendecompositions.
///
/// A pulse generator only depends on the cutoff, the coupling strength and
/// the dynamics; durations enter through the eigenvalue phases, so the cache
/// hits for every pulse of a noiseless cycle.
#[derive(Debug)]
pub struct PulseCompiler {
    params: SystemParams,
    cache: Mutex<HashMap<SpectralKey, Arc<Spectral>>>,
}

const CACHE_LIMIT: usize = 64;

impl Clone for PulseCompiler {
    fn clone(&self) -> Self {
        PulseCompiler::new(self.params)
    }
}

impl PulseCompiler {
    pub fn new(params: SystemParams) -> Self {
        PulseCompiler {
            params,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    fn free_diag(&self, parity: Parity, dim: usize) -> Vec<f64> {
        (0..dim)
            .map(|k| self.params.nu * k as f64 + self.params.delta * parity.sz_of(k))
            .collect()
    }

    fn spectral(&self, dim: usize, coupling: f64, dynamics: Dynamics, parity: Parity) -> Arc<Spectral> {
        let full = dynamics == Dynamics::Full;
        let key = SpectralKey {
            dim,
            coupling_bits: coupling.to_bits(),
            full,
            parity: (full && self.params.delta != 0.0).then_some(parity),
        };
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return hit.clone();
        }
        let diag = if full {
            self.free_diag(parity, dim)
        } else {
            vec![0.0; dim]
        };
        let spectral = Arc::new(Tridiagonal::ladder(diag, coupling).eigen());
        let mut cache = self.cache.lock().unwrap();
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, spectral.clone());
        spectral
    }

    /// Rows `..rows` and columns `..cols` of one sector block of a carrier
    /// pulse computed at cutoff `dim`.
    fn carrier_block(
        &self,
        parity: Parity,
        theta: f64,
        duration: f64,
        rabi_scale: f64,
        dynamics: Dynamics,
        dim: usize,
        rows: usize,
        cols: usize,
    ) -> CMatrix {
        let theta = if duration < 0.0 { theta + PI } else { theta };
        let spectral = self.spectral(dim, self.params.coupling() * rabi_scale, dynamics, parity);
        let mut block = spectral.propagator(duration.abs(), rows, cols);
        let d = parity.sigma_phases(theta, dim);
        conjugate_by_phases(&mut block, &d[..rows], &d[..cols]);
        block
    }

    fn free_phases(&self, parity: Parity, dim: usize, duration: f64) -> Vec<C64> {
        self.free_diag(parity, dim)
            .into_iter()
            .map(|e| C64::from_polar(1.0, -e * duration))
            .collect()
    }

    pub fn free(&self, duration: f64) -> PropagatorReport {
        let n = self.params.n_fock;
        PropagatorReport {
            u: SectorOp::from_diagonals(
                &self.free_phases(Parity::Plus, n, duration),
                &self.free_phases(Parity::Minus, n, duration),
            ),
            leak: 0.0,
            method: PropagatorMethod::Direct,
            cutoff: n,
        }
    }

    pub fn carrier(&self, theta: f64, duration: f64, rabi_scale: f64, dynamics: Dynamics) -> PropagatorReport {
        let n = self.params.n_fock;
        let block = |parity| self.carrier_block(parity, theta, duration, rabi_scale, dynamics, n, n, n);
        let u = SectorOp {
            plus: block(Parity::Plus),
            minus: block(Parity::Minus),
        };
        // Weight pushed into the guard band from the lower half of the space.
        let guard = self.params.guard_levels;
        let leak = Parity::BOTH
            .iter()
            .map(|&p| band_weight_of_columns(u.block(p), guard, n / 2))
            .fold(0.0, f64::max);
        PropagatorReport {
            u,
            leak,
            method: PropagatorMethod::Direct,
            cutoff: n,
        }
    }

    fn initial_elevation(&self, kick: f64) -> usize {
        let n = self.params.n_fock;
        n + self.params.guard_levels + (4.0 * kick.abs() * (n as f64).sqrt()).ceil() as usize
    }

    /// Leading `n_fock` rows of a σy half-pulse at an elevated cutoff, grown
    /// until the rows carry no weight in the top band.
    fn elevated_rows(
        &self,
        parity: Parity,
        duration: f64,
        rabi_scale: f64,
        dynamics: Dynamics,
    ) -> Result<(CMatrix, f64, usize)> {
        let n = self.params.n_fock;
        let band = self.params.guard_levels.max(2);
        let mut dim = self.initial_elevation(self.params.coupling() * rabi_scale * duration);
        for attempt in 0..=ELEVATION_RETRIES {
            let rows = self.carrier_block(parity, FRAC_PI_2, duration, rabi_scale, dynamics, dim, n, dim);
            let leak = band_weight_of_columns(&dagger(&rows), band, n);
            if leak < ELEVATED_LEAK_TOLERANCE {
                return Ok((rows, leak, dim));
            }
            if attempt == ELEVATION_RETRIES {
                return Err(truncation(leak));
            }
            dim = (dim as f64 * 1.5).ceil() as usize;
        }
        unreachable!("elevation loop returns on its last attempt")
    }

    /// `(A H_free A†)` on the leading `n_fock` levels, where `A` is given by
    /// its leading rows at cutoff `dim`.
    fn conjugated_free(&self, parity: Parity, rows: &CMatrix) -> CMatrix {
        let h = self.free_diag(parity, rows.ncols());
        let mut weighted = rows.clone();
        for (mut col, e) in weighted.columns_mut().into_iter().zip(h.iter()) {
            col.mapv_inplace(|z| z * *e);
        }
        let k = weighted.dot(&dagger(rows));
        // Remove rounding asymmetry.
        (&k + &dagger(&k)) * C64::new(0.5, 0.0)
    }

    /// Exact three-factor demi-pulse `A · U_free(t_f) · B`.
    ///
    /// Written as `exp(-i t_f A H_free A†) · (A B)`: the conjugated generator
    /// is formed at an elevated cutoff and truncated to `n_fock` before
    /// exponentiation, which keeps the result exactly unitary. `A B` is the
    /// identity for a noiseless impulsive pulse; otherwise its truncated
    /// block is close to unitary and replaced by its polar factor.
    pub fn demi(
        &self,
        t_p: f64,
        t_f: f64,
        t_p_close: Option<f64>,
        rabi_open: f64,
        rabi_close: f64,
        dynamics: Dynamics,
    ) -> Result<PropagatorReport> {
        if t_p == 0.0 {
            let mut report = self.free(t_f);
            report.method = PropagatorMethod::ExactProduct;
            return Ok(report);
        }
        let n = self.params.n_fock;
        let close = t_p_close.unwrap_or(t_p.abs()) * t_p.signum();
        let open = -t_p;
        let symmetric =
            dynamics == Dynamics::Impulsive && close == -open && rabi_open == rabi_close;
        let mut leak = 0.0_f64;
        let mut cutoff = n;
        let mut blocks = Vec::with_capacity(2);
        for parity in Parity::BOTH {
            let (rows_a, leak_a, dim_a) = self.elevated_rows(parity, close, rabi_close, dynamics)?;
            leak = leak.max(leak_a);
            cutoff = cutoff.max(dim_a);
            let k = self.conjugated_free(parity, &rows_a);
            let mut u = linalg::expm(&(k * C64::new(0.0, -t_f)));
            if !symmetric {
                // Columns of B are the rows of B† = the reversed half-pulse.
                let band = self.params.guard_levels.max(2);
                let mut dim = dim_a.max(self.initial_elevation(self.params.coupling() * rabi_open * open));
                let mut attempt = 0;
                let product = loop {
                    let rows = if dim == dim_a {
                        rows_a.clone()
                    } else {
                        self.carrier_block(parity, FRAC_PI_2, close, rabi_close, dynamics, dim, n, dim)
                    };
                    let cols_b = self.carrier_block(parity, FRAC_PI_2, open, rabi_open, dynamics, dim, dim, n);
                    let leak_b = band_weight_of_columns(&cols_b, band, n)
                        .max(band_weight_of_columns(&dagger(&rows), band, n));
                    if leak_b < ELEVATED_LEAK_TOLERANCE {
                        leak = leak.max(leak_b);
                        break rows.dot(&cols_b);
                    }
                    if attempt == ELEVATION_RETRIES {
                        return Err(truncation(leak_b));
                    }
                    attempt += 1;
                    dim = (dim as f64 * 1.5).ceil() as usize;
                };
                cutoff = cutoff.max(dim);
                u = u.dot(&linalg::polar_unitary(&product));
            }
            blocks.push(u);
        }
        let minus = blocks.pop().unwrap();
        let plus = blocks.pop().unwrap();
        Ok(PropagatorReport {
            u: SectorOp { plus, minus },
            leak,
            method: PropagatorMethod::ExactProduct,
            cutoff,
        })
    }

    /// Propagator of one pulse primitive.
    pub fn propagator(&self, pulse: &PulseSpec, dynamics: Dynamics) -> Result<PropagatorReport> {
        match *pulse {
            PulseSpec::CarrierCoupling {
                theta,
                duration,
                rabi_scale,
            } => Ok(self.carrier(theta, duration, rabi_scale, dynamics)),
            PulseSpec::FreeEvolution { duration } => Ok(self.free(duration)),
            PulseSpec::DemiPulse {
                t_p,
                t_f,
                t_p_close,
                rabi_scale_open,
                rabi_scale_close,
            } => self.demi(t_p, t_f, t_p_close, rabi_scale_open, rabi_scale_close, dynamics),
        }
    }
}

fn truncation(leak: f64) -> Error {
    Error::Truncation {
        leak,
        threshold: ELEVATED_LEAK_TOLERANCE,
        pulse_index: None,
    }
}

/// Largest weight any of the first `cols` columns places in the last `band` rows.
fn band_weight_of_columns(m: &CMatrix, band: usize, cols: usize) -> f64 {
    let rows = m.nrows();
    let band = band.min(rows);
    (0..cols.min(m.ncols()))
        .map(|c| {
            (rows - band..rows)
                .map(|r| m[[r, c]].norm_sqr())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

pub fn carrier_propagator(
    params: &SystemParams,
    theta: f64,
    duration: f64,
    impulsive: bool,
) -> Result<PropagatorReport> {
    params.validate()?;
    finite_nonzero("duration", duration)?;
    let report = PulseCompiler::new(*params).carrier(theta, duration, 1.0, Dynamics::from_impulsive(impulsive));
    if report.leak > params.leak_threshold {
        return Err(Error::Truncation {
            leak: report.leak,
            threshold: params.leak_threshold,
            pulse_index: None,
        });
    }
    Ok(report)
}

fn finite_nonzero(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || v == 0.0 {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and nonzero, got {v}"),
        });
    }
    Ok(())
}

pub fn free_propagator(params: &SystemParams, duration: f64) -> Result<PropagatorReport> {
    params.validate()?;
    Ok(PulseCompiler::new(*params).free(duration))
}

/// Exact demi-pulse `U_pulse(+t_p) U_free(t_f) U_pulse(-t_p)`.
pub fn demi_pulse_exact(params: &SystemParams, t_p: f64, t_f: f64, impulsive: bool) -> Result<PropagatorReport> {
    params.validate()?;
    if !t_p.is_finite() || !t_f.is_finite() || t_f < 0.0 {
        return Err(Error::InvalidParameter {
            name: "t_f",
            reason: format!("need finite t_p and t_f >= 0, got t_p = {t_p}, t_f = {t_f}"),
        });
    }
    PulseCompiler::new(*params).demi(t_p, t_f, None, 1.0, 1.0, Dynamics::from_impulsive(impulsive))
}

/// Global phase `η² ν Ω² t_f t_p²` carried by the impulsive demi-pulse.
pub fn demi_pulse_scalar_phase(params: &SystemParams, t_p: f64, t_f: f64) -> f64 {
    let lambda = params.coupling() * t_p;
    params.nu * t_f * lambda * lambda
}

/// Closed-form impulsive demi-pulse
/// `exp(-i t_f ν [a†a + λ P σy]) · exp(-i φ)` with `λ = ηΩ t_p`.
pub fn demi_pulse_analytic(params: &SystemParams, t_p: f64, t_f: f64) -> Result<PropagatorReport> {
    let mut report = demi_pulse_analytic_phaseless(params, t_p, t_f)?;
    report.u = report
        .u
        .scale(C64::from_polar(1.0, -demi_pulse_scalar_phase(params, t_p, t_f)));
    Ok(report)
}

/// [`demi_pulse_analytic`] without the scalar phase term.
pub fn demi_pulse_analytic_phaseless(params: &SystemParams, t_p: f64, t_f: f64) -> Result<PropagatorReport> {
    params.validate()?;
    if params.delta != 0.0 {
        return Err(Error::Unsupported(
            "the closed-form demi-pulse requires zero detuning".into(),
        ));
    }
    let n = params.n_fock;
    let coefficient = params.nu * t_f * params.coupling() * t_p;
    let mut blocks = Vec::with_capacity(2);
    for parity in Parity::BOTH {
        let diag = (0..n).map(|k| params.nu * t_f * k as f64).collect();
        // Block of P σy: real, alternating sign along the off-diagonal.
        let off = (0..n - 1)
            .map(|k| {
                let sign = match (parity, k % 2) {
                    (Parity::Plus, 0) | (Parity::Minus, 1) => -1.0,
                    _ => 1.0,
                };
                sign * coefficient * ((k + 1) as f64).sqrt()
            })
            .collect();
        blocks.push(Tridiagonal { diag, off }.eigen().propagator(1.0, n, n));
    }
    let minus = blocks.pop().unwrap();
    let plus = blocks.pop().unwrap();
    Ok(PropagatorReport {
        u: SectorOp { plus, minus },
        leak: 0.0,
        method: PropagatorMethod::AnalyticBch,
        cutoff: n,
    })
}

/// `exp(-i t_f [U_p H_free U_p† - H_free])` with `U_p = U_pulse(t_p)`: the
/// demi-pulse coupling with the free rotation stripped out, built by
/// numerical conjugation at an elevated cutoff. Impulsive pulses.
pub fn demi_coupling_propagator(params: &SystemParams, t_p: f64, t_f: f64) -> Result<CMatrix> {
    params.validate()?;
    let n = params.n_fock;
    let compiler = PulseCompiler::new(*params);
    let mut blocks = Vec::with_capacity(2);
    for parity in Parity::BOTH {
        let (rows, _, _) = compiler.elevated_rows(parity, t_p, 1.0, Dynamics::Impulsive)?;
        let mut k = compiler.conjugated_free(parity, &rows);
        let h = compiler.free_diag(parity, n);
        for i in 0..n {
            k[[i, i]] -= C64::new(h[i], 0.0);
        }
        blocks.push(matrix_exp(&k, t_f)?);
    }
    let minus = blocks.pop().unwrap();
    let plus = blocks.pop().unwrap();
    Ok(SectorOp { plus, minus }.to_dense())
}

/// `a σ⁺ + a† σ⁻` on the joint space.
pub fn ideal_red_sideband(n_fock: usize) -> Result<CMatrix> {
    let ops = build_fock_operators(n_fock)?;
    Ok(tensor_spin_fock(&sigma_plus(), &ops.a)? + tensor_spin_fock(&sigma_minus(), &ops.a_dag)?)
}

/// Ideal sideband rotation `exp(-i (θ/2)(a σ⁺ + a† σ⁻))`; θ = π swaps
/// `|g,1⟩` and `|e,0⟩`.
pub fn ideal_sideband_unitary(n_fock: usize, theta_total: f64) -> Result<CMatrix> {
    matrix_exp(&ideal_red_sideband(n_fock)?, theta_total / 2.0)
}

/// First-order Trotter synthesis of [`ideal_sideband_unitary`] from
/// alternating impulsive `X σx` pulses and `P σy` demi-pulses.
///
/// The target generator is `(θ/2)(Xσx - Pσy)/√2`. Each X step is a carrier
/// of kick `θ/(4n)`; each P step is an impulsive exact demi-pulse with unit
/// kick `ηΩ|t_p| = 1` and `ν t_f = |θ|/(4n)`, taken in the interaction
/// picture of `H_free` with its scalar phase removed.
pub fn trotter_red_sideband(params: &SystemParams, theta_total: f64, n_steps: usize) -> Result<PropagatorReport> {
    params.validate()?;
    if n_steps == 0 {
        return Err(Error::InvalidParameter {
            name: "n_steps",
            reason: "must be at least 1".into(),
        });
    }
    let n = params.n_fock;
    if theta_total == 0.0 {
        return Ok(PropagatorReport {
            u: SectorOp::identity(n),
            leak: 0.0,
            method: PropagatorMethod::Trotter,
            cutoff: n,
        });
    }
    let compiler = PulseCompiler::new(*params);
    let step_angle = theta_total / (4.0 * n_steps as f64);
    let x = compiler.carrier(0.0, step_angle / params.coupling(), 1.0, Dynamics::Impulsive);

    let lambda = -theta_total.signum();
    let t_p = lambda / params.coupling();
    let t_f = step_angle.abs() / params.nu;
    let demi = compiler.demi(t_p, t_f, None, 1.0, 1.0, Dynamics::Impulsive)?;
    let unwind = compiler.free(-t_f).u;
    let p = unwind
        .dot(&demi.u)
        .scale(C64::from_polar(1.0, params.nu * t_f * lambda * lambda));

    let step = x.u.dot(&p);
    let mut u = SectorOp::identity(n);
    let mut power = step;
    let mut k = n_steps;
    while k > 0 {
        if k & 1 == 1 {
            u = u.dot(&power);
        }
        k >>= 1;
        if k > 0 {
            power = power.dot(&power);
        }
    }
    Ok(PropagatorReport {
        u,
        leak: x.leak.max(demi.leak),
        method: PropagatorMethod::Trotter,
        cutoff: demi.cutoff,
    })
}

/// Spectral-norm error of the Trotter product against the ideal sideband
/// rotation, on input states with at most `max_level` phonons.
pub fn trotter_error(params: &SystemParams, theta_total: f64, n_steps: usize, max_level: usize) -> Result<f64> {
    let n = params.n_fock;
    let u = trotter_red_sideband(params, theta_total, n_steps)?.matrix();
    let ideal = ideal_sideband_unitary(n, theta_total)?;
    let cols: Vec<usize> = (0..=max_level.min(n - 1))
        .flat_map(|k| [k, n + k])
        .collect();
    let diff = CMatrix::from_shape_fn((2 * n, cols.len()), |(r, c)| u[[r, cols[c]]] - ideal[[r, cols[c]]]);
    Ok(linalg::spectral_norm(&diff))
}

/// Distance between the four-pulse standing-wave product
/// `e^{iΩσx t} e^{iηΩσx x̃ t} e^{-iΩσx t} e^{iηΩσx x̃ t}` and the running-wave
/// operator `e^{2iηΩσx x̃ t}`, elementwise max norm.
pub fn standing_wave_emulation_check(params: &SystemParams, t: f64) -> Result<f64> {
    standing_wave_distance(params, t, false)
}

/// As [`standing_wave_emulation_check`]; with `with_free` the free
/// Hamiltonian also acts during each of the four pulses.
pub fn standing_wave_distance(params: &SystemParams, t: f64, with_free: bool) -> Result<f64> {
    params.validate()?;
    let n = params.n_fock;
    let ops = build_fock_operators(n)?;
    let carrier = tensor_spin_fock(&sigma_x(), &linalg::identity(n))? * C64::new(params.omega, 0.0);
    let kick = tensor_spin_fock(&sigma_x(), &ops.x_tilde)? * C64::new(params.coupling(), 0.0);
    let free = if with_free {
        hamiltonian(params, HamiltonianKind::Free, 0.0)?
    } else {
        CMatrix::zeros((2 * n, 2 * n))
    };
    // e^{iGt} = exp(-i(-G)t); the free part always evolves forward.
    let factor = |g: &CMatrix, sign: f64| matrix_exp(&(g * C64::new(-sign, 0.0) + &free), t);
    let product = factor(&carrier, 1.0)?
        .dot(&factor(&kick, 1.0)?)
        .dot(&factor(&carrier, -1.0)?)
        .dot(&factor(&kick, 1.0)?);
    let target = matrix_exp(&(&kick * C64::new(-2.0, 0.0)), t)?;
    Ok(linalg::max_abs(&(&product - &target)))
}

/// `(X̃σx − P̃σy)/√2` on the joint space.
pub fn quadrature_sideband(n_fock: usize) -> Result<CMatrix> {
    let ops = build_fock_operators(n_fock)?;
    let x = tensor_spin_fock(&sigma_x(), &ops.x_tilde)?;
    let p = tensor_spin_fock(&crate::quantum::sigma_y(), &ops.p_tilde)?;
    Ok((x - p) * C64::new(1.0 / SQRT_2, 0.0))
}

/// Dense helper used by tests: `exp(-i t H_pulse)` for a signed duration.
pub fn dense_carrier(params: &SystemParams, theta: f64, duration: f64, dynamics: Dynamics) -> Result<CMatrix> {
    let theta = if duration < 0.0 { theta + PI } else { theta };
    let h = match dynamics {
        Dynamics::Full => hamiltonian(params, HamiltonianKind::Pulse, theta)?,
        Dynamics::Impulsive => {
            hamiltonian(params, HamiltonianKind::Pulse, theta)? - hamiltonian(params, HamiltonianKind::Free, 0.0)?
        }
    };
    matrix_exp(&h, duration.abs())
}
