//! Spin and truncated-oscillator operators, joint density matrices and
//! thermal states.
//!
//! The joint space is `spin ⊗ Fock` with the spin index leading: basis
//! vector `(s, n)` sits at `s * n_fock + n`. Spin index 0 is the excited
//! state `|e⟩` (σz = +1) and index 1 is the ground state `|g⟩`.

use std::f64::consts::{PI, SQRT_2};

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    dagger, hermiticity_defect, kron, min_eigenvalue, trace, CMatrix, C64, I, ONE, ZERO,
};

pub const DEFAULT_LEAK_THRESHOLD: f64 = 1e-4;

/// Physical constants of one trap configuration. Frequencies in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub nu: f64,
    pub omega: f64,
    pub eta: f64,
    pub delta: f64,
    pub n_fock: usize,
    pub guard_levels: usize,
    pub leak_threshold: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        SystemParams {
            nu: 2.0 * PI * 1e6,
            omega: 2.0 * PI * 1e8,
            eta: 0.31,
            delta: 0.0,
            n_fock: 60,
            guard_levels: default_guard_levels(60),
            leak_threshold: DEFAULT_LEAK_THRESHOLD,
        }
    }
}

/// Ten percent of the cutoff, rounded up.
pub fn default_guard_levels(n_fock: usize) -> usize {
    n_fock.div_ceil(10)
}

impl SystemParams {
    /// Same physics at a different cutoff; guard band reset to its default.
    pub fn with_n_fock(mut self, n_fock: usize) -> Self {
        self.n_fock = n_fock;
        self.guard_levels = default_guard_levels(n_fock);
        self
    }

    /// Coupling strength ηΩ.
    pub fn coupling(&self) -> f64 {
        self.eta * self.omega
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        positive("nu", self.nu)?;
        positive("omega", self.omega)?;
        positive("eta", self.eta)?;
        positive("leak_threshold", self.leak_threshold)?;
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "delta",
                reason: "must be finite".into(),
            });
        }
        if self.n_fock < 2 {
            return Err(Error::InvalidDimension(format!(
                "n_fock must be at least 2, got {}",
                self.n_fock
            )));
        }
        if self.guard_levels >= self.n_fock {
            return Err(Error::InvalidParameter {
                name: "guard_levels",
                reason: format!(
                    "{} guard levels leave no room below n_fock = {}",
                    self.guard_levels, self.n_fock
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockOperators {
    pub a: CMatrix,
    pub a_dag: CMatrix,
    pub n_op: CMatrix,
    pub x_tilde: CMatrix,
    pub p_tilde: CMatrix,
}

pub fn build_fock_operators(n_fock: usize) -> Result<FockOperators> {
    if n_fock < 2 {
        return Err(Error::InvalidDimension(format!(
            "n_fock must be at least 2, got {n_fock}"
        )));
    }
    let mut a = CMatrix::zeros((n_fock, n_fock));
    for n in 1..n_fock {
        a[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    let a_dag = dagger(&a);
    let n_op = Array2::from_diag(&ndarray::Array1::from_iter(
        (0..n_fock).map(|n| C64::new(n as f64, 0.0)),
    ));
    let x_tilde = (&a + &a_dag) * C64::new(1.0 / SQRT_2, 0.0);
    let p_tilde = (&a_dag - &a) * (I / SQRT_2);
    Ok(FockOperators {
        a,
        a_dag,
        n_op,
        x_tilde,
        p_tilde,
    })
}

pub fn sigma_x() -> CMatrix {
    ndarray::array![[ZERO, ONE], [ONE, ZERO]]
}

pub fn sigma_y() -> CMatrix {
    ndarray::array![[ZERO, -I], [I, ZERO]]
}

pub fn sigma_z() -> CMatrix {
    ndarray::array![[ONE, ZERO], [ZERO, -ONE]]
}

/// σ⁺ = |e⟩⟨g|.
pub fn sigma_plus() -> CMatrix {
    ndarray::array![[ZERO, ONE], [ZERO, ZERO]]
}

pub fn sigma_minus() -> CMatrix {
    ndarray::array![[ZERO, ZERO], [ONE, ZERO]]
}

/// cos θ σx + sin θ σy.
pub fn sigma_theta(theta: f64) -> CMatrix {
    ndarray::array![
        [ZERO, C64::from_polar(1.0, -theta)],
        [C64::from_polar(1.0, theta), ZERO]
    ]
}

pub fn spin_identity() -> CMatrix {
    crate::linalg::identity(2)
}

/// Kronecker product `spin_op ⊗ fock_op` in the spin-major ordering.
pub fn tensor_spin_fock(spin_op: &CMatrix, fock_op: &CMatrix) -> Result<CMatrix> {
    if spin_op.dim() != (2, 2) {
        return Err(Error::InvalidDimension(format!(
            "spin operator must be 2x2, got {:?}",
            spin_op.dim()
        )));
    }
    if fock_op.nrows() != fock_op.ncols() || fock_op.nrows() == 0 {
        return Err(Error::InvalidDimension(format!(
            "Fock operator must be square, got {:?}",
            fock_op.dim()
        )));
    }
    Ok(kron(spin_op, fock_op))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spin {
    Excited,
    Ground,
}

impl Spin {
    pub fn index(self) -> usize {
        match self {
            Spin::Excited => 0,
            Spin::Ground => 1,
        }
    }
}

/// Density matrix on `spin ⊗ Fock(n_fock)` plus the truncation bookkeeping
/// used to detect leakage into the top `guard_levels` Fock levels.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub rho: CMatrix,
    pub n_fock: usize,
    pub guard_levels: usize,
    pub leak_threshold: f64,
}

impl JointState {
    /// Wrap a density matrix after checking the state invariants.
    pub fn new(rho: CMatrix, params: &SystemParams) -> Result<Self> {
        let state = JointState::unchecked(rho, params)?;
        state.validate()?;
        Ok(state)
    }

    pub(crate) fn unchecked(rho: CMatrix, params: &SystemParams) -> Result<Self> {
        if rho.dim() != (2 * params.n_fock, 2 * params.n_fock) {
            return Err(Error::InvalidDimension(format!(
                "density matrix {:?} does not match n_fock = {}",
                rho.dim(),
                params.n_fock
            )));
        }
        Ok(JointState {
            rho,
            n_fock: params.n_fock,
            guard_levels: params.guard_levels,
            leak_threshold: params.leak_threshold,
        })
    }

    /// Pure basis state `|spin, n⟩`.
    pub fn basis(spin: Spin, n: usize, params: &SystemParams) -> Result<Self> {
        if n >= params.n_fock {
            return Err(Error::InvalidDimension(format!(
                "Fock level {n} outside cutoff {}",
                params.n_fock
            )));
        }
        let mut rho = CMatrix::zeros((2 * params.n_fock, 2 * params.n_fock));
        let j = spin.index() * params.n_fock + n;
        rho[[j, j]] = ONE;
        JointState::unchecked(rho, params)
    }

    /// `spin ⊗ ρ_motion` for a motional density matrix.
    pub fn product(spin: Spin, motion: &CMatrix, params: &SystemParams) -> Result<Self> {
        let mut projector = CMatrix::zeros((2, 2));
        projector[[spin.index(), spin.index()]] = ONE;
        let rho = tensor_spin_fock(&projector, motion)?;
        JointState::new(rho, params)
    }

    pub fn dim(&self) -> usize {
        2 * self.n_fock
    }

    /// Hermiticity, unit trace and positivity checks.
    pub fn validate(&self) -> Result<()> {
        let deviation = hermiticity_defect(&self.rho);
        if deviation > 1e-10 {
            return Err(Error::NotHermitian { deviation });
        }
        let tr = trace(&self.rho);
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("trace {tr} differs from 1"),
            });
        }
        let lowest = min_eigenvalue(&self.rho);
        if lowest < -1e-8 {
            return Err(Error::InvalidParameter {
                name: "rho",
                reason: format!("negative eigenvalue {lowest:.3e}"),
            });
        }
        Ok(())
    }

    /// Motional populations `p(n)`, summed over spin.
    pub fn phonon_distribution(&self) -> Vec<f64> {
        let n = self.n_fock;
        (0..n)
            .map(|k| self.rho[[k, k]].re + self.rho[[n + k, n + k]].re)
            .collect()
    }

    /// Population of the top `guard_levels` Fock levels.
    pub fn guard_population(&self) -> f64 {
        let p = self.phonon_distribution();
        p[self.n_fock - self.guard_levels..].iter().sum()
    }

    pub fn check_leak(&self) -> Result<f64> {
        let leak = self.guard_population();
        if leak > self.leak_threshold {
            return Err(Error::Truncation {
                leak,
                threshold: self.leak_threshold,
                pulse_index: None,
            });
        }
        Ok(leak)
    }

    /// Reduced motional density matrix `Tr_spin ρ`.
    pub fn motional_marginal(&self) -> CMatrix {
        let n = self.n_fock;
        &self.rho.slice(s![..n, ..n]) + &self.rho.slice(s![n.., n..])
    }

    pub fn mean_phonons(&self) -> f64 {
        mean_phonons(self)
    }
}

/// Thermal motional state with the spin in `|g⟩`.
pub fn thermal_state(params: &SystemParams, nbar: f64) -> Result<JointState> {
    params.validate()?;
    if !(nbar >= 0.0 && nbar.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "nbar",
            reason: format!("must be a finite non-negative number, got {nbar}"),
        });
    }
    let n = params.n_fock;
    let q = nbar / (1.0 + nbar);
    // Untruncated mass at and above the guard band.
    let tail = q.powi((n - params.guard_levels) as i32);
    if params.guard_levels > 0 && tail > params.leak_threshold {
        return Err(Error::Truncation {
            leak: tail,
            threshold: params.leak_threshold,
            pulse_index: None,
        });
    }
    let weights: Vec<f64> = (0..n).map(|k| q.powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut rho = CMatrix::zeros((2 * n, 2 * n));
    for (k, w) in weights.iter().enumerate() {
        rho[[n + k, n + k]] = C64::new(w / total, 0.0);
    }
    JointState::unchecked(rho, params)
}

/// `Tr(ρ · 1⊗a†a)`.
pub fn mean_phonons(state: &JointState) -> f64 {
    state
        .phonon_distribution()
        .iter()
        .enumerate()
        .map(|(k, p)| k as f64 * p)
        .sum()
}

/// `ρ → U ρ U†`, failing if the result leaks into the guard band.
pub fn apply_unitary(state: &JointState, u: &CMatrix) -> Result<JointState> {
    if u.dim() != state.rho.dim() {
        return Err(Error::InvalidDimension(format!(
            "unitary {:?} does not match state {:?}",
            u.dim(),
            state.rho.dim()
        )));
    }
    let rho = u.dot(&state.rho).dot(&dagger(u));
    let next = JointState {
        rho,
        ..state.clone()
    };
    next.check_leak()?;
    Ok(next)
}
