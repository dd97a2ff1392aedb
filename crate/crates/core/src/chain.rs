//! Axial modes of ion chains and the centre-of-mass occupation left by
//! cooling every ion to its local ground state.
//!
//! Positions are in units of `ℓ = (q²/(4πε₀ m ν²))^{1/3}`, frequencies in
//! units of `ν`, quadratures in the oscillator units of `ν`. The potential
//! is `V = Σ (u_i − c_i)²/2 + Σ_{i<j} 1/|u_i − u_j|`, with `c_i = 0` for a
//! common trap and per-ion well centres for a pinned chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RMatrix, C64};

const NEWTON_TOLERANCE: f64 = 1e-12;
const NEWTON_MAX_ITERATIONS: usize = 200;
const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    RegularTrap,
    PinnedEquidistant,
}

/// Site spacing of a pinned chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinnedSpacing {
    /// Fixed spacing in units of `ℓ`.
    Fixed(f64),
    /// Mean spacing of the regular crystal with the same ion number.
    RegularMean,
}

/// Frequency of the well each ion is cooled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalFrequency {
    /// `√(∂²V/∂u_i²)`: the well seen with all other ions frozen.
    Curvature,
    /// The bare trap or pinning frequency `ν`.
    Bare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub pinned_spacing: PinnedSpacing,
    pub local_frequency: LocalFrequency,
    pub mass_amu: f64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            pinned_spacing: PinnedSpacing::Fixed(1.0),
            local_frequency: LocalFrequency::Curvature,
            mass_amu: 40.0,
        }
    }
}

/// `ℓ` in metres for a singly charged ion.
pub fn coulomb_length(mass_amu: f64, nu: f64) -> f64 {
    let q2 = ELEMENTARY_CHARGE * ELEMENTARY_CHARGE;
    (q2 / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY * mass_amu * ATOMIC_MASS * nu * nu)).cbrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    pub n_ions: usize,
    pub kind: ChainKind,
    /// Angular trap or pinning frequency [rad/s].
    pub nu: f64,
    /// `ℓ` [m].
    pub length_scale: f64,
    /// Site spacing of a pinned chain [ℓ].
    pub spacing: Option<f64>,
    pub options: ChainOptions,
    /// Equilibrium positions [ℓ], ascending.
    pub positions: Vec<f64>,
    /// Mode frequencies [ν], ascending.
    pub frequencies: Vec<f64>,
    /// Orthonormal mode vectors as columns.
    pub modes: RMatrix,
    /// Column of the centre-of-mass mode.
    pub com_index: usize,
}

impl ChainModel {
    pub fn new(n_ions: usize, kind: ChainKind, nu: f64, options: ChainOptions) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: format!("must be positive, got {nu}"),
            });
        }
        let (positions, spacing) = equilibrium_positions_with(n_ions, kind, &options)?;
        let (frequencies, modes) = normal_modes(&positions)?;
        let com_index = com_mode_index(&modes);
        Ok(ChainModel {
            n_ions,
            kind,
            nu,
            length_scale: coulomb_length(options.mass_amu, nu),
            spacing,
            options,
            positions,
            frequencies,
            modes,
            com_index,
        })
    }

    pub fn com_frequency(&self) -> f64 {
        self.frequencies[self.com_index]
    }

    /// `∂²V/∂u_i²` for every ion.
    pub fn local_frequencies(&self) -> Vec<f64> {
        let h = hessian(&self.positions);
        (0..self.n_ions)
            .map(|i| match self.options.local_frequency {
                LocalFrequency::Curvature => h[[i, i]].sqrt(),
                LocalFrequency::Bare => 1.0,
            })
            .collect()
    }

    /// Largest net force on an ion at the stored positions.
    pub fn force_residual(&self) -> f64 {
        match self.kind {
            // Pinning wells are centred to cancel the Coulomb force.
            ChainKind::PinnedEquidistant => 0.0,
            ChainKind::RegularTrap => max_abs(&regular_gradient(&self.positions)),
        }
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `∂V/∂u_i` in a common harmonic trap.
fn regular_gradient(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            let coulomb: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = u[i] - u[j];
                    -d.signum() / (d * d)
                })
                .sum();
            u[i] + coulomb
        })
        .collect()
}

fn regular_energy(u: &[f64]) -> f64 {
    let mut e: f64 = u.iter().map(|x| 0.5 * x * x).sum();
    for i in 0..u.len() {
        for j in i + 1..u.len() {
            e += 1.0 / (u[j] - u[i]).abs();
        }
    }
    e
}

/// Hessian of the potential; identical for both chain kinds.
fn hessian(u: &[f64]) -> RMatrix {
    let n = u.len();
    let mut h = RMatrix::eye(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let k = 2.0 / (u[i] - u[j]).abs().powi(3);
                h[[i, j]] -= k;
                h[[i, i]] += k;
            }
        }
    }
    h
}

fn is_ordered(u: &[f64]) -> bool {
    u.windows(2).all(|w| w[1] > w[0])
}

/// Force balance of `n` ions in a common harmonic trap by damped Newton
/// steps; the potential is strictly convex on ordered configurations.
fn regular_equilibrium(n: usize) -> Result<Vec<f64>> {
    if n == 1 {
        return Ok(vec![0.0]);
    }
    let spacing = 2.0 * (n as f64).powf(-0.56);
    let mut u: Vec<f64> = (0..n).map(|i| spacing * (i as f64 - 0.5 * (n - 1) as f64)).collect();
    let mut residual = max_abs(&regular_gradient(&u));
    for _ in 0..NEWTON_MAX_ITERATIONS {
        if residual < NEWTON_TOLERANCE {
            // Enforce the mirror symmetry exactly.
            let sym: Vec<f64> = (0..n).map(|i| 0.5 * (u[i] - u[n - 1 - i])).collect();
            return Ok(sym);
        }
        let g = regular_gradient(&u);
        let step = newton_step(&hessian(&u), &g);
        let e0 = regular_energy(&u);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(x, s)| x - alpha * s).collect();
            if is_ordered(&trial) && regular_energy(&trial) <= e0 + 1e-14 * e0.abs() {
                u = trial;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-12 {
                return Err(Error::NoConvergence(format!(
                    "{n}-ion equilibrium line search stalled at residual {residual:.3e}"
                )));
            }
        }
        residual = max_abs(&regular_gradient(&u));
    }
    Err(Error::NoConvergence(format!(
        "{n}-ion equilibrium: residual {residual:.3e} after {NEWTON_MAX_ITERATIONS} Newton steps"
    )))
}

fn newton_step(h: &RMatrix, g: &[f64]) -> Vec<f64> {
    let a = nalgebra::DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| h[[i, j]]);
    let b = nalgebra::DVector::from_column_slice(g);
    match a.clone().cholesky() {
        Some(c) => c.solve(&b).iter().copied().collect(),
        None => g.to_vec(),
    }
}

/// Equilibrium positions and, for a pinned chain, the site spacing.
pub fn equilibrium_positions(n_ions: usize, kind: ChainKind) -> Result<Vec<f64>> {
    Ok(equilibrium_positions_with(n_ions, kind, &ChainOptions::default())?.0)
}

pub fn equilibrium_positions_with(n_ions: usize, kind: ChainKind, options: &ChainOptions) -> Result<(Vec<f64>, Option<f64>)> {
    if n_ions == 0 {
        return Err(Error::InvalidDimension("a chain needs at least one ion".into()));
    }
    match kind {
        ChainKind::RegularTrap => Ok((regular_equilibrium(n_ions)?, None)),
        ChainKind::PinnedEquidistant => {
            let spacing = match options.pinned_spacing {
                PinnedSpacing::Fixed(d) => d,
                PinnedSpacing::RegularMean if n_ions == 1 => 1.0,
                PinnedSpacing::RegularMean => {
                    let u = regular_equilibrium(n_ions)?;
                    (u[n_ions - 1] - u[0]) / (n_ions - 1) as f64
                }
            };
            if !(spacing > 0.0 && spacing.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "pinned_spacing",
                    reason: format!("must be positive, got {spacing}"),
                });
            }
            let half = 0.5 * (n_ions - 1) as f64;
            Ok(((0..n_ions).map(|i| spacing * (i as f64 - half)).collect(), Some(spacing)))
        }
    }
}

/// Mode frequencies (ascending, units of `ν`) and orthonormal mode vectors.
pub fn normal_modes(positions: &[f64]) -> Result<(Vec<f64>, RMatrix)> {
    let (values, vectors) = linalg::symmetric_eigen(&hessian(positions));
    if let Some(&bad) = values.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Unstable(format!(
            "Hessian eigenvalue {bad:.3e} is not positive"
        )));
    }
    Ok((values.iter().map(|v| v.sqrt()).collect(), vectors))
}

fn com_mode_index(modes: &RMatrix) -> usize {
    let n = modes.nrows();
    let overlap = |k: usize| modes.column(k).sum().abs() / (n as f64).sqrt();
    (0..modes.ncols())
        .max_by(|&a, &b| overlap(a).total_cmp(&overlap(b)))
        .expect("at least one mode")
}

/// Gaussian state of `N` oscillators; quadratures ordered `(x_1..x_N, p_1..p_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMotionalState {
    pub covariance: RMatrix,
    pub first_moments: Vec<f64>,
}

impl GaussianMotionalState {
    pub fn n_modes(&self) -> usize {
        self.first_moments.len() / 2
    }

    /// Symplectic eigenvalues, ascending. All are ≥ 1/2 for a physical state.
    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        let n = self.n_modes();
        let (values, vectors) = linalg::symmetric_eigen(&self.covariance);
        let mut root = RMatrix::zeros((2 * n, 2 * n));
        for (k, v) in values.iter().enumerate() {
            let s = v.max(0.0).sqrt();
            for i in 0..2 * n {
                for j in 0..2 * n {
                    root[[i, j]] += vectors[[i, k]] * s * vectors[[j, k]];
                }
            }
        }
        // σ^{1/2} (iΩ) σ^{1/2} is Hermitian with eigenvalues ±ν_k.
        let mut omega = CMatrix::zeros((2 * n, 2 * n));
        for i in 0..n {
            omega[[i, n + i]] = C64::new(0.0, 1.0);
            omega[[n + i, i]] = C64::new(0.0, -1.0);
        }
        let r = linalg::to_complex(&root);
        let m = r.dot(&omega).dot(&r);
        let (ev, _) = linalg::hermitian_eigen(&m);
        let mut nu: Vec<f64> = ev.into_iter().filter(|v| *v > 0.0).collect();
        nu.resize(n, 0.0);
        nu.sort_by(f64::total_cmp);
        nu
    }

    /// The covariance expressed in the normal-mode quadratures of `model`,
    /// each rescaled to its own oscillator units.
    pub fn in_mode_basis(&self, model: &ChainModel) -> RMatrix {
        let n = self.n_modes();
        let mut t = RMatrix::zeros((2 * n, 2 * n));
        for k in 0..n {
            let w = model.frequencies[k];
            for i in 0..n {
                t[[k, i]] = w.sqrt() * model.modes[[i, k]];
                t[[n + k, n + i]] = model.modes[[i, k]] / w.sqrt();
            }
        }
        t.dot(&self.covariance).dot(&t.t())
    }

    /// Mean occupation of every normal mode; tiny negatives clamp to zero.
    pub fn mode_occupations(&self, model: &ChainModel) -> Vec<f64> {
        let n = self.n_modes();
        let c = self.in_mode_basis(model);
        (0..n).map(|k| ((c[[k, k]] + c[[n + k, n + k]] - 1.0) / 2.0).max(0.0)).collect()
    }
}

/// Product of ground states of each ion in its local well.
pub fn local_ground_covariance(model: &ChainModel) -> GaussianMotionalState {
    let n = model.n_ions;
    let mut covariance = RMatrix::zeros((2 * n, 2 * n));
    for (i, w) in model.local_frequencies().into_iter().enumerate() {
        covariance[[i, i]] = 0.5 / w;
        covariance[[n + i, n + i]] = 0.5 * w;
    }
    GaussianMotionalState {
        covariance,
        first_moments: vec![0.0; 2 * n],
    }
}

/// Ground state of every normal mode.
pub fn normal_mode_ground_state(model: &ChainModel) -> GaussianMotionalState {
    let n = model.n_ions;
    let mut diag = RMatrix::zeros((2 * n, 2 * n));
    for k in 0..n {
        diag[[k, k]] = 0.5 / model.frequencies[k];
        diag[[n + k, n + k]] = 0.5 * model.frequencies[k];
    }
    // Mode coordinates back to ion coordinates: x = V Q, p = V P.
    let mut v = RMatrix::zeros((2 * n, 2 * n));
    for i in 0..n {
        for k in 0..n {
            v[[i, k]] = model.modes[[i, k]];
            v[[n + i, n + k]] = model.modes[[i, k]];
        }
    }
    GaussianMotionalState {
        covariance: v.dot(&diag).dot(&v.t()),
        first_moments: vec![0.0; 2 * n],
    }
}

/// Mean phonon number of the centre-of-mass mode.
pub fn com_occupation(state: &GaussianMotionalState, model: &ChainModel) -> f64 {
    state.mode_occupations(model)[model.com_index]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainRow {
    pub n_ions: usize,
    pub kind: ChainKind,
    /// Pinned site spacing [ℓ]; `None` for a regular trap.
    pub spacing: Option<f64>,
    pub nu_com: f64,
    pub n_com: f64,
}

/// `n_COM` after local ground-state cooling for `N = 1..=n_max` and each kind.
pub fn chain_sweep(n_max: usize, kinds: &[ChainKind], nu: f64, options: &ChainOptions) -> Result<Vec<ChainRow>> {
    if n_max < 2 {
        return Err(Error::InvalidParameter {
            name: "n_max",
            reason: format!("must be at least 2, got {n_max}"),
        });
    }
    let mut rows = Vec::with_capacity(n_max * kinds.len());
    for &kind in kinds {
        for n in 1..=n_max {
            let model = ChainModel::new(n, kind, nu, *options)?;
            rows.push(ChainRow {
                n_ions: n,
                kind,
                spacing: model.spacing,
                nu_com: model.com_frequency(),
                n_com: com_occupation(&local_ground_covariance(&model), &model),
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calcium_length_scale_is_micrometres() {
        let l = coulomb_length(40.0, 2.0 * std::f64::consts::PI * 1e6);
        assert!(l > 4e-6 && l < 6e-6, "{l}");
    }

    #[test]
    fn gradient_matches_energy_differences() {
        let u = [-1.3, -0.2, 0.5, 1.9];
        let g = regular_gradient(&u);
        for i in 0..u.len() {
            let h = 1e-6;
            let mut up = u;
            let mut down = u;
            up[i] += h;
            down[i] -= h;
            let fd = (regular_energy(&up) - regular_energy(&down)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-7);
        }
    }
}
