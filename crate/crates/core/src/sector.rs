//! Parity-sector representation of operators and states.
//!
//! Every Hamiltonian of the model commutes with the parity `σz (-1)^{a†a}`,
//! so propagators split into two `n_fock × n_fock` blocks. Sector basis
//! vector `k` carries Fock level `k`; the spin alternates with `k`:
//!
//! * plus:  `k` even ↔ `|e,k⟩`, `k` odd ↔ `|g,k⟩`
//! * minus: `k` even ↔ `|g,k⟩`, `k` odd ↔ `|e,k⟩`
//!
//! Inside a block, `(a+a†)σθ` becomes `D (a+a†) D†` with a diagonal phase
//! `D`, so pulse generators are real symmetric tridiagonal matrices up to
//! that phase.

use ndarray::{s, Array1};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, RMatrix, C64, ZERO};
use crate::quantum::{JointState, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Plus,
    Minus,
}

impl Parity {
    pub const BOTH: [Parity; 2] = [Parity::Plus, Parity::Minus];

    /// Spin index (0 = e, 1 = g) of sector basis vector `k`.
    pub fn spin_of(self, k: usize) -> usize {
        match (self, k % 2) {
            (Parity::Plus, 0) | (Parity::Minus, 1) => 0,
            _ => 1,
        }
    }

    /// σz eigenvalue of sector basis vector `k`.
    pub fn sz_of(self, k: usize) -> f64 {
        if self.spin_of(k) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn joint_index(self, k: usize, n_fock: usize) -> usize {
        self.spin_of(k) * n_fock + k
    }

    /// Diagonal phase `D` turning `(a+a†)` into the block of `(a+a†)σθ`.
    pub fn sigma_phases(self, theta: f64, dim: usize) -> Vec<C64> {
        let sign = match self {
            Parity::Plus => -1.0,
            Parity::Minus => 1.0,
        };
        (0..dim)
            .map(|k| {
                let half = if k % 2 == 0 { sign } else { -sign };
                C64::from_polar(1.0, half * theta / 2.0)
            })
            .collect()
    }
}

/// A parity-conserving operator stored as its two diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorOp {
    pub plus: CMatrix,
    pub minus: CMatrix,
}

impl SectorOp {
    pub fn identity(n_fock: usize) -> Self {
        SectorOp {
            plus: linalg::identity(n_fock),
            minus: linalg::identity(n_fock),
        }
    }

    pub fn from_diagonals(plus: &[C64], minus: &[C64]) -> Self {
        SectorOp {
            plus: ndarray::Array2::from_diag(&Array1::from(plus.to_vec())),
            minus: ndarray::Array2::from_diag(&Array1::from(minus.to_vec())),
        }
    }

    pub fn n_fock(&self) -> usize {
        self.plus.nrows()
    }

    pub fn block(&self, parity: Parity) -> &CMatrix {
        match parity {
            Parity::Plus => &self.plus,
            Parity::Minus => &self.minus,
        }
    }

    /// Operator product `self · rhs`.
    pub fn dot(&self, rhs: &SectorOp) -> SectorOp {
        SectorOp {
            plus: self.plus.dot(&rhs.plus),
            minus: self.minus.dot(&rhs.minus),
        }
    }

    pub fn dagger(&self) -> SectorOp {
        SectorOp {
            plus: linalg::dagger(&self.plus),
            minus: linalg::dagger(&self.minus),
        }
    }

    pub fn scale(&self, factor: C64) -> SectorOp {
        SectorOp {
            plus: &self.plus * factor,
            minus: &self.minus * factor,
        }
    }

    pub fn unitarity_defect(&self) -> f64 {
        linalg::unitarity_defect(&self.plus).max(linalg::unitarity_defect(&self.minus))
    }

    /// Dense `2 n_fock` square matrix in the joint spin-major basis.
    pub fn to_dense(&self) -> CMatrix {
        let n = self.n_fock();
        let mut m = CMatrix::zeros((2 * n, 2 * n));
        for parity in Parity::BOTH {
            let b = self.block(parity);
            for r in 0..n {
                let jr = parity.joint_index(r, n);
                for c in 0..n {
                    m[[jr, parity.joint_index(c, n)]] = b[[r, c]];
                }
            }
        }
        m
    }

    /// Split a dense parity-conserving operator into blocks.
    pub fn from_dense(m: &CMatrix) -> Result<SectorOp> {
        if m.nrows() != m.ncols() || m.nrows() % 2 != 0 {
            return Err(Error::InvalidDimension(format!(
                "expected an even square matrix, got {:?}",
                m.dim()
            )));
        }
        let n = m.nrows() / 2;
        let block = |parity: Parity| {
            CMatrix::from_shape_fn((n, n), |(r, c)| {
                m[[parity.joint_index(r, n), parity.joint_index(c, n)]]
            })
        };
        let op = SectorOp {
            plus: block(Parity::Plus),
            minus: block(Parity::Minus),
        };
        let scale = linalg::max_abs(m).max(1.0);
        let residual = linalg::max_abs(&(m - &op.to_dense()));
        if residual > 1e-12 * scale {
            return Err(Error::Unsupported(format!(
                "operator mixes parity sectors (off-block weight {residual:.3e})"
            )));
        }
        Ok(op)
    }

    /// Compress each block to its leading `n` levels.
    pub fn truncate(&self, n: usize) -> SectorOp {
        SectorOp {
            plus: self.plus.slice(s![..n, ..n]).to_owned(),
            minus: self.minus.slice(s![..n, ..n]).to_owned(),
        }
    }

    /// Replace each block by the unitary factor of its polar decomposition.
    pub fn polar(&self) -> SectorOp {
        SectorOp {
            plus: linalg::polar_unitary(&self.plus),
            minus: linalg::polar_unitary(&self.minus),
        }
    }
}

/// Density matrix split by parity: the two diagonal blocks plus, when
/// present, the coherence block `ρ₊₋` (its transpose-conjugate is `ρ₋₊`).
#[derive(Debug, Clone, PartialEq)]
pub struct SectorState {
    pub plus: CMatrix,
    pub minus: CMatrix,
    pub cross: Option<CMatrix>,
}

impl SectorState {
    pub fn from_joint(state: &JointState) -> SectorState {
        let n = state.n_fock;
        let rho = &state.rho;
        let block = |a: Parity, b: Parity| {
            CMatrix::from_shape_fn((n, n), |(r, c)| rho[[a.joint_index(r, n), b.joint_index(c, n)]])
        };
        let cross = block(Parity::Plus, Parity::Minus);
        SectorState {
            plus: block(Parity::Plus, Parity::Plus),
            minus: block(Parity::Minus, Parity::Minus),
            cross: (linalg::max_abs(&cross) > 0.0).then_some(cross),
        }
    }

    pub fn to_joint(&self, params: &SystemParams) -> Result<JointState> {
        let n = self.n_fock();
        let mut rho = SectorOp {
            plus: self.plus.clone(),
            minus: self.minus.clone(),
        }
        .to_dense();
        if let Some(cross) = &self.cross {
            for r in 0..n {
                let jr = Parity::Plus.joint_index(r, n);
                for c in 0..n {
                    let jc = Parity::Minus.joint_index(c, n);
                    rho[[jr, jc]] = cross[[r, c]];
                    rho[[jc, jr]] = cross[[r, c]].conj();
                }
            }
        }
        JointState::unchecked(rho, params)
    }

    pub fn n_fock(&self) -> usize {
        self.plus.nrows()
    }

    pub fn apply(&mut self, u: &SectorOp) {
        let minus_dag = linalg::dagger(&u.minus);
        self.plus = u.plus.dot(&self.plus).dot(&linalg::dagger(&u.plus));
        self.minus = u.minus.dot(&self.minus).dot(&minus_dag);
        if let Some(cross) = &self.cross {
            self.cross = Some(u.plus.dot(cross).dot(&minus_dag));
        }
    }

    /// Motional populations; sector level `k` is Fock level `k` in both blocks.
    pub fn phonon_distribution(&self) -> Vec<f64> {
        (0..self.n_fock())
            .map(|k| self.plus[[k, k]].re + self.minus[[k, k]].re)
            .collect()
    }

    /// Populations after applying `u`, without forming the new state.
    pub fn distribution_after(&self, u: &SectorOp) -> Vec<f64> {
        let diag = |u: &CMatrix, rho: &CMatrix| -> Vec<f64> {
            let ur = u.dot(rho);
            (0..u.nrows())
                .map(|r| {
                    ur.row(r)
                        .iter()
                        .zip(u.row(r).iter())
                        .map(|(a, b)| (a * b.conj()).re)
                        .sum()
                })
                .collect()
        };
        let p = diag(&u.plus, &self.plus);
        let m = diag(&u.minus, &self.minus);
        p.iter().zip(m.iter()).map(|(a, b)| a + b).collect()
    }

    pub fn mean_phonons(&self) -> f64 {
        self.phonon_distribution()
            .iter()
            .enumerate()
            .map(|(k, p)| k as f64 * p)
            .sum()
    }

    pub fn guard_population(&self, guard_levels: usize) -> f64 {
        let p = self.phonon_distribution();
        p[p.len() - guard_levels..].iter().sum()
    }

    /// Trace out the spin and reset it to `|g⟩`.
    ///
    /// The motional marginal pairs `ρ₊(n,n') + ρ₋(n,n')` for equal parities of
    /// `n, n'`; afterwards `|g,odd⟩` lives in plus and `|g,even⟩` in minus.
    /// Opposite-parity coherences come from the cross block and stay there.
    pub fn reinitialize(&mut self) {
        let n = self.n_fock();
        let mut plus = CMatrix::zeros((n, n));
        let mut minus = CMatrix::zeros((n, n));
        for r in 0..n {
            for c in (r % 2..n).step_by(2) {
                let v = self.plus[[r, c]] + self.minus[[r, c]];
                if r % 2 == 1 {
                    plus[[r, c]] = v;
                } else {
                    minus[[r, c]] = v;
                }
            }
        }
        if let Some(cross) = &self.cross {
            let mut next = CMatrix::zeros((n, n));
            for r in (1..n).step_by(2) {
                for c in (0..n).step_by(2) {
                    next[[r, c]] = cross[[r, c]] + cross[[c, r]].conj();
                }
            }
            self.cross = Some(next);
        }
        self.plus = plus;
        self.minus = minus;
    }

    pub fn trace(&self) -> f64 {
        (linalg::trace(&self.plus) + linalg::trace(&self.minus)).re
    }
}

/// Real symmetric tridiagonal matrix.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    /// `diag + coupling·(a+a†)` on `dim` levels.
    pub fn ladder(diag: Vec<f64>, coupling: f64) -> Self {
        let off = (1..diag.len())
            .map(|k| coupling * (k as f64).sqrt())
            .collect();
        Tridiagonal { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn eigen(&self) -> Spectral {
        let n = self.dim();
        let mut dense = RMatrix::zeros((n, n));
        for k in 0..n {
            dense[[k, k]] = self.diag[k];
        }
        for (k, &v) in self.off.iter().enumerate() {
            dense[[k, k + 1]] = v;
            dense[[k + 1, k]] = v;
        }
        let (values, vectors) = linalg::symmetric_eigen(&dense);
        Spectral { values, vectors }
    }
}

/// Eigendecomposition `T = V Λ Vᵀ` of a real symmetric generator.
#[derive(Debug, Clone)]
pub(crate) struct Spectral {
    pub values: Vec<f64>,
    pub vectors: RMatrix,
}

impl Spectral {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Rows `..rows`, columns `..cols` of `exp(-i t T)`.
    pub fn propagator(&self, t: f64, rows: usize, cols: usize) -> CMatrix {
        let m = self.dim();
        let left = self.vectors.slice(s![..rows, ..]);
        let right = self.vectors.slice(s![..cols, ..]);
        let mut cos_part = left.to_owned();
        let mut sin_part = left.to_owned();
        for j in 0..m {
            let (sin, cos) = (self.values[j] * t).sin_cos();
            cos_part.column_mut(j).mapv_inplace(|v| v * cos);
            sin_part.column_mut(j).mapv_inplace(|v| v * sin);
        }
        let re = cos_part.dot(&right.t());
        let im = sin_part.dot(&right.t());
        let mut out = CMatrix::from_elem((rows, cols), ZERO);
        ndarray::Zip::from(&mut out)
            .and(&re)
            .and(&im)
            .for_each(|o, &r, &i| *o = C64::new(r, -i));
        out
    }
}

/// Multiply rows by `d` and columns by `conj(d)` in place.
pub(crate) fn conjugate_by_phases(m: &mut CMatrix, row_phases: &[C64], col_phases: &[C64]) {
    for ((r, c), v) in m.indexed_iter_mut() {
        *v *= row_phases[r] * col_phases[c].conj();
    }
}
