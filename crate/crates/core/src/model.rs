//! Physical systems and their normal modes.
//!
//! Two systems are supported: a chain of equal masses joined by equal springs
//! with both ends attached to rigid walls, and a string of ions in a linear
//! harmonic trap. The fixed-wall boundary is the one that gives `ν₂ = √3 ν₁`
//! for two sites, the same ratio as two trapped ions; free or periodic ends do
//! not.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, matrix_rows};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_sites: usize,
    pub spring_constant: f64,
    pub mass: f64,
}

impl ChainSpec {
    pub fn new(n_sites: usize) -> Result<Self> {
        Self::with_params(n_sites, 1.0, 1.0)
    }

    pub fn with_params(n_sites: usize, spring_constant: f64, mass: f64) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::InvalidSpec(format!("chain needs at least 2 sites, got {n_sites}")));
        }
        if !(spring_constant > 0.0 && mass > 0.0) {
            return Err(Error::InvalidSpec("spring constant and mass must be positive".into()));
        }
        Ok(Self { n_sites, spring_constant, mass })
    }

    /// Mass-weighted stiffness matrix `k/m · tridiag(-1, 2, -1)`.
    pub fn stiffness(&self) -> DMatrix<f64> {
        let n = self.n_sites;
        let w2 = self.spring_constant / self.mass;
        DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 2.0 * w2,
            1 => -w2,
            _ => 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSpec {
    pub n_ions: usize,
    pub axial_frequency: f64,
}

impl TrapSpec {
    pub fn new(n_ions: usize) -> Result<Self> {
        Self::with_frequency(n_ions, 1.0)
    }

    pub fn with_frequency(n_ions: usize, axial_frequency: f64) -> Result<Self> {
        if n_ions < 2 {
            return Err(Error::InvalidSpec(format!("trap needs at least 2 ions, got {n_ions}")));
        }
        if !(axial_frequency > 0.0) {
            return Err(Error::InvalidSpec("axial frequency must be positive".into()));
        }
        Ok(Self { n_ions, axial_frequency })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Chain,
    Trap,
}

impl std::str::FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Self::Chain),
            "trap" => Ok(Self::Trap),
            other => Err(Error::InvalidArgument(format!("unknown system '{other}' (chain|trap)"))),
        }
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Chain => "chain",
            Self::Trap => "trap",
        })
    }
}

/// Normal-mode frequencies (ascending) and the orthogonal matrix whose
/// columns are the normal-mode vectors, so that `q = mode_matrixᵀ · x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalModeData {
    pub frequencies: Vec<f64>,
    #[serde(with = "matrix_rows")]
    pub mode_matrix: DMatrix<f64>,
}

impl NormalModeData {
    pub fn n_modes(&self) -> usize {
        self.frequencies.len()
    }

    /// `mode_matrix · diag(ν²) · mode_matrixᵀ`.
    pub fn stiffness(&self) -> DMatrix<f64> {
        let d = DVector::from_iterator(self.n_modes(), self.frequencies.iter().map(|v| v * v));
        &self.mode_matrix * DMatrix::from_diagonal(&d) * self.mode_matrix.transpose()
    }

    fn from_stiffness(k: &DMatrix<f64>, scale: f64) -> Result<Self> {
        let (vals, mut vecs) = hermitian_eigen(k);
        if vals[0] <= 0.0 {
            return Err(Error::InvalidSpec("stiffness matrix is not positive definite".into()));
        }
        fix_column_signs(&mut vecs);
        Ok(Self { frequencies: vals.iter().map(|v| scale * v.sqrt()).collect(), mode_matrix: vecs })
    }
}

/// Makes the first non-negligible entry of every column positive.
fn fix_column_signs(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        if let Some(&x) = col.iter().find(|x| x.abs() > 1e-9) {
            if x < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Closed-form normal modes of the fixed-end chain:
/// `ν_j = 2√(k/m) sin(jπ / 2(N+1))` with a sine-basis mode matrix.
pub fn chain_normal_modes(spec: &ChainSpec) -> NormalModeData {
    let n = spec.n_sites;
    let w = (spec.spring_constant / spec.mass).sqrt();
    let l = (n + 1) as f64;
    let frequencies = (1..=n).map(|j| 2.0 * w * (j as f64 * PI / (2.0 * l)).sin()).collect();
    let norm = (2.0 / l).sqrt();
    let mode_matrix = DMatrix::from_fn(n, n, |i, j| norm * (((i + 1) * (j + 1)) as f64 * PI / l).sin());
    NormalModeData { frequencies, mode_matrix }
}

/// Numerical eigen-solve of the chain stiffness matrix. Used to cross-check
/// the closed form.
pub fn chain_normal_modes_numeric(spec: &ChainSpec) -> Result<NormalModeData> {
    NormalModeData::from_stiffness(&spec.stiffness(), 1.0)
}

/// Gradient of the dimensionless trap potential
/// `Σ uᵢ²/2 + Σ_{i<j} 1/|uᵢ − uⱼ|`.
fn trap_gradient(u: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|i| {
            let coulomb: f64 = (0..u.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let d = u[i] - u[j];
                    d.signum() / (d * d)
                })
                .sum();
            u[i] - coulomb
        })
        .collect()
}

fn trap_potential(u: &[f64]) -> f64 {
    let mut v: f64 = u.iter().map(|x| 0.5 * x * x).sum();
    for i in 0..u.len() {
        for j in 0..i {
            v += 1.0 / (u[i] - u[j]).abs();
        }
    }
    v
}

/// Hessian of the dimensionless trap potential at the given positions.
pub fn trap_hessian(u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let mut h = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let c = 2.0 / (u[i] - u[j]).abs().powi(3);
                h[(i, j)] = -c;
                h[(i, i)] += c;
            }
        }
    }
    h
}

const TRAP_TOL: f64 = 1e-10;

/// Equilibrium positions of `n_ions` ions in units where the Coulomb constant
/// and the axial confinement are both 1. Sorted ascending.
pub fn trap_equilibrium_positions(spec: &TrapSpec) -> Result<Vec<f64>> {
    let n = spec.n_ions;
    // symmetric ansatz, spacing roughly matching the known N^-0.56 scaling
    let spacing = 2.0 * (n as f64).powf(-0.56);
    let mut u: Vec<f64> = (0..n).map(|i| spacing * (i as f64 - 0.5 * (n - 1) as f64)).collect();

    let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut grad = trap_gradient(&u);
    for _ in 0..200 {
        let res = norm(&grad);
        if res < TRAP_TOL {
            return Ok(u);
        }
        let h = trap_hessian(&u);
        let step = h
            .cholesky()
            .ok_or(Error::NoConvergence { what: "trap equilibrium", residual: res })?
            .solve(&DVector::from_column_slice(&grad));
        let v0 = trap_potential(&u);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(x, s)| x - t * s).collect();
            let ordered = trial.windows(2).all(|w| w[0] < w[1]);
            if ordered && (trap_potential(&trial) <= v0 || t < 1e-3) {
                u = trial;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::NoConvergence { what: "trap equilibrium", residual: res });
            }
        }
        grad = trap_gradient(&u);
    }
    let res = norm(&grad);
    if res < TRAP_TOL {
        Ok(u)
    } else {
        Err(Error::NoConvergence { what: "trap equilibrium", residual: res })
    }
}

pub fn trap_normal_modes(spec: &TrapSpec) -> Result<NormalModeData> {
    let u = trap_equilibrium_positions(spec)?;
    NormalModeData::from_stiffness(&trap_hessian(&u), spec.axial_frequency)
}

pub fn normal_modes(kind: SystemKind, n: usize) -> Result<NormalModeData> {
    match kind {
        SystemKind::Chain => Ok(chain_normal_modes(&ChainSpec::new(n)?)),
        SystemKind::Trap => trap_normal_modes(&TrapSpec::new(n)?),
    }
}
