//! The multimode Gaussian ground state and its expansion over local number
//! states.
//!
//! In site coordinates the ground state is `ψ(x) ∝ exp(−½ xᵀ A x)` with
//! `A = U diag(ν) Uᵀ`. Expressed over local oscillators of frequencies `ωᵢ`
//! it becomes `c₀ exp(½ Σ Rᵢⱼ aᵢ† aⱼ†)|0⟩`, so every Fock coefficient follows
//! from the squeeze matrix `R` by a one-step recursion and odd total
//! occupations never appear.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hermitian_eigenvalues, matrix_rows, symmetric_function};
use crate::model::NormalModeData;
use crate::Complex64;

/// Ground-state quadratic form in site coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialMatrix {
    #[serde(with = "matrix_rows")]
    pub a: DMatrix<f64>,
}

impl PotentialMatrix {
    pub fn n_modes(&self) -> usize {
        self.a.nrows()
    }
}

pub fn potential_matrix(modes: &NormalModeData) -> PotentialMatrix {
    let u = &modes.mode_matrix;
    let d = DVector::from_column_slice(&modes.frequencies);
    let a = u * DMatrix::from_diagonal(&d) * u.transpose();
    PotentialMatrix { a: symmetrize(a) }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (&m + m.transpose())
}

/// Local-mode frequencies and truncation of the occupation numbers.
///
/// `cutoffs[i]` is the largest occupation kept for site `i` (inclusive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalBasis {
    pub omegas: Vec<f64>,
    pub cutoffs: Vec<usize>,
    pub total_quanta_cap: Option<usize>,
}

impl LocalBasis {
    pub fn new(omegas: Vec<f64>, cutoff: usize) -> Result<Self> {
        let n = omegas.len();
        Self::with_cutoffs(omegas, vec![cutoff; n], None)
    }

    pub fn with_cutoffs(omegas: Vec<f64>, cutoffs: Vec<usize>, total_quanta_cap: Option<usize>) -> Result<Self> {
        if omegas.is_empty() {
            return Err(Error::InvalidSpec("local basis needs at least one mode".into()));
        }
        if omegas.len() != cutoffs.len() {
            return Err(Error::Dimension(format!("{} frequencies but {} cutoffs", omegas.len(), cutoffs.len())));
        }
        if let Some(w) = omegas.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidSpec(format!("local frequency must be positive, got {w}")));
        }
        if cutoffs.iter().any(|&c| c < 2) {
            return Err(Error::InvalidSpec("per-mode cutoff must be at least 2".into()));
        }
        Ok(Self { omegas, cutoffs, total_quanta_cap })
    }

    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cutoffs.iter().map(|c| c + 1).collect()
    }
}

/// Default per-mode cutoff by chain length.
pub fn default_cutoff(n_modes: usize) -> usize {
    match n_modes {
        0..=4 => 10,
        5 | 6 => 6,
        _ => 4,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqueezeMatrix {
    pub r: DMatrix<f64>,
    pub omegas: Vec<f64>,
}

impl SqueezeMatrix {
    pub fn spectral_radius(&self) -> f64 {
        hermitian_eigenvalues(&self.r).iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `R = W^(−1/2)(W − A)(W + A)^(−1) W^(1/2)`, evaluated in the equivalent
/// manifestly symmetric form `2 W^(1/2) (W + A)^(−1) W^(1/2) − I`.
pub fn squeeze_matrix(a: &PotentialMatrix, basis: &LocalBasis) -> Result<SqueezeMatrix> {
    let n = a.n_modes();
    check_len(n, basis.omegas.len())?;
    let mut m = a.a.clone();
    for i in 0..n {
        m[(i, i)] += basis.omegas[i];
    }
    let (vals, _) = hermitian_eigen(&m);
    if vals[0] <= 0.0 {
        return Err(Error::InvalidSpec("W + A is singular".into()));
    }
    let inv = symmetric_function(&m, |x| 1.0 / x);
    let sq: Vec<f64> = basis.omegas.iter().map(|w| w.sqrt()).collect();
    let r = DMatrix::from_fn(n, n, |i, j| 2.0 * sq[i] * inv[(i, j)] * sq[j] - if i == j { 1.0 } else { 0.0 });
    Ok(SqueezeMatrix { r: symmetrize(r), omegas: basis.omegas.clone() })
}

/// Overlap of the ground state with the local vacuum,
/// `c₀ = 2^(N/2) (det W det A)^(1/4) det(W + A)^(−1/2)`.
pub fn vacuum_amplitude(a: &PotentialMatrix, basis: &LocalBasis) -> Result<f64> {
    let n = a.n_modes();
    check_len(n, basis.omegas.len())?;
    let log_det = |m: &DMatrix<f64>| -> Result<f64> {
        let vals = hermitian_eigenvalues(m);
        if vals[0] <= 0.0 {
            return Err(Error::InvalidSpec("matrix is not positive definite".into()));
        }
        Ok(vals.iter().map(|v| v.ln()).sum())
    };
    let log_det_w: f64 = basis.omegas.iter().map(|w| w.ln()).sum();
    let log_det_a = log_det(&a.a)?;
    let mut m = a.a.clone();
    for i in 0..n {
        m[(i, i)] += basis.omegas[i];
    }
    let log_det_m = log_det(&m)?;
    let ln_c0 = 0.5 * n as f64 * std::f64::consts::LN_2 + 0.25 * (log_det_w + log_det_a) - 0.5 * log_det_m;
    Ok(ln_c0.exp().min(1.0))
}

fn check_len(n: usize, m: usize) -> Result<()> {
    if n != m {
        return Err(Error::Dimension(format!("{n} modes but {m} local frequencies")));
    }
    Ok(())
}

/// Truncated ground-state coefficients `⟨n₁…n_N|vac⟩`.
///
/// Only multi-indices with even total occupation are stored. For a row-major
/// prefix `(n₁…n_{N−1})` the admissible last occupations share its parity, so
/// entry `n` lives at `offsets[prefix] + n_N / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockTensor {
    dims: Vec<usize>,
    omegas: Vec<f64>,
    total_quanta_cap: Option<usize>,
    c0: f64,
    tail_norm: f64,
    offsets: Vec<usize>,
    data: Vec<f64>,
}

fn parity_offsets(dims: &[usize]) -> Vec<usize> {
    let (prefix_dims, last) = dims.split_at(dims.len() - 1);
    let last = last[0];
    let n_prefix: usize = prefix_dims.iter().product();
    let mut offsets = Vec::with_capacity(n_prefix + 1);
    let mut digits = vec![0usize; prefix_dims.len()];
    let mut parity = 0usize;
    let mut acc = 0;
    for _ in 0..n_prefix {
        offsets.push(acc);
        acc += if parity == 0 { last.div_ceil(2) } else { last / 2 };
        // odometer increment, tracking the digit-sum parity
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            parity ^= 1;
            if digits[k] < prefix_dims[k] {
                break;
            }
            parity ^= digits[k] & 1;
            digits[k] = 0;
        }
    }
    offsets.push(acc);
    offsets
}

impl FockTensor {
    fn empty(dims: Vec<usize>, omegas: Vec<f64>, total_quanta_cap: Option<usize>) -> Self {
        let offsets = parity_offsets(&dims);
        let len = *offsets.last().unwrap();
        Self { dims, omegas, total_quanta_cap, c0: 0.0, tail_norm: 1.0, offsets, data: vec![0.0; len] }
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    /// Per-mode dimensions (cutoff + 1).
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn cutoffs(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d - 1).collect()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn total_quanta_cap(&self) -> Option<usize> {
        self.total_quanta_cap
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// `1 − Σ c(n)²`, the weight lost to truncation.
    pub fn tail_norm(&self) -> f64 {
        self.tail_norm
    }

    pub fn is_converged(&self, tol: f64) -> bool {
        self.tail_norm < tol
    }

    /// Number of stored (even-parity) entries.
    pub fn stored_len(&self) -> usize {
        self.data.len()
    }

    /// Size of the full occupation box.
    pub fn box_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn flat_index(&self, n: &[usize]) -> usize {
        n.iter().zip(&self.dims).fold(0, |acc, (&k, &d)| acc * d + k)
    }

    /// Coefficient at the multi-index `n`; zero for odd totals or indices
    /// outside the truncation.
    pub fn get(&self, n: &[usize]) -> f64 {
        if n.len() != self.dims.len() || n.iter().zip(&self.dims).any(|(&k, &d)| k >= d) {
            return 0.0;
        }
        if n.iter().sum::<usize>() % 2 == 1 {
            return 0.0;
        }
        let last = *self.dims.last().unwrap();
        let flat = self.flat_index(n);
        self.data[self.offsets[flat / last] + (flat % last) / 2]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|c| c * c).sum()
    }

    /// Full row-major coefficient array over the occupation box, odd entries
    /// filled with zero.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.box_len()];
        self.for_each_stored(|_, flat, c| out[flat] = c);
        out
    }

    /// Visits every stored entry with its multi-index and full-box flat index.
    pub fn for_each_stored(&self, mut f: impl FnMut(&[usize], usize, f64)) {
        let n_modes = self.dims.len();
        let mut idx = vec![0usize; n_modes];
        let total = self.box_len();
        let mut sum = 0usize;
        let last = self.dims[n_modes - 1];
        for flat in 0..total {
            if sum.is_multiple_of(2) {
                let prefix = flat / last;
                f(&idx, flat, self.data[self.offsets[prefix] + idx[n_modes - 1] / 2]);
            }
            for k in (0..n_modes).rev() {
                idx[k] += 1;
                sum += 1;
                if idx[k] < self.dims[k] {
                    break;
                }
                sum -= idx[k];
                idx[k] = 0;
            }
        }
    }
}

/// Fills the coefficient tensor from the squeeze matrix by
/// `c(m + eᵢ) = (mᵢ + 1)^(−1/2) Σⱼ Rᵢⱼ √mⱼ c(m − eⱼ)` seeded with `c(0) = c₀`.
pub fn fock_expand(r: &SqueezeMatrix, c0: f64, basis: &LocalBasis) -> Result<FockTensor> {
    let n = basis.n_modes();
    if r.r.nrows() != n {
        return Err(Error::Dimension(format!(
            "squeeze matrix is {}x{}, basis has {n} modes",
            r.r.nrows(),
            r.r.ncols()
        )));
    }
    let rho = r.spectral_radius();
    if rho >= 1.0 {
        return Err(Error::NotNormalizable(rho));
    }
    let dims = basis.dims();
    let mut t = FockTensor::empty(dims.clone(), basis.omegas.clone(), basis.total_quanta_cap);
    t.c0 = c0;

    let mut strides = vec![1usize; n];
    for k in (0..n - 1).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let max_d = *dims.iter().max().unwrap();
    let sqrt: Vec<f64> = (0..=max_d).map(|k| (k as f64).sqrt()).collect();
    let last = dims[n - 1];
    let cap = basis.total_quanta_cap.unwrap_or(usize::MAX);
    let offsets = t.offsets.clone();
    let slot = |flat: usize| offsets[flat / last] + (flat % last) / 2;

    let mut idx = vec![0usize; n];
    let mut sum = 0usize;
    let total = t.box_len();
    for flat in 0..total {
        if sum.is_multiple_of(2) && sum <= cap {
            let value = if sum == 0 {
                c0
            } else {
                let i = (0..n).rev().find(|&k| idx[k] > 0).unwrap();
                let mi = idx[i] - 1;
                let base = flat - strides[i];
                let mut acc = 0.0;
                for j in 0..n {
                    let mj = if j == i { mi } else { idx[j] };
                    if mj > 0 {
                        acc += r.r[(i, j)] * sqrt[mj] * t.data[slot(base - strides[j])];
                    }
                }
                acc / sqrt[mi + 1]
            };
            t.data[slot(flat)] = value;
        }
        for k in (0..n).rev() {
            idx[k] += 1;
            sum += 1;
            if idx[k] < dims[k] {
                break;
            }
            sum -= idx[k];
            idx[k] = 0;
        }
    }
    t.tail_norm = (1.0 - t.norm_sqr()).max(0.0);
    Ok(t)
}

/// Squeeze matrix, vacuum amplitude and recursion in one call.
pub fn ground_state_tensor(a: &PotentialMatrix, basis: &LocalBasis) -> Result<FockTensor> {
    let r = squeeze_matrix(a, basis)?;
    let c0 = vacuum_amplitude(a, basis)?;
    fock_expand(&r, c0, basis)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Escalation {
    pub tail_tol: f64,
    /// Largest stored-entry count the escalation may reach.
    pub max_entries: usize,
}

impl Default for Escalation {
    fn default() -> Self {
        Self { tail_tol: 1e-6, max_entries: 20_000_000 }
    }
}

/// Expands at `start_cutoff` (or the size-dependent default) and raises the
/// uniform cutoff until the tail weight drops below the tolerance. The last
/// tensor is returned even when the entry budget stops escalation first; check
/// [`FockTensor::is_converged`].
pub fn ground_state_tensor_auto(
    a: &PotentialMatrix,
    omegas: &[f64],
    start_cutoff: Option<usize>,
    esc: Escalation,
) -> Result<FockTensor> {
    let n = a.n_modes();
    let mut cutoff = start_cutoff.unwrap_or_else(|| default_cutoff(n));
    let mut tensor = ground_state_tensor(a, &LocalBasis::new(omegas.to_vec(), cutoff)?)?;
    while !tensor.is_converged(esc.tail_tol) {
        let next = (cutoff + 2).pow(n as u32) / 2;
        if next > esc.max_entries {
            break;
        }
        cutoff += 1;
        tensor = ground_state_tensor(a, &LocalBasis::new(omegas.to_vec(), cutoff)?)?;
    }
    Ok(tensor)
}

/// Portable JSON form of a [`FockTensor`]: a header and the even-parity
/// coefficients listed in row-major order over the occupation numbers (entries
/// with odd total occupation are omitted; entries beyond the total-quanta cap
/// are present and zero).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FockTensorDump {
    pub schema: String,
    pub n_modes: usize,
    pub omegas: Vec<f64>,
    pub cutoffs: Vec<usize>,
    pub total_quanta_cap: Option<usize>,
    pub c0: f64,
    pub tail_norm: f64,
    pub ordering: String,
    pub coefficients: Vec<f64>,
}

pub const FOCK_SCHEMA: &str = "fock-tensor/1";

impl From<&FockTensor> for FockTensorDump {
    fn from(t: &FockTensor) -> Self {
        Self {
            schema: FOCK_SCHEMA.into(),
            n_modes: t.n_modes(),
            omegas: t.omegas.clone(),
            cutoffs: t.cutoffs(),
            total_quanta_cap: t.total_quanta_cap,
            c0: t.c0,
            tail_norm: t.tail_norm,
            ordering: "row-major over occupations (n1 slowest), odd total omitted".into(),
            coefficients: t.data.clone(),
        }
    }
}

impl TryFrom<FockTensorDump> for FockTensor {
    type Error = Error;

    fn try_from(d: FockTensorDump) -> Result<Self> {
        if d.schema != FOCK_SCHEMA {
            return Err(Error::InvalidArgument(format!("unsupported schema {}", d.schema)));
        }
        let basis = LocalBasis::with_cutoffs(d.omegas, d.cutoffs, d.total_quanta_cap)?;
        let mut t = FockTensor::empty(basis.dims(), basis.omegas, basis.total_quanta_cap);
        if t.data.len() != d.coefficients.len() {
            return Err(Error::Dimension(format!(
                "expected {} coefficients, found {}",
                t.data.len(),
                d.coefficients.len()
            )));
        }
        t.data = d.coefficients;
        t.c0 = d.c0;
        t.tail_norm = d.tail_norm;
        Ok(t)
    }
}

impl Serialize for FockTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FockTensorDump::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FockTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let dump = FockTensorDump::deserialize(d)?;
        FockTensor::try_from(dump).map_err(serde::de::Error::custom)
    }
}

/// Covariance matrix of a subset of site modes, ordered `(x₁…x_M, p₁…p_M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceData {
    pub modes: Vec<usize>,
    #[serde(with = "matrix_rows")]
    pub sigma: DMatrix<f64>,
    pub symplectic_eigenvalues: Vec<f64>,
}

/// Symplectic eigenvalues (ascending) of a `2M × 2M` covariance matrix in
/// `(x…, p…)` ordering, from the spectrum of `σ^(1/2) iΩ σ^(1/2)`.
pub fn symplectic_eigenvalues(sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n2 = sigma.nrows();
    if !n2.is_multiple_of(2) || sigma.ncols() != n2 {
        return Err(Error::Dimension("covariance matrix must be 2M x 2M".into()));
    }
    let m = n2 / 2;
    let (vals, _) = hermitian_eigen(sigma);
    if vals[0] <= 0.0 {
        return Err(Error::InvalidSpec("covariance matrix is not positive definite".into()));
    }
    let root = symmetric_function(sigma, f64::sqrt);
    let omega = DMatrix::from_fn(n2, n2, |i, j| {
        if j == i + m {
            Complex64::new(0.0, 1.0)
        } else if i == j + m {
            Complex64::new(0.0, -1.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let rc = root.map(|x| Complex64::new(x, 0.0));
    let k = &rc * omega * &rc;
    let spec = hermitian_eigenvalues(&k);
    // spectrum is ±λ; the upper half holds the λ ≥ 0 values
    Ok(spec[m..].to_vec())
}

pub fn covariance_reduced(a: &PotentialMatrix, subset: &[usize]) -> Result<CovarianceData> {
    let n = a.n_modes();
    if subset.is_empty() {
        return Err(Error::InvalidArgument("mode subset must be nonempty".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!("mode {bad} out of range for {n} modes")));
    }
    let inv = symmetric_function(&a.a, |x| 1.0 / x);
    let m = subset.len();
    let sigma = DMatrix::from_fn(2 * m, 2 * m, |i, j| match (i < m, j < m) {
        (true, true) => 0.5 * inv[(subset[i], subset[j])],
        (false, false) => 0.5 * a.a[(subset[i - m], subset[j - m])],
        _ => 0.0,
    });
    let symplectic_eigenvalues = symplectic_eigenvalues(&sigma)?;
    Ok(CovarianceData { modes: subset.to_vec(), sigma, symplectic_eigenvalues })
}

/// Von Neumann entropy (bits) of one symplectic mode with eigenvalue `λ`:
/// `(λ+½)log₂(λ+½) − (λ−½)log₂(λ−½)`.
pub fn entropy_from_lambda(lambda: f64) -> f64 {
    let plus = lambda + 0.5;
    let minus = lambda - 0.5;
    let t = |x: f64| if x > 0.0 { x * x.log2() } else { 0.0 };
    (t(plus) - t(minus)).max(0.0)
}

/// Entropy of the Gaussian state described by `cov`.
pub fn gaussian_entropy(cov: &CovarianceData) -> f64 {
    cov.symplectic_eigenvalues.iter().map(|&l| entropy_from_lambda(l)).sum()
}

/// Logarithmic negativity (base 2) across the split that partially transposes
/// the modes in `transposed` (site labels, each present in `cov.modes`).
pub fn gaussian_log_negativity(cov: &CovarianceData, transposed: &[usize]) -> Result<f64> {
    let m = cov.modes.len();
    let mut sign = vec![1.0; 2 * m];
    for t in transposed {
        let pos = cov.modes.iter().position(|x| x == t).ok_or_else(|| Error::UnknownLabel(format!("mode {t}")))?;
        sign[m + pos] = -1.0;
    }
    let flipped = DMatrix::from_fn(2 * m, 2 * m, |i, j| sign[i] * sign[j] * cov.sigma[(i, j)]);
    let nus = symplectic_eigenvalues(&flipped)?;
    Ok(nus.iter().map(|&nu| (-(2.0 * nu).log2()).max(0.0)).sum())
}

/// Normalized oscillator eigenfunctions `φ₀(x; ω) … φ_{n_max}(x; ω)` by the
/// upward recurrence `φ_{n+1} = √(2/(n+1)) ξ φₙ − √(n/(n+1)) φ_{n−1}`, `ξ = √ω x`.
pub fn hermite_functions(n_max: usize, omega: f64, x: f64) -> Vec<f64> {
    let xi = omega.sqrt() * x;
    let mut out = Vec::with_capacity(n_max + 1);
    out.push((omega / std::f64::consts::PI).powf(0.25) * (-0.5 * xi * xi).exp());
    if n_max >= 1 {
        out.push(2f64.sqrt() * xi * out[0]);
    }
    for n in 1..n_max {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * xi * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{chain_normal_modes, ChainSpec};

    fn chain_a(n: usize) -> PotentialMatrix {
        potential_matrix(&chain_normal_modes(&ChainSpec::new(n).unwrap()))
    }

    fn scalar_a(nu: f64) -> PotentialMatrix {
        PotentialMatrix { a: DMatrix::from_element(1, 1, nu) }
    }

    #[test]
    fn potential_matrix_examples() {
        let modes = NormalModeData {
            frequencies: vec![1.0, 1.0, 1.0],
            mode_matrix: chain_normal_modes(&ChainSpec::new(3).unwrap()).mode_matrix,
        };
        assert!((potential_matrix(&modes).a - DMatrix::identity(3, 3)).amax() < 1e-14);

        let a = chain_a(2);
        let s = 3f64.sqrt();
        let want = DMatrix::from_row_slice(2, 2, &[(1.0 + s) / 2.0, (1.0 - s) / 2.0, (1.0 - s) / 2.0, (1.0 + s) / 2.0]);
        assert!((a.a.clone() - want).amax() < 1e-14);
        let ev = hermitian_eigenvalues(&a.a);
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - s).abs() < 1e-12);
    }

    #[test]
    fn squeeze_matrix_scalar_cases() {
        let b = LocalBasis::new(vec![1.0], 4).unwrap();
        assert!(squeeze_matrix(&scalar_a(1.0), &b).unwrap().r[(0, 0)].abs() < 1e-15);
        let b = LocalBasis::new(vec![3.0], 4).unwrap();
        assert!((squeeze_matrix(&scalar_a(1.0), &b).unwrap().r[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn squeeze_matrix_matches_unsymmetrized_formula() {
        let a = chain_a(4);
        let omegas = vec![1.3, 0.7, 0.9, 1.6];
        let b = LocalBasis::new(omegas.clone(), 3).unwrap();
        let r = squeeze_matrix(&a, &b).unwrap().r;
        let w = DMatrix::from_diagonal(&DVector::from_vec(omegas.clone()));
        let wm = DMatrix::from_diagonal(&DVector::from_iterator(4, omegas.iter().map(|x| x.powf(-0.5))));
        let wp = DMatrix::from_diagonal(&DVector::from_iterator(4, omegas.iter().map(|x| x.sqrt())));
        let direct = &wm * (&w - &a.a) * (&w + &a.a).try_inverse().unwrap() * &wp;
        assert!((r.clone() - direct).amax() < 1e-12);
        assert!((r.clone() - r.transpose()).amax() < 1e-12);
    }

    #[test]
    fn matched_two_site_squeeze_has_no_diagonal() {
        let w = 3f64.powf(0.25);
        let b = LocalBasis::new(vec![w, w], 10).unwrap();
        let a = chain_a(2);
        let r = squeeze_matrix(&a, &b).unwrap();
        assert!(r.r[(0, 0)].abs() < 1e-12 && r.r[(1, 1)].abs() < 1e-12);
        let t = ground_state_tensor(&a, &b).unwrap();
        assert!(t.get(&[2, 0]).abs() < 1e-12);
        assert!(t.get(&[3, 1]).abs() < 1e-12);
        // pure two-mode squeezing: c(n,n) geometric, everything else zero
        let ratio = t.get(&[1, 1]) / t.get(&[0, 0]);
        for n1 in 0..=10 {
            for n2 in 0..=10 {
                let c = t.get(&[n1, n2]);
                if n1 == n2 {
                    let want = t.get(&[0, 0]) * ratio.powi(n1 as i32);
                    assert!((c - want).abs() < 1e-14);
                } else {
                    assert!(c.abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn vacuum_amplitude_examples() {
        let b = LocalBasis::new(vec![1.0], 4).unwrap();
        assert!((vacuum_amplitude(&scalar_a(1.0), &b).unwrap() - 1.0).abs() < 1e-15);
        let b = LocalBasis::new(vec![3.0], 4).unwrap();
        let c0 = vacuum_amplitude(&scalar_a(1.0), &b).unwrap();
        assert!((c0 - 2f64.sqrt() * 3f64.powf(0.25) / 2.0).abs() < 1e-14);
        assert!((c0 - 0.930605).abs() < 1e-6);
    }

    #[test]
    fn single_mode_first_step() {
        let b = LocalBasis::new(vec![3.0], 6).unwrap();
        let t = ground_state_tensor(&scalar_a(1.0), &b).unwrap();
        assert!((t.get(&[2]) - 0.5 * t.c0() / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(t.get(&[1]), 0.0);
    }

    #[test]
    fn three_site_odd_totals_vanish() {
        let a = chain_a(3);
        let b = LocalBasis::new(vec![1.1, 0.7, 1.4], 6).unwrap();
        let t = ground_state_tensor(&a, &b).unwrap();
        for n1 in 0..7 {
            for n2 in 0..7 {
                for n3 in 0..7 {
                    if (n1 + n2 + n3) % 2 == 1 {
                        assert_eq!(t.get(&[n1, n2, n3]), 0.0);
                    }
                }
            }
        }
        assert!(t.tail_norm() < 1e-4);
    }

    #[test]
    fn stored_len_is_half_box() {
        for dims in [vec![3], vec![4, 5], vec![3, 3, 3], vec![5, 2, 4, 3]] {
            let offsets = parity_offsets(&dims);
            let total: usize = dims.iter().product();
            let even = (0..total)
                .filter(|&f| {
                    let mut s = 0;
                    let mut r = f;
                    for d in dims.iter().rev() {
                        s += r % d;
                        r /= d;
                    }
                    s % 2 == 0
                })
                .count();
            assert_eq!(*offsets.last().unwrap(), even);
        }
    }

    #[test]
    fn total_quanta_cap_zeroes_high_entries() {
        let a = chain_a(3);
        let b = LocalBasis::with_cutoffs(vec![1.0; 3], vec![6; 3], Some(4)).unwrap();
        let t = ground_state_tensor(&a, &b).unwrap();
        assert_eq!(t.get(&[2, 2, 2]), 0.0);
        let full = ground_state_tensor(&a, &LocalBasis::new(vec![1.0; 3], 6).unwrap()).unwrap();
        assert!((t.get(&[2, 0, 2]) - full.get(&[2, 0, 2])).abs() < 1e-15);
    }

    #[test]
    fn tail_norm_decreases_with_cutoff() {
        let a = chain_a(3);
        let mut prev = 1.0;
        for cut in 2..10 {
            let t = ground_state_tensor(&a, &LocalBasis::new(vec![0.9, 1.2, 0.9], cut).unwrap()).unwrap();
            assert!(t.tail_norm() <= prev + 1e-15);
            prev = t.tail_norm();
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn escalation_reaches_tolerance() {
        let a = chain_a(3);
        let t = ground_state_tensor_auto(&a, &[0.4, 0.4, 0.4], Some(2), Escalation::default()).unwrap();
        assert!(t.is_converged(1e-6));
        assert!(t.cutoffs()[0] > 2);
    }

    #[test]
    fn dense_and_get_agree() {
        let a = chain_a(3);
        let t = ground_state_tensor(&a, &LocalBasis::with_cutoffs(vec![1.0, 0.8, 1.2], vec![3, 4, 2], None).unwrap())
            .unwrap();
        let dense = t.to_dense();
        let mut count = 0;
        for n1 in 0..4 {
            for n2 in 0..5 {
                for n3 in 0..3 {
                    assert_eq!(dense[t.flat_index(&[n1, n2, n3])], t.get(&[n1, n2, n3]));
                    count += 1;
                }
            }
        }
        assert_eq!(count, dense.len());
        assert!((dense.iter().map(|x| x * x).sum::<f64>() - t.norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip() {
        let a = chain_a(2);
        let t = ground_state_tensor(&a, &LocalBasis::new(vec![1.0, 1.0], 4).unwrap()).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: FockTensor = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn non_normalizable_rejected() {
        let r = SqueezeMatrix { r: DMatrix::from_element(1, 1, 1.2), omegas: vec![1.0] };
        let b = LocalBasis::new(vec![1.0], 4).unwrap();
        assert!(matches!(fock_expand(&r, 1.0, &b), Err(Error::NotNormalizable(_))));
    }

    #[test]
    fn two_site_lambda() {
        let cov = covariance_reduced(&chain_a(2), &[0]).unwrap();
        let lambda = cov.symplectic_eigenvalues[0];
        assert!((lambda - 0.51898).abs() < 1e-5);
        assert!((entropy_from_lambda(lambda) - 0.1362).abs() < 1e-4);
    }

    #[test]
    fn full_covariance_is_pure() {
        for n in 2..7 {
            let all: Vec<usize> = (0..n).collect();
            let cov = covariance_reduced(&chain_a(n), &all).unwrap();
            for l in &cov.symplectic_eigenvalues {
                assert!((l - 0.5).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hermite_functions_are_orthonormal() {
        let omega = 1.7;
        let h = 0.01;
        let n = 8;
        let mut gram = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut x = -10.0;
        while x <= 10.0 {
            let phi = hermite_functions(n, omega, x);
            for i in 0..=n {
                for j in 0..=n {
                    gram[(i, j)] += h * phi[i] * phi[j];
                }
            }
            x += h;
        }
        assert!((gram - DMatrix::identity(n + 1, n + 1)).amax() < 1e-10);
    }

    #[test]
    fn log_negativity_examples() {
        let vac = CovarianceData {
            modes: vec![0, 1],
            sigma: DMatrix::identity(4, 4) * 0.5,
            symplectic_eigenvalues: vec![0.5, 0.5],
        };
        assert!(gaussian_log_negativity(&vac, &[1]).unwrap().abs() < 1e-12);

        let cov = covariance_reduced(&chain_a(2), &[0, 1]).unwrap();
        assert!(gaussian_log_negativity(&cov, &[1]).unwrap() > 0.01);

        let cov = covariance_reduced(&chain_a(6), &[0, 5]).unwrap();
        assert!(gaussian_log_negativity(&cov, &[5]).unwrap() < 1e-8);
    }
}
