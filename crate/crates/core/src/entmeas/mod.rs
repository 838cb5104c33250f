//! Entanglement quantification.
//!
//! Pure states are scored by the base-2 entanglement entropy, two-qubit mixed
//! states by the Wootters formula, and general mixed states by a bracket of
//! convex-roof bounds (see [`eof`]).

use std::collections::HashSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{binary_entropy, entropy_bits, hermitian_eigen, hermitian_eigenvalues, schmidt_entropy};
use crate::Complex64;

pub mod eof;

pub use eof::{eof_bounds, eof_lower_bound, eof_upper_bound, EofBounds, EofSearch, UpperBound};

/// Subsystem label. Indices are zero-based; `Display` prints them one-based
/// (`m1`, `q2`, …) to match the command-line convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Mode(usize),
    Qubit(usize),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Mode(i) => write!(f, "m{}", i + 1),
            Label::Qubit(i) => write!(f, "q{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub label: Label,
    pub dim: usize,
}

impl Factor {
    pub fn mode(i: usize, dim: usize) -> Self {
        Self { label: Label::Mode(i), dim }
    }

    pub fn qubit(i: usize) -> Self {
        Self { label: Label::Qubit(i), dim: 2 }
    }
}

fn total_dim(factors: &[Factor]) -> usize {
    factors.iter().map(|f| f.dim).product()
}

fn check_unique(factors: &[Factor]) -> Result<()> {
    let mut seen = HashSet::new();
    for f in factors {
        if !seen.insert(f.label) {
            return Err(Error::InvalidArgument(format!("duplicate factor label {}", f.label)));
        }
        if f.dim == 0 {
            return Err(Error::Dimension(format!("factor {} has dimension 0", f.label)));
        }
    }
    Ok(())
}

/// For the factor order `order` (a permutation of the labels in `factors`),
/// returns `perm` with `perm[new_flat] = old_flat`, both row-major.
fn permutation(factors: &[Factor], order: &[Label]) -> Result<Vec<usize>> {
    if order.len() != factors.len() {
        return Err(Error::InvalidArgument("factor reordering must cover every factor".into()));
    }
    let n = factors.len();
    let mut old_strides = vec![1usize; n];
    for k in (0..n.saturating_sub(1)).rev() {
        old_strides[k] = old_strides[k + 1] * factors[k + 1].dim;
    }
    let mut src = Vec::with_capacity(n);
    for l in order {
        let pos = factors.iter().position(|f| f.label == *l).ok_or_else(|| Error::UnknownLabel(l.to_string()))?;
        src.push(pos);
    }
    let new_dims: Vec<usize> = src.iter().map(|&p| factors[p].dim).collect();
    let new_strides: Vec<usize> = src.iter().map(|&p| old_strides[p]).collect();
    let total = total_dim(factors);
    let mut perm = Vec::with_capacity(total);
    let mut idx = vec![0usize; n];
    let mut old = 0usize;
    for _ in 0..total {
        perm.push(old);
        for k in (0..n).rev() {
            idx[k] += 1;
            old += new_strides[k];
            if idx[k] < new_dims[k] {
                break;
            }
            old -= new_strides[k] * idx[k];
            idx[k] = 0;
        }
    }
    Ok(perm)
}

/// Disjoint, exhaustive two-sided partition of a state's factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BipartiteSplit {
    pub side_a: Vec<Label>,
    pub side_b: Vec<Label>,
}

impl BipartiteSplit {
    pub fn new(side_a: Vec<Label>, side_b: Vec<Label>) -> Self {
        Self { side_a, side_b }
    }

    /// Split between mode sets (zero-based indices).
    pub fn modes(a: &[usize], b: &[usize]) -> Self {
        Self::new(a.iter().map(|&i| Label::Mode(i)).collect(), b.iter().map(|&i| Label::Mode(i)).collect())
    }

    pub fn qubits(a: &[usize], b: &[usize]) -> Self {
        Self::new(a.iter().map(|&i| Label::Qubit(i)).collect(), b.iter().map(|&i| Label::Qubit(i)).collect())
    }

    pub fn validate(&self, factors: &[Factor]) -> Result<()> {
        if self.side_a.is_empty() || self.side_b.is_empty() {
            return Err(Error::InvalidArgument("both sides of a split must be nonempty".into()));
        }
        let mut seen = HashSet::new();
        for l in self.side_a.iter().chain(&self.side_b) {
            if !factors.iter().any(|f| f.label == *l) {
                return Err(Error::UnknownLabel(l.to_string()));
            }
            if !seen.insert(*l) {
                return Err(Error::InvalidArgument(format!("label {l} appears on both sides")));
            }
        }
        if seen.len() != factors.len() {
            return Err(Error::InvalidArgument("split does not cover every factor".into()));
        }
        Ok(())
    }

    fn order(&self) -> Vec<Label> {
        self.side_a.iter().chain(&self.side_b).copied().collect()
    }

    /// Dimensions of the two sides for the given factors.
    pub fn dims(&self, factors: &[Factor]) -> Result<(usize, usize)> {
        self.validate(factors)?;
        let dim_of = |ls: &[Label]| -> usize {
            ls.iter().map(|l| factors.iter().find(|f| f.label == *l).unwrap().dim).product()
        };
        Ok((dim_of(&self.side_a), dim_of(&self.side_b)))
    }
}

/// Normalized pure state over labeled factors (row-major amplitudes).
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    factors: Vec<Factor>,
    amps: DVector<Complex64>,
}

impl PureState {
    pub fn new(factors: Vec<Factor>, amps: Vec<Complex64>) -> Result<Self> {
        check_unique(&factors)?;
        if amps.len() != total_dim(&factors) {
            return Err(Error::Dimension(format!(
                "{} amplitudes for total dimension {}",
                amps.len(),
                total_dim(&factors)
            )));
        }
        let amps = DVector::from_vec(amps);
        let norm = amps.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("state norm is {norm}, expected 1")));
        }
        Ok(Self { factors, amps })
    }

    /// Normalizes a real amplitude vector and wraps it.
    pub fn from_real(factors: Vec<Factor>, amps: &[f64]) -> Result<Self> {
        let norm = amps.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("zero state".into()));
        }
        Self::new(factors, amps.iter().map(|&x| Complex64::new(x / norm, 0.0)).collect())
    }

    pub(crate) fn from_parts_unchecked(factors: Vec<Factor>, amps: DVector<Complex64>) -> Self {
        Self { factors, amps }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    /// Amplitudes arranged as a `d_A × d_B` matrix for the given split.
    pub fn bipartite_matrix(&self, split: &BipartiteSplit) -> Result<DMatrix<Complex64>> {
        let (da, db) = split.dims(&self.factors)?;
        let perm = permutation(&self.factors, &split.order())?;
        Ok(DMatrix::from_fn(da, db, |i, j| self.amps[perm[i * db + j]]))
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix { factors: self.factors.clone(), matrix: &self.amps * self.amps.adjoint() }
    }
}

/// Mixed state held as a purification: `ρ = A A†` with `A` a
/// `d_sys × d_env` amplitude matrix whose rows index the system factors.
#[derive(Debug, Clone, PartialEq)]
pub struct PurifiedState {
    factors: Vec<Factor>,
    amps: DMatrix<Complex64>,
}

impl PurifiedState {
    /// Requires `‖A‖_F = 1` to 10⁻⁸.
    pub fn new(factors: Vec<Factor>, amps: DMatrix<Complex64>) -> Result<Self> {
        check_unique(&factors)?;
        if amps.nrows() != total_dim(&factors) || amps.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "purification is {}x{}, factors give {} rows",
                amps.nrows(),
                amps.ncols(),
                total_dim(&factors)
            )));
        }
        let norm = amps.norm();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("state norm is {norm}, expected 1")));
        }
        Ok(Self { factors, amps })
    }

    /// Normalizes `amps`, returning the state and its squared norm.
    pub fn from_unnormalized(factors: Vec<Factor>, amps: DMatrix<Complex64>) -> Result<(Self, f64)> {
        let n2 = amps.norm_squared();
        if n2 == 0.0 {
            return Err(Error::NotNormalizable(0.0));
        }
        let state = Self::new(factors, amps / Complex64::new(n2.sqrt(), 0.0))?;
        Ok((state, n2))
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn amplitudes(&self) -> &DMatrix<Complex64> {
        &self.amps
    }

    pub fn env_dim(&self) -> usize {
        self.amps.ncols()
    }

    /// True when the environment is one-dimensional.
    pub fn is_pure(&self) -> bool {
        self.amps.ncols() == 1
    }

    /// The state itself when the environment is one-dimensional.
    pub fn to_pure(&self) -> Option<PureState> {
        self.is_pure().then(|| PureState::from_parts_unchecked(self.factors.clone(), self.amps.column(0).into_owned()))
    }

    pub fn density_matrix(&self) -> DensityMatrix {
        DensityMatrix::from_parts_unchecked(self.factors.clone(), &self.amps * self.amps.adjoint())
    }
}

impl From<PureState> for PurifiedState {
    fn from(psi: PureState) -> Self {
        let n = psi.amps.len();
        Self { factors: psi.factors, amps: DMatrix::from_column_slice(n, 1, psi.amps.as_slice()) }
    }
}

/// Mixed state over labeled factors.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    factors: Vec<Factor>,
    matrix: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity (10⁻¹⁰), unit trace (10⁻⁸) and positivity (−10⁻⁸).
    pub fn new(factors: Vec<Factor>, matrix: DMatrix<Complex64>) -> Result<Self> {
        check_unique(&factors)?;
        let d = total_dim(&factors);
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::Dimension(format!("matrix is {}x{}, factors give {d}", matrix.nrows(), matrix.ncols())));
        }
        let herm = (&matrix - matrix.adjoint()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        if herm > 1e-10 {
            return Err(Error::InvalidArgument(format!("matrix is not Hermitian (deviation {herm:.2e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!("trace is {tr}, expected 1")));
        }
        let min = hermitian_eigenvalues(&matrix)[0];
        if min < -1e-8 {
            return Err(Error::InvalidArgument(format!("negative eigenvalue {min:.2e}")));
        }
        Ok(Self { factors, matrix })
    }

    pub(crate) fn from_parts_unchecked(factors: Vec<Factor>, matrix: DMatrix<Complex64>) -> Self {
        Self { factors, matrix }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.factors.iter().map(|f| f.label).collect()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Traces out every factor not listed in `keep`. The kept factors retain
    /// their original relative order.
    pub fn partial_trace(&self, keep: &[Label]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(Error::InvalidArgument("keep set must be nonempty".into()));
        }
        for l in keep {
            if !self.factors.iter().any(|f| f.label == *l) {
                return Err(Error::UnknownLabel(l.to_string()));
            }
        }
        let kept: Vec<Factor> = self.factors.iter().filter(|f| keep.contains(&f.label)).copied().collect();
        let traced: Vec<Factor> = self.factors.iter().filter(|f| !keep.contains(&f.label)).copied().collect();
        let order: Vec<Label> = kept.iter().chain(&traced).map(|f| f.label).collect();
        let perm = permutation(&self.factors, &order)?;
        let dk = total_dim(&kept);
        let de = total_dim(&traced);
        let mut out = DMatrix::zeros(dk, dk);
        for i in 0..dk {
            for j in 0..dk {
                let mut acc = Complex64::new(0.0, 0.0);
                for e in 0..de {
                    acc += self.matrix[(perm[i * de + e], perm[j * de + e])];
                }
                out[(i, j)] = acc;
            }
        }
        Ok(DensityMatrix { factors: kept, matrix: out })
    }

    /// Matrix with rows/columns reordered so that side A is the slow index.
    pub fn bipartite_matrix(&self, split: &BipartiteSplit) -> Result<(DMatrix<Complex64>, usize, usize)> {
        let (da, db) = split.dims(&self.factors)?;
        let perm = permutation(&self.factors, &split.order())?;
        let d = da * db;
        Ok((DMatrix::from_fn(d, d, |i, j| self.matrix[(perm[i], perm[j])]), da, db))
    }

    /// Eigenvalues ascending and eigenvectors as columns.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<Complex64>) {
        hermitian_eigen(&self.matrix)
    }
}

/// Transposes the side-B indices of a matrix ordered `A ⊗ B`.
pub fn partial_transpose(m: &DMatrix<Complex64>, da: usize, db: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(da * db, da * db, |r, c| {
        let (i, k) = (r / db, r % db);
        let (j, l) = (c / db, c % db);
        m[(i * db + l, j * db + k)]
    })
}

/// Realignment `R(ρ)_{(ij),(kl)} = ρ_{(ik),(jl)}`, a `d_A² × d_B²` matrix.
pub fn realignment(m: &DMatrix<Complex64>, da: usize, db: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(da * da, db * db, |r, c| {
        let (i, j) = (r / da, r % da);
        let (k, l) = (c / db, c % db);
        m[(i * db + k, j * db + l)]
    })
}

/// `(‖ρ^Γ‖₁ − 1) / 2`.
pub fn negativity(rho: &DensityMatrix, split: &BipartiteSplit) -> Result<f64> {
    let (m, da, db) = rho.bipartite_matrix(split)?;
    let ev = hermitian_eigenvalues(&partial_transpose(&m, da, db));
    Ok(ev.iter().filter(|&&x| x < 0.0).map(|x| -x).sum())
}

pub fn log_negativity(rho: &DensityMatrix, split: &BipartiteSplit) -> Result<f64> {
    Ok((1.0 + 2.0 * negativity(rho, split)?).log2())
}

/// Base-2 entanglement entropy of a pure state across `split`.
pub fn entanglement_entropy(psi: &PureState, split: &BipartiteSplit) -> Result<f64> {
    let norm = psi.amps.norm();
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidArgument(format!("state norm is {norm}, expected 1")));
    }
    Ok(schmidt_entropy(&psi.bipartite_matrix(split)?))
}

/// Base-2 von Neumann entropy.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> f64 {
    entropy_bits(hermitian_eigenvalues(&rho.matrix))
}

fn require_two_qubits(rho: &DensityMatrix) -> Result<()> {
    if rho.factors.len() != 2 || rho.factors.iter().any(|f| f.dim != 2) {
        return Err(Error::Dimension("the Wootters formula needs exactly two qubit factors".into()));
    }
    Ok(())
}

/// Two-qubit concurrence `max(0, λ₁ − λ₂ − λ₃ − λ₄)`. The `λᵢ` are the
/// singular values of `τ = Wᵀ (σ_y ⊗ σ_y) W`, where the columns of `W` are the
/// subnormalized eigenvectors `√pₖ |eₖ⟩` of `ρ`; this equals the usual
/// spin-flip spectrum without taking square roots of round-off eigenvalues.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    require_two_qubits(rho)?;
    let (vals, vecs) = hermitian_eigen(&rho.matrix);
    let cols: Vec<usize> = (0..4).filter(|&k| vals[k] > 1e-14).collect();
    if cols.is_empty() {
        return Ok(0.0);
    }
    let w = DMatrix::from_fn(4, cols.len(), |i, k| vecs[(i, cols[k])] * vals[cols[k]].sqrt());
    // σ_y ⊗ σ_y is anti-diagonal with signs (−1, 1, 1, −1)
    let flip = [-1.0, 1.0, 1.0, -1.0];
    let yw = DMatrix::from_fn(4, cols.len(), |i, k| w[(3 - i, k)] * flip[i]);
    let tau = w.transpose() * yw;
    let mut lam: Vec<f64> = tau.singular_values().iter().copied().collect();
    lam.sort_by(|a, b| b.total_cmp(a));
    let rest: f64 = lam[1..].iter().sum();
    Ok((lam[0] - rest).max(0.0))
}

/// Entanglement of formation of a two-qubit state from its concurrence.
pub fn eof_from_concurrence(c: f64) -> f64 {
    let c = c.clamp(0.0, 1.0);
    binary_entropy(0.5 * (1.0 + (1.0 - c * c).max(0.0).sqrt()))
}

pub fn wootters_eof(rho: &DensityMatrix) -> Result<f64> {
    Ok(eof_from_concurrence(concurrence(rho)?))
}

/// Which functional produced an [`Estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Entanglement entropy of a pure state (exact).
    Entropy,
    /// Wootters formula for two qubits (exact).
    Wootters,
    /// Best convex-roof decomposition found (an upper bound).
    EofUpperBound,
    /// Negativity, a cheap entanglement monotone used as a tuning proxy.
    Negativity,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Entropy => "entropy",
            Method::Wootters => "wootters",
            Method::EofUpperBound => "eof-upper-bound",
            Method::Negativity => "negativity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub method: Method,
}

/// Entanglement of a mixed state: Wootters for two qubits, otherwise the
/// convex-roof upper bound.
pub fn mixed_estimate(rho: &DensityMatrix, split: &BipartiteSplit, cfg: &EofSearch) -> Result<Estimate> {
    split.validate(&rho.factors)?;
    if rho.factors.len() == 2 && rho.factors.iter().all(|f| f.dim == 2) {
        return Ok(Estimate { value: wootters_eof(rho)?, method: Method::Wootters });
    }
    let ub = eof_upper_bound(rho, split, cfg)?;
    Ok(Estimate { value: ub.value, method: Method::EofUpperBound })
}

/// Entanglement of a purified state, exact whenever the state is pure.
pub fn entanglement_estimate(state: &PurifiedState, split: &BipartiteSplit, cfg: &EofSearch) -> Result<Estimate> {
    match state.to_pure() {
        Some(psi) => Ok(Estimate { value: entanglement_entropy(&psi, split)?, method: Method::Entropy }),
        None => mixed_estimate(&state.density_matrix(), split, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn two_qubits() -> Vec<Factor> {
        vec![Factor::qubit(0), Factor::qubit(1)]
    }

    fn bell() -> PureState {
        let s = 0.5f64.sqrt();
        PureState::new(two_qubits(), vec![c(s), c(0.0), c(0.0), c(s)]).unwrap()
    }

    fn random_pure(factors: Vec<Factor>, rng: &mut ChaCha8Rng) -> PureState {
        let d = total_dim(&factors);
        let v: Vec<Complex64> =
            (0..d).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        PureState::new(factors, v.into_iter().map(|z| z / n).collect()).unwrap()
    }

    #[test]
    fn bell_entropy_and_trace() {
        let b = bell();
        let split = BipartiteSplit::qubits(&[0], &[1]);
        assert!((entanglement_entropy(&b, &split).unwrap() - 1.0).abs() < 1e-12);
        let r = b.density_matrix().partial_trace(&[Label::Qubit(0)]).unwrap();
        assert!((r.matrix()[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!(r.matrix()[(0, 1)].norm() < 1e-12);
        assert!((wootters_eof(&b.density_matrix()).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn product_state_has_zero_entropy() {
        let p = PureState::new(two_qubits(), vec![c(0.6), c(0.8), c(0.0), c(0.0)]).unwrap();
        assert!(entanglement_entropy(&p, &BipartiteSplit::qubits(&[0], &[1])).unwrap().abs() < 1e-12);
    }

    #[test]
    fn classical_mixture_is_separable() {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = c(0.5);
        m[(3, 3)] = c(0.5);
        let rho = DensityMatrix::new(two_qubits(), m).unwrap();
        assert!(wootters_eof(&rho).unwrap().abs() < 1e-12);
    }

    #[test]
    fn product_partial_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_pure(vec![Factor::mode(0, 3)], &mut rng).density_matrix();
        let b = random_pure(vec![Factor::mode(1, 2)], &mut rng).density_matrix();
        let joint =
            DensityMatrix::new(vec![Factor::mode(0, 3), Factor::mode(1, 2)], a.matrix().kronecker(b.matrix())).unwrap();
        let back = joint.partial_trace(&[Label::Mode(0)]).unwrap();
        assert!(max_abs(&(back.matrix() - a.matrix())) < 1e-12);
        let back_b = joint.partial_trace(&[Label::Mode(1)]).unwrap();
        assert!(max_abs(&(back_b.matrix() - b.matrix())) < 1e-12);
    }

    #[test]
    fn sequential_partial_traces_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = vec![Factor::mode(0, 2), Factor::mode(1, 3), Factor::mode(2, 2)];
        let rho = random_pure(f, &mut rng).density_matrix();
        let one = rho.partial_trace(&[Label::Mode(0), Label::Mode(2)]).unwrap();
        let two = one.partial_trace(&[Label::Mode(0)]).unwrap();
        let direct = rho.partial_trace(&[Label::Mode(0)]).unwrap();
        assert!(max_abs(&(two.matrix() - direct.matrix())) < 1e-12);
        assert!((direct.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_label_rejected() {
        let rho = bell().density_matrix();
        assert!(matches!(rho.partial_trace(&[Label::Mode(0)]), Err(Error::UnknownLabel(_))));
        let mut big = DMatrix::zeros(3, 3);
        big[(0, 0)] = c(1.0);
        let qutrit = DensityMatrix::new(vec![Factor::mode(0, 3)], big).unwrap();
        assert!(wootters_eof(&qutrit).is_err());
    }

    #[test]
    fn invalid_density_matrices_rejected() {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = c(0.7);
        assert!(DensityMatrix::new(two_qubits(), m.clone()).is_err());
        m[(3, 3)] = c(0.3);
        m[(0, 1)] = Complex64::new(0.0, 0.1);
        assert!(DensityMatrix::new(two_qubits(), m).is_err());
    }

    #[test]
    fn wootters_matches_entropy_on_pure_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let split = BipartiteSplit::qubits(&[0], &[1]);
        for _ in 0..100 {
            let p = random_pure(two_qubits(), &mut rng);
            let e = entanglement_entropy(&p, &split).unwrap();
            let w = wootters_eof(&p.density_matrix()).unwrap();
            assert!((e - w).abs() < 1e-8, "{e} vs {w}");
        }
    }

    #[test]
    fn entropy_is_side_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = vec![Factor::mode(0, 3), Factor::mode(1, 4), Factor::qubit(0)];
        for _ in 0..20 {
            let p = random_pure(f.clone(), &mut rng);
            let split = BipartiteSplit::new(vec![Label::Mode(1)], vec![Label::Qubit(0), Label::Mode(0)]);
            let rev = BipartiteSplit::new(split.side_b.clone(), split.side_a.clone());
            let ea = entanglement_entropy(&p, &split).unwrap();
            let eb = entanglement_entropy(&p, &rev).unwrap();
            assert!((ea - eb).abs() < 1e-10);
            let rho_a = p.density_matrix().partial_trace(&[Label::Mode(1)]).unwrap();
            assert!((von_neumann_entropy(&rho_a) - ea).abs() < 1e-10);
        }
    }

    #[test]
    fn partial_transpose_of_bell_has_negative_eigenvalue() {
        let rho = bell().density_matrix();
        let split = BipartiteSplit::qubits(&[0], &[1]);
        assert!((negativity(&rho, &split).unwrap() - 0.5).abs() < 1e-12);
        assert!((log_negativity(&rho, &split).unwrap() - 1.0).abs() < 1e-12);
    }
}
