//! Brute-force cross-checks: position-space quadrature of Fock coefficients,
//! random decomposition sampling and the dense harvesting unitary.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entmeas::eof::{decomposition_average, eigen_ensemble};
use crate::entmeas::{BipartiteSplit, DensityMatrix};
use crate::gaussian::{hermite_functions, PotentialMatrix};
use crate::linalg::{haar_unitary, hermitian_eigen, hermitian_eigenvalues};
use crate::{Complex64, Error, Result};

/// Per-axis quadrature grid `[−half_width, half_width] / √ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub half_width: f64,
    /// Points per axis, of the form `4m + 1`; the size-dependent default when absent.
    pub points: Option<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { half_width: 6.0, points: None }
    }
}

impl GridSpec {
    pub fn points_for(&self, n_modes: usize) -> usize {
        self.points.unwrap_or(if n_modes <= 2 { 241 } else { 121 })
    }
}

/// Quadrature values with a step-halving error estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapTable {
    pub n_max: usize,
    pub n_modes: usize,
    /// Row-major over `(n₁…n_N)`, each in `0..=n_max`.
    pub values: Vec<f64>,
    /// `|I_h − I_{2h}|` per entry.
    pub errors: Vec<f64>,
}

impl OverlapTable {
    fn index(&self, n: &[usize]) -> Option<usize> {
        if n.len() != self.n_modes || n.iter().any(|&k| k > self.n_max) {
            return None;
        }
        Some(n.iter().fold(0, |acc, &k| acc * (self.n_max + 1) + k))
    }

    pub fn get(&self, n: &[usize]) -> Option<f64> {
        self.index(n).map(|i| self.values[i])
    }

    pub fn error(&self, n: &[usize]) -> Option<f64> {
        self.index(n).map(|i| self.errors[i])
    }

    pub fn max_error(&self) -> f64 {
        self.errors.iter().fold(0.0, |m, &e| m.max(e))
    }
}

/// Single coefficient with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

fn simpson_weights(points: usize, h: f64) -> Vec<f64> {
    (0..points)
        .map(|i| {
            let w = if i == 0 || i == points - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

/// Contracts axis `axis` of a row-major array of `shape` with `table[n][x]`.
fn contract(data: &[f64], shape: &[usize], axis: usize, table: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    let rows = table.len();
    let mut out = vec![0.0; outer * rows * inner];
    for o in 0..outer {
        for (r, t) in table.iter().enumerate() {
            let dst = &mut out[(o * rows + r) * inner..(o * rows + r + 1) * inner];
            for (x, &w) in t.iter().enumerate().take(len) {
                let src = &data[(o * len + x) * inner..(o * len + x + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = rows;
    (out, new_shape)
}

fn quadrature(a: &PotentialMatrix, omegas: &[f64], n_max: usize, points: usize, half_width: f64) -> Vec<f64> {
    let n = omegas.len();
    let axes: Vec<Vec<f64>> = omegas
        .iter()
        .map(|&w| {
            let l = half_width / w.sqrt();
            (0..points).map(|i| -l + 2.0 * l * i as f64 / (points - 1) as f64).collect()
        })
        .collect();
    let det: f64 = hermitian_eigenvalues(&a.a).iter().product();
    let norm = (det / std::f64::consts::PI.powi(n as i32)).powf(0.25);
    let total = points.pow(n as u32);
    let mut psi = vec![0.0; total];
    let mut x = vec![0.0; n];
    for (flat, p) in psi.iter_mut().enumerate() {
        let mut rem = flat;
        for k in (0..n).rev() {
            x[k] = axes[k][rem % points];
            rem /= points;
        }
        let mut q = 0.0;
        for i in 0..n {
            for j in 0..n {
                q += x[i] * a.a[(i, j)] * x[j];
            }
        }
        *p = norm * (-0.5 * q).exp();
    }
    let mut data = psi;
    let mut shape = vec![points; n];
    for k in 0..n {
        let h = axes[k][1] - axes[k][0];
        let weights = simpson_weights(points, h);
        let mut table = vec![vec![0.0; points]; n_max + 1];
        for (xi, (&xv, &w)) in axes[k].iter().zip(&weights).enumerate() {
            for (m, phi) in hermite_functions(n_max, omegas[k], xv).into_iter().enumerate() {
                table[m][xi] = phi * w;
            }
        }
        (data, shape) = contract(&data, &shape, k, &table);
    }
    data
}

/// All coefficients `⟨n|vac⟩` with every `nᵢ ≤ n_max` by tensor-product Simpson
/// quadrature of `φ_{n₁}(x₁;ω₁)…φ_{n_N}(x_N;ω_N) ψ(x)`.
pub fn grid_overlaps(a: &PotentialMatrix, omegas: &[f64], n_max: usize, grid: &GridSpec) -> Result<OverlapTable> {
    let n = a.n_modes();
    if omegas.len() != n {
        return Err(Error::Dimension(format!("{n} modes but {} local frequencies", omegas.len())));
    }
    if n == 0 || n > 3 {
        return Err(Error::InvalidArgument(format!("quadrature supports 1 to 3 modes, got {n}")));
    }
    if omegas.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidArgument("local frequencies must be positive".into()));
    }
    let points = grid.points_for(n);
    if points < 9 || points % 4 != 1 {
        return Err(Error::InvalidArgument(format!("grid points must be 4m + 1 and at least 9, got {points}")));
    }
    let fine = quadrature(a, omegas, n_max, points, grid.half_width);
    let coarse = quadrature(a, omegas, n_max, points.div_ceil(2), grid.half_width);
    let errors = fine.iter().zip(&coarse).map(|(f, c)| (f - c).abs()).collect();
    Ok(OverlapTable { n_max, n_modes: n, values: fine, errors })
}

/// One coefficient `⟨n|vac⟩` by quadrature.
pub fn grid_overlap(a: &PotentialMatrix, omegas: &[f64], n: &[usize], grid: &GridSpec) -> Result<Quadrature> {
    let n_max = n.iter().copied().max().unwrap_or(0);
    let t = grid_overlaps(a, omegas, n_max, grid)?;
    let i = t.index(n).ok_or_else(|| Error::Dimension(format!("index {n:?} does not match {} modes", t.n_modes)))?;
    Ok(Quadrature { value: t.values[i], error: t.errors[i] })
}

/// Smallest average entanglement (bits) over `samples` random decompositions
/// `U · eigen-ensemble`, with `U` the first `r` columns of a Haar unitary of
/// size `r … 2r`.
pub fn random_decomposition(rho: &DensityMatrix, split: &BipartiteSplit, samples: usize, seed: u64) -> Result<f64> {
    let (m, da, db) = rho.bipartite_matrix(split)?;
    let ensemble = eigen_ensemble(&m, 1e-12);
    let r = ensemble.len();
    if r == 0 {
        return Err(Error::InvalidArgument("density matrix has no eigenvalue above the rank cutoff".into()));
    }
    let identity = DMatrix::<Complex64>::identity(r, r);
    let mut best = decomposition_average(&identity, &ensemble, da, db);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in 0..samples {
        let size = r + s % (r + 1);
        let u = haar_unitary(size, &mut rng);
        best = best.min(decomposition_average(&u, &ensemble, da, db));
    }
    Ok(best)
}

/// Dense `exp[i(π/2)(σa† + σ†a)]` on `mode(dim) ⊗ qubit`, by diagonalizing
/// the generator. Qubit index 0 is `|g⟩`.
pub fn harvest_unitary(dim: usize) -> DMatrix<Complex64> {
    let d = 2 * dim;
    let mut h = DMatrix::<f64>::zeros(d, d);
    for n in 1..dim {
        let g = 2 * n;
        let e = 2 * (n - 1) + 1;
        let v = std::f64::consts::FRAC_PI_2 * (n as f64).sqrt();
        h[(g, e)] = v;
        h[(e, g)] = v;
    }
    let (vals, vecs) = hermitian_eigen(&h);
    let phases = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        d,
        vals.iter().map(|&l| Complex64::new(0.0, l).exp()),
    ));
    let v = vecs.map(|x| Complex64::new(x, 0.0));
    &v * phases * v.adjoint()
}

/// Outcome of one built-in cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn outcome(name: &str, measured: f64, tol: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed: measured <= tol,
        detail: format!("max deviation {measured:.3e} (tolerance {tol:.0e})"),
    }
}

/// Runs the oracle cross-validations used by the command-line self check.
pub fn self_checks() -> Result<Vec<CheckOutcome>> {
    use crate::entmeas::{wootters_eof, Factor, PureState};
    use crate::gaussian::{ground_state_tensor, potential_matrix, LocalBasis};
    use crate::harvest::{harvest_apply, HarvestAssignment};
    use crate::model::{normal_modes, SystemKind};
    use crate::tune::matched_frequencies;

    let mut out = Vec::new();
    for n in [2usize, 3] {
        let modes = normal_modes(SystemKind::Chain, n)?;
        let a = potential_matrix(&modes);
        let omegas = matched_frequencies(SystemKind::Chain, &modes, 0.86 * modes.frequencies[0])?.omegas;
        let tensor = ground_state_tensor(&a, &LocalBasis::new(omegas.clone(), 6)?)?;
        let table = grid_overlaps(&a, &omegas, 6, &GridSpec::default())?;
        let mut dev = 0.0f64;
        for (flat, &q) in table.values.iter().enumerate() {
            let mut idx = vec![0; n];
            let mut rem = flat;
            for k in (0..n).rev() {
                idx[k] = rem % 7;
                rem /= 7;
            }
            if idx.iter().sum::<usize>() <= 6 {
                dev = dev.max((tensor.get(&idx) - q).abs());
            }
        }
        out.push(outcome(&format!("fock expansion vs quadrature, N={n}"), dev, 1e-8));
    }

    let dim = 6;
    let u = harvest_unitary(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let amps: Vec<Complex64> = haar_unitary(dim, &mut rng).column(0).iter().copied().collect();
    let psi = PureState::new(vec![Factor::mode(0, dim)], amps.clone())?;
    let fast = harvest_apply(&psi, &HarvestAssignment::on_modes(&[0])?)?;
    let mut embedded = nalgebra::DVector::zeros(2 * dim);
    for (k, z) in amps.iter().enumerate() {
        embedded[2 * k] = *z;
    }
    let dense = &u * embedded;
    let dev = fast.amplitudes().iter().zip(dense.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    out.push(outcome("blockwise harvest vs dense unitary", dev, 1e-12));

    let qubits = vec![Factor::qubit(0), Factor::qubit(1)];
    let mut worst = 0.0f64;
    for s in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + s);
        let g = haar_unitary(4, &mut rng);
        let p = [0.55, 0.3, 0.15];
        let m = DMatrix::from_fn(4, 4, |i, j| (0..3).map(|k| g[(i, k)] * g[(j, k)].conj() * p[k]).sum::<Complex64>());
        let rho = DensityMatrix::new(qubits.clone(), m)?;
        let w = wootters_eof(&rho)?;
        let sampled = random_decomposition(&rho, &BipartiteSplit::qubits(&[0], &[1]), 2000, s)?;
        worst = worst.max(w - sampled);
    }
    out.push(outcome("sampled decompositions never beat Wootters", worst.max(0.0), 1e-9));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entmeas::{entanglement_entropy, wootters_eof, Factor, PureState};
    use crate::gaussian::{ground_state_tensor, potential_matrix, LocalBasis};
    use crate::model::{normal_modes, SystemKind};

    #[test]
    fn single_mode_vacuum_is_one() {
        let a = PotentialMatrix { a: DMatrix::from_element(1, 1, 1.3) };
        let q = grid_overlap(&a, &[1.3], &[0], &GridSpec::default()).unwrap();
        assert!((q.value - 1.0).abs() < 1e-8, "{q:?}");
    }

    #[test]
    fn matched_pair_is_diagonal() {
        let modes = normal_modes(SystemKind::Chain, 2).unwrap();
        let a = potential_matrix(&modes);
        let w = 3f64.powf(0.25);
        let t = grid_overlaps(&a, &[w, w], 6, &GridSpec::default()).unwrap();
        for i in 0..=6 {
            for j in 0..=6 {
                if i != j {
                    assert!(t.get(&[i, j]).unwrap().abs() < 1e-8, "({i},{j})");
                }
            }
        }
    }

    #[test]
    fn quadrature_matches_recursion_n2() {
        let modes = normal_modes(SystemKind::Chain, 2).unwrap();
        let a = potential_matrix(&modes);
        let omegas = [0.9, 1.4];
        let tensor = ground_state_tensor(&a, &LocalBasis::new(omegas.to_vec(), 6).unwrap()).unwrap();
        let t = grid_overlaps(&a, &omegas, 6, &GridSpec::default()).unwrap();
        for i in 0..=6 {
            for j in 0..=6 - i {
                assert!((tensor.get(&[i, j]) - t.get(&[i, j]).unwrap()).abs() < 1e-8);
            }
        }
        assert!(t.max_error() < 1e-8);
    }

    #[test]
    fn step_halving_errors_shrink() {
        let a = PotentialMatrix { a: DMatrix::from_row_slice(2, 2, &[1.5, -0.4, -0.4, 1.1]) };
        let err = |p: usize| {
            grid_overlap(&a, &[1.0, 1.0], &[2, 2], &GridSpec { half_width: 6.0, points: Some(p) }).unwrap().error
        };
        let (e1, e2) = (err(17), err(33));
        assert!(e1 >= 3.0 * e2, "{e1} {e2}");
    }

    #[test]
    fn rejects_bad_grids() {
        let a = PotentialMatrix { a: DMatrix::identity(2, 2) };
        assert!(grid_overlap(&a, &[1.0, 1.0], &[0, 0], &GridSpec { half_width: 6.0, points: Some(20) }).is_err());
        let a4 = PotentialMatrix { a: DMatrix::identity(4, 4) };
        assert!(grid_overlap(&a4, &[1.0; 4], &[0; 4], &GridSpec::default()).is_err());
    }

    #[test]
    fn dense_harvest_unitary_is_unitary() {
        let u = harvest_unitary(5);
        let dev = crate::linalg::max_abs(&(&u * u.adjoint() - DMatrix::identity(10, 10)));
        assert!(dev < 1e-12);
        // |g,1⟩ → i|e,0⟩
        assert!((u[(1, 2)] - Complex64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn sampler_pure_state_gives_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let amps: Vec<Complex64> = haar_unitary(4, &mut rng).column(0).iter().copied().collect();
        let psi = PureState::new(vec![Factor::qubit(0), Factor::qubit(1)], amps).unwrap();
        let split = BipartiteSplit::qubits(&[0], &[1]);
        let s = entanglement_entropy(&psi, &split).unwrap();
        let r = random_decomposition(&psi.density_matrix(), &split, 50, 1).unwrap();
        assert!((r - s).abs() < 1e-10);
        assert!((wootters_eof(&psi.density_matrix()).unwrap() - s).abs() < 1e-8);
    }

    #[test]
    fn sampler_is_seeded() {
        let m = DMatrix::from_fn(4, 4, |i, j| Complex64::new(if i == j { 0.25 } else { 0.05 }, 0.0));
        let rho = DensityMatrix::new(vec![Factor::qubit(0), Factor::qubit(1)], m).unwrap();
        let split = BipartiteSplit::qubits(&[0], &[1]);
        let a = random_decomposition(&rho, &split, 100, 9).unwrap();
        let b = random_decomposition(&rho, &split, 100, 9).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn self_checks_pass() {
        for c in self_checks().unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
