//! Convex-roof bounds on the entanglement of formation.
//!
//! The upper bound minimizes `Σ pᵢ S(ψᵢ)` over pure-state decompositions
//! `|ψ̃ᵢ⟩ = Σₖ Uᵢₖ √λₖ |eₖ⟩` of the eigen-ensemble, with `U` a `K × r`
//! isometry. The search is conjugate-gradient descent on the unitary group
//! using the analytic gradient of the entropy. Any decomposition found is a
//! valid upper bound.
//!
//! The lower bound is the Chen–Albeverio–Fei bound built from the larger of
//! the partial-transpose and realignment trace norms. It is tight for
//! two-qubit states and conservative for larger local dimensions.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{partial_transpose, realignment, BipartiteSplit, DensityMatrix};
use crate::error::{Error, Result};
use crate::linalg::{binary_entropy, haar_unitary, hermitian_eigen, hermitian_eigenvalues, trace_norm};
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EofSearch {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the improvement over a 20-iteration window falls below this (bits).
    pub tol: f64,
    pub seed: u64,
    /// Eigenvalues of ρ below this are dropped before the search.
    pub rank_cutoff: f64,
    pub max_rank: usize,
}

impl Default for EofSearch {
    fn default() -> Self {
        Self { restarts: 32, max_iters: 2000, tol: 1e-7, seed: 0, rank_cutoff: 1e-12, max_rank: 48 }
    }
}

impl EofSearch {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub value: f64,
    pub restarts_used: usize,
    pub decomposition_size: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EofBounds {
    pub lower: f64,
    pub upper: f64,
    pub restarts_used: usize,
    pub best_decomposition_size: usize,
}

/// Eigen-ensemble `√λₖ |eₖ⟩` of a bipartite-ordered matrix, truncated at the
/// rank cutoff.
pub(crate) fn eigen_ensemble(m: &DMatrix<Complex64>, cutoff: f64) -> Vec<Vec<Complex64>> {
    let (vals, vecs) = hermitian_eigen(m);
    let mut out: Vec<Vec<Complex64>> = vals
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, &v)| v > cutoff)
        .map(|(k, &v)| vecs.column(k).iter().map(|z| z * v.sqrt()).collect())
        .collect();
    // renormalize the truncated ensemble to unit total weight
    let total: f64 = out.iter().flat_map(|v| v.iter()).map(|z| z.norm_sqr()).sum();
    if total > 0.0 {
        let s = total.sqrt().recip();
        for v in out.iter_mut() {
            for z in v.iter_mut() {
                *z *= s;
            }
        }
    }
    out
}

/// `‖v‖² · S(v/‖v‖)` for an unnormalized bipartite vector, computed from the
/// smaller side's Gram matrix.
pub(crate) fn weighted_entropy(v: &[Complex64], da: usize, db: usize) -> f64 {
    let small = da.min(db);
    let gram = if da <= db {
        DMatrix::from_fn(da, da, |i, j| (0..db).map(|k| v[i * db + k] * v[j * db + k].conj()).sum::<Complex64>())
    } else {
        DMatrix::from_fn(db, db, |i, j| (0..da).map(|k| v[k * db + i] * v[k * db + j].conj()).sum::<Complex64>())
    };
    let eig: Vec<f64> = if small == 2 {
        let a: f64 = gram[(0, 0)].re;
        let d = gram[(1, 1)].re;
        let b = gram[(0, 1)].norm_sqr();
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b).sqrt();
        vec![mean - disc, mean + disc]
    } else if small == 1 {
        return 0.0;
    } else {
        hermitian_eigenvalues(&gram)
    };
    let total: f64 = eig.iter().map(|x| x.max(0.0)).sum();
    if total <= 0.0 {
        return 0.0;
    }
    let s: f64 = eig.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
    (s + total * total.log2()).max(0.0)
}

/// Average entanglement of the decomposition `U · ensemble` (only the first
/// `ensemble.len()` columns of `U` are used).
pub(crate) fn decomposition_average(u: &DMatrix<Complex64>, ensemble: &[Vec<Complex64>], da: usize, db: usize) -> f64 {
    let d = da * db;
    let mut v = vec![Complex64::new(0.0, 0.0); d];
    let mut total = 0.0;
    for i in 0..u.nrows() {
        v.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (k, e) in ensemble.iter().enumerate() {
            let c = u[(i, k)];
            for (z, x) in v.iter_mut().zip(e) {
                *z += c * x;
            }
        }
        total += weighted_entropy(&v, da, db);
    }
    total
}

/// Iterations over which the improvement is measured for termination.
const WINDOW: usize = 20;

/// Decomposition rows `ψ̃ᵢ`, unnormalized, `d_A × d_B` row-major with `d_A ≤ d_B`.
struct Decomposition {
    w: DMatrix<Complex64>,
    da: usize,
    db: usize,
}

impl Decomposition {
    fn row_matrix(&self, w: &DMatrix<Complex64>, i: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.da, self.db, |a, b| w[(i, a * self.db + b)])
    }

    /// `Σ pᵢ S(ρᵢ)` in nats and, optionally, its gradient `Gᵢ = −(log ρᵢ) Ψᵢ`
    /// with respect to `ψ̃ᵢ*`.
    fn evaluate(&self, w: &DMatrix<Complex64>, grad: Option<&mut DMatrix<Complex64>>) -> f64 {
        let mut total = 0.0;
        let mut g = grad;
        for i in 0..w.nrows() {
            let psi = self.row_matrix(w, i);
            let rho = &psi * psi.adjoint();
            let (vals, vecs) = hermitian_eigen(&rho);
            let p: f64 = vals.iter().map(|x| x.max(0.0)).sum();
            if p <= 1e-300 {
                if let Some(g) = g.as_deref_mut() {
                    g.row_mut(i).fill(Complex64::default());
                }
                continue;
            }
            let s: f64 = vals.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
            total += s + p * p.ln();
            if let Some(g) = g.as_deref_mut() {
                let logs = vals.iter().map(|&x| Complex64::new(if x > 1e-300 { -(x / p).ln() } else { 0.0 }, 0.0));
                let l =
                    &vecs * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(self.da, logs)) * vecs.adjoint();
                let gi = l * &psi;
                for a in 0..self.da {
                    for b in 0..self.db {
                        g[(i, a * self.db + b)] = gi[(a, b)];
                    }
                }
            }
        }
        total.max(0.0)
    }

    /// Polak–Ribière conjugate gradient over `W → exp(−tD) W` with `D`
    /// skew-Hermitian, which keeps `W†W = ρ` fixed. Returns the value in bits.
    fn optimize(&mut self, cfg: &EofSearch) -> f64 {
        let k = self.w.nrows();
        let mut grad = DMatrix::zeros(k, self.w.ncols());
        let mut f = self.evaluate(&self.w, Some(&mut grad));
        let mut x_prev: Option<DMatrix<Complex64>> = None;
        let mut dir = DMatrix::<Complex64>::zeros(k, k);
        let mut t: f64 = 0.1;
        let mut history = vec![f];
        let tol = cfg.tol * std::f64::consts::LN_2;
        for _ in 0..cfg.max_iters {
            if f < 1e-15 {
                break;
            }
            let wg = &grad * self.w.adjoint();
            let x = (&wg - wg.adjoint()) * Complex64::new(0.5, 0.0);
            let xx = x.norm_squared();
            if xx < 1e-24 {
                break;
            }
            let gamma = match &x_prev {
                Some(xp) => (x.dotc(&(&x - xp)).re / xp.norm_squared()).max(0.0),
                None => 0.0,
            };
            dir = &x + &dir * Complex64::new(gamma, 0.0);
            // f decreases at rate 2 Re⟨X, D⟩ along the geodesic
            let mut slope = 2.0 * x.dotc(&dir).re;
            if slope <= 0.0 {
                dir = x.clone();
                slope = 2.0 * xx;
            }
            // exp(−tD) = Q exp(itΛ) Q† with iD = Q Λ Q†
            let (lam, q) = hermitian_eigen(&(&dir * Complex64::new(0.0, 1.0)));
            let step = |t: f64| {
                let ph = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    k,
                    lam.iter().map(|&l| Complex64::from_polar(1.0, t * l)),
                ));
                &q * ph * q.adjoint() * &self.w
            };
            let mut tt = (2.0 * t).min(10.0 / lam.iter().fold(1e-12f64, |m, l| m.max(l.abs())));
            let mut accepted = None;
            for _ in 0..40 {
                let cand = step(tt);
                if self.evaluate(&cand, None) <= f - 1e-4 * tt * slope {
                    accepted = Some(cand);
                    break;
                }
                tt *= 0.5;
            }
            let Some(cand) = accepted else { break };
            t = tt;
            self.w = cand;
            f = self.evaluate(&self.w, Some(&mut grad));
            x_prev = Some(x);
            history.push(f);
            if history.len() > WINDOW && history[history.len() - 1 - WINDOW] - f < tol.max(1e-3 * f) {
                break;
            }
        }
        f / std::f64::consts::LN_2
    }
}

/// Size of the random rotation applied to the eigen-ensemble start.
const START_JITTER: f64 = 0.05;

/// `exp(−εK)` for a random skew-Hermitian `K` with entries of order one.
fn near_identity(n: usize, eps: f64, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let (lam, q) = hermitian_eigen(&h);
    let ph = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        lam.iter().map(|&l| Complex64::from_polar(1.0, eps * l)),
    ));
    &q * ph * q.adjoint()
}

fn bipartite(rho: &DensityMatrix, split: &BipartiteSplit) -> Result<(DMatrix<Complex64>, usize, usize)> {
    rho.bipartite_matrix(split)
}

/// Smallest average entanglement found over pure-state decompositions of
/// sizes `r … 2r`, with `r` the numerical rank of `rho`. Restart 0 starts
/// near the eigen-ensemble, the others from Haar-random mixtures of it.
/// Restarts run in parallel and are deterministic for a given seed.
pub fn eof_upper_bound(rho: &DensityMatrix, split: &BipartiteSplit, cfg: &EofSearch) -> Result<UpperBound> {
    // orient so that side A is the smaller one
    let (m, da, db) = {
        let (m, da, db) = bipartite(rho, split)?;
        if da <= db {
            (m, da, db)
        } else {
            let swapped = BipartiteSplit::new(split.side_b.clone(), split.side_a.clone());
            bipartite(rho, &swapped)?
        }
    };
    let ensemble = eigen_ensemble(&m, cfg.rank_cutoff);
    let r = ensemble.len();
    if r == 0 {
        return Err(Error::InvalidArgument("density matrix has no eigenvalue above the rank cutoff".into()));
    }
    if r > cfg.max_rank {
        return Err(Error::MemoryGuard { dim: r, cap: cfg.max_rank });
    }
    if r == 1 {
        return Ok(UpperBound {
            value: weighted_entropy(&ensemble[0], da, db),
            restarts_used: 0,
            decomposition_size: 1,
            rank: 1,
        });
    }
    let d = da * db;
    let base = DMatrix::from_fn(r, d, |i, j| ensemble[i][j]);
    let restarts = cfg.restarts.max(1);
    let results: Vec<(f64, usize)> = (0..restarts)
        .into_par_iter()
        .map(|run| {
            let size = if restarts == 1 { r } else { r + (run * r) / (restarts - 1) };
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(run as u64);
            let w = if run == 0 {
                // a small rotation moves the start off symmetric saddle points
                near_identity(r, START_JITTER, &mut rng) * &base
            } else {
                let u = haar_unitary(size, &mut rng);
                u.columns(0, r) * &base
            };
            let mut dec = Decomposition { w, da, db };
            (dec.optimize(cfg), size)
        })
        .collect();
    let (value, size) = results.iter().copied().fold((f64::INFINITY, 0), |best, x| if x.0 < best.0 { x } else { best });
    Ok(UpperBound { value, restarts_used: restarts, decomposition_size: size, rank: r })
}

/// `H₂(γ(Λ)) + (1 − γ) log₂(m − 1)` and its linear continuation, the
/// function whose convex hull bounds the entanglement of formation from below.
fn caf_r(lambda: f64, m: usize) -> f64 {
    let mf = m as f64;
    let knee = 4.0 * (mf - 1.0) / mf;
    if lambda <= 1.0 {
        0.0
    } else if lambda <= knee || m == 2 {
        let l = lambda.min(mf);
        let gamma = ((l.sqrt() + ((mf - 1.0) * (mf - l)).max(0.0).sqrt()).powi(2) / (mf * mf)).min(1.0);
        binary_entropy(gamma) + (1.0 - gamma) * (mf - 1.0).log2()
    } else {
        (lambda.min(mf) - mf) * mf * (mf - 1.0).log2() / (mf - 2.0) + mf.log2()
    }
}

/// Lower convex envelope of `caf_r` on `[1, m]` evaluated at `lambda`.
fn caf_hull(lambda: f64, m: usize) -> f64 {
    if lambda <= 1.0 {
        return 0.0;
    }
    if m == 2 {
        // H₂(γ) with Λ = 1 + C is the convex two-qubit curve itself
        return caf_r(lambda, 2);
    }
    let mf = m as f64;
    let n = 4001;
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let x = 1.0 + (mf - 1.0) * k as f64 / (n - 1) as f64;
            (x, caf_r(x, m))
        })
        .collect();
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let x = lambda.min(mf);
    for w in hull.windows(2) {
        if x <= w[1].0 {
            let t = (x - w[0].0) / (w[1].0 - w[0].0);
            return (w[0].1 + t * (w[1].1 - w[0].1)).max(0.0);
        }
    }
    hull.last().unwrap().1
}

/// Certified lower bound from `Λ = max(‖ρ^Γ‖₁, ‖R(ρ)‖₁)`; zero for states
/// passing both the PPT and realignment tests.
pub fn eof_lower_bound(rho: &DensityMatrix, split: &BipartiteSplit) -> Result<f64> {
    let (m, da, db) = bipartite(rho, split)?;
    let pt = hermitian_eigenvalues(&partial_transpose(&m, da, db)).iter().map(|x| x.abs()).sum::<f64>();
    let re = trace_norm(&realignment(&m, da, db));
    let lambda = pt.max(re);
    Ok(caf_hull(lambda, da.min(db)))
}

pub fn eof_bounds(rho: &DensityMatrix, split: &BipartiteSplit, cfg: &EofSearch) -> Result<EofBounds> {
    let up = eof_upper_bound(rho, split, cfg)?;
    let lower = eof_lower_bound(rho, split)?;
    Ok(EofBounds {
        lower,
        upper: up.value,
        restarts_used: up.restarts_used,
        best_decomposition_size: up.decomposition_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entmeas::{entanglement_entropy, wootters_eof, Factor, PureState};
    use crate::linalg::schmidt_entropy;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_vec(d: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        let v: Vec<Complex64> =
            (0..d).map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|z| z / n).collect()
    }

    fn qubits() -> Vec<Factor> {
        vec![Factor::qubit(0), Factor::qubit(1)]
    }

    #[test]
    fn weighted_entropy_matches_svd_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (da, db) in [(2, 2), (2, 3), (3, 2), (4, 4), (3, 5)] {
            let v = random_vec(da * db, &mut rng);
            let scaled: Vec<Complex64> = v.iter().map(|z| z * 0.5).collect();
            let m = DMatrix::from_fn(da, db, |i, j| v[i * db + j]);
            let want = 0.25 * schmidt_entropy(&m);
            assert!((weighted_entropy(&scaled, da, db) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pure_input_gives_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let psi = PureState::new(qubits(), random_vec(4, &mut rng)).unwrap();
        let split = BipartiteSplit::qubits(&[0], &[1]);
        let up = eof_upper_bound(&psi.density_matrix(), &split, &EofSearch::default()).unwrap();
        assert!((up.value - entanglement_entropy(&psi, &split).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn bell_lower_bound_is_one() {
        let s = 0.5f64.sqrt();
        let z = Complex64::default();
        let psi = PureState::new(qubits(), vec![Complex64::new(s, 0.0), z, z, Complex64::new(s, 0.0)]).unwrap();
        let lb = eof_lower_bound(&psi.density_matrix(), &BipartiteSplit::qubits(&[0], &[1])).unwrap();
        assert!((lb - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_two_qubit_bracket() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let split = BipartiteSplit::qubits(&[0], &[1]);
        let cfg = EofSearch { restarts: 8, ..EofSearch::with_seed(5) };
        for _ in 0..10 {
            let mut m = DMatrix::zeros(4, 4);
            let weights = [0.6, 0.3, 0.1];
            for w in weights {
                let v = nalgebra::DVector::from_vec(random_vec(4, &mut rng));
                m += &v * v.adjoint() * Complex64::new(w, 0.0);
            }
            let rho = DensityMatrix::new(qubits(), m).unwrap();
            let w = wootters_eof(&rho).unwrap();
            let b = eof_bounds(&rho, &split, &cfg).unwrap();
            assert!(b.lower <= w + 1e-8, "lower {} > wootters {w}", b.lower);
            assert!(b.upper >= w - 1e-9 && b.upper <= w + 1e-3, "upper {} vs {w}", b.upper);
        }
    }

    #[test]
    fn hull_is_monotone_and_bounded() {
        for m in [2usize, 3, 4, 5] {
            let mut prev = 0.0;
            for k in 0..=100 {
                let l = 1.0 + (m as f64 - 1.0) * k as f64 / 100.0;
                let v = caf_hull(l, m);
                assert!(v >= prev - 1e-12 && v <= (m as f64).log2() + 1e-9);
                prev = v;
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (da, db, k) = (2, 3, 4);
        let w =
            DMatrix::from_fn(k, da * db, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                / Complex64::new(3.0, 0.0);
        let dec = Decomposition { w: w.clone(), da, db };
        let h = DMatrix::from_fn(k, k, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        let d = (&h - h.adjoint()) * Complex64::new(0.5, 0.0);
        {
            let mut g = DMatrix::zeros(k, da * db);
            dec.evaluate(&w, Some(&mut g));
            let wg = &g * w.adjoint();
            let x = (&wg - wg.adjoint()) * Complex64::new(0.5, 0.0);
            let analytic = -2.0 * x.dotc(&d).re;
            let eps = 1e-6;
            let along = |t: f64| {
                let (lam, q) = hermitian_eigen(&(&d * Complex64::new(0.0, 1.0)));
                let ph = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    k,
                    lam.iter().map(|&l| Complex64::from_polar(1.0, t * l)),
                ));
                dec.evaluate(&(&q * ph * q.adjoint() * &w), None)
            };
            let numeric = (along(eps) - along(-eps)) / (2.0 * eps);
            assert!((analytic - numeric).abs() < 1e-6 * (1.0 + numeric.abs()), "{analytic} vs {numeric}");
        }
    }

    #[test]
    fn rank_guard() {
        let d = 49;
        let m = DMatrix::<Complex64>::identity(d, d) / Complex64::new(d as f64, 0.0);
        let rho = DensityMatrix::new(vec![Factor::mode(0, 7), Factor::mode(1, 7)], m).unwrap();
        let err = eof_upper_bound(&rho, &BipartiteSplit::modes(&[0], &[1]), &EofSearch::default());
        assert!(matches!(err, Err(Error::MemoryGuard { .. })));
    }
}
