//! Harvesting: swap-type coupling `U_v = exp[i(π/2)(σa† + σ†a)]` of ground-state
//! qubits to local modes, followed by tracing out the motion.
//!
//! `U_v` leaves each two-dimensional block `{|g,n⟩, |e,n−1⟩}` invariant and acts
//! on it as `exp(i(π/2)√n σ_x)`, so it is applied exactly block by block.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entmeas::{
    mixed_estimate, BipartiteSplit, DensityMatrix, EofSearch, Estimate, Factor, Label, PureState, PurifiedState,
};
use crate::{Complex64, Error, Result};

/// Qubit-to-mode couplings. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestAssignment {
    /// `(qubit, mode)` pairs.
    pub pairs: Vec<(usize, usize)>,
}

impl HarvestAssignment {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let a = Self { pairs };
        for (i, p) in a.pairs.iter().enumerate() {
            for q in &a.pairs[..i] {
                if p.0 == q.0 {
                    return Err(Error::InvalidArgument(format!("qubit {} is assigned twice", p.0 + 1)));
                }
                if p.1 == q.1 {
                    return Err(Error::InvalidArgument(format!("mode {} is assigned twice", p.1 + 1)));
                }
            }
        }
        if a.pairs.is_empty() {
            return Err(Error::InvalidArgument("harvest assignment is empty".into()));
        }
        Ok(a)
    }

    /// Qubit `i` on mode `modes[i]`.
    pub fn on_modes(modes: &[usize]) -> Result<Self> {
        Self::new(modes.iter().copied().enumerate().collect())
    }

    pub fn qubit_factors(&self) -> Vec<Factor> {
        self.pairs.iter().map(|&(q, _)| Factor::qubit(q)).collect()
    }

    fn check(&self, factors: &[Factor]) -> Result<Vec<usize>> {
        self.pairs
            .iter()
            .map(|&(_, m)| {
                let pos = factors
                    .iter()
                    .position(|f| f.label == Label::Mode(m))
                    .ok_or_else(|| Error::UnknownLabel(Label::Mode(m).to_string()))?;
                if factors[pos].dim < 3 {
                    return Err(Error::Dimension(format!("mode {} needs a cutoff of at least 2", m + 1)));
                }
                Ok(pos)
            })
            .collect()
    }
}

/// Applies `U_v` on every (qubit, mode) pair of a vector over `factors`.
/// `pairs` holds `(mode position, qubit position)` within `factors`.
fn rotate(v: &mut [Complex64], factors: &[Factor], pairs: &[(usize, usize)]) {
    let n = factors.len();
    let mut strides = vec![1usize; n];
    for k in (0..n - 1).rev() {
        strides[k] = strides[k + 1] * factors[k + 1].dim;
    }
    for &(mpos, qpos) in pairs {
        let (sm, sq, dm) = (strides[mpos], strides[qpos], factors[mpos].dim);
        for i in 0..v.len() {
            let occ = (i / sm) % dm;
            let qb = (i / sq) % 2;
            if qb != 0 || occ == 0 {
                continue;
            }
            let j = i - sm + sq;
            let th = FRAC_PI_2 * (occ as f64).sqrt();
            let (c, s) = (th.cos(), th.sin());
            let is = Complex64::new(0.0, s);
            let (a, b) = (v[i], v[j]);
            v[i] = a * c + is * b;
            v[j] = is * a + b * c;
        }
    }
}

/// Embeds each column of `amps` (over `mode_factors`) into `modes ⊗ qubits`
/// with all qubits in `|g⟩` and applies the harvesting unitary.
fn harvest_columns(
    mode_factors: &[Factor],
    amps: &DMatrix<Complex64>,
    assignment: &HarvestAssignment,
) -> Result<(Vec<Factor>, DMatrix<Complex64>)> {
    let mpos = assignment.check(mode_factors)?;
    let nq = assignment.pairs.len();
    let mut joint: Vec<Factor> = mode_factors.to_vec();
    joint.extend(assignment.qubit_factors());
    let pairs: Vec<(usize, usize)> = mpos.iter().enumerate().map(|(k, &m)| (m, mode_factors.len() + k)).collect();
    let qd = 1usize << nq;
    let cols: Vec<Vec<Complex64>> = (0..amps.ncols())
        .into_par_iter()
        .map(|c| {
            let mut v = vec![Complex64::new(0.0, 0.0); amps.nrows() * qd];
            for r in 0..amps.nrows() {
                v[r * qd] = amps[(r, c)];
            }
            rotate(&mut v, &joint, &pairs);
            v
        })
        .collect();
    let out = DMatrix::from_fn(amps.nrows() * qd, amps.ncols(), |i, c| cols[c][i]);
    Ok((joint, out))
}

/// Applies the harvesting unitary to `ψ ⊗ |g…g⟩`. The joint factors are the
/// mode factors of `psi` followed by the qubits in assignment order.
pub fn harvest_apply(psi: &PureState, assignment: &HarvestAssignment) -> Result<PureState> {
    let amps = DMatrix::from_column_slice(psi.dim(), 1, psi.amplitudes().as_slice());
    let (joint, out) = harvest_columns(psi.factors(), &amps, assignment)?;
    PureState::new(joint, out.column(0).iter().copied().collect())
}

/// Two-level detectors' reduced state after harvesting.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitState {
    pub rho: DensityMatrix,
}

/// Harvests from a (possibly purified) mode state and traces out all modes
/// and the purifying environment.
pub fn harvested_qubit_state(state: &PurifiedState, assignment: &HarvestAssignment) -> Result<QubitState> {
    let (_, out) = harvest_columns(state.factors(), state.amplitudes(), assignment)?;
    let qd = 1usize << assignment.pairs.len();
    let md = state.amplitudes().nrows();
    let mut rho = DMatrix::<Complex64>::zeros(qd, qd);
    for c in 0..out.ncols() {
        let col = out.column(c);
        let m = DMatrix::from_fn(md, qd, |r, q| col[r * qd + q]);
        rho += m.transpose() * m.conjugate();
    }
    // symmetrize away round-off before validation
    let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(QubitState { rho: DensityMatrix::new(assignment.qubit_factors(), rho)? })
}

/// Wootters for two qubits, the convex-roof upper bound for more.
pub fn harvested_entanglement(q: &QubitState, split: &BipartiteSplit, cfg: &EofSearch) -> Result<Estimate> {
    mixed_estimate(&q.rho, split, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitStateDump {
    pub schema: String,
    pub labels: Vec<Label>,
    /// Row-major `[re, im]` entries.
    pub matrix: Vec<Vec<[f64; 2]>>,
}

pub const QUBIT_STATE_SCHEMA: &str = "qubit-state/1";

impl QubitState {
    pub fn to_dump(&self) -> QubitStateDump {
        let m = self.rho.matrix();
        QubitStateDump {
            schema: QUBIT_STATE_SCHEMA.into(),
            labels: self.rho.labels(),
            matrix: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect(),
        }
    }

    pub fn from_dump(d: &QubitStateDump) -> Result<Self> {
        if d.schema != QUBIT_STATE_SCHEMA {
            return Err(Error::InvalidArgument(format!("unsupported schema {}", d.schema)));
        }
        let n = d.matrix.len();
        if d.matrix.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("qubit state matrix is not square".into()));
        }
        let m = DMatrix::from_fn(n, n, |i, j| Complex64::new(d.matrix[i][j][0], d.matrix[i][j][1]));
        let factors = d
            .labels
            .iter()
            .map(|l| match l {
                Label::Qubit(_) => Ok(Factor { label: *l, dim: 2 }),
                Label::Mode(_) => Err(Error::InvalidArgument("qubit state with a mode label".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rho: DensityMatrix::new(factors, m)? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entmeas::{entanglement_entropy, wootters_eof};
    use crate::linalg::max_abs;
    use crate::tmss::{sigma_k_coefficients, TmssK};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn fock(n: usize, dim: usize) -> PureState {
        let mut v = vec![c(0.0, 0.0); dim];
        v[n] = c(1.0, 0.0);
        PureState::new(vec![Factor::mode(0, dim)], v).unwrap()
    }

    #[test]
    fn assignment_validation() {
        assert!(HarvestAssignment::new(vec![(0, 0), (1, 0)]).is_err());
        assert!(HarvestAssignment::new(vec![(0, 0), (0, 1)]).is_err());
        assert!(HarvestAssignment::new(vec![]).is_err());
        let a = HarvestAssignment::on_modes(&[4]).unwrap();
        assert!(harvest_apply(&fock(0, 4), &a).is_err());
        assert!(harvest_apply(&fock(0, 2), &HarvestAssignment::on_modes(&[0]).unwrap()).is_err());
    }

    #[test]
    fn single_mode_action() {
        let a = HarvestAssignment::on_modes(&[0]).unwrap();
        // joint index = 2 n + qubit
        let out = harvest_apply(&fock(0, 5), &a).unwrap();
        assert_eq!(out.amplitudes()[0], c(1.0, 0.0));
        let out = harvest_apply(&fock(1, 5), &a).unwrap();
        assert!((out.amplitudes()[1] - c(0.0, 1.0)).norm() < 1e-15);
        assert!(out.amplitudes()[2].norm() < 1e-15);
        let out = harvest_apply(&fock(2, 5), &a).unwrap();
        let th = FRAC_PI_2 * 2f64.sqrt();
        assert!((out.amplitudes()[4] - c(th.cos(), 0.0)).norm() < 1e-15);
        assert!((out.amplitudes()[3] - c(0.0, th.sin())).norm() < 1e-15);
    }

    fn dense_unitary(dim: usize) -> DMatrix<Complex64> {
        let mut u = DMatrix::zeros(2 * dim, 2 * dim);
        for k in 0..dim {
            let mut psi = vec![c(0.0, 0.0); dim];
            psi[k] = c(1.0, 0.0);
            let amps = DMatrix::from_column_slice(dim, 1, &psi);
            let (_, out) =
                harvest_columns(&[Factor::mode(0, dim)], &amps, &HarvestAssignment::on_modes(&[0]).unwrap()).unwrap();
            u.set_column(2 * k, &out.column(0));
        }
        // |e, n⟩ columns: e at the cutoff is untouched; others follow from the block structure
        for k in 0..dim {
            let mut v = vec![c(0.0, 0.0); 2 * dim];
            v[2 * k + 1] = c(1.0, 0.0);
            rotate(&mut v, &[Factor::mode(0, dim), Factor::qubit(0)], &[(0, 1)]);
            u.set_column(2 * k + 1, &DMatrix::from_column_slice(2 * dim, 1, &v).column(0));
        }
        u
    }

    #[test]
    fn unitary_and_excitation_conserving() {
        let dim = 7;
        let u = dense_unitary(dim);
        let id = DMatrix::<Complex64>::identity(2 * dim, 2 * dim);
        assert!(max_abs(&(u.adjoint() * &u - &id)) < 1e-12);
        for i in 0..2 * dim {
            for j in 0..2 * dim {
                let exc = |k: usize| k / 2 + k % 2;
                if exc(i) != exc(j) {
                    assert_eq!(u[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn bell_limit_of_balanced_state() {
        let s = sigma_k_coefficients(TmssK::new(1, 40.0, std::f64::consts::FRAC_PI_4).unwrap(), 4).unwrap();
        let psi =
            PureState::from_real(vec![Factor::mode(0, 5), Factor::mode(1, 5)], s.amps.transpose().as_slice()).unwrap();
        let q = harvested_qubit_state(&psi.into(), &HarvestAssignment::on_modes(&[0, 1]).unwrap()).unwrap();
        assert!((wootters_eof(&q.rho).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn swap_fidelity_on_low_occupations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            // random state supported on n < 2 for both modes
            let mut v = vec![c(0.0, 0.0); 9];
            for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                v[3 * i + j] = c(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
            let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let v: Vec<Complex64> = v.into_iter().map(|z| z / n).collect();
            let psi = PureState::new(vec![Factor::mode(0, 3), Factor::mode(1, 3)], v).unwrap();
            let split = BipartiteSplit::modes(&[0], &[1]);
            let mode_purity = {
                let r = psi.density_matrix().partial_trace(&[Label::Mode(0)]).unwrap();
                r.purity()
            };
            let q = harvested_qubit_state(&psi.clone().into(), &HarvestAssignment::on_modes(&[0, 1]).unwrap()).unwrap();
            let qp = q.rho.partial_trace(&[Label::Qubit(0)]).unwrap().purity();
            assert!((qp - mode_purity).abs() < 1e-10);
            let ev = wootters_eof(&q.rho).unwrap();
            let e = entanglement_entropy(&psi, &split).unwrap();
            assert!((ev - e).abs() < 1e-8);
        }
    }

    #[test]
    fn harvested_never_exceeds_mode_entanglement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = EofSearch::default();
        for _ in 0..20 {
            let v: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
            let psi = PureState::from_real(vec![Factor::mode(0, 4), Factor::mode(1, 4)], &v).unwrap();
            let e = entanglement_entropy(&psi, &BipartiteSplit::modes(&[0], &[1])).unwrap();
            let q = harvested_qubit_state(&psi.into(), &HarvestAssignment::on_modes(&[0, 1]).unwrap()).unwrap();
            let ev = harvested_entanglement(&q, &BipartiteSplit::qubits(&[0], &[1]), &cfg).unwrap();
            assert!(ev.value <= e + 1e-6);
        }
    }

    #[test]
    fn dump_round_trip() {
        let psi = PureState::from_real(
            vec![Factor::mode(0, 3), Factor::mode(1, 3)],
            &[1.0, 0.0, 0.2, 0.0, 0.5, 0.0, 0.2, 0.0, 0.1],
        )
        .unwrap();
        let q = harvested_qubit_state(&psi.into(), &HarvestAssignment::on_modes(&[0, 1]).unwrap()).unwrap();
        let json = serde_json::to_string(&q.to_dump()).unwrap();
        let back = QubitState::from_dump(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, q);
    }
}
