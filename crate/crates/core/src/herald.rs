//! Number-basis measurement of central modes and the resulting conditional
//! states of the remaining modes.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entmeas::{Factor, PurifiedState};
use crate::gaussian::FockTensor;
use crate::tmss::{fit_sigma_k, FitResult, TwoModeState};
use crate::{Complex64, Error, Result};

/// Default probability below which outcomes are pooled into the residual.
pub const DEFAULT_P_FLOOR: f64 = 1e-6;

/// Assignment of every mode to exactly one role. Indices are zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModePartition {
    pub keep: Vec<usize>,
    pub herald: Vec<usize>,
    pub trace: Vec<usize>,
}

impl ModePartition {
    pub fn new(n_modes: usize, keep: Vec<usize>, herald: Vec<usize>, trace: Vec<usize>) -> Result<Self> {
        let p = Self { keep, herald, trace };
        p.validate(n_modes)?;
        Ok(p)
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if self.keep.is_empty() {
            return Err(Error::InvalidPartition("keep set is empty".into()));
        }
        let mut role = vec![0u8; n_modes];
        for &i in self.keep.iter().chain(&self.herald).chain(&self.trace) {
            if i >= n_modes {
                return Err(Error::InvalidPartition(format!("mode {} does not exist (N = {n_modes})", i + 1)));
            }
            role[i] += 1;
        }
        if let Some(i) = role.iter().position(|&r| r != 1) {
            let what = if role[i] == 0 { "unassigned" } else { "assigned twice" };
            return Err(Error::InvalidPartition(format!("mode {} is {what}", i + 1)));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.keep.len() + self.herald.len() + self.trace.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

/// Label of an ensemble entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    /// Occupations of the herald modes, in partition order.
    Fock(Vec<usize>),
    /// Parity of the total herald occupation.
    Parity(Parity),
    /// Pooled outcomes below the probability floor.
    Residual,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Fock(m) => {
                let s: Vec<String> = m.iter().map(|x| x.to_string()).collect();
                write!(f, "({})", s.join(","))
            }
            Outcome::Parity(Parity::Even) => f.write_str("even"),
            Outcome::Parity(Parity::Odd) => f.write_str("odd"),
            Outcome::Residual => f.write_str("residual"),
        }
    }
}

/// One measurement branch: probability and normalized conditional state of
/// the keep modes, purified over the traced modes (and, for coarse-grained
/// outcomes, over the merged herald occupations).
#[derive(Debug, Clone)]
pub struct HeraldEntry {
    pub outcome: Outcome,
    pub probability: f64,
    pub state: PurifiedState,
}

#[derive(Debug, Clone)]
pub struct HeraldedEnsemble {
    pub partition: ModePartition,
    pub entries: Vec<HeraldEntry>,
    pub residual: Option<HeraldEntry>,
}

impl HeraldedEnsemble {
    /// `Σ p` including the residual; equals `1 − tail_norm` of the source tensor.
    pub fn completeness(&self) -> f64 {
        self.entries.iter().chain(&self.residual).map(|e| e.probability).sum()
    }

    pub fn residual_probability(&self) -> f64 {
        self.residual.as_ref().map_or(0.0, |e| e.probability)
    }

    /// `Σ pᵢ ρᵢ` over all entries including the residual.
    pub fn reassemble(&self) -> DMatrix<Complex64> {
        let d = self.entries.first().or(self.residual.as_ref()).map_or(0, |e| e.state.amplitudes().nrows());
        let mut out = DMatrix::zeros(d, d);
        for e in self.entries.iter().chain(&self.residual) {
            let a = e.state.amplitudes();
            out += (a * a.adjoint()) * Complex64::new(e.probability, 0.0);
        }
        out
    }
}

/// Amplitudes of a tensor regrouped as `blocks[o][k][t]` for herald outcome
/// `o`, keep index `k` and trace index `t`, all row-major over their modes.
struct Sliced {
    n_out: usize,
    keep_dim: usize,
    trace_dim: usize,
    data: Vec<f64>,
}

impl Sliced {
    fn block(&self, o: usize) -> &[f64] {
        let len = self.keep_dim * self.trace_dim;
        &self.data[o * len..(o + 1) * len]
    }
}

fn group_strides(dims: &[usize], modes: &[usize]) -> (Vec<(usize, usize)>, usize) {
    let mut stride = 1;
    let mut out = vec![(0, 0); modes.len()];
    for (slot, &m) in modes.iter().enumerate().rev() {
        out[slot] = (m, stride);
        stride *= dims[m];
    }
    (out, stride)
}

fn slice(tensor: &FockTensor, p: &ModePartition) -> Sliced {
    let dims = tensor.dims();
    let (ks, keep_dim) = group_strides(dims, &p.keep);
    let (hs, n_out) = group_strides(dims, &p.herald);
    let (ts, trace_dim) = group_strides(dims, &p.trace);
    let mut data = vec![0.0; n_out * keep_dim * trace_dim];
    let index = |n: &[usize], s: &[(usize, usize)]| s.iter().map(|&(m, st)| n[m] * st).sum::<usize>();
    tensor.for_each_stored(|n, _, c| {
        let o = index(n, &hs);
        let k = index(n, &ks);
        let t = index(n, &ts);
        data[(o * keep_dim + k) * trace_dim + t] = c;
    });
    Sliced { n_out, keep_dim, trace_dim, data }
}

fn keep_factors(tensor: &FockTensor, p: &ModePartition) -> Vec<Factor> {
    p.keep.iter().map(|&m| Factor::mode(m, tensor.dims()[m])).collect()
}

fn digits(mut o: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = o % dims[k];
        o /= dims[k];
    }
    out
}

/// Stacks the blocks of the given outcomes side by side as environment columns.
fn stacked(s: &Sliced, outcomes: &[usize]) -> DMatrix<Complex64> {
    let td = s.trace_dim;
    let mut a = DMatrix::zeros(s.keep_dim, td * outcomes.len());
    for (slot, &o) in outcomes.iter().enumerate() {
        let b = s.block(o);
        for k in 0..s.keep_dim {
            for t in 0..td {
                a[(k, slot * td + t)] = Complex64::new(b[k * td + t], 0.0);
            }
        }
    }
    a
}

fn entry(factors: &[Factor], outcome: Outcome, a: DMatrix<Complex64>) -> Result<Option<HeraldEntry>> {
    if a.norm_squared() == 0.0 {
        return Ok(None);
    }
    let (state, p) = PurifiedState::from_unnormalized(factors.to_vec(), a)?;
    Ok(Some(HeraldEntry { outcome, probability: p, state }))
}

fn check(tensor: &FockTensor, p: &ModePartition) -> Result<()> {
    p.validate(tensor.n_modes())?;
    if p.herald.is_empty() {
        return Err(Error::InvalidPartition("herald set is empty; use reduced_state instead".into()));
    }
    Ok(())
}

/// Conditions on every number-basis outcome of the herald modes.
///
/// Outcomes are enumerated lexicographically over herald occupations.
/// Outcomes with probability below `p_floor` are pooled into a single residual
/// entry whose state keeps the pooled branches as extra environment columns,
/// so that [`HeraldedEnsemble::reassemble`] stays exact.
pub fn herald_condition(tensor: &FockTensor, partition: &ModePartition, p_floor: f64) -> Result<HeraldedEnsemble> {
    check(tensor, partition)?;
    let s = slice(tensor, partition);
    let factors = keep_factors(tensor, partition);
    let hdims: Vec<usize> = partition.herald.iter().map(|&m| tensor.dims()[m]).collect();
    let probs: Vec<f64> = (0..s.n_out).map(|o| s.block(o).iter().map(|c| c * c).sum()).collect();
    let kept: Vec<usize> = (0..s.n_out).filter(|&o| probs[o] >= p_floor && probs[o] > 0.0).collect();
    let pooled: Vec<usize> = (0..s.n_out).filter(|&o| probs[o] < p_floor && probs[o] > 0.0).collect();
    let entries = kept
        .par_iter()
        .map(|&o| entry(&factors, Outcome::Fock(digits(o, &hdims)), stacked(&s, &[o])))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let residual = if pooled.is_empty() { None } else { entry(&factors, Outcome::Residual, stacked(&s, &pooled))? };
    Ok(HeraldedEnsemble { partition: partition.clone(), entries, residual })
}

/// Coarse-grained herald that only reports the parity of the total herald
/// occupation. Each branch is the mixture of its Fock outcomes.
pub fn parity_herald(tensor: &FockTensor, partition: &ModePartition, p_floor: f64) -> Result<HeraldedEnsemble> {
    check(tensor, partition)?;
    let s = slice(tensor, partition);
    let factors = keep_factors(tensor, partition);
    let hdims: Vec<usize> = partition.herald.iter().map(|&m| tensor.dims()[m]).collect();
    let parity = |o: usize| digits(o, &hdims).iter().sum::<usize>() % 2;
    let mut entries = Vec::new();
    let mut pooled = Vec::new();
    for (par, label) in [(0, Parity::Even), (1, Parity::Odd)] {
        let group: Vec<usize> = (0..s.n_out).filter(|&o| parity(o) == par).collect();
        if let Some(e) = entry(&factors, Outcome::Parity(label), stacked(&s, &group))? {
            if e.probability >= p_floor {
                entries.push(e);
            } else {
                pooled.extend(group);
            }
        }
    }
    let residual = if pooled.is_empty() { None } else { entry(&factors, Outcome::Residual, stacked(&s, &pooled))? };
    Ok(HeraldedEnsemble { partition: partition.clone(), entries, residual })
}

/// Reduced state of the `keep` modes with every other mode traced out,
/// together with its unnormalized weight `1 − tail_norm`.
pub fn reduced_state(tensor: &FockTensor, keep: &[usize]) -> Result<(PurifiedState, f64)> {
    let n = tensor.n_modes();
    let trace: Vec<usize> = (0..n).filter(|m| !keep.contains(m)).collect();
    let p = ModePartition::new(n, keep.to_vec(), vec![], trace)?;
    let s = slice(tensor, &p);
    PurifiedState::from_unnormalized(keep_factors(tensor, &p), stacked(&s, &[0]))
}

/// `Ē = Σ pᵢ ℰ(ρᵢ)` with the residual entry scored as zero.
pub fn heralded_average<F>(ensemble: &HeraldedEnsemble, measure: F) -> Result<f64>
where
    F: Fn(&PurifiedState) -> Result<f64> + Sync,
{
    let vals = ensemble
        .entries
        .par_iter()
        .map(|e| measure(&e.state).map(|v| e.probability * v))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.iter().sum())
}

/// Serializable per-branch record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub outcome: Outcome,
    pub probability: f64,
    /// Order-k squeezed-state fit, present when the branch is a pure two-mode state.
    pub fit: Option<FitResult>,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub schema: String,
    pub partition: ModePartition,
    pub completeness: f64,
    pub residual_probability: f64,
    pub branches: Vec<BranchSummary>,
}

pub const ENSEMBLE_SCHEMA: &str = "heralded-ensemble/1";

/// Pure two-mode branch as a real amplitude table, scaled by `√p`.
pub fn branch_amplitudes(e: &HeraldEntry) -> Option<TwoModeState> {
    let psi = e.state.to_pure()?;
    let t = TwoModeState::from_pure(&psi).ok()?;
    Some(TwoModeState::new(t.amps * e.probability.sqrt()))
}

impl HeraldedEnsemble {
    /// Per-branch summaries. `values` computes the named entanglement values of
    /// each branch; the σ_k fit uses the branch's raw (unnormalized) amplitudes.
    pub fn summarize<F>(&self, values: F) -> Result<EnsembleSummary>
    where
        F: Fn(&HeraldEntry) -> Result<BTreeMap<String, f64>> + Sync,
    {
        let branches = self
            .entries
            .par_iter()
            .map(|e| {
                let fit = match branch_amplitudes(e) {
                    Some(t) => Some(fit_sigma_k(&t)?),
                    None => None,
                };
                Ok(BranchSummary { outcome: e.outcome.clone(), probability: e.probability, fit, values: values(e)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleSummary {
            schema: ENSEMBLE_SCHEMA.into(),
            partition: self.partition.clone(),
            completeness: self.completeness(),
            residual_probability: self.residual_probability(),
            branches,
        })
    }
}
