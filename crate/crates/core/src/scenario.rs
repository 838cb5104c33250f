//! Standard bipartitions of a chain and the end-to-end evaluation pipeline
//! (ground state → herald or trace → optional harvest → entanglement).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entmeas::{entanglement_estimate, negativity, BipartiteSplit, EofSearch, Estimate, Method, PurifiedState};
use crate::gaussian::{default_cutoff, ground_state_tensor, FockTensor, LocalBasis, PotentialMatrix};
use crate::harvest::{harvested_entanglement, harvested_qubit_state, HarvestAssignment};
use crate::herald::{herald_condition, parity_herald, reduced_state, HeraldedEnsemble, ModePartition};
use crate::{Error, Result};

/// Default cap on the dense dimension of a conditional state.
pub const DEFAULT_MEMORY_CAP: usize = 4096;

/// Which outer modes are kept and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    /// Modes 1 and N.
    Outer,
    /// Modes {1,2} and {N−1,N}.
    Pairs,
    /// Modes {1,2} and {N−1,N} with modes 3 and N−2 always traced.
    PairsPartial,
    /// First and last thirds of the chain (N divisible by 3).
    Thirds,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::Outer => "outer",
            Case::Pairs => "pairs",
            Case::PairsPartial => "pairs-partial",
            Case::Thirds => "thirds",
        })
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outer" => Ok(Case::Outer),
            "pairs" => Ok(Case::Pairs),
            "pairs-partial" => Ok(Case::PairsPartial),
            "thirds" => Ok(Case::Thirds),
            _ => Err(Error::InvalidArgument(format!("unknown case {s:?} (outer, pairs, pairs-partial, thirds)"))),
        }
    }
}

/// A partition of the modes plus the two kept groups whose entanglement is measured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub partition: ModePartition,
    pub side_a: Vec<usize>,
    pub side_b: Vec<usize>,
}

impl Scenario {
    /// Builds `case` on `n` modes. With `herald` the inner modes are measured,
    /// otherwise they are traced out.
    pub fn new(case: Case, n: usize, herald: bool) -> Result<Self> {
        let (a, b): (Vec<usize>, Vec<usize>) = match case {
            Case::Outer => {
                if n < 2 {
                    return Err(Error::InvalidArgument("outer case needs N ≥ 2".into()));
                }
                (vec![0], vec![n - 1])
            }
            Case::Pairs | Case::PairsPartial => {
                let min = if case == Case::Pairs { 4 } else { 6 };
                if n < min {
                    return Err(Error::InvalidArgument(format!("{case} case needs N ≥ {min}")));
                }
                (vec![0, 1], vec![n - 2, n - 1])
            }
            Case::Thirds => {
                if n < 3 || !n.is_multiple_of(3) {
                    return Err(Error::InvalidArgument("thirds case needs N divisible by 3".into()));
                }
                let t = n / 3;
                ((0..t).collect(), (n - t..n).collect())
            }
        };
        let inner: Vec<usize> = (0..n).filter(|m| !a.contains(m) && !b.contains(m)).collect();
        let (herald_set, trace): (Vec<usize>, Vec<usize>) = match (case, herald) {
            (_, false) => (vec![], inner),
            (Case::PairsPartial, true) => inner.iter().partition(|&&m| m != 2 && m != n - 3),
            (_, true) => (inner, vec![]),
        };
        Self::custom(n, a, b, herald_set, trace)
    }

    pub fn custom(
        n: usize,
        side_a: Vec<usize>,
        side_b: Vec<usize>,
        herald: Vec<usize>,
        trace: Vec<usize>,
    ) -> Result<Self> {
        if side_a.is_empty() || side_b.is_empty() {
            return Err(Error::InvalidPartition("both kept groups must be nonempty".into()));
        }
        let keep: Vec<usize> = side_a.iter().chain(&side_b).copied().collect();
        let partition = ModePartition::new(n, keep, herald, trace)?;
        Ok(Self { partition, side_a, side_b })
    }

    pub fn n_modes(&self) -> usize {
        self.partition.n_modes()
    }

    pub fn is_heralded(&self) -> bool {
        !self.partition.herald.is_empty()
    }

    pub fn mode_split(&self) -> BipartiteSplit {
        BipartiteSplit::modes(&self.side_a, &self.side_b)
    }

    /// Qubit `i` on the `i`-th kept mode.
    pub fn harvest_assignment(&self) -> Result<HarvestAssignment> {
        HarvestAssignment::on_modes(&self.partition.keep)
    }

    pub fn qubit_split(&self) -> BipartiteSplit {
        let na = self.side_a.len();
        let nb = self.side_b.len();
        BipartiteSplit::qubits(&(0..na).collect::<Vec<_>>(), &(na..na + nb).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// Entanglement between the kept mode groups.
    Modes,
    /// Entanglement of qubits harvested from the kept modes.
    Harvest,
    /// Negativity of the harvested qubits.
    HarvestNegativity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Per-mode cutoff; the size-dependent default when absent.
    pub cutoff: Option<usize>,
    pub p_floor: f64,
    pub measure: Measure,
    /// Herald only the parity of the total herald occupation.
    pub parity: bool,
    pub eof: EofSearch,
    pub memory_cap: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            cutoff: None,
            p_floor: crate::herald::DEFAULT_P_FLOOR,
            measure: Measure::Modes,
            parity: false,
            eof: EofSearch::default(),
            memory_cap: DEFAULT_MEMORY_CAP,
        }
    }
}

impl EvalOptions {
    pub fn harvest() -> Self {
        Self { measure: Measure::Harvest, ..Self::default() }
    }

    pub fn cutoff_for(&self, n: usize) -> usize {
        self.cutoff.unwrap_or_else(|| default_cutoff(n))
    }
}

/// Whether a reported value is exact or an upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundType {
    Exact,
    Upper,
    /// Not an entanglement-of-formation value.
    Proxy,
}

impl fmt::Display for BoundType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundType::Exact => "exact",
            BoundType::Upper => "upper",
            BoundType::Proxy => "proxy",
        })
    }
}

impl From<Method> for BoundType {
    fn from(m: Method) -> Self {
        match m {
            Method::Entropy | Method::Wootters => BoundType::Exact,
            Method::EofUpperBound => BoundType::Upper,
            Method::Negativity => BoundType::Proxy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `Σ pᵢ ℰᵢ` for heralded scenarios, otherwise the entanglement of the reduced state.
    pub value: f64,
    pub bound: BoundType,
    pub tail_norm: f64,
    pub residual_probability: f64,
    pub branches: usize,
}

/// Ground-state tensor for `omegas` at the options' cutoff.
pub fn tensor_for(a: &PotentialMatrix, omegas: &[f64], opts: &EvalOptions) -> Result<FockTensor> {
    let basis = LocalBasis::new(omegas.to_vec(), opts.cutoff_for(omegas.len()))?;
    ground_state_tensor(a, &basis)
}

/// Checks the dense conditional-state dimension against the memory cap.
pub fn check_memory(scenario: &Scenario, cutoff: usize, cap: usize) -> Result<()> {
    let dim = (cutoff + 1).checked_pow(scenario.partition.keep.len() as u32).unwrap_or(usize::MAX);
    if dim > cap {
        return Err(Error::MemoryGuard { dim, cap });
    }
    Ok(())
}

/// Entanglement of one conditional (or reduced) state under the chosen measure.
pub fn branch_estimate(scenario: &Scenario, state: &PurifiedState, opts: &EvalOptions) -> Result<Estimate> {
    match opts.measure {
        Measure::Modes => entanglement_estimate(state, &scenario.mode_split(), &opts.eof),
        Measure::Harvest => {
            let q = harvested_qubit_state(state, &scenario.harvest_assignment()?)?;
            harvested_entanglement(&q, &scenario.qubit_split(), &opts.eof)
        }
        Measure::HarvestNegativity => {
            let q = harvested_qubit_state(state, &scenario.harvest_assignment()?)?;
            Ok(Estimate { value: negativity(&q.rho, &scenario.qubit_split())?, method: Method::Negativity })
        }
    }
}

/// Heralded ensemble for a scenario with a nonempty herald set.
pub fn ensemble(tensor: &FockTensor, scenario: &Scenario, opts: &EvalOptions) -> Result<HeraldedEnsemble> {
    if opts.parity {
        parity_herald(tensor, &scenario.partition, opts.p_floor)
    } else {
        herald_condition(tensor, &scenario.partition, opts.p_floor)
    }
}

/// Runs the full pipeline on an existing tensor.
pub fn evaluate_tensor(tensor: &FockTensor, scenario: &Scenario, opts: &EvalOptions) -> Result<Evaluation> {
    if tensor.n_modes() != scenario.n_modes() {
        return Err(Error::Dimension(format!(
            "tensor has {} modes, scenario {}",
            tensor.n_modes(),
            scenario.n_modes()
        )));
    }
    let cutoff = *tensor.cutoffs().iter().max().unwrap();
    check_memory(scenario, cutoff, opts.memory_cap)?;
    if !scenario.is_heralded() {
        let (state, _) = reduced_state(tensor, &scenario.partition.keep)?;
        let e = branch_estimate(scenario, &state, opts)?;
        return Ok(Evaluation {
            value: e.value,
            bound: e.method.into(),
            tail_norm: tensor.tail_norm(),
            residual_probability: 0.0,
            branches: 1,
        });
    }
    let ens = ensemble(tensor, scenario, opts)?;
    let parts = ens
        .entries
        .par_iter()
        .map(|e| branch_estimate(scenario, &e.state, opts).map(|est| (e.probability * est.value, est.method)))
        .collect::<Result<Vec<_>>>()?;
    let bound = parts.iter().map(|(_, m)| BoundType::from(*m)).max().unwrap_or(BoundType::Exact);
    Ok(Evaluation {
        value: parts.iter().map(|(v, _)| v).sum(),
        bound,
        tail_norm: tensor.tail_norm(),
        residual_probability: ens.residual_probability(),
        branches: ens.entries.len(),
    })
}

/// Runs the full pipeline at local frequencies `omegas`.
pub fn evaluate(a: &PotentialMatrix, omegas: &[f64], scenario: &Scenario, opts: &EvalOptions) -> Result<Evaluation> {
    check_memory(scenario, opts.cutoff_for(omegas.len()), opts.memory_cap)?;
    evaluate_tensor(&tensor_for(a, omegas, opts)?, scenario, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::potential_matrix;
    use crate::model::{chain_normal_modes, ChainSpec};

    #[test]
    fn case_partitions() {
        let s = Scenario::new(Case::Outer, 5, true).unwrap();
        assert_eq!(s.partition.keep, vec![0, 4]);
        assert_eq!(s.partition.herald, vec![1, 2, 3]);
        let s = Scenario::new(Case::Pairs, 6, false).unwrap();
        assert_eq!(s.partition.trace, vec![2, 3]);
        let s = Scenario::new(Case::PairsPartial, 8, true).unwrap();
        assert_eq!(s.partition.trace, vec![2, 5]);
        assert_eq!(s.partition.herald, vec![3, 4]);
        let s = Scenario::new(Case::Thirds, 6, true).unwrap();
        assert_eq!((s.side_a.clone(), s.side_b.clone()), (vec![0, 1], vec![4, 5]));
        assert!(Scenario::new(Case::Thirds, 7, true).is_err());
        assert!("middle".parse::<Case>().is_err());
        assert_eq!("pairs-partial".parse::<Case>().unwrap(), Case::PairsPartial);
    }

    #[test]
    fn memory_guard() {
        let s = Scenario::new(Case::Thirds, 9, true).unwrap();
        assert!(matches!(check_memory(&s, 4, DEFAULT_MEMORY_CAP), Err(Error::MemoryGuard { .. })));
    }

    #[test]
    fn heralding_unlocks_entanglement() {
        let a = potential_matrix(&chain_normal_modes(&ChainSpec::new(4).unwrap()));
        let om = [1.0, 0.8, 0.8, 1.0];
        let opts = EvalOptions { cutoff: Some(6), ..EvalOptions::default() };
        let traced = evaluate(
            &a,
            &om,
            &Scenario::new(Case::Outer, 4, false).unwrap(),
            &EvalOptions { eof: EofSearch { restarts: 4, ..EofSearch::default() }, ..opts.clone() },
        )
        .unwrap();
        let heralded = evaluate(&a, &om, &Scenario::new(Case::Outer, 4, true).unwrap(), &opts).unwrap();
        assert_eq!(heralded.bound, BoundType::Exact);
        assert!(heralded.value > 10.0 * traced.value);
        let again = evaluate(&a, &om, &Scenario::new(Case::Outer, 4, true).unwrap(), &opts).unwrap();
        assert_eq!(again.value, heralded.value);
    }
}
