//! Choice of local-mode frequencies: matched closed forms, generic
//! zero-coefficient root finding and heralded-entanglement maximization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gaussian::{ground_state_tensor, potential_matrix, LocalBasis, PotentialMatrix};
use crate::model::{NormalModeData, SystemKind};
use crate::scenario::{evaluate, EvalOptions, Scenario};
use crate::{Error, Result};

/// Residual tolerance for zero-coefficient roots.
pub const ROOT_TOL: f64 = 1e-10;

/// Agreement required between a closed form and the solver.
pub const MATCH_TOL: f64 = 1e-7;

/// Ratio ω₂/ν₁ used for the matched starting point of the N=3 search.
pub const DEFAULT_OMEGA2_RATIO: f64 = 0.86;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneProvenance {
    pub method: String,
    pub seed: Option<u64>,
    pub budget: Option<usize>,
    pub cutoff: Option<usize>,
    pub starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub omegas: Vec<f64>,
    /// Maximized objective, or for root finding the largest residual magnitude.
    pub objective_value: f64,
    /// Target coefficients at `omegas` (root finding only).
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// False when the budget ran out before the search converged.
    pub converged: bool,
    /// Closed-form minus solver value when they disagreed.
    pub discrepancy: Option<f64>,
    pub provenance: TuneProvenance,
}

/// Search box `[0.05 ν₁, 3 ν_N]`.
pub fn omega_bounds(modes: &NormalModeData) -> (f64, f64) {
    let nu = &modes.frequencies;
    (0.05 * nu[0], 3.0 * nu[nu.len() - 1])
}

/// Which local frequencies are free and how they are tied together.
#[derive(Debug, Clone)]
struct Groups {
    base: Vec<f64>,
    members: Vec<Vec<usize>>,
}

impl Groups {
    fn new(fixed: &[Option<f64>], mirror: bool) -> Result<Self> {
        let n = fixed.len();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for i in 0..n {
            let j = n - 1 - i;
            if mirror && j < i {
                if fixed[i].is_some() != fixed[j].is_some() || fixed[i].zip(fixed[j]).is_some_and(|(a, b)| a != b) {
                    return Err(Error::InvalidArgument(format!(
                        "mirror constraint conflicts with fixed ω at sites {} and {}",
                        j + 1,
                        i + 1
                    )));
                }
                continue;
            }
            match fixed[i] {
                Some(w) if !(w > 0.0 && w.is_finite()) => {
                    return Err(Error::InvalidArgument(format!("fixed ω{} must be positive, got {w}", i + 1)));
                }
                Some(_) => {}
                None if mirror && j != i => members.push(vec![i, j]),
                None => members.push(vec![i]),
            }
        }
        Ok(Self { base: fixed.iter().map(|w| w.unwrap_or(1.0)).collect(), members })
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut w = self.base.clone();
        for (g, &v) in self.members.iter().zip(x) {
            for &i in g {
                w[i] = v;
            }
        }
        w
    }
}

/// Coefficients `⟨n|vac⟩` for each target multi-index at local frequencies `omegas`.
pub fn target_coefficients(a: &PotentialMatrix, omegas: &[f64], targets: &[Vec<usize>]) -> Result<Vec<f64>> {
    let n = a.n_modes();
    if let Some(t) = targets.iter().find(|t| t.len() != n) {
        return Err(Error::Dimension(format!("target {t:?} does not have {n} entries")));
    }
    let cutoff = targets.iter().flatten().copied().max().unwrap_or(0).max(2);
    let tensor = ground_state_tensor(a, &LocalBasis::new(omegas.to_vec(), cutoff)?)?;
    Ok(targets.iter().map(|t| tensor.get(t)).collect())
}

/// Finds local frequencies at which all target coefficients vanish.
///
/// `fixed[i] = Some(ω)` pins site `i`; with `mirror` the free sites are tied as
/// `ω_i = ω_{N+1−i}`. One free group is solved by scanning for a sign change and
/// refining with false position; several groups by damped Gauss–Newton.
pub fn zero_coefficient_solve(
    modes: &NormalModeData,
    fixed: &[Option<f64>],
    mirror: bool,
    targets: &[Vec<usize>],
) -> Result<TuneResult> {
    let n = modes.n_modes();
    if fixed.len() != n {
        return Err(Error::Dimension(format!("{} fixed entries for {n} modes", fixed.len())));
    }
    if targets.is_empty() {
        return Err(Error::InvalidArgument("no target coefficients".into()));
    }
    let groups = Groups::new(fixed, mirror)?;
    if groups.len() == 0 {
        return Err(Error::InvalidArgument("no free frequencies".into()));
    }
    if groups.len() > targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} free frequency groups but only {} targets",
            groups.len(),
            targets.len()
        )));
    }
    let a = potential_matrix(modes);
    let coeffs = |x: &[f64]| target_coefficients(&a, &groups.expand(x), targets);
    let bounds = omega_bounds(modes);
    let (x, iterations) = if groups.len() == 1 {
        solve_scalar(&coeffs, bounds, (modes.frequencies[0] * modes.frequencies[n - 1]).sqrt())?
    } else {
        solve_newton(&coeffs, groups.len(), bounds, (modes.frequencies[0] * modes.frequencies[n - 1]).sqrt())?
    };
    let residuals = coeffs(&x)?;
    let worst = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if worst >= ROOT_TOL {
        return Err(Error::NoConvergence { what: "zero-coefficient solve", residual: worst });
    }
    Ok(TuneResult {
        omegas: groups.expand(&x),
        objective_value: worst,
        residuals,
        iterations,
        converged: true,
        discrepancy: None,
        provenance: TuneProvenance {
            method: "zero-coefficient".into(),
            seed: None,
            budget: None,
            cutoff: targets.iter().flatten().copied().max(),
            starts: 1,
        },
    })
}

const SCAN_POINTS: usize = 200;

fn solve_scalar(
    coeffs: &impl Fn(&[f64]) -> Result<Vec<f64>>,
    (lo, hi): (f64, f64),
    guess: f64,
) -> Result<(Vec<f64>, usize)> {
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| lo * (hi / lo).powf(i as f64 / (SCAN_POINTS - 1) as f64)).collect();
    let values = grid.iter().map(|&w| coeffs(&[w])).collect::<Result<Vec<_>>>()?;
    let n_targets = values[0].len();
    // Scan the target with the widest range; the others are checked afterwards.
    let pick = (0..n_targets)
        .max_by(|&i, &j| {
            let span = |k: usize| values.iter().map(|v| v[k].abs()).fold(0.0, f64::max);
            span(i).total_cmp(&span(j))
        })
        .unwrap();
    let f: Vec<f64> = values.iter().map(|v| v[pick]).collect();
    let bracket = (0..SCAN_POINTS - 1)
        .filter(|&i| f[i] == 0.0 || f[i].signum() != f[i + 1].signum())
        .min_by(|&i, &j| {
            let d = |k: usize| ((grid[k] * grid[k + 1]).sqrt().ln() - guess.ln()).abs();
            d(i).total_cmp(&d(j))
        })
        .ok_or(Error::NoBracket { lo, hi })?;
    let g = |w: f64| coeffs(&[w]).map(|v| v[pick]);
    let (mut a, mut b) = (grid[bracket], grid[bracket + 1]);
    let (mut fa, mut fb) = (f[bracket], f[bracket + 1]);
    if fa == 0.0 {
        return Ok((vec![a], 0));
    }
    let mut side = 0i8;
    for it in 1..=200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = g(c)?;
        if fc == 0.0 || (b - a).abs() <= 4.0 * f64::EPSILON * c.abs() {
            return Ok((vec![c], it));
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
        if fc.abs() < 1e-3 * ROOT_TOL {
            return Ok((vec![c], it));
        }
    }
    let c = if fa.abs() < fb.abs() { a } else { b };
    Ok((vec![c], 200))
}

fn solve_newton(
    coeffs: &impl Fn(&[f64]) -> Result<Vec<f64>>,
    dim: usize,
    (lo, hi): (f64, f64),
    guess: f64,
) -> Result<(Vec<f64>, usize)> {
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![guess; dim];
    let mut r = coeffs(&x)?;
    for it in 1..=100 {
        if norm(&r) < 1e-3 * ROOT_TOL {
            return Ok((x, it));
        }
        let mut jac = nalgebra::DMatrix::zeros(r.len(), dim);
        for k in 0..dim {
            let h = 1e-7 * x[k];
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let (rp, rm) = (coeffs(&xp)?, coeffs(&xm)?);
            for i in 0..r.len() {
                jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
            }
        }
        let rhs = nalgebra::DVector::from_column_slice(&r);
        let step = jac.svd(true, true).solve(&rhs, 1e-14).map_err(|e| Error::InvalidArgument(e.into()))?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, s)| (xi - t * s).clamp(lo, hi)).collect();
            let rt = coeffs(&trial)?;
            if norm(&rt) < norm(&r) || t < 1e-8 {
                x = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    Ok((x, 100))
}

/// Closed-form matched frequencies, cross-checked against the solver.
///
/// N=2 gives `ω₁ = ω₂ = √(ν₁ν₂)`; N=3 gives `ω₁ = ω₃` at the supplied `ω₂`
/// so that `⟨2,0,0|vac⟩ = ⟨3,1,0|vac⟩ = 0`.
pub fn matched_frequencies(kind: SystemKind, modes: &NormalModeData, omega2: f64) -> Result<TuneResult> {
    let nu = &modes.frequencies;
    let (closed, targets, fixed): (Vec<f64>, Vec<Vec<usize>>, Vec<Option<f64>>) = match nu.len() {
        2 => {
            let w = (nu[0] * nu[1]).sqrt();
            (vec![w, w], vec![vec![2, 0], vec![3, 1]], vec![None, None])
        }
        3 => {
            if !(omega2 > 0.0 && omega2.is_finite()) {
                return Err(Error::InvalidArgument(format!("ω₂ must be positive, got {omega2}")));
            }
            let (n1, n2, n3, w2) = (nu[0], nu[1], nu[2], omega2);
            let sq = match kind {
                SystemKind::Chain => (2.0 * n1 * n2 * n3 + (n1 * n2 + n2 * n3) * w2) / (n1 + n3 + 2.0 * w2),
                SystemKind::Trap => n2 * (3.0 * n1 * n3 + (2.0 * n1 + n3) * w2) / (n1 + 2.0 * n3 + 3.0 * w2),
            };
            if !(sq > 0.0) {
                return Err(Error::InvalidArgument(format!("matched ω₁² = {sq} is not positive")));
            }
            let w = sq.sqrt();
            (vec![w, w2, w], vec![vec![2, 0, 0], vec![3, 1, 0]], vec![None, Some(w2), None])
        }
        n => return Err(Error::InvalidArgument(format!("matched frequencies need N = 2 or 3, got {n}"))),
    };
    let solved = zero_coefficient_solve(modes, &fixed, true, &targets)?;
    let diff = closed[0] - solved.omegas[0];
    let mut out = if diff.abs() <= MATCH_TOL {
        let a = potential_matrix(modes);
        let residuals = target_coefficients(&a, &closed, &targets)?;
        TuneResult {
            objective_value: residuals.iter().fold(0.0, |m, r| m.max(r.abs())),
            omegas: closed,
            residuals,
            discrepancy: None,
            ..solved
        }
    } else {
        TuneResult { discrepancy: Some(diff), ..solved }
    };
    out.provenance.method = format!("matched-{kind}");
    Ok(out)
}

/// Matched frequencies for N ≤ 3 (with `ω₂ = 0.86 ν₁`), otherwise `√(ν₁ν_N)` on every site.
pub fn default_omegas(kind: SystemKind, modes: &NormalModeData) -> Result<Vec<f64>> {
    let nu = &modes.frequencies;
    match nu.len() {
        2 | 3 => Ok(matched_frequencies(kind, modes, DEFAULT_OMEGA2_RATIO * nu[0])?.omegas),
        n => Ok(vec![(nu[0] * nu[n - 1]).sqrt(); n]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    /// Tie `ω_i = ω_{N+1−i}`.
    pub mirror: bool,
    pub seed: u64,
    /// Number of random starting points in addition to the fixed ones.
    pub random_starts: usize,
    /// Maximum number of objective evaluations.
    pub budget: usize,
    pub initial_step: f64,
    pub min_step: f64,
    /// Adds the matched N ≤ 3 point as a start.
    pub kind: Option<SystemKind>,
    /// Pinned frequencies per site; empty leaves every site free.
    pub fixed: Vec<Option<f64>>,
    /// Points whose truncation tail exceeds this score −∞.
    pub max_tail: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            mirror: true,
            seed: 0,
            random_starts: 2,
            budget: 2000,
            initial_step: 0.2,
            min_step: 1e-3,
            kind: Some(SystemKind::Chain),
            fixed: Vec::new(),
            max_tail: 1e-2,
        }
    }
}

/// Starting points: matched (N ≤ 3), geometric mean of ν, unit and seeded random.
fn starting_points(modes: &NormalModeData, groups: &Groups, opts: &SearchOptions) -> Vec<Vec<f64>> {
    let (lo, hi) = omega_bounds(modes);
    let nu = &modes.frequencies;
    let mut starts: Vec<Vec<f64>> = Vec::new();
    let reduce = |w: &[f64]| -> Vec<f64> { groups.members.iter().map(|g| w[g[0]].clamp(lo, hi)).collect() };
    if let Some(kind) = opts.kind {
        if let Ok(m) = matched_frequencies(kind, modes, DEFAULT_OMEGA2_RATIO * nu[0]) {
            starts.push(reduce(&m.omegas));
        }
    }
    starts.push(reduce(&vec![(nu[0] * nu[nu.len() - 1]).sqrt(); nu.len()]));
    starts.push(reduce(&vec![1.0; nu.len()]));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        starts.push((0..groups.len()).map(|_| (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp()).collect());
    }
    starts.dedup();
    starts
}

/// Maximizes `objective(ω)` by compass search in log ω from several starts.
///
/// Failed evaluations score −∞. The polls around the current point are
/// evaluated in parallel; the accepted move is the best improving poll.
pub fn maximize(
    modes: &NormalModeData,
    objective: impl Fn(&[f64]) -> Result<f64> + Sync,
    opts: &SearchOptions,
) -> Result<TuneResult> {
    if !(opts.initial_step > 0.0 && opts.min_step > 0.0 && opts.min_step <= opts.initial_step) {
        return Err(Error::InvalidArgument("step sizes must satisfy 0 < min_step ≤ initial_step".into()));
    }
    let fixed = if opts.fixed.is_empty() { vec![None; modes.n_modes()] } else { opts.fixed.clone() };
    if fixed.len() != modes.n_modes() {
        return Err(Error::Dimension(format!("{} fixed entries for {} modes", fixed.len(), modes.n_modes())));
    }
    let groups = Groups::new(&fixed, opts.mirror)?;
    if groups.len() == 0 {
        return Err(Error::InvalidArgument("no free frequencies".into()));
    }
    let (lo, hi) = omega_bounds(modes);
    let score = |x: &[f64]| objective(&groups.expand(x)).ok().filter(|v| v.is_finite()).unwrap_or(f64::NEG_INFINITY);
    let starts = starting_points(modes, &groups, opts);
    let mut evals = 0usize;
    let mut iterations = 0usize;
    let mut exhausted = false;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        if evals >= opts.budget {
            exhausted = true;
            break;
        }
        let mut x = start.clone();
        let mut fx = score(&x);
        evals += 1;
        let mut step = opts.initial_step;
        while step >= opts.min_step {
            if evals + 2 * groups.len() > opts.budget {
                exhausted = true;
                break;
            }
            iterations += 1;
            let polls: Vec<Vec<f64>> = (0..groups.len())
                .flat_map(|k| [1.0, -1.0].map(|sgn| (k, sgn)))
                .map(|(k, sgn)| {
                    let mut y = x.clone();
                    y[k] = (y[k] * (sgn * step).exp()).clamp(lo, hi);
                    y
                })
                .collect();
            let values: Vec<f64> = polls.par_iter().map(|y| score(y)).collect();
            evals += polls.len();
            let (k, &fk) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            if fk > fx {
                x = polls[k].clone();
                fx = fk;
            } else {
                step *= 0.5;
            }
        }
        if best.as_ref().is_none_or(|(_, fb)| fx > *fb) {
            best = Some((x, fx));
        }
        if exhausted {
            break;
        }
    }
    let (x, fx) = best.ok_or_else(|| Error::InvalidArgument("evaluation budget is zero".into()))?;
    if fx == f64::NEG_INFINITY {
        return Err(Error::NoConvergence { what: "objective evaluation", residual: f64::INFINITY });
    }
    Ok(TuneResult {
        omegas: groups.expand(&x),
        objective_value: fx,
        residuals: Vec::new(),
        iterations,
        converged: !exhausted,
        discrepancy: None,
        provenance: TuneProvenance {
            method: "pattern-search".into(),
            seed: Some(opts.seed),
            budget: Some(opts.budget),
            cutoff: None,
            starts: starts.len(),
        },
    })
}

/// Maximizes the scenario's heralded (or harvested) entanglement over ω.
pub fn maximize_heralded(
    modes: &NormalModeData,
    scenario: &Scenario,
    eval: &EvalOptions,
    opts: &SearchOptions,
) -> Result<TuneResult> {
    if scenario.n_modes() != modes.n_modes() {
        return Err(Error::Dimension(format!("scenario has {} modes, system {}", scenario.n_modes(), modes.n_modes())));
    }
    let a = potential_matrix(modes);
    let mut search = opts.clone();
    if search.fixed.is_empty() {
        // traced modes only change the truncation, so they stay at the default
        let nu = &modes.frequencies;
        let w = (nu[0] * nu[nu.len() - 1]).sqrt();
        search.fixed = (0..modes.n_modes()).map(|i| scenario.partition.trace.contains(&i).then_some(w)).collect();
    }
    let objective = |w: &[f64]| {
        let e = evaluate(&a, w, scenario, eval)?;
        if e.tail_norm > opts.max_tail {
            return Err(Error::NoConvergence { what: "truncated expansion", residual: e.tail_norm });
        }
        Ok(e.value)
    };
    let mut out = maximize(modes, objective, &search)?;
    out.provenance.cutoff = Some(eval.cutoff_for(modes.n_modes()));
    Ok(out)
}
