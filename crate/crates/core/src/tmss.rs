//! Order-k two-mode squeezed states
//! `|σ_k(β,θ)⟩ = √(1−e^{−2β}) Σₙ e^{−nβ} (cos θ |n+k,n⟩ + sin θ |n,n+k⟩)`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv::{fmt_sig, row};
use crate::entmeas::{Label, PureState};
use crate::gaussian::{entropy_from_lambda, hermite_functions};
use crate::linalg::schmidt_entropy;
use crate::{Error, Result};

/// Parameters of an order-k two-mode squeezed state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmssK {
    pub k: usize,
    pub beta: f64,
    pub theta: f64,
}

impl TmssK {
    pub fn new(k: usize, beta: f64, theta: f64) -> Result<Self> {
        let p = Self { k, beta, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidSpec(format!("beta must be positive, got {}", self.beta)));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidSpec("theta must be finite".into()));
        }
        if self.k == 0 && self.theta != 0.0 {
            return Err(Error::InvalidSpec("k = 0 requires theta = 0".into()));
        }
        Ok(())
    }

    /// `λ = 1/(2 tanh β)`.
    pub fn lambda(&self) -> f64 {
        0.5 / self.beta.tanh()
    }
}

/// Real amplitudes `c(n₁, n₂)` of a two-mode state; rows index mode 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoModeState {
    #[serde(with = "crate::linalg::matrix_rows")]
    pub amps: DMatrix<f64>,
}

impl TwoModeState {
    pub fn new(amps: DMatrix<f64>) -> Self {
        Self { amps }
    }

    /// Extracts the real amplitudes of a pure state on exactly two mode factors.
    pub fn from_pure(psi: &PureState) -> Result<Self> {
        let f = psi.factors();
        if f.len() != 2 || f.iter().any(|x| !matches!(x.label, Label::Mode(_))) {
            return Err(Error::Dimension("expected a pure state on two modes".into()));
        }
        let (d1, d2) = (f[0].dim, f[1].dim);
        let a = psi.amplitudes();
        Ok(Self { amps: DMatrix::from_fn(d1, d2, |i, j| a[i * d2 + j].re) })
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::NotNormalizable(0.0));
        }
        Ok(Self { amps: &self.amps / n })
    }

    /// Von Neumann entropy of either reduced state, in bits.
    pub fn entropy(&self) -> f64 {
        match self.normalized() {
            Ok(s) => schmidt_entropy(&s.amps),
            Err(_) => 0.0,
        }
    }

    /// CSV table with occupation numbers as row and column headers.
    pub fn to_csv(&self) -> String {
        let mut out = row(std::iter::once("n1\\n2".to_string()).chain((0..self.amps.ncols()).map(|j| j.to_string())));
        out.push('\n');
        for i in 0..self.amps.nrows() {
            let line = row(std::iter::once(i.to_string()).chain(self.amps.row(i).iter().map(|&v| fmt_sig(v))));
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

/// Truncated σ_k amplitudes for occupations `0..=cutoff` on each mode.
pub fn sigma_k_coefficients(params: TmssK, cutoff: usize) -> Result<TwoModeState> {
    params.validate()?;
    if cutoff < params.k + 2 {
        return Err(Error::InvalidArgument(format!("cutoff {cutoff} must be at least k + 2 = {}", params.k + 2)));
    }
    let d = cutoff + 1;
    let norm = (-(-2.0 * params.beta).exp_m1()).sqrt();
    let (c, s) = (params.theta.cos(), params.theta.sin());
    let mut amps = DMatrix::zeros(d, d);
    for n in 0..d - params.k {
        let a = norm * (-(n as f64) * params.beta).exp();
        amps[(n + params.k, n)] += a * c;
        amps[(n, n + params.k)] += a * s;
    }
    Ok(TwoModeState { amps })
}

fn is_quarter_turn(theta: f64) -> bool {
    let r = theta / FRAC_PI_2;
    (r - r.round()).abs() < 1e-12
}

/// Cutoff that leaves a truncation tail below double precision.
fn converged_cutoff(params: &TmssK) -> usize {
    let n = (19.0 / params.beta).ceil() as usize;
    params.k + n.clamp(4, 600)
}

/// Entanglement entropy of σ_k in bits.
pub fn sigma_k_entropy(params: TmssK) -> f64 {
    if is_quarter_turn(params.theta) {
        return entropy_from_lambda(params.lambda());
    }
    sigma_k_entropy_numeric(params)
}

/// Schmidt-spectrum entropy of a converged truncation, regardless of θ.
pub fn sigma_k_entropy_numeric(params: TmssK) -> f64 {
    let cutoff = converged_cutoff(&params);
    match sigma_k_coefficients(params, cutoff) {
        Ok(s) => s.entropy(),
        Err(_) => f64::NAN,
    }
}

/// Outcome of fitting a two-mode state to the σ_k family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: TmssK,
    /// `|⟨σ_k|ψ⟩|` with the input taken as given (unnormalized for herald branches).
    pub amplitude: f64,
    /// `1 − |⟨σ_k|ψ̂⟩|²` for the normalized input.
    pub residual: f64,
    /// Amplitudes alternate in sign, `e^{−nβ} → (−e^{−β})ⁿ`.
    pub alternating: bool,
}

struct Bands {
    k: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bands {
    fn overlap(&self, beta: f64, theta: f64, sign: f64) -> f64 {
        let norm = (-(-2.0 * beta).exp_m1()).sqrt();
        let q = sign * (-beta).exp();
        let (c, s) = if self.k == 0 { (1.0, 0.0) } else { (theta.cos(), theta.sin()) };
        let mut acc = 0.0;
        let mut w = norm;
        for n in 0..self.lower.len() {
            acc += w * (c * self.lower[n] + s * self.upper[n]);
            w *= q;
            if w.abs() < 1e-300 {
                break;
            }
        }
        acc
    }
}

fn dominant_band(amps: &DMatrix<f64>) -> usize {
    let (d1, d2) = amps.shape();
    let span = d1.max(d2);
    let mut weight = vec![0.0; span];
    for i in 0..d1 {
        for j in 0..d2 {
            weight[i.abs_diff(j)] += amps[(i, j)] * amps[(i, j)];
        }
    }
    let mut best = 0;
    for (k, &w) in weight.iter().enumerate() {
        if w > weight[best] {
            best = k;
        }
    }
    best
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..80 {
        if fa > fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    if fa > fb {
        (a, fa)
    } else {
        (b, fb)
    }
}

/// Fits `state` to `amplitude · σ_k(β,θ)`.
///
/// The band `k` is the occupation difference carrying the most weight.
/// β and θ come from a global grid scan refined by coordinate line searches.
pub fn fit_sigma_k(state: &TwoModeState) -> Result<FitResult> {
    let raw = state.norm();
    if raw == 0.0 {
        return Err(Error::NotNormalizable(0.0));
    }
    let psi = &state.amps / raw;
    let k = dominant_band(&psi);
    let (d1, d2) = psi.shape();
    let len = d1.min(d2.saturating_sub(k)).max(d2.min(d1.saturating_sub(k)));
    let at = |i: usize, j: usize| if i < d1 && j < d2 { psi[(i, j)] } else { 0.0 };
    let bands =
        Bands { k, lower: (0..len).map(|n| at(n + k, n)).collect(), upper: (0..len).map(|n| at(n, n + k)).collect() };

    let betas: Vec<f64> = (0..=158).map(|i| 0.1 + 0.05 * i as f64).collect();
    // θ and θ+π differ by a global sign, so a half-turn covers every relative sign.
    let thetas: Vec<f64> = if k == 0 { vec![0.0] } else { (0..180).map(|i| i as f64 * PI / 180.0).collect() };
    let (beta0, theta0, sign, _) = betas
        .par_iter()
        .flat_map_iter(|&b| {
            let bands = &bands;
            thetas
                .iter()
                .flat_map(move |&t| [1.0, -1.0].into_iter().map(move |s| (b, t, s, bands.overlap(b, t, s).abs())))
        })
        .reduce(|| (0.1, 0.0, 1.0, f64::NEG_INFINITY), |x, y| if y.3 > x.3 { y } else { x });

    let obj = |b: f64, t: f64| bands.overlap(b, t, sign).abs();
    let (mut beta, mut theta) = (beta0, theta0);
    let mut hb = 0.05;
    let mut ht = PI / 180.0;
    for _ in 0..6 {
        beta = golden_max(|b| obj(b, theta), (beta - hb).max(1e-3), beta + hb).0;
        if k > 0 {
            theta = golden_max(|t| obj(beta, t), theta - ht, theta + ht).0;
        }
        hb *= 0.5;
        ht *= 0.5;
    }
    let mut ov = bands.overlap(beta, theta, sign);
    if k > 0 {
        if ov < 0.0 {
            theta += PI;
            ov = -ov;
        }
        theta = theta.rem_euclid(2.0 * PI);
    }
    let ov = ov.abs().min(1.0);
    Ok(FitResult {
        params: TmssK { k, beta, theta },
        amplitude: raw * ov,
        residual: (1.0 - ov * ov).max(0.0),
        alternating: sign < 0.0,
    })
}

/// Square grid along both position axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Default for PositionGrid {
    fn default() -> Self {
        Self { min: -4.0, max: 4.0, points: 161 }
    }
}

impl PositionGrid {
    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.points - 1) as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.points).map(|i| self.min + h * i as f64).collect()
    }
}

/// Sampled position-space wavefunction; `values[(i, j)] = ψ(x[i], x[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wavefunction {
    pub x: Vec<f64>,
    #[serde(with = "crate::linalg::matrix_rows")]
    pub values: DMatrix<f64>,
    /// `Σ |ψ|² h²` over the grid.
    pub grid_norm: f64,
}

impl Wavefunction {
    /// CSV grid with x₂ values as column headers and x₁ values as row headers.
    pub fn to_csv(&self) -> String {
        let mut out = row(std::iter::once("x1\\x2".to_string()).chain(self.x.iter().map(|&v| fmt_sig(v))));
        out.push('\n');
        for (i, &x1) in self.x.iter().enumerate() {
            out.push_str(&row(std::iter::once(fmt_sig(x1)).chain(self.values.row(i).iter().map(|&v| fmt_sig(v)))));
            out.push('\n');
        }
        out
    }
}

/// `ψ(x₁,x₂) = Σ c(n₁,n₂) φ_{n₁}(x₁) φ_{n₂}(x₂)` with unit-frequency Hermite functions.
///
/// Fails when the grid norm deviates from the state norm by more than 1%.
pub fn position_wavefunction(state: &TwoModeState, grid: PositionGrid) -> Result<Wavefunction> {
    if grid.points < 3 || !(grid.max > grid.min) {
        return Err(Error::InvalidArgument("position grid needs at least 3 points and max > min".into()));
    }
    let x = grid.coords();
    let (d1, d2) = state.amps.shape();
    let nmax = d1.max(d2) - 1;
    let cols: Vec<Vec<f64>> = x.par_iter().map(|&xi| hermite_functions(nmax, 1.0, xi)).collect();
    let phi = DMatrix::from_fn(nmax + 1, x.len(), |n, i| cols[i][n]);
    let phi1 = phi.rows(0, d1);
    let phi2 = phi.rows(0, d2);
    let values = phi1.transpose() * &state.amps * phi2;
    let h = grid.step();
    let grid_norm = values.norm_squared() * h * h;
    let expected = state.amps.norm_squared();
    if (grid_norm - expected).abs() > 0.01 * expected {
        return Err(Error::InvalidArgument(format!(
            "position grid does not resolve the state: grid norm {grid_norm:.4} vs {expected:.4}"
        )));
    }
    Ok(Wavefunction { x, values, grid_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn coefficients_match_closed_form() {
        let s = sigma_k_coefficients(TmssK::new(0, 1.0, 0.0).unwrap(), 10).unwrap();
        assert!((s.amps[(0, 0)] - 0.929873).abs() < 1e-6);
        assert!((s.amps[(2, 2)] - (1.0 - (-2f64).exp()).sqrt() * (-2f64).exp()).abs() < 1e-15);
        assert_eq!(s.amps[(1, 0)], 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(TmssK::new(0, 1.0, 0.3).is_err());
        assert!(TmssK::new(1, 0.0, 0.3).is_err());
        assert!(sigma_k_coefficients(TmssK::new(2, 1.0, 0.0).unwrap(), 3).is_err());
    }

    #[test]
    fn bell_limit() {
        let p = TmssK::new(1, 40.0, FRAC_PI_4).unwrap();
        let s = sigma_k_coefficients(p, 4).unwrap();
        assert!((s.amps[(1, 0)] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((s.amps[(0, 1)] - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((sigma_k_entropy(p) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn norm_is_one_up_to_tail() {
        for k in 1..4 {
            for &t in &[0.0, 0.3, FRAC_PI_4, 1.2] {
                let s = sigma_k_coefficients(TmssK::new(k, 1.5, t).unwrap(), 12).unwrap();
                let tail = (-2.0 * 1.5 * (13 - k) as f64).exp();
                assert!((s.norm().powi(2) - 1.0).abs() <= tail * 1.01 + 1e-14);
            }
        }
    }

    #[test]
    fn entropy_example() {
        let beta = (0.5 / 0.51898f64).atanh();
        let e = sigma_k_entropy(TmssK::new(0, beta, 0.0).unwrap());
        assert!((e - 0.1362).abs() < 5e-4, "{e}");
    }

    #[test]
    fn closed_form_matches_schmidt() {
        for k in 0..4 {
            for &b in &[0.3, 1.0, 2.5] {
                for &t in &[0.0, FRAC_PI_2] {
                    if k == 0 && t != 0.0 {
                        continue;
                    }
                    let p = TmssK::new(k, b, t).unwrap();
                    assert!((sigma_k_entropy(p) - sigma_k_entropy_numeric(p)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn exchange_symmetry() {
        for k in 1..4 {
            for &b in &[0.4, 1.0, 3.0] {
                for &t in &[0.1, 0.5, 0.7] {
                    let e1 = sigma_k_entropy(TmssK::new(k, b, t).unwrap());
                    let e2 = sigma_k_entropy(TmssK::new(k, b, FRAC_PI_2 - t).unwrap());
                    assert!((e1 - e2).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn balanced_lower_bound() {
        for k in 1..4 {
            for i in 0..=46 {
                let b = 0.25 + 0.125 * i as f64;
                let e = sigma_k_entropy(TmssK::new(k, b, FRAC_PI_4).unwrap());
                assert!(e >= 1.0 - 1e-6, "k={k} beta={b} e={e}");
            }
        }
    }

    #[test]
    fn entropy_monotone_in_theta() {
        let es: Vec<f64> =
            (0..=45).map(|d| sigma_k_entropy(TmssK::new(1, 2.5, (d as f64).to_radians()).unwrap())).collect();
        assert!(es.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn self_fit() {
        let p = TmssK::new(1, 2.72, FRAC_PI_4).unwrap();
        let s = sigma_k_coefficients(p, 10).unwrap();
        let f = fit_sigma_k(&s).unwrap();
        assert_eq!(f.params.k, 1);
        assert!((f.params.beta - 2.72).abs() < 1e-4, "{:?}", f);
        assert!((f.params.theta - FRAC_PI_4).abs() < 1e-4);
        assert!((f.amplitude - 1.0).abs() < 1e-8);
        assert!(f.residual < 1e-8);
        assert!(!f.alternating);
    }

    #[test]
    fn fit_handles_signs_and_scale() {
        let p = TmssK::new(2, 1.3, 0.4).unwrap();
        let mut s = sigma_k_coefficients(p, 12).unwrap();
        for i in 0..13 {
            for j in 0..13 {
                let n = i.min(j);
                s.amps[(i, j)] *= if n % 2 == 1 { -0.5 } else { 0.5 };
            }
        }
        let f = fit_sigma_k(&s).unwrap();
        assert_eq!(f.params.k, 2);
        assert!(f.alternating);
        assert!((f.amplitude - 0.5).abs() < 1e-8);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn flat_state_has_large_residual() {
        let s = TwoModeState::new(DMatrix::from_element(6, 6, 1.0));
        let f = fit_sigma_k(&s).unwrap();
        assert!(f.residual > 0.5);
    }

    #[test]
    fn vacuum_wavefunction() {
        let mut amps = DMatrix::zeros(3, 3);
        amps[(0, 0)] = 1.0;
        let w = position_wavefunction(&TwoModeState::new(amps), PositionGrid::default()).unwrap();
        for (i, &x1) in w.x.iter().enumerate().step_by(17) {
            for (j, &x2) in w.x.iter().enumerate().step_by(13) {
                let exact = PI.powf(-0.5) * (-(x1 * x1 + x2 * x2) / 2.0).exp();
                assert!((w.values[(i, j)] - exact).abs() < 1e-14);
            }
        }
        assert!((w.grid_norm - 1.0).abs() < 1e-3);
    }

    #[test]
    fn balanced_wavefunction_is_exchange_symmetric() {
        let s = sigma_k_coefficients(TmssK::new(1, 1.0, FRAC_PI_4).unwrap(), 12).unwrap();
        let w = position_wavefunction(&s, PositionGrid::default()).unwrap();
        assert!((&w.values - w.values.transpose()).amax() < 1e-12);
        // odd under joint inversion, so the origin is a node
        assert!(w.values[(80, 80)].abs() < 1e-14);
        assert!(w.values[(100, 100)] > 0.0 && w.values[(60, 60)] < 0.0);
    }

    #[test]
    fn coarse_grid_is_reported() {
        let s = sigma_k_coefficients(TmssK::new(1, 0.2, FRAC_PI_4).unwrap(), 40).unwrap();
        let r = position_wavefunction(&s, PositionGrid { min: -1.0, max: 1.0, points: 5 });
        assert!(r.is_err());
    }

    #[test]
    fn csv_headers() {
        let s = sigma_k_coefficients(TmssK::new(0, 1.0, 0.0).unwrap(), 2).unwrap();
        let csv = s.to_csv();
        let first = csv.lines().next().unwrap();
        assert_eq!(first, "n1\\n2,0,1,2");
        assert!(csv.lines().nth(1).unwrap().starts_with("0,0.929873495"));
    }
}
