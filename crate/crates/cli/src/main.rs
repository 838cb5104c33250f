mod config;
mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use vacuum_unlock::csv::fmt_sig;
use vacuum_unlock::entmeas::EofSearch;
use vacuum_unlock::gaussian::{
    covariance_reduced, gaussian_log_negativity, ground_state_tensor, potential_matrix, FockTensorDump, LocalBasis,
};
use vacuum_unlock::herald::HeraldEntry;
use vacuum_unlock::model::{normal_modes, NormalModeData, SystemKind};
use vacuum_unlock::oracle::self_checks;
use vacuum_unlock::scenario::{
    branch_estimate, ensemble, evaluate_tensor, tensor_for, BoundType, Case, EvalOptions, Measure, Scenario,
    DEFAULT_MEMORY_CAP,
};
use vacuum_unlock::tmss::{
    position_wavefunction, sigma_k_coefficients, sigma_k_entropy, sigma_k_entropy_numeric, PositionGrid, TmssK,
};
use vacuum_unlock::tune::{default_omegas, maximize_heralded, SearchOptions};

use output::{json, line, list, Provenance};

/// Gaussian log-negativity treated as zero.
const PPT_TOL: f64 = 1e-12;

const SUBCOMMANDS: &[&str] = &["modes", "coeffs", "tmss", "herald", "sweep", "tune", "self-check"];

#[derive(Parser, Debug)]
#[command(name = "vacuum-unlock", version, about = "Local-mode entanglement of oscillator-chain ground states")]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "VACUUM_UNLOCK_JOBS")]
    jobs: Option<usize>,
    /// Largest dense conditional-state dimension allowed.
    #[arg(long, global = true, default_value_t = DEFAULT_MEMORY_CAP)]
    memory_cap: usize,
    /// Write to this file instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normal-mode frequencies and vectors.
    Modes(ModesArgs),
    /// Truncated ground-state Fock coefficients.
    Coeffs(CoeffsArgs),
    /// Order-k two-mode squeezed state: entropy and coefficient tables.
    Tmss(TmssArgs),
    /// Heralded ensemble of the kept modes.
    Herald(HeraldArgs),
    /// Entanglement of a standard bipartition across chain lengths.
    Sweep(SweepArgs),
    /// Local frequencies maximizing heralded entanglement.
    Tune(TuneArgs),
    /// Cross-validates the library against brute-force oracles.
    SelfCheck,
}

#[derive(Args, Debug, Clone)]
struct SystemArgs {
    #[arg(long, default_value = "chain")]
    system: SystemKind,
    /// Number of sites.
    #[arg(long)]
    n: usize,
}

impl SystemArgs {
    fn modes(&self) -> Result<NormalModeData> {
        Ok(normal_modes(self.system, self.n)?)
    }
}

#[derive(Args, Debug)]
struct ModesArgs {
    #[command(flatten)]
    sys: SystemArgs,
}

#[derive(Args, Debug)]
struct CoeffsArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// Comma-separated local frequencies, or `auto`.
    #[arg(long, default_value = "auto")]
    omega: String,
    #[arg(long)]
    cutoff: usize,
    /// Largest total occupation kept.
    #[arg(long)]
    total_cap: Option<usize>,
}

#[derive(Args, Debug)]
struct TmssArgs {
    #[arg(long)]
    k: usize,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    theta: f64,
    /// Per-mode cutoff of the coefficient table (defaults to k + 12).
    #[arg(long)]
    cutoff: Option<usize>,
    /// Directory for coefficient and wavefunction CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the position-space wavefunction.
    #[arg(long, requires = "out")]
    grid: bool,
    #[arg(long, default_value_t = 161)]
    grid_points: usize,
    #[arg(long, default_value_t = 4.0)]
    grid_extent: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args, Debug, Clone)]
struct EvalArgs {
    /// Comma-separated local frequencies, or `auto`.
    #[arg(long, default_value = "auto")]
    omega: String,
    /// Per-mode cutoff (size-dependent default).
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long, default_value_t = vacuum_unlock::herald::DEFAULT_P_FLOOR)]
    p_floor: f64,
    /// Herald only the parity of the herald modes.
    #[arg(long)]
    parity: bool,
    /// Report entanglement of qubits harvested from the kept modes.
    #[arg(long)]
    harvest: bool,
    /// Random restarts of the mixed-state search.
    #[arg(long, default_value_t = 8)]
    restarts: usize,
    #[arg(long)]
    seed: Option<u64>,
}

impl EvalArgs {
    fn options(&self, memory_cap: usize, measure: Measure) -> EvalOptions {
        EvalOptions {
            cutoff: self.cutoff,
            p_floor: self.p_floor,
            measure,
            parity: self.parity,
            eof: EofSearch { restarts: self.restarts, seed: self.seed.unwrap_or(0), ..EofSearch::default() },
            memory_cap,
        }
    }
}

#[derive(Args, Debug)]
struct HeraldArgs {
    #[command(flatten)]
    sys: SystemArgs,
    /// Kept modes, 1-based; the first and last site by default.
    #[arg(long, value_delimiter = ',')]
    keep: Option<Vec<usize>>,
    /// How many kept modes form the first side (half by default).
    #[arg(long)]
    split_at: Option<usize>,
    /// Measured modes, 1-based; all remaining modes by default.
    #[arg(long, value_delimiter = ',')]
    herald: Option<Vec<usize>>,
    /// Traced modes, 1-based.
    #[arg(long, value_delimiter = ',')]
    trace: Option<Vec<usize>>,
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, default_value = "chain")]
    system: SystemKind,
    #[arg(long)]
    n_min: usize,
    #[arg(long)]
    n_max: usize,
    #[arg(long)]
    case: Case,
    #[arg(long, value_enum)]
    herald: OnOff,
    /// Tune the local frequencies at each N instead of using `--omega`.
    #[arg(long)]
    tuned: bool,
    /// Bound traced single-mode pairs in the Fock basis even when the
    /// Gaussian state is PPT and hence separable.
    #[arg(long)]
    fock_bound: bool,
    #[command(flatten)]
    eval: EvalArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Objective {
    Heralded,
    HeraldedHarvest,
    HarvestNegativity,
}

#[derive(Args, Debug)]
struct TuneArgs {
    #[command(flatten)]
    sys: SystemArgs,
    #[arg(long, value_enum, default_value = "heralded")]
    objective: Objective,
    #[arg(long, default_value = "outer")]
    case: Case,
    #[arg(long, value_enum, default_value = "on")]
    herald: OnOff,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    cutoff: Option<usize>,
    /// Maximum number of objective evaluations.
    #[arg(long, default_value_t = 2000)]
    budget: usize,
    #[arg(long, default_value_t = 2)]
    random_starts: usize,
    /// Allow ω_i ≠ ω_{N+1−i}.
    #[arg(long)]
    no_mirror: bool,
    #[arg(long, default_value_t = 8)]
    restarts: usize,
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<ExitCode> {
    let args = config::merge(std::env::args().collect(), SUBCOMMANDS)?;
    let cli = Cli::try_parse_from(&args).unwrap_or_else(|e| e.exit());
    if let Some(j) = cli.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(j).build_global().context("configuring worker threads")?;
    }
    let mut prov = Provenance::new(&args[1..]);
    let (text, code) = match &cli.command {
        Command::Modes(a) => (modes(a, &prov)?, ExitCode::SUCCESS),
        Command::Coeffs(a) => (coeffs(a, &mut prov)?, ExitCode::SUCCESS),
        Command::Tmss(a) => (tmss(a, &prov)?, ExitCode::SUCCESS),
        Command::Herald(a) => (herald(a, cli.memory_cap, &mut prov)?, ExitCode::SUCCESS),
        Command::Sweep(a) => (sweep(a, cli.memory_cap, &mut prov)?, ExitCode::SUCCESS),
        Command::Tune(a) => (tune(a, cli.memory_cap, &mut prov)?, ExitCode::SUCCESS),
        Command::SelfCheck => self_check()?,
    };
    match &cli.output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(code)
}

fn parse_omegas(spec: &str, sys: SystemKind, modes: &NormalModeData) -> Result<Vec<f64>> {
    if spec == "auto" {
        return Ok(default_omegas(sys, modes)?);
    }
    let w = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("invalid frequency {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if w.len() != modes.n_modes() {
        bail!("{} local frequencies given for {} sites", w.len(), modes.n_modes());
    }
    Ok(w)
}

fn zero_based(list: &[usize], n: usize, what: &str) -> Result<Vec<usize>> {
    list.iter()
        .map(|&i| {
            if i == 0 || i > n {
                bail!("{what} index {i} is outside 1..={n}");
            }
            Ok(i - 1)
        })
        .collect()
}

fn modes(a: &ModesArgs, prov: &Provenance) -> Result<String> {
    let m = a.sys.modes()?;
    #[derive(Serialize)]
    struct Body<'a> {
        system: SystemKind,
        #[serde(flatten)]
        modes: &'a NormalModeData,
    }
    json("normal-modes/1", prov, Body { system: a.sys.system, modes: &m })
}

fn coeffs(a: &CoeffsArgs, prov: &mut Provenance) -> Result<String> {
    let m = a.sys.modes()?;
    let omegas = parse_omegas(&a.omega, a.sys.system, &m)?;
    let basis = LocalBasis::with_cutoffs(omegas.clone(), vec![a.cutoff; m.n_modes()], a.total_cap)?;
    let tensor = ground_state_tensor(&potential_matrix(&m), &basis)?;
    prov.cutoffs = Some(basis.cutoffs.clone());
    prov.omegas = Some(omegas);
    let dump = FockTensorDump::from(&tensor);
    #[derive(Serialize)]
    struct Body {
        tensor: FockTensorDump,
    }
    json("fock-coefficients/1", prov, Body { tensor: dump })
}

fn tmss(a: &TmssArgs, prov: &Provenance) -> Result<String> {
    let params = TmssK::new(a.k, a.beta, a.theta)?;
    let cutoff = a.cutoff.unwrap_or(a.k + 12);
    let state = sigma_k_coefficients(params, cutoff)?;
    #[derive(Serialize)]
    struct Body {
        params: TmssK,
        lambda: Option<f64>,
        entropy: f64,
        entropy_numeric: f64,
        cutoff: usize,
        truncated_entropy: f64,
        files: Vec<String>,
    }
    let mut files = Vec::new();
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let header = prov.csv_header();
        let p = dir.join("coefficients.csv");
        fs::write(&p, format!("{header}{}", state.to_csv()))?;
        files.push(p.display().to_string());
        if a.grid {
            let grid = PositionGrid { min: -a.grid_extent, max: a.grid_extent, points: a.grid_points };
            let wf = position_wavefunction(&state, grid)?;
            let p = dir.join("wavefunction.csv");
            fs::write(&p, format!("{header}{}", wf.to_csv()))?;
            files.push(p.display().to_string());
        }
    }
    let quarter = (a.theta / std::f64::consts::FRAC_PI_2).round() * std::f64::consts::FRAC_PI_2;
    let body = Body {
        params,
        lambda: ((a.theta - quarter).abs() < 1e-12).then(|| params.lambda()),
        entropy: sigma_k_entropy(params),
        entropy_numeric: sigma_k_entropy_numeric(params),
        cutoff,
        truncated_entropy: state.normalized()?.entropy(),
        files,
    };
    json("tmss/1", prov, body)
}

fn needs_seed(scenario: &Scenario, measure: Measure) -> bool {
    let mixed = !scenario.partition.trace.is_empty() || !scenario.is_heralded();
    let two_qubit = measure != Measure::Modes && scenario.partition.keep.len() == 2;
    mixed && !two_qubit
}

fn herald(a: &HeraldArgs, memory_cap: usize, prov: &mut Provenance) -> Result<String> {
    let n = a.sys.n;
    let m = a.sys.modes()?;
    let keep = zero_based(a.keep.as_deref().unwrap_or(&[1, n]), n, "keep")?;
    let trace = zero_based(a.trace.as_deref().unwrap_or(&[]), n, "trace")?;
    let herald = match &a.herald {
        Some(h) => zero_based(h, n, "herald")?,
        None => (0..n).filter(|i| !keep.contains(i) && !trace.contains(i)).collect(),
    };
    let split = a.split_at.unwrap_or(keep.len() / 2);
    if split == 0 || split >= keep.len() {
        bail!("--split-at must leave both sides nonempty");
    }
    let scenario = Scenario::custom(n, keep[..split].to_vec(), keep[split..].to_vec(), herald, trace)?;
    if !scenario.is_heralded() {
        bail!("no herald modes: give --herald or leave some modes unassigned");
    }
    let measure = if a.eval.harvest { Measure::Harvest } else { Measure::Modes };
    if needs_seed(&scenario, measure) && a.eval.seed.is_none() {
        bail!("conditional states are mixed and need the randomized bound search; pass --seed");
    }
    let omegas = parse_omegas(&a.eval.omega, a.sys.system, &m)?;
    let opts = a.eval.options(memory_cap, Measure::Modes);
    let tensor = tensor_for(&potential_matrix(&m), &omegas, &opts)?;
    vacuum_unlock::scenario::check_memory(&scenario, opts.cutoff_for(n), memory_cap)?;
    prov.seed = a.eval.seed;
    prov.cutoffs = Some(tensor.cutoffs());
    prov.omegas = Some(omegas);
    let ens = ensemble(&tensor, &scenario, &opts)?;
    let harvest_opts = EvalOptions { measure: Measure::Harvest, ..opts.clone() };
    let values = |e: &HeraldEntry| -> vacuum_unlock::Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        out.insert("entanglement".into(), branch_estimate(&scenario, &e.state, &opts)?.value);
        if a.eval.harvest {
            out.insert("harvested".into(), branch_estimate(&scenario, &e.state, &harvest_opts)?.value);
        }
        Ok(out)
    };
    let summary = ens.summarize(values)?;
    let mean = |key: &str| {
        summary.branches.iter().map(|b| b.probability * b.values.get(key).copied().unwrap_or(0.0)).sum::<f64>()
    };
    let mut footer = BTreeMap::new();
    footer.insert("mean_entanglement".to_string(), mean("entanglement"));
    if a.eval.harvest {
        footer.insert("mean_harvested".to_string(), mean("harvested"));
    }
    footer.insert("completeness".to_string(), summary.completeness);
    footer.insert("residual_probability".to_string(), summary.residual_probability);
    footer.insert("tail_norm".to_string(), tensor.tail_norm());
    if a.format == Format::Json {
        #[derive(Serialize)]
        struct Body<'a> {
            #[serde(flatten)]
            summary: &'a vacuum_unlock::herald::EnsembleSummary,
            averages: &'a BTreeMap<String, f64>,
        }
        return json("heralded-ensemble/1", prov, Body { summary: &summary, averages: &footer });
    }
    let mut out = prov.csv_header();
    let mut cols = vec!["outcome", "probability", "entanglement"];
    if a.eval.harvest {
        cols.push("harvested");
    }
    cols.extend(["fit_k", "fit_beta", "fit_theta", "fit_amplitude", "fit_residual"]);
    out.push_str(&line(cols.iter().map(|s| s.to_string())));
    for b in &summary.branches {
        let label = match &b.outcome {
            vacuum_unlock::herald::Outcome::Fock(v) => list(v.iter().map(|x| x.to_string())),
            other => other.to_string(),
        };
        let mut f = vec![label, fmt_sig(b.probability), fmt_sig(b.values["entanglement"])];
        if a.eval.harvest {
            f.push(fmt_sig(b.values["harvested"]));
        }
        match &b.fit {
            Some(fit) => f.extend([
                fit.params.k.to_string(),
                fmt_sig(fit.params.beta),
                fmt_sig(fit.params.theta),
                fmt_sig(fit.amplitude),
                fmt_sig(fit.residual),
            ]),
            None => f.extend(std::iter::repeat_n(String::new(), 5)),
        }
        out.push_str(&line(f));
    }
    for (k, v) in &footer {
        out.push_str(&format!("# {k}: {}\n", fmt_sig(*v)));
    }
    Ok(out)
}

struct SweepPoint {
    n: usize,
    omegas: Vec<f64>,
    value: f64,
    bound: String,
    gaussian_log_negativity: Option<f64>,
    tail_norm: f64,
    residual_probability: f64,
    branches: usize,
}

fn sweep(a: &SweepArgs, memory_cap: usize, prov: &mut Provenance) -> Result<String> {
    let Some(seed) = a.eval.seed else {
        bail!("sweep needs --seed");
    };
    if a.n_min > a.n_max {
        bail!("--n-min must not exceed --n-max");
    }
    let measure = if a.eval.harvest { Measure::Harvest } else { Measure::Modes };
    let opts = a.eval.options(memory_cap, measure);
    let heralded = a.herald == OnOff::On;
    let ns: Vec<usize> = (a.n_min..=a.n_max).filter(|&n| Scenario::new(a.case, n, heralded).is_ok()).collect();
    if ns.is_empty() {
        bail!("case {} applies to no N in {}..={}", a.case, a.n_min, a.n_max);
    }
    for &n in &ns {
        let scenario = Scenario::new(a.case, n, heralded)?;
        vacuum_unlock::scenario::check_memory(&scenario, opts.cutoff_for(n), memory_cap)?;
    }
    let points = ns
        .par_iter()
        .map(|&n| -> Result<SweepPoint> {
            let scenario = Scenario::new(a.case, n, heralded)?;
            let m = normal_modes(a.system, n)?;
            let pm = potential_matrix(&m);
            let omegas = if a.tuned {
                let search = SearchOptions { seed, kind: Some(a.system), ..SearchOptions::default() };
                maximize_heralded(&m, &scenario, &opts, &search)?.omegas
            } else {
                parse_omegas(&a.eval.omega, a.system, &m)?
            };
            let tensor = tensor_for(&pm, &omegas, &opts)?;
            let gln = if !heralded && measure == Measure::Modes {
                let cov = covariance_reduced(&pm, &scenario.partition.keep)?;
                Some(gaussian_log_negativity(&cov, &scenario.side_b)?)
            } else {
                None
            };
            // a PPT Gaussian state of one mode per side is separable
            let single = scenario.side_a.len() == 1 && scenario.side_b.len() == 1;
            if single && gln.is_some_and(|g| g <= PPT_TOL) && !a.fock_bound {
                return Ok(SweepPoint {
                    n,
                    omegas,
                    value: 0.0,
                    bound: BoundType::Exact.to_string(),
                    gaussian_log_negativity: gln,
                    tail_norm: tensor.tail_norm(),
                    residual_probability: 0.0,
                    branches: 1,
                });
            }
            let ev = evaluate_tensor(&tensor, &scenario, &opts)?;
            Ok(SweepPoint {
                n,
                omegas,
                value: ev.value,
                bound: ev.bound.to_string(),
                gaussian_log_negativity: gln,
                tail_norm: ev.tail_norm,
                residual_probability: ev.residual_probability,
                branches: ev.branches,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    prov.seed = Some(seed);
    prov.cutoffs = Some(ns.iter().map(|&n| opts.cutoff_for(n)).collect());
    let mut out = prov.csv_header();
    out.push_str(&line(
        ["n", "value", "bound", "gaussian_log_negativity", "tail_norm", "residual_probability", "branches", "omegas"]
            .map(String::from),
    ));
    for p in points {
        out.push_str(&line([
            p.n.to_string(),
            fmt_sig(p.value),
            p.bound,
            p.gaussian_log_negativity.map(fmt_sig).unwrap_or_default(),
            fmt_sig(p.tail_norm),
            fmt_sig(p.residual_probability),
            p.branches.to_string(),
            list(p.omegas.iter().map(|&w| fmt_sig(w))),
        ]));
    }
    Ok(out)
}

fn tune(a: &TuneArgs, memory_cap: usize, prov: &mut Provenance) -> Result<String> {
    let m = a.sys.modes()?;
    let scenario = Scenario::new(a.case, a.sys.n, a.herald == OnOff::On)?;
    let measure = match a.objective {
        Objective::Heralded => Measure::Modes,
        Objective::HeraldedHarvest => Measure::Harvest,
        Objective::HarvestNegativity => Measure::HarvestNegativity,
    };
    let opts = EvalOptions {
        cutoff: a.cutoff,
        measure,
        eof: EofSearch { restarts: a.restarts, seed: a.seed, ..EofSearch::default() },
        memory_cap,
        ..EvalOptions::default()
    };
    let search = SearchOptions {
        mirror: !a.no_mirror,
        seed: a.seed,
        random_starts: a.random_starts,
        budget: a.budget,
        kind: Some(a.sys.system),
        ..SearchOptions::default()
    };
    let r = maximize_heralded(&m, &scenario, &opts, &search)?;
    prov.seed = Some(a.seed);
    prov.cutoffs = Some(vec![opts.cutoff_for(a.sys.n); a.sys.n]);
    prov.omegas = Some(r.omegas.clone());
    #[derive(Serialize)]
    struct Body<'a> {
        scenario: &'a Scenario,
        result: &'a vacuum_unlock::tune::TuneResult,
    }
    json("tune-result/1", prov, Body { scenario: &scenario, result: &r })
}

fn self_check() -> Result<(String, ExitCode)> {
    let checks = self_checks()?;
    let mut out = String::new();
    for c in &checks {
        out.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    let ok = checks.iter().all(|c| c.passed);
    Ok((out, if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE }))
}
