//! Command-line front end: configuration, subcommands and parameter sweeps.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::channels::{
    beam_averaged_map, decay_modified_map, discrete_map, generator_l0, kraus_thermal_atom, kraus_two_photon,
    loss_dissipator, AtomState, BeamScheme, DecayRates, KrausSet, StarkPhases, Superoperator, ThermalAtomSpec,
};
use crate::error::{Error, Result};
use crate::evolve::{self, fmt17, full_model_map, ModelParams};
use crate::fock::{coherent_state, fock_state, wigner, DensityMatrix, FockDim, GridSpec, Ket};
use crate::linalg::{self, c};
use crate::meta::{self, DfsGenerator};
use crate::metrology::MetrologyReport;
use crate::steady::{conserved_coherence, parity_stationary, StationaryPair};
use crate::walls::{hard_walls_below, phi_for_wall, wall_sequence};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "micromaser", version, about = "Two-photon micromaser simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output path (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long = "n-max", global = true)]
    pub n_max: Option<usize>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Pure stationary states and their photon statistics.
    Steady,
    /// Propagate an initial state atom by atom or in continuous time.
    Evolve,
    /// Slowest eigenvalues of the generator.
    Spectrum,
    /// Hard-wall sequence from a first wall.
    Walls {
        #[arg(long)]
        m1: Option<u64>,
        #[arg(long)]
        k1: Option<i64>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Wigner function of a stationary state.
    Wigner,
    /// Effective dynamics inside the decoherence-free subspace.
    Metastable,
    /// Grid of stationary-state metrology over atom counts.
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Steady => "steady",
            Command::Evolve => "evolve",
            Command::Spectrum => "spectrum",
            Command::Walls { .. } => "walls",
            Command::Wigner => "wigner",
            Command::Metastable => "metastable",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub c_e: f64,
    /// Phase of `c_e` relative to `c_g`, in radians.
    #[serde(default)]
    pub c_e_phase: f64,
    pub phi: Option<f64>,
    pub m: Option<u64>,
    pub k: Option<i64>,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    /// Detuning over coupling of the uniform (5+1) model; uses the full level scheme.
    pub detuning_ratio: Option<f64>,
    /// Incoherent atom populations of levels `0, 1, 2, 3, 4, a`.
    pub thermal: Option<[f64; 6]>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            c_e: 0.0,
            c_e_phase: 0.0,
            phi: None,
            m: None,
            k: None,
            nu: 1.0,
            n_max: default_n_max(),
            detuning_ratio: None,
            thermal: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub kappa: f64,
    #[serde(default)]
    pub n_th: f64,
    /// Standard deviation of the integrated coupling.
    #[serde(default)]
    pub beam_sigma: f64,
    /// Monte Carlo samples for the beam average (quadrature when absent).
    pub beam_samples: Option<usize>,
    #[serde(default)]
    pub gamma1: f64,
    #[serde(default)]
    pub gamma3: f64,
    #[serde(default)]
    pub t_prep: f64,
    #[serde(default = "one")]
    pub tau: f64,
    pub seed: Option<u64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            kappa: 0.0,
            n_th: 0.0,
            beam_sigma: 0.0,
            beam_samples: None,
            gamma1: 0.0,
            gamma3: 0.0,
            t_prep: 0.0,
            tau: 1.0,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase", tag = "kind")]
pub enum InitialState {
    Vacuum,
    Fock { n: usize },
    Coherent { re: f64, im: f64 },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Vacuum
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub initial: InitialState,
    /// Atom-count checkpoints for discrete propagation.
    #[serde(default)]
    pub atoms: Vec<u64>,
    /// Times for continuous propagation (units of `1/ν`).
    #[serde(default)]
    pub times: Vec<f64>,
    pub spectrum_count: Option<usize>,
    #[serde(default)]
    pub wigner: WignerSection,
    #[serde(default)]
    pub walls: WallsSection,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    #[serde(default = "plus")]
    pub state: String,
    #[serde(default = "wig_lo")]
    pub re_min: f64,
    #[serde(default = "wig_hi")]
    pub re_max: f64,
    #[serde(default = "wig_lo")]
    pub im_min: f64,
    #[serde(default = "wig_hi")]
    pub im_max: f64,
    #[serde(default = "wig_res")]
    pub resolution: usize,
}

impl Default for WignerSection {
    fn default() -> Self {
        WignerSection { state: plus(), re_min: -4.0, re_max: 4.0, im_min: -4.0, im_max: 4.0, resolution: 81 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallsSection {
    pub m1: Option<u64>,
    pub k1: Option<i64>,
    #[serde(default = "three")]
    pub count: usize,
}

impl Default for WallsSection {
    fn default() -> Self {
        WallsSection { m1: None, k1: None, count: 3 }
    }
}

/// Either an explicit list or an inclusive arithmetic range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    List(Vec<T>),
    Range { start: T, stop: T, step: T },
}

impl Axis<f64> {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Axis::List(v) => Ok(v.clone()),
            Axis::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return Err(validation("run.sweep", "range needs step > 0 and stop >= start"));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
                // rounded to 12 digits so that grid keys are stable
                Ok((0..n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
            }
        }
    }
}

impl Axis<i64> {
    pub fn values(&self) -> Result<Vec<i64>> {
        match self {
            Axis::List(v) => Ok(v.clone()),
            Axis::Range { start, stop, step } => {
                if *step <= 0 || stop < start {
                    return Err(validation("run.sweep", "range needs step > 0 and stop >= start"));
                }
                Ok((*start..=*stop).step_by(*step as usize).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub c_e: Axis<f64>,
    pub k: Axis<i64>,
    pub m: u64,
    pub checkpoints: Vec<u64>,
}

fn one() -> f64 {
    1.0
}
fn three() -> usize {
    3
}
fn default_n_max() -> usize {
    40
}
fn plus() -> String {
    "plus".into()
}
fn wig_lo() -> f64 {
    -4.0
}
fn wig_hi() -> f64 {
    4.0
}
fn wig_res() -> usize {
    81
}

fn validation(field: &str, message: impl Into<String>) -> Error {
    Error::Validation { field: field.into(), message: message.into() }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Parses and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        Error::Parse { line, column, message: e.message().to_string() }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.phi.is_some() && (m.m.is_some() || m.k.is_some()) {
            return Err(validation("model.phi", "give either phi or (m, k), not both"));
        }
        if m.m.is_some() != m.k.is_some() {
            return Err(validation("model.m", "m and k must be given together"));
        }
        if let Some(phi) = m.phi {
            if !phi.is_finite() {
                return Err(validation("model.phi", "must be finite"));
            }
        }
        if !(0.0..=1.0).contains(&m.c_e) {
            return Err(validation("model.c_e", "must lie in [0, 1]"));
        }
        if !(m.nu > 0.0) {
            return Err(validation("model.nu", "must be > 0"));
        }
        if m.n_max < 2 {
            return Err(validation("model.n_max", "must be >= 2"));
        }
        if let Some(r) = m.detuning_ratio {
            if !(r > 0.0) {
                return Err(validation("model.detuning_ratio", "must be > 0"));
            }
        }
        if let Some(p) = m.thermal {
            ThermalAtomSpec::new(p).map_err(|e| validation("model.thermal", e.to_string()))?;
        }
        let n = &self.noise;
        for (field, v) in [
            ("noise.kappa", n.kappa),
            ("noise.n_th", n.n_th),
            ("noise.beam_sigma", n.beam_sigma),
            ("noise.gamma1", n.gamma1),
            ("noise.gamma3", n.gamma3),
            ("noise.t_prep", n.t_prep),
            ("noise.tau", n.tau),
        ] {
            if !(v >= 0.0) {
                return Err(validation(field, "must be >= 0"));
            }
        }
        if n.beam_samples.is_some() && n.seed.is_none() {
            return Err(validation("noise.seed", "required when beam_samples is set"));
        }
        if let Some(s) = &self.run.sweep {
            for &c in &s.c_e.values()? {
                if !(0.0..=1.0).contains(&c) {
                    return Err(validation("run.sweep.c_e", "values must lie in [0, 1]"));
                }
            }
            if s.k.values()?.iter().any(|&k| k == 0) {
                return Err(validation("run.sweep.k", "K = 0 gives no wall"));
            }
        }
        if self.run.times.iter().any(|t| !(*t >= 0.0)) {
            return Err(validation("run.times", "must be >= 0"));
        }
        Ok(())
    }

    pub fn phi(&self) -> Result<f64> {
        match (self.model.phi, self.model.m, self.model.k) {
            (Some(p), _, _) => Ok(p),
            (None, Some(m), Some(k)) => Ok(phi_for_wall(m, k)),
            _ => Err(validation("model.phi", "either phi or (m, k) is required")),
        }
    }

    pub fn atom(&self) -> Result<AtomState> {
        let ce = self.model.c_e;
        let cg = (1.0 - ce * ce).max(0.0).sqrt();
        AtomState::new(c(cg, 0.0), c64_polar(ce, self.model.c_e_phase))
    }

    pub fn dim(&self) -> Result<FockDim> {
        FockDim::new(self.model.n_max)
    }

    fn full_params(&self) -> Result<Option<ModelParams>> {
        match self.model.detuning_ratio {
            Some(r) => Ok(Some(ModelParams::uniform_for_phi(1.0, r, self.phi()?))),
            None => Ok(None),
        }
    }

    /// Integrated coupling seen by the two-photon reference dynamics.
    pub fn effective_phi(&self) -> Result<f64> {
        match self.full_params()? {
            Some(p) => p.effective_phi(),
            None => self.phi(),
        }
    }
}

fn c64_polar(r: f64, theta: f64) -> linalg::c64 {
    linalg::c64::from_polar(r, theta)
}

/// Run context after command-line overrides.
#[derive(Debug, Clone, Serialize)]
pub struct Context {
    pub command: String,
    pub config: RunConfig,
    pub seed: Option<u64>,
    pub jobs: usize,
}

impl Context {
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(&json!({ "command": self.command, "config": self.config, "seed": self.seed }))
            .expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn header(&self) -> Value {
        json!({
            "config_hash": self.config_hash(),
            "versions": {
                "micromaser": env!("CARGO_PKG_VERSION"),
                "format": FORMAT_VERSION,
            },
            "seed": self.seed,
            "command": self.command,
        })
    }

    pub fn csv_header(&self) -> String {
        let h = self.header();
        format!(
            "# config_hash: {}\n# versions: micromaser {} format {}\n# seed: {}\n# command: {}\n",
            h["config_hash"].as_str().unwrap_or(""),
            env!("CARGO_PKG_VERSION"),
            FORMAT_VERSION,
            self.seed.map_or("none".to_string(), |s| s.to_string()),
            self.command
        )
    }
}

pub enum Output {
    Json(Value),
    Csv(String),
}

fn build_kraus(cfg: &RunConfig) -> Result<KrausSet> {
    let dim = cfg.dim()?;
    if let Some(p) = cfg.model.thermal {
        let spec = ThermalAtomSpec::new(p)?;
        return Ok(kraus_thermal_atom(&spec, cfg.phi()?, StarkPhases::default(), dim));
    }
    match cfg.full_params()? {
        Some(p) => full_model_map(&p, cfg.atom()?, dim),
        None => Ok(kraus_two_photon(cfg.atom()?, cfg.phi()?, dim)),
    }
}

/// Single-atom map including beam spread and atom decay, and the effective atom rate.
fn build_map(cfg: &RunConfig, seed: Option<u64>) -> Result<(Superoperator, f64)> {
    let n = &cfg.noise;
    let dim = cfg.dim()?;
    let nu = cfg.model.nu;
    if n.beam_sigma > 0.0 {
        let scheme = match n.beam_samples {
            Some(samples) => BeamScheme::MonteCarlo { samples, seed: seed.unwrap_or(0) },
            None => BeamScheme::default(),
        };
        return Ok((beam_averaged_map(cfg.atom()?, cfg.phi()?, n.beam_sigma, dim, scheme)?, nu));
    }
    if n.gamma1 > 0.0 || n.gamma3 > 0.0 {
        let phi = cfg.phi()?;
        let tau = n.tau.max(f64::MIN_POSITIVE);
        let decay = DecayRates { gamma1: n.gamma1, gamma3: n.gamma3 };
        let d = decay_modified_map(cfg.atom()?, phi / tau, tau, decay, n.t_prep, dim)?;
        return Ok((d.map, nu * d.rate_factor));
    }
    Ok((discrete_map(&build_kraus(cfg)?), nu))
}

/// `ν(M − 1) + κ D`.
fn build_generator(cfg: &RunConfig, seed: Option<u64>) -> Result<Superoperator> {
    let (map, nu) = build_map(cfg, seed)?;
    let n = map.n;
    let mut gen = map.sub(&Superoperator::identity(n)).scaled(nu);
    if cfg.noise.kappa > 0.0 || cfg.noise.n_th > 0.0 {
        gen = gen.add(&loss_dissipator(cfg.noise.kappa, cfg.noise.n_th, cfg.dim()?));
    }
    Ok(gen)
}

fn initial_state(cfg: &RunConfig) -> Result<DensityMatrix> {
    let dim = cfg.dim()?;
    Ok(match cfg.run.initial {
        InitialState::Vacuum => DensityMatrix::fock(dim, 0),
        InitialState::Fock { n } => {
            if n >= dim.n() {
                return Err(validation("run.initial.n", "beyond n_max"));
            }
            fock_state(dim, n).to_density()
        }
        InitialState::Coherent { re, im } => coherent_state(dim, c(re, im))?.to_density(),
    })
}

fn initial_parity(cfg: &RunConfig) -> Option<usize> {
    match cfg.run.initial {
        InitialState::Vacuum => Some(0),
        InitialState::Fock { n } => Some(n % 2),
        InitialState::Coherent { .. } => None,
    }
}

fn ket_json(psi: &Ket, stop: usize) -> Result<Value> {
    let rep = MetrologyReport::of(&psi.to_density())?;
    let coeffs: Vec<[f64; 2]> = (0..psi.dim()).map(|i| [psi.amps[i].re, psi.amps[i].im]).collect();
    Ok(json!({
        "coefficients": coeffs,
        "mean_n": rep.mean_n,
        "var_n": rep.var_n,
        "purity": rep.purity,
        "qfi": rep.qfi,
        "enhancement": finite_or_null(rep.enhancement),
        "support": stop,
    }))
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

pub fn run_steady(ctx: &Context, format: Format) -> Result<Output> {
    let cfg = &ctx.config;
    let dim = cfg.dim()?;
    let atom = cfg.atom()?;
    let phi = cfg.effective_phi()?;
    let mut sectors = Vec::new();
    let mut states = Vec::new();
    for parity in [0usize, 1] {
        match parity_stationary(atom, phi, parity, dim) {
            Ok((psi, stop)) => {
                sectors.push(ket_json(&psi, stop)?);
                states.push(Some(psi));
            }
            Err(e @ (Error::Truncation { .. } | Error::Degenerate(_))) => {
                sectors.push(json!({ "error": e.to_string() }));
                states.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let walls: Vec<Value> = hard_walls_below(phi, dim.n(), 1e-9)
        .into_iter()
        .map(|(m, k)| json!({ "m": m, "K": k, "parity": if m % 2 == 0 { "even" } else { "odd" } }))
        .collect();
    match format {
        Format::Json => Ok(Output::Json(json!({
            "phi": phi,
            "c_g": [atom.c_g.re, atom.c_g.im],
            "c_e": [atom.c_e.re, atom.c_e.im],
            "walls": walls,
            "plus": sectors[0],
            "minus": sectors[1],
        }))),
        Format::Csv => {
            let mut out = ctx.csv_header();
            out.push_str("n,re_plus,im_plus,re_minus,im_minus\n");
            for i in 0..dim.n() {
                let get = |s: &Option<Ket>| s.as_ref().map_or((f64::NAN, f64::NAN), |k| (k.amps[i].re, k.amps[i].im));
                let (a, b) = get(&states[0]);
                let (x, y) = get(&states[1]);
                let _ = writeln!(out, "{i},{},{},{},{}", fmt17(a), fmt17(b), fmt17(x), fmt17(y));
            }
            Ok(Output::Csv(out))
        }
    }
}

pub fn run_evolve(ctx: &Context, format: Format) -> Result<Output> {
    let cfg = &ctx.config;
    let dim = cfg.dim()?;
    let rho = initial_state(cfg)?;
    let target = match initial_parity(cfg) {
        Some(p) if cfg.model.thermal.is_none() => parity_stationary(cfg.atom()?, cfg.effective_phi()?, p, dim)
            .ok()
            .map(|(k, _)| k.to_density()),
        _ => None,
    };
    let traj = if !cfg.run.times.is_empty() {
        let gen = build_generator(cfg, ctx.seed)?;
        evolve::evolve_continuous(&gen, &rho, &cfg.run.times)?
    } else {
        if cfg.noise.kappa > 0.0 || cfg.noise.n_th > 0.0 {
            return Err(validation("run.times", "cavity loss needs continuous times"));
        }
        let ks = if cfg.run.atoms.is_empty() { vec![0, 1, 10, 100, 1000] } else { cfg.run.atoms.clone() };
        let (map, _) = build_map(cfg, ctx.seed)?;
        evolve::evolve_checkpoints(&map, &rho, &ks)?
    };
    match format {
        Format::Csv => Ok(Output::Csv(traj.to_csv(&ctx.csv_header(), target.as_ref())?)),
        Format::Json => {
            let mut rows = Vec::new();
            for (t, s) in traj.times.iter().zip(&traj.states) {
                let f = match &target {
                    Some(x) => finite_or_null(crate::fock::fidelity(s, x)?),
                    None => Value::Null,
                };
                rows.push(json!({
                    "t": t,
                    "trace": s.trace().re,
                    "purity": s.purity(),
                    "mean_n": s.mean_n(),
                    "parity": s.parity(),
                    "fidelity": f,
                }));
            }
            Ok(Output::Json(json!({ "trajectory": rows })))
        }
    }
}

pub fn run_spectrum(ctx: &Context, format: Format) -> Result<Output> {
    let cfg = &ctx.config;
    let gen = build_generator(cfg, ctx.seed)?;
    let count = cfg.run.spectrum_count.unwrap_or(8);
    let rep = evolve::spectrum(&gen, count)?;
    match format {
        Format::Json => Ok(Output::Json(json!({
            "eigenvalues": rep.eigenvalues.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "gaps": rep.gaps.iter().map(|&g| finite_or_null(g)).collect::<Vec<_>>(),
            "gap_flags": rep.gap_flags,
            "zero_modes": rep.eigenvalues.iter().filter(|z| z.norm() < 1e-9).count(),
        }))),
        Format::Csv => {
            let mut out = ctx.csv_header();
            out.push_str("k,re,im\n");
            for (k, z) in rep.eigenvalues.iter().enumerate() {
                let _ = writeln!(out, "{k},{},{}", fmt17(z.re), fmt17(z.im));
            }
            Ok(Output::Csv(out))
        }
    }
}

pub fn run_walls(ctx: &Context, m1: Option<u64>, k1: Option<i64>, count: Option<usize>, format: Format) -> Result<Output> {
    let w = &ctx.config.run.walls;
    let m1 = m1.or(w.m1).or(ctx.config.model.m).ok_or_else(|| validation("run.walls.m1", "first wall required"))?;
    let k1 = k1.or(w.k1).or(ctx.config.model.k).ok_or_else(|| validation("run.walls.k1", "first wall required"))?;
    let count = count.unwrap_or(w.count);
    let seq = wall_sequence(m1, k1, count).map_err(|e| match e {
        Error::InvalidArgument(m) => validation("run.walls", m),
        other => other,
    })?;
    match format {
        Format::Json => Ok(Output::Json(serde_json::to_value(&seq).map_err(|e| Error::Numerical(e.to_string()))?)),
        Format::Csv => {
            let mut out = ctx.csv_header();
            out.push_str("index,m,K,parity,cos_sign\n");
            for (i, wall) in seq.walls.iter().enumerate() {
                let parity = if wall.parity() > 0 { "even" } else { "odd" };
                let _ = writeln!(out, "{},{},{},{},{}", i + 1, wall.m, wall.k, parity, wall.cos_sign);
            }
            Ok(Output::Csv(out))
        }
    }
}

pub fn run_wigner(ctx: &Context, format: Format) -> Result<Output> {
    let cfg = &ctx.config;
    let w = &cfg.run.wigner;
    let parity = match w.state.as_str() {
        "plus" => 0,
        "minus" => 1,
        other => return Err(validation("run.wigner.state", format!("expected plus or minus, got {other}"))),
    };
    let (psi, _) = parity_stationary(cfg.atom()?, cfg.effective_phi()?, parity, cfg.dim()?)?;
    let spec = GridSpec { re_min: w.re_min, re_max: w.re_max, im_min: w.im_min, im_max: w.im_max, resolution: w.resolution };
    let grid = wigner(&psi.to_density(), spec)?;
    match format {
        Format::Csv => {
            let header: String = ctx.csv_header().lines().map(|l| format!("{}\n", l.trim_start_matches("# "))).collect();
            Ok(Output::Csv(grid.to_csv(&header)))
        }
        Format::Json => Ok(Output::Json(json!({
            "spec": spec,
            "values": grid.values,
            "integral": grid.integral(),
            "inversion_asymmetry": grid.inversion_asymmetry(),
        }))),
    }
}

/// Combined effective generator for the configured noise and model.
pub fn metastable_generator(cfg: &RunConfig, seed: Option<u64>) -> Result<(StationaryPair, DfsGenerator)> {
    let dim = cfg.dim()?;
    let atom = cfg.atom()?;
    let phi = cfg.effective_phi()?;
    let (plus, sp) = parity_stationary(atom, phi, 0, dim)?;
    let (minus, sm) = parity_stationary(atom, phi, 1, dim)?;
    let pair = StationaryPair { psi_plus: plus, psi_minus: minus, atom, phi, support_plus: sp, support_minus: sm };
    let base = kraus_two_photon(atom, phi, dim);
    let nu = cfg.model.nu;
    let coh = conserved_coherence(&generator_l0(&base, 1.0), &pair)?;
    let mut gen = meta::eff_loss_generator(&pair, &coh, cfg.noise.kappa);
    if let Some(p) = cfg.full_params()? {
        let full = full_model_map(&p, atom, dim)?;
        gen = gen.add(&meta::eff_correction_generator(&pair, &coh, &full, &base, nu)?);
    }
    let n = &cfg.noise;
    if n.beam_sigma > 0.0 || n.gamma1 > 0.0 || n.gamma3 > 0.0 {
        let (map, rate) = build_map(cfg, seed)?;
        let (omega, gamma) = meta::eff_dephasing_rate(&map, &discrete_map(&base), &pair, &coh, rate)?;
        let mut d = DfsGenerator::zero();
        d.matrix[(2, 2)] = c(-gamma, -omega);
        d.matrix[(3, 3)] = c(-gamma, omega);
        d.meta.omega = omega;
        d.meta.gamma_deph = gamma;
        gen = gen.add(&d);
    }
    Ok((pair, gen))
}

pub fn run_metastable(ctx: &Context, _format: Format) -> Result<Output> {
    let cfg = &ctx.config;
    let (pair, gen) = metastable_generator(cfg, ctx.seed)?;
    let ev = gen.eigenvalues()?;
    let m = gen.meta;
    let p_plus = meta::combined_steady(&pair, (m.n_plus, m.n_minus), (m.x_plus, m.x_minus), cfg.noise.kappa, cfg.model.nu)
        .map(|s| s.p_plus)
        .ok();
    let classical = meta::dfs_eigen_and_classical(&gen)?;
    Ok(Output::Json(json!({
        "n_plus": m.n_plus,
        "n_minus": m.n_minus,
        "eta": m.eta,
        "Omega": m.omega,
        "gamma_deph": m.gamma_deph,
        "X_plus": m.x_plus,
        "X_minus": m.x_minus,
        "eigenvalues": ev.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "p_plus": p_plus,
        "classical_flag": classical.classical_flag,
    })))
}

/// One sweep grid point: coupling and wall index, evaluated at every checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepJob {
    pub c_e: f64,
    pub k_wall: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub m: u64,
    pub jobs: Vec<SweepJob>,
    pub checkpoints: Vec<u64>,
}

impl SweepPlan {
    pub fn rows(&self) -> usize {
        self.jobs.len() * self.checkpoints.len()
    }
}

pub fn sweep_plan(cfg: &RunConfig) -> Result<SweepPlan> {
    let s = cfg.run.sweep.as_ref().ok_or_else(|| validation("run.sweep", "section required"))?;
    let mut jobs = Vec::new();
    for c_e in s.c_e.values()? {
        for k_wall in s.k.values()? {
            jobs.push(SweepJob { c_e, k_wall });
        }
    }
    Ok(SweepPlan { m: s.m, jobs, checkpoints: s.checkpoints.clone() })
}

pub const SWEEP_COLUMNS: &str = "c_e,K,k,mean_n,var_n,qfi,enhancement,purity";

fn sweep_key(c_e: f64, k_wall: i64, k: u64) -> String {
    format!("{},{},{}", fmt17(c_e), k_wall, k)
}

fn run_job(cfg: &RunConfig, m: u64, job: SweepJob, checkpoints: &[u64]) -> Result<Vec<String>> {
    let dim = cfg.dim()?;
    let ce = job.c_e;
    let atom = AtomState::new(c((1.0 - ce * ce).max(0.0).sqrt(), 0.0), c64_polar(ce, cfg.model.c_e_phase))?;
    let phi = phi_for_wall(m, job.k_wall);
    let map = discrete_map(&kraus_two_photon(atom, phi, dim));
    let traj = evolve::evolve_checkpoints(&map, &DensityMatrix::fock(dim, 0), checkpoints)?;
    let mut rows = Vec::new();
    for (k, rho) in checkpoints.iter().zip(&traj.states) {
        let r = MetrologyReport::of(rho)?;
        rows.push(format!(
            "{},{},{},{},{},{}",
            sweep_key(ce, job.k_wall, *k),
            fmt17(r.mean_n),
            fmt17(r.var_n),
            fmt17(r.qfi),
            fmt17(r.enhancement),
            fmt17(r.purity)
        ));
    }
    Ok(rows)
}

fn read_existing(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty() && *l != SWEEP_COLUMNS)
        .map(str::to_string)
        .collect())
}

/// Runs the sweep, reusing rows already present in `existing_path`.
/// Returns the CSV text and the number of grid points computed.
pub fn run_sweep(ctx: &Context, existing_path: Option<&Path>) -> Result<(String, usize)> {
    let cfg = &ctx.config;
    let plan = sweep_plan(cfg)?;
    let existing = match existing_path {
        Some(p) => read_existing(p)?,
        None => Vec::new(),
    };
    let mut done = std::collections::BTreeMap::new();
    for row in existing {
        let key: Vec<&str> = row.splitn(4, ',').collect();
        if key.len() == 4 {
            done.insert(key[..3].join(","), row);
        }
    }
    let todo: Vec<SweepJob> = plan
        .jobs
        .iter()
        .copied()
        .filter(|j| plan.checkpoints.iter().any(|&k| !done.contains_key(&sweep_key(j.c_e, j.k_wall, k))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs.max(1))
        .build()
        .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    // grid points run in parallel; each one runs single-threaded so rows do not depend on --jobs
    let previous = faer::get_global_parallelism();
    faer::set_global_parallelism(faer::Par::Seq);
    let results: Vec<Result<Vec<String>>> =
        pool.install(|| todo.par_iter().map(|j| run_job(cfg, plan.m, *j, &plan.checkpoints)).collect());
    faer::set_global_parallelism(previous);
    for rows in results {
        for row in rows? {
            let key: Vec<&str> = row.splitn(4, ',').collect();
            done.insert(key[..3].join(","), row.clone());
        }
    }
    let mut out = ctx.csv_header();
    out.push_str(SWEEP_COLUMNS);
    out.push('\n');
    let mut seen = BTreeSet::new();
    for j in &plan.jobs {
        for &k in &plan.checkpoints {
            let key = sweep_key(j.c_e, j.k_wall, k);
            if seen.insert(key.clone()) {
                if let Some(row) = done.get(&key) {
                    out.push_str(row);
                    out.push('\n');
                }
            }
        }
    }
    Ok((out, todo.len()))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io { path: p.to_path_buf(), source }),
        None => {
            use std::io::Write;
            match std::io::stdout().lock().write_all(text.as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Error::Io { path: PathBuf::from("<stdout>"), source: e })
                }
                _ => Ok(()),
            }
        }
    }
}

/// Formats a command result with its provenance header.
pub fn render(ctx: &Context, output: Output) -> String {
    match output {
        Output::Csv(s) => s,
        Output::Json(v) => {
            let doc = json!({ "header": ctx.header(), "result": v });
            let mut s = serde_json::to_string_pretty(&doc).expect("json serializes");
            s.push('\n');
            s
        }
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn context_from(cli: &Cli) -> Result<Context> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(n) = cli.n_max {
        config.model.n_max = n;
    }
    if let Some(s) = cli.seed {
        config.noise.seed = Some(s);
    }
    config.validate()?;
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(Context { command: cli.command.name().to_string(), seed: config.noise.seed, config, jobs })
}

/// Executes a parsed command line; the returned code follows the documented exit codes.
pub fn run(cli: &Cli) -> Result<()> {
    let ctx = context_from(cli)?;
    let default_format = match cli.command {
        Command::Sweep | Command::Wigner => Format::Csv,
        _ => Format::Json,
    };
    let format = cli.format.unwrap_or(default_format);
    let output = match &cli.command {
        Command::Steady => run_steady(&ctx, format)?,
        Command::Evolve => run_evolve(&ctx, format)?,
        Command::Spectrum => run_spectrum(&ctx, format)?,
        Command::Walls { m1, k1, count } => run_walls(&ctx, *m1, *k1, *count, format)?,
        Command::Wigner => run_wigner(&ctx, format)?,
        Command::Metastable => run_metastable(&ctx, format)?,
        Command::Sweep => {
            let (csv, computed) = run_sweep(&ctx, cli.out.as_deref())?;
            log::info!("sweep computed {computed} grid points");
            Output::Csv(csv)
        }
    };
    write_output(cli.out.as_deref(), &render(&ctx, output))
}
