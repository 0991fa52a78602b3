//! Configuration-driven experiment runner behind the `callias` binary.
//!
//! Every run writes CSV/JSON artifacts, a `summary.json` with one entry per check and a
//! `manifest.json` (config hash, seed, versions, wall time) into the output directory.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bessel::bessel_scaled;
use crate::clifford::build_clifford;
use crate::density::{fmt17, SpectralShiftDensity};
use crate::dirac_example::{
    density_to_index, eta_density_from_samples, eta_example, limit_propagator, sample_index, winding_index, xi_closure, xi_example, ExampleConfig,
    ExampleKernels, Family, GSum, IndexDensity, PotentialV,
};
use crate::divdiff::{ScalarFunction, SimplexRule};
use crate::error::{Error, Result};
use crate::lattice::{assemble, laplace_functional_check, LatticeModel, ModelSpec};
use crate::linalg::{random_hermitian, trace};
use crate::moi::{moi_apply, HermitianOperator};
use crate::quad::{gamma, integrate_adaptive};
use crate::ssf::{eta_callias, ssf_density_single};
use crate::transform::{
    laplace, laplace_of_xi, witten_index, witten_index_from_g, xi_dminus1_from_eta, xi_from_eta, xi_k_from_eta,
    FunctionalEquationConstants, LebesgueOptions,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "CALLIAS_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    CliffordCheck,
    Ssf,
    TraceCompare,
    Transform,
    Example,
    FullPipeline,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::CliffordCheck => "clifford-check",
            Experiment::Ssf => "ssf",
            Experiment::TraceCompare => "trace-compare",
            Experiment::Transform => "transform",
            Experiment::Example => "example",
            Experiment::FullPipeline => "full-pipeline",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub clifford: Option<CliffordBlock>,
    #[serde(default)]
    pub ssf: Option<SsfBlock>,
    #[serde(default)]
    pub lattice: Option<LatticeBlock>,
    #[serde(default)]
    pub transform: Option<TransformBlock>,
    #[serde(default)]
    pub example: Option<ExampleBlock>,
    #[serde(default)]
    pub kernels: Option<KernelsBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub clifford: f64,
    pub ssf: f64,
    pub trace_gap: f64,
    pub laplace: f64,
    pub winding: f64,
    pub density_route: f64,
    pub pipeline_route: f64,
    /// absolute bound for routes whose target index is 0
    pub zero_index: f64,
    pub closure: f64,
    pub schlafli: f64,
    pub bessel_derivative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            clifford: 1e-12,
            ssf: 1e-9,
            trace_gap: 0.1,
            laplace: 1e-8,
            winding: 1e-2,
            density_route: 0.05,
            pipeline_route: 0.1,
            zero_index: 1e-2,
            closure: 0.05,
            schlafli: 1e-8,
            bessel_derivative: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliffordBlock {
    pub dims: Vec<usize>,
}

impl Default for CliffordBlock {
    fn default() -> Self {
        Self { dims: vec![1, 3, 5, 7] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SsfBlock {
    /// pair the density with `e^(-tx)` on random instances and compare with the MOI trace
    Check { order: usize, dim: usize, instances: usize, t_values: Vec<f64> },
    /// η of a lattice model, written as density JSON
    Compute { model: ModelSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub model: ModelSpec,
    pub t_list: Vec<f64>,
    #[serde(default = "default_lattice_rule")]
    pub simplex_order: usize,
}

fn default_lattice_rule() -> usize {
    8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformBlock {
    pub d: usize,
    /// density JSON file holding η
    pub eta: PathBuf,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default = "default_laplace_t")]
    pub laplace_t: Vec<f64>,
    #[serde(default)]
    pub lebesgue: LebesgueOptions,
}

fn default_laplace_t() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

/// `count` equally spaced points from `start` to `stop`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self { start: 0.0, stop: 4.0, count: 41 }
    }
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.count - 1) as f64)
            .collect()
    }

    /// `start:stop:count`
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || Error::Config(format!("grid `{text}` is not start:stop:count"));
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(Self {
            start: parts[0].trim().parse().map_err(|_| bad())?,
            stop: parts[1].trim().parse().map_err(|_| bad())?,
            count: parts[2].trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Winding,
    Density,
    Pipeline,
    All,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleBlock {
    #[serde(default = "three")]
    pub d: usize,
    pub potential: Family,
    #[serde(default = "all_methods")]
    pub method: Method,
    #[serde(default)]
    pub integrators: ExampleConfig,
    #[serde(default)]
    pub lebesgue: LebesgueOptions,
    /// grids for the η/ξ closure check of the full pipeline
    #[serde(default = "default_mu_grid")]
    pub mu: Grid,
    #[serde(default = "default_lambda_grid")]
    pub lambda: Grid,
}

fn three() -> usize {
    3
}

fn all_methods() -> Method {
    Method::All
}

fn default_mu_grid() -> Grid {
    Grid { start: 0.0, stop: 4.0, count: 121 }
}

fn default_lambda_grid() -> Grid {
    Grid { start: 0.5, stop: 4.0, count: 8 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KernelCheck {
    Schlafli,
    Derivative,
    Limit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsBlock {
    #[serde(default = "three")]
    pub d: usize,
    pub check: KernelCheck,
    #[serde(default = "default_kernel_order")]
    pub simplex_order: usize,
}

fn default_kernel_order() -> usize {
    16
}

/// One configured tolerance comparison.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), value, tolerance, pass: value <= tolerance }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

/// A problem found by [`validate`], tied to a dotted field path.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

#[derive(Parser, Debug)]
#[command(name = "callias", version, about = "Spectral-shift and index experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Clifford anticommutation and trace identities
    CliffordCheck {
        #[arg(long)]
        config: Option<PathBuf>,
        /// odd dimensions to check (repeatable)
        #[arg(long = "d")]
        dims: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral shift densities: random pairing checks or η of a lattice model
    Ssf {
        #[arg(value_enum)]
        action: Option<SsfAction>,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Heat-trace difference of a lattice model against the potential-side formula
    TraceCompare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ξ from η, or the Witten index from η
    Transform {
        #[arg(value_enum)]
        action: TransformAction,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        eta: Option<PathBuf>,
        #[arg(long)]
        d: Option<usize>,
        /// start:stop:count
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The massless Dirac–Schrödinger example
    Example {
        #[arg(value_enum)]
        action: ExampleAction,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        potential: Option<PotentialName>,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, value_enum)]
        check: Option<KernelCheck>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Three index routes plus the η/ξ closure for one potential
    FullPipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        potential: Option<PotentialName>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Schema and plausibility checks of a config file
    Validate { config: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SsfAction {
    Check,
    Compute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformAction {
    Xi,
    Witten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExampleAction {
    Index,
    Kernels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PotentialName {
    Hedgehog,
    Scalar,
    Zero,
}

impl PotentialName {
    fn family(self) -> Family {
        match self {
            PotentialName::Hedgehog => Family::Hedgehog { width: 1.0 },
            PotentialName::Scalar => Family::Scalar { width: 1.0, amplitude: 1.0 },
            PotentialName::Zero => Family::Zero { dim: 2 },
        }
    }
}

/// Exit status for a library error: configuration problems are usage errors, the rest numeric.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) => EXIT_USAGE,
        _ => EXIT_NUMERIC,
    }
}

/// Parse arguments, run, print the summary and return the exit status.
pub fn main_with_args(args: impl IntoIterator<Item = OsString>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    if let Command::Validate { config } = &cli.command {
        return match read_config_value(config) {
            Ok(value) => {
                let issues = validate(&value);
                println!("{}", to_json17(&serde_json::to_value(&issues).expect("issues serialize")));
                if issues.is_empty() {
                    EXIT_OK
                } else {
                    EXIT_USAGE
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                exit_code(&e)
            }
        };
    }
    match run(&cli.command) {
        Ok((summary, dir)) => {
            for c in &summary.checks {
                println!(
                    "{} {}: {} (tolerance {})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    fmt17(c.value),
                    fmt17(c.tolerance)
                );
            }
            println!("artifacts: {}", dir.display());
            if summary.pass {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(text) = std::env::var(THREADS_ENV) {
        let n: usize = text
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{text}`")))?;
        if n == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn read_config_value(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_config(value: &Value) -> std::result::Result<ExperimentConfig, Issue> {
    serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let path = e.path().to_string();
        Issue { field: if path == "." { String::new() } else { path }, message: e.into_inner().to_string() }
    })
}

/// Schema and plausibility checks; an empty list means the config can run.
pub fn validate(value: &Value) -> Vec<Issue> {
    let config = match parse_config(value) {
        Ok(c) => c,
        Err(issue) => return vec![issue],
    };
    let mut issues = Vec::new();
    let mut issue = |field: &str, message: String| issues.push(Issue { field: field.into(), message });
    let odd = |d: usize| d % 2 == 1;
    let required = match config.experiment {
        Experiment::CliffordCheck => None,
        Experiment::Ssf => Some(("ssf", config.ssf.is_some())),
        Experiment::TraceCompare => Some(("lattice", config.lattice.is_some())),
        Experiment::Transform => Some(("transform", config.transform.is_some())),
        Experiment::Example => Some(("example", config.example.is_some() || config.kernels.is_some())),
        Experiment::FullPipeline => Some(("example", config.example.is_some())),
    };
    if let Some((field, false)) = required {
        issue(field, format!("block is required for experiment `{}`", config.experiment.name()));
    }
    if let Some(block) = &config.clifford {
        for (i, &d) in block.dims.iter().enumerate() {
            if !odd(d) || d > 13 {
                issue(&format!("clifford.dims[{i}]"), format!("dimension must be odd and at most 13, got {d}"));
            }
        }
    }
    if let Some(SsfBlock::Check { order, dim, instances, t_values }) = &config.ssf {
        if *order == 0 || *order > 6 {
            issue("ssf.order", format!("order must be in 1..=6, got {order}"));
        }
        if *dim == 0 || *instances == 0 {
            issue("ssf.dim", "dimension and instance count must be positive".into());
        }
        if t_values.iter().any(|&t| !(t > 0.0)) {
            issue("ssf.t_values", "t must be positive".into());
        }
    }
    let model_issues = |prefix: &str, model: &ModelSpec| {
        let mut out = Vec::new();
        if !odd(model.d) {
            out.push(Issue { field: format!("{prefix}.d"), message: format!("d must be odd, got {}", model.d) });
            return out;
        }
        let r = 1usize << ((model.d - 1) / 2);
        let m = if matches!(model.potential, crate::lattice::Potential::Hedgehog { .. }) { r } else { model.m };
        let dim = (model.n as f64).powi(model.d as i32) * (r * m) as f64;
        if dim > model.cap as f64 {
            out.push(Issue {
                field: format!("{prefix}.cap"),
                message: format!("operator dimension {dim} exceeds cap {}", model.cap),
            });
        } else if let Err(e) = LatticeModel::new(model.clone()) {
            out.push(Issue { field: prefix.into(), message: e.to_string() });
        }
        out
    };
    if let Some(SsfBlock::Compute { model }) = &config.ssf {
        issues.extend(model_issues("ssf.model", model));
    }
    if let Some(block) = &config.lattice {
        issues.extend(model_issues("lattice.model", &block.model));
        if block.t_list.is_empty() || block.t_list.iter().any(|&t| !(t > 0.0)) {
            issues.push(Issue { field: "lattice.t_list".into(), message: "t values must be positive".into() });
        }
    }
    if let Some(block) = &config.transform {
        if !odd(block.d) {
            issues.push(Issue { field: "transform.d".into(), message: format!("d must be odd, got {}", block.d) });
        }
        if block.grid.count == 0 || block.grid.start < 0.0 {
            issues.push(Issue { field: "transform.grid".into(), message: "need count >= 1 and start >= 0".into() });
        }
        if block.laplace_t.iter().any(|&t| !(t > 0.0)) {
            issues.push(Issue { field: "transform.laplace_t".into(), message: "t values must be positive".into() });
        }
    }
    if let Some(block) = &config.example {
        if !odd(block.d) || block.d < 3 {
            issues.push(Issue { field: "example.d".into(), message: format!("d must be odd and >= 3, got {}", block.d) });
        } else if let Err(e) = PotentialV::new(block.d, block.potential.clone()) {
            issues.push(Issue { field: "example.potential".into(), message: e.to_string() });
        }
    }
    if let Some(block) = &config.kernels {
        if !odd(block.d) || block.d < 3 {
            issues.push(Issue { field: "kernels.d".into(), message: format!("d must be odd and >= 3, got {}", block.d) });
        }
    }
    issues
}

fn load_or(config: &Option<PathBuf>, experiment: Experiment, default: impl FnOnce() -> ExperimentConfig) -> Result<ExperimentConfig> {
    let config = match config {
        Some(path) => {
            let value = read_config_value(path)?;
            let issues = validate(&value);
            if let Some(first) = issues.first() {
                let all: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
                return Err(Error::Config(format!("invalid config ({} issue(s), first at `{}`): {}", issues.len(), first.field, all.join("; "))));
            }
            parse_config(&value).map_err(|i| Error::Config(i.message))?
        }
        None => default(),
    };
    if config.experiment != experiment {
        return Err(Error::Config(format!(
            "config is for `{}`, not `{}`",
            config.experiment.name(),
            experiment.name()
        )));
    }
    Ok(config)
}

fn bare(experiment: Experiment) -> ExperimentConfig {
    ExperimentConfig {
        experiment,
        seed: 0,
        output_dir: None,
        tolerances: Tolerances::default(),
        clifford: None,
        ssf: None,
        lattice: None,
        transform: None,
        example: None,
        kernels: None,
    }
}

fn example_block(potential: Family) -> ExampleBlock {
    ExampleBlock {
        d: 3,
        potential,
        method: Method::All,
        integrators: ExampleConfig::default(),
        lebesgue: LebesgueOptions::default(),
        mu: default_mu_grid(),
        lambda: default_lambda_grid(),
    }
}

fn missing(block: &str) -> Error {
    Error::Config(format!("the `{block}` block is required"))
}

/// Run one subcommand; returns the summary and the artifact directory.
pub fn run(command: &Command) -> Result<(Summary, PathBuf)> {
    let started = Instant::now();
    let (config, out) = match command {
        Command::CliffordCheck { config, dims, out } => {
            let mut c = load_or(config, Experiment::CliffordCheck, || bare(Experiment::CliffordCheck))?;
            if !dims.is_empty() {
                c.clifford = Some(CliffordBlock { dims: dims.clone() });
            }
            (c, out)
        }
        Command::Ssf { config, out, action } => {
            let c = load_or(&Some(config.clone()), Experiment::Ssf, || bare(Experiment::Ssf))?;
            let mode_ok = match (action, &c.ssf) {
                (Some(SsfAction::Check), Some(SsfBlock::Compute { .. })) | (Some(SsfAction::Compute), Some(SsfBlock::Check { .. })) => false,
                _ => true,
            };
            if !mode_ok {
                return Err(Error::Config("the ssf block mode does not match the requested action".into()));
            }
            (c, out)
        }
        Command::TraceCompare { config, out } => {
            (load_or(&Some(config.clone()), Experiment::TraceCompare, || bare(Experiment::TraceCompare))?, out)
        }
        Command::Transform { config, eta, d, grid, out, .. } => {
            let mut c = load_or(config, Experiment::Transform, || bare(Experiment::Transform))?;
            if c.transform.is_none() {
                let eta = eta.clone().ok_or_else(|| Error::Config("transform needs --eta or a config".into()))?;
                c.transform = Some(TransformBlock {
                    d: 3,
                    eta,
                    grid: Grid::default(),
                    laplace_t: default_laplace_t(),
                    lebesgue: LebesgueOptions::default(),
                });
            }
            let block = c.transform.as_mut().expect("set above");
            if let Some(e) = eta {
                block.eta = e.clone();
            }
            if let Some(d) = d {
                block.d = *d;
            }
            if let Some(g) = grid {
                block.grid = Grid::parse(g)?;
            }
            (c, out)
        }
        Command::Example { config, potential, method, d, check, out, action } => {
            let mut c = load_or(config, Experiment::Example, || bare(Experiment::Example))?;
            match action {
                ExampleAction::Index => {
                    if c.example.is_none() {
                        c.example = Some(example_block(PotentialName::Hedgehog.family()));
                    }
                    let block = c.example.as_mut().expect("set above");
                    if let Some(p) = potential {
                        block.potential = p.family();
                    }
                    if let Some(m) = method {
                        block.method = *m;
                    }
                    if let Some(d) = d {
                        block.d = *d;
                    }
                }
                ExampleAction::Kernels => {
                    if c.kernels.is_none() {
                        c.kernels = Some(KernelsBlock { d: 3, check: KernelCheck::Schlafli, simplex_order: default_kernel_order() });
                    }
                    let block = c.kernels.as_mut().expect("set above");
                    if let Some(d) = d {
                        block.d = *d;
                    }
                    if let Some(k) = check {
                        block.check = *k;
                    }
                }
            }
            (c, out)
        }
        Command::FullPipeline { config, potential, out } => {
            let mut c = load_or(config, Experiment::FullPipeline, || bare(Experiment::FullPipeline))?;
            if c.example.is_none() {
                c.example = Some(example_block(PotentialName::Hedgehog.family()));
            }
            if let Some(p) = potential {
                c.example.as_mut().expect("set above").potential = p.family();
            }
            (c, out)
        }
        Command::Validate { .. } => unreachable!("validate is handled before run"),
    };
    // overrides are re-validated through the same schema
    let issues = validate(&serde_json::to_value(&config)?);
    if !issues.is_empty() {
        let all: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
        return Err(Error::Config(all.join("; ")));
    }
    let dir = out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("callias-out").join(config.experiment.name()));
    std::fs::create_dir_all(&dir)?;
    let mut artifacts = Artifacts { dir: dir.clone(), written: Vec::new() };
    let checks = match command {
        Command::CliffordCheck { .. } => clifford_check(&config, &mut artifacts)?,
        Command::Ssf { .. } => ssf(&config, &mut artifacts)?,
        Command::TraceCompare { .. } => trace_compare(&config, &mut artifacts)?,
        Command::Transform { action, .. } => transform(&config, *action, &mut artifacts)?,
        Command::Example { action: ExampleAction::Index, .. } => example_index_run(&config, &mut artifacts, false)?,
        Command::Example { action: ExampleAction::Kernels, .. } => kernels(&config, &mut artifacts)?,
        Command::FullPipeline { .. } => example_index_run(&config, &mut artifacts, true)?,
        Command::Validate { .. } => unreachable!(),
    };
    let summary = Summary { experiment: config.experiment.name().into(), pass: checks.iter().all(|c| c.pass), checks };
    artifacts.json("summary.json", &summary)?;
    let manifest = Manifest::new(&config, started, &artifacts.written)?;
    artifacts.json("manifest.json", &manifest)?;
    Ok((summary, dir))
}

#[derive(Serialize)]
struct Manifest {
    experiment: String,
    config_sha256: String,
    seed: u64,
    versions: Versions,
    threads: usize,
    started_unix_s: f64,
    wall_time_s: f64,
    artifacts: Vec<String>,
    config: ExperimentConfig,
}

#[derive(Serialize)]
struct Versions {
    callias: &'static str,
    os: &'static str,
    arch: &'static str,
}

impl Manifest {
    fn new(config: &ExperimentConfig, started: Instant, written: &[String]) -> Result<Self> {
        let canonical = serde_json::to_vec(config)?;
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        let wall = started.elapsed().as_secs_f64();
        Ok(Self {
            experiment: config.experiment.name().into(),
            config_sha256: hex::encode(Sha256::digest(&canonical)),
            seed: config.seed,
            versions: Versions { callias: env!("CARGO_PKG_VERSION"), os: std::env::consts::OS, arch: std::env::consts::ARCH },
            threads: rayon::current_num_threads(),
            started_unix_s: now - wall,
            wall_time_s: wall,
            artifacts: written.to_vec(),
            config: config.clone(),
        })
    }
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

/// A CSV cell: floats get 17 significant digits.
enum Cell {
    F(f64),
    I(i64),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}

impl Artifacts {
    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::F(x) => fmt17(*x),
                    Cell::I(i) => i.to_string(),
                })
                .collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        self.write(name, &text)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let text = to_json17(&serde_json::to_value(value)?);
        self.write(name, &(text + "\n"))
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.dir.join(name), text)?;
        self.written.push(name.into());
        Ok(())
    }
}

/// Pretty JSON with every float written to 17 significant digits.
pub fn to_json17(value: &Value) -> String {
    fn go(v: &Value, indent: usize, out: &mut String) {
        let pad = |n: usize| "  ".repeat(n);
        match v {
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    let _ = write!(out, "{i}");
                } else if let Some(u) = n.as_u64() {
                    let _ = write!(out, "{u}");
                } else {
                    out.push_str(&fmt17(n.as_f64().unwrap_or(f64::NAN)));
                }
            }
            Value::Array(items) if !items.is_empty() => {
                out.push_str("[\n");
                for (i, item) in items.iter().enumerate() {
                    out.push_str(&pad(indent + 1));
                    go(item, indent + 1, out);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                out.push_str(&pad(indent));
                out.push(']');
            }
            Value::Object(map) if !map.is_empty() => {
                out.push_str("{\n");
                for (i, (k, item)) in map.iter().enumerate() {
                    out.push_str(&pad(indent + 1));
                    out.push_str(&Value::String(k.clone()).to_string());
                    out.push_str(": ");
                    go(item, indent + 1, out);
                    out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
                }
                out.push_str(&pad(indent));
                out.push('}');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let mut out = String::new();
    go(value, 0, &mut out);
    out
}

fn clifford_check(config: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let dims = config.clifford.clone().unwrap_or_default().dims;
    let tol = config.tolerances.clifford;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for d in dims {
        let rep = build_clifford(d)?;
        let (anti, tr) = (rep.anticommutation_residual(), rep.permutation_trace_residual());
        rows.push(vec![d.into(), rep.r.into(), anti.into(), tr.into()]);
        checks.push(Check::at_most(format!("d={d} anticommutation"), anti, tol));
        checks.push(Check::at_most(format!("d={d} trace identity"), tr, tol));
    }
    art.csv("residuals.csv", &["d", "rank", "anticommutation_residual", "trace_residual"], &rows)?;
    Ok(checks)
}

fn ssf(config: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    match config.ssf.as_ref().ok_or_else(|| missing("ssf"))? {
        SsfBlock::Check { order, dim, instances, t_values } => {
            let n = *order;
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for i in 0..*instances {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(i as u64);
                let a = HermitianOperator::new(random_hermitian(&mut rng, *dim, 1.0))?;
                let t0 = random_hermitian(&mut rng, *dim, 1.0);
                let ts: Vec<_> = (0..n).map(|_| random_hermitian(&mut rng, *dim, 1.0)).collect();
                let density = ssf_density_single(n, &a, &t0, &ts)?;
                let ops = vec![&a; n + 1];
                for &t in t_values {
                    let f = ScalarFunction::exp(t);
                    let direct = trace(&(&t0 * moi_apply(&f, n, &ops, &ts)?));
                    let paired = density.pair(&f, n)?;
                    let rel = (paired - direct).norm() / direct.norm().max(f64::MIN_POSITIVE);
                    worst = worst.max(rel);
                    rows.push(vec![i.into(), t.into(), paired.re.into(), direct.re.into(), rel.into()]);
                }
            }
            art.csv("pairing.csv", &["instance", "t", "paired", "direct", "relative_error"], &rows)?;
            Ok(vec![Check::at_most("pairing relative error", worst, config.tolerances.ssf)])
        }
        SsfBlock::Compute { model } => {
            let lattice = LatticeModel::new(model.clone())?;
            let eta = eta_callias(&lattice, &model.phi)?;
            art.write("eta.json", &eta.to_json())?;
            let l1 = eta.l1_norm();
            Ok(vec![Check { name: "eta L1 norm is finite".into(), value: l1, tolerance: f64::INFINITY, pass: l1.is_finite() }])
        }
    }
}

fn trace_compare(config: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let block = config.lattice.as_ref().ok_or_else(|| missing("lattice"))?;
    let model = LatticeModel::new(block.model.clone())?;
    let spectra = assemble(&model)?.heat_spectra()?;
    let rule = SimplexRule::uniform(model.d() - 1, block.simplex_order);
    let rows = laplace_functional_check(&model, &block.model.phi, &spectra, &block.t_list, &rule, f64::INFINITY)?;
    let csv: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| vec![r.t.into(), r.lhs.into(), r.from_xi.into(), r.gap().into(), r.from_eta.into(), r.floor.into()])
        .collect();
    art.csv("trace_compare.csv", &["t", "lhs", "rhs", "relgap", "rhs_from_eta", "floor"], &csv)?;
    Ok(rows.iter().map(|r| Check::at_most(format!("t={} relative gap", fmt17(r.t)), r.gap(), config.tolerances.trace_gap)).collect())
}

fn transform(config: &ExperimentConfig, action: TransformAction, art: &mut Artifacts) -> Result<Vec<Check>> {
    let block = config.transform.as_ref().ok_or_else(|| missing("transform"))?;
    let text = std::fs::read_to_string(&block.eta)
        .map_err(|e| Error::Config(format!("cannot read η from {}: {e}", block.eta.display())))?;
    let eta = SpectralShiftDensity::from_json(&text)?;
    let d = block.d;
    match action {
        TransformAction::Xi => {
            let xi = xi_from_eta(&eta, d)?;
            let xi_k = xi_k_from_eta(&eta, d)?;
            let xi_top = xi_dminus1_from_eta(&eta, d);
            let mut checks = Vec::new();
            if let Err(e) = &xi_top {
                eprintln!("note: ξ^(d-1) column left as NaN: {e}");
            }
            let rows: Vec<Vec<Cell>> = block
                .grid
                .points()
                .iter()
                .map(|&l| {
                    let top = xi_top.as_ref().map(|x| x.eval(l).re).unwrap_or(f64::NAN);
                    vec![l.into(), xi.eval(l).re.into(), xi_k.eval(l).re.into(), top.into()]
                })
                .collect();
            art.csv("xi.csv", &["lambda", "xi", "xi_k", "xi_dminus1"], &rows)?;
            let k = FunctionalEquationConstants::new(d)?;
            let mut worst = 0.0f64;
            for &t in &block.laplace_t {
                let lhs = laplace_of_xi(&xi, t)?;
                let rhs = laplace(&eta, t)? * (-k.laplace_factor * t.powf(-(d as f64) / 2.0));
                worst = worst.max((lhs - rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE));
            }
            checks.push(Check::at_most("Laplace identity relative residual", worst, config.tolerances.laplace));
            Ok(checks)
        }
        TransformAction::Witten => {
            let report = witten_index(&eta, d, &block.lebesgue)?;
            art.json("witten.json", &serde_json::json!({
                "L": report.l,
                "index": report.index,
                "diagnostics": {
                    "minus_xi_dminus1_at_zero": report.minus_xi_at_zero,
                    "lebesgue": report.lebesgue,
                },
            }))?;
            let diff = (report.index - report.minus_xi_at_zero).abs();
            Ok(vec![Check::at_most(
                "index vs -ξ^(d-1)(0+)",
                diff,
                10.0 * block.lebesgue.rel_tol * report.index.abs().max(block.lebesgue.abs_tol) + block.lebesgue.abs_tol,
            )])
        }
    }
}

/// Route check: relative to the winding value when it is an integer of size ≥ 1, absolute at 0.
fn route_check(name: &str, value: f64, target: f64, rel: f64, tol: &Tolerances) -> Check {
    if target.round() == 0.0 {
        Check::at_most(format!("{name} |value|"), value.abs(), tol.zero_index)
    } else {
        Check::at_most(format!("{name} relative deviation"), (value - target).abs() / target.abs(), rel)
    }
}

fn example_index_run(config: &ExperimentConfig, art: &mut Artifacts, full: bool) -> Result<Vec<Check>> {
    let block = config.example.as_ref().ok_or_else(|| missing("example"))?;
    let tol = &config.tolerances;
    let v = PotentialV::new(block.d, block.potential.clone())?;
    let integrators = &block.integrators;
    let method = if full { Method::All } else { block.method };
    let wants = |m: Method| method == Method::All || method == m;
    let mut report = serde_json::Map::new();
    let mut checks = Vec::new();
    report.insert("potential".into(), serde_json::to_value(&block.potential)?);

    let mut target = None;
    if wants(Method::Winding) {
        let prop = integrators.propagator;
        let w = winding_index(|x| limit_propagator(&v, x, &prop), block.d, &integrators.winding)?;
        checks.push(Check::at_most("winding quantization", (w.index - w.index.round()).abs(), tol.winding));
        target = Some(w.index);
        report.insert("winding".into(), serde_json::to_value(&w)?);
    }
    let needs_samples = wants(Method::Density) || wants(Method::Pipeline);
    if needs_samples {
        let density = IndexDensity::new(v.clone(), integrators.xint.clone(), integrators.propagator)?;
        let samples = sample_index(&density, &integrators.zint)?;
        let goal = |x: f64| target.unwrap_or(x.round());
        if wants(Method::Density) {
            let value = density_to_index(block.d) * samples.integral.re;
            checks.push(route_check("density route", value, goal(value), tol.density_route, tol));
            report.insert(
                "density".into(),
                serde_json::json!({
                    "integral": samples.integral,
                    "std_error": samples.std_error,
                    "index": value,
                }),
            );
        }
        let kernels = ExampleKernels::new(block.d, integrators.simplex_order)?;
        if wants(Method::Pipeline) {
            let g = GSum::new(&samples, &kernels);
            let (index, detail) = if g.is_zero() {
                (0.0, Value::Null)
            } else {
                let r = witten_index_from_g(|x| g.eval(x), block.d, &block.lebesgue)?;
                (r.minus_xi_at_zero, serde_json::to_value(&r)?)
            };
            checks.push(route_check("pipeline route", index, goal(index), tol.pipeline_route, tol));
            report.insert("pipeline".into(), serde_json::json!({ "minus_xi_dminus1_at_zero": index, "report": detail }));
        }
        if full {
            let mu = block.mu.points();
            let lambda = block.lambda.points();
            let gap = xi_closure(&samples, &kernels, &mu, &lambda)?;
            checks.push(Check::at_most("ξ vs ξ from η closure", gap, tol.closure));
            let eta = eta_example(&samples, &kernels, &mu)?;
            let xi = xi_example(&samples, &kernels, &lambda)?;
            art.write("eta.json", &eta_density_from_samples(&mu, &eta)?.to_json())?;
            art.csv("eta.csv", &["mu", "eta"], &mu.iter().zip(&eta).map(|(&m, &e)| vec![m.into(), e.into()]).collect::<Vec<_>>())?;
            art.csv("xi.csv", &["lambda", "xi"], &lambda.iter().zip(&xi).map(|(&l, &x)| vec![l.into(), x.into()]).collect::<Vec<_>>())?;
            report.insert("closure_gap".into(), gap.into());
        }
    }
    art.json(if full { "pipeline.json" } else { "index.json" }, &Value::Object(report))?;
    Ok(checks)
}

fn kernels(config: &ExperimentConfig, art: &mut Artifacts) -> Result<Vec<Check>> {
    let block = config.kernels.as_ref().ok_or_else(|| missing("kernels"))?;
    let d = block.d;
    let nu = d as f64 / 2.0 - 1.0;
    let values = [0.5, 1.0, 2.0];
    match block.check {
        KernelCheck::Schlafli => {
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for a in values {
                for t in values {
                    let g = |mu: f64| (-t * mu).exp() * bessel_scaled(nu, a, mu).unwrap_or(f64::NAN);
                    let value = integrate_adaptive(g, 0.0, 80.0 / t, 1e-14, 40);
                    let exact = t.powf(-nu - 1.0) * (-a / t).exp();
                    let residual = (value - exact).abs() / exact;
                    worst = worst.max(residual);
                    rows.push(vec![a.into(), t.into(), value.into(), exact.into(), residual.into()]);
                }
            }
            art.csv("schlafli.csv", &["a", "t", "integral", "exact", "residual"], &rows)?;
            Ok(vec![Check::at_most("Schläfli residual", worst, config.tolerances.schlafli)])
        }
        KernelCheck::Derivative => {
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for order in [nu, d as f64 - 1.0] {
                for a in values {
                    for lambda in [0.3, 2.0, 9.0, 40.0] {
                        let f = |l: f64| bessel_scaled(order, a, l);
                        let h = 1e-3 * f64::max(lambda, 1.0);
                        let d1 = (f(lambda + h)? - f(lambda - h)?) / (2.0 * h);
                        let d2 = (f(lambda + h / 2.0)? - f(lambda - h / 2.0)?) / h;
                        let numeric = (4.0 * d2 - d1) / 3.0;
                        let exact = bessel_scaled(order - 1.0, a, lambda)?;
                        let residual = (numeric - exact).abs() / exact.abs().max(1.0);
                        worst = worst.max(residual);
                        rows.push(vec![order.into(), a.into(), lambda.into(), numeric.into(), exact.into(), residual.into()]);
                    }
                }
            }
            art.csv("derivative.csv", &["nu", "a", "lambda", "numeric", "exact", "residual"], &rows)?;
            Ok(vec![Check::at_most("Bessel derivative identity", worst, config.tolerances.bessel_derivative)])
        }
        KernelCheck::Limit => {
            let k = ExampleKernels::new(d, block.simplex_order)?;
            let mass: f64 = k.rule.weights.iter().sum();
            let z = vec![0.25; d];
            let mut rows = Vec::new();
            let mut worst = 0.0f64;
            for mu in [0.0, 0.5, 2.0, 5.0] {
                let value = k.omega(mu, &z)?;
                let exact = 0.5 * mass * mu.powf(nu) / gamma(d as f64 / 2.0);
                let residual = (value - exact).abs() / exact.abs().max(1.0);
                worst = worst.max(residual);
                rows.push(vec![mu.into(), value.into(), exact.into(), residual.into()]);
            }
            art.csv("limit.csv", &["mu", "omega", "exact", "residual"], &rows)?;
            Ok(vec![Check::at_most("a → 0 limit", worst, 1e-12)])
        }
    }
}
