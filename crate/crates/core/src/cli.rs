//! The `lcsample` command line.
//!
//! Every command is deterministic given its flags and `--seed`. Where work is
//! split into independent cells (one per `kappa`), cell `k` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` with stream number `k`, so rows do not
//! depend on execution order.
//!
//! Exit status: 0 when every checked bound holds, 2 on a bound violation, 3 on
//! a class violation, 4 on I/O or configuration errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::envelope::{envelope_query_budget, EnvelopeReport};
use crate::error::Error;
use crate::hard_family::{verify_family, HardFamily, HardFamilyReport};
use crate::hit_and_run::{
    norm, run_chain_with, IsotropicGaussian, MultivariateOracle, MultivariatePotential, Separable,
};
use crate::numerics::normalizing_constant;
use crate::oracle::{AnyPotential, Potential, PotentialKind, PotentialSpec};
use crate::rejection::{trial_cap, UnivariateSampler, DEFAULT_RHO_FLOOR};
use crate::targets::Target;

#[derive(Debug, Parser)]
#[command(name = "lcsample", version, about = "Query-metered sampling from strongly log-concave targets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw samples to a file, with a JSON sidecar of query totals.
    Sample(ExperimentConfig),
    /// Print the envelope built for each kappa.
    EnvelopeInspect(ExperimentConfig),
    /// Sweep kappa and tabulate envelope queries and acceptance.
    BenchQueries {
        #[command(flatten)]
        config: ExperimentConfig,
        /// Report samples per second instead of samples per query
        /// (not reproducible).
        #[arg(long)]
        wall_clock: bool,
    },
    /// Check the hard-family bounds and run the identification experiment.
    HardfamilyVerify(ExperimentConfig),
    /// Run a Hit-and-Run chain and print per-step query counts.
    Hitandrun {
        #[command(flatten)]
        config: ExperimentConfig,
        #[arg(long, default_value_t = 10)]
        dimension: usize,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentConfig {
    /// gaussian, skewed, hard:<i>, or a path to a potential JSON file.
    #[arg(long, default_value = "gaussian")]
    pub target: String,
    /// Condition number; repeat or separate with commas for a sweep.
    #[arg(long = "kappa", value_delimiter = ',')]
    pub kappa: Vec<f64>,
    /// Cap the number of trials so that the output is within this total
    /// variation distance of the target.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Assumed lower bound on the acceptance probability in capped mode.
    #[arg(long, default_value_t = DEFAULT_RHO_FLOOR)]
    pub rho_floor: f64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl ExperimentConfig {
    fn kappas(&self, default: &[f64]) -> Result<Vec<f64>, CliError> {
        let ks = if self.kappa.is_empty() {
            default.to_vec()
        } else {
            self.kappa.clone()
        };
        if let Some(k) = ks.iter().find(|k| !(**k >= 1.0 && k.is_finite())) {
            return Err(CliError::Config(format!("kappa must be >= 1, got {k}")));
        }
        Ok(ks)
    }

    fn target(&self) -> Result<Target, CliError> {
        self.target.parse().map_err(CliError::Lib)
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Io(PathBuf, io::Error),
    Config(String),
    Bounds(Vec<String>),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Bounds(_) => 2,
            CliError::Lib(Error::ClassViolation { .. }) => 3,
            CliError::Lib(_) | CliError::Io(..) | CliError::Config(_) => 4,
        }
    }

    pub fn report(&self) -> String {
        match self {
            CliError::Lib(e) => format!("error: {e}"),
            CliError::Io(path, e) => format!("error: {}: {e}", path.display()),
            CliError::Config(msg) => format!("error: {msg}"),
            CliError::Bounds(failures) => {
                let mut s = String::from("bound violation:");
                for f in failures {
                    s.push_str("\n  ");
                    s.push_str(f);
                }
                s
            }
        }
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Sample(c) => sample(c),
        Command::EnvelopeInspect(c) => envelope_inspect(c),
        Command::BenchQueries { config, wall_clock } => bench_queries(config, *wall_clock),
        Command::HardfamilyVerify(c) => hardfamily_verify(c),
        Command::Hitandrun {
            config,
            dimension,
            steps,
        } => hitandrun(config, *dimension, *steps),
    }
}

struct Output {
    path: PathBuf,
    inner: Box<dyn Write>,
}

impl Output {
    fn open(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let f = File::create(p).map_err(|e| CliError::Io(p.to_path_buf(), e))?;
                Ok(Output {
                    path: p.to_path_buf(),
                    inner: Box::new(BufWriter::new(f)),
                })
            }
            None => Ok(Output {
                path: PathBuf::from("<stdout>"),
                inner: Box::new(BufWriter::new(io::stdout())),
            }),
        }
    }

    fn line(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.inner, "{text}").map_err(|e| CliError::Io(self.path.clone(), e))
    }

    fn json<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("report types serialize");
        self.line(&text)
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush().map_err(|e| CliError::Io(self.path, e))
    }
}

/// Kappa values to run for a target: file targets carry their own.
fn cells(target: &Target, kappas: &[f64]) -> Result<Vec<f64>, CliError> {
    match target {
        Target::File(path) => {
            let spec = load_spec(path)?;
            Ok(vec![spec.beta / spec.alpha])
        }
        _ => Ok(kappas.to_vec()),
    }
}

fn load_spec(path: &Path) -> Result<PotentialSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(PotentialSpec::from_json(&text)?)
}

#[derive(Debug, Serialize)]
struct SampleSidecar {
    target: String,
    kappa: f64,
    seed: u64,
    mode: &'static str,
    epsilon: Option<f64>,
    rho_floor: Option<f64>,
    cap: Option<u64>,
    requested: u64,
    accepted: u64,
    failures: u64,
    envelope_queries: u64,
    sampling_queries: u64,
    total_queries: u64,
    total_trials: u64,
    mean_trials: Option<f64>,
}

/// Sidecar path for a sample file: `<out>.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn sample(c: &ExperimentConfig) -> Result<(), CliError> {
    let target = c.target()?;
    let kappa = cells(&target, &c.kappas(&[1e3])?)?[0];
    let cap = c.epsilon.map(|eps| trial_cap(eps, c.rho_floor)).transpose()?;
    let mut sampler = UnivariateSampler::new(target.oracle(kappa)?)?;
    let envelope_queries = sampler.envelope_queries();
    let mut rng = c.rng(0);
    let mut out = Output::open(c.out.as_deref())?;
    let json = c.format == Some(Format::Json);
    let (mut accepted, mut failures, mut total_trials) = (0, 0, 0);
    let mut values = Vec::new();
    for _ in 0..c.trials {
        let outcome = match cap {
            Some(n) => sampler.sample_capped(n, &mut rng)?,
            None => sampler.sample(&mut rng)?,
        };
        total_trials += outcome.trials;
        if outcome.is_failure() {
            failures += 1;
        } else {
            accepted += 1;
        }
        if json {
            values.push(match outcome.sample {
                Some(x) => serde_json::json!(x),
                None => serde_json::json!("FAILURE"),
            });
        } else {
            out.line(&outcome.to_string())?;
        }
    }
    if json {
        out.json(&values)?;
    }
    out.finish()?;

    let total_queries = sampler.query_count();
    let sidecar = SampleSidecar {
        target: target.to_string(),
        kappa,
        seed: c.seed,
        mode: if cap.is_some() { "capped" } else { "exact" },
        epsilon: c.epsilon,
        rho_floor: cap.map(|_| c.rho_floor),
        cap,
        requested: c.trials,
        accepted,
        failures,
        envelope_queries,
        sampling_queries: total_queries - envelope_queries,
        total_queries,
        total_trials,
        mean_trials: (accepted > 0 && cap.is_none()).then(|| total_trials as f64 / accepted as f64),
    };
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    match &c.out {
        Some(p) => {
            let path = sidecar_path(p);
            std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(path, e))
        }
        None => {
            eprintln!("{text}");
            Ok(())
        }
    }
}

/// `V(x / sqrt(alpha))`, the unit form of a file target.
struct UnitForm<'a> {
    inner: &'a AnyPotential,
    sqrt_alpha: f64,
}

impl Potential for UnitForm<'_> {
    fn value(&self, x: f64) -> f64 {
        self.inner.value(x / self.sqrt_alpha)
    }
    fn derivative(&self, x: f64) -> f64 {
        self.inner.derivative(x / self.sqrt_alpha) / self.sqrt_alpha
    }
    fn second_derivative(&self, x: f64) -> f64 {
        self.inner.second_derivative(x / self.sqrt_alpha) / (self.sqrt_alpha * self.sqrt_alpha)
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints().into_iter().map(|b| b * self.sqrt_alpha).collect()
    }
}

#[derive(Debug, Serialize)]
struct InspectRow {
    target: String,
    kappa: f64,
    envelope_queries: u64,
    query_budget: u64,
    acceptance_probability: f64,
    envelope: EnvelopeReport,
}

fn envelope_inspect(c: &ExperimentConfig) -> Result<(), CliError> {
    let target = c.target()?;
    let mut rows = Vec::new();
    for kappa in cells(&target, &c.kappas(&[1e3])?)? {
        let oracle = target.oracle(kappa)?;
        let (potential, alpha, offset) = match &target {
            Target::File(p) => {
                let spec = load_spec(p)?;
                (spec.build()?, spec.alpha, spec.offset)
            }
            t => (t.potential(kappa)?, 1.0, 0.0),
        };
        let sampler = UnivariateSampler::new(oracle)?;
        let env = sampler.envelope();
        let unit = UnitForm {
            inner: &potential,
            sqrt_alpha: alpha.sqrt(),
        };
        let z_p = normalizing_constant(&unit, 1e-10)?;
        rows.push(InspectRow {
            target: target.to_string(),
            kappa,
            envelope_queries: sampler.envelope_queries(),
            query_budget: envelope_query_budget(kappa),
            acceptance_probability: z_p * (env.shift() - offset).exp() / env.mass_total(),
            envelope: env.report(),
        });
    }
    let mut out = Output::open(c.out.as_deref())?;
    match c.format.unwrap_or(Format::Json) {
        Format::Json => out.json(&rows)?,
        Format::Csv => {
            out.line("target,kappa,envelope_queries,x_minus,x_plus,plateau_height,tail_offset,drift_minus,drift_plus,mass_left,mass_plateau,mass_right,acceptance_probability")?;
            for r in &rows {
                let e = &r.envelope;
                out.line(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.target,
                    r.kappa,
                    r.envelope_queries,
                    e.x_minus,
                    e.x_plus,
                    e.plateau_height,
                    e.tail_offset,
                    e.drifts[0],
                    e.drifts[1],
                    e.masses[0],
                    e.masses[1],
                    e.masses[2],
                    r.acceptance_probability
                ))?;
            }
        }
    }
    out.finish()?;
    check_budgets(rows.iter().map(|r| (r.kappa, r.envelope_queries)))
}

fn check_budgets(rows: impl Iterator<Item = (f64, u64)>) -> Result<(), CliError> {
    let failures: Vec<String> = rows
        .filter(|&(k, q)| q > envelope_query_budget(k))
        .map(|(k, q)| format!("kappa = {k}: {q} envelope queries > budget {}", envelope_query_budget(k)))
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Bounds(failures))
    }
}

/// One row of `bench-queries`.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub kappa: f64,
    pub envelope_queries: u64,
    pub mean_trials: f64,
    pub acceptance_rate: f64,
    pub throughput: f64,
}

pub const BENCH_HEADER: &str = "kappa,envelope_queries,mean_trials,acceptance_rate,throughput";

fn bench_cell(target: &Target, kappa: f64, samples: u64, wall_clock: bool, mut rng: ChaCha8Rng) -> Result<BenchRow, Error> {
    let mut sampler = UnivariateSampler::new(target.oracle(kappa)?)?;
    let start = Instant::now();
    let mut trials = 0;
    for _ in 0..samples {
        trials += sampler.sample(&mut rng)?.trials;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let throughput = if wall_clock {
        samples as f64 / elapsed
    } else {
        samples as f64 / sampler.query_count() as f64
    };
    Ok(BenchRow {
        kappa,
        envelope_queries: sampler.envelope_queries(),
        mean_trials: trials as f64 / samples as f64,
        acceptance_rate: samples as f64 / trials as f64,
        throughput,
    })
}

fn bench_queries(c: &ExperimentConfig, wall_clock: bool) -> Result<(), CliError> {
    let target = c.target()?;
    if c.trials == 0 {
        return Err(CliError::Config("bench-queries needs --trials >= 1".into()));
    }
    let kappas = cells(&target, &c.kappas(&[1e3, 1e6, 1e9, 1e12])?)?;
    let results: Vec<Result<BenchRow, Error>> = std::thread::scope(|scope| {
        let handles: Vec<_> = kappas
            .iter()
            .enumerate()
            .map(|(k, &kappa)| {
                let rng = c.rng(k as u64);
                let target = &target;
                scope.spawn(move || bench_cell(target, kappa, c.trials, wall_clock, rng))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench cell panicked")).collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut out = Output::open(c.out.as_deref())?;
    match c.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            out.line(BENCH_HEADER)?;
            for r in &rows {
                out.line(&format!(
                    "{},{},{},{},{}",
                    r.kappa, r.envelope_queries, r.mean_trials, r.acceptance_rate, r.throughput
                ))?;
            }
        }
        Format::Json => out.json(&rows)?,
    }
    out.finish()?;
    check_budgets(rows.iter().map(|r| (r.kappa, r.envelope_queries)))
}

fn hardfamily_verify(c: &ExperimentConfig) -> Result<(), CliError> {
    let kappas = c.kappas(&[1e3])?;
    let mut reports: Vec<HardFamilyReport> = Vec::new();
    for (k, &kappa) in kappas.iter().enumerate() {
        HardFamily::new(kappa)?;
        reports.push(verify_family(kappa, c.trials, &mut c.rng(k as u64))?);
    }
    let mut out = Output::open(c.out.as_deref())?;
    match c.format.unwrap_or(Format::Json) {
        Format::Json if reports.len() == 1 => out.json(&reports[0])?,
        Format::Json => out.json(&reports)?,
        Format::Csv => {
            out.line("kappa,m,lemma1_max_dev,lemma2_min_mass,degeneracy_max,identification_rate")?;
            for r in &reports {
                out.line(&format!(
                    "{},{},{},{},{},{}",
                    r.kappa, r.m, r.lemma1_max_dev, r.lemma2_min_mass, r.degeneracy_max, r.identification_rate
                ))?;
            }
        }
    }
    out.finish()?;
    let failures: Vec<String> = reports
        .iter()
        .filter_map(|r| r.check().err().map(|f| (r.kappa, f)))
        .flat_map(|(k, fs)| fs.into_iter().map(move |f| format!("kappa = {k}: {f}")))
        .collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Bounds(failures))
    }
}

#[derive(Debug, Serialize)]
struct ChainSummary {
    target: String,
    dimension: usize,
    kappa: f64,
    steps: u64,
    total_queries: u64,
    mean_queries: f64,
    final_norm: f64,
}

/// Multivariate oracle for a target: builtins become isotropic or separable
/// potentials in `dimension` coordinates; JSON targets must be in unit form.
fn multivariate_oracle(
    target: &Target,
    kappa: f64,
    dimension: usize,
) -> Result<(MultivariateOracle<Box<dyn MultivariatePotential + Send>>, usize), CliError> {
    let (potential, kappa, dimension, offset): (Box<dyn MultivariatePotential + Send>, f64, usize, f64) = match target {
        Target::Gaussian => (
            Box::new(IsotropicGaussian {
                dimension,
                precision: 1.0,
            }),
            kappa,
            dimension,
            0.0,
        ),
        Target::Skewed | Target::Hard(_) => (
            Box::new(Separable {
                component: target.potential(kappa)?,
                dimension,
            }),
            kappa,
            dimension,
            0.0,
        ),
        Target::File(path) => {
            let spec = load_spec(path)?;
            if spec.alpha != 1.0 {
                return Err(CliError::Config(format!(
                    "hitandrun needs a 1-strongly convex target (alpha = 1), got alpha = {}",
                    spec.alpha
                )));
            }
            let d = spec.dimension.unwrap_or(dimension);
            let p: Box<dyn MultivariatePotential + Send> = match spec.kind {
                PotentialKind::Gaussian => Box::new(IsotropicGaussian {
                    dimension: d,
                    precision: 1.0,
                }),
                PotentialKind::Piecewise => Box::new(Separable {
                    component: spec.build()?,
                    dimension: d,
                }),
            };
            (p, spec.beta, d, spec.offset)
        }
    };
    Ok((MultivariateOracle::new(potential, kappa)?.with_offset(offset), dimension))
}

fn hitandrun(c: &ExperimentConfig, dimension: usize, steps: u64) -> Result<(), CliError> {
    let target = c.target()?;
    let kappa = c.kappas(&[1e3])?[0];
    let (mut oracle, dimension) = multivariate_oracle(&target, kappa, dimension)?;
    let mut rng = c.rng(0);
    let mut out = Output::open(c.out.as_deref())?;
    let csv = c.format.unwrap_or(Format::Csv) == Format::Csv;
    if csv {
        out.line("step,queries,norm")?;
    }
    let mut write_err = None;
    let end = run_chain_with(&mut oracle, vec![0.0; dimension], steps, &mut rng, |s, st| {
        if csv && write_err.is_none() {
            if let Err(e) = out.line(&format!("{},{},{}", s.step_index, st.queries(), norm(&s.position))) {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    if !csv {
        out.json(&ChainSummary {
            target: target.to_string(),
            dimension,
            kappa: oracle.kappa(),
            steps,
            total_queries: end.cumulative_queries,
            mean_queries: if steps > 0 {
                end.cumulative_queries as f64 / steps as f64
            } else {
                0.0
            },
            final_norm: norm(&end.position),
        })?;
    }
    out.finish()
}
