use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use srcenc_core::exponents::{self, Method};
use srcenc_core::{Distribution, FieldSpec};

mod commands;

#[derive(Parser)]
#[command(name = "srcenc", version, about = "Universal source encryption over prime fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate E(R|p_X), F(R|p_K) and their positivity over a rate grid (CSV).
    Exponents(ExponentsArgs),
    /// Build the codebook for (n, R, q) and print it as JSON.
    Codebook(CodebookArgs),
    /// Build, certify and check a full system; exits nonzero if any check fails.
    Verify(VerifyArgs),
    /// Exact and bound values across block lengths (CSV).
    Sweep(SweepArgs),
    /// Exact leakage report for one system (JSON).
    ExactMi(ExactMiArgs),
    /// Search seeds for a certified affine encoder (JSON).
    SearchEncoder(SearchArgs),
    /// Optimal error of codes below the source entropy, per block length (CSV).
    ConverseProbe(ProbeArgs),
}

#[derive(Args, Clone)]
pub struct SystemArgs {
    /// Block length.
    #[arg(long)]
    pub n: u32,
    /// Target rate R in bits per symbol.
    #[arg(long)]
    pub rate: f64,
    /// Explicit ciphertext length; marks the run non-canonical.
    #[arg(long)]
    pub m: Option<usize>,
    /// Field size (prime).
    #[arg(long, default_value_t = 2)]
    pub q: u16,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Clone)]
pub struct SourceArgs {
    /// Source law, comma separated.
    #[arg(long)]
    pub px: String,
    /// Key law, comma separated.
    #[arg(long)]
    pub pk: String,
}

#[derive(Args, Clone)]
pub struct OutArgs {
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Grid,
    Tilted,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Grid => Method::Grid,
            MethodArg::Tilted => Method::Tilted,
        }
    }
}

#[derive(Args)]
struct ExponentsArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    q: Option<u16>,
    /// Number of evenly spaced rates in (0, log2 q].
    #[arg(long, default_value_t = 20)]
    points: usize,
    /// Explicit comma-separated rates; overrides --points.
    #[arg(long)]
    rates: Option<String>,
    #[arg(long, value_enum, default_value_t = MethodArg::Tilted)]
    method: MethodArg,
    #[arg(long, default_value_t = exponents::DEFAULT_TOL)]
    tol: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CodebookArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Include every member sequence.
    #[arg(long)]
    members: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Cap on the leakage budget in the admissibility hypotheses.
    #[arg(long, default_value_t = srcenc_core::leakage::DEFAULT_DELTA_CAP)]
    pub delta_cap: f64,
    #[arg(long, default_value_t = 1000)]
    pub max_attempts: u64,
    #[arg(long, default_value_t = exponents::DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Comma-separated block lengths.
    #[arg(long)]
    pub n_list: String,
    #[arg(long)]
    pub rate: f64,
    #[arg(long, default_value_t = 2)]
    pub q: u16,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples for the Monte-Carlo estimate beyond exact enumeration.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, default_value_t = exponents::DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct ExactMiArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    /// Use a search-certified encoder instead of the seed's draw.
    #[arg(long)]
    pub certified: bool,
    #[arg(long, default_value_t = 1000)]
    pub max_attempts: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, default_value_t = 1000)]
    pub max_attempts: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub px: String,
    #[arg(long)]
    pub rate: f64,
    #[arg(long, default_value = "4,8,12,16,20")]
    pub n_list: String,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn parse_distribution(text: &str, what: &str) -> Result<Distribution> {
    Distribution::parse(text).with_context(|| format!("malformed {what} {text:?}"))
}

pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| anyhow::anyhow!("malformed {what} entry {s:?}: {e}"))
        })
        .collect()
}

pub fn field_for(q: u16, laws: &[&Distribution]) -> Result<FieldSpec> {
    let spec = FieldSpec::new(q)?;
    for law in laws {
        if law.len() != q as usize {
            bail!("distribution has {} entries but q = {q}", law.len());
        }
    }
    Ok(spec)
}

fn emit(out: &OutArgs, text: &str) -> Result<()> {
    match &out.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Exponents(a) => {
            let p_x = parse_distribution(&a.source.px, "--px")?;
            let p_k = parse_distribution(&a.source.pk, "--pk")?;
            let q = a.q.unwrap_or(p_x.len() as u16);
            let spec = field_for(q, &[&p_x, &p_k])?;
            let rates = match &a.rates {
                Some(list) => parse_list::<f64>(list, "--rates")?,
                None => exponents::rate_grid(spec.log2_q(), a.points),
            };
            let rows = exponents::exponent_table(&p_x, &p_k, &rates, a.method.into(), a.tol)?;
            emit(&a.out, &exponents::exponent_csv(&rows))?;
            Ok(true)
        }
        Command::Codebook(a) => {
            emit(&a.out, &commands::codebook(&a.system, a.members)?)?;
            Ok(true)
        }
        Command::Verify(a) => {
            let (text, passed) = commands::verify(&a)?;
            emit(&a.out, &text)?;
            Ok(passed)
        }
        Command::Sweep(a) => {
            emit(&a.out, &commands::sweep(&a)?)?;
            Ok(true)
        }
        Command::ExactMi(a) => {
            emit(&a.out, &commands::exact_mi(&a)?)?;
            Ok(true)
        }
        Command::SearchEncoder(a) => {
            emit(&a.out, &commands::search_encoder(&a)?)?;
            Ok(true)
        }
        Command::ConverseProbe(a) => {
            emit(&a.out, &commands::converse_probe(&a)?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
