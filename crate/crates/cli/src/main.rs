mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{Mode, PartitionChoice, ReducerChoice, RunConfig};
use lpsketch::data::{read_points, write_points};
use lpsketch::distributed::{partition, partition_from_owners, run_protocol, PartitionScheme, ProtocolConfig, TranscriptMeter};
use lpsketch::median::{estimate_total_median_cost, MedianSketchConfig};
use lpsketch::medoid::{MedoidConfig, MedoidSketch};
use lpsketch::oracle::{exact_k_cost, exact_median_cost, exact_medoid_cost, ExactInstance};
use lpsketch::stream::{reducer_by_name, StreamConfig, StreamState};
use lpsketch::synth;

#[derive(Parser)]
#[command(name = "lpsketch", version, about = "Sketch-based (k, p)-clustering cost estimation in l_p")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic point set.
    Gen(GenArgs),
    /// Estimate a cost from a point file.
    Estimate(RunArgs),
    /// Simulate the multi-machine protocol.
    Distsim(RunArgs),
    /// Exact brute-force values for small inputs.
    Oracle(RunArgs),
    /// Print the effective run configuration as TOML.
    Config(RunArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Blobs,
    Uniform,
    Hard,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "blobs")]
    kind: Kind,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    blobs: usize,
    /// Blob center spacing in units of sigma.
    #[arg(long, default_value_t = 10.0)]
    separation: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    hi: f64,
    /// Fraction of indexed axes for the hard instance.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `.bin` writes the binary format, anything else CSV.
    #[arg(long)]
    output: PathBuf,
}

/// Flags override values from `--config`.
#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long, value_enum)]
    reducer: Option<ReducerChoice>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Append the JSON result line here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    machines: Option<usize>,
    #[arg(long, value_enum)]
    partition: Option<PartitionChoice>,
    #[arg(long)]
    partition_file: Option<PathBuf>,
    #[arg(long)]
    budget_bytes: Option<u64>,
    #[arg(long)]
    compare_oracle: bool,
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! overlay {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f.clone() {
                    c.$f = v;
                }
            )*};
        }
        overlay!(mode, p, eps, delta, k, seed, capacity, reducer, machines, partition);
        if self.input.is_some() {
            c.input = self.input.clone();
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        if self.partition_file.is_some() {
            c.partition_file = self.partition_file.clone();
        }
        if self.budget_bytes.is_some() {
            c.budget_bytes = self.budget_bytes;
        }
        c.compare_oracle |= self.compare_oracle;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Serialize)]
struct Record {
    mode: Mode,
    seed: u64,
    config_hash: String,
    estimate: f64,
    wall_time_s: f64,
    n: usize,
    dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    partition_count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coreset_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    median_estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    medoid_index: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    transcript: Option<TranscriptMeter>,
    #[serde(skip_serializing_if = "Option::is_none")]
    within_budget: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error: Option<f64>,
    config: RunConfig,
}

impl Record {
    fn new(c: &RunConfig, estimate: f64, n: usize, dim: usize) -> anyhow::Result<Self> {
        Ok(Record {
            mode: c.mode,
            seed: c.seed,
            config_hash: format!("{:016x}", c.hash()?),
            estimate,
            wall_time_s: 0.0,
            n,
            dim,
            k: None,
            partition_count: None,
            coreset_size: None,
            median_estimate: None,
            medoid_index: None,
            transcript: None,
            within_budget: None,
            oracle: None,
            relative_error: None,
            config: c.clone(),
        })
    }
}

fn load_input(c: &RunConfig) -> anyhow::Result<(PathBuf, Vec<Vec<f64>>, usize)> {
    let path = c.input.clone().ok_or_else(|| anyhow!("--input is required"))?;
    let points = read_points(&path).with_context(|| format!("reading {}", path.display()))?;
    if points.is_empty() {
        bail!("{} holds no points", path.display());
    }
    let d = points[0].len();
    Ok((path, points, d))
}

fn oracle_value(mode: Mode, c: &RunConfig, points: &[Vec<f64>]) -> anyhow::Result<f64> {
    let inst = ExactInstance::unweighted(points.to_vec(), c.p)?;
    Ok(match mode {
        Mode::Median => exact_median_cost(&inst),
        Mode::Medoid => exact_medoid_cost(&inst),
        Mode::Kcost | Mode::Distsim | Mode::Oracle => exact_k_cost(&inst, c.k)?,
    })
}

fn stream_config(c: &RunConfig, d: usize) -> anyhow::Result<StreamConfig> {
    Ok(StreamConfig::new(c.p, c.eps, c.delta, d, c.k, c.capacity, c.seed)?)
}

fn run(c: &RunConfig) -> anyhow::Result<Record> {
    let start = Instant::now();
    let (path, points, d) = load_input(c)?;
    let n = points.len();
    let rec = match c.mode {
        Mode::Median => {
            let cfg = MedianSketchConfig::new(c.p, c.eps, c.delta, d)?;
            Record::new(c, estimate_total_median_cost(&points, &cfg, c.seed)?, n, d)?
        }
        Mode::Kcost => {
            let mut stream = StreamState::new(stream_config(c, d)?, reducer_by_name(c.reducer.name())?)?;
            for x in &points {
                stream.ingest(x)?;
            }
            let res = stream.query_k_cost(c.k)?;
            let mut rec = Record::new(c, res.estimate, n, d)?;
            rec.k = Some(res.k);
            rec.partition_count = Some(res.partition_count);
            rec.coreset_size = Some(res.coreset_size);
            rec
        }
        Mode::Medoid => {
            let mut sk = MedoidSketch::new(MedoidConfig::new(c.p, c.eps, d, c.seed)?)?;
            for x in &points {
                sk.pass1_ingest(x)?;
            }
            drop(points);
            sk.start_pass2()?;
            // Second read of the same file.
            for z in read_points(&path)? {
                sk.pass2_score(&z)?;
            }
            let res = sk.finish()?;
            let mut rec = Record::new(c, res.estimate, n, d)?;
            rec.medoid_index = Some(res.argmin);
            return finish(rec, c, start, Mode::Medoid, None);
        }
        Mode::Distsim => {
            let parts = match c.partition {
                PartitionChoice::RoundRobin => partition(n, c.machines, PartitionScheme::RoundRobin)?,
                PartitionChoice::Contiguous => partition(n, c.machines, PartitionScheme::Contiguous)?,
                PartitionChoice::File => {
                    let file = c.partition_file.as_ref().ok_or_else(|| anyhow!("--partition file needs --partition-file"))?;
                    partition_from_owners(&read_owners(file)?, c.machines)?
                }
            };
            let cfg = ProtocolConfig {
                stream: stream_config(c, d)?,
                median: MedianSketchConfig::new(c.p, c.eps, c.delta, d)?,
                n,
                k: c.k,
                budget: c.budget_bytes,
            };
            let out = run_protocol(&points, &parts, &cfg, reducer_by_name(c.reducer.name())?)?;
            let mut rec = Record::new(c, out.k_cost.estimate, n, d)?;
            rec.k = Some(out.k_cost.k);
            rec.partition_count = Some(out.k_cost.partition_count);
            rec.coreset_size = Some(out.k_cost.coreset_size);
            rec.median_estimate = Some(out.median_estimate);
            rec.transcript = Some(out.transcript);
            rec.within_budget = Some(out.within_budget);
            rec
        }
        Mode::Oracle => {
            let mode = if c.k > 1 { Mode::Kcost } else { Mode::Median };
            let v = oracle_value(mode, c, &points)?;
            let mut rec = Record::new(c, v, n, d)?;
            rec.k = Some(c.k);
            rec
        }
    };
    let oracle = if c.compare_oracle && c.mode != Mode::Oracle { Some(oracle_value(c.mode, c, &points)?) } else { None };
    finish(rec, c, start, c.mode, oracle)
}

fn finish(mut rec: Record, c: &RunConfig, start: Instant, mode: Mode, oracle: Option<f64>) -> anyhow::Result<Record> {
    let oracle = match (oracle, mode, c.compare_oracle) {
        (Some(v), _, _) => Some(v),
        (None, Mode::Medoid, true) => {
            let (_, points, _) = load_input(c)?;
            Some(oracle_value(Mode::Medoid, c, &points)?)
        }
        _ => None,
    };
    if let Some(v) = oracle {
        rec.oracle = Some(v);
        rec.relative_error = Some(if v == 0.0 { rec.estimate.abs() } else { (rec.estimate - v).abs() / v });
    }
    rec.wall_time_s = start.elapsed().as_secs_f64();
    Ok(rec)
}

fn read_owners(path: &Path) -> anyhow::Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<usize>().with_context(|| format!("bad machine index '{l}'")))
        .collect()
}

fn emit(rec: &Record, output: Option<&Path>) -> anyhow::Result<()> {
    let line = serde_json::to_string(rec)?;
    match output {
        Some(path) => {
            let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{line}")?;
        }
        None => println!("{line}"),
    }
    Ok(())
}

fn gen(a: &GenArgs) -> anyhow::Result<()> {
    let points = match a.kind {
        Kind::Blobs => synth::gaussian_blobs(a.n, a.d, a.blobs, a.separation, a.sigma, a.seed),
        Kind::Uniform => synth::uniform_cube(a.n, a.d, a.lo, a.hi, a.seed),
        Kind::Hard => synth::indexing_instance(a.n, a.alpha, a.seed).points,
    };
    write_points(&a.output, &points)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Config(a) => a.resolve().and_then(|c| {
            print!("{}", c.to_toml()?);
            Ok(())
        }),
        Command::Estimate(a) | Command::Distsim(a) | Command::Oracle(a) => {
            let forced = match cli.command {
                Command::Distsim(_) => Some(Mode::Distsim),
                Command::Oracle(_) => Some(Mode::Oracle),
                _ => None,
            };
            a.resolve().and_then(|mut c| {
                if let Some(m) = forced {
                    c.mode = m;
                }
                let rec = run(&c)?;
                emit(&rec, c.output.as_deref())
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<lpsketch::Error>() {
                Some(lpsketch::Error::KOutOfRange { .. }) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
