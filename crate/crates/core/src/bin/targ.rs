use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use targ::commands::{
    cmd_calibrate, cmd_index_build, cmd_index_chunk, cmd_index_context, cmd_index_search, cmd_run,
    cmd_score, cmd_simulate, cmd_sweep, csv_string, parse_grid, parse_vector, CalibrateInput,
    SimulationSpec,
};
use targ::config::{Overrides, RunConfig};
use targ::eval::emit_report;
use targ::gate::{GateConfig, GateKind};
use targ::io::{read_jsonl, write_text};
use targ::pipeline::{Policy, TraceRecord};
use targ::report::ReportFormat;
use targ::retrieval::ChunkConfig;
use targ::{Error, Result};

#[derive(Parser)]
#[command(name = "targ", version, about = "Prefix-draft retrieval gating")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every record of a trace file with a gate.
    Score(ScoreArgs),
    /// Pick a threshold from scores (budget) or a dev file (accuracy).
    Calibrate(CalibrateArgs),
    /// Chunk a corpus, build an index, or search one.
    Index {
        #[command(subcommand)]
        action: IndexAction,
    },
    /// Run a policy over a trace and write records and a summary.
    Run(RunArgs),
    /// Sweep thresholds and report the accuracy/cost frontier.
    Sweep(SweepArgs),
    /// Check the dominance and budget properties on synthetic populations.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GateArg {
    Entropy,
    Margin,
    Variance,
}

impl From<GateArg> for GateKind {
    fn from(g: GateArg) -> Self {
        match g {
            GateArg::Entropy => GateKind::Entropy,
            GateArg::Margin => GateKind::Margin,
            GateArg::Variance => GateKind::Variance,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Never,
    Always,
    Gated,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Md,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Md => ReportFormat::Md,
        }
    }
}

#[derive(Args)]
struct GateFlags {
    #[arg(long, value_enum)]
    gate: Option<GateArg>,
    /// Draft length.
    #[arg(long)]
    k: Option<usize>,
    /// Margin temperature.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// Sampling temperature for the variance gate.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    trace: PathBuf,
    #[command(flatten)]
    gate: GateFlags,
    /// Write `query_id,score` CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV of `query_id,score`.
    #[arg(long, requires = "rho", conflicts_with = "dev")]
    scores: Option<PathBuf>,
    /// Target retrieval rate.
    #[arg(long)]
    rho: Option<f64>,
    /// CSV of `query_id,score,a0,a1`.
    #[arg(long, requires = "grid")]
    dev: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum IndexAction {
    /// Split a JSONL corpus of {title, text} articles into passages.
    Chunk {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        size: usize,
        #[arg(long, default_value_t = 100)]
        overlap: usize,
        #[arg(long, default_value_t = 200)]
        min: usize,
    },
    /// Normalize an embedding file into an index.
    Build {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the top hits for a query vector.
    Search {
        #[arg(long)]
        index: PathBuf,
        /// Comma-separated query vector.
        #[arg(long, allow_hyphen_values = true, required_unless_present = "trace")]
        query: Option<String>,
        /// Take the query embedding from this trace instead.
        #[arg(long, requires = "query_id")]
        trace: Option<PathBuf>,
        #[arg(long)]
        query_id: Option<String>,
        #[arg(long, default_value_t = 5)]
        topk: usize,
        /// Render hits as a context block using these passages.
        #[arg(long)]
        passages: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        ctx_budget: usize,
    },
}

#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    gate: GateFlags,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<f64>,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    ctx_budget: Option<usize>,
}

impl RunFlags {
    fn load(&self, policy: Option<PolicyArg>, output_dir: Option<PathBuf>) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            policy: policy.map(|p| match p {
                PolicyArg::Never => Policy::Never,
                PolicyArg::Always => Policy::Always,
                PolicyArg::Gated => Policy::Gated,
            }),
            gate: self.gate.gate.map(Into::into),
            k: self.gate.k,
            beta: self.gate.beta,
            n_samples: self.gate.n_samples,
            temperature: self.gate.temperature,
            tau: self.tau,
            top_k: self.topk,
            ctx_budget: self.ctx_budget,
            seed: self.gate.seed,
            output_dir,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    flags: RunFlags,
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    flags: RunFlags,
    /// `a,b,c` or `start:stop:step`.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write `query_id,score,a0,a1` rows for `calibrate --dev`.
    #[arg(long)]
    dev_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum, default_value = "md")]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score(a) => {
            let mut gate = GateConfig::new(a.gate.gate.unwrap_or(GateArg::Margin).into(), 0.0);
            if let Some(k) = a.gate.k {
                gate.k = k;
            }
            if let Some(b) = a.gate.beta {
                gate.beta = b;
            }
            if let Some(n) = a.gate.n_samples {
                gate.n_samples = n;
            }
            if let Some(t) = a.gate.temperature {
                gate.sample_temperature = t;
            }
            let scores = cmd_score(&a.trace, &gate, a.gate.seed.unwrap_or(0))?;
            emit(a.out.as_ref(), &csv_string(&scores)?)
        }
        Command::Calibrate(a) => {
            let input = match (a.scores, a.rho, a.dev, a.grid) {
                (Some(scores), Some(rho), None, _) => CalibrateInput::Budget { scores, rho },
                (None, _, Some(dev), Some(grid)) => CalibrateInput::Accuracy {
                    dev,
                    grid: parse_grid(&grid)?,
                },
                _ => {
                    return Err(Error::InvalidConfig(
                        "use --scores with --rho, or --dev with --grid".into(),
                    ))
                }
            };
            let cal = cmd_calibrate(&input)?;
            println!("tau = {}", cal.tau);
            if let Some(path) = &a.out {
                write_text(path, &cal.to_toml()?)?;
            }
            Ok(())
        }
        Command::Index { action } => match action {
            IndexAction::Chunk {
                corpus,
                out,
                size,
                overlap,
                min,
            } => {
                let n = cmd_index_chunk(&corpus, &out, &ChunkConfig { size, overlap, min })?;
                println!("{n} passages written to {}", out.display());
                Ok(())
            }
            IndexAction::Build { embeddings, out } => {
                let index = cmd_index_build(&embeddings, &out)?;
                println!(
                    "{} vectors of dimension {} written to {}",
                    index.len(),
                    index.dim(),
                    out.display()
                );
                Ok(())
            }
            IndexAction::Search {
                index,
                query,
                trace,
                query_id,
                topk,
                passages,
                ctx_budget,
            } => {
                let vector = match (query, trace, query_id) {
                    (Some(q), _, _) => parse_vector(&q)?,
                    (None, Some(trace), Some(id)) => {
                        let records: Vec<TraceRecord> = read_jsonl(&trace)?;
                        records
                            .into_iter()
                            .find(|r| r.query_id == id)
                            .and_then(|r| r.query_embedding)
                            .ok_or_else(|| {
                                Error::DataIntegrity(format!("no embedding for query {id}"))
                            })?
                    }
                    _ => return Err(Error::InvalidConfig("no query given".into())),
                };
                match passages {
                    Some(p) => {
                        let block = cmd_index_context(&index, &p, &vector, topk, ctx_budget)?;
                        println!("{}", block.text);
                    }
                    None => {
                        for hit in cmd_index_search(&index, &vector, topk)? {
                            println!("{}\t{}", hit.id, hit.score);
                        }
                    }
                }
                Ok(())
            }
        },
        Command::Run(a) => {
            let cfg = a.flags.load(a.policy, a.output_dir)?;
            let run = cmd_run(&cfg)?;
            let s = &run.summary;
            println!(
                "{} queries ({} failed): EM {:.1} F1 {:.1} retrieval rate {:.3}, outputs in {}",
                s.aggregate.queries,
                s.failures,
                s.aggregate.em,
                s.aggregate.f1,
                s.aggregate.retrieval_rate,
                cfg.output_dir.display()
            );
            Ok(())
        }
        Command::Sweep(a) => {
            let cfg = a.flags.load(None, None)?;
            let out = cmd_sweep(&cfg, &parse_grid(&a.grid)?)?;
            if let Some(path) = &a.dev_out {
                write_text(path, &csv_string(&out.dev)?)?;
            }
            emit(a.out.as_ref(), &emit_report(&out.rows, a.format.into()))
        }
        Command::Simulate(a) => {
            let spec = SimulationSpec::load(&a.spec)?;
            let report = cmd_simulate(&spec)?;
            emit(a.out.as_ref(), &report.render(a.format.into()))?;
            report.check()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
