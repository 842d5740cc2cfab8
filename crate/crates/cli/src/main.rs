//! `nnviz`: train models, explain images, synthesise class impressions, run
//! MIL experiments, inspect checkpoints and serve the HTTP API.
//!
//! Exit codes: 0 ok, 1 runtime failure, 2 usage error, 3 method inapplicable.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nnviz_core::saliency::Method;

#[derive(Debug, Parser)]
#[command(name = "nnviz", version, about = "Small-CNN training and visual explanations")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for outputs when a command has no explicit --out.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Png)]
    pub format: Format,
    /// Print a JSON summary on stdout instead of text.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Png,
    Ppm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Camnet,
    Fcnet,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier and write a checkpoint plus a per-epoch CSV report.
    Train(TrainArgs),
    /// Explain one image with one method.
    Explain(ExplainArgs),
    /// Synthesise a class impression by gradient ascent.
    Impress(ImpressArgs),
    /// Train and evaluate an attention-MIL model on synthetic bags.
    Mil(MilArgs),
    /// Print the model card and checksum of a checkpoint.
    Inspect(InspectArgs),
    /// Serve the HTTP API (and a static UI directory).
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = Arch::Camnet)]
    pub arch: Arch,
    /// `shapes` or `idx:<prefix>`, reading `<prefix>-images-idx3-ubyte` and `<prefix>-labels-idx1-ubyte`.
    #[arg(long, default_value = "shapes")]
    pub data: String,
    /// Number of generated shapes images.
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub max_shapes: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lr: f32,
    #[arg(long, default_value_t = 8)]
    pub batch: usize,
    /// Checkpoint path; defaults to `<out-dir>/model.nnvz`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_parser = parse_method)]
    pub method: Method,
    /// Class name or index; defaults to the top-1 prediction.
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f32,
    /// Layer for activation grids.
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long)]
    pub patch: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImpressArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub class: String,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub tv: Option<f32>,
    #[arg(long)]
    pub step: Option<f32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MilArgs {
    #[arg(long, default_value_t = 500)]
    pub bags: usize,
    #[arg(long, default_value_t = 200)]
    pub test_bags: usize,
    #[arg(long, default_value_t = 9)]
    pub bag_size: usize,
    #[arg(long, default_value_t = 16)]
    pub patch: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long)]
    pub lr: Option<f32>,
    /// Number of highlighted example bags to write.
    #[arg(long, default_value_t = 4)]
    pub examples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "NNVIZ_PORT", default_value_t = nnviz_service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long)]
    pub model: PathBuf,
    /// Directory served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Seconds a finished job stays queryable.
    #[arg(long, default_value_t = 600)]
    pub job_ttl: u64,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

/// A failed command and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Runtime(String),
    Usage(String),
    Inapplicable(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Inapplicable(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Runtime(m) | Failure::Usage(m) | Failure::Inapplicable(m) => m,
        }
    }
}

impl<E: Into<nnviz_core::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        match e.into() {
            e @ nnviz_core::Error::CamInapplicable { .. } => Failure::Inapplicable(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::train(&cli.global, a),
        Command::Explain(a) => commands::explain(&cli.global, a),
        Command::Impress(a) => commands::impress(&cli.global, a),
        Command::Mil(a) => commands::mil(&cli.global, a),
        Command::Inspect(a) => commands::inspect(&cli.global, a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("nnviz: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
