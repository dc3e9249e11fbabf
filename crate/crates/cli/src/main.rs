use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod plot;
mod report;

use commands::{EmitKind, Outcome, Source};
use config::{parse_chart, parse_pair, Config};
use error::CliError;

/// Finiteness of the uniton number for harmonic maps into U(n).
#[derive(Parser, Debug)]
#[command(name = "uniton-lab", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML or JSON config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `x0,x1,y0,y1,nx,ny` or `half,n`.
    #[arg(long, global = true)]
    chart: Option<String>,
    /// Finite window `R,S`.
    #[arg(long, global = true)]
    window: Option<String>,
    #[arg(long, global = true)]
    budget: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    lambda_samples: Option<usize>,
    /// Report path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory for CSV traces.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    /// SVG of the degree growth (analyze-potential, analyze-loop).
    #[arg(long, global = true)]
    plot: Option<PathBuf>,
    /// Worker thread cap; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Bounded-powers and certified tests on a potential.
    AnalyzePotential(SourceArgs),
    /// Window Gauss sequence and optional uniton factorization of an extended solution.
    AnalyzeLoop {
        #[command(flatten)]
        src: SourceArgs,
        #[arg(long)]
        factorize: bool,
    },
    /// Harmonic sequence, isotropy order and first return map.
    HarmonicSeq {
        #[arg(long)]
        zoo: Option<String>,
        /// Zoo vertex such as `veronese3.h0` or `clifford4.G1`.
        #[arg(long)]
        vertex: Option<String>,
        /// Index range `lo,hi` of the sequence.
        #[arg(long, allow_hyphen_values = true)]
        range: Option<String>,
    },
    /// External-cycle analysis of a diagram.
    Diagram(SourceArgs),
    /// Local d-bar frame solve.
    Dbar(SourceArgs),
    /// List zoo examples or emit one as an input file.
    Zoo {
        #[command(subcommand)]
        action: ZooAction,
    },
}

#[derive(Args, Debug)]
struct SourceArgs {
    #[arg(long)]
    zoo: Option<String>,
    #[arg(long)]
    file: Option<PathBuf>,
}

impl SourceArgs {
    fn source(&self) -> Result<Source, CliError> {
        Source::new(self.zoo.clone(), self.file.clone())
    }
}

#[derive(Subcommand, Debug)]
enum ZooAction {
    List,
    Emit {
        name: String,
        #[arg(long, value_enum)]
        kind: EmitKind,
    },
}

fn resolve_config(g: &Global) -> Result<Config, CliError> {
    let mut cfg = match &g.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(c) = &g.chart {
        cfg.chart = parse_chart(c)?;
    }
    if let Some(w) = &g.window {
        cfg.window = Some(parse_pair("--window", w)?);
    }
    if g.budget.is_some() {
        cfg.budget = g.budget;
    }
    if let Some(t) = g.tol {
        cfg.tol = t;
    }
    if let Some(l) = g.lambda_samples {
        cfg.lambda_samples = l;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn emit(g: &Global, text: &str) -> Result<(), CliError> {
    match &g.out {
        Some(p) => write_file(p, text),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    if let Some(t) = g.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global().map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    let cfg = resolve_config(g)?;
    let plots = matches!(cli.cmd, Cmd::AnalyzePotential(_) | Cmd::AnalyzeLoop { .. });
    if g.plot.is_some() && !plots {
        return Err(CliError::Invalid("--plot applies to analyze-potential and analyze-loop".into()));
    }
    let outcome: Outcome = match &cli.cmd {
        Cmd::AnalyzePotential(s) => commands::analyze_potential(&s.source()?, &cfg)?,
        Cmd::AnalyzeLoop { src, factorize } => commands::analyze_loop(&src.source()?, *factorize, &cfg)?,
        Cmd::HarmonicSeq { zoo, vertex, range } => {
            let range = match range {
                Some(r) => {
                    let (a, b) = r.split_once(',').ok_or_else(|| CliError::Invalid(format!("--range expects lo,hi; got '{r}'")))?;
                    let p = |x: &str| x.trim().parse::<i32>().map_err(|_| CliError::Invalid(format!("--range expects integers; got '{r}'")));
                    Some([p(a)?, p(b)?])
                }
                None => None,
            };
            commands::harmonic_seq(zoo.clone(), vertex.clone(), range, &cfg)?
        }
        Cmd::Diagram(s) => commands::diagram(&s.source()?, &cfg)?,
        Cmd::Dbar(s) => commands::dbar(&s.source()?, &cfg)?,
        Cmd::Zoo { action: ZooAction::List } => commands::zoo_list(&cfg)?,
        Cmd::Zoo { action: ZooAction::Emit { name, kind } } => {
            let v = commands::zoo_emit(name, *kind, &cfg)?;
            return emit(g, &(serde_json::to_string_pretty(&v)? + "\n"));
        }
    };
    if let Some(dir) = &g.trace {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        for (name, text) in &outcome.artifacts.csv {
            write_file(&dir.join(name), text)?;
        }
    }
    if let (Some(p), Some(svg)) = (&g.plot, &outcome.artifacts.svg) {
        write_file(p, svg)?;
    }
    emit(g, &(serde_json::to_string_pretty(&outcome.report)? + "\n"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("uniton-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
