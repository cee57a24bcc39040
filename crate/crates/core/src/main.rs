use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use semcon::pipeline::{self, AnnotateOptions, Branch, RunConfig, RunOptions};

#[derive(Parser)]
#[command(name = "semcon", version, about = "Semantic consistency evaluation for language-model answers")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Process only the first N questions.
    #[arg(long, global = true)]
    limit: Option<usize>,
    /// Seed forwarded to backends that support it, and used for sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Call cache file (defaults to cache.db in the run directory).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Replace every backend with a mock replaying this fixture file.
    #[arg(long, global = true)]
    mock_fixtures: Option<PathBuf>,
    /// Run directory (overrides [output].dir).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate answer variations and score their consistency.
    Evaluate,
    /// Evaluate, then re-select answers with Ask-to-Choose and compare.
    A2c,
    /// Label answer pairs interactively.
    Annotate {
        /// Annotator id written with every label
        #[arg(long)]
        annotator: String,
        #[arg(long, default_value = "context")]
        branch: String,
        /// Label a seeded random sample of N pairs.
        #[arg(long)]
        sample: Option<usize>,
        /// Annotation file (.csv or .jsonl); defaults to annotations.csv in the run directory.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Metric correlations, Fleiss' kappa and agreement with human labels.
    Analyze {
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value = "context")]
        branch: String,
    },
    /// Print a run's summary; with --check, recompute it from the records.
    Report {
        #[arg(long)]
        check: bool,
    },
}

impl Global {
    fn options(&self) -> RunOptions {
        RunOptions {
            limit: self.limit,
            seed: self.seed,
            cache: self.cache.clone(),
            mock_fixtures: self.mock_fixtures.clone(),
            output: self.output.clone(),
        }
    }

    fn load_config(&self) -> anyhow::Result<RunConfig> {
        let path = self.config.as_deref().context("--config is required for this command")?;
        RunConfig::load(path)
    }

    fn run_dir(&self) -> anyhow::Result<PathBuf> {
        let dir = match (&self.output, &self.config) {
            (Some(d), _) => d.clone(),
            (None, Some(_)) => self.load_config()?.output.dir,
            (None, None) => bail!("pass --output or --config to locate the run directory"),
        };
        pipeline::ensure_run_dir(&dir)?;
        Ok(dir)
    }
}

fn branch(name: &str) -> anyhow::Result<Branch> {
    Branch::from_name(name).with_context(|| {
        let names: Vec<&str> = Branch::ALL.iter().map(|b| b.name()).collect();
        format!("unknown branch {name:?}; expected one of {}", names.join(", "))
    })
}

fn evaluate(g: &Global, with_a2c: bool) -> anyhow::Result<ExitCode> {
    let outcome = pipeline::run(g.load_config()?, &g.options(), with_a2c)?;
    print!("{}", pipeline::render_summary(&outcome.summary));
    if let Some(c) = &outcome.comparisons {
        println!();
        print!("{}", pipeline::render_comparisons(c));
    }
    println!("\nrun directory: {}", outcome.dir.display());
    if outcome.too_many_failures {
        eprintln!(
            "error: {} of {} questions failed ({})",
            outcome.summary.failed,
            outcome.summary.questions,
            outcome.summary.failed_ids.join(", ")
        );
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn annotate(g: &Global, annotator: &str, branch_name: &str, sample: Option<usize>, file: Option<&Path>) -> anyhow::Result<ExitCode> {
    let dir = g.run_dir()?;
    let records = pipeline::read_records(&dir)?;
    let opts = AnnotateOptions {
        branch: branch(branch_name)?,
        annotator: annotator.to_string(),
        sample,
        seed: g.seed.unwrap_or(0),
        out: file.map(Path::to_path_buf).unwrap_or_else(|| dir.join("annotations.csv")),
    };
    let s = pipeline::annotate(&records, &opts, io::stdin().lock(), io::stdout().lock())?;
    println!(
        "\n{} labeled, {} skipped, {} remaining -> {}",
        s.labeled,
        s.skipped,
        s.remaining,
        opts.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn analyze(g: &Global, annotations: Option<&Path>, branch_name: &str) -> anyhow::Result<ExitCode> {
    let dir = g.run_dir()?;
    let out = pipeline::analyze(&dir, annotations, branch(branch_name)?)?;
    print!("{}", out.matrix.heat_table());
    if let Some(k) = out.kappa {
        println!("Fleiss' kappa: {k:.4}");
    }
    for h in &out.rho_vs_human {
        let rho = h.rho.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into());
        println!("rho({}, human) = {rho} (n={})", h.metric, h.n);
    }
    for note in &out.notes {
        println!("note: {note}");
    }
    Ok(ExitCode::SUCCESS)
}

fn report(g: &Global, check: bool) -> anyhow::Result<ExitCode> {
    let dir = g.run_dir()?;
    print!("{}", pipeline::report_text(&dir)?);
    if check {
        let outcome = pipeline::check_run(&dir)?;
        if !outcome.mismatches.is_empty() {
            for m in &outcome.mismatches {
                eprintln!("mismatch: {m}");
            }
            return Ok(ExitCode::FAILURE);
        }
        println!("\ncheck: recomputed metrics match the stored summary");
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Evaluate => evaluate(g, false),
        Command::A2c => evaluate(g, true),
        Command::Annotate { annotator, branch, sample, file } => annotate(g, annotator, branch, *sample, file.as_deref()),
        Command::Analyze { annotations, branch } => analyze(g, annotations.as_deref(), branch),
        Command::Report { check } => report(g, *check),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
