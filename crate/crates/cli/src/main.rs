use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tabqa_core::executor::{Executor, ExecutorFactory, ScriptedExecutor, ScriptedOutcomes, SubprocessFactory};
use tabqa_core::harness::demo::write_demo;
use tabqa_core::harness::inspect::{render_section, InspectError, SECTIONS};
use tabqa_core::harness::manifest::validate_id;
use tabqa_core::harness::{
    load_manifest, replay, run_eval, run_one, AuditBundle, BundleError, ConfigError, ManifestError, QAInstance,
    RunConfig, Runtime,
};
use tabqa_core::metrics::Subset;

/// Answers questions about table images and records an auditable trace of
/// every stage.
#[derive(Parser)]
#[command(name = "tabqa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer one question about one image.
    Run(RunArgs),
    /// Run every instance of a manifest and write a score report.
    Eval(EvalArgs),
    /// Re-check a bundle: table, helpers, execution, answer and scores.
    Replay(ReplayArgs),
    /// Print one section of a bundle.
    Inspect(InspectArgs),
    /// Write an offline demo directory (image, manifest, config, mappings).
    Demo {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    max_tries: Option<u32>,
    /// Command that starts a sandbox executor speaking the JSONL protocol.
    #[arg(long)]
    executor_command: Option<String>,
    /// JSON file of canned executor outcomes keyed by script.
    #[arg(long)]
    scripted_executor: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    question: String,
    /// Accepted answer; repeat for several. Without any, no scores are computed.
    #[arg(long = "answer")]
    answers: Vec<String>,
    /// Bundle id; defaults to the image file stem.
    #[arg(long)]
    id: Option<String>,
    #[arg(long, default_value = "custom")]
    subset: String,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Use the executor configured in this config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    executor_command: Option<String>,
    #[arg(long)]
    scripted_executor: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, help = format!("One of: {}", SECTIONS.join(", ")))]
    section: String,
}

/// Bad input rather than a pipeline failure.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn is_input_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<Usage>()
            || e.is::<ConfigError>()
            || e.is::<ManifestError>()
            || e.is::<BundleError>()
            || e.is::<InspectError>()
    })
}

fn load_runtime(o: &Overrides) -> Result<Runtime> {
    let mut config = RunConfig::load(&o.config)?;
    let cwd = std::env::current_dir().context("cannot read working directory")?;
    if let Some(dir) = &o.output_dir {
        config.output_dir = cwd.join(dir);
    }
    if let Some(p) = o.parallelism {
        config.parallelism = p;
    }
    if let Some(t) = o.max_tries {
        config.max_tries = t;
    }
    if let Some(cmd) = &o.executor_command {
        config.executor_command = Some(cmd.clone());
    }
    if let Some(path) = &o.scripted_executor {
        config.executor_command = None;
        config.scripted_executor = Some(cwd.join(path));
    }
    Ok(Runtime::from_config(config)?)
}

fn default_id(image: &Path) -> String {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let id: String = stem
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_') { c } else { '-' })
        .collect();
    if id.is_empty() || id == "report" {
        "run".into()
    } else {
        id
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let runtime = load_runtime(&args.overrides)?;
    if !args.image.is_file() {
        return Err(usage(format!("image {} does not exist", args.image.display())));
    }
    let id = args.id.unwrap_or_else(|| default_id(&args.image));
    validate_id(&id).map_err(usage)?;
    let subset: Subset = serde_json::from_value(serde_json::Value::String(args.subset.clone()))
        .map_err(|_| usage(format!("unknown subset {:?}", args.subset)))?;
    if args.question.trim().is_empty() {
        return Err(usage("question is empty"));
    }
    let instance = QAInstance {
        id,
        subset,
        image_path: args.image,
        question: args.question,
        answers: args.answers,
    };
    let (bundle, path) = run_one(&runtime, &instance)?;
    println!("bundle: {}", path.display());
    match &bundle.answer {
        Some(answer) => println!("answer: {answer}"),
        None => println!("answer: (none)"),
    }
    if let Some(text) = bundle.stages.explanation.completed().map(|e| e.text.as_str()) {
        println!("explanation: {text}");
    }
    if let Some(s) = &bundle.scores {
        println!("scores: exact={} relieved={} anls={:.4}", s.exact, s.relieved, s.anls);
    }
    Ok(if bundle.answer.is_some() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let runtime = load_runtime(&args.overrides)?;
    let instances = load_manifest(&args.manifest)?;
    let outcome = run_eval(&runtime, &instances)?;
    print!("{}", outcome.report.to_text_table());
    println!("report: {}", outcome.report_json.display());
    Ok(ExitCode::SUCCESS)
}

fn replay_executor(args: &ReplayArgs) -> Result<Box<dyn Executor>> {
    let factory: Arc<dyn ExecutorFactory> = if let Some(command) = &args.executor_command {
        Arc::new(SubprocessFactory { command: command.clone() })
    } else if let Some(path) = &args.scripted_executor {
        let outcomes = ScriptedOutcomes::from_file(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        Arc::new(ScriptedExecutor::new(outcomes))
    } else if let Some(config) = &args.config {
        Runtime::from_config(RunConfig::load(config)?)?.executor
    } else {
        bail!(usage("replay needs --executor-command, --scripted-executor or --config"));
    };
    Ok(factory.open().context("cannot start executor")?)
}

fn cmd_replay(args: ReplayArgs) -> Result<ExitCode> {
    let bundle = AuditBundle::load(&args.bundle)?;
    let mut executor = replay_executor(&args)?;
    let verdict = replay(&bundle, executor.as_mut()).context("executor failed during replay")?;
    print!("{}", verdict.render());
    Ok(if verdict.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_inspect(args: InspectArgs) -> Result<ExitCode> {
    let bundle = AuditBundle::load(&args.bundle)?;
    let text = render_section(&bundle, &args.section)?;
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_demo(dir: &Path) -> Result<ExitCode> {
    let layout = write_demo(dir).with_context(|| format!("cannot write demo into {}", dir.display()))?;
    println!("config:   {}", layout.config.display());
    println!("manifest: {}", layout.manifest.display());
    println!("image:    {}", layout.image.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("TABQA_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Demo { dir } => cmd_demo(&dir),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_input_error(&err) { 2 } else { 1 })
        }
    }
}
