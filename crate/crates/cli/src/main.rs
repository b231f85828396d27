//! `belnet generate | train | eval | verify`.
//!
//! Exit codes: 0 success, 1 usage, 2 numeric/contract/configuration failure
//! (including failed properties), 3 I/O or malformed files.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use belnet_core::autodiff::OpKind;
use belnet_core::data::{build_dataset, ProblemConfig, SamplingMode, TestSet, TrainSet};
use belnet_core::operators::{Model, OperatorModel};
use belnet_core::training::{evaluate, train_with, write_history, Checkpoint, TrainConfig};
use belnet_core::verify::{run_suite, PropertyResult, Suite};
use belnet_core::{Error, Exec};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use manifest::{dataset_hashes, file_hash, ExperimentManifest};

const SEED_VAR: &str = "BELNET_SEED";

#[derive(Parser)]
#[command(name = "belnet", version, about = "Mesh-free operator learning experiments")]
struct Cli {
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train and test splits into OUT/train and OUT/test.
    Generate(GenerateArgs),
    /// Train a model and write model.json, history.csv, train_config.json, manifest.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test split and write a JSON report.
    Eval(EvalArgs),
    /// Run the property suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Burgers,
    Elliptic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Belnet,
    Don,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    Fix,
    Free,
}

impl From<Mode> for SamplingMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Fix => SamplingMode::Fix,
            Mode::Free => SamplingMode::Free,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    problem: Problem,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    n_train: usize,
    #[arg(long)]
    n_test: usize,
    /// Master seed; falls back to $BELNET_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON overrides of the problem configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Sensor mode the model is trained for; must match the dataset.
    #[arg(long, value_enum)]
    variant: Option<Mode>,
    /// Dataset directory (containing train/) or a train split directory.
    #[arg(long)]
    data: PathBuf,
    /// JSON overrides of the preset training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Falls back to the config file, then $BELNET_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory (containing test/) or a test split directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Store the evaluation wall-clock time in the report.
    #[arg(long)]
    record_timing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Restrict to these suites (repeatable).
    #[arg(long, value_parser = parse_suite)]
    suite: Vec<Suite>,
    /// Print a JSON summary instead of text.
    #[arg(long)]
    json: bool,
    /// Corrupt the backward rule of one operation, e.g. `tanh`.
    #[arg(long, value_parser = parse_op)]
    inject_fault: Option<OpKind>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_op(s: &str) -> Result<OpKind, String> {
    OpKind::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = OpKind::DIFFERENTIABLE.iter().map(|o| o.name()).collect();
        format!("unknown operation '{s}' (one of {})", names.join(", "))
    })
}

enum Failure {
    Usage(String),
    Core(Error),
    /// Already reported; only the exit code remains.
    Properties,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let result = match cli.command {
        Command::Generate(a) => generate(a, exec),
        Command::Train(a) => train(a, exec),
        Command::Eval(a) => eval(a, exec),
        Command::Verify(a) => verify(a, exec),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Properties) => ExitCode::from(2),
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } | Error::Format { .. } => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Usage(format!("{SEED_VAR}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> belnet_core::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json(path: &Path) -> belnet_core::Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Recursively overlays `patch` on `base`; objects merge key by key, any
/// other value replaces.
fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn create_dir(dir: &Path) -> belnet_core::Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// `data` itself when it holds a split, otherwise `data/<split>`.
fn split_dir(data: &Path, split: &str) -> PathBuf {
    if data.join("meta.json").exists() {
        data.to_path_buf()
    } else {
        data.join(split)
    }
}

fn generate(args: GenerateArgs, exec: Exec) -> CliResult<()> {
    let name = match args.problem {
        Problem::Burgers => "burgers",
        Problem::Elliptic => "elliptic",
    };
    let mut problem = serde_json::to_value(ProblemConfig::by_name(name)?).expect("config serialises");
    if let Some(path) = &args.config {
        let patch = read_json(path)?;
        match patch.get("problem") {
            Some(p) if p != name => {
                return Err(Error::config(format!("{} configures problem {p}, not '{name}'", path.display())).into())
            }
            Some(_) => deep_merge(&mut problem, patch),
            None => deep_merge(&mut problem["config"], patch),
        }
    }
    let problem: ProblemConfig =
        serde_json::from_value(problem).map_err(|e| Error::config(format!("problem configuration: {e}")))?;
    let seed = match args.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let (train, test) = build_dataset(&problem, args.mode.into(), args.n_train, args.n_test, seed, exec)?;
    create_dir(&args.out)?;
    train.dataset().write(&args.out.join("train"))?;
    test.dataset().write(&args.out.join("test"))?;
    println!(
        "wrote {} training and {} test samples ({name}, {} sensors, seed {seed}) to {}",
        train.len(),
        test.len(),
        train.meta().mode,
        args.out.display()
    );
    Ok(())
}

fn effective_train_config(args: &TrainArgs, problem: &str) -> CliResult<TrainConfig> {
    let model = match args.model {
        ModelKind::Belnet => "belnet",
        ModelKind::Don => "don",
    };
    let mut preset = TrainConfig::preset(problem, model)?;
    if let Some(seed) = env_seed()? {
        preset.seed = seed;
    }
    let mut value = serde_json::to_value(&preset).expect("config serialises");
    if let Some(path) = &args.config {
        deep_merge(&mut value, read_json(path)?);
    }
    let overrides = [
        ("epochs", args.epochs.map(Value::from)),
        ("seed", args.seed.map(Value::from)),
        ("batch_size", args.batch_size.map(Value::from)),
    ];
    for (key, v) in overrides {
        if let Some(v) = v {
            value[key] = v;
        }
    }
    if let Some(lr) = args.learning_rate {
        value["optimizer"]["learning_rate"] = Value::from(lr);
    }
    let config: TrainConfig =
        serde_json::from_value(value).map_err(|e| Error::config(format!("training configuration: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn train(args: TrainArgs, exec: Exec) -> CliResult<()> {
    let data_dir = split_dir(&args.data, "train");
    let data = TrainSet::read(&data_dir)?;
    if let Some(variant) = args.variant {
        let want: SamplingMode = variant.into();
        if want != data.meta().mode {
            return Err(Error::config(format!(
                "--variant {want} but {} holds {}-mode data",
                data_dir.display(),
                data.meta().mode
            ))
            .into());
        }
    }
    let config = effective_train_config(&args, &data.meta().problem)?;
    let mut model = Model::init(&config.model, config.seed)?;
    let history = if config.epochs == 0 {
        Vec::new()
    } else {
        let every = (config.epochs / 10).max(1);
        train_with(&mut model, &data, &config, exec, |epoch, loss| {
            if (epoch + 1) % every == 0 {
                eprintln!("epoch {:>5}  loss {loss:.6e}", epoch + 1);
            }
        })?
    };

    create_dir(&args.out)?;
    let checkpoint = args.out.join("model.json");
    let config_path = args.out.join("train_config.json");
    Checkpoint::from_model(&model).write(&checkpoint)?;
    write_history(&args.out.join("history.csv"), &history)?;
    write_json(&config_path, &config)?;
    ExperimentManifest::for_training(&data_dir, &config_path, &checkpoint)?.write(&args.out.join("manifest.json"))?;

    match history.last() {
        Some(loss) => println!("final loss {loss:.6e}"),
        None => println!("final loss n/a (0 epochs)"),
    }
    println!("parameters {}", model.count_parameters());
    Ok(())
}

fn eval(args: EvalArgs, exec: Exec) -> CliResult<()> {
    let model = Checkpoint::read(&args.checkpoint)?.into_model()?;
    let data_dir = split_dir(&args.data, "test");
    let test = TestSet::read(&data_dir)?;
    let run_dir = args.checkpoint.parent().unwrap_or(Path::new("."));
    let manifest_path = run_dir.join("manifest.json");
    let manifest = if manifest_path.exists() {
        let m = ExperimentManifest::read(&manifest_path)?;
        m.check_paths()?;
        Some(m)
    } else {
        None
    };

    let start = Instant::now();
    let mut report = evaluate(&model, &test, exec)?;
    let elapsed = start.elapsed().as_secs_f64();
    let config_path = run_dir.join("train_config.json");
    if config_path.exists() {
        let value = read_json(&config_path)?;
        report.train_config =
            Some(serde_json::from_value(value).map_err(|e| Error::format(&config_path, e.to_string()))?);
    }
    if args.record_timing {
        report.wall_clock_s = Some(elapsed);
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_json(&args.out, &report)?;

    if let Some(mut m) = manifest {
        dataset_hashes(&data_dir, &mut m.hashes)?;
        m.hashes.insert(args.out.display().to_string(), file_hash(&args.out)?);
        m.report_path = Some(args.out.display().to_string());
        m.write(&manifest_path)?;
    }
    println!(
        "mean relative error {:.4}% over {} samples ({} excluded), {} parameters",
        report.mean_relative_error_percent,
        report.n_samples,
        report.errors.excluded.len(),
        report.parameter_count
    );
    Ok(())
}

#[derive(Serialize)]
struct VerifySummary<'a> {
    passed: bool,
    failed: Vec<String>,
    results: &'a [PropertyResult],
}

fn verify(args: VerifyArgs, exec: Exec) -> CliResult<()> {
    let suites = if args.suite.is_empty() { Suite::ALL.to_vec() } else { args.suite };
    let mut results = Vec::new();
    for suite in suites {
        results.extend(run_suite(suite, args.inject_fault, exec)?);
    }
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}/{}", r.suite, r.name))
        .collect();
    if args.json {
        let summary = VerifySummary {
            passed: failed.is_empty(),
            failed: failed.clone(),
            results: &results,
        };
        println!("{}", serde_json::to_string_pretty(&summary).expect("summary serialises"));
    } else {
        for r in &results {
            println!("{r}");
        }
        println!("{} of {} properties passed", results.len() - failed.len(), results.len());
    }
    if failed.is_empty() {
        Ok(())
    } else {
        for r in results.iter().filter(|r| !r.passed) {
            eprintln!(
                "failed: {}/{} observed {:e}, required {}",
                r.suite, r.name, r.observed, r.required
            );
        }
        Err(Failure::Properties)
    }
}
