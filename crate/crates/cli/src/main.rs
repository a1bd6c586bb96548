use clap::{Args, Parser, Subcommand};
use dpp_core::costs::CostKind;
use dpp_core::experiment::{run_experiment, ExperimentError, ExperimentSpec, LabelOrderKind};
use dpp_core::learners::Algorithm;
use dpp_core::online_pca::LearningRate;
use dpp_core::regressor::Engine;
use dpp_core::stream::DataFormat;
use dpp_core::verify::{run_suite, Suite, VerifyOptions};
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "dpp",
    version,
    about = "Online cost-sensitive multi-label experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment grid and write cost traces plus a summary.
    Run(Box<RunArgs>),
    /// Run a property suite and print its JSON report.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON file with any of the run options; flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// sparse-labels or arff.
    #[arg(long)]
    format: Option<DataFormat>,
    /// Label attribute names (one per line), required for ARFF.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Comma-separated algorithms.
    #[arg(long = "algo", value_delimiter = ',')]
    algorithms: Vec<Algorithm>,
    /// Comma-separated cost functions.
    #[arg(long = "cost", value_delimiter = ',')]
    costs: Vec<CostKind>,
    /// Comma-separated code sizes as fractions of K.
    #[arg(long = "m-frac", value_delimiter = ',')]
    m_fracs: Vec<f64>,
    /// Comma-separated label-flip probabilities.
    #[arg(long = "noise-p", value_delimiter = ',')]
    noise_ps: Vec<f64>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Base seed; repeat r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "out")]
    output: Option<PathBuf>,
    /// Constant online PCA learning rate.
    #[arg(long, conflicts_with = "eta_scale")]
    eta: Option<f64>,
    /// Online PCA learning rate scale / sqrt(t).
    #[arg(long)]
    eta_scale: Option<f64>,
    /// Ridge regularization.
    #[arg(long, conflicts_with = "sgd_scale")]
    lambda: Option<f64>,
    /// Use gradient steps of size scale / sqrt(t) instead of ridge.
    #[arg(long)]
    sgd_scale: Option<f64>,
    /// native or random.
    #[arg(long, value_parser = parse_label_order)]
    label_order: Option<LabelOrderKind>,
    #[arg(long)]
    order_seed: Option<u64>,
    /// Use at most this many instances of each permuted stream.
    #[arg(long)]
    limit: Option<usize>,
    /// Keep raw feature scales instead of normalizing to the unit ball.
    #[arg(long)]
    no_normalize: bool,
    /// Log expected regret every this many steps (PBC learners).
    #[arg(long)]
    regret_stride: Option<u64>,
    /// Skip the condition probe of cost-sensitive learners.
    #[arg(long)]
    skip_condition_check: bool,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// lemma1, lemma3, sherman, projection, bounds, regret or all.
    suite: String,
    #[arg(long)]
    cost: Option<CostKind>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_label_order(s: &str) -> Result<LabelOrderKind, String> {
    match s {
        "native" => Ok(LabelOrderKind::Native),
        "random" => Ok(LabelOrderKind::Random),
        other => Err(format!(
            "unknown label order '{other}' (expected native or random)"
        )),
    }
}

/// Run options read from a JSON file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    dataset: Option<PathBuf>,
    format: Option<String>,
    labels: Option<PathBuf>,
    algorithms: Option<Vec<Algorithm>>,
    costs: Option<Vec<CostKind>>,
    m_fracs: Option<Vec<f64>>,
    noise_ps: Option<Vec<f64>>,
    repeats: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    engine: Option<Engine>,
    eta: Option<LearningRate>,
    label_order: Option<LabelOrderKind>,
    order_seed: Option<u64>,
    limit: Option<usize>,
    normalize_features: Option<bool>,
    regret_stride: Option<u64>,
    skip_condition_check: Option<bool>,
}

fn non_empty<T>(v: Vec<T>) -> Option<Vec<T>> {
    (!v.is_empty()).then_some(v)
}

fn resolve_spec(args: RunArgs) -> Result<ExperimentSpec, String> {
    let file = match &args.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str::<ConfigFile>(&text)
                .map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ConfigFile::default(),
    };

    let dataset = args
        .dataset
        .or(file.dataset)
        .ok_or("a dataset is required (--dataset or config 'dataset')")?;
    let output = args
        .output
        .or(file.output)
        .ok_or("an output directory is required (--out or config 'output')")?;
    let mut spec = ExperimentSpec::new(dataset, output);

    if let Some(f) = args.format {
        spec.format = f;
    } else if let Some(f) = file.format {
        spec.format = f.parse()?;
    }
    spec.label_file = args.labels.or(file.labels);
    if let Some(v) = non_empty(args.algorithms).or(file.algorithms) {
        spec.algorithms = v;
    }
    if let Some(v) = non_empty(args.costs).or(file.costs) {
        spec.costs = v;
    }
    if let Some(v) = non_empty(args.m_fracs).or(file.m_fracs) {
        spec.m_fracs = v;
    }
    if let Some(v) = non_empty(args.noise_ps).or(file.noise_ps) {
        spec.noise_ps = v;
    }
    spec.repeats = args.repeats.or(file.repeats).unwrap_or(spec.repeats);
    spec.seed = args.seed.or(file.seed).unwrap_or(spec.seed);

    spec.engine = match (args.lambda, args.sgd_scale) {
        (Some(lambda), _) => Engine::Ridge { lambda },
        (None, Some(scale)) => Engine::Sgd { scale },
        (None, None) => file.engine.unwrap_or(spec.engine),
    };
    spec.eta = match (args.eta, args.eta_scale) {
        (Some(eta), _) => LearningRate::Constant { eta },
        (None, Some(scale)) => LearningRate::InvSqrt { scale },
        (None, None) => file.eta.unwrap_or(spec.eta),
    };

    spec.label_order = args
        .label_order
        .or(file.label_order)
        .unwrap_or(spec.label_order);
    spec.order_seed = args
        .order_seed
        .or(file.order_seed)
        .unwrap_or(spec.order_seed);
    spec.limit = args.limit.or(file.limit);
    spec.normalize_features = if args.no_normalize {
        false
    } else {
        file.normalize_features.unwrap_or(spec.normalize_features)
    };
    spec.regret_stride = args.regret_stride.or(file.regret_stride);
    spec.skip_condition_check =
        args.skip_condition_check || file.skip_condition_check.unwrap_or(false);
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn run(args: RunArgs) -> ExitCode {
    let spec = match resolve_spec(args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("dpp run: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run_experiment(&spec) {
        Ok(summary) => {
            for g in &summary.groups {
                println!(
                    "{} {} m={} p={}: {:.6} +- {:.6} (n={})",
                    g.algorithm,
                    g.cost,
                    g.m_frac,
                    g.noise_p,
                    g.final_avg_cost.mean,
                    g.final_avg_cost.std_err,
                    g.final_avg_cost.n
                );
            }
            println!("wrote {}", spec.output.join("summary.json").display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("dpp run: {e}");
            let code = if matches!(e, ExperimentError::Spec(_)) {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            };
            ExitCode::from(code)
        }
    }
}

fn verify(args: VerifyArgs) -> ExitCode {
    let suites = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        match args.suite.parse::<Suite>() {
            Ok(s) => vec![s],
            Err(e) => {
                eprintln!("dpp verify: {e}");
                return ExitCode::from(EXIT_USAGE);
            }
        }
    };
    let opts = VerifyOptions {
        cost: args.cost,
        trials: args.trials,
        seed: args.seed,
    };
    let reports: Vec<_> = suites.into_iter().map(|s| run_suite(s, &opts)).collect();
    let all_passed = reports.iter().all(|r| r.passed);
    let json = if reports.len() == 1 {
        serde_json::to_string_pretty(&reports[0])
    } else {
        serde_json::to_string_pretty(&reports)
    };
    println!("{}", json.expect("report serializes"));
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_RUNTIME)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(*args),
        Command::Verify(args) => verify(args),
    }
}
