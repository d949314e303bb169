use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lingua_dp::accountant::{default_orders, epsilon_for, sigma_for, MechanismParams, SigmaSearch};
use lingua_dp::config::RunConfig;
use lingua_dp::experiments::{self, ExperimentName};
use lingua_dp::fmt::g17;
use lingua_dp::influence::{dataset_profiles, CheckpointSet};
use lingua_dp::metrics::{linguistic_fairness_gap, pairwise_report, MetricKind, MetricReport};
use lingua_dp::repr_store::{load_set, write_embeddings, Manifest, ManifestEntry};
use lingua_dp::synth::{dataset_from_set, gen_parallel_set, SynthSpec};
use lingua_dp::trainer::{evaluate, read_checkpoint_dir, train, LabeledDataset, ModelSpec, TrainConfig};
use lingua_dp::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_CRITERION: u8 = 4;

#[derive(Parser)]
#[command(name = "lingua-dp", version, about = "Compression metrics, DP training and influence scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pairwise compression metrics for one layer of a manifest.
    Metrics(MetricsArgs),
    /// Train a classifier with DP-SGD and write checkpoints.
    Train(TrainArgs),
    /// TracInCP scores and InfU for every translation tuple.
    Influence(InfluenceArgs),
    /// Privacy spent by a subsampled Gaussian run, or the sigma for a target.
    Accountant(AccountantArgs),
    /// Generate a synthetic multi-parallel set and classification data.
    Synth(SynthArgs),
    /// Run a named experiment end to end.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    layer: i64,
    /// Comma-separated subset of retrieval,cka,rsa,isoscore.
    #[arg(long, default_value = "retrieval,cka,rsa,isoscore")]
    metrics: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory holding features.emb and labels.tsv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InfluenceArgs {
    #[arg(long)]
    checkpoints: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use the last K checkpoints (0 = all).
    #[arg(long, default_value_t = 3)]
    last: usize,
    /// Number of classes; defaults to the largest label + 1.
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Args)]
struct AccountantArgs {
    #[arg(long)]
    q: f64,
    #[arg(long)]
    steps: u64,
    #[arg(long)]
    delta: f64,
    #[arg(long, conflicts_with = "epsilon", required_unless_present = "epsilon")]
    sigma: Option<f64>,
    /// Target epsilon; prints the smallest sigma reaching it.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Optional key=value file with synthetic-data keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// theorem1, theorem2 or fig2-correlation.
    name: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Criterion(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Metrics(a) => cmd_metrics(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Influence(a) => cmd_influence(&a),
        Command::Accountant(a) => cmd_accountant(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Experiment(a) => cmd_experiment(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e @ Error::Diverged { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Criterion(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_CRITERION)
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Error> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn cmd_metrics(a: &MetricsArgs) -> CmdResult {
    let kinds = a.metrics.split(',').map(|s| s.trim().parse::<MetricKind>()).collect::<Result<Vec<_>, _>>()?;
    let set = load_set(&Manifest::load(&a.manifest)?, a.layer)?;
    let mut csv = format!("{}\n", MetricReport::CSV_HEADER);
    for kind in kinds {
        let report = pairwise_report(&set, kind)?;
        let mut buf = Vec::new();
        report.write_csv_rows(&mut buf).expect("write to vec");
        csv.push_str(std::str::from_utf8(&buf).expect("csv is utf-8"));
    }
    Ok(write_file(&a.out, csv)?)
}

fn model_for(cfg: &RunConfig, data: &LabeledDataset) -> Result<ModelSpec, Error> {
    let classes = cfg.int("classes").map_or(data.num_classes(), |c| c as usize);
    data.check_classes(classes)?;
    cfg.model_spec(data.dim(), classes)
}

fn cmd_train(a: &TrainArgs) -> CmdResult {
    let cfg = RunConfig::load(&a.config)?;
    let data = LabeledDataset::load(&a.data)?;
    let spec = model_for(&cfg, &data)?;
    let train_cfg = cfg.train_config(TrainConfig::default())?;
    let out = train(&data, &spec, &train_cfg)?;
    eprintln!("sigma = {}", g17(out.sigma));

    create_dir(&a.out)?;
    for ck in &out.checkpoints {
        ck.write(a.out.join(ck.file_name()))?;
    }
    let mut log = String::from("step,lr,loss,accuracy\n");
    for s in &out.log {
        writeln!(log, "{},{},{},{}", s.step, g17(s.lr), g17(s.loss), g17(s.accuracy)).unwrap();
    }
    write_file(&a.out.join("train_log.csv"), log)?;

    let ev = evaluate(&out.theta, &spec, &data)?;
    let mut csv = String::from("quantity,language,value\n");
    writeln!(csv, "sigma,ALL,{}", g17(out.sigma)).unwrap();
    writeln!(csv, "accuracy,ALL,{}", g17(ev.accuracy)).unwrap();
    writeln!(csv, "mean_loss,ALL,{}", g17(ev.mean_loss)).unwrap();
    for (lang, loss) in &ev.per_language_loss {
        writeln!(csv, "loss,{lang},{}", g17(*loss)).unwrap();
    }
    if ev.per_language_loss.len() >= 2 {
        let gap = linguistic_fairness_gap(&ev.per_language_loss)?;
        writeln!(csv, "fairness_variance,ALL,{}", g17(gap.variance)).unwrap();
        writeln!(csv, "fairness_max_gap,ALL,{}", g17(gap.max_gap)).unwrap();
    }
    Ok(write_file(&a.out.join("eval.csv"), csv)?)
}

fn cmd_influence(a: &InfluenceArgs) -> CmdResult {
    let data = LabeledDataset::load(&a.data)?;
    let mut cks = CheckpointSet::new(read_checkpoint_dir(&a.checkpoints)?)?;
    if a.last > 0 {
        cks = cks.last(a.last);
    }
    let classes = a.classes.unwrap_or_else(|| data.num_classes());
    data.check_classes(classes)?;
    let spec = ModelSpec::infer(data.dim(), classes, cks.num_params()).ok_or_else(|| {
        Error::ShapeMismatch(format!(
            "{} parameters fit no model with input {} and {classes} classes",
            cks.num_params(),
            data.dim()
        ))
    })?;
    let langs = data.language_order();
    let mut csv = String::from("tuple,anchor,target,quantity,value\n");
    for p in dataset_profiles(&data, &cks, &spec)? {
        for (k, row) in p.scores.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                writeln!(csv, "{},{},{},tracin,{}", p.tuple_index, langs[k], langs[j], g17(*v)).unwrap();
            }
        }
        writeln!(csv, "{},ALL,ALL,infu,{}", p.tuple_index, g17(p.infu)).unwrap();
    }
    Ok(write_file(&a.out, csv)?)
}

fn cmd_accountant(a: &AccountantArgs) -> CmdResult {
    if let Some(target) = a.epsilon {
        let sigma = sigma_for(target, a.q, a.steps, a.delta, &default_orders(), SigmaSearch::default())?;
        println!("sigma\n{}", g17(sigma));
    } else {
        let sigma = a.sigma.expect("clap enforces sigma or epsilon");
        let spent = epsilon_for(&MechanismParams::new(a.q, sigma, a.steps, a.delta))?;
        println!("epsilon,best_order\n{},{}", g17(spent.epsilon), spent.best_order);
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> CmdResult {
    let cfg = load_config(a.config.as_deref())?;
    let mut spec = cfg.synth_spec(SynthSpec::default())?;
    if let Some(l) = a.lambda {
        spec.lambda = l;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let (set, labels) = gen_parallel_set(&spec)?;
    create_dir(&a.out)?;
    let mut entries = Vec::new();
    for (lang, m) in set.languages().iter().zip(set.matrices()) {
        let file = format!("{lang}.emb");
        write_embeddings(a.out.join(&file), m)?;
        entries.push(ManifestEntry { language: lang.clone(), layer: set.layer(), path: file.into() });
    }
    write_file(&a.out.join("manifest.tsv"), Manifest::new(entries)?.to_text())?;
    dataset_from_set(&set, &labels)?.save(&a.out)?;
    Ok(())
}

fn cmd_experiment(a: &ExperimentArgs) -> CmdResult {
    let name: ExperimentName = a.name.parse()?;
    let cfg = load_config(a.config.as_deref())?;
    let report = experiments::run(name, &cfg)?;
    create_dir(&a.out)?;
    write_file(&a.out.join(format!("{name}_runs.csv")), report.runs_csv())?;
    write_file(&a.out.join(format!("{name}_summary.csv")), report.summary_csv())?;
    if report.passed() {
        println!("{name}: pass");
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Criterion(format!("{name}: fail ({})", failed.join(", "))))
    }
}
