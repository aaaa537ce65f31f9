mod config;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use absa_core::corpus::{load_dataset, load_embeddings, load_untagged, AeTag, EmbeddingTable, Polarity, SentenceRecord, Vocabulary};
use absa_core::evaluation::{predict_all, score, MetricsReport, Prediction, Span, SpanKind};
use absa_core::model::{load_checkpoint, save_checkpoint, Checkpoint, ModelState};
use absa_core::numerics::GradCheckOptions;
use absa_core::synthetic::gradcheck_fixture;
use absa_core::training::{fit, model_gradcheck, split_dev, TrainConfig};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, RunConfig};

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "absa", version, about = "Joint aspect term, opinion term and aspect sentiment tagging")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, one training run each.
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set message_passing=none`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model per seed and report dev (and test) metrics.
    Train,
    /// Score a checkpoint, or a file of predictions, against gold records.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Gold records; defaults to the `test` key.
        #[arg(long)]
        test: Option<PathBuf>,
        /// JSON lines with `ae_tags` and `polarities` (or gold `as_tags`) to score instead
        /// of running a model.
        #[arg(long, conflicts_with = "checkpoint")]
        predictions: Option<PathBuf>,
    },
    /// Tag records (gold tags optional) and write JSON lines.
    Predict {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Finite-difference check of the model gradient on the bundled two-sentence fixture.
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt_backward: bool,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] absa_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("gradient check failed: max relative error {0:.3e} >= {GRADCHECK_TOLERANCE:e}")]
    Gradcheck(f64),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Runtime(_) | CliError::Io { .. } => 2,
            CliError::Gradcheck(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|_| ConfigError::MissingPath {
                key: "--config".into(),
                path: path.clone(),
            })?;
            RunConfig::parse_text(&text, &path.display().to_string())?
        }
        None => RunConfig::default(),
    };
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    if !common.seed.is_empty() {
        cfg.seeds = common.seed.clone();
    }
    if let Some(out) = &common.out {
        cfg.paths.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a PathBuf> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("`{key}` is not set (use --{key} or --set {key}=PATH)")))
}

fn load_vectors(path: &Option<PathBuf>, key: &str, dim: usize, vocab: &Vocabulary) -> Result<Option<EmbeddingTable<f32>>> {
    let Some(path) = path else { return Ok(None) };
    let table = load_embeddings::<f32>(path, vocab)?;
    if table.dim() != dim {
        return Err(ConfigError::Key {
            key: key.to_string(),
            message: format!("{} has {}-dimensional vectors, expected {dim}", path.display(), table.dim()),
        }
        .into());
    }
    Ok(Some(table))
}

struct SeedResult {
    dev: MetricsReport,
    test: Option<MetricsReport>,
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    cfg.require_existing(&["train", "dev", "test", "general_vectors", "domain_vectors"])?;
    let train_path = require(&cfg.paths.train, "train")?;
    let train_all = load_dataset(train_path)?.records;
    let dev_fixed = cfg.paths.dev.as_ref().map(load_dataset).transpose()?.map(|d| d.records);
    let test = cfg.paths.test.as_ref().map(load_dataset).transpose()?.map(|d| d.records);

    let mut vocab = Vocabulary::build(&train_all, cfg.model.inverse_relations);
    if let Some(dev) = &dev_fixed {
        vocab.extend_words(dev);
    }
    if let Some(test) = &test {
        vocab.extend_words(test);
    }
    let general = load_vectors(&cfg.paths.general_vectors, "general_vectors", cfg.model.general_dim, &vocab)?;
    let domain = if cfg.model.domain_embeddings {
        load_vectors(&cfg.paths.domain_vectors, "domain_vectors", cfg.model.domain_dim, &vocab)?
    } else {
        None
    };

    let out = &cfg.paths.out_dir;
    for sub in ["checkpoints", "logs", "metrics"] {
        let dir = out.join(sub);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    write_file(&out.join("run.cfg"), &cfg.to_text())?;

    let run_seed = |_: usize, &seed: &u64| -> Result<SeedResult> {
        let (train, dev) = match &dev_fixed {
            Some(dev) => (train_all.clone(), dev.clone()),
            None => split_dev(&train_all, cfg.train.dev_fraction, seed)?,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = ModelState::new(cfg.model.clone(), &vocab, general.clone(), domain.clone(), &mut rng)?;
        let train_cfg = TrainConfig { seed, ..cfg.train.clone() };

        let log_path = out.join(format!("logs/train-seed{seed}.jsonl"));
        let mut log = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
        let outcome = fit(state, &vocab, &train, &dev, &train_cfg, Some(&mut log))?;
        log.flush().map_err(io_err(&log_path))?;
        log::info!(
            "seed {seed}: best epoch {} of {}, dev F1-I {:.4}",
            outcome.best_epoch,
            outcome.log.len(),
            outcome.best_dev.f1_i
        );

        let checkpoint = Checkpoint {
            state: outcome.state,
            vocab: vocab.clone(),
        };
        save_checkpoint(out.join(format!("checkpoints/model-seed{seed}.ckpt")), &checkpoint)?;
        write_file(&out.join(format!("metrics/dev-seed{seed}.json")), &outcome.best_dev.to_json())?;
        let test_report = match &test {
            Some(test) => {
                let preds = predict_all(&checkpoint.state, &vocab, test, cfg.train.exec)?;
                let report = score(&preds, test)?;
                write_file(&out.join(format!("metrics/test-seed{seed}.json")), &report.to_json())?;
                Some(report)
            }
            None => None,
        };
        Ok(SeedResult {
            dev: outcome.best_dev,
            test: test_report,
        })
    };
    let results = cfg.train.exec.try_map(&cfg.seeds, run_seed)?;

    let dev: Vec<_> = results.iter().map(|r| r.dev.clone()).collect();
    let dev_mean = MetricsReport::mean(&dev).expect("at least one seed");
    write_file(&out.join("metrics/dev-mean.json"), &dev_mean.to_json())?;
    println!("{}", summary_line("dev", cfg.seeds.len(), &dev_mean));
    let test: Vec<_> = results.iter().filter_map(|r| r.test.clone()).collect();
    if let Some(test_mean) = MetricsReport::mean(&test) {
        write_file(&out.join("metrics/test-mean.json"), &test_mean.to_json())?;
        println!("{}", summary_line("test", cfg.seeds.len(), &test_mean));
    }
    Ok(())
}

fn summary_line(split: &str, runs: usize, r: &MetricsReport) -> String {
    format!(
        "{split} (mean of {runs}): F1-a {:.4}  F1-o {:.4}  acc-s {:.4}  F1-s {:.4}  F1-I {:.4}",
        r.f1_a, r.f1_o, r.acc_s, r.f1_s, r.f1_i
    )
}

/// One line of a predictions file. Gold files also parse: their `as_tags` stand in for
/// `polarities`.
#[derive(Deserialize)]
struct PredictionLine {
    ae_tags: Vec<AeTag>,
    #[serde(default)]
    polarities: Option<Vec<Polarity>>,
    #[serde(default)]
    as_tags: Option<Vec<String>>,
}

fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let line_err = |line: usize, message: String| absa_core::Error::Record {
        source_name: path.display().to_string(),
        line,
        message,
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine = serde_json::from_str(line).map_err(|e| line_err(i + 1, e.to_string()))?;
        let polarities = match (p.polarities, p.as_tags) {
            (Some(pol), _) => pol,
            (None, Some(tags)) => tags.iter().map(|t| Polarity::parse(t).unwrap_or(Polarity::Neu)).collect(),
            (None, None) => return Err(line_err(i + 1, "needs `polarities` or `as_tags`".into()).into()),
        };
        out.push(Prediction {
            ae_tags: p.ae_tags,
            polarities,
        });
    }
    Ok(out)
}

fn cmd_evaluate(cfg: &RunConfig, checkpoint: Option<&PathBuf>, test: Option<&PathBuf>, predictions: Option<&PathBuf>) -> Result<()> {
    let test_path = test.or(cfg.paths.test.as_ref()).ok_or_else(|| {
        CliError::Usage("no gold file: pass --test or set `test`".into())
    })?;
    if !test_path.exists() {
        return Err(ConfigError::MissingPath {
            key: "test".into(),
            path: test_path.clone(),
        }
        .into());
    }
    let gold = load_dataset(test_path)?.records;
    if gold.is_empty() {
        return Err(CliError::Usage(format!("{}: no records to evaluate", test_path.display())));
    }
    let preds = match predictions {
        Some(path) => load_predictions(path)?,
        None => {
            let ckpt = load_model(cfg, checkpoint)?;
            predict_all(&ckpt.state, &ckpt.vocab, &gold, cfg.train.exec)?
        }
    };
    let report = score(&preds, &gold)?;
    let json = report.to_json();
    println!("{json}");
    write_file(&cfg.paths.out_dir.join("metrics/evaluate.json"), &json)
}

fn load_model(cfg: &RunConfig, checkpoint: Option<&PathBuf>) -> Result<Checkpoint<f32>> {
    let path = checkpoint
        .or(cfg.paths.checkpoint.as_ref())
        .ok_or_else(|| CliError::Usage("no model: pass --checkpoint or set `checkpoint`".into()))?;
    if !path.exists() {
        return Err(ConfigError::MissingPath {
            key: "checkpoint".into(),
            path: path.clone(),
        }
        .into());
    }
    Ok(load_checkpoint::<f32>(path)?)
}

#[derive(Serialize)]
struct AspectPair {
    start: usize,
    end: usize,
    text: String,
    sentiment: Polarity,
}

#[derive(Serialize)]
struct OpinionTerm {
    start: usize,
    end: usize,
    text: String,
}

#[derive(Serialize)]
struct AnnotatedRecord<'a> {
    tokens: &'a [String],
    heads: &'a [usize],
    deprels: &'a [String],
    ae_tags: &'a [AeTag],
    polarities: &'a [Polarity],
    pairs: Vec<AspectPair>,
    opinions: Vec<OpinionTerm>,
}

fn annotate(record: &SentenceRecord, pred: &Prediction) -> Result<String> {
    let text = |s: &Span| record.tokens[s.start..=s.end].join(" ");
    let spans = pred.spans()?;
    let line = AnnotatedRecord {
        tokens: &record.tokens,
        heads: &record.heads,
        deprels: &record.deprels,
        ae_tags: &pred.ae_tags,
        polarities: &pred.polarities,
        pairs: spans
            .iter()
            .filter(|s| s.kind == SpanKind::Aspect)
            .map(|s| AspectPair {
                start: s.start,
                end: s.end,
                text: text(s),
                sentiment: s.sentiment.expect("aspect spans carry a sentiment"),
            })
            .collect(),
        opinions: spans
            .iter()
            .filter(|s| s.kind == SpanKind::Opinion)
            .map(|s| OpinionTerm {
                start: s.start,
                end: s.end,
                text: text(s),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&line).expect("annotation serializes"))
}

fn cmd_predict(cfg: &RunConfig, checkpoint: Option<&PathBuf>, input: &Path, output: Option<&PathBuf>) -> Result<()> {
    if !input.exists() {
        return Err(ConfigError::MissingPath {
            key: "--input".into(),
            path: input.to_path_buf(),
        }
        .into());
    }
    let ckpt = load_model(cfg, checkpoint)?;
    let records = load_untagged(input)?;
    let preds = predict_all(&ckpt.state, &ckpt.vocab, &records, cfg.train.exec)?;
    let mut text = String::new();
    for (r, p) in records.iter().zip(&preds) {
        text.push_str(&annotate(r, p)?);
        text.push('\n');
    }
    match output {
        Some(path) => write_file(path, &text),
        None => io::stdout().write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn cmd_gradcheck(cfg: &RunConfig, corrupt_backward: bool) -> Result<()> {
    let opts = GradCheckOptions {
        step: cfg.gradcheck_step,
        max_coords_per_tensor: (cfg.gradcheck_coords > 0).then_some(cfg.gradcheck_coords),
        seed: cfg.seeds[0],
        ..Default::default()
    };
    let start = Instant::now();
    let report = model_gradcheck(&cfg.model, &gradcheck_fixture(), &opts, corrupt_backward)?;
    let secs = start.elapsed().as_secs_f64();
    for t in &report.tensors {
        println!(
            "{:<28} checked {:>5}  skipped {:>3}  max rel error {:.3e}",
            t.name, t.checked, t.skipped_at_kinks, t.max_rel_error
        );
    }
    let checked: usize = report.tensors.iter().map(|t| t.checked).sum();
    println!(
        "max relative error {:.3e} over {checked} coordinates ({secs:.1}s)",
        report.max_rel_error
    );
    if report.passes(GRADCHECK_TOLERANCE) {
        Ok(())
    } else {
        Err(CliError::Gradcheck(report.max_rel_error))
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.common)?;
    match &cli.command {
        Command::Train => cmd_train(&cfg),
        Command::Evaluate {
            checkpoint,
            test,
            predictions,
        } => cmd_evaluate(&cfg, checkpoint.as_ref(), test.as_ref(), predictions.as_ref()),
        Command::Predict {
            checkpoint,
            input,
            output,
        } => cmd_predict(&cfg, checkpoint.as_ref(), input, output.as_ref()),
        Command::Gradcheck { corrupt_backward } => cmd_gradcheck(&cfg, *corrupt_backward),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
