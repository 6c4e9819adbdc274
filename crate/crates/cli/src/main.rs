mod error;

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patchscope::alpha::diff_trees;
use patchscope::ast::{export_ast_json, ingest_ast_json, parse_source, Ast};
use patchscope::embedding::{build_corpus, read_embeddings, train_skipgram, write_embeddings};
use patchscope::gat::{read_checkpoint, write_checkpoint};
use patchscope::metrics::{evaluate, read_scores_csv, spearman, write_scores_csv, MetricsReport};
use patchscope::synth::{generate, Signal};
use patchscope::train::{
    bin_indices, commit_graphs, cross_project_split, fit_pipeline, load_dataset_file,
    score_dataset, sensitivity_experiment, write_history_csv, Dataset, RunConfig, SplitTag,
    TrainError,
};

use error::{CliError, CliResult};

/// Structural classifier for silent vulnerability-fixing commits.
#[derive(Parser, Debug)]
#[command(name = "patchscope", version)]
struct Cli {
    /// JSON run configuration; explicit flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random component (embeddings, model, split, synthesis).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a source file (or ingest an AST-JSON file) and print its AST as JSON.
    Parse {
        file: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build the annotated change graph between two versions of a file.
    Diff {
        old: PathBuf,
        new: PathBuf,
        #[arg(long, value_enum, default_value_t = GraphFormat::Json)]
        format: GraphFormat,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the token sentence of every commit graph, one per line.
    Corpus {
        dataset: PathBuf,
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Train token embeddings on a dataset's change graphs.
    TrainEmbed {
        dataset: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Split, train embeddings and the classifier, and save all artifacts.
    Train {
        dataset: PathBuf,
        /// Receives model.psgat, embeddings.psemb, history.csv, test.jsonl and config.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Score every commit of a dataset with a trained model.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        dataset: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute classification and effort-aware metrics from a scores CSV.
    Evaluate {
        scores: PathBuf,
        /// Effort levels in percent of changed lines.
        #[arg(long = "ce", num_args = 1.., default_values_t = [5.0])]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
    },
    /// Generate a synthetic labelled dataset as JSONL.
    Synth {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value = "mixed")]
        signal: Signal,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Experiment reports.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
}

#[derive(Subcommand, Debug)]
enum ReportKind {
    /// Train on growing subsets of the training side and score the same test side.
    Folds {
        dataset: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long = "ce", num_args = 1.., default_values_t = [5.0])]
        levels: Vec<f64>,
        #[command(flatten)]
        knobs: Knobs,
    },
    /// Metrics per changed-lines bin of a scores CSV.
    Bins {
        scores: PathBuf,
        /// Bin edges in changed lines, strictly increasing.
        #[arg(long, value_delimiter = ',', default_values_t = [10u64, 100])]
        edges: Vec<u64>,
        #[arg(long = "ce", num_args = 1.., default_values_t = [5.0])]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
}

/// Overrides for the most common configuration values.
#[derive(Args, Debug, Default)]
struct Knobs {
    /// Training epochs of the classifier.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Number of attention layers.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    min_count: Option<u64>,
    /// Share of projects on the training side when no split tags are present.
    #[arg(long)]
    train_fraction: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GraphFormat {
    Json,
    Dot,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
}

struct Ctx {
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<u8> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::input("--jobs must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::input(e.to_string()))?;
    }
    let ctx = Ctx { quiet: cli.quiet };
    let base = load_config(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::Parse { file, output } => {
            let ast = read_tree(&file)?;
            emit(
                output.as_deref(),
                format!("{}\n", export_ast_json(&ast)).as_bytes(),
            )?;
        }
        Command::Diff {
            old,
            new,
            format,
            output,
        } => {
            let (a, b) = (read_tree(&old)?, read_tree(&new)?);
            let graph = diff_trees(&a, &b);
            let text = match format {
                GraphFormat::Json => format!("{}\n", graph.to_json()),
                GraphFormat::Dot => graph.to_dot(),
            };
            emit(output.as_deref(), text.as_bytes())?;
            let c = graph.counts();
            eprintln!("added={} deleted={}", c.nodes[1], c.nodes[2]);
        }
        Command::Corpus {
            dataset,
            min_count,
            output,
        } => {
            let cfg = checked(base)?;
            let ds = load(&dataset)?;
            let graphs = commit_graphs(&ds, cfg.node_cap)?;
            let corpus = build_corpus(&graphs, min_count.unwrap_or(cfg.embedding.min_count))?;
            let mut text = String::new();
            for s in &corpus.sentences {
                text.push_str(&s.join(" "));
                text.push('\n');
            }
            emit(output.as_deref(), text.as_bytes())?;
            ctx.note(format!(
                "sentences={} vocab={}",
                corpus.sentences.len(),
                corpus.vocab.len()
            ));
        }
        Command::TrainEmbed {
            dataset,
            output,
            knobs,
        } => {
            let cfg = checked(apply(base, &knobs))?;
            let ds = load(&dataset)?;
            let graphs = commit_graphs(&ds, cfg.node_cap)?;
            let corpus = build_corpus(&graphs, cfg.embedding.min_count)?;
            let table = train_skipgram(&corpus, &cfg.embedding)?;
            let mut w = create(&output)?;
            write_embeddings(&table, &mut w)?;
            w.flush().map_err(|e| CliError::io(&output, e))?;
            ctx.note(format!("vocab={} dim={}", table.vocab.len(), table.dim()));
        }
        Command::Train {
            dataset,
            out_dir,
            knobs,
        } => {
            let cfg = checked(apply(base, &knobs))?;
            cmd_train(&ctx, &dataset, &out_dir, &cfg)?;
        }
        Command::Predict {
            checkpoint,
            embeddings,
            dataset,
            output,
        } => {
            let cfg = checked(base)?;
            let ckpt = read_checkpoint(open(&checkpoint)?)?;
            let table = read_embeddings(open(&embeddings)?)?;
            let ds = load(&dataset)?;
            let scored = score_dataset(&ds, &table, &ckpt.model, cfg.node_cap)?;
            let mut buf = Vec::new();
            write_scores_csv(&scored, &mut buf)?;
            emit(output.as_deref(), &buf)?;
            ctx.note(format!("scored={}", scored.len()));
        }
        Command::Evaluate {
            scores,
            levels,
            threshold,
            format,
        } => {
            let scored = read_scores_csv(open(&scores)?)?;
            let report = evaluate(&scored, threshold, &levels)?;
            let text = match format {
                ReportFormat::Table => report.to_table(),
                ReportFormat::Json => format!("{}\n", report.to_json()),
            };
            emit(None, text.as_bytes())?;
            if report.auc.is_none() {
                eprintln!("warning: AUC omitted, the scores contain a single class");
                return Ok(3);
            }
        }
        Command::Synth { n, signal, output } => {
            if n < 2 {
                return Err(CliError::input("--n must be at least 2"));
            }
            let ds = generate(n, signal, cli.seed.unwrap_or(0));
            let mut buf = Vec::new();
            ds.write_jsonl(&mut buf)
                .map_err(|e| CliError::input(e.to_string()))?;
            emit(output.as_deref(), &buf)?;
        }
        Command::Report { kind } => match kind {
            ReportKind::Folds {
                dataset,
                k,
                levels,
                knobs,
            } => {
                let cfg = checked(apply(base, &knobs))?;
                cmd_folds(&ctx, &dataset, k, &levels, &cfg)?;
            }
            ReportKind::Bins {
                scores,
                edges,
                levels,
                threshold,
            } => {
                cmd_bins(&scores, &edges, &levels, threshold)?;
            }
        },
    }
    Ok(0)
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> CliResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    Ok(cfg)
}

fn apply(mut cfg: RunConfig, k: &Knobs) -> RunConfig {
    if let Some(v) = k.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = k.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = k.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = k.dim {
        cfg.embedding.dim = v;
    }
    if let Some(v) = k.layers {
        cfg.model.layers = v;
    }
    if let Some(v) = k.min_count {
        cfg.embedding.min_count = v;
    }
    if let Some(v) = k.train_fraction {
        cfg.train_fraction = v;
    }
    cfg
}

fn checked(cfg: RunConfig) -> CliResult<RunConfig> {
    cfg.validate()
        .map_err(|m| CliError::input(format!("invalid configuration: {m}")))?;
    Ok(cfg)
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn load(path: &Path) -> CliResult<Dataset> {
    Ok(load_dataset_file(path)?)
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(|e| CliError::io(p, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::input(e.to_string()))
        }
    }
}

/// `.json` files are AST documents; anything else is parsed as source.
fn read_tree(path: &Path) -> CliResult<Ast> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        ingest_ast_json(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    } else {
        parse_source(&text, &path.to_string_lossy())
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
    }
}

/// Test-tagged samples form the test side when any sample carries a tag;
/// otherwise a project-disjoint split is drawn.
fn split(ds: &Dataset, cfg: &RunConfig) -> CliResult<(Dataset, Dataset)> {
    if ds.has_split_tags() {
        let (test, train): (Vec<_>, Vec<_>) = ds
            .samples
            .iter()
            .cloned()
            .partition(|s| s.split == Some(SplitTag::Test));
        return Ok((Dataset { samples: train }, Dataset { samples: test }));
    }
    Ok(cross_project_split(ds, cfg.train_fraction, cfg.train.seed)?)
}

fn cmd_train(ctx: &Ctx, dataset: &Path, out_dir: &Path, cfg: &RunConfig) -> CliResult<()> {
    let ds = load(dataset)?;
    match ds.class_counts() {
        (_, 0) if !ds.is_empty() => return Err(TrainError::SingleClassDataset("fixing").into()),
        (0, _) if !ds.is_empty() => return Err(TrainError::SingleClassDataset("non-fixing").into()),
        _ => {}
    }
    let (train, test) = split(&ds, cfg)?;
    ctx.note(format!("train={} test={}", train.len(), test.len()));
    let fit = fit_pipeline(&train, cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;

    let path = out_dir.join("model.psgat");
    let mut w = create(&path)?;
    write_checkpoint(&fit.outcome.best, &mut w)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = out_dir.join("embeddings.psemb");
    let mut w = create(&path)?;
    write_embeddings(&fit.table, &mut w)?;
    w.flush().map_err(|e| CliError::io(&path, e))?;

    let path = out_dir.join("history.csv");
    write_history_csv(&fit.outcome.history, create(&path)?)
        .map_err(|e| CliError::input(e.to_string()))?;

    let path = out_dir.join("test.jsonl");
    let mut w = create(&path)?;
    test.write_jsonl(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(&path, e))?;

    let mut used = cfg.clone();
    used.model = fit.outcome.best.model.config.clone();
    let path = out_dir.join("config.json");
    let text = serde_json::to_string_pretty(&used).expect("configuration serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;

    let last = fit
        .outcome
        .history
        .last()
        .expect("training runs at least one epoch");
    ctx.note(format!(
        "best_epoch={} final_loss={:.6} final_f1={:.4}",
        fit.outcome.best.epoch, last.loss, last.f1
    ));
    Ok(())
}

fn cmd_folds(
    ctx: &Ctx,
    dataset: &Path,
    k: usize,
    levels: &[f64],
    cfg: &RunConfig,
) -> CliResult<()> {
    let ds = load(dataset)?;
    let (train, test) = split(&ds, cfg)?;
    let folds = sensitivity_experiment(&train, &test, k, cfg, levels)?;
    let mut out = csv_header(levels, "fold,train_size");
    let mut sizes = Vec::new();
    let mut f1s = Vec::new();
    for (i, f) in folds.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            f.train_size,
            metric_cells(&f.report, levels)
        ));
        sizes.push(f.train_size as f64);
        f1s.push(f.report.f1);
    }
    emit(None, out.as_bytes())?;
    match spearman(&sizes, &f1s) {
        Some(rho) => ctx.note(format!("spearman={rho:.4}")),
        None => ctx.note("spearman=undefined (constant F1)"),
    }
    Ok(())
}

fn cmd_bins(scores: &Path, edges: &[u64], levels: &[f64], threshold: f64) -> CliResult<()> {
    let scored = read_scores_csv(open(scores)?)?;
    let locs: Vec<u64> = scored.iter().map(|s| s.changed_loc).collect();
    let bins = bin_indices(&locs, edges)?;
    let mut out = csv_header(levels, "bin,n");
    for (b, idx) in bins.iter().enumerate() {
        let lo = if b == 0 { 0 } else { edges[b - 1] };
        let range = match edges.get(b) {
            Some(hi) => format!("[{lo};{hi})"),
            None => format!("[{lo};inf)"),
        };
        if idx.is_empty() {
            out.push_str(&format!("{range},0{}\n", ",".repeat(5 + levels.len())));
            continue;
        }
        let subset: Vec<_> = idx.iter().map(|&i| scored[i].clone()).collect();
        let report = evaluate(&subset, threshold, levels)?;
        out.push_str(&format!(
            "{range},{},{}\n",
            idx.len(),
            metric_cells(&report, levels)
        ));
    }
    emit(None, out.as_bytes())
}

fn csv_header(levels: &[f64], lead: &str) -> String {
    let mut h = format!("{lead},precision,recall,f1,accuracy,auc");
    for l in levels {
        h.push_str(&format!(",ce@{l}"));
    }
    h.push('\n');
    h
}

fn metric_cells(r: &MetricsReport, levels: &[f64]) -> String {
    let mut cells = vec![
        format!("{:.4}", r.precision),
        format!("{:.4}", r.recall),
        format!("{:.4}", r.f1),
        format!("{:.4}", r.accuracy),
        r.auc.map(|v| format!("{v:.4}")).unwrap_or_default(),
    ];
    for l in levels {
        cells.push(
            r.ce_at
                .get(&format!("{l}"))
                .map(|v| format!("{v:.4}"))
                .unwrap_or_default(),
        );
    }
    cells.join(",")
}
