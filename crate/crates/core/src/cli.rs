//! Command-line front end: one binary, one subcommand per pipeline stage.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{
    k_core_filter, load_interactions, shuffle_timestamp_ties, split, write_interactions, CoreMode, DatasetSplit, InputFormat,
    InteractionLog, SplitSpec,
};
use crate::directionality::{AggregationFunction, AggregationKind, DeltaMode, TiePolicy};
use crate::error::{Error, Result};
use crate::eval::{
    ablation_sweep, ablation_tsv, cold_start_eval, cold_start_tsv, evaluate, grid_search, grid_table_tsv, training_log, AblationKind,
    AblationSetup, EvalConfig, GridSpec, Objective, Protocol, Target,
};
use crate::format::{load_model, save_model};
use crate::model::{build_fingerprint, build_model, EmbeddingTable, ModelParams};
use crate::projection::PruningPolicy;

#[derive(Debug, Parser)]
#[command(name = "copgraph", version, about = "Complementary-product graph recommender")]
struct Cli {
    /// Worker threads for parallel stages: a positive count or "auto".
    #[arg(long, global = true, env = "COPGRAPH_THREADS", default_value = "auto")]
    threads: String,

    /// Suppress progress lines on standard error; errors are still printed.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

static QUIET: AtomicBool = AtomicBool::new(false);

/// Progress and provenance lines, kept off standard output.
macro_rules! note {
    ($($arg:tt)*) => {
        if !QUIET.load(Ordering::Relaxed) {
            eprintln!($($arg)*);
        }
    };
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load, filter and optionally tie-shuffle a log, writing it back as TSV.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Destination TSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a model file from an interaction log.
    Build {
        #[command(flatten)]
        data: DataArgs,
        /// Build on the training part of this split instead of the whole log.
        #[arg(long, value_enum)]
        split: Option<SplitKind>,
        #[command(flatten)]
        model: ModelArgs,
        /// Destination model file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print top-k complements of an item as `rank item score` rows.
    Recommend {
        /// Model file written by `build`.
        #[arg(long)]
        model: PathBuf,
        /// Query item id.
        #[arg(long)]
        item: String,
        /// Number of recommendations.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Embedding file (`dim D` header) used when the item is not in the graph.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Category of a cold query item.
        #[arg(long, default_value = "")]
        category: String,
    },
    /// Score a model on the test part of a split of its input log.
    Evaluate {
        /// Model file built with `build --split` on the same log and flags.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "sequential")]
        split: SplitKind,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Search (alpha, lambda, kappa) on validation data, then refit and test the winner.
    GridSearch {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "sequential")]
        split: SplitKind,
        #[command(flatten)]
        model: ModelArgs,
        /// Alpha values: comma list or `lo:hi:step`.
        #[arg(long, default_value = "0:1:0.1")]
        alpha_grid: String,
        /// Lambda values: comma list or inclusive `lo:hi`.
        #[arg(long, default_value = "1:6")]
        lambda_grid: String,
        /// Kappa values: comma list or inclusive `lo:hi`.
        #[arg(long, default_value = "1,2,3,4,5,8")]
        kappa_grid: String,
        /// Selection metric, `ndcg@K` or `recall@K`.
        #[arg(long, default_value = "ndcg@5")]
        objective: String,
        /// Where to save the refit winning model.
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Vary one factor of the pipeline and report each setting.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "sequential")]
        split: SplitKind,
        #[command(flatten)]
        model: ModelArgs,
        /// Factor to vary.
        #[arg(long, value_enum)]
        kind: AblationArg,
        /// Values for `lambda` or `kcore`: comma list or inclusive `lo:hi`.
        #[arg(long)]
        range: Option<String>,
        /// Number of shuffle seeds for `ties`, counting up from --seed.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Item cold-start study on a 90/10 per-user split.
    ColdStartEval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Embedding file (`dim D` header).
        #[arg(long)]
        embeddings: PathBuf,
        /// Shares of items withheld from training.
        #[arg(long, default_value = "0.02,0.05,0.1")]
        rates: String,
        /// NDCG cutoff.
        #[arg(long, default_value_t = 5)]
        cutoff: usize,
        /// Report file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Interaction file (.csv, .tsv or .jsonl) with user, item, timestamp and optional category.
    #[arg(long)]
    input: PathBuf,
    /// Input format; inferred from the extension when absent.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Minimum interactions per user and per item.
    #[arg(long, default_value_t = 5)]
    min_core: u32,
    /// Apply the core threshold once instead of iterating to a fixed point.
    #[arg(long)]
    single_pass_core: bool,
    /// Randomly reorder purchases that share a timestamp.
    #[arg(long)]
    shuffle_ties: bool,
    /// Seed for tie shuffling and random splits.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Weight of category-level directionality, in [0, 1].
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Walk length on the projected item graph.
    #[arg(long, default_value_t = 4)]
    lambda: u32,
    /// Co-purchase window.
    #[arg(long, default_value_t = 4)]
    kappa: u32,
    /// Co-purchase distance weighting.
    #[arg(long, default_value = "inv", value_parser = parse_agg)]
    agg: AggregationKind,
    /// Scale of the `exp` and `gauss` weightings.
    #[arg(long, default_value_t = 1.0)]
    agg_scale: f64,
    /// Distance between purchases in sequence steps or elapsed days.
    #[arg(long, value_enum, default_value = "steps")]
    delta_mode: DeltaArg,
    /// Same-timestamp pairs follow sequence order or count both ways.
    #[arg(long, value_enum, default_value = "order")]
    ties: TiesArg,
    /// Sparsity control while powering: `none`, `topM` or `epsX`.
    #[arg(long, default_value = "top500")]
    pruning: String,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Ranking cutoffs, comma separated.
    #[arg(long, default_value = "5,10,20")]
    cutoffs: String,
    /// Print `key=value` lines instead of TSV.
    #[arg(long)]
    summary: bool,
    /// Report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitKind {
    /// Leave the last two purchases of each user out.
    Sequential,
    /// Random per-user 80/10/10 partition.
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Tsv,
    Jsonl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DeltaArg {
    Steps,
    Days,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TiesArg {
    Order,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AblationArg {
    Aggregation,
    Lambda,
    Kcore,
    Ties,
}

fn parse_agg(s: &str) -> std::result::Result<AggregationKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("error: category=usage message={first:?}");
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: category={} message={:?}", e.category(), e.to_string());
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    QUIET.store(cli.quiet, Ordering::Relaxed);
    configure_threads(&cli.threads)?;
    match cli.command {
        Command::Ingest { data, out } => {
            let log = prepare(&data)?;
            write_interactions(&log, &out)?;
            note!("wrote {}", out.display());
        }
        Command::Build {
            data,
            split: kind,
            model,
            out,
        } => {
            let params = model.params(&data)?;
            note!("config: command=build split={} {params}", split_name(kind));
            let log = prepare(&data)?;
            let model = match kind {
                Some(kind) => {
                    let s = split(&log, &split_spec(kind, data.seed))?;
                    build_model(training_log(&s, Target::Test), &params)?
                }
                None => build_model(&log, &params)?,
            };
            note!(
                "model: items={} edges={} fingerprint={}",
                model.n_items(),
                model.weights().nnz(),
                model.fingerprint()
            );
            save_model(&model, &out)?;
            note!("wrote {}", out.display());
        }
        Command::Recommend {
            model,
            item,
            k,
            embeddings,
            category,
        } => {
            let model = load_model(&model)?;
            note!("config: command=recommend item={item} k={k} {}", model.params());
            note!("model: fingerprint={}", model.fingerprint());
            let recs = match embeddings {
                Some(path) => model.recommend_cold_start(&item, &category, &EmbeddingTable::load(&path)?, k)?,
                None => model.recommend(&item, k)?,
            };
            let mut out = String::new();
            for (n, r) in recs.iter().enumerate() {
                out.push_str(&format!("{}\t{}\t{:e}\n", n + 1, r.item, r.score));
            }
            emit(None, &out)?;
        }
        Command::Evaluate {
            model,
            data,
            split: kind,
            report,
        } => {
            let model = load_model(&model)?;
            let config = report.config(kind, Target::Test)?;
            note!(
                "config: command=evaluate split={} cutoffs={:?} {}",
                split_name(Some(kind)),
                config.cutoffs,
                model.params()
            );
            let s = prepare_split(&data, kind)?;
            let expected = build_fingerprint(training_log(&s, Target::Test), model.params());
            if expected != model.fingerprint() {
                return Err(Error::Config(format!(
                    "model fingerprint {} does not match the training part of this split ({expected}); rebuild with `build --split` and the same data flags",
                    model.fingerprint()
                )));
            }
            let r = evaluate(&model, &s, &config)?;
            report.emit(&if report.summary { r.summary() } else { r.to_tsv() })?;
        }
        Command::GridSearch {
            data,
            split: kind,
            model,
            alpha_grid,
            lambda_grid,
            kappa_grid,
            objective,
            model_out,
            report,
        } => {
            let base = model.params(&data)?;
            let grid = GridSpec {
                alphas: parse_f64_list(&alpha_grid)?,
                lambdas: parse_u32_list(&lambda_grid)?,
                kappas: parse_u32_list(&kappa_grid)?,
                objective: objective.parse::<Objective>()?,
            };
            let config = report.config(kind, Target::Test)?;
            note!(
                "config: command=grid-search split={} alphas={:?} lambdas={:?} kappas={:?} objective={} {base}",
                split_name(Some(kind)),
                grid.alphas,
                grid.lambdas,
                grid.kappas,
                grid.objective
            );
            let s = prepare_split(&data, kind)?;
            let outcome = grid_search(&s, &base, &grid, &config)?;
            let mut cutoffs = config.cutoffs.clone();
            if !cutoffs.contains(&grid.objective.cutoff) {
                cutoffs.push(grid.objective.cutoff);
                cutoffs.sort_unstable();
            }
            let failed = outcome.points.iter().filter(|p| p.outcome.is_err()).count();
            note!(
                "best: {} validation {}={:.6} failed_points={failed}",
                outcome.best,
                grid.objective,
                outcome.best_validation
            );
            note!("{}", indent("test: ", &outcome.test_report.summary()).trim_end());
            if let Some(path) = model_out {
                save_model(&outcome.model, &path)?;
                note!("wrote {}", path.display());
            }
            report.emit(&grid_table_tsv(&outcome.points, &cutoffs))?;
        }
        Command::Ablate {
            data,
            split: kind,
            model,
            kind: ablation,
            range,
            seeds,
            report,
        } => {
            let base = model.params(&data)?;
            let values = || -> Result<Vec<u32>> {
                parse_u32_list(
                    range
                        .as_deref()
                        .ok_or_else(|| Error::Config("--range is required for this ablation".into()))?,
                )
            };
            let kind_value = match ablation {
                AblationArg::Aggregation => AblationKind::Aggregation,
                AblationArg::Lambda => AblationKind::Lambda(values()?),
                AblationArg::Kcore => AblationKind::KCore(values()?),
                AblationArg::Ties => AblationKind::TieShuffle((data.seed..data.seed + seeds).collect()),
            };
            let config = report.config(kind, Target::Test)?;
            note!("config: command=ablate kind={kind_value:?} split={} {base}", split_name(Some(kind)));
            let log = load(&data)?;
            let setup = AblationSetup {
                log: &log,
                base,
                split: split_spec(kind, data.seed),
                core_mode: core_mode(&data),
                config,
            };
            let rows = ablation_sweep(&kind_value, &setup)?;
            report.emit(&ablation_tsv(&rows))?;
        }
        Command::ColdStartEval {
            data,
            model,
            embeddings,
            rates,
            cutoff,
            out,
        } => {
            let params = model.params(&data)?;
            let rates = parse_f64_list(&rates)?;
            note!("config: command=cold-start-eval rates={rates:?} cutoff={cutoff} {params}");
            let log = prepare(&data)?;
            let table = EmbeddingTable::load(&embeddings)?;
            note!("embeddings: items={} dim={}", table.len(), table.dim());
            let rows = cold_start_eval(&log, &params, &table, &rates, data.seed, cutoff)?;
            emit(out.as_deref(), &cold_start_tsv(&rows, cutoff))?;
        }
    }
    Ok(())
}

impl ModelArgs {
    fn params(&self, data: &DataArgs) -> Result<ModelParams> {
        let params = ModelParams {
            alpha: self.alpha,
            lambda: self.lambda,
            kappa: self.kappa,
            aggregation: AggregationFunction::new(self.agg, self.agg_scale)?,
            pruning: self.pruning.parse::<PruningPolicy>()?,
            min_core: data.min_core,
            delta_mode: match self.delta_mode {
                DeltaArg::Steps => DeltaMode::Steps,
                DeltaArg::Days => DeltaMode::Days,
            },
            ties: match self.ties {
                TiesArg::Order => TiePolicy::SequenceOrder,
                TiesArg::Both => TiePolicy::Bidirectional,
            },
        };
        params.validate()?;
        Ok(params)
    }
}

impl ReportArgs {
    fn config(&self, kind: SplitKind, target: Target) -> Result<EvalConfig> {
        let cutoffs = self
            .cutoffs
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("cutoff {c:?} is not a positive integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        let protocol = match kind {
            SplitKind::Sequential => Protocol::Sequential,
            SplitKind::Random => Protocol::Graph,
        };
        EvalConfig::new(cutoffs, protocol, target)
    }

    fn emit(&self, text: &str) -> Result<()> {
        emit(self.out.as_deref(), text)
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, text).map_err(|e| Error::io(p, e))?;
            note!("wrote {}", p.display());
            Ok(())
        }
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn indent(prefix: &str, text: &str) -> String {
    text.lines().map(|l| format!("{prefix}{l}\n")).collect()
}

fn configure_threads(spec: &str) -> Result<()> {
    let n = match spec {
        "auto" => 0,
        s => match s.parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => return Err(Error::invalid(format!("threads {s:?} must be a positive integer or \"auto\""))),
        },
    };
    #[cfg(feature = "parallel")]
    {
        // A second configuration in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn split_name(kind: Option<SplitKind>) -> &'static str {
    match kind {
        None => "none",
        Some(SplitKind::Sequential) => "sequential",
        Some(SplitKind::Random) => "random",
    }
}

fn split_spec(kind: SplitKind, seed: u64) -> SplitSpec {
    match kind {
        SplitKind::Sequential => SplitSpec::sequential(),
        SplitKind::Random => SplitSpec::graph(seed),
    }
}

fn core_mode(data: &DataArgs) -> CoreMode {
    if data.single_pass_core {
        CoreMode::SinglePass
    } else {
        CoreMode::Iterative
    }
}

fn describe(label: &str, log: &InteractionLog) {
    note!(
        "{label}: users={} items={} events={} sha256={}",
        log.n_users(),
        log.n_items(),
        log.n_events(),
        log.fingerprint()
    );
}

/// Loads the input and applies the tie shuffle, without core filtering.
fn load(data: &DataArgs) -> Result<InteractionLog> {
    let format = match data.format {
        Some(FormatArg::Csv) => InputFormat::Csv,
        Some(FormatArg::Tsv) => InputFormat::Tsv,
        Some(FormatArg::Jsonl) => InputFormat::Jsonl,
        None => InputFormat::from_path(&data.input)
            .ok_or_else(|| Error::Config(format!("cannot infer the format of {}; pass --format", data.input.display())))?,
    };
    let mut log = load_interactions(&data.input, format)?;
    note!("input: path={}", data.input.display());
    describe("loaded", &log);
    if data.shuffle_ties {
        log = shuffle_timestamp_ties(&log, data.seed);
        note!("shuffled timestamp ties with seed {}", data.seed);
    }
    Ok(log)
}

fn prepare(data: &DataArgs) -> Result<InteractionLog> {
    let log = k_core_filter(&load(data)?, data.min_core as usize, core_mode(data))?;
    describe("filtered", &log);
    Ok(log)
}

fn prepare_split(data: &DataArgs, kind: SplitKind) -> Result<DatasetSplit> {
    let s = split(&prepare(data)?, &split_spec(kind, data.seed))?;
    note!(
        "split: validation_users={} test_users={} skipped_users={}",
        s.validation.len(),
        s.test.len(),
        s.skipped_users
    );
    Ok(s)
}

/// Comma list, or `lo:hi:step` inclusive of both ends.
fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::invalid(format!("{s:?} is not a number list or lo:hi:step range"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step): (f64, f64, f64) = (
                lo.parse().map_err(|_| bad())?,
                hi.parse().map_err(|_| bad())?,
                step.parse().map_err(|_| bad())?,
            );
            if !(step > 0.0 && hi >= lo) {
                return Err(bad());
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9).collect())
        }
        [_] => s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect(),
        _ => Err(bad()),
    }
}

/// Comma list, or `lo:hi` inclusive of both ends.
fn parse_u32_list(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::invalid(format!("{s:?} is not an integer list or lo:hi range"));
    match s.split_once(':') {
        Some((lo, hi)) => {
            let (lo, hi): (u32, u32) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
            if lo > hi {
                return Err(bad());
            }
            Ok((lo..=hi).collect())
        }
        None => s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_u32_list("1:4").unwrap(), [1, 2, 3, 4]);
        assert_eq!(parse_u32_list("1, 2,8").unwrap(), [1, 2, 8]);
        assert!(parse_u32_list("4:1").is_err());
        let alphas = parse_f64_list("0:1:0.1").unwrap();
        assert_eq!(alphas.len(), 11);
        assert_eq!(alphas[3], 0.3);
        assert_eq!(alphas[10], 1.0);
        assert_eq!(parse_f64_list("0.85").unwrap(), [0.85]);
        assert!(parse_f64_list("a:b").is_err());
    }

    #[test]
    fn every_subcommand_has_help() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        for sub in [
            "ingest",
            "build",
            "recommend",
            "evaluate",
            "grid-search",
            "ablate",
            "cold-start-eval",
        ] {
            assert!(Cli::command().find_subcommand(sub).is_some(), "{sub}");
        }
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(run(["copgraph", "build", "--bogus"]), 2);
    }
}
