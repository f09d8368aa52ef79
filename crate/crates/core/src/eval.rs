//! Ranking metrics, offline evaluation, grid search and ablation sweeps.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{
    k_core_filter, shuffle_timestamp_ties, split, CoreMode, DatasetSplit, EvalCase, InteractionLog, SplitMode, SplitSpec,
};
use crate::directionality::{AggregationFunction, AggregationKind, DirectionalComponents};
use crate::error::{Error, Result};
use crate::model::{assemble, build_model, ColdStartIndex, ComplementarityModel, EmbeddingTable, ModelParams};
use crate::projection::projection_weights;
use crate::sparse::par_rows;

/// Fraction of the targets found in the first `k` ranked items.
pub fn recall_at_k<T: PartialEq>(ranked: &[T], targets: &[T], k: usize) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let hits = ranked.iter().take(k).filter(|r| targets.contains(r)).count();
    hits as f64 / targets.len() as f64
}

/// Binary-relevance NDCG with the ideal ranking truncated at `min(k, |targets|)`.
pub fn ndcg_at_k<T: PartialEq>(ranked: &[T], targets: &[T], k: usize) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, r)| targets.contains(r))
        .map(|(p, _)| discount(p + 1))
        .sum();
    let idcg: f64 = (1..=k.min(targets.len())).map(discount).sum();
    dcg / idcg
}

fn discount(rank: usize) -> f64 {
    1.0 / (rank as f64 + 1.0).log2()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Leave-one-out on chronological sequences.
    Sequential,
    /// Random per-user 80/10/10 partition.
    Graph,
}

impl Protocol {
    pub fn split_mode(self) -> SplitMode {
        match self {
            Protocol::Sequential => SplitMode::SequentialLeaveOneOut,
            Protocol::Graph => SplitMode::RandomPerUser,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub cutoffs: Vec<usize>,
    pub protocol: Protocol,
    pub target: Target,
}

impl EvalConfig {
    pub fn new(cutoffs: Vec<usize>, protocol: Protocol, target: Target) -> Result<Self> {
        let c = EvalConfig { cutoffs, protocol, target };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoffs.is_empty() || self.cutoffs[0] == 0 || self.cutoffs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(format!(
                "cutoffs {:?} must be positive, ascending and distinct",
                self.cutoffs
            )));
        }
        Ok(())
    }

    fn with_target(&self, target: Target) -> Self {
        EvalConfig { target, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Recall,
    Ndcg,
}

/// A metric at a cutoff, written `ndcg@5` or `recall@20`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Objective {
    pub metric: Metric,
    pub cutoff: usize,
}

impl Default for Objective {
    fn default() -> Self {
        Objective {
            metric: Metric::Ndcg,
            cutoff: 5,
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("objective {s:?} is not of the form ndcg@K or recall@K"));
        let (name, k) = s.split_once('@').ok_or_else(bad)?;
        let metric = match name.to_ascii_lowercase().as_str() {
            "ndcg" => Metric::Ndcg,
            "recall" => Metric::Recall,
            _ => return Err(bad()),
        };
        let cutoff = k.parse::<usize>().ok().filter(|&k| k > 0).ok_or_else(bad)?;
        Ok(Objective { metric, cutoff })
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.metric {
            Metric::Recall => "recall",
            Metric::Ndcg => "ndcg",
        };
        write!(f, "{name}@{}", self.cutoff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cutoffs: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub n_evaluated: usize,
    pub n_skipped: usize,
    pub params: Option<ModelParams>,
}

impl EvalReport {
    pub fn metric(&self, metric: Metric, cutoff: usize) -> Option<f64> {
        let pos = self.cutoffs.iter().position(|&c| c == cutoff)?;
        Some(match metric {
            Metric::Recall => self.recall[pos],
            Metric::Ndcg => self.ndcg[pos],
        })
    }

    pub fn objective(&self, objective: Objective) -> Option<f64> {
        self.metric(objective.metric, objective.cutoff)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric\tk\tvalue\n");
        for (i, k) in self.cutoffs.iter().enumerate() {
            let _ = writeln!(out, "recall\t{k}\t{:.6}", self.recall[i]);
        }
        for (i, k) in self.cutoffs.iter().enumerate() {
            let _ = writeln!(out, "ndcg\t{k}\t{:.6}", self.ndcg[i]);
        }
        out
    }

    /// One `key=value` pair per line.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for (i, k) in self.cutoffs.iter().enumerate() {
            let _ = writeln!(out, "recall@{k}={:.6}", self.recall[i]);
            let _ = writeln!(out, "ndcg@{k}={:.6}", self.ndcg[i]);
        }
        let _ = writeln!(out, "users_evaluated={}", self.n_evaluated);
        let _ = writeln!(out, "users_skipped={}", self.n_skipped);
        if let Some(p) = &self.params {
            for kv in p.to_string().split(' ') {
                let _ = writeln!(out, "{kv}");
            }
        }
        out
    }
}

/// Anything that turns a query item into a ranked candidate list.
pub trait Ranker: Sync {
    /// Up to `k` ranked item ids, or `None` when the query cannot be served.
    fn rank(&self, query: &str, query_category: &str, k: usize) -> Option<Vec<&str>>;
}

impl Ranker for ComplementarityModel {
    fn rank(&self, query: &str, _category: &str, k: usize) -> Option<Vec<&str>> {
        let q = self.item_index(query)?;
        Some(self.recommend_index(q, k).into_iter().map(|(i, _)| self.item_id(i)).collect())
    }
}

/// The model with cold queries routed through their most similar warm item.
pub struct WithColdStart<'a> {
    model: &'a ComplementarityModel,
    embeddings: &'a EmbeddingTable,
    index: ColdStartIndex,
}

impl<'a> WithColdStart<'a> {
    pub fn new(model: &'a ComplementarityModel, embeddings: &'a EmbeddingTable) -> Self {
        WithColdStart {
            model,
            embeddings,
            index: ColdStartIndex::new(model, embeddings),
        }
    }
}

impl Ranker for WithColdStart<'_> {
    fn rank(&self, query: &str, category: &str, k: usize) -> Option<Vec<&str>> {
        if let Some(ranked) = self.model.rank(query, category, k) {
            return Some(ranked);
        }
        let proxy = self.index.proxy_for(self.embeddings.get(query)?, category)?;
        Some(
            self.model
                .recommend_index(proxy, k)
                .into_iter()
                .map(|(i, _)| self.model.item_id(i))
                .collect(),
        )
    }
}

/// Most-purchased training items, excluding the query.
pub struct PopularityBaseline {
    ranked: Vec<String>,
}

impl PopularityBaseline {
    pub fn fit(log: &InteractionLog) -> Self {
        let mut counts = vec![0usize; log.n_items()];
        for seq in log.sequences() {
            for e in seq {
                counts[e.item as usize] += 1;
            }
        }
        let mut order: Vec<usize> = (0..log.n_items()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        PopularityBaseline {
            ranked: order.into_iter().map(|i| log.items()[i].clone()).collect(),
        }
    }
}

impl Ranker for PopularityBaseline {
    fn rank(&self, query: &str, _category: &str, k: usize) -> Option<Vec<&str>> {
        Some(self.ranked.iter().map(String::as_str).filter(|&i| i != query).take(k).collect())
    }
}

#[derive(Debug, Clone)]
struct CaseScore {
    recall: Vec<f64>,
    ndcg: Vec<f64>,
    served: bool,
}

fn score_cases(ranker: &dyn Ranker, split: &DatasetSplit, cases: &[EvalCase], cutoffs: &[usize]) -> Vec<CaseScore> {
    let kmax = *cutoffs.last().unwrap();
    par_rows(cases.len(), |n| {
        let case = &cases[n];
        let targets: Vec<&str> = case.targets.iter().map(|&t| split.item_id(t)).collect();
        let ranked = case.query.and_then(|q| {
            let category = &split.categories[split.item_categories[q as usize] as usize];
            ranker.rank(split.item_id(q), category, kmax)
        });
        match ranked {
            Some(r) => CaseScore {
                recall: cutoffs.iter().map(|&k| recall_at_k(&r, &targets, k)).collect(),
                ndcg: cutoffs.iter().map(|&k| ndcg_at_k(&r, &targets, k)).collect(),
                served: true,
            },
            None => CaseScore {
                recall: vec![0.0; cutoffs.len()],
                ndcg: vec![0.0; cutoffs.len()],
                served: false,
            },
        }
    })
}

fn aggregate<'a>(scores: impl IntoIterator<Item = &'a CaseScore>, cutoffs: &[usize]) -> EvalReport {
    let mut recall = vec![0.0; cutoffs.len()];
    let mut ndcg = vec![0.0; cutoffs.len()];
    let (mut served, mut skipped) = (0, 0);
    for s in scores {
        for i in 0..cutoffs.len() {
            recall[i] += s.recall[i];
            ndcg[i] += s.ndcg[i];
        }
        if s.served {
            served += 1;
        } else {
            skipped += 1;
        }
    }
    let n = (served + skipped).max(1) as f64;
    EvalReport {
        cutoffs: cutoffs.to_vec(),
        recall: recall.into_iter().map(|v| v / n).collect(),
        ndcg: ndcg.into_iter().map(|v| v / n).collect(),
        n_evaluated: served,
        n_skipped: skipped,
        params: None,
    }
}

fn check_protocol(split: &DatasetSplit, config: &EvalConfig) -> Result<()> {
    config.validate()?;
    if config.protocol.split_mode() != split.mode {
        return Err(Error::Config(format!(
            "{:?} evaluation needs a {:?} split, got {:?}",
            config.protocol,
            config.protocol.split_mode(),
            split.mode
        )));
    }
    Ok(())
}

fn cases(split: &DatasetSplit, target: Target) -> &[EvalCase] {
    match target {
        Target::Validation => &split.validation,
        Target::Test => &split.test,
    }
}

/// Macro-averaged metrics of any ranker over the configured held-out cases.
/// Cases whose query cannot be served count as zeros.
pub fn evaluate_ranker(ranker: &dyn Ranker, split: &DatasetSplit, config: &EvalConfig) -> Result<EvalReport> {
    check_protocol(split, config)?;
    let scores = score_cases(ranker, split, cases(split, config.target), &config.cutoffs);
    Ok(aggregate(&scores, &config.cutoffs))
}

pub fn evaluate(model: &ComplementarityModel, split: &DatasetSplit, config: &EvalConfig) -> Result<EvalReport> {
    let mut report = evaluate_ranker(model, split, config)?;
    report.params = Some(*model.params());
    Ok(report)
}

/// The training log a model must be built from to be evaluated on `target`.
pub fn training_log(split: &DatasetSplit, target: Target) -> &InteractionLog {
    match target {
        Target::Validation => &split.train,
        Target::Test => &split.train_and_validation,
    }
}

/// Builds on the training data matching the target and evaluates.
pub fn fit_and_evaluate(split: &DatasetSplit, params: &ModelParams, config: &EvalConfig) -> Result<(ComplementarityModel, EvalReport)> {
    check_protocol(split, config)?;
    let model = build_model(training_log(split, config.target), params)?;
    let report = evaluate(&model, split, config)?;
    Ok((model, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub alphas: Vec<f64>,
    pub lambdas: Vec<u32>,
    pub kappas: Vec<u32>,
    pub objective: Objective,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            alphas: (0..=10).map(|i| i as f64 / 10.0).collect(),
            lambdas: (1..=6).collect(),
            kappas: vec![1, 2, 3, 4, 5, 8],
            objective: Objective::default(),
        }
    }
}

impl GridSpec {
    fn normalized(&self) -> Result<GridSpec> {
        let mut g = self.clone();
        if g.alphas.is_empty() || g.lambdas.is_empty() || g.kappas.is_empty() {
            return Err(Error::invalid("every grid needs at least one value"));
        }
        if g.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::invalid(format!("alpha grid {:?} leaves [0, 1]", g.alphas)));
        }
        if g.lambdas.contains(&0) || g.kappas.contains(&0) {
            return Err(Error::invalid("lambda and kappa grids must be positive"));
        }
        g.alphas.sort_by(f64::total_cmp);
        g.alphas.dedup();
        g.lambdas.sort_unstable();
        g.lambdas.dedup();
        g.kappas.sort_unstable();
        g.kappas.dedup();
        Ok(g)
    }
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub params: ModelParams,
    /// Validation report, or the error that stopped this point.
    pub outcome: std::result::Result<EvalReport, String>,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub best: ModelParams,
    pub best_validation: f64,
    pub points: Vec<GridPoint>,
    /// Winner refit on training plus validation data.
    pub model: ComplementarityModel,
    pub test_report: EvalReport,
}

/// Exhaustive search over (α, λ, κ) on the validation cases, followed by a
/// refit of the winner on training plus validation data and a test run.
///
/// Ties on the objective go to the smaller λ, then κ, then α.
pub fn grid_search(split: &DatasetSplit, base: &ModelParams, grid: &GridSpec, config: &EvalConfig) -> Result<GridOutcome> {
    let grid = grid.normalized()?;
    let mut cutoffs = config.cutoffs.clone();
    if !cutoffs.contains(&grid.objective.cutoff) {
        cutoffs.push(grid.objective.cutoff);
        cutoffs.sort_unstable();
    }
    let valid_config = EvalConfig {
        cutoffs,
        ..config.with_target(Target::Validation)
    };
    check_protocol(split, &valid_config)?;
    base.validate()?;

    let train = &split.train;
    let train_fp = train.fingerprint();
    let directional: HashMap<u32, std::result::Result<DirectionalComponents, String>> = grid
        .kappas
        .iter()
        .map(|&kappa| {
            let opts = ModelParams { kappa, ..*base }.count_options();
            (kappa, DirectionalComponents::from_log(train, &opts).map_err(|e| e.to_string()))
        })
        .collect();

    let mut points = Vec::new();
    let mut best: Option<(ModelParams, f64)> = None;
    for &lambda in &grid.lambdas {
        let w_v = projection_weights(train, lambda, base.pruning).map_err(|e| e.to_string());
        for &kappa in &grid.kappas {
            for &alpha in &grid.alphas {
                let params = base.with_triplet(alpha, lambda, kappa);
                let outcome = (|| {
                    let w_v = w_v.as_ref().map_err(Clone::clone)?;
                    let dir = directional[&kappa].as_ref().map_err(Clone::clone)?;
                    let model = assemble(train, &train_fp, w_v, dir, &params).map_err(|e| e.to_string())?;
                    evaluate(&model, split, &valid_config).map_err(|e| e.to_string())
                })();
                if let Ok(report) = &outcome {
                    let score = report.objective(grid.objective).unwrap_or(0.0);
                    if best.is_none_or(|(_, s)| score > s) {
                        best = Some((params, score));
                    }
                }
                points.push(GridPoint { params, outcome });
            }
        }
    }
    let (best, best_validation) = best.ok_or_else(|| {
        let first = points.iter().find_map(|p| p.outcome.as_ref().err().cloned()).unwrap_or_default();
        Error::Config(format!("every grid point failed; first error: {first}"))
    })?;
    let (model, test_report) = fit_and_evaluate(split, &best, &config.with_target(Target::Test))?;
    Ok(GridOutcome {
        best,
        best_validation,
        points,
        model,
        test_report,
    })
}

/// Grid table: one row per evaluated point, failures included.
pub fn grid_table_tsv(points: &[GridPoint], cutoffs: &[usize]) -> String {
    let mut out = String::from("alpha\tlambda\tkappa");
    for k in cutoffs {
        let _ = write!(out, "\trecall@{k}\tndcg@{k}");
    }
    out.push_str("\tstatus\n");
    for p in points {
        let _ = write!(out, "{}\t{}\t{}", p.params.alpha, p.params.lambda, p.params.kappa);
        match &p.outcome {
            Ok(r) => {
                for &k in cutoffs {
                    let _ = write!(
                        out,
                        "\t{:.6}\t{:.6}",
                        r.metric(Metric::Recall, k).unwrap_or(f64::NAN),
                        r.metric(Metric::Ndcg, k).unwrap_or(f64::NAN)
                    );
                }
                out.push_str("\tok\n");
            }
            Err(e) => {
                for _ in cutoffs {
                    out.push_str("\t\t");
                }
                let _ = writeln!(out, "\terror: {}", e.replace(['\t', '\n'], " "));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum AblationKind {
    /// Every aggregation function of the family.
    Aggregation,
    Lambda(Vec<u32>),
    KCore(Vec<u32>),
    /// Original order versus tie-shuffled logs, one run per seed.
    TieShuffle(Vec<u64>),
}

/// Fixed inputs of an ablation: the unfiltered log and the base configuration.
#[derive(Debug, Clone)]
pub struct AblationSetup<'a> {
    pub log: &'a InteractionLog,
    pub base: ModelParams,
    pub split: SplitSpec,
    pub core_mode: CoreMode,
    pub config: EvalConfig,
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub label: String,
    pub report: EvalReport,
}

/// Filter, split, fit and evaluate one configuration end to end.
pub fn run_protocol(
    log: &InteractionLog,
    params: &ModelParams,
    spec: &SplitSpec,
    core_mode: CoreMode,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let filtered = k_core_filter(log, params.min_core as usize, core_mode)?;
    let s = split(&filtered, spec)?;
    Ok(fit_and_evaluate(&s, params, config)?.1)
}

/// Varies one factor while holding the rest of `setup.base` fixed.
pub fn ablation_sweep(kind: &AblationKind, setup: &AblationSetup<'_>) -> Result<Vec<AblationRow>> {
    let run = |log: &InteractionLog, params: &ModelParams| run_protocol(log, params, &setup.split, setup.core_mode, &setup.config);
    let mut rows = Vec::new();
    match kind {
        AblationKind::Aggregation => {
            for agg in AggregationKind::ALL {
                let params = ModelParams {
                    aggregation: AggregationFunction {
                        kind: agg,
                        scale: setup.base.aggregation.scale,
                    },
                    ..setup.base
                };
                rows.push(AblationRow {
                    label: format!("agg={agg}"),
                    report: run(setup.log, &params)?,
                });
            }
        }
        AblationKind::Lambda(values) => {
            for &lambda in values {
                let params = ModelParams { lambda, ..setup.base };
                rows.push(AblationRow {
                    label: format!("lambda={lambda}"),
                    report: run(setup.log, &params)?,
                });
            }
        }
        AblationKind::KCore(values) => {
            for &min_core in values {
                let params = ModelParams { min_core, ..setup.base };
                rows.push(AblationRow {
                    label: format!("kcore={min_core}"),
                    report: run(setup.log, &params)?,
                });
            }
        }
        AblationKind::TieShuffle(seeds) => {
            rows.push(AblationRow {
                label: "original".into(),
                report: run(setup.log, &setup.base)?,
            });
            let mut shuffled = Vec::new();
            for &seed in seeds {
                let report = run(&shuffle_timestamp_ties(setup.log, seed), &setup.base)?;
                rows.push(AblationRow {
                    label: format!("shuffled seed={seed}"),
                    report: report.clone(),
                });
                shuffled.push(report);
            }
            if !shuffled.is_empty() {
                rows.push(AblationRow {
                    label: "shuffled mean".into(),
                    report: mean_report(&shuffled),
                });
            }
        }
    }
    Ok(rows)
}

fn mean_report(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len() as f64;
    let first = &reports[0];
    let avg = |pick: fn(&EvalReport) -> &Vec<f64>| -> Vec<f64> {
        (0..first.cutoffs.len())
            .map(|i| reports.iter().map(|r| pick(r)[i]).sum::<f64>() / n)
            .collect()
    };
    EvalReport {
        cutoffs: first.cutoffs.clone(),
        recall: avg(|r| &r.recall),
        ndcg: avg(|r| &r.ndcg),
        n_evaluated: (reports.iter().map(|r| r.n_evaluated).sum::<usize>() as f64 / n).round() as usize,
        n_skipped: (reports.iter().map(|r| r.n_skipped).sum::<usize>() as f64 / n).round() as usize,
        params: first.params,
    }
}

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let Some(first) = rows.first() else {
        return String::new();
    };
    let mut out = String::from("setting");
    for k in &first.report.cutoffs {
        let _ = write!(out, "\trecall@{k}\tndcg@{k}");
    }
    out.push_str("\tusers_evaluated\tusers_skipped\n");
    for row in rows {
        out.push_str(&row.label);
        for i in 0..row.report.cutoffs.len() {
            let _ = write!(out, "\t{:.6}\t{:.6}", row.report.recall[i], row.report.ndcg[i]);
        }
        let _ = writeln!(out, "\t{}\t{}", row.report.n_evaluated, row.report.n_skipped);
    }
    out
}

/// NDCG over all held-out cases and over the warm- and cold-query subsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetScores {
    pub all: f64,
    pub warm: f64,
    pub cold: f64,
    pub n_warm: usize,
    pub n_cold: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColdStartRow {
    pub rate: f64,
    pub n_cold_items: usize,
    /// The graph alone: cold queries cannot be served.
    pub plain: SubsetScores,
    /// Cold queries proxied through their most similar warm item.
    pub affinity: SubsetScores,
}

/// Item cold-start replication: a 90/10 per-user split, then for each rate a
/// random share of items is withheld from training and test queries on those
/// items are scored with and without the embedding fallback (NDCG@`cutoff`).
pub fn cold_start_eval(
    log: &InteractionLog,
    params: &ModelParams,
    embeddings: &EmbeddingTable,
    rates: &[f64],
    seed: u64,
    cutoff: usize,
) -> Result<Vec<ColdStartRow>> {
    if cutoff == 0 {
        return Err(Error::invalid("cutoff must be positive"));
    }
    let s = split(log, &SplitSpec::random(0.9, 0.0, 0.1, seed)?)?;
    let cutoffs = [cutoff];
    let mut rows = Vec::new();
    for (n, &rate) in rates.iter().enumerate() {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("cold-start rate {rate} outside [0, 1)")));
        }
        let n_items = s.items.len();
        let n_cold = (rate * n_items as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(n as u64 + 1);
        let cold: HashSet<String> = sample(&mut rng, n_items, n_cold).into_iter().map(|i| s.items[i].clone()).collect();
        let train = s.train.without_items(&cold)?;
        let model = build_model(&train, params)?;

        let is_cold: Vec<bool> = s
            .test
            .iter()
            .map(|c| c.query.is_some_and(|q| cold.contains(s.item_id(q))))
            .collect();
        let subsets = |scores: &[CaseScore]| {
            let pick = |want: bool| {
                let chosen: Vec<&CaseScore> = scores.iter().zip(&is_cold).filter(|(_, &c)| c == want).map(|(s, _)| s).collect();
                (aggregate(chosen.iter().copied(), &cutoffs).ndcg[0], chosen.len())
            };
            let (warm, n_warm) = pick(false);
            let (cold, n_cold) = pick(true);
            SubsetScores {
                all: aggregate(scores, &cutoffs).ndcg[0],
                warm,
                cold,
                n_warm,
                n_cold,
            }
        };
        let plain = score_cases(&model, &s, &s.test, &cutoffs);
        let affinity = score_cases(&WithColdStart::new(&model, embeddings), &s, &s.test, &cutoffs);
        rows.push(ColdStartRow {
            rate,
            n_cold_items: cold.len(),
            plain: subsets(&plain),
            affinity: subsets(&affinity),
        });
    }
    Ok(rows)
}

pub fn cold_start_tsv(rows: &[ColdStartRow], cutoff: usize) -> String {
    let mut out = format!("rate\tcold_items\tmethod\tndcg@{cutoff}\twarm\tcold\twarm_queries\tcold_queries\n");
    for r in rows {
        for (name, s) in [("graph", &r.plain), ("graph+affinity", &r.affinity)] {
            let _ = writeln!(
                out,
                "{}\t{}\t{name}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
                r.rate, r.n_cold_items, s.all, s.warm, s.cold, s.n_warm, s.n_cold
            );
        }
    }
    out
}
