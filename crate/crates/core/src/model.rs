//! The assembled complementarity graph and retrieval on top of it.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dataset::{hex, InteractionLog};
use crate::directionality::{
    combine, lift_category_matrix, AggregationFunction, CountOptions, DeltaMode, DirectionalComponents, TiePolicy,
};
use crate::error::{Error, Result};
use crate::projection::{projection_weights, PruningPolicy};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Weight of the category-level statistics in the directional mix.
    pub alpha: f64,
    /// Random-walk length on the projected item graph.
    pub lambda: u32,
    /// Co-purchase window.
    pub kappa: u32,
    pub aggregation: AggregationFunction,
    pub pruning: PruningPolicy,
    pub min_core: u32,
    pub delta_mode: DeltaMode,
    pub ties: TiePolicy,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            alpha: 1.0,
            lambda: 4,
            kappa: 4,
            aggregation: AggregationFunction::default(),
            pruning: PruningPolicy::default(),
            min_core: 5,
            delta_mode: DeltaMode::Steps,
            ties: TiePolicy::SequenceOrder,
        }
    }
}

impl ModelParams {
    pub fn with_triplet(self, alpha: f64, lambda: u32, kappa: u32) -> Self {
        ModelParams {
            alpha,
            lambda,
            kappa,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.lambda == 0 {
            return Err(Error::invalid("lambda must be at least 1"));
        }
        if self.kappa == 0 {
            return Err(Error::invalid("kappa must be at least 1"));
        }
        if self.min_core == 0 {
            return Err(Error::invalid("min-core must be at least 1"));
        }
        AggregationFunction::new(self.aggregation.kind, self.aggregation.scale)?;
        self.pruning.validate()
    }

    pub fn count_options(&self) -> CountOptions {
        CountOptions {
            kappa: self.kappa,
            aggregation: self.aggregation,
            delta_mode: self.delta_mode,
            ties: self.ties,
        }
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "alpha={} lambda={} kappa={} agg={} agg_scale={} pruning={} min_core={} delta_mode={} ties={}",
            self.alpha,
            self.lambda,
            self.kappa,
            self.aggregation.kind,
            self.aggregation.scale,
            self.pruning,
            self.min_core,
            match self.delta_mode {
                DeltaMode::Steps => "steps",
                DeltaMode::Days => "days",
            },
            match self.ties {
                TiePolicy::SequenceOrder => "order",
                TiePolicy::Bidirectional => "both",
            }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub item: String,
    pub score: f64,
}

/// Directed weighted item graph plus the vocabulary needed to query it.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementarityModel {
    pub(crate) weights: SparseMatrix,
    pub(crate) items: Vec<String>,
    pub(crate) item_lookup: HashMap<String, u32>,
    pub(crate) categories: Vec<String>,
    pub(crate) item_category: Vec<u32>,
    pub(crate) params: ModelParams,
    pub(crate) fingerprint: String,
}

/// Fingerprint binding a training log to the parameters a model was built with.
pub fn build_fingerprint(log: &InteractionLog, params: &ModelParams) -> String {
    fingerprint_with(&log.fingerprint(), params)
}

fn fingerprint_with(log_fingerprint: &str, params: &ModelParams) -> String {
    let mut hasher = Sha256::new();
    hasher.update(log_fingerprint.as_bytes());
    hasher.update(b"\n");
    hasher.update(params.to_string().as_bytes());
    hex(&hasher.finalize())
}

/// Runs the full pipeline on a training log.
pub fn build_model(log: &InteractionLog, params: &ModelParams) -> Result<ComplementarityModel> {
    params.validate()?;
    let w_v = projection_weights(log, params.lambda, params.pruning)?;
    let directional = DirectionalComponents::from_log(log, &params.count_options())?;
    assemble(log, &log.fingerprint(), &w_v, &directional, params)
}

/// Final combination step, reusable when `W_V` or the directional statistics
/// are shared across several parameter settings. `log_fingerprint` is
/// `log.fingerprint()`, passed in so repeated assembly does not rehash the log.
pub fn assemble(
    log: &InteractionLog,
    log_fingerprint: &str,
    w_v: &SparseMatrix,
    directional: &DirectionalComponents,
    params: &ModelParams,
) -> Result<ComplementarityModel> {
    let lifted = lift_category_matrix(&directional.category, log.item_categories(), w_v)?;
    let weights = combine(w_v, &directional.item, &lifted, params.alpha)?;
    Ok(ComplementarityModel::from_parts(
        weights,
        log.items().to_vec(),
        log.categories().to_vec(),
        log.item_categories().to_vec(),
        *params,
        fingerprint_with(log_fingerprint, params),
    ))
}

impl ComplementarityModel {
    pub(crate) fn from_parts(
        weights: SparseMatrix,
        items: Vec<String>,
        categories: Vec<String>,
        item_category: Vec<u32>,
        params: ModelParams,
        fingerprint: String,
    ) -> Self {
        let item_lookup = items.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
        ComplementarityModel {
            weights,
            items,
            item_lookup,
            categories,
            item_category,
            params,
            fingerprint,
        }
    }

    pub fn weights(&self) -> &SparseMatrix {
        &self.weights
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn item_index(&self, id: &str) -> Option<u32> {
        self.item_lookup.get(id).copied()
    }

    pub fn item_id(&self, index: u32) -> &str {
        &self.items[index as usize]
    }

    pub fn category_name(&self, item: u32) -> &str {
        &self.categories[self.item_category[item as usize] as usize]
    }

    /// Top-`k` off-diagonal entries of the query's row, by descending weight
    /// and then ascending item index.
    pub fn recommend_index(&self, query: u32, k: usize) -> Vec<(u32, f64)> {
        let mut row: Vec<(u32, f64)> = self.weights.row(query as usize).iter().filter(|&(c, _)| c != query).collect();
        let order = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if k == 0 {
            return Vec::new();
        }
        if row.len() > k {
            row.select_nth_unstable_by(k - 1, order);
            row.truncate(k);
        }
        row.sort_unstable_by(order);
        row
    }

    pub fn recommend(&self, query: &str, k: usize) -> Result<Vec<Recommendation>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let q = self.item_index(query).ok_or_else(|| Error::UnknownItem(query.to_string()))?;
        Ok(self.named(self.recommend_index(q, k)))
    }

    fn named(&self, ranked: Vec<(u32, f64)>) -> Vec<Recommendation> {
        ranked
            .into_iter()
            .map(|(i, score)| Recommendation {
                item: self.items[i as usize].clone(),
                score,
            })
            .collect()
    }

    /// Recommendations for an item the graph has never seen, borrowed from the
    /// most similar warm item by embedding cosine similarity. The search is
    /// restricted to warm items of `query_category` when that category has any.
    pub fn recommend_cold_start(
        &self,
        query: &str,
        query_category: &str,
        embeddings: &EmbeddingTable,
        k: usize,
    ) -> Result<Vec<Recommendation>> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if let Some(q) = self.item_index(query) {
            return Ok(self.named(self.recommend_index(q, k)));
        }
        let vector = embeddings.get(query).ok_or_else(|| Error::MissingEmbedding(query.to_string()))?;
        let index = ColdStartIndex::new(self, embeddings);
        Ok(match index.proxy_for(vector, query_category) {
            Some(proxy) => self.named(self.recommend_index(proxy, k)),
            None => Vec::new(),
        })
    }
}

/// Precomputed unit vectors of warm items, grouped by category name.
pub struct ColdStartIndex {
    by_category: HashMap<String, Vec<u32>>,
    unit: HashMap<u32, Vec<f64>>,
    all: Vec<u32>,
}

impl ColdStartIndex {
    pub fn new(model: &ComplementarityModel, embeddings: &EmbeddingTable) -> Self {
        let mut by_category: HashMap<String, Vec<u32>> = HashMap::new();
        let mut unit = HashMap::new();
        let mut all = Vec::new();
        for (i, id) in model.items.iter().enumerate() {
            let Some(v) = embeddings.get(id) else { continue };
            let i = i as u32;
            unit.insert(i, normalized(v));
            all.push(i);
            let cat = model.category_name(i);
            if !cat.is_empty() {
                by_category.entry(cat.to_string()).or_default().push(i);
            }
        }
        ColdStartIndex { by_category, unit, all }
    }

    /// Warm item with the highest cosine similarity (lowest index on ties).
    pub fn proxy_for(&self, vector: &[f64], category: &str) -> Option<u32> {
        let q = normalized(vector);
        let pool = self
            .by_category
            .get(category)
            .filter(|p| !category.is_empty() && !p.is_empty())
            .unwrap_or(&self.all);
        let mut best: Option<(u32, f64)> = None;
        for &i in pool {
            let sim: f64 = q.iter().zip(&self.unit[&i]).map(|(a, b)| a * b).sum();
            if best.is_none_or(|(_, s)| sim > s) {
                best = Some((i, sim));
            }
        }
        best.map(|(i, _)| i)
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        // zero vectors have similarity 0 with everything
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| x / norm).collect()
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    normalized(a).iter().zip(normalized(b)).map(|(x, y)| x * y).sum()
}

/// Precomputed item embeddings, one fixed-length vector per item.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(EmbeddingTable {
            dim,
            vectors: HashMap::new(),
        })
    }

    pub fn insert(&mut self, item: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::invalid(format!(
                "embedding of length {} for dimension {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("embedding contains non-finite values"));
        }
        self.vectors.insert(item.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, item: &str) -> Option<&[f64]> {
        self.vectors.get(item).map(Vec::as_slice)
    }

    /// Reads `dim D` followed by lines of `item_id v1 ... vD`.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines().enumerate();
        let parse_err = |line: usize, message: String| Error::Parse {
            line: line as u64 + 1,
            message,
        };
        let (n, header) = lines.next().ok_or(Error::EmptyDataset)?;
        let header = header.map_err(|e| Error::io(path, e))?;
        let dim = match header.split_whitespace().collect::<Vec<_>>()[..] {
            ["dim", d] => d.parse::<usize>().map_err(|e| parse_err(n, e.to_string()))?,
            _ => return Err(parse_err(n, "expected header `dim D`".into())),
        };
        let mut table = EmbeddingTable::new(dim).map_err(|e| parse_err(n, e.to_string()))?;
        for (n, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut fields = line.split_whitespace();
            let Some(item) = fields.next() else { continue };
            let vector = fields
                .map(|f| f.parse::<f64>().map_err(|e| parse_err(n, format!("{f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            table.insert(item, vector).map_err(|e| parse_err(n, e.to_string()))?;
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interaction;
    use crate::directionality::AggregationKind;
    use crate::projection::{item_walk_matrix, PruningPolicy};

    fn log(records: &[(&str, &str, u64, &str)]) -> InteractionLog {
        InteractionLog::from_interactions(records.iter().map(|&(u, i, t, c)| Interaction::new(u, i, t, c))).unwrap()
    }

    fn exact(alpha: f64, lambda: u32, kappa: u32) -> ModelParams {
        ModelParams {
            pruning: PruningPolicy::None,
            ..ModelParams::default().with_triplet(alpha, lambda, kappa)
        }
    }

    #[test]
    fn direction_follows_purchase_order() {
        let l = log(&[("u", "a", 1, ""), ("u", "b", 2, ""), ("v", "a", 1, ""), ("v", "b", 2, "")]);
        let m = build_model(&l, &exact(0.0, 2, 2)).unwrap();
        assert!(m.weights().get(0, 1) > 0.0);
        assert_eq!(m.weights().get(1, 0), 0.0);
    }

    #[test]
    fn single_pair_closed_form() {
        // one user [a, b]: Q = [[1/4, 1/4], [1/4, 1/4]], P_VV = 2Q, C̃_I[a][b] = 1
        let l = log(&[("u", "a", 1, ""), ("u", "b", 2, "")]);
        let m = build_model(&l, &exact(0.0, 1, 1)).unwrap();
        let p_vv = item_walk_matrix(&l).unwrap();
        assert_eq!(p_vv.get(0, 1), 0.5);
        assert_eq!(m.weights().get(0, 1), p_vv.get(0, 1));
        assert_eq!(m.weights().nnz(), 1);
    }

    fn toy_model() -> ComplementarityModel {
        let w = SparseMatrix::from_rows(
            4,
            vec![vec![(0, 0.9), (1, 0.5), (2, 0.2), (3, 0.2)], vec![(0, 0.1)], vec![], vec![(1, 0.3)]],
        )
        .unwrap();
        ComplementarityModel::from_parts(
            w,
            ["a", "b", "c", "d"].map(String::from).to_vec(),
            vec![String::new(), "X".into(), "Y".into()],
            vec![1, 1, 2, 2],
            ModelParams::default(),
            "test".into(),
        )
    }

    #[test]
    fn recommend_ranks_and_excludes_query() {
        let m = toy_model();
        let top1 = m.recommend("a", 1).unwrap();
        assert_eq!(
            top1,
            vec![Recommendation {
                item: "b".into(),
                score: 0.5
            }]
        );
        let all = m.recommend("a", 10).unwrap();
        assert_eq!(all.iter().map(|r| r.item.as_str()).collect::<Vec<_>>(), ["b", "c", "d"]);
        assert!(matches!(m.recommend("zz", 3), Err(Error::UnknownItem(_))));
        assert!(m.recommend("c", 3).unwrap().is_empty());
    }

    #[test]
    fn cold_start_uses_nearest_warm_item() {
        let m = toy_model();
        let mut emb = EmbeddingTable::new(2).unwrap();
        emb.insert("a", vec![1.0, 0.0]).unwrap();
        emb.insert("b", vec![0.0, 1.0]).unwrap();
        emb.insert("d", vec![0.7, 0.7]).unwrap();
        emb.insert("new", vec![1.0, 0.0]).unwrap();
        // identical to a's vector
        assert_eq!(m.recommend_cold_start("new", "X", &emb, 2).unwrap(), m.recommend("a", 2).unwrap());
        // category Y restricts the search to d
        assert_eq!(m.recommend_cold_start("new", "Y", &emb, 2).unwrap(), m.recommend("d", 2).unwrap());
        // no warm items in Z: global fallback
        assert_eq!(m.recommend_cold_start("new", "Z", &emb, 2).unwrap(), m.recommend("a", 2).unwrap());
        assert!(matches!(
            m.recommend_cold_start("ghost", "X", &emb, 2),
            Err(Error::MissingEmbedding(_))
        ));
    }

    #[test]
    fn cosine_handles_zero_vectors() {
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert!((cosine_similarity(&[2.0, 0.0], &[3.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn embedding_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("emb.txt");
        std::fs::write(&p, "dim 3\nx 1 2 3\ny 0 0 1\n").unwrap();
        let t = EmbeddingTable::load(&p).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("x"), Some(&[1.0, 2.0, 3.0][..]));
        std::fs::write(&p, "dim 3\nx 1 2\n").unwrap();
        assert!(matches!(EmbeddingTable::load(&p), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "dim 1\nx NaN\n").unwrap();
        assert!(EmbeddingTable::load(&p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::default().validate().is_ok());
        assert!(ModelParams::default().with_triplet(1.2, 4, 4).validate().is_err());
        assert!(ModelParams::default().with_triplet(0.5, 0, 4).validate().is_err());
        let p = ModelParams {
            aggregation: AggregationFunction {
                kind: AggregationKind::GaussianDecay,
                scale: -1.0,
            },
            ..ModelParams::default()
        };
        assert!(p.validate().is_err());
    }
}
