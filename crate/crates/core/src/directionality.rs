//! Directed co-purchase statistics and their combination with the projection.
//!
//! For every ordered pair of purchases inside a user's history that lie at
//! most κ steps apart, the later item (or its category) receives a weight that
//! decays with the distance δ. Row-normalized item and category counts are
//! mixed with α and multiplied entrywise into the projection weights.

use std::fmt;
use std::str::FromStr;

use crate::dataset::InteractionLog;
use crate::error::{Error, Result};
use crate::sparse::{Row, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregationKind {
    /// `1/δ`
    InverseDelta,
    /// `1/δ²`
    InverseDeltaSquared,
    /// `exp(-(δ-1)/s)`
    ExponentialDecay,
    /// `1`
    Constant,
    /// `(κ+1-δ)/κ`
    LinearDecay,
    /// `1/log2(δ+1)`
    InverseLogDelta,
    /// `exp(-(δ-1)²/(2s²))`
    GaussianDecay,
}

impl AggregationKind {
    pub const ALL: [AggregationKind; 7] = [
        AggregationKind::InverseDelta,
        AggregationKind::InverseDeltaSquared,
        AggregationKind::ExponentialDecay,
        AggregationKind::Constant,
        AggregationKind::LinearDecay,
        AggregationKind::InverseLogDelta,
        AggregationKind::GaussianDecay,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            AggregationKind::InverseDelta => "inv",
            AggregationKind::InverseDeltaSquared => "inv2",
            AggregationKind::ExponentialDecay => "exp",
            AggregationKind::Constant => "const",
            AggregationKind::LinearDecay => "linear",
            AggregationKind::InverseLogDelta => "invlog",
            AggregationKind::GaussianDecay => "gauss",
        }
    }

    pub(crate) fn code(self) -> u8 {
        AggregationKind::ALL.iter().position(|&k| k == self).unwrap() as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        AggregationKind::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for AggregationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for AggregationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AggregationKind::ALL
            .into_iter()
            .find(|k| k.short_name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown aggregation {s:?}")))
    }
}

/// Weight given to a later purchase `δ` steps after the query purchase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationFunction {
    pub kind: AggregationKind,
    /// Decay scale for the exponential and Gaussian kinds.
    pub scale: f64,
}

impl Default for AggregationFunction {
    fn default() -> Self {
        AggregationFunction {
            kind: AggregationKind::InverseDelta,
            scale: 1.0,
        }
    }
}

impl AggregationFunction {
    pub fn new(kind: AggregationKind, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("aggregation scale {scale} must be positive")));
        }
        Ok(AggregationFunction { kind, scale })
    }

    pub fn of(kind: AggregationKind) -> Self {
        AggregationFunction { kind, scale: 1.0 }
    }

    /// Weight for distance `delta` (>= 1) under window `kappa`.
    pub fn weight(&self, delta: u64, kappa: u64) -> f64 {
        let d = delta.max(1) as f64;
        match self.kind {
            AggregationKind::InverseDelta => 1.0 / d,
            AggregationKind::InverseDeltaSquared => 1.0 / (d * d),
            AggregationKind::ExponentialDecay => (-(d - 1.0) / self.scale).exp(),
            AggregationKind::Constant => 1.0,
            AggregationKind::LinearDecay => {
                let k = kappa.max(delta).max(1) as f64;
                (k + 1.0 - d) / k
            }
            AggregationKind::InverseLogDelta => 1.0 / (d + 1.0).log2(),
            AggregationKind::GaussianDecay => (-(d - 1.0).powi(2) / (2.0 * self.scale * self.scale)).exp(),
        }
    }
}

/// How the distance between two purchases is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaMode {
    /// Positions in the user's sequence.
    #[default]
    Steps,
    /// Elapsed whole days, rounded up, at least 1.
    Days,
}

/// Treatment of purchases that share a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TiePolicy {
    /// Use the current sequence order like any other pair.
    #[default]
    SequenceOrder,
    /// Count the pair in both directions at distance 1, regardless of window.
    Bidirectional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountOptions {
    pub kappa: u32,
    pub aggregation: AggregationFunction,
    pub delta_mode: DeltaMode,
    pub ties: TiePolicy,
}

impl CountOptions {
    pub fn steps(kappa: u32, aggregation: AggregationFunction) -> Self {
        CountOptions {
            kappa,
            aggregation,
            delta_mode: DeltaMode::Steps,
            ties: TiePolicy::SequenceOrder,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.kappa == 0 {
            return Err(Error::invalid("window kappa must be at least 1"));
        }
        Ok(())
    }
}

const SECONDS_PER_DAY: u64 = 86_400;

/// Streams every in-window ordered pair of each user's sequence, calling
/// `emit(earlier_item, later_item, weight)`.
fn for_each_pair(log: &InteractionLog, opts: &CountOptions, mut emit: impl FnMut(u32, u32, f64)) {
    let kappa = opts.kappa as u64;
    let w = |delta: u64| opts.aggregation.weight(delta, kappa);
    for seq in log.sequences() {
        for (p, first) in seq.iter().enumerate() {
            for (offset, later) in seq[p + 1..].iter().enumerate() {
                let tied = later.timestamp == first.timestamp;
                if tied && opts.ties == TiePolicy::Bidirectional {
                    emit(first.item, later.item, w(1));
                    emit(later.item, first.item, w(1));
                    continue;
                }
                let delta = match opts.delta_mode {
                    DeltaMode::Steps => offset as u64 + 1,
                    DeltaMode::Days => (later.timestamp - first.timestamp).div_ceil(SECONDS_PER_DAY).max(1),
                };
                if delta > kappa {
                    break;
                }
                emit(first.item, later.item, w(delta));
            }
        }
    }
}

/// Item-level directed co-counts `C_I` (|V|×|V|). Pairs of the same item are skipped.
pub fn item_co_counts(log: &InteractionLog, opts: &CountOptions) -> Result<SparseMatrix> {
    opts.validate()?;
    let mut triplets = Vec::new();
    for_each_pair(log, opts, |i, j, w| {
        if i != j {
            triplets.push((i, j, w));
        }
    });
    SparseMatrix::from_triplets(log.n_items(), log.n_items(), triplets)
}

/// Category-level directed co-counts `C_C` (|Y|×|Y|), built like
/// [`item_co_counts`] but over item categories. Distinct items sharing a
/// category contribute to the diagonal; repeats of the same item do not.
pub fn category_co_counts(log: &InteractionLog, opts: &CountOptions) -> Result<SparseMatrix> {
    opts.validate()?;
    let cats = log.item_categories();
    let mut triplets = Vec::new();
    for_each_pair(log, opts, |i, j, w| {
        if i != j {
            triplets.push((cats[i as usize], cats[j as usize], w));
        }
    });
    SparseMatrix::from_triplets(log.n_categories(), log.n_categories(), triplets)
}

/// Divides each non-empty row by its sum. Empty rows stay empty.
pub fn row_normalize(m: &SparseMatrix) -> SparseMatrix {
    m.map_rows(|_, row| {
        let total = row.sum();
        row.iter().map(|(c, v)| (c, v / total)).filter(|&(_, v)| v > 0.0).collect()
    })
}

/// Evaluates the category matrix at item resolution over the sparsity
/// pattern of `pattern`: entry `(i, j)` becomes `C[cat(i)][cat(j)]`.
pub fn lift_category_matrix(category_norm: &SparseMatrix, item_category: &[u32], pattern: &SparseMatrix) -> Result<SparseMatrix> {
    if item_category.len() != pattern.n_rows() || !pattern.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{} item categories for a {}x{} pattern",
            item_category.len(),
            pattern.n_rows(),
            pattern.n_cols()
        )));
    }
    if let Some(&bad) = item_category.iter().find(|&&c| c as usize >= category_norm.n_rows()) {
        return Err(Error::DimensionMismatch(format!(
            "category {bad} outside {}x{} category matrix",
            category_norm.n_rows(),
            category_norm.n_cols()
        )));
    }
    Ok(pattern.map_rows(|i, row| {
        let from = category_norm.row(item_category[i] as usize);
        if from.is_empty() {
            return Vec::new();
        }
        row.iter()
            .filter_map(|(j, _)| from.get(item_category[j as usize]).map(|v| (j, v)))
            .collect()
    }))
}

/// `W = W_V ⊙ ((1-α)·C̃_I + α·C̃_C)` restricted to entries where both factors are non-zero.
pub fn combine(w_v: &SparseMatrix, item_norm: &SparseMatrix, category_lifted: &SparseMatrix, alpha: f64) -> Result<SparseMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::invalid(format!("alpha {alpha} outside [0, 1]")));
    }
    let n = w_v.n_rows();
    for (name, m) in [("W_V", w_v), ("item", item_norm), ("category", category_lifted)] {
        if m.n_rows() != n || m.n_cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{name} matrix is {}x{}, expected {n}x{n}",
                m.n_rows(),
                m.n_cols()
            )));
        }
    }
    Ok(w_v.map_rows(|r, row| {
        let mut item = Cursor::new(item_norm.row(r));
        let mut cat = Cursor::new(category_lifted.row(r));
        row.iter()
            .filter_map(|(c, w)| {
                let mix = (1.0 - alpha) * item.seek(c) + alpha * cat.seek(c);
                let v = w * mix;
                (v > 0.0).then_some((c, v))
            })
            .collect()
    }))
}

/// Forward-only lookup into a sorted row for ascending column queries.
struct Cursor<'a> {
    row: Row<'a>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(row: Row<'a>) -> Self {
        Cursor { row, pos: 0 }
    }

    fn seek(&mut self, col: u32) -> f64 {
        while self.pos < self.row.len() && self.row.indices[self.pos] < col {
            self.pos += 1;
        }
        match self.row.indices.get(self.pos) {
            Some(&c) if c == col => self.row.values[self.pos],
            _ => 0.0,
        }
    }
}

/// Row-normalized directional statistics for one window configuration.
#[derive(Debug, Clone)]
pub struct DirectionalComponents {
    pub item: SparseMatrix,
    pub category: SparseMatrix,
}

impl DirectionalComponents {
    pub fn from_log(log: &InteractionLog, opts: &CountOptions) -> Result<Self> {
        Ok(DirectionalComponents {
            item: row_normalize(&item_co_counts(log, opts)?),
            category: row_normalize(&category_co_counts(log, opts)?),
        })
    }
}
