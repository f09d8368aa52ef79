//! Interaction logs: ingestion, n-core filtering, timestamp-tie shuffling and
//! train/validation/test splitting.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Category index reserved for items without a category label.
pub const UNKNOWN_CATEGORY: u32 = 0;

/// One purchase record as it appears in an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: u64,
    pub category: String,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: u64, category: impl Into<String>) -> Self {
        Interaction {
            user: user.into(),
            item: item.into(),
            timestamp,
            category: category.into(),
        }
    }
}

/// A purchase inside a user's sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub item: u32,
    pub timestamp: u64,
}

/// Per-user purchase sequences over densely indexed users, items and categories.
///
/// Indices are assigned in order of first appearance. Each user's events are
/// sorted by timestamp; equal timestamps keep their input order.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionLog {
    users: Vec<String>,
    items: Vec<String>,
    categories: Vec<String>,
    item_category: Vec<u32>,
    sequences: Vec<Vec<Event>>,
    item_lookup: HashMap<String, u32>,
}

impl InteractionLog {
    pub fn from_interactions(records: impl IntoIterator<Item = Interaction>) -> Result<Self> {
        let mut users = Vec::new();
        let mut user_lookup: HashMap<String, u32> = HashMap::new();
        let mut items = Vec::new();
        let mut item_lookup: HashMap<String, u32> = HashMap::new();
        let mut categories = vec![String::new()];
        let mut category_lookup: HashMap<String, u32> = HashMap::new();
        let mut item_category: Vec<u32> = Vec::new();
        let mut sequences: Vec<Vec<Event>> = Vec::new();

        for (n, rec) in records.into_iter().enumerate() {
            if rec.user.is_empty() || rec.item.is_empty() {
                return Err(Error::Parse {
                    line: n as u64 + 1,
                    message: "empty user or item identifier".into(),
                });
            }
            let u = *user_lookup.entry(rec.user.clone()).or_insert_with(|| {
                users.push(rec.user.clone());
                sequences.push(Vec::new());
                (users.len() - 1) as u32
            });
            let i = *item_lookup.entry(rec.item.clone()).or_insert_with(|| {
                items.push(rec.item.clone());
                item_category.push(UNKNOWN_CATEGORY);
                (items.len() - 1) as u32
            });
            if item_category[i as usize] == UNKNOWN_CATEGORY && !rec.category.is_empty() {
                let c = *category_lookup.entry(rec.category.clone()).or_insert_with(|| {
                    categories.push(rec.category.clone());
                    (categories.len() - 1) as u32
                });
                item_category[i as usize] = c;
            }
            sequences[u as usize].push(Event {
                item: i,
                timestamp: rec.timestamp,
            });
        }
        if users.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for seq in &mut sequences {
            seq.sort_by_key(|e| e.timestamp);
        }
        Ok(InteractionLog {
            users,
            items,
            categories,
            item_category,
            sequences,
            item_lookup,
        })
    }

    /// Rebuilds a log over a subset of this log's events, dropping users and
    /// items left without events and re-indexing the survivors densely while
    /// keeping their relative order. `sequences` is indexed by this log's users.
    pub(crate) fn restrict(&self, sequences: Vec<Vec<Event>>) -> Result<Self> {
        debug_assert_eq!(sequences.len(), self.users.len());
        let mut item_map = vec![u32::MAX; self.items.len()];
        for seq in &sequences {
            for e in seq {
                item_map[e.item as usize] = 0;
            }
        }
        let mut items = Vec::new();
        let mut cat_map = vec![u32::MAX; self.categories.len()];
        cat_map[UNKNOWN_CATEGORY as usize] = UNKNOWN_CATEGORY;
        let mut used_cat = vec![false; self.categories.len()];
        for (old, slot) in item_map.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = items.len() as u32;
                items.push(old);
                used_cat[self.item_category[old] as usize] = true;
            }
        }
        let mut categories = vec![String::new()];
        for (old, used) in used_cat.iter().enumerate().skip(1) {
            if *used {
                cat_map[old] = categories.len() as u32;
                categories.push(self.categories[old].clone());
            }
        }
        let item_category = items.iter().map(|&old| cat_map[self.item_category[old] as usize]).collect();
        let mut users = Vec::new();
        let mut new_sequences = Vec::new();
        for (u, seq) in sequences.into_iter().enumerate() {
            if seq.is_empty() {
                continue;
            }
            users.push(self.users[u].clone());
            new_sequences.push(
                seq.into_iter()
                    .map(|e| Event {
                        item: item_map[e.item as usize],
                        timestamp: e.timestamp,
                    })
                    .collect(),
            );
        }
        if users.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let items: Vec<String> = items.into_iter().map(|old| self.items[old].clone()).collect();
        let item_lookup = items.iter().enumerate().map(|(i, id)| (id.clone(), i as u32)).collect();
        Ok(InteractionLog {
            users,
            items,
            categories,
            item_category,
            sequences: new_sequences,
            item_lookup,
        })
    }

    /// Drops every event of the given items (and users left empty).
    pub fn without_items(&self, items: &std::collections::HashSet<String>) -> Result<Self> {
        let drop: Vec<bool> = self.items.iter().map(|id| items.contains(id)).collect();
        let sequences = self
            .sequences
            .iter()
            .map(|seq| seq.iter().copied().filter(|e| !drop[e.item as usize]).collect())
            .collect();
        self.restrict(sequences)
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    /// Number of categories including the reserved "unknown" slot.
    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn n_events(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn item_categories(&self) -> &[u32] {
        &self.item_category
    }

    pub fn sequences(&self) -> &[Vec<Event>] {
        &self.sequences
    }

    pub fn sequence(&self, user: usize) -> &[Event] {
        &self.sequences[user]
    }

    pub fn item_index(&self, id: &str) -> Option<u32> {
        self.item_lookup.get(id).copied()
    }

    pub fn item_id(&self, index: u32) -> &str {
        &self.items[index as usize]
    }

    pub fn category_of(&self, item: u32) -> u32 {
        self.item_category[item as usize]
    }

    pub fn to_interactions(&self) -> Vec<Interaction> {
        self.sequences
            .iter()
            .enumerate()
            .flat_map(|(u, seq)| {
                seq.iter().map(move |e| Interaction {
                    user: self.users[u].clone(),
                    item: self.items[e.item as usize].clone(),
                    timestamp: e.timestamp,
                    category: self.categories[self.item_category[e.item as usize] as usize].clone(),
                })
            })
            .collect()
    }

    /// SHA-256 over the canonical event listing, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        self.feed_hash(&mut hasher);
        hex(&hasher.finalize())
    }

    pub(crate) fn feed_hash(&self, hasher: &mut Sha256) {
        let mut line = String::new();
        for (u, seq) in self.sequences.iter().enumerate() {
            for e in seq {
                line.clear();
                let cat = self.item_category[e.item as usize] as usize;
                let _ = writeln!(
                    line,
                    "{}\t{}\t{}\t{}",
                    self.users[u], self.items[e.item as usize], e.timestamp, self.categories[cat]
                );
                hasher.update(line.as_bytes());
            }
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Tsv,
    Jsonl,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(InputFormat::Csv),
            "tsv" | "tab" => Some(InputFormat::Tsv),
            "jsonl" | "json" | "ndjson" => Some(InputFormat::Jsonl),
            _ => None,
        }
    }
}

/// Reads an interaction file. Delimited files need a header naming `user`,
/// `item` and `timestamp` columns, plus an optional `category` column.
/// JSONL records use the same keys (the Amazon review keys `reviewerID`,
/// `asin` and `unixReviewTime` are accepted as aliases).
pub fn load_interactions(path: &Path, format: InputFormat) -> Result<InteractionLog> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let records = match format {
        InputFormat::Csv => read_delimited(file, b',')?,
        InputFormat::Tsv => read_delimited(file, b'\t')?,
        InputFormat::Jsonl => read_jsonl(BufReader::new(file))?,
    };
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    InteractionLog::from_interactions(records)
}

fn read_delimited(reader: impl std::io::Read, delimiter: u8) -> Result<Vec<Interaction>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(1, e))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Ok(Vec::new());
    }
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let missing = |name: &str| Error::Parse {
        line: 1,
        message: format!("header lacks a `{name}` column"),
    };
    let user_col = column("user").ok_or_else(|| missing("user"))?;
    let item_col = column("item").ok_or_else(|| missing("item"))?;
    let ts_col = column("timestamp").ok_or_else(|| missing("timestamp"))?;
    let cat_col = column("category");

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_error(line, e)
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |col: usize, name: &str| {
            rec.get(col).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing `{name}` field"),
            })
        };
        let user = field(user_col, "user")?;
        let item = field(item_col, "item")?;
        let ts_raw = field(ts_col, "timestamp")?;
        let timestamp = ts_raw.parse::<u64>().map_err(|_| Error::Parse {
            line,
            message: format!("timestamp {ts_raw:?} is not a non-negative integer"),
        })?;
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty user or item identifier".into(),
            });
        }
        let category = cat_col.and_then(|c| rec.get(c)).unwrap_or("");
        out.push(Interaction::new(user, item, timestamp, category));
    }
    Ok(out)
}

fn csv_error(line: u64, e: csv::Error) -> Error {
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn read_jsonl(reader: impl BufRead) -> Result<Vec<Interaction>> {
    use serde_json::Value;

    fn text(v: &Value) -> Option<String> {
        match v {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        }
    }

    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n as u64 + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: line_no, message };
        let value: Value = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| bad("record is not an object".into()))?;
        let pick = |keys: &[&str]| keys.iter().find_map(|k| obj.get(*k));
        let user = pick(&["user", "reviewerID"])
            .and_then(text)
            .ok_or_else(|| bad("missing `user`".into()))?;
        let item = pick(&["item", "asin"]).and_then(text).ok_or_else(|| bad("missing `item`".into()))?;
        let timestamp = pick(&["timestamp", "unixReviewTime"])
            .ok_or_else(|| bad("missing `timestamp`".into()))?
            .as_u64()
            .ok_or_else(|| bad("timestamp is not a non-negative integer".into()))?;
        let category = pick(&["category"]).and_then(text).unwrap_or_default();
        if user.is_empty() || item.is_empty() {
            return Err(bad("empty user or item identifier".into()));
        }
        out.push(Interaction::new(user, item, timestamp, category));
    }
    Ok(out)
}

/// Writes the log as a TSV interaction file (`user item timestamp category`).
pub fn write_interactions(log: &InteractionLog, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "user\titem\ttimestamp\tcategory").map_err(io)?;
    for rec in log.to_interactions() {
        writeln!(w, "{}\t{}\t{}\t{}", rec.user, rec.item, rec.timestamp, rec.category).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoreMode {
    /// Repeat until every surviving user and item meets the threshold.
    #[default]
    Iterative,
    /// One removal round using the degrees of the input.
    SinglePass,
}

/// Keeps only users and items with at least `n` interactions (repeat
/// purchases count individually).
pub fn k_core_filter(log: &InteractionLog, n: usize, mode: CoreMode) -> Result<InteractionLog> {
    if n == 0 {
        return Err(Error::invalid("n-core threshold must be at least 1"));
    }
    let mut sequences: Vec<Vec<Event>> = log.sequences.clone();
    loop {
        let mut item_degree = vec![0usize; log.n_items()];
        for seq in &sequences {
            for e in seq {
                item_degree[e.item as usize] += 1;
            }
        }
        let mut changed = false;
        for seq in &mut sequences {
            let before = seq.len();
            if before < n {
                seq.clear();
            } else {
                seq.retain(|e| item_degree[e.item as usize] >= n);
            }
            changed |= seq.len() != before;
        }
        if !changed || mode == CoreMode::SinglePass {
            break;
        }
    }
    log.restrict(sequences)
}

fn user_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

/// Randomly permutes every maximal run of equal-timestamp events inside each
/// user's sequence. Deterministic for a given seed.
pub fn shuffle_timestamp_ties(log: &InteractionLog, seed: u64) -> InteractionLog {
    let mut out = log.clone();
    for (u, seq) in out.sequences.iter_mut().enumerate() {
        let mut rng = user_rng(seed, u);
        let mut start = 0;
        while start < seq.len() {
            let mut end = start + 1;
            while end < seq.len() && seq[end].timestamp == seq[start].timestamp {
                end += 1;
            }
            if end - start > 1 {
                seq[start..end].shuffle(&mut rng);
            }
            start = end;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    SequentialLeaveOneOut,
    RandomPerUser,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn sequential() -> Self {
        SplitSpec {
            mode: SplitMode::SequentialLeaveOneOut,
            train_fraction: 0.0,
            validation_fraction: 0.0,
            test_fraction: 0.0,
            seed: 0,
        }
    }

    /// Per-user random partition. The validation fraction may be zero.
    pub fn random(train: f64, validation: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = SplitSpec {
            mode: SplitMode::RandomPerUser,
            train_fraction: train,
            validation_fraction: validation,
            test_fraction: test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The 80/10/10 split used for graph-style evaluation.
    pub fn graph(seed: u64) -> Self {
        SplitSpec {
            mode: SplitMode::RandomPerUser,
            train_fraction: 0.8,
            validation_fraction: 0.1,
            test_fraction: 0.1,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.mode == SplitMode::SequentialLeaveOneOut {
            return Ok(());
        }
        let fr = [self.train_fraction, self.validation_fraction, self.test_fraction];
        if fr.iter().any(|f| !f.is_finite() || *f < 0.0) || self.train_fraction <= 0.0 || self.test_fraction <= 0.0 {
            return Err(Error::invalid(format!(
                "split fractions {fr:?} must be non-negative with train, test > 0"
            )));
        }
        if (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split fractions {fr:?} do not sum to 1")));
        }
        Ok(())
    }

    /// Part sizes `(train, validation, test)` for a user with `n` events.
    pub fn part_sizes(&self, n: usize) -> (usize, usize, usize) {
        match self.mode {
            SplitMode::SequentialLeaveOneOut if n < 3 => (n, 0, 0),
            SplitMode::SequentialLeaveOneOut => (n - 2, 1, 1),
            SplitMode::RandomPerUser => {
                let train = ((self.train_fraction * n as f64) + 1e-9).floor() as usize;
                let rest = n - train.min(n);
                let held = self.validation_fraction + self.test_fraction;
                let valid = ((self.validation_fraction / held * rest as f64) + 1e-9).floor() as usize;
                (train.min(n), valid, rest - valid)
            }
        }
    }
}

/// A query and the items that count as hits for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalCase {
    /// Index into [`DatasetSplit::users`].
    pub user: u32,
    /// Index into [`DatasetSplit::items`]; `None` when nothing precedes the targets.
    pub query: Option<u32>,
    pub targets: Vec<u32>,
}

/// Training logs plus held-out evaluation cases. Item and user indices in the
/// cases refer to the vocabulary of the log the split was made from.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub mode: SplitMode,
    pub train: InteractionLog,
    /// Training events plus the validation events, for the final refit.
    pub train_and_validation: InteractionLog,
    pub validation: Vec<EvalCase>,
    pub test: Vec<EvalCase>,
    /// Users with too few events to hold out targets; all their events stay in training.
    pub skipped_users: usize,
    pub users: Vec<String>,
    pub items: Vec<String>,
    pub categories: Vec<String>,
    pub item_categories: Vec<u32>,
}

impl DatasetSplit {
    pub fn item_id(&self, index: u32) -> &str {
        &self.items[index as usize]
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Part {
    Train,
    Validation,
    Test,
}

pub fn split(log: &InteractionLog, spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let n_users = log.n_users();
    let mut train = vec![Vec::new(); n_users];
    let mut train_valid = vec![Vec::new(); n_users];
    let mut validation = Vec::new();
    let mut test = Vec::new();
    let mut skipped = 0;

    for (u, seq) in log.sequences.iter().enumerate() {
        let n = seq.len();
        let parts: Vec<Part> = match spec.mode {
            SplitMode::SequentialLeaveOneOut => {
                if n < 3 {
                    None
                } else {
                    let mut p = vec![Part::Train; n];
                    p[n - 2] = Part::Validation;
                    p[n - 1] = Part::Test;
                    Some(p)
                }
            }
            SplitMode::RandomPerUser => {
                let (t, v, _) = spec.part_sizes(n);
                if t == 0 || t + v >= n {
                    None
                } else {
                    let mut order: Vec<usize> = (0..n).collect();
                    order.shuffle(&mut user_rng(spec.seed, u));
                    let mut p = vec![Part::Test; n];
                    for &pos in &order[..t] {
                        p[pos] = Part::Train;
                    }
                    for &pos in &order[t..t + v] {
                        p[pos] = Part::Validation;
                    }
                    Some(p)
                }
            }
        }
        .unwrap_or_else(|| {
            skipped += 1;
            vec![Part::Train; n]
        });

        for (e, part) in seq.iter().zip(&parts) {
            match part {
                Part::Train => {
                    train[u].push(*e);
                    train_valid[u].push(*e);
                }
                Part::Validation => train_valid[u].push(*e),
                Part::Test => {}
            }
        }
        for (wanted, cases) in [(Part::Validation, &mut validation), (Part::Test, &mut test)] {
            let positions: Vec<usize> = (0..n).filter(|&p| parts[p] == wanted).collect();
            if let Some(&first) = positions.first() {
                cases.push(EvalCase {
                    user: u as u32,
                    query: first.checked_sub(1).map(|p| seq[p].item),
                    targets: positions.iter().map(|&p| seq[p].item).collect(),
                });
            }
        }
    }

    Ok(DatasetSplit {
        mode: spec.mode,
        train: log.restrict(train)?,
        train_and_validation: log.restrict(train_valid)?,
        validation,
        test,
        skipped_users: skipped,
        users: log.users.clone(),
        items: log.items.clone(),
        categories: log.categories.clone(),
        item_categories: log.item_category.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn log_of(records: &[(&str, &str, u64)]) -> InteractionLog {
        InteractionLog::from_interactions(records.iter().map(|&(u, i, t)| Interaction::new(u, i, t, ""))).unwrap()
    }

    fn seq_ids(log: &InteractionLog, user: usize) -> Vec<&str> {
        log.sequence(user).iter().map(|e| log.item_id(e.item)).collect()
    }

    #[test]
    fn tsv_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.tsv");
        std::fs::write(&path, "user\titem\ttimestamp\nu1\ti1\t100\nu1\ti2\t200\nu2\ti1\t150\n").unwrap();
        let log = load_interactions(&path, InputFormat::Tsv).unwrap();
        assert_eq!(log.n_users(), 2);
        assert_eq!(log.n_items(), 2);
        assert_eq!(seq_ids(&log, 0), ["i1", "i2"]);
        assert_eq!(log.category_of(0), UNKNOWN_CATEGORY);
    }

    #[test]
    fn bad_timestamp_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let mut text = String::from("user,item,timestamp,category\n");
        for t in 0..5 {
            text.push_str(&format!("u{t},i{t},{t},c\n"));
        }
        text.push_str("u9,i9,yesterday,c\n");
        std::fs::write(&path, text).unwrap();
        match load_interactions(&path, InputFormat::Csv) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn jsonl_with_amazon_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        std::fs::write(
            &path,
            "{\"reviewerID\":\"A1\",\"asin\":\"B1\",\"unixReviewTime\":5}\n\n{\"user\":\"A1\",\"item\":\"B2\",\"timestamp\":3,\"category\":\"X\"}\n",
        )
        .unwrap();
        let log = load_interactions(&path, InputFormat::Jsonl).unwrap();
        assert_eq!(seq_ids(&log, 0), ["B2", "B1"]);
        assert_eq!(log.categories()[log.category_of(1) as usize], "X");

        std::fs::write(&path, "{\"user\":\"A1\",\"item\":\"B2\",\"timestamp\":-3}\n").unwrap();
        assert!(matches!(
            load_interactions(&path, InputFormat::Jsonl),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_interactions(&path, InputFormat::Csv), Err(Error::EmptyDataset)));
        std::fs::write(&path, "user,item,timestamp\n").unwrap();
        assert!(matches!(load_interactions(&path, InputFormat::Csv), Err(Error::EmptyDataset)));
    }

    #[test]
    fn ties_keep_file_order() {
        let log = log_of(&[("u", "c", 5), ("u", "a", 5), ("u", "b", 1)]);
        assert_eq!(seq_ids(&log, 0), ["b", "c", "a"]);
    }

    #[test]
    fn k_core_one_is_noop() {
        let log = log_of(&[("u1", "a", 1), ("u2", "b", 1), ("u2", "a", 2)]);
        let out = k_core_filter(&log, 1, CoreMode::Iterative).unwrap();
        assert_eq!(out, log);
    }

    #[test]
    fn k_core_cascade_to_empty() {
        let log = log_of(&[("u1", "a", 1), ("u2", "a", 1)]);
        assert!(matches!(k_core_filter(&log, 2, CoreMode::Iterative), Err(Error::EmptyDataset)));
    }

    #[test]
    fn single_pass_differs_from_fixed_point() {
        // u3 only survives the first round because item c still has 2 buyers.
        let log = log_of(&[
            ("u1", "a", 1),
            ("u1", "b", 2),
            ("u2", "a", 1),
            ("u2", "b", 2),
            ("u3", "c", 1),
            ("u3", "a", 2),
            ("u4", "c", 1),
        ]);
        let once = k_core_filter(&log, 2, CoreMode::SinglePass).unwrap();
        let full = k_core_filter(&log, 2, CoreMode::Iterative).unwrap();
        assert_eq!(once.n_users(), 3);
        assert_eq!(full.n_users(), 2);
        assert_eq!(full.items(), ["a", "b"]);
    }

    #[test]
    fn shuffle_without_ties_is_identity() {
        let log = log_of(&[("u", "a", 1), ("u", "b", 2), ("u", "c", 3)]);
        for seed in 0..20 {
            assert_eq!(shuffle_timestamp_ties(&log, seed), log);
        }
    }

    #[test]
    fn shuffle_is_deterministic() {
        let log = log_of(&[("u", "a", 1), ("u", "b", 1), ("u", "c", 1), ("u", "d", 1), ("u", "e", 2)]);
        assert_eq!(shuffle_timestamp_ties(&log, 7), shuffle_timestamp_ties(&log, 7));
        let shuffled = shuffle_timestamp_ties(&log, 7);
        assert_eq!(seq_ids(&shuffled, 0)[4], "e");
    }

    #[test]
    fn shuffle_is_uniform_over_permutations() {
        let log = log_of(&[("u", "a", 1), ("u", "b", 1), ("u", "c", 1)]);
        let draws = 10_000u64;
        let mut counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
        for seed in 0..draws {
            let out = shuffle_timestamp_ties(&log, seed);
            let key = seq_ids(&out, 0).into_iter().map(String::from).collect();
            *counts.entry(key).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let p = 1.0 / 6.0;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (perm, &c) in &counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{perm:?} drawn {c} times");
        }
    }

    #[test]
    fn sequential_split_unrolled() {
        let log = log_of(&[("u", "a", 1), ("u", "b", 2), ("u", "c", 3), ("u", "d", 4)]);
        let s = split(&log, &SplitSpec::sequential()).unwrap();
        assert_eq!(seq_ids(&s.train, 0), ["a", "b"]);
        assert_eq!(seq_ids(&s.train_and_validation, 0), ["a", "b", "c"]);
        let name = |i: u32| s.item_id(i).to_string();
        assert_eq!(s.validation[0].query.map(name), Some("b".into()));
        assert_eq!(s.validation[0].targets.iter().map(|&i| name(i)).collect::<Vec<_>>(), ["c"]);
        assert_eq!(s.test[0].query.map(name), Some("c".into()));
        assert_eq!(s.test[0].targets.iter().map(|&i| name(i)).collect::<Vec<_>>(), ["d"]);
    }

    #[test]
    fn short_users_are_skipped_but_kept_in_train() {
        let log = log_of(&[("u", "a", 1), ("u", "b", 2), ("v", "a", 1), ("v", "b", 2), ("v", "c", 3)]);
        let s = split(&log, &SplitSpec::sequential()).unwrap();
        assert_eq!(s.skipped_users, 1);
        assert_eq!(s.test.len(), 1);
        assert_eq!(s.train.n_events(), 3);
    }

    #[test]
    fn random_split_sizes_and_determinism() {
        let records: Vec<_> = (0..10)
            .map(|t| ("u", ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"][t], t as u64))
            .collect();
        let log = log_of(&records);
        let spec = SplitSpec::graph(11);
        assert_eq!(spec.part_sizes(10), (8, 1, 1));
        let s = split(&log, &spec).unwrap();
        assert_eq!(s.train.n_events(), 8);
        assert_eq!(s.validation[0].targets.len(), 1);
        assert_eq!(s.test[0].targets.len(), 1);
        let again = split(&log, &spec).unwrap();
        assert_eq!(again.train, s.train);
        assert_eq!(again.test, s.test);
        // chronological order survives inside the train part
        let ts: Vec<u64> = s.train.sequence(0).iter().map(|e| e.timestamp).collect();
        assert!(ts.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn random_split_query_precedes_first_target() {
        let records: Vec<_> = (0..20).map(|t| ("u", format!("i{t}"), t as u64)).collect();
        let log = InteractionLog::from_interactions(records.iter().map(|(u, i, t)| Interaction::new(*u, i.clone(), *t, ""))).unwrap();
        for seed in 0..30 {
            let s = split(&log, &SplitSpec::graph(seed)).unwrap();
            for case in s.validation.iter().chain(&s.test) {
                let first = case.targets[0];
                let pos = log.sequence(0).iter().position(|e| e.item == first).unwrap();
                assert_eq!(case.query, pos.checked_sub(1).map(|p| log.sequence(0)[p].item));
            }
        }
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(SplitSpec::random(0.8, 0.1, 0.2, 0).is_err());
        assert!(SplitSpec::random(0.9, 0.0, 0.1, 0).is_ok());
        assert!(SplitSpec::random(1.0, 0.0, 0.0, 0).is_err());
    }

    fn arb_log() -> impl Strategy<Value = InteractionLog> {
        prop::collection::vec((0u8..12, 0u8..10, 0u64..6), 1..120).prop_map(|recs| {
            InteractionLog::from_interactions(
                recs.into_iter()
                    .map(|(u, i, t)| Interaction::new(format!("u{u}"), format!("i{i}"), t, format!("c{}", i % 3))),
            )
            .unwrap()
        })
    }

    fn triples(log: &InteractionLog) -> Vec<(String, String, u64)> {
        let mut v: Vec<_> = log.to_interactions().into_iter().map(|r| (r.user, r.item, r.timestamp)).collect();
        v.sort();
        v
    }

    proptest! {
        #[test]
        fn k_core_output_meets_threshold_and_is_idempotent(log in arb_log(), n in 1usize..5) {
            if let Ok(out) = k_core_filter(&log, n, CoreMode::Iterative) {
                let mut item_deg = vec![0usize; out.n_items()];
                for seq in out.sequences() {
                    prop_assert!(seq.len() >= n);
                    for e in seq { item_deg[e.item as usize] += 1; }
                }
                prop_assert!(item_deg.iter().all(|&d| d >= n));
                let again = k_core_filter(&out, n, CoreMode::Iterative).unwrap();
                prop_assert_eq!(triples(&again), triples(&out));
            }
        }

        #[test]
        fn shuffle_preserves_triples(log in arb_log(), seed in any::<u64>()) {
            prop_assert_eq!(triples(&shuffle_timestamp_ties(&log, seed)), triples(&log));
        }

        #[test]
        fn split_preserves_events(log in arb_log(), seed in any::<u64>(), sequential in any::<bool>()) {
            let spec = if sequential { SplitSpec::sequential() } else { SplitSpec::graph(seed) };
            let s = split(&log, &spec).unwrap();
            let mut held: Vec<(String, String)> = Vec::new();
            for case in s.validation.iter().chain(&s.test) {
                for &t in &case.targets {
                    held.push((s.users[case.user as usize].clone(), s.items[t as usize].clone()));
                }
                // every evaluated user has training events
                prop_assert!(s.train.users().contains(&s.users[case.user as usize]));
            }
            let mut all: Vec<(String, String)> = s.train.to_interactions().into_iter().map(|r| (r.user, r.item)).collect();
            all.extend(held);
            all.sort();
            let mut want: Vec<(String, String)> = log.to_interactions().into_iter().map(|r| (r.user, r.item)).collect();
            want.sort();
            prop_assert_eq!(all, want);
        }
    }
}
