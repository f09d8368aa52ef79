//! One-mode projection of the user-item graph onto items.
//!
//! Random-walk transition matrices over the binary bipartite graph are
//! composed into a two-step item-to-item walk `Q = (1/|V|) P_VU P_UV`,
//! symmetrized as `Q + Qᵀ`, and raised to the λ-th power by repeated squaring.

use std::fmt;
use std::str::FromStr;

use crate::dataset::InteractionLog;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Binary user-item adjacency (repeat purchases collapse to one edge).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    user_adj: Vec<Vec<u32>>,
    item_adj: Vec<Vec<u32>>,
}

impl BipartiteGraph {
    pub fn from_log(log: &InteractionLog) -> Result<Self> {
        if log.n_events() == 0 {
            return Err(Error::EmptyDataset);
        }
        let user_adj: Vec<Vec<u32>> = log
            .sequences()
            .iter()
            .map(|seq| {
                let mut items: Vec<u32> = seq.iter().map(|e| e.item).collect();
                items.sort_unstable();
                items.dedup();
                items
            })
            .collect();
        Ok(Self::from_user_adjacency(log.n_items(), user_adj))
    }

    /// `user_adj[u]` lists the items of user `u`; lists are sorted and deduplicated here.
    pub fn from_user_adjacency(n_items: usize, mut user_adj: Vec<Vec<u32>>) -> Self {
        let mut item_adj = vec![Vec::new(); n_items];
        for (u, items) in user_adj.iter_mut().enumerate() {
            items.sort_unstable();
            items.dedup();
            for &i in items.iter() {
                item_adj[i as usize].push(u as u32);
            }
        }
        BipartiteGraph { user_adj, item_adj }
    }

    pub fn n_users(&self) -> usize {
        self.user_adj.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_adj.len()
    }

    pub fn n_edges(&self) -> usize {
        self.user_adj.iter().map(Vec::len).sum()
    }

    pub fn user_items(&self, user: usize) -> &[u32] {
        &self.user_adj[user]
    }

    pub fn item_users(&self, item: usize) -> &[u32] {
        &self.item_adj[item]
    }
}

/// Row-stochastic transition matrices `(P_UV, P_VU)`.
///
/// Row `u` of `P_UV` spreads `1/deg(u)` over the user's items and row `v` of
/// `P_VU` spreads `1/deg(v)` over the item's users.
pub fn transition_matrices(g: &BipartiteGraph) -> Result<(SparseMatrix, SparseMatrix)> {
    Ok((
        stochastic(&g.user_adj, g.n_items(), "user")?,
        stochastic(&g.item_adj, g.n_users(), "item")?,
    ))
}

fn stochastic(adj: &[Vec<u32>], n_cols: usize, kind: &str) -> Result<SparseMatrix> {
    let rows = adj
        .iter()
        .enumerate()
        .map(|(r, nbrs)| {
            if nbrs.is_empty() {
                return Err(Error::ContractViolation(format!("{kind} {r} has no edges")));
            }
            let p = 1.0 / nbrs.len() as f64;
            Ok(nbrs.iter().map(|&c| (c, p)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    SparseMatrix::from_rows(n_cols, rows)
}

/// Two-step item walk `Q = (1/n_items) · P_VU · P_UV` under a uniform start prior.
pub fn two_step_item_matrix(p_vu: &SparseMatrix, p_uv: &SparseMatrix, n_items: usize) -> Result<SparseMatrix> {
    if n_items == 0 {
        return Err(Error::invalid("item count must be positive"));
    }
    if p_vu.n_rows() != n_items || p_uv.n_cols() != n_items {
        return Err(Error::DimensionMismatch(format!(
            "walk matrices {}x{} and {}x{} do not match {} items",
            p_vu.n_rows(),
            p_vu.n_cols(),
            p_uv.n_rows(),
            p_uv.n_cols(),
            n_items
        )));
    }
    p_vu.multiply(p_uv)?.scale(1.0 / n_items as f64)
}

/// `Q + Qᵀ`. Symmetric entry pairs are computed from the same two addends, so
/// the result is exactly symmetric.
pub fn symmetrize(q: &SparseMatrix) -> Result<SparseMatrix> {
    if !q.is_square() {
        return Err(Error::DimensionMismatch(format!("cannot symmetrize {}x{}", q.n_rows(), q.n_cols())));
    }
    q.add(&q.transpose())
}

/// Sparsity control applied after every sparse product during powering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PruningPolicy {
    None,
    /// Keep the `m` largest entries of each row; ties keep the lower column.
    TopMPerRow(usize),
    /// Drop entries strictly below the threshold.
    EpsilonThreshold(f64),
}

impl Default for PruningPolicy {
    fn default() -> Self {
        PruningPolicy::TopMPerRow(500)
    }
}

impl PruningPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PruningPolicy::TopMPerRow(0) => Err(Error::invalid("top-M pruning needs M >= 1")),
            PruningPolicy::EpsilonThreshold(e) if !(e.is_finite() && e > 0.0) => {
                Err(Error::invalid(format!("pruning epsilon {e} must be positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, row: &mut Vec<(u32, f64)>) {
        match *self {
            PruningPolicy::None => {}
            PruningPolicy::EpsilonThreshold(eps) => row.retain(|&(_, v)| v >= eps),
            PruningPolicy::TopMPerRow(m) => {
                if row.len() <= m {
                    return;
                }
                // Heavier first, then lower column: a strict total order on distinct columns.
                row.select_nth_unstable_by(m - 1, |a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                row.truncate(m);
                row.sort_unstable_by_key(|&(c, _)| c);
            }
        }
    }
}

impl fmt::Display for PruningPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PruningPolicy::None => f.write_str("none"),
            PruningPolicy::TopMPerRow(m) => write!(f, "top{m}"),
            PruningPolicy::EpsilonThreshold(e) => write!(f, "eps{e:e}"),
        }
    }
}

/// Parses `none`, `topM` or `epsX`, the forms produced by `Display`.
impl FromStr for PruningPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let policy = if s == "none" {
            PruningPolicy::None
        } else if let Some(m) = s.strip_prefix("top").and_then(|m| m.parse().ok()) {
            PruningPolicy::TopMPerRow(m)
        } else if let Some(e) = s.strip_prefix("eps").and_then(|e| e.parse().ok()) {
            PruningPolicy::EpsilonThreshold(e)
        } else {
            return Err(Error::invalid(format!("pruning {s:?} is not none, topM or epsX")));
        };
        policy.validate()?;
        Ok(policy)
    }
}

/// Result of [`matrix_power`], with the number of sparse products performed.
#[derive(Debug, Clone)]
pub struct PowerOutcome {
    pub matrix: SparseMatrix,
    pub products: usize,
}

/// Number of products left-to-right binary exponentiation spends on `lambda`:
/// one squaring per bit after the leading one, one extra multiply per set bit.
pub fn squaring_product_count(lambda: u32) -> usize {
    if lambda == 0 {
        return 0;
    }
    (31 - lambda.leading_zeros()) as usize + lambda.count_ones() as usize - 1
}

/// `A^λ` by exponentiation by squaring, pruning after every product.
/// `λ = 1` returns `A` untouched.
pub fn matrix_power(a: &SparseMatrix, lambda: u32, policy: PruningPolicy) -> Result<PowerOutcome> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "cannot power a {}x{} matrix",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if lambda == 0 {
        return Err(Error::invalid("walk length lambda must be at least 1"));
    }
    policy.validate()?;
    let prune = |row: &mut Vec<(u32, f64)>| policy.apply(row);
    let mut result = a.clone();
    let mut products = 0;
    let top = 31 - lambda.leading_zeros();
    for bit in (0..top).rev() {
        result = result.multiply_with(&result, prune)?;
        products += 1;
        if lambda & (1 << bit) != 0 {
            result = result.multiply_with(a, prune)?;
            products += 1;
        }
    }
    Ok(PowerOutcome { matrix: result, products })
}

/// Symmetrized two-step walk matrix `P_VV` for a training log.
pub fn item_walk_matrix(log: &InteractionLog) -> Result<SparseMatrix> {
    let g = BipartiteGraph::from_log(log)?;
    let (p_uv, p_vu) = transition_matrices(&g)?;
    let q = two_step_item_matrix(&p_vu, &p_uv, g.n_items())?;
    symmetrize(&q)
}

/// `W_V = P_VV^λ` for a training log.
pub fn projection_weights(log: &InteractionLog, lambda: u32, policy: PruningPolicy) -> Result<SparseMatrix> {
    let p_vv = item_walk_matrix(log)?;
    Ok(matrix_power(&p_vv, lambda, policy)?.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn graph(n_items: usize, adj: &[&[u32]]) -> BipartiteGraph {
        BipartiteGraph::from_user_adjacency(n_items, adj.iter().map(|a| a.to_vec()).collect())
    }

    #[test]
    fn bipartite_from_lists() {
        let g = graph(2, &[&[0, 1], &[0]]);
        assert_eq!(g.user_items(0), [0, 1]);
        assert_eq!(g.user_items(1), [0]);
        assert_eq!(g.item_users(0), [0, 1]);
        assert_eq!(g.item_users(1), [0]);
    }

    #[test]
    fn repeat_purchases_collapse() {
        let g = graph(1, &[&[0, 0, 0, 0, 0]]);
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn transition_rows() {
        let g = graph(2, &[&[0, 1], &[0]]);
        let (p_uv, p_vu) = transition_matrices(&g).unwrap();
        assert_eq!(p_uv.to_dense()[0], vec![0.5, 0.5]);
        assert_eq!(p_vu.to_dense()[0], vec![0.5, 0.5]);
    }

    #[test]
    fn isolated_item_is_contract_violation() {
        let g = graph(3, &[&[0, 1]]);
        assert!(matches!(transition_matrices(&g), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn one_user_two_items() {
        let g = graph(2, &[&[0, 1]]);
        let (p_uv, p_vu) = transition_matrices(&g).unwrap();
        let q = two_step_item_matrix(&p_vu, &p_uv, 2).unwrap();
        assert_eq!(q.to_dense(), vec![vec![0.25, 0.25], vec![0.25, 0.25]]);
    }

    #[test]
    fn symmetrize_small() {
        let q = SparseMatrix::from_dense(2, &[vec![0.0, 0.2], vec![0.1, 0.0]]).unwrap();
        let p = symmetrize(&q).unwrap().to_dense();
        assert!((p[0][1] - 0.3).abs() < 1e-15);
        assert_eq!(p[0][1], p[1][0]);
        assert_eq!(p[0][0], 0.0);
        assert!(symmetrize(&SparseMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn lambda_one_and_zero() {
        let a = SparseMatrix::from_dense(2, &[vec![0.5, 0.1], vec![0.0, 0.3]]).unwrap();
        let out = matrix_power(&a, 1, PruningPolicy::None).unwrap();
        assert_eq!(out.matrix, a);
        assert_eq!(out.products, 0);
        assert!(matches!(matrix_power(&a, 0, PruningPolicy::None), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn product_counts() {
        assert_eq!(squaring_product_count(1), 0);
        assert_eq!(squaring_product_count(2), 1);
        assert_eq!(squaring_product_count(3), 2);
        assert_eq!(squaring_product_count(4), 2);
        assert_eq!(squaring_product_count(5), 3);
        assert_eq!(squaring_product_count(6), 3);
        assert_eq!(squaring_product_count(7), 4);
        assert_eq!(squaring_product_count(8), 3);
    }

    #[test]
    fn top_m_tie_keeps_lower_column() {
        let mut row = vec![(0, 0.5), (3, 0.9), (5, 0.5), (7, 0.1)];
        PruningPolicy::TopMPerRow(2).apply(&mut row);
        assert_eq!(row, vec![(0, 0.5), (3, 0.9)]);
        let mut row = vec![(1, 0.5), (2, 1e-9)];
        PruningPolicy::EpsilonThreshold(1e-6).apply(&mut row);
        assert_eq!(row, vec![(1, 0.5)]);
    }

    #[test]
    fn rejects_bad_policies() {
        let a = SparseMatrix::zeros(2, 2);
        assert!(matrix_power(&a, 2, PruningPolicy::TopMPerRow(0)).is_err());
        assert!(matrix_power(&a, 2, PruningPolicy::EpsilonThreshold(0.0)).is_err());
    }

    fn arb_square(n: usize) -> impl Strategy<Value = SparseMatrix> {
        prop::collection::vec(prop::collection::vec(prop_oneof![2 => Just(0.0), 1 => 0.01f64..1.0], n), n)
            .prop_map(move |d| SparseMatrix::from_dense(n, &d).unwrap())
    }

    proptest! {
        #[test]
        fn top_m_keeps_largest_of_unpruned(a in arb_square(12), m in 1usize..6) {
            let full = a.multiply(&a).unwrap();
            let pruned = a.multiply_with(&a, |r| PruningPolicy::TopMPerRow(m).apply(r)).unwrap();
            for r in 0..12 {
                let mut all: Vec<(u32, f64)> = full.row(r).iter().collect();
                all.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
                all.truncate(m);
                all.sort_by_key(|e| e.0);
                let kept: Vec<(u32, f64)> = pruned.row(r).iter().collect();
                prop_assert!(kept.len() <= m);
                prop_assert_eq!(kept, all);
            }
        }

        #[test]
        fn walk_matrix_is_symmetric(adj in prop::collection::vec(prop::collection::vec(0u32..9, 1..5), 1..10)) {
            let mut adj = adj;
            adj.push((0..9).collect());
            let g = BipartiteGraph::from_user_adjacency(9, adj);
            let (p_uv, p_vu) = transition_matrices(&g).unwrap();
            let q = two_step_item_matrix(&p_vu, &p_uv, 9).unwrap();
            let total: f64 = q.triplets().map(|t| t.2).sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
            for i in 0..9 {
                prop_assert!(q.get(i, i) > 0.0);
            }
            let p = symmetrize(&q).unwrap();
            prop_assert!(p.nnz() <= 2 * q.nnz());
            for (r, c, w) in p.triplets() {
                prop_assert_eq!(p.get(c as usize, r as usize), w);
            }
        }
    }
}
