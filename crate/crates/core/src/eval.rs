//! Recall@K / NDCG@K and full test-set evaluation.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{DatasetSplit, InteractionGraph};
use crate::scoring::{top_k_filtered, Scorer};

fn check_relevant(relevant: &[usize]) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::Domain("empty relevant set".into()));
    }
    Ok(())
}

/// Fraction of `relevant` found in the first `k` ranked items.
pub fn recall_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64> {
    check_relevant(relevant)?;
    let hits = ranked.iter().take(k).filter(|i| relevant.contains(i)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Binary-relevance NDCG with a `log2(p+1)` discount and IDCG truncated at
/// `min(k, |relevant|)`.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Result<f64> {
    check_relevant(relevant)?;
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(p, _)| discount(p))
        .sum();
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).sum();
    Ok(if idcg > 0.0 { dcg / idcg } else { 0.0 })
}

/// Discount for 0-based position `p`.
#[inline]
fn discount(p: usize) -> f64 {
    1.0 / ((p + 2) as f64).log2()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub users: usize,
    pub secs: f64,
}

impl MetricReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.recall[p])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|p| self.ndcg[p])
    }

    /// `K recall ndcg` lines with a header row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("K\trecall\tndcg\n");
        for (p, k) in self.ks.iter().enumerate() {
            out.push_str(&format!("{k}\t{:.6}\t{:.6}\n", self.recall[p], self.ndcg[p]));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metric report serializes")
    }

    /// Same metric values, ignoring wall time.
    pub fn same_metrics(&self, other: &MetricReport) -> bool {
        self.ks == other.ks && self.recall == other.recall && self.ndcg == other.ndcg && self.users == other.users
    }
}

/// Ranks the catalog for every user with held-out items and averages the metrics.
///
/// Training items are excluded from each ranking, as are items without any
/// training interaction. Users without training interactions are skipped.
pub fn evaluate(scorer: &Scorer<'_>, graph: &InteractionGraph, split: &DatasetSplit, ks: &[usize]) -> Result<MetricReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("K values must be positive".into()));
    }
    if scorer.num_items() != graph.num_items() || scorer.num_users() != graph.num_users() {
        return Err(Error::Dimension("model and split use different node counts".into()));
    }
    let start = Instant::now();
    let max_k = *ks.iter().max().unwrap();
    let users: Vec<usize> = (0..graph.num_users())
        .filter(|&u| !split.test_items.get(u).is_none_or(Vec::is_empty) && graph.user_degree(u) > 0)
        .collect();

    let per_user: Vec<Vec<(f64, f64)>> = users
        .par_iter()
        .map_init(
            || vec![0f32; graph.num_items()],
            |scores, &u| {
                scorer.score_into(u, scores);
                let seen = graph.user_neighbors(u);
                let ranked = top_k_filtered(scores, max_k, |i| {
                    graph.item_degree(i) == 0 || seen.binary_search(&(i as u32)).is_ok()
                });
                let relevant = &split.test_items[u];
                ks.iter()
                    .map(|&k| {
                        (
                            recall_at_k(&ranked, relevant, k).unwrap(),
                            ndcg_at_k(&ranked, relevant, k).unwrap(),
                        )
                    })
                    .collect()
            },
        )
        .collect();

    let n = per_user.len().max(1) as f64;
    let mut recall = vec![0.0; ks.len()];
    let mut ndcg = vec![0.0; ks.len()];
    for row in &per_user {
        for (p, (r, g)) in row.iter().enumerate() {
            recall[p] += r;
            ndcg[p] += g;
        }
    }
    Ok(MetricReport {
        ks: ks.to_vec(),
        recall: recall.into_iter().map(|x| x / n).collect(),
        ndcg: ndcg.into_iter().map(|x| x / n).collect(),
        users: per_user.len(),
        secs: start.elapsed().as_secs_f64(),
    })
}
