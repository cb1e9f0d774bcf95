use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::InteractionGraph;

/// Negative draws per triple before giving up on that user.
pub const NEGATIVE_TRIES: usize = 1000;

/// `(user, positive item, negative item)`
pub type Triple = (usize, usize, usize);

/// Draws `batch` triples: the positive edge uniformly over training edges and
/// the negative item uniformly over items the user has not interacted with.
pub fn sample_bpr_batch<R: Rng>(graph: &InteractionGraph, batch: usize, rng: &mut R) -> Result<Vec<Triple>> {
    let edges = graph.num_edges();
    if edges == 0 {
        return Err(Error::NoEdges);
    }
    let n = graph.num_items();
    if (0..graph.num_users()).all(|u| graph.user_degree(u) == 0 || graph.user_degree(u) >= n) {
        return Err(Error::Input("no user has an unobserved item to sample".into()));
    }
    let mut out = Vec::with_capacity(batch);
    let mut skipped = 0usize;
    while out.len() < batch {
        let (u, i) = graph.edge(rng.random_range(0..edges));
        let neg = (0..NEGATIVE_TRIES)
            .map(|_| rng.random_range(0..n))
            .find(|&j| !graph.has_edge(u, j));
        match neg {
            Some(j) => out.push((u, i, j)),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("resampled {skipped} triples whose user had no negative within {NEGATIVE_TRIES} draws");
    }
    Ok(out)
}
