//! Bipartite user–item interaction graph, edge-list ingestion and train/test splits.
//!
//! Users and items get dense 0-based indices in first-seen order over the
//! training file, then the test file. Node rows in embedding tables put users
//! first (`0..M`) and items after (`M..M+N`).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How lines of an edge-list file map to interactions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeLayout {
    /// `<user> <item> [ignored...]`
    Pairs,
    /// `<user> <item1> <item2> ...`
    Adjacency,
    /// Pairs when every data line has the same token count, adjacency otherwise.
    Auto,
}

impl std::str::FromStr for EdgeLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairs" => Ok(EdgeLayout::Pairs),
            "adjacency" | "adj" => Ok(EdgeLayout::Adjacency),
            "auto" => Ok(EdgeLayout::Auto),
            other => Err(Error::Config(format!("unknown edge layout {other:?}"))),
        }
    }
}

/// Neighborhood normalization used by propagation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormMode {
    /// `1/sqrt(|N(u)|·|N(i)|)`
    Symmetric,
    /// `1/|N(z)|` where `z` is the neighbor being aggregated.
    Left,
}

impl std::str::FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(NormMode::Symmetric),
            "left" => Ok(NormMode::Left),
            other => Err(Error::Config(format!("unknown norm mode {other:?}"))),
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::Symmetric => "symmetric",
            NormMode::Left => "left",
        })
    }
}

/// A graph node, addressed on its own side of the bipartition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Node {
    User(usize),
    Item(usize),
}

/// Compressed bipartite adjacency in both directions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionGraph {
    num_users: usize,
    num_items: usize,
    user_offsets: Vec<usize>,
    user_items: Vec<u32>,
    item_offsets: Vec<usize>,
    item_users: Vec<u32>,
}

impl InteractionGraph {
    /// Builds the graph from `(user, item)` index pairs. Duplicates are collapsed.
    pub fn from_edges(num_users: usize, num_items: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut by_user: Vec<Vec<u32>> = vec![Vec::new(); num_users];
        let mut by_item: Vec<Vec<u32>> = vec![Vec::new(); num_items];
        for &(u, i) in edges {
            if u >= num_users || i >= num_items {
                return Err(Error::Input(format!(
                    "edge ({u}, {i}) out of range for {num_users} users / {num_items} items"
                )));
            }
            by_user[u].push(i as u32);
            by_item[i].push(u as u32);
        }
        let (user_offsets, user_items) = compress(by_user);
        let (item_offsets, item_users) = compress(by_item);
        Ok(Self {
            num_users,
            num_items,
            user_offsets,
            user_items,
            item_offsets,
            item_users,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Total node rows, `M + N`.
    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_edges(&self) -> usize {
        self.user_items.len()
    }

    pub fn user_neighbors(&self, u: usize) -> &[u32] {
        &self.user_items[self.user_offsets[u]..self.user_offsets[u + 1]]
    }

    pub fn item_neighbors(&self, i: usize) -> &[u32] {
        &self.item_users[self.item_offsets[i]..self.item_offsets[i + 1]]
    }

    pub fn user_degree(&self, u: usize) -> usize {
        self.user_offsets[u + 1] - self.user_offsets[u]
    }

    pub fn item_degree(&self, i: usize) -> usize {
        self.item_offsets[i + 1] - self.item_offsets[i]
    }

    pub fn degree(&self, node: Node) -> usize {
        match node {
            Node::User(u) => self.user_degree(u),
            Node::Item(i) => self.item_degree(i),
        }
    }

    pub fn has_edge(&self, u: usize, i: usize) -> bool {
        self.user_neighbors(u).binary_search(&(i as u32)).is_ok()
    }

    /// The `idx`-th edge in user-major order.
    pub fn edge(&self, idx: usize) -> (usize, usize) {
        let u = self.user_offsets.partition_point(|&off| off <= idx) - 1;
        (u, self.user_items[idx] as usize)
    }

    /// Edges in user-major, item-ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_users)
            .flat_map(move |u| self.user_neighbors(u).iter().map(move |&i| (u, i as usize)))
    }

    /// Embedding-table row of a node.
    pub fn row(&self, node: Node) -> usize {
        match node {
            Node::User(u) => u,
            Node::Item(i) => self.num_users + i,
        }
    }

    /// Neighbor rows of every node row, users then items.
    pub(crate) fn row_neighbors(&self, row: usize) -> (&[u32], usize) {
        if row < self.num_users {
            (self.user_neighbors(row), self.num_users)
        } else {
            (self.item_neighbors(row - self.num_users), 0)
        }
    }

    /// Per-row scale factors `(dst, src)` such that the coefficient applied when
    /// aggregating row `src` into row `dst` is `dst[dst] * src[src]`.
    pub(crate) fn norm_scales(&self, mode: NormMode) -> (Vec<f64>, Vec<f64>) {
        let degrees: Vec<usize> = (0..self.num_users)
            .map(|u| self.user_degree(u))
            .chain((0..self.num_items).map(|i| self.item_degree(i)))
            .collect();
        let inv = |d: usize, f: fn(f64) -> f64| if d == 0 { 0.0 } else { f(d as f64) };
        match mode {
            NormMode::Symmetric => {
                let s: Vec<f64> = degrees.iter().map(|&d| inv(d, |x| 1.0 / x.sqrt())).collect();
                (s.clone(), s)
            }
            NormMode::Left => (
                vec![1.0; degrees.len()],
                degrees.iter().map(|&d| inv(d, |x| 1.0 / x)).collect(),
            ),
        }
    }
}

fn compress(lists: Vec<Vec<u32>>) -> (Vec<usize>, Vec<u32>) {
    let mut offsets = Vec::with_capacity(lists.len() + 1);
    let mut flat = Vec::new();
    offsets.push(0);
    for mut list in lists {
        list.sort_unstable();
        list.dedup();
        flat.extend_from_slice(&list);
        offsets.push(flat.len());
    }
    (offsets, flat)
}

/// Coefficient applied when aggregating `src` into `dst` (they must be adjacent).
pub fn norm_coefficient(graph: &InteractionGraph, dst: Node, src: Node, mode: NormMode) -> Result<f64> {
    let (u, i) = match (dst, src) {
        (Node::User(u), Node::Item(i)) | (Node::Item(i), Node::User(u)) => (u, i),
        _ => return Err(Error::Domain("nodes on the same side are never adjacent".into())),
    };
    if u >= graph.num_users() || i >= graph.num_items() || !graph.has_edge(u, i) {
        return Err(Error::Domain(format!("({u}, {i}) is not an edge")));
    }
    let (du, dn) = (graph.degree(dst), graph.degree(src));
    if du == 0 || dn == 0 {
        return Err(Error::Domain("zero degree".into()));
    }
    Ok(match mode {
        NormMode::Symmetric => 1.0 / ((du * dn) as f64).sqrt(),
        NormMode::Left => 1.0 / dn as f64,
    })
}

/// Original id tokens for the dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    pub users: Vec<String>,
    pub items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

impl IdMap {
    pub fn intern_user(&mut self, tok: &str) -> usize {
        intern(&mut self.users, &mut self.user_index, tok)
    }

    pub fn intern_item(&mut self, tok: &str) -> usize {
        intern(&mut self.items, &mut self.item_index, tok)
    }

    pub fn user(&self, tok: &str) -> Option<usize> {
        self.user_index.get(tok).copied()
    }

    pub fn item(&self, tok: &str) -> Option<usize> {
        self.item_index.get(tok).copied()
    }

    /// Tab-separated `kind index id` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (k, id) in self.users.iter().enumerate() {
            out.push_str(&format!("user\t{k}\t{id}\n"));
        }
        for (k, id) in self.items.iter().enumerate() {
            out.push_str(&format!("item\t{k}\t{id}\n"));
        }
        out
    }
}

fn intern(names: &mut Vec<String>, index: &mut HashMap<String, usize>, tok: &str) -> usize {
    if let Some(&k) = index.get(tok) {
        return k;
    }
    let k = names.len();
    names.push(tok.to_string());
    index.insert(tok.to_string(), k);
    k
}

/// Train edges plus held-out test items per user.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_edges: Vec<(usize, usize)>,
    /// Indexed by user; sorted, duplicate-free.
    pub test_items: Vec<Vec<usize>>,
}

impl DatasetSplit {
    pub fn num_test_edges(&self) -> usize {
        self.test_items.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub users: usize,
    pub items: usize,
    pub train_edges: usize,
    pub test_edges: usize,
    /// Test-side users or items that never occur in training.
    pub orphan_test_nodes: usize,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "users={}", self.users)?;
        writeln!(f, "items={}", self.items)?;
        writeln!(f, "train_edges={}", self.train_edges)?;
        writeln!(f, "test_edges={}", self.test_edges)?;
        write!(f, "orphan_test_nodes={}", self.orphan_test_nodes)
    }
}

/// Everything produced by loading edge-list text.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub graph: InteractionGraph,
    pub split: DatasetSplit,
    pub ids: IdMap,
    pub report: LoadReport,
}

impl LoadedData {
    /// Users with no training edge.
    pub fn is_orphan_user(&self, u: usize) -> bool {
        self.graph.user_degree(u) == 0
    }
}

/// Parses interaction text into raw `(user, item)` token pairs.
pub fn parse_interactions(text: &str, layout: EdgeLayout) -> Result<Vec<(String, String)>> {
    let lines: Vec<(usize, Vec<&str>)> = text
        .lines()
        .enumerate()
        .filter_map(|(n, line)| {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                None
            } else {
                Some((n + 1, line.split_whitespace().collect()))
            }
        })
        .collect();
    for (n, toks) in &lines {
        if toks.len() < 2 {
            return Err(Error::Parse {
                line: *n,
                msg: format!("expected at least 2 tokens, found {}", toks.len()),
            });
        }
    }
    let layout = match layout {
        EdgeLayout::Auto => {
            let first = lines.first().map(|(_, t)| t.len()).unwrap_or(2);
            if lines.iter().all(|(_, t)| t.len() == first) {
                EdgeLayout::Pairs
            } else {
                EdgeLayout::Adjacency
            }
        }
        other => other,
    };
    let mut pairs = Vec::new();
    for (_, toks) in lines {
        match layout {
            EdgeLayout::Adjacency => {
                for item in &toks[1..] {
                    pairs.push((toks[0].to_string(), item.to_string()));
                }
            }
            _ => pairs.push((toks[0].to_string(), toks[1].to_string())),
        }
    }
    Ok(pairs)
}

/// Loads a training edge list and an optional test edge list.
pub fn load_edge_list(train: &str, test: Option<&str>, layout: EdgeLayout) -> Result<LoadedData> {
    let train_pairs = parse_interactions(train, layout)?;
    if train_pairs.is_empty() {
        return Err(Error::NoEdges);
    }
    let test_pairs = match test {
        Some(t) => parse_interactions(t, layout)?,
        None => Vec::new(),
    };

    let mut ids = IdMap::default();
    let mut train_edges: Vec<(usize, usize)> = train_pairs
        .iter()
        .map(|(u, i)| (ids.intern_user(u), ids.intern_item(i)))
        .collect();
    let (train_users, train_items) = (ids.users.len(), ids.items.len());
    let test_edges: Vec<(usize, usize)> = test_pairs
        .iter()
        .map(|(u, i)| (ids.intern_user(u), ids.intern_item(i)))
        .collect();
    let (m, n) = (ids.users.len(), ids.items.len());

    dedup_preserving_order(&mut train_edges);
    let graph = InteractionGraph::from_edges(m, n, &train_edges)?;

    let mut test_sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); m];
    let mut overlap = 0usize;
    for &(u, i) in &test_edges {
        if u < train_users && i < train_items && graph.has_edge(u, i) {
            overlap += 1;
            continue;
        }
        test_sets[u].insert(i);
    }
    if overlap > 0 {
        log::warn!("dropped {overlap} test interactions that also appear in training");
    }
    let split = DatasetSplit {
        train_edges,
        test_items: test_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
    };
    let report = LoadReport {
        users: m,
        items: n,
        train_edges: graph.num_edges(),
        test_edges: split.num_test_edges(),
        orphan_test_nodes: (m - train_users) + (n - train_items),
    };
    Ok(LoadedData {
        graph,
        split,
        ids,
        report,
    })
}

/// Reads and loads edge-list files from disk.
pub fn load_edge_files(train: &Path, test: Option<&Path>, layout: EdgeLayout) -> Result<LoadedData> {
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|e| Error::Input(format!("cannot read {}: {e}", p.display())))
    };
    let train_text = read(train)?;
    let test_text = test.map(read).transpose()?;
    load_edge_list(&train_text, test_text.as_deref(), layout)
}

fn dedup_preserving_order(edges: &mut Vec<(usize, usize)>) {
    let mut seen = std::collections::HashSet::with_capacity(edges.len());
    edges.retain(|e| seen.insert(*e));
}

/// Writes training edges as `user item` lines, ordered so that reloading the
/// text reproduces the same dense indices.
pub fn write_edge_list(graph: &InteractionGraph, ids: &IdMap) -> Result<String> {
    let (m, n) = (graph.num_users(), graph.num_items());
    let mut out = String::new();
    let mut emit = |u: usize, i: usize| {
        out.push_str(&ids.users[u]);
        out.push(' ');
        out.push_str(&ids.items[i]);
        out.push('\n');
    };
    let (mut su, mut si) = (0usize, 0usize);
    // An edge is written once both endpoints have been introduced.
    while su < m || si < n {
        let user_ready = su < m
            && graph
                .user_neighbors(su)
                .first()
                .is_some_and(|&i| (i as usize) < si);
        let item_ready = si < n
            && graph
                .item_neighbors(si)
                .first()
                .is_some_and(|&u| (u as usize) < su);
        if user_ready {
            for &i in graph.user_neighbors(su).iter().take_while(|&&i| (i as usize) < si) {
                emit(su, i as usize);
            }
            su += 1;
        } else if item_ready {
            for &u in graph.item_neighbors(si).iter().take_while(|&&u| (u as usize) < su) {
                emit(u as usize, si);
            }
            si += 1;
        } else if su < m && si < n && graph.has_edge(su, si) {
            emit(su, si);
            for &i in graph.user_neighbors(su).iter().take_while(|&&i| (i as usize) < si) {
                emit(su, i as usize);
            }
            for &u in graph.item_neighbors(si).iter().take_while(|&&u| (u as usize) < su) {
                emit(u as usize, si);
            }
            su += 1;
            si += 1;
        } else {
            return Err(Error::Input(
                "graph indices are not in first-seen order (or contain isolated nodes)".into(),
            ));
        }
    }
    Ok(out)
}

/// Randomly holds out `test_fraction` of each user's interactions, keeping at
/// least one training interaction per user. Returns `(train, test)` token pairs
/// in input order.
pub fn holdout_split(
    pairs: &[(String, String)],
    test_fraction: f64,
    seed: u64,
) -> (Vec<(String, String)>, Vec<(String, String)>) {
    let mut by_user: Vec<Vec<usize>> = Vec::new();
    let mut user_of: HashMap<&str, usize> = HashMap::new();
    let mut seen = std::collections::HashSet::new();
    for (k, (u, i)) in pairs.iter().enumerate() {
        if !seen.insert((u.as_str(), i.as_str())) {
            continue;
        }
        let next = by_user.len();
        let slot = *user_of.entry(u.as_str()).or_insert(next);
        if slot == next {
            by_user.push(Vec::new());
        }
        by_user[slot].push(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; pairs.len()];
    for rows in &mut by_user {
        rows.shuffle(&mut rng);
        let n_test = ((rows.len() as f64) * test_fraction).round() as usize;
        let n_test = n_test.min(rows.len().saturating_sub(1));
        for &k in &rows[..n_test] {
            is_test[k] = true;
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let kept: std::collections::HashSet<usize> = by_user.iter().flatten().copied().collect();
    for (k, p) in pairs.iter().enumerate() {
        if !kept.contains(&k) {
            continue;
        }
        if is_test[k] {
            test.push(p.clone());
        } else {
            train.push(p.clone());
        }
    }
    (train, test)
}

/// Formats token pairs as `user item` lines.
pub fn pairs_to_text(pairs: &[(String, String)]) -> String {
    let mut out = String::new();
    for (u, i) in pairs {
        out.push_str(u);
        out.push(' ');
        out.push_str(i);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_load() {
        let data = load_edge_list("u1 iA\nu1 iB\nu2 iA\n", None, EdgeLayout::Auto).unwrap();
        let g = &data.graph;
        assert_eq!((g.num_users(), g.num_items(), g.num_edges()), (2, 2, 3));
        assert_eq!(g.user_neighbors(0), &[0, 1]);
        assert_eq!(g.item_neighbors(0), &[0, 1]);
    }

    #[test]
    fn empty_input_is_no_edges() {
        let err = load_edge_list("# nothing\n\n", None, EdgeLayout::Auto).unwrap_err();
        assert_eq!(err.to_string(), "no edges");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match load_edge_list("a b\nlonely\n", None, EdgeLayout::Pairs) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicates_collapse_and_extra_columns_ignored() {
        let data = load_edge_list("1\t10\t5\t999\n1\t10\t3\t1000\n2\t11\t4\t5\n", None, EdgeLayout::Auto).unwrap();
        assert_eq!(data.graph.num_edges(), 2);
        assert_eq!(data.graph.num_users(), 2);
    }

    #[test]
    fn adjacency_layout_autodetected() {
        let data = load_edge_list("0 1 2 3\n1 2\n", None, EdgeLayout::Auto).unwrap();
        assert_eq!(data.graph.num_edges(), 4);
        assert_eq!(data.graph.user_neighbors(0), &[0, 1, 2]);
    }

    #[test]
    fn orphan_test_nodes_are_indexed_and_counted() {
        let data = load_edge_list("a x\nb y\n", Some("a y\nc x\na z\n"), EdgeLayout::Pairs).unwrap();
        assert_eq!(data.report.users, 3);
        assert_eq!(data.report.items, 3);
        assert_eq!(data.report.orphan_test_nodes, 2);
        assert_eq!(data.report.test_edges, 3);
        assert!(data.is_orphan_user(2));
        assert_eq!(data.split.test_items[0], vec![1, 2]);
    }

    #[test]
    fn test_overlap_is_dropped() {
        let data = load_edge_list("a x\n", Some("a x\n"), EdgeLayout::Pairs).unwrap();
        assert_eq!(data.report.test_edges, 0);
    }

    #[test]
    fn norm_coefficient_examples() {
        // u0 has 4 items, i0 has 9 users.
        let mut edges = vec![];
        for i in 0..4 {
            edges.push((0, i));
        }
        for u in 1..9 {
            edges.push((u, 0));
        }
        edges.push((9, 5));
        let g = InteractionGraph::from_edges(10, 6, &edges).unwrap();
        let c = norm_coefficient(&g, Node::User(0), Node::Item(0), NormMode::Symmetric).unwrap();
        assert!((c - 1.0 / 6.0).abs() < 1e-15);
        let c1 = norm_coefficient(&g, Node::User(9), Node::Item(5), NormMode::Symmetric).unwrap();
        assert_eq!(c1, 1.0);
        let rev = norm_coefficient(&g, Node::Item(0), Node::User(0), NormMode::Symmetric).unwrap();
        assert_eq!(c, rev);
        // left: depends only on the aggregated neighbor's degree
        let l = norm_coefficient(&g, Node::Item(0), Node::User(0), NormMode::Left).unwrap();
        assert_eq!(l, 0.25);
        assert!(norm_coefficient(&g, Node::User(1), Node::Item(1), NormMode::Left).is_err());
    }

    #[test]
    fn left_mode_neighbor_degree_five() {
        let edges: Vec<_> = (0..5).map(|i| (0, i)).collect();
        let g = InteractionGraph::from_edges(1, 5, &edges).unwrap();
        let c = norm_coefficient(&g, Node::Item(3), Node::User(0), NormMode::Left).unwrap();
        assert!((c - 0.2).abs() < 1e-15);
    }

    #[test]
    fn edge_lookup_matches_iteration() {
        let data = load_edge_list("a x\nb y\na y\nc z\nb x\n", None, EdgeLayout::Pairs).unwrap();
        let g = &data.graph;
        let all: Vec<_> = g.edges().collect();
        for (k, e) in all.iter().enumerate() {
            assert_eq!(g.edge(k), *e);
        }
    }

    #[test]
    fn write_then_reload_is_identity() {
        let text = "a x\nb y\na z\nc y\nd w\nb x\n";
        let data = load_edge_list(text, None, EdgeLayout::Pairs).unwrap();
        let written = write_edge_list(&data.graph, &data.ids).unwrap();
        let again = load_edge_list(&written, None, EdgeLayout::Pairs).unwrap();
        assert_eq!(again.graph, data.graph);
        assert_eq!(again.ids.users, data.ids.users);
        assert_eq!(again.ids.items, data.ids.items);
    }

    #[test]
    fn holdout_keeps_one_train_edge_per_user() {
        let pairs: Vec<(String, String)> = (0..50)
            .map(|k| (format!("u{}", k % 5), format!("i{k}")))
            .chain(std::iter::once(("solo".to_string(), "i0".to_string())))
            .collect();
        let (train, test) = holdout_split(&pairs, 0.2, 3);
        assert_eq!(train.len() + test.len(), pairs.len());
        assert_eq!(test.len(), 10);
        assert!(train.iter().any(|(u, _)| u == "solo"));
    }
}
