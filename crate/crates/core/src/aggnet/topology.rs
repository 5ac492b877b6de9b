//! Static sink-rooted routing: a set of node-disjoint paths for the
//! multipath schemes plus a spanning tree for the plaintext baseline.
//!
//! Every non-sink node is a source. For path `j`, nodes on the path
//! forward along it toward the sink; every other source hands its share
//! for path `j` to an attachment node on that path (the path's far end
//! unless the file says otherwise). Each path therefore induces a
//! sink-rooted tree whose internal nodes are the path nodes, and distinct
//! paths share no internal nodes.
//!
//! Text format (`#` starts a comment, blank lines ignored):
//!
//! ```text
//! mpagg-topology 1
//! [options]
//! disjoint = yes
//! [nodes]
//! 0 1 2 3 4
//! [sink]
//! 0
//! [tree_edges]      # child parent
//! 1 0
//! ...
//! [paths]           # one path per line, far end first
//! 1 2
//! 3
//! [attach]          # source path-number node
//! 4 1 2
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::share::NodeId;

pub const HEADER: &str = "mpagg-topology 1";

/// Longest path the generator will build.
pub const MAX_GENERATED_PATH_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid topology: {0}")]
    Invalid(String),
    #[error("cannot build {paths} disjoint paths with {nodes} nodes")]
    Infeasible { nodes: usize, paths: usize },
}

fn parse_err(line: usize, message: impl Into<String>) -> TopologyError {
    TopologyError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    nodes: BTreeSet<NodeId>,
    sink: NodeId,
    tree_parent: BTreeMap<NodeId, NodeId>,
    paths: Vec<Vec<NodeId>>,
    attach: BTreeMap<(NodeId, usize), NodeId>,
    disjoint: bool,
}

/// One sink-rooted routing tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteTree {
    parent: BTreeMap<NodeId, NodeId>,
    children: BTreeMap<NodeId, usize>,
    height: BTreeMap<NodeId, u64>,
    subtree: BTreeMap<NodeId, usize>,
    relays: BTreeSet<NodeId>,
}

impl RouteTree {
    fn build(sink: NodeId, parent: BTreeMap<NodeId, NodeId>, relays: BTreeSet<NodeId>) -> Self {
        let mut children: BTreeMap<NodeId, usize> = BTreeMap::new();
        for &p in parent.values() {
            *children.entry(p).or_default() += 1;
        }
        let mut height: BTreeMap<NodeId, u64> = parent.keys().map(|&n| (n, 0)).collect();
        height.insert(sink, 0);
        let mut subtree: BTreeMap<NodeId, usize> = parent.keys().map(|&n| (n, 0)).collect();
        subtree.insert(sink, 0);
        for &start in parent.keys() {
            let mut node = start;
            let mut d = 0;
            let mut raising = true;
            *subtree.get_mut(&start).expect("seeded") += 1;
            while let Some(&p) = parent.get(&node) {
                d += 1;
                *subtree.entry(p).or_insert(0) += 1;
                let h = height.entry(p).or_insert(0);
                if raising && *h < d {
                    *h = d;
                } else {
                    raising = false;
                }
                node = p;
            }
        }
        Self {
            parent,
            children,
            height,
            subtree,
            relays,
        }
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        self.parent.get(&node).copied()
    }

    pub fn children(&self, node: NodeId) -> usize {
        self.children.get(&node).copied().unwrap_or(0)
    }

    /// Longest hop count from a leaf below `node` up to `node`.
    pub fn height(&self, node: NodeId) -> u64 {
        self.height.get(&node).copied().unwrap_or(0)
    }

    /// Sources whose shares pass through `node`, itself included (the sink
    /// counts every source).
    pub fn subtree_size(&self, node: NodeId) -> usize {
        self.subtree.get(&node).copied().unwrap_or(0)
    }

    /// Nodes that forward other sources' traffic on this route.
    pub fn relays(&self) -> &BTreeSet<NodeId> {
        &self.relays
    }

    pub fn depth(&self, mut node: NodeId) -> usize {
        let mut d = 0;
        while let Some(&p) = self.parent.get(&node) {
            d += 1;
            node = p;
        }
        d
    }
}

impl Topology {
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        sink: NodeId,
        tree_edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        paths: Vec<Vec<NodeId>>,
        attach: impl IntoIterator<Item = ((NodeId, usize), NodeId)>,
        disjoint: bool,
    ) -> Result<Self, TopologyError> {
        let topo = Self {
            nodes: nodes.into_iter().collect(),
            sink,
            tree_parent: tree_edges.into_iter().collect(),
            paths,
            attach: attach.into_iter().collect(),
            disjoint,
        };
        topo.validate()?;
        Ok(topo)
    }

    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    /// Every node except the sink.
    pub fn sources(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied().filter(move |&n| n != self.sink)
    }

    pub fn source_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn paths(&self) -> &[Vec<NodeId>] {
        &self.paths
    }

    pub fn path_count(&self) -> usize {
        self.paths.len()
    }

    pub fn is_disjoint(&self) -> bool {
        self.disjoint
    }

    pub fn tree_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.tree_parent.iter().map(|(&c, &p)| (c, p))
    }

    /// 0-based indices of the paths `node` lies on.
    pub fn paths_of(&self, node: NodeId) -> Vec<usize> {
        (0..self.paths.len()).filter(|&j| self.paths[j].contains(&node)).collect()
    }

    /// Where `source` enters path `j` (0-based) when it is not on it.
    pub fn attachment(&self, source: NodeId, path: usize) -> NodeId {
        self.attach
            .get(&(source, path))
            .copied()
            .unwrap_or(self.paths[path][0])
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        let invalid = |m: String| Err(TopologyError::Invalid(m));
        if !self.nodes.contains(&self.sink) {
            return invalid(format!("sink {} is not a listed node", self.sink));
        }
        if self.nodes.len() < 2 {
            return invalid("need at least one source besides the sink".into());
        }
        for (&c, &p) in &self.tree_parent {
            if !self.nodes.contains(&c) || !self.nodes.contains(&p) {
                return invalid(format!("tree edge {c} -> {p} names an unknown node"));
            }
            if c == self.sink {
                return invalid("the sink cannot have a parent".into());
            }
        }
        for n in self.sources() {
            if !self.tree_parent.contains_key(&n) {
                return invalid(format!("node {n} has no parent in the aggregation tree"));
            }
            let mut seen = BTreeSet::new();
            let mut cur = n;
            while cur != self.sink {
                if !seen.insert(cur) {
                    return invalid(format!("aggregation tree has a cycle through node {cur}"));
                }
                cur = self.tree_parent[&cur];
            }
        }
        if self.paths.is_empty() {
            return invalid("at least one path is required".into());
        }
        let mut used: BTreeMap<NodeId, usize> = BTreeMap::new();
        for (j, path) in self.paths.iter().enumerate() {
            if path.is_empty() {
                return invalid(format!("path {} is empty", j + 1));
            }
            let mut own = BTreeSet::new();
            for &n in path {
                if n == self.sink {
                    return invalid(format!("path {} lists the sink", j + 1));
                }
                if !self.nodes.contains(&n) {
                    return invalid(format!("path {} names unknown node {n}", j + 1));
                }
                if !own.insert(n) {
                    return invalid(format!("path {} visits node {n} twice", j + 1));
                }
                if let Some(&other) = used.get(&n) {
                    if self.disjoint {
                        return invalid(format!(
                            "paths {} and {} share node {n} but paths must be node-disjoint",
                            other + 1,
                            j + 1
                        ));
                    }
                } else {
                    used.insert(n, j);
                }
            }
        }
        for (&(src, j), &at) in &self.attach {
            if j >= self.paths.len() {
                return invalid(format!("attachment of node {src} names path {} which does not exist", j + 1));
            }
            if !self.nodes.contains(&src) || src == self.sink {
                return invalid(format!("attachment names non-source node {src}"));
            }
            if self.paths[j].contains(&src) {
                return invalid(format!("node {src} is on path {} and cannot attach to it", j + 1));
            }
            if !self.paths[j].contains(&at) {
                return invalid(format!("node {src} attaches to {at}, which is not on path {}", j + 1));
            }
        }
        Ok(())
    }

    /// Routing tree for path `j` (0-based).
    pub fn path_route(&self, j: usize) -> RouteTree {
        let path = &self.paths[j];
        let mut parent = BTreeMap::new();
        for w in path.windows(2) {
            parent.insert(w[0], w[1]);
        }
        parent.insert(*path.last().expect("validated nonempty"), self.sink);
        for n in self.sources() {
            if !path.contains(&n) {
                parent.insert(n, self.attachment(n, j));
            }
        }
        RouteTree::build(self.sink, parent, path.iter().copied().collect())
    }

    /// Routing tree of the plaintext baseline.
    pub fn tree_route(&self) -> RouteTree {
        let relays = self.tree_parent.values().copied().filter(|&p| p != self.sink).collect();
        RouteTree::build(self.sink, self.tree_parent.clone(), relays)
    }

    pub fn parse(text: &str) -> Result<Self, TopologyError> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Options,
            Nodes,
            Sink,
            TreeEdges,
            Paths,
            Attach,
        }
        let mut section = Section::None;
        let mut header_seen = false;
        let mut nodes = BTreeSet::new();
        let mut sink = None;
        let mut tree = BTreeMap::new();
        let mut paths = Vec::new();
        let mut attach = BTreeMap::new();
        let mut disjoint = true;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if !header_seen {
                if line != HEADER {
                    return Err(parse_err(line_no, format!("expected header `{HEADER}`, found `{line}`")));
                }
                header_seen = true;
                continue;
            }
            if line.starts_with('[') {
                section = match line {
                    "[options]" => Section::Options,
                    "[nodes]" => Section::Nodes,
                    "[sink]" => Section::Sink,
                    "[tree_edges]" => Section::TreeEdges,
                    "[paths]" => Section::Paths,
                    "[attach]" => Section::Attach,
                    other => return Err(parse_err(line_no, format!("unknown section {other}"))),
                };
                continue;
            }
            let ids = || -> Result<Vec<NodeId>, TopologyError> {
                line.split_whitespace()
                    .map(|tok| {
                        tok.parse::<NodeId>()
                            .map_err(|_| parse_err(line_no, format!("`{tok}` is not a node id")))
                    })
                    .collect()
            };
            match section {
                Section::None => return Err(parse_err(line_no, "content before the first section")),
                Section::Options => {
                    let (key, value) = line
                        .split_once('=')
                        .map(|(k, v)| (k.trim(), v.trim()))
                        .ok_or_else(|| parse_err(line_no, "expected `key = value`"))?;
                    match key {
                        "disjoint" => {
                            disjoint = match value {
                                "yes" | "true" => true,
                                "no" | "false" => false,
                                _ => return Err(parse_err(line_no, format!("disjoint must be yes or no, got `{value}`"))),
                            }
                        }
                        _ => return Err(parse_err(line_no, format!("unknown option `{key}`"))),
                    }
                }
                Section::Nodes => {
                    for n in ids()? {
                        if !nodes.insert(n) {
                            return Err(parse_err(line_no, format!("node {n} listed twice")));
                        }
                    }
                }
                Section::Sink => {
                    let v = ids()?;
                    if v.len() != 1 || sink.is_some() {
                        return Err(parse_err(line_no, "exactly one sink id expected"));
                    }
                    sink = Some(v[0]);
                }
                Section::TreeEdges => {
                    let v = ids()?;
                    if v.len() != 2 {
                        return Err(parse_err(line_no, "tree edge needs `child parent`"));
                    }
                    for n in &v {
                        if !nodes.contains(n) {
                            return Err(parse_err(line_no, format!("unknown node {n}")));
                        }
                    }
                    if tree.insert(v[0], v[1]).is_some() {
                        return Err(parse_err(line_no, format!("node {} already has a parent", v[0])));
                    }
                }
                Section::Paths => {
                    let v = ids()?;
                    for n in &v {
                        if !nodes.contains(n) {
                            return Err(parse_err(line_no, format!("unknown node {n}")));
                        }
                        if Some(*n) == sink {
                            return Err(parse_err(line_no, "paths must not list the sink"));
                        }
                    }
                    paths.push(v);
                }
                Section::Attach => {
                    let v = ids()?;
                    if v.len() != 3 {
                        return Err(parse_err(line_no, "attachment needs `source path node`"));
                    }
                    let j = v[1] as usize;
                    if j == 0 || j > paths.len() {
                        return Err(parse_err(line_no, format!("path number {j} out of range")));
                    }
                    if !paths[j - 1].contains(&v[2]) {
                        return Err(parse_err(line_no, format!("node {} is not on path {j}", v[2])));
                    }
                    attach.insert((v[0], j - 1), v[2]);
                }
            }
        }
        if !header_seen {
            return Err(TopologyError::Invalid("empty topology file".into()));
        }
        let sink = sink.ok_or_else(|| TopologyError::Invalid("missing [sink] section".into()))?;
        Self::new(nodes, sink, tree, paths, attach, disjoint)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "[options]");
        let _ = writeln!(out, "disjoint = {}", if self.disjoint { "yes" } else { "no" });
        let _ = writeln!(out, "[nodes]");
        let ids: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "{}", ids.join(" "));
        let _ = writeln!(out, "[sink]");
        let _ = writeln!(out, "{}", self.sink);
        let _ = writeln!(out, "[tree_edges]");
        for (c, p) in &self.tree_parent {
            let _ = writeln!(out, "{c} {p}");
        }
        let _ = writeln!(out, "[paths]");
        for path in &self.paths {
            let ids: Vec<String> = path.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "{}", ids.join(" "));
        }
        let _ = writeln!(out, "[attach]");
        for ((src, j), at) in &self.attach {
            let _ = writeln!(out, "{src} {} {at}", j + 1);
        }
        out
    }

    /// Seed-deterministic topology: `nodes` nodes (node 0 is the sink),
    /// `paths` node-disjoint paths of 1 to [`MAX_GENERATED_PATH_LEN`] relays,
    /// random attachment points and a random recursive baseline tree.
    pub fn generate(nodes: usize, paths: usize, seed: u64) -> Result<Self, TopologyError> {
        if paths == 0 || nodes < paths + 1 {
            return Err(TopologyError::Infeasible { nodes, paths });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sink: NodeId = 0;
        let mut order: Vec<NodeId> = (1..nodes as NodeId).collect();
        order.shuffle(&mut rng);

        let max_len = ((nodes - 1) / paths).clamp(1, MAX_GENERATED_PATH_LEN);
        let mut next = 0;
        let mut path_list = Vec::with_capacity(paths);
        for _ in 0..paths {
            let len = rng.gen_range(1..=max_len);
            path_list.push(order[next..next + len].to_vec());
            next += len;
        }

        let mut attach = BTreeMap::new();
        for &src in &order {
            for (j, path) in path_list.iter().enumerate() {
                if !path.contains(&src) {
                    attach.insert((src, j), path[rng.gen_range(0..path.len())]);
                }
            }
        }

        let mut placed = vec![sink];
        let mut tree = BTreeMap::new();
        for &n in &order {
            let parent = placed[rng.gen_range(0..placed.len())];
            tree.insert(n, parent);
            placed.push(n);
        }

        Self::new(0..nodes as NodeId, sink, tree, path_list, attach, true)
    }
}
