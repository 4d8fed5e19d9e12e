//! Elimination orders, join trees with a strong root, bounded join graphs
//! and w-cutsets.
//!
//! Every decomposition is built over a subset of the variables; variables
//! left out are treated as observed, so functions are placed by their scope
//! restricted to the kept variables.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{FunctionId, HybridMixedNetwork, UndirectedGraph, VarId};

/// A permutation of the kept variables in which every continuous variable is
/// eliminated before any discrete one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationOrder(pub Vec<VarId>);

impl EliminationOrder {
    pub fn vars(&self) -> &[VarId] {
        &self.0
    }

    pub fn position_map(&self) -> BTreeMap<VarId, usize> {
        self.0.iter().enumerate().map(|(i, &v)| (v, i)).collect()
    }
}

/// Min-fill order over every variable of the network.
pub fn constrained_elimination_order(net: &HybridMixedNetwork, graph: &UndirectedGraph) -> EliminationOrder {
    let all: BTreeSet<VarId> = (0..net.len()).map(VarId).collect();
    min_fill_order(net, graph, &all)
}

/// Min-fill order over `keep`, using the primal graph induced on it.
pub fn elimination_order_over(net: &HybridMixedNetwork, keep: &BTreeSet<VarId>) -> EliminationOrder {
    min_fill_order(net, &net.primal_graph(), keep)
}

fn min_fill_order(net: &HybridMixedNetwork, graph: &UndirectedGraph, keep: &BTreeSet<VarId>) -> EliminationOrder {
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = keep
        .iter()
        .map(|v| {
            let nbrs = graph
                .neighbors(v.index())
                .iter()
                .copied()
                .filter(|u| keep.contains(&VarId(*u)))
                .collect();
            (v.index(), nbrs)
        })
        .collect();
    let mut order = Vec::with_capacity(keep.len());
    while !adj.is_empty() {
        let any_continuous = adj.keys().any(|&v| !net.is_discrete(VarId(v)));
        let mut best: Option<(usize, usize)> = None;
        for (&v, nbrs) in &adj {
            if any_continuous && net.is_discrete(VarId(v)) {
                continue;
            }
            let fill = fill_in(&adj, nbrs);
            if best.is_none_or(|(f, _)| fill < f) {
                best = Some((fill, v));
            }
        }
        let (_, v) = best.expect("non-empty candidate set");
        eliminate(&mut adj, v);
        order.push(VarId(v));
    }
    EliminationOrder(order)
}

fn fill_in(adj: &BTreeMap<usize, BTreeSet<usize>>, nbrs: &BTreeSet<usize>) -> usize {
    let list: Vec<usize> = nbrs.iter().copied().collect();
    let mut fill = 0;
    for (i, a) in list.iter().enumerate() {
        for b in &list[i + 1..] {
            if !adj[a].contains(b) {
                fill += 1;
            }
        }
    }
    fill
}

fn eliminate(adj: &mut BTreeMap<usize, BTreeSet<usize>>, v: usize) -> BTreeSet<usize> {
    let nbrs = adj.remove(&v).unwrap_or_default();
    for &a in &nbrs {
        let set = adj.get_mut(&a).unwrap();
        set.remove(&v);
        for &b in &nbrs {
            if a != b {
                set.insert(b);
            }
        }
    }
    nbrs
}

/// A cluster of a decomposition: its variables `chi` and assigned
/// functions `psi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub vars: BTreeSet<VarId>,
    pub functions: Vec<FunctionId>,
}

/// A join tree whose strong root has been located and verified.
#[derive(Debug, Clone)]
pub struct JoinTreeDecomposition {
    nodes: Vec<Cluster>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    strong_root: usize,
    discrete: Vec<bool>,
    kept: BTreeSet<VarId>,
}

/// Clusters of discrete count above the bound, ranked as they are built.
fn adjusted_width_of<'a>(clusters: impl Iterator<Item = &'a BTreeSet<VarId>>, discrete: &[bool]) -> i64 {
    clusters
        .map(|c| c.iter().filter(|v| discrete[v.index()]).count() as i64 - 1)
        .max()
        .unwrap_or(-1)
}

fn effective_scope(net: &HybridMixedNetwork, f: FunctionId, kept: &BTreeSet<VarId>) -> BTreeSet<VarId> {
    net.function_scope(f).into_iter().filter(|v| kept.contains(v)).collect()
}

/// Builds a special join tree along `order`. Variables absent from `order`
/// are treated as observed.
pub fn build_join_tree(net: &HybridMixedNetwork, order: &EliminationOrder) -> Result<JoinTreeDecomposition> {
    let kept: BTreeSet<VarId> = order.vars().iter().copied().collect();
    let pos = order.position_map();
    let graph = net.primal_graph();
    let mut adj: BTreeMap<usize, BTreeSet<usize>> = kept
        .iter()
        .map(|v| {
            let nbrs = graph
                .neighbors(v.index())
                .iter()
                .copied()
                .filter(|u| kept.contains(&VarId(*u)))
                .collect();
            (v.index(), nbrs)
        })
        .collect();

    // Elimination cliques and the elimination-tree parent of each.
    let n = order.vars().len();
    let mut cliques: Vec<Option<BTreeSet<VarId>>> = Vec::with_capacity(n);
    let mut parent: Vec<Option<usize>> = vec![None; n];
    for (p, &v) in order.vars().iter().enumerate() {
        let nbrs = eliminate(&mut adj, v.index());
        parent[p] = nbrs.iter().map(|u| pos[&VarId(*u)]).min();
        let mut clique: BTreeSet<VarId> = nbrs.into_iter().map(VarId).collect();
        clique.insert(v);
        cliques.push(Some(clique));
    }

    // Fold each non-maximal clique into the child that contains it.
    for p in 0..n {
        let children: Vec<usize> = (0..n).filter(|&c| parent[c] == Some(p) && cliques[c].is_some()).collect();
        let mine = cliques[p].clone().unwrap();
        if let Some(&c) = children.iter().find(|&&c| mine.is_subset(cliques[c].as_ref().unwrap())) {
            for &x in &children {
                if x != c {
                    parent[x] = Some(c);
                }
            }
            parent[c] = parent[p];
            cliques[p] = None;
        }
    }

    let live: Vec<usize> = (0..n).filter(|&p| cliques[p].is_some()).collect();
    let node_of: BTreeMap<usize, usize> = live.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut nodes: Vec<Cluster> = live
        .iter()
        .map(|&p| Cluster {
            vars: cliques[p].clone().unwrap(),
            functions: vec![],
        })
        .collect();
    let mut edges = Vec::new();
    let mut roots = Vec::new();
    for &p in &live {
        match parent[p] {
            Some(q) => edges.push((node_of[&q].min(node_of[&p]), node_of[&q].max(node_of[&p]))),
            None => roots.push(node_of[&p]),
        }
    }
    if nodes.is_empty() {
        nodes.push(Cluster {
            vars: BTreeSet::new(),
            functions: vec![],
        });
        roots.push(0);
    }
    // The clique of the last eliminated variable anchors the tree; other
    // components hang off it through empty separators.
    let main_root = *roots.iter().max().unwrap();
    for &r in &roots {
        if r != main_root {
            edges.push((r.min(main_root), r.max(main_root)));
        }
    }
    edges.sort();

    for f in net.functions() {
        let scope = effective_scope(net, f, &kept);
        let host = nodes
            .iter()
            .position(|c| scope.is_subset(&c.vars))
            .expect("triangulation covers every function scope");
        nodes[host].functions.push(f);
    }

    let mut adjacency = vec![Vec::new(); nodes.len()];
    for &(a, b) in &edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let discrete: Vec<bool> = (0..net.len()).map(|v| net.is_discrete(VarId(v))).collect();
    let mut tree = JoinTreeDecomposition {
        nodes,
        edges,
        adjacency,
        strong_root: main_root,
        discrete,
        kept,
    };
    let root = std::iter::once(main_root)
        .chain(0..tree.nodes.len())
        .find(|&r| tree.is_strong_root(r))
        .ok_or(Error::NoStrongRoot)?;
    tree.strong_root = root;
    Ok(tree)
}

impl JoinTreeDecomposition {
    pub fn nodes(&self) -> &[Cluster] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn strong_root(&self) -> usize {
        self.strong_root
    }

    /// Variables the tree was built over (the rest are observed).
    pub fn kept_vars(&self) -> &BTreeSet<VarId> {
        &self.kept
    }

    pub fn separator(&self, a: usize, b: usize) -> BTreeSet<VarId> {
        self.nodes[a].vars.intersection(&self.nodes[b].vars).copied().collect()
    }

    /// `max |chi(v) & discrete| - 1`.
    pub fn adjusted_width(&self) -> i64 {
        adjusted_width_of(self.nodes.iter().map(|c| &c.vars), &self.discrete)
    }

    /// Nodes in breadth-first order from the strong root with each node's
    /// parent.
    pub fn rooted_order(&self) -> Vec<(usize, Option<usize>)> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([(self.strong_root, None)]);
        seen[self.strong_root] = true;
        while let Some((v, p)) = queue.pop_front() {
            out.push((v, p));
            for &u in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back((u, Some(v)));
                }
            }
        }
        out
    }

    /// For every edge `(c, d)` with `c` nearer to `r`: the separator is all
    /// discrete, or `d` adds only continuous variables.
    pub fn is_strong_root(&self, r: usize) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![r];
        seen[r] = true;
        while let Some(c) = stack.pop() {
            for &d in &self.adjacency[c] {
                if seen[d] {
                    continue;
                }
                seen[d] = true;
                let sep_discrete = self.separator(c, d).iter().all(|v| self.discrete[v.index()]);
                let adds_continuous = self.nodes[d]
                    .vars
                    .difference(&self.nodes[c].vars)
                    .all(|v| !self.discrete[v.index()]);
                if !(sep_discrete || adds_continuous) {
                    return false;
                }
                stack.push(d);
            }
        }
        true
    }

    /// Function coverage and running intersection.
    pub fn verify(&self, net: &HybridMixedNetwork) -> std::result::Result<(), String> {
        verify_decomposition(net, &self.nodes, &self.edges_labeled(), &self.kept)
    }

    fn edges_labeled(&self) -> Vec<(usize, usize, BTreeSet<VarId>)> {
        self.edges.iter().map(|&(a, b)| (a, b, self.separator(a, b))).collect()
    }

    /// Smallest node covering `var`.
    pub fn covering_node(&self, var: VarId) -> Option<usize> {
        self.nodes.iter().position(|c| c.vars.contains(&var))
    }

    pub fn report(&self, net: &HybridMixedNetwork) -> DecompositionReport {
        DecompositionReport::new(net, &self.nodes, &self.edges_labeled(), Some(self.strong_root), self.adjusted_width())
    }
}

fn verify_decomposition(
    net: &HybridMixedNetwork,
    nodes: &[Cluster],
    edges: &[(usize, usize, BTreeSet<VarId>)],
    kept: &BTreeSet<VarId>,
) -> std::result::Result<(), String> {
    let mut seen: BTreeMap<FunctionId, usize> = BTreeMap::new();
    for (i, c) in nodes.iter().enumerate() {
        for &f in &c.functions {
            if seen.insert(f, i).is_some() {
                return Err(format!("{f:?} assigned twice"));
            }
            if !effective_scope(net, f, kept).is_subset(&c.vars) {
                return Err(format!("{f:?} not covered by node {i}"));
            }
        }
    }
    if let Some(f) = net.functions().find(|f| !seen.contains_key(f)) {
        return Err(format!("{f:?} unassigned"));
    }
    for &v in kept {
        let holders: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].vars.contains(&v)).collect();
        if holders.is_empty() {
            return Err(format!("{v} in no node"));
        }
        // Connectivity of the holders through edges whose label has `v`.
        let mut reached = BTreeSet::from([holders[0]]);
        let mut stack = vec![holders[0]];
        while let Some(x) = stack.pop() {
            for (a, b, label) in edges {
                if !label.contains(&v) {
                    continue;
                }
                let y = if *a == x {
                    *b
                } else if *b == x {
                    *a
                } else {
                    continue;
                };
                if reached.insert(y) {
                    stack.push(y);
                }
            }
        }
        if holders.iter().any(|h| !reached.contains(h)) {
            return Err(format!("running intersection fails for {v}"));
        }
    }
    Ok(())
}

/// An edge of a join graph with its separator label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledEdge {
    pub a: usize,
    pub b: usize,
    pub label: BTreeSet<VarId>,
}

/// Join graph with adjusted i-bound built by mini-bucket partitioning.
#[derive(Debug, Clone)]
pub struct JoinGraphDecomposition {
    nodes: Vec<Cluster>,
    edges: Vec<LabeledEdge>,
    adjacency: Vec<Vec<(usize, usize)>>,
    i_bound: usize,
    discrete: Vec<bool>,
    kept: BTreeSet<VarId>,
    oversized: Vec<usize>,
}

#[derive(Debug, Clone)]
enum BucketItem {
    Function(FunctionId, BTreeSet<VarId>),
    Message(usize, BTreeSet<VarId>),
}

impl BucketItem {
    fn scope(&self) -> &BTreeSet<VarId> {
        match self {
            BucketItem::Function(_, s) | BucketItem::Message(_, s) => s,
        }
    }
}

/// Mini-bucket join graph along `order` with at most `i + 1` discrete
/// variables per mini-bucket. Functions are never split, so one function
/// with a wider discrete scope yields an oversized node.
pub fn build_join_graph(net: &HybridMixedNetwork, order: &EliminationOrder, i_bound: usize) -> Result<JoinGraphDecomposition> {
    if i_bound < 1 {
        return Err(Error::InvalidIBound(i_bound));
    }
    let kept: BTreeSet<VarId> = order.vars().iter().copied().collect();
    let pos = order.position_map();
    let discrete: Vec<bool> = (0..net.len()).map(|v| net.is_discrete(VarId(v))).collect();
    let count_discrete = |s: &BTreeSet<VarId>| s.iter().filter(|v| discrete[v.index()]).count();
    let limit = i_bound + 1;

    let mut buckets: Vec<Vec<BucketItem>> = vec![Vec::new(); order.vars().len()];
    let mut constants = Vec::new();
    for f in net.functions() {
        let scope = effective_scope(net, f, &kept);
        match scope.iter().map(|v| pos[v]).min() {
            Some(p) => buckets[p].push(BucketItem::Function(f, scope)),
            None => constants.push(f),
        }
    }

    let mut nodes: Vec<Cluster> = Vec::new();
    let mut edges: Vec<LabeledEdge> = Vec::new();
    let mut bucket_tail: Vec<Option<usize>> = vec![None; order.vars().len()];
    for p in 0..order.vars().len() {
        let v = order.vars()[p];
        let mut items = std::mem::take(&mut buckets[p]);
        // Widest first, stable otherwise.
        items.sort_by_key(|it| std::cmp::Reverse(count_discrete(it.scope())));
        let mut minis: Vec<(BTreeSet<VarId>, Vec<BucketItem>)> = Vec::new();
        for item in items {
            let slot = minis.iter().position(|(scope, _)| {
                let merged: BTreeSet<VarId> = scope.union(item.scope()).copied().collect();
                count_discrete(&merged) <= limit
            });
            match slot {
                Some(s) => {
                    let (scope, list) = &mut minis[s];
                    scope.extend(item.scope().iter().copied());
                    list.push(item);
                }
                None => minis.push((item.scope().clone(), vec![item])),
            }
        }
        let mut previous: Option<usize> = None;
        for (scope, list) in minis {
            let id = nodes.len();
            let mut functions = Vec::new();
            for item in &list {
                match item {
                    BucketItem::Function(f, _) => functions.push(*f),
                    BucketItem::Message(from, label) => edges.push(LabeledEdge {
                        a: *from,
                        b: id,
                        label: label.clone(),
                    }),
                }
            }
            nodes.push(Cluster {
                vars: scope.clone(),
                functions,
            });
            if let Some(prev) = previous {
                edges.push(LabeledEdge {
                    a: prev,
                    b: id,
                    label: BTreeSet::from([v]),
                });
            }
            previous = Some(id);
            let out: BTreeSet<VarId> = scope.iter().copied().filter(|&u| u != v).collect();
            if let Some(dest) = out.iter().map(|u| pos[u]).min() {
                buckets[dest].push(BucketItem::Message(id, out));
            }
        }
        bucket_tail[p] = previous;
    }
    if nodes.is_empty() {
        nodes.push(Cluster {
            vars: BTreeSet::new(),
            functions: vec![],
        });
    }
    nodes[0].functions.extend(constants);

    let mut graph = JoinGraphDecomposition {
        nodes,
        edges,
        adjacency: vec![],
        i_bound,
        discrete: discrete.clone(),
        kept,
        oversized: vec![],
    };
    graph.merge_subsumed();
    graph.connect_components();
    graph.rebuild_adjacency();
    graph.oversized = (0..graph.nodes.len())
        .filter(|&n| count_discrete(&graph.nodes[n].vars) > limit)
        .collect();
    if !graph.oversized.is_empty() {
        log::warn!(
            "join graph has {} node(s) above the i-bound forced by single function scopes",
            graph.oversized.len()
        );
    }
    Ok(graph)
}

impl JoinGraphDecomposition {
    /// Merges a node into an adjacent node whose variables contain its own,
    /// until no such pair remains.
    fn merge_subsumed(&mut self) {
        loop {
            let found = self.edges.iter().find_map(|e| {
                if self.nodes[e.a].vars.is_subset(&self.nodes[e.b].vars) {
                    Some((e.a, e.b))
                } else if self.nodes[e.b].vars.is_subset(&self.nodes[e.a].vars) {
                    Some((e.b, e.a))
                } else {
                    None
                }
            });
            let Some((from, into)) = found else { break };
            let moved = std::mem::take(&mut self.nodes[from].functions);
            self.nodes[into].functions.extend(moved);
            self.nodes[into].functions.sort();
            let mut merged: BTreeMap<(usize, usize), BTreeSet<VarId>> = BTreeMap::new();
            for e in self.edges.drain(..) {
                let a = if e.a == from { into } else { e.a };
                let b = if e.b == from { into } else { e.b };
                if a == b {
                    continue;
                }
                merged.entry((a.min(b), a.max(b))).or_default().extend(e.label);
            }
            // Drop the emptied node and renumber.
            self.nodes.remove(from);
            let fix = |x: usize| if x > from { x - 1 } else { x };
            self.edges = merged
                .into_iter()
                .map(|((a, b), label)| LabeledEdge {
                    a: fix(a),
                    b: fix(b),
                    label,
                })
                .collect();
        }
    }

    fn connect_components(&mut self) {
        let n = self.nodes.len();
        let mut comp = vec![usize::MAX; n];
        let mut ids = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            let c = ids.len();
            ids.push(start);
            let mut stack = vec![start];
            comp[start] = c;
            while let Some(x) = stack.pop() {
                for e in &self.edges {
                    let y = if e.a == x {
                        e.b
                    } else if e.b == x {
                        e.a
                    } else {
                        continue;
                    };
                    if comp[y] == usize::MAX {
                        comp[y] = c;
                        stack.push(y);
                    }
                }
            }
        }
        if ids.len() > 1 {
            let last = n - 1;
            for c in 0..ids.len() {
                if comp[last] != c {
                    let member = (0..n).rev().find(|&x| comp[x] == c).unwrap();
                    self.edges.push(LabeledEdge {
                        a: member.min(last),
                        b: member.max(last),
                        label: BTreeSet::new(),
                    });
                }
            }
        }
    }

    fn rebuild_adjacency(&mut self) {
        self.adjacency = vec![Vec::new(); self.nodes.len()];
        for (k, e) in self.edges.iter().enumerate() {
            self.adjacency[e.a].push((e.b, k));
            self.adjacency[e.b].push((e.a, k));
        }
    }

    pub fn nodes(&self) -> &[Cluster] {
        &self.nodes
    }

    pub fn edges(&self) -> &[LabeledEdge] {
        &self.edges
    }

    /// `(neighbor, edge index)` pairs.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn i_bound(&self) -> usize {
        self.i_bound
    }

    pub fn kept_vars(&self) -> &BTreeSet<VarId> {
        &self.kept
    }

    /// Nodes whose discrete count exceeds `i + 1`.
    pub fn oversized_nodes(&self) -> &[usize] {
        &self.oversized
    }

    pub fn adjusted_width(&self) -> i64 {
        adjusted_width_of(self.nodes.iter().map(|c| &c.vars), &self.discrete)
    }

    /// Connected with `edges = nodes - 1`.
    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.nodes.len()
    }

    /// Longest shortest path between two nodes, in edges.
    pub fn diameter(&self) -> usize {
        let n = self.nodes.len();
        let mut best = 0;
        for s in 0..n {
            let mut dist = vec![usize::MAX; n];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(x) = q.pop_front() {
                for &(y, _) in &self.adjacency[x] {
                    if dist[y] == usize::MAX {
                        dist[y] = dist[x] + 1;
                        q.push_back(y);
                    }
                }
            }
            best = best.max(dist.iter().copied().filter(|&d| d != usize::MAX).max().unwrap_or(0));
        }
        best
    }

    pub fn verify(&self, net: &HybridMixedNetwork) -> std::result::Result<(), String> {
        let labeled: Vec<_> = self.edges.iter().map(|e| (e.a, e.b, e.label.clone())).collect();
        for e in &self.edges {
            let both: BTreeSet<VarId> = self.nodes[e.a].vars.intersection(&self.nodes[e.b].vars).copied().collect();
            if !e.label.is_subset(&both) {
                return Err(format!("label of edge ({}, {}) exceeds the shared variables", e.a, e.b));
            }
        }
        verify_decomposition(net, &self.nodes, &labeled, &self.kept)
    }

    pub fn report(&self, net: &HybridMixedNetwork) -> DecompositionReport {
        let labeled: Vec<_> = self.edges.iter().map(|e| (e.a, e.b, e.label.clone())).collect();
        DecompositionReport::new(net, &self.nodes, &labeled, None, self.adjusted_width())
    }
}

/// Cutset variables whose removal leaves a remainder of adjusted treewidth
/// at most `w`, with the remainder's join tree as certificate.
#[derive(Debug, Clone)]
pub struct WCutset {
    pub cutset: Vec<VarId>,
    pub remainder: BTreeSet<VarId>,
    pub bound: usize,
    pub remainder_order: EliminationOrder,
    pub remainder_tree: JoinTreeDecomposition,
}

/// Greedy w-cutset over the unobserved variables: while the remainder's
/// join tree is too wide, move the discrete variable that sits in the most
/// over-width clusters (ties: higher degree, then lower id) into the cutset.
pub fn select_wcutset(net: &HybridMixedNetwork, observed: &BTreeSet<VarId>, w: usize) -> Result<WCutset> {
    let graph = net.primal_graph();
    let mut cutset: BTreeSet<VarId> = BTreeSet::new();
    let mut remainder: BTreeSet<VarId> = (0..net.len()).map(VarId).filter(|v| !observed.contains(v)).collect();
    loop {
        let order = min_fill_order(net, &graph, &remainder);
        let tree = build_join_tree(net, &order)?;
        if tree.adjusted_width() <= w as i64 {
            return Ok(WCutset {
                cutset: cutset.into_iter().collect(),
                remainder,
                bound: w,
                remainder_order: order,
                remainder_tree: tree,
            });
        }
        let mut counts: BTreeMap<VarId, usize> = BTreeMap::new();
        for node in tree.nodes() {
            let disc: Vec<VarId> = node.vars.iter().copied().filter(|&v| net.is_discrete(v)).collect();
            if disc.len() as i64 - 1 > w as i64 {
                for v in disc {
                    *counts.entry(v).or_default() += 1;
                }
            }
        }
        let degree = |v: VarId| {
            graph
                .neighbors(v.index())
                .iter()
                .filter(|u| remainder.contains(&VarId(**u)))
                .count()
        };
        let pick = counts
            .iter()
            .max_by(|(va, ca), (vb, cb)| {
                ca.cmp(cb)
                    .then(degree(**va).cmp(&degree(**vb)))
                    .then(vb.cmp(va))
            })
            .map(|(v, _)| *v)
            .expect("an over-width cluster has discrete variables");
        cutset.insert(pick);
        remainder.remove(&pick);
    }
}

/// Diagnostic dump of a decomposition; not a stable format.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub nodes: Vec<ReportNode>,
    pub edges: Vec<ReportEdge>,
    pub strong_root: Option<usize>,
    pub adjusted_width: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportNode {
    pub id: usize,
    pub chi: Vec<String>,
    pub psi: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEdge {
    pub a: usize,
    pub b: usize,
    pub label: Vec<String>,
}

impl DecompositionReport {
    fn new(
        net: &HybridMixedNetwork,
        nodes: &[Cluster],
        edges: &[(usize, usize, BTreeSet<VarId>)],
        strong_root: Option<usize>,
        adjusted_width: i64,
    ) -> Self {
        let names = |s: &BTreeSet<VarId>| s.iter().map(|v| net.variable(*v).name.clone()).collect();
        DecompositionReport {
            nodes: nodes
                .iter()
                .enumerate()
                .map(|(id, c)| ReportNode {
                    id,
                    chi: names(&c.vars),
                    psi: c.functions.iter().map(|f| net.function_label(*f)).collect(),
                })
                .collect(),
            edges: edges
                .iter()
                .map(|(a, b, l)| ReportEdge {
                    a: *a,
                    b: *b,
                    label: names(l),
                })
                .collect(),
            strong_root,
            adjusted_width,
        }
    }
}
