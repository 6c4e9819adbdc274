//! Annotated change graphs.
//!
//! An [`AlphaAst`] is the union of an old and a new syntax tree in which
//! matched node pairs are merged into one graph node. Each node and edge is
//! annotated with whether it exists on both sides (unchanged), only in the
//! new version (added) or only in the old version (deleted).

mod linediff;
mod matcher;

use std::collections::{HashSet, VecDeque};
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::ast::{Ast, NodeId, NodeKind};

pub use linediff::{changed_loc, line_changes};
pub use matcher::{match_nodes, match_nodes_with, top_down_mapping, MatchConfig, NodeMapping};

/// Default node budget for one commit graph.
pub const DEFAULT_NODE_CAP: usize = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Annotation {
    Unchanged,
    Added,
    Deleted,
}

impl Annotation {
    pub const ALL: [Annotation; 3] = [
        Annotation::Unchanged,
        Annotation::Added,
        Annotation::Deleted,
    ];

    /// Fixed order `(unchanged, added, deleted)`.
    pub fn one_hot(self) -> [f64; 3] {
        match self {
            Annotation::Unchanged => [1.0, 0.0, 0.0],
            Annotation::Added => [0.0, 1.0, 0.0],
            Annotation::Deleted => [0.0, 0.0, 1.0],
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Annotation::Unchanged => "U",
            Annotation::Added => "A",
            Annotation::Deleted => "D",
        }
    }

    pub fn from_code(code: &str) -> Option<Annotation> {
        match code {
            "U" => Some(Annotation::Unchanged),
            "A" => Some(Annotation::Added),
            "D" => Some(Annotation::Deleted),
            _ => None,
        }
    }

    /// The annotation seen from the opposite direction of the change.
    pub fn reversed(self) -> Annotation {
        match self {
            Annotation::Added => Annotation::Deleted,
            Annotation::Deleted => Annotation::Added,
            Annotation::Unchanged => Annotation::Unchanged,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Which input-tree nodes a graph node stands for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Origin {
    pub old: Option<NodeId>,
    pub new: Option<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaNode {
    pub id: usize,
    pub kind: NodeKind,
    pub label: Option<String>,
    pub annotation: Annotation,
    pub origin: Origin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AlphaEdge {
    pub src: usize,
    pub dst: usize,
    pub annotation: Annotation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaAst {
    pub file_path: String,
    pub nodes: Vec<AlphaNode>,
    pub edges: Vec<AlphaEdge>,
    pub changed_loc: u64,
}

/// Per-annotation counts, indexed `[unchanged, added, deleted]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AnnotationCounts {
    pub nodes: [usize; 3],
    pub edges: [usize; 3],
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AlphaError {
    #[error("invalid mapping: {0}")]
    InvalidMapping(String),
    #[error("a commit needs at least one changed file")]
    EmptyCommit,
}

/// Builds the annotated graph of `old` → `new` under `mapping`.
///
/// Graph ids list every old node in old preorder (merged pairs take the old
/// node's slot), followed by the unmatched new nodes in new preorder. The
/// changed-line count comes from a line diff when both trees carry their
/// source text and otherwise from the start lines of deleted and added nodes.
pub fn build_alpha_ast(
    old: &Ast,
    new: &Ast,
    mapping: &NodeMapping,
) -> Result<AlphaAst, AlphaError> {
    for (o, n) in mapping.pairs() {
        if old.get(o).is_none() {
            return Err(AlphaError::InvalidMapping(format!(
                "old node {o} does not exist"
            )));
        }
        if new.get(n).is_none() {
            return Err(AlphaError::InvalidMapping(format!(
                "new node {n} does not exist"
            )));
        }
    }

    let mut nodes = Vec::with_capacity(old.len() + new.len());
    let mut gid_old = vec![usize::MAX; old.len()];
    let mut gid_new = vec![usize::MAX; new.len()];
    for o in old.preorder() {
        let id = nodes.len();
        gid_old[o.index()] = id;
        let (annotation, source, new_id) = match mapping.new_of(o) {
            Some(n) => {
                gid_new[n.index()] = id;
                (Annotation::Unchanged, new.node(n), Some(n))
            }
            None => (Annotation::Deleted, old.node(o), None),
        };
        nodes.push(AlphaNode {
            id,
            kind: source.kind.clone(),
            label: source.label.clone(),
            annotation,
            origin: Origin {
                old: Some(o),
                new: new_id,
            },
        });
    }
    for n in new.preorder() {
        if mapping.contains_new(n) {
            continue;
        }
        let id = nodes.len();
        gid_new[n.index()] = id;
        let src = new.node(n);
        nodes.push(AlphaNode {
            id,
            kind: src.kind.clone(),
            label: src.label.clone(),
            annotation: Annotation::Added,
            origin: Origin {
                old: None,
                new: Some(n),
            },
        });
    }

    let mut edges = Vec::with_capacity(old.len() + new.len());
    for (p, c) in old.edges() {
        let on_both = match (mapping.new_of(p), mapping.new_of(c)) {
            (Some(np), Some(nc)) => new.parent(nc) == Some(np),
            _ => false,
        };
        edges.push(AlphaEdge {
            src: gid_old[p.index()],
            dst: gid_old[c.index()],
            annotation: if on_both {
                Annotation::Unchanged
            } else {
                Annotation::Deleted
            },
        });
    }
    for (p, c) in new.edges() {
        let on_both = match (mapping.old_of(p), mapping.old_of(c)) {
            (Some(op), Some(oc)) => old.parent(oc) == Some(op),
            _ => false,
        };
        if !on_both {
            edges.push(AlphaEdge {
                src: gid_new[p.index()],
                dst: gid_new[c.index()],
                annotation: Annotation::Added,
            });
        }
    }

    let changed_loc = match (old.source(), new.source()) {
        (Some(a), Some(b)) => changed_loc(a, b),
        _ => span_changed_lines(old, new, &nodes),
    };

    Ok(AlphaAst {
        file_path: new.file_path().to_string(),
        nodes,
        edges,
        changed_loc,
    })
}

fn span_changed_lines(old: &Ast, new: &Ast, nodes: &[AlphaNode]) -> u64 {
    let mut deleted = HashSet::new();
    let mut added = HashSet::new();
    for n in nodes {
        match (n.annotation, n.origin) {
            (Annotation::Deleted, Origin { old: Some(o), .. }) => {
                if let Some(s) = old.node(o).span {
                    deleted.insert(s.start_line);
                }
            }
            (Annotation::Added, Origin { new: Some(x), .. }) => {
                if let Some(s) = new.node(x).span {
                    added.insert(s.start_line);
                }
            }
            _ => {}
        }
    }
    (deleted.len() + added.len()) as u64
}

/// Matches and builds in one step.
pub fn diff_trees(old: &Ast, new: &Ast) -> AlphaAst {
    let mapping = match_nodes(old, new);
    build_alpha_ast(old, new, &mapping).expect("matcher output is a valid mapping")
}

/// Joins per-file graphs under one `CommitRoot` node.
///
/// Files are ordered by path. The root and its edges to each file root are
/// unchanged; changed line counts are summed.
pub fn merge_commit_graph(mut per_file: Vec<AlphaAst>) -> Result<AlphaAst, AlphaError> {
    if per_file.is_empty() {
        return Err(AlphaError::EmptyCommit);
    }
    per_file.sort_by(|a, b| a.file_path.cmp(&b.file_path));
    let total: usize = per_file.iter().map(|g| g.nodes.len()).sum();
    let mut nodes = Vec::with_capacity(total + 1);
    let mut edges = Vec::new();
    nodes.push(AlphaNode {
        id: 0,
        kind: NodeKind::CommitRoot,
        label: None,
        annotation: Annotation::Unchanged,
        origin: Origin::default(),
    });
    let mut changed = 0;
    for g in per_file {
        let offset = nodes.len();
        edges.push(AlphaEdge {
            src: 0,
            dst: offset,
            annotation: Annotation::Unchanged,
        });
        nodes.extend(g.nodes.into_iter().map(|mut n| {
            n.id += offset;
            n
        }));
        edges.extend(g.edges.into_iter().map(|e| AlphaEdge {
            src: e.src + offset,
            dst: e.dst + offset,
            annotation: e.annotation,
        }));
        changed += g.changed_loc;
    }
    Ok(AlphaAst {
        file_path: String::new(),
        nodes,
        edges,
        changed_loc: changed,
    })
}

impl AlphaAst {
    pub fn counts(&self) -> AnnotationCounts {
        let mut c = AnnotationCounts::default();
        for n in &self.nodes {
            c.nodes[n.annotation.index()] += 1;
        }
        for e in &self.edges {
            c.edges[e.annotation.index()] += 1;
        }
        c
    }

    pub fn added_nodes(&self) -> impl Iterator<Item = &AlphaNode> {
        self.nodes
            .iter()
            .filter(|n| n.annotation == Annotation::Added)
    }

    pub fn deleted_nodes(&self) -> impl Iterator<Item = &AlphaNode> {
        self.nodes
            .iter()
            .filter(|n| n.annotation == Annotation::Deleted)
    }

    /// Drops the unchanged nodes farthest (in undirected hops) from any
    /// change until at most `cap` nodes remain. Ids are compacted in their
    /// original order; edges to dropped nodes disappear.
    pub fn truncate_to_cap(&self, cap: usize) -> AlphaAst {
        if self.nodes.len() <= cap {
            return self.clone();
        }
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            adj[e.src].push(e.dst);
            adj[e.dst].push(e.src);
        }
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        let seed = |i: usize, dist: &mut Vec<usize>, queue: &mut VecDeque<usize>| {
            if dist[i] != 0 {
                dist[i] = 0;
                queue.push_back(i);
            }
        };
        for node in &self.nodes {
            if node.annotation != Annotation::Unchanged {
                seed(node.id, &mut dist, &mut queue);
            }
        }
        for e in &self.edges {
            if e.annotation != Annotation::Unchanged {
                seed(e.src, &mut dist, &mut queue);
                seed(e.dst, &mut dist, &mut queue);
            }
        }
        if queue.is_empty() {
            seed(0, &mut dist, &mut queue);
        }
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if dist[j] == usize::MAX {
                    dist[j] = dist[i] + 1;
                    queue.push_back(j);
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (dist[i], i));
        let mut keep = vec![false; n];
        for &i in &order[..cap] {
            keep[i] = true;
        }
        let mut remap = vec![usize::MAX; n];
        let mut nodes = Vec::with_capacity(cap);
        for node in &self.nodes {
            if keep[node.id] {
                remap[node.id] = nodes.len();
                let mut node = node.clone();
                node.id = nodes.len();
                nodes.push(node);
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| keep[e.src] && keep[e.dst])
            .map(|e| AlphaEdge {
                src: remap[e.src],
                dst: remap[e.dst],
                annotation: e.annotation,
            })
            .collect();
        AlphaAst {
            file_path: self.file_path.clone(),
            nodes,
            edges,
            changed_loc: self.changed_loc,
        }
    }

    pub fn to_json_value(&self) -> Value {
        let nodes: Vec<Value> = self
            .nodes
            .iter()
            .map(|n| {
                json!({
                    "id": n.id,
                    "kind": n.kind.as_str(),
                    "label": n.label,
                    "ann": n.annotation.code(),
                })
            })
            .collect();
        let edges: Vec<Value> = self
            .edges
            .iter()
            .map(|e| json!([e.src, e.dst, e.annotation.code()]))
            .collect();
        json!({ "nodes": nodes, "edges": edges, "changed_loc": self.changed_loc })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_json_value()).expect("graph values always serialize")
    }

    /// Graphviz rendering: added in green, deleted in red, unchanged in gray.
    pub fn to_dot(&self) -> String {
        fn color(a: Annotation) -> &'static str {
            match a {
                Annotation::Added => "#2ca02c",     // green
                Annotation::Deleted => "#d62728",   // red
                Annotation::Unchanged => "#7f7f7f", // gray
            }
        }
        fn escape(s: &str) -> String {
            s.replace('\\', "\\\\").replace('"', "\\\"")
        }
        let mut out =
            String::from("digraph alpha_ast {\n  node [shape=box, fontname=\"Helvetica\"];\n");
        for n in &self.nodes {
            let label = match &n.label {
                Some(l) => format!("{}\\n{}", n.kind, escape(l)),
                None => n.kind.to_string(),
            };
            let _ = writeln!(
                out,
                "  n{} [label=\"{}\", color=\"{c}\", fontcolor=\"{c}\"]; // {}",
                n.id,
                label,
                n.annotation.code(),
                c = color(n.annotation)
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  n{} -> n{} [color=\"{}\"]; // {}",
                e.src,
                e.dst,
                color(e.annotation),
                e.annotation.code()
            );
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::parse_source;

    fn parse(s: &str) -> Ast {
        parse_source(s, "f.c").unwrap()
    }

    const OLD_LOOP: &str = "void f(){\n  for (i = 0; i < BUF_SIZE; i++)\n    process(buf[i]);\n}\n";
    const NEW_LOOP: &str =
        "void f(){\n  for (i = 0; i < 2*BUF_SIZE; i++)\n    process(buf[i]);\n}\n";

    #[test]
    fn identical_versions_are_unchanged() {
        let a = parse(OLD_LOOP);
        let g = diff_trees(&a, &a.clone());
        let c = g.counts();
        assert_eq!(c.nodes, [a.len(), 0, 0]);
        assert_eq!(c.edges, [a.len() - 1, 0, 0]);
        assert_eq!(g.changed_loc, 0);
    }

    #[test]
    fn empty_old_makes_everything_added() {
        let a = parse("");
        let b = parse(NEW_LOOP);
        let g = diff_trees(&a, &b);
        let c = g.counts();
        assert_eq!(c.nodes, [1, b.len() - 1, 0]);
        assert_eq!(c.edges, [0, b.len() - 1, 0]);
        assert_eq!(g.changed_loc, 4);
    }

    #[test]
    fn scaled_loop_bound() {
        let (old, new) = (parse(OLD_LOOP), parse(NEW_LOOP));
        let g = diff_trees(&old, &new);
        let describe = |id: usize| {
            let n = &g.nodes[id];
            format!("{}:{}", n.kind, n.label.as_deref().unwrap_or(""))
        };
        let added: Vec<String> = g.added_nodes().map(|n| describe(n.id)).collect();
        assert_eq!(added, vec!["BinaryExpr:*", "Literal:2"]);
        assert_eq!(g.deleted_nodes().count(), 0);
        let mut added_edges: Vec<(String, String)> = g
            .edges
            .iter()
            .filter(|e| e.annotation == Annotation::Added)
            .map(|e| (describe(e.src), describe(e.dst)))
            .collect();
        added_edges.sort();
        assert_eq!(
            added_edges,
            vec![
                ("BinaryExpr:*".into(), "Identifier:BUF_SIZE".into()),
                ("BinaryExpr:*".into(), "Literal:2".into()),
                ("BinaryExpr:<".into(), "BinaryExpr:*".into()),
            ]
        );
        let deleted_edges: Vec<(String, String)> = g
            .edges
            .iter()
            .filter(|e| e.annotation == Annotation::Deleted)
            .map(|e| (describe(e.src), describe(e.dst)))
            .collect();
        assert_eq!(
            deleted_edges,
            vec![("BinaryExpr:<".into(), "Identifier:BUF_SIZE".into())]
        );
        let buf = g
            .nodes
            .iter()
            .find(|n| n.label.as_deref() == Some("BUF_SIZE"))
            .unwrap();
        assert_eq!(buf.annotation, Annotation::Unchanged);
        assert_eq!(g.changed_loc, 2);
    }

    #[test]
    fn invalid_mapping_is_reported() {
        let a = parse("int x;");
        let mut m = NodeMapping::new();
        m.insert(NodeId(0), NodeId(99));
        assert!(matches!(
            build_alpha_ast(&a, &a, &m),
            Err(AlphaError::InvalidMapping(_))
        ));
    }

    #[test]
    fn merge_adds_a_root_and_sums_loc() {
        let a = diff_trees(&parse("int x;"), &parse("int x;\nint y;"));
        let mut b = diff_trees(&parse("int z;"), &parse("int z;"));
        b.file_path = "a.c".into();
        let (na, nb, la) = (a.nodes.len(), b.nodes.len(), a.changed_loc);
        let single = merge_commit_graph(vec![a.clone()]).unwrap();
        assert_eq!(single.nodes.len(), na + 1);
        assert_eq!(single.nodes[0].kind, NodeKind::CommitRoot);
        let merged = merge_commit_graph(vec![a, b]).unwrap();
        assert_eq!(merged.nodes.len(), na + nb + 1);
        assert_eq!(merged.changed_loc, la);
        assert_eq!(la, 1);
        // "a.c" sorts before "f.c" and comes first
        assert_eq!(
            merged.edges[0],
            AlphaEdge {
                src: 0,
                dst: 1,
                annotation: Annotation::Unchanged
            }
        );
        assert_eq!(merged.edges[1 + nb - 1].dst, 1 + nb);
        assert!(merged.nodes.iter().enumerate().all(|(i, n)| n.id == i));
        assert_eq!(merge_commit_graph(vec![]), Err(AlphaError::EmptyCommit));
    }

    #[test]
    fn span_fallback_counts_lines() {
        let old = parse(OLD_LOOP);
        let new = parse(NEW_LOOP);
        let strip = |a: &Ast| crate::ast::ingest_ast_json(&crate::ast::export_ast_json(a)).unwrap();
        let g = build_alpha_ast(&strip(&old), &strip(&new), &match_nodes(&old, &new)).unwrap();
        // both added nodes start on line 2
        assert_eq!(g.changed_loc, 1);
    }

    #[test]
    fn truncation_keeps_nodes_near_changes() {
        let old = parse("int a(){ return 1; }\nint b(){ return 2; }\nint c(){ x = 1; }");
        let new = parse("int a(){ return 1; }\nint b(){ return 2; }\nint c(){ x = 1; y = 2; }");
        let g = diff_trees(&old, &new);
        let added = g.added_nodes().count();
        let t = g.truncate_to_cap(added + 3);
        assert_eq!(t.nodes.len(), added + 3);
        assert_eq!(t.added_nodes().count(), added);
        assert!(t.nodes.iter().all(|n| n.kind != NodeKind::ReturnStmt));
        assert!(t
            .edges
            .iter()
            .all(|e| e.src < t.nodes.len() && e.dst < t.nodes.len()));
        assert_eq!(g.truncate_to_cap(10_000), g);
    }

    #[test]
    fn exports() {
        let g = diff_trees(&parse(OLD_LOOP), &parse(NEW_LOOP));
        let v: Value = serde_json::from_str(&g.to_json()).unwrap();
        assert_eq!(v["changed_loc"], 2);
        assert_eq!(v["nodes"].as_array().unwrap().len(), g.nodes.len());
        assert_eq!(v["edges"][0].as_array().unwrap().len(), 3);
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph alpha_ast {"));
        assert!(dot.contains(
            "[label=\"BinaryExpr\\n*\", color=\"#2ca02c\", fontcolor=\"#2ca02c\"]; // A"
        ));
        assert!(dot.trim_end().ends_with('}'));
    }
}
