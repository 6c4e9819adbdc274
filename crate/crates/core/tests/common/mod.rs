#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use patchscope::alpha::{AlphaAst, Annotation, NodeMapping};
use patchscope::ast::{Ast, AstNode, NodeId, NodeKind};
use patchscope::gat::{init_model, GatConfig, GatModel, GraphInput, Neighborhoods};
use patchscope::linalg::Matrix;
use rand::Rng;

const KINDS: [NodeKind; 7] = [
    NodeKind::Block,
    NodeKind::IfStmt,
    NodeKind::BinaryExpr,
    NodeKind::CallExpr,
    NodeKind::ExprStmt,
    NodeKind::Identifier,
    NodeKind::Literal,
];
const LABELS: [Option<&str>; 6] = [None, Some("a"), Some("b"), Some("c"), Some("+"), Some("1")];

#[derive(Clone, Debug)]
struct Slot {
    kind: NodeKind,
    label: Option<String>,
    children: Vec<usize>,
}

/// Editable tree with stable slot indices; slot 0 is the root.
#[derive(Clone, Debug)]
pub struct DraftTree {
    slots: Vec<Slot>,
}

fn random_content<R: Rng>(rng: &mut R) -> (NodeKind, Option<String>) {
    let kind = KINDS[rng.gen_range(0..KINDS.len())].clone();
    let label = LABELS[rng.gen_range(0..LABELS.len())].map(str::to_string);
    (kind, label)
}

impl DraftTree {
    pub fn random<R: Rng>(rng: &mut R, size: usize) -> DraftTree {
        let mut slots = vec![Slot {
            kind: NodeKind::TranslationUnit,
            label: None,
            children: vec![],
        }];
        for i in 1..size.max(1) {
            let parent = rng.gen_range(0..i);
            let (kind, label) = random_content(rng);
            slots.push(Slot {
                kind,
                label,
                children: vec![],
            });
            slots[parent].children.push(i);
        }
        DraftTree { slots }
    }

    fn live(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            out.push(i);
            stack.extend(self.slots[i].children.iter().rev());
        }
        out
    }

    fn parent_of(&self, node: usize) -> Option<usize> {
        self.live()
            .into_iter()
            .find(|&p| self.slots[p].children.contains(&node))
    }

    fn subtree(&self, node: usize) -> HashSet<usize> {
        let mut out = HashSet::new();
        let mut stack = vec![node];
        while let Some(i) = stack.pop() {
            out.insert(i);
            stack.extend(self.slots[i].children.iter().copied());
        }
        out
    }

    /// Applies one random relabel, delete, insert or move.
    pub fn edit<R: Rng>(&mut self, rng: &mut R) {
        let live = self.live();
        let non_root: Vec<usize> = live.iter().copied().filter(|&i| i != 0).collect();
        match rng.gen_range(0..4) {
            0 if !non_root.is_empty() => {
                let n = non_root[rng.gen_range(0..non_root.len())];
                let (kind, label) = random_content(rng);
                if rng.gen_bool(0.5) {
                    self.slots[n].label = label;
                } else {
                    self.slots[n].kind = kind;
                }
            }
            1 if !non_root.is_empty() => {
                let n = non_root[rng.gen_range(0..non_root.len())];
                let p = self.parent_of(n).unwrap();
                let pos = self.slots[p].children.iter().position(|&c| c == n).unwrap();
                let kids = std::mem::take(&mut self.slots[n].children);
                self.slots[p].children.splice(pos..=pos, kids);
            }
            2 => {
                let p = live[rng.gen_range(0..live.len())];
                let len = self.slots[p].children.len();
                let start = rng.gen_range(0..=len);
                let end = rng.gen_range(start..=len.min(start + 2));
                let adopted: Vec<usize> = self.slots[p].children.drain(start..end).collect();
                let (kind, label) = random_content(rng);
                let id = self.slots.len();
                self.slots.push(Slot {
                    kind,
                    label,
                    children: adopted,
                });
                self.slots[p].children.insert(start, id);
            }
            _ if !non_root.is_empty() => {
                let n = non_root[rng.gen_range(0..non_root.len())];
                let inside = self.subtree(n);
                let targets: Vec<usize> = live
                    .iter()
                    .copied()
                    .filter(|t| !inside.contains(t))
                    .collect();
                let t = targets[rng.gen_range(0..targets.len())];
                let p = self.parent_of(n).unwrap();
                self.slots[p].children.retain(|&c| c != n);
                let pos = rng.gen_range(0..=self.slots[t].children.len());
                self.slots[t].children.insert(pos, n);
            }
            _ => {}
        }
    }

    /// Tree with ids in preorder.
    pub fn to_ast(&self, path: &str) -> Ast {
        let order = self.live();
        let id_of: HashMap<usize, usize> = order.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let nodes = order
            .iter()
            .enumerate()
            .map(|(i, &s)| AstNode {
                id: NodeId(i),
                kind: self.slots[s].kind.clone(),
                label: self.slots[s].label.clone(),
                span: None,
            })
            .collect();
        let children = order
            .iter()
            .map(|&s| {
                self.slots[s]
                    .children
                    .iter()
                    .map(|c| NodeId(id_of[c]))
                    .collect()
            })
            .collect();
        Ast::from_parts(path, nodes, children).expect("draft trees are trees")
    }
}

/// A random tree and a copy changed by `edits` random edits.
pub fn edit_pair<R: Rng>(rng: &mut R, size: usize, edits: usize) -> (Ast, Ast) {
    let base = DraftTree::random(rng, size);
    let mut changed = base.clone();
    for _ in 0..edits {
        changed.edit(rng);
    }
    (base.to_ast("f.c"), changed.to_ast("f.c"))
}

/// Node and edge sets of a change, keyed by input-tree ids.
#[derive(Debug, PartialEq, Eq, Default)]
pub struct ChangeSets {
    pub unchanged_nodes: HashSet<(usize, usize)>,
    pub deleted_nodes: HashSet<usize>,
    pub added_nodes: HashSet<usize>,
    /// Old-side ids.
    pub unchanged_edges: HashSet<(usize, usize)>,
    pub deleted_edges: HashSet<(usize, usize)>,
    /// New-side ids.
    pub added_edges: HashSet<(usize, usize)>,
}

fn edge_set(ast: &Ast) -> HashSet<(usize, usize)> {
    ast.edges()
        .into_iter()
        .map(|(p, c)| (p.index(), c.index()))
        .collect()
}

/// Plain set differences over node and edge sets under `mapping`.
pub fn oracle(old: &Ast, new: &Ast, mapping: &NodeMapping) -> ChangeSets {
    let pairs: HashMap<usize, usize> = mapping
        .pairs()
        .map(|(o, n)| (o.index(), n.index()))
        .collect();
    let image: HashSet<usize> = pairs.values().copied().collect();
    let old_edges = edge_set(old);
    let new_edges = edge_set(new);
    let mapped: HashSet<(usize, usize)> = old_edges
        .iter()
        .filter_map(|(p, c)| Some((*pairs.get(p)?, *pairs.get(c)?)))
        .filter(|e| new_edges.contains(e))
        .collect();
    let unchanged_edges: HashSet<(usize, usize)> = old_edges
        .iter()
        .copied()
        .filter(|(p, c)| matches!((pairs.get(p), pairs.get(c)), (Some(&a), Some(&b)) if mapped.contains(&(a, b))))
        .collect();
    ChangeSets {
        unchanged_nodes: pairs.iter().map(|(&o, &n)| (o, n)).collect(),
        deleted_nodes: (0..old.len()).filter(|o| !pairs.contains_key(o)).collect(),
        added_nodes: (0..new.len()).filter(|n| !image.contains(n)).collect(),
        deleted_edges: old_edges.difference(&unchanged_edges).copied().collect(),
        unchanged_edges,
        added_edges: new_edges.difference(&mapped).copied().collect(),
    }
}

/// The same sets read back from a built graph through node origins.
pub fn graph_sets(g: &AlphaAst) -> ChangeSets {
    let mut s = ChangeSets::default();
    for n in &g.nodes {
        match n.annotation {
            Annotation::Unchanged => {
                s.unchanged_nodes
                    .insert((n.origin.old.unwrap().index(), n.origin.new.unwrap().index()));
            }
            Annotation::Deleted => {
                assert!(n.origin.new.is_none());
                s.deleted_nodes.insert(n.origin.old.unwrap().index());
            }
            Annotation::Added => {
                assert!(n.origin.old.is_none());
                s.added_nodes.insert(n.origin.new.unwrap().index());
            }
        }
    }
    let old_id = |i: usize| g.nodes[i].origin.old.unwrap().index();
    let new_id = |i: usize| g.nodes[i].origin.new.unwrap().index();
    for e in &g.edges {
        let inserted = match e.annotation {
            Annotation::Unchanged => s.unchanged_edges.insert((old_id(e.src), old_id(e.dst))),
            Annotation::Deleted => s.deleted_edges.insert((old_id(e.src), old_id(e.dst))),
            Annotation::Added => s.added_edges.insert((new_id(e.src), new_id(e.dst))),
        };
        assert!(inserted, "edge listed twice");
    }
    s
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
}

/// Connected random graph with `extra` additional undirected edges.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, d: usize, extra: usize) -> GraphInput {
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
    for _ in 0..extra {
        edges.push((rng.gen_range(0..n), rng.gen_range(0..n)));
    }
    GraphInput::new(
        random_matrix(rng, n, d),
        Neighborhoods::from_edges(n, edges),
    )
    .unwrap()
}

/// Model whose parameters are spread wider than the initializer's, so that
/// attention is far from uniform.
pub fn random_model<R: Rng>(rng: &mut R, layers: usize, d_in: usize, d_hidden: usize) -> GatModel {
    let mut m = init_model(&GatConfig {
        layers,
        d_in,
        d_hidden,
        mlp_hidden: 5,
        seed: rng.gen(),
    })
    .unwrap();
    m.params
        .for_each_tensor_mut(|t| t.iter_mut().for_each(|x| *x = rng.gen_range(-1.5..1.5)));
    m
}

/// Same graph with node `i` renamed to `perm[i]`.
pub fn permute_graph(g: &GraphInput, perm: &[usize]) -> GraphInput {
    let n = perm.len();
    let d = g.features.cols();
    let mut feats = Matrix::zeros(n, d);
    let mut lists = vec![Vec::new(); n];
    for (i, &to) in perm.iter().enumerate() {
        feats.row_mut(to).copy_from_slice(g.features.row(i));
        lists[to] = g.neighbors.of(i).iter().map(|&j| perm[j]).collect();
    }
    GraphInput::new(feats, Neighborhoods::from_lists(lists).unwrap()).unwrap()
}
