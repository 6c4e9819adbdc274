//! Two-phase node matching between an old and a new tree.
//!
//! Phase one pairs identical subtrees top-down, tallest first. Phase two
//! walks the old tree bottom-up and pairs still-unmatched inner nodes with a
//! new node of the same kind and label when enough of their children are
//! already paired with each other (Dice coefficient).

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::ast::{subtree_hashes, Ast, NodeId};

/// A one-to-one correspondence between old-tree and new-tree nodes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeMapping {
    old_to_new: BTreeMap<NodeId, NodeId>,
    new_to_old: BTreeMap<NodeId, NodeId>,
}

impl NodeMapping {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a pair. Returns `false` (and leaves the mapping untouched) if
    /// either side is already mapped.
    pub fn insert(&mut self, old: NodeId, new: NodeId) -> bool {
        if self.old_to_new.contains_key(&old) || self.new_to_old.contains_key(&new) {
            return false;
        }
        self.old_to_new.insert(old, new);
        self.new_to_old.insert(new, old);
        true
    }

    pub fn new_of(&self, old: NodeId) -> Option<NodeId> {
        self.old_to_new.get(&old).copied()
    }

    pub fn old_of(&self, new: NodeId) -> Option<NodeId> {
        self.new_to_old.get(&new).copied()
    }

    pub fn contains_old(&self, old: NodeId) -> bool {
        self.old_to_new.contains_key(&old)
    }

    pub fn contains_new(&self, new: NodeId) -> bool {
        self.new_to_old.contains_key(&new)
    }

    /// Pairs sorted by old id.
    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.old_to_new.iter().map(|(&o, &n)| (o, n))
    }

    pub fn len(&self) -> usize {
        self.old_to_new.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_to_new.is_empty()
    }

    pub fn inverse(&self) -> NodeMapping {
        NodeMapping {
            old_to_new: self.new_to_old.clone(),
            new_to_old: self.old_to_new.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchConfig {
    /// Minimum Dice coefficient for a bottom-up pair, in `(0, 1]`.
    pub dice_threshold: f64,
    /// Smallest subtree height considered by the top-down phase.
    pub min_height: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            dice_threshold: 0.5,
            min_height: 1,
        }
    }
}

pub fn match_nodes(old: &Ast, new: &Ast) -> NodeMapping {
    match_nodes_with(old, new, &MatchConfig::default())
}

pub fn match_nodes_with(old: &Ast, new: &Ast, config: &MatchConfig) -> NodeMapping {
    let mut mapping = top_down(old, new, config.min_height);
    bottom_up(old, new, &mut mapping, config.dice_threshold);
    let (ro, rn) = (old.root(), new.root());
    if !mapping.contains_old(ro) && !mapping.contains_new(rn) && same_content(old, ro, new, rn) {
        mapping.insert(ro, rn);
    }
    mapping
}

/// Only the hash-driven top-down phase. Symmetric: swapping the trees yields
/// the inverse mapping.
pub fn top_down_mapping(old: &Ast, new: &Ast) -> NodeMapping {
    top_down(old, new, 1)
}

fn same_content(old: &Ast, o: NodeId, new: &Ast, n: NodeId) -> bool {
    let (a, b) = (old.node(o), new.node(n));
    a.kind == b.kind && a.label == b.label
}

fn isomorphic(old: &Ast, o: NodeId, new: &Ast, n: NodeId) -> bool {
    let (lo, ln) = (old.descendants(o), new.descendants(n));
    lo.len() == ln.len()
        && lo.iter().zip(&ln).all(|(&x, &y)| {
            same_content(old, x, new, y) && old.children(x).len() == new.children(y).len()
        })
}

fn preorder_rank(ast: &Ast) -> Vec<usize> {
    let mut rank = vec![0; ast.len()];
    for (i, id) in ast.preorder().into_iter().enumerate() {
        rank[id.index()] = i;
    }
    rank
}

fn by_height(ast: &Ast, heights: &[usize]) -> BTreeMap<usize, Vec<NodeId>> {
    let mut buckets: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    // preorder traversal keeps every bucket sorted by preorder rank
    for id in ast.preorder() {
        buckets.entry(heights[id.index()]).or_default().push(id);
    }
    buckets
}

fn top_down(old: &Ast, new: &Ast, min_height: usize) -> NodeMapping {
    let (ho, hn) = (old.heights(), new.heights());
    let (hash_o, hash_n) = (subtree_hashes(old), subtree_hashes(new));
    let (bo, bn) = (by_height(old, &ho), by_height(new, &hn));
    let mut mapping = NodeMapping::new();
    for (&height, olds) in bo.iter().rev() {
        if height < min_height.max(1) {
            break;
        }
        let Some(news) = bn.get(&height) else {
            continue;
        };
        let mut pool: HashMap<u64, VecDeque<NodeId>> = HashMap::new();
        for &n in news {
            if !mapping.contains_new(n) {
                pool.entry(hash_n[n.index()]).or_default().push_back(n);
            }
        }
        for &o in olds {
            if mapping.contains_old(o) {
                continue;
            }
            let Some(queue) = pool.get_mut(&hash_o[o.index()]) else {
                continue;
            };
            // a hash collision leaves the candidate in place for later olds
            let Some(pos) = queue.iter().position(|&n| isomorphic(old, o, new, n)) else {
                continue;
            };
            let n = queue.remove(pos).expect("position is in range");
            for (x, y) in old.descendants(o).into_iter().zip(new.descendants(n)) {
                mapping.insert(x, y);
            }
        }
    }
    mapping
}

fn bottom_up(old: &Ast, new: &Ast, mapping: &mut NodeMapping, threshold: f64) {
    let rank_n = preorder_rank(new);
    for o in old.postorder() {
        if mapping.contains_old(o) || old.children(o).is_empty() {
            continue;
        }
        // Any candidate with a positive coefficient is the parent of the
        // partner of one of o's children.
        let mut shared: BTreeMap<(usize, NodeId), usize> = BTreeMap::new();
        for &c in old.children(o) {
            let Some(partner) = mapping.new_of(c) else {
                continue;
            };
            let Some(np) = new.parent(partner) else {
                continue;
            };
            if mapping.contains_new(np) || !same_content(old, o, new, np) {
                continue;
            }
            *shared.entry((rank_n[np.index()], np)).or_default() += 1;
        }
        let n_old = old.children(o).len();
        let mut best: Option<(f64, NodeId)> = None;
        for (&(_, np), &count) in &shared {
            let dice = 2.0 * count as f64 / (n_old + new.children(np).len()) as f64;
            // strict comparison keeps the lowest preorder rank on ties
            if best.is_none_or(|(d, _)| dice > d) {
                best = Some((dice, np));
            }
        }
        if let Some((dice, np)) = best {
            if dice >= threshold {
                mapping.insert(o, np);
            }
        }
    }
}
