use super::{Ast, NodeId, TreeError};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Canonical serialization: length-prefixed kind, label presence byte,
/// length-prefixed label, child count, then child hashes in order.
fn node_hash(kind: &str, label: Option<&str>, child_hashes: impl Iterator<Item = u64>) -> u64 {
    let mut buf = Vec::with_capacity(32);
    buf.extend_from_slice(&(kind.len() as u32).to_le_bytes());
    buf.extend_from_slice(kind.as_bytes());
    match label {
        Some(l) => {
            buf.push(1);
            buf.extend_from_slice(&(l.len() as u32).to_le_bytes());
            buf.extend_from_slice(l.as_bytes());
        }
        None => buf.push(0),
    }
    let mark = buf.len();
    buf.extend_from_slice(&[0; 4]);
    let mut count = 0u32;
    for h in child_hashes {
        buf.extend_from_slice(&h.to_le_bytes());
        count += 1;
    }
    buf[mark..mark + 4].copy_from_slice(&count.to_le_bytes());
    fnv1a64(&buf)
}

/// Structural hash of every subtree, indexed by node id.
pub fn subtree_hashes(ast: &Ast) -> Vec<u64> {
    let mut hashes = vec![0u64; ast.len()];
    for id in ast.postorder() {
        let n = ast.node(id);
        hashes[id.index()] = node_hash(
            n.kind.as_str(),
            n.label.as_deref(),
            ast.children(id).iter().map(|c| hashes[c.index()]),
        );
    }
    hashes
}

/// Hash of the subtree rooted at `node`; depends on kinds, labels and child
/// order only.
pub fn subtree_hash(ast: &Ast, node: NodeId) -> Result<u64, TreeError> {
    if ast.get(node).is_none() {
        return Err(TreeError::UnknownNode(node));
    }
    fn rec(ast: &Ast, id: NodeId) -> u64 {
        let n = ast.node(id);
        node_hash(
            n.kind.as_str(),
            n.label.as_deref(),
            ast.children(id).iter().map(|&c| rec(ast, c)),
        )
    }
    Ok(rec(ast, node))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{parse_source, AstNode, NodeKind};
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn same_text_same_root_hash() {
        let src = "int f(int x){ return x * 2; }";
        let a = parse_source(src, "a.c").unwrap();
        let b = parse_source(src, "b.c").unwrap();
        assert_eq!(
            subtree_hash(&a, NodeId::ROOT),
            subtree_hash(&b, NodeId::ROOT)
        );
    }

    #[test]
    fn different_identifiers_differ() {
        let a = parse_source("int v = x;", "a.c").unwrap();
        let b = parse_source("int v = y;", "a.c").unwrap();
        let leaf = |ast: &Ast| {
            ast.preorder()
                .into_iter()
                .find(|&id| ast.node(id).kind == NodeKind::Identifier)
                .unwrap()
        };
        let ha = subtree_hash(&a, leaf(&a)).unwrap();
        let hb = subtree_hash(&b, leaf(&b)).unwrap();
        assert_ne!(ha, hb);
    }

    #[test]
    fn spans_do_not_matter() {
        let a = parse_source("int f(){return x;}", "a.c").unwrap();
        let b = parse_source("\n\n   int   f ( ) {\n return\n x ; }", "a.c").unwrap();
        assert_eq!(subtree_hashes(&a), subtree_hashes(&b));
        assert_ne!(a.node(NodeId(1)).span, b.node(NodeId(1)).span);
    }

    #[test]
    fn unknown_node() {
        let a = parse_source("", "a.c").unwrap();
        assert_eq!(
            subtree_hash(&a, NodeId(3)),
            Err(TreeError::UnknownNode(NodeId(3)))
        );
    }

    #[test]
    fn all_at_once_matches_single() {
        let a = parse_source("int f(int a){ while (a) { a = a - 1; } return a; }", "a.c").unwrap();
        let all = subtree_hashes(&a);
        for id in a.preorder() {
            assert_eq!(all[id.index()], subtree_hash(&a, id).unwrap());
        }
    }

    // Random small ordered trees over a tiny alphabet, so isomorphic pairs are common.
    #[derive(Clone, Debug)]
    struct T(u8, Option<u8>, Vec<T>);

    fn tree() -> impl Strategy<Value = T> {
        let leaf = (0u8..2, proptest::option::of(0u8..2)).prop_map(|(k, l)| T(k, l, vec![]));
        leaf.prop_recursive(3, 12, 3, |inner| {
            (
                0u8..2,
                proptest::option::of(0u8..2),
                proptest::collection::vec(inner, 0..3),
            )
                .prop_map(|(k, l, c)| T(k, l, c))
        })
    }

    fn to_ast(t: &T) -> Ast {
        let mut nodes = Vec::new();
        let mut children = Vec::new();
        fn rec(t: &T, nodes: &mut Vec<AstNode>, children: &mut Vec<Vec<NodeId>>) -> NodeId {
            let id = NodeId(nodes.len());
            nodes.push(AstNode {
                id,
                kind: NodeKind::Other(format!("K{}", t.0)),
                label: t.1.map(|l| format!("l{l}")),
                span: None,
            });
            children.push(Vec::new());
            for c in &t.2 {
                let cid = rec(c, nodes, children);
                children[id.index()].push(cid);
            }
            id
        }
        rec(t, &mut nodes, &mut children);
        Ast::from_parts("p", nodes, children).unwrap()
    }

    fn isomorphic(a: &Ast, x: NodeId, b: &Ast, y: NodeId) -> bool {
        let (nx, ny) = (a.node(x), b.node(y));
        nx.kind == ny.kind
            && nx.label == ny.label
            && a.children(x).len() == b.children(y).len()
            && a.children(x)
                .iter()
                .zip(b.children(y))
                .all(|(&cx, &cy)| isomorphic(a, cx, b, cy))
    }

    proptest! {
        #[test]
        fn isomorphic_subtrees_hash_equal(t1 in tree(), t2 in tree()) {
            let (a, b) = (to_ast(&t1), to_ast(&t2));
            let (ha, hb) = (subtree_hashes(&a), subtree_hashes(&b));
            for x in a.preorder() {
                for y in b.preorder() {
                    let iso = isomorphic(&a, x, &b, y);
                    if iso {
                        prop_assert_eq!(ha[x.index()], hb[y.index()]);
                    } else {
                        prop_assert_ne!(ha[x.index()], hb[y.index()]);
                    }
                }
            }
        }
    }
}
