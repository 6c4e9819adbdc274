//! Ordered syntax trees for single file versions.
//!
//! An [`Ast`] is produced either by the built-in C-subset parser
//! ([`parse_source`]) or by ingesting a tree from another tool through the
//! AST-JSON format ([`ingest_ast_json`]). Trees are immutable once built.

mod hash;
mod json;
mod lexer;
mod parser;

use std::fmt;
use std::sync::Arc;

pub use hash::{fnv1a64, subtree_hash, subtree_hashes};
pub use json::{ast_from_value, ast_to_value, export_ast_json, ingest_ast_json, AstJsonError};
pub use parser::{parse_source, SyntaxError};

/// Dense node index, unique within one [`Ast`]. The root is always `NodeId(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

macro_rules! node_kinds {
    ($($variant:ident),* $(,)?) => {
        /// Syntactic category of a node.
        ///
        /// The closed set covers everything the C-subset parser emits.
        /// Kinds coming from external trees that are not in the set are
        /// kept verbatim in [`NodeKind::Other`].
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum NodeKind {
            $($variant,)*
            Other(String),
        }

        impl NodeKind {
            pub fn as_str(&self) -> &str {
                match self {
                    $(NodeKind::$variant => stringify!($variant),)*
                    NodeKind::Other(s) => s,
                }
            }

            pub fn from_name(name: &str) -> NodeKind {
                match name {
                    $(stringify!($variant) => NodeKind::$variant,)*
                    other => NodeKind::Other(other.to_string()),
                }
            }
        }
    };
}

node_kinds!(
    TranslationUnit,
    FunctionDef,
    ParamList,
    Param,
    TypeName,
    DeclStmt,
    VarDecl,
    Block,
    IfStmt,
    WhileStmt,
    DoWhileStmt,
    ForStmt,
    ReturnStmt,
    BreakStmt,
    ContinueStmt,
    ExprStmt,
    EmptyStmt,
    AssignExpr,
    ConditionalExpr,
    BinaryExpr,
    UnaryExpr,
    PostfixExpr,
    CastExpr,
    CallExpr,
    ArgList,
    IndexExpr,
    MemberExpr,
    SizeofExpr,
    InitList,
    Identifier,
    Literal,
    CommitRoot,
);

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Source region `(start_line, start_col, end_line, end_col)`, 1-based and
/// inclusive of the last character.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl Span {
    pub fn new(start_line: u32, start_col: u32, end_line: u32, end_col: u32) -> Self {
        Span {
            start_line,
            start_col,
            end_line,
            end_col,
        }
    }

    /// Smallest span covering both.
    pub fn cover(self, other: Span) -> Span {
        let (start_line, start_col) =
            (self.start_line, self.start_col).min((other.start_line, other.start_col));
        let (end_line, end_col) =
            (self.end_line, self.end_col).max((other.end_line, other.end_col));
        Span {
            start_line,
            start_col,
            end_line,
            end_col,
        }
    }

    pub fn contains(&self, other: &Span) -> bool {
        (self.start_line, self.start_col) <= (other.start_line, other.start_col)
            && (other.end_line, other.end_col) <= (self.end_line, self.end_col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: Option<String>,
    pub span: Option<Span>,
}

/// A rooted, ordered tree for one version of one file.
///
/// Equality is structural: it compares paths, nodes and child lists, and
/// ignores the retained source text.
#[derive(Clone, Debug)]
pub struct Ast {
    file_path: String,
    nodes: Vec<AstNode>,
    children: Vec<Vec<NodeId>>,
    parents: Vec<Option<NodeId>>,
    source: Option<Arc<str>>,
}

impl PartialEq for Ast {
    fn eq(&self, other: &Self) -> bool {
        self.file_path == other.file_path
            && self.nodes == other.nodes
            && self.children == other.children
    }
}

impl Eq for Ast {}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("node {0} is referenced but does not exist")]
    UnknownNode(NodeId),
    #[error("children relation is not a tree: {0}")]
    NotATree(String),
}

impl Ast {
    /// Builds a tree from nodes indexed by id and per-node child lists.
    ///
    /// `nodes[i].id` must equal `i`. The children relation must form a single
    /// tree rooted at node 0.
    pub fn from_parts(
        file_path: impl Into<String>,
        nodes: Vec<AstNode>,
        children: Vec<Vec<NodeId>>,
    ) -> Result<Ast, TreeError> {
        let n = nodes.len();
        if n == 0 {
            return Err(TreeError::NotATree("tree has no nodes".into()));
        }
        if children.len() != n {
            return Err(TreeError::NotATree(format!(
                "{} child lists for {} nodes",
                children.len(),
                n
            )));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id.index() != i {
                return Err(TreeError::NotATree(format!(
                    "node at position {i} has id {}",
                    node.id
                )));
            }
        }
        let mut parents: Vec<Option<NodeId>> = vec![None; n];
        for (p, kids) in children.iter().enumerate() {
            for &c in kids {
                if c.index() >= n {
                    return Err(TreeError::UnknownNode(c));
                }
                if c == NodeId::ROOT {
                    return Err(TreeError::NotATree("root listed as a child".into()));
                }
                if let Some(prev) = parents[c.index()] {
                    return Err(TreeError::NotATree(format!(
                        "node {c} has two parents ({prev} and {p})"
                    )));
                }
                parents[c.index()] = Some(NodeId(p));
            }
        }
        // Single parent everywhere; reachability from the root rules out cycles.
        let mut seen = vec![false; n];
        let mut stack = vec![NodeId::ROOT];
        let mut count = 0;
        while let Some(id) = stack.pop() {
            if seen[id.index()] {
                return Err(TreeError::NotATree(format!("node {id} reached twice")));
            }
            seen[id.index()] = true;
            count += 1;
            stack.extend(children[id.index()].iter().copied());
        }
        if count != n {
            let orphan = seen.iter().position(|s| !s).unwrap_or(0);
            return Err(TreeError::NotATree(format!(
                "node {orphan} is not reachable from the root (cycle or orphan)"
            )));
        }
        Ok(Ast {
            file_path: file_path.into(),
            nodes,
            children,
            parents,
            source: None,
        })
    }

    pub(crate) fn with_source(mut self, source: &str) -> Ast {
        self.source = Some(Arc::from(source));
        self
    }

    pub fn file_path(&self) -> &str {
        &self.file_path
    }

    /// The source text this tree was parsed from, if known.
    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[AstNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &AstNode {
        &self.nodes[id.index()]
    }

    pub fn get(&self, id: NodeId) -> Option<&AstNode> {
        self.nodes.get(id.index())
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.index()]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents[id.index()]
    }

    pub fn root(&self) -> NodeId {
        NodeId::ROOT
    }

    /// All parent→child pairs, in preorder of the parent.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        self.preorder()
            .into_iter()
            .flat_map(|p| self.children(p).iter().map(move |&c| (p, c)))
            .collect()
    }

    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![NodeId::ROOT];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.children(id).iter().rev().copied());
        }
        out
    }

    pub fn postorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![(NodeId::ROOT, false)];
        while let Some((id, expanded)) = stack.pop() {
            if expanded {
                out.push(id);
            } else {
                stack.push((id, true));
                stack.extend(self.children(id).iter().rev().map(|&c| (c, false)));
            }
        }
        out
    }

    /// Height of every subtree; leaves have height 1.
    pub fn heights(&self) -> Vec<usize> {
        let mut h = vec![1usize; self.len()];
        for id in self.postorder() {
            let best = self
                .children(id)
                .iter()
                .map(|c| h[c.index()])
                .max()
                .unwrap_or(0);
            h[id.index()] = best + 1;
        }
        h
    }

    /// Every node in the subtree rooted at `id`, in preorder.
    pub fn descendants(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.children(n).iter().rev().copied());
        }
        out
    }
}
