//! AST-JSON interchange:
//!
//! ```text
//! {"file_path": str,
//!  "nodes": [{"id": int, "kind": str, "label": str|null, "span": [int,int,int,int]|null}],
//!  "children": {"<id>": [int, ...]}}
//! ```
//!
//! `file_path`, `label`, `span` and `children` entries are optional on
//! input. Export always writes every field, nodes sorted by id and children
//! keys in ascending numeric order.

use serde_json::{json, Map, Value};

use super::{Ast, AstNode, NodeId, NodeKind, Span, TreeError};

#[derive(Debug, thiserror::Error)]
pub enum AstJsonError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("children relation is not a tree: {0}")]
    Cycle(String),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> AstJsonError {
    AstJsonError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

pub fn ingest_ast_json(doc: &str) -> Result<Ast, AstJsonError> {
    let value: Value = serde_json::from_str(doc)?;
    ast_from_value(&value)
}

/// Validates an already-parsed document, e.g. the `{"ast": ...}` entry of a
/// dataset line.
pub fn ast_from_value(value: &Value) -> Result<Ast, AstJsonError> {
    let obj = value
        .as_object()
        .ok_or_else(|| schema("$", "expected an object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "file_path" | "nodes" | "children") {
            return Err(schema(format!("$.{key}"), "unknown field"));
        }
    }
    let file_path = match obj.get("file_path") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(schema("$.file_path", "expected a string")),
    };
    let raw_nodes = obj
        .get("nodes")
        .ok_or_else(|| schema("$.nodes", "missing"))?
        .as_array()
        .ok_or_else(|| schema("$.nodes", "expected an array"))?;
    if raw_nodes.is_empty() {
        return Err(schema(
            "$.nodes",
            "at least one node (the root) is required",
        ));
    }
    let n = raw_nodes.len();
    let mut slots: Vec<Option<AstNode>> = vec![None; n];
    for (i, raw) in raw_nodes.iter().enumerate() {
        let path = format!("$.nodes[{i}]");
        let node = node_from_value(raw, &path)?;
        let idx = node.id.index();
        if idx >= n {
            return Err(schema(
                format!("{path}.id"),
                format!("id {idx} out of range 0..{n}"),
            ));
        }
        if slots[idx].is_some() {
            return Err(schema(format!("{path}.id"), format!("duplicate id {idx}")));
        }
        slots[idx] = Some(node);
    }
    let nodes: Vec<AstNode> = slots
        .into_iter()
        .map(|s| s.expect("ids are dense"))
        .collect();

    let mut children = vec![Vec::new(); n];
    match obj.get("children") {
        None | Some(Value::Null) => {}
        Some(Value::Object(map)) => {
            for (key, list) in map {
                let path = format!("$.children[\"{key}\"]");
                let parent: usize = key
                    .parse()
                    .map_err(|_| schema(&path, "key is not a node id"))?;
                if parent >= n {
                    return Err(schema(&path, format!("unknown node {parent}")));
                }
                let list = list
                    .as_array()
                    .ok_or_else(|| schema(&path, "expected an array of ids"))?;
                for (j, c) in list.iter().enumerate() {
                    let cid = c
                        .as_u64()
                        .ok_or_else(|| schema(format!("{path}[{j}]"), "expected a node id"))?
                        as usize;
                    if cid >= n {
                        return Err(schema(
                            format!("{path}[{j}]"),
                            format!("unknown node {cid}"),
                        ));
                    }
                    children[parent].push(NodeId(cid));
                }
            }
        }
        Some(_) => return Err(schema("$.children", "expected an object")),
    }
    Ast::from_parts(file_path, nodes, children).map_err(|e| match e {
        TreeError::UnknownNode(id) => schema("$.children", format!("unknown node {id}")),
        TreeError::NotATree(msg) => AstJsonError::Cycle(msg),
    })
}

fn node_from_value(raw: &Value, path: &str) -> Result<AstNode, AstJsonError> {
    let obj = raw
        .as_object()
        .ok_or_else(|| schema(path, "expected an object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "id" | "kind" | "label" | "span") {
            return Err(schema(format!("{path}.{key}"), "unknown field"));
        }
    }
    let id = obj
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| schema(format!("{path}.id"), "expected a non-negative integer"))?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| schema(format!("{path}.kind"), "expected a string"))?;
    if kind.is_empty() {
        return Err(schema(format!("{path}.kind"), "empty kind"));
    }
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(schema(format!("{path}.label"), "expected a string or null")),
    };
    let span = match obj.get("span") {
        None | Some(Value::Null) => None,
        Some(Value::Array(xs)) if xs.len() == 4 => {
            let mut v = [0u32; 4];
            for (k, x) in xs.iter().enumerate() {
                v[k] = x
                    .as_u64()
                    .and_then(|x| u32::try_from(x).ok())
                    .ok_or_else(|| {
                        schema(format!("{path}.span[{k}]"), "expected a line/column number")
                    })?;
            }
            Some(Span::new(v[0], v[1], v[2], v[3]))
        }
        Some(_) => {
            return Err(schema(
                format!("{path}.span"),
                "expected [start_line, start_col, end_line, end_col] or null",
            ))
        }
    };
    Ok(AstNode {
        id: NodeId(id as usize),
        kind: NodeKind::from_name(kind),
        label,
        span,
    })
}

pub fn ast_to_value(ast: &Ast) -> Value {
    let nodes: Vec<Value> = ast
        .nodes()
        .iter()
        .map(|n| {
            json!({
                "id": n.id.index(),
                "kind": n.kind.as_str(),
                "label": n.label,
                "span": n.span.map(|s| [s.start_line, s.start_col, s.end_line, s.end_col]),
            })
        })
        .collect();
    let mut children = Map::new();
    for n in ast.nodes() {
        let kids: Vec<usize> = ast.children(n.id).iter().map(|c| c.index()).collect();
        children.insert(n.id.index().to_string(), json!(kids));
    }
    json!({
        "file_path": ast.file_path(),
        "nodes": nodes,
        "children": children,
    })
}

pub fn export_ast_json(ast: &Ast) -> String {
    serde_json::to_string(&ast_to_value(ast)).expect("AST values always serialize")
}
