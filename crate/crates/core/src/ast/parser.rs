//! Recursive-descent parser for a C subset.
//!
//! Supported: function definitions and prototypes, global and local
//! declarations (scalars, pointers, arrays, brace initializers), block, if,
//! while, do-while, for, return, break, continue, expression statements, and
//! the C expression grammar with standard precedence (assignment, `?:`,
//! logical, bitwise, relational, shift, additive, multiplicative, unary,
//! casts to keyword types, `sizeof`, calls, indexing, member access,
//! postfix increment). No preprocessor.

use std::fmt;

use super::lexer::{tokenize, Tok, Token};
use super::{Ast, AstNode, NodeId, NodeKind, Span};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub struct SyntaxError {
    pub line: u32,
    pub col: u32,
    pub expected: Vec<String>,
    pub found: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at {}:{}: expected ", self.line, self.col)?;
        match self.expected.as_slice() {
            [one] => write!(f, "{one}")?,
            many => write!(f, "one of {}", many.join(", "))?,
        }
        write!(f, ", found {}", self.found)
    }
}

/// Parses `text` into an [`Ast`] rooted at a `TranslationUnit`.
///
/// Node ids are assigned in preorder, so identical input always yields an
/// identical tree.
pub fn parse_source(text: &str, path: &str) -> Result<Ast, SyntaxError> {
    let tokens = tokenize(text)?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
    };
    let root = p.translation_unit()?;
    Ok(flatten(root, path).with_source(text))
}

struct PNode {
    kind: NodeKind,
    label: Option<String>,
    span: Span,
    children: Vec<PNode>,
}

impl PNode {
    fn new(kind: NodeKind, label: Option<String>, span: Span, children: Vec<PNode>) -> PNode {
        PNode {
            kind,
            label,
            span,
            children,
        }
    }

    fn leaf(kind: NodeKind, label: impl Into<String>, span: Span) -> PNode {
        PNode::new(kind, Some(label.into()), span, Vec::new())
    }
}

fn flatten(root: PNode, path: &str) -> Ast {
    let mut nodes = Vec::new();
    let mut children: Vec<Vec<NodeId>> = Vec::new();
    // (node, parent) in preorder
    let mut stack: Vec<(PNode, Option<usize>)> = vec![(root, None)];
    while let Some((pn, parent)) = stack.pop() {
        let id = nodes.len();
        nodes.push(AstNode {
            id: NodeId(id),
            kind: pn.kind,
            label: pn.label,
            span: Some(pn.span),
        });
        children.push(Vec::new());
        if let Some(p) = parent {
            children[p].push(NodeId(id));
        }
        for c in pn.children.into_iter().rev() {
            stack.push((c, Some(id)));
        }
    }
    Ast::from_parts(path, nodes, children).expect("parser output is a tree")
}

const TYPE_KEYWORDS: &[&str] = &[
    "void", "char", "short", "int", "long", "float", "double", "signed", "unsigned", "bool",
];
const QUALIFIERS: &[&str] = &[
    "const", "volatile", "static", "extern", "inline", "register",
];
const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "<<=", ">>=", "&=", "|=", "^=",
];
const BINARY_LEVELS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["|"],
    &["^"],
    &["&"],
    &["==", "!="],
    &["<", ">", "<=", ">="],
    &["<<", ">>"],
    &["+", "-"],
    &["*", "/", "%"],
];

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

fn tok_span(t: &Token) -> Span {
    Span::new(t.line, t.col, t.end_line, t.end_col)
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn peek_at(&self, off: usize) -> &Tok {
        &self.toks[(self.pos + off).min(self.toks.len() - 1)].tok
    }

    fn advance(&mut self) -> Token {
        let t = self.peek().clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(&self.peek().tok, Tok::Punct(q) if *q == p)
    }

    fn at_keyword(&self, k: &str) -> bool {
        matches!(&self.peek().tok, Tok::Keyword(q) if *q == k)
    }

    fn eat_punct(&mut self, p: &str) -> Option<Token> {
        self.at_punct(p).then(|| self.advance())
    }

    fn error(&self, expected: &[&str]) -> SyntaxError {
        let t = self.peek();
        SyntaxError {
            line: t.line,
            col: t.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.describe(),
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<Token, SyntaxError> {
        match self.eat_punct(p) {
            Some(t) => Ok(t),
            None => Err(self.error(&[&format!("`{p}`")])),
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Span), SyntaxError> {
        match &self.peek().tok {
            Tok::Ident(name) => {
                let name = name.clone();
                let t = self.advance();
                Ok((name, tok_span(&t)))
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn prev_span(&self) -> Span {
        tok_span(&self.toks[self.pos.saturating_sub(1)])
    }

    fn translation_unit(&mut self) -> Result<PNode, SyntaxError> {
        let mut items = Vec::new();
        while self.peek().tok != Tok::Eof {
            items.push(self.external_decl()?);
        }
        let span = items
            .iter()
            .fold(Span::new(1, 1, 1, 1), |acc, n| acc.cover(n.span));
        Ok(PNode::new(NodeKind::TranslationUnit, None, span, items))
    }

    fn starts_type(&self) -> bool {
        match &self.peek().tok {
            Tok::Keyword(k) => {
                TYPE_KEYWORDS.contains(k)
                    || QUALIFIERS.contains(k)
                    || matches!(*k, "struct" | "union" | "enum")
            }
            _ => false,
        }
    }

    /// Statement-level lookahead for declarations introduced by a typedef
    /// name: `T x`, `T *x =`, `T **x;` and so on.
    fn starts_declaration(&self) -> bool {
        if self.starts_type() {
            return true;
        }
        if !matches!(self.peek().tok, Tok::Ident(_)) {
            return false;
        }
        let mut off = 1;
        while matches!(self.peek_at(off), Tok::Punct("*")) {
            off += 1;
        }
        match self.peek_at(off) {
            Tok::Ident(_) => {
                off == 1 || matches!(self.peek_at(off + 1), Tok::Punct("=" | ";" | "," | "["))
            }
            _ => false,
        }
    }

    /// Parses specifiers (and a trailing run of `*`) into a label such as
    /// `"const char*"`.
    fn type_spec(&mut self) -> Result<(String, Span), SyntaxError> {
        let start = tok_span(self.peek());
        let mut parts: Vec<String> = Vec::new();
        let mut has_base = false;
        loop {
            match self.peek().tok.clone() {
                Tok::Keyword(k) if QUALIFIERS.contains(&k) => {
                    self.advance();
                    parts.push(k.to_string());
                }
                Tok::Keyword(k) if TYPE_KEYWORDS.contains(&k) => {
                    self.advance();
                    parts.push(k.to_string());
                    has_base = true;
                }
                Tok::Keyword(k @ ("struct" | "union" | "enum")) => {
                    self.advance();
                    let (name, _) = self.expect_ident()?;
                    parts.push(format!("{k} {name}"));
                    has_base = true;
                }
                Tok::Ident(name) if !has_base => {
                    self.advance();
                    parts.push(name);
                    has_base = true;
                }
                _ => break,
            }
        }
        if !has_base {
            return Err(self.error(&["type name"]));
        }
        let mut label = parts.join(" ");
        while self.eat_punct("*").is_some() {
            label.push('*');
            while self.at_keyword("const") {
                self.advance();
                label.push_str(" const");
            }
        }
        Ok((label, start.cover(self.prev_span())))
    }

    fn external_decl(&mut self) -> Result<PNode, SyntaxError> {
        if !self.starts_type() && !matches!(self.peek().tok, Tok::Ident(_)) {
            return Err(self.error(&["type name"]));
        }
        let (ty, ty_span) = self.type_spec()?;
        let mut stars = String::new();
        while self.eat_punct("*").is_some() {
            stars.push('*');
        }
        let (name, _) = self.expect_ident()?;
        if self.at_punct("(") {
            let params = self.param_list()?;
            let ret = PNode::leaf(NodeKind::TypeName, format!("{ty}{stars}"), ty_span);
            let mut children = vec![ret, params];
            if self.at_punct("{") {
                children.push(self.block()?);
            } else {
                self.expect_punct(";")
                    .map_err(|_| self.error(&["`{`", "`;`"]))?;
            }
            let span = ty_span.cover(self.prev_span());
            return Ok(PNode::new(
                NodeKind::FunctionDef,
                Some(name),
                span,
                children,
            ));
        }
        let first = self.declarator_rest(&ty, ty_span, stars, name)?;
        self.declaration_tail(ty, ty_span, first)
    }

    fn param_list(&mut self) -> Result<PNode, SyntaxError> {
        let open = self.expect_punct("(")?;
        let mut params = Vec::new();
        let only_void = self.at_keyword("void") && matches!(self.peek_at(1), Tok::Punct(")"));
        if only_void {
            self.advance();
        }
        if !self.at_punct(")") {
            loop {
                if let Some(t) = self.eat_punct("...") {
                    params.push(PNode::leaf(NodeKind::Param, "...", tok_span(&t)));
                } else {
                    let (mut ty, ty_span) = self.type_spec()?;
                    while self.eat_punct("*").is_some() {
                        ty.push('*');
                    }
                    let name = match &self.peek().tok {
                        Tok::Ident(n) => {
                            let n = n.clone();
                            self.advance();
                            Some(n)
                        }
                        _ => None,
                    };
                    while self.eat_punct("[").is_some() {
                        if !self.at_punct("]") {
                            self.expression()?;
                        }
                        self.expect_punct("]")?;
                        ty.push_str("[]");
                    }
                    let span = ty_span.cover(self.prev_span());
                    params.push(PNode::new(
                        NodeKind::Param,
                        name,
                        span,
                        vec![PNode::leaf(NodeKind::TypeName, ty, ty_span)],
                    ));
                }
                if self.eat_punct(",").is_none() {
                    break;
                }
            }
        }
        let close = self
            .expect_punct(")")
            .map_err(|_| self.error(&["`,`", "`)`"]))?;
        Ok(PNode::new(
            NodeKind::ParamList,
            None,
            tok_span(&open).cover(tok_span(&close)),
            params,
        ))
    }

    /// After `type *name`: array suffixes and an optional initializer.
    fn declarator_rest(
        &mut self,
        ty: &str,
        ty_span: Span,
        stars: String,
        name: String,
    ) -> Result<PNode, SyntaxError> {
        let name_span = self.prev_span();
        let mut label = format!("{ty}{stars}");
        let mut children = Vec::new();
        let mut dims = Vec::new();
        while self.eat_punct("[").is_some() {
            if !self.at_punct("]") {
                dims.push(self.expression()?);
            }
            self.expect_punct("]")?;
            label.push_str("[]");
        }
        children.push(PNode::leaf(NodeKind::TypeName, label, ty_span));
        children.extend(dims);
        if self.eat_punct("=").is_some() {
            children.push(self.initializer()?);
        }
        let span = name_span.cover(self.prev_span());
        Ok(PNode::new(NodeKind::VarDecl, Some(name), span, children))
    }

    fn declaration_tail(
        &mut self,
        ty: String,
        ty_span: Span,
        first: PNode,
    ) -> Result<PNode, SyntaxError> {
        let mut decls = vec![first];
        while self.eat_punct(",").is_some() {
            let mut stars = String::new();
            while self.eat_punct("*").is_some() {
                stars.push('*');
            }
            let (name, _) = self.expect_ident()?;
            decls.push(self.declarator_rest(&ty, ty_span, stars, name)?);
        }
        self.expect_punct(";")
            .map_err(|_| self.error(&["`,`", "`;`", "`=`", "`[`"]))?;
        let span = ty_span.cover(self.prev_span());
        Ok(PNode::new(NodeKind::DeclStmt, None, span, decls))
    }

    fn declaration(&mut self) -> Result<PNode, SyntaxError> {
        let (ty, ty_span) = self.type_spec()?;
        let mut stars = String::new();
        while self.eat_punct("*").is_some() {
            stars.push('*');
        }
        let (name, _) = self.expect_ident()?;
        let first = self.declarator_rest(&ty, ty_span, stars, name)?;
        self.declaration_tail(ty, ty_span, first)
    }

    fn initializer(&mut self) -> Result<PNode, SyntaxError> {
        if let Some(open) = self.eat_punct("{") {
            let mut items = Vec::new();
            while !self.at_punct("}") {
                items.push(self.initializer()?);
                if self.eat_punct(",").is_none() {
                    break;
                }
            }
            let close = self.expect_punct("}")?;
            return Ok(PNode::new(
                NodeKind::InitList,
                None,
                tok_span(&open).cover(tok_span(&close)),
                items,
            ));
        }
        self.assignment()
    }

    fn block(&mut self) -> Result<PNode, SyntaxError> {
        let open = self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.at_punct("}") {
            if self.peek().tok == Tok::Eof {
                return Err(self.error(&["`}`"]));
            }
            stmts.push(self.statement()?);
        }
        let close = self.advance();
        Ok(PNode::new(
            NodeKind::Block,
            None,
            tok_span(&open).cover(tok_span(&close)),
            stmts,
        ))
    }

    fn statement(&mut self) -> Result<PNode, SyntaxError> {
        let start = tok_span(self.peek());
        match self.peek().tok.clone() {
            Tok::Punct("{") => self.block(),
            Tok::Punct(";") => {
                self.advance();
                Ok(PNode::new(NodeKind::EmptyStmt, None, start, Vec::new()))
            }
            Tok::Keyword("if") => {
                self.advance();
                self.expect_punct("(")?;
                let cond = self.expression()?;
                self.expect_punct(")")?;
                let mut children = vec![cond, self.statement()?];
                if self.at_keyword("else") {
                    self.advance();
                    children.push(self.statement()?);
                }
                Ok(PNode::new(
                    NodeKind::IfStmt,
                    None,
                    start.cover(self.prev_span()),
                    children,
                ))
            }
            Tok::Keyword("while") => {
                self.advance();
                self.expect_punct("(")?;
                let cond = self.expression()?;
                self.expect_punct(")")?;
                let body = self.statement()?;
                Ok(PNode::new(
                    NodeKind::WhileStmt,
                    None,
                    start.cover(self.prev_span()),
                    vec![cond, body],
                ))
            }
            Tok::Keyword("do") => {
                self.advance();
                let body = self.statement()?;
                if !self.at_keyword("while") {
                    return Err(self.error(&["`while`"]));
                }
                self.advance();
                self.expect_punct("(")?;
                let cond = self.expression()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                Ok(PNode::new(
                    NodeKind::DoWhileStmt,
                    None,
                    start.cover(self.prev_span()),
                    vec![body, cond],
                ))
            }
            Tok::Keyword("for") => {
                self.advance();
                self.expect_punct("(")?;
                let mut children = Vec::new();
                if self.starts_declaration() {
                    children.push(self.declaration()?);
                } else {
                    if !self.at_punct(";") {
                        children.push(self.expression()?);
                    }
                    self.expect_punct(";")?;
                }
                if !self.at_punct(";") {
                    children.push(self.expression()?);
                }
                self.expect_punct(";")?;
                if !self.at_punct(")") {
                    children.push(self.expression()?);
                }
                self.expect_punct(")")?;
                children.push(self.statement()?);
                Ok(PNode::new(
                    NodeKind::ForStmt,
                    None,
                    start.cover(self.prev_span()),
                    children,
                ))
            }
            Tok::Keyword("return") => {
                self.advance();
                let mut children = Vec::new();
                if !self.at_punct(";") {
                    children.push(self.expression()?);
                }
                self.expect_punct(";")?;
                Ok(PNode::new(
                    NodeKind::ReturnStmt,
                    None,
                    start.cover(self.prev_span()),
                    children,
                ))
            }
            Tok::Keyword(k @ ("break" | "continue")) => {
                self.advance();
                self.expect_punct(";")?;
                let kind = if k == "break" {
                    NodeKind::BreakStmt
                } else {
                    NodeKind::ContinueStmt
                };
                Ok(PNode::new(
                    kind,
                    None,
                    start.cover(self.prev_span()),
                    Vec::new(),
                ))
            }
            _ if self.starts_declaration() => self.declaration(),
            _ => {
                let e = self.expression()?;
                self.expect_punct(";")?;
                Ok(PNode::new(
                    NodeKind::ExprStmt,
                    None,
                    start.cover(self.prev_span()),
                    vec![e],
                ))
            }
        }
    }

    fn expression(&mut self) -> Result<PNode, SyntaxError> {
        self.assignment()
    }

    fn assignment(&mut self) -> Result<PNode, SyntaxError> {
        let lhs = self.conditional()?;
        if let Tok::Punct(op) = self.peek().tok {
            if ASSIGN_OPS.contains(&op) {
                self.advance();
                let rhs = self.assignment()?;
                let span = lhs.span.cover(rhs.span);
                return Ok(PNode::new(
                    NodeKind::AssignExpr,
                    Some(op.to_string()),
                    span,
                    vec![lhs, rhs],
                ));
            }
        }
        Ok(lhs)
    }

    fn conditional(&mut self) -> Result<PNode, SyntaxError> {
        let cond = self.binary(0)?;
        if self.eat_punct("?").is_none() {
            return Ok(cond);
        }
        let then = self.expression()?;
        self.expect_punct(":")?;
        let other = self.conditional()?;
        let span = cond.span.cover(other.span);
        Ok(PNode::new(
            NodeKind::ConditionalExpr,
            None,
            span,
            vec![cond, then, other],
        ))
    }

    fn binary(&mut self, level: usize) -> Result<PNode, SyntaxError> {
        if level == BINARY_LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = match self.peek().tok {
                Tok::Punct(op) if BINARY_LEVELS[level].contains(&op) => op,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.binary(level + 1)?;
            let span = lhs.span.cover(rhs.span);
            lhs = PNode::new(
                NodeKind::BinaryExpr,
                Some(op.to_string()),
                span,
                vec![lhs, rhs],
            );
        }
    }

    fn unary(&mut self) -> Result<PNode, SyntaxError> {
        let start = tok_span(self.peek());
        match self.peek().tok.clone() {
            Tok::Punct(op @ ("-" | "+" | "!" | "~" | "*" | "&" | "++" | "--")) => {
                self.advance();
                let operand = self.unary()?;
                let span = start.cover(operand.span);
                Ok(PNode::new(
                    NodeKind::UnaryExpr,
                    Some(op.to_string()),
                    span,
                    vec![operand],
                ))
            }
            Tok::Keyword("sizeof") => {
                self.advance();
                let is_type = matches!(self.peek().tok, Tok::Punct("("))
                    && matches!(self.peek_at(1), Tok::Keyword(k) if TYPE_KEYWORDS.contains(k) || QUALIFIERS.contains(k) || matches!(*k, "struct" | "union" | "enum"));
                let operand = if is_type {
                    self.advance();
                    let (ty, span) = self.type_spec()?;
                    self.expect_punct(")")?;
                    PNode::leaf(NodeKind::TypeName, ty, span)
                } else {
                    self.unary()?
                };
                Ok(PNode::new(
                    NodeKind::SizeofExpr,
                    None,
                    start.cover(self.prev_span()),
                    vec![operand],
                ))
            }
            Tok::Punct("(") if matches!(self.peek_at(1), Tok::Keyword(k) if TYPE_KEYWORDS.contains(k) || QUALIFIERS.contains(k) || matches!(*k, "struct" | "union" | "enum")) =>
            {
                self.advance();
                let (ty, ty_span) = self.type_spec()?;
                self.expect_punct(")")?;
                let operand = self.unary()?;
                let span = start.cover(operand.span);
                Ok(PNode::new(
                    NodeKind::CastExpr,
                    None,
                    span,
                    vec![PNode::leaf(NodeKind::TypeName, ty, ty_span), operand],
                ))
            }
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<PNode, SyntaxError> {
        let mut e = self.primary()?;
        loop {
            match self.peek().tok {
                Tok::Punct("(") => {
                    let open = self.advance();
                    let mut args = Vec::new();
                    if !self.at_punct(")") {
                        loop {
                            args.push(self.assignment()?);
                            if self.eat_punct(",").is_none() {
                                break;
                            }
                        }
                    }
                    let close = self
                        .expect_punct(")")
                        .map_err(|_| self.error(&["`,`", "`)`"]))?;
                    let list = PNode::new(
                        NodeKind::ArgList,
                        None,
                        tok_span(&open).cover(tok_span(&close)),
                        args,
                    );
                    let span = e.span.cover(list.span);
                    e = PNode::new(NodeKind::CallExpr, None, span, vec![e, list]);
                }
                Tok::Punct("[") => {
                    self.advance();
                    let idx = self.expression()?;
                    let close = self.expect_punct("]")?;
                    let span = e.span.cover(tok_span(&close));
                    e = PNode::new(NodeKind::IndexExpr, None, span, vec![e, idx]);
                }
                Tok::Punct(op @ ("." | "->")) => {
                    self.advance();
                    let (field, fspan) = self.expect_ident()?;
                    let span = e.span.cover(fspan);
                    e = PNode::new(
                        NodeKind::MemberExpr,
                        Some(op.to_string()),
                        span,
                        vec![e, PNode::leaf(NodeKind::Identifier, field, fspan)],
                    );
                }
                Tok::Punct(op @ ("++" | "--")) => {
                    let t = self.advance();
                    let span = e.span.cover(tok_span(&t));
                    e = PNode::new(NodeKind::PostfixExpr, Some(op.to_string()), span, vec![e]);
                }
                _ => return Ok(e),
            }
        }
    }

    fn primary(&mut self) -> Result<PNode, SyntaxError> {
        let t = self.peek().clone();
        let span = tok_span(&t);
        match t.tok {
            Tok::Ident(name) => {
                self.advance();
                Ok(PNode::leaf(NodeKind::Identifier, name, span))
            }
            Tok::Int(s) | Tok::Float(s) | Tok::Str(s) | Tok::Char(s) => {
                self.advance();
                Ok(PNode::leaf(NodeKind::Literal, s, span))
            }
            Tok::Punct("(") => {
                self.advance();
                let e = self.expression()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            _ => Err(self.error(&["expression"])),
        }
    }
}
