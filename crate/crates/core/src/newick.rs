//! Newick reading for strictly bifurcating trees.
//!
//! A binary root yields a rooted topology; a trifurcating root is the
//! on-disk convention for an unrooted tree. Branch lengths and internal
//! node labels are parsed and discarded (only the topology is modeled).
//! Errors carry line/column context.

use std::sync::Arc;

use thiserror::Error;

use crate::taxa::TaxonSet;
use crate::topology::{RootedTopology, TreeError, UnrootedTopology};

#[derive(Error, Debug, Clone, PartialEq)]
#[error("line {line}, column {col}: {kind}")]
pub struct NewickError {
    pub line: usize,
    pub col: usize,
    pub kind: NewickErrorKind,
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum NewickErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown taxon {0:?}")]
    UnknownTaxon(String),
    #[error("duplicate taxon {0:?}")]
    DuplicateTaxon(String),
    #[error("taxon {0:?} missing from tree")]
    MissingTaxon(String),
    #[error("multifurcating node with {children} children (only the root may have 3)")]
    Multifurcation { children: usize },
    #[error("malformed branch length")]
    BadBranchLength,
}

/// Result of parsing one Newick string.
#[derive(Debug, Clone)]
pub enum ParsedTree {
    Rooted(RootedTopology),
    Unrooted(UnrootedTopology),
}

impl ParsedTree {
    pub fn taxa(&self) -> &Arc<TaxonSet> {
        match self {
            ParsedTree::Rooted(t) => t.taxa(),
            ParsedTree::Unrooted(t) => t.taxa(),
        }
    }

    /// Coerces to unrooted, collapsing a binary root if present.
    pub fn into_unrooted(self) -> Result<UnrootedTopology, TreeError> {
        match self {
            ParsedTree::Rooted(t) => Ok(t.unroot()?.0),
            ParsedTree::Unrooted(t) => Ok(t),
        }
    }

    pub fn as_rooted(self) -> Option<RootedTopology> {
        match self {
            ParsedTree::Rooted(t) => Some(t),
            ParsedTree::Unrooted(_) => None,
        }
    }
}

struct TmpNode {
    children: Vec<TmpNode>,
    taxon: Option<usize>,
    line: usize,
    col: usize,
}

struct Parser<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    taxa: &'a TaxonSet,
    line: usize,
    col: usize,
}

fn is_name_char(c: char) -> bool {
    !matches!(c, '(' | ')' | ',' | ':' | ';') && !c.is_whitespace()
}

impl<'a> Parser<'a> {
    fn new(text: &'a str, taxa: &'a TaxonSet) -> Self {
        Parser {
            chars: text.chars().peekable(),
            taxa,
            line: 1,
            col: 1,
        }
    }

    fn err(&self, kind: NewickErrorKind) -> NewickError {
        NewickError {
            line: self.line,
            col: self.col,
            kind,
        }
    }

    fn err_at(&self, line: usize, col: usize, kind: NewickErrorKind) -> NewickError {
        NewickError { line, col, kind }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next();
        match c {
            Some('\n') => {
                self.line += 1;
                self.col = 1;
            }
            Some(_) => self.col += 1,
            None => {}
        }
        c
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.bump();
        }
    }

    fn read_name(&mut self) -> String {
        let mut s = String::new();
        while self.peek().is_some_and(is_name_char) {
            s.push(self.bump().expect("peeked"));
        }
        s
    }

    fn skip_branch_length(&mut self) -> Result<(), NewickError> {
        // Called after ':' has been consumed.
        let mut s = String::new();
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, '.' | '+' | '-' | 'e' | 'E'))
        {
            s.push(self.bump().expect("peeked"));
        }
        if s.parse::<f64>().is_err() {
            return Err(self.err(NewickErrorKind::BadBranchLength));
        }
        Ok(())
    }

    fn subtree(&mut self) -> Result<TmpNode, NewickError> {
        self.skip_ws();
        let (line, col) = (self.line, self.col);
        match self.peek() {
            Some('(') => {
                self.bump();
                let mut children = vec![self.subtree()?];
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(',') => {
                            self.bump();
                            children.push(self.subtree()?);
                        }
                        Some(')') => {
                            self.bump();
                            break;
                        }
                        Some(c) => {
                            return Err(self.err(NewickErrorKind::Syntax(format!(
                                "expected ',' or ')', found {c:?}"
                            ))))
                        }
                        None => {
                            return Err(self.err(NewickErrorKind::Syntax(
                                "unexpected end of input inside '('".into(),
                            )))
                        }
                    }
                }
                // Optional internal label (e.g. a support value), discarded.
                self.skip_ws();
                if self.peek().is_some_and(is_name_char) {
                    self.read_name();
                }
                self.skip_ws();
                if self.peek() == Some(':') {
                    self.bump();
                    self.skip_branch_length()?;
                }
                Ok(TmpNode {
                    children,
                    taxon: None,
                    line,
                    col,
                })
            }
            Some(c) if is_name_char(c) => {
                let name = self.read_name();
                let taxon = self
                    .taxa
                    .index_of(&name)
                    .ok_or_else(|| self.err_at(line, col, NewickErrorKind::UnknownTaxon(name)))?;
                self.skip_ws();
                if self.peek() == Some(':') {
                    self.bump();
                    self.skip_branch_length()?;
                }
                Ok(TmpNode {
                    children: Vec::new(),
                    taxon: Some(taxon),
                    line,
                    col,
                })
            }
            Some(c) => Err(self.err(NewickErrorKind::Syntax(format!(
                "expected '(' or a taxon name, found {c:?}"
            )))),
            None => Err(self.err(NewickErrorKind::Syntax("unexpected end of input".into()))),
        }
    }

    fn tree(&mut self) -> Result<TmpNode, NewickError> {
        let root = self.subtree()?;
        self.skip_ws();
        match self.peek() {
            Some(';') => {
                self.bump();
            }
            Some(c) => {
                return Err(self.err(NewickErrorKind::Syntax(format!(
                    "expected ';', found {c:?}"
                ))))
            }
            None => {
                return Err(self.err(NewickErrorKind::Syntax("missing ';' at end of tree".into())))
            }
        }
        self.skip_ws();
        if let Some(c) = self.peek() {
            return Err(self.err(NewickErrorKind::Syntax(format!(
                "trailing content after ';': {c:?}"
            ))));
        }
        Ok(root)
    }
}

/// Parses one Newick record against a fixed taxon set. A binary root gives
/// a rooted tree, a trifurcating root an unrooted tree.
pub fn parse_newick(text: &str, taxa: &Arc<TaxonSet>) -> Result<ParsedTree, NewickError> {
    let mut parser = Parser::new(text, taxa);
    let root = parser.tree()?;
    let end = (parser.line, parser.col);

    // Structural validation: taxon bijection and arity.
    let n = taxa.len();
    let mut seen = vec![false; n];
    validate(&root, true, &mut seen, taxa)?;
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(NewickError {
            line: end.0,
            col: end.1,
            kind: NewickErrorKind::MissingTaxon(taxa.name(missing).to_string()),
        });
    }

    match root.children.len() {
        0 | 2 => {
            let mut nodes = Vec::with_capacity(2 * n - 1);
            let r = build_rooted(&root, &mut nodes);
            let t = RootedTopology::from_parts(Arc::clone(taxa), nodes, r)
                .map_err(|e| at(&root, NewickErrorKind::Syntax(e.to_string())))?;
            Ok(ParsedTree::Rooted(t))
        }
        3 => {
            let mut edges = Vec::with_capacity(2 * n - 3);
            let mut next_internal = n as u32;
            build_edges(&root, &mut edges, &mut next_internal);
            let t = UnrootedTopology::from_edge_list(Arc::clone(taxa), edges)
                .map_err(|e| at(&root, NewickErrorKind::Syntax(e.to_string())))?;
            Ok(ParsedTree::Unrooted(t))
        }
        c => Err(at(&root, NewickErrorKind::Multifurcation { children: c })),
    }
}

fn at(node: &TmpNode, kind: NewickErrorKind) -> NewickError {
    NewickError {
        line: node.line,
        col: node.col,
        kind,
    }
}

fn validate(
    node: &TmpNode,
    is_root: bool,
    seen: &mut [bool],
    taxa: &TaxonSet,
) -> Result<(), NewickError> {
    if let Some(t) = node.taxon {
        if seen[t] {
            return Err(at(
                node,
                NewickErrorKind::DuplicateTaxon(taxa.name(t).to_string()),
            ));
        }
        seen[t] = true;
        return Ok(());
    }
    let arity = node.children.len();
    let ok = if is_root {
        arity == 2 || arity == 3
    } else {
        arity == 2
    };
    if !ok {
        if arity == 1 {
            return Err(at(
                node,
                NewickErrorKind::Syntax("internal node with a single child".into()),
            ));
        }
        return Err(at(
            node,
            NewickErrorKind::Multifurcation { children: arity },
        ));
    }
    for c in &node.children {
        validate(c, false, seen, taxa)?;
    }
    Ok(())
}

fn build_rooted(node: &TmpNode, nodes: &mut Vec<crate::topology::RNode>) -> u32 {
    if let Some(t) = node.taxon {
        nodes.push(crate::topology::RNode::Leaf(t as u32));
        return nodes.len() as u32 - 1;
    }
    let l = build_rooted(&node.children[0], nodes);
    let r = build_rooted(&node.children[1], nodes);
    nodes.push(crate::topology::RNode::Internal(l, r));
    nodes.len() as u32 - 1
}

fn build_edges(node: &TmpNode, edges: &mut Vec<(u32, u32)>, next_internal: &mut u32) -> u32 {
    if let Some(t) = node.taxon {
        return t as u32;
    }
    let id = *next_internal;
    *next_internal += 1;
    for c in &node.children {
        let cid = build_edges(c, edges, next_internal);
        edges.push((id, cid));
    }
    id
}
