//! PubMed-style Boolean queries as trees.
//!
//! Grammar accepted by [`parse_query`]:
//!
//! ```text
//! or     = and ( OR and )*
//! and    = not ( AND not )*
//! not    = atom ( NOT atom )*
//! atom   = "(" or ")" | clause
//! clause = ( QUOTED | WORD+ ) [ "*" ] [ "[" tag "]" ]
//! ```
//!
//! Operators are case-insensitive reserved words with precedence
//! `NOT > AND > OR`, all left-associative. Untagged clauses search `[tiab]`.
//! Nested `AND`/`OR` groups of the same kind are flattened, since both
//! operators are associative; `NOT` is always binary.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::collapse_whitespace;

/// Search field a clause is restricted to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    /// MeSH heading.
    Mh,
    Tiab,
    Ti,
    Ab,
    /// Publication type.
    Pt,
    All,
}

impl Field {
    pub fn tag(self) -> &'static str {
        match self {
            Field::Mh => "mh",
            Field::Tiab => "tiab",
            Field::Ti => "ti",
            Field::Ab => "ab",
            Field::Pt => "pt",
            Field::All => "all",
        }
    }
}

/// A query leaf: either a MeSH heading (`field == Mh`) or a free-text atomic clause.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Clause {
    pub text: String,
    pub field: Field,
    #[serde(default)]
    pub truncated: bool,
    /// MeSH explosion. Always `true` for free-text clauses.
    #[serde(default = "default_true")]
    pub exploded: bool,
}

fn default_true() -> bool {
    true
}

impl Clause {
    /// Builds a clause with normalized text. Double quotes are dropped since
    /// they cannot be represented inside a clause.
    pub fn new(text: &str, field: Field) -> Self {
        let text = collapse_whitespace(&text.replace('"', " "));
        debug_assert!(!text.is_empty(), "clause text must be non-empty");
        Clause {
            text,
            field,
            truncated: false,
            exploded: true,
        }
    }

    /// An exploded MeSH heading leaf.
    pub fn mesh(heading: &str) -> Self {
        Clause::new(heading, Field::Mh)
    }

    /// A `[tiab]` free-text clause.
    pub fn free_text(text: &str) -> Self {
        Clause::new(text, Field::Tiab)
    }

    pub fn with_truncation(mut self) -> Self {
        self.truncated = true;
        self
    }

    pub fn without_explosion(mut self) -> Self {
        self.exploded = false;
        self
    }

    pub fn is_mesh(&self) -> bool {
        self.field == Field::Mh
    }

    fn write_to(&self, out: &mut String, compact: bool) {
        let quote = if compact { self.text.split(' ').any(needs_quotes) } else { needs_quotes(&self.text) };
        if quote {
            out.push('"');
            out.push_str(&self.text);
            out.push('"');
        } else {
            out.push_str(&self.text);
        }
        if self.truncated {
            out.push('*');
        }
        if compact && self.field == Field::Tiab {
            return;
        }
        out.push('[');
        out.push_str(self.field.tag());
        if self.field == Field::Mh && !self.exploded {
            out.push_str(":noexp");
        }
        out.push(']');
    }
}

fn needs_quotes(text: &str) -> bool {
    text.chars().any(|c| !(c.is_alphanumeric() || c == '-' || c == '\''))
        || is_reserved(text)
}

fn is_reserved(word: &str) -> bool {
    word.eq_ignore_ascii_case("and") || word.eq_ignore_ascii_case("or") || word.eq_ignore_ascii_case("not")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    And,
    Or,
    /// Binary difference: left minus right.
    Not,
}

impl Operator {
    pub fn keyword(self) -> &'static str {
        match self {
            Operator::And => "AND",
            Operator::Or => "OR",
            Operator::Not => "NOT",
        }
    }
}

/// Boolean query tree.
///
/// `And`/`Or` nodes hold at least two children, none of which is a node of
/// the same operator; `Not` nodes hold exactly two. Use [`QueryNode::and`],
/// [`QueryNode::or`] and [`QueryNode::not`] to keep those invariants.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryNode {
    Op {
        op: Operator,
        children: Vec<QueryNode>,
    },
    Leaf(Clause),
}

impl QueryNode {
    pub fn leaf(clause: Clause) -> Self {
        QueryNode::Leaf(clause)
    }

    /// Joins `children` with AND. Returns `None` when `children` is empty;
    /// a single child is returned as-is.
    pub fn and(children: Vec<QueryNode>) -> Option<Self> {
        Self::join(Operator::And, children)
    }

    /// Joins `children` with OR, with the same collapsing rules as [`QueryNode::and`].
    pub fn or(children: Vec<QueryNode>) -> Option<Self> {
        Self::join(Operator::Or, children)
    }

    pub fn not(left: QueryNode, right: QueryNode) -> Self {
        QueryNode::Op {
            op: Operator::Not,
            children: vec![left, right],
        }
    }

    fn join(op: Operator, children: Vec<QueryNode>) -> Option<Self> {
        debug_assert!(op != Operator::Not);
        let mut flat = Vec::with_capacity(children.len());
        for child in children {
            match child {
                QueryNode::Op { op: inner, children } if inner == op => flat.extend(children),
                other => flat.push(other),
            }
        }
        match flat.len() {
            0 => None,
            1 => flat.pop(),
            _ => Some(QueryNode::Op { op, children: flat }),
        }
    }

    pub fn as_leaf(&self) -> Option<&Clause> {
        match self {
            QueryNode::Leaf(c) => Some(c),
            QueryNode::Op { .. } => None,
        }
    }

    pub fn operator(&self) -> Option<Operator> {
        match self {
            QueryNode::Op { op, .. } => Some(*op),
            QueryNode::Leaf(_) => None,
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&Clause> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a Clause>) {
        match self {
            QueryNode::Leaf(c) => out.push(c),
            QueryNode::Op { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }

    /// Checks the structural invariants documented on the type.
    pub fn is_well_formed(&self) -> bool {
        match self {
            QueryNode::Leaf(c) => !c.text.is_empty(),
            QueryNode::Op { op, children } => {
                let arity_ok = match op {
                    Operator::Not => children.len() == 2,
                    _ => children.len() >= 2 && children.iter().all(|c| c.operator() != Some(*op)),
                };
                arity_ok && children.iter().all(QueryNode::is_well_formed)
            }
        }
    }

    /// Canonical text form; see [`serialize_query`].
    pub fn to_query_string(&self) -> String {
        let mut out = String::new();
        self.write_to(&mut out, false);
        out
    }

    /// The form people type: `[tiab]` tags are left off and plain word
    /// sequences go unquoted. Parses back to the same tree.
    ///
    /// ```
    /// use meshforge::query::parse_query;
    /// let q = parse_query("(post operative[tiab] OR postoperative) AND pain*").unwrap();
    /// assert_eq!(q.to_compact_string(), "(post operative OR postoperative) AND pain*");
    /// assert_eq!(parse_query(&q.to_compact_string()).unwrap(), q);
    /// ```
    pub fn to_compact_string(&self) -> String {
        let mut out = String::new();
        self.write_to(&mut out, true);
        out
    }

    fn write_to(&self, out: &mut String, compact: bool) {
        match self {
            QueryNode::Leaf(c) => c.write_to(out, compact),
            QueryNode::Op { op, children } => {
                for (i, child) in children.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                        out.push_str(op.keyword());
                        out.push(' ');
                    }
                    if child.operator().is_some() {
                        out.push('(');
                        child.write_to(out, compact);
                        out.push(')');
                    } else {
                        child.write_to(out, compact);
                    }
                }
            }
        }
    }
}

impl fmt::Display for QueryNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_query_string())
    }
}

/// Canonical serialization. Every nested operator group is parenthesized,
/// field tags are always emitted, and clauses containing anything besides
/// letters, digits, `-` and `'` are double-quoted. The output reads the same
/// under this crate's precedence rules and under strict left-to-right
/// evaluation.
pub fn serialize_query(q: &QueryNode) -> String {
    q.to_query_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("empty query")]
    EmptyQuery,
    #[error("unbalanced parenthesis at byte {offset}")]
    UnbalancedParen { offset: usize },
    #[error("unterminated quote at byte {offset}")]
    UnterminatedQuote { offset: usize },
    #[error("empty clause at byte {offset}")]
    EmptyClause { offset: usize },
    #[error("unknown field tag [{tag}] at byte {offset}")]
    UnknownField { tag: String, offset: usize },
    #[error("dangling operator at byte {offset}")]
    DanglingOperator { offset: usize },
    #[error("truncation '*' is only allowed at the end of a clause (byte {offset})")]
    MisplacedTruncation { offset: usize },
    #[error("expected an operator at byte {offset}")]
    MissingOperator { offset: usize },
}

impl ParseError {
    /// Byte offset into the input, when the error has one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            ParseError::EmptyQuery => None,
            ParseError::UnbalancedParen { offset }
            | ParseError::UnterminatedQuote { offset }
            | ParseError::EmptyClause { offset }
            | ParseError::UnknownField { offset, .. }
            | ParseError::DanglingOperator { offset }
            | ParseError::MisplacedTruncation { offset }
            | ParseError::MissingOperator { offset } => Some(*offset),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Op(Operator),
    Word(String),
    Quoted { text: String, star: bool },
    Tag(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    offset: usize,
}

fn lex(input: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < input.len() {
        let c = input[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        let start = i;
        match c {
            '(' => {
                out.push(Spanned { tok: Tok::LParen, offset: start });
                i += 1;
            }
            ')' => {
                out.push(Spanned { tok: Tok::RParen, offset: start });
                i += 1;
            }
            ']' => return Err(ParseError::UnknownField { tag: String::new(), offset: start }),
            '"' => {
                let rest = &input[i + 1..];
                let end = rest
                    .find('"')
                    .ok_or(ParseError::UnterminatedQuote { offset: start })?;
                let text = rest[..end].to_string();
                i += 1 + end + 1;
                let star = bytes.get(i) == Some(&b'*');
                if star {
                    i += 1;
                }
                out.push(Spanned { tok: Tok::Quoted { text, star }, offset: start });
            }
            '[' => {
                let rest = &input[i + 1..];
                match rest.find(']') {
                    Some(end) => {
                        out.push(Spanned { tok: Tok::Tag(rest[..end].to_string()), offset: start });
                        i += 1 + end + 1;
                    }
                    None => {
                        return Err(ParseError::UnknownField { tag: rest.to_string(), offset: start })
                    }
                }
            }
            _ => {
                let len = input[i..]
                    .find(|ch: char| ch.is_whitespace() || matches!(ch, '(' | ')' | '"' | '[' | ']'))
                    .unwrap_or(input.len() - i);
                let word = &input[i..i + len];
                i += len;
                let tok = if word.eq_ignore_ascii_case("and") {
                    Tok::Op(Operator::And)
                } else if word.eq_ignore_ascii_case("or") {
                    Tok::Op(Operator::Or)
                } else if word.eq_ignore_ascii_case("not") {
                    Tok::Op(Operator::Not)
                } else {
                    Tok::Word(word.to_string())
                };
                out.push(Spanned { tok, offset: start });
            }
        }
    }
    Ok(out)
}

fn parse_tag(tag: &str, offset: usize) -> Result<(Field, bool), ParseError> {
    let norm = collapse_whitespace(&tag.to_lowercase());
    let parsed = match norm.as_str() {
        "mh" | "mesh" | "mesh terms" => (Field::Mh, true),
        "mh:noexp" | "mesh:noexp" | "mesh terms:noexp" => (Field::Mh, false),
        "tiab" => (Field::Tiab, true),
        "ti" => (Field::Ti, true),
        "ab" => (Field::Ab, true),
        "pt" => (Field::Pt, true),
        "all" => (Field::All, true),
        _ => {
            return Err(ParseError::UnknownField {
                tag: tag.to_string(),
                offset,
            })
        }
    };
    Ok(parsed)
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn peek_op(&self, op: Operator) -> Option<usize> {
        match self.peek() {
            Some(Spanned { tok: Tok::Op(o), offset }) if *o == op => Some(*offset),
            _ => None,
        }
    }

    /// After consuming a binary operator at `op_offset`, the next token must start an atom.
    fn expect_operand(&self, op_offset: usize) -> Result<(), ParseError> {
        match self.peek() {
            None | Some(Spanned { tok: Tok::RParen | Tok::Op(_), .. }) => {
                Err(ParseError::DanglingOperator { offset: op_offset })
            }
            _ => Ok(()),
        }
    }

    fn parse_or(&mut self) -> Result<QueryNode, ParseError> {
        let mut children = vec![self.parse_and()?];
        while let Some(off) = self.peek_op(Operator::Or) {
            self.pos += 1;
            self.expect_operand(off)?;
            children.push(self.parse_and()?);
        }
        Ok(QueryNode::or(children).expect("at least one operand"))
    }

    fn parse_and(&mut self) -> Result<QueryNode, ParseError> {
        let mut children = vec![self.parse_not()?];
        while let Some(off) = self.peek_op(Operator::And) {
            self.pos += 1;
            self.expect_operand(off)?;
            children.push(self.parse_not()?);
        }
        Ok(QueryNode::and(children).expect("at least one operand"))
    }

    fn parse_not(&mut self) -> Result<QueryNode, ParseError> {
        let mut node = self.parse_atom()?;
        while let Some(off) = self.peek_op(Operator::Not) {
            self.pos += 1;
            self.expect_operand(off)?;
            let rhs = self.parse_atom()?;
            node = QueryNode::not(node, rhs);
        }
        Ok(node)
    }

    fn parse_atom(&mut self) -> Result<QueryNode, ParseError> {
        let Some(sp) = self.peek().cloned() else {
            return Err(ParseError::DanglingOperator { offset: self.end });
        };
        match sp.tok {
            Tok::LParen => {
                self.pos += 1;
                if let Some(Spanned { tok: Tok::RParen, .. }) = self.peek() {
                    return Err(ParseError::EmptyClause { offset: sp.offset });
                }
                let inner = self.parse_or()?;
                match self.peek() {
                    Some(Spanned { tok: Tok::RParen, .. }) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(ParseError::UnbalancedParen { offset: sp.offset }),
                }
            }
            Tok::RParen => Err(ParseError::UnbalancedParen { offset: sp.offset }),
            Tok::Op(_) => Err(ParseError::DanglingOperator { offset: sp.offset }),
            Tok::Tag(_) => Err(ParseError::EmptyClause { offset: sp.offset }),
            Tok::Quoted { text, star } => {
                self.pos += 1;
                let (text, inner_star) = match text.trim_end().strip_suffix('*') {
                    Some(t) => (t.to_string(), true),
                    None => (text, false),
                };
                if text.contains('*') {
                    return Err(ParseError::MisplacedTruncation { offset: sp.offset });
                }
                let text = collapse_whitespace(&text);
                if text.is_empty() {
                    return Err(ParseError::EmptyClause { offset: sp.offset });
                }
                self.finish_clause(text, star || inner_star, sp.offset)
            }
            Tok::Word(_) => {
                let mut words = Vec::new();
                let mut truncated = false;
                while let Some(Spanned { tok: Tok::Word(w), offset }) = self.peek().cloned() {
                    if truncated {
                        // a previous word carried the '*'
                        return Err(ParseError::MisplacedTruncation { offset });
                    }
                    let (w, star) = match w.strip_suffix('*') {
                        Some(base) => (base, true),
                        None => (w.as_str(), false),
                    };
                    if w.contains('*') || w.is_empty() {
                        return Err(ParseError::MisplacedTruncation { offset });
                    }
                    truncated = star;
                    words.push(w.to_string());
                    self.pos += 1;
                }
                self.finish_clause(words.join(" "), truncated, sp.offset)
            }
        }
    }

    fn finish_clause(&mut self, text: String, truncated: bool, offset: usize) -> Result<QueryNode, ParseError> {
        let (field, exploded) = match self.peek().cloned() {
            Some(Spanned { tok: Tok::Tag(tag), offset: tag_off }) => {
                self.pos += 1;
                parse_tag(&tag, tag_off)?
            }
            _ => (Field::Tiab, true),
        };
        if text.is_empty() {
            return Err(ParseError::EmptyClause { offset });
        }
        Ok(QueryNode::Leaf(Clause {
            text,
            field,
            truncated,
            exploded: exploded || field != Field::Mh,
        }))
    }
}

/// Parses a Boolean query. See the module docs for the grammar.
pub fn parse_query(raw: &str) -> Result<QueryNode, ParseError> {
    let toks = lex(raw)?;
    if toks.is_empty() {
        return Err(ParseError::EmptyQuery);
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: raw.len(),
    };
    let node = p.parse_or()?;
    match p.peek() {
        None => Ok(node),
        Some(Spanned { tok: Tok::RParen, offset }) => Err(ParseError::UnbalancedParen { offset: *offset }),
        Some(Spanned { offset, .. }) => Err(ParseError::MissingOperator { offset: *offset }),
    }
}
