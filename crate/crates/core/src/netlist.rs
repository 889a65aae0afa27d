//! Line-oriented network description format.
//!
//! ```text
//! network NAME {
//!   sib NAME @ HEX4 { ... }
//!   tdr NAME @ HEX4 width INT [instrument IDENT]
//! }
//! ```
//!
//! `#` starts a comment running to end of line. Inside braces, nodes are
//! listed TDI side first.

use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault_manager::RomMap;
use crate::instruments::InstrumentKind;
use crate::scan::{NetworkBuilder, NodeId, ScanError, ScanNetwork};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDesc {
    pub name: String,
    pub nodes: Vec<NodeDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDecl {
    pub name: String,
    pub address: u16,
    pub kind: DeclKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeclKind {
    Sib { children: Vec<NodeDecl> },
    Tdr { width: usize, instrument: Option<String> },
}

impl NetworkDesc {
    /// Depth-first walk in declaration order.
    pub fn walk(&self) -> Vec<&NodeDecl> {
        fn go<'a>(nodes: &'a [NodeDecl], out: &mut Vec<&'a NodeDecl>) {
            for n in nodes {
                out.push(n);
                if let DeclKind::Sib { children } = &n.kind {
                    go(children, out);
                }
            }
        }
        let mut out = Vec::new();
        go(&self.nodes, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParseErrorKind {
    Syntax,
    DuplicateName,
    DuplicateAddress,
    BadWidth,
    BadAddress,
    UnknownInstrument,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ElaborateError {
    #[error("node `{node}`: no instrument model registered for `{tag}`")]
    UnknownInstrument { node: String, tag: String },
    #[error(transparent)]
    Structure(#[from] ScanError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    At,
    Open,
    Close,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Word(w) => write!(f, "`{w}`"),
            Tok::At => f.write_str("`@`"),
            Tok::Open => f.write_str("`{`"),
            Tok::Close => f.write_str("`}`"),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut chars = line.char_indices().peekable();
        while let Some(&(start, c)) = chars.peek() {
            let column = line[..start].chars().count() + 1;
            let single = match c {
                '@' => Some(Tok::At),
                '{' => Some(Tok::Open),
                '}' => Some(Tok::Close),
                _ => None,
            };
            if c.is_whitespace() {
                chars.next();
            } else if let Some(tok) = single {
                chars.next();
                out.push(Token { tok, line: ln + 1, column });
            } else {
                let mut end = start;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_whitespace() || matches!(c, '@' | '{' | '}') {
                        break;
                    }
                    end = i + c.len_utf8();
                    chars.next();
                }
                out.push(Token { tok: Tok::Word(line[start..end].to_string()), line: ln + 1, column });
            }
        }
    }
    out
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    errors: Vec<ParseError>,
    eof: (usize, usize),
    // positions for semantic checks
    spans: Vec<(usize, usize)>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn here(&self) -> (usize, usize) {
        self.peek().map(|t| (t.line, t.column)).unwrap_or(self.eof)
    }

    fn error_at(&mut self, (line, column): (usize, usize), kind: ParseErrorKind, message: String) {
        self.errors.push(ParseError { line, column, message, kind });
    }

    fn syntax(&mut self, expected: &str) {
        let found = match self.peek() {
            Some(t) => t.tok.to_string(),
            None => "end of input".to_string(),
        };
        let at = self.here();
        self.error_at(at, ParseErrorKind::Syntax, format!("expected {expected}, found {found}"));
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek().is_some_and(|t| &t.tok == tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Option<()> {
        if self.eat(&tok) {
            Some(())
        } else {
            self.syntax(&tok.to_string());
            None
        }
    }

    fn word(&mut self) -> Option<(String, (usize, usize))> {
        match self.peek() {
            Some(Token { tok: Tok::Word(w), line, column }) => {
                let out = (w.clone(), (*line, *column));
                self.pos += 1;
                Some(out)
            }
            _ => None,
        }
    }

    fn keyword(&mut self, kw: &str) -> Option<()> {
        if self.peek().is_some_and(|t| t.tok == Tok::Word(kw.into())) {
            self.pos += 1;
            Some(())
        } else {
            self.syntax(&format!("`{kw}`"));
            None
        }
    }

    fn name(&mut self) -> Option<String> {
        let at = self.here();
        match self.word() {
            Some((w, _)) if is_name(&w) => Some(w),
            Some((w, _)) => {
                self.error_at(at, ParseErrorKind::Syntax, format!("invalid name `{w}`"));
                None
            }
            None => {
                self.syntax("a name");
                None
            }
        }
    }

    fn address(&mut self) -> Option<u16> {
        self.expect(Tok::At)?;
        let at = self.here();
        let Some((w, _)) = self.word() else {
            self.syntax("a 4-digit hex address");
            return None;
        };
        if w.len() == 4 && w.chars().all(|c| c.is_ascii_hexdigit()) {
            u16::from_str_radix(&w, 16).ok()
        } else {
            self.error_at(at, ParseErrorKind::BadAddress, format!("address `{w}` is not exactly 4 hex digits"));
            // keep going with a placeholder so later declarations are still checked
            Some(u16::MAX)
        }
    }

    /// Skips to the next token that can start or end a node at the current
    /// nesting level. Braced bodies of the broken node are skipped whole.
    fn recover(&mut self) {
        let mut depth = 0usize;
        while let Some(t) = self.peek() {
            match &t.tok {
                Tok::Close if depth == 0 => return,
                Tok::Close => depth -= 1,
                Tok::Open => depth += 1,
                Tok::Word(w) if depth == 0 && (w == "sib" || w == "tdr") => return,
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn node(&mut self) -> Option<NodeDecl> {
        let start = self.here();
        let Some((kw, _)) = self.word() else {
            self.syntax("`sib` or `tdr`");
            self.pos += 1;
            return None;
        };
        let decl = match kw.as_str() {
            "sib" => self.sib_body(),
            "tdr" => self.tdr_body(),
            other => {
                self.error_at(start, ParseErrorKind::Syntax, format!("expected `sib` or `tdr`, found `{other}`"));
                None
            }
        };
        match decl {
            Some(d) => {
                self.spans.push(start);
                Some(d)
            }
            None => {
                self.recover();
                None
            }
        }
    }

    fn sib_body(&mut self) -> Option<NodeDecl> {
        let name = self.name()?;
        let address = self.address()?;
        self.expect(Tok::Open)?;
        let children = self.segment()?;
        self.expect(Tok::Close)?;
        Some(NodeDecl { name, address, kind: DeclKind::Sib { children } })
    }

    fn tdr_body(&mut self) -> Option<NodeDecl> {
        let name = self.name()?;
        let address = self.address()?;
        self.keyword("width")?;
        let at = self.here();
        let width = match self.word() {
            Some((w, _)) => match w.parse::<usize>() {
                Ok(0) | Err(_) => {
                    self.error_at(at, ParseErrorKind::BadWidth, format!("width `{w}` must be a positive integer"));
                    1
                }
                Ok(v) => v,
            },
            None => {
                self.syntax("a width");
                return None;
            }
        };
        let mut instrument = None;
        if self.peek().is_some_and(|t| t.tok == Tok::Word("instrument".into())) {
            self.pos += 1;
            let at = self.here();
            match self.word() {
                Some((tag, _)) => {
                    if InstrumentKind::from_tag(&tag).is_none() {
                        self.error_at(at, ParseErrorKind::UnknownInstrument, format!("unknown instrument `{tag}`"));
                    }
                    instrument = Some(tag);
                }
                None => {
                    self.syntax("an instrument tag");
                    return None;
                }
            }
        }
        Some(NodeDecl { name, address, kind: DeclKind::Tdr { width, instrument } })
    }

    fn segment(&mut self) -> Option<Vec<NodeDecl>> {
        let mut nodes = Vec::new();
        while let Some(t) = self.peek() {
            if t.tok == Tok::Close {
                break;
            }
            if let Some(n) = self.node() {
                nodes.push(n);
            }
        }
        Some(nodes)
    }
}

/// Parses a network description. All detected errors are returned.
pub fn parse_network(text: &str) -> Result<NetworkDesc, Vec<ParseError>> {
    let toks = lex(text);
    let line_count = text.lines().count().max(1);
    let eof = (line_count, text.lines().last().map_or(0, |l| l.chars().count()) + 1);
    if toks.is_empty() {
        return Err(vec![ParseError {
            line: 1,
            column: 1,
            message: "empty network".into(),
            kind: ParseErrorKind::Syntax,
        }]);
    }
    let mut p = Parser { toks, pos: 0, errors: Vec::new(), eof, spans: Vec::new() };

    let header = (|| {
        p.keyword("network")?;
        let name = p.name()?;
        p.expect(Tok::Open)?;
        Some(name)
    })();
    let Some(name) = header else {
        return Err(p.errors);
    };
    let nodes = p.segment().unwrap_or_default();
    if p.expect(Tok::Close).is_some() && p.peek().is_some() {
        p.syntax("end of input");
    }
    if nodes.is_empty() && p.errors.is_empty() {
        let at = p.eof;
        p.error_at(at, ParseErrorKind::Syntax, "empty network".into());
    }

    let desc = NetworkDesc { name, nodes };
    check_unique(&desc, &mut p);
    if p.errors.is_empty() {
        Ok(desc)
    } else {
        p.errors.sort_by_key(|e| (e.line, e.column));
        Err(p.errors)
    }
}

fn check_unique(desc: &NetworkDesc, p: &mut Parser) {
    // spans were pushed in completion order (children before parents); rebuild
    // a preorder span list by matching the postorder walk.
    let postorder = {
        fn go<'a>(nodes: &'a [NodeDecl], out: &mut Vec<&'a NodeDecl>) {
            for n in nodes {
                if let DeclKind::Sib { children } = &n.kind {
                    go(children, out);
                }
                out.push(n);
            }
        }
        let mut out = Vec::new();
        go(&desc.nodes, &mut out);
        out
    };
    let spans = p.spans.clone();
    let mut names: HashMap<&str, ()> = HashMap::new();
    let mut addrs: HashMap<u16, &str> = HashMap::new();
    let mut ordered: Vec<(&NodeDecl, (usize, usize))> = postorder.into_iter().zip(spans).collect();
    ordered.sort_by_key(|(_, at)| *at);
    for (decl, at) in ordered {
        if names.insert(&decl.name, ()).is_some() {
            p.error_at(at, ParseErrorKind::DuplicateName, format!("duplicate node name `{}`", decl.name));
        }
        if decl.address == u16::MAX && p.errors.iter().any(|e| e.kind == ParseErrorKind::BadAddress && e.line == at.0) {
            continue;
        }
        if let Some(prev) = addrs.insert(decl.address, &decl.name) {
            p.error_at(
                at,
                ParseErrorKind::DuplicateAddress,
                format!("address {:04X} of `{}` already used by `{prev}`", decl.address, decl.name),
            );
        }
    }
}

/// Canonical text form. Re-parses to an equal [`NetworkDesc`].
pub fn print_network(desc: &NetworkDesc) -> String {
    fn node(out: &mut String, n: &NodeDecl, indent: usize) {
        let pad = "  ".repeat(indent);
        match &n.kind {
            DeclKind::Sib { children } if children.is_empty() => {
                let _ = writeln!(out, "{pad}sib {} @ {:04X} {{ }}", n.name, n.address);
            }
            DeclKind::Sib { children } => {
                let _ = writeln!(out, "{pad}sib {} @ {:04X} {{", n.name, n.address);
                for c in children {
                    node(out, c, indent + 1);
                }
                let _ = writeln!(out, "{pad}}}");
            }
            DeclKind::Tdr { width, instrument } => {
                let _ = write!(out, "{pad}tdr {} @ {:04X} width {width}", n.name, n.address);
                if let Some(tag) = instrument {
                    let _ = write!(out, " instrument {tag}");
                }
                out.push('\n');
            }
        }
    }
    let mut out = format!("network {} {{\n", desc.name);
    for n in &desc.nodes {
        node(&mut out, n, 1);
    }
    out.push_str("}\n");
    out
}

/// Builds the scan network and ROM map. Node ids follow declaration order.
pub fn elaborate(desc: &NetworkDesc) -> Result<(ScanNetwork, RomMap), ElaborateError> {
    fn add(
        b: &mut NetworkBuilder,
        rom: &mut RomMap,
        n: &NodeDecl,
        parent: Option<NodeId>,
    ) -> Result<(), ElaborateError> {
        match &n.kind {
            DeclKind::Sib { children } => {
                let id = b.sib(n.name.clone(), parent);
                rom.insert(id, n.address);
                for c in children {
                    add(b, rom, c, Some(id))?;
                }
            }
            DeclKind::Tdr { width, instrument } => {
                let model = match instrument {
                    None => None,
                    Some(tag) => Some(
                        InstrumentKind::from_tag(tag)
                            .ok_or_else(|| ElaborateError::UnknownInstrument {
                                node: n.name.clone(),
                                tag: tag.clone(),
                            })?
                            .instantiate(),
                    ),
                };
                let id = b.tdr(n.name.clone(), *width, parent, model);
                rom.insert(id, n.address);
            }
        }
        Ok(())
    }
    let mut b = ScanNetwork::builder();
    let mut rom = RomMap::default();
    for n in &desc.nodes {
        add(&mut b, &mut rom, n, None)?;
    }
    Ok((b.build()?, rom))
}

/// The bundled three-SIB case-study network.
pub const CASE_STUDY_NETWORK: &str = include_str!("../data/case_study.net");
/// The two-SIB network used for the configuration-vector experiment.
pub const TWO_SIB_NETWORK: &str = include_str!("../data/two_sib.net");
