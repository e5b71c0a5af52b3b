//! Textual policy language.
//!
//! ```text
//! policy US91-3.1-Local extends US91-3.1 {
//!     active during 2019-10-01T11:00:00Z..2019-10-01T17:00:00Z;
//!     effect deny;
//!     priority 1;
//! }
//! ```
//!
//! Clauses: `frequency within <lo>..<hi> <unit>`, `requester isa <Class>`,
//! `affiliation <Federal|NonFederal>`, `location within-any [<Region>, ...]`,
//! `active during <t0>..<t1>`, `effect <permit|deny|permit-with-obligations [..]>`,
//! `priority <n>`, `meta <key> "<value>"`. Each clause appears at most once per
//! policy, except `meta` (once per key). `#` and `//` start line comments.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use crate::model::{
    format_instant, Affiliation, ClassId, Effect, FrequencyRange, FrequencyUnit, ModelError,
    Policy, PolicyId, RegionId, Restriction, TimeWindow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SourcePos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for SourcePos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DslErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown clause keyword '{0}'")]
    UnknownKeyword(String),
    #[error("duplicate policy id '{0}'")]
    DuplicateId(PolicyId),
    #[error("duplicate {0} clause")]
    DuplicateClause(String),
    #[error("unknown meta key '{0}'")]
    UnknownMetaKey(String),
    #[error("malformed bound: {0}")]
    MalformedBound(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {}, column {}: {kind}", pos.line, pos.column)]
pub struct DslError {
    pub pos: SourcePos,
    pub kind: DslErrorKind,
}

impl DslError {
    fn new(pos: SourcePos, kind: DslErrorKind) -> Self {
        Self { pos, kind }
    }
}

/// Parsed policies plus the class and region ids they mention.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyDocument {
    pub policies: Vec<Policy>,
    pub referenced_class_ids: BTreeSet<ClassId>,
    pub referenced_region_ids: BTreeSet<RegionId>,
    /// Where each policy was declared, when it came from text.
    pub origins: BTreeMap<PolicyId, SourcePos>,
}

impl PolicyDocument {
    pub fn from_policies(policies: Vec<Policy>) -> Self {
        let mut doc = Self {
            policies,
            ..Self::default()
        };
        doc.collect_references();
        doc
    }

    fn collect_references(&mut self) {
        for p in &self.policies {
            self.referenced_class_ids.extend(p.referenced_classes().cloned());
            self.referenced_region_ids.extend(p.referenced_regions().cloned());
        }
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Str(String),
    Word(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::LBrace => "'{'".to_string(),
            Tok::RBrace => "'}'".to_string(),
            Tok::LBracket => "'['".to_string(),
            Tok::RBracket => "']'".to_string(),
            Tok::Comma => "','".to_string(),
            Tok::Semi => "';'".to_string(),
            Tok::Str(s) => format!("string \"{}\"", s),
            Tok::Word(w) => format!("'{}'", w),
        }
    }
}

const PUNCT: &[char] = &['{', '}', '[', ']', ',', ';', '"', '#'];

fn lex(text: &str) -> Result<Vec<(Tok, SourcePos)>, DslError> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else if c.is_some() {
                column += 1;
            }
            c
        }};
    }
    while let Some(&c) = chars.peek() {
        let pos = SourcePos { line, column };
        match c {
            c if c.is_whitespace() => {
                bump!();
            }
            '#' => {
                while !matches!(chars.peek(), None | Some('\n')) {
                    bump!();
                }
            }
            '/' if {
                let mut look = chars.clone();
                look.next();
                look.peek() == Some(&'/')
            } =>
            {
                while !matches!(chars.peek(), None | Some('\n')) {
                    bump!();
                }
            }
            '{' | '}' | '[' | ']' | ',' | ';' => {
                bump!();
                let t = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    ',' => Tok::Comma,
                    _ => Tok::Semi,
                };
                out.push((t, pos));
            }
            '"' => {
                bump!();
                let mut s = String::new();
                loop {
                    match bump!() {
                        None => {
                            return Err(DslError::new(
                                pos,
                                DslErrorKind::Syntax("unterminated string".to_string()),
                            ))
                        }
                        Some('"') => break,
                        Some('\\') => {
                            let esc_pos = SourcePos { line, column };
                            match bump!() {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some('r') => s.push('\r'),
                                other => {
                                    return Err(DslError::new(
                                        esc_pos,
                                        DslErrorKind::Syntax(format!(
                                            "invalid escape '\\{}'",
                                            other.map(String::from).unwrap_or_default()
                                        )),
                                    ))
                                }
                            }
                        }
                        Some(ch) => s.push(ch),
                    }
                }
                out.push((Tok::Str(s), pos));
            }
            _ => {
                let mut w = String::new();
                while let Some(&ch) = chars.peek() {
                    if ch.is_whitespace() || PUNCT.contains(&ch) {
                        break;
                    }
                    w.push(ch);
                    bump!();
                }
                out.push((Tok::Word(w), pos));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, SourcePos)>,
    idx: usize,
    end: SourcePos,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(t, _)| t)
    }

    fn pos(&self) -> SourcePos {
        self.toks.get(self.idx).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<(Tok, SourcePos)> {
        let t = self.toks.get(self.idx).cloned();
        if t.is_some() {
            self.idx += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, DslError> {
        Err(DslError::new(self.pos(), DslErrorKind::Syntax(msg.into())))
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, DslError> {
        match self.peek() {
            Some(t) => self.syntax(format!("expected {}, found {}", wanted, t.describe())),
            None => self.syntax(format!("expected {}, found end of input", wanted)),
        }
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> Result<SourcePos, DslError> {
        if self.peek() == Some(&tok) {
            Ok(self.next().expect("peeked").1)
        } else {
            self.unexpected(wanted)
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), DslError> {
        match self.peek() {
            Some(Tok::Word(w)) if w == kw => {
                self.next();
                Ok(())
            }
            _ => self.unexpected(&format!("'{}'", kw)),
        }
    }

    /// A bare word or a quoted string.
    fn name(&mut self, wanted: &str) -> Result<(String, SourcePos), DslError> {
        match self.peek() {
            Some(Tok::Word(_)) | Some(Tok::Str(_)) => match self.next() {
                Some((Tok::Word(w), p)) | Some((Tok::Str(w), p)) => Ok((w, p)),
                _ => unreachable!(),
            },
            _ => self.unexpected(wanted),
        }
    }

    /// Concatenates bare words up to (not including) `;`.
    fn words_until_semi(&mut self) -> Result<Vec<(String, SourcePos)>, DslError> {
        let mut out = Vec::new();
        while let Some(Tok::Word(_)) = self.peek() {
            if let Some((Tok::Word(w), p)) = self.next() {
                out.push((w, p));
            }
        }
        if self.peek() != Some(&Tok::Semi) {
            return self.unexpected("';'");
        }
        Ok(out)
    }

    fn bracket_list(&mut self, wanted: &str) -> Result<Vec<String>, DslError> {
        self.expect(Tok::LBracket, "'['")?;
        let mut items = Vec::new();
        if self.peek() == Some(&Tok::RBracket) {
            self.next();
            return Ok(items);
        }
        loop {
            items.push(self.name(wanted)?.0);
            match self.peek() {
                Some(Tok::Comma) => {
                    self.next();
                }
                Some(Tok::RBracket) => {
                    self.next();
                    return Ok(items);
                }
                _ => return self.unexpected("',' or ']'"),
            }
        }
    }

    fn document(&mut self) -> Result<PolicyDocument, DslError> {
        let mut doc = PolicyDocument::default();
        let mut seen = BTreeSet::new();
        while self.peek().is_some() {
            let pos = self.pos();
            let policy = self.policy()?;
            if !seen.insert(policy.id.clone()) {
                return Err(DslError::new(pos, DslErrorKind::DuplicateId(policy.id)));
            }
            doc.origins.insert(policy.id.clone(), pos);
            doc.policies.push(policy);
        }
        doc.collect_references();
        Ok(doc)
    }

    fn policy(&mut self) -> Result<Policy, DslError> {
        self.keyword("policy")?;
        let (id, _) = self.name("policy id")?;
        let mut policy = Policy::new(id);
        if let Some(Tok::Word(w)) = self.peek() {
            if w == "extends" {
                self.next();
                policy.parent = Some(self.name("parent policy id")?.0.into());
            }
        }
        self.expect(Tok::LBrace, "'{'")?;
        let mut clauses: BTreeSet<String> = BTreeSet::new();
        loop {
            let pos = self.pos();
            match self.next() {
                Some((Tok::RBrace, _)) => break,
                Some((Tok::Word(kw), _)) => {
                    let slot = if kw == "meta" {
                        let key = match self.peek() {
                            Some(Tok::Word(k)) => k.clone(),
                            _ => return self.unexpected("meta key"),
                        };
                        format!("meta {}", key)
                    } else {
                        kw.clone()
                    };
                    if !clauses.insert(slot.clone()) {
                        return Err(DslError::new(pos, DslErrorKind::DuplicateClause(slot)));
                    }
                    self.clause(&kw, pos, &mut policy)?;
                    self.expect(Tok::Semi, "';'")?;
                }
                Some((t, _)) => {
                    return Err(DslError::new(
                        pos,
                        DslErrorKind::Syntax(format!("expected clause or '}}', found {}", t.describe())),
                    ))
                }
                None => return self.syntax("unterminated policy block; expected '}'"),
            }
        }
        policy
            .validate()
            .map_err(|e| DslError::new(self.pos(), e.into()))?;
        Ok(policy)
    }

    fn clause(&mut self, kw: &str, pos: SourcePos, policy: &mut Policy) -> Result<(), DslError> {
        let model = |e: ModelError| DslError::new(pos, DslErrorKind::Model(e));
        match kw {
            "frequency" => {
                self.keyword("within")?;
                let words = self.words_until_semi()?;
                let Some(((unit, unit_pos), range_words)) = words.split_last() else {
                    return self.syntax("expected frequency bounds and unit");
                };
                let unit = FrequencyUnit::parse(unit).map_err(|e| DslError::new(*unit_pos, e.into()))?;
                let joined: String = range_words.iter().map(|(w, _)| w.as_str()).collect();
                let (lo, hi) = split_range(&joined, pos)?;
                let range = FrequencyRange::parse(lo, hi, unit).map_err(|e| {
                    DslError::new(pos, DslErrorKind::MalformedBound(e.to_string()))
                })?;
                policy.restrictions.push(Restriction::FrequencyWithin(range));
            }
            "requester" => {
                self.keyword("isa")?;
                let (class, _) = self.name("class id")?;
                policy.restrictions.push(Restriction::RequesterIsA(class.into()));
            }
            "affiliation" => {
                let (a, apos) = self.name("affiliation")?;
                let a = Affiliation::parse(&a).map_err(|e| DslError::new(apos, e.into()))?;
                policy.restrictions.push(Restriction::AffiliationIs(a));
            }
            "location" => {
                self.keyword("within-any")?;
                let items = self.bracket_list("region id")?;
                let r = Restriction::location_within_any(items).map_err(model)?;
                policy.restrictions.push(r);
            }
            "active" => {
                self.keyword("during")?;
                let words = self.words_until_semi()?;
                let joined: String = words.iter().map(|(w, _)| w.as_str()).collect();
                let (lo, hi) = split_range(&joined, pos)?;
                let w = TimeWindow::parse(lo, hi).map_err(|e| {
                    DslError::new(pos, DslErrorKind::MalformedBound(e.to_string()))
                })?;
                policy.restrictions.push(Restriction::ActiveDuring(w));
            }
            "effect" => {
                let (e, epos) = match self.next() {
                    Some((Tok::Word(w), p)) => (w, p),
                    _ => {
                        self.idx -= 1;
                        return self.unexpected("effect");
                    }
                };
                let effect = match e.as_str() {
                    "permit" => Effect::Permit,
                    "deny" => Effect::Deny,
                    "permit-with-obligations" => {
                        let ids = self.bracket_list("obligation")?;
                        Effect::permit_with_obligations(ids).map_err(model)?
                    }
                    other => {
                        return Err(DslError::new(
                            epos,
                            DslErrorKind::Syntax(format!("unknown effect '{}'", other)),
                        ))
                    }
                };
                policy.effect = Some(effect);
            }
            "priority" => {
                let (n, npos) = match self.next() {
                    Some((Tok::Word(w), p)) => (w, p),
                    _ => {
                        self.idx -= 1;
                        return self.unexpected("priority level");
                    }
                };
                policy.precedence = n.parse().map_err(|_| {
                    DslError::new(
                        npos,
                        DslErrorKind::MalformedBound(format!("priority '{}' is not a non-negative integer", n)),
                    )
                })?;
            }
            "meta" => {
                let (key, kpos) = self.name("meta key")?;
                let value = match self.next() {
                    Some((Tok::Str(s), _)) => s,
                    _ => {
                        self.idx -= 1;
                        return self.unexpected("quoted meta value");
                    }
                };
                if !policy.meta.set(&key, value) {
                    return Err(DslError::new(kpos, DslErrorKind::UnknownMetaKey(key)));
                }
            }
            other => {
                return Err(DslError::new(pos, DslErrorKind::UnknownKeyword(other.to_string())))
            }
        }
        Ok(())
    }
}

/// `lo..hi`, or a single value standing for a degenerate range.
fn split_range(text: &str, pos: SourcePos) -> Result<(&str, &str), DslError> {
    if text.is_empty() {
        return Err(DslError::new(
            pos,
            DslErrorKind::MalformedBound("missing bounds".to_string()),
        ));
    }
    match text.split_once("..") {
        Some((lo, hi)) if !lo.is_empty() && !hi.is_empty() => Ok((lo, hi)),
        Some(_) => Err(DslError::new(
            pos,
            DslErrorKind::MalformedBound(format!("'{}' needs both bounds", text)),
        )),
        None => Ok((text, text)),
    }
}

/// Parses a whole document; on error nothing is returned but the diagnostic.
pub fn parse_policy_doc(text: &str) -> Result<PolicyDocument, DslError> {
    let toks = lex(text)?;
    let end = {
        let line = text.split('\n').count().max(1);
        let column = text.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        SourcePos { line, column }
    };
    Parser { toks, idx: 0, end }.document()
}

fn is_bare_word(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with("//")
        && s.chars().all(|c| !c.is_whitespace() && !PUNCT.contains(&c))
}

fn write_name(out: &mut String, s: &str) {
    if is_bare_word(s) {
        out.push_str(s);
    } else {
        write_string(out, s);
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Renders one restriction as its clause text, without the trailing `;`.
pub fn restriction_clause(r: &Restriction) -> String {
    let mut out = String::new();
    write_restriction(&mut out, r);
    out
}

fn write_restriction(out: &mut String, r: &Restriction) {
    match r {
        Restriction::FrequencyWithin(range) => {
            let (lo, hi, unit) = range.render_parts();
            let _ = write!(out, "frequency within {}..{} {}", lo, hi, unit.symbol());
        }
        Restriction::RequesterIsA(c) => {
            out.push_str("requester isa ");
            write_name(out, c.as_str());
        }
        Restriction::AffiliationIs(a) => {
            let _ = write!(out, "affiliation {}", a);
        }
        Restriction::LocationWithinAny(set) => {
            out.push_str("location within-any [");
            for (i, r) in set.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_name(out, r.as_str());
            }
            out.push(']');
        }
        Restriction::ActiveDuring(w) => {
            let _ = write!(
                out,
                "active during {}..{}",
                format_instant(&w.start()),
                format_instant(&w.end())
            );
        }
    }
}

/// Serializes policies so that parsing the output yields the same structures.
pub fn serialize_policy_doc<'a>(policies: impl IntoIterator<Item = &'a Policy>) -> String {
    let mut out = String::new();
    for (i, p) in policies.into_iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        write_policy(&mut out, p);
    }
    out
}

fn write_policy(out: &mut String, p: &Policy) {
    out.push_str("policy ");
    write_name(out, p.id.as_str());
    if let Some(parent) = &p.parent {
        out.push_str(" extends ");
        write_name(out, parent.as_str());
    }
    out.push_str(" {\n");
    for r in &p.restrictions {
        out.push_str("    ");
        write_restriction(out, r);
        out.push_str(";\n");
    }
    if let Some(effect) = &p.effect {
        out.push_str("    effect ");
        match effect {
            Effect::Permit => out.push_str("permit"),
            Effect::Deny => out.push_str("deny"),
            Effect::PermitWithObligations(ids) => {
                out.push_str("permit-with-obligations [");
                for (i, o) in ids.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_name(out, o);
                }
                out.push(']');
            }
        }
        out.push_str(";\n");
    }
    if p.precedence != 0 {
        let _ = writeln!(out, "    priority {};", p.precedence);
    }
    for (k, v) in p.meta.entries() {
        let _ = write!(out, "    meta {} ", k);
        write_string(out, v);
        out.push_str(";\n");
    }
    out.push_str("}\n");
}
