//! Theory files: lexer, term parser with simple type inference, declaration
//! parser, and the session runner that drives the prover over a file list.
//!
//! Surface syntax (ASCII): `%x. t` abstraction, `!x. P` and `?x. P`
//! quantifiers (`!x:A. P` bounded), `?!x. P` unique existence, `x : A`
//! membership, `~` `&` `|` `-->` `<->` connectives, `==>` the rule arrow,
//! `{x : A . P}` separation, `{e . x : A}` replacement, `<a,b>` pairs,
//! `THE x. P` definite description, `if P then a else b` conditionals, and
//! user notations declared with the `notation` command.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::consts;
use crate::kernel::{
    generalize, replay_check, set_recording, Name, Signature, SimpleType, Term, Theorem,
};
use crate::script::{self, ScriptNode};
use crate::state::{self, SearchConfig, SearchOutcome};
use crate::steps::{compile, Attribute, Registry};
use crate::tables::TableDecls;
use crate::wfconv::{NormalizerRegistry, StructureKind};

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("{file}:{line}:{col}: syntax error: {msg}")]
    Syntax {
        file: String,
        line: u32,
        col: u32,
        msg: String,
    },
    #[error("{file}: unknown notation or name: {msg}")]
    UnknownNotation { file: String, msg: String },
    #[error("cannot read {0}: {1}")]
    Io(String, String),
    #[error("{0}")]
    Load(String),
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(u32),
    Str(String),
    Op(String),
    /// An operator run immediately followed by an identifier (`+R`, `<=R`);
    /// split by the parser when no structured notation matches.
    OpIdent(String, String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Backtick,
    DoubleBacktick,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{}", s),
            Tok::Num(n) => write!(f, "{}", n),
            Tok::Str(s) => write!(f, "\"{}\"", s),
            Tok::Op(s) => write!(f, "{}", s),
            Tok::OpIdent(a, b) => write!(f, "{}{}", a, b),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::LBrace => write!(f, "{{"),
            Tok::RBrace => write!(f, "}}"),
            Tok::LBracket => write!(f, "["),
            Tok::RBracket => write!(f, "]"),
            Tok::Comma => write!(f, ","),
            Tok::Dot => write!(f, "."),
            Tok::Backtick => write!(f, "`"),
            Tok::DoubleBacktick => write!(f, "``"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Sp {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

fn is_op_char(c: char) -> bool {
    "+-*/=~<>|&!?:@#^".contains(c)
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic()
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

pub fn lex(src: &str, file: &str) -> Result<Vec<Sp>, TheoryError> {
    let mut out = Vec::new();
    let mut line = 1u32;
    let mut col = 1u32;
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0usize;
    let err = |line, col, msg: String| TheoryError::Syntax {
        file: file.to_string(),
        line,
        col,
        msg,
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let adv = |i: &mut usize, col: &mut u32| {
            *i += 1;
            *col += 1;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' => adv(&mut i, &mut col),
            '#' => {
                // Line comment.
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => {
                out.push(Sp { tok: Tok::LParen, line: tl, col: tc });
                adv(&mut i, &mut col);
            }
            ')' => {
                out.push(Sp { tok: Tok::RParen, line: tl, col: tc });
                adv(&mut i, &mut col);
            }
            '{' => {
                out.push(Sp { tok: Tok::LBrace, line: tl, col: tc });
                adv(&mut i, &mut col);
            }
            '}' => {
                out.push(Sp { tok: Tok::RBrace, line: tl, col: tc });
                adv(&mut i, &mut col);
            }
            '[' => {
                out.push(Sp { tok: Tok::LBracket, line: tl, col: tc });
                adv(&mut i, &mut col);
            }
            ']' => {
                out.push(Sp { tok: Tok::RBracket, line: tl, col: tc });
                adv(&mut i, &mut col);
            }
            ',' => {
                out.push(Sp { tok: Tok::Comma, line: tl, col: tc });
                adv(&mut i, &mut col);
            }
            '.' => {
                out.push(Sp { tok: Tok::Dot, line: tl, col: tc });
                adv(&mut i, &mut col);
            }
            '`' => {
                if chars.get(i + 1) == Some(&'`') {
                    out.push(Sp { tok: Tok::DoubleBacktick, line: tl, col: tc });
                    i += 2;
                    col += 2;
                } else {
                    out.push(Sp { tok: Tok::Backtick, line: tl, col: tc });
                    adv(&mut i, &mut col);
                }
            }
            '"' => {
                let mut s = String::new();
                i += 1;
                col += 1;
                loop {
                    match chars.get(i) {
                        Some('"') => {
                            i += 1;
                            col += 1;
                            break;
                        }
                        Some('\n') => {
                            s.push('\n');
                            i += 1;
                            line += 1;
                            col = 1;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            i += 1;
                            col += 1;
                        }
                        None => return Err(err(tl, tc, "unterminated string".into())),
                    }
                }
                out.push(Sp { tok: Tok::Str(s), line: tl, col: tc });
            }
            _ if c.is_ascii_digit() => {
                let mut n = 0u32;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    n = n * 10 + chars[i].to_digit(10).unwrap();
                    i += 1;
                    col += 1;
                }
                out.push(Sp { tok: Tok::Num(n), line: tl, col: tc });
            }
            _ if is_ident_start(c) => {
                let mut s = String::new();
                while i < chars.len() && is_ident_char(chars[i]) {
                    s.push(chars[i]);
                    i += 1;
                    col += 1;
                }
                out.push(Sp { tok: Tok::Ident(s), line: tl, col: tc });
            }
            _ if is_op_char(c) => {
                let mut s = String::new();
                while i < chars.len() && is_op_char(chars[i]) {
                    s.push(chars[i]);
                    i += 1;
                    col += 1;
                }
                // An immediately attached identifier makes a structured
                // operator candidate (`+R`, `<=G`).
                if i < chars.len() && is_ident_start(chars[i]) {
                    let mut id = String::new();
                    while i < chars.len() && is_ident_char(chars[i]) {
                        id.push(chars[i]);
                        i += 1;
                        col += 1;
                    }
                    out.push(Sp { tok: Tok::OpIdent(s, id), line: tl, col: tc });
                } else {
                    out.push(Sp { tok: Tok::Op(s), line: tl, col: tc });
                }
            }
            _ => return Err(err(tl, tc, format!("unexpected character {:?}", c))),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Notation table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fixity {
    InfixLeft,
    InfixRight,
    Prefix,
}

#[derive(Debug, Clone)]
pub struct Notation {
    pub token: String,
    pub constant: String,
    pub prec: u32,
    pub fixity: Fixity,
    /// Structured notations take the attached identifier as the first
    /// (structure) argument.
    pub structured: bool,
}

#[derive(Debug, Clone, Default)]
pub struct NotationTable {
    entries: Vec<Notation>,
}

impl NotationTable {
    pub fn with_builtins() -> NotationTable {
        let mut t = NotationTable::default();
        for (tok, c, prec, fix) in [
            ("=", consts::EQ, 50, Fixity::InfixLeft),
            (":", consts::MEM, 50, Fixity::InfixLeft),
            ("&", consts::CONJ, 35, Fixity::InfixRight),
            ("|", consts::DISJ, 30, Fixity::InfixRight),
            ("-->", consts::IMP, 25, Fixity::InfixRight),
            ("<->", consts::IFF, 24, Fixity::InfixRight),
        ] {
            t.entries.push(Notation {
                token: tok.into(),
                constant: c.into(),
                prec,
                fixity: fix,
                structured: false,
            });
        }
        t
    }

    pub fn add(&mut self, n: Notation) {
        self.entries.retain(|e| e.token != n.token || e.fixity != n.fixity);
        self.entries.push(n);
    }

    fn infix(&self, token: &str) -> Option<&Notation> {
        self.entries
            .iter()
            .find(|n| n.token == token && n.fixity != Fixity::Prefix)
    }

    fn prefix(&self, token: &str) -> Option<&Notation> {
        self.entries
            .iter()
            .find(|n| n.token == token && n.fixity == Fixity::Prefix)
    }

    /// Structured lookup: `+R` matches a structured notation with base `+`.
    fn structured_infix(&self, base: &str) -> Option<&Notation> {
        self.entries
            .iter()
            .find(|n| n.structured && n.fixity != Fixity::Prefix && base_of(&n.token) == base)
    }

    fn structured_prefix(&self, base: &str) -> Option<&Notation> {
        self.entries
            .iter()
            .find(|n| n.structured && n.fixity == Fixity::Prefix && base_of(&n.token) == base)
    }
}

/// The operator-character prefix of a structured token (`+R` -> `+`).
pub fn base_of(token: &str) -> &str {
    let end = token
        .char_indices()
        .find(|(_, c)| !is_op_char(*c))
        .map(|(i, _)| i)
        .unwrap_or(token.len());
    &token[..end]
}

// ---------------------------------------------------------------------------
// Pre-terms and elaboration with type inference
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum PTerm {
    Var(String),
    Apply(Box<PTerm>, Vec<PTerm>),
    Lam(Vec<String>, Box<PTerm>),
}

impl PTerm {
    fn call(name: &str, args: Vec<PTerm>) -> PTerm {
        PTerm::Apply(Box::new(PTerm::Var(name.to_string())), args)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ITy {
    I,
    O,
    Arrow(Box<ITy>, Box<ITy>),
    Var(u32),
}

#[derive(Debug, Clone)]
enum ITerm {
    Const(String, SimpleType),
    Free(String, u32),
    Bound(u32),
    Abs(String, u32, Box<ITerm>),
    App(Box<ITerm>, Box<ITerm>),
}

struct Unifier {
    subst: HashMap<u32, ITy>,
    next: u32,
}

impl Unifier {
    fn new() -> Unifier {
        Unifier {
            subst: HashMap::new(),
            next: 0,
        }
    }

    fn fresh(&mut self) -> u32 {
        self.next += 1;
        self.next
    }

    fn resolve(&self, t: &ITy) -> ITy {
        match t {
            ITy::Var(v) => match self.subst.get(v) {
                Some(u) => self.resolve(u),
                None => t.clone(),
            },
            ITy::Arrow(a, b) => {
                ITy::Arrow(Box::new(self.resolve(a)), Box::new(self.resolve(b)))
            }
            _ => t.clone(),
        }
    }

    fn unify(&mut self, a: &ITy, b: &ITy) -> Result<(), String> {
        let (a, b) = (self.resolve(a), self.resolve(b));
        match (&a, &b) {
            (ITy::I, ITy::I) | (ITy::O, ITy::O) => Ok(()),
            (ITy::Var(v), _) => {
                if occurs(*v, &b) {
                    return Err("cyclic type".into());
                }
                self.subst.insert(*v, b);
                Ok(())
            }
            (_, ITy::Var(v)) => {
                if occurs(*v, &a) {
                    return Err("cyclic type".into());
                }
                self.subst.insert(*v, a);
                Ok(())
            }
            (ITy::Arrow(a1, a2), ITy::Arrow(b1, b2)) => {
                self.unify(a1, b1)?;
                self.unify(a2, b2)
            }
            _ => Err(format!("cannot unify {:?} with {:?}", a, b)),
        }
    }

    fn to_simple(&self, t: &ITy) -> SimpleType {
        match self.resolve(t) {
            ITy::I | ITy::Var(_) => SimpleType::Set,
            ITy::O => SimpleType::Prop,
            ITy::Arrow(a, b) => SimpleType::arrow(self.to_simple(&a), self.to_simple(&b)),
        }
    }
}

fn occurs(v: u32, t: &ITy) -> bool {
    match t {
        ITy::Var(u) => *u == v,
        ITy::Arrow(a, b) => occurs(v, a) || occurs(v, b),
        _ => false,
    }
}

fn ity_of(t: &SimpleType) -> ITy {
    match t {
        SimpleType::Set => ITy::I,
        SimpleType::Prop => ITy::O,
        SimpleType::Arrow(a, b) => ITy::Arrow(Box::new(ity_of(a)), Box::new(ity_of(b))),
    }
}

/// Elaboration context: signature constants, bound variables, and free
/// variables typed by unification variables.
pub struct Elab<'a> {
    sig: &'a Signature,
    uni: Unifier,
    frees: IndexMap<String, u32>,
    /// Types fixed by the caller (statement-level sharing).
    fixed: HashMap<String, SimpleType>,
}

impl<'a> Elab<'a> {
    pub fn new(sig: &'a Signature) -> Elab<'a> {
        Elab {
            sig,
            uni: Unifier::new(),
            frees: IndexMap::new(),
            fixed: HashMap::new(),
        }
    }

    pub fn fix_type(&mut self, name: &str, ty: SimpleType) {
        self.fixed.insert(name.to_string(), ty);
    }

    fn free_tv(&mut self, name: &str) -> u32 {
        if let Some(v) = self.frees.get(name) {
            return *v;
        }
        let v = self.uni.fresh();
        if let Some(ty) = self.fixed.get(name).cloned() {
            let _ = self.uni.unify(&ITy::Var(v), &ity_of(&ty));
        }
        self.frees.insert(name.to_string(), v);
        v
    }

    fn infer(
        &mut self,
        p: &PTerm,
        bound: &mut Vec<(String, u32)>,
    ) -> Result<(ITerm, ITy), String> {
        match p {
            PTerm::Var(n) => {
                if let Some(pos) = bound.iter().rposition(|(b, _)| b == n) {
                    let idx = (bound.len() - 1 - pos) as u32;
                    let tv = bound[pos].1;
                    return Ok((ITerm::Bound(idx), ITy::Var(tv)));
                }
                if let Some(ty) = self.sig.constant_type(n) {
                    return Ok((ITerm::Const(n.clone(), ty.clone()), ity_of(ty)));
                }
                let v = self.free_tv(n);
                Ok((ITerm::Free(n.clone(), v), ITy::Var(v)))
            }
            PTerm::Apply(f, args) => {
                let (mut ft, mut fty) = self.infer(f, bound)?;
                for a in args {
                    let (at, aty) = self.infer(a, bound)?;
                    let rv = ITy::Var(self.uni.fresh());
                    self.uni
                        .unify(&fty, &ITy::Arrow(Box::new(aty), Box::new(rv.clone())))?;
                    ft = ITerm::App(Box::new(ft), Box::new(at));
                    fty = rv;
                }
                Ok((ft, fty))
            }
            PTerm::Lam(vars, body) => {
                let mut tvs = Vec::new();
                for v in vars {
                    let tv = self.uni.fresh();
                    bound.push((v.clone(), tv));
                    tvs.push(tv);
                }
                let (bt, bty) = self.infer(body, bound)?;
                for _ in vars {
                    bound.pop();
                }
                let mut t = bt;
                let mut ty = bty;
                for (v, tv) in vars.iter().zip(&tvs).rev() {
                    t = ITerm::Abs(v.clone(), *tv, Box::new(t));
                    ty = ITy::Arrow(Box::new(ITy::Var(*tv)), Box::new(ty));
                }
                Ok((t, ty))
            }
        }
    }

    fn build(&self, t: &ITerm) -> Term {
        match t {
            ITerm::Const(n, ty) => Term::cnst(n, ty.clone()),
            ITerm::Free(n, v) => Term::free(n, self.uni.to_simple(&ITy::Var(*v))),
            ITerm::Bound(k) => Term::Bound(*k),
            ITerm::Abs(h, v, b) => Term::abs(
                h,
                self.uni.to_simple(&ITy::Var(*v)),
                self.build(b),
            ),
            ITerm::App(f, a) => Term::app(self.build(f), self.build(a)),
        }
    }

    /// Elaborates a pre-term at an expected type.
    pub fn elaborate(&mut self, p: &PTerm, expect: Option<&SimpleType>) -> Result<Term, String> {
        let (it, ty) = self.infer(p, &mut Vec::new())?;
        if let Some(e) = expect {
            self.uni.unify(&ty, &ity_of(e))?;
        }
        Ok(self.build(&it).beta_normalize())
    }

    /// The free variables seen so far with their resolved types.
    pub fn free_types(&self) -> Vec<(String, SimpleType)> {
        self.frees
            .iter()
            .map(|(n, v)| (n.clone(), self.uni.to_simple(&ITy::Var(*v))))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Term parser (Pratt, notation-aware)
// ---------------------------------------------------------------------------

pub struct TermParser<'a> {
    toks: Vec<Sp>,
    pos: usize,
    notations: &'a NotationTable,
    file: String,
}

impl<'a> TermParser<'a> {
    pub fn new(toks: Vec<Sp>, notations: &'a NotationTable, file: &str) -> TermParser<'a> {
        TermParser {
            toks,
            pos: 0,
            notations,
            file: file.to_string(),
        }
    }

    pub fn from_str(
        src: &str,
        notations: &'a NotationTable,
        file: &str,
    ) -> Result<TermParser<'a>, TheoryError> {
        Ok(TermParser::new(lex(src, file)?, notations, file))
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, TheoryError> {
        let (line, col) = self
            .toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|s| (s.line, s.col))
            .unwrap_or((0, 0));
        Err(TheoryError::Syntax {
            file: self.file.clone(),
            line,
            col,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn next_tok(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> Result<(), TheoryError> {
        if self.eat(t) {
            Ok(())
        } else {
            self.err(format!(
                "expected {} but found {}",
                t,
                self.peek().map(|x| x.to_string()).unwrap_or("end".into())
            ))
        }
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    /// Parses a full proposition or term expression.
    pub fn expr(&mut self) -> Result<PTerm, TheoryError> {
        self.expr_bp(0)
    }

    fn expr_bp(&mut self, min_bp: u32) -> Result<PTerm, TheoryError> {
        let mut lhs = self.prefix()?;
        loop {
            let Some(tok) = self.peek().cloned() else { break };
            let (token_str, struct_arg): (String, Option<String>) = match &tok {
                Tok::Op(s) => (s.clone(), None),
                Tok::Ident(s) => (s.clone(), None),
                Tok::OpIdent(base, id) => (base.clone(), Some(id.clone())),
                Tok::Backtick => ("`".into(), None),
                Tok::DoubleBacktick => ("``".into(), None),
                _ => break,
            };
            // Structured notation first (`x +R y`), then plain infix.
            let notation = if struct_arg.is_some() {
                self.notations.structured_infix(&token_str)
            } else {
                self.notations.infix(&token_str)
            };
            let Some(n) = notation.cloned() else {
                // `~=` and `~:` sugars.
                if struct_arg.is_none() && (token_str == "~=" || token_str == "~:") {
                    let inner = if token_str == "~=" { "=" } else { ":" };
                    let Some(base) = self.notations.infix(inner).cloned() else { break };
                    if base.prec < min_bp {
                        break;
                    }
                    self.pos += 1;
                    let rhs = self.expr_bp(base.prec + 1)?;
                    lhs = PTerm::call(consts::NOT, vec![PTerm::call(&base.constant, vec![lhs, rhs])]);
                    continue;
                }
                break;
            };
            if n.prec < min_bp {
                break;
            }
            self.pos += 1;
            let next_bp = match n.fixity {
                Fixity::InfixLeft => n.prec + 1,
                Fixity::InfixRight => n.prec,
                Fixity::Prefix => n.prec,
            };
            let rhs = self.expr_bp(next_bp)?;
            let mut args = Vec::new();
            if let Some(sid) = struct_arg {
                args.push(PTerm::Var(sid));
            }
            args.push(lhs);
            args.push(rhs);
            lhs = PTerm::call(&n.constant, args);
        }
        Ok(lhs)
    }

    fn binder_vars(&mut self) -> Result<Vec<String>, TheoryError> {
        let mut vars = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Ident(s)) => {
                    vars.push(s.clone());
                    self.pos += 1;
                }
                _ => break,
            }
        }
        if vars.is_empty() {
            return self.err("expected binder variable");
        }
        Ok(vars)
    }

    fn prefix(&mut self) -> Result<PTerm, TheoryError> {
        let Some(tok) = self.peek().cloned() else {
            return self.err("unexpected end of input");
        };
        match tok {
            Tok::Op(op) if op == "~" => {
                self.pos += 1;
                let inner = self.expr_bp(40)?;
                Ok(PTerm::call(consts::NOT, vec![inner]))
            }
            Tok::Op(op) if self.notations.prefix(&op).is_some() => {
                let n = self.notations.prefix(&op).cloned().unwrap();
                self.pos += 1;
                let inner = self.expr_bp(n.prec)?;
                Ok(PTerm::call(&n.constant, vec![inner]))
            }
            Tok::Op(op) if op == "%" => {
                self.pos += 1;
                let vars = self.binder_vars()?;
                self.expect(&Tok::Dot)?;
                let body = self.expr_bp(1)?;
                Ok(PTerm::Lam(vars, Box::new(body)))
            }
            Tok::Op(op) if op == "!" || op == "?" || op == "?!" => {
                self.pos += 1;
                self.quantifier(&op)
            }
            Tok::OpIdent(base, id) => {
                // Structured prefix operator, e.g. `-R x`.
                if let Some(n) = self.notations.structured_prefix(&base).cloned() {
                    self.pos += 1;
                    let arg = self.expr_bp(n.prec)?;
                    return Ok(PTerm::call(&n.constant, vec![PTerm::Var(id), arg]));
                }
                self.err(format!("unknown operator {}{}", base, id))
            }
            Tok::Op(op) if op == "<" => {
                // Tuple syntax <a, b, ...>.
                self.pos += 1;
                let mut parts = vec![self.expr_bp(1)?];
                while self.eat(&Tok::Comma) {
                    parts.push(self.expr_bp(1)?);
                }
                match self.next_tok() {
                    Some(Tok::Op(s)) if s == ">" => {}
                    _ => return self.err("expected > to close tuple"),
                }
                let mut t = parts.pop().unwrap();
                while let Some(prev) = parts.pop() {
                    t = PTerm::call("Pair", vec![prev, t]);
                }
                Ok(t)
            }
            Tok::LParen => {
                self.pos += 1;
                let inner = self.expr_bp(0)?;
                self.expect(&Tok::RParen)?;
                Ok(self.postfix(inner)?)
            }
            Tok::LBrace => {
                self.pos += 1;
                self.brace_form()
            }
            Tok::Ident(id) => match id.as_str() {
                "if" => {
                    self.pos += 1;
                    let cond = self.expr_bp(26)?;
                    match self.next_tok() {
                        Some(Tok::Ident(s)) if s == "then" => {}
                        _ => return self.err("expected then"),
                    }
                    let a = self.expr_bp(26)?;
                    match self.next_tok() {
                        Some(Tok::Ident(s)) if s == "else" => {}
                        _ => return self.err("expected else"),
                    }
                    let b = self.expr_bp(26)?;
                    Ok(PTerm::call("ite", vec![cond, a, b]))
                }
                "THE" => {
                    self.pos += 1;
                    let vars = self.binder_vars()?;
                    if vars.len() != 1 {
                        return self.err("THE binds exactly one variable");
                    }
                    self.expect(&Tok::Dot)?;
                    let body = self.expr_bp(1)?;
                    Ok(PTerm::call(
                        "The",
                        vec![PTerm::Lam(vars, Box::new(body))],
                    ))
                }
                "SOME" => {
                    self.pos += 1;
                    let vars = self.binder_vars()?;
                    if vars.len() != 1 {
                        return self.err("SOME binds exactly one variable");
                    }
                    match self.next_tok() {
                        Some(Tok::Op(s)) if s == ":" => {}
                        _ => return self.err("expected : in SOME"),
                    }
                    let dom = self.expr_bp(26)?;
                    self.expect(&Tok::Dot)?;
                    let body = self.expr_bp(1)?;
                    Ok(PTerm::call(
                        "Choice",
                        vec![PTerm::call(
                            "Collect",
                            vec![dom, PTerm::Lam(vars, Box::new(body))],
                        )],
                    ))
                }
                "UN" => {
                    self.pos += 1;
                    let vars = self.binder_vars()?;
                    if vars.len() != 1 {
                        return self.err("UN binds exactly one variable");
                    }
                    match self.next_tok() {
                        Some(Tok::Op(s)) if s == ":" => {}
                        _ => return self.err("expected : in UN"),
                    }
                    let dom = self.expr_bp(26)?;
                    self.expect(&Tok::Dot)?;
                    let body = self.expr_bp(1)?;
                    Ok(PTerm::call(
                        "Union",
                        vec![PTerm::call(
                            "RepFun",
                            vec![dom, PTerm::Lam(vars, Box::new(body))],
                        )],
                    ))
                }
                _ => {
                    self.pos += 1;
                    let head = PTerm::Var(id);
                    let head = if self.peek() == Some(&Tok::LParen) {
                        self.pos += 1;
                        let mut args = Vec::new();
                        if self.peek() != Some(&Tok::RParen) {
                            args.push(self.expr_bp(1)?);
                            while self.eat(&Tok::Comma) {
                                args.push(self.expr_bp(1)?);
                            }
                        }
                        self.expect(&Tok::RParen)?;
                        PTerm::Apply(Box::new(head), args)
                    } else {
                        head
                    };
                    self.postfix(head)
                }
            },
            t => self.err(format!("unexpected token {}", t)),
        }
    }

    fn postfix(&mut self, head: PTerm) -> Result<PTerm, TheoryError> {
        // Application of a parenthesized or computed head: f(x)(y).
        let mut cur = head;
        while self.peek() == Some(&Tok::LParen) {
            // Only treat as application when it directly follows.
            self.pos += 1;
            let mut args = Vec::new();
            if self.peek() != Some(&Tok::RParen) {
                args.push(self.expr_bp(1)?);
                while self.eat(&Tok::Comma) {
                    args.push(self.expr_bp(1)?);
                }
            }
            self.expect(&Tok::RParen)?;
            cur = PTerm::Apply(Box::new(cur), args);
        }
        Ok(cur)
    }

    fn quantifier(&mut self, op: &str) -> Result<PTerm, TheoryError> {
        let vars = self.binder_vars()?;
        // Optional bound: !x:A. P.
        let bound_set = if matches!(self.peek(), Some(Tok::Op(s)) if s == ":") {
            self.pos += 1;
            Some(self.expr_bp(26)?)
        } else {
            None
        };
        self.expect(&Tok::Dot)?;
        let body = self.expr_bp(1)?;
        let mut out = body;
        for v in vars.iter().rev() {
            out = match (op, &bound_set) {
                ("!", None) => PTerm::call(
                    consts::ALL,
                    vec![PTerm::Lam(vec![v.clone()], Box::new(out))],
                ),
                ("!", Some(dom)) => PTerm::call(
                    consts::ALL,
                    vec![PTerm::Lam(
                        vec![v.clone()],
                        Box::new(PTerm::call(
                            consts::IMP,
                            vec![
                                PTerm::call(consts::MEM, vec![PTerm::Var(v.clone()), dom.clone()]),
                                out,
                            ],
                        )),
                    )],
                ),
                ("?", None) => PTerm::call(
                    consts::EX,
                    vec![PTerm::Lam(vec![v.clone()], Box::new(out))],
                ),
                ("?", Some(dom)) => PTerm::call(
                    consts::EX,
                    vec![PTerm::Lam(
                        vec![v.clone()],
                        Box::new(PTerm::call(
                            consts::CONJ,
                            vec![
                                PTerm::call(consts::MEM, vec![PTerm::Var(v.clone()), dom.clone()]),
                                out,
                            ],
                        )),
                    )],
                ),
                ("?!", None) => {
                    // ?x. P(x) & (!z. P(z) --> z = x)
                    let z = format!("{}_u", v);
                    let pz = subst_pvar(&out, v, &z);
                    PTerm::call(
                        consts::EX,
                        vec![PTerm::Lam(
                            vec![v.clone()],
                            Box::new(PTerm::call(
                                consts::CONJ,
                                vec![
                                    out,
                                    PTerm::call(
                                        consts::ALL,
                                        vec![PTerm::Lam(
                                            vec![z.clone()],
                                            Box::new(PTerm::call(
                                                consts::IMP,
                                                vec![
                                                    pz,
                                                    PTerm::call(
                                                        consts::EQ,
                                                        vec![
                                                            PTerm::Var(z),
                                                            PTerm::Var(v.clone()),
                                                        ],
                                                    ),
                                                ],
                                            )),
                                        )],
                                    ),
                                ],
                            )),
                        )],
                    )
                }
                _ => return self.err("bounded ?! is not supported"),
            };
        }
        Ok(out)
    }

    /// `{a}`, `{a,b}`, `{x : A . P}` and `{e . x : A}`.
    fn brace_form(&mut self) -> Result<PTerm, TheoryError> {
        // Try the separation form first: IDENT ":" expr "." expr "}".
        let save = self.pos;
        if let Some(Tok::Ident(v)) = self.peek().cloned() {
            self.pos += 1;
            if matches!(self.peek(), Some(Tok::Op(s)) if s == ":") {
                self.pos += 1;
                if let Ok(dom) = self.expr_bp(26) {
                    if self.eat(&Tok::Dot) {
                        let body = self.expr_bp(0)?;
                        self.expect(&Tok::RBrace)?;
                        return Ok(PTerm::call(
                            "Collect",
                            vec![dom, PTerm::Lam(vec![v], Box::new(body))],
                        ));
                    }
                }
            }
            self.pos = save;
        }
        // Replacement form: expr "." IDENT ":" expr "}".
        let save = self.pos;
        if let Ok(e) = self.expr_bp(26) {
            if self.eat(&Tok::Dot) {
                if let Some(Tok::Ident(v)) = self.peek().cloned() {
                    self.pos += 1;
                    if matches!(self.peek(), Some(Tok::Op(s)) if s == ":") {
                        self.pos += 1;
                        let dom = self.expr_bp(26)?;
                        self.expect(&Tok::RBrace)?;
                        return Ok(PTerm::call(
                            "RepFun",
                            vec![dom, PTerm::Lam(vec![v], Box::new(e))],
                        ));
                    }
                }
                return self.err("expected ident : set in replacement braces");
            }
        }
        self.pos = save;
        // Finite set: {a} or {a,b}.
        let a = self.expr_bp(1)?;
        if self.eat(&Tok::Comma) {
            let b = self.expr_bp(1)?;
            self.expect(&Tok::RBrace)?;
            return Ok(PTerm::call("Upair", vec![a, b]));
        }
        self.expect(&Tok::RBrace)?;
        Ok(PTerm::call("Upair", vec![a.clone(), a]))
    }
}

fn subst_pvar(p: &PTerm, from: &str, to: &str) -> PTerm {
    match p {
        PTerm::Var(n) if n == from => PTerm::Var(to.to_string()),
        PTerm::Var(_) => p.clone(),
        PTerm::Apply(f, args) => PTerm::Apply(
            Box::new(subst_pvar(f, from, to)),
            args.iter().map(|a| subst_pvar(a, from, to)).collect(),
        ),
        PTerm::Lam(vs, b) => {
            if vs.iter().any(|v| v == from) {
                p.clone()
            } else {
                PTerm::Lam(vs.clone(), Box::new(subst_pvar(b, from, to)))
            }
        }
    }
}

/// Parses a type expression: `i`, `o`, `t => t`.
fn parse_type(p: &mut TermParser) -> Result<SimpleType, TheoryError> {
    let lhs = match p.next_tok() {
        Some(Tok::Ident(s)) if s == "i" => SimpleType::Set,
        Some(Tok::Ident(s)) if s == "o" => SimpleType::Prop,
        Some(Tok::LParen) => {
            let inner = parse_type(p)?;
            p.expect(&Tok::RParen)?;
            inner
        }
        t => {
            return p.err(format!(
                "expected type, found {}",
                t.map(|x| x.to_string()).unwrap_or("end".into())
            ))
        }
    };
    if matches!(p.peek(), Some(Tok::Op(s)) if s == "=>") {
        p.pos += 1;
        let rhs = parse_type(p)?;
        return Ok(SimpleType::arrow(lhs, rhs));
    }
    Ok(lhs)
}

/// Parses a rule statement `H1 ==> ... ==> C` into hypotheses and conclusion.
pub fn parse_statement(
    src: &str,
    notations: &NotationTable,
    sig: &Signature,
    file: &str,
    fixed: &[(String, SimpleType)],
) -> Result<(Vec<Term>, Term, Vec<(String, SimpleType)>), TheoryError> {
    let mut parser = TermParser::from_str(src, notations, file)?;
    let mut parts = Vec::new();
    loop {
        let e = parser.expr()?;
        parts.push(e);
        if matches!(parser.peek(), Some(Tok::Op(s)) if s == "==>") {
            parser.pos += 1;
            continue;
        }
        break;
    }
    if !parser.at_end() {
        return parser.err("trailing input after statement");
    }
    let mut elab = Elab::new(sig);
    for (n, ty) in fixed {
        elab.fix_type(n, ty.clone());
    }
    let mut terms = Vec::new();
    for p in &parts {
        let t = elab
            .elaborate(p, Some(&SimpleType::Prop))
            .map_err(|e| TheoryError::Syntax {
                file: file.to_string(),
                line: 0,
                col: 0,
                msg: e,
            })?;
        terms.push(t);
    }
    let concl = terms.pop().unwrap();
    Ok((terms, concl, elab.free_types()))
}

/// Parses a single term or proposition.
pub fn parse_term(
    src: &str,
    notations: &NotationTable,
    sig: &Signature,
    file: &str,
    fixed: &[(String, SimpleType)],
    expect: Option<&SimpleType>,
) -> Result<(Term, Vec<(String, SimpleType)>), TheoryError> {
    let mut parser = TermParser::from_str(src, notations, file)?;
    let e = parser.expr()?;
    if !parser.at_end() {
        return parser.err("trailing input after term");
    }
    let mut elab = Elab::new(sig);
    for (n, ty) in fixed {
        elab.fix_type(n, ty.clone());
    }
    let t = elab
        .elaborate(&e, expect)
        .map_err(|e| TheoryError::Syntax {
            file: file.to_string(),
            line: 0,
            col: 0,
            msg: e,
        })?;
    Ok((t, elab.free_types()))
}

// ---------------------------------------------------------------------------
// Theory declarations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum TheoryDecl {
    Import(String),
    Constant {
        name: String,
        ty: SimpleType,
    },
    Axiom {
        name: String,
        statement: String,
    },
    Definition {
        name: String,
        attrs: Vec<Attribute>,
        equation: String,
    },
    Lemma {
        name: String,
        attrs: Vec<Attribute>,
        statement: String,
        script: Option<ScriptNode>,
    },
    Property(String),
    Wellform {
        pattern: String,
        conditions: Vec<String>,
    },
    Normalizer {
        kind: StructureKind,
        pattern: String,
        lemmas: Vec<String>,
    },
    Delete {
        name: String,
        attr: Attribute,
    },
    Register {
        name: String,
        attr: Attribute,
    },
    Notation {
        token: String,
        constant: String,
        prec: u32,
        fixity: Fixity,
    },
}

/// Parses the declarations of one theory file.
pub fn parse_theory(src: &str, file: &str) -> Result<Vec<TheoryDecl>, TheoryError> {
    let toks = lex(src, file)?;
    let mut p = DeclParser {
        toks,
        pos: 0,
        file: file.to_string(),
    };
    let mut out = Vec::new();
    while !p.at_end() {
        out.push(p.decl()?);
    }
    Ok(out)
}

struct DeclParser {
    toks: Vec<Sp>,
    pos: usize,
    file: String,
}

impl DeclParser {
    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, TheoryError> {
        let (line, col) = self
            .toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|s| (s.line, s.col))
            .unwrap_or((0, 0));
        Err(TheoryError::Syntax {
            file: self.file.clone(),
            line,
            col,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn ident(&mut self) -> Result<String, TheoryError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s)
            }
            t => self.err(format!(
                "expected identifier, found {}",
                t.map(|x| x.to_string()).unwrap_or("end".into())
            )),
        }
    }

    fn string(&mut self) -> Result<String, TheoryError> {
        match self.peek().cloned() {
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(s)
            }
            t => self.err(format!(
                "expected quoted string, found {}",
                t.map(|x| x.to_string()).unwrap_or("end".into())
            )),
        }
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Op(s)) if s == op) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_tok(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn attrs(&mut self) -> Result<Vec<Attribute>, TheoryError> {
        let mut out = Vec::new();
        while self.eat_tok(&Tok::LBracket) {
            loop {
                let a = self.ident()?;
                match Attribute::parse(&a) {
                    Some(at) => out.push(at),
                    None => return self.err(format!("unknown attribute {}", a)),
                }
                if self.eat_tok(&Tok::Comma) {
                    continue;
                }
                break;
            }
            if !self.eat_tok(&Tok::RBracket) {
                return self.err("expected ] after attributes");
            }
        }
        Ok(out)
    }

    fn decl(&mut self) -> Result<TheoryDecl, TheoryError> {
        let kw = self.ident()?;
        match kw.as_str() {
            "import" => Ok(TheoryDecl::Import(self.ident()?)),
            "constant" => {
                let name = self.ident()?;
                if !self.eat_op("::") {
                    return self.err("expected :: after constant name");
                }
                let ty_src = self.string()?;
                let nt = NotationTable::default();
                let mut tp = TermParser::from_str(&ty_src, &nt, &self.file)?;
                let ty = parse_type(&mut tp)?;
                Ok(TheoryDecl::Constant { name, ty })
            }
            "axiom" => {
                let name = self.ident()?;
                if !self.eat_op(":") {
                    return self.err("expected : after axiom name");
                }
                let statement = self.string()?;
                Ok(TheoryDecl::Axiom { name, statement })
            }
            "definition" => {
                let name = self.ident()?;
                let attrs = self.attrs()?;
                if !self.eat_op(":") {
                    return self.err("expected : after definition name");
                }
                let equation = self.string()?;
                Ok(TheoryDecl::Definition { name, attrs, equation })
            }
            "lemma" | "theorem" => {
                let name = self.ident()?;
                let attrs = self.attrs()?;
                if !self.eat_op(":") {
                    return self.err("expected : after lemma name");
                }
                let statement = self.string()?;
                let script = if matches!(self.peek(), Some(Tok::Ident(s)) if s == "proof") {
                    self.pos += 1;
                    // Collect tokens until `qed`.
                    let start = self.pos;
                    while !matches!(self.peek(), Some(Tok::Ident(s)) if s == "qed") {
                        if self.at_end() {
                            return self.err("missing qed after proof");
                        }
                        self.pos += 1;
                    }
                    let script_toks = self.toks[start..self.pos].to_vec();
                    self.pos += 1; // consume qed
                    Some(script::parse_script_tokens(&script_toks, &self.file)?)
                } else {
                    None
                };
                Ok(TheoryDecl::Lemma { name, attrs, statement, script })
            }
            "property" => Ok(TheoryDecl::Property(self.ident()?)),
            "wellform" => {
                let pattern = self.string()?;
                let req = self.ident()?;
                if req != "requires" {
                    return self.err("expected requires");
                }
                let mut conditions = vec![self.string()?];
                while matches!(self.peek(), Some(Tok::Ident(s)) if s == "and") {
                    self.pos += 1;
                    conditions.push(self.string()?);
                }
                Ok(TheoryDecl::Wellform { pattern, conditions })
            }
            "normalizer" => {
                let kind_s = self.ident()?;
                let kind = StructureKind::parse(&kind_s)
                    .ok_or_else(|| TheoryError::Load(format!("unknown normalizer kind {}", kind_s)))?;
                let for_kw = self.ident()?;
                if for_kw != "for" {
                    return self.err("expected for");
                }
                let pattern = self.string()?;
                let using = self.ident()?;
                if using != "using" {
                    return self.err("expected using");
                }
                let mut lemmas = vec![self.ident()?];
                while let Some(Tok::Ident(s)) = self.peek() {
                    if is_decl_keyword(s) {
                        break;
                    }
                    lemmas.push(s.clone());
                    self.pos += 1;
                }
                Ok(TheoryDecl::Normalizer { kind, pattern, lemmas })
            }
            "delete" | "register" => {
                let name = self.ident()?;
                let attrs = self.attrs()?;
                let attr = attrs
                    .first()
                    .copied()
                    .ok_or_else(|| TheoryError::Load(format!("{} needs an attribute", kw)))?;
                if kw == "delete" {
                    Ok(TheoryDecl::Delete { name, attr })
                } else {
                    Ok(TheoryDecl::Register { name, attr })
                }
            }
            "notation" => {
                let mut fixity = Fixity::InfixLeft;
                if matches!(self.peek(), Some(Tok::Ident(s)) if s == "prefix") {
                    self.pos += 1;
                    fixity = Fixity::Prefix;
                }
                let token = self.string()?;
                let for_kw = self.ident()?;
                if for_kw != "for" {
                    return self.err("expected for");
                }
                let constant = self.ident()?;
                let prec_kw = self.ident()?;
                if prec_kw != "prec" {
                    return self.err("expected prec");
                }
                let prec = match self.peek().cloned() {
                    Some(Tok::Num(n)) => {
                        self.pos += 1;
                        n
                    }
                    _ => return self.err("expected precedence number"),
                };
                if fixity != Fixity::Prefix {
                    match self.peek() {
                        Some(Tok::Ident(s)) if s == "left" => {
                            self.pos += 1;
                            fixity = Fixity::InfixLeft;
                        }
                        Some(Tok::Ident(s)) if s == "right" => {
                            self.pos += 1;
                            fixity = Fixity::InfixRight;
                        }
                        _ => {}
                    }
                }
                Ok(TheoryDecl::Notation { token, constant, prec, fixity })
            }
            other => self.err(format!("unknown declaration keyword {}", other)),
        }
    }
}

fn is_decl_keyword(s: &str) -> bool {
    matches!(
        s,
        "import"
            | "constant"
            | "axiom"
            | "definition"
            | "lemma"
            | "theorem"
            | "property"
            | "wellform"
            | "normalizer"
            | "delete"
            | "register"
            | "notation"
    )
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

/// Per-lemma result in a session report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct LemmaReport {
    pub name: String,
    pub status: String,
    pub ms: u64,
    pub items: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq, Default)]
pub struct SessionReport {
    pub lemmas: Vec<LemmaReport>,
    pub proved: usize,
    pub failed: usize,
}

impl SessionReport {
    pub fn exit_status(&self) -> i32 {
        if self.failed > 0 {
            1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub timeout_ms: u64,
    pub max_items: usize,
    pub trace: bool,
    pub replay: bool,
    pub fail_fast: bool,
    pub stats: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            timeout_ms: 10_000,
            max_items: 20_000,
            trace: false,
            replay: false,
            fail_fast: false,
            stats: false,
        }
    }
}

/// A prover session: signature, registry, tables and notations, extended by
/// processing theory declarations in order.
pub struct Session {
    pub sig: Signature,
    pub registry: Registry,
    pub table_decls: TableDecls,
    pub normalizers: NormalizerRegistry,
    pub notations: NotationTable,
    pub lemmas: IndexMap<String, Theorem>,
    pub config: SessionConfig,
    pub report: SessionReport,
    pub trace_out: Vec<String>,
    loaded: Vec<PathBuf>,
    search_root: PathBuf,
}

impl Session {
    pub fn new(config: SessionConfig) -> Session {
        set_recording(config.replay);
        Session {
            sig: Signature::new(),
            registry: Registry::new(),
            table_decls: TableDecls::new(),
            normalizers: NormalizerRegistry::default(),
            notations: NotationTable::with_builtins(),
            lemmas: IndexMap::new(),
            config,
            report: SessionReport::default(),
            trace_out: Vec::new(),
            loaded: Vec::new(),
            search_root: PathBuf::from("."),
        }
    }

    /// Looks up a named theorem among lemmas, definitions and axioms.
    pub fn theorem(&self, name: &str) -> Option<Theorem> {
        self.lemmas
            .get(name)
            .cloned()
            .or_else(|| self.sig.definition(name).cloned())
            .or_else(|| self.sig.axiom(name).cloned())
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            timeout_ms: self.config.timeout_ms,
            max_items: self.config.max_items,
            trace: self.config.trace,
            ..SearchConfig::default()
        }
    }

    /// Processes a list of theory files in order.
    pub fn run_files(&mut self, files: &[PathBuf]) -> Result<(), TheoryError> {
        for f in files {
            self.load_file(f)?;
            if self.config.fail_fast && self.report.failed > 0 {
                break;
            }
        }
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), TheoryError> {
        let canon = path
            .canonicalize()
            .map_err(|e| TheoryError::Io(path.display().to_string(), e.to_string()))?;
        if self.loaded.contains(&canon) {
            return Ok(());
        }
        self.loaded.push(canon.clone());
        if let Some(dir) = canon.parent() {
            self.search_root = dir.to_path_buf();
        }
        let src = std::fs::read_to_string(&canon)
            .map_err(|e| TheoryError::Io(path.display().to_string(), e.to_string()))?;
        let file = canon
            .file_name()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        let decls = parse_theory(&src, &file)?;
        for d in decls {
            self.process(d, &file)?;
            if self.config.fail_fast && self.report.failed > 0 {
                break;
            }
        }
        Ok(())
    }

    fn step_id(name: &str, attr: Attribute) -> String {
        format!("{}.{}", name, attr)
    }

    fn register_attr(
        &mut self,
        name: &str,
        attr: Attribute,
        th: &Theorem,
        file: &str,
    ) -> Result<(), TheoryError> {
        let id = Session::step_id(name, attr);
        let spec = compile(th, attr, &id, &self.table_decls).map_err(|e| {
            TheoryError::Load(format!("{}: cannot compile {}: {}", file, name, e))
        })?;
        self.registry.register(spec);
        Ok(())
    }

    fn process(&mut self, d: TheoryDecl, file: &str) -> Result<(), TheoryError> {
        match d {
            TheoryDecl::Import(name) => {
                let path = self.search_root.join(format!("{}.thy", name));
                self.load_file(&path)
            }
            TheoryDecl::Constant { name, ty } => {
                self.sig
                    .declare_constant(&name, ty)
                    .map_err(|e| TheoryError::Load(format!("{}: {}", file, e)))?;
                Ok(())
            }
            TheoryDecl::Axiom { name, statement } => {
                let (hyps, concl, _) =
                    parse_statement(&statement, &self.notations, &self.sig, file, &[])?;
                self.sig
                    .add_axiom(&name, hyps, concl)
                    .map_err(|e| TheoryError::Load(format!("{}: axiom {}: {}", file, name, e)))?;
                Ok(())
            }
            TheoryDecl::Definition { name, attrs, equation } => {
                let (hyps, concl, frees) =
                    parse_statement(&equation, &self.notations, &self.sig, file, &[])?;
                if !hyps.is_empty() {
                    return Err(TheoryError::Load(format!(
                        "{}: definition {} cannot have premises",
                        file, name
                    )));
                }
                // The equation is c(x1,...,xn) = rhs (or <->).
                let (lhs, rhs) = consts::dest_eq(&concl)
                    .or_else(|| consts::dest_iff(&concl))
                    .ok_or_else(|| {
                        TheoryError::Load(format!(
                            "{}: definition {} must be an equation",
                            file, name
                        ))
                    })?;
                let (head, args) = lhs.spine();
                let head_name = match head {
                    Term::Free(n, _) => n.to_string(),
                    Term::Const(n, _) => n.to_string(),
                    _ => {
                        return Err(TheoryError::Load(format!(
                            "{}: definition {} left side must be a constant application",
                            file, name
                        )))
                    }
                };
                if head_name != name {
                    return Err(TheoryError::Load(format!(
                        "{}: definition head {} does not match name {}",
                        file, head_name, name
                    )));
                }
                let mut arg_names: Vec<(Name, SimpleType)> = Vec::new();
                for a in args {
                    match a {
                        Term::Free(n, _) => {
                            let ty = frees
                                .iter()
                                .find(|(m, _)| m == n.as_ref())
                                .map(|(_, t)| t.clone())
                                .unwrap_or(SimpleType::Set);
                            arg_names.push((n.clone(), ty));
                        }
                        _ => {
                            return Err(TheoryError::Load(format!(
                                "{}: definition {} arguments must be variables",
                                file, name
                            )))
                        }
                    }
                }
                let th = self
                    .sig
                    .add_definition(&name, &arg_names, rhs.clone())
                    .map_err(|e| {
                        TheoryError::Load(format!("{}: definition {}: {}", file, name, e))
                    })?;
                for attr in attrs {
                    self.register_attr(&name, attr, &th, file)?;
                }
                Ok(())
            }
            TheoryDecl::Lemma { name, attrs, statement, script } => {
                let (hyps, concl, frees) =
                    parse_statement(&statement, &self.notations, &self.sig, file, &[])?;
                let started = Instant::now();
                let outcome = self.prove_lemma(&hyps, &concl, &frees, script.as_ref());
                let ms = started.elapsed().as_millis() as u64;
                match outcome {
                    Ok((th, items, steps)) => {
                        let mut status = "proved";
                        if self.config.replay {
                            if replay_check(&th, &self.sig).is_err() {
                                status = "failed";
                            }
                        }
                        if status == "proved" {
                            self.lemmas.insert(name.clone(), th.clone());
                            for attr in attrs {
                                self.register_attr(&name, attr, &th, file)?;
                            }
                            self.report.proved += 1;
                        } else {
                            self.report.failed += 1;
                        }
                        self.report.lemmas.push(LemmaReport {
                            name,
                            status: status.into(),
                            ms,
                            items,
                            steps,
                        });
                    }
                    Err((reason, items, steps)) => {
                        self.report.failed += 1;
                        self.report.lemmas.push(LemmaReport {
                            name: name.clone(),
                            status: reason,
                            ms,
                            items,
                            steps,
                        });
                    }
                }
                Ok(())
            }
            TheoryDecl::Property(name) => {
                let ty = self
                    .sig
                    .constant_type(&name)
                    .cloned()
                    .ok_or_else(|| TheoryError::Load(format!("{}: unknown predicate {}", file, name)))?;
                self.table_decls
                    .register_property(&name, &ty)
                    .map_err(|e| TheoryError::Load(format!("{}: {}", file, e)))?;
                Ok(())
            }
            TheoryDecl::Wellform { pattern, conditions } => {
                let (pat, frees) =
                    parse_term(&pattern, &self.notations, &self.sig, file, &[], None)?;
                let names: Vec<Name> = frees.iter().map(|(n, _)| Arc::from(n.as_str())).collect();
                let pat = schematize_frees(&pat, &names);
                let mut conds = Vec::new();
                for c in &conditions {
                    let (t, _) = parse_term(
                        &c,
                        &self.notations,
                        &self.sig,
                        file,
                        &frees,
                        Some(&SimpleType::Prop),
                    )?;
                    conds.push(schematize_frees(&t, &names));
                }
                self.table_decls
                    .register_wellform(&pat, &conds)
                    .map_err(|e| TheoryError::Load(format!("{}: {}", file, e)))?;
                Ok(())
            }
            TheoryDecl::Normalizer { kind, pattern, lemmas } => {
                let (pat, _) =
                    parse_term(&pattern, &self.notations, &self.sig, file, &[], None)?;
                let prop = pat
                    .head_const()
                    .map(|n| n.to_string())
                    .ok_or_else(|| {
                        TheoryError::Load(format!("{}: bad normalizer pattern {}", file, pattern))
                    })?;
                let mut found = Vec::new();
                for l in &lemmas {
                    let th = self.theorem(l).ok_or_else(|| {
                        TheoryError::Load(format!("{}: unknown lemma {}", file, l))
                    })?;
                    found.push((l.clone(), th));
                }
                self.normalizers
                    .register(kind, &prop, &found, &self.table_decls)
                    .map_err(|e| TheoryError::Load(format!("{}: normalizer: {}", file, e)))?;
                Ok(())
            }
            TheoryDecl::Delete { name, attr } => {
                let id = Session::step_id(&name, attr);
                self.registry
                    .delete(&id)
                    .map_err(|e| TheoryError::Load(format!("{}: {}", file, e)))?;
                Ok(())
            }
            TheoryDecl::Register { name, attr } => {
                let th = self.theorem(&name).ok_or_else(|| {
                    TheoryError::Load(format!("{}: unknown theorem {}", file, name))
                })?;
                self.register_attr(&name, attr, &th, file)
            }
            TheoryDecl::Notation { token, constant, prec, fixity } => {
                if self.sig.constant_type(&constant).is_none() {
                    return Err(TheoryError::UnknownNotation {
                        file: file.to_string(),
                        msg: constant,
                    });
                }
                let structured = {
                    let base = base_of(&token);
                    !base.is_empty() && base.len() < token.len()
                };
                self.notations.add(Notation {
                    token,
                    constant,
                    prec,
                    fixity,
                    structured,
                });
                Ok(())
            }
        }
    }

    /// Proves one lemma, optionally with a script. On success the theorem is
    /// generalized over its free variables.
    #[allow(clippy::type_complexity)]
    fn prove_lemma(
        &mut self,
        hyps: &[Term],
        concl: &Term,
        frees: &[(String, SimpleType)],
        script: Option<&ScriptNode>,
    ) -> Result<(Theorem, usize, usize), (String, usize, usize)> {
        let sig = Arc::new(self.sig.clone());
        let registry = Arc::new(self.registry.clone());
        let decls = Arc::new(self.table_decls.clone());
        let normalizers = Arc::new(self.normalizers.clone());
        let cfg = self.search_config();
        let started = Instant::now();
        let timeout = cfg.timeout_ms;
        let result = match script {
            None => {
                match state::prove(sig, registry, decls, normalizers, hyps, concl, cfg) {
                    Ok((SearchOutcome::Proved(th), stats, trace)) => {
                        self.trace_out.extend(trace);
                        Ok((th, stats.items, stats.steps_fired))
                    }
                    Ok((SearchOutcome::Failed(rep), stats, trace)) => {
                        self.trace_out.extend(trace);
                        let reason = if started.elapsed().as_millis() as u64 >= timeout {
                            "timeout"
                        } else {
                            "failed"
                        };
                        let _ = rep;
                        Err((reason.to_string(), stats.items, stats.steps_fired))
                    }
                    Err(e) => Err((format!("error: {}", e), 0, 0)),
                }
            }
            Some(sc) => {
                match script::execute_lemma(
                    sig, registry, decls, normalizers, hyps, concl, frees, sc, cfg,
                ) {
                    Ok((th, stats, trace)) => {
                        self.trace_out.extend(trace);
                        Ok((th, stats.items, stats.steps_fired))
                    }
                    Err((rep, trace)) => {
                        self.trace_out.extend(trace);
                        let reason = match rep.failed_step {
                            Some(i) => format!("failed at step {}", i),
                            None => {
                                if started.elapsed().as_millis() as u64 >= timeout {
                                    "timeout".to_string()
                                } else {
                                    "failed".to_string()
                                }
                            }
                        };
                        Err((reason, rep.stats.items, rep.stats.steps_fired))
                    }
                }
            }
        };
        // Generalize the statement's free variables.
        result.and_then(|(th, items, steps)| {
            let names: Vec<Name> = frees.iter().map(|(n, _)| Arc::from(n.as_str())).collect();
            match generalize(&th, &names) {
                Ok(g) => Ok((g, items, steps)),
                Err(e) => Err((format!("error: {}", e), items, steps)),
            }
        })
    }
}

fn schematize_frees(t: &Term, names: &[Name]) -> Term {
    match t {
        Term::Free(n, ty) if names.iter().any(|m| m == n) => {
            Term::Schematic(n.clone(), ty.clone())
        }
        Term::Abs(h, ty, b) => Term::Abs(
            h.clone(),
            ty.clone(),
            Arc::new(schematize_frees(b, names)),
        ),
        Term::App(f, a) => Term::App(
            Arc::new(schematize_frees(f, names)),
            Arc::new(schematize_frees(a, names)),
        ),
        _ => t.clone(),
    }
}
