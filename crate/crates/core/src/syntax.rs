//! Signatures, terms, templates and linear contexts for pSKI and pBCK.
//!
//! Terms are immutable trees behind `Arc`, so cloning is cheap and values can
//! be shared across threads. A single node type carries an optional hole
//! leaf; [`Term`], [`Template`] and [`Context`] are wrappers that enforce how
//! many holes are allowed.

use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The two combinatory languages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Pski,
    Pbck,
}

impl Language {
    pub fn name(self) -> &'static str {
        match self {
            Language::Pski => "pski",
            Language::Pbck => "pbck",
        }
    }

    pub fn signature(self) -> Signature {
        Signature::new(self)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pski" => Ok(Language::Pski),
            "pbck" => Ok(Language::Pbck),
            other => Err(format!("unknown language `{other}` (expected pski or pbck)")),
        }
    }
}

/// Operation symbols of both signatures. Primed combinators are the partial
/// applications produced by the rules (`Sp` is S', `Spp` is S'').
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    S,
    Sp,
    Spp,
    B,
    Bp,
    Bpp,
    C,
    Cp,
    Cpp,
    K,
    Kp,
    I,
    Omega,
    App,
    Choice,
}

impl Symbol {
    pub const ALL: [Symbol; 15] = [
        Symbol::S,
        Symbol::Sp,
        Symbol::Spp,
        Symbol::B,
        Symbol::Bp,
        Symbol::Bpp,
        Symbol::C,
        Symbol::Cp,
        Symbol::Cpp,
        Symbol::K,
        Symbol::Kp,
        Symbol::I,
        Symbol::Omega,
        Symbol::App,
        Symbol::Choice,
    ];

    pub fn arity(self) -> usize {
        match self {
            Symbol::S | Symbol::B | Symbol::C | Symbol::K | Symbol::I | Symbol::Omega => 0,
            Symbol::Sp | Symbol::Bp | Symbol::Cp | Symbol::Kp => 1,
            Symbol::Spp | Symbol::Bpp | Symbol::Cpp | Symbol::App | Symbol::Choice => 2,
        }
    }

    /// ASCII spelling used by the parser and printer. `App` and `Choice` are
    /// written infix and have no atom spelling.
    pub fn ascii(self) -> &'static str {
        match self {
            Symbol::S => "S",
            Symbol::Sp => "Sp",
            Symbol::Spp => "Spp",
            Symbol::B => "B",
            Symbol::Bp => "Bp",
            Symbol::Bpp => "Bpp",
            Symbol::C => "C",
            Symbol::Cp => "Cp",
            Symbol::Cpp => "Cpp",
            Symbol::K => "K",
            Symbol::Kp => "Kp",
            Symbol::I => "I",
            Symbol::Omega => "Omega",
            Symbol::App => "app",
            Symbol::Choice => "(+)",
        }
    }

    fn from_name(name: &str) -> Option<Symbol> {
        Some(match name {
            "S" => Symbol::S,
            "Sp" | "S'" => Symbol::Sp,
            "Spp" | "S''" => Symbol::Spp,
            "B" => Symbol::B,
            "Bp" | "B'" => Symbol::Bp,
            "Bpp" | "B''" => Symbol::Bpp,
            "C" => Symbol::C,
            "Cp" | "C'" => Symbol::Cp,
            "Cpp" | "C''" => Symbol::Cpp,
            "K" => Symbol::K,
            "Kp" | "K'" => Symbol::Kp,
            "I" => Symbol::I,
            "Omega" => Symbol::Omega,
            _ => return None,
        })
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.ascii())
    }
}

/// The operation symbols of one language with their arities.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub language: Language,
    symbols: Vec<Symbol>,
}

impl Signature {
    pub fn new(language: Language) -> Self {
        use Symbol::*;
        let symbols = match language {
            Language::Pski => vec![S, Sp, Spp, K, Kp, I, Omega, App, Choice],
            Language::Pbck => vec![B, Bp, Bpp, C, Cp, Cpp, K, Kp, I, Omega, App, Choice],
        };
        Signature { language, symbols }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn contains(&self, sym: Symbol) -> bool {
        self.symbols.contains(&sym)
    }

    pub fn arity(&self, sym: Symbol) -> Option<usize> {
        self.contains(sym).then(|| sym.arity())
    }

    pub fn constants(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.symbols.iter().copied().filter(|s| s.arity() == 0)
    }

    pub fn operations(&self, arity: usize) -> impl Iterator<Item = Symbol> + '_ {
        self.symbols.iter().copied().filter(move |s| s.arity() == arity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Head {
    Op(Symbol),
    Hole,
}

struct Node {
    head: Head,
    children: Vec<Expr>,
    size: usize,
    holes: usize,
    hash: u64,
}

/// A tree over the symbols plus the hole leaf. Structural equality, cached
/// hash and size.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn build(head: Head, children: Vec<Expr>) -> Expr {
        let size = 1 + children.iter().map(Expr::size).sum::<usize>();
        let holes = match head {
            Head::Hole => 1,
            Head::Op(_) => children.iter().map(Expr::holes).sum(),
        };
        let mut h = std::collections::hash_map::DefaultHasher::new();
        head.hash(&mut h);
        for c in &children {
            h.write_u64(c.0.hash);
        }
        let hash = h.finish();
        Expr(Arc::new(Node {
            head,
            children,
            size,
            holes,
            hash,
        }))
    }

    pub fn hole() -> Expr {
        Expr::build(Head::Hole, Vec::new())
    }

    /// Builds an operation node. Panics on an arity mismatch, which is a
    /// programming error; parsed input is checked before reaching here.
    pub fn op(sym: Symbol, children: Vec<Expr>) -> Expr {
        assert_eq!(sym.arity(), children.len(), "arity mismatch for {sym}");
        Expr::build(Head::Op(sym), children)
    }

    pub fn head(&self) -> Head {
        self.0.head
    }

    pub fn symbol(&self) -> Option<Symbol> {
        match self.0.head {
            Head::Op(s) => Some(s),
            Head::Hole => None,
        }
    }

    pub fn children(&self) -> &[Expr] {
        &self.0.children
    }

    /// Node count, holes included.
    pub fn size(&self) -> usize {
        self.0.size
    }

    pub fn holes(&self) -> usize {
        self.0.holes
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn substitute(&self, arg: &Expr) -> Expr {
        if self.holes() == 0 {
            return self.clone();
        }
        match self.0.head {
            Head::Hole => arg.clone(),
            Head::Op(sym) => Expr::build(
                Head::Op(sym),
                self.children().iter().map(|c| c.substitute(arg)).collect(),
            ),
        }
    }

    /// True when every symbol belongs to the signature.
    pub fn conforms_to(&self, sig: &Signature) -> bool {
        match self.0.head {
            Head::Hole => true,
            Head::Op(s) => sig.contains(s) && self.children().iter().all(|c| c.conforms_to(sig)),
        }
    }

    /// All subtrees, outermost first, deduplicated.
    pub fn subterms(&self) -> Vec<Expr> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if seen.insert(e.clone()) {
                for c in e.children().iter().rev() {
                    stack.push(c.clone());
                }
                out.push(e);
            }
        }
        out
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.ptr_eq(other)
            || (self.0.hash == other.0.hash
                && self.0.size == other.0.size
                && self.0.head == other.0.head
                && self.0.children == other.0.children)
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        if self.ptr_eq(other) {
            return std::cmp::Ordering::Equal;
        }
        self.0
            .head
            .cmp(&other.0.head)
            .then_with(|| self.0.children.cmp(&other.0.children))
    }
}

// Printing: `(+)` is right-associative and binds weaker than application,
// application is left-associative.
fn write_expr(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e.head() {
        Head::Op(Symbol::Choice) => {
            write_app_level(&e.children()[0], f)?;
            f.write_str(" (+) ")?;
            write_expr(&e.children()[1], f)
        }
        _ => write_app_level(e, f),
    }
}

fn write_app_level(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e.head() {
        Head::Op(Symbol::App) => {
            write_app_level(&e.children()[0], f)?;
            f.write_str(" ")?;
            write_atom(&e.children()[1], f)
        }
        _ => write_atom(e, f),
    }
}

fn write_atom(e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e.head() {
        Head::Hole => f.write_str("_"),
        Head::Op(Symbol::App) | Head::Op(Symbol::Choice) => {
            f.write_str("(")?;
            write_expr(e, f)?;
            f.write_str(")")
        }
        Head::Op(sym) if sym.arity() == 0 => f.write_str(sym.ascii()),
        Head::Op(sym) => {
            f.write_str(sym.ascii())?;
            f.write_str("(")?;
            for (i, c) in e.children().iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_expr(c, f)?;
            }
            f.write_str(")")
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self, f)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{self}`")
    }
}

macro_rules! expr_wrapper {
    ($name:ident) => {
        impl $name {
            pub fn expr(&self) -> &Expr {
                &self.0
            }

            pub fn size(&self) -> usize {
                self.0.size()
            }

            pub fn symbol(&self) -> Option<Symbol> {
                self.0.symbol()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(&self.0, f)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Debug::fmt(&self.0, f)
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(&self.0)
            }
        }
    };
}

/// A closed term.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term(Expr);
expr_wrapper!(Term);

impl Term {
    /// Wraps an expression, rejecting holes.
    pub fn from_expr(e: Expr) -> Option<Term> {
        (e.holes() == 0).then_some(Term(e))
    }

    pub fn new(sym: Symbol, children: Vec<Term>) -> Term {
        Term(Expr::op(sym, children.into_iter().map(|t| t.0).collect()))
    }

    pub fn constant(sym: Symbol) -> Term {
        Term::new(sym, Vec::new())
    }

    pub fn app(f: Term, x: Term) -> Term {
        Term::new(Symbol::App, vec![f, x])
    }

    pub fn choice(l: Term, r: Term) -> Term {
        Term::new(Symbol::Choice, vec![l, r])
    }

    pub fn children(&self) -> impl ExactSizeIterator<Item = Term> + '_ {
        self.0.children().iter().map(|c| Term(c.clone()))
    }

    pub fn child(&self, i: usize) -> Term {
        Term(self.0.children()[i].clone())
    }

    pub fn subterms(&self) -> Vec<Term> {
        self.0.subterms().into_iter().map(Term).collect()
    }

    pub fn parse(text: &str, language: Language) -> Result<Term, ParseError> {
        parse_term(text, &Signature::new(language))
    }
}

/// A term with any number of holes: the syntactic form of a function in
/// the semantics. Instantiation replaces every hole by the argument.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Template(Expr);
expr_wrapper!(Template);

impl Template {
    pub fn from_expr(e: Expr) -> Template {
        Template(e)
    }

    pub fn hole() -> Template {
        Template(Expr::hole())
    }

    pub fn closed(t: &Term) -> Template {
        Template(t.0.clone())
    }

    pub fn op(sym: Symbol, children: Vec<Template>) -> Template {
        Template(Expr::op(sym, children.into_iter().map(|t| t.0).collect()))
    }

    pub fn app(f: Template, x: Template) -> Template {
        Template::op(Symbol::App, vec![f, x])
    }

    pub fn holes(&self) -> usize {
        self.0.holes()
    }

    pub fn is_affine(&self) -> bool {
        self.holes() <= 1
    }

    pub fn is_hole(&self) -> bool {
        self.0.head() == Head::Hole
    }

    /// The closed term when there are no holes.
    pub fn as_term(&self) -> Option<Term> {
        Term::from_expr(self.0.clone())
    }

    pub fn instantiate(&self, arg: &Term) -> Term {
        instantiate(self, arg)
    }

    pub fn parse(text: &str, language: Language) -> Result<Template, ParseError> {
        parse_template(text, &Signature::new(language))
    }
}

/// A template whose hole occurs at most once.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context(Expr);
expr_wrapper!(Context);

impl Context {
    pub fn from_expr(e: Expr) -> Option<Context> {
        (e.holes() <= 1).then_some(Context(e))
    }

    pub fn empty() -> Context {
        Context(Expr::hole())
    }

    pub fn holes(&self) -> usize {
        self.0.holes()
    }

    pub fn plug(&self, t: &Term) -> Term {
        Term(self.0.substitute(&t.0))
    }

    pub fn as_template(&self) -> Template {
        Template(self.0.clone())
    }

    pub fn parse(text: &str, language: Language) -> Result<Context, ParseError> {
        parse_context(text, &Signature::new(language))
    }
}

/// Replaces every hole of `tpl` by `arg`.
pub fn instantiate(tpl: &Template, arg: &Term) -> Term {
    Term(tpl.0.substitute(&arg.0))
}

/// A Σ*-term whose leaves are templates: the shape of a rule conclusion
/// before flattening. A bare hole is `Leaf(Template::hole())`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Layered {
    Op(Symbol, Vec<Layered>),
    Leaf(Template),
}

impl Layered {
    pub fn hole() -> Layered {
        Layered::Leaf(Template::hole())
    }

    pub fn leaf(t: &Term) -> Layered {
        Layered::Leaf(Template::closed(t))
    }

    pub fn app(f: Layered, x: Layered) -> Layered {
        Layered::Op(Symbol::App, vec![f, x])
    }

    pub fn flatten(&self) -> Template {
        match self {
            Layered::Leaf(t) => t.clone(),
            Layered::Op(sym, cs) => Template::op(*sym, cs.iter().map(Layered::flatten).collect()),
        }
    }

    pub fn holes(&self) -> usize {
        match self {
            Layered::Leaf(t) => t.holes(),
            Layered::Op(_, cs) => cs.iter().map(Layered::holes).sum(),
        }
    }

    /// Replaces holes inside every leaf; the layer structure is kept.
    pub fn instantiate(&self, arg: &Term) -> Layered {
        match self {
            Layered::Leaf(t) => Layered::Leaf(Template::closed(&t.instantiate(arg))),
            Layered::Op(sym, cs) => {
                Layered::Op(*sym, cs.iter().map(|c| c.instantiate(arg)).collect())
            }
        }
    }
}

impl fmt::Display for Layered {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layered::Leaf(t) => write!(f, "[{t}]"),
            Layered::Op(sym, cs) if cs.is_empty() => write!(f, "{sym}"),
            Layered::Op(sym, cs) => {
                write!(f, "{sym}(")?;
                for (i, c) in cs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("lexical error at {pos}: unexpected character `{ch}`")]
    Lexical { pos: usize, ch: char },
    #[error("unknown symbol `{name}` at {pos}")]
    UnknownSymbol { pos: usize, name: String },
    #[error("symbol `{symbol}` at {pos} is not in the {language} signature")]
    NotInSignature {
        pos: usize,
        symbol: Symbol,
        language: Language,
    },
    #[error("symbol `{symbol}` at {pos} expects {expected} argument(s), found {found}")]
    Arity {
        pos: usize,
        symbol: Symbol,
        expected: usize,
        found: usize,
    },
    #[error("unexpected {found} at {pos}, expected {expected}")]
    Unexpected {
        pos: usize,
        found: String,
        expected: &'static str,
    },
    #[error("hole `_` at {pos} is not allowed in a closed term")]
    HoleInTerm { pos: usize },
    #[error("context has {holes} holes, at most one allowed")]
    NonLinearContext { holes: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Name(String),
    Hole,
    LParen,
    RParen,
    Comma,
    Plus,
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Name(n) => write!(f, "`{n}`"),
            Tok::Hole => f.write_str("`_`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Plus => f.write_str("`(+)`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < text.len() {
        let ch = text[i..].chars().next().expect("in bounds");
        if ch.is_whitespace() {
            i += ch.len_utf8();
        } else if text[i..].starts_with("(+)") {
            out.push((i, Tok::Plus));
            i += 3;
        } else if ch == '⊕' {
            out.push((i, Tok::Plus));
            i += ch.len_utf8();
        } else if ch == 'Ω' {
            out.push((i, Tok::Name("Omega".into())));
            i += ch.len_utf8();
        } else if ch == '(' {
            out.push((i, Tok::LParen));
            i += 1;
        } else if ch == ')' {
            out.push((i, Tok::RParen));
            i += 1;
        } else if ch == ',' {
            out.push((i, Tok::Comma));
            i += 1;
        } else if ch == '_' {
            out.push((i, Tok::Hole));
            i += 1;
        } else if ch.is_ascii_alphabetic() {
            let start = i;
            while i < text.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'\'') {
                i += 1;
            }
            out.push((start, Tok::Name(text[start..i].to_string())));
        } else {
            return Err(ParseError::Lexical { pos: i, ch });
        }
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    at: usize,
    sig: &'a Signature,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn unexpected(&self, expected: &'static str) -> ParseError {
        ParseError::Unexpected {
            pos: self.pos(),
            found: self.peek().to_string(),
            expected,
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let left = self.app()?;
        if *self.peek() == Tok::Plus {
            self.bump();
            let right = self.term()?;
            Ok(Expr::op(Symbol::Choice, vec![left, right]))
        } else {
            Ok(left)
        }
    }

    fn starts_atom(&self) -> bool {
        matches!(self.peek(), Tok::Name(_) | Tok::Hole | Tok::LParen)
    }

    fn app(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.atom()?;
        while self.starts_atom() {
            let arg = self.atom()?;
            acc = Expr::op(Symbol::App, vec![acc, arg]);
        }
        Ok(acc)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (pos, tok) = self.bump();
        match tok {
            Tok::Hole => Ok(Expr::hole()),
            Tok::LParen => {
                let e = self.term()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected("`)`"));
                }
                self.bump();
                Ok(e)
            }
            Tok::Name(name) => {
                let symbol =
                    Symbol::from_name(&name).ok_or(ParseError::UnknownSymbol { pos, name })?;
                if !self.sig.contains(symbol) {
                    return Err(ParseError::NotInSignature {
                        pos,
                        symbol,
                        language: self.sig.language,
                    });
                }
                let expected = symbol.arity();
                if expected == 0 {
                    return Ok(Expr::op(symbol, Vec::new()));
                }
                if *self.peek() != Tok::LParen {
                    return Err(ParseError::Arity {
                        pos,
                        symbol,
                        expected,
                        found: 0,
                    });
                }
                self.bump();
                let mut args = vec![self.term()?];
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.term()?);
                }
                if *self.peek() != Tok::RParen {
                    return Err(self.unexpected("`,` or `)`"));
                }
                self.bump();
                if args.len() != expected {
                    return Err(ParseError::Arity {
                        pos,
                        symbol,
                        expected,
                        found: args.len(),
                    });
                }
                Ok(Expr::op(symbol, args))
            }
            _ => Err(ParseError::Unexpected {
                pos,
                found: tok.to_string(),
                expected: "a term",
            }),
        }
    }
}

/// Parses an expression that may contain holes.
pub fn parse_expr(text: &str, sig: &Signature) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(text)?,
        at: 0,
        sig,
    };
    let e = p.term()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("end of input"));
    }
    Ok(e)
}

pub fn parse_term(text: &str, sig: &Signature) -> Result<Term, ParseError> {
    let e = parse_expr(text, sig)?;
    if e.holes() > 0 {
        let pos = lex(text)?
            .into_iter()
            .find(|(_, t)| *t == Tok::Hole)
            .map_or(0, |(p, _)| p);
        return Err(ParseError::HoleInTerm { pos });
    }
    Ok(Term(e))
}

pub fn parse_template(text: &str, sig: &Signature) -> Result<Template, ParseError> {
    parse_expr(text, sig).map(Template)
}

pub fn parse_context(text: &str, sig: &Signature) -> Result<Context, ParseError> {
    let e = parse_expr(text, sig)?;
    let holes = e.holes();
    Context::from_expr(e).ok_or(ParseError::NonLinearContext { holes })
}

pub fn print_term(t: &Term) -> String {
    t.to_string()
}

/// Every context with exactly one hole, of node count at most `max_size`,
/// whose other leaves are constants of the signature or pool members. Pool
/// members count as a single node. Output is ordered by size, then by the
/// printed form, and free of duplicates.
pub fn enumerate_contexts(sig: &Signature, max_size: usize, leaf_pool: &[Term]) -> Vec<Context> {
    if max_size == 0 {
        return Vec::new();
    }
    let mut leaves: Vec<Expr> = sig.constants().map(|s| Expr::op(s, Vec::new())).collect();
    for t in leaf_pool {
        if !leaves.contains(t.expr()) {
            leaves.push(t.expr().clone());
        }
    }
    let unary: Vec<Symbol> = sig.operations(1).collect();
    let binary: Vec<Symbol> = sig.operations(2).collect();

    // closed[n]: closed trees of weight n; ctx[n]: one-hole trees of weight n.
    let mut closed: Vec<Vec<Expr>> = vec![Vec::new(); max_size + 1];
    let mut ctx: Vec<Vec<Expr>> = vec![Vec::new(); max_size + 1];
    closed[1] = leaves;
    ctx[1] = vec![Expr::hole()];
    for n in 2..=max_size {
        let mut cl = Vec::new();
        let mut cx = Vec::new();
        for &u in &unary {
            cl.extend(closed[n - 1].iter().map(|c| Expr::op(u, vec![c.clone()])));
            cx.extend(ctx[n - 1].iter().map(|c| Expr::op(u, vec![c.clone()])));
        }
        for &b in &binary {
            for a in 1..n - 1 {
                let r = n - 1 - a;
                for x in &closed[a] {
                    for y in &closed[r] {
                        cl.push(Expr::op(b, vec![x.clone(), y.clone()]));
                    }
                    for y in &ctx[r] {
                        cx.push(Expr::op(b, vec![x.clone(), y.clone()]));
                    }
                }
                for x in &ctx[a] {
                    for y in &closed[r] {
                        cx.push(Expr::op(b, vec![x.clone(), y.clone()]));
                    }
                }
            }
        }
        if n < max_size {
            closed[n] = cl;
        }
        ctx[n] = cx;
    }

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for level in ctx {
        let mut keyed: Vec<(String, Expr)> = level.into_iter().map(|e| (e.to_string(), e)).collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0));
        for (_, e) in keyed {
            if seen.insert(e.clone()) {
                out.push(Context(e));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pbck() -> Signature {
        Signature::new(Language::Pbck)
    }

    fn pski() -> Signature {
        Signature::new(Language::Pski)
    }

    fn k() -> Term {
        Term::constant(Symbol::K)
    }

    fn i() -> Term {
        Term::constant(Symbol::I)
    }

    fn omega() -> Term {
        Term::constant(Symbol::Omega)
    }

    #[test]
    fn shared_symbols() {
        let a: HashSet<_> = pski().symbols().iter().copied().collect();
        let b: HashSet<_> = pbck().symbols().iter().copied().collect();
        let shared: HashSet<_> = a.intersection(&b).copied().collect();
        use Symbol::*;
        assert_eq!(shared, [K, Kp, I, Omega, App, Choice].into_iter().collect());
    }

    #[test]
    fn parses_application_left_assoc() {
        assert_eq!(parse_term("K I", &pski()).unwrap(), Term::app(k(), i()));
        let kio = parse_term("K I Omega", &pbck()).unwrap();
        assert_eq!(kio, Term::app(Term::app(k(), i()), omega()));
    }

    #[test]
    fn choice_binds_weaker() {
        let t = parse_term("I (+) Omega", &pski()).unwrap();
        assert_eq!(t, Term::choice(i(), omega()));
        let t = parse_term("K I (+) Omega", &pski()).unwrap();
        assert_eq!(t, Term::choice(Term::app(k(), i()), omega()));
    }

    #[test]
    fn primed_symbol_takes_arguments() {
        let t = parse_term("Spp(K, I) Omega", &pski()).unwrap();
        let spp = Term::new(Symbol::Spp, vec![k(), i()]);
        assert_eq!(t, Term::app(spp, omega()));
        assert_eq!(t.to_string(), "Spp(K, I) Omega");
        assert_eq!(parse_term("S''(K, I) Omega", &pski()).unwrap(), t);
    }

    #[test]
    fn parse_errors_carry_positions() {
        assert!(matches!(
            parse_term("K # I", &pski()),
            Err(ParseError::Lexical { pos: 2, ch: '#' })
        ));
        assert!(matches!(
            parse_term("I Kp(I, I)", &pski()),
            Err(ParseError::Arity { pos: 2, expected: 1, found: 2, .. })
        ));
        assert!(matches!(
            parse_term("I B", &pski()),
            Err(ParseError::NotInSignature { pos: 2, .. })
        ));
        assert!(matches!(
            parse_term("S", &pbck()),
            Err(ParseError::NotInSignature { pos: 0, .. })
        ));
        assert!(matches!(
            parse_term("K _", &pbck()),
            Err(ParseError::HoleInTerm { pos: 2 })
        ));
        assert!(matches!(
            parse_term("Foo", &pbck()),
            Err(ParseError::UnknownSymbol { pos: 0, .. })
        ));
        assert!(parse_term("(K", &pbck()).is_err());
        assert!(parse_term("", &pbck()).is_err());
        assert!(parse_term("K )", &pbck()).is_err());
    }

    #[test]
    fn instantiate_examples() {
        let hole = Template::hole();
        assert_eq!(instantiate(&hole, &i()), i());

        let tpl = parse_template("(K _) (Kp(_))", &pbck()).unwrap();
        assert_eq!(tpl.holes(), 2);
        let got = instantiate(&tpl, &omega());
        let want = Term::app(
            Term::app(k(), omega()),
            Term::new(Symbol::Kp, vec![omega()]),
        );
        assert_eq!(got, want);

        let constant = parse_template("Kp(I)", &pbck()).unwrap();
        assert_eq!(constant.holes(), 0);
        assert_eq!(
            instantiate(&constant, &omega()),
            Term::new(Symbol::Kp, vec![i()])
        );
    }

    #[test]
    fn contexts_reject_two_holes() {
        assert!(parse_context("_ _", &pbck()).is_err());
        assert_eq!(parse_context("_ I", &pbck()).unwrap().holes(), 1);
    }

    #[test]
    fn size_one_contexts() {
        let cs = enumerate_contexts(&pbck(), 1, &[]);
        assert_eq!(cs, vec![Context::empty()]);
    }

    #[test]
    fn size_two_contexts_match_hand_count() {
        // One unary wrapper around the hole per primed unary symbol.
        let cs = enumerate_contexts(&pbck(), 2, &[]);
        let printed: Vec<String> = cs.iter().map(|c| c.to_string()).collect();
        assert_eq!(printed, vec!["_", "Bp(_)", "Cp(_)", "Kp(_)"]);
        // `_ (+) Omega` needs three nodes.
        let cs3 = enumerate_contexts(&pbck(), 3, &[]);
        let printed3: Vec<String> = cs3.iter().map(|c| c.to_string()).collect();
        assert!(printed3.contains(&"_ (+) Omega".to_string()));
        assert!(printed3.contains(&"Kp(Kp(_))".to_string()));
    }

    /// Counts one-hole shapes by the recurrence on node count, independently
    /// of the enumerator.
    fn count_oracle(leaves: u64, unary: u64, binary: u64, max: usize) -> u64 {
        let mut c = vec![0u64; max + 1];
        let mut h = vec![0u64; max + 1];
        c[1] = leaves;
        h[1] = 1;
        for n in 2..=max {
            c[n] = unary * c[n - 1];
            h[n] = unary * h[n - 1];
            for a in 1..n - 1 {
                let b = n - 1 - a;
                c[n] += binary * c[a] * c[b];
                h[n] += binary * (h[a] * c[b] + c[a] * h[b]);
            }
        }
        h[1..].iter().sum()
    }

    #[test]
    fn context_count_matches_recurrence() {
        // pBCK: leaves B C K I Omega, unary Bp Cp Kp, binary Bpp Cpp app (+).
        assert_eq!(count_oracle(5, 3, 4, 3), 1 + 3 + 49);
        for max in 1..=4 {
            let got = enumerate_contexts(&pbck(), max, &[]).len() as u64;
            assert_eq!(got, count_oracle(5, 3, 4, max), "pbck max_size {max}");
            let got = enumerate_contexts(&pski(), max, &[]).len() as u64;
            assert_eq!(got, count_oracle(4, 2, 3, max), "pski max_size {max}");
        }
    }

    #[test]
    fn contexts_ordered_and_linear() {
        let pool = vec![Term::app(k(), i())];
        let cs = enumerate_contexts(&pbck(), 4, &pool);
        assert!(cs.iter().all(|c| c.holes() == 1));
        let plain = enumerate_contexts(&pbck(), 4, &[]);
        for w in plain.windows(2) {
            let a = (w[0].size(), w[0].to_string());
            let b = (w[1].size(), w[1].to_string());
            assert!(a < b, "{a:?} before {b:?}");
        }
        let set: HashSet<_> = cs.iter().cloned().collect();
        assert_eq!(set.len(), cs.len());
        assert!(cs.contains(&parse_context("_ (K I)", &pbck()).unwrap()));
    }

    #[test]
    fn layered_flatten_and_instantiate() {
        let t = k();
        let s = i();
        let l = Layered::app(
            Layered::app(Layered::leaf(&t), Layered::hole()),
            Layered::app(Layered::leaf(&s), Layered::hole()),
        );
        assert_eq!(l.holes(), 2);
        assert_eq!(l.flatten().to_string(), "K _ (I _)");
        let inst = l.instantiate(&omega());
        assert_eq!(inst.holes(), 0);
        assert_eq!(inst.flatten().to_string(), "K Omega (I Omega)");
    }
}
