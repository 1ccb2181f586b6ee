//! Rule maps for pSKI and pBCK, the Γ operator, and the iterates γ_n of the
//! least model.
//!
//! Function values are templates: every rule conclusion has the shape
//! `1·(t ↦ T)` for a syntactic `T`. [`rho`] returns conclusions as
//! [`Layered`] terms; Γ flattens them into templates.

use std::collections::{HashMap, HashSet};

use indexmap::{IndexMap, IndexSet};
use serde::Serialize;
use thiserror::Error;

use crate::dist::{Dist, Outcome};
use crate::syntax::{Language, Layered, Signature, Symbol, Template, Term};

/// An element of `D({⊥} + Λ^Λ)` with functions given as templates.
pub type Behaviour = Dist<Outcome<Template>>;

/// A rule conclusion before flattening.
pub type RuleOutput = Dist<Outcome<Layered>>;

pub const DEFAULT_ITERS: usize = 64;
pub const DEFAULT_MAX_TERMS: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EvalError {
    #[error("symbol `{symbol}` is not part of {language}")]
    UnknownSymbol { symbol: Symbol, language: Language },
    #[error("`{symbol}` expects {expected} operand(s), got {found}")]
    Arity {
        symbol: Symbol,
        expected: usize,
        found: usize,
    },
    #[error("operand {position} of `{symbol}` needs a behaviour")]
    MissingOperand { symbol: Symbol, position: usize },
    #[error("explicit second level has no entry for argument `{0}`")]
    MissingSecondLevel(String),
    #[error("evaluation touched {terms} terms, over the limit of {limit}")]
    ResourceLimit { terms: usize, limit: usize },
}

/// A finite function table: argument ↦ behaviour.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FnTable {
    entries: IndexMap<Term, Behaviour>,
}

impl FnTable {
    pub fn new(entries: impl IntoIterator<Item = (Term, Behaviour)>) -> Self {
        FnTable {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn get(&self, arg: &Term) -> Option<&Behaviour> {
        self.entries.get(arg)
    }

    pub fn args(&self) -> impl Iterator<Item = &Term> {
        self.entries.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Term, &Behaviour)> {
        self.entries.iter()
    }
}

/// An explicit depth-2 behaviour: a distribution over ⊥ and indices into a
/// list of function tables.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthTwo {
    pub outer: Dist<Outcome<usize>>,
    pub functions: Vec<FnTable>,
}

impl DepthTwo {
    pub fn apply(&self, i: usize, arg: &Term) -> Result<&Behaviour, EvalError> {
        self.functions[i]
            .get(arg)
            .ok_or_else(|| EvalError::MissingSecondLevel(arg.to_string()))
    }
}

/// One operand of a rule: the term, its current behaviour when the rule
/// needs it, and optionally an explicit second level.
#[derive(Clone, Copy, Debug)]
pub struct Operand<'a> {
    pub term: &'a Term,
    pub behaviour: Option<&'a Behaviour>,
    pub depth_two: Option<&'a DepthTwo>,
}

impl<'a> Operand<'a> {
    pub fn term(term: &'a Term) -> Self {
        Operand {
            term,
            behaviour: None,
            depth_two: None,
        }
    }

    pub fn with_behaviour(term: &'a Term, behaviour: &'a Behaviour) -> Self {
        Operand {
            term,
            behaviour: Some(behaviour),
            depth_two: None,
        }
    }
}

fn value(l: Layered) -> RuleOutput {
    Dist::dirac(Outcome::Value(l))
}

fn unary(sym: Symbol, l: Layered) -> Layered {
    Layered::Op(sym, vec![l])
}

fn binary(sym: Symbol, a: Layered, b: Layered) -> Layered {
    Layered::Op(sym, vec![a, b])
}

fn embed(b: &Behaviour) -> RuleOutput {
    b.map(|o| match o {
        Outcome::Bottom => Outcome::Bottom,
        Outcome::Value(t) => Outcome::Value(Layered::Leaf(t.clone())),
    })
}

/// Which operands a symbol's rule reads the behaviour of.
pub fn needs_behaviour(symbol: Symbol, position: usize) -> bool {
    matches!((symbol, position), (Symbol::Choice, _) | (Symbol::App, 0))
}

/// The rule map for one symbol. `oracle` resolves second-level behaviours
/// for the application rule when the left operand has no explicit depth-2
/// object.
pub fn rho(
    language: Language,
    symbol: Symbol,
    operands: &[Operand<'_>],
    oracle: &mut dyn FnMut(&Term) -> Result<Behaviour, EvalError>,
) -> Result<RuleOutput, EvalError> {
    if !Signature::new(language).contains(symbol) {
        return Err(EvalError::UnknownSymbol { symbol, language });
    }
    if operands.len() != symbol.arity() {
        return Err(EvalError::Arity {
            symbol,
            expected: symbol.arity(),
            found: operands.len(),
        });
    }
    let leaf = |k: usize| Layered::leaf(operands[k].term);
    let behaviour = |k: usize| {
        operands[k]
            .behaviour
            .ok_or(EvalError::MissingOperand { symbol, position: k })
    };
    use Symbol::*;
    Ok(match symbol {
        S => value(unary(Sp, Layered::hole())),
        Sp => value(binary(Spp, leaf(0), Layered::hole())),
        Spp => value(Layered::app(
            Layered::app(leaf(0), Layered::hole()),
            Layered::app(leaf(1), Layered::hole()),
        )),
        B => value(unary(Bp, Layered::hole())),
        Bp => value(binary(Bpp, leaf(0), Layered::hole())),
        Bpp => value(Layered::app(leaf(0), Layered::app(leaf(1), Layered::hole()))),
        C => value(unary(Cp, Layered::hole())),
        Cp => value(binary(Cpp, leaf(0), Layered::hole())),
        Cpp => value(Layered::app(Layered::app(leaf(0), Layered::hole()), leaf(1))),
        K => value(unary(Kp, Layered::hole())),
        Kp => value(leaf(0)),
        I => value(Layered::hole()),
        Omega => Dist::dirac(Outcome::Bottom),
        Choice => {
            let (l, r) = (embed(behaviour(0)?), embed(behaviour(1)?));
            Dist::from_weights_unchecked(
                l.iter()
                    .map(|(o, p)| (o.clone(), 0.5 * p))
                    .chain(r.iter().map(|(o, p)| (o.clone(), 0.5 * p))),
            )
        }
        App => {
            let arg = operands[1].term;
            let mut out: Vec<(Outcome<Layered>, f64)> = Vec::new();
            if let Some(phi) = operands[0].depth_two {
                for (o, p) in phi.outer.iter() {
                    match o {
                        Outcome::Bottom => out.push((Outcome::Bottom, p)),
                        Outcome::Value(i) => {
                            for (b, q) in embed(phi.apply(*i, arg)?).iter() {
                                out.push((b.clone(), p * q));
                            }
                        }
                    }
                }
            } else {
                for (o, p) in behaviour(0)?.iter() {
                    match o {
                        Outcome::Bottom => out.push((Outcome::Bottom, p)),
                        Outcome::Value(f) => {
                            let b = oracle(&f.instantiate(arg))?;
                            for (x, q) in embed(&b).iter() {
                                out.push((x.clone(), p * q));
                            }
                        }
                    }
                }
            }
            Dist::from_weights_unchecked(out)
        }
    })
}

/// Flattens a rule conclusion into a behaviour.
pub fn flatten_output(out: &RuleOutput) -> Behaviour {
    out.map(|o| match o {
        Outcome::Bottom => Outcome::Bottom,
        Outcome::Value(l) => Outcome::Value(l.flatten()),
    })
}

pub fn divergence_mass(b: &Behaviour) -> f64 {
    b.bottom_mass()
}

/// Computes γ_n exactly by memoized recursion on `(term, n)`. Only the
/// behaviours a rule reads are computed, so discarded arguments are never
/// evaluated.
#[derive(Clone, Debug)]
pub struct Evaluator {
    language: Language,
    max_terms: usize,
    cache: HashMap<(Term, usize), Behaviour>,
    /// Behaviours without ⊥ mass are maximal, so they stay fixed from the
    /// recorded stage on.
    settled: HashMap<Term, (usize, Behaviour)>,
    seen: IndexSet<Term>,
}

impl Evaluator {
    pub fn new(language: Language) -> Self {
        Evaluator::with_limit(language, DEFAULT_MAX_TERMS)
    }

    pub fn with_limit(language: Language, max_terms: usize) -> Self {
        Evaluator {
            language,
            max_terms,
            cache: HashMap::new(),
            settled: HashMap::new(),
            seen: IndexSet::new(),
        }
    }

    pub fn language(&self) -> Language {
        self.language
    }

    /// Every term whose behaviour has been computed at some stage.
    pub fn touched(&self) -> &IndexSet<Term> {
        &self.seen
    }

    pub fn eval(&mut self, t: &Term, n: usize) -> Result<Behaviour, EvalError> {
        if n == 0 {
            return Ok(Behaviour::bottom());
        }
        if let Some((k, b)) = self.settled.get(t) {
            if n >= *k {
                return Ok(b.clone());
            }
        }
        if let Some(b) = self.cache.get(&(t.clone(), n)) {
            return Ok(b.clone());
        }
        if !self.seen.contains(t) {
            if self.seen.len() >= self.max_terms {
                return Err(EvalError::ResourceLimit {
                    terms: self.seen.len() + 1,
                    limit: self.max_terms,
                });
            }
            self.seen.insert(t.clone());
        }
        let symbol = t.symbol().expect("closed terms have symbols");
        let children: Vec<Term> = t.children().collect();
        let mut behaviours: Vec<Option<Behaviour>> = Vec::with_capacity(children.len());
        for (k, c) in children.iter().enumerate() {
            behaviours.push(if needs_behaviour(symbol, k) {
                Some(self.eval(c, n - 1)?)
            } else {
                None
            });
        }
        let operands: Vec<Operand<'_>> = children
            .iter()
            .zip(&behaviours)
            .map(|(term, b)| Operand {
                term,
                behaviour: b.as_ref(),
                depth_two: None,
            })
            .collect();
        let language = self.language;
        let out = {
            let mut oracle = |u: &Term| self.eval(u, n - 1);
            rho(language, symbol, &operands, &mut oracle)?
        };
        let b = flatten_output(&out);
        if b.bottom_mass() == 0.0 {
            self.settled.insert(t.clone(), (n, b.clone()));
        } else {
            self.cache.insert((t.clone(), n), b.clone());
        }
        Ok(b)
    }
}

/// γ_N(term).
pub fn evaluate(term: &Term, language: Language, iters: usize) -> Result<Behaviour, EvalError> {
    check_language(term, language)?;
    Evaluator::new(language).eval(term, iters)
}

pub fn check_language(term: &Term, language: Language) -> Result<(), EvalError> {
    let sig = Signature::new(language);
    for s in term.subterms() {
        let symbol = s.symbol().expect("closed");
        if !sig.contains(symbol) {
            return Err(EvalError::UnknownSymbol { symbol, language });
        }
    }
    Ok(())
}

/// A table of iterates `γ_n` with the terms the next step will demand.
#[derive(Clone, Debug)]
pub struct EvalTable {
    pub language: Language,
    pub iteration: usize,
    entries: IndexMap<Term, Behaviour>,
    frontier: Vec<Term>,
    evaluator: Evaluator,
}

impl EvalTable {
    /// γ_0 on the seeds: everything diverges.
    pub fn new(language: Language, seeds: &[Term]) -> Self {
        let entries = seeds.iter().map(|t| (t.clone(), Behaviour::bottom())).collect();
        EvalTable {
            language,
            iteration: 0,
            entries,
            frontier: Vec::new(),
            evaluator: Evaluator::new(language),
        }
    }

    pub fn behaviour(&self, t: &Term) -> Option<&Behaviour> {
        self.entries.get(t)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Term, &Behaviour)> {
        self.entries.iter()
    }

    pub fn frontier(&self) -> &[Term] {
        &self.frontier
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Terms whose behaviours the rule for `t` reads at the next stage, given
/// the current table.
fn demands(t: &Term, table: &IndexMap<Term, Behaviour>) -> Vec<Term> {
    let symbol = t.symbol().expect("closed");
    let mut out: Vec<Term> = t
        .children()
        .enumerate()
        .filter(|(k, _)| needs_behaviour(symbol, *k))
        .map(|(_, c)| c)
        .collect();
    if symbol == Symbol::App {
        if let Some(b) = table.get(&t.child(0)) {
            let arg = t.child(1);
            out.extend(b.values().map(|(f, _)| f.instantiate(&arg)));
        }
    }
    out
}

/// One application of Γ. Every tabled and frontier term gets its exact
/// γ_{n+1}; terms demanded by the new table that are not yet tabled become
/// the new frontier.
pub fn gamma_step(mut table: EvalTable) -> Result<EvalTable, EvalError> {
    let n = table.iteration + 1;
    let mut next: IndexMap<Term, Behaviour> = IndexMap::new();
    let todo: Vec<Term> = table
        .entries
        .keys()
        .cloned()
        .chain(table.frontier.iter().cloned())
        .collect();
    for t in todo {
        if next.contains_key(&t) {
            continue;
        }
        let b = table.evaluator.eval(&t, n)?;
        if let Some(old) = table.entries.get(&t) {
            debug_assert!(
                b.bottom_mass() <= old.bottom_mass() + 1e-12,
                "⊥ mass rose for {t}"
            );
        }
        next.insert(t, b);
    }
    let mut frontier = Vec::new();
    let mut queued = HashSet::new();
    for t in next.keys() {
        for u in demands(t, &next) {
            if !next.contains_key(&u) && queued.insert(u.clone()) {
                frontier.push(u);
            }
        }
    }
    table.entries = next;
    table.frontier = frontier;
    table.iteration = n;
    Ok(table)
}

/// `j(Φ, s)` through the strength, evaluation, the ⊥ injection, the
/// codiagonal and the multiplication.
pub fn app_via_monad(phi: &DepthTwo, s: &Term) -> Result<Behaviour, EvalError> {
    #[derive(Clone, PartialEq, Eq, Hash)]
    enum Sum<A, B> {
        Inl(A),
        Inr(B),
    }
    // st: D(⊥ + F) × Λ → D((⊥ + F) × Λ)
    let paired = crate::dist::strength(&phi.outer, s);
    // D(outl + ev): ((⊥, s) ↦ ⊥, (F, s) ↦ F(s))
    let mut evaluated: Vec<(Sum<(), Behaviour>, f64)> = Vec::new();
    for ((o, arg), p) in paired.iter() {
        let x = match o {
            Outcome::Bottom => Sum::Inl(()),
            Outcome::Value(i) => Sum::Inr(phi.apply(*i, arg)?.clone()),
        };
        evaluated.push((x, p));
    }
    let evaluated = Dist::from_weights_unchecked(evaluated);
    // D(η∘inl + id), then D∇
    let injected: Dist<Sum<Behaviour, Behaviour>> = evaluated.map(|x| match x {
        Sum::Inl(()) => Sum::Inl(Behaviour::bottom()),
        Sum::Inr(b) => Sum::Inr(b.clone()),
    });
    let merged: Dist<Behaviour> = injected.map(|x| match x {
        Sum::Inl(b) | Sum::Inr(b) => b.clone(),
    });
    // μ
    Ok(crate::dist::flatten(&merged))
}

/// JSON view of a behaviour for the command line.
#[derive(Serialize)]
pub struct BehaviourReport {
    pub atoms: Vec<AtomReport>,
    pub bottom: f64,
    pub iters: usize,
}

#[derive(Serialize)]
pub struct AtomReport {
    pub v: String,
    pub p: f64,
}

impl BehaviourReport {
    pub fn new(b: &Behaviour, iters: usize) -> Self {
        let mut atoms: Vec<AtomReport> = b
            .values()
            .map(|(t, p)| AtomReport { v: t.to_string(), p })
            .collect();
        atoms.sort_by(|a, b| a.v.cmp(&b.v));
        BehaviourReport {
            atoms,
            bottom: b.bottom_mass(),
            iters,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        Term::parse(s, Language::Pbck).unwrap()
    }

    fn tpl(s: &str, l: Language) -> Template {
        Template::parse(s, l).unwrap()
    }

    fn fn_of(s: &str, l: Language) -> Behaviour {
        Dist::dirac(Outcome::Value(tpl(s, l)))
    }

    #[test]
    fn evaluate_examples() {
        for n in [0, 1, 5] {
            assert_eq!(evaluate(&t("Omega"), Language::Pbck, n).unwrap(), Behaviour::bottom());
        }
        assert_eq!(
            evaluate(&t("K"), Language::Pbck, 1).unwrap(),
            fn_of("Kp(_)", Language::Pbck)
        );
        let kio = t("K I Omega");
        assert_eq!(evaluate(&kio, Language::Pbck, 4).unwrap(), fn_of("_", Language::Pbck));
        assert_eq!(evaluate(&kio, Language::Pbck, 3).unwrap(), fn_of("_", Language::Pbck));
        assert_eq!(evaluate(&kio, Language::Pbck, 2).unwrap(), Behaviour::bottom());
    }

    #[test]
    fn discarded_argument_is_never_evaluated() {
        let mut ev = Evaluator::new(Language::Pbck);
        ev.eval(&t("K I Omega"), 10).unwrap();
        assert!(!ev.touched().contains(&t("Omega")));
        assert!(ev.touched().contains(&t("Kp(I)")));
    }

    #[test]
    fn gamma_step_examples() {
        let seeds = [t("I"), t("I (+) Omega"), t("I I")];
        let g1 = gamma_step(EvalTable::new(Language::Pbck, &seeds)).unwrap();
        assert_eq!(g1.behaviour(&t("I")).unwrap(), &fn_of("_", Language::Pbck));
        let g2 = gamma_step(g1).unwrap();
        let half = Dist::new([(Outcome::Bottom, 0.5), (Outcome::Value(Template::hole()), 0.5)]).unwrap();
        assert_eq!(g2.behaviour(&t("I (+) Omega")).unwrap(), &half);
        assert_eq!(g2.behaviour(&t("I I")).unwrap(), &fn_of("_", Language::Pbck));
        assert!((divergence_mass(g2.behaviour(&t("I (+) Omega")).unwrap()) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn table_agrees_with_evaluate() {
        let seeds = [t("C K I Omega"), t("B (K I) I (I (+) Omega)"), t("(K (+) I) I Omega")];
        let mut table = EvalTable::new(Language::Pbck, &seeds);
        for n in 1..=8 {
            table = gamma_step(table).unwrap();
            for s in &seeds {
                assert_eq!(
                    table.behaviour(s).unwrap(),
                    &evaluate(s, Language::Pbck, n).unwrap(),
                    "{s} at {n}"
                );
            }
            // Demanded instantiations are tabled or queued.
            for (u, _) in table.entries() {
                for d in demands(u, &table.entries) {
                    assert!(table.behaviour(&d).is_some() || table.frontier().contains(&d));
                }
            }
        }
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(divergence_mass(&Behaviour::bottom()), 1.0);
        assert_eq!(divergence_mass(&fn_of("_", Language::Pbck)), 0.0);
    }

    #[test]
    fn resource_limit() {
        let mut ev = Evaluator::with_limit(Language::Pbck, 2);
        assert!(matches!(
            ev.eval(&t("K I Omega"), 5),
            Err(EvalError::ResourceLimit { .. })
        ));
    }

    #[test]
    fn unknown_symbol_for_language() {
        let s = Term::parse("S", Language::Pski).unwrap();
        assert!(evaluate(&s, Language::Pbck, 2).is_err());
        let mut none = |_: &Term| -> Result<Behaviour, EvalError> { unreachable!() };
        assert!(rho(Language::Pbck, Symbol::S, &[], &mut none).is_err());
    }

    #[test]
    fn monad_examples() {
        let bottom = DepthTwo {
            outer: Dist::dirac(Outcome::Bottom),
            functions: vec![],
        };
        let s = t("K");
        assert_eq!(app_via_monad(&bottom, &s).unwrap(), Behaviour::bottom());
        let id = DepthTwo {
            outer: Dist::dirac(Outcome::Value(0)),
            functions: vec![FnTable::new([(s.clone(), fn_of("_", Language::Pbck))])],
        };
        assert_eq!(app_via_monad(&id, &s).unwrap(), fn_of("_", Language::Pbck));
    }
}
