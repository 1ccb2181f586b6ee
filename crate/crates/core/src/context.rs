//! Lower bounds on the contextual pseudometric by enumerating linear
//! contexts, and soundness cross-checks against the behavioural engines.

use rayon::prelude::*;
use serde::Serialize;

use crate::conformance::{bisimilarity, pseudometric, ConformanceConfig, ConformanceError};
use crate::semantics::{divergence_mass, EvalError, Evaluator, DEFAULT_MAX_TERMS};
use crate::syntax::{enumerate_contexts, Context, Language, Signature, Term};

/// Gap above which two divergence masses count as different.
pub const GAP_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct CtxConfig {
    pub language: Language,
    pub max_ctx_size: usize,
    /// Extra context leaves; `None` means every subterm of the two terms.
    pub pool: Option<Vec<Term>>,
    pub iters: usize,
    /// Evaluation budget per context.
    pub max_terms: usize,
}

impl CtxConfig {
    pub fn new(language: Language, max_ctx_size: usize, iters: usize) -> Self {
        CtxConfig {
            language,
            max_ctx_size,
            pool: None,
            iters,
            max_terms: DEFAULT_MAX_TERMS,
        }
    }

    pub fn with_pool(mut self, pool: Vec<Term>) -> Self {
        self.pool = Some(pool);
        self
    }

    fn resolved_pool(&self, t: &Term, s: &Term) -> Vec<Term> {
        match &self.pool {
            Some(p) => p.clone(),
            None => default_pool(t, s),
        }
    }
}

/// Every non-constant subterm of `t` and `s`, without duplicates.
pub fn default_pool(t: &Term, s: &Term) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::new();
    for u in t.subterms().into_iter().chain(s.subterms()) {
        if u.expr().children().is_empty() || out.contains(&u) {
            continue;
        }
        out.push(u);
    }
    out.sort();
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CtxBound {
    pub lower_bound: f64,
    #[serde(serialize_with = "ser_display_opt")]
    pub witness: Option<Context>,
    pub max_ctx_size: usize,
    #[serde(rename = "N")]
    pub iters: usize,
    pub contexts: usize,
    /// Contexts whose evaluation exceeded the budget.
    pub skipped: usize,
}

fn ser_display_opt<S: serde::Serializer>(c: &Option<Context>, s: S) -> Result<S::Ok, S::Error> {
    match c {
        Some(c) => s.collect_str(c),
        None => s.serialize_none(),
    }
}

/// Divergence gap of `t` and `s` inside one context at depth `iters`.
pub fn context_gap(
    c: &Context,
    t: &Term,
    s: &Term,
    language: Language,
    iters: usize,
    max_terms: usize,
) -> Result<f64, EvalError> {
    let mut ev = Evaluator::with_limit(language, max_terms);
    let bt = ev.eval(&c.plug(t), iters)?;
    let bs = ev.eval(&c.plug(s), iters)?;
    Ok((divergence_mass(&bt) - divergence_mass(&bs)).abs())
}

fn gaps(t: &Term, s: &Term, cfg: &CtxConfig) -> (Vec<Context>, Vec<Option<f64>>) {
    let pool = cfg.resolved_pool(t, s);
    let ctxs = enumerate_contexts(&Signature::new(cfg.language), cfg.max_ctx_size, &pool);
    let gaps = ctxs
        .par_iter()
        .map(|c| context_gap(c, t, s, cfg.language, cfg.iters, cfg.max_terms).ok())
        .collect();
    (ctxs, gaps)
}

/// Max divergence gap over the enumerated contexts. Ties go to the earliest
/// context in enumeration order.
pub fn ctx_distance_lower(t: &Term, s: &Term, cfg: &CtxConfig) -> CtxBound {
    let (ctxs, gaps) = gaps(t, s, cfg);
    let mut best: Option<(usize, f64)> = None;
    for (k, g) in gaps.iter().enumerate() {
        if let Some(g) = *g {
            if best.is_none_or(|(_, b)| g > b) {
                best = Some((k, g));
            }
        }
    }
    CtxBound {
        lower_bound: best.map_or(0.0, |(_, g)| g),
        witness: best.map(|(k, _)| ctxs[k].clone()),
        max_ctx_size: cfg.max_ctx_size,
        iters: cfg.iters,
        contexts: ctxs.len(),
        skipped: gaps.iter().filter(|g| g.is_none()).count(),
    }
}

/// The first context whose gap exceeds [`GAP_TOL`]. `None` proves nothing.
pub fn ctx_equiv_witness(t: &Term, s: &Term, cfg: &CtxConfig) -> Option<(Context, f64)> {
    let (ctxs, gaps) = gaps(t, s, cfg);
    ctxs.into_iter()
        .zip(gaps)
        .find_map(|(c, g)| g.filter(|&g| g > GAP_TOL).map(|g| (c, g)))
}

/// Closed terms of node count at most `max_size` whose leaves are
/// constants or pool members (a pool member counts as one node).
pub fn small_terms(sig: &Signature, max_size: usize, pool: &[Term]) -> Vec<Term> {
    let mut by_size: Vec<Vec<Term>> = vec![Vec::new(); max_size + 1];
    if max_size == 0 {
        return Vec::new();
    }
    by_size[1] = sig.constants().map(Term::constant).chain(pool.iter().cloned()).collect();
    for w in 2..=max_size {
        let mut level = Vec::new();
        for sym in sig.operations(1) {
            for a in &by_size[w - 1] {
                level.push(Term::new(sym, vec![a.clone()]));
            }
        }
        for sym in sig.operations(2) {
            for wl in 1..w - 1 {
                for a in &by_size[wl] {
                    for b in &by_size[w - 1 - wl] {
                        level.push(Term::new(sym, vec![a.clone(), b.clone()]));
                    }
                }
            }
        }
        by_size[w] = level;
    }
    let mut out: Vec<Term> = by_size.concat();
    out.sort();
    out.dedup();
    out
}

#[derive(Clone, Debug)]
pub struct SoundnessConfig {
    pub language: Language,
    pub max_ctx_size: usize,
    pub iters: usize,
    /// Layers of universe growth for the behavioural engine.
    pub closure_depth: usize,
    pub max_terms: usize,
    /// Size bound for test arguments built from constants and the pool.
    pub arg_size: usize,
    pub tol: f64,
}

impl SoundnessConfig {
    pub fn new(language: Language) -> Self {
        SoundnessConfig {
            language,
            max_ctx_size: 4,
            iters: 16,
            closure_depth: 2,
            max_terms: 400,
            arg_size: 2,
            tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SoundnessKind {
    /// Context gap above the pseudometric.
    Bound,
    /// Bisimilar terms separated by a context.
    Separated,
    /// Pseudometric below the plain divergence gap.
    Adequacy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoundnessViolation {
    pub kind: SoundnessKind,
    pub t: String,
    pub s: String,
    pub lower: f64,
    pub upper: f64,
    pub witness: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub t: String,
    pub s: String,
    pub behavioural: f64,
    pub ctx_lower: f64,
    pub universe: usize,
    pub closed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoundnessReport {
    pub pairs: Vec<PairReport>,
    pub violations: Vec<SoundnessViolation>,
}

/// Behavioural distance between `t` and `s` from a universe grown around
/// the pair, with small closed test arguments built from the pool.
pub fn pair_distance(t: &Term, s: &Term, cfg: &SoundnessConfig) -> Result<(f64, usize, bool), ConformanceError> {
    let pool = default_pool(t, s);
    let args = small_terms(&Signature::new(cfg.language), cfg.arg_size, &pool);
    let mut cc = ConformanceConfig::new(cfg.language, vec![t.clone(), s.clone()]).with_args(args);
    cc.eval_iters = cfg.iters;
    cc.closure_depth = cfg.closure_depth;
    cc.max_terms = cfg.max_terms;
    let res = match cfg.language {
        Language::Pbck => pseudometric(&cc)?,
        Language::Pski => bisimilarity(&cc)?,
    };
    let d = res.get(t, s).expect("roots are in the universe");
    Ok((d, res.workspace.len(), res.workspace.closed))
}

/// For pBCK, checks `ctx_lower ≤ d`; for pSKI, that bisimilar pairs have no
/// separating context. Adequacy `d ≥ |γt(⊥) − γs(⊥)|` is checked for both.
pub fn check_soundness(pairs: &[(Term, Term)], cfg: &SoundnessConfig) -> Result<SoundnessReport, ConformanceError> {
    let mut report = SoundnessReport {
        pairs: Vec::new(),
        violations: Vec::new(),
    };
    let ccfg = CtxConfig {
        language: cfg.language,
        max_ctx_size: cfg.max_ctx_size,
        pool: None,
        iters: cfg.iters,
        max_terms: DEFAULT_MAX_TERMS,
    };
    for (t, s) in pairs {
        let (d, universe, closed) = pair_distance(t, s, cfg)?;
        let bound = ctx_distance_lower(t, s, &ccfg);
        let plain = Context::empty();
        let gap = context_gap(&plain, t, s, cfg.language, cfg.iters, DEFAULT_MAX_TERMS)?;
        let violation = |kind, lower, witness: Option<&Context>| SoundnessViolation {
            kind,
            t: t.to_string(),
            s: s.to_string(),
            lower,
            upper: d,
            witness: witness.map(|c| c.to_string()),
        };
        match cfg.language {
            Language::Pbck => {
                if bound.lower_bound > d + cfg.tol {
                    report
                        .violations
                        .push(violation(SoundnessKind::Bound, bound.lower_bound, bound.witness.as_ref()));
                }
            }
            Language::Pski => {
                if d == 0.0 && bound.lower_bound > GAP_TOL {
                    report
                        .violations
                        .push(violation(SoundnessKind::Separated, bound.lower_bound, bound.witness.as_ref()));
                }
            }
        }
        if gap > d + cfg.tol {
            report.violations.push(violation(SoundnessKind::Adequacy, gap, Some(&plain)));
        }
        report.pairs.push(PairReport {
            t: t.to_string(),
            s: s.to_string(),
            behavioural: d,
            ctx_lower: bound.lower_bound,
            universe,
            closed,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Term {
        Term::parse(s, Language::Pbck).unwrap()
    }

    #[test]
    fn empty_context_separates_half_divergence() {
        let cfg = CtxConfig::new(Language::Pbck, 1, 4).with_pool(vec![]);
        let b = ctx_distance_lower(&t("I"), &t("I (+) Omega"), &cfg);
        assert_eq!(b.lower_bound, 0.5);
        assert_eq!(b.witness.unwrap().to_string(), "_");
        let w = ctx_equiv_witness(&t("I"), &t("I (+) Omega"), &cfg).unwrap();
        assert_eq!((w.0.to_string(), w.1), ("_".to_string(), 0.5));
    }

    #[test]
    fn identical_terms_have_zero_gap() {
        let cfg = CtxConfig::new(Language::Pbck, 3, 8);
        let b = ctx_distance_lower(&t("K I"), &t("K I"), &cfg);
        assert_eq!(b.lower_bound, 0.0);
        assert_eq!(b.witness.unwrap().to_string(), "_");
    }

    #[test]
    fn identity_and_divergence() {
        let cfg = CtxConfig::new(Language::Pbck, 1, 2).with_pool(vec![]);
        assert_eq!(ctx_distance_lower(&t("I"), &t("Omega"), &cfg).lower_bound, 1.0);
    }

    #[test]
    fn no_witness_for_equivalent_terms() {
        for (a, b) in [("I (+) I", "I"), ("K I Omega", "I")] {
            let cfg = CtxConfig::new(Language::Pbck, 4, 16);
            assert_eq!(ctx_equiv_witness(&t(a), &t(b), &cfg), None, "{a} vs {b}");
        }
    }

    #[test]
    fn monotone_in_size() {
        let (a, b) = (t("Kp(I)"), t("Kp(I (+) Omega)"));
        let mut prev = 0.0;
        for k in 1..=4 {
            let v = ctx_distance_lower(&a, &b, &CtxConfig::new(Language::Pbck, k, 8)).lower_bound;
            assert!(v >= prev);
            prev = v;
        }
        assert_eq!(prev, 0.5);
    }

    #[test]
    fn small_terms_counts() {
        let sig = Signature::new(Language::Pbck);
        assert_eq!(small_terms(&sig, 1, &[]).len(), 5);
        // 5 leaves, 3 unary symbols over them.
        assert_eq!(small_terms(&sig, 2, &[]).len(), 20);
        // Binary nodes over two leaves: 4 · 25.
        assert_eq!(small_terms(&sig, 3, &[]).len(), 20 + 3 * 15 + 100);
    }

    #[test]
    fn soundness_on_the_worked_pair() {
        let rep = check_soundness(&[(t("I"), t("I (+) Omega"))], &SoundnessConfig::new(Language::Pbck)).unwrap();
        assert!(rep.violations.is_empty(), "{:?}", rep.violations);
        assert_eq!(rep.pairs[0].behavioural, 0.5);
        assert_eq!(rep.pairs[0].ctx_lower, 0.5);
    }
}
