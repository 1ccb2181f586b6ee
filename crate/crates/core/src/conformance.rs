//! Behavioural pseudometric (pBCK) and probabilistic bisimilarity (pSKI) as
//! greatest fixed points over a finite universe of terms.
//!
//! Functions are compared through their instantiations on a finite set `A`
//! of test arguments: `cost(f, g) = max_{a∈A} d(f[a], g[a])`, the hom
//! lifting with the identity relation on arguments. The universe grows from
//! the given roots by instantiating templates on `A`, up to a layer limit
//! and a size cap. Pairs that reach past the grown universe count as
//! distance 0 (related), so every computed distance is a lower bound and the
//! result records whether the universe closed.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dist::Outcome;
use crate::lift::{FuzzyRel, LiftError, TermRel, Universe};
use crate::semantics::{check_language, Behaviour, EvalError, Evaluator};
use crate::syntax::{Language, Term};
use crate::wasserstein::{self, feasible_along, TransportError, TransportInstance};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ConformanceError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

#[derive(Clone, Debug)]
pub struct ConformanceConfig {
    pub language: Language,
    /// Roots of the universe.
    pub universe: Vec<Term>,
    /// Test arguments; `None` means every root of size at most 3.
    pub args: Option<Vec<Term>>,
    /// Evaluation depth N.
    pub eval_iters: usize,
    /// Cap on fixed-point rounds.
    pub max_rounds: usize,
    pub tol: f64,
    /// Cap on the grown universe.
    pub max_terms: usize,
    /// Instantiation layers added below the roots.
    pub closure_depth: usize,
}

impl ConformanceConfig {
    pub fn new(language: Language, universe: Vec<Term>) -> Self {
        ConformanceConfig {
            language,
            universe,
            args: None,
            eval_iters: crate::semantics::DEFAULT_ITERS,
            max_rounds: 100,
            tol: 1e-9,
            max_terms: 400,
            closure_depth: 2,
        }
    }

    pub fn with_args(mut self, args: Vec<Term>) -> Self {
        self.args = Some(args);
        self
    }

    pub fn resolved_args(&self) -> Vec<Term> {
        match &self.args {
            Some(a) => a.clone(),
            None => {
                let mut out: Vec<Term> = Vec::new();
                for t in &self.universe {
                    if t.size() <= 3 && !out.contains(t) {
                        out.push(t.clone());
                    }
                }
                out
            }
        }
    }
}

/// One atom of a tabled behaviour: its mass and, for functions, the
/// universe index of each instantiation (None when outside the universe).
#[derive(Clone, Debug)]
struct Atom {
    p: f64,
    insts: Option<Vec<Option<usize>>>,
}

/// Evaluated behaviours over a grown universe.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub language: Language,
    pub universe: Universe,
    pub behaviours: Vec<Behaviour>,
    pub args: Vec<Term>,
    pub eval_iters: usize,
    /// True when every instantiation landed inside the universe.
    pub closed: bool,
    atoms: Vec<Vec<Atom>>,
}

impl Workspace {
    pub fn build(cfg: &ConformanceConfig) -> Result<Workspace, ConformanceError> {
        Workspace::build_with(cfg, cfg.closure_depth)
    }

    fn build_with(cfg: &ConformanceConfig, depth: usize) -> Result<Workspace, ConformanceError> {
        let args = cfg.resolved_args();
        for t in cfg.universe.iter().chain(&args) {
            check_language(t, cfg.language)?;
        }
        let mut ev = Evaluator::new(cfg.language);
        let mut universe = Universe::default();
        let mut queue = VecDeque::new();
        for t in &cfg.universe {
            if !universe.contains(t) {
                queue.push_back((universe.insert(t.clone()), 0usize));
            }
        }
        let mut behaviours: Vec<Behaviour> = Vec::new();
        let mut atoms: Vec<Vec<Atom>> = Vec::new();
        let mut closed = true;
        while let Some((i, layer)) = queue.pop_front() {
            let b = ev.eval(universe.term(i), cfg.eval_iters)?;
            let mut row = Vec::with_capacity(b.len());
            for (o, p) in b.iter() {
                let insts = match o {
                    Outcome::Bottom => None,
                    Outcome::Value(f) => {
                        let mut v = Vec::with_capacity(args.len());
                        for a in &args {
                            let y = f.instantiate(a);
                            let idx = match universe.index_of(&y) {
                                Some(j) => Some(j),
                                None if layer < depth && universe.len() < cfg.max_terms => {
                                    let j = universe.insert(y);
                                    queue.push_back((j, layer + 1));
                                    Some(j)
                                }
                                None => {
                                    closed = false;
                                    None
                                }
                            };
                            v.push(idx);
                        }
                        Some(v)
                    }
                };
                row.push(Atom { p, insts });
            }
            if behaviours.len() <= i {
                behaviours.resize(i + 1, Behaviour::bottom());
                atoms.resize(i + 1, Vec::new());
            }
            behaviours[i] = b;
            atoms[i] = row;
        }
        Ok(Workspace {
            language: cfg.language,
            universe,
            behaviours,
            args,
            eval_iters: cfg.eval_iters,
            closed,
            atoms,
        })
    }

    pub fn len(&self) -> usize {
        self.universe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.universe.is_empty()
    }

    /// `max_a d(f[a], g[a])`, missing instantiations counting as 0.
    fn fn_cost(d: &FuzzyRel, f: &[Option<usize>], g: &[Option<usize>]) -> f64 {
        f.iter()
            .zip(g)
            .filter_map(|(a, b)| Some(d.get((*a)?, (*b)?)))
            .fold(0.0, f64::max)
    }

    fn atom_cost(d: &FuzzyRel, a: &Atom, b: &Atom) -> f64 {
        match (&a.insts, &b.insts) {
            (None, _) => 0.0,
            (Some(_), None) => 1.0,
            (Some(f), Some(g)) => Self::fn_cost(d, f, g),
        }
    }

    /// Wasserstein distance from γx to γy with the ⊥-lifted hom cost of `d`.
    pub fn transport(&self, d: &FuzzyRel, x: usize, y: usize) -> Result<f64, TransportError> {
        let (ax, ay) = (&self.atoms[x], &self.atoms[y]);
        if ax.len() == 1 || ay.len() == 1 {
            let mut total = 0.0;
            for a in ax {
                for b in ay {
                    total += a.p * b.p * Self::atom_cost(d, a, b);
                }
            }
            return Ok(total.min(1.0));
        }
        let inst = TransportInstance {
            supplies: ax.iter().map(|a| a.p).collect(),
            demands: ay.iter().map(|b| b.p).collect(),
            costs: ax
                .iter()
                .map(|a| ay.iter().map(|b| Self::atom_cost(d, a, b)).collect())
                .collect(),
        };
        Ok(wasserstein::solve(&inst)?.value)
    }

    /// The optimal plan behind [`Workspace::transport`].
    pub fn plan(&self, d: &FuzzyRel, x: usize, y: usize) -> Result<(TransportInstance, wasserstein::TransportPlan), TransportError> {
        let (ax, ay) = (&self.atoms[x], &self.atoms[y]);
        let inst = TransportInstance {
            supplies: ax.iter().map(|a| a.p).collect(),
            demands: ay.iter().map(|b| b.p).collect(),
            costs: ax
                .iter()
                .map(|a| ay.iter().map(|b| Self::atom_cost(d, a, b)).collect())
                .collect(),
        };
        let plan = wasserstein::solve(&inst)?;
        Ok((inst, plan))
    }

    /// Whether γx can be transported to γy along the relation lifting of `r`.
    pub fn transport_related(&self, r: &FuzzyRel, x: usize, y: usize) -> bool {
        let (ax, ay) = (&self.atoms[x], &self.atoms[y]);
        let s: Vec<f64> = ax.iter().map(|a| a.p).collect();
        let t: Vec<f64> = ay.iter().map(|b| b.p).collect();
        feasible_along(&s, &t, |i, j| Self::atom_cost(r, &ax[i], &ay[j]) == 0.0).feasible
    }

    pub fn bottom_mass(&self, x: usize) -> f64 {
        self.behaviours[x].bottom_mass()
    }
}

/// Summary written next to CSV output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Sidecar {
    pub iters: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "|U|")]
    pub universe: usize,
    #[serde(rename = "|A|")]
    pub args: usize,
    pub converged: bool,
    pub closed: bool,
}

#[derive(Clone, Debug)]
pub struct FixpointResult {
    /// The computed distance matrix or {0,1} relation over the grown universe.
    pub metric: TermRel,
    pub rounds: usize,
    pub converged: bool,
    pub workspace: Workspace,
}

impl FixpointResult {
    pub fn get(&self, a: &Term, b: &Term) -> Option<f64> {
        self.metric.dist(a, b).ok()
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            iters: self.rounds,
            n: self.workspace.eval_iters,
            universe: self.workspace.len(),
            args: self.workspace.args.len(),
            converged: self.converged,
            closed: self.workspace.closed,
        }
    }
}

/// One round of the pseudometric iteration on a workspace.
pub fn pseudometric_step(ws: &Workspace, d: &FuzzyRel) -> Result<FuzzyRel, ConformanceError> {
    let n = ws.len();
    let dr = d.reverse();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let there = ws.transport(d, i, j)?;
                    let back = ws.transport(&dr, j, i)?;
                    Ok(there.max(back))
                })
                .collect::<Result<Vec<f64>, TransportError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut out = FuzzyRel::zeros(n);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            let j = i + 1 + k;
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}

/// Kleene iteration from the all-zeros matrix to the greatest fuzzy
/// bisimulation on the workspace.
pub fn pseudometric_on(ws: Workspace, max_rounds: usize, tol: f64) -> Result<FixpointResult, ConformanceError> {
    let n = ws.len();
    let mut d = FuzzyRel::zeros(n);
    let mut rounds = 0;
    let mut converged = false;
    while rounds < max_rounds {
        let next = pseudometric_step(&ws, &d)?;
        rounds += 1;
        let delta = next.max_abs_diff(&d);
        debug_assert!(next.fiber_le(&d, 1e-12), "iteration is not monotone");
        d = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    Ok(FixpointResult {
        metric: TermRel::new(ws.universe.clone(), d)?,
        rounds,
        converged,
        workspace: ws,
    })
}

pub fn pseudometric(cfg: &ConformanceConfig) -> Result<FixpointResult, ConformanceError> {
    let ws = Workspace::build(cfg)?;
    pseudometric_on(ws, cfg.max_rounds, cfg.tol)
}

/// Partition refinement from the full relation down to the greatest
/// probabilistic bisimulation on the workspace.
/// Every round removes at least one pair, so this always terminates.
pub fn bisimilarity_on(ws: Workspace) -> Result<FixpointResult, ConformanceError> {
    let n = ws.len();
    let mut r = FuzzyRel::zeros(n);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let removals: Vec<(usize, usize)> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let r = &r;
                let ws = &ws;
                ((i + 1)..n).filter_map(move |j| {
                    let keep = r.related(i, j) && ws.transport_related(r, i, j) && ws.transport_related(r, j, i);
                    (r.related(i, j) && !keep).then_some((i, j))
                })
            })
            .collect();
        if removals.is_empty() {
            break;
        }
        for (i, j) in removals {
            r.set(i, j, 1.0);
            r.set(j, i, 1.0);
        }
    }
    Ok(FixpointResult {
        metric: TermRel::new(ws.universe.clone(), r)?,
        rounds,
        converged: true,
        workspace: ws,
    })
}

pub fn bisimilarity(cfg: &ConformanceConfig) -> Result<FixpointResult, ConformanceError> {
    bisimilarity_on(Workspace::build(cfg)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformanceViolation {
    pub x: String,
    pub y: String,
    pub lifted: f64,
    pub bound: f64,
}

/// Checks `W(γx, γy) ≤ d(x, y) + tol` for every pair of the universe of `d`.
/// Instantiations outside the universe count as distance 0.
pub fn is_conformance(d: &TermRel, cfg: &ConformanceConfig) -> Result<Vec<ConformanceViolation>, ConformanceError> {
    let mut c = cfg.clone();
    c.universe = d.universe.terms().to_vec();
    let ws = Workspace::build_with(&c, 0)?;
    debug_assert_eq!(ws.universe.terms(), d.universe.terms());
    let n = ws.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let lifted = ws.transport(&d.rel, i, j)?;
            let bound = d.rel.get(i, j);
            if lifted > bound + cfg.tol {
                out.push(ConformanceViolation {
                    x: ws.universe.term(i).to_string(),
                    y: ws.universe.term(j).to_string(),
                    lifted,
                    bound,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub reflexive: bool,
    pub symmetric: bool,
    pub triangle_violations: usize,
    pub first_violation: Option<(usize, usize, usize)>,
}

impl MetricReport {
    pub fn ok(&self) -> bool {
        self.reflexive && self.symmetric && self.triangle_violations == 0
    }
}

/// Reflexivity (zero diagonal), exact symmetry and the ⊞ triangle inequality.
pub fn check_symmetry_transitivity(d: &FuzzyRel, tol: f64) -> MetricReport {
    let v = d.triangle_violations(tol);
    MetricReport {
        reflexive: d.is_reflexive(),
        symmetric: d.is_symmetric(),
        triangle_violations: v.len(),
        first_violation: v.first().copied(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str, l: Language) -> Term {
        Term::parse(s, l).unwrap()
    }

    fn pbck(s: &str) -> Term {
        t(s, Language::Pbck)
    }

    fn pski(s: &str) -> Term {
        t(s, Language::Pski)
    }

    #[test]
    fn identity_vs_half_divergent() {
        let u = vec![pbck("I"), pbck("I (+) Omega"), pbck("Omega")];
        let mut cfg = ConformanceConfig::new(Language::Pbck, u).with_args(vec![pbck("I"), pbck("Omega")]);
        cfg.eval_iters = 4;
        let r = pseudometric(&cfg).unwrap();
        assert!(r.converged);
        let half = r.get(&pbck("I"), &pbck("I (+) Omega")).unwrap();
        assert!((half - 0.5).abs() < 1e-6, "{half}");
        assert_eq!(r.get(&pbck("I"), &pbck("Omega")), Some(1.0));
        for x in r.metric.universe.terms() {
            assert_eq!(r.get(x, x), Some(0.0));
        }
        assert!(check_symmetry_transitivity(&r.metric.rel, 1e-9).ok());
        assert!(is_conformance(&r.metric, &cfg).unwrap().is_empty());
    }

    #[test]
    fn conformance_examples() {
        let u = Universe::new([pbck("Omega"), pbck("I")]);
        let cfg = ConformanceConfig::new(Language::Pbck, vec![]);
        let zero = TermRel::new(u.clone(), FuzzyRel::zeros(2)).unwrap();
        let v = is_conformance(&zero, &cfg).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].x.as_str(), v[0].y.as_str(), v[0].lifted), ("I", "Omega", 1.0));
        let discrete = TermRel::new(u, FuzzyRel::identity(2)).unwrap();
        assert!(is_conformance(&discrete, &cfg).unwrap().is_empty());
    }

    #[test]
    fn bisimilarity_examples() {
        let u = vec![pski("I"), pski("Omega"), pski("I (+) I"), pski("S K K")];
        let mut cfg = ConformanceConfig::new(Language::Pski, u);
        cfg.eval_iters = 8;
        let r = bisimilarity(&cfg).unwrap();
        let rel = |a: &str, b: &str| r.get(&pski(a), &pski(b)) == Some(0.0);
        assert!(rel("I", "I"));
        assert!(!rel("I", "Omega"));
        assert!(rel("I (+) I", "I"));
        assert!(check_symmetry_transitivity(&r.metric.rel, 0.0).ok());
    }

    #[test]
    fn first_iterate_may_break_triangle() {
        // One round only: d_1 depends on ⊥ masses and is symmetric.
        let u = vec![pbck("I"), pbck("I (+) Omega"), pbck("Omega"), pbck("K (+) Omega")];
        let mut cfg = ConformanceConfig::new(Language::Pbck, u);
        cfg.max_rounds = 1;
        let r = pseudometric(&cfg).unwrap();
        let rep = check_symmetry_transitivity(&r.metric.rel, 1e-9);
        assert!(rep.symmetric && rep.reflexive);
    }

    #[test]
    fn larger_argument_sets_only_increase() {
        let u = vec![pbck("K"), pbck("Kp(I)"), pbck("C K"), pbck("B I")];
        let small = ConformanceConfig::new(Language::Pbck, u.clone()).with_args(vec![pbck("I")]);
        let big = ConformanceConfig::new(Language::Pbck, u.clone()).with_args(vec![pbck("I"), pbck("Omega"), pbck("K")]);
        let a = pseudometric(&small).unwrap();
        let b = pseudometric(&big).unwrap();
        for x in &u {
            for y in &u {
                assert!(a.get(x, y).unwrap() <= b.get(x, y).unwrap() + 1e-12, "{x} {y}");
            }
        }
    }
}
