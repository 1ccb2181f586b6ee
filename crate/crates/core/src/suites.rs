//! Randomized property suites shared by the `check` command and the
//! acceptance tests. Every suite is driven by a seeded ChaCha8 generator,
//! so a fixed seed reproduces the report byte for byte.

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::conformance::{bisimilarity, pseudometric, ConformanceConfig, ConformanceError};
use crate::context::{check_soundness, SoundnessConfig};
use crate::dist::{convex, flatten, strength, Dist, Outcome};
use crate::howe::{
    check_rho_liftable, howe_closure, is_congruence, s_double_witness, LiftMode, PartialAlgebra,
};
use crate::lift::{boxplus, sigma_lift, FuzzyRel, SigmaLifting, TermRel, Universe};
use crate::semantics::{app_via_monad, flatten_output, rho, Behaviour, DepthTwo, EvalError, FnTable, Operand};
use crate::syntax::{Language, Signature, Symbol, Template, Term};
use crate::wasserstein::{self, TransportInstance};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Wasserstein,
    Quantale,
    Liftability,
    Congruence,
    Howe,
    Soundness,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Wasserstein,
        Suite::Quantale,
        Suite::Liftability,
        Suite::Congruence,
        Suite::Howe,
        Suite::Soundness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Wasserstein => "wasserstein",
            Suite::Quantale => "quantale",
            Suite::Liftability => "liftability",
            Suite::Congruence => "congruence",
            Suite::Howe => "howe",
            Suite::Soundness => "soundness",
        }
    }

    fn salt(self) -> u64 {
        self as u64 + 1
    }

    pub fn run(self, cfg: &SuiteConfig) -> SuiteReport {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ self.salt());
        let checks = match self {
            Suite::Wasserstein => wasserstein_suite(cfg, &mut rng),
            Suite::Quantale => quantale_suite(cfg, &mut rng),
            Suite::Liftability => liftability_suite(cfg, &mut rng),
            Suite::Congruence => congruence_suite(cfg, &mut rng),
            Suite::Howe => howe_suite(cfg, &mut rng),
            Suite::Soundness => soundness_suite(cfg, &mut rng),
        };
        SuiteReport {
            suite: self.name().to_string(),
            seed: cfg.seed,
            checks,
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite `{s}`"))
    }
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Overrides every per-check sample count.
    pub samples: Option<usize>,
    /// Evaluation depth for the behavioural engines.
    pub iters: usize,
    pub tol: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            samples: None,
            iters: 64,
            tol: 1e-9,
        }
    }
}

impl SuiteConfig {
    fn n(&self, default: usize) -> usize {
        self.samples.unwrap_or(default)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Violations that disappear or shrink with a larger universe.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifacts: Option<usize>,
    /// Set for checks whose purpose is to exhibit a failure.
    pub expect_violation: bool,
    pub max_excess: f64,
    pub counterexample: Option<Value>,
}

impl CheckReport {
    fn new(name: &str, expect_violation: bool) -> Self {
        CheckReport {
            name: name.to_string(),
            samples: 0,
            violations: 0,
            artifacts: None,
            expect_violation,
            max_excess: 0.0,
            counterexample: None,
        }
    }

    /// Records one sample; `excess > tol` counts as a violation.
    fn record(&mut self, excess: f64, tol: f64, witness: impl FnOnce() -> Value) {
        self.samples += 1;
        if excess > tol || excess.is_nan() {
            self.violations += 1;
            if self.counterexample.is_none() {
                self.counterexample = Some(witness());
            }
        }
        if excess > self.max_excess {
            self.max_excess = excess;
        }
    }

    fn error(&mut self, e: impl std::fmt::Display) {
        self.samples += 1;
        self.violations += 1;
        if self.counterexample.is_none() {
            self.counterexample = Some(json!({ "error": e.to_string() }));
        }
    }

    pub fn passed(&self) -> bool {
        if self.expect_violation {
            self.violations > 0
        } else {
            self.violations == 0
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<CheckReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckReport::passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckReport> {
        self.checks.iter().find(|c| c.name == name)
    }
}

// ---------------------------------------------------------------------------
// Generators

/// A value in [0,1]: half the time on the eighths grid, otherwise uniform.
pub fn random_unit<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen_bool(0.5) {
        f64::from(rng.gen_range(0..=8u8)) / 8.0
    } else {
        rng.gen::<f64>()
    }
}

pub fn random_fuzzy<R: Rng>(rng: &mut R, rows: usize, cols: usize, relational: bool) -> FuzzyRel {
    FuzzyRel::from_fn(rows, cols, |_, _| {
        if relational {
            f64::from(u8::from(rng.gen_bool(0.5)))
        } else {
            random_unit(rng)
        }
    })
}

/// A random distribution on `0..n` with between 1 and `max_atoms` atoms.
pub fn random_dist<R: Rng>(rng: &mut R, n: usize, max_atoms: usize) -> Dist<usize> {
    let k = rng.gen_range(1..=max_atoms.min(n));
    let mut atoms: Vec<usize> = (0..n).collect();
    atoms.shuffle(rng);
    atoms.truncate(k);
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    Dist::new(atoms.into_iter().zip(w.into_iter().map(|x| x / total))).expect("normalized")
}

fn random_size_split<R: Rng>(rng: &mut R, size: usize) -> usize {
    rng.gen_range(1..size - 1)
}

/// A random closed term with at most `max_size` nodes; applications and
/// choices are favoured so that terms compute.
pub fn random_term<R: Rng>(rng: &mut R, language: Language, max_size: usize) -> Term {
    let size = rng.gen_range(1..=max_size.max(1));
    random_term_exact(rng, language, size)
}

fn random_term_exact<R: Rng>(rng: &mut R, language: Language, size: usize) -> Term {
    let sig = Signature::new(language);
    if size <= 1 {
        let consts: Vec<Symbol> = sig.constants().collect();
        return Term::constant(*consts.choose(rng).expect("constants"));
    }
    if size == 2 {
        let ops: Vec<Symbol> = sig.operations(1).collect();
        let sym = *ops.choose(rng).expect("unary");
        return Term::new(sym, vec![random_term_exact(rng, language, 1)]);
    }
    let roll: f64 = rng.gen();
    let sym = if roll < 0.5 {
        Symbol::App
    } else if roll < 0.7 {
        Symbol::Choice
    } else if roll < 0.85 {
        *sig.operations(1).collect::<Vec<_>>().choose(rng).expect("unary")
    } else {
        *sig.operations(2).collect::<Vec<_>>().choose(rng).expect("binary")
    };
    if sym.arity() == 1 {
        return Term::new(sym, vec![random_term_exact(rng, language, size - 1)]);
    }
    let l = random_size_split(rng, size);
    Term::new(
        sym,
        vec![
            random_term_exact(rng, language, l),
            random_term_exact(rng, language, size - 1 - l),
        ],
    )
}

/// A term near `t`: one random subterm replaced, or `t` mixed with a
/// variant of itself.
pub fn random_neighbour<R: Rng>(rng: &mut R, language: Language, t: &Term) -> Term {
    match rng.gen_range(0..4) {
        0 => random_term(rng, language, t.size().max(3)),
        1 => Term::choice(t.clone(), random_term(rng, language, 3)),
        2 => Term::choice(t.clone(), t.clone()),
        _ => {
            let subs = t.subterms();
            let target = subs.choose(rng).expect("nonempty").clone();
            let replacement = random_term(rng, language, target.size().max(2));
            replace_subterm(t, &target, &replacement)
        }
    }
}

fn replace_subterm(t: &Term, target: &Term, with: &Term) -> Term {
    if t == target {
        return with.clone();
    }
    match t.symbol() {
        Some(sym) if t.size() > 1 => Term::new(sym, t.children().map(|c| replace_subterm(&c, target, with)).collect()),
        _ => t.clone(),
    }
}

/// A subterm-closed universe of about `size` terms: constants first, then
/// random one-layer applications of existing members.
pub fn random_closed_universe<R: Rng>(rng: &mut R, language: Language, size: usize) -> Universe {
    let sig = Signature::new(language);
    let consts: Vec<Symbol> = sig.constants().collect();
    let mut u = Universe::default();
    let seeds = rng.gen_range(1..=consts.len().min(size.saturating_sub(1).max(1)));
    for &c in consts.choose_multiple(rng, seeds) {
        u.insert(Term::constant(c));
    }
    let ops: Vec<Symbol> = sig.symbols().iter().copied().filter(|s| s.arity() > 0).collect();
    let mut guard = 0;
    while u.len() < size && guard < 1000 {
        guard += 1;
        let sym = *ops.choose(rng).expect("ops");
        let children: Vec<Term> = (0..sym.arity())
            .map(|_| u.terms().choose(rng).expect("nonempty").clone())
            .collect();
        let t = Term::new(sym, children);
        if !u.contains(&t) {
            u.insert(t);
        }
    }
    u
}

/// A behaviour over templates drawn from `pool`, with dyadic weights.
pub fn random_behaviour<R: Rng>(rng: &mut R, pool: &[Template]) -> Behaviour {
    let k = rng.gen_range(1..=3);
    let denom = 8.0;
    let mut left = 8u32;
    let mut atoms = Vec::new();
    for i in 0..k {
        let w = if i + 1 == k { left } else { rng.gen_range(1..=left - (k - 1 - i) as u32) };
        left -= w;
        let o = if rng.gen_bool(0.2) {
            Outcome::Bottom
        } else {
            Outcome::Value(pool.choose(rng).expect("pool").clone())
        };
        atoms.push((o, f64::from(w) / denom));
        if left == 0 {
            break;
        }
    }
    Dist::new(atoms).expect("dyadic weights")
}

pub fn random_depth_two<R: Rng>(rng: &mut R, pool: &[Template], args: &[Term]) -> DepthTwo {
    let m = rng.gen_range(1..=3);
    let functions: Vec<FnTable> = (0..m)
        .map(|_| FnTable::new(args.iter().map(|a| (a.clone(), random_behaviour(rng, pool)))))
        .collect();
    let uniform = 1.0 / (m as f64 + 1.0);
    let outer = Dist::new((0..m).map(|i| (Outcome::Value(i), uniform)).chain([(Outcome::Bottom, uniform)]))
        .expect("uniform");
    // Skew the outer weights at random by mixing with a point mass.
    let point = if rng.gen_bool(0.3) { Outcome::Bottom } else { Outcome::Value(rng.gen_range(0..m)) };
    let p = f64::from(rng.gen_range(0..=4u8)) / 4.0;
    let outer = convex(p, &Dist::dirac(point), &outer).expect("valid weight");
    DepthTwo { outer, functions }
}

// ---------------------------------------------------------------------------
// Wasserstein

fn w(d: &FuzzyRel, a: &Dist<usize>, b: &Dist<usize>) -> f64 {
    crate::lift::wasserstein_lift(d, a, b).expect("valid instance")
}

fn wasserstein_suite(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let tol = 1e-7;
    let mut out = Vec::new();

    let mut duality = CheckReport::new("duality", false);
    for _ in 0..cfg.n(1000) {
        let (m, n) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
        let supplies = random_dist(rng, m, m);
        let demands = random_dist(rng, n, n);
        let inst = TransportInstance {
            supplies: (0..m).map(|i| supplies.mass(&i)).collect(),
            demands: (0..n).map(|j| demands.mass(&j)).collect(),
            costs: random_fuzzy(rng, m, n, false).to_rows(),
        };
        match wasserstein::solve(&inst) {
            Ok(plan) => {
                let gap = (plan.value - plan.dual_value(&inst)).abs();
                let excess = if plan.certify(&inst, 1e-9).is_ok() { gap } else { f64::INFINITY };
                duality.record(excess, 1e-8, || json!({ "instance": inst_json(&inst), "gap": gap }));
            }
            Err(e) => duality.error(e),
        }
    }
    out.push(duality);

    let mut convexity = CheckReport::new("convexity", false);
    for _ in 0..cfg.n(300) {
        let n = rng.gen_range(2..=5);
        let d = random_fuzzy(rng, n, n, false);
        let (a, b, c, e) = (random_dist(rng, n, 3), random_dist(rng, n, 3), random_dist(rng, n, 3), random_dist(rng, n, 3));
        let p = random_unit(rng);
        let lhs = w(&d, &convex(p, &a, &c).expect("p"), &convex(p, &b, &e).expect("p"));
        let rhs = p * w(&d, &a, &b) + (1.0 - p) * w(&d, &c, &e);
        convexity.record(lhs - rhs, tol, || json!({ "d": d.to_rows(), "p": p, "lhs": lhs, "rhs": rhs }));
    }
    out.push(convexity);

    let mut eta = CheckReport::new("eta_isometry", false);
    for _ in 0..cfg.n(300) {
        let n = rng.gen_range(1..=6);
        let d = random_fuzzy(rng, n, n, false);
        let (x, y) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let got = w(&d, &Dist::dirac(x), &Dist::dirac(y));
        eta.record((got - d.get(x, y)).abs(), tol, || json!({ "d": d.to_rows(), "x": x, "y": y, "got": got }));
    }
    out.push(eta);

    let mut st = CheckReport::new("strength_nonexpansive", false);
    for _ in 0..cfg.n(300) {
        let (n, k) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let d = random_fuzzy(rng, n, n, false);
        let e = random_fuzzy(rng, k, k, false);
        let (a, b) = (random_dist(rng, n, 3), random_dist(rng, n, 3));
        let (y, y2) = (rng.gen_range(0..k), rng.gen_range(0..k));
        let lhs = wasserstein::distance(&strength(&a, &y), &strength(&b, &y2), |p, q| {
            Ok::<_, wasserstein::TransportError>(boxplus(d.get(p.0, q.0), e.get(p.1, q.1)))
        })
        .expect("valid");
        let rhs = boxplus(w(&d, &a, &b), e.get(y, y2));
        st.record(lhs - rhs, tol, || json!({ "d": d.to_rows(), "e": e.to_rows(), "lhs": lhs, "rhs": rhs }));
    }
    out.push(st);

    let mut mu = CheckReport::new("mu_nonexpansive", false);
    for _ in 0..cfg.n(300) {
        let n = rng.gen_range(1..=4);
        let d = random_fuzzy(rng, n, n, false);
        let inner: Vec<Dist<usize>> = (0..rng.gen_range(1..=4)).map(|_| random_dist(rng, n, 3)).collect();
        let m = inner.len();
        let (big_a, big_b) = (random_dist(rng, m, 3), random_dist(rng, m, 3));
        let lift = FuzzyRel::from_fn(m, m, |i, j| w(&d, &inner[i], &inner[j]));
        let rhs = w(&lift, &big_a, &big_b);
        let lhs = w(&d, &flatten(&big_a.map(|&i| inner[i].clone())), &flatten(&big_b.map(|&i| inner[i].clone())));
        mu.record(lhs - rhs, tol, || json!({ "d": d.to_rows(), "lhs": lhs, "rhs": rhs }));
    }
    out.push(mu);

    let mut tri = CheckReport::new("metric_triangle", false);
    for _ in 0..cfg.n(300) {
        let n = rng.gen_range(2..=5);
        let raw = random_fuzzy(rng, n, n, false);
        let mut sym = raw.join(&raw.reverse());
        for i in 0..n {
            sym.set(i, i, 0.0);
        }
        let d = sym.transitive_closure();
        let (a, b, c) = (random_dist(rng, n, 3), random_dist(rng, n, 3), random_dist(rng, n, 3));
        let (ab, ba, bc, ac) = (w(&d, &a, &b), w(&d, &b, &a), w(&d, &b, &c), w(&d, &a, &c));
        let excess = (ac - boxplus(ab, bc)).max((ab - ba).abs());
        tri.record(excess, tol, || json!({ "d": d.to_rows(), "ab": ab, "bc": bc, "ac": ac }));
    }
    out.push(tri);
    out
}

fn inst_json(inst: &TransportInstance) -> Value {
    json!({ "supplies": inst.supplies, "demands": inst.demands, "costs": inst.costs })
}

// ---------------------------------------------------------------------------
// Quantale and fibration laws

fn quantale_suite(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let mut out = Vec::new();
    for relational in [true, false] {
        let tag = if relational { "rel" } else { "fuzzy" };
        let tol = if relational { 0.0 } else { 1e-9 };
        let n = 6;
        let mut assoc = CheckReport::new(&format!("associativity_{tag}"), false);
        let mut unit = CheckReport::new(&format!("units_{tag}"), false);
        let mut joins = CheckReport::new(&format!("join_distributivity_{tag}"), false);
        let mut inv = CheckReport::new(&format!("involution_{tag}"), false);
        let mut reindex = CheckReport::new(&format!("reindexing_{tag}"), false);
        let mut closure = CheckReport::new(&format!("transitive_closure_{tag}"), false);
        let one = FuzzyRel::identity(n);
        for _ in 0..cfg.n(500) {
            let a = random_fuzzy(rng, n, n, relational);
            let b = random_fuzzy(rng, n, n, relational);
            let c = random_fuzzy(rng, n, n, relational);
            let ab_c = a.compose(&b).and_then(|x| x.compose(&c)).expect("square");
            let a_bc = b.compose(&c).and_then(|x| a.compose(&x)).expect("square");
            assoc.record(ab_c.max_abs_diff(&a_bc), tol, || json!({ "a": a.to_rows(), "b": b.to_rows(), "c": c.to_rows() }));

            let l = one.compose(&a).expect("square").max_abs_diff(&a);
            let r = a.compose(&one).expect("square").max_abs_diff(&a);
            unit.record(l.max(r), tol, || json!({ "a": a.to_rows() }));

            let left = a.join(&b).compose(&c).expect("square");
            let right = a.compose(&c).expect("square").join(&b.compose(&c).expect("square"));
            let left2 = c.compose(&a.join(&b)).expect("square");
            let right2 = c.compose(&a).expect("square").join(&c.compose(&b).expect("square"));
            joins.record(left.max_abs_diff(&right).max(left2.max_abs_diff(&right2)), tol, || {
                json!({ "a": a.to_rows(), "b": b.to_rows(), "c": c.to_rows() })
            });

            let rr = a.reverse().reverse().max_abs_diff(&a);
            let r1 = one.reverse().max_abs_diff(&one);
            let rab = a
                .compose(&b)
                .expect("square")
                .reverse()
                .max_abs_diff(&b.reverse().compose(&a.reverse()).expect("square"));
            inv.record(rr.max(r1).max(rab), tol, || json!({ "a": a.to_rows(), "b": b.to_rows() }));

            // (f,g)*P · (g,h)*Q ⊑ (f,h)*(P·Q), i.e. numerically ≥.
            let m = rng.gen_range(1..=6);
            let f: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
            let g: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
            let h: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
            let lhs = a.reindex(&f, &g).compose(&b.reindex(&g, &h)).expect("square");
            let rhs = a.compose(&b).expect("square").reindex(&f, &h);
            let excess = rhs
                .entries()
                .iter()
                .zip(lhs.entries())
                .map(|(r, l)| r - l)
                .fold(0.0, f64::max);
            reindex.record(excess, tol, || json!({ "p": a.to_rows(), "q": b.to_rows(), "f": f, "g": g, "h": h }));

            // Closure: idempotent, below every power, and the least transitive.
            let cl = a.transitive_closure();
            let mut power = a.clone();
            let mut join = a.clone();
            for _ in 1..n {
                power = power.compose(&a).expect("square");
                join = join.join(&power);
            }
            let idem = cl.compose(&cl).expect("square").join(&cl).max_abs_diff(&cl);
            closure.record(idem.max(join.max_abs_diff(&cl)), tol, || json!({ "a": a.to_rows() }));
        }
        out.extend([assoc, unit, joins, inv, reindex, closure]);
    }
    out
}

// ---------------------------------------------------------------------------
// Monad agreement

/// Compares `app_via_monad` with the application clause of the rule map on
/// random depth-2 behaviours; returns the largest mass difference seen.
pub fn monad_agreement(samples: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lang = Language::Pbck;
    let mut report = CheckReport::new("app_via_monad", false);
    for _ in 0..samples {
        let args: Vec<Term> = (0..rng.gen_range(1..=3)).map(|_| random_term(&mut rng, lang, 3)).collect();
        let pool: Vec<Template> = std::iter::once(Template::hole())
            .chain((0..4).map(|_| Template::closed(&random_term(&mut rng, lang, 3))))
            .chain([Template::parse("Kp(_)", lang).expect("fixed"), Template::parse("_ (+) I", lang).expect("fixed")])
            .collect();
        let phi = random_depth_two(&mut rng, &pool, &args);
        let s = args.choose(&mut rng).expect("args").clone();
        let head = random_term(&mut rng, lang, 3);
        let ops = [
            Operand {
                term: &head,
                behaviour: None,
                depth_two: Some(&phi),
            },
            Operand::term(&s),
        ];
        let mut no_oracle = |t: &Term| Err(EvalError::MissingSecondLevel(t.to_string()));
        let via_rule = rho(lang, Symbol::App, &ops, &mut no_oracle).map(|o| flatten_output(&o));
        let via_monad = app_via_monad(&phi, &s);
        match (via_rule, via_monad) {
            (Ok(a), Ok(b)) => {
                let diff = a
                    .support()
                    .chain(b.support())
                    .map(|x| (a.mass(x) - b.mass(x)).abs())
                    .fold(0.0, f64::max);
                report.record(diff, 1e-12, || json!({ "rule": a, "monad": b }));
            }
            (Err(e), _) | (_, Err(e)) => report.error(e),
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Liftability

fn random_reflexive<R: Rng>(rng: &mut R, n: usize, relational: bool) -> FuzzyRel {
    let mut d = FuzzyRel::from_fn(n, n, |_, _| {
        if rng.gen_bool(0.4) {
            0.0
        } else if relational {
            1.0
        } else {
            random_unit(rng)
        }
    });
    for i in 0..n {
        d.set(i, i, 0.0);
    }
    d
}

fn liftability_run(
    language: Language,
    mode: LiftMode,
    name: &str,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> CheckReport {
    let mut report = CheckReport::new(name, false);
    let batch = 25;
    let mut done = 0;
    while done < samples {
        let take = batch.min(samples - done);
        let universe = random_closed_universe(rng, language, 8);
        let n = universe.len();
        let terms = universe.terms().to_vec();
        let k = rng.gen_range(1..=3.min(n));
        let args: Vec<Term> = terms.choose_multiple(rng, k).cloned().collect();
        let d = TermRel::new(universe, random_reflexive(rng, n, mode == LiftMode::Relational)).expect("square");
        match check_rho_liftable(language, &d, &args, take, mode, rng) {
            Ok(rep) => {
                for _ in 0..take - rep.violations.len() {
                    report.record(0.0, 0.0, || Value::Null);
                }
                for v in &rep.violations {
                    let excess = v.output - v.bound;
                    report.record(excess, 1e-7, || serde_json::to_value(v).expect("serializable"));
                }
            }
            Err(e) => report.error(e),
        }
        done += take;
    }
    report
}

fn liftability_suite(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let n = cfg.n(500);
    let mut out = vec![
        liftability_run(Language::Pbck, LiftMode::Fuzzy, "pbck_fuzzy", n, rng),
        liftability_run(Language::Pski, LiftMode::Relational, "pski_relational", n, rng),
    ];
    let mut family = CheckReport::new("s_double_fuzzy_family", true);
    for k in 1..=8 {
        let delta = f64::from(k) / 8.0;
        match s_double_witness(delta) {
            Ok(o) => family.record(o.output - o.bound, 1e-7, || serde_json::to_value(&o).expect("serializable")),
            Err(e) => family.error(e),
        }
    }
    out.push(family);
    out
}

// ---------------------------------------------------------------------------
// Congruence of the computed conformances

/// Settings for one behavioural run of the congruence suite.
#[derive(Clone, Debug)]
struct Scale {
    iters: usize,
    closure_depth: usize,
    max_terms: usize,
    extra_args: bool,
}

fn behavioural(language: Language, roots: &[Term], scale: &Scale) -> Result<TermRel, ConformanceError> {
    let mut args: Vec<Term> = roots.iter().filter(|t| t.size() <= 3).cloned().collect();
    if scale.extra_args {
        for t in crate::context::small_terms(&Signature::new(language), 2, &[]) {
            if !args.contains(&t) {
                args.push(t);
            }
        }
    }
    let mut cc = ConformanceConfig::new(language, roots.to_vec()).with_args(args);
    cc.eval_iters = scale.iters;
    cc.closure_depth = scale.closure_depth;
    cc.max_terms = scale.max_terms;
    let res = match language {
        Language::Pbck => pseudometric(&cc)?,
        Language::Pski => bisimilarity(&cc)?,
    };
    Ok(res.metric)
}

fn subterm_closed_roots<R: Rng>(rng: &mut R, language: Language, count: usize, max_size: usize) -> Vec<Term> {
    let mut roots: Vec<Term> = Vec::new();
    for _ in 0..count {
        for s in random_term(rng, language, max_size).subterms() {
            if !roots.contains(&s) {
                roots.push(s);
            }
        }
    }
    roots
}

fn congruence_run(
    language: Language,
    name: &str,
    lifting: SigmaLifting,
    tol: f64,
    samples: usize,
    cfg: &SuiteConfig,
    rng: &mut ChaCha8Rng,
) -> CheckReport {
    let mut report = CheckReport::new(name, false);
    report.artifacts = Some(0);
    let base = Scale {
        iters: cfg.iters.min(16),
        closure_depth: 2,
        max_terms: 400,
        extra_args: false,
    };
    let larger = Scale {
        iters: base.iters * 2,
        closure_depth: 3,
        max_terms: 1000,
        extra_args: true,
    };
    let mut done = 0;
    let mut empty_batches = 0;
    while done < samples {
        let mut roots = subterm_closed_roots(rng, language, 4, 5);
        // Add fixed near-equal pairs so that the checks are not all vacuous.
        for extra in ["I (+) Omega", "I (+) I", "K I Omega", "Kp(I (+) Omega)", "Kp(I)"] {
            let t = Term::parse(extra, language).expect("fixed");
            for s in t.subterms() {
                if !roots.contains(&s) {
                    roots.push(s);
                }
            }
        }
        let d = match behavioural(language, &roots, &base) {
            Ok(d) => d,
            Err(e) => {
                report.error(e);
                done += 1;
                continue;
            }
        };
        let alg = PartialAlgebra::from_universe(&d.universe);
        let insts = alg.instances();
        // Only pairs with a bound below 1 can fail.
        let candidates: Vec<(usize, usize)> = (0..insts.len())
            .cartesian_product(0..insts.len())
            .filter(|&(i, j)| {
                i != j
                    && insts[i].symbol == insts[j].symbol
                    && sigma_lift(&d.rel, lifting, &insts[i].layer(), &insts[j].layer()) < 1.0
            })
            .collect();
        if candidates.is_empty() {
            empty_batches += 1;
            if empty_batches > 20 {
                report.error("no comparable instance pairs in 20 universes");
                break;
            }
            continue;
        }
        let take = 50.min(samples - done);
        let mut bigger: Option<Result<TermRel, ConformanceError>> = None;
        for _ in 0..take {
            let &(i, j) = candidates.choose(rng).expect("nonempty");
            let (a, b) = (&insts[i], &insts[j]);
            let value = d.rel.get(a.result, b.result);
            let bound = sigma_lift(&d.rel, lifting, &a.layer(), &b.layer());
            let excess = value - bound;
            if excess <= tol {
                report.record(excess, tol, || Value::Null);
                continue;
            }
            // Re-run at a larger scale: a violation that shrinks is an
            // artifact of the finite universe.
            let big = bigger.get_or_insert_with(|| behavioural(language, &roots, &larger));
            let (ta, tb) = (d.universe.term(a.result), d.universe.term(b.result));
            let shrinks = match big {
                Ok(big) => {
                    let v2 = big.dist(ta, tb).unwrap_or(value);
                    let ops = |i: &crate::howe::Instance| -> Vec<Term> {
                        i.operands.iter().map(|&k| d.universe.term(k).clone()).collect()
                    };
                    let b2 = ops(a)
                        .iter()
                        .zip(ops(b))
                        .map(|(x, y)| big.dist(x, &y).unwrap_or(1.0))
                        .fold(0.0, |acc, e| match lifting {
                            SigmaLifting::Sum => boxplus(acc, e),
                            SigmaLifting::Max => f64::max(acc, e),
                        });
                    v2 - b2 < excess
                }
                Err(_) => false,
            };
            if shrinks {
                report.samples += 1;
                *report.artifacts.as_mut().expect("set") += 1;
            } else {
                report.record(excess, tol, || {
                    json!({ "left": ta.to_string(), "right": tb.to_string(), "value": value, "bound": bound })
                });
            }
        }
        done += take;
    }
    report
}

fn congruence_suite(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let n = cfg.n(200);
    vec![
        congruence_run(Language::Pbck, "pbck_sum_congruence", SigmaLifting::Sum, 1e-6, n, cfg, rng),
        congruence_run(Language::Pski, "pski_operation_closure", SigmaLifting::Max, 0.0, n, cfg, rng),
    ]
}

// ---------------------------------------------------------------------------
// Howe closure

/// Brute-force least solution of `Q ≤ P` and `Q ≤ push(Q)·P` over relations
/// with entries in `grid`: the pointwise maximum of all such `Q`.
pub fn howe_oracle(p: &FuzzyRel, universe: &Universe, grid: &[f64]) -> FuzzyRel {
    let n = universe.len();
    let free: Vec<(usize, usize)> = (0..n)
        .cartesian_product(0..n)
        .filter(|&(i, j)| p.get(i, j) > 0.0)
        .collect();
    // Direct syntactic decomposition, independent of the algebra type.
    let decompose = |x: usize| -> Option<(Symbol, Vec<usize>)> {
        let t = universe.term(x);
        let ops: Option<Vec<usize>> = t.children().map(|c| universe.index_of(&c)).collect();
        Some((t.symbol()?, ops?))
    };
    let dec: Vec<_> = (0..n).map(decompose).collect();
    let mut best = FuzzyRel::zeros(n);
    let total = grid.len().pow(free.len() as u32);
    for code in 0..total {
        let mut q = FuzzyRel::zeros(n);
        let mut c = code;
        let mut ok = true;
        for &(i, j) in &free {
            let v = grid[c % grid.len()];
            c /= grid.len();
            if v > p.get(i, j) {
                ok = false;
                break;
            }
            q.set(i, j, v);
        }
        if !ok {
            continue;
        }
        let prefixed = (0..n).all(|x| {
            (0..n).all(|z| {
                let mut m: f64 = 1.0;
                for y in 0..n {
                    let push = match (&dec[x], &dec[y]) {
                        (Some((f, us)), Some((g, vs))) if f == g => us
                            .iter()
                            .zip(vs)
                            .fold(0.0, |acc, (&u, &v)| (acc + q.get(u, v)).min(1.0)),
                        _ => 1.0,
                    };
                    m = m.min((push + p.get(y, z)).min(1.0));
                }
                q.get(x, z) <= m + 1e-12
            })
        });
        if prefixed {
            best = FuzzyRel::from_fn(n, n, |i, j| best.get(i, j).max(q.get(i, j)));
        }
    }
    best
}

fn howe_suite(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let mut out = Vec::new();
    let lifting = SigmaLifting::Sum;

    let mut oracle = CheckReport::new("closure_vs_oracle", false);
    let mut k = 0;
    while oracle.samples < cfg.n(200) && k < 100 * cfg.n(200) {
        k += 1;
        let lang = if k % 2 == 0 { Language::Pbck } else { Language::Pski };
        let size = rng.gen_range(2..=5);
        let u = random_closed_universe(rng, lang, size);
        let n = u.len();
        let relational = rng.gen_bool(0.5);
        let grid: &[f64] = if relational { &[0.0, 1.0] } else { &[0.0, 0.5, 1.0] };
        let mut p = FuzzyRel::from_fn(n, n, |_, _| *grid.choose(rng).expect("grid"));
        for i in 0..n {
            if rng.gen_bool(0.7) {
                p.set(i, i, 0.0);
            }
        }
        let free = p.entries().iter().filter(|&&x| x > 0.0).count();
        if grid.len().pow(free as u32) > 1 << 14 {
            continue;
        }
        let alg = PartialAlgebra::from_universe(&u);
        let got = howe_closure(&p, &alg, lifting);
        let want = howe_oracle(&p, &u, grid);
        oracle.record(got.max_abs_diff(&want), 1e-12, || {
            json!({ "universe": u.terms().iter().map(|t| t.to_string()).collect::<Vec<_>>(), "p": p.to_rows() })
        });
    }
    out.push(oracle);

    let universe_json = |u: &Universe| json!(u.terms().iter().map(|t| t.to_string()).collect::<Vec<_>>());
    let mut refl = CheckReport::new("reflexive_gives_reflexive_congruence", false);
    let mut trans = CheckReport::new("transitive_gives_right_absorption", false);
    let mut symm = CheckReport::new("symmetric_reflexive_gives_symmetric_closure", false);
    for _ in 0..cfg.n(300) {
        let lang = if rng.gen_bool(0.5) { Language::Pbck } else { Language::Pski };
        let relational = rng.gen_bool(0.5);
        let u = random_closed_universe(rng, lang, 6);
        let n = u.len();
        let alg = PartialAlgebra::from_universe(&u);

        let p = random_reflexive(rng, n, relational);
        let h = howe_closure(&p, &alg, lifting);
        let diag = (0..n).map(|i| h.get(i, i)).fold(0.0, f64::max);
        let cong = is_congruence(&h, &alg, lifting, 1e-12)
            .iter()
            .map(|v| v.value - v.bound)
            .fold(0.0, f64::max);
        refl.record(diag.max(cong), 1e-12, || json!({ "universe": universe_json(&u), "p": p.to_rows() }));

        let p = random_fuzzy(rng, n, n, relational).transitive_closure();
        let h = howe_closure(&p, &alg, lifting);
        let hp = h.compose(&p).expect("square");
        let excess = h.entries().iter().zip(hp.entries()).map(|(a, b)| a - b).fold(0.0, f64::max);
        trans.record(excess, 1e-12, || json!({ "universe": universe_json(&u), "p": p.to_rows() }));

        let raw = random_reflexive(rng, n, relational);
        let p = raw.join(&raw.reverse());
        let hp = howe_closure(&p, &alg, lifting).transitive_closure();
        let asym = hp.max_abs_diff(&hp.reverse());
        symm.record(asym, 1e-12, || json!({ "universe": universe_json(&u), "p": p.to_rows() }));
    }
    out.extend([refl, trans, symm]);
    out
}

// ---------------------------------------------------------------------------
// Soundness

/// Random pairs for the soundness suite: a term and a perturbation of it.
pub fn random_pairs<R: Rng>(rng: &mut R, language: Language, count: usize) -> Vec<(Term, Term)> {
    (0..count)
        .map(|_| {
            let t = random_term(rng, language, 5);
            let s = random_neighbour(rng, language, &t);
            (t, s)
        })
        .collect()
}

fn soundness_suite(cfg: &SuiteConfig, rng: &mut ChaCha8Rng) -> Vec<CheckReport> {
    let n = cfg.n(100);
    let mut out = Vec::new();
    for (lang, name) in [(Language::Pbck, "pbck_ctx_below_metric"), (Language::Pski, "pski_bisimilar_not_separated")] {
        let mut report = CheckReport::new(name, false);
        let pairs = random_pairs(rng, lang, n);
        let mut sc = SoundnessConfig::new(lang);
        sc.iters = cfg.iters.min(16);
        sc.tol = cfg.tol;
        for pair in &pairs {
            match check_soundness(std::slice::from_ref(pair), &sc) {
                Ok(rep) => {
                    let excess = rep
                        .violations
                        .iter()
                        .map(|v| v.lower - v.upper)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let excess = if rep.violations.is_empty() { 0.0 } else { excess.max(f64::MIN_POSITIVE) };
                    report.record(excess, 0.0, || serde_json::to_value(&rep.violations).expect("serializable"));
                }
                Err(e) => report.error(e),
            }
        }
        out.push(report);
    }
    out
}
