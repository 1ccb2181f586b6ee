//! Howe closure over a finite partial term algebra, congruence checks, the
//! transitive-closure trick and the liftability test for the rule maps.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dist::{Dist, Outcome};
use crate::lift::{
    boxplus, bot_cost, hom_defect_by, lift_cost, sigma_lift, term_lift_sum, FuzzyRel, Layer, LiftError, SigmaLifting,
    TermRel, Universe,
};
use crate::semantics::{rho, Behaviour, DepthTwo, EvalError, FnTable, Operand, RuleOutput};
use crate::syntax::{Expr, Language, Layered, Signature, Symbol, Template, Term};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum HoweError {
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("argument `{0}` is not in the universe of the relation")]
    ArgOutsideUniverse(String),
    #[error("instance result {0} out of range")]
    BadInstance(usize),
}

/// A one-layer application inside the universe.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Instance {
    pub symbol: Symbol,
    pub operands: Vec<usize>,
    pub result: usize,
}

impl Instance {
    pub fn layer(&self) -> Layer {
        Layer {
            symbol: self.symbol,
            args: self.operands.clone(),
        }
    }
}

/// The term algebra restricted to a finite universe: every application
/// whose operands and result lie in the universe. Results are syntactic, so
/// each element is the result of at most one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialAlgebra {
    size: usize,
    instances: Vec<Instance>,
    by_result: Vec<Option<usize>>,
}

impl PartialAlgebra {
    pub fn from_universe(u: &Universe) -> Self {
        let mut instances = Vec::new();
        for (r, t) in u.terms().iter().enumerate() {
            let ops: Option<Vec<usize>> = t.children().map(|c| u.index_of(&c)).collect();
            if let Some(operands) = ops {
                instances.push(Instance {
                    symbol: t.symbol().expect("closed"),
                    operands,
                    result: r,
                });
            }
        }
        PartialAlgebra::from_instances(u.len(), instances).expect("syntactic instances are valid")
    }

    pub fn from_instances(size: usize, instances: Vec<Instance>) -> Result<Self, HoweError> {
        let mut by_result = vec![None; size];
        for (k, inst) in instances.iter().enumerate() {
            if inst.result >= size || inst.operands.iter().any(|&o| o >= size) {
                return Err(HoweError::BadInstance(inst.result));
            }
            if by_result[inst.result].is_some() {
                return Err(HoweError::BadInstance(inst.result));
            }
            by_result[inst.result] = Some(k);
        }
        Ok(PartialAlgebra {
            size,
            instances,
            by_result,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn instance_of(&self, r: usize) -> Option<&Instance> {
        self.by_result[r].map(|k| &self.instances[k])
    }

    /// `(a⋆Σ̄Q)(x, y)`: the lifted distance between the decompositions of
    /// `x` and `y`, or 1 when either has none in the universe.
    pub fn push(&self, q: &FuzzyRel, lifting: SigmaLifting) -> FuzzyRel {
        FuzzyRel::from_fn(self.size, self.size, |x, y| match (self.instance_of(x), self.instance_of(y)) {
            (Some(a), Some(b)) if a.symbol == b.symbol => sigma_lift(q, lifting, &a.layer(), &b.layer()),
            _ => 1.0,
        })
    }
}

/// Least fixed point of `Q ↦ P ⊔ (a⋆Σ̄Q)·P`, iterated from the all-ones
/// matrix. Values only decrease; stability is reached within `|U|² + 2`
/// rounds because an optimal derivation never repeats a pair on a path.
pub fn howe_closure(p: &FuzzyRel, alg: &PartialAlgebra, lifting: SigmaLifting) -> FuzzyRel {
    let n = alg.size();
    assert_eq!(p.rows(), n, "relation and algebra sizes differ");
    let mut q = FuzzyRel::ones(n);
    for _ in 0..(n * n + 2) {
        let step = alg.push(&q, lifting).compose(p).expect("square").join(p);
        if step == q {
            break;
        }
        q = step;
    }
    q
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CongruenceViolation {
    pub symbol: Symbol,
    pub left: usize,
    pub right: usize,
    pub value: f64,
    pub bound: f64,
}

/// Checks `P(f(ū), f(v̄)) ≤ Σ̄P(ū, v̄) + tol` for every pair of instances
/// with the same symbol.
pub fn is_congruence(p: &FuzzyRel, alg: &PartialAlgebra, lifting: SigmaLifting, tol: f64) -> Vec<CongruenceViolation> {
    let mut out = Vec::new();
    for a in alg.instances() {
        for b in alg.instances() {
            if a.symbol != b.symbol {
                continue;
            }
            let bound = sigma_lift(p, lifting, &a.layer(), &b.layer());
            let value = p.get(a.result, b.result);
            if value > bound + tol {
                out.push(CongruenceViolation {
                    symbol: a.symbol,
                    left: a.result,
                    right: b.result,
                    value,
                    bound,
                });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrickResult {
    pub relation: FuzzyRel,
    pub symmetric: bool,
    pub congruence_violations: Vec<CongruenceViolation>,
}

/// `(P̂)⁺` for a symmetric reflexive `P`, with its symmetry and congruence
/// checked.
pub fn transitive_closure_trick(p: &FuzzyRel, alg: &PartialAlgebra, lifting: SigmaLifting) -> TrickResult {
    let relation = howe_closure(p, alg, lifting).transitive_closure();
    let symmetric = relation.is_symmetric();
    let congruence_violations = is_congruence(&relation, alg, lifting, 1e-12);
    TrickResult {
        relation,
        symmetric,
        congruence_violations,
    }
}

/// One operand tuple component for the liftability check.
#[derive(Clone, Debug, PartialEq)]
pub struct OperandSample {
    pub term: Term,
    pub behaviour: Behaviour,
    pub depth_two: DepthTwo,
}

/// Whether component and output distances are fuzzy or thresholded to
/// {0,1} (relation liftings).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LiftMode {
    Fuzzy,
    Relational,
}

impl LiftMode {
    fn apply(self, w: f64) -> f64 {
        match self {
            LiftMode::Fuzzy => w,
            LiftMode::Relational => {
                if w <= 1e-12 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Checks one sampled pair of operand tuples against the rule map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub symbol: Symbol,
    pub epsilons: Vec<f64>,
    pub output: f64,
    pub bound: f64,
    pub violated: bool,
    pub left: Vec<String>,
    pub right: Vec<String>,
}

/// Distances on the three operand components, lifted from `d`.
pub struct ComponentMetric<'a> {
    pub d: &'a TermRel,
    pub args: &'a [Term],
    pub mode: LiftMode,
}

impl ComponentMetric<'_> {
    pub fn behaviour(&self, a: &Behaviour, b: &Behaviour) -> Result<f64, LiftError> {
        let w = lift_cost(a, b, |x, y| {
            bot_cost(x, y, |f: &Template, g: &Template| {
                hom_defect_by(self.d, self.args, |u, v| {
                    self.d.dist(&f.instantiate(u), &g.instantiate(v))
                })
            })
        })?;
        Ok(self.mode.apply(w))
    }

    pub fn depth_two(&self, a: &DepthTwo, b: &DepthTwo) -> Result<f64, LiftError> {
        let w = lift_cost(&a.outer, &b.outer, |x, y| {
            bot_cost(x, y, |&i: &usize, &j: &usize| {
                hom_defect_by(self.d, self.args, |u, v| {
                    let fu = a.functions[i].get(u).ok_or_else(|| LiftError::OutsideUniverse(u.to_string()))?;
                    let gv = b.functions[j].get(v).ok_or_else(|| LiftError::OutsideUniverse(v.to_string()))?;
                    self.behaviour(fu, gv)
                })
            })
        })?;
        Ok(self.mode.apply(w))
    }

    pub fn output(&self, a: &RuleOutput, b: &RuleOutput) -> Result<f64, LiftError> {
        let w = lift_cost(a, b, |x, y| {
            bot_cost(x, y, |s: &Layered, t: &Layered| {
                hom_defect_by(self.d, self.args, |u, v| term_lift_sum(self.d, &s.instantiate(u), &t.instantiate(v)))
            })
        })?;
        Ok(self.mode.apply(w))
    }
}

fn rule_output(language: Language, symbol: Symbol, ops: &[OperandSample]) -> Result<RuleOutput, EvalError> {
    let operands: Vec<Operand<'_>> = ops
        .iter()
        .map(|o| Operand {
            term: &o.term,
            behaviour: Some(&o.behaviour),
            depth_two: Some(&o.depth_two),
        })
        .collect();
    let mut no_oracle = |t: &Term| Err(EvalError::MissingSecondLevel(t.to_string()));
    rho(language, symbol, &operands, &mut no_oracle)
}

pub fn check_rho_sample(
    language: Language,
    metric: &ComponentMetric<'_>,
    symbol: Symbol,
    left: &[OperandSample],
    right: &[OperandSample],
    tol: f64,
) -> Result<SampleOutcome, HoweError> {
    let mut epsilons = Vec::with_capacity(left.len());
    for (a, b) in left.iter().zip(right) {
        let e = metric
            .mode
            .apply(metric.d.dist(&a.term, &b.term)?)
            .max(metric.behaviour(&a.behaviour, &b.behaviour)?)
            .max(metric.depth_two(&a.depth_two, &b.depth_two)?);
        epsilons.push(e);
    }
    let out_l = rule_output(language, symbol, left)?;
    let out_r = rule_output(language, symbol, right)?;
    let output = metric.output(&out_l, &out_r)?;
    let bound = epsilons.iter().fold(0.0, |acc, &e| boxplus(acc, e));
    Ok(SampleOutcome {
        symbol,
        violated: output > bound + tol,
        epsilons,
        output,
        bound,
        left: left.iter().map(|o| o.term.to_string()).collect(),
        right: right.iter().map(|o| o.term.to_string()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiftabilityReport {
    pub language: Language,
    pub mode: LiftMode,
    pub samples: usize,
    pub violations: Vec<SampleOutcome>,
}

/// Templates whose instantiations on every argument stay in the universe:
/// the hole, every closed member, and every member with one direct child
/// from `args` replaced by the hole.
pub fn closed_templates(u: &Universe, args: &[Term]) -> Vec<Template> {
    let mut out = vec![Template::hole()];
    for t in u.terms() {
        out.push(Template::closed(t));
    }
    for t in u.terms() {
        let children: Vec<Expr> = t.expr().children().to_vec();
        for (k, c) in children.iter().enumerate() {
            if !args.iter().any(|a| a.expr() == c) {
                continue;
            }
            let mut cs = children.clone();
            cs[k] = Expr::hole();
            let tpl = Template::from_expr(Expr::op(t.symbol().expect("closed"), cs));
            if !out.contains(&tpl) && args.iter().all(|a| u.contains(&tpl.instantiate(a))) {
                out.push(tpl);
            }
        }
    }
    out
}

/// Random generators for liftability operands over a fixed universe.
pub struct OperandSampler<'a> {
    pub universe: &'a Universe,
    pub args: &'a [Term],
    pub templates: Vec<Template>,
}

impl<'a> OperandSampler<'a> {
    pub fn new(universe: &'a Universe, args: &'a [Term]) -> Self {
        OperandSampler {
            universe,
            args,
            templates: closed_templates(universe, args),
        }
    }

    fn weights<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
        // Dyadic weights keep sums exact.
        let raw: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
        let total: u32 = raw.iter().sum();
        let scale = total.next_power_of_two();
        let mut w: Vec<f64> = raw.iter().map(|&x| f64::from(x) / f64::from(scale)).collect();
        w[0] += f64::from(scale - total) / f64::from(scale);
        w
    }

    pub fn behaviour<R: Rng>(&self, rng: &mut R) -> Behaviour {
        let k = rng.gen_range(1..=3);
        let w = Self::weights(rng, k);
        Dist::from_weights_unchecked(w.into_iter().map(|p| {
            let atom = if rng.gen_bool(0.2) {
                Outcome::Bottom
            } else {
                Outcome::Value(self.templates.choose(rng).expect("nonempty").clone())
            };
            (atom, p)
        }))
    }

    pub fn depth_two<R: Rng>(&self, rng: &mut R) -> DepthTwo {
        let m = rng.gen_range(1..=2);
        let functions: Vec<FnTable> = (0..m)
            .map(|_| FnTable::new(self.args.iter().map(|a| (a.clone(), self.behaviour(rng)))))
            .collect();
        let k = rng.gen_range(1..=3);
        let w = Self::weights(rng, k);
        let outer = Dist::from_weights_unchecked(w.into_iter().map(|p| {
            let o = if rng.gen_bool(0.2) {
                Outcome::Bottom
            } else {
                Outcome::Value(rng.gen_range(0..m))
            };
            (o, p)
        }));
        DepthTwo { outer, functions }
    }

    fn term<R: Rng>(&self, rng: &mut R, from_args: bool) -> Term {
        if from_args {
            self.args.choose(rng).expect("nonempty args").clone()
        } else {
            self.universe.terms().choose(rng).expect("nonempty universe").clone()
        }
    }

    pub fn operand<R: Rng>(&self, rng: &mut R, from_args: bool) -> OperandSample {
        OperandSample {
            term: self.term(rng, from_args),
            behaviour: self.behaviour(rng),
            depth_two: self.depth_two(rng),
        }
    }

    /// A second operand that shares each component with `o` half the time.
    pub fn nearby<R: Rng>(&self, rng: &mut R, o: &OperandSample, from_args: bool) -> OperandSample {
        OperandSample {
            term: if rng.gen_bool(0.5) { o.term.clone() } else { self.term(rng, from_args) },
            behaviour: if rng.gen_bool(0.5) { o.behaviour.clone() } else { self.behaviour(rng) },
            depth_two: if rng.gen_bool(0.5) { o.depth_two.clone() } else { self.depth_two(rng) },
        }
    }
}

/// Samples operand tuples for random symbols and checks
/// `W(ρ(left), ρ(right)) ≤ ⊞ εᵢ`.
pub fn check_rho_liftable<R: Rng>(
    language: Language,
    d: &TermRel,
    args: &[Term],
    samples: usize,
    mode: LiftMode,
    rng: &mut R,
) -> Result<LiftabilityReport, HoweError> {
    for a in args {
        if !d.universe.contains(a) {
            return Err(HoweError::ArgOutsideUniverse(a.to_string()));
        }
    }
    let sampler = OperandSampler::new(&d.universe, args);
    let metric = ComponentMetric { d, args, mode };
    let symbols: Vec<Symbol> = Signature::new(language).symbols().to_vec();
    let mut violations = Vec::new();
    for k in 0..samples {
        // Cycle through the symbols so each gets its share.
        let symbol = symbols[k % symbols.len()];
        let mut left = Vec::new();
        let mut right = Vec::new();
        for pos in 0..symbol.arity() {
            let from_args = symbol == Symbol::App && pos == 1;
            let a = sampler.operand(rng, from_args);
            let b = sampler.nearby(rng, &a, from_args);
            left.push(a);
            right.push(b);
        }
        let outcome = check_rho_sample(language, &metric, symbol, &left, &right, 1e-7)?;
        if outcome.violated {
            violations.push(outcome);
        }
    }
    Ok(LiftabilityReport {
        language,
        mode,
        samples,
        violations,
    })
}

/// The duplicated-argument witness for S'': the function parts of the two
/// operands coincide, while the argument pair sits at distance `delta`.
pub fn s_double_witness(delta: f64) -> Result<SampleOutcome, HoweError> {
    let p = |s: &str| Term::parse(s, Language::Pski).expect("fixed term");
    let (t, s, u, v) = (p("K"), p("I"), p("S"), p("Omega"));
    let universe = Universe::new([t.clone(), s.clone(), u.clone(), v.clone()]);
    let mut rel = FuzzyRel::identity(4);
    rel.set(2, 3, delta);
    rel.set(3, 2, delta);
    let d = TermRel::new(universe, rel)?;
    let args = vec![u, v];
    let inert = |term: &Term| OperandSample {
        term: term.clone(),
        behaviour: Behaviour::bottom(),
        depth_two: DepthTwo {
            outer: Dist::dirac(Outcome::Bottom),
            functions: vec![],
        },
    };
    let ops = vec![inert(&t), inert(&s)];
    let metric = ComponentMetric {
        d: &d,
        args: &args,
        mode: LiftMode::Fuzzy,
    };
    check_rho_sample(Language::Pski, &metric, Symbol::Spp, &ops, &ops, 1e-7)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(s: &str) -> Term {
        Term::parse(s, Language::Pbck).unwrap()
    }

    #[test]
    fn identity_on_constants() {
        let u = Universe::new([t("Omega"), t("I")]);
        let alg = PartialAlgebra::from_universe(&u);
        assert_eq!(alg.instances().len(), 2);
        let h = howe_closure(&FuzzyRel::identity(2), &alg, SigmaLifting::Sum);
        assert_eq!(h, FuzzyRel::identity(2));
    }

    #[test]
    fn closure_is_reflexive_congruence_below_p() {
        let u = Universe::new([t("I"), t("Omega"), t("Kp(I)"), t("Kp(Omega)"), t("I (+) Omega")]);
        let alg = PartialAlgebra::from_universe(&u);
        let mut p = FuzzyRel::identity(5);
        p.set(0, 1, 0.25);
        p.set(1, 0, 0.25);
        let h = howe_closure(&p, &alg, SigmaLifting::Sum);
        assert!(h.is_reflexive());
        assert!(h.fiber_le(&h, 0.0));
        assert!(p.fiber_le(&h, 0.0), "P ⊑ Ĥ");
        assert!(is_congruence(&h, &alg, SigmaLifting::Sum, 1e-12).is_empty());
        // Kp(I) vs Kp(Omega) inherits 0.25 from the arguments.
        assert_eq!(h.get(2, 3), 0.25);
    }

    #[test]
    fn congruence_examples() {
        let u = Universe::new([t("I"), t("Omega"), t("Kp(I)"), t("Kp(Omega)"), t("I I")]);
        let alg = PartialAlgebra::from_universe(&u);
        assert!(is_congruence(&FuzzyRel::identity(5), &alg, SigmaLifting::Sum, 0.0).is_empty());
        let mut p = FuzzyRel::identity(5);
        p.set(2, 3, 0.0);
        p.set(3, 2, 0.0);
        assert!(is_congruence(&p, &alg, SigmaLifting::Sum, 0.0).is_empty());
        let mut q = FuzzyRel::zeros(5);
        q.set(4, 4, 0.5);
        let v = is_congruence(&q, &alg, SigmaLifting::Sum, 0.0);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].left, v[0].right, v[0].value, v[0].bound), (4, 4, 0.5, 0.0));
    }

    #[test]
    fn trick_on_identity() {
        let u = Universe::new([t("I"), t("K"), t("K I")]);
        let alg = PartialAlgebra::from_universe(&u);
        let r = transitive_closure_trick(&FuzzyRel::identity(3), &alg, SigmaLifting::Sum);
        assert_eq!(r.relation, FuzzyRel::identity(3));
        assert!(r.symmetric && r.congruence_violations.is_empty());
    }

    #[test]
    fn s_double_is_flagged() {
        let o = s_double_witness(0.3).unwrap();
        assert!(o.violated);
        assert!((o.output - 0.3).abs() < 1e-12, "{}", o.output);
        assert_eq!(o.bound, 0.0);
    }

    #[test]
    fn pbck_small_sample_has_no_violations() {
        let u = Universe::new(["I", "Omega", "K", "Kp(I)", "I I", "I (+) Omega"].map(t));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rel = FuzzyRel::from_fn(6, 6, |i, j| if i == j { 0.0 } else { f64::from(rng.gen_range(0..=4u8)) / 4.0 });
        let d = TermRel::new(u, rel).unwrap();
        let args = vec![t("I"), t("Omega")];
        let rep = check_rho_liftable(Language::Pbck, &d, &args, 60, LiftMode::Fuzzy, &mut rng).unwrap();
        assert!(rep.violations.is_empty(), "{:?}", rep.violations.first());
    }
}
