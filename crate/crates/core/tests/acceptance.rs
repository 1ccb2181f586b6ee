//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pcomb_core::conformance::{pseudometric, ConformanceConfig};
use pcomb_core::context::{ctx_distance_lower, CtxConfig};
use pcomb_core::dist::{Dist, Outcome};
use pcomb_core::semantics::{rho, Behaviour, EvalError, Operand, RuleOutput};
use pcomb_core::suites::{monad_agreement, Suite, SuiteConfig, SuiteReport};
use pcomb_core::syntax::{Language, Layered, Symbol, Template, Term};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        ok,
        detail: detail.into(),
    }
}

fn suite_summary(r: &SuiteReport, names: &[&str]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in names {
        match r.check(name) {
            Some(c) => {
                ok &= c.passed();
                let art = c.artifacts.map(|a| format!(", {a} artifacts")).unwrap_or_default();
                parts.push(format!("{name} {}/{} violations{art}", c.violations, c.samples));
                if !c.passed() && !c.expect_violation {
                    parts.push(format!("counterexample {}", c.counterexample.clone().unwrap_or_default()));
                }
            }
            None => {
                ok = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    (ok, parts.join("; "))
}

fn term(s: &str, l: Language) -> Term {
    Term::parse(s, l).expect("fixed term")
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let l = Language::Pbck;
    let (i, half, omega) = (term("I", l), term("I (+) Omega", l), term("Omega", l));
    let mut cfg = ConformanceConfig::new(l, vec![i.clone(), half.clone(), omega.clone()]).with_args(vec![i.clone(), omega]);
    cfg.eval_iters = 4;
    let d = match pseudometric(&cfg) {
        Ok(r) => r.get(&i, &half).expect("roots present"),
        Err(e) => return verdict(false, format!("pseudometric failed: {e}")),
    };
    let lower = ctx_distance_lower(&i, &half, &CtxConfig::new(l, 1, 4).with_pool(vec![])).lower_bound;
    let elapsed = start.elapsed();
    verdict(
        (d - 0.5).abs() <= 1e-6 && (lower - 0.5).abs() <= 1e-6 && lower <= d + 1e-6 && elapsed < Duration::from_secs(1),
        format!("d(I, I (+) Omega) = {d}, ctx lower bound {lower}, {elapsed:.2?}"),
    )
}

fn layered(s: &str) -> Layered {
    // Templates over constants only: a closed leaf or the hole.
    let t = Template::parse(s, Language::Pbck).expect("fixed template");
    if t.is_hole() {
        Layered::hole()
    } else {
        Layered::Leaf(t)
    }
}

fn value(l: Layered) -> RuleOutput {
    Dist::dirac(Outcome::Value(l))
}

fn op(sym: Symbol, args: Vec<Layered>) -> Layered {
    Layered::Op(sym, args)
}

fn criterion_2() -> Verdict {
    let t = term("K", Language::Pbck);
    let s = term("I", Language::Pbck);
    let phi: Behaviour = Dist::new([
        (Outcome::Value(Template::parse("Kp(_)", Language::Pbck).unwrap()), 0.5),
        (Outcome::Bottom, 0.5),
    ])
    .unwrap();
    let psi: Behaviour = Dist::dirac(Outcome::Value(Template::hole()));
    let (lt, ls, hole) = (layered("K"), layered("I"), Layered::hole());
    let app = |a: Layered, b: Layered| op(Symbol::App, vec![a, b]);

    let golden: Vec<(Language, Symbol, Vec<Operand<'_>>, RuleOutput)> = vec![
        (Language::Pski, Symbol::S, vec![], value(op(Symbol::Sp, vec![hole.clone()]))),
        (Language::Pski, Symbol::Sp, vec![Operand::term(&t)], value(op(Symbol::Spp, vec![lt.clone(), hole.clone()]))),
        (
            Language::Pski,
            Symbol::Spp,
            vec![Operand::term(&t), Operand::term(&s)],
            value(app(app(lt.clone(), hole.clone()), app(ls.clone(), hole.clone()))),
        ),
        (Language::Pbck, Symbol::B, vec![], value(op(Symbol::Bp, vec![hole.clone()]))),
        (Language::Pbck, Symbol::Bp, vec![Operand::term(&t)], value(op(Symbol::Bpp, vec![lt.clone(), hole.clone()]))),
        (
            Language::Pbck,
            Symbol::Bpp,
            vec![Operand::term(&t), Operand::term(&s)],
            value(app(lt.clone(), app(ls.clone(), hole.clone()))),
        ),
        (Language::Pbck, Symbol::C, vec![], value(op(Symbol::Cp, vec![hole.clone()]))),
        (Language::Pbck, Symbol::Cp, vec![Operand::term(&t)], value(op(Symbol::Cpp, vec![lt.clone(), hole.clone()]))),
        (
            Language::Pbck,
            Symbol::Cpp,
            vec![Operand::term(&t), Operand::term(&s)],
            value(app(app(lt.clone(), hole.clone()), ls.clone())),
        ),
        (Language::Pski, Symbol::K, vec![], value(op(Symbol::Kp, vec![hole.clone()]))),
        (Language::Pbck, Symbol::Kp, vec![Operand::term(&t)], value(lt.clone())),
        (Language::Pski, Symbol::I, vec![], value(hole.clone())),
        (Language::Pbck, Symbol::Omega, vec![], Dist::dirac(Outcome::Bottom)),
        (
            Language::Pbck,
            Symbol::Choice,
            vec![Operand::with_behaviour(&t, &phi), Operand::with_behaviour(&s, &psi)],
            Dist::new([
                (Outcome::Value(layered("Kp(_)")), 0.25),
                (Outcome::Bottom, 0.25),
                (Outcome::Value(Layered::hole()), 0.5),
            ])
            .unwrap(),
        ),
        // φ = ½ Kp(_) + ½ ⊥ applied to I: Kp(I) is a value whose behaviour
        // is the constant template I.
        (
            Language::Pbck,
            Symbol::App,
            vec![Operand::with_behaviour(&t, &phi), Operand::term(&s)],
            Dist::new([(Outcome::Value(layered("Kp(I)")), 0.5), (Outcome::Bottom, 0.5)]).unwrap(),
        ),
    ];
    let mut oracle = |x: &Term| -> Result<Behaviour, EvalError> {
        assert_eq!(x.to_string(), "Kp(I)");
        Ok(Dist::dirac(Outcome::Value(Template::parse("Kp(I)", Language::Pbck).unwrap())))
    };
    let mut failures = Vec::new();
    for (lang, sym, ops, want) in &golden {
        match rho(*lang, *sym, ops, &mut oracle) {
            Ok(got) if &got == want => {}
            Ok(got) => failures.push(format!("{sym}: got {got:?}")),
            Err(e) => failures.push(format!("{sym}: {e}")),
        }
    }
    verdict(
        failures.is_empty() && golden.len() == 15,
        format!("{} golden rules, {} mismatches {}", golden.len(), failures.len(), failures.join("; ")),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let r = Suite::Wasserstein.run(&SuiteConfig::default());
    let elapsed = start.elapsed();
    let (ok, detail) = suite_summary(
        &r,
        &["convexity", "strength_nonexpansive", "eta_isometry", "mu_nonexpansive", "duality"],
    );
    verdict(ok && elapsed < Duration::from_secs(30), format!("{detail}; {elapsed:.2?}"))
}

fn criterion_4() -> Verdict {
    let c = monad_agreement(300, 0);
    verdict(
        c.passed() && c.samples == 300,
        format!("{}/{} disagreements, max difference {:.1e}", c.violations, c.samples, c.max_excess),
    )
}

fn criterion_5() -> Verdict {
    let r = Suite::Quantale.run(&SuiteConfig::default());
    let names: Vec<String> = ["associativity", "units", "join_distributivity", "involution", "reindexing"]
        .iter()
        .flat_map(|n| [format!("{n}_rel"), format!("{n}_fuzzy")])
        .collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let (ok, detail) = suite_summary(&r, &refs);
    let sizes = r.checks.iter().all(|c| c.samples == 500);
    verdict(ok && sizes, detail)
}

fn criterion_6() -> Verdict {
    let r = Suite::Liftability.run(&SuiteConfig::default());
    let (ok, detail) = suite_summary(&r, &["pbck_fuzzy", "pski_relational", "s_double_fuzzy_family"]);
    let sizes = r.check("pbck_fuzzy").is_some_and(|c| c.samples == 500)
        && r.check("pski_relational").is_some_and(|c| c.samples == 500);
    verdict(ok && sizes, detail)
}

fn criterion_7() -> Verdict {
    let r = Suite::Congruence.run(&SuiteConfig::default());
    let (ok, detail) = suite_summary(&r, &["pbck_sum_congruence", "pski_operation_closure"]);
    verdict(ok, detail)
}

fn criterion_8() -> Verdict {
    let r = Suite::Howe.run(&SuiteConfig::default());
    let (ok, detail) = suite_summary(
        &r,
        &[
            "closure_vs_oracle",
            "reflexive_gives_reflexive_congruence",
            "transitive_gives_right_absorption",
            "symmetric_reflexive_gives_symmetric_closure",
        ],
    );
    let sizes = r.checks.iter().skip(1).all(|c| c.samples == 300);
    verdict(ok && sizes, detail)
}

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let cfg = SuiteConfig {
        iters: 16,
        ..SuiteConfig::default()
    };
    let r = Suite::Soundness.run(&cfg);
    let elapsed = start.elapsed();
    let (ok, detail) = suite_summary(&r, &["pbck_ctx_below_metric", "pski_bisimilar_not_separated"]);
    let sizes = r.checks.iter().all(|c| c.samples == 100);
    verdict(ok && sizes && elapsed < Duration::from_secs(180), format!("{detail}; {elapsed:.2?}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("pseudometric and ctx bound on I vs I (+) Omega", criterion_1),
        ("rule fidelity", criterion_2),
        ("Wasserstein lemmas and LP duality", criterion_3),
        ("monadic application", criterion_4),
        ("quantale and fibration laws", criterion_5),
        ("liftability dichotomy", criterion_6),
        ("congruence at desk scale", criterion_7),
        ("Howe closure", criterion_8),
        ("soundness", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        let tag = if o.ok { "PASS" } else { "FAIL" };
        println!("criterion {}: {tag} {name}: {}", k + 1, o.detail);
        if !o.ok {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
