use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pcomb_core::conformance::{pseudometric_on, pseudometric_step, ConformanceConfig, Workspace};
use pcomb_core::context::{context_gap, ctx_distance_lower, CtxConfig};
use pcomb_core::dist::Outcome;
use pcomb_core::howe::{howe_closure, PartialAlgebra};
use pcomb_core::lift::{FuzzyRel, SigmaLifting};
use pcomb_core::semantics::{divergence_mass, Evaluator};
use pcomb_core::suites::{random_closed_universe, random_dist, random_fuzzy, random_term};
use pcomb_core::syntax::{Language, Term};
use pcomb_core::wasserstein::{solve, TransportInstance};

fn lang(pski: bool) -> Language {
    if pski {
        Language::Pski
    } else {
        Language::Pbck
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kleene_chain_is_monotone(seed in any::<u64>(), pski in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = lang(pski);
        let t = random_term(&mut rng, l, 7);
        let mut ev = Evaluator::with_limit(l, 20_000);
        let mut prev = None;
        for n in 0..12 {
            let Ok(b) = ev.eval(&t, n) else { return Ok(()) };
            if let Some(p) = &prev {
                let p: &pcomb_core::semantics::Behaviour = p;
                prop_assert!(divergence_mass(&b) <= divergence_mass(p) + 1e-12);
                for (o, m) in p.iter() {
                    if let Outcome::Value(_) = o {
                        prop_assert!(b.mass(o) >= m - 1e-12, "atom {} lost mass at {}", o, n);
                    }
                }
            }
            prev = Some(b);
        }
    }

    #[test]
    fn settled_iterates_stay_fixed(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_term(&mut rng, Language::Pbck, 7);
        let mut ev = Evaluator::new(Language::Pbck);
        let mut stable_from = None;
        for n in 0..20 {
            let b = ev.eval(&t, n).unwrap();
            match stable_from {
                Some(ref s) => prop_assert_eq!(&b, s),
                None if n > 0 && ev.eval(&t, n - 1).unwrap() == b && b.bottom_mass() == 0.0 => stable_from = Some(b),
                None => {}
            }
        }
    }

    #[test]
    fn pseudometric_chain_rises_and_stays_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roots: Vec<Term> = (0..5).map(|_| random_term(&mut rng, Language::Pbck, 6)).collect();
        let mut cfg = ConformanceConfig::new(Language::Pbck, roots);
        cfg.eval_iters = 12;
        cfg.closure_depth = 1;
        cfg.max_terms = 60;
        let ws = Workspace::build(&cfg).unwrap();
        let mut d = FuzzyRel::zeros(ws.len());
        for _ in 0..15 {
            let next = pseudometric_step(&ws, &d).unwrap();
            prop_assert!(next.is_symmetric());
            for (a, b) in d.entries().iter().zip(next.entries()) {
                prop_assert!(*b >= a - 1e-12);
            }
            if next.max_abs_diff(&d) <= 1e-12 {
                break;
            }
            d = next;
        }
    }

    #[test]
    fn larger_argument_sets_never_shrink_distances(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let roots: Vec<Term> = (0..4).map(|_| random_term(&mut rng, Language::Pbck, 5)).collect();
        let small: Vec<Term> = ["I", "Omega"].iter().map(|s| Term::parse(s, Language::Pbck).unwrap()).collect();
        let mut large = small.clone();
        large.extend(["K", "Kp(I)", "I (+) Omega"].iter().map(|s| Term::parse(s, Language::Pbck).unwrap()));
        let run = |args: Vec<Term>| {
            let mut cfg = ConformanceConfig::new(Language::Pbck, roots.clone()).with_args(args);
            cfg.eval_iters = 12;
            cfg.closure_depth = 0;
            pseudometric_on(Workspace::build(&cfg).unwrap(), 100, 1e-12).unwrap().metric
        };
        let (ds, dl) = (run(small), run(large));
        for a in &roots {
            for b in &roots {
                prop_assert!(dl.dist(a, b).unwrap() >= ds.dist(a, b).unwrap() - 1e-12);
            }
        }
    }

    #[test]
    fn howe_closure_is_monotone(seed in any::<u64>(), relational in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_closed_universe(&mut rng, Language::Pbck, 6);
        let n = u.len();
        let alg = PartialAlgebra::from_universe(&u);
        let p = random_fuzzy(&mut rng, n, n, relational);
        let q = p.join(&random_fuzzy(&mut rng, n, n, relational));
        // q ⊒ p in the fiber order, so its closure is ⊒ too.
        let (hp, hq) = (howe_closure(&p, &alg, SigmaLifting::Sum), howe_closure(&q, &alg, SigmaLifting::Sum));
        prop_assert!(hp.fiber_le(&hq, 1e-12));
        prop_assert!(p.fiber_le(&hp, 1e-12));
    }

    #[test]
    fn raising_a_cost_never_lowers_the_optimum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let (m, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let s = random_dist(&mut rng, m, m);
        let t = random_dist(&mut rng, n, n);
        let mut inst = TransportInstance {
            supplies: (0..m).map(|i| s.mass(&i)).collect(),
            demands: (0..n).map(|j| t.mass(&j)).collect(),
            costs: random_fuzzy(&mut rng, m, n, false).to_rows(),
        };
        let before = solve(&inst).unwrap().value;
        let (i, j) = (rng.gen_range(0..m), rng.gen_range(0..n));
        inst.costs[i][j] = (inst.costs[i][j] + rng.gen_range(0.0..1.0)).min(1.0);
        prop_assert!(solve(&inst).unwrap().value >= before - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ctx_witness_reproduces_its_gap(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_term(&mut rng, Language::Pbck, 4);
        let s = random_term(&mut rng, Language::Pbck, 4);
        let cfg = CtxConfig::new(Language::Pbck, 3, 10);
        let b = ctx_distance_lower(&t, &s, &cfg);
        let w = b.witness.expect("the empty context is always there");
        prop_assert_eq!(context_gap(&w, &t, &s, Language::Pbck, 10, cfg.max_terms).unwrap(), b.lower_bound);
    }

    #[test]
    fn ctx_bound_grows_with_size_and_pool(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_term(&mut rng, Language::Pbck, 4);
        let s = random_term(&mut rng, Language::Pbck, 4);
        let extra = random_term(&mut rng, Language::Pbck, 3);
        let base = CtxConfig::new(Language::Pbck, 2, 10).with_pool(vec![]);
        let bigger = CtxConfig::new(Language::Pbck, 3, 10).with_pool(vec![]);
        let pooled = CtxConfig::new(Language::Pbck, 3, 10).with_pool(vec![extra]);
        let (a, b, c) = (
            ctx_distance_lower(&t, &s, &base).lower_bound,
            ctx_distance_lower(&t, &s, &bigger).lower_bound,
            ctx_distance_lower(&t, &s, &pooled).lower_bound,
        );
        prop_assert!(a <= b && b <= c);
    }
}
