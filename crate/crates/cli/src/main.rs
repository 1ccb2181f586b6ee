//! `pcomb`: evaluate pSKI/pBCK programs, compute behavioural distances,
//! bisimilarity, Howe closures and contextual bounds, and run the property
//! suites.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use pcomb_core::conformance::{bisimilarity, pseudometric, ConformanceConfig, FixpointResult};
use pcomb_core::context::{ctx_distance_lower, CtxConfig};
use pcomb_core::dist::Outcome;
use pcomb_core::howe::{howe_closure, transitive_closure_trick, PartialAlgebra};
use pcomb_core::lift::{format_entry, SigmaLifting, TermRel, Universe};
use pcomb_core::semantics::{evaluate, BehaviourReport};
use pcomb_core::suites::{Suite, SuiteConfig, SuiteReport};
use pcomb_core::syntax::{Language, Term};

#[derive(Parser, Debug)]
#[command(name = "pcomb", version, about = "Behavioural conformances for probabilistic combinatory logics")]
struct Cli {
    /// Object language.
    #[arg(long, global = true, default_value = "pbck")]
    lang: Language,
    /// Evaluation depth N.
    #[arg(long, global = true, default_value_t = 64)]
    iters: usize,
    /// Convergence tolerance.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Seed for randomized suites.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output format; each command has its own default.
    #[arg(long, global = true)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    Wasserstein,
    Quantale,
    Liftability,
    Congruence,
    Howe,
    Soundness,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LiftingArg {
    Sum,
    Max,
}

#[derive(clap::Args, Debug)]
struct UniverseArgs {
    /// Newline-separated terms.
    #[arg(long)]
    universe: PathBuf,
    /// Test arguments (newline-separated); defaults to universe terms of size at most 3.
    #[arg(long)]
    args: Option<PathBuf>,
    /// Layers of universe growth by instantiation.
    #[arg(long, default_value_t = 2)]
    closure_depth: usize,
    /// Cap on the grown universe.
    #[arg(long, default_value_t = 400)]
    max_terms: usize,
    /// Write the matrix here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the JSON sidecar; defaults to `<out>.json`, or stderr.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Serialize the optimal transport plans between universe terms as JSON.
    #[arg(long)]
    emit_plan: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a closed term to depth N.
    Eval { term: String },
    /// Behavioural pseudometric over a universe.
    Pseudometric(UniverseArgs),
    /// Probabilistic bisimilarity over a universe.
    Bisim(UniverseArgs),
    /// Lower bound on the contextual distance by context enumeration.
    Ctxdist {
        t: String,
        s: String,
        #[arg(long, default_value_t = 3)]
        max_ctx_size: usize,
        /// Extra context leaves; defaults to the subterms of both terms.
        #[arg(long)]
        pool: Option<PathBuf>,
    },
    /// Howe closure of a relation given as CSV.
    Howe {
        /// Relation CSV with printed terms as row and column labels.
        #[arg(long)]
        relation: PathBuf,
        /// Order the output by this term list (must name the same terms).
        #[arg(long)]
        universe: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sum")]
        lifting: LiftingArg,
        /// Also take the transitive closure and report symmetry and congruence.
        #[arg(long)]
        transitive: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run property suites.
    Check {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Samples per check, overriding the defaults.
        #[arg(long)]
        samples: Option<usize>,
    },
}

/// Failures that are the caller's fault map to exit code 2.
#[derive(Debug)]
struct UsageError(String);

impl<E: std::fmt::Display> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

type Run = Result<bool, UsageError>;

fn read_terms(path: &Path, lang: Language) -> Result<Vec<Term>, UsageError> {
    let text = fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let t = Term::parse(line, lang).map_err(|e| UsageError(format!("{}:{}: {e}", path.display(), k + 1)))?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), UsageError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| UsageError(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn eval(cli: &Cli, term: &str) -> Run {
    let t = Term::parse(term, cli.lang)?;
    let b = evaluate(&t, cli.lang, cli.iters)?;
    let report = BehaviourReport::new(&b, cli.iters);
    let text = match cli.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut s = String::from("v,p\n");
            for a in &report.atoms {
                s.push_str(&format!("{},{}\n", csv_cell(&a.v), a.p));
            }
            s.push_str(&format!("bottom,{}\n", report.bottom));
            s
        }
    };
    write_out(None, &text)?;
    Ok(true)
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn matrix_json(rel: &TermRel) -> serde_json::Value {
    json!({
        "terms": rel.universe.terms().iter().map(|t| t.to_string()).collect::<Vec<_>>(),
        "matrix": rel.rel.to_rows(),
    })
}

/// Restricts a fixpoint to the given roots, in their order.
fn restrict(res: &FixpointResult, roots: &[Term]) -> TermRel {
    let m = &res.metric;
    let idx: Vec<usize> = roots.iter().map(|t| m.universe.index_of(t).expect("root")).collect();
    let rel = m.rel.reindex(&idx, &idx);
    TermRel::new(Universe::new(roots.iter().cloned()), rel).expect("square")
}

fn plans(res: &FixpointResult, roots: &[Term]) -> Result<serde_json::Value, UsageError> {
    let ws = &res.workspace;
    let d = &res.metric.rel;
    let dr = d.reverse();
    let labels = |x: usize| -> Vec<String> {
        ws.behaviours[x]
            .iter()
            .map(|(o, _)| match o {
                Outcome::Bottom => "⊥".to_string(),
                Outcome::Value(f) => f.to_string(),
            })
            .collect()
    };
    let mut out = Vec::new();
    for (a, ta) in roots.iter().enumerate() {
        for tb in &roots[a + 1..] {
            let x = ws.universe.index_of(ta).expect("root");
            let y = ws.universe.index_of(tb).expect("root");
            let (fi, fp) = ws.plan(d, x, y)?;
            let (bi, bp) = ws.plan(&dr, y, x)?;
            out.push(json!({
                "x": ta.to_string(),
                "y": tb.to_string(),
                "forward": { "rows": labels(x), "cols": labels(y), "instance": fi, "plan": fp },
                "backward": { "rows": labels(y), "cols": labels(x), "instance": bi, "plan": bp },
            }));
        }
    }
    Ok(serde_json::Value::Array(out))
}

fn conformance(cli: &Cli, a: &UniverseArgs, bisim: bool) -> Run {
    let roots = read_terms(&a.universe, cli.lang)?;
    if roots.is_empty() {
        return Err(UsageError(format!("{}: no terms", a.universe.display())));
    }
    let mut cfg = ConformanceConfig::new(cli.lang, roots.clone());
    if let Some(p) = &a.args {
        cfg = cfg.with_args(read_terms(p, cli.lang)?);
    }
    cfg.eval_iters = cli.iters;
    cfg.tol = cli.tol;
    cfg.closure_depth = a.closure_depth;
    cfg.max_terms = a.max_terms;
    let res = if bisim { bisimilarity(&cfg)? } else { pseudometric(&cfg)? };
    let view = restrict(&res, &roots);
    let sidecar = res.sidecar();
    match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            write_out(a.out.as_deref(), &view.to_csv())?;
            let side_path = a.sidecar.clone().or_else(|| a.out.as_ref().map(|o| o.with_extension("json")));
            match side_path {
                Some(p) => write_out(Some(&p), &to_json(&sidecar))?,
                None => eprintln!("{}", serde_json::to_string(&sidecar).expect("serializable")),
            }
        }
        Format::Json => {
            let mut v = matrix_json(&view);
            v["sidecar"] = serde_json::to_value(&sidecar)?;
            write_out(a.out.as_deref(), &to_json(&v))?;
        }
    }
    if let Some(p) = &a.emit_plan {
        write_out(Some(p), &to_json(&plans(&res, &roots)?))?;
    }
    Ok(true)
}

fn ctxdist(cli: &Cli, t: &str, s: &str, max_ctx_size: usize, pool: Option<&Path>) -> Run {
    let t = Term::parse(t, cli.lang)?;
    let s = Term::parse(s, cli.lang)?;
    let mut cfg = CtxConfig::new(cli.lang, max_ctx_size, cli.iters);
    if let Some(p) = pool {
        cfg = cfg.with_pool(read_terms(p, cli.lang)?);
    }
    let b = ctx_distance_lower(&t, &s, &cfg);
    let text = match cli.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&b),
        Format::Csv => format!(
            "lower_bound,witness,max_ctx_size,N\n{},{},{},{}\n",
            b.lower_bound,
            csv_cell(&b.witness.as_ref().map(|w| w.to_string()).unwrap_or_default()),
            b.max_ctx_size,
            b.iters
        ),
    };
    write_out(None, &text)?;
    Ok(true)
}

fn howe(
    cli: &Cli,
    relation: &Path,
    universe: Option<&Path>,
    lifting: LiftingArg,
    transitive: bool,
    out: Option<&Path>,
) -> Run {
    let text = fs::read_to_string(relation).map_err(|e| UsageError(format!("{}: {e}", relation.display())))?;
    let mut p = TermRel::from_csv(&text, cli.lang)?;
    if let Some(u) = universe {
        let order = read_terms(u, cli.lang)?;
        if order.len() != p.universe.len() || order.iter().any(|t| !p.universe.contains(t)) {
            return Err(UsageError("universe file and relation name different terms".into()));
        }
        let idx: Vec<usize> = order.iter().map(|t| p.universe.index_of(t).expect("checked")).collect();
        p = TermRel::new(Universe::new(order), p.rel.reindex(&idx, &idx))?;
    }
    let lifting = match lifting {
        LiftingArg::Sum => SigmaLifting::Sum,
        LiftingArg::Max => SigmaLifting::Max,
    };
    let alg = PartialAlgebra::from_universe(&p.universe);
    let (closure, ok, report) = if transitive {
        let r = transitive_closure_trick(&p.rel, &alg, lifting);
        let ok = r.symmetric && r.congruence_violations.is_empty();
        let report = json!({ "symmetric": r.symmetric, "congruence_violations": r.congruence_violations });
        (r.relation, ok, Some(report))
    } else {
        (howe_closure(&p.rel, &alg, lifting), true, None)
    };
    let h = TermRel::new(p.universe.clone(), closure)?;
    let text = match cli.format.unwrap_or(Format::Csv) {
        Format::Csv => h.to_csv(),
        Format::Json => {
            let mut v = matrix_json(&h);
            if let Some(r) = &report {
                v["report"] = r.clone();
            }
            to_json(&v)
        }
    };
    write_out(out, &text)?;
    if let (Some(r), Some(Format::Csv) | None) = (&report, cli.format) {
        eprintln!("{}", serde_json::to_string(r).expect("serializable"));
    }
    Ok(ok)
}

fn check(cli: &Cli, suite: SuiteArg, samples: Option<usize>) -> Run {
    let cfg = SuiteConfig {
        seed: cli.seed,
        samples,
        iters: cli.iters,
        tol: cli.tol,
    };
    let suites: Vec<Suite> = match suite {
        SuiteArg::All => Suite::ALL.to_vec(),
        SuiteArg::Wasserstein => vec![Suite::Wasserstein],
        SuiteArg::Quantale => vec![Suite::Quantale],
        SuiteArg::Liftability => vec![Suite::Liftability],
        SuiteArg::Congruence => vec![Suite::Congruence],
        SuiteArg::Howe => vec![Suite::Howe],
        SuiteArg::Soundness => vec![Suite::Soundness],
    };
    let reports: Vec<SuiteReport> = suites.iter().map(|s| s.run(&cfg)).collect();
    let ok = reports.iter().all(SuiteReport::passed);
    let text = match cli.format.unwrap_or(Format::Json) {
        Format::Json => to_json(&json!({ "passed": ok, "suites": reports })),
        Format::Csv => {
            let mut s = String::from("suite,check,samples,violations,artifacts,expect_violation,max_excess,passed\n");
            for r in &reports {
                for c in &r.checks {
                    s.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        r.suite,
                        c.name,
                        c.samples,
                        c.violations,
                        c.artifacts.map(|a| a.to_string()).unwrap_or_default(),
                        c.expect_violation,
                        format_entry(c.max_excess),
                        c.passed()
                    ));
                }
            }
            s
        }
    };
    write_out(None, &text)?;
    Ok(ok)
}

fn run(cli: &Cli) -> Run {
    match &cli.command {
        Command::Eval { term } => eval(cli, term),
        Command::Pseudometric(a) => conformance(cli, a, false),
        Command::Bisim(a) => conformance(cli, a, true),
        Command::Ctxdist {
            t,
            s,
            max_ctx_size,
            pool,
        } => ctxdist(cli, t, s, *max_ctx_size, pool.as_deref()),
        Command::Howe {
            relation,
            universe,
            lifting,
            transitive,
            out,
        } => howe(cli, relation, universe.as_deref(), *lifting, *transitive, out.as_deref()),
        Command::Check { suite, samples } => check(cli, *suite, *samples),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Evaluation recurses on term structure; give it room.
    let worker = std::thread::Builder::new()
        .stack_size(256 << 20)
        .spawn(move || run(&cli))
        .expect("spawn worker");
    match worker.join() {
        Ok(Ok(true)) => ExitCode::SUCCESS,
        Ok(Ok(false)) => ExitCode::from(1),
        Ok(Err(UsageError(msg))) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(_) => ExitCode::from(2),
    }
}
