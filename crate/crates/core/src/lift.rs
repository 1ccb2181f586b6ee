//! Fuzzy relations over finite universes, the quantale operations on them,
//! and the functor liftings used by the conformance checks.
//!
//! Order convention: the fiber order ⊑ is numeric ≥. Joins in the fiber are
//! pointwise min, meets pointwise max, the ⊑-bottom is the all-ones matrix
//! and the ⊑-top the all-zeros matrix. Relations are the {0,1} case with 0
//! meaning related.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde::Serialize;
use thiserror::Error;

use crate::dist::{Dist, Outcome};
use crate::syntax::{Language, Layered, ParseError, Symbol, Template, Term};
use crate::wasserstein::{self, TransportError};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum LiftError {
    #[error("dimension mismatch: {0}")]
    Mismatch(String),
    #[error("term `{0}` is outside the universe")]
    OutsideUniverse(String),
    #[error("entry {0} is not in [0, 1]")]
    BadEntry(f64),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("csv: {0}")]
    Csv(String),
    #[error("parse error in csv header: {0}")]
    Parse(#[from] ParseError),
}

/// Truncated addition, the monoid operation of the quantale on [0,1].
pub fn boxplus(a: f64, b: f64) -> f64 {
    (a + b).min(1.0)
}

/// A [0,1]-valued matrix. Square matrices are fuzzy relations on one
/// universe; rectangular ones are heterogeneous relations.
#[derive(Clone, PartialEq, Serialize)]
pub struct FuzzyRel {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FuzzyRel {
    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        FuzzyRel {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    /// The ⊑-top: everything at distance 0.
    pub fn zeros(n: usize) -> Self {
        Self::filled(n, n, 0.0)
    }

    /// The ⊑-bottom: everything at distance 1.
    pub fn ones(n: usize) -> Self {
        Self::filled(n, n, 1.0)
    }

    /// The quantale unit: 0 on the diagonal, 1 elsewhere.
    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        FuzzyRel { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, LiftError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(LiftError::Mismatch("ragged rows".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if let Some(&bad) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(LiftError::BadEntry(bad));
        }
        Ok(FuzzyRel { rows: r, cols: c, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Side length of a square matrix.
    pub fn size(&self) -> usize {
        debug_assert_eq!(self.rows, self.cols);
        self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// True when all entries are 0 or 1.
    pub fn is_relation(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0 || x == 1.0)
    }

    pub fn related(&self, i: usize, j: usize) -> bool {
        self.get(i, j) == 0.0
    }

    /// `(d·e)(x,y) = inf_z d(x,z) ⊞ e(z,y)`.
    pub fn compose(&self, other: &FuzzyRel) -> Result<FuzzyRel, LiftError> {
        if self.cols != other.rows {
            return Err(LiftError::Mismatch(format!(
                "{}x{} composed with {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = FuzzyRel::filled(self.rows, other.cols, 1.0);
        for i in 0..self.rows {
            for z in 0..self.cols {
                let a = self.get(i, z);
                if a >= 1.0 {
                    continue;
                }
                let orow = other.row(z);
                let base = i * out.cols;
                for (j, &b) in orow.iter().enumerate() {
                    let v = boxplus(a, b);
                    if v < out.data[base + j] {
                        out.data[base + j] = v;
                    }
                }
            }
        }
        Ok(out)
    }

    /// `d°(x,y) = d(y,x)`.
    pub fn reverse(&self) -> FuzzyRel {
        FuzzyRel::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `d⁺ = ⊔_{n≥1} dⁿ`: shortest paths of length at least one under ⊞.
    pub fn transitive_closure(&self) -> FuzzyRel {
        assert_eq!(self.rows, self.cols, "closure needs a square matrix");
        let n = self.rows;
        let mut r = self.clone();
        for k in 0..n {
            for i in 0..n {
                let a = r.get(i, k);
                if a >= 1.0 {
                    continue;
                }
                for j in 0..n {
                    let v = boxplus(a, r.get(k, j));
                    if v < r.get(i, j) {
                        r.set(i, j, v);
                    }
                }
            }
        }
        r
    }

    /// Fiber join: pointwise min.
    pub fn join(&self, other: &FuzzyRel) -> FuzzyRel {
        self.zip(other, f64::min)
    }

    /// Fiber meet: pointwise max.
    pub fn meet(&self, other: &FuzzyRel) -> FuzzyRel {
        self.zip(other, f64::max)
    }

    fn zip(&self, other: &FuzzyRel, f: impl Fn(f64, f64) -> f64) -> FuzzyRel {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        FuzzyRel {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        }
    }

    /// `self ⊑ other` in the fiber order, i.e. numerically `self ≥ other`,
    /// with slack `tol`.
    pub fn fiber_le(&self, other: &FuzzyRel, tol: f64) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| *a + tol >= *b)
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &FuzzyRel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Reindexing `(f,g)*d(x,x') = d(f x, g x')`.
    pub fn reindex(&self, f: &[usize], g: &[usize]) -> FuzzyRel {
        FuzzyRel::from_fn(f.len(), g.len(), |x, y| self.get(f[x], g[y]))
    }

    pub fn is_reflexive(&self) -> bool {
        (0..self.rows.min(self.cols)).all(|i| self.get(i, i) == 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Triples `(i,k,j)` with `d(i,j) > d(i,k) ⊞ d(k,j) + tol`.
    pub fn triangle_violations(&self, tol: f64) -> Vec<(usize, usize, usize)> {
        let n = self.rows;
        let mut out = Vec::new();
        for i in 0..n {
            for k in 0..n {
                for j in 0..n {
                    if self.get(i, j) > boxplus(self.get(i, k), self.get(k, j)) + tol {
                        out.push((i, k, j));
                    }
                }
            }
        }
        out
    }
}

impl fmt::Debug for FuzzyRel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "FuzzyRel {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}

/// `d_⊥` on `U + {⊥}` with ⊥ at the last index: `d_⊥(⊥, –) = 0`,
/// `d_⊥(x, ⊥) = 1`.
pub fn bot_lift(d: &FuzzyRel) -> FuzzyRel {
    let (r, c) = (d.rows(), d.cols());
    FuzzyRel::from_fn(r + 1, c + 1, |i, j| {
        if i == r {
            0.0
        } else if j == c {
            1.0
        } else {
            d.get(i, j)
        }
    })
}

/// The ⊥-lifting of an arbitrary cost function.
pub fn bot_cost<X, Y, E>(
    a: &Outcome<X>,
    b: &Outcome<Y>,
    inner: impl FnOnce(&X, &Y) -> Result<f64, E>,
) -> Result<f64, E> {
    match (a, b) {
        (Outcome::Bottom, _) => Ok(0.0),
        (Outcome::Value(_), Outcome::Bottom) => Ok(1.0),
        (Outcome::Value(x), Outcome::Value(y)) => inner(x, y),
    }
}

/// Wasserstein lifting of a fuzzy relation to distributions over indices.
pub fn wasserstein_lift(d: &FuzzyRel, phi: &Dist<usize>, psi: &Dist<usize>) -> Result<f64, TransportError> {
    wasserstein::distance(phi, psi, |&i, &j| Ok::<f64, TransportError>(d.get(i, j)))
}

/// An ordered finite set of terms with index lookup.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Universe {
    terms: Vec<Term>,
    index: HashMap<Term, usize>,
}

impl Universe {
    pub fn new(terms: impl IntoIterator<Item = Term>) -> Self {
        let mut u = Universe::default();
        for t in terms {
            u.insert(t);
        }
        u
    }

    /// Adds a term if missing and returns its index.
    pub fn insert(&mut self, t: Term) -> usize {
        if let Some(&i) = self.index.get(&t) {
            return i;
        }
        let i = self.terms.len();
        self.index.insert(t.clone(), i);
        self.terms.push(t);
        i
    }

    pub fn index_of(&self, t: &Term) -> Option<usize> {
        self.index.get(t).copied()
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.index.contains_key(t)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn term(&self, i: usize) -> &Term {
        &self.terms[i]
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// A fuzzy relation on a universe of terms.
#[derive(Clone, Debug, PartialEq)]
pub struct TermRel {
    pub universe: Universe,
    pub rel: FuzzyRel,
}

impl TermRel {
    pub fn new(universe: Universe, rel: FuzzyRel) -> Result<Self, LiftError> {
        if rel.rows() != universe.len() || rel.cols() != universe.len() {
            return Err(LiftError::Mismatch(format!(
                "{} terms but a {}x{} matrix",
                universe.len(),
                rel.rows(),
                rel.cols()
            )));
        }
        Ok(TermRel { universe, rel })
    }

    pub fn dist(&self, a: &Term, b: &Term) -> Result<f64, LiftError> {
        let i = self.idx(a)?;
        let j = self.idx(b)?;
        Ok(self.rel.get(i, j))
    }

    pub fn idx(&self, t: &Term) -> Result<usize, LiftError> {
        self.universe
            .index_of(t)
            .ok_or_else(|| LiftError::OutsideUniverse(t.to_string()))
    }

    pub fn reverse(&self) -> TermRel {
        TermRel {
            universe: self.universe.clone(),
            rel: self.rel.reverse(),
        }
    }

    /// CSV with a header row and column of printed terms. Exact 0 and 1 are
    /// written as integers.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.universe.terms().iter().map(Term::to_string));
        w.write_record(&header).expect("in-memory write");
        for (i, t) in self.universe.terms().iter().enumerate() {
            let mut rec = vec![t.to_string()];
            rec.extend(self.rel.row(i).iter().map(|&x| format_entry(x)));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv(text: &str, language: Language) -> Result<TermRel, LiftError> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(text.as_bytes());
        let mut records = r.records();
        let header = records
            .next()
            .ok_or_else(|| LiftError::Csv("empty input".into()))?
            .map_err(|e| LiftError::Csv(e.to_string()))?;
        let mut terms = Vec::new();
        for cell in header.iter().skip(1) {
            terms.push(Term::parse(cell.trim(), language)?);
        }
        let mut rows = Vec::new();
        for (k, rec) in records.enumerate() {
            let rec = rec.map_err(|e| LiftError::Csv(e.to_string()))?;
            let label = Term::parse(rec.get(0).unwrap_or("").trim(), language)?;
            if terms.get(k) != Some(&label) {
                return Err(LiftError::Csv(format!("row {k} label `{label}` does not match the header")));
            }
            let row: Result<Vec<f64>, _> = rec.iter().skip(1).map(|c| c.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| LiftError::Csv(format!("row {k}: {e}")))?);
        }
        let universe = Universe::new(terms);
        TermRel::new(universe, FuzzyRel::from_rows(rows)?)
    }
}

pub fn format_entry(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x == 1.0 {
        "1".into()
    } else {
        format!("{x}")
    }
}

/// The two signature liftings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaLifting {
    /// ⊞-sum of argument distances.
    Sum,
    /// Maximum of argument distances.
    Max,
}

/// A one-layer application `symbol(args)` over universe indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layer {
    pub symbol: Symbol,
    pub args: Vec<usize>,
}

pub fn sigma_lift(d: &FuzzyRel, lifting: SigmaLifting, s: &Layer, t: &Layer) -> f64 {
    if s.symbol != t.symbol || s.args.len() != t.args.len() {
        return 1.0;
    }
    let parts = s.args.iter().zip(&t.args).map(|(&a, &b)| d.get(a, b));
    match lifting {
        SigmaLifting::Sum => parts.fold(0.0, boxplus),
        SigmaLifting::Max => parts.fold(0.0, f64::max),
    }
}

pub fn sigma_lift_sum(d: &FuzzyRel, s: &Layer, t: &Layer) -> f64 {
    sigma_lift(d, SigmaLifting::Sum, s, t)
}

pub fn sigma_lift_max(d: &FuzzyRel, s: &Layer, t: &Layer) -> f64 {
    sigma_lift(d, SigmaLifting::Max, s, t)
}

/// Sum lifting to Σ*-terms: equal shapes give the ⊞-sum over matched
/// leaves, any shape mismatch gives 1. Closed leaves are looked up in `d`;
/// leaves with holes match only identical leaves, at cost 0.
pub fn term_lift_sum(d: &TermRel, a: &Layered, b: &Layered) -> Result<f64, LiftError> {
    match (a, b) {
        (Layered::Op(f, xs), Layered::Op(g, ys)) => {
            if f != g || xs.len() != ys.len() {
                return Ok(1.0);
            }
            let mut acc = 0.0;
            for (x, y) in xs.iter().zip(ys) {
                acc = boxplus(acc, term_lift_sum(d, x, y)?);
                if acc >= 1.0 {
                    return Ok(1.0);
                }
            }
            Ok(acc)
        }
        (Layered::Leaf(x), Layered::Leaf(y)) => match (x.as_term(), y.as_term()) {
            (Some(s), Some(t)) => d.dist(&s, &t),
            (None, None) if x == y => Ok(0.0),
            _ => Ok(1.0),
        },
        _ => Ok(1.0),
    }
}

/// `max_{x,x' ∈ A} max(0, res(x, x') − d_arg(x, x'))`, the hom-defect
/// restricted to the finite argument set.
pub fn hom_defect_by(
    d_arg: &TermRel,
    args: &[Term],
    mut res: impl FnMut(&Term, &Term) -> Result<f64, LiftError>,
) -> Result<f64, LiftError> {
    let idx: Vec<usize> = args.iter().map(|a| d_arg.idx(a)).collect::<Result<_, _>>()?;
    let mut best: f64 = 0.0;
    for (x, &i) in args.iter().zip(&idx) {
        for (y, &j) in args.iter().zip(&idx) {
            let slack = d_arg.rel.get(i, j);
            if best >= 1.0 - slack {
                continue;
            }
            best = best.max(res(x, y)? - slack);
        }
    }
    Ok(best.max(0.0))
}

/// Hom-defect of two templates: result distances of their instantiations
/// measured in `d_res`.
pub fn hom_defect(d_arg: &TermRel, d_res: &TermRel, f: &Template, g: &Template, args: &[Term]) -> Result<f64, LiftError> {
    hom_defect_by(d_arg, args, |x, y| d_res.dist(&f.instantiate(x), &g.instantiate(y)))
}

/// The cost on `{⊥} + Templates` induced by an argument metric, a result
/// metric and an argument set.
#[derive(Clone, Copy)]
pub struct BehaviourCost<'a> {
    pub d_arg: &'a TermRel,
    pub d_res: &'a TermRel,
    pub args: &'a [Term],
}

impl BehaviourCost<'_> {
    pub fn cost(&self, a: &Outcome<Template>, b: &Outcome<Template>) -> Result<f64, LiftError> {
        bot_cost(a, b, |f, g| hom_defect(self.d_arg, self.d_res, f, g, self.args))
    }
}

/// Wasserstein distance of two behaviours under [`BehaviourCost`].
pub fn behaviour_distance(
    d_arg: &TermRel,
    d_res: &TermRel,
    phi: &Dist<Outcome<Template>>,
    psi: &Dist<Outcome<Template>>,
    args: &[Term],
) -> Result<f64, LiftError> {
    let c = BehaviourCost { d_arg, d_res, args };
    wasserstein::distance(phi, psi, |a, b| c.cost(a, b))
}

/// Wasserstein lifting for an arbitrary atom cost, with the error type of
/// this module.
pub fn lift_cost<X, Y>(
    phi: &Dist<X>,
    psi: &Dist<Y>,
    cost: impl FnMut(&X, &Y) -> Result<f64, LiftError>,
) -> Result<f64, LiftError>
where
    X: Eq + Hash + Clone,
    Y: Eq + Hash + Clone,
{
    wasserstein::distance(phi, psi, cost)
}
