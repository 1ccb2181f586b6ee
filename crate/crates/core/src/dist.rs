//! Finitely supported probability distributions with the monad structure.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};

use indexmap::IndexMap;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use thiserror::Error;

/// Slack allowed on the total mass when a distribution is built from
/// caller-supplied weights.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum DistError {
    #[error("probability {0} is not in [0, 1]")]
    BadProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("convex weight {0} is not in [0, 1]")]
    BadWeight(f64),
}

/// A finitely supported distribution. Atoms are unique, every stored
/// probability is positive, and insertion order is kept so that iteration
/// is deterministic.
#[derive(Clone)]
pub struct Dist<X> {
    atoms: IndexMap<X, f64>,
}

impl<X: Eq + Hash + Clone> Dist<X> {
    pub fn dirac(x: X) -> Self {
        let mut atoms = IndexMap::with_capacity(1);
        atoms.insert(x, 1.0);
        Dist { atoms }
    }

    /// Builds a distribution, merging repeated atoms and dropping zero
    /// weights. Fails unless the weights are probabilities summing to one.
    pub fn new<I: IntoIterator<Item = (X, f64)>>(weights: I) -> Result<Self, DistError> {
        let mut total = 0.0;
        let mut atoms: IndexMap<X, f64> = IndexMap::new();
        for (x, p) in weights {
            if !(0.0..=1.0 + MASS_TOL).contains(&p) || p.is_nan() {
                return Err(DistError::BadProbability(p));
            }
            total += p;
            if p > 0.0 {
                *atoms.entry(x).or_insert(0.0) += p;
            }
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(DistError::NotNormalized(total));
        }
        Ok(Dist { atoms })
    }

    /// Merges weights without the normalization check. Callers guarantee
    /// the total is one.
    pub(crate) fn from_weights_unchecked<I: IntoIterator<Item = (X, f64)>>(weights: I) -> Self {
        let mut atoms: IndexMap<X, f64> = IndexMap::new();
        for (x, p) in weights {
            if p > 0.0 {
                *atoms.entry(x).or_insert(0.0) += p;
            }
        }
        Dist { atoms }
    }

    pub fn mass(&self, x: &X) -> f64 {
        self.atoms.get(x).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = &X> {
        self.atoms.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&X, f64)> {
        self.atoms.iter().map(|(x, p)| (x, *p))
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.atoms.values().sum()
    }

    pub fn map<Y: Eq + Hash + Clone>(&self, mut f: impl FnMut(&X) -> Y) -> Dist<Y> {
        Dist::from_weights_unchecked(self.iter().map(|(x, p)| (f(x), p)))
    }

    /// Kleisli extension: `bind(φ, f) = flatten(map(f, φ))` computed without
    /// the intermediate distribution.
    pub fn bind<Y: Eq + Hash + Clone>(&self, mut f: impl FnMut(&X) -> Dist<Y>) -> Dist<Y> {
        let mut out: Vec<(Y, f64)> = Vec::new();
        for (x, p) in self.iter() {
            for (y, q) in f(x).iter() {
                out.push((y.clone(), p * q));
            }
        }
        Dist::from_weights_unchecked(out)
    }

    /// Atoms sorted by a key, for canonical output.
    pub fn sorted_by_key<K: Ord>(&self, mut key: impl FnMut(&X) -> K) -> Vec<(&X, f64)> {
        let mut v: Vec<(&X, f64)> = self.iter().collect();
        v.sort_by_key(|(x, _)| key(x));
        v
    }
}

/// The unit of the monad.
pub fn dirac<X: Eq + Hash + Clone>(x: X) -> Dist<X> {
    Dist::dirac(x)
}

/// The multiplication of the monad.
pub fn flatten<X: Eq + Hash + Clone>(dd: &Dist<Dist<X>>) -> Dist<X> {
    dd.bind(|d| d.clone())
}

/// `p·φ + (1−p)·ψ`.
pub fn convex<X: Eq + Hash + Clone>(p: f64, phi: &Dist<X>, psi: &Dist<X>) -> Result<Dist<X>, DistError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(DistError::BadWeight(p));
    }
    let left = phi.iter().map(|(x, q)| (x.clone(), p * q));
    let right = psi.iter().map(|(x, q)| (x.clone(), (1.0 - p) * q));
    Ok(Dist::from_weights_unchecked(left.chain(right)))
}

/// `st(Σ pᵢ·xᵢ, y) = Σ pᵢ·(xᵢ, y)`.
pub fn strength<X: Eq + Hash + Clone, Y: Eq + Hash + Clone>(phi: &Dist<X>, y: &Y) -> Dist<(X, Y)> {
    phi.map(|x| (x.clone(), y.clone()))
}

/// Equality is exact and ignores atom order.
impl<X: Eq + Hash> PartialEq for Dist<X> {
    fn eq(&self, other: &Self) -> bool {
        self.atoms.len() == other.atoms.len()
            && self
                .atoms
                .iter()
                .all(|(x, p)| other.atoms.get(x).is_some_and(|q| q.to_bits() == p.to_bits()))
    }
}

impl<X: Eq + Hash> Eq for Dist<X> {}

impl<X: Eq + Hash> Hash for Dist<X> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        // Order-independent combination of per-atom hashes.
        let mut acc: u64 = 0;
        for (x, p) in &self.atoms {
            let mut h = DefaultHasher::new();
            x.hash(&mut h);
            p.to_bits().hash(&mut h);
            acc = acc.wrapping_add(h.finish());
        }
        state.write_u64(acc);
        state.write_usize(self.atoms.len());
    }
}

impl<X: fmt::Debug> fmt::Debug for Dist<X> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (x, p)) in self.atoms.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{x:?}: {p}")?;
        }
        f.write_str("}")
    }
}

#[derive(Serialize)]
struct AtomJson<'a, X> {
    v: &'a X,
    p: f64,
}

impl<X: Serialize> Serialize for Dist<X> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let atoms: Vec<AtomJson<'_, X>> = self.atoms.iter().map(|(v, p)| AtomJson { v, p: *p }).collect();
        let mut st = s.serialize_struct("Dist", 1)?;
        st.serialize_field("atoms", &atoms)?;
        st.end()
    }
}

/// An element of `{⊥} + X`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome<T> {
    Bottom,
    Value(T),
}

impl<T> Outcome<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Outcome::Bottom => None,
            Outcome::Value(v) => Some(v),
        }
    }

    pub fn is_bottom(&self) -> bool {
        matches!(self, Outcome::Bottom)
    }
}

impl<T: fmt::Display> fmt::Display for Outcome<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Bottom => f.write_str("⊥"),
            Outcome::Value(v) => write!(f, "{v}"),
        }
    }
}

impl<T: Serialize> Serialize for Outcome<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Outcome::Bottom => s.serialize_none(),
            Outcome::Value(v) => v.serialize(s),
        }
    }
}

impl<T: Eq + Hash + Clone> Dist<Outcome<T>> {
    pub fn bottom() -> Self {
        Dist::dirac(Outcome::Bottom)
    }

    pub fn bottom_mass(&self) -> f64 {
        self.mass(&Outcome::Bottom)
    }

    pub fn values(&self) -> impl Iterator<Item = (&T, f64)> {
        self.iter().filter_map(|(o, p)| o.value().map(|v| (v, p)))
    }
}
