//! Domain types shared by every module.
//!
//! A [`Universe`] fixes the canonical ordering of alternatives. Every other
//! type refers to alternatives by their index in that ordering, so vector
//! layouts agree across the crate (in particular the "last alternative" that
//! the GMM selector drops is the last member of `S` in universe order).

use std::borrow::Borrow;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{AwlmError, Result};

/// Tolerance on the total mass of a distribution.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Negative masses above this threshold are treated as rounding and clamped to 0.
pub const CLAMP_TOL: f64 = 1e-15;

/// Label of a single alternative.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AlternativeId(String);

impl AlternativeId {
    pub fn new(label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if label.is_empty() {
            return Err(AwlmError::InvalidUniverse("empty alternative label".into()));
        }
        Ok(Self(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for AlternativeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AlternativeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Finite, ordered universe of alternatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Universe {
    labels: Vec<AlternativeId>,
    index: HashMap<AlternativeId, usize>,
}

impl Universe {
    /// Builds a universe from at least two distinct, non-empty labels.
    pub fn new<I, L>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = L>,
        L: Into<String>,
    {
        let labels = labels
            .into_iter()
            .map(AlternativeId::new)
            .collect::<Result<Vec<_>>>()?;
        if labels.len() < 2 {
            return Err(AwlmError::InvalidUniverse(format!(
                "need at least 2 alternatives, got {}",
                labels.len()
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, l) in labels.iter().enumerate() {
            if index.insert(l.clone(), i).is_some() {
                return Err(AwlmError::InvalidUniverse(format!("duplicate label `{l}`")));
            }
        }
        Ok(Self { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[AlternativeId] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &AlternativeId {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.index
            .get(label)
            .copied()
            .ok_or_else(|| AwlmError::UnknownAlternative(label.to_string()))
    }

    /// Subset from labels; order of `labels` is irrelevant.
    pub fn subset<S: AsRef<str>>(&self, labels: &[S]) -> Result<Subset> {
        let members = labels
            .iter()
            .map(|l| self.index_of(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Subset::new(self.len(), members)
    }

    /// The whole universe as a subset.
    pub fn full(&self) -> Subset {
        Subset {
            universe_size: self.len(),
            members: (0..self.len()).collect(),
        }
    }

    /// Distribution from `(label, mass)` pairs.
    pub fn dist<S: AsRef<str>>(&self, entries: &[(S, f64)]) -> Result<Dist> {
        let labels: Vec<&str> = entries.iter().map(|(l, _)| l.as_ref()).collect();
        let support = self.subset(&labels)?;
        let mut mass = vec![0.0; support.len()];
        for (label, m) in entries {
            let idx = self.index_of(label.as_ref())?;
            mass[support.position(idx).expect("label is in support")] = *m;
        }
        Dist::new(support, mass)
    }
}

/// A set of alternatives, stored as sorted indices into a universe.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Subset {
    universe_size: usize,
    members: Vec<usize>,
}

impl Subset {
    pub fn new(universe_size: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        let before = members.len();
        members.dedup();
        if members.len() != before {
            return Err(AwlmError::InvalidMenu(
                "duplicate alternative in subset".into(),
            ));
        }
        if let Some(&last) = members.last() {
            if last >= universe_size {
                return Err(AwlmError::InvalidMenu(format!(
                    "index {last} outside universe of size {universe_size}"
                )));
            }
        }
        Ok(Self {
            universe_size,
            members,
        })
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.members.binary_search(&index).is_ok()
    }

    /// Position of a universe index within this subset's coordinate layout.
    pub fn position(&self, index: usize) -> Option<usize> {
        self.members.binary_search(&index).ok()
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.universe_size == other.universe_size && self.members.iter().all(|&m| other.contains(m))
    }

    pub fn union(&self, other: &Subset) -> Result<Subset> {
        same_universe(self.universe_size, other.universe_size)?;
        let mut members = self.members.clone();
        members.extend(other.members.iter().copied().filter(|m| !self.contains(*m)));
        Subset::new(self.universe_size, members)
    }

    pub fn intersection(&self, other: &Subset) -> Vec<usize> {
        self.members
            .iter()
            .copied()
            .filter(|&m| other.contains(m))
            .collect()
    }
}

pub(crate) fn same_universe(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(AwlmError::UniverseMismatch(format!(
            "universe sizes {a} and {b}"
        )));
    }
    Ok(())
}

/// Feasible set nested in the influencer's menu: `S ⊆ I`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MenuPair {
    feasible: Subset,
    influencer: Subset,
}

impl MenuPair {
    pub fn new(feasible: Subset, influencer: Subset) -> Result<Self> {
        if feasible.is_empty() {
            return Err(AwlmError::InvalidMenu("feasible set is empty".into()));
        }
        same_universe(feasible.universe_size, influencer.universe_size)?;
        if !feasible.is_subset_of(&influencer) {
            return Err(AwlmError::InvalidMenu(
                "feasible set is not contained in the influencer menu".into(),
            ));
        }
        Ok(Self {
            feasible,
            influencer,
        })
    }

    pub fn feasible(&self) -> &Subset {
        &self.feasible
    }

    pub fn influencer(&self) -> &Subset {
        &self.influencer
    }
}

/// Probability distribution with dense mass over its support.
///
/// Mass off the support is zero; the zero-extension to the universe is never
/// materialized.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    support: Subset,
    mass: Vec<f64>,
}

impl Dist {
    /// Validates a mass vector laid out in the support's canonical order.
    ///
    /// Masses in `[-1e-15, 0)` are clamped to zero; anything more negative,
    /// or a total outside `1 ± 1e-12`, is rejected.
    pub fn new(support: Subset, mut mass: Vec<f64>) -> Result<Self> {
        if mass.len() != support.len() {
            return Err(AwlmError::InvalidDistribution(format!(
                "{} masses for a support of size {}",
                mass.len(),
                support.len()
            )));
        }
        if support.is_empty() {
            return Err(AwlmError::InvalidDistribution("empty support".into()));
        }
        for m in mass.iter_mut() {
            if !m.is_finite() {
                return Err(AwlmError::InvalidDistribution("non-finite mass".into()));
            }
            if *m < 0.0 {
                if *m >= -CLAMP_TOL {
                    *m = 0.0;
                } else {
                    return Err(AwlmError::InvalidDistribution(format!(
                        "negative mass {m:e}"
                    )));
                }
            }
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(AwlmError::InvalidDistribution(format!(
                "masses sum to {total}, not 1"
            )));
        }
        Ok(Self { support, mass })
    }

    /// Normalizes nonnegative weights with a positive total.
    pub fn from_weights(support: Subset, weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(AwlmError::InvalidDistribution(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(AwlmError::InvalidDistribution("weights sum to zero".into()));
        }
        Self::new(support, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(support: Subset) -> Result<Self> {
        let n = support.len();
        Self::from_weights(support, vec![1.0; n])
    }

    pub fn support(&self) -> &Subset {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn universe_size(&self) -> usize {
        self.support.universe_size
    }

    /// Mass at a universe index (zero off the support).
    pub fn mass(&self, index: usize) -> f64 {
        self.support.position(index).map_or(0.0, |p| self.mass[p])
    }

    /// The restriction `q|_S` laid out in `S`'s order (not renormalized).
    pub fn restrict(&self, s: &Subset) -> Vec<f64> {
        s.members().iter().map(|&x| self.mass(x)).collect()
    }

    /// Returns `true` when this distribution lives exactly on `s`.
    pub fn is_on(&self, s: &Subset) -> bool {
        self.support == *s
    }

    /// Dense zero-extension over the universe.
    pub fn to_universe_vec(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.support.universe_size];
        for (&x, &m) in self.support.members().iter().zip(&self.mass) {
            out[x] = m;
        }
        out
    }
}

/// Strictly positive Luce weights over the whole universe.
#[derive(Debug, Clone, PartialEq)]
pub struct LuceWeights(Vec<f64>);

impl LuceWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(AwlmError::InvalidParameter(
                "weights must cover a universe of size >= 2".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(AwlmError::InvalidParameter(format!(
                "Luce weights must be positive, got {w}"
            )));
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Influence strength in the open unit interval plus Luce weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    alpha: f64,
    weights: LuceWeights,
}

impl ModelParams {
    pub fn new(alpha: f64, weights: LuceWeights) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(AwlmError::InvalidParameter(format!(
                "alpha must lie strictly inside (0, 1), got {alpha}"
            )));
        }
        Ok(Self { alpha, weights })
    }

    /// The `α = 0` boundary: choice follows the Luce weights alone. Useful for
    /// simulating baseline data; estimators assume an interior `α`.
    pub fn no_influence(weights: LuceWeights) -> Self {
        Self {
            alpha: 0.0,
            weights,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weights(&self) -> &LuceWeights {
        &self.weights
    }
}
