//! JSON dataset and design files, plus CSV counts.
//!
//! A dataset file lists the universe, one menu and a set of exposure
//! regimes. Each observed regime carries either `counts` or
//! `probabilities`, never both. A design file has the same layout with only
//! `exposure` and `n` per regime.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "universe": ["a", "b", "c", "d"],
//!   "menu": { "feasible": ["a", "b", "c"], "influencer": ["a", "b", "c", "d"] },
//!   "regimes": [
//!     { "exposure": { "a": 0.4, "b": 0.2, "c": 0.1, "d": 0.3 },
//!       "counts": { "a": 19, "b": 18, "c": 23 } }
//!   ]
//! }
//! ```

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{AwlmError, Result};
use crate::gmm::GmmDataset;
use crate::sim::{ChoiceCounts, Dataset, RegimeSpec};
use crate::types::{Dist, MenuPair, Subset, Universe};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance on adding up for masses read from files.
pub const FILE_SUM_TOL: f64 = 1e-9;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MenuRecord {
    pub feasible: Vec<String>,
    pub influencer: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeRecord {
    pub exposure: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<BTreeMap<String, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub universe: Vec<String>,
    pub menu: MenuRecord,
    pub regimes: Vec<RegimeRecord>,
    /// Free-form record of how the file was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// What was observed in one regime.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Counts(ChoiceCounts),
    /// Exact or reported shares, with an optional nominal sample size.
    Probabilities(Dist, Option<u64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedRegime {
    pub exposure: Dist,
    pub observation: Observation,
}

impl ObservedRegime {
    pub fn shares(&self, s: &Subset) -> Result<Dist> {
        match &self.observation {
            Observation::Counts(c) => c.to_dist(s),
            Observation::Probabilities(p, _) => Ok(p.clone()),
        }
    }

    pub fn n(&self) -> Option<u64> {
        match &self.observation {
            Observation::Counts(c) => Some(c.total()),
            Observation::Probabilities(_, n) => *n,
        }
    }
}

/// A validated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Observed {
    pub universe: Universe,
    pub menu: MenuPair,
    pub regimes: Vec<ObservedRegime>,
}

impl Observed {
    pub fn has_counts(&self) -> bool {
        self.regimes
            .iter()
            .any(|r| matches!(r.observation, Observation::Counts(_)))
    }

    /// `(exposure, shares)` pairs in file order.
    pub fn pairs(&self) -> Result<Vec<(Dist, Dist)>> {
        let s = self.menu.feasible();
        self.regimes
            .iter()
            .map(|r| Ok((r.exposure.clone(), r.shares(s)?)))
            .collect()
    }

    /// Estimation input; regimes without a sample size get `default_n`.
    pub fn to_gmm(&self, default_n: u64) -> Result<GmmDataset> {
        let s = self.menu.feasible();
        let regimes = self
            .regimes
            .iter()
            .map(|r| {
                Ok((
                    r.exposure.clone(),
                    r.shares(s)?.masses().to_vec(),
                    r.n().unwrap_or(default_n),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        GmmDataset::from_shares(self.menu.clone(), regimes)
    }
}

fn invalid(msg: impl Into<String>) -> AwlmError {
    AwlmError::InvalidDistribution(msg.into())
}

impl DatasetFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)
            .map_err(|e| AwlmError::Precondition(format!("malformed dataset file: {e}")))?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(AwlmError::Precondition(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset files always serialize")
    }

    fn frame(&self) -> Result<(Universe, MenuPair)> {
        let universe = Universe::new(self.universe.iter().cloned())?;
        let feasible = universe.subset(&self.menu.feasible)?;
        let influencer = universe.subset(&self.menu.influencer)?;
        Ok((universe.clone(), MenuPair::new(feasible, influencer)?))
    }

    /// Mass map on `support`; labels outside it are rejected, missing ones
    /// are zero.
    fn masses(
        universe: &Universe,
        support: &Subset,
        map: &BTreeMap<String, f64>,
        what: &str,
    ) -> Result<Dist> {
        let mut mass = vec![0.0; support.len()];
        for (label, &v) in map {
            let idx = universe.index_of(label)?;
            let pos = support
                .position(idx)
                .ok_or_else(|| invalid(format!("{what}: `{label}` lies outside its menu")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{what}: mass {v} for `{label}`")));
            }
            mass[pos] = v;
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > FILE_SUM_TOL {
            return Err(invalid(format!("{what}: masses sum to {total}")));
        }
        Dist::from_weights(support.clone(), mass)
    }

    fn exposure(universe: &Universe, menu: &MenuPair, k: usize, r: &RegimeRecord) -> Result<Dist> {
        Self::masses(
            universe,
            menu.influencer(),
            &r.exposure,
            &format!("regime {k} exposure"),
        )
    }

    /// Validates an observed dataset.
    pub fn validate(&self) -> Result<Observed> {
        let (universe, menu) = self.frame()?;
        let s = menu.feasible();
        if self.regimes.is_empty() {
            return Err(AwlmError::EmptyDataset);
        }
        let regimes = self
            .regimes
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let exposure = Self::exposure(&universe, &menu, k, r)?;
                let observation = match (&r.counts, &r.probabilities) {
                    (Some(counts), None) => {
                        let mut c = vec![0u64; s.len()];
                        for (label, &v) in counts {
                            let pos = s.position(universe.index_of(label)?).ok_or_else(|| {
                                invalid(format!("regime {k}: count for infeasible `{label}`"))
                            })?;
                            c[pos] = v;
                        }
                        let counts = ChoiceCounts::new(c)?;
                        if let Some(n) = r.n {
                            if n != counts.total() {
                                return Err(AwlmError::InvalidParameter(format!(
                                    "regime {k}: n = {n} but counts total {}",
                                    counts.total()
                                )));
                            }
                        }
                        Observation::Counts(counts)
                    }
                    (None, Some(probs)) => {
                        if r.n == Some(0) {
                            return Err(AwlmError::InvalidParameter(format!("regime {k}: n = 0")));
                        }
                        let p = Self::masses(
                            &universe,
                            s,
                            probs,
                            &format!("regime {k} probabilities"),
                        )?;
                        Observation::Probabilities(p, r.n)
                    }
                    (Some(_), Some(_)) => {
                        return Err(AwlmError::Precondition(format!(
                            "regime {k}: give either counts or probabilities, not both"
                        )))
                    }
                    (None, None) => {
                        return Err(AwlmError::Precondition(format!(
                            "regime {k}: no counts or probabilities"
                        )))
                    }
                };
                Ok(ObservedRegime {
                    exposure,
                    observation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Observed {
            universe,
            menu,
            regimes,
        })
    }

    /// Validates a design: exposures plus a positive `n` per regime, with
    /// `default_n` filling gaps.
    pub fn design(&self, default_n: Option<u64>) -> Result<(Universe, Vec<RegimeSpec>)> {
        let (universe, menu) = self.frame()?;
        if self.regimes.is_empty() {
            return Err(AwlmError::EmptyDataset);
        }
        let specs = self
            .regimes
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let n = r.n.or(default_n).ok_or_else(|| {
                    AwlmError::InvalidParameter(format!("regime {k}: no sample size"))
                })?;
                if n == 0 {
                    return Err(AwlmError::InvalidParameter(format!("regime {k}: n = 0")));
                }
                Ok(RegimeSpec {
                    menu: menu.clone(),
                    exposure: Self::exposure(&universe, &menu, k, r)?,
                    n,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((universe, specs))
    }

    /// Dataset file for simulated counts on `universe`.
    pub fn from_simulated(universe: &Universe, data: &Dataset) -> Result<Self> {
        let first = data.regimes.first().ok_or(AwlmError::EmptyDataset)?;
        let labels = |s: &Subset| -> Vec<String> {
            s.members()
                .iter()
                .map(|&x| universe.label(x).to_string())
                .collect()
        };
        let regimes = data
            .regimes
            .iter()
            .map(|r| {
                if r.menu != first.menu {
                    return Err(AwlmError::Precondition("regimes on different menus".into()));
                }
                let exposure = r
                    .exposure
                    .support()
                    .members()
                    .iter()
                    .zip(r.exposure.masses())
                    .map(|(&x, &m)| (universe.label(x).to_string(), m))
                    .collect();
                let counts = r
                    .menu
                    .feasible()
                    .members()
                    .iter()
                    .zip(r.counts.counts())
                    .map(|(&x, &c)| (universe.label(x).to_string(), c))
                    .collect();
                Ok(RegimeRecord {
                    exposure,
                    counts: Some(counts),
                    n: Some(r.counts.total()),
                    probabilities: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            universe: universe.labels().iter().map(|l| l.to_string()).collect(),
            menu: MenuRecord {
                feasible: labels(first.menu.feasible()),
                influencer: labels(first.menu.influencer()),
            },
            regimes,
            provenance: None,
        })
    }

    /// Fills regime counts from CSV rows `regime,alternative,count`, where
    /// `regime` is the zero-based position in this file. Probabilities are
    /// dropped; `n` must then agree with the counts.
    pub fn merge_csv_counts<R: Read>(&mut self, reader: R) -> Result<()> {
        #[derive(Deserialize)]
        struct Row {
            regime: usize,
            alternative: String,
            count: u64,
        }
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut merged: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); self.regimes.len()];
        for (line, row) in rdr.deserialize::<Row>().enumerate() {
            let row =
                row.map_err(|e| AwlmError::Precondition(format!("csv row {}: {e}", line + 1)))?;
            let slot = merged.get_mut(row.regime).ok_or_else(|| {
                AwlmError::Precondition(format!(
                    "csv row {}: regime {} not in the design",
                    line + 1,
                    row.regime
                ))
            })?;
            if slot.insert(row.alternative.clone(), row.count).is_some() {
                return Err(AwlmError::Precondition(format!(
                    "csv row {}: duplicate count for regime {} `{}`",
                    line + 1,
                    row.regime,
                    row.alternative
                )));
            }
        }
        for (r, counts) in self.regimes.iter_mut().zip(merged) {
            r.counts = Some(counts);
            r.probabilities = None;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
      "schema_version": 1,
      "universe": ["a", "b", "c", "d"],
      "menu": { "feasible": ["a", "b", "c"], "influencer": ["a", "b", "c", "d"] },
      "regimes": [
        { "exposure": { "a": 0.4, "b": 0.2, "c": 0.1, "d": 0.3 },
          "counts": { "a": 19, "b": 18, "c": 23 } },
        { "exposure": { "a": 0.3, "b": 0.1, "c": 0.2, "d": 0.4 },
          "probabilities": { "a": 0.3, "b": 0.25, "c": 0.45 }, "n": 60 }
      ]
    }"#;

    #[test]
    fn parses_and_validates() {
        let file = DatasetFile::from_json(EXAMPLE).unwrap();
        let obs = file.validate().unwrap();
        assert_eq!(obs.regimes.len(), 2);
        assert_eq!(obs.regimes[0].n(), Some(60));
        assert_eq!(obs.regimes[1].n(), Some(60));
        let pairs = obs.pairs().unwrap();
        assert!((pairs[0].1.masses()[0] - 19.0 / 60.0).abs() < 1e-15);
        let back = DatasetFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn rejects_mixed_and_missing_observations() {
        let mut file = DatasetFile::from_json(EXAMPLE).unwrap();
        file.regimes[1].counts = Some(BTreeMap::from([("a".to_string(), 3)]));
        assert!(file.validate().is_err());
        file.regimes[1].counts = None;
        file.regimes[1].probabilities = None;
        assert!(file.validate().is_err());
    }

    #[test]
    fn rejects_bad_masses() {
        let mut file = DatasetFile::from_json(EXAMPLE).unwrap();
        file.regimes[0].exposure.insert("d".into(), 0.31);
        assert!(file.validate().is_err());
        let mut file = DatasetFile::from_json(EXAMPLE).unwrap();
        file.regimes[0]
            .counts
            .as_mut()
            .unwrap()
            .insert("d".into(), 4);
        assert!(file.validate().is_err());
        let mut file = DatasetFile::from_json(EXAMPLE).unwrap();
        file.regimes[0].exposure.insert("zz".into(), 0.0);
        assert!(file.validate().is_err());
    }

    #[test]
    fn csv_counts_merge() {
        let mut file = DatasetFile::from_json(EXAMPLE).unwrap();
        let csv = "regime,alternative,count\n0,a,1\n0,b,2\n0,c,3\n1,a,4\n1,b,5\n1,c,6\n";
        file.regimes[1].n = None;
        file.merge_csv_counts(csv.as_bytes()).unwrap();
        let obs = file.validate().unwrap();
        assert_eq!(obs.regimes[1].n(), Some(15));
        let bad = "regime,alternative,count\n5,a,1\n";
        assert!(file.merge_csv_counts(bad.as_bytes()).is_err());
    }

    #[test]
    fn design_requires_sizes() {
        let file = DatasetFile::from_json(EXAMPLE).unwrap();
        assert!(file.design(None).is_err());
        let (_, specs) = file.design(Some(100)).unwrap();
        assert_eq!(specs.iter().map(|s| s.n).collect::<Vec<_>>(), vec![100, 60]);
        let mut zero = file.clone();
        zero.regimes[0].n = Some(0);
        assert!(zero.design(None).is_err());
    }
}
