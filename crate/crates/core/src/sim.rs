//! Monte Carlo microfoundation: sample from the attempt target until a
//! feasible alternative comes up.
//!
//! Random streams come from ChaCha8 ([`rand_chacha::ChaCha8Rng`]) seeded with
//! [`rand::SeedableRng::seed_from_u64`]. Regime `k` of a dataset uses stream
//! `k` of the same seed, so appending a regime never perturbs earlier ones.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AwlmError, Result};
use crate::model::{attempt_target, feasible_share, luce_choice};
use crate::types::{Dist, MenuPair, ModelParams, Subset};

/// Generator used for every simulation.
pub type SimRng = ChaCha8Rng;

/// Default cap on attempts per draw.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> SimRng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent substream `index` of this seed.
    pub fn stream(self, index: u64) -> SimRng {
        let mut rng = self.rng();
        rng.set_stream(index);
        rng
    }
}

/// What the decision maker does after an infeasible attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureRule {
    /// Redraw from the attempt target until feasible.
    Persist,
    /// Fall back to a draw from the idiosyncratic rule at once.
    Revert,
    /// Redraw with probability `r`, otherwise fall back to the idiosyncratic rule.
    Retry(f64),
}

impl FailureRule {
    pub fn retry_probability(self) -> f64 {
        match self {
            FailureRule::Persist => 1.0,
            FailureRule::Revert => 0.0,
            FailureRule::Retry(r) => r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    pub menu: MenuPair,
    pub exposure: Dist,
    pub n_draws: u64,
    pub failure_rule: FailureRule,
    pub max_attempts: u64,
}

impl SimConfig {
    /// Persist rule with the default attempt cap.
    pub fn new(params: ModelParams, menu: MenuPair, exposure: Dist, n_draws: u64) -> Result<Self> {
        let config = Self {
            params,
            menu,
            exposure,
            n_draws,
            failure_rule: FailureRule::Persist,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_rule(mut self, rule: FailureRule) -> Result<Self> {
        self.failure_rule = rule;
        self.validate()?;
        Ok(self)
    }

    pub fn with_max_attempts(mut self, max_attempts: u64) -> Result<Self> {
        self.max_attempts = max_attempts;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(AwlmError::InvalidParameter("n_draws must be >= 1".into()));
        }
        if self.max_attempts == 0 {
            return Err(AwlmError::InvalidParameter(
                "max_attempts must be >= 1".into(),
            ));
        }
        let r = self.failure_rule.retry_probability();
        if !(0.0..=1.0).contains(&r) {
            return Err(AwlmError::InvalidParameter(format!(
                "retry probability must lie in [0, 1], got {r}"
            )));
        }
        if !self.exposure.support().is_subset_of(self.menu.influencer()) {
            return Err(AwlmError::InvalidMenu(
                "exposure puts mass outside the influencer menu".into(),
            ));
        }
        if self.params.weights().len() != self.menu.feasible().universe_size() {
            return Err(AwlmError::UniverseMismatch(
                "weights and menu disagree on the universe".into(),
            ));
        }
        Ok(())
    }
}

/// One realized choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Draw {
    /// Universe index of the chosen alternative.
    pub alternative: usize,
    /// Position of the chosen alternative within `S`.
    pub position: usize,
    /// Number of draws taken from the attempt target (the stopping time).
    pub attempts: u64,
}

/// Precomputed sampling tables for one configuration.
#[derive(Debug, Clone)]
pub struct Sampler {
    feasible: Subset,
    target_support: Vec<usize>,
    target: WeightedIndex<f64>,
    fallback: WeightedIndex<f64>,
    retry: f64,
    max_attempts: u64,
    feasible_mass: f64,
}

impl Sampler {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let s = config.menu.feasible();
        let p0 = luce_choice(config.params.weights(), s)?;
        let alpha = config.params.alpha();
        let target = attempt_target(&p0, &config.exposure, alpha)?;
        let weighted = |w: &[f64]| {
            WeightedIndex::new(w.iter().copied())
                .map_err(|e| AwlmError::InvalidDistribution(e.to_string()))
        };
        Ok(Self {
            feasible: s.clone(),
            target_support: target.support().members().to_vec(),
            target: weighted(target.masses())?,
            fallback: weighted(p0.masses())?,
            retry: config.failure_rule.retry_probability(),
            max_attempts: config.max_attempts,
            feasible_mass: (1.0 - alpha) + alpha * feasible_share(&config.exposure, s),
        })
    }

    /// Attempt-target mass on `S`, the per-attempt success probability.
    pub fn feasible_mass(&self) -> f64 {
        self.feasible_mass
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Draw> {
        let mut attempts = 0;
        while attempts < self.max_attempts {
            attempts += 1;
            let alternative = self.target_support[self.target.sample(rng)];
            if let Some(position) = self.feasible.position(alternative) {
                return Ok(Draw {
                    alternative,
                    position,
                    attempts,
                });
            }
            let retry = self.retry >= 1.0 || (self.retry > 0.0 && rng.random::<f64>() < self.retry);
            if !retry {
                let position = self.fallback.sample(rng);
                return Ok(Draw {
                    alternative: self.feasible.members()[position],
                    position,
                    attempts,
                });
            }
        }
        Err(AwlmError::NonTermination {
            attempts: self.max_attempts,
            bound: (1.0 - self.feasible_mass).powf(self.max_attempts as f64),
        })
    }
}

/// A single choice under `config`.
///
/// Builds the sampling tables on every call; use [`Sampler`] for batches.
pub fn draw_once<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Draw> {
    Sampler::new(config)?.draw(rng)
}

/// Multinomial choice counts laid out in the feasible set's order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceCounts {
    counts: Vec<u64>,
    total: u64,
}

impl ChoiceCounts {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        let total = counts.iter().sum();
        if total == 0 {
            return Err(AwlmError::InvalidParameter(
                "counts must have a positive total".into(),
            ));
        }
        Ok(Self { counts, total })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn shares(&self) -> Vec<f64> {
        let n = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Empirical shares as a distribution on `s`.
    pub fn to_dist(&self, s: &Subset) -> Result<Dist> {
        if s.len() != self.counts.len() {
            return Err(AwlmError::InvalidParameter(format!(
                "{} counts for a feasible set of size {}",
                self.counts.len(),
                s.len()
            )));
        }
        Dist::from_weights(s.clone(), self.counts.iter().map(|&c| c as f64).collect())
    }
}

/// `n_draws` independent choices.
pub fn simulate_regime<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<ChoiceCounts> {
    let sampler = Sampler::new(config)?;
    let mut counts = vec![0u64; config.menu.feasible().len()];
    for _ in 0..config.n_draws {
        counts[sampler.draw(rng)?.position] += 1;
    }
    ChoiceCounts::new(counts)
}

/// Design of one exposure regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub menu: MenuPair,
    pub exposure: Dist,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedRegime {
    pub menu: MenuPair,
    pub exposure: Dist,
    pub counts: ChoiceCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub regimes: Vec<SimulatedRegime>,
}

/// Simulates every regime on its own substream of `seed`.
pub fn simulate_dataset(
    params: &ModelParams,
    regimes: &[RegimeSpec],
    seed: RngSeed,
    rule: FailureRule,
) -> Result<Dataset> {
    let first = regimes.first().ok_or(AwlmError::EmptyDataset)?;
    let size = first.menu.feasible().universe_size();
    if regimes
        .iter()
        .any(|r| r.menu.feasible().universe_size() != size || r.exposure.universe_size() != size)
    {
        return Err(AwlmError::UniverseMismatch(
            "regimes do not share a universe".into(),
        ));
    }
    let regimes = regimes
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let config = SimConfig::new(
                params.clone(),
                spec.menu.clone(),
                spec.exposure.clone(),
                spec.n,
            )?
            .with_rule(rule)?;
            let counts = simulate_regime(&config, &mut seed.stream(k as u64))?;
            Ok(SimulatedRegime {
                menu: spec.menu.clone(),
                exposure: spec.exposure.clone(),
                counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { regimes })
}
