//! Default tolerances for checks on sampled shares.

use serde::Serialize;

use awlm::io::{Observation, Observed};

/// Width of the sampling band in standard deviations.
pub const Z: f64 = 4.0;

/// Tolerance for probabilities files.
pub const EXACT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// For differences of two share vectors (and `Δ − αA` residuals).
    pub diff: f64,
    /// For 2×2 cross-products of such differences.
    pub cross: f64,
    /// Largest per-coordinate sampling standard deviation, when sampled.
    pub sigma_max: Option<f64>,
    pub source: &'static str,
}

impl Tolerances {
    /// Tolerance for `1/λ` on a level whose exposures spread by
    /// `spread = (Σ ‖Δq‖²)^{1/2}`: first-order error of `1/λ` is
    /// `diff / (λ² spread)`.
    pub fn inverse_lambda(&self, lambda: f64, spread: f64) -> f64 {
        match self.sigma_max {
            Some(_) if spread > 0.0 => self.diff / (lambda * lambda * spread),
            _ => self.diff,
        }
    }
}

/// User tolerance when given; otherwise exact for probabilities and a
/// `Z·√2·σ_max` band for counts, with `σ_max² = max P̂(1 − P̂)/N_i`.
pub fn tolerances(obs: &Observed, user: Option<f64>) -> Tolerances {
    if let Some(tol) = user {
        return Tolerances {
            diff: tol,
            cross: tol,
            sigma_max: None,
            source: "user",
        };
    }
    let variance = obs
        .regimes
        .iter()
        .filter_map(|r| match &r.observation {
            Observation::Counts(c) => Some(
                c.shares()
                    .iter()
                    .map(|p| p * (1.0 - p) / c.total() as f64)
                    .fold(0.0, f64::max),
            ),
            Observation::Probabilities(..) => None,
        })
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        });
    match variance {
        Some(v) => {
            let sigma = v.sqrt();
            let diff = (Z * 2f64.sqrt() * sigma).max(EXACT_TOL);
            Tolerances {
                diff,
                cross: 2.0 * diff,
                sigma_max: Some(sigma),
                source: "sampling",
            }
        }
        None => Tolerances {
            diff: EXACT_TOL,
            cross: EXACT_TOL,
            sigma_max: None,
            source: "exact",
        },
    }
}
