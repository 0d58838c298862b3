//! Closed-form arithmetic of the aspiration-weighted Luce model.
//!
//! The decision maker mixes an idiosyncratic Luce rule `p0` on the feasible
//! set `S` with the influencer's exposure `q` (weight `alpha`), then
//! renormalizes onto `S`:
//!
//! ```text
//! p(x | S; q, alpha) = [(1 - alpha) p0(x) + alpha q(x)] / [(1 - alpha) + alpha q_S]
//! ```
//!
//! Everything here is a pure function. Functions accept `alpha` in the closed
//! interval `[0, 1]` wherever the formula is defined there.

use crate::error::{AwlmError, Result};
use crate::simplex::sup_dist;
use crate::types::{same_universe, Dist, LuceWeights, Subset};

/// Tolerance for declaring two within-feasible compositions equal.
pub const COMPOSITION_TOL: f64 = 1e-12;

fn check_alpha_closed(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AwlmError::InvalidParameter(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    Ok(())
}

fn check_on(p0: &Dist, s: &Subset) -> Result<()> {
    if !p0.is_on(s) {
        return Err(AwlmError::Precondition(
            "idiosyncratic distribution must be supported exactly on S".into(),
        ));
    }
    Ok(())
}

/// Idiosyncratic Luce rule `u(x) / sum_{y in S} u(y)`.
pub fn luce_choice(weights: &LuceWeights, s: &Subset) -> Result<Dist> {
    if s.is_empty() {
        return Err(AwlmError::InvalidMenu("feasible set is empty".into()));
    }
    same_universe(weights.len(), s.universe_size())?;
    let w = s.members().iter().map(|&x| weights.get(x)).collect();
    Dist::from_weights(s.clone(), w)
}

/// Exposure mass falling on `S`.
pub fn feasible_share(q: &Dist, s: &Subset) -> f64 {
    s.members().iter().map(|&x| q.mass(x)).sum()
}

/// Within-feasible composition `q|_S / q_S`.
pub fn conditional_composition(q: &Dist, s: &Subset) -> Result<Dist> {
    same_universe(q.universe_size(), s.universe_size())?;
    let restricted = q.restrict(s);
    let share: f64 = restricted.iter().sum();
    if share <= 0.0 {
        return Err(AwlmError::NoFeasibleExposure);
    }
    Dist::new(
        s.clone(),
        restricted.into_iter().map(|m| m / share).collect(),
    )
}

/// Attempt target `(1 - alpha) p0 + alpha q` on the union of both supports.
pub fn attempt_target(p0: &Dist, q: &Dist, alpha: f64) -> Result<Dist> {
    check_alpha_closed(alpha)?;
    let support = p0.support().union(q.support())?;
    let mass = support
        .members()
        .iter()
        .map(|&x| (1.0 - alpha) * p0.mass(x) + alpha * q.mass(x))
        .collect();
    Dist::new(support, mass)
}

/// Normalization factor `D = (1 - alpha) + alpha q_S`.
pub fn normalizer(alpha: f64, q_s: f64) -> f64 {
    (1.0 - alpha) + alpha * q_s
}

/// Induced feasible choice.
pub fn awlm_choice(p0: &Dist, q: &Dist, alpha: f64, s: &Subset) -> Result<Dist> {
    check_alpha_closed(alpha)?;
    check_on(p0, s)?;
    same_universe(q.universe_size(), s.universe_size())?;
    let q_s = feasible_share(q, s);
    let denom = normalizer(alpha, q_s);
    if denom <= 0.0 {
        return Err(AwlmError::UndefinedPureImitation);
    }
    let mass = s
        .members()
        .iter()
        .zip(p0.masses())
        .map(|(&x, &p)| ((1.0 - alpha) * p + alpha * q.mass(x)) / denom)
        .collect();
    Dist::new(s.clone(), mass)
}

/// Outcome-level effective weight `alpha q_S / [(1 - alpha) + alpha q_S]`.
pub fn effective_weight(alpha: f64, q_s: f64) -> f64 {
    let denom = normalizer(alpha, q_s);
    if denom == 0.0 {
        // alpha = 1, q_S = 0: the 0/0 limit along q_S -> 0 is 1.
        return 1.0;
    }
    alpha * q_s / denom
}

/// Effective weight when the decision maker retries an infeasible attempt with
/// probability `r` and otherwise falls back to `p0`.
pub fn retry_effective_weight(alpha: f64, q_s: f64, r: f64) -> f64 {
    alpha * q_s / (1.0 - alpha * r * (1.0 - q_s))
}

/// `(1 - beta) p0 + beta q(.|S)`, the outcome-level mixture form of the choice.
pub fn mixture_decomposition(p0: &Dist, q: &Dist, alpha: f64, s: &Subset) -> Result<Dist> {
    check_alpha_closed(alpha)?;
    check_on(p0, s)?;
    let composition = conditional_composition(q, s)?;
    let beta = effective_weight(alpha, feasible_share(q, s));
    let mass = p0
        .masses()
        .iter()
        .zip(composition.masses())
        .map(|(&p, &v)| (1.0 - beta) * p + beta * v)
        .collect();
    Dist::new(s.clone(), mass)
}

/// Change in feasible choice when exposure moves from `q` to `q_prime` while
/// keeping the within-feasible composition fixed.
///
/// The result equals `(beta(q'_S) - beta(q_S)) (q(.|S) - p0)`; see
/// [`dampening_prediction`].
pub fn dampening_shift(
    p0: &Dist,
    q: &Dist,
    q_prime: &Dist,
    alpha: f64,
    s: &Subset,
) -> Result<Vec<f64>> {
    let v = conditional_composition(q, s)?;
    let v_prime = conditional_composition(q_prime, s)?;
    let gap = sup_dist(v.masses(), v_prime.masses());
    if gap > COMPOSITION_TOL {
        return Err(AwlmError::NotPureShareShift(gap));
    }
    let before = awlm_choice(p0, q, alpha, s)?;
    let after = awlm_choice(p0, q_prime, alpha, s)?;
    Ok(after
        .masses()
        .iter()
        .zip(before.masses())
        .map(|(a, b)| a - b)
        .collect())
}

/// Right-hand side of the dampening identity, from the composition and the
/// two feasible shares alone.
pub fn dampening_prediction(
    p0: &Dist,
    composition: &Dist,
    alpha: f64,
    q_s: f64,
    q_s_prime: f64,
) -> Vec<f64> {
    let scale = effective_weight(alpha, q_s_prime) - effective_weight(alpha, q_s);
    composition
        .masses()
        .iter()
        .zip(p0.masses())
        .map(|(v, p)| scale * (v - p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Universe;

    const EXACT: f64 = 1e-12;

    fn abc() -> Universe {
        Universe::new(["a", "b", "c"]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        sup_dist(a, b) <= tol
    }

    #[test]
    fn luce_examples() {
        let u = abc();
        let ab = u.subset(&["a", "b"]).unwrap();
        let w = LuceWeights::new(vec![3.0, 1.0, 1.0]).unwrap();
        assert!(close(
            luce_choice(&w, &ab).unwrap().masses(),
            &[0.75, 0.25],
            EXACT
        ));
        let uniform = LuceWeights::new(vec![5.0, 5.0, 5.0]).unwrap();
        let third = 1.0 / 3.0;
        assert!(close(
            luce_choice(&uniform, &u.full()).unwrap().masses(),
            &[third; 3],
            EXACT
        ));
        let w = LuceWeights::new(vec![2.0, 1.0, 1.0]).unwrap();
        assert!(close(
            luce_choice(&w, &u.full()).unwrap().masses(),
            &[0.5, 0.25, 0.25],
            EXACT
        ));
        let empty = u.subset::<&str>(&[]).unwrap();
        assert!(luce_choice(&w, &empty).is_err());
    }

    #[test]
    fn feasible_share_examples() {
        let u = abc();
        let ab = u.subset(&["a", "b"]).unwrap();
        let q1 = u.dist(&[("a", 0.2), ("b", 0.3), ("c", 0.5)]).unwrap();
        let q2 = u.dist(&[("a", 0.3), ("b", 0.4), ("c", 0.3)]).unwrap();
        assert!((feasible_share(&q1, &ab) - 0.5).abs() < EXACT);
        assert!((feasible_share(&q2, &ab) - 0.7).abs() < EXACT);
        assert!((feasible_share(&q1, &u.full()) - 1.0).abs() < EXACT);
    }

    #[test]
    fn composition_examples() {
        let u = abc();
        let ab = u.subset(&["a", "b"]).unwrap();
        let q = u.dist(&[("a", 0.2), ("b", 0.3), ("c", 0.5)]).unwrap();
        assert!(close(
            conditional_composition(&q, &ab).unwrap().masses(),
            &[0.4, 0.6],
            EXACT
        ));
        let inside = u.dist(&[("a", 0.1), ("b", 0.9)]).unwrap();
        assert!(close(
            conditional_composition(&inside, &ab).unwrap().masses(),
            &[0.1, 0.9],
            EXACT
        ));
        let outside = u.dist(&[("c", 1.0)]).unwrap();
        assert_eq!(
            conditional_composition(&outside, &ab),
            Err(AwlmError::NoFeasibleExposure)
        );
    }

    #[test]
    fn attempt_target_examples() {
        let u = abc();
        let p0 = u.dist(&[("a", 0.75), ("b", 0.25)]).unwrap();
        let q = u.dist(&[("a", 0.2), ("b", 0.3), ("c", 0.5)]).unwrap();
        let m = attempt_target(&p0, &q, 0.4).unwrap();
        assert!(close(&m.to_universe_vec(), &[0.53, 0.27, 0.2], EXACT));
        assert!(close(
            &attempt_target(&p0, &q, 0.0).unwrap().to_universe_vec(),
            &[0.75, 0.25, 0.0],
            EXACT
        ));
        assert!(close(
            &attempt_target(&p0, &q, 1.0).unwrap().to_universe_vec(),
            &[0.2, 0.3, 0.5],
            EXACT
        ));
    }

    #[test]
    fn awlm_choice_golden_fractions() {
        let u = abc();
        let ab = u.subset(&["a", "b"]).unwrap();
        let p0 = u.dist(&[("a", 0.75), ("b", 0.25)]).unwrap();
        let q1 = u.dist(&[("a", 0.2), ("b", 0.3), ("c", 0.5)]).unwrap();
        let q2 = u.dist(&[("a", 0.3), ("b", 0.4), ("c", 0.3)]).unwrap();
        let p1 = awlm_choice(&p0, &q1, 0.4, &ab).unwrap();
        assert!(close(p1.masses(), &[53.0 / 80.0, 27.0 / 80.0], EXACT));
        let p2 = awlm_choice(&p0, &q2, 0.4, &ab).unwrap();
        assert!(close(p2.masses(), &[57.0 / 88.0, 31.0 / 88.0], EXACT));
        let none = awlm_choice(&p0, &q1, 0.0, &ab).unwrap();
        assert!(close(none.masses(), p0.masses(), EXACT));
    }

    #[test]
    fn pure_imitation_of_infeasible_exposure_is_an_error() {
        let u = abc();
        let ab = u.subset(&["a", "b"]).unwrap();
        let p0 = u.dist(&[("a", 0.75), ("b", 0.25)]).unwrap();
        let q = u.dist(&[("c", 1.0)]).unwrap();
        assert_eq!(
            awlm_choice(&p0, &q, 1.0, &ab),
            Err(AwlmError::UndefinedPureImitation)
        );
        // Any alpha below one is fine: the DM falls back on p0.
        let p = awlm_choice(&p0, &q, 0.9, &ab).unwrap();
        assert!(close(p.masses(), p0.masses(), EXACT));
    }

    #[test]
    fn p0_must_live_on_s() {
        let u = abc();
        let ab = u.subset(&["a", "b"]).unwrap();
        let p0 = u.dist(&[("a", 0.5), ("b", 0.25), ("c", 0.25)]).unwrap();
        let q = u.dist(&[("a", 1.0)]).unwrap();
        assert!(awlm_choice(&p0, &q, 0.5, &ab).is_err());
    }

    #[test]
    fn effective_weight_examples() {
        assert!((effective_weight(0.3, 1.0) - 0.3).abs() < EXACT);
        assert_eq!(effective_weight(0.3, 0.0), 0.0);
        assert!((effective_weight(0.5, 0.5) - 1.0 / 3.0).abs() < EXACT);
    }

    #[test]
    fn retry_weight_examples() {
        for &(a, s) in &[(0.2, 0.1), (0.5, 0.5), (0.9, 0.7)] {
            assert!((retry_effective_weight(a, s, 1.0) - effective_weight(a, s)).abs() < EXACT);
            assert!((retry_effective_weight(a, s, 0.0) - a * s).abs() < EXACT);
        }
        assert!((retry_effective_weight(0.5, 0.5, 0.0) - 0.25).abs() < EXACT);
        assert!((retry_effective_weight(0.4, 0.5, 0.5) - 2.0 / 9.0).abs() < EXACT);
    }

    #[test]
    fn mixture_examples() {
        let u = abc();
        let ab = u.subset(&["a", "b"]).unwrap();
        let p0 = u.dist(&[("a", 0.75), ("b", 0.25)]).unwrap();
        let q1 = u.dist(&[("a", 0.2), ("b", 0.3), ("c", 0.5)]).unwrap();
        let mix = mixture_decomposition(&p0, &q1, 0.4, &ab).unwrap();
        assert!(close(mix.masses(), &[53.0 / 80.0, 27.0 / 80.0], EXACT));
        let zero = mixture_decomposition(&p0, &q1, 0.0, &ab).unwrap();
        assert!(close(zero.masses(), p0.masses(), EXACT));
        // q_S = 1: plain convex mixture.
        let inside = u.dist(&[("a", 0.1), ("b", 0.9)]).unwrap();
        let mix = mixture_decomposition(&p0, &inside, 0.4, &ab).unwrap();
        assert!(close(
            mix.masses(),
            &[0.6 * 0.75 + 0.4 * 0.1, 0.6 * 0.25 + 0.4 * 0.9],
            EXACT
        ));
        let outside = u.dist(&[("c", 1.0)]).unwrap();
        assert!(mixture_decomposition(&p0, &outside, 0.4, &ab).is_err());
    }

    #[test]
    fn dampening_examples() {
        let u = abc();
        let ab = u.subset(&["a", "b"]).unwrap();
        let p0 = u.dist(&[("a", 0.75), ("b", 0.25)]).unwrap();
        let q = u.dist(&[("a", 0.32), ("b", 0.48), ("c", 0.2)]).unwrap();
        let q_same = u.dist(&[("a", 0.32), ("b", 0.48), ("c", 0.2)]).unwrap();
        assert!(
            sup_dist(
                &dampening_shift(&p0, &q, &q_same, 0.4, &ab).unwrap(),
                &[0.0, 0.0]
            ) == 0.0
        );

        // Composition (2/5, 3/5) at shares 0.8 and 0.4, differenced by hand
        // from the closed form: D = 0.92 and 0.76.
        let q_low = u.dist(&[("a", 0.16), ("b", 0.24), ("c", 0.6)]).unwrap();
        let shift = dampening_shift(&p0, &q, &q_low, 0.4, &ab).unwrap();
        let high_a = (0.6 * 0.75 + 0.4 * 0.32) / 0.92;
        let low_a = (0.6 * 0.75 + 0.4 * 0.16) / 0.76;
        assert!(close(&shift, &[low_a - high_a, high_a - low_a], EXACT));

        // q(.|S) = p0 is a fixed point of influence.
        let fixed = u.dist(&[("a", 0.45), ("b", 0.15), ("c", 0.4)]).unwrap();
        let fixed_low = u.dist(&[("a", 0.15), ("b", 0.05), ("c", 0.8)]).unwrap();
        let shift = dampening_shift(&p0, &fixed, &fixed_low, 0.4, &ab).unwrap();
        assert!(close(&shift, &[0.0, 0.0], EXACT));

        let other = u.dist(&[("a", 0.5), ("b", 0.1), ("c", 0.4)]).unwrap();
        assert!(matches!(
            dampening_shift(&p0, &q, &other, 0.4, &ab),
            Err(AwlmError::NotPureShareShift(_))
        ));
    }
}
