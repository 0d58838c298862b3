//! Constructive identification from exposure variation.
//!
//! Two exposure–choice pairs on a fixed feasible set satisfy the linear
//! identity `Δ = α A` with
//!
//! ```text
//! Δ = P₂ − P₁
//! A = (q₂ − q₁)|_S + (1 − q₂_S) P₂ − (1 − q₁_S) P₁
//! ```
//!
//! so `α` is read off any coordinate with `A(x) ≠ 0`, and the idiosyncratic
//! rule follows by inverting `D(α) P = (1 − α) p0 + α q|_S`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{AwlmError, Result};
use crate::linalg::singular_values;
use crate::model::{awlm_choice, feasible_share, normalizer};
use crate::simplex::{dot, project_to_simplex, sup_dist, sup_norm};
use crate::types::{same_universe, Dist, MenuPair, Subset};

/// Default tolerance for exact (noise-free) data.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Tolerance for declaring two feasible shares equal.
pub const SHARE_TOL: f64 = 1e-9;

/// Two exposures on one feasible set with their induced choices.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposurePair {
    pub q1: Dist,
    pub p1: Dist,
    pub q2: Dist,
    pub p2: Dist,
}

impl ExposurePair {
    pub fn new(q1: Dist, p1: Dist, q2: Dist, p2: Dist) -> Result<Self> {
        if p1.support() != p2.support() {
            return Err(AwlmError::Precondition(
                "choice distributions live on different feasible sets".into(),
            ));
        }
        let size = p1.universe_size();
        same_universe(size, q1.universe_size())?;
        same_universe(size, q2.universe_size())?;
        Ok(Self { q1, p1, q2, p2 })
    }

    pub fn feasible(&self) -> &Subset {
        self.p1.support()
    }
}

fn delta_and_a_parts(
    s: &Subset,
    q1: &Dist,
    p1: &Dist,
    q2: &Dist,
    p2: &Dist,
) -> (Vec<f64>, Vec<f64>) {
    let s1 = feasible_share(q1, s);
    let s2 = feasible_share(q2, s);
    let v1 = q1.restrict(s);
    let v2 = q2.restrict(s);
    let (p1, p2) = (p1.masses(), p2.masses());
    let delta = p2.iter().zip(p1).map(|(b, a)| b - a).collect();
    let a = (0..s.len())
        .map(|x| (v2[x] - v1[x]) + (1.0 - s2) * p2[x] - (1.0 - s1) * p1[x])
        .collect();
    (delta, a)
}

/// `(Δ, A)` for one pair of regimes.
pub type DeltaA = (Vec<f64>, Vec<f64>);

/// The observable pair `(Δ, A)`, laid out in the feasible set's order.
pub fn delta_and_a(pair: &ExposurePair) -> (Vec<f64>, Vec<f64>) {
    delta_and_a_parts(pair.feasible(), &pair.q1, &pair.p1, &pair.q2, &pair.p2)
}

/// Whether an influence estimate lies in the model's parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaClass {
    Interior,
    OutOfClass,
}

impl AlphaClass {
    pub fn of(alpha: f64) -> Self {
        if alpha > 0.0 && alpha < 1.0 {
            AlphaClass::Interior
        } else {
            AlphaClass::OutOfClass
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentResult {
    /// Absent when the pair is degenerate.
    pub alpha: Option<f64>,
    /// Populated only by procedures that also recover the idiosyncratic rule.
    #[serde(skip)]
    pub p0: Option<Dist>,
    /// `Δ(x) / A(x)` for coordinates with `|A(x)| > tol`.
    pub ratios: Vec<Option<f64>>,
    pub degenerate: bool,
    pub class: Option<AlphaClass>,
}

/// Recovers `α` from a single pair.
///
/// `α` is read at the coordinate with the largest `|A(x)|`; every other
/// coordinate must satisfy `|Δ(x) − α A(x)| ≤ tol`. A pair with
/// `‖A‖∞ ≤ tol` is flagged degenerate: any `α` fits it.
pub fn recover_alpha_pair(pair: &ExposurePair, tol: f64) -> Result<IdentResult> {
    let (delta, a) = delta_and_a(pair);
    let ratios: Vec<Option<f64>> = delta
        .iter()
        .zip(&a)
        .map(|(d, a)| (a.abs() > tol).then(|| d / a))
        .collect();
    if sup_norm(&a) <= tol {
        return Ok(IdentResult {
            alpha: None,
            p0: None,
            ratios,
            degenerate: true,
            class: None,
        });
    }
    let pivot = (0..a.len())
        .max_by(|&i, &j| a[i].abs().total_cmp(&a[j].abs()))
        .expect("non-empty feasible set");
    let alpha = delta[pivot] / a[pivot];
    for x in 0..a.len() {
        if (delta[x] - alpha * a[x]).abs() > tol {
            return Err(AwlmError::RatioInconsistency {
                first: alpha,
                second: ratios[x].unwrap_or(f64::NAN),
            });
        }
    }
    Ok(IdentResult {
        alpha: Some(alpha),
        p0: None,
        ratios,
        degenerate: false,
        class: Some(AlphaClass::of(alpha)),
    })
}

/// Inverts the level multiplier `λ = α / [(1 − α) + α q_S]`.
pub fn alpha_from_level_multiplier(lambda: f64, q_s: f64) -> f64 {
    lambda / (1.0 + lambda * (1.0 - q_s))
}

/// Equal-share special case: `λ = ΔP(x) / Δq(x)` is common across `x`.
///
/// Returns `(λ, α)`; `λ` is the least-squares slope of `ΔP` on `Δq|_S`.
pub fn equal_share_lambda(pair: &ExposurePair) -> Result<(f64, f64)> {
    let s = pair.feasible();
    let s1 = feasible_share(&pair.q1, s);
    let s2 = feasible_share(&pair.q2, s);
    if (s1 - s2).abs() > SHARE_TOL {
        return Err(AwlmError::Precondition(format!(
            "feasible shares differ: {s1} vs {s2}"
        )));
    }
    let dq: Vec<f64> = pair
        .q2
        .restrict(s)
        .iter()
        .zip(pair.q1.restrict(s))
        .map(|(b, a)| b - a)
        .collect();
    if sup_norm(&dq) <= 1e-12 {
        return Err(AwlmError::Degenerate(
            "no coordinate of the feasible exposure varies".into(),
        ));
    }
    let dp: Vec<f64> = pair
        .p2
        .masses()
        .iter()
        .zip(pair.p1.masses())
        .map(|(b, a)| b - a)
        .collect();
    let lambda = dot(&dp, &dq) / dot(&dq, &dq);
    Ok((lambda, alpha_from_level_multiplier(lambda, s1)))
}

/// `b(α) = D(α) P − α q|_S`, the pre-normalization intercept.
pub fn intercept(alpha: f64, q: &Dist, p: &Dist) -> Vec<f64> {
    let s = p.support();
    let d = normalizer(alpha, feasible_share(q, s));
    p.masses()
        .iter()
        .zip(q.restrict(s))
        .map(|(pi, qi)| d * pi - alpha * qi)
        .collect()
}

/// Idiosyncratic rule `b(α) / (1 − α)` from one exposure.
///
/// Coordinates in `[−tol, 0)` are clamped; anything lower means the
/// observations cannot be rationalized at this `α`.
pub fn recover_p0(alpha: f64, q: &Dist, p: &Dist, tol: f64) -> Result<Dist> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AwlmError::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let raw: Vec<f64> = intercept(alpha, q, p)
        .into_iter()
        .map(|b| b / (1.0 - alpha))
        .collect();
    if let Some((coordinate, &value)) = raw.iter().enumerate().find(|(_, v)| **v < -tol) {
        return Err(AwlmError::NotRationalizable {
            alpha,
            coordinate,
            value,
        });
    }
    Dist::from_weights(
        p.support().clone(),
        raw.into_iter().map(|v| v.max(0.0)).collect(),
    )
}

/// Pooled least squares `Σ⟨Δ, A⟩ / Σ⟨A, A⟩`.
pub fn ls_alpha(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
    if pairs.iter().all(|(_, a)| sup_norm(a) <= DEFAULT_TOL) {
        return Err(AwlmError::Degenerate("every A vanishes".into()));
    }
    let num: f64 = pairs.iter().map(|(d, a)| dot(d, a)).sum();
    let den: f64 = pairs.iter().map(|(_, a)| dot(a, a)).sum();
    Ok(num / den)
}

/// All pairs `(i < j)` of `(Δ_ij, A_ij)` across regimes on one feasible set.
pub fn all_pairs(s: &Subset, regimes: &[(Dist, Dist)]) -> Vec<((usize, usize), DeltaA)> {
    let mut out = Vec::new();
    for i in 0..regimes.len() {
        for j in i + 1..regimes.len() {
            let (qi, pi) = &regimes[i];
            let (qj, pj) = &regimes[j];
            out.push(((i, j), delta_and_a_parts(s, qi, pi, qj, pj)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsP0 {
    pub p0: Dist,
    /// True when the averaged intercept left the simplex and was projected.
    pub projected: bool,
}

/// Average of `b_i(α) / (1 − α)` across regimes, projected onto the simplex
/// when a coordinate is negative.
pub fn ls_p0(alpha: f64, regimes: &[(Dist, Dist)]) -> Result<LsP0> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AwlmError::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let (_, first) = regimes.first().ok_or(AwlmError::EmptyDataset)?;
    let s = first.support().clone();
    let k = regimes.len() as f64;
    let mut mean = vec![0.0; s.len()];
    for (q, p) in regimes {
        if p.support() != &s {
            return Err(AwlmError::Precondition(
                "regimes on different feasible sets".into(),
            ));
        }
        for (m, b) in mean.iter_mut().zip(intercept(alpha, q, p)) {
            *m += b / ((1.0 - alpha) * k);
        }
    }
    let projected = mean.iter().any(|&v| v < 0.0);
    let p0 = if projected {
        Dist::new(s, project_to_simplex(&mean))?
    } else {
        Dist::from_weights(s, mean)?
    };
    Ok(LsP0 { p0, projected })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Rationalizable,
    /// Every `A_ij` vanishes, so no `α` is pinned down.
    Underdetermined,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCheck {
    pub i: usize,
    pub j: usize,
    /// `‖Δ_ij − α A_ij‖∞` at the selected `α`.
    pub residual: f64,
    /// Least-squares `α` from this pair alone, absent when `A_ij ≈ 0`.
    pub pair_alpha: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeCheck {
    pub regime: usize,
    /// Smallest coordinate of `b_i(α)`.
    pub min_intercept: f64,
    /// `‖b_i(α) − mean_k b_k(α)‖∞`.
    pub intercept_gap: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RationalizabilityReport {
    pub verdict: Verdict,
    pub alpha: Option<f64>,
    pub p0: Option<Vec<f64>>,
    pub pairs: Vec<PairCheck>,
    pub regimes: Vec<RegimeCheck>,
    pub violations: Vec<String>,
}

/// Searches for one `(α, p0)` reproducing every regime.
///
/// Candidate `α`s are the pooled least-squares value and every pairwise one;
/// the candidate satisfying the most pairwise identities wins (ties go to the
/// pooled value), so a single bad regime shows up as failures of exactly the
/// pairs it belongs to. Intercepts `b_i(α)` are then checked for
/// nonnegativity and agreement in every regime.
pub fn rationalizability_check(
    regimes: &[(Dist, Dist)],
    tol: f64,
) -> Result<RationalizabilityReport> {
    if regimes.len() < 2 {
        return Err(AwlmError::Precondition(format!(
            "need at least 2 regimes, got {}",
            regimes.len()
        )));
    }
    let s = regimes[0].1.support().clone();
    if regimes.iter().any(|(_, p)| p.support() != &s) {
        return Err(AwlmError::Precondition(
            "regimes on different feasible sets".into(),
        ));
    }
    let pairs = all_pairs(&s, regimes);
    let raw: Vec<(Vec<f64>, Vec<f64>)> = pairs.iter().map(|(_, da)| da.clone()).collect();
    let pooled = match ls_alpha(&raw) {
        Ok(alpha) => alpha,
        Err(_) => {
            return Ok(RationalizabilityReport {
                verdict: Verdict::Underdetermined,
                alpha: None,
                p0: None,
                pairs: pairs
                    .iter()
                    .map(|((i, j), (d, _))| PairCheck {
                        i: *i,
                        j: *j,
                        residual: sup_norm(d),
                        pair_alpha: None,
                        passed: sup_norm(d) <= tol,
                    })
                    .collect(),
                regimes: Vec::new(),
                violations: vec!["underdetermined: A ≡ 0 for every pair".into()],
            })
        }
    };
    let pair_alphas: Vec<Option<f64>> = raw
        .iter()
        .map(|(d, a)| (sup_norm(a) > tol).then(|| dot(d, a) / dot(a, a)))
        .collect();
    let residual = |alpha: f64, (d, a): &(Vec<f64>, Vec<f64>)| {
        d.iter()
            .zip(a)
            .fold(0.0f64, |acc, (d, a)| acc.max((d - alpha * a).abs()))
    };
    let score = |alpha: f64| raw.iter().filter(|da| residual(alpha, da) <= tol).count();
    let mut alpha = pooled;
    let mut best = score(pooled);
    for candidate in pair_alphas.iter().flatten() {
        let sc = score(*candidate);
        if sc > best {
            best = sc;
            alpha = *candidate;
        }
    }

    let mut violations = Vec::new();
    let pair_checks: Vec<PairCheck> = pairs
        .iter()
        .zip(&pair_alphas)
        .map(|(((i, j), da), pa)| {
            let r = residual(alpha, da);
            let passed = r <= tol;
            if !passed {
                violations.push(format!(
                    "pair ({i}, {j}): |Δ − αA|∞ = {r:.3e} exceeds {tol:.1e}"
                ));
            }
            PairCheck {
                i: *i,
                j: *j,
                residual: r,
                pair_alpha: *pa,
                passed,
            }
        })
        .collect();
    if AlphaClass::of(alpha) == AlphaClass::OutOfClass {
        violations.push(format!("alpha = {alpha} lies outside (0, 1)"));
    }

    let intercepts: Vec<Vec<f64>> = regimes
        .iter()
        .map(|(q, p)| intercept(alpha, q, p))
        .collect();
    let k = intercepts.len() as f64;
    let mean: Vec<f64> = (0..s.len())
        .map(|x| intercepts.iter().map(|b| b[x]).sum::<f64>() / k)
        .collect();
    let regime_checks: Vec<RegimeCheck> = intercepts
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let min_intercept = b.iter().copied().fold(f64::INFINITY, f64::min);
            let intercept_gap = sup_dist(b, &mean);
            let nonnegative = min_intercept >= -tol;
            let agrees = intercept_gap <= tol;
            if !nonnegative {
                violations.push(format!(
                    "regime {i}: intercept coordinate {min_intercept:.3e} is negative"
                ));
            }
            if !agrees {
                violations.push(format!(
                    "regime {i}: intercept deviates from the common value by {intercept_gap:.3e}"
                ));
            }
            RegimeCheck {
                regime: i,
                min_intercept,
                intercept_gap,
                passed: nonnegative && agrees,
            }
        })
        .collect();

    let verdict = if violations.is_empty() {
        Verdict::Rationalizable
    } else {
        Verdict::Violated
    };
    let p0 = (verdict == Verdict::Rationalizable).then(|| {
        let raw: Vec<f64> = mean.iter().map(|b| (b / (1.0 - alpha)).max(0.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    });
    Ok(RationalizabilityReport {
        verdict,
        alpha: Some(alpha),
        p0,
        pairs: pair_checks,
        regimes: regime_checks,
        violations,
    })
}

/// Menu plus a profile of `K` exposures.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub menu: MenuPair,
    pub exposures: Vec<Dist>,
}

impl Design {
    pub fn new(menu: MenuPair, exposures: Vec<Dist>) -> Result<Self> {
        if exposures.is_empty() {
            return Err(AwlmError::EmptyDataset);
        }
        let size = menu.feasible().universe_size();
        for q in &exposures {
            same_universe(size, q.universe_size())?;
        }
        Ok(Self { menu, exposures })
    }

    pub fn feasible(&self) -> &Subset {
        self.menu.feasible()
    }

    /// Induced choices `(P_1, ..., P_K)` at `(α, p0)`.
    pub fn forward(&self, alpha: f64, p0: &Dist) -> Result<Vec<Dist>> {
        self.exposures
            .iter()
            .map(|q| awlm_choice(p0, q, alpha, self.feasible()))
            .collect()
    }
}

/// Jacobian of `(α, p0) ↦ (P_1, …, P_K)`.
///
/// Rows stack the regimes (`K·m` rows). Column 0 is `∂/∂α`; column `k ≥ 1`
/// is the directional derivative along `e_k − e_m`, a basis of the tangent
/// space `{δ : 1ᵀδ = 0}` matching the reduced parameterization that drops
/// the last alternative.
pub fn phi_jacobian(alpha: f64, p0: &Dist, design: &Design) -> Result<DMatrix<f64>> {
    let s = design.feasible();
    let m = s.len();
    let k = design.exposures.len();
    let choices = design.forward(alpha, p0)?;
    let mut jac = DMatrix::zeros(k * m, m);
    for (i, (q, p)) in design.exposures.iter().zip(&choices).enumerate() {
        let share = feasible_share(q, s);
        let d = normalizer(alpha, share);
        let v = q.restrict(s);
        for (x, &vx) in v.iter().enumerate() {
            let row = i * m + x;
            jac[(row, 0)] = (vx - p0.masses()[x] + (1.0 - share) * p.masses()[x]) / d;
            for col in 1..m {
                let basis = if x == col - 1 {
                    1.0
                } else if x == m - 1 {
                    -1.0
                } else {
                    0.0
                };
                jac[(row, col)] = (1.0 - alpha) / d * basis;
            }
        }
    }
    Ok(jac)
}

/// Suggested fix for an affinely collinear design: move `epsilon` of mass in
/// `regime` from the infeasible alternative `decrease` onto `increase`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Perturbation {
    pub regime: usize,
    /// Universe index gaining mass.
    pub increase: usize,
    /// Universe index in `I \ S` giving up mass; absent when the regime has
    /// no infeasible mass to move.
    pub decrease: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenericityReport {
    pub regimes: usize,
    /// Rank of the matrix of differences `v_i − v_1`.
    pub difference_rank: usize,
    pub singular_values: Vec<f64>,
    pub collinear: bool,
    /// The generic-identification result needs `K ≥ 3`.
    pub applicable: bool,
    pub generic: bool,
    pub perturbation: Option<Perturbation>,
    pub notes: Vec<String>,
}

/// Tests whether the feasible restrictions `v_i = q_i|_S` lie on a common
/// affine line.
pub fn design_genericity_check(design: &Design) -> Result<GenericityReport> {
    let k = design.exposures.len();
    if k < 2 {
        return Err(AwlmError::Precondition(format!(
            "need at least 2 regimes, got {k}"
        )));
    }
    let s = design.feasible();
    let m = s.len();
    let v: Vec<Vec<f64>> = design.exposures.iter().map(|q| q.restrict(s)).collect();
    let diffs = DMatrix::from_fn(m, k - 1, |x, i| v[i + 1][x] - v[0][x]);
    let sv = singular_values(&diffs);
    let scale = sv.first().copied().unwrap_or(0.0).max(1.0);
    let difference_rank = sv.iter().filter(|&&s| s > 1e-10 * scale).count();
    let collinear = difference_rank <= 1;
    let applicable = k >= 3;
    let mut notes = Vec::new();
    if !applicable {
        notes.push("K < 3: generic identification needs at least 3 regimes".to_string());
    }

    let perturbation = collinear.then(|| {
        let regime = k.min(3) - 1;
        let direction = (1..k)
            .map(|i| {
                v[i].iter()
                    .zip(&v[0])
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>()
            })
            .find(|d| sup_norm(d) > 1e-12);
        // Alternative whose unit vector is least aligned with the line.
        let increase_pos = match direction {
            Some(d) => (0..m)
                .min_by(|&a, &b| d[a].abs().total_cmp(&d[b].abs()))
                .expect("non-empty S"),
            None => 0,
        };
        let q = &design.exposures[regime];
        let decrease = design
            .menu
            .influencer()
            .members()
            .iter()
            .copied()
            .filter(|z| !s.contains(*z) && q.mass(*z) > 0.0)
            .max_by(|a, b| q.mass(*a).total_cmp(&q.mass(*b)));
        Perturbation {
            regime,
            increase: s.members()[increase_pos],
            decrease,
        }
    });
    if collinear {
        notes.push("feasible restrictions are affinely collinear".to_string());
    }
    Ok(GenericityReport {
        regimes: k,
        difference_rank,
        singular_values: sv,
        collinear,
        applicable,
        generic: applicable && !collinear,
        perturbation,
        notes,
    })
}
