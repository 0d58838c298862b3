//! Executable diagnostics for the behavioral characterization.
//!
//! Within a level set of fixed feasible share `μ`, choice responds to the
//! feasible exposure through a single multiplier `λ(S, μ)`. Across levels
//! the multipliers lie on the leverage line `1/λ(μ) = μ + κ(S)`, with
//! `κ = (1 − α)/α`. Shifting only the feasible share moves choice along the
//! segment from `p0` towards the composition `q(·|S)`.
//!
//! All checks are exact population statements; callers working with sampled
//! shares supply a tolerance that reflects the sampling noise.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{AwlmError, Result};
use crate::ident::{alpha_from_level_multiplier, SHARE_TOL};
use crate::model::{conditional_composition, feasible_share};
use crate::simplex::{dot, sup_dist};
use crate::types::{Dist, LuceWeights, MenuPair, Subset};

/// Outcome of one diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub location: Option<String>,
}

impl CheckReport {
    fn new(check: &str, tol: f64, worst: Option<(f64, String)>) -> Self {
        let (worst_violation, location) = match worst {
            Some((v, loc)) => (v, Some(loc)),
            None => (0.0, None),
        };
        Self {
            check: check.to_string(),
            passed: worst_violation <= tol,
            worst_violation,
            location,
        }
    }
}

fn track_worst(worst: &mut Option<(f64, String)>, value: f64, location: impl FnOnce() -> String) {
    if worst.as_ref().is_none_or(|(w, _)| value > *w) {
        *worst = Some((value, location()));
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Largest `|a(x) b(y) − a(y) b(x)|` over `x < y`, with its location.
fn worst_cross_product(a: &[f64], b: &[f64]) -> (f64, (usize, usize)) {
    let mut worst = (0.0, (0, 0));
    for x in 0..a.len() {
        for y in x + 1..a.len() {
            let c = (a[x] * b[y] - a[y] * b[x]).abs();
            if c > worst.0 {
                worst = (c, (x, y));
            }
        }
    }
    worst
}

fn feasible_of(p: &Dist) -> &Subset {
    p.support()
}

/// An exposure `q` and the choice `P` it induces.
pub type ChoicePoint = (Dist, Dist);

/// Intra-aspiration irrelevance: exposures that agree on `S` induce the
/// same choice, whatever they do off `S`.
///
/// Each item is `((q, P), (q', P'))`.
pub fn check_intra_aspiration(
    pairs: &[(ChoicePoint, ChoicePoint)],
    tol: f64,
) -> Result<CheckReport> {
    let mut worst = None;
    for (k, ((q, p), (q2, p2))) in pairs.iter().enumerate() {
        let s = feasible_of(p);
        if p2.support() != s {
            return Err(AwlmError::Precondition(format!(
                "pair {k}: choices on different sets"
            )));
        }
        let gap = sup_dist(&q.restrict(s), &q2.restrict(s));
        if gap > SHARE_TOL {
            return Err(AwlmError::Precondition(format!(
                "pair {k}: exposures differ on S by {gap:e}"
            )));
        }
        let v = sup_dist(p.masses(), p2.masses());
        track_worst(&mut worst, v, || format!("pair {k}"));
    }
    Ok(CheckReport::new("intra_aspiration", tol, worst))
}

/// Proportional response within a level: `ΔP` is collinear with `Δq|_S`.
pub fn check_proportional_response(
    q1: &Dist,
    p1: &Dist,
    q2: &Dist,
    p2: &Dist,
    tol: f64,
) -> Result<CheckReport> {
    let s = feasible_of(p1);
    let (s1, s2) = (feasible_share(q1, s), feasible_share(q2, s));
    if (s1 - s2).abs() > SHARE_TOL {
        return Err(AwlmError::Precondition(format!(
            "unequal feasible shares {s1} and {s2}"
        )));
    }
    let dp = diff(p2.masses(), p1.masses());
    let dq = diff(&q2.restrict(s), &q1.restrict(s));
    let (v, (x, y)) = worst_cross_product(&dp, &dq);
    Ok(CheckReport::new(
        "proportional_response",
        tol,
        Some((v, format!("coordinates ({x}, {y})"))),
    ))
}

/// Exposure–choice observations sharing one feasible share `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSlice {
    pub menu: MenuPair,
    pub mu: f64,
    pub points: Vec<(Dist, Dist)>,
}

impl LevelSlice {
    pub fn new(menu: MenuPair, points: Vec<(Dist, Dist)>) -> Result<Self> {
        let s = menu.feasible();
        let (q0, _) = points
            .first()
            .ok_or_else(|| AwlmError::Precondition("slice has no points".into()))?;
        let mu = feasible_share(q0, s);
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(AwlmError::Precondition(format!(
                "feasible share {mu} outside (0, 1]"
            )));
        }
        for (k, (q, p)) in points.iter().enumerate() {
            if p.support() != s {
                return Err(AwlmError::Precondition(format!(
                    "point {k}: choice not on S"
                )));
            }
            let share = feasible_share(q, s);
            if (share - mu).abs() > SHARE_TOL {
                return Err(AwlmError::Precondition(format!(
                    "point {k}: feasible share {share} is off level {mu}"
                )));
            }
        }
        Ok(Self { menu, mu, points })
    }
}

/// Multiplier and intercept fitted on one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelFit {
    pub mu: f64,
    pub lambda: f64,
    /// `a(S, μ) = mean over points of (P − λ q|_S)`.
    pub intercept: Vec<f64>,
    /// Largest disagreement between the pooled fit and any point pair, both
    /// in slope and in the residual `ΔP − λ Δq`.
    pub residual: f64,
}

/// Pooled least-squares multiplier for one level.
pub fn estimate_lambda(slice: &LevelSlice) -> Result<LevelFit> {
    let s = slice.menu.feasible();
    if slice.points.len() < 2 {
        return Err(AwlmError::Precondition(
            "need at least 2 points on a level".into(),
        ));
    }
    let restricted: Vec<Vec<f64>> = slice.points.iter().map(|(q, _)| q.restrict(s)).collect();
    let mut pairs = Vec::new();
    for i in 0..slice.points.len() {
        for j in i + 1..slice.points.len() {
            let dq = diff(&restricted[j], &restricted[i]);
            let dp = diff(slice.points[j].1.masses(), slice.points[i].1.masses());
            pairs.push((dq, dp));
        }
    }
    let den: f64 = pairs.iter().map(|(dq, _)| dot(dq, dq)).sum();
    if den <= 1e-24 {
        return Err(AwlmError::DegenerateSlice);
    }
    let lambda = pairs.iter().map(|(dq, dp)| dot(dq, dp)).sum::<f64>() / den;

    let mut residual = 0.0f64;
    for (dq, dp) in &pairs {
        let qq = dot(dq, dq);
        if qq > 1e-24 {
            residual = residual.max((dot(dq, dp) / qq - lambda).abs());
        }
        for (a, b) in dp.iter().zip(dq) {
            residual = residual.max((a - lambda * b).abs());
        }
    }

    let n = slice.points.len() as f64;
    let mut intercept = vec![0.0; s.len()];
    for ((_, p), v) in slice.points.iter().zip(&restricted) {
        for (x, a) in intercept.iter_mut().enumerate() {
            *a += (p.masses()[x] - lambda * v[x]) / n;
        }
    }
    Ok(LevelFit {
        mu: slice.mu,
        lambda,
        intercept,
        residual,
    })
}

/// Level fits for one menu across several feasible shares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeverageProfile {
    #[serde(skip)]
    pub menu: MenuPair,
    pub entries: Vec<LevelFit>,
}

impl LeverageProfile {
    pub fn from_slices(slices: &[LevelSlice]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| AwlmError::Precondition("no level slices".into()))?;
        if slices.iter().any(|s| s.menu != first.menu) {
            return Err(AwlmError::Precondition(
                "slices from different menus".into(),
            ));
        }
        Ok(Self {
            menu: first.menu.clone(),
            entries: slices.iter().map(estimate_lambda).collect::<Result<_>>()?,
        })
    }
}

/// Leverage line: `1/λ(μ₁) − 1/λ(μ₂) = μ₁ − μ₂` and `1/λ(μ) > μ`.
///
/// Returns `κ = mean(1/λ(μ) − μ)` with the report.
pub fn check_leverage_line(profile: &LeverageProfile, tol: f64) -> Result<(f64, CheckReport)> {
    let entries = &profile.entries;
    let mut levels: Vec<f64> = entries.iter().map(|e| e.mu).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() <= SHARE_TOL);
    if levels.len() < 2 {
        return Err(AwlmError::Precondition(
            "leverage line needs at least 2 distinct feasible-share levels".into(),
        ));
    }
    for e in entries {
        if e.lambda.is_nan() || e.lambda <= 0.0 || 1.0 / e.lambda <= e.mu {
            return Err(AwlmError::KappaNonpositive(format!(
                "1/lambda = {} at mu = {}",
                1.0 / e.lambda,
                e.mu
            )));
        }
    }
    let mut worst = None;
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            let (a, b) = (&entries[i], &entries[j]);
            let v = ((1.0 / a.lambda - 1.0 / b.lambda) - (a.mu - b.mu)).abs();
            track_worst(&mut worst, v, || {
                format!("levels mu = {} and mu = {}", a.mu, b.mu)
            });
        }
    }
    let kappa = entries.iter().map(|e| 1.0 / e.lambda - e.mu).sum::<f64>() / entries.len() as f64;
    Ok((kappa, CheckReport::new("leverage_line", tol, worst)))
}

/// Radial consistency: with the composition `v` fixed, `P₁ − v` and `P₂ − v`
/// are collinear.
pub fn check_radial_consistency(
    q1: &Dist,
    p1: &Dist,
    q2: &Dist,
    p2: &Dist,
    tol: f64,
) -> Result<CheckReport> {
    let s = feasible_of(p1);
    let v1 = conditional_composition(q1, s)?;
    let v2 = conditional_composition(q2, s)?;
    let gap = sup_dist(v1.masses(), v2.masses());
    if gap > SHARE_TOL {
        return Err(AwlmError::Precondition(format!(
            "within-feasible compositions differ by {gap:e}"
        )));
    }
    let a = diff(p1.masses(), v1.masses());
    let b = diff(p2.masses(), v1.masses());
    let (v, (x, y)) = worst_cross_product(&a, &b);
    Ok(CheckReport::new(
        "radial_consistency",
        tol,
        Some((v, format!("coordinates ({x}, {y})"))),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerMenuRecovery {
    #[serde(skip)]
    pub menu: MenuPair,
    pub kappa: f64,
    pub alpha: f64,
    #[serde(skip)]
    pub p0: Dist,
    pub residual_report: Vec<CheckReport>,
}

/// Recovers `(α_S, p0^S)` from a leverage profile on a menu with `|S| ≥ 3`.
///
/// `α_S = 1/(1 + κ)` and `p0^S` is the normalized level intercept
/// `a / 1ᵀa`, averaged over levels. The residual report carries the
/// leverage-line check, the spread of the normalized intercepts across
/// levels and the spread of level-wise `α` values.
pub fn recover_per_menu(profile: &LeverageProfile, tol: f64) -> Result<PerMenuRecovery> {
    let m = profile.menu.feasible().len();
    if m < 3 {
        return Err(AwlmError::SmallMenu(m));
    }
    let (kappa, leverage) = check_leverage_line(profile, tol)?;
    if kappa <= 0.0 {
        return Err(AwlmError::KappaNonpositive(format!("kappa = {kappa}")));
    }
    let alpha = 1.0 / (1.0 + kappa);

    let directions = profile
        .entries
        .iter()
        .map(|e| {
            let total: f64 = e.intercept.iter().sum();
            if total <= 0.0 {
                return Err(AwlmError::Precondition(format!(
                    "level mu = {}: intercept total {total} is not positive",
                    e.mu
                )));
            }
            Ok(e.intercept.iter().map(|a| a / total).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let n = directions.len() as f64;
    let mean: Vec<f64> = (0..m)
        .map(|x| directions.iter().map(|d| d[x]).sum::<f64>() / n)
        .collect();

    let mut direction_worst = None;
    let mut alpha_worst = None;
    for (e, d) in profile.entries.iter().zip(&directions) {
        track_worst(&mut direction_worst, sup_dist(d, &mean), || {
            format!("mu = {}", e.mu)
        });
        let level_alpha = alpha_from_level_multiplier(e.lambda, e.mu);
        track_worst(&mut alpha_worst, (level_alpha - alpha).abs(), || {
            format!("mu = {}", e.mu)
        });
    }
    let p0 = Dist::from_weights(
        profile.menu.feasible().clone(),
        mean.iter().map(|v| v.max(0.0)).collect(),
    )?;
    Ok(PerMenuRecovery {
        menu: profile.menu.clone(),
        kappa,
        alpha,
        p0,
        residual_report: vec![
            leverage,
            CheckReport::new("intercept_direction_stability", tol, direction_worst),
            CheckReport::new("level_alpha_agreement", tol, alpha_worst),
        ],
    })
}

/// Cross-menu Luce consistency: odds `p(x)/p(y)` agree on every overlap.
///
/// Each family member is an idiosyncratic rule supported on its menu.
pub fn check_luce_consistency(family: &[Dist], tol: f64) -> Result<CheckReport> {
    if family.is_empty() {
        return Err(AwlmError::Precondition("empty family".into()));
    }
    let mut worst = None;
    for (i, ps) in family.iter().enumerate() {
        for (j, pt) in family.iter().enumerate().skip(i + 1) {
            let overlap = ps.support().intersection(pt.support());
            for &x in &overlap {
                for &y in &overlap {
                    if x == y {
                        continue;
                    }
                    let (sy, ty) = (ps.mass(y), pt.mass(y));
                    if sy <= 0.0 || ty <= 0.0 {
                        return Err(AwlmError::ZeroProbability(format!(
                            "alternative {y} in menus {i} and {j}"
                        )));
                    }
                    let v = (ps.mass(x) / sy - pt.mass(x) / ty).abs();
                    track_worst(&mut worst, v, || {
                        format!("menus ({i}, {j}), odds of {x} over {y}")
                    });
                }
            }
        }
    }
    Ok(CheckReport::new("luce_consistency", tol, worst))
}

fn components(size: usize, family: &[Dist]) -> usize {
    let mut parent: Vec<usize> = (0..size).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for p in family {
        let members = p.support().members();
        for w in members.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let roots: std::collections::BTreeSet<usize> =
        (0..size).map(|x| find(&mut parent, x)).collect();
    roots.len()
}

/// Global Luce weights with `u(reference) = 1` from a consistent family.
///
/// Solves `log p^S(x) = log u(x) − c_S` by least squares over every menu,
/// which reproduces exact families and averages out noise in noisy ones.
pub fn fit_global_weights(family: &[Dist], reference: usize, tol: f64) -> Result<LuceWeights> {
    let report = check_luce_consistency(family, tol)?;
    if !report.passed {
        return Err(AwlmError::InconsistentFamily(format!(
            "odds disagree by {:e} at {}",
            report.worst_violation,
            report.location.unwrap_or_default()
        )));
    }
    let size = family[0].universe_size();
    let count = components(size, family);
    if count > 1 {
        return Err(AwlmError::DisconnectedMenus(count));
    }
    if reference >= size {
        return Err(AwlmError::InvalidParameter(format!(
            "reference {reference} outside universe"
        )));
    }

    // Unknowns: log u for every non-reference alternative, then one c per menu.
    let column = |x: usize| if x < reference { x } else { x - 1 };
    let rows: usize = family.iter().map(|p| p.support().len()).sum();
    let cols = (size - 1) + family.len();
    let mut a = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    let mut row = 0;
    for (k, p) in family.iter().enumerate() {
        for (&x, &mass) in p.support().members().iter().zip(p.masses()) {
            if mass <= 0.0 {
                return Err(AwlmError::ZeroProbability(format!(
                    "alternative {x} in menu {k}"
                )));
            }
            if x != reference {
                a[(row, column(x))] = 1.0;
            }
            a[(row, size - 1 + k)] = -1.0;
            b[row] = mass.ln();
            row += 1;
        }
    }
    let solution = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| AwlmError::Singular(e.to_string()))?;
    let weights = (0..size)
        .map(|x| {
            if x == reference {
                1.0
            } else {
                solution[column(x)].exp()
            }
        })
        .collect();
    LuceWeights::new(weights)
}

/// Groups regimes on one menu by feasible share (within `1e-9`), keeping
/// input order inside each level.
pub fn group_by_level(menu: &MenuPair, regimes: &[(Dist, Dist)]) -> Vec<(f64, Vec<usize>)> {
    let s = menu.feasible();
    let mut levels: BTreeMap<i64, (f64, Vec<usize>)> = BTreeMap::new();
    let mut keys: Vec<(f64, i64)> = Vec::new();
    for (i, (q, _)) in regimes.iter().enumerate() {
        let share = feasible_share(q, s);
        let key = match keys.iter().find(|(mu, _)| (mu - share).abs() <= SHARE_TOL) {
            Some((_, key)) => *key,
            None => {
                let key = keys.len() as i64;
                keys.push((share, key));
                key
            }
        };
        levels
            .entry(key)
            .or_insert_with(|| (share, Vec::new()))
            .1
            .push(i);
    }
    let mut out: Vec<(f64, Vec<usize>)> = levels.into_values().collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}
