//! Minimum-distance and two-step GMM estimation of `(α, p0)` on one menu.
//!
//! Regime `i` contributes the pre-normalization moment
//!
//! ```text
//! m_i(α, p0) = D_i(α) P̂_i − (1 − α) p0 − α q_i|_S,   D_i(α) = (1 − α) + α q_{i,S}
//! ```
//!
//! reduced to its first `m − 1` coordinates to remove the adding-up
//! singularity. For a given `α` the reduced `p0` is concentrated out by
//! weighted averaging, leaving a one-dimensional search over `α`.
//!
//! Since `D_i(α) P̂_i` is affine in `α`, every reduced moment is affine in
//! `(α, (1 − α) p̃0)`, so for a fixed weight the concentrated criterion is an
//! exact quadratic in `α`. The search exploits this with a final parabolic
//! step after the golden-section refinement.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AwlmError, Result};
use crate::linalg::{regularize, solve, spd_inverse};
use crate::model::feasible_share;
use crate::sim::{ChoiceCounts, Dataset};
use crate::stats::chi2_upper_tail;
use crate::types::{Dist, MenuPair, Subset};

/// One exposure regime with its observed choice shares.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmRegime {
    pub exposure: Dist,
    /// Feasible share `q_{i,S}`.
    pub share: f64,
    /// Restriction `q_i|_S`, in feasible order.
    pub restriction: Vec<f64>,
    /// Empirical shares `P̂_i`, in feasible order.
    pub shares: Vec<f64>,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmDataset {
    menu: MenuPair,
    regimes: Vec<GmmRegime>,
}

impl GmmDataset {
    /// Builds a dataset from `(exposure, counts)` pairs.
    pub fn from_counts(menu: MenuPair, regimes: Vec<(Dist, ChoiceCounts)>) -> Result<Self> {
        let regimes = regimes
            .into_iter()
            .map(|(q, c)| {
                let n = c.total();
                (q, c.shares(), n)
            })
            .collect();
        Self::from_shares(menu, regimes)
    }

    /// Builds a dataset from `(exposure, shares, n)` triples; `n` is the
    /// sample size the shares stand for.
    pub fn from_shares(menu: MenuPair, regimes: Vec<(Dist, Vec<f64>, u64)>) -> Result<Self> {
        if regimes.len() < 2 {
            return Err(AwlmError::Precondition(format!(
                "need at least 2 regimes, got {}",
                regimes.len()
            )));
        }
        let s = menu.feasible();
        let regimes = regimes
            .into_iter()
            .enumerate()
            .map(|(k, (exposure, shares, n))| {
                if exposure.universe_size() != s.universe_size() {
                    return Err(AwlmError::UniverseMismatch(format!("regime {k}")));
                }
                if n == 0 {
                    return Err(AwlmError::InvalidParameter(format!("regime {k}: N = 0")));
                }
                // Validates nonnegativity and adding up.
                Dist::new(s.clone(), shares.clone())?;
                let share = feasible_share(&exposure, s);
                if share <= 0.0 {
                    return Err(AwlmError::NoFeasibleExposure);
                }
                Ok(GmmRegime {
                    share,
                    restriction: exposure.restrict(s),
                    exposure,
                    shares,
                    n,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { menu, regimes })
    }

    /// Converts simulated regimes, which must all share one menu.
    pub fn from_simulated(data: &Dataset) -> Result<Self> {
        let first = data.regimes.first().ok_or(AwlmError::EmptyDataset)?;
        if data.regimes.iter().any(|r| r.menu != first.menu) {
            return Err(AwlmError::Precondition("regimes on different menus".into()));
        }
        Self::from_counts(
            first.menu.clone(),
            data.regimes
                .iter()
                .map(|r| (r.exposure.clone(), r.counts.clone()))
                .collect(),
        )
    }

    pub fn menu(&self) -> &MenuPair {
        &self.menu
    }

    pub fn feasible(&self) -> &Subset {
        self.menu.feasible()
    }

    pub fn regimes(&self) -> &[GmmRegime] {
        &self.regimes
    }

    /// Menu size `m`.
    pub fn m(&self) -> usize {
        self.menu.feasible().len()
    }

    pub fn k(&self) -> usize {
        self.regimes.len()
    }

    pub fn total_n(&self) -> u64 {
        self.regimes.iter().map(|r| r.n).sum()
    }

    /// Sampling fractions `π_i = N_i / N`.
    pub fn fractions(&self) -> Vec<f64> {
        let n = self.total_n() as f64;
        self.regimes.iter().map(|r| r.n as f64 / n).collect()
    }

    /// Overidentification degrees of freedom `K(m − 1) − m`, or an error
    /// when the moments cannot pin down the parameters.
    pub fn degrees_of_freedom(&self) -> Result<usize> {
        let (moments, params) = (self.k() * (self.m() - 1), self.m());
        if moments < params {
            return Err(AwlmError::UnderIdentified { moments, params });
        }
        Ok(moments - params)
    }
}

fn normalizer(alpha: f64, share: f64) -> f64 {
    (1.0 - alpha) + alpha * share
}

/// `m_i = D_i(α) P̂_i − (1 − α) p0 − α q_i|_S` on the full feasible set.
pub fn moment(alpha: f64, p0: &[f64], p_hat: &[f64], q: &Dist, s: &Subset) -> Vec<f64> {
    let d = normalizer(alpha, feasible_share(q, s));
    let v = q.restrict(s);
    (0..p0.len())
        .map(|x| d * p_hat[x] - (1.0 - alpha) * p0[x] - alpha * v[x])
        .collect()
}

/// Drops the last coordinate.
pub fn reduce(v: &[f64]) -> Vec<f64> {
    v[..v.len().saturating_sub(1)].to_vec()
}

/// Reduced multinomial covariance `H (diag P − P Pᵀ) Hᵀ`, ridged when
/// near-singular. Returns the matrix and whether the ridge engaged.
pub fn multinomial_cov(p: &[f64], ridge: f64) -> (DMatrix<f64>, bool) {
    let r = p.len() - 1;
    let sigma = DMatrix::from_fn(r, r, |i, j| {
        if i == j {
            p[i] * (1.0 - p[i])
        } else {
            -p[i] * p[j]
        }
    });
    regularize(&sigma, ridge)
}

fn reduced_target(alpha: f64, r: &GmmRegime) -> DVector<f64> {
    let d = normalizer(alpha, r.share);
    let m = r.shares.len();
    DVector::from_fn(m - 1, |x, _| d * r.shares[x] - alpha * r.restriction[x])
}

/// Weighted average `(1/(1 − α)) (Σ W_i)⁻¹ Σ W_i H(D_i P̂_i − α q_i|_S)`.
pub fn concentrate_p0(alpha: f64, data: &GmmDataset, weights: &[DMatrix<f64>]) -> Result<Vec<f64>> {
    let r = data.m() - 1;
    let mut total = DMatrix::zeros(r, r);
    let mut rhs = DVector::zeros(r);
    for (reg, w) in data.regimes.iter().zip(weights) {
        total += w;
        rhs += w * reduced_target(alpha, reg);
    }
    let c = solve(&total, &rhs)?;
    Ok(c.iter().map(|v| v / (1.0 - alpha)).collect())
}

fn reduced_moments(alpha: f64, p0_reduced: &[f64], data: &GmmDataset) -> Vec<DVector<f64>> {
    data.regimes
        .iter()
        .map(|reg| {
            let mut m = reduced_target(alpha, reg);
            for (x, v) in m.iter_mut().enumerate() {
                *v -= (1.0 - alpha) * p0_reduced[x];
            }
            m
        })
        .collect()
}

fn quadratic_form(moments: &[DVector<f64>], weights: &[DMatrix<f64>]) -> f64 {
    moments
        .iter()
        .zip(weights)
        .map(|(m, w)| (m.transpose() * w * m)[(0, 0)])
        .sum()
}

/// `Σ_i m̃_iᵀ W_i m̃_i` at the concentrated `p̃0(α)`.
pub fn concentrated_criterion(
    alpha: f64,
    data: &GmmDataset,
    weights: &[DMatrix<f64>],
) -> Result<f64> {
    let p0 = concentrate_p0(alpha, data, weights)?;
    Ok(quadratic_form(&reduced_moments(alpha, &p0, data), weights).max(0.0))
}

/// How regime blocks are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    /// Identity on the full `m`-vector of each regime's moments. Because
    /// full moments add up to zero, this is `I + 11ᵀ` on reduced moments.
    Identity,
    /// Identity on the reduced moments.
    SelectorIdentity,
    /// `π_i`-scaled [`WeightKind::Identity`].
    Proportional,
    /// Two-step: identity first, then the inverse plug-in covariance.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    /// Ridge scale, applied as `ridge · trace/(m − 1)` to near-singular
    /// covariance blocks only.
    pub ridge: f64,
}

impl WeightSpec {
    pub const DEFAULT_RIDGE: f64 = 1e-10;

    pub fn new(kind: WeightKind) -> Self {
        Self {
            kind,
            ridge: Self::DEFAULT_RIDGE,
        }
    }
}

/// Where `P_i` in the `α` column of `G` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianPlugIn {
    #[default]
    Empirical,
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub grid_points: usize,
    pub lower: f64,
    pub upper: f64,
    pub tol: f64,
    pub jacobian: JacobianPlugIn,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_points: 200,
            lower: 1e-4,
            upper: 1.0 - 1e-4,
            tol: 1e-10,
            jacobian: JacobianPlugIn::Empirical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub alpha: f64,
    pub criterion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EstimateFlags {
    /// The grid minimum sat at an end of the search interval.
    pub boundary_estimate: bool,
    pub ridge_engaged: bool,
    /// Some coordinate of `p̂0` is negative.
    pub p0_outside_simplex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmmEstimate {
    pub alpha_hat: f64,
    /// Full `p̂0` on `S`; the last coordinate is `1 − Σ` of the others.
    pub p0_hat: Vec<f64>,
    pub se_alpha: f64,
    /// Standard errors for every coordinate of `p̂0`. The last one follows
    /// from the adding-up constraint by the delta method.
    pub se_p0: Vec<f64>,
    pub j_stat: f64,
    pub df: usize,
    pub p_value: f64,
    pub weight_kind: WeightKind,
    pub jacobian: JacobianPlugIn,
    /// First-step `α̃` for the two-step estimator.
    pub first_step_alpha: Option<f64>,
    pub flags: EstimateFlags,
    /// Criterion on the search grid of the final step.
    pub trace: Vec<TracePoint>,
}

impl GmmEstimate {
    /// `p̂0` as a distribution, when it lies in the simplex.
    pub fn p0_dist(&self, s: &Subset) -> Result<Dist> {
        Dist::new(s.clone(), self.p0_hat.clone())
    }
}

fn identity_block(r: usize) -> DMatrix<f64> {
    DMatrix::identity(r, r) + DMatrix::from_element(r, r, 1.0)
}

/// Plug-in blocks `D_i(α)² / π_i · Σ̃(P̂_i)`.
fn omega_blocks(alpha: f64, data: &GmmDataset, ridge: f64) -> (Vec<DMatrix<f64>>, bool) {
    let mut ridged = false;
    let blocks = data
        .regimes
        .iter()
        .zip(data.fractions())
        .map(|(reg, pi)| {
            let (sigma, flag) = multinomial_cov(&reg.shares, ridge);
            ridged |= flag;
            sigma * (normalizer(alpha, reg.share).powi(2) / pi)
        })
        .collect();
    (blocks, ridged)
}

fn invert_blocks(blocks: &[DMatrix<f64>], ridge: f64) -> Result<(Vec<DMatrix<f64>>, bool)> {
    let mut ridged = false;
    let inv = blocks
        .iter()
        .map(|b| {
            let (inv, flag) = spd_inverse(b, ridge)?;
            ridged |= flag;
            Ok(inv)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((inv, ridged))
}

/// Grid search followed by golden-section and a parabolic polish.
fn minimize(
    data: &GmmDataset,
    weights: &[DMatrix<f64>],
    config: &SearchConfig,
) -> Result<(f64, Vec<TracePoint>, bool)> {
    let n = config.grid_points.max(3);
    let step = (config.upper - config.lower) / (n - 1) as f64;
    let trace = (0..n)
        .map(|i| {
            let alpha = config.lower + step * i as f64;
            Ok(TracePoint {
                alpha,
                criterion: concentrated_criterion(alpha, data, weights)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = (0..n)
        .min_by(|&a, &b| trace[a].criterion.total_cmp(&trace[b].criterion))
        .unwrap_or(0);
    let boundary = best == 0 || best == n - 1;

    let f = |a: f64| concentrated_criterion(a, data, weights);
    let (mut lo, mut hi) = (
        trace[best.saturating_sub(1)].alpha,
        trace[(best + 1).min(n - 1)].alpha,
    );
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while hi - lo > config.tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let mut alpha = 0.5 * (lo + hi);
    let value = f(alpha)?;

    // Vertex of the parabola through three well-separated points.
    let h = (1e-3f64).min(0.25 * (config.upper - config.lower));
    let (y0, y2) = (f(alpha - h)?, f(alpha + h)?);
    let curvature = y0 - 2.0 * value + y2;
    if curvature > 0.0 {
        let vertex = alpha - h * (y2 - y0) / (2.0 * curvature);
        if vertex > config.lower && vertex < config.upper && f(vertex)? <= value {
            alpha = vertex;
        }
    }
    Ok((alpha, trace, boundary))
}

/// Stacked `G = ∂m̃/∂(α, p̃0)`, rows `K(m − 1)`, columns `m`.
///
/// Block `i` has `α` column `H((q_{i,S} − 1) P_i + p0 − q_i|_S)` and
/// `p̃0` block `−(1 − α) I`.
pub fn jacobian_g(
    alpha: f64,
    p0: &[f64],
    data: &GmmDataset,
    plug_in: JacobianPlugIn,
) -> DMatrix<f64> {
    let m = data.m();
    let r = m - 1;
    let mut g = DMatrix::zeros(data.k() * r, m);
    for (i, reg) in data.regimes.iter().enumerate() {
        let d = normalizer(alpha, reg.share);
        for x in 0..r {
            let p = match plug_in {
                JacobianPlugIn::Empirical => reg.shares[x],
                JacobianPlugIn::Model => ((1.0 - alpha) * p0[x] + alpha * reg.restriction[x]) / d,
            };
            let row = i * r + x;
            g[(row, 0)] = (reg.share - 1.0) * p + p0[x] - reg.restriction[x];
            g[(row, 1 + x)] = -(1.0 - alpha);
        }
    }
    g
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let size: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(size, size);
    let mut at = 0;
    for b in blocks {
        out.view_mut((at, at), (b.nrows(), b.ncols())).copy_from(b);
        at += b.nrows();
    }
    out
}

fn stack(moments: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        moments.iter().map(|m| m.len()).sum(),
        moments.iter().flat_map(|m| m.iter().copied()),
    )
}

/// Estimates `(α, p0)` by minimizing the concentrated criterion.
///
/// Standard errors use the sandwich `(GᵀWG)⁻¹ GᵀWΩWG (GᵀWG)⁻¹ / N`, which
/// collapses to `(GᵀΩ⁻¹G)⁻¹ / N` for the two-step weight. For the optimal
/// weight `J = N · m̃ᵀ Ω̂⁻¹ m̃`; for the other weights `J` uses the
/// generalized inverse of the asymptotic covariance of `m̃(θ̂)`, so that it
/// is `χ²_df` under the model whatever the weight.
pub fn estimate(
    data: &GmmDataset,
    spec: &WeightSpec,
    config: &SearchConfig,
) -> Result<GmmEstimate> {
    let df = data.degrees_of_freedom()?;
    if spec.ridge.is_nan() || spec.ridge < 0.0 {
        return Err(AwlmError::InvalidParameter(format!(
            "ridge {} < 0",
            spec.ridge
        )));
    }
    let r = data.m() - 1;
    let fractions = data.fractions();
    let fixed: Vec<DMatrix<f64>> = match spec.kind {
        WeightKind::Identity | WeightKind::Optimal => vec![identity_block(r); data.k()],
        WeightKind::SelectorIdentity => vec![DMatrix::identity(r, r); data.k()],
        WeightKind::Proportional => fractions.iter().map(|&pi| identity_block(r) * pi).collect(),
    };
    let mut ridged = false;
    let (mut alpha, mut trace, mut boundary) = minimize(data, &fixed, config)?;
    let mut weights = fixed;
    let mut first_step_alpha = None;
    if spec.kind == WeightKind::Optimal {
        let (omega, flag) = omega_blocks(alpha, data, spec.ridge);
        let (inv, flag2) = invert_blocks(&omega, spec.ridge)?;
        ridged |= flag | flag2;
        first_step_alpha = Some(alpha);
        log::debug!("first-step alpha {alpha}");
        weights = inv;
        (alpha, trace, boundary) = minimize(data, &weights, config)?;
    }

    let p0_reduced = concentrate_p0(alpha, data, &weights)?;
    let mut p0_hat = p0_reduced.clone();
    p0_hat.push(1.0 - p0_reduced.iter().sum::<f64>());
    let moments = reduced_moments(alpha, &p0_reduced, data);
    let n = data.total_n() as f64;

    let g = jacobian_g(alpha, &p0_hat, data, config.jacobian);
    let w = block_diag(&weights);
    let (omega, flag) = omega_blocks(alpha, data, spec.ridge);
    ridged |= flag;
    let omega = block_diag(&omega);
    let gtwg = g.transpose() * &w * &g;
    let (bread, flag) = spd_inverse(&gtwg, spec.ridge)?;
    ridged |= flag;

    let (variance, j_stat) = if spec.kind == WeightKind::Optimal {
        (&bread / n, n * quadratic_form(&moments, &weights))
    } else {
        let meat = g.transpose() * &w * &omega * &w * &g;
        let variance = &bread * meat * &bread / n;
        let mbar = stack(&moments);
        let size = mbar.len();
        let proj = DMatrix::identity(size, size) - &g * &bread * g.transpose() * &w;
        let cov = &proj * &omega * proj.transpose();
        (variance, n * generalized_form(&cov, &mbar, df))
    };

    let se_alpha = variance[(0, 0)].max(0.0).sqrt();
    let mut se_p0: Vec<f64> = (0..r)
        .map(|x| variance[(1 + x, 1 + x)].max(0.0).sqrt())
        .collect();
    let block = variance.view((1, 1), (r, r));
    se_p0.push(block.sum().max(0.0).sqrt());

    let j_stat = j_stat.max(0.0);
    let p0_outside_simplex = p0_hat.iter().any(|&v| v < 0.0);
    Ok(GmmEstimate {
        alpha_hat: alpha,
        p0_hat,
        se_alpha,
        se_p0,
        j_stat,
        df,
        p_value: chi2_upper_tail(j_stat, df),
        weight_kind: spec.kind,
        jacobian: config.jacobian,
        first_step_alpha,
        flags: EstimateFlags {
            boundary_estimate: boundary,
            ridge_engaged: ridged,
            p0_outside_simplex,
        },
        trace,
    })
}

/// `xᵀ V⁺ x` with `V⁺` built from the `rank` largest singular directions.
fn generalized_form(v: &DMatrix<f64>, x: &DVector<f64>, rank: usize) -> f64 {
    if rank == 0 {
        return 0.0;
    }
    let svd = v.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = svd.singular_values[order[0]];
    order
        .into_iter()
        .take(rank)
        .filter(|&k| svd.singular_values[k] > 1e-14 * top)
        .map(|k| {
            let c = u.column(k).dot(x);
            c * c / svd.singular_values[k]
        })
        .sum()
}
