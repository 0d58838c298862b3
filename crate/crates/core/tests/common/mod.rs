//! Fixtures shared by the integration suites and the acceptance harness.
#![allow(dead_code)]

use awlm::gmm::{estimate, GmmDataset, GmmEstimate, SearchConfig, WeightKind, WeightSpec};
use awlm::model::awlm_choice;
use awlm::sim::{simulate_dataset, FailureRule, RegimeSpec, RngSeed};
use awlm::{Dist, LuceWeights, MenuPair, ModelParams, Universe};
use rand::Rng;

/// Universe `{a, b, c}` with `S = {a, b}`, `α = 2/5`, `p0 = (3/4, 1/4)`.
pub struct Binary {
    pub u: Universe,
    pub menu: MenuPair,
    pub p0: Dist,
    pub alpha: f64,
}

pub fn binary() -> Binary {
    let u = Universe::new(["a", "b", "c"]).unwrap();
    let menu = MenuPair::new(u.subset(&["a", "b"]).unwrap(), u.full()).unwrap();
    let p0 = u.dist(&[("a", 0.75), ("b", 0.25)]).unwrap();
    Binary {
        u,
        menu,
        p0,
        alpha: 0.4,
    }
}

impl Binary {
    pub fn q(&self, a: f64, b: f64, c: f64) -> Dist {
        self.u.dist(&[("a", a), ("b", b), ("c", c)]).unwrap()
    }

    pub fn choice(&self, q: &Dist) -> Dist {
        awlm_choice(&self.p0, q, self.alpha, self.menu.feasible()).unwrap()
    }
}

/// Restrictions and shares of the three-regime minimum-distance example.
pub const MD_RESTRICTIONS: [[f64; 3]; 3] = [[0.4, 0.2, 0.1], [0.3, 0.1, 0.2], [0.25, 0.25, 0.25]];
pub const MD_COUNTS: [[f64; 3]; 3] = [[19.0, 18.0, 23.0], [18.0, 15.0, 27.0], [15.0, 19.0, 26.0]];

pub fn md_example() -> GmmDataset {
    let u = Universe::new(["x", "y", "z", "o"]).unwrap();
    let menu = MenuPair::new(u.subset(&["x", "y", "z"]).unwrap(), u.full()).unwrap();
    let regimes = MD_RESTRICTIONS
        .iter()
        .zip(MD_COUNTS)
        .map(|(v, c)| {
            let rest = 1.0 - v.iter().sum::<f64>();
            let q = Dist::new(u.full(), vec![v[0], v[1], v[2], rest]).unwrap();
            (q, c.iter().map(|x| x / 60.0).collect(), 60)
        })
        .collect();
    GmmDataset::from_shares(menu, regimes).unwrap()
}

/// Monte Carlo design: `S = {a, b, c}` inside `{a, b, c, d}`, `α = 1/2`,
/// `p0 = (0.5, 0.3, 0.2)`, four regimes whose restrictions spread the
/// feasible share over `{1, 0.1, 0.7, 0.4}`.
pub struct McDesign {
    pub params: ModelParams,
    pub menu: MenuPair,
    pub exposures: Vec<Dist>,
    pub p0: [f64; 3],
}

pub fn mc_design() -> McDesign {
    let u = Universe::new(["a", "b", "c", "d"]).unwrap();
    let menu = MenuPair::new(u.subset(&["a", "b", "c"]).unwrap(), u.full()).unwrap();
    let exposures = [
        [0.8, 0.1, 0.1, 0.0],
        [0.02, 0.06, 0.02, 0.9],
        [0.1, 0.5, 0.1, 0.3],
        [0.05, 0.05, 0.3, 0.6],
    ]
    .iter()
    .map(|q| Dist::new(u.full(), q.to_vec()).unwrap())
    .collect();
    let weights = LuceWeights::new(vec![5.0, 3.0, 2.0, 1.0]).unwrap();
    McDesign {
        params: ModelParams::new(0.5, weights).unwrap(),
        menu,
        exposures,
        p0: [0.5, 0.3, 0.2],
    }
}

impl McDesign {
    pub fn specs(&self, n: u64) -> Vec<RegimeSpec> {
        self.exposures
            .iter()
            .map(|q| RegimeSpec {
                menu: self.menu.clone(),
                exposure: q.clone(),
                n,
            })
            .collect()
    }

    pub fn replicate(&self, n: u64, seed: u64, rule: FailureRule, kind: WeightKind) -> GmmEstimate {
        let data = simulate_dataset(&self.params, &self.specs(n), RngSeed(seed), rule).unwrap();
        let data = GmmDataset::from_simulated(&data).unwrap();
        estimate(&data, &WeightSpec::new(kind), &SearchConfig::default()).unwrap()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McSummary {
    pub median_abs_error: f64,
    pub coverage: f64,
    pub rejection_rate: f64,
}

/// Replications run on disjoint seeds `seed_base + r`, spread over threads.
pub fn monte_carlo(
    design: &McDesign,
    n: u64,
    reps: u64,
    rule: FailureRule,
    seed_base: u64,
) -> McSummary {
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(8) as u64;
    let estimates: Vec<GmmEstimate> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || {
                    (0..reps)
                        .filter(|r| r % threads == t)
                        .map(|r| design.replicate(n, seed_base + r, rule, WeightKind::Optimal))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().unwrap())
            .collect()
    });
    let alpha = design.params.alpha();
    let mut errors: Vec<f64> = estimates
        .iter()
        .map(|e| (e.alpha_hat - alpha).abs())
        .collect();
    errors.sort_by(f64::total_cmp);
    let k = errors.len();
    let median_abs_error = if k % 2 == 1 {
        errors[k / 2]
    } else {
        0.5 * (errors[k / 2 - 1] + errors[k / 2])
    };
    let covered = estimates
        .iter()
        .filter(|e| (e.alpha_hat - alpha).abs() <= 2.0 * e.se_alpha)
        .count();
    let rejected = estimates.iter().filter(|e| e.p_value < 0.05).count();
    McSummary {
        median_abs_error,
        coverage: covered as f64 / k as f64,
        rejection_rate: rejected as f64 / k as f64,
    }
}

/// A random interior distribution over `n` cells with every mass at least
/// `floor`.
pub fn random_interior<R: Rng>(rng: &mut R, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter()
        .map(|v| floor + (1.0 - floor * n as f64) * v / total)
        .collect()
}
