use awlm::gmm::{jacobian_g, moment, reduce, GmmDataset, JacobianPlugIn};
use awlm::ident::{phi_jacobian, Design};
use awlm::{Dist, MenuPair, Universe};
use proptest::prelude::*;

const H: f64 = 1e-6;

fn interior(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        let n = raw.len() as f64;
        raw.iter()
            .map(|v| 0.03 + (1.0 - 0.03 * n) * v / total)
            .collect()
    })
}

fn frame() -> (Universe, MenuPair) {
    let u = Universe::new(["a", "b", "c", "d", "e"]).unwrap();
    let menu = MenuPair::new(u.subset(&["a", "b", "c", "d"]).unwrap(), u.full()).unwrap();
    (u, menu)
}

/// Central differences along `α` and along `e_k − e_m` in `p0`.
fn numeric(alpha: f64, p0: &[f64], f: impl Fn(f64, &[f64]) -> Vec<f64>) -> Vec<Vec<f64>> {
    let central =
        |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * H)).collect();
    let m = p0.len();
    let mut cols = vec![central(f(alpha + H, p0), f(alpha - H, p0))];
    for k in 0..m - 1 {
        let (mut up, mut down) = (p0.to_vec(), p0.to_vec());
        up[k] += H;
        up[m - 1] -= H;
        down[k] -= H;
        down[m - 1] += H;
        cols.push(central(f(alpha, &up), f(alpha, &down)));
    }
    cols
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn forward_map_jacobian(alpha in 0.05f64..0.95, p0 in interior(4), qs in prop::collection::vec(interior(5), 2..5)) {
        let (u, menu) = frame();
        let s = menu.feasible().clone();
        let design = Design::new(menu, qs.iter().map(|q| Dist::new(u.full(), q.clone()).unwrap()).collect()).unwrap();
        let jac = phi_jacobian(alpha, &Dist::new(s.clone(), p0.clone()).unwrap(), &design).unwrap();
        let cols = numeric(alpha, &p0, |a, p| {
            let p = Dist::new(s.clone(), p.to_vec()).unwrap();
            design.forward(a, &p).unwrap().iter().flat_map(|d| d.masses().to_vec()).collect()
        });
        for (c, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                prop_assert!((jac[(r, c)] - v).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn moment_jacobian(alpha in 0.05f64..0.95, p0 in interior(4), shares in prop::collection::vec(interior(4), 3), qs in prop::collection::vec(interior(5), 3)) {
        let (u, menu) = frame();
        let s = menu.feasible().clone();
        let data = GmmDataset::from_shares(
            menu,
            qs.iter().zip(&shares).map(|(q, p)| (Dist::new(u.full(), q.clone()).unwrap(), p.clone(), 50)).collect(),
        ).unwrap();
        let g = jacobian_g(alpha, &p0, &data, JacobianPlugIn::Empirical);
        let cols = numeric(alpha, &p0, |a, p| {
            data.regimes().iter().flat_map(|r| reduce(&moment(a, p, &r.shares, &r.exposure, &s))).collect()
        });
        for (c, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                prop_assert!((g[(r, c)] - v).abs() <= 1e-6);
            }
        }
    }
}
