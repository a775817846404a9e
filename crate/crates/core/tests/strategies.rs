use noarb_core::characteristics::extract;
use noarb_core::grid::TimeGrid;
use noarb_core::models::{AuxSeries, ModelSpec, PathBundle};
use noarb_core::strategies::{increasing_profit_strategy, integrate, market_price_strategy, Strategy};
use proptest::prelude::*;

const N: usize = 12;

fn bundle(paths: &[Vec<f64>]) -> PathBundle {
    let prices: Vec<f64> = paths.concat();
    let ids = (0..paths.len() as u64).collect();
    // a signed driver so the zero-band strategy has something to look at
    let aux = AuxSeries { name: "N", values: prices.iter().map(|s| s - 2.5).collect() };
    let noise = vec![0.0; paths.len() * N];
    PathBundle::from_parts(TimeGrid::uniform(1.0, N).unwrap(), 1, 1, ids, prices, noise, Some(aux), 3).unwrap()
}

fn strat(label: &str, b: &PathBundle, h: Vec<f64>) -> Strategy {
    Strategy::new(label, 0.0, N, 1, b.path_ids().to_vec(), h).unwrap()
}

fn price_paths(n_paths: usize) -> impl proptest::strategy::Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.2f64..5.0, N + 1), n_paths)
}

fn positions(n_paths: usize) -> impl proptest::strategy::Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, n_paths * N)
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-11 * (1.0 + x.abs().max(y.abs())))
}

proptest! {
    #[test]
    fn gains_are_linear(s in price_paths(3), h1 in positions(3), h2 in positions(3), a in -3.0f64..3.0) {
        let b = bundle(&s);
        let mix: Vec<f64> = h1.iter().zip(&h2).map(|(x, y)| a * x + y).collect();
        let g1 = integrate(&strat("h1", &b, h1), &b).unwrap();
        let g2 = integrate(&strat("h2", &b, h2), &b).unwrap();
        let gm = integrate(&strat("mix", &b, mix), &b).unwrap();
        let expect: Vec<f64> = g1.gains().iter().zip(g2.gains()).map(|(x, y)| a * x + y).collect();
        prop_assert!(close(gm.gains(), &expect));
    }

    #[test]
    fn scaling_multiplies_gains(s in price_paths(2), h in positions(2), n in 0.5f64..50.0) {
        let b = bundle(&s);
        let base = strat("h", &b, h);
        let g = integrate(&base, &b).unwrap();
        let gs = integrate(&base.scaled(n).unwrap(), &b).unwrap();
        let expect: Vec<f64> = g.gains().iter().map(|x| n * x).collect();
        prop_assert!(close(gs.gains(), &expect));
    }

    /// `∫H d(∫K dS) = ∫HK dS`.
    #[test]
    fn integrals_compose(s in price_paths(2), h in positions(2), k in positions(2)) {
        let b = bundle(&s);
        let gk = integrate(&strat("k", &b, k.clone()), &b).unwrap();
        let inner: Vec<Vec<f64>> = (0..2).map(|p| gk.path(p).to_vec()).collect();
        let bk = bundle(&inner);
        let outer = integrate(&strat("h", &bk, h.clone()), &bk).unwrap();
        let hk: Vec<f64> = h.iter().zip(&k).map(|(x, y)| x * y).collect();
        let direct = integrate(&strat("hk", &b, hk), &b).unwrap();
        prop_assert!(close(outer.gains(), direct.gains()));
    }

    /// Positions at step k never look at prices after step k.
    #[test]
    fn strategies_are_predictable(s in price_paths(2), cut in 1usize..N, bump in 0.5f64..2.0) {
        let b = bundle(&s);
        let mut future = s.clone();
        for path in &mut future {
            for x in &mut path[cut + 1..] {
                *x *= bump;
            }
        }
        let bf = bundle(&future);
        let spec = ModelSpec::BlackScholes { mu: 0.05, sigma: 0.2, s0: 1.0 };
        let pairs = [
            (
                market_price_strategy(&extract(&spec, &b).unwrap(), 0.0).unwrap(),
                market_price_strategy(&extract(&spec, &bf).unwrap(), 0.0).unwrap(),
            ),
            (increasing_profit_strategy(&b, 0.3).unwrap(), increasing_profit_strategy(&bf, 0.3).unwrap()),
        ];
        for (x, y) in &pairs {
            for p in 0..2 {
                for k in 0..=cut {
                    prop_assert_eq!(x.position(p, k), y.position(p, k));
                }
            }
        }
    }
}

#[test]
fn constant_position_earns_price_change() {
    let b = bundle(&[(0..=N).map(|k| 1.0 + k as f64 * 0.5).collect()]);
    let g = integrate(&Strategy::constant(&b, 2.0, 0.0).unwrap(), &b).unwrap();
    assert!((g.terminal()[0] - 2.0 * 0.5 * N as f64).abs() < 1e-12);
    assert_eq!(g.floor_violations, 0);
}

#[test]
fn floor_breaches_are_counted_not_clamped() {
    let down: Vec<f64> = (0..=N).map(|k| 5.0 - 0.4 * k as f64).collect();
    let b = bundle(&[down]);
    let h = Strategy::new("long", 1.0, N, 1, vec![0], vec![1.0; N]).unwrap();
    let g = integrate(&h, &b).unwrap();
    assert!((g.terminal()[0] + 0.4 * N as f64).abs() < 1e-12);
    assert_eq!(g.floor_violations, 1);
}
