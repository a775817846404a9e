use noarb_core::characteristics::extract;
use noarb_core::deflators::{
    compose_deflator, increment_test, minimal_deflator, numeraire_change, tradability_check, transform_deflator,
    DeflatorConfig, DeflatorScheme, IncrementTestConfig, MartingaleKind,
};
use noarb_core::grid::TimeGrid;
use noarb_core::models::{simulate, simulate_bes3, ModelSpec};
use noarb_core::stats::mean_se;

const SEED: u64 = 99;

fn black_scholes() -> ModelSpec {
    ModelSpec::BlackScholes { mu: 0.05, sigma: 0.2, s0: 1.0 }
}

#[test]
fn black_scholes_deflator_matches_closed_form() {
    // Ẑ_t = exp(−(μ/σ)W_t − ½(μ/σ)²t) with W read back from the path
    let (mu, sigma) = (0.05, 0.2);
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let b = simulate(&black_scholes(), &grid, 200, SEED).unwrap();
    let ch = extract(&black_scholes(), &b).unwrap();
    let z = minimal_deflator(&ch, &b, &DeflatorConfig::default()).unwrap();
    let th = mu / sigma;
    for p in 0..b.n_paths() {
        for (k, &t) in grid.times().iter().enumerate() {
            let w = ((b.price(p, k, 0)).ln() - (mu - 0.5 * sigma * sigma) * t) / sigma;
            let exact = (-th * w - 0.5 * th * th * t).exp();
            assert!((z.value(p, k) / exact - 1.0).abs() < 1e-10, "path {p} step {k}");
        }
    }
}

#[test]
fn bessel_deflator_is_the_reciprocal_price() {
    let grid = TimeGrid::uniform(1.0, 256).unwrap();
    let spec = ModelSpec::PowerVol { mu_exp: -1.0, s0: 1.0 };
    let b = simulate_bes3(1.0, &grid, 100, SEED).unwrap();
    let ch = extract(&spec, &b).unwrap();
    let z = minimal_deflator(&ch, &b, &DeflatorConfig::default()).unwrap();
    for p in 0..b.n_paths() {
        for k in 0..=grid.n_steps() {
            assert!((z.value(p, k) * b.price(p, k, 0) - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn schemes_agree_on_a_smooth_model() {
    let grid = TimeGrid::uniform(1.0, 512).unwrap();
    let b = simulate(&black_scholes(), &grid, 50, SEED).unwrap();
    let ch = extract(&black_scholes(), &b).unwrap();
    let run = |scheme| {
        minimal_deflator(&ch, &b, &DeflatorConfig { scheme, ..DeflatorConfig::default() }).unwrap().terminal()
    };
    let (pot, mil, eul) = (run(DeflatorScheme::Potential), run(DeflatorScheme::Milstein), run(DeflatorScheme::Euler));
    for p in 0..b.n_paths() {
        assert!((mil[p] / pot[p] - 1.0).abs() < 1e-3);
        assert!((eul[p] / pot[p] - 1.0).abs() < 2e-2);
    }
}

#[test]
fn deflator_is_a_nonnegative_supermartingale() {
    let grid = TimeGrid::uniform(1.0, 128).unwrap();
    for spec in [black_scholes(), ModelSpec::PowerVol { mu_exp: -0.5, s0: 1.0 }] {
        let b = simulate(&spec, &grid, 4000, SEED).unwrap();
        let z = minimal_deflator(&extract(&spec, &b).unwrap(), &b, &DeflatorConfig::default()).unwrap();
        assert!(z.values().iter().all(|&x| x >= 0.0));
        let m = z.mean_terminal();
        assert!(m.mean <= 1.0 + 3.0 * m.se, "{}: {m:?}", spec.name());
    }
}

#[test]
fn composed_deflator_keeps_unit_mean() {
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let b = simulate(&black_scholes(), &grid, 6000, SEED).unwrap();
    let z = minimal_deflator(&extract(&black_scholes(), &b).unwrap(), &b, &DeflatorConfig::default()).unwrap();
    let zc = compose_deflator(&z, &grid, 0.5).unwrap();
    let m = zc.mean_terminal();
    assert!((m.mean - 1.0).abs() <= 4.0 * m.se, "{m:?}");
    // the product is still a deflator for S
    let zs = mean_se((0..b.n_paths()).map(|p| zc.value(p, 64) * b.price(p, 64, 0)));
    assert!((zs.mean - 1.0).abs() <= 4.0 * zs.se, "{zs:?}");
    assert_ne!(zc.values(), z.values());
}

#[test]
fn inverse_deflator_is_tradable() {
    // V(1, λ/Ẑ) tracks 1/Ẑ and the error shrinks with the step
    let mut rms = Vec::new();
    for n in [256, 1024] {
        let grid = TimeGrid::uniform(1.0, n).unwrap();
        let b = simulate(&black_scholes(), &grid, 400, SEED).unwrap();
        let ch = extract(&black_scholes(), &b).unwrap();
        let z = minimal_deflator(&ch, &b, &DeflatorConfig::default()).unwrap();
        rms.push(tradability_check(&z, &ch, &b).unwrap().rms());
    }
    assert!(rms[0] < 5e-3, "{rms:?}");
    assert!(rms[1] < rms[0] / 1.5, "{rms:?}");
}

#[test]
fn deflated_price_splits_by_parts() {
    // Z_nS_n − Z_0S_0 = Σ Z_k ΔS_k + Σ S_k ΔZ_k + Σ ΔZ_k ΔS_k
    let grid = TimeGrid::uniform(1.0, 32).unwrap();
    let b = simulate(&black_scholes(), &grid, 20, SEED).unwrap();
    let z = minimal_deflator(&extract(&black_scholes(), &b).unwrap(), &b, &DeflatorConfig::default()).unwrap();
    let zs = z.products(&b).unwrap();
    for p in 0..b.n_paths() {
        let mut sum = 0.0;
        for k in 0..32 {
            let (z0, z1) = (z.value(p, k), z.value(p, k + 1));
            let (s0, s1) = (b.price(p, k, 0), b.price(p, k + 1, 0));
            sum += z0 * (s1 - s0) + s0 * (z1 - z0) + (z1 - z0) * (s1 - s0);
        }
        let w = 33;
        assert!((zs[0][p * w + 32] - zs[0][p * w] - sum).abs() < 1e-12);
    }
}

#[test]
fn numeraire_identity() {
    // (Z·V)(S/V) = Z·S and (Z·V)(1/V) = Z
    let grid = TimeGrid::uniform(1.0, 40).unwrap();
    let b = simulate(&black_scholes(), &grid, 30, SEED).unwrap();
    let z = minimal_deflator(&extract(&black_scholes(), &b).unwrap(), &b, &DeflatorConfig::default()).unwrap();
    let v: Vec<f64> = (0..b.n_paths()).flat_map(|p| (0..=40).map(move |k| 1.0 + 0.01 * (p * k) as f64)).collect();
    let changed = numeraire_change(&b, &v).unwrap();
    assert_eq!(changed.n_flagged(), 0);
    let z2 = transform_deflator(&z, &v).unwrap();
    let cb = &changed.bundle;
    for p in 0..b.n_paths() {
        for k in 0..=40 {
            let zs = z.value(p, k) * b.price(p, k, 0);
            assert!((z2.value(p, k) * cb.price(p, k, 0) - zs).abs() <= 1e-13 * zs.abs().max(1.0));
            assert!((z2.value(p, k) * cb.price(p, k, 1) - z.value(p, k)).abs() <= 1e-13);
        }
    }
}

#[test]
fn increment_test_separates_martingale_from_drift() {
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let b = simulate(&black_scholes(), &grid, 4000, SEED).unwrap();
    let z = minimal_deflator(&extract(&black_scholes(), &b).unwrap(), &b, &DeflatorConfig::default()).unwrap();
    let times = grid.times();
    let cfg = IncrementTestConfig::default();
    let zs = z.products(&b).unwrap();
    assert_eq!(increment_test(&zs[0], times, &cfg).unwrap().kind, MartingaleKind::MartingaleConsistent);
    // undeflated S drifts up at rate μ
    assert_eq!(increment_test(b.prices(), times, &cfg).unwrap().kind, MartingaleKind::Rejected);
}
