use noarb_core::linalg::{decompose, mat_mul, mat_vec, pinv, range_project, SymMatrix};
use proptest::prelude::*;

fn frob(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `B Bᵀ` for `B` of size `dim × rank`, read row-major from `entries`.
fn gram(dim: usize, rank: usize, entries: &[f64]) -> SymMatrix {
    let mut c = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            c[i * dim + j] = (0..rank).map(|r| entries[i * rank + r] * entries[j * rank + r]).sum();
        }
    }
    SymMatrix::symmetric(dim, c).unwrap()
}

fn psd_case() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
    (1usize..=6).prop_flat_map(|dim| {
        (
            Just(dim),
            0..=dim,
            prop::collection::vec(-3.0f64..3.0, dim * dim),
            prop::collection::vec(-5.0f64..5.0, dim),
        )
    })
}

/// Relative accuracy a backward-stable pseudoinverse can reach on `c`.
fn attainable(c: &SymMatrix) -> f64 {
    let (ev, _) = c.eigen();
    let top = ev.iter().copied().fold(0.0, f64::max);
    let bottom = ev.iter().copied().filter(|&e| e > 1e-9 * top).fold(f64::INFINITY, f64::min);
    if top == 0.0 {
        return 1e-14;
    }
    (1e-14 * top / bottom).max(1e-14)
}

proptest! {
    #[test]
    fn penrose_conditions((dim, rank, b, _a) in psd_case()) {
        let c = gram(dim, rank, &b);
        let p = pinv(&c).unwrap();
        let (cs, ps) = (c.as_slice(), p.as_slice());
        let tol = 100.0 * attainable(&c);
        let cp = mat_mul(dim, cs, ps);
        let pc = mat_mul(dim, ps, cs);
        let nc = frob(cs).max(1e-300);
        let np = frob(ps).max(1e-300);
        prop_assert!(frob(&sub(&mat_mul(dim, &cp, cs), cs)) <= tol * nc);
        prop_assert!(frob(&sub(&mat_mul(dim, &pc, ps), ps)) <= tol * np.max(1.0));
        for i in 0..dim {
            for j in 0..dim {
                prop_assert!((cp[i * dim + j] - cp[j * dim + i]).abs() <= tol);
                prop_assert!((pc[i * dim + j] - pc[j * dim + i]).abs() <= tol);
            }
        }
    }

    #[test]
    fn kernel_decomposition((dim, rank, b, a) in psd_case()) {
        let c = gram(dim, rank, &b);
        let d = decompose(&c, &a).unwrap();
        let tol = 100.0 * attainable(&c);
        let scale = frob(&a).max(1.0);
        let recon: Vec<f64> = c.mul_vec(&d.lambda).iter().zip(&d.nu).map(|(x, y)| x + y).collect();
        prop_assert!(frob(&sub(&recon, &a)) <= tol * scale);
        // ν is in the kernel and orthogonal to the range
        prop_assert!(frob(&c.mul_vec(&d.nu)) <= tol * scale * frob(c.as_slice()).max(1.0));
        let proj = range_project(&c, &d.nu).unwrap();
        prop_assert!(frob(&proj) <= tol * scale);
        let quad: f64 = d.lambda.iter().zip(c.mul_vec(&d.lambda)).map(|(l, cl)| l * cl).sum();
        prop_assert!(d.quad >= 0.0);
        prop_assert!((d.quad - quad).abs() <= tol * quad.abs().max(1.0));
    }

    /// `λ = c⁺a` has the least norm among all `x` with `cx = cλ`.
    #[test]
    fn lambda_is_minimal((dim, rank, b, a) in psd_case(), k in prop::collection::vec(-1.0f64..1.0, 6)) {
        let c = gram(dim, rank, &b);
        let d = decompose(&c, &a).unwrap();
        // any kernel direction: k minus its range projection
        let k = &k[..dim];
        let ker = sub(k, &range_project(&c, k).unwrap());
        let other: Vec<f64> = d.lambda.iter().zip(&ker).map(|(l, z)| l + z).collect();
        let tol = 100.0 * attainable(&c) * frob(&d.lambda).max(1.0);
        prop_assert!(frob(&d.lambda) <= frob(&other) + tol);
        let p = pinv(&c).unwrap();
        let pc = mat_mul(dim, p.as_slice(), c.as_slice());
        prop_assert!(frob(&sub(&mat_vec(dim, &pc, &d.lambda), &d.lambda)) <= tol);
    }
}

#[test]
fn full_rank_pinv_is_the_inverse() {
    let c = SymMatrix::new(2, vec![2.0, 1.0, 1.0, 3.0]).unwrap();
    let p = pinv(&c).unwrap();
    let expect = [0.6, -0.2, -0.2, 0.4];
    for (x, y) in p.as_slice().iter().zip(expect) {
        assert!((x - y).abs() < 1e-14);
    }
}

#[test]
fn rank_one_drift_split() {
    // c = u uᵀ with u = (1, 1); a = (3, 1) splits into range (2, 2) and kernel (1, −1)
    let c = SymMatrix::new(2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
    let d = decompose(&c, &[3.0, 1.0]).unwrap();
    assert!((d.lambda[0] - 1.0).abs() < 1e-12 && (d.lambda[1] - 1.0).abs() < 1e-12);
    assert!((d.nu[0] - 1.0).abs() < 1e-12 && (d.nu[1] + 1.0).abs() < 1e-12);
    assert!((d.quad - 4.0).abs() < 1e-12);
}
