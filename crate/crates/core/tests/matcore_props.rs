use lrcs::ensembles::{gen_random_orthogonal_lowrank, gen_sparse, rng, Amplitude, SparsityMode};
use lrcs::matcore::{
    lipschitz_constant, norm, pinv, proj_omega, proj_phi, soft_threshold, svd, svt, sym_eigenvalues, NormKind,
};
use lrcs::DenseMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut g = rng(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| g.sample(StandardNormal))
}

fn dims() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..9, 1usize..9, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs((m, n, seed) in dims()) {
        let a = gaussian(m, n, seed);
        let f = svd(&a, 1e-9).unwrap();
        prop_assert!((&f.reconstruct() - &a).max_abs() <= 1e-8 * (1.0 + a.max_abs()));
        prop_assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn norm_ordering((m, n, seed) in dims()) {
        let a = gaussian(m, n, seed);
        let (spec, fro, nuc) = (norm(&a, NormKind::Spectral), norm(&a, NormKind::Frobenius), norm(&a, NormKind::Nuclear));
        prop_assert!(spec <= fro + 1e-12 && fro <= nuc + 1e-12);
        prop_assert!(norm(&a, NormKind::LinfEntrywise) <= spec + 1e-12);
        prop_assert!((norm(&a, NormKind::InducedOne) - norm(&a.transpose(), NormKind::InducedInf)).abs() < 1e-12);
    }

    #[test]
    fn tangent_projector_is_an_orthogonal_projector((m, n, seed) in dims(), rank_pick in 1usize..4) {
        let rank = rank_pick.min(m).min(n);
        let (_, spaces) = gen_random_orthogonal_lowrank(m, n, rank, &vec![1.0; rank], seed).unwrap();
        let x = gaussian(m, n, seed ^ 1);
        let w = gaussian(m, n, seed ^ 2);
        let p = proj_phi(&x, &spaces, false).unwrap();
        let q = proj_phi(&x, &spaces, true).unwrap();
        prop_assert!((&proj_phi(&p, &spaces, false).unwrap() - &p).max_abs() <= 1e-10);
        prop_assert!((&(&p + &q) - &x).max_abs() <= 1e-12);
        prop_assert!(p.inner(&q).abs() <= 1e-10);
        let lhs = p.inner(&w);
        let rhs = x.inner(&proj_phi(&w, &spaces, false).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10);
        // UVᵀ lies in the tangent space.
        let uv = spaces.uv();
        prop_assert!((&proj_phi(&uv, &spaces, false).unwrap() - &uv).max_abs() <= 1e-12);
    }

    #[test]
    fn support_projector_partitions((m, n, seed) in dims(), pi in 0.0f64..1.0) {
        let x = gaussian(m, n, seed);
        let (_, s) = gen_sparse(m, n, SparsityMode::Bernoulli(pi), Amplitude::Signs, seed).unwrap();
        let p = proj_omega(&x, &s, false).unwrap();
        let q = proj_omega(&x, &s, true).unwrap();
        prop_assert_eq!(&(&p + &q), &x);
        prop_assert_eq!(proj_omega(&p, &s, false).unwrap(), p.clone());
        prop_assert_eq!(p.inner(&q), 0.0);
    }

    #[test]
    fn soft_threshold_is_nonexpansive((m, n, seed) in dims(), tau in 0.0f64..2.0) {
        let a = gaussian(m, n, seed);
        let b = gaussian(m, n, seed ^ 7);
        let d = (&soft_threshold(&a, tau).unwrap() - &soft_threshold(&b, tau).unwrap()).frobenius();
        prop_assert!(d <= (&a - &b).frobenius() + 1e-12);
    }

    #[test]
    fn svt_shrinks_singular_values((m, n, seed) in dims(), tau in 0.0f64..2.0) {
        let a = gaussian(m, n, seed);
        let expect: Vec<f64> = svd(&a, 0.0).unwrap().sigma.iter().map(|s| (s - tau).max(0.0)).collect();
        let got = svd(&svt(&a, tau).unwrap(), 0.0).unwrap().sigma;
        for (g, e) in got.iter().zip(&expect) {
            prop_assert!((g - e).abs() <= 1e-9);
        }
        let b = gaussian(m, n, seed ^ 3);
        let d = (&svt(&a, tau).unwrap() - &svt(&b, tau).unwrap()).frobenius();
        prop_assert!(d <= (&a - &b).frobenius() + 1e-9);
    }

    #[test]
    fn pinv_satisfies_penrose_conditions((m, n, seed) in dims()) {
        let a = gaussian(m, n, seed);
        let p = pinv(&a, 1e-10).unwrap();
        let tol = 1e-8 * (1.0 + a.max_abs() * p.max_abs());
        prop_assert!((&(&(&a * &p) * &a) - &a).max_abs() <= tol);
        prop_assert!((&(&(&p * &a) * &p) - &p).max_abs() <= tol * (1.0 + p.max_abs()));
        let ap = &a * &p;
        prop_assert!((&ap - &ap.transpose()).max_abs() <= tol);
    }

    #[test]
    fn csv_round_trip((m, n, seed) in dims()) {
        let a = gaussian(m, n, seed).scale(1e3);
        let back = DenseMatrix::parse_csv(&a.to_csv(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, a);
    }
}

/// Subgradient descent on `½‖X − M‖² + τ‖X‖_*`, an oracle that
/// never forms the closed-form shrinkage.
fn svt_oracle(m: &DenseMatrix, tau: f64) -> DenseMatrix {
    let mut x = m.clone();
    let mut best = x.clone();
    let objective = |x: &DenseMatrix| 0.5 * (x - m).frobenius().powi(2) + tau * norm(x, NormKind::Nuclear);
    let mut best_obj = objective(&x);
    for k in 0..20_000 {
        let f = svd(&x, 1e-12).unwrap();
        let keep: Vec<usize> = (0..f.rank()).collect();
        let sub = &f.u.select_cols(&keep) * &f.v.select_cols(&keep).transpose();
        let grad = &(&x - m) + &sub.scale(tau);
        let step = 1.0 / (2.0 + k as f64);
        x = &x - &grad.scale(step);
        let o = objective(&x);
        if o < best_obj {
            best_obj = o;
            best = x.clone();
        }
    }
    best
}

#[test]
fn svt_matches_subgradient_oracle() {
    for seed in 0..3 {
        let m = gaussian(3, 3, 100 + seed);
        let tau = 0.7;
        let closed = svt(&m, tau).unwrap();
        let oracle = svt_oracle(&m, tau);
        let objective = |x: &DenseMatrix| 0.5 * (x - &m).frobenius().powi(2) + tau * norm(x, NormKind::Nuclear);
        assert!(objective(&closed) <= objective(&oracle) + 1e-9);
        assert!((&closed - &oracle).max_abs() < 1e-2, "seed {seed}");
        // Exact optimality: (M − X)/τ must be a subgradient of ‖·‖_* at X,
        // i.e. have spectral norm ≤ 1 and inner product ‖X‖_* with X.
        let z = (&m - &closed).scale(1.0 / tau);
        assert!(norm(&z, NormKind::Spectral) <= 1.0 + 1e-10);
        assert!((z.inner(&closed) - norm(&closed, NormKind::Nuclear)).abs() <= 1e-10);
    }
}

#[test]
fn lipschitz_matches_assembled_gram() {
    let r = gaussian(4, 8, 17);
    // Gram of the map (X, A) ↦ X + R·A on 4×1 columns: [I R; Rᵀ RᵀR].
    let n = 4 + 8;
    let gram = DenseMatrix::from_fn(n, n, |i, j| match (i < 4, j < 4) {
        (true, true) => f64::from(u8::from(i == j)),
        (true, false) => r.get(i, j - 4),
        (false, true) => r.get(j, i - 4),
        (false, false) => (0..4).map(|k| r.get(k, i - 4) * r.get(k, j - 4)).sum(),
    });
    let top = sym_eigenvalues(&gram).unwrap().into_iter().fold(f64::MIN, f64::max);
    assert!((lipschitz_constant(&r) - top).abs() <= 1e-10);
}
