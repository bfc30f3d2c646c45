use lrcs::ensembles::{
    gen_bilinear_lowrank, gen_compression, gen_sparse, random_permutation, rng, Amplitude, CompressionMode,
    SparsityMode,
};
use lrcs::expharness::{make_instance, relative_error};
use lrcs::matcore::{singular_values, sym_eigen};
use lrcs::solvers::{
    admm_solve, apg_solve, cs_solve, evaluate, ls_pcp_baseline, Decomposition, RidgeInverse, SolverConfig, StopReason,
};
use lrcs::DenseMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut g = rng(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| g.sample(StandardNormal))
}

/// Solves `(RᵀR + I)B = W` through the eigendecomposition of `RᵀR + I`.
fn ridge_oracle(r: &DenseMatrix, w: &DenseMatrix) -> DenseMatrix {
    let n = r.cols();
    let m = &(&r.transpose() * r) + &DenseMatrix::identity(n);
    let (vals, vecs) = sym_eigen(&m).unwrap();
    let coef = &vecs.transpose() * w;
    let scaled = DenseMatrix::from_fn(n, w.cols(), |i, j| coef.get(i, j) / vals[i]);
    &vecs * &scaled
}

#[test]
fn ridge_inverse_solves_the_normal_system() {
    let shapes = [(5, 12), (12, 5), (7, 7), (1, 9)];
    for (k, &(l, f)) in shapes.iter().enumerate() {
        let r = gaussian(l, f, 40 + k as u64);
        let w = gaussian(f, 6, 50 + k as u64);
        let b = RidgeInverse::new(&r).unwrap().apply(&w);
        let m = &(&r.transpose() * &r) + &DenseMatrix::identity(f);
        let residual = (&(&m * &b) - &w).frobenius();
        assert!(residual <= 1e-9 * w.frobenius(), "shape {l}x{f}: residual {residual:e}");
        assert!((&b - &ridge_oracle(&r, &w)).max_abs() <= 1e-10);
    }
    // Rank-deficient R: duplicate columns.
    let base = gaussian(4, 3, 7);
    let r = DenseMatrix::from_fn(4, 6, |i, j| base.get(i, j % 3));
    let w = gaussian(6, 2, 8);
    let b = RidgeInverse::new(&r).unwrap().apply(&w);
    let m = &(&r.transpose() * &r) + &DenseMatrix::identity(6);
    assert!((&(&m * &b) - &w).frobenius() <= 1e-9 * w.frobenius());
}

#[test]
fn pure_low_rank_observation_has_no_sparse_part() {
    let x0 = gen_bilinear_lowrank(30, 40, 3, 2).unwrap();
    let r = gen_compression(30, 60, CompressionMode::BernoulliSvd, 3).unwrap();
    for (name, (d, _)) in [
        ("apg", apg_solve(&x0, &r, &SolverConfig::default()).unwrap()),
        ("admm", admm_solve(&x0, &r, &SolverConfig::default()).unwrap()),
    ] {
        assert!(d.a_hat.max_abs() <= 1e-6, "{name}: ‖â‖∞ = {:e}", d.a_hat.max_abs());
        let err = (&d.x_hat - &x0).frobenius() / x0.frobenius();
        assert!(err <= 1e-4, "{name}: {err:e}");
    }
}

#[test]
fn ls_pcp_with_identity_is_plain_pcp() {
    let inst = make_instance(20, 20, 30, 2, SparsityMode::Uniform(20), 5).unwrap();
    let x0 = &inst.x0;
    let (a0, _) = gen_sparse(20, 30, SparsityMode::Uniform(20), Amplitude::Signs, 6).unwrap();
    let y = x0 + &a0;
    let id = DenseMatrix::identity(20);
    let cfg = SolverConfig::default();
    let (ls, _) = ls_pcp_baseline(&y, &id, &cfg).unwrap();
    let (pcp, _) = apg_solve(&y, &id, &cfg).unwrap();
    assert!((&ls.a_hat - &pcp.a_hat).max_abs() <= 1e-12);
    assert!(relative_error(&pcp.a_hat, &a0, 1e-6) <= 1e-3);
}

#[test]
fn cs_with_identity_returns_the_observation() {
    let (a0, _) = gen_sparse(12, 9, SparsityMode::Uniform(10), Amplitude::Gaussian(1.0), 3).unwrap();
    let a_hat = cs_solve(
        &a0,
        &DenseMatrix::identity(12),
        &SolverConfig::default().with_tol(1e-10),
    )
    .unwrap();
    assert!((&a_hat - &a0).max_abs() <= 1e-6);
    let zero = cs_solve(
        &DenseMatrix::zeros(12, 9),
        &DenseMatrix::identity(12),
        &SolverConfig::default(),
    )
    .unwrap();
    assert_eq!(zero, DenseMatrix::zeros(12, 9));
}

#[test]
fn solutions_are_no_worse_than_the_truth() {
    for seed in 0..3 {
        let inst = make_instance(20, 40, 50, 2, SparsityMode::Bernoulli(0.01), 70 + seed).unwrap();
        let cfg = SolverConfig::default();
        let lambda = cfg.resolve(&inst.y, &inst.r).unwrap().lambda;
        let truth = Decomposition {
            x_hat: inst.x0.clone(),
            a_hat: inst.a0.clone(),
        };
        let (obj_truth, res_truth) = evaluate(&truth, &inst.y, &inst.r, lambda).unwrap();
        assert!(res_truth <= 1e-12);
        for (d, rep) in [
            apg_solve(&inst.y, &inst.r, &cfg).unwrap(),
            admm_solve(&inst.y, &inst.r, &cfg).unwrap(),
        ] {
            let (obj, res) = evaluate(&d, &inst.y, &inst.r, lambda).unwrap();
            assert!(res <= 1e-5 * inst.y.frobenius(), "residual {res:e}");
            assert!(obj <= obj_truth * (1.0 + 1e-3), "objective {obj} vs truth {obj_truth}");
            assert_eq!(rep.stop_reason, StopReason::Tolerance);
            assert_eq!(rep.objective_trace.len(), rep.iterations);
        }
    }
}

#[test]
fn solvers_are_homogeneous() {
    // (αY) decomposes as α·(X̂, Â) at fixed λ.
    let inst = make_instance(15, 30, 40, 2, SparsityMode::Uniform(15), 91).unwrap();
    let cfg = SolverConfig::default();
    let (d1, _) = admm_solve(&inst.y, &inst.r, &cfg).unwrap();
    let (d2, _) = admm_solve(&inst.y.scale(3.0), &inst.r, &cfg).unwrap();
    assert!((&d2.a_hat.scale(1.0 / 3.0) - &d1.a_hat).max_abs() <= 1e-5);
    assert!((&d2.x_hat.scale(1.0 / 3.0) - &d1.x_hat).max_abs() <= 1e-5);
}

#[test]
fn permuting_flows_permutes_the_sparse_estimate() {
    let inst = make_instance(15, 30, 40, 2, SparsityMode::Uniform(15), 92).unwrap();
    let perm = random_permutation(30, 3);
    let rp = inst.r.select_cols(&perm);
    let cfg = SolverConfig::default();
    let (d, _) = apg_solve(&inst.y, &inst.r, &cfg).unwrap();
    let (dp, _) = apg_solve(&inst.y, &rp, &cfg).unwrap();
    // Column j of Rp is column perm[j] of R, so row j of Âp estimates row perm[j] of Â.
    assert!((&dp.a_hat - &d.a_hat.select_rows(&perm)).max_abs() <= 1e-6);
}

#[test]
fn recovered_low_rank_part_has_true_rank() {
    let inst = make_instance(40, 80, 100, 3, SparsityMode::Bernoulli(0.01), 17).unwrap();
    let (d, _) = apg_solve(&inst.y, &inst.r, &SolverConfig::default()).unwrap();
    let sv = singular_values(&d.x_hat).unwrap();
    assert_eq!(sv.iter().filter(|&&s| s > 1e-6 * sv[0]).count(), 3);
}

#[test]
fn baseline_breaks_down_on_a_compressed_instance() {
    // Reduced version of the LS-PCP failure: the pseudo-inverse mixes the
    // null space of R into the sparse part.
    let inst = make_instance(30, 60, 90, 2, SparsityMode::Bernoulli(0.02), 33).unwrap();
    let cfg = SolverConfig::default();
    let (ls, _) = ls_pcp_baseline(&inst.y, &inst.r, &cfg).unwrap();
    let (apg, _) = apg_solve(&inst.y, &inst.r, &cfg).unwrap();
    let (e_ls, e_apg) = (
        relative_error(&ls.a_hat, &inst.a0, 1e-6),
        relative_error(&apg.a_hat, &inst.a0, 1e-6),
    );
    assert!(e_apg <= 1e-3 && e_ls >= 0.5, "apg {e_apg:e}, ls-pcp {e_ls}");
}
