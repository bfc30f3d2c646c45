//! Browser bindings for the demo page in `www/`.
//!
//! Each exported function takes plain numbers and returns a JSON string so
//! the page needs no glue beyond `JSON.parse`. The `run_*` functions hold
//! the logic and are callable natively.

use lrcs::diagnostics::{build_certificate, check_theorem1, incoherence_params, ric_delta, ric_theta};
use lrcs::ensembles::{derived_seed, gen_sparse, rng, Amplitude, SparsityMode};
use lrcs::expharness::{effective_nnz, make_instance, relative_error};
use lrcs::matcore::{singular_values, Subspaces};
use lrcs::netanomaly::{
    build_routing, detect, gen_geometric_graph, noisy_config, pca_baseline, roc, synthesize_traffic,
};
use lrcs::solvers::{apg_solve, SolverConfig};
use lrcs::DenseMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

// Browser work runs on the UI thread; keep every demo well under a second
// or two.
const MAX_CELLS: usize = 40_000;

#[derive(Serialize)]
pub struct DecomposeResult {
    pub rows: usize,
    pub cols: usize,
    pub rel_error: f64,
    pub iterations: usize,
    pub rank_x_hat: usize,
    pub nnz_a_hat: usize,
    pub objective_trace: Vec<f64>,
    /// Row-major `F×T`.
    pub a0: Vec<f64>,
    pub a_hat: Vec<f64>,
}

/// Synthetic `Y = X₀ + R·A₀` with `support` nonzeros, solved by APG.
pub fn run_decompose(
    l: usize,
    f: usize,
    t: usize,
    rank: usize,
    support: usize,
    seed: u64,
) -> Result<DecomposeResult, String> {
    if f * t > MAX_CELLS || l * t > MAX_CELLS {
        return Err(format!("problem too large for the demo (at most {MAX_CELLS} entries)"));
    }
    let inst = make_instance(l, f, t, rank, SparsityMode::Uniform(support), seed).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::default().with_max_iter(2000);
    let (d, report) = apg_solve(&inst.y, &inst.r, &cfg).map_err(|e| e.to_string())?;
    let sv = singular_values(&d.x_hat).map_err(|e| e.to_string())?;
    let top = sv.first().copied().unwrap_or(0.0);
    Ok(DecomposeResult {
        rows: f,
        cols: t,
        rel_error: relative_error(&d.a_hat, &inst.a0, 1e-6),
        iterations: report.iterations,
        rank_x_hat: sv.iter().filter(|&&v| v > 1e-6 * top).count(),
        nnz_a_hat: effective_nnz(&d.a_hat),
        objective_trace: report.objective_trace,
        a0: inst.a0.to_row_major(),
        a_hat: d.a_hat.to_row_major(),
    })
}

#[derive(Serialize)]
pub struct CurveSummary {
    pub auc: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Serialize)]
pub struct NetworkResult {
    pub node_positions: Vec<(f64, f64)>,
    pub links: Vec<(usize, usize)>,
    pub flows: usize,
    pub anomalies: usize,
    pub detect: CurveSummary,
    pub pca: CurveSummary,
}

/// Traffic on a random geometric graph, scored by the decomposition and by
/// the subspace baseline with rank hint `rank`.
pub fn run_network(
    nodes: usize,
    range: f64,
    rank: usize,
    pi: f64,
    noise: f64,
    time: usize,
    seed: u64,
) -> Result<NetworkResult, String> {
    if nodes * nodes.saturating_sub(1) * time > MAX_CELLS {
        return Err(format!(
            "problem too large for the demo (at most {MAX_CELLS} flow-slots)"
        ));
    }
    let graph = gen_geometric_graph(nodes, range, derived_seed(seed, 0), true).map_err(|e| e.to_string())?;
    let routing = build_routing(&graph).map_err(|e| e.to_string())?;
    let (y, truth, _) =
        synthesize_traffic(&routing, rank, pi, 1.0, noise, time, derived_seed(seed, 1)).map_err(|e| e.to_string())?;
    let cfg = noisy_config(noise, routing.matrix.rows(), time);
    let ours = roc(&detect(&y, &routing, &cfg).map_err(|e| e.to_string())?, &truth).map_err(|e| e.to_string())?;
    let base = roc(&pca_baseline(&y, &routing, rank).map_err(|e| e.to_string())?, &truth).map_err(|e| e.to_string())?;
    Ok(NetworkResult {
        node_positions: graph.node_positions.clone(),
        links: graph.directed_links.clone(),
        flows: routing.flow_index.len(),
        anomalies: truth.count(),
        detect: CurveSummary {
            auc: ours.auc,
            points: ours.points,
        },
        pca: CurveSummary {
            auc: base.auc,
            points: base.points,
        },
    })
}

#[derive(Serialize)]
pub struct CertifyResult {
    pub mu: f64,
    pub omega_max: f64,
    pub cond_i: bool,
    pub cond_ii: bool,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    pub lambda: Option<f64>,
    pub certificate_valid: Option<bool>,
    pub c3_value: Option<f64>,
    pub c4_value: Option<f64>,
    pub rel_error: Option<f64>,
}

/// Rank-one `n×n` instance with flat singular vectors, identity `R` and
/// `support` random ±1 entries: checks the sufficient conditions, builds the
/// certificate at the midpoint of the admissible λ range and solves there.
pub fn run_certify(n: usize, support: usize, seed: u64) -> Result<CertifyResult, String> {
    use rand::Rng;

    if !(2..=60).contains(&n) {
        return Err("n must lie in 2..=60".into());
    }
    let mut g = rng(seed);
    let mut flat = || {
        let s = 1.0 / (n as f64).sqrt();
        DenseMatrix::from_fn(n, 1, |_, _| if g.random::<bool>() { s } else { -s })
    };
    let spaces = Subspaces::new(flat(), flat()).map_err(|e| e.to_string())?;
    let (a0, sup) = gen_sparse(
        n,
        n,
        SparsityMode::Uniform(support),
        Amplitude::Signs,
        derived_seed(seed, 1),
    )
    .map_err(|e| e.to_string())?;
    let r = DenseMatrix::identity(n);
    let k = sup.max_per_row().max(sup.max_per_col());
    let err = |e: lrcs::Error| e.to_string();
    let inc = incoherence_params(&spaces, &sup, &r).map_err(err)?;
    let dk = ric_delta(&r, k, 1.0).map_err(err)?;
    let d1 = ric_delta(&r, 1, 1.0).map_err(err)?;
    let th = ric_theta(&r, 1, 1, 1.0).map_err(err)?;
    let cond = check_theorem1(&inc, &dk, &th, &d1, 1, support, k, 1.0).map_err(err)?;
    let mut out = CertifyResult {
        mu: inc.mu,
        omega_max: cond.omega_max,
        cond_i: cond.cond_i,
        cond_ii: cond.cond_ii,
        lambda_min: cond.lambda_min,
        lambda_max: cond.lambda_max,
        lambda: None,
        certificate_valid: None,
        c3_value: None,
        c4_value: None,
        rel_error: None,
    };
    let Some(lambda) = cond.lambda_midpoint() else {
        return Ok(out);
    };
    let cert = build_certificate(&spaces, &sup, &a0.map(f64::signum), &r, lambda).map_err(err)?;
    let y = &spaces.uv().scale(5.0) + &a0;
    let (d, _) = apg_solve(&y, &r, &SolverConfig::default().with_lambda(lambda)).map_err(err)?;
    out.lambda = Some(lambda);
    out.certificate_valid = Some(cert.valid);
    out.c3_value = Some(cert.c3_value);
    out.c4_value = Some(cert.c4_value);
    out.rel_error = Some(relative_error(&d.a_hat, &a0, 1e-6));
    Ok(out)
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn decompose(l: usize, f: usize, t: usize, rank: usize, support: usize, seed: u32) -> Result<String, JsError> {
    to_js(run_decompose(l, f, t, rank, support, seed.into()))
}

#[wasm_bindgen]
pub fn network(
    nodes: usize,
    range: f64,
    rank: usize,
    pi: f64,
    noise: f64,
    time: usize,
    seed: u32,
) -> Result<String, JsError> {
    to_js(run_network(nodes, range, rank, pi, noise, time, seed.into()))
}

#[wasm_bindgen]
pub fn certify(n: usize, support: usize, seed: u32) -> Result<String, JsError> {
    to_js(run_certify(n, support, seed.into()))
}
