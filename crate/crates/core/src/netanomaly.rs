//! Traffic volume anomalies: random geometric networks, min-hop routing,
//! link-load synthesis, anomaly scoring and ROC evaluation.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::{derived_seed, gaussian_matrix, gen_sparse, rng, Amplitude, RngSeed, SparsityMode};
use crate::error::{shape_err, Error, Result};
use crate::matcore::{pinv, svd, DEFAULT_RANK_TOL};
use crate::matrix::DenseMatrix;
use crate::solvers::{apg_solve, SolverConfig};

/// Redraws allowed when a connected graph is requested.
pub const MAX_GRAPH_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub n_nodes: usize,
    pub node_positions: Vec<(f64, f64)>,
    /// Sorted; `(u, v)` present iff `(v, u)` is.
    pub directed_links: Vec<(usize, usize)>,
    /// Draws made before this realization was accepted.
    pub attempts: usize,
}

impl NetworkGraph {
    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(u, v) in &self.directed_links {
            adj[u].push(v);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.n_nodes == 0 {
            return true;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !std::mem::replace(&mut seen[v], true) {
                    queue.push_back(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    /// Graph over explicit undirected edges (both directions are added).
    pub fn from_edges(n_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut links = Vec::with_capacity(2 * edges.len());
        for &(u, v) in edges {
            if u == v || u >= n_nodes || v >= n_nodes {
                return Err(Error::InvalidArgument(format!(
                    "invalid edge ({u}, {v}) for {n_nodes} nodes"
                )));
            }
            links.push((u, v));
            links.push((v, u));
        }
        links.sort_unstable();
        links.dedup();
        Ok(Self {
            n_nodes,
            node_positions: vec![(0.0, 0.0); n_nodes],
            directed_links: links,
            attempts: 1,
        })
    }
}

fn draw_geometric(n: usize, range: f64, seed: RngSeed) -> NetworkGraph {
    let mut g = rng(seed);
    let pos: Vec<(f64, f64)> = (0..n).map(|_| (g.random::<f64>(), g.random::<f64>())).collect();
    let mut links = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v {
                let (dx, dy) = (pos[u].0 - pos[v].0, pos[u].1 - pos[v].1);
                if (dx * dx + dy * dy).sqrt() < range {
                    links.push((u, v));
                }
            }
        }
    }
    NetworkGraph {
        n_nodes: n,
        node_positions: pos,
        directed_links: links,
        attempts: 1,
    }
}

/// `n` uniform points in the unit square, linked when closer than `range`.
/// With `require_connected`, redraws from derived seeds until connected.
pub fn gen_geometric_graph(n: usize, range: f64, seed: RngSeed, require_connected: bool) -> Result<NetworkGraph> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 nodes, got {n}")));
    }
    if !(range >= 0.0) || range > std::f64::consts::SQRT_2 {
        return Err(Error::InvalidArgument(format!(
            "range must lie in [0, sqrt(2)], got {range}"
        )));
    }
    if !require_connected {
        return Ok(draw_geometric(n, range, seed));
    }
    for attempt in 0..MAX_GRAPH_ATTEMPTS {
        let mut g = draw_geometric(n, range, derived_seed(seed, attempt as u64));
        if g.is_connected() {
            g.attempts = attempt + 1;
            return Ok(g);
        }
    }
    Err(Error::Degenerate(format!(
        "no connected graph with {n} nodes at range {range} in {MAX_GRAPH_ATTEMPTS} draws"
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingMatrix {
    /// `L×F`, entry `(ℓ, f)` is 1 when flow `f` traverses link `ℓ`.
    pub matrix: DenseMatrix,
    /// `(origin, destination)` of each flow, origin-major order.
    pub flow_index: Vec<(usize, usize)>,
    /// `(u, v)` of each directed link, sorted.
    pub link_index: Vec<(usize, usize)>,
}

impl RoutingMatrix {
    /// Node sequence of flow `f`, rebuilt from the links its column marks.
    pub fn path(&self, f: usize) -> Option<Vec<usize>> {
        let (origin, dest) = *self.flow_index.get(f)?;
        let used: Vec<(usize, usize)> = (0..self.link_index.len())
            .filter(|&l| self.matrix.get(l, f) != 0.0)
            .map(|l| self.link_index[l])
            .collect();
        let mut path = vec![origin];
        let mut at = origin;
        for _ in 0..used.len() {
            let next = used.iter().filter(|&&(u, _)| u == at).map(|&(_, v)| v);
            let mut next = next.collect::<Vec<_>>();
            if next.len() != 1 || path.contains(&next[0]) {
                return None;
            }
            at = next.pop()?;
            path.push(at);
        }
        (at == dest).then_some(path)
    }
}

/// Min-hop routing for every ordered node pair; among shortest paths the
/// lexicographically smallest node sequence wins.
pub fn build_routing(g: &NetworkGraph) -> Result<RoutingMatrix> {
    if !g.is_connected() {
        return Err(Error::Degenerate("routing needs a connected graph".into()));
    }
    let n = g.n_nodes;
    let adj = g.adjacency();
    let mut links = g.directed_links.clone();
    links.sort_unstable();
    let link_of = |u: usize, v: usize| links.binary_search(&(u, v)).expect("link exists");
    let flows: Vec<(usize, usize)> = (0..n)
        .flat_map(|o| (0..n).filter(move |&d| d != o).map(move |d| (o, d)))
        .collect();
    let mut matrix = DenseMatrix::zeros(links.len(), flows.len()).into_faer();
    for origin in 0..n {
        // BFS over sorted neighbor lists: the first discoverer of a node is
        // the predecessor on its lexicographically smallest shortest path.
        let mut parent = vec![usize::MAX; n];
        parent[origin] = origin;
        let mut queue = VecDeque::from([origin]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        for dest in (0..n).filter(|&d| d != origin) {
            let f = origin * (n - 1) + if dest > origin { dest - 1 } else { dest };
            let mut at = dest;
            while at != origin {
                matrix[(link_of(parent[at], at), f)] = 1.0;
                at = parent[at];
            }
        }
    }
    Ok(RoutingMatrix {
        matrix: DenseMatrix::from_faer(matrix),
        flow_index: flows,
        link_index: links,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyTruth {
    /// Row-major `F×T`, true exactly where `amplitudes` is nonzero.
    pub flags: Vec<bool>,
    pub amplitudes: DenseMatrix,
}

impl AnomalyTruth {
    pub fn from_amplitudes(amplitudes: DenseMatrix) -> Self {
        let flags = amplitudes.to_row_major().iter().map(|&v| v != 0.0).collect();
        Self { flags, amplitudes }
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Link loads `Y = R(Z + A) + E`: `Z` is a rank-`r_rank` bilinear flow
/// matrix, `A` has ±`amp` anomalies with probability `pi`, `E` is white
/// Gaussian noise. Returns `(y, truth, z)`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_traffic(
    routing: &RoutingMatrix,
    r_rank: usize,
    pi: f64,
    amp: f64,
    noise_sd: f64,
    t: usize,
    seed: RngSeed,
) -> Result<(DenseMatrix, AnomalyTruth, DenseMatrix)> {
    if !(noise_sd >= 0.0) || !amp.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "invalid amp {amp} or noise sd {noise_sd}"
        )));
    }
    let r = &routing.matrix;
    let f = r.cols();
    let z = crate::ensembles::gen_bilinear_lowrank(f, t, r_rank, derived_seed(seed, 0))?;
    let (signs, _) = gen_sparse(
        f,
        t,
        SparsityMode::Bernoulli(pi),
        Amplitude::Signs,
        derived_seed(seed, 1),
    )?;
    let a = signs.scale(amp);
    let mut y = r * &(&z + &a);
    if noise_sd > 0.0 {
        let e = gaussian_matrix(y.rows(), y.cols(), noise_sd, &mut rng(derived_seed(seed, 2)));
        y = &y + &e;
    }
    Ok((y, AnomalyTruth::from_amplitudes(a), z))
}

/// Row orthonormalization: with `R = U_R·Σ_R·V_Rᵀ`, returns
/// `(Σ_R⁻¹U_Rᵀ·y, V_Rᵀ)`, an equivalent problem whose matrix has
/// orthonormal rows.
pub fn orthonormalize_rows(y: &DenseMatrix, r: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if y.rows() != r.rows() {
        return Err(shape_err(
            "orthonormalize_rows",
            format!("{} rows", r.rows()),
            format!("{}", y.rows()),
        ));
    }
    let fac = svd(r, DEFAULT_RANK_TOL)?;
    if fac.rank() < r.rows() {
        return Err(Error::RankDeficient(format!(
            "routing matrix has rank {} < {} links; rows cannot be orthonormalized",
            fac.rank(),
            r.rows()
        )));
    }
    let ut_y = &fac.u.transpose() * y;
    let y_t = DenseMatrix::from_fn(ut_y.rows(), ut_y.cols(), |i, j| ut_y.get(i, j) / fac.sigma[i]);
    Ok((y_t, fac.v.transpose()))
}

/// Configuration for noisy link data: the continuation stops at
/// `ν̄ = noise_sd·sqrt(max(L, T))`, the level at which the noise alone
/// would survive singular value thresholding.
pub fn noisy_config(noise_sd: f64, l: usize, t: usize) -> SolverConfig {
    SolverConfig {
        nu_bar: Some(noise_sd * (l.max(t) as f64).sqrt()),
        tol: 1e-6,
        max_iter: 2000,
        ..SolverConfig::default()
    }
}

/// Anomaly scores `|â|` (F×T) from the decomposition of the
/// row-orthonormalized problem.
pub fn detect(y: &DenseMatrix, routing: &RoutingMatrix, cfg: &SolverConfig) -> Result<DenseMatrix> {
    let (y_t, r_t) = orthonormalize_rows(y, &routing.matrix)?;
    let mut cfg = cfg.clone();
    if let (Some(nu_bar), None) = (cfg.nu_bar, cfg.nu0) {
        // A target above the default start would invert the schedule.
        let nu0 = 0.99 * crate::matcore::norm(&y_t, crate::matcore::NormKind::Spectral);
        cfg.nu0 = Some(nu0.max(nu_bar));
    }
    let (d, _) = apg_solve(&y_t, &r_t, &cfg)?;
    Ok(d.a_hat.map(f64::abs))
}

/// Subspace-projection baseline: residual of the link loads off their top
/// `rank_hint` principal directions, attributed to flows as `|R†·residual|`.
pub fn pca_baseline(y: &DenseMatrix, routing: &RoutingMatrix, rank_hint: usize) -> Result<DenseMatrix> {
    let r = &routing.matrix;
    if y.rows() != r.rows() {
        return Err(shape_err(
            "pca_baseline",
            format!("{} rows", r.rows()),
            format!("{}", y.rows()),
        ));
    }
    if rank_hint > y.rows().min(y.cols()) {
        return Err(Error::InvalidArgument(format!(
            "rank hint {rank_hint} exceeds min({}, {})",
            y.rows(),
            y.cols()
        )));
    }
    let residual = if rank_hint == 0 {
        y.clone()
    } else {
        let fac = svd(y, DEFAULT_RANK_TOL)?;
        let keep: Vec<usize> = (0..rank_hint.min(fac.sigma.len())).collect();
        let uk = fac.u.select_cols(&keep);
        y - &(&uk * &(&uk.transpose() * y))
    };
    Ok((&pinv(r, DEFAULT_RANK_TOL)? * &residual).map(f64::abs))
}

/// Residual energy `‖(I − U_k U_kᵀ)·y_t‖²` of each time slot.
pub fn pca_time_scores(y: &DenseMatrix, rank_hint: usize) -> Result<Vec<f64>> {
    if rank_hint > y.rows().min(y.cols()) {
        return Err(Error::InvalidArgument(format!("rank hint {rank_hint} too large")));
    }
    let fac = svd(y, DEFAULT_RANK_TOL)?;
    let keep: Vec<usize> = (0..rank_hint.min(fac.sigma.len())).collect();
    let uk = fac.u.select_cols(&keep);
    let res = y - &(&uk * &(&uk.transpose() * y));
    Ok((0..res.cols())
        .map(|j| res.col(j).iter().map(|v| v * v).sum())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(p_false, p_detect)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Best detection rate among operating points with `p_false ≤ max_false`.
    pub fn detection_at(&self, max_false: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.0 <= max_false)
            .map(|p| p.1)
            .fold(0.0, f64::max)
    }

    /// `p_false,p_detect` rows with the area on a trailing comment line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p_false,p_detect\n");
        for &(pf, pd) in &self.points {
            out.push_str(&format!("{pf:.16e},{pd:.16e}\n"));
        }
        out.push_str(&format!("# auc={:.16e}\n", self.auc));
        out
    }
}

/// ROC over every distinct score threshold (flag when `score ≥ τ`), with
/// trapezoidal area. Tied scores move both rates at once.
pub fn roc(scores: &DenseMatrix, truth: &AnomalyTruth) -> Result<RocCurve> {
    if scores.shape() != truth.amplitudes.shape() {
        return Err(shape_err(
            "roc",
            format!("{}x{}", truth.amplitudes.rows(), truth.amplitudes.cols()),
            format!("{}x{}", scores.rows(), scores.cols()),
        ));
    }
    let positives = truth.count();
    let negatives = truth.flags.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Degenerate(
            "truth must contain both anomalous and normal cells".into(),
        ));
    }
    let mut cells: Vec<(f64, bool)> = scores
        .to_row_major()
        .into_iter()
        .zip(truth.flags.iter().copied())
        .collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < cells.len() {
        let level = cells[k].0;
        while k < cells.len() && cells[k].0 == level {
            if cells[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        let p = (fp as f64 / negatives as f64, tp as f64 / positives as f64);
        let last = *points.last().expect("nonempty");
        auc += (p.0 - last.0) * (p.1 + last.1) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

/// Flow-level link loads from a CSV file.
pub fn load_flow_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    DenseMatrix::read_csv(path)
}
