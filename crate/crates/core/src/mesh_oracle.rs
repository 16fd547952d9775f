//! Ground-truth machinery: LBP discretized on a fixed equally spaced mesh and
//! brute-force marginalization oracles for small graphs.
//!
//! The mesh versions of the potentials are precomputed once per run. Because
//! every edge potential is a function of the separation only and the mesh is
//! equally spaced, `ψ_uv(x_k, x_j)` is a lookup into a table indexed by
//! `k - j`.

use crate::error::{Error, Result};
use crate::model::{DirectedEdgeIndex, PairwiseMRF};
use crate::schedule::Schedule;

/// Default number of mesh points for ground-truth beliefs.
pub const DEFAULT_MESH_POINTS: usize = 200;

/// Margin added around the observation range by [`default_mesh`].
const DEFAULT_MESH_MARGIN: f64 = 10.0;

/// Equally spaced evaluation mesh on `[lo, hi]`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    lo: f64,
    hi: f64,
    points: Vec<f64>,
    spacing: f64,
}

impl Mesh {
    pub fn new(lo: f64, hi: f64, k: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!(
                "invalid mesh range [{lo}, {hi}]"
            )));
        }
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "mesh needs at least 2 points, got {k}"
            )));
        }
        let spacing = (hi - lo) / (k - 1) as f64;
        let mut points: Vec<f64> = (0..k).map(|i| lo + i as f64 * spacing).collect();
        points[k - 1] = hi;
        Ok(Self {
            lo,
            hi,
            points,
            spacing,
        })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

/// 200 points covering the observations with a ±10 margin: wide enough that
/// the experiment potentials hold all but ~1e-6 of their mass inside.
pub fn default_mesh(observations: &[f64]) -> Result<Mesh> {
    if observations.is_empty() {
        return Err(Error::InvalidInput(
            "default mesh needs at least one observation".into(),
        ));
    }
    let min = observations.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = observations
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    Mesh::new(
        min - DEFAULT_MESH_MARGIN,
        max + DEFAULT_MESH_MARGIN,
        DEFAULT_MESH_POINTS,
    )
}

/// A normalized belief on the mesh: `Σ values·Δx = 1`.
#[derive(Debug, Clone)]
pub struct MeshBelief {
    node: usize,
    values: Vec<f64>,
}

impl MeshBelief {
    /// Normalizes raw nonnegative values to integrate to one.
    pub fn normalized(node: usize, mut values: Vec<f64>, mesh: &Mesh) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values on a {}-point mesh",
                values.len(),
                mesh.len()
            )));
        }
        let mut sum = 0.0;
        for &v in &values {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "belief value {v} at node {node}"
                )));
            }
            sum += v;
        }
        let mass = sum * mesh.spacing();
        if !mass.is_finite() || mass <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "belief at node {node} has zero mass on the mesh"
            )));
        }
        for v in &mut values {
            *v /= mass;
        }
        Ok(Self { node, values })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Riemann integral of the stored values; 1 within rounding.
    pub fn mass(&self, mesh: &Mesh) -> f64 {
        self.values.iter().sum::<f64>() * mesh.spacing()
    }
}

/// Mesh-evaluated potentials: per-node `ψ_u(x_k)` vectors and the shared
/// edge-potential difference table.
struct MeshPotentials {
    node: Vec<Vec<f64>>,
    // edge[(k - j) + (K-1)] = ψ_uv(x_k, x_j)
    edge: Vec<f64>,
    k: usize,
}

impl MeshPotentials {
    fn new(mrf: &PairwiseMRF, mesh: &Mesh) -> Self {
        let k = mesh.len();
        let node = (0..mrf.graph().node_count())
            .map(|u| {
                mesh.points()
                    .iter()
                    .map(|&x| mrf.log_node_potential(u, x).exp())
                    .collect()
            })
            .collect();
        let edge = (0..2 * k - 1)
            .map(|t| {
                let d = (t as isize - (k as isize - 1)) as f64 * mesh.spacing();
                mrf.edge_kernel().log_eval(d).exp()
            })
            .collect();
        Self { node, edge, k }
    }

    #[inline]
    fn edge_at(&self, from_idx: usize, to_idx: usize) -> f64 {
        self.edge[from_idx + (self.k - 1) - to_idx]
    }
}

fn normalize_in_place(values: &mut [f64], spacing: f64) -> Option<f64> {
    let sum: f64 = values.iter().sum();
    let mass = sum * spacing;
    if !mass.is_finite() || mass <= 0.0 {
        return None;
    }
    for v in values.iter_mut() {
        *v /= mass;
    }
    Some(mass)
}

/// Discretized LBP: messages are K-vectors updated with the rectangle-rule
/// version of the fixed-point iteration, renormalized after every update.
/// Message initialization is uniform. One iteration updates every node's
/// outgoing messages once, in the schedule's sweep order.
pub fn run_mesh_lbp(
    mrf: &PairwiseMRF,
    mesh: &Mesh,
    iterations: usize,
    schedule: &Schedule,
) -> Result<Vec<MeshBelief>> {
    let graph = mrf.graph();
    let pots = MeshPotentials::new(mrf, mesh);
    let dir = DirectedEdgeIndex::new(graph);
    let k = mesh.len();

    let mut messages = vec![vec![1.0 / (mesh.hi() - mesh.lo()); k]; dir.count()];

    for iteration in 0..iterations {
        for &u in schedule.sweep(iteration) {
            for (pos, &v) in graph.neighbors(u).iter().enumerate() {
                // pre[k] = ψ_u(x_k) Π_{w∈Γu\v} m_wu[k]
                let mut pre = pots.node[u].clone();
                for &w in graph.neighbors(u) {
                    if w == v {
                        continue;
                    }
                    let m = &messages[dir.id(graph, w, u)];
                    for (p, &mv) in pre.iter_mut().zip(m) {
                        *p *= mv;
                    }
                }
                let mut out = vec![0.0; k];
                for (j, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (kk, &p) in pre.iter().enumerate() {
                        acc += pots.edge_at(kk, j) * p;
                    }
                    *o = acc * mesh.spacing();
                }
                if out.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericalFailure {
                        node: u,
                        iteration,
                        detail: format!("non-finite message to {v}"),
                    });
                }
                if normalize_in_place(&mut out, mesh.spacing()).is_none() {
                    return Err(Error::NumericalFailure {
                        node: u,
                        iteration,
                        detail: format!("zero-mass message to {v}"),
                    });
                }
                messages[dir.id_at(u, pos)] = out;
            }
        }
    }

    let mut beliefs = Vec::with_capacity(graph.node_count());
    for u in 0..graph.node_count() {
        let mut b = pots.node[u].clone();
        for &w in graph.neighbors(u) {
            let m = &messages[dir.id(graph, w, u)];
            for (bv, &mv) in b.iter_mut().zip(m) {
                *bv *= mv;
            }
        }
        beliefs.push(MeshBelief::normalized(u, b, mesh)?);
    }
    Ok(beliefs)
}

/// Exact marginals on the mesh by variable elimination, for trees, or by
/// exhaustive summation for graphs with at most 3 nodes. Rejects anything
/// else.
pub fn brute_force_marginals(mrf: &PairwiseMRF, mesh: &Mesh) -> Result<Vec<MeshBelief>> {
    let graph = mrf.graph();
    if graph.is_tree() {
        tree_elimination_marginals(mrf, mesh)
    } else if graph.node_count() <= 3 {
        exhaustive_marginals(mrf, mesh)
    } else {
        Err(Error::UnsupportedGraph(format!(
            "{} nodes with {} edges: neither a tree nor small enough to enumerate",
            graph.node_count(),
            graph.edges().len()
        )))
    }
}

/// Leaf-to-root-to-leaf elimination over the mesh. Exact for trees.
pub fn tree_elimination_marginals(mrf: &PairwiseMRF, mesh: &Mesh) -> Result<Vec<MeshBelief>> {
    let graph = mrf.graph();
    if !graph.is_tree() {
        return Err(Error::UnsupportedGraph("not a tree".into()));
    }
    let n = graph.node_count();
    let pots = MeshPotentials::new(mrf, mesh);
    let k = mesh.len();

    // Rooted orientation by BFS from node 0.
    let mut parent = vec![usize::MAX; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut seen = vec![false; n];
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in graph.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }

    // μ(c, x_j) = Σ_k ψ(x_k, x_j) ψ_c(x_k) Π_{d child of c} up[d][k] Δx
    let send = |source: usize,
                exclude: usize,
                incoming: &dyn Fn(usize) -> Option<Vec<f64>>|
     -> Option<Vec<f64>> {
        let mut pre = pots.node[source].clone();
        for &w in graph.neighbors(source) {
            if w == exclude {
                continue;
            }
            let m = incoming(w)?;
            for (p, mv) in pre.iter_mut().zip(m) {
                *p *= mv;
            }
        }
        let mut out = vec![0.0; k];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (kk, &p) in pre.iter().enumerate() {
                acc += pots.edge_at(kk, j) * p;
            }
            *o = acc * mesh.spacing();
        }
        normalize_in_place(&mut out, mesh.spacing())?;
        Some(out)
    };

    // Upward pass in reverse BFS order.
    let mut up: Vec<Option<Vec<f64>>> = vec![None; n];
    for &c in order.iter().rev() {
        if parent[c] == usize::MAX {
            continue;
        }
        let msg = send(c, parent[c], &|w| up[w].clone()).ok_or_else(|| {
            Error::NumericalFailure {
                node: c,
                iteration: 0,
                detail: "zero-mass upward message".into(),
            }
        })?;
        up[c] = Some(msg);
    }

    // Downward pass in BFS order: down[c] is the message parent -> c.
    let mut down: Vec<Option<Vec<f64>>> = vec![None; n];
    for &u in &order {
        for &c in graph.neighbors(u) {
            if parent[c] != u {
                continue;
            }
            let msg = send(u, c, &|w| {
                if w == parent[u] {
                    down[u].clone()
                } else {
                    up[w].clone()
                }
            })
            .ok_or_else(|| Error::NumericalFailure {
                node: u,
                iteration: 0,
                detail: "zero-mass downward message".into(),
            })?;
            down[c] = Some(msg);
        }
    }

    let mut beliefs = Vec::with_capacity(n);
    for u in 0..n {
        let mut b = pots.node[u].clone();
        for &w in graph.neighbors(u) {
            let m = if w == parent[u] {
                down[u].as_ref()
            } else {
                up[w].as_ref()
            }
            .expect("all messages computed");
            for (bv, &mv) in b.iter_mut().zip(m) {
                *bv *= mv;
            }
        }
        beliefs.push(MeshBelief::normalized(u, b, mesh)?);
    }
    Ok(beliefs)
}

/// Direct summation over `mesh^node_count`; the independent cross-check for
/// the elimination variant. Only for up to 3 nodes.
pub fn exhaustive_marginals(mrf: &PairwiseMRF, mesh: &Mesh) -> Result<Vec<MeshBelief>> {
    let graph = mrf.graph();
    let n = graph.node_count();
    if n > 3 {
        return Err(Error::UnsupportedGraph(format!(
            "exhaustive summation over {n} nodes"
        )));
    }
    let pots = MeshPotentials::new(mrf, mesh);
    let k = mesh.len();
    let mut marginals = vec![vec![0.0f64; k]; n];

    let mut assign = vec![0usize; n];
    loop {
        let mut w = 1.0;
        for (u, &j) in assign.iter().enumerate() {
            w *= pots.node[u][j];
        }
        for &(u, v) in graph.edges() {
            w *= pots.edge_at(assign[u], assign[v]);
        }
        for (u, &j) in assign.iter().enumerate() {
            marginals[u][j] += w;
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == n {
                let mut beliefs = Vec::with_capacity(n);
                for (u, values) in marginals.into_iter().enumerate() {
                    beliefs.push(MeshBelief::normalized(u, values, mesh)?);
                }
                return Ok(beliefs);
            }
            assign[pos] += 1;
            if assign[pos] < k {
                break;
            }
            assign[pos] = 0;
            pos += 1;
        }
    }
}
