//! Pairwise MRF representation: undirected graphs, node/edge potentials and
//! builders for the grid, tree and image-denoising experiment models.

use std::collections::HashSet;

use crate::densities::DensityKernel;
use crate::error::{Error, Result};

/// Undirected graph over nodes `0..node_count` with adjacency lists.
#[derive(Debug, Clone)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops, duplicate edges
    /// and out-of-range node ids.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidInput("graph needs at least one node".into()));
        }
        let mut seen = HashSet::new();
        let mut adjacency = vec![Vec::new(); node_count];
        for &(u, v) in &edges {
            if u >= node_count || v >= node_count {
                return Err(Error::InvalidInput(format!(
                    "edge ({u},{v}) references a node outside 0..{node_count}"
                )));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at node {u}")));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::InvalidInput(format!("duplicate edge ({u},{v})")));
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    /// Position of `v` in `u`'s adjacency list.
    pub fn neighbor_index(&self, u: usize, v: usize) -> Option<usize> {
        self.adjacency[u].iter().position(|&w| w == v)
    }

    pub fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.node_count];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.node_count
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.node_count && self.is_connected()
    }

    /// Longest shortest path, by BFS from every node. Intended for the small
    /// graphs of the experiments (it is O(V·E)).
    pub fn diameter(&self) -> usize {
        let mut best = 0;
        for start in 0..self.node_count {
            let mut dist = vec![usize::MAX; self.node_count];
            dist[start] = 0;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbors(u) {
                    if dist[v] == usize::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            for &d in &dist {
                if d != usize::MAX && d > best {
                    best = d;
                }
            }
        }
        best
    }
}

/// Dense indexing of directed edges: message `u -> v` gets the id
/// `offsets[u] + position of v in u's adjacency`.
#[derive(Debug, Clone)]
pub struct DirectedEdgeIndex {
    offsets: Vec<usize>,
    count: usize,
}

impl DirectedEdgeIndex {
    pub fn new(graph: &Graph) -> Self {
        let mut offsets = Vec::with_capacity(graph.node_count());
        let mut acc = 0;
        for u in 0..graph.node_count() {
            offsets.push(acc);
            acc += graph.degree(u);
        }
        Self {
            offsets,
            count: acc,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn id_at(&self, u: usize, neighbor_pos: usize) -> usize {
        self.offsets[u] + neighbor_pos
    }

    pub fn id(&self, graph: &Graph, u: usize, v: usize) -> usize {
        let pos = graph
            .neighbor_index(u, v)
            .unwrap_or_else(|| panic!("no edge {u} -> {v}"));
        self.offsets[u] + pos
    }
}

/// 4-connected lattice with row-major node ids.
///
/// Panics if `rows` or `cols` is zero.
pub fn build_grid(rows: usize, cols: usize) -> Graph {
    assert!(rows >= 1 && cols >= 1, "grid dimensions must be positive");
    let node = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((node(r, c), node(r, c + 1)));
            }
            if r + 1 < rows {
                edges.push((node(r, c), node(r + 1, c)));
            }
        }
    }
    Graph::new(rows * cols, edges).expect("grid edge list is valid")
}

/// Builds a tree from an edge list over nodes `0..=max_id`, rejecting cyclic
/// or disconnected inputs.
pub fn build_tree(edges: &[(usize, usize)]) -> Result<Graph> {
    if edges.is_empty() {
        return Err(Error::NotATree("empty edge list".into()));
    }
    let node_count = edges
        .iter()
        .map(|&(u, v)| u.max(v))
        .max()
        .expect("nonempty")
        + 1;
    if edges.len() + 1 != node_count {
        return Err(Error::NotATree(format!(
            "{} edges over {} nodes",
            edges.len(),
            node_count
        )));
    }
    let graph = Graph::new(node_count, edges.to_vec()).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::NotATree(msg),
        other => other,
    })?;
    if !graph.is_connected() {
        return Err(Error::NotATree("graph is disconnected".into()));
    }
    Ok(graph)
}

/// Default balanced 8-node tree used when no topology is configured.
pub const DEFAULT_TREE_EDGES: [(usize, usize); 7] =
    [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6), (3, 7)];

pub fn default_tree() -> Graph {
    build_tree(&DEFAULT_TREE_EDGES).expect("default tree is valid")
}

/// Pairwise MRF with a shared node-potential kernel applied to `x - y_u` and a
/// shared translation-invariant edge kernel applied to `x_u - x_v`.
///
/// All experiment potentials are translation invariant, so a single kernel per
/// family is stored instead of per-edge closures.
#[derive(Debug, Clone)]
pub struct PairwiseMRF {
    graph: Graph,
    node_kernel: DensityKernel,
    edge_kernel: DensityKernel,
    observations: Vec<f64>,
}

impl PairwiseMRF {
    pub fn new(
        graph: Graph,
        node_kernel: DensityKernel,
        edge_kernel: DensityKernel,
        observations: Vec<f64>,
    ) -> Result<Self> {
        if observations.len() != graph.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} observations for {} nodes",
                observations.len(),
                graph.node_count()
            )));
        }
        if let Some(bad) = observations.iter().find(|y| !y.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite observation {bad}"
            )));
        }
        Ok(Self {
            graph,
            node_kernel,
            edge_kernel,
            observations,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn node_kernel(&self) -> &DensityKernel {
        &self.node_kernel
    }

    pub fn edge_kernel(&self) -> &DensityKernel {
        &self.edge_kernel
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// `log ψ_u(x)`
    #[inline]
    pub fn log_node_potential(&self, u: usize, x: f64) -> f64 {
        self.node_kernel.log_eval(x - self.observations[u])
    }

    /// `log ψ_uv(a, b)`; a function of the separation `a - b` only.
    #[inline]
    pub fn log_edge_potential(&self, a: f64, b: f64) -> f64 {
        self.edge_kernel.log_eval(a - b)
    }
}

/// Mixture weights of the grid experiment's node potential.
#[derive(Debug, Clone, Copy)]
pub struct GridPotentials {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Default for GridPotentials {
    fn default() -> Self {
        Self {
            alpha1: 0.6,
            alpha2: 0.4,
        }
    }
}

/// Mixture weights of the tree experiment's node potential.
#[derive(Debug, Clone, Copy)]
pub struct TreePotentials {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Default for TreePotentials {
    fn default() -> Self {
        Self {
            alpha1: 0.3,
            alpha2: 0.7,
        }
    }
}

/// Truncation half-width of the denoising edge potential.
pub const DENOISE_LAMBDA: f64 = 0.2;

/// Node kernel of the grid experiment: a Normal/Gumbel mixture that makes the
/// marginals multimodal and skewed.
pub fn grid_node_kernel(pots: &GridPotentials) -> Result<DensityKernel> {
    DensityKernel::mixture(
        vec![pots.alpha1, pots.alpha2],
        vec![
            DensityKernel::normal(-2.0, 1.0)?,
            DensityKernel::gumbel(2.0, 1.3)?,
        ],
    )
}

/// Node kernel of the tree experiment: a bimodal two-Normal mixture.
pub fn tree_node_kernel(pots: &TreePotentials) -> Result<DensityKernel> {
    DensityKernel::mixture(
        vec![pots.alpha1, pots.alpha2],
        vec![
            DensityKernel::normal(-2.0, 1.0)?,
            DensityKernel::normal(1.0, 0.5)?,
        ],
    )
}

/// Grid MRF: mixture node potentials on `x_u - y_u`, Laplace(0, 2) edges.
pub fn make_grid_mrf(
    rows: usize,
    cols: usize,
    observations: Vec<f64>,
    pots: &GridPotentials,
) -> Result<PairwiseMRF> {
    PairwiseMRF::new(
        build_grid(rows, cols),
        grid_node_kernel(pots)?,
        DensityKernel::laplace(0.0, 2.0)?,
        observations,
    )
}

/// Tree MRF: bimodal node potentials, Laplace(0, 1) edges.
pub fn make_tree_mrf(
    graph: Graph,
    observations: Vec<f64>,
    pots: &TreePotentials,
) -> Result<PairwiseMRF> {
    PairwiseMRF::new(
        graph,
        tree_node_kernel(pots)?,
        DensityKernel::laplace(0.0, 1.0)?,
        observations,
    )
}

/// Image-denoising MRF: a grid over pixels with tight Normal(0, 0.1) node
/// potentials and truncated-Laplace edges that stop penalizing separations
/// beyond `lambda`.
pub fn make_denoise_mrf(
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
    lambda: f64,
) -> Result<PairwiseMRF> {
    PairwiseMRF::new(
        build_grid(rows, cols),
        DensityKernel::normal(0.0, 0.1)?,
        DensityKernel::truncated_laplace(0.0, 0.03, lambda)?,
        pixels,
    )
}
