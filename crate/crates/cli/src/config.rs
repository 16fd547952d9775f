//! Experiment configuration: a TOML file with `[graph]`, `[potentials]`,
//! `[observations]`, `[mesh]`, `[run]` and `[bench]` sections, every field
//! optional with the documented defaults. CLI flags override the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use epbp_core::mesh_oracle::{default_mesh, Mesh, DEFAULT_MESH_POINTS};
use epbp_core::model::{
    build_grid, build_tree, make_denoise_mrf, Graph, GridPotentials, PairwiseMRF,
    TreePotentials, DENOISE_LAMBDA, DEFAULT_TREE_EDGES,
};
use epbp_core::schedule::Schedule;

use crate::error::{Error, Result};
use crate::observations::generate_observations;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Grid,
    Tree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialFamily {
    Grid,
    Tree,
    Denoise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub kind: GraphKind,
    pub rows: usize,
    pub cols: usize,
    /// Tree edge list (0-based node ids); the balanced 8-node default when
    /// absent.
    pub edges: Option<Vec<[usize; 2]>>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            kind: GraphKind::Grid,
            rows: 3,
            cols: 3,
            edges: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialsConfig {
    /// Defaults to the family matching the graph kind.
    pub family: Option<PotentialFamily>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    /// Truncation half-width of the denoising edge potential.
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationsConfig {
    pub seed: u64,
    /// Explicit per-node observations; bypasses the generator entirely.
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub points: usize,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            points: DEFAULT_MESH_POINTS,
            lo: None,
            hi: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub particles: usize,
    pub iterations: usize,
    pub seed: u64,
    pub subquad: Option<usize>,
    pub mh_steps: usize,
    pub mh_proposal_std: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            particles: 100,
            iterations: 20,
            seed: 0,
            subquad: None,
            mh_steps: epbp_core::samplers::DEFAULT_MH_STEPS,
            mh_proposal_std: epbp_core::samplers::DEFAULT_MH_PROPOSAL_STD,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<String>,
    pub particles: Vec<usize>,
    /// Sub-quadratic component counts keyed by particle count (TOML keys are
    /// strings).
    pub subquad: BTreeMap<String, usize>,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub trace_particles: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let subquad = [(10, 5), (20, 6), (50, 8), (100, 10), (200, 11), (500, 13)]
            .into_iter()
            .map(|(n, m)| (n.to_string(), m))
            .collect();
        Self {
            methods: vec!["epbp".into(), "pbp".into()],
            particles: vec![10, 20, 50, 100, 200, 500],
            subquad,
            iterations: 20,
            seeds: vec![1, 2, 3, 4, 5],
            trace_particles: 30,
        }
    }
}

impl BenchConfig {
    pub fn subquad_for(&self, n: usize) -> Option<usize> {
        self.subquad.get(&n.to_string()).copied()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphConfig,
    pub potentials: PotentialsConfig,
    pub observations: ObservationsConfig,
    pub mesh: MeshConfig,
    pub run: RunConfig,
    pub bench: BenchConfig,
}

/// Inference methods addressable from configs and the bench CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Epbp,
    EpbpSubquad,
    Pbp,
    PbpAfterEp,
    PureEp,
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epbp" => Ok(Method::Epbp),
            "epbp-subquad" => Ok(Method::EpbpSubquad),
            "pbp" => Ok(Method::Pbp),
            "pbp-after-ep" => Ok(Method::PbpAfterEp),
            "ep" => Ok(Method::PureEp),
            other => Err(Error::Usage(format!(
                "unknown method {other:?} (expected epbp, epbp-subquad, pbp, pbp-after-ep or ep)"
            ))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Method::Epbp => "epbp",
            Method::EpbpSubquad => "epbp-subquad",
            Method::Pbp => "pbp",
            Method::PbpAfterEp => "pbp-after-ep",
            Method::PureEp => "ep",
        };
        f.write_str(name)
    }
}

/// A fully resolved experiment: model, truth mesh and node schedule.
pub struct Experiment {
    pub mrf: PairwiseMRF,
    pub mesh: Mesh,
    pub schedule: Schedule,
    pub config: ExperimentConfig,
    pub config_hash: String,
}

impl ExperimentConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 (truncated to 16 chars) of the resolved config's canonical
    /// TOML serialization; embedded in every output for reproducibility.
    pub fn hash_hex(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn build_graph(&self) -> Result<Graph> {
        match self.graph.kind {
            GraphKind::Grid => {
                if self.graph.rows == 0 || self.graph.cols == 0 {
                    return Err(Error::Config("grid dimensions must be positive".into()));
                }
                Ok(build_grid(self.graph.rows, self.graph.cols))
            }
            GraphKind::Tree => {
                let edges: Vec<(usize, usize)> = match &self.graph.edges {
                    Some(list) => list.iter().map(|e| (e[0], e[1])).collect(),
                    None => DEFAULT_TREE_EDGES.to_vec(),
                };
                Ok(build_tree(&edges)?)
            }
        }
    }

    pub fn family(&self) -> PotentialFamily {
        self.potentials.family.unwrap_or(match self.graph.kind {
            GraphKind::Grid => PotentialFamily::Grid,
            GraphKind::Tree => PotentialFamily::Tree,
        })
    }

    pub fn build(&self) -> Result<Experiment> {
        let graph = self.build_graph()?;
        let n = graph.node_count();
        let observations = match &self.observations.values {
            Some(values) => {
                if values.len() != n {
                    return Err(Error::Config(format!(
                        "{} explicit observations for {n} nodes",
                        values.len()
                    )));
                }
                values.clone()
            }
            None => generate_observations(n, self.observations.seed),
        };

        let mrf = match self.family() {
            PotentialFamily::Grid => {
                let pots = GridPotentials {
                    alpha1: self.potentials.alpha1.unwrap_or(0.6),
                    alpha2: self.potentials.alpha2.unwrap_or(0.4),
                };
                PairwiseMRF::new(
                    graph,
                    epbp_core::model::grid_node_kernel(&pots)?,
                    epbp_core::densities::DensityKernel::laplace(0.0, 2.0)?,
                    observations,
                )?
            }
            PotentialFamily::Tree => {
                let pots = TreePotentials {
                    alpha1: self.potentials.alpha1.unwrap_or(0.3),
                    alpha2: self.potentials.alpha2.unwrap_or(0.7),
                };
                PairwiseMRF::new(
                    graph,
                    epbp_core::model::tree_node_kernel(&pots)?,
                    epbp_core::densities::DensityKernel::laplace(0.0, 1.0)?,
                    observations,
                )?
            }
            PotentialFamily::Denoise => {
                let lambda = self.potentials.lambda.unwrap_or(DENOISE_LAMBDA);
                if self.graph.kind != GraphKind::Grid {
                    return Err(Error::Config(
                        "denoise potentials need a grid graph".into(),
                    ));
                }
                make_denoise_mrf(self.graph.rows, self.graph.cols, observations, lambda)?
            }
        };

        let mesh = match (self.mesh.lo, self.mesh.hi) {
            (Some(lo), Some(hi)) => Mesh::new(lo, hi, self.mesh.points)?,
            (None, None) => {
                let auto = default_mesh(mrf.observations())?;
                Mesh::new(auto.lo(), auto.hi(), self.mesh.points)?
            }
            _ => {
                return Err(Error::Config(
                    "mesh lo and hi must be given together".into(),
                ))
            }
        };

        let schedule = match self.graph.kind {
            GraphKind::Grid => Schedule::grid_classical(self.graph.rows, self.graph.cols),
            GraphKind::Tree => Schedule::forward_backward(mrf.graph().node_count()),
        };

        Ok(Experiment {
            mesh,
            schedule,
            config_hash: self.hash_hex(),
            config: self.clone(),
            mrf,
        })
    }

    /// Parses and validates the bench method list, enforcing subquad coverage.
    pub fn bench_methods(&self) -> Result<Vec<Method>> {
        if self.bench.methods.is_empty() {
            return Err(Error::Usage("bench method list is empty".into()));
        }
        if self.bench.particles.is_empty() {
            return Err(Error::Usage("bench particle list is empty".into()));
        }
        if self.bench.iterations == 0 {
            return Err(Error::Usage("bench iterations must be at least 1".into()));
        }
        let methods: Vec<Method> = self
            .bench
            .methods
            .iter()
            .map(|m| m.parse())
            .collect::<Result<_>>()?;
        if methods.contains(&Method::EpbpSubquad) {
            for &n in &self.bench.particles {
                match self.bench.subquad_for(n) {
                    Some(m) if m >= 1 => {}
                    Some(_) => {
                        return Err(Error::Usage(format!(
                            "subquad map entry for N={n} must be at least 1"
                        )))
                    }
                    None => {
                        return Err(Error::Usage(format!(
                            "subquad map has no entry for N={n}"
                        )))
                    }
                }
            }
        }
        Ok(methods)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_builds_the_grid_experiment() {
        let cfg = ExperimentConfig::default();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.mrf.graph().node_count(), 9);
        assert_eq!(exp.mesh.len(), 200);
        assert_eq!(exp.schedule.node_count(), 9);
    }

    #[test]
    fn tree_config_uses_default_topology() {
        let cfg = ExperimentConfig::from_toml("[graph]\nkind = \"tree\"\n").unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.mrf.graph().node_count(), 8);
        assert_eq!(exp.mrf.graph().edges().len(), 7);
    }

    #[test]
    fn explicit_observations_bypass_the_generator() {
        let cfg = ExperimentConfig::from_toml(
            "[graph]\nkind = \"grid\"\nrows = 1\ncols = 2\n\
             [observations]\nvalues = [0.5, -0.5]\n",
        )
        .unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.mrf.observations(), &[0.5, -0.5]);
    }

    #[test]
    fn mesh_override_and_partial_range_rejection() {
        let cfg = ExperimentConfig::from_toml(
            "[mesh]\npoints = 50\nlo = -4.0\nhi = 4.0\n",
        )
        .unwrap();
        let exp = cfg.build().unwrap();
        assert_eq!(exp.mesh.len(), 50);
        assert_eq!(exp.mesh.range(), (-4.0, 4.0));

        let cfg = ExperimentConfig::from_toml("[mesh]\nlo = -4.0\n").unwrap();
        assert!(cfg.build().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_toml("[graph]\nknid = \"grid\"\n").is_err());
    }

    #[test]
    fn config_hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        assert_eq!(a.hash_hex(), b.hash_hex());
        b.run.seed = 99;
        assert_ne!(a.hash_hex(), b.hash_hex());
        assert_eq!(a.hash_hex().len(), 16);
    }

    #[test]
    fn bench_method_validation() {
        let mut cfg = ExperimentConfig::default();
        cfg.bench.methods = vec![];
        assert!(matches!(cfg.bench_methods(), Err(Error::Usage(_))));

        let mut cfg = ExperimentConfig::default();
        cfg.bench.methods = vec!["epbp-subquad".into()];
        cfg.bench.particles = vec![10, 37];
        assert!(matches!(cfg.bench_methods(), Err(Error::Usage(_))));

        let mut cfg = ExperimentConfig::default();
        cfg.bench.methods = vec!["epbp".into(), "pbp".into(), "ep".into()];
        assert_eq!(
            cfg.bench_methods().unwrap(),
            vec![Method::Epbp, Method::Pbp, Method::PureEp]
        );

        assert!("nope".parse::<Method>().is_err());
        assert_eq!("pbp-after-ep".parse::<Method>().unwrap(), Method::PbpAfterEp);
    }

    #[test]
    fn default_subquad_map_matches_particle_list() {
        let cfg = BenchConfig::default();
        assert_eq!(cfg.subquad_for(10), Some(5));
        assert_eq!(cfg.subquad_for(20), Some(6));
        assert_eq!(cfg.subquad_for(50), Some(8));
        assert_eq!(cfg.subquad_for(100), Some(10));
        assert_eq!(cfg.subquad_for(200), Some(11));
        assert_eq!(cfg.subquad_for(500), Some(13));
        assert_eq!(cfg.subquad_for(42), None);
    }
}
