//! Experiment grid: tracking variants × step policies × a sweep of `d_max`.
//!
//! Every cell at grid index `g` sees the same data instance and the same
//! network stream, seeded from `(seed, g)`, so cells that differ only in
//! variant or policy are paired.

mod csv;
mod plot;

use std::time::Instant;

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{
    connected_geometric_graph, default_geometric_radius, directed_ring, metropolis_weights, regular_weights, Fnv,
    NetworkSequence,
};
use crate::method::{run, RunOptions, RunStatus, StepKind, StepPolicy, TrackingKind, TrackingVariant};
use crate::objective::{generate_logistic_data, solve_reference, ObjectiveModel, QuadraticInstance, REFERENCE_TOL};
use crate::stack::Stack;

pub use csv::{emit_csv, parse_csv, sweep_csv, CsvRow, CSV_HEADER};
pub use plot::{emit_plot, sweep_svg};

/// Snapshots hashed per cell for the fairness check.
pub const CHECKSUM_SNAPSHOTS: usize = 32;

const GRAPH_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Logistic,
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkConfig {
    /// Connected random geometric graph with independent edge dropout.
    GeometricDropout {
        drop_prob: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
    DirectedRing,
    ThetaMixing { theta_min: f64, theta_max: f64 },
    /// Metropolis weights of a connected geometric graph, fixed over time.
    Static {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
}

/// The `d_max` values swept, either explicit or log-spaced in units of `1/L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridConfig {
    Explicit { values: Vec<f64> },
    LogOverL { lo: f64, hi: f64, points: usize },
}

impl GridConfig {
    pub fn resolve(&self, l: f64) -> Vec<f64> {
        match self {
            GridConfig::Explicit { values } => values.clone(),
            GridConfig::LogOverL { lo, hi, points } => log_grid(lo / l, hi / l, *points),
        }
    }
}

/// `points` log-spaced values from `lo` to `hi`, endpoints exact.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let last = points - 1;
            (0..points)
                .map(|i| match i {
                    0 => lo,
                    i if i == last => hi,
                    _ => (a + (b - a) * i as f64 / last as f64).exp(),
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BRule {
    InverseDMax,
    Fixed { b: f64 },
}

impl BRule {
    pub fn b(&self, d_max: f64) -> f64 {
        match self {
            BRule::InverseDMax => 1.0 / d_max,
            BRule::Fixed { b } => *b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "R")]
    pub r: f64,
    pub seed: u64,
    pub eps: f64,
    pub max_iter: usize,
    pub d_min: f64,
    pub variants: Vec<TrackingKind>,
    pub policies: Vec<StepKind>,
    #[serde(default)]
    pub record_wall_time: bool,
    pub network: NetworkConfig,
    pub grid: GridConfig,
    pub b_rule: BRule,
}

/// 25 nodes, 10 features, `R = 1/4`, dropout `1/4`, and 30 values of
/// `d_max` between `1/(50L)` and `10/L`.
pub fn build_default_config() -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemKind::Logistic,
        n: 25,
        d: 10,
        r: 0.25,
        seed: 1,
        eps: 1e-5,
        max_iter: 50_000,
        d_min: 1e-8,
        variants: TrackingKind::ALL.to_vec(),
        policies: vec![StepKind::Constant, StepKind::Spectral, StepKind::LineSearch],
        record_wall_time: false,
        network: NetworkConfig::GeometricDropout { drop_prob: 0.25, radius: None },
        grid: GridConfig::LogOverL { lo: 1.0 / 50.0, hi: 10.0, points: 30 },
        b_rule: BRule::InverseDMax,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate_static()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate_static(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return invalid(format!("eps must be positive, got {}", self.eps));
        }
        if self.n == 0 || self.d == 0 {
            return invalid("n and d must be positive");
        }
        if self.problem == ProblemKind::Quadratic && self.d != 1 {
            return invalid("the quadratic problem is scalar, set d = 1");
        }
        if !(self.r > 0.0) && self.problem == ProblemKind::Logistic {
            return invalid("R must be positive");
        }
        if !(self.d_min > 0.0) {
            return invalid("d_min must be positive");
        }
        if self.variants.is_empty() || self.policies.is_empty() {
            return invalid("need at least one variant and one policy");
        }
        Ok(())
    }

    /// Checks the grid once `L` is known.
    pub fn validate_grid(&self, grid: &[f64]) -> Result<()> {
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("d_max grid must be strictly increasing");
        }
        if grid.iter().any(|v| !(*v >= self.d_min) || !v.is_finite()) {
            return invalid(format!("every grid value must be finite and at least d_min = {}", self.d_min));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = Fnv::default();
    h.write_u64(seed);
    h.write_bytes(tag.as_bytes());
    h.write_u64(index);
    h.finish()
}

/// Data instance, reference solution and network recipe shared by a sweep.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: ObjectiveModel,
    pub reference: crate::objective::ReferenceSolution,
    pub grid: Vec<f64>,
    data_checksum: u64,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate_static()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "data", 0));
        let model = match config.problem {
            ProblemKind::Logistic => {
                ObjectiveModel::logistic(generate_logistic_data(config.n, config.d, config.r, &mut rng)?)?
            }
            ProblemKind::Quadratic => {
                let a = (0..config.n).map(|_| rng.sample(StandardNormal)).collect();
                ObjectiveModel::quadratic(QuadraticInstance { a })?
            }
        };
        let reference = solve_reference(&model, REFERENCE_TOL)
            .map_err(|e| Error::ReferenceFailed(format!("seed {}: {e}", config.seed)))?;
        let grid = config.grid.resolve(model.l());
        config.validate_grid(&grid)?;
        let mut h = Fnv::default();
        for v in &reference.y_star {
            h.write_u64(v.to_bits());
        }
        h.write_u64(model.l().to_bits());
        let data_checksum = h.finish();
        Ok(Self { config, model, reference, grid, data_checksum })
    }

    pub fn data_checksum(&self) -> u64 {
        self.data_checksum
    }

    /// The network stream for grid index `g`.
    pub fn network(&self, g: usize) -> Result<NetworkSequence> {
        let cfg = &self.config;
        let graph_seed = derive_seed(cfg.seed, "graph", 0);
        let stream_seed = derive_seed(cfg.seed, "stream", g as u64);
        let n = cfg.n;
        match &cfg.network {
            NetworkConfig::GeometricDropout { drop_prob, radius } => {
                let r = radius.unwrap_or_else(|| default_geometric_radius(n));
                let (geo, _) = connected_geometric_graph(n, r, graph_seed, GRAPH_ATTEMPTS)?;
                NetworkSequence::geometric_dropout(geo.graph, *drop_prob, stream_seed)
            }
            NetworkConfig::Static { radius } => {
                let r = radius.unwrap_or_else(|| default_geometric_radius(n));
                let (geo, _) = connected_geometric_graph(n, r, graph_seed, GRAPH_ATTEMPTS)?;
                Ok(NetworkSequence::fixed(metropolis_weights(&geo.graph)?))
            }
            NetworkConfig::DirectedRing => Ok(NetworkSequence::fixed(regular_weights(&directed_ring(n)?)?)),
            NetworkConfig::ThetaMixing { theta_min, theta_max } => {
                NetworkSequence::theta_mixing(n, *theta_min, *theta_max, stream_seed)
            }
        }
    }

    /// Starting point with components uniform on `[0, 1]`.
    pub fn x0(&self) -> Stack {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, "x0", 0));
        Stack::from_matrix(DMatrix::from_fn(self.config.d, self.config.n, |_, _| rng.random::<f64>()))
    }

    pub fn policy(&self, kind: StepKind, d_max: f64) -> Result<StepPolicy> {
        StepPolicy::new(kind, self.config.d_min, d_max)
    }

    pub fn variant(&self, kind: TrackingKind, d_max: f64) -> Result<TrackingVariant> {
        TrackingVariant::new(kind, self.config.b_rule.b(d_max))
    }

    /// Runs one cell.
    pub fn run_cell(&self, variant: TrackingKind, policy: StepKind, g: usize) -> Result<CellRecord> {
        let d_max = self.grid[g];
        let seq = self.network(g)?;
        let opts = RunOptions { eps: self.config.eps, max_iter: self.config.max_iter, record: false };
        let start = Instant::now();
        let rec = run(
            &self.model,
            &self.reference,
            &seq,
            self.variant(variant, d_max)?,
            &self.policy(policy, d_max)?,
            self.x0(),
            &opts,
        )?;
        let wall_ms = self.config.record_wall_time.then(|| start.elapsed().as_secs_f64() * 1e3);
        Ok(CellRecord {
            variant,
            policy,
            grid_index: g,
            d_max,
            status: rec.status,
            iterations: rec.iterations,
            comm_vectors: rec.comm_vectors,
            wall_ms,
            stream_checksum: seq.checksum(CHECKSUM_SNAPSHOTS),
            data_checksum: self.data_checksum,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub variant: TrackingKind,
    pub policy: StepKind,
    pub grid_index: usize,
    pub d_max: f64,
    pub status: RunStatus,
    /// `k̄` when converged; the iteration reached otherwise.
    pub iterations: usize,
    pub comm_vectors: u64,
    pub wall_ms: Option<f64>,
    pub stream_checksum: u64,
    pub data_checksum: u64,
}

impl CellRecord {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub l: f64,
    pub mu: f64,
    pub grid: Vec<f64>,
    /// Ordered by variant, then policy, then grid index.
    pub cells: Vec<CellRecord>,
    pub findings: Vec<String>,
}

/// Runs every (variant, policy, d_max) cell, in parallel.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    let exp = Experiment::new(cfg.clone())?;
    let points = exp.grid.len();
    let jobs: Vec<(TrackingKind, StepKind, usize)> = cfg
        .variants
        .iter()
        .flat_map(|v| cfg.policies.iter().flat_map(move |p| (0..points).map(move |g| (*v, *p, g))))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(v, p, g)| exp.run_cell(v, p, g))
        .collect::<Result<Vec<_>>>()?;
    let mut res = SweepResult {
        config: cfg.clone(),
        l: exp.model.l(),
        mu: exp.model.mu(),
        grid: exp.grid.clone(),
        cells,
        findings: Vec::new(),
    };
    res.findings = monotone_findings(&res);
    for f in &res.findings {
        log::warn!("{f}");
    }
    Ok(res)
}

/// Constant-step cells that converge above a divergent `d_max` of the same
/// variant. The boundary can be noisy, so these are reported, not enforced.
pub fn monotone_findings(res: &SweepResult) -> Vec<String> {
    let mut out = Vec::new();
    for v in &res.config.variants {
        let cells = res.cells_for(*v, StepKind::Constant);
        if let Some(first) = cells.iter().position(|c| c.status == RunStatus::Diverged) {
            for c in &cells[first + 1..] {
                if c.status != RunStatus::Diverged {
                    out.push(format!(
                        "{} CONSTANT: d_max={:.6e} is {} although d_max={:.6e} diverged",
                        v.label(),
                        c.d_max,
                        c.status.label(),
                        cells[first].d_max
                    ));
                }
            }
        }
    }
    out
}

/// Measured step-size ratios for one tracking variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSummary {
    pub variant: TrackingKind,
    pub constant_max: Option<f64>,
    pub spectral_max: Option<f64>,
    pub line_search_max: Option<f64>,
}

impl RatioSummary {
    pub fn spectral_ratio(&self) -> Option<f64> {
        Some(self.spectral_max? / self.constant_max?)
    }

    pub fn line_search_ratio(&self) -> Option<f64> {
        Some(self.line_search_max? / self.constant_max?)
    }
}

impl SweepResult {
    pub fn cells_for(&self, variant: TrackingKind, policy: StepKind) -> Vec<&CellRecord> {
        let mut out: Vec<&CellRecord> =
            self.cells.iter().filter(|c| c.variant == variant && c.policy == policy).collect();
        out.sort_by_key(|c| c.grid_index);
        out
    }

    /// Largest `d_max` whose cell converged.
    pub fn max_converged(&self, variant: TrackingKind, policy: StepKind) -> Option<f64> {
        self.cells_for(variant, policy).iter().filter(|c| c.converged()).map(|c| c.d_max).reduce(f64::max)
    }

    pub fn ratios(&self) -> Vec<RatioSummary> {
        self.config
            .variants
            .iter()
            .map(|v| RatioSummary {
                variant: *v,
                constant_max: self.max_converged(*v, StepKind::Constant),
                spectral_max: self.max_converged(*v, StepKind::Spectral),
                line_search_max: self.max_converged(*v, StepKind::LineSearch),
            })
            .collect()
    }
}
