//! Time-varying communication graphs and doubly stochastic mixing matrices.
//!
//! An edge `(i, j)` means node `j` sends to node `i`, so a mixing matrix may
//! carry a nonzero `w_ij` only when `(i, j)` is an edge or `i == j`.
//! Self-loops are implicit and never stored.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

/// Row and column sums of a [`ConsensusMatrix`] must match 1 to this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Digraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Digraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return invalid(format!("edge ({i}, {j}) out of range for {n} nodes"));
            }
            if i == j {
                return invalid(format!("self-loop ({i}, {i}) is implicit and may not be stored"));
            }
            if !set.insert((i, j)) {
                return invalid(format!("duplicate edge ({i}, {j})"));
            }
        }
        Ok(Self { n, edges: set })
    }

    pub fn empty(n: usize) -> Self {
        Self { n, edges: BTreeSet::new() }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Self { n, edges }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(i, j)| self.edges.contains(&(j, i)))
    }

    /// Number of nodes `i` receives from.
    pub fn in_degree(&self, i: usize) -> usize {
        self.edges.range((i, 0)..(i + 1, 0)).count()
    }

    /// Number of nodes `j` sends to.
    pub fn out_degree(&self, j: usize) -> usize {
        self.edges.iter().filter(|&&(_, s)| s == j).count()
    }

    /// Undirected edges `{i, j}` with `i < j` of a symmetric graph.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied().filter(|&(i, j)| i < j)
    }

    /// Strong connectivity (plain connectivity for symmetric graphs).
    pub fn is_strongly_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let reaches_all = |forward: bool| {
            let mut seen = vec![false; self.n];
            let mut queue = VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(v) = queue.pop_front() {
                for &(i, j) in &self.edges {
                    let (from, to) = if forward { (j, i) } else { (i, j) };
                    if from == v && !seen[to] {
                        seen[to] = true;
                        queue.push_back(to);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reaches_all(true) && reaches_all(false)
    }
}

/// Node placements and the resulting undirected geometric graph.
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    pub positions: Vec<[f64; 2]>,
    pub graph: Digraph,
}

/// Places `n` nodes uniformly on the unit square and links every pair within
/// Euclidean distance `radius` (in both directions).
pub fn random_geometric_graph<R: Rng + ?Sized>(
    n: usize,
    radius: f64,
    rng: &mut R,
) -> Result<GeometricGraph> {
    if n < 2 {
        return invalid(format!("geometric graph needs at least 2 nodes, got {n}"));
    }
    if !(radius > 0.0) {
        return invalid(format!("radius must be positive, got {radius}"));
    }
    let positions: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            if dx * dx + dy * dy <= r2 {
                edges.push((i, j));
                edges.push((j, i));
            }
        }
    }
    Ok(GeometricGraph { positions, graph: Digraph::new(n, edges)? })
}

/// Regenerates a geometric graph from successive seeds until it is connected.
///
/// Returns the graph together with the seed that produced it.
pub fn connected_geometric_graph(
    n: usize,
    radius: f64,
    seed: u64,
    max_attempts: usize,
) -> Result<(GeometricGraph, u64)> {
    for attempt in 0..max_attempts as u64 {
        let s = seed.wrapping_add(attempt);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let g = random_geometric_graph(n, radius, &mut rng)?;
        if g.graph.is_strongly_connected() {
            return Ok((g, s));
        }
    }
    invalid(format!(
        "no connected geometric graph with n={n}, radius={radius} in {max_attempts} attempts from seed {seed}"
    ))
}

/// Communication radius `sqrt(ln(n)/n)` that makes geometric graphs connected
/// with high probability.
pub fn default_geometric_radius(n: usize) -> f64 {
    ((n as f64).ln() / n as f64).sqrt()
}

pub fn directed_ring(n: usize) -> Result<Digraph> {
    if n < 2 {
        return invalid(format!("ring needs at least 2 nodes, got {n}"));
    }
    Digraph::new(n, (0..n).map(|i| (i, (i + 1) % n)))
}

/// Removes each undirected edge independently with probability `p`; both
/// directions are dropped together.
pub fn drop_edges<R: Rng + ?Sized>(g: &Digraph, p: f64, rng: &mut R) -> Result<Digraph> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("drop probability must lie in [0, 1], got {p}"));
    }
    if !g.is_symmetric() {
        return invalid("edge dropout requires a symmetric graph");
    }
    let mut kept = Vec::new();
    for (i, j) in g.undirected_edges() {
        if !rng.random_bool(p) {
            kept.push((i, j));
            kept.push((j, i));
        }
    }
    Digraph::new(g.n(), kept)
}

/// A doubly stochastic matrix respecting the sparsity of its graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusMatrix {
    entries: DMatrix<f64>,
    graph: Digraph,
}

impl ConsensusMatrix {
    /// Validates stochasticity, nonnegativity and sparsity.
    pub fn new(entries: DMatrix<f64>, graph: Digraph) -> Result<Self> {
        let n = graph.n();
        if entries.nrows() != n || entries.ncols() != n {
            return invalid(format!(
                "matrix is {}x{}, graph has {n} nodes",
                entries.nrows(),
                entries.ncols()
            ));
        }
        for i in 0..n {
            for j in 0..n {
                let w = entries[(i, j)];
                if !(w >= 0.0) {
                    return Err(Error::ContractViolation(format!("entry ({i}, {j}) = {w} is negative")));
                }
                if i != j && w != 0.0 && !graph.has_edge(i, j) {
                    return Err(Error::ContractViolation(format!(
                        "entry ({i}, {j}) = {w} on a non-edge"
                    )));
                }
            }
        }
        for i in 0..n {
            let row: f64 = entries.row(i).sum();
            let col: f64 = entries.column(i).sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL || (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::ContractViolation(format!(
                    "row/column {i} sums to {row}/{col}, expected 1"
                )));
            }
        }
        Ok(Self { entries, graph })
    }

    pub fn identity(n: usize) -> Self {
        Self { entries: DMatrix::identity(n, n), graph: Digraph::empty(n) }
    }

    /// Exact averaging `(1/n) e eᵀ` on the complete graph.
    pub fn averaging(n: usize) -> Self {
        Self {
            entries: DMatrix::from_element(n, n, 1.0 / n as f64),
            graph: Digraph::complete(n),
        }
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Edge-list text: one `i j w_ij` line per nonzero entry (diagonal
    /// included), row-major, weights with 17 significant digits.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n() {
            for j in 0..self.n() {
                let w = self.entries[(i, j)];
                if w != 0.0 {
                    let _ = writeln!(out, "{i} {j} {w:.16e}");
                }
            }
        }
        out
    }

    /// Inverse of [`ConsensusMatrix::to_edge_list`].
    pub fn from_edge_list(n: usize, text: &str) -> Result<Self> {
        let mut entries = DMatrix::zeros(n, n);
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parse_err = || Error::Parse(format!("line {}: expected `i j w`, got {line:?}", lineno + 1));
            if fields.len() != 3 {
                return Err(parse_err());
            }
            let i: usize = fields[0].parse().map_err(|_| parse_err())?;
            let j: usize = fields[1].parse().map_err(|_| parse_err())?;
            let w: f64 = fields[2].parse().map_err(|_| parse_err())?;
            if i >= n || j >= n {
                return Err(parse_err());
            }
            entries[(i, j)] = w;
            if i != j {
                edges.push((i, j));
            }
        }
        Self::new(entries, Digraph::new(n, edges)?)
    }
}

/// Metropolis weights `w_ij = 1/(1 + max(deg_i, deg_j))` on a symmetric graph,
/// with the diagonal absorbing the remainder of each row.
pub fn metropolis_weights(g: &Digraph) -> Result<ConsensusMatrix> {
    if !g.is_symmetric() {
        return invalid("Metropolis weights require a symmetric graph");
    }
    let n = g.n();
    let deg: Vec<usize> = (0..n).map(|i| g.in_degree(i)).collect();
    let mut w = DMatrix::zeros(n, n);
    for (i, j) in g.edges() {
        w[(i, j)] = 1.0 / (1.0 + deg[i].max(deg[j]) as f64);
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
        w[(i, i)] = 1.0 - off;
    }
    ConsensusMatrix::new(w, g.clone())
}

/// Uniform weights `1/(k+1)` on a digraph whose nodes all have in- and
/// out-degree `k` (e.g. a directed ring, giving `½(I + P)`).
pub fn regular_weights(g: &Digraph) -> Result<ConsensusMatrix> {
    let n = g.n();
    let k = g.in_degree(0);
    if (0..n).any(|i| g.in_degree(i) != k || g.out_degree(i) != k) {
        return invalid("regular weights need equal in- and out-degrees at every node");
    }
    let share = 1.0 / (k as f64 + 1.0);
    let mut w = DMatrix::from_diagonal_element(n, n, share);
    for (i, j) in g.edges() {
        w[(i, j)] = share;
    }
    ConsensusMatrix::new(w, g.clone())
}

/// `W = (1−θ) I + θ (1/n) e eᵀ`.
pub fn theta_mixing(n: usize, theta: f64) -> Result<ConsensusMatrix> {
    if !(theta > 0.0 && theta < 1.0) {
        return invalid(format!("theta must lie in (0, 1), got {theta}"));
    }
    if n == 0 {
        return invalid("theta mixing needs at least one node");
    }
    let avg = theta / n as f64;
    let w = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 - theta + avg } else { avg });
    ConsensusMatrix::new(w, Digraph::complete(n))
}

/// Where the snapshots of a [`NetworkSequence`] come from.
#[derive(Debug, Clone)]
pub enum SequenceSource {
    /// Fixed list of matrices, replayed periodically.
    Recorded(Vec<ConsensusMatrix>),
    /// Metropolis weights of `base` after independent edge dropout.
    GeometricDropout { base: Digraph, drop_prob: f64 },
    /// `theta_mixing(n, θ_k)` with `θ_k` uniform on `[theta_min, theta_max]`.
    ThetaMixing { n: usize, theta_min: f64, theta_max: f64 },
}

/// A replayable sequence `W^0, W^1, …`.
///
/// Generated snapshots depend only on `(seed, k)`: each index gets its own
/// ChaCha stream, so any snapshot can be replayed out of order.
#[derive(Debug, Clone)]
pub struct NetworkSequence {
    source: SequenceSource,
    seed: u64,
}

impl NetworkSequence {
    pub fn recorded(matrices: Vec<ConsensusMatrix>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return invalid("recorded sequence must hold at least one matrix");
        };
        let n = first.n();
        if matrices.iter().any(|m| m.n() != n) {
            return invalid("recorded matrices differ in size");
        }
        Ok(Self { source: SequenceSource::Recorded(matrices), seed: 0 })
    }

    pub fn fixed(w: ConsensusMatrix) -> Self {
        Self { source: SequenceSource::Recorded(vec![w]), seed: 0 }
    }

    pub fn geometric_dropout(base: Digraph, drop_prob: f64, seed: u64) -> Result<Self> {
        if !base.is_symmetric() {
            return invalid("dropout sequence needs a symmetric base graph");
        }
        if !(0.0..=1.0).contains(&drop_prob) {
            return invalid(format!("drop probability must lie in [0, 1], got {drop_prob}"));
        }
        Ok(Self { source: SequenceSource::GeometricDropout { base, drop_prob }, seed })
    }

    pub fn theta_mixing(n: usize, theta_min: f64, theta_max: f64, seed: u64) -> Result<Self> {
        if !(theta_min > 0.0 && theta_max < 1.0 && theta_min <= theta_max) {
            return invalid(format!("theta range [{theta_min}, {theta_max}] must sit inside (0, 1)"));
        }
        Ok(Self { source: SequenceSource::ThetaMixing { n, theta_min, theta_max }, seed })
    }

    pub fn source(&self) -> &SequenceSource {
        &self.source
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        match &self.source {
            SequenceSource::Recorded(ms) => ms[0].n(),
            SequenceSource::GeometricDropout { base, .. } => base.n(),
            SequenceSource::ThetaMixing { n, .. } => *n,
        }
    }

    fn stream(&self, k: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        rng
    }

    /// Mixing parameter `θ_k` for theta-mixing sequences.
    pub fn theta(&self, k: usize) -> Option<f64> {
        match &self.source {
            SequenceSource::ThetaMixing { theta_min, theta_max, .. } => {
                let u: f64 = self.stream(k).random();
                Some(theta_min + (theta_max - theta_min) * u)
            }
            _ => None,
        }
    }

    /// The mixing matrix `W^k`.
    pub fn snapshot(&self, k: usize) -> ConsensusMatrix {
        match &self.source {
            SequenceSource::Recorded(ms) => ms[k % ms.len()].clone(),
            SequenceSource::GeometricDropout { base, drop_prob } => {
                let g = drop_edges(base, *drop_prob, &mut self.stream(k)).expect("validated at construction");
                metropolis_weights(&g).expect("dropout keeps the graph symmetric")
            }
            SequenceSource::ThetaMixing { n, .. } => {
                let theta = self.theta(k).expect("theta-mixing source");
                theta_mixing(*n, theta).expect("validated at construction")
            }
        }
    }

    /// FNV-1a digest of the first `count` snapshots, for checking that two
    /// consumers see the same stream.
    pub fn checksum(&self, count: usize) -> u64 {
        let mut h = Fnv::default();
        for k in 0..count {
            for v in self.snapshot(k).matrix().iter() {
                h.write_u64(v.to_bits());
            }
        }
        h.finish()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    pub(crate) fn write_bytes(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= *b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn write_u64(&mut self, v: u64) {
        self.write_bytes(&v.to_le_bytes());
    }

    pub(crate) fn finish(self) -> u64 {
        self.0
    }
}

/// `M^k_m = W^k W^{k−1} ⋯ W^{k−m+1}`, with `M^k_0 = I`.
pub fn window_product(seq: &NetworkSequence, k: usize, m: usize) -> Result<DMatrix<f64>> {
    if m > k + 1 {
        return invalid(format!("window of length {m} ending at {k} starts before iteration 0"));
    }
    let n = seq.n();
    let mut prod = DMatrix::identity(n, n);
    for t in 0..m {
        prod *= seq.snapshot(k - t).matrix();
    }
    Ok(prod)
}

/// Largest singular value.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// `J = I − (1/n) e eᵀ`.
pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

#[derive(Debug, Clone)]
pub struct WindowAnalysis {
    pub m: usize,
    /// `nu[t]` is the contraction of the window ending at iteration `m − 1 + t`.
    pub nu: Vec<f64>,
    pub nu_sup: f64,
}

impl WindowAnalysis {
    /// Whether every analysed window strictly contracts the disagreement.
    pub fn contracts(&self) -> bool {
        self.nu_sup < 1.0
    }
}

/// Computes `ν_k = ‖J M^k_m J‖₂` for every complete window inside the first
/// `horizon` snapshots.
pub fn window_contraction(seq: &NetworkSequence, horizon: usize, m: usize) -> Result<WindowAnalysis> {
    if m == 0 || horizon < m {
        return invalid(format!("need horizon >= m >= 1, got horizon={horizon}, m={m}"));
    }
    let j = centering_matrix(seq.n());
    let nu: Vec<f64> = ((m - 1)..horizon)
        .map(|k| window_product(seq, k, m).map(|p| spectral_norm(&(&j * p * &j))))
        .collect::<Result<_>>()?;
    let nu_sup = nu.iter().copied().fold(0.0, f64::max);
    Ok(WindowAnalysis { m, nu, nu_sup })
}
