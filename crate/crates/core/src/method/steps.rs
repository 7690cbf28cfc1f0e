//! Per-node step-size policies.
//!
//! Every emitted step lies in `[d_min, d_max]`. The spectral policy keeps a
//! curvature estimate `σ_i` in `[1/d_max, 1/d_min]` and emits `d_i = 1/σ_i`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::network::ConsensusMatrix;
use crate::objective::ObjectiveModel;
use crate::stack::{dot, Stack};

use super::IterateState;

/// Sufficient-decrease constant of the local line search.
pub const ARMIJO_C: f64 = 1e-3;
/// Backtracking factor of the local line search.
pub const BACKTRACK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepKind {
    Constant,
    Spectral,
    LineSearch,
}

impl StepKind {
    pub const ALL: [StepKind; 3] = [StepKind::Constant, StepKind::Spectral, StepKind::LineSearch];

    pub fn label(self) -> &'static str {
        match self {
            StepKind::Constant => "CONSTANT",
            StepKind::Spectral => "SPECTRAL",
            StepKind::LineSearch => "LINE_SEARCH",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepPolicy {
    kind: StepKind,
    d_min: f64,
    d_max: f64,
    armijo_c: f64,
    backtrack: f64,
    initial_sigma: Option<f64>,
}

impl StepPolicy {
    pub fn new(kind: StepKind, d_min: f64, d_max: f64) -> Result<Self> {
        if !(d_min > 0.0 && d_min.is_finite() && d_max >= d_min) {
            return invalid(format!("need 0 < d_min <= d_max, got d_min={d_min}, d_max={d_max}"));
        }
        if kind != StepKind::Spectral && !d_max.is_finite() {
            return invalid("only the spectral policy accepts an unbounded d_max");
        }
        Ok(Self { kind, d_min, d_max, armijo_c: ARMIJO_C, backtrack: BACKTRACK, initial_sigma: None })
    }

    pub fn constant(d_min: f64, d_max: f64) -> Result<Self> {
        Self::new(StepKind::Constant, d_min, d_max)
    }

    /// `d_max = ∞` gives `σ_min = 0`.
    pub fn spectral(d_min: f64, d_max: f64) -> Result<Self> {
        Self::new(StepKind::Spectral, d_min, d_max)
    }

    pub fn line_search(d_min: f64, d_max: f64) -> Result<Self> {
        Self::new(StepKind::LineSearch, d_min, d_max)
    }

    /// Starting curvature `σ⁰` of the spectral policy (default `1/d_max`).
    pub fn with_initial_sigma(mut self, sigma0: f64) -> Result<Self> {
        if !(sigma0 >= self.sigma_min() && sigma0 <= self.sigma_max() && sigma0 > 0.0) {
            return invalid(format!("sigma0 = {sigma0} outside [{}, {}]", self.sigma_min(), self.sigma_max()));
        }
        self.initial_sigma = Some(sigma0);
        Ok(self)
    }

    pub fn with_armijo(mut self, c: f64, backtrack: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0 && backtrack > 0.0 && backtrack < 1.0) {
            return invalid("Armijo constant and backtracking factor must lie in (0, 1)");
        }
        self.armijo_c = c;
        self.backtrack = backtrack;
        Ok(self)
    }

    pub fn kind(&self) -> StepKind {
        self.kind
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn armijo_c(&self) -> f64 {
        self.armijo_c
    }

    pub fn sigma_min(&self) -> f64 {
        1.0 / self.d_max
    }

    pub fn sigma_max(&self) -> f64 {
        1.0 / self.d_min
    }

    pub fn initial_sigma(&self) -> f64 {
        self.initial_sigma.unwrap_or_else(|| self.sigma_min())
    }

    fn clamp_step(&self, d: f64) -> f64 {
        d.clamp(self.d_min, self.d_max)
    }
}

/// Every node uses `d_max`.
pub fn constant_steps(policy: &StepPolicy, n: usize) -> Vec<f64> {
    vec![policy.d_max(); n]
}

/// Spectral update from the previous differences `s_i = x_i⁺ − x_i` and
/// `y_i = ∇f_i(x_i⁺) − ∇f_i(x_i)`:
///
/// ```text
/// σ_i ← P[σ_min, σ_max]( s_iᵀy_i / s_iᵀs_i + σ_i Σ_j w_ij (1 − s_iᵀs_j / s_iᵀs_i) )
/// ```
///
/// A node with `s_i = 0` keeps its previous `σ_i`. Updates `sigma` in place
/// and returns the steps `1/σ_i`.
pub fn spectral_steps(policy: &StepPolicy, sigma: &mut [f64], s: &Stack, y: &Stack, w: &ConsensusMatrix) -> Vec<f64> {
    let n = sigma.len();
    let previous = sigma.to_vec();
    for i in 0..n {
        let si = s.agent(i);
        let ss = dot(si, si);
        if ss == 0.0 {
            continue;
        }
        let rayleigh = dot(si, y.agent(i)) / ss;
        let consensus: f64 = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let wij = w.weight(i, j);
                if wij == 0.0 {
                    0.0
                } else {
                    wij * (1.0 - dot(si, s.agent(j)) / ss)
                }
            })
            .sum();
        let raw = rayleigh + previous[i] * consensus;
        sigma[i] = if raw.is_nan() { previous[i] } else { raw.clamp(policy.sigma_min(), policy.sigma_max()) };
    }
    sigma.iter().map(|&sg| policy.clamp_step(1.0 / sg)).collect()
}

/// Local backtracking from `d_max` by the factor `ρ` until
///
/// ```text
/// f_i(Σ_j w_ij x_j − d z_i) ≤ f_i(x_i) − c d ∇f_i(x_i)ᵀ z_i,   z_i = u_i + ∇f_i(x_i)
/// ```
///
/// Nodes where no tested step above `d_min` qualifies, including all nodes
/// with `∇f_iᵀ z_i ≤ 0`, get `d_min`. Returns the steps and the number of
/// such fallbacks.
pub fn line_search_steps(
    policy: &StepPolicy,
    state: &IterateState,
    w: &ConsensusMatrix,
    model: &ObjectiveModel,
) -> (Vec<f64>, usize) {
    let n = model.n();
    let dim = model.d();
    let wx = state.x.mix(w.matrix());
    let mut fallbacks = 0;
    let mut trial = vec![0.0; dim];
    let steps = (0..n)
        .map(|i| {
            let g = state.grad.agent(i);
            let z: Vec<f64> = state.u.agent(i).iter().zip(g).map(|(u, g)| u + g).collect();
            let slope = dot(g, &z);
            if !(slope > 0.0) {
                log::debug!("node {i}: tracked direction is not a descent direction, using d_min");
                fallbacks += 1;
                return policy.d_min();
            }
            let fx = model.local_value(i, state.x.agent(i));
            let mixed = wx.agent(i);
            let mut d = policy.d_max();
            while d >= policy.d_min() {
                for ((t, m), zk) in trial.iter_mut().zip(mixed).zip(&z) {
                    *t = m - d * zk;
                }
                if model.local_value(i, &trial) <= fx - policy.armijo_c() * d * slope {
                    return d;
                }
                d *= policy.backtrack;
            }
            log::debug!("node {i}: Armijo condition not met above d_min");
            fallbacks += 1;
            policy.d_min()
        })
        .collect();
    (steps, fallbacks)
}

/// Per-run state of a step policy.
#[derive(Debug, Clone)]
pub struct StepController {
    policy: StepPolicy,
    sigma: Vec<f64>,
    diffs: Option<(Stack, Stack)>,
    fallbacks: usize,
}

impl StepController {
    pub fn new(policy: StepPolicy, n: usize) -> Self {
        let sigma = vec![policy.initial_sigma(); n];
        Self { policy, sigma, diffs: None, fallbacks: 0 }
    }

    pub fn policy(&self) -> &StepPolicy {
        &self.policy
    }

    /// Current spectral curvature estimates.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn fallbacks(&self) -> usize {
        self.fallbacks
    }

    /// Steps for the transition out of `state` under mixing matrix `w`.
    pub fn steps(&mut self, model: &ObjectiveModel, state: &IterateState, w: &ConsensusMatrix) -> Vec<f64> {
        match self.policy.kind() {
            StepKind::Constant => constant_steps(&self.policy, model.n()),
            StepKind::Spectral => match &self.diffs {
                Some((s, y)) => spectral_steps(&self.policy, &mut self.sigma, s, y, w),
                None => self.sigma.iter().map(|&sg| self.policy.clamp_step(1.0 / sg)).collect(),
            },
            StepKind::LineSearch => {
                let (steps, fallbacks) = line_search_steps(&self.policy, state, w, model);
                self.fallbacks += fallbacks;
                steps
            }
        }
    }

    /// Records the differences between consecutive iterates.
    pub fn observe(&mut self, prev: &IterateState, next: &IterateState) {
        if self.policy.kind() == StepKind::Spectral {
            self.diffs = Some((next.x.sub(&prev.x), next.grad.sub(&prev.grad)));
        }
    }
}
