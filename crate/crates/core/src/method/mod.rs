//! The unified gradient-tracking iteration
//!
//! ```text
//! x⁺ = (W ⊗ I) x − D (u + ∇F(x))
//! u⁺ = u + ((W − I) ⊗ I)(∇F(x) + u − B x)
//! ```
//!
//! with `B ∈ {0, bI, bW}` and a per-node step vector `D = diag(d_i)`
//! chosen by a [`StepPolicy`].

mod steps;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::{ConsensusMatrix, NetworkSequence};
use crate::objective::{ObjectiveModel, ReferenceSolution};
use crate::stack::Stack;

pub use steps::{constant_steps, line_search_steps, spectral_steps, StepController, StepKind, StepPolicy};
pub use trajectory::{rlinear_fit, worst_window_ratio, RateFit, TrajectoryRow, TRAJECTORY_HEADER};

/// Runs whose largest agent norm exceeds this multiple of `1 + ‖x*‖` are
/// declared divergent.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrackingKind {
    Zero,
    ScaledIdentity,
    ScaledMixing,
}

impl TrackingKind {
    pub const ALL: [TrackingKind; 3] = [TrackingKind::Zero, TrackingKind::ScaledIdentity, TrackingKind::ScaledMixing];

    pub fn label(self) -> &'static str {
        match self {
            TrackingKind::Zero => "ZERO",
            TrackingKind::ScaledIdentity => "SCALED_IDENTITY",
            TrackingKind::ScaledMixing => "SCALED_MIXING",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label().eq_ignore_ascii_case(s))
    }
}

/// The `B·x` term of the tracker update. `b` stays fixed for the whole run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingVariant {
    kind: TrackingKind,
    b: f64,
}

impl TrackingVariant {
    pub fn zero() -> Self {
        Self { kind: TrackingKind::Zero, b: 0.0 }
    }

    pub fn scaled_identity(b: f64) -> Result<Self> {
        Self::new(TrackingKind::ScaledIdentity, b)
    }

    pub fn scaled_mixing(b: f64) -> Result<Self> {
        Self::new(TrackingKind::ScaledMixing, b)
    }

    pub fn new(kind: TrackingKind, b: f64) -> Result<Self> {
        if !(b >= 0.0 && b.is_finite()) {
            return invalid(format!("tracking weight b must be a nonnegative number, got {b}"));
        }
        let b = if kind == TrackingKind::Zero { 0.0 } else { b };
        Ok(Self { kind, b })
    }

    pub fn kind(&self) -> TrackingKind {
        self.kind
    }

    pub fn b(&self) -> f64 {
        self.b
    }
}

#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// `x̃ = x − e x̄`.
    pub x_tilde: Stack,
    /// `q̄ = x̄ − y*`.
    pub q_bar: Vec<f64>,
    /// `ũ = u + ∇F(x*)`.
    pub u_tilde: Stack,
    /// `ū`, identically zero in exact arithmetic.
    pub u_bar: Vec<f64>,
    /// `max_i ‖x_i − y*‖`.
    pub err_max: f64,
}

#[derive(Debug, Clone)]
pub struct IterateState {
    pub x: Stack,
    pub u: Stack,
    /// `∇F(x)`.
    pub grad: Stack,
    pub k: usize,
    pub diagnostics: Diagnostics,
}

/// Evaluates the iteration against a fixed model and its reference solution.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    model: &'a ObjectiveModel,
    reference: &'a ReferenceSolution,
    grad_star: Stack,
}

impl<'a> Engine<'a> {
    pub fn new(model: &'a ObjectiveModel, reference: &'a ReferenceSolution) -> Self {
        let grad_star = model.stacked_gradient(&reference.x_star);
        Self { model, reference, grad_star }
    }

    pub fn model(&self) -> &ObjectiveModel {
        self.model
    }

    pub fn reference(&self) -> &ReferenceSolution {
        self.reference
    }

    /// `∇F(x*)`.
    pub fn grad_star(&self) -> &Stack {
        &self.grad_star
    }

    /// Starts from `x0` with `u⁰ = 0`.
    pub fn init_state(&self, x0: Stack) -> Result<IterateState> {
        let (n, d) = (self.model.n(), self.model.d());
        self.state_from(x0, Stack::zeros(n, d), 0)
    }

    /// Builds a state from arbitrary `(x, u)`.
    pub fn state_from(&self, x: Stack, u: Stack, k: usize) -> Result<IterateState> {
        let (n, d) = (self.model.n(), self.model.d());
        for (name, s) in [("x", &x), ("u", &u)] {
            if s.n() != n || s.d() != d {
                return invalid(format!("{name} is {}x{} blocks, model needs {n} blocks of size {d}", s.n(), s.d()));
            }
        }
        let grad = self.model.stacked_gradient(&x);
        let diagnostics = self.diagnostics(&x, &u);
        Ok(IterateState { x, u, grad, k, diagnostics })
    }

    fn diagnostics(&self, x: &Stack, u: &Stack) -> Diagnostics {
        let q_bar = x.mean().iter().zip(&self.reference.y_star).map(|(a, b)| a - b).collect();
        Diagnostics {
            x_tilde: x.disagreement(),
            q_bar,
            u_tilde: u.add(&self.grad_star),
            u_bar: u.mean(),
            err_max: x.max_distance_to(&self.reference.y_star),
        }
    }

    /// One step of the iteration with mixing matrix `w` and steps `steps`.
    pub fn iterate(
        &self,
        state: &IterateState,
        w: &ConsensusMatrix,
        variant: TrackingVariant,
        steps: &[f64],
    ) -> Result<IterateState> {
        let n = self.model.n();
        if w.n() != n {
            return Err(Error::ContractViolation(format!("mixing matrix is for {} nodes, model has {n}", w.n())));
        }
        if steps.len() != n || steps.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return invalid("step vector must hold one positive finite step per node");
        }
        let wm = w.matrix();
        let wx = state.x.mix(wm);
        let direction = state.u.add(&state.grad);
        let x_next = wx.sub(&direction.scale_agents(steps));

        let bx = match variant.kind() {
            TrackingKind::Zero => None,
            TrackingKind::ScaledIdentity => Some(state.x.scale(variant.b())),
            TrackingKind::ScaledMixing => Some(wx.scale(variant.b())),
        };
        let v = match bx {
            Some(bx) => direction.sub(&bx),
            None => direction,
        };
        // u + (W − I) v
        let u_next = state.u.add(&v.mix(wm).sub(&v));

        let grad = self.model.stacked_gradient(&x_next);
        let diagnostics = self.diagnostics(&x_next, &u_next);
        Ok(IterateState { x: x_next, u: u_next, grad, k: state.k + 1, diagnostics })
    }

    fn divergence_threshold(&self) -> f64 {
        DIVERGENCE_FACTOR * (1.0 + self.reference.x_star.norm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Converged,
    Diverged,
    MaxIter,
}

impl RunStatus {
    pub fn label(self) -> &'static str {
        match self {
            RunStatus::Converged => "CONVERGED",
            RunStatus::Diverged => "DIVERGED",
            RunStatus::MaxIter => "MAXITER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [RunStatus::Converged, RunStatus::Diverged, RunStatus::MaxIter]
            .into_iter()
            .find(|r| r.label() == s)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Stop once `max_i ‖x_i − y*‖ < eps`.
    pub eps: f64,
    pub max_iter: usize,
    /// Keep per-iteration rows and step vectors.
    pub record: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { eps: 1e-5, max_iter: 50_000, record: true }
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub status: RunStatus,
    /// `k̄` for converged runs, otherwise the last iteration reached.
    pub iterations: usize,
    pub rows: Vec<TrajectoryRow>,
    /// `steps[k]` is the step vector used from iteration `k` to `k + 1`.
    pub steps: Vec<Vec<f64>>,
    /// d-dimensional vectors sent over network edges.
    pub comm_vectors: u64,
    /// Line-search calls that fell back to `d_min`.
    pub step_fallbacks: usize,
    pub final_state: IterateState,
}

/// Runs the method from `x0` until the stopping rule, divergence, or
/// `max_iter`.
pub fn run(
    model: &ObjectiveModel,
    reference: &ReferenceSolution,
    seq: &NetworkSequence,
    variant: TrackingVariant,
    policy: &StepPolicy,
    x0: Stack,
    opts: &RunOptions,
) -> Result<RunRecord> {
    if !(opts.eps > 0.0) {
        return invalid(format!("eps must be positive, got {}", opts.eps));
    }
    if seq.n() != model.n() {
        return invalid(format!("network has {} nodes, model has {}", seq.n(), model.n()));
    }
    let engine = Engine::new(model, reference);
    let threshold = engine.divergence_threshold();
    let mut controller = StepController::new(policy.clone(), model.n());
    let mut state = engine.init_state(x0)?;
    let mut rows = Vec::new();
    let mut step_log = Vec::new();
    let mut comm: u64 = 0;

    let status = loop {
        let diverged = !state.x.is_finite() || state.x.max_agent_norm() > threshold;
        let status = if diverged {
            Some(RunStatus::Diverged)
        } else if state.diagnostics.err_max < opts.eps {
            Some(RunStatus::Converged)
        } else if state.k >= opts.max_iter {
            Some(RunStatus::MaxIter)
        } else {
            None
        };
        if let Some(status) = status {
            if opts.record {
                rows.push(TrajectoryRow::from_state(&state, None, comm));
            }
            break status;
        }

        let w = seq.snapshot(state.k);
        debug_assert!(ConsensusMatrix::new(w.matrix().clone(), w.graph().clone()).is_ok());
        let steps = controller.steps(model, &state, &w);
        let edges = w.graph().edge_count() as u64;
        comm += edges * (2 + u64::from(policy.kind() == StepKind::Spectral));
        if opts.record {
            rows.push(TrajectoryRow::from_state(&state, Some(&steps), comm));
            step_log.push(steps.clone());
        }
        let next = engine.iterate(&state, &w, variant, &steps)?;
        controller.observe(&state, &next);
        state = next;
    };

    Ok(RunRecord {
        status,
        iterations: state.k,
        rows,
        steps: step_log,
        comm_vectors: comm,
        step_fallbacks: controller.fallbacks(),
        final_state: state,
    })
}
