//! Local cost functions, their regularity constants, synthetic data and a
//! centralized reference solver.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stack::{dot, norm, Stack};

/// Standard deviation of the label noise in the synthetic logistic data.
pub const LABEL_NOISE_STD: f64 = 0.4;

/// Tolerance of the centralized solver, relative to `max(1, L)`.
pub const REFERENCE_TOL: f64 = 1e-10;

/// One `(a_i, b_i)` sample per agent with `ℓ₂` regularization `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticInstance {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "R")]
    pub r: f64,
    /// `a[i]` is the feature vector of agent `i`; its last component is 1.
    pub a: Vec<Vec<f64>>,
    /// Labels in `{-1, +1}`.
    pub b: Vec<f64>,
    /// The planted vector the labels were drawn from.
    pub planted: Vec<f64>,
    pub seed: Option<u64>,
}

impl LogisticInstance {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return invalid(format!("regularization must be positive, got {}", self.r));
        }
        if self.a.len() != self.n || self.b.len() != self.n {
            return invalid("feature/label count does not match n");
        }
        if self.a.iter().any(|ai| ai.len() != self.d) {
            return invalid("feature vector of wrong dimension");
        }
        if self.b.iter().any(|&bi| bi != 1.0 && bi != -1.0) {
            return invalid("labels must be +1 or -1");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }
}

/// `f_i(y) = ½ (y − a_i)²` on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticInstance {
    pub a: Vec<f64>,
}

/// `ln(1 + e^{-t})` without overflow.
fn softplus_neg(t: f64) -> f64 {
    if t >= 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// `1 / (1 + e^{t})`, i.e. the sigmoid of `-t`.
fn sigmoid_neg(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

fn logistic_value(inst: &LogisticInstance, i: usize, y: &[f64]) -> f64 {
    let t = inst.b[i] * dot(&inst.a[i], y);
    softplus_neg(t) + 0.5 * inst.r * dot(y, y)
}

fn logistic_gradient_into(inst: &LogisticInstance, i: usize, y: &[f64], out: &mut [f64]) {
    let bi = inst.b[i];
    let t = bi * dot(&inst.a[i], y);
    let s = sigmoid_neg(t);
    for ((o, a), yk) in out.iter_mut().zip(&inst.a[i]).zip(y) {
        *o = -bi * a * s + inst.r * yk;
    }
}

/// Value and gradient of `ln(1 + exp(−b_i a_iᵀ y)) + ½ R ‖y‖²`.
pub fn logistic_local_eval(inst: &LogisticInstance, i: usize, y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if y.len() != inst.d {
        return invalid(format!("point has dimension {}, instance has {}", y.len(), inst.d));
    }
    if i >= inst.n {
        return invalid(format!("agent {i} out of range"));
    }
    let mut g = vec![0.0; inst.d];
    logistic_gradient_into(inst, i, y, &mut g);
    Ok((logistic_value(inst, i, y), g))
}

pub fn quadratic_local_eval(inst: &QuadraticInstance, i: usize, y: f64) -> (f64, f64) {
    let r = y - inst.a[i];
    (0.5 * r * r, r)
}

/// Draws features `a_i = (N(0,1), …, N(0,1), 1)`, a planted standard-normal
/// `y*`, and labels `b_i = sign(a_iᵀ y* + ε_i)` with `ε_i ~ N(0, 0.4²)`.
pub fn generate_logistic_data<R: Rng + ?Sized>(n: usize, d: usize, r: f64, rng: &mut R) -> Result<LogisticInstance> {
    generate_logistic_data_with_noise(n, d, r, LABEL_NOISE_STD, rng)
}

pub fn generate_logistic_data_with_noise<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    r: f64,
    noise_std: f64,
    rng: &mut R,
) -> Result<LogisticInstance> {
    if n == 0 || d < 2 {
        return invalid(format!("need n >= 1 and d >= 2, got n={n}, d={d}"));
    }
    if !(r > 0.0) {
        return invalid(format!("regularization must be positive, got {r}"));
    }
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let planted: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for _ in 0..n {
        let mut ai: Vec<f64> = (0..d - 1).map(|_| StandardNormal.sample(rng)).collect();
        ai.push(1.0);
        let eps = noise.sample(rng);
        b.push(if dot(&ai, &planted) + eps >= 0.0 { 1.0 } else { -1.0 });
        a.push(ai);
    }
    Ok(LogisticInstance { n, d, r, a, b, planted, seed: None })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Problem {
    Logistic(LogisticInstance),
    Quadratic(QuadraticInstance),
}

/// The `n` local functions with their constants `μ_i ≤ L_i`.
#[derive(Debug, Clone)]
pub struct ObjectiveModel {
    problem: Problem,
    mu_i: Vec<f64>,
    l_i: Vec<f64>,
}

impl ObjectiveModel {
    /// `μ_i = R`, `L_i = R + ‖a_i‖²/4`.
    pub fn logistic(inst: LogisticInstance) -> Result<Self> {
        inst.validate()?;
        let mu_i = vec![inst.r; inst.n];
        let l_i = inst.a.iter().map(|ai| inst.r + dot(ai, ai) / 4.0).collect();
        Ok(Self { problem: Problem::Logistic(inst), mu_i, l_i })
    }

    pub fn quadratic(inst: QuadraticInstance) -> Result<Self> {
        if inst.a.is_empty() {
            return invalid("quadratic instance needs at least one target");
        }
        let n = inst.a.len();
        Ok(Self { problem: Problem::Quadratic(inst), mu_i: vec![1.0; n], l_i: vec![1.0; n] })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn n(&self) -> usize {
        self.mu_i.len()
    }

    pub fn d(&self) -> usize {
        match &self.problem {
            Problem::Logistic(inst) => inst.d,
            Problem::Quadratic(_) => 1,
        }
    }

    pub fn mu_i(&self) -> &[f64] {
        &self.mu_i
    }

    pub fn l_i(&self) -> &[f64] {
        &self.l_i
    }

    /// `μ = Σ μ_i`.
    pub fn mu(&self) -> f64 {
        self.mu_i.iter().sum()
    }

    /// `L = Σ L_i`.
    pub fn l(&self) -> f64 {
        self.l_i.iter().sum()
    }

    pub fn local_value(&self, i: usize, y: &[f64]) -> f64 {
        match &self.problem {
            Problem::Logistic(inst) => logistic_value(inst, i, y),
            Problem::Quadratic(inst) => quadratic_local_eval(inst, i, y[0]).0,
        }
    }

    pub fn local_gradient_into(&self, i: usize, y: &[f64], out: &mut [f64]) {
        match &self.problem {
            Problem::Logistic(inst) => logistic_gradient_into(inst, i, y, out),
            Problem::Quadratic(inst) => out[0] = quadratic_local_eval(inst, i, y[0]).1,
        }
    }

    pub fn local_eval(&self, i: usize, y: &[f64]) -> Result<(f64, Vec<f64>)> {
        if y.len() != self.d() {
            return invalid(format!("point has dimension {}, model has {}", y.len(), self.d()));
        }
        if i >= self.n() {
            return invalid(format!("agent {i} out of range"));
        }
        let mut g = vec![0.0; self.d()];
        self.local_gradient_into(i, y, &mut g);
        Ok((self.local_value(i, y), g))
    }

    /// `∇F(x)`: block `i` is `∇f_i(x_i)`.
    pub fn stacked_gradient(&self, x: &Stack) -> Stack {
        let mut g = Stack::zeros(self.n(), self.d());
        for i in 0..self.n() {
            self.local_gradient_into(i, x.agent(i), g.agent_mut(i));
        }
        g
    }

    /// `f(y) = Σ f_i(y)`.
    pub fn total_value(&self, y: &[f64]) -> f64 {
        (0..self.n()).map(|i| self.local_value(i, y)).sum()
    }

    /// `∇f(y) = Σ ∇f_i(y)`.
    pub fn total_gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut total = vec![0.0; self.d()];
        let mut g = vec![0.0; self.d()];
        for i in 0..self.n() {
            self.local_gradient_into(i, y, &mut g);
            total.iter_mut().zip(&g).for_each(|(t, v)| *t += v);
        }
        total
    }
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    pub y_star: Vec<f64>,
    pub grad_norm: f64,
    /// `n` copies of `y_star`.
    pub x_star: Stack,
}

const REFERENCE_MAX_ITER: usize = 1_000_000;

/// Minimizes `f = Σ f_i` centrally, to `‖∇f‖ ≤ tol · max(1, L)`.
pub fn solve_reference(model: &ObjectiveModel, tol: f64) -> Result<ReferenceSolution> {
    solve_reference_from(model, tol, &vec![0.0; model.d()])
}

/// Gradient descent with step `1/L` started at `y0`; the quadratic case is
/// solved exactly by the mean of the targets.
pub fn solve_reference_from(model: &ObjectiveModel, tol: f64, y0: &[f64]) -> Result<ReferenceSolution> {
    if !(model.mu() > 0.0) {
        return Err(Error::UnsupportedModel("reference solver needs a strongly convex model (mu > 0)".into()));
    }
    if y0.len() != model.d() {
        return invalid("starting point has the wrong dimension");
    }
    let n = model.n();
    let y_star = match model.problem() {
        Problem::Quadratic(inst) => vec![inst.a.iter().sum::<f64>() / n as f64],
        Problem::Logistic(_) => {
            let l = model.l();
            let target = tol * l.max(1.0);
            let mut y = y0.to_vec();
            let mut converged = false;
            for _ in 0..REFERENCE_MAX_ITER {
                let g = model.total_gradient(&y);
                if norm(&g) <= target {
                    converged = true;
                    break;
                }
                y.iter_mut().zip(&g).for_each(|(yk, gk)| *yk -= gk / l);
            }
            if !converged {
                return Err(Error::ReferenceFailed(format!(
                    "gradient norm above {target} after {REFERENCE_MAX_ITER} iterations"
                )));
            }
            y
        }
    };
    let grad_norm = norm(&model.total_gradient(&y_star));
    Ok(ReferenceSolution { x_star: Stack::repeat(&y_star, n), y_star, grad_norm })
}
