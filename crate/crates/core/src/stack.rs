//! Stacked per-agent vectors.
//!
//! A vector in `R^{nd}` made of `n` blocks of length `d` is stored as a
//! `d × n` column-major matrix, so block `i` is the contiguous slice
//! `data[i*d .. (i+1)*d]`. Applying `W ⊗ I_d` is then `X · Wᵀ`.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    data: DMatrix<f64>,
}

impl Stack {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { data: DMatrix::zeros(d, n) }
    }

    /// `n` copies of `y`.
    pub fn repeat(y: &[f64], n: usize) -> Self {
        let d = y.len();
        Self { data: DMatrix::from_fn(d, n, |r, _| y[r]) }
    }

    pub fn from_agents(agents: &[Vec<f64>]) -> Self {
        let n = agents.len();
        let d = agents.first().map_or(0, Vec::len);
        assert!(agents.iter().all(|a| a.len() == d), "ragged agent blocks");
        Self { data: DMatrix::from_fn(d, n, |r, c| agents[c][r]) }
    }

    pub fn from_matrix(data: DMatrix<f64>) -> Self {
        Self { data }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn d(&self) -> usize {
        self.data.nrows()
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.data.as_slice()[i * d..(i + 1) * d]
    }

    pub fn agent_mut(&mut self, i: usize) -> &mut [f64] {
        let d = self.d();
        &mut self.data.as_mut_slice()[i * d..(i + 1) * d]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    /// `(W ⊗ I) x`.
    pub fn mix(&self, w: &DMatrix<f64>) -> Stack {
        Self { data: &self.data * w.transpose() }
    }

    pub fn add(&self, other: &Stack) -> Stack {
        Self { data: &self.data + &other.data }
    }

    pub fn sub(&self, other: &Stack) -> Stack {
        Self { data: &self.data - &other.data }
    }

    pub fn scale(&self, a: f64) -> Stack {
        Self { data: &self.data * a }
    }

    /// Scales block `i` by `factors[i]`, i.e. `D x` with `D = diag(d_i I)`.
    pub fn scale_agents(&self, factors: &[f64]) -> Stack {
        assert_eq!(factors.len(), self.n());
        let mut out = self.clone();
        for (i, f) in factors.iter().enumerate() {
            out.agent_mut(i).iter_mut().for_each(|v| *v *= f);
        }
        out
    }

    /// Average block `(1/n) Σ x_i`.
    pub fn mean(&self) -> Vec<f64> {
        self.data.column_mean().iter().copied().collect()
    }

    /// `x − e ⊗ x̄`.
    pub fn disagreement(&self) -> Stack {
        let mean = self.mean();
        let mut out = self.clone();
        for i in 0..self.n() {
            for (v, m) in out.agent_mut(i).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn agent_norm(&self, i: usize) -> f64 {
        self.agent(i).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_agent_norm(&self) -> f64 {
        (0..self.n()).map(|i| self.agent_norm(i)).fold(0.0, f64::max)
    }

    /// `max_i ‖x_i − y‖`.
    pub fn max_distance_to(&self, y: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| {
                self.agent(i)
                    .iter()
                    .zip(y)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sup_distance(&self, other: &Stack) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
