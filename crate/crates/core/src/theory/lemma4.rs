//! Scalar quadratics `f_i(y) = ½(y − a_i)²` under theta-mixing.
//!
//! With `B = 0` and a common constant step `α`, the error `ξ = (q, z)` with
//! `q = x − x*` and `z = u + ∇F(x)` obeys the linear recursion
//! `ξ⁺ = A_k ξ`, where
//!
//! ```text
//! A_k = [ W − J     −αI    ]
//!       [ W − I    W − αI  ]
//! ```
//!
//! as long as `eᵀx⁰ = eᵀa` and `u⁰ = 0`. `W = (1−θ)I + θJ` has eigenvalue
//! 1 on `e` and `1 − θ` on its complement, so `A_k` splits into 2×2 blocks.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::network::theta_mixing;
use crate::objective::QuadraticInstance;
use crate::stack::Stack;

#[derive(Debug, Clone)]
pub struct Lemma4System {
    pub n: usize,
    pub theta: f64,
    pub alpha: f64,
    pub a: DMatrix<f64>,
    /// Block of `A Aᵀ` along the consensus direction.
    pub m1: Matrix2<f64>,
    /// Block of `A Aᵀ` along each of the `n − 1` directions orthogonal to `e`.
    pub mi: Matrix2<f64>,
}

/// Builds `A` for `W = (1−θ)I + θJ` on `n` nodes with step `α`.
pub fn lemma4_matrix(theta: f64, alpha: f64, n: usize) -> Result<Lemma4System> {
    if n < 2 {
        return invalid("the recursion needs at least two nodes");
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    let w = theta_mixing(n, theta)?;
    let w = w.matrix();
    let eye = DMatrix::<f64>::identity(n, n);
    let j = DMatrix::from_element(n, n, 1.0 / n as f64);
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(w - &j));
    a.view_mut((0, n), (n, n)).copy_from(&(&eye * -alpha));
    a.view_mut((n, 0), (n, n)).copy_from(&(w - &eye));
    a.view_mut((n, n), (n, n)).copy_from(&(w - &eye * alpha));

    let m1 = Matrix2::new(alpha * alpha, alpha * (alpha - 1.0), alpha * (alpha - 1.0), (1.0 - alpha).powi(2));
    let lam = 1.0 - theta;
    let off = lam * lam - (1.0 + alpha) * lam + alpha * alpha;
    let mi = Matrix2::new(
        lam * lam + alpha * alpha,
        off,
        off,
        2.0 * lam * lam - 2.0 * (1.0 + alpha) * lam + 1.0 + alpha * alpha,
    );
    Ok(Lemma4System { n, theta, alpha, a, m1, mi })
}

fn sym2_eigenvalues(m: &Matrix2<f64>) -> [f64; 2] {
    let e = m.symmetric_eigenvalues();
    let (lo, hi) = if e[0] <= e[1] { (e[0], e[1]) } else { (e[1], e[0]) };
    [lo, hi]
}

fn block_radius(b: &Matrix2<f64>) -> f64 {
    let (t, det) = (b.trace(), b.determinant());
    let disc = t * t - 4.0 * det;
    if disc >= 0.0 {
        (t.abs() + disc.sqrt()) / 2.0
    } else {
        // Complex pair: both roots have modulus √det.
        det.sqrt()
    }
}

impl Lemma4System {
    pub fn m1_eigenvalues(&self) -> [f64; 2] {
        sym2_eigenvalues(&self.m1)
    }

    pub fn mi_eigenvalues(&self) -> [f64; 2] {
        sym2_eigenvalues(&self.mi)
    }

    /// `‖A‖₂` via the block structure.
    pub fn spectral_norm(&self) -> f64 {
        self.m1_eigenvalues()[1].max(self.mi_eigenvalues()[1]).max(0.0).sqrt()
    }

    /// Blocks of `A` itself: `[[0, −α], [0, 1−α]]` on `e` and
    /// `[[λ, −α], [λ−1, λ−α]]` with `λ = 1−θ` on its complement.
    pub fn a_blocks(&self) -> [Matrix2<f64>; 2] {
        let (alpha, lam) = (self.alpha, 1.0 - self.theta);
        [Matrix2::new(0.0, -alpha, 0.0, 1.0 - alpha), Matrix2::new(lam, -alpha, lam - 1.0, lam - alpha)]
    }

    /// Spectral radius of `A` from its 2×2 blocks. The dense Schur
    /// iteration can stall on this highly repeated spectrum.
    pub fn spectral_radius(&self) -> f64 {
        self.a_blocks().iter().map(block_radius).fold(0.0, f64::max)
    }

    pub fn apply(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.a * xi
    }
}

/// `ξ^k = A_{k−1} ⋯ A_0 ξ^0` for `k = 0..=thetas.len()`.
pub fn lemma4_trajectory(thetas: &[f64], alpha: f64, xi0: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    if !xi0.len().is_multiple_of(2) {
        return invalid("state must stack q and z");
    }
    let n = xi0.len() / 2;
    let mut out = vec![xi0.clone()];
    for &theta in thetas {
        let sys = lemma4_matrix(theta, alpha, n)?;
        let next = sys.apply(out.last().expect("non-empty"));
        out.push(next);
    }
    Ok(out)
}

/// Targets `a_i ~ N(0, 1)` and a start `x⁰` with `eᵀx⁰ = eᵀa`.
pub fn lemma4_instance(n: usize, seed: u64) -> Result<(QuadraticInstance, Stack)> {
    if n < 2 {
        return invalid("the recursion needs at least two nodes");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut x0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let shift = (a.iter().sum::<f64>() - x0.iter().sum::<f64>()) / n as f64;
    x0.iter_mut().for_each(|v| *v += shift);
    let x0 = Stack::from_agents(&x0.iter().map(|v| vec![*v]).collect::<Vec<_>>());
    Ok((QuadraticInstance { a }, x0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaRecursion {
    /// `σ^0, σ^1, …, σ^K` for `K = thetas.len()`.
    pub sigma: Vec<f64>,
    /// First index from which `σ` stays at `σ_max`.
    pub saturation: Option<usize>,
}

/// `σ̂^{k+1} = 1 + θ_k + θ_kθ_{k−1} + … + θ_k⋯θ_1 + σ^0 θ_k⋯θ_0`,
/// summed term by term.
pub fn sigma_hat(thetas: &[f64], sigma0: f64, k: usize) -> f64 {
    let mut total = 1.0;
    let mut prod = 1.0;
    for j in (1..=k).rev() {
        prod *= thetas[j];
        total += prod;
    }
    prod *= thetas[0];
    total + sigma0 * prod
}

/// The reciprocal-step recursion `σ^{k+1} = min(σ_max, 1 + θ_k σ^k)` stated
/// through its closed form: saturated entries continue with `1 + σ_max θ_k`,
/// the rest with [`sigma_hat`].
pub fn sigma_recursion(thetas: &[f64], sigma0: f64, sigma_max: f64) -> Result<SigmaRecursion> {
    if !(sigma0 > 0.0 && sigma_max >= sigma0) {
        return invalid(format!("need 0 < sigma0 <= sigma_max, got {sigma0}, {sigma_max}"));
    }
    if thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return invalid("theta values must lie in [0, 1]");
    }
    let mut sigma = vec![sigma0];
    for k in 0..thetas.len() {
        let prev = sigma[k];
        let next = if prev == sigma_max {
            sigma_max.min(1.0 + sigma_max * thetas[k])
        } else {
            sigma_max.min(sigma_hat(thetas, sigma0, k))
        };
        sigma.push(next);
    }
    let tail = sigma.iter().rposition(|s| *s != sigma_max).map_or(0, |i| i + 1);
    let saturation = (tail < sigma.len()).then_some(tail);
    Ok(SigmaRecursion { sigma, saturation })
}
