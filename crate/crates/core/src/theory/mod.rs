//! Convergence-constant machinery.
//!
//! [`constants`] evaluates the rate and gain constants for a candidate
//! `(λ, d_min, d_max)`, [`check_conditions`] tests the seven feasibility
//! conditions, and [`search_feasible`] shrinks the safeguards until all of
//! them hold. The [`lemma4`] submodule holds the analytical oracle for scalar
//! quadratics under theta-mixing.

pub mod lemma4;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::method::TrajectoryRow;

/// `τ = max(|1 − αμ|, |1 − αL|)`, the gradient-descent contraction factor.
///
/// Defined for `0 < α < 2/L`; see [`tau_within_descent_hypothesis`] for the
/// narrower range `α < 1/L` of the classical statement.
pub fn tau_contraction(alpha: f64, mu: f64, l: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0 / l) {
        return invalid(format!("step {alpha} outside (0, 2/L) with L = {l}"));
    }
    if !(0.0 <= mu && mu <= l) {
        return invalid(format!("need 0 <= mu <= L, got mu={mu}, L={l}"));
    }
    Ok((1.0 - alpha * mu).abs().max((1.0 - alpha * l).abs()))
}

/// Whether `α < 1/L`.
pub fn tau_within_descent_hypothesis(alpha: f64, l: f64) -> bool {
    alpha > 0.0 && alpha < 1.0 / l
}

/// Problem and network data the constants depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryInputs {
    pub b: f64,
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub nu: f64,
    pub n: usize,
    pub m: usize,
}

impl TheoryInputs {
    fn validate(&self) -> Result<()> {
        if !(self.b >= 0.0 && self.mu >= 0.0 && self.l > 0.0 && self.mu <= self.l) {
            return invalid(format!("need b >= 0 and 0 <= mu <= L with L > 0, got {self:?}"));
        }
        if !(0.0..1.0).contains(&self.nu) {
            return invalid(format!("nu must lie in [0, 1), got {}", self.nu));
        }
        if self.n == 0 || self.m == 0 {
            return invalid("n and m must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub inputs: TheoryInputs,
    pub lambda: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// `Δ = d_max − d_min`.
    pub delta: f64,
    /// `λ^m`.
    pub lambda_pow_m: f64,
    /// `C = λ(1 − λ^m)/(1 − λ)`.
    pub c: f64,
    /// `τ = max(|1 − d_min μ|, |1 − d_min L|)`.
    pub tau: f64,
    /// `γ = (b + L) C/(λ^m − ν)`.
    pub gamma: f64,
    /// `γ₁ = (b + L) λ (1 − λ^m)/((1 − λ)(λ^m − ν))`, equal to `γ`.
    pub gamma1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub beta5: f64,
    /// `γ₂ = (β₁ + γ₁β₂)/(1 − γ₁β₂)`.
    pub gamma2: f64,
    /// `γ₃ = (β₄ + β₅γ₁)/(1 − β₃ − γ₁β₅)`.
    pub gamma3: f64,
}

/// Evaluates every constant for the candidate `(λ, d_min, d_max)`.
///
/// A nonpositive `λ − 1 + μ d_min − ΔL` is not an error here; it shows up
/// as a failed condition 3 in [`check_conditions`].
pub fn constants(inputs: &TheoryInputs, lambda: f64, d_min: f64, d_max: f64) -> Result<TheoryConstants> {
    inputs.validate()?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return invalid(format!("lambda must lie in (0, 1), got {lambda}"));
    }
    if !(d_min >= 0.0 && d_max >= d_min && d_max > 0.0) {
        return invalid(format!("need 0 <= d_min <= d_max, d_max > 0, got d_min={d_min}, d_max={d_max}"));
    }
    let TheoryInputs { b, mu, l, nu, m, .. } = *inputs;
    let m_f = m as f64;
    let lambda_pow_m = lambda.powi(m as i32);
    if lambda_pow_m <= nu {
        return Err(Error::InfeasibleWindow { lambda_pow_m, nu });
    }
    // 1 − λ^m without cancellation for λ close to 1.
    let one_minus_pow = -(m_f * lambda.ln()).exp_m1();
    let one_minus_lambda = 1.0 - lambda;
    let c = lambda * one_minus_pow / one_minus_lambda;
    let delta = d_max - d_min;
    let tau = (1.0 - d_min * mu).abs().max((1.0 - d_min * l).abs());
    let window_gap = lambda_pow_m - nu;

    let gamma = (b + l) * c / window_gap;
    let gamma1 = (b + l) * lambda * one_minus_pow / (one_minus_lambda * window_gap);
    let beta1 = l * d_max / (lambda - 1.0 + mu * d_min - delta * l);
    let beta2 = delta / (l * d_max) * beta1;
    let beta5 = c * d_max / lambda_pow_m;
    let beta4 = l * beta5;
    let beta3 = nu / lambda_pow_m + beta4;
    let gamma2 = (beta1 + gamma1 * beta2) / (1.0 - gamma1 * beta2);
    let gamma3 = (beta4 + beta5 * gamma1) / (1.0 - beta3 - gamma1 * beta5);

    Ok(TheoryConstants {
        inputs: *inputs,
        lambda,
        d_min,
        d_max,
        delta,
        lambda_pow_m,
        c,
        tau,
        gamma,
        gamma1,
        beta1,
        beta2,
        beta3,
        beta4,
        beta5,
        gamma2,
        gamma3,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionCheck {
    pub index: usize,
    pub statement: &'static str,
    pub lhs: f64,
    pub threshold: f64,
    pub holds: bool,
    /// `threshold − lhs`; positive exactly when the condition holds.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub conditions: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn feasible(&self) -> bool {
        self.conditions.iter().all(|c| c.holds)
    }

    pub fn margins(&self) -> Vec<f64> {
        self.conditions.iter().map(|c| c.margin).collect()
    }
}

fn strictly_below(index: usize, statement: &'static str, lhs: f64, threshold: f64) -> ConditionCheck {
    let holds = lhs < threshold;
    let margin = if lhs.is_nan() { f64::NEG_INFINITY } else { threshold - lhs };
    ConditionCheck { index, statement, lhs, threshold, holds, margin }
}

/// `a / b` for a positive denominator, `+∞` otherwise.
fn ratio_or_inf(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    }
}

/// Evaluates conditions 1–7. Quotients whose denominator is not positive
/// count as `+∞` and fail.
pub fn check_conditions(tc: &TheoryConstants) -> ConditionReport {
    let TheoryInputs { mu, l, nu, n, .. } = tc.inputs;
    let g = tc.gamma;
    let c6 = g * ratio_or_inf(tc.beta5, 1.0 - tc.beta3);
    let c7 = {
        let left = ratio_or_inf(tc.beta1 + g * tc.beta2, 1.0 - g * tc.beta2);
        let right = ratio_or_inf(tc.beta4 + g * tc.beta5, 1.0 - tc.beta3 - g * tc.beta5);
        left * right
    };
    let conditions = vec![
        strictly_below(1, "nu < lambda^m", nu, tc.lambda_pow_m),
        strictly_below(2, "d_min/n < 2/L", tc.d_min / n as f64, 2.0 / l),
        strictly_below(3, "1 - mu*d_min + Delta*L < lambda", 1.0 - mu * tc.d_min + tc.delta * l, tc.lambda),
        strictly_below(4, "gamma*beta2 < 1", g * tc.beta2, 1.0),
        strictly_below(5, "beta3 < 1", tc.beta3, 1.0),
        strictly_below(6, "beta5*gamma/(1 - beta3) < 1", c6, 1.0),
        strictly_below(
            7,
            "(beta1 + gamma*beta2)/(1 - gamma*beta2) * (beta4 + gamma*beta5)/(1 - beta3 - gamma*beta5) < 1",
            c7,
            1.0,
        ),
    ];
    ConditionReport { conditions }
}

/// A certified feasible choice of safeguards.
#[derive(Debug, Clone, Serialize)]
pub struct FeasiblePoint {
    pub lambda: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub rounds: usize,
    pub constants: TheoryConstants,
    pub report: ConditionReport,
}

pub const SEARCH_BUDGET: usize = 200;

/// The `λ` used by the search for given safeguards: halfway between 1 and
/// the larger of the condition-3 and condition-1 lower bounds.
pub fn search_lambda(inputs: &TheoryInputs, d_min: f64, d_max: f64) -> f64 {
    let cond3 = 1.0 - inputs.mu * d_min + (d_max - d_min) * inputs.l;
    let cond1 = inputs.nu.powf(1.0 / inputs.m as f64);
    let lo = cond3.max(cond1).max(0.0);
    0.5 * (lo + 1.0)
}

/// Evaluates the constants at `(d_min, d_max)` with `λ` from [`search_lambda`].
pub fn evaluate_safeguards(inputs: &TheoryInputs, d_min: f64, d_max: f64) -> Result<(TheoryConstants, ConditionReport)> {
    let lambda = search_lambda(inputs, d_min, d_max);
    if !(lambda < 1.0) {
        return invalid(format!("safeguards d_min={d_min} too small to separate lambda from 1"));
    }
    let tc = constants(inputs, lambda, d_min, d_max)?;
    let report = check_conditions(&tc);
    Ok((tc, report))
}

/// Searches feasible `(λ, d_min, d_max)` following the constructive order:
/// start from `d_min = 1/L` and `d_max/d_min = 1 + μ/(2L)`, then halve both
/// `d_min` and the relative gap `Δ/d_min` each round until all seven
/// conditions hold.
pub fn search_feasible(inputs: &TheoryInputs) -> Result<FeasiblePoint> {
    inputs.validate()?;
    if !(inputs.mu > 0.0) {
        return invalid("condition 3 cannot hold with mu = 0");
    }
    let mut d_min = (2.0 * inputs.n as f64).min(1.0) / inputs.l;
    let mut gap = inputs.mu / (2.0 * inputs.l);
    let mut last_margins = Vec::new();
    for round in 0..SEARCH_BUDGET {
        let d_max = d_min * (1.0 + gap);
        match evaluate_safeguards(inputs, d_min, d_max) {
            Ok((tc, report)) => {
                if report.feasible() {
                    return Ok(FeasiblePoint { lambda: tc.lambda, d_min, d_max, rounds: round, constants: tc, report });
                }
                last_margins = report.margins();
            }
            Err(Error::InvalidArgument(_)) => {
                return Err(Error::SearchExhausted { rounds: round, last_margins });
            }
            Err(e) => return Err(e),
        }
        d_min *= 0.5;
        gap *= 0.5;
    }
    Err(Error::SearchExhausted { rounds: SEARCH_BUDGET, last_margins })
}

/// `(w₁γ₂ + w₂)/(1 − γ₁γ₂)`, the small-gain bound as usually quoted.
pub fn small_gain_bound(gamma1: f64, gamma2: f64, w1: f64, w2: f64) -> Result<f64> {
    let product = gamma1 * gamma2;
    if !(0.0..1.0).contains(&product) {
        return Err(Error::HypothesisViolated(product));
    }
    Ok((w1 * gamma2 + w2) / (1.0 - product))
}

/// Bounds on both sequences implied by `‖a‖ ≤ γ₁‖b‖ + w₁`, `‖b‖ ≤ γ₂‖a‖ + w₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallGainBounds {
    /// `(w₁ + γ₁w₂)/(1 − γ₁γ₂)`
    pub first: f64,
    /// `(γ₂w₁ + w₂)/(1 − γ₁γ₂)`
    pub second: f64,
}

pub fn small_gain_bounds(gamma1: f64, gamma2: f64, w1: f64, w2: f64) -> Result<SmallGainBounds> {
    let second = small_gain_bound(gamma1, gamma2, w1, w2)?;
    let first = (w1 + gamma1 * w2) / (1.0 - gamma1 * gamma2);
    Ok(SmallGainBounds { first, second })
}

/// Transient terms `ω₁, ω₂, ω₃` computed from the first `m + 1` recorded
/// iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientTerms {
    pub omega1: f64,
    pub omega2: f64,
    pub omega3: f64,
}

pub fn transient_terms(tc: &TheoryConstants, rows: &[TrajectoryRow]) -> TransientTerms {
    let m = tc.inputs.m;
    let lam = tc.lambda;
    let head = &rows[..rows.len().min(m + 1)];
    let weighted_max = |f: &dyn Fn(&TrajectoryRow) -> f64| {
        head.iter().enumerate().map(|(k, r)| f(r) / lam.powi(k as i32)).fold(0.0, f64::max)
    };
    let omega1_tilde = weighted_max(&|r| r.tracker_err);
    let omega3_tilde = weighted_max(&|r| r.disagreement);
    let omega1 = tc.lambda_pow_m / (tc.lambda_pow_m - tc.inputs.nu) * omega1_tilde;
    let omega2 = tc.beta2 * omega1 / (1.0 - tc.gamma1 * tc.beta2);
    let omega3 = (omega3_tilde + tc.beta5 * omega1) / (1.0 - tc.beta3 - tc.gamma1 * tc.beta5);
    TransientTerms { omega1, omega2, omega3 }
}

/// Outcome of checking the two coupled gain inequalities on a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallGainAudit {
    pub transients: TransientTerms,
    /// `min_K (γ₂‖x̃‖^{λ,K} + ω₂ − √n‖q̄‖^{λ,K})`
    pub mean_slack: f64,
    /// `min_K (γ₃√n‖q̄‖^{λ,K} + ω₃ − ‖x̃‖^{λ,K})`
    pub disagreement_slack: f64,
}

impl SmallGainAudit {
    pub fn holds(&self) -> bool {
        self.mean_slack >= 0.0 && self.disagreement_slack >= 0.0
    }
}

/// Checks `√n‖q̄‖^{λ,K} ≤ γ₂‖x̃‖^{λ,K} + ω₂` and
/// `‖x̃‖^{λ,K} ≤ γ₃√n‖q̄‖^{λ,K} + ω₃` for every prefix `K` of `rows`, where
/// `‖a‖^{λ,K} = max_{k≤K} ‖a^k‖/λ^k`.
pub fn audit_small_gain(tc: &TheoryConstants, rows: &[TrajectoryRow]) -> SmallGainAudit {
    let transients = transient_terms(tc, rows);
    let sqrt_n = (tc.inputs.n as f64).sqrt();
    let ln_lambda = tc.lambda.ln();
    let (mut q_norm, mut x_norm) = (0.0f64, 0.0f64);
    let (mut mean_slack, mut disagreement_slack) = (f64::INFINITY, f64::INFINITY);
    for (k, r) in rows.iter().enumerate() {
        let w = (-(k as f64) * ln_lambda).exp();
        q_norm = q_norm.max(sqrt_n * r.mean_err * w);
        x_norm = x_norm.max(r.disagreement * w);
        mean_slack = mean_slack.min(tc.gamma2 * x_norm + transients.omega2 - q_norm);
        disagreement_slack = disagreement_slack.min(tc.gamma3 * q_norm + transients.omega3 - x_norm);
    }
    SmallGainAudit { transients, mean_slack, disagreement_slack }
}
