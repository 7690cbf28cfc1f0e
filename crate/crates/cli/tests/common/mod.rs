//! Second evaluation path for the theory constants, written from the
//! definitions with different groupings: `C` as an explicit geometric sum,
//! `λ^m` by repeated multiplication, and `β₂` without the detour through
//! `β₁ / (L d_max)`.

use gradtrack::theory::TheoryConstants;

pub struct OracleConstants {
    pub lambda_pow_m: f64,
    pub c: f64,
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub beta4: f64,
    pub beta5: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub tau: f64,
}

pub fn oracle_constants(tc: &TheoryConstants) -> OracleConstants {
    let i = tc.inputs;
    let lam = tc.lambda;
    let mut powers = Vec::with_capacity(i.m);
    let mut p = 1.0;
    for _ in 0..i.m {
        p *= lam;
        powers.push(p);
    }
    let lambda_pow_m = p;
    let c: f64 = powers.iter().sum();
    let delta = tc.d_max - tc.d_min;
    let gamma = c * (i.b + i.l) / (lambda_pow_m - i.nu);
    let slack = (lam - 1.0) + (i.mu * tc.d_min - delta * i.l);
    let beta1 = i.l * tc.d_max / slack;
    let beta2 = delta / slack;
    let beta5 = tc.d_max * c / lambda_pow_m;
    let beta4 = i.l * tc.d_max * c / lambda_pow_m;
    let beta3 = (i.nu + i.l * tc.d_max * c) / lambda_pow_m;
    let gamma2 = (beta1 + gamma * beta2) / (1.0 - gamma * beta2);
    let gamma3 = (beta4 + gamma * beta5) / (1.0 - beta3 - gamma * beta5);
    let tau = f64::max((1.0 - tc.d_min * i.mu).abs(), (1.0 - tc.d_min * i.l).abs());
    OracleConstants { lambda_pow_m, c, gamma, beta1, beta2, beta3, beta4, beta5, gamma2, gamma3, tau }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Largest relative disagreement between the library and the oracle.
pub fn max_relative_gap(tc: &TheoryConstants) -> f64 {
    let o = oracle_constants(tc);
    [
        rel(tc.lambda_pow_m, o.lambda_pow_m),
        rel(tc.c, o.c),
        rel(tc.gamma, o.gamma),
        rel(tc.gamma1, o.gamma),
        rel(tc.beta1, o.beta1),
        rel(tc.beta2, o.beta2),
        rel(tc.beta3, o.beta3),
        rel(tc.beta4, o.beta4),
        rel(tc.beta5, o.beta5),
        rel(tc.gamma2, o.gamma2),
        rel(tc.gamma3, o.gamma3),
        rel(tc.tau, o.tau),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
