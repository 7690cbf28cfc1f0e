use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use gradtrack::objective::{
    generate_logistic_data, logistic_local_eval, solve_reference, ObjectiveModel, QuadraticInstance, LABEL_NOISE_STD,
    REFERENCE_TOL,
};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn model(seed: u64) -> ObjectiveModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ObjectiveModel::logistic(generate_logistic_data(25, 10, 0.25, &mut rng).unwrap()).unwrap()
}

/// `μ_i‖v‖² − 1e-6 ≤ vᵀ(∇f_i(y + hv) − ∇f_i(y))/h ≤ L_i‖v‖² + 1e-6`.
#[test]
fn difference_quotients_respect_curvature_bounds() {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let models = [
        model(3),
        ObjectiveModel::quadratic(QuadraticInstance { a: (0..25).map(|i| i as f64 / 5.0).collect() }).unwrap(),
    ];
    for m in &models {
        let d = m.d();
        let (mut g0, mut g1) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..100 {
            let i = rng.random_range(0..m.n());
            let y: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..4.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let yh: Vec<f64> = y.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            m.local_gradient_into(i, &y, &mut g0);
            m.local_gradient_into(i, &yh, &mut g1);
            let diff: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| (a - b) / h).collect();
            let q = dot(&v, &diff);
            let vv = dot(&v, &v);
            assert!(q >= m.mu_i()[i] * vv - 1e-6, "{q} below mu bound");
            assert!(q <= m.l_i()[i] * vv + 1e-6, "{q} above L bound");
        }
    }
}

#[test]
fn aggregate_constants_are_sums() {
    let m = model(4);
    assert_eq!(m.mu(), m.mu_i().iter().sum::<f64>());
    assert_eq!(m.l(), m.l_i().iter().sum::<f64>());
    assert!(m.mu_i().iter().zip(m.l_i()).all(|(a, b)| a <= b));
}

/// The empirical label-flip rate matches `E[Φ(−|a_iᵀy*| / σ)]`.
#[test]
fn label_flip_rate_matches_normal_cdf() {
    let phi = Normal::new(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut flips, mut expected, mut count) = (0usize, 0.0, 0usize);
    for _ in 0..400 {
        let inst = generate_logistic_data(50, 10, 0.25, &mut rng).unwrap();
        for (a, b) in inst.a.iter().zip(&inst.b) {
            let t = dot(a, &inst.planted);
            let clean = if t >= 0.0 { 1.0 } else { -1.0 };
            flips += usize::from(*b != clean);
            expected += phi.cdf(-t.abs() / LABEL_NOISE_STD);
            count += 1;
        }
    }
    let (rate, target) = (flips as f64 / count as f64, expected / count as f64);
    assert!((rate - target).abs() <= 0.01, "flip rate {rate} vs {target}");
}

#[test]
fn reference_solution_is_stationary() {
    let m = model(5);
    let r = solve_reference(&m, REFERENCE_TOL).unwrap();
    let g = m.total_gradient(&r.y_star);
    assert!(dot(&g, &g).sqrt() <= REFERENCE_TOL * m.l());
    // Strong convexity: f(y) ≥ f(y*) + ½μ‖y − y*‖².
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f_star = m.total_value(&r.y_star);
    for _ in 0..20 {
        let y: Vec<f64> = r.y_star.iter().map(|v| v + rng.random_range(-1.0..1.0)).collect();
        let dist: f64 = y.iter().zip(&r.y_star).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(m.total_value(&y) >= f_star + 0.5 * m.mu() * dist - 1e-9);
    }
}

#[test]
fn extreme_margins_stay_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = generate_logistic_data(3, 4, 0.25, &mut rng).unwrap();
    for scale in [1e3, -1e3, 1e6, -1e6] {
        let y: Vec<f64> = inst.a[0].iter().map(|v| v * scale).collect();
        let (f, g) = logistic_local_eval(&inst, 0, &y).unwrap();
        assert!(f.is_finite() && g.iter().all(|v| v.is_finite()));
    }
}

proptest! {
    #[test]
    fn logistic_loss_is_convex_along_segments(seed in any::<u64>(), t in 0.0f64..=1.0) {
        let m = model(seed % 16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let i = rng.random_range(0..m.n());
        let y0: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y1: Vec<f64> = (0..10).map(|_| rng.random_range(-3.0..3.0)).collect();
        let yt: Vec<f64> = y0.iter().zip(&y1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let lhs = m.local_value(i, &yt);
        let rhs = (1.0 - t) * m.local_value(i, &y0) + t * m.local_value(i, &y1);
        prop_assert!(lhs <= rhs + 1e-12);
    }
}
