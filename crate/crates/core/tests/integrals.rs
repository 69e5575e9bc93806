//! The closed-form bulk integral against independent Gauss–Legendre quadrature.

use mspl_core::model::integrate_power;
use mspl_core::{integrate_weighted_square, AffineSegment, ModelError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

mod common;
use common::converged_quadrature;

/// `∫_{t0}^{t1} t^-β u(t)² dt` in the variable `x = ln t`, which removes the
/// steep growth of the weight near `t = 0`. Each piece between zeros of `u`
/// is integrated separately so the integrand is smooth.
fn oracle(seg: &AffineSegment, beta: f64) -> f64 {
    let mut cuts = vec![seg.t0, seg.t1];
    if seg.slope != 0.0 {
        let root = seg.t0 - seg.u0 / seg.slope;
        if root > seg.t0 && root < seg.t1 {
            cuts.insert(1, root);
        }
    }
    let f = |x: f64| {
        let t = x.exp();
        let u = seg.u0 + seg.slope * (t - seg.t0);
        t.powf(1.0 - beta) * u * u
    };
    cuts.windows(2)
        .map(|w| converged_quadrature(&f, w[0].ln(), w[1].ln()))
        .sum()
}

#[test]
fn random_segments_match_quadrature() {
    let mut rng = ChaCha20Rng::seed_from_u64(20240611);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t0 = 10f64.powf(rng.gen_range(-6.0..-0.01));
        let len = (1.0 - t0) * rng.gen_range(1e-4..1.0f64);
        let slope = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let u0 = rng.gen_range(-0.5..0.5);
        let beta = rng.gen_range(-1.0..2.95);
        let seg = AffineSegment::new(t0, t0 + len, slope, u0).unwrap();
        let exact = integrate_weighted_square(&seg, beta).unwrap();
        let reference = oracle(&seg, beta);
        let rel = (exact - reference).abs() / reference;
        worst = worst.max(rel);
        assert!(rel <= 1e-10, "t0 {t0} len {len} s {slope} u0 {u0} beta {beta}: {exact} vs {reference}");
    }
    eprintln!("worst relative error {worst:e}");
}

#[test]
fn special_exponents_match_quadrature() {
    for beta in [1.0, 2.0, 0.0, -1.0] {
        for (t0, t1, s, u0) in [(0.1, 0.9, 1.0, -0.2), (1e-5, 1e-3, -1.0, 3e-4), (0.5, 0.5 + 1e-6, 1.0, 0.01)] {
            let seg = AffineSegment::new(t0, t1, s, u0).unwrap();
            let exact = integrate_weighted_square(&seg, beta).unwrap();
            let reference = oracle(&seg, beta);
            assert!((exact - reference).abs() <= 1e-10 * reference, "beta {beta} seg {seg:?}");
        }
    }
}

#[test]
fn segments_from_zero() {
    // u = t on [0, 1]: ∫ t^{2-β} = 1 / (3 - β)
    for beta in [-0.5, 0.0, 1.0, 2.0, 2.9] {
        let seg = AffineSegment::new(0.0, 1.0, 1.0, 0.0).unwrap();
        let v = integrate_weighted_square(&seg, beta).unwrap();
        assert!((v - 1.0 / (3.0 - beta)).abs() < 1e-13 / (3.0 - beta));
    }
    let bad = AffineSegment::new(0.0, 0.5, 1.0, 0.1).unwrap();
    assert!(matches!(integrate_weighted_square(&bad, 1.5), Err(ModelError::DivergentIntegral { .. })));
    assert!(integrate_weighted_square(&bad, 0.5).is_ok());
}

#[test]
fn power_integral_against_quadrature() {
    for alpha in [-0.9, -0.5, 0.0, 0.5, 1.0, 2.5] {
        let (a, b) = (0.013f64, 0.71f64);
        let f = |x: f64| x.exp().powf(alpha + 1.0);
        let reference = converged_quadrature(&f, a.ln(), b.ln());
        let v = integrate_power(a, b, alpha);
        assert!((v - reference).abs() <= 1e-11 * reference);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// `t = λ τ`, `u = λ v`: the integral picks up `λ^{3-β}`.
    #[test]
    fn scaling_identity(
        t0 in 1e-4f64..0.4,
        len in 1e-3f64..0.5,
        u0 in -0.3f64..0.3,
        up in any::<bool>(),
        beta in -1.0f64..2.9,
        lambda in 0.05f64..1.0,
    ) {
        let s = if up { 1.0 } else { -1.0 };
        let seg = AffineSegment::new(t0, t0 + len, s, u0).unwrap();
        let scaled = AffineSegment::new(lambda * t0, lambda * (t0 + len), s, lambda * u0).unwrap();
        let a = integrate_weighted_square(&seg, beta).unwrap();
        let b = integrate_weighted_square(&scaled, beta).unwrap();
        prop_assert!((b - lambda.powf(3.0 - beta) * a).abs() <= 1e-11 * b.abs().max(1e-300));
    }

    /// No jump across the special exponents handled by logarithms.
    #[test]
    fn continuous_in_beta(
        t0 in 1e-4f64..0.5,
        len in 1e-3f64..0.5,
        u0 in -0.3f64..0.3,
        special in prop::sample::select(vec![1.0f64, 2.0, 3.0 - 1e-3]),
    ) {
        let beta = if special > 2.5 { 2.0 } else { special };
        let seg = AffineSegment::new(t0, t0 + len, 1.0, u0).unwrap();
        let at = integrate_weighted_square(&seg, beta).unwrap();
        for d in [1e-7, -1e-7, 1e-10, -1e-10] {
            let near = integrate_weighted_square(&seg, beta + d).unwrap();
            prop_assert!((near - at).abs() <= 1e-5 * at.abs().max(1e-300), "beta {} d {}", beta, d);
        }
    }

    #[test]
    fn nonnegative(
        t0 in 0.0f64..0.9,
        len in 1e-6f64..0.1,
        u0 in -0.3f64..0.3,
        beta in -1.0f64..1.0,
    ) {
        let seg = AffineSegment::new(t0, t0 + len, -1.0, u0).unwrap();
        prop_assert!(integrate_weighted_square(&seg, beta).unwrap() >= 0.0);
    }
}
