//! Sawtooth family, cell problem and window functional.

use mspl_core::asymptotics::{
    a0_constant, blow_up, cell_density, minimize_cell, predicted_period, sawtooth, window_functional,
    CellDensityParams,
};
use mspl_core::diffuse::{evaluate_diffuse, DiffuseField, GradedMesh};
use mspl_core::WeightParams;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn a0_matches_closed_form() {
    // 2 ∫ (1 - x²)/2 dx over [-1, 1]
    assert!((a0_constant() - 4.0 / 3.0).abs() <= 1e-12);
}

#[test]
fn cell_period_matches_closed_form_on_random_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 100 {
        let w = WeightParams::new(rng.gen_range(0.01..3.0), rng.gen_range(0.01..2.99));
        if !w.limit_ok() {
            continue;
        }
        let s = rng.gen_range(0.01..0.99);
        let c = CellDensityParams::at(s, &w).unwrap();
        let m = minimize_cell(&c).unwrap();
        let closed = (48.0 * (4.0 / 3.0) * c.a_s.sqrt() / c.b_s).cbrt();
        assert!((m.period - closed).abs() <= 1e-8 * closed, "s {s} w {w:?}: {} vs {closed}", m.period);
        // same thing written as the period law at ε = 1
        let law = predicted_period(1.0, s, &w);
        assert!((m.period - law).abs() <= 1e-8 * law);
        checked += 1;
    }
}

#[test]
fn unit_cell() {
    let c = CellDensityParams {
        s: 0.5,
        a0: 4.0 / 3.0,
        a_s: 1.0,
        b_s: 1.0,
    };
    let m = minimize_cell(&c).unwrap();
    assert!((m.period - 4.0).abs() <= 1e-8);
    assert!((m.g_min - 1.0).abs() <= 1e-8);
    assert!((cell_density(2.0, 0.0, &c).unwrap() - 1.0).abs() < 1e-15);
}

#[test]
fn spherical_weights_at_half() {
    let c = CellDensityParams::at(0.5, &WeightParams::new(0.5, 1.0)).unwrap();
    let m = minimize_cell(&c).unwrap();
    assert!((m.period - 4.0 * 0.5f64.powf(5.0 / 12.0)).abs() < 1e-9);
}

/// `ε^{-2/3} F(u)` against the window functional of the blow-up averaged over
/// `s`, for a smooth `u` whose energy density is small near both ends.
#[test]
fn window_functional_averages_to_the_energy() {
    let eps = 1e-3;
    let r = 1.0;
    let u = |t: f64| (std::f64::consts::PI * t).sin() / std::f64::consts::PI;
    for w in [WeightParams::new(0.0, 0.0), WeightParams::new(0.5, 1.0)] {
        let field = DiffuseField::from_fn(GradedMesh::new(8192, 2.0).unwrap(), u);
        let f = evaluate_diffuse(&field, eps, w).unwrap().total / eps.powf(2.0 / 3.0);
        let margin = eps.cbrt() * r * 1.01;
        let n_s = 400;
        let ds = (1.0 - 2.0 * margin) / n_s as f64;
        let mut avg = 0.0;
        for k in 0..n_s {
            let s = margin + (k as f64 + 0.5) * ds;
            let x = blow_up(u, s, eps, r, 400);
            avg += ds * window_functional(&x, s, eps, &w, r).unwrap();
        }
        let rel = (avg - f).abs() / f;
        assert!(rel < 0.05, "w {w:?}: window average {avg} vs {f}");
    }
}

proptest! {
    #[test]
    fn sawtooth_mean_zero_and_unit_slope(h in 1e-3f64..10.0, shift in -20.0f64..20.0) {
        // one period starting anywhere, midpoint rule on the two affine pieces is exact
        let m = 2000;
        let dt = h / m as f64;
        let mut mean = 0.0;
        for i in 0..m {
            let t = shift * h + (i as f64 + 0.5) * dt;
            mean += sawtooth(h, t).unwrap() * dt;
            let a = sawtooth(h, t - 0.25 * dt).unwrap();
            let b = sawtooth(h, t + 0.25 * dt).unwrap();
            let slope = (b - a) / (0.5 * dt);
            // away from the corners the slope is exactly ±1
            let tau = (t / h - (t / h).round()).abs();
            if tau > 1e-3 && (0.5 - tau) > 1e-3 {
                prop_assert!((slope.abs() - 1.0).abs() < 1e-6, "slope {}", slope);
            }
        }
        prop_assert!(mean.abs() <= 1e-9 * h * h.max(1.0));
        prop_assert!(sawtooth(h, 0.0).unwrap() + 0.25 * h == 0.0);
    }

    #[test]
    fn cell_density_is_minimized_at_zero_offset(
        h in 1e-2f64..10.0,
        p in -5.0f64..5.0,
        s in 0.01f64..0.99,
        alpha in 0.0f64..2.0,
        beta in 0.0f64..2.9,
    ) {
        let c = CellDensityParams::at(s, &WeightParams::new(alpha, beta)).unwrap();
        let g0 = cell_density(h, 0.0, &c).unwrap();
        let gp = cell_density(h, p, &c).unwrap();
        prop_assert!(gp >= g0);
        prop_assert!((gp - g0 - c.b_s * p * p).abs() <= 1e-12 * gp);
        if p != 0.0 {
            prop_assert!(gp > g0);
        }
    }
}
