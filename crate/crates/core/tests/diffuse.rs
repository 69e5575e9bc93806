//! Discrete diffuse energy: consistency, gradient and minimization.

use std::f64::consts::PI;

use mspl_core::diffuse::{
    build_smoothed, evaluate_diffuse, gradient_diffuse, minimize_diffuse, slope_saturation, DiffuseField,
    DiffuseOptions, DiffuseOutcome, GradedMesh,
};
use mspl_core::sharp::{
    build_clamped_graded_profile, CornerCost, GradedSpacingConfig, SharpOptions, SharpProblem,
};
use mspl_core::{SawtoothProfile, Slope, WeightParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimizes from the smoothed optimum of the sharp problem whose corners
/// cost what a diffuse transition layer costs.
fn minimize_from_proxy(eps: f64, w: WeightParams, n: usize) -> DiffuseOutcome {
    let proxy = SharpProblem::with_corner(eps, w, CornerCost::diffuse_layer(&w))
        .unwrap()
        .optimize(&SharpOptions::default())
        .unwrap();
    let mesh = GradedMesh::new(n, 2.0).unwrap();
    let start = build_smoothed(&proxy.profile, eps.min(0.49 * proxy.profile.min_gap()), &mesh).unwrap();
    minimize_diffuse(&start, eps, w, &DiffuseOptions::default()).unwrap()
}

#[test]
fn sine_profile_converges_at_first_order() {
    let eps = 0.1;
    let w = WeightParams::new(0.0, 0.0);
    // ε² ∫ (π sin)² + ∫ sin⁴/4 + ∫ sin²/π²
    let exact = eps * eps * PI * PI / 2.0 + 3.0 / 32.0 + 1.0 / (2.0 * PI * PI);
    let errors: Vec<f64> = [64, 128, 256, 512, 1024]
        .iter()
        .map(|&n| {
            let f = DiffuseField::from_fn(GradedMesh::new(n, 2.0).unwrap(), |t| (PI * t).sin() / PI);
            (evaluate_diffuse(&f, eps, w).unwrap().total - exact).abs()
        })
        .collect();
    for pair in errors.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!(order >= 0.95, "errors {errors:?}");
    }
    assert!(errors[4] < 1e-4);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mesh = GradedMesh::new(64, 2.0).unwrap();
    for k in 0..20 {
        let w = WeightParams::new(rng.gen_range(-0.5..2.0), rng.gen_range(-1.0..2.5));
        let eps = 10f64.powf(rng.gen_range(-3.0..-1.0));
        let scale = rng.gen_range(0.01..0.5);
        let mut values: Vec<f64> = (0..=mesh.n_elements()).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
        values[0] = 0.0;
        values[mesh.n_elements()] = 0.0;
        let field = DiffuseField::new(mesh.clone(), values).unwrap();
        let g = gradient_diffuse(&field, eps, w).unwrap();
        let h = 1e-6 * scale;
        let mut fd = Vec::with_capacity(g.len());
        for i in 1..mesh.n_elements() {
            let shifted = |d: f64| {
                let mut v = field.values().to_vec();
                v[i] += d;
                evaluate_diffuse(&DiffuseField::new(mesh.clone(), v).unwrap(), eps, w).unwrap().total
            };
            fd.push((shifted(h) - shifted(-h)) / (2.0 * h));
        }
        let norm = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let err = g.iter().zip(&fd).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        assert!(err <= 1e-6 * norm, "field {k}: relative error {}", err / norm);
    }
}

#[test]
fn zero_field_is_critical() {
    let f = DiffuseField::zeros(GradedMesh::new(64, 2.0).unwrap());
    for w in [WeightParams::new(0.0, 0.0), WeightParams::new(0.5, 1.0)] {
        assert!(gradient_diffuse(&f, 1e-2, w).unwrap().iter().all(|&g| g == 0.0));
        assert!((evaluate_diffuse(&f, 1e-2, w).unwrap().total - 0.25).abs() < 1e-15);
    }
}

#[test]
fn smoothed_tooth_pays_one_layer() {
    // continuum values at μ = ε: surface 2ε²/μ, well μ ∫ W(x) dx over [-1, 1] = 4μ/15,
    // bulk 1/12 - μ²/3 from lowering the cap
    let eps = 1e-2;
    let w = WeightParams::new(0.0, 0.0);
    let p = SawtoothProfile::new(vec![0.5], Slope::Up).unwrap();
    let f = build_smoothed(&p, eps, &GradedMesh::new(65536, 2.0).unwrap()).unwrap();
    let e = evaluate_diffuse(&f, eps, w).unwrap();
    let excess = (e.total - 1.0 / 12.0) / eps;
    assert!((excess - (34.0 / 15.0 - eps / 3.0)).abs() < 5e-3, "excess {excess}");
    assert!((e.surface / eps - 2.0).abs() < 5e-3);
    assert!((e.well / eps - 4.0 / 15.0).abs() < 1e-4);
}

#[test]
fn transition_width_near_eps_is_best() {
    let eps = 1e-3;
    let w = WeightParams::new(0.0, 0.0);
    let mesh = GradedMesh::new(16384, 2.0).unwrap();
    let n = SharpProblem::with_corner(eps, w, CornerCost::diffuse_layer(&w))
        .unwrap()
        .optimize(&SharpOptions::default())
        .unwrap()
        .n;
    let gamma = GradedSpacingConfig::default_gamma(w.beta);
    let p = build_clamped_graded_profile(&GradedSpacingConfig::new(gamma, n).unwrap()).unwrap();
    let factors = [0.25, 0.5, 1.0, 2.0, 4.0];
    let energies: Vec<f64> = factors
        .iter()
        .map(|m| {
            let f = build_smoothed(&p, m * eps, &mesh).unwrap();
            evaluate_diffuse(&f, eps, w).unwrap().total
        })
        .collect();
    let best = (0..5).min_by(|&a, &b| energies[a].total_cmp(&energies[b])).unwrap();
    assert!((1..=3).contains(&best), "energies {energies:?}");
}

#[test]
fn minimizer_properties() {
    let w = WeightParams::new(0.0, 0.0);
    let out = minimize_from_proxy(1e-3, w, 4096);
    assert!(out.converged);
    assert!(out.trace.windows(2).all(|t| t[1] <= t[0]));
    assert!(out.grad_max <= (1e-8 * 4096f64.sqrt()).max(out.grad_floor));
    let sat = slope_saturation(&out.field, 1e-3);
    assert!(sat > 0.9, "saturation {sat}");
}

#[test]
fn energy_scale_at_small_eps() {
    let eps = 1e-4;
    let out = minimize_from_proxy(eps, WeightParams::new(0.0, 0.0), 4096);
    let c = out.energy.total / eps.powf(2.0 / 3.0);
    assert!((0.3..=3.0).contains(&c), "constant {c}");
}
