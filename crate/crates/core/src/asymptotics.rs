//! Small-ε description of minimizers: the sawtooth family, the cell problem
//! that selects the local period, the blown-up window functional, and the
//! measurement of empirical periods.

use serde::{Deserialize, Serialize};

use crate::diffuse::DiffuseField;
use crate::error::{ModelError, Result};
use crate::model::{integrate_power, integrate_weighted_square, AffineSegment, SawtoothProfile, WeightParams};
use crate::optim::golden_section;
use crate::quad;

/// Double-well potential `W(x) = (1 - x²)² / 4`.
pub fn double_well(x: f64) -> f64 {
    let d = 1.0 - x * x;
    0.25 * d * d
}

/// `W'(x) = x³ - x`.
pub fn double_well_derivative(x: f64) -> f64 {
    x * x * x - x
}

/// `W''(x) = 3x² - 1`.
pub fn double_well_second(x: f64) -> f64 {
    3.0 * x * x - 1.0
}

/// `A0 = 2 ∫_{-1}^{1} sqrt(W)`, by Gauss–Legendre quadrature.
pub fn a0_constant() -> f64 {
    2.0 * quad::integrate(|x| double_well(x).sqrt(), -1.0, 1.0, 2, 8)
}

/// `A0` for the quartic well, `4/3`.
pub(crate) fn a0_closed_form() -> f64 {
    4.0 / 3.0
}

/// `L = (96 ∫ sqrt(W))^{1/3} = (48 A0)^{1/3}`, equal to 4.
pub fn period_constant() -> f64 {
    (48.0 * a0_constant()).cbrt()
}

/// Exponent of the local period law, `(alpha + 2 beta) / 6`.
pub fn period_exponent(w: &WeightParams) -> f64 {
    (w.alpha + 2.0 * w.beta) / 6.0
}

/// Predicted physical period near `s`: `ε^{1/3} L s^{(α+2β)/6}`.
pub fn predicted_period(eps: f64, s: f64, w: &WeightParams) -> f64 {
    eps.cbrt() * period_constant() * s.powf(period_exponent(w))
}

/// `h`-periodic sawtooth equal to `|t| - h/4` on `(-h/2, h/2]`.
pub fn sawtooth(h: f64, t: f64) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(ModelError::InvalidPeriod(h));
    }
    let tau = t - h * ((t + 0.5 * h) / h).floor();
    Ok(tau.abs() - 0.25 * h)
}

/// Coefficients of the cell density at a location `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellDensityParams {
    pub s: f64,
    pub a0: f64,
    /// `a(s) = s^alpha`
    pub a_s: f64,
    /// `b(s) = s^-beta`
    pub b_s: f64,
}

impl CellDensityParams {
    pub fn at(s: f64, w: &WeightParams) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(ModelError::InvalidConfig(format!("location s must lie in (0, 1), got {s}")));
        }
        Ok(Self {
            s,
            a0: a0_constant(),
            a_s: w.surface_weight(s),
            b_s: w.bulk_weight(s),
        })
    }
}

/// `g(h, p) = A0 sqrt(a_s) / h + b_s h² / 12 + b_s p²`, where `h` is the
/// length of one affine piece (half the period) and `p` its mean offset.
pub fn cell_density(h: f64, p: f64, c: &CellDensityParams) -> Result<f64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(ModelError::InvalidPeriod(h));
    }
    Ok(c.a0 * c.a_s.sqrt() / h + c.b_s * h * h / 12.0 + c.b_s * p * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellMinimum {
    pub h_half: f64,
    pub g_min: f64,
    pub period: f64,
}

/// Minimizes `g(·, 0)` by golden-section search after bracketing the
/// minimizer (up to 60 doublings/halvings of `[1/2, 2]`).
pub fn minimize_cell(c: &CellDensityParams) -> Result<CellMinimum> {
    let surface = c.a0 * c.a_s.sqrt();
    let bulk = c.b_s;
    if !(surface > 0.0 && bulk > 0.0) || !surface.is_finite() || !bulk.is_finite() {
        return Err(ModelError::BracketFailure);
    }
    // g'(h) = -S/h² + B h / 6 changes sign from - to + at the minimizer
    let slope = |h: f64| -surface / (h * h) + bulk * h / 6.0;
    let (mut lo, mut hi) = (0.5, 2.0);
    let mut steps = 0;
    while slope(hi) <= 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > 60 {
            return Err(ModelError::BracketFailure);
        }
    }
    steps = 0;
    while slope(lo) >= 0.0 {
        lo *= 0.5;
        steps += 1;
        if steps > 60 {
            return Err(ModelError::BracketFailure);
        }
    }
    // g(h1) - g(h2) = (h2 - h1) [S / (h1 h2) - B (h1 + h2) / 12], free of cancellation
    let h_half = golden_section(lo, hi, 1e-15, |h1, h2| {
        (h2 - h1) * (surface / (h1 * h2) - bulk * (h1 + h2) / 12.0) < 0.0
    });
    let g_min = cell_density(h_half, 0.0, c)?;
    Ok(CellMinimum {
        h_half,
        g_min,
        period: 2.0 * h_half,
    })
}

/// Blow-up `R_s^ε u(t) = ε^{-1/3} u(s + ε^{1/3} t)` sampled at `m + 1`
/// equispaced points of `[-r, r]`.
pub fn blow_up<F: Fn(f64) -> f64>(u: F, s: f64, eps: f64, r: f64, m: usize) -> Vec<f64> {
    let scale = eps.cbrt();
    (0..=m)
        .map(|i| {
            let t = -r + 2.0 * r * i as f64 / m as f64;
            u(s + scale * t) / scale
        })
        .collect()
}

/// Average over `(-r, r)` of
/// `ε^{2/3} a(s + ε^{1/3} t) x''² + ε^{-2/3} W(x') + b(s + ε^{1/3} t) x²`
/// for `x` sampled at equispaced points of `[-r, r]`, discretized like the
/// diffuse energy (second differences at interior nodes, elementwise slopes,
/// exact singular bulk integral of the interpolant).
pub fn window_functional(x: &[f64], s: f64, eps: f64, w: &WeightParams, r: f64) -> Result<f64> {
    if x.len() < 3 || !(r > 0.0) || !(eps > 0.0) {
        return Err(ModelError::InvalidConfig("window needs r > 0, eps > 0 and at least 3 samples".into()));
    }
    let scale = eps.cbrt();
    let (lo, hi) = (s - scale * r, s + scale * r);
    if !(lo > 0.0 && hi < 1.0) {
        return Err(ModelError::WindowOutOfDomain { lo, hi });
    }
    let m = x.len() - 1;
    let dt = 2.0 * r / m as f64;
    let node = |i: usize| -r + dt * i as f64;
    let tau = |t: f64| s + scale * t;
    let slopes: Vec<f64> = x.windows(2).map(|p| (p[1] - p[0]) / dt).collect();

    let mut surface = 0.0;
    for j in 1..m {
        let curvature = (slopes[j] - slopes[j - 1]) / dt;
        let (a, b) = (node(j) - 0.5 * dt, node(j) + 0.5 * dt);
        let weight = integrate_power(tau(a), tau(b), w.alpha) / scale;
        surface += weight * curvature * curvature;
    }
    let well: f64 = slopes.iter().map(|&d| dt * double_well(d)).sum();
    let mut bulk = 0.0;
    for (i, &d) in slopes.iter().enumerate() {
        let seg = AffineSegment::new(tau(node(i)), tau(node(i + 1)), d / scale, x[i])?;
        bulk += integrate_weighted_square(&seg, w.beta)? / scale;
    }
    let total = scale * scale * surface + well / (scale * scale) + bulk;
    Ok(total / (2.0 * r))
}

/// Local period measured near `s` compared with the predicted law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    pub s: f64,
    pub h_emp: f64,
    pub h_pred: f64,
    pub ratio: f64,
    /// Half-width of the window around `s`.
    pub window: f64,
    /// Number of slope flips found inside the window.
    pub n_teeth: usize,
}

/// What to read slope flips from.
#[derive(Debug, Clone, Copy)]
pub enum PeriodSource<'a> {
    Diffuse(&'a DiffuseField),
    Sharp(&'a SawtoothProfile),
    /// Values `us` of a continuous function at increasing nodes `ts`.
    Samples { ts: &'a [f64], us: &'a [f64] },
}

/// Minimum number of slope flips required inside the window.
pub const MIN_FLIPS: usize = 4;

const FLIP_THRESHOLD: f64 = 0.5;

/// Locations where the piecewise-constant slope of a nodal function changes
/// sign. A flip is registered only once the slope has reached magnitude 1/2
/// on both sides; its position is the zero of the slope interpolated
/// between element midpoints.
pub fn slope_flips(ts: &[f64], us: &[f64]) -> Vec<f64> {
    let slopes: Vec<f64> = ts
        .windows(2)
        .zip(us.windows(2))
        .map(|(t, u)| (u[1] - u[0]) / (t[1] - t[0]))
        .collect();
    let mids: Vec<f64> = ts.windows(2).map(|t| 0.5 * (t[0] + t[1])).collect();
    let mut flips = Vec::new();
    let mut state: Option<(f64, usize)> = None;
    for (j, &d) in slopes.iter().enumerate() {
        if d.abs() < FLIP_THRESHOLD {
            continue;
        }
        let sign = d.signum();
        match state {
            Some((prev, i)) if prev != sign => {
                // first zero crossing between elements i and j
                let mut pos = 0.5 * (mids[i] + mids[j]);
                for k in i..j {
                    let (a, b) = (slopes[k], slopes[k + 1]);
                    if a == 0.0 {
                        pos = mids[k];
                        break;
                    }
                    if a * b <= 0.0 {
                        pos = mids[k] + (mids[k + 1] - mids[k]) * a / (a - b);
                        break;
                    }
                }
                flips.push(pos);
                state = Some((sign, j));
            }
            _ => state = Some((sign, j)),
        }
    }
    flips
}

fn trimmed_mean(mut v: Vec<f64>, fraction: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = (fraction * v.len() as f64).floor() as usize;
    let kept = &v[k..v.len() - k];
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Default window half-width around `s`: one and a half predicted periods,
/// shrunk to keep the window inside `(0, 1)`.
pub fn default_window(eps: f64, s: f64, w: &WeightParams) -> f64 {
    let want = 1.5 * predicted_period(eps, s, w);
    want.min(0.999 * s).min(0.999 * (1.0 - s))
}

/// Measures the local period near `s` as twice the (10%-trimmed) mean
/// distance between consecutive slope flips in `[s - window, s + window]`.
pub fn extract_period(
    source: PeriodSource<'_>,
    s: f64,
    window: f64,
    eps: f64,
    w: &WeightParams,
) -> Result<PeriodEstimate> {
    let (lo, hi) = (s - window, s + window);
    if !(window > 0.0) || !(lo >= 0.0 && hi <= 1.0) {
        return Err(ModelError::WindowOutOfDomain { lo, hi });
    }
    let flips = match source {
        PeriodSource::Diffuse(field) => slope_flips(field.mesh().nodes(), field.values()),
        PeriodSource::Sharp(p) => p.jumps().to_vec(),
        PeriodSource::Samples { ts, us } => slope_flips(ts, us),
    };
    let inside: Vec<f64> = flips.into_iter().filter(|&z| z >= lo && z <= hi).collect();
    if inside.len() < MIN_FLIPS {
        return Err(ModelError::TooFewOscillations {
            found: inside.len(),
            needed: MIN_FLIPS,
        });
    }
    let gaps: Vec<f64> = inside.windows(2).map(|p| p[1] - p[0]).collect();
    let h_emp = 2.0 * trimmed_mean(gaps, 0.1);
    let h_pred = predicted_period(eps, s, w);
    Ok(PeriodEstimate {
        s,
        h_emp,
        h_pred,
        ratio: h_emp / h_pred,
        window,
        n_teeth: inside.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Slope;

    #[test]
    fn sawtooth_values() {
        let h = 0.8;
        assert!((sawtooth(h, 0.0).unwrap() + h / 4.0).abs() < 1e-15);
        assert!((sawtooth(h, h / 2.0).unwrap() - h / 4.0).abs() < 1e-15);
        assert!((sawtooth(h, 3.0 * h + 0.1).unwrap() - sawtooth(h, 0.1).unwrap()).abs() < 1e-14);
        assert!(matches!(sawtooth(0.0, 0.1), Err(ModelError::InvalidPeriod(_))));
    }

    #[test]
    fn a0_and_period_constant() {
        assert!((a0_constant() - 4.0 / 3.0).abs() < 1e-14);
        assert!((period_constant() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn cell_unit_weights() {
        let c = CellDensityParams {
            s: 0.5,
            a0: 4.0 / 3.0,
            a_s: 1.0,
            b_s: 1.0,
        };
        assert!((cell_density(2.0, 0.0, &c).unwrap() - 1.0).abs() < 1e-15);
        let diff = cell_density(1.3, 0.7, &c).unwrap() - cell_density(1.3, 0.0, &c).unwrap();
        assert!((diff - 0.49).abs() < 1e-14);
        let m = minimize_cell(&c).unwrap();
        assert!((m.h_half - 2.0).abs() < 1e-12);
        assert!((m.period - 4.0).abs() < 1e-12);
        assert!((m.g_min - 1.0).abs() < 1e-12);
        assert!(cell_density(-1.0, 0.0, &c).is_err());
    }

    #[test]
    fn cell_period_law() {
        let w = WeightParams::new(0.5, 1.0);
        let m = minimize_cell(&CellDensityParams::at(1.0 - 1e-12, &w).unwrap()).unwrap();
        assert!((m.period - 4.0).abs() < 1e-9);
        let m = minimize_cell(&CellDensityParams::at(0.5, &w).unwrap()).unwrap();
        assert!((m.period - 4.0 * 0.5f64.powf(5.0 / 12.0)).abs() < 1e-12);
        assert!((m.period - 2.9967).abs() < 1e-4);
    }

    #[test]
    fn window_functional_zero_field() {
        let eps = 1e-3;
        let x = vec![0.0; 101];
        let v = window_functional(&x, 0.5, eps, &WeightParams::new(0.5, 1.0), 2.0).unwrap();
        assert!((v - 0.25 * eps.powf(-2.0 / 3.0)).abs() < 1e-12 * v);
        assert!(matches!(
            window_functional(&x, 0.05, eps, &WeightParams::new(0.5, 1.0), 5.0),
            Err(ModelError::WindowOutOfDomain { .. })
        ));
    }

    #[test]
    fn blow_up_preserves_slope() {
        let eps: f64 = 1e-3;
        let m = 200;
        let r = 1.0;
        let x = blow_up(|t| t * t, 0.4, eps, r, m);
        let dt = 2.0 * r / m as f64;
        for i in 0..m {
            let t_mid = -r + dt * (i as f64 + 0.5);
            let slope = (x[i + 1] - x[i]) / dt;
            assert!((slope - 2.0 * (0.4 + eps.cbrt() * t_mid)).abs() < 1e-9);
        }
    }

    #[test]
    fn period_of_sampled_sawtooth() {
        let h = 0.05;
        let ts: Vec<f64> = (0..=4000).map(|i| i as f64 / 4000.0).collect();
        let us: Vec<f64> = ts.iter().map(|&t| sawtooth(h, t - 0.5).unwrap()).collect();
        let est = extract_period(PeriodSource::Samples { ts: &ts, us: &us }, 0.5, 0.2, 1e-3, &WeightParams::new(0.5, 1.0)).unwrap();
        assert!((est.h_emp - h).abs() < 1e-9, "{}", est.h_emp);
    }

    #[test]
    fn period_of_uniform_profile() {
        let jumps: Vec<f64> = (1..10).map(|k| k as f64 / 10.0).collect();
        let p = SawtoothProfile::new(jumps, Slope::Up).unwrap();
        let w = WeightParams::new(0.0, 0.0);
        let est = extract_period(PeriodSource::Sharp(&p), 0.5, 0.25, 1e-3, &w).unwrap();
        assert!((est.h_emp - 0.2).abs() < 1e-12);
        assert_eq!(est.n_teeth, 5);
        assert!((est.h_pred - 0.4).abs() < 1e-12);
        let few = extract_period(PeriodSource::Sharp(&p), 0.5, 0.1, 1e-3, &w);
        assert!(matches!(few, Err(ModelError::TooFewOscillations { .. })));
    }

    #[test]
    fn flat_weights_predict_constant_period() {
        let w = WeightParams::new(1e-12, 1e-12);
        let a = predicted_period(1e-3, 0.2, &w);
        let b = predicted_period(1e-3, 0.9, &w);
        assert!((a / b - 1.0).abs() < 1e-10);
        assert!((a - 0.4).abs() < 1e-9);
    }
}
