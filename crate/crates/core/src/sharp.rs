//! Sharp-interface energy over slope-±1 sawtooth profiles:
//!
//! `E(u) = ε Σ_k c z_k^e + ∫_0^1 t^-β u² dt`
//!
//! with corner cost `c z^e = 2 z^α` for the sharp functional itself. Other
//! corner costs are used to seed the diffuse solver (see [`CornerCost`]).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::{
    integrate_weighted_linear, integrate_weighted_square, AffineSegment, EnergyBreakdown,
    SawtoothProfile, Slope, WeightParams,
};
use crate::optim::{minimize_lbfgs, LbfgsOptions, StopReason};

/// Tooth widths `y_k ∝ k^gamma`, `k = 1..=n+1`, for a profile with `n` jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradedSpacingConfig {
    pub gamma: f64,
    pub n: usize,
}

/// Which of the grading constraints hold for a given `gamma` and weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradingConstraints {
    /// `gamma > -1`
    pub gamma_above_minus_one: bool,
    /// `3 gamma - beta (gamma + 1) > -1`
    pub bulk_sum_converges: bool,
    /// `(gamma + 1)(3 - beta) >= 2`
    pub first_tooth_small: bool,
    /// `alpha > -1 / (1 + gamma)`
    pub surface_sum_bounded: bool,
}

impl GradingConstraints {
    pub fn all(&self) -> bool {
        self.gamma_above_minus_one
            && self.bulk_sum_converges
            && self.first_tooth_small
            && self.surface_sum_bounded
    }
}

impl GradedSpacingConfig {
    pub fn new(gamma: f64, n: usize) -> Result<Self> {
        if !(gamma > -1.0) || !gamma.is_finite() {
            return Err(ModelError::InvalidConfig(format!("gamma must exceed -1, got {gamma}")));
        }
        if n < 1 {
            return Err(ModelError::InvalidConfig("need at least one jump".into()));
        }
        Ok(Self { gamma, n })
    }

    /// Grading exponent inside the admissible region for `beta`:
    /// `max(0, 2/(3-beta) - 1) + 1/4`.
    pub fn default_gamma(beta: f64) -> f64 {
        (2.0 / (3.0 - beta) - 1.0).max(0.0) + 0.25
    }

    pub fn constraints(&self, w: &WeightParams) -> GradingConstraints {
        let g = self.gamma;
        GradingConstraints {
            gamma_above_minus_one: g > -1.0,
            bulk_sum_converges: 3.0 * g - w.beta * (g + 1.0) > -1.0,
            first_tooth_small: (g + 1.0) * (3.0 - w.beta) >= 2.0,
            surface_sum_bounded: w.alpha > -1.0 / (1.0 + g),
        }
    }

    /// Normalized widths `k^gamma / Σ_{i=1}^{n+1} i^gamma`.
    pub fn gaps(&self) -> Vec<f64> {
        let raw: Vec<f64> = (1..=self.n + 1).map(|k| (k as f64).powf(self.gamma)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|y| y / total).collect()
    }
}

/// The graded profile exactly as spaced: jumps at the partial sums of
/// [`GradedSpacingConfig::gaps`], starting upward. It is clamped only when the
/// alternating sum of widths vanishes; see [`build_clamped_graded_profile`].
pub fn build_graded_profile(cfg: &GradedSpacingConfig) -> Result<SawtoothProfile> {
    GradedSpacingConfig::new(cfg.gamma, cfg.n)?;
    SawtoothProfile::from_gaps(&cfg.gaps(), Slope::Up)
}

/// Rescales the widths of the up-pieces and of the down-pieces separately so
/// that each family sums to 1/2, which forces `u(1) = 0`. Ordering and the
/// grading within each family are preserved.
pub fn close_gaps(gaps: &[f64]) -> Vec<f64> {
    let even: f64 = gaps.iter().step_by(2).sum();
    let odd: f64 = gaps.iter().skip(1).step_by(2).sum();
    gaps.iter()
        .enumerate()
        .map(|(k, g)| if k % 2 == 0 { 0.5 * g / even } else { 0.5 * g / odd })
        .collect()
}

/// Graded profile with the closure rescaling applied.
pub fn build_clamped_graded_profile(cfg: &GradedSpacingConfig) -> Result<SawtoothProfile> {
    GradedSpacingConfig::new(cfg.gamma, cfg.n)?;
    SawtoothProfile::from_gaps(&close_gaps(&cfg.gaps()), Slope::Up)
}

/// Cost of a slope flip at `z`: `coef * z^exponent` (times `ε`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CornerCost {
    pub coef: f64,
    pub exponent: f64,
}

impl CornerCost {
    /// `2 z^alpha`: the total variation of `u'` across a flip is 2.
    pub fn sharp(w: &WeightParams) -> Self {
        Self {
            coef: 2.0,
            exponent: w.alpha,
        }
    }

    /// `A0 z^(alpha/2)`: the cost of one optimal diffuse transition layer
    /// in the limit of small `ε`.
    pub fn diffuse_layer(w: &WeightParams) -> Self {
        Self {
            coef: crate::asymptotics::a0_closed_form(),
            exponent: 0.5 * w.alpha,
        }
    }

    fn at(&self, z: f64) -> f64 {
        self.coef * z.powf(self.exponent)
    }

    fn derivative(&self, z: f64) -> f64 {
        if self.exponent == 0.0 {
            0.0
        } else {
            self.coef * self.exponent * z.powf(self.exponent - 1.0)
        }
    }
}

/// A sharp-interface problem: `ε`, weights and corner cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpProblem {
    pub eps: f64,
    pub weights: WeightParams,
    pub corner: CornerCost,
}

impl SharpProblem {
    pub fn new(eps: f64, weights: WeightParams) -> Result<Self> {
        Self::with_corner(eps, weights, CornerCost::sharp(&weights))
    }

    pub fn with_corner(eps: f64, weights: WeightParams, corner: CornerCost) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(ModelError::InvalidConfig(format!("eps must be positive, got {eps}")));
        }
        weights.require_bulk_finite()?;
        Ok(Self {
            eps,
            weights,
            corner,
        })
    }

    /// Exact energy. Unclamped profiles are rejected unless `allow_unclamped`.
    pub fn evaluate(&self, p: &SawtoothProfile, allow_unclamped: bool) -> Result<EnergyBreakdown> {
        if !allow_unclamped && !p.is_clamped() {
            return Err(ModelError::UnclampedProfile {
                end_value: p.end_value(),
            });
        }
        let surface = self.eps * p.jumps().iter().map(|&z| self.corner.at(z)).sum::<f64>();
        let mut bulk = 0.0;
        for seg in p.segments() {
            bulk += integrate_weighted_square(&seg, self.weights.beta)?;
        }
        Ok(EnergyBreakdown::new(surface, 0.0, bulk))
    }

    /// Energy of the profile with the given piece widths and its gradient
    /// with respect to those widths. Returns `+inf` for degenerate widths.
    fn energy_and_width_gradient(&self, gaps: &[f64], grad: &mut [f64]) -> f64 {
        let n = gaps.len() - 1;
        let beta = self.weights.beta;
        let mut segs = Vec::with_capacity(n + 1);
        let (mut t, mut u, mut slope) = (0.0f64, 0.0f64, 1.0f64);
        for (k, &g) in gaps.iter().enumerate() {
            let t1 = if k == n { 1.0 } else { t + g };
            if !(t1 > t) {
                return f64::INFINITY;
            }
            segs.push(AffineSegment {
                t0: t,
                t1,
                slope,
                u0: u,
            });
            u += slope * (t1 - t);
            t = t1;
            slope = -slope;
        }
        let mut energy = 0.0;
        // d/dz_k of the bulk: 4 s_k ∫_{z_k}^1 t^-β u dt, with s_k the slope before z_k.
        let mut tail = 0.0;
        let mut dz = vec![0.0; n];
        for k in (0..=n).rev() {
            let seg = &segs[k];
            match integrate_weighted_square(seg, beta) {
                Ok(v) => energy += v,
                Err(_) => return f64::INFINITY,
            }
            if k >= 1 {
                tail += integrate_weighted_linear(seg, beta).unwrap_or(f64::NAN);
                let z = seg.t0;
                let s_before = segs[k - 1].slope;
                energy += self.eps * self.corner.at(z);
                dz[k - 1] = self.eps * self.corner.derivative(z) + 4.0 * s_before * tail;
            }
        }
        // width y_i moves every jump z_k with k >= i
        let mut acc = 0.0;
        grad[n] = 0.0;
        for i in (0..n).rev() {
            acc += dz[i];
            grad[i] = acc;
        }
        energy
    }

    /// Minimizes over profiles with exactly `n` jumps, starting from `init`
    /// (which must have `n` jumps and be clamped).
    pub fn refine(&self, init: &SawtoothProfile, opts: &RefineOptions) -> Result<SharpOptimum> {
        if !init.is_clamped() {
            return Err(ModelError::UnclampedProfile {
                end_value: init.end_value(),
            });
        }
        let init_energy = self.evaluate(init, false)?;
        let gaps0 = init.gaps();
        let m = gaps0.len();
        // softmax parameters per slope family; each family sums to 1/2
        let theta0: Vec<f64> = gaps0.iter().map(|g| g.ln()).collect();
        let to_gaps = |theta: &[f64]| -> Vec<f64> {
            let mut gaps = vec![0.0; m];
            for parity in 0..2 {
                let idx = (parity..m).step_by(2);
                let max = idx.clone().map(|i| theta[i]).fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = idx.clone().map(|i| (theta[i] - max).exp()).sum();
                for i in idx {
                    gaps[i] = 0.5 * (theta[i] - max).exp() / total;
                }
            }
            gaps
        };
        let mut gap_grad = vec![0.0; m];
        let lbfgs = LbfgsOptions {
            memory: 10,
            max_iter: opts.max_iter,
            grad_tol: opts.grad_tol,
            f_rel_tol: 1e-15,
            stall_iters: 8,
            ..Default::default()
        };
        let out = minimize_lbfgs(
            theta0,
            &lbfgs,
            |theta, g| {
                let gaps = to_gaps(theta);
                let f = self.energy_and_width_gradient(&gaps, &mut gap_grad);
                for parity in 0..2 {
                    let mean: f64 = (parity..m).step_by(2).map(|i| 2.0 * gaps[i] * gap_grad[i]).sum();
                    for i in (parity..m).step_by(2) {
                        g[i] = gaps[i] * (gap_grad[i] - mean);
                    }
                }
                f
            },
            None,
        );
        let profile = SawtoothProfile::from_gaps(&to_gaps(&out.x), init.initial_slope())?;
        let energy = self.evaluate(&profile, true)?;
        if energy.total > init_energy.total || !profile.is_clamped() {
            return Ok(SharpOptimum {
                n: init.n_jumps(),
                profile: init.clone(),
                energy: init_energy,
                converged: false,
            });
        }
        Ok(SharpOptimum {
            n: profile.n_jumps(),
            profile,
            energy,
            converged: !matches!(out.reason, StopReason::MaxIterations),
        })
    }

    /// Best profile with `n` jumps over the graded and uniform initializations.
    pub fn optimize_fixed_n(&self, n: usize, opts: &SharpOptions) -> Result<SharpOptimum> {
        let gamma = opts
            .gamma
            .unwrap_or_else(|| GradedSpacingConfig::default_gamma(self.weights.beta));
        let mut best: Option<SharpOptimum> = None;
        let mut gammas = vec![gamma];
        if gamma != 0.0 {
            gammas.push(0.0);
        }
        for g in gammas {
            let init = build_clamped_graded_profile(&GradedSpacingConfig::new(g, n)?)?;
            let cand = self.refine(&init, &opts.refine)?;
            let all_converged = best.as_ref().map_or(true, |b| b.converged) && cand.converged;
            best = Some(match best {
                Some(b) if b.energy.total <= cand.energy.total => SharpOptimum {
                    converged: all_converged,
                    ..b
                },
                _ => SharpOptimum {
                    converged: all_converged,
                    ..cand
                },
            });
        }
        Ok(best.expect("at least one initialization"))
    }

    /// `n` scale `c` such that the optimal jump count is near `c ε^{-1/3}`,
    /// found by brute force at `ε = 1e-3`.
    pub fn calibrate_n_scale(&self, opts: &SharpOptions) -> Result<f64> {
        let probe = Self {
            eps: CALIBRATION_EPS,
            ..*self
        };
        let mut results: Vec<(usize, f64)> = Vec::new();
        let mut start = 1;
        loop {
            let chunk: Vec<usize> = (start..start + 16).collect();
            let energies = chunk
                .par_iter()
                .map(|&n| probe.optimize_fixed_n(n, opts).map(|o| (n, o.energy.total)))
                .collect::<Result<Vec<_>>>()?;
            results.extend(energies);
            let (best_n, _) = best_by_energy(&results);
            start += 16;
            if best_n + 8 < start || start > 4096 {
                return Ok(best_n as f64 * CALIBRATION_EPS.cbrt());
            }
        }
    }
}

const CALIBRATION_EPS: f64 = 1e-3;

fn best_by_energy(results: &[(usize, f64)]) -> (usize, f64) {
    results
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .expect("non-empty")
}

/// Options for refining jump positions at fixed `n`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefineOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_iter: 5000,
            grad_tol: 1e-14,
        }
    }
}

/// Options for [`optimize_sharp`].
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SharpOptions {
    /// Grading exponent of the initialization; defaults to
    /// [`GradedSpacingConfig::default_gamma`].
    pub gamma: Option<f64>,
    /// Only try this jump count.
    pub fixed_n: Option<usize>,
    /// Scale `c` of the search bracket around `c ε^{-1/3}`; calibrated when absent.
    pub n_scale: Option<f64>,
    pub refine: RefineOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpOptimum {
    pub profile: SawtoothProfile,
    pub energy: EnergyBreakdown,
    pub n: usize,
    /// False if some position refinement ran out of iterations.
    pub converged: bool,
}

/// `[max(1, ⌊c ε^{-1/3}⌋ / 2), 2 ⌈c ε^{-1/3}⌉]`
pub fn n_bracket(eps: f64, n_scale: f64) -> (usize, usize) {
    let center = n_scale * eps.powf(-1.0 / 3.0);
    let lo = ((center.floor() as usize) / 2).max(1);
    let hi = (2 * center.ceil() as usize).max(lo);
    (lo, hi)
}

/// Energy of a profile under `E_ε`; the profile must be clamped.
pub fn evaluate_sharp(p: &SawtoothProfile, eps: f64, w: WeightParams) -> Result<EnergyBreakdown> {
    SharpProblem::new(eps, w)?.evaluate(p, false)
}

/// Like [`evaluate_sharp`] but accepts profiles with `u(1) != 0`.
pub fn evaluate_sharp_partial(
    p: &SawtoothProfile,
    eps: f64,
    w: WeightParams,
) -> Result<EnergyBreakdown> {
    SharpProblem::new(eps, w)?.evaluate(p, true)
}

/// Numerical minimizer of `E_ε`: scans the jump-count bracket (widening it
/// when the best count sits on an edge) and refines positions for each count.
pub fn optimize_sharp(eps: f64, w: WeightParams, opts: &SharpOptions) -> Result<SharpOptimum> {
    SharpProblem::new(eps, w)?.optimize(opts)
}

impl SharpProblem {
    pub fn optimize(&self, opts: &SharpOptions) -> Result<SharpOptimum> {
        if let Some(n) = opts.fixed_n {
            return self.optimize_fixed_n(n, opts);
        }
        let scale = match opts.n_scale {
            Some(c) => c,
            None => self.calibrate_n_scale(opts)?,
        };
        let (mut lo, mut hi) = n_bracket(self.eps, scale);
        let run = |range: std::ops::RangeInclusive<usize>| -> Result<Vec<SharpOptimum>> {
            range
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&n| self.optimize_fixed_n(n, opts))
                .collect()
        };
        let mut all = run(lo..=hi)?;
        loop {
            let best = pick_best(&all);
            if best.n == hi {
                let new_hi = 2 * hi;
                all.extend(run(hi + 1..=new_hi)?);
                hi = new_hi;
            } else if best.n == lo && lo > 1 {
                let new_lo = (lo / 2).max(1);
                all.extend(run(new_lo..=lo - 1)?);
                lo = new_lo;
            } else {
                return Ok(best.clone());
            }
        }
    }
}

fn pick_best(all: &[SharpOptimum]) -> &SharpOptimum {
    all.iter()
        .min_by(|a, b| a.energy.total.total_cmp(&b.energy.total).then(a.n.cmp(&b.n)))
        .expect("non-empty")
}

/// Minimal sharp energy on `[0, a]` with `u(0) = u(a) = 0`, computed on the
/// unit interval after rescaling `t = a x`, `u = a v`.
pub fn rescaled_min_energy(a: f64, eps: f64, w: WeightParams, opts: &SharpOptions) -> Result<f64> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(ModelError::InvalidConfig(format!("a must lie in (0, 1], got {a}")));
    }
    // ε a^α x^α |v''| + a^{3-β} x^-β v² = a^{3-β} (ε' x^α |v''| + x^-β v²)
    let eps_unit = eps * a.powf(w.alpha + w.beta - 3.0);
    let best = optimize_sharp(eps_unit, w, opts)?;
    Ok(a.powf(3.0 - w.beta) * best.energy.total)
}

/// `φ(x)` on a grid: cumulative sharp energy on `[0, x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeEnergyProfile {
    pub xs: Vec<f64>,
    pub phis: Vec<f64>,
    pub eps: f64,
    pub params: WeightParams,
}

/// Cumulative energy `φ(x)` at each `x` in `xs` (sorted, inside `(0, 1]`).
/// A jump located exactly at `x` counts toward `φ(x)`.
pub fn cumulative_energy(
    p: &SawtoothProfile,
    eps: f64,
    w: WeightParams,
    xs: &[f64],
) -> Result<CumulativeEnergyProfile> {
    let problem = SharpProblem::new(eps, w)?;
    if let Some(&bad) = xs.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        return Err(ModelError::InvalidSample(bad));
    }
    if xs.windows(2).any(|s| s[1] < s[0]) {
        return Err(ModelError::InvalidConfig("sample points must be sorted".into()));
    }
    let segs = p.segments();
    let mut prefix_bulk = Vec::with_capacity(segs.len() + 1);
    prefix_bulk.push(0.0);
    for seg in &segs {
        let v = integrate_weighted_square(seg, w.beta)?;
        prefix_bulk.push(prefix_bulk.last().unwrap() + v);
    }
    let jumps = p.jumps();
    let mut prefix_surface = Vec::with_capacity(jumps.len() + 1);
    prefix_surface.push(0.0);
    for &z in jumps {
        prefix_surface.push(prefix_surface.last().unwrap() + eps * problem.corner.at(z));
    }
    let mut phis = Vec::with_capacity(xs.len());
    for &x in xs {
        let k = segs.partition_point(|s| s.t1 <= x).min(segs.len() - 1);
        let seg = segs[k];
        let mut phi = prefix_bulk[k];
        if x > seg.t0 {
            phi += integrate_weighted_square(&AffineSegment { t1: x, ..seg }, w.beta)?;
        }
        phi += prefix_surface[jumps.partition_point(|&z| z <= x)];
        phis.push(phi);
    }
    Ok(CumulativeEnergyProfile {
        xs: xs.to_vec(),
        phis,
        eps,
        params: w,
    })
}

/// `max_x |u(x)| / x^{β/3}` over the profile, evaluated exactly on every
/// piece (endpoints and the interior critical point).
pub fn max_weighted_amplitude(p: &SawtoothProfile, beta: f64) -> f64 {
    let e = beta / 3.0;
    let f = |x: f64, u: f64| if x > 0.0 { u.abs() / x.powf(e) } else { 0.0 };
    let mut best: f64 = 0.0;
    for seg in p.segments() {
        best = best.max(f(seg.t0, seg.u0)).max(f(seg.t1, seg.u1()));
        // d/dx [(c + s x) x^-e] = 0 at x = e c / (s (1 - e)), c = u0 - s t0
        if e != 0.0 && e < 1.0 {
            let c = seg.u0 - seg.slope * seg.t0;
            let x = e * c / (seg.slope * (1.0 - e));
            if x > seg.t0 && x < seg.t1 {
                best = best.max(f(x, seg.value_at(x)));
            }
        }
    }
    best
}
