//! Shared domain types and the exact integral of the singular bulk term.
//!
//! The bulk density `t^-beta u^2` is integrated in closed form over affine
//! pieces. Close to the singularity (short pieces far from `t = 0`) the
//! monomial antiderivatives cancel badly, so pieces with `h / t0 <= 1/2`
//! use the binomial series of `(1 + x h / t0)^-beta` instead, which
//! converges geometrically and is exact to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Exponents closer than this to a pole of `t^p / p` use the logarithm.
pub const SPECIAL_EXPONENT_TOL: f64 = 1e-12;

/// Absolute tolerance on `u(1)` for a profile to count as clamped.
pub const CLAMP_TOL: f64 = 1e-9;

const SERIES_RATIO: f64 = 0.5;
const SERIES_MAX_TERMS: usize = 400;

/// Exponents of the weights `a(t) = t^alpha` (surface) and
/// `b(t) = t^-beta` (bulk).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    pub alpha: f64,
    pub beta: f64,
}

/// Hypothesis flags for a pair of exponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    /// `beta < 3`: the bulk term of admissible profiles is finite.
    pub bulk_finite: bool,
    /// `2 alpha >= beta`: uniform energy distribution applies.
    pub distribution_ok: bool,
    /// `alpha > 0`, `beta > 0`, `beta - 2 alpha < 3`: the local period law applies.
    pub limit_ok: bool,
    pub reasons: Vec<String>,
}

impl WeightParams {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    /// Surface weight `a(t) = t^alpha`.
    pub fn surface_weight(&self, t: f64) -> f64 {
        t.powf(self.alpha)
    }

    /// Bulk weight `b(t) = t^-beta`.
    pub fn bulk_weight(&self, t: f64) -> f64 {
        t.powf(-self.beta)
    }

    pub fn bulk_finite(&self) -> bool {
        self.beta < 3.0
    }

    pub fn distribution_ok(&self) -> bool {
        2.0 * self.alpha >= self.beta
    }

    pub fn limit_ok(&self) -> bool {
        self.alpha > 0.0 && self.beta > 0.0 && self.beta - 2.0 * self.alpha < 3.0
    }

    /// Fails unless the bulk term is finite.
    pub fn require_bulk_finite(&self) -> Result<()> {
        if self.alpha.is_finite() && self.beta.is_finite() && self.bulk_finite() {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(format!(
                "weights (alpha={}, beta={}) need finite exponents with beta < 3",
                self.alpha, self.beta
            )))
        }
    }

    /// Checks every hypothesis and explains the failures. Never fails.
    pub fn validate(&self) -> WeightReport {
        let mut reasons = Vec::new();
        let bulk_finite = self.bulk_finite();
        if !bulk_finite {
            reasons.push(format!(
                "beta = {} >= 3: the bulk integral of admissible profiles diverges at t = 0",
                self.beta
            ));
        }
        let distribution_ok = self.distribution_ok();
        if !distribution_ok {
            reasons.push(format!(
                "2 alpha = {} < beta = {}: uniform energy distribution is not guaranteed",
                2.0 * self.alpha,
                self.beta
            ));
        }
        let limit_ok = self.limit_ok();
        if !limit_ok {
            if self.alpha <= 0.0 {
                reasons.push(format!("alpha = {} <= 0: period law needs alpha > 0", self.alpha));
            }
            if self.beta <= 0.0 {
                reasons.push(format!("beta = {} <= 0: period law needs beta > 0", self.beta));
            }
            if self.beta - 2.0 * self.alpha >= 3.0 {
                reasons.push(format!(
                    "beta - 2 alpha = {} >= 3: period law needs beta - 2 alpha < 3",
                    self.beta - 2.0 * self.alpha
                ));
            }
        }
        WeightReport {
            bulk_finite,
            distribution_ok,
            limit_ok,
            reasons,
        }
    }
}

/// Free function form of [`WeightParams::validate`].
pub fn validate_weights(w: WeightParams) -> WeightReport {
    w.validate()
}

/// `u(t) = u0 + slope (t - t0)` on `[t0, t1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineSegment {
    pub t0: f64,
    pub t1: f64,
    pub slope: f64,
    pub u0: f64,
}

impl AffineSegment {
    pub fn new(t0: f64, t1: f64, slope: f64, u0: f64) -> Result<Self> {
        let seg = Self { t0, t1, slope, u0 };
        seg.check()?;
        Ok(seg)
    }

    fn check(&self) -> Result<()> {
        if !(self.t0.is_finite() && self.t1.is_finite()) || self.t0 < 0.0 || self.t0 >= self.t1 {
            return Err(ModelError::InvalidSegment {
                t0: self.t0,
                t1: self.t1,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> f64 {
        self.t1 - self.t0
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.u0 + self.slope * (t - self.t0)
    }

    pub fn u1(&self) -> f64 {
        self.value_at(self.t1)
    }
}

/// `∫_{t0}^{t1} t^(p-1) dt` for `t0 > 0`, stable for short intervals and small `p`.
fn power_integral(t0: f64, t1: f64, p: f64) -> f64 {
    let log_ratio = ((t1 - t0) / t0).ln_1p();
    if p.abs() < SPECIAL_EXPONENT_TOL {
        log_ratio
    } else {
        t0.powf(p) * (p * log_ratio).exp_m1() / p
    }
}

/// Moments `J_k = ∫_{t0}^{t1} t^-beta ((t - t0) / h)^k dt`, `k = 0, 1, 2`, for `t0 > 0`.
pub(crate) fn shifted_moments(t0: f64, t1: f64, beta: f64) -> [f64; 3] {
    let h = t1 - t0;
    let r = h / t0;
    if r <= SERIES_RATIO {
        // t^-beta = t0^-beta (1 + r x)^-beta, x in [0, 1]
        let mut sums = [0.0; 3];
        let mut coeff = 1.0;
        let mut rm = 1.0;
        for m in 0..SERIES_MAX_TERMS {
            let term = coeff * rm;
            let mf = m as f64;
            sums[0] += term / (mf + 1.0);
            sums[1] += term / (mf + 2.0);
            sums[2] += term / (mf + 3.0);
            if term == 0.0 || (m > 0 && term.abs() <= 1e-18 * sums[0].abs()) {
                break;
            }
            coeff *= (-beta - mf) / (mf + 1.0);
            rm *= r;
        }
        let scale = h * t0.powf(-beta);
        [sums[0] * scale, sums[1] * scale, sums[2] * scale]
    } else {
        let p0 = power_integral(t0, t1, 1.0 - beta);
        let p1 = power_integral(t0, t1, 2.0 - beta);
        let p2 = power_integral(t0, t1, 3.0 - beta);
        [
            p0,
            (p1 - t0 * p0) / h,
            (p2 - 2.0 * t0 * p1 + t0 * t0 * p0) / (h * h),
        ]
    }
}

/// `∫_{t0}^{t1} t^-beta u(t)^2 dt` for the affine `u` of `seg`, in closed form.
pub fn integrate_weighted_square(seg: &AffineSegment, beta: f64) -> Result<f64> {
    seg.check()?;
    let h = seg.len();
    let (u0, s) = (seg.u0, seg.slope);
    if seg.t0 == 0.0 {
        if beta >= 3.0 || (u0 != 0.0 && beta >= 1.0) {
            return Err(ModelError::DivergentIntegral { beta, u0 });
        }
        let hb = h.powf(1.0 - beta);
        if u0 == 0.0 {
            return Ok(s * s * h * h * hb / (3.0 - beta));
        }
        return Ok(hb
            * (u0 * u0 / (1.0 - beta)
                + 2.0 * u0 * s * h / (2.0 - beta)
                + s * s * h * h / (3.0 - beta)));
    }
    let [j0, j1, j2] = shifted_moments(seg.t0, seg.t1, beta);
    Ok(u0 * u0 * j0 + 2.0 * u0 * s * h * j1 + s * s * h * h * j2)
}

/// `∫_{t0}^{t1} t^-beta u(t) dt` for the affine `u` of `seg`.
pub fn integrate_weighted_linear(seg: &AffineSegment, beta: f64) -> Result<f64> {
    seg.check()?;
    let h = seg.len();
    let (u0, s) = (seg.u0, seg.slope);
    if seg.t0 == 0.0 {
        if beta >= 2.0 || (u0 != 0.0 && beta >= 1.0) {
            return Err(ModelError::DivergentIntegral { beta, u0 });
        }
        let hb = h.powf(1.0 - beta);
        return Ok(hb * (u0 / (1.0 - beta) + s * h / (2.0 - beta)));
    }
    let [j0, j1, _] = shifted_moments(seg.t0, seg.t1, beta);
    Ok(u0 * j0 + s * h * j1)
}

/// `∫_{t0}^{t1} t^alpha dt`, `t0 >= 0` (with `alpha > -1` when `t0 = 0`).
pub fn integrate_power(t0: f64, t1: f64, alpha: f64) -> f64 {
    if t0 == 0.0 {
        t1.powf(alpha + 1.0) / (alpha + 1.0)
    } else {
        power_integral(t0, t1, alpha + 1.0)
    }
}

/// Sign of the derivative of a sawtooth piece.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slope {
    Up,
    Down,
}

impl Slope {
    pub fn sign(self) -> f64 {
        match self {
            Slope::Up => 1.0,
            Slope::Down => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Slope::Up => Slope::Down,
            Slope::Down => Slope::Up,
        }
    }
}

/// Continuous slope-±1 profile on `[0, 1]` with `u(0) = 0`, stored by the
/// points where the slope flips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SawtoothProfile {
    jumps: Vec<f64>,
    initial_slope: Slope,
}

impl SawtoothProfile {
    pub fn new(jumps: Vec<f64>, initial_slope: Slope) -> Result<Self> {
        let mut prev = 0.0;
        for &z in &jumps {
            if !z.is_finite() || z <= prev || z >= 1.0 {
                return Err(ModelError::InvalidProfile(format!(
                    "jumps must be strictly increasing in (0, 1), got {z} after {prev}"
                )));
            }
            prev = z;
        }
        Ok(Self {
            jumps,
            initial_slope,
        })
    }

    /// Builds the profile whose pieces have the given lengths, in order.
    /// The lengths are rescaled to sum to one.
    pub fn from_gaps(gaps: &[f64], initial_slope: Slope) -> Result<Self> {
        if gaps.is_empty() || gaps.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(ModelError::InvalidProfile(
                "gaps must be positive and finite".into(),
            ));
        }
        let total: f64 = gaps.iter().sum();
        let mut jumps = Vec::with_capacity(gaps.len() - 1);
        let mut acc = 0.0;
        for g in &gaps[..gaps.len() - 1] {
            acc += g / total;
            jumps.push(acc);
        }
        Self::new(jumps, initial_slope)
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn initial_slope(&self) -> Slope {
        self.initial_slope
    }

    pub fn n_jumps(&self) -> usize {
        self.jumps.len()
    }

    /// Piece lengths `z_k - z_{k-1}` for `k = 1..=n+1` (`z_0 = 0`, `z_{n+1} = 1`).
    pub fn gaps(&self) -> Vec<f64> {
        let mut prev = 0.0;
        let mut gaps: Vec<f64> = self
            .jumps
            .iter()
            .map(|&z| {
                let g = z - prev;
                prev = z;
                g
            })
            .collect();
        gaps.push(1.0 - prev);
        gaps
    }

    pub fn min_gap(&self) -> f64 {
        self.gaps().into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Slope sign on piece `k` (`k = 0` is `(0, z_1)`).
    pub fn slope_on_piece(&self, k: usize) -> f64 {
        if k % 2 == 0 {
            self.initial_slope.sign()
        } else {
            -self.initial_slope.sign()
        }
    }

    /// Values at `0, z_1, ..., z_n, 1`.
    pub fn node_values(&self) -> Vec<f64> {
        let mut values = Vec::with_capacity(self.jumps.len() + 2);
        values.push(0.0);
        let mut u = 0.0;
        for (k, gap) in self.gaps().into_iter().enumerate() {
            u += self.slope_on_piece(k) * gap;
            values.push(u);
        }
        values
    }

    pub fn end_value(&self) -> f64 {
        *self.node_values().last().unwrap()
    }

    pub fn is_clamped(&self) -> bool {
        self.end_value().abs() <= CLAMP_TOL
    }

    /// The affine pieces covering `[0, 1]`.
    pub fn segments(&self) -> Vec<AffineSegment> {
        let values = self.node_values();
        let mut knots = Vec::with_capacity(self.jumps.len() + 2);
        knots.push(0.0);
        knots.extend_from_slice(&self.jumps);
        knots.push(1.0);
        knots
            .windows(2)
            .enumerate()
            .map(|(k, w)| AffineSegment {
                t0: w[0],
                t1: w[1],
                slope: self.slope_on_piece(k),
                u0: values[k],
            })
            .collect()
    }

    /// The affine pieces covering `[0, x]`, the last one cut at `x`.
    pub fn segments_until(&self, x: f64) -> Vec<AffineSegment> {
        let mut out = Vec::new();
        for seg in self.segments() {
            if seg.t0 >= x {
                break;
            }
            if seg.t1 <= x {
                out.push(seg);
            } else {
                out.push(AffineSegment { t1: x, ..seg });
                break;
            }
        }
        out
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.jumps.partition_point(|&z| z < t);
        let values = self.node_values();
        let z_prev = if k == 0 { 0.0 } else { self.jumps[k - 1] };
        values[k] + self.slope_on_piece(k) * (t - z_prev)
    }
}

/// Components of an energy evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub surface: f64,
    pub well: f64,
    pub bulk: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(surface: f64, well: f64, bulk: f64) -> Self {
        Self {
            surface,
            well,
            bulk,
            total: surface + well + bulk,
        }
    }
}
