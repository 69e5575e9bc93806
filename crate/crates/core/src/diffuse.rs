//! Diffuse-interface energy
//!
//! `F(u) = ∫_0^1 ε² t^α (u'')² + W(u') + t^-β u² dt`, `u(0) = u(1) = 0`,
//!
//! discretized on a graded mesh `t_i = (i/N)^q`: second differences at
//! interior nodes weighted by the exact integral of `t^α` over the dual
//! cell, elementwise constant slopes in `W`, and the exact singular bulk
//! integral of the piecewise-linear interpolant.

use serde::{Deserialize, Serialize};

use crate::asymptotics::{double_well, double_well_derivative, double_well_second};
use crate::error::{ModelError, Result};
use crate::model::{integrate_power, shifted_moments, EnergyBreakdown, SawtoothProfile, WeightParams};
use crate::optim::{minimize_lbfgs, LbfgsOptions, PentaLdl, Preconditioner, StopReason};

pub const MIN_ELEMENTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedMesh {
    nodes: Vec<f64>,
    grading: f64,
}

impl GradedMesh {
    /// Nodes `(i / n)^q`, `i = 0..=n`.
    pub fn new(n_elements: usize, grading: f64) -> Result<Self> {
        if n_elements < MIN_ELEMENTS {
            return Err(ModelError::InvalidMesh(format!(
                "need at least {MIN_ELEMENTS} elements, got {n_elements}"
            )));
        }
        if !(grading >= 1.0) || !grading.is_finite() {
            return Err(ModelError::InvalidMesh(format!("grading exponent must be >= 1, got {grading}")));
        }
        let n = n_elements as f64;
        let mut nodes: Vec<f64> = (0..=n_elements).map(|i| (i as f64 / n).powf(grading)).collect();
        nodes[n_elements] = 1.0;
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(ModelError::InvalidMesh("nodes are not strictly increasing".into()));
        }
        Ok(Self { nodes, grading })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn n_elements(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn element_lengths(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Nodal values on a graded mesh with `u(0) = u(1) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffuseField {
    mesh: GradedMesh,
    values: Vec<f64>,
}

impl DiffuseField {
    pub fn new(mesh: GradedMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.nodes().len() {
            return Err(ModelError::InvalidMesh(format!(
                "{} values for {} nodes",
                values.len(),
                mesh.nodes().len()
            )));
        }
        if values[0] != 0.0 || *values.last().unwrap() != 0.0 {
            return Err(ModelError::InvalidConfig("field must vanish at t = 0 and t = 1".into()));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: GradedMesh) -> Self {
        let values = vec![0.0; mesh.nodes().len()];
        Self { mesh, values }
    }

    /// Samples `f` at the interior nodes; boundary values are set to zero.
    pub fn from_fn<F: Fn(f64) -> f64>(mesh: GradedMesh, f: F) -> Self {
        let n = mesh.n_elements();
        let values = mesh
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &t)| if i == 0 || i == n { 0.0 } else { f(t) })
            .collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &GradedMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Values at the interior nodes `1..N`.
    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.values.len() - 1]
    }

    fn with_interior(&self, interior: &[f64]) -> Self {
        let mut values = self.values.clone();
        let n = values.len();
        values[1..n - 1].copy_from_slice(interior);
        Self {
            mesh: self.mesh.clone(),
            values,
        }
    }

    /// Elementwise slopes.
    pub fn slopes(&self) -> Vec<f64> {
        self.mesh
            .nodes()
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(t, u)| (u[1] - u[0]) / (t[1] - t[0]))
            .collect()
    }
}

/// `t² / (2μ)` for `|t| <= μ`, `|t| - μ/2` otherwise.
pub fn transition_profile(t: f64, mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(ModelError::InvalidMu(mu));
    }
    let a = t.abs();
    Ok(if a <= mu { t * t / (2.0 * mu) } else { a - 0.5 * mu })
}

/// Samples the C¹ smoothing of `p` that replaces each corner `z_k` by the
/// parabolic cap `±f_μ(t - z_k) + c_k` on `|t - z_k| < μ`.
pub fn build_smoothed(p: &SawtoothProfile, mu: f64, mesh: &GradedMesh) -> Result<DiffuseField> {
    if !(mu > 0.0) {
        return Err(ModelError::InvalidMu(mu));
    }
    if !p.is_clamped() {
        return Err(ModelError::UnclampedProfile {
            end_value: p.end_value(),
        });
    }
    let gaps = p.gaps();
    let m = gaps.len();
    let interior_ok = gaps[1..m - 1].iter().all(|&g| 2.0 * mu <= g);
    if p.n_jumps() > 0 && (!interior_ok || mu >= gaps[0] || mu >= gaps[m - 1]) {
        return Err(ModelError::MuTooLarge {
            mu,
            min_gap: p.min_gap(),
        });
    }
    let jumps = p.jumps();
    let values_at_jumps = &p.node_values()[1..=jumps.len()];
    // σ = +1 at a valley (slope - then +), -1 at a peak
    let sigma: Vec<f64> = (0..jumps.len()).map(|k| -p.slope_on_piece(k)).collect();
    let n = mesh.n_elements();
    let mut values = Vec::with_capacity(n + 1);
    for (i, &t) in mesh.nodes().iter().enumerate() {
        if i == 0 || i == n {
            values.push(0.0);
            continue;
        }
        let k = jumps.partition_point(|&z| z < t);
        let near = [k.checked_sub(1), (k < jumps.len()).then_some(k)]
            .into_iter()
            .flatten()
            .find(|&j| (t - jumps[j]).abs() < mu);
        let v = match near {
            Some(j) => {
                let c = values_at_jumps[j] + sigma[j] * 0.5 * mu;
                sigma[j] * transition_profile(t - jumps[j], mu)? + c
            }
            None => p.value_at(t),
        };
        values.push(v);
    }
    Ok(DiffuseField {
        mesh: mesh.clone(),
        values,
    })
}

/// Precomputed discrete energy for one mesh, `ε` and weights.
#[derive(Debug, Clone)]
pub struct DiffuseEnergy {
    eps: f64,
    h: Vec<f64>,
    /// `ε² ∫_{dual cell} t^α · 4 / (h_{j-1} + h_j)²` for interior node `j`
    /// (index 0 unused).
    surf: Vec<f64>,
    /// element mass coefficients `(m00, m01, m11)` of `∫ t^-β u²`
    mass: Vec<[f64; 3]>,
}

impl DiffuseEnergy {
    pub fn new(mesh: &GradedMesh, eps: f64, w: &WeightParams) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(ModelError::InvalidConfig(format!("eps must be positive, got {eps}")));
        }
        w.require_bulk_finite()?;
        let t = mesh.nodes();
        let h = mesh.element_lengths();
        let n = h.len();
        let mid: Vec<f64> = t.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
        let mut surf = vec![0.0; n];
        for j in 1..n {
            let weight = integrate_power(mid[j - 1], mid[j], w.alpha);
            let span = h[j - 1] + h[j];
            surf[j] = eps * eps * weight * 4.0 / (span * span);
        }
        let mut mass = Vec::with_capacity(n);
        for e in 0..n {
            if e == 0 {
                // u(0) = 0: only the right hat function contributes
                mass.push([0.0, 0.0, h[0].powf(1.0 - w.beta) / (3.0 - w.beta)]);
            } else {
                let [j0, j1, j2] = shifted_moments(t[e], t[e + 1], w.beta);
                mass.push([j0 - 2.0 * j1 + j2, j1 - j2, j2]);
            }
        }
        Ok(Self { eps, h, surf, mass })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    fn slopes(&self, u: &[f64]) -> Vec<f64> {
        u.windows(2).zip(&self.h).map(|(p, h)| (p[1] - p[0]) / h).collect()
    }

    /// Energy of full nodal values `u` (length `N + 1`).
    pub fn evaluate(&self, u: &[f64]) -> EnergyBreakdown {
        let d = self.slopes(u);
        let n = self.h.len();
        let mut surface = 0.0;
        for j in 1..n {
            let jump = d[j] - d[j - 1];
            surface += self.surf[j] * jump * jump;
        }
        let well: f64 = d.iter().zip(&self.h).map(|(&s, &h)| h * double_well(s)).sum();
        let mut bulk = 0.0;
        for e in 0..n {
            let [m00, m01, m11] = self.mass[e];
            let (a, b) = (u[e], u[e + 1]);
            bulk += m00 * a * a + 2.0 * m01 * a * b + m11 * b * b;
        }
        EnergyBreakdown::new(surface, well, bulk)
    }

    /// Total energy and its gradient with respect to the interior values.
    pub fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let n = self.h.len();
        let d = self.slopes(u);
        let mut gd: Vec<f64> = d
            .iter()
            .zip(&self.h)
            .map(|(&s, &h)| h * double_well_derivative(s))
            .collect();
        let mut surface = 0.0;
        for j in 1..n {
            let jump = d[j] - d[j - 1];
            surface += self.surf[j] * jump * jump;
            let g = 2.0 * self.surf[j] * jump;
            gd[j] += g;
            gd[j - 1] -= g;
        }
        let mut full = vec![0.0; n + 1];
        for e in 0..n {
            let q = gd[e] / self.h[e];
            full[e + 1] += q;
            full[e] -= q;
        }
        let mut well = 0.0;
        let mut bulk = 0.0;
        for e in 0..n {
            well += self.h[e] * double_well(d[e]);
            let [m00, m01, m11] = self.mass[e];
            let (a, b) = (u[e], u[e + 1]);
            bulk += m00 * a * a + 2.0 * m01 * a * b + m11 * b * b;
            full[e] += 2.0 * (m00 * a + m01 * b);
            full[e + 1] += 2.0 * (m01 * a + m11 * b);
        }
        grad.copy_from_slice(&full[1..n]);
        surface + well + bulk
    }

    /// Gradient of the bulk term alone (interior nodes).
    pub fn bulk_gradient(&self, u: &[f64]) -> Vec<f64> {
        let n = self.h.len();
        let mut full = vec![0.0; n + 1];
        for e in 0..n {
            let [m00, m01, m11] = self.mass[e];
            full[e] += 2.0 * (m00 * u[e] + m01 * u[e + 1]);
            full[e + 1] += 2.0 * (m01 * u[e] + m11 * u[e + 1]);
        }
        full[1..n].to_vec()
    }

    /// Bands of the Hessian with respect to the interior values. With
    /// `convexify`, negative curvature of `W` is dropped, which makes the
    /// matrix positive definite.
    pub fn hessian_bands(&self, u: &[f64], convexify: bool) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.h.len();
        let d = self.slopes(u);
        let mut diag = vec![0.0; n + 1];
        let mut off1 = vec![0.0; n + 1];
        let mut off2 = vec![0.0; n + 1];
        for e in 0..n {
            let [m00, m01, m11] = self.mass[e];
            diag[e] += 2.0 * m00;
            diag[e + 1] += 2.0 * m11;
            off1[e] += 2.0 * m01;
            let mut curv = double_well_second(d[e]);
            if convexify {
                curv = curv.max(0.0);
            }
            let q = curv / self.h[e];
            diag[e] += q;
            diag[e + 1] += q;
            off1[e] -= q;
        }
        for j in 1..n {
            let v = [
                1.0 / self.h[j - 1],
                -(1.0 / self.h[j - 1] + 1.0 / self.h[j]),
                1.0 / self.h[j],
            ];
            let c = 2.0 * self.surf[j];
            for a in 0..3 {
                diag[j - 1 + a] += c * v[a] * v[a];
            }
            off1[j - 1] += c * v[0] * v[1];
            off1[j] += c * v[1] * v[2];
            off2[j - 1] += c * v[0] * v[2];
        }
        (
            diag[1..n].to_vec(),
            off1[1..n - 1].to_vec(),
            off2[1..n.saturating_sub(2)].to_vec(),
        )
    }
}

impl DiffuseEnergy {
    /// Size of the gradient error caused by rounding the nodal values,
    /// `ε_mach max_i Σ_j |H_ij| |u_j|`. On strongly graded meshes this
    /// can exceed a fixed gradient tolerance.
    pub fn gradient_noise_floor(&self, u: &[f64]) -> f64 {
        let (d, o1, o2) = self.hessian_bands(u, false);
        let x = &u[1..u.len() - 1];
        let m = x.len();
        let mut worst = 0.0f64;
        for i in 0..m {
            let mut acc = d[i].abs() * x[i].abs();
            if i + 1 < m {
                acc += o1[i].abs() * x[i + 1].abs();
            }
            if i >= 1 {
                acc += o1[i - 1].abs() * x[i - 1].abs();
            }
            if i + 2 < m {
                acc += o2[i].abs() * x[i + 2].abs();
            }
            if i >= 2 {
                acc += o2[i - 2].abs() * x[i - 2].abs();
            }
            worst = worst.max(acc);
        }
        f64::EPSILON * worst
    }
}

/// Energy of a field.
pub fn evaluate_diffuse(f: &DiffuseField, eps: f64, w: WeightParams) -> Result<EnergyBreakdown> {
    Ok(DiffuseEnergy::new(f.mesh(), eps, &w)?.evaluate(f.values()))
}

/// Exact gradient of the discrete energy with respect to the interior values.
pub fn gradient_diffuse(f: &DiffuseField, eps: f64, w: WeightParams) -> Result<Vec<f64>> {
    let energy = DiffuseEnergy::new(f.mesh(), eps, &w)?;
    let mut g = vec![0.0; f.interior().len()];
    energy.value_and_gradient(f.values(), &mut g);
    Ok(g)
}

/// Inverse Hessian: exact when positive definite, convexified otherwise.
struct HessianPreconditioner<'a> {
    energy: &'a DiffuseEnergy,
    factor: Option<PentaLdl>,
    full: Vec<f64>,
}

impl Preconditioner for HessianPreconditioner<'_> {
    fn update(&mut self, x: &[f64]) {
        let n = self.full.len();
        self.full[1..n - 1].copy_from_slice(x);
        let (d, o1, o2) = self.energy.hessian_bands(&self.full, false);
        self.factor = PentaLdl::factor(&d, &o1, &o2).or_else(|| {
            let (d, o1, o2) = self.energy.hessian_bands(&self.full, true);
            PentaLdl::factor(&d, &o1, &o2)
        });
    }

    fn apply(&self, v: &mut [f64]) {
        if let Some(f) = &self.factor {
            f.solve_in_place(v);
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiffuseOptions {
    /// Gradient max-norm tolerance; defaults to `1e-8 sqrt(N)`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Number of quasi-Newton correction pairs.
    pub memory: usize,
}

impl Default for DiffuseOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 2000,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffuseOutcome {
    pub field: DiffuseField,
    pub energy: EnergyBreakdown,
    /// Total energy after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub grad_max: f64,
    /// Rounding floor of the gradient at the returned field.
    pub grad_floor: f64,
    /// Gradient max-norm at most `max(tol, grad_floor)`.
    pub converged: bool,
    pub line_search_failed: bool,
}

/// Quasi-Newton descent (limited memory, Hessian-preconditioned, Armijo
/// backtracking) on the interior values of `init`.
pub fn minimize_diffuse(
    init: &DiffuseField,
    eps: f64,
    w: WeightParams,
    opts: &DiffuseOptions,
) -> Result<DiffuseOutcome> {
    let energy = DiffuseEnergy::new(init.mesh(), eps, &w)?;
    let n = init.mesh().n_elements();
    let tol = opts.tol.unwrap_or(1e-8 * (n as f64).sqrt());
    let lbfgs = LbfgsOptions {
        memory: opts.memory,
        max_iter: opts.max_iter,
        grad_tol: tol,
        f_rel_tol: 0.0,
        ..Default::default()
    };
    let mut precond = HessianPreconditioner {
        energy: &energy,
        factor: None,
        full: vec![0.0; n + 1],
    };
    let mut full = vec![0.0; n + 1];
    let out = minimize_lbfgs(
        init.interior().to_vec(),
        &lbfgs,
        |x, g| {
            full[1..n].copy_from_slice(x);
            energy.value_and_gradient(&full, g)
        },
        Some(&mut precond),
    );
    let field = init.with_interior(&out.x);
    let breakdown = energy.evaluate(field.values());
    let grad_floor = energy.gradient_noise_floor(field.values());
    let converged = match out.reason {
        StopReason::GradientTolerance => true,
        StopReason::Stalled | StopReason::LineSearchFailure => out.grad_max <= grad_floor.max(tol),
        StopReason::MaxIterations => false,
    };
    Ok(DiffuseOutcome {
        field,
        energy: breakdown,
        trace: out.trace,
        iterations: out.iterations,
        grad_max: out.grad_max,
        grad_floor,
        converged,
        line_search_failed: out.reason == StopReason::LineSearchFailure && !converged,
    })
}

/// Fraction of elements with `|u'|` in `[0.9, 1.1]`, ignoring elements
/// within three elements of a node where `|u''| > 0.1 / ε` (transition layers).
pub fn slope_saturation(f: &DiffuseField, eps: f64) -> f64 {
    let d = f.slopes();
    let h = f.mesh().element_lengths();
    let n = d.len();
    let mut in_layer = vec![false; n];
    for j in 1..n {
        let curvature = 2.0 * (d[j] - d[j - 1]) / (h[j - 1] + h[j]);
        if curvature.abs() > 0.1 / eps {
            for e in j.saturating_sub(3)..(j + 3).min(n) {
                in_layer[e] = true;
            }
        }
    }
    let (mut total, mut good) = (0usize, 0usize);
    for e in 0..n {
        if !in_layer[e] {
            total += 1;
            if (0.9..=1.1).contains(&d[e].abs()) {
                good += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        good as f64 / total as f64
    }
}
