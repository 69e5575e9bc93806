//! Small numerical optimizers: limited-memory BFGS with Armijo backtracking,
//! golden-section search, and a pentadiagonal LDLᵀ factorization used as a
//! Hessian preconditioner.

use std::collections::VecDeque;

/// Options for [`minimize_lbfgs`].
#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the gradient max-norm drops to this value.
    pub grad_tol: f64,
    /// Stop when `|f_k - f_{k+1}| <= f_rel_tol * |f_k|` for `stall_iters` iterations in a row.
    pub f_rel_tol: f64,
    pub stall_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 1000,
            grad_tol: 1e-8,
            f_rel_tol: 0.0,
            stall_iters: 5,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    Stalled,
    MaxIterations,
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_max: f64,
    pub iterations: usize,
    pub reason: StopReason,
    /// Objective value after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

impl LbfgsOutcome {
    pub fn converged(&self) -> bool {
        matches!(self.reason, StopReason::GradientTolerance | StopReason::Stalled)
    }
}

/// Approximate inverse Hessian, refreshed at every iterate.
pub trait Preconditioner {
    /// Called once per iteration before any [`Preconditioner::apply`].
    fn update(&mut self, x: &[f64]);
    /// Overwrites `v` with `H0 v`.
    fn apply(&self, v: &mut [f64]);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `objective`, which returns `f(x)` and writes `∇f(x)` into its
/// second argument. The returned point never has a larger value than `x0`.
pub fn minimize_lbfgs<F>(
    x0: Vec<f64>,
    opts: &LbfgsOptions,
    mut objective: F,
    mut precond: Option<&mut dyn Preconditioner>,
) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let mut trace = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut stall = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    let finish = |x, f, g: &[f64], it, reason, trace| LbfgsOutcome {
        x,
        f,
        grad_max: max_abs(g),
        iterations: it,
        reason,
        trace,
    };

    if !f.is_finite() {
        return finish(x, f, &g, 0, StopReason::LineSearchFailure, trace);
    }

    for it in 0..opts.max_iter {
        if max_abs(&g) <= opts.grad_tol {
            return finish(x, f, &g, it, StopReason::GradientTolerance, trace);
        }
        if let Some(p) = precond.as_deref_mut() {
            p.update(&x);
        }

        // two-loop recursion
        let mut d: Vec<f64> = g.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &d);
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
            alphas.push(a);
        }
        match precond.as_deref() {
            Some(p) => p.apply(&mut d),
            None => {
                let gamma = match pairs.back() {
                    Some((s, y, _)) => dot(s, y) / dot(y, y),
                    None => 1.0 / max_abs(&g).max(1e-300),
                };
                d.iter_mut().for_each(|di| *di *= gamma);
            }
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (a - b) * si;
            }
        }
        d.iter_mut().for_each(|di| *di = -*di);

        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // not a descent direction: restart from the preconditioned gradient
            pairs.clear();
            d.copy_from_slice(&g);
            if let Some(p) = precond.as_deref() {
                p.apply(&mut d);
            } else {
                let scale = 1.0 / max_abs(&g).max(1e-300);
                d.iter_mut().for_each(|di| *di *= scale);
            }
            d.iter_mut().for_each(|di| *di = -*di);
            slope = dot(&g, &d);
            if !(slope < 0.0) {
                return finish(x, f, &g, it, StopReason::LineSearchFailure, trace);
            }
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut f_new = f;
        for _ in 0..=opts.max_backtracks {
            for ((xn, xi), di) in x_new.iter_mut().zip(&x).zip(&d) {
                *xn = xi + step * di;
            }
            f_new = objective(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + opts.armijo * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return finish(x, f, &g, it, StopReason::LineSearchFailure, trace);
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if opts.memory > 0 && sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }

        let decrease = f - f_new;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        trace.push(f);

        if decrease <= opts.f_rel_tol * f.abs() {
            stall += 1;
            if stall >= opts.stall_iters {
                return finish(x, f, &g, it + 1, StopReason::Stalled, trace);
            }
        } else {
            stall = 0;
        }
    }
    let reason = if max_abs(&g) <= opts.grad_tol {
        StopReason::GradientTolerance
    } else {
        StopReason::MaxIterations
    };
    let it = opts.max_iter;
    finish(x, f, &g, it, reason, trace)
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search on `[lo, hi]`. `better(a, b)` must return true when
/// the objective at `a` is strictly below the objective at `b`; passing an
/// exact comparison (rather than comparing rounded values) lets the search
/// resolve the minimizer to full precision.
pub fn golden_section<C>(mut lo: f64, mut hi: f64, rel_tol: f64, better: C) -> f64
where
    C: Fn(f64, f64) -> bool,
{
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    for _ in 0..400 {
        if (hi - lo) <= rel_tol * (lo.abs() + hi.abs()) {
            break;
        }
        if better(c, d) {
            hi = d;
            d = c;
            c = hi - INV_PHI * (hi - lo);
        } else {
            lo = c;
            c = d;
            d = lo + INV_PHI * (hi - lo);
        }
    }
    0.5 * (lo + hi)
}

/// Symmetric matrix with two off-diagonals, factored as `L D Lᵀ`.
#[derive(Debug, Clone)]
pub struct PentaLdl {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl PentaLdl {
    /// `diag[i] = A[i][i]`, `off1[i] = A[i+1][i]`, `off2[i] = A[i+2][i]`.
    /// Returns `None` if a pivot is not positive (matrix not positive definite).
    pub fn factor(diag: &[f64], off1: &[f64], off2: &[f64]) -> Option<Self> {
        let n = diag.len();
        let mut d = vec![0.0; n];
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for i in 0..n {
            let mut di = diag[i];
            if i >= 1 {
                di -= l1[i - 1] * l1[i - 1] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i - 2] * l2[i - 2] * d[i - 2];
            }
            if !(di > 0.0) || !di.is_finite() {
                return None;
            }
            d[i] = di;
            if i + 1 < n {
                let mut a = off1[i];
                if i >= 1 {
                    a -= l2[i - 1] * l1[i - 1] * d[i - 1];
                }
                l1[i] = a / di;
            }
            if i + 2 < n {
                l2[i] = off2[i] / di;
            }
        }
        Some(Self { d, l1, l2 })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n {
            if i >= 1 {
                b[i] -= self.l1[i - 1] * b[i - 1];
            }
            if i >= 2 {
                b[i] -= self.l2[i - 2] * b[i - 2];
            }
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            if i + 1 < n {
                b[i] -= self.l1[i] * b[i + 1];
            }
            if i + 2 < n {
                b[i] -= self.l2[i] * b[i + 2];
            }
        }
    }
}
