//! Sweeps and reports built on the single-ε solvers.

use mspl_core::asymptotics::{default_window, extract_period, predicted_period, PeriodSource};
use mspl_core::sharp::cumulative_energy;
use mspl_core::{ModelError, WeightParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::{LabError, Result};
use crate::fit::{fit_scaling, linear_fit, ScalingFit};
use crate::pipeline::{run_diffuse, run_sharp, sharp_options};

/// Parameters echoed on every emitted row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    /// Mesh elements (diffuse rows only).
    pub mesh_n: Option<usize>,
    pub grading_q: Option<f64>,
    /// Gradient tolerance in effect (diffuse rows only).
    pub tol: Option<f64>,
    pub seed: u64,
}

impl Provenance {
    pub fn sharp(cfg: &ExperimentConfig, eps: f64) -> Self {
        Self {
            alpha: cfg.weights.alpha,
            beta: cfg.weights.beta,
            eps,
            mesh_n: None,
            grading_q: None,
            tol: None,
            seed: cfg.seed,
        }
    }

    pub fn diffuse(cfg: &ExperimentConfig, eps: f64) -> Self {
        let tol = cfg
            .optimizer
            .tol
            .unwrap_or(1e-8 * (cfg.mesh.n as f64).sqrt());
        Self {
            mesh_n: Some(cfg.mesh.n),
            grading_q: Some(cfg.mesh.q),
            tol: Some(tol),
            ..Self::sharp(cfg, eps)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Sharp,
    Diffuse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub model: Model,
    pub energy_total: f64,
    pub energy_surface: f64,
    pub energy_well: f64,
    pub energy_bulk: f64,
    pub n_jumps: usize,
    /// Slope of the fit over this and all smaller ε of the same model
    /// (needs three points).
    pub slope_running: Option<f64>,
    pub converged: bool,
    /// Energy of the smoothed graded construction (diffuse rows).
    pub construction_energy: Option<f64>,
    pub params: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model: Model,
    pub fit: Option<ScalingFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub weights: WeightParams,
    pub rows: Vec<ScalingRow>,
    pub fits: Vec<ModelFit>,
}

impl SweepReport {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }

    pub fn fit(&self, model: Model) -> Option<&ScalingFit> {
        self.fits.iter().find(|f| f.model == model).and_then(|f| f.fit.as_ref())
    }
}

/// Minimizes every `(ε, model)` pair of the config in the worker pool and
/// fits `log E` against `log ε` per model. Rows are sorted by `(ε, model)`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let mut jobs: Vec<(f64, Model)> = Vec::new();
    for &eps in &cfg.eps_list {
        if cfg.model.includes_sharp() {
            jobs.push((eps, Model::Sharp));
        }
        if cfg.model.includes_diffuse() {
            jobs.push((eps, Model::Diffuse));
        }
    }
    let mut rows = cfg.install(|| -> Result<Vec<ScalingRow>> {
        let sharp_opts = if cfg.model.includes_sharp() {
            Some(sharp_options(cfg, None)?)
        } else {
            None
        };
        jobs.par_iter()
            .map(|&(eps, model)| match model {
                Model::Sharp => {
                    let o = run_sharp(eps, cfg, sharp_opts.as_ref().expect("sharp options"))?;
                    Ok(ScalingRow {
                        eps,
                        model,
                        energy_total: o.energy.total,
                        energy_surface: o.energy.surface,
                        energy_well: o.energy.well,
                        energy_bulk: o.energy.bulk,
                        n_jumps: o.n,
                        slope_running: None,
                        converged: o.converged,
                        construction_energy: None,
                        params: Provenance::sharp(cfg, eps),
                    })
                }
                Model::Diffuse => {
                    let r = run_diffuse(eps, cfg)?;
                    let e = r.outcome.energy;
                    Ok(ScalingRow {
                        eps,
                        model,
                        energy_total: e.total,
                        energy_surface: e.surface,
                        energy_well: e.well,
                        energy_bulk: e.bulk,
                        n_jumps: r.n_jumps,
                        slope_running: None,
                        converged: r.outcome.converged,
                        construction_energy: Some(r.construction_energy),
                        params: Provenance::diffuse(cfg, eps),
                    })
                }
            })
            .collect()
    })?;
    rows.sort_by(|a, b| a.eps.total_cmp(&b.eps).then(a.model.cmp(&b.model)));

    let mut fits = Vec::new();
    for model in [Model::Sharp, Model::Diffuse] {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].model == model).collect();
        if idx.is_empty() {
            continue;
        }
        let mut pairs = Vec::new();
        for &i in &idx {
            pairs.push((rows[i].eps, rows[i].energy_total));
            rows[i].slope_running = fit_scaling(&pairs).ok().map(|f| f.slope);
        }
        fits.push(ModelFit {
            model,
            fit: fit_scaling(&pairs).ok(),
        });
    }
    Ok(SweepReport {
        weights: cfg.weights,
        rows,
        fits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub x: f64,
    pub phi: f64,
    /// `φ(x) / (x ε^{2/3})`
    pub ratio: f64,
    /// `x < c1 ε^{2/(9-3β)}`
    pub flag_below_threshold: bool,
    pub params: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub eps: f64,
    pub weights: WeightParams,
    pub c1: f64,
    pub threshold: f64,
    pub rows: Vec<DistributionRow>,
    /// `max / min` of the ratio over unflagged rows.
    pub spread: Option<f64>,
    pub ratio_min: Option<f64>,
    pub ratio_max: Option<f64>,
    pub energy_total: f64,
    /// `φ(1) / ε^{2/3}`
    pub constant: f64,
    pub n_jumps: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Cumulative energy of the sharp minimizer on a log grid: `n_x` points from
/// `c1 ε^{2/(9-3β)}` to 1, preceded by `n_x / 4` flagged points reaching one
/// decade below the threshold.
pub fn run_distribution_report(cfg: &ExperimentConfig, eps: f64) -> Result<DistributionReport> {
    cfg.validate()?;
    let w = cfg.weights;
    let mut warnings = Vec::new();
    if !w.distribution_ok() {
        warnings.push(format!(
            "2 alpha = {} < beta = {}: linear growth of the cumulative energy is not expected",
            2.0 * w.alpha,
            w.beta
        ));
    }
    let threshold = cfg.c1 * eps.powf(2.0 / (9.0 - 3.0 * w.beta));
    let opt = cfg.install(|| -> Result<_> {
        let opts = sharp_options(cfg, None)?;
        run_sharp(eps, cfg, &opts)
    })?;

    let mut xs = Vec::new();
    if threshold < 1.0 {
        let lo = threshold / 10.0;
        let below = (cfg.n_x / 4).max(1);
        for i in 0..below {
            xs.push(lo * (threshold / lo).powf(i as f64 / below as f64));
        }
        for i in 0..cfg.n_x {
            let x = threshold * threshold.powf(-(i as f64) / (cfg.n_x - 1) as f64);
            xs.push(x.min(1.0));
        }
        *xs.last_mut().expect("grid") = 1.0;
    } else {
        warnings.push(format!("threshold {threshold} >= 1: every row is below it"));
        for i in 0..cfg.n_x {
            xs.push(0.1f64.powf(1.0 - i as f64 / (cfg.n_x - 1) as f64));
        }
    }
    let profile = cumulative_energy(&opt.profile, eps, w, &xs)?;
    let scale = eps.powf(2.0 / 3.0);
    let params = Provenance::sharp(cfg, eps);
    let rows: Vec<DistributionRow> = xs
        .iter()
        .zip(&profile.phis)
        .map(|(&x, &phi)| DistributionRow {
            x,
            phi,
            ratio: phi / (x * scale),
            flag_below_threshold: x < threshold,
            params,
        })
        .collect();
    let valid: Vec<f64> = rows.iter().filter(|r| !r.flag_below_threshold).map(|r| r.ratio).collect();
    let (ratio_min, ratio_max) = if valid.is_empty() {
        (None, None)
    } else {
        (
            Some(valid.iter().copied().fold(f64::INFINITY, f64::min)),
            Some(valid.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        )
    };
    let spread = match (ratio_min, ratio_max) {
        (Some(lo), Some(hi)) if lo > 0.0 => Some(hi / lo),
        _ => None,
    };
    Ok(DistributionReport {
        eps,
        weights: w,
        c1: cfg.c1,
        threshold,
        rows,
        spread,
        ratio_min,
        ratio_max,
        energy_total: opt.energy.total,
        constant: opt.energy.total / scale,
        n_jumps: opt.n,
        converged: opt.converged,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRow {
    pub s: f64,
    pub h_emp: Option<f64>,
    pub h_pred: f64,
    pub ratio: Option<f64>,
    pub n_teeth: Option<usize>,
    pub window: f64,
    /// Why the period could not be measured.
    pub note: Option<String>,
    pub params: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub eps: f64,
    pub weights: WeightParams,
    /// Which minimizer the periods were read from.
    pub source: Model,
    pub rows: Vec<PeriodRow>,
    /// Slope of `log h_emp` against `log s` over the measured rows.
    pub slope: Option<f64>,
    pub predicted_slope: f64,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl PeriodReport {
    pub fn complete(&self) -> bool {
        self.rows.iter().all(|r| r.h_emp.is_some())
    }
}

fn period_rows(
    source: PeriodSource<'_>,
    cfg: &ExperimentConfig,
    eps: f64,
    s_list: &[f64],
    params: Provenance,
) -> Result<Vec<PeriodRow>> {
    let w = cfg.weights;
    s_list
        .iter()
        .map(|&s| {
            let window = default_window(eps, s, &w);
            let h_pred = predicted_period(eps, s, &w);
            match extract_period(source, s, window, eps, &w) {
                Ok(p) => Ok(PeriodRow {
                    s,
                    h_emp: Some(p.h_emp),
                    h_pred: p.h_pred,
                    ratio: Some(p.ratio),
                    n_teeth: Some(p.n_teeth),
                    window,
                    note: None,
                    params,
                }),
                Err(e @ ModelError::TooFewOscillations { .. }) => Ok(PeriodRow {
                    s,
                    h_emp: None,
                    h_pred,
                    ratio: None,
                    n_teeth: None,
                    window,
                    note: Some(e.to_string()),
                    params,
                }),
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

/// Local periods of the minimizer at each `s`. With `model = both` the
/// diffuse minimizer is used unless some window holds too few oscillations,
/// in which case the sharp minimizer is measured instead.
pub fn run_period_report(cfg: &ExperimentConfig, eps: f64, s_list: &[f64]) -> Result<PeriodReport> {
    cfg.validate()?;
    if s_list.is_empty() {
        return Err(LabError::Config("s list is empty".into()));
    }
    if let Some(s) = s_list.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
        return Err(LabError::Config(format!("s = {s} is outside (0, 1)")));
    }
    let w = cfg.weights;
    let mut warnings = Vec::new();
    if !w.limit_ok() {
        warnings.push(format!(
            "(alpha, beta) = ({}, {}) is outside the range of the local period law",
            w.alpha, w.beta
        ));
    }
    let mut attempt = None;
    if cfg.model.includes_diffuse() {
        let run = cfg.install(|| run_diffuse(eps, cfg))?;
        let rows = period_rows(
            PeriodSource::Diffuse(&run.outcome.field),
            cfg,
            eps,
            s_list,
            Provenance::diffuse(cfg, eps),
        )?;
        attempt = Some((Model::Diffuse, rows, run.outcome.converged));
    }
    let diffuse_incomplete = attempt
        .as_ref()
        .is_some_and(|(_, rows, _)| rows.iter().any(|r| r.h_emp.is_none()));
    if cfg.model == ModelKind::Sharp || (cfg.model == ModelKind::Both && diffuse_incomplete) {
        if diffuse_incomplete {
            warnings.push("diffuse minimizer has too few oscillations; using the sharp minimizer".into());
        }
        let opt = cfg.install(|| -> Result<_> {
            let opts = sharp_options(cfg, None)?;
            run_sharp(eps, cfg, &opts)
        })?;
        let rows = period_rows(
            PeriodSource::Sharp(&opt.profile),
            cfg,
            eps,
            s_list,
            Provenance::sharp(cfg, eps),
        )?;
        attempt = Some((Model::Sharp, rows, opt.converged));
    }
    let (source, rows, converged) = attempt.expect("some model is selected");
    let measured: Vec<&PeriodRow> = rows.iter().filter(|r| r.h_emp.is_some()).collect();
    let slope = (measured.len() >= 2).then(|| {
        let xs: Vec<f64> = measured.iter().map(|r| r.s.ln()).collect();
        let ys: Vec<f64> = measured.iter().map(|r| r.h_emp.expect("measured").ln()).collect();
        linear_fit(&xs, &ys).0
    });
    Ok(PeriodReport {
        eps,
        weights: w,
        source,
        rows,
        slope,
        predicted_slope: mspl_core::asymptotics::period_exponent(&w),
        converged,
        warnings,
    })
}
