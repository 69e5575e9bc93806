//! Single-ε solves for both models.

use mspl_core::asymptotics::slope_flips;
use mspl_core::diffuse::{
    build_smoothed, evaluate_diffuse, minimize_diffuse, DiffuseField, DiffuseOptions, DiffuseOutcome,
    GradedMesh,
};
use mspl_core::sharp::{
    build_clamped_graded_profile, close_gaps, CornerCost, GradedSpacingConfig, SharpOptimum,
    SharpOptions, SharpProblem,
};
use mspl_core::{SawtoothProfile, Slope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;

/// Sharp options derived from the config. The jump-count scale is
/// calibrated once here so that sweeps do not repeat it per ε.
pub fn sharp_options(cfg: &ExperimentConfig, corner: Option<CornerCost>) -> Result<SharpOptions> {
    let mut opts = SharpOptions {
        gamma: cfg.gamma,
        fixed_n: cfg.n_jumps,
        ..Default::default()
    };
    if opts.fixed_n.is_none() {
        let corner = corner.unwrap_or_else(|| CornerCost::sharp(&cfg.weights));
        let probe = SharpProblem::with_corner(1e-3, cfg.weights, corner)?;
        opts.n_scale = Some(probe.calibrate_n_scale(&opts)?);
    }
    Ok(opts)
}

pub fn run_sharp(eps: f64, cfg: &ExperimentConfig, opts: &SharpOptions) -> Result<SharpOptimum> {
    Ok(SharpProblem::new(eps, cfg.weights)?.optimize(opts)?)
}

/// Largest transition width not above `eps` for which `p` can be smoothed.
pub fn admissible_mu(p: &SawtoothProfile, eps: f64) -> f64 {
    let gaps = p.gaps();
    let m = gaps.len();
    if m < 2 {
        return eps;
    }
    let interior = gaps[1..m - 1].iter().fold(f64::INFINITY, |a, &g| a.min(0.5 * g));
    let boundary = 0.99 * gaps[0].min(gaps[m - 1]);
    eps.min(interior).min(boundary)
}

/// The graded sawtooth construction with `n` jumps, smoothed with width `mu`.
pub fn smoothed_construction(
    n: usize,
    gamma: f64,
    mu: f64,
    mesh: &GradedMesh,
) -> Result<DiffuseField> {
    let p = build_clamped_graded_profile(&GradedSpacingConfig::new(gamma, n)?)?;
    Ok(build_smoothed(&p, mu, mesh)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffuseRun {
    pub eps: f64,
    pub outcome: DiffuseOutcome,
    /// Energy of the smoothed graded construction.
    pub construction_energy: f64,
    /// Transition width used for the construction (`eps` unless its teeth
    /// were too narrow).
    pub construction_mu: f64,
    /// Which starting field produced the minimizer.
    pub start: String,
    /// Jumps of the sharp proxy used to seed the solver.
    pub seed_jumps: usize,
    /// Slope sign changes of the minimizer.
    pub n_jumps: usize,
}

struct Start {
    label: String,
    field: DiffuseField,
}

fn jittered(p: &SawtoothProfile, rng: &mut ChaCha8Rng) -> Result<SawtoothProfile> {
    let gaps: Vec<f64> = p
        .gaps()
        .iter()
        .map(|g| g * (0.3 * rng.gen_range(-1.0..1.0f64)).exp())
        .collect();
    Ok(SawtoothProfile::from_gaps(&close_gaps(&gaps), Slope::Up)?)
}

/// Minimizes `F_ε` from several starting fields and keeps the lowest:
/// the smoothed graded construction, the smoothed optimum of the sharp
/// energy with the diffuse corner cost, and `restarts` random
/// perturbations of that optimum (seeded from `cfg.seed`).
pub fn run_diffuse(eps: f64, cfg: &ExperimentConfig) -> Result<DiffuseRun> {
    let w = cfg.weights;
    let mesh = GradedMesh::new(cfg.mesh.n, cfg.mesh.q)?;
    let corner = CornerCost::diffuse_layer(&w);
    let opts = sharp_options(cfg, Some(corner))?;
    let proxy = SharpProblem::with_corner(eps, w, corner)?.optimize(&opts)?;
    let gamma = cfg
        .gamma
        .unwrap_or_else(|| GradedSpacingConfig::default_gamma(w.beta));

    let graded = build_clamped_graded_profile(&GradedSpacingConfig::new(gamma, proxy.n)?)?;
    let construction_mu = admissible_mu(&graded, eps);
    let construction = build_smoothed(&graded, construction_mu, &mesh)?;
    let construction_energy = evaluate_diffuse(&construction, eps, w)?.total;

    let mut starts = vec![
        Start {
            label: "construction".into(),
            field: construction,
        },
        Start {
            label: "sharp-proxy".into(),
            field: build_smoothed(&proxy.profile, admissible_mu(&proxy.profile, eps), &mesh)?,
        },
    ];
    for r in 0..cfg.optimizer.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        let p = jittered(&proxy.profile, &mut rng)?;
        starts.push(Start {
            label: format!("restart-{r}"),
            field: build_smoothed(&p, admissible_mu(&p, eps), &mesh)?,
        });
    }

    let dopts = DiffuseOptions {
        tol: cfg.optimizer.tol,
        max_iter: cfg.optimizer.max_iter,
        ..Default::default()
    };
    let outcomes = starts
        .par_iter()
        .map(|s| minimize_diffuse(&s.field, eps, w, &dopts))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let (idx, best) = outcomes
        .into_iter()
        .enumerate()
        .min_by(|a, b| a.1.energy.total.total_cmp(&b.1.energy.total).then(a.0.cmp(&b.0)))
        .expect("at least two starts");
    let n_jumps = slope_flips(best.field.mesh().nodes(), best.field.values()).len();
    Ok(DiffuseRun {
        eps,
        construction_energy,
        construction_mu,
        start: starts[idx].label.clone(),
        seed_jumps: proxy.n,
        n_jumps,
        outcome: best,
    })
}
