use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mspl_core::asymptotics::{minimize_cell, CellDensityParams};
use mspl_core::WeightParams;
use mspl_lab::config::{preset, ExperimentConfig, Format, ModelKind};
use mspl_lab::error::Result;
use mspl_lab::output::{distribution_table, period_table, sweep_table, Table};
use mspl_lab::pipeline::{run_diffuse, run_sharp, sharp_options};
use mspl_lab::reports::{run_distribution_report, run_period_report, run_sweep, Provenance};
use serde_json::json;

const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "mspl", version, about = "Minimizers of weighted singularly perturbed 1D energies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the sharp-interface energy at one eps.
    SharpMin(Common),
    /// Minimize the diffuse-interface energy at one eps.
    DiffuseMin(Common),
    /// Minimize over an eps list and fit the energy scaling exponent.
    SweepScaling(Common),
    /// Cumulative energy phi(x) of the sharp minimizer.
    EnergyProfile {
        #[command(flatten)]
        common: Common,
        /// Grid starts at c1 * eps^(2/(9-3 beta)).
        #[arg(long)]
        c1: Option<f64>,
        /// Number of grid points above the threshold.
        #[arg(long)]
        n_x: Option<usize>,
    },
    /// Local periods of the minimizer against the predicted period law.
    PeriodCheck {
        #[command(flatten)]
        common: Common,
        /// Positions s in (0, 1), comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.8")]
        s_list: Vec<f64>,
    },
    /// Minimize the cell density g(h, 0) at position s.
    Cell {
        #[arg(long)]
        s: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        alpha: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        beta: f64,
    },
    /// Print a named configuration (muller, spherical-ok, custom) as JSON.
    Preset { name: String },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta: Option<f64>,
    /// Single eps (single-eps commands default to the first entry of the list).
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    #[arg(long, value_parser = ["sharp", "diffuse", "both"])]
    model: Option<String>,
    /// Grading exponent of the graded construction.
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Fix the number of jumps.
    #[arg(long)]
    n_jumps: Option<usize>,
    #[arg(long)]
    mesh_n: Option<usize>,
    #[arg(long)]
    grading_q: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; without it the table goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Also write an SVG plot (needs --out).
    #[arg(long)]
    plot: bool,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => ExperimentConfig::default(),
        };
        if let Some(a) = self.alpha {
            cfg.weights.alpha = a;
        }
        if let Some(b) = self.beta {
            cfg.weights.beta = b;
        }
        if let Some(list) = &self.eps_list {
            cfg.eps_list = list.clone();
        }
        if let Some(e) = self.eps {
            cfg.eps_list = vec![e];
        }
        if let Some(m) = &self.model {
            cfg.model = match m.as_str() {
                "sharp" => ModelKind::Sharp,
                "diffuse" => ModelKind::Diffuse,
                _ => ModelKind::Both,
            };
        }
        if self.gamma.is_some() {
            cfg.gamma = self.gamma;
        }
        if self.n_jumps.is_some() {
            cfg.n_jumps = self.n_jumps;
        }
        if let Some(n) = self.mesh_n {
            cfg.mesh.n = n;
        }
        if let Some(q) = self.grading_q {
            cfg.mesh.q = q;
        }
        if self.tol.is_some() {
            cfg.optimizer.tol = self.tol;
        }
        if let Some(m) = self.max_iter {
            cfg.optimizer.max_iter = m;
        }
        if let Some(r) = self.restarts {
            cfg.optimizer.restarts = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.out.is_some() {
            cfg.output.directory = self.out.clone();
        }
        if let Some(f) = &self.format {
            cfg.output.formats = vec![if f == "json" { Format::Json } else { Format::Csv }];
        }
        if self.plot && !cfg.output.formats.contains(&Format::Svg) {
            cfg.output.formats.push(Format::Svg);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn eps_of(cfg: &ExperimentConfig) -> f64 {
    cfg.eps_list[0]
}

/// Writes the table to the output directory, or prints it to stdout in the
/// first requested text format.
fn emit(cfg: &ExperimentConfig, table: &Table) -> Result<()> {
    match &cfg.output.directory {
        Some(dir) => {
            for path in table.write(dir, &cfg.output.formats)? {
                eprintln!("wrote {}", path.display());
            }
        }
        None => {
            let json_first = cfg.output.formats.iter().find(|f| **f != Format::Svg) == Some(&Format::Json);
            if json_first {
                print!("{}", table.render_json());
            } else {
                print!("{}", table.render_csv()?);
            }
        }
    }
    Ok(())
}

fn emit_document(cfg: &ExperimentConfig, stem: &str, doc: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    match &cfg.output.directory {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{stem}.json"));
            std::fs::write(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn status(converged: bool) -> ExitCode {
    if converged {
        ExitCode::SUCCESS
    } else {
        eprintln!("warning: solver did not converge; results are flagged");
        ExitCode::from(EXIT_NOT_CONVERGED)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::SharpMin(common) => {
            let cfg = common.config()?;
            let eps = eps_of(&cfg);
            let opt = cfg.install(|| -> Result<_> {
                let opts = sharp_options(&cfg, None)?;
                run_sharp(eps, &cfg, &opts)
            })?;
            let doc = json!({
                "params": Provenance::sharp(&cfg, eps),
                "energy": opt.energy,
                "n_jumps": opt.n,
                "jumps": opt.profile.jumps(),
                "converged": opt.converged,
            });
            emit_document(&cfg, "sharp_min", &doc)?;
            Ok(status(opt.converged))
        }
        Command::DiffuseMin(common) => {
            let cfg = common.config()?;
            let eps = eps_of(&cfg);
            let run = cfg.install(|| run_diffuse(eps, &cfg))?;
            let o = &run.outcome;
            let doc = json!({
                "params": Provenance::diffuse(&cfg, eps),
                "energy": o.energy,
                "construction_energy": run.construction_energy,
                "construction_mu": run.construction_mu,
                "start": run.start,
                "n_jumps": run.n_jumps,
                "iterations": o.iterations,
                "grad_max": o.grad_max,
                "grad_floor": o.grad_floor,
                "converged": o.converged,
                "line_search_failed": o.line_search_failed,
                "nodes": o.field.mesh().nodes(),
                "values": o.field.values(),
            });
            emit_document(&cfg, "diffuse_min", &doc)?;
            Ok(status(o.converged))
        }
        Command::SweepScaling(common) => {
            let cfg = common.config()?;
            let rep = run_sweep(&cfg)?;
            for f in &rep.fits {
                if let Some(fit) = &f.fit {
                    eprintln!(
                        "{:?}: slope {:.4}, r^2 {:.6}, constant {:.4}",
                        f.model,
                        fit.slope,
                        fit.r_squared,
                        fit.constant()
                    );
                }
            }
            emit(&cfg, &sweep_table(&rep))?;
            Ok(status(rep.all_converged()))
        }
        Command::EnergyProfile { common, c1, n_x } => {
            let mut cfg = common.config()?;
            if let Some(c) = c1 {
                cfg.c1 = c;
            }
            if let Some(n) = n_x {
                cfg.n_x = n;
            }
            let rep = run_distribution_report(&cfg, eps_of(&cfg))?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(s) = rep.spread {
                eprintln!("ratio spread {s:.4} over x >= {:.4e}", rep.threshold);
            }
            emit(&cfg, &distribution_table(&rep))?;
            Ok(status(rep.converged))
        }
        Command::PeriodCheck { common, s_list } => {
            let cfg = common.config()?;
            let rep = run_period_report(&cfg, eps_of(&cfg), &s_list)?;
            for w in &rep.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(slope) = rep.slope {
                eprintln!(
                    "{:?} minimizer: log-period slope {slope:.4} (predicted {:.4})",
                    rep.source, rep.predicted_slope
                );
            }
            emit(&cfg, &period_table(&rep))?;
            Ok(status(rep.converged))
        }
        Command::Cell { s, alpha, beta } => {
            let c = CellDensityParams::at(s, &WeightParams::new(alpha, beta))?;
            let m = minimize_cell(&c)?;
            println!("{}", serde_json::to_string_pretty(&json!({ "params": c, "minimum": m }))?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { name } => {
            println!("{}", preset(&name)?.to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use mspl_lab::error::LabError;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_preset() {
        let cli = Cli::parse_from(["mspl", "sweep-scaling", "--preset", "spherical-ok", "--beta", "0.5", "--eps-list", "0.01,0.001"]);
        let Command::SweepScaling(common) = cli.command else { panic!() };
        let cfg = common.config().unwrap();
        assert_eq!(cfg.weights.alpha, 0.5);
        assert_eq!(cfg.weights.beta, 0.5);
        assert_eq!(cfg.eps_list, vec![0.01, 0.001]);
    }

    #[test]
    fn bad_preset_is_a_config_error() {
        let cli = Cli::parse_from(["mspl", "sharp-min", "--preset", "bogus"]);
        let Command::SharpMin(common) = cli.command else { panic!() };
        let err = common.config().unwrap_err();
        assert!(matches!(err, LabError::UnknownPreset(_)));
        assert_eq!(err.exit_code(), 2);
    }
}
