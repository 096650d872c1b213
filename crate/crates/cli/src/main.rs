use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use otfs_radar::estimator::ModelKind;
use otfs_radar::harness::{
    count_local_maxima, doppler_cut, estimate_scene, export_ambiguity_maps, parse_config, parse_scene, physical,
    run_montecarlo, run_selftest, sweep_eps_f, write_sweep, ExperimentConfig, InputMode, LOCAL_MAX_FLOOR,
};

#[derive(Parser)]
#[command(name = "otfs-radar", version, about = "OTFS pulse-radar simulation and estimation")]
struct Cli {
    /// Experiment file (TOML); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overrides the file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides the file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Source of the 2 x 2 blocks.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Interpolation model; all configured models when absent.
    #[arg(long, global = true, value_enum)]
    model: Option<Model>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fine ambiguity maps for every pulse/window pair.
    Ambiguity,
    /// RMSE of the fractional estimates over random scenes.
    Montecarlo,
    /// Fractional Doppler sweep with noise-free blocks.
    Sweep,
    /// Estimate the paths of one scene file.
    Estimate {
        /// Scene file (TOML).
        scene: PathBuf,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Pipeline,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Linear,
    Rrc,
}

impl From<Model> for ModelKind {
    fn from(m: Model) -> Self {
        match m {
            Model::Linear => ModelKind::Linear,
            Model::Rrc => ModelKind::RrcAutocorr,
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(mode) = cli.mode {
        cfg.mode = match mode {
            Mode::Exact => InputMode::Exact,
            Mode::Pipeline => InputMode::Pipeline,
        };
    }
    if let Some(model) = cli.model {
        cfg.models = vec![model.into()];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn ambiguity(cfg: &ExperimentConfig) -> Result<()> {
    let maps = export_ambiguity_maps(cfg, &cfg.output_dir)?;
    for m in &maps {
        let maxima = count_local_maxima(&doppler_cut(&m.surface), LOCAL_MAX_FLOOR);
        println!(
            "{:>5} pulse, {:>4} window: {} local maxima on the zero-delay Doppler cut -> {}",
            m.pulse.name(),
            m.window.name(),
            maxima,
            m.path.display()
        );
    }
    Ok(())
}

fn montecarlo(cfg: &ExperimentConfig) -> Result<()> {
    let result = run_montecarlo(cfg)?;
    println!("mode {}, {} trials per path count, seed {}", cfg.mode, cfg.n_sim, cfg.seed);
    println!(
        "{:>2} {:>7} {:>12} {:>12} {:>12} {:>9}",
        "P", "model", "rmse_alpha", "rmse_eps_t", "rmse_eps_f", "unmatched"
    );
    for r in &result.rows {
        println!(
            "{:>2} {:>7} {:>12.4e} {:>12.4e} {:>12.4e} {:>9}",
            r.paths,
            r.model.name(),
            r.rmse_alpha,
            r.rmse_eps_t,
            r.rmse_eps_f,
            r.unmatched_truths + r.unmatched_estimates
        );
    }
    report(&result.write(&cfg.output_dir, cfg)?);
    Ok(())
}

fn sweep(cfg: &ExperimentConfig) -> Result<()> {
    for kind in &cfg.models {
        let rows = sweep_eps_f(cfg, *kind)?;
        let worst = rows.iter().fold(0.0f64, |m, r| m.max(r.error.abs()));
        let path = write_sweep(&cfg.output_dir, cfg, *kind, &rows)?;
        println!("{:>6}: max |eps_f error| = {worst:.3e} -> {}", kind.name(), path.display());
    }
    Ok(())
}

fn estimate(cfg: &ExperimentConfig, scene_path: &Path, model: Option<Model>) -> Result<()> {
    let scene = parse_scene(scene_path, &cfg.frame)?;
    let kind = model.map_or(ModelKind::RrcAutocorr, ModelKind::from);
    let out = estimate_scene(cfg, &scene, kind).with_context(|| format!("estimating {}", scene_path.display()))?;
    println!("{} candidate(s), model {}", out.estimates.len(), kind);
    for (e, c) in out.estimates.iter().zip(&out.candidates) {
        let (delay, doppler) = physical(e, cfg);
        println!(
            "  k {:>3} l {:>4}  eps_t {:.4} eps_f {:.4}  |alpha| {:.4}  delay {:.4e} s  doppler {:.4e} Hz  |A| {:.3e}",
            e.k_hat, e.l_hat, e.eps_t_hat, e.eps_f_hat, e.alpha_hat, delay, doppler, c.magnitude
        );
    }
    report(&out.write(&cfg.output_dir, cfg)?);
    Ok(())
}

fn selftest() -> Result<bool> {
    let checks = run_selftest();
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn run(cli: Cli) -> Result<bool> {
    if let Command::Selftest = cli.command {
        return selftest();
    }
    let cfg = load(&cli)?;
    match &cli.command {
        Command::Ambiguity => ambiguity(&cfg)?,
        Command::Montecarlo => montecarlo(&cfg)?,
        Command::Sweep => sweep(&cfg)?,
        Command::Estimate { scene } => estimate(&cfg, scene, cli.model)?,
        Command::Selftest => bail!("unreachable"),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
