mod config;
mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use floquet_ep::berry::spectrum_region_scan;
use floquet_ep::sweep::{self, Engine};
use floquet_ep::verify::{self, Level, VerifyOptions};
use log::info;
use serde::Serialize;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(floquet_ep::Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
    #[error("{failed} verification criteria failed")]
    Verification { failed: usize },
}

impl From<floquet_ep::Error> for CliError {
    fn from(e: floquet_ep::Error) -> Self {
        use floquet_ep::Error::*;
        match e {
            UnknownPreset(_)
            | InvalidParameter(_)
            | SmoothWaveform { .. }
            | SquareWaveform { .. }
            | CutoffTooSmall { .. } => CliError::Config(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Output(_) => 2,
            CliError::Verification { .. } => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "floquet-ep",
    version,
    about = "Floquet stability, exceptional points and Berry phases of driven two-level systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the sweeps.
    #[arg(long, global = true, env = "FLOQUET_EP_THREADS")]
    threads: Option<usize>,

    /// floquet, monodromy-piecewise or monodromy-integrate.
    #[arg(long, global = true)]
    engine: Option<Engine>,

    /// Floquet harmonic cutoff N (matrix dimension 2(2N+1)).
    #[arg(long, global = true)]
    cutoff: Option<usize>,

    /// Loop discretization for `berry`, RK4 steps per period otherwise.
    #[arg(long, global = true)]
    steps: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Max |Im ε| over the (ω, γ) grid: CSV, JSON sidecar and SVG heatmap.
    PhaseDiagram,
    /// Exceptional-point contours in the (ω, γ) plane.
    EpContours,
    /// Complex Berry phase along the γ axis of the grid.
    Berry,
    /// Classify the instantaneous spectrum along γ and locate thresholds.
    SpectrumScan,
    /// Run the built-in acceptance checks and print a report.
    Verify {
        #[arg(long, value_enum, default_value_t = LevelArg::Fast)]
        level: LevelArg,
        /// Corrupt the Z-drive sign seen by the integrate oracle.
        #[arg(long, hide = true)]
        mutate_z_sign: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Verify { level, mutate_z_sign } = cli.command {
        install_pool(cli.threads)?;
        return cmd_verify(level, mutate_z_sign);
    }
    let path = cli.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut config = RunConfig::load(path)?;
    apply_overrides(&mut config, &cli);
    config.validate()?;
    install_pool(config.threads)?;
    let out = config.output_dir.clone();
    fs::create_dir_all(&out)?;
    // The effective configuration, after command-line overrides.
    write(&out.join("run_config.json"), &config.to_json())?;
    match cli.command {
        Command::PhaseDiagram => cmd_phase_diagram(&config, &out),
        Command::EpContours => cmd_ep_contours(&config, &out),
        Command::Berry => cmd_berry(&config, &out),
        Command::SpectrumScan => cmd_spectrum_scan(&config, &out),
        Command::Verify { .. } => unreachable!(),
    }
}

fn apply_overrides(config: &mut RunConfig, cli: &Cli) {
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    if let Some(engine) = cli.engine {
        config.engine = engine;
    }
    if let Some(cutoff) = cli.cutoff {
        config.cutoff = cutoff;
    }
    if let Some(steps) = cli.steps {
        match cli.command {
            Command::Berry => config.berry.steps = steps,
            _ => config.integrate_steps = steps,
        }
    }
}

fn install_pool(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("threads must be >= 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Config(e.to_string()))?;
    info!("using {n} worker threads");
    Ok(())
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn cmd_phase_diagram(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let template = config.template()?;
    let grid = config.grid();
    info!("phase diagram of {} on {} cells with {}", template.preset, grid.cells(), grid.engine);
    let diagram = sweep::phase_diagram(&template, &grid, &config.settings())?;
    if diagram.metadata.failed_cells > 0 {
        log::warn!("{} cells failed and hold NaN", diagram.metadata.failed_cells);
    }
    let csv = out.join("phase_diagram.csv");
    sweep::save_phase_diagram(&diagram, &csv)?;
    info!("wrote {}", csv.display());
    let overlay = if config.overlay_contours {
        let mut contour_grid = grid;
        if !contour_grid.engine.is_monodromy() {
            contour_grid.engine = Engine::MonodromyIntegrate;
        }
        info!("tracing EP contours with {}", contour_grid.engine);
        let set = sweep::trace_ep_contours(&template, &contour_grid, &config.settings(), &config.ep_options())?;
        let csv = out.join("ep_contours.csv");
        sweep::save_ep_contours(&set, &csv)?;
        info!("wrote {}", csv.display());
        Some(set)
    } else {
        None
    };
    write(&out.join("phase_diagram.svg"), &render::heatmap(&diagram, overlay.as_ref()))
}

fn cmd_ep_contours(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let template = config.template()?;
    let grid = config.grid();
    info!("EP contours of {} over {} columns with {}", template.preset, grid.omega_count, grid.engine);
    let set = sweep::trace_ep_contours(&template, &grid, &config.settings(), &config.ep_options())?;
    info!("{} contours, {} dropped roots", set.contours.len(), set.metadata.dropped_roots);
    let csv = out.join("ep_contours.csv");
    sweep::save_ep_contours(&set, &csv)?;
    info!("wrote {}", csv.display());
    write(&out.join("ep_contours.svg"), &render::contour_plot(&set))
}

fn cmd_berry(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let template = config.template()?;
    let gammas = config.grid().gammas();
    info!("Berry phase of {} at {} values of gamma", template.preset, gammas.len());
    let scan = sweep::berry_sweep(&template, &gammas, config.berry.omega, &config.berry_options())?;
    let uncertified = scan.results.iter().filter(|r| !r.certified).count();
    if uncertified > 0 {
        log::warn!("{uncertified} loops are not certified");
    }
    let csv = out.join("berry.csv");
    sweep::save_berry_scan(&scan, &csv)?;
    info!("wrote {}", csv.display());
    write(&out.join("berry.svg"), &render::berry_plot(&scan))
}

#[derive(Serialize)]
struct SpectrumMetadata<'a> {
    format_version: u32,
    model: floquet_ep::model::ModelTemplate,
    samples: usize,
    thresholds: &'a [f64],
    tool_version: &'a str,
}

fn cmd_spectrum_scan(config: &RunConfig, out: &Path) -> Result<(), CliError> {
    let template = config.template()?;
    let g = &config.grid;
    info!("instantaneous spectrum of {} at {} values of gamma", template.preset, g.gamma_count);
    let scan = spectrum_region_scan(&template, g.gamma_min, g.gamma_max, g.gamma_count, config.spectrum_samples)?;
    let mut csv = String::from("gamma,class\n");
    for (gamma, class) in scan.gammas.iter().zip(&scan.classes) {
        csv.push_str(&format!("{},{}\n", sweep::format_sci(*gamma), class.as_str()));
    }
    for t in &scan.thresholds {
        info!("class change at gamma = {t:.9}");
    }
    let path = out.join("spectrum_scan.csv");
    write(&path, &csv)?;
    let meta = SpectrumMetadata {
        format_version: sweep::FORMAT_VERSION,
        model: template,
        samples: config.spectrum_samples,
        thresholds: &scan.thresholds,
        tool_version: sweep::TOOL_VERSION,
    };
    let mut json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    json.push('\n');
    write(&sweep::sidecar_path(&path), &json)
}

fn cmd_verify(level: LevelArg, mutate_z_sign: bool) -> Result<(), CliError> {
    let level = match level {
        LevelArg::Fast => Level::Fast,
        LevelArg::Full => Level::Full,
    };
    let opts = VerifyOptions { mutate_z_sign };
    let mut failed = 0;
    for id in verify::criteria(level) {
        let report = verify::run_criterion(id, &opts);
        println!("{report}");
        failed += usize::from(!report.passed);
    }
    println!("{}", if failed == 0 { "all criteria passed".to_string() } else { format!("{failed} failed") });
    if failed > 0 {
        return Err(CliError::Verification { failed });
    }
    Ok(())
}
