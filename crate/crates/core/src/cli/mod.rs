//! Command-line interface: `synth`, `simulate`, `verify` and `bench`.
//!
//! Exit codes: 0 when every executed check passed, 1 when a check failed,
//! 2 on any error (configuration, solver, infeasibility, I/O).

pub mod bench;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use crate::benchmark::Example;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::io;
use crate::result::{Mode, SynthesisResult};
use crate::sim::{self, DisturbanceSignal, Metrics, Trajectory};
use crate::synthesis;
use crate::verify::{self, Report, TrajectoryBounds};

#[derive(Debug, Parser)]
#[command(
    name = "dynalloc",
    version,
    about = "Dynamic control allocation and anti-windup co-design"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize allocator and anti-windup gains from a config file.
    Synth(SynthArgs),
    /// Simulate the saturated closed loop and write a trajectory CSV plus metrics.
    Simulate(SimulateArgs),
    /// Verify gains (and optionally a trajectory) against the model.
    Verify(VerifyArgs),
    /// Reproduce the satellite benchmark into a report directory.
    Bench(BenchArgs),
}

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    pub config: PathBuf,
    /// Override the synthesis mode (nominal, global, disturbed, robust).
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Objective weights on lambda, gamma and mu, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub rho: Option<Vec<f64>>,
    /// Solve in balanced state coordinates.
    #[arg(long)]
    pub state_scaling: bool,
    #[arg(short, long, default_value = "result.json")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Memoryless allocator `y_f = M† y_c` with the controller anti-windup gain.
    Static,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// Gains file written by `synth` (or a fixture with printed gains).
    #[arg(long)]
    pub gains: PathBuf,
    /// Initial state, comma separated (the config scenario otherwise).
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
    /// Uncertain parameter value (two-vertex polytopes with `theta_vertices`).
    #[arg(long, conflicts_with = "alpha")]
    pub theta: Option<f64>,
    /// Simplex weights of the uncertainty vertices, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub alpha: Option<Vec<f64>>,
    #[arg(long)]
    pub t_final: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Ignore the scenario disturbance.
    #[arg(long)]
    pub no_disturbance: bool,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Trajectory CSV; metrics go next to it as `<stem>.metrics.json`.
    #[arg(short, long, default_value = "trajectory.csv")]
    pub output: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct VerifyArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub gains: PathBuf,
    /// Trajectory CSV to check against the certificate.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    /// Mode the certificate is checked for (the one stored in the gains file otherwise).
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Parameter value the trajectory was simulated at.
    #[arg(long, conflicts_with = "alpha")]
    pub theta: Option<f64>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub alpha: Option<Vec<f64>>,
    /// Abscissa threshold for vertex stability (default: 0 for certified gains,
    /// -1e-4 for gains without certificate).
    #[arg(long, allow_negative_numbers = true)]
    pub abscissa_threshold: Option<f64>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchWhich {
    SatelliteDisturbed,
    SatelliteRobust,
    All,
}

#[derive(Debug, clap::Args)]
pub struct BenchArgs {
    #[arg(value_enum)]
    pub which: BenchWhich,
    /// Output directory; each example writes into a subdirectory named after it.
    #[arg(short, long, default_value = "bench")]
    pub out: PathBuf,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Run a parsed command; `Ok(false)` means a check failed.
pub fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |v| format!("{v:.6e}"))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<bool> {
    let cfg = Config::load(&a.config)?;
    let cl = cfg.closed_loop()?;
    let dist = cfg.disturbance_class()?;
    let mut options = cfg.options()?;
    if let Some(mode) = a.mode {
        options.mode = mode;
    }
    if let Some(rho) = &a.rho {
        if !(2..=3).contains(&rho.len()) {
            return Err(Error::InvalidParameter(format!(
                "--rho takes 2 or 3 values, got {}",
                rho.len()
            )));
        }
        options.rho = [0.0; 3];
        options.rho[..rho.len()].copy_from_slice(rho);
    }
    options.state_scaling |= a.state_scaling;
    info!("synthesizing in {} mode", options.mode);
    let result = synthesis::synthesize(&cl, dist.as_ref(), &options)?;
    io::write_json(&a.output, &result)?;
    let cert = result.certificate()?;
    let d = &result.diagnostics;
    println!("mode        {}", result.mode);
    println!(
        "status      {}",
        d.status.map_or("unknown".to_string(), |s| s.to_string())
    );
    println!("gamma       {:.6e}", cert.gamma);
    println!("mu          {}", fmt_opt(cert.mu));
    println!("lambda      {}", fmt_opt(cert.lambda));
    println!("sigma       {}", fmt_opt(cert.sigma));
    println!("objective   {:.6e}", result.objective);
    println!("residual    {:.3e} ({})", d.worst_residual, d.worst_constraint);
    println!("solve time  {:.3} s", d.solve_time);
    println!("written     {}", a.output.display());
    Ok(true)
}

fn alpha_from(cfg: &Config, theta: Option<f64>, alpha: &Option<Vec<f64>>) -> Result<Option<Vec<f64>>> {
    match (theta, alpha) {
        (Some(t), _) => cfg.theta_weights(t).map(Some),
        (None, Some(a)) => Ok(Some(a.clone())),
        (None, None) => Ok(None),
    }
}

fn load_gains(path: &Path) -> Result<SynthesisResult> {
    io::read_json(path)
}

/// `<dir>/<stem>.metrics.json` next to a CSV path.
pub fn metrics_path(csv: &Path) -> PathBuf {
    let stem = csv
        .file_stem()
        .map_or("trajectory".into(), |s| s.to_string_lossy().into_owned());
    csv.with_file_name(format!("{stem}.metrics.json"))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<bool> {
    let cfg = Config::load(&a.config)?;
    let cl = cfg.closed_loop()?;
    let gains = load_gains(&a.gains)?;
    let x0 = match &a.x0 {
        Some(v) => nalgebra::DVector::from_column_slice(v),
        None => cfg.x0(),
    };
    let dist = if a.no_disturbance {
        DisturbanceSignal::Zero { n_w: cl.n_w() }
    } else {
        cfg.signal()?
    };
    let alpha = alpha_from(&cfg, a.theta, &a.alpha)?;
    let t_final = a.t_final.unwrap_or(cfg.scenario.t_final);
    let dt = a.dt.unwrap_or(cfg.scenario.dt);
    let traj = match a.baseline {
        None => sim::simulate(&cl, &gains, alpha.as_deref(), &x0, &dist, t_final, dt)?,
        Some(Baseline::Static) => sim::static_baseline_at(&cl, &gains.e_c, alpha.as_deref(), &x0, &dist, t_final, dt)?,
    };
    write_csv(&a.output, &traj)?;
    let r = cfg.disturbance_class()?.map(|d| d.r);
    let metrics = Metrics::compute(&traj, &cl.w(), r.as_ref());
    let mpath = metrics_path(&a.output);
    io::write_json(&mpath, &metrics)?;
    println!("samples              {}", traj.len());
    println!("energy               {:.6e}", metrics.energy);
    println!("terminal |x|         {:.6e}", metrics.terminal_state_norm);
    println!("allocation error     {:.6e}", metrics.allocation_error_integral);
    println!("peak |sat(y_f)|      {:?}", metrics.peak_saturated);
    println!("written              {} {}", a.output.display(), mpath.display());
    Ok(true)
}

fn write_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<bool> {
    let cfg = Config::load(&a.config)?;
    let cl = cfg.closed_loop()?;
    let dist = cfg.disturbance_class()?;
    let gains = load_gains(&a.gains)?;
    gains.check_dimensions(cl.n(), cl.n_c, cl.n_f, cl.m_a)?;
    let mode = a.mode.unwrap_or(gains.mode);
    let threshold = a.abscissa_threshold.unwrap_or(if gains.certificate.is_some() {
        0.0
    } else {
        verify::PRINTED_GAIN_ABSCISSA
    });
    let mut report = Report::default();
    report.extend_prefixed(
        "closed loop",
        verify::check_vertex_stability(&cl, &gains.k_f, threshold)?,
    );
    if let Some(cert) = &gains.certificate {
        report.extend_prefixed(
            "certificate",
            verify::check_lmi_certificate(&cl, &gains, mode, dist.as_ref())?,
        );
        for (i, p) in cert.p.iter().enumerate() {
            let check = verify::sector_spot_check(
                &cl.c,
                p,
                &cert.g,
                &cert.s,
                cl.u_bar(),
                cert.level(),
                bench::SECTOR_SAMPLES,
                bench::SECTOR_SEED,
            )?;
            report.push(check.prefixed(&format!("P[{i}]")));
        }
    }
    if let Some(path) = &a.trajectory {
        let cert = gains.certificate()?;
        let text = fs::read_to_string(path)?;
        let traj = Trajectory::read_csv(&text)?;
        let alpha = alpha_from(&cfg, a.theta, &a.alpha)?;
        let p = sim::lyapunov_matrix(&cert.p, alpha.as_deref());
        let w = cl.w();
        let disturbed = mode == Mode::Disturbed;
        let bounds = TrajectoryBounds {
            p: &p,
            gamma: cert.gamma,
            mu: cert.mu,
            w: &w,
            r: dist.as_ref().filter(|_| disturbed).map(|d| &d.r),
            sigma: dist.as_ref().filter(|_| disturbed).map(|d| d.sigma),
        };
        report.extend_prefixed("trajectory", verify::check_trajectory_certificates(&traj, &bounds)?);
    }
    print!("{report}");
    if let Some(path) = &a.json {
        io::write_json(path, &report)?;
    }
    Ok(report.passed())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<bool> {
    let examples: &[Example] = match a.which {
        BenchWhich::SatelliteDisturbed => &[Example::Disturbed],
        BenchWhich::SatelliteRobust => &[Example::Robust],
        BenchWhich::All => &[Example::Disturbed, Example::Robust],
    };
    let mut all_passed = true;
    for &ex in examples {
        let run = bench::run(ex, None)?;
        let dir = a.out.join(ex.name());
        bench::write(&run, &dir).map_err(|e| e.in_stage("write"))?;
        println!("== {} ({})", ex.name(), dir.display());
        print!("{}", run.report);
        all_passed &= run.report.passed();
    }
    Ok(all_passed)
}
