//! Benchmark reproduction: synthesis, dynamic and static-allocator simulations,
//! verification, and the files written for each example.

use std::fs;
use std::path::Path;

use crate::benchmark::{self, Example};
use crate::config::Config;
use crate::error::Result;
use crate::io;
use crate::model::ClosedLoop;
use crate::result::{Mode, SynthesisResult};
use crate::sdp::{self, SolveOptions};
use crate::sim::{self, Metrics, Trajectory};
use crate::synthesis;
use crate::verify::{self, Check, Report, TrajectoryBounds};

/// Terminal `|y_p|` required for the disturbed example.
pub const OUTPUT_TOL: f64 = 1e-3;
/// Terminal `‖x‖ / ‖x(0)‖` required for the robust example.
pub const CONVERGENCE_RATIO: f64 = 1e-3;
/// Required relative reduction of the penalized actuator's usage.
pub const USAGE_REDUCTION: f64 = 0.2;
/// Sector-condition samples and seed.
pub const SECTOR_SAMPLES: usize = 10_000;
pub const SECTOR_SEED: u64 = 1;
/// Parameter values simulated in the robust example.
pub const ROBUST_THETAS: [f64; 3] = [0.9, 0.95, 1.0];

/// Dynamic and static-allocator runs of one scenario.
#[derive(Debug, Clone)]
pub struct SimRun {
    /// File stem suffix, empty for the nominal scenario.
    pub label: String,
    pub theta: Option<f64>,
    pub dynamic: Trajectory,
    pub baseline: Trajectory,
}

#[derive(Debug, Clone)]
pub struct BenchRun {
    pub example: Example,
    pub config: Config,
    pub result: SynthesisResult,
    pub runs: Vec<SimRun>,
    /// Acceptance summary.
    pub report: Report,
}

/// Run the full pipeline for `example` without touching the file system.
pub fn run(example: Example, solver: Option<SolveOptions>) -> Result<BenchRun> {
    let config = Config::satellite(example).map_err(|e| e.in_stage("config"))?;
    let cl = config.closed_loop().map_err(|e| e.in_stage("config"))?;
    let dist = config.disturbance_class().map_err(|e| e.in_stage("config"))?;
    let mut options = config.options().map_err(|e| e.in_stage("config"))?;
    options.solver = solver;
    let result = synthesis::synthesize(&cl, dist.as_ref(), &options).map_err(|e| e.in_stage("synth"))?;
    let sc = benchmark::scenario(example);
    let thetas: Vec<Option<f64>> = match example {
        Example::Disturbed => vec![None],
        Example::Robust => ROBUST_THETAS.iter().map(|&t| Some(t)).collect(),
    };
    let mut runs = Vec::new();
    for theta in thetas {
        let alpha = theta.map(|t| benchmark::theta_weights(t).to_vec());
        let stage = |what: &str| match theta {
            Some(t) => format!("simulate {what} theta={t}"),
            None => format!("simulate {what}"),
        };
        let dynamic = sim::simulate(
            &cl,
            &result,
            alpha.as_deref(),
            &sc.x0,
            &sc.disturbance,
            sc.t_final,
            sc.dt,
        )
        .map_err(|e| e.in_stage(stage("dynamic")))?;
        let baseline = sim::static_baseline_at(
            &cl,
            &result.e_c,
            alpha.as_deref(),
            &sc.x0,
            &sc.disturbance,
            sc.t_final,
            sc.dt,
        )
        .map_err(|e| e.in_stage(stage("static")))?;
        runs.push(SimRun {
            label: theta.map_or(String::new(), |t| format!("_theta{t:.2}")),
            theta,
            dynamic,
            baseline,
        });
    }
    let report = acceptance_report(example, &cl, &result, &runs, dist.as_ref()).map_err(|e| e.in_stage("verify"))?;
    Ok(BenchRun {
        example,
        config,
        result,
        runs,
        report,
    })
}

fn acceptance_report(
    example: Example,
    cl: &ClosedLoop,
    result: &SynthesisResult,
    runs: &[SimRun],
    dist: Option<&crate::model::DisturbanceClass>,
) -> Result<Report> {
    let mode = result.mode;
    let cert = result.certificate()?;
    let mut report = Report::default();
    report.push(Check::from_margin(
        "synthesis feasible",
        result.diagnostics.worst_residual + sdp::RESIDUAL_TOL,
        format!(
            "status={} gamma={:.6e} mu={} lambda={} sigma={}",
            result
                .diagnostics
                .status
                .map_or("unknown".to_string(), |s| s.to_string()),
            cert.gamma,
            cert.mu.map_or("-".into(), |v| format!("{v:.6e}")),
            cert.lambda.map_or("-".into(), |v| format!("{v:.6e}")),
            cert.sigma.map_or("-".into(), |v| format!("{v:.6e}")),
        ),
    ));
    report.extend_prefixed("certificate", verify::check_lmi_certificate(cl, result, mode, dist)?);
    report.extend_prefixed("closed loop", verify::check_vertex_stability(cl, &result.k_f, 0.0)?);
    for (i, p) in cert.p.iter().enumerate() {
        let check = verify::sector_spot_check(
            &cl.c,
            p,
            &cert.g,
            &cert.s,
            cl.u_bar(),
            cert.level(),
            SECTOR_SAMPLES,
            SECTOR_SEED,
        )?;
        report.push(check.prefixed(&format!("P[{i}]")));
    }
    let w = cl.w();
    let disturbed = mode == Mode::Disturbed;
    for run in runs {
        let alpha = run.theta.map(|t| benchmark::theta_weights(t).to_vec());
        let p = sim::lyapunov_matrix(&cert.p, alpha.as_deref());
        let bounds = TrajectoryBounds {
            p: &p,
            gamma: cert.gamma,
            mu: cert.mu,
            w: &w,
            r: dist.filter(|_| disturbed).map(|d| &d.r),
            sigma: dist.filter(|_| disturbed).map(|d| d.sigma),
        };
        let prefix = match run.theta {
            Some(t) => format!("theta={t:.2}"),
            None => "dynamic".to_string(),
        };
        report.extend_prefixed(&prefix, verify::check_trajectory_certificates(&run.dynamic, &bounds)?);
        let x_end = run.dynamic.terminal_state();
        match example {
            Example::Disturbed => {
                let y_p = (&cl.plant.c_p * x_end.rows(0, cl.n_p)).amax();
                report.push(
                    Check::from_margin(
                        format!("terminal |y_p| < {OUTPUT_TOL:e}"),
                        OUTPUT_TOL - y_p,
                        format!("|y_p(T)|={y_p:.6e} T={}", run.dynamic.t.last().unwrap_or(&0.0)),
                    )
                    .prefixed(&prefix),
                );
                let dynamic_usage = run.dynamic.actuator_usage(0);
                let static_usage = run.baseline.actuator_usage(0);
                let reduction = 1.0 - dynamic_usage / static_usage;
                report.push(Check::from_margin(
                    format!("actuator 1 usage reduction >= {:.0}%", USAGE_REDUCTION * 100.0),
                    reduction - USAGE_REDUCTION,
                    format!(
                        "dynamic={dynamic_usage:.6e} static={static_usage:.6e} reduction={:.2}%",
                        reduction * 100.0
                    ),
                ));
                if let Some(d) = dist {
                    let sc = benchmark::scenario(example);
                    let energy = sc.disturbance.energy(&d.r);
                    report.push(Check::info(
                        "disturbance energy",
                        energy,
                        format!("sigma^-1={:.6e} admissible={}", 1.0 / d.sigma, energy < 1.0 / d.sigma),
                    ));
                }
            }
            Example::Robust => {
                let x0 = &run.dynamic.x[0];
                let ratio = x_end.norm() / x0.norm();
                report.push(
                    Check::from_margin(
                        format!("terminal ||x|| < {CONVERGENCE_RATIO:e} ||x(0)||"),
                        CONVERGENCE_RATIO - ratio,
                        format!("||x(T)||={:.6e} ||x(0)||={:.6e}", x_end.norm(), x0.norm()),
                    )
                    .prefixed(&prefix),
                );
            }
        }
    }
    Ok(report)
}

fn write_trajectory(
    dir: &Path,
    stem: &str,
    traj: &Trajectory,
    cl: &ClosedLoop,
    r: Option<&nalgebra::DMatrix<f64>>,
) -> Result<()> {
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    fs::write(dir.join(format!("{stem}.csv")), buf)?;
    io::write_json(
        &dir.join(format!("{stem}.metrics.json")),
        &Metrics::compute(traj, &cl.w(), r),
    )?;
    Ok(())
}

/// Write config, result, trajectories, metrics, plot script and summary into `dir`.
pub fn write(run: &BenchRun, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cl = run.config.closed_loop()?;
    let dist = run.config.disturbance_class()?;
    let r = dist.as_ref().map(|d| &d.r);
    io::write_json(&dir.join("config.json"), &run.config)?;
    io::write_json(&dir.join("result.json"), &run.result)?;
    let mut plots = Vec::new();
    for sim_run in &run.runs {
        let dyn_stem = format!("dynamic{}", sim_run.label);
        let static_stem = format!("static{}", sim_run.label);
        write_trajectory(dir, &dyn_stem, &sim_run.dynamic, &cl, r)?;
        write_trajectory(dir, &static_stem, &sim_run.baseline, &cl, r)?;
        plots.push((dyn_stem, static_stem, sim_run.theta));
    }
    fs::write(dir.join("plot.gp"), gnuplot_script(&cl, &plots))?;
    fs::write(dir.join("summary.txt"), run.report.to_string())?;
    io::write_json(&dir.join("summary.json"), &run.report)?;
    Ok(())
}

/// Column of `name` (1-based, as gnuplot counts) in a trajectory CSV with state size `n`.
fn column(n: usize, m_a: usize, group: &str, index: usize) -> usize {
    match group {
        "t" => 1,
        "x" => 1 + index,
        "yf" => 1 + n + index,
        "sat" => 1 + n + m_a + index,
        _ => unreachable!("unsupported column group"),
    }
}

fn gnuplot_script(cl: &ClosedLoop, plots: &[(String, String, Option<f64>)]) -> String {
    let (n, n0, m_a) = (cl.n(), cl.n_p + cl.n_c, cl.m_a);
    let mut s = String::new();
    s.push_str("# gnuplot script; run `gnuplot plot.gp` inside this directory\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set terminal pngcairo size 1000,600\n");
    s.push_str("set xlabel 't [s]'\nset grid\n");
    for (dynamic, baseline, theta) in plots {
        let tag = theta.map_or(String::new(), |t| format!(" (theta = {t:.2})"));
        s.push_str(&format!("\nset output '{dynamic}_output.png'\n"));
        s.push_str(&format!("set title 'relative position{tag}'\nset ylabel 'y_p [m]'\n"));
        s.push_str(&format!(
            "plot '{dynamic}.csv' skip 1 using 1:{} with lines title 'dynamic allocator', \\\n     '{baseline}.csv' skip 1 using 1:{} with lines title 'static allocator'\n",
            column(n, m_a, "x", 1),
            column(n0, m_a, "x", 1),
        ));
        s.push_str(&format!("\nset output '{dynamic}_thrusts.png'\n"));
        s.push_str(&format!(
            "set title 'saturated commands, dynamic allocator{tag}'\nset ylabel 'sat(y_f) [mN]'\n"
        ));
        let series: Vec<String> = (1..=m_a)
            .map(|i| {
                format!(
                    "'{dynamic}.csv' skip 1 using 1:{} with lines title 'actuator {i}'",
                    column(n, m_a, "sat", i)
                )
            })
            .collect();
        s.push_str(&format!("plot {}\n", series.join(", \\\n     ")));
        s.push_str(&format!("\nset output '{dynamic}_actuator1.png'\n"));
        s.push_str(&format!(
            "set title 'penalized actuator{tag}'\nset ylabel 'sat(y_f)_1 [mN]'\n"
        ));
        s.push_str(&format!(
            "plot '{dynamic}.csv' skip 1 using 1:{} with lines title 'dynamic allocator', \\\n     '{baseline}.csv' skip 1 using 1:{} with lines title 'static allocator'\n",
            column(n, m_a, "sat", 1),
            column(n0, m_a, "sat", 1),
        ));
    }
    s
}
