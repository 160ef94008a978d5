//! A-posteriori checks of certificates, closed-loop stability and trajectory
//! properties. Only recovered gains, certificates and model data are read, so
//! results from any source (including printed gain matrices) can be verified.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lmi::{self, PsiData, PsiVars};
use crate::model::{dz, ClosedLoop, DisturbanceClass};
use crate::result::{Certificate, Mode, SynthesisResult};
use crate::sim::{energy_metric, Trajectory};

/// Eigenvalue tolerance for rebuilt matrix inequalities.
pub const LMI_TOL: f64 = 1e-9;
/// Abscissa threshold for gains printed to four decimals.
pub const PRINTED_GAIN_ABSCISSA: f64 = -1e-4;
/// Relative slack on the ellipsoid level along trajectories.
pub const INVARIANCE_TOL: f64 = 1e-6;
/// Relative quadrature tolerance for Lyapunov differences, scaled by `max V`.
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Rounding tolerance of the sector inequality, relative to the terms involved.
pub const SECTOR_TOL: f64 = 1e-12;
/// Stencils within this many `dt²` of a saturation switch are skipped.
pub const SWITCH_WINDOW: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The precondition of the property does not hold for this input.
    NotApplicable,
    /// Reported value without a pass criterion.
    Info,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "not-applicable",
            CheckStatus::Info => "info",
        })
    }
}

/// One named check; `margin` is positive when the property holds with room to spare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub margin: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Check {
    /// Pass iff `margin >= 0`.
    pub fn from_margin(name: impl Into<String>, margin: f64, detail: impl Into<String>) -> Self {
        let status = if margin >= 0.0 {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            name: name.into(),
            status,
            margin,
            detail: detail.into(),
        }
    }

    pub fn not_applicable(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::NotApplicable,
            margin: 0.0,
            detail: detail.into(),
        }
    }

    pub fn info(name: impl Into<String>, value: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Info,
            margin: value,
            detail: detail.into(),
        }
    }

    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }

    /// Same check under `prefix: name`.
    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}: {}", self.name);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    /// Append `other` with every name under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: Report) {
        self.checks.extend(other.checks.into_iter().map(|c| c.prefixed(prefix)));
    }

    /// No check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

/// One line per check: `name status margin [detail]`.
impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            write!(
                f,
                "{:<width$}  {:<14}  {:>+.6e}",
                c.name,
                c.status.to_string(),
                c.margin
            )?;
            if !c.detail.is_empty() {
                write!(f, "  {}", c.detail)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn inv_diag(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&v.map(|x| 1.0 / x))
}

/// Pairs `(A_i, B_i)` the certificate has to cover in `mode`.
fn mode_vertices(cl: &ClosedLoop, mode: Mode) -> Vec<(DMatrix<f64>, DMatrix<f64>)> {
    match mode {
        Mode::Robust => cl.vertices.clone(),
        _ => vec![(cl.a.clone(), cl.b.clone())],
    }
}

/// Rebuild the certificate inequalities from the recovered gains and report the
/// eigenvalue margins.
///
/// The dissipation inequality is checked in analysis form at every vertex (strict
/// sign only); when the certificate stores `J̄`, the multiplier form `Ψ` (or `Ψ_w`)
/// is rebuilt and held to [`LMI_TOL`].
/// `dist` is required in disturbed mode.
pub fn check_lmi_certificate(
    cl: &ClosedLoop,
    result: &SynthesisResult,
    mode: Mode,
    dist: Option<&DisturbanceClass>,
) -> Result<Report> {
    let cert = result.certificate()?;
    result.check_dimensions(cl.n(), cl.n_c, cl.n_f, cl.m_a)?;
    let vertices = mode_vertices(cl, mode);
    let p = certificate_matrices(cert, vertices.len())?;
    if cert.s.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::NotPositiveDefinite("certificate.s".into()));
    }
    if !(cert.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "certificate.gamma must be positive, got {}",
            cert.gamma
        )));
    }
    let r = match mode {
        Mode::Disturbed => {
            let d = dist.ok_or_else(|| Error::MissingField("disturbance class".into()))?;
            if d.r.nrows() != cl.n_w() {
                return Err(Error::dim("disturbance class R", cl.n_w(), d.r.nrows()));
            }
            cert.mu.ok_or_else(|| Error::MissingField("certificate.mu".into()))?;
            Some(d.r.clone())
        }
        _ => None,
    };
    let level = cert.level();

    let mut report = Report::default();
    for (i, pi) in p.iter().enumerate() {
        report.push(Check::from_margin(
            format!("P[{i}] > 0"),
            linalg::min_eigenvalue(pi) - LMI_TOL,
            "",
        ));
    }
    if let (Mode::Disturbed, Some(d), Some(mu)) = (mode, dist, cert.mu) {
        report.push(Check::from_margin(
            "sigma - mu >= 0",
            d.sigma - mu,
            format!("sigma={} mu={mu:e}", d.sigma),
        ));
        report.push(Check::from_margin("mu > 0", mu - LMI_TOL, ""));
    }
    for (i, pi) in p.iter().enumerate() {
        let margins = inclusion_margins(pi, &cert.g, cl.u_bar(), level)?;
        for (k, m) in margins.iter().enumerate() {
            report.push(Check::from_margin(format!("eqRAS[{i}][{k}]"), m + LMI_TOL, ""));
        }
    }
    let k_e = result.e();
    for (i, ((a_i, b_i), pi)) in vertices.iter().zip(&p).enumerate() {
        // congruence with J̄⁻¹ shrinks the multiplier-form margin, so only the sign is tested
        let phi = analysis_matrix(cl, a_i, b_i, &result.k_f, &k_e, pi, cert, r.as_ref());
        let top = linalg::max_eigenvalue(&phi);
        let mut check = Check::from_margin(format!("dissipation[{i}] < 0"), -top, "");
        if top >= 0.0 {
            check.status = CheckStatus::Fail;
        }
        report.push(check);
    }
    if let Some(j_bar) = &cert.j_bar {
        for (i, psi) in rebuild_psi(cl, result, cert, j_bar, mode, r.as_ref())?
            .iter()
            .enumerate()
        {
            report.push(Check::from_margin(
                format!("Psi[{i}] < 0"),
                -linalg::max_eigenvalue(psi) - LMI_TOL,
                "",
            ));
        }
    }
    Ok(report)
}

/// `P_i` per vertex; a single `P` is shared by all vertices.
fn certificate_matrices(cert: &Certificate, vertices: usize) -> Result<Vec<DMatrix<f64>>> {
    match cert.p.len() {
        0 => Err(Error::MissingField("certificate.p".into())),
        1 => Ok(vec![cert.p[0].clone(); vertices]),
        k if k == vertices => Ok(cert.p.clone()),
        k => Err(Error::dim("certificate.p (one per vertex)", vertices, k)),
    }
}

/// Quadratic form in `(x, φ, w)` whose negativity certifies
/// `V̇ + sat(y_f)ᵀW sat(y_f)/γ - 2φᵀS⁻¹(φ + (C + G)x) - wᵀRw < 0`.
#[allow(clippy::too_many_arguments)]
fn analysis_matrix(
    cl: &ClosedLoop,
    a_i: &DMatrix<f64>,
    b_i: &DMatrix<f64>,
    k_f: &DMatrix<f64>,
    e: &DMatrix<f64>,
    p: &DMatrix<f64>,
    cert: &Certificate,
    r: Option<&DMatrix<f64>>,
) -> DMatrix<f64> {
    let (n, m) = (cl.n(), cl.m_a);
    let n_w = if r.is_some() { cl.n_w() } else { 0 };
    let a_cl = a_i + &cl.l_f * k_f * &cl.c_bar;
    let b_cl = b_i + &cl.l * e;
    let w = cl.w();
    let s_inv = inv_diag(&cert.s);
    let c = &cl.c;
    let g = 1.0 / cert.gamma;

    let k = n + m + n_w;
    let mut phi = DMatrix::zeros(k, k);
    // V̇ = He(xᵀP(A x + B φ + B_w w))
    let pa = p * &a_cl;
    phi.view_mut((0, 0), (n, n)).copy_from(&(&pa + pa.transpose()));
    let pb = p * &b_cl;
    phi.view_mut((0, n), (n, m)).copy_from(&pb);
    if n_w > 0 {
        let pw = p * &cl.b_w_bar;
        phi.view_mut((0, n + m), (n, n_w)).copy_from(&pw);
    }
    // energy term on sat(y_f) = C x + φ
    let wc = &w * c;
    add_block(&mut phi, (0, 0), (n, n), &(c.transpose() * &wc * g));
    add_block(&mut phi, (0, n), (n, m), &(wc.transpose() * g));
    add_block(&mut phi, (n, n), (m, m), &(&w * g));
    // sector term
    let cg = c + &cert.g;
    add_block(&mut phi, (0, n), (n, m), &(-(cg.transpose() * &s_inv)));
    add_block(&mut phi, (n, n), (m, m), &(&s_inv * -2.0));
    if let Some(r) = r {
        phi.view_mut((n + m, n + m), (n_w, n_w)).copy_from(&(-r));
    }
    // mirror the upper blocks
    for i in 0..k {
        for j in 0..i {
            phi[(i, j)] = phi[(j, i)];
        }
    }
    phi
}

fn add_block(m: &mut DMatrix<f64>, at: (usize, usize), shape: (usize, usize), v: &DMatrix<f64>) {
    let mut view = m.view_mut(at, shape);
    view += v;
}

/// Rebuild `Ψ` (or `Ψ_w`) per vertex from `P̄ = J̄PJ̄ᵀ`, `Ḡ = GJ̄ᵀ`, `K_e = ES`,
/// `K̄_f = K_f C̄ J_fᵀ`, in the coordinates `J̄` was computed in.
fn rebuild_psi(
    cl: &ClosedLoop,
    result: &SynthesisResult,
    cert: &Certificate,
    j_bar: &DMatrix<f64>,
    mode: Mode,
    r: Option<&DMatrix<f64>>,
) -> Result<Vec<DMatrix<f64>>> {
    let n = cl.n();
    if j_bar.shape() != (n, n) {
        return Err(Error::dim(
            "certificate.j_bar",
            format!("{n}x{n}"),
            format!("{}x{}", j_bar.nrows(), j_bar.ncols()),
        ));
    }
    let mut p = certificate_matrices(cert, mode_vertices(cl, mode).len())?;
    let mut g = cert.g.clone();
    let mut k_f = result.k_f.clone();
    let mut e = result.e();
    let scaled;
    let work = match &cert.state_scaling {
        Some(d) => {
            let d = DVector::from_column_slice(d);
            scaled = cl.rescaled(&d)?;
            let dm = DMatrix::from_diagonal(&d);
            for pi in &mut p {
                *pi = &dm * &*pi * &dm;
            }
            g = &g * &dm;
            let d_f_inv = inv_diag(&d.rows(cl.n_p + cl.n_c, cl.n_f).into_owned());
            k_f = &d_f_inv * &k_f * &d_f_inv;
            e = inv_diag(&d.rows(cl.n_p, cl.n_c + cl.n_f).into_owned()) * e;
            &scaled
        }
        None => cl,
    };
    let j_f = j_bar.rows(cl.n_p + cl.n_c, cl.n_f).into_owned();
    let k_bar_f = &k_f * &work.c_bar * j_f.transpose();
    let s = cert.s_matrix();
    let k_e = &e * &s;
    let g_bar = &g * j_bar.transpose();
    let gamma = DMatrix::from_element(1, 1, cert.gamma);
    let w_sqrt = work.w_sqrt();
    let vertices = mode_vertices(work, mode);
    Ok(vertices
        .iter()
        .zip(&p)
        .map(|((a, b), pi)| {
            let p_bar = linalg::sym(&(j_bar * pi * j_bar.transpose()));
            let psi = lmi::psi(
                PsiData {
                    a,
                    b,
                    c: &work.c,
                    l: &work.l,
                    w_sqrt: &w_sqrt,
                },
                PsiVars {
                    p_bar: &p_bar,
                    j_bar,
                    k_bar_f: &k_bar_f,
                    k_e: &k_e,
                    g_bar: &g_bar,
                    s: &s,
                    gamma: &gamma,
                },
            );
            let psi = match r {
                Some(r) => lmi::psi_w(&psi, &work.b_w_bar, r),
                None => psi,
            };
            linalg::sym(&psi)
        })
        .collect())
}

/// Spectral abscissa of `A_i + L_f K_f C̄` at every vertex; pass iff below `threshold`.
pub fn check_vertex_stability(cl: &ClosedLoop, k_f: &DMatrix<f64>, threshold: f64) -> Result<Report> {
    if k_f.shape() != (cl.n_f, cl.n_f) {
        return Err(Error::dim(
            "K_f",
            format!("{0}x{0}", cl.n_f),
            format!("{}x{}", k_f.nrows(), k_f.ncols()),
        ));
    }
    let mut report = Report::default();
    for (i, a) in cl.vertex_state_matrices(k_f).iter().enumerate() {
        let abscissa = linalg::spectral_abscissa(a);
        let mut check = Check::from_margin(
            format!("abscissa[{i}]"),
            threshold - abscissa,
            format!("abscissa={abscissa:.6e}"),
        );
        // the property is strict
        if abscissa >= threshold {
            check.status = CheckStatus::Fail;
        }
        report.push(check);
    }
    Ok(report)
}

/// `μ ū_i² - G_(i) P⁻¹ G_(i)ᵀ` per actuator.
pub fn inclusion_margins(p: &DMatrix<f64>, g: &DMatrix<f64>, u_bar: &DVector<f64>, level: f64) -> Result<Vec<f64>> {
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("P".into()))?;
    if g.nrows() != u_bar.len() || g.ncols() != p.nrows() {
        return Err(Error::dim(
            "G",
            format!("{}x{}", u_bar.len(), p.nrows()),
            format!("{}x{}", g.nrows(), g.ncols()),
        ));
    }
    Ok((0..g.nrows())
        .map(|i| {
            let row = g.row(i).transpose();
            let quad = row.dot(&chol.solve(&row));
            level * u_bar[i] * u_bar[i] - quad
        })
        .collect())
}

/// `ε(P, level) ⊂ ℒ(ū)`, tested row by row through the Schur complement.
pub fn check_ellipsoid_inclusion(p: &DMatrix<f64>, g: &DMatrix<f64>, u_bar: &DVector<f64>, level: f64) -> Result<bool> {
    let margins = inclusion_margins(p, g, u_bar, level)?;
    Ok(margins
        .iter()
        .zip(u_bar.iter())
        .all(|(m, u)| *m >= -LMI_TOL * level * u * u))
}

/// Certificate data the trajectory properties refer to.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryBounds<'a> {
    /// `P`, or `P(θ)` at the simulated uncertainty.
    pub p: &'a DMatrix<f64>,
    pub gamma: f64,
    /// Ellipsoid level; `None` means 1.
    pub mu: Option<f64>,
    pub w: &'a DMatrix<f64>,
    /// Disturbance weight; `None` for undisturbed designs.
    pub r: Option<&'a DMatrix<f64>>,
    pub sigma: Option<f64>,
}

impl TrajectoryBounds<'_> {
    fn level(&self) -> f64 {
        self.mu.unwrap_or(1.0)
    }
}

/// Energy bound, ellipsoid invariance, Lyapunov decrease and dissipation along a
/// simulated trajectory.
pub fn check_trajectory_certificates(traj: &Trajectory, b: &TrajectoryBounds<'_>) -> Result<Report> {
    traj.check_aligned()?;
    if traj.is_empty() {
        return Err(Error::GridMismatch("trajectory has no samples".into()));
    }
    let n = traj.x[0].len();
    if b.p.shape() != (n, n) {
        return Err(Error::dim(
            "P",
            format!("{n}x{n}"),
            format!("{}x{}", b.p.nrows(), b.p.ncols()),
        ));
    }
    let v: Vec<f64> = traj.x.iter().map(|x| (x.transpose() * b.p * x)[(0, 0)]).collect();
    let v_max = v.iter().cloned().fold(0.0, f64::max);
    let level_inv = 1.0 / b.level();
    let w_energy: Vec<f64> = match b.r {
        Some(r) => traj.w.iter().map(|w| (w.transpose() * r * w)[(0, 0)]).collect(),
        None => vec![0.0; traj.len()],
    };
    let undisturbed = traj.w.iter().all(|w| w.iter().all(|&x| x == 0.0));
    let dist_energy: f64 = (1..traj.len()).map(|k| (traj.t[k] - traj.t[k - 1]) * w_energy[k]).sum();
    let admissible = match (b.r, b.sigma) {
        (Some(_), Some(sigma)) => dist_energy < 1.0 / sigma,
        _ => undisturbed,
    };
    let mut report = Report::default();

    let energy = energy_metric(traj, b.w);
    let bound = b.gamma * level_inv;
    report.push(Check::from_margin(
        "energy bound",
        bound - energy,
        format!("energy={energy:.6e} bound={bound:.6e}"),
    ));

    // invariance from ε(P, β) with β⁻¹ = μ⁻¹ - σ⁻¹ (μ⁻¹ = 1 without disturbance)
    let beta_inv = match (b.r, b.sigma) {
        (Some(_), Some(sigma)) => level_inv - 1.0 / sigma,
        _ => level_inv,
    };
    if v[0] <= beta_inv && admissible {
        let limit = level_inv * (1.0 + INVARIANCE_TOL);
        let worst = v_max;
        report.push(Check::from_margin(
            "ellipsoid invariance",
            (limit - worst) / level_inv,
            format!("max V={worst:.6e} limit={limit:.6e}"),
        ));
    } else {
        report.push(Check::not_applicable(
            "ellipsoid invariance",
            format!("x(0)'Px(0)={:.6e} beta^-1={beta_inv:.6e} admissible={admissible}", v[0]),
        ));
    }

    let inside = v[0] <= level_inv;
    let tol = QUADRATURE_TOL * v_max;
    if undisturbed && inside {
        let worst = v.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max);
        let worst = if worst.is_finite() { worst } else { 0.0 };
        report.push(Check::from_margin(
            "lyapunov decrease",
            tol - worst.max(0.0),
            format!("max increase={worst:.6e} tol={tol:.3e}"),
        ));
    } else {
        report.push(Check::not_applicable(
            "lyapunov decrease",
            if inside {
                "disturbed run"
            } else {
                "x(0) outside the certified ellipsoid"
            },
        ));
    }

    if inside && traj.len() >= 3 {
        let window = SWITCH_WINDOW * traj.dt * traj.dt;
        let pattern = |k: usize| -> Vec<i8> {
            traj.y_f[k]
                .iter()
                .zip(traj.sat[k].iter())
                .map(|(y, s)| {
                    if y > s {
                        1
                    } else if y < s {
                        -1
                    } else {
                        0
                    }
                })
                .collect()
        };
        let patterns: Vec<Vec<i8>> = (0..traj.len()).map(pattern).collect();
        let switch_times: Vec<f64> = (1..traj.len())
            .filter(|&k| patterns[k] != patterns[k - 1])
            .map(|k| 0.5 * (traj.t[k] + traj.t[k - 1]))
            .collect();
        let near_switch = |k: usize| {
            patterns[k - 1] != patterns[k]
                || patterns[k] != patterns[k + 1]
                || switch_times
                    .iter()
                    .any(|&ts| ts >= traj.t[k - 1] - window && ts <= traj.t[k + 1] + window)
        };
        let mut worst = f64::NEG_INFINITY;
        let mut skipped = 0usize;
        for k in 1..traj.len() - 1 {
            if near_switch(k) {
                skipped += 1;
                continue;
            }
            // V(t_{k+1}) - V(t_{k-1}) - ∫ wᵀRw over both steps
            let supplied = (traj.t[k] - traj.t[k - 1]) * w_energy[k] + (traj.t[k + 1] - traj.t[k]) * w_energy[k + 1];
            worst = worst.max(v[k + 1] - v[k - 1] - supplied);
        }
        let worst = if worst.is_finite() { worst } else { 0.0 };
        report.push(Check::from_margin(
            "dissipation",
            tol - worst.max(0.0),
            format!("max residual={worst:.6e} tol={tol:.3e} skipped={skipped}"),
        ));
    } else {
        report.push(Check::not_applicable(
            "dissipation",
            if inside {
                "fewer than three samples"
            } else {
                "x(0) outside the certified ellipsoid"
            },
        ));
    }
    Ok(report)
}

/// Sample `samples` points uniformly in `ε(P, level)` and test
/// `φᵀS⁻¹(φ + Cx + Gx) ≤ 0` with `φ = dz(Cx)`.
#[allow(clippy::too_many_arguments)]
pub fn sector_spot_check(
    c: &DMatrix<f64>,
    p: &DMatrix<f64>,
    g: &DMatrix<f64>,
    s: &DVector<f64>,
    u_bar: &DVector<f64>,
    level: f64,
    samples: usize,
    seed: u64,
) -> Result<Check> {
    let n = p.nrows();
    let chol = p
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("P".into()))?;
    // x = L⁻ᵀ u / √level with ‖u‖ ≤ 1 gives xᵀPx = ‖u‖² / level
    let l_t = chol.l().transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let dir = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let radius = rng.gen::<f64>().powf(1.0 / n as f64);
        let u = dir.normalize() * radius;
        let x = l_t
            .solve_upper_triangular(&u)
            .ok_or_else(|| Error::NotPositiveDefinite("P".into()))?
            / level.sqrt();
        let cx = c * &x;
        let gx = g * &x;
        let phi = dz(&cx, u_bar);
        let mut value = 0.0;
        let mut scale = 0.0;
        for i in 0..phi.len() {
            let term = phi[i] * (phi[i] + cx[i] + gx[i]) / s[i];
            value += term;
            scale += (phi[i].abs() * (phi[i].abs() + cx[i].abs() + gx[i].abs())) / s[i];
        }
        worst = worst.max(value - SECTOR_TOL * scale);
    }
    let worst = if worst.is_finite() { worst } else { 0.0 };
    Ok(Check::from_margin(
        "sector condition",
        -worst,
        format!("{samples} samples, max residual={worst:.3e}"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, DisturbanceSignal};

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn inclusion_scalar_boundary() {
        let p = m(1, 1, &[1.0]);
        let g = m(1, 1, &[1.0]);
        let u = DVector::from_element(1, 1.0);
        assert!(check_ellipsoid_inclusion(&p, &g, &u, 1.0).unwrap());
        assert!(!check_ellipsoid_inclusion(&p, &m(1, 1, &[1.01]), &u, 1.0).unwrap());
        assert!(check_ellipsoid_inclusion(&p, &m(1, 1, &[0.0]), &u, 1e-9).unwrap());
    }

    #[test]
    fn inclusion_rejects_indefinite_p() {
        let err = check_ellipsoid_inclusion(&m(1, 1, &[-1.0]), &m(1, 1, &[0.0]), &DVector::from_element(1, 1.0), 1.0);
        assert!(matches!(err, Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn zero_trajectory_passes() {
        let cl = crate::benchmark::satellite_closed_loop(crate::benchmark::Example::Disturbed).unwrap();
        let n = cl.n();
        let gains = SynthesisResult::from_gains(
            Mode::Nominal,
            DMatrix::from_diagonal_element(cl.n_f, cl.n_f, -1.0),
            DMatrix::zeros(cl.n_c, cl.m_a),
            DMatrix::zeros(cl.n_f, cl.m_a),
        );
        let zero = DisturbanceSignal::Zero { n_w: cl.n_w() };
        let traj = simulate(&cl, &gains, None, &DVector::zeros(n), &zero, 1.0, 0.01).unwrap();
        let p = DMatrix::identity(n, n);
        let w = cl.w();
        let report = check_trajectory_certificates(
            &traj,
            &TrajectoryBounds {
                p: &p,
                gamma: 1.0,
                mu: None,
                w: &w,
                r: None,
                sigma: None,
            },
        )
        .unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.checks.iter().all(|c| c.status == CheckStatus::Pass), "{report}");
    }

    #[test]
    fn start_outside_ellipsoid_is_not_applicable() {
        let cl = crate::benchmark::satellite_closed_loop(crate::benchmark::Example::Disturbed).unwrap();
        let n = cl.n();
        let gains = SynthesisResult::from_gains(
            Mode::Nominal,
            DMatrix::from_diagonal_element(cl.n_f, cl.n_f, -1.0),
            DMatrix::zeros(cl.n_c, cl.m_a),
            DMatrix::zeros(cl.n_f, cl.m_a),
        );
        let zero = DisturbanceSignal::Zero { n_w: cl.n_w() };
        let mut x0 = DVector::zeros(n);
        x0[0] = 10.0;
        let traj = simulate(&cl, &gains, None, &x0, &zero, 0.1, 0.01).unwrap();
        let p = DMatrix::identity(n, n);
        let w = cl.w();
        let report = check_trajectory_certificates(
            &traj,
            &TrajectoryBounds {
                p: &p,
                gamma: 1e9,
                mu: None,
                w: &w,
                r: None,
                sigma: None,
            },
        )
        .unwrap();
        assert_eq!(
            report.get("ellipsoid invariance").unwrap().status,
            CheckStatus::NotApplicable
        );
    }

    #[test]
    fn zero_k_f_is_marginal() {
        let cl = crate::benchmark::satellite_closed_loop(crate::benchmark::Example::Disturbed).unwrap();
        let report = check_vertex_stability(&cl, &DMatrix::zeros(cl.n_f, cl.n_f), 0.0).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn report_lines() {
        let mut r = Report::default();
        r.push(Check::from_margin("a", 1.0, ""));
        r.push(Check::from_margin("bb", -1.0, "x"));
        let text = r.to_string();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("bb  fail"));
        assert!(!r.passed());
    }
}
