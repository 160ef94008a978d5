//! Fixed-step simulation of the saturated closed loop and trajectory metrics.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{dz, sat, validate_simplex, ClosedLoop};
use crate::result::SynthesisResult;

/// States larger than this are reported as divergence.
const DIVERGENCE_BOUND: f64 = 1e12;

/// Exogenous input `w(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceSignal {
    Zero {
        n_w: usize,
    },
    /// `values[k]` holds on `[breakpoints[k], breakpoints[k+1])`; the last value holds forever.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
    /// Linear interpolation between samples, zero outside `[times[0], times[last]]`.
    Samples {
        times: Vec<f64>,
        values: Vec<DVector<f64>>,
    },
}

impl DisturbanceSignal {
    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        Self::check(&breakpoints, &values, "piecewise-constant")?;
        Ok(Self::PiecewiseConstant { breakpoints, values })
    }

    pub fn samples(times: Vec<f64>, values: Vec<DVector<f64>>) -> Result<Self> {
        Self::check(&times, &values, "samples")?;
        Ok(Self::Samples { times, values })
    }

    fn check(times: &[f64], values: &[DVector<f64>], kind: &str) -> Result<()> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::InvalidParameter(format!(
                "{kind} disturbance needs equally many (>0) times and values, got {} and {}",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{kind} disturbance times must increase strictly"
            )));
        }
        let n_w = values[0].len();
        if values.iter().any(|v| v.len() != n_w) {
            return Err(Error::InvalidParameter(format!(
                "{kind} disturbance values differ in length"
            )));
        }
        Ok(())
    }

    pub fn n_w(&self) -> usize {
        match self {
            Self::Zero { n_w } => *n_w,
            Self::PiecewiseConstant { values, .. } | Self::Samples { values, .. } => values[0].len(),
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        match self {
            Self::Zero { n_w } => DVector::zeros(*n_w),
            Self::PiecewiseConstant { breakpoints, values } => match breakpoints.iter().rposition(|&b| b <= t) {
                Some(k) => values[k].clone(),
                None => DVector::zeros(values[0].len()),
            },
            Self::Samples { times, values } => {
                let last = times.len() - 1;
                if t < times[0] || t > times[last] {
                    return DVector::zeros(values[0].len());
                }
                let k = times
                    .iter()
                    .rposition(|&s| s <= t)
                    .unwrap_or(0)
                    .min(last.saturating_sub(1));
                if last == 0 {
                    return values[0].clone();
                }
                let s = (t - times[k]) / (times[k + 1] - times[k]);
                &values[k] * (1.0 - s) + &values[k + 1] * s
            }
        }
    }

    /// Values used at the start, middle and end stages of a step `[t, t + dt]`.
    /// Piecewise-constant signals are sampled at the midpoint for every stage so
    /// that a jump on the grid never leaks into the neighbouring step.
    pub fn step_values(&self, t: f64, dt: f64) -> [DVector<f64>; 3] {
        match self {
            Self::PiecewiseConstant { .. } | Self::Zero { .. } => {
                let w = self.eval(t + 0.5 * dt);
                [w.clone(), w.clone(), w]
            }
            Self::Samples { .. } => [self.eval(t), self.eval(t + 0.5 * dt), self.eval(t + dt)],
        }
    }

    /// Breakpoints moved to the nearest multiple of `dt`.
    pub fn snapped(&self, dt: f64) -> Self {
        match self {
            Self::PiecewiseConstant { breakpoints, values } => {
                let snapped: Vec<f64> = breakpoints.iter().map(|b| (b / dt).round() * dt).collect();
                if snapped
                    .iter()
                    .zip(breakpoints)
                    .any(|(s, b)| (s - b).abs() > 1e-9 * dt.max(b.abs()))
                {
                    warn!("disturbance breakpoints snapped to the integration grid");
                }
                Self::PiecewiseConstant {
                    breakpoints: snapped,
                    values: values.clone(),
                }
            }
            other => other.clone(),
        }
    }

    /// `∫ wᵀ R w dt` over the whole support (infinite if a nonzero value persists).
    ///
    /// Exact for both signal kinds; it coincides with the simulator's quadrature
    /// whenever breakpoints lie on the integration grid.
    pub fn energy(&self, r: &DMatrix<f64>) -> f64 {
        let q = |w: &DVector<f64>| (w.transpose() * r * w)[(0, 0)];
        match self {
            Self::Zero { .. } => 0.0,
            Self::PiecewiseConstant { breakpoints, values } => {
                let last = values.len() - 1;
                if q(&values[last]) > 0.0 {
                    return f64::INFINITY;
                }
                (0..last)
                    .map(|k| (breakpoints[k + 1] - breakpoints[k]) * q(&values[k]))
                    .sum()
            }
            Self::Samples { times, values } => (0..times.len().saturating_sub(1))
                .map(|k| {
                    let h = times[k + 1] - times[k];
                    let mid = (&values[k] + &values[k + 1]) * 0.5;
                    h * (q(&values[k]) + 4.0 * q(&mid) + q(&values[k + 1])) / 6.0
                })
                .sum(),
        }
    }

    /// Admissible for the class `∫ wᵀ R w < σ⁻¹`.
    pub fn is_admissible(&self, r: &DMatrix<f64>, sigma: f64) -> bool {
        self.energy(r) < 1.0 / sigma
    }
}

/// `∫ wᵀ R w dt` of a disturbance signal.
pub fn disturbance_energy(dist: &DisturbanceSignal, r: &DMatrix<f64>) -> f64 {
    dist.energy(r)
}

/// Symmetric actuator bounds plus the offset mapping them back to the physical range.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturationSpec {
    pub u_bar: DVector<f64>,
    pub xi: DVector<f64>,
}

impl SaturationSpec {
    pub fn new(u_bar: DVector<f64>, xi: DVector<f64>) -> Result<Self> {
        if u_bar.len() != xi.len() {
            return Err(Error::dim("xi", u_bar.len(), xi.len()));
        }
        if u_bar.iter().any(|&u| !(u > 0.0)) {
            return Err(Error::InvalidParameter("u_bar entries must be positive".into()));
        }
        Ok(Self { u_bar, xi })
    }

    pub fn symmetric(u_bar: DVector<f64>) -> Result<Self> {
        let xi = DVector::zeros(u_bar.len());
        Self::new(u_bar, xi)
    }

    /// Physical command `sat(y_f) + ξ`.
    pub fn physical(&self, y_f: &DVector<f64>) -> DVector<f64> {
        sat(y_f, &self.u_bar) + &self.xi
    }
}

/// Sampled closed-loop signals on a common time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y_f: Vec<DVector<f64>>,
    pub sat: Vec<DVector<f64>>,
    pub u_p: Vec<DVector<f64>>,
    pub y_c: Vec<DVector<f64>>,
    pub e: Vec<DVector<f64>>,
    /// Disturbance at sample 0, and over the step ending at sample `k` for `k > 0`.
    pub w: Vec<DVector<f64>>,
    /// `xᵀ P x` when a certificate was available.
    pub v: Option<Vec<f64>>,
    /// Integration step.
    pub dt: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn check_aligned(&self) -> Result<()> {
        let n = self.t.len();
        let lens = [
            ("x", self.x.len()),
            ("y_f", self.y_f.len()),
            ("sat", self.sat.len()),
            ("u_p", self.u_p.len()),
            ("y_c", self.y_c.len()),
            ("e", self.e.len()),
            ("w", self.w.len()),
            ("V", self.v.as_ref().map_or(n, Vec::len)),
        ];
        for (name, len) in lens {
            if len != n {
                return Err(Error::GridMismatch(format!(
                    "{name} has {len} samples, time grid has {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn terminal_state(&self) -> &DVector<f64> {
        self.x.last().expect("trajectory has at least one sample")
    }

    /// Trapezoidal integral of a scalar signal over the grid.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        (1..self.t.len())
            .map(|k| 0.5 * (self.t[k] - self.t[k - 1]) * (f(k) + f(k - 1)))
            .sum()
    }

    /// `∫ |sat(y_f)_i| dt`.
    pub fn actuator_usage(&self, i: usize) -> f64 {
        self.integrate(|k| self.sat[k][i].abs())
    }

    pub fn peak_saturated(&self) -> DVector<f64> {
        let m = self.sat.first().map_or(0, |s| s.len());
        DVector::from_fn(m, |i, _| self.sat.iter().map(|s| s[i].abs()).fold(0.0, f64::max))
    }

    /// `∫ ‖e‖ dt`.
    pub fn allocation_error_integral(&self) -> f64 {
        self.integrate(|k| self.e[k].norm())
    }

    /// Whether any actuator command exceeds its bound at sample `k`.
    pub fn saturated_at(&self, k: usize) -> bool {
        self.y_f[k].iter().zip(self.sat[k].iter()).any(|(y, s)| y != s)
    }

    /// CSV with header `t,x1..,yf1..,sat1..,up1..,yc1..,e1..,w1..,V`.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let dims = |v: &[DVector<f64>]| v.first().map_or(0, |x| x.len());
        let mut header = vec!["t".to_string()];
        for (prefix, sig) in [
            ("x", &self.x),
            ("yf", &self.y_f),
            ("sat", &self.sat),
            ("up", &self.u_p),
            ("yc", &self.y_c),
            ("e", &self.e),
            ("w", &self.w),
        ] {
            header.extend((1..=dims(sig)).map(|i| format!("{prefix}{i}")));
        }
        header.push("V".into());
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.t.len() {
            let mut row = vec![fmt_f64(self.t[k])];
            for sig in [&self.x, &self.y_f, &self.sat, &self.u_p, &self.y_c, &self.e, &self.w] {
                row.extend(sig[k].iter().map(|&v| fmt_f64(v)));
            }
            row.push(self.v.as_ref().map_or(String::new(), |v| fmt_f64(v[k])));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

impl Trajectory {
    /// Parse the format written by [`Trajectory::write_csv`].
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::GridMismatch("empty trajectory file".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        if header.first() != Some(&"t") || header.last() != Some(&"V") {
            return Err(Error::Config(
                "trajectory header must start with `t` and end with `V`".into(),
            ));
        }
        let prefixes = ["x", "yf", "sat", "up", "yc", "e", "w"];
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); prefixes.len()];
        for (col, name) in header.iter().enumerate().skip(1).take(header.len() - 2) {
            let split = name.find(|c: char| c.is_ascii_digit()).unwrap_or(name.len());
            let (prefix, index) = name.split_at(split);
            let g = prefixes
                .iter()
                .position(|p| *p == prefix)
                .ok_or_else(|| Error::Config(format!("unknown trajectory column `{name}`")))?;
            if index.parse::<usize>().ok() != Some(groups[g].len() + 1) {
                return Err(Error::Config(format!("trajectory column `{name}` out of order")));
            }
            groups[g].push(col);
        }
        let mut traj = empty_trajectory(0.0);
        let mut v = Vec::new();
        for (row, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != header.len() {
                return Err(Error::GridMismatch(format!(
                    "trajectory row {} has {} cells, header has {}",
                    row + 2,
                    cells.len(),
                    header.len()
                )));
            }
            let num = |c: usize| -> Result<f64> {
                cells[c]
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("trajectory row {}, column `{}`: {e}", row + 2, header[c])))
            };
            let vec_of = |cols: &[usize]| -> Result<DVector<f64>> {
                let vals = cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
                Ok(DVector::from_vec(vals))
            };
            traj.t.push(num(0)?);
            traj.x.push(vec_of(&groups[0])?);
            traj.y_f.push(vec_of(&groups[1])?);
            traj.sat.push(vec_of(&groups[2])?);
            traj.u_p.push(vec_of(&groups[3])?);
            traj.y_c.push(vec_of(&groups[4])?);
            traj.e.push(vec_of(&groups[5])?);
            traj.w.push(vec_of(&groups[6])?);
            let last = header.len() - 1;
            if !cells[last].is_empty() {
                v.push(num(last)?);
            }
        }
        if !v.is_empty() {
            traj.v = Some(v);
        }
        if traj.t.len() > 1 {
            traj.dt = traj.t[1] - traj.t[0];
        }
        traj.check_aligned()?;
        Ok(traj)
    }
}

/// Summary written next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `∫ sat(y_f)ᵀ W sat(y_f) dt`.
    pub energy: f64,
    /// `∫ |sat(y_f)_i| dt` per actuator.
    pub actuator_usage: Vec<f64>,
    pub peak_saturated: Vec<f64>,
    pub terminal_state_norm: f64,
    pub initial_state_norm: f64,
    pub allocation_error_integral: f64,
    pub disturbance_energy: f64,
    pub t_final: f64,
}

impl Metrics {
    pub fn compute(traj: &Trajectory, w: &DMatrix<f64>, r: Option<&DMatrix<f64>>) -> Self {
        let m = traj.sat.first().map_or(0, |s| s.len());
        let dist = match r {
            // sample k > 0 carries the value held over step (k-1, k)
            Some(r) if r.nrows() > 0 => (1..traj.len())
                .map(|k| (traj.t[k] - traj.t[k - 1]) * (traj.w[k].transpose() * r * &traj.w[k])[(0, 0)])
                .sum(),
            _ => 0.0,
        };
        Self {
            energy: energy_metric(traj, w),
            actuator_usage: (0..m).map(|i| traj.actuator_usage(i)).collect(),
            peak_saturated: traj.peak_saturated().iter().copied().collect(),
            terminal_state_norm: traj.terminal_state().norm(),
            initial_state_norm: traj.x[0].norm(),
            allocation_error_integral: traj.allocation_error_integral(),
            disturbance_energy: dist,
            t_final: *traj.t.last().unwrap_or(&0.0),
        }
    }
}

/// `∫ sat(y_f)ᵀ W sat(y_f) dt` by the trapezoidal rule.
pub fn energy_metric(traj: &Trajectory, w: &DMatrix<f64>) -> f64 {
    traj.integrate(|k| (traj.sat[k].transpose() * w * &traj.sat[k])[(0, 0)])
}

fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "t_final must be nonnegative, got {t_final}"
        )));
    }
    Ok((t_final / dt).round() as usize)
}

/// Classical RK4 over the grid `k·dt`, recording `record(t, x, w)` at every sample.
fn integrate(
    x0: DVector<f64>,
    dist: &DisturbanceSignal,
    t_final: f64,
    dt: f64,
    f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    mut record: impl FnMut(f64, &DVector<f64>, &DVector<f64>),
) -> Result<()> {
    let steps = step_count(t_final, dt)?;
    let dist = dist.snapped(dt);
    let mut x = x0;
    let w0 = dist.step_values(0.0, dt)[0].clone();
    record(0.0, &x, &w0);
    for k in 0..steps {
        let t = k as f64 * dt;
        let [w_a, w_m, w_b] = dist.step_values(t, dt);
        let k1 = f(&x, &w_a);
        let k2 = f(&(&x + &k1 * (0.5 * dt)), &w_m);
        let k3 = f(&(&x + &k2 * (0.5 * dt)), &w_m);
        let k4 = f(&(&x + &k3 * dt), &w_b);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let t_next = (k + 1) as f64 * dt;
        if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
            return Err(Error::Divergence(t_next));
        }
        // sample w on the step just finished so recorded values match the dynamics
        record(t_next, &x, &w_m);
    }
    Ok(())
}

fn empty_trajectory(dt: f64) -> Trajectory {
    Trajectory {
        t: vec![],
        x: vec![],
        y_f: vec![],
        sat: vec![],
        u_p: vec![],
        y_c: vec![],
        e: vec![],
        w: vec![],
        v: None,
        dt,
    }
}

/// Simulate the augmented loop with the dynamic allocator.
///
/// `alpha` selects a point of the uncertainty polytope (simplex weights); `None`
/// uses the nominal influence matrix.
pub fn simulate(
    cl: &ClosedLoop,
    gains: &SynthesisResult,
    alpha: Option<&[f64]>,
    x0: &DVector<f64>,
    dist: &DisturbanceSignal,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let n = cl.n();
    if x0.len() != n {
        return Err(Error::dim("x0", n, x0.len()));
    }
    if dist.n_w() != cl.n_w() {
        return Err(Error::dim("disturbance channels", cl.n_w(), dist.n_w()));
    }
    gains.check_dimensions(n, cl.n_c, cl.n_f, cl.m_a)?;
    if let Some(alpha) = alpha {
        validate_simplex(alpha, cl.influence.n_alpha())?;
    }
    let (a, b) = cl.matrices_at(alpha)?;
    let m = cl.influence_at(alpha)?;
    let a_cl = a + &cl.l_f * &gains.k_f * &cl.c_bar;
    let b_cl = b + &cl.l * gains.e();
    let u_bar = cl.u_bar().clone();
    let p = gains.certificate.as_ref().map(|cert| lyapunov_matrix(&cert.p, alpha));

    let f = |x: &DVector<f64>, w: &DVector<f64>| {
        let y_f = &cl.c * x;
        &a_cl * x + &b_cl * dz(&y_f, &u_bar) + &cl.b_w_bar * w
    };
    let mut traj = empty_trajectory(dt);
    let mut v = Vec::new();
    let (n_p, n_c) = (cl.n_p, cl.n_c);
    let c_p = &cl.plant.c_p;
    let ctrl = &cl.controller;
    integrate(x0.clone(), dist, t_final, dt, f, |t, x, w| {
        let y_f = &cl.c * x;
        let s = sat(&y_f, &u_bar);
        let u_p = &m * &s;
        let y_c = &ctrl.c_c * x.rows(n_p, n_c) + &ctrl.d_c * (c_p * x.rows(0, n_p));
        traj.t.push(t);
        traj.e.push(&u_p - &y_c);
        traj.x.push(x.clone());
        traj.y_f.push(y_f);
        traj.sat.push(s);
        traj.u_p.push(u_p);
        traj.y_c.push(y_c);
        traj.w.push(w.clone());
        if let Some(p) = &p {
            v.push((x.transpose() * p * x)[(0, 0)]);
        }
    })?;
    if p.is_some() {
        traj.v = Some(v);
    }
    Ok(traj)
}

/// `P(α) = Σ α_i P_i`, or the single `P`.
pub fn lyapunov_matrix(p: &[DMatrix<f64>], alpha: Option<&[f64]>) -> DMatrix<f64> {
    match alpha {
        Some(alpha) if p.len() == alpha.len() && p.len() > 1 => {
            let mut out = DMatrix::zeros(p[0].nrows(), p[0].ncols());
            for (a, pi) in alpha.iter().zip(p) {
                out += pi * *a;
            }
            out
        }
        _ => p[0].clone(),
    }
}

/// Same loop with the memoryless allocator `y_f = M† y_c` and controller
/// anti-windup `E_c`; the state is `[x_p; x_c]`. A full-length `x0` is truncated.
pub fn static_baseline(
    cl: &ClosedLoop,
    e_c: &DMatrix<f64>,
    x0: &DVector<f64>,
    dist: &DisturbanceSignal,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    static_baseline_at(cl, e_c, None, x0, dist, t_final, dt)
}

/// [`static_baseline`] at a point `alpha` of the uncertainty polytope.
pub fn static_baseline_at(
    cl: &ClosedLoop,
    e_c: &DMatrix<f64>,
    alpha: Option<&[f64]>,
    x0: &DVector<f64>,
    dist: &DisturbanceSignal,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory> {
    let (n_p, n_c) = (cl.n_p, cl.n_c);
    let n0 = n_p + n_c;
    if x0.len() != n0 && x0.len() != cl.n() {
        return Err(Error::dim("x0", format!("{n0} or {}", cl.n()), x0.len()));
    }
    if e_c.shape() != (n_c, cl.m_a) {
        return Err(Error::dim(
            "E_c",
            format!("{n_c}x{}", cl.m_a),
            format!("{}x{}", e_c.nrows(), e_c.ncols()),
        ));
    }
    if dist.n_w() != cl.n_w() {
        return Err(Error::dim("disturbance channels", cl.n_w(), dist.n_w()));
    }
    if let Some(alpha) = alpha {
        validate_simplex(alpha, cl.influence.n_alpha())?;
    }
    let m = cl.influence_at(alpha)?;
    let u_bar = cl.u_bar().clone();
    let plant = &cl.plant;
    let ctrl = &cl.controller;
    let outputs = |x: &DVector<f64>| {
        let y_p = &plant.c_p * x.rows(0, n_p);
        let y_c = &ctrl.c_c * x.rows(n_p, n_c) + &ctrl.d_c * &y_p;
        let y_f = &cl.m_dagger * &y_c;
        (y_p, y_c, y_f)
    };
    let f = |x: &DVector<f64>, w: &DVector<f64>| {
        let (y_p, _, y_f) = outputs(x);
        let s = sat(&y_f, &u_bar);
        let phi = &s - &y_f;
        let dx_p = &plant.a_p * x.rows(0, n_p) + &plant.b_p * (&m * &s) + &plant.b_w * w;
        let dx_c = &ctrl.a_c * x.rows(n_p, n_c) + &ctrl.b_c * y_p + e_c * phi;
        let mut dx = DVector::zeros(n0);
        dx.rows_mut(0, n_p).copy_from(&dx_p);
        dx.rows_mut(n_p, n_c).copy_from(&dx_c);
        dx
    };
    let mut traj = empty_trajectory(dt);
    integrate(x0.rows(0, n0).into_owned(), dist, t_final, dt, f, |t, x, w| {
        let (_, y_c, y_f) = outputs(x);
        let s = sat(&y_f, &u_bar);
        let u_p = &m * &s;
        traj.t.push(t);
        traj.e.push(&u_p - &y_c);
        traj.x.push(x.clone());
        traj.y_f.push(y_f);
        traj.sat.push(s);
        traj.u_p.push(u_p);
        traj.y_c.push(y_c);
        traj.w.push(w.clone());
    })?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_disturbance_energy() {
        let d = DisturbanceSignal::piecewise_constant(
            vec![0.0, 36.0],
            vec![DVector::from_element(1, 0.1667), DVector::zeros(1)],
        )
        .unwrap();
        let r = DMatrix::from_element(1, 1, 1.0);
        let e = disturbance_energy(&d, &r);
        assert!((e - 0.1667f64.powi(2) * 36.0).abs() < 1e-12);
        assert!(e > 1.0 && e < 1.001);
        assert!(!d.is_admissible(&r, 1.0));
    }

    #[test]
    fn unit_pulse_energy() {
        let d = DisturbanceSignal::piecewise_constant(
            vec![2.0, 3.0],
            vec![DVector::from_element(1, 1.0), DVector::zeros(1)],
        )
        .unwrap();
        assert_eq!(d.energy(&DMatrix::from_element(1, 1, 1.0)), 1.0);
        assert_eq!(
            DisturbanceSignal::Zero { n_w: 1 }.energy(&DMatrix::from_element(1, 1, 1.0)),
            0.0
        );
    }

    #[test]
    fn sample_energy_is_exact_for_linear_segments() {
        // w(t) = t on [0, 1]: ∫ t² = 1/3
        let d =
            DisturbanceSignal::samples(vec![0.0, 1.0], vec![DVector::zeros(1), DVector::from_element(1, 1.0)]).unwrap();
        assert!((d.energy(&DMatrix::from_element(1, 1, 1.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.eval(0.25)[0] - 0.25).abs() < 1e-15);
        assert_eq!(d.eval(1.5)[0], 0.0);
    }

    #[test]
    fn piecewise_eval_is_right_continuous() {
        let d = DisturbanceSignal::piecewise_constant(
            vec![0.0, 1.0],
            vec![DVector::from_element(1, 2.0), DVector::from_element(1, 3.0)],
        )
        .unwrap();
        assert_eq!(d.eval(-0.5)[0], 0.0);
        assert_eq!(d.eval(0.999)[0], 2.0);
        assert_eq!(d.eval(1.0)[0], 3.0);
        let [a, m, b] = d.step_values(0.99, 0.01);
        assert_eq!((a[0], m[0], b[0]), (2.0, 2.0, 2.0));
    }

    #[test]
    fn physical_commands_are_offset() {
        let spec = SaturationSpec::new(DVector::from_element(2, 50.0), DVector::from_element(2, 50.0)).unwrap();
        let y = DVector::from_vec(vec![-80.0, 10.0]);
        assert_eq!(spec.physical(&y), DVector::from_vec(vec![0.0, 60.0]));
    }

    #[test]
    fn rejects_bad_step() {
        assert!(step_count(1.0, 0.0).is_err());
        assert!(step_count(-1.0, 0.1).is_err());
        assert_eq!(step_count(0.0, 0.1).unwrap(), 0);
    }

    #[test]
    fn csv_round_trip() {
        let cl = crate::benchmark::satellite_closed_loop(crate::benchmark::Example::Disturbed).unwrap();
        let gains = SynthesisResult::from_gains(
            crate::result::Mode::Nominal,
            DMatrix::from_diagonal_element(cl.n_f, cl.n_f, -1.0),
            DMatrix::zeros(cl.n_c, cl.m_a),
            DMatrix::zeros(cl.n_f, cl.m_a),
        );
        let mut x0 = DVector::zeros(cl.n());
        x0[0] = -0.18;
        let dist = DisturbanceSignal::piecewise_constant(vec![0.0], vec![DVector::from_element(1, 0.1)]).unwrap();
        let traj = simulate(&cl, &gains, None, &x0, &dist, 0.05, 0.01).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.len(), traj.len());
        assert_eq!(back.x, traj.x);
        assert_eq!(back.w, traj.w);
        assert!(back.v.is_none());
        assert!((back.dt - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_horizon_gives_single_row() {
        let cl = crate::benchmark::satellite_closed_loop(crate::benchmark::Example::Disturbed).unwrap();
        let gains = SynthesisResult::from_gains(
            crate::result::Mode::Nominal,
            DMatrix::zeros(cl.n_f, cl.n_f),
            DMatrix::zeros(cl.n_c, cl.m_a),
            DMatrix::zeros(cl.n_f, cl.m_a),
        );
        let traj = simulate(
            &cl,
            &gains,
            None,
            &DVector::zeros(cl.n()),
            &DisturbanceSignal::Zero { n_w: 1 },
            0.0,
            0.01,
        )
        .unwrap();
        assert_eq!(traj.len(), 1);
    }
}
