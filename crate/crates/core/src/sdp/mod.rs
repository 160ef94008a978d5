//! Block-LMI problems in affine form and their solution.
//!
//! Matrix variables are vectorized into scalars (symmetric variables by their upper
//! triangle, diagonal ones by their diagonal); callers only ever handle [`VarId`]s and
//! [`AffineExpr`]s. Every constraint is stored in the canonical form
//! `F(x) ⪰ margin · I`.

mod clarabel_backend;
mod expr;

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use expr::{AffineExpr, MatrixExpr};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative margin for strict inequalities: `ε = 1e-7 · (1 + ‖F₀‖)`.
pub const DEFAULT_STRICT_MARGIN: f64 = 1e-7;

/// Smallest accepted constraint residual (after margin) for a reported solution.
pub const RESIDUAL_TOL: f64 = 1e-7;

/// Re-solves allowed after a small residual violation.
const MAX_BUFFER_RETRIES: usize = 3;
/// Margin increase per re-solve, relative to the observed violation.
const BUFFER_FACTOR: f64 = 10.0;
/// Violations beyond this are not treated as round-off.
const MAX_BUFFERED_VIOLATION: f64 = 1e-2;

struct BufferedSolution {
    solution: SdpSolution,
    needs_buffer: bool,
}

/// Environment variable selecting the solver backend.
pub const BACKEND_ENV: &str = "DYNALLOC_SDP_BACKEND";

#[derive(Debug, Clone, PartialEq)]
pub enum Structure {
    Full,
    Symmetric,
    Diagonal,
    /// Free entries are `true`; the rest are fixed at zero.
    Pattern(DMatrix<bool>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
pub struct MatrixVar {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub structure: Structure,
    offset: usize,
    /// Entry `(r, c)` driven by each scalar; symmetric variables also drive `(c, r)`.
    entries: Vec<(usize, usize)>,
}

impl MatrixVar {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.entries.len()
    }
}

#[derive(Debug, Clone)]
pub struct Constraint {
    /// Constraint family (used for infeasibility attribution).
    pub family: String,
    pub name: String,
    /// Symmetric affine block `F(x)`.
    pub expr: AffineExpr,
    /// Required lower bound on the smallest eigenvalue of `F(x)`.
    pub margin: f64,
}

impl Constraint {
    pub fn size(&self) -> usize {
        self.expr.shape().0
    }

    /// `λ_min(F(x)) - margin`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        linalg::min_eigenvalue(&self.expr.eval(x)) - self.margin
    }
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    vars: Vec<MatrixVar>,
    n_scalars: usize,
    constraints: Vec<Constraint>,
    objective: Option<AffineExpr>,
    strict_margin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Feasible,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl Status {
    pub fn is_solved(self) -> bool {
        matches!(self, Status::Optimal | Status::Feasible)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::Feasible => "feasible",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// Clarabel conic interior-point solver.
    Clarabel,
}

impl Backend {
    /// Backend named by `DYNALLOC_SDP_BACKEND`, defaulting to Clarabel.
    pub fn from_env() -> Result<Self> {
        match std::env::var(BACKEND_ENV) {
            Err(_) => Ok(Backend::Clarabel),
            Ok(v) => v.parse(),
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "" | "clarabel" => Ok(Backend::Clarabel),
            other => Err(Error::InvalidParameter(format!(
                "unknown SDP backend '{other}' (available: clarabel)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub backend: Backend,
    pub max_iter: u32,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            backend: Backend::Clarabel,
            max_iter: 200,
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            tol_feas: 1e-9,
            verbose: false,
        }
    }
}

impl SolveOptions {
    pub fn from_env() -> Result<Self> {
        Ok(Self {
            backend: Backend::from_env()?,
            ..Self::default()
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSolution {
    pub status: Status,
    /// Scalar variable values.
    pub x: Vec<f64>,
    pub objective: f64,
    /// Smallest `λ_min(F(x)) - margin` over all constraints.
    pub worst_residual: f64,
    /// Name of the constraint attaining the worst residual.
    pub worst_constraint: String,
    pub iterations: u32,
    pub solve_time: f64,
    pub backend: Backend,
    /// Raw backend status and residual diagnostics.
    pub diagnostics: String,
}

/// Backend result before residual post-processing.
pub(crate) struct RawSolution {
    pub status: RawStatus,
    pub x: Vec<f64>,
    pub iterations: u32,
    pub solve_time: f64,
    pub diagnostics: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RawStatus {
    Solved,
    AlmostSolved,
    Infeasible,
    Unbounded,
    Failed,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Override the relative strictness margin (default [`DEFAULT_STRICT_MARGIN`]).
    pub fn set_strict_margin(&mut self, eps: f64) {
        self.strict_margin = Some(eps);
    }

    pub fn strict_margin(&self) -> f64 {
        self.strict_margin.unwrap_or(DEFAULT_STRICT_MARGIN)
    }

    pub fn n_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn vars(&self) -> &[MatrixVar] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn var(&self, id: VarId) -> &MatrixVar {
        &self.vars[id.0]
    }

    pub fn add_var(&mut self, name: &str, rows: usize, cols: usize, structure: Structure) -> VarId {
        let entries: Vec<(usize, usize)> = match &structure {
            Structure::Full => (0..cols).flat_map(|c| (0..rows).map(move |r| (r, c))).collect(),
            Structure::Symmetric => {
                assert_eq!(rows, cols, "symmetric variable {name} must be square");
                (0..cols).flat_map(|c| (0..=c).map(move |r| (r, c))).collect()
            }
            Structure::Diagonal => {
                assert_eq!(rows, cols, "diagonal variable {name} must be square");
                (0..rows).map(|i| (i, i)).collect()
            }
            Structure::Pattern(mask) => {
                assert_eq!(mask.shape(), (rows, cols), "pattern for {name} has wrong shape");
                (0..cols)
                    .flat_map(|c| (0..rows).map(move |r| (r, c)))
                    .filter(|&(r, c)| mask[(r, c)])
                    .collect()
            }
        };
        let var = MatrixVar {
            name: name.to_string(),
            rows,
            cols,
            structure,
            offset: self.n_scalars,
            entries,
        };
        self.n_scalars += var.len();
        self.vars.push(var);
        VarId(self.vars.len() - 1)
    }

    pub fn add_scalar(&mut self, name: &str) -> VarId {
        self.add_var(name, 1, 1, Structure::Full)
    }

    /// The matrix variable as an affine expression.
    pub fn expr(&self, id: VarId) -> AffineExpr {
        let v = &self.vars[id.0];
        let symmetric = v.structure == Structure::Symmetric;
        let terms = v
            .entries
            .iter()
            .enumerate()
            .map(|(k, &(r, c))| {
                let mut m = DMatrix::zeros(v.rows, v.cols);
                m[(r, c)] = 1.0;
                if symmetric {
                    m[(c, r)] = 1.0;
                }
                (v.offset + k, m)
            })
            .collect();
        AffineExpr::from_parts(DMatrix::zeros(v.rows, v.cols), terms)
    }

    fn push(&mut self, family: &str, name: &str, expr: AffineExpr, margin: f64) {
        let (r, c) = expr.shape();
        assert_eq!(r, c, "constraint {name} is not square");
        let scale = expr.constant_part().amax().max(1.0);
        let asym = |m: &DMatrix<f64>| (m - m.transpose()).amax();
        debug_assert!(
            asym(expr.constant_part()) <= 1e-9 * scale
                && expr.terms().values().all(|t| asym(t) <= 1e-9 * t.amax().max(1.0)),
            "constraint {name} is not symmetric"
        );
        let expr = expr.plus(&expr.tr()).scale(0.5);
        self.constraints.push(Constraint {
            family: family.to_string(),
            name: name.to_string(),
            expr,
            margin,
        });
    }

    fn strict_eps(&self, expr: &AffineExpr) -> f64 {
        self.strict_margin() * (1.0 + expr.constant_part().norm())
    }

    /// `F(x) ⪰ margin · I`.
    pub fn psd(&mut self, family: &str, name: &str, expr: AffineExpr, margin: f64) {
        self.push(family, name, expr, margin);
    }

    /// `F(x) ≻ 0`, encoded as `F(x) ⪰ εI`.
    pub fn pd_strict(&mut self, family: &str, name: &str, expr: AffineExpr) {
        let eps = self.strict_eps(&expr);
        self.push(family, name, expr, eps);
    }

    /// `F(x) ≺ 0`, encoded as `-F(x) ⪰ εI`.
    pub fn nd_strict(&mut self, family: &str, name: &str, expr: AffineExpr) {
        let eps = self.strict_eps(&expr);
        self.push(family, name, expr.neg(), eps);
    }

    /// `F(x) ⪯ 0`.
    pub fn nsd(&mut self, family: &str, name: &str, expr: AffineExpr, margin: f64) {
        self.push(family, name, expr.neg(), margin);
    }

    /// Minimize a 1×1 affine expression.
    pub fn minimize(&mut self, objective: AffineExpr) {
        assert_eq!(objective.shape(), (1, 1), "objective must be scalar");
        self.objective = Some(objective);
    }

    pub fn objective(&self) -> Option<&AffineExpr> {
        self.objective.as_ref()
    }

    /// Objective coefficients over the scalar variables.
    pub(crate) fn cost_vector(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_scalars];
        if let Some(obj) = &self.objective {
            for (&k, m) in obj.terms() {
                c[k] = m[(0, 0)];
            }
        }
        c
    }

    /// A copy keeping only constraints whose family passes `keep`, with no objective.
    pub fn feasibility_subproblem(&self, keep: impl Fn(&str) -> bool) -> SdpProblem {
        SdpProblem {
            vars: self.vars.clone(),
            n_scalars: self.n_scalars,
            constraints: self.constraints.iter().filter(|c| keep(&c.family)).cloned().collect(),
            objective: None,
            strict_margin: self.strict_margin,
        }
    }

    /// Value of a matrix variable in a solution.
    pub fn value(&self, x: &[f64], id: VarId) -> DMatrix<f64> {
        self.expr(id).eval(x)
    }

    pub fn scalar_value(&self, x: &[f64], id: VarId) -> f64 {
        self.value(x, id)[(0, 0)]
    }

    /// Scalars that appear in neither a constraint nor the objective.
    pub fn unreferenced_vars(&self) -> Vec<String> {
        let mut used = vec![false; self.n_scalars];
        for c in &self.constraints {
            for &k in c.expr.terms().keys() {
                used[k] = true;
            }
        }
        if let Some(obj) = &self.objective {
            for &k in obj.terms().keys() {
                used[k] = true;
            }
        }
        self.vars
            .iter()
            .filter(|v| v.scalar_range().any(|k| !used[k]))
            .map(|v| v.name.clone())
            .collect()
    }

    /// `(worst residual, constraint name)` at `x`.
    pub fn worst_residual(&self, x: &[f64]) -> (f64, String) {
        self.constraints.iter().map(|c| (c.residual(x), c.name.clone())).fold(
            (f64::INFINITY, String::new()),
            |acc, r| if r.0 < acc.0 { r } else { acc },
        )
    }

    /// Solve with the given options.
    pub fn solve(&self, options: &SolveOptions) -> Result<SdpSolution> {
        let unused = self.unreferenced_vars();
        if !unused.is_empty() && self.objective.is_some() {
            return Err(Error::InvalidParameter(format!(
                "variables not referenced by any constraint or the objective: {unused:?}"
            )));
        }
        if self.constraints.is_empty() {
            return Err(Error::InvalidParameter("SDP has no constraints".into()));
        }
        // Constraints found slightly outside their declared margins are re-solved
        // with the margin tightened by a multiple of the observed violation.
        let mut buffers = vec![0.0; self.constraints.len()];
        let mut sol = self.solve_buffered(options, &buffers)?;
        for _ in 0..MAX_BUFFER_RETRIES {
            if !sol.needs_buffer {
                break;
            }
            for (b, c) in buffers.iter_mut().zip(&self.constraints) {
                let r = c.residual(&sol.solution.x);
                if r < 0.0 {
                    *b += BUFFER_FACTOR * (-r);
                }
            }
            sol = self.solve_buffered(options, &buffers)?;
        }
        let mut out = sol.solution;
        let tightened = buffers.iter().filter(|&&b| b > 0.0).count();
        if tightened > 0 {
            let largest = buffers.iter().cloned().fold(0.0, f64::max);
            out.diagnostics
                .push_str(&format!("; {tightened} margins tightened (largest by {largest:.3e})"));
        }
        Ok(out)
    }

    fn solve_buffered(&self, options: &SolveOptions, buffers: &[f64]) -> Result<BufferedSolution> {
        let raw = match options.backend {
            Backend::Clarabel => clarabel_backend::solve(self, options, buffers)?,
        };
        let converged = matches!(raw.status, RawStatus::Solved | RawStatus::AlmostSolved);
        let solution = self.finish(raw, options.backend);
        let needs_buffer = converged
            && solution.status == Status::NumericalFailure
            && solution.worst_residual.is_finite()
            && solution.worst_residual > -MAX_BUFFERED_VIOLATION;
        Ok(BufferedSolution { solution, needs_buffer })
    }

    fn finish(&self, raw: RawSolution, backend: Backend) -> SdpSolution {
        let (worst, worst_name) = if raw.x.len() == self.n_scalars && raw.x.iter().all(|v| v.is_finite()) {
            self.worst_residual(&raw.x)
        } else {
            (f64::NEG_INFINITY, String::new())
        };
        let objective = self.objective.as_ref().map(|o| o.eval_scalar(&raw.x)).unwrap_or(0.0);
        let solved_status = if self.objective.is_some() && raw.status == RawStatus::Solved {
            Status::Optimal
        } else {
            Status::Feasible
        };
        let mut diagnostics = raw.diagnostics;
        let status = match raw.status {
            RawStatus::Solved | RawStatus::AlmostSolved => {
                if worst >= -RESIDUAL_TOL {
                    solved_status
                } else {
                    diagnostics.push_str(&format!("; residual check failed: {worst:.3e} at {worst_name}"));
                    Status::NumericalFailure
                }
            }
            RawStatus::Infeasible => Status::Infeasible,
            RawStatus::Unbounded => Status::Unbounded,
            RawStatus::Failed => Status::NumericalFailure,
        };
        SdpSolution {
            status,
            x: raw.x,
            objective,
            worst_residual: worst,
            worst_constraint: worst_name,
            iterations: raw.iterations,
            solve_time: raw.solve_time,
            backend,
            diagnostics,
        }
    }

    /// Human-readable dump of dimensions, constraint blocks and objective.
    pub fn dump(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            out,
            "# sdp problem: {} scalars, {} constraints",
            self.n_scalars,
            self.constraints.len()
        )?;
        for v in &self.vars {
            writeln!(
                out,
                "var {} {}x{} {:?} scalars {}..{}",
                v.name,
                v.rows,
                v.cols,
                structure_tag(&v.structure),
                v.scalar_range().start,
                v.scalar_range().end
            )?;
        }
        for c in &self.constraints {
            writeln!(
                out,
                "lmi {} family={} size={} margin={:e} terms={}",
                c.name,
                c.family,
                c.size(),
                c.margin,
                c.expr.terms().len()
            )?;
            write_matrix(out, "  F0", c.expr.constant_part())?;
        }
        if let Some(obj) = &self.objective {
            let coeffs: Vec<String> = obj
                .terms()
                .iter()
                .map(|(k, m)| format!("{}*x{}", m[(0, 0)], k))
                .collect();
            writeln!(out, "minimize {}", coeffs.join(" + "))?;
        }
        Ok(())
    }
}

fn structure_tag(s: &Structure) -> &'static str {
    match s {
        Structure::Full => "full",
        Structure::Symmetric => "symmetric",
        Structure::Diagonal => "diagonal",
        Structure::Pattern(_) => "pattern",
    }
}

fn write_matrix(out: &mut impl Write, label: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(out, "{label} {}x{}", m.nrows(), m.ncols())?;
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "    {}", row.join(" "))?;
    }
    Ok(())
}

/// Upper-triangular column-major vectorization with `√2` scaling off the diagonal.
pub(crate) fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut v = DVector::zeros(n * (n + 1) / 2);
    let mut idx = 0;
    for c in 0..n {
        for r in 0..=c {
            v[idx] = if r == c {
                m[(r, c)]
            } else {
                (m[(r, c)] + m[(c, r)]) * std::f64::consts::FRAC_1_SQRT_2
            };
            idx += 1;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_lyapunov(a: f64) -> SdpSolution {
        let mut prob = SdpProblem::new();
        let p = prob.add_scalar("P");
        let pe = prob.expr(p);
        prob.pd_strict("pd", "P > 0", pe.clone());
        prob.nd_strict("lyap", "A'P + PA < 0", pe.scale(2.0 * a));
        prob.solve(&SolveOptions::default()).unwrap()
    }

    #[test]
    fn minimize_scalar_with_lower_bound() {
        let mut prob = SdpProblem::new();
        let x = prob.add_scalar("x");
        let xe = prob.expr(x);
        prob.psd(
            "bound",
            "x >= 1",
            xe.minus(&AffineExpr::constant(&DMatrix::from_element(1, 1, 1.0))),
            0.0,
        );
        prob.minimize(xe);
        let sol = prob.solve(&SolveOptions::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((prob.scalar_value(&sol.x, x) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn scalar_lyapunov_feasibility() {
        let stable = scalar_lyapunov(-1.0);
        assert!(stable.status.is_solved(), "{:?}", stable.status);
        assert!(stable.x[0] > 0.0);
        assert_eq!(scalar_lyapunov(1.0).status, Status::Infeasible);
    }

    #[test]
    fn reported_residual_round_trips() {
        let mut prob = SdpProblem::new();
        let p = prob.add_var("P", 2, 2, Structure::Symmetric);
        let pe = prob.expr(p);
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        prob.pd_strict("pd", "P", pe.clone());
        prob.nd_strict("lyap", "lyap", pe.lmul(&a.transpose()).plus(&pe.rmul(&a)));
        prob.psd(
            "norm",
            "trace",
            pe.entry(0, 0)
                .plus(&pe.entry(1, 1))
                .minus(&AffineExpr::constant(&DMatrix::from_element(1, 1, 1.0))),
            0.0,
        );
        let sol = prob.solve(&SolveOptions::default()).unwrap();
        assert!(sol.status.is_solved());
        let recomputed = prob
            .constraints()
            .iter()
            .map(|c| c.residual(&sol.x))
            .fold(f64::INFINITY, f64::min);
        assert!((recomputed - sol.worst_residual).abs() <= 1e-9);
        assert!(sol.worst_residual >= -RESIDUAL_TOL);
        // still feasible with a tenth of the margin
        for c in prob.constraints() {
            assert!(linalg::min_eigenvalue(&c.expr.eval(&sol.x)) >= c.margin / 10.0);
        }
    }

    #[test]
    fn unreferenced_variable_rejected() {
        let mut prob = SdpProblem::new();
        let x = prob.add_scalar("x");
        let _y = prob.add_scalar("y");
        prob.psd("b", "x", prob.expr(x), 0.0);
        prob.minimize(prob.expr(x));
        assert!(matches!(
            prob.solve(&SolveOptions::default()),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn svec_layout() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]);
        let v = svec(&m);
        assert_eq!(v.len(), 3);
        assert_eq!(v[0], 1.0);
        assert!((v[1] - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(v[2], 3.0);
    }

    #[test]
    fn backend_parsing() {
        assert_eq!("clarabel".parse::<Backend>().unwrap(), Backend::Clarabel);
        assert_eq!(" Clarabel ".parse::<Backend>().unwrap(), Backend::Clarabel);
        assert!("mosek".parse::<Backend>().is_err());
    }
}
