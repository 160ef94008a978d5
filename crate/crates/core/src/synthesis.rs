//! LMI synthesis of the dynamic allocator gain `K_f` and anti-windup gains `E_c`, `E_f`.

use log::{info, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lmi::{self, PsiData, PsiVars};
use crate::model::{balancing_scaling, ClosedLoop, DisturbanceClass};
use crate::sdp::{AffineExpr, MatrixExpr, SdpProblem, SolveOptions, Status, Structure, VarId};

pub use crate::result::{Certificate, Diagnostics, Mode, SynthesisResult};

/// Bound on the auxiliary matrix `P_0` of the trace-minimization objective.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceBound {
    /// `P_0 ⪯ λ I`.
    Identity,
    /// `sᵀ P_0 s ≤ λ` for a selector vector `s`.
    Selector(DVector<f64>),
}

/// Geometric schedule `σ_k = σ_0 r^k` for the outer σ search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub ratio: f64,
    pub max_steps: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            max_steps: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisOptions {
    pub mode: Mode,
    /// `(ρ_1, ρ_2, ρ_3)` weighting `λ`, `γ` and `μ`.
    pub rho: [f64; 3],
    pub trace_bound: TraceBound,
    /// Disturbed mode: decrease σ until infeasibility.
    pub line_search: Option<LineSearch>,
    /// Relative strictness margin override.
    pub eps: Option<f64>,
    /// Solve in balanced state coordinates.
    pub state_scaling: bool,
    /// Solver settings; `None` reads the backend from the environment.
    pub solver: Option<SolveOptions>,
    /// Re-solve constraint subsets to name the first infeasible family.
    pub attribute_infeasibility: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Nominal,
            rho: [1.0, 1.0, 1.0],
            trace_bound: TraceBound::Identity,
            line_search: None,
            eps: None,
            state_scaling: false,
            solver: None,
            attribute_infeasibility: true,
        }
    }
}

impl SynthesisOptions {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.rho.iter().any(|&r| !(r >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "weights must be nonnegative, got {:?}",
                self.rho
            )));
        }
        let active = match self.mode {
            Mode::Nominal | Mode::Robust => &self.rho[..2],
            Mode::Disturbed => &self.rho[..],
            Mode::Global => &self.rho[1..2],
        };
        if self.mode != Mode::Global && active.iter().all(|&r| r == 0.0) {
            return Err(Error::InvalidParameter("all objective weights are zero".into()));
        }
        if let TraceBound::Selector(s) = &self.trace_bound {
            if s.len() != n {
                return Err(Error::dim("trace selector", n, s.len()));
            }
        }
        if let Some(ls) = &self.line_search {
            if !(ls.ratio > 0.0 && ls.ratio < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "line-search ratio must lie in (0, 1), got {}",
                    ls.ratio
                )));
            }
        }
        Ok(())
    }
}

/// Values of the synthesis variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionVariables {
    /// `P̄`, or `P̄_i` per vertex.
    pub p_bar: Vec<DMatrix<f64>>,
    pub j_o: DMatrix<f64>,
    pub j_f: DMatrix<f64>,
    /// `J̄ = [J_o C̄⊥ᵀ; J_f]`.
    pub j_bar: DMatrix<f64>,
    pub k_bar_f: DMatrix<f64>,
    pub k_e: DMatrix<f64>,
    pub g_bar: DMatrix<f64>,
    /// Diagonal of `S`.
    pub s: DVector<f64>,
    pub gamma: f64,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub p0: Option<DMatrix<f64>>,
}

/// Assemble `J̄ = [J_o C̄⊥ᵀ; J_f]`.
pub fn assemble_j_bar(cl: &ClosedLoop, j_o: &DMatrix<f64>, j_f: &DMatrix<f64>) -> DMatrix<f64> {
    let top = j_o * cl.c_bar_perp.transpose();
    linalg::block(&[&[&top], &[j_f]])
}

/// Numeric `Ψ` at vertex `vertex` (the nominal matrices when the loop is certain).
pub fn build_psi(cl: &ClosedLoop, vars: &DecisionVariables, vertex: usize) -> Result<DMatrix<f64>> {
    let n = cl.n();
    let (a, b) = cl
        .vertices
        .get(vertex)
        .ok_or_else(|| Error::dim("vertex index", format!("< {}", cl.vertices.len()), vertex))?;
    let p_bar = vars
        .p_bar
        .get(vertex)
        .or(vars.p_bar.first())
        .ok_or_else(|| Error::MissingField("P̄".into()))?;
    let checks: [(&str, &DMatrix<f64>, usize, usize); 5] = [
        ("P̄", p_bar, n, n),
        ("J̄", &vars.j_bar, n, n),
        ("K̄_f", &vars.k_bar_f, cl.n_f, cl.n_f),
        ("K_e", &vars.k_e, cl.n_c + cl.n_f, cl.m_a),
        ("Ḡ", &vars.g_bar, cl.m_a, n),
    ];
    for (name, m, r, c) in checks {
        if m.shape() != (r, c) {
            return Err(Error::dim(
                name,
                format!("{r}x{c}"),
                format!("{}x{}", m.nrows(), m.ncols()),
            ));
        }
    }
    if vars.s.len() != cl.m_a {
        return Err(Error::dim("S", cl.m_a, vars.s.len()));
    }
    let w_sqrt = cl.w_sqrt();
    let s = DMatrix::from_diagonal(&vars.s);
    let gamma = DMatrix::from_element(1, 1, vars.gamma);
    Ok(lmi::psi(
        PsiData {
            a,
            b,
            c: &cl.c,
            l: &cl.l,
            w_sqrt: &w_sqrt,
        },
        PsiVars {
            p_bar,
            j_bar: &vars.j_bar,
            k_bar_f: &vars.k_bar_f,
            k_e: &vars.k_e,
            g_bar: &vars.g_bar,
            s: &s,
            gamma: &gamma,
        },
    ))
}

struct VarIds {
    p_bar: Vec<VarId>,
    j_o: VarId,
    j_f: VarId,
    k_bar_f: VarId,
    k_e: VarId,
    g_bar: Option<VarId>,
    s: VarId,
    gamma: VarId,
    mu: Option<VarId>,
    lambda: Option<VarId>,
    p0: Option<VarId>,
}

struct Formulation {
    problem: SdpProblem,
    ids: VarIds,
    /// Constraint families in order of insertion.
    families: Vec<String>,
}

fn scalar(v: f64) -> AffineExpr {
    AffineExpr::constant(&DMatrix::from_element(1, 1, v))
}

/// `scaling` is the diagonal `D` of `x = D x̃` when `cl` is already rescaled; the
/// trace bound is then stated for `P = D⁻¹ P̃ D⁻¹` in the original coordinates.
fn formulate(
    cl: &ClosedLoop,
    options: &SynthesisOptions,
    dist: Option<(&DisturbanceClass, f64)>,
    scaling: Option<&DVector<f64>>,
) -> Formulation {
    let mode = options.mode;
    let n = cl.n();
    let (n_o, n_f, n_c, m_a) = (cl.n_p + cl.n_c, cl.n_f, cl.n_c, cl.m_a);
    let nominal = [(cl.a.clone(), cl.b.clone())];
    let vertices: &[(DMatrix<f64>, DMatrix<f64>)] = match mode {
        Mode::Robust => &cl.vertices,
        _ => &nominal,
    };

    let mut prob = SdpProblem::new();
    if let Some(eps) = options.eps {
        prob.set_strict_margin(eps);
    }
    let p_bar: Vec<VarId> = (0..vertices.len())
        .map(|i| prob.add_var(&format!("P_bar[{i}]"), n, n, Structure::Symmetric))
        .collect();
    let j_o = prob.add_var("J_o", n_o, n_o, Structure::Full);
    let j_f = prob.add_var("J_f", n_f, n, Structure::Full);
    let k_bar_f = prob.add_var("K_bar_f", n_f, n_f, Structure::Full);
    let k_e = prob.add_var("K_e", n_c + n_f, m_a, Structure::Full);
    let g_bar = (mode != Mode::Global).then(|| prob.add_var("G_bar", m_a, n, Structure::Full));
    let s = prob.add_var("S", m_a, m_a, Structure::Diagonal);
    let gamma = prob.add_scalar("gamma");
    let mu = (mode == Mode::Disturbed).then(|| prob.add_scalar("mu"));
    let with_trace = mode != Mode::Global;
    let lambda = with_trace.then(|| prob.add_scalar("lambda"));
    let p0 = with_trace.then(|| prob.add_var("P_0", n, n, Structure::Symmetric));

    let j_bar = AffineExpr::block(&[
        vec![prob.expr(j_o).rmul(&cl.c_bar_perp.transpose())],
        vec![prob.expr(j_f)],
    ]);
    let k_bar_f_e = prob.expr(k_bar_f);
    let k_e_e = prob.expr(k_e);
    let g_bar_e = match g_bar {
        Some(id) => prob.expr(id),
        None => AffineExpr::zeros(m_a, n),
    };
    let s_e = prob.expr(s);
    let gamma_e = prob.expr(gamma);
    let w_sqrt = cl.w_sqrt();
    let u_bar = cl.u_bar();

    for (i, &p) in p_bar.iter().enumerate() {
        prob.pd_strict("positivity", &format!("P_bar[{i}] > 0"), prob.expr(p));
    }
    for k in 0..m_a {
        prob.pd_strict("positivity", &format!("S[{k}] > 0"), s_e.entry(k, k));
    }
    if let (Some(mu), Some((_, sigma))) = (mu, dist) {
        let mu_e = prob.expr(mu);
        prob.pd_strict("positivity", "mu > 0", mu_e.clone());
        prob.psd("sigma-mu", "sigma - mu >= 0", scalar(sigma).minus(&mu_e), 0.0);
    }
    if mode == Mode::Global {
        let p = prob.expr(p_bar[0]);
        prob.psd(
            "normalization",
            "P_bar >= I",
            p.minus(&AffineExpr::constant(&DMatrix::identity(n, n))),
            0.0,
        );
    }
    if let Some(g_id) = g_bar {
        let g = prob.expr(g_id);
        for (i, &p) in p_bar.iter().enumerate() {
            let p = prob.expr(p);
            for k in 0..m_a {
                let u2 = u_bar[k] * u_bar[k];
                let corner = match mu {
                    Some(mu) => prob.expr(mu).scale(u2),
                    None => scalar(u2),
                };
                prob.psd(
                    "eqras",
                    &format!("eqRAS[{i}][{k}]"),
                    lmi::eqras(&p, &g.row(k), &corner),
                    0.0,
                );
            }
        }
    }
    if let (Some(lambda), Some(p0)) = (lambda, p0) {
        let p0_e = prob.expr(p0);
        for (i, &p) in p_bar.iter().enumerate() {
            let block = lmi::trace_bound(&p0_e, &j_bar, &prob.expr(p));
            prob.psd("trace", &format!("trace[{i}]"), block, 0.0);
        }
        let lam = prob.expr(lambda);
        let d = scaling.cloned().unwrap_or_else(|| DVector::from_element(n, 1.0));
        match &options.trace_bound {
            TraceBound::Identity => {
                // P ⪯ λI  ⇔  P̃ ⪯ λD²
                let d2 = DMatrix::from_diagonal(&d.map(|v| v * v));
                let bound = lam.times_identity(n).lmul(&d2);
                prob.psd("trace", "lambda I - P_0 >= 0", bound.minus(&p0_e), 0.0)
            }
            TraceBound::Selector(sel) => {
                let sel = DMatrix::from_column_slice(n, 1, sel.component_div(&d).as_slice());
                let quad = p0_e.lmul(&sel.transpose()).rmul(&sel);
                prob.psd("trace", "lambda - s'P_0 s >= 0", lam.minus(&quad), 0.0)
            }
        }
    }
    for (i, (a, b)) in vertices.iter().enumerate() {
        let p = prob.expr(p_bar[i]);
        let psi = lmi::psi(
            PsiData {
                a,
                b,
                c: &cl.c,
                l: &cl.l,
                w_sqrt: &w_sqrt,
            },
            PsiVars {
                p_bar: &p,
                j_bar: &j_bar,
                k_bar_f: &k_bar_f_e,
                k_e: &k_e_e,
                g_bar: &g_bar_e,
                s: &s_e,
                gamma: &gamma_e,
            },
        );
        let block = match dist {
            Some((class, _)) => lmi::psi_w(&psi, &cl.b_w_bar, &class.r),
            None => psi,
        };
        let family = if mode == Mode::Robust {
            format!("psi-vertex-{i}")
        } else {
            "psi".to_string()
        };
        prob.nd_strict(&family, &format!("Psi[{i}] < 0"), block);
    }

    let [r1, r2, r3] = options.rho;
    let objective = match mode {
        Mode::Global => gamma_e.clone(),
        _ => {
            let mut obj = gamma_e.scale(r2);
            if let Some(l) = lambda {
                obj = obj.plus(&prob.expr(l).scale(r1));
            }
            if let Some(m) = mu {
                obj = obj.plus(&prob.expr(m).scale(r3));
            }
            obj
        }
    };
    prob.minimize(objective);

    let mut families: Vec<String> = Vec::new();
    for c in prob.constraints() {
        if !families.contains(&c.family) {
            families.push(c.family.clone());
        }
    }
    Formulation {
        problem: prob,
        ids: VarIds {
            p_bar,
            j_o,
            j_f,
            k_bar_f,
            k_e,
            g_bar,
            s,
            gamma,
            mu,
            lambda,
            p0,
        },
        families,
    }
}

fn extract(cl: &ClosedLoop, f: &Formulation, x: &[f64]) -> DecisionVariables {
    let prob = &f.problem;
    let ids = &f.ids;
    let j_o = prob.value(x, ids.j_o);
    let j_f = prob.value(x, ids.j_f);
    let j_bar = assemble_j_bar(cl, &j_o, &j_f);
    DecisionVariables {
        p_bar: ids.p_bar.iter().map(|&p| prob.value(x, p)).collect(),
        j_o,
        j_f,
        j_bar,
        k_bar_f: prob.value(x, ids.k_bar_f),
        k_e: prob.value(x, ids.k_e),
        g_bar: ids
            .g_bar
            .map(|g| prob.value(x, g))
            .unwrap_or_else(|| DMatrix::zeros(cl.m_a, cl.n())),
        s: prob.value(x, ids.s).diagonal(),
        gamma: prob.scalar_value(x, ids.gamma),
        mu: ids.mu.map(|m| prob.scalar_value(x, m)),
        lambda: ids.lambda.map(|l| prob.scalar_value(x, l)),
        p0: ids.p0.map(|p| prob.value(x, p)),
    }
}

/// Recover `K_f`, `E`, `P_i` and `G` from the synthesis variables.
pub fn recover_gains(vars: &DecisionVariables, cl: &ClosedLoop, mode: Mode) -> Result<SynthesisResult> {
    let n = cl.n();
    let cond_j = linalg::condition_number(&vars.j_bar);
    let j = linalg::checked_inverse(&vars.j_bar, "J̄")?;
    let c_bar_j_f = &cl.c_bar * vars.j_f.transpose();
    let cond_cj = linalg::condition_number(&c_bar_j_f);
    let c_bar_j_f_inv = linalg::checked_inverse(&c_bar_j_f, "C̄ J_fᵀ")?;
    if vars.s.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite("S".into()));
    }
    let k_f = &vars.k_bar_f * c_bar_j_f_inv;
    let s_inv = DMatrix::from_diagonal(&vars.s.map(|v| 1.0 / v));
    let e = &vars.k_e * s_inv;
    let p: Vec<DMatrix<f64>> = vars
        .p_bar
        .iter()
        .map(|pb| linalg::sym(&(&j * pb * j.transpose())))
        .collect();
    for (i, pi) in p.iter().enumerate() {
        if linalg::min_eigenvalue(pi) <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!("recovered P[{i}]")));
        }
    }
    let g = &vars.g_bar * j.transpose();
    debug_assert_eq!(g.shape(), (cl.m_a, n));
    Ok(SynthesisResult {
        mode,
        k_f,
        e_c: e.rows(0, cl.n_c).into_owned(),
        e_f: e.rows(cl.n_c, cl.n_f).into_owned(),
        certificate: Some(Certificate {
            p,
            g,
            s: vars.s.clone(),
            gamma: vars.gamma,
            mu: vars.mu,
            lambda: vars.lambda,
            sigma: None,
            j_bar: Some(vars.j_bar.clone()),
            state_scaling: None,
        }),
        objective: 0.0,
        diagnostics: Diagnostics {
            cond_j_bar: cond_j,
            cond_c_bar_j_f: cond_cj,
            ..Diagnostics::default()
        },
    })
}

/// Map a result computed for `cl.rescaled(d)` back to the original coordinates.
fn unscale(mut res: SynthesisResult, cl: &ClosedLoop, d: &DVector<f64>) -> SynthesisResult {
    let d_inv = DMatrix::from_diagonal(&d.map(|v| 1.0 / v));
    let d_f = DMatrix::from_diagonal(&d.rows(cl.n_p + cl.n_c, cl.n_f).into_owned());
    let d_cf = DMatrix::from_diagonal(&d.rows(cl.n_p, cl.n_c + cl.n_f).into_owned());
    res.k_f = &d_f * &res.k_f * &d_f;
    let e = &d_cf * res.e();
    res.e_c = e.rows(0, cl.n_c).into_owned();
    res.e_f = e.rows(cl.n_c, cl.n_f).into_owned();
    if let Some(cert) = res.certificate.as_mut() {
        cert.p = cert.p.iter().map(|p| linalg::sym(&(&d_inv * p * &d_inv))).collect();
        cert.g = &cert.g * &d_inv;
        cert.state_scaling = Some(d.iter().copied().collect());
    }
    res
}

struct Attempt {
    result: Option<SynthesisResult>,
    status: Status,
    message: String,
}

fn solve_once(
    cl: &ClosedLoop,
    options: &SynthesisOptions,
    dist: Option<(&DisturbanceClass, f64)>,
    solver: &SolveOptions,
) -> Result<Attempt> {
    let (work, scaling) = if options.state_scaling {
        let d = balancing_scaling(cl);
        (cl.rescaled(&d)?, Some(d))
    } else {
        (cl.clone(), None)
    };
    let form = formulate(&work, options, dist, scaling.as_ref());
    let sol = form.problem.solve(solver)?;
    info!(
        "{} synthesis: status {} objective {:.6e} ({} iterations, {:.2}s)",
        options.mode, sol.status, sol.objective, sol.iterations, sol.solve_time
    );
    match sol.status {
        Status::Optimal | Status::Feasible => {
            let vars = extract(&work, &form, &sol.x);
            let mut res = recover_gains(&vars, &work, options.mode)?;
            if let Some(d) = &scaling {
                res = unscale(res, cl, d);
            }
            res.objective = sol.objective;
            if let Some(cert) = res.certificate.as_mut() {
                cert.sigma = dist.map(|(_, s)| s);
            }
            res.diagnostics = Diagnostics {
                status: Some(sol.status),
                backend: Some(sol.backend),
                solve_time: sol.solve_time,
                iterations: sol.iterations,
                worst_residual: sol.worst_residual,
                worst_constraint: sol.worst_constraint.clone(),
                message: sol.diagnostics.clone(),
                ..res.diagnostics
            };
            Ok(Attempt {
                result: Some(res),
                status: sol.status,
                message: sol.diagnostics,
            })
        }
        Status::Infeasible => {
            let mut message = sol.diagnostics.clone();
            if options.attribute_infeasibility {
                if let Some(family) = attribute(&form, solver) {
                    message = format!("first infeasible constraint family: {family}; {message}");
                }
            }
            Ok(Attempt {
                result: None,
                status: sol.status,
                message,
            })
        }
        Status::Unbounded | Status::NumericalFailure => Ok(Attempt {
            result: None,
            status: sol.status,
            message: sol.diagnostics,
        }),
    }
}

/// Add constraint families one at a time and report the first that makes the
/// feasibility problem infeasible.
fn attribute(form: &Formulation, solver: &SolveOptions) -> Option<String> {
    for k in 1..=form.families.len() {
        let keep = &form.families[..k];
        let sub = form.problem.feasibility_subproblem(|f| keep.iter().any(|k| k == f));
        match sub.solve(solver) {
            Ok(sol) if sol.status == Status::Infeasible => return Some(form.families[k - 1].clone()),
            _ => {}
        }
    }
    None
}

fn finish(attempt: Attempt) -> Result<SynthesisResult> {
    match attempt.status {
        Status::Optimal | Status::Feasible => Ok(attempt.result.expect("solved attempt carries a result")),
        Status::Infeasible => Err(Error::Infeasible(attempt.message)),
        Status::Unbounded => Err(Error::Solver(format!("unbounded: {}", attempt.message))),
        Status::NumericalFailure => Err(Error::Solver(attempt.message)),
    }
}

fn solver_options(options: &SynthesisOptions) -> Result<SolveOptions> {
    match &options.solver {
        Some(s) => Ok(s.clone()),
        None => SolveOptions::from_env(),
    }
}

/// Dispatch on `options.mode`. `dist` is required in disturbed mode.
pub fn synthesize(
    cl: &ClosedLoop,
    dist: Option<&DisturbanceClass>,
    options: &SynthesisOptions,
) -> Result<SynthesisResult> {
    match options.mode {
        Mode::Nominal => synthesize_nominal(cl, options),
        Mode::Global => synthesize_global(cl, options),
        Mode::Robust => synthesize_robust(cl, options),
        Mode::Disturbed => {
            let dist = dist.ok_or_else(|| Error::MissingField("disturbance class".into()))?;
            synthesize_disturbed(cl, dist, options)
        }
    }
}

fn with_mode(options: &SynthesisOptions, mode: Mode) -> SynthesisOptions {
    SynthesisOptions {
        mode,
        ..options.clone()
    }
}

/// Local stability in `ε(P, 1)` with the actuator energy bound `γ`.
pub fn synthesize_nominal(cl: &ClosedLoop, options: &SynthesisOptions) -> Result<SynthesisResult> {
    let options = with_mode(options, Mode::Nominal);
    options.validate(cl.n())?;
    if cl.is_uncertain() {
        warn!(
            "nominal synthesis ignores the {} uncertainty vertices",
            cl.influence.n_alpha()
        );
    }
    finish(solve_once(cl, &options, None, &solver_options(&options)?)?)
}

/// Global stability with `Ḡ = 0`; requires a Hurwitz plant. The problem is
/// homogeneous in the decision variables, so `P̄ ⪰ I` fixes the scale.
pub fn synthesize_global(cl: &ClosedLoop, options: &SynthesisOptions) -> Result<SynthesisResult> {
    let options = with_mode(options, Mode::Global);
    options.validate(cl.n())?;
    let abscissa = linalg::spectral_abscissa(&cl.plant.a_p);
    if abscissa >= 0.0 {
        return Err(Error::PlantNotHurwitz(abscissa));
    }
    finish(solve_once(cl, &options, None, &solver_options(&options)?)?)
}

/// Energy-bounded disturbances, optionally decreasing σ geometrically until the
/// problem becomes infeasible and keeping the last feasible design.
pub fn synthesize_disturbed(
    cl: &ClosedLoop,
    dist: &DisturbanceClass,
    options: &SynthesisOptions,
) -> Result<SynthesisResult> {
    let options = with_mode(options, Mode::Disturbed);
    options.validate(cl.n())?;
    if cl.n_w() == 0 {
        return Err(Error::InvalidParameter("disturbed mode requires n_w >= 1".into()));
    }
    if dist.r.nrows() != cl.n_w() {
        return Err(Error::dim("R", cl.n_w(), dist.r.nrows()));
    }
    let solver = solver_options(&options)?;
    let Some(ls) = options.line_search else {
        return finish(solve_once(cl, &options, Some((dist, dist.sigma)), &solver)?);
    };
    let mut best: Option<SynthesisResult> = None;
    let mut trail = Vec::new();
    let mut sigma = dist.sigma;
    let mut last_failure = None;
    for _ in 0..ls.max_steps {
        let attempt = solve_once(cl, &options, Some((dist, sigma)), &solver)?;
        let ok = attempt.status.is_solved();
        trail.push((sigma, ok));
        if !ok {
            last_failure = Some(attempt);
            break;
        }
        best = attempt.result;
        sigma *= ls.ratio;
    }
    match best {
        Some(mut res) => {
            res.diagnostics.line_search = trail;
            Ok(res)
        }
        None => finish(last_failure.expect("line search ran at least once")),
    }
}

/// Polytopic uncertainty: one `Ψ_i` and `P̄_i` per vertex with shared gains.
pub fn synthesize_robust(cl: &ClosedLoop, options: &SynthesisOptions) -> Result<SynthesisResult> {
    let options = with_mode(options, Mode::Robust);
    options.validate(cl.n())?;
    if !cl.is_uncertain() {
        return Err(Error::InvalidParameter(
            "robust mode requires at least one uncertainty vertex".into(),
        ));
    }
    finish(solve_once(cl, &options, None, &solver_options(&options)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_closed_loop, AllocatorWeights, ControllerModel, InfluenceModel, PlantModel};

    /// 1-state plant, `m_c = 1`, `m_a = 2`, `M_n = [1 1]`, static controller `y_c = -y_p`.
    fn scalar_loop(a_p: f64) -> ClosedLoop {
        let plant = PlantModel::new(
            DMatrix::from_element(1, 1, a_p),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 0),
        )
        .unwrap();
        let controller = ControllerModel::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, -1.0),
        )
        .unwrap();
        let influence = InfluenceModel::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            vec![],
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        let weights = AllocatorWeights::new(DVector::from_vec(vec![2.0, 1.0])).unwrap();
        assemble_closed_loop(&plant, &controller, &influence, &weights).unwrap()
    }

    #[test]
    fn desk_scale_nominal_is_feasible() {
        let cl = scalar_loop(-1.0);
        let res = synthesize_nominal(&cl, &SynthesisOptions::default()).unwrap();
        let cert = res.certificate.as_ref().unwrap();
        assert!(cert.gamma.is_finite() && cert.gamma > 0.0);
        assert!(linalg::min_eigenvalue(&cert.p[0]) > 0.0);
    }

    #[test]
    fn global_mode_on_stable_plant() {
        let cl = scalar_loop(-1.0);
        let res = synthesize_global(&cl, &SynthesisOptions::default()).unwrap();
        assert!(res.certificate.as_ref().unwrap().g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn global_mode_rejects_unstable_plant() {
        let cl = scalar_loop(0.5);
        assert!(matches!(
            synthesize_global(&cl, &SynthesisOptions::default()),
            Err(Error::PlantNotHurwitz(_))
        ));
    }

    #[test]
    fn trivial_recovery() {
        let cl = scalar_loop(-1.0);
        let n = cl.n();
        // identity J̄ needs J_o C̄⊥ᵀ = [I 0]
        let j_o = DMatrix::identity(n - cl.n_f, n - cl.n_f);
        let mut j_f = DMatrix::zeros(cl.n_f, n);
        j_f[(0, n - 1)] = 1.0;
        let j_bar = assemble_j_bar(&cl, &j_o, &j_f);
        let p_bar = DMatrix::identity(n, n) * 2.0;
        let vars = DecisionVariables {
            p_bar: vec![p_bar.clone()],
            j_o,
            j_f,
            j_bar: j_bar.clone(),
            k_bar_f: DMatrix::from_element(1, 1, -1.0),
            k_e: DMatrix::from_element(cl.n_c + cl.n_f, cl.m_a, 0.5),
            g_bar: DMatrix::from_element(cl.m_a, n, 0.1),
            s: DVector::from_element(cl.m_a, 1.0),
            gamma: 1.0,
            mu: None,
            lambda: None,
            p0: None,
        };
        let res = recover_gains(&vars, &cl, Mode::Nominal).unwrap();
        // S = I gives E = K_e
        assert!((res.e() - &vars.k_e).amax() < 1e-14);
        let j = j_bar.clone().try_inverse().unwrap();
        let cert = res.certificate.unwrap();
        assert!((&cert.p[0] - &j * &p_bar * j.transpose()).amax() < 1e-12);
        assert!((&cert.g - &vars.g_bar * j.transpose()).amax() < 1e-12);
    }
}
