use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{svec, RawSolution, RawStatus, SdpProblem, SolveOptions};
use crate::error::{Error, Result};

/// Map each constraint `F(x) - margin·I ⪰ 0` to `s = b - A x` with `s` in the PSD
/// triangle cone (or the nonnegative orthant for 1×1 blocks). `buffers[k]`
/// tightens constraint `k` beyond its declared margin.
pub(super) fn solve(problem: &SdpProblem, options: &SolveOptions, buffers: &[f64]) -> Result<RawSolution> {
    let n = problem.n_scalars();
    let mut rows = Vec::new();
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    let mut b = Vec::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    for (c, buffer) in problem.constraints().iter().zip(buffers) {
        let k = c.size();
        let r0 = b.len();
        let shifted = c.expr.constant_part() - nalgebra::DMatrix::identity(k, k) * (c.margin + buffer);
        b.extend(svec(&shifted).iter());
        for (&var, coeff) in c.expr.terms() {
            for (i, v) in svec(coeff).iter().enumerate() {
                if *v != 0.0 {
                    rows.push(r0 + i);
                    cols.push(var);
                    vals.push(-v);
                }
            }
        }
        let cone = if k == 1 {
            SupportedConeT::NonnegativeConeT(1)
        } else {
            SupportedConeT::PSDTriangleConeT(k)
        };
        match (cones.last_mut(), cone) {
            (Some(SupportedConeT::NonnegativeConeT(d)), SupportedConeT::NonnegativeConeT(1)) => *d += 1,
            (_, cone) => cones.push(cone),
        }
    }

    let a = CscMatrix::new_from_triplets(b.len(), n, rows, cols, vals);
    let p = CscMatrix::zeros((n, n));
    let q = problem.cost_vector();

    let settings = DefaultSettingsBuilder::default()
        .max_iter(options.max_iter)
        .tol_gap_abs(options.tol_gap_abs)
        .tol_gap_rel(options.tol_gap_rel)
        .tol_feas(options.tol_feas)
        .verbose(options.verbose)
        .max_threads(1)
        // clique recombination leaves eigenvalue errors well above the residual tolerance
        .chordal_decomposition_enable(false)
        .build()
        .map_err(|e| Error::Solver(format!("invalid solver settings: {e}")))?;

    let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
        .map_err(|e| Error::Solver(format!("solver setup failed: {e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let status = match sol.status {
        SolverStatus::Solved => RawStatus::Solved,
        SolverStatus::AlmostSolved => RawStatus::AlmostSolved,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => RawStatus::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => RawStatus::Unbounded,
        // a final iterate may still pass the residual check
        SolverStatus::MaxIterations | SolverStatus::MaxTime | SolverStatus::InsufficientProgress => {
            RawStatus::AlmostSolved
        }
        _ => RawStatus::Failed,
    };
    Ok(RawSolution {
        status,
        x: sol.x.clone(),
        iterations: sol.iterations,
        solve_time: sol.solve_time,
        diagnostics: format!(
            "clarabel status={:?} iterations={} r_prim={:.3e} r_dual={:.3e} obj={:.6e}",
            sol.status, sol.iterations, sol.r_prim, sol.r_dual, sol.obj_val
        ),
    })
}
