//! System data: plant, controller, influence matrix, allocator weights, and the
//! augmented closed loop formed by plant, controller and dynamic allocator.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative residual accepted for the kernel/pseudo-inverse/complement identities.
pub const IDENTITY_TOL: f64 = 1e-10;

fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::dim(
            name,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Linear plant `ẋ_p = A_p x_p + B_p u_p + B_w w`, `y_p = C_p x_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a_p: DMatrix<f64>,
    pub b_p: DMatrix<f64>,
    pub c_p: DMatrix<f64>,
    /// May have zero columns when the plant is undisturbed.
    pub b_w: DMatrix<f64>,
}

impl PlantModel {
    pub fn new(a_p: DMatrix<f64>, b_p: DMatrix<f64>, c_p: DMatrix<f64>, b_w: DMatrix<f64>) -> Result<Self> {
        let n_p = a_p.nrows();
        check_shape("A_p", &a_p, n_p, n_p)?;
        check_shape("B_p", &b_p, n_p, b_p.ncols())?;
        check_shape("C_p", &c_p, c_p.nrows(), n_p)?;
        check_shape("B_w", &b_w, n_p, b_w.ncols())?;
        let plant = Self { a_p, b_p, c_p, b_w };
        if !plant.is_stabilizable() {
            warn!("(A_p, B_p) fails the PBH stabilizability test");
        }
        if !plant.is_detectable() {
            warn!("(C_p, A_p) fails the PBH detectability test");
        }
        Ok(plant)
    }

    pub fn n_p(&self) -> usize {
        self.a_p.nrows()
    }
    pub fn m_c(&self) -> usize {
        self.b_p.ncols()
    }
    pub fn q(&self) -> usize {
        self.c_p.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.b_w.ncols()
    }

    pub fn is_stabilizable(&self) -> bool {
        linalg::pbh_stabilizable(&self.a_p, &self.b_p)
    }

    pub fn is_detectable(&self) -> bool {
        linalg::pbh_detectable(&self.c_p, &self.a_p)
    }
}

/// Linear output-feedback controller `ẋ_c = A_c x_c + B_c y_p`, `y_c = C_c x_c + D_c y_p`.
/// The anti-windup gain `E_c` is a synthesis output and is not stored here.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerModel {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub c_c: DMatrix<f64>,
    pub d_c: DMatrix<f64>,
}

impl ControllerModel {
    pub fn new(a_c: DMatrix<f64>, b_c: DMatrix<f64>, c_c: DMatrix<f64>, d_c: DMatrix<f64>) -> Result<Self> {
        let n_c = a_c.nrows();
        check_shape("A_c", &a_c, n_c, n_c)?;
        check_shape("B_c", &b_c, n_c, b_c.ncols())?;
        check_shape("C_c", &c_c, c_c.nrows(), n_c)?;
        check_shape("D_c", &d_c, c_c.nrows(), b_c.ncols())?;
        Ok(Self { a_c, b_c, c_c, d_c })
    }

    pub fn n_c(&self) -> usize {
        self.a_c.nrows()
    }
}

/// State matrix of the linear plant/controller interconnection `u_p = y_c`.
pub fn a0_matrix(plant: &PlantModel, controller: &ControllerModel) -> Result<DMatrix<f64>> {
    check_shape("C_c", &controller.c_c, plant.m_c(), controller.n_c())?;
    check_shape("B_c", &controller.b_c, controller.n_c(), plant.q())?;
    let top_left = &plant.a_p + &plant.b_p * &controller.d_c * &plant.c_p;
    let top_right = &plant.b_p * &controller.c_c;
    let bottom_left = &controller.b_c * &plant.c_p;
    Ok(linalg::block(&[
        &[&top_left, &top_right],
        &[&bottom_left, &controller.a_c],
    ]))
}

/// Influence matrix `M(θ) = M_n + Σ α_i M_i` with actuator magnitude bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceModel {
    pub m_n: DMatrix<f64>,
    /// Uncertainty vertices `M_i`; empty in the nominal case.
    pub vertices: Vec<DMatrix<f64>>,
    pub u_bar: DVector<f64>,
    /// Optional kernel basis overriding the computed orthonormal one.
    pub kernel_basis: Option<DMatrix<f64>>,
}

impl InfluenceModel {
    pub fn new(m_n: DMatrix<f64>, vertices: Vec<DMatrix<f64>>, u_bar: DVector<f64>) -> Result<Self> {
        let (m_c, m_a) = m_n.shape();
        if m_a <= m_c {
            return Err(Error::InvalidParameter(format!(
                "influence matrix must be wide (m_a > m_c), got {m_c}x{m_a}"
            )));
        }
        for (i, v) in vertices.iter().enumerate() {
            check_shape(&format!("vertices[{i}]"), v, m_c, m_a)?;
        }
        if u_bar.len() != m_a {
            return Err(Error::dim("u_bar", m_a, u_bar.len()));
        }
        if u_bar.iter().any(|&u| !(u > 0.0)) {
            return Err(Error::InvalidParameter("u_bar entries must be positive".into()));
        }
        let r = linalg::rank(&m_n);
        if r < m_c {
            return Err(Error::InfluenceRankDeficient { rank: r, rows: m_c });
        }
        Ok(Self {
            m_n,
            vertices,
            u_bar,
            kernel_basis: None,
        })
    }

    pub fn with_kernel_basis(mut self, n: DMatrix<f64>) -> Result<Self> {
        let (m_c, m_a) = self.m_n.shape();
        check_shape("N", &n, m_a, m_a - m_c)?;
        let residual = (&self.m_n * &n).amax();
        if residual > IDENTITY_TOL * self.m_n.norm().max(1.0) * n.norm().max(1.0) {
            return Err(Error::InvalidKernelBasis(format!("M_n N residual {residual:.3e}")));
        }
        if linalg::rank(&n) < m_a - m_c {
            return Err(Error::InvalidKernelBasis("N lacks full column rank".into()));
        }
        self.kernel_basis = Some(n);
        Ok(self)
    }

    pub fn m_c(&self) -> usize {
        self.m_n.nrows()
    }
    pub fn m_a(&self) -> usize {
        self.m_n.ncols()
    }
    pub fn n_alpha(&self) -> usize {
        self.vertices.len()
    }

    /// `M_u(α) = Σ α_i M_i` for simplex weights `α`.
    pub fn uncertainty(&self, alpha: &[f64]) -> Result<DMatrix<f64>> {
        validate_simplex(alpha, self.vertices.len())?;
        let mut out = DMatrix::zeros(self.m_c(), self.m_a());
        for (a, m) in alpha.iter().zip(&self.vertices) {
            out += m * *a;
        }
        Ok(out)
    }
}

pub(crate) fn validate_simplex(alpha: &[f64], n: usize) -> Result<()> {
    if alpha.len() != n {
        return Err(Error::dim("simplex weights", n, alpha.len()));
    }
    if alpha.iter().any(|&a| !(a >= 0.0)) || (alpha.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "simplex weights must be nonnegative and sum to one, got {alpha:?}"
        )));
    }
    Ok(())
}

/// Energy-bounded disturbance class `∫ wᵀ R w dt < σ⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceClass {
    pub r: DMatrix<f64>,
    pub sigma: f64,
}

impl DisturbanceClass {
    pub fn new(r: DMatrix<f64>, sigma: f64) -> Result<Self> {
        check_shape("R", &r, r.nrows(), r.nrows())?;
        if (&r - r.transpose()).amax() > 1e-12 * r.amax().max(1.0) {
            return Err(Error::InvalidParameter("R must be symmetric".into()));
        }
        if r.nrows() > 0 && linalg::min_eigenvalue(&r) <= 0.0 {
            return Err(Error::NotPositiveDefinite("R".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { r, sigma })
    }
}

/// Diagonal actuator penalty `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocatorWeights {
    pub diag: DVector<f64>,
}

impl AllocatorWeights {
    pub fn new(diag: DVector<f64>) -> Result<Self> {
        if diag.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidParameter("allocator weights must be positive".into()));
        }
        Ok(Self { diag })
    }

    /// Weights `w_i = ū_i⁻²`.
    pub fn inverse_square_bounds(u_bar: &DVector<f64>) -> Self {
        Self {
            diag: u_bar.map(|u| 1.0 / (u * u)),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag)
    }

    pub fn sqrt_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag.map(f64::sqrt))
    }
}

/// Augmented closed loop with state `x = [x_p; x_c; x_f]`.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub plant: PlantModel,
    pub controller: ControllerModel,
    pub influence: InfluenceModel,
    pub weights: AllocatorWeights,
    pub n_p: usize,
    pub n_c: usize,
    pub n_f: usize,
    pub m_c: usize,
    pub m_a: usize,
    /// Kernel basis of `M_n`, `m_a × n_f`.
    pub kernel: DMatrix<f64>,
    pub m_dagger: DMatrix<f64>,
    pub a0: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b_bar: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_bar: DMatrix<f64>,
    pub c_bar_perp: DMatrix<f64>,
    pub l_c: DMatrix<f64>,
    pub l_f: DMatrix<f64>,
    /// `[L_c L_f]`.
    pub l: DMatrix<f64>,
    pub b_w_bar: DMatrix<f64>,
    /// Vertex pairs `(A_i, B_i)`; the nominal pair alone when there is no uncertainty.
    pub vertices: Vec<(DMatrix<f64>, DMatrix<f64>)>,
}

impl ClosedLoop {
    pub fn n(&self) -> usize {
        self.n_p + self.n_c + self.n_f
    }

    pub fn n_w(&self) -> usize {
        self.plant.n_w()
    }

    pub fn u_bar(&self) -> &DVector<f64> {
        &self.influence.u_bar
    }

    pub fn w(&self) -> DMatrix<f64> {
        self.weights.matrix()
    }

    pub fn w_sqrt(&self) -> DMatrix<f64> {
        self.weights.sqrt_matrix()
    }

    /// True when the influence matrix carries uncertainty vertices.
    pub fn is_uncertain(&self) -> bool {
        self.influence.n_alpha() > 0
    }

    /// `A(α) = A + B̄ M_u(α) C` and `B(α) = B + B̄ M_u(α)` for simplex weights `α`
    /// (`None` means the nominal matrices).
    pub fn matrices_at(&self, alpha: Option<&[f64]>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        match alpha {
            None => Ok((self.a.clone(), self.b.clone())),
            Some(alpha) => {
                let mu = self.influence.uncertainty(alpha)?;
                let a = &self.a + &self.b_bar * &mu * &self.c;
                let b = &self.b + &self.b_bar * &mu;
                Ok((a, b))
            }
        }
    }

    /// Influence matrix `M(α)`.
    pub fn influence_at(&self, alpha: Option<&[f64]>) -> Result<DMatrix<f64>> {
        match alpha {
            None => Ok(self.influence.m_n.clone()),
            Some(alpha) => Ok(&self.influence.m_n + self.influence.uncertainty(alpha)?),
        }
    }

    /// Linear closed-loop matrix `A_i + L_f K_f C̄` for every vertex.
    pub fn vertex_state_matrices(&self, k_f: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let coupling = &self.l_f * k_f * &self.c_bar;
        self.vertices.iter().map(|(a_i, _)| a_i + &coupling).collect()
    }

    /// Residuals of the structural identities `M_n N = 0`, `M_n M† = I`, `C̄ C̄⊥ = 0`,
    /// each relative to the norms involved.
    pub fn identity_residuals(&self) -> [f64; 3] {
        let m_n = &self.influence.m_n;
        let scale = m_n.norm().max(1.0);
        let r1 = (m_n * &self.kernel).amax() / (scale * self.kernel.norm().max(1.0));
        let r2 = (m_n * &self.m_dagger - DMatrix::identity(self.m_c, self.m_c)).amax()
            / (scale * self.m_dagger.norm().max(1.0));
        let r3 = (&self.c_bar * &self.c_bar_perp).amax() / self.c_bar.norm().max(1.0);
        [r1, r2, r3]
    }
}

impl ClosedLoop {
    /// The same loop in coordinates `x = D x̃` for a positive diagonal `d` (length `n`).
    ///
    /// Plant and controller realizations are transformed by their blocks of `D`, and the
    /// kernel basis becomes `N D_f`, so `C̃ = C D` and `C̄̃ = D_f C̄ D`.
    pub fn rescaled(&self, d: &DVector<f64>) -> Result<ClosedLoop> {
        if d.len() != self.n() {
            return Err(Error::dim("state scaling", self.n(), d.len()));
        }
        if d.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("state scaling must be positive".into()));
        }
        let d_p = DMatrix::from_diagonal(&d.rows(0, self.n_p).into_owned());
        let d_c = DMatrix::from_diagonal(&d.rows(self.n_p, self.n_c).into_owned());
        let d_f = DMatrix::from_diagonal(&d.rows(self.n_p + self.n_c, self.n_f).into_owned());
        let inv = |m: &DMatrix<f64>| DMatrix::from_diagonal(&m.diagonal().map(|v| 1.0 / v));
        let (d_p_inv, d_c_inv) = (inv(&d_p), inv(&d_c));
        let p = &self.plant;
        let plant = PlantModel {
            a_p: &d_p_inv * &p.a_p * &d_p,
            b_p: &d_p_inv * &p.b_p,
            c_p: &p.c_p * &d_p,
            b_w: &d_p_inv * &p.b_w,
        };
        let k = &self.controller;
        let controller = ControllerModel {
            a_c: &d_c_inv * &k.a_c * &d_c,
            b_c: &d_c_inv * &k.b_c,
            c_c: &k.c_c * &d_c,
            d_c: k.d_c.clone(),
        };
        let mut influence = self.influence.clone();
        influence.kernel_basis = Some(&self.kernel * &d_f);
        assemble_closed_loop(&plant, &controller, &influence, &self.weights)
    }
}

/// Diagonal power-of-two scaling balancing row and column norms of `A_0`
/// (allocator states keep unit scale).
pub fn balancing_scaling(cl: &ClosedLoop) -> DVector<f64> {
    let n0 = cl.n_p + cl.n_c;
    let mut a = cl.a0.clone();
    let mut d = DVector::from_element(cl.n(), 1.0);
    for _ in 0..100 {
        let mut converged = true;
        for i in 0..n0 {
            let c: f64 = (0..n0).filter(|&j| j != i).map(|j| a[(j, i)].abs()).sum();
            let r: f64 = (0..n0).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let (mut cs, mut rs, mut f) = (c, r, 1.0);
            while cs < rs / 2.0 {
                cs *= 2.0;
                rs /= 2.0;
                f *= 2.0;
            }
            while cs >= rs * 2.0 {
                cs /= 2.0;
                rs *= 2.0;
                f /= 2.0;
            }
            if cs + rs < 0.95 * (c + r) {
                converged = false;
                d[i] *= f;
                a.column_mut(i).scale_mut(f);
                a.row_mut(i).scale_mut(1.0 / f);
            }
        }
        if converged {
            break;
        }
    }
    d
}

/// Assemble the augmented closed-loop matrices.
pub fn assemble_closed_loop(
    plant: &PlantModel,
    controller: &ControllerModel,
    influence: &InfluenceModel,
    weights: &AllocatorWeights,
) -> Result<ClosedLoop> {
    let n_p = plant.n_p();
    let n_c = controller.n_c();
    let m_c = plant.m_c();
    let m_a = influence.m_a();
    if influence.m_c() != m_c {
        return Err(Error::dim("M_n rows", m_c, influence.m_c()));
    }
    if weights.diag.len() != m_a {
        return Err(Error::dim("allocator weights", m_a, weights.diag.len()));
    }
    let n_f = m_a - m_c;
    let n = n_p + n_c + n_f;

    let kernel = match &influence.kernel_basis {
        Some(k) => k.clone(),
        None => linalg::nullspace_basis(&influence.m_n)?,
    };
    let m_dagger = linalg::right_pseudo_inverse(&influence.m_n)?;
    let a0 = a0_matrix(plant, controller)?;

    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (n_p + n_c, n_p + n_c)).copy_from(&a0);
    let mut b_bar = DMatrix::zeros(n, m_c);
    b_bar.view_mut((0, 0), (n_p, m_c)).copy_from(&plant.b_p);
    let b = &b_bar * &influence.m_n;

    let c_x_p = &m_dagger * &controller.d_c * &plant.c_p;
    let c_x_c = &m_dagger * &controller.c_c;
    let c = linalg::block(&[&[&c_x_p, &c_x_c, &kernel]]);
    let c_bar = kernel.transpose() * weights.matrix() * &c;
    let c_bar_perp = linalg::orth_complement(&c_bar)?;

    let mut l_c = DMatrix::zeros(n, n_c);
    l_c.view_mut((n_p, 0), (n_c, n_c)).fill_with_identity();
    let mut l_f = DMatrix::zeros(n, n_f);
    l_f.view_mut((n_p + n_c, 0), (n_f, n_f)).fill_with_identity();
    let l = linalg::block(&[&[&l_c, &l_f]]);

    let mut b_w_bar = DMatrix::zeros(n, plant.n_w());
    b_w_bar.view_mut((0, 0), (n_p, plant.n_w())).copy_from(&plant.b_w);

    let vertices = if influence.vertices.is_empty() {
        vec![(a.clone(), b.clone())]
    } else {
        influence
            .vertices
            .iter()
            .map(|m_i| (&a + &b_bar * m_i * &c, &b + &b_bar * m_i))
            .collect()
    };

    let cl = ClosedLoop {
        plant: plant.clone(),
        controller: controller.clone(),
        influence: influence.clone(),
        weights: weights.clone(),
        n_p,
        n_c,
        n_f,
        m_c,
        m_a,
        kernel,
        m_dagger,
        a0,
        a,
        b_bar,
        b,
        c,
        c_bar,
        c_bar_perp,
        l_c,
        l_f,
        l,
        b_w_bar,
        vertices,
    };
    let residuals = cl.identity_residuals();
    if residuals.iter().any(|&r| r > IDENTITY_TOL) {
        return Err(Error::InvalidParameter(format!(
            "closed-loop identities violated: residuals {residuals:?}"
        )));
    }
    Ok(cl)
}

/// Componentwise symmetric saturation.
pub fn sat(v: &DVector<f64>, u_bar: &DVector<f64>) -> DVector<f64> {
    v.zip_map(u_bar, |x, u| x.clamp(-u, u))
}

/// Deadzone `sat(v) - v`.
pub fn dz(v: &DVector<f64>, u_bar: &DVector<f64>) -> DVector<f64> {
    v.zip_map(u_bar, |x, u| x.clamp(-u, u) - x)
}

/// Steady-state allocator state minimizing `y_fᵀ W y_f` subject to
/// `y_f = N x_f + M† y_c`: `x_f* = -(NᵀWN)⁻¹ NᵀWM† y_c`.
pub fn optimal_allocator_state(cl: &ClosedLoop, y_c: &DVector<f64>) -> Result<DVector<f64>> {
    let w = cl.w();
    let ntw = cl.kernel.transpose() * &w;
    let gram = &ntw * &cl.kernel;
    let rhs = &ntw * &cl.m_dagger * y_c;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("NᵀWN".into()))?;
    Ok(-chol.solve(&rhs))
}
