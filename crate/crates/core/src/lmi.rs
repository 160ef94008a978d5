//! Block formulas of the synthesis conditions, generic over numeric matrices and
//! affine expressions so that synthesis (decision variables) and verification
//! (recovered values) assemble exactly the same matrices.

use nalgebra::DMatrix;

use crate::sdp::MatrixExpr;

/// Fixed data entering one vertex copy of `Ψ`.
#[derive(Debug, Clone, Copy)]
pub struct PsiData<'a> {
    pub a: &'a DMatrix<f64>,
    pub b: &'a DMatrix<f64>,
    pub c: &'a DMatrix<f64>,
    pub l: &'a DMatrix<f64>,
    pub w_sqrt: &'a DMatrix<f64>,
}

/// Decision quantities entering `Ψ`. `gamma` is 1×1.
#[derive(Debug, Clone, Copy)]
pub struct PsiVars<'a, T> {
    pub p_bar: &'a T,
    pub j_bar: &'a T,
    pub k_bar_f: &'a T,
    pub k_e: &'a T,
    pub g_bar: &'a T,
    pub s: &'a T,
    pub gamma: &'a T,
}

/// `Z = diag(0, K̄_f)` of size `n`.
pub fn z_matrix<T: MatrixExpr>(n: usize, k_bar_f: &T) -> T {
    let n_f = k_bar_f.shape().0;
    let n_o = n - n_f;
    T::block(&[
        vec![T::zeros(n_o, n_o), T::zeros(n_o, n_f)],
        vec![T::zeros(n_f, n_o), k_bar_f.clone()],
    ])
}

/// The `(2n + 2m_a)`-square matrix `Ψ`.
pub fn psi<T: MatrixExpr>(d: PsiData<'_>, v: PsiVars<'_, T>) -> T {
    let n = d.a.nrows();
    let m_a = d.c.nrows();
    let j_bar_t = v.j_bar.tr();
    let z = z_matrix(n, v.k_bar_f);
    let a_jt = j_bar_t.lmul(d.a);

    let p11 = v.j_bar.he().neg();
    let p12 = v.p_bar.plus(&a_jt).plus(&z).minus(v.j_bar);
    let p13 = v.s.lmul(d.b).plus(&v.k_e.lmul(d.l));
    let p14 = T::zeros(n, m_a);
    let p22 = a_jt.plus(&z).he();
    let p23 = p13.minus(&v.g_bar.tr()).minus(&v.j_bar.rmul(&d.c.transpose()));
    let p24 = v.j_bar.rmul(&(d.c.transpose() * d.w_sqrt));
    let p33 = v.s.scale(-2.0);
    let p34 = v.s.rmul(d.w_sqrt);
    let p44 = v.gamma.times_identity(m_a).neg();

    T::block(&[
        vec![p11, p12.clone(), p13.clone(), p14.clone()],
        vec![p12.tr(), p22, p23.clone(), p24.clone()],
        vec![p13.tr(), p23.tr(), p33, p34.clone()],
        vec![p14.tr(), p24.tr(), p34.tr(), p44],
    ])
}

/// `Ψ_w`: `Ψ` bordered by the row `[B̄_wᵀ, B̄_wᵀ, 0, 0]` and the corner `-R`.
pub fn psi_w<T: MatrixExpr>(psi: &T, b_w_bar: &DMatrix<f64>, r: &DMatrix<f64>) -> T {
    let (k, _) = psi.shape();
    let n = b_w_bar.nrows();
    let n_w = b_w_bar.ncols();
    let mut border = DMatrix::zeros(n_w, k);
    border.view_mut((0, 0), (n_w, n)).copy_from(&b_w_bar.transpose());
    border.view_mut((0, n), (n_w, n)).copy_from(&b_w_bar.transpose());
    T::block(&[
        vec![psi.clone(), T::constant(&border.transpose())],
        vec![T::constant(&border), T::constant(&(-r))],
    ])
}

/// `[P̄, Ḡ_(i)ᵀ; Ḡ_(i), corner]` for one row `g_row` (1×n) and a 1×1 `corner`.
pub fn eqras<T: MatrixExpr>(p_bar: &T, g_row: &T, corner: &T) -> T {
    T::block(&[vec![p_bar.clone(), g_row.tr()], vec![g_row.clone(), corner.clone()]])
}

/// `[P_0, I; I, J̄ + J̄ᵀ - P̄]`.
pub fn trace_bound<T: MatrixExpr>(p0: &T, j_bar: &T, p_bar: &T) -> T {
    let n = p0.shape().0;
    let eye = T::constant(&DMatrix::identity(n, n));
    T::block(&[vec![p0.clone(), eye.clone()], vec![eye, j_bar.he().minus(p_bar)]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize, m_a: usize, w: f64) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
        let a = DMatrix::from_fn(n, n, |i, j| (i as f64) - 0.5 * (j as f64));
        let b = DMatrix::from_fn(n, m_a, |i, j| 0.1 * ((i + j) as f64));
        let c = DMatrix::from_fn(m_a, n, |i, j| if i == j { 1.0 } else { 0.0 });
        let l = DMatrix::from_fn(n, m_a, |i, j| if i == j { 1.0 } else { 0.0 });
        let w_sqrt = DMatrix::identity(m_a, m_a) * w;
        (vec![a, b, c, l], w_sqrt)
    }

    #[test]
    fn trivial_blocks() {
        let (n, m_a, n_f) = (3, 2, 1);
        let (m, w_sqrt) = data(n, m_a, 1.0);
        let d = PsiData {
            a: &m[0],
            b: &m[1],
            c: &m[2],
            l: &m[3],
            w_sqrt: &w_sqrt,
        };
        let zero_n = DMatrix::zeros(n, n);
        let s = DMatrix::identity(m_a, m_a);
        let gamma = DMatrix::from_element(1, 1, 1.0);
        let v = PsiVars {
            p_bar: &zero_n,
            j_bar: &zero_n,
            k_bar_f: &DMatrix::zeros(n_f, n_f),
            k_e: &DMatrix::zeros(m_a, m_a),
            g_bar: &DMatrix::zeros(m_a, n),
            s: &s,
            gamma: &gamma,
        };
        let p = psi(d, v);
        assert_eq!(p.shape(), (2 * n + 2 * m_a, 2 * n + 2 * m_a));
        let p33 = p.view((2 * n, 2 * n), (m_a, m_a));
        assert_eq!(p33, DMatrix::identity(m_a, m_a) * -2.0);
        let p44 = p.view((2 * n + m_a, 2 * n + m_a), (m_a, m_a));
        assert_eq!(p44, -DMatrix::<f64>::identity(m_a, m_a));
        // W = I gives Ψ_34 = S
        let p34 = p.view((2 * n, 2 * n + m_a), (m_a, m_a));
        assert_eq!(p34, s);
    }

    #[test]
    fn structural_zeros() {
        let (n, m_a, n_f) = (3, 2, 1);
        let (m, w_sqrt) = data(n, m_a, 2.0);
        let d = PsiData {
            a: &m[0],
            b: &m[1],
            c: &m[2],
            l: &m[3],
            w_sqrt: &w_sqrt,
        };
        let full = DMatrix::from_fn(n, n, |i, j| 1.0 + (i * n + j) as f64);
        let k_bar_f = DMatrix::from_element(n_f, n_f, 7.0);
        let v = PsiVars {
            p_bar: &full,
            j_bar: &full,
            k_bar_f: &k_bar_f,
            k_e: &DMatrix::from_element(m_a, m_a, 3.0),
            g_bar: &DMatrix::from_element(m_a, n, 5.0),
            s: &DMatrix::identity(m_a, m_a),
            gamma: &DMatrix::from_element(1, 1, 4.0),
        };
        let p = psi(d, v);
        assert!(p.view((0, 2 * n + m_a), (n, m_a)).iter().all(|&x| x == 0.0));
        let z = z_matrix(n, &k_bar_f);
        for i in 0..n {
            for j in 0..n {
                if i < n - n_f || j < n - n_f {
                    assert_eq!(z[(i, j)], 0.0);
                }
            }
        }
        assert_eq!(z[(n - 1, n - 1)], 7.0);
    }

    #[test]
    fn disturbance_border() {
        let psi = DMatrix::<f64>::identity(4, 4) * -1.0;
        let b_w = DMatrix::from_row_slice(1, 1, &[2.0]);
        let r = DMatrix::from_element(1, 1, 3.0);
        let pw = psi_w(&psi, &b_w, &r);
        assert_eq!(pw.shape(), (5, 5));
        assert_eq!(pw[(4, 0)], 2.0);
        assert_eq!(pw[(4, 1)], 2.0);
        assert_eq!(pw[(4, 2)], 0.0);
        assert_eq!(pw[(4, 4)], -3.0);
        assert_eq!(pw[(0, 4)], 2.0);
    }
}
