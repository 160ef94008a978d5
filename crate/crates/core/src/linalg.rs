//! Dense linear-algebra helpers shared by the model, synthesis and verification code.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Rank decisions: singular values below this fraction of the largest one count as zero.
pub const RANK_TOL: f64 = 1e-8;

/// Largest condition number accepted when inverting recovered certificate matrices.
pub const COND_LIMIT: f64 = 1e8;

/// Singular values (descending) together with an orthonormal basis of the kernel.
///
/// The matrix is zero-padded to a square one so the SVD yields a complete set of
/// right singular vectors.
pub fn rank_and_kernel(m: &DMatrix<f64>) -> (usize, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    let size = rows.max(cols);
    let mut padded = DMatrix::zeros(size, cols);
    padded.rows_mut(0, rows).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    let rank = order
        .iter()
        .filter(|&&i| smax > 0.0 && svd.singular_values[i] > RANK_TOL * smax)
        .count();

    let kernel_idx = &order[rank..];
    let mut basis = DMatrix::zeros(cols, kernel_idx.len());
    for (k, &i) in kernel_idx.iter().enumerate() {
        let mut v: DVector<f64> = v_t.row(i).transpose();
        // fix the sign so the largest-magnitude entry is positive
        let pivot = v.iamax();
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        basis.set_column(k, &v);
    }
    (rank, basis)
}

pub fn rank(m: &DMatrix<f64>) -> usize {
    rank_and_kernel(m).0
}

/// Orthonormal basis `N` of the kernel of a full-row-rank matrix, so that `M N = 0`.
pub fn nullspace_basis(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rank, basis) = rank_and_kernel(m);
    if rank < m.nrows() {
        return Err(Error::InfluenceRankDeficient { rank, rows: m.nrows() });
    }
    Ok(basis)
}

/// Right pseudo-inverse `M^T (M M^T)^{-1}` of a full-row-rank matrix, computed from the SVD.
pub fn right_pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r = rank(m);
    if r < m.nrows() {
        return Err(Error::InfluenceRankDeficient {
            rank: r,
            rows: m.nrows(),
        });
    }
    let svd = m.clone().svd(true, true);
    svd.pseudo_inverse(0.0)
        .map_err(|e| Error::Solver(format!("pseudo-inverse failed: {e}")))
}

/// Orthonormal basis `C̄⊥` of the kernel of `C̄` (`C̄ C̄⊥ = 0`), requiring full row rank.
pub fn orth_complement(c_bar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rank, basis) = rank_and_kernel(c_bar);
    if rank < c_bar.nrows() {
        return Err(Error::CbarRankDeficient {
            rank,
            rows: c_bar.nrows(),
        });
    }
    Ok(basis)
}

/// Maximum real part of the eigenvalues of a square matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return f64::NEG_INFINITY;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    sym(m).symmetric_eigenvalues()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Inverse of a square matrix, refusing matrices whose condition number exceeds `COND_LIMIT`.
pub fn checked_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(Error::Singular {
            what: what.to_string(),
            cond,
            limit: COND_LIMIT,
        });
    }
    m.clone().try_inverse().ok_or_else(|| Error::Singular {
        what: what.to_string(),
        cond,
        limit: COND_LIMIT,
    })
}

/// Assemble a dense matrix from a grid of blocks. All blocks in a block-row share a
/// height and all blocks in a block-column share a width.
pub fn block(rows: &[&[&DMatrix<f64>]]) -> DMatrix<f64> {
    let heights: Vec<usize> = rows.iter().map(|r| r[0].nrows()).collect();
    let widths: Vec<usize> = rows[0].iter().map(|b| b.ncols()).collect();
    let mut out = DMatrix::zeros(heights.iter().sum(), widths.iter().sum());
    let mut r0 = 0;
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), widths.len(), "ragged block row {i}");
        let mut c0 = 0;
        for (j, b) in row.iter().enumerate() {
            assert_eq!(b.shape(), (heights[i], widths[j]), "block ({i},{j}) has wrong shape");
            out.view_mut((r0, c0), b.shape()).copy_from(*b);
            c0 += widths[j];
        }
        r0 += heights[i];
    }
    out
}

pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let c: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(r, c);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r0, c0), b.shape()).copy_from(*b);
        r0 += b.nrows();
        c0 += b.ncols();
    }
    out
}

/// Numerical rank of a complex matrix.
fn complex_rank(m: &DMatrix<Complex<f64>>) -> usize {
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| smax > 0.0 && s > RANK_TOL * smax).count()
}

/// PBH test: `rank [A - λI, B] = n` for every eigenvalue with nonnegative real part.
pub fn pbh_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let ac: DMatrix<Complex<f64>> = a.map(|v| Complex::new(v, 0.0));
    let bc: DMatrix<Complex<f64>> = b.map(|v| Complex::new(v, 0.0));
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.re < 0.0 {
            continue;
        }
        let mut m = DMatrix::zeros(n, n + b.ncols());
        let shifted = &ac - DMatrix::<Complex<f64>>::identity(n, n) * *lambda;
        m.columns_mut(0, n).copy_from(&shifted);
        m.columns_mut(n, b.ncols()).copy_from(&bc);
        if complex_rank(&m) < n {
            return false;
        }
    }
    true
}

/// Detectability of `(C, A)` by duality with stabilizability of `(A^T, C^T)`.
pub fn pbh_detectable(c: &DMatrix<f64>, a: &DMatrix<f64>) -> bool {
    pbh_stabilizable(&a.transpose(), &c.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_kernel() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let n = nullspace_basis(&m).unwrap();
        assert_eq!(n.shape(), (2, 1));
        assert!(n[(0, 0)].abs() < 1e-15);
        assert!((n[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_influence_rejected() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(
            nullspace_basis(&m),
            Err(Error::InfluenceRankDeficient { rank: 1, rows: 2 })
        ));
        assert!(right_pseudo_inverse(&m).is_err());
    }

    #[test]
    fn trivial_pseudo_inverse() {
        let m = DMatrix::from_row_slice(1, 2, &[2.0, 0.0]);
        let p = right_pseudo_inverse(&m).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15);
        assert!(p[(1, 0)].abs() < 1e-15);
    }

    #[test]
    fn orth_complement_of_last_axis() {
        let c = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
        let perp = orth_complement(&c).unwrap();
        assert_eq!(perp.shape(), (3, 2));
        assert!(perp.row(2).norm() < 1e-15);
        let gram = perp.transpose() * &perp;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn orth_complement_rank_deficient() {
        let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(matches!(orth_complement(&c), Err(Error::CbarRankDeficient { .. })));
    }

    #[test]
    fn abscissa_examples() {
        assert_eq!(spectral_abscissa(&(-DMatrix::<f64>::identity(2, 2))), -1.0);
        let jordan = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(spectral_abscissa(&jordan), 0.0);
    }

    #[test]
    fn pbh_double_integrator() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(pbh_stabilizable(&a, &b));
        assert!(pbh_detectable(&c, &a));
        let b_bad = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(!pbh_stabilizable(&a, &b_bad));
    }

    #[test]
    fn checked_inverse_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-12]);
        assert!(matches!(checked_inverse(&m, "test"), Err(Error::Singular { .. })));
    }

    #[test]
    fn block_assembly() {
        let a = DMatrix::from_element(1, 2, 1.0);
        let b = DMatrix::from_element(1, 1, 2.0);
        let c = DMatrix::from_element(2, 2, 3.0);
        let d = DMatrix::from_element(2, 1, 4.0);
        let m = block(&[&[&a, &b], &[&c, &d]]);
        assert_eq!(m.shape(), (3, 3));
        assert_eq!(m[(0, 2)], 2.0);
        assert_eq!(m[(2, 2)], 4.0);
        assert_eq!(m[(1, 0)], 3.0);
    }
}
