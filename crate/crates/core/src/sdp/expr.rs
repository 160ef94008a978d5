use std::collections::BTreeMap;

use nalgebra::DMatrix;

/// Matrix algebra shared by numeric matrices and affine expressions in decision
/// variables, so that block formulas are written once and evaluated either way.
pub trait MatrixExpr: Clone + Sized {
    fn zeros(rows: usize, cols: usize) -> Self;
    fn constant(m: &DMatrix<f64>) -> Self;
    fn shape(&self) -> (usize, usize);
    fn plus(&self, other: &Self) -> Self;
    fn minus(&self, other: &Self) -> Self;
    fn scale(&self, s: f64) -> Self;
    /// `m · self`
    fn lmul(&self, m: &DMatrix<f64>) -> Self;
    /// `self · m`
    fn rmul(&self, m: &DMatrix<f64>) -> Self;
    fn tr(&self) -> Self;
    /// `self · I_k` for a 1×1 expression.
    fn times_identity(&self, k: usize) -> Self;
    fn block(rows: &[Vec<Self>]) -> Self;

    fn neg(&self) -> Self {
        self.scale(-1.0)
    }

    /// `self + selfᵀ`
    fn he(&self) -> Self {
        self.plus(&self.tr())
    }

    /// Row `i` as a 1×cols expression.
    fn row(&self, i: usize) -> Self {
        let (rows, _) = self.shape();
        let mut sel = DMatrix::zeros(1, rows);
        sel[(0, i)] = 1.0;
        self.lmul(&sel)
    }

    /// Entry `(i, j)` as a 1×1 expression.
    fn entry(&self, i: usize, j: usize) -> Self {
        let (_, cols) = self.shape();
        let mut sel = DMatrix::zeros(cols, 1);
        sel[(j, 0)] = 1.0;
        self.row(i).rmul(&sel)
    }
}

impl MatrixExpr for DMatrix<f64> {
    fn zeros(rows: usize, cols: usize) -> Self {
        DMatrix::zeros(rows, cols)
    }
    fn constant(m: &DMatrix<f64>) -> Self {
        m.clone()
    }
    fn shape(&self) -> (usize, usize) {
        DMatrix::shape(self)
    }
    fn plus(&self, other: &Self) -> Self {
        self + other
    }
    fn minus(&self, other: &Self) -> Self {
        self - other
    }
    fn scale(&self, s: f64) -> Self {
        self * s
    }
    fn lmul(&self, m: &DMatrix<f64>) -> Self {
        m * self
    }
    fn rmul(&self, m: &DMatrix<f64>) -> Self {
        self * m
    }
    fn tr(&self) -> Self {
        self.transpose()
    }
    fn times_identity(&self, k: usize) -> Self {
        assert_eq!(DMatrix::shape(self), (1, 1));
        DMatrix::identity(k, k) * self[(0, 0)]
    }
    fn block(rows: &[Vec<Self>]) -> Self {
        let refs: Vec<Vec<&DMatrix<f64>>> = rows.iter().map(|r| r.iter().collect()).collect();
        let slices: Vec<&[&DMatrix<f64>]> = refs.iter().map(|r| r.as_slice()).collect();
        crate::linalg::block(&slices)
    }
}

/// `constant + Σ_k x_k · coeff_k` over the scalar decision variables `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineExpr {
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl AffineExpr {
    pub(crate) fn from_parts(constant: DMatrix<f64>, terms: BTreeMap<usize, DMatrix<f64>>) -> Self {
        Self { constant, terms }
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    /// Coefficient matrices keyed by scalar variable index.
    pub fn terms(&self) -> &BTreeMap<usize, DMatrix<f64>> {
        &self.terms
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (&k, c) in &self.terms {
            out += c * x[k];
        }
        out
    }

    /// Scalar value of a 1×1 expression.
    pub fn eval_scalar(&self, x: &[f64]) -> f64 {
        self.eval(x)[(0, 0)]
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    fn map_terms(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        let constant = f(&self.constant);
        let terms = self
            .terms
            .iter()
            .filter_map(|(&k, c)| {
                let m = f(c);
                (m.iter().any(|&v| v != 0.0)).then_some((k, m))
            })
            .collect();
        Self { constant, terms }
    }

    fn combine(&self, other: &Self, sign: f64) -> Self {
        assert_eq!(self.constant.shape(), other.constant.shape(), "shape mismatch in sum");
        let mut terms = self.terms.clone();
        for (&k, c) in &other.terms {
            terms
                .entry(k)
                .and_modify(|t| *t += c * sign)
                .or_insert_with(|| c * sign);
        }
        Self {
            constant: &self.constant + &other.constant * sign,
            terms,
        }
    }
}

impl MatrixExpr for AffineExpr {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(&DMatrix::zeros(rows, cols))
    }
    fn constant(m: &DMatrix<f64>) -> Self {
        Self {
            constant: m.clone(),
            terms: BTreeMap::new(),
        }
    }
    fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }
    fn plus(&self, other: &Self) -> Self {
        self.combine(other, 1.0)
    }
    fn minus(&self, other: &Self) -> Self {
        self.combine(other, -1.0)
    }
    fn scale(&self, s: f64) -> Self {
        self.map_terms(|c| c * s)
    }
    fn lmul(&self, m: &DMatrix<f64>) -> Self {
        self.map_terms(|c| m * c)
    }
    fn rmul(&self, m: &DMatrix<f64>) -> Self {
        self.map_terms(|c| c * m)
    }
    fn tr(&self) -> Self {
        self.map_terms(|c| c.transpose())
    }
    fn times_identity(&self, k: usize) -> Self {
        assert_eq!(self.shape(), (1, 1));
        self.map_terms(|c| DMatrix::identity(k, k) * c[(0, 0)])
    }
    fn block(rows: &[Vec<Self>]) -> Self {
        let heights: Vec<usize> = rows.iter().map(|r| r[0].shape().0).collect();
        let widths: Vec<usize> = rows[0].iter().map(|b| b.shape().1).collect();
        let (h, w) = (heights.iter().sum(), widths.iter().sum());
        let mut constant = DMatrix::zeros(h, w);
        let mut terms: BTreeMap<usize, DMatrix<f64>> = BTreeMap::new();
        let mut r0 = 0;
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), widths.len(), "ragged block row {i}");
            let mut c0 = 0;
            for (j, b) in row.iter().enumerate() {
                assert_eq!(b.shape(), (heights[i], widths[j]), "block ({i},{j}) has wrong shape");
                constant.view_mut((r0, c0), b.shape()).copy_from(&b.constant);
                for (&k, c) in &b.terms {
                    terms
                        .entry(k)
                        .or_insert_with(|| DMatrix::zeros(h, w))
                        .view_mut((r0, c0), c.shape())
                        .copy_from(c);
                }
                c0 += widths[j];
            }
            r0 += heights[i];
        }
        Self { constant, terms }
    }
}
