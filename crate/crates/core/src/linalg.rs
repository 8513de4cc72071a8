//! Dense symmetric linear algebra: spectral decompositions with explicit
//! numerical rank, Moore-Penrose pseudoinverses, orthogonal projectors and
//! square-root factors.
//!
//! Every rank decision in the crate goes through [`Spectrum::cutoff`], which
//! is `tol_rank * max(|lambda|_max, eps)`. The relative tolerance lives on the
//! [`SymMatrix`] so it can be overridden per matrix.

use faer::{Mat, MatRef, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative eigenvalue cutoff for numerical rank.
pub const DEFAULT_RANK_RTOL: f64 = 1e-10;

const SYMMETRY_RTOL: f64 = 1e-12;

/// Largest absolute entry of a matrix, zero for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// A dense real symmetric matrix together with its relative rank tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
    tol_rank: f64,
}

impl SymMatrix {
    /// Validates squareness, finiteness and symmetry to `1e-12 * max|a_ij|`.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::Dimension("symmetric matrix must have dim >= 1".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        let scale = max_abs(&data);
        let asymmetry = max_abs(&(&data - data.transpose()));
        let tolerance = SYMMETRY_RTOL * scale;
        if asymmetry > tolerance {
            return Err(Error::NotSymmetric {
                asymmetry,
                tolerance,
            });
        }
        Ok(Self::symmetrize(data))
    }

    /// Builds from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("matrix rows must all have length equal to the row count".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// Wraps a computed product, averaging out roundoff asymmetry.
    pub(crate) fn symmetrize(data: DMatrix<f64>) -> Self {
        let sym = (&data + data.transpose()) * 0.5;
        Self {
            data: sym,
            tol_rank: DEFAULT_RANK_RTOL,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::symmetrize(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self::symmetrize(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::symmetrize(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// `columns * columns^T`.
    pub fn gram_outer(columns: &DMatrix<f64>) -> Self {
        Self::symmetrize(columns * columns.transpose())
    }

    pub fn with_tol_rank(mut self, tol_rank: f64) -> Self {
        self.tol_rank = tol_rank.max(0.0);
        self
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn tol_rank(&self) -> f64 {
        self.tol_rank
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: &self.data * c,
            tol_rank: self.tol_rank,
        }
    }

    /// Row-major copy of the entries.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.data.row(i).iter().copied().collect())
            .collect()
    }

    /// Spectral decomposition, eigenvalues descending.
    pub fn eig(&self) -> Result<Spectrum> {
        eig_sym(self)
    }
}

/// Eigen-decomposition `A = S diag(lambda) S^T` with descending eigenvalues.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    numeric_rank: usize,
    cutoff: f64,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn numeric_rank(&self) -> usize {
        self.numeric_rank
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// Eigenvalues above the cutoff, descending.
    pub fn positive(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .copied()
            .filter(|&l| l > self.cutoff)
            .collect()
    }

    /// Errors when some eigenvalue is materially negative.
    pub fn require_nonnegative(&self) -> Result<()> {
        let min = self.min();
        if min < -self.cutoff {
            return Err(Error::NotNonnegativeDefinite {
                eigenvalue: min,
                cutoff: self.cutoff,
            });
        }
        Ok(())
    }

    /// Orthonormal basis of the column space (eigenvectors with |lambda| > cutoff).
    pub fn range_basis(&self) -> DMatrix<f64> {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&i| self.eigenvalues[i].abs() > self.cutoff)
            .collect();
        select_columns(&self.eigenvectors, &idx)
    }

    /// Orthogonal projector onto the column space.
    pub fn range_projector(&self) -> SymMatrix {
        SymMatrix::gram_outer(&self.range_basis())
    }

    /// `S f(Lambda) S^T`, where `f` sees each eigenvalue and whether it is
    /// numerically nonzero.
    pub fn map(&self, f: impl Fn(f64, bool) -> f64) -> SymMatrix {
        let n = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for j in 0..n {
            let l = self.eigenvalues[j];
            let fj = f(l, l.abs() > self.cutoff);
            scaled.column_mut(j).scale_mut(fj);
        }
        SymMatrix::symmetrize(scaled * self.eigenvectors.transpose())
    }
}

fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |i, j| m[(i, idx[j])])
}

/// Symmetric eigen-decomposition with numeric rank detection.
pub fn eig_sym(a: &SymMatrix) -> Result<Spectrum> {
    let n = a.dim();
    let eig = to_faer(&a.data)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::NumericalFailure {
            dim: n,
            matrix: format!("{:?}", a.to_rows()),
        })?;
    // faer returns ascending eigenvalues.
    let s = eig.S();
    let eigenvalues: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let u = from_faer(eig.U());
    let order: Vec<usize> = (0..n).rev().collect();
    let eigenvectors = select_columns(&u, &order);
    let scale = eigenvalues
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs()))
        .max(f64::EPSILON);
    let cutoff = a.tol_rank * scale;
    let numeric_rank = eigenvalues.iter().filter(|l| l.abs() > cutoff).count();
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        numeric_rank,
        cutoff,
    })
}

/// Moore-Penrose pseudoinverse by inverting the eigenvalues above the cutoff.
pub fn pinv(a: &SymMatrix) -> Result<SymMatrix> {
    Ok(eig_sym(a)?
        .map(|l, nz| if nz { 1.0 / l } else { 0.0 })
        .with_tol_rank(a.tol_rank))
}

/// `(A^+)^{1/2}` for nonnegative definite `A`.
pub fn pinv_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let spec = eig_sym(a)?;
    spec.require_nonnegative()?;
    Ok(spec
        .map(|l, nz| if nz && l > 0.0 { 1.0 / l.sqrt() } else { 0.0 })
        .with_tol_rank(a.tol_rank))
}

/// Symmetric square root `A^{1/2}` of a nonnegative definite matrix.
pub fn psd_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let spec = eig_sym(a)?;
    spec.require_nonnegative()?;
    Ok(spec
        .map(|l, nz| if nz && l > 0.0 { l.sqrt() } else { 0.0 })
        .with_tol_rank(a.tol_rank))
}

/// `A^{-1/2}` for positive definite `A`.
pub fn inv_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let spec = eig_sym(a)?;
    spec.require_nonnegative()?;
    if spec.numeric_rank() < a.dim() {
        return Err(Error::Singular {
            rank: spec.numeric_rank(),
            dim: a.dim(),
            hint: "an inverse square root needs a positive definite matrix",
        });
    }
    Ok(spec.map(|l, _| 1.0 / l.sqrt()).with_tol_rank(a.tol_rank))
}

/// Inverse of a positive definite matrix through its spectrum.
pub fn pd_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    let spec = eig_sym(a)?;
    if spec.numeric_rank() < a.dim() || spec.min() <= 0.0 {
        return Err(Error::Singular {
            rank: spec.numeric_rank(),
            dim: a.dim(),
            hint: "expected a positive definite matrix",
        });
    }
    Ok(spec.map(|l, _| 1.0 / l).with_tol_rank(a.tol_rank))
}

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin singular value decomposition `m = u diag(s) v^T`, `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    /// Singular values above `DEFAULT_RANK_RTOL * s_max`.
    pub fn rank(&self) -> usize {
        let Some(&top) = self.s.first() else { return 0 };
        let cutoff = DEFAULT_RANK_RTOL * top.max(f64::EPSILON);
        self.s.iter().filter(|&&x| x > cutoff).count()
    }
}

pub fn thin_svd(m: &DMatrix<f64>) -> Result<Svd> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(r, 0),
            s: Vec::new(),
            v: DMatrix::zeros(c, 0),
        });
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix passed to the singular value decomposition"));
    }
    let svd = to_faer(m).thin_svd().map_err(|_| Error::NumericalFailure {
        dim: r.max(c),
        matrix: format!("{m:?}"),
    })?;
    let k = r.min(c);
    let sd = svd.S();
    let s: Vec<f64> = (0..k).map(|i| sd[i]).collect();
    Ok(Svd {
        u: from_faer(svd.U()),
        s,
        v: from_faer(svd.V()),
    })
}

/// Singular values of a rectangular matrix, descending.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    thin_svd(m).map(|s| s.s).unwrap_or_default()
}

/// Numerical rank of a rectangular matrix with the relative cutoff applied to
/// its singular values.
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    thin_svd(m).map(|s| s.rank()).unwrap_or(0)
}

/// Orthonormal basis of the column space of a rectangular matrix.
pub fn column_space_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    match thin_svd(m) {
        Ok(svd) => svd.u.columns(0, svd.rank()).into_owned(),
        Err(_) => DMatrix::zeros(m.nrows(), 0),
    }
}

/// Orthogonal projector onto the column space of `columns` (v x k, k >= 1).
pub fn projector(columns: &DMatrix<f64>) -> Result<SymMatrix> {
    if columns.ncols() == 0 || columns.nrows() == 0 {
        return Err(Error::Dimension("projector needs at least one column and one row".into()));
    }
    if columns.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projector columns"));
    }
    Ok(SymMatrix::gram_outer(&column_space_basis(columns)))
}

/// Full-column-rank factor `K = F D^{1/2}` with `K K^T = A`; columns follow
/// descending eigenvalues.
pub fn sqrt_factor(a: &SymMatrix) -> Result<DMatrix<f64>> {
    let spec = eig_sym(a)?;
    spec.require_nonnegative()?;
    let d = spec.eigenvalues.iter().filter(|&&l| l > spec.cutoff).count();
    let mut k = spec.eigenvectors.columns(0, d).into_owned();
    for j in 0..d {
        k.column_mut(j).scale_mut(spec.eigenvalues[j].sqrt());
    }
    Ok(k)
}

/// Max-entry residual of `columns` outside the range of the projector `p`.
pub fn residual_outside(p: &SymMatrix, columns: &DMatrix<f64>) -> f64 {
    max_abs(&(columns - p.matrix() * columns))
}

/// A generalized inverse of `A` other than the Moore-Penrose one:
/// `A^+ + Z - A^+ A Z A A^+`. Satisfies `A G A = A` for every `Z`.
pub fn generalized_inverse(a: &SymMatrix, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let ap = pinv(a)?;
    let ap = ap.matrix();
    let am = a.matrix();
    Ok(ap + z - ap * am * z * am * ap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        max_abs(&(a - b)) <= tol
    }

    fn centering(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        assert!(matches!(
            SymMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.1, 1.0])),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let s = eig_sym(&SymMatrix::identity(3)).unwrap();
        assert_eq!(s.eigenvalues(), &[1.0, 1.0, 1.0]);
        assert_eq!(s.numeric_rank(), 3);

        let s = eig_sym(&SymMatrix::from_diagonal(&[2.0, 0.0])).unwrap();
        assert_eq!(s.eigenvalues(), &[2.0, 0.0]);
        assert_eq!(s.numeric_rank(), 1);
    }

    /// Roots of det(A - x I) for a 3x3 matrix found by bisection on the
    /// characteristic cubic, independent of the eigen-solver.
    fn cubic_roots(a: &DMatrix<f64>) -> Vec<f64> {
        let det = |x: f64| (a - DMatrix::identity(3, 3) * x).determinant();
        let bound = 1.0 + max_abs(a) * 3.0;
        let steps = 3000;
        let mut roots = Vec::new();
        let h = 2.0 * bound / steps as f64;
        let mut lo = -bound;
        let mut flo = det(lo);
        for k in 1..=steps {
            let hi = -bound + h * k as f64;
            let fhi = det(hi);
            if flo == 0.0 {
                roots.push(lo);
            } else if flo * fhi < 0.0 {
                let (mut l, mut r, mut fl) = (lo, hi, flo);
                for _ in 0..200 {
                    let m = 0.5 * (l + r);
                    let fm = det(m);
                    if fl * fm <= 0.0 {
                        r = m;
                    } else {
                        l = m;
                        fl = fm;
                    }
                }
                roots.push(0.5 * (l + r));
            }
            lo = hi;
            flo = fhi;
        }
        roots.sort_by(|a, b| b.total_cmp(a));
        roots
    }

    #[test]
    fn eig_weight_matrix_of_two_contrasts() {
        let a = sym(&[&[1.0, -0.5, -0.5], &[-0.5, 0.5, 0.0], &[-0.5, 0.0, 0.5]]);
        let oracle = cubic_roots(a.matrix());
        assert_eq!(oracle.len(), 3);
        let s = eig_sym(&a).unwrap();
        for (x, y) in s.eigenvalues().iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        assert!((oracle[0] - 1.5).abs() < 1e-10);
        assert!((oracle[1] - 0.5).abs() < 1e-10);
        assert!(oracle[2].abs() < 1e-10);
        assert_eq!(s.numeric_rank(), 2);
    }

    #[test]
    fn pinv_examples() {
        let p = pinv(&SymMatrix::from_diagonal(&[2.0, 0.0])).unwrap();
        assert!(close(p.matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]), 1e-15));

        let c = SymMatrix::new(centering(3)).unwrap();
        assert!(close(pinv(&c).unwrap().matrix(), &centering(3), 1e-12));

        let w2_inv = sym(&[&[2.0, 2.0, 2.0], &[2.0, 4.0, 1.0], &[2.0, 1.0, 4.0]]);
        let w2 = DMatrix::from_row_slice(
            3,
            3,
            &[2.5, -1.0, -1.0, -1.0, 2.0 / 3.0, 1.0 / 3.0, -1.0, 1.0 / 3.0, 2.0 / 3.0],
        );
        assert!(close(pinv(&w2_inv).unwrap().matrix(), &w2, 1e-12));
    }

    #[test]
    fn pinv_sqrt_examples() {
        assert!(close(
            pinv_sqrt(&SymMatrix::identity(3)).unwrap().matrix(),
            &DMatrix::identity(3, 3),
            1e-15
        ));
        let r = pinv_sqrt(&SymMatrix::from_diagonal(&[4.0, 0.0])).unwrap();
        assert!(close(r.matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]), 1e-15));
        assert!(matches!(
            pinv_sqrt(&SymMatrix::from_diagonal(&[1.0, -1.0])),
            Err(Error::NotNonnegativeDefinite { .. })
        ));
    }

    #[test]
    fn projector_examples() {
        let ones = DMatrix::from_element(3, 1, 1.0);
        assert!(close(
            projector(&ones).unwrap().matrix(),
            &DMatrix::from_element(3, 3, 1.0 / 3.0),
            1e-12
        ));
        assert!(close(
            projector(&DMatrix::identity(3, 3)).unwrap().matrix(),
            &DMatrix::identity(3, 3),
            1e-12
        ));
        let basis = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        assert!(close(projector(&basis).unwrap().matrix(), &centering(3), 1e-12));
        assert!(projector(&DMatrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn sqrt_factor_examples() {
        let k = sqrt_factor(&SymMatrix::identity(2)).unwrap();
        assert!(close(&(k.transpose() * &k), &DMatrix::identity(2, 2), 1e-12));
        assert!(close(&(&k * k.transpose()), &DMatrix::identity(2, 2), 1e-12));

        let k = sqrt_factor(&SymMatrix::from_diagonal(&[4.0, 0.0, 0.0])).unwrap();
        assert_eq!(k.shape(), (3, 1));
        assert!(close(&k.abs(), &DMatrix::from_column_slice(3, 1, &[2.0, 0.0, 0.0]), 1e-15));

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let q = DMatrix::from_row_slice(3, 2, &[-s, -s, s, 0.0, 0.0, s]);
        let a = SymMatrix::gram_outer(&q);
        let k = sqrt_factor(&a).unwrap();
        assert_eq!(k.ncols(), 2);
        assert!(close(&(&k * k.transpose()), a.matrix(), 1e-12));
    }

    #[test]
    fn generalized_inverse_reproduces_matrix() {
        let a = SymMatrix::new(centering(4) * 2.0).unwrap();
        let z = DMatrix::from_fn(4, 4, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.7);
        let g = generalized_inverse(&a, &z).unwrap();
        assert!(close(&(a.matrix() * &g * a.matrix()), a.matrix(), 1e-12));
        assert!(max_abs(&(&g - pinv(&a).unwrap().matrix())) > 1e-3);
    }

    #[test]
    fn inverse_sqrt_requires_full_rank() {
        assert!(matches!(
            inv_sqrt(&SymMatrix::from_diagonal(&[1.0, 0.0])),
            Err(Error::Singular { .. })
        ));
        let r = inv_sqrt(&SymMatrix::from_diagonal(&[4.0, 1.0])).unwrap();
        assert!(close(r.matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]), 1e-15));
    }

    #[test]
    fn repeated_eigenvalues_are_resolved() {
        let data = [
            0.8685396870576199, -0.009068127476480562, 0.13168746957672864, -0.09413269719382886, 0.04597881429716148,
            -0.009068127476480562, 0.7251244473474415, -0.1200473827951841, -0.08138548165631973, 0.20189090031892482,
            0.13168746957672864, -0.1200473827951841, 0.6300815049893903, -0.06739449563686284, -0.10751252165586533,
            -0.09413269719382886, -0.08138548165631973, -0.06739449563686284, 0.8219437159255254, -0.0234124098831505,
            0.04597881429716148, 0.20189090031892482, -0.10751252165586533, -0.0234124098831505, 0.7043106446800251,
        ];
        let m = DMatrix::from_column_slice(5, 5, &data);
        let a = SymMatrix::symmetrize(m.clone());
        let spec = a.eig().unwrap();
        for (l, e) in spec.eigenvalues().iter().zip([1.0, 1.0, 0.75, 0.5, 0.5]) {
            assert!((l - e).abs() < 1e-13, "{l} vs {e}");
        }
        let back = spec.map(|l, _| l);
        assert!(close(back.matrix(), &m, 1e-13));
        let svd = thin_svd(&m).unwrap();
        for (s, e) in svd.s.iter().zip([1.0, 1.0, 0.75, 0.5, 0.5]) {
            assert!((s - e).abs() < 1e-13, "{s} vs {e}");
        }
        let us = DMatrix::from_fn(5, 5, |i, j| svd.u[(i, j)] * svd.s[j]);
        assert!(close(&(us * svd.v.transpose()), &m, 1e-13));
    }
}
