//! Generalized weight matrices and everything computed from them: weights
//! and weighted variances of single functions, the weighted information
//! matrix `C_W = (K^T C^- K)^{-1}`, estimation equivalence, the weight
//! matrix `Q B Q^T` of a system, and primary versus secondary weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimable::{require_in_space, scale_system, EstimableSystem};
use crate::linalg::{self, eig_sym, max_abs, residual_outside, SymMatrix};
use crate::model::{DesignSpec, EstimationSpace, Information, SPACE_RTOL};

/// Tolerance on `w(q_i) >= b_i`.
pub const DOMINANCE_TOL: f64 = 1e-9;

/// A validated nonnegative definite weight matrix with `C(W) ⊆ E` and its
/// full-column-rank factor `K` (`K K^T = W`).
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    w: SymMatrix,
    /// Orthonormal basis of `C(W)`, eigenvectors in descending order.
    f: DMatrix<f64>,
    /// Positive eigenvalues of `W`, descending.
    lambda: Vec<f64>,
    k: DMatrix<f64>,
    w_pinv: SymMatrix,
    range: SymMatrix,
    space_checked: bool,
}

impl WeightMatrix {
    /// Validates `W` against `E` and factors it.
    pub fn new(raw: SymMatrix, space: &EstimationSpace) -> Result<Self> {
        check_size(raw.dim(), space)?;
        eig_sym(&raw)?.require_nonnegative()?;
        let residual = space.residual(raw.matrix());
        let allowed = SPACE_RTOL * raw.max_abs();
        if residual > allowed {
            return Err(Error::OutsideEstimationSpace { residual, allowed });
        }
        // Factor in coordinates of E so that K stays inside E even when W
        // has eigenvalues close to zero.
        let b = space.basis();
        let inner = eig_sym(&SymMatrix::symmetrize(b.transpose() * raw.matrix() * b))?;
        let d = inner.eigenvalues().iter().filter(|&&l| l > inner.cutoff()).count();
        let f = b * inner.eigenvectors().columns(0, d);
        Self::from_parts(raw, f, inner.eigenvalues()[..d].to_vec())
    }

    /// `W = G G^T` for `C(G) ⊆ E`, factored through the SVD of `G`. This
    /// keeps the accuracy of the small eigenvalues of `W` that forming
    /// `G G^T` first would lose.
    pub fn from_factor(g: &DMatrix<f64>, space: &EstimationSpace) -> Result<Self> {
        check_size(g.nrows(), space)?;
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("weight factor"));
        }
        let residual = space.residual(g);
        let allowed = SPACE_RTOL * max_abs(g);
        if residual > allowed {
            return Err(Error::OutsideEstimationSpace { residual, allowed });
        }
        let b = space.basis();
        let svd = linalg::thin_svd(&(b.transpose() * g))?;
        let d = svd.rank();
        let f = b * svd.u.columns(0, d);
        let lambda = svd.s[..d].iter().map(|s| s * s).collect();
        Self::from_parts(SymMatrix::gram_outer(g), f, lambda)
    }

    fn from_parts(w: SymMatrix, f: DMatrix<f64>, lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidWeight("weight matrix has rank zero".into()));
        }
        let mut k = f.clone();
        let mut scaled_inv = f.clone();
        for (j, &l) in lambda.iter().enumerate() {
            k.column_mut(j).scale_mut(l.sqrt());
            scaled_inv.column_mut(j).scale_mut(1.0 / l);
        }
        let w_pinv = SymMatrix::symmetrize(&scaled_inv * f.transpose());
        let range = SymMatrix::gram_outer(&f);
        Ok(Self {
            w,
            f,
            lambda,
            k,
            w_pinv,
            range,
            space_checked: true,
        })
    }

    /// Orthonormal basis of `C(W)` matching the columns of [`factor`](Self::factor).
    pub fn range_basis(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// Positive eigenvalues of `W`, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    /// `W^{1/2}`, restricted to `C(W)`.
    pub fn sqrt(&self) -> SymMatrix {
        let mut scaled = self.f.clone();
        for (j, &l) in self.lambda.iter().enumerate() {
            scaled.column_mut(j).scale_mut(l.sqrt());
        }
        SymMatrix::symmetrize(scaled * self.f.transpose())
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.w
    }

    /// `K` with `K K^T = W`, columns in descending eigenvalue order.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn pinv(&self) -> &SymMatrix {
        &self.w_pinv
    }

    /// Projector onto `C(W)`.
    pub fn range_projector(&self) -> &SymMatrix {
        &self.range
    }

    /// Numeric rank `d`.
    pub fn rank(&self) -> usize {
        self.k.ncols()
    }

    pub fn v(&self) -> usize {
        self.w.dim()
    }

    pub fn space_checked(&self) -> bool {
        self.space_checked
    }

    /// `q ∈ C(W)` up to `1e-8 * ||q||`.
    pub fn contains(&self, q: &DVector<f64>) -> bool {
        in_span(&self.range, q)
    }

    /// The weight `(q^T W^- q)^{-1}`, or [`Weight::OutsideSpan`].
    pub fn weight_of(&self, q: &DVector<f64>) -> Result<Weight> {
        weight_of(self, q)
    }
}

fn check_size(v: usize, space: &EstimationSpace) -> Result<()> {
    if v != space.v() {
        return Err(Error::Dimension(format!(
            "weight matrix is {v}x{v}, estimation space has v = {}",
            space.v()
        )));
    }
    Ok(())
}

/// Alias matching the constructor naming used by the CLI.
pub fn make_weight_matrix(raw: SymMatrix, space: &EstimationSpace) -> Result<WeightMatrix> {
    WeightMatrix::new(raw, space)
}

fn in_span(range: &SymMatrix, q: &DVector<f64>) -> bool {
    (q - range.matrix() * q).norm() <= SPACE_RTOL * q.norm()
}

/// The weight a weight matrix places on one function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    /// `q ∈ C(W)` and the weight is `(q^T W^- q)^{-1} > 0`.
    Positive(f64),
    /// `q` is outside `C(W)`; the function carries no weight.
    OutsideSpan,
}

impl Weight {
    pub fn value(self) -> Option<f64> {
        match self {
            Weight::Positive(w) => Some(w),
            Weight::OutsideSpan => None,
        }
    }
}

/// `(q^T W^+ q)^{-1}` when `q ∈ C(W)`.
pub fn weight_of(w: &WeightMatrix, q: &DVector<f64>) -> Result<Weight> {
    weight_with_ginv(w, w.pinv().matrix(), q)
}

/// [`weight_of`] evaluated with an arbitrary generalized inverse of `W`.
pub fn weight_with_ginv(w: &WeightMatrix, w_ginv: &DMatrix<f64>, q: &DVector<f64>) -> Result<Weight> {
    if q.len() != w.v() {
        return Err(Error::Dimension(format!("vector has length {}, expected {}", q.len(), w.v())));
    }
    if q.iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroVector);
    }
    if !w.contains(q) {
        return Ok(Weight::OutsideSpan);
    }
    let quad = q.dot(&(w_ginv * q));
    if quad <= 0.0 {
        return Err(Error::Internal(format!(
            "q^T W^- q = {quad:e} for a nonzero q inside C(W)"
        )));
    }
    Ok(Weight::Positive(1.0 / quad))
}

/// `(q^T W^+ q)^{-1} * q^T C^+ q`.
pub fn weighted_variance(spec: &DesignSpec, w: &WeightMatrix, q: &DVector<f64>) -> Result<f64> {
    weighted_variance_from(&Information::of(spec)?, w, q)
}

pub fn weighted_variance_from(info: &Information, w: &WeightMatrix, q: &DVector<f64>) -> Result<f64> {
    weighted_variance_with(info, w, info.pinv().matrix(), w.pinv().matrix(), q)
}

/// Weighted variance with explicit generalized inverses of `C` and `W`.
pub fn weighted_variance_with(
    info: &Information,
    w: &WeightMatrix,
    c_ginv: &DMatrix<f64>,
    w_ginv: &DMatrix<f64>,
    q: &DVector<f64>,
) -> Result<f64> {
    let weight = weight_with_ginv(w, w_ginv, q)?
        .value()
        .ok_or(Error::OutsideWeightSpan)?;
    let qm = DMatrix::from_column_slice(q.len(), 1, q.as_slice());
    info.require_feasible(&qm)?;
    Ok(weight * q.dot(&(c_ginv * q)))
}

/// `C_W(xi) = (K^T C^+ K)^{-1}`, a `d x d` positive definite matrix.
pub fn weighted_info_matrix(spec: &DesignSpec, w: &WeightMatrix) -> Result<SymMatrix> {
    weighted_info_from(&Information::of(spec)?, w)
}

pub fn weighted_info_from(info: &Information, w: &WeightMatrix) -> Result<SymMatrix> {
    if w.v() != info.v() {
        return Err(Error::Dimension(format!(
            "weight matrix has v = {}, design has v = {}",
            w.v(),
            info.v()
        )));
    }
    info.require_feasible(w.factor())?;
    // (K^T C^+ K)^{-1} = L^{-1/2} (F^T C^+ F)^{-1} L^{-1/2} with K = F L^{1/2};
    // the graded form keeps the large eigenvalues accurate.
    let f = w.range_basis();
    let inner = linalg::pd_inverse(&SymMatrix::symmetrize(f.transpose() * info.pinv().matrix() * f))?;
    let scale: Vec<f64> = w.eigenvalues().iter().map(|l| 1.0 / l.sqrt()).collect();
    let d = scale.len();
    Ok(SymMatrix::symmetrize(DMatrix::from_fn(d, d, |i, j| {
        scale[i] * inner.get(i, j) * scale[j]
    })))
}

/// Decomposition of a weighted variance as a convex
/// combination of inverse eigenvalues of `C_W`.
#[derive(Debug, Clone)]
pub struct VarianceDecomposition {
    /// `g_i^2 / ||g||^2`, aligned with `inverse_eigenvalues`.
    pub coefficients: Vec<f64>,
    /// `1 / lambda_i(C_W)` for descending `lambda_i`.
    pub inverse_eigenvalues: Vec<f64>,
    /// The weighted variance computed directly.
    pub direct: f64,
}

impl VarianceDecomposition {
    pub fn reconstructed(&self) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.inverse_eigenvalues)
            .map(|(c, l)| c * l)
            .sum()
    }
}

/// Writes `q = K h`, rotates `h` into the eigenbasis of `C_W` and returns the
/// convex weights.
pub fn variance_decomposition(info: &Information, w: &WeightMatrix, q: &DVector<f64>) -> Result<VarianceDecomposition> {
    let direct = weighted_variance_from(info, w, q)?;
    let k = w.factor();
    let ktk = SymMatrix::symmetrize(k.transpose() * k);
    let h = linalg::pd_inverse(&ktk)?.matrix() * (k.transpose() * q);
    let cw = weighted_info_from(info, w)?;
    let spec = eig_sym(&cw)?;
    let g = spec.eigenvectors().transpose() * h;
    let gg = g.norm_squared();
    Ok(VarianceDecomposition {
        coefficients: g.iter().map(|x| x * x / gg).collect(),
        inverse_eigenvalues: spec.eigenvalues().iter().map(|l| 1.0 / l).collect(),
        direct,
    })
}

/// Outcome of an estimation-equivalence test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence {
    pub equivalent: bool,
    /// Least-squares constant in `M1 ≈ c M2`.
    pub c: f64,
    /// `max|M1 - c M2| / max|M1|`.
    pub relative_residual: f64,
}

/// Compares `P_S W1^+ P_S` with `P_S W2^+ P_S`. `S` is the common column
/// space, or the smaller one when the column spaces are nested.
pub fn estimation_equivalent(w1: &WeightMatrix, w2: &WeightMatrix) -> Result<Equivalence> {
    if w1.v() != w2.v() {
        return Err(Error::Dimension("weight matrices have different sizes".into()));
    }
    let one_in_two = residual_outside(w2.range_projector(), w1.factor())
        <= SPACE_RTOL * max_abs(w1.factor());
    let two_in_one = residual_outside(w1.range_projector(), w2.factor())
        <= SPACE_RTOL * max_abs(w2.factor());
    let ps = match (one_in_two, two_in_one) {
        (true, _) => w1.range_projector().matrix(),
        (false, true) => w2.range_projector().matrix(),
        (false, false) => return Err(Error::ColumnSpaceMismatch),
    };
    let m1 = ps * w1.pinv().matrix() * ps;
    let m2 = ps * w2.pinv().matrix() * ps;
    let c = (&m1 * &m2).trace() / (&m2 * &m2).trace();
    let scale = max_abs(&m1);
    let relative_residual = max_abs(&(&m1 - &m2 * c)) / scale;
    Ok(Equivalence {
        equivalent: c > 0.0 && relative_residual <= SPACE_RTOL,
        c,
        relative_residual,
    })
}

/// `W_Q~ = Q B Q^T` for a system inside `E`.
pub fn weight_matrix_from_system(sys: &EstimableSystem, space: &EstimationSpace) -> Result<WeightMatrix> {
    require_in_space(sys, space)?;
    WeightMatrix::from_factor(&scale_system(sys), space)
}

/// Where a weight-report entry came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    /// 0-based column of the system.
    Column(usize),
    /// 0-based index into the caller's queries.
    Query(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightEntry {
    pub source: WeightSource,
    pub q: Vec<f64>,
    pub primary: Option<f64>,
    pub in_span: bool,
    pub secondary: Weight,
}

/// Primary and secondary weights for a system's columns and extra queries.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub entries: Vec<WeightEntry>,
}

impl WeightReport {
    pub fn columns(&self) -> impl Iterator<Item = &WeightEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.source, WeightSource::Column(_)))
    }

    pub fn queries(&self) -> impl Iterator<Item = &WeightEntry> {
        self.entries
            .iter()
            .filter(|e| matches!(e.source, WeightSource::Query(_)))
    }
}

/// Secondary weights `w(q) = (q^T W_Q~^+ q)^{-1}` for every `q ∈ C(Q)`,
/// with the system's own columns listed first.
pub fn secondary_weights(sys: &EstimableSystem, queries: &[DVector<f64>]) -> Result<WeightReport> {
    let w = WeightMatrix::from_factor(&scale_system(sys), &EstimationSpace::full(sys.v())?)?;
    let mut entries = Vec::with_capacity(sys.s() + queries.len());
    for (i, col) in sys.q().column_iter().enumerate() {
        let q: DVector<f64> = col.into_owned();
        let secondary = weight_of(&w, &q)?;
        entries.push(WeightEntry {
            source: WeightSource::Column(i),
            q: q.iter().copied().collect(),
            primary: Some(sys.weights()[i]),
            in_span: true,
            secondary,
        });
    }
    for (j, q) in queries.iter().enumerate() {
        let secondary = weight_of(&w, q)?;
        entries.push(WeightEntry {
            source: WeightSource::Query(j),
            q: q.iter().copied().collect(),
            primary: None,
            in_span: matches!(secondary, Weight::Positive(_)),
            secondary,
        });
    }
    Ok(WeightReport { entries })
}

/// `w(q_i)` against `b_i` for one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dominance {
    pub column: usize,
    pub primary: f64,
    pub secondary: f64,
    /// `q_i` is a linear combination of the other columns.
    pub dependent: bool,
    /// `w(q_i) > b_i` beyond the tolerance.
    pub strict: bool,
}

/// Checks `w(q_i) >= b_i` for every column; a violation is a numerical bug.
pub fn check_weight_dominance(sys: &EstimableSystem) -> Result<Vec<Dominance>> {
    let report = secondary_weights(sys, &[])?;
    let q = sys.q();
    let mut out = Vec::with_capacity(sys.s());
    for (i, entry) in report.columns().enumerate() {
        let secondary = entry.secondary.value().ok_or_else(|| {
            Error::Internal(format!("column {} is outside its own weight matrix", i + 1))
        })?;
        let primary = sys.weights()[i];
        let tol = DOMINANCE_TOL * primary.max(1.0);
        if secondary < primary - tol {
            return Err(Error::Internal(format!(
                "secondary weight {secondary} of column {} is below its primary weight {primary}",
                i + 1
            )));
        }
        let dependent = if sys.s() == 1 {
            false
        } else {
            let others: Vec<usize> = (0..sys.s()).filter(|&j| j != i).collect();
            let rest = DMatrix::from_fn(q.nrows(), others.len(), |r, c| q[(r, others[c])]);
            let basis = linalg::column_space_basis(&rest);
            let col = q.column(i).into_owned();
            let resid = &col - &basis * (basis.transpose() * &col);
            resid.norm() <= SPACE_RTOL * col.norm()
        };
        out.push(Dominance {
            column: i,
            primary,
            secondary,
            dependent,
            strict: secondary > primary + tol,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Nuisance;

    const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn q1() -> Vec<f64> {
        vec![-S, S, 0.0]
    }
    fn q2() -> Vec<f64> {
        vec![-S, 0.0, S]
    }
    fn q3() -> Vec<f64> {
        vec![0.0, -S, S]
    }

    fn system(cols: &[Vec<f64>], b: Option<Vec<f64>>) -> EstimableSystem {
        let v = cols[0].len();
        EstimableSystem::new(DMatrix::from_fn(v, cols.len(), |i, j| cols[j][i]), b).unwrap()
    }

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn contrasts() -> EstimationSpace {
        EstimationSpace::contrasts(3).unwrap()
    }

    fn sym(rows: &[[f64; 3]]) -> SymMatrix {
        SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn make_weight_matrix_examples() {
        assert!(matches!(
            WeightMatrix::new(SymMatrix::identity(3), &contrasts()),
            Err(Error::OutsideEstimationSpace { .. })
        ));
        let p = contrasts().projector().clone();
        assert_eq!(WeightMatrix::new(p, &contrasts()).unwrap().rank(), 2);
        let wq = sym(&[[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]);
        let w = WeightMatrix::new(wq, &contrasts()).unwrap();
        assert_eq!(w.rank(), 2);
        let k = w.factor();
        assert!(max_abs(&(k * k.transpose() - w.matrix().matrix())) < 1e-12);
        let ktwk = k.transpose() * w.pinv().matrix() * k;
        assert!(max_abs(&(ktwk - DMatrix::identity(2, 2))) < 1e-9);
        assert!(matches!(
            WeightMatrix::new(SymMatrix::from_diagonal(&[1.0, -1.0, 0.0]), &EstimationSpace::full(3).unwrap()),
            Err(Error::NotNonnegativeDefinite { .. })
        ));
    }

    #[test]
    fn weights_of_duplicated_column() {
        let w = weight_matrix_from_system(&system(&[q1(), q1()], None), &contrasts()).unwrap();
        assert!((w.weight_of(&dv(&q1())).unwrap().value().unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(w.weight_of(&dv(&q3())).unwrap(), Weight::OutsideSpan);
        assert!(matches!(w.weight_of(&dv(&[0.0, 0.0, 0.0])), Err(Error::ZeroVector)));
    }

    #[test]
    fn weight_matrix_displays() {
        let w = weight_matrix_from_system(&system(&[q1(), q2()], None), &contrasts()).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 1.0, 0.0, -1.0, 0.0, 1.0]) * 0.5;
        assert!(max_abs(&(w.matrix().matrix() - expect)) < 1e-12);

        let w = weight_matrix_from_system(&system(&[q1(), q2()], Some(vec![1.0, 2.0])), &contrasts()).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[3.0, -1.0, -2.0, -1.0, 1.0, 0.0, -2.0, 0.0, 2.0]) * 0.5;
        assert!(max_abs(&(w.matrix().matrix() - expect)) < 1e-12);

        let single = weight_matrix_from_system(&system(&[q1()], None), &contrasts()).unwrap();
        assert_eq!(single.rank(), 1);
    }

    #[test]
    fn weighted_variance_and_information() {
        let spec = DesignSpec::from_replications(&[2, 2, 2], Nuisance::Intercept).unwrap();
        let w = WeightMatrix::new(contrasts().projector().clone(), &contrasts()).unwrap();
        assert!((w.weight_of(&dv(&q1())).unwrap().value().unwrap() - 1.0).abs() < 1e-12);
        let wv = weighted_variance(&spec, &w, &dv(&q1())).unwrap();
        assert!((wv - 0.5).abs() < 1e-12);

        let cw = weighted_info_matrix(&spec, &w).unwrap();
        assert!(max_abs(&(cw.matrix() - DMatrix::identity(2, 2) * 2.0)) < 1e-12);
    }

    #[test]
    fn weighted_information_of_c_itself_is_identity() {
        let spec = DesignSpec::from_one_based(3, &[1, 1, 2, 3, 3, 3], Nuisance::Intercept).unwrap();
        let c = crate::model::information_matrix(&spec).unwrap();
        let w = WeightMatrix::new(c, &contrasts()).unwrap();
        let cw = weighted_info_matrix(&spec, &w).unwrap();
        assert!(max_abs(&(cw.matrix() - DMatrix::identity(2, 2))) < 1e-10);
        // An eigenvector of C_W = I: weighted variance 1.
        let q = w.factor().column(0).into_owned();
        assert!((weighted_variance(&spec, &w, &q).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn weighted_information_requires_estimability() {
        let spec = DesignSpec::from_one_based(3, &[1, 2, 1, 2], Nuisance::Intercept).unwrap();
        let w = WeightMatrix::new(contrasts().projector().clone(), &contrasts()).unwrap();
        assert!(matches!(weighted_info_matrix(&spec, &w), Err(Error::Infeasible { .. })));
        assert!(matches!(
            weighted_variance(&spec, &w, &dv(&q3())),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn equivalence_examples() {
        let full = EstimationSpace::full(3).unwrap();
        let w = weight_matrix_from_system(&system(&[q1(), q2()], None), &contrasts()).unwrap();
        let w3 = WeightMatrix::new(w.matrix().scaled(3.0), &contrasts()).unwrap();
        // Weight matrices hold W; W1^+ = W3^+ * 3 so M1 = 3 M2.
        let eq = estimation_equivalent(&w, &w3).unwrap();
        assert!(eq.equivalent);
        assert!((eq.c - 3.0).abs() < 1e-10);

        let p = contrasts().projector().matrix().clone();
        let regularized = SymMatrix::symmetrize(DMatrix::identity(3, 3) - &p + w.matrix().matrix());
        let w_sm = WeightMatrix::new(regularized, &full).unwrap();
        let eq = estimation_equivalent(&w, &w_sm).unwrap();
        assert!(eq.equivalent);
        assert!((eq.c - 1.0).abs() < 1e-10);

        let a = WeightMatrix::new(SymMatrix::from_diagonal(&[1.0, 0.0, 0.0]), &full).unwrap();
        let b = WeightMatrix::new(SymMatrix::from_diagonal(&[0.0, 1.0, 0.0]), &full).unwrap();
        assert!(matches!(estimation_equivalent(&a, &b), Err(Error::ColumnSpaceMismatch)));
    }

    #[test]
    fn secondary_weight_examples() {
        let report = secondary_weights(&system(&[q1(), q2()], None), &[dv(&q3())]).unwrap();
        let w3 = report.queries().next().unwrap();
        assert!(w3.in_span);
        assert!((w3.secondary.value().unwrap() - 0.5).abs() < 1e-12);

        let report =
            secondary_weights(&system(&[q1(), q3()], Some(vec![1.0, 0.5])), &[dv(&q2())]).unwrap();
        assert!((report.queries().next().unwrap().secondary.value().unwrap() - 1.0 / 3.0).abs() < 1e-12);

        let report = secondary_weights(&system(&[q1(), q2(), q3()], Some(vec![1.0, 1.0, 0.5])), &[]).unwrap();
        let got: Vec<f64> = report.columns().map(|e| e.secondary.value().unwrap()).collect();
        for (g, e) in got.iter().zip([4.0 / 3.0, 4.0 / 3.0, 1.0]) {
            assert!((g - e).abs() < 1e-12, "{got:?}");
        }

        let outside = secondary_weights(&system(&[q1()], None), &[dv(&q2())]).unwrap();
        let e = outside.queries().next().unwrap();
        assert!(!e.in_span);
        assert_eq!(e.secondary, Weight::OutsideSpan);
    }

    #[test]
    fn dominance_examples() {
        let d = check_weight_dominance(&system(&[q1(), q2()], None)).unwrap();
        assert!(d.iter().all(|x| (x.secondary - 1.0).abs() < 1e-12 && !x.strict && !x.dependent));

        let d = check_weight_dominance(&system(&[q1(), q1()], None)).unwrap();
        assert!(d.iter().all(|x| (x.secondary - 2.0).abs() < 1e-12 && x.strict && x.dependent));

        let d = check_weight_dominance(&system(&[q1(), q2(), q3()], Some(vec![1.0, 1.0, 0.5]))).unwrap();
        assert!(d.iter().all(|x| x.strict && x.dependent));
    }

    #[test]
    fn decomposition_is_convex() {
        let spec = DesignSpec::from_one_based(3, &[1, 1, 2, 3, 2, 1, 3], Nuisance::Intercept).unwrap();
        let info = Information::of(&spec).unwrap();
        let w = weight_matrix_from_system(&system(&[q1(), q2()], Some(vec![1.0, 3.0])), &contrasts()).unwrap();
        let q = dv(&[0.3, -1.1, 0.8]);
        let dec = variance_decomposition(&info, &w, &q).unwrap();
        assert!(dec.coefficients.iter().all(|c| *c >= 0.0));
        assert!((dec.coefficients.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((dec.reconstructed() - dec.direct).abs() < 1e-10);
    }
}
