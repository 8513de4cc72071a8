//! Systems of estimable functions `Q^T tau` with primary weights, the
//! information matrix `N_Q = (Q~^T C^- Q~)^+` of a scaled system, and the
//! systems that reproduce a given weight matrix.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, max_abs, pinv, pinv_sqrt, SymMatrix};
use crate::model::{DesignSpec, EstimationSpace, Information, SPACE_RTOL};
use crate::weighting::WeightMatrix;

const NORMALIZED_TOL: f64 = 1e-9;

/// `Q` (v x s) with primary weights `b_1..b_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimableSystem {
    q: DMatrix<f64>,
    weights: Vec<f64>,
    rank: usize,
}

impl EstimableSystem {
    /// Weights default to one for every column.
    pub fn new(q: DMatrix<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if q.ncols() == 0 || q.nrows() == 0 {
            return Err(Error::InvalidSystem("Q needs at least one row and one column".into()));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("coefficient matrix Q"));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; q.ncols()]);
        if weights.len() != q.ncols() {
            return Err(Error::InvalidSystem(format!(
                "{} weights given for {} functions",
                weights.len(),
                q.ncols()
            )));
        }
        if let Some(b) = weights.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::InvalidSystem(format!("primary weight {b} is not positive")));
        }
        let rank = linalg::numeric_rank(&q);
        Ok(Self { q, weights, rank })
    }

    /// Builds from row-major rows of `Q`.
    pub fn from_rows(rows: &[Vec<f64>], weights: Option<Vec<f64>>) -> Result<Self> {
        let v = rows.len();
        let s = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != s) {
            return Err(Error::Dimension("rows of Q have unequal lengths".into()));
        }
        Self::new(DMatrix::from_fn(v, s, |i, j| rows[i][j]), weights)
    }

    /// All `v(v-1)/2` normalized pairwise contrasts `(e_j - e_i)/sqrt 2`, `i < j`.
    pub fn pairwise(v: usize) -> Result<Self> {
        if v < 2 {
            return Err(Error::InvalidSystem("pairwise contrasts need v >= 2".into()));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut cols = Vec::new();
        for i in 0..v {
            for j in i + 1..v {
                let mut c = vec![0.0; v];
                c[i] = -s;
                c[j] = s;
                cols.push(c);
            }
        }
        Self::new(columns_to_matrix(v, &cols), None)
    }

    /// Normalized contrasts of every other treatment against the 0-based
    /// `control`, in treatment order.
    pub fn vs_control(v: usize, control: usize) -> Result<Self> {
        if v < 2 || control >= v {
            return Err(Error::InvalidSystem(format!(
                "control {} is not a treatment of 1..{v}",
                control + 1
            )));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let cols: Vec<Vec<f64>> = (0..v)
            .filter(|&t| t != control)
            .map(|t| {
                let mut c = vec![0.0; v];
                c[control] = -s;
                c[t] = s;
                c
            })
            .collect();
        Self::new(columns_to_matrix(v, &cols), None)
    }

    /// The single function `q^T tau`.
    pub fn single(q: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(q.len(), 1, q), None)
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn v(&self) -> usize {
        self.q.nrows()
    }

    pub fn s(&self) -> usize {
        self.q.ncols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.s()
    }

    /// All columns have unit norm.
    pub fn is_normalized(&self) -> bool {
        self.q
            .column_iter()
            .all(|c| (c.norm() - 1.0).abs() <= NORMALIZED_TOL)
    }

    /// Copy with each column rescaled to unit norm, weights kept.
    pub fn normalized(&self) -> Result<Self> {
        let mut q = self.q.clone();
        for mut c in q.column_iter_mut() {
            let norm = c.norm();
            if norm == 0.0 {
                return Err(Error::InvalidSystem("cannot normalize a zero column".into()));
            }
            c /= norm;
        }
        Self::new(q, Some(self.weights.clone()))
    }

    /// `Q~ = Q B^{1/2}`.
    pub fn scaled(&self) -> DMatrix<f64> {
        scale_system(self)
    }
}

fn columns_to_matrix(v: usize, cols: &[Vec<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(v, cols.len(), |i, j| cols[j][i])
}

/// `C(Q) ⊆ E` up to `1e-8 * max|Q|`.
pub fn validate_system(sys: &EstimableSystem, space: &EstimationSpace) -> bool {
    sys.v() == space.v() && space.contains(&sys.q)
}

/// Errors unless the system lives in `E`.
pub fn require_in_space(sys: &EstimableSystem, space: &EstimationSpace) -> Result<()> {
    if sys.v() != space.v() {
        return Err(Error::Dimension(format!(
            "system has v = {}, estimation space has v = {}",
            sys.v(),
            space.v()
        )));
    }
    let residual = space.residual(&sys.q);
    let allowed = SPACE_RTOL * max_abs(&sys.q);
    if residual > allowed {
        return Err(Error::OutsideEstimationSpace { residual, allowed });
    }
    Ok(())
}

/// `Q B^{1/2}`: column `i` multiplied by `sqrt(b_i)`.
pub fn scale_system(sys: &EstimableSystem) -> DMatrix<f64> {
    let mut q = sys.q.clone();
    for (mut c, b) in q.column_iter_mut().zip(&sys.weights) {
        c *= b.sqrt();
    }
    q
}

/// `(Q^T G Q)^+` for any generalized inverse `G` of `C`.
pub fn info_matrix_from_ginv(c_ginv: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<SymMatrix> {
    pinv(&SymMatrix::symmetrize(q.transpose() * c_ginv * q))
}

/// `N_Q~` for a design whose information is already analysed.
pub fn info_matrix_from_information(info: &Information, sys: &EstimableSystem) -> Result<SymMatrix> {
    if sys.v() != info.v() {
        return Err(Error::Dimension(format!(
            "system has v = {}, design has v = {}",
            sys.v(),
            info.v()
        )));
    }
    let q = scale_system(sys);
    info.require_feasible(&q)?;
    graded_info_matrix(info, &q)
}

/// `(Q^T C^+ Q)^+ = V S^{-1} (U^T C^+ U)^{-1} S^{-1} V^T` from the thin SVD
/// `Q = U S V^T`, valid when `C(Q) ⊆ C(C)`. Avoids inverting the squared
/// condition number of `Q`.
fn graded_info_matrix(info: &Information, q: &DMatrix<f64>) -> Result<SymMatrix> {
    let svd = linalg::thin_svd(q)?;
    let r = svd.rank();
    let ur = svd.u.columns(0, r);
    // Columns of V scaled by 1/s.
    let vs = DMatrix::from_fn(q.ncols(), r, |i, j| svd.v[(i, j)] / svd.s[j]);
    let m = linalg::pd_inverse(&SymMatrix::symmetrize(ur.transpose() * info.pinv().matrix() * &ur))?;
    Ok(SymMatrix::symmetrize(&vs * m.matrix() * vs.transpose()))
}

/// `N_Q~(xi) = (Q~^T C^+(xi) Q~)^+`.
pub fn info_matrix_for_system(spec: &DesignSpec, sys: &EstimableSystem) -> Result<SymMatrix> {
    info_matrix_from_information(&Information::of(spec)?, sys)
}

/// The system `R tau` with `R = (P W^{-1} P)^{+1/2}` for a positive
/// definite `W`. `R` is kept as a full `v x v` matrix of rank `dim(E)`.
pub fn system_from_weight_matrix_r(w: &SymMatrix, space: &EstimationSpace) -> Result<EstimableSystem> {
    if w.dim() != space.v() {
        return Err(Error::Dimension(format!(
            "weight matrix is {0}x{0}, estimation space has v = {1}",
            w.dim(),
            space.v()
        )));
    }
    let w_inv = linalg::pd_inverse(w).map_err(|e| match e {
        Error::Singular { rank, dim, .. } => Error::Singular {
            rank,
            dim,
            hint: "singular weight matrices map to the system W^{1/2} tau instead",
        },
        other => other,
    })?;
    let p = space.projector().matrix();
    let inner = SymMatrix::symmetrize(p * w_inv.matrix() * p);
    let r = pinv_sqrt(&inner)?;
    EstimableSystem::new(r.into_inner(), None)
}

/// The system `W^{1/2} tau` whose weight matrix is `W`.
pub fn system_from_weight_matrix_sqrt(w: &WeightMatrix) -> Result<EstimableSystem> {
    EstimableSystem::new(w.sqrt().into_inner(), None)
}
