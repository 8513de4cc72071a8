//! The treatment-plus-nuisance linear model `y = X(xi) tau + L beta + e`,
//! its information matrix `C = X^T (I - P_L) X`, and the estimation space.
//!
//! Treatment indices are 0-based throughout the library; the problem-file
//! and C interfaces translate from 1-based labels.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, eig_sym, max_abs, residual_outside, Spectrum, SymMatrix};

/// Relative residual below which a column counts as lying in a subspace.
pub const SPACE_RTOL: f64 = 1e-8;

/// Nuisance structure `L`.
#[derive(Debug, Clone, PartialEq)]
pub enum Nuisance {
    /// No nuisance parameters (`L` has zero columns).
    None,
    /// A single intercept column.
    Intercept,
    /// Consecutive blocks of the given sizes, one indicator column each.
    Blocks(Vec<usize>),
    /// A user-supplied `n x m` matrix.
    Explicit(DMatrix<f64>),
}

/// An exact design: one treatment per experimental unit plus the nuisance
/// structure.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    v: usize,
    assignment: Vec<usize>,
    nuisance: Nuisance,
}

impl DesignSpec {
    /// `assignment[i]` is the 0-based treatment of unit `i`.
    pub fn new(v: usize, assignment: Vec<usize>, nuisance: Nuisance) -> Result<Self> {
        if v == 0 {
            return Err(Error::InvalidDesign("v must be at least 1".into()));
        }
        let n = assignment.len();
        if n == 0 {
            return Err(Error::InvalidDesign("design needs at least one unit".into()));
        }
        if let Some((unit, &t)) = assignment.iter().enumerate().find(|(_, &t)| t >= v) {
            return Err(Error::InvalidDesign(format!(
                "unit {} is assigned treatment {} outside 1..{v}",
                unit + 1,
                t + 1
            )));
        }
        validate_nuisance(&nuisance, n)?;
        Ok(Self {
            v,
            assignment,
            nuisance,
        })
    }

    /// Same as [`DesignSpec::new`] with 1-based treatment labels.
    pub fn from_one_based(v: usize, labels: &[usize], nuisance: Nuisance) -> Result<Self> {
        if let Some(pos) = labels.iter().position(|&t| t == 0 || t > v) {
            return Err(Error::InvalidDesign(format!(
                "unit {} has treatment label {} outside 1..{v}",
                pos + 1,
                labels[pos]
            )));
        }
        Self::new(v, labels.iter().map(|t| t - 1).collect(), nuisance)
    }

    /// Units ordered by treatment: `r[0]` copies of treatment 0, and so on.
    pub fn from_replications(replications: &[usize], nuisance: Nuisance) -> Result<Self> {
        let assignment = replications
            .iter()
            .enumerate()
            .flat_map(|(t, &r)| std::iter::repeat(t).take(r))
            .collect();
        Self::new(replications.len(), assignment, nuisance)
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn nuisance(&self) -> &Nuisance {
        &self.nuisance
    }

    pub fn replications(&self) -> Vec<usize> {
        let mut r = vec![0; self.v];
        for &t in &self.assignment {
            r[t] += 1;
        }
        r
    }

    /// Copy with a different assignment and the same `v` and nuisance.
    pub fn with_assignment(&self, assignment: Vec<usize>) -> Result<Self> {
        Self::new(self.v, assignment, self.nuisance.clone())
    }
}

fn validate_nuisance(nuisance: &Nuisance, n: usize) -> Result<()> {
    match nuisance {
        Nuisance::None | Nuisance::Intercept => Ok(()),
        Nuisance::Blocks(sizes) => {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(Error::InvalidDesign("block sizes must be positive".into()));
            }
            let total: usize = sizes.iter().sum();
            if total != n {
                return Err(Error::InvalidDesign(format!(
                    "block sizes sum to {total}, but the design has {n} units"
                )));
            }
            Ok(())
        }
        Nuisance::Explicit(l) => {
            if l.nrows() != n {
                return Err(Error::InvalidDesign(format!(
                    "explicit nuisance matrix has {} rows, but the design has {n} units",
                    l.nrows()
                )));
            }
            if l.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("nuisance matrix"));
            }
            Ok(())
        }
    }
}

/// The nuisance matrix `L` for `n` units.
pub fn nuisance_matrix(nuisance: &Nuisance, n: usize) -> DMatrix<f64> {
    match nuisance {
        Nuisance::None => DMatrix::zeros(n, 0),
        Nuisance::Intercept => DMatrix::from_element(n, 1, 1.0),
        Nuisance::Blocks(sizes) => {
            let mut l = DMatrix::zeros(n, sizes.len());
            let mut row = 0;
            for (b, &size) in sizes.iter().enumerate() {
                for _ in 0..size {
                    l[(row, b)] = 1.0;
                    row += 1;
                }
            }
            l
        }
        Nuisance::Explicit(l) => l.clone(),
    }
}

/// `(X, L)` for the design.
pub fn design_matrix(spec: &DesignSpec) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = spec.n();
    let mut x = DMatrix::zeros(n, spec.v);
    for (i, &t) in spec.assignment.iter().enumerate() {
        x[(i, t)] = 1.0;
    }
    (x, nuisance_matrix(&spec.nuisance, n))
}

/// `I - P_L` for a fixed nuisance structure; reused across designs that
/// share it.
#[derive(Debug, Clone)]
pub struct NuisanceModel {
    residual: DMatrix<f64>,
}

impl NuisanceModel {
    pub fn new(nuisance: &Nuisance, n: usize) -> Result<Self> {
        validate_nuisance(nuisance, n)?;
        let l = nuisance_matrix(nuisance, n);
        let mut residual = DMatrix::identity(n, n);
        if l.ncols() > 0 && max_abs(&l) > 0.0 {
            residual -= linalg::projector(&l)?.matrix();
        }
        Ok(Self { residual })
    }

    pub fn n(&self) -> usize {
        self.residual.nrows()
    }

    /// `X^T (I - P_L) X` for a 0-based assignment, accumulated unit by unit.
    pub fn information(&self, v: usize, assignment: &[usize]) -> SymMatrix {
        let n = self.n();
        debug_assert_eq!(assignment.len(), n);
        let mut c = DMatrix::zeros(v, v);
        for i in 0..n {
            let ti = assignment[i];
            for j in 0..n {
                c[(ti, assignment[j])] += self.residual[(i, j)];
            }
        }
        SymMatrix::symmetrize(c)
    }
}

/// `C(xi) = X^T (I - P_L) X`.
pub fn information_matrix(spec: &DesignSpec) -> Result<SymMatrix> {
    let model = NuisanceModel::new(&spec.nuisance, spec.n())?;
    Ok(model.information(spec.v, &spec.assignment))
}

/// `C(xi)` together with its spectrum, pseudoinverse and range projector.
#[derive(Debug, Clone)]
pub struct Information {
    c: SymMatrix,
    spectrum: Spectrum,
    c_pinv: SymMatrix,
    range: SymMatrix,
}

impl Information {
    pub fn new(c: SymMatrix) -> Result<Self> {
        let spectrum = eig_sym(&c)?;
        let c_pinv = spectrum.map(|l, nz| if nz { 1.0 / l } else { 0.0 });
        let range = spectrum.range_projector();
        Ok(Self {
            c,
            spectrum,
            c_pinv,
            range,
        })
    }

    pub fn of(spec: &DesignSpec) -> Result<Self> {
        Self::new(information_matrix(spec)?)
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.c
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn pinv(&self) -> &SymMatrix {
        &self.c_pinv
    }

    /// Projector onto the column space of `C`.
    pub fn range_projector(&self) -> &SymMatrix {
        &self.range
    }

    pub fn rank(&self) -> usize {
        self.spectrum.numeric_rank()
    }

    pub fn v(&self) -> usize {
        self.c.dim()
    }

    /// 0-based indices of columns of `q` that are not estimable.
    pub fn infeasible_columns(&self, q: &DMatrix<f64>) -> Vec<usize> {
        let allowed = SPACE_RTOL * max_abs(q);
        let resid = q - self.range.matrix() * q;
        (0..q.ncols())
            .filter(|&j| resid.column(j).amax() > allowed)
            .collect()
    }

    /// True iff every column of `q` lies in the column space of `C`.
    pub fn is_feasible(&self, q: &DMatrix<f64>) -> bool {
        residual_outside(&self.range, q) <= SPACE_RTOL * max_abs(q)
    }

    pub fn require_feasible(&self, q: &DMatrix<f64>) -> Result<()> {
        let bad = self.infeasible_columns(q);
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Infeasible {
                columns: bad.into_iter().map(|j| j + 1).collect(),
            })
        }
    }

    /// Checks that the design's column space is the estimation space.
    pub fn require_estimation_space(&self, space: &EstimationSpace) -> Result<()> {
        let inside = residual_outside(space.projector(), self.c.matrix())
            <= SPACE_RTOL * self.c.max_abs().max(f64::MIN_POSITIVE);
        if self.rank() != space.dim() || !inside {
            return Err(Error::EstimationSpaceMismatch {
                rank: self.rank(),
                expected: space.dim(),
            });
        }
        Ok(())
    }
}

/// `true` iff `Q^T tau` is estimable under the design.
pub fn is_feasible(spec: &DesignSpec, q: &DMatrix<f64>) -> Result<bool> {
    if q.nrows() != spec.v {
        return Err(Error::Dimension(format!(
            "coefficient matrix has {} rows, expected v = {}",
            q.nrows(),
            spec.v
        )));
    }
    Ok(Information::of(spec)?.is_feasible(q))
}

/// Which subspace of `R^v` holds the estimable coefficient vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceKind {
    Full,
    Contrasts,
    Basis(DMatrix<f64>),
}

/// The estimation space `E` and its orthogonal projector `P_tau`.
#[derive(Debug, Clone)]
pub struct EstimationSpace {
    kind: SpaceKind,
    projector: SymMatrix,
    basis: DMatrix<f64>,
    dim: usize,
}

impl EstimationSpace {
    pub fn new(kind: SpaceKind, v: usize) -> Result<Self> {
        if v == 0 {
            return Err(Error::InvalidSpace("v must be at least 1".into()));
        }
        let (projector, dim) = match &kind {
            SpaceKind::Full => (SymMatrix::identity(v), v),
            SpaceKind::Contrasts => {
                let p = DMatrix::identity(v, v) - DMatrix::from_element(v, v, 1.0 / v as f64);
                (SymMatrix::symmetrize(p), v - 1)
            }
            SpaceKind::Basis(b) => {
                if b.ncols() == 0 {
                    return Err(Error::InvalidSpace("explicit basis has no columns".into()));
                }
                if b.nrows() != v {
                    return Err(Error::InvalidSpace(format!(
                        "explicit basis has {} rows, expected v = {v}",
                        b.nrows()
                    )));
                }
                let rank = linalg::numeric_rank(b);
                if rank == 0 {
                    return Err(Error::InvalidSpace("explicit basis is zero".into()));
                }
                (linalg::projector(b)?, rank)
            }
        };
        let basis = match &kind {
            SpaceKind::Full => DMatrix::identity(v, v),
            SpaceKind::Contrasts => linalg::column_space_basis(projector.matrix()),
            SpaceKind::Basis(b) => linalg::column_space_basis(b),
        };
        Ok(Self {
            kind,
            projector,
            basis,
            dim,
        })
    }

    pub fn full(v: usize) -> Result<Self> {
        Self::new(SpaceKind::Full, v)
    }

    pub fn contrasts(v: usize) -> Result<Self> {
        Self::new(SpaceKind::Contrasts, v)
    }

    pub fn kind(&self) -> &SpaceKind {
        &self.kind
    }

    pub fn projector(&self) -> &SymMatrix {
        &self.projector
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Orthonormal `v x dim` basis of `E`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn v(&self) -> usize {
        self.projector.dim()
    }

    /// Max residual of `columns` outside `E`.
    pub fn residual(&self, columns: &DMatrix<f64>) -> f64 {
        residual_outside(&self.projector, columns)
    }

    /// `C(columns)` is inside `E` up to `1e-8 * max|columns|`.
    pub fn contains(&self, columns: &DMatrix<f64>) -> bool {
        columns.nrows() == self.v() && self.residual(columns) <= SPACE_RTOL * max_abs(columns)
    }

    pub fn contains_vector(&self, q: &DVector<f64>) -> bool {
        self.contains(&DMatrix::from_column_slice(q.len(), 1, q.as_slice()))
    }
}

/// Constructs the estimation space for `v` treatments.
pub fn estimation_space(kind: SpaceKind, v: usize) -> Result<EstimationSpace> {
    EstimationSpace::new(kind, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
        max_abs(&(a - b)) <= tol
    }

    /// Direct `X^T (I - P_L) X` from explicit matrices, `P_L` by normal
    /// equations with a dense inverse.
    fn direct_information(spec: &DesignSpec) -> DMatrix<f64> {
        let (x, l) = design_matrix(spec);
        let n = spec.n();
        let pl = if l.ncols() == 0 {
            DMatrix::zeros(n, n)
        } else {
            let ltl = l.transpose() * &l;
            &l * ltl.try_inverse().expect("full column rank L") * l.transpose()
        };
        x.transpose() * (DMatrix::identity(n, n) - pl) * x
    }

    #[test]
    fn design_matrices() {
        let spec = DesignSpec::new(2, vec![0, 1], Nuisance::Intercept).unwrap();
        let (x, l) = design_matrix(&spec);
        assert_eq!(x, DMatrix::identity(2, 2));
        assert_eq!(l, DMatrix::from_element(2, 1, 1.0));

        let spec = DesignSpec::from_one_based(3, &[1, 1, 2, 2, 3, 3], Nuisance::Intercept).unwrap();
        let (x, _) = design_matrix(&spec);
        let sums: Vec<f64> = (0..3).map(|j| x.column(j).sum()).collect();
        assert_eq!(sums, vec![2.0, 2.0, 2.0]);

        let spec = DesignSpec::from_one_based(3, &[1, 2, 1, 3], Nuisance::Blocks(vec![2, 2])).unwrap();
        let (_, l) = design_matrix(&spec);
        assert_eq!(l, DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]));
    }

    #[test]
    fn rejects_invalid_designs() {
        assert!(DesignSpec::from_one_based(3, &[1, 4], Nuisance::Intercept).is_err());
        assert!(DesignSpec::from_one_based(3, &[0, 1], Nuisance::Intercept).is_err());
        assert!(DesignSpec::new(3, vec![0, 1, 2], Nuisance::Blocks(vec![2, 2])).is_err());
        assert!(DesignSpec::new(3, vec![0, 1, 2], Nuisance::Blocks(vec![3, 0])).is_err());
        assert!(DesignSpec::new(3, vec![], Nuisance::Intercept).is_err());
    }

    #[test]
    fn equireplicated_information() {
        let spec = DesignSpec::from_replications(&[2, 2, 2], Nuisance::Intercept).unwrap();
        let c = information_matrix(&spec).unwrap();
        let oracle = direct_information(&spec);
        assert!(close(c.matrix(), &oracle, 1e-12));
        let r = DMatrix::from_column_slice(3, 1, &[2.0, 2.0, 2.0]);
        let closed = DMatrix::from_diagonal_element(3, 3, 2.0) - &r * r.transpose() / 6.0;
        assert!(close(c.matrix(), &closed, 1e-12));
    }

    #[test]
    fn degenerate_information() {
        let spec = DesignSpec::new(2, vec![0, 0], Nuisance::Intercept).unwrap();
        assert!(information_matrix(&spec).unwrap().max_abs() < 1e-12);

        let n = 4;
        let spec =
            DesignSpec::new(3, vec![0, 1, 2, 0], Nuisance::Explicit(DMatrix::identity(n, n))).unwrap();
        assert!(information_matrix(&spec).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn block_information_matches_direct() {
        let spec =
            DesignSpec::from_one_based(4, &[1, 2, 3, 4, 1, 3, 2, 4, 1], Nuisance::Blocks(vec![4, 2, 3]))
                .unwrap();
        let c = information_matrix(&spec).unwrap();
        assert!(close(c.matrix(), &direct_information(&spec), 1e-12));
        let ones = DVector::from_element(4, 1.0);
        assert!((c.matrix() * ones).amax() < 1e-12);
    }

    #[test]
    fn estimation_spaces() {
        let e = estimation_space(SpaceKind::Contrasts, 3).unwrap();
        let p = DMatrix::identity(3, 3) - DMatrix::from_element(3, 3, 1.0 / 3.0);
        assert!(close(e.projector().matrix(), &p, 1e-15));
        assert_eq!(e.dim(), 2);

        let f = estimation_space(SpaceKind::Full, 4).unwrap();
        assert!(close(f.projector().matrix(), &DMatrix::identity(4, 4), 0.0));

        let basis = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let b = estimation_space(SpaceKind::Basis(basis), 3).unwrap();
        assert!(close(b.projector().matrix(), &p, 1e-12));
        assert_eq!(b.dim(), 2);

        assert!(estimation_space(SpaceKind::Basis(DMatrix::zeros(3, 0)), 3).is_err());
    }

    #[test]
    fn feasibility_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let eq = DesignSpec::from_replications(&[2, 2, 2], Nuisance::Intercept).unwrap();
        let q = DMatrix::from_column_slice(3, 1, &[-s, s, 0.0]);
        assert!(is_feasible(&eq, &q).unwrap());

        let partial = DesignSpec::from_one_based(3, &[1, 2, 1, 2], Nuisance::Intercept).unwrap();
        let q = DMatrix::from_column_slice(3, 1, &[0.0, -s, s]);
        assert!(!is_feasible(&partial, &q).unwrap());
        let info = Information::of(&partial).unwrap();
        assert!(matches!(info.require_feasible(&q), Err(Error::Infeasible { columns }) if columns == vec![1]));

        let ones = DMatrix::from_element(3, 1, 1.0);
        assert!(!is_feasible(&eq, &ones).unwrap());
    }

    #[test]
    fn estimation_space_check() {
        let contrasts = EstimationSpace::contrasts(3).unwrap();
        let eq = Information::of(&DesignSpec::from_replications(&[2, 2, 2], Nuisance::Intercept).unwrap())
            .unwrap();
        assert!(eq.require_estimation_space(&contrasts).is_ok());
        let partial = Information::of(&DesignSpec::from_replications(&[3, 3, 0], Nuisance::Intercept).unwrap())
            .unwrap();
        assert!(matches!(
            partial.require_estimation_space(&contrasts),
            Err(Error::EstimationSpaceMismatch { rank: 1, expected: 2 })
        ));
    }
}
