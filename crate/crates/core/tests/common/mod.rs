#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use wdesign::estimable::EstimableSystem;
use wdesign::instances::gaussian_matrix;
use wdesign::linalg::{max_abs, SymMatrix};
use wdesign::model::EstimationSpace;

pub const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Test treatments 2 and 3 against control 1.
pub fn q1() -> Vec<f64> {
    vec![-S, S, 0.0]
}

pub fn q2() -> Vec<f64> {
    vec![-S, 0.0, S]
}

/// Treatment 3 against treatment 2.
pub fn q3() -> Vec<f64> {
    vec![0.0, -S, S]
}

pub fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn columns(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let v = cols[0].len();
    DMatrix::from_fn(v, cols.len(), |i, j| cols[j][i])
}

pub fn system(cols: &[Vec<f64>], b: Option<Vec<f64>>) -> EstimableSystem {
    EstimableSystem::new(columns(cols), b).unwrap()
}

pub fn sym(rows: &[&[f64]]) -> SymMatrix {
    SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// Two positive definite weight matrices that agree on `q1`, `q2` but not on
/// `q3`.
pub fn w1() -> SymMatrix {
    sym(&[&[1.5, -0.5, -0.5], &[-0.5, 0.5, 0.0], &[-0.5, 0.0, 0.5]])
}

pub fn w2() -> SymMatrix {
    sym(&[&[2.5, -1.0, -1.0], &[-1.0, 2.0 / 3.0, 1.0 / 3.0], &[-1.0, 1.0 / 3.0, 2.0 / 3.0]])
}

pub fn contrasts(v: usize) -> EstimationSpace {
    EstimationSpace::contrasts(v).unwrap()
}

/// `max|a - b| / max(1, max|a|, max|b|)`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / 1f64.max(max_abs(a)).max(max_abs(b))
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// A random unit vector in `space`.
pub fn random_unit_in<R: Rng + ?Sized>(rng: &mut R, space: &EstimationSpace) -> DVector<f64> {
    let q = space.basis() * gaussian_matrix(rng, space.dim(), 1).column(0);
    let norm = q.norm();
    q / norm
}
