//! Weighted-variance readings of the weighted E and A criteria.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::instances::{gaussian_matrix, random_orthogonal};
use crate::linalg::{eig_sym, max_abs, SymMatrix};
use crate::model::{DesignSpec, Information};
use crate::weighting::{weighted_info_from, weighted_variance_from, WeightMatrix};

use super::{criterion_value, Criterion};

/// Relative tolerance of the A_W identities.
pub const A_OPT_TOL: f64 = 1e-8;
/// Relative tolerance of the E_W identities.
pub const E_OPT_TOL: f64 = 1e-9;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(b.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AOptReport {
    /// `1 / Phi_AW = tr(K^T C^+ K) / d`.
    pub inverse_phi_a: f64,
    /// Average weighted variance of the columns of `K Z`; the first entry uses `Z = I`.
    pub rotation_averages: Vec<f64>,
    /// Largest `max|Q Q^T - W|` over the rotated systems.
    pub factor_residual: f64,
    /// Average weighted variance of `d` mutually W-orthogonal functions.
    pub orthogonal_average: f64,
    /// Largest `|q_i^T W^+ q_j|` for `i != j`, relative to the diagonal.
    pub orthogonality_residual: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

fn average_weighted_variance(info: &Information, w: &WeightMatrix, q: &DMatrix<f64>) -> Result<f64> {
    let mut total = 0.0;
    for col in q.column_iter() {
        total += weighted_variance_from(info, w, &col.into_owned())?;
    }
    Ok(total / q.ncols() as f64)
}

/// Checks that `1 / Phi_AW` is the average weighted variance of (a) every
/// system `Q = K Z` with `Z` orthogonal, so that `Q Q^T = W`, and (b) a set of
/// `d` mutually W-orthogonal functions inside `C(W)`.
pub fn a_opt_interpretation_check<R: Rng + ?Sized>(
    spec: &DesignSpec,
    w: &WeightMatrix,
    rng: &mut R,
    random_rotations: usize,
) -> Result<AOptReport> {
    let info = Information::of(spec)?;
    let cw = weighted_info_from(&info, w)?;
    let phi_a = criterion_value(&cw, Criterion::A)?.value;
    let inverse_phi_a = 1.0 / phi_a;
    let k = w.factor();
    let d = w.rank();

    let mut rotations = vec![DMatrix::identity(d, d)];
    rotations.extend((0..random_rotations).map(|_| random_orthogonal(rng, d)));
    let mut rotation_averages = Vec::with_capacity(rotations.len());
    let mut factor_residual: f64 = 0.0;
    for z in &rotations {
        let q = k * z;
        factor_residual = factor_residual.max(max_abs(&(&q * q.transpose() - w.matrix().matrix())));
        rotation_averages.push(average_weighted_variance(&info, w, &q)?);
    }

    // Gram-Schmidt in the inner product <a, b> = a^T W^+ b, starting from W x.
    let w_pinv = w.pinv().matrix();
    let start = w.matrix().matrix() * gaussian_matrix(rng, w.v(), d);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(d);
    for col in start.column_iter() {
        let mut u = col.into_owned();
        for b in &basis {
            let coef = u.dot(&(w_pinv * b)) / b.dot(&(w_pinv * b));
            u -= b * coef;
        }
        basis.push(u);
    }
    let q_orth = DMatrix::from_columns(&basis);
    let gram = q_orth.transpose() * w_pinv * &q_orth;
    let diag_scale = (0..d).map(|i| gram[(i, i)].abs()).fold(0.0, f64::max);
    let mut off = 0.0_f64;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                off = off.max(gram[(i, j)].abs());
            }
        }
    }
    let orthogonality_residual = off / diag_scale.max(f64::MIN_POSITIVE);
    let orthogonal_average = average_weighted_variance(&info, w, &q_orth)?;

    let factor_scale = 1f64.max(w.matrix().max_abs());
    let max_deviation = rotation_averages
        .iter()
        .map(|&a| rel(a, inverse_phi_a))
        .chain(std::iter::once(rel(orthogonal_average, inverse_phi_a)))
        .fold(0.0, f64::max);
    let passed = max_deviation <= A_OPT_TOL
        && factor_residual <= 1e-9 * factor_scale
        && orthogonality_residual <= 1e-8;
    Ok(AOptReport {
        inverse_phi_a,
        rotation_averages,
        factor_residual,
        orthogonal_average,
        orthogonality_residual,
        max_deviation,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EOptReport {
    /// `1 / lambda_min(C_W)`.
    pub inverse_phi_e: f64,
    /// `lambda_max(K^T C^+ K)`.
    pub lambda_max: f64,
    /// Weighted variance of `K u_1`, `u_1` the top eigenvector of `K^T C^+ K`.
    pub maximizer_variance: f64,
    /// Largest weighted variance among random `q ∈ C(W)`.
    pub sampled_max: f64,
    pub samples: usize,
    pub max_deviation: f64,
    /// A sampled weighted variance exceeded `1 / Phi_EW`.
    pub bound_violated: bool,
    pub passed: bool,
}

/// Checks that `1 / Phi_EW` is the largest weighted variance over `C(W)`:
/// analytically through `lambda_max(K^T C^+ K)`, at the maximizer, and as an
/// upper bound on `samples` random functions in `C(W)`.
pub fn e_opt_interpretation_check<R: Rng + ?Sized>(
    spec: &DesignSpec,
    w: &WeightMatrix,
    rng: &mut R,
    samples: usize,
) -> Result<EOptReport> {
    let info = Information::of(spec)?;
    let cw = weighted_info_from(&info, w)?;
    let phi_e = criterion_value(&cw, Criterion::E)?.value;
    if phi_e <= 0.0 {
        return Err(Error::Internal("weighted information matrix is singular".into()));
    }
    let inverse_phi_e = 1.0 / phi_e;
    let k = w.factor();
    let inner = SymMatrix::symmetrize(k.transpose() * info.pinv().matrix() * k);
    let spectrum = eig_sym(&inner)?;
    let lambda_max = spectrum.max();
    let top = spectrum.eigenvectors().column(0).into_owned();
    let maximizer_variance = weighted_variance_from(&info, w, &(k * top))?;

    let mut sampled_max: f64 = 0.0;
    let h = gaussian_matrix(rng, w.rank(), samples);
    for col in h.column_iter() {
        let q = k * col;
        sampled_max = sampled_max.max(weighted_variance_from(&info, w, &q)?);
    }
    let bound_violated = sampled_max > inverse_phi_e * (1.0 + E_OPT_TOL);
    let max_deviation = rel(inverse_phi_e, lambda_max).max(rel(maximizer_variance, lambda_max));
    Ok(EOptReport {
        inverse_phi_e,
        lambda_max,
        maximizer_variance,
        sampled_max,
        samples,
        max_deviation,
        bound_violated,
        passed: max_deviation <= E_OPT_TOL && !bound_violated,
    })
}
