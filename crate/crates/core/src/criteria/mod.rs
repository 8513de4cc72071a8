//! Eigenvalue-based optimality criteria (D, A, E), evaluated on either the
//! information matrix of a system or the weighted information matrix.
//!
//! All criteria are larger-is-better. D and A use the positive part of the
//! spectrum; E is the smallest eigenvalue of the full declared spectrum, so a
//! singular matrix has `E = 0`. [`CriterionValue::positive_value`] gives the
//! positive-spectrum variant that the theorems compare.

mod certify;
mod interpret;

pub use certify::{
    certify_batch, certify_theorem1, certify_theorem2, certify_theorem3, certify_theorem4,
    spectral_deviation, BatchOutcome, Certification, SpectralCertificate, Theorem, TrialOutcome,
    CERTIFY_TOL,
};
pub use interpret::{
    a_opt_interpretation_check, e_opt_interpretation_check, AOptReport, EOptReport, A_OPT_TOL,
    E_OPT_TOL,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimable::{info_matrix_from_information, EstimableSystem};
use crate::linalg::{eig_sym, SymMatrix};
use crate::model::{DesignSpec, Information};
use crate::weighting::{weighted_info_from, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    D,
    A,
    E,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::D, Criterion::A, Criterion::E];

    /// Criterion value of a descending list of positive eigenvalues.
    fn on_positive(self, positive: &[f64]) -> f64 {
        if positive.is_empty() {
            return 0.0;
        }
        let k = positive.len() as f64;
        match self {
            Criterion::D => (positive.iter().map(|l| l.ln()).sum::<f64>() / k).exp(),
            Criterion::A => k / positive.iter().map(|l| 1.0 / l).sum::<f64>(),
            Criterion::E => positive[positive.len() - 1],
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Criterion::D => "D",
            Criterion::A => "A",
            Criterion::E => "E",
        };
        f.write_str(s)
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D" => Ok(Criterion::D),
            "A" => Ok(Criterion::A),
            "E" => Ok(Criterion::E),
            _ => Err(Error::UnknownCriterion(s.to_string())),
        }
    }
}

/// A criterion value with the spectrum it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionValue {
    pub criterion: Criterion,
    pub value: f64,
    /// Full declared spectrum, descending.
    pub spectrum: Vec<f64>,
    /// Number of eigenvalues above the rank cutoff.
    pub rank: usize,
}

impl CriterionValue {
    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    pub fn is_singular(&self) -> bool {
        self.rank < self.spectrum.len()
    }

    /// Descending positive eigenvalues used by D and A.
    pub fn positive_spectrum(&self) -> &[f64] {
        &self.spectrum[..self.rank]
    }

    /// The criterion evaluated on the positive spectrum only; differs from
    /// `value` just for E on a singular matrix.
    pub fn positive_value(&self) -> f64 {
        self.criterion.on_positive(self.positive_spectrum())
    }
}

/// Evaluates `criterion` on a nonnegative definite matrix.
pub fn criterion_value(m: &SymMatrix, criterion: Criterion) -> Result<CriterionValue> {
    let spectrum = eig_sym(m)?;
    spectrum.require_nonnegative()?;
    let rank = spectrum
        .eigenvalues()
        .iter()
        .filter(|&&l| l > spectrum.cutoff())
        .count();
    let all = spectrum.eigenvalues().to_vec();
    let positive = &all[..rank];
    let value = match criterion {
        Criterion::E if rank < all.len() => 0.0,
        _ => criterion.on_positive(positive),
    };
    Ok(CriterionValue {
        criterion,
        value,
        spectrum: all,
        rank,
    })
}

/// `Phi(N_Q~(xi))`.
pub fn phi_for_system(spec: &DesignSpec, sys: &EstimableSystem, criterion: Criterion) -> Result<CriterionValue> {
    phi_for_system_from(&Information::of(spec)?, sys, criterion)
}

pub fn phi_for_system_from(info: &Information, sys: &EstimableSystem, criterion: Criterion) -> Result<CriterionValue> {
    criterion_value(&info_matrix_from_information(info, sys)?, criterion)
}

/// `Phi(C_W(xi))`.
pub fn phi_weighted(spec: &DesignSpec, w: &WeightMatrix, criterion: Criterion) -> Result<CriterionValue> {
    phi_weighted_from(&Information::of(spec)?, w, criterion)
}

pub fn phi_weighted_from(info: &Information, w: &WeightMatrix, criterion: Criterion) -> Result<CriterionValue> {
    criterion_value(&weighted_info_from(info, w)?, criterion)
}
