//! Numerical certificates that the system-of-interest route and the
//! weighted route give the same spectra, on a given instance or on batches
//! of seeded random instances.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::interpret::{a_opt_interpretation_check, e_opt_interpretation_check};
use crate::error::{Error, Result};
use crate::estimable::{
    info_matrix_from_information, require_in_space, system_from_weight_matrix_r,
    system_from_weight_matrix_sqrt, EstimableSystem,
};
use crate::instances::{self, trial_rng};
use crate::linalg::{eig_sym, inv_sqrt, SymMatrix};
use crate::model::{EstimationSpace, Information};
use crate::weighting::{weight_matrix_from_system, weighted_info_from, WeightMatrix};

/// Maximum relative spectral deviation, measured against `max(1, lambda_1)`.
pub const CERTIFY_TOL: f64 = 1e-8;

/// The available certifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Certification {
    /// `N_Q` versus `W'^{-1/2} C W'^{-1/2}` with `W' = I - P + Q Q^T`, for `rank Q = dim E`.
    Theorem1,
    /// `W^{-1/2} C W^{-1/2}` versus `N_R` for positive definite `W`.
    Theorem2,
    /// `N_Q~` versus `C_{W_Q~}` for any system.
    Theorem3,
    /// `C_W` versus `N_{W^{1/2}}` for any weight matrix.
    Theorem4,
    /// Average weighted variance equals `1 / Phi_AW`.
    AOpt,
    /// Largest weighted variance equals `1 / Phi_EW`.
    EOpt,
}

pub type Theorem = Certification;

impl Certification {
    pub const ALL: [Certification; 6] = [
        Certification::Theorem1,
        Certification::Theorem2,
        Certification::Theorem3,
        Certification::Theorem4,
        Certification::AOpt,
        Certification::EOpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Certification::Theorem1 => "theorem1",
            Certification::Theorem2 => "theorem2",
            Certification::Theorem3 => "theorem3",
            Certification::Theorem4 => "theorem4",
            Certification::AOpt => "aopt",
            Certification::EOpt => "eopt",
        }
    }
}

impl fmt::Display for Certification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Certification {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Certification::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown certification {s:?}"))
    }
}

/// Two spectra and their largest relative disagreement.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCertificate {
    pub certification: Certification,
    /// System-of-interest side, descending.
    pub lhs: Vec<f64>,
    /// Weighted side, descending.
    pub rhs: Vec<f64>,
    pub max_deviation: f64,
    pub passed: bool,
}

impl SpectralCertificate {
    fn new(certification: Certification, lhs: Vec<f64>, rhs: Vec<f64>) -> Self {
        let max_deviation = spectral_deviation(&lhs, &rhs);
        Self {
            certification,
            lhs,
            rhs,
            max_deviation,
            passed: max_deviation <= CERTIFY_TOL,
        }
    }
}

/// Sorts both lists descending, pads the shorter with zeros, and returns
/// `max_i |a_i - b_i| / max(1, a_1, b_1)`.
pub fn spectral_deviation(a: &[f64], b: &[f64]) -> f64 {
    let sorted = |x: &[f64]| {
        let mut v = x.to_vec();
        v.sort_by(|p, q| q.total_cmp(p));
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    let len = a.len().max(b.len());
    let at = |v: &Vec<f64>, i: usize| v.get(i).copied().unwrap_or(0.0);
    let scale = 1f64.max(at(&a, 0).abs()).max(at(&b, 0).abs());
    (0..len)
        .map(|i| (at(&a, i) - at(&b, i)).abs())
        .fold(0.0, f64::max)
        / scale
}

fn positive_spectrum(m: &SymMatrix) -> Result<Vec<f64>> {
    Ok(eig_sym(m)?.positive())
}

fn full_spectrum(m: &SymMatrix) -> Result<Vec<f64>> {
    Ok(eig_sym(m)?.eigenvalues().to_vec())
}

/// Positive spectra of `N_Q~` and of `C_{W'} = W'^{-1/2} C W'^{-1/2}` for
/// `W' = I - P_tau + Q~ Q~^T`. Needs `rank Q = dim E`.
pub fn certify_theorem1(info: &Information, sys: &EstimableSystem, space: &EstimationSpace) -> Result<SpectralCertificate> {
    require_in_space(sys, space)?;
    if sys.rank() != space.dim() {
        return Err(Error::InvalidSystem(format!(
            "rank {} is below dim(E) = {}; certify theorem3 instead",
            sys.rank(),
            space.dim()
        )));
    }
    let n_q = info_matrix_from_information(info, sys)?;
    let q = sys.scaled();
    let v = sys.v();
    let w_prime = SymMatrix::symmetrize(
        DMatrix::identity(v, v) - space.projector().matrix() + &q * q.transpose(),
    );
    let root = inv_sqrt(&w_prime)?;
    let c_w = SymMatrix::symmetrize(root.matrix() * info.matrix().matrix() * root.matrix());
    Ok(SpectralCertificate::new(
        Certification::Theorem1,
        positive_spectrum(&n_q)?,
        positive_spectrum(&c_w)?,
    ))
}

/// Full spectra of `W^{-1/2} C W^{-1/2}` and `N_R`, `R = (P W^{-1} P)^{+1/2}`.
pub fn certify_theorem2(info: &Information, w: &SymMatrix, space: &EstimationSpace) -> Result<SpectralCertificate> {
    let r = system_from_weight_matrix_r(w, space)?;
    let n_r = info_matrix_from_information(info, &r)?;
    let root = inv_sqrt(w)?;
    let c_w = SymMatrix::symmetrize(root.matrix() * info.matrix().matrix() * root.matrix());
    Ok(SpectralCertificate::new(
        Certification::Theorem2,
        full_spectrum(&n_r)?,
        full_spectrum(&c_w)?,
    ))
}

/// Positive spectra of `N_Q~` and `C_{W_Q~}` for any feasible system.
pub fn certify_theorem3(info: &Information, sys: &EstimableSystem, space: &EstimationSpace) -> Result<SpectralCertificate> {
    let n_q = info_matrix_from_information(info, sys)?;
    let w = weight_matrix_from_system(sys, space)?;
    let c_w = weighted_info_from(info, &w)?;
    Ok(SpectralCertificate::new(
        Certification::Theorem3,
        positive_spectrum(&n_q)?,
        positive_spectrum(&c_w)?,
    ))
}

/// Full spectra of `C_W` (zero-padded to `v`) and `N_{W^{1/2}}`.
pub fn certify_theorem4(info: &Information, w: &WeightMatrix) -> Result<SpectralCertificate> {
    let c_w = weighted_info_from(info, w)?;
    let root = system_from_weight_matrix_sqrt(w)?;
    let n_root = info_matrix_from_information(info, &root)?;
    let mut padded = full_spectrum(&c_w)?;
    padded.resize(w.v(), 0.0);
    Ok(SpectralCertificate::new(
        Certification::Theorem4,
        full_spectrum(&n_root)?,
        padded,
    ))
}

/// One randomized trial of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: u64,
    pub v: usize,
    pub n: usize,
    pub blocks: usize,
    pub max_deviation: f64,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub certification: Certification,
    pub seed: u64,
    pub trials: Vec<TrialOutcome>,
}

impl BatchOutcome {
    pub fn all_passed(&self) -> bool {
        self.trials.iter().all(|t| t.passed)
    }

    pub fn max_deviation(&self) -> f64 {
        self.trials.iter().map(|t| t.max_deviation).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TrialOutcome> {
        self.trials.iter().filter(|t| !t.passed)
    }
}

/// Runs `trials` seeded random instances; trial `i` is reproducible from
/// `(seed, i)` alone.
pub fn certify_batch(certification: Certification, trials: usize, seed: u64) -> BatchOutcome {
    let trials = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(certification, seed, t))
        .collect();
    BatchOutcome {
        certification,
        seed,
        trials,
    }
}

fn run_trial(certification: Certification, seed: u64, trial: u64) -> TrialOutcome {
    let mut rng = trial_rng(seed ^ certification as u64, trial);
    let outcome = instances::random_design(&mut rng).and_then(|d| {
        let (dev, checks) = match certification {
            Certification::Theorem1 => {
                let sys = instances::random_spanning_system(&mut rng, &d.space)?;
                (certify_theorem1(&d.info, &sys, &d.space)?.max_deviation, true)
            }
            Certification::Theorem2 => {
                let w = instances::random_pd_matrix(&mut rng, d.spec.v());
                (certify_theorem2(&d.info, &w, &d.space)?.max_deviation, true)
            }
            Certification::Theorem3 => {
                let sys = instances::random_system(&mut rng, &d.space)?;
                (certify_theorem3(&d.info, &sys, &d.space)?.max_deviation, true)
            }
            Certification::Theorem4 => {
                let w = instances::random_weight_matrix(&mut rng, &d.space)?;
                (certify_theorem4(&d.info, &w)?.max_deviation, true)
            }
            Certification::AOpt => {
                let w = instances::random_weight_matrix(&mut rng, &d.space)?;
                let r = a_opt_interpretation_check(&d.spec, &w, &mut rng, 3)?;
                (r.max_deviation, r.passed)
            }
            Certification::EOpt => {
                let w = instances::random_weight_matrix(&mut rng, &d.space)?;
                let r = e_opt_interpretation_check(&d.spec, &w, &mut rng, 200)?;
                (r.max_deviation, r.passed)
            }
        };
        Ok((d, dev, checks))
    });
    match outcome {
        Ok((d, dev, checks)) => {
            let tol = match certification {
                Certification::AOpt => super::A_OPT_TOL,
                Certification::EOpt => super::E_OPT_TOL,
                _ => CERTIFY_TOL,
            };
            TrialOutcome {
                trial,
                v: d.spec.v(),
                n: d.spec.n(),
                blocks: match d.spec.nuisance() {
                    crate::model::Nuisance::Blocks(b) => b.len(),
                    _ => 1,
                },
                max_deviation: dev,
                passed: checks && dev <= tol,
                error: None,
            }
        }
        Err(e) => TrialOutcome {
            trial,
            v: 0,
            n: 0,
            blocks: 0,
            max_deviation: f64::INFINITY,
            passed: false,
            error: Some(e.to_string()),
        },
    }
}
