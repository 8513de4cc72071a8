//! Seeded random instances for certification trials: connected designs in
//! treatment-plus-nuisance models, systems of every rank pattern, and
//! positive definite or singular weight matrices.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimable::EstimableSystem;
use crate::linalg::SymMatrix;
use crate::model::{DesignSpec, EstimationSpace, Information, Nuisance};
use crate::weighting::WeightMatrix;

pub type InstanceRng = ChaCha8Rng;

/// Per-trial RNG, reproducible from `(seed, trial)`.
pub fn trial_rng(seed: u64, trial: u64) -> InstanceRng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(trial.wrapping_mul(0xD1B5_4A32_D192_ED03))
        ^ 0x5851_F42D_4C95_7F2D;
    ChaCha8Rng::seed_from_u64(mixed)
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-ish random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, d, d);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// A random design whose information matrix spans the contrasts.
#[derive(Debug, Clone)]
pub struct RandomDesign {
    pub spec: DesignSpec,
    pub space: EstimationSpace,
    pub info: Information,
}

/// Draws `v` in `3..=8`, `n` in `v..=14`, and intercept-only or 2-3 block
/// nuisance; resamples until `rank(C) = v - 1`.
pub fn random_design<R: Rng + ?Sized>(rng: &mut R) -> Result<RandomDesign> {
    let v = rng.gen_range(3..=8);
    let blocks = if rng.gen_bool(0.5) { 1 } else { rng.gen_range(2..=3) };
    let n_min = v + blocks - 1;
    let n = rng.gen_range(n_min..=14);
    random_design_with(rng, v, n, blocks)
}

/// `blocks == 1` means intercept-only.
pub fn random_design_with<R: Rng + ?Sized>(rng: &mut R, v: usize, n: usize, blocks: usize) -> Result<RandomDesign> {
    let space = EstimationSpace::contrasts(v)?;
    let nuisance = if blocks <= 1 {
        Nuisance::Intercept
    } else {
        Nuisance::Blocks(random_block_sizes(rng, n, blocks))
    };
    for _ in 0..1000 {
        let mut assignment: Vec<usize> = (0..v).collect();
        assignment.extend((v..n).map(|_| rng.gen_range(0..v)));
        assignment.shuffle(rng);
        let spec = DesignSpec::new(v, assignment, nuisance.clone())?;
        let info = Information::of(&spec)?;
        if info.require_estimation_space(&space).is_ok() {
            return Ok(RandomDesign { spec, space, info });
        }
    }
    Err(Error::NoFeasibleStart(1000))
}

fn random_block_sizes<R: Rng + ?Sized>(rng: &mut R, n: usize, blocks: usize) -> Vec<usize> {
    // Every block gets at least two units when possible.
    let base = if n >= 2 * blocks { 2 } else { 1 };
    let mut sizes = vec![base; blocks];
    for _ in 0..n - base * blocks {
        let b = rng.gen_range(0..blocks);
        sizes[b] += 1;
    }
    sizes
}

fn random_weights<R: Rng + ?Sized>(rng: &mut R, s: usize) -> Option<Vec<f64>> {
    if rng.gen_bool(0.5) {
        None
    } else {
        Some((0..s).map(|_| rng.gen_range(0.25..4.0)).collect())
    }
}

fn maybe_normalize<R: Rng + ?Sized>(rng: &mut R, sys: EstimableSystem) -> Result<EstimableSystem> {
    if rng.gen_bool(0.5) {
        sys.normalized()
    } else {
        Ok(sys)
    }
}

/// A system inside `space` whose rank equals `dim(E)`, with `s` drawn from
/// `dim(E)..=dim(E)+2`.
pub fn random_spanning_system<R: Rng + ?Sized>(rng: &mut R, space: &EstimationSpace) -> Result<EstimableSystem> {
    let dim = space.dim();
    let s = rng.gen_range(dim..=dim + 2);
    let q = conditioned_factor(rng, space, dim, s);
    let sys = EstimableSystem::new(q, random_weights(rng, s))?;
    maybe_normalize(rng, sys)
}

/// A system inside `space` of random rank `r` in `1..=dim(E)` and `s` in
/// `1..=dim(E)+2`. Covers full-rank, lower-dimensional and redundant systems.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, space: &EstimationSpace) -> Result<EstimableSystem> {
    let dim = space.dim();
    let s = rng.gen_range(1..=dim + 2);
    let r = rng.gen_range(1..=s.min(dim));
    let q = conditioned_factor(rng, space, r, s);
    let sys = EstimableSystem::new(q, random_weights(rng, s))?;
    maybe_normalize(rng, sys)
}

/// Range of the nonzero singular values drawn by `conditioned_factor`.
pub const SINGULAR_VALUE_RANGE: (f64, f64) = (0.3, 2.0);

/// `v x s` matrix of rank `r` with columns in `space`: `B O_r diag(sigma) V^T`
/// with random orthonormal `O_r` (dim x r) and `V` (s x r) and singular values
/// drawn uniformly from `SINGULAR_VALUE_RANGE`.
pub fn conditioned_factor<R: Rng + ?Sized>(rng: &mut R, space: &EstimationSpace, r: usize, s: usize) -> DMatrix<f64> {
    let dim = space.dim();
    assert!(r >= 1 && r <= dim.min(s), "rank {r} out of range");
    let (lo, hi) = SINGULAR_VALUE_RANGE;
    let o = random_orthogonal(rng, dim).columns(0, r).into_owned();
    let mut left = space.basis() * o;
    for j in 0..r {
        let sigma = rng.gen_range(lo..=hi);
        left.column_mut(j).scale_mut(sigma);
    }
    let v = random_orthogonal(rng, s).columns(0, r).into_owned();
    left * v.transpose()
}

/// Positive definite `A A^T / v + I/2`.
pub fn random_pd_matrix<R: Rng + ?Sized>(rng: &mut R, v: usize) -> SymMatrix {
    let a = gaussian_matrix(rng, v, v);
    SymMatrix::symmetrize(&a * a.transpose() / v as f64 + DMatrix::identity(v, v) * 0.5)
}

/// Weight matrix `K K^T` of random rank `d` in `1..=dim(E)` inside `space`.
pub fn random_weight_matrix<R: Rng + ?Sized>(rng: &mut R, space: &EstimationSpace) -> Result<WeightMatrix> {
    let d = rng.gen_range(1..=space.dim());
    let k = conditioned_factor(rng, space, d, d);
    WeightMatrix::new(SymMatrix::gram_outer(&k), space)
}
