//! Exact design search: exhaustive enumeration for small instances and a
//! point-exchange heuristic with seeded restarts for larger ones.
//!
//! Designs whose information matrix does not span the estimation space are
//! infeasible and never scored. The objective is the criterion evaluated on
//! the positive spectrum, so the system route and the weighted route are
//! directly comparable even for redundant systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::criteria::{criterion_value, Criterion, CriterionValue};
use crate::error::{Error, Result};
use crate::estimable::{
    info_matrix_from_information, require_in_space, system_from_weight_matrix_sqrt, EstimableSystem,
};
use crate::linalg::{max_abs, SymMatrix};
use crate::model::{DesignSpec, EstimationSpace, Information, Nuisance, NuisanceModel};
use crate::weighting::{weight_matrix_from_system, weighted_info_from, WeightMatrix};

/// Largest number of assignments [`enumerate_optimal`] will visit.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;
/// Relative tolerance for membership in the optimal set.
pub const ARGMAX_TOL: f64 = 1e-9;
/// Relative margin an exchange move must clear to count as an improvement.
const IMPROVEMENT_TOL: f64 = 1e-12;
const START_DRAWS: usize = 1000;

#[derive(Debug, Clone)]
pub enum Target {
    System(EstimableSystem),
    Weight(WeightMatrix),
}

/// Which information matrix the criterion is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    /// `N_Q~` for a system, `N_{W^{1/2}}` for a weight matrix.
    Information,
    /// `C_{W_Q~}` for a system, `C_W` for a weight matrix.
    Weighted,
}

#[derive(Debug, Clone)]
pub struct SearchProblem {
    pub v: usize,
    pub n: usize,
    pub nuisance: Nuisance,
    pub space: EstimationSpace,
    pub target: Target,
    pub criterion: Criterion,
    pub route: Route,
    pub seed: u64,
    pub restarts: usize,
    pub max_passes: usize,
}

impl SearchProblem {
    /// Validates the target against the estimation space. Defaults: system
    /// route for systems, weighted route for weight matrices, seed 0, 20
    /// restarts, 100 passes.
    pub fn new(
        v: usize,
        n: usize,
        nuisance: Nuisance,
        space: EstimationSpace,
        target: Target,
        criterion: Criterion,
    ) -> Result<Self> {
        if space.v() != v {
            return Err(Error::Dimension(format!("estimation space has v = {}, problem has v = {v}", space.v())));
        }
        if n == 0 {
            return Err(Error::InvalidDesign("n must be positive".into()));
        }
        let route = match &target {
            Target::System(sys) => {
                if sys.v() != v {
                    return Err(Error::Dimension(format!("system has {} rows, expected {v}", sys.v())));
                }
                require_in_space(sys, &space)?;
                Route::Information
            }
            Target::Weight(w) => {
                if w.v() != v {
                    return Err(Error::Dimension(format!("weight matrix is {0}x{0}, expected {v}", w.v())));
                }
                let k = w.factor();
                let allowed = crate::model::SPACE_RTOL * 1f64.max(max_abs(k));
                let residual = space.residual(k);
                if residual > allowed {
                    return Err(Error::OutsideEstimationSpace { residual, allowed });
                }
                Route::Weighted
            }
        };
        // Surface nuisance errors now rather than inside the search.
        NuisanceModel::new(&nuisance, n)?;
        Ok(Self {
            v,
            n,
            nuisance,
            space,
            target,
            criterion,
            route,
            seed: 0,
            restarts: 20,
            max_passes: 100,
        })
    }

    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(1);
        self
    }

    pub fn with_max_passes(mut self, max_passes: usize) -> Self {
        self.max_passes = max_passes.max(1);
        self
    }

    pub fn with_criterion(mut self, criterion: Criterion) -> Self {
        self.criterion = criterion;
        self
    }

    /// Whether every relabelling of treatments leaves the objective and the
    /// estimation space unchanged, so the first unit may be fixed.
    pub fn label_symmetric(&self) -> bool {
        let w = match &self.target {
            Target::System(sys) => SymMatrix::gram_outer(&sys.scaled()),
            Target::Weight(w) => w.matrix().clone(),
        };
        exchangeable(w.matrix()) && exchangeable(self.space.projector().matrix())
    }

    /// Assignments [`enumerate_optimal`] would visit.
    pub fn enumeration_size(&self) -> u128 {
        let free = if self.label_symmetric() { self.n - 1 } else { self.n };
        (self.v as u128).checked_pow(free as u32).unwrap_or(u128::MAX)
    }

    pub fn is_enumerable(&self) -> bool {
        self.enumeration_size() <= ENUMERATION_LIMIT
    }
}

/// `a I + b J` up to a relative `1e-10`.
fn exchangeable(m: &nalgebra::DMatrix<f64>) -> bool {
    let v = m.nrows();
    let tol = 1e-10 * 1f64.max(max_abs(m));
    let diag = m[(0, 0)];
    let off = if v > 1 { m[(0, 1)] } else { 0.0 };
    (0..v).all(|i| (0..v).all(|j| (m[(i, j)] - if i == j { diag } else { off }).abs() <= tol))
}

/// Scores assignments for one problem and route.
struct Evaluator<'a> {
    problem: &'a SearchProblem,
    model: NuisanceModel,
    target: EvalTarget,
}

enum EvalTarget {
    System(EstimableSystem),
    Weight(WeightMatrix),
}

impl<'a> Evaluator<'a> {
    fn new(problem: &'a SearchProblem, route: Route) -> Result<Self> {
        let target = match (&problem.target, route) {
            (Target::System(sys), Route::Information) => EvalTarget::System(sys.clone()),
            (Target::System(sys), Route::Weighted) => {
                EvalTarget::Weight(weight_matrix_from_system(sys, &problem.space)?)
            }
            (Target::Weight(w), Route::Information) => EvalTarget::System(system_from_weight_matrix_sqrt(w)?),
            (Target::Weight(w), Route::Weighted) => EvalTarget::Weight(w.clone()),
        };
        Ok(Self {
            problem,
            model: NuisanceModel::new(&problem.nuisance, problem.n)?,
            target,
        })
    }

    /// `None` for infeasible assignments.
    fn evaluate(&self, assignment: &[usize]) -> Result<Option<CriterionValue>> {
        let info = Information::new(self.model.information(self.problem.v, assignment))?;
        if info.require_estimation_space(&self.problem.space).is_err() {
            return Ok(None);
        }
        let m = match &self.target {
            EvalTarget::System(sys) => {
                if !info.is_feasible(sys.q()) {
                    return Ok(None);
                }
                info_matrix_from_information(&info, sys)?
            }
            EvalTarget::Weight(w) => {
                if !info.is_feasible(w.factor()) {
                    return Ok(None);
                }
                weighted_info_from(&info, w)?
            }
        };
        criterion_value(&m, self.problem.criterion).map(Some)
    }

    fn score(&self, assignment: &[usize]) -> Result<Option<f64>> {
        Ok(self.evaluate(assignment)?.map(|c| c.positive_value()))
    }
}

/// Per-restart record of an exchange run.
#[derive(Debug, Clone, PartialEq)]
pub struct RestartTrace {
    pub restart: usize,
    pub seed: u64,
    pub start_value: f64,
    pub value: f64,
    pub passes: usize,
    /// Objective after each accepted move, strictly increasing.
    pub moves: Vec<f64>,
    pub assignment: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub best: DesignSpec,
    pub value: CriterionValue,
    /// Objective that was maximized (criterion on the positive spectrum).
    pub objective: f64,
    /// Best objective per restart; a single entry for enumeration.
    pub trace: Vec<f64>,
    pub restarts: Vec<RestartTrace>,
    pub enumerated: bool,
    /// All optimal assignments (0-based), sorted, for enumeration.
    pub optimal_designs: Vec<Vec<usize>>,
    /// Enumeration fixed the first unit to treatment 0.
    pub symmetry_reduced: bool,
    pub evaluated: u64,
    pub feasible: u64,
}

fn decode(mut index: u64, v: usize, n: usize, fixed_first: bool, out: &mut [usize]) {
    let start = usize::from(fixed_first);
    if fixed_first {
        out[0] = 0;
    }
    for slot in out[start..n].iter_mut().rev() {
        *slot = (index % v as u64) as usize;
        index /= v as u64;
    }
}

/// Exact maximizer over every assignment of `n` units to `v` treatments.
pub fn enumerate_optimal(problem: &SearchProblem) -> Result<SearchResult> {
    enumerate_route(problem, problem.route)
}

fn enumerate_route(problem: &SearchProblem, route: Route) -> Result<SearchResult> {
    let size = problem.enumeration_size();
    if size > ENUMERATION_LIMIT {
        return Err(Error::SearchSpaceTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    let symmetric = problem.label_symmetric();
    let eval = Evaluator::new(problem, route)?;
    let (v, n) = (problem.v, problem.n);
    let scores: Vec<f64> = (0..size as u64)
        .into_par_iter()
        .map_init(
            || vec![0usize; n],
            |buf, idx| {
                decode(idx, v, n, symmetric, buf);
                eval.score(buf).map(|s| s.unwrap_or(f64::NAN))
            },
        )
        .collect::<Result<_>>()?;

    let best = scores
        .iter()
        .copied()
        .filter(|s| !s.is_nan())
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return Err(Error::NoFeasibleStart(size as usize));
    }
    let cut = best - ARGMAX_TOL * 1f64.max(best.abs());
    let mut buf = vec![0usize; n];
    let mut optimal = Vec::new();
    let mut first_best: Option<u64> = None;
    for (idx, &s) in scores.iter().enumerate() {
        if !s.is_nan() && s >= cut {
            decode(idx as u64, v, n, symmetric, &mut buf);
            optimal.push(buf.clone());
        }
        if s == best && first_best.is_none() {
            first_best = Some(idx as u64);
        }
    }
    optimal.sort();
    decode(first_best.expect("best exists"), v, n, symmetric, &mut buf);
    let spec = DesignSpec::new(v, buf.clone(), problem.nuisance.clone())?;
    let value = eval
        .evaluate(&buf)?
        .ok_or_else(|| Error::Internal("optimal design re-evaluated as infeasible".into()))?;
    Ok(SearchResult {
        best: spec,
        objective: best,
        value,
        trace: vec![best],
        restarts: Vec::new(),
        enumerated: true,
        optimal_designs: optimal,
        symmetry_reduced: symmetric,
        evaluated: size as u64,
        feasible: scores.iter().filter(|s| !s.is_nan()).count() as u64,
    })
}

/// Point exchange with `problem.restarts` seeded restarts.
pub fn exchange_search(problem: &SearchProblem) -> Result<SearchResult> {
    let eval = Evaluator::new(problem, problem.route)?;
    let mut master = ChaCha8Rng::seed_from_u64(problem.seed);
    let seeds: Vec<u64> = (0..problem.restarts.max(1)).map(|_| master.gen()).collect();
    let runs: Vec<(RestartTrace, u64)> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| run_restart(&eval, r, seed))
        .collect::<Result<_>>()?;

    // Highest value wins; ties go to the lowest restart index.
    let mut best_idx = 0;
    for (i, (t, _)) in runs.iter().enumerate() {
        if t.value > runs[best_idx].0.value {
            best_idx = i;
        }
    }
    let best_trace = &runs[best_idx].0;
    let spec = DesignSpec::new(problem.v, best_trace.assignment.clone(), problem.nuisance.clone())?;
    let value = eval
        .evaluate(&best_trace.assignment)?
        .ok_or_else(|| Error::Internal("exchange result re-evaluated as infeasible".into()))?;
    Ok(SearchResult {
        best: spec,
        objective: best_trace.value,
        value,
        trace: runs.iter().map(|(t, _)| t.value).collect(),
        evaluated: runs.iter().map(|(_, e)| e).sum(),
        feasible: 0,
        restarts: runs.into_iter().map(|(t, _)| t).collect(),
        enumerated: false,
        optimal_designs: Vec::new(),
        symmetry_reduced: false,
    })
}

fn run_restart(eval: &Evaluator<'_>, restart: usize, seed: u64) -> Result<(RestartTrace, u64)> {
    let problem = eval.problem;
    let (v, n) = (problem.v, problem.n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluated = 0u64;

    let mut start = None;
    for _ in 0..START_DRAWS {
        let a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..v)).collect();
        evaluated += 1;
        if let Some(s) = eval.score(&a)? {
            start = Some((a, s));
            break;
        }
    }
    let (mut assignment, mut value) = start.ok_or(Error::NoFeasibleStart(START_DRAWS))?;
    let start_value = value;
    let mut moves = Vec::new();
    let mut passes = 0;
    while passes < problem.max_passes {
        passes += 1;
        let mut improved = false;
        for unit in 0..n {
            let current = assignment[unit];
            let mut best: Option<(usize, f64)> = None;
            for t in (0..v).filter(|&t| t != current) {
                assignment[unit] = t;
                evaluated += 1;
                if let Some(s) = eval.score(&assignment)? {
                    if best.map_or(true, |(_, b)| s > b) {
                        best = Some((t, s));
                    }
                }
            }
            match best {
                Some((t, s)) if s > value + IMPROVEMENT_TOL * 1f64.max(value.abs()) => {
                    assignment[unit] = t;
                    value = s;
                    moves.push(s);
                    improved = true;
                }
                _ => assignment[unit] = current,
            }
        }
        if !improved {
            break;
        }
    }
    Ok((
        RestartTrace {
            restart,
            seed,
            start_value,
            value,
            passes,
            moves,
            assignment,
        },
        evaluated,
    ))
}

/// Enumeration when the instance is small enough, exchange otherwise.
pub fn search(problem: &SearchProblem) -> Result<SearchResult> {
    if problem.is_enumerable() {
        enumerate_optimal(problem)
    } else {
        exchange_search(problem)
    }
}

#[derive(Debug, Clone)]
pub struct ArgmaxEquivalence {
    pub information: SearchResult,
    pub weighted: SearchResult,
    pub value_deviation: f64,
    pub same_designs: bool,
    pub equivalent: bool,
}

/// Enumerates with both routes and compares optimal values and optimal sets.
pub fn argmax_equivalence_check(problem: &SearchProblem) -> Result<ArgmaxEquivalence> {
    let information = enumerate_route(problem, Route::Information)?;
    let weighted = enumerate_route(problem, Route::Weighted)?;
    let value_deviation =
        (information.objective - weighted.objective).abs() / 1f64.max(information.objective.abs());
    let same_designs = information.optimal_designs == weighted.optimal_designs;
    Ok(ArgmaxEquivalence {
        equivalent: same_designs && value_deviation <= ARGMAX_TOL,
        information,
        weighted,
        value_deviation,
        same_designs,
    })
}
