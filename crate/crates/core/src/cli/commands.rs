use nalgebra::DVector;
use serde_json::Value;

use super::problem::Problem;
use super::report::{labels, matrix, num, nums, sym, Obj};
use super::{CliError, Status};
use crate::criteria::{
    a_opt_interpretation_check, certify_batch, certify_theorem1, certify_theorem2, certify_theorem3,
    certify_theorem4, e_opt_interpretation_check, phi_for_system_from, phi_weighted_from, BatchOutcome,
    Certification, CriterionValue, SpectralCertificate, A_OPT_TOL, E_OPT_TOL,
};
use crate::error::Error;
use crate::estimable::system_from_weight_matrix_sqrt;
use crate::instances::trial_rng;
use crate::linalg::eig_sym;
use crate::model::{Information, Nuisance, SpaceKind};
use crate::search::{self, argmax_equivalence_check, Route, SearchProblem, SearchResult, Target};
use crate::weighting::{
    check_weight_dominance, secondary_weights, weight_matrix_from_system, weight_of, Weight, WeightMatrix,
};

/// Deviation allowed between the two routes of `criterion`.
const ROUTE_TOL: f64 = 1e-9;

type Outcome = Result<(Value, Status), CliError>;

fn nuisance_text(n: &Nuisance) -> Value {
    match n {
        Nuisance::None => "none".into(),
        Nuisance::Intercept => "intercept".into(),
        Nuisance::Blocks(b) => Obj::new().set("blocks", b.clone()).into(),
        Nuisance::Explicit(l) => Obj::new().set("explicit", matrix(l)).into(),
    }
}

fn space_text(p: &Problem) -> Value {
    let kind = match p.space.kind() {
        SpaceKind::Full => "full",
        SpaceKind::Contrasts => "contrasts",
        SpaceKind::Basis(_) => "basis",
    };
    Obj::new().set("kind", kind).set("dim", p.space.dim()).into()
}

fn model_text(p: &Problem) -> Obj {
    let mut o = Obj::new().set("v", p.v).set("n", p.n).set("nuisance", nuisance_text(&p.nuisance));
    if let Some(spec) = &p.spec {
        o.put("assignment", labels(spec.assignment()));
        o.put("replications", spec.replications());
    }
    o
}

fn spanning_information(p: &Problem) -> Result<Information, CliError> {
    let info = Information::of(p.spec()?)?;
    info.require_estimation_space(&p.space)?;
    Ok(info)
}

pub fn info(p: &Problem) -> Outcome {
    let info = Information::of(p.spec()?)?;
    let mut o = model_text(p)
        .set("information_matrix", sym(info.matrix()))
        .set("spectrum", nums(info.spectrum().eigenvalues()))
        .set("rank", info.rank())
        .set("estimation_space", space_text(p))
        .set("spans_estimation_space", info.require_estimation_space(&p.space).is_ok());
    if let Some(sys) = &p.system {
        let bad: Vec<usize> = info.infeasible_columns(sys.q());
        o.put(
            "system",
            Obj::new()
                .set("columns", sys.s())
                .set("rank", sys.rank())
                .set("estimable", bad.is_empty())
                .set("non_estimable_columns", bad),
        );
    }
    if let Some(w) = &p.weight {
        let spectrum = eig_sym(w)?;
        let k = spectrum.range_basis();
        o.put(
            "weight_matrix",
            Obj::new()
                .set("rank", spectrum.numeric_rank())
                .set("estimable", k.ncols() > 0 && info.is_feasible(&k)),
        );
    }
    Ok((o.into(), Status::Ok))
}

fn value_text(c: &CriterionValue) -> Value {
    let mut o = Obj::new()
        .set("value", num(c.value))
        .set("positive_value", num(c.positive_value()))
        .set("rank", c.rank)
        .set("dim", c.dim())
        .set("spectrum", nums(&c.spectrum));
    if c.is_singular() && c.criterion == crate::criteria::Criterion::E {
        o.put("note", "singular matrix: full-spectrum E is 0; positive_value uses the positive spectrum");
    }
    o.into()
}

fn route_pair(first: (&str, &CriterionValue), second: (&str, &CriterionValue)) -> Value {
    let (a, b) = (first.1.positive_value(), second.1.positive_value());
    let deviation = (a - b).abs() / 1f64.max(a.abs());
    Obj::new()
        .set("criterion", first.1.criterion.to_string())
        .set(first.0, value_text(first.1))
        .set(second.0, value_text(second.1))
        .set("deviation", num(deviation))
        .set("routes_agree", deviation <= ROUTE_TOL)
        .into()
}

pub fn criterion(p: &Problem) -> Outcome {
    if p.system.is_none() && p.weight.is_none() {
        return Err(CliError::input("criterion needs a system or a weight_matrix section"));
    }
    let info = spanning_information(p)?;
    let mut o = model_text(p);
    if let Some(sys) = &p.system {
        let w = weight_matrix_from_system(sys, &p.space)?;
        let mut rows = Vec::new();
        for c in p.criteria() {
            let n_q = phi_for_system_from(&info, sys, c)?;
            let c_w = phi_weighted_from(&info, &w, c)?;
            rows.push(route_pair(("system_route", &n_q), ("weighted_route", &c_w)));
        }
        o.put("system", rows);
    }
    if let Some(w) = p.weight_matrix()? {
        let root = system_from_weight_matrix_sqrt(&w)?;
        let mut rows = Vec::new();
        for c in p.criteria() {
            let c_w = phi_weighted_from(&info, &w, c)?;
            let n_root = phi_for_system_from(&info, &root, c)?;
            rows.push(route_pair(("weighted_route", &c_w), ("system_route", &n_root)));
        }
        o.put("weight_matrix", rows);
    }
    Ok((o.into(), Status::Ok))
}

/// Parses `"0,-1,1"`, `"0 -1 1"` or entries like `1/2`.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            let parsed = match s.split_once('/') {
                Some((a, b)) => a.trim().parse::<f64>().and_then(|a| b.trim().parse::<f64>().map(|b| a / b)),
                None => s.parse::<f64>(),
            };
            parsed.map_err(|_| CliError::input(format!("cannot parse {s:?} in query vector {text:?}")))
        })
        .collect()
}

fn weight_text(w: Weight) -> Value {
    match w {
        Weight::Positive(x) => num(x),
        Weight::OutsideSpan => "outside span (zero weight)".into(),
    }
}

fn annotated(w: &WeightMatrix) -> Value {
    let m = w.matrix();
    let v = m.dim();
    let diagonal: Vec<Value> = (0..v)
        .map(|i| {
            Obj::new()
                .set("parameter", i + 1)
                .set("value", num(m.get(i, i)))
                .set("meaning", format!("weight of parameter {}", i + 1))
                .into()
        })
        .collect();
    let mut off = Vec::new();
    for i in 0..v {
        for j in i + 1..v {
            off.push(
                Obj::new()
                    .set("parameters", vec![i + 1, j + 1])
                    .set("value", num(m.get(i, j)))
                    .set("meaning", format!("interest in comparing parameters {} and {}", i + 1, j + 1))
                    .into(),
            );
        }
    }
    Obj::new()
        .set("matrix", sym(m))
        .set("diagonal", diagonal)
        .set("off_diagonal", Value::Array(off))
        .into()
}

pub fn weights(p: &Problem, queries: &[String]) -> Outcome {
    let queries: Vec<DVector<f64>> = queries
        .iter()
        .map(|q| {
            let v = parse_vector(q)?;
            if v.len() != p.v {
                return Err(CliError::input(format!("query {q:?} has {} entries, expected v = {}", v.len(), p.v)));
            }
            Ok(DVector::from_vec(v))
        })
        .collect::<Result<_, _>>()?;
    let mut o = Obj::new();
    if let Some(sys) = &p.system {
        let report = secondary_weights(sys, &queries)?;
        let dominance = check_weight_dominance(sys)?;
        let columns: Vec<Value> = report
            .columns()
            .zip(&dominance)
            .map(|(e, d)| {
                Obj::new()
                    .set("column", d.column + 1)
                    .set("q", nums(&e.q))
                    .set("primary", num(d.primary))
                    .set("secondary", num(d.secondary))
                    .set("dependent", d.dependent)
                    .set("dominates", d.strict)
                    .into()
            })
            .collect();
        let asked: Vec<Value> = report
            .queries()
            .enumerate()
            .map(|(j, e)| {
                Obj::new()
                    .set("query", j + 1)
                    .set("q", nums(&e.q))
                    .set("in_span", e.in_span)
                    .set("weight", weight_text(e.secondary))
                    .into()
            })
            .collect();
        let w_q = WeightMatrix::new(
            crate::linalg::SymMatrix::gram_outer(&sys.scaled()),
            &crate::model::EstimationSpace::full(p.v)?,
        )?;
        o.put("columns", columns);
        o.put("queries", asked);
        o.put("implied_weight_matrix", annotated(&w_q));
    } else if let Some(w) = p.weight_matrix()? {
        let asked: Vec<Value> = queries
            .iter()
            .enumerate()
            .map(|(j, q)| {
                let wt = weight_of(&w, q)?;
                Ok(Obj::new()
                    .set("query", j + 1)
                    .set("q", nums(q.as_slice()))
                    .set("in_span", matches!(wt, Weight::Positive(_)))
                    .set("weight", weight_text(wt))
                    .into())
            })
            .collect::<Result<_, Error>>()?;
        o.put("queries", asked);
        o.put("weight_matrix", annotated(&w));
    } else {
        return Err(CliError::input("weights needs a system or a weight_matrix section"));
    }
    Ok((o.into(), Status::Ok))
}

fn certificate_text(c: &SpectralCertificate) -> Value {
    Obj::new()
        .set("certification", c.certification.name())
        .set("status", if c.passed { "passed" } else { "failed" })
        .set("max_deviation", num(c.max_deviation))
        .set("system_side", nums(&c.lhs))
        .set("weighted_side", nums(&c.rhs))
        .into()
}

fn skipped(c: Certification, reason: impl Into<String>) -> Value {
    Obj::new()
        .set("certification", c.name())
        .set("status", "skipped")
        .set("reason", reason.into())
        .into()
}

/// Certification of the file's own instance. `Ok(None)` when the file does
/// not provide what the certification needs.
fn file_instance(p: &Problem, c: Certification, seed: u64) -> Result<Option<(Value, bool)>, Error> {
    let Some(spec) = &p.spec else { return Ok(None) };
    let info = Information::of(spec)?;
    info.require_estimation_space(&p.space)?;
    let sys = p.system.as_ref();
    let cert = |s: SpectralCertificate| Some((certificate_text(&s), s.passed));
    let weight_or_implied = || -> Result<Option<WeightMatrix>, Error> {
        match (p.weight_matrix()?, sys) {
            (Some(w), _) => Ok(Some(w)),
            (None, Some(s)) => weight_matrix_from_system(s, &p.space).map(Some),
            (None, None) => Ok(None),
        }
    };
    Ok(match c {
        Certification::Theorem1 => match sys {
            Some(s) => cert(certify_theorem1(&info, s, &p.space)?),
            None => None,
        },
        Certification::Theorem2 => match &p.weight {
            Some(w) => {
                if eig_sym(w)?.numeric_rank() < w.dim() {
                    return Err(Error::InvalidWeight(
                        "theorem2 needs a positive definite W; certify theorem4 for singular W".into(),
                    ));
                }
                cert(certify_theorem2(&info, w, &p.space)?)
            }
            None => None,
        },
        Certification::Theorem3 => match sys {
            Some(s) => cert(certify_theorem3(&info, s, &p.space)?),
            None => None,
        },
        Certification::Theorem4 => match weight_or_implied()? {
            Some(w) => cert(certify_theorem4(&info, &w)?),
            None => None,
        },
        Certification::AOpt => match weight_or_implied()? {
            Some(w) => {
                let r = a_opt_interpretation_check(spec, &w, &mut trial_rng(seed, u64::MAX), 3)?;
                let o = Obj::new()
                    .set("certification", c.name())
                    .set("status", if r.passed { "passed" } else { "failed" })
                    .set("max_deviation", num(r.max_deviation))
                    .set("inverse_phi_a", num(r.inverse_phi_a))
                    .set("rotation_averages", nums(&r.rotation_averages))
                    .set("w_orthogonal_average", num(r.orthogonal_average))
                    .set("tolerance", num(A_OPT_TOL));
                Some((o.into(), r.passed))
            }
            None => None,
        },
        Certification::EOpt => match weight_or_implied()? {
            Some(w) => {
                let r = e_opt_interpretation_check(spec, &w, &mut trial_rng(seed, u64::MAX), 1000)?;
                let o = Obj::new()
                    .set("certification", c.name())
                    .set("status", if r.passed { "passed" } else { "failed" })
                    .set("max_deviation", num(r.max_deviation))
                    .set("inverse_phi_e", num(r.inverse_phi_e))
                    .set("lambda_max", num(r.lambda_max))
                    .set("sampled_max", num(r.sampled_max))
                    .set("samples", r.samples)
                    .set("tolerance", num(E_OPT_TOL));
                Some((o.into(), r.passed))
            }
            None => None,
        },
    })
}

fn batch_text(b: &BatchOutcome) -> Value {
    let failures: Vec<Value> = b
        .failures()
        .map(|t| {
            let mut o = Obj::new()
                .set("trial", t.trial)
                .set("seed", b.seed)
                .set("v", t.v)
                .set("n", t.n)
                .set("max_deviation", num(t.max_deviation));
            if let Some(e) = &t.error {
                o.put("error", e.clone());
            }
            o.into()
        })
        .collect();
    Obj::new()
        .set("certification", b.certification.name())
        .set("trials", b.trials.len())
        .set("seed", b.seed)
        .set("passed", b.all_passed())
        .set("max_deviation", num(b.max_deviation()))
        .set("failures", failures)
        .into()
}

pub fn certify(p: Option<&Problem>, which: &str, trials: usize, seed: u64) -> Outcome {
    let selected: Vec<Certification> = if which.eq_ignore_ascii_case("all") {
        Certification::ALL.to_vec()
    } else {
        vec![which.parse::<Certification>().map_err(CliError::input)?]
    };
    let explicit = selected.len() == 1;
    let mut passed = true;
    let mut instance = Vec::new();
    if let Some(p) = p {
        for &c in &selected {
            match file_instance(p, c, seed) {
                Ok(Some((report, ok))) => {
                    passed &= ok;
                    instance.push(report);
                }
                Ok(None) if explicit => {
                    return Err(CliError::input(format!("the problem file lacks the inputs {c} needs")))
                }
                Ok(None) => instance.push(skipped(c, "file lacks the required inputs")),
                Err(e) if explicit => return Err(e.into()),
                Err(e) => instance.push(skipped(c, e.to_string())),
            }
        }
    }
    let batches: Vec<Value> = selected
        .iter()
        .map(|&c| {
            let b = certify_batch(c, trials, seed);
            passed &= b.all_passed();
            batch_text(&b)
        })
        .collect();
    let mut o = Obj::new().set("which", which.to_ascii_lowercase());
    if p.is_some() {
        o.put("file_instance", instance);
    }
    o.put("random_trials", batches);
    o.put("passed", passed);
    Ok((o.into(), if passed { Status::Ok } else { Status::Failed }))
}

fn result_text(r: &SearchResult) -> Obj {
    let mut o = Obj::new()
        .set("method", if r.enumerated { "enumeration" } else { "exchange" })
        .set(
            "best",
            Obj::new()
                .set("assignment", labels(r.best.assignment()))
                .set("replications", r.best.replications())
                .set("objective", num(r.objective))
                .set("criterion", value_text(&r.value)),
        )
        .set("trace", nums(&r.trace))
        .set("evaluated", r.evaluated);
    if r.enumerated {
        o.put("feasible", r.feasible);
        o.put("symmetry_reduced", r.symmetry_reduced);
        o.put("optimal_design_count", r.optimal_designs.len());
        o.put("optimal_designs", Value::Array(r.optimal_designs.iter().map(|a| labels(a)).collect()));
    } else {
        let restarts: Vec<Value> = r
            .restarts
            .iter()
            .map(|t| {
                Obj::new()
                    .set("restart", t.restart)
                    .set("seed", t.seed)
                    .set("start", num(t.start_value))
                    .set("value", num(t.value))
                    .set("passes", t.passes)
                    .set("moves", t.moves.len())
                    .into()
            })
            .collect();
        o.put("restarts", restarts);
    }
    o
}

pub fn search_cmd(p: &Problem, both_routes: bool, seed: Option<u64>) -> Outcome {
    let settings = p
        .search
        .clone()
        .ok_or_else(|| CliError::input("search needs a search section"))?;
    let criterion = p
        .criterion
        .ok_or_else(|| CliError::input("search needs a criterion section"))?;
    let target = match (&p.system, p.weight_matrix()?) {
        (Some(sys), None) => Target::System(sys.clone()),
        (None, Some(w)) => Target::Weight(w),
        _ => return Err(CliError::input("search needs exactly one of system and weight_matrix")),
    };
    let problem = SearchProblem::new(p.v, p.n, p.nuisance.clone(), p.space.clone(), target, criterion)?
        .with_seed(seed.unwrap_or(settings.seed))
        .with_restarts(settings.restarts)
        .with_max_passes(settings.max_passes);
    let result = search::search(&problem)?;
    let route = match problem.route {
        Route::Information => "system",
        Route::Weighted => "weighted",
    };
    let mut o = Obj::new()
        .set("v", p.v)
        .set("n", p.n)
        .set("nuisance", nuisance_text(&p.nuisance))
        .set("criterion", criterion.to_string())
        .set("route", route)
        .set("seed", problem.seed)
        .set("enumeration_size", problem.enumeration_size().to_string())
        .set("result", result_text(&result));
    let mut status = Status::Ok;
    if both_routes {
        if problem.is_enumerable() {
            let eq = argmax_equivalence_check(&problem)?;
            if !eq.equivalent {
                status = Status::Failed;
            }
            o.put(
                "both_routes",
                Obj::new()
                    .set("system_route_value", num(eq.information.objective))
                    .set("weighted_route_value", num(eq.weighted.objective))
                    .set("value_deviation", num(eq.value_deviation))
                    .set("same_optimal_designs", eq.same_designs)
                    .set("optimal_design_count", eq.information.optimal_designs.len())
                    .set("equivalent", eq.equivalent),
            );
        } else {
            o.put("both_routes", Obj::new().set("skipped", "instance is too large to enumerate"));
        }
    }
    Ok((o.into(), status))
}

