//! Acceptance suite. Runs without the libtest harness so that it prints one
//! line per criterion; exits nonzero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use nalgebra::DMatrix;
use rand::Rng;
use wdesign::criteria::{
    certify_batch, BatchOutcome, Certification, Criterion, A_OPT_TOL, CERTIFY_TOL, E_OPT_TOL,
};
use wdesign::estimable::{info_matrix_for_system, info_matrix_from_ginv, EstimableSystem};
use wdesign::instances::{self, gaussian_matrix, trial_rng};
use wdesign::linalg::{generalized_inverse, max_abs, SymMatrix};
use wdesign::model::{EstimationSpace, Nuisance};
use wdesign::search::{argmax_equivalence_check, SearchProblem, Target};
use wdesign::weighting::{
    check_weight_dominance, estimation_equivalent, secondary_weights, variance_decomposition, weight_matrix_from_system,
    weight_of, weight_with_ginv, weighted_variance_from, weighted_variance_with, WeightMatrix,
};

const FIXTURE_TOL: f64 = 1e-10;
const DISPLAY_TOL: f64 = 1e-12;
const DECOMPOSITION_SUM_TOL: f64 = 1e-9;
const DECOMPOSITION_TOL: f64 = 1e-8;
const DOMINANCE_SLACK: f64 = 1e-9;
const IDENTITY_TOL: f64 = 1e-9;
const ARGMAX_VALUE_TOL: f64 = 1e-9;
const GINV_TOL: f64 = 1e-9;

const BATCH_SEED: u64 = 7;
const BATCH_TRIALS: usize = 100;
const BATCH_BUDGET: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn value(w: &WeightMatrix, q: &[f64]) -> f64 {
    weight_of(w, &dv(q)).unwrap().value().expect("query inside C(W)")
}

fn non_equivalent_weight_matrices() -> Outcome {
    let full = EstimationSpace::full(3).unwrap();
    let a = WeightMatrix::new(w1(), &full).map_err(|e| e.to_string())?;
    let b = WeightMatrix::new(w2(), &full).map_err(|e| e.to_string())?;
    let wa = value(&a, &q3());
    let wb = value(&b, &q3());
    ensure((wa - 0.5).abs() <= FIXTURE_TOL, || format!("w(q) under W1 = {wa}"))?;
    ensure((wb - 1.0 / 3.0).abs() <= FIXTURE_TOL, || format!("w(q) under W2 = {wb}"))?;
    // q = q2 - q1, so with a unit diagonal q^T W^-1 q = 2 - 2x for the
    // off-diagonal x of Q^T W^-1 Q. A weight of 1/3 forces x = -1/2; the
    // identity holds for W1 only.
    let q = columns(&[q1(), q2()]);
    let ma = q.transpose() * a.pinv().matrix() * &q;
    let dev = max_abs(&(&ma - DMatrix::identity(2, 2)));
    ensure(dev <= FIXTURE_TOL, || format!("Q^T W1^-1 Q deviates from I by {dev:e}"))?;
    let mb = q.transpose() * b.pinv().matrix() * &q;
    let forced = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0]);
    let dev = max_abs(&(&mb - forced));
    ensure(dev <= FIXTURE_TOL, || format!("Q^T W2^-1 Q = {mb}"))?;
    let eq = estimation_equivalent(&a, &b).map_err(|e| e.to_string())?;
    ensure(!eq.equivalent, || "W1 and W2 reported estimation equivalent".into())?;
    Ok(format!(
        "w = {wa:.6} and {wb:.6}; Q^T W1^-1 Q = I; Q^T W2^-1 Q has unit diagonal and off-diagonal {:.6} (an identity here would contradict w = 1/3); not equivalent",
        mb[(0, 1)]
    ))
}

fn weight_matrix_displays() -> Outcome {
    let space = contrasts(3);
    let cases = [
        (None, [2.0, -1.0, -1.0, -1.0, 1.0, 0.0, -1.0, 0.0, 1.0]),
        (Some(vec![1.0, 2.0]), [3.0, -1.0, -2.0, -1.0, 1.0, 0.0, -2.0, 0.0, 2.0]),
    ];
    let mut worst: f64 = 0.0;
    for (b, entries) in cases {
        let w = weight_matrix_from_system(&system(&[q1(), q2()], b.clone()), &space).map_err(|e| e.to_string())?;
        let expect = DMatrix::from_row_slice(3, 3, &entries) * 0.5;
        let dev = max_abs(&(w.matrix().matrix() - expect));
        worst = worst.max(dev);
        ensure(dev <= DISPLAY_TOL, || format!("b = {b:?}: entrywise deviation {dev:e}"))?;
    }
    Ok(format!("max entrywise deviation {worst:.3e}"))
}

fn secondary_weight_fixtures() -> Outcome {
    let get = |report: wdesign::weighting::WeightReport| -> Vec<f64> {
        report.queries().map(|e| e.secondary.value().unwrap()).collect()
    };
    let implied = get(secondary_weights(&system(&[q1(), q2()], None), &[dv(&q3())]).unwrap());
    ensure((implied[0] - 0.5).abs() <= FIXTURE_TOL, || format!("w(q3) from (q1, q2) = {}", implied[0]))?;

    let other = get(secondary_weights(&system(&[q1(), q3()], Some(vec![1.0, 0.5])), &[dv(&q2())]).unwrap());
    ensure((other[0] - 1.0 / 3.0).abs() <= FIXTURE_TOL, || format!("w(q2) from (q1, q3) = {}", other[0]))?;

    let three = secondary_weights(&system(&[q1(), q2(), q3()], Some(vec![1.0, 1.0, 0.5])), &[]).unwrap();
    let got: Vec<f64> = three.columns().map(|e| e.secondary.value().unwrap()).collect();
    for (g, e) in got.iter().zip([4.0 / 3.0, 4.0 / 3.0, 1.0]) {
        ensure((g - e).abs() <= FIXTURE_TOL, || format!("three-contrast weights {got:?}"))?;
    }

    let dup = secondary_weights(&system(&[q1(), q1()], None), &[]).unwrap();
    let dup: Vec<f64> = dup.columns().map(|e| e.secondary.value().unwrap()).collect();
    ensure(dup.iter().all(|w| (w - 2.0).abs() <= FIXTURE_TOL), || format!("duplicated column weights {dup:?}"))?;
    // q^T (Q Q^T)^- q = 1/2 for the duplicated column.
    let w = weight_matrix_from_system(&system(&[q1(), q1()], None), &contrasts(3)).unwrap();
    let quad = dv(&q1()).dot(&(w.pinv().matrix() * dv(&q1())));
    ensure((quad - 0.5).abs() <= FIXTURE_TOL, || format!("q^T (QQ^T)^- q = {quad}"))?;
    Ok(format!("w(q3) = {:.6}, w(q2) = {:.6}, three = {got:.6?}, duplicated = {dup:.6?}", implied[0], other[0]))
}

fn batch_summary(batches: &[BatchOutcome], tol_of: impl Fn(Certification) -> f64) -> Result<Vec<String>, String> {
    let mut parts = Vec::new();
    for b in batches {
        let failures: Vec<String> = b
            .failures()
            .map(|t| match &t.error {
                Some(e) => format!("trial {} (seed {}): {e}", t.trial, b.seed),
                None => format!("trial {} (seed {}): deviation {:e}", t.trial, b.seed, t.max_deviation),
            })
            .collect();
        ensure(failures.is_empty(), || format!("{}: {}", b.certification, failures.join("; ")))?;
        let dev = b.max_deviation();
        ensure(dev <= tol_of(b.certification), || format!("{}: deviation {dev:e}", b.certification))?;
        parts.push(format!("{} {dev:.1e}", b.certification));
    }
    Ok(parts)
}

fn spectral_certifications() -> Outcome {
    let started = Instant::now();
    let batches: Vec<BatchOutcome> = [
        Certification::Theorem1,
        Certification::Theorem2,
        Certification::Theorem3,
        Certification::Theorem4,
    ]
    .into_iter()
    .map(|c| certify_batch(c, BATCH_TRIALS, BATCH_SEED))
    .collect();
    let elapsed = started.elapsed();
    let parts = batch_summary(&batches, |_| CERTIFY_TOL)?;
    ensure(batches.iter().all(|b| b.trials.len() == BATCH_TRIALS), || "missing trials".into())?;
    let trials = batches.iter().flat_map(|b| &b.trials);
    let vs: Vec<usize> = trials.clone().map(|t| t.v).collect();
    let blocked = trials.clone().filter(|t| t.blocks > 1).count();
    ensure(vs.iter().all(|v| (3..=8).contains(v)), || "v out of range".into())?;
    ensure(trials.clone().all(|t| t.n >= t.v && t.n <= 14), || "n out of range".into())?;
    ensure(blocked > 0 && blocked < 4 * BATCH_TRIALS, || "nuisance structures not mixed".into())?;
    ensure(elapsed <= BATCH_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} trials each, max deviation {}; {blocked} blocked designs; {:.1}s",
        BATCH_TRIALS,
        parts.join(", "),
        elapsed.as_secs_f64()
    ))
}

fn interpretation_oracles() -> Outcome {
    let batches = vec![
        certify_batch(Certification::EOpt, BATCH_TRIALS, BATCH_SEED),
        certify_batch(Certification::AOpt, BATCH_TRIALS, BATCH_SEED),
    ];
    let parts = batch_summary(&batches, |c| if c == Certification::EOpt { E_OPT_TOL } else { A_OPT_TOL })?;
    Ok(format!("{} trials each, max deviation {}", BATCH_TRIALS, parts.join(", ")))
}

fn proposition_suite() -> Outcome {
    let mut worst_sum: f64 = 0.0;
    let mut worst_rec: f64 = 0.0;
    let mut worst_identity: f64 = 0.0;
    let mut dependent_columns = 0;
    for t in 0..60 {
        let mut rng = trial_rng(2024, t);
        let d = instances::random_design(&mut rng).map_err(|e| e.to_string())?;

        let w = instances::random_weight_matrix(&mut rng, &d.space).map_err(|e| e.to_string())?;
        let q = w.factor() * gaussian_matrix(&mut rng, w.rank(), 1).column(0);
        let dec = variance_decomposition(&d.info, &w, &q).map_err(|e| e.to_string())?;
        ensure(dec.coefficients.iter().all(|&c| c >= 0.0), || format!("trial {t}: negative coefficient"))?;
        let sum: f64 = dec.coefficients.iter().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        ensure((sum - 1.0).abs() <= DECOMPOSITION_SUM_TOL, || format!("trial {t}: coefficients sum to {sum}"))?;
        let r = rel(dec.reconstructed(), dec.direct);
        worst_rec = worst_rec.max(r);
        ensure(r <= DECOMPOSITION_TOL, || format!("trial {t}: reconstruction deviation {r:e}"))?;

        // Full-rank normalized system: Q~^T W_Q~^+ Q~ = I_s.
        let s = rng.gen_range(1..=d.space.dim());
        let full = EstimableSystem::new(instances::conditioned_factor(&mut rng, &d.space, s, s), None)
            .and_then(|sys| sys.normalized())
            .map_err(|e| e.to_string())?;
        let wq = weight_matrix_from_system(&full, &d.space).map_err(|e| e.to_string())?;
        let qt = full.scaled();
        let dev = max_abs(&(qt.transpose() * wq.pinv().matrix() * &qt - DMatrix::identity(s, s)));
        worst_identity = worst_identity.max(dev);
        ensure(dev <= IDENTITY_TOL, || format!("trial {t}: Q^T W_Q^+ Q deviates from I by {dev:e}"))?;

        // Primary weights are lower bounds, strictly for dependent columns.
        let sys = instances::random_system(&mut rng, &d.space).map_err(|e| e.to_string())?;
        for dom in check_weight_dominance(&sys).map_err(|e| e.to_string())? {
            ensure(dom.secondary >= dom.primary - DOMINANCE_SLACK, || {
                format!("trial {t}: w(q{}) = {} < b = {}", dom.column + 1, dom.secondary, dom.primary)
            })?;
            if dom.dependent {
                dependent_columns += 1;
                ensure(dom.strict, || format!("trial {t}: dependent column {} not strict", dom.column + 1))?;
            }
        }
    }
    ensure(dependent_columns > 0, || "no dependent columns exercised".into())?;

    // I - J/v gives every normalized contrast weight 1.
    for v in 3..=8 {
        let space = contrasts(v);
        let w = WeightMatrix::new(space.projector().clone(), &space).map_err(|e| e.to_string())?;
        let mut rng = trial_rng(99, v as u64);
        for _ in 0..20 {
            let q = random_unit_in(&mut rng, &space);
            let got = weight_of(&w, &q).unwrap().value().unwrap();
            ensure((got - 1.0).abs() <= FIXTURE_TOL, || format!("v = {v}: weight {got}"))?;
        }
    }
    Ok(format!(
        "sum deviation {worst_sum:.1e}, reconstruction {worst_rec:.1e}, identity {worst_identity:.1e}, {dependent_columns} dependent columns strict"
    ))
}

fn argmax_equivalence() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for b in [None, Some(vec![1.0, 2.0])] {
        for n in 4..=6 {
            for criterion in [Criterion::D, Criterion::A, Criterion::E] {
                let sys = system(&[q1(), q2()], b.clone());
                let problem = SearchProblem::new(3, n, Nuisance::Intercept, contrasts(3), Target::System(sys), criterion)
                    .map_err(|e| e.to_string())?;
                let report = argmax_equivalence_check(&problem).map_err(|e| e.to_string())?;
                let label = format!("b = {b:?}, n = {n}, {criterion}");
                ensure(report.information.enumerated && report.weighted.enumerated, || {
                    format!("{label}: not enumerated")
                })?;
                ensure(report.same_designs, || format!("{label}: optimal sets differ"))?;
                ensure(report.value_deviation <= ARGMAX_VALUE_TOL, || {
                    format!("{label}: value deviation {:e}", report.value_deviation)
                })?;
                ensure(report.equivalent, || format!("{label}: not equivalent"))?;
                worst = worst.max(report.value_deviation);
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} problems, identical optimal sets, max value deviation {worst:.1e}"))
}

fn generalized_inverse_independence() -> Outcome {
    let mut worst: f64 = 0.0;
    let instances_count = 20;
    let ginvs = 50;
    for t in 0..instances_count {
        let mut rng = trial_rng(31, t);
        let d = instances::random_design(&mut rng).map_err(|e| e.to_string())?;
        let v = d.spec.v();
        let sys = instances::random_system(&mut rng, &d.space).map_err(|e| e.to_string())?;
        let w = instances::random_weight_matrix(&mut rng, &d.space).map_err(|e| e.to_string())?;
        let q = w.factor() * gaussian_matrix(&mut rng, w.rank(), 1).column(0);

        let n_ref = info_matrix_for_system(&d.spec, &sys).map_err(|e| e.to_string())?;
        let w_ref = weight_of(&w, &q).unwrap().value().unwrap();
        let wv_ref = weighted_variance_from(&d.info, &w, &q).map_err(|e| e.to_string())?;
        let c: &SymMatrix = d.info.matrix();
        for g in 0..ginvs {
            let gc = generalized_inverse(c, &gaussian_matrix(&mut rng, v, v)).map_err(|e| e.to_string())?;
            let gw = generalized_inverse(w.matrix(), &gaussian_matrix(&mut rng, v, v)).map_err(|e| e.to_string())?;
            let n_g = info_matrix_from_ginv(&gc, &sys.scaled()).map_err(|e| e.to_string())?;
            let dn = rel_diff(n_g.matrix(), n_ref.matrix());
            let dw = rel(weight_with_ginv(&w, &gw, &q).unwrap().value().unwrap(), w_ref);
            let dwv = rel(
                weighted_variance_with(&d.info, &w, &gc, &gw, &q).map_err(|e| e.to_string())?,
                wv_ref,
            );
            let dev = dn.max(dw).max(dwv);
            worst = worst.max(dev);
            ensure(dev <= GINV_TOL, || {
                format!("instance {t}, inverse {g}: N {dn:e}, weight {dw:e}, weighted variance {dwv:e}")
            })?;
        }
    }
    Ok(format!("{instances_count} instances x {ginvs} generalized inverses, max deviation {worst:.1e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("non-equivalent weight matrices", non_equivalent_weight_matrices),
        ("weight matrix displays", weight_matrix_displays),
        ("secondary weights", secondary_weight_fixtures),
        ("spectral certifications", spectral_certifications),
        ("A and E interpretation oracles", interpretation_oracles),
        ("weight and variance properties", proposition_suite),
        ("argmax equivalence of both routes", argmax_equivalence),
        ("generalized-inverse independence", generalized_inverse_independence),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name} ({secs:.2}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name} ({secs:.2}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
