//! Optimizer behavior checks: exactness on quadratics, descent on the real
//! loss, and agreement with an exhaustive grid search oracle.

mod common;

use common::table_setup;
use thermofit::bayes::{LossContext, Prior, PriorSpec, SensorErrorModel};
use thermofit::data::{synthesize, GroundTruthConductivity, MeasurementSchedule};
use thermofit::optimize::{map_estimate, minimize, MinimizeResult, OptimizerConfig};
use thermofit::solver::Discretization;

fn prior_spec() -> PriorSpec {
    PriorSpec { mu_k: 0.3, sigma_k: 0.03, length_scale: 9.0 }
}

/// Small synthetic dataset for fast objective evaluations.
fn small_context(n_s: usize) -> LossContext {
    let truth = GroundTruthConductivity::default_paraffin();
    let mut setup = table_setup();
    setup.t_total = 14_400.0;
    let schedule = MeasurementSchedule::new(240.0, 60).unwrap();
    let em = SensorErrorModel::from_csv_str(thermofit::data::DEFAULT_ERROR_CSV).unwrap();
    let ds = synthesize(&truth, &setup, &schedule, &em, 8).unwrap();
    LossContext::new(&ds, &setup, &prior_spec(), n_s).unwrap()
}

#[test]
fn quadratic_bowl_converges_in_three_iterations() {
    // f(p) = 1/2 (p - a)' A (p - a) with A SPD: one Newton step suffices,
    // convergence is detected within three iterations.
    let a = [0.7, 1.3, 0.4];
    let mat = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
    let f = |p: &[f64]| -> thermofit::Result<f64> {
        let d: Vec<f64> = p.iter().zip(&a).map(|(x, c)| x - c).collect();
        let mut v = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                v += 0.5 * d[i] * mat[i][j] * d[j];
            }
        }
        Ok(v)
    };
    let r: MinimizeResult = minimize(&f, &[1.0, 1.0, 1.0], &OptimizerConfig::default()).unwrap();
    assert!(r.converged, "did not converge");
    assert!(r.n_iterations <= 3, "took {} iterations", r.n_iterations);
    for (got, want) in r.p.iter().zip(&a) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn evaluation_budget_is_accounted_exactly_on_a_quadratic() {
    // Every iteration that rebuilds the model spends 2n + n(n-1)/2 probes
    // plus one trial; one extra evaluation seeds the start point.
    let f = |p: &[f64]| -> thermofit::Result<f64> { Ok(p.iter().map(|x| (x - 2.0) * (x - 2.0)).sum()) };
    let cfg = OptimizerConfig::default();
    let r = minimize(&f, &[0.5, 0.5, 0.5, 0.5], &cfg).unwrap();
    let n = 4;
    let per_iter = 2 * n + n * (n - 1) / 2 + 1;
    // All iterations accepted on a quadratic, so the model is rebuilt each time.
    assert_eq!(r.n_evals, 1 + r.n_iterations * per_iter);
}

#[test]
fn pure_prior_objective_recovers_the_prior_mean() {
    let spec = prior_spec();
    let knots: Vec<f64> = (0..=4).map(|i| 20.0 + 7.0 * i as f64).collect();
    let prior = Prior::new(spec, knots).unwrap();
    let f = |p: &[f64]| prior.s_prior(p);
    let cfg = OptimizerConfig { abs_tol: 1e-6, rel_tol: 1e-6, ..OptimizerConfig::default() };
    let r = minimize(&f, &[0.2, 0.35, 0.31, 0.25, 0.4], &cfg).unwrap();
    assert!(r.converged);
    for v in &r.p {
        assert!((v - 0.3).abs() < 1e-5, "knot value {v} should sit at the prior mean");
    }
}

#[test]
fn map_descends_from_a_cold_start_on_real_data() {
    let ctx = small_context(2);
    let disc = Discretization { n_e: 12, n_t: 64 };
    let p0 = vec![0.3; 3];
    let start = ctx.evaluate(&p0, &disc).unwrap();
    let r = map_estimate(&ctx, &disc, &p0, &OptimizerConfig::default()).unwrap();
    assert!(r.loss.s_total < start.s_total, "{} should undercut {}", r.loss.s_total, start.s_total);
    assert!(r.p.iter().all(|k| *k > 0.0));
    assert!(r.n_evals > 0 && r.n_iterations > 0);
}

#[test]
fn map_agrees_with_a_grid_search_oracle_on_a_single_segment() {
    // n_s = 1 has two knot values; an exhaustive grid bracket around the
    // optimum must contain the optimizer's answer.
    let ctx = small_context(1);
    let disc = Discretization { n_e: 11, n_t: 64 };

    let r = map_estimate(
        &ctx,
        &disc,
        &[0.3, 0.3],
        &OptimizerConfig { abs_tol: 1e-4, rel_tol: 1e-4, ..OptimizerConfig::default() },
    )
    .unwrap();

    let mut coarse = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=30 {
        for j in 0..=30 {
            let k0 = 0.15 + 0.01 * i as f64;
            let k1 = 0.10 + 0.01 * j as f64;
            let v = ctx.evaluate(&[k0, k1], &disc).unwrap().s_total;
            if v < coarse.0 {
                coarse = (v, k0, k1);
            }
        }
    }
    // Second stage sharpens the bracket around the coarse winner before
    // comparing argmins.
    let mut best = coarse;
    for i in -10..=10 {
        for j in -10..=10 {
            let k0 = coarse.1 + 0.001 * i as f64;
            let k1 = coarse.2 + 0.001 * j as f64;
            let v = ctx.evaluate(&[k0, k1], &disc).unwrap().s_total;
            if v < best.0 {
                best = (v, k0, k1);
            }
        }
    }
    // The optimizer must land inside the winning fine cell (spacing 0.001).
    assert!((r.p[0] - best.1).abs() <= 0.002, "k0 {} vs grid {}", r.p[0], best.1);
    assert!((r.p[1] - best.2).abs() <= 0.002, "k1 {} vs grid {}", r.p[1], best.2);
    assert!(r.loss.s_total <= best.0 + 1e-9, "grid beat the optimizer: {} < {}", best.0, r.loss.s_total);
}

#[test]
fn positivity_floor_keeps_iterates_physical()
{
    // An objective pulling hard toward negative values: iterates stay at
    // or above the floor and the solver never sees a non-physical k.
    let f = |p: &[f64]| -> thermofit::Result<f64> {
        if p.iter().any(|v| *v <= 0.0) {
            return Err(thermofit::Error::numerical("negative".to_string()));
        }
        Ok(p.iter().map(|x| (x + 1.0) * (x + 1.0)).sum())
    };
    let r = minimize(&f, &[0.5, 0.5], &OptimizerConfig::default()).unwrap();
    assert!(r.p.iter().all(|v| *v >= 1e-4));
}

#[test]
fn fd_gradient_matches_analytic_on_a_cubic() {
    let f = |p: &[f64]| -> thermofit::Result<f64> {
        Ok(p[0].powi(3) + 2.0 * p[1].powi(2) * p[0] + p[1])
    };
    let p = [1.2, -0.7];
    let g = thermofit::optimize::fd_gradient(&f, &p, 1e-6).unwrap();
    let want = [3.0 * p[0] * p[0] + 2.0 * p[1] * p[1], 4.0 * p[1] * p[0] + 1.0];
    for (got, want) in g.iter().zip(&want) {
        assert!((got - want).abs() < 1e-6 * want.abs().max(1.0), "{got} vs {want}");
    }
}
