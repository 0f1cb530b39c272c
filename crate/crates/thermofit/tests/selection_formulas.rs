//! Closed-form checks of the information criteria.

use thermofit::mcmc::PosteriorChain;
use thermofit::selection::{bic, complexity_justified, dic, SelectionRecord};

fn record(n_s: usize, bic_v: f64, dic_v: Option<f64>) -> SelectionRecord {
    SelectionRecord {
        n_s,
        bic: bic_v,
        dic: dic_v,
        p_d: 0.0,
        log_likelihood_at_map: 0.0,
        log_posterior_at_map: 0.0,
        s_like_at_map: 0.0,
    }
}

#[test]
fn bic_formula_is_exact() {
    // log L-hat = 0, n_p = 3, n_d = 8640 -> 3 ln(8640).
    let got = bic(0.0, 3, 8640).unwrap();
    let want = 3.0 * 8640f64.ln();
    assert!((got - want).abs() <= 1e-9 * want.abs());
    assert!((want - 27.19).abs() < 0.01);

    // Doubling n_p at fixed fit adds exactly n_p ln(n_d).
    let a = bic(-123.4, 5, 1000).unwrap();
    let b = bic(-123.4, 10, 1000).unwrap();
    assert!((b - a - 5.0 * 1000f64.ln()).abs() < 1e-9);

    assert!(bic(0.0, 0, 10).is_err());
    assert!(bic(0.0, 3, 0).is_err());
}

#[test]
fn dic_of_a_degenerate_chain_is_twice_the_negative_log_likelihood() {
    // All samples identical: V = 0, DIC = -2 log P(d | p-bar).
    let mut samples = Vec::new();
    let mut chain_lls = Vec::new();
    for _ in 0..50 {
        samples.extend_from_slice(&[0.3, 0.4]);
        chain_lls.push(-7.5);
    }
    let mut chain = PosteriorChain::from_samples(samples, 2, 0).unwrap();
    chain.log_likelihoods = chain_lls;
    let (d, p_d) = dic(&chain, |p| {
        assert!((p[0] - 0.3).abs() < 1e-15 && (p[1] - 0.4).abs() < 1e-15);
        Ok(-7.5)
    })
    .unwrap();
    assert_eq!(p_d, 0.0);
    assert!((d - 15.0).abs() <= 1e-9 * 15.0);
}

#[test]
fn two_point_likelihood_variance_gives_p_d_of_four() {
    // Log-likelihoods {0, 2} equally: unbiased variance 2, p_D = 4.
    let mut samples = Vec::new();
    let mut lls = Vec::new();
    for i in 0..100 {
        samples.push(if i % 2 == 0 { 1.0 } else { 3.0 });
        lls.push(if i % 2 == 0 { 0.0 } else { 2.0 });
    }
    let mut chain = PosteriorChain::from_samples(samples, 1, 0).unwrap();
    chain.log_likelihoods = lls;
    let (d, p_d) = dic(&chain, |p| {
        assert!((p[0] - 2.0).abs() < 1e-12);
        Ok(1.0)
    })
    .unwrap();
    // V = (50 (0-1)^2 + 50 (2-1)^2) / 99 = 100/99.
    let v = 100.0 / 99.0;
    assert!((p_d - 2.0 * v).abs() <= 1e-9 * p_d.abs());
    assert!((d - (-2.0 + 2.0 * p_d)).abs() <= 1e-9 * d.abs());
}

#[test]
fn improvement_rule_follows_the_five_percent_threshold() {
    // Paper-scale DIC pair: improvement ~0.05%, not justified.
    let prev = record(8, -18_180.0, Some(-18_250.0));
    let curr = record(16, -18_120.0, Some(-18_260.0));
    assert!(!complexity_justified(&prev, &curr, 0.05).unwrap());

    // Halving toward more negative: 100% improvement, justified.
    let prev = record(1, -100.0, None);
    let curr = record(2, -200.0, None);
    assert!(complexity_justified(&prev, &curr, 0.05).unwrap());

    // Equal criteria: 0% improvement, not justified.
    let prev = record(2, -500.0, None);
    let curr = record(4, -500.0, None);
    assert!(!complexity_justified(&prev, &curr, 0.05).unwrap());

    // DIC takes precedence only when both records carry one.
    let prev = record(2, -100.0, Some(-100.0));
    let curr = record(4, -200.0, None);
    assert!(complexity_justified(&prev, &curr, 0.05).unwrap());

    // Zero previous criterion is undefined.
    let prev = record(2, 0.0, None);
    let curr = record(4, -1.0, None);
    assert!(complexity_justified(&prev, &curr, 0.05).is_err());

    // Complexity must strictly increase.
    let prev = record(4, -1.0, None);
    let curr = record(4, -2.0, None);
    assert!(complexity_justified(&prev, &curr, 0.05).is_err());
}

#[test]
fn decision_depends_only_on_the_criterion_triple() {
    // Referential transparency: same (prev, curr, tol) values, same verdict,
    // independent of the other record fields.
    let a = complexity_justified(&record(2, -100.0, None), &record(4, -110.0, None), 0.05).unwrap();
    let mut prev = record(2, -100.0, None);
    prev.s_like_at_map = 999.0;
    prev.p_d = 7.0;
    let mut curr = record(4, -110.0, None);
    curr.log_posterior_at_map = -3.0;
    let b = complexity_justified(&prev, &curr, 0.05).unwrap();
    assert_eq!(a, b);
    assert!(a, "10% improvement should be justified");
}

#[test]
fn bic_is_monotone_in_complexity_at_fixed_fit() {
    let mut last = f64::NEG_INFINITY;
    for n_p in [2usize, 3, 5, 9, 17] {
        let v = bic(-9_131.0, n_p, 8640).unwrap();
        assert!(v > last);
        last = v;
    }
}
