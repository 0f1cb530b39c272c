//! Information criteria (BIC, DIC) and the relative-improvement rule for
//! deciding whether doubling the model complexity is justified.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::PosteriorChain;

/// Default relative-improvement threshold: complexity must buy more than
/// this fraction of the previous criterion to be considered justified.
pub const IMPROVEMENT_TOL: f64 = 0.05;

/// Criteria evaluated for one model complexity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub n_s: usize,
    pub bic: f64,
    /// Absent in BIC-only runs (no chain to average over).
    pub dic: Option<f64>,
    /// Effective parameter count from the likelihood variance; zero when
    /// DIC was not computed.
    pub p_d: f64,
    /// Log-likelihood at the MAP point (enters BIC).
    pub log_likelihood_at_map: f64,
    /// Log-posterior at the MAP point, recorded alongside since the
    /// criterion's textbook form and the posterior-maximization stage
    /// disagree about which maximum is meant.
    pub log_posterior_at_map: f64,
    pub s_like_at_map: f64,
}

/// `BIC = -2 log(L-hat) + n_p ln(n_d)`, with the likelihood maximum taken at
/// the MAP point.
pub fn bic(max_log_likelihood: f64, n_p: usize, n_d: usize) -> Result<f64> {
    if n_p < 1 || n_d < 1 {
        return Err(Error::config(format!(
            "BIC needs n_p >= 1 and n_d >= 1, got {n_p} and {n_d}"
        )));
    }
    Ok(-2.0 * max_log_likelihood + n_p as f64 * (n_d as f64).ln())
}

/// `DIC = -2 log P(d | p-bar) + 2 p_D` with `p_D = 2 V`, `V` the unbiased
/// variance of the post-burn-in per-sample log-likelihoods and `p-bar` the
/// posterior mean. Returns `(dic, p_d)`.
pub fn dic<F>(chain: &PosteriorChain, log_likelihood_at: F) -> Result<(f64, f64)>
where
    F: FnOnce(&[f64]) -> Result<f64>,
{
    let n = chain.n_kept();
    if n == 0 {
        return Err(Error::data("DIC needs a non-empty post-burn-in chain".to_string()));
    }
    let p_bar = chain.posterior_mean();
    let ll_at_mean = log_likelihood_at(&p_bar)?;

    let lls = chain.kept_log_likelihoods();
    if lls.len() != n {
        return Err(Error::data("chain is missing per-sample log-likelihood values".to_string()));
    }
    let mean = lls.iter().sum::<f64>() / n as f64;
    let v = if n > 1 {
        lls.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n as f64 - 1.0)
    } else {
        0.0
    };
    let p_d = 2.0 * v;
    Ok((-2.0 * ll_at_mean + 2.0 * p_d, p_d))
}

/// Both criteria read "lower is better"; the step to `current` is justified
/// when the active criterion improved by more than `tol` relative to the
/// previous value. DIC is active whenever both records carry one.
pub fn complexity_justified(
    previous: &SelectionRecord,
    current: &SelectionRecord,
    tol: f64,
) -> Result<bool> {
    if previous.n_s >= current.n_s {
        return Err(Error::config(format!(
            "complexity must increase: {} -> {}",
            previous.n_s, current.n_s
        )));
    }
    let (prev, curr) = match (previous.dic, current.dic) {
        (Some(p), Some(c)) => (p, c),
        _ => (previous.bic, current.bic),
    };
    if prev == 0.0 {
        return Err(Error::numerical(
            "previous criterion is exactly zero; relative improvement undefined".to_string(),
        ));
    }
    Ok((prev - curr) / prev.abs() > tol)
}
