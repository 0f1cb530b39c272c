//! MAP estimation by a derivative-free-friendly trust region Newton method.
//!
//! Gradients and Hessians come from finite differences of the loss; each
//! iteration spends `1 + 2 n_p + n_p (n_p - 1) / 2` evaluations on the model
//! (central differences per coordinate, forward-forward cross terms), all of
//! which run in parallel. The trust region subproblem is solved with a
//! Cholesky Newton step, falling back to a Levenberg shift and the standard
//! dogleg path; see Nocedal & Wright, "Numerical Optimization", ch. 4.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{LossBreakdown, LossContext};
use crate::error::{Error, Result};
use crate::solver::Discretization;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    /// Absolute per-coordinate step tolerance.
    pub abs_tol: f64,
    /// Relative per-coordinate step tolerance.
    pub rel_tol: f64,
    /// Relative finite difference step.
    pub fd_step: f64,
    /// Initial trust region radius.
    pub initial_radius: f64,
    /// Hard iteration cap.
    pub max_iterations: usize,
    /// Trial points are clipped to this floor coordinatewise, keeping the
    /// conductivity parameters physical.
    pub positivity_floor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            abs_tol: 1e-2,
            rel_tol: 1e-2,
            fd_step: 1e-5,
            initial_radius: 1.0,
            max_iterations: 200,
            positivity_floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub p: Vec<f64>,
    pub value: f64,
    /// Total objective evaluations, finite difference probes included.
    pub n_evals: usize,
    pub n_iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub p: Vec<f64>,
    pub loss: LossBreakdown,
    pub n_evals: usize,
    pub n_iterations: usize,
    pub converged: bool,
}

/// Central finite difference gradient with per-coordinate step
/// `h_i = rel_step * max(|p_i|, rel_step)`. Probes run in parallel.
pub fn fd_gradient<F>(f: &F, p: &[f64], rel_step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(rel_step > 0.0) {
        return Err(Error::config(format!("finite difference step must be positive, got {rel_step}")));
    }
    let n = p.len();
    let mut probes = Vec::with_capacity(2 * n);
    let mut steps = Vec::with_capacity(n);
    for i in 0..n {
        let h = rel_step * p[i].abs().max(rel_step);
        steps.push(h);
        let mut hi = p.to_vec();
        hi[i] += h;
        let mut lo = p.to_vec();
        lo[i] -= h;
        probes.push(hi);
        probes.push(lo);
    }
    let values: Result<Vec<f64>> = probes.par_iter().map(|q| f(q)).collect();
    let values = values?;
    Ok((0..n).map(|i| (values[2 * i] - values[2 * i + 1]) / (2.0 * steps[i])).collect())
}

/// Gradient and Hessian estimate sharing the axis probes: central
/// differences along each axis plus forward-forward cross terms.
fn fd_model<F>(f: &F, p: &[f64], f0: f64, rel_step: f64) -> Result<(DVector<f64>, DMatrix<f64>, usize)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let n = p.len();
    let steps: Vec<f64> = p.iter().map(|v| rel_step * v.abs().max(rel_step)).collect();

    let mut probes: Vec<Vec<f64>> = Vec::with_capacity(2 * n + n * (n - 1) / 2);
    for i in 0..n {
        let mut hi = p.to_vec();
        hi[i] += steps[i];
        probes.push(hi);
        let mut lo = p.to_vec();
        lo[i] -= steps[i];
        probes.push(lo);
    }
    let mut cross_index = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut q = p.to_vec();
            q[i] += steps[i];
            q[j] += steps[j];
            cross_index.push((i, j));
            probes.push(q);
        }
    }
    let values: Result<Vec<f64>> = probes.par_iter().map(|q| f(q)).collect();
    let values = values?;
    let n_evals = probes.len();

    let mut g = DVector::zeros(n);
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let fp = values[2 * i];
        let fm = values[2 * i + 1];
        g[i] = (fp - fm) / (2.0 * steps[i]);
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
    }
    for (c, (i, j)) in cross_index.iter().enumerate() {
        let fpp = values[2 * n + c];
        let hij = (fpp - values[2 * i] - values[2 * j] + f0) / (steps[*i] * steps[*j]);
        h[(*i, *j)] = hij;
        h[(*j, *i)] = hij;
    }
    Ok((g, h, n_evals))
}

/// Cholesky with a growing Levenberg shift until positive definite.
fn shifted_cholesky(h: &DMatrix<f64>) -> Result<(Cholesky<f64, nalgebra::Dyn>, f64)> {
    let n = h.nrows();
    let scale = h.diagonal().iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut shift = 0.0;
    for attempt in 0..60 {
        let mut m = h.clone();
        for i in 0..n {
            m[(i, i)] += shift;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok((c, shift));
        }
        shift = if attempt == 0 { 1e-8 * scale } else { shift * 4.0 };
    }
    Err(Error::numerical("Hessian could not be shifted to positive definite".to_string()))
}

/// Dogleg step for the trust region subproblem with the (shifted) Hessian.
fn dogleg(g: &DVector<f64>, h: &DMatrix<f64>, chol: &Cholesky<f64, nalgebra::Dyn>, radius: f64) -> DVector<f64> {
    let newton = -chol.solve(g);
    if newton.norm() <= radius {
        return newton;
    }
    let ghg = (h * g).dot(g);
    let gg = g.dot(g);
    if !(ghg > 0.0) {
        // Negative curvature along the gradient: walk to the boundary.
        return g * (-radius / gg.sqrt());
    }
    let cauchy = g * (-gg / ghg);
    let cn = cauchy.norm();
    if cn >= radius {
        return g * (-radius / gg.sqrt());
    }
    // ||cauchy + tau (newton - cauchy)|| = radius, tau in (0, 1).
    let d = &newton - &cauchy;
    let a = d.dot(&d);
    let b = 2.0 * cauchy.dot(&d);
    let c = cn * cn - radius * radius;
    let tau = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
    cauchy + d * tau
}

/// Minimizes a smooth objective from `p0`. The objective may fail at a
/// trial point (for example a non-physical parameter vector); failed trials
/// are rejected and the trust region contracts.
pub fn minimize<F>(f: &F, p0: &[f64], cfg: &OptimizerConfig) -> Result<MinimizeResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if p0.is_empty() {
        return Err(Error::config("cannot optimize an empty parameter vector".to_string()));
    }
    let mut p = p0.to_vec();
    for v in p.iter_mut() {
        *v = v.max(cfg.positivity_floor);
    }
    let mut f0 = f(&p)?;
    let mut n_evals = 1usize;
    let mut radius = cfg.initial_radius;
    let mut model: Option<(DVector<f64>, DMatrix<f64>)> = None;
    let mut converged = false;
    let mut n_iterations = 0usize;

    while n_iterations < cfg.max_iterations {
        n_iterations += 1;
        if model.is_none() {
            let (g, h, e) = fd_model(f, &p, f0, cfg.fd_step)?;
            n_evals += e;
            model = Some((g, h));
        }
        let (g, h) = model.as_ref().expect("model was just ensured");
        let (chol, shift) = shifted_cholesky(h)?;
        let mut h_shifted = h.clone();
        for i in 0..h_shifted.nrows() {
            h_shifted[(i, i)] += shift;
        }
        let s = dogleg(g, &h_shifted, &chol, radius);

        let mut trial = p.clone();
        for (t, si) in trial.iter_mut().zip(s.iter()) {
            *t = (*t + si).max(cfg.positivity_floor);
        }
        let s_actual = DVector::from_iterator(p.len(), trial.iter().zip(&p).map(|(t, v)| t - v));
        let predicted = -(g.dot(&s_actual) + 0.5 * (&h_shifted * &s_actual).dot(&s_actual));

        let f_trial = match f(&trial) {
            Ok(v) => {
                n_evals += 1;
                v
            }
            Err(_) => {
                n_evals += 1;
                radius *= 0.25;
                if radius < 1e-12 {
                    break;
                }
                continue;
            }
        };

        let rho = if predicted > 0.0 { (f0 - f_trial) / predicted } else { -1.0 };
        if rho > 0.1 {
            let step = s_actual;
            let step_norm = step.norm();
            p = trial;
            f0 = f_trial;
            model = None;
            if rho > 0.75 && step_norm >= 0.99 * radius {
                radius *= 2.0;
            }
            let small = p
                .iter()
                .zip(step.iter())
                .all(|(pi, di)| di.abs() <= cfg.abs_tol || di.abs() <= cfg.rel_tol * pi.abs());
            if small {
                converged = true;
                break;
            }
        } else {
            radius *= 0.25;
            if radius < 1e-12 {
                break;
            }
        }
    }

    Ok(MinimizeResult { p, value: f0, n_evals, n_iterations, converged })
}

/// MAP estimate of the conductivity knot values: minimizes
/// `S(p) = S_prior(p) + S_like(p)` at the given discretization.
pub fn map_estimate(
    ctx: &LossContext,
    disc: &Discretization,
    p0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<MapResult> {
    if p0.len() != ctx.prior.n_params() {
        return Err(Error::config(format!(
            "initial point has {} coordinates, model expects {}",
            p0.len(),
            ctx.prior.n_params()
        )));
    }
    let objective = |p: &[f64]| ctx.evaluate(p, disc).map(|l| l.s_total);
    let r = minimize(&objective, p0, cfg)?;
    let loss = ctx.evaluate(&r.p, disc)?;
    Ok(MapResult {
        p: r.p,
        loss,
        n_evals: r.n_evals + 1,
        n_iterations: r.n_iterations,
        converged: r.converged,
    })
}
