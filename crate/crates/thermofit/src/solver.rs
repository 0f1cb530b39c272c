//! 1D transient heat conduction with temperature-dependent conductivity.
//!
//! The rod is discretized with uniform linear finite elements (consistent
//! mass matrices) and stepped with backward Euler. Heat enters through a
//! Robin condition against a source at `x = 0`, leaves through a Robin
//! condition against the ambient at `x = L`, and leaks laterally along the
//! rod surface, which for a thin rod reduces to the volumetric term
//! `(2 h_side / R) (T - T_inf)`.
//!
//! Per step the tridiagonal system
//! `[(1/dt + beta) C + K_m] T_{m+1} = (1/dt) C T_m + s` is solved, with
//! `beta = 2 h_side / (R rho c_p)`, `C` the capacitance matrix, `K_m` the
//! conductance matrix (including the Robin corner terms), and `s` collecting
//! the source, ambient, and lateral contributions at `t_{m+1}`. Element
//! conductivities in `K_m` are evaluated at the mean of the element's two
//! nodal temperatures from the previous step; `solve_implicit` instead
//! iterates them to self-consistency.

use serde::{Deserialize, Serialize};

use crate::conductivity::Conductivity;
use crate::error::{Error, Result};
use crate::interp::lerp_clamped;

/// Ambient temperature, either constant or a piecewise-linear trajectory
/// (used when a measured ambient drives the model). Trajectories are clamped
/// to their end values outside the recorded time range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AmbientTemperature {
    Constant(f64),
    Trajectory { times: Vec<f64>, values: Vec<f64> },
}

impl AmbientTemperature {
    pub fn at(&self, time: f64) -> f64 {
        match self {
            AmbientTemperature::Constant(v) => *v,
            AmbientTemperature::Trajectory { times, values } => lerp_clamped(times, values, time),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            AmbientTemperature::Constant(v) => {
                if !v.is_finite() {
                    return Err(Error::config("ambient temperature must be finite".to_string()));
                }
            }
            AmbientTemperature::Trajectory { times, values } => {
                if times.len() < 2 || times.len() != values.len() {
                    return Err(Error::config(
                        "ambient trajectory needs >= 2 (time, value) pairs of equal length".to_string(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::config("ambient trajectory times must be strictly increasing".to_string()));
                }
                if times.iter().chain(values.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::config("non-finite ambient trajectory entry".to_string()));
                }
            }
        }
        Ok(())
    }
}

/// Geometry, material properties, and boundary conditions of the rod.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalSetup {
    /// Rod radius (m); enters only through the lateral-loss term.
    pub r: f64,
    /// Rod length (m).
    pub l: f64,
    /// Axial sensor coordinates (m), strictly increasing, within [0, l].
    pub sensor_positions: Vec<f64>,
    /// Density (kg/m^3).
    pub rho: f64,
    /// Specific heat (J/(kg °C)).
    pub cp: f64,
    /// Heat transfer coefficient against the source at x = 0 (W/(m^2 °C)).
    pub h_source: f64,
    /// Heat transfer coefficient of the lateral surface (W/(m^2 °C)).
    pub h_side: f64,
    /// Heat transfer coefficient against the ambient at x = L (W/(m^2 °C)).
    pub h_inf: f64,
    /// Source temperature (°C).
    pub t_source: f64,
    /// Ambient temperature (°C).
    pub t_inf: AmbientTemperature,
    /// Initial temperature (°C); `None` uses the ambient value at t = 0.
    pub t0: Option<f64>,
    /// Simulated duration (s).
    pub t_total: f64,
}

impl ThermalSetup {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.r, "radius"),
            (self.l, "length"),
            (self.rho, "density"),
            (self.cp, "specific heat"),
            (self.t_total, "total time"),
        ];
        for (v, name) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let non_negative = [(self.h_source, "h_source"), (self.h_side, "h_side"), (self.h_inf, "h_inf")];
        for (v, name) in non_negative {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be non-negative and finite, got {v}")));
            }
        }
        if self.sensor_positions.is_empty() {
            return Err(Error::config("at least one sensor position is required".to_string()));
        }
        if self.sensor_positions.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("sensor positions must be strictly increasing".to_string()));
        }
        for &x in &self.sensor_positions {
            if !(0.0..=self.l).contains(&x) {
                return Err(Error::config(format!("sensor position {x} outside rod [0, {}]", self.l)));
            }
        }
        if let Some(t0) = self.t0 {
            if !t0.is_finite() {
                return Err(Error::config("initial temperature must be finite".to_string()));
            }
        }
        self.t_inf.validate()
    }

    /// Initial condition: the configured constant, or the ambient at t = 0.
    pub fn initial_temperature(&self) -> f64 {
        self.t0.unwrap_or_else(|| self.t_inf.at(0.0))
    }

    /// Lateral loss rate `beta = 2 h_side / (R rho c_p)` (1/s).
    pub fn beta(&self) -> f64 {
        2.0 * self.h_side / (self.r * self.rho * self.cp)
    }
}

/// Uniform space/time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discretization {
    pub n_e: usize,
    pub n_t: usize,
}

impl Discretization {
    pub fn new(n_e: usize, n_t: usize) -> Result<Self> {
        if n_e < 1 || n_t < 1 {
            return Err(Error::config(format!("discretization needs n_e >= 1 and n_t >= 1, got ({n_e}, {n_t})")));
        }
        Ok(Discretization { n_e, n_t })
    }

    pub fn dx(&self, setup: &ThermalSetup) -> f64 {
        setup.l / self.n_e as f64
    }

    pub fn dt(&self, setup: &ThermalSetup) -> f64 {
        setup.t_total / self.n_t as f64
    }
}

/// Nodal temperatures for every stored time step, row-major with
/// `n_t + 1` rows of `n_e + 1` nodes; row 0 is the initial condition.
#[derive(Debug, Clone)]
pub struct TemperatureTrajectory {
    n_nodes: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TemperatureTrajectory {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of time steps taken (rows minus one).
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.n_nodes..(m + 1) * self.n_nodes]
    }

    pub fn last_row(&self) -> &[f64] {
        self.row(self.n_steps())
    }

    /// Frobenius norm of the difference to another trajectory of the same
    /// shape, relative to the norm of `self`.
    pub fn relative_l2_distance(&self, other: &TemperatureTrajectory) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "trajectory shape mismatch");
        let mut num = 0.0;
        let mut den = 0.0;
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            num += (a - b) * (a - b);
            den += a * a;
        }
        (num / den).sqrt()
    }
}

/// Scratch space and constant matrices reused across time steps.
struct Stepper {
    n: usize,
    dx: f64,
    /// Capacitance diagonal (rho cp dx scaled consistent-mass weights).
    c_diag: Vec<f64>,
    /// Capacitance off-diagonal (constant along the band).
    c_off: f64,
    /// Lateral load weights: dx * (1/2, 1, ..., 1, 1/2).
    lateral_w: Vec<f64>,
    k_elem: Vec<f64>,
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    rhs: Vec<f64>,
    scratch_c: Vec<f64>,
    scratch_d: Vec<f64>,
}

impl Stepper {
    fn new(setup: &ThermalSetup, disc: &Discretization) -> Stepper {
        let n = disc.n_e + 1;
        let dx = disc.dx(setup);
        let rc = setup.rho * setup.cp;
        let mut c_diag = vec![2.0 * rc * dx / 3.0; n];
        c_diag[0] = rc * dx / 3.0;
        c_diag[n - 1] = rc * dx / 3.0;
        let mut lateral_w = vec![dx; n];
        lateral_w[0] = 0.5 * dx;
        lateral_w[n - 1] = 0.5 * dx;
        Stepper {
            n,
            dx,
            c_diag,
            c_off: rc * dx / 6.0,
            lateral_w,
            k_elem: vec![0.0; disc.n_e],
            sub: vec![0.0; n - 1],
            diag: vec![0.0; n],
            sup: vec![0.0; n - 1],
            rhs: vec![0.0; n],
            scratch_c: vec![0.0; n],
            scratch_d: vec![0.0; n],
        }
    }

    /// Element conductivities from a nodal temperature field (mean of the
    /// element's two nodal values).
    fn element_conductivities(&mut self, k_model: &dyn Conductivity, t_field: &[f64]) -> Result<()> {
        for e in 0..self.n - 1 {
            let k = k_model.conductivity(0.5 * (t_field[e] + t_field[e + 1]));
            if !k.is_finite() || k <= 0.0 {
                return Err(Error::numerical(format!("non-physical conductivity {k} in element {e}")));
            }
            self.k_elem[e] = k;
        }
        Ok(())
    }

    /// One backward Euler step using the conductivities already stored in
    /// `k_elem`; writes the solution into `out`.
    fn step(&mut self, t_m: &[f64], setup: &ThermalSetup, dt: f64, time_next: f64, out: &mut Vec<f64>) -> Result<()> {
        let n = self.n;
        let beta = setup.beta();
        let factor = 1.0 / dt + beta;
        let t_inf_next = setup.t_inf.at(time_next);
        let lateral_coeff = 2.0 * setup.h_side / setup.r * t_inf_next;

        // System matrix: (1/dt + beta) C + K, with K holding conduction plus
        // the Robin corner terms.
        for i in 0..n {
            let mut d = factor * self.c_diag[i];
            if i > 0 {
                d += self.k_elem[i - 1] / self.dx;
            }
            if i < n - 1 {
                d += self.k_elem[i] / self.dx;
            }
            self.diag[i] = d;
        }
        self.diag[0] += setup.h_source;
        self.diag[n - 1] += setup.h_inf;
        for e in 0..n - 1 {
            let off = factor * self.c_off - self.k_elem[e] / self.dx;
            self.sub[e] = off;
            self.sup[e] = off;
        }

        // Right-hand side: (1/dt) C T_m plus the source vector at t_{m+1}.
        for i in 0..n {
            let mut r = self.c_diag[i] * t_m[i];
            if i > 0 {
                r += self.c_off * t_m[i - 1];
            }
            if i < n - 1 {
                r += self.c_off * t_m[i + 1];
            }
            self.rhs[i] = r / dt + lateral_coeff * self.lateral_w[i];
        }
        self.rhs[0] += setup.h_source * setup.t_source;
        self.rhs[n - 1] += setup.h_inf * t_inf_next;

        // Thomas elimination into `out`.
        out.clear();
        out.extend_from_slice(&self.rhs);
        let c = &mut self.scratch_c;
        let d = &mut self.scratch_d;
        let mut pivot = self.diag[0];
        if !pivot.is_finite() || pivot == 0.0 {
            return Err(Error::numerical("singular system matrix".to_string()));
        }
        c[0] = if n > 1 { self.sup[0] / pivot } else { 0.0 };
        d[0] = out[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.sub[i - 1] * c[i - 1];
            if !pivot.is_finite() || pivot == 0.0 {
                return Err(Error::numerical(format!("singular system matrix (row {i})")));
            }
            if i < n - 1 {
                c[i] = self.sup[i] / pivot;
            }
            d[i] = (out[i] - self.sub[i - 1] * d[i - 1]) / pivot;
        }
        out.copy_from_slice(d);
        for i in (0..n - 1).rev() {
            out[i] -= c[i] * out[i + 1];
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("non-finite temperature after step".to_string()));
        }
        Ok(())
    }
}

/// Advances one backward Euler step from the nodal field `t_m`, evaluating
/// element conductivities at the previous-step temperatures, with boundary
/// data taken at `time_next`.
pub fn assemble_and_step(
    t_m: &[f64],
    k_model: &dyn Conductivity,
    setup: &ThermalSetup,
    disc: &Discretization,
    time_next: f64,
) -> Result<Vec<f64>> {
    setup.validate()?;
    if t_m.len() != disc.n_e + 1 {
        return Err(Error::numerical(format!(
            "nodal vector has {} entries, discretization wants {}",
            t_m.len(),
            disc.n_e + 1
        )));
    }
    let mut stepper = Stepper::new(setup, disc);
    stepper.element_conductivities(k_model, t_m)?;
    let mut out = Vec::with_capacity(t_m.len());
    stepper.step(t_m, setup, disc.dt(setup), time_next, &mut out)?;
    Ok(out)
}

/// Full transient solve with explicit (previous-step) conductivity treatment.
pub fn solve(setup: &ThermalSetup, k_model: &dyn Conductivity, disc: &Discretization) -> Result<TemperatureTrajectory> {
    setup.validate()?;
    let n = disc.n_e + 1;
    let dt = disc.dt(setup);
    let mut stepper = Stepper::new(setup, disc);

    let mut values = Vec::with_capacity((disc.n_t + 1) * n);
    let mut times = Vec::with_capacity(disc.n_t + 1);
    values.resize(n, setup.initial_temperature());
    times.push(0.0);

    let mut current = values.clone();
    let mut next = Vec::with_capacity(n);
    for m in 0..disc.n_t {
        let time_next = (m + 1) as f64 * dt;
        stepper
            .element_conductivities(k_model, &current)
            .and_then(|_| stepper.step(&current, setup, dt, time_next, &mut next))
            .map_err(|e| Error::numerical(format!("{e} (time step {})", m + 1)))?;
        values.extend_from_slice(&next);
        times.push(time_next);
        std::mem::swap(&mut current, &mut next);
    }
    Ok(TemperatureTrajectory { n_nodes: n, times, values })
}

/// Transient solve with implicit conductivity treatment via Picard iteration.
#[derive(Debug, Clone)]
pub struct ImplicitSolution {
    pub trajectory: TemperatureTrajectory,
    /// Picard iterations used per time step.
    pub picard_iterations: Vec<usize>,
    /// Steps where the iteration hit `max_iter` without meeting `rel_tol`.
    pub unconverged_steps: Vec<usize>,
}

/// Like [`solve`], but per step the element conductivities are re-evaluated
/// at the provisional solution until the relative change of the step solution
/// drops below `rel_tol` or `max_iter` is reached. Non-convergence within
/// `max_iter` is recorded, not fatal.
pub fn solve_implicit(
    setup: &ThermalSetup,
    k_model: &dyn Conductivity,
    disc: &Discretization,
    max_iter: usize,
    rel_tol: f64,
) -> Result<ImplicitSolution> {
    setup.validate()?;
    if max_iter < 1 {
        return Err(Error::config("picard max_iter must be >= 1".to_string()));
    }
    if !(rel_tol > 0.0) {
        return Err(Error::config("picard rel_tol must be positive".to_string()));
    }
    let n = disc.n_e + 1;
    let dt = disc.dt(setup);
    let mut stepper = Stepper::new(setup, disc);

    let mut values = Vec::with_capacity((disc.n_t + 1) * n);
    let mut times = Vec::with_capacity(disc.n_t + 1);
    values.resize(n, setup.initial_temperature());
    times.push(0.0);
    let mut picard_iterations = Vec::with_capacity(disc.n_t);
    let mut unconverged_steps = Vec::new();

    let mut current = values.clone();
    let mut provisional = Vec::with_capacity(n);
    let mut next = Vec::with_capacity(n);
    for m in 0..disc.n_t {
        let time_next = (m + 1) as f64 * dt;
        let step_err = |e: Error| Error::numerical(format!("{e} (time step {})", m + 1));

        // Initial guess: conductivities from the previous step.
        stepper.element_conductivities(k_model, &current).map_err(step_err)?;
        stepper.step(&current, setup, dt, time_next, &mut provisional).map_err(step_err)?;

        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iter {
            iterations += 1;
            stepper.element_conductivities(k_model, &provisional).map_err(step_err)?;
            stepper.step(&current, setup, dt, time_next, &mut next).map_err(step_err)?;
            let mut diff = 0.0;
            let mut norm = 0.0;
            for (a, b) in next.iter().zip(provisional.iter()) {
                diff += (a - b) * (a - b);
                norm += a * a;
            }
            std::mem::swap(&mut provisional, &mut next);
            if diff.sqrt() <= rel_tol * norm.sqrt() {
                converged = true;
                break;
            }
        }
        if !converged {
            unconverged_steps.push(m + 1);
        }
        picard_iterations.push(iterations);
        values.extend_from_slice(&provisional);
        times.push(time_next);
        std::mem::swap(&mut current, &mut provisional);
    }
    Ok(ImplicitSolution {
        trajectory: TemperatureTrajectory { n_nodes: n, times, values },
        picard_iterations,
        unconverged_steps,
    })
}

/// Model predictions at the sensor positions and measurement times, linearly
/// interpolated in space over the element containing each sensor and in time
/// between stored steps. Output is sensor-major: all times for sensor 1,
/// then sensor 2, and so on, matching the measurement vector layout.
pub fn predict_sensors(
    traj: &TemperatureTrajectory,
    setup: &ThermalSetup,
    measurement_times: &[f64],
) -> Result<Vec<f64>> {
    let times = traj.times();
    let t_end = *times.last().expect("non-empty trajectory");
    let n_e = traj.n_nodes() - 1;
    let dx = setup.l / n_e as f64;

    let mut out = Vec::with_capacity(setup.sensor_positions.len() * measurement_times.len());
    for &x in &setup.sensor_positions {
        let e = ((x / dx) as usize).min(n_e - 1);
        let wx = (x - e as f64 * dx) / dx;
        for &t in measurement_times {
            if !(0.0..=t_end * (1.0 + 1e-12)).contains(&t) {
                return Err(Error::data(format!("measurement time {t} outside simulated range [0, {t_end}]")));
            }
            let dt = times[1] - times[0];
            let m = ((t / dt) as usize).min(traj.n_steps() - 1);
            let wt = ((t - times[m]) / dt).clamp(0.0, 1.0);
            let row0 = traj.row(m);
            let row1 = traj.row(m + 1);
            let v0 = row0[e] * (1.0 - wx) + row0[e + 1] * wx;
            let v1 = row1[e] * (1.0 - wx) + row1[e + 1] * wx;
            out.push(v0 * (1.0 - wt) + v1 * wt);
        }
    }
    Ok(out)
}

/// Smallest element count compatible with `n_t` time steps: the least
/// integer strictly greater than `sqrt(n_t L^2 rho c_p / (6 k_min t_total))`.
///
/// Meeting this bound makes the backward Euler system matrix an M-matrix
/// (consistent mass), which keeps the discrete solution free of spurious
/// oscillations.
pub fn min_elements_for_timesteps(n_t: usize, k_min: f64, setup: &ThermalSetup) -> Result<usize> {
    if !(k_min > 0.0) || !k_min.is_finite() {
        return Err(Error::config(format!("k_min must be positive and finite, got {k_min}")));
    }
    if n_t < 1 {
        return Err(Error::config("n_t must be >= 1".to_string()));
    }
    let bound =
        (n_t as f64 * setup.l * setup.l * setup.rho * setup.cp / (6.0 * k_min * setup.t_total)).sqrt();
    Ok(bound.floor() as usize + 1)
}
