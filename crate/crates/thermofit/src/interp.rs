//! Small shared numerics: tridiagonal solves, linear interpolation on a
//! sorted grid, and natural cubic splines.

use crate::error::{Error, Result};

/// Solves a tridiagonal system in place with the Thomas algorithm.
///
/// `sub` has length n-1 (below the diagonal), `diag` length n, `sup` length
/// n-1 (above the diagonal). Runs in O(n). Fails on zero/non-finite pivots,
/// which is how singular or non-physical systems surface.
pub fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 || sub.len() != n - 1 || sup.len() != n - 1 || rhs.len() != n {
        return Err(Error::numerical(format!(
            "tridiagonal shape mismatch: n={n}, sub={}, sup={}, rhs={}",
            sub.len(),
            sup.len(),
            rhs.len()
        )));
    }

    // Forward sweep with scratch copies of the modified diagonal and rhs.
    let mut c = vec![0.0; n]; // modified superdiagonal
    let mut d = vec![0.0; n]; // modified rhs
    let mut pivot = diag[0];
    if !pivot.is_finite() || pivot == 0.0 {
        return Err(Error::numerical("singular tridiagonal system (pivot 0)".to_string()));
    }
    c[0] = if n > 1 { sup[0] / pivot } else { 0.0 };
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - sub[i - 1] * c[i - 1];
        if !pivot.is_finite() || pivot == 0.0 {
            return Err(Error::numerical(format!("singular tridiagonal system (pivot at row {i})")));
        }
        if i < n - 1 {
            c[i] = sup[i] / pivot;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / pivot;
    }

    // Back substitution.
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite tridiagonal solution".to_string()));
    }
    Ok(x)
}

/// Index of the segment of a sorted grid containing `x`, clamped to the valid
/// range, so `xs[i] <= x <= xs[i+1]` holds for interior queries.
pub fn segment_index(xs: &[f64], x: f64) -> usize {
    debug_assert!(xs.len() >= 2);
    match xs.binary_search_by(|v| v.partial_cmp(&x).expect("NaN in grid")) {
        Ok(i) => i.min(xs.len() - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(xs.len() - 2),
    }
}

/// Piecewise-linear interpolation over a strictly increasing grid, with
/// constant (clamped) extrapolation outside the grid range.
pub fn lerp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if xs.len() == 1 {
        return ys[0];
    }
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let i = segment_index(xs, x);
    let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
    ys[i] + t * (ys[i + 1] - ys[i])
}

/// Natural cubic spline through strictly increasing abscissae.
///
/// Outside the data range the spline is continued linearly with the slope at
/// the nearest endpoint (consistent with the zero end curvature of the
/// natural boundary conditions).
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the data points; zero at both ends.
    y2: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ys.len() != n {
            return Err(Error::data(format!(
                "spline needs >= 2 points with matching lengths, got {} and {}",
                n,
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::data("spline abscissae must be strictly increasing".to_string()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::data("non-finite spline input".to_string()));
        }
        if n == 2 {
            return Ok(CubicSpline { xs, ys, y2: vec![0.0; 2] });
        }

        // Interior second derivatives from the standard tridiagonal system;
        // natural ends pin y2[0] = y2[n-1] = 0.
        let m = n - 2;
        let mut sub = vec![0.0; m.saturating_sub(1)];
        let mut diag = vec![0.0; m];
        let mut sup = vec![0.0; m.saturating_sub(1)];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            let h0 = xs[i + 1] - xs[i];
            let h1 = xs[i + 2] - xs[i + 1];
            diag[i] = 2.0 * (h0 + h1);
            if i > 0 {
                sub[i - 1] = h0;
            }
            if i < m - 1 {
                sup[i] = h1;
            }
            rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
        }
        let interior = thomas_solve(&sub, &diag, &sup, &rhs)?;
        let mut y2 = vec![0.0; n];
        y2[1..n - 1].copy_from_slice(&interior);
        Ok(CubicSpline { xs, ys, y2 })
    }

    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    pub fn x_max(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.end_slope_left() * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.end_slope_right() * (x - self.xs[n - 1]);
        }
        let i = segment_index(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.y2[i] + (b * b * b - b) * self.y2[i + 1]) * h * h / 6.0
    }

    fn end_slope_left(&self) -> f64 {
        let h = self.xs[1] - self.xs[0];
        (self.ys[1] - self.ys[0]) / h - h * self.y2[1] / 6.0
    }

    fn end_slope_right(&self) -> f64 {
        let n = self.xs.len();
        let h = self.xs[n - 1] - self.xs[n - 2];
        (self.ys[n - 1] - self.ys[n - 2]) / h + h * self.y2[n - 2] / 6.0
    }
}
