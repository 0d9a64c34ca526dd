//! Natural cubic spline interpolation for envelope construction.

use crate::error::{Error, Result};

/// Natural cubic spline through strictly increasing knots. Queries outside
/// the knot range extrapolate with the end segments.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Contract(format!(
                "spline knot mismatch: {} positions, {} values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::Contract(format!(
                "spline needs at least 2 knots, got {}",
                xs.len()
            )));
        }
        for w in xs.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Contract(format!(
                    "spline knots must strictly increase, found {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if xs.iter().chain(ys).any(|v| !v.is_finite()) {
            return Err(Error::Contract("non-finite spline knot".into()));
        }
        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas solve of the tridiagonal system for interior second
            // derivatives, natural boundary m[0] = m[n-1] = 0.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            let mut lower = vec![0.0; k];
            for i in 0..k {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                lower[i] = h0;
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0);
            }
            for i in 1..k {
                let w = lower[i] / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        })
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let n = self.xs.len();
        // Segment index; out-of-range x uses the first or last segment.
        let i = match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = self.xs[i + 1] - x;
        let b = x - self.xs[i];
        self.m[i] * a.powi(3) / (6.0 * h)
            + self.m[i + 1] * b.powi(3) / (6.0 * h)
            + (self.ys[i] / h - self.m[i] * h / 6.0) * a
            + (self.ys[i + 1] / h - self.m[i + 1] * h / 6.0) * b
    }
}
