//! Deterministic quadrature helpers: Gauss-Hermite rules, a tensor rule for
//! expectations over `CN(0, 1)`, log-spaced grids and the trapezoid rule.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Nodes and weights for `∫ e^{-x^2} f(x) dx`, by Newton iteration on the
/// orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > 400 {
        return invalid(format!("Gauss-Hermite order must be in 1..=400, got {n}"));
    }
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for iter in 0..100 {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
            if iter == 99 {
                return invalid(format!("Gauss-Hermite root {i} of order {n} did not converge"));
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    Ok((x, w))
}

/// Tensor-product rule with `E f(z) ≈ Σ w_i f(z_i)` for `z ~ CN(0, 1)`.
#[derive(Debug, Clone)]
pub struct ComplexGaussianRule {
    pub points: Vec<Complex64>,
    pub weights: Vec<f64>,
    /// One axis of the tensor rule: nodes and weights for `N(0, 1/2)`.
    pub axis_points: Vec<f64>,
    pub axis_weights: Vec<f64>,
}

impl ComplexGaussianRule {
    pub fn new(order: usize) -> Result<Self> {
        let (x, w) = gauss_hermite(order)?;
        let mut points = Vec::with_capacity(order * order);
        let mut weights = Vec::with_capacity(order * order);
        for (xi, wi) in x.iter().zip(&w) {
            for (xj, wj) in x.iter().zip(&w) {
                points.push(Complex64::new(*xi, *xj));
                weights.push(wi * wj / std::f64::consts::PI);
            }
        }
        let axis_weights = w.iter().map(|v| v / std::f64::consts::PI.sqrt()).collect();
        Ok(Self { points, weights, axis_points: x, axis_weights })
    }

    pub fn expect<F: FnMut(Complex64) -> f64>(&self, mut f: F) -> f64 {
        self.points.iter().zip(&self.weights).map(|(z, w)| w * f(*z)).sum()
    }
}

/// `n` points from `lo` to `hi` (both > 0) evenly spaced in log scale.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return invalid(format!("bad log grid ({lo}, {hi}, {n})"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect())
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// Piecewise-linear interpolation on an increasing grid, clamped at the ends.
pub fn interp(x: &[f64], y: &[f64], at: f64) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    if at <= x[0] {
        return y[0];
    }
    if at >= x[x.len() - 1] {
        return y[y.len() - 1];
    }
    let i = x.partition_point(|&v| v <= at) - 1;
    let t = (at - x[i]) / (x[i + 1] - x[i]);
    y[i] + t * (y[i + 1] - y[i])
}
