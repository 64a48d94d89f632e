//! Brute-force references. Nothing here calls into the receiver kernels:
//! densities are evaluated directly and integrated or enumerated.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::channel::ChannelSet;
use crate::constellation::{Constellation, RisPhaseSet};
use crate::error::{invalid, Error, Result};
use crate::CMatrix;

/// Hypothesis budget of [`exact_joint_map`].
pub const HYPOTHESIS_BUDGET: u128 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureTarget {
    /// `u = s c`, observed as `d = u + CN(0, τ_d)`.
    U,
    /// `c ~ CN(p, τ_p)`.
    C,
}

fn cn_density(z: Complex64, mean: Complex64, var: f64) -> f64 {
    (-(z - mean).norm_sqr() / var).exp() / (PI * var)
}

/// Posterior mean and variance of `u` or `c` in the model
/// `s ~ π`, `c ~ CN(p, τ_p)`, `d = s c + CN(0, τ_d)`, by trapezoid
/// integration of the unnormalized posterior density over the complex
/// plane. The grid is halved until the moments agree to `1e-10`.
pub fn quadrature_mixture_moments(
    pi: &[f64],
    phases: &[Complex64],
    p: Complex64,
    tau_p: f64,
    d: Complex64,
    tau_d: f64,
    target: MixtureTarget,
) -> Result<(Complex64, f64)> {
    if pi.len() != phases.len() || !(tau_p > 0.0 && tau_d > 0.0) {
        return invalid("mixture oracle needs matching π/phases and positive variances");
    }
    // the density of the target variable at z
    let density = |z: Complex64| -> f64 {
        let mut acc = 0.0;
        for (&w, &s) in pi.iter().zip(phases) {
            if w == 0.0 {
                continue;
            }
            acc += match target {
                MixtureTarget::U => w * cn_density(d, z, tau_d) * cn_density(z, p * s, tau_p),
                MixtureTarget::C => w * cn_density(d, s * z, tau_d) * cn_density(z, p, tau_p),
            };
        }
        acc
    };
    // every component is a Gaussian of variance at least this
    let width = (tau_p * tau_d / (tau_p + tau_d)).sqrt();
    let centers: Vec<Complex64> = phases
        .iter()
        .map(|&s| match target {
            MixtureTarget::U => (p * s * tau_d + d * tau_p) / (tau_p + tau_d),
            MixtureTarget::C => (p * tau_d + d * s.conj() * tau_p) / (tau_p + tau_d),
        })
        .collect();
    let pad = 14.0 * width;
    let lo_re = centers.iter().map(|c| c.re).fold(f64::INFINITY, f64::min) - pad;
    let hi_re = centers.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max) + pad;
    let lo_im = centers.iter().map(|c| c.im).fold(f64::INFINITY, f64::min) - pad;
    let hi_im = centers.iter().map(|c| c.im).fold(f64::NEG_INFINITY, f64::max) + pad;
    let integrate = |h: f64| -> (Complex64, f64) {
        let nr = ((hi_re - lo_re) / h).ceil() as usize + 1;
        let ni = ((hi_im - lo_im) / h).ceil() as usize + 1;
        let (mut z0, mut z1, mut z2) = (0.0, Complex64::new(0.0, 0.0), 0.0);
        for i in 0..nr {
            for j in 0..ni {
                let z = Complex64::new(lo_re + i as f64 * h, lo_im + j as f64 * h);
                let f = density(z);
                z0 += f;
                z1 += z * f;
                z2 += z.norm_sqr() * f;
            }
        }
        let mean = z1 / z0;
        (mean, z2 / z0 - mean.norm_sqr())
    };
    let mut h = width / 2.0;
    let mut prev = integrate(h);
    for _ in 0..4 {
        h /= 2.0;
        let cur = integrate(h);
        if (cur.0 - prev.0).norm() < 1e-10 && (cur.1 - prev.1).abs() < 1e-10 {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Divergence("mixture quadrature did not settle".into()))
}

/// Discrete posterior `∝ prior(x) Π CN(obs_i; x, var_i)` by direct
/// evaluation of the densities, with its mean and variance.
pub fn enumerate_posterior(points: &[Complex64], prior: &[f64], obs: &[(Complex64, f64)]) -> (Vec<f64>, Complex64, f64) {
    let mut w: Vec<f64> = points.iter().zip(prior).map(|(&x, &a)| a * obs.iter().map(|&(z, v)| cn_density(z, x, v)).product::<f64>()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let mean: Complex64 = points.iter().zip(&w).map(|(&x, &p)| x * p).sum();
    let var = points.iter().zip(&w).map(|(&x, &p)| p * (x - mean).norm_sqr()).sum();
    (w, mean, var)
}

/// Posterior of a phase from `T` slots `d_t = p_t s + CN(0, τ)`.
pub fn enumerate_phase_posterior(phases: &[Complex64], prior: &[f64], d: &[Complex64], p: &[Complex64], tau: f64) -> (Vec<f64>, Complex64, f64) {
    let mut w: Vec<f64> = phases.iter().zip(prior).map(|(&s, &a)| a * d.iter().zip(p).map(|(&dt, &pt)| cn_density(dt, pt * s, tau)).product::<f64>()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    let mean: Complex64 = phases.iter().zip(&w).map(|(&x, &p)| x * p).sum();
    let var = phases.iter().zip(&w).map(|(&x, &p)| p * (x - mean).norm_sqr()).sum();
    (w, mean, var)
}

fn trapezoid_nodes(lo: f64, hi: f64, n: usize) -> (Vec<f64>, f64) {
    let h = (hi - lo) / (n - 1) as f64;
    ((0..n).map(|i| lo + i as f64 * h).collect(), h)
}

/// `1 − ∫ (πτ_r)^{-1/2} tanh(2R/τ_r) exp(−(R − 1)²/τ_r) dR`, the BPSK MMSE
/// at observation noise `τ_r`, by the trapezoid rule on `n` points.
pub fn bpsk_mmse_tanh(tau_r: f64, n: usize) -> f64 {
    let half = 14.0 * (tau_r / 2.0).sqrt();
    let (xs, h) = trapezoid_nodes(1.0 - half, 1.0 + half, n);
    let f = |r: f64| (PI * tau_r).powf(-0.5) * (2.0 * r / tau_r).tanh() * (-(r - 1.0).powi(2) / tau_r).exp();
    let inner: f64 = xs.iter().map(|&r| f(r)).sum::<f64>() - 0.5 * (f(xs[0]) + f(xs[n - 1]));
    1.0 - h * inner
}

/// MMSE of a uniform point of `c` through `y = x + CN(0, 1/ρ)` by a dense
/// 2-D trapezoid rule over the noise plane.
pub fn scalar_mmse_quadrature(c: &Constellation, rho: f64, n: usize) -> f64 {
    let pts = c.points();
    let q = pts.len() as f64;
    let mean: Complex64 = pts.iter().sum::<Complex64>() / q;
    let prior = pts.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / q;
    if rho <= 0.0 {
        return prior;
    }
    let (zs, h) = trapezoid_nodes(-9.0, 9.0, n);
    let mut total = 0.0;
    for &x in pts {
        for &a in &zs {
            for &b in &zs {
                let z = Complex64::new(a, b);
                let weight = (-z.norm_sqr()).exp() / PI * h * h;
                let y = x + z / rho.sqrt();
                let lik: Vec<f64> = pts.iter().map(|&xp| (-rho * (y - xp).norm_sqr() + rho * (y - x).norm_sqr()).exp()).collect();
                let w: f64 = lik.iter().sum();
                let m: Complex64 = pts.iter().zip(&lik).map(|(&xp, &l)| xp * l).sum::<Complex64>() / w;
                let v = pts.iter().zip(&lik).map(|(&xp, &l)| l * (xp - m).norm_sqr()).sum::<f64>() / w;
                total += weight * v;
            }
        }
    }
    total / q
}

/// Constellation-constrained mutual information `I(x; y)` in nats for a
/// uniform input through `y = x + CN(0, 1/ρ)`.
pub fn constellation_mi(c: &Constellation, rho: f64, n: usize) -> f64 {
    let pts = c.points();
    let q = pts.len() as f64;
    let (zs, h) = trapezoid_nodes(-9.0, 9.0, n);
    let mut e = 0.0;
    for &x in pts {
        for &a in &zs {
            for &b in &zs {
                let z = Complex64::new(a, b);
                let weight = (-z.norm_sqr()).exp() / PI * h * h;
                let s: f64 = pts.iter().map(|&xp| (-(rho.sqrt() * (x - xp) + z).norm_sqr() + z.norm_sqr()).exp()).sum();
                e += weight * s.ln();
            }
        }
    }
    q.ln() - e / q
}

/// For BPSK phases and one slot, `E var(s | d, p)` with
/// `p ~ CN(0, var_p)` and `d = p s + CN(0, τ)`. With `gain_weighted` the
/// variance is weighted by `|p|²/var_p`. The posterior variance is
/// `1 − tanh²(2 Re(p* d)/τ)`, and `Re(p* d)` given `|p|² = g` is
/// `N(g s, g τ/2)`, leaving a 2-D integral over `g` and the noise. The
/// exponential gain is integrated in `ln g`, where the integrand decays
/// doubly exponentially at both ends.
pub fn bpsk_phase_mmse(var_p: f64, tau: f64, gain_weighted: bool, n: usize) -> f64 {
    let (ws, he) = trapezoid_nodes(-40.0, 4.5, n);
    let (zs, hz) = trapezoid_nodes(-10.0, 10.0, n);
    let mut total = 0.0;
    for &w in &ws {
        let e = w.exp();
        let we = he * e * (-e).exp();
        let g = var_p * e;
        let mut inner = 0.0;
        for (j, &z) in zs.iter().enumerate() {
            let wz = if j == 0 || j == n - 1 { 0.5 } else { 1.0 } * hz * (-z * z / 2.0).exp() / (2.0 * PI).sqrt();
            let re = g + (g * tau / 2.0).sqrt() * z;
            let t = (2.0 * re / tau).tanh();
            inner += wz * (1.0 - t * t);
        }
        total += we * inner * if gain_weighted { e } else { 1.0 };
    }
    total
}

/// Exact posteriors of the uncoded block by enumeration.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    /// Marginals of every Tx slot, index `col · K + k`.
    pub x_marginals: Vec<Vec<f64>>,
    /// Marginals of every data phase, index `q · (N − N_P) + (n − N_P)`.
    pub s_marginals: Vec<Vec<f64>>,
    /// Jointly most likely hypothesis.
    pub x_map: Array2<usize>,
    pub s_map: Array2<usize>,
    /// Per-symbol most likely values.
    pub x_marginal_map: Array2<usize>,
    pub s_marginal_map: Array2<usize>,
}

/// Enumerates every `(X, S_D)` hypothesis of each sub-block, scoring it by
/// the Gaussian likelihood of `Y` with the physical channels. Sub-blocks
/// are independent given the channels, so each is enumerated on its own;
/// the per-sub-block count must stay within [`HYPOTHESIS_BUDGET`].
#[allow(clippy::too_many_arguments)]
pub fn exact_joint_map(
    ch: &ChannelSet,
    y: &CMatrix,
    noise_var: f64,
    amplitude: f64,
    t: usize,
    pilot_idx: &Array2<usize>,
    tx: &Constellation,
    ris: &RisPhaseSet,
) -> Result<ExactPosterior> {
    let (n, m, k) = (ch.dims.n, ch.dims.m, ch.dims.k);
    let (np, q_len) = pilot_idx.dim();
    let nd = n - np;
    let cols = q_len * t;
    if y.dim() != (m, cols) {
        return Err(Error::DimensionMismatch(format!("Y is {:?}, expected ({m}, {cols})", y.dim())));
    }
    if !(noise_var > 0.0) {
        return invalid("exact MAP needs positive noise");
    }
    let (nx, ns) = (tx.len() as u128, ris.len() as u128);
    let count = nx.checked_pow((k * t) as u32).and_then(|a| ns.checked_pow(nd as u32).and_then(|b| a.checked_mul(b))).unwrap_or(u128::MAX);
    if count > HYPOTHESIS_BUDGET {
        return Err(Error::BudgetExceeded { needed: count, budget: HYPOTHESIS_BUDGET });
    }
    let count = count as usize;
    let xs = tx.points();
    let phases = ris.points();
    let mut out = ExactPosterior {
        x_marginals: vec![vec![0.0; xs.len()]; k * cols],
        s_marginals: vec![vec![0.0; phases.len()]; nd * q_len],
        x_map: Array2::zeros((k, cols)),
        s_map: Array2::zeros((nd, q_len)),
        x_marginal_map: Array2::zeros((k, cols)),
        s_marginal_map: Array2::zeros((nd, q_len)),
    };
    let mut xi = vec![0usize; k * t];
    let mut si = vec![0usize; nd];
    let mut logl = vec![0.0; count];
    for q in 0..q_len {
        for (h, l) in logl.iter_mut().enumerate() {
            decode_digits(h, xs.len(), phases.len(), &mut xi, &mut si);
            let s: Vec<Complex64> = (0..n).map(|r| if r < np { phases[pilot_idx[(r, q)]] } else { phases[si[r - np]] }).collect();
            let mut acc = 0.0;
            for tt in 0..t {
                let col = q * t + tt;
                for mm in 0..m {
                    let mut pred = Complex64::new(0.0, 0.0);
                    for kk in 0..k {
                        let x = xs[xi[tt * k + kk]] * amplitude;
                        let mut a = ch.h[(mm, kk)];
                        for r in 0..n {
                            a += ch.g[(mm, r)] * s[r] * ch.f[(r, kk)];
                        }
                        pred += a * x;
                    }
                    acc -= (y[(mm, col)] - pred).norm_sqr() / noise_var;
                }
            }
            *l = acc;
        }
        let best = logl.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut arg = 0;
        let mut total = 0.0;
        for (h, &l) in logl.iter().enumerate() {
            let w = (l - best).exp();
            total += w;
            if l == best {
                arg = h;
            }
            decode_digits(h, xs.len(), phases.len(), &mut xi, &mut si);
            for tt in 0..t {
                for kk in 0..k {
                    out.x_marginals[(q * t + tt) * k + kk][xi[tt * k + kk]] += w;
                }
            }
            for r in 0..nd {
                out.s_marginals[q * nd + r][si[r]] += w;
            }
        }
        decode_digits(arg, xs.len(), phases.len(), &mut xi, &mut si);
        for tt in 0..t {
            for kk in 0..k {
                out.x_map[(kk, q * t + tt)] = xi[tt * k + kk];
                let marg = &mut out.x_marginals[(q * t + tt) * k + kk];
                marg.iter_mut().for_each(|v| *v /= total);
                out.x_marginal_map[(kk, q * t + tt)] = argmax(marg);
            }
        }
        for r in 0..nd {
            out.s_map[(r, q)] = si[r];
            let marg = &mut out.s_marginals[q * nd + r];
            marg.iter_mut().for_each(|v| *v /= total);
            out.s_marginal_map[(r, q)] = argmax(marg);
        }
    }
    Ok(out)
}

fn decode_digits(mut h: usize, nx: usize, ns: usize, xi: &mut [usize], si: &mut [usize]) {
    for v in xi.iter_mut() {
        *v = h % nx;
        h /= nx;
    }
    for v in si.iter_mut() {
        *v = h % ns;
        h /= ns;
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, &x)| if x > a.1 { (i, x) } else { a }).0
}
