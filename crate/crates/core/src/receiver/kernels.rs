//! Per-entry posterior computations at the variable nodes.

use num_complex::Complex64;

/// Mean, variance and whether every mixture weight underflowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: Complex64,
    pub var: f64,
    pub underflow: bool,
}

/// Moments of `u` and `c` at one `(q, t, n)` entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UcMoments {
    pub u: Moments,
    pub c: Moments,
    /// Mixture variance of `d s*` across components; `τ_p − var(c)` equals
    /// `τ_p²/(τ_p + τ_d) · (1 − spread/(τ_p + τ_d))`.
    pub spread: f64,
}

/// Normalized mixture weights `w_s ∝ π(s) CN(d; p s, τ_p + τ_d)` written
/// into `out`. Entries with `π(s) = 0` get weight exactly zero. Returns
/// `true` when all weights underflowed and a uniform fallback over the
/// support was used.
pub fn mixture_weights(d: Complex64, p: Complex64, tau: f64, pi: &[f64], phases: &[Complex64], out: &mut [f64]) -> bool {
    let mut m = f64::NEG_INFINITY;
    for ((o, &w), &s) in out.iter_mut().zip(pi).zip(phases) {
        *o = if w > 0.0 { w.ln() - (d - p * s).norm_sqr() / tau } else { f64::NEG_INFINITY };
        m = m.max(*o);
    }
    if !m.is_finite() {
        let support = pi.iter().filter(|&&w| w > 0.0).count().max(1);
        for (o, &w) in out.iter_mut().zip(pi) {
            *o = if w > 0.0 || pi.iter().all(|&v| v <= 0.0) { 1.0 / support as f64 } else { 0.0 };
        }
        return true;
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - m).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    false
}

/// Posterior moments of `u = s c` and `c` given `d = u + CN(0, τ_d)`,
/// `c ~ CN(p, τ_p)` and `s ~ π` over unit-modulus `phases`.
pub fn posterior_uc(d: Complex64, tau_d: f64, p: Complex64, tau_p: f64, pi: &[f64], phases: &[Complex64], scratch: &mut [f64]) -> UcMoments {
    let underflow = mixture_weights(d, p, tau_p + tau_d, pi, phases, scratch);
    let tot = tau_p + tau_d;
    // weights on the cascade-side and receive-side means
    let (a, b) = (tau_d / tot, tau_p / tot);
    let tbar = tau_p * a;
    // first and second moments of p s and d s* under the weights
    let mut eps = Complex64::new(0.0, 0.0);
    let mut eds = Complex64::new(0.0, 0.0);
    let mut q = 0.0;
    let mut ds2 = 0.0;
    for (&w, &s) in scratch.iter().zip(phases) {
        if w == 0.0 {
            continue;
        }
        let ds = d * s.conj();
        eps += p * s * w;
        eds += ds * w;
        q += w * (p * s).norm_sqr();
        ds2 += w * ds.norm_sqr();
    }
    let spread_ps = (q - eps.norm_sqr()).max(0.0);
    let spread = (ds2 - eds.norm_sqr()).max(0.0);
    UcMoments {
        u: Moments { mean: eps * a + d * b, var: tbar + a * a * spread_ps, underflow },
        c: Moments { mean: p * a + eds * b, var: tbar + b * b * spread, underflow },
        spread,
    }
}

pub fn posterior_u(d: Complex64, tau_d: f64, p: Complex64, tau_p: f64, pi: &[f64], phases: &[Complex64]) -> Moments {
    let mut w = vec![0.0; pi.len()];
    posterior_uc(d, tau_d, p, tau_p, pi, phases, &mut w).u
}

pub fn posterior_c(d: Complex64, tau_d: f64, p: Complex64, tau_p: f64, pi: &[f64], phases: &[Complex64]) -> Moments {
    let mut w = vec![0.0; pi.len()];
    posterior_uc(d, tau_d, p, tau_p, pi, phases, &mut w).c
}

/// Log-likelihood `-|r - x|^2 / τ_r - |o - x|^2 / τ_o` of every point; the
/// `r` term is skipped when `r` is `None` (blocked direct link).
pub fn x_loglik(r: Option<(Complex64, f64)>, o: (Complex64, f64), points: &[Complex64], out: &mut [f64]) {
    for (l, &x) in out.iter_mut().zip(points) {
        let mut v = -(o.0 - x).norm_sqr() / o.1;
        if let Some((r, tr)) = r {
            v -= (r - x).norm_sqr() / tr;
        }
        *l = v;
    }
}

/// Moments of a discrete posterior `∝ prior(x) exp(loglik(x))`. `post`
/// receives the normalized posterior.
pub fn discrete_posterior(loglik: &[f64], prior: &[f64], points: &[Complex64], post: &mut [f64]) -> Moments {
    let mut m = f64::NEG_INFINITY;
    for ((o, &l), &w) in post.iter_mut().zip(loglik).zip(prior) {
        *o = if w > 0.0 { w.ln() + l } else { f64::NEG_INFINITY };
        m = m.max(*o);
    }
    let underflow = !m.is_finite();
    let mut sum = 0.0;
    for o in post.iter_mut() {
        *o = if underflow { 1.0 } else { (*o - m).exp() };
        sum += *o;
    }
    let mut mean = Complex64::new(0.0, 0.0);
    let mut sq = 0.0;
    for (o, &x) in post.iter_mut().zip(points) {
        *o /= sum;
        mean += x * *o;
        sq += *o * x.norm_sqr();
    }
    Moments { mean, var: (sq - mean.norm_sqr()).max(0.0), underflow }
}

pub fn posterior_x(r: Option<(Complex64, f64)>, o: (Complex64, f64), beta: &[f64], points: &[Complex64]) -> (Moments, Vec<f64>) {
    let mut l = vec![0.0; points.len()];
    x_loglik(r, o, points, &mut l);
    let mut post = vec![0.0; points.len()];
    let m = discrete_posterior(&l, beta, points, &mut post);
    (m, post)
}

/// `Σ_t -|d_t - p_t s|^2 / τ` for every phase `s`, plus the per-slot terms
/// in `per_slot` (`T x |S|`, row-major).
pub fn s_logliks(d: &[Complex64], p: &[Complex64], tau: f64, phases: &[Complex64], total: &mut [f64], per_slot: &mut [f64]) {
    let ns = phases.len();
    total.iter_mut().for_each(|v| *v = 0.0);
    for (t, (&dt, &pt)) in d.iter().zip(p).enumerate() {
        for (i, &s) in phases.iter().enumerate() {
            let l = -(dt - pt * s).norm_sqr() / tau;
            per_slot[t * ns + i] = l;
            total[i] += l;
        }
    }
}

/// Extrinsic phase belief for slot `t`: `π(s) ∝ α(s) Π_{j≠t} CN(d_j; p_j s, τ)`.
pub fn compute_pi(alpha: &[f64], d: &[Complex64], p: &[Complex64], tau: f64, phases: &[Complex64], exclude: usize) -> Vec<f64> {
    let ns = phases.len();
    let mut total = vec![0.0; ns];
    let mut per = vec![0.0; ns * d.len()];
    s_logliks(d, p, tau, phases, &mut total, &mut per);
    let l: Vec<f64> = (0..ns).map(|i| total[i] - per[exclude * ns + i]).collect();
    let mut out = vec![0.0; ns];
    discrete_posterior(&l, alpha, phases, &mut out);
    out
}

/// Full posterior of `s` over all `T` slots.
pub fn posterior_s(alpha: &[f64], d: &[Complex64], p: &[Complex64], tau: f64, phases: &[Complex64]) -> (Moments, Vec<f64>) {
    let ns = phases.len();
    let mut total = vec![0.0; ns];
    let mut per = vec![0.0; ns * d.len()];
    s_logliks(d, p, tau, phases, &mut total, &mut per);
    let mut out = vec![0.0; ns];
    let m = discrete_posterior(&total, alpha, phases, &mut out);
    (m, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pilot_gaussian_product() {
        let one = [c(1.0, 0.0)];
        let m = posterior_u(c(2.0, 0.0), 1.0, c(0.0, 0.0), 1.0, &[1.0], &one);
        assert_relative_eq!(m.mean.re, 1.0, epsilon = 1e-15);
        assert_relative_eq!(m.var, 0.5, epsilon = 1e-15);
        let mc = posterior_c(c(2.0, 1.0), 2.0, c(-1.0, 0.5), 0.5, &[1.0], &one);
        // product of CN(2+j, 2) and CN(-1+0.5j, 0.5)
        let expect = (c(2.0, 1.0) / 2.0 + c(-1.0, 0.5) / 0.5) / (1.0 / 2.0 + 1.0 / 0.5);
        assert!((mc.mean - expect).norm() < 1e-14);
        assert_relative_eq!(mc.var, 0.4, epsilon = 1e-14);
    }

    #[test]
    fn symmetric_bpsk_phases() {
        let ph = [c(1.0, 0.0), c(-1.0, 0.0)];
        let m = posterior_u(c(0.0, 0.0), 1.0, c(0.7, 0.2), 0.5, &[0.5, 0.5], &ph);
        assert!(m.mean.norm() < 1e-15);
        let mc = posterior_c(c(0.9, -0.3), 1.0, c(0.0, 0.0), 0.5, &[0.5, 0.5], &ph);
        assert!(mc.mean.norm() < 1e-15);
    }

    #[test]
    fn point_mass_pi_ignores_other_phases() {
        let ph = [c(1.0, 0.0), c(-1.0, 0.0)];
        let a = posterior_u(c(0.3, 0.1), 0.2, c(-2.0, 0.0), 0.3, &[0.0, 1.0], &ph);
        let b = posterior_u(c(0.3, 0.1), 0.2, c(-2.0, 0.0), 0.3, &[1.0], &ph[1..]);
        assert!((a.mean - b.mean).norm() < 1e-15 && (a.var - b.var).abs() < 1e-15);
        assert!(!a.underflow);
    }

    #[test]
    fn zero_cascade_variance_is_finite() {
        let ph = [c(1.0, 0.0), c(-1.0, 0.0)];
        let m = posterior_u(c(0.3, 0.1), 0.5, c(0.8, 0.0), 0.0, &[0.5, 0.5], &ph);
        assert!(m.mean.re.is_finite() && m.var.is_finite());
        let mc = posterior_c(c(0.3, 0.1), 0.5, c(0.8, 0.0), 0.0, &[0.5, 0.5], &ph);
        assert!((mc.mean - c(0.8, 0.0)).norm() < 1e-15 && mc.var == 0.0);
    }

    #[test]
    fn spread_gives_cascade_gap() {
        let ph = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        let pi = [0.1, 0.2, 0.3, 0.4];
        let (d, p, td, tp) = (c(0.4, -0.9), c(-0.2, 0.5), 0.6, 0.35);
        let mut w = [0.0; 4];
        let r = posterior_uc(d, td, p, tp, &pi, &ph, &mut w);
        let gap = tp * tp / (tp + td) * (1.0 - r.spread / (tp + td));
        assert!((gap - (tp - r.c.var)).abs() < 1e-14);
    }

    #[test]
    fn underflow_falls_back_to_uniform() {
        let ph = [c(1.0, 0.0), c(-1.0, 0.0)];
        let m = posterior_u(c(1e200, 0.0), 1e-300, c(0.0, 0.0), 1e-300, &[0.5, 0.5], &ph);
        assert!(m.underflow);
    }

    #[test]
    fn bpsk_tanh_closed_form() {
        let amp = 1.7f64;
        let pts = [c(amp, 0.0), c(-amp, 0.0)];
        for &(r, tr) in &[(0.3, 0.8), (-1.2, 2.0), (2.5, 0.1)] {
            let (m, _) = posterior_x(Some((c(r, 0.4), tr)), (c(0.0, 0.0), f64::INFINITY), &[0.5, 0.5], &pts);
            assert_relative_eq!(m.mean.re, amp * (2.0 * amp * r / tr).tanh(), max_relative = 1e-12);
        }
    }

    #[test]
    fn symmetric_x_zero_observations() {
        let pts = [c(1.0, 0.0), c(0.0, 1.0), c(-1.0, 0.0), c(0.0, -1.0)];
        let (m, _) = posterior_x(Some((c(0.0, 0.0), 1.0)), (c(0.0, 0.0), 1.0), &[0.25; 4], &pts);
        assert!(m.mean.norm() < 1e-15);
        assert_relative_eq!(m.var, 1.0, max_relative = 1e-14);
        let (g, _) = posterior_x(None, (c(3.0, 3.0), 0.1), &[0.0, 0.0, 1.0, 0.0], &pts);
        assert_eq!(g.mean, pts[2]);
        assert_eq!(g.var, 0.0);
    }

    #[test]
    fn pi_edge_cases() {
        let ph = [c(1.0, 0.0), c(-1.0, 0.0)];
        let alpha = [0.3, 0.7];
        let pi = compute_pi(&alpha, &[c(0.4, 0.0)], &[c(1.0, 0.0)], 1.0, &ph, 0);
        assert!((pi[0] - 0.3).abs() < 1e-15 && (pi[1] - 0.7).abs() < 1e-15);
        let z = [c(0.0, 0.0); 3];
        let pi = compute_pi(&[0.5, 0.5], &[c(0.4, 0.1), c(-1.0, 2.0), c(0.3, 0.3)], &z, 1.0, &ph, 1);
        assert!((pi[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pi_two_slot_by_hand() {
        let ph = [c(1.0, 0.0), c(-1.0, 0.0)];
        let d = [c(0.5, 0.2), c(-0.3, 0.4)];
        let p = [c(0.8, -0.1), c(0.2, 0.6)];
        let tau = 0.7;
        let alpha = [0.4, 0.6];
        let pi = compute_pi(&alpha, &d, &p, tau, &ph, 0);
        let lik = |s: Complex64| (-(d[1] - p[1] * s).norm_sqr() / tau).exp();
        let w0 = alpha[0] * lik(ph[0]);
        let w1 = alpha[1] * lik(ph[1]);
        assert!((pi[0] - w0 / (w0 + w1)).abs() < 1e-12);
    }

    #[test]
    fn posterior_s_cases() {
        let ph = [c(1.0, 0.0), c(-1.0, 0.0)];
        let (m, _) = posterior_s(&[0.0, 1.0], &[c(1.0, 0.0)], &[c(1.0, 0.0)], 1.0, &ph);
        assert_eq!(m.mean, c(-1.0, 0.0));
        assert_eq!(m.var, 0.0);
        let (m, _) = posterior_s(&[0.5, 0.5], &[c(0.0, 1.0)], &[c(1.0, 0.0)], 1.0, &ph);
        assert!(m.mean.norm() < 1e-15);
        assert_relative_eq!(m.var, 1.0, max_relative = 1e-15);
    }
}
