//! The linear-mixing steps of the detector (module A and module B outputs
//! and the Onsager-corrected residual).

use num_complex::Complex64;

use crate::CMatrix;

fn c(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

pub fn conj_t(a: &CMatrix) -> CMatrix {
    a.t().mapv(|z| z.conj())
}

/// Step 1: `τ_d = N(σ² + τ_b)/|G|²`, `D = μ_U + (N/|G|²) Gᴴ(Y − B)`.
#[allow(clippy::too_many_arguments)]
pub fn module_a_to_u(g_h: &CMatrix, g_norm2: f64, y: &CMatrix, b: &CMatrix, mu_u: &CMatrix, noise_var: f64, tau_b: f64) -> (CMatrix, f64) {
    let n = g_h.nrows() as f64;
    let scale = n / g_norm2;
    let d = mu_u + &(g_h.dot(&(y - b)) * c(scale));
    (d, scale * (noise_var + tau_b))
}

/// Step 2: `τ_p = |F|² v_x / N`, `P = F μ_X − (τ_p/τ_p_prev)(μ_C − P_prev)`.
#[allow(clippy::too_many_arguments)]
pub fn module_b_to_c(f: &CMatrix, f_norm2: f64, mu_x: &CMatrix, mu_c: &CMatrix, p_prev: &CMatrix, v_x: f64, tau_p_prev: f64, floor: f64) -> (CMatrix, f64) {
    let n = f.nrows() as f64;
    let tau_p = (f_norm2 * v_x / n).max(floor);
    let ratio = tau_p / tau_p_prev.max(floor);
    let p = f.dot(mu_x) - &((mu_c - p_prev) * c(ratio));
    (p, tau_p)
}

/// Step 5: `τ_r = K(σ² + τ_b)/|H|²`, `R = μ_X + (K/|H|²) Hᴴ(Y − B)`.
pub fn direct_observation(h_h: &CMatrix, h_norm2: f64, y: &CMatrix, b: &CMatrix, mu_x: &CMatrix, noise_var: f64, tau_b: f64) -> (CMatrix, f64) {
    let k = h_h.nrows() as f64;
    let scale = k / h_norm2;
    (mu_x + &(h_h.dot(&(y - b)) * c(scale)), scale * (noise_var + tau_b))
}

/// Step 6: `τ_o = K τ_p²/(|F|²(τ_p − v_c))`,
/// `O = μ_X + (K/|F|²)(τ_p/(τ_p − v_c)) Fᴴ(μ_C − P)`.
///
/// `gap` is `τ_p − v_c`, passed in directly so callers can form it without
/// cancellation. It is clamped to `floor · τ_p²`; the flag reports whether
/// that happened.
#[allow(clippy::too_many_arguments)]
pub fn cascade_observation(f_h: &CMatrix, f_norm2: f64, mu_c: &CMatrix, p: &CMatrix, mu_x: &CMatrix, tau_p: f64, gap: f64, floor: f64) -> (CMatrix, f64, bool) {
    let k = f_h.nrows() as f64;
    let min_gap = floor * tau_p * tau_p;
    let clamped = gap <= min_gap;
    let denom = gap.max(min_gap).max(f64::MIN_POSITIVE);
    let tau_o = k * tau_p * tau_p / (f_norm2 * denom);
    let o = mu_x + &(f_h.dot(&(mu_c - p)) * c(k / f_norm2 * tau_p / denom));
    (o, tau_o, clamped)
}

/// Step 11: `τ_b = (|G|² v_u + |H|² v_x)/M`,
/// `B = G μ_U + H μ_X − τ_b/(σ² + τ_b_prev)(Y − B_prev)`.
#[allow(clippy::too_many_arguments)]
pub fn update_b(
    g: &CMatrix,
    h: &CMatrix,
    norms: (f64, f64),
    y: &CMatrix,
    b_prev: &CMatrix,
    mu_u: &CMatrix,
    mu_x: &CMatrix,
    v: (f64, f64),
    noise_var: f64,
    tau_b_prev: f64,
) -> (CMatrix, f64) {
    let m = g.nrows() as f64;
    let (g_norm2, h_norm2) = norms;
    let (v_u, v_x) = v;
    let tau_b = (g_norm2 * v_u + h_norm2 * v_x) / m;
    let mut b = g.dot(mu_u);
    if h_norm2 > 0.0 {
        b += &h.dot(mu_x);
    }
    b -= &((y - b_prev) * c(tau_b / (noise_var + tau_b_prev)));
    (b, tau_b)
}
