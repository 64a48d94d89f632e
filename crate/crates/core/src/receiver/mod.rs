//! Message-passing joint detector for the Tx symbols and surface phases,
//! with optional iterative decoding.

pub mod kernels;
pub mod linear;

use std::io::{self, Write};

use ndarray::Array2;
use num_complex::Complex64;

use crate::channel::{frob_sq, normalize, normalize_blocked, ChannelSet, Dims, NormalizedChannels};
use crate::coding::SymbolPriorTable;
use crate::constellation::{Constellation, RisPhaseSet};
use crate::error::{invalid, Error, Result};
use crate::frame::{FrameCoding, FrameData};
use crate::CMatrix;

pub use kernels::{compute_pi, posterior_c, posterior_s, posterior_u, posterior_x, Moments};
pub use linear::{cascade_observation, direct_observation, module_a_to_u, module_b_to_c, update_b};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionMode {
    /// Decoders activated once per iteration.
    Joint,
    /// Detection with uniform symbol priors, decoding once at the end.
    Separate,
    /// No decoders.
    Uncoded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Genie {
    None,
    /// Surface data phases revealed to the receiver.
    KnownS,
    /// Tx symbols revealed to the receiver.
    KnownX,
}

/// When the per-slot phase beliefs feeding the `u`/`c` posteriors are
/// formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiSchedule {
    /// From the current iteration's `d` and `p`, just before they are used.
    Fresh,
    /// From the previous iteration's `d` and `p`.
    Lagged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverConfig {
    pub max_iter: usize,
    /// Iterations run before the stopping rule is consulted.
    pub min_iter: usize,
    pub tol: f64,
    pub mode: DetectionMode,
    pub genie: Genie,
    pub damping: f64,
    pub pi_schedule: PiSchedule,
    pub var_floor: f64,
    /// Abort when `τ_b` grows beyond this multiple of its initial value.
    pub divergence_factor: f64,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            max_iter: 50,
            min_iter: 1,
            tol: 1e-4,
            mode: DetectionMode::Uncoded,
            genie: Genie::None,
            damping: 1.0,
            pi_schedule: PiSchedule::Fresh,
            var_floor: 1e-12,
            divergence_factor: 1e6,
        }
    }
}

impl ReceiverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return invalid(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if self.max_iter == 0 || self.min_iter > self.max_iter {
            return invalid("need 1 <= max_iter and min_iter <= max_iter");
        }
        if !(self.tol > 0.0) || !(self.var_floor > 0.0) {
            return invalid("tolerance and variance floor must be positive");
        }
        Ok(())
    }
}

/// Everything the detector sees, in normalized coordinates: unit-power Tx
/// symbols, channels rescaled as in [`normalize`], `Y` divided by `a` and the
/// noise variance by `a²`.
#[derive(Debug, Clone)]
pub struct DetectionProblem {
    pub ch: NormalizedChannels,
    pub y: CMatrix,
    pub noise_var: f64,
    pub t: usize,
    pub pilots: usize,
    /// `N_P x Q` pilot phase indices.
    pub pilot_idx: Array2<usize>,
    pub tx: Constellation,
    pub ris: RisPhaseSet,
}

impl DetectionProblem {
    /// Builds the normalized problem from physical-unit channels (true or
    /// estimated) and the received block.
    #[allow(clippy::too_many_arguments)]
    pub fn from_received(
        rx_channels: &ChannelSet,
        y: &CMatrix,
        noise_var: f64,
        amplitude: f64,
        t: usize,
        pilot_idx: &Array2<usize>,
        tx: &Constellation,
        ris: &RisPhaseSet,
    ) -> Result<Self> {
        let scaled = rx_channels.with_tx_amplitude(amplitude);
        let ch = if scaled.direct_link_blocked() { normalize_blocked(&scaled)? } else { normalize(&scaled)? };
        let a = ch.a;
        let p = Self {
            y: y.mapv(|z| z / a),
            noise_var: noise_var / (a * a),
            ch,
            t,
            pilots: pilot_idx.nrows(),
            pilot_idx: pilot_idx.clone(),
            tx: tx.clone(),
            ris: ris.clone(),
        };
        p.check()?;
        Ok(p)
    }

    pub fn dims(&self) -> Dims {
        self.ch.dims
    }

    pub fn q(&self) -> usize {
        self.pilot_idx.ncols()
    }

    pub fn columns(&self) -> usize {
        self.y.ncols()
    }

    pub fn data_rows(&self) -> usize {
        self.dims().n - self.pilots
    }

    pub fn blocked(&self) -> bool {
        self.ch.direct_link_blocked()
    }

    pub fn check(&self) -> Result<()> {
        let Dims { n, m, .. } = self.dims();
        if self.t == 0 || self.y.nrows() != m || self.y.ncols() != self.q() * self.t {
            return Err(Error::DimensionMismatch(format!("Y {:?} inconsistent with M = {m}, Q = {}, T = {}", self.y.dim(), self.q(), self.t)));
        }
        if self.pilots == 0 || self.pilots >= n {
            return invalid("pilot rows must satisfy 1 <= N_P < N");
        }
        if self.pilot_idx.iter().any(|&i| i >= self.ris.len()) {
            return invalid("pilot index out of range");
        }
        if !(self.noise_var >= 0.0) {
            return invalid("noise variance must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub v_x: f64,
    pub v_u: f64,
    pub v_c: f64,
    pub v_s: f64,
    pub tau_b: f64,
    pub tau_d: f64,
    pub tau_p: f64,
    /// `NaN` with a blocked direct link.
    pub tau_r: f64,
    pub tau_o: f64,
    pub mse_x: Option<f64>,
    pub mse_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub tau_o_clamps: usize,
    pub weight_underflows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// `K x QT` in unit-power coordinates.
    pub mu_x: CMatrix,
    /// `N x Q`; pilot rows hold the known phases.
    pub mu_s: CMatrix,
    pub x_hat: Array2<usize>,
    /// `N x Q`; pilot rows hold the pilot indices.
    pub s_hat: Array2<usize>,
    pub tx_bits_hat: Vec<u8>,
    pub ris_bits_hat: Vec<u8>,
    pub trace: Vec<IterationRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

fn bit_errors(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

impl DetectionResult {
    pub fn ber_x(&self, truth: &FrameData) -> f64 {
        bit_errors(&self.tx_bits_hat, &truth.tx_bits) as f64 / truth.tx_bits.len().max(1) as f64
    }

    pub fn ber_s(&self, truth: &FrameData) -> f64 {
        bit_errors(&self.ris_bits_hat, &truth.ris_bits) as f64 / truth.ris_bits.len().max(1) as f64
    }

    pub fn ser_x(&self, truth: &FrameData) -> f64 {
        let e = self.x_hat.iter().zip(truth.x_idx.iter()).filter(|(a, b)| a != b).count();
        e as f64 / self.x_hat.len() as f64
    }

    pub fn ser_s(&self, truth: &FrameData, pilots: usize) -> f64 {
        let rows = self.s_hat.nrows() - pilots;
        let mut e = 0;
        for n in pilots..self.s_hat.nrows() {
            for q in 0..self.s_hat.ncols() {
                e += usize::from(self.s_hat[(n, q)] != truth.s_idx[(n, q)]);
            }
        }
        e as f64 / (rows * self.s_hat.ncols()) as f64
    }

    /// Per-iteration trace as CSV.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "iteration,v_x,v_u,v_c,v_s,tau_b,tau_d,tau_p,tau_r,tau_o,mse_x,mse_s")?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
        for (i, r) in self.trace.iter().enumerate() {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                i + 1,
                r.v_x,
                r.v_u,
                r.v_c,
                r.v_s,
                r.tau_b,
                r.tau_d,
                r.tau_p,
                r.tau_r,
                r.tau_o,
                opt(r.mse_x),
                opt(r.mse_s)
            )?;
        }
        Ok(())
    }
}

fn labels_to_bits(idx: impl Iterator<Item = usize>, c: &Constellation) -> Vec<u8> {
    let bps = c.bits_per_symbol();
    let mut out = Vec::new();
    for i in idx {
        for b in 0..bps {
            out.push(c.label_bit(i, b));
        }
    }
    out
}

fn damp_var(new: f64, old: f64, damping: f64) -> f64 {
    damping * new + (1.0 - damping) * old
}

fn damp(new: CMatrix, old: &CMatrix, damping: f64) -> CMatrix {
    if damping == 1.0 {
        new
    } else {
        new * Complex64::new(damping, 0.0) + old * Complex64::new(1.0 - damping, 0.0)
    }
}

/// Runs the detector. `coding` is required for the joint and separate
/// modes; `truth` is required for genie modes and enables MSE traces.
pub fn run(problem: &DetectionProblem, cfg: &ReceiverConfig, coding: Option<&FrameCoding>, truth: Option<&FrameData>) -> Result<DetectionResult> {
    cfg.validate()?;
    problem.check()?;
    let coded = matches!(cfg.mode, DetectionMode::Joint | DetectionMode::Separate);
    if coded && coding.is_none() {
        return invalid("coded detection modes need the frame coding context");
    }
    if cfg.genie != Genie::None && truth.is_none() {
        return invalid("genie modes need the transmitted frame");
    }
    let Dims { n, m, k } = problem.dims();
    let (q_len, t_len, cols) = (problem.q(), problem.t, problem.columns());
    let (np, nd) = (problem.pilots, problem.data_rows());
    let ch = &problem.ch;
    let (g, h, f) = (&ch.g, &ch.h, &ch.f);
    let (gg, hh, ff) = (frob_sq(g), frob_sq(h), frob_sq(f));
    if !(gg > 0.0) || !(ff > 0.0) {
        return Err(Error::DegenerateChannel("cascaded channel has zero norm".into()));
    }
    let blocked = !(hh > 0.0);
    let (g_h, h_h, f_h) = (linear::conj_t(g), linear::conj_t(h), linear::conj_t(f));
    let y = &problem.y;
    let sigma2 = problem.noise_var;
    let phases = problem.ris.points();
    let xs = problem.tx.points();
    let (ns, nx) = (phases.len(), xs.len());
    let eps = cfg.var_floor;
    let zero = Complex64::new(0.0, 0.0);

    let x_true = truth.map(|fr| fr.x_idx.mapv(|i| xs[i]));
    let s_true = truth.map(|fr| fr.s_idx.mapv(|i| phases[i]));
    if let Some(fr) = truth {
        if fr.x_idx.dim() != (k, cols) || fr.s_idx.dim() != (n, q_len) {
            return Err(Error::DimensionMismatch("truth frame does not match the problem".into()));
        }
    }

    // decoder-side priors: α per data slot q*nd + (n - np), β per slot col*K + k
    let mut alpha = vec![1.0 / ns as f64; nd * q_len * ns];
    let mut beta = vec![1.0 / nx as f64; cols * k * nx];
    if cfg.genie == Genie::KnownS {
        let si = &truth.expect("checked").s_idx;
        alpha.iter_mut().for_each(|a| *a = 0.0);
        for q in 0..q_len {
            for nn in np..n {
                alpha[(q * nd + nn - np) * ns + si[(nn, q)]] = 1.0;
            }
        }
    }
    if cfg.genie == Genie::KnownX {
        let xi = &truth.expect("checked").x_idx;
        beta.iter_mut().for_each(|b| *b = 0.0);
        for col in 0..cols {
            for kk in 0..k {
                beta[(col * k + kk) * nx + xi[(kk, col)]] = 1.0;
            }
        }
    }
    let decode_x = cfg.mode == DetectionMode::Joint && cfg.genie != Genie::KnownX;
    let decode_s = cfg.mode == DetectionMode::Joint && cfg.genie != Genie::KnownS;

    // π per (col, n); pilots are point masses
    let mut pi = vec![0.0; cols * n * ns];
    for col in 0..cols {
        let q = col / t_len;
        for nn in 0..n {
            let row = &mut pi[(col * n + nn) * ns..(col * n + nn + 1) * ns];
            if nn < np {
                row[problem.pilot_idx[(nn, q)]] = 1.0;
            } else {
                row.copy_from_slice(&alpha[(q * nd + nn - np) * ns..(q * nd + nn - np + 1) * ns]);
            }
        }
    }

    let mut mu_x = CMatrix::zeros((k, cols));
    let mut mu_u = CMatrix::zeros((n, cols));
    let mut mu_c = CMatrix::zeros((n, cols));
    let mut p = CMatrix::zeros((n, cols));
    let mut b = CMatrix::zeros((m, cols));
    let mut v_x = 1.0;
    let mut v_s = 1.0;
    let mut tau_p = ff / n as f64;
    let mut v_u = tau_p;
    let mut tau_b = (gg * v_u + hh * v_x) / m as f64;
    let tau_b_init = tau_b;

    let mut mu_s = s_true.clone().unwrap_or_else(|| CMatrix::zeros((n, q_len)));
    for q in 0..q_len {
        for nn in 0..np {
            mu_s[(nn, q)] = phases[problem.pilot_idx[(nn, q)]];
        }
    }
    let mut s_post = vec![1.0 / ns as f64; nd * q_len * ns];
    let mut x_post = vec![1.0 / nx as f64; cols * k * nx];
    let mut x_loglik = vec![0.0; cols * k * nx];
    let mut s_loglik = vec![0.0; nd * q_len * ns];
    let mut s_slot_loglik = vec![0.0; nd * q_len * t_len * ns];

    let mut trace = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut converged = false;
    let mut scratch = vec![0.0; ns.max(nx)];
    let mut total = vec![0.0; ns];

    // fills the per-(n, q) likelihood caches of s from current d, p
    let fill_s_logliks = |d: &CMatrix, p: &CMatrix, tau: f64, s_loglik: &mut [f64], s_slot: &mut [f64], total: &mut [f64]| {
        let mut dv = vec![zero; t_len];
        let mut pv = vec![zero; t_len];
        for q in 0..q_len {
            for nn in np..n {
                for t in 0..t_len {
                    dv[t] = d[(nn, q * t_len + t)];
                    pv[t] = p[(nn, q * t_len + t)];
                }
                let slot = q * nd + nn - np;
                kernels::s_logliks(&dv, &pv, tau, phases, total, &mut s_slot[slot * t_len * ns..(slot + 1) * t_len * ns]);
                s_loglik[slot * ns..(slot + 1) * ns].copy_from_slice(total);
            }
        }
    };
    // π for data rows from α and cached likelihoods
    let fill_pi = |alpha: &[f64], s_loglik: &[f64], s_slot: &[f64], pi: &mut [f64]| {
        let mut l = vec![0.0; ns];
        for q in 0..q_len {
            for nn in np..n {
                let slot = q * nd + nn - np;
                let a = &alpha[slot * ns..(slot + 1) * ns];
                for t in 0..t_len {
                    for i in 0..ns {
                        l[i] = s_loglik[slot * ns + i] - s_slot[(slot * t_len + t) * ns + i];
                    }
                    let col = q * t_len + t;
                    let out = &mut pi[(col * n + nn) * ns..(col * n + nn + 1) * ns];
                    kernels::discrete_posterior(&l, a, phases, out);
                }
            }
        }
    };

    for iter in 0..cfg.max_iter {
        let tau_b_prev = tau_b;
        let b_prev = b.clone();

        // 1
        let (d, tau_d) = module_a_to_u(&g_h, gg, y, &b, &mu_u, sigma2, tau_b);
        let tau_d = tau_d.max(eps);
        // 2
        let (p_new, tau_p_new) = module_b_to_c(f, ff, &mu_x, &mu_c, &p, v_x, tau_p, eps);
        // damping acts on the linear-module outputs, never on the first pass
        if iter == 0 {
            p = p_new;
            tau_p = tau_p_new;
        } else {
            p = damp(p_new, &p, cfg.damping);
            tau_p = damp_var(tau_p_new, tau_p, cfg.damping);
        }
        let tau_s = tau_p + tau_d;
        if cfg.pi_schedule == PiSchedule::Fresh {
            fill_s_logliks(&d, &p, tau_s, &mut s_loglik, &mut s_slot_loglik, &mut total);
            fill_pi(&alpha, &s_loglik, &s_slot_loglik, &mut pi);
        }
        // 3, 4
        let mut new_u = CMatrix::zeros((n, cols));
        let mut new_c = CMatrix::zeros((n, cols));
        let (mut su, mut sc, mut spread) = (0.0, 0.0, 0.0);
        for col in 0..cols {
            for nn in 0..n {
                let pr = &pi[(col * n + nn) * ns..(col * n + nn + 1) * ns];
                let r = kernels::posterior_uc(d[(nn, col)], tau_d, p[(nn, col)], tau_p, pr, phases, &mut scratch[..ns]);
                diagnostics.weight_underflows += usize::from(r.u.underflow);
                new_u[(nn, col)] = r.u.mean;
                new_c[(nn, col)] = r.c.mean;
                su += r.u.var;
                sc += r.c.var;
                spread += r.spread;
            }
        }
        mu_u = new_u;
        mu_c = new_c;
        v_u = (su / (n * cols) as f64).max(eps);
        let v_c = (sc / (n * cols) as f64).max(eps);
        let tau_pd = tau_p + tau_d;
        let gap = tau_p * tau_p / tau_pd * (1.0 - spread / (n * cols) as f64 / tau_pd);
        // 5
        let direct = if blocked {
            None
        } else {
            let (r, tau_r) = direct_observation(&h_h, hh, y, &b, &mu_x, sigma2, tau_b);
            Some((r, tau_r.max(eps)))
        };
        // 6
        let (o, tau_o, clamped) = cascade_observation(&f_h, ff, &mu_c, &p, &mu_x, tau_p, gap, eps);
        diagnostics.tau_o_clamps += usize::from(clamped);
        let tau_o = tau_o.max(eps);
        for col in 0..cols {
            for kk in 0..k {
                let slot = col * k + kk;
                let rr = direct.as_ref().map(|(r, tr)| (r[(kk, col)], *tr));
                kernels::x_loglik(rr, (o[(kk, col)], tau_o), xs, &mut x_loglik[slot * nx..(slot + 1) * nx]);
            }
        }
        // 7
        if decode_x {
            let table = SymbolPriorTable::from_log(Array2::from_shape_vec((cols * k, nx), x_loglik.clone()).expect("shape"))?;
            let (ext, _) = coding.expect("checked").tx.decode(&table)?;
            beta.copy_from_slice(ext.probs().as_slice().expect("standard layout"));
        }
        // 8
        let mut new_x = CMatrix::zeros((k, cols));
        let mut sx = 0.0;
        for col in 0..cols {
            for kk in 0..k {
                let slot = col * k + kk;
                let mo = kernels::discrete_posterior(
                    &x_loglik[slot * nx..(slot + 1) * nx],
                    &beta[slot * nx..(slot + 1) * nx],
                    xs,
                    &mut x_post[slot * nx..(slot + 1) * nx],
                );
                new_x[(kk, col)] = mo.mean;
                sx += mo.var;
            }
        }
        mu_x = new_x;
        v_x = (sx / (k * cols) as f64).max(eps);
        // 9
        if cfg.pi_schedule == PiSchedule::Lagged {
            fill_s_logliks(&d, &p, tau_s, &mut s_loglik, &mut s_slot_loglik, &mut total);
        }
        if decode_s {
            let table = SymbolPriorTable::from_log(Array2::from_shape_vec((nd * q_len, ns), s_loglik.clone()).expect("shape"))?;
            let (ext, _) = coding.expect("checked").ris.decode(&table)?;
            alpha.copy_from_slice(ext.probs().as_slice().expect("standard layout"));
        }
        if cfg.pi_schedule == PiSchedule::Lagged {
            fill_pi(&alpha, &s_loglik, &s_slot_loglik, &mut pi);
        }
        // 10
        let mut ss = 0.0;
        for q in 0..q_len {
            for nn in np..n {
                let slot = q * nd + nn - np;
                let mo = kernels::discrete_posterior(
                    &s_loglik[slot * ns..(slot + 1) * ns],
                    &alpha[slot * ns..(slot + 1) * ns],
                    phases,
                    &mut s_post[slot * ns..(slot + 1) * ns],
                );
                mu_s[(nn, q)] = mo.mean;
                ss += mo.var;
            }
        }
        let v_s_new = (ss / (nd * q_len) as f64).max(eps);
        // 11
        let (b_new, tau_b_new) = update_b(g, h, (gg, hh), y, &b_prev, &mu_u, &mu_x, (v_u, v_x), sigma2, tau_b_prev);
        b = damp(b_new, &b, cfg.damping);
        tau_b = damp_var(tau_b_new.max(eps), tau_b, cfg.damping);
        if !tau_b.is_finite() || tau_b > cfg.divergence_factor * tau_b_init {
            return Err(Error::Divergence(format!("tau_b = {tau_b:e} at iteration {} (initial {tau_b_init:e})", iter + 1)));
        }

        let mse_x = x_true.as_ref().map(|xt| (&mu_x - xt).iter().map(|z| z.norm_sqr()).sum::<f64>() / (k * cols) as f64);
        let mse_s = s_true.as_ref().map(|st| {
            let mut acc = 0.0;
            for q in 0..q_len {
                for nn in np..n {
                    acc += (mu_s[(nn, q)] - st[(nn, q)]).norm_sqr();
                }
            }
            acc / (nd * q_len) as f64
        });
        let v_x_prev = trace.last().map_or(1.0, |r: &IterationRecord| r.v_x);
        let v_s_prev = v_s;
        v_s = v_s_new;
        trace.push(IterationRecord {
            v_x,
            v_u,
            v_c,
            v_s,
            tau_b,
            tau_d,
            tau_p,
            tau_r: direct.as_ref().map_or(f64::NAN, |(_, tr)| *tr),
            tau_o,
            mse_x,
            mse_s,
        });
        if iter + 1 >= cfg.min_iter {
            let scale = v_x.max(v_s);
            let change = (v_x - v_x_prev).abs().max((v_s - v_s_prev).abs());
            if scale <= eps || change / scale < cfg.tol {
                converged = true;
                break;
            }
        }
    }

    // hard decisions and final decoding
    let x_hat = Array2::from_shape_fn((k, cols), |(kk, col)| {
        let slot = col * k + kk;
        argmax(&x_post[slot * nx..(slot + 1) * nx])
    });
    let mut s_hat = Array2::zeros((n, q_len));
    for q in 0..q_len {
        for nn in 0..n {
            s_hat[(nn, q)] = if nn < np {
                problem.pilot_idx[(nn, q)]
            } else {
                let slot = q * nd + nn - np;
                argmax(&s_post[slot * ns..(slot + 1) * ns])
            };
        }
    }
    let ris_c = problem.ris.as_constellation();
    let (tx_bits_hat, ris_bits_hat) = if coded {
        let cd = coding.expect("checked");
        let tx_bits = match (cfg.genie, truth) {
            (Genie::KnownX, Some(fr)) => fr.tx_bits.clone(),
            _ => {
                let table = SymbolPriorTable::from_log(Array2::from_shape_vec((cols * k, nx), x_loglik).expect("shape"))?;
                hard_bits(&cd.tx.decode(&table)?.1)
            }
        };
        let ris_bits = match (cfg.genie, truth) {
            (Genie::KnownS, Some(fr)) => fr.ris_bits.clone(),
            _ => {
                let table = SymbolPriorTable::from_log(Array2::from_shape_vec((nd * q_len, ns), s_loglik).expect("shape"))?;
                hard_bits(&cd.ris.decode(&table)?.1)
            }
        };
        (tx_bits, ris_bits)
    } else {
        let tx_order = (0..cols).flat_map(|col| (0..k).map(move |kk| (kk, col)));
        let tx_bits = labels_to_bits(tx_order.map(|ix| x_hat[ix]), &problem.tx);
        let s_order = (0..q_len).flat_map(|q| (np..n).map(move |nn| (nn, q)));
        let ris_bits = labels_to_bits(s_order.map(|ix| s_hat[ix]), ris_c);
        (tx_bits, ris_bits)
    };
    Ok(DetectionResult {
        mu_x,
        mu_s,
        x_hat,
        s_hat,
        tx_bits_hat,
        ris_bits_hat,
        iterations: trace.len(),
        trace,
        converged,
        diagnostics,
    })
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best })
}

fn hard_bits(llr: &[f64]) -> Vec<u8> {
    llr.iter().map(|&l| u8::from(l < 0.0)).collect()
}
