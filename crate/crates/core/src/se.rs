//! Scalar state evolution of the detector.
//!
//! The recursion tracks `(v_x, v_u, v_c, v_s)` through the effective scalar
//! channels seen by the detector. The discrete-alphabet expectations are
//! Monte-Carlo averages over a frozen set of base samples, so repeated
//! evaluations at nearby parameters share their randomness.
//!
//! Decoders enter through the information they feed back. Apart from the
//! empirical model, that information is an independent AWGN observation of
//! each symbol, indexed by `τ`, the MMSE it alone leaves on the symbol
//! (`τ = 1` is no information, `τ = 0` a genie).

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::Dims;
use crate::coding::{CodedStream, ConvCode, SymbolPriorTable};
use crate::constellation::{Constellation, RisPhaseSet};
use crate::error::{invalid, Error, Result};
use crate::rate::MmseCurve;
use crate::receiver::kernels;
use crate::rng::{standard_cgaussian, RngStream};

/// Transfer curve `ρ ↦ τ` of a decoder.
#[derive(Clone)]
pub struct TransferCurve(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl TransferCurve {
    pub fn new<F: Fn(f64) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Self(Arc::new(f))
    }

    pub fn eval(&self, rho: f64) -> f64 {
        (self.0)(rho).clamp(0.0, 1.0)
    }
}

impl fmt::Debug for TransferCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TransferCurve(..)")
    }
}

#[derive(Debug, Clone, Default)]
pub enum DecoderModel {
    /// Uncoded: no feedback.
    #[default]
    None,
    /// Symbols known exactly.
    Genie,
    /// Fixed side information of decoder-output MMSE `τ`.
    GaussianLlr(f64),
    /// Side information whose `τ` follows the detector output SNR.
    Curve(TransferCurve),
    /// Actual BCJR decoding of codewords sent over the scalar channels.
    Empirical(ConvCode),
}

/// Side information handed to the symbol posteriors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SideInfo {
    Absent,
    /// AWGN observation `b = x + CN(0, 1/γ)`.
    Snr(f64),
    Perfect,
}

/// Step 1 of the recursion: `τ_d = τ_r = (N/M) v_u + (K/M) v_x + σ²`. With
/// the direct link blocked the `v_x` term drops out.
pub fn se_module_a(v_u: f64, v_x: f64, noise_var: f64, n_over_m: f64, k_over_m: f64, blocked: bool) -> f64 {
    let direct = if blocked { 0.0 } else { k_over_m * v_x };
    n_over_m * v_u + direct + noise_var
}

/// `τ_p = ζ (K/N) v_x` and `τ_o = τ_p²/(ζ(τ_p − v_c))`. The gap is clamped
/// at `1e-12 τ_p²`; the flag reports the clamp.
pub fn se_module_b(v_x: f64, v_c: f64, zeta: f64, k_over_n: f64) -> (f64, f64, bool) {
    let tau_p = cascade_tau_p(v_x, zeta, k_over_n);
    let floor = 1e-12 * tau_p * tau_p;
    let gap = tau_p - v_c;
    let clamped = gap <= floor;
    (tau_p, tau_p * tau_p / (zeta * gap.max(floor).max(f64::MIN_POSITIVE)), clamped)
}

/// `τ_p = ζ (K/N) v_x`.
pub fn cascade_tau_p(v_x: f64, zeta: f64, k_over_n: f64) -> f64 {
    zeta * k_over_n * v_x
}

/// `τ_o = τ_p² / (ζ (τ_p − v_c))`, written through `κ`, where
/// `τ_p − v_c = τ_p²/(τ_p + τ_d) · κ`.
pub fn cascade_tau_o(tau_p: f64, tau_d: f64, kappa: f64, zeta: f64) -> f64 {
    (tau_p + tau_d) / (zeta * kappa)
}

#[derive(Debug, Clone)]
pub struct SeConfig {
    pub n_over_m: f64,
    pub k_over_m: f64,
    pub k_over_n: f64,
    /// `N_P / N`.
    pub pilot_frac: f64,
    pub zeta: f64,
    /// Noise variance after channel normalization.
    pub noise_var: f64,
    pub t: usize,
    pub blocked: bool,
    pub samples: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub decoder_x: DecoderModel,
    pub decoder_s: DecoderModel,
}

impl SeConfig {
    pub fn new(dims: Dims, pilots: usize, t: usize, zeta: f64, noise_var: f64) -> Self {
        let (n, m, k) = (dims.n as f64, dims.m as f64, dims.k as f64);
        Self {
            n_over_m: n / m,
            k_over_m: k / m,
            k_over_n: k / n,
            pilot_frac: pilots as f64 / n,
            zeta,
            noise_var,
            t,
            blocked: false,
            samples: 100_000,
            max_iter: 100,
            tol: 1e-5,
            seed: 1,
            decoder_x: DecoderModel::None,
            decoder_s: DecoderModel::None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [("N/M", self.n_over_m), ("K/M", self.k_over_m), ("K/N", self.k_over_n), ("zeta", self.zeta)];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.pilot_frac) {
            return invalid(format!("pilot fraction must be in [0, 1), got {}", self.pilot_frac));
        }
        if !(self.noise_var.is_finite() && self.noise_var > 0.0) {
            return invalid(format!("noise variance must be positive, got {}", self.noise_var));
        }
        if self.t == 0 || self.samples == 0 || self.max_iter == 0 {
            return invalid("T, samples and max_iter must be positive");
        }
        if !(self.tol > 0.0) {
            return invalid(format!("tolerance must be positive, got {}", self.tol));
        }
        for m in [&self.decoder_x, &self.decoder_s] {
            if let DecoderModel::GaussianLlr(tau) = m {
                if !(0.0..=1.0).contains(tau) {
                    return invalid(format!("decoder MMSE must be in [0, 1], got {tau}"));
                }
            }
        }
        Ok(())
    }

    /// Per-entry power of the cascade `F x` in normalized units.
    pub fn cascade_power(&self) -> f64 {
        self.zeta * self.k_over_n
    }
}

/// One iteration of the recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeState {
    pub v_x: f64,
    pub v_u: f64,
    pub v_c: f64,
    pub v_s: f64,
    pub tau_d: f64,
    /// NaN with the direct link blocked.
    pub tau_r: f64,
    pub tau_p: f64,
    pub tau_o: f64,
    pub rho_x: f64,
    pub rho_s: f64,
    /// MMSE left by the x-decoder feedback alone.
    pub tau_x: f64,
    pub tau_s: f64,
    /// Monte-Carlo standard errors of `v_x` and `v_s`.
    pub se_v_x: f64,
    pub se_v_s: f64,
}

#[derive(Debug, Clone)]
pub struct SeTrajectory {
    pub states: Vec<SeState>,
    pub converged: bool,
}

impl SeTrajectory {
    pub fn last(&self) -> &SeState {
        self.states.last().expect("trajectories are never empty")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,v_x,v_u,v_c,v_s,tau_d,tau_p,tau_o,tau_r,se_x_stderr,se_s_stderr,rho_x,rho_s,tau_x,tau_s")?;
        for (i, s) in self.states.iter().enumerate() {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                i + 1,
                s.v_x,
                s.v_u,
                s.v_c,
                s.v_s,
                s.tau_d,
                s.tau_p,
                s.tau_o,
                s.tau_r,
                s.se_v_x,
                s.se_v_s,
                s.rho_x,
                s.rho_s,
                s.tau_x,
                s.tau_s
            )?;
        }
        Ok(())
    }
}

/// Frozen draws shared by every evaluation of one engine.
#[derive(Debug, Clone)]
struct BaseSamples {
    idx: Vec<usize>,
    /// Two unit complex Gaussians per sample for x (`r` and `o` noise), or
    /// `2T` for s (`T` channel gains, then `T` noises).
    z: Vec<Complex64>,
    /// Side-information noise.
    zb: Vec<Complex64>,
}

#[derive(Debug, Clone)]
struct Empirical {
    stream: CodedStream,
}

impl Empirical {
    fn decode(&self, loglik: &[f64], size: usize) -> Result<Vec<f64>> {
        let slots = self.stream.slots;
        let mut out = Vec::with_capacity(loglik.len());
        for chunk in loglik.chunks(slots * size) {
            let table = SymbolPriorTable::from_log(ndarray::Array2::from_shape_vec((slots, size), chunk.to_vec()).map_err(|e| Error::DimensionMismatch(e.to_string()))?)?;
            let (ext, _) = self.stream.decode(&table)?;
            out.extend(ext.probs().iter());
        }
        Ok(out)
    }
}

const CODEWORD_SLOTS: usize = 1024;

/// Monte-Carlo state evolution with frozen base samples.
#[derive(Debug, Clone)]
pub struct SeEngine {
    pub cfg: SeConfig,
    tx: Constellation,
    ris: RisPhaseSet,
    tx_curve: MmseCurve,
    ris_curve: MmseCurve,
    xs: BaseSamples,
    ss: BaseSamples,
    emp_x: Option<Empirical>,
    emp_s: Option<Empirical>,
}

fn draw_base(n: usize, per: usize, alphabet: usize, coded: Option<&CodedStream>, rng: RngStream) -> Result<BaseSamples> {
    let mut r = rng.child(1).rng();
    let idx = match coded {
        None => (0..n).map(|_| r.random_range(0..alphabet)).collect(),
        Some(cs) => {
            let mut idx = Vec::with_capacity(n);
            while idx.len() < n {
                let info: Vec<u8> = (0..cs.info_len()).map(|_| r.random_range(0..2u8)).collect();
                idx.extend(cs.encode_to_indices(&info)?);
            }
            idx
        }
    };
    let mut r = rng.child(2).rng();
    let z = (0..n * per).map(|_| standard_cgaussian(&mut r)).collect();
    let mut r = rng.child(3).rng();
    let zb = (0..n).map(|_| standard_cgaussian(&mut r)).collect();
    Ok(BaseSamples { idx, z, zb })
}

fn side_for(model: &DecoderModel, rho: f64, curve: &MmseCurve) -> SideInfo {
    match model {
        DecoderModel::None | DecoderModel::Empirical(_) => SideInfo::Absent,
        DecoderModel::Genie => SideInfo::Perfect,
        DecoderModel::GaussianLlr(tau) => curve.side_for(*tau),
        DecoderModel::Curve(f) => curve.side_for(f.eval(rho)),
    }
}

/// Fills `out` with the log side-information prior of every sample.
fn side_logprior(base: &BaseSamples, side: SideInfo, points: &[Complex64], out: &mut [f64]) {
    let q = points.len();
    for (i, row) in out.chunks_mut(q).enumerate() {
        let truth = base.idx[i];
        match side {
            SideInfo::Absent => row.iter_mut().for_each(|v| *v = 0.0),
            SideInfo::Perfect => row.iter_mut().enumerate().for_each(|(j, v)| *v = if j == truth { 0.0 } else { f64::NEG_INFINITY }),
            SideInfo::Snr(g) => {
                let b = points[truth] + base.zb[i] / g.sqrt();
                for (v, &x) in row.iter_mut().zip(points) {
                    *v = -g * (b - x).norm_sqr();
                }
            }
        }
    }
}

fn normalize_log(row: &[f64], out: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(row) {
        *o = (l - m).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn mean_stderr(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0);
    (mean, (var / nf).sqrt())
}

/// Moments of the u/c posteriors over the data rows.
struct UcStats {
    v_u: f64,
    spread: f64,
}

impl SeEngine {
    pub fn new(cfg: SeConfig, tx: Constellation, ris: RisPhaseSet) -> Result<Self> {
        cfg.validate()?;
        let tx_curve = MmseCurve::new(&tx)?;
        let ris_curve = MmseCurve::new(ris.as_constellation())?;
        let root = RngStream::new(cfg.seed, 0x5e);
        let emp = |m: &DecoderModel, c: &Constellation, tag: u64| -> Result<Option<Empirical>> {
            match m {
                DecoderModel::Empirical(code) => Ok(Some(Empirical { stream: CodedStream::new(*code, c.clone(), CODEWORD_SLOTS, root.child(tag))? })),
                _ => Ok(None),
            }
        };
        let emp_x = emp(&cfg.decoder_x, &tx, 10)?;
        let emp_s = emp(&cfg.decoder_s, ris.as_constellation(), 20)?;
        let round = |e: &Option<Empirical>| if e.is_some() { cfg.samples.div_ceil(CODEWORD_SLOTS) * CODEWORD_SLOTS } else { cfg.samples };
        let xs = draw_base(round(&emp_x), 2, tx.len(), emp_x.as_ref().map(|e| &e.stream), root.child(1))?;
        let ss = draw_base(round(&emp_s), 2 * cfg.t, ris.len(), emp_s.as_ref().map(|e| &e.stream), root.child(2))?;
        Ok(Self { cfg, tx, ris, tx_curve, ris_curve, xs, ss, emp_x, emp_s })
    }

    pub fn tx(&self) -> &Constellation {
        &self.tx
    }

    pub fn ris(&self) -> &RisPhaseSet {
        &self.ris
    }

    pub fn tx_curve(&self) -> &MmseCurve {
        &self.tx_curve
    }

    pub fn ris_curve(&self) -> &MmseCurve {
        &self.ris_curve
    }

    /// Output SNR of the phase channel, `(ζK/N − τ_p)/(τ_p + τ_d)`.
    pub fn rho_s(&self, tau_p: f64, tau_d: f64) -> f64 {
        (self.cfg.cascade_power() - tau_p).max(0.0) / (tau_p + tau_d)
    }

    /// Per-sample log-likelihood of every phase from the `T` slots, with
    /// observations `d_t = p_t s + CN(0, τ_p + τ_d)`, `p_t ~ CN(0, ζK/N − τ_p)`.
    fn s_channel(&self, i: usize, tau_p: f64, tau_d: f64, d: &mut [Complex64], p: &mut [Complex64]) {
        let t = self.cfg.t;
        let sp = (self.cfg.cascade_power() - tau_p).max(0.0).sqrt();
        let sn = (tau_p + tau_d).sqrt();
        let s = self.ris.points()[self.ss.idx[i]];
        let z = &self.ss.z[i * 2 * t..(i + 1) * 2 * t];
        for j in 0..t {
            p[j] = z[j] * sp;
            d[j] = p[j] * s + z[t + j] * sn;
        }
    }

    fn s_logliks(&self, tau_p: f64, tau_d: f64) -> Vec<f64> {
        let (t, q) = (self.cfg.t, self.ris.len());
        let n = self.ss.idx.len();
        let mut out = vec![0.0; n * q];
        let (mut d, mut p) = (vec![Complex64::default(); t], vec![Complex64::default(); t]);
        let mut per = vec![0.0; t * q];
        for i in 0..n {
            self.s_channel(i, tau_p, tau_d, &mut d, &mut p);
            kernels::s_logliks(&d, &p, tau_p + tau_d, self.ris.points(), &mut out[i * q..(i + 1) * q], &mut per);
        }
        out
    }

    /// Log prior of `s` fed back by the decoder given the phase channel at
    /// `(τ_p, τ_d)`.
    fn s_feedback(&self, model: &DecoderModel, tau_p: f64, tau_d: f64) -> Result<Vec<f64>> {
        let q = self.ris.len();
        let mut out = vec![0.0; self.ss.idx.len() * q];
        match (&self.emp_s, model) {
            (None, DecoderModel::Empirical(_)) => return invalid("engine was built without an empirical s-decoder"),
            (Some(e), DecoderModel::Empirical(_)) => {
                let ext = e.decode(&self.s_logliks(tau_p, tau_d), q)?;
                out.iter_mut().zip(ext).for_each(|(o, v)| *o = v.ln());
            }
            _ => {
                let side = side_for(model, self.rho_s(tau_p, tau_d), &self.ris_curve);
                side_logprior(&self.ss, side, self.ris.points(), &mut out);
            }
        }
        Ok(out)
    }

    fn x_feedback(&self, model: &DecoderModel, tau_r: Option<f64>, tau_o: f64) -> Result<Vec<f64>> {
        let q = self.tx.len();
        let mut out = vec![0.0; self.xs.idx.len() * q];
        match (&self.emp_x, model) {
            (None, DecoderModel::Empirical(_)) => return invalid("engine was built without an empirical x-decoder"),
            (Some(e), DecoderModel::Empirical(_)) => {
                let mut ll = vec![0.0; out.len()];
                for (i, row) in ll.chunks_mut(q).enumerate() {
                    let (r, o) = self.x_obs(i, tau_r, tau_o);
                    kernels::x_loglik(r, o, self.tx.points(), row);
                }
                let ext = e.decode(&ll, q)?;
                out.iter_mut().zip(ext).for_each(|(o, v)| *o = v.ln());
            }
            _ => {
                let rho = tau_r.map_or(0.0, |t| 1.0 / t) + 1.0 / tau_o;
                let side = side_for(model, rho, &self.tx_curve);
                side_logprior(&self.xs, side, self.tx.points(), &mut out);
            }
        }
        Ok(out)
    }

    fn x_obs(&self, i: usize, tau_r: Option<f64>, tau_o: f64) -> (Option<(Complex64, f64)>, (Complex64, f64)) {
        let x = self.tx.points()[self.xs.idx[i]];
        let r = tau_r.map(|t| (x + self.xs.z[2 * i] * t.sqrt(), t));
        let o = if tau_o.is_finite() { x + self.xs.z[2 * i + 1] * tau_o.sqrt() } else { x };
        (r, (o, tau_o))
    }

    /// `v_x = E var(x | r, o, b_x)` and the MMSE left by `b_x` alone, each
    /// with a standard error.
    pub fn se_vx(&self, tau_r: Option<f64>, tau_o: f64, prior_log: &[f64]) -> ((f64, f64), (f64, f64)) {
        let q = self.tx.len();
        let n = self.xs.idx.len();
        let pts = self.tx.points();
        let (mut prior, mut post, mut ll) = (vec![0.0; q], vec![0.0; q], vec![0.0; q]);
        let zero = vec![0.0; q];
        let (mut s, mut s2, mut b, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            normalize_log(&prior_log[i * q..(i + 1) * q], &mut prior);
            let fb = kernels::discrete_posterior(&zero, &prior, pts, &mut post).var;
            b += fb;
            b2 += fb * fb;
            let (r, o) = self.x_obs(i, tau_r, tau_o);
            if tau_o.is_finite() {
                kernels::x_loglik(r, o, pts, &mut ll);
            } else {
                ll.iter_mut().for_each(|v| *v = 0.0);
                if let Some((r, tr)) = r {
                    ll.iter_mut().zip(pts).for_each(|(v, &x)| *v = -(r - x).norm_sqr() / tr);
                }
            }
            let v = kernels::discrete_posterior(&ll, &prior, pts, &mut post).var;
            s += v;
            s2 += v * v;
        }
        (mean_stderr(s, s2, n), mean_stderr(b, b2, n))
    }

    /// `v_s = E var(s | d, p, b_s)` and the MMSE left by `b_s` alone.
    pub fn se_vs(&self, tau_p: f64, tau_d: f64, prior_log: &[f64]) -> ((f64, f64), (f64, f64)) {
        let q = self.ris.len();
        let n = self.ss.idx.len();
        let pts = self.ris.points();
        let ll = self.s_logliks(tau_p, tau_d);
        let (mut prior, mut post) = (vec![0.0; q], vec![0.0; q]);
        let zero = vec![0.0; q];
        let (mut s, mut s2, mut b, mut b2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            normalize_log(&prior_log[i * q..(i + 1) * q], &mut prior);
            let fb = kernels::discrete_posterior(&zero, &prior, pts, &mut post).var;
            b += fb;
            b2 += fb * fb;
            let v = kernels::discrete_posterior(&ll[i * q..(i + 1) * q], &prior, pts, &mut post).var;
            s += v;
            s2 += v * v;
        }
        (mean_stderr(s, s2, n), mean_stderr(b, b2, n))
    }

    /// `Σ_t |h_t|² var(s | d, h, b_s)` averaged, with unit-variance gains
    /// `h_t` and `d_t = h_t s + CN(0, 1/ρ)`: the phase-channel MMSE whose
    /// integral over `ρ` is the mutual information per phase.
    pub fn psi_s(&self, rho: f64, side: SideInfo) -> (f64, f64) {
        let (t, q) = (self.cfg.t, self.ris.len());
        let n = self.ss.idx.len();
        let pts = self.ris.points();
        let mut prior_log = vec![0.0; n * q];
        side_logprior(&self.ss, side, pts, &mut prior_log);
        let (mut prior, mut post, mut tot) = (vec![0.0; q], vec![0.0; q], vec![0.0; q]);
        let mut per = vec![0.0; t * q];
        let (mut d, mut h) = (vec![Complex64::default(); t], vec![Complex64::default(); t]);
        let sn = if rho > 0.0 { 1.0 / rho.sqrt() } else { 0.0 };
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            normalize_log(&prior_log[i * q..(i + 1) * q], &mut prior);
            let z = &self.ss.z[i * 2 * t..(i + 1) * 2 * t];
            let sym = pts[self.ss.idx[i]];
            let mut energy = 0.0;
            for j in 0..t {
                h[j] = z[j];
                d[j] = h[j] * sym + z[t + j] * sn;
                energy += h[j].norm_sqr();
            }
            let v = if rho > 0.0 {
                kernels::s_logliks(&d, &h, 1.0 / rho, pts, &mut tot, &mut per);
                kernels::discrete_posterior(&tot, &prior, pts, &mut post).var
            } else {
                kernels::discrete_posterior(&vec![0.0; q], &prior, pts, &mut post).var
            };
            s += energy * v;
            s2 += (energy * v).powi(2);
        }
        mean_stderr(s, s2, n)
    }

    /// Data-row averages of `var(u)` and of the mixture spread of `d s*`.
    fn uc_stats(&self, tau_p: f64, tau_d: f64, prior_log: &[f64]) -> UcStats {
        let (t, q) = (self.cfg.t, self.ris.len());
        let n = self.ss.idx.len();
        let pts = self.ris.points();
        let (mut d, mut p) = (vec![Complex64::default(); t], vec![Complex64::default(); t]);
        let (mut tot, mut per) = (vec![0.0; q], vec![0.0; t * q]);
        let (mut pi, mut ext, mut scratch) = (vec![0.0; q], vec![0.0; q], vec![0.0; q]);
        let (mut vu, mut spread) = (0.0, 0.0);
        for i in 0..n {
            self.s_channel(i, tau_p, tau_d, &mut d, &mut p);
            kernels::s_logliks(&d, &p, tau_p + tau_d, pts, &mut tot, &mut per);
            let pl = &prior_log[i * q..(i + 1) * q];
            for j in 0..t {
                for a in 0..q {
                    ext[a] = pl[a] + tot[a] - per[j * q + a];
                }
                normalize_log(&ext, &mut pi);
                let r = kernels::posterior_uc(d[j], tau_d, p[j], tau_p, &pi, pts, &mut scratch);
                vu += r.u.var;
                spread += r.spread;
            }
        }
        let cnt = (n * t) as f64;
        UcStats { v_u: vu / cnt, spread: spread / cnt }
    }

    /// Runs the recursion with the configured decoder models.
    pub fn run(&self) -> Result<SeTrajectory> {
        self.run_with(&self.cfg.decoder_x, &self.cfg.decoder_s)
    }

    pub fn run_with(&self, dx: &DecoderModel, ds: &DecoderModel) -> Result<SeTrajectory> {
        let cfg = &self.cfg;
        let init = cfg.cascade_power();
        let (mut v_x, mut v_u, mut v_s) = (1.0, init, 1.0);
        let mut v_c;
        let mut states: Vec<SeState> = Vec::new();
        let mut converged = false;
        let q = self.ris.len();
        // decoder feedback on s from the previous iteration
        let mut alpha_prev = match ds {
            DecoderModel::Genie => {
                let mut v = vec![0.0; self.ss.idx.len() * q];
                side_logprior(&self.ss, SideInfo::Perfect, self.ris.points(), &mut v);
                v
            }
            _ => vec![0.0; self.ss.idx.len() * q],
        };
        for _ in 0..cfg.max_iter {
            let tau_d = se_module_a(v_u, v_x, cfg.noise_var, cfg.n_over_m, cfg.k_over_m, cfg.blocked);
            let tau_p = cascade_tau_p(v_x, cfg.zeta, cfg.k_over_n);
            let tot = tau_p + tau_d;
            let a = tau_d / tot;
            let tbar = tau_p * a;
            let uc = self.uc_stats(tau_p, tau_d, &alpha_prev);
            let data = 1.0 - cfg.pilot_frac;
            v_u = data * uc.v_u + cfg.pilot_frac * tbar;
            v_c = tbar + data * (tau_p / tot).powi(2) * uc.spread;
            let kappa = (1.0 - data * uc.spread / tot).max(f64::MIN_POSITIVE);
            let tau_o = cascade_tau_o(tau_p, tau_d, kappa, cfg.zeta);
            let tau_r = (!cfg.blocked).then_some(tau_d);
            let rho_x = tau_r.map_or(0.0, |t| 1.0 / t) + 1.0 / tau_o;
            let beta = self.x_feedback(dx, tau_r, tau_o)?;
            let ((vx, se_x), (tau_x, _)) = self.se_vx(tau_r, tau_o, &beta);
            let alpha = self.s_feedback(ds, tau_p, tau_d)?;
            let ((vs, se_s), (tau_s, _)) = self.se_vs(tau_p, tau_d, &alpha);
            alpha_prev = alpha;
            let prev = [v_x, v_s];
            v_x = vx;
            v_s = vs;
            let state = SeState {
                v_x,
                v_u,
                v_c,
                v_s,
                tau_d,
                tau_r: tau_r.unwrap_or(f64::NAN),
                tau_p,
                tau_o,
                rho_x,
                rho_s: self.rho_s(tau_p, tau_d),
                tau_x,
                tau_s,
                se_v_x: se_x,
                se_v_s: se_s,
            };
            let delta = if let Some(last) = states.last() {
                let d = [v_x - prev[0], v_u - last.v_u, v_c - last.v_c, v_s - prev[1], tau_d - last.tau_d];
                let scale = [v_x, v_u, v_c, v_s, tau_d].iter().map(|v| v * v).sum::<f64>().sqrt();
                d.iter().map(|v| v * v).sum::<f64>().sqrt() / scale
            } else {
                f64::INFINITY
            };
            states.push(state);
            if delta < cfg.tol {
                converged = true;
                break;
            }
        }
        Ok(SeTrajectory { states, converged })
    }

    /// Fixed point of the recursion with the decoders held at MMSE
    /// `(τ_x, τ_s)`, returned as the detector output SNRs `(ρ_x, ρ_s)`.
    pub fn eta(&self, tau_x: f64, tau_s: f64) -> Result<(f64, f64, SeTrajectory)> {
        let tr = self.run_with(&DecoderModel::GaussianLlr(tau_x.clamp(0.0, 1.0)), &DecoderModel::GaussianLlr(tau_s.clamp(0.0, 1.0)))?;
        let s = *tr.last();
        Ok((s.rho_x, s.rho_s, tr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::make_psk;

    fn engine(blocked: bool, samples: usize) -> SeEngine {
        let dims = Dims { n: 256, m: 256, k: 32 };
        let mut cfg = SeConfig::new(dims, 20, 2, if blocked { 1.0 } else { 1.3 }, 0.05);
        cfg.blocked = blocked;
        cfg.samples = samples;
        SeEngine::new(cfg, make_psk(4).unwrap(), RisPhaseSet::uniform(2).unwrap()).unwrap()
    }

    #[test]
    fn module_formulas() {
        assert!((se_module_a(0.2, 0.5, 0.1, 2.0, 0.25, false) - (0.4 + 0.125 + 0.1)).abs() < 1e-15);
        assert!((se_module_a(0.2, 0.5, 0.1, 2.0, 0.25, true) - 0.5).abs() < 1e-15);
        assert!((se_module_a(0.0, 0.0, 0.3, 2.0, 0.25, false) - 0.3).abs() < 1e-15);
        assert!((se_module_a(1.0, 1.0, 0.0, 1.0, 1.0, false) - 2.0).abs() < 1e-15);
        let (tp, to, cl) = se_module_b(1.0, 0.0, 1.5, 0.25);
        assert!((tp - 0.375).abs() < 1e-15 && (to - tp / 1.5).abs() < 1e-15 && !cl);
        let (_, to, cl) = se_module_b(1.0, 0.375, 1.5, 0.25);
        assert!(cl && to > 1e10);
        let (tp, td, vc) = (0.3, 0.2, 0.1);
        let kappa = (tp - vc) * (tp + td) / (tp * tp);
        assert!((cascade_tau_o(tp, td, kappa, 1.5) - tp * tp / (1.5 * (tp - vc))).abs() < 1e-14);
    }

    #[test]
    fn genie_feedback_gives_zero_variance() {
        let e = engine(false, 2000);
        let tr = e.run_with(&DecoderModel::Genie, &DecoderModel::Genie).unwrap();
        let s = tr.states[0];
        assert_eq!(s.v_x, 0.0);
        assert_eq!(s.v_s, 0.0);
        let s = tr.last();
        assert!(s.tau_o.is_finite() && s.tau_o > 0.0);
        // with everything known τ_d → σ², τ_o → σ²/ζ
        assert!((s.tau_d - 0.05).abs() < 1e-12, "{}", s.tau_d);
        assert!((s.tau_o - 0.05 / 1.3).abs() < 1e-9, "{}", s.tau_o);
    }

    #[test]
    fn variances_decrease_and_stay_in_range() {
        for blocked in [false, true] {
            let e = engine(blocked, 4000);
            let tr = e.run().unwrap();
            assert!(tr.converged);
            for w in tr.states.windows(2) {
                assert!(w[1].v_x <= w[0].v_x + 1e-9 && w[1].v_s <= w[0].v_s + 1e-9);
            }
            for s in &tr.states {
                assert!((0.0..=1.0).contains(&s.v_x) && (0.0..=1.0).contains(&s.v_s));
                assert!(s.v_c <= s.tau_p + 1e-12);
                assert_eq!(s.tau_r.is_nan(), blocked);
            }
        }
    }

    #[test]
    fn more_side_information_never_hurts() {
        let e = engine(false, 4000);
        let (a, b, _) = e.eta(1.0, 1.0).unwrap();
        let (c, d, _) = e.eta(0.3, 0.3).unwrap();
        let (g, h, _) = e.eta(0.0, 0.0).unwrap();
        assert!(c >= a && d >= b && g >= c && h >= d, "{a} {b} {c} {d} {g} {h}");
        // endpoint: everything known
        assert!((g - (1.0 / 0.05 + 1.3 / 0.05)).abs() < 1e-6 * g);
    }

    #[test]
    fn huge_noise_leaves_priors() {
        let dims = Dims { n: 64, m: 64, k: 8 };
        let mut cfg = SeConfig::new(dims, 4, 2, 1.0, 1e9);
        cfg.samples = 2000;
        let e = SeEngine::new(cfg, make_psk(4).unwrap(), RisPhaseSet::uniform(2).unwrap()).unwrap();
        let tr = e.run().unwrap();
        let s = tr.last();
        assert!((s.v_x - 1.0).abs() < 1e-6 && (s.v_s - 1.0).abs() < 1e-6);
        assert!(s.rho_x < 1e-8 && s.rho_s < 1e-8);
    }

    #[test]
    fn no_cascade_signal_leaves_phase_prior() {
        let dims = Dims { n: 64, m: 64, k: 8 };
        let mut cfg = SeConfig::new(dims, 4, 1, 1.0, 0.1);
        cfg.samples = 2000;
        let e = SeEngine::new(cfg, make_psk(2).unwrap(), RisPhaseSet::uniform(2).unwrap()).unwrap();
        let flat = vec![0.0; 2000 * 2];
        // τ_p = ζK/N makes every p_t vanish
        let ((vs, _), _) = e.se_vs(e.cfg.cascade_power(), 0.3, &flat);
        assert!((vs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vx_is_monotone_in_observation_noise() {
        let e = engine(false, 4000);
        let flat = vec![0.0; 4000 * 4];
        let mut last = 0.0;
        for tau_o in [0.05, 0.1, 0.2, 0.5, 1.0, 3.0] {
            let ((v, se), _) = e.se_vx(Some(0.4), tau_o, &flat);
            assert!(v >= last && se < 0.01);
            last = v;
        }
        let ((v, _), _) = e.se_vx(None, f64::INFINITY, &flat);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_s_endpoints() {
        let e = engine(false, 20000);
        let (v0, _) = e.psi_s(0.0, SideInfo::Absent);
        assert!((v0 - 2.0).abs() < 0.05, "{v0}");
        let (vp, _) = e.psi_s(3.0, SideInfo::Perfect);
        assert_eq!(vp, 0.0);
        let (v1, _) = e.psi_s(1.0, SideInfo::Absent);
        let (v2, _) = e.psi_s(4.0, SideInfo::Absent);
        assert!(v0 > v1 && v1 > v2);
    }

    #[test]
    fn empirical_decoder_helps() {
        let dims = Dims { n: 256, m: 256, k: 32 };
        let mut cfg = SeConfig::new(dims, 20, 2, 1.0, 0.12);
        cfg.blocked = true;
        cfg.samples = 4096;
        cfg.max_iter = 30;
        let code = DecoderModel::Empirical(ConvCode::standard());
        cfg.decoder_x = code.clone();
        cfg.decoder_s = code;
        let e = SeEngine::new(cfg, make_psk(4).unwrap(), RisPhaseSet::uniform(2).unwrap()).unwrap();
        let un = e.run_with(&DecoderModel::None, &DecoderModel::None).unwrap();
        let cd = e.run().unwrap();
        assert!(cd.last().v_x < un.last().v_x, "{} {}", cd.last().v_x, un.last().v_x);
    }
}
