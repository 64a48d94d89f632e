//! Transmission blocks: pilot and data assembly for both streams and
//! synthesis of the received signal.
//!
//! Column `q * T + t` of `X` and `Y` is slot `t` of sub-block `q`. Symbol
//! slots are numbered column-major: slot `col * K + k` for the Tx stream and
//! `q * (N - N_P) + (n - N_P)` for the surface data rows.

use std::io::{self, Write};

use ndarray::Array2;
use rand::Rng;

use crate::channel::{ChannelSet, Dims};
use crate::coding::{CodedStream, ConvCode};
use crate::constellation::{Constellation, RisPhaseSet};
use crate::error::{invalid, Error, Result};
use crate::rng::{sample_cgaussian, RngStream};
use crate::units::dbm_to_watts;
use crate::CMatrix;

#[derive(Debug, Clone)]
pub struct FrameConfig {
    pub dims: Dims,
    /// Pilot rows at the top of the surface matrix.
    pub pilots: usize,
    /// Sub-blocks per block.
    pub q: usize,
    /// Slots per sub-block.
    pub t: usize,
    pub tx: Constellation,
    pub ris: RisPhaseSet,
    /// Total transmit power across all antennas.
    pub power_dbm: f64,
    /// Noise variance in watts.
    pub noise_var: f64,
    pub coded: bool,
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        let Dims { n, m, k } = self.dims;
        if n == 0 || m == 0 || k == 0 {
            return invalid("N, M and K must be positive");
        }
        if self.pilots < 1 || self.pilots >= n {
            return invalid(format!("pilot rows must satisfy 1 <= N_P < N (N_P = {}, N = {n})", self.pilots));
        }
        if self.q == 0 || self.t == 0 {
            return invalid("Q and T must be positive");
        }
        if !self.power_dbm.is_finite() {
            return invalid("transmit power must be finite");
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return invalid("noise variance must be finite and >= 0");
        }
        Ok(())
    }

    pub fn data_rows(&self) -> usize {
        self.dims.n - self.pilots
    }

    pub fn tx_slots(&self) -> usize {
        self.dims.k * self.q * self.t
    }

    pub fn ris_slots(&self) -> usize {
        self.data_rows() * self.q
    }

    pub fn columns(&self) -> usize {
        self.q * self.t
    }

    /// Per-entry symbol amplitude `sqrt(P / K)`.
    pub fn tx_amplitude(&self) -> f64 {
        (dbm_to_watts(self.power_dbm) / self.dims.k as f64).sqrt()
    }
}

/// Codes and interleavers for both streams of a configuration.
#[derive(Debug, Clone)]
pub struct FrameCoding {
    pub tx: CodedStream,
    pub ris: CodedStream,
}

impl FrameCoding {
    pub fn new(cfg: &FrameConfig, code: ConvCode, rng: RngStream) -> Result<Self> {
        Ok(Self {
            tx: CodedStream::new(code, cfg.tx.clone(), cfg.tx_slots(), rng.child(1))?,
            ris: CodedStream::new(code, cfg.ris.as_constellation().clone(), cfg.ris_slots(), rng.child(2))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    /// `K x QT`, scaled to the transmit amplitude.
    pub x: CMatrix,
    /// Constellation index of every `X` entry.
    pub x_idx: Array2<usize>,
    /// `N x Q` unit-modulus phases; the first `N_P` rows are pilots.
    pub s: CMatrix,
    pub s_idx: Array2<usize>,
    pub tx_bits: Vec<u8>,
    pub ris_bits: Vec<u8>,
    pub amplitude: f64,
}

/// Payload lengths `(tx, ris)` for a configuration.
pub fn payload_lengths(cfg: &FrameConfig, coding: Option<&FrameCoding>) -> (usize, usize) {
    match coding {
        Some(c) => (c.tx.info_len(), c.ris.info_len()),
        None => (
            cfg.tx_slots() * cfg.tx.bits_per_symbol(),
            cfg.ris_slots() * cfg.ris.as_constellation().bits_per_symbol(),
        ),
    }
}

/// I.i.d. uniform pilot phases (`N_P x Q` constellation indices).
pub fn gen_pilots(pilots: usize, q: usize, phases: &RisPhaseSet, rng: RngStream) -> Result<Array2<usize>> {
    if pilots == 0 {
        return invalid("at least one pilot row is required");
    }
    let mut r = rng.rng();
    Ok(Array2::from_shape_simple_fn((pilots, q), || r.random_range(0..phases.len())))
}

fn map_uncoded(bits: &[u8], c: &Constellation) -> Vec<usize> {
    let bps = c.bits_per_symbol();
    if bps == 0 {
        return Vec::new();
    }
    bits.chunks(bps).map(|b| c.index_of_bits(b)).collect()
}

pub fn build_frames(
    cfg: &FrameConfig,
    coding: Option<&FrameCoding>,
    tx_bits: &[u8],
    ris_bits: &[u8],
    pilot_idx: &Array2<usize>,
) -> Result<FrameData> {
    cfg.validate()?;
    if cfg.coded != coding.is_some() {
        return invalid("coding context must be supplied exactly when the frame is coded");
    }
    let (tx_len, ris_len) = payload_lengths(cfg, coding);
    if tx_bits.len() != tx_len || ris_bits.len() != ris_len {
        return invalid(format!(
            "payload sizes ({}, {}) do not match the frame capacity ({tx_len}, {ris_len})",
            tx_bits.len(),
            ris_bits.len()
        ));
    }
    if pilot_idx.dim() != (cfg.pilots, cfg.q) {
        return Err(Error::DimensionMismatch(format!("pilot matrix {:?}, expected ({}, {})", pilot_idx.dim(), cfg.pilots, cfg.q)));
    }
    let ris_c = cfg.ris.as_constellation();
    let (tx_sym, ris_sym) = match coding {
        Some(c) => (c.tx.encode_to_indices(tx_bits)?, c.ris.encode_to_indices(ris_bits)?),
        None => {
            let mut r = map_uncoded(ris_bits, ris_c);
            // a single-phase alphabet carries no bits
            r.resize(cfg.ris_slots(), 0);
            (map_uncoded(tx_bits, &cfg.tx), r)
        }
    };
    let Dims { n, k, .. } = cfg.dims;
    let cols = cfg.columns();
    let x_idx = Array2::from_shape_fn((k, cols), |(kk, col)| tx_sym[col * k + kk]);
    let amplitude = cfg.tx_amplitude();
    let x = x_idx.mapv(|i| cfg.tx.points()[i] * amplitude);
    let nd = cfg.data_rows();
    let s_idx = Array2::from_shape_fn((n, cfg.q), |(nn, q)| {
        if nn < cfg.pilots {
            pilot_idx[(nn, q)]
        } else {
            ris_sym[q * nd + nn - cfg.pilots]
        }
    });
    let s = s_idx.mapv(|i| cfg.ris.points()[i]);
    Ok(FrameData { x, x_idx, s, s_idx, tx_bits: tx_bits.to_vec(), ris_bits: ris_bits.to_vec(), amplitude })
}

/// Draws payloads and pilots and assembles a frame.
pub fn random_frame(cfg: &FrameConfig, coding: Option<&FrameCoding>, rng: RngStream) -> Result<FrameData> {
    let (tl, rl) = payload_lengths(cfg, coding);
    let mut r = rng.child(1).rng();
    let tx_bits: Vec<u8> = (0..tl).map(|_| r.random_range(0..2u8)).collect();
    let ris_bits: Vec<u8> = (0..rl).map(|_| r.random_range(0..2u8)).collect();
    let pilots = gen_pilots(cfg.pilots, cfg.q, &cfg.ris, rng.child(2))?;
    build_frames(cfg, coding, &tx_bits, &ris_bits, &pilots)
}

/// `y_qt = (G diag(s_q) F + H) x_qt + w_qt`.
pub fn synthesize(ch: &ChannelSet, frame: &FrameData, noise_var: f64, t: usize, rng: RngStream) -> Result<CMatrix> {
    ch.check()?;
    let Dims { n, m, k } = ch.dims;
    let (xk, cols) = frame.x.dim();
    if xk != k || frame.s.nrows() != n || t == 0 || frame.s.ncols() * t != cols {
        return Err(Error::DimensionMismatch(format!(
            "X {:?} and S {:?} inconsistent with (N, M, K) = ({n}, {m}, {k}) and T = {t}",
            frame.x.dim(),
            frame.s.dim()
        )));
    }
    if !(noise_var >= 0.0) {
        return invalid("noise variance must be >= 0");
    }
    let mut u = ch.f.dot(&frame.x);
    for ((row, col), v) in u.indexed_iter_mut() {
        *v *= frame.s[(row, col / t)];
    }
    let mut y = ch.g.dot(&u) + ch.h.dot(&frame.x);
    let mut r = rng.rng();
    for v in y.iter_mut() {
        *v = sample_cgaussian(&mut r, *v, noise_var)?;
    }
    Ok(y)
}

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &CMatrix) -> io::Result<()> {
    for ((i, j), z) in m.indexed_iter() {
        writeln!(w, "{name},{i},{j},{:e},{:e}", z.re, z.im)?;
    }
    Ok(())
}

impl FrameData {
    /// CSV rows `matrix,row,col,re,im` for `X`, `S` and optionally `Y`.
    pub fn write_csv<W: Write>(&self, mut w: W, y: Option<&CMatrix>) -> io::Result<()> {
        writeln!(w, "matrix,row,col,re,im")?;
        write_matrix(&mut w, "X", &self.x)?;
        write_matrix(&mut w, "S", &self.s)?;
        if let Some(y) = y {
            write_matrix(&mut w, "Y", y)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::gen_iid_channels;
    use crate::constellation::{make_psk, RisPhaseSet};
    use approx::assert_relative_eq;
    use ndarray::s;
    use num_complex::Complex64;

    fn cfg(dims: Dims, pilots: usize, q: usize, t: usize, coded: bool) -> FrameConfig {
        FrameConfig {
            dims,
            pilots,
            q,
            t,
            tx: make_psk(4).unwrap(),
            ris: RisPhaseSet::uniform(2).unwrap(),
            power_dbm: 30.0,
            noise_var: 0.0,
            coded,
        }
    }

    #[test]
    fn single_phase_pilots() {
        let set = RisPhaseSet::from_angles(vec![0.7]).unwrap();
        let p = gen_pilots(3, 4, &set, RngStream::new(1, 1)).unwrap();
        assert!(p.iter().all(|&i| i == 0));
        assert!(gen_pilots(0, 4, &set, RngStream::new(1, 1)).is_err());
    }

    #[test]
    fn pilots_reproducible_and_unit_modulus() {
        let c = cfg(Dims::new(8, 4, 2), 3, 5, 1, false);
        let a = random_frame(&c, None, RngStream::new(6, 0)).unwrap();
        let b = random_frame(&c, None, RngStream::new(6, 0)).unwrap();
        assert_eq!(a, b);
        assert!(a.s.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn uncoded_bpsk_single_symbol() {
        let mut c = cfg(Dims::new(2, 1, 1), 1, 1, 1, false);
        c.tx = make_psk(2).unwrap();
        let f = build_frames(&c, None, &[0], &[1], &Array2::zeros((1, 1))).unwrap();
        let amp = (dbm_to_watts(30.0)).sqrt();
        assert_relative_eq!(f.x[(0, 0)].re, amp, max_relative = 1e-15);
        assert_eq!(f.x[(0, 0)].im, 0.0);
        assert_relative_eq!(f.s[(1, 0)].re, -1.0, max_relative = 1e-15);
    }

    #[test]
    fn coded_payload_accounting() {
        let c = cfg(Dims::new(16, 8, 4), 4, 8, 2, true);
        let coding = FrameCoding::new(&c, ConvCode::standard(), RngStream::new(1, 1)).unwrap();
        let (tl, rl) = payload_lengths(&c, Some(&coding));
        assert_eq!(tl, 4 * 8 * 2 * 2 / 2 - 6);
        assert_eq!(rl, 12 * 8 / 2 - 6);
        let f = random_frame(&c, Some(&coding), RngStream::new(2, 2)).unwrap();
        assert_eq!(f.s.nrows() - c.pilots, 12);
        assert!(build_frames(&c, Some(&coding), &f.tx_bits[1..], &f.ris_bits, &Array2::zeros((4, 8))).is_err());
    }

    #[test]
    fn no_ris_degenerate_synthesis() {
        let d = Dims::new(4, 3, 2);
        let c = cfg(d, 1, 2, 2, false);
        let f = random_frame(&c, None, RngStream::new(3, 3)).unwrap();
        let mut ch = gen_iid_channels(d, 1.0, 1.0, 1.0, RngStream::new(4, 4));
        ch.g.fill(Complex64::new(0.0, 0.0));
        ch.f.fill(Complex64::new(0.0, 0.0));
        let y = synthesize(&ch, &f, 0.0, 2, RngStream::new(5, 5)).unwrap();
        let expect = ch.h.dot(&f.x);
        assert!(y.iter().zip(expect.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn all_ones_phases_noiseless() {
        let d = Dims::new(4, 3, 2);
        let c = cfg(d, 1, 1, 3, false);
        let mut f = random_frame(&c, None, RngStream::new(3, 3)).unwrap();
        f.s.fill(Complex64::new(1.0, 0.0));
        let ch = gen_iid_channels(d, 1.0, 1.0, 1.0, RngStream::new(4, 4));
        let y = synthesize(&ch, &f, 0.0, 3, RngStream::new(5, 5)).unwrap();
        let expect = (ch.g.dot(&ch.f) + &ch.h).dot(&f.x);
        assert!(y.iter().zip(expect.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn scalar_system_by_hand() {
        let d = Dims::new(1, 1, 1);
        let ch = ChannelSet {
            g: Array2::from_elem((1, 1), Complex64::new(2.0, 1.0)),
            h: Array2::from_elem((1, 1), Complex64::new(0.5, -0.5)),
            f: Array2::from_elem((1, 1), Complex64::new(-1.0, 3.0)),
            dims: d,
        };
        let frame = FrameData {
            x: Array2::from_elem((1, 1), Complex64::new(0.0, 2.0)),
            x_idx: Array2::zeros((1, 1)),
            s: Array2::from_elem((1, 1), Complex64::new(0.0, 1.0)),
            s_idx: Array2::zeros((1, 1)),
            tx_bits: vec![],
            ris_bits: vec![],
            amplitude: 2.0,
        };
        // (2+j)(j)(-1+3j) = (2+j)(-3-j) = -5-5j; plus h: -4.5-5.5j; times 2j: 11-9j
        let y = synthesize(&ch, &frame, 0.0, 1, RngStream::new(1, 1)).unwrap();
        assert!((y[(0, 0)] - Complex64::new(11.0, -9.0)).norm() < 1e-12);
    }

    #[test]
    fn energy_accounting() {
        let d = Dims::new(16, 16, 8);
        let c = cfg(d, 2, 50, 4, false);
        let ch = gen_iid_channels(d, 1.0, 1.0, 1.0, RngStream::new(4, 4));
        let noise = 3.0;
        let mut sig = 0.0;
        let mut tot = 0.0;
        for trial in 0..10 {
            let f = random_frame(&c, None, RngStream::new(7, trial)).unwrap();
            let clean = synthesize(&ch, &f, 0.0, 4, RngStream::new(8, trial)).unwrap();
            let y = synthesize(&ch, &f, noise, 4, RngStream::new(8, trial)).unwrap();
            sig += clean.iter().map(|z| z.norm_sqr()).sum::<f64>();
            tot += y.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        let cols = 10.0 * 200.0;
        let expect = sig / cols + 16.0 * noise;
        assert!((tot / cols / expect - 1.0).abs() < 0.02);
    }

    #[test]
    fn synthesis_linear_in_x() {
        let d = Dims::new(5, 4, 3);
        let c = cfg(d, 1, 2, 2, false);
        let ch = gen_iid_channels(d, 1.0, 1.0, 1.0, RngStream::new(4, 4));
        let f1 = random_frame(&c, None, RngStream::new(1, 0)).unwrap();
        let mut f2 = random_frame(&c, None, RngStream::new(2, 0)).unwrap();
        f2.s = f1.s.clone();
        let mut f3 = f1.clone();
        f3.x = &f1.x * Complex64::new(2.0, -1.0) + &f2.x;
        let syn = |f: &FrameData| synthesize(&ch, f, 0.0, 2, RngStream::new(0, 0)).unwrap();
        let lhs = syn(&f3);
        let rhs = syn(&f1) * Complex64::new(2.0, -1.0) + syn(&f2);
        assert!(lhs.iter().zip(rhs.iter()).all(|(a, b)| (a - b).norm() < 1e-9));
    }

    #[test]
    fn matches_effective_channel_per_sub_block() {
        let d = Dims::new(6, 5, 3);
        let c = cfg(d, 2, 3, 2, false);
        let ch = gen_iid_channels(d, 1.0, 1.0, 1.0, RngStream::new(6, 6));
        let f = random_frame(&c, None, RngStream::new(3, 0)).unwrap();
        let y = synthesize(&ch, &f, 0.0, 2, RngStream::new(0, 0)).unwrap();
        for q in 0..3 {
            let a = ch.effective(&f.s.column(q).to_vec());
            let want = a.dot(&f.x.slice(s![.., 2 * q..2 * q + 2]));
            let got = y.slice(s![.., 2 * q..2 * q + 2]);
            assert!(got.iter().zip(want.iter()).all(|(a, b)| (a - b).norm() < 1e-12));
        }
    }

    #[test]
    fn invalid_pilots_rejected() {
        let c = cfg(Dims::new(4, 4, 2), 4, 1, 1, false);
        assert!(c.validate().is_err());
    }
}
