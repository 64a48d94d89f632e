//! Geometric channel synthesis, normalization and CSI perturbation.
//!
//! Small-scale fading is i.i.d. Rayleigh with per-entry *variance* equal to
//! the large-scale gain of the link.

use std::io::{self, Read, Write};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::rng::{standard_cgaussian, RngStream};
use crate::CMatrix;

pub type Point3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub tx: Point3,
    pub rx: Point3,
    pub ris: Point3,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            tx: [0.0, 0.0, 1.5],
            rx: [0.0, 500.0, 11.5],
            ris: [10.0, 490.0, 11.5],
        }
    }
}

pub fn distance(a: Point3, b: Point3) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        if self.tx.iter().chain(&self.rx).chain(&self.ris).all(|v| v.is_finite()) {
            Ok(())
        } else {
            invalid("geometry coordinates must be finite")
        }
    }

    pub fn tx_ris(&self) -> f64 {
        distance(self.tx, self.ris)
    }

    pub fn ris_rx(&self) -> f64 {
        distance(self.ris, self.rx)
    }

    pub fn tx_rx(&self) -> f64 {
        distance(self.tx, self.rx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    /// Tx-RIS and RIS-Rx hops.
    Ris,
    /// Tx-Rx.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossParams {
    pub d0: f64,
    pub beta0: f64,
    pub alpha_ris: f64,
    pub alpha_direct: f64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self { d0: 1.0, beta0: 1e-3, alpha_ris: 2.2, alpha_direct: 3.5 }
    }
}

impl PathLossParams {
    pub fn validate(&self) -> Result<()> {
        if self.d0 > 0.0 && self.beta0 > 0.0 && self.alpha_ris > 0.0 && self.alpha_direct > 0.0 {
            Ok(())
        } else {
            invalid("path-loss parameters must be positive")
        }
    }
}

/// Large-scale gain `beta0 * (d / d0)^(-alpha)` with the exponent of `link`.
pub fn path_loss(d: f64, params: &PathLossParams, link: LinkKind) -> Result<f64> {
    if !(d > 0.0) {
        return invalid(format!("link distance must be positive, got {d}"));
    }
    params.validate()?;
    let alpha = match link {
        LinkKind::Ris => params.alpha_ris,
        LinkKind::Direct => params.alpha_direct,
    };
    Ok(params.beta0 * (d / params.d0).powf(-alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    /// Surface elements.
    pub n: usize,
    /// Receive antennas.
    pub m: usize,
    /// Transmit antennas.
    pub k: usize,
}

impl Dims {
    pub fn new(n: usize, m: usize, k: usize) -> Self {
        Self { n, m, k }
    }
}

/// `G` (M x N, RIS->Rx), `H` (M x K, Tx->Rx), `F` (N x K, Tx->RIS).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub g: CMatrix,
    pub h: CMatrix,
    pub f: CMatrix,
    pub dims: Dims,
}

pub fn frob_sq(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

fn random_matrix(rows: usize, cols: usize, var: f64, stream: RngStream) -> CMatrix {
    let mut rng = stream.rng();
    let sd = var.sqrt();
    Array2::from_shape_simple_fn((rows, cols), || standard_cgaussian(&mut rng) * sd)
}

/// Per-link variances `(beta_G, beta_H, beta_F)` for a geometry.
pub fn link_gains(geometry: &Geometry, params: &PathLossParams) -> Result<(f64, f64, f64)> {
    geometry.validate()?;
    Ok((
        path_loss(geometry.ris_rx(), params, LinkKind::Ris)?,
        path_loss(geometry.tx_rx(), params, LinkKind::Direct)?,
        path_loss(geometry.tx_ris(), params, LinkKind::Ris)?,
    ))
}

pub fn gen_channels(dims: Dims, geometry: &Geometry, params: &PathLossParams, rng: RngStream) -> Result<ChannelSet> {
    if dims.n == 0 || dims.m == 0 || dims.k == 0 {
        return invalid("channel dimensions must be positive");
    }
    let (bg, bh, bf) = link_gains(geometry, params)?;
    Ok(ChannelSet {
        g: random_matrix(dims.m, dims.n, bg, rng.child(1)),
        h: random_matrix(dims.m, dims.k, bh, rng.child(2)),
        f: random_matrix(dims.n, dims.k, bf, rng.child(3)),
        dims,
    })
}

/// I.i.d. `CN(0, var)` channels, handy for normalized experiments.
pub fn gen_iid_channels(dims: Dims, var_g: f64, var_h: f64, var_f: f64, rng: RngStream) -> ChannelSet {
    ChannelSet {
        g: random_matrix(dims.m, dims.n, var_g, rng.child(1)),
        h: random_matrix(dims.m, dims.k, var_h, rng.child(2)),
        f: random_matrix(dims.n, dims.k, var_f, rng.child(3)),
        dims,
    }
}

impl ChannelSet {
    pub fn check(&self) -> Result<()> {
        let Dims { n, m, k } = self.dims;
        if self.g.dim() != (m, n) || self.h.dim() != (m, k) || self.f.dim() != (n, k) {
            return Err(Error::DimensionMismatch(format!(
                "G {:?}, H {:?}, F {:?} inconsistent with (N, M, K) = ({n}, {m}, {k})",
                self.g.dim(),
                self.h.dim(),
                self.f.dim()
            )));
        }
        Ok(())
    }

    /// Same channel with the direct link removed.
    pub fn without_direct_link(mut self) -> Self {
        self.h.fill(Complex64::new(0.0, 0.0));
        self
    }

    pub fn direct_link_blocked(&self) -> bool {
        self.h.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    /// Folds a per-entry symbol amplitude into the Tx-side matrices so the
    /// model can be written in terms of unit-power symbols.
    pub fn with_tx_amplitude(&self, amplitude: f64) -> Self {
        Self {
            g: self.g.clone(),
            h: &self.h * amplitude,
            f: &self.f * amplitude,
            dims: self.dims,
        }
    }

    /// Effective MIMO matrix `G diag(s) F + H` for one sub-block.
    pub fn effective(&self, s: &[Complex64]) -> CMatrix {
        let mut sf = self.f.clone();
        for (mut row, &sn) in sf.rows_mut().into_iter().zip(s) {
            row *= sn;
        }
        self.g.dot(&sf) + &self.h
    }

    pub fn write_binary<W: Write>(&self, mut w: W, seed: u64) -> io::Result<()> {
        w.write_all(b"SAPITCH1")?;
        for v in [self.dims.n as u64, self.dims.m as u64, self.dims.k as u64, seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        for mat in [&self.g, &self.h, &self.f] {
            for z in mat.iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump produced by [`ChannelSet::write_binary`]; returns the seed too.
    pub fn read_binary<R: Read>(mut r: R) -> io::Result<(Self, u64)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"SAPITCH1" {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad channel dump magic"));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 4];
        for h in header.iter_mut() {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let dims = Dims::new(header[0] as usize, header[1] as usize, header[2] as usize);
        let mut read_mat = |rows: usize, cols: usize| -> io::Result<CMatrix> {
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                r.read_exact(&mut word)?;
                let re = f64::from_le_bytes(word);
                r.read_exact(&mut word)?;
                data.push(Complex64::new(re, f64::from_le_bytes(word)));
            }
            Array2::from_shape_vec((rows, cols), data).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        };
        let g = read_mat(dims.m, dims.n)?;
        let h = read_mat(dims.m, dims.k)?;
        let f = read_mat(dims.n, dims.k)?;
        Ok((Self { g, h, f, dims }, header[3]))
    }

    /// CSV rows `matrix,row,col,re,im`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "matrix,row,col,re,im")?;
        for (name, mat) in [("G", &self.g), ("H", &self.h), ("F", &self.f)] {
            for ((i, j), z) in mat.indexed_iter() {
                writeln!(w, "{name},{i},{j},{:e},{:e}", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

/// Channels rescaled so that `|G|^2/N = 1`, `|H|^2/K = 1`, `|F|^2/K = zeta`.
///
/// The received signal must be divided by `a` (and the noise variance by
/// `a^2`) to stay consistent with the rescaled matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedChannels {
    pub g: CMatrix,
    pub h: CMatrix,
    pub f: CMatrix,
    pub zeta: f64,
    pub a: f64,
    pub b: f64,
    pub dims: Dims,
}

impl NormalizedChannels {
    pub fn direct_link_blocked(&self) -> bool {
        self.h.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    pub fn as_channel_set(&self) -> ChannelSet {
        ChannelSet { g: self.g.clone(), h: self.h.clone(), f: self.f.clone(), dims: self.dims }
    }
}

fn rescale(ch: &ChannelSet, a: f64, b: f64, zeta: f64) -> NormalizedChannels {
    NormalizedChannels {
        g: &ch.g / Complex64::new(b, 0.0),
        h: &ch.h / Complex64::new(a, 0.0),
        f: &ch.f * Complex64::new(b / a, 0.0),
        zeta,
        a,
        b,
        dims: ch.dims,
    }
}

pub fn normalize(ch: &ChannelSet) -> Result<NormalizedChannels> {
    ch.check()?;
    let Dims { n, k, .. } = ch.dims;
    let (gg, hh, ff) = (frob_sq(&ch.g), frob_sq(&ch.h), frob_sq(&ch.f));
    if !(gg > 0.0) || !(hh > 0.0) {
        return Err(Error::DegenerateChannel("G and H must have nonzero Frobenius norm".into()));
    }
    let a = (hh / k as f64).sqrt();
    let b = (gg / n as f64).sqrt();
    let zeta = gg * ff / (n as f64 * hh);
    Ok(rescale(ch, a, b, zeta))
}

/// Normalization for a blocked direct link (`H = 0`): `a` is chosen so that
/// `zeta = 1`. Any `a` gives an equivalent model; this one keeps the
/// cascaded path at unit scale.
pub fn normalize_blocked(ch: &ChannelSet) -> Result<NormalizedChannels> {
    ch.check()?;
    let Dims { n, k, .. } = ch.dims;
    let (gg, ff) = (frob_sq(&ch.g), frob_sq(&ch.f));
    if !(gg > 0.0) || !(ff > 0.0) {
        return Err(Error::DegenerateChannel("G and F must have nonzero Frobenius norm".into()));
    }
    let b = (gg / n as f64).sqrt();
    let a = b * (ff / k as f64).sqrt();
    let mut out = rescale(ch, a, b, 1.0);
    out.h.fill(Complex64::new(0.0, 0.0));
    Ok(out)
}

/// Adds i.i.d. Gaussian estimation errors with normalized MSE
/// `10^(nmse_db/10)` to each matrix independently. `-inf` disables it.
pub fn perturb_csi(ch: &ChannelSet, nmse_db: f64, rng: RngStream) -> Result<ChannelSet> {
    if nmse_db.is_nan() || nmse_db == f64::INFINITY {
        return invalid(format!("CSI NMSE must be finite or -inf, got {nmse_db}"));
    }
    if nmse_db == f64::NEG_INFINITY {
        return Ok(ch.clone());
    }
    let nmse = 10f64.powf(nmse_db / 10.0);
    let perturb = |m: &CMatrix, tag: u64| -> CMatrix {
        let (r, c) = m.dim();
        if r * c == 0 {
            return m.clone();
        }
        let var = nmse * frob_sq(m) / (r * c) as f64;
        m + &random_matrix(r, c, var, rng.child(tag))
    };
    Ok(ChannelSet {
        g: perturb(&ch.g, 11),
        h: perturb(&ch.h, 12),
        f: perturb(&ch.f, 13),
        dims: ch.dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_distance_gain() {
        let p = PathLossParams::default();
        assert_relative_eq!(path_loss(1.0, &p, LinkKind::Ris).unwrap(), 1e-3, max_relative = 1e-14);
        assert!(path_loss(0.0, &p, LinkKind::Ris).is_err());
        assert!(path_loss(-1.0, &p, LinkKind::Direct).is_err());
    }

    #[test]
    fn default_geometry_distances() {
        let g = Geometry::default();
        assert_relative_eq!(g.tx_ris(), (100.0f64 + 490.0 * 490.0 + 100.0).sqrt(), max_relative = 1e-14);
        assert!((g.tx_ris() - 490.204).abs() < 1e-3);
    }

    #[test]
    fn doubling_distance_ratio() {
        let p = PathLossParams::default();
        let r = path_loss(20.0, &p, LinkKind::Ris).unwrap() / path_loss(10.0, &p, LinkKind::Ris).unwrap();
        assert_relative_eq!(r, 2f64.powf(-2.2), max_relative = 1e-12);
        assert!((r - 0.2176).abs() < 1e-4);
    }

    #[test]
    fn direct_link_entry_variance() {
        let geom = Geometry::default();
        let p = PathLossParams::default();
        let ch = gen_channels(Dims::new(4, 400, 250), &geom, &p, RngStream::new(3, 0)).unwrap();
        let beta = path_loss(geom.tx_rx(), &p, LinkKind::Direct).unwrap();
        let v = frob_sq(&ch.h) / 1e5;
        assert!((v / beta - 1.0).abs() < 0.02, "{}", v / beta);
    }

    #[test]
    fn zero_distance_geometry_rejected() {
        let geom = Geometry { tx: [0.0; 3], rx: [1.0, 0.0, 0.0], ris: [0.0; 3] };
        let r = gen_channels(Dims::new(2, 2, 2), &geom, &PathLossParams::default(), RngStream::new(1, 1));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let d = Dims::new(8, 6, 3);
        let a = gen_channels(d, &Geometry::default(), &PathLossParams::default(), RngStream::new(9, 2)).unwrap();
        let b = gen_channels(d, &Geometry::default(), &PathLossParams::default(), RngStream::new(9, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normalize_all_ones() {
        let one = Complex64::new(1.0, 0.0);
        let ch = ChannelSet {
            g: Array2::from_elem((2, 2), one),
            h: Array2::from_elem((2, 2), one),
            f: Array2::from_elem((2, 2), one),
            dims: Dims::new(2, 2, 2),
        };
        let nc = normalize(&ch).unwrap();
        // |G|^2 / N = M for all-ones, so entries shrink by sqrt(M)
        let r = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        assert!(nc.g.iter().all(|z| (z - r).norm() < 1e-15));
        assert!(nc.h.iter().all(|z| (z - r).norm() < 1e-15));
        assert_relative_eq!(frob_sq(&nc.f) / 2.0, nc.zeta, max_relative = 1e-12);
        assert_relative_eq!(nc.zeta, 2.0, max_relative = 1e-12);

        let row = ChannelSet {
            g: Array2::from_elem((1, 2), one),
            h: Array2::from_elem((1, 2), one),
            f: Array2::from_elem((2, 2), one),
            dims: Dims::new(2, 1, 2),
        };
        let nr = normalize(&row).unwrap();
        assert!(nr.g.iter().chain(nr.h.iter()).all(|z| (z - one).norm() < 1e-15));
    }

    #[test]
    fn normalization_identities_and_idempotence() {
        let d = Dims::new(64, 64, 64);
        let ch = gen_channels(d, &Geometry::default(), &PathLossParams::default(), RngStream::new(5, 5)).unwrap();
        let nc = normalize(&ch).unwrap();
        assert!((frob_sq(&nc.g) / 64.0 - 1.0).abs() < 1e-10);
        assert!((frob_sq(&nc.h) / 64.0 - 1.0).abs() < 1e-10);
        assert!((frob_sq(&nc.f) / 64.0 - nc.zeta).abs() < 1e-10 * nc.zeta);
        assert!(nc.zeta > 0.0);
        let again = normalize(&nc.as_channel_set()).unwrap();
        assert!((again.zeta - nc.zeta).abs() < 1e-10 * nc.zeta);
        let diff: f64 = (&again.f - &nc.f).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-10 * nc.zeta.sqrt());
    }

    #[test]
    fn received_model_invariance() {
        let d = Dims::new(5, 4, 3);
        let ch = gen_channels(d, &Geometry::default(), &PathLossParams::default(), RngStream::new(1, 9)).unwrap();
        let nc = normalize(&ch).unwrap();
        let s: Vec<Complex64> = (0..5).map(|i| Complex64::from_polar(1.0, i as f64)).collect();
        let e = ch.effective(&s);
        let en = nc.as_channel_set().effective(&s);
        for (x, y) in e.iter().zip(en.iter()) {
            assert!((x / nc.a - y).norm() < 1e-9 * y.norm().max(1e-30));
        }
    }

    #[test]
    fn zero_norm_is_degenerate() {
        let d = Dims::new(3, 3, 3);
        let ch = gen_iid_channels(d, 1.0, 1.0, 1.0, RngStream::new(1, 1)).without_direct_link();
        assert!(matches!(normalize(&ch), Err(Error::DegenerateChannel(_))));
        let nb = normalize_blocked(&ch).unwrap();
        assert!((nb.zeta - 1.0).abs() < 1e-15);
        assert!((frob_sq(&nb.f) / 3.0 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn csi_perturbation_level() {
        let d = Dims::new(64, 64, 64);
        let ch = gen_iid_channels(d, 1.0, 1.0, 1.0, RngStream::new(1, 1));
        assert_eq!(perturb_csi(&ch, f64::NEG_INFINITY, RngStream::new(2, 0)).unwrap(), ch);
        let p = perturb_csi(&ch, -20.0, RngStream::new(2, 0)).unwrap();
        let r = frob_sq(&(&p.g - &ch.g)) / frob_sq(&ch.g);
        assert!((r / 0.01 - 1.0).abs() < 0.1, "{r}");
    }

    #[test]
    fn csi_errors_independent_across_matrices() {
        let d = Dims::new(32, 32, 32);
        let ch = gen_iid_channels(d, 1.0, 1.0, 1.0, RngStream::new(1, 1));
        let p = perturb_csi(&ch, 0.0, RngStream::new(4, 0)).unwrap();
        let dg = &p.g - &ch.g;
        let dh = &p.h - &ch.h;
        let cross: Complex64 = dg.iter().zip(dh.iter()).map(|(a, b)| a * b.conj()).sum();
        let norm = (frob_sq(&dg) * frob_sq(&dh)).sqrt();
        assert!(cross.norm() / norm < 0.05);
    }

    #[test]
    fn channel_hardening_at_512() {
        for seed in 0..5 {
            let g = random_matrix(512, 512, 1.0, RngStream::new(seed, 77));
            let mean = frob_sq(&g) / 512.0;
            let worst = g
                .rows()
                .into_iter()
                .map(|r| (r.iter().map(|z| z.norm_sqr()).sum::<f64>() - mean).abs() / mean)
                .fold(0.0, f64::max);
            assert!(worst < 0.2, "seed {seed}: {worst}");
        }
    }

    #[test]
    fn binary_dump_round_trip() {
        let ch = gen_iid_channels(Dims::new(3, 2, 4), 1.0, 2.0, 0.5, RngStream::new(8, 1));
        let mut buf = Vec::new();
        ch.write_binary(&mut buf, 99).unwrap();
        assert_eq!(buf.len(), 8 + 32 + 16 * (6 + 8 + 12));
        let (back, seed) = ChannelSet::read_binary(&buf[..]).unwrap();
        assert_eq!(seed, 99);
        assert_eq!(back, ch);
    }
}
