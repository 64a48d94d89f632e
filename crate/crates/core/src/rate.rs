//! Achievable-rate analysis from the state evolution.
//!
//! The detector with both decoders held at fixed feedback quality
//! `(τ_x, τ_s)` settles at output SNRs `η(τ_x, τ_s) = (ρ_x, ρ_s)`. The
//! separate rate integrates the uncoded MMSE curves up to `η(1, 1)`; the
//! sum rate adds the largest line integral of the coded MMSE along
//! monotone paths from `(1, 1)` to `(0, 0)`.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::channel::Dims;
use crate::constellation::{Constellation, ConstellationKind};
use crate::error::{invalid, Result};
use crate::quadrature::{interp, logspace, trapezoid, ComplexGaussianRule};
use crate::rng::RngStream;
use crate::se::{SeEngine, SideInfo, TransferCurve};

const RULE_ORDER: usize = 48;

/// Per-axis levels of a square grid constellation, whose posterior splits
/// into two independent real ones.
fn grid_levels(c: &Constellation) -> Option<Vec<f64>> {
    if c.kind() != ConstellationKind::Qam {
        return None;
    }
    let mut re: Vec<f64> = c.points().iter().map(|p| p.re).collect();
    re.sort_by(f64::total_cmp);
    re.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut im: Vec<f64> = c.points().iter().map(|p| p.im).collect();
    im.sort_by(f64::total_cmp);
    im.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let same = re.len() == im.len() && re.iter().zip(&im).all(|(a, b)| (a - b).abs() < 1e-12);
    (same && re.len() * re.len() == c.len()).then_some(re)
}

/// Per-axis MMSE of equiprobable real `levels` in `N(0, sd²/2)` noise.
fn pam_mmse(levels: &[f64], rho: f64, sd: f64, rule: &ComplexGaussianRule) -> f64 {
    let mut ll = vec![0.0; levels.len()];
    let mut total = 0.0;
    for &a in levels {
        for (&z, &w) in rule.axis_points.iter().zip(&rule.axis_weights) {
            let y = a + z * sd;
            let mut m = f64::NEG_INFINITY;
            for (l, &b) in ll.iter_mut().zip(levels) {
                *l = -rho * (y - b) * (y - b);
                m = m.max(*l);
            }
            let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
            for (l, &b) in ll.iter().zip(levels) {
                let e = (l - m).exp();
                s0 += e;
                s1 += e * b;
                s2 += e * b * b;
            }
            total += w * (s2 / s0 - (s1 / s0) * (s1 / s0)).max(0.0);
        }
    }
    total / levels.len() as f64
}

/// MMSE of a uniformly drawn point of `c` observed as `y = x + CN(0, 1/ρ)`.
pub fn psi_x_un(rho: f64, c: &Constellation, rule: &ComplexGaussianRule) -> f64 {
    let pts = c.points();
    let q = pts.len() as f64;
    let mean = pts.iter().sum::<num_complex::Complex64>() / q;
    let prior = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / q - mean.norm_sqr();
    if rho <= 0.0 {
        return prior;
    }
    if rho.is_infinite() {
        return 0.0;
    }
    let sd = 1.0 / rho.sqrt();
    if let Some(levels) = grid_levels(c) {
        return 2.0 * pam_mmse(&levels, rho, sd, rule);
    }
    let mut ll = vec![0.0; pts.len()];
    let mut total = 0.0;
    for &x in pts {
        total += rule.expect(|z| {
            let y = x + z * sd;
            let mut m = f64::NEG_INFINITY;
            for (l, &p) in ll.iter_mut().zip(pts) {
                *l = -rho * (y - p).norm_sqr();
                m = m.max(*l);
            }
            let (mut w, mut mu, mut sq) = (0.0, num_complex::Complex64::new(0.0, 0.0), 0.0);
            for (l, &p) in ll.iter().zip(pts) {
                let e = (l - m).exp();
                w += e;
                mu += p * e;
                sq += e * p.norm_sqr();
            }
            (sq / w - (mu / w).norm_sqr()).max(0.0)
        });
    }
    total / q
}

/// Tabulated AWGN MMSE of one alphabet, used to move between an SNR and
/// the MMSE it leaves.
#[derive(Debug, Clone)]
pub struct MmseCurve {
    snr: Vec<f64>,
    mmse: Vec<f64>,
    prior: f64,
}

impl MmseCurve {
    pub fn new(c: &Constellation) -> Result<Self> {
        let rule = ComplexGaussianRule::new(RULE_ORDER)?;
        let prior = psi_x_un(0.0, c, &rule);
        let mut snr = Vec::new();
        let mut mmse = Vec::new();
        for g in logspace(1e-5, 1e5, 401)? {
            let m = psi_x_un(g, c, &rule);
            if m < 1e-14 {
                break;
            }
            snr.push(g);
            mmse.push(m);
        }
        if snr.len() < 2 {
            return invalid("MMSE table is degenerate");
        }
        Ok(Self { snr, mmse, prior })
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    pub fn mmse(&self, snr: f64) -> f64 {
        if snr <= 0.0 {
            return self.prior;
        }
        let last = self.snr.len() - 1;
        if snr >= self.snr[last] {
            return 0.0;
        }
        if snr <= self.snr[0] {
            return self.prior + (self.mmse[0] - self.prior) * snr / self.snr[0];
        }
        let ls: Vec<f64> = self.snr.iter().map(|v| v.ln()).collect();
        let lm: Vec<f64> = self.mmse.iter().map(|v| v.ln()).collect();
        interp(&ls, &lm, snr.ln()).exp()
    }

    /// Side information leaving MMSE `tau` on its own.
    pub fn side_for(&self, tau: f64) -> SideInfo {
        if tau >= self.prior {
            return SideInfo::Absent;
        }
        let last = self.snr.len() - 1;
        if tau <= self.mmse[last] {
            return SideInfo::Perfect;
        }
        if tau >= self.mmse[0] {
            return SideInfo::Snr(self.snr[0] * (self.prior - tau) / (self.prior - self.mmse[0]));
        }
        let lm: Vec<f64> = self.mmse.iter().rev().map(|v| v.ln()).collect();
        let ls: Vec<f64> = self.snr.iter().rev().map(|v| v.ln()).collect();
        SideInfo::Snr(interp(&lm, &ls, tau.ln()).exp())
    }
}

fn side_snr(side: SideInfo) -> f64 {
    match side {
        SideInfo::Absent => 0.0,
        SideInfo::Snr(g) => g,
        SideInfo::Perfect => f64::INFINITY,
    }
}

#[derive(Debug, Clone)]
pub struct RateConfig {
    pub dims: Dims,
    pub pilots: usize,
    pub t: usize,
    /// Points of the uncoded-integral grids.
    pub grid_points: usize,
    /// Lattice resolution in each feedback coordinate.
    pub lattice: usize,
    pub paths: usize,
    pub seed: u64,
    /// Report bits rather than nats.
    pub bits: bool,
}

impl RateConfig {
    pub fn new(dims: Dims, pilots: usize, t: usize) -> Self {
        Self { dims, pilots, t, grid_points: 200, lattice: 16, paths: 10, seed: 7, bits: true }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 3 || self.lattice < 2 || self.paths == 0 {
            return invalid("rate grids need at least 3 points, a lattice of 2 and one path");
        }
        if self.pilots >= self.dims.n || self.t == 0 {
            return invalid("need N_P < N and T > 0");
        }
        Ok(())
    }
}

/// A monotone path through the feedback lattice from `(L, L)` to `(0, 0)`,
/// as lattice indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonotonicPath {
    pub points: Vec<(usize, usize)>,
}

impl MonotonicPath {
    pub fn straight(lattice: usize) -> Self {
        Self { points: (0..=lattice).rev().map(|i| (i, i)).collect() }
    }

    /// Staircase with the moves of each coordinate in the given order
    /// (`true` moves `τ_x`).
    pub fn staircase(lattice: usize, moves: &[bool]) -> Result<Self> {
        if moves.iter().filter(|&&m| m).count() != lattice || moves.len() != 2 * lattice {
            return invalid("a staircase needs exactly L moves in each coordinate");
        }
        let (mut i, mut j) = (lattice, lattice);
        let mut points = vec![(i, j)];
        for &m in moves {
            if m {
                i -= 1;
            } else {
                j -= 1;
            }
            points.push((i, j));
        }
        Ok(Self { points })
    }

    pub fn random_staircase(lattice: usize, rng: &mut impl rand::Rng) -> Self {
        let mut moves: Vec<bool> = (0..2 * lattice).map(|i| i < lattice).collect();
        moves.shuffle(rng);
        Self::staircase(lattice, &moves).expect("balanced moves")
    }

    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].0 <= w[0].0 && w[1].1 <= w[0].1)
    }

    /// Straight line, both corner staircases, then distinct random staircases.
/// Small lattices may yield fewer than `count` paths.
    pub fn family(lattice: usize, count: usize, rng: RngStream) -> Vec<Self> {
        let mut out = vec![Self::straight(lattice)];
        let x_first: Vec<bool> = (0..2 * lattice).map(|i| i < lattice).collect();
        let s_first: Vec<bool> = x_first.iter().map(|m| !m).collect();
        out.push(Self::staircase(lattice, &x_first).expect("balanced"));
        out.push(Self::staircase(lattice, &s_first).expect("balanced"));
        let mut r = rng.rng();
        let mut misses = 0;
        while out.len() < count && misses < 1000 {
            let p = Self::random_staircase(lattice, &mut r);
            if out.contains(&p) {
                misses += 1;
            } else {
                out.push(p);
            }
        }
        out.truncate(count);
        out
    }
}

/// `η` and the coded MMSE values on the `(L+1)²` feedback lattice.
#[derive(Debug, Clone)]
pub struct EtaGrid {
    pub lattice: usize,
    pub eta_x: Vec<f64>,
    pub eta_s: Vec<f64>,
    pub psi_x: Vec<f64>,
    pub psi_s: Vec<f64>,
}

impl EtaGrid {
    pub fn compute(engine: &SeEngine, lattice: usize) -> Result<Self> {
        let rule = ComplexGaussianRule::new(RULE_ORDER)?;
        let n = (lattice + 1) * (lattice + 1);
        let vals: Vec<Result<[f64; 4]>> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / (lattice + 1), idx % (lattice + 1));
                let (tx, ts) = (i as f64 / lattice as f64, j as f64 / lattice as f64);
                let (ex, es, _) = engine.eta(tx, ts)?;
                let gx = side_snr(engine.tx_curve().side_for(tx));
                let px = psi_x_un(ex + gx, engine.tx(), &rule);
                let (ps, _) = engine.psi_s(es, engine.ris_curve().side_for(ts));
                Ok([ex, es, px, ps])
            })
            .collect();
        let mut g = Self { lattice, eta_x: vec![0.0; n], eta_s: vec![0.0; n], psi_x: vec![0.0; n], psi_s: vec![0.0; n] };
        for (k, v) in vals.into_iter().enumerate() {
            let [a, b, c, d] = v?;
            g.eta_x[k] = a;
            g.eta_s[k] = b;
            g.psi_x[k] = c;
            g.psi_s[k] = d;
        }
        Ok(g)
    }

    fn at(&self, p: (usize, usize)) -> usize {
        p.0 * (self.lattice + 1) + p.1
    }

    pub fn eta(&self, p: (usize, usize)) -> (f64, f64) {
        let k = self.at(p);
        (self.eta_x[k], self.eta_s[k])
    }

    pub fn tau(&self, i: usize) -> f64 {
        i as f64 / self.lattice as f64
    }

    /// `∫ (w_x ψ_x dη_x + w_s ψ_s dη_s)` along `path` by the trapezoid rule.
    pub fn line_integral(&self, path: &MonotonicPath, w_x: f64, w_s: f64) -> f64 {
        path.points
            .windows(2)
            .map(|w| {
                let (a, b) = (self.at(w[0]), self.at(w[1]));
                0.5 * w_x * (self.psi_x[a] + self.psi_x[b]) * (self.eta_x[b] - self.eta_x[a])
                    + 0.5 * w_s * (self.psi_s[a] + self.psi_s[b]) * (self.eta_s[b] - self.eta_s[a])
            })
            .sum()
    }

    /// Whether `f_x⁻¹(τ_x) < η_x` and `f_s⁻¹(τ_s) < η_s` at every point of
    /// `path`, for decoder curves given through their inverses.
    pub fn check_convergence(&self, path: &MonotonicPath, inv_x: impl Fn(f64) -> f64, inv_s: impl Fn(f64) -> f64) -> bool {
        path.points.iter().all(|&p| {
            let (ex, es) = self.eta(p);
            inv_x(self.tau(p.0)) < ex && inv_s(self.tau(p.1)) < es
        })
    }
}

/// Decoder curves with inverse `ρ = factor · η(τ, τ)` along the diagonal.
#[derive(Debug, Clone)]
pub struct DiagonalCurves {
    taus: Vec<f64>,
    rho_x: Vec<f64>,
    rho_s: Vec<f64>,
}

impl DiagonalCurves {
    pub fn new(grid: &EtaGrid, factor: f64) -> Self {
        let l = grid.lattice;
        let taus: Vec<f64> = (0..=l).map(|i| grid.tau(i)).collect();
        let (mut rho_x, mut rho_s) = (Vec::new(), Vec::new());
        for i in 0..=l {
            let (ex, es) = grid.eta((i, i));
            rho_x.push(factor * ex);
            rho_s.push(factor * es);
        }
        // η falls as τ grows; smooth out Monte-Carlo wiggles
        for v in [&mut rho_x, &mut rho_s] {
            for i in (0..l).rev() {
                v[i] = v[i].max(v[i + 1]);
            }
        }
        Self { taus, rho_x, rho_s }
    }

    pub fn inverse_x(&self, tau: f64) -> f64 {
        interp(&self.taus, &self.rho_x, tau)
    }

    pub fn inverse_s(&self, tau: f64) -> f64 {
        interp(&self.taus, &self.rho_s, tau)
    }

    fn forward(taus: &[f64], rho: &[f64]) -> TransferCurve {
        let r: Vec<f64> = rho.iter().rev().cloned().collect();
        let t: Vec<f64> = taus.iter().rev().cloned().collect();
        TransferCurve::new(move |x| {
            if x < r[0] {
                1.0
            } else if x >= r[r.len() - 1] {
                0.0
            } else {
                interp(&r, &t, x)
            }
        })
    }

    pub fn transfer_x(&self) -> TransferCurve {
        Self::forward(&self.taus, &self.rho_x)
    }

    pub fn transfer_s(&self) -> TransferCurve {
        Self::forward(&self.taus, &self.rho_s)
    }
}

#[derive(Debug, Clone)]
pub struct RateResult {
    pub sum_rate: f64,
    pub separate_rate: f64,
    /// Uncoded-curve integrals for the Tx and surface streams.
    pub tx_part: f64,
    pub ris_part: f64,
    /// Line integral of every path, in path order.
    pub path_integrals: Vec<f64>,
    pub best_path: usize,
    /// Uncoded fixed point `η(1, 1)`.
    pub rho_x0: f64,
    pub rho_s0: f64,
    pub unit: &'static str,
}

/// Uncoded MMSE curves on a log grid from `ρ_max · 1e-4` to `ρ_max`, with
/// `ρ = 0` prepended.
#[derive(Debug, Clone)]
pub struct UncodedCurves {
    pub rho_x: Vec<f64>,
    pub psi_x: Vec<f64>,
    pub rho_s: Vec<f64>,
    pub psi_s: Vec<f64>,
}

impl UncodedCurves {
    pub fn compute(engine: &SeEngine, rho_x_max: f64, rho_s_max: f64, points: usize) -> Result<Self> {
        let rule = ComplexGaussianRule::new(RULE_ORDER)?;
        let grid = |hi: f64| -> Result<Vec<f64>> {
            let mut g = vec![0.0];
            if hi > 0.0 {
                g.extend(logspace(hi * 1e-4, hi, points - 1)?);
            }
            Ok(g)
        };
        let rho_x = grid(rho_x_max)?;
        let rho_s = grid(rho_s_max)?;
        let psi_x = rho_x.par_iter().map(|&r| psi_x_un(r, engine.tx(), &rule)).collect();
        let psi_s = rho_s.par_iter().map(|&r| engine.psi_s(r, SideInfo::Absent).0).collect();
        Ok(Self { rho_x, psi_x, rho_s, psi_s })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "stream,rho,psi")?;
        for (r, p) in self.rho_x.iter().zip(&self.psi_x) {
            writeln!(w, "x,{r:e},{p:e}")?;
        }
        for (r, p) in self.rho_s.iter().zip(&self.psi_s) {
            writeln!(w, "s,{r:e},{p:e}")?;
        }
        Ok(())
    }
}

/// Everything computed for one operating point.
#[derive(Debug, Clone)]
pub struct RateAnalysis {
    pub result: RateResult,
    pub grid: EtaGrid,
    pub uncoded: UncodedCurves,
    pub paths: Vec<MonotonicPath>,
}

pub fn analyze(engine: &SeEngine, cfg: &RateConfig) -> Result<RateAnalysis> {
    cfg.validate()?;
    let grid = EtaGrid::compute(engine, cfg.lattice)?;
    let (rho_x0, rho_s0) = grid.eta((cfg.lattice, cfg.lattice));
    let uncoded = UncodedCurves::compute(engine, rho_x0, rho_s0, cfg.grid_points)?;
    let k = cfg.dims.k as f64;
    let w_s = (cfg.dims.n - cfg.pilots) as f64 / cfg.t as f64;
    let scale = if cfg.bits { std::f64::consts::LN_2.recip() } else { 1.0 };
    let tx_part = k * trapezoid(&uncoded.rho_x, &uncoded.psi_x) * scale;
    let ris_part = w_s * trapezoid(&uncoded.rho_s, &uncoded.psi_s) * scale;
    let paths = MonotonicPath::family(cfg.lattice, cfg.paths, RngStream::new(cfg.seed, 0x9a7));
    let path_integrals: Vec<f64> = paths.iter().map(|p| grid.line_integral(p, k, w_s).max(0.0) * scale).collect();
    let (best_path, best) = path_integrals.iter().cloned().enumerate().fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
    let result = RateResult {
        sum_rate: tx_part + ris_part + best,
        separate_rate: tx_part + ris_part,
        tx_part,
        ris_part,
        path_integrals,
        best_path,
        rho_x0,
        rho_s0,
        unit: if cfg.bits { "bits" } else { "nats" },
    };
    Ok(RateAnalysis { result, grid, uncoded, paths })
}

impl RateAnalysis {
    /// `τ_x, τ_s, η_x, η_s, ψ_x, ψ_s` over the lattice.
    pub fn write_grid_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.grid;
        writeln!(w, "tau_x,tau_s,eta_x,eta_s,psi_x,psi_s")?;
        for i in 0..=g.lattice {
            for j in 0..=g.lattice {
                let k = g.at((i, j));
                writeln!(w, "{},{},{:e},{:e},{:e},{:e}", g.tau(i), g.tau(j), g.eta_x[k], g.eta_s[k], g.psi_x[k], g.psi_s[k])?;
            }
        }
        Ok(())
    }
}
