//! Experiment configuration: a sectioned `key = value` file (TOML syntax),
//! validated as a whole so that every problem is reported at once.

use std::fmt::{self, Write as _};
use std::path::Path;

use sapit_core::channel::{Dims, Geometry, PathLossParams};
use sapit_core::constellation::{make_psk, make_qam, Constellation, RisPhaseSet};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{CliError, ConfigIssue};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    MseVsIteration,
    BerVsPower,
    RateVsN,
    SeOnly,
    RateOnly,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [Self::MseVsIteration, Self::BerVsPower, Self::RateVsN, Self::SeOnly, Self::RateOnly];

    pub fn name(self) -> &'static str {
        match self {
            Self::MseVsIteration => "mse-vs-iteration",
            Self::BerVsPower => "ber-vs-power",
            Self::RateVsN => "rate-vs-N",
            Self::SeOnly => "se-only",
            Self::RateOnly => "rate-only",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub trials: usize,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub pilots: usize,
    pub q: usize,
    pub t: usize,
    /// `bpsk`, `qpsk`, `8psk`, `16qam`, `64qam`, ...
    pub tx: String,
    pub ris_phases: usize,
    pub direct_link: bool,
    pub power_dbm: f64,
    pub power_sweep_dbm: Vec<f64>,
    pub n_sweep: Vec<usize>,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    /// Channel-estimate NMSE for the extra imperfect-CSI curves.
    pub csi_nmse_db: Option<f64>,
    pub geometry: Geometry,
    pub beta0_db: f64,
    pub d0: f64,
    pub alpha_ris: f64,
    pub alpha_direct: f64,
    pub coded: bool,
    pub max_iter: usize,
    pub damping: f64,
    pub tol: f64,
    pub genie_bounds: bool,
    pub compare_uncoded: bool,
    pub se_samples: usize,
    pub se_max_iter: usize,
    pub se_tol: f64,
    pub rate_lattice: usize,
    pub rate_paths: usize,
    pub rate_grid_points: usize,
    pub rate_bits: bool,
    /// Notes produced while loading, e.g. defaulted keys.
    pub warnings: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::MseVsIteration,
            trials: 20,
            seed: DEFAULT_SEED,
            n: 512,
            m: 512,
            k: 64,
            pilots: 40,
            q: 1000,
            t: 2,
            tx: "qpsk".into(),
            ris_phases: 2,
            direct_link: true,
            power_dbm: 12.0,
            power_sweep_dbm: Vec::new(),
            n_sweep: Vec::new(),
            noise_psd_dbm_hz: -150.0,
            bandwidth_hz: 1e6,
            csi_nmse_db: None,
            geometry: Geometry::default(),
            beta0_db: -30.0,
            d0: 1.0,
            alpha_ris: 2.2,
            alpha_direct: 3.5,
            coded: false,
            max_iter: 10,
            damping: 1.0,
            tol: 1e-4,
            genie_bounds: false,
            compare_uncoded: false,
            se_samples: 50_000,
            se_max_iter: 100,
            se_tol: 1e-5,
            rate_lattice: 16,
            rate_paths: 10,
            rate_grid_points: 200,
            rate_bits: true,
            warnings: Vec::new(),
        }
    }
}

pub fn parse_tx(name: &str) -> Option<Constellation> {
    let l = name.to_ascii_lowercase();
    match l.as_str() {
        "bpsk" => make_psk(2).ok(),
        "qpsk" => make_psk(4).ok(),
        _ => {
            if let Some(o) = l.strip_suffix("psk") {
                o.parse().ok().and_then(|o| make_psk(o).ok())
            } else if let Some(o) = l.strip_suffix("qam") {
                o.parse().ok().and_then(|o| make_qam(o).ok())
            } else {
                None
            }
        }
    }
}

impl ExperimentConfig {
    pub fn dims(&self) -> Dims {
        Dims::new(self.n, self.m, self.k)
    }

    pub fn path_loss(&self) -> PathLossParams {
        PathLossParams { d0: self.d0, beta0: 10f64.powf(self.beta0_db / 10.0), alpha_ris: self.alpha_ris, alpha_direct: self.alpha_direct }
    }

    pub fn tx_constellation(&self) -> Constellation {
        parse_tx(&self.tx).expect("validated")
    }

    pub fn ris_set(&self) -> RisPhaseSet {
        RisPhaseSet::uniform(self.ris_phases).expect("validated")
    }

    /// Parses and validates config text.
    pub fn from_str(text: &str) -> Result<Self, CliError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(vec![ConfigIssue::new("<syntax>", e.message().trim())]))?;
        let mut r = Reader { issues: Vec::new() };
        let mut c = Self::default();
        r.read(&table, &mut c);
        r.check(&c);
        if r.issues.is_empty() {
            Ok(c)
        } else {
            Err(CliError::Config(r.issues))
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(vec![ConfigIssue::new("<file>", format!("{}: {e}", path.display()))]))?;
        Self::from_str(&text)
    }

    /// Re-checks a config built or edited in code.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut r = Reader { issues: Vec::new() };
        r.check(self);
        if r.issues.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(r.issues))
        }
    }

    /// Normalized config text with every key spelled out, in a fixed order.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let f = |v: f64| format!("{v:?}");
        let arr_f = |v: &[f64]| format!("[{}]", v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
        let arr_u = |v: &[usize]| format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
        let pt = |p: [f64; 3]| arr_f(&p);
        let _ = writeln!(s, "[experiment]\nkind = \"{}\"\ntrials = {}\nseed = {}", self.kind, self.trials, self.seed);
        let _ = writeln!(
            s,
            "\n[system]\nn = {}\nm = {}\nk = {}\npilots = {}\nq = {}\nt = {}\ntx = \"{}\"\nris_phases = {}",
            self.n, self.m, self.k, self.pilots, self.q, self.t, self.tx, self.ris_phases
        );
        let _ = writeln!(
            s,
            "\n[link]\ndirect = {}\npower_dbm = {}\npower_sweep_dbm = {}\nn_sweep = {}\nnoise_psd_dbm_hz = {}\nbandwidth_hz = {}",
            self.direct_link,
            f(self.power_dbm),
            arr_f(&self.power_sweep_dbm),
            arr_u(&self.n_sweep),
            f(self.noise_psd_dbm_hz),
            f(self.bandwidth_hz)
        );
        if let Some(v) = self.csi_nmse_db {
            let _ = writeln!(s, "csi_nmse_db = {}", f(v));
        }
        let g = &self.geometry;
        let _ = writeln!(
            s,
            "\n[geometry]\ntx = {}\nrx = {}\nris = {}\nbeta0_db = {}\nd0 = {}\nalpha_ris = {}\nalpha_direct = {}",
            pt(g.tx),
            pt(g.rx),
            pt(g.ris),
            f(self.beta0_db),
            f(self.d0),
            f(self.alpha_ris),
            f(self.alpha_direct)
        );
        let _ = writeln!(
            s,
            "\n[receiver]\ncoded = {}\nmax_iter = {}\ndamping = {}\ntol = {}\ngenie_bounds = {}\ncompare_uncoded = {}",
            self.coded,
            self.max_iter,
            f(self.damping),
            f(self.tol),
            self.genie_bounds,
            self.compare_uncoded
        );
        let _ = writeln!(s, "\n[se]\nsamples = {}\nmax_iter = {}\ntol = {}", self.se_samples, self.se_max_iter, f(self.se_tol));
        let _ = writeln!(
            s,
            "\n[rate]\nlattice = {}\npaths = {}\ngrid_points = {}\nbits = {}",
            self.rate_lattice, self.rate_paths, self.rate_grid_points, self.rate_bits
        );
        s
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.canonical().as_bytes());
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

struct Reader {
    issues: Vec<ConfigIssue>,
}

const SECTIONS: [(&str, &[&str]); 7] = [
    ("experiment", &["kind", "trials", "seed"]),
    ("system", &["n", "m", "k", "pilots", "q", "t", "tx", "ris_phases"]),
    ("link", &["direct", "power_dbm", "power_sweep_dbm", "n_sweep", "noise_psd_dbm_hz", "bandwidth_hz", "csi_nmse_db"]),
    ("geometry", &["tx", "rx", "ris", "beta0_db", "d0", "alpha_ris", "alpha_direct"]),
    ("receiver", &["coded", "max_iter", "damping", "tol", "genie_bounds", "compare_uncoded"]),
    ("se", &["samples", "max_iter", "tol"]),
    ("rate", &["lattice", "paths", "grid_points", "bits"]),
];

impl Reader {
    fn issue(&mut self, key: &str, msg: impl Into<String>) {
        self.issues.push(ConfigIssue::new(key, msg));
    }

    fn get<'a>(&mut self, t: &'a Table, sec: &str, key: &str) -> Option<&'a Value> {
        t.get(sec).and_then(|s| s.as_table()).and_then(|s| s.get(key))
    }

    fn uint(&mut self, t: &Table, sec: &str, key: &str, out: &mut usize) {
        if let Some(v) = self.get(t, sec, key) {
            match v.as_integer() {
                Some(i) if i >= 0 => *out = i as usize,
                _ => self.issue(&format!("{sec}.{key}"), "expected a nonnegative integer"),
            }
        }
    }

    fn float(&mut self, t: &Table, sec: &str, key: &str, out: &mut f64) {
        if let Some(v) = self.get(t, sec, key) {
            match v.as_float().or_else(|| v.as_integer().map(|i| i as f64)) {
                Some(x) => *out = x,
                None => self.issue(&format!("{sec}.{key}"), "expected a number"),
            }
        }
    }

    fn boolean(&mut self, t: &Table, sec: &str, key: &str, out: &mut bool) {
        if let Some(v) = self.get(t, sec, key) {
            match v.as_bool() {
                Some(b) => *out = b,
                None => self.issue(&format!("{sec}.{key}"), "expected true or false"),
            }
        }
    }

    fn floats(&mut self, v: &Value, key: &str) -> Option<Vec<f64>> {
        let out: Option<Vec<f64>> = v.as_array().and_then(|a| a.iter().map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64))).collect());
        if out.is_none() {
            self.issue(key, "expected an array of numbers");
        }
        out
    }

    fn point(&mut self, t: &Table, key: &str, out: &mut [f64; 3]) {
        if let Some(v) = self.get(t, "geometry", key) {
            let name = format!("geometry.{key}");
            match self.floats(v, &name) {
                Some(p) if p.len() == 3 => out.copy_from_slice(&p),
                Some(_) => self.issue(&name, "expected three coordinates"),
                None => {}
            }
        }
    }

    fn read(&mut self, t: &Table, c: &mut ExperimentConfig) {
        for (sec, v) in t {
            let Some(known) = SECTIONS.iter().find(|(s, _)| s == sec).map(|(_, k)| *k) else {
                self.issue(sec, "unknown section");
                continue;
            };
            match v.as_table() {
                Some(tab) => {
                    for key in tab.keys() {
                        if !known.contains(&key.as_str()) {
                            self.issue(&format!("{sec}.{key}"), "unknown key");
                        }
                    }
                }
                None => self.issue(sec, "expected a section"),
            }
        }
        match self.get(t, "experiment", "kind") {
            Some(v) => match v.as_str().and_then(ExperimentKind::parse) {
                Some(k) => c.kind = k,
                None => self.issue(
                    "experiment.kind",
                    format!("expected one of {}", ExperimentKind::ALL.map(|k| k.name()).join(", ")),
                ),
            },
            None => self.issue("experiment.kind", "missing"),
        }
        self.uint(t, "experiment", "trials", &mut c.trials);
        match self.get(t, "experiment", "seed") {
            Some(v) => match v.as_integer() {
                Some(i) if i >= 0 => c.seed = i as u64,
                _ => self.issue("experiment.seed", "expected a nonnegative integer"),
            },
            None => c.warnings.push(format!("experiment.seed missing; defaulted to {DEFAULT_SEED}")),
        }
        self.uint(t, "system", "n", &mut c.n);
        self.uint(t, "system", "m", &mut c.m);
        self.uint(t, "system", "k", &mut c.k);
        self.uint(t, "system", "pilots", &mut c.pilots);
        self.uint(t, "system", "q", &mut c.q);
        self.uint(t, "system", "t", &mut c.t);
        if let Some(v) = self.get(t, "system", "tx") {
            match v.as_str() {
                Some(s) => c.tx = s.to_ascii_lowercase(),
                None => self.issue("system.tx", "expected a modulation name"),
            }
        }
        self.uint(t, "system", "ris_phases", &mut c.ris_phases);
        self.boolean(t, "link", "direct", &mut c.direct_link);
        self.float(t, "link", "power_dbm", &mut c.power_dbm);
        if let Some(v) = self.get(t, "link", "power_sweep_dbm") {
            if let Some(p) = self.floats(v, "link.power_sweep_dbm") {
                c.power_sweep_dbm = p;
            }
        }
        if let Some(v) = self.get(t, "link", "n_sweep") {
            match v.as_array().and_then(|a| a.iter().map(|x| x.as_integer().filter(|&i| i > 0).map(|i| i as usize)).collect::<Option<Vec<_>>>()) {
                Some(n) => c.n_sweep = n,
                None => self.issue("link.n_sweep", "expected an array of positive integers"),
            }
        }
        self.float(t, "link", "noise_psd_dbm_hz", &mut c.noise_psd_dbm_hz);
        self.float(t, "link", "bandwidth_hz", &mut c.bandwidth_hz);
        if self.get(t, "link", "csi_nmse_db").is_some() {
            let mut v = 0.0;
            self.float(t, "link", "csi_nmse_db", &mut v);
            c.csi_nmse_db = Some(v);
        }
        self.point(t, "tx", &mut c.geometry.tx);
        self.point(t, "rx", &mut c.geometry.rx);
        self.point(t, "ris", &mut c.geometry.ris);
        self.float(t, "geometry", "beta0_db", &mut c.beta0_db);
        self.float(t, "geometry", "d0", &mut c.d0);
        self.float(t, "geometry", "alpha_ris", &mut c.alpha_ris);
        self.float(t, "geometry", "alpha_direct", &mut c.alpha_direct);
        self.boolean(t, "receiver", "coded", &mut c.coded);
        self.uint(t, "receiver", "max_iter", &mut c.max_iter);
        self.float(t, "receiver", "damping", &mut c.damping);
        self.float(t, "receiver", "tol", &mut c.tol);
        self.boolean(t, "receiver", "genie_bounds", &mut c.genie_bounds);
        self.boolean(t, "receiver", "compare_uncoded", &mut c.compare_uncoded);
        self.uint(t, "se", "samples", &mut c.se_samples);
        self.uint(t, "se", "max_iter", &mut c.se_max_iter);
        self.float(t, "se", "tol", &mut c.se_tol);
        self.uint(t, "rate", "lattice", &mut c.rate_lattice);
        self.uint(t, "rate", "paths", &mut c.rate_paths);
        self.uint(t, "rate", "grid_points", &mut c.rate_grid_points);
        self.boolean(t, "rate", "bits", &mut c.rate_bits);
    }

    fn check(&mut self, c: &ExperimentConfig) {
        if c.trials == 0 {
            self.issue("experiment.trials", "trials must be at least 1");
        }
        for (key, v) in [("system.n", c.n), ("system.m", c.m), ("system.k", c.k), ("system.q", c.q), ("system.t", c.t)] {
            if v == 0 {
                self.issue(key, "must be positive");
            }
        }
        if c.pilots == 0 {
            self.issue("system.pilots", "at least one pilot row is required");
        }
        let ns: Vec<usize> = if c.kind == ExperimentKind::RateVsN { c.n_sweep.clone() } else { vec![c.n] };
        if ns.iter().any(|&n| c.pilots >= n) {
            self.issue("system.pilots", "pilot rows must be fewer than N");
        }
        if parse_tx(&c.tx).is_none() {
            self.issue("system.tx", format!("unknown modulation '{}'", c.tx));
        }
        if RisPhaseSet::uniform(c.ris_phases).is_err() {
            self.issue("system.ris_phases", "must be at least 1");
        }
        if !c.power_dbm.is_finite() || c.power_sweep_dbm.iter().any(|p| !p.is_finite()) {
            self.issue("link.power_dbm", "powers must be finite");
        }
        if c.kind == ExperimentKind::BerVsPower && c.power_sweep_dbm.is_empty() {
            self.issue("link.power_sweep_dbm", "sweep grid must be non-empty for ber-vs-power");
        }
        if c.kind == ExperimentKind::RateVsN && c.n_sweep.is_empty() {
            self.issue("link.n_sweep", "sweep grid must be non-empty for rate-vs-N");
        }
        if !c.noise_psd_dbm_hz.is_finite() {
            self.issue("link.noise_psd_dbm_hz", "must be finite");
        }
        if !(c.bandwidth_hz > 0.0 && c.bandwidth_hz.is_finite()) {
            self.issue("link.bandwidth_hz", "must be positive");
        }
        if let Some(v) = c.csi_nmse_db {
            if !v.is_finite() {
                self.issue("link.csi_nmse_db", "must be finite");
            }
        }
        if c.geometry.validate().is_err() {
            self.issue("geometry", "coordinates must be finite");
        }
        if c.path_loss().validate().is_err() || !c.beta0_db.is_finite() {
            self.issue("geometry", "path-loss parameters must be positive");
        }
        if c.max_iter == 0 {
            self.issue("receiver.max_iter", "must be positive");
        }
        if !(c.damping > 0.0 && c.damping <= 1.0) {
            self.issue("receiver.damping", "must lie in (0, 1]");
        }
        if !(c.tol > 0.0) {
            self.issue("receiver.tol", "must be positive");
        }
        if c.se_samples < 100 {
            self.issue("se.samples", "must be at least 100");
        }
        if c.se_max_iter == 0 {
            self.issue("se.max_iter", "must be positive");
        }
        if !(c.se_tol > 0.0) {
            self.issue("se.tol", "must be positive");
        }
        if c.rate_lattice < 2 {
            self.issue("rate.lattice", "must be at least 2");
        }
        if c.rate_paths == 0 {
            self.issue("rate.paths", "must be positive");
        }
        if c.rate_grid_points < 3 {
            self.issue("rate.grid_points", "must be at least 3");
        }
    }
}
