//! Monte Carlo orchestration and the analytic sweeps behind each
//! experiment kind.

use ndarray::s;
use rayon::prelude::*;
use sapit_core::channel::{gen_channels, link_gains, perturb_csi, ChannelSet, Dims};
use sapit_core::coding::ConvCode;
use sapit_core::frame::{random_frame, synthesize, FrameCoding, FrameConfig, FrameData};
use sapit_core::rate::{analyze, RateAnalysis, RateConfig};
use sapit_core::receiver::{run, DetectionMode, DetectionProblem, DetectionResult, Genie, ReceiverConfig};
use sapit_core::rng::RngStream;
use sapit_core::se::{DecoderModel, SeConfig, SeEngine, SeTrajectory};
use sapit_core::units::{dbm_to_watts, noise_power_watts};
use sapit_core::CMatrix;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;

/// Stream tag of the interleavers, kept apart from the per-trial streams.
const CODING_STREAM: u64 = u64::MAX;
/// Trials allowed to diverge before a point is declared a numerical failure.
pub const MAX_DIVERGED_FRACTION: f64 = 0.1;

/// Large-system operating point seen by the detector: cascade power ratio
/// and noise variance after channel normalization, from the expected
/// channel norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub zeta: f64,
    pub noise_var: f64,
}

pub fn noise_watts(cfg: &ExperimentConfig) -> f64 {
    noise_power_watts(cfg.noise_psd_dbm_hz, cfg.bandwidth_hz)
}

pub fn operating_point(cfg: &ExperimentConfig, n: usize, power_dbm: f64) -> Result<OperatingPoint, CliError> {
    let (bg, bh, bf) = link_gains(&cfg.geometry, &cfg.path_loss())?;
    let amp2 = dbm_to_watts(power_dbm) / cfg.k as f64;
    let (m, nf) = (cfg.m as f64, n as f64);
    let sigma2 = noise_watts(cfg);
    Ok(if cfg.direct_link {
        OperatingPoint { zeta: nf * bg * bf / bh, noise_var: sigma2 / (amp2 * m * bh) }
    } else {
        OperatingPoint { zeta: 1.0, noise_var: sigma2 / (amp2 * m * nf * bg * bf) }
    })
}

/// Frame layout and coding context of one sweep point.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub frame: FrameConfig,
    pub coding: Option<FrameCoding>,
    pub direct_link: bool,
}

impl Scenario {
    pub fn new(cfg: &ExperimentConfig, n: usize, power_dbm: f64, coded: bool) -> Result<Self, CliError> {
        let frame = FrameConfig {
            dims: Dims::new(n, cfg.m, cfg.k),
            pilots: cfg.pilots,
            q: cfg.q,
            t: cfg.t,
            tx: cfg.tx_constellation(),
            ris: cfg.ris_set(),
            power_dbm,
            noise_var: noise_watts(cfg),
            coded,
        };
        frame.validate()?;
        let coding = if coded { Some(FrameCoding::new(&frame, ConvCode::standard(), RngStream::new(cfg.seed, CODING_STREAM))?) } else { None };
        Ok(Self { frame, coding, direct_link: cfg.direct_link })
    }
}

/// Channels, frame and received block of one trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub channels: ChannelSet,
    pub frame: FrameData,
    pub y: CMatrix,
}

/// Trial `trial` draws its channels, payload and noise from stream
/// `(seed, trial)`, so sweep points and detection variants of one trial see
/// the same channel.
pub fn draw_trial(cfg: &ExperimentConfig, sc: &Scenario, trial: usize) -> Result<TrialData, CliError> {
    let root = RngStream::new(cfg.seed, trial as u64);
    let mut ch = gen_channels(sc.frame.dims, &cfg.geometry, &cfg.path_loss(), root.child(1))?;
    if !sc.direct_link {
        ch = ch.without_direct_link();
    }
    let frame = random_frame(&sc.frame, sc.coding.as_ref(), root.child(2))?;
    let y = synthesize(&ch, &frame, sc.frame.noise_var, sc.frame.t, root.child(3))?;
    Ok(TrialData { channels: ch, frame, y })
}

pub fn receiver_config(cfg: &ExperimentConfig, coded: bool, genie: Genie) -> ReceiverConfig {
    ReceiverConfig {
        max_iter: cfg.max_iter,
        min_iter: if cfg.kind == ExperimentKind::MseVsIteration { cfg.max_iter } else { 1 },
        tol: cfg.tol,
        mode: if coded { DetectionMode::Joint } else { DetectionMode::Uncoded },
        genie,
        damping: cfg.damping,
        ..Default::default()
    }
}

/// Runs the detector on one trial, with channel estimates of NMSE
/// `csi_nmse_db` when given.
pub fn detect(cfg: &ExperimentConfig, sc: &Scenario, data: &TrialData, rc: &ReceiverConfig, csi_nmse_db: Option<f64>, trial: usize) -> Result<DetectionResult, CliError> {
    let rx_channels = match csi_nmse_db {
        Some(db) => perturb_csi(&data.channels, db, RngStream::new(cfg.seed, trial as u64).child(4))?,
        None => data.channels.clone(),
    };
    let pilots = data.frame.s_idx.slice(s![0..sc.frame.pilots, ..]).to_owned();
    let problem = DetectionProblem::from_received(&rx_channels, &data.y, sc.frame.noise_var, data.frame.amplitude, sc.frame.t, &pilots, &sc.frame.tx, &sc.frame.ris)?;
    Ok(run(&problem, rc, sc.coding.as_ref(), Some(&data.frame))?)
}

/// One output row: a metric at one swept value.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub sweep: &'static str,
    pub value: f64,
    pub metric: String,
    pub mean: f64,
    /// `None` for deterministic quantities.
    pub stderr: Option<f64>,
    /// Trials, or Monte Carlo samples for state-evolution predictions.
    pub count: usize,
}

/// Everything an experiment produces before it is written out.
#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    /// Extra tables as `(file stem, CSV text without provenance)`.
    pub tables: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl ExperimentOutput {
    pub fn get(&self, metric: &str, value: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.metric == metric && r.value == value)
    }

    pub fn series(&self, metric: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.metric == metric).collect()
    }
}

pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn is_divergence(e: &CliError) -> bool {
    matches!(e, CliError::Core(sapit_core::Error::Divergence(_)))
}

/// Runs `f` over all trials in parallel and keeps the successful ones in
/// trial order. Divergent trials are dropped unless they exceed the allowed
/// fraction.
fn run_trials<T: Send>(cfg: &ExperimentConfig, point: &str, f: impl Fn(usize) -> Result<T, CliError> + Sync + Send) -> Result<Vec<T>, CliError> {
    let results: Vec<Result<T, CliError>> = (0..cfg.trials).into_par_iter().map(&f).collect();
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = 0;
    let mut detail = String::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) if is_divergence(&e) => {
                failed += 1;
                if detail.is_empty() {
                    detail = e.to_string();
                }
            }
            Err(e) => return Err(e),
        }
    }
    if failed as f64 > MAX_DIVERGED_FRACTION * cfg.trials as f64 || ok.is_empty() {
        return Err(CliError::Diverged { failed, total: cfg.trials, point: point.to_string(), detail });
    }
    Ok(ok)
}

fn finite_trace(r: &DetectionResult) -> Result<(), CliError> {
    if r.trace.iter().all(|t| t.v_x.is_finite() && t.v_s.is_finite() && t.tau_d.is_finite()) {
        Ok(())
    } else {
        Err(CliError::Core(sapit_core::Error::Divergence("non-finite message variances".into())))
    }
}

pub fn se_config(cfg: &ExperimentConfig, n: usize, power_dbm: f64, coded: bool) -> Result<SeConfig, CliError> {
    let op = operating_point(cfg, n, power_dbm)?;
    let mut sc = SeConfig::new(Dims::new(n, cfg.m, cfg.k), cfg.pilots, cfg.t, op.zeta, op.noise_var);
    sc.blocked = !cfg.direct_link;
    sc.samples = cfg.se_samples;
    sc.max_iter = cfg.se_max_iter;
    sc.tol = cfg.se_tol;
    sc.seed = cfg.seed;
    if coded {
        sc.decoder_x = DecoderModel::Empirical(ConvCode::standard());
        sc.decoder_s = DecoderModel::Empirical(ConvCode::standard());
    }
    Ok(sc)
}

pub fn se_engine(cfg: &ExperimentConfig, n: usize, power_dbm: f64, coded: bool) -> Result<SeEngine, CliError> {
    Ok(SeEngine::new(se_config(cfg, n, power_dbm, coded)?, cfg.tx_constellation(), cfg.ris_set())?)
}

pub fn rate_config(cfg: &ExperimentConfig, n: usize) -> RateConfig {
    let mut rc = RateConfig::new(Dims::new(n, cfg.m, cfg.k), cfg.pilots, cfg.t);
    rc.lattice = cfg.rate_lattice;
    rc.paths = cfg.rate_paths;
    rc.grid_points = cfg.rate_grid_points;
    rc.seed = cfg.seed;
    rc.bits = cfg.rate_bits;
    rc
}

/// Relative spread `(max − min)/max` of the path integrals.
pub fn path_spread(a: &RateAnalysis) -> f64 {
    let v = &a.result.path_integrals;
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi > 0.0 {
        (hi - lo) / hi
    } else {
        0.0
    }
}

/// Path spread above which a warning is recorded.
pub const PATH_SPREAD_WARNING: f64 = 0.05;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    cfg.validate()?;
    let mut out = ExperimentOutput { warnings: cfg.warnings.clone(), ..Default::default() };
    match cfg.kind {
        ExperimentKind::MseVsIteration => mse_vs_iteration(cfg, &mut out)?,
        ExperimentKind::BerVsPower => ber_vs_power(cfg, &mut out)?,
        ExperimentKind::RateVsN => {
            for &n in &cfg.n_sweep {
                rate_point(cfg, n, &mut out, cfg.n_sweep.len() == 1)?;
            }
        }
        ExperimentKind::SeOnly => {
            let tr = se_engine(cfg, cfg.n, cfg.power_dbm, cfg.coded)?.run()?;
            if !tr.converged {
                out.warnings.push(format!("state evolution did not converge in {} iterations", cfg.se_max_iter));
            }
            push_se_rows(&tr, cfg.se_samples, &mut out.rows, tr.states.len());
            out.tables.push(("se".into(), trajectory_csv(&tr)?));
        }
        ExperimentKind::RateOnly => rate_point(cfg, cfg.n, &mut out, true)?,
    }
    Ok(out)
}

fn trajectory_csv(tr: &SeTrajectory) -> Result<String, CliError> {
    let mut buf = Vec::new();
    tr.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("ascii"))
}

/// SE predictions for iterations `1..=len`, repeating the fixed point past
/// convergence.
fn push_se_rows(tr: &SeTrajectory, samples: usize, rows: &mut Vec<ResultRow>, len: usize) {
    for i in 0..len {
        let s = tr.states.get(i).unwrap_or(tr.last());
        let it = (i + 1) as f64;
        rows.push(ResultRow { sweep: "iteration", value: it, metric: "se_v_x".into(), mean: s.v_x, stderr: Some(s.se_v_x), count: samples });
        rows.push(ResultRow { sweep: "iteration", value: it, metric: "se_v_s".into(), mean: s.v_s, stderr: Some(s.se_v_s), count: samples });
    }
}

fn mse_vs_iteration(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<(), CliError> {
    let sc = Scenario::new(cfg, cfg.n, cfg.power_dbm, cfg.coded)?;
    let rc = receiver_config(cfg, cfg.coded, Genie::None);
    let traces = run_trials(cfg, &format!("power {} dBm", cfg.power_dbm), |trial| {
        let data = draw_trial(cfg, &sc, trial)?;
        let r = detect(cfg, &sc, &data, &rc, None, trial)?;
        finite_trace(&r)?;
        Ok(r.trace.iter().map(|t| (t.mse_x.unwrap_or(f64::NAN), t.mse_s.unwrap_or(f64::NAN))).collect::<Vec<_>>())
    })?;
    let used = traces.len();
    for i in 0..cfg.max_iter {
        // a trial that stopped early keeps its final estimate
        let col = |f: fn(&(f64, f64)) -> f64| -> Vec<f64> { traces.iter().map(|t| f(t.get(i).unwrap_or(t.last().expect("one iteration")))).collect() };
        for (name, vals) in [("mse_x", col(|p| p.0)), ("mse_s", col(|p| p.1))] {
            let (m, se) = mean_stderr(&vals);
            out.rows.push(ResultRow { sweep: "iteration", value: (i + 1) as f64, metric: name.into(), mean: m, stderr: Some(se), count: used });
        }
    }
    let mut se_cfg = se_config(cfg, cfg.n, cfg.power_dbm, cfg.coded)?;
    se_cfg.max_iter = cfg.max_iter;
    let tr = SeEngine::new(se_cfg, cfg.tx_constellation(), cfg.ris_set())?.run()?;
    push_se_rows(&tr, cfg.se_samples, &mut out.rows, cfg.max_iter);
    out.tables.push(("se".into(), trajectory_csv(&tr)?));
    Ok(())
}

/// Bit error rates of one trial under every requested detection variant.
fn ber_trial(cfg: &ExperimentConfig, sc: &Scenario, plain: Option<&Scenario>, trial: usize) -> Result<Vec<(&'static str, f64)>, CliError> {
    let data = draw_trial(cfg, sc, trial)?;
    let mut v = Vec::new();
    let joint = detect(cfg, sc, &data, &receiver_config(cfg, cfg.coded, Genie::None), None, trial)?;
    finite_trace(&joint)?;
    v.push(("ber_x", joint.ber_x(&data.frame)));
    v.push(("ber_s", joint.ber_s(&data.frame)));
    if cfg.genie_bounds {
        let ks = detect(cfg, sc, &data, &receiver_config(cfg, cfg.coded, Genie::KnownS), None, trial)?;
        let kx = detect(cfg, sc, &data, &receiver_config(cfg, cfg.coded, Genie::KnownX), None, trial)?;
        finite_trace(&ks)?;
        finite_trace(&kx)?;
        v.push(("ber_x_known_s", ks.ber_x(&data.frame)));
        v.push(("ber_s_known_x", kx.ber_s(&data.frame)));
    }
    if let Some(db) = cfg.csi_nmse_db {
        let r = detect(cfg, sc, &data, &receiver_config(cfg, cfg.coded, Genie::None), Some(db), trial)?;
        finite_trace(&r)?;
        v.push(("ber_x_csi", r.ber_x(&data.frame)));
        v.push(("ber_s_csi", r.ber_s(&data.frame)));
    }
    if let Some(p) = plain {
        let d = draw_trial(cfg, p, trial)?;
        let r = detect(cfg, p, &d, &receiver_config(cfg, false, Genie::None), None, trial)?;
        finite_trace(&r)?;
        v.push(("ber_x_uncoded", r.ber_x(&d.frame)));
        v.push(("ber_s_uncoded", r.ber_s(&d.frame)));
    }
    Ok(v)
}

fn ber_vs_power(cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<(), CliError> {
    for &p in &cfg.power_sweep_dbm {
        let sc = Scenario::new(cfg, cfg.n, p, cfg.coded)?;
        let plain = if cfg.coded && cfg.compare_uncoded { Some(Scenario::new(cfg, cfg.n, p, false)?) } else { None };
        let trials = run_trials(cfg, &format!("power {p} dBm"), |trial| ber_trial(cfg, &sc, plain.as_ref(), trial))?;
        for (j, (name, _)) in trials[0].iter().enumerate() {
            let vals: Vec<f64> = trials.iter().map(|t| t[j].1).collect();
            let (m, se) = mean_stderr(&vals);
            out.rows.push(ResultRow { sweep: "power_dbm", value: p, metric: (*name).into(), mean: m, stderr: Some(se), count: trials.len() });
        }
    }
    Ok(())
}

fn rate_point(cfg: &ExperimentConfig, n: usize, out: &mut ExperimentOutput, tables: bool) -> Result<(), CliError> {
    let engine = se_engine(cfg, n, cfg.power_dbm, false)?;
    let a = analyze(&engine, &rate_config(cfg, n))?;
    let r = &a.result;
    let spread = path_spread(&a);
    if spread > PATH_SPREAD_WARNING {
        out.warnings.push(format!("N = {n}: path integrals spread by {:.1}% across sampled paths", 100.0 * spread));
    }
    let row = |metric: &str, mean: f64| ResultRow { sweep: "n", value: n as f64, metric: metric.into(), mean, stderr: None, count: cfg.se_samples };
    out.rows.push(row("sum_rate", r.sum_rate));
    out.rows.push(row("separate_rate", r.separate_rate));
    out.rows.push(row("tx_part", r.tx_part));
    out.rows.push(row("ris_part", r.ris_part));
    out.rows.push(row("rho_x0", r.rho_x0));
    out.rows.push(row("rho_s0", r.rho_s0));
    out.rows.push(row("path_spread", spread));
    let mut paths = String::from("n,path,integral,best\n");
    for (i, v) in r.path_integrals.iter().enumerate() {
        paths.push_str(&format!("{n},{i},{v:e},{}\n", u8::from(i == r.best_path)));
    }
    out.tables.push((format!("paths_n{n}"), paths));
    if tables {
        let mut g = Vec::new();
        a.write_grid_csv(&mut g)?;
        out.tables.push((format!("eta_grid_n{n}"), String::from_utf8(g).expect("ascii")));
        let mut u = Vec::new();
        a.uncoded.write_csv(&mut u)?;
        out.tables.push((format!("uncoded_curves_n{n}"), String::from_utf8(u).expect("ascii")));
    }
    Ok(())
}
