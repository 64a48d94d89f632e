//! Acceptance suite. Prints one PASS/FAIL line per criterion; exits nonzero
//! on failure only when `SAPIT_ACCEPTANCE_STRICT=1`. A criterion subset can
//! be chosen with `SAPIT_ACCEPTANCE_ONLY=1,4,9`.

use std::time::Instant;

use ndarray::s;
use rand::Rng;
use sapit_cli::config::{ExperimentConfig, ExperimentKind};
use sapit_cli::experiment::{draw_trial, run_experiment, se_engine, ExperimentOutput, Scenario};
use sapit_cli::{output, presets};
use sapit_core::channel::{gen_iid_channels, Dims};
use sapit_core::constellation::{make_psk, make_qam, RisPhaseSet};
use sapit_core::frame::{random_frame, synthesize, FrameConfig};
use sapit_core::oracle::{
    bpsk_mmse_tanh, constellation_mi, enumerate_phase_posterior, enumerate_posterior, exact_joint_map, quadrature_mixture_moments, MixtureTarget,
};
use sapit_core::quadrature::{logspace, trapezoid, ComplexGaussianRule};
use sapit_core::rate::{psi_x_un, DiagonalCurves, EtaGrid, MonotonicPath};
use sapit_core::receiver::{posterior_c, posterior_s, posterior_u, posterior_x, run, DetectionProblem, ReceiverConfig};
use sapit_core::rng::{standard_cgaussian, RngStream};
use sapit_core::se::{DecoderModel, SeConfig, SeEngine};
use sapit_core::Complex64;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    format!("error: {e}")
}

fn preset(name: &str) -> ExperimentConfig {
    presets::load_preset(name).expect("built-in preset")
}

fn random_pi(r: &mut impl Rng, q: usize) -> Vec<f64> {
    let mut pi: Vec<f64> = (0..q).map(|_| r.random_range(0.05..1.0)).collect();
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    pi
}

fn within_band(sim: f64, pred: f64) -> bool {
    let rel = (sim / pred - 1.0).abs();
    let db = 10.0 * (sim / pred).log10().abs();
    rel <= 0.2 || db <= 1.0
}

fn se_vs_simulation() -> Outcome {
    let cfg = preset("fig4-left-desk");
    let out = run_experiment(&cfg).map_err(fail)?;
    let first = out.get("se_v_x", 1.0).ok_or("missing SE row")?.mean;
    let mut worst = (0.0, String::new());
    let mut bad = Vec::new();
    for it in 1..=10 {
        for (sim, pred) in [("mse_x", "se_v_x"), ("mse_s", "se_v_s")] {
            let a = out.get(sim, it as f64).ok_or("missing MSE row")?.mean;
            let b = out.get(pred, it as f64).ok_or("missing SE row")?.mean;
            let db = 10.0 * (a / b).log10();
            if db.abs() > worst.0 {
                worst = (db.abs(), format!("{sim} it {it}: {a:.3e} vs {b:.3e}"));
            }
            if !within_band(a, b) {
                bad.push(format!("{sim}@{it}"));
            }
        }
    }
    let first_ok = (0.3..=0.8).contains(&first);
    check(
        first_ok && bad.is_empty(),
        format!(
            "{} trials, first SE v_x {first:.3}; outside band: [{}]; worst {:.2} dB ({})",
            cfg.trials,
            bad.join(" "),
            worst.0,
            worst.1
        ),
    )
}

fn posterior_oracles() -> Outcome {
    let mut r = RngStream::new(2024, 2).rng();
    let mut worst_uc: f64 = 0.0;
    for case in 0..100 {
        let ris = RisPhaseSet::uniform([2, 4, 8][case % 3]).map_err(fail)?;
        let pi = random_pi(&mut r, ris.len());
        let tau_p: f64 = r.random_range(0.05..2.0);
        let tau_d: f64 = r.random_range(0.05..2.0);
        let p = standard_cgaussian(&mut r);
        let d = p * ris.points()[case % ris.len()] + standard_cgaussian(&mut r) * (tau_p + tau_d).sqrt();
        let u = posterior_u(d, tau_d, p, tau_p, &pi, ris.points());
        let c = posterior_c(d, tau_d, p, tau_p, &pi, ris.points());
        let (mu, vu) = quadrature_mixture_moments(&pi, ris.points(), p, tau_p, d, tau_d, MixtureTarget::U).map_err(fail)?;
        let (mc, vc) = quadrature_mixture_moments(&pi, ris.points(), p, tau_p, d, tau_d, MixtureTarget::C).map_err(fail)?;
        worst_uc = worst_uc.max((u.mean - mu).norm()).max((u.var - vu).abs()).max((c.mean - mc).norm()).max((c.var - vc).abs());
    }
    let mut worst_xs: f64 = 0.0;
    let qam = make_qam(16).map_err(fail)?;
    let ris = RisPhaseSet::uniform(4).map_err(fail)?;
    for _ in 0..100 {
        let beta = random_pi(&mut r, qam.len());
        let (tr, to) = (r.random_range(0.05..2.0), r.random_range(0.05..2.0));
        let (ro, oo) = (standard_cgaussian(&mut r), standard_cgaussian(&mut r));
        let (m, post) = posterior_x(Some((ro, tr)), (oo, to), &beta, qam.points());
        let (w, mean, var) = enumerate_posterior(qam.points(), &beta, &[(ro, tr), (oo, to)]);
        worst_xs = post.iter().zip(&w).fold(worst_xs, |a, (x, y)| a.max((x - y).abs()));
        worst_xs = worst_xs.max((m.mean - mean).norm()).max((m.var - var).abs());

        let alpha = random_pi(&mut r, ris.len());
        let p: Vec<Complex64> = (0..2).map(|_| standard_cgaussian(&mut r)).collect();
        let d: Vec<Complex64> = p.iter().map(|&pt| pt * ris.points()[2] + standard_cgaussian(&mut r) * 0.6).collect();
        let tau = r.random_range(0.1..1.0);
        let (ms, ps) = posterior_s(&alpha, &d, &p, tau, ris.points());
        let (w, mean, var) = enumerate_phase_posterior(ris.points(), &alpha, &d, &p, tau);
        worst_xs = ps.iter().zip(&w).fold(worst_xs, |a, (x, y)| a.max((x - y).abs()));
        worst_xs = worst_xs.max((ms.mean - mean).norm()).max((ms.var - var).abs());
    }
    check(worst_uc < 1e-6 && worst_xs < 1e-12, format!("u/c max deviation {worst_uc:.2e} over 100 cases, x/s max deviation {worst_xs:.2e}"))
}

fn tiny_system_ordering() -> Outcome {
    let dims = Dims::new(3, 4, 2);
    let cfg = FrameConfig {
        dims,
        pilots: 1,
        q: 1,
        t: 1,
        tx: make_psk(2).map_err(fail)?,
        ris: RisPhaseSet::uniform(2).map_err(fail)?,
        power_dbm: 30.0,
        noise_var: 0.0,
        coded: false,
    };
    let amp2 = cfg.tx_amplitude().powi(2);
    let rc = ReceiverConfig { max_iter: 30, ..Default::default() };
    let trials = 500;
    let mut lines = Vec::new();
    let mut ok = true;
    for (pt, snr_db) in [0.0, 5.0, 10.0, 15.0, 20.0].into_iter().enumerate() {
        let noise = amp2 * dims.k as f64 / 10f64.powf(snr_db / 10.0);
        let (mut map_err, mut mp_err, mut used) = (0usize, 0usize, 0usize);
        for trial in 0..trials {
            let root = RngStream::new(33, (pt * trials + trial) as u64);
            let ch = gen_iid_channels(dims, 1.0, 1.0, 1.0, root.child(1));
            let fr = random_frame(&cfg, None, root.child(2)).map_err(fail)?;
            let y = synthesize(&ch, &fr, noise, 1, root.child(3)).map_err(fail)?;
            let pil = fr.s_idx.slice(s![0..1, ..]).to_owned();
            let exact = exact_joint_map(&ch, &y, noise, fr.amplitude, 1, &pil, &cfg.tx, &cfg.ris).map_err(fail)?;
            let prob = DetectionProblem::from_received(&ch, &y, noise, fr.amplitude, 1, &pil, &cfg.tx, &cfg.ris).map_err(fail)?;
            let Ok(res) = run(&prob, &rc, None, None) else { continue };
            used += 1;
            let truth_s = fr.s_idx.slice(s![1.., ..]);
            let miss = |a: &ndarray::Array2<usize>, b: ndarray::ArrayView2<usize>| a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
            map_err += miss(&exact.x_marginal_map, fr.x_idx.view()) + miss(&exact.s_marginal_map, truth_s);
            mp_err += miss(&res.x_hat, fr.x_idx.view()) + miss(&res.s_hat.slice(s![1.., ..]).to_owned(), truth_s);
        }
        let symbols = (used * 4).max(1) as f64;
        let (a, b) = (map_err as f64 / symbols, mp_err as f64 / symbols);
        ok &= a <= b && used * 10 >= trials * 9;
        lines.push(format!("{snr_db} dB {a:.3}<={b:.3} ({used})"));
    }
    check(ok, format!("SER exact MAP vs message passing: {}", lines.join(", ")))
}

fn genie_ordering() -> Outcome {
    let cfg = preset("fig5-left-desk");
    let out = run_experiment(&cfg).map_err(fail)?;
    let mut ok = cfg.trials >= 20;
    let mut strict = false;
    let mut pts = Vec::new();
    for &p in &cfg.power_sweep_dbm {
        let g = |m: &str| out.get(m, p).map(|r| r.mean).ok_or(format!("missing {m} at {p}"));
        let (x, xg, sv, sg) = (g("ber_x")?, g("ber_x_known_s")?, g("ber_s")?, g("ber_s_known_x")?);
        ok &= xg <= x && sg <= sv;
        strict |= xg < x || sg < sv;
        pts.push(format!("{p}: x {xg:.1e}<={x:.1e} s {sg:.1e}<={sv:.1e}"));
    }
    check(ok && strict, format!("{} seeds; {}", cfg.trials, pts.join("; ")))
}

fn coded_waterfall() -> Outcome {
    let mut cfg = preset("fig5-right-desk");
    cfg.genie_bounds = false;
    cfg.csi_nmse_db = None;
    cfg.trials = 10;
    let out = run_experiment(&cfg).map_err(fail)?;
    let mut hit = None;
    let mut pts = Vec::new();
    for &p in &cfg.power_sweep_dbm {
        let coded = out.get("ber_x", p).ok_or("missing ber_x")?.mean;
        let unc = out.get("ber_x_uncoded", p).ok_or("missing ber_x_uncoded")?.mean;
        if hit.is_none() && coded < 1e-3 && unc > 1e-2 {
            hit = Some(p);
        }
        pts.push(format!("{p}: {coded:.1e}/{unc:.1e}"));
    }
    let head = hit.map_or("no qualifying power".to_string(), |p| format!("qualifies at {p} dBm"));
    check(hit.is_some(), format!("{head}; coded/uncoded BER_x {}", pts.join(", ")))
}

fn i_mmse_identity() -> Outcome {
    let rule = ComplexGaussianRule::new(48).map_err(fail)?;
    let k = 64.0;
    let mut worst: f64 = 0.0;
    for c in [make_psk(2).map_err(fail)?, make_psk(4).map_err(fail)?] {
        for rho in [1.0, 4.0, 10.0] {
            let mut g = vec![0.0];
            g.extend(logspace(rho * 1e-5, rho, 2000).map_err(fail)?);
            let f: Vec<f64> = g.iter().map(|&x| psi_x_un(x, &c, &rule)).collect();
            let lhs = trapezoid(&g, &f);
            let rhs = constellation_mi(&c, rho, 801);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    check(worst < 1e-2 / k, format!("max per-symbol gap {worst:.2e} nats (K = {k} gives {:.2e})", worst * k))
}

fn bpsk_tanh_formula() -> Outcome {
    let dims = Dims::new(128, 128, 16);
    let mut cfg = SeConfig::new(dims, 8, 1, 1.0, 0.1);
    cfg.samples = 200_000;
    let e = SeEngine::new(cfg, make_psk(2).map_err(fail)?, RisPhaseSet::uniform(2).map_err(fail)?).map_err(fail)?;
    let zero = vec![0.0; e.cfg.samples * 2];
    let mut ok = true;
    let mut pts = Vec::new();
    // below about 0.2 the MMSE comes from rare samples and the sample standard
    // error understates the spread
    for tau_r in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let ((v, se), _) = e.se_vx(Some(tau_r), f64::INFINITY, &zero);
        let want = bpsk_mmse_tanh(tau_r, 4001);
        let z = (v - want).abs() / se;
        ok &= z <= 3.0;
        pts.push(format!("{tau_r}: {z:.2}"));
    }
    check(ok, format!("|SE - tanh| in standard errors: {}", pts.join(", ")))
}

fn rate_trend() -> Outcome {
    let cfg = preset("fig6-left-desk");
    let out = run_experiment(&cfg).map_err(fail)?;
    let sum: Vec<f64> = cfg.n_sweep.iter().map(|&n| out.get("sum_rate", n as f64).map(|r| r.mean)).collect::<Option<_>>().ok_or("missing sum_rate")?;
    let sep: Vec<f64> = cfg.n_sweep.iter().map(|&n| out.get("separate_rate", n as f64).map(|r| r.mean)).collect::<Option<_>>().ok_or("missing separate_rate")?;
    let monotone = sum.windows(2).all(|w| w[1] >= w[0]);
    let dominated = sum.iter().zip(&sep).all(|(a, b)| b <= a);
    let pts: Vec<String> = cfg.n_sweep.iter().zip(sum.iter().zip(&sep)).map(|(n, (a, b))| format!("{n}: {a:.1}/{b:.1}")).collect();
    check(monotone && dominated, format!("sum/separate bits per block {}", pts.join(", ")))
}

fn convergence_predicate() -> Outcome {
    let cfg = preset("fig6-left-desk");
    let n = cfg.n_sweep[0];
    let engine = se_engine(&cfg, n, cfg.power_dbm, false).map_err(fail)?;
    let grid = EtaGrid::compute(&engine, cfg.rate_lattice).map_err(fail)?;
    let path = MonotonicPath::straight(cfg.rate_lattice);
    let mut parts = Vec::new();
    let mut ok = true;
    for (factor, want) in [(0.95, true), (1.05, false)] {
        let d = DiagonalCurves::new(&grid, factor);
        let pred = grid.check_convergence(&path, |t| d.inverse_x(t), |t| d.inverse_s(t));
        let tr = engine.run_with(&DecoderModel::Curve(d.transfer_x()), &DecoderModel::Curve(d.transfer_s())).map_err(fail)?;
        let last = tr.last();
        // a stall is a fixed point whose larger MSE stays above 0.1
        let se_ok = if want { last.v_x < 1e-3 && last.v_s < 1e-3 } else { tr.converged && last.v_x.max(last.v_s) > 0.1 && last.v_x.min(last.v_s) > 1e-3 };
        ok &= pred == want && se_ok;
        parts.push(format!("factor {factor}: predicate {pred}, final v_x {:.2e} v_s {:.2e} after {} iterations", last.v_x, last.v_s, tr.states.len()));
    }
    check(ok, parts.join("; "))
}

/// Shrinks a preset so a run takes well under a second while exercising
/// the same code paths.
fn shrink(mut c: ExperimentConfig) -> ExperimentConfig {
    c.trials = 1;
    c.q = c.q.min(4);
    c.max_iter = c.max_iter.min(3);
    c.se_samples = 400;
    c.se_max_iter = 3;
    c.rate_lattice = 2;
    c.rate_paths = 3;
    c.rate_grid_points = 20;
    c.power_sweep_dbm.truncate(2);
    c.n_sweep.truncate(1);
    c
}

fn csv_bytes(cfg: &ExperimentConfig, out: &ExperimentOutput) -> Vec<String> {
    let mut v = vec![output::results_csv(cfg, out)];
    v.extend(out.tables.iter().map(|(stem, t)| format!("{stem}\n{}", output::with_provenance(cfg, t))));
    v
}

fn determinism() -> Outcome {
    let mut differing = Vec::new();
    let names = presets::list_presets();
    for name in &names {
        let cfg = shrink(preset(name));
        let a = run_experiment(&cfg).map_err(|e| format!("{name}: {e}"))?;
        let b = run_experiment(&cfg).map_err(|e| format!("{name}: {e}"))?;
        if csv_bytes(&cfg, &a) != csv_bytes(&cfg, &b) {
            differing.push(name.to_string());
        }
    }
    check(differing.is_empty(), format!("{} presets rerun with the same seed; differing: [{}]", names.len(), differing.join(" ")))
}

fn per_iteration_seconds(cfg: &ExperimentConfig, iters: usize, reps: usize) -> Result<f64, String> {
    let sc = Scenario::new(cfg, cfg.n, cfg.power_dbm, false).map_err(fail)?;
    let data = draw_trial(cfg, &sc, 0).map_err(fail)?;
    let pil = data.frame.s_idx.slice(s![0..cfg.pilots, ..]).to_owned();
    let prob = DetectionProblem::from_received(&data.channels, &data.y, sc.frame.noise_var, data.frame.amplitude, cfg.t, &pil, &sc.frame.tx, &sc.frame.ris)
        .map_err(fail)?;
    let rc = ReceiverConfig { max_iter: iters, min_iter: iters, ..Default::default() };
    run(&prob, &rc, None, None).map_err(fail)?;
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let t0 = Instant::now();
            let r = run(&prob, &rc, None, None);
            let dt = t0.elapsed().as_secs_f64();
            r.map(|_| dt / iters as f64).map_err(fail)
        })
        .collect::<Result<_, _>>()?;
    times.sort_by(f64::total_cmp);
    Ok(times[reps / 2])
}

fn linear_complexity() -> Outcome {
    let mut base = ExperimentConfig { kind: ExperimentKind::MseVsIteration, seed: 7, ..Default::default() };
    (base.n, base.m, base.k, base.pilots, base.q, base.t) = (512, 512, 512, 64, 16, 2);
    base.direct_link = true;
    base.power_dbm = 40.0;
    let (iters, reps) = (3, 5);
    let t0 = per_iteration_seconds(&base, iters, reps)?;
    let mut ok = true;
    let mut parts = Vec::new();
    let doubled: [(&str, fn(&mut ExperimentConfig)); 5] = [
        ("N", |c| c.n *= 2),
        ("M", |c| c.m *= 2),
        ("K", |c| c.k *= 2),
        ("Q", |c| c.q *= 2),
        ("T", |c| c.t *= 2),
    ];
    for (name, grow) in doubled {
        let mut c = base.clone();
        grow(&mut c);
        let f = per_iteration_seconds(&c, iters, reps)? / t0;
        ok &= (1.6..=2.6).contains(&f);
        parts.push(format!("{name} x{f:.2}"));
    }
    check(ok, format!("base {:.2} ms/iteration; {}", t0 * 1e3, parts.join(", ")))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "state evolution tracks simulated MSE", se_vs_simulation),
        (2, "posterior kernels match oracles", posterior_oracles),
        (3, "exact MAP beats message passing on a tiny system", tiny_system_ordering),
        (4, "genie bounds lie below joint detection", genie_ordering),
        (5, "coded waterfall", coded_waterfall),
        (6, "I-MMSE identity", i_mmse_identity),
        (7, "BPSK MMSE matches tanh integral", bpsk_tanh_formula),
        (8, "rate grows with N and dominates separate coding", rate_trend),
        (9, "convergence predicate agrees with state evolution", convergence_predicate),
        (10, "presets are deterministic", determinism),
        (11, "per-iteration cost is linear", linear_complexity),
    ];
    let only: Option<Vec<usize>> = std::env::var("SAPIT_ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let strict = std::env::var("SAPIT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = Vec::new();
    for (id, title, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t0 = Instant::now();
        let res = f();
        let secs = t0.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("criterion {id}: PASS  {title} [{secs:.1} s] {d}"),
            Err(d) => {
                println!("criterion {id}: FAIL  {title} [{secs:.1} s] {d}");
                failed.push(id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed {failed:?}");
        if strict {
            std::process::exit(1);
        }
    }
}
