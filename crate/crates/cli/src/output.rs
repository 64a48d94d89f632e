//! CSV, metadata and plot-script emission. Every CSV row carries the config
//! hash and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::experiment::ExperimentOutput;

pub const RESULTS_HEADER: &str = "config_hash,seed,experiment,sweep,value,metric,mean,stderr,count";

pub fn results_csv(cfg: &ExperimentConfig, out: &ExperimentOutput) -> String {
    let hash = cfg.hash();
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in &out.rows {
        let se = r.stderr.map_or(String::new(), |v| format!("{v:e}"));
        let _ = writeln!(s, "{hash},{},{},{},{},{},{:e},{se},{}", cfg.seed, cfg.kind, r.sweep, r.value, r.metric, r.mean, r.count);
    }
    s
}

/// Prefixes every line of a CSV table with the provenance columns.
pub fn with_provenance(cfg: &ExperimentConfig, table: &str) -> String {
    let hash = cfg.hash();
    let mut lines = table.lines();
    let mut s = String::new();
    if let Some(h) = lines.next() {
        let _ = writeln!(s, "config_hash,seed,{h}");
    }
    for l in lines {
        let _ = writeln!(s, "{hash},{},{l}", cfg.seed);
    }
    s
}

pub fn metadata(cfg: &ExperimentConfig, out: &ExperimentOutput) -> String {
    let mut s = format!("# config_hash = {}\n# seed = {}\n", cfg.hash(), cfg.seed);
    for w in &out.warnings {
        let _ = writeln!(s, "# warning: {w}");
    }
    s.push_str(&cfg.canonical());
    s
}

pub fn plot_script(cfg: &ExperimentConfig, out: &ExperimentOutput) -> String {
    let log_y = matches!(cfg.kind, ExperimentKind::MseVsIteration | ExperimentKind::BerVsPower | ExperimentKind::SeOnly);
    let xlabel = match cfg.kind {
        ExperimentKind::MseVsIteration | ExperimentKind::SeOnly => "iteration",
        ExperimentKind::BerVsPower => "transmit power (dBm)",
        ExperimentKind::RateVsN | ExperimentKind::RateOnly => "RIS elements N",
    };
    let ylabel = match cfg.kind {
        ExperimentKind::MseVsIteration | ExperimentKind::SeOnly => "MSE",
        ExperimentKind::BerVsPower => "BER",
        _ => "rate (bits/channel use)",
    };
    let mut metrics: Vec<&str> = Vec::new();
    for r in &out.rows {
        if !metrics.contains(&r.metric.as_str()) && r.metric != "path_spread" && !r.metric.starts_with("rho") {
            metrics.push(&r.metric);
        }
    }
    let list = metrics.iter().map(|m| format!("\"{m}\"")).collect::<Vec<_>>().join(", ");
    format!(
        r#"#!/usr/bin/env python3
# Plots results.csv from this directory: {kind}, config {hash}, seed {seed}.
import csv
import os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
rows = list(csv.DictReader(open(os.path.join(here, "results.csv"))))
fig, ax = plt.subplots(figsize=(6, 4.5))
for metric in [{list}]:
    pts = sorted((float(r["value"]), float(r["mean"])) for r in rows if r["metric"] == metric)
    if not pts:
        continue
    style = "--" if metric.startswith("se_") else "-o"
    ax.plot([p[0] for p in pts], [p[1] for p in pts], style, label=metric)
{yscale}ax.set_xlabel("{xlabel}")
ax.set_ylabel("{ylabel}")
ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "plot.png"), dpi=150)
"#,
        kind = cfg.kind,
        hash = cfg.hash(),
        seed = cfg.seed,
        yscale = if log_y { "ax.set_yscale(\"log\")\n" } else { "" },
    )
}

/// Writes `results.csv`, the extra tables, `metadata.txt` and `plot.py`
/// into `dir`, returning the written paths.
pub fn write_all(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut put = |name: String, body: String| -> Result<(), CliError> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        files.push(p);
        Ok(())
    };
    put("results.csv".into(), results_csv(cfg, out))?;
    for (stem, table) in &out.tables {
        put(format!("{stem}.csv"), with_provenance(cfg, table))?;
    }
    put("metadata.txt".into(), metadata(cfg, out))?;
    put("plot.py".into(), plot_script(cfg, out))?;
    Ok(files)
}
