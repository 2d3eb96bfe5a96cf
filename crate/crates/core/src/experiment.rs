//! Config-driven experiment sweeps and their CSV/SVG outputs.
//!
//! Every trial draws its instance from the substream keyed by
//! `(master_seed, p, trial)`, so a sweep produces the same rows in the same
//! order for any thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize};

use crate::asymptotics::stieltjes_t;
use crate::concavity::scan_nonconcavity;
use crate::error::{Error, Result};
use crate::model::{format_f64, generate_instance, ModelParams, ProblemInstance};
use crate::replica::{rs_free_energy, solve_fixed_point};
use crate::ridge::{
    gaussian_log_partition, mc_spherical_free_energy, ridge_from_gram, tap_ridge_distance, McOptions,
};
use crate::sphere::{maximize_tap_with, profile_over_q, TapOptimizerOptions};
use crate::tap::{f_tap, TapObjective};
use rayon::prelude::*;

/// Leading comment line of every CSV file.
pub const CSV_VERSION_LINE: &str = "# tapreg-csv-v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Corollary1,
    FreeEnergy,
    RsTable,
    Concavity,
    Profile,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Corollary1 => "corollary1",
            ExperimentKind::FreeEnergy => "free-energy",
            ExperimentKind::RsTable => "rs-table",
            ExperimentKind::Concavity => "concavity",
            ExperimentKind::Profile => "profile",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(deserialize_with = "one_or_many")]
    pub alpha: Vec<f64>,
    #[serde(deserialize_with = "one_or_many")]
    pub delta: Vec<f64>,
    pub p_list: Vec<usize>,
    pub trials: usize,
    pub master_seed: u64,
    pub optimizer: TapOptimizerOptions,
    /// Spherical Monte Carlo for `free-energy` sweeps; skipped when absent.
    pub mc: Option<McOptions>,
    /// Overlap grid for `concavity` and `profile`; a default grid is used when empty.
    pub q_grid: Vec<f64>,
    pub output: OutputPaths,
    /// Record `wall_ms`. Off by default so that reruns are byte-identical.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::Corollary1,
            alpha: vec![2.0],
            delta: vec![0.1],
            p_list: vec![10],
            trials: 1,
            master_seed: 0,
            optimizer: TapOptimizerOptions::default(),
            mc: None,
            q_grid: Vec::new(),
            output: OutputPaths::default(),
            timing: false,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(f64),
        Many(Vec<f64>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl ExperimentConfig {
    /// Named presets. `figure1`: α = 2, Δ ∈ {0.1, 0.5}, p ∈ {10, 20, …, 400}, 10 trials.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "figure1" => Some(Self {
                experiment: ExperimentKind::Corollary1,
                alpha: vec![2.0],
                delta: vec![0.1, 0.5],
                p_list: (1..=40).map(|i| 10 * i).collect(),
                trials: 10,
                ..Default::default()
            }),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::InvalidParameter(format!("{name} list is empty")));
            }
            if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {bad}")));
            }
            Ok(())
        };
        positive("alpha", &self.alpha)?;
        positive("delta", &self.delta)?;
        if self.experiment != ExperimentKind::RsTable {
            if self.p_list.is_empty() {
                return Err(Error::InvalidParameter("p_list is empty".into()));
            }
            if self.p_list.contains(&0) {
                return Err(Error::InvalidParameter("p_list entries must be positive".into()));
            }
            if self.trials == 0 {
                return Err(Error::InvalidParameter("trials must be at least 1".into()));
            }
        }
        Ok(())
    }

    fn q_grid_or_default(&self) -> Vec<f64> {
        if !self.q_grid.is_empty() {
            return self.q_grid.clone();
        }
        match self.experiment {
            ExperimentKind::Profile => (1..=19).map(|i| 0.05 * i as f64).collect(),
            _ => (1..=9).map(|i| 0.1 * i as f64).collect(),
        }
    }
}

/// Stream tag of trial `trial` at dimension `p`.
pub fn trial_stream(p: usize, trial: usize) -> u64 {
    ((p as u64) << 32) | trial as u64
}

/// One row of a `corollary1` or `free-energy` sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    pub p: usize,
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
    pub trial: usize,
    pub seed: u64,
    pub dist_sq_norm: Option<f64>,
    pub f_tap_max: Option<f64>,
    pub f_tap_ridge: Option<f64>,
    pub gauss_free_energy: Option<f64>,
    pub rs_free_energy: Option<f64>,
    pub mc_free_energy: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub wall_ms: Option<u64>,
    pub status: String,
}

pub const RECORD_HEADER: [&str; 17] = [
    "experiment",
    "p",
    "n",
    "alpha",
    "delta",
    "trial",
    "seed",
    "dist_sq_norm",
    "f_tap_max",
    "f_tap_ridge",
    "gauss_free_energy",
    "rs_free_energy",
    "mc_free_energy",
    "iterations",
    "converged",
    "wall_ms",
    "status",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RsRow {
    pub alpha: f64,
    pub delta: f64,
    pub e_delta: f64,
    pub sigma_sq: f64,
    pub free_energy: f64,
}

pub const RS_HEADER: [&str; 5] = ["alpha", "delta", "E_delta", "sigma_sq", "free_energy"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcavityRow {
    pub alpha: f64,
    pub delta: f64,
    pub p: usize,
    pub trial: usize,
    pub q: f64,
    pub lambda_min: f64,
    pub finite_p: f64,
    pub asymptotic: f64,
    pub nonconcave: bool,
}

pub const CONCAVITY_HEADER: [&str; 9] = [
    "alpha",
    "delta",
    "p",
    "trial",
    "q",
    "lambda_min",
    "finite_p",
    "asymptotic",
    "nonconcave",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub alpha: f64,
    pub delta: f64,
    pub p: usize,
    pub trial: usize,
    pub q: f64,
    pub g_tap: f64,
    pub g: f64,
}

pub const PROFILE_HEADER: [&str; 7] = ["alpha", "delta", "p", "trial", "q", "g_tap", "g"];

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Sweep(Vec<ExperimentRecord>),
    RsTable(Vec<RsRow>),
    Concavity(Vec<ConcavityRow>),
    Profile(Vec<ProfileRow>),
}

impl ExperimentOutput {
    pub fn len(&self) -> usize {
        match self {
            ExperimentOutput::Sweep(r) => r.len(),
            ExperimentOutput::RsTable(r) => r.len(),
            ExperimentOutput::Concavity(r) => r.len(),
            ExperimentOutput::Profile(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Option<&[ExperimentRecord]> {
        match self {
            ExperimentOutput::Sweep(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    alpha: f64,
    delta: f64,
    p: usize,
    trial: usize,
}

fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for &alpha in &cfg.alpha {
        for &delta in &cfg.delta {
            for &p in &cfg.p_list {
                for trial in 0..cfg.trials {
                    out.push(Job {
                        alpha,
                        delta,
                        p,
                        trial,
                    });
                }
            }
        }
    }
    out
}

fn job_instance(cfg: &ExperimentConfig, job: &Job) -> Result<ProblemInstance> {
    let params = ModelParams::new(job.p, job.alpha, job.delta, cfg.master_seed)?;
    generate_instance(&params, trial_stream(job.p, job.trial))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Corollary1 | ExperimentKind::FreeEnergy => Ok(ExperimentOutput::Sweep(
            jobs(cfg).par_iter().map(|job| sweep_row(cfg, job)).collect(),
        )),
        ExperimentKind::RsTable => {
            let mut rows = Vec::new();
            for &alpha in &cfg.alpha {
                for &delta in &cfg.delta {
                    let s = solve_fixed_point(alpha, delta)?;
                    rows.push(RsRow {
                        alpha,
                        delta,
                        e_delta: s.e_delta,
                        sigma_sq: s.sigma_sq,
                        free_energy: s.free_energy,
                    });
                }
            }
            Ok(ExperimentOutput::RsTable(rows))
        }
        ExperimentKind::Concavity => {
            let grid = cfg.q_grid_or_default();
            let per_job = jobs(cfg)
                .par_iter()
                .map(|job| -> Result<Vec<ConcavityRow>> {
                    let inst = job_instance(cfg, job)?;
                    let scan = scan_nonconcavity(&inst, &grid)?;
                    Ok(scan
                        .reports
                        .into_iter()
                        .map(|r| ConcavityRow {
                            alpha: job.alpha,
                            delta: job.delta,
                            p: job.p,
                            trial: job.trial,
                            q: r.q,
                            lambda_min: r.lambda_min,
                            finite_p: r.finite_p,
                            asymptotic: r.asymptotic,
                            nonconcave: r.nonconcave,
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ExperimentOutput::Concavity(per_job.into_iter().flatten().collect()))
        }
        ExperimentKind::Profile => {
            let grid = cfg.q_grid_or_default();
            let per_job = jobs(cfg)
                .par_iter()
                .map(|job| -> Result<Vec<ProfileRow>> {
                    let inst = job_instance(cfg, job)?;
                    Ok(profile_over_q(&inst, &grid)?
                        .into_iter()
                        .map(|g| ProfileRow {
                            alpha: job.alpha,
                            delta: job.delta,
                            p: job.p,
                            trial: job.trial,
                            q: g.q,
                            g_tap: g.g_tap,
                            g: g.g,
                        })
                        .collect())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ExperimentOutput::Profile(per_job.into_iter().flatten().collect()))
        }
    }
}

struct SweepMetrics {
    dist: f64,
    f_max: f64,
    f_ridge: f64,
    gauss: f64,
    mc: Option<f64>,
    iterations: usize,
    converged: bool,
}

fn sweep_metrics(cfg: &ExperimentConfig, inst: &ProblemInstance) -> Result<SweepMetrics> {
    let obj = TapObjective::new(inst);
    let a_ridge = ridge_from_gram(obj.gram(), obj.xty(), inst.params().delta)?;
    let opt = maximize_tap_with(inst, &obj, &a_ridge, &cfg.optimizer)?;
    let mc = match (&cfg.experiment, &cfg.mc) {
        (ExperimentKind::FreeEnergy, Some(opts)) => {
            Some(mc_spherical_free_energy(inst, opts, inst.stream_tag())?.value)
        }
        _ => None,
    };
    Ok(SweepMetrics {
        dist: tap_ridge_distance(&opt.a_hat, &a_ridge)?,
        f_max: opt.f_value,
        f_ridge: f_tap(&a_ridge, inst)?.value.to_f64(),
        gauss: gaussian_log_partition(inst)?.value,
        mc,
        iterations: opt.iterations,
        converged: opt.converged,
    })
}

fn sweep_row(cfg: &ExperimentConfig, job: &Job) -> ExperimentRecord {
    let started = Instant::now();
    let params = ModelParams::new(job.p, job.alpha, job.delta, cfg.master_seed);
    let seed = trial_stream(job.p, job.trial);
    let mut rec = ExperimentRecord {
        experiment: cfg.experiment.name().to_string(),
        p: job.p,
        n: params.map(|prm| prm.n()).unwrap_or(0),
        alpha: job.alpha,
        delta: job.delta,
        trial: job.trial,
        seed,
        dist_sq_norm: None,
        f_tap_max: None,
        f_tap_ridge: None,
        gauss_free_energy: None,
        rs_free_energy: rs_free_energy(job.alpha, job.delta).ok(),
        mc_free_energy: None,
        iterations: None,
        converged: None,
        wall_ms: None,
        status: "ok".into(),
    };
    match job_instance(cfg, job).and_then(|inst| sweep_metrics(cfg, &inst)) {
        Ok(m) => {
            rec.dist_sq_norm = Some(m.dist);
            rec.f_tap_max = Some(m.f_max);
            rec.f_tap_ridge = Some(m.f_ridge).filter(|v| v.is_finite());
            rec.gauss_free_energy = Some(m.gauss);
            rec.mc_free_energy = m.mc;
            rec.iterations = Some(m.iterations);
            rec.converged = Some(m.converged);
        }
        Err(e) => rec.status = format!("error: {e}"),
    }
    if cfg.timing {
        rec.wall_ms = Some(started.elapsed().as_millis() as u64);
    }
    rec
}

/// Mean `dist_sq_norm` per `p` for one `(α, Δ)` series, with the
/// least-squares slope of the means against `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSummary {
    pub alpha: f64,
    pub delta: f64,
    pub means: Vec<(usize, f64)>,
    pub slope: f64,
}

pub fn summarize_trend(records: &[ExperimentRecord]) -> Vec<TrendSummary> {
    // series keyed by first appearance
    let mut order: Vec<(f64, f64)> = Vec::new();
    let mut acc: Vec<BTreeMap<usize, (f64, usize)>> = Vec::new();
    for r in records {
        let Some(d) = r.dist_sq_norm else { continue };
        let idx = match order.iter().position(|&k| k == (r.alpha, r.delta)) {
            Some(i) => i,
            None => {
                order.push((r.alpha, r.delta));
                acc.push(BTreeMap::new());
                order.len() - 1
            }
        };
        let e = acc[idx].entry(r.p).or_insert((0.0, 0));
        e.0 += d;
        e.1 += 1;
    }
    order
        .into_iter()
        .zip(acc)
        .map(|((alpha, delta), per_p)| {
            let means: Vec<(usize, f64)> =
                per_p.into_iter().map(|(p, (s, c))| (p, s / c as f64)).collect();
            TrendSummary {
                alpha,
                delta,
                slope: least_squares_slope(&means),
                means,
            }
        })
        .collect()
}

fn least_squares_slope(points: &[(usize, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mx = points.iter().map(|(x, _)| *x as f64).sum::<f64>() / n;
    let my = points.iter().map(|(_, y)| *y).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (*x as f64 - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (*x as f64 - mx).powi(2)).sum();
    sxy / sxx
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

fn opt_display<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders the CSV document: version comment, header, rows; LF endings.
pub fn render_csv(output: &ExperimentOutput) -> Result<String> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    match output {
        ExperimentOutput::Sweep(rows) => {
            writer.write_record(RECORD_HEADER).map_err(csv_err)?;
            for r in rows {
                writer
                    .write_record([
                        r.experiment.clone(),
                        r.p.to_string(),
                        r.n.to_string(),
                        format_f64(r.alpha),
                        format_f64(r.delta),
                        r.trial.to_string(),
                        r.seed.to_string(),
                        opt_f64(r.dist_sq_norm),
                        opt_f64(r.f_tap_max),
                        opt_f64(r.f_tap_ridge),
                        opt_f64(r.gauss_free_energy),
                        opt_f64(r.rs_free_energy),
                        opt_f64(r.mc_free_energy),
                        opt_display(r.iterations),
                        opt_display(r.converged),
                        opt_display(r.wall_ms),
                        r.status.clone(),
                    ])
                    .map_err(csv_err)?;
            }
        }
        ExperimentOutput::RsTable(rows) => {
            writer.write_record(RS_HEADER).map_err(csv_err)?;
            for r in rows {
                writer
                    .write_record(
                        [r.alpha, r.delta, r.e_delta, r.sigma_sq, r.free_energy].map(format_f64),
                    )
                    .map_err(csv_err)?;
            }
        }
        ExperimentOutput::Concavity(rows) => {
            writer.write_record(CONCAVITY_HEADER).map_err(csv_err)?;
            for r in rows {
                writer
                    .write_record([
                        format_f64(r.alpha),
                        format_f64(r.delta),
                        r.p.to_string(),
                        r.trial.to_string(),
                        format_f64(r.q),
                        format_f64(r.lambda_min),
                        format_f64(r.finite_p),
                        if r.asymptotic.is_nan() {
                            String::new()
                        } else {
                            format_f64(r.asymptotic)
                        },
                        r.nonconcave.to_string(),
                    ])
                    .map_err(csv_err)?;
            }
        }
        ExperimentOutput::Profile(rows) => {
            writer.write_record(PROFILE_HEADER).map_err(csv_err)?;
            for r in rows {
                writer
                    .write_record([
                        format_f64(r.alpha),
                        format_f64(r.delta),
                        r.p.to_string(),
                        r.trial.to_string(),
                        format_f64(r.q),
                        format_f64(r.g_tap),
                        format_f64(r.g),
                    ])
                    .map_err(csv_err)?;
            }
        }
    }
    let body = writer
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    let mut text = String::with_capacity(body.len() + CSV_VERSION_LINE.len() + 1);
    text.push_str(CSV_VERSION_LINE);
    text.push('\n');
    text.push_str(&String::from_utf8(body).expect("CSV fields are UTF-8"));
    Ok(text)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line chart of mean `dist_sq_norm` against `p`, one polyline per `(α, Δ)`.
pub fn render_svg(records: &[ExperimentRecord]) -> String {
    let series = summarize_trend(records);
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 30.0, 50.0);
    let pts = series.iter().flat_map(|s| s.means.iter());
    let (mut xmin, mut xmax, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(p, m) in pts {
        xmin = xmin.min(p as f64);
        xmax = xmax.max(p as f64);
        ymax = ymax.max(m);
    }
    if !xmin.is_finite() {
        (xmin, xmax) = (0.0, 1.0);
    }
    if xmax <= xmin {
        xmax = xmin + 1.0;
    }
    if ymax <= 0.0 {
        ymax = 1.0;
    }
    let sx = |x: f64| left + (x - xmin) / (xmax - xmin) * (w - left - right);
    let sy = |y: f64| h - bottom - y / ymax * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#,
        y0 = h - bottom,
        x1 = w - right
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{y0}" stroke="black"/>"#,
        y0 = h - bottom
    );
    for i in 0..=4 {
        let fx = xmin + (xmax - xmin) * i as f64 / 4.0;
        let fy = ymax * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{:.0}</text>"#,
            sx(fx),
            h - bottom + 16.0,
            fx
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{:.3e}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">p</text>"#,
        (left + w - right) / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">mean dist_sq_norm</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .means
            .iter()
            .map(|&(p, m)| format!("{:.2},{:.2}", sx(p as f64), sy(m)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 16.0 * i as f64 + 10.0;
        let lx = w - right - 150.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="11">alpha = {}, delta = {}</text>"#,
            lx + 26.0,
            ly + 4.0,
            s.alpha,
            s.delta
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WrittenFiles {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Writes the CSV (and, for sweeps, the SVG chart) to the configured paths.
/// If a file cannot be written the CSV is echoed to standard output before
/// the error is returned, so the computed rows are never lost.
pub fn write_outputs(output: &ExperimentOutput, cfg: &ExperimentConfig) -> Result<WrittenFiles> {
    if output.is_empty() {
        return Err(Error::InvalidParameter("no records to write".into()));
    }
    let csv_text = render_csv(output)?;
    let mut written = WrittenFiles::default();
    let echo_on_err = |res: std::io::Result<()>| -> Result<()> {
        res.map_err(|e| {
            print!("{csv_text}");
            Error::Io(e)
        })
    };
    if let Some(path) = &cfg.output.csv {
        echo_on_err(std::fs::write(path, &csv_text))?;
        written.csv = Some(path.clone());
    }
    if let (Some(path), Some(records)) = (&cfg.output.svg, output.records()) {
        echo_on_err(std::fs::write(path, render_svg(records)))?;
        written.svg = Some(path.clone());
    }
    Ok(written)
}

/// Checks an `rs-table` against the Marchenko–Pastur closed form; returns the largest gap.
pub fn rs_table_max_gap(rows: &[RsRow]) -> f64 {
    rows.iter()
        .map(|r| (r.e_delta - stieltjes_t(r.delta, r.alpha)).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_sweep() -> ExperimentConfig {
        ExperimentConfig {
            delta: vec![0.1, 0.5],
            p_list: vec![10, 20],
            trials: 2,
            ..Default::default()
        }
    }

    #[test]
    fn single_trial_single_row() {
        let cfg = ExperimentConfig {
            p_list: vec![10],
            trials: 1,
            ..Default::default()
        };
        let out = run_experiment(&cfg).unwrap();
        let rows = out.records().unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].status, "ok");
        assert!(rows[0].dist_sq_norm.unwrap() >= 0.0);
        assert_eq!(rows[0].n, 20);
    }

    #[test]
    fn csv_layout() {
        let out = run_experiment(&small_sweep()).unwrap();
        let text = render_csv(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], CSV_VERSION_LINE);
        assert_eq!(lines[1], RECORD_HEADER.join(","));
        assert_eq!(lines.len(), 2 + 8);
        assert!(!text.contains('\r'));
        // rows ordered by (delta, p, trial)
        let keys: Vec<(String, String, String)> = lines[2..]
            .iter()
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[4].to_string(), f[1].to_string(), f[5].to_string())
            })
            .collect();
        assert_eq!(keys[0].1, "10");
        assert_eq!(keys[2].1, "20");
        assert_eq!(keys[3].2, "1");
    }

    #[test]
    fn svg_has_one_polyline_per_delta() {
        let out = run_experiment(&small_sweep()).unwrap();
        let svg = render_svg(out.records().unwrap());
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn errors_are_recorded_not_raised() {
        let cfg = ExperimentConfig {
            optimizer: TapOptimizerOptions {
                q_init_list: vec![1.5],
                ..Default::default()
            },
            ..Default::default()
        };
        let out = run_experiment(&cfg).unwrap();
        let row = &out.records().unwrap()[0];
        assert!(row.status.starts_with("error:"));
        assert!(row.dist_sq_norm.is_none());
        let text = render_csv(&out).unwrap();
        assert!(text.lines().nth(2).unwrap().contains(",,"));
    }

    #[test]
    fn rs_table_rows() {
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::RsTable,
            alpha: vec![0.5, 2.0, 4.0],
            delta: vec![0.1, 1.0],
            ..Default::default()
        };
        let ExperimentOutput::RsTable(rows) = run_experiment(&cfg).unwrap() else {
            panic!("wrong output");
        };
        assert_eq!(rows.len(), 6);
        assert!(rs_table_max_gap(&rows) <= 1e-12);
        let text = render_csv(&ExperimentOutput::RsTable(rows)).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "alpha,delta,E_delta,sigma_sq,free_energy");
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment":"free-energy","alpha":2,"delta":[0.1,0.5],"p_list":[8],"trials":3,
                "mc":{"samples":2000,"bootstrap_resamples":0}}"#,
        )
        .unwrap();
        assert_eq!(cfg.alpha, vec![2.0]);
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.mc.unwrap().samples, 2000);
        assert!(ExperimentConfig::from_json(r#"{"p_list":[]}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"trials":0}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"delta":-1}"#).is_err());
    }

    #[test]
    fn figure1_preset() {
        let cfg = ExperimentConfig::preset("figure1").unwrap();
        assert_eq!(cfg.alpha, vec![2.0]);
        assert_eq!(cfg.delta, vec![0.1, 0.5]);
        assert_eq!(cfg.p_list.len(), 40);
        assert_eq!(cfg.p_list[39], 400);
        assert_eq!(cfg.trials, 10);
        assert!(ExperimentConfig::preset("nope").is_none());
    }

    #[test]
    fn slope_of_a_line() {
        let pts = [(0, 1.0), (1, 3.0), (2, 5.0)];
        assert!((least_squares_slope(&pts) - 2.0).abs() < 1e-15);
    }
}
