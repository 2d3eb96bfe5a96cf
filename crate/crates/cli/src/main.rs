use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use tapreg::asymptotics::ridge_asymptotics;
use tapreg::experiment::{
    render_csv, run_experiment, trial_stream, write_outputs, ExperimentConfig, ExperimentKind,
};
use tapreg::replica::solve_fixed_point;
use tapreg::ridge::{
    gaussian_log_partition, mc_gaussian_free_energy, mc_spherical_free_energy, ridge_from_gram,
    tap_ridge_distance,
};
use tapreg::sphere::maximize_tap_with;
use tapreg::tap::{f_tap, TapObjective};
use tapreg::{generate_instance, Error, ModelParams, ProblemInstance};

#[derive(Parser, Debug)]
#[command(name = "tapreg", version, about = "TAP free energy experiments for spherical-prior linear regression")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Aspect ratio N/p; comma-separated list for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Noise variance; comma-separated list for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    delta: Vec<f64>,
    /// Dimension; comma-separated list for sweeps.
    #[arg(long, global = true, value_delimiter = ',')]
    p: Vec<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON experiment config supplying defaults for every flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "TAPREG_THREADS")]
    threads: Option<usize>,
    /// SVG chart path (experiment sweeps only).
    #[arg(long, global = true)]
    plot: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Copy)]
struct InstanceSel {
    /// Trial index selecting the instance substream.
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw an instance and write it as JSON.
    Generate(InstanceSel),
    /// Maximize the TAP functional on one instance.
    TapOpt {
        #[command(flatten)]
        sel: InstanceSel,
        /// Read the instance from a JSON file instead of generating it.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Ridge estimator statistics and their asymptotic limits.
    Ridge {
        #[command(flatten)]
        sel: InstanceSel,
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Replica-symmetric fixed point and free energy.
    Rs,
    /// Monte Carlo free energy of one instance.
    Mc {
        #[command(flatten)]
        sel: InstanceSel,
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Prior::Sphere)]
        prior: Prior,
        #[arg(long)]
        samples: Option<usize>,
        /// Bootstrap resamples; 0 disables the interval.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Curvature along the bottom eigenvector over a grid of overlaps.
    Probe {
        /// Overlap grid, comma-separated.
        #[arg(long, value_delimiter = ',')]
        q: Vec<f64>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Run a configured sweep and write CSV (and optionally SVG).
    Experiment {
        /// Named preset, e.g. `figure1`.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_enum)]
        kind: Option<Kind>,
        #[arg(long)]
        trials: Option<usize>,
        /// Record per-row wall-clock time.
        #[arg(long)]
        timing: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Prior {
    Sphere,
    Gaussian,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Corollary1,
    FreeEnergy,
    RsTable,
    Concavity,
    Profile,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Corollary1 => ExperimentKind::Corollary1,
            Kind::FreeEnergy => ExperimentKind::FreeEnergy,
            Kind::RsTable => ExperimentKind::RsTable,
            Kind::Concavity => ExperimentKind::Concavity,
            Kind::Profile => ExperimentKind::Profile,
        }
    }
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::Json(_) | Error::Io(_) | Error::DimensionMismatch { .. } => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let preset = match &cli.command {
        Command::Experiment { preset, .. } => preset.as_deref(),
        _ => None,
    };
    let mut cfg = base_config(&cli.common, preset)?;
    match cli.command {
        Command::Generate(sel) => {
            let inst = instance(&cfg, sel, None)?;
            emit(cli.common.out.as_deref(), &format!("{}\n", inst.to_json()?))
        }
        Command::TapOpt { sel, instance: path } => {
            let inst = instance(&cfg, sel, path.as_deref())?;
            let obj = TapObjective::new(&inst);
            let a_ridge = ridge_from_gram(obj.gram(), obj.xty(), inst.params().delta)?;
            let opt = maximize_tap_with(&inst, &obj, &a_ridge, &cfg.optimizer)?;
            let report = json!({
                "p": inst.p(),
                "n": inst.n(),
                "alpha": inst.params().alpha,
                "delta": inst.params().delta,
                "f_value": opt.f_value,
                "f_tap_ridge": f_tap(&a_ridge, &inst)?.value.to_f64(),
                "rs_free_energy": tapreg::replica::rs_free_energy(inst.params().alpha, inst.params().delta)?,
                "q_final": opt.q_final,
                "grad_norm": opt.grad_norm,
                "iterations": opt.iterations,
                "restarts_used": opt.restarts_used,
                "converged": opt.converged,
                "dist_sq_norm": tap_ridge_distance(&opt.a_hat, &a_ridge)?,
                "a_hat": opt.a_hat.as_slice(),
            });
            emit_json(cli.common.out.as_deref(), &report)
        }
        Command::Ridge { sel, instance: path } => {
            let inst = instance(&cfg, sel, path.as_deref())?;
            let sol = tapreg::ridge::ridge_solve(&inst)?;
            let prm = inst.params();
            let report = json!({
                "p": inst.p(),
                "n": inst.n(),
                "alpha": prm.alpha,
                "delta": prm.delta,
                "norm_sq_over_p": sol.norm_sq_over_p,
                "residual_over_p": sol.residual_over_p,
                "f_tap_ridge": f_tap(&sol.a_delta, &inst)?.value.to_f64(),
                "gauss_free_energy": gaussian_log_partition(&inst)?.value,
                "limits": ridge_asymptotics(prm.alpha, prm.delta),
            });
            emit_json(cli.common.out.as_deref(), &report)
        }
        Command::Rs => {
            let rows: Vec<Value> = cfg
                .alpha
                .iter()
                .flat_map(|&a| cfg.delta.iter().map(move |&d| (a, d)))
                .map(|(a, d)| solve_fixed_point(a, d).map(|s| json!(s)))
                .collect::<tapreg::Result<_>>()?;
            let value = if rows.len() == 1 { rows[0].clone() } else { Value::Array(rows) };
            emit_json(cli.common.out.as_deref(), &value)
        }
        Command::Mc {
            sel,
            instance: path,
            prior,
            samples,
            bootstrap,
        } => {
            let inst = instance(&cfg, sel, path.as_deref())?;
            let mut opts = cfg.mc.unwrap_or_default();
            if let Some(s) = samples {
                opts.samples = s;
            }
            if let Some(b) = bootstrap {
                opts.bootstrap_resamples = b;
            }
            let est = match prior {
                Prior::Sphere => mc_spherical_free_energy(&inst, &opts, inst.stream_tag())?,
                Prior::Gaussian => mc_gaussian_free_energy(&inst, &opts, inst.stream_tag())?,
            };
            let report = json!({
                "p": inst.p(),
                "estimate": est,
                "gauss_free_energy": gaussian_log_partition(&inst)?.value,
            });
            emit_json(cli.common.out.as_deref(), &report)
        }
        Command::Probe { q, trials } => {
            cfg.experiment = ExperimentKind::Concavity;
            if !q.is_empty() {
                cfg.q_grid = q;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            let out = run_experiment(&cfg)?;
            emit(cli.common.out.as_deref(), &render_csv(&out)?)
        }
        Command::Experiment {
            kind,
            trials,
            timing,
            ..
        } => {
            if let Some(k) = kind {
                cfg.experiment = k.into();
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            cfg.timing |= timing;
            if let Some(path) = cli.common.out {
                cfg.output.csv = Some(path);
            }
            if let Some(path) = cli.common.plot {
                cfg.output.svg = Some(path);
            }
            let out = run_experiment(&cfg)?;
            if cfg.output.csv.is_none() {
                print!("{}", render_csv(&out)?);
            }
            let written = write_outputs(&out, &cfg)?;
            for path in [written.csv, written.svg].into_iter().flatten() {
                eprintln!("wrote {}", path.display());
            }
            if let Some(rows) = out.records() {
                let failed = rows.iter().filter(|r| r.status != "ok").count();
                if failed > 0 {
                    return Err(Failure::Numerical(format!("{failed} of {} rows failed", rows.len())));
                }
            }
            Ok(())
        }
    }
}

fn base_config(common: &Common, preset: Option<&str>) -> CliResult<ExperimentConfig> {
    let mut cfg = match (&common.config, preset) {
        (Some(_), Some(_)) => return Err(Failure::Usage("--config and --preset are exclusive".into())),
        (Some(path), None) => ExperimentConfig::from_json(&fs::read_to_string(path).map_err(|e| {
            Failure::Usage(format!("cannot read {}: {e}", path.display()))
        })?)?,
        (None, Some(name)) => ExperimentConfig::preset(name)
            .ok_or_else(|| Failure::Usage(format!("unknown preset `{name}`")))?,
        (None, None) => ExperimentConfig::default(),
    };
    if !common.alpha.is_empty() {
        cfg.alpha = common.alpha.clone();
    }
    if !common.delta.is_empty() {
        cfg.delta = common.delta.clone();
    }
    if !common.p.is_empty() {
        cfg.p_list = common.p.clone();
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn single<T: Copy + std::fmt::Display>(name: &str, values: &[T]) -> CliResult<T> {
    match values {
        [v] => Ok(*v),
        _ => Err(Failure::Usage(format!("--{name} takes a single value for this subcommand"))),
    }
}

fn instance(cfg: &ExperimentConfig, sel: InstanceSel, path: Option<&Path>) -> CliResult<ProblemInstance> {
    if let Some(path) = path {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        return Ok(ProblemInstance::from_json(&text)?);
    }
    let p = single("p", &cfg.p_list)?;
    let params = ModelParams::new(p, single("alpha", &cfg.alpha)?, single("delta", &cfg.delta)?, cfg.master_seed)?;
    Ok(generate_instance(&params, trial_stream(p, sel.trial))?)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| {
            print!("{text}");
            Failure::Usage(format!("cannot write {}: {e}", path.display()))
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(out: Option<&Path>, value: &Value) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    text.push('\n');
    emit(out, &text)
}
