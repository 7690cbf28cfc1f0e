use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gradtrack::harness::{build_default_config, emit_csv, emit_plot, run_sweep, Experiment, ExperimentConfig};
use gradtrack::method::{rlinear_fit, run, RunOptions, StepKind, StepPolicy, TrackingKind, TrackingVariant};
use gradtrack::network::{window_contraction, NetworkSequence};
use gradtrack::objective::{solve_reference, ObjectiveModel, REFERENCE_TOL};
use gradtrack::theory::lemma4::{lemma4_instance, lemma4_matrix};
use gradtrack::theory::{search_feasible, TheoryInputs};

#[derive(Parser)]
#[command(name = "gradtrack", version, about = "Distributed gradient tracking with uncoordinated step sizes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                ExperimentConfig::from_toml(&text)?
            }
            None => build_default_config(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(max_iter) = self.max_iter {
            cfg.max_iter = max_iter;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(&self.out_dir)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a single cell and write its trajectory.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "ZERO")]
        variant: String,
        #[arg(long, default_value = "CONSTANT")]
        policy: String,
        /// Step upper bound; defaults to `1/L`.
        #[arg(long)]
        d_max: Option<f64>,
    },
    /// Run the full variant × policy × d_max grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Independent seeds `seed, seed + 1, …`, one CSV each.
        #[arg(long, default_value_t = 1)]
        repeats: u64,
    },
    /// Search safeguards satisfying the seven feasibility conditions.
    Theory {
        #[command(flatten)]
        common: Common,
        /// Window length used to estimate ν when `--nu` is not given.
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long = "L")]
        l: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        b: f64,
        /// Iterations over which ν is estimated.
        #[arg(long, default_value_t = 200)]
        horizon: usize,
    },
    /// Scalar quadratics under theta-mixing with a constant step.
    Lemma4 {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0.6)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0 / 3.0 + 1e-3)]
        theta_min: f64,
        #[arg(long, default_value_t = 0.75 - 1e-3)]
        theta_max: f64,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
    },
}

fn parse_variant(s: &str) -> Result<TrackingKind> {
    TrackingKind::parse(s).with_context(|| format!("unknown variant {s:?}"))
}

fn parse_policy(s: &str) -> Result<StepKind> {
    StepKind::parse(s).with_context(|| format!("unknown policy {s:?}"))
}

fn cmd_run(common: &Common, variant: &str, policy: &str, d_max: Option<f64>) -> Result<()> {
    let cfg = common.load()?;
    let (variant, policy) = (parse_variant(variant)?, parse_policy(policy)?);
    let exp = Experiment::new(cfg.clone())?;
    let d_max = d_max.unwrap_or(1.0 / exp.model.l());
    let seq = exp.network(0)?;
    let opts = RunOptions { eps: cfg.eps, max_iter: cfg.max_iter, record: true };
    let rec = run(
        &exp.model,
        &exp.reference,
        &seq,
        exp.variant(variant, d_max)?,
        &exp.policy(policy, d_max)?,
        exp.x0(),
        &opts,
    )?;
    let path = common.out_dir()?.join("trajectory.csv");
    rec.write_trajectory_csv(&path)?;
    let rate = rlinear_fit(&rec.err_max_series()).map(|f| f.rho);
    println!(
        "{}",
        json!({
            "variant": variant.label(),
            "policy": policy.label(),
            "d_max": d_max,
            "L": exp.model.l(),
            "status": rec.status.label(),
            "iterations": rec.iterations,
            "comm_vectors": rec.comm_vectors,
            "rate": rate,
            "trajectory": path.display().to_string(),
        })
    );
    Ok(())
}

fn cmd_sweep(common: &Common, repeats: u64) -> Result<()> {
    if repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    let base = common.load()?;
    let out = common.out_dir()?;
    for r in 0..repeats {
        let cfg = base.with_seed(base.seed + r);
        let res = run_sweep(&cfg)?;
        let stem = if repeats == 1 { "sweep".to_string() } else { format!("sweep_seed{}", cfg.seed) };
        emit_csv(&res, &out.join(format!("{stem}.csv")))?;
        emit_plot(&res, &out.join(format!("{stem}.svg")))?;
        for s in res.ratios() {
            println!(
                "seed={} variant={} L={:.6e} constant_max={:?} spectral_ratio={:?} line_search_ratio={:?}",
                cfg.seed,
                s.variant.label(),
                res.l,
                s.constant_max,
                s.spectral_ratio(),
                s.line_search_ratio()
            );
        }
        for f in &res.findings {
            println!("finding: {f}");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_theory(
    common: &Common,
    m: usize,
    nu: Option<f64>,
    mu: Option<f64>,
    l: Option<f64>,
    b: f64,
    horizon: usize,
) -> Result<()> {
    let cfg = common.load()?;
    let exp = Experiment::new(cfg.clone())?;
    let nu = match nu {
        Some(v) => v,
        None => window_contraction(&exp.network(0)?, horizon, m)?.nu_sup,
    };
    let inputs = TheoryInputs {
        b,
        mu: mu.unwrap_or_else(|| exp.model.mu()),
        l: l.unwrap_or_else(|| exp.model.l()),
        nu,
        n: cfg.n,
        m,
    };
    let report = match search_feasible(&inputs) {
        Ok(p) => serde_json::to_value(&p)?,
        Err(e) => json!({ "inputs": inputs, "error": e.to_string() }),
    };
    let text = serde_json::to_string_pretty(&report)?;
    fs::write(common.out_dir()?.join("theory.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn cmd_lemma4(common: &Common, n: usize, alpha: f64, theta_min: f64, theta_max: f64, iters: usize) -> Result<()> {
    let cfg = common.load()?;
    let (inst, x0) = lemma4_instance(n, cfg.seed)?;
    let model = ObjectiveModel::quadratic(inst)?;
    let reference = solve_reference(&model, REFERENCE_TOL)?;
    let seq = NetworkSequence::theta_mixing(n, theta_min, theta_max, cfg.seed)?;
    let policy = StepPolicy::constant(alpha, alpha)?;
    let opts = RunOptions { eps: 1e-10, max_iter: iters, record: true };
    let rec = run(&model, &reference, &seq, TrackingVariant::zero(), &policy, x0, &opts)?;
    let a0 = lemma4_matrix(seq.theta(0).expect("theta-mixing"), alpha, n)?;
    let worst_norm = (0..iters)
        .map(|k| lemma4_matrix(seq.theta(k).expect("theta-mixing"), alpha, n).map(|s| s.spectral_norm()))
        .collect::<gradtrack::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let path = common.out_dir()?.join("lemma4_trajectory.csv");
    rec.write_trajectory_csv(&path)?;
    println!(
        "{}",
        json!({
            "n": n,
            "alpha": alpha,
            "status": rec.status.label(),
            "iterations": rec.iterations,
            "rate": rlinear_fit(&rec.err_max_series()).map(|f| f.rho),
            "spectral_radius_A0": a0.spectral_radius(),
            "max_spectral_norm": worst_norm,
            "trajectory": path.display().to_string(),
        })
    );
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { common, variant, policy, d_max } => cmd_run(common, variant, policy, *d_max),
        Command::Sweep { common, repeats } => cmd_sweep(common, *repeats),
        Command::Theory { common, m, nu, mu, l, b, horizon } => cmd_theory(common, *m, *nu, *mu, *l, *b, *horizon),
        Command::Lemma4 { common, n, alpha, theta_min, theta_max, iters } => {
            cmd_lemma4(common, *n, *alpha, *theta_min, *theta_max, *iters)
        }
    }
}
