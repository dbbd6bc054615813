//! `tap-lab`: command-line front end for the experiments.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tap_core::amp::{amp_run, AmpConfig};
use tap_core::experiments::output::{
    amp_rows, calibration_rows, git_describe, mse_rows, ngd_rows, potential_rows, universality_rows, write_csv_file,
    write_json, RunManifest, AMP_HEADER, CALIBRATION_HEADER, MSE_HEADER, NGD_HEADER, POTENTIAL_HEADER,
    UNIVERSALITY_HEADER,
};
use tap_core::experiments::{
    generate_instance, p_for_delta, run_calibration, run_mse_sweep, run_universality, summarize_mse,
    ExperimentConfig, Instance,
};
use tap_core::free_energy::{min_eigenvalue, EigenMethod, Objective, VariationalState};
use tap_core::ngd::ngd_run;
use tap_core::oracle::{enumerate_posterior, gaussian_posterior};
use tap_core::rs_potential::{GridSpec, RsPotential};
use tap_core::scalar_channel::PriorSpec;

const MAX_ENUMERATION_P: usize = 24;

#[derive(Parser, Debug)]
#[command(name = "tap-lab", version, about = "TAP and mean-field inference experiments for linear models")]
struct Cli {
    /// TOML file with experiment settings; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Selects a single instance from the config.
#[derive(clap::Args, Debug, Clone)]
struct InstanceArgs {
    /// Aspect ratio n/p; defaults to the first entry of `delta_grid`.
    #[arg(long)]
    delta: Option<f64>,
    /// Explicit number of coefficients, overriding `--delta`.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 0)]
    replicate: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ObjectiveArg {
    Tap,
    Mf,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Tap => Objective::Tap,
            ObjectiveArg::Mf => Objective::Mf,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum EigenArg {
    Dense,
    Lanczos,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum OracleKind {
    /// Closed-form posterior; needs a `gaussian:<variance>` prior.
    Gaussian,
    /// Exhaustive sum; needs a discrete prior and small p.
    Enumeration,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replica-symmetric potential on a gamma grid.
    Potential {
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 400)]
        points: usize,
    },
    /// AMP iterates against state evolution.
    Amp {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, default_value_t = 8)]
        iterations: usize,
    },
    /// Natural gradient descent on one instance.
    Ngd {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, value_enum, default_value_t = ObjectiveArg::Tap)]
        objective: ObjectiveArg,
    },
    /// TAP vs mean-field MSE over the delta grid.
    MseSweep,
    /// Posterior inclusion probability calibration.
    Calibrate,
    /// MSE and Hessian minimum eigenvalue across design scenarios.
    Universality,
    /// Smallest Hessian eigenvalue at the converged TAP state.
    Hessian {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, value_enum)]
        method: Option<EigenArg>,
    },
    /// Exact posterior quantities for debugging.
    Oracle {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, value_enum, default_value_t = OracleKind::Gaussian)]
        kind: OracleKind,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Potential { .. } => "potential",
            Command::Amp { .. } => "amp",
            Command::Ngd { .. } => "ngd",
            Command::MseSweep => "mse-sweep",
            Command::Calibrate => "calibrate",
            Command::Universality => "universality",
            Command::Hessian { .. } => "hessian",
            Command::Oracle { .. } => "oracle",
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn first_delta(cfg: &ExperimentConfig, delta: Option<f64>) -> Result<f64> {
    match delta.or_else(|| cfg.delta_grid.first().copied()) {
        Some(d) if d > 0.0 && d.is_finite() => Ok(d),
        Some(d) => bail!("invalid delta {d}"),
        None => bail!("no delta given and delta_grid is empty"),
    }
}

fn instance(cfg: &ExperimentConfig, args: &InstanceArgs) -> Result<Instance> {
    let p = match args.p.or(cfg.p) {
        Some(p) => p,
        None => p_for_delta(cfg.n, first_delta(cfg, args.delta)?),
    };
    if p == 0 {
        bail!("p must be positive");
    }
    Ok(generate_instance(cfg, p, args.replicate)?)
}

fn fit_state(cfg: &ExperimentConfig, inst: &Instance, objective: Objective) -> Result<tap_core::ngd::NgdTrace> {
    let prior = cfg.prior_spec()?.to_prior_with_nodes(cfg.prior_nodes)?;
    let init = if cfg.amp_warm_start > 0 {
        let amp_cfg = AmpConfig {
            iterations: cfg.amp_warm_start,
            track_gradient: false,
            ..AmpConfig::default()
        };
        amp_run(&inst.model, &prior, &cfg.quadrature()?, &amp_cfg, None)?.to_variational(&prior)?
    } else {
        VariationalState::null_state(&prior, inst.model.p())
    };
    Ok(ngd_run(&inst.model, &prior, init, &cfg.ngd_config().with_objective(objective))?)
}

fn run(cmd: &Command, cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = cfg.output_dir.as_path();
    let path = |name: &str| dir.join(name);
    let mut outputs = Vec::new();
    match cmd {
        Command::Potential { delta, points } => {
            let delta = first_delta(cfg, *delta)?;
            let prior = cfg.prior_spec()?.to_prior_with_nodes(cfg.prior_nodes)?;
            let pot = RsPotential::new(prior, cfg.sigma2(), delta, cfg.quadrature()?)?;
            let grid = GridSpec {
                points: *points,
                ..GridSpec::default()
            };
            let profile = pot.solve_gammas(&grid)?;
            outputs.push(path("potential.csv"));
            write_csv_file(&outputs[0], &POTENTIAL_HEADER, potential_rows(&profile))?;
            outputs.push(path("potential.json"));
            let summary = json!({
                "gamma_stat": profile.gamma_stat,
                "gamma_alg": profile.gamma_alg,
                "regime": profile.regime,
                "delta": delta,
                "local_minima": profile.local_minima,
            });
            write_json(&outputs[1], &summary)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Amp { inst, iterations } => {
            let inst = instance(cfg, inst)?;
            let prior = cfg.prior_spec()?.to_prior_with_nodes(cfg.prior_nodes)?;
            let amp_cfg = AmpConfig {
                iterations: *iterations,
                ..AmpConfig::default()
            };
            let state = amp_run(&inst.model, &prior, &cfg.quadrature()?, &amp_cfg, Some(&inst.truth))?;
            outputs.push(path("amp.csv"));
            write_csv_file(&outputs[0], &AMP_HEADER, amp_rows(&state.history))?;
        }
        Command::Ngd { inst, objective } => {
            let inst = instance(cfg, inst)?;
            let trace = fit_state(cfg, &inst, (*objective).into())?;
            outputs.push(path("ngd.csv"));
            write_csv_file(&outputs[0], &NGD_HEADER, ngd_rows(&trace.records))?;
            outputs.push(path("ngd_state.json"));
            write_json(&outputs[1], &trace.state.snapshot())?;
            println!(
                "{}",
                json!({
                    "termination": trace.termination,
                    "steps": trace.steps(),
                    "f_value": trace.final_value(),
                    "grad_norm_sq_per_p": trace.final_grad_norm_sq_per_p(),
                    "projections": trace.projections,
                    "mse": (trace.state.m() - &inst.truth).norm_squared() / inst.truth.len() as f64,
                })
            );
        }
        Command::MseSweep => {
            let rows = run_mse_sweep(cfg)?;
            outputs.push(path("mse.csv"));
            write_csv_file(&outputs[0], &MSE_HEADER, mse_rows(&rows))?;
            outputs.push(path("mse_summary.json"));
            write_json(&outputs[1], &summarize_mse(&rows))?;
        }
        Command::Calibrate => {
            let res = run_calibration(cfg)?;
            let mut rows = Vec::new();
            for (method, table) in [("TAP", &res.tap), ("MF", &res.mf)] {
                if let Some(t) = table {
                    rows.extend(calibration_rows(method, t));
                }
            }
            outputs.push(path("calibration.csv"));
            write_csv_file(&outputs[0], &CALIBRATION_HEADER, rows)?;
        }
        Command::Universality => {
            let rows = run_universality(cfg)?;
            outputs.push(path("universality.csv"));
            write_csv_file(&outputs[0], &UNIVERSALITY_HEADER, universality_rows(&rows))?;
        }
        Command::Hessian { inst, method } => {
            let inst = instance(cfg, inst)?;
            let trace = fit_state(cfg, &inst, Objective::Tap)?;
            let prior = cfg.prior_spec()?.to_prior_with_nodes(cfg.prior_nodes)?;
            let method = match method {
                Some(EigenArg::Dense) => EigenMethod::Dense,
                Some(EigenArg::Lanczos) => EigenMethod::Lanczos,
                None => cfg.eigen_method,
            };
            let eig = min_eigenvalue(&inst.model, &prior, &trace.state, method)?;
            let report = json!({
                "min_eig": eig.min_eig,
                "method": eig.method,
                "iterations": eig.iterations,
                "converged": eig.converged,
            });
            outputs.push(path("hessian.json"));
            write_json(&outputs[0], &report)?;
            println!("{report}");
        }
        Command::Oracle { inst, kind } => {
            let inst = instance(cfg, inst)?;
            let spec = cfg.prior_spec()?;
            let report = match kind {
                OracleKind::Gaussian => {
                    let PriorSpec::Gaussian { variance } = spec else {
                        bail!("the gaussian oracle needs a `gaussian:<variance>` prior");
                    };
                    let o = gaussian_posterior(&inst.model, variance)?;
                    json!({
                        "kind": "gaussian",
                        "log_evidence": o.log_evidence,
                        "v_star": o.v_star,
                        "post_mean": o.post_mean.as_slice(),
                        "post_var": o.variances().as_slice(),
                    })
                }
                OracleKind::Enumeration => {
                    let prior = spec.to_prior_with_nodes(cfg.prior_nodes)?;
                    let e = enumerate_posterior(&inst.model, &prior, MAX_ENUMERATION_P)?;
                    json!({
                        "kind": "enumeration",
                        "log_evidence": e.log_evidence,
                        "configurations": e.configurations,
                        "marginal_m": e.marginal_m.as_slice(),
                        "marginal_s": e.marginal_s.as_slice(),
                    })
                }
            };
            outputs.push(path("oracle.json"));
            write_json(&outputs[0], &report)?;
        }
    }
    Ok(outputs)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = load_config(&cli)?;
    let start = Instant::now();
    let outputs = run(&cli.command, &cfg)?;
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config: serde_json::to_value(&cfg)?,
        git_describe: git_describe(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        outputs,
    };
    let manifest_path = Path::new(&cfg.output_dir).join(format!("manifest-{}.json", manifest.command));
    write_json(&manifest_path, &manifest)?;
    for p in &manifest.outputs {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}
