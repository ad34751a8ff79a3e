use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use serde::Serialize;

use neflow::config::ExperimentConfig;
use neflow::game::{self, CostModel, SolveOptions};
use neflow::linalg::spectral_abscissa;
use neflow::network::check_condition;
use neflow::output;
use neflow::scenarios::ScenarioSpec;
use neflow::sim::{run_experiment, Summary};
use neflow::{Error, Result};

/// Nash-equilibrium seeking over networks with disturbance rejection.
#[derive(Parser)]
#[command(name = "neflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a config and write trajectory.csv, summary.json and plots.
    /// Exits 0 when converged, 2 when not, 1 on error.
    Run {
        config: PathBuf,
        /// Output directory; beats NEFLOW_OUT and the config's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a config entry, e.g. `--set sim.t_end=20`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print μ, θ, λ₂, the network condition and exosystem certificates.
    /// Exits 0 when all hold, 2 otherwise.
    Check {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Solve for the Nash equilibrium of a named scenario.
    Ne {
        /// sensor, osnr or synthetic
        scenario: String,
        #[arg(long)]
        json: bool,
    },
    /// Run one config over several values of a single key.
    Sweep {
        config: PathBuf,
        /// Dotted config key, e.g. `graph.p`.
        #[arg(long)]
        key: String,
        /// Values to try, parsed as JSON where possible.
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            overrides,
        } => cmd_run(&config, out, &overrides),
        Command::Check { config, overrides } => cmd_check(&config, &overrides),
        Command::Ne { scenario, json } => cmd_ne(&scenario, json),
        Command::Sweep {
            config,
            key,
            values,
            jobs,
            out,
        } => cmd_sweep(&config, &key, &values, jobs, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
        cfg = cfg.with_override(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<Summary> {
    let exp = cfg.experiment()?;
    let run = run_experiment(&exp, &cfg.sim)?;
    output::write_run(&exp.system, &run, dir)?;
    Ok(run.summary)
}

fn print_summary(s: &Summary) {
    println!("{} [{}] t_end = {}", s.name, s.law, s.t_end);
    println!("  ne_error        {:.3e}", s.final_ne_error);
    println!("  consensus_error {:.3e}", s.final_consensus_error);
    println!("  velocity_norm   {:.3e}", s.final_velocity_norm);
    println!("  observer_norm   {:.3e}", s.final_observer_norm);
    for (tol, t) in &s.time_to_tol {
        match t {
            Some(t) => println!("  time to {tol}    {t}"),
            None => println!("  time to {tol}    not reached"),
        }
    }
    println!(
        "  converged       {} (tol {:e})",
        if s.converged { "yes" } else { "no" },
        s.convergence_tol
    );
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
}

fn cmd_run(path: &Path, out: Option<PathBuf>, overrides: &[String]) -> Result<u8> {
    let cfg = load(path, overrides)?;
    let dir = out.unwrap_or_else(|| cfg.resolve_output_dir());
    let summary = simulate(&cfg, &dir)?;
    print_summary(&summary);
    println!("  output          {}", dir.display());
    Ok(if summary.converged { 0 } else { 2 })
}

fn cmd_check(path: &Path, overrides: &[String]) -> Result<u8> {
    let cfg = load(path, overrides)?;
    let b = cfg.builder()?;
    let game = &b.game;
    let mut ok = true;
    println!("scenario {}  law {}", cfg.scenario.name(), cfg.law);
    let kind = match game.model() {
        CostModel::Quadratic { .. } => "exact",
        CostModel::General(_) => "sampled: mu is an upper bound, theta a lower bound",
    };
    let (mu, theta) = (game.mu(), game.theta());
    match (mu, theta) {
        (Some(mu), Some(theta)) => println!("mu = {mu}  theta = {theta}  ({kind})"),
        _ => println!("mu/theta unavailable"),
    }
    match &b.graph {
        Some(g) => {
            let l2 = g.lambda2();
            println!(
                "graph: {} vertices, {} edges, connected {}, lambda2 = {l2}",
                g.vertices(),
                g.edge_count(),
                g.connected()
            );
            if let (Some(mu), Some(theta)) = (mu, theta) {
                let c = check_condition(mu, theta, l2);
                println!(
                    "condition mu(lambda2 - theta) > theta^2: margin {} -> {}",
                    c.margin,
                    if c.holds { "holds" } else { "fails" }
                );
                if cfg.law.is_partial() {
                    ok &= c.holds;
                }
                if let CostModel::Quadratic { jacobian, .. } = game.model() {
                    let norm = jacobian.singular_values().max();
                    let alt = check_condition(mu, norm, l2);
                    println!(
                        "  with theta = |A| = {norm}: margin {} -> {}",
                        alt.margin,
                        if alt.holds { "holds" } else { "fails" }
                    );
                }
            }
        }
        None => println!("graph: none"),
    }
    let uses_model = cfg.law.uses_internal_model();
    for (i, exo) in b.disturbances.iter().enumerate() {
        let cert = exo.validate();
        println!(
            "agent {i}: exosystem q = {}, marginally stable {}, observable {}",
            exo.state_dim(),
            cert.marginally_stable,
            cert.observable
        );
        if uses_model {
            ok &= cert.is_valid();
        }
    }
    match b.system() {
        Ok(sys) => {
            for (i, law) in sys.laws().iter().enumerate() {
                if let Some(model) = law.internal_model().filter(|m| m.state_dim() > 0) {
                    println!(
                        "agent {i}: observer abscissa(S - KD) = {:.6}",
                        spectral_abscissa(&model.error_matrix())
                    );
                }
            }
            for w in sys.warnings() {
                println!("warning: {w}");
            }
        }
        Err(e) => {
            println!("system: {e}");
            ok = false;
        }
    }
    Ok(if ok { 0 } else { 2 })
}

#[derive(Serialize)]
struct NeReport {
    scenario: String,
    x_star: Vec<f64>,
    residual: f64,
    mu: Option<f64>,
    theta: Option<f64>,
}

fn cmd_ne(name: &str, json: bool) -> Result<u8> {
    let spec = ScenarioSpec::from_name(name)?;
    let g = spec.game()?;
    let x = game::solve_ne(&g, &SolveOptions::default())?;
    let residual = game::norm(&g.pseudo_gradient(&x)?);
    let report = NeReport {
        scenario: name.to_string(),
        x_star: x,
        residual,
        mu: g.mu(),
        theta: g.theta(),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(0);
    }
    println!("scenario {name}: {} players", g.players());
    for i in 0..g.players() {
        println!("  x*[{i}] = {:?}", &report.x_star[g.layout().range(i)]);
    }
    println!("  |F(x*)| = {residual:e}");
    Ok(0)
}

#[derive(Serialize)]
struct SweepEntry {
    value: String,
    ok: bool,
    error: Option<String>,
    converged: Option<bool>,
    final_ne_error: Option<f64>,
    output: PathBuf,
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cmd_sweep(
    path: &Path,
    key: &str,
    values: &[String],
    jobs: usize,
    out: Option<PathBuf>,
) -> Result<u8> {
    let base = ExperimentConfig::load(path)?;
    let root = out.unwrap_or_else(|| base.resolve_output_dir());
    let configs = values
        .iter()
        .map(|v| base.with_override(key, v))
        .collect::<Result<Vec<_>>>()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SweepEntry>>> =
        Mutex::new((0..values.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, values.len().max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= values.len() {
                    break;
                }
                let dir = root.join(sanitize(&format!("{key}={}", values[k])));
                let entry = match simulate(&configs[k], &dir) {
                    Ok(s) => SweepEntry {
                        value: values[k].clone(),
                        ok: true,
                        error: None,
                        converged: Some(s.converged),
                        final_ne_error: Some(s.final_ne_error),
                        output: dir,
                    },
                    Err(e) => SweepEntry {
                        value: values[k].clone(),
                        ok: false,
                        error: Some(e.to_string()),
                        converged: None,
                        final_ne_error: None,
                        output: dir,
                    },
                };
                results.lock().expect("sweep results")[k] = Some(entry);
            });
        }
    });
    let entries: Vec<SweepEntry> = results
        .into_inner()
        .expect("sweep results")
        .into_iter()
        .map(|e| e.expect("every sweep point ran"))
        .collect();
    std::fs::create_dir_all(&root)?;
    std::fs::write(
        root.join("sweep.json"),
        serde_json::to_string_pretty(&entries)? + "\n",
    )?;
    println!("{key:>16}  converged  ne_error");
    let mut code = 0;
    for e in &entries {
        match (&e.error, e.converged, e.final_ne_error) {
            (None, Some(c), Some(ne)) => {
                println!(
                    "{:>16}  {:>9}  {ne:.3e}",
                    e.value,
                    if c { "yes" } else { "no" }
                );
                if !c && code == 0 {
                    code = 2;
                }
            }
            (err, _, _) => {
                println!(
                    "{:>16}  error: {}",
                    e.value,
                    err.as_deref().unwrap_or("unknown")
                );
                code = 1;
            }
        }
    }
    Ok(code)
}
