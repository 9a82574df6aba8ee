use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

use brwre::analytics::{annealed_summary, speed_inequality_report, solve_theta_star};
use brwre::brw::{fit_log_correction, Backend, PruneConfig};
use brwre::config::Config;
use brwre::env::PointProcessLaw;
use brwre::error::{Error, Result};
use brwre::gamma::{estimate_gamma, log_grid};
use brwre::parallel::Executor;
use brwre::report::{gamma_table, write_csv, EstimateRow, SimulationReport};
use brwre::rwre::{persistence_exponent, BarrierSide, BarrierSpec, OffsetRule};
use brwre::verify::{
    dekking_host_check, exact_frontier_probability, many_to_one_catalogue, EnumerableInstance,
};

#[derive(Parser)]
#[command(name = "brwre", version, about = "branching random walk in random environment lab")]
struct Cli {
    /// TOML run configuration (defaults are used when omitted)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// overrides the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (0 = all cores); BRWRE_WORKERS is the fallback
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// JSON report destination
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV estimate-grid destination (commands with a grid)
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// closed-form annealed quantities for the configured model
    Analyze {
        /// reuse a known gamma instead of running the Monte Carlo
        #[arg(long)]
        gamma_hat: Option<f64>,
    },
    /// Monte Carlo estimate of gamma(beta) over the configured beta list
    Gamma,
    /// annealed persistence probabilities of the tilted walk and their decay
    Ballot,
    /// maximal-displacement centering: median(M_n - K_n/theta*) against log n
    Brw,
    /// exact identities and inequalities at enumerable scale
    Verify,
    /// validate a stored report and print its deterministic fingerprint
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn resolve_workers(cli: &Cli, cfg: &Config) -> usize {
    cli.workers
        .or_else(|| std::env::var("BRWRE_WORKERS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(cfg.workers)
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let workers = resolve_workers(cli, &cfg);
    let exec = Executor::new(workers);
    let model = cfg.model.resolve()?;
    let start = Instant::now();

    let (name, results, rows): (&str, serde_json::Value, Vec<EstimateRow>) = match &cli.command {
        Command::Analyze { gamma_hat } => {
            let gamma = match gamma_hat {
                Some(g) => *g,
                None => {
                    // gamma at the model's own noise ratio
                    let s = annealed_summary(&model, 0.5)?;
                    let beta = (s.sigma_a2 / s.sigma_q2).sqrt();
                    let grid = log_grid(cfg.gamma.t_min, cfg.gamma.t_max, cfg.gamma.grid_points);
                    let est = estimate_gamma(
                        beta,
                        &grid,
                        cfg.gamma.dt,
                        cfg.gamma.environments,
                        cfg.gamma.paths_per_cell,
                        cfg.seed,
                        &exec,
                    )?;
                    if est.under_resolved {
                        return Err(Error::UnderResolved(format!(
                            "gamma({beta:.4}): {}/{} cells dropped",
                            est.dropped_cells, est.total_cells
                        )));
                    }
                    est.gamma_hat
                }
            };
            let summary = annealed_summary(&model, gamma)?;
            let speed = speed_inequality_report(&model).ok();
            (
                "analyze",
                serde_json::json!({ "summary": summary, "speed": speed }),
                Vec::new(),
            )
        }
        Command::Gamma => {
            let grid = log_grid(cfg.gamma.t_min, cfg.gamma.t_max, cfg.gamma.grid_points);
            let mut table = Vec::new();
            let mut rows = Vec::new();
            for &beta in &cfg.gamma.beta {
                let est = estimate_gamma(
                    beta,
                    &grid,
                    cfg.gamma.dt,
                    cfg.gamma.environments,
                    cfg.gamma.paths_per_cell,
                    cfg.seed,
                    &exec,
                )?;
                if est.under_resolved {
                    return Err(Error::UnderResolved(format!(
                        "gamma({beta}): {}/{} cells dropped",
                        est.dropped_cells, est.total_cells
                    )));
                }
                rows.push(EstimateRow {
                    keys: vec![("beta".into(), format!("{beta}"))],
                    estimate: est.gamma_hat,
                    stderr: est.stderr,
                    replicates: (cfg.gamma.environments * cfg.gamma.paths_per_cell) as u64,
                    seed: cfg.seed,
                });
                table.push((beta, est.gamma_hat, est.stderr));
            }
            ("gamma", gamma_table(&table), rows)
        }
        Command::Ballot => {
            let barrier = BarrierSpec::constant(BarrierSide::StayAbove);
            let res = persistence_exponent(
                &model,
                &cfg.ballot.n_grid,
                OffsetRule::Fixed(cfg.ballot.x),
                &barrier,
                cfg.ballot.replicates,
                cfg.seed,
                &exec,
            )?;
            let rows = res
                .cells
                .iter()
                .map(|(n, e)| EstimateRow {
                    keys: vec![("n".into(), format!("{n}"))],
                    estimate: e.p,
                    stderr: e.stderr,
                    replicates: e.replicates,
                    seed: cfg.seed,
                })
                .collect();
            ("ballot", serde_json::json!({ "fit": res.fit, "cells": res.cells }), rows)
        }
        Command::Brw => {
            let backend = match cfg.brw.backend.as_str() {
                "recursion" => Backend::Recursion { dx: cfg.brw.dx, lookahead: 2.0 },
                _ => {
                    let theta = solve_theta_star(&model)?;
                    let n_max = cfg.brw.n_grid.last().copied().unwrap_or(64);
                    Backend::Particle {
                        prune: PruneConfig {
                            cap: cfg.brw.prune_cap,
                            ..PruneConfig::for_fit(theta, n_max)
                        },
                    }
                }
            };
            let fit = fit_log_correction(
                &model,
                &cfg.brw.n_grid,
                cfg.brw.replicates_per_n,
                &backend,
                cfg.seed,
                &exec,
            )?;
            if fit.under_resolved {
                return Err(Error::UnderResolved("median spread too large".into()));
            }
            let rows = fit
                .per_n
                .iter()
                .map(|&(n, m, se)| EstimateRow {
                    keys: vec![("n".into(), format!("{n}"))],
                    estimate: m,
                    stderr: se,
                    replicates: cfg.brw.replicates_per_n as u64,
                    seed: cfg.seed,
                })
                .collect();
            (
                "brw",
                serde_json::json!({ "fit": fit.fit, "per_n": fit.per_n, "phi_hat": -fit.fit.slope }),
                rows,
            )
        }
        Command::Verify => {
            let reports = many_to_one_catalogue(cfg.verify.catalogue_seed)?;
            let worst = reports.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
            let dh = dekking_host_check(
                &model,
                cfg.verify.dekking_host_n,
                cfg.verify.dekking_host_replicates,
                cfg.brw.prune_cap,
                cfg.seed,
                &exec,
            )
            .ok();
            let law = PointProcessLaw::mixture(vec![(0.5, vec![1.0, -1.0]), (0.5, vec![0.0])]);
            let inst = EnumerableInstance::new(vec![law; 6])?;
            let frontier = exact_frontier_probability(&inst, &[0.5, 1.0, 2.0, 3.0])?;
            (
                "verify",
                serde_json::json!({
                    "many_to_one_checks": reports.len(),
                    "many_to_one_worst_gap": worst,
                    "dekking_host": dh,
                    "frontier": frontier,
                }),
                Vec::new(),
            )
        }
        Command::Report { input } => {
            let rep = SimulationReport::read_json(input)?;
            println!("schema  {}", rep.schema);
            println!("command {}", rep.payload.command);
            println!("seed    {}", rep.payload.seed);
            println!("fingerprint {}", rep.payload_fingerprint());
            return Ok(());
        }
    };

    let wall = start.elapsed().as_millis() as u64;
    let report = SimulationReport::new(name, cfg.seed, results, workers, wall);
    println!("{}", serde_json::to_string_pretty(&report.payload.results).unwrap());
    if let Some(path) = &cli.out {
        report.write_json(path)?;
    }
    if let Some(path) = &cli.csv {
        if rows.is_empty() {
            return Err(Error::Report("this command produces no estimate grid".into()));
        }
        write_csv(path, &rows)?;
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
