//! gnesim: run and inspect payoff-based equilibrium learning experiments.
//!
//! Exit codes: 0 success, 2 config error, 3 schedule violation (strict run,
//! or `validate` finding any), 4 oracle certificate not accepted, 1 other
//! failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gne::diagnostics::{
    self, rate_fit, recursion_bound_check, MixedQuery, MonotonicityReport, RecursionParams,
};
use gne::experiments::config::{cournot_recipe, BuiltGame, Config};
use gne::experiments::runner::{
    reference_certificate, run_experiment, sweep_seeds, ExperimentOutcome,
};
use gne::oracle::{solve_vi_with, OracleOptions};
use gne::schedule::CouplingMode;
use gne::{Error, Real, Result};

#[derive(Parser)]
#[command(
    name = "gnesim",
    version,
    about = "Payoff-based learning of generalized Nash equilibria"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configured learning experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override learner.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override learner.iters.
        #[arg(long)]
        iters: Option<u64>,
        /// Override output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Refuse schedule violations instead of warning.
        #[arg(long)]
        strict: bool,
    },
    /// Solve the configured game for its reference equilibrium certificate.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a config and its schedule without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run several derived seeds and aggregate terminal statistics.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
    },
    /// Draw a Cournot instance and write a ready-to-run config.
    Cournot {
        #[arg(long)]
        players: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_name = "PATH")]
        emit_config: PathBuf,
    },
    /// Estimator and convergence diagnostics for a configured game.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        check: CheckKind,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CheckKind {
    /// Score estimator of the smoothed-cost gradient vs the exact one.
    Score,
    /// Gradient bias of the smoothed mapping (zero for affine maps).
    Bias,
    /// Monotonicity class of the game mapping.
    Mono,
    /// Fit the ensemble convergence rate against the schedule guarantee.
    Rate,
    /// Step-size comparison recursion at the configured exponents.
    Recursion,
}

const DIAGNOSE_SAMPLES: u64 = 200_000;

struct StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, metadata: &log::Metadata) -> bool {
        metadata.level() <= log::Level::Info
    }

    fn log(&self, record: &log::Record) {
        if self.enabled(record.metadata()) {
            eprintln!("{}: {}", record.level().as_str().to_lowercase(), record.args());
        }
    }

    fn flush(&self) {}
}

static LOGGER: StderrLogger = StderrLogger;

fn main() -> ExitCode {
    let _ = log::set_logger(&LOGGER).map(|()| log::set_max_level(log::LevelFilter::Info));
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::ScheduleViolation(_) => 3,
                _ => 1,
            })
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Run {
            config,
            seed,
            iters,
            out,
            strict,
        } => {
            let mut cfg = Config::from_path(&config)?;
            if let Some(s) = seed {
                cfg.learner.seed = s;
            }
            if let Some(n) = iters {
                cfg.learner.iters = n;
            }
            if let Some(dir) = out {
                cfg.output.dir = Some(dir);
            }
            let outcome = run_experiment(&cfg, strict)?;
            print_run(&outcome)?;
            Ok(0)
        }
        Command::Oracle { config } => {
            let cfg = Config::from_path(&config)?;
            let built = cfg.validate()?;
            let opts = OracleOptions {
                tol: cfg.oracle.tol,
                max_iters: cfg.oracle.max_iters,
                ..OracleOptions::default()
            };
            let cert = solve_vi_with(&built.game, &opts)?;
            println!("{}", serde_json::to_string_pretty(&cert)?);
            if cert.accepted {
                Ok(0)
            } else {
                eprintln!(
                    "certificate rejected: residual {:e} above tol {:e}",
                    cert.residual, cert.tol
                );
                Ok(4)
            }
        }
        Command::Validate { config } => {
            let cfg = Config::from_path(&config)?;
            let built = cfg.validate()?;
            let schedule = cfg.schedule(built.game.players())?;
            let mode = if built.game.num_constraints() > 0 {
                CouplingMode::Coupled
            } else {
                CouplingMode::Uncoupled
            };
            let violations = schedule.validate(mode);
            if violations.is_empty() {
                println!(
                    "ok: {} players, block dim {}, {} coupling rows, schedule admissible",
                    built.game.players(),
                    built.game.block_dim(),
                    built.game.num_constraints()
                );
                Ok(0)
            } else {
                for v in &violations {
                    eprintln!("schedule violates `{}` (value {:.6})", v.condition, v.value);
                }
                Ok(3)
            }
        }
        Command::Sweep { config, seeds } => {
            let cfg = Config::from_path(&config)?;
            let outcome = sweep_seeds(&cfg, seeds, false)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
            Ok(0)
        }
        Command::Cournot {
            players,
            horizon,
            seed,
            emit_config,
        } => {
            let cfg = cournot_recipe(players, horizon, seed)?;
            let text = serde_json::to_string_pretty(&cfg)?;
            std::fs::write(&emit_config, text.as_bytes())?;
            println!(
                "wrote {} ({} players, horizon {}, seed {})",
                emit_config.display(),
                players,
                horizon,
                seed
            );
            Ok(0)
        }
        Command::Diagnose { config, check } => {
            let cfg = Config::from_path(&config)?;
            diagnose(&cfg, check)
        }
    }
}

fn print_run(outcome: &ExperimentOutcome) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(&outcome.record.summary)?);
    if let Some(path) = &outcome.csv_path {
        eprintln!("trajectory: {}", path.display());
    }
    if let Some(path) = &outcome.summary_path {
        eprintln!("summary: {}", path.display());
    }
    Ok(())
}

/// μ from the config or the per-player anchors, λ from the config or zeros:
/// the same defaults the learner starts from.
fn base_query(cfg: &Config, built: &BuiltGame) -> Result<MixedQuery<Real>> {
    let game = &built.game;
    let mu = match &cfg.learner.mu0 {
        Some(m) => game.project_joint(m)?,
        None => {
            let mut mu = Vec::with_capacity(game.joint_dim());
            for i in 0..game.players() {
                mu.extend(game.action_set(i)?.anchor()?);
            }
            mu
        }
    };
    let schedule = cfg.schedule(game.players())?;
    let sigmas: Vec<f64> = (0..game.players()).map(|i| schedule.sigma(0, i)).collect();
    let lambda = cfg
        .learner
        .lambda0
        .clone()
        .unwrap_or_else(|| vec![0.0; game.num_constraints()]);
    Ok(MixedQuery {
        player: 0,
        mu,
        sigmas,
        lambda,
        samples: DIAGNOSE_SAMPLES,
        seed: cfg.learner.seed,
    })
}

fn diagnose(cfg: &Config, check: CheckKind) -> Result<u8> {
    let built = cfg.validate()?;
    match check {
        CheckKind::Score => {
            let quad = built.quadratic.as_ref().ok_or(Error::Unsupported(
                "an explicit quadratic form for the score target",
            ))?;
            let mut query = base_query(cfg, &built)?;
            let mut all_pass = true;
            let mut reports = Vec::new();
            for i in 0..built.game.players() {
                query.player = i;
                let target = diagnostics::score_target_quadratic(quad, &query)?;
                let report =
                    diagnostics::score_gradient_check(&built.game, &query, &target, 3.0)?;
                all_pass &= report.pass;
                reports.push(report);
            }
            if built.game.num_constraints() > 0 {
                let target: Vec<f64> = built.game.constraint_values(&query.mu)?;
                let report =
                    diagnostics::dual_estimator_check(&built.game, &query, &target, 3.0)?;
                all_pass &= report.pass;
                reports.push(report);
            }
            println!("{}", serde_json::to_string_pretty(&reports)?);
            eprintln!(
                "score estimator: {}",
                if all_pass { "unbiased within 3 sigma" } else { "BIASED" }
            );
            Ok(u8::from(!all_pass))
        }
        CheckKind::Bias => {
            let mut query = base_query(cfg, &built)?;
            let mut all_pass = true;
            let mut reports = Vec::new();
            for i in 0..built.game.players() {
                query.player = i;
                let report = diagnostics::bias_term(&built.game, &query, 3.0)?;
                all_pass &= report.pass_zero;
                reports.push(report);
            }
            println!("{}", serde_json::to_string_pretty(&reports)?);
            eprintln!(
                "gradient bias: {}",
                if all_pass { "zero within 3 sigma" } else { "nonzero" }
            );
            Ok(u8::from(!all_pass))
        }
        CheckKind::Mono => {
            let game = &built.game;
            let domain: Vec<_> = (0..game.players())
                .map(|i| game.action_set(i).cloned())
                .collect::<Result<_>>()?;
            let report: MonotonicityReport = diagnostics::monotonicity_classify(
                |a| game.game_mapping(a),
                &domain,
                10_000,
                cfg.learner.seed,
            )?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        CheckKind::Rate => {
            let certificate = reference_certificate(cfg, &built.game);
            if !certificate.as_ref().is_some_and(|c| c.accepted) {
                return Err(Error::Unsupported(
                    "an accepted reference equilibrium for rate fitting",
                ));
            }
            let outcome = sweep_seeds(cfg, diagnostics::RATE_FIT_MIN_RUNS as u64, false)?;
            let curves: Vec<Vec<f64>> =
                outcome.records.into_iter().map(|r| r.errors).collect();
            let schedule = cfg.schedule(built.game.players())?;
            let fit = rate_fit(&curves, &schedule)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            eprintln!(
                "rate: fitted {:.3}, guaranteed {:.3} (+{:.2} margin): {}",
                fit.slope,
                fit.theoretical,
                fit.margin,
                if fit.pass { "pass" } else { "FAIL" }
            );
            Ok(u8::from(!fit.pass))
        }
        CheckKind::Recursion => {
            // The comparison recursion behind the rate guarantee, at the
            // exponent the configured schedule induces: errors contract at
            // 1 − κ/t and accumulate ψ/t^c forcing with c = 2(a+b).
            let c = 2.0 * (cfg.schedule.a + cfg.schedule.b);
            let params = RecursionParams {
                a0: 1.0,
                kappa: 2.0,
                psi: 1.0,
                c,
            };
            let report = recursion_bound_check(&params, 1_000_000)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            eprintln!(
                "recursion bound C/t^{:.2}: {}",
                c - 1.0,
                if report.holds { "holds" } else { "violated" }
            );
            Ok(u8::from(!report.holds))
        }
    }
}
