//! Experiment execution: a single run, or a sweep over derived seeds.
//!
//! The runner wires a config end to end: build the game, solve for the
//! reference equilibrium when gradients are available, hand everything to
//! the learner, and persist a trajectory CSV plus a JSON summary. Sweeps
//! run seeds in parallel and aggregate only terminal statistics, so their
//! summaries are deterministic no matter how the runs were scheduled.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiments::config::Config;
use crate::game::GameSpec;
use crate::learner::{run_coupled, run_uncoupled, split_seed, LearnerOptions};
use crate::oracle::{solve_vi_with, EquilibriumCertificate, OracleOptions};
use crate::record::{RunRecord, RunSummary};
use crate::schedule::Schedule;
use crate::Real;

pub struct ExperimentOutcome {
    pub record: RunRecord,
    /// Present when the game carries gradient evaluators and the solver ran;
    /// check `accepted` before trusting the action.
    pub certificate: Option<EquilibriumCertificate<Real>>,
    pub csv_path: Option<PathBuf>,
    pub summary_path: Option<PathBuf>,
}

/// Solves for the reference equilibrium when the game supports it. Solver
/// errors degrade to "no reference" with a warning — a learning run is still
/// meaningful without one, it just loses the rel_err column.
pub fn reference_certificate(
    cfg: &Config,
    game: &GameSpec<Real>,
) -> Option<EquilibriumCertificate<Real>> {
    if !game.has_gradients() {
        return None;
    }
    let opts = OracleOptions {
        tol: cfg.oracle.tol,
        max_iters: cfg.oracle.max_iters,
        ..OracleOptions::default()
    };
    match solve_vi_with(game, &opts) {
        Ok(cert) => {
            if !cert.accepted {
                log::warn!(
                    "oracle stopped at residual {:e} without meeting tol {:e}; \
                     running without a reference",
                    cert.residual,
                    cert.tol
                );
            }
            Some(cert)
        }
        Err(e) => {
            log::warn!("oracle unavailable ({e}); running without a reference");
            None
        }
    }
}

fn accepted_action(cert: Option<&EquilibriumCertificate<Real>>) -> Option<Vec<Real>> {
    cert.filter(|c| c.accepted).map(|c| c.action.clone())
}

fn execute(
    cfg: &Config,
    game: &GameSpec<Real>,
    schedule: &Schedule,
    seed: u64,
    reference: Option<&[Real]>,
    strict: bool,
    log_every: u64,
) -> Result<RunRecord> {
    let opts = LearnerOptions {
        log_every,
        reference: reference.map(|r| r.to_vec()),
        mu0: cfg.learner.mu0.clone(),
        lambda0: cfg.learner.lambda0.clone(),
        strict_schedule: strict,
    };
    let mut record = if game.num_constraints() > 0 {
        run_coupled(game, schedule, cfg.learner.iters, seed, &opts)?
    } else {
        run_uncoupled(game, schedule, cfg.learner.iters, seed, &opts)?
    };
    record.config_hash = cfg.hash()?;
    Ok(record)
}

/// Runs the configured experiment once and persists it when `output.dir`
/// is set.
pub fn run_experiment(cfg: &Config, strict: bool) -> Result<ExperimentOutcome> {
    let built = cfg.validate()?;
    let schedule = cfg.schedule(built.game.players())?;
    let certificate = reference_certificate(cfg, &built.game);
    let reference = accepted_action(certificate.as_ref());
    let record = execute(
        cfg,
        &built.game,
        &schedule,
        cfg.learner.seed,
        reference.as_deref(),
        strict,
        cfg.learner.log_every,
    )?;

    let (csv_path, summary_path) = match &cfg.output.dir {
        Some(dir) => {
            let (c, s) = persist_run(dir, &built.game, &record, certificate.as_ref())?;
            (Some(c), Some(s))
        }
        None => (None, None),
    };
    Ok(ExperimentOutcome {
        record,
        certificate,
        csv_path,
        summary_path,
    })
}

/// Stable trajectory schema:
/// `t, mu_1..mu_{Nd}, lambda_1..lambda_n, g_1..g_n, rel_err, payoff_1..payoff_N`.
/// The rel_err field stays empty on runs without a reference. Floats are
/// written with 13 significant digits.
pub fn write_trajectory_csv<W: Write>(
    w: &mut W,
    record: &RunRecord,
    players: usize,
    block_dim: usize,
    constraints: usize,
) -> Result<()> {
    let mut header = String::from("t");
    for k in 1..=players * block_dim {
        header.push_str(&format!(",mu_{k}"));
    }
    for j in 1..=constraints {
        header.push_str(&format!(",lambda_{j}"));
    }
    for j in 1..=constraints {
        header.push_str(&format!(",g_{j}"));
    }
    header.push_str(",rel_err");
    for i in 1..=players {
        header.push_str(&format!(",payoff_{i}"));
    }
    writeln!(w, "{header}")?;

    for row in &record.rows {
        write!(w, "{}", row.t)?;
        for v in &row.mu {
            write!(w, ",{v:.12e}")?;
        }
        for v in &row.lambda {
            write!(w, ",{v:.12e}")?;
        }
        for v in &row.g {
            write!(w, ",{v:.12e}")?;
        }
        match row.rel_err {
            Some(e) => write!(w, ",{e:.12e}")?,
            None => write!(w, ",")?,
        }
        for v in &row.payoffs {
            write!(w, ",{v:.12e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunDoc<'a> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    summary: &'a RunSummary,
    oracle: Option<&'a EquilibriumCertificate<Real>>,
}

fn persist_run(
    dir: &Path,
    game: &GameSpec<Real>,
    record: &RunRecord,
    certificate: Option<&EquilibriumCertificate<Real>>,
) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let stem = format!("run-{}-seed{}", &record.config_hash[..8], record.seed);
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut csv = fs::File::create(&csv_path)?;
    write_trajectory_csv(
        &mut csv,
        record,
        game.players(),
        game.block_dim(),
        game.num_constraints(),
    )?;

    let summary_path = dir.join(format!("{stem}.json"));
    let doc = RunDoc {
        config_hash: &record.config_hash,
        seed: record.seed,
        summary: &record.summary,
        oracle: certificate,
    };
    let file = fs::File::create(&summary_path)?;
    serde_json::to_writer_pretty(file, &doc)?;
    Ok((csv_path, summary_path))
}

/// Order statistics of one terminal metric across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuantileSummary {
    pub min: f64,
    pub q10: f64,
    pub median: f64,
    pub q90: f64,
    pub max: f64,
}

impl QuantileSummary {
    fn from_values(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| a.partial_cmp(b).expect("NaN metric"));
        let q = |p: f64| -> f64 {
            let pos = p * (values.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if lo + 1 < values.len() {
                values[lo] * (1.0 - frac) + values[lo + 1] * frac
            } else {
                values[lo]
            }
        };
        QuantileSummary {
            min: values[0],
            q10: q(0.1),
            median: q(0.5),
            q90: q(0.9),
            max: *values.last().unwrap(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub master_seed: u64,
    pub runs: usize,
    pub iterations: u64,
    pub final_rel_err: Option<QuantileSummary>,
    pub max_constraint_violation: Option<QuantileSummary>,
    pub wall_secs: f64,
}

/// Wall time is measurement noise, not an outcome.
impl PartialEq for SweepSummary {
    fn eq(&self, other: &Self) -> bool {
        self.config_hash == other.config_hash
            && self.master_seed == other.master_seed
            && self.runs == other.runs
            && self.iterations == other.iterations
            && self.final_rel_err == other.final_rel_err
            && self.max_constraint_violation == other.max_constraint_violation
    }
}

pub struct SweepOutcome {
    pub summary: SweepSummary,
    pub records: Vec<RunRecord>,
    pub certificate: Option<EquilibriumCertificate<Real>>,
    pub summary_path: Option<PathBuf>,
}

/// Runs `k` seeds derived from `learner.seed` and aggregates their terminal
/// statistics. The game is built and the oracle solved once; the runs share
/// them read-only. Per-run trajectory logging is disabled — a sweep is about
/// the ensemble, re-run a single seed to inspect a trajectory.
pub fn sweep_seeds(cfg: &Config, k: u64, strict: bool) -> Result<SweepOutcome> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "sweep needs at least one seed".into(),
        ));
    }
    let start = Instant::now();
    let built = cfg.validate()?;
    let schedule = cfg.schedule(built.game.players())?;
    let certificate = reference_certificate(cfg, &built.game);
    let reference = accepted_action(certificate.as_ref());

    let records: Vec<RunRecord> = (0..k)
        .into_par_iter()
        .map(|j| {
            execute(
                cfg,
                &built.game,
                &schedule,
                split_seed(cfg.learner.seed, j),
                reference.as_deref(),
                strict,
                0,
            )
        })
        .collect::<Result<_>>()?;

    let rel_errs: Vec<f64> = records
        .iter()
        .filter_map(|r| r.summary.final_rel_err)
        .collect();
    let violations: Vec<f64> = records
        .iter()
        .filter_map(|r| r.summary.max_constraint_violation)
        .collect();
    let summary = SweepSummary {
        config_hash: cfg.hash()?,
        master_seed: cfg.learner.seed,
        runs: records.len(),
        iterations: cfg.learner.iters,
        final_rel_err: (rel_errs.len() == records.len())
            .then(|| QuantileSummary::from_values(rel_errs)),
        max_constraint_violation: (violations.len() == records.len())
            .then(|| QuantileSummary::from_values(violations)),
        wall_secs: start.elapsed().as_secs_f64(),
    };

    let summary_path = match &cfg.output.dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(format!(
                "sweep-{}-k{}.json",
                &summary.config_hash[..8],
                k
            ));
            let file = fs::File::create(&path)?;
            serde_json::to_writer_pretty(file, &summary)?;
            Some(path)
        }
        None => None,
    };
    Ok(SweepOutcome {
        summary,
        records,
        certificate,
        summary_path,
    })
}
