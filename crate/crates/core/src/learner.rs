//! The payoff-based learning loop.
//!
//! Each iteration every player mixes its state by sampling
//! x^i ~ N(μ^i, σ_i(t)·I), observes only the realized value of its own cost
//! (plus the priced constraint violation in coupled mode), and nudges its
//! mean with the score-weighted observation
//!
//!   μ^i ← Proj_{A_i}[ μ^i − γ_i(t+1)·σ_i²(t+1)·Ĵ^0_i·(x^i − μ^i)/σ_i²(t) ],
//!
//! while the dual player prices the constraint from the sampled violation,
//!
//!   λ ← Proj_{≥0}[ λ + β_0(t+1)·g(x(t)) ].
//!
//! Updates are Jacobi-style: all payoffs are evaluated at the same
//! (x(t), λ(t)) before any state moves. A run is a pure function of
//! (game, schedule, iterations, seed).

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::geometry::ConvexSet;
use crate::linalg::{dist, dot, norm};
use crate::record::{RunRecord, RunSummary, TrajectoryRow};
use crate::scalar::{cast, Scalar};
use crate::schedule::{CouplingMode, Schedule};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::time::Instant;

/// Multiplier magnitude above which a single warning is logged. The dual
/// iterate is never truncated; boundedness comes from the theory, not a cap.
pub const LAMBDA_WARN_THRESHOLD: f64 = 1e6;

#[derive(Clone, Debug)]
pub struct LearnerOptions<T> {
    /// Log a full trajectory row every k-th iteration; 0 disables rows.
    pub log_every: u64,
    /// Reference equilibrium; enables the dense error curve and rel_err.
    pub reference: Option<Vec<T>>,
    /// Initial means; defaults to each action set's anchor. Projected on entry.
    pub mu0: Option<Vec<T>>,
    /// Initial multiplier; defaults to zero.
    pub lambda0: Option<Vec<T>>,
    /// Fail on schedule violations instead of warning.
    pub strict_schedule: bool,
}

impl<T> Default for LearnerOptions<T> {
    fn default() -> Self {
        LearnerOptions {
            log_every: 0,
            reference: None,
            mu0: None,
            lambda0: None,
            strict_schedule: false,
        }
    }
}

/// Draws x with blockwise isotropic noise: block i gets standard deviation
/// `sigmas[i]`. The Gaussian draws happen in f64 and are cast once, so a run
/// is reproducible across scalar types up to rounding.
pub fn sample_state<T: Scalar>(
    mu: &[T],
    sigmas: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<T>> {
    if sigmas.is_empty() || !mu.len().is_multiple_of(sigmas.len()) {
        return Err(Error::DimensionMismatch {
            context: "means vs per-player deviations",
            expected: sigmas.len().max(1),
            got: mu.len(),
        });
    }
    if sigmas.iter().any(|s| s.is_nan() || *s <= 0.0) {
        return Err(Error::InvalidParameter(
            "exploration deviation must be positive".into(),
        ));
    }
    let d = mu.len() / sigmas.len();
    let mut x = Vec::with_capacity(mu.len());
    for (i, s) in sigmas.iter().enumerate() {
        for k in 0..d {
            let n: f64 = rng.sample(StandardNormal);
            x.push(mu[i * d + k] + cast::<T>(s * n));
        }
    }
    Ok(x)
}

/// One primal step. The variance ratio σ_next²/σ_curr² is formed explicitly:
/// the estimator is scored against the sampling variance actually used at
/// time t, while the step is the time-(t+1) one.
pub fn primal_update<T: Scalar>(
    mu_i: &[T],
    payoff: T,
    x_i: &[T],
    gamma_next: f64,
    sigma_next: f64,
    sigma_curr: f64,
    set: &ConvexSet<T>,
) -> Result<Vec<T>> {
    if sigma_curr.is_nan() || sigma_curr <= 0.0 {
        return Err(Error::InvalidParameter(
            "current exploration deviation must be positive".into(),
        ));
    }
    if mu_i.len() != x_i.len() {
        return Err(Error::DimensionMismatch {
            context: "mean vs sampled block",
            expected: mu_i.len(),
            got: x_i.len(),
        });
    }
    let ratio = (sigma_next * sigma_next) / (sigma_curr * sigma_curr);
    let step = cast::<T>(gamma_next * ratio) * payoff;
    let raw: Vec<T> = mu_i
        .iter()
        .zip(x_i)
        .map(|(m, x)| *m - step * (*x - *m))
        .collect();
    set.project(&raw)
}

/// One dual step: λ ← max(0, λ + β_0·g).
pub fn dual_update<T: Scalar>(lambda: &[T], g: &[T], beta0: f64) -> Result<Vec<T>> {
    if beta0.is_nan() || beta0 <= 0.0 {
        return Err(Error::InvalidParameter(
            "dual step size must be positive".into(),
        ));
    }
    if lambda.len() != g.len() {
        return Err(Error::DimensionMismatch {
            context: "multiplier vs constraint value",
            expected: lambda.len(),
            got: g.len(),
        });
    }
    Ok(lambda
        .iter()
        .zip(g)
        .map(|(l, gi)| (*l + cast::<T>(beta0) * *gi).max(T::zero()))
        .collect())
}

/// Runs the constrained game: payoffs are J_i(x) + (λ, g(x)) and the dual
/// player prices the constraint. Requires a coupling constraint.
pub fn run_coupled<T: Scalar>(
    game: &GameSpec<T>,
    schedule: &Schedule,
    iters: u64,
    seed: u64,
    opts: &LearnerOptions<T>,
) -> Result<RunRecord> {
    if game.num_constraints() == 0 {
        return Err(Error::InvalidParameter(
            "coupled run on a game without coupling constraints".into(),
        ));
    }
    run_loop(game, schedule, iters, seed, opts, CouplingMode::Coupled)
}

/// Runs an unconstrained game: payoffs are the raw costs, no dual player.
pub fn run_uncoupled<T: Scalar>(
    game: &GameSpec<T>,
    schedule: &Schedule,
    iters: u64,
    seed: u64,
    opts: &LearnerOptions<T>,
) -> Result<RunRecord> {
    if game.num_constraints() != 0 {
        return Err(Error::InvalidParameter(
            "uncoupled run on a game with coupling constraints; build the game without them".into(),
        ));
    }
    run_loop(game, schedule, iters, seed, opts, CouplingMode::Uncoupled)
}

fn run_loop<T: Scalar>(
    game: &GameSpec<T>,
    schedule: &Schedule,
    iters: u64,
    seed: u64,
    opts: &LearnerOptions<T>,
    mode: CouplingMode,
) -> Result<RunRecord> {
    let start = Instant::now();
    let players = game.players();
    let d = game.block_dim();
    let n = game.num_constraints();
    schedule.check_players(players)?;

    let violations = schedule.validate(mode);
    if !violations.is_empty() {
        let joined = violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        if opts.strict_schedule {
            return Err(Error::ScheduleViolation(joined));
        }
        log::warn!("running with an inadmissible schedule: {joined}");
    }

    let mut mu = match &opts.mu0 {
        Some(m0) => game.project_joint(m0)?,
        None => {
            let mut m = Vec::with_capacity(players * d);
            for set in game.action_sets() {
                m.extend(set.project(&set.anchor()?)?);
            }
            m
        }
    };
    let mut lambda: Vec<T> = match &opts.lambda0 {
        Some(l0) => {
            if l0.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "initial multiplier",
                    expected: n,
                    got: l0.len(),
                });
            }
            crate::game::DualVector::new(l0.clone())?.into_vec()
        }
        None => vec![T::zero(); n],
    };

    if let Some(r) = &opts.reference {
        if r.len() != mu.len() {
            return Err(Error::DimensionMismatch {
                context: "reference equilibrium",
                expected: mu.len(),
                got: r.len(),
            });
        }
    }
    let ref_norm = opts.reference.as_ref().map(|r| norm(r).to_f64_lossy());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut errors = Vec::with_capacity(if opts.reference.is_some() {
        iters as usize
    } else {
        0
    });
    let mut payoffs = vec![T::zero(); players];
    let mut sigmas = vec![0.0f64; players];
    let mut warned_lambda = false;

    for t in 0..iters {
        for (i, s) in sigmas.iter_mut().enumerate() {
            *s = schedule.sigma(t, i);
        }
        let x = sample_state(&mu, &sigmas, &mut rng)?;

        // all observations are taken at the same (x(t), λ(t))
        let g_x = match mode {
            CouplingMode::Coupled => game.constraint_values(&x)?,
            CouplingMode::Uncoupled => Vec::new(),
        };
        let penalty = dot(&lambda, &g_x);
        for (i, p) in payoffs.iter_mut().enumerate() {
            *p = game.eval_cost(i, &x)?
                + match mode {
                    CouplingMode::Coupled => penalty,
                    CouplingMode::Uncoupled => T::zero(),
                };
        }

        // Jacobi update: every new block is computed from the time-t state
        let mut mu_next = Vec::with_capacity(players * d);
        for i in 0..players {
            let block = primal_update(
                game.block(&mu, i),
                payoffs[i],
                game.block(&x, i),
                schedule.gamma(t + 1, i),
                schedule.sigma(t + 1, i),
                sigmas[i],
                game.action_set(i)?,
            )?;
            mu_next.extend(block);
        }
        mu = mu_next;
        if mode == CouplingMode::Coupled {
            lambda = dual_update(&lambda, &g_x, schedule.beta_dual(t + 1))?;
        }

        #[cfg(debug_assertions)]
        {
            for (i, set) in game.action_sets().iter().enumerate() {
                debug_assert!(
                    set.contains(game.block(&mu, i), cast::<T>(1e-9))?,
                    "mean left its action set at t={t}"
                );
            }
            debug_assert!(lambda.iter().all(|l| *l >= T::zero()));
        }

        if !warned_lambda {
            let linf = lambda
                .iter()
                .fold(0.0f64, |m, l| m.max(l.to_f64_lossy().abs()));
            if linf > LAMBDA_WARN_THRESHOLD {
                log::warn!("multiplier magnitude {linf:.3e} at t={t}; continuing untruncated");
                warned_lambda = true;
            }
        }

        let rel_err = match (&opts.reference, ref_norm) {
            (Some(r), Some(rn)) => {
                let e = dist(&mu, r).to_f64_lossy();
                errors.push(e);
                if rn > 0.0 {
                    Some(e / rn)
                } else {
                    None
                }
            }
            _ => None,
        };

        if opts.log_every > 0 && (t + 1) % opts.log_every == 0 {
            rows.push(TrajectoryRow {
                t: t + 1,
                mu: mu.iter().map(|v| v.to_f64_lossy()).collect(),
                lambda: lambda.iter().map(|v| v.to_f64_lossy()).collect(),
                x: x.iter().map(|v| v.to_f64_lossy()).collect(),
                payoffs: payoffs.iter().map(|v| v.to_f64_lossy()).collect(),
                g: g_x.iter().map(|v| v.to_f64_lossy()).collect(),
                rel_err,
            });
        }
    }

    let max_violation = match mode {
        CouplingMode::Coupled => Some(
            game.constraint_values(&mu)?
                .iter()
                .fold(0.0f64, |m, g| m.max(g.to_f64_lossy())),
        ),
        CouplingMode::Uncoupled => None,
    };
    let summary = RunSummary {
        iterations: iters,
        final_mu: mu.iter().map(|v| v.to_f64_lossy()).collect(),
        final_lambda: lambda.iter().map(|v| v.to_f64_lossy()).collect(),
        final_rel_err: errors.last().zip(ref_norm).and_then(|(e, rn)| {
            if rn > 0.0 {
                Some(e / rn)
            } else {
                None
            }
        }),
        max_constraint_violation: max_violation,
        wall_secs: start.elapsed().as_secs_f64(),
    };

    Ok(RunRecord {
        config_hash: String::new(),
        seed,
        log_every: opts.log_every,
        rows,
        errors,
        summary,
    })
}

/// Deterministic per-run seed derivation for sweeps: one 64-bit mixing step
/// keyed by the run index, so neighbouring indices give unrelated streams.
pub fn split_seed(master: u64, run_index: u64) -> u64 {
    let mut z = master
        .wrapping_add((run_index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
