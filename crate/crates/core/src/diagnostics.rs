//! Estimator and convergence diagnostics.
//!
//! These are the checks we reach for when a learning run misbehaves: is the
//! one-point payoff estimator actually unbiased, is the game mapping
//! monotone, does the measured convergence rate match what the step-size
//! schedule promises. Everything here is either Monte Carlo over the
//! strategy noise or small dense linear algebra.
//!
//! Monte Carlo results are deterministic for a fixed seed regardless of
//! thread count: samples are drawn in fixed-size blocks, each block gets its
//! own counter-derived RNG, and partial sums are reduced in block order.

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Agent, GameSpec};
use crate::geometry::ConvexSet;
use crate::learner::{sample_state, split_seed};
use crate::linalg::{dot, norm, sub, symmetric_eigenvalues, Mat};
use crate::oracle::probe_affine;
use crate::quadratic::QuadraticGame;
use crate::scalar::Scalar;
use crate::schedule::Schedule;
use rand::SeedableRng;

/// Samples per Monte Carlo block. Block boundaries are part of the sampling
/// scheme, so changing this constant changes results for a given seed.
const MC_BLOCK: u64 = 1 << 16;

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Whether `target` lies within `z` standard errors of the estimate.
    /// A small absolute guard keeps zero-variance estimates usable.
    pub fn covers(&self, target: f64, z: f64) -> bool {
        let band = z * self.stderr + f64::EPSILON * (1.0 + target.abs());
        (self.value - target).abs() <= band
    }
}

/// Where to evaluate a smoothed quantity: strategies x^j ~ N(μ^j, σ_j² I)
/// drawn independently per player, multiplier held fixed at `lambda`.
#[derive(Debug, Clone)]
pub struct MixedQuery<T: Scalar> {
    /// Player whose cost or gradient block is being probed.
    pub player: usize,
    /// Joint mean, length players × block_dim.
    pub mu: Vec<T>,
    /// Per-player sampling deviations, length players.
    pub sigmas: Vec<f64>,
    /// Multiplier, length = number of coupling rows (empty when none).
    pub lambda: Vec<T>,
    pub samples: u64,
    pub seed: u64,
}

impl<T: Scalar> MixedQuery<T> {
    fn validate(&self, game: &GameSpec<T>) -> Result<()> {
        if self.player >= game.players() {
            return Err(Error::IndexOutOfRange {
                context: "player",
                index: self.player,
                size: game.players(),
            });
        }
        if self.mu.len() != game.joint_dim() {
            return Err(Error::DimensionMismatch {
                context: "query mean",
                expected: game.joint_dim(),
                got: self.mu.len(),
            });
        }
        if self.sigmas.len() != game.players() {
            return Err(Error::DimensionMismatch {
                context: "per-player deviations",
                expected: game.players(),
                got: self.sigmas.len(),
            });
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter(
                "sampling deviations must be positive and finite".into(),
            ));
        }
        if self.lambda.len() != game.num_constraints() {
            return Err(Error::DimensionMismatch {
                context: "query multiplier",
                expected: game.num_constraints(),
                got: self.lambda.len(),
            });
        }
        if self.samples == 0 {
            return Err(Error::InvalidParameter(
                "sample count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Coordinatewise mean/stderr of a vector-valued Monte Carlo integrand.
/// `eval` fills `out` (length `dim`) from one draw.
fn mc_vector_stats<F>(dim: usize, samples: u64, seed: u64, eval: F) -> Result<Vec<Estimate>>
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) -> Result<()> + Sync,
{
    let blocks = samples.div_ceil(MC_BLOCK);
    let partials: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, b));
            let count = MC_BLOCK.min(samples - b * MC_BLOCK);
            let mut sum = vec![0.0; dim];
            let mut sumsq = vec![0.0; dim];
            let mut buf = vec![0.0; dim];
            for _ in 0..count {
                eval(&mut rng, &mut buf)?;
                for k in 0..dim {
                    sum[k] += buf[k];
                    sumsq[k] += buf[k] * buf[k];
                }
            }
            Ok((sum, sumsq))
        })
        .collect();

    let mut sum = vec![0.0; dim];
    let mut sumsq = vec![0.0; dim];
    for p in partials {
        let (s, s2) = p?;
        for k in 0..dim {
            sum[k] += s[k];
            sumsq[k] += s2[k];
        }
    }
    let m = samples as f64;
    Ok((0..dim)
        .map(|k| {
            let mean = sum[k] / m;
            let var = if samples > 1 {
                ((sumsq[k] - m * mean * mean) / (m - 1.0)).max(0.0)
            } else {
                0.0
            };
            Estimate {
                value: mean,
                stderr: (var / m).sqrt(),
            }
        })
        .collect())
}

/// Monte Carlo estimate of the smoothed cost seen by the learner,
/// E[J_i(x) + (λ, g(x))] over the strategy noise.
pub fn mixed_cost<T: Scalar>(game: &GameSpec<T>, q: &MixedQuery<T>) -> Result<Estimate> {
    q.validate(game)?;
    let who = Agent::Player(q.player);
    let stats = mc_vector_stats(1, q.samples, q.seed, |rng, out| {
        let x = sample_state(&q.mu, &q.sigmas, rng)?;
        out[0] = game.associated_cost(who, &x, &q.lambda)?.to_f64_lossy();
        Ok(())
    })?;
    Ok(stats[0])
}

/// Exact smoothed cost for a quadratic game: the cost at the mean plus half
/// the trace of P_i against the sampling covariance, plus (λ, Gμ − h). The
/// multiplier term is affine in the strategies, so zero-mean noise leaves it
/// untouched.
pub fn mixed_cost_quadratic<T: Scalar>(
    quad: &QuadraticGame<T>,
    q: &MixedQuery<T>,
) -> Result<f64> {
    check_query_dims(quad, q)?;
    let mut value = quad.smoothed_cost(q.player, &q.mu, &q.sigmas);
    if let Some((g, h)) = quad.constraint() {
        let gv = g.matvec(&q.mu);
        for (j, lam) in q.lambda.iter().enumerate() {
            value += *lam * (gv[j] - h[j]);
        }
    } else if !q.lambda.is_empty() {
        return Err(Error::DimensionMismatch {
            context: "query multiplier",
            expected: 0,
            got: q.lambda.len(),
        });
    }
    Ok(value.to_f64_lossy())
}

/// Exact gradient of the smoothed cost with respect to μ^i for a quadratic
/// game: block i of P_i μ + q_i plus (Gᵀλ)_i. Gaussian smoothing shifts the
/// value of a quadratic but not its gradient in the mean.
pub fn score_target_quadratic<T: Scalar>(
    quad: &QuadraticGame<T>,
    q: &MixedQuery<T>,
) -> Result<Vec<f64>> {
    check_query_dims(quad, q)?;
    let d = quad.joint_dim() / quad.players();
    let mut target: Vec<f64> = quad
        .block_gradient(q.player, &q.mu)
        .into_iter()
        .map(|v| v.to_f64_lossy())
        .collect();
    if let Some((g, _)) = quad.constraint() {
        for (j, lam) in q.lambda.iter().enumerate() {
            for k in 0..d {
                target[k] += (*lam * g[(j, q.player * d + k)]).to_f64_lossy();
            }
        }
    }
    Ok(target)
}

fn check_query_dims<T: Scalar>(quad: &QuadraticGame<T>, q: &MixedQuery<T>) -> Result<()> {
    if q.player >= quad.players() {
        return Err(Error::IndexOutOfRange {
            context: "player",
            index: q.player,
            size: quad.players(),
        });
    }
    if q.mu.len() != quad.joint_dim() {
        return Err(Error::DimensionMismatch {
            context: "query mean",
            expected: quad.joint_dim(),
            got: q.mu.len(),
        });
    }
    if q.sigmas.len() != quad.players() {
        return Err(Error::DimensionMismatch {
            context: "per-player deviations",
            expected: quad.players(),
            got: q.sigmas.len(),
        });
    }
    if let Some((g, _)) = quad.constraint() {
        if q.lambda.len() != g.rows() {
            return Err(Error::DimensionMismatch {
                context: "query multiplier",
                expected: g.rows(),
                got: q.lambda.len(),
            });
        }
    }
    Ok(())
}

/// One coordinate of an estimator-vs-truth comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoordCheck {
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    /// |estimate − target| in standard errors.
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreReport {
    pub coords: Vec<CoordCheck>,
    pub pass: bool,
}

fn coord_checks(stats: &[Estimate], target: &[f64], z_max: f64) -> ScoreReport {
    let coords: Vec<CoordCheck> = stats
        .iter()
        .zip(target)
        .map(|(e, t)| {
            let band = e.stderr + f64::EPSILON * (1.0 + t.abs());
            CoordCheck {
                estimate: e.value,
                stderr: e.stderr,
                target: *t,
                z: (e.value - t).abs() / band,
            }
        })
        .collect();
    let pass = coords.iter().all(|c| c.z <= z_max);
    ScoreReport { coords, pass }
}

/// Checks the one-point score estimator of the smoothed-cost gradient:
/// Ĵ⁰_i · (x^i − μ^i) / σ_i² averaged over draws, coordinate by coordinate
/// against `target` (use [`score_target_quadratic`] when the game is
/// quadratic). A coordinate passes within `z_max` standard errors.
pub fn score_gradient_check<T: Scalar>(
    game: &GameSpec<T>,
    q: &MixedQuery<T>,
    target: &[f64],
    z_max: f64,
) -> Result<ScoreReport> {
    q.validate(game)?;
    let d = game.block_dim();
    if target.len() != d {
        return Err(Error::DimensionMismatch {
            context: "gradient target",
            expected: d,
            got: target.len(),
        });
    }
    let who = Agent::Player(q.player);
    let base = q.player * d;
    let s2 = q.sigmas[q.player] * q.sigmas[q.player];
    let stats = mc_vector_stats(d, q.samples, q.seed, |rng, out| {
        let x = sample_state(&q.mu, &q.sigmas, rng)?;
        let j0 = game.associated_cost(who, &x, &q.lambda)?.to_f64_lossy();
        for k in 0..d {
            let dev = (x[base + k] - q.mu[base + k]).to_f64_lossy();
            out[k] = j0 * dev / s2;
        }
        Ok(())
    })?;
    Ok(coord_checks(&stats, target, z_max))
}

/// Same comparison for the dual side. The dual player's estimator is just
/// g evaluated at the sample, so its mean is checked against `target`
/// (g(μ) itself when g is affine).
pub fn dual_estimator_check<T: Scalar>(
    game: &GameSpec<T>,
    q: &MixedQuery<T>,
    target: &[f64],
    z_max: f64,
) -> Result<ScoreReport> {
    q.validate(game)?;
    let n = game.num_constraints();
    if n == 0 {
        return Err(Error::Unsupported("a coupling constraint"));
    }
    if target.len() != n {
        return Err(Error::DimensionMismatch {
            context: "dual target",
            expected: n,
            got: target.len(),
        });
    }
    let stats = mc_vector_stats(n, q.samples, q.seed, |rng, out| {
        let x = sample_state(&q.mu, &q.sigmas, rng)?;
        let g = game.constraint_values(&x)?;
        for (o, v) in out.iter_mut().zip(&g) {
            *o = v.to_f64_lossy();
        }
        Ok(())
    })?;
    Ok(coord_checks(&stats, target, z_max))
}

#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    /// Per-coordinate mean of the sampled gradient block, compared against
    /// the block evaluated at the mean.
    pub coords: Vec<CoordCheck>,
    /// ℓ2 norm of the estimated bias vector (estimate − target).
    pub norm: f64,
    /// True when every coordinate's bias is within `z_max` standard errors
    /// of zero.
    pub pass_zero: bool,
}

/// Bias of the smoothed own-block gradient: E[M⁰_i(x, λ)] − M⁰_i(μ, λ) with
/// only the strategies randomized. Affine mappings are exactly unbiased;
/// smooth nonlinear ones pick up an O(σ²) term from the curvature.
pub fn bias_term<T: Scalar>(
    game: &GameSpec<T>,
    q: &MixedQuery<T>,
    z_max: f64,
) -> Result<BiasReport> {
    q.validate(game)?;
    let d = game.block_dim();
    let base = q.player * d;
    let at_mean = game.extended_mapping(&q.mu, &q.lambda)?;
    let target: Vec<f64> = at_mean[base..base + d]
        .iter()
        .map(|v| v.to_f64_lossy())
        .collect();
    let stats = mc_vector_stats(d, q.samples, q.seed, |rng, out| {
        let x = sample_state(&q.mu, &q.sigmas, rng)?;
        let full = game.extended_mapping(&x, &q.lambda)?;
        for (o, v) in out.iter_mut().zip(&full[base..base + d]) {
            *o = v.to_f64_lossy();
        }
        Ok(())
    })?;
    let report = coord_checks(&stats, &target, z_max);
    let bias: Vec<f64> = report
        .coords
        .iter()
        .map(|c| c.estimate - c.target)
        .collect();
    Ok(BiasReport {
        norm: norm(&bias),
        pass_zero: report.pass,
        coords: report.coords,
    })
}

/// Fits the σ-exponent of the gradient bias: measures ‖bias‖ at each
/// deviation in `sigma_grid` (applied to every player) and regresses
/// log-norm on log-σ. A bias that is statistically zero at some deviation —
/// as it always is for affine mappings — leaves nothing but sampling noise
/// to fit, so that is an error, not a slope.
pub fn bias_exponent<T: Scalar>(
    game: &GameSpec<T>,
    q: &MixedQuery<T>,
    sigma_grid: &[f64],
) -> Result<f64> {
    if sigma_grid.len() < 2 {
        return Err(Error::InvalidParameter(
            "bias exponent fit needs at least two deviations".into(),
        ));
    }
    let mut norms = Vec::with_capacity(sigma_grid.len());
    for (j, s) in sigma_grid.iter().enumerate() {
        let mut qs = q.clone();
        qs.sigmas = vec![*s; qs.sigmas.len()];
        qs.seed = split_seed(q.seed, j as u64);
        let report = bias_term(game, &qs, 3.0)?;
        if report.pass_zero {
            return Err(Error::InvalidParameter(format!(
                "bias at deviation {s} is statistically zero; no exponent to fit"
            )));
        }
        norms.push(report.norm);
    }
    fit_loglog_slope(sigma_grid, &norms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MonotonicityClass {
    /// (M(x) − M(y), x − y) ≥ κ‖x − y‖² with κ > 0. Exact for affine maps.
    Strong,
    /// Strictly positive on every sampled pair; sampling verdict only.
    Strict,
    Monotone,
    /// Monotonicity fails on some pair but no pseudo-monotonicity
    /// counterexample was found among the samples.
    PseudoUndetermined,
    Violated,
}

/// A sampled pair certifying a violation, with the offending inner product.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityWitness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub inner: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub class: MonotonicityClass,
    /// Strong-monotonicity modulus: smallest eigenvalue of the symmetrized
    /// Jacobian when the map is affine, zero otherwise.
    pub kappa: f64,
    pub affine: bool,
    pub min_symmetric_eigenvalue: Option<f64>,
    pub witness: Option<MonotonicityWitness>,
}

/// Classifies the monotonicity of `map` over the product of `domain` sets.
///
/// Affine maps are detected by probing and classified exactly through the
/// eigenvalues of the symmetrized Jacobian. Anything else is classified by
/// sampling `samples` point pairs; that verdict is one-sided — it can prove
/// a violation but only suggest monotonicity.
pub fn monotonicity_classify<T, F>(
    map: F,
    domain: &[ConvexSet<T>],
    samples: u64,
    seed: u64,
) -> Result<MonotonicityReport>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<Vec<T>>,
{
    if domain.is_empty() {
        return Err(Error::InvalidParameter("empty domain".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter(
            "sample count must be positive".into(),
        ));
    }
    let dim: usize = domain.iter().map(|s| s.dim()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<T>> {
        let mut x = Vec::with_capacity(dim);
        for set in domain {
            x.extend(set.sample(rng)?);
        }
        Ok(x)
    };

    {
        let probe = draw(&mut rng)?;
        let out = map(&probe)?;
        if out.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "mapping output",
                expected: dim,
                got: out.len(),
            });
        }
    }

    if let Some((a, _)) = probe_affine(&map, dim, dim, &mut rng)? {
        return classify_affine(&map, &a, &draw, &mut rng, samples);
    }

    // Sampling path. Pair tolerances scale with the terms entering the
    // inner products so the verdict is insensitive to the map's units.
    let mut all_strict = true;
    let mut worst: Option<MonotonicityWitness> = None;
    let mut pseudo_witness: Option<MonotonicityWitness> = None;
    for _ in 0..samples {
        let x = draw(&mut rng)?;
        let y = draw(&mut rng)?;
        let mx = map(&x)?;
        let my = map(&y)?;
        let dxy = sub(&x, &y);
        let ip = (dot(&sub(&mx, &my), &dxy)).to_f64_lossy();
        let scale = 1.0
            + (norm(&mx).to_f64_lossy() + norm(&my).to_f64_lossy())
                * norm(&dxy).to_f64_lossy();
        let tol = 1e-12 * scale;
        if ip < -tol {
            all_strict = false;
            if worst.as_ref().is_none_or(|w| ip < w.inner) {
                worst = Some(witness_from(&x, &y, ip));
            }
            let my_dir = dot(&my, &dxy).to_f64_lossy();
            let mx_dir = dot(&mx, &dxy).to_f64_lossy();
            if pseudo_witness.is_none() && my_dir >= -tol && mx_dir < -tol {
                pseudo_witness = Some(witness_from(&x, &y, mx_dir));
            }
        } else if ip <= tol {
            all_strict = false;
        }
    }

    let (class, witness) = if let Some(w) = pseudo_witness {
        (MonotonicityClass::Violated, Some(w))
    } else if let Some(w) = worst {
        (MonotonicityClass::PseudoUndetermined, Some(w))
    } else if all_strict {
        (MonotonicityClass::Strict, None)
    } else {
        (MonotonicityClass::Monotone, None)
    };
    Ok(MonotonicityReport {
        class,
        kappa: 0.0,
        affine: false,
        min_symmetric_eigenvalue: None,
        witness,
    })
}

fn witness_from<T: Scalar>(x: &[T], y: &[T], inner: f64) -> MonotonicityWitness {
    MonotonicityWitness {
        x: x.iter().map(|v| v.to_f64_lossy()).collect(),
        y: y.iter().map(|v| v.to_f64_lossy()).collect(),
        inner,
    }
}

fn classify_affine<T, F, D>(
    map: &F,
    a: &Mat<T>,
    draw: &D,
    rng: &mut ChaCha8Rng,
    samples: u64,
) -> Result<MonotonicityReport>
where
    T: Scalar,
    F: Fn(&[T]) -> Result<Vec<T>>,
    D: Fn(&mut ChaCha8Rng) -> Result<Vec<T>>,
{
    let eig = symmetric_eigenvalues(&a.symmetric_part());
    let lambda_min = eig[0].to_f64_lossy();
    let tol = 1e-10 * (1.0 + a.frobenius_norm().to_f64_lossy());
    let (class, kappa) = if lambda_min > tol {
        (MonotonicityClass::Strong, lambda_min)
    } else if lambda_min >= -tol {
        (MonotonicityClass::Monotone, 0.0)
    } else {
        (MonotonicityClass::Violated, 0.0)
    };
    // A violated verdict is already proven by the spectrum; a concrete pair
    // is only a convenience for reporting, so a bounded search suffices.
    let mut witness = None;
    if class == MonotonicityClass::Violated {
        for _ in 0..samples.min(10_000) {
            let x = draw(rng)?;
            let y = draw(rng)?;
            let dxy = sub(&x, &y);
            let ip = dot(&sub(&map(&x)?, &map(&y)?), &dxy).to_f64_lossy();
            if ip < -tol {
                witness = Some(witness_from(&x, &y, ip));
                break;
            }
        }
    }
    Ok(MonotonicityReport {
        class,
        kappa,
        affine: true,
        min_symmetric_eigenvalue: Some(lambda_min),
        witness,
    })
}

pub const RATE_FIT_MARGIN: f64 = 0.15;
pub const RATE_FIT_BURN_IN: u64 = 1_000;
pub const RATE_FIT_MIN_RUNS: usize = 20;
const RATE_FIT_POINTS: usize = 400;

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    /// Fitted log–log slope of the ensemble mean squared error.
    pub slope: f64,
    /// −(2(a+b) − 1), the guaranteed decay exponent for the schedule.
    pub theoretical: f64,
    pub margin: f64,
    pub pass: bool,
    pub runs: usize,
    /// Iteration range the fit used, inclusive.
    pub window: (u64, u64),
}

/// Fits the decay exponent of the ensemble mean squared distance to the
/// reference and compares it against the schedule's guaranteed rate.
///
/// `errors` holds one curve per run; entry t−1 is the distance after
/// iteration t. The transient below [`RATE_FIT_BURN_IN`] is discarded and
/// the fit runs on a log-spaced subsample, so early iterations don't
/// dominate the regression.
pub fn rate_fit(errors: &[Vec<f64>], schedule: &Schedule) -> Result<RateFit> {
    if errors.len() < RATE_FIT_MIN_RUNS {
        return Err(Error::InvalidParameter(format!(
            "rate fit needs at least {} runs, got {}",
            RATE_FIT_MIN_RUNS,
            errors.len()
        )));
    }
    let horizon = errors[0].len();
    if errors.iter().any(|e| e.len() != horizon) {
        return Err(Error::InvalidParameter(
            "error curves have unequal lengths".into(),
        ));
    }
    if (horizon as u64) < RATE_FIT_BURN_IN * 10 {
        return Err(Error::InvalidParameter(format!(
            "horizon {} too short to fit a rate past the {}-iteration burn-in",
            horizon, RATE_FIT_BURN_IN
        )));
    }

    let lo = RATE_FIT_BURN_IN;
    let hi = horizon as u64;
    let (ln_lo, ln_hi) = ((lo as f64).ln(), (hi as f64).ln());
    let mut ts: Vec<u64> = (0..RATE_FIT_POINTS)
        .map(|k| {
            let f = k as f64 / (RATE_FIT_POINTS - 1) as f64;
            (ln_lo + f * (ln_hi - ln_lo)).exp().round() as u64
        })
        .collect();
    ts.dedup();

    let runs = errors.len() as f64;
    let mut xs = Vec::with_capacity(ts.len());
    let mut ys = Vec::with_capacity(ts.len());
    for t in &ts {
        let idx = (*t - 1) as usize;
        let mse: f64 = errors.iter().map(|e| e[idx] * e[idx]).sum::<f64>() / runs;
        if mse > 0.0 {
            xs.push(*t as f64);
            ys.push(mse);
        }
    }
    let slope = fit_loglog_slope(&xs, &ys)?;
    let theoretical = -(2.0 * (schedule.exponent_a() + schedule.exponent_b()) - 1.0);
    Ok(RateFit {
        slope,
        theoretical,
        margin: RATE_FIT_MARGIN,
        pass: slope <= theoretical + RATE_FIT_MARGIN,
        runs: errors.len(),
        window: (lo, hi),
    })
}

/// Parameters of the clamped comparison recursion
/// a_t = max(0, 1 − κ/t)·a_{t−1} + ψ/t^c.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RecursionParams {
    pub a0: f64,
    pub kappa: f64,
    pub psi: f64,
    pub c: f64,
}

impl RecursionParams {
    fn validate(&self) -> Result<()> {
        if !(self.a0 >= 0.0 && self.a0.is_finite()) {
            return Err(Error::InvalidParameter(
                "recursion start must be finite and nonnegative".into(),
            ));
        }
        if !(self.kappa > 1.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(
                "recursion contraction needs kappa > 1".into(),
            ));
        }
        if !(self.psi > 0.0 && self.psi.is_finite()) {
            return Err(Error::InvalidParameter(
                "recursion forcing must be positive".into(),
            ));
        }
        if !(self.c > 1.0 && self.c <= 2.0) {
            return Err(Error::InvalidParameter(
                "recursion exponent must lie in (1, 2]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RecursionViolation {
    pub t: u64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RecursionCheck {
    pub holds: bool,
    /// C = max(a₀, ψ/(κ−1)); the bound checked is C/t^{c−1}.
    pub bound_constant: f64,
    pub first_violation: Option<RecursionViolation>,
}

/// Iterates the recursion to `horizon` and checks a_t ≤ C/t^{c−1} at every
/// step, C = max(a₀, ψ/(κ−1)).
pub fn recursion_bound_check(p: &RecursionParams, horizon: u64) -> Result<RecursionCheck> {
    p.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidParameter(
            "recursion horizon must be positive".into(),
        ));
    }
    let big_c = p.a0.max(p.psi / (p.kappa - 1.0));
    let mut a = p.a0;
    for t in 1..=horizon {
        let tf = t as f64;
        let factor = (1.0 - p.kappa / tf).max(0.0);
        // t^c = t^{c-1} · t keeps this to one powf per step.
        let pow = tf.powf(p.c - 1.0);
        a = factor * a + p.psi / (pow * tf);
        let bound = big_c / pow;
        if a > bound {
            return Ok(RecursionCheck {
                holds: false,
                bound_constant: big_c,
                first_violation: Some(RecursionViolation { t, value: a, bound }),
            });
        }
    }
    Ok(RecursionCheck {
        holds: true,
        bound_constant: big_c,
        first_violation: None,
    })
}

/// ‖μ − reference‖ / ‖reference‖. A numerically zero reference is an error;
/// report absolute distance instead in that case.
pub fn relative_error<T: Scalar>(mu: &[T], reference: &[T]) -> Result<T> {
    if mu.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            context: "relative error",
            expected: reference.len(),
            got: mu.len(),
        });
    }
    let denom = norm(reference);
    if denom.is_nan() || denom <= T::zero() {
        return Err(Error::InvalidParameter(
            "reference has zero norm; relative error is undefined".into(),
        ));
    }
    Ok(norm(&sub(mu, reference)) / denom)
}

/// Least-squares slope of ln(y) on ln(x). Inputs must be positive and the
/// abscissae not all equal.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            context: "log-log fit",
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::InvalidParameter(
            "log-log fit needs at least two points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(
            "log-log fit needs positive finite data".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den <= 0.0 {
        return Err(Error::InvalidParameter(
            "log-log fit abscissae are all equal".into(),
        ));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::cournot;
    use crate::game::GameSpec;
    use approx::assert_relative_eq;

    fn scalar_square_game() -> (GameSpec<f64>, QuadraticGame<f64>) {
        // One player, J(x) = x², box [-10, 10].
        let quad = QuadraticGame::new(
            vec![Mat::from_rows(&[vec![2.0]]).unwrap()],
            vec![vec![0.0]],
            vec![0.0],
            vec![ConvexSet::boxed(vec![-10.0], vec![10.0]).unwrap()],
        )
        .unwrap();
        (quad.clone().into_game_spec().unwrap(), quad)
    }

    fn query(mu: Vec<f64>, sigma: f64, lambda: Vec<f64>, samples: u64) -> MixedQuery<f64> {
        let players = mu.len(); // scalar blocks in every test here
        MixedQuery {
            player: 0,
            mu,
            sigmas: vec![sigma; players],
            lambda,
            samples,
            seed: 42,
        }
    }

    #[test]
    fn mixed_cost_of_a_square_matches_the_closed_form() {
        let (game, quad) = scalar_square_game();
        let q = query(vec![1.5], 0.5, vec![], 200_000);
        // E[x²] = μ² + σ² = 2.25 + 0.25.
        let exact = mixed_cost_quadratic(&quad, &q).unwrap();
        assert_relative_eq!(exact, 2.5, max_relative = 1e-12);
        let est = mixed_cost(&game, &q).unwrap();
        assert!(est.covers(exact, 3.0), "estimate {est:?} vs exact {exact}");
        assert!(est.stderr > 0.0);
    }

    #[test]
    fn mixed_cost_multiplier_term_shifts_by_the_expected_constraint() {
        let (game, _) = cournot::micro_game::<f64>();
        let mu = vec![1.0, 1.0];
        let make = |lam: f64| MixedQuery {
            player: 0,
            mu: mu.clone(),
            sigmas: vec![0.3, 0.3],
            lambda: vec![lam],
            samples: 200_000,
            seed: 7,
        };
        let low = mixed_cost(&game, &make(1.0)).unwrap();
        let high = mixed_cost(&game, &make(2.0)).unwrap();
        // g is affine, so E[g(x)] = g(μ) = 1 + 1 − 3 = −1 and the cost moves
        // by exactly (Δλ, g(μ)).
        let g_mu = game.constraint_values(&mu).unwrap()[0];
        assert_relative_eq!(g_mu, -1.0, epsilon = 1e-12);
        let shift = high.value - low.value;
        assert!(
            (shift - g_mu).abs() <= 3.0 * (low.stderr + high.stderr),
            "shift {shift} vs {g_mu}"
        );
    }

    #[test]
    fn score_estimator_recovers_the_smoothed_gradient() {
        let (game, quad) = scalar_square_game();
        let q = query(vec![1.5], 0.5, vec![], 400_000);
        let target = score_target_quadratic(&quad, &q).unwrap();
        assert_relative_eq!(target[0], 3.0, max_relative = 1e-12);
        let report = score_gradient_check(&game, &q, &target, 3.0).unwrap();
        assert!(report.pass, "{:?}", report.coords);
    }

    #[test]
    fn score_check_flags_a_wrong_target() {
        let (game, _) = scalar_square_game();
        let q = query(vec![1.5], 0.5, vec![], 400_000);
        let report = score_gradient_check(&game, &q, &[4.0], 3.0).unwrap();
        assert!(!report.pass);
    }

    #[test]
    fn dual_estimator_mean_is_the_constraint_at_the_mean() {
        let (game, _) = cournot::micro_game::<f64>();
        let q = MixedQuery {
            player: 0,
            mu: vec![1.0, 1.25],
            sigmas: vec![0.4, 0.4],
            lambda: vec![0.0],
            samples: 200_000,
            seed: 11,
        };
        let target: Vec<f64> = game.constraint_values(&q.mu).unwrap();
        let report = dual_estimator_check(&game, &q, &target, 3.0).unwrap();
        assert!(report.pass, "{:?}", report.coords);
    }

    #[test]
    fn affine_mapping_has_no_gradient_bias() {
        let (game, _) = cournot::micro_game::<f64>();
        let q = MixedQuery {
            player: 1,
            mu: vec![1.0, 2.0],
            sigmas: vec![0.5, 0.5],
            lambda: vec![0.7],
            samples: 150_000,
            seed: 3,
        };
        let report = bias_term(&game, &q, 3.0).unwrap();
        assert!(report.pass_zero, "{:?}", report.coords);
    }

    #[test]
    fn quartic_bias_grows_like_sigma_squared() {
        // J(x) = x⁴: E[4x³] = 4μ³ + 12μσ² under Gaussian noise, so the
        // gradient bias is exactly 12μσ².
        let game = GameSpec::new(
            vec![Box::new(|a: &[f64]| a[0].powi(4)) as _],
            vec![ConvexSet::boxed(vec![-20.0], vec![20.0]).unwrap()],
        )
        .unwrap()
        .with_gradients(vec![Box::new(|a: &[f64]| vec![4.0 * a[0].powi(3)]) as _])
        .unwrap();
        let q = MixedQuery {
            player: 0,
            mu: vec![1.0],
            sigmas: vec![0.2],
            lambda: vec![],
            samples: 400_000,
            seed: 5,
        };
        let report = bias_term(&game, &q, 3.0).unwrap();
        assert!(!report.pass_zero, "quartic bias should be detectable");
        assert_relative_eq!(report.norm, 12.0 * 0.04, max_relative = 0.15);

        let slope = bias_exponent(&game, &q, &[0.4, 0.25, 0.15, 0.1]).unwrap();
        assert!((slope - 2.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn bias_exponent_rejects_an_affine_map() {
        let (game, _) = cournot::micro_game::<f64>();
        let q = MixedQuery {
            player: 0,
            mu: vec![1.0, 1.0],
            sigmas: vec![0.5, 0.5],
            lambda: vec![0.0],
            samples: 50_000,
            seed: 9,
        };
        let err = bias_exponent(&game, &q, &[0.4, 0.2]).unwrap_err();
        assert!(err.to_string().contains("statistically zero"));
    }

    #[test]
    fn micro_game_mapping_is_strongly_monotone_with_modulus_two() {
        let (game, _) = cournot::micro_game::<f64>();
        let domain: Vec<ConvexSet<f64>> = (0..2)
            .map(|i| game.action_set(i).unwrap().clone())
            .collect();
        let report =
            monotonicity_classify(|a| game.game_mapping(a), &domain, 100, 1).unwrap();
        assert_eq!(report.class, MonotonicityClass::Strong);
        assert!(report.affine);
        // Symmetrized Jacobian [[3,1],[1,3]] has eigenvalues {2, 4}.
        assert_relative_eq!(report.kappa, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn extended_micro_mapping_is_monotone_but_not_strongly() {
        let (game, _) = cournot::micro_game::<f64>();
        let domain = vec![
            game.action_set(0).unwrap().clone(),
            game.action_set(1).unwrap().clone(),
            ConvexSet::orthant(1).unwrap(),
        ];
        let report = monotonicity_classify(
            |z| game.extended_mapping(&z[..2], &z[2..]),
            &domain,
            100,
            1,
        )
        .unwrap();
        assert_eq!(report.class, MonotonicityClass::Monotone);
        assert!(report.affine);
        assert!(report.min_symmetric_eigenvalue.unwrap().abs() <= 1e-9);
        assert_eq!(report.kappa, 0.0);
    }

    #[test]
    fn sign_flipped_map_is_violated_with_a_witness() {
        let domain = vec![ConvexSet::boxed(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap()];
        let report = monotonicity_classify(
            |a: &[f64]| Ok(vec![a[0], -a[1]]),
            &domain,
            1_000,
            4,
        )
        .unwrap();
        assert_eq!(report.class, MonotonicityClass::Violated);
        let w = report.witness.expect("witness");
        assert!(w.inner < 0.0);
    }

    #[test]
    fn cubic_map_samples_as_strictly_monotone() {
        let domain = vec![ConvexSet::boxed(vec![-3.0], vec![3.0]).unwrap()];
        let report = monotonicity_classify(
            |a: &[f64]| Ok(vec![a[0].powi(3)]),
            &domain,
            2_000,
            8,
        )
        .unwrap();
        assert!(!report.affine);
        assert_eq!(report.class, MonotonicityClass::Strict);
    }

    #[test]
    fn negated_cubic_map_is_caught_as_violated() {
        let domain = vec![ConvexSet::boxed(vec![-3.0], vec![3.0]).unwrap()];
        let report = monotonicity_classify(
            |a: &[f64]| Ok(vec![-a[0].powi(3)]),
            &domain,
            2_000,
            8,
        )
        .unwrap();
        assert!(!report.affine);
        assert_eq!(report.class, MonotonicityClass::Violated);
    }

    #[test]
    fn rate_fit_accepts_curves_at_the_guaranteed_rate() {
        let sched = Schedule::defaults(1);
        // dist(t) = t^{-0.3} gives mse slope −0.6, exactly the guarantee
        // for a = 0.6, b = 0.2.
        let curve: Vec<f64> = (1..=20_000).map(|t| (t as f64).powf(-0.3)).collect();
        let runs = vec![curve; 20];
        let fit = rate_fit(&runs, &sched).unwrap();
        assert_relative_eq!(fit.theoretical, -0.6, epsilon = 1e-12);
        assert_relative_eq!(fit.slope, -0.6, epsilon = 1e-6);
        assert!(fit.pass);
    }

    #[test]
    fn rate_fit_rejects_stalled_curves_and_small_ensembles() {
        let sched = Schedule::defaults(1);
        let flat = vec![vec![0.5; 20_000]; 20];
        let fit = rate_fit(&flat, &sched).unwrap();
        assert!(!fit.pass, "slope {}", fit.slope);

        let few = vec![vec![0.5; 20_000]; 3];
        assert!(rate_fit(&few, &sched).is_err());
    }

    #[test]
    fn recursion_bound_holds_on_the_reference_example() {
        let p = RecursionParams {
            a0: 1.0,
            kappa: 2.0,
            psi: 1.0,
            c: 2.0,
        };
        let check = recursion_bound_check(&p, 100_000).unwrap();
        assert!(check.holds, "violation: {:?}", check.first_violation);
        assert_relative_eq!(check.bound_constant, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn recursion_bound_fails_when_the_forcing_dwarfs_the_constant() {
        // κ = 5 clamps the first factor to zero, so a_1 = ψ = 1 while the
        // bound allows only C = max(0.1, 0.25) at t = 1.
        let p = RecursionParams {
            a0: 0.1,
            kappa: 5.0,
            psi: 1.0,
            c: 2.0,
        };
        let check = recursion_bound_check(&p, 10).unwrap();
        assert!(!check.holds);
        assert_eq!(check.first_violation.unwrap().t, 1);
    }

    #[test]
    fn recursion_parameters_are_validated() {
        let bad_kappa = RecursionParams {
            a0: 1.0,
            kappa: 1.0,
            psi: 1.0,
            c: 2.0,
        };
        assert!(recursion_bound_check(&bad_kappa, 10).is_err());
        let bad_c = RecursionParams {
            a0: 1.0,
            kappa: 2.0,
            psi: 1.0,
            c: 2.5,
        };
        assert!(recursion_bound_check(&bad_c, 10).is_err());
    }

    #[test]
    fn relative_error_matches_hand_values() {
        let e: f64 = relative_error(&[3.0, 0.0], &[1.5, 0.0]).unwrap();
        assert_relative_eq!(e, 1.0, epsilon = 1e-15);
        let e2: f64 =
            relative_error(&[1.6, 1.4], &[1.5, 1.5]).unwrap();
        assert_relative_eq!(e2, (0.02f64).sqrt() / (4.5f64).sqrt(), epsilon = 1e-15);
        assert!(relative_error(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn loglog_slope_is_exact_on_power_laws() {
        let xs: Vec<f64> = (1..=50).map(|t| t as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|t| 3.0 * t.powf(-1.7)).collect();
        assert_relative_eq!(
            fit_loglog_slope(&xs, &ys).unwrap(),
            -1.7,
            epsilon = 1e-12
        );
        assert!(fit_loglog_slope(&[1.0, 1.0], &[2.0, 3.0]).is_err());
        assert!(fit_loglog_slope(&[1.0, 2.0], &[-1.0, 3.0]).is_err());
    }

    #[test]
    fn mc_reduction_is_independent_of_block_scheduling() {
        // Same seed twice must agree bit for bit even though rayon may
        // schedule blocks differently.
        let (game, _) = scalar_square_game();
        let q = query(vec![1.0], 0.5, vec![], 150_000);
        let a = mixed_cost(&game, &q).unwrap();
        let b = mixed_cost(&game, &q).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn queries_are_validated_against_the_game() {
        let (game, _) = scalar_square_game();
        let mut q = query(vec![1.0], 0.5, vec![], 100);
        q.player = 3;
        assert!(mixed_cost(&game, &q).is_err());
        let mut q = query(vec![1.0, 2.0], 0.5, vec![], 100);
        q.sigmas = vec![0.5, 0.5];
        assert!(mixed_cost(&game, &q).is_err());
        let q = query(vec![1.0], 0.5, vec![1.0], 100);
        assert!(mixed_cost(&game, &q).is_err());
        let mut q = query(vec![1.0], 0.5, vec![], 0);
        q.samples = 0;
        assert!(mixed_cost(&game, &q).is_err());
    }
}
