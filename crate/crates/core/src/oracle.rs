//! Ground-truth equilibrium computation used to score the learner.
//!
//! The workhorse is the extragradient method on the extended mapping over
//! A × R^n_+: the mapping of the constrained game is monotone but in general
//! not strictly so (the constraint block enters skew-symmetrically), and the
//! plain forward projection can cycle on exactly that structure. A predictor
//! step removes the cycling at the cost of a second mapping evaluation.
//!
//! For games whose mapping is a gradient field (symmetric Jacobian) there is
//! a second, independent route: minimize the potential. Affine mappings with
//! affine constraints get an exact active-set enumeration (one LU solve per
//! candidate set); everything else runs a projected descent with Armijo
//! backtracking, measuring potential differences by line integrals of the
//! mapping. Two solvers of different character agreeing on the same
//! certificate is the point: the oracle must not share failure modes with
//! itself.

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::geometry::{dykstra, ConvexSet, Projector, DYKSTRA_MAX_SWEEPS, DYKSTRA_TOL};
use crate::linalg::{dist, dot, norm, solve, Mat};
use crate::scalar::{cast, Scalar};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveMethod {
    Extragradient,
    ActiveSet,
    ProjectedGradient,
}

/// A solution candidate with its measured KKT residuals. `accepted` means
/// every residual is at or below the tolerance the solver was asked for;
/// hitting the iteration cap returns the best iterate with accepted=false
/// rather than an error, so callers can inspect how close the solve got.
#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumCertificate<T> {
    pub action: Vec<T>,
    pub multiplier: Vec<T>,
    pub stationarity: T,
    pub complementarity: T,
    pub feasibility: T,
    /// Natural-map residual ‖z − Proj(z − M⁰(z))‖ on the extended space.
    pub residual: T,
    pub iterations: u64,
    pub tol: T,
    pub accepted: bool,
    pub method: SolveMethod,
}

#[derive(Clone, Debug)]
pub struct OracleOptions<T> {
    pub tol: T,
    pub max_iters: u64,
    /// Seed for Lipschitz probing and affine detection; fixed so that the
    /// oracle itself is deterministic.
    pub probe_seed: u64,
    /// Upper end of the multiplier range sampled while estimating the
    /// Lipschitz constant of the extended mapping.
    pub multiplier_probe: f64,
}

impl<T: Scalar> Default for OracleOptions<T> {
    fn default() -> Self {
        OracleOptions {
            tol: cast(1e-10),
            max_iters: 2_000_000,
            probe_seed: 0xa11ce,
            multiplier_probe: 10.0,
        }
    }
}

/// KKT residuals at (a, λ): blockwise natural-map stationarity
/// ‖a − Proj_A(a − M⁰_{1..N}(a, λ))‖, complementarity |(λ, g(a))| and
/// feasibility ‖max(g(a), 0)‖.
pub fn kkt_residual<T: Scalar>(
    game: &GameSpec<T>,
    a: &[T],
    lambda: &[T],
) -> Result<(T, T, T)> {
    let m0 = game.extended_mapping(a, lambda)?;
    let d = game.block_dim();
    let mut stat2 = T::zero();
    for (i, set) in game.action_sets().iter().enumerate() {
        let block = &a[i * d..(i + 1) * d];
        let raw: Vec<T> = block
            .iter()
            .zip(&m0[i * d..(i + 1) * d])
            .map(|(ai, mi)| *ai - *mi)
            .collect();
        let proj = set.project(&raw)?;
        stat2 += block
            .iter()
            .zip(&proj)
            .map(|(ai, pi)| (*ai - *pi) * (*ai - *pi))
            .sum::<T>();
    }
    let g = game.constraint_values(a)?;
    let comp = dot(lambda, &g).abs();
    let feas = g
        .iter()
        .map(|v| v.max(T::zero()) * v.max(T::zero()))
        .sum::<T>()
        .sqrt();
    Ok((stat2.sqrt(), comp, feas))
}

/// Solves the variational problem of the extended game by extragradient.
pub fn solve_vi<T: Scalar>(
    game: &GameSpec<T>,
    tol: T,
    max_iters: u64,
) -> Result<EquilibriumCertificate<T>> {
    solve_vi_with(
        game,
        &OracleOptions {
            tol,
            max_iters,
            ..OracleOptions::default()
        },
    )
}

pub fn solve_vi_with<T: Scalar>(
    game: &GameSpec<T>,
    opts: &OracleOptions<T>,
) -> Result<EquilibriumCertificate<T>> {
    require_analytic(game)?;
    let joint = game.joint_dim();
    let n = game.num_constraints();

    let eval = |z: &[T]| -> Result<Vec<T>> { game.extended_mapping(&z[..joint], &z[joint..]) };
    let project = |z: &[T]| -> Result<Vec<T>> {
        let mut out = game.project_joint(&z[..joint])?;
        out.extend(z[joint..].iter().map(|l| l.max(T::zero())));
        Ok(out)
    };

    let lip = estimate_lipschitz(game, opts)?;
    let tau = T::one() / (lip + lip);

    let mut z = game.project_joint(&{
        let mut m = Vec::with_capacity(joint);
        for set in game.action_sets() {
            m.extend(set.anchor()?);
        }
        m
    })?;
    z.extend(std::iter::repeat_n(T::zero(), n));

    // drive the natural-map residual well below tol: the three certificate
    // residuals carry constants of order ‖λ*‖, and acceptance compares them
    // against tol itself
    let target = opts.tol * cast::<T>(0.05);
    let mut iterations = 0;
    let mut residual;
    loop {
        let fz = eval(&z)?;
        let natural = project(&sub_scaled(&z, &fz, T::one()))?;
        residual = dist(&z, &natural);
        if residual <= target || iterations >= opts.max_iters {
            break;
        }
        let mid = project(&sub_scaled(&z, &fz, tau))?;
        let fmid = eval(&mid)?;
        z = project(&sub_scaled(&z, &fmid, tau))?;
        iterations += 1;
    }

    certify(
        game,
        z[..joint].to_vec(),
        z[joint..].to_vec(),
        residual,
        iterations,
        opts.tol,
        SolveMethod::Extragradient,
    )
}

/// Solves through the potential-function route. Errors when the game mapping
/// is not a gradient field (its Jacobian must be symmetric: the potential
/// exists exactly then). Affine mapping + affine constraints is solved
/// exactly by active-set enumeration; otherwise projected descent.
pub fn solve_potential<T: Scalar>(game: &GameSpec<T>, tol: T) -> Result<EquilibriumCertificate<T>> {
    solve_potential_with(
        game,
        &OracleOptions {
            tol,
            ..OracleOptions::default()
        },
    )
}

pub fn solve_potential_with<T: Scalar>(
    game: &GameSpec<T>,
    opts: &OracleOptions<T>,
) -> Result<EquilibriumCertificate<T>> {
    require_analytic(game)?;
    let joint = game.joint_dim();
    let n = game.num_constraints();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.probe_seed);

    let map_affine = probe_affine(|a| game.game_mapping(a), joint, joint, &mut rng)?;
    check_symmetric_jacobian(game, map_affine.as_ref(), &mut rng)?;

    if let Some((a_mat, b)) = &map_affine {
        let g_affine = if n == 0 {
            Some((Mat::zeros(0, joint), Vec::new()))
        } else {
            probe_affine(|a| game.constraint_values(a), joint, n, &mut rng)?
        };
        if let Some((g_mat, c_g)) = g_affine {
            // the probe returns g(a) = G·a + c; the saddle systems want Ga ≤ h
            let h: Vec<T> = c_g.iter().map(|v| -*v).collect();
            if n <= 20 {
                if let Some(cert) = active_set_solve(game, a_mat, b, &g_mat, &h, opts)? {
                    return Ok(cert);
                }
            }
        }
    }

    projected_descent(game, opts)
}

/// Scans a per-coordinate grid of unilateral deviations for every player and
/// returns the largest cost improvement over any deviation that keeps the
/// coupling constraint satisfied. Nonpositive means no grid point improves.
/// Box action sets only; grid size is points^d per player.
pub fn grid_deviation_check<T: Scalar>(
    game: &GameSpec<T>,
    a: &[T],
    points_per_coord: usize,
) -> Result<T> {
    if points_per_coord < 2 {
        return Err(Error::InvalidParameter(
            "deviation grid needs at least two points per coordinate".into(),
        ));
    }
    let d = game.block_dim();
    let feas_tol = cast::<T>(1e-9);
    let mut best = T::neg_infinity();
    for i in 0..game.players() {
        let (lower, upper) = match game.action_set(i)? {
            ConvexSet::Box { lower, upper } => (lower.clone(), upper.clone()),
            _ => return Err(Error::Unsupported("deviation grids on non-box action sets")),
        };
        let base = game.eval_cost(i, a)?;
        let mut joint = a.to_vec();
        let mut idx = vec![0usize; d];
        loop {
            for k in 0..d {
                let f = cast::<T>(idx[k] as f64 / (points_per_coord - 1) as f64);
                joint[i * d + k] = lower[k] + (upper[k] - lower[k]) * f;
            }
            let feasible = game
                .constraint_values(&joint)?
                .iter()
                .all(|g| *g <= feas_tol);
            if feasible {
                let improvement = base - game.eval_cost(i, &joint)?;
                if improvement > best {
                    best = improvement;
                }
            }
            // odometer over the d-dimensional grid
            let mut k = 0;
            loop {
                if k == d {
                    break;
                }
                idx[k] += 1;
                if idx[k] < points_per_coord {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        for k in 0..d {
            joint[i * d + k] = a[i * d + k];
        }
    }
    Ok(best)
}

fn require_analytic<T: Scalar>(game: &GameSpec<T>) -> Result<()> {
    if !game.has_gradients() {
        return Err(Error::Unsupported("gradient evaluators"));
    }
    if !game.has_constraint_jacobian() {
        return Err(Error::Unsupported("constraint Jacobian"));
    }
    Ok(())
}

fn sub_scaled<T: Scalar>(z: &[T], f: &[T], tau: T) -> Vec<T> {
    z.iter().zip(f).map(|(zi, fi)| *zi - tau * *fi).collect()
}

fn estimate_lipschitz<T: Scalar>(game: &GameSpec<T>, opts: &OracleOptions<T>) -> Result<T> {
    let joint = game.joint_dim();
    let n = game.num_constraints();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.probe_seed);
    let draw = |rng: &mut ChaCha8Rng| -> Result<Vec<T>> {
        let mut z = Vec::with_capacity(joint + n);
        for set in game.action_sets() {
            z.extend(set.sample(rng)?);
        }
        for _ in 0..n {
            z.push(cast::<T>(rng.random_range(0.0..opts.multiplier_probe)));
        }
        Ok(z)
    };
    let mut lip = T::one();
    for _ in 0..64 {
        let z1 = draw(&mut rng)?;
        let z2 = draw(&mut rng)?;
        let dz = dist(&z1, &z2);
        if dz <= T::epsilon() {
            continue;
        }
        let f1 = game.extended_mapping(&z1[..joint], &z1[joint..])?;
        let f2 = game.extended_mapping(&z2[..joint], &z2[joint..])?;
        let ratio = dist(&f1, &f2) / dz;
        if ratio > lip {
            lip = ratio;
        }
    }
    // sampled pairs can undershoot the true constant; overestimating only
    // shortens the step, so inflate
    Ok(lip * cast::<T>(1.5))
}

/// Detects an affine map y = Ax + c by unit-vector probing, then verifies the
/// reconstruction at random points. Returns None when the check fails.
pub(crate) fn probe_affine<T: Scalar, F: Fn(&[T]) -> Result<Vec<T>>>(
    f: F,
    dim_in: usize,
    dim_out: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(Mat<T>, Vec<T>)>> {
    let zero = vec![T::zero(); dim_in];
    let c = f(&zero)?;
    if c.len() != dim_out {
        return Ok(None);
    }
    let mut a = Mat::zeros(dim_out, dim_in);
    let mut probe = zero.clone();
    for k in 0..dim_in {
        probe[k] = T::one();
        let fk = f(&probe)?;
        for r in 0..dim_out {
            a[(r, k)] = fk[r] - c[r];
        }
        probe[k] = T::zero();
    }
    let scale = a.frobenius_norm() + norm(&c) + T::one();
    for _ in 0..4 {
        let x: Vec<T> = (0..dim_in)
            .map(|_| cast::<T>(rng.random_range(-2.0..2.0)))
            .collect();
        let fx = f(&x)?;
        let lin: Vec<T> = a
            .matvec(&x)
            .into_iter()
            .zip(&c)
            .map(|(v, ci)| v + *ci)
            .collect();
        if dist(&fx, &lin) > cast::<T>(1e-9) * scale {
            return Ok(None);
        }
    }
    Ok(Some((a, c)))
}

const JACOBIAN_SYMMETRY_TOL: f64 = 1e-8;

fn check_symmetric_jacobian<T: Scalar>(
    game: &GameSpec<T>,
    affine: Option<&(Mat<T>, Vec<T>)>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let asym_of = |j: &Mat<T>| -> T {
        let mut worst = T::zero();
        for r in 0..j.rows() {
            for c in 0..r {
                let d = (j[(r, c)] - j[(c, r)]).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    };
    let tol = cast::<T>(JACOBIAN_SYMMETRY_TOL);
    if let Some((a_mat, _)) = affine {
        let scale = T::one() + a_mat.frobenius_norm();
        if asym_of(a_mat) > tol * scale {
            return Err(Error::Unsupported(
                "potential route: the game mapping is not a gradient field (asymmetric Jacobian)",
            ));
        }
        return Ok(());
    }
    let joint = game.joint_dim();
    let h = cast::<T>(1e-5);
    for _ in 0..3 {
        let mut x = Vec::with_capacity(joint);
        for set in game.action_sets() {
            x.extend(set.sample(rng)?);
        }
        let mut jac = Mat::zeros(joint, joint);
        for k in 0..joint {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fp = game.game_mapping(&xp)?;
            let fm = game.game_mapping(&xm)?;
            for r in 0..joint {
                jac[(r, k)] = (fp[r] - fm[r]) / (h + h);
            }
        }
        let scale = T::one() + jac.frobenius_norm();
        if asym_of(&jac) > tol * scale {
            return Err(Error::Unsupported(
                "potential route: the game mapping is not a gradient field (asymmetric Jacobian)",
            ));
        }
    }
    Ok(())
}

/// Exact KKT solve for affine mapping Aa + b with constraints Ga ≤ h:
/// enumerate candidate active sets S, solve the saddle system
/// [A G_S'; G_S 0][a; λ_S] = [−b; h_S], and keep certified candidates whose
/// primal lies inside the action sets. Box-active solutions have no
/// candidate here; the caller falls back to projected descent.
fn active_set_solve<T: Scalar>(
    game: &GameSpec<T>,
    a_mat: &Mat<T>,
    b: &[T],
    g_mat: &Mat<T>,
    h: &[T],
    opts: &OracleOptions<T>,
) -> Result<Option<EquilibriumCertificate<T>>> {
    let joint = game.joint_dim();
    let n = g_mat.rows();
    let mut best: Option<EquilibriumCertificate<T>> = None;
    let mut evaluated: u64 = 0;

    for mask in 0u32..(1u32 << n) {
        let active: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
        let m = active.len();
        let size = joint + m;
        let mut k = Mat::zeros(size, size);
        let mut rhs = vec![T::zero(); size];
        for r in 0..joint {
            for c in 0..joint {
                k[(r, c)] = a_mat[(r, c)];
            }
            rhs[r] = -b[r];
        }
        for (s, &j) in active.iter().enumerate() {
            for c in 0..joint {
                k[(joint + s, c)] = g_mat[(j, c)];
                k[(c, joint + s)] = g_mat[(j, c)];
            }
            rhs[joint + s] = h[j];
        }
        let sol = match solve(&k, &rhs) {
            Ok(s) => s,
            Err(Error::SingularSystem) => continue,
            Err(e) => return Err(e),
        };
        evaluated += 1;

        let a = &sol[..joint];
        let mut lambda = vec![T::zero(); n];
        let mut sign_ok = true;
        for (s, &j) in active.iter().enumerate() {
            let l = sol[joint + s];
            if l < -cast::<T>(1e-12) {
                sign_ok = false;
                break;
            }
            lambda[j] = l.max(T::zero());
        }
        if !sign_ok {
            continue;
        }
        let mut inside = true;
        let d = game.block_dim();
        for (i, set) in game.action_sets().iter().enumerate() {
            if !set.contains(&a[i * d..(i + 1) * d], cast::<T>(1e-9))? {
                inside = false;
                break;
            }
        }
        if !inside {
            continue;
        }
        let slack_ok = (0..n)
            .filter(|j| mask >> j & 1 == 0)
            .all(|j| dot(g_mat.row(j), a) - h[j] <= cast::<T>(1e-9));
        if !slack_ok {
            continue;
        }

        let cert = certify(
            game,
            a.to_vec(),
            lambda,
            natural_residual(game, a, &sol_lambda(&active, &sol, joint, n))?,
            evaluated,
            opts.tol,
            SolveMethod::ActiveSet,
        )?;
        let worse = |c: &EquilibriumCertificate<T>| {
            c.stationarity.max(c.complementarity).max(c.feasibility)
        };
        if cert.accepted && best.as_ref().is_none_or(|b| worse(&cert) < worse(b)) {
            best = Some(cert);
        }
    }
    Ok(best)
}

fn sol_lambda<T: Scalar>(active: &[usize], sol: &[T], joint: usize, n: usize) -> Vec<T> {
    let mut lambda = vec![T::zero(); n];
    for (s, &j) in active.iter().enumerate() {
        lambda[j] = sol[joint + s].max(T::zero());
    }
    lambda
}

fn natural_residual<T: Scalar>(game: &GameSpec<T>, a: &[T], lambda: &[T]) -> Result<T> {
    let joint = game.joint_dim();
    let m0 = game.extended_mapping(a, lambda)?;
    let mut z: Vec<T> = a.to_vec();
    z.extend_from_slice(lambda);
    let raw = sub_scaled(&z, &m0, T::one());
    let mut proj = game.project_joint(&raw[..joint])?;
    proj.extend(raw[joint..].iter().map(|l| l.max(T::zero())));
    Ok(dist(&z, &proj))
}

const ARMIJO_SHRINK: f64 = 0.5;
const ARMIJO_SLOPE: f64 = 1e-4;
const DESCENT_MAX_ITERS: u64 = 200_000;

/// Projected descent on the potential over A ∩ {g ≤ 0}. The potential value
/// is never formed; Armijo compares the line integral of the mapping along
/// the step against the sufficient-decrease bound. Affine coupling rows are
/// projected with Dykstra together with the action sets.
fn projected_descent<T: Scalar>(
    game: &GameSpec<T>,
    opts: &OracleOptions<T>,
) -> Result<EquilibriumCertificate<T>> {
    let joint = game.joint_dim();
    let n = game.num_constraints();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.probe_seed ^ 0x5eed);

    let coupling = if n == 0 {
        None
    } else {
        match probe_affine(|a| game.constraint_values(a), joint, n, &mut rng)? {
            // probe form g(a) = G·a + c becomes rows G·a ≤ −c
            Some((g_mat, c_g)) => Some((g_mat, c_g.iter().map(|v| -*v).collect::<Vec<T>>())),
            None => {
                return Err(Error::Unsupported(
                    "potential route: projected descent needs affine coupling constraints",
                ))
            }
        }
    };

    let project_feasible = |x: &[T]| -> Result<Vec<T>> {
        match &coupling {
            None => game.project_joint(x),
            Some((g_mat, h)) => {
                let d = game.block_dim();
                let sets = game.action_sets().to_vec();
                let mut projectors: Vec<Projector<T>> = vec![Box::new(move |v: &mut [T]| {
                    for (i, set) in sets.iter().enumerate() {
                        let p = set.project(&v[i * d..(i + 1) * d]).expect("block projection");
                        v[i * d..(i + 1) * d].copy_from_slice(&p);
                    }
                })];
                for (j, &off) in h.iter().enumerate() {
                    let row = g_mat.row(j).to_vec();
                    let n2 = dot(&row, &row);
                    projectors.push(Box::new(move |v: &mut [T]| {
                        let viol = dot(&row, v) - off;
                        if viol > T::zero() {
                            let f = viol / n2;
                            for (vi, ri) in v.iter_mut().zip(&row) {
                                *vi -= f * *ri;
                            }
                        }
                    }));
                }
                let (p, _) = dykstra(x, &projectors, cast(DYKSTRA_TOL), DYKSTRA_MAX_SWEEPS)?;
                Ok(p)
            }
        }
    };

    // 8-point Gauss–Legendre on [0,1]; exact for the polynomial mappings the
    // descent route sees in practice
    #[allow(clippy::excessive_precision)]
    let gl: [(f64, f64); 8] = [
        (0.019855071751231884, 0.05061426814518813),
        (0.10166676129318664, 0.11119051722668724),
        (0.2372337950418355, 0.15685332293894364),
        (0.40828267875217505, 0.18134189168918099),
        (0.591717321247825, 0.18134189168918099),
        (0.7627662049581645, 0.15685332293894364),
        (0.8983332387068134, 0.11119051722668724),
        (0.9801449282487681, 0.05061426814518813),
    ];
    let potential_delta = |x: &[T], y: &[T]| -> Result<T> {
        let step: Vec<T> = y.iter().zip(x).map(|(yi, xi)| *yi - *xi).collect();
        let mut acc = T::zero();
        for (node, weight) in gl {
            let point: Vec<T> = x
                .iter()
                .zip(&step)
                .map(|(xi, si)| *xi + cast::<T>(node) * *si)
                .collect();
            acc += cast::<T>(weight) * dot(&game.game_mapping(&point)?, &step);
        }
        Ok(acc)
    };

    let lip = estimate_lipschitz(game, opts)?;
    let mut x = project_feasible(&{
        let mut m = Vec::with_capacity(joint);
        for set in game.action_sets() {
            m.extend(set.anchor()?);
        }
        m
    })?;
    let tau0 = T::one() / (lip + lip);
    let mut iterations = 0u64;
    let mut residual;
    loop {
        let grad = game.game_mapping(&x)?;
        let natural = project_feasible(&sub_scaled(&x, &grad, T::one()))?;
        residual = dist(&x, &natural);
        if residual <= opts.tol || iterations >= DESCENT_MAX_ITERS.min(opts.max_iters) {
            break;
        }
        let mut tau = tau0;
        let mut accepted = false;
        for _ in 0..60 {
            let y = project_feasible(&sub_scaled(&x, &grad, tau))?;
            let decrease = dot(&grad, &sub(&y, &x));
            if potential_delta(&x, &y)? <= cast::<T>(ARMIJO_SLOPE) * decrease {
                x = y;
                accepted = true;
                break;
            }
            tau *= cast::<T>(ARMIJO_SHRINK);
        }
        if !accepted {
            // the step has shrunk into numerical noise; the residual test
            // above is the honest report of where we stopped
            break;
        }
        iterations += 1;
    }

    let lambda = if n == 0 {
        Vec::new()
    } else {
        polish_multiplier(game, &x, opts)?
    };
    let res = natural_residual(game, &x, &lambda)?;
    certify(
        game,
        x,
        lambda,
        res,
        iterations,
        opts.tol,
        SolveMethod::ProjectedGradient,
    )
}

fn sub<T: Scalar>(x: &[T], y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(a, b)| *a - *b).collect()
}

/// Recovers the multiplier for a primal solution found by descent: a short
/// extragradient polish on the extended mapping, warm-started at (a, 0).
fn polish_multiplier<T: Scalar>(
    game: &GameSpec<T>,
    a: &[T],
    opts: &OracleOptions<T>,
) -> Result<Vec<T>> {
    let joint = game.joint_dim();
    let n = game.num_constraints();
    let lip = estimate_lipschitz(game, opts)?;
    let tau = T::one() / (lip + lip);
    let mut z: Vec<T> = a.to_vec();
    z.extend(std::iter::repeat_n(T::zero(), n));
    let project = |z: &[T]| -> Result<Vec<T>> {
        let mut out = game.project_joint(&z[..joint])?;
        out.extend(z[joint..].iter().map(|l| l.max(T::zero())));
        Ok(out)
    };
    let target = opts.tol * cast::<T>(0.05);
    for _ in 0..opts.max_iters.min(500_000) {
        let fz = game.extended_mapping(&z[..joint], &z[joint..])?;
        let natural = project(&sub_scaled(&z, &fz, T::one()))?;
        if dist(&z, &natural) <= target {
            break;
        }
        let mid = project(&sub_scaled(&z, &fz, tau))?;
        let fmid = game.extended_mapping(&mid[..joint], &mid[joint..])?;
        z = project(&sub_scaled(&z, &fmid, tau))?;
    }
    Ok(z[joint..].to_vec())
}

fn certify<T: Scalar>(
    game: &GameSpec<T>,
    action: Vec<T>,
    multiplier: Vec<T>,
    residual: T,
    iterations: u64,
    tol: T,
    method: SolveMethod,
) -> Result<EquilibriumCertificate<T>> {
    let (stationarity, complementarity, feasibility) = kkt_residual(game, &action, &multiplier)?;
    let accepted = stationarity <= tol && complementarity <= tol && feasibility <= tol;
    Ok(EquilibriumCertificate {
        action,
        multiplier,
        stationarity,
        complementarity,
        feasibility,
        residual,
        iterations,
        tol,
        accepted,
        method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::cournot;
    use crate::game::{BlockGradient, CostFn};
    use crate::quadratic::QuadraticGame;
    use approx::assert_relative_eq;

    #[test]
    fn extragradient_certifies_the_micro_instance() {
        let (game, _) = cournot::micro_game::<f64>();
        let cert = solve_vi(&game, 1e-9, 1_000_000).unwrap();
        assert!(cert.accepted, "{cert:?}");
        assert_eq!(cert.method, SolveMethod::Extragradient);
        assert_relative_eq!(cert.action[0], 1.5, epsilon = 1e-7);
        assert_relative_eq!(cert.action[1], 1.5, epsilon = 1e-7);
        assert_relative_eq!(cert.multiplier[0], 2.0, epsilon = 1e-6);
        assert!(cert.stationarity <= 1e-8);
        assert!(cert.complementarity <= 1e-8);
        assert!(cert.feasibility <= 1e-8);
    }

    #[test]
    fn active_set_solves_the_micro_instance_exactly() {
        let (game, _) = cournot::micro_game::<f64>();
        let cert = solve_potential(&game, 1e-10).unwrap();
        assert!(cert.accepted);
        assert_eq!(cert.method, SolveMethod::ActiveSet);
        assert_relative_eq!(cert.action[0], 1.5, epsilon = 1e-12);
        assert_relative_eq!(cert.action[1], 1.5, epsilon = 1e-12);
        assert_relative_eq!(cert.multiplier[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn the_two_solvers_agree_on_the_micro_instance() {
        let (game, _) = cournot::micro_game::<f64>();
        let vi = solve_vi(&game, 1e-9, 1_000_000).unwrap();
        let pot = solve_potential(&game, 1e-9).unwrap();
        for k in 0..2 {
            assert!((vi.action[k] - pot.action[k]).abs() < 1e-8);
        }
        assert!((vi.multiplier[0] - pot.multiplier[0]).abs() < 1e-7);
    }

    #[test]
    fn uncoupled_micro_equilibrium() {
        let (game, _) = cournot::micro_game_uncoupled::<f64>();
        let cert = solve_vi(&game, 1e-10, 1_000_000).unwrap();
        assert!(cert.accepted);
        assert!(cert.multiplier.is_empty());
        assert_relative_eq!(cert.action[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(cert.action[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn decoupled_targets_are_recovered_exactly_by_the_potential_route() {
        let sets = vec![
            ConvexSet::boxed(vec![0.0, 0.0], vec![9.0, 9.0]).unwrap(),
            ConvexSet::boxed(vec![0.0, 0.0], vec![9.0, 9.0]).unwrap(),
        ];
        let game = QuadraticGame::decoupled(vec![vec![1.25, 2.0], vec![3.5, 0.5]], sets)
            .unwrap()
            .into_game_spec()
            .unwrap();
        let cert = solve_potential(&game, 1e-10).unwrap();
        assert!(cert.accepted);
        assert_eq!(cert.method, SolveMethod::ActiveSet);
        for (got, want) in cert.action.iter().zip([1.25, 2.0, 3.5, 0.5]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn kkt_residual_matches_hand_values() {
        let (game, _) = cournot::micro_game::<f64>();
        let (stat, comp, feas) = kkt_residual(&game, &[0.0, 0.0], &[0.0]).unwrap();
        // map at the origin is (−8, −8); unit natural step hits (8, 8)
        assert_relative_eq!(stat, 128f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(comp, 0.0);
        assert_relative_eq!(feas, 0.0);

        let (stat, comp, feas) = kkt_residual(&game, &[1.5, 1.5], &[2.0]).unwrap();
        assert!(stat < 1e-12 && comp < 1e-12 && feas < 1e-12);

        // infeasible point with positive multiplier
        let (_, comp, feas) = kkt_residual(&game, &[3.0, 3.0], &[1.0]).unwrap();
        assert_relative_eq!(comp, 3.0);
        assert_relative_eq!(feas, 3.0);
    }

    #[test]
    fn grid_scan_confirms_the_micro_equilibrium() {
        let (game, _) = cournot::micro_game::<f64>();
        let best = grid_deviation_check(&game, &[1.5, 1.5], 50).unwrap();
        assert!(best <= 1e-6, "improving deviation of {best}");
        // a clearly suboptimal point has large improvements available
        let off = grid_deviation_check(&game, &[0.5, 0.25], 50).unwrap();
        assert!(off > 0.1, "expected improvement, got {off}");
    }

    #[test]
    fn asymmetric_mappings_are_refused_by_the_potential_route() {
        let costs: Vec<CostFn<f64>> = vec![
            Box::new(|a: &[f64]| a[0] * a[0]),
            Box::new(|a: &[f64]| a[1] * a[1]),
        ];
        let grads: Vec<BlockGradient<f64>> = vec![
            Box::new(|a: &[f64]| vec![a[0] + 2.0 * a[1]]),
            Box::new(|a: &[f64]| vec![a[1]]),
        ];
        let sets = vec![
            ConvexSet::boxed(vec![-1.0], vec![1.0]).unwrap(),
            ConvexSet::boxed(vec![-1.0], vec![1.0]).unwrap(),
        ];
        let game = GameSpec::new(costs, sets)
            .unwrap()
            .with_gradients(grads)
            .unwrap();
        match solve_potential(&game, 1e-8) {
            Err(Error::Unsupported(msg)) => assert!(msg.contains("gradient field")),
            other => panic!("expected unsupported, got {other:?}"),
        }
        // the variational route does not care
        assert!(solve_vi(&game, 1e-8, 200_000).unwrap().accepted);
    }

    #[test]
    fn quartic_game_runs_the_descent_route_and_matches_extragradient() {
        // M_i = a_i^3, symmetric (diagonal) Jacobian but not affine; the box
        // keeps the solution at the lower face 0.5 where the mapping is
        // positive, so the active-set route has no candidate
        let costs: Vec<CostFn<f64>> = vec![
            Box::new(|a: &[f64]| 0.25 * a[0].powi(4)),
            Box::new(|a: &[f64]| 0.25 * a[1].powi(4)),
        ];
        let grads: Vec<BlockGradient<f64>> = vec![
            Box::new(|a: &[f64]| vec![a[0].powi(3)]),
            Box::new(|a: &[f64]| vec![a[1].powi(3)]),
        ];
        let sets = vec![
            ConvexSet::boxed(vec![0.5], vec![2.0]).unwrap(),
            ConvexSet::boxed(vec![0.5], vec![2.0]).unwrap(),
        ];
        let game = GameSpec::new(costs, sets)
            .unwrap()
            .with_gradients(grads)
            .unwrap();
        let pot = solve_potential(&game, 1e-9).unwrap();
        assert_eq!(pot.method, SolveMethod::ProjectedGradient);
        assert!(pot.accepted, "{pot:?}");
        assert_relative_eq!(pot.action[0], 0.5, epsilon = 1e-9);
        let vi = solve_vi(&game, 1e-9, 500_000).unwrap();
        assert!(dist(&pot.action, &vi.action) < 1e-7);
    }

    #[test]
    fn constrained_descent_recovers_the_multiplier() {
        // J_i = (a_i − 2)²/2 + 0.05 a_i⁴/4 with a_1 + a_2 ≤ 2: the coupling
        // binds, the mapping is nonaffine with a diagonal (symmetric)
        // Jacobian, so the potential route must run descent plus polish.
        // Hand solve: by symmetry a = (1, 1), λ = 1 − 0.05 = 0.95.
        let mk_cost = |i: usize| -> CostFn<f64> {
            Box::new(move |a: &[f64]| 0.5 * (a[i] - 2.0).powi(2) + 0.05 * 0.25 * a[i].powi(4))
        };
        let mk_grad = |i: usize| -> BlockGradient<f64> {
            Box::new(move |a: &[f64]| vec![a[i] - 2.0 + 0.05 * a[i].powi(3)])
        };
        let sets = vec![
            ConvexSet::boxed(vec![0.0], vec![9.0]).unwrap(),
            ConvexSet::boxed(vec![0.0], vec![9.0]).unwrap(),
        ];
        let game = GameSpec::new(vec![mk_cost(0), mk_cost(1)], sets)
            .unwrap()
            .with_gradients(vec![mk_grad(0), mk_grad(1)])
            .unwrap()
            .with_constraint(
                1,
                Box::new(|a: &[f64]| vec![a[0] + a[1] - 2.0]),
                Some(Box::new(|_: &[f64]| vec![vec![1.0, 1.0]])),
            )
            .unwrap();
        let pot = solve_potential(&game, 1e-8).unwrap();
        assert_eq!(pot.method, SolveMethod::ProjectedGradient);
        assert!(pot.accepted, "{pot:?}");
        assert_relative_eq!(pot.action[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(pot.multiplier[0], 0.95, epsilon = 1e-5);
        let vi = solve_vi(&game, 1e-8, 1_000_000).unwrap();
        assert!(dist(&pot.action, &vi.action) < 1e-6);
    }

    #[test]
    fn iteration_cap_returns_an_unaccepted_certificate() {
        let (game, _) = cournot::micro_game::<f64>();
        let cert = solve_vi(&game, 1e-12, 3).unwrap();
        assert!(!cert.accepted);
        assert_eq!(cert.iterations, 3);
    }

    #[test]
    fn games_without_gradients_are_rejected() {
        let costs: Vec<CostFn<f64>> = vec![Box::new(|a: &[f64]| a[0])];
        let sets = vec![ConvexSet::boxed(vec![0.0], vec![1.0]).unwrap()];
        let game = GameSpec::new(costs, sets).unwrap();
        assert!(matches!(
            solve_vi(&game, 1e-8, 100),
            Err(Error::Unsupported("gradient evaluators"))
        ));
    }
}
