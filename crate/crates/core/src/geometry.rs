//! Convex feasible sets with Euclidean projections.
//!
//! Box, orthant and ball projections are closed form. Intersections of
//! halfspaces go through Dykstra's alternating scheme, which is also exposed
//! as a free function so callers can project onto ad-hoc intersections
//! (the potential-minimization oracle does this for box-plus-coupling sets).

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm};
use crate::scalar::{cast, Scalar};

/// Residual target for iterative projections.
pub const DYKSTRA_TOL: f64 = 1e-10;
/// Sweep cap for iterative projections; hitting it is an error, never silent.
pub const DYKSTRA_MAX_SWEEPS: usize = 100_000;

#[derive(Clone, Debug)]
pub enum ConvexSet<T> {
    /// Axis-aligned box `[lower, upper]`, componentwise.
    Box { lower: Vec<T>, upper: Vec<T> },
    /// `{ x : x >= 0 }`
    NonnegativeOrthant { dim: usize },
    /// Closed Euclidean ball.
    Ball { center: Vec<T>, radius: T },
    /// `{ x : normals[j] . x <= offsets[j] for all j }`
    HalfspaceIntersection { normals: Vec<Vec<T>>, offsets: Vec<T> },
}

impl<T: Scalar> ConvexSet<T> {
    pub fn boxed(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                context: "box bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidParameter("box of dimension zero".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidParameter(
                "box lower bound exceeds upper bound".into(),
            ));
        }
        Ok(ConvexSet::Box { lower, upper })
    }

    pub fn orthant(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("orthant of dimension zero".into()));
        }
        Ok(ConvexSet::NonnegativeOrthant { dim })
    }

    pub fn ball(center: Vec<T>, radius: T) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::InvalidParameter("ball of dimension zero".into()));
        }
        if radius.is_nan() || radius < T::zero() {
            return Err(Error::InvalidParameter("ball radius must be >= 0".into()));
        }
        Ok(ConvexSet::Ball { center, radius })
    }

    pub fn halfspaces(normals: Vec<Vec<T>>, offsets: Vec<T>) -> Result<Self> {
        if normals.len() != offsets.len() {
            return Err(Error::DimensionMismatch {
                context: "halfspace rows vs offsets",
                expected: normals.len(),
                got: offsets.len(),
            });
        }
        if normals.is_empty() {
            return Err(Error::InvalidParameter("no halfspace rows".into()));
        }
        let dim = normals[0].len();
        for row in &normals {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "halfspace normal",
                    expected: dim,
                    got: row.len(),
                });
            }
            if linalg::norm2(row) == T::zero() {
                return Err(Error::InvalidParameter("zero halfspace normal".into()));
            }
        }
        Ok(ConvexSet::HalfspaceIntersection { normals, offsets })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Box { lower, .. } => lower.len(),
            ConvexSet::NonnegativeOrthant { dim } => *dim,
            ConvexSet::Ball { center, .. } => center.len(),
            ConvexSet::HalfspaceIntersection { normals, .. } => normals[0].len(),
        }
    }

    pub fn contains(&self, x: &[T], tol: T) -> Result<bool> {
        self.check_dim(x)?;
        Ok(match self {
            ConvexSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= *l - tol && *v <= *u + tol),
            ConvexSet::NonnegativeOrthant { .. } => x.iter().all(|v| *v >= -tol),
            ConvexSet::Ball { center, radius } => linalg::dist(x, center) <= *radius + tol,
            ConvexSet::HalfspaceIntersection { normals, offsets } => normals
                .iter()
                .zip(offsets)
                .all(|(n, b)| dot(n, x) <= *b + tol * norm(n).max(T::one())),
        })
    }

    /// Euclidean projection onto the set.
    ///
    /// Closed-form variants are exact and idempotent; the halfspace
    /// intersection runs Dykstra to [`DYKSTRA_TOL`] and errors if the sweep
    /// cap is hit (for instance when the intersection is empty).
    pub fn project(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        match self {
            ConvexSet::Box { lower, upper } => Ok(x
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(v, (l, u))| clamp(*v, *l, *u))
                .collect()),
            ConvexSet::NonnegativeOrthant { .. } => {
                Ok(x.iter().map(|v| v.max(T::zero())).collect())
            }
            ConvexSet::Ball { center, radius } => Ok(project_ball(x, center, *radius)),
            ConvexSet::HalfspaceIntersection { normals, offsets } => {
                let projectors: Vec<_> = normals
                    .iter()
                    .zip(offsets)
                    .map(|(n, b)| halfspace_projector(n.clone(), *b))
                    .collect();
                let (p, _res) = dykstra(x, &projectors, cast(DYKSTRA_TOL), DYKSTRA_MAX_SWEEPS)?;
                Ok(p)
            }
        }
    }

    /// Canonical interior-leaning point: box midpoint, ball center, origin
    /// for the orthant, projected origin for halfspace intersections.
    pub fn anchor(&self) -> Result<Vec<T>> {
        match self {
            ConvexSet::Box { lower, upper } => Ok(lower
                .iter()
                .zip(upper)
                .map(|(l, u)| (*l + *u) * cast::<T>(0.5))
                .collect()),
            ConvexSet::NonnegativeOrthant { dim } => Ok(vec![T::zero(); *dim]),
            ConvexSet::Ball { center, .. } => Ok(center.clone()),
            ConvexSet::HalfspaceIntersection { .. } => self.project(&vec![T::zero(); self.dim()]),
        }
    }

    /// Draws a point of the set: uniform for boxes, rejection-free closed
    /// forms elsewhere (Gaussian draws projected onto the set).
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
        match self {
            ConvexSet::Box { lower, upper } => Ok(lower
                .iter()
                .zip(upper)
                .map(|(l, u)| {
                    let t: f64 = rng.random_range(0.0..=1.0);
                    *l + (*u - *l) * cast::<T>(t)
                })
                .collect()),
            _ => {
                let draw: Vec<T> = (0..self.dim())
                    .map(|_| cast::<T>(rng.sample::<f64, _>(rand_distr::StandardNormal) * 2.0))
                    .collect();
                self.project(&draw)
            }
        }
    }

    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "point vs set",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }
}

fn clamp<T: Scalar>(v: T, l: T, u: T) -> T {
    if v < l {
        l
    } else if v > u {
        u
    } else {
        v
    }
}

fn project_ball<T: Scalar>(x: &[T], center: &[T], radius: T) -> Vec<T> {
    let d2 = x
        .iter()
        .zip(center)
        .map(|(a, c)| (*a - *c) * (*a - *c))
        .sum::<T>();
    if d2 <= radius * radius {
        return x.to_vec();
    }
    let d = d2.sqrt();
    let mut s = radius / d;
    // back the scale off by ulps until the image verifiably lies in the ball,
    // which makes re-projection the identity (idempotence holds bitwise)
    loop {
        let p: Vec<T> = x
            .iter()
            .zip(center)
            .map(|(a, c)| *c + (*a - *c) * s)
            .collect();
        let p2 = p
            .iter()
            .zip(center)
            .map(|(a, c)| (*a - *c) * (*a - *c))
            .sum::<T>();
        if p2 <= radius * radius {
            return p;
        }
        s *= T::one() - T::epsilon();
    }
}

/// One halfspace `n.x <= b` as an in-place projector.
fn halfspace_projector<T: Scalar>(n: Vec<T>, b: T) -> impl Fn(&mut [T]) {
    let n2 = linalg::norm2(&n);
    move |x: &mut [T]| {
        let viol = dot(&n, x) - b;
        if viol > T::zero() {
            let f = viol / n2;
            for (xi, ni) in x.iter_mut().zip(&n) {
                *xi -= f * *ni;
            }
        }
    }
}

/// Dykstra's alternating projection onto an intersection of convex sets,
/// each given by an in-place projector. Returns the projection and the final
/// residual (sweep movement or remaining infeasibility, whichever is larger).
/// Boxed in-place projector; the element type heterogeneous sweep sets use.
pub type Projector<T> = Box<dyn Fn(&mut [T])>;

pub fn dykstra<T: Scalar, P: Fn(&mut [T])>(
    point: &[T],
    projectors: &[P],
    tol: T,
    max_sweeps: usize,
) -> Result<(Vec<T>, T)> {
    let dim = point.len();
    let mut x = point.to_vec();
    let mut increments = vec![vec![T::zero(); dim]; projectors.len()];
    let mut residual = T::infinity();
    for _sweep in 0..max_sweeps {
        let before = x.clone();
        for (proj, inc) in projectors.iter().zip(increments.iter_mut()) {
            for (xi, qi) in x.iter_mut().zip(inc.iter()) {
                *xi += *qi;
            }
            let pre = x.clone();
            proj(&mut x);
            for ((qi, pre_i), xi) in inc.iter_mut().zip(&pre).zip(&x) {
                *qi = *pre_i - *xi;
            }
        }
        residual = linalg::dist(&x, &before);
        if residual <= tol {
            // A stalled sweep is not a certificate on its own: over an empty
            // intersection the endpoint can sit still while the correction
            // increments diverge. Accept only a point every set agrees on.
            let mut gap = T::zero();
            let mut px = vec![T::zero(); dim];
            for proj in projectors {
                px.copy_from_slice(&x);
                proj(&mut px);
                let d = linalg::dist(&x, &px);
                if d > gap {
                    gap = d;
                }
            }
            if gap <= tol {
                return Ok((x, if gap > residual { gap } else { residual }));
            }
            residual = gap;
        }
    }
    Err(Error::ProjectionDiverged {
        sweeps: max_sweeps,
        residual: residual.to_f64_lossy(),
    })
}

/// Knobs for [`slater_point`]. The defaults match what the oracle uses when
/// it probes constraint qualification.
#[derive(Clone, Debug)]
pub struct SlaterSearch<T> {
    /// Required margin: a point qualifies when `max_j g_j(x) < -margin`.
    pub margin: T,
    pub restarts: usize,
    pub steps_per_restart: usize,
    pub seed: u64,
}

impl<T: Scalar> Default for SlaterSearch<T> {
    fn default() -> Self {
        SlaterSearch {
            margin: cast(1e-9),
            restarts: 8,
            steps_per_restart: 400,
            seed: 0x51a7e0,
        }
    }
}

/// Searches the product of `sets` for a point with `max_j g_j(x) < -margin`
/// by projected subgradient descent on the max constraint, restarted from the
/// set anchors and random draws. Returns `None` when no certificate is found;
/// this is a heuristic, so `None` does not prove that no Slater point exists.
pub fn slater_point<T, G>(sets: &[ConvexSet<T>], g: G, opts: &SlaterSearch<T>) -> Option<Vec<T>>
where
    T: Scalar,
    G: Fn(&[T]) -> Vec<T>,
{
    let dims: Vec<usize> = sets.iter().map(ConvexSet::dim).collect();
    let total: usize = dims.iter().sum();
    let phi = |x: &[T]| -> T {
        g(x).into_iter()
            .fold(T::neg_infinity(), |acc, v| acc.max(v))
    };
    let project_blocks = |x: &[T]| -> Option<Vec<T>> {
        let mut out = Vec::with_capacity(total);
        let mut off = 0;
        for (set, d) in sets.iter().zip(&dims) {
            out.extend(set.project(&x[off..off + *d]).ok()?);
            off += *d;
        }
        Some(out)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(T, Vec<T>)> = None;
    for restart in 0..opts.restarts {
        let mut x = if restart == 0 {
            let mut v = Vec::with_capacity(total);
            for set in sets {
                v.extend(set.anchor().ok()?);
            }
            v
        } else {
            let mut v = Vec::with_capacity(total);
            for set in sets {
                v.extend(set.sample(&mut rng).ok()?);
            }
            v
        };
        let mut value = phi(&x);
        for step in 0..opts.steps_per_restart {
            if value < -(opts.margin + opts.margin) {
                break;
            }
            // subgradient of the max row by central differences
            let h = cast::<T>(1e-6);
            let mut grad = vec![T::zero(); total];
            for k in 0..total {
                let orig = x[k];
                x[k] = orig + h;
                let up = phi(&x);
                x[k] = orig - h;
                let down = phi(&x);
                x[k] = orig;
                grad[k] = (up - down) / (h + h);
            }
            let gn = norm(&grad);
            if gn == T::zero() {
                break;
            }
            let alpha = cast::<T>(1.0) / (T::from_usize(step + 1).unwrap()).sqrt();
            let trial: Vec<T> = x
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| *xi - alpha * *gi / gn)
                .collect();
            x = project_blocks(&trial)?;
            value = phi(&x);
            match &best {
                Some((bv, _)) if *bv <= value => {}
                _ => best = Some((value, x.clone())),
            }
        }
        match &best {
            Some((bv, _)) if *bv < -opts.margin => break,
            _ => {}
        }
    }
    match best {
        Some((v, x)) if v < -opts.margin => Some(x),
        _ => None,
    }
}
