//! Networked Cournot competition over a planning horizon.
//!
//! N producers each pick a production plan a^i ∈ [0, ā^i]^d across d steps.
//! The price at step k falls linearly in the mean supply, so player i pays
//!
//!   J_i(a) = ‖a^i‖² + 2·((1/N)Σ_j a^j + c)ᵀ a^i,
//!
//! and the network caps total production per step: Σ_i a^i_k ≤ ā^k.
//! Production-cost and price-sensitivity matrices are identities here;
//! anything more general is just a quadratic game, which the quadratic
//! module already covers.
//!
//! The gradient evaluators deliberately price-take: they differentiate the
//! revenue term with the price held fixed, giving 2a^i + (2/N)Σ_j a^j + 2c
//! per block instead of the full cost partial. The payoff-based learner
//! samples raw costs and is oblivious to this choice; the oracle and the
//! fixed points below follow the price-taking map.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{BlockGradient, ConstraintFn, ConstraintJacobian, CostFn, GameSpec};
use crate::geometry::ConvexSet;
use crate::linalg::Mat;
use crate::quadratic::QuadraticGame;
use crate::scalar::{cast, Scalar};

/// Per-player box bound when drawing an instance.
pub const DEFAULT_PLAYER_CAP: f64 = 9.0;

/// Market data for one Cournot instance. Draws are stored, never re-rolled,
/// so any instance replays from its serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CournotParams {
    pub players: usize,
    /// Planning steps per player; each step is one market.
    pub horizon: usize,
    /// Price offset per step.
    pub c: Vec<f64>,
    /// Box bound per player: 0 ≤ a^i_k ≤ player_caps[i].
    pub player_caps: Vec<f64>,
    /// Shared capacity per step: Σ_i a^i_k ≤ market_caps[k].
    pub market_caps: Vec<f64>,
    /// Whether the shared capacity rows are part of the game.
    pub coupled: bool,
}

impl CournotParams {
    pub fn validate(&self) -> Result<()> {
        if self.players < 2 {
            return Err(Error::InvalidParameter(
                "cournot game needs at least two players".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter(
                "cournot horizon must be positive".into(),
            ));
        }
        if self.c.len() != self.horizon {
            return Err(Error::DimensionMismatch {
                context: "price offsets",
                expected: self.horizon,
                got: self.c.len(),
            });
        }
        if self.player_caps.len() != self.players {
            return Err(Error::DimensionMismatch {
                context: "player caps",
                expected: self.players,
                got: self.player_caps.len(),
            });
        }
        if !self.c.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(
                "price offsets must be finite".into(),
            ));
        }
        if !self.player_caps.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(
                "player caps must be positive".into(),
            ));
        }
        if self.coupled {
            if self.market_caps.len() != self.horizon {
                return Err(Error::DimensionMismatch {
                    context: "market caps",
                    expected: self.horizon,
                    got: self.market_caps.len(),
                });
            }
            if !self.market_caps.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(
                    "market caps must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    /// Draws an instance: c_k standard normal, per-step capacity uniform on
    /// (3N, 3N+100), player caps fixed at [`DEFAULT_PLAYER_CAP`]. All c draws
    /// happen before the capacity draws, so the two sequences never shift
    /// against each other when only the horizon changes.
    pub fn draw(players: usize, horizon: usize, master_seed: u64) -> Result<Self> {
        if players < 2 {
            return Err(Error::InvalidParameter(
                "cournot game needs at least two players".into(),
            ));
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter(
                "cournot horizon must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        let c: Vec<f64> = (0..horizon).map(|_| rng.sample(StandardNormal)).collect();
        let lo = 3.0 * players as f64;
        let market_caps: Vec<f64> = (0..horizon)
            .map(|_| rng.random_range(lo..lo + 100.0))
            .collect();
        Ok(CournotParams {
            players,
            horizon,
            c,
            player_caps: vec![DEFAULT_PLAYER_CAP; players],
            market_caps,
            coupled: true,
        })
    }

    pub fn joint_dim(&self) -> usize {
        self.players * self.horizon
    }

    /// Materializes the game: box action sets, cost closures, price-taking
    /// gradient evaluators, and (when coupled) the capacity rows with their
    /// constant Jacobian.
    pub fn build<T: Scalar>(&self) -> Result<GameSpec<T>> {
        self.validate()?;
        let n = self.players;
        let d = self.horizon;
        let c: Vec<T> = self.c.iter().map(|v| cast(*v)).collect();
        let inv_n = T::one() / cast::<T>(n as f64);
        let two = cast::<T>(2.0);

        let mut costs: Vec<CostFn<T>> = Vec::with_capacity(n);
        let mut grads: Vec<BlockGradient<T>> = Vec::with_capacity(n);
        for i in 0..n {
            let ci = c.clone();
            costs.push(Box::new(move |a: &[T]| {
                let mut total = T::zero();
                for k in 0..d {
                    let own = a[i * d + k];
                    let mut supply = T::zero();
                    for j in 0..n {
                        supply += a[j * d + k];
                    }
                    total += own * own + two * (supply * inv_n + ci[k]) * own;
                }
                total
            }));
            let ci = c.clone();
            grads.push(Box::new(move |a: &[T]| {
                (0..d)
                    .map(|k| {
                        let mut supply = T::zero();
                        for j in 0..n {
                            supply += a[j * d + k];
                        }
                        two * a[i * d + k] + two * (supply * inv_n + ci[k])
                    })
                    .collect()
            }));
        }

        let sets: Vec<ConvexSet<T>> = self
            .player_caps
            .iter()
            .map(|cap| ConvexSet::boxed(vec![T::zero(); d], vec![cast::<T>(*cap); d]))
            .collect::<Result<_>>()?;

        let mut game = GameSpec::new(costs, sets)?.with_gradients(grads)?;
        if self.coupled {
            let caps: Vec<T> = self.market_caps.iter().map(|v| cast(*v)).collect();
            let g: ConstraintFn<T> = Box::new(move |a: &[T]| {
                (0..d)
                    .map(|k| {
                        let mut s = T::zero();
                        for j in 0..n {
                            s += a[j * d + k];
                        }
                        s - caps[k]
                    })
                    .collect()
            });
            let jac: ConstraintJacobian<T> = Box::new(move |_a: &[T]| {
                (0..d)
                    .map(|k| {
                        let mut row = vec![T::zero(); n * d];
                        for j in 0..n {
                            row[j * d + k] = T::one();
                        }
                        row
                    })
                    .collect()
            });
            game = game.with_constraint(d, g, Some(jac))?;
        }
        Ok(game)
    }

    /// The same costs as an explicit quadratic form. The block gradients of
    /// this representation are the full cost partials — what the score
    /// estimator actually estimates — not the price-taking evaluators that
    /// [`CournotParams::build`] installs.
    pub fn quadratic<T: Scalar>(&self) -> Result<QuadraticGame<T>> {
        self.validate()?;
        let n = self.players;
        let d = self.horizon;
        let joint = n * d;
        let diag = cast::<T>(2.0 + 4.0 / n as f64);
        let cross = cast::<T>(2.0 / n as f64);

        let mut p = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for i in 0..n {
            let mut pi = Mat::zeros(joint, joint);
            for k in 0..d {
                let own = i * d + k;
                pi[(own, own)] = diag;
                for j in 0..n {
                    if j != i {
                        pi[(own, j * d + k)] = cross;
                        pi[(j * d + k, own)] = cross;
                    }
                }
            }
            p.push(pi);
            let mut qi = vec![T::zero(); joint];
            for k in 0..d {
                qi[i * d + k] = cast::<T>(2.0 * self.c[k]);
            }
            q.push(qi);
        }
        let sets: Vec<ConvexSet<T>> = self
            .player_caps
            .iter()
            .map(|cap| ConvexSet::boxed(vec![T::zero(); d], vec![cast::<T>(*cap); d]))
            .collect::<Result<_>>()?;
        let mut quad = QuadraticGame::new(p, q, vec![T::zero(); n], sets)?;
        if self.coupled {
            let mut g = Mat::zeros(d, joint);
            for k in 0..d {
                for j in 0..n {
                    g[(k, j * d + k)] = T::one();
                }
            }
            let h: Vec<T> = self.market_caps.iter().map(|v| cast(*v)).collect();
            quad = quad.with_affine_constraint(g, h)?;
        }
        Ok(quad)
    }
}

/// Draws and materializes an instance in one step.
pub fn build_cournot<T: Scalar>(
    players: usize,
    horizon: usize,
    master_seed: u64,
) -> Result<(GameSpec<T>, CournotParams)> {
    let params = CournotParams::draw(players, horizon, master_seed)?;
    let game = params.build()?;
    Ok((game, params))
}

fn micro_params(coupled: bool) -> CournotParams {
    CournotParams {
        players: 2,
        horizon: 1,
        c: vec![-4.0],
        player_caps: vec![9.0, 9.0],
        market_caps: vec![3.0],
        coupled,
    }
}

/// Two producers, one step, price offset −4, shared capacity 3: the smallest
/// instance whose equilibrium solves by hand, used as a fixture across the
/// crate. The capacity binds; the equilibrium is (1.5, 1.5) with shadow
/// price 2.
pub fn micro_game<T: Scalar>() -> (GameSpec<T>, CournotParams) {
    let params = micro_params(true);
    let game = params.build().expect("micro parameters are valid");
    (game, params)
}

/// The micro instance with the capacity row dropped; the equilibrium moves
/// out to (2, 2).
pub fn micro_game_uncoupled<T: Scalar>() -> (GameSpec<T>, CournotParams) {
    let params = micro_params(false);
    let game = params.build().expect("micro parameters are valid");
    (game, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn micro_costs_and_price_taking_gradients_match_hand_values() {
        let (game, params) = micro_game::<f64>();
        // J_2 = 2a₂² + a₁a₂ − 8a₂.
        assert_relative_eq!(
            game.eval_cost(1, &[1.5, 1.5]).unwrap(),
            -5.25,
            epsilon = 1e-12
        );
        // Price-taking block: 3a₁ + a₂ − 8, not the full partial 4a₁ + a₂ − 8.
        let m = game.game_mapping(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(m[0], -4.0, epsilon = 1e-12);
        let quad = params.quadratic::<f64>().unwrap();
        let full = quad.block_gradient(0, &[1.0, 1.0]);
        assert_relative_eq!(full[0], -3.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_form_reproduces_the_closure_costs() {
        let params = CournotParams::draw(3, 4, 99).unwrap();
        let game = params.build::<f64>().unwrap();
        let quad = params.quadratic::<f64>().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..25 {
            let a: Vec<f64> = (0..params.joint_dim())
                .map(|_| rng.random_range(0.0..9.0))
                .collect();
            for i in 0..params.players {
                assert_relative_eq!(
                    game.eval_cost(i, &a).unwrap(),
                    quad.cost(i, &a),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn drawn_instances_have_the_documented_shape() {
        let params = CournotParams::draw(3, 4, 7).unwrap();
        assert_eq!(params.joint_dim(), 12);
        assert!(params.c.iter().all(|v| v.is_finite()));
        assert!(params
            .market_caps
            .iter()
            .all(|v| *v > 9.0 && *v < 109.0));
        assert_eq!(params.player_caps, vec![9.0, 9.0, 9.0]);

        let game = params.build::<f64>().unwrap();
        assert_eq!(game.players(), 3);
        assert_eq!(game.block_dim(), 4);
        assert_eq!(game.num_constraints(), 4);
        let set = game.action_set(0).unwrap();
        assert!(set.contains(&[0.0, 9.0, 4.5, 0.1], 0.0).unwrap());
        assert!(!set.contains(&[9.1, 0.0, 0.0, 0.0], 1e-9).unwrap());
    }

    #[test]
    fn draws_replay_from_the_master_seed() {
        let a = CournotParams::draw(4, 3, 123).unwrap();
        let b = CournotParams::draw(4, 3, 123).unwrap();
        assert_eq!(a, b);
        let c = CournotParams::draw(4, 3, 124).unwrap();
        assert_ne!(a.c, c.c);
    }

    #[test]
    fn capacity_rows_sum_production_per_step() {
        let params = CournotParams::draw(3, 2, 11).unwrap();
        let game = params.build::<f64>().unwrap();
        let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let g = game.constraint_values(&a).unwrap();
        assert_relative_eq!(g[0], 9.0 - params.market_caps[0], epsilon = 1e-12);
        assert_relative_eq!(g[1], 12.0 - params.market_caps[1], epsilon = 1e-12);
        let jac = game.constraint_jacobian(&a).unwrap();
        assert_eq!(jac[0], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(jac[1], vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn uncoupled_build_drops_the_capacity_rows() {
        let (game, params) = micro_game_uncoupled::<f64>();
        assert_eq!(game.num_constraints(), 0);
        assert!(!params.coupled);
        assert!(params.quadratic::<f64>().unwrap().constraint().is_none());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(CournotParams::draw(1, 4, 0).is_err());
        assert!(CournotParams::draw(2, 0, 0).is_err());
        let mut p = micro_params(true);
        p.c = vec![-4.0, 1.0];
        assert!(p.validate().is_err());
        let mut p = micro_params(true);
        p.market_caps = vec![-3.0];
        assert!(p.build::<f64>().is_err());
    }

    proptest! {
        // The supplied mapping and the full gradient differ by exactly
        // (2/N)·a^i per block: the part of the price the player ignores.
        #[test]
        fn price_taking_gap_is_the_own_action_term(
            a0 in 0.0..9.0f64,
            a1 in 0.0..9.0f64,
        ) {
            let (game, params) = micro_game::<f64>();
            let quad = params.quadratic::<f64>().unwrap();
            let a = [a0, a1];
            let supplied = game.game_mapping(&a).unwrap();
            for i in 0..2 {
                let full = quad.block_gradient(i, &a);
                prop_assert!((full[0] - supplied[i] - a[i]).abs() < 1e-12);
            }
        }
    }
}
