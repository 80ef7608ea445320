//! Game description: N players, each steering a block of dimension d inside
//! its own convex action set, private costs J_i defined on all of R^{Nd},
//! and an optional shared coupling constraint g(a) <= 0 in R^n.
//!
//! Costs are plain closures so the learner can stay strictly payoff-based;
//! analytic block gradients and the constraint Jacobian are optional extras
//! that only the equilibrium oracle and the diagnostics need.

use crate::error::{Error, Result};
use crate::geometry::ConvexSet;
use crate::linalg::dot;
use crate::scalar::Scalar;

pub type CostFn<T> = Box<dyn Fn(&[T]) -> T + Send + Sync>;
/// Block gradient of player i's cost with respect to its own block.
pub type BlockGradient<T> = Box<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
/// Shared constraint; returns all n rows at once.
pub type ConstraintFn<T> = Box<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
/// Jacobian of the constraint: n rows, each of length N*d.
pub type ConstraintJacobian<T> = Box<dyn Fn(&[T]) -> Vec<Vec<T>> + Send + Sync>;

/// Index of a decision maker in the extended game: the regular players
/// `0..N`, or the dual player that prices the coupling constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Agent {
    Player(usize),
    Dual,
}

/// A joint action in R^{Nd}, blocked per player.
#[derive(Clone, Debug, PartialEq)]
pub struct JointAction<T> {
    values: Vec<T>,
    block_dim: usize,
}

impl<T: Scalar> JointAction<T> {
    pub fn new(values: Vec<T>, players: usize, block_dim: usize) -> Result<Self> {
        if values.len() != players * block_dim {
            return Err(Error::DimensionMismatch {
                context: "joint action",
                expected: players * block_dim,
                got: values.len(),
            });
        }
        Ok(JointAction { values, block_dim })
    }

    pub fn block(&self, i: usize) -> &[T] {
        &self.values[i * self.block_dim..(i + 1) * self.block_dim]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

/// Multipliers for the coupling constraint; componentwise nonnegative.
/// The invariant is enforced here at construction and preserved by the dual
/// update (which projects onto the orthant), not assumed anywhere else.
#[derive(Clone, Debug, PartialEq)]
pub struct DualVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> DualVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| *v < T::zero()) {
            return Err(Error::InvalidParameter(
                "dual vector has a negative component".into(),
            ));
        }
        Ok(DualVector { values })
    }

    pub fn zeros(n: usize) -> Self {
        DualVector {
            values: vec![T::zero(); n],
        }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

pub struct GameSpec<T: Scalar> {
    players: usize,
    block_dim: usize,
    constraints: usize,
    costs: Vec<CostFn<T>>,
    gradients: Option<Vec<BlockGradient<T>>>,
    constraint: Option<ConstraintFn<T>>,
    constraint_jacobian: Option<ConstraintJacobian<T>>,
    action_sets: Vec<ConvexSet<T>>,
}

impl<T: Scalar> GameSpec<T> {
    /// A game without coupling constraints. All action sets must share one
    /// block dimension d.
    pub fn new(costs: Vec<CostFn<T>>, action_sets: Vec<ConvexSet<T>>) -> Result<Self> {
        if costs.is_empty() {
            return Err(Error::InvalidParameter("game needs at least one player".into()));
        }
        if costs.len() != action_sets.len() {
            return Err(Error::DimensionMismatch {
                context: "costs vs action sets",
                expected: costs.len(),
                got: action_sets.len(),
            });
        }
        let block_dim = action_sets[0].dim();
        for set in &action_sets {
            if set.dim() != block_dim {
                return Err(Error::DimensionMismatch {
                    context: "action set block dimension",
                    expected: block_dim,
                    got: set.dim(),
                });
            }
        }
        Ok(GameSpec {
            players: costs.len(),
            block_dim,
            constraints: 0,
            costs,
            gradients: None,
            constraint: None,
            constraint_jacobian: None,
            action_sets,
        })
    }

    pub fn with_gradients(mut self, gradients: Vec<BlockGradient<T>>) -> Result<Self> {
        if gradients.len() != self.players {
            return Err(Error::DimensionMismatch {
                context: "gradient evaluators",
                expected: self.players,
                got: gradients.len(),
            });
        }
        self.gradients = Some(gradients);
        Ok(self)
    }

    pub fn with_constraint(
        mut self,
        rows: usize,
        constraint: ConstraintFn<T>,
        jacobian: Option<ConstraintJacobian<T>>,
    ) -> Result<Self> {
        if rows == 0 {
            return Err(Error::InvalidParameter(
                "coupling constraint with zero rows".into(),
            ));
        }
        self.constraints = rows;
        self.constraint = Some(constraint);
        self.constraint_jacobian = jacobian;
        Ok(self)
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    pub fn joint_dim(&self) -> usize {
        self.players * self.block_dim
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints
    }

    pub fn has_gradients(&self) -> bool {
        self.gradients.is_some()
    }

    pub fn has_constraint_jacobian(&self) -> bool {
        self.constraints == 0 || self.constraint_jacobian.is_some()
    }

    pub fn action_sets(&self) -> &[ConvexSet<T>] {
        &self.action_sets
    }

    pub fn action_set(&self, i: usize) -> Result<&ConvexSet<T>> {
        self.check_player(i)?;
        Ok(&self.action_sets[i])
    }

    pub fn block<'a>(&self, a: &'a [T], i: usize) -> &'a [T] {
        &a[i * self.block_dim..(i + 1) * self.block_dim]
    }

    /// Projects a joint vector blockwise onto the product of action sets.
    pub fn project_joint(&self, a: &[T]) -> Result<Vec<T>> {
        self.check_joint(a)?;
        let mut out = Vec::with_capacity(a.len());
        for (i, set) in self.action_sets.iter().enumerate() {
            out.extend(set.project(self.block(a, i))?);
        }
        Ok(out)
    }

    pub fn joint_action(&self, values: Vec<T>) -> Result<JointAction<T>> {
        JointAction::new(values, self.players, self.block_dim)
    }

    /// J_i(a).
    pub fn eval_cost(&self, i: usize, a: &[T]) -> Result<T> {
        self.check_player(i)?;
        self.check_joint(a)?;
        Ok((self.costs[i])(a))
    }

    /// Stacked block gradients (dJ_1/da^1, ..., dJ_N/da^N) in R^{Nd}.
    pub fn game_mapping(&self, a: &[T]) -> Result<Vec<T>> {
        self.check_joint(a)?;
        let grads = self
            .gradients
            .as_ref()
            .ok_or(Error::Unsupported("gradient evaluators"))?;
        let mut out = Vec::with_capacity(self.joint_dim());
        for (i, grad) in grads.iter().enumerate() {
            let block = grad(a);
            if block.len() != self.block_dim {
                return Err(Error::DimensionMismatch {
                    context: "gradient block",
                    expected: self.block_dim,
                    got: block.len(),
                });
            }
            let _ = i;
            out.extend(block);
        }
        Ok(out)
    }

    /// g(a) in R^n; empty when the game has no coupling constraint.
    pub fn constraint_values(&self, a: &[T]) -> Result<Vec<T>> {
        self.check_joint(a)?;
        match &self.constraint {
            None => Ok(Vec::new()),
            Some(g) => {
                let v = g(a);
                if v.len() != self.constraints {
                    return Err(Error::DimensionMismatch {
                        context: "constraint rows",
                        expected: self.constraints,
                        got: v.len(),
                    });
                }
                Ok(v)
            }
        }
    }

    /// Rows of dg/da; empty when the game has no coupling constraint.
    pub fn constraint_jacobian(&self, a: &[T]) -> Result<Vec<Vec<T>>> {
        self.check_joint(a)?;
        if self.constraints == 0 {
            return Ok(Vec::new());
        }
        let jac = self
            .constraint_jacobian
            .as_ref()
            .ok_or(Error::Unsupported("constraint Jacobian"))?;
        let rows = jac(a);
        if rows.len() != self.constraints {
            return Err(Error::DimensionMismatch {
                context: "constraint Jacobian rows",
                expected: self.constraints,
                got: rows.len(),
            });
        }
        for row in &rows {
            if row.len() != self.joint_dim() {
                return Err(Error::DimensionMismatch {
                    context: "constraint Jacobian row",
                    expected: self.joint_dim(),
                    got: row.len(),
                });
            }
        }
        Ok(rows)
    }

    /// The mapping of the extended game on R^{Nd+n}: player blocks carry
    /// dJ_i/da^i + sum_j lambda_j dg_j/da^i, the trailing dual block is -g(a).
    /// With lambda = 0 the player blocks reduce to the plain game mapping.
    pub fn extended_mapping(&self, a: &[T], lambda: &[T]) -> Result<Vec<T>> {
        self.check_joint(a)?;
        self.check_dual(lambda)?;
        let mut out = self.game_mapping(a)?;
        if self.constraints > 0 {
            let jac = self.constraint_jacobian(a)?;
            for (lam, row) in lambda.iter().zip(&jac) {
                if *lam != T::zero() {
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += *lam * *r;
                    }
                }
            }
            let g = self.constraint_values(a)?;
            out.extend(g.into_iter().map(|v| -v));
        }
        Ok(out)
    }

    /// Cost of agent `who` in the extended game: players pay
    /// J_i(a) + (lambda, g(a)), the dual player pays -(lambda, g(a)).
    pub fn associated_cost(&self, who: Agent, a: &[T], lambda: &[T]) -> Result<T> {
        self.check_joint(a)?;
        self.check_dual(lambda)?;
        let penalty = dot(lambda, &self.constraint_values(a)?);
        match who {
            Agent::Player(i) => Ok(self.eval_cost(i, a)? + penalty),
            Agent::Dual => Ok(-penalty),
        }
    }

    fn check_player(&self, i: usize) -> Result<()> {
        if i >= self.players {
            return Err(Error::IndexOutOfRange {
                context: "player",
                index: i,
                size: self.players,
            });
        }
        Ok(())
    }

    fn check_joint(&self, a: &[T]) -> Result<()> {
        if a.len() != self.joint_dim() {
            return Err(Error::DimensionMismatch {
                context: "joint action",
                expected: self.joint_dim(),
                got: a.len(),
            });
        }
        Ok(())
    }

    fn check_dual(&self, lambda: &[T]) -> Result<()> {
        if lambda.len() != self.constraints {
            return Err(Error::DimensionMismatch {
                context: "dual vector",
                expected: self.constraints,
                got: lambda.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::cournot;
    use approx::assert_relative_eq;

    #[test]
    fn micro_cost_matches_hand_value() {
        let (game, _) = cournot::micro_game::<f64>();
        // J_1(1,1) = 1 + 2*((1+1)/2 - 4)*1 = -5
        assert_relative_eq!(game.eval_cost(0, &[1.0, 1.0]).unwrap(), -5.0);
        assert_relative_eq!(game.eval_cost(1, &[1.0, 1.0]).unwrap(), -5.0);
    }

    #[test]
    fn micro_mapping_matches_hand_value() {
        let (game, _) = cournot::micro_game::<f64>();
        let m = game.game_mapping(&[1.0, 1.0]).unwrap();
        assert_relative_eq!(m[0], -4.0);
        assert_relative_eq!(m[1], -4.0);
    }

    #[test]
    fn micro_extended_mapping_vanishes_at_equilibrium() {
        let (game, _) = cournot::micro_game::<f64>();
        let m = game.extended_mapping(&[1.5, 1.5], &[2.0]).unwrap();
        for v in m {
            assert_relative_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn extended_mapping_with_zero_multiplier_reduces_to_game_mapping() {
        let (game, _) = cournot::micro_game::<f64>();
        let a = [2.5, 0.75];
        let ext = game.extended_mapping(&a, &[0.0]).unwrap();
        let plain = game.game_mapping(&a).unwrap();
        assert_eq!(&ext[..2], plain.as_slice());
        assert_relative_eq!(ext[2], -(2.5 + 0.75 - 3.0));
    }

    #[test]
    fn extended_mapping_is_affine_in_the_multiplier() {
        let (game, _) = cournot::micro_game::<f64>();
        let a = [1.0, 2.0];
        let at0 = game.extended_mapping(&a, &[0.0]).unwrap();
        let at1 = game.extended_mapping(&a, &[1.0]).unwrap();
        let at3 = game.extended_mapping(&a, &[3.0]).unwrap();
        for k in 0..2 {
            let slope = at1[k] - at0[k];
            assert_relative_eq!(at3[k], at0[k] + 3.0 * slope, epsilon = 1e-12);
        }
    }

    #[test]
    fn associated_cost_matches_hand_values() {
        let (game, _) = cournot::micro_game::<f64>();
        let a = [1.5, 1.5];
        // J_1(1.5,1.5) = 2*2.25 + 2.25 - 12 = -5.25 and g = 0 there
        assert_relative_eq!(
            game.associated_cost(Agent::Player(0), &a, &[2.0]).unwrap(),
            -5.25
        );
        assert_relative_eq!(game.associated_cost(Agent::Dual, &a, &[2.0]).unwrap(), 0.0);
        // with lambda = 0 the penalty vanishes everywhere
        let b = [1.0, 2.5];
        assert_relative_eq!(
            game.associated_cost(Agent::Player(1), &b, &[0.0]).unwrap(),
            game.eval_cost(1, &b).unwrap()
        );
    }

    #[test]
    fn indices_and_dimensions_are_checked() {
        let (game, _) = cournot::micro_game::<f64>();
        assert!(matches!(
            game.eval_cost(3, &[1.0, 1.0]),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            game.eval_cost(0, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            game.extended_mapping(&[1.0, 1.0], &[1.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            game.associated_cost(Agent::Player(2), &[1.0, 1.0], &[0.0]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn gradient_free_games_refuse_mapping_queries() {
        let costs: Vec<CostFn<f64>> = vec![Box::new(|a: &[f64]| a[0] * a[0])];
        let sets = vec![ConvexSet::boxed(vec![0.0], vec![1.0]).unwrap()];
        let game = GameSpec::new(costs, sets).unwrap();
        assert!(matches!(
            game.game_mapping(&[0.5]),
            Err(Error::Unsupported("gradient evaluators"))
        ));
    }

    #[test]
    fn dual_vector_enforces_nonnegativity() {
        assert!(DualVector::new(vec![0.0, 1.0]).is_ok());
        assert!(DualVector::<f64>::new(vec![-0.1]).is_err());
    }

    #[test]
    fn joint_action_blocks() {
        let a = JointAction::new(vec![1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(a.block(0), &[1.0, 2.0]);
        assert_eq!(a.block(1), &[3.0, 4.0]);
        assert!(JointAction::new(vec![1.0; 3], 2, 2).is_err());
    }
}
