//! Quadratic games: J_i(a) = 1/2 a'P_i a + q_i'a + r_i with an optional
//! affine coupling constraint G a <= h. Costs and gradients are generated
//! from one data set, so the two are consistent by construction; that makes
//! these games the reference material for gradient checks and for rate
//! studies where the smoothed mapping must stay unbiased (affine mappings).

use crate::error::{Error, Result};
use crate::game::{BlockGradient, CostFn, GameSpec};
use crate::geometry::ConvexSet;
use crate::linalg::{dot, Mat};
use crate::scalar::Scalar;

#[derive(Clone)]
pub struct QuadraticGame<T: Scalar> {
    players: usize,
    block_dim: usize,
    /// One symmetric (Nd x Nd) matrix per player.
    p: Vec<Mat<T>>,
    /// One (Nd) offset per player.
    q: Vec<Vec<T>>,
    r: Vec<T>,
    coupling: Option<(Mat<T>, Vec<T>)>,
    sets: Vec<ConvexSet<T>>,
}

impl<T: Scalar> QuadraticGame<T> {
    /// The quadratic part is symmetrized on entry; only the symmetric part of
    /// `p[i]` enters the cost, so this loses nothing.
    pub fn new(
        p: Vec<Mat<T>>,
        q: Vec<Vec<T>>,
        r: Vec<T>,
        sets: Vec<ConvexSet<T>>,
    ) -> Result<Self> {
        if p.is_empty() || p.len() != q.len() || p.len() != r.len() || p.len() != sets.len() {
            return Err(Error::InvalidParameter(
                "quadratic game needs matching p/q/r/action-set counts".into(),
            ));
        }
        let players = p.len();
        let block_dim = sets[0].dim();
        let joint = players * block_dim;
        for set in &sets {
            if set.dim() != block_dim {
                return Err(Error::DimensionMismatch {
                    context: "action set block dimension",
                    expected: block_dim,
                    got: set.dim(),
                });
            }
        }
        let mut p_sym = Vec::with_capacity(players);
        for m in &p {
            if m.rows() != joint || m.cols() != joint {
                return Err(Error::DimensionMismatch {
                    context: "quadratic form",
                    expected: joint,
                    got: m.rows().max(m.cols()),
                });
            }
            p_sym.push(m.symmetric_part());
        }
        for v in &q {
            if v.len() != joint {
                return Err(Error::DimensionMismatch {
                    context: "linear cost term",
                    expected: joint,
                    got: v.len(),
                });
            }
        }
        Ok(QuadraticGame {
            players,
            block_dim,
            p: p_sym,
            q,
            r,
            coupling: None,
            sets,
        })
    }

    pub fn with_affine_constraint(mut self, g: Mat<T>, h: Vec<T>) -> Result<Self> {
        if g.rows() == 0 {
            return Err(Error::InvalidParameter("constraint with zero rows".into()));
        }
        if g.cols() != self.joint_dim() || h.len() != g.rows() {
            return Err(Error::DimensionMismatch {
                context: "affine constraint",
                expected: self.joint_dim(),
                got: g.cols(),
            });
        }
        self.coupling = Some((g, h));
        Ok(self)
    }

    /// Fully decoupled game J_i(a) = 1/2 ||a^i - target_i||^2. Its unique
    /// equilibrium is the blockwise projection of the targets.
    pub fn decoupled(targets: Vec<Vec<T>>, sets: Vec<ConvexSet<T>>) -> Result<Self> {
        if targets.len() != sets.len() || targets.is_empty() {
            return Err(Error::InvalidParameter(
                "decoupled game needs one target per action set".into(),
            ));
        }
        let players = targets.len();
        let d = sets[0].dim();
        let joint = players * d;
        let mut p = Vec::with_capacity(players);
        let mut q = Vec::with_capacity(players);
        let mut r = Vec::with_capacity(players);
        for (i, c) in targets.iter().enumerate() {
            if c.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "target block",
                    expected: d,
                    got: c.len(),
                });
            }
            let mut pi = Mat::zeros(joint, joint);
            let mut qi = vec![T::zero(); joint];
            for k in 0..d {
                pi[(i * d + k, i * d + k)] = T::one();
                qi[i * d + k] = -c[k];
            }
            p.push(pi);
            q.push(qi);
            r.push(dot(c, c) / (T::one() + T::one()));
        }
        QuadraticGame::new(p, q, r, sets)
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn joint_dim(&self) -> usize {
        self.players * self.block_dim
    }

    pub fn cost(&self, i: usize, a: &[T]) -> T {
        let pa = self.p[i].matvec(a);
        dot(a, &pa) / (T::one() + T::one()) + dot(&self.q[i], a) + self.r[i]
    }

    /// E[J_i(x)] under x ~ N(μ, blockdiag(σ_j²·I)): the quadratic cost at the
    /// mean plus half the trace of P_i against the sampling covariance.
    #[allow(clippy::needless_range_loop)] // sigma index j must stay in step with block offsets
    pub fn smoothed_cost(&self, i: usize, mu: &[T], sigmas_per_player: &[f64]) -> T {
        let d = self.block_dim;
        let mut tr = T::zero();
        for j in 0..self.players {
            let s2 = crate::scalar::cast::<T>(sigmas_per_player[j] * sigmas_per_player[j]);
            for k in 0..d {
                let idx = j * d + k;
                tr += self.p[i][(idx, idx)] * s2;
            }
        }
        self.cost(i, mu) + tr / (T::one() + T::one())
    }

    /// dJ_i/da^i, the block of P_i a + q_i belonging to player i.
    pub fn block_gradient(&self, i: usize, a: &[T]) -> Vec<T> {
        let full = self.p[i].matvec(a);
        let d = self.block_dim;
        (i * d..(i + 1) * d)
            .map(|k| full[k] + self.q[i][k])
            .collect()
    }

    /// The stacked mapping is affine, M(a) = A a + b; returns (A, b).
    pub fn mapping_matrix(&self) -> (Mat<T>, Vec<T>) {
        let joint = self.joint_dim();
        let d = self.block_dim;
        let mut a = Mat::zeros(joint, joint);
        let mut b = vec![T::zero(); joint];
        for i in 0..self.players {
            for k in 0..d {
                let row = i * d + k;
                for col in 0..joint {
                    a[(row, col)] = self.p[i][(row, col)];
                }
                b[row] = self.q[i][row];
            }
        }
        (a, b)
    }

    pub fn constraint(&self) -> Option<(&Mat<T>, &[T])> {
        self.coupling.as_ref().map(|(g, h)| (g, h.as_slice()))
    }

    pub fn into_game_spec(self) -> Result<GameSpec<T>> {
        let mut costs: Vec<CostFn<T>> = Vec::with_capacity(self.players);
        let mut grads: Vec<BlockGradient<T>> = Vec::with_capacity(self.players);
        for i in 0..self.players {
            let (p, q, r) = (self.p[i].clone(), self.q[i].clone(), self.r[i]);
            let two = T::one() + T::one();
            costs.push(Box::new(move |a: &[T]| {
                dot(a, &p.matvec(a)) / two + dot(&q, a) + r
            }));
            let (p, q) = (self.p[i].clone(), self.q[i].clone());
            let (d, lo) = (self.block_dim, i * self.block_dim);
            grads.push(Box::new(move |a: &[T]| {
                let full = p.matvec(a);
                (lo..lo + d).map(|k| full[k] + q[k]).collect()
            }));
        }
        let spec = GameSpec::new(costs, self.sets)?.with_gradients(grads)?;
        match self.coupling {
            None => Ok(spec),
            Some((g, h)) => {
                let rows = g.rows();
                let (gc, hc) = (g.clone(), h.clone());
                let constraint = Box::new(move |a: &[T]| {
                    gc.matvec(a)
                        .into_iter()
                        .zip(&hc)
                        .map(|(v, hi)| v - *hi)
                        .collect::<Vec<T>>()
                });
                let jac = Box::new(move |_: &[T]| {
                    (0..g.rows()).map(|r| g.row(r).to_vec()).collect::<Vec<_>>()
                });
                spec.with_constraint(rows, constraint, Some(jac))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_player_coupled() -> QuadraticGame<f64> {
        // J_1 = a_1^2 + a_1 a_2 - 2 a_1, J_2 = 3/2 a_2^2 + a_2 (via r/q terms)
        let p1 = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p2 = Mat::from_rows(&[vec![0.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let sets = vec![
            ConvexSet::boxed(vec![-5.0], vec![5.0]).unwrap(),
            ConvexSet::boxed(vec![-5.0], vec![5.0]).unwrap(),
        ];
        QuadraticGame::new(
            vec![p1, p2],
            vec![vec![-2.0, 0.0], vec![0.0, 1.0]],
            vec![0.0, 0.0],
            sets,
        )
        .unwrap()
        .with_affine_constraint(
            Mat::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            vec![1.5],
        )
        .unwrap()
    }

    #[test]
    fn cost_and_gradient_agree_with_finite_differences() {
        let game = two_player_coupled();
        let a = [0.7, -0.3];
        let h = 1e-6;
        for i in 0..2 {
            let grad = game.block_gradient(i, &a);
            let mut ap = a;
            let mut am = a;
            ap[i] += h;
            am[i] -= h;
            let fd = (game.cost(i, &ap) - game.cost(i, &am)) / (2.0 * h);
            assert_relative_eq!(grad[0], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn mapping_matrix_reproduces_block_gradients() {
        let game = two_player_coupled();
        let (a_mat, b) = game.mapping_matrix();
        for point in [[0.0, 0.0], [1.0, 2.0], [-0.4, 0.9]] {
            let via_matrix: Vec<f64> = a_mat
                .matvec(&point)
                .into_iter()
                .zip(&b)
                .map(|(v, bi)| v + bi)
                .collect();
            let direct: Vec<f64> = (0..2)
                .flat_map(|i| game.block_gradient(i, &point))
                .collect();
            for (x, y) in via_matrix.iter().zip(&direct) {
                assert_relative_eq!(x, y, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn game_spec_conversion_preserves_values() {
        let game = two_player_coupled();
        let spec = game.clone().into_game_spec().unwrap();
        let a = [1.25, -0.5];
        for i in 0..2 {
            assert_relative_eq!(spec.eval_cost(i, &a).unwrap(), game.cost(i, &a));
        }
        let m = spec.game_mapping(&a).unwrap();
        assert_relative_eq!(m[0], game.block_gradient(0, &a)[0]);
        assert_relative_eq!(m[1], game.block_gradient(1, &a)[0]);
        let g = spec.constraint_values(&a).unwrap();
        assert_relative_eq!(g[0], 1.25 - 0.5 - 1.5);
        let jac = spec.constraint_jacobian(&a).unwrap();
        assert_eq!(jac, vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn decoupled_equilibrium_is_the_projected_target() {
        let sets = vec![
            ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            ConvexSet::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        ];
        let game =
            QuadraticGame::decoupled(vec![vec![0.25, 2.0], vec![0.5, 0.75]], sets).unwrap();
        // gradient vanishes at the target, so the projected target solves the VI
        let grad = game.block_gradient(0, &[0.25, 2.0, 0.5, 0.75]);
        assert_relative_eq!(grad[0], 0.0);
        assert_relative_eq!(grad[1], 0.0);
        let (a_mat, _) = game.mapping_matrix();
        // decoupled mapping matrix is the identity
        for r in 0..4 {
            for c in 0..4 {
                assert_relative_eq!(a_mat[(r, c)], if r == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn asymmetric_input_is_symmetrized() {
        let p = Mat::from_rows(&[vec![2.0, 4.0], vec![0.0, 2.0]]).unwrap();
        let sets = vec![
            ConvexSet::boxed(vec![-1.0], vec![1.0]).unwrap(),
            ConvexSet::boxed(vec![-1.0], vec![1.0]).unwrap(),
        ];
        let game = QuadraticGame::new(
            vec![p.clone(), p],
            vec![vec![0.0; 2]; 2],
            vec![0.0; 2],
            sets,
        )
        .unwrap();
        // symmetrized off-diagonal is 2
        let g = game.block_gradient(0, &[0.0, 1.0]);
        assert_relative_eq!(g[0], 2.0);
    }
}
