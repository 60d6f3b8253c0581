//! Small synthetic games with known answers, used as oracles.

use super::{Family, GameInstance, InnerMethod, InstanceConstants, ParametricGame, StrategyProfile};
use crate::error::{Error, Result};
use crate::spaces::{Rng, Space};

/// `u_i(x; theta) = -(x_i - theta)^2` with `x_i` in `[-2, 2]`, `theta` in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct QuadraticToy {
    n: usize,
    strategy: Space,
    param: Space,
}

pub fn quadratic_toy(n: usize) -> Result<QuadraticToy> {
    if n == 0 {
        return Err(Error::Config("quadratic toy needs at least one player".into()));
    }
    Ok(QuadraticToy {
        n,
        strategy: Space::cube(1, -2.0, 2.0)?,
        param: Space::cube(1, -1.0, 1.0)?,
    })
}

impl ParametricGame for QuadraticToy {
    fn n_players(&self) -> usize {
        self.n
    }

    fn strategy_space(&self, _player: usize) -> &Space {
        &self.strategy
    }

    fn param_space(&self) -> &Space {
        &self.param
    }

    fn payoffs(&self, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        x.values().iter().map(|xi| -(xi - theta[0]).powi(2)).collect()
    }

    fn grad_own(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        vec![-2.0 * (x.block(player)[0] - theta[0])]
    }

    fn grad_theta(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        vec![2.0 * (x.block(player)[0] - theta[0])]
    }

    fn best_response(
        &self,
        _player: usize,
        _x: &StrategyProfile,
        theta: &[f64],
    ) -> Option<(Vec<f64>, InnerMethod)> {
        Some((vec![theta[0].clamp(-2.0, 2.0)], InnerMethod::ClosedForm))
    }
}

/// Every payoff is the same constant.
#[derive(Clone, Debug)]
pub struct ConstantGame {
    spaces: Vec<Space>,
    param: Space,
    value: f64,
}

impl ConstantGame {
    pub fn new(spaces: Vec<Space>, param: Space, value: f64) -> Result<Self> {
        for s in &spaces {
            s.validate()?;
        }
        param.validate()?;
        Ok(ConstantGame { spaces, param, value })
    }
}

impl ParametricGame for ConstantGame {
    fn n_players(&self) -> usize {
        self.spaces.len()
    }

    fn strategy_space(&self, player: usize) -> &Space {
        &self.spaces[player]
    }

    fn param_space(&self) -> &Space {
        &self.param
    }

    fn payoffs(&self, _x: &StrategyProfile, _theta: &[f64]) -> Vec<f64> {
        vec![self.value; self.spaces.len()]
    }

    fn grad_own(&self, player: usize, _x: &StrategyProfile, _theta: &[f64]) -> Vec<f64> {
        vec![0.0; self.spaces[player].dim()]
    }

    fn grad_theta(&self, _player: usize, _x: &StrategyProfile, _theta: &[f64]) -> Vec<f64> {
        vec![0.0; self.param.dim()]
    }
}

/// Two-player bimatrix game in mixed strategies whose payoff matrices are
/// linear in `theta`: `M_i(theta) = sum_k theta_k B_ik`.
#[derive(Clone, Debug)]
pub struct RandomMatrixGame {
    basis: Vec<[Vec<Vec<f64>>; 2]>,
    spaces: [Space; 2],
    param: Space,
}

impl RandomMatrixGame {
    pub fn new(basis: Vec<[Vec<Vec<f64>>; 2]>) -> Result<Self> {
        let first = basis
            .first()
            .ok_or_else(|| Error::Config("empty payoff basis".into()))?;
        let rows = first[0].len();
        let cols = first[0].first().map_or(0, |r| r.len());
        if rows == 0 || cols == 0 {
            return Err(Error::Config("payoff matrices must be nonempty".into()));
        }
        for pair in &basis {
            for m in pair {
                if m.len() != rows || m.iter().any(|r| r.len() != cols) {
                    return Err(Error::Config("payoff matrices differ in shape".into()));
                }
            }
        }
        Ok(RandomMatrixGame {
            spaces: [Space::simplex(rows, 1.0)?, Space::simplex(cols, 1.0)?],
            param: Space::cube(basis.len(), -1.0, 1.0)?,
            basis,
        })
    }

    pub fn matrix(&self, player: usize, theta: &[f64]) -> Vec<Vec<f64>> {
        let shape = &self.basis[0][player];
        let mut m = vec![vec![0.0; shape[0].len()]; shape.len()];
        for (pair, t) in self.basis.iter().zip(theta) {
            for (row, brow) in m.iter_mut().zip(&pair[player]) {
                for (v, b) in row.iter_mut().zip(brow) {
                    *v += t * b;
                }
            }
        }
        m
    }

    /// Expected payoff of each pure action of `player` against the opponent's
    /// mixed strategy.
    fn action_values(&self, player: usize, m: &[Vec<f64>], x: &StrategyProfile) -> Vec<f64> {
        let (s0, s1) = (x.block(0), x.block(1));
        if player == 0 {
            m.iter().map(|row| crate::spaces::dot(row, s1)).collect()
        } else {
            (0..s1.len())
                .map(|c| m.iter().zip(s0).map(|(row, p)| row[c] * p).sum())
                .collect()
        }
    }
}

impl ParametricGame for RandomMatrixGame {
    fn n_players(&self) -> usize {
        2
    }

    fn strategy_space(&self, player: usize) -> &Space {
        &self.spaces[player]
    }

    fn param_space(&self) -> &Space {
        &self.param
    }

    fn payoffs(&self, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        (0..2).map(|i| self.payoff(i, x, theta)).collect()
    }

    fn payoff(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> f64 {
        let m = self.matrix(player, theta);
        crate::spaces::dot(&self.action_values(player, &m, x), x.block(player))
    }

    fn grad_own(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let m = self.matrix(player, theta);
        self.action_values(player, &m, x)
    }

    fn grad_theta(&self, player: usize, x: &StrategyProfile, _theta: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|pair| {
                let v = self.action_values(player, &pair[player], x);
                crate::spaces::dot(&v, x.block(player))
            })
            .collect()
    }

    fn best_response(
        &self,
        player: usize,
        x: &StrategyProfile,
        theta: &[f64],
    ) -> Option<(Vec<f64>, InnerMethod)> {
        let m = self.matrix(player, theta);
        let values = self.action_values(player, &m, x);
        let mut best = 0;
        for (k, v) in values.iter().enumerate() {
            if *v > values[best] {
                best = k;
            }
        }
        let mut br = vec![0.0; values.len()];
        br[best] = 1.0;
        Some((br, InnerMethod::ClosedForm))
    }
}

pub(super) fn sample_quadratic(rng: &mut Rng) -> Result<Option<GameInstance>> {
    let theta = rng.uniform_in(-1.0, 1.0);
    Ok(Some(GameInstance {
        family: Family::QuadraticToy,
        theta_star: vec![theta],
        constants: InstanceConstants::QuadraticToy { n_players: 2 },
        x_star: vec![theta, theta],
        seed: 0,
    }))
}

/// Equilibrium of a 2x2 bimatrix game by support enumeration. Returns the
/// probability of the first action for each player; `None` for degenerate
/// games.
fn solve_two_by_two(a: &[Vec<f64>], b: &[Vec<f64>]) -> Option<(f64, f64)> {
    for r in 0..2 {
        for c in 0..2 {
            if a[r][c] > a[1 - r][c] && b[r][c] > b[r][1 - c] {
                let p = if r == 0 { 1.0 } else { 0.0 };
                let q = if c == 0 { 1.0 } else { 0.0 };
                return Some((p, q));
            }
        }
    }
    // q makes the row player indifferent, p the column player
    let den_q = a[0][0] - a[0][1] - a[1][0] + a[1][1];
    let den_p = b[0][0] - b[0][1] - b[1][0] + b[1][1];
    if den_q.abs() < 1e-9 || den_p.abs() < 1e-9 {
        return None;
    }
    let q = (a[1][1] - a[0][1]) / den_q;
    let p = (b[1][1] - b[1][0]) / den_p;
    if (0.0..=1.0).contains(&p) && (0.0..=1.0).contains(&q) {
        Some((p, q))
    } else {
        None
    }
}

pub(super) fn sample_random_matrix(rng: &mut Rng) -> Result<Option<GameInstance>> {
    let k = 2;
    let mut draw = || -> Vec<Vec<f64>> {
        (0..2)
            .map(|_| (0..2).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
            .collect()
    };
    let basis: Vec<[Vec<Vec<f64>>; 2]> = (0..k).map(|_| [draw(), draw()]).collect();
    let theta: Vec<f64> = (0..k).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let game = RandomMatrixGame::new(basis.clone())?;
    let Some((p, q)) = solve_two_by_two(&game.matrix(0, &theta), &game.matrix(1, &theta)) else {
        return Ok(None);
    };
    Ok(Some(GameInstance {
        family: Family::RandomMatrix,
        theta_star: theta,
        constants: InstanceConstants::RandomMatrix { basis },
        x_star: vec![p, 1.0 - p, q, 1.0 - q],
        seed: 0,
    }))
}
