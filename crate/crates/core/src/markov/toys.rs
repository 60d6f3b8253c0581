use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::StrategyProfile;
use crate::spaces::{Rng, Space};

use super::{check_discount, MarkovGame, TransitionGrad};

/// One state, `r_i = -(a_i - theta)^2`, `a_i in [-2, 2]`, `theta in [-1, 1]`.
#[derive(Clone, Debug)]
pub struct SingleStateQuadratic {
    n_players: usize,
    discount: f64,
    action: Space,
    params: Space,
}

impl SingleStateQuadratic {
    pub fn new(n_players: usize, discount: f64) -> Result<Self> {
        check_discount(discount)?;
        if n_players == 0 {
            return Err(Error::Config("need at least one player".into()));
        }
        Ok(SingleStateQuadratic {
            n_players,
            discount,
            action: Space::cube(1, -2.0, 2.0)?,
            params: Space::cube(1, -1.0, 1.0)?,
        })
    }
}

impl MarkovGame for SingleStateQuadratic {
    fn n_players(&self) -> usize {
        self.n_players
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_space(&self, _player: usize) -> &Space {
        &self.action
    }

    fn param_space(&self) -> &Space {
        &self.params
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn initial_state(&self, _rng: &mut Rng) -> Vec<f64> {
        vec![0.0]
    }

    fn rewards(&self, _s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        a.values().iter().map(|v| -(v - theta[0]).powi(2)).collect()
    }

    fn reward_grad_action(&self, player: usize, _s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_players];
        g[player] = -2.0 * (a.values()[player] - theta[0]);
        g
    }

    fn reward_grad_theta(&self, player: usize, _s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        vec![2.0 * (a.values()[player] - theta[0])]
    }

    fn step(&self, _s: &[f64], _a: &StrategyProfile, _rng: &mut Rng) -> Result<(Vec<f64>, TransitionGrad)> {
        Ok((vec![0.0], TransitionGrad::Exogenous))
    }

    fn reward_bound(&self) -> f64 {
        9.0
    }
}

/// One state with `r_i = theta` regardless of play. Useful for checking
/// returns and horizons.
#[derive(Clone, Debug)]
pub struct ConstantRewardGame {
    n_players: usize,
    discount: f64,
    bound: f64,
    action: Space,
    params: Space,
}

impl ConstantRewardGame {
    pub fn new(n_players: usize, discount: f64, theta_bound: f64) -> Result<Self> {
        check_discount(discount)?;
        Ok(ConstantRewardGame {
            n_players,
            discount,
            bound: theta_bound,
            action: Space::cube(1, -1.0, 1.0)?,
            params: Space::cube(1, -theta_bound, theta_bound)?,
        })
    }
}

impl MarkovGame for ConstantRewardGame {
    fn n_players(&self) -> usize {
        self.n_players
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_space(&self, _player: usize) -> &Space {
        &self.action
    }

    fn param_space(&self) -> &Space {
        &self.params
    }

    fn discount(&self) -> f64 {
        self.discount
    }

    fn initial_state(&self, _rng: &mut Rng) -> Vec<f64> {
        vec![0.0]
    }

    fn rewards(&self, _s: &[f64], _a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        vec![theta[0]; self.n_players]
    }

    fn reward_grad_action(&self, _p: usize, _s: &[f64], _a: &StrategyProfile, _t: &[f64]) -> Vec<f64> {
        vec![0.0; self.n_players]
    }

    fn reward_grad_theta(&self, _p: usize, _s: &[f64], _a: &StrategyProfile, _t: &[f64]) -> Vec<f64> {
        vec![1.0]
    }

    fn step(&self, _s: &[f64], _a: &StrategyProfile, _rng: &mut Rng) -> Result<(Vec<f64>, TransitionGrad)> {
        Ok((vec![0.0], TransitionGrad::Exogenous))
    }

    fn reward_bound(&self) -> f64 {
        self.bound
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LinearTrackingRaw {
    n_players: usize,
    rho: f64,
    kappa: f64,
    sigma: f64,
    discount: f64,
    #[serde(default = "default_action_bound")]
    action_bound: f64,
    /// `s_0` is drawn uniformly from this range.
    #[serde(default = "default_initial")]
    initial: (f64, f64),
}

fn default_initial() -> (f64, f64) {
    (-1.0, 1.0)
}

fn default_action_bound() -> f64 {
    3.0
}

/// Scalar state `s' = rho s + kappa mean(a) + sigma xi`, `xi ~ N(0, 1)`,
/// rewards `r_i = -(a_i - theta_0 - theta_1 s)^2`, `theta in [-1, 1]^2`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "LinearTrackingRaw", into = "LinearTrackingRaw")]
pub struct LinearTrackingGame {
    raw: LinearTrackingRaw,
    action: Space,
    params: Space,
}

impl TryFrom<LinearTrackingRaw> for LinearTrackingGame {
    type Error = Error;

    fn try_from(raw: LinearTrackingRaw) -> Result<Self> {
        check_discount(raw.discount)?;
        if raw.n_players == 0
            || raw.rho.abs() + raw.kappa.abs() >= 1.0
            || raw.sigma < 0.0
            || !(raw.initial.0 <= raw.initial.1)
        {
            return Err(Error::Config(
                "linear tracking needs players > 0, |rho| + |kappa| < 1 and sigma >= 0".into(),
            ));
        }
        Ok(LinearTrackingGame {
            action: Space::cube(1, -raw.action_bound, raw.action_bound)?,
            params: Space::cube(2, -1.0, 1.0)?,
            raw,
        })
    }
}

impl From<LinearTrackingGame> for LinearTrackingRaw {
    fn from(g: LinearTrackingGame) -> Self {
        g.raw
    }
}

impl LinearTrackingGame {
    pub fn new(n_players: usize, rho: f64, kappa: f64, sigma: f64, discount: f64) -> Result<Self> {
        LinearTrackingRaw {
            n_players,
            rho,
            kappa,
            sigma,
            discount,
            action_bound: default_action_bound(),
            initial: default_initial(),
        }
        .try_into()
    }

    /// Same game with `s_0 ~ U[lo, hi]`.
    pub fn with_initial_range(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.raw.initial = (lo, hi);
        self.validate()?;
        Ok(self)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        LinearTrackingGame::try_from(self.raw.clone()).map(|_| ())
    }

    pub fn sigma(&self) -> f64 {
        self.raw.sigma
    }
}

impl MarkovGame for LinearTrackingGame {
    fn n_players(&self) -> usize {
        self.raw.n_players
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_space(&self, _player: usize) -> &Space {
        &self.action
    }

    fn param_space(&self) -> &Space {
        &self.params
    }

    fn discount(&self) -> f64 {
        self.raw.discount
    }

    fn initial_state(&self, rng: &mut Rng) -> Vec<f64> {
        let (lo, hi) = self.raw.initial;
        vec![if lo == hi { lo } else { rng.uniform_in(lo, hi) }]
    }

    fn rewards(&self, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let target = theta[0] + theta[1] * s[0];
        a.values().iter().map(|v| -(v - target).powi(2)).collect()
    }

    fn reward_grad_action(&self, player: usize, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.raw.n_players];
        g[player] = -2.0 * (a.values()[player] - theta[0] - theta[1] * s[0]);
        g
    }

    fn reward_grad_state(&self, player: usize, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        vec![2.0 * theta[1] * (a.values()[player] - theta[0] - theta[1] * s[0])]
    }

    fn reward_grad_theta(&self, player: usize, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let e = 2.0 * (a.values()[player] - theta[0] - theta[1] * s[0]);
        vec![e, e * s[0]]
    }

    fn step(&self, s: &[f64], a: &StrategyProfile, rng: &mut Rng) -> Result<(Vec<f64>, TransitionGrad)> {
        let n = self.raw.n_players as f64;
        let mean = a.values().iter().sum::<f64>() / n;
        let next = self.raw.rho * s[0] + self.raw.kappa * mean + self.raw.sigma * rng.normal();
        Ok((
            vec![next],
            TransitionGrad::Reparam {
                state: DMatrix::from_element(1, 1, self.raw.rho),
                action: DMatrix::from_element(1, self.raw.n_players, self.raw.kappa / n),
            },
        ))
    }

    fn reward_bound(&self) -> f64 {
        let a = self.raw.action_bound;
        let s0 = self.raw.initial.0.abs().max(self.raw.initial.1.abs());
        let s_max = (s0 + self.raw.kappa.abs() * a + 4.0 * self.raw.sigma) / (1.0 - self.raw.rho.abs());
        (a + 1.0 + s_max).powi(2)
    }
}
