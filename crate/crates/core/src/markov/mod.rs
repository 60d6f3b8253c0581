//! Parametric Markov games, policies, differentiable rollouts and stochastic
//! gradient descent-ascent for inverse multiagent reinforcement learning.

mod estimators;
mod finite;
mod fisher;
mod policy;
mod sgda;
mod toys;

use std::fmt::Debug;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::StrategyProfile;
use crate::spaces::{Rng, Space};

pub use estimators::{
    backprop, grad_estimator_theta, grad_estimator_x, rollout, PlayerSource, Rollout,
};
pub(crate) use estimators::return_and_grad;
pub use finite::FiniteMarkovGame;
pub use fisher::{StochasticFisherGame, INCOME_RANGE};
pub use policy::{
    ConstantPolicy, LinearPolicy, Policy, PolicySpec, TabularDirect, TabularSoftmax,
};
pub use sgda::{
    mc_certificate, sgda_solve, InverseMarkovGame, MarlTrace, McCertificate, SgdaConfig,
};
pub(crate) use sgda::with_pool;
pub use toys::{ConstantRewardGame, LinearTrackingGame, SingleStateQuadratic};

/// Derivative information for one sampled transition `s -> s'`.
#[derive(Clone, Debug, PartialEq)]
pub enum TransitionGrad {
    /// `s'` does not depend on the state or the actions.
    Exogenous,
    /// Discrete transition: `d log P(s' | s, a) / da` (flattened profile) and
    /// `d / ds` for the sampled `s'`.
    Score { action: Vec<f64>, state: Vec<f64> },
    /// Reparameterized transition `s' = g(s, a, noise)` with Jacobians
    /// `ds'/ds` and `ds'/da` at the drawn noise.
    Reparam {
        state: DMatrix<f64>,
        action: DMatrix<f64>,
    },
    /// No derivative is available; pathwise estimators refuse such games.
    Opaque,
}

/// A Markov game whose rewards are known up to parameters `theta`.
///
/// States are real vectors (finite games use `[index]`); an action profile is
/// one block per player.
pub trait MarkovGame: Send + Sync + Debug {
    fn n_players(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn action_space(&self, player: usize) -> &Space;
    fn param_space(&self) -> &Space;
    fn discount(&self) -> f64;
    fn initial_state(&self, rng: &mut Rng) -> Vec<f64>;
    fn rewards(&self, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64>;

    /// `d r_i / da` over the flattened profile.
    fn reward_grad_action(
        &self,
        player: usize,
        s: &[f64],
        a: &StrategyProfile,
        theta: &[f64],
    ) -> Vec<f64>;

    fn reward_grad_state(
        &self,
        _player: usize,
        _s: &[f64],
        _a: &StrategyProfile,
        _theta: &[f64],
    ) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }

    fn reward_grad_theta(
        &self,
        player: usize,
        s: &[f64],
        a: &StrategyProfile,
        theta: &[f64],
    ) -> Vec<f64>;

    /// Samples the next state.
    fn step(&self, s: &[f64], a: &StrategyProfile, rng: &mut Rng) -> Result<(Vec<f64>, TransitionGrad)>;

    /// Bound on `|r_i|` over states, actions and `Theta`; sets default horizons.
    fn reward_bound(&self) -> f64;

    fn action_dims(&self) -> Vec<usize> {
        (0..self.n_players())
            .map(|i| self.action_space(i).dim())
            .collect()
    }
}

/// Truncation horizon with tail mass below `tail_eps`:
/// `ceil(log(eps (1 - gamma) / R_max) / log(gamma))`, at least 1.
pub fn horizon_for(discount: f64, reward_bound: f64, tail_eps: f64) -> usize {
    if reward_bound <= 0.0 || discount <= 0.0 {
        return 1;
    }
    let h = ((tail_eps * (1.0 - discount) / reward_bound).ln() / discount.ln()).ceil();
    if h.is_finite() && h >= 1.0 {
        h as usize
    } else {
        1
    }
}

/// A finite sequence of state-action pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<StrategyProfile>,
}

impl History {
    pub fn horizon(&self) -> usize {
        self.states.len()
    }

    /// Rows `t, s_0.., a_0.., r_0..` with rewards evaluated at `theta`.
    pub fn write_csv<W: Write>(&self, game: &dyn MarkovGame, theta: &[f64], out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let sd = game.state_dim();
        let ad: usize = game.action_dims().iter().sum();
        let mut header = vec!["t".to_string()];
        header.extend((0..sd).map(|k| format!("s_{k}")));
        header.extend((0..ad).map(|k| format!("a_{k}")));
        header.extend((0..game.n_players()).map(|k| format!("r_{k}")));
        w.write_record(&header)?;
        for (t, (s, a)) in self.states.iter().zip(&self.actions).enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(s.iter().map(|v| v.to_string()));
            row.extend(a.values().iter().map(|v| v.to_string()));
            row.extend(game.rewards(s, a, theta).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rolls the policy profile forward `horizon` steps from `s_0 ~ mu`.
pub fn simulate(
    game: &dyn MarkovGame,
    sources: &[PlayerSource<'_>],
    horizon: usize,
    rng: &mut Rng,
) -> Result<History> {
    Ok(rollout(game, sources, horizon, rng, false)?.history)
}

/// `sum_t gamma^t r_i(s_t, a_t; theta)` for every player.
pub fn discounted_return(game: &dyn MarkovGame, h: &History, theta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; game.n_players()];
    let mut w = 1.0;
    for (s, a) in h.states.iter().zip(&h.actions) {
        for (o, r) in out.iter_mut().zip(game.rewards(s, a, theta)) {
            *o += w * r;
        }
        w *= game.discount();
    }
    out
}

pub(crate) fn check_discount(discount: f64) -> Result<()> {
    if discount > 0.0 && discount < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("discount must lie in (0, 1), got {discount}")))
    }
}

/// Serializable description of the Markov games the CLI can load.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkovGameSpec {
    Finite(FiniteMarkovGame),
    SingleStateQuadratic { n_players: usize, discount: f64 },
    LinearTracking(LinearTrackingGame),
    StochasticFisher(StochasticFisherGame),
}

impl MarkovGameSpec {
    pub fn build(self) -> Result<std::sync::Arc<dyn MarkovGame>> {
        Ok(match self {
            MarkovGameSpec::Finite(g) => {
                g.validate()?;
                std::sync::Arc::new(g)
            }
            MarkovGameSpec::SingleStateQuadratic {
                n_players,
                discount,
            } => std::sync::Arc::new(SingleStateQuadratic::new(n_players, discount)?),
            MarkovGameSpec::LinearTracking(g) => {
                g.validate()?;
                std::sync::Arc::new(g)
            }
            MarkovGameSpec::StochasticFisher(g) => {
                g.validate()?;
                std::sync::Arc::new(g)
            }
        })
    }
}
