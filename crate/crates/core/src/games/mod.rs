//! Parametric games and the concrete families used by the experiments.

mod fisher;
mod oligopoly;
mod toy;

use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::{Rng, Space, FEASIBILITY_TOL};

pub use fisher::{
    buyer_best_response, eg_objective, utility, FisherGame, FisherMarket, FisherParams,
    UtilityClass, BUDGET_RANGE, TYPE_RANGE, UTILITY_FLOOR,
};
pub use oligopoly::{
    bertrand_payoffs, cournot_payoffs, BertrandGame, CournotGame, BERTRAND_GRID_POINTS,
};
pub use toy::{quadratic_toy, ConstantGame, QuadraticToy, RandomMatrixGame};

/// How an inner maximization (best response) was solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerMethod {
    ClosedForm,
    Grid,
    GradientAscent,
}

/// A game whose payoff profile `u(x; theta)` is known up to its parameters.
///
/// Implementors provide analytic gradients of each player's payoff with
/// respect to its own strategy block and to the parameters. A closed-form or
/// grid best response may be supplied; otherwise exploitability falls back to
/// projected gradient ascent.
pub trait ParametricGame: Send + Sync + Debug {
    fn n_players(&self) -> usize;
    fn strategy_space(&self, player: usize) -> &Space;
    fn param_space(&self) -> &Space;
    fn payoffs(&self, x: &StrategyProfile, theta: &[f64]) -> Vec<f64>;

    fn payoff(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> f64 {
        self.payoffs(x, theta)[player]
    }

    /// `d u_i / d x_i`
    fn grad_own(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> Vec<f64>;

    /// `d u_i / d theta`
    fn grad_theta(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> Vec<f64>;

    fn best_response(
        &self,
        _player: usize,
        _x: &StrategyProfile,
        _theta: &[f64],
    ) -> Option<(Vec<f64>, InnerMethod)> {
        None
    }

    fn block_dims(&self) -> Vec<usize> {
        (0..self.n_players())
            .map(|i| self.strategy_space(i).dim())
            .collect()
    }
}

/// One strategy per player, stored contiguously.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    values: Vec<f64>,
    offsets: Vec<usize>,
}

impl StrategyProfile {
    pub fn from_blocks<B: AsRef<[f64]>>(blocks: &[B]) -> Self {
        let mut values = Vec::new();
        let mut offsets = vec![0];
        for b in blocks {
            values.extend_from_slice(b.as_ref());
            offsets.push(values.len());
        }
        StrategyProfile { values, offsets }
    }

    pub fn from_flat(values: Vec<f64>, dims: &[usize]) -> Result<Self> {
        let total: usize = dims.iter().sum();
        Error::check_dim(total, values.len())?;
        let mut offsets = vec![0];
        for d in dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(StrategyProfile { values, offsets })
    }

    pub fn n_players(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn block(&self, player: usize) -> &[f64] {
        &self.values[self.offsets[player]..self.offsets[player + 1]]
    }

    pub fn block_mut(&mut self, player: usize) -> &mut [f64] {
        &mut self.values[self.offsets[player]..self.offsets[player + 1]]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dims(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `(y_i, x_{-i})`
    pub fn with_block(&self, player: usize, block: &[f64]) -> Self {
        let mut out = self.clone();
        out.block_mut(player).copy_from_slice(block);
        out
    }

    pub fn in_game(&self, game: &dyn ParametricGame, tol: f64) -> bool {
        self.n_players() == game.n_players()
            && (0..self.n_players()).all(|i| game.strategy_space(i).contains(self.block(i), tol))
    }
}

/// A game form together with an observed (presumed equilibrium) profile.
#[derive(Clone, Debug)]
pub struct InverseGame {
    pub game: Arc<dyn ParametricGame>,
    pub observed: StrategyProfile,
}

impl InverseGame {
    pub fn new(game: Arc<dyn ParametricGame>, observed: StrategyProfile) -> Result<Self> {
        if observed.dims() != game.block_dims() {
            return Err(Error::Config(format!(
                "observed profile has blocks {:?}, game expects {:?}",
                observed.dims(),
                game.block_dims()
            )));
        }
        if !observed.in_game(game.as_ref(), 1e-8) {
            return Err(Error::Config(
                "observed profile lies outside the strategy space".into(),
            ));
        }
        Ok(InverseGame { game, observed })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    FisherLinear,
    FisherCobbDouglas,
    FisherLeontief,
    Cournot,
    Bertrand,
    QuadraticToy,
    RandomMatrix,
}

impl Family {
    pub fn utility_class(self) -> Option<UtilityClass> {
        match self {
            Family::FisherLinear => Some(UtilityClass::Linear),
            Family::FisherCobbDouglas => Some(UtilityClass::CobbDouglas),
            Family::FisherLeontief => Some(UtilityClass::Leontief),
            _ => None,
        }
    }

    pub fn default_mode(self) -> ParamMode {
        match self {
            Family::FisherLinear | Family::FisherCobbDouglas | Family::FisherLeontief => {
                ParamMode::BudgetsOnly
            }
            Family::Cournot | Family::Bertrand => ParamMode::MarginalCost,
            Family::QuadraticToy | Family::RandomMatrix => ParamMode::Full,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::Config(format!("unknown family `{s}`")))
    }
}

/// Which parameters are unknown in the inverse problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMode {
    BudgetsOnly,
    TypesAndBudgets,
    MarginalCost,
    /// Every parameter of a synthetic family.
    Full,
}

impl std::str::FromStr for ParamMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
            .map_err(|_| Error::Config(format!("unknown parameter mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceConstants {
    Fisher {
        class: UtilityClass,
        types: Vec<Vec<f64>>,
        budgets: Vec<f64>,
        supplies: Vec<f64>,
    },
    Cournot {
        intercept: f64,
        slope: f64,
    },
    Bertrand {
        intercept: f64,
        slope: f64,
    },
    QuadraticToy {
        n_players: usize,
    },
    RandomMatrix {
        /// `basis[k][i]` is player i's payoff matrix for parameter k.
        basis: Vec<[Vec<Vec<f64>>; 2]>,
    },
}

/// A sampled game with known parameters and a certified equilibrium.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameInstance {
    pub family: Family,
    /// Full natural parameter vector. Fisher: row-major types then budgets.
    pub theta_star: Vec<f64>,
    pub constants: InstanceConstants,
    pub x_star: Vec<f64>,
    pub seed: u64,
}

/// Certification threshold for sampled equilibria.
pub const CERTIFY_TOL: f64 = 1e-6;
const MAX_SAMPLE_ATTEMPTS: usize = 100;

impl GameInstance {
    /// Builds the parametric game for `mode` and the matching true parameter.
    pub fn game(&self, mode: ParamMode) -> Result<(Arc<dyn ParametricGame>, Vec<f64>)> {
        match (&self.constants, mode) {
            (
                InstanceConstants::Fisher {
                    class,
                    types,
                    budgets,
                    supplies,
                },
                ParamMode::BudgetsOnly,
            ) => {
                let game = FisherGame::new(
                    *class,
                    supplies.clone(),
                    FisherParams::Budgets {
                        types: types.clone(),
                    },
                    budgets.len(),
                )?;
                Ok((Arc::new(game), budgets.clone()))
            }
            (
                InstanceConstants::Fisher {
                    class, supplies, budgets, ..
                },
                ParamMode::TypesAndBudgets,
            ) => {
                let game = FisherGame::new(
                    *class,
                    supplies.clone(),
                    FisherParams::TypesAndBudgets,
                    budgets.len(),
                )?;
                Ok((Arc::new(game), self.theta_star.clone()))
            }
            (InstanceConstants::Cournot { intercept, slope }, ParamMode::MarginalCost) => Ok((
                Arc::new(CournotGame::new(2, *intercept, *slope)?),
                self.theta_star.clone(),
            )),
            (InstanceConstants::Bertrand { intercept, slope }, ParamMode::MarginalCost) => Ok((
                Arc::new(BertrandGame::new(2, *intercept, *slope)?),
                self.theta_star.clone(),
            )),
            (InstanceConstants::QuadraticToy { n_players }, _) => {
                Ok((Arc::new(quadratic_toy(*n_players)?), self.theta_star.clone()))
            }
            (InstanceConstants::RandomMatrix { basis }, _) => Ok((
                Arc::new(RandomMatrixGame::new(basis.clone())?),
                self.theta_star.clone(),
            )),
            (_, mode) => Err(Error::Config(format!(
                "mode {mode:?} does not apply to family {:?}",
                self.family
            ))),
        }
    }

    pub fn observed_profile(&self, game: &dyn ParametricGame) -> Result<StrategyProfile> {
        StrategyProfile::from_flat(self.x_star.clone(), &game.block_dims())
    }

    pub fn inverse_game(&self, mode: ParamMode) -> Result<(InverseGame, Vec<f64>)> {
        let (game, theta) = self.game(mode)?;
        let observed = self.observed_profile(game.as_ref())?;
        Ok((InverseGame::new(game, observed)?, theta))
    }

    /// Exploitability of `x_star` at `theta_star`.
    pub fn certificate(&self) -> Result<f64> {
        let (game, theta) = self.game(self.family.default_mode())?;
        let x = self.observed_profile(game.as_ref())?;
        Ok(crate::planner::exploitability(game.as_ref(), &theta, &x, &Default::default())?.value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Draws a game instance from the experiment distributions and certifies its
/// equilibrium, resampling when certification fails.
pub fn sample_instance(family: Family, rng: &mut Rng) -> Result<GameInstance> {
    let mut last = f64::NAN;
    for attempt in 0..MAX_SAMPLE_ATTEMPTS {
        let candidate = match family {
            Family::FisherLinear | Family::FisherCobbDouglas | Family::FisherLeontief => {
                fisher::sample(family, rng)
            }
            Family::Cournot => oligopoly::sample_cournot(rng),
            Family::Bertrand => oligopoly::sample_bertrand(rng),
            Family::QuadraticToy => toy::sample_quadratic(rng),
            Family::RandomMatrix => toy::sample_random_matrix(rng),
        };
        let Some(mut instance) = candidate? else {
            log::debug!("{family:?}: rejected degenerate draw (attempt {attempt})");
            continue;
        };
        instance.seed = rng.seed();
        let cert = instance.certificate()?;
        if cert <= CERTIFY_TOL {
            if attempt > 0 {
                log::info!("{family:?}: certified after {} resamples", attempt);
            }
            return Ok(instance);
        }
        log::debug!("{family:?}: certificate {cert:.3e} above tolerance, resampling");
        last = cert;
    }
    Err(Error::Certification {
        attempts: MAX_SAMPLE_ATTEMPTS,
        last,
    })
}

/// Largest mixed absolute/relative discrepancy between analytic gradients
/// and central finite differences at one `(x, theta)` point.
///
/// The error for a coordinate is `|g - fd| / max(|g|, |fd|, 1)`.
pub fn gradient_discrepancy(
    game: &dyn ParametricGame,
    x: &StrategyProfile,
    theta: &[f64],
    h: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    for i in 0..game.n_players() {
        let g = game.grad_own(i, x, theta);
        for k in 0..g.len() {
            let mut plus = x.clone();
            plus.block_mut(i)[k] += h;
            let mut minus = x.clone();
            minus.block_mut(i)[k] -= h;
            let fd = (game.payoff(i, &plus, theta) - game.payoff(i, &minus, theta)) / (2.0 * h);
            worst = worst.max(rel(g[k], fd));
        }
        let g = game.grad_theta(i, x, theta);
        for k in 0..g.len() {
            let mut tp = theta.to_vec();
            tp[k] += h;
            let mut tm = theta.to_vec();
            tm[k] -= h;
            let fd = (game.payoff(i, x, &tp) - game.payoff(i, x, &tm)) / (2.0 * h);
            worst = worst.max(rel(g[k], fd));
        }
    }
    worst
}

/// Samples a strictly interior point of `space` by shrinking a uniform draw
/// toward the center.
pub fn interior_point(space: &Space, rng: &mut Rng, shrink: f64) -> Result<Vec<f64>> {
    let center = space.center()?;
    let z = space.sample_uniform(rng)?;
    let p: Vec<f64> = z
        .iter()
        .zip(&center)
        .map(|(v, c)| c + shrink * (v - c))
        .collect();
    debug_assert!(space.contains(&p, FEASIBILITY_TOL));
    Ok(p)
}
