//! Cournot and Bertrand duopolies parameterized by a shared marginal cost.

use super::{Family, GameInstance, InnerMethod, InstanceConstants, ParametricGame, StrategyProfile};
use crate::error::{Error, Result};
use crate::spaces::{Rng, Space};

/// Prices tried by the Bertrand best-response grid.
pub const BERTRAND_GRID_POINTS: usize = 2048;

const COST_RANGE: (f64, f64) = (2.0, 20.0);
const INTERCEPT_RANGE: (f64, f64) = (10.0, 100.0);
const SLOPE_RANGE: (f64, f64) = (-10.0, -0.01);

/// `q_i (a + b sum(q) - c)` for every firm.
pub fn cournot_payoffs(q: &[f64], cost: f64, intercept: f64, slope: f64) -> Vec<f64> {
    let price = intercept + slope * q.iter().sum::<f64>();
    q.iter().map(|qi| qi * (price - cost)).collect()
}

/// Demand served by each firm: the lowest price takes the market, ties split.
fn bertrand_demands(p: &[f64], intercept: f64, slope: f64) -> Vec<f64> {
    let p_min = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let winners = p.iter().filter(|&&v| v == p_min).count() as f64;
    let demand = (intercept + slope * p_min).max(0.0);
    p.iter()
        .map(|&v| if v == p_min { demand / winners } else { 0.0 })
        .collect()
}

/// `D_i(p) (p_i - c)` for every firm, with `D(p) = max(0, c_d + d p)`.
pub fn bertrand_payoffs(p: &[f64], cost: f64, intercept: f64, slope: f64) -> Vec<f64> {
    bertrand_demands(p, intercept, slope)
        .iter()
        .zip(p)
        .map(|(d, pi)| d * (pi - cost))
        .collect()
}

fn check_slope(slope: f64, intercept: f64) -> Result<()> {
    if !(slope < 0.0) || !(intercept > 0.0) {
        return Err(Error::Config(format!(
            "need intercept > 0 and slope < 0, got {intercept} and {slope}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct CournotGame {
    n: usize,
    intercept: f64,
    slope: f64,
    quantity_space: Space,
    param_space: Space,
}

impl CournotGame {
    pub fn new(n: usize, intercept: f64, slope: f64) -> Result<Self> {
        check_slope(slope, intercept)?;
        Ok(CournotGame {
            n,
            intercept,
            slope,
            quantity_space: Space::cube(1, 0.0, intercept / -slope)?,
            param_space: Space::cube(1, 0.0, intercept.max(COST_RANGE.1))?,
        })
    }

    /// Symmetric equilibrium quantity `(a - c) / ((n + 1)|b|)`, clamped at zero.
    pub fn equilibrium_quantity(&self, cost: f64) -> f64 {
        ((self.intercept - cost) / ((self.n as f64 + 1.0) * -self.slope)).max(0.0)
    }

    fn quantities(x: &StrategyProfile) -> Vec<f64> {
        x.values().to_vec()
    }
}

impl ParametricGame for CournotGame {
    fn n_players(&self) -> usize {
        self.n
    }

    fn strategy_space(&self, _player: usize) -> &Space {
        &self.quantity_space
    }

    fn param_space(&self) -> &Space {
        &self.param_space
    }

    fn payoffs(&self, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        cournot_payoffs(&Self::quantities(x), theta[0], self.intercept, self.slope)
    }

    fn grad_own(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let q = Self::quantities(x);
        let price = self.intercept + self.slope * q.iter().sum::<f64>();
        vec![price - theta[0] + self.slope * q[player]]
    }

    fn grad_theta(&self, player: usize, x: &StrategyProfile, _theta: &[f64]) -> Vec<f64> {
        vec![-x.block(player)[0]]
    }

    fn best_response(
        &self,
        player: usize,
        x: &StrategyProfile,
        theta: &[f64],
    ) -> Option<(Vec<f64>, InnerMethod)> {
        let others: f64 = (0..self.n)
            .filter(|&j| j != player)
            .map(|j| x.block(j)[0])
            .sum();
        let raw = (self.intercept + self.slope * others - theta[0]) / (-2.0 * self.slope);
        let q = raw.clamp(0.0, self.intercept / -self.slope);
        Some((vec![q], InnerMethod::ClosedForm))
    }
}

#[derive(Clone, Debug)]
pub struct BertrandGame {
    n: usize,
    intercept: f64,
    slope: f64,
    price_space: Space,
    param_space: Space,
}

impl BertrandGame {
    pub fn new(n: usize, intercept: f64, slope: f64) -> Result<Self> {
        check_slope(slope, intercept)?;
        let choke = intercept / -slope;
        Ok(BertrandGame {
            n,
            intercept,
            slope,
            price_space: Space::cube(1, 0.0, choke)?,
            param_space: Space::cube(1, 0.0, choke)?,
        })
    }

    /// Price at which demand vanishes.
    pub fn choke_price(&self) -> f64 {
        self.intercept / -self.slope
    }
}

impl ParametricGame for BertrandGame {
    fn n_players(&self) -> usize {
        self.n
    }

    fn strategy_space(&self, _player: usize) -> &Space {
        &self.price_space
    }

    fn param_space(&self) -> &Space {
        &self.param_space
    }

    fn payoffs(&self, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        bertrand_payoffs(x.values(), theta[0], self.intercept, self.slope)
    }

    /// Derivative of the branch the profile currently sits on; the payoff
    /// jumps wherever prices cross.
    fn grad_own(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let p = x.values();
        let share = bertrand_demands(p, self.intercept, self.slope)[player];
        if share == 0.0 {
            return vec![0.0];
        }
        let total = self.intercept + self.slope * p[player];
        let fraction = share / total;
        vec![fraction * (self.slope * (p[player] - theta[0]) + total)]
    }

    fn grad_theta(&self, player: usize, x: &StrategyProfile, _theta: &[f64]) -> Vec<f64> {
        vec![-bertrand_demands(x.values(), self.intercept, self.slope)[player]]
    }

    fn best_response(
        &self,
        player: usize,
        x: &StrategyProfile,
        theta: &[f64],
    ) -> Option<(Vec<f64>, InnerMethod)> {
        let profit = |price: f64| {
            let y = x.with_block(player, &[price]);
            bertrand_payoffs(y.values(), theta[0], self.intercept, self.slope)[player]
        };
        let current = x.block(player)[0];
        let mut best = (current, profit(current));
        let step = self.choke_price() / (BERTRAND_GRID_POINTS - 1) as f64;
        for k in 0..BERTRAND_GRID_POINTS {
            let price = k as f64 * step;
            let value = profit(price);
            if value > best.1 {
                best = (price, value);
            }
        }
        Some((vec![best.0], InnerMethod::Grid))
    }
}

fn draw_market(rng: &mut Rng) -> (f64, f64, f64) {
    let cost = rng.uniform_in(COST_RANGE.0, COST_RANGE.1);
    let intercept = rng.uniform_in(INTERCEPT_RANGE.0, INTERCEPT_RANGE.1);
    let slope = rng.uniform_in(SLOPE_RANGE.0, SLOPE_RANGE.1);
    (cost, intercept, slope)
}

pub(super) fn sample_cournot(rng: &mut Rng) -> Result<Option<GameInstance>> {
    let (cost, intercept, slope) = draw_market(rng);
    let game = CournotGame::new(2, intercept, slope)?;
    let q = game.equilibrium_quantity(cost);
    Ok(Some(GameInstance {
        family: Family::Cournot,
        theta_star: vec![cost],
        constants: InstanceConstants::Cournot { intercept, slope },
        x_star: vec![q, q],
        seed: 0,
    }))
}

/// Draws with no demand at marginal cost have an empty market and are
/// rejected.
pub(super) fn sample_bertrand(rng: &mut Rng) -> Result<Option<GameInstance>> {
    let (cost, intercept, slope) = draw_market(rng);
    if intercept + slope * cost <= 0.0 {
        return Ok(None);
    }
    Ok(Some(GameInstance {
        family: Family::Bertrand,
        theta_star: vec![cost],
        constants: InstanceConstants::Bertrand { intercept, slope },
        x_star: vec![cost, cost],
        seed: 0,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{gradient_discrepancy, sample_instance};
    use crate::planner::exploitability;

    #[test]
    fn cournot_examples() {
        let game = CournotGame::new(2, 10.0, -1.0).unwrap();
        assert_eq!(game.equilibrium_quantity(1.0), 3.0);
        assert_eq!(cournot_payoffs(&[3.0, 3.0], 1.0, 10.0, -1.0), vec![9.0, 9.0]);
        assert_eq!(game.equilibrium_quantity(10.0), 0.0);
        assert_eq!(cournot_payoffs(&[0.0, 0.0], 10.0, 10.0, -1.0), vec![0.0, 0.0]);
        let x = StrategyProfile::from_blocks(&[[0.0], [0.0]]);
        let (br, _) = game.best_response(0, &x, &[2.0]).unwrap();
        assert_eq!(br, vec![4.0]);
    }

    #[test]
    fn bertrand_examples() {
        assert_eq!(bertrand_payoffs(&[5.0, 4.0], 2.0, 10.0, -1.0)[0], 0.0);
        assert_eq!(bertrand_payoffs(&[4.0, 4.0], 2.0, 10.0, -1.0), vec![6.0, 6.0]);
        assert_eq!(bertrand_payoffs(&[2.0, 2.0], 2.0, 10.0, -1.0), vec![0.0, 0.0]);
        // no grid price beats the marginal-cost profile
        let game = BertrandGame::new(2, 10.0, -1.0).unwrap();
        let x = StrategyProfile::from_blocks(&[[2.0], [2.0]]);
        for i in 0..2 {
            let (br, _) = game.best_response(i, &x, &[2.0]).unwrap();
            let y = x.with_block(i, &br);
            assert!(game.payoff(i, &y, &[2.0]) <= 1e-12);
        }
    }

    #[test]
    fn bertrand_undercut_takes_the_market() {
        let p = bertrand_payoffs(&[3.0, 4.0], 2.0, 10.0, -1.0);
        assert_eq!(p, vec![7.0, 0.0]);
    }

    #[test]
    fn sampled_cournot_satisfies_first_order_conditions() {
        let mut rng = Rng::new(17);
        for _ in 0..200 {
            let inst = sample_instance(Family::Cournot, &mut rng).unwrap();
            let InstanceConstants::Cournot { intercept, slope } = inst.constants else {
                panic!()
            };
            let c = inst.theta_star[0];
            assert!((2.0..=20.0).contains(&c));
            assert!((10.0..=100.0).contains(&intercept));
            assert!((-10.0..=-0.01).contains(&slope));
            let (game, theta) = inst.game(crate::games::ParamMode::MarginalCost).unwrap();
            let x = inst.observed_profile(game.as_ref()).unwrap();
            let expected = ((intercept - c) / (3.0 * -slope)).max(0.0);
            for i in 0..2 {
                assert!((x.block(i)[0] - expected).abs() <= 1e-8 * expected.max(1.0));
                let g = game.grad_own(i, &x, &theta)[0];
                if expected > 0.0 {
                    assert!(g.abs() <= 1e-8 * intercept);
                } else {
                    assert!(g <= 0.0);
                }
            }
        }
    }

    #[test]
    fn sampled_bertrand_markets_are_active_and_certified() {
        let mut rng = Rng::new(4);
        for _ in 0..200 {
            let inst = sample_instance(Family::Bertrand, &mut rng).unwrap();
            let InstanceConstants::Bertrand { intercept, slope } = inst.constants else {
                panic!()
            };
            assert!(intercept + slope * inst.theta_star[0] > 0.0);
            assert!(inst.certificate().unwrap() <= 1e-6);
        }
    }

    #[test]
    fn cournot_gradients_match_finite_differences() {
        let mut rng = Rng::new(21);
        for _ in 0..100 {
            let game = CournotGame::new(2, rng.uniform_in(10.0, 100.0), rng.uniform_in(-10.0, -0.01))
                .unwrap();
            let x = StrategyProfile::from_blocks(&[
                game.quantity_space.sample_uniform(&mut rng).unwrap(),
                game.quantity_space.sample_uniform(&mut rng).unwrap(),
            ]);
            let theta = [rng.uniform_in(2.0, 20.0)];
            assert!(gradient_discrepancy(&game, &x, &theta, 1e-5) <= 1e-4);
        }
    }

    #[test]
    fn bertrand_gradients_match_finite_differences_off_ties() {
        let mut rng = Rng::new(22);
        let mut checked = 0;
        while checked < 100 {
            let game = BertrandGame::new(2, rng.uniform_in(10.0, 100.0), rng.uniform_in(-10.0, -0.01))
                .unwrap();
            let p = [
                rng.uniform_in(0.0, game.choke_price()),
                rng.uniform_in(0.0, game.choke_price()),
            ];
            if (p[0] - p[1]).abs() < 1e-3 {
                continue;
            }
            let x = StrategyProfile::from_blocks(&[[p[0]], [p[1]]]);
            let theta = [rng.uniform_in(2.0, 20.0)];
            assert!(gradient_discrepancy(&game, &x, &theta, 1e-5) <= 1e-4);
            checked += 1;
        }
    }

    #[test]
    fn cournot_exploitability_matches_closed_form_deviation() {
        let game = CournotGame::new(2, 10.0, -1.0).unwrap();
        let x = StrategyProfile::from_blocks(&[[0.0], [0.0]]);
        // each firm gains the monopoly profit (a - c)^2 / 4|b| = 16
        let e = exploitability(&game, &[2.0], &x, &Default::default()).unwrap();
        assert!((e.value - 32.0).abs() < 1e-12);
    }
}
