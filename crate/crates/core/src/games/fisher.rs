//! Fisher markets and the Eisenberg-Gale min-max game.
//!
//! Players `0..n` are buyers choosing allocation rows, player `n` is the
//! seller choosing prices. Buyer `i` earns `b_i log u_i(x_i; t_i) - p . x_i`
//! and the seller earns `-sum_j p_j (q_j - sum_i x_ij)`; the buyers' payoffs
//! plus the seller's price revenue recover the Eisenberg-Gale objective, so
//! the cumulative regrets coincide.

use serde::{Deserialize, Serialize};

use super::{Family, GameInstance, InnerMethod, InstanceConstants, ParametricGame, StrategyProfile};
use crate::error::{Error, Result};
use crate::spaces::{dot, Rng, Space};

/// Utilities below this value are floored before taking logarithms.
pub const UTILITY_FLOOR: f64 = 1e-9;
/// Budget draws are `max(U[0, 10], 0.1)`; also the budget parameter box.
pub const BUDGET_RANGE: (f64, f64) = (0.1, 10.0);
/// Type draws are `max(U[0, 10], 0.1)`; also the type parameter box.
pub const TYPE_RANGE: (f64, f64) = (0.1, 10.0);

/// Upper bound of each buyer's consumption box.
const ALLOCATION_MAX: f64 = 1e3;
const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityClass {
    Linear,
    CobbDouglas,
    Leontief,
}

/// `u(x; t)`. Cobb-Douglas exponents are normalized to sum to one so every
/// class is homogeneous of degree one.
pub fn utility(class: UtilityClass, types: &[f64], x: &[f64]) -> f64 {
    match class {
        UtilityClass::Linear => dot(types, x),
        UtilityClass::CobbDouglas => cd_log_utility(types, x).exp(),
        UtilityClass::Leontief => leontief_min(types, x).1,
    }
}

fn cd_log_utility(types: &[f64], x: &[f64]) -> f64 {
    let total: f64 = types.iter().sum();
    types
        .iter()
        .zip(x)
        .map(|(t, xi)| if *t == 0.0 { 0.0 } else { t / total * xi.ln() })
        .sum()
}

/// First minimizing coordinate of `x_j / t_j` and its value.
fn leontief_min(types: &[f64], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, (t, xi)) in types.iter().zip(x).enumerate() {
        let v = xi / t;
        if v < best.1 {
            best = (j, v);
        }
    }
    best
}

/// `log(max(u, floor))`
fn log_utility(class: UtilityClass, types: &[f64], x: &[f64]) -> f64 {
    let raw = match class {
        UtilityClass::CobbDouglas => cd_log_utility(types, x),
        _ => utility(class, types, x).ln(),
    };
    raw.max(UTILITY_FLOOR.ln())
}

fn floored(class: UtilityClass, types: &[f64], x: &[f64]) -> bool {
    let raw = match class {
        UtilityClass::CobbDouglas => cd_log_utility(types, x),
        _ => utility(class, types, x).ln(),
    };
    !(raw > UTILITY_FLOOR.ln())
}

fn log_utility_grad_x(class: UtilityClass, types: &[f64], x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    if floored(class, types, x) {
        return g;
    }
    match class {
        UtilityClass::Linear => {
            let u = dot(types, x);
            for (gj, t) in g.iter_mut().zip(types) {
                *gj = t / u;
            }
        }
        UtilityClass::CobbDouglas => {
            let total: f64 = types.iter().sum();
            for ((gj, t), xi) in g.iter_mut().zip(types).zip(x) {
                *gj = t / total / xi;
            }
        }
        UtilityClass::Leontief => {
            let (j, _) = leontief_min(types, x);
            g[j] = 1.0 / x[j];
        }
    }
    g
}

fn log_utility_grad_types(class: UtilityClass, types: &[f64], x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; types.len()];
    if floored(class, types, x) {
        return g;
    }
    match class {
        UtilityClass::Linear => {
            let u = dot(types, x);
            for (gj, xi) in g.iter_mut().zip(x) {
                *gj = xi / u;
            }
        }
        UtilityClass::CobbDouglas => {
            let total: f64 = types.iter().sum();
            let log_u = cd_log_utility(types, x);
            for (gj, xi) in g.iter_mut().zip(x) {
                *gj = (xi.ln() - log_u) / total;
            }
        }
        UtilityClass::Leontief => {
            let (j, _) = leontief_min(types, x);
            g[j] = -1.0 / types[j];
        }
    }
    g
}

/// Utility-maximizing bundle for one buyer at prices `p`; spends exactly
/// `budget`.
pub fn buyer_best_response(
    class: UtilityClass,
    types: &[f64],
    budget: f64,
    prices: &[f64],
) -> Result<Vec<f64>> {
    Error::check_dim(types.len(), prices.len())?;
    let m = prices.len();
    let mut x = vec![0.0; m];
    match class {
        UtilityClass::Linear => {
            if let Some(good) = (0..m).find(|&j| prices[j] <= 0.0 && types[j] > 0.0) {
                return Err(Error::UnboundedDemand { good });
            }
            let bang: Vec<f64> = (0..m)
                .map(|j| if prices[j] > 0.0 { types[j] / prices[j] } else { 0.0 })
                .collect();
            let best = bang.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let winners: Vec<usize> = (0..m)
                .filter(|&j| bang[j] >= best * (1.0 - TIE_TOL))
                .collect();
            let share = budget / winners.len() as f64;
            for j in winners {
                x[j] = share / prices[j];
            }
        }
        UtilityClass::CobbDouglas => {
            let total: f64 = types.iter().sum();
            for j in 0..m {
                if types[j] > 0.0 {
                    if prices[j] <= 0.0 {
                        return Err(Error::UnboundedDemand { good: j });
                    }
                    x[j] = types[j] / total * budget / prices[j];
                }
            }
        }
        UtilityClass::Leontief => {
            let cost = dot(prices, types);
            if cost <= 0.0 {
                return Err(Error::UnboundedDemand { good: 0 });
            }
            for j in 0..m {
                x[j] = types[j] * budget / cost;
            }
        }
    }
    Ok(x)
}

/// `sum_i b_i log u_i(X_i) + sum_j (p_j - p_j sum_i X_ij)` with unit supplies.
pub fn eg_objective(
    class: UtilityClass,
    prices: &[f64],
    alloc: &[Vec<f64>],
    types: &[Vec<f64>],
    budgets: &[f64],
) -> f64 {
    let welfare: f64 = alloc
        .iter()
        .zip(types)
        .zip(budgets)
        .map(|((x, t), b)| b * log_utility(class, t, x))
        .sum();
    let revenue: f64 = prices
        .iter()
        .enumerate()
        .map(|(j, p)| p - p * alloc.iter().map(|x| x[j]).sum::<f64>())
        .sum();
    welfare + revenue
}

/// A market with known parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherMarket {
    pub class: UtilityClass,
    pub types: Vec<Vec<f64>>,
    pub budgets: Vec<f64>,
    pub supplies: Vec<f64>,
}

const TATONNEMENT_TOL: f64 = 1e-8;
const TATONNEMENT_MAX_ITERS: usize = 100_000;
const TATONNEMENT_STEP: f64 = 0.2;
const PROPORTIONAL_TOL: f64 = 1e-12;
const PROPORTIONAL_MAX_ITERS: usize = 1_000_000;

impl FisherMarket {
    pub fn n_buyers(&self) -> usize {
        self.budgets.len()
    }

    pub fn n_goods(&self) -> usize {
        self.supplies.len()
    }

    fn aggregate_demand(&self, prices: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.types
            .iter()
            .zip(&self.budgets)
            .map(|(t, b)| buyer_best_response(self.class, t, *b, prices))
            .collect()
    }

    /// Competitive equilibrium `(prices, allocation)`.
    ///
    /// Cobb-Douglas and Leontief markets use damped multiplicative
    /// tatonnement. Linear demand is a correspondence, so linear markets use
    /// proportional response bidding, whose allocations clear by
    /// construction.
    pub fn equilibrium(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        match self.class {
            UtilityClass::Linear => Ok(self.proportional_response()),
            _ => self.tatonnement(),
        }
    }

    pub fn tatonnement(&self) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let m = self.n_goods();
        let total_budget: f64 = self.budgets.iter().sum();
        let total_supply: f64 = self.supplies.iter().sum();
        let mut prices = vec![total_budget / total_supply; m];
        for iter in 0..TATONNEMENT_MAX_ITERS {
            let alloc = self.aggregate_demand(&prices)?;
            let price_scale: f64 = prices.iter().sum();
            let mut worst: f64 = 0.0;
            let mut excess = vec![0.0; m];
            for j in 0..m {
                let demand: f64 = alloc.iter().map(|x| x[j]).sum();
                excess[j] = (demand - self.supplies[j]) / self.supplies[j];
                let violation = if prices[j] > 1e-12 * price_scale {
                    excess[j].abs()
                } else {
                    excess[j].max(0.0)
                };
                worst = worst.max(violation);
            }
            if worst <= TATONNEMENT_TOL {
                log::trace!("tatonnement converged in {iter} iterations");
                return Ok((prices, alloc));
            }
            for j in 0..m {
                prices[j] *= (TATONNEMENT_STEP * excess[j]).exp();
            }
        }
        let alloc = self.aggregate_demand(&prices)?;
        Ok((prices, alloc))
    }

    pub fn proportional_response(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let (n, m) = (self.n_buyers(), self.n_goods());
        let mut bids: Vec<Vec<f64>> = self
            .budgets
            .iter()
            .map(|b| vec![b / m as f64; m])
            .collect();
        let mut prices = vec![0.0; m];
        let mut alloc = vec![vec![0.0; m]; n];
        for iter in 0..PROPORTIONAL_MAX_ITERS {
            for j in 0..m {
                prices[j] = bids.iter().map(|b| b[j]).sum();
            }
            for i in 0..n {
                for j in 0..m {
                    alloc[i][j] = if prices[j] > 0.0 {
                        self.supplies[j] * bids[i][j] / prices[j]
                    } else {
                        0.0
                    };
                }
            }
            let mut regret = 0.0;
            for i in 0..n {
                let u = dot(&self.types[i], &alloc[i]);
                let best_bang = (0..m)
                    .filter(|&j| prices[j] > 0.0)
                    .map(|j| self.types[i][j] / prices[j])
                    .fold(0.0, f64::max);
                regret += self.budgets[i] * (self.budgets[i] * best_bang / u).ln();
            }
            if regret <= PROPORTIONAL_TOL {
                log::trace!("proportional response converged in {iter} iterations");
                break;
            }
            for i in 0..n {
                let u = dot(&self.types[i], &alloc[i]);
                for j in 0..m {
                    bids[i][j] = self.budgets[i] * self.types[i][j] * alloc[i][j] / u;
                }
            }
        }
        (prices, alloc)
    }
}

/// Which Fisher parameters the game exposes as `theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FisherParams {
    /// `theta = budgets`; types are part of the game form.
    Budgets { types: Vec<Vec<f64>> },
    /// `theta = (types row-major, budgets)`.
    TypesAndBudgets,
}

#[derive(Clone, Debug)]
pub struct FisherGame {
    class: UtilityClass,
    supplies: Vec<f64>,
    params: FisherParams,
    n_buyers: usize,
    buyer_space: Space,
    seller_space: Space,
    param_space: Space,
}

impl FisherGame {
    pub fn new(
        class: UtilityClass,
        supplies: Vec<f64>,
        params: FisherParams,
        n_buyers: usize,
    ) -> Result<Self> {
        let m = supplies.len();
        if m == 0 || n_buyers == 0 {
            return Err(Error::Config("a market needs buyers and goods".into()));
        }
        if let FisherParams::Budgets { types } = &params {
            if types.len() != n_buyers || types.iter().any(|t| t.len() != m) {
                return Err(Error::Config("type matrix does not match the market".into()));
            }
        }
        let budgets = Space::cube(n_buyers, BUDGET_RANGE.0, BUDGET_RANGE.1)?;
        let param_space = match params {
            FisherParams::Budgets { .. } => budgets,
            FisherParams::TypesAndBudgets => Space::product(vec![
                Space::cube(n_buyers * m, TYPE_RANGE.0, TYPE_RANGE.1)?,
                budgets,
            ])?,
        };
        let price_max = 2.0 * n_buyers as f64 * BUDGET_RANGE.1;
        Ok(FisherGame {
            class,
            buyer_space: Space::cube(m, 0.0, ALLOCATION_MAX)?,
            seller_space: Space::cube(m, 0.0, price_max)?,
            supplies,
            params,
            n_buyers,
            param_space,
        })
    }

    pub fn class(&self) -> UtilityClass {
        self.class
    }

    fn n_goods(&self) -> usize {
        self.supplies.len()
    }

    fn seller(&self) -> usize {
        self.n_buyers
    }

    fn buyer_types<'a>(&'a self, buyer: usize, theta: &'a [f64]) -> &'a [f64] {
        match &self.params {
            FisherParams::Budgets { types } => &types[buyer],
            FisherParams::TypesAndBudgets => {
                let m = self.n_goods();
                &theta[buyer * m..(buyer + 1) * m]
            }
        }
    }

    fn budget(&self, buyer: usize, theta: &[f64]) -> f64 {
        match &self.params {
            FisherParams::Budgets { .. } => theta[buyer],
            FisherParams::TypesAndBudgets => theta[self.n_buyers * self.n_goods() + buyer],
        }
    }

    fn budget_index(&self, buyer: usize) -> usize {
        match &self.params {
            FisherParams::Budgets { .. } => buyer,
            FisherParams::TypesAndBudgets => self.n_buyers * self.n_goods() + buyer,
        }
    }
}

impl ParametricGame for FisherGame {
    fn n_players(&self) -> usize {
        self.n_buyers + 1
    }

    fn strategy_space(&self, player: usize) -> &Space {
        if player == self.seller() {
            &self.seller_space
        } else {
            &self.buyer_space
        }
    }

    fn param_space(&self) -> &Space {
        &self.param_space
    }

    fn payoffs(&self, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        (0..self.n_players()).map(|i| self.payoff(i, x, theta)).collect()
    }

    fn payoff(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> f64 {
        let prices = x.block(self.seller());
        if player == self.seller() {
            (0..self.n_goods())
                .map(|j| {
                    let demand: f64 = (0..self.n_buyers).map(|i| x.block(i)[j]).sum();
                    -prices[j] * (self.supplies[j] - demand)
                })
                .sum()
        } else {
            let alloc = x.block(player);
            self.budget(player, theta) * log_utility(self.class, self.buyer_types(player, theta), alloc)
                - dot(prices, alloc)
        }
    }

    fn grad_own(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let prices = x.block(self.seller());
        if player == self.seller() {
            (0..self.n_goods())
                .map(|j| {
                    let demand: f64 = (0..self.n_buyers).map(|i| x.block(i)[j]).sum();
                    demand - self.supplies[j]
                })
                .collect()
        } else {
            let b = self.budget(player, theta);
            let g = log_utility_grad_x(self.class, self.buyer_types(player, theta), x.block(player));
            g.iter().zip(prices).map(|(gj, p)| b * gj - p).collect()
        }
    }

    fn grad_theta(&self, player: usize, x: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.param_space.dim()];
        if player == self.seller() {
            return g;
        }
        let types = self.buyer_types(player, theta);
        let alloc = x.block(player);
        g[self.budget_index(player)] = log_utility(self.class, types, alloc);
        if let FisherParams::TypesAndBudgets = self.params {
            let m = self.n_goods();
            let b = self.budget(player, theta);
            let gt = log_utility_grad_types(self.class, types, alloc);
            for (k, v) in gt.into_iter().enumerate() {
                g[player * m + k] = b * v;
            }
        }
        g
    }

    fn best_response(
        &self,
        player: usize,
        x: &StrategyProfile,
        theta: &[f64],
    ) -> Option<(Vec<f64>, InnerMethod)> {
        let prices = x.block(self.seller());
        if player == self.seller() {
            let upper = match &self.seller_space {
                Space::Box { upper, .. } => upper,
                _ => unreachable!(),
            };
            let br = (0..self.n_goods())
                .map(|j| {
                    let demand: f64 = (0..self.n_buyers).map(|i| x.block(i)[j]).sum();
                    if demand > self.supplies[j] {
                        upper[j]
                    } else {
                        0.0
                    }
                })
                .collect();
            return Some((br, InnerMethod::ClosedForm));
        }
        buyer_best_response(
            self.class,
            self.buyer_types(player, theta),
            self.budget(player, theta),
            prices,
        )
        .ok()
        .map(|br| (br, InnerMethod::ClosedForm))
    }
}

pub(super) fn sample(family: Family, rng: &mut Rng) -> Result<Option<GameInstance>> {
    let class = family.utility_class().expect("fisher family");
    let (n, m) = (3, 2);
    let draw = |rng: &mut Rng, floor: f64| rng.uniform_in(0.0, 10.0).max(floor);
    let types: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| draw(rng, TYPE_RANGE.0)).collect())
        .collect();
    let budgets: Vec<f64> = (0..n).map(|_| draw(rng, BUDGET_RANGE.0)).collect();
    let market = FisherMarket {
        class,
        types: types.clone(),
        budgets: budgets.clone(),
        supplies: vec![1.0; m],
    };
    let (prices, alloc) = market.equilibrium()?;
    let mut x_star: Vec<f64> = alloc.into_iter().flatten().collect();
    x_star.extend(prices);
    let mut theta_star: Vec<f64> = types.iter().flatten().cloned().collect();
    theta_star.extend(&budgets);
    Ok(Some(GameInstance {
        family,
        theta_star,
        constants: InstanceConstants::Fisher {
            class,
            types,
            budgets,
            supplies: market.supplies,
        },
        x_star,
        seed: 0,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{gradient_discrepancy, interior_point, sample_instance};
    use crate::planner::exploitability;

    #[test]
    fn eg_objective_examples() {
        let one = |p: f64, x: f64, t: f64, b: f64| {
            eg_objective(UtilityClass::Linear, &[p], &[vec![x]], &[vec![t]], &[b])
        };
        assert!(one(1.0, 1.0, 1.0, 1.0).abs() < 1e-15);
        assert!((one(2.0, 0.5, 1.0, 1.0) - (0.5f64.ln() + 1.0)).abs() < 1e-12);
        assert!((one(2.0, 0.5, 1.0, 1.0) - 0.30685).abs() < 1e-5);
        assert!((one(1.0, 1.0, 3.0, 2.0) - 2.0 * 3f64.ln()).abs() < 1e-12);
        assert!((one(1.0, 1.0, 3.0, 2.0) - 2.19722).abs() < 1e-5);
    }

    #[test]
    fn eg_objective_floors_zero_utility() {
        let v = eg_objective(UtilityClass::Linear, &[1.0], &[vec![0.0]], &[vec![1.0]], &[1.0]);
        assert!((v - (UTILITY_FLOOR.ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn best_response_examples() {
        let lin = buyer_best_response(UtilityClass::Linear, &[2.0, 1.0], 1.0, &[1.0, 1.0]).unwrap();
        assert_eq!(lin, vec![1.0, 0.0]);
        let cd =
            buyer_best_response(UtilityClass::CobbDouglas, &[0.5, 0.5], 4.0, &[1.0, 2.0]).unwrap();
        assert!((cd[0] - 2.0).abs() < 1e-12 && (cd[1] - 1.0).abs() < 1e-12);
        let leo = buyer_best_response(UtilityClass::Leontief, &[1.0, 1.0], 8.0, &[1.0, 3.0]).unwrap();
        assert!((leo[0] - 2.0).abs() < 1e-12 && (leo[1] - 2.0).abs() < 1e-12);
        let tie = buyer_best_response(UtilityClass::Linear, &[1.0, 2.0], 2.0, &[1.0, 2.0]).unwrap();
        assert_eq!(tie, vec![1.0, 0.5]);
    }

    #[test]
    fn linear_zero_price_is_unbounded() {
        let err = buyer_best_response(UtilityClass::Linear, &[1.0, 1.0], 1.0, &[0.0, 1.0]);
        assert!(matches!(err, Err(Error::UnboundedDemand { good: 0 })));
    }

    fn random_types(rng: &mut Rng, m: usize) -> Vec<f64> {
        (0..m).map(|_| rng.uniform_in(0.1, 10.0)).collect()
    }

    #[test]
    fn best_response_spends_budget_and_beats_random_bundles() {
        let mut rng = Rng::new(11);
        for class in [UtilityClass::Linear, UtilityClass::CobbDouglas, UtilityClass::Leontief] {
            for _ in 0..20 {
                let m = 3;
                let types = random_types(&mut rng, m);
                let prices: Vec<f64> = (0..m).map(|_| rng.uniform_in(0.2, 5.0)).collect();
                let budget = rng.uniform_in(0.1, 10.0);
                let x = buyer_best_response(class, &types, budget, &prices).unwrap();
                assert!((dot(&prices, &x) - budget).abs() <= 1e-10 * budget.max(1.0));
                let best = utility(class, &types, &x);
                for _ in 0..1000 {
                    // random bundle on the budget line
                    let w: Vec<f64> = (0..m).map(|_| rng.exponential()).collect();
                    let total: f64 = w.iter().sum();
                    let y: Vec<f64> = (0..m).map(|j| budget * w[j] / total / prices[j]).collect();
                    assert!(utility(class, &types, &y) <= best * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn linear_argmax_set_is_scale_invariant() {
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let types = random_types(&mut rng, 3);
            let prices: Vec<f64> = (0..3).map(|_| rng.uniform_in(0.2, 5.0)).collect();
            let c = rng.uniform_in(0.01, 100.0);
            let scaled: Vec<f64> = types.iter().map(|t| c * t).collect();
            let a = buyer_best_response(UtilityClass::Linear, &types, 1.0, &prices).unwrap();
            let b = buyer_best_response(UtilityClass::Linear, &scaled, 1.0, &prices).unwrap();
            let support = |x: &[f64]| x.iter().map(|v| *v > 0.0).collect::<Vec<_>>();
            assert_eq!(support(&a), support(&b));
        }
    }

    #[test]
    fn tatonnement_matches_cobb_douglas_closed_form() {
        let mut rng = Rng::new(3);
        for _ in 0..20 {
            let types: Vec<Vec<f64>> = (0..3).map(|_| random_types(&mut rng, 2)).collect();
            let budgets: Vec<f64> = (0..3).map(|_| rng.uniform_in(0.1, 10.0)).collect();
            let market = FisherMarket {
                class: UtilityClass::CobbDouglas,
                types: types.clone(),
                budgets: budgets.clone(),
                supplies: vec![1.0, 1.0],
            };
            let (prices, _) = market.tatonnement().unwrap();
            for j in 0..2 {
                let closed: f64 = (0..3)
                    .map(|i| types[i][j] / types[i].iter().sum::<f64>() * budgets[i])
                    .sum();
                assert!((prices[j] - closed).abs() <= 1e-7 * closed.max(1.0));
            }
        }
    }

    #[test]
    fn symmetric_linear_market_gives_symmetric_allocation() {
        let market = FisherMarket {
            class: UtilityClass::Linear,
            types: vec![vec![2.0, 3.0]; 3],
            budgets: vec![4.0; 3],
            supplies: vec![1.0, 1.0],
        };
        let (_, alloc) = market.equilibrium().unwrap();
        for row in &alloc[1..] {
            for (a, b) in row.iter().zip(&alloc[0]) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn sampled_markets_respect_floor_and_certify() {
        let mut rng = Rng::new(2024);
        for family in [Family::FisherLinear, Family::FisherCobbDouglas, Family::FisherLeontief] {
            for _ in 0..100 {
                let inst = sample_instance(family, &mut rng).unwrap();
                for v in &inst.theta_star {
                    assert!((0.1..=10.0).contains(v));
                }
                assert!(inst.certificate().unwrap() <= 1e-6);
            }
        }
    }

    #[test]
    fn fisher_linear_draws_stay_in_floor_range() {
        let mut rng = Rng::new(99);
        for _ in 0..500 {
            let inst = sample_instance(Family::FisherLinear, &mut rng).unwrap();
            let InstanceConstants::Fisher { budgets, types, .. } = &inst.constants else {
                panic!()
            };
            assert!(budgets.iter().all(|b| (0.1..=10.0).contains(b)));
            assert!(types.iter().flatten().all(|t| (0.1..=10.0).contains(t)));
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = Rng::new(8);
        for class in [UtilityClass::Linear, UtilityClass::CobbDouglas, UtilityClass::Leontief] {
            for params in [
                FisherParams::Budgets {
                    types: vec![vec![1.0, 2.0], vec![3.0, 0.5], vec![2.0, 2.0]],
                },
                FisherParams::TypesAndBudgets,
            ] {
                let game = FisherGame::new(class, vec![1.0, 1.0], params, 3).unwrap();
                for _ in 0..100 {
                    let theta = interior_point(game.param_space(), &mut rng, 0.9).unwrap();
                    let blocks: Vec<Vec<f64>> = (0..4)
                        .map(|i| {
                            let d = game.strategy_space(i).dim();
                            (0..d).map(|_| rng.uniform_in(0.2, 3.0)).collect()
                        })
                        .collect();
                    let x = StrategyProfile::from_blocks(&blocks);
                    let err = gradient_discrepancy(&game, &x, &theta, 1e-5);
                    assert!(err <= 1e-4, "{class:?}: {err}");
                }
            }
        }
    }

    #[test]
    fn exploitability_zero_at_certified_equilibrium() {
        let mut rng = Rng::new(1);
        let inst = sample_instance(Family::FisherCobbDouglas, &mut rng).unwrap();
        let (game, theta) = inst.game(crate::games::ParamMode::TypesAndBudgets).unwrap();
        let x = inst.observed_profile(game.as_ref()).unwrap();
        let e = exploitability(game.as_ref(), &theta, &x, &Default::default()).unwrap();
        assert!(e.value <= 1e-6 && e.value >= 0.0);
    }
}
