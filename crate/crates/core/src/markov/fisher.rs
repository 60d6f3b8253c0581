use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{BUDGET_RANGE, TYPE_RANGE, UTILITY_FLOOR};
use crate::games::StrategyProfile;
use crate::spaces::{dot, Rng, Space};

use super::{check_discount, MarkovGame, TransitionGrad};

/// Exogenous income added to savings each period, drawn uniformly.
pub const INCOME_RANGE: (f64, f64) = (0.5, 1.5);
const ALLOCATION_MAX: f64 = 10.0;
const SAVINGS_MAX: f64 = 5.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct StochasticFisherRaw {
    n_buyers: usize,
    n_goods: usize,
    supplies: Vec<f64>,
    initial_budgets: Vec<f64>,
    discount: f64,
    #[serde(default = "default_income")]
    income: (f64, f64),
    /// Types the instance was generated with, buyer-major.
    reference_types: Vec<f64>,
}

fn default_income() -> (f64, f64) {
    INCOME_RANGE
}

/// Repeated Fisher market with savings and linear utilities.
///
/// The state is `[q_0..q_m, b_0..b_n]`. Players `0..n` are buyers choosing
/// `[X_i1..X_im, s_i]`; player `n` is the seller choosing prices. Buyer `i`
/// earns `(b_i + s_i) log(u_i / (b_i + s_i)) - p . X_i`, the seller earns
/// `-p . (q - sum_i X_i)`. Next period `b_i' = s_i + income_i` and supplies
/// stay fixed. `theta` is the buyer-major type matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "StochasticFisherRaw", into = "StochasticFisherRaw")]
pub struct StochasticFisherGame {
    raw: StochasticFisherRaw,
    buyer_space: Space,
    seller_space: Space,
    params: Space,
}

impl TryFrom<StochasticFisherRaw> for StochasticFisherGame {
    type Error = Error;

    fn try_from(raw: StochasticFisherRaw) -> Result<Self> {
        check_discount(raw.discount)?;
        let (n, m) = (raw.n_buyers, raw.n_goods);
        if n == 0 || m == 0 {
            return Err(Error::Config("need at least one buyer and one good".into()));
        }
        Error::check_dim(m, raw.supplies.len())?;
        Error::check_dim(n, raw.initial_budgets.len())?;
        Error::check_dim(n * m, raw.reference_types.len())?;
        if raw.supplies.iter().chain(&raw.initial_budgets).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("supplies and budgets must be positive".into()));
        }
        if !(raw.income.0 > 0.0 && raw.income.0 <= raw.income.1) {
            return Err(Error::Config("income range must be positive".into()));
        }
        let mut upper = vec![ALLOCATION_MAX; m];
        upper.push(SAVINGS_MAX);
        let price_max = 2.0 * n as f64 * (BUDGET_RANGE.1 + SAVINGS_MAX);
        Ok(StochasticFisherGame {
            buyer_space: Space::boxed(vec![0.0; m + 1], upper)?,
            seller_space: Space::cube(m, 0.0, price_max)?,
            params: Space::cube(n * m, TYPE_RANGE.0, TYPE_RANGE.1)?,
            raw,
        })
    }
}

impl From<StochasticFisherGame> for StochasticFisherRaw {
    fn from(g: StochasticFisherGame) -> Self {
        g.raw
    }
}

impl StochasticFisherGame {
    /// Types and initial budgets are drawn as `max(U[0, 10], 0.1)`.
    pub fn sample(
        n_buyers: usize,
        n_goods: usize,
        supplies: Vec<f64>,
        discount: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let draw = |rng: &mut Rng| rng.uniform_in(0.0, 10.0).max(0.1);
        let reference_types = (0..n_buyers * n_goods).map(|_| draw(rng)).collect();
        let initial_budgets = (0..n_buyers).map(|_| draw(rng)).collect();
        StochasticFisherRaw {
            n_buyers,
            n_goods,
            supplies,
            initial_budgets,
            discount,
            income: INCOME_RANGE,
            reference_types,
        }
        .try_into()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        StochasticFisherGame::try_from(self.raw.clone()).map(|_| ())
    }

    pub fn n_buyers(&self) -> usize {
        self.raw.n_buyers
    }

    pub fn n_goods(&self) -> usize {
        self.raw.n_goods
    }

    pub fn reference_types(&self) -> &[f64] {
        &self.raw.reference_types
    }

    pub fn seller(&self) -> usize {
        self.raw.n_buyers
    }

    fn types<'a>(&self, theta: &'a [f64], i: usize) -> &'a [f64] {
        let m = self.raw.n_goods;
        &theta[i * m..(i + 1) * m]
    }

    fn budget(&self, s: &[f64], i: usize) -> f64 {
        s[self.raw.n_goods + i]
    }

    /// `(b_i + s_i, u_i)` with the utility floored.
    fn buyer_terms(&self, s: &[f64], a: &StrategyProfile, theta: &[f64], i: usize) -> (f64, f64, bool) {
        let m = self.raw.n_goods;
        let block = a.block(i);
        let w = self.budget(s, i) + block[m];
        let u = dot(self.types(theta, i), &block[..m]);
        (w, u.max(UTILITY_FLOOR), u < UTILITY_FLOOR)
    }

    /// `p . (q - sum_i X_i) + sum_i (b_i + s_i) log(u_i / (b_i + s_i))`
    pub fn total_reward(&self, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> f64 {
        let r = self.rewards(s, a, theta);
        let p = a.block(self.seller());
        let q = &s[..self.raw.n_goods];
        r[..self.raw.n_buyers].iter().sum::<f64>() + dot(p, q)
    }
}

impl MarkovGame for StochasticFisherGame {
    fn n_players(&self) -> usize {
        self.raw.n_buyers + 1
    }

    fn state_dim(&self) -> usize {
        self.raw.n_goods + self.raw.n_buyers
    }

    fn action_space(&self, player: usize) -> &Space {
        if player == self.seller() {
            &self.seller_space
        } else {
            &self.buyer_space
        }
    }

    fn param_space(&self) -> &Space {
        &self.params
    }

    fn discount(&self) -> f64 {
        self.raw.discount
    }

    fn initial_state(&self, _rng: &mut Rng) -> Vec<f64> {
        let mut s = self.raw.supplies.clone();
        s.extend_from_slice(&self.raw.initial_budgets);
        s
    }

    fn rewards(&self, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let (n, m) = (self.raw.n_buyers, self.raw.n_goods);
        let p = a.block(n);
        let mut excess = s[..m].to_vec();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let x = &a.block(i)[..m];
            let (w, u, _) = self.buyer_terms(s, a, theta, i);
            out.push(w * (u / w).ln() - dot(p, x));
            for (e, v) in excess.iter_mut().zip(x) {
                *e -= v;
            }
        }
        out.push(-dot(p, &excess));
        out
    }

    fn reward_grad_action(&self, player: usize, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let (n, m) = (self.raw.n_buyers, self.raw.n_goods);
        let mut g = vec![0.0; n * (m + 1) + m];
        let p = a.block(n);
        let price_at = n * (m + 1);
        if player == n {
            for j in 0..m {
                let supplied: f64 = (0..n).map(|i| a.block(i)[j]).sum();
                g[price_at + j] = -(s[j] - supplied);
                for i in 0..n {
                    g[i * (m + 1) + j] = p[j];
                }
            }
            return g;
        }
        let (w, u, floored) = self.buyer_terms(s, a, theta, player);
        let t = self.types(theta, player);
        let at = player * (m + 1);
        for j in 0..m {
            g[at + j] = if floored { 0.0 } else { w * t[j] / u } - p[j];
            g[price_at + j] = -a.block(player)[j];
        }
        g[at + m] = (u / w).ln() - 1.0;
        g
    }

    fn reward_grad_state(&self, player: usize, _s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let (n, m) = (self.raw.n_buyers, self.raw.n_goods);
        let mut g = vec![0.0; m + n];
        if player == n {
            for (gj, pj) in g.iter_mut().zip(a.block(n)) {
                *gj = -pj;
            }
        } else {
            let (w, u, _) = self.buyer_terms(_s, a, theta, player);
            g[m + player] = (u / w).ln() - 1.0;
        }
        g
    }

    fn reward_grad_theta(&self, player: usize, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let (n, m) = (self.raw.n_buyers, self.raw.n_goods);
        let mut g = vec![0.0; n * m];
        if player == n {
            return g;
        }
        let (w, u, floored) = self.buyer_terms(s, a, theta, player);
        if !floored {
            for j in 0..m {
                g[player * m + j] = w * a.block(player)[j] / u;
            }
        }
        g
    }

    fn step(&self, s: &[f64], a: &StrategyProfile, rng: &mut Rng) -> Result<(Vec<f64>, TransitionGrad)> {
        let (n, m) = (self.raw.n_buyers, self.raw.n_goods);
        let mut next = s[..m].to_vec();
        let mut d_state = DMatrix::zeros(m + n, m + n);
        let mut d_action = DMatrix::zeros(m + n, n * (m + 1) + m);
        for j in 0..m {
            d_state[(j, j)] = 1.0;
        }
        for i in 0..n {
            next.push(a.block(i)[m] + rng.uniform_in(self.raw.income.0, self.raw.income.1));
            d_action[(m + i, i * (m + 1) + m)] = 1.0;
        }
        Ok((
            next,
            TransitionGrad::Reparam {
                state: d_state,
                action: d_action,
            },
        ))
    }

    fn reward_bound(&self) -> f64 {
        let m = self.raw.n_goods as f64;
        let w_max = self.raw.initial_budgets.iter().cloned().fold(SAVINGS_MAX + self.raw.income.1, f64::max)
            + SAVINGS_MAX;
        let u_max = TYPE_RANGE.1 * ALLOCATION_MAX * m;
        let log_term = w_max * (u_max / self.raw.income.0).ln().abs().max((UTILITY_FLOOR / w_max).ln().abs());
        let p_max = match &self.seller_space {
            Space::Box { upper, .. } => upper[0],
            _ => unreachable!(),
        };
        let q: f64 = self.raw.supplies.iter().sum();
        log_term + p_max * (q + ALLOCATION_MAX * self.raw.n_buyers as f64)
    }
}
