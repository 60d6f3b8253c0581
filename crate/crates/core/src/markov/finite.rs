use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::StrategyProfile;
use crate::spaces::{Rng, Space};

use super::{check_discount, MarkovGame, TransitionGrad};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FiniteRaw {
    n_states: usize,
    n_actions: Vec<usize>,
    discount: f64,
    initial: Vec<f64>,
    /// `[player][state][joint action]`
    base_rewards: Vec<Vec<Vec<f64>>>,
    /// `[param][player][state][joint action]`
    reward_basis: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[state][joint action][next state]`
    transitions: Vec<Vec<Vec<f64>>>,
    param_lower: Vec<f64>,
    param_upper: Vec<f64>,
}

/// A finite Markov game played in mixed strategies.
///
/// The state is `[index]`; each player's action is a distribution over its
/// pure actions, and rewards and transitions are the multilinear extensions
/// of the pure tables: `r_i = sum_a prod_j sigma_j(a_j) (R0_i + sum_k theta_k R_k,i)(s, a)`.
/// Joint actions are indexed mixed-radix with the last player fastest.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "FiniteRaw", into = "FiniteRaw")]
pub struct FiniteMarkovGame {
    raw: FiniteRaw,
    actions: Vec<Space>,
    params: Space,
    strides: Vec<usize>,
    n_joint: usize,
    bound: f64,
}

impl TryFrom<FiniteRaw> for FiniteMarkovGame {
    type Error = Error;

    fn try_from(raw: FiniteRaw) -> Result<Self> {
        check_discount(raw.discount)?;
        let n = raw.n_actions.len();
        let ns = raw.n_states;
        if n == 0 || ns == 0 || raw.n_actions.iter().any(|&k| k == 0) {
            return Err(Error::Config("need players, states and actions".into()));
        }
        let n_joint: usize = raw.n_actions.iter().product();
        let mut strides = vec![1; n];
        for j in (0..n.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * raw.n_actions[j + 1];
        }
        let bad = |what: &str| Error::Config(format!("finite game: malformed {what}"));
        let table_ok = |t: &Vec<Vec<Vec<f64>>>| {
            t.len() == n
                && t.iter().all(|p| {
                    p.len() == ns && p.iter().all(|r| r.len() == n_joint && r.iter().all(|v| v.is_finite()))
                })
        };
        if !table_ok(&raw.base_rewards) {
            return Err(bad("base rewards"));
        }
        if !raw.reward_basis.iter().all(table_ok) {
            return Err(bad("reward basis"));
        }
        let dist_ok = |d: &Vec<f64>| {
            d.len() == ns && d.iter().all(|&p| p >= 0.0) && (d.iter().sum::<f64>() - 1.0).abs() < 1e-9
        };
        if !dist_ok(&raw.initial) {
            return Err(bad("initial distribution"));
        }
        if raw.transitions.len() != ns || !raw.transitions.iter().all(|row| row.len() == n_joint && row.iter().all(dist_ok)) {
            return Err(bad("transition kernel"));
        }
        let k = raw.reward_basis.len();
        Error::check_dim(k, raw.param_lower.len())?;
        let params = Space::boxed(raw.param_lower.clone(), raw.param_upper.clone())?;
        let actions = raw
            .n_actions
            .iter()
            .map(|&d| Space::simplex(d, 1.0))
            .collect::<Result<Vec<_>>>()?;
        let max_abs = |t: &Vec<Vec<Vec<f64>>>| {
            t.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let mut bound = max_abs(&raw.base_rewards);
        for (basis, (l, u)) in raw.reward_basis.iter().zip(raw.param_lower.iter().zip(&raw.param_upper)) {
            bound += max_abs(basis) * l.abs().max(u.abs());
        }
        Ok(FiniteMarkovGame {
            raw,
            actions,
            params,
            strides,
            n_joint,
            bound,
        })
    }
}

impl From<FiniteMarkovGame> for FiniteRaw {
    fn from(g: FiniteMarkovGame) -> Self {
        g.raw
    }
}

impl FiniteMarkovGame {
    /// Tables drawn uniformly from `[-1, 1]`, transition rows and the initial
    /// distribution from normalized uniforms, `Theta = [-1, 1]^n_params`.
    pub fn random(
        n_players: usize,
        n_states: usize,
        n_actions: usize,
        n_params: usize,
        discount: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        let n_joint = n_actions.pow(n_players as u32);
        let table = |rng: &mut Rng| -> Vec<Vec<Vec<f64>>> {
            (0..n_players)
                .map(|_| {
                    (0..n_states)
                        .map(|_| (0..n_joint).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
                        .collect()
                })
                .collect()
        };
        let base_rewards = table(rng);
        let reward_basis = (0..n_params).map(|_| table(rng)).collect();
        let dist = |rng: &mut Rng| -> Vec<f64> {
            let w: Vec<f64> = (0..n_states).map(|_| rng.uniform() + 1e-3).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect()
        };
        let transitions = (0..n_states)
            .map(|_| (0..n_joint).map(|_| dist(rng)).collect())
            .collect();
        let initial = dist(rng);
        FiniteRaw {
            n_states,
            n_actions: vec![n_actions; n_players],
            discount,
            initial,
            base_rewards,
            reward_basis,
            transitions,
            param_lower: vec![-1.0; n_params],
            param_upper: vec![1.0; n_params],
        }
        .try_into()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        FiniteMarkovGame::try_from(self.raw.clone()).map(|_| ())
    }

    pub fn n_states(&self) -> usize {
        self.raw.n_states
    }

    pub fn n_actions(&self, player: usize) -> usize {
        self.raw.n_actions[player]
    }

    pub fn n_joint(&self) -> usize {
        self.n_joint
    }

    /// Pure action of `player` inside joint index `joint`.
    pub fn pure_action(&self, joint: usize, player: usize) -> usize {
        (joint / self.strides[player]) % self.raw.n_actions[player]
    }

    pub fn joint_index(&self, pure: &[usize]) -> usize {
        pure.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.raw.initial
    }

    /// Reward of `player` for a pure joint action.
    pub fn pure_reward(&self, player: usize, state: usize, joint: usize, theta: &[f64]) -> f64 {
        let mut r = self.raw.base_rewards[player][state][joint];
        for (t, basis) in theta.iter().zip(&self.raw.reward_basis) {
            r += t * basis[player][state][joint];
        }
        r
    }

    pub fn transition_row(&self, state: usize, joint: usize) -> &[f64] {
        &self.raw.transitions[state][joint]
    }

    fn state(&self, s: &[f64]) -> usize {
        (s[0].round().max(0.0) as usize).min(self.raw.n_states - 1)
    }

    /// Calls `visit(joint, prob, d prob / d sigma)` for every joint action.
    fn for_each_joint(&self, a: &StrategyProfile, mut visit: impl FnMut(usize, f64, &[f64])) {
        let n = self.raw.n_actions.len();
        let offsets: Vec<usize> = {
            let mut o = vec![0];
            for d in &self.raw.n_actions {
                o.push(o.last().unwrap() + d);
            }
            o
        };
        let mut grad = vec![0.0; offsets[n]];
        for joint in 0..self.n_joint {
            let pure: Vec<usize> = (0..n).map(|j| self.pure_action(joint, j)).collect();
            let mut prob = 1.0;
            for j in 0..n {
                prob *= a.block(j)[pure[j]];
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            for j in 0..n {
                let mut others = 1.0;
                for l in 0..n {
                    if l != j {
                        others *= a.block(l)[pure[l]];
                    }
                }
                grad[offsets[j] + pure[j]] = others;
            }
            visit(joint, prob, &grad);
        }
    }

    fn expected(&self, a: &StrategyProfile, table: impl Fn(usize) -> f64) -> (f64, Vec<f64>) {
        let mut value = 0.0;
        let mut grad = vec![0.0; a.values().len()];
        self.for_each_joint(a, |joint, prob, dprob| {
            let v = table(joint);
            value += prob * v;
            for (g, d) in grad.iter_mut().zip(dprob) {
                *g += d * v;
            }
        });
        (value, grad)
    }
}

impl MarkovGame for FiniteMarkovGame {
    fn n_players(&self) -> usize {
        self.raw.n_actions.len()
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn action_space(&self, player: usize) -> &Space {
        &self.actions[player]
    }

    fn param_space(&self) -> &Space {
        &self.params
    }

    fn discount(&self) -> f64 {
        self.raw.discount
    }

    fn initial_state(&self, rng: &mut Rng) -> Vec<f64> {
        vec![rng.categorical(&self.raw.initial) as f64]
    }

    fn rewards(&self, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let k = self.state(s);
        (0..self.n_players())
            .map(|i| self.expected(a, |j| self.pure_reward(i, k, j, theta)).0)
            .collect()
    }

    fn reward_grad_action(&self, player: usize, s: &[f64], a: &StrategyProfile, theta: &[f64]) -> Vec<f64> {
        let k = self.state(s);
        self.expected(a, |j| self.pure_reward(player, k, j, theta)).1
    }

    fn reward_grad_theta(&self, player: usize, s: &[f64], a: &StrategyProfile, _theta: &[f64]) -> Vec<f64> {
        let k = self.state(s);
        self.raw
            .reward_basis
            .iter()
            .map(|basis| self.expected(a, |j| basis[player][k][j]).0)
            .collect()
    }

    fn step(&self, s: &[f64], a: &StrategyProfile, rng: &mut Rng) -> Result<(Vec<f64>, TransitionGrad)> {
        let k = self.state(s);
        let mut probs = vec![0.0; self.raw.n_states];
        self.for_each_joint(a, |joint, prob, _| {
            for (p, q) in probs.iter_mut().zip(&self.raw.transitions[k][joint]) {
                *p += prob * q;
            }
        });
        let next = rng.categorical(&probs);
        let (p_next, dp) = self.expected(a, |joint| self.raw.transitions[k][joint][next]);
        let score = dp.into_iter().map(|d| d / p_next).collect();
        Ok((
            vec![next as f64],
            TransitionGrad::Score {
                action: score,
                state: vec![0.0],
            },
        ))
    }

    fn reward_bound(&self) -> f64 {
        self.bound
    }
}
