use std::fmt::Debug;
use std::ops::Range;

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::Space;

use super::MarkovGame;

/// A parametric policy profile `pi_x : S -> A`.
///
/// Parameters are laid out player by player; `param_range(i)` is the slice of
/// `x` that drives player `i`'s action.
pub trait Policy: Send + Sync + Debug {
    fn n_players(&self) -> usize;
    fn param_space(&self) -> &Space;
    fn param_range(&self, player: usize) -> Range<usize>;
    fn act(&self, player: usize, x: &[f64], s: &[f64]) -> Vec<f64>;

    /// `(d a_i / d x[param_range(i)], d a_i / d s)`
    fn jacobian(&self, player: usize, x: &[f64], s: &[f64]) -> (DMatrix<f64>, DMatrix<f64>);
}

/// Serializable choice of policy class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Constant,
    TabularDirect { n_states: usize },
    TabularSoftmax { n_states: usize, logit_bound: f64 },
    Linear { weight_bound: f64 },
}

impl PolicySpec {
    pub fn build(&self, game: &dyn MarkovGame) -> Result<Arc<dyn Policy>> {
        Ok(match *self {
            PolicySpec::Constant => Arc::new(ConstantPolicy::new(game)?),
            PolicySpec::TabularDirect { n_states } => Arc::new(TabularDirect::new(game, n_states)?),
            PolicySpec::TabularSoftmax {
                n_states,
                logit_bound,
            } => Arc::new(TabularSoftmax::new(game, n_states, logit_bound)?),
            PolicySpec::Linear { weight_bound } => Arc::new(LinearPolicy::new(game, weight_bound)?),
        })
    }
}

fn offsets(dims: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for d in dims {
        out.push(out.last().unwrap() + d);
    }
    out
}

fn state_index(s: &[f64], n_states: usize) -> usize {
    let k = s[0].round();
    debug_assert!(k >= 0.0 && (k as usize) < n_states, "state {k} out of range");
    (k.max(0.0) as usize).min(n_states - 1)
}

fn require_finite_states(game: &dyn MarkovGame, n_states: usize) -> Result<()> {
    if game.state_dim() != 1 || n_states == 0 {
        return Err(Error::Unsupported(
            "tabular policies need a finite game with a scalar state index".into(),
        ));
    }
    Ok(())
}

/// State-independent actions: `x` is the action profile itself.
#[derive(Clone, Debug)]
pub struct ConstantPolicy {
    space: Space,
    offsets: Vec<usize>,
    state_dim: usize,
}

impl ConstantPolicy {
    pub fn new(game: &dyn MarkovGame) -> Result<Self> {
        let factors: Vec<Space> = (0..game.n_players())
            .map(|i| game.action_space(i).clone())
            .collect();
        Ok(ConstantPolicy {
            offsets: offsets(factors.iter().map(Space::dim)),
            space: Space::product(factors)?,
            state_dim: game.state_dim(),
        })
    }
}

impl Policy for ConstantPolicy {
    fn n_players(&self) -> usize {
        self.offsets.len() - 1
    }

    fn param_space(&self) -> &Space {
        &self.space
    }

    fn param_range(&self, player: usize) -> Range<usize> {
        self.offsets[player]..self.offsets[player + 1]
    }

    fn act(&self, player: usize, x: &[f64], _s: &[f64]) -> Vec<f64> {
        x[self.param_range(player)].to_vec()
    }

    fn jacobian(&self, player: usize, _x: &[f64], _s: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.param_range(player).len();
        (DMatrix::identity(d, d), DMatrix::zeros(d, self.state_dim))
    }
}

/// One action per (player, state), each in the player's action space.
/// Layout: player-major, then state.
#[derive(Clone, Debug)]
pub struct TabularDirect {
    space: Space,
    offsets: Vec<usize>,
    dims: Vec<usize>,
    n_states: usize,
}

impl TabularDirect {
    pub fn new(game: &dyn MarkovGame, n_states: usize) -> Result<Self> {
        require_finite_states(game, n_states)?;
        let dims = game.action_dims();
        let mut factors = Vec::new();
        for i in 0..game.n_players() {
            for _ in 0..n_states {
                factors.push(game.action_space(i).clone());
            }
        }
        Ok(TabularDirect {
            space: Space::product(factors)?,
            offsets: offsets(dims.iter().map(|d| d * n_states)),
            dims,
            n_states,
        })
    }

    /// Parameters that play `table[i][s]` in state `s`.
    pub fn params_from_table(&self, table: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
        Error::check_dim(self.dims.len(), table.len())?;
        let mut x = Vec::with_capacity(self.space.dim());
        for (i, rows) in table.iter().enumerate() {
            Error::check_dim(self.n_states, rows.len())?;
            for row in rows {
                Error::check_dim(self.dims[i], row.len())?;
                x.extend_from_slice(row);
            }
        }
        Ok(x)
    }
}

impl Policy for TabularDirect {
    fn n_players(&self) -> usize {
        self.dims.len()
    }

    fn param_space(&self) -> &Space {
        &self.space
    }

    fn param_range(&self, player: usize) -> Range<usize> {
        self.offsets[player]..self.offsets[player + 1]
    }

    fn act(&self, player: usize, x: &[f64], s: &[f64]) -> Vec<f64> {
        let k = state_index(s, self.n_states);
        let start = self.offsets[player] + k * self.dims[player];
        x[start..start + self.dims[player]].to_vec()
    }

    fn jacobian(&self, player: usize, _x: &[f64], s: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dims[player];
        let k = state_index(s, self.n_states);
        let mut jx = DMatrix::zeros(d, d * self.n_states);
        for j in 0..d {
            jx[(j, k * d + j)] = 1.0;
        }
        (jx, DMatrix::zeros(d, 1))
    }
}

/// Softmax over logits per (player, state); action spaces must be simplices.
#[derive(Clone, Debug)]
pub struct TabularSoftmax {
    space: Space,
    offsets: Vec<usize>,
    dims: Vec<usize>,
    scales: Vec<f64>,
    n_states: usize,
}

impl TabularSoftmax {
    /// Logits are confined to `[-logit_bound, logit_bound]`.
    pub fn new(game: &dyn MarkovGame, n_states: usize, logit_bound: f64) -> Result<Self> {
        require_finite_states(game, n_states)?;
        let mut scales = Vec::new();
        for i in 0..game.n_players() {
            match game.action_space(i) {
                Space::Simplex { scale, .. } => scales.push(*scale),
                other => {
                    return Err(Error::Unsupported(format!(
                        "softmax policy needs simplex actions, player {i} has {other:?}"
                    )))
                }
            }
        }
        let dims = game.action_dims();
        let total: usize = dims.iter().map(|d| d * n_states).sum();
        Ok(TabularSoftmax {
            space: Space::cube(total, -logit_bound, logit_bound)?,
            offsets: offsets(dims.iter().map(|d| d * n_states)),
            dims,
            scales,
            n_states,
        })
    }

    fn probs(&self, player: usize, x: &[f64], s: &[f64]) -> Vec<f64> {
        let k = state_index(s, self.n_states);
        let d = self.dims[player];
        let start = self.offsets[player] + k * d;
        let logits = &x[start..start + d];
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }
}

impl Policy for TabularSoftmax {
    fn n_players(&self) -> usize {
        self.dims.len()
    }

    fn param_space(&self) -> &Space {
        &self.space
    }

    fn param_range(&self, player: usize) -> Range<usize> {
        self.offsets[player]..self.offsets[player + 1]
    }

    fn act(&self, player: usize, x: &[f64], s: &[f64]) -> Vec<f64> {
        let c = self.scales[player];
        self.probs(player, x, s).into_iter().map(|p| c * p).collect()
    }

    fn jacobian(&self, player: usize, x: &[f64], s: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dims[player];
        let k = state_index(s, self.n_states);
        let p = self.probs(player, x, s);
        let c = self.scales[player];
        let mut jx = DMatrix::zeros(d, d * self.n_states);
        for a in 0..d {
            for b in 0..d {
                let delta = if a == b { p[a] } else { 0.0 };
                jx[(a, k * d + b)] = c * (delta - p[a] * p[b]);
            }
        }
        (jx, DMatrix::zeros(d, 1))
    }
}

/// `a_i = clamp(W_i s + c_i)` on box action spaces. Per player the
/// parameters are `W_i` row-major followed by `c_i`.
#[derive(Clone, Debug)]
pub struct LinearPolicy {
    space: Space,
    offsets: Vec<usize>,
    bounds: Vec<(Vec<f64>, Vec<f64>)>,
    state_dim: usize,
}

impl LinearPolicy {
    pub fn new(game: &dyn MarkovGame, weight_bound: f64) -> Result<Self> {
        let sd = game.state_dim();
        let mut bounds = Vec::new();
        for i in 0..game.n_players() {
            match game.action_space(i) {
                Space::Box { lower, upper } => bounds.push((lower.clone(), upper.clone())),
                other => {
                    return Err(Error::Unsupported(format!(
                        "linear policy needs box actions, player {i} has {other:?}"
                    )))
                }
            }
        }
        let sizes: Vec<usize> = bounds.iter().map(|(l, _)| l.len() * (sd + 1)).collect();
        let total = sizes.iter().sum();
        Ok(LinearPolicy {
            space: Space::cube(total, -weight_bound, weight_bound)?,
            offsets: offsets(sizes.into_iter()),
            bounds,
            state_dim: sd,
        })
    }

    fn raw(&self, player: usize, x: &[f64], s: &[f64]) -> Vec<f64> {
        let d = self.bounds[player].0.len();
        let sd = self.state_dim;
        let p = &x[self.param_range(player)];
        (0..d)
            .map(|k| {
                let w = &p[k * sd..(k + 1) * sd];
                w.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() + p[d * sd + k]
            })
            .collect()
    }

    /// Parameters with zero weights and intercepts `c` (clamped to the box).
    pub fn constant_params(&self, actions: &[Vec<f64>]) -> Result<Vec<f64>> {
        Error::check_dim(self.bounds.len(), actions.len())?;
        let mut x = vec![0.0; self.space.dim()];
        for (i, a) in actions.iter().enumerate() {
            let d = self.bounds[i].0.len();
            Error::check_dim(d, a.len())?;
            let start = self.offsets[i] + d * self.state_dim;
            x[start..start + d].copy_from_slice(a);
        }
        self.space.project(&x)
    }
}

impl Policy for LinearPolicy {
    fn n_players(&self) -> usize {
        self.bounds.len()
    }

    fn param_space(&self) -> &Space {
        &self.space
    }

    fn param_range(&self, player: usize) -> Range<usize> {
        self.offsets[player]..self.offsets[player + 1]
    }

    fn act(&self, player: usize, x: &[f64], s: &[f64]) -> Vec<f64> {
        let (lo, hi) = &self.bounds[player];
        self.raw(player, x, s)
            .into_iter()
            .enumerate()
            .map(|(k, v)| v.clamp(lo[k], hi[k]))
            .collect()
    }

    fn jacobian(&self, player: usize, x: &[f64], s: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let (lo, hi) = &self.bounds[player];
        let d = lo.len();
        let sd = self.state_dim;
        let p = &x[self.param_range(player)];
        let raw = self.raw(player, x, s);
        let mut jx = DMatrix::zeros(d, d * (sd + 1));
        let mut js = DMatrix::zeros(d, sd);
        for k in 0..d {
            if raw[k] < lo[k] || raw[k] > hi[k] {
                continue;
            }
            for j in 0..sd {
                jx[(k, k * sd + j)] = s[j];
                js[(k, j)] = p[k * sd + j];
            }
            jx[(k, d * sd + k)] = 1.0;
        }
        (jx, js)
    }
}
