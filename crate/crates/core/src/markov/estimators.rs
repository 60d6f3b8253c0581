use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::games::StrategyProfile;
use crate::spaces::Rng;

use super::{History, MarkovGame, Policy, TransitionGrad};

/// Where one player's actions come from during a rollout.
///
/// Sources marked `differentiate` are tracked: the rollout records
/// `d a_t / d params` for them, and every tracked source must share the same
/// parameter vector (the one gradients are taken with respect to).
#[derive(Clone, Copy, Debug)]
pub struct PlayerSource<'a> {
    pub policy: &'a dyn Policy,
    pub params: &'a [f64],
    pub differentiate: bool,
}

impl<'a> PlayerSource<'a> {
    pub fn fixed(policy: &'a dyn Policy, params: &'a [f64]) -> Self {
        PlayerSource {
            policy,
            params,
            differentiate: false,
        }
    }

    pub fn tracked(policy: &'a dyn Policy, params: &'a [f64]) -> Self {
        PlayerSource {
            policy,
            params,
            differentiate: true,
        }
    }
}

/// A simulated history plus the derivative records needed for reverse-mode
/// accumulation.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub history: History,
    /// `d a_t / d z` over the flattened profile, one per step.
    action_params: Vec<DMatrix<f64>>,
    /// `d a_t / d s_t`, one per step.
    action_state: Vec<DMatrix<f64>>,
    /// Transition `t -> t + 1`, one per step except the last.
    transitions: Vec<TransitionGrad>,
    z_dim: usize,
}

impl Rollout {
    pub fn z_dim(&self) -> usize {
        self.z_dim
    }
}

/// Simulates `horizon` steps. With `with_grads` the policy and transition
/// Jacobians are recorded for [`backprop`].
pub fn rollout(
    game: &dyn MarkovGame,
    sources: &[PlayerSource<'_>],
    horizon: usize,
    rng: &mut Rng,
    with_grads: bool,
) -> Result<Rollout> {
    let n = game.n_players();
    Error::check_dim(n, sources.len())?;
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let z_dim = sources
        .iter()
        .find(|s| s.differentiate)
        .map_or(0, |s| s.params.len());
    if sources.iter().any(|s| s.differentiate && s.params.len() != z_dim) {
        return Err(Error::Config("tracked sources must share one parameter vector".into()));
    }
    let dims = game.action_dims();
    let offsets: Vec<usize> = std::iter::once(0)
        .chain(dims.iter().scan(0, |acc, d| {
            *acc += d;
            Some(*acc)
        }))
        .collect();
    let a_dim = offsets[n];
    let sd = game.state_dim();

    let mut states = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    let mut action_params = Vec::new();
    let mut action_state = Vec::new();
    let mut transitions = Vec::new();
    let mut s = game.initial_state(rng);
    for t in 0..horizon {
        let blocks: Vec<Vec<f64>> = sources
            .iter()
            .enumerate()
            .map(|(i, src)| src.policy.act(i, src.params, &s))
            .collect();
        for (i, b) in blocks.iter().enumerate() {
            Error::check_dim(dims[i], b.len())?;
        }
        let a = StrategyProfile::from_blocks(&blocks);
        if with_grads {
            let mut jp = DMatrix::zeros(a_dim, z_dim);
            let mut js = DMatrix::zeros(a_dim, sd);
            for (i, src) in sources.iter().enumerate() {
                let (jx, jsi) = src.policy.jacobian(i, src.params, &s);
                js.view_mut((offsets[i], 0), (dims[i], sd)).copy_from(&jsi);
                if src.differentiate {
                    let r = src.policy.param_range(i);
                    jp.view_mut((offsets[i], r.start), (dims[i], r.len())).copy_from(&jx);
                }
            }
            action_params.push(jp);
            action_state.push(js);
        }
        let next = if t + 1 < horizon {
            let (next, grad) = game.step(&s, &a, rng)?;
            if with_grads {
                transitions.push(grad);
            }
            Some(next)
        } else {
            None
        };
        states.push(std::mem::take(&mut s));
        actions.push(a);
        if let Some(next) = next {
            s = next;
        }
    }
    Ok(Rollout {
        history: History { states, actions },
        action_params,
        action_state,
        transitions,
        z_dim,
    })
}

/// Reverse-mode accumulation of `dJ/dz` for an objective whose direct
/// per-step derivatives are `direct_state[t]` and `direct_action[t]`.
///
/// Discrete transitions contribute `score_t * score_weight[t]`, where the
/// weight is the part of `J` realized after step `t`.
pub fn backprop(
    rollout: &Rollout,
    direct_state: &[Vec<f64>],
    direct_action: &[Vec<f64>],
    score_weight: &[f64],
) -> Result<Vec<f64>> {
    let h = rollout.history.horizon();
    if rollout.action_params.len() != h {
        return Err(Error::Config("rollout was recorded without gradients".into()));
    }
    Error::check_dim(h, direct_state.len())?;
    Error::check_dim(h, direct_action.len())?;
    Error::check_dim(h, score_weight.len())?;
    let sd = rollout.action_state[0].ncols();
    let mut grad = DVector::zeros(rollout.z_dim);
    let mut lambda_next = DVector::<f64>::zeros(sd);
    for t in (0..h).rev() {
        let mut mu = DVector::from_column_slice(&direct_action[t]);
        let mut lambda = DVector::from_column_slice(&direct_state[t]);
        if t + 1 < h {
            match &rollout.transitions[t] {
                TransitionGrad::Exogenous => {}
                TransitionGrad::Score { action, state } => {
                    mu += DVector::from_column_slice(action) * score_weight[t];
                    lambda += DVector::from_column_slice(state) * score_weight[t];
                }
                TransitionGrad::Reparam { state, action } => {
                    mu += action.tr_mul(&lambda_next);
                    lambda += state.tr_mul(&lambda_next);
                }
                TransitionGrad::Opaque => {
                    return Err(Error::Unsupported(
                        "the game's transition has no derivative".into(),
                    ))
                }
            }
        }
        grad += rollout.action_params[t].tr_mul(&mu);
        lambda += rollout.action_state[t].tr_mul(&mu);
        lambda_next = lambda;
    }
    Ok(grad.iter().cloned().collect())
}

/// Discounted return of `player` along a rollout together with its pathwise
/// derivative with respect to the tracked parameters.
pub(crate) fn return_and_grad(
    game: &dyn MarkovGame,
    rollout: &Rollout,
    player: usize,
    theta: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let h = rollout.history.horizon();
    let gamma = game.discount();
    let mut rewards = Vec::with_capacity(h);
    let mut direct_s = Vec::with_capacity(h);
    let mut direct_a = Vec::with_capacity(h);
    let mut w = 1.0;
    for (s, a) in rollout.history.states.iter().zip(&rollout.history.actions) {
        rewards.push(w * game.rewards(s, a, theta)[player]);
        direct_a.push(scaled(game.reward_grad_action(player, s, a, theta), w));
        direct_s.push(scaled(game.reward_grad_state(player, s, a, theta), w));
        w *= gamma;
    }
    // weight for the transition out of step t is the return from t + 1 on
    let mut tail = vec![0.0; h];
    let mut acc = 0.0;
    for t in (0..h).rev() {
        tail[t] = acc;
        acc += rewards[t];
    }
    let grad = backprop(rollout, &direct_s, &direct_a, &tail)?;
    Ok((acc, grad))
}

fn scaled(mut v: Vec<f64>, w: f64) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x *= w);
    v
}

/// `sum_t gamma^t grad_theta r_player(s_t, a_t; theta)`
pub(crate) fn discounted_theta_grad(
    game: &dyn MarkovGame,
    h: &History,
    player: usize,
    theta: &[f64],
) -> Vec<f64> {
    let mut out = vec![0.0; theta.len()];
    let mut w = 1.0;
    for (s, a) in h.states.iter().zip(&h.actions) {
        for (o, g) in out.iter_mut().zip(game.reward_grad_theta(player, s, a, theta)) {
            *o += w * g;
        }
        w *= game.discount();
    }
    out
}

/// `sum_i [sum_t gamma^t grad_theta r_i(deviation_i) - sum_t gamma^t grad_theta r_i(h_eq)]`
/// with `deviations[i]` the history in which player `i` deviated.
pub fn grad_estimator_theta(
    game: &dyn MarkovGame,
    deviations: &[History],
    equilibrium: &History,
    theta: &[f64],
) -> Result<Vec<f64>> {
    Error::check_dim(game.n_players(), deviations.len())?;
    Error::check_dim(game.param_space().dim(), theta.len())?;
    let mut out = vec![0.0; theta.len()];
    for (i, h) in deviations.iter().enumerate() {
        let dev = discounted_theta_grad(game, h, i, theta);
        let eq = discounted_theta_grad(game, equilibrium, i, theta);
        for ((o, d), e) in out.iter_mut().zip(dev).zip(eq) {
            *o += d - e;
        }
    }
    Ok(out)
}

/// Single-sample estimate of `d/dx sum_i u_i(pi_i^x, pi_{-i}^obs; theta)`:
/// one rollout per player with that player on `policy` at `x` and the rest
/// on the observed profile.
pub fn grad_estimator_x(
    game: &dyn MarkovGame,
    policy: &dyn Policy,
    x: &[f64],
    observed: (&dyn Policy, &[f64]),
    theta: &[f64],
    horizon: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    for i in 0..game.n_players() {
        let (_, g, _) = deviation_sample(game, policy, x, observed, i, theta, horizon, rng)?;
        for (o, v) in out.iter_mut().zip(g) {
            *o += v;
        }
    }
    Ok(out)
}

/// One deviation rollout of `player`: its return, the x-gradient and the
/// history.
#[allow(clippy::too_many_arguments)]
pub(crate) fn deviation_sample(
    game: &dyn MarkovGame,
    policy: &dyn Policy,
    x: &[f64],
    observed: (&dyn Policy, &[f64]),
    player: usize,
    theta: &[f64],
    horizon: usize,
    rng: &mut Rng,
) -> Result<(f64, Vec<f64>, History)> {
    let sources: Vec<PlayerSource<'_>> = (0..game.n_players())
        .map(|j| {
            if j == player {
                PlayerSource::tracked(policy, x)
            } else {
                PlayerSource::fixed(observed.0, observed.1)
            }
        })
        .collect();
    let r = rollout(game, &sources, horizon, rng, true)?;
    let (value, grad) = return_and_grad(game, &r, player, theta)?;
    Ok((value, grad, r.history))
}
