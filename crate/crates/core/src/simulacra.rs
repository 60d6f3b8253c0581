//! Simulacral learning: fitting parameters and a policy profile to lossy
//! observations of equilibrium play.

use std::fmt::Debug;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::StrategyProfile;
use crate::markov::{
    backprop, mc_certificate, rollout, MarkovGame, McCertificate, PlayerSource,
    Policy, Rollout, SgdaConfig,
};
use crate::markov::{discounted_return, History};
use crate::spaces::{mix_seed, norm, Rng};

/// A user-supplied per-step observation `phi(s_t, a_t)` with its Jacobian
/// with respect to `[s_t; a_t]`.
pub trait StepObservation: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn observe(&self, s: &[f64], a: &[f64]) -> Vec<f64>;
    fn jacobian(&self, s: &[f64], a: &[f64]) -> DMatrix<f64>;
}

/// How a history is reduced to an observation vector. Every map observes
/// each step separately and concatenates the steps.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationMap {
    /// `[s_t; a_t]`
    Identity,
    StateOnly,
    /// Sum of the listed players' actions (all players when empty); the
    /// listed players must share one action dimension.
    AggregateActions { players: Vec<usize> },
    /// Entries of `[s_t; a_t]`.
    Coordinates { indices: Vec<usize> },
    #[serde(skip)]
    Custom(Arc<dyn StepObservation>),
}

impl ObservationMap {
    fn players(&self, game: &dyn MarkovGame) -> Vec<usize> {
        match self {
            ObservationMap::AggregateActions { players } if !players.is_empty() => players.clone(),
            _ => (0..game.n_players()).collect(),
        }
    }

    /// Observation length per step.
    pub fn step_dim(&self, game: &dyn MarkovGame) -> Result<usize> {
        let sd = game.state_dim();
        let ad: usize = game.action_dims().iter().sum();
        match self {
            ObservationMap::Identity => Ok(sd + ad),
            ObservationMap::StateOnly => Ok(sd),
            ObservationMap::AggregateActions { .. } => {
                let players = self.players(game);
                let dims = game.action_dims();
                let d = players
                    .first()
                    .and_then(|&i| dims.get(i))
                    .copied()
                    .ok_or_else(|| Error::Config("aggregate map needs valid players".into()))?;
                if players.iter().any(|&i| dims.get(i) != Some(&d)) {
                    return Err(Error::Config("aggregated players must share an action dimension".into()));
                }
                Ok(d)
            }
            ObservationMap::Coordinates { indices } => {
                if let Some(&k) = indices.iter().find(|&&k| k >= sd + ad) {
                    return Err(Error::Config(format!("coordinate {k} outside [s; a] of length {}", sd + ad)));
                }
                Ok(indices.len())
            }
            ObservationMap::Custom(f) => Ok(f.dim()),
        }
    }

    pub fn dim(&self, game: &dyn MarkovGame, horizon: usize) -> Result<usize> {
        Ok(self.step_dim(game)? * horizon)
    }

    fn observe_step(&self, game: &dyn MarkovGame, s: &[f64], a: &StrategyProfile) -> Vec<f64> {
        match self {
            ObservationMap::Identity => s.iter().chain(a.values()).cloned().collect(),
            ObservationMap::StateOnly => s.to_vec(),
            ObservationMap::AggregateActions { .. } => {
                let players = self.players(game);
                let mut out = vec![0.0; a.block(players[0]).len()];
                for &i in &players {
                    for (o, v) in out.iter_mut().zip(a.block(i)) {
                        *o += v;
                    }
                }
                out
            }
            ObservationMap::Coordinates { indices } => {
                let sd = s.len();
                indices
                    .iter()
                    .map(|&k| if k < sd { s[k] } else { a.values()[k - sd] })
                    .collect()
            }
            ObservationMap::Custom(f) => f.observe(s, a.values()),
        }
    }

    /// `d phi / d [s; a]` at one step.
    fn step_jacobian(&self, game: &dyn MarkovGame, s: &[f64], a: &StrategyProfile) -> DMatrix<f64> {
        let sd = s.len();
        let ad = a.values().len();
        match self {
            ObservationMap::Identity => DMatrix::identity(sd + ad, sd + ad),
            ObservationMap::StateOnly => DMatrix::identity(sd, sd + ad),
            ObservationMap::AggregateActions { .. } => {
                let players = self.players(game);
                let dims = a.dims();
                let d = dims[players[0]];
                let mut j = DMatrix::zeros(d, sd + ad);
                for &i in &players {
                    let off = sd + dims[..i].iter().sum::<usize>();
                    for k in 0..d {
                        j[(k, off + k)] = 1.0;
                    }
                }
                j
            }
            ObservationMap::Coordinates { indices } => {
                let mut j = DMatrix::zeros(indices.len(), sd + ad);
                for (r, &k) in indices.iter().enumerate() {
                    j[(r, k)] = 1.0;
                }
                j
            }
            ObservationMap::Custom(f) => f.jacobian(s, a.values()),
        }
    }

    /// One observation per step; `observe` concatenates these.
    pub fn observe_steps(&self, game: &dyn MarkovGame, h: &History) -> Vec<Vec<f64>> {
        h.states
            .iter()
            .zip(&h.actions)
            .map(|(s, a)| self.observe_step(game, s, a))
            .collect()
    }

    /// `rho(h)`
    pub fn observe(&self, game: &dyn MarkovGame, h: &History) -> Vec<f64> {
        h.states
            .iter()
            .zip(&h.actions)
            .flat_map(|(s, a)| self.observe_step(game, s, a))
            .collect()
    }
}

/// Mean and mean squared norm of a sample set; enough to evaluate
/// `(1/K) sum_k ||o - o_k||^2 = ||o - mean||^2 + spread`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationStats {
    pub count: usize,
    pub mean: Vec<f64>,
    /// `(1/K) sum_k ||o_k||^2 - ||mean||^2`
    pub spread: f64,
}

impl ObservationStats {
    pub fn from_samples<'a>(dim: usize, samples: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut sum = vec![0.0; dim];
        let mut sq = 0.0;
        let mut count = 0;
        for o in samples {
            Error::check_dim(dim, o.len())?;
            for (s, v) in sum.iter_mut().zip(o) {
                *s += v;
            }
            sq += o.iter().map(|v| v * v).sum::<f64>();
            count += 1;
        }
        if count == 0 {
            return Err(Error::Config("need at least one observation".into()));
        }
        let mean: Vec<f64> = sum.into_iter().map(|s| s / count as f64).collect();
        let spread = (sq / count as f64 - mean.iter().map(|v| v * v).sum::<f64>()).max(0.0);
        Ok(ObservationStats { count, mean, spread })
    }

    /// `(1/K) sum_k ||o - o_k||^2`
    pub fn loss(&self, o: &[f64]) -> f64 {
        o.iter().zip(&self.mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + self.spread
    }
}

/// A game form, an observation map and observations of unobserved
/// equilibrium play over a fixed horizon.
#[derive(Clone, Debug)]
pub struct InverseSimulation {
    pub game: Arc<dyn MarkovGame>,
    pub map: ObservationMap,
    pub horizon: usize,
    pub samples: Vec<Vec<f64>>,
    stats: ObservationStats,
}

impl InverseSimulation {
    pub fn new(
        game: Arc<dyn MarkovGame>,
        map: ObservationMap,
        horizon: usize,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let dim = map.dim(game.as_ref(), horizon)?;
        let stats = ObservationStats::from_samples(dim, samples.iter().map(|o| o.as_slice()))?;
        Ok(InverseSimulation {
            game,
            map,
            horizon,
            samples,
            stats,
        })
    }

    /// Observes `k` rollouts of `policy` at `x` (stream `i` of `seed` for
    /// sample `i`).
    pub fn synthesize(
        game: Arc<dyn MarkovGame>,
        map: ObservationMap,
        policy: &dyn Policy,
        x: &[f64],
        horizon: usize,
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        let samples = (0..k)
            .into_par_iter()
            .map(|i| {
                let mut rng = Rng::stream(seed, i as u64);
                let h = profile_rollout(game.as_ref(), policy, x, horizon, &mut rng, false)?.history;
                Ok(map.observe(game.as_ref(), &h))
            })
            .collect::<Result<Vec<_>>>()?;
        InverseSimulation::new(game, map, horizon, samples)
    }

    pub fn stats(&self) -> &ObservationStats {
        &self.stats
    }
}

fn profile_rollout(
    game: &dyn MarkovGame,
    policy: &dyn Policy,
    x: &[f64],
    horizon: usize,
    rng: &mut Rng,
    tracked: bool,
) -> Result<Rollout> {
    let sources: Vec<PlayerSource<'_>> = (0..game.n_players())
        .map(|_| PlayerSource {
            policy,
            params: x,
            differentiate: tracked,
        })
        .collect();
    rollout(game, &sources, horizon, rng, tracked)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulacraConfig {
    pub alpha: f64,
    pub beta: f64,
    pub eta_theta: f64,
    pub eta_x: f64,
    pub eta_y: f64,
    pub iters: usize,
    pub batch: usize,
    pub theta0: Option<Vec<f64>>,
    pub x0: Option<Vec<f64>>,
    /// Defaults to `x0`.
    pub y0: Option<Vec<f64>>,
    pub seed: u64,
    /// Iterations between Moreau checkpoints.
    pub checkpoint_every: usize,
    /// Prox weight; a finite-difference smoothness probe sets it when absent.
    pub prox_lambda: Option<f64>,
    pub moreau_iters: usize,
    /// Ascent steps approximating the inner max inside the surrogate.
    pub inner_y_steps: usize,
    pub certificate_steps: usize,
    pub certificate_samples: usize,
    pub threads: Option<usize>,
}

impl Default for SimulacraConfig {
    fn default() -> Self {
        SimulacraConfig {
            alpha: 1.0,
            beta: 1.0,
            eta_theta: 1e-2,
            eta_x: 1e-2,
            eta_y: 1e-2,
            iters: 2000,
            batch: 4,
            theta0: None,
            x0: None,
            y0: None,
            seed: 0,
            checkpoint_every: 100,
            prox_lambda: None,
            moreau_iters: 50,
            inner_y_steps: 20,
            certificate_steps: 200,
            certificate_samples: 256,
            threads: None,
        }
    }
}

impl SimulacraConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("alpha must be positive and beta nonnegative".into()));
        }
        if !(self.eta_theta > 0.0 && self.eta_x > 0.0 && self.eta_y > 0.0) {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        if self.batch == 0 || self.checkpoint_every == 0 || self.certificate_samples == 0 {
            return Err(Error::Config("batch, checkpoint interval and certificate samples must be >= 1".into()));
        }
        if matches!(self.prox_lambda, Some(l) if !(l > 0.0)) {
            return Err(Error::Config("prox weight must be positive".into()));
        }
        Ok(())
    }
}

/// The two terms of the empirical learning loss, unweighted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `E_o (1/K) sum_k ||o - o_k||^2`
    pub observation: f64,
    /// `sum_i u_i(y_i, x_-i) - u_i(x)`
    pub regret: f64,
}

impl LossBreakdown {
    pub fn total(&self, alpha: f64, beta: f64) -> f64 {
        alpha * self.observation + beta * self.regret
    }
}

/// Gradients of the loss at one point from one batch.
struct LossGrads {
    loss: LossBreakdown,
    theta: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

fn deviation_sources<'a>(
    n: usize,
    player: usize,
    policy: &'a dyn Policy,
    x: &'a [f64],
    y: &'a [f64],
    track_y: bool,
) -> Vec<PlayerSource<'a>> {
    (0..n)
        .map(|j| PlayerSource {
            policy,
            params: if j == player { y } else { x },
            differentiate: (j == player) == track_y,
        })
        .collect()
}

fn theta_grad(game: &dyn MarkovGame, h: &History, player: usize, theta: &[f64]) -> Vec<f64> {
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

fn returns_grad(game: &dyn MarkovGame, r: &Rollout, players: &[usize], theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut value = 0.0;
    let mut grad = vec![0.0; r.z_dim()];
    for &i in players {
        let (v, g) = crate::markov::return_and_grad(game, r, i, theta)?;
        value += v;
        for (o, d) in grad.iter_mut().zip(g) {
            *o += d;
        }
    }
    Ok((value, grad))
}

/// Observation loss of one tracked rollout and its pathwise gradient.
fn observation_grad(sim: &InverseSimulation, r: &Rollout) -> Result<(f64, Vec<f64>)> {
    let game = sim.game.as_ref();
    let h = &r.history;
    let sd = game.state_dim();
    let step = sim.map.step_dim(game)?;
    let mut direct_s = Vec::with_capacity(h.horizon());
    let mut direct_a = Vec::with_capacity(h.horizon());
    let mut step_loss = Vec::with_capacity(h.horizon());
    for (t, (s, a)) in h.states.iter().zip(&h.actions).enumerate() {
        let o = sim.map.observe_step(game, s, a);
        let mean = &sim.stats.mean[t * step..(t + 1) * step];
        let resid = DVector::from_iterator(step, o.iter().zip(mean).map(|(a, b)| a - b));
        step_loss.push(resid.norm_squared());
        let g = sim.map.step_jacobian(game, s, a).tr_mul(&resid) * 2.0;
        direct_s.push(g.rows(0, sd).iter().cloned().collect());
        direct_a.push(g.rows(sd, g.len() - sd).iter().cloned().collect());
    }
    let mut tail = vec![0.0; h.horizon()];
    let mut acc = 0.0;
    for t in (0..h.horizon()).rev() {
        tail[t] = acc;
        acc += step_loss[t];
    }
    let grad = backprop(r, &direct_s, &direct_a, &tail)?;
    Ok((acc + sim.stats.spread, grad))
}

/// One batch estimate of the loss and its gradients. Draw `b` uses streams
/// `b (n + 1) + i` for player `i`'s deviation and `b (n + 1) + n` for the
/// observation rollout.
#[allow(clippy::too_many_arguments)]
fn loss_gradients(
    sim: &InverseSimulation,
    policy: &dyn Policy,
    theta: &[f64],
    x: &[f64],
    y: &[f64],
    alpha: f64,
    beta: f64,
    batch: usize,
    seed: u64,
) -> Result<LossGrads> {
    let game = sim.game.as_ref();
    let n = game.n_players();
    let horizon = sim.horizon;
    let jobs: Vec<(usize, usize)> = (0..batch).flat_map(|b| (0..=n).map(move |i| (b, i))).collect();
    let all: Vec<usize> = (0..n).collect();
    let parts: Vec<Result<LossGrads>> = jobs
        .par_iter()
        .map(|&(b, i)| {
            let stream = (b * (n + 1) + i) as u64;
            let mut out = LossGrads {
                loss: LossBreakdown {
                    observation: 0.0,
                    regret: 0.0,
                },
                theta: vec![0.0; theta.len()],
                x: vec![0.0; x.len()],
                y: vec![0.0; y.len()],
            };
            if i < n {
                // the same stream replays the same history under both trackings
                let ry = rollout(game, &deviation_sources(n, i, policy, x, y, true), horizon, &mut Rng::stream(seed, stream), true)?;
                let rx = rollout(game, &deviation_sources(n, i, policy, x, y, false), horizon, &mut Rng::stream(seed, stream), true)?;
                let (v, gy) = returns_grad(game, &ry, &[i], theta)?;
                let (_, gx) = returns_grad(game, &rx, &[i], theta)?;
                out.loss.regret = v;
                out.y = gy.into_iter().map(|g| beta * g).collect();
                out.x = gx.into_iter().map(|g| beta * g).collect();
                out.theta = theta_grad(game, &ry.history, i, theta).into_iter().map(|g| beta * g).collect();
            } else {
                let r = profile_rollout(game, policy, x, horizon, &mut Rng::stream(seed, stream), true)?;
                let (obs, g_obs) = observation_grad(sim, &r)?;
                let (v, g_ret) = returns_grad(game, &r, &all, theta)?;
                out.loss.observation = obs;
                out.loss.regret = -v;
                out.x = g_obs.iter().zip(&g_ret).map(|(o, g)| alpha * o - beta * g).collect();
                for j in 0..n {
                    for (o, g) in out.theta.iter_mut().zip(theta_grad(game, &r.history, j, theta)) {
                        *o -= beta * g;
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let scale = 1.0 / batch as f64;
    let mut total = LossGrads {
        loss: LossBreakdown {
            observation: 0.0,
            regret: 0.0,
        },
        theta: vec![0.0; theta.len()],
        x: vec![0.0; x.len()],
        y: vec![0.0; y.len()],
    };
    for p in parts {
        let p = p?;
        total.loss.observation += scale * p.loss.observation;
        total.loss.regret += scale * p.loss.regret;
        for (t, v) in [(&mut total.theta, &p.theta), (&mut total.x, &p.x), (&mut total.y, &p.y)] {
            for (a, b) in t.iter_mut().zip(v) {
                *a += scale * b;
            }
        }
    }
    Ok(total)
}

/// Monte-Carlo estimate of the empirical learning loss
/// `alpha E||o - o_k||^2 + beta (sum_i u_i(y_i, x_-i) - u_i(x))` over
/// `batch` rollouts of each kind.
#[allow(clippy::too_many_arguments)]
pub fn empirical_loss(
    sim: &InverseSimulation,
    policy: &dyn Policy,
    theta: &[f64],
    x: &[f64],
    y: &[f64],
    batch: usize,
    seed: u64,
) -> Result<LossBreakdown> {
    let game = sim.game.as_ref();
    let n = game.n_players();
    let per: Vec<Result<LossBreakdown>> = (0..batch)
        .into_par_iter()
        .map(|b| {
            let mut rng = Rng::stream(seed, (b * (n + 1) + n) as u64);
            let h = profile_rollout(game, policy, x, sim.horizon, &mut rng, false)?.history;
            let observation = sim.stats.loss(&sim.map.observe(game, &h));
            let eq = discounted_return(game, &h, theta);
            let mut regret = -eq.iter().sum::<f64>();
            for i in 0..n {
                let mut rng = Rng::stream(seed, (b * (n + 1) + i) as u64);
                let hi = rollout(game, &deviation_sources(n, i, policy, x, y, false), sim.horizon, &mut rng, false)?.history;
                regret += discounted_return(game, &hi, theta)[i];
            }
            Ok(LossBreakdown { observation, regret })
        })
        .collect();
    let mut out = LossBreakdown {
        observation: 0.0,
        regret: 0.0,
    };
    for p in per {
        let p = p?;
        out.observation += p.observation / batch as f64;
        out.regret += p.regret / batch as f64;
    }
    Ok(out)
}

/// `2 lambda ||z - prox(z)||` where `prox(z)` approximately minimizes
/// `phi(z') + lambda ||z - z'||^2`, found by `iters` gradient steps of size
/// `1 / (4 lambda)` from `z`. `phi` returns its value and a (sub)gradient.
pub fn moreau_stationarity(
    phi: impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    z: &[f64],
    lambda: f64,
    iters: usize,
) -> Result<f64> {
    moreau_stationarity_in(phi, |_| {}, z, lambda, iters)
}

/// [`moreau_stationarity`] over a feasible set given by its projection.
pub fn moreau_stationarity_in(
    phi: impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    project: impl Fn(&mut [f64]),
    z: &[f64],
    lambda: f64,
    iters: usize,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("prox weight must be positive, got {lambda}")));
    }
    let step = 1.0 / (4.0 * lambda);
    let mut w = z.to_vec();
    for k in 0..iters {
        let (value, g) = phi(&w)?;
        if !value.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: k,
                detail: format!("prox objective at {w:?}"),
            });
        }
        for ((wi, gi), zi) in w.iter_mut().zip(&g).zip(z) {
            *wi -= step * (gi + 2.0 * lambda * (*wi - zi));
        }
        project(&mut w);
    }
    let d: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a - b).collect();
    Ok(2.0 * lambda * norm(&d))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iter: usize,
    pub surrogate: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulacraTrace {
    pub thetas: Vec<Vec<f64>>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    /// Batch loss estimates, one per iteration.
    pub losses: Vec<LossBreakdown>,
    pub checkpoints: Vec<Checkpoint>,
    pub prox_lambda: f64,
    pub best_iter: usize,
    pub theta_best: Vec<f64>,
    pub x_best: Vec<f64>,
    /// Loss at the best iterate with `y` at the certificate's best response.
    pub final_loss: LossBreakdown,
    pub certificate: McCertificate,
    pub iters: usize,
    pub wall_ms: u64,
}

impl SimulacraTrace {
    /// Running minimum of the checkpoint surrogates.
    pub fn best_surrogates(&self) -> Vec<f64> {
        self.checkpoints
            .iter()
            .scan(f64::INFINITY, |m, c| {
                *m = m.min(c.surrogate);
                Some(*m)
            })
            .collect()
    }

    pub fn best_surrogate(&self) -> f64 {
        self.best_surrogates().last().copied().unwrap_or(f64::NAN)
    }

    /// Loss curve with columns `iter, observation, regret`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "observation", "regret"])?;
        for (t, l) in self.losses.iter().enumerate() {
            w.write_record([t.to_string(), l.observation.to_string(), l.regret.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Surrogate<'a> {
    sim: &'a InverseSimulation,
    policy: &'a dyn Policy,
    cfg: &'a SimulacraConfig,
    seed: u64,
    y_start: Vec<f64>,
}

impl Surrogate<'_> {
    fn split<'z>(&self, z: &'z [f64]) -> (&'z [f64], &'z [f64]) {
        z.split_at(self.sim.game.param_space().dim())
    }

    /// `max_y L(theta, x, y)` by ascent on common random numbers, with the
    /// Danskin gradient in `(theta, x)`.
    fn phi(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (theta, x) = self.split(z);
        let cfg = self.cfg;
        let mut y = self.y_start.clone();
        let y_space = self.policy.param_space();
        for k in 0..cfg.inner_y_steps {
            let g = loss_gradients(self.sim, self.policy, theta, x, &y, cfg.alpha, cfg.beta, cfg.batch, mix_seed(self.seed, k as u64))?;
            for (v, d) in y.iter_mut().zip(&g.y) {
                *v += cfg.eta_y * d;
            }
            y_space.project_in_place(&mut y)?;
        }
        let g = loss_gradients(self.sim, self.policy, theta, x, &y, cfg.alpha, cfg.beta, cfg.batch, mix_seed(self.seed, u64::MAX))?;
        let mut grad = g.theta;
        grad.extend(g.x);
        Ok((g.loss.total(cfg.alpha, cfg.beta), grad))
    }

    fn project(&self, z: &mut [f64]) {
        let k = self.sim.game.param_space().dim();
        let (theta, x) = z.split_at_mut(k);
        let _ = self.sim.game.param_space().project_in_place(theta);
        let _ = self.policy.param_space().project_in_place(x);
    }

    /// Twice the largest gradient change over a few probe directions.
    fn lambda_probe(&self, z: &[f64]) -> Result<f64> {
        let h = 1e-3;
        let (_, g0) = self.phi(z)?;
        let mut rng = Rng::stream(self.seed, 1);
        let mut smooth: f64 = 0.0;
        for _ in 0..3 {
            let d: Vec<f64> = (0..z.len()).map(|_| rng.normal()).collect();
            let dn = norm(&d).max(1e-12);
            let zp: Vec<f64> = z.iter().zip(&d).map(|(a, b)| a + h * b / dn).collect();
            let (_, g1) = self.phi(&zp)?;
            let diff: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
            smooth = smooth.max(norm(&diff) / h);
        }
        Ok(2.0 * smooth.max(1e-3))
    }
}

/// Three-variable stochastic GDA on the empirical learning loss: `theta` and
/// `x` descend, `y` ascends. The returned iterate minimizes the Moreau
/// stationarity surrogate over checkpoints.
pub fn simulacral_solve(sim: &InverseSimulation, policy: &dyn Policy, cfg: &SimulacraConfig) -> Result<SimulacraTrace> {
    cfg.validate()?;
    let start = Instant::now();
    let game = sim.game.as_ref();
    Error::check_dim(game.n_players(), policy.n_players())?;
    let theta_space = game.param_space();
    let x_space = policy.param_space();
    let mut theta = match &cfg.theta0 {
        Some(t) => theta_space.project(t)?,
        None => theta_space.center()?,
    };
    let mut x = match &cfg.x0 {
        Some(v) => x_space.project(v)?,
        None => x_space.center()?,
    };
    let mut y = match &cfg.y0 {
        Some(v) => x_space.project(v)?,
        None => x.clone(),
    };

    crate::markov::with_pool(cfg.threads, || -> Result<SimulacraTrace> {
        let mut thetas = vec![theta.clone()];
        let mut xs = vec![x.clone()];
        let mut ys = vec![y.clone()];
        let mut losses = Vec::with_capacity(cfg.iters);
        let mut checkpoints = Vec::new();
        let mut lambda = cfg.prox_lambda;
        let mut best: Option<(f64, usize)> = None;
        let probe_seed = mix_seed(cfg.seed, u64::MAX - 1);

        let checkpoint = |t: usize, theta: &[f64], x: &[f64], y: &[f64], lambda: &mut Option<f64>| -> Result<f64> {
            let s = Surrogate {
                sim,
                policy,
                cfg,
                seed: mix_seed(probe_seed, t as u64),
                y_start: y.to_vec(),
            };
            let mut z = theta.to_vec();
            z.extend_from_slice(x);
            let l = match *lambda {
                Some(l) => l,
                None => {
                    let l = s.lambda_probe(&z)?;
                    *lambda = Some(l);
                    l
                }
            };
            moreau_stationarity_in(|w| s.phi(w), |w| s.project(w), &z, l, cfg.moreau_iters)
        };

        for t in 0..=cfg.iters {
            if t % cfg.checkpoint_every == 0 || t == cfg.iters {
                let v = checkpoint(t, &theta, &x, &y, &mut lambda)?;
                checkpoints.push(Checkpoint { iter: t, surrogate: v });
                if best.map_or(true, |(b, _)| v < b) {
                    best = Some((v, t));
                }
            }
            if t == cfg.iters {
                break;
            }
            let g = loss_gradients(sim, policy, &theta, &x, &y, cfg.alpha, cfg.beta, cfg.batch, mix_seed(cfg.seed, t as u64))?;
            for (v, w) in [(&g.theta, "theta"), (&g.x, "x"), (&g.y, "y")] {
                if v.iter().any(|a| !a.is_finite()) {
                    return Err(Error::NonFinite {
                        iteration: t,
                        detail: format!("{w} gradient {v:?}"),
                    });
                }
            }
            losses.push(g.loss);
            for (v, d) in theta.iter_mut().zip(&g.theta) {
                *v -= cfg.eta_theta * d;
            }
            theta_space.project_in_place(&mut theta)?;
            for (v, d) in x.iter_mut().zip(&g.x) {
                *v -= cfg.eta_x * d;
            }
            x_space.project_in_place(&mut x)?;
            for (v, d) in y.iter_mut().zip(&g.y) {
                *v += cfg.eta_y * d;
            }
            x_space.project_in_place(&mut y)?;
            thetas.push(theta.clone());
            xs.push(x.clone());
            ys.push(y.clone());
        }

        let (_, best_iter) = best.expect("at least one checkpoint");
        let theta_best = thetas[best_iter].clone();
        let x_best = xs[best_iter].clone();
        let cert_cfg = SgdaConfig {
            eta_x: cfg.eta_y,
            batch: cfg.batch,
            certificate_steps: cfg.certificate_steps,
            certificate_samples: cfg.certificate_samples,
            ..SgdaConfig::default()
        };
        let (certificate, y_best) = mc_certificate(
            game,
            (policy, &x_best),
            policy,
            &theta_best,
            &ys[best_iter],
            sim.horizon,
            &cert_cfg,
            mix_seed(cfg.seed, u64::MAX),
        )?;
        let final_loss = empirical_loss(
            sim,
            policy,
            &theta_best,
            &x_best,
            &y_best,
            cfg.certificate_samples,
            mix_seed(cfg.seed, u64::MAX - 2),
        )?;
        Ok(SimulacraTrace {
            thetas,
            xs,
            ys,
            losses,
            checkpoints,
            prox_lambda: lambda.unwrap_or(f64::NAN),
            best_iter,
            theta_best,
            x_best,
            final_loss,
            certificate,
            iters: cfg.iters,
            wall_ms: start.elapsed().as_millis() as u64,
        })
    })?
}
