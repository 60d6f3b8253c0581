use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spaces::{mix_seed, Rng};

use super::estimators::{deviation_sample, discounted_theta_grad, rollout, PlayerSource};
use super::{discounted_return, horizon_for, History, MarkovGame, Policy};

/// A Markov game with unknown parameters and an observed policy profile.
#[derive(Clone, Debug)]
pub struct InverseMarkovGame {
    pub game: Arc<dyn MarkovGame>,
    pub observed_policy: Arc<dyn Policy>,
    pub observed_params: Vec<f64>,
}

impl InverseMarkovGame {
    pub fn new(
        game: Arc<dyn MarkovGame>,
        observed_policy: Arc<dyn Policy>,
        observed_params: Vec<f64>,
    ) -> Result<Self> {
        Error::check_dim(game.n_players(), observed_policy.n_players())?;
        if !observed_policy.param_space().contains(&observed_params, 1e-9) {
            return Err(Error::Config("observed policy parameters lie outside their space".into()));
        }
        Ok(InverseMarkovGame {
            game,
            observed_policy,
            observed_params,
        })
    }

    pub fn observed(&self) -> (&dyn Policy, &[f64]) {
        (self.observed_policy.as_ref(), &self.observed_params)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdaConfig {
    pub eta_theta: f64,
    pub eta_x: f64,
    pub iters: usize,
    /// Deviation rollouts per player per iteration.
    pub batch: usize,
    /// Defaults to the truncation horizon for `tail_eps`.
    pub horizon: Option<usize>,
    pub tail_eps: f64,
    pub theta0: Option<Vec<f64>>,
    /// Defaults to the center of the policy parameter space.
    pub x0: Option<Vec<f64>>,
    pub seed: u64,
    /// Extra ascent steps on `x` at `theta_bar` before certifying.
    pub certificate_steps: usize,
    /// Rollouts per player in the Monte-Carlo certificate.
    pub certificate_samples: usize,
    pub threads: Option<usize>,
}

impl Default for SgdaConfig {
    fn default() -> Self {
        SgdaConfig {
            eta_theta: 1e-3,
            eta_x: 1e-2,
            iters: 1000,
            batch: 4,
            horizon: None,
            tail_eps: 1e-6,
            theta0: None,
            x0: None,
            seed: 0,
            certificate_steps: 200,
            certificate_samples: 256,
            threads: None,
        }
    }
}

impl SgdaConfig {
    /// Step sizes scaled as `eta_x ~ eps^4`, `eta_theta ~ eps^8` with unit
    /// constants and `iters ~ eps^-10`, capped at `max_iters`.
    pub fn theory(eps: f64, max_iters: usize) -> Self {
        let iters = eps.powi(-10).min(max_iters as f64).max(1.0) as usize;
        SgdaConfig {
            eta_x: eps.powi(4),
            eta_theta: eps.powi(8),
            iters,
            ..SgdaConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_theta > 0.0 && self.eta_x > 0.0) {
            return Err(Error::Config("step sizes must be positive".into()));
        }
        if self.batch == 0 || self.horizon == Some(0) || self.certificate_samples == 0 {
            return Err(Error::Config("batch, horizon and certificate samples must be >= 1".into()));
        }
        if !(self.tail_eps > 0.0) {
            return Err(Error::Config("tail_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn horizon_for(&self, game: &dyn MarkovGame) -> usize {
        self.horizon
            .unwrap_or_else(|| horizon_for(game.discount(), game.reward_bound(), self.tail_eps))
    }
}

/// Monte-Carlo estimate of `sum_i max(0, u_i(pi_i^x, pi_-i^obs) - u_i(pi^obs))`.
/// It is a lower bound on exploitability up to sampling noise, since `x` is
/// only an approximate best response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McCertificate {
    pub value: f64,
    pub std_err: f64,
    pub per_player: Vec<f64>,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarlTrace {
    pub thetas: Vec<Vec<f64>>,
    /// Batch estimate of the objective at each iteration.
    pub f_estimates: Vec<f64>,
    pub theta_bar: Vec<f64>,
    pub x_final: Vec<f64>,
    pub certificate: McCertificate,
    pub horizon: usize,
    pub iters: usize,
    pub wall_ms: u64,
}

impl MarlTrace {
    /// Columns `iter, f_estimate, theta_0..`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.theta_bar.len();
        let mut header = vec!["iter".to_string(), "f_estimate".to_string()];
        header.extend((0..k).map(|j| format!("theta_{j}")));
        w.write_record(&header)?;
        for (t, theta) in self.thetas.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.push(self.f_estimates.get(t).map_or(String::new(), |f| f.to_string()));
            row.extend(theta.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct BatchGrads {
    f: f64,
    theta: Vec<f64>,
    x: Vec<f64>,
}

/// Runs `body` on a dedicated pool when a thread count is given.
pub(crate) fn with_pool<T: Send>(threads: Option<usize>, body: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(body))
        }
        None => Ok(body()),
    }
}

/// Averages over `batch` draws the gradient of
/// `f(theta, x) = sum_i [u_i(pi_i^x, pi_-i^obs) - u_i(pi^obs)]`.
/// Draw `b` of player `i` uses stream `b (n + 1) + i`; the equilibrium
/// rollout uses `b (n + 1) + n`.
#[allow(clippy::too_many_arguments)]
fn batch_gradients(
    game: &dyn MarkovGame,
    observed: (&dyn Policy, &[f64]),
    policy: &dyn Policy,
    theta: &[f64],
    x: &[f64],
    horizon: usize,
    batch: usize,
    seed: u64,
    want_theta: bool,
) -> Result<BatchGrads> {
    let n = game.n_players();
    let jobs: Vec<(usize, usize)> = (0..batch).flat_map(|b| (0..=n).map(move |i| (b, i))).collect();
    let results: Vec<Result<(f64, Vec<f64>, Vec<f64>)>> = jobs
        .par_iter()
        .map(|&(b, i)| {
            let mut rng = Rng::stream(seed, (b * (n + 1) + i) as u64);
            if i < n {
                let (value, gx, h) =
                    deviation_sample(game, policy, x, observed, i, theta, horizon, &mut rng)?;
                let gt = if want_theta {
                    discounted_theta_grad(game, &h, i, theta)
                } else {
                    Vec::new()
                };
                Ok((value, gx, gt))
            } else {
                let h = observed_history(game, observed, horizon, &mut rng)?;
                let values = discounted_return(game, &h, theta);
                let mut gt = vec![0.0; theta.len()];
                if want_theta {
                    for j in 0..n {
                        for (g, v) in gt.iter_mut().zip(discounted_theta_grad(game, &h, j, theta)) {
                            *g += v;
                        }
                    }
                }
                Ok((values.iter().sum(), Vec::new(), gt))
            }
        })
        .collect();
    let mut out = BatchGrads {
        f: 0.0,
        theta: vec![0.0; theta.len()],
        x: vec![0.0; x.len()],
    };
    let scale = 1.0 / batch as f64;
    for ((_, i), r) in jobs.iter().zip(results) {
        let (value, gx, gt) = r?;
        let sign = if *i < n { 1.0 } else { -1.0 };
        out.f += sign * scale * value;
        for (o, v) in out.x.iter_mut().zip(&gx) {
            *o += scale * v;
        }
        for (o, v) in out.theta.iter_mut().zip(&gt) {
            *o += sign * scale * v;
        }
    }
    Ok(out)
}

fn observed_history(
    game: &dyn MarkovGame,
    observed: (&dyn Policy, &[f64]),
    horizon: usize,
    rng: &mut Rng,
) -> Result<History> {
    let sources: Vec<PlayerSource<'_>> = (0..game.n_players())
        .map(|_| PlayerSource::fixed(observed.0, observed.1))
        .collect();
    Ok(rollout(game, &sources, horizon, rng, false)?.history)
}

fn check_finite(v: &[f64], iteration: usize, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            iteration,
            detail: format!("{what} = {v:?}"),
        })
    }
}

/// Stochastic projected GDA: `theta` descends and `x` ascends the batch
/// gradient of the deviation-payoff gap; returns the mean of all `theta`
/// iterates and a Monte-Carlo certificate at it.
pub fn sgda_solve(inv: &InverseMarkovGame, policy: &dyn Policy, cfg: &SgdaConfig) -> Result<MarlTrace> {
    cfg.validate()?;
    let start = Instant::now();
    let game = inv.game.as_ref();
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
    let horizon = cfg.horizon_for(game);
    let first = theta.clone();
    let mut offset_sum = vec![0.0; theta.len()];
    let mut thetas = Vec::with_capacity(cfg.iters + 1);
    let mut f_estimates = Vec::with_capacity(cfg.iters);
    thetas.push(theta.clone());

    with_pool(cfg.threads, || -> Result<()> {
        for t in 0..cfg.iters {
            let g = batch_gradients(
                game,
                inv.observed(),
                policy,
                &theta,
                &x,
                horizon,
                cfg.batch,
                mix_seed(cfg.seed, t as u64),
                true,
            )?;
            check_finite(&g.theta, t, "theta gradient")?;
            check_finite(&g.x, t, "x gradient")?;
            f_estimates.push(g.f);
            for (v, d) in theta.iter_mut().zip(&g.theta) {
                *v -= cfg.eta_theta * d;
            }
            theta_space.project_in_place(&mut theta)?;
            for (v, d) in x.iter_mut().zip(&g.x) {
                *v += cfg.eta_x * d;
            }
            x_space.project_in_place(&mut x)?;
            for ((s, v), f) in offset_sum.iter_mut().zip(&theta).zip(&first) {
                *s += v - f;
            }
            thetas.push(theta.clone());
        }
        Ok(())
    })??;

    let count = thetas.len() as f64;
    let theta_bar: Vec<f64> = first.iter().zip(&offset_sum).map(|(f, s)| f + s / count).collect();
    let cert_seed = mix_seed(cfg.seed, u64::MAX);
    let (certificate, x_final) = with_pool(cfg.threads, || {
        mc_certificate(game, inv.observed(), policy, &theta_bar, &x, horizon, cfg, cert_seed)
    })??;
    Ok(MarlTrace {
        thetas,
        f_estimates,
        theta_bar,
        x_final,
        certificate,
        horizon,
        iters: cfg.iters,
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Improves `x` by `cfg.certificate_steps` ascent steps at fixed `theta`,
/// then estimates each player's deviation gain from
/// `cfg.certificate_samples` paired rollouts. Returns the certificate and the
/// improved `x`.
#[allow(clippy::too_many_arguments)]
pub fn mc_certificate(
    game: &dyn MarkovGame,
    observed: (&dyn Policy, &[f64]),
    policy: &dyn Policy,
    theta: &[f64],
    x0: &[f64],
    horizon: usize,
    cfg: &SgdaConfig,
    seed: u64,
) -> Result<(McCertificate, Vec<f64>)> {
    let x_space = policy.param_space();
    let mut x = x_space.project(x0)?;
    for k in 0..cfg.certificate_steps {
        let g = batch_gradients(game, observed, policy, theta, &x, horizon, cfg.batch, mix_seed(seed, k as u64), false)?;
        check_finite(&g.x, k, "certificate x gradient")?;
        for (v, d) in x.iter_mut().zip(&g.x) {
            *v += cfg.eta_x * d;
        }
        x_space.project_in_place(&mut x)?;
    }
    let n = game.n_players();
    let m = cfg.certificate_samples;
    let eval_seed = mix_seed(seed, u64::MAX);
    let draws: Vec<Result<Vec<f64>>> = (0..m)
        .into_par_iter()
        .map(|b| {
            let mut gains = Vec::with_capacity(n);
            let mut rng = Rng::stream(eval_seed, (b * (n + 1) + n) as u64);
            let eq = discounted_return(game, &observed_history(game, observed, horizon, &mut rng)?, theta);
            for i in 0..n {
                let mut rng = Rng::stream(eval_seed, (b * (n + 1) + i) as u64);
                let sources: Vec<PlayerSource<'_>> = (0..n)
                    .map(|j| {
                        if j == i {
                            PlayerSource::fixed(policy, &x)
                        } else {
                            PlayerSource::fixed(observed.0, observed.1)
                        }
                    })
                    .collect();
                let h = rollout(game, &sources, horizon, &mut rng, false)?.history;
                gains.push(discounted_return(game, &h, theta)[i] - eq[i]);
            }
            Ok(gains)
        })
        .collect();
    let draws: Vec<Vec<f64>> = draws.into_iter().collect::<Result<_>>()?;
    let mut per_player = vec![0.0; n];
    for d in &draws {
        for (p, v) in per_player.iter_mut().zip(d) {
            *p += v / m as f64;
        }
    }
    let totals: Vec<f64> = draws.iter().map(|d| d.iter().sum()).collect();
    let mean = totals.iter().sum::<f64>() / m as f64;
    let var = if m > 1 {
        totals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64
    } else {
        0.0
    };
    Ok((
        McCertificate {
            value: per_player.iter().map(|v| v.max(0.0)).sum(),
            std_err: (var / m as f64).sqrt(),
            per_player,
            samples: m,
        },
        x,
    ))
}
