//! Inverse multiagent planning with exact payoff oracles: cumulative regret,
//! exploitability, and projected simultaneous gradient descent-ascent on
//! `f(theta, y) = sum_i u_i(y_i, x_{-i}; theta) - u_i(x; theta)`.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{InnerMethod, InverseGame, ParametricGame, StrategyProfile};
use crate::spaces::{axpy, norm, Rng};

/// `sum_i [u_i(y_i, x_{-i}; theta) - u_i(x; theta)]`
pub fn cumulative_regret(
    game: &dyn ParametricGame,
    theta: &[f64],
    x: &StrategyProfile,
    y: &StrategyProfile,
) -> f64 {
    (0..game.n_players())
        .map(|i| {
            let dev = x.with_block(i, y.block(i));
            game.payoff(i, &dev, theta) - game.payoff(i, x, theta)
        })
        .sum()
}

/// Inner solver settings for the gradient-ascent fallback.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploitOptions {
    pub restarts: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for ExploitOptions {
    fn default() -> Self {
        ExploitOptions {
            restarts: 8,
            steps: 2000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exploitability {
    pub value: f64,
    /// Maximizing deviation found for each player.
    pub deviation: StrategyProfile,
    pub per_player: Vec<f64>,
    pub methods: Vec<InnerMethod>,
}

impl Exploitability {
    /// True when some player's inner max came from gradient ascent, so the
    /// value is only a lower bound.
    pub fn is_lower_bound(&self) -> bool {
        self.methods.contains(&InnerMethod::GradientAscent)
    }

    /// The weakest method used, for reporting.
    pub fn method(&self) -> InnerMethod {
        if self.is_lower_bound() {
            InnerMethod::GradientAscent
        } else if self.methods.contains(&InnerMethod::Grid) {
            InnerMethod::Grid
        } else {
            InnerMethod::ClosedForm
        }
    }
}

/// `max_y sum_i [u_i(y_i, x_{-i}; theta) - u_i(x; theta)]`, solved player by
/// player. Staying put is always a candidate, so every term is nonnegative.
pub fn exploitability(
    game: &dyn ParametricGame,
    theta: &[f64],
    x: &StrategyProfile,
    opts: &ExploitOptions,
) -> Result<Exploitability> {
    Error::check_dim(game.param_space().dim(), theta.len())?;
    Error::check_dim(game.n_players(), x.n_players())?;
    let mut deviation = x.clone();
    let mut per_player = Vec::with_capacity(game.n_players());
    let mut methods = Vec::with_capacity(game.n_players());
    for i in 0..game.n_players() {
        let base = game.payoff(i, x, theta);
        let (candidate, method) = match game.best_response(i, x, theta) {
            Some(found) => found,
            None => (
                gradient_ascent_response(game, i, x, theta, opts)?,
                InnerMethod::GradientAscent,
            ),
        };
        let gain = game.payoff(i, &x.with_block(i, &candidate), theta) - base;
        if gain > 0.0 {
            deviation.block_mut(i).copy_from_slice(&candidate);
            per_player.push(gain);
        } else {
            per_player.push(0.0);
        }
        methods.push(method);
    }
    Ok(Exploitability {
        value: per_player.iter().sum(),
        deviation,
        per_player,
        methods,
    })
}

/// Projected gradient ascent on player `i`'s payoff with restarts: the first
/// from `x_i`, the rest from uniform draws.
fn gradient_ascent_response(
    game: &dyn ParametricGame,
    player: usize,
    x: &StrategyProfile,
    theta: &[f64],
    opts: &ExploitOptions,
) -> Result<Vec<f64>> {
    let space = game.strategy_space(player);
    let mut rng = Rng::stream(opts.seed, player as u64);
    let scale = if space.is_bounded() {
        space.diameter()
    } else {
        1.0
    };
    let mut best = (x.block(player).to_vec(), game.payoff(player, x, theta));
    for restart in 0..opts.restarts.max(1) {
        let start = if restart == 0 || !space.is_bounded() {
            x.block(player).to_vec()
        } else {
            space.sample_uniform(&mut rng)?
        };
        let mut profile = x.with_block(player, &start);
        for k in 0..opts.steps {
            let g = game.grad_own(player, &profile, theta);
            let gn = norm(&g);
            if !(gn > 1e-14) {
                break;
            }
            let step = 0.5 * scale / ((k + 1) as f64).sqrt() / gn;
            let block = profile.block_mut(player);
            axpy(step, &g, block);
            space.project_in_place(block)?;
            let value = game.payoff(player, &profile, theta);
            if value > best.1 {
                best = (profile.block(player).to_vec(), value);
            }
        }
    }
    Ok(best.0)
}

/// Parameters of projected simultaneous GDA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdaConfig {
    pub eta_theta: f64,
    pub eta_y: f64,
    pub iters: usize,
    /// Defaults to the center of the parameter space.
    pub theta0: Option<Vec<f64>>,
    /// Defaults to the observed profile.
    pub y0: Option<Vec<f64>>,
    /// Relative distance to the true parameter that ends a benchmark run.
    pub stop_rel_tol: f64,
    pub estimate: EstimateRule,
    /// Record exploitability at the running average every this many
    /// iterations; 0 disables it.
    pub track_every: usize,
    pub exploit: ExploitOptions,
}

impl Default for GdaConfig {
    fn default() -> Self {
        GdaConfig {
            eta_theta: 0.01,
            eta_y: 0.01,
            iters: 1000,
            theta0: None,
            y0: None,
            stop_rel_tol: 0.1,
            estimate: EstimateRule::Average,
            track_every: 0,
            exploit: ExploitOptions::default(),
        }
    }
}

/// Which parameter a solve returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EstimateRule {
    /// `theta_bar`, the mean of all iterates.
    Average,
    LastIterate,
    /// Whichever of the current iterate and the running average has the
    /// lowest exploitability, checked every `every` iterations and at the
    /// end. Earlier checkpoints win ties.
    BestCertified { every: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// `theta^0 .. theta^T`
    pub thetas: Vec<Vec<f64>>,
    /// Flattened `y^0 .. y^T`.
    pub ys: Vec<Vec<f64>>,
    /// `f(theta^t, y^t)` for each recorded iterate.
    pub f_values: Vec<f64>,
    /// Exploitability at the running average, NaN where not tracked.
    pub exploitability_running: Vec<f64>,
    pub theta_bar: Vec<f64>,
    /// Returned parameter chosen by the estimate rule, or the stopping
    /// iterate after a benchmark early stop.
    pub estimate: Vec<f64>,
    /// Iteration the estimate was taken from; `None` for the average.
    pub estimate_iter: Option<usize>,
    pub certificate: Exploitability,
    pub iters: usize,
    pub stopped_early: bool,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub theta_bar: Vec<f64>,
    pub estimate: Vec<f64>,
    pub certificate: f64,
    pub certificate_method: InnerMethod,
    pub iters: usize,
    pub wall_ms: f64,
}

impl SolveTrace {
    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            theta_bar: self.theta_bar.clone(),
            estimate: self.estimate.clone(),
            certificate: self.certificate.value,
            certificate_method: self.certificate.method(),
            iters: self.iters,
            wall_ms: self.wall_ms,
        }
    }

    /// Columns `iter, f_value, theta_0.., exploitability_running`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.thetas.first().map_or(0, |t| t.len());
        let mut header = vec!["iter".to_string(), "f_value".to_string()];
        header.extend((0..dim).map(|k| format!("theta_{k}")));
        header.push("exploitability_running".into());
        w.write_record(&header)?;
        for (t, theta) in self.thetas.iter().enumerate() {
            let mut row = vec![t.to_string(), self.f_values[t].to_string()];
            row.extend(theta.iter().map(|v| v.to_string()));
            let e = self.exploitability_running[t];
            row.push(if e.is_nan() { String::new() } else { e.to_string() });
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Arithmetic mean of the iterates.
pub fn average_iterates(thetas: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = thetas
        .first()
        .ok_or_else(|| Error::Config("cannot average an empty trace".into()))?;
    // offsets from the first iterate keep a constant trace exact
    let mut sum = vec![0.0; first.len()];
    for t in thetas {
        Error::check_dim(sum.len(), t.len())?;
        for ((s, v), f) in sum.iter_mut().zip(t).zip(first) {
            *s += v - f;
        }
    }
    let n = thetas.len() as f64;
    Ok(first.iter().zip(sum).map(|(f, s)| f + s / n).collect())
}

/// `(grad_theta f, grad_y f)` at `(theta, y)` against the observed profile.
pub fn gda_gradients(
    inv: &InverseGame,
    theta: &[f64],
    y: &StrategyProfile,
) -> (Vec<f64>, Vec<f64>) {
    let game = inv.game.as_ref();
    let x = &inv.observed;
    let mut g_theta = vec![0.0; theta.len()];
    let mut g_y = Vec::with_capacity(y.values().len());
    for i in 0..game.n_players() {
        let dev = x.with_block(i, y.block(i));
        axpy(1.0, &game.grad_theta(i, &dev, theta), &mut g_theta);
        axpy(-1.0, &game.grad_theta(i, x, theta), &mut g_theta);
        g_y.extend(game.grad_own(i, &dev, theta));
    }
    (g_theta, g_y)
}

/// Runs projected simultaneous GDA and certifies the result.
pub fn gda_solve(inv: &InverseGame, cfg: &GdaConfig) -> Result<SolveTrace> {
    gda_run(inv, cfg, None)
}

/// As [`gda_solve`], stopping once the iterate is within `stop_rel_tol` of
/// `truth` in relative norm. Only the benchmark harness knows `truth`.
pub(crate) fn gda_solve_benchmark(
    inv: &InverseGame,
    cfg: &GdaConfig,
    truth: &[f64],
) -> Result<SolveTrace> {
    gda_run(inv, cfg, Some(truth))
}

pub fn relative_error(theta: &[f64], truth: &[f64]) -> Result<f64> {
    Error::check_dim(truth.len(), theta.len())?;
    let mut sq = 0.0;
    for (index, (t, s)) in theta.iter().zip(truth).enumerate() {
        if *s == 0.0 {
            return Err(Error::ZeroReference { index });
        }
        sq += ((t - s) / s).powi(2);
    }
    Ok(sq.sqrt())
}

struct Candidate {
    theta: Vec<f64>,
    iter: Option<usize>,
    certificate: Exploitability,
}

fn consider(
    best: &mut Option<Candidate>,
    inv: &InverseGame,
    cfg: &GdaConfig,
    theta: &[f64],
    iter: Option<usize>,
) -> Result<()> {
    let certificate = exploitability(inv.game.as_ref(), theta, &inv.observed, &cfg.exploit)?;
    if best
        .as_ref()
        .map_or(true, |b| certificate.value < b.certificate.value)
    {
        *best = Some(Candidate {
            theta: theta.to_vec(),
            iter,
            certificate,
        });
    }
    Ok(())
}

fn gda_run(inv: &InverseGame, cfg: &GdaConfig, truth: Option<&[f64]>) -> Result<SolveTrace> {
    let start = Instant::now();
    let game = inv.game.as_ref();
    let theta_space = game.param_space();
    let dims = game.block_dims();
    if !(cfg.eta_theta > 0.0 && cfg.eta_y > 0.0) {
        return Err(Error::Config("step sizes must be positive".into()));
    }
    let mut theta = match &cfg.theta0 {
        Some(t) => t.clone(),
        None => theta_space.center()?,
    };
    Error::check_dim(theta_space.dim(), theta.len())?;
    if !theta_space.contains(&theta, 1e-8) {
        return Err(Error::Config("theta0 lies outside the parameter space".into()));
    }
    let mut y = match &cfg.y0 {
        Some(v) => StrategyProfile::from_flat(v.clone(), &dims)?,
        None => inv.observed.clone(),
    };
    if !y.in_game(game, 1e-8) {
        return Err(Error::Config("y0 lies outside the strategy space".into()));
    }

    let mut thetas = vec![theta.clone()];
    let mut ys = vec![y.values().to_vec()];
    let mut f_values = vec![cumulative_regret(game, &theta, &inv.observed, &y)];
    let mut running = vec![f64::NAN];
    let mut sum = vec![0.0; theta.len()];
    let mut stopped_early = false;
    let mut iters = 0;

    let mut best: Option<Candidate> = None;
    if let EstimateRule::BestCertified { every } = cfg.estimate {
        if every == 0 {
            return Err(Error::Config("checkpoint interval must be positive".into()));
        }
        consider(&mut best, inv, cfg, &theta, Some(0))?;
    }
    if let Some(truth) = truth {
        stopped_early = relative_error(&theta, truth)? <= cfg.stop_rel_tol;
    }
    while iters < cfg.iters && !stopped_early {
        let (g_theta, g_y) = gda_gradients(inv, &theta, &y);
        if let Some(k) = g_theta.iter().chain(&g_y).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                iteration: iters,
                detail: format!(
                    "gradient entry {k} at theta = {theta:?}, y = {:?}",
                    y.values()
                ),
            });
        }
        axpy(-cfg.eta_theta, &g_theta, &mut theta);
        theta_space.project_in_place(&mut theta)?;
        let mut offset = 0;
        for (i, d) in dims.iter().enumerate() {
            let block = y.block_mut(i);
            axpy(cfg.eta_y, &g_y[offset..offset + d], block);
            game.strategy_space(i).project_in_place(block)?;
            offset += d;
        }
        iters += 1;

        for ((s, t), t0) in sum.iter_mut().zip(&theta).zip(&thetas[0]) {
            *s += t - t0;
        }
        let running_mean = || -> Vec<f64> {
            thetas[0]
                .iter()
                .zip(&sum)
                .map(|(t0, s)| t0 + s / (iters + 1) as f64)
                .collect()
        };
        f_values.push(cumulative_regret(game, &theta, &inv.observed, &y));
        running.push(if cfg.track_every > 0 && iters % cfg.track_every == 0 {
            exploitability(game, &running_mean(), &inv.observed, &cfg.exploit)?.value
        } else {
            f64::NAN
        });
        if let EstimateRule::BestCertified { every } = cfg.estimate {
            if iters % every == 0 || iters == cfg.iters {
                consider(&mut best, inv, cfg, &theta, Some(iters))?;
                consider(&mut best, inv, cfg, &running_mean(), None)?;
            }
        }
        thetas.push(theta.clone());
        ys.push(y.values().to_vec());
        if let Some(truth) = truth {
            stopped_early = relative_error(&theta, truth)? <= cfg.stop_rel_tol;
        }
    }

    let theta_bar = average_iterates(&thetas)?;
    let (estimate, estimate_iter, certificate) = match (stopped_early, cfg.estimate, best) {
        (true, _, _) => {
            let c = exploitability(game, &theta, &inv.observed, &cfg.exploit)?;
            (theta.clone(), Some(iters), c)
        }
        (false, EstimateRule::BestCertified { .. }, Some(b)) => (b.theta, b.iter, b.certificate),
        (false, EstimateRule::LastIterate, _) => {
            let c = exploitability(game, &theta, &inv.observed, &cfg.exploit)?;
            (theta.clone(), Some(iters), c)
        }
        _ => {
            let c = exploitability(game, &theta_bar, &inv.observed, &cfg.exploit)?;
            (theta_bar.clone(), None, c)
        }
    };
    Ok(SolveTrace {
        thetas,
        ys,
        f_values,
        exploitability_running: running,
        theta_bar,
        estimate,
        estimate_iter,
        certificate,
        iters,
        stopped_early,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{quadratic_toy, ConstantGame};
    use crate::spaces::Space;
    use crate::spaces::Rng;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn toy_inverse(x: f64) -> InverseGame {
        InverseGame::new(
            Arc::new(quadratic_toy(2).unwrap()),
            StrategyProfile::from_blocks(&[[x], [x]]),
        )
        .unwrap()
    }

    fn constant_game() -> ConstantGame {
        ConstantGame::new(
            vec![Space::simplex(3, 1.0).unwrap(), Space::cube(2, -1.0, 1.0).unwrap()],
            Space::cube(2, 0.0, 1.0).unwrap(),
            4.2,
        )
        .unwrap()
    }

    #[test]
    fn regret_examples() {
        let game = quadratic_toy(2).unwrap();
        let x = StrategyProfile::from_blocks(&[[0.0], [0.0]]);
        let y = StrategyProfile::from_blocks(&[[1.0], [1.0]]);
        assert_eq!(cumulative_regret(&game, &[1.0], &x, &y), 2.0);
        assert_eq!(cumulative_regret(&game, &[1.0], &x, &x), 0.0);
        let e = exploitability(&game, &[1.0], &x, &Default::default()).unwrap();
        assert_eq!(e.value, 2.0);
        assert_eq!(e.deviation.values(), &[1.0, 1.0]);
    }

    #[test]
    fn constant_game_has_no_regret_and_no_movement() {
        let game = constant_game();
        let x = StrategyProfile::from_blocks(&[vec![0.2, 0.3, 0.5], vec![0.0, 0.5]]);
        let y = StrategyProfile::from_blocks(&[vec![1.0, 0.0, 0.0], vec![1.0, -1.0]]);
        assert_eq!(cumulative_regret(&game, &[0.5, 0.5], &x, &y), 0.0);
        let e = exploitability(&game, &[0.5, 0.5], &x, &Default::default()).unwrap();
        assert_eq!(e.value, 0.0);
        assert!(e.is_lower_bound());
        let inv = InverseGame::new(Arc::new(game), x).unwrap();
        let cfg = GdaConfig {
            theta0: Some(vec![0.3, 0.9]),
            iters: 50,
            ..Default::default()
        };
        let trace = gda_solve(&inv, &cfg).unwrap();
        assert_eq!(trace.theta_bar, vec![0.3, 0.9]);
        assert_eq!(trace.certificate.value, 0.0);
    }

    #[test]
    fn toy_recovers_observed_action() {
        let cfg = GdaConfig {
            iters: 5000,
            eta_theta: 0.05,
            eta_y: 0.05,
            ..Default::default()
        };
        let trace = gda_solve(&toy_inverse(0.5), &cfg).unwrap();
        assert!((trace.theta_bar[0] - 0.5).abs() < 1e-2, "{:?}", trace.theta_bar);
    }

    #[test]
    fn averaging_examples() {
        assert_eq!(average_iterates(&[vec![3.0]]).unwrap(), vec![3.0]);
        assert_eq!(average_iterates(&[vec![0.0], vec![1.0]]).unwrap(), vec![0.5]);
        assert!(average_iterates(&[]).is_err());
    }

    #[test]
    fn averaging_matches_running_mean() {
        let mut rng = Rng::new(3);
        let thetas: Vec<Vec<f64>> = (0..5000).map(|_| vec![rng.uniform_in(-1.0, 1.0)]).collect();
        let mut mean = 0.0;
        for (k, t) in thetas.iter().enumerate() {
            mean += (t[0] - mean) / (k + 1) as f64;
        }
        assert!((average_iterates(&thetas).unwrap()[0] - mean).abs() <= 1e-12);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        use crate::games::{FisherGame, FisherParams, UtilityClass};
        let game = FisherGame::new(
            UtilityClass::Linear,
            vec![1.0],
            FisherParams::Budgets {
                types: vec![vec![f64::INFINITY]],
            },
            1,
        )
        .unwrap();
        let inv = InverseGame::new(
            Arc::new(game),
            StrategyProfile::from_blocks(&[[1.0], [1.0]]),
        )
        .unwrap();
        let err = gda_solve(&inv, &GdaConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { iteration: 0, .. }));
    }

    #[test]
    fn solve_is_deterministic() {
        let cfg = GdaConfig {
            iters: 300,
            track_every: 50,
            ..Default::default()
        };
        let mut a = gda_solve(&toy_inverse(0.3), &cfg).unwrap();
        let mut b = gda_solve(&toy_inverse(0.3), &cfg).unwrap();
        a.wall_ms = 0.0;
        b.wall_ms = 0.0;
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn trace_csv_has_expected_columns() {
        let cfg = GdaConfig {
            iters: 10,
            track_every: 5,
            ..Default::default()
        };
        let trace = gda_solve(&toy_inverse(0.3), &cfg).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,f_value,theta_0,exploitability_running");
        assert_eq!(lines.count(), 11);
    }

    #[test]
    fn relative_error_rejects_zero_reference() {
        assert!(matches!(
            relative_error(&[1.0, 2.0], &[1.0, 0.0]),
            Err(Error::ZeroReference { index: 1 })
        ));
    }

    #[test]
    fn fallback_finds_concave_maximum() {
        #[derive(Debug)]
        struct NoOracle(crate::games::QuadraticToy);
        impl ParametricGame for NoOracle {
            fn n_players(&self) -> usize {
                self.0.n_players()
            }
            fn strategy_space(&self, i: usize) -> &Space {
                self.0.strategy_space(i)
            }
            fn param_space(&self) -> &Space {
                self.0.param_space()
            }
            fn payoffs(&self, x: &StrategyProfile, t: &[f64]) -> Vec<f64> {
                self.0.payoffs(x, t)
            }
            fn grad_own(&self, i: usize, x: &StrategyProfile, t: &[f64]) -> Vec<f64> {
                self.0.grad_own(i, x, t)
            }
            fn grad_theta(&self, i: usize, x: &StrategyProfile, t: &[f64]) -> Vec<f64> {
                self.0.grad_theta(i, x, t)
            }
        }
        let game = NoOracle(quadratic_toy(2).unwrap());
        let x = StrategyProfile::from_blocks(&[[0.0], [0.0]]);
        let e = exploitability(&game, &[1.0], &x, &Default::default()).unwrap();
        assert!((e.value - 2.0).abs() < 1e-4);
        assert!(e.is_lower_bound());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn iterates_stay_feasible(x in -2.0f64..2.0, t0 in -1.0f64..1.0, eta in 0.001f64..0.5) {
            let inv = toy_inverse(x);
            let cfg = GdaConfig {
                iters: 100,
                eta_theta: eta,
                eta_y: eta,
                theta0: Some(vec![t0]),
                ..Default::default()
            };
            let trace = gda_solve(&inv, &cfg).unwrap();
            for (t, y) in trace.thetas.iter().zip(&trace.ys) {
                prop_assert!(inv.game.param_space().contains(t, 1e-12));
                let y = StrategyProfile::from_flat(y.clone(), &inv.game.block_dims()).unwrap();
                prop_assert!(y.in_game(inv.game.as_ref(), 1e-12));
            }
            prop_assert!(trace.certificate.value >= 0.0);
        }

        #[test]
        fn exploitability_nonnegative(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, t in -1.0f64..1.0) {
            let game = quadratic_toy(2).unwrap();
            let x = StrategyProfile::from_blocks(&[[x0], [x1]]);
            let e = exploitability(&game, &[t], &x, &Default::default()).unwrap();
            let exact = (x0 - t).powi(2) + (x1 - t).powi(2);
            prop_assert!((e.value - exact).abs() <= 1e-12);
        }
    }
}
