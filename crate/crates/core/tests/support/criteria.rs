//! Scenarios behind the acceptance report, shared with the integration tests.

use std::sync::Arc;
use std::time::Instant;

use igt_core::games::{quadratic_toy, InverseGame, StrategyProfile};
use igt_core::markov::{
    sgda_solve, FiniteMarkovGame, InverseMarkovGame, LinearPolicy, LinearTrackingGame,
    MarkovGame, SgdaConfig, TabularDirect,
};
use igt_core::planner::{exploitability, gda_solve, EstimateRule, GdaConfig};
use igt_core::simulacra::{
    simulacral_solve, InverseSimulation, ObservationMap, SimulacraConfig, SimulacraTrace,
};
use igt_core::spaces::Rng;

use super::{exploitability as enumerated_exploitability, pure_equilibrium};

pub struct GapRun {
    /// `(T, gap at the averages of the first T + 1 iterates)`
    pub gaps: Vec<(usize, f64)>,
    pub certificate: f64,
}

/// Duality gap `max_y f(theta_bar, y) - min_theta f(theta, y_bar)` of GDA on
/// the quadratic toy. For this game `f` is affine in `theta`, so the inner
/// min sits at an end of `[-1, 1]`.
pub fn quadratic_gaps(observed: &[f64], checkpoints: &[usize]) -> GapRun {
    let n = observed.len();
    let toy = Arc::new(quadratic_toy(n).unwrap());
    let inv = InverseGame::new(toy, StrategyProfile::from_flat(observed.to_vec(), &vec![1; n]).unwrap()).unwrap();
    let iters = *checkpoints.iter().max().unwrap();
    let cfg = GdaConfig {
        iters,
        estimate: EstimateRule::Average,
        ..Default::default()
    };
    let trace = gda_solve(&inv, &cfg).unwrap();
    let f = |theta: f64, y: &[f64]| -> f64 {
        y.iter()
            .zip(observed)
            .map(|(yi, xi)| -(yi - theta).powi(2) + (xi - theta).powi(2))
            .sum()
    };
    let mut gaps = Vec::new();
    let mut sum_theta = 0.0;
    let mut sum_y = vec![0.0; n];
    for t in 0..=iters {
        sum_theta += trace.thetas[t][0];
        for (s, v) in sum_y.iter_mut().zip(&trace.ys[t]) {
            *s += v;
        }
        if checkpoints.contains(&t) {
            let count = (t + 1) as f64;
            let theta_bar = sum_theta / count;
            let y_bar: Vec<f64> = sum_y.iter().map(|s| s / count).collect();
            let best_y: Vec<f64> = (0..n).map(|_| theta_bar.clamp(-2.0, 2.0)).collect();
            let upper = f(theta_bar, &best_y);
            let lower = f(-1.0, &y_bar).min(f(1.0, &y_bar));
            gaps.push((t, upper - lower));
        }
    }
    let certificate = exploitability(inv.game.as_ref(), &trace.theta_bar, &inv.observed, &cfg.exploit)
        .unwrap()
        .value;
    GapRun { gaps, certificate }
}

pub struct MarlRun {
    pub seed: u64,
    pub exploitability: f64,
    pub exploitability_at_start: f64,
    pub certificate: f64,
    pub wall_ms: u64,
}

/// Exploitability at the start below which an instance is rejected: the
/// starting parameter would already rationalize the observed play.
pub const MARL_MIN_START_GAP: f64 = 0.05;

/// A random 2-player, 2-state, 2-action game with a pure stationary
/// equilibrium at a sampled `theta*`; SGDA then recovers a `theta` under
/// which that equilibrium has low enumerated exploitability.
pub fn marl_case(seed: u64) -> MarlRun {
    let mut rng = Rng::new(seed);
    let (game, table) = loop {
        let g = FiniteMarkovGame::random(2, 2, 2, 2, 0.5, &mut rng).unwrap();
        let theta: Vec<f64> = (0..2).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let Some(t) = pure_equilibrium(&g, &theta) else {
            continue;
        };
        let center = g.param_space().center().unwrap();
        if enumerated_exploitability(&g, &t, &center) >= MARL_MIN_START_GAP {
            break (g, t);
        }
    };
    let game = Arc::new(game);
    let policy = Arc::new(TabularDirect::new(game.as_ref(), 2).unwrap());
    let x_dagger = policy.params_from_table(&table).unwrap();
    let inv = InverseMarkovGame::new(game.clone(), policy.clone(), x_dagger).unwrap();
    let cfg = SgdaConfig {
        iters: 2000,
        eta_theta: 0.01,
        eta_x: 0.05,
        seed,
        ..Default::default()
    };
    let clock = Instant::now();
    let trace = sgda_solve(&inv, policy.as_ref(), &cfg).unwrap();
    MarlRun {
        seed,
        exploitability: enumerated_exploitability(&game, &table, &trace.theta_bar),
        exploitability_at_start: enumerated_exploitability(&game, &table, &trace.thetas[0]),
        certificate: trace.certificate.value,
        wall_ms: clock.elapsed().as_millis() as u64,
    }
}

/// Two trackers, `a_i = c_i + w_i s`, observed through `[s; a]` for ten
/// steps from a fixed start; the data come from `x* = (0.5, 0.3, 0.5, 0.3)`.
pub fn tracking_simulation(k: usize, seed: u64) -> (InverseSimulation, LinearPolicy) {
    let game: Arc<dyn MarkovGame> = Arc::new(
        LinearTrackingGame::new(2, 0.5, 0.0, 0.01, 0.9)
            .unwrap()
            .with_initial_range(1.0, 1.0)
            .unwrap(),
    );
    let policy = LinearPolicy::new(game.as_ref(), 2.0).unwrap();
    let sim = InverseSimulation::synthesize(
        game,
        ObservationMap::Identity,
        &policy,
        &[0.5, 0.3, 0.5, 0.3],
        10,
        k,
        seed,
    )
    .unwrap();
    (sim, policy)
}

pub fn tracking_fit(k: usize, iters: usize, seed: u64) -> SimulacraTrace {
    let (sim, policy) = tracking_simulation(k, seed);
    let cfg = SimulacraConfig {
        iters,
        eta_theta: 0.01,
        eta_x: 0.01,
        eta_y: 0.01,
        checkpoint_every: (iters / 10).max(1),
        seed,
        ..Default::default()
    };
    simulacral_solve(&sim, &policy, &cfg).unwrap()
}
