//! Oracles shared by the integration tests: exact policy evaluation and value
//! iteration on finite Markov games, plus finite-difference helpers.
#![allow(dead_code)]

pub mod checks;
pub mod criteria;

use igt_core::markov::{FiniteMarkovGame, MarkovGame};
use nalgebra::{DMatrix, DVector};

/// Mixed stationary profile: `table[i][s]` is player `i`'s distribution in `s`.
pub type Table = Vec<Vec<Vec<f64>>>;

/// Probability of each joint action in state `s`.
fn joint_probs(game: &FiniteMarkovGame, table: &Table, s: usize) -> Vec<f64> {
    (0..game.n_joint())
        .map(|j| {
            (0..game.n_players())
                .map(|i| table[i][s][game.pure_action(j, i)])
                .product()
        })
        .collect()
}

/// `V_i^pi(s)` for every player by solving `(I - gamma P) V = r`.
pub fn evaluate(game: &FiniteMarkovGame, table: &Table, theta: &[f64]) -> Vec<Vec<f64>> {
    let ns = game.n_states();
    let gamma = game.discount();
    let mut p = DMatrix::zeros(ns, ns);
    let mut r = vec![DVector::zeros(ns); game.n_players()];
    for s in 0..ns {
        for (j, q) in joint_probs(game, table, s).into_iter().enumerate() {
            for (s2, t) in game.transition_row(s, j).iter().enumerate() {
                p[(s, s2)] += q * t;
            }
            for (i, ri) in r.iter_mut().enumerate() {
                ri[s] += q * game.pure_reward(i, s, j, theta);
            }
        }
    }
    let a = DMatrix::identity(ns, ns) - p * gamma;
    let lu = a.lu();
    r.into_iter()
        .map(|ri| lu.solve(&ri).unwrap().iter().cloned().collect())
        .collect()
}

/// Optimal values of player `i` against the others' fixed mixed strategies,
/// by value iteration to `1e-13`.
pub fn best_response_values(game: &FiniteMarkovGame, table: &Table, i: usize, theta: &[f64]) -> Vec<f64> {
    let ns = game.n_states();
    let gamma = game.discount();
    let mut v = vec![0.0; ns];
    loop {
        let mut next = vec![f64::NEG_INFINITY; ns];
        for s in 0..ns {
            for own in 0..game.n_actions(i) {
                let mut q = 0.0;
                for j in 0..game.n_joint() {
                    if game.pure_action(j, i) != own {
                        continue;
                    }
                    let w: f64 = (0..game.n_players())
                        .filter(|&l| l != i)
                        .map(|l| table[l][s][game.pure_action(j, l)])
                        .product();
                    let cont: f64 = game.transition_row(s, j).iter().zip(&v).map(|(p, vv)| p * vv).sum();
                    q += w * (game.pure_reward(i, s, j, theta) + gamma * cont);
                }
                next[s] = next[s].max(q);
            }
        }
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-13 {
            return v;
        }
    }
}

/// `sum_i E_mu[V_i^BR - V_i^pi]`
pub fn exploitability(game: &FiniteMarkovGame, table: &Table, theta: &[f64]) -> f64 {
    let mu = game.initial_distribution();
    let v = evaluate(game, table, theta);
    (0..game.n_players())
        .map(|i| {
            let br = best_response_values(game, table, i, theta);
            mu.iter().zip(br.iter().zip(&v[i])).map(|(m, (b, p))| m * (b - p)).sum::<f64>()
        })
        .sum()
}

/// Every pure stationary profile of a game with `n_players` players.
pub fn pure_tables(game: &FiniteMarkovGame) -> Vec<Table> {
    let ns = game.n_states();
    let per_player: Vec<usize> = (0..game.n_players()).map(|i| game.n_actions(i).pow(ns as u32)).collect();
    let total: usize = per_player.iter().product();
    (0..total)
        .map(|mut code| {
            (0..game.n_players())
                .map(|i| {
                    let mut c = code % per_player[i];
                    code /= per_player[i];
                    (0..ns)
                        .map(|_| {
                            let k = game.n_actions(i);
                            let a = c % k;
                            c /= k;
                            (0..k).map(|b| if b == a { 1.0 } else { 0.0 }).collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// First pure stationary Nash equilibrium at `theta`, if any.
pub fn pure_equilibrium(game: &FiniteMarkovGame, theta: &[f64]) -> Option<Table> {
    pure_tables(game).into_iter().find(|t| exploitability(game, t, theta) <= 1e-9)
}

/// `E[sum_t gamma^t r_i]` under a mixed profile, exact (infinite horizon).
pub fn expected_return(game: &FiniteMarkovGame, table: &Table, theta: &[f64]) -> Vec<f64> {
    let mu = game.initial_distribution();
    evaluate(game, table, theta)
        .into_iter()
        .map(|v| mu.iter().zip(&v).map(|(m, x)| m * x).sum())
        .collect()
}

pub fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8)
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

/// `sum_{t < horizon} gamma^t E[r_i(s_t, a_t)]` by propagating the state
/// distribution from `mu`.
pub fn truncated_return(game: &FiniteMarkovGame, table: &Table, theta: &[f64], horizon: usize) -> Vec<f64> {
    let ns = game.n_states();
    let mut d = game.initial_distribution().to_vec();
    let mut out = vec![0.0; game.n_players()];
    let mut w = 1.0;
    for _ in 0..horizon {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if d[s] == 0.0 {
                continue;
            }
            for (j, q) in joint_probs(game, table, s).into_iter().enumerate() {
                for (i, o) in out.iter_mut().enumerate() {
                    *o += w * d[s] * q * game.pure_reward(i, s, j, theta);
                }
                for (s2, t) in game.transition_row(s, j).iter().enumerate() {
                    next[s2] += d[s] * q * t;
                }
            }
        }
        d = next;
        w *= game.discount();
    }
    out
}

/// Player `i`'s table under `policy` at `x` for a finite game.
pub fn policy_table(policy: &dyn igt_core::markov::Policy, x: &[f64], n_states: usize) -> Table {
    (0..policy.n_players())
        .map(|i| (0..n_states).map(|s| policy.act(i, x, &[s as f64])).collect())
        .collect()
}

/// Per-coordinate check that a sample mean sits within `k` standard errors
/// (plus `slack`) of the exact value.
pub fn within_se(samples: &[Vec<f64>], exact: &[f64], k: f64, slack: f64) -> Result<(), String> {
    for (c, e) in exact.iter().enumerate() {
        let column: Vec<f64> = samples.iter().map(|v| v[c]).collect();
        let (m, se) = mean_se(&column);
        if (m - e).abs() > k * se + slack {
            return Err(format!("coordinate {c}: mean {m} exact {e} se {se}"));
        }
    }
    Ok(())
}

/// Mean `|L_K - L_inf|` of the observation term at a fixed model policy,
/// over `replicates` data sets of each size in `sizes`. The data come from
/// `x_data`; `L_inf` uses `pool` samples.
pub fn generalization_gaps(
    sizes: &[usize],
    replicates: usize,
    pool: usize,
    seed: u64,
) -> Vec<f64> {
    use igt_core::markov::{LinearPolicy, LinearTrackingGame};
    use igt_core::simulacra::{empirical_loss, InverseSimulation, ObservationMap};
    use std::sync::Arc;

    let game: Arc<dyn MarkovGame> = Arc::new(
        LinearTrackingGame::new(2, 0.5, 0.0, 0.3, 0.9)
            .unwrap()
            .with_initial_range(0.5, 1.5)
            .unwrap(),
    );
    let policy = LinearPolicy::new(game.as_ref(), 2.0).unwrap();
    let x_data = vec![0.5, 0.3, 0.5, 0.3];
    let x_model = vec![0.2, 0.1, 0.6, 0.4];
    let theta = vec![0.3, 0.5];
    let horizon = 5;
    let model_loss = |sim: &InverseSimulation| {
        empirical_loss(sim, &policy, &theta, &x_model, &x_model, 256, seed ^ 0xabc)
            .unwrap()
            .observation
    };
    let population = InverseSimulation::synthesize(
        game.clone(),
        ObservationMap::Identity,
        &policy,
        &x_data,
        horizon,
        pool,
        seed,
    )
    .unwrap();
    let target = model_loss(&population);
    sizes
        .iter()
        .map(|&k| {
            (0..replicates)
                .map(|r| {
                    let s = igt_core::spaces::mix_seed(seed, (k * 1000 + r) as u64);
                    let sim = InverseSimulation::synthesize(
                        game.clone(),
                        ObservationMap::Identity,
                        &policy,
                        &x_data,
                        horizon,
                        k,
                        s,
                    )
                    .unwrap();
                    (model_loss(&sim) - target).abs()
                })
                .sum::<f64>()
                / replicates as f64
        })
        .collect()
}

/// Least-squares slope of `log y` on `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}
