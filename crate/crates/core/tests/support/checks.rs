//! Gradient and estimator checks shared by the integration tests and the
//! acceptance report.

use igt_core::games::{
    gradient_discrepancy, interior_point, sample_instance, Family, ParamMode, StrategyProfile,
};
use igt_core::markov::{
    grad_estimator_theta, grad_estimator_x, simulate, ConstantPolicy, ConstantRewardGame,
    FiniteMarkovGame, LinearTrackingGame, MarkovGame, PlayerSource, Policy, SingleStateQuadratic,
    StochasticFisherGame, TabularDirect, TabularSoftmax, TransitionGrad,
};
use igt_core::spaces::Rng;

use super::{policy_table, truncated_return, within_se, Table};

pub const H: f64 = 1e-5;
pub const TOL: f64 = 1e-4;
const POINTS: usize = 100;

/// Mixed absolute/relative error used for the static games.
fn mixed(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn static_points(family: Family, mode: ParamMode, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < POINTS {
        let inst = sample_instance(family, &mut rng).unwrap();
        let (game, _) = inst.game(mode).unwrap();
        let theta = interior_point(game.param_space(), &mut rng, 0.9).unwrap();
        let blocks: Vec<Vec<f64>> = (0..game.n_players())
            .map(|i| interior_point(game.strategy_space(i), &mut rng, 0.9).unwrap())
            .collect();
        if family == Family::Bertrand && (blocks[0][0] - blocks[1][0]).abs() < 1e-3 {
            // payoffs jump where prices tie
            continue;
        }
        if family == Family::FisherLeontief {
            // skip kinks where two goods bind at once
            let binding = leontief_near_kink(&inst, &blocks);
            if binding {
                continue;
            }
        }
        let x = StrategyProfile::from_blocks(&blocks);
        worst = worst.max(gradient_discrepancy(game.as_ref(), &x, &theta, H));
        done += 1;
    }
    worst
}

fn leontief_near_kink(inst: &igt_core::games::GameInstance, blocks: &[Vec<f64>]) -> bool {
    let igt_core::games::InstanceConstants::Fisher { types, .. } = &inst.constants else {
        return false;
    };
    types.iter().zip(blocks).any(|(t, x)| {
        let mut ratios: Vec<f64> = x.iter().zip(t).map(|(xj, tj)| xj / tj).collect();
        ratios.sort_by(f64::total_cmp);
        ratios.len() > 1 && (ratios[1] - ratios[0]).abs() < 1e-3
    })
}

pub fn perturb(a: &StrategyProfile, k: usize, h: f64) -> StrategyProfile {
    let mut v = a.values().to_vec();
    v[k] += h;
    StrategyProfile::from_flat(v, &a.dims()).unwrap()
}

/// Largest error over the reward gradients and, when the transition is
/// differentiable, its Jacobians or score.
fn markov_discrepancy(
    game: &dyn MarkovGame,
    s: &[f64],
    a: &StrategyProfile,
    theta: &[f64],
    finite: Option<&FiniteMarkovGame>,
    step_seed: u64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut note = |g: f64, fd: f64| worst = worst.max(mixed(g, fd));
    let n = game.n_players();
    for i in 0..n {
        let g = game.reward_grad_action(i, s, a, theta);
        assert_eq!(g.len(), a.values().len());
        for (k, gk) in g.iter().enumerate() {
            let fd = (game.rewards(s, &perturb(a, k, H), theta)[i]
                - game.rewards(s, &perturb(a, k, -H), theta)[i])
                / (2.0 * H);
            note(*gk, fd);
        }
        if finite.is_none() {
            let g = game.reward_grad_state(i, s, a, theta);
            for (k, gk) in g.iter().enumerate() {
                let mut sp = s.to_vec();
                sp[k] += H;
                let mut sm = s.to_vec();
                sm[k] -= H;
                let fd = (game.rewards(&sp, a, theta)[i] - game.rewards(&sm, a, theta)[i]) / (2.0 * H);
                note(*gk, fd);
            }
        }
        let g = game.reward_grad_theta(i, s, a, theta);
        for (k, gk) in g.iter().enumerate() {
            let mut tp = theta.to_vec();
            tp[k] += H;
            let mut tm = theta.to_vec();
            tm[k] -= H;
            let fd = (game.rewards(s, a, &tp)[i] - game.rewards(s, a, &tm)[i]) / (2.0 * H);
            note(*gk, fd);
        }
    }
    let next = |s: &[f64], a: &StrategyProfile| game.step(s, a, &mut Rng::new(step_seed)).unwrap();
    let (s_next, grad) = next(s, a);
    match grad {
        TransitionGrad::Reparam { state, action } => {
            for k in 0..a.values().len() {
                let (p, _) = next(s, &perturb(a, k, H));
                let (m, _) = next(s, &perturb(a, k, -H));
                for r in 0..s_next.len() {
                    note(action[(r, k)], (p[r] - m[r]) / (2.0 * H));
                }
            }
            for k in 0..s.len() {
                let mut sp = s.to_vec();
                sp[k] += H;
                let mut sm = s.to_vec();
                sm[k] -= H;
                let (p, _) = next(&sp, a);
                let (m, _) = next(&sm, a);
                for r in 0..s_next.len() {
                    note(state[(r, k)], (p[r] - m[r]) / (2.0 * H));
                }
            }
        }
        TransitionGrad::Score { action, .. } => {
            let fg = finite.expect("score transitions come from finite games");
            let target = s_next[0] as usize;
            let log_p = |a: &StrategyProfile| transition_prob(fg, s[0] as usize, a, target).ln();
            for (k, gk) in action.iter().enumerate() {
                let fd = (log_p(&perturb(a, k, H)) - log_p(&perturb(a, k, -H))) / (2.0 * H);
                note(*gk, fd);
            }
        }
        TransitionGrad::Exogenous | TransitionGrad::Opaque => {}
    }
    worst
}

/// `P(target | s, a)` for a mixed profile, from the pure transition table.
fn transition_prob(game: &FiniteMarkovGame, s: usize, a: &StrategyProfile, target: usize) -> f64 {
    (0..game.n_joint())
        .map(|j| {
            let w: f64 = (0..game.n_players())
                .map(|i| a.block(i)[game.pure_action(j, i)])
                .product();
            w * game.transition_row(s, j)[target]
        })
        .sum()
}

pub fn markov_points(game: &dyn MarkovGame, finite: Option<&FiniteMarkovGame>, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for k in 0..POINTS {
        let s = game.initial_state(&mut rng);
        let blocks: Vec<Vec<f64>> = (0..game.n_players())
            .map(|i| interior_point(game.action_space(i), &mut rng, 0.9).unwrap())
            .collect();
        let a = StrategyProfile::from_blocks(&blocks);
        let theta = if game.param_space().dim() == 0 {
            Vec::new()
        } else {
            interior_point(game.param_space(), &mut rng, 0.9).unwrap()
        };
        let seed = seed * 1000 + k as u64;
        worst = worst.max(markov_discrepancy(game, &s, &a, &theta, finite, seed));
    }
    worst
}


/// Worst discrepancy for every built-in game, labelled.
pub fn gradient_report() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (k, family) in [Family::FisherLinear, Family::FisherCobbDouglas, Family::FisherLeontief]
        .into_iter()
        .enumerate()
    {
        for (j, mode) in [ParamMode::BudgetsOnly, ParamMode::TypesAndBudgets].into_iter().enumerate() {
            out.push((format!("{family:?}/{mode:?}"), static_points(family, mode, 10 + 10 * j as u64 + k as u64)));
        }
    }
    for (family, mode, seed) in [
        (Family::Cournot, ParamMode::MarginalCost, 30),
        (Family::Bertrand, ParamMode::MarginalCost, 31),
        (Family::QuadraticToy, ParamMode::Full, 40),
        (Family::RandomMatrix, ParamMode::Full, 41),
    ] {
        out.push((format!("{family:?}"), static_points(family, mode, seed)));
    }
    let mut rng = Rng::new(50);
    for (players, states, actions, params) in [(2, 2, 2, 2), (3, 3, 2, 1), (2, 4, 3, 3)] {
        let game = FiniteMarkovGame::random(players, states, actions, params, 0.8, &mut rng).unwrap();
        out.push((
            format!("finite {players}x{states}x{actions}"),
            markov_points(&game, Some(&game), 51),
        ));
    }
    let games: Vec<(&str, Box<dyn MarkovGame>)> = vec![
        ("single_state", Box::new(SingleStateQuadratic::new(3, 0.9).unwrap())),
        ("constant_reward", Box::new(ConstantRewardGame::new(2, 0.9, 2.0).unwrap())),
        ("linear_tracking", Box::new(LinearTrackingGame::new(2, 0.6, 0.3, 0.1, 0.9).unwrap())),
    ];
    for (name, game) in games {
        out.push((name.to_string(), markov_points(game.as_ref(), None, 60)));
    }
    let mut rng = Rng::new(70);
    for (n, m) in [(1, 1), (2, 2), (3, 2)] {
        let game = StochasticFisherGame::sample(n, m, vec![1.0; m], 0.9, &mut rng).unwrap();
        out.push((format!("stochastic_fisher {n}x{m}"), markov_points(&game, None, 71)));
    }
    out
}

pub const DRAWS: usize = 10_000;
pub const HORIZON: usize = 8;

/// Replaces player `i`'s rows of `base` with those of `dev`.
fn splice(base: &Table, dev: &Table, i: usize) -> Table {
    let mut t = base.clone();
    t[i] = dev[i].clone();
    t
}

/// `sum_i u_i^H(pi_i^x, pi_-i^obs)` by enumeration.
fn deviation_objective(
    game: &FiniteMarkovGame,
    policy: &dyn Policy,
    x: &[f64],
    observed: &Table,
    theta: &[f64],
) -> f64 {
    let dev = policy_table(policy, x, game.n_states());
    (0..game.n_players())
        .map(|i| truncated_return(game, &splice(observed, &dev, i), theta, HORIZON)[i])
        .sum()
}

pub fn central_diff(f: impl Fn(&[f64]) -> f64, z: &[f64], h: f64) -> Vec<f64> {
    (0..z.len())
        .map(|k| {
            let mut p = z.to_vec();
            p[k] += h;
            let mut m = z.to_vec();
            m[k] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

pub fn finite_case(seed: u64) -> (FiniteMarkovGame, Vec<f64>) {
    let mut rng = Rng::new(seed);
    let game = FiniteMarkovGame::random(2, 2, 2, 2, 0.8, &mut rng).unwrap();
    let theta = interior_point(game.param_space(), &mut rng, 0.8).unwrap();
    (game, theta)
}

pub fn x_estimator_check(game: &FiniteMarkovGame, policy: &dyn Policy, theta: &[f64], seed: u64) -> Result<(), String> {
    let mut rng = Rng::new(seed);
    let x = interior_point(policy.param_space(), &mut rng, 0.8).unwrap();
    let x_obs = interior_point(policy.param_space(), &mut rng, 0.8).unwrap();
    let observed = policy_table(policy, &x_obs, game.n_states());
    let exact = central_diff(|z| deviation_objective(game, policy, z, &observed, theta), &x, 1e-6);
    let samples: Vec<Vec<f64>> = (0..DRAWS)
        .map(|k| {
            let mut r = Rng::stream(seed, k as u64);
            grad_estimator_x(game, policy, &x, (policy, &x_obs), theta, HORIZON, &mut r).unwrap()
        })
        .collect();
    within_se(&samples, &exact, 3.0, 1e-7)
}

pub fn theta_estimator_check() -> Result<(), String> {
    let (game, theta) = finite_case(3);
    let policy = TabularDirect::new(&game, 2).unwrap();
    let mut rng = Rng::new(13);
    let x = interior_point(policy.param_space(), &mut rng, 0.8).unwrap();
    let x_obs = interior_point(policy.param_space(), &mut rng, 0.8).unwrap();
    let observed = policy_table(&policy, &x_obs, 2);
    let dev = policy_table(&policy, &x, 2);
    // rewards are affine in theta, so differences are exact up to rounding
    let exact = central_diff(
        |t| {
            (0..2)
                .map(|i| {
                    truncated_return(&game, &splice(&observed, &dev, i), t, HORIZON)[i]
                        - truncated_return(&game, &observed, t, HORIZON)[i]
                })
                .sum()
        },
        &theta,
        1e-4,
    );
    let samples: Vec<Vec<f64>> = (0..DRAWS)
        .map(|k| {
            let mut r = Rng::stream(13, k as u64);
            let deviations: Vec<_> = (0..2)
                .map(|i| {
                    let sources: Vec<PlayerSource<'_>> = (0..2)
                        .map(|l| {
                            if l == i {
                                PlayerSource::fixed(&policy, &x)
                            } else {
                                PlayerSource::fixed(&policy, &x_obs)
                            }
                        })
                        .collect();
                    simulate(&game, &sources, HORIZON, &mut r).unwrap()
                })
                .collect();
            let eq_sources = [PlayerSource::fixed(&policy, &x_obs), PlayerSource::fixed(&policy, &x_obs)];
            let eq = simulate(&game, &eq_sources, HORIZON, &mut r).unwrap();
            grad_estimator_theta(&game, &deviations, &eq, &theta).unwrap()
        })
        .collect();
    within_se(&samples, &exact, 3.0, 1e-7)
}

/// One deterministic state: a single rollout enumerates the game, so every
/// draw must equal the exact gradient.
pub fn single_state_check() -> Result<(), String> {
    let game = SingleStateQuadratic::new(2, 0.9).unwrap();
    let policy = ConstantPolicy::new(&game).unwrap();
    let mut rng = Rng::new(14);
    let x = interior_point(policy.param_space(), &mut rng, 0.8).unwrap();
    let x_obs = interior_point(policy.param_space(), &mut rng, 0.8).unwrap();
    let theta = interior_point(game.param_space(), &mut rng, 0.8).unwrap();
    let ret = |i: usize, dev: &[f64], t: &[f64]| {
        let sources: Vec<PlayerSource<'_>> = (0..2)
            .map(|l| PlayerSource::fixed(&policy, if l == i { dev } else { &x_obs[..] }))
            .collect();
        let h = simulate(&game, &sources, HORIZON, &mut Rng::new(0)).unwrap();
        igt_core::markov::discounted_return(&game, &h, t)[i]
    };
    let exact_x = central_diff(|z| (0..2).map(|i| ret(i, z, &theta)).sum(), &x, 1e-6);
    let exact_theta = central_diff(
        |t| (0..2).map(|i| ret(i, &x, t) - ret(i, &x_obs, t)).sum(),
        &theta,
        1e-5,
    );
    let mut samples_x = Vec::new();
    let mut samples_theta = Vec::new();
    for k in 0..DRAWS / 10 {
        let mut r = Rng::stream(14, k as u64);
        samples_x.push(grad_estimator_x(&game, &policy, &x, (&policy, &x_obs), &theta, HORIZON, &mut r).unwrap());
        let deviations: Vec<_> = (0..2)
            .map(|i| {
                let sources: Vec<PlayerSource<'_>> = (0..2)
                    .map(|l| PlayerSource::fixed(&policy, if l == i { &x[..] } else { &x_obs[..] }))
                    .collect();
                simulate(&game, &sources, HORIZON, &mut r).unwrap()
            })
            .collect();
        let eq_sources = [PlayerSource::fixed(&policy, &x_obs), PlayerSource::fixed(&policy, &x_obs)];
        let eq = simulate(&game, &eq_sources, HORIZON, &mut r).unwrap();
        samples_theta.push(grad_estimator_theta(&game, &deviations, &eq, &theta).unwrap());
    }
    within_se(&samples_x, &exact_x, 3.0, 1e-6)?;
    within_se(&samples_theta, &exact_theta, 3.0, 1e-6)
}

/// Every unbiasedness check, labelled.
pub fn estimator_report() -> Vec<(&'static str, Result<(), String>)> {
    let (game, theta) = finite_case(1);
    let direct = TabularDirect::new(&game, 2).unwrap();
    let r1 = x_estimator_check(&game, &direct, &theta, 11);
    let (game, theta) = finite_case(2);
    let softmax = TabularSoftmax::new(&game, 2, 3.0).unwrap();
    let r2 = x_estimator_check(&game, &softmax, &theta, 12);
    vec![
        ("x estimator, tabular direct", r1),
        ("x estimator, tabular softmax", r2),
        ("theta estimator, finite", theta_estimator_check()),
        ("both estimators, single state", single_state_check()),
    ]
}
