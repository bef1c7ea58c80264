mod support;

use hfmm_core::dp::ValueTable;
use hfmm_core::game::{build_game_model, game_stage_rate, GameParams, Player};
use hfmm_core::model::{RateMatrix, RateMatrixSpec};
use hfmm_core::nash::{
    all_equilibria, certify, game_hjb_residual, game_value_iteration, nash_q_learn, solve_bimatrix, BimatrixGame,
    EquilibriumProfile, GameSimulator, JointQ, NashQConfig, StochasticGame,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{brute_force, random_game, same_profile};

#[test]
fn random_three_by_three_games_agree_with_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for round in 0..200 {
        let g = random_game(&mut rng, 3, 3);
        let truth = brute_force(&g);
        assert!(!truth.is_empty(), "round {round}: every finite game has an equilibrium");

        let p = solve_bimatrix(&g, 1e-10).unwrap();
        let regret = certify(&g, &p).unwrap();
        assert!(regret[0] <= 1e-8 && regret[1] <= 1e-8, "round {round}: regret {regret:?}");
        let matched = truth.iter().find(|t| same_profile(t, &p, 1e-8)).expect("solver output is a true equilibrium");
        assert!((matched.payoffs[0] - p.payoffs[0]).abs() <= 1e-8);
        assert!((matched.payoffs[1] - p.payoffs[1]).abs() <= 1e-8);

        let all = all_equilibria(&g, 1e-10).unwrap();
        assert_eq!(all.len(), truth.len(), "round {round}");
        for t in &truth {
            assert!(all.iter().any(|q| same_profile(t, q, 1e-8)));
        }
    }
}

#[test]
fn equilibrium_count_is_odd_for_generic_games() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let g = random_game(&mut rng, 2, 3);
        assert_eq!(all_equilibria(&g, 1e-10).unwrap().len() % 2, 1);
    }
}

fn matrix(m: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn affine_payoff_changes_keep_the_selection(
        a in matrix(3, 3), b in matrix(3, 3), ca in -10.0f64..10.0, cb in -10.0f64..10.0, scale in 0.1f64..10.0,
    ) {
        let g = BimatrixGame::new(a.clone(), b.clone()).unwrap();
        let shifted = BimatrixGame::new(
            a.iter().map(|r| r.iter().map(|x| scale * x + ca).collect()).collect(),
            b.iter().map(|r| r.iter().map(|x| x + cb).collect()).collect(),
        ).unwrap();
        let p = solve_bimatrix(&g, 1e-10).unwrap();
        let q = solve_bimatrix(&shifted, 1e-10).unwrap();
        let support = |x: &[f64]| x.iter().map(|&v| v > 1e-9).collect::<Vec<_>>();
        prop_assert_eq!(support(&p.first), support(&q.first));
        prop_assert_eq!(support(&p.second), support(&q.second));
        prop_assert!(same_profile(&p, &q, 1e-7));
        prop_assert!((q.payoffs[0] - (scale * p.payoffs[0] + ca)).abs() < 1e-7);
        prop_assert!((q.payoffs[1] - (p.payoffs[1] + cb)).abs() < 1e-7);
    }

    #[test]
    fn swapped_profile_solves_a_symmetric_game(a in matrix(3, 3)) {
        let b: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| a[j][i]).collect()).collect();
        let g = BimatrixGame::new(a, b).unwrap();
        let p = solve_bimatrix(&g, 1e-10).unwrap();
        let swapped = EquilibriumProfile { first: p.second.clone(), second: p.first.clone(), payoffs: [p.payoffs[1], p.payoffs[0]] };
        let r = certify(&g, &swapped).unwrap();
        prop_assert!(r[0] <= 1e-8 && r[1] <= 1e-8);
    }

    #[test]
    fn transposed_game_swaps_the_players(a in matrix(2, 3), b in matrix(2, 3)) {
        let g = BimatrixGame::new(a, b).unwrap();
        let p = solve_bimatrix(&g, 1e-10).unwrap();
        let t = g.transpose();
        let swapped = EquilibriumProfile { first: p.second.clone(), second: p.first.clone(), payoffs: [p.payoffs[1], p.payoffs[0]] };
        let r = certify(&t, &swapped).unwrap();
        prop_assert!(r[0] <= 1e-8 && r[1] <= 1e-8);
    }
}

#[test]
fn symmetric_market_gives_identical_dealers() {
    let params = GameParams::baseline();
    for dt in [0.1, 0.01] {
        let model = build_game_model(&params, dt).unwrap();
        let sol = game_value_iteration(&model, 1e-12, 1_000_000).unwrap();
        assert_eq!(sol.values[0], sol.values[1]);
        for p in &sol.profiles {
            assert_eq!(p.first, p.second);
        }
    }
}

/// A game given by explicit tables; both players have `n` actions everywhere.
struct ToyGame {
    n: usize,
    /// `reward[k][s][i][j]`
    reward: [Vec<Vec<Vec<f64>>>; 2],
    /// `next[s][i][j][s']`
    next: Vec<Vec<Vec<Vec<f64>>>>,
    discount: f64,
}

impl StochasticGame for ToyGame {
    fn n_states(&self) -> usize {
        self.next.len()
    }
    fn n_actions(&self, _: usize) -> usize {
        self.n
    }
    fn continuation(&self, s: usize, i: usize, j: usize, values: [&[f64]; 2]) -> [f64; 2] {
        let p = &self.next[s][i][j];
        let cont = |v: &[f64]| p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        [
            self.reward[0][s][i][j] + self.discount * cont(values[0]),
            self.reward[1][s][i][j] + self.discount * cont(values[1]),
        ]
    }
}

struct ToySim<'g> {
    game: &'g ToyGame,
    state: usize,
    rng: ChaCha8Rng,
}

impl GameSimulator for ToySim<'_> {
    fn current(&self) -> usize {
        self.state
    }
    fn act(&mut self, i: usize, j: usize) -> ([f64; 2], usize) {
        let s = self.state;
        let row = &self.game.next[s][i][j];
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (k, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = k;
                break;
            }
        }
        self.state = next;
        ([self.game.reward[0][s][i][j], self.game.reward[1][s][i][j]], next)
    }
}

#[test]
fn zero_reward_game_is_worth_nothing() {
    let g = ToyGame {
        n: 2,
        reward: [vec![vec![vec![0.0; 2]; 2]; 3], vec![vec![vec![0.0; 2]; 2]; 3]],
        next: vec![vec![vec![vec![0.2, 0.3, 0.5]; 2]; 2]; 3],
        discount: 0.9,
    };
    let sol = game_value_iteration(&g, 1e-12, 10_000).unwrap();
    assert!(sol.values.iter().all(|v| v.values.iter().all(|&x| x == 0.0)));
    assert!(sol.certificates.iter().all(|&c| c == 0.0));
}

#[test]
fn single_state_market_solves_the_static_equation() {
    let mut params = GameParams::baseline();
    params.n_price_levels = 1;
    params.price_rates = RateMatrixSpec::Constant {
        matrix: RateMatrix(vec![vec![0.0]]),
    };
    let model = build_game_model(&params, 0.01).unwrap();
    assert_eq!(model.n_states(), 1);
    let mut sol = game_value_iteration(&model, 1e-13, 1_000_000).unwrap();
    let q = params.player_actions(1);
    assert_eq!(q.len(), 1);
    let r = [
        game_stage_rate(&params, 1, q[0], q[0], Player::First).unwrap(),
        game_stage_rate(&params, 1, q[0], q[0], Player::Second).unwrap(),
    ];
    // the discrete value is off by O(dt) ...
    let res = game_hjb_residual(&params, &sol).unwrap();
    assert!(res[0] > 0.0 && res[0] < 0.05 * r[0]);
    // ... and r / gamma is the exact continuous-time solution
    for k in 0..2 {
        sol.values[k] = ValueTable {
            values: vec![r[k] / params.discount_rate],
        };
    }
    let res = game_hjb_residual(&params, &sol).unwrap();
    assert!(res[0] < 1e-12 && res[1] < 1e-12, "{res:?}");
}

/// Two states, two actions, a strictly dominant action for each player.
fn dominant_toy() -> ToyGame {
    let r1 = vec![
        vec![vec![1.0, 0.6], vec![0.2, 0.0]],
        vec![vec![0.5, 0.9], vec![-0.3, 0.1]],
    ];
    let r2 = vec![
        vec![vec![0.4, 1.0], vec![0.1, 0.8]],
        vec![vec![0.0, -0.5], vec![0.7, 0.3]],
    ];
    let next = vec![
        vec![vec![vec![0.7, 0.3], vec![0.4, 0.6]], vec![vec![0.5, 0.5], vec![0.1, 0.9]]],
        vec![vec![vec![0.2, 0.8], vec![0.6, 0.4]], vec![vec![0.9, 0.1], vec![0.3, 0.7]]],
    ];
    ToyGame {
        n: 2,
        reward: [r1, r2],
        next,
        discount: 0.6,
    }
}

#[test]
fn nash_q_learns_a_small_game() {
    let game = dominant_toy();
    let sol = game_value_iteration(&game, 1e-13, 100_000).unwrap();
    let exact = JointQ::from_solution(&game, &sol);
    let cfg = NashQConfig {
        eta0: 0.5,
        eta: 0.8,
        beta_epoch: 20_000,
        eps_floor: 1.0,
        eps_rho0: 1.0,
        eps_rho: 0.5,
        eps_epoch: 1,
        step_budget: 4_800_000,
        q_init: 0.0,
        init_from_reference: false,
        rule: "standard".into(),
        solver: "pure_first".into(),
        initial_state: None,
        checkpoint_every: None,
    };
    let mut sim = ToySim {
        game: &game,
        state: 0,
        rng: ChaCha8Rng::seed_from_u64(17),
    };
    let out = nash_q_learn(&game, game.discount, &mut sim, &cfg, 5, &sol).unwrap();
    let d = out.q.sup_distance(&exact);
    assert!(d <= 0.05, "distance to the exact joint Q is {d}");
    for (p, q) in out.profiles.iter().zip(&sol.profiles) {
        assert_eq!(p.pure_actions(), q.pure_actions());
    }
    let [(v1, p1), (v2, p2)] = out.curve.final_errors().unwrap();
    assert!(v1 <= 0.05 && v2 <= 0.05);
    assert_eq!((p1, p2), (0.0, 0.0));
}
