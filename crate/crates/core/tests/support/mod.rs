//! Independent reference computations shared by the oracle tests and the
//! acceptance run. Nothing here calls the solvers it is used to check.
#![allow(dead_code)]

use hfmm_core::dp::QTable;
use hfmm_core::model::{reward_given_outcome, Action, ModelParams, RateMatrixSpec, State};
use hfmm_core::nash::{BimatrixGame, EquilibriumProfile};
use hfmm_core::qlearn::{learn, LearnerConfig, LearningOutcome, RunOptions, TabularEnv};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row `k` of `I + Q dt` as `(price index, probability)`, zeros dropped.
pub fn price_row(p: &ModelParams, dt: f64, k: usize, a: Action) -> Vec<(usize, f64)> {
    let q = p.price_rates.for_action(&a).unwrap();
    let i = k - 1;
    (0..q.0.len())
        .map(|j| (j + 1, if i == j { 1.0 } else { 0.0 } + q.0[i][j] * dt))
        .filter(|&(_, pr)| pr != 0.0)
        .collect()
}

/// Expected one-step reward summed over every fill and price outcome.
pub fn enumerated_reward(p: &ModelParams, dt: f64, s: State, a: Action) -> f64 {
    let x = p.mid_price(s.price_index);
    let fill = |l: Option<usize>, sign: f64| {
        l.map_or(0.0, |l| {
            let d = sign * (p.quote_price(l) - x);
            p.fill_alpha * (-p.fill_kappa * d).exp() * dt
        })
    };
    let (pa, pb) = (fill(a.ask, 1.0), fill(a.bid, -1.0));
    let mut total = 0.0;
    for na in 0..2u8 {
        for nb in 0..2u8 {
            let w = if na == 1 { pa } else { 1.0 - pa } * if nb == 1 { pb } else { 1.0 - pb };
            for (k_next, pk) in price_row(p, dt, s.price_index, a) {
                total += w * pk * reward_given_outcome(p, dt, s, a, na, nb, p.mid_price(k_next));
            }
        }
    }
    total
}

/// A step size small enough for every probability to be valid.
pub fn safe_dt(p: &ModelParams, frac: f64) -> f64 {
    let RateMatrixSpec::Constant { matrix } = &p.price_rates else {
        unreachable!()
    };
    frac / matrix.max_outflow().max(p.fill_alpha)
}

/// A tabular MDP given by explicit matrices.
pub struct ToyMdp {
    /// `p[s][a][s']`
    pub p: Vec<Vec<Vec<f64>>>,
    /// `r[s][a]`, paid deterministically.
    pub r: Vec<Vec<f64>>,
    pub state: usize,
    pub rng: ChaCha8Rng,
}

impl ToyMdp {
    pub fn new(p: Vec<Vec<Vec<f64>>>, r: Vec<Vec<f64>>, seed: u64) -> Self {
        ToyMdp {
            p,
            r,
            state: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn two_state() -> Self {
        Self::new(
            vec![
                vec![vec![0.9, 0.1], vec![0.2, 0.8]],
                vec![vec![0.5, 0.5], vec![0.7, 0.3]],
            ],
            vec![vec![1.0, 0.0], vec![0.5, 2.0]],
            99,
        )
    }

    pub fn three_state() -> Self {
        Self::new(
            vec![
                vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.1, 0.8]],
                vec![vec![0.3, 0.4, 0.3]],
                vec![vec![0.2, 0.2, 0.6], vec![0.5, 0.0, 0.5], vec![0.0, 0.9, 0.1]],
            ],
            vec![vec![0.0, -0.5], vec![1.0], vec![0.3, 0.6, -1.0]],
            99,
        )
    }

    /// Exact `Q*` by iterating the Q-Bellman operator.
    pub fn q_star(&self, discount: f64) -> QTable {
        let mut q = QTable::with_shape(self.r.iter().map(Vec::len), 0.0);
        for _ in 0..2000 {
            let v: Vec<f64> = (0..self.p.len()).map(|s| q.max(s)).collect();
            for s in 0..self.p.len() {
                for a in 0..self.r[s].len() {
                    let cont: f64 = self.p[s][a].iter().zip(&v).map(|(pr, x)| pr * x).sum();
                    q.set(s, a, self.r[s][a] + discount * cont);
                }
            }
        }
        q
    }
}

impl TabularEnv for ToyMdp {
    fn n_states(&self) -> usize {
        self.p.len()
    }
    fn n_actions(&self, s: usize) -> usize {
        self.p[s].len()
    }
    fn current(&self) -> usize {
        self.state
    }
    fn act(&mut self, a: usize) -> (f64, usize) {
        let u: f64 = self.rng.gen();
        let row = &self.p[self.state][a];
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (j, &pr) in row.iter().enumerate() {
            acc += pr;
            if u < acc {
                next = j;
                break;
            }
        }
        let r = self.r[self.state][a];
        self.state = next;
        (r, next)
    }
}

/// Q-learning with epsilon pinned at 1; returns the run and its sup
/// distance to the exact Q.
pub fn learn_toy(mut env: ToyMdp, discount: f64) -> (LearningOutcome, f64) {
    let q_star = env.q_star(discount);
    let cfg = LearnerConfig {
        omega: 0.7,
        q_init: 0.0,
        eps_floor: 1.0,
        eps_rho0: 1.0,
        eps_rho: 0.5,
        eps_epoch: 1,
        step_budget: 10_000_000,
        initial_state: None,
        checkpoint_every: None,
    };
    let out = learn(&mut env, discount, &cfg, 4, None, &RunOptions::default()).unwrap();
    let d = out.q.sup_distance(&q_star);
    (out, d)
}

/// Solve `m x = rhs` by Gaussian elimination with partial pivoting.
pub fn gauss(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs()))?;
        if m[p][c].abs() < 1e-12 {
            return None;
        }
        m.swap(c, p);
        rhs.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = m[r][c] / m[c][c];
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                rhs[r] -= f * rhs[c];
            }
        }
    }
    Some((0..n).map(|i| rhs[i] / m[i][i]).collect())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

/// Mix over `support` that makes the opponent indifferent over `other`,
/// where `pay(o, s)` is the opponent's payoff.
fn indifference(pay: &dyn Fn(usize, usize) -> f64, support: &[usize], other: &[usize], n: usize) -> Option<Vec<f64>> {
    let k = support.len();
    // unknowns: the k weights and the common payoff
    let mut m = Vec::new();
    let mut rhs = Vec::new();
    for &o in other {
        let mut row: Vec<f64> = support.iter().map(|&s| pay(o, s)).collect();
        row.push(-1.0);
        m.push(row);
        rhs.push(0.0);
    }
    let mut row = vec![1.0; k];
    row.push(0.0);
    m.push(row);
    rhs.push(1.0);
    let sol = gauss(m, rhs)?;
    let mut x = vec![0.0; n];
    for (i, &s) in support.iter().enumerate() {
        if sol[i] < -1e-12 {
            return None;
        }
        x[s] = sol[i].max(0.0);
    }
    Some(x)
}

/// Every equilibrium of a nondegenerate game, by equal-size supports.
pub fn brute_force(g: &BimatrixGame) -> Vec<EquilibriumProfile> {
    let (m, n) = (g.a.len(), g.a[0].len());
    let mut out = Vec::new();
    for k in 1..=m.min(n) {
        for rows in subsets(m, k) {
            for cols in subsets(n, k) {
                let y = indifference(&|i, j| g.a[i][j], &cols, &rows, n);
                let x = indifference(&|j, i| g.b[i][j], &rows, &cols, m);
                let (Some(x), Some(y)) = (x, y) else { continue };
                let v1: f64 = (0..m).map(|i| (0..n).map(|j| x[i] * y[j] * g.a[i][j]).sum::<f64>()).sum();
                let v2: f64 = (0..m).map(|i| (0..n).map(|j| x[i] * y[j] * g.b[i][j]).sum::<f64>()).sum();
                let best_row = (0..m).map(|i| (0..n).map(|j| y[j] * g.a[i][j]).sum::<f64>()).fold(f64::MIN, f64::max);
                let best_col = (0..n).map(|j| (0..m).map(|i| x[i] * g.b[i][j]).sum::<f64>()).fold(f64::MIN, f64::max);
                if best_row <= v1 + 1e-9 && best_col <= v2 + 1e-9 {
                    out.push(EquilibriumProfile {
                        first: x,
                        second: y,
                        payoffs: [v1, v2],
                    });
                }
            }
        }
    }
    out
}

pub fn random_game(rng: &mut ChaCha8Rng, m: usize, n: usize) -> BimatrixGame {
    let mut mat = || (0..m).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    BimatrixGame::new(mat(), mat()).unwrap()
}

pub fn same_profile(p: &EquilibriumProfile, q: &EquilibriumProfile, tol: f64) -> bool {
    p.first.iter().zip(&q.first).chain(p.second.iter().zip(&q.second)).all(|(a, b)| (a - b).abs() <= tol)
}
