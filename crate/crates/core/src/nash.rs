//! Static bimatrix equilibria, equilibrium value iteration for the
//! two-dealer game, continuous-time game residuals and Nash Q-learning.

use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::ValueTable;
use crate::env::{stream, substream, GameEnv};
use crate::error::{Error, Result};
use crate::game::{build_game_model, game_stage_rate, GameModel, GameParams, JointAction, Player};
use crate::qlearn::epoch_decay;
use crate::registry::{only, Entry, Registry};
use crate::table::{Cell, Table};

/// Entries below this are treated as zero pivots.
const PIVOT_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BimatrixGame {
    /// Row player's payoffs, `a[i][j]`.
    pub a: Vec<Vec<f64>>,
    /// Column player's payoffs, `b[i][j]`.
    pub b: Vec<Vec<f64>>,
}

impl BimatrixGame {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let g = BimatrixGame { a, b };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.a.len();
        if m == 0 || self.b.len() != m {
            return Err(Error::domain("payoff matrices must have the same, non-zero number of rows"));
        }
        let n = self.a[0].len();
        if n == 0 {
            return Err(Error::domain("payoff matrices need at least one column"));
        }
        for (ra, rb) in self.a.iter().zip(&self.b) {
            if ra.len() != n || rb.len() != n {
                return Err(Error::domain("payoff matrices must be rectangular and equally shaped"));
            }
            if ra.iter().chain(rb).any(|v| !v.is_finite()) {
                return Err(Error::domain("payoffs must be finite"));
            }
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.a.len(), self.a[0].len())
    }

    /// Swap the players' roles.
    pub fn transpose(&self) -> BimatrixGame {
        let (m, n) = self.shape();
        let t = |x: &Vec<Vec<f64>>| (0..n).map(|j| (0..m).map(|i| x[i][j]).collect()).collect();
        BimatrixGame {
            a: t(&self.b),
            b: t(&self.a),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumProfile {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    /// Expected payoffs under the profile.
    pub payoffs: [f64; 2],
}

impl EquilibriumProfile {
    pub fn pure(m: usize, n: usize, i: usize, j: usize, payoffs: [f64; 2]) -> Self {
        let unit = |len, k| (0..len).map(|t| if t == k { 1.0 } else { 0.0 }).collect();
        EquilibriumProfile {
            first: unit(m, i),
            second: unit(n, j),
            payoffs,
        }
    }

    pub fn strategy(&self, player: Player) -> &[f64] {
        match player {
            Player::First => &self.first,
            Player::Second => &self.second,
        }
    }

    /// `(i, j)` if both strategies are degenerate.
    pub fn pure_actions(&self) -> Option<(usize, usize)> {
        let one = |x: &[f64]| x.iter().position(|&p| p == 1.0);
        Some((one(&self.first)?, one(&self.second)?))
    }
}

/// Best-response regrets `[player 1, player 2]` of a profile.
///
/// Evaluated from scratch with plain loops; it does not reuse any of the
/// solver's intermediate quantities. Fails if either strategy is not a
/// distribution.
pub fn certify(g: &BimatrixGame, p: &EquilibriumProfile) -> Result<[f64; 2]> {
    let (m, n) = g.shape();
    if p.first.len() != m || p.second.len() != n {
        return Err(Error::domain("profile does not match the game's shape"));
    }
    for x in [&p.first, &p.second] {
        if x.iter().any(|&v| !(v >= 0.0)) || (x.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("not a probability vector: {x:?}")));
        }
    }
    let mut row_values = vec![0.0; m];
    let mut col_values = vec![0.0; n];
    let mut value = [0.0; 2];
    for i in 0..m {
        for j in 0..n {
            row_values[i] += g.a[i][j] * p.second[j];
            col_values[j] += g.b[i][j] * p.first[i];
            value[0] += p.first[i] * p.second[j] * g.a[i][j];
            value[1] += p.first[i] * p.second[j] * g.b[i][j];
        }
    }
    let best = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok([
        (best(&row_values) - value[0]).max(0.0),
        (best(&col_values) - value[1]).max(0.0),
    ])
}

/// Lexicographic `k`-subsets of `0..n`.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k == 0 || k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        while i > 0 && cur[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for t in i..k {
            cur[t] = cur[t - 1] + 1;
        }
    }
}

/// Any solution of `m x = rhs` (free variables set to zero), or `None` if
/// the system is inconsistent.
fn solve_linear(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>, n_vars: usize) -> Option<Vec<f64>> {
    let rows = m.len();
    let scale = m
        .iter()
        .flatten()
        .chain(&rhs)
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    let eps = PIVOT_EPS * scale;
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..n_vars {
        if r == rows {
            break;
        }
        let (best, size) = (r..rows)
            .map(|i| (i, m[i][c].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if size <= eps {
            continue;
        }
        m.swap(r, best);
        rhs.swap(r, best);
        for i in 0..rows {
            if i != r {
                let f = m[i][c] / m[r][c];
                if f != 0.0 {
                    for t in c..n_vars {
                        m[i][t] -= f * m[r][t];
                    }
                    rhs[i] -= f * rhs[r];
                }
            }
        }
        pivots.push((r, c));
        r += 1;
    }
    if (r..rows).any(|i| rhs[i].abs() > 1e-9 * scale) {
        return None;
    }
    let mut x = vec![0.0; n_vars];
    for (row, c) in pivots {
        x[c] = rhs[row] / m[row][c];
    }
    Some(x)
}

/// Mix over `support` (length `len`) that makes the opponent indifferent
/// across `opp_support`. `payoff(own, opp)` is the opponent's payoff.
fn indifference_mix(
    len: usize,
    support: &[usize],
    opp_support: &[usize],
    payoff: impl Fn(usize, usize) -> f64,
) -> Option<Vec<f64>> {
    let n_vars = support.len() + 1;
    let mut rows = Vec::with_capacity(opp_support.len() + 1);
    let mut rhs = Vec::with_capacity(opp_support.len() + 1);
    for &o in opp_support {
        let mut row: Vec<f64> = support.iter().map(|&s| payoff(s, o)).collect();
        row.push(-1.0);
        rows.push(row);
        rhs.push(0.0);
    }
    let mut norm = vec![1.0; support.len()];
    norm.push(0.0);
    rows.push(norm);
    rhs.push(1.0);
    let sol = solve_linear(rows, rhs, n_vars)?;
    if sol[..support.len()].iter().any(|&v| v < -1e-10) {
        return None;
    }
    let mut mix = vec![0.0; len];
    for (&s, &v) in support.iter().zip(&sol) {
        mix[s] = v.max(0.0);
    }
    let total: f64 = mix.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    mix.iter_mut().for_each(|v| *v /= total);
    Some(mix)
}

fn profile_payoffs(g: &BimatrixGame, x: &[f64], y: &[f64]) -> [f64; 2] {
    let mut v = [0.0; 2];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            v[0] += xi * yj * g.a[i][j];
            v[1] += xi * yj * g.b[i][j];
        }
    }
    v
}

fn support_candidate(g: &BimatrixGame, rows: &[usize], cols: &[usize], tol: f64) -> Option<EquilibriumProfile> {
    let (m, n) = g.shape();
    let y = indifference_mix(n, cols, rows, |j, i| g.a[i][j])?;
    let x = indifference_mix(m, rows, cols, |i, j| g.b[i][j])?;
    let p = EquilibriumProfile {
        payoffs: profile_payoffs(g, &x, &y),
        first: x,
        second: y,
    };
    match certify(g, &p) {
        Ok([r1, r2]) if r1 <= tol && r2 <= tol => Some(p),
        _ => None,
    }
}

/// Support pairs in the selection order: total size, then row support,
/// then column support, all ascending.
fn support_pairs(m: usize, n: usize) -> impl Iterator<Item = (Vec<usize>, Vec<usize>)> {
    (2..=m + n).flat_map(move |total| {
        let lo = total.saturating_sub(n).max(1);
        let hi = m.min(total - 1);
        (lo..=hi).flat_map(move |k1| {
            let cols = combinations(n, total - k1);
            combinations(m, k1)
                .into_iter()
                .flat_map(move |r| cols.clone().into_iter().map(move |c| (r.clone(), c)))
        })
    })
}

fn first_pure(g: &BimatrixGame, tol: f64) -> Option<EquilibriumProfile> {
    let (m, n) = g.shape();
    for i in 0..m {
        for j in 0..n {
            let best_row = (0..m).map(|t| g.a[t][j]).fold(f64::NEG_INFINITY, f64::max);
            let best_col = g.b[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if g.a[i][j] >= best_row - tol && g.b[i][j] >= best_col - tol {
                return Some(EquilibriumProfile::pure(m, n, i, j, [g.a[i][j], g.b[i][j]]));
            }
        }
    }
    None
}

/// The first pure equilibrium in lexicographic order, otherwise the first
/// certified support-enumeration candidate.
pub fn solve_bimatrix(g: &BimatrixGame, tol: f64) -> Result<EquilibriumProfile> {
    g.validate()?;
    if let Some(p) = first_pure(g, tol) {
        return Ok(p);
    }
    let (m, n) = g.shape();
    support_pairs(m, n)
        .find_map(|(r, c)| support_candidate(g, &r, &c, tol))
        .ok_or_else(|| Error::Solver(format!("no support of the {m}x{n} game produced a certified equilibrium")))
}

/// Every distinct certified equilibrium found by full support enumeration.
pub fn all_equilibria(g: &BimatrixGame, tol: f64) -> Result<Vec<EquilibriumProfile>> {
    g.validate()?;
    let (m, n) = g.shape();
    let mut out: Vec<EquilibriumProfile> = Vec::new();
    for (r, c) in support_pairs(m, n) {
        if let Some(p) = support_candidate(g, &r, &c, tol) {
            let dup = out.iter().any(|q| {
                q.first.iter().zip(&p.first).chain(q.second.iter().zip(&p.second)).all(|(a, b)| (a - b).abs() < 1e-9)
            });
            if !dup {
                out.push(p);
            }
        }
    }
    Ok(out)
}

pub trait BimatrixSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, g: &BimatrixGame, tol: f64) -> Result<EquilibriumProfile>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PureFirst;

impl BimatrixSolver for PureFirst {
    fn name(&self) -> &'static str {
        "pure_first"
    }
    fn solve(&self, g: &BimatrixGame, tol: f64) -> Result<EquilibriumProfile> {
        solve_bimatrix(g, tol)
    }
}

/// Mixed equilibria are preferred: the last certified candidate in
/// selection order. Used to probe selection sensitivity.
#[derive(Clone, Copy, Debug, Default)]
pub struct LastSupport;

impl BimatrixSolver for LastSupport {
    fn name(&self) -> &'static str {
        "last_support"
    }
    fn solve(&self, g: &BimatrixGame, tol: f64) -> Result<EquilibriumProfile> {
        all_equilibria(g, tol)?
            .pop()
            .ok_or_else(|| Error::Solver("support enumeration found no equilibrium".into()))
    }
}

pub fn bimatrix_solvers() -> &'static Registry<dyn BimatrixSolver> {
    static REG: OnceLock<Registry<dyn BimatrixSolver>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::new("bimatrix solver")
            .with(Entry {
                name: "pure_first",
                summary: "first pure equilibrium, then supports by increasing size",
                build: |s| {
                    only(s, &[])?;
                    Ok(Box::new(PureFirst) as Box<dyn BimatrixSolver>)
                },
            })
            .with(Entry {
                name: "last_support",
                summary: "last equilibrium found by full support enumeration",
                build: |s| {
                    only(s, &[])?;
                    Ok(Box::new(LastSupport) as Box<dyn BimatrixSolver>)
                },
            })
    })
}

/// A finite discounted two-player game with a known law.
///
/// Both players choose among the same number of actions at each state.
pub trait StochasticGame: Sync {
    fn n_states(&self) -> usize;
    fn n_actions(&self, s: usize) -> usize;
    /// Continuation payoffs of the joint action `(i, j)` at `s`.
    fn continuation(&self, s: usize, i: usize, j: usize, values: [&[f64]; 2]) -> [f64; 2];
}

impl StochasticGame for GameModel {
    fn n_states(&self) -> usize {
        GameModel::n_states(self)
    }
    fn n_actions(&self, s: usize) -> usize {
        GameModel::n_actions(self, s)
    }
    fn continuation(&self, s: usize, i: usize, j: usize, values: [&[f64]; 2]) -> [f64; 2] {
        GameModel::continuation(self, s, i, j, values)
    }
}

/// Stage game at `s` whose payoffs are the continuations under `values`.
pub fn continuation_game<G: StochasticGame + ?Sized>(game: &G, s: usize, values: [&[f64]; 2]) -> BimatrixGame {
    let n = game.n_actions(s);
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let c = game.continuation(s, i, j, values);
            a[i][j] = c[0];
            b[i][j] = c[1];
        }
    }
    BimatrixGame { a, b }
}

#[derive(Clone, Debug)]
pub struct GameSolution {
    pub profiles: Vec<EquilibriumProfile>,
    pub values: [ValueTable; 2],
    pub iterations: usize,
    /// Largest value change in the final sweep.
    pub last_change: f64,
    /// Largest best-response regret per state against the final values.
    pub certificates: Vec<f64>,
}

impl GameSolution {
    /// Per-state pure joint action, if every profile is pure.
    pub fn pure_profile(&self) -> Option<Vec<(usize, usize)>> {
        self.profiles.iter().map(EquilibriumProfile::pure_actions).collect()
    }

    /// Rows `dt, state_id, player, action_id, probability, v_star, residual`.
    pub fn to_table(&self, dt: f64, residuals: [f64; 2]) -> Table {
        let mut t = Table::new(&["dt", "state_id", "player", "action_id", "probability", "v_star", "residual"]);
        for (s, p) in self.profiles.iter().enumerate() {
            for player in Player::BOTH {
                let k = player.index();
                for (a, &prob) in p.strategy(player).iter().enumerate() {
                    t.push(vec![
                        Cell::Float(dt),
                        Cell::Int(s as i64),
                        Cell::Int(k as i64 + 1),
                        Cell::Int(a as i64),
                        Cell::Float(prob),
                        Cell::Float(self.values[k].values[s]),
                        Cell::Float(residuals[k]),
                    ]);
                }
            }
        }
        t
    }
}

/// Tolerance used for the static games inside value iteration.
pub const STAGE_TOL: f64 = 1e-10;

pub fn game_value_iteration<G: StochasticGame + ?Sized>(game: &G, tol: f64, max_iter: usize) -> Result<GameSolution> {
    game_value_iteration_with(game, &PureFirst, tol, max_iter)
}

/// Iterate per-state stage equilibria until both value tables move less
/// than `tol` for three consecutive sweeps.
pub fn game_value_iteration_with<G: StochasticGame + ?Sized>(
    game: &G,
    solver: &dyn BimatrixSolver,
    tol: f64,
    max_iter: usize,
) -> Result<GameSolution> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tol must be positive, got {tol}")));
    }
    let n = game.n_states();
    let mut v = [vec![0.0; n], vec![0.0; n]];
    let mut calm = 0;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let mut profiles = Vec::new();
    while calm < 3 {
        if iterations == max_iter {
            return Err(Error::NonConvergence {
                iterations,
                residual: change,
            });
        }
        profiles = (0..n)
            .map(|s| solver.solve(&continuation_game(game, s, [&v[0], &v[1]]), STAGE_TOL))
            .collect::<Result<Vec<_>>>()?;
        change = 0.0;
        for (s, p) in profiles.iter().enumerate() {
            for k in 0..2 {
                change = change.max((p.payoffs[k] - v[k][s]).abs());
                v[k][s] = p.payoffs[k];
            }
        }
        iterations += 1;
        calm = if change < tol { calm + 1 } else { 0 };
    }
    let certificates = (0..n)
        .map(|s| {
            let g = continuation_game(game, s, [&v[0], &v[1]]);
            let r = certify(&g, &profiles[s])?;
            Ok(r[0].max(r[1]))
        })
        .collect::<Result<Vec<f64>>>()?;
    // the final sweep moved values by < tol, so the bound is loose by that much
    let cert_tol = STAGE_TOL + 2.0 * tol;
    if let Some((s, r)) = certificates.iter().enumerate().find(|(_, &r)| r > cert_tol) {
        return Err(Error::Solver(format!(
            "state {s}: final profile fails the best-response check (regret {r:e})"
        )));
    }
    let [v1, v2] = v;
    Ok(GameSolution {
        profiles,
        values: [ValueTable { values: v1 }, ValueTable { values: v2 }],
        iterations,
        last_change: change,
        certificates,
    })
}

/// `max_s |γ V^k(s) - max_a (r^k(s, a, σ^{-k}) + Σ_{s'} q(s'|s) (V^k(s') - V^k(s)))|`
/// for each player, with the rival fixed at its equilibrium mix.
pub fn game_hjb_residual(params: &GameParams, solution: &GameSolution) -> Result<[f64; 2]> {
    params.validate()?;
    let n = params.n_states();
    if solution.profiles.len() != n {
        return Err(Error::domain("solution does not match the game's state space"));
    }
    let mut out = [0.0f64; 2];
    for s in 0..n {
        let k_price = s + 1;
        let quotes = params.player_actions(k_price);
        let profile = &solution.profiles[s];
        if profile.first.len() != quotes.len() || profile.second.len() != quotes.len() {
            return Err(Error::domain(format!("profile at state {s} does not match the quote set")));
        }
        for player in Player::BOTH {
            let k = player.index();
            let v = &solution.values[k].values;
            let rival = profile.strategy(if k == 0 { Player::Second } else { Player::First });
            let mut best = f64::NEG_INFINITY;
            for &own in &quotes {
                let mut total = 0.0;
                for (&other, &w) in quotes.iter().zip(rival) {
                    if w == 0.0 {
                        continue;
                    }
                    let (a1, a2) = if k == 0 { (own, other) } else { (other, own) };
                    let rate = game_stage_rate(params, k_price, a1, a2, player)?;
                    let q = params.price_rates.for_action(&JointAction { first: a1, second: a2 })?;
                    let mut drift = 0.0;
                    if s > 0 {
                        drift += q.down(s) * (v[s - 1] - v[s]);
                    }
                    if s + 1 < n {
                        drift += q.up(s) * (v[s + 1] - v[s]);
                    }
                    total += w * (rate + drift);
                }
                best = best.max(total);
            }
            out[k] = out[k].max((params.discount_rate * v[s] - best).abs());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct GameSweepRow {
    pub dt: f64,
    pub solution: GameSolution,
    pub residuals: [f64; 2],
    pub warnings: Vec<String>,
}

/// Solve the game at every grid point, largest step first.
pub fn game_sweep(params: &GameParams, dt_grid: &[f64], tol: f64, max_iter: usize) -> Result<Vec<GameSweepRow>> {
    if dt_grid.is_empty() {
        return Err(Error::domain("empty dt grid"));
    }
    let mut grid = dt_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    grid.par_iter()
        .map(|&dt| {
            let model = build_game_model(params, dt)?;
            let solution = game_value_iteration(&model, tol, max_iter)?;
            let residuals = game_hjb_residual(params, &solution)?;
            Ok(GameSweepRow {
                dt,
                solution,
                residuals,
                warnings: model.warnings,
            })
        })
        .collect()
}

/// One backup of a player's joint-action value.
#[derive(Clone, Copy, Debug)]
pub struct Backup {
    pub q: f64,
    pub reward: f64,
    pub beta: f64,
    pub discount: f64,
    /// Expected equilibrium payoff of the player at the next state.
    pub nash_next: f64,
    /// The player's value at the next state under a joint action sampled
    /// from the next state's equilibrium.
    pub sampled_next: f64,
}

pub trait NashUpdateRule: Send + Sync {
    fn name(&self) -> &'static str;
    /// Whether `sampled_next` is read; if not, no joint action is drawn.
    fn samples_next(&self) -> bool;
    fn apply(&self, b: &Backup) -> f64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StandardUpdate;

impl NashUpdateRule for StandardUpdate {
    fn name(&self) -> &'static str {
        "standard"
    }
    fn samples_next(&self) -> bool {
        false
    }
    fn apply(&self, b: &Backup) -> f64 {
        b.q + b.beta * (b.reward + b.discount * b.nash_next - b.q)
    }
}

/// `Q <- r + β (Q(s', â) - Q)`: no discount, reward outside the bracket.
#[derive(Clone, Copy, Debug, Default)]
pub struct LiteralUpdate;

impl NashUpdateRule for LiteralUpdate {
    fn name(&self) -> &'static str {
        "literal"
    }
    fn samples_next(&self) -> bool {
        true
    }
    fn apply(&self, b: &Backup) -> f64 {
        b.reward + b.beta * (b.sampled_next - b.q)
    }
}

pub fn nash_update_rules() -> &'static Registry<dyn NashUpdateRule> {
    static REG: OnceLock<Registry<dyn NashUpdateRule>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::new("Nash-Q update rule")
            .with(Entry {
                name: "standard",
                summary: "Q + β (r + discount * NashValue(s') - Q)",
                build: |s| {
                    only(s, &[])?;
                    Ok(Box::new(StandardUpdate) as Box<dyn NashUpdateRule>)
                },
            })
            .with(Entry {
                name: "literal",
                summary: "r + β (Q(s', sampled joint action) - Q), undiscounted",
                build: |s| {
                    only(s, &[])?;
                    Ok(Box::new(LiteralUpdate) as Box<dyn NashUpdateRule>)
                },
            })
    })
}

fn default_rule() -> String {
    "standard".into()
}

fn default_solver() -> String {
    "pure_first".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NashQConfig {
    /// Learning rate `eta0 * eta^floor(N(s, a1, a2) / beta_epoch)`.
    pub eta0: f64,
    pub eta: f64,
    pub beta_epoch: u64,
    pub eps_floor: f64,
    pub eps_rho0: f64,
    pub eps_rho: f64,
    pub eps_epoch: u64,
    pub step_budget: u64,
    pub q_init: f64,
    /// Start from the reference continuation values instead of `q_init`.
    #[serde(default)]
    pub init_from_reference: bool,
    #[serde(default = "default_rule")]
    pub rule: String,
    #[serde(default = "default_solver")]
    pub solver: String,
    /// Initial state id; defaults to the middle state.
    #[serde(default)]
    pub initial_state: Option<usize>,
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
}

impl NashQConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta0) {
            return Err(Error::params(format!("eta0 must lie in [0, 1], got {}", self.eta0)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::params(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.beta_epoch == 0 || self.eps_epoch == 0 {
            return Err(Error::params("epoch lengths must be positive"));
        }
        if !(self.eps_floor > 0.0 && self.eps_floor <= 1.0) {
            return Err(Error::params(format!("eps_floor must lie in (0, 1], got {}", self.eps_floor)));
        }
        if !(0.0..=1.0).contains(&self.eps_rho0) {
            return Err(Error::params(format!("eps_rho0 must lie in [0, 1], got {}", self.eps_rho0)));
        }
        if !(self.eps_rho > 0.0 && self.eps_rho <= 1.0) {
            return Err(Error::params(format!("eps_rho must lie in (0, 1], got {}", self.eps_rho)));
        }
        if !self.q_init.is_finite() {
            return Err(Error::params("q_init must be finite"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::params("checkpoint_every must be positive"));
        }
        nash_update_rules().get(&self.rule).ok_or_else(|| Error::UnknownStrategy {
            family: nash_update_rules().family(),
            name: self.rule.clone(),
            known: nash_update_rules().names().join(", "),
        })?;
        bimatrix_solvers().get(&self.solver).ok_or_else(|| Error::UnknownStrategy {
            family: bimatrix_solvers().family(),
            name: self.solver.clone(),
            known: bimatrix_solvers().names().join(", "),
        })?;
        Ok(())
    }

    pub fn checkpoint_every(&self) -> u64 {
        self.checkpoint_every
            .unwrap_or_else(|| self.step_budget.div_ceil(1000).max(1))
    }

    pub fn epsilon(&self, state_visits: u64) -> f64 {
        epoch_decay(self.eps_rho0, self.eps_rho, self.eps_epoch, state_visits).max(self.eps_floor)
    }

    /// Rate for a joint action already visited `visits` times.
    pub fn beta(&self, visits: u64) -> f64 {
        epoch_decay(self.eta0, self.eta, self.beta_epoch, visits)
    }
}

/// Something a pair of learners can play one joint action at a time.
pub trait GameSimulator {
    fn current(&self) -> usize;
    /// Returns per-player rewards and the next state.
    fn act(&mut self, i: usize, j: usize) -> ([f64; 2], usize);
}

impl GameSimulator for GameEnv<'_> {
    fn current(&self) -> usize {
        self.state()
    }
    fn act(&mut self, i: usize, j: usize) -> ([f64; 2], usize) {
        let rec = self.step_index(i, j);
        (rec.rewards, rec.next_state)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NashCurvePoint {
    pub step: u64,
    pub player: usize,
    pub value_error: f64,
    pub policy_error: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NashCurve {
    pub points: Vec<NashCurvePoint>,
}

impl NashCurve {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["step", "player", "value_error", "policy_error"]);
        for p in &self.points {
            t.push(vec![
                Cell::Int(p.step as i64),
                Cell::Int(p.player as i64 + 1),
                Cell::Float(p.value_error),
                Cell::Float(p.policy_error),
            ]);
        }
        t
    }

    /// Last logged `(value_error, policy_error)` per player.
    pub fn final_errors(&self) -> Option<[(f64, f64); 2]> {
        let last = |k| {
            self.points
                .iter()
                .rev()
                .find(|p| p.player == k)
                .map(|p| (p.value_error, p.policy_error))
        };
        Some([last(0)?, last(1)?])
    }
}

/// Learned joint-action values, `q[player][s][i * n + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointQ {
    pub q: [Vec<Vec<f64>>; 2],
}

impl JointQ {
    fn constant<G: StochasticGame + ?Sized>(game: &G, init: f64) -> Self {
        let table: Vec<Vec<f64>> = (0..game.n_states())
            .map(|s| vec![init; game.n_actions(s) * game.n_actions(s)])
            .collect();
        JointQ {
            q: [table.clone(), table],
        }
    }

    /// Exact continuation values implied by a solved game.
    pub fn from_solution<G: StochasticGame + ?Sized>(game: &G, sol: &GameSolution) -> Self {
        let mut out = Self::constant(game, 0.0);
        let v = [&sol.values[0].values[..], &sol.values[1].values[..]];
        for s in 0..game.n_states() {
            let n = game.n_actions(s);
            for i in 0..n {
                for j in 0..n {
                    let c = game.continuation(s, i, j, v);
                    out.q[0][s][i * n + j] = c[0];
                    out.q[1][s][i * n + j] = c[1];
                }
            }
        }
        out
    }

    pub fn stage_game(&self, s: usize) -> BimatrixGame {
        let n = (self.q[0][s].len() as f64).sqrt().round() as usize;
        let rows = |k: usize| (0..n).map(|i| self.q[k][s][i * n..(i + 1) * n].to_vec()).collect();
        BimatrixGame { a: rows(0), b: rows(1) }
    }

    pub fn sup_distance(&self, other: &JointQ) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .flat_map(|(a, b)| a.iter().flatten().zip(b.iter().flatten()))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct NashQOutcome {
    pub q: JointQ,
    pub profiles: Vec<EquilibriumProfile>,
    pub curve: NashCurve,
    pub steps: u64,
}

/// Lazily recomputed stage equilibria of the learned Q.
struct NashCache<'a> {
    solver: &'a dyn BimatrixSolver,
    entries: Vec<Option<EquilibriumProfile>>,
}

impl NashCache<'_> {
    fn get(&mut self, q: &JointQ, s: usize) -> Result<&EquilibriumProfile> {
        if self.entries[s].is_none() {
            let p = self.solver.solve(&q.stage_game(s), STAGE_TOL).map_err(|e| {
                Error::Solver(format!("stage game at state {s} failed during Nash-Q: {e}"))
            })?;
            self.entries[s] = Some(p);
        }
        Ok(self.entries[s].as_ref().expect("filled above"))
    }
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

fn curve_errors(
    cache: &mut NashCache<'_>,
    q: &JointQ,
    reference: &GameSolution,
    step: u64,
    curve: &mut NashCurve,
) -> Result<()> {
    let n = reference.profiles.len();
    let mut value = [0.0f64; 2];
    let mut policy = [0.0f64; 2];
    for s in 0..n {
        let p = cache.get(q, s)?;
        let r = &reference.profiles[s];
        for player in Player::BOTH {
            let k = player.index();
            value[k] = value[k].max((p.payoffs[k] - reference.values[k].values[s]).abs());
            let d = p
                .strategy(player)
                .iter()
                .zip(r.strategy(player))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            policy[k] = policy[k].max(d);
        }
    }
    for k in 0..2 {
        curve.points.push(NashCurvePoint {
            step,
            player: k,
            value_error: value[k],
            policy_error: policy[k],
        });
    }
    Ok(())
}

/// Nash Q-learning over any simulator of `game`, scored against `reference`.
pub fn nash_q_learn<G: StochasticGame + ?Sized, E: GameSimulator>(
    game: &G,
    discount: f64,
    env: &mut E,
    config: &NashQConfig,
    seed: u64,
    reference: &GameSolution,
) -> Result<NashQOutcome> {
    config.validate()?;
    let n = game.n_states();
    if reference.profiles.len() != n {
        return Err(Error::domain("reference solution does not match the game"));
    }
    let rule = nash_update_rules().build(&config.rule, &Default::default())?;
    let solver = bimatrix_solvers().build(&config.solver, &Default::default())?;
    let mut q = if config.init_from_reference {
        JointQ::from_solution(game, reference)
    } else {
        JointQ::constant(game, config.q_init)
    };
    let mut cache = NashCache {
        solver: solver.as_ref(),
        entries: vec![None; n],
    };
    let mut explore: ChaCha8Rng = substream(seed, stream::EXPLORE);
    let mut pick: ChaCha8Rng = substream(seed, stream::ACTION);
    let mut next_pick: ChaCha8Rng = substream(seed, stream::NEXT_ACTION);
    let mut state_visits = vec![0u64; n];
    let mut pair_visits: Vec<Vec<u64>> = (0..n).map(|s| vec![0; game.n_actions(s).pow(2)]).collect();
    let mut curve = NashCurve::default();
    let every = config.checkpoint_every();

    curve_errors(&mut cache, &q, reference, 0, &mut curve)?;
    let mut steps = 0;
    while steps < config.step_budget {
        let s = env.current();
        let na = game.n_actions(s);
        let (i, j) = if explore.gen::<f64>() < config.epsilon(state_visits[s]) {
            (pick.gen_range(0..na), pick.gen_range(0..na))
        } else {
            let p = cache.get(&q, s)?;
            let (x, y) = (p.first.clone(), p.second.clone());
            (sample_index(&mut pick, &x), sample_index(&mut pick, &y))
        };
        let idx = i * na + j;
        let beta = config.beta(pair_visits[s][idx]);
        state_visits[s] += 1;
        pair_visits[s][idx] += 1;
        let (rewards, next) = env.act(i, j);

        let p_next = cache.get(&q, next)?.clone();
        let sampled = if rule.samples_next() {
            let nn = game.n_actions(next);
            let a1 = sample_index(&mut next_pick, &p_next.first);
            let a2 = sample_index(&mut next_pick, &p_next.second);
            [q.q[0][next][a1 * nn + a2], q.q[1][next][a1 * nn + a2]]
        } else {
            [0.0; 2]
        };
        for k in 0..2 {
            let entry = &mut q.q[k][s][idx];
            *entry = rule.apply(&Backup {
                q: *entry,
                reward: rewards[k],
                beta,
                discount,
                nash_next: p_next.payoffs[k],
                sampled_next: sampled[k],
            });
        }
        if beta != 0.0 {
            cache.entries[s] = None;
        }
        steps += 1;
        if steps % every == 0 || steps == config.step_budget {
            curve_errors(&mut cache, &q, reference, steps, &mut curve)?;
        }
    }
    let profiles = (0..n).map(|s| cache.get(&q, s).cloned()).collect::<Result<Vec<_>>>()?;
    Ok(NashQOutcome {
        q,
        profiles,
        curve,
        steps,
    })
}

/// Nash Q-learning on the two-dealer game model.
pub fn run_nash_qlearning(
    model: &GameModel,
    config: &NashQConfig,
    seed: u64,
    reference: &GameSolution,
) -> Result<NashQOutcome> {
    let s0 = config.initial_state.unwrap_or(model.n_states() / 2);
    let mut env = GameEnv::reset(model, seed, s0)?;
    nash_q_learn(model, model.discount, &mut env, config, seed, reference)
}
