//! Single-agent market-making model family.
//!
//! Mid-prices live on the half-tick grid `x = k * tick / 2` for
//! `k = 1..=2*N_P-1`; quotes live on the tick grid `p = l * tick` for
//! `l = 0..=N_P`. Both are kept as integers internally, so two states or
//! actions are equal exactly when their indices are. Reals only show up in
//! rates, probabilities and rewards.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for "rows sum to one/zero" checks.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Generator of the mid-price chain. Only the tridiagonal band may be
/// non-zero and every row sums to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateMatrix(pub Vec<Vec<f64>>);

impl RateMatrix {
    /// Build a birth-death generator from per-level up and down rates.
    /// `up[i]` is the rate from level `i` to `i + 1` (0-based), `down[i]`
    /// from `i` to `i - 1`; `down[0]` and the last `up` are ignored.
    pub fn birth_death(up: &[f64], down: &[f64]) -> Self {
        let n = up.len();
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            let u = if i + 1 < n { up[i] } else { 0.0 };
            let d = if i > 0 { down[i] } else { 0.0 };
            if i + 1 < n {
                m[i][i + 1] = u;
            }
            if i > 0 {
                m[i][i - 1] = d;
            }
            m[i][i] = -(u + d);
        }
        RateMatrix(m)
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }

    /// Rate from 0-based level `i` up to `i + 1` (zero at the top).
    pub fn up(&self, i: usize) -> f64 {
        if i + 1 < self.size() {
            self.0[i][i + 1]
        } else {
            0.0
        }
    }

    /// Rate from 0-based level `i` down to `i - 1` (zero at the bottom).
    pub fn down(&self, i: usize) -> f64 {
        if i > 0 {
            self.0[i][i - 1]
        } else {
            0.0
        }
    }

    /// Total outflow rate of level `i`.
    pub fn outflow(&self, i: usize) -> f64 {
        self.up(i) + self.down(i)
    }

    pub fn max_outflow(&self) -> f64 {
        (0..self.size()).map(|i| self.outflow(i)).fold(0.0, f64::max)
    }

    pub fn validate(&self, n: usize, rate_bound: f64) -> Result<()> {
        if self.size() != n {
            return Err(Error::params(format!(
                "rate matrix has {} rows, expected {n}",
                self.size()
            )));
        }
        for (i, row) in self.0.iter().enumerate() {
            if row.len() != n {
                return Err(Error::params(format!("rate matrix row {i} has {} entries", row.len())));
            }
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::params(format!("rate matrix entry ({i},{j}) is not finite")));
                }
                sum += v;
                let neighbour = i.abs_diff(j) == 1;
                if neighbour && !(v > 0.0 && v < rate_bound) {
                    return Err(Error::params(format!(
                        "rate ({i},{j}) = {v} must lie in (0, {rate_bound})"
                    )));
                }
                if i.abs_diff(j) > 1 && v != 0.0 {
                    return Err(Error::params(format!(
                        "rate ({i},{j}) = {v} lies outside the tridiagonal band"
                    )));
                }
            }
            if sum.abs() > ROW_SUM_TOL * (1.0 + row.iter().map(|v| v.abs()).sum::<f64>()) {
                return Err(Error::params(format!("rate matrix row {i} sums to {sum}, not 0")));
            }
        }
        Ok(())
    }
}

/// Rates for one specific action key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionRates<K> {
    pub action: K,
    pub matrix: RateMatrix,
}

/// Price generator, either shared by all actions or tabulated per action.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateMatrixSpec<K> {
    Constant { matrix: RateMatrix },
    PerAction { entries: Vec<ActionRates<K>> },
}

impl<K: PartialEq + std::fmt::Debug> RateMatrixSpec<K> {
    pub fn for_action(&self, key: &K) -> Result<&RateMatrix> {
        match self {
            RateMatrixSpec::Constant { matrix } => Ok(matrix),
            RateMatrixSpec::PerAction { entries } => entries
                .iter()
                .find(|e| &e.action == key)
                .map(|e| &e.matrix)
                .ok_or_else(|| Error::params(format!("no price rates tabulated for action {key:?}"))),
        }
    }

    pub fn validate(&self, n: usize, rate_bound: f64) -> Result<()> {
        match self {
            RateMatrixSpec::Constant { matrix } => matrix.validate(n, rate_bound),
            RateMatrixSpec::PerAction { entries } => {
                if entries.is_empty() {
                    return Err(Error::params("per-action rate table is empty"));
                }
                entries.iter().try_for_each(|e| e.matrix.validate(n, rate_bound))
            }
        }
    }
}

fn default_rate_bound() -> f64 {
    1e3
}

/// Scalar parameters of the single-agent model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Number of tick levels minus one (`N_P`).
    pub n_price_levels: usize,
    /// Inventory bound (`N_Y`).
    pub max_inventory: i32,
    pub tick: f64,
    pub discount_rate: f64,
    pub fill_alpha: f64,
    pub fill_kappa: f64,
    pub inventory_penalty: f64,
    pub transaction_cost: f64,
    pub price_rates: RateMatrixSpec<Action>,
    /// Upper bound on every price rate.
    #[serde(default = "default_rate_bound")]
    pub rate_bound: f64,
}

impl ModelParams {
    /// The 3x3 study configuration: two tick levels, inventory bound one,
    /// constant price generator.
    pub fn baseline() -> Self {
        ModelParams {
            n_price_levels: 2,
            max_inventory: 1,
            tick: 1.0 / 3.0,
            discount_rate: 0.95,
            fill_alpha: 10.87,
            fill_kappa: 2.0,
            inventory_penalty: 0.0,
            transaction_cost: 0.0,
            price_rates: RateMatrixSpec::Constant {
                matrix: baseline_rate_matrix(),
            },
            rate_bound: default_rate_bound(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_price_levels == 0 {
            return Err(Error::params("n_price_levels must be positive"));
        }
        if self.max_inventory < 0 {
            return Err(Error::params("max_inventory must be non-negative"));
        }
        let positive = [
            ("tick", self.tick),
            ("discount_rate", self.discount_rate),
            ("fill_alpha", self.fill_alpha),
            ("fill_kappa", self.fill_kappa),
            ("rate_bound", self.rate_bound),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::params(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("inventory_penalty", self.inventory_penalty),
            ("transaction_cost", self.transaction_cost),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::params(format!("{name} must be non-negative, got {v}")));
            }
        }
        self.price_rates.validate(self.n_mid_prices(), self.rate_bound)
    }

    /// `|S_X| = 2 N_P - 1`.
    pub fn n_mid_prices(&self) -> usize {
        2 * self.n_price_levels - 1
    }

    /// `|S_Y| = 2 N_Y + 1`.
    pub fn n_inventories(&self) -> usize {
        (2 * self.max_inventory + 1) as usize
    }

    pub fn n_states(&self) -> usize {
        self.n_mid_prices() * self.n_inventories()
    }

    pub fn mid_price(&self, price_index: usize) -> f64 {
        price_index as f64 * self.tick / 2.0
    }

    pub fn quote_price(&self, level: usize) -> f64 {
        level as f64 * self.tick
    }

    /// Execution intensity `alpha * exp(-kappa * d)`.
    pub fn intensity(&self, distance: f64) -> f64 {
        self.fill_alpha * (-self.fill_kappa * distance).exp()
    }

    /// All states, ordered by price index then inventory.
    pub fn states(&self) -> Vec<State> {
        let ny = self.max_inventory;
        (1..=self.n_mid_prices())
            .flat_map(|k| (-ny..=ny).map(move |y| State::new(k, y)))
            .collect()
    }

    pub fn check_state(&self, s: State) -> Result<()> {
        if s.price_index == 0 || s.price_index > self.n_mid_prices() {
            return Err(Error::domain(format!(
                "price index {} outside 1..={}",
                s.price_index,
                self.n_mid_prices()
            )));
        }
        if s.inventory.abs() > self.max_inventory {
            return Err(Error::domain(format!(
                "inventory {} outside ±{}",
                s.inventory, self.max_inventory
            )));
        }
        Ok(())
    }

    pub fn state_id(&self, s: State) -> Result<usize> {
        self.check_state(s)?;
        Ok((s.price_index - 1) * self.n_inventories() + (s.inventory + self.max_inventory) as usize)
    }

    pub fn state_at(&self, id: usize) -> State {
        let ni = self.n_inventories();
        State::new(id / ni + 1, (id % ni) as i32 - self.max_inventory)
    }
}

/// Generator used by the baseline study: reflecting walk on three levels.
pub fn baseline_rate_matrix() -> RateMatrix {
    RateMatrix(vec![
        vec![-5.0, 5.0, 0.0],
        vec![10.0 / 3.0, -20.0 / 3.0, 10.0 / 3.0],
        vec![0.0, 5.0, -5.0],
    ])
}

/// `(mid-price index, inventory)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct State {
    pub price_index: usize,
    pub inventory: i32,
}

impl State {
    pub const fn new(price_index: usize, inventory: i32) -> Self {
        State {
            price_index,
            inventory,
        }
    }
}

/// Quote levels; a side is `None` when it is banned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub ask: Option<usize>,
    pub bid: Option<usize>,
}

impl Action {
    pub const fn new(ask: Option<usize>, bid: Option<usize>) -> Self {
        Action { ask, bid }
    }
}

/// Ask levels strictly above the mid-price `k` (in half ticks).
pub(crate) fn ask_levels(n_price_levels: usize, price_index: usize) -> impl Iterator<Item = usize> {
    (0..=n_price_levels).filter(move |&l| 2 * l > price_index)
}

/// Bid levels strictly below the mid-price `k` (in half ticks).
pub(crate) fn bid_levels(n_price_levels: usize, price_index: usize) -> impl Iterator<Item = usize> {
    (0..=n_price_levels).filter(move |&l| 2 * l < price_index)
}

/// Admissible actions at `s`, ordered by ask level then bid level.
pub fn available_actions(params: &ModelParams, s: State) -> Result<Vec<Action>> {
    params.check_state(s)?;
    let asks: Vec<Option<usize>> = if s.inventory > -params.max_inventory {
        ask_levels(params.n_price_levels, s.price_index).map(Some).collect()
    } else {
        vec![None]
    };
    let bids: Vec<Option<usize>> = if s.inventory < params.max_inventory {
        bid_levels(params.n_price_levels, s.price_index).map(Some).collect()
    } else {
        vec![None]
    };
    Ok(asks
        .iter()
        .flat_map(|&a| bids.iter().map(move |&b| Action::new(a, b)))
        .collect())
}

pub fn is_admissible(params: &ModelParams, s: State, a: Action) -> bool {
    let k = s.price_index;
    let ask_ok = match a.ask {
        Some(l) => s.inventory > -params.max_inventory && l <= params.n_price_levels && 2 * l > k,
        None => s.inventory == -params.max_inventory,
    };
    let bid_ok = match a.bid {
        Some(l) => s.inventory < params.max_inventory && l <= params.n_price_levels && 2 * l < k,
        None => s.inventory == params.max_inventory,
    };
    params.check_state(s).is_ok() && ask_ok && bid_ok
}

fn check_action(params: &ModelParams, s: State, a: Action) -> Result<()> {
    params.check_state(s)?;
    if !is_admissible(params, s, a) {
        return Err(Error::domain(format!("action {a:?} is not admissible at {s:?}")));
    }
    Ok(())
}

/// One-step mid-price transition matrix `I + Q_X(a) dt`.
pub fn price_transition_matrix(params: &ModelParams, dt: f64, a: Action) -> Result<Vec<Vec<f64>>> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::domain(format!("dt must be non-negative, got {dt}")));
    }
    let q = params.price_rates.for_action(&a)?;
    let n = params.n_mid_prices();
    let mut p = vec![vec![0.0; n]; n];
    for i in 0..n {
        let up = q.up(i) * dt;
        let down = q.down(i) * dt;
        if i + 1 < n {
            p[i][i + 1] = up;
        }
        if i > 0 {
            p[i][i - 1] = down;
        }
        p[i][i] = 1.0 - up - down;
        for (j, &v) in p[i].iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidDiscretization {
                    dt,
                    what: format!("price transition row {} (entry {j})", i + 1),
                    value: v,
                });
            }
        }
    }
    Ok(p)
}

/// Probability that a quote at `distance` from the mid is hit within `dt`.
pub fn fill_probability(params: &ModelParams, dt: f64, distance: f64) -> Result<f64> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::domain(format!("dt must be non-negative, got {dt}")));
    }
    if distance < 0.0 {
        return Err(Error::domain(format!("negative quote distance {distance}")));
    }
    let p = params.intensity(distance) * dt;
    if p > 1.0 {
        return Err(Error::InvalidDiscretization {
            dt,
            what: format!("fill probability at distance {distance}"),
            value: p,
        });
    }
    Ok(p)
}

/// Price drift `(up - down) * tick / 2` at mid-price index `k`.
pub fn price_drift(params: &ModelParams, price_index: usize, a: Action) -> Result<f64> {
    let q = params.price_rates.for_action(&a)?;
    let i = price_index - 1;
    Ok((q.up(i) - q.down(i)) * params.tick / 2.0)
}

fn ask_distance(params: &ModelParams, s: State, level: usize) -> f64 {
    params.quote_price(level) - params.mid_price(s.price_index)
}

fn bid_distance(params: &ModelParams, s: State, level: usize) -> f64 {
    params.mid_price(s.price_index) - params.quote_price(level)
}

/// Expected reward per unit time `f(s, a)`.
pub fn expected_stage_rate(params: &ModelParams, s: State, a: Action) -> Result<f64> {
    check_action(params, s, a)?;
    let c = params.transaction_cost;
    let mut f = 0.0;
    if let Some(l) = a.ask {
        let d = ask_distance(params, s, l);
        f += (d - c) * params.intensity(d);
    }
    if let Some(l) = a.bid {
        let d = bid_distance(params, s, l);
        f += (d - c) * params.intensity(d);
    }
    let y = s.inventory as f64;
    f -= params.inventory_penalty * y * y;
    f += y * price_drift(params, s.price_index, a)?;
    Ok(f)
}

/// Realized one-step reward for a sampled outcome.
pub fn reward_given_outcome(
    params: &ModelParams,
    dt: f64,
    s: State,
    a: Action,
    n_ask: u8,
    n_bid: u8,
    x_next: f64,
) -> f64 {
    let c = params.transaction_cost;
    let x = params.mid_price(s.price_index);
    let y = s.inventory as f64;
    let mut r = 0.0;
    if let (Some(l), true) = (a.ask, s.inventory > -params.max_inventory) {
        r += (params.quote_price(l) - x - c) * n_ask as f64;
    }
    if let (Some(l), true) = (a.bid, s.inventory < params.max_inventory) {
        r += (x - params.quote_price(l) - c) * n_bid as f64;
    }
    r + (x_next - x) * y - params.inventory_penalty * y * y * dt
}

/// Everything the solvers and the simulator need about one `(s, a)` pair.
#[derive(Clone, Debug)]
pub struct StateAction {
    pub action: Action,
    pub ask_fill: f64,
    pub bid_fill: f64,
    /// Non-zero price moves: `(next price index, probability)`.
    pub price_moves: Vec<(usize, f64)>,
    /// Joint next-state law: `(state id, probability)`, sorted by id.
    pub kernel: Vec<(usize, f64)>,
    /// `f(s, a) * dt`.
    pub expected_reward: f64,
}

/// Fully materialized discrete-time model for one step size.
#[derive(Clone, Debug)]
pub struct DiscreteModel {
    pub params: ModelParams,
    pub dt: f64,
    pub discount: f64,
    pub states: Vec<State>,
    pub actions: Vec<Vec<StateAction>>,
}

pub fn build_discrete_model(params: &ModelParams, dt: f64) -> Result<DiscreteModel> {
    params.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::domain(format!("dt must be positive, got {dt}")));
    }
    let states = params.states();
    let mut actions = Vec::with_capacity(states.len());
    for &s in &states {
        let mut per_state = Vec::new();
        for a in available_actions(params, s)? {
            per_state.push(build_state_action(params, dt, s, a)?);
        }
        actions.push(per_state);
    }
    Ok(DiscreteModel {
        params: params.clone(),
        dt,
        discount: (-params.discount_rate * dt).exp(),
        states,
        actions,
    })
}

fn build_state_action(params: &ModelParams, dt: f64, s: State, a: Action) -> Result<StateAction> {
    let prices = price_transition_matrix(params, dt, a)?;
    let row = &prices[s.price_index - 1];
    let price_moves: Vec<(usize, f64)> = row
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(j, &p)| (j + 1, p))
        .collect();
    let ask_fill = match a.ask {
        Some(l) => fill_probability(params, dt, ask_distance(params, s, l))?,
        None => 0.0,
    };
    let bid_fill = match a.bid {
        Some(l) => fill_probability(params, dt, bid_distance(params, s, l))?,
        None => 0.0,
    };

    let mut kernel: BTreeMap<usize, f64> = BTreeMap::new();
    for &(k_next, p_price) in &price_moves {
        for (n_ask, p_ask) in [(0, 1.0 - ask_fill), (1, ask_fill)] {
            for (n_bid, p_bid) in [(0, 1.0 - bid_fill), (1, bid_fill)] {
                let p = p_price * p_ask * p_bid;
                if p == 0.0 {
                    continue;
                }
                let y_next = s.inventory - n_ask + n_bid;
                let id = params.state_id(State::new(k_next, y_next))?;
                *kernel.entry(id).or_insert(0.0) += p;
            }
        }
    }
    let kernel: Vec<(usize, f64)> = kernel.into_iter().collect();
    let total: f64 = kernel.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidDiscretization {
            dt,
            what: format!("kernel row at {s:?}, {a:?} does not sum to one"),
            value: total,
        });
    }
    Ok(StateAction {
        action: a,
        ask_fill,
        bid_fill,
        price_moves,
        kernel,
        expected_reward: expected_stage_rate(params, s, a)? * dt,
    })
}

impl DiscreteModel {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn state_id(&self, s: State) -> Result<usize> {
        self.params.state_id(s)
    }

    pub fn action_index(&self, state_id: usize, a: Action) -> Result<usize> {
        self.actions[state_id]
            .iter()
            .position(|sa| sa.action == a)
            .ok_or_else(|| {
                Error::domain(format!(
                    "action {a:?} is not admissible at {:?}",
                    self.states[state_id]
                ))
            })
    }

    /// Bound on `|f|` over all state-action pairs.
    pub fn reward_rate_bound(&self) -> f64 {
        self.actions
            .iter()
            .flatten()
            .map(|sa| (sa.expected_reward / self.dt).abs())
            .fold(0.0, f64::max)
    }

    /// One Bellman backup of `v` for a single pair.
    pub fn backup(&self, state_id: usize, action_idx: usize, v: &[f64]) -> f64 {
        let sa = &self.actions[state_id][action_idx];
        sa.expected_reward + self.discount * sa.kernel.iter().map(|&(j, p)| p * v[j]).sum::<f64>()
    }

    pub fn n_state_actions(&self) -> usize {
        self.actions.iter().map(Vec::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params_np2() -> ModelParams {
        ModelParams::baseline()
    }

    #[test]
    fn actions_at_lowest_mid() {
        let p = params_np2();
        let acts = available_actions(&p, State::new(1, 0)).unwrap();
        assert_eq!(
            acts,
            vec![Action::new(Some(1), Some(0)), Action::new(Some(2), Some(0))]
        );
    }

    #[test]
    fn sell_side_banned_at_lower_bound() {
        let p = params_np2();
        let acts = available_actions(&p, State::new(1, -1)).unwrap();
        assert_eq!(acts, vec![Action::new(None, Some(0))]);
    }

    #[test]
    fn degenerate_inventory_bound_gives_empty_quote() {
        let mut p = params_np2();
        p.n_price_levels = 1;
        p.max_inventory = 0;
        p.price_rates = RateMatrixSpec::Constant {
            matrix: RateMatrix(vec![vec![0.0]]),
        };
        let acts = available_actions(&p, State::new(1, 0)).unwrap();
        assert_eq!(acts, vec![Action::new(None, None)]);
    }

    #[test]
    fn invalid_state_is_domain_error() {
        let p = params_np2();
        assert!(matches!(
            available_actions(&p, State::new(4, 0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            available_actions(&p, State::new(2, 2)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn price_matrix_at_tenth() {
        let p = params_np2();
        let m = price_transition_matrix(&p, 0.1, Action::new(Some(2), Some(0))).unwrap();
        let expected = [[0.5, 0.5, 0.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], [0.0, 0.5, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(m[i][j], expected[i][j], epsilon = 1e-12);
            }
            assert_abs_diff_eq!(m[i].iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn price_matrix_at_zero_is_identity() {
        let p = params_np2();
        let m = price_transition_matrix(&p, 0.0, Action::new(Some(2), Some(0))).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn price_matrix_too_coarse_names_the_row() {
        let p = params_np2();
        match price_transition_matrix(&p, 0.2, Action::new(Some(2), Some(0))) {
            Err(Error::InvalidDiscretization { what, value, .. }) => {
                assert!(what.contains("row 2"), "{what}");
                assert_abs_diff_eq!(value, -1.0 / 3.0, epsilon = 1e-12);
            }
            other => panic!("expected invalid discretization, got {other:?}"),
        }
    }

    #[test]
    fn fill_probabilities() {
        let p = params_np2();
        assert_abs_diff_eq!(
            fill_probability(&p, 0.1, 1.0 / 6.0).unwrap(),
            0.77887,
            epsilon = 1e-4
        );
        assert_abs_diff_eq!(
            fill_probability(&p, 0.1, 0.5).unwrap(),
            0.39988,
            epsilon = 1e-4
        );
        assert_eq!(fill_probability(&p, 0.0, 1.0 / 6.0).unwrap(), 0.0);
        assert!(matches!(
            fill_probability(&p, 0.2, 1.0 / 6.0),
            Err(Error::InvalidDiscretization { .. })
        ));
    }

    #[test]
    fn stage_rate_examples() {
        let p = params_np2();
        let f = expected_stage_rate(&p, State::new(2, 0), Action::new(Some(2), Some(0))).unwrap();
        let lam = 10.87 * (-2.0f64 / 3.0).exp();
        assert_abs_diff_eq!(f, 2.0 / 3.0 * lam, epsilon = 1e-12);
        assert_abs_diff_eq!(f, 3.7206, epsilon = 1e-4);

        let mut q = p.clone();
        q.inventory_penalty = 0.3;
        let f1 = expected_stage_rate(&q, State::new(2, 1), Action::new(Some(2), None)).unwrap();
        assert_abs_diff_eq!(f1, lam / 3.0 - 0.3, epsilon = 1e-12);
        // y = 0 removes the penalty
        let f0 = expected_stage_rate(&q, State::new(2, 0), Action::new(Some(2), Some(0))).unwrap();
        assert_abs_diff_eq!(f0, f, epsilon = 1e-12);
    }

    #[test]
    fn stage_rate_rejects_inadmissible_action() {
        let p = params_np2();
        assert!(matches!(
            expected_stage_rate(&p, State::new(2, 0), Action::new(Some(1), Some(0))),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            expected_stage_rate(&p, State::new(2, 1), Action::new(Some(2), Some(0))),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn reward_examples() {
        let p = params_np2();
        let d = p.tick;
        let r = reward_given_outcome(&p, 0.1, State::new(1, 0), Action::new(Some(2), Some(0)), 1, 0, d);
        // spread earned 2d - d/2 plus zero mark-to-market at y = 0
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-12);
        let r0 = reward_given_outcome(&p, 0.1, State::new(2, 0), Action::new(Some(2), Some(0)), 0, 0, d);
        assert_eq!(r0, 0.0);
        let r1 = reward_given_outcome(&p, 0.1, State::new(2, 1), Action::new(Some(2), None), 0, 0, 1.5 * d);
        assert_abs_diff_eq!(r1, d / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn baseline_model_shape() {
        let m = build_discrete_model(&params_np2(), 0.1).unwrap();
        assert_eq!(m.n_states(), 9);
        for (sid, acts) in m.actions.iter().enumerate() {
            assert!(!acts.is_empty());
            for sa in acts {
                let sum: f64 = sa.kernel.iter().map(|(_, p)| p).sum();
                assert!((sum - 1.0).abs() <= 1e-12);
                let s = m.states[sid];
                if s.inventory == 1 {
                    assert!(sa.kernel.iter().all(|&(j, _)| m.states[j].inventory <= 1));
                }
            }
        }
    }

    #[test]
    fn state_ids_roundtrip() {
        let p = params_np2();
        for (i, s) in p.states().into_iter().enumerate() {
            assert_eq!(p.state_id(s).unwrap(), i);
            assert_eq!(p.state_at(i), s);
        }
    }

    #[test]
    fn rate_validation() {
        let mut p = params_np2();
        p.price_rates = RateMatrixSpec::Constant {
            matrix: RateMatrix(vec![
                vec![-5.0, 5.0, 0.0],
                vec![10.0 / 3.0, -20.0 / 3.0, 10.0 / 3.0],
                vec![1.0, 5.0, -6.0],
            ]),
        };
        assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
        p.price_rates = RateMatrixSpec::Constant {
            matrix: RateMatrix(vec![vec![-5.0, 5.0, 0.0], vec![0.0, -1.0, 1.0], vec![0.0, 5.0, -5.0]]),
        };
        assert!(p.validate().is_err());
        p.rate_bound = 4.0;
        p.price_rates = RateMatrixSpec::Constant {
            matrix: baseline_rate_matrix(),
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn per_action_rates_are_looked_up() {
        let mut p = params_np2();
        let slow = RateMatrix::birth_death(&[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0]);
        let mut entries = Vec::new();
        for s in p.states() {
            for a in available_actions(&p, s).unwrap() {
                if !entries.iter().any(|e: &ActionRates<Action>| e.action == a) {
                    let m = if a.ask == Some(2) { slow.clone() } else { baseline_rate_matrix() };
                    entries.push(ActionRates { action: a, matrix: m });
                }
            }
        }
        p.price_rates = RateMatrixSpec::PerAction { entries };
        p.validate().unwrap();
        let m = price_transition_matrix(&p, 0.1, Action::new(Some(2), Some(0))).unwrap();
        assert_abs_diff_eq!(m[1][2], 0.1, epsilon = 1e-12);
        let m = price_transition_matrix(&p, 0.1, Action::new(Some(1), Some(0))).unwrap();
        assert_abs_diff_eq!(m[0][1], 0.5, epsilon = 1e-12);
        assert!(build_discrete_model(&p, 0.1).is_ok());
    }
}
