//! Two-player market-making game on the shared mid-price.
//!
//! Inventory is dropped and both players always quote both sides. A
//! player's fill intensity on a side is `decay(|own - x|) /
//! competition(|own - best|)`, where `best` is the better of the two quotes
//! on that side. The `(decay, competition)` pair is an [`IntensityModel`]
//! selected by name from [`intensity_models`].

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ask_levels, bid_levels, baseline_rate_matrix, RateMatrixSpec, ROW_SUM_TOL};
use crate::registry::{only, require, Entry, Registry, Scalars};

pub trait IntensityModel: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    /// Distance-to-mid factor, positive and decreasing.
    fn decay(&self, distance: f64) -> f64;
    /// Distance-to-best factor in the denominator, bounded away from zero.
    fn competition(&self, distance: f64) -> f64;
}

/// `alpha e^{-kappa d}` over `sqrt(1 + 3 e^{-kappa d}) / 2`. The
/// denominator is one at the best price, so matched quotes reproduce the
/// single-agent intensity.
#[derive(Clone, Debug)]
pub struct ExpSqrt {
    pub alpha: f64,
    pub kappa: f64,
}

impl IntensityModel for ExpSqrt {
    fn name(&self) -> &'static str {
        "exp_sqrt"
    }
    fn decay(&self, d: f64) -> f64 {
        self.alpha * (-self.kappa * d).exp()
    }
    fn competition(&self, d: f64) -> f64 {
        0.5 * (1.0 + 3.0 * (-self.kappa * d).exp()).sqrt()
    }
}

/// Exponential decay with no competition effect.
#[derive(Clone, Debug)]
pub struct ExpNeutral {
    pub alpha: f64,
    pub kappa: f64,
}

impl IntensityModel for ExpNeutral {
    fn name(&self) -> &'static str {
        "exp_neutral"
    }
    fn decay(&self, d: f64) -> f64 {
        self.alpha * (-self.kappa * d).exp()
    }
    fn competition(&self, _d: f64) -> f64 {
        1.0
    }
}

fn alpha_kappa(s: &Scalars) -> Result<(f64, f64)> {
    only(s, &["alpha", "kappa"])?;
    let alpha = require(s, "alpha")?;
    let kappa = require(s, "kappa")?;
    if !(alpha > 0.0 && kappa > 0.0) {
        return Err(Error::params("alpha and kappa must be positive"));
    }
    Ok((alpha, kappa))
}

pub fn intensity_models() -> &'static Registry<dyn IntensityModel> {
    static REG: OnceLock<Registry<dyn IntensityModel>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::new("intensity model")
            .with(Entry {
                name: "exp_sqrt",
                summary: "alpha*exp(-kappa d) / (sqrt(1 + 3 exp(-kappa d')) / 2)",
                build: |s| {
                    let (alpha, kappa) = alpha_kappa(s)?;
                    Ok(Box::new(ExpSqrt { alpha, kappa }) as Box<dyn IntensityModel>)
                },
            })
            .with(Entry {
                name: "exp_neutral",
                summary: "alpha*exp(-kappa d), no competition term",
                build: |s| {
                    let (alpha, kappa) = alpha_kappa(s)?;
                    Ok(Box::new(ExpNeutral { alpha, kappa }) as Box<dyn IntensityModel>)
                },
            })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensitySpec {
    pub kind: String,
    #[serde(default)]
    pub scalars: Scalars,
}

impl IntensitySpec {
    pub fn build(&self) -> Result<Box<dyn IntensityModel>> {
        intensity_models().build(&self.kind, &self.scalars)
    }
}

/// One player's quote levels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quote {
    pub ask: usize,
    pub bid: usize,
}

impl Quote {
    pub const fn new(ask: usize, bid: usize) -> Self {
        Quote { ask, bid }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointAction {
    pub first: Quote,
    pub second: Quote,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Player {
    First,
    Second,
}

impl Player {
    pub const BOTH: [Player; 2] = [Player::First, Player::Second];

    pub fn index(self) -> usize {
        match self {
            Player::First => 0,
            Player::Second => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Ask,
    Bid,
}

fn default_rate_bound() -> f64 {
    1e3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    pub n_price_levels: usize,
    pub tick: f64,
    pub discount_rate: f64,
    pub transaction_cost: f64,
    pub price_rates: RateMatrixSpec<JointAction>,
    pub intensity: IntensitySpec,
    #[serde(default = "default_rate_bound")]
    pub rate_bound: f64,
}

impl GameParams {
    /// Baseline market with the `exp_sqrt` competition model.
    pub fn baseline() -> Self {
        GameParams {
            n_price_levels: 2,
            tick: 1.0 / 3.0,
            discount_rate: 0.95,
            transaction_cost: 0.0,
            price_rates: RateMatrixSpec::Constant {
                matrix: baseline_rate_matrix(),
            },
            intensity: IntensitySpec {
                kind: "exp_sqrt".into(),
                scalars: BTreeMap::from([("alpha".into(), 10.87), ("kappa".into(), 2.0)]),
            },
            rate_bound: default_rate_bound(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_price_levels == 0 {
            return Err(Error::params("n_price_levels must be positive"));
        }
        for (name, v) in [
            ("tick", self.tick),
            ("discount_rate", self.discount_rate),
            ("rate_bound", self.rate_bound),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::params(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.transaction_cost.is_finite() && self.transaction_cost >= 0.0) {
            return Err(Error::params("transaction_cost must be non-negative"));
        }
        self.price_rates.validate(self.n_states(), self.rate_bound)?;
        self.intensity.build().map(|_| ())
    }

    pub fn n_states(&self) -> usize {
        2 * self.n_price_levels - 1
    }

    pub fn mid_price(&self, price_index: usize) -> f64 {
        price_index as f64 * self.tick / 2.0
    }

    pub fn quote_price(&self, level: usize) -> f64 {
        level as f64 * self.tick
    }

    /// Quotes one player may post at mid-price index `k`, by ask then bid.
    pub fn player_actions(&self, price_index: usize) -> Vec<Quote> {
        let bids: Vec<usize> = bid_levels(self.n_price_levels, price_index).collect();
        ask_levels(self.n_price_levels, price_index)
            .flat_map(|a| bids.iter().map(move |&b| Quote::new(a, b)))
            .collect()
    }

    fn check_quote(&self, price_index: usize, q: Quote) -> Result<()> {
        if price_index == 0 || price_index > self.n_states() {
            return Err(Error::domain(format!("price index {price_index} out of range")));
        }
        let ok = q.ask <= self.n_price_levels && q.bid <= self.n_price_levels && 2 * q.ask > price_index && 2 * q.bid < price_index;
        if !ok {
            return Err(Error::domain(format!("quote {q:?} not admissible at price index {price_index}")));
        }
        Ok(())
    }
}

/// Fill intensity of one side of one player's quote.
pub fn execution_intensity(
    model: &dyn IntensityModel,
    x: f64,
    side: Side,
    own: f64,
    rival: f64,
) -> Result<f64> {
    let (distance, to_best) = match side {
        Side::Ask => {
            if own <= x {
                return Err(Error::domain(format!("ask {own} is not above mid {x}")));
            }
            (own - x, own - own.min(rival))
        }
        Side::Bid => {
            if own >= x {
                return Err(Error::domain(format!("bid {own} is not below mid {x}")));
            }
            (x - own, own.max(rival) - own)
        }
    };
    Ok(model.decay(distance) / model.competition(to_best))
}

/// Per-player intensities `[ask, bid]` under a joint quote.
fn joint_intensities(
    params: &GameParams,
    model: &dyn IntensityModel,
    price_index: usize,
    quotes: [Quote; 2],
) -> Result<[[f64; 2]; 2]> {
    let x = params.mid_price(price_index);
    let mut out = [[0.0; 2]; 2];
    for k in 0..2 {
        let (own, rival) = (quotes[k], quotes[1 - k]);
        out[k][0] = execution_intensity(
            model,
            x,
            Side::Ask,
            params.quote_price(own.ask),
            params.quote_price(rival.ask),
        )?;
        out[k][1] = execution_intensity(
            model,
            x,
            Side::Bid,
            params.quote_price(own.bid),
            params.quote_price(rival.bid),
        )?;
    }
    Ok(out)
}

/// Reward rate `r^k(x, a1, a2)` of `player`.
pub fn game_stage_rate(params: &GameParams, price_index: usize, a1: Quote, a2: Quote, player: Player) -> Result<f64> {
    params.check_quote(price_index, a1)?;
    params.check_quote(price_index, a2)?;
    let model = params.intensity.build()?;
    let rates = joint_intensities(params, model.as_ref(), price_index, [a1, a2])?;
    Ok(stage_rate_from(params, price_index, [a1, a2], &rates, player.index()))
}

fn stage_rate_from(params: &GameParams, price_index: usize, quotes: [Quote; 2], rates: &[[f64; 2]; 2], k: usize) -> f64 {
    let x = params.mid_price(price_index);
    let c = params.transaction_cost;
    (params.quote_price(quotes[k].ask) - x - c) * rates[k][0] + (x - params.quote_price(quotes[k].bid) - c) * rates[k][1]
}

/// Realized one-step reward of player `k` given its fill indicators.
pub fn game_reward_given_outcome(params: &GameParams, price_index: usize, quote: Quote, n_ask: u8, n_bid: u8) -> f64 {
    let x = params.mid_price(price_index);
    let c = params.transaction_cost;
    (params.quote_price(quote.ask) - x - c) * n_ask as f64 + (x - params.quote_price(quote.bid) - c) * n_bid as f64
}

/// Discretized law of one joint action at one state.
#[derive(Clone, Debug)]
pub struct JointEntry {
    pub quotes: [Quote; 2],
    /// Intensities per unit time, `[player][ask, bid]`.
    pub intensities: [[f64; 2]; 2],
    /// Fill probabilities per step, `[player][ask, bid]`.
    pub fills: [[f64; 2]; 2],
    /// Non-zero mid-price moves: `(next state id, probability)`.
    pub kernel: Vec<(usize, f64)>,
    /// Continuous-time price rates out of this state: `(state id, rate)`.
    pub rates: Vec<(usize, f64)>,
    /// `r^k * dt` per player.
    pub expected_reward: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct GameModel {
    pub params: GameParams,
    pub dt: f64,
    pub discount: f64,
    /// Quotes available to either player at each state (id = price index - 1).
    pub quotes: Vec<Vec<Quote>>,
    /// Row-major `[i * n_j + j]` joint entries per state.
    pub joint: Vec<Vec<JointEntry>>,
    /// Assumption checks on the intensity shape that failed but do not
    /// block the build.
    pub warnings: Vec<String>,
}

impl GameModel {
    pub fn n_states(&self) -> usize {
        self.quotes.len()
    }

    pub fn n_actions(&self, s: usize) -> usize {
        self.quotes[s].len()
    }

    pub fn entry(&self, s: usize, i: usize, j: usize) -> &JointEntry {
        &self.joint[s][i * self.quotes[s].len() + j]
    }

    pub fn price_index(&self, s: usize) -> usize {
        s + 1
    }

    /// Continuation payoff `r^k Δ + e^{-γΔ} Σ p V^k(s')` for both players.
    pub fn continuation(&self, s: usize, i: usize, j: usize, values: [&[f64]; 2]) -> [f64; 2] {
        let e = self.entry(s, i, j);
        let mut out = e.expected_reward;
        for (k, o) in out.iter_mut().enumerate() {
            *o += self.discount * e.kernel.iter().map(|&(t, p)| p * values[k][t]).sum::<f64>();
        }
        out
    }
}

/// Check the shape conditions the convergence theory asks of the intensity
/// blocks on the distances that actually occur on the quote grid.
fn intensity_diagnostics(params: &GameParams, model: &dyn IntensityModel) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    let max_d = params.n_price_levels as f64 * params.tick;
    let half = params.tick / 2.0;
    let distances: Vec<f64> = (0..=2 * params.n_price_levels).map(|i| i as f64 * half).filter(|&d| d <= max_d).collect();
    for &d in &distances {
        let dec = model.decay(d);
        let comp = model.competition(d);
        if !(dec.is_finite() && dec > 0.0) {
            return Err(Error::params(format!("decay({d}) = {dec} must be positive and finite")));
        }
        if !(comp.is_finite() && comp > 0.0) {
            return Err(Error::params(format!("competition({d}) = {comp} must be positive and finite")));
        }
    }
    let dec: Vec<f64> = distances.iter().map(|&d| model.decay(d)).collect();
    if dec.windows(2).any(|w| w[1] > w[0]) {
        warnings.push(format!("{}: decay factor is not decreasing in distance", model.name()));
    }
    let comp: Vec<f64> = distances.iter().map(|&d| model.competition(d)).collect();
    if comp.windows(2).any(|w| w[1] < w[0]) {
        warnings.push(format!(
            "{}: competition factor is decreasing in distance to the best quote, so a worse quote fills faster",
            model.name()
        ));
    }
    Ok(warnings)
}

pub fn build_game_model(params: &GameParams, dt: f64) -> Result<GameModel> {
    params.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::domain(format!("dt must be positive, got {dt}")));
    }
    let model = params.intensity.build()?;
    let warnings = intensity_diagnostics(params, model.as_ref())?;
    let n = params.n_states();
    let mut quotes = Vec::with_capacity(n);
    let mut joint = Vec::with_capacity(n);
    for s in 0..n {
        let k = s + 1;
        let qs = params.player_actions(k);
        let mut entries = Vec::with_capacity(qs.len() * qs.len());
        for &q1 in &qs {
            for &q2 in &qs {
                entries.push(build_joint_entry(params, model.as_ref(), dt, k, [q1, q2])?);
            }
        }
        quotes.push(qs);
        joint.push(entries);
    }
    Ok(GameModel {
        params: params.clone(),
        dt,
        discount: (-params.discount_rate * dt).exp(),
        quotes,
        joint,
        warnings,
    })
}

fn build_joint_entry(
    params: &GameParams,
    model: &dyn IntensityModel,
    dt: f64,
    price_index: usize,
    quotes: [Quote; 2],
) -> Result<JointEntry> {
    let key = JointAction {
        first: quotes[0],
        second: quotes[1],
    };
    let q = params.price_rates.for_action(&key)?;
    let i = price_index - 1;
    let mut rates = Vec::new();
    if q.down(i) > 0.0 {
        rates.push((i - 1, q.down(i)));
    }
    if q.up(i) > 0.0 {
        rates.push((i + 1, q.up(i)));
    }
    let stay = 1.0 - q.outflow(i) * dt;
    let mut kernel: Vec<(usize, f64)> = rates.iter().map(|&(j, r)| (j, r * dt)).collect();
    kernel.push((i, stay));
    kernel.sort_by_key(|&(j, _)| j);
    for &(j, p) in &kernel {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDiscretization {
                dt,
                what: format!("price transition row {price_index} (entry {j})"),
                value: p,
            });
        }
    }
    kernel.retain(|&(_, p)| p > 0.0);
    let total: f64 = kernel.iter().map(|&(_, p)| p).sum();
    if (total - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::InvalidDiscretization {
            dt,
            what: format!("price row {price_index} does not sum to one"),
            value: total,
        });
    }

    let intensities = joint_intensities(params, model, price_index, quotes)?;
    let mut fills = [[0.0; 2]; 2];
    for k in 0..2 {
        for side in 0..2 {
            let p = intensities[k][side] * dt;
            if p > 1.0 {
                return Err(Error::InvalidDiscretization {
                    dt,
                    what: format!(
                        "fill probability of player {} {} at price index {price_index}",
                        k + 1,
                        if side == 0 { "ask" } else { "bid" }
                    ),
                    value: p,
                });
            }
            fills[k][side] = p;
        }
    }
    let expected_reward = [
        stage_rate_from(params, price_index, quotes, &intensities, 0) * dt,
        stage_rate_from(params, price_index, quotes, &intensities, 1) * dt,
    ];
    Ok(JointEntry {
        quotes,
        intensities,
        fills,
        kernel,
        rates,
        expected_reward,
    })
}
