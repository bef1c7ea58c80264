//! Seeded simulators for the discrete model and the discrete game.
//!
//! Every random component has its own ChaCha stream derived from the same
//! seed, so replacing or adding a consumer never shifts the draws seen by
//! another one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::game::{game_reward_given_outcome, GameModel, Quote};
use crate::model::{reward_given_outcome, Action, DiscreteModel, State};
use crate::table::{Cell, Table};

/// Named substreams.
pub mod stream {
    pub const PRICE: u64 = 0;
    pub const ASK: u64 = 1;
    pub const BID: u64 = 2;
    pub const ASK_SECOND: u64 = 3;
    pub const BID_SECOND: u64 = 4;
    pub const EXPLORE: u64 = 16;
    pub const ACTION: u64 = 17;
    pub const NEXT_ACTION: u64 = 18;
}

pub fn substream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Draw an index from a short `(value, probability)` list.
fn draw<T: Copy>(rng: &mut ChaCha8Rng, outcomes: &[(T, f64)]) -> T {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(v, p) in outcomes {
        acc += p;
        if u < acc {
            return v;
        }
    }
    // rounding left a sliver above the cumulative sum
    outcomes[outcomes.len() - 1].0
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub state: State,
    pub action: Action,
    pub n_ask: u8,
    pub n_bid: u8,
    pub next_state: State,
    pub reward: f64,
}

pub struct MarketEnv<'m> {
    model: &'m DiscreteModel,
    state: usize,
    steps: u64,
    price_rng: ChaCha8Rng,
    ask_rng: ChaCha8Rng,
    bid_rng: ChaCha8Rng,
}

impl<'m> MarketEnv<'m> {
    pub fn reset(model: &'m DiscreteModel, seed: u64, s0: State) -> Result<Self> {
        let state = model.state_id(s0)?;
        Ok(MarketEnv {
            model,
            state,
            steps: 0,
            price_rng: substream(seed, stream::PRICE),
            ask_rng: substream(seed, stream::ASK),
            bid_rng: substream(seed, stream::BID),
        })
    }

    pub fn model(&self) -> &'m DiscreteModel {
        self.model
    }

    pub fn state(&self) -> State {
        self.model.states[self.state]
    }

    pub fn state_id(&self) -> usize {
        self.state
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, a: Action) -> Result<StepRecord> {
        let idx = self.model.action_index(self.state, a)?;
        Ok(self.step_index(idx))
    }

    /// Step with the `idx`-th admissible action of the current state.
    ///
    /// Panics if `idx` is out of range.
    pub fn step_index(&mut self, idx: usize) -> StepRecord {
        let m = self.model;
        let s = m.states[self.state];
        let sa = &m.actions[self.state][idx];
        let n_ask = u8::from(self.ask_rng.gen::<f64>() < sa.ask_fill);
        let n_bid = u8::from(self.bid_rng.gen::<f64>() < sa.bid_fill);
        let k_next = draw(&mut self.price_rng, &sa.price_moves);
        let next = State::new(k_next, s.inventory - n_ask as i32 + n_bid as i32);
        let reward = reward_given_outcome(
            &m.params,
            m.dt,
            s,
            sa.action,
            n_ask,
            n_bid,
            m.params.mid_price(k_next),
        );
        let rec = StepRecord {
            step: self.steps,
            state: s,
            action: sa.action,
            n_ask,
            n_bid,
            next_state: next,
            reward,
        };
        self.state = m
            .params
            .state_id(next)
            .expect("inventory stays within bounds for admissible actions");
        self.steps += 1;
        rec
    }
}

/// Trajectory dump: `step, x, y, ask, bid, n_a, n_b, x_next, reward`.
pub fn trajectory_table(model: &DiscreteModel, records: &[StepRecord]) -> Table {
    let p = &model.params;
    let mut t = Table::new(&["step", "x", "y", "ask", "bid", "n_a", "n_b", "x_next", "reward"]);
    for r in records {
        t.push(vec![
            Cell::Int(r.step as i64),
            Cell::Float(p.mid_price(r.state.price_index)),
            Cell::Int(r.state.inventory as i64),
            r.action.ask.map_or(Cell::Empty, |l| Cell::Float(p.quote_price(l))),
            r.action.bid.map_or(Cell::Empty, |l| Cell::Float(p.quote_price(l))),
            Cell::Int(r.n_ask as i64),
            Cell::Int(r.n_bid as i64),
            Cell::Float(p.mid_price(r.next_state.price_index)),
            Cell::Float(r.reward),
        ]);
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameStepRecord {
    pub step: u64,
    /// Mid-price state id.
    pub state: usize,
    pub quotes: [Quote; 2],
    pub n_ask: [u8; 2],
    pub n_bid: [u8; 2],
    pub next_state: usize,
    pub rewards: [f64; 2],
}

pub struct GameEnv<'m> {
    model: &'m GameModel,
    state: usize,
    steps: u64,
    price_rng: ChaCha8Rng,
    fill_rngs: [[ChaCha8Rng; 2]; 2],
}

impl<'m> GameEnv<'m> {
    /// `s0` is a state id (mid-price index minus one).
    pub fn reset(model: &'m GameModel, seed: u64, s0: usize) -> Result<Self> {
        if s0 >= model.n_states() {
            return Err(Error::domain(format!("initial state {s0} out of range")));
        }
        Ok(GameEnv {
            model,
            state: s0,
            steps: 0,
            price_rng: substream(seed, stream::PRICE),
            fill_rngs: [
                [substream(seed, stream::ASK), substream(seed, stream::BID)],
                [substream(seed, stream::ASK_SECOND), substream(seed, stream::BID_SECOND)],
            ],
        })
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn step(&mut self, first: Quote, second: Quote) -> Result<GameStepRecord> {
        let qs = &self.model.quotes[self.state];
        let find = |q: Quote| {
            qs.iter()
                .position(|&c| c == q)
                .ok_or_else(|| Error::domain(format!("quote {q:?} not admissible at state {}", self.state)))
        };
        let (i, j) = (find(first)?, find(second)?);
        Ok(self.step_index(i, j))
    }

    /// Panics if either index is out of range.
    pub fn step_index(&mut self, i: usize, j: usize) -> GameStepRecord {
        let m = self.model;
        let s = self.state;
        let e = m.entry(s, i, j);
        let mut n_ask = [0u8; 2];
        let mut n_bid = [0u8; 2];
        let mut rewards = [0.0; 2];
        for k in 0..2 {
            n_ask[k] = u8::from(self.fill_rngs[k][0].gen::<f64>() < e.fills[k][0]);
            n_bid[k] = u8::from(self.fill_rngs[k][1].gen::<f64>() < e.fills[k][1]);
            rewards[k] = game_reward_given_outcome(&m.params, m.price_index(s), e.quotes[k], n_ask[k], n_bid[k]);
        }
        let next = draw(&mut self.price_rng, &e.kernel);
        let rec = GameStepRecord {
            step: self.steps,
            state: s,
            quotes: e.quotes,
            n_ask,
            n_bid,
            next_state: next,
            rewards,
        };
        self.state = next;
        self.steps += 1;
        rec
    }
}
