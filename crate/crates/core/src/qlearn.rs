//! Tabular Q-learning with a polynomial learning rate and a per-state
//! epsilon-greedy schedule, plus sample-complexity measurement.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dp::{argmax, Policy, QTable, ValueTable};
use crate::env::{stream, substream, MarketEnv};
use crate::error::{Error, Result};
use crate::model::{DiscreteModel, ModelParams, State};
use crate::table::{Cell, Table};

/// Anything a tabular learner can interact with one transition at a time.
pub trait TabularEnv {
    fn n_states(&self) -> usize;
    fn n_actions(&self, s: usize) -> usize;
    fn current(&self) -> usize;
    /// Apply action index `a` in the current state; returns `(reward, next)`.
    fn act(&mut self, a: usize) -> (f64, usize);
}

impl TabularEnv for MarketEnv<'_> {
    fn n_states(&self) -> usize {
        self.model().n_states()
    }
    fn n_actions(&self, s: usize) -> usize {
        self.model().actions[s].len()
    }
    fn current(&self) -> usize {
        self.state_id()
    }
    fn act(&mut self, a: usize) -> (f64, usize) {
        let rec = self.step_index(a);
        (rec.reward, self.state_id())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    /// Learning-rate exponent, in (1/2, 1).
    pub omega: f64,
    /// Initial value of every Q entry.
    pub q_init: f64,
    pub eps_floor: f64,
    pub eps_rho0: f64,
    pub eps_rho: f64,
    /// State visits per exploration epoch.
    pub eps_epoch: u64,
    pub step_budget: u64,
    /// Start state; defaults to the middle mid-price with zero inventory.
    #[serde(default)]
    pub initial_state: Option<State>,
    /// Steps between learning-curve checkpoints; defaults to
    /// `ceil(step_budget / 1000)`.
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.5 && self.omega < 1.0) {
            return Err(Error::params(format!("omega must lie in (0.5, 1), got {}", self.omega)));
        }
        if !(self.eps_floor > 0.0 && self.eps_floor <= 1.0) {
            return Err(Error::params(format!("eps_floor must lie in (0, 1], got {}", self.eps_floor)));
        }
        if !(self.eps_rho0 >= 0.0 && self.eps_rho0 <= 1.0) {
            return Err(Error::params(format!("eps_rho0 must lie in [0, 1], got {}", self.eps_rho0)));
        }
        if !(self.eps_rho > 0.0 && self.eps_rho < 1.0) {
            return Err(Error::params(format!("eps_rho must lie in (0, 1), got {}", self.eps_rho)));
        }
        if self.eps_epoch == 0 {
            return Err(Error::params("eps_epoch must be positive"));
        }
        if !self.q_init.is_finite() {
            return Err(Error::params("q_init must be finite"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::params("checkpoint_every must be positive"));
        }
        Ok(())
    }

    pub fn checkpoint_every(&self) -> u64 {
        self.checkpoint_every
            .unwrap_or_else(|| self.step_budget.div_ceil(1000).max(1))
    }

    pub fn start_state(&self, params: &ModelParams) -> State {
        self.initial_state
            .unwrap_or_else(|| State::new(params.n_price_levels, 0))
    }
}

/// `max(eps_floor, rho0 * rho^floor(N/M))`, `N` = prior visits to the state.
pub fn epsilon_value(config: &LearnerConfig, state_visits: u64) -> f64 {
    epoch_decay(config.eps_rho0, config.eps_rho, config.eps_epoch, state_visits).max(config.eps_floor)
}

/// `start * ratio^floor(visits / epoch)`.
pub fn epoch_decay(start: f64, ratio: f64, epoch: u64, visits: u64) -> f64 {
    let epochs = visits / epoch;
    if ratio == 1.0 {
        start
    } else if epochs > i32::MAX as u64 {
        0.0
    } else {
        start * ratio.powi(epochs as i32)
    }
}

/// `N^{-omega}`, where `N` is one plus the prior visits to the pair.
pub fn learning_rate(omega: f64, sa_visits: u64) -> Result<f64> {
    if sa_visits < 1 {
        return Err(Error::domain("visit count for the learning rate must be at least 1"));
    }
    Ok((sa_visits as f64).powf(-omega))
}

/// One temporal-difference update of `Q(s, a)`.
pub fn q_update(q: &mut QTable, s: usize, a: usize, reward: f64, s_next: usize, beta: f64, discount: f64) {
    let old = q.get(s, a);
    let target = reward + discount * q.max(s_next);
    q.set(s, a, old + beta * (target - old));
}

/// Visit counters. `state[s]` counts raw visits (feeds epsilon);
/// `pair[s][a]` counts raw visits, and the learning rate uses one plus it.
#[derive(Clone, Debug)]
pub struct VisitCounts {
    pub state: Vec<u64>,
    pub pair: Vec<Vec<u64>>,
}

impl VisitCounts {
    fn new<E: TabularEnv>(env: &E) -> Self {
        VisitCounts {
            state: vec![0; env.n_states()],
            pair: (0..env.n_states()).map(|s| vec![0; env.n_actions(s)]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub sup_error: f64,
    pub policy_match: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["step", "sup_error", "policy_match"]);
        for p in &self.points {
            t.push(vec![
                Cell::Int(p.step as i64),
                Cell::Float(p.sup_error),
                Cell::Bool(p.policy_match),
            ]);
        }
        t
    }

    pub fn last(&self) -> Option<&CurvePoint> {
        self.points.last()
    }
}

/// Reference solution the learner is scored against.
#[derive(Clone, Copy, Debug)]
pub struct Reference<'a> {
    pub values: &'a ValueTable,
    /// Optimal action index per state.
    pub policy: &'a [usize],
}

#[derive(Clone, Debug)]
pub struct LearningOutcome {
    pub q: QTable,
    pub curve: LearningCurve,
    pub visits: VisitCounts,
    /// First step count at which the error met the threshold.
    pub first_hit: Option<u64>,
    pub steps: u64,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub threshold: Option<f64>,
    pub stop_at_threshold: bool,
    pub record_curve: bool,
}

fn q_shape<E: TabularEnv>(env: &E, init: f64) -> QTable {
    QTable::with_shape((0..env.n_states()).map(|s| env.n_actions(s)), init)
}

/// Core interaction loop over any tabular environment.
pub fn learn<E: TabularEnv>(
    env: &mut E,
    discount: f64,
    config: &LearnerConfig,
    seed: u64,
    reference: Option<Reference<'_>>,
    opts: &RunOptions,
) -> Result<LearningOutcome> {
    config.validate()?;
    let mut q = q_shape(env, config.q_init);
    learn_from(env, discount, config, seed, reference, opts, &mut q).map(|(curve, visits, first_hit, steps)| LearningOutcome {
        q,
        curve,
        visits,
        first_hit,
        steps,
    })
}

type LoopResult = (LearningCurve, VisitCounts, Option<u64>, u64);

fn learn_from<E: TabularEnv>(
    env: &mut E,
    discount: f64,
    config: &LearnerConfig,
    seed: u64,
    reference: Option<Reference<'_>>,
    opts: &RunOptions,
    q: &mut QTable,
) -> Result<LoopResult> {
    let n_states = env.n_states();
    let mut explore: ChaCha8Rng = substream(seed, stream::EXPLORE);
    let mut pick: ChaCha8Rng = substream(seed, stream::ACTION);
    let mut visits = VisitCounts::new(env);
    let mut curve = LearningCurve::default();
    let every = config.checkpoint_every();

    let mut errors: Vec<f64> = match reference {
        Some(r) => {
            if r.values.values.len() != n_states {
                return Err(Error::domain("reference value table has the wrong size"));
            }
            (0..n_states).map(|s| (q.max(s) - r.values.values[s]).abs()).collect()
        }
        None => Vec::new(),
    };
    let sup = |e: &[f64]| e.iter().copied().fold(0.0, f64::max);
    let mut sup_error = sup(&errors);

    let checkpoint = |curve: &mut LearningCurve, q: &QTable, step: u64, sup_error: f64| {
        if let Some(r) = reference {
            let matches = (0..n_states).all(|s| argmax(q.row(s)) == r.policy[s]);
            curve.points.push(CurvePoint {
                step,
                sup_error,
                policy_match: matches,
            });
        }
    };

    let mut first_hit = match (reference, opts.threshold) {
        (Some(_), Some(t)) if sup_error <= t => Some(0),
        _ => None,
    };
    if opts.record_curve {
        checkpoint(&mut curve, q, 0, sup_error);
    }
    if first_hit.is_some() && opts.stop_at_threshold {
        return Ok((curve, visits, first_hit, 0));
    }

    let mut steps = 0;
    while steps < config.step_budget {
        let s = env.current();
        let eps = epsilon_value(config, visits.state[s]);
        let n_act = env.n_actions(s);
        let a = if explore.gen::<f64>() < eps {
            pick.gen_range(0..n_act)
        } else {
            q.argmax(s)
        };
        visits.state[s] += 1;
        visits.pair[s][a] += 1;
        let beta = learning_rate(config.omega, visits.pair[s][a])?;
        let (reward, next) = env.act(a);
        q_update(q, s, a, reward, next, beta, discount);
        steps += 1;

        if let Some(r) = reference {
            errors[s] = (q.max(s) - r.values.values[s]).abs();
            sup_error = sup(&errors);
            if first_hit.is_none() && opts.threshold.is_some_and(|t| sup_error <= t) {
                first_hit = Some(steps);
                if opts.stop_at_threshold {
                    break;
                }
            }
        }
        if opts.record_curve && steps % every == 0 {
            checkpoint(&mut curve, q, steps, sup_error);
        }
    }
    if opts.record_curve && curve.last().is_some_and(|p| p.step != steps) {
        checkpoint(&mut curve, q, steps, sup_error);
    }
    Ok((curve, visits, first_hit, steps))
}

fn policy_indices(model: &DiscreteModel, policy: &Policy) -> Result<Vec<usize>> {
    policy
        .actions
        .iter()
        .enumerate()
        .map(|(s, &a)| model.action_index(s, a))
        .collect()
}

/// Q-learning on the market model, optionally logging a learning curve
/// against `(V*, pi*)`.
pub fn run_qlearning(
    model: &DiscreteModel,
    config: &LearnerConfig,
    seed: u64,
    reference: Option<(&ValueTable, &Policy)>,
) -> Result<LearningOutcome> {
    config.validate()?;
    let mut env = MarketEnv::reset(model, seed, config.start_state(&model.params))?;
    let idx = match reference {
        Some((_, pi)) => Some(policy_indices(model, pi)?),
        None => None,
    };
    let r = match (reference, idx.as_deref()) {
        (Some((v, _)), Some(p)) => Some(Reference { values: v, policy: p }),
        _ => None,
    };
    learn(
        &mut env,
        model.discount,
        config,
        seed,
        r,
        &RunOptions {
            threshold: None,
            stop_at_threshold: false,
            record_curve: true,
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SampleComplexity {
    Reached(u64),
    NotReached { budget: u64 },
}

impl SampleComplexity {
    pub fn steps(self) -> Option<u64> {
        match self {
            SampleComplexity::Reached(n) => Some(n),
            SampleComplexity::NotReached { .. } => None,
        }
    }
}

/// First step at which `||max_a Q - V*||_inf <= threshold`.
pub fn measure_sample_complexity(
    model: &DiscreteModel,
    config: &LearnerConfig,
    seed: u64,
    v_star: &ValueTable,
    threshold: f64,
) -> Result<SampleComplexity> {
    if !(threshold > 0.0) {
        return Err(Error::domain(format!("threshold must be positive, got {threshold}")));
    }
    config.validate()?;
    let mut env = MarketEnv::reset(model, seed, config.start_state(&model.params))?;
    // only the value error matters here; any policy works for the flag
    let dummy = vec![0; model.n_states()];
    let out = learn(
        &mut env,
        model.discount,
        config,
        seed,
        Some(Reference {
            values: v_star,
            policy: &dummy,
        }),
        &RunOptions {
            threshold: Some(threshold),
            stop_at_threshold: true,
            record_curve: false,
        },
    )?;
    Ok(match out.first_hit {
        Some(n) => SampleComplexity::Reached(n),
        None => SampleComplexity::NotReached {
            budget: config.step_budget,
        },
    })
}

/// Exponents of `dt` in the two terms of the sample-complexity bound.
pub fn bound_dt_exponents(n_mid_prices: usize, n_inventories: usize, omega: f64) -> (f64, f64) {
    let sz = (n_mid_prices + n_inventories) as f64;
    (
        6.0 - 2.0 / omega - sz * (3.0 + 1.0 / omega),
        (1.0 - sz) / (1.0 - omega),
    )
}

/// Natural log of the two-term sample-complexity bound with every
/// suppressed constant set to one.
pub fn log_complexity_bound(params: &ModelParams, dt: f64, omega: f64, eps_v: f64, eps_floor: f64) -> Result<f64> {
    if !(omega > 0.5 && omega < 1.0) {
        return Err(Error::domain(format!("omega must lie in (0.5, 1), got {omega}")));
    }
    for (name, v) in [("dt", dt), ("eps_v", eps_v), ("eps_floor", eps_floor)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let (nx, ny) = (params.n_mid_prices(), params.n_inventories());
    let n_actions = ((params.n_price_levels + 1) * (params.n_price_levels + 1)) as f64;
    let log_base = ((nx + ny) as f64 * n_actions / eps_floor).ln();
    let gamma = params.discount_rate.ln();
    let (e1, e2) = bound_dt_exponents(nx, ny, omega);
    let t1 = (3.0 + 1.0 / omega) * log_base - 2.0 / omega * eps_v.ln() - 4.0 / omega * gamma + e1 * dt.ln();
    let t2 = log_base / (1.0 - omega) - gamma / (1.0 - omega) + e2 * dt.ln();
    let hi = t1.max(t2);
    Ok(hi + ((t1 - hi).exp() + (t2 - hi).exp()).ln())
}

pub fn complexity_bound(params: &ModelParams, dt: f64, omega: f64, eps_v: f64, eps_floor: f64) -> Result<f64> {
    log_complexity_bound(params, dt, omega, eps_v, eps_floor).map(f64::exp)
}
