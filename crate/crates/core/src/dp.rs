//! Exact dynamic programming on the discrete model and the continuous-time
//! optimality residual.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    available_actions, build_discrete_model, expected_stage_rate, Action, DiscreteModel, ModelParams, State,
};
use crate::table::{Cell, Table};

/// Value per state, indexed by state id.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValueTable {
    pub values: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(n: usize) -> Self {
        ValueTable { values: vec![0.0; n] }
    }

    pub fn sup_distance(&self, other: &ValueTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

/// Deterministic stationary policy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Policy {
    pub actions: Vec<Action>,
}

/// Tabular action values with a ragged action dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(model: &DiscreteModel, init: f64) -> Self {
        Self::with_shape(model.actions.iter().map(Vec::len), init)
    }

    /// One row per item of `action_counts`.
    pub fn with_shape(action_counts: impl IntoIterator<Item = usize>, init: f64) -> Self {
        let mut offsets = Vec::new();
        let mut n = 0;
        for len in action_counts {
            offsets.push(n);
            n += len;
        }
        offsets.push(n);
        QTable {
            offsets,
            values: vec![init; n],
        }
    }

    pub fn n_states(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[self.offsets[s]..self.offsets[s + 1]]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        let (lo, hi) = (self.offsets[s], self.offsets[s + 1]);
        &mut self.values[lo..hi]
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.row(s)[a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.row_mut(s)[a] = v;
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action index; the lowest index wins ties.
    pub fn argmax(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn values(&self) -> ValueTable {
        ValueTable {
            values: (0..self.n_states()).map(|s| self.max(s)).collect(),
        }
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn greedy_policy(&self, model: &DiscreteModel) -> Policy {
        Policy {
            actions: (0..self.n_states())
                .map(|s| model.actions[s][self.argmax(s)].action)
                .collect(),
        }
    }
}

/// Index of the first maximal entry.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub values: ValueTable,
    pub policy: Policy,
    pub q: QTable,
    pub iterations: usize,
    /// Bellman residual of `values`, recomputed after the loop.
    pub residual: f64,
}

/// `max_s |V(s) - max_a (f Δ + e^{-γΔ} Σ p V)|`.
pub fn bellman_residual(model: &DiscreteModel, v: &ValueTable) -> f64 {
    (0..model.n_states())
        .map(|s| {
            let best = (0..model.actions[s].len())
                .map(|a| model.backup(s, a, &v.values))
                .fold(f64::NEG_INFINITY, f64::max);
            (v.values[s] - best).abs()
        })
        .fold(0.0, f64::max)
}

/// Value iteration from `V = 0`.
///
/// Stops once `γ_d/(1-γ_d) * ||V_{n+1} - V_n||` drops to `tol`, which bounds
/// both the distance to the fixed point and the Bellman residual of the
/// returned table by `tol`.
pub fn value_iteration(model: &DiscreteModel, tol: f64, max_iter: usize) -> Result<Solution> {
    if !(tol > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {tol}")));
    }
    let n = model.n_states();
    let g = model.discount;
    let scale = g / (1.0 - g);
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut last = f64::INFINITY;
    for it in 1..=max_iter {
        for s in 0..n {
            next[s] = (0..model.actions[s].len())
                .map(|a| model.backup(s, a, &v))
                .fold(f64::NEG_INFINITY, f64::max);
        }
        let diff = v
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        last = diff * scale;
        if last <= tol {
            return Ok(finish(model, v, it));
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: last,
    })
}

fn finish(model: &DiscreteModel, v: Vec<f64>, iterations: usize) -> Solution {
    let mut q = QTable::new(model, 0.0);
    for s in 0..model.n_states() {
        for a in 0..model.actions[s].len() {
            q.set(s, a, model.backup(s, a, &v));
        }
    }
    let values = ValueTable { values: v };
    let residual = bellman_residual(model, &values);
    Solution {
        policy: q.greedy_policy(model),
        values,
        q,
        iterations,
        residual,
    }
}

/// Continuous-time generator transitions of `(s, a)`: `(next state, rate)`.
pub fn generator_transitions(params: &ModelParams, s: State, a: Action) -> Result<Vec<(State, f64)>> {
    let q = params.price_rates.for_action(&a)?;
    let i = s.price_index - 1;
    let mut out = Vec::with_capacity(4);
    if q.up(i) > 0.0 {
        out.push((State::new(s.price_index + 1, s.inventory), q.up(i)));
    }
    if q.down(i) > 0.0 {
        out.push((State::new(s.price_index - 1, s.inventory), q.down(i)));
    }
    let x = params.mid_price(s.price_index);
    if let Some(l) = a.ask {
        out.push((
            State::new(s.price_index, s.inventory - 1),
            params.intensity(params.quote_price(l) - x),
        ));
    }
    if let Some(l) = a.bid {
        out.push((
            State::new(s.price_index, s.inventory + 1),
            params.intensity(x - params.quote_price(l)),
        ));
    }
    Ok(out)
}

/// `max_s |γ V(s) - max_a (f(s,a) + Σ_{s'≠s} λ_{s'} V(s') - λ V(s))|`.
pub fn hjb_residual(params: &ModelParams, v: &ValueTable) -> Result<f64> {
    if v.values.len() != params.n_states() {
        return Err(Error::domain(format!(
            "value table has {} entries, model has {} states",
            v.values.len(),
            params.n_states()
        )));
    }
    let mut worst: f64 = 0.0;
    for (sid, s) in params.states().into_iter().enumerate() {
        let here = v.values[sid];
        let mut best = f64::NEG_INFINITY;
        for a in available_actions(params, s)? {
            let mut rhs = expected_stage_rate(params, s, a)?;
            for (next, rate) in generator_transitions(params, s, a)? {
                rhs += rate * (v.values[params.state_id(next)?] - here);
            }
            best = best.max(rhs);
        }
        worst = worst.max((params.discount_rate * here - best).abs());
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub dt: f64,
    pub solution: Solution,
    pub sup_dist_to_ref: f64,
    pub policy_identical: bool,
    pub hjb_residual: f64,
}

/// Solutions over a grid of step sizes, largest step first.
#[derive(Clone, Debug)]
pub struct SweepReport {
    pub params: ModelParams,
    pub rows: Vec<SweepRow>,
}

/// Solve every grid point; the smallest step is the reference.
pub fn delta_sweep(params: &ModelParams, dt_grid: &[f64], tol: f64, max_iter: usize) -> Result<SweepReport> {
    if dt_grid.is_empty() {
        return Err(Error::domain("empty step-size grid"));
    }
    let mut grid = dt_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    let solved: Vec<(f64, Solution, f64)> = grid
        .par_iter()
        .map(|&dt| {
            let model = build_discrete_model(params, dt)?;
            let sol = value_iteration(&model, tol, max_iter)?;
            let res = hjb_residual(params, &sol.values)?;
            Ok((dt, sol, res))
        })
        .collect::<Result<_>>()?;
    let (reference_v, reference_pi) = {
        let last = &solved[solved.len() - 1].1;
        (last.values.clone(), last.policy.clone())
    };
    let rows = solved
        .into_iter()
        .map(|(dt, solution, hjb)| SweepRow {
            dt,
            sup_dist_to_ref: solution.values.sup_distance(&reference_v),
            policy_identical: solution.policy == reference_pi,
            hjb_residual: hjb,
            solution,
        })
        .collect();
    Ok(SweepReport {
        params: params.clone(),
        rows,
    })
}

impl SweepReport {
    pub fn reference(&self) -> &SweepRow {
        &self.rows[self.rows.len() - 1]
    }

    /// Least-squares slope of `log(error)` against `log(dt)` over the
    /// non-reference rows with positive error.
    pub fn convergence_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.rows[..self.rows.len() - 1]
            .iter()
            .filter(|r| r.sup_dist_to_ref > 0.0)
            .map(|r| (r.dt.ln(), r.sup_dist_to_ref.ln()))
            .collect();
        least_squares_slope(&pts)
    }

    /// CSV layout: one row per (dt, state).
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&[
            "dt",
            "state_id",
            "v_star",
            "policy_ask",
            "policy_bid",
            "sup_dist_to_ref",
            "policy_identical",
            "hjb_residual",
        ]);
        for row in &self.rows {
            for (sid, (&v, a)) in row
                .solution
                .values
                .values
                .iter()
                .zip(&row.solution.policy.actions)
                .enumerate()
            {
                t.push(vec![
                    Cell::Float(row.dt),
                    Cell::Int(sid as i64),
                    Cell::Float(v),
                    a.ask.map_or(Cell::Empty, |l| Cell::Float(self.params.quote_price(l))),
                    a.bid.map_or(Cell::Empty, |l| Cell::Float(self.params.quote_price(l))),
                    Cell::Float(row.sup_dist_to_ref),
                    Cell::Bool(row.policy_identical),
                    Cell::Float(row.hjb_residual),
                ]);
            }
        }
        t
    }
}

pub fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
