//! Exact event-driven simulation.
//!
//! Between consecutive updates an agent relaxes toward a fixed target `u`
//! (a convex combination of neighbor readings), so its state follows the
//! closed form `x(t) = u + (x_start - u) e^{-(t - t_start)}` on every
//! segment. No numerical integration is involved; delayed reads evaluate
//! the neighbor trajectory exactly at the requested past instant.

use crate::graph::DirectedWeightedGraph;
use crate::matrices::normalize_weights;
use crate::scenario::{Scenario, Strategy};
use crate::scheduler::{self, GlobalEventSequence};
use crate::{Error, Real, Result};

/// One piece of a piecewise-exponential trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment<S> {
    pub t_start: S,
    pub t_end: S,
    pub x_start: S,
    /// Relaxation target; a constant segment has `target == x_start`.
    pub target: S,
}

impl<S: Real> Segment<S> {
    fn value_at(&self, t: S) -> S {
        self.target + (self.x_start - self.target) * (-(t - self.t_start)).exp()
    }
}

/// Piecewise-exponential state history of one agent, with constant
/// pre-history on `(-inf, 0]`.
#[derive(Debug, Clone)]
pub struct AgentTrajectory<S> {
    pub pre_history: S,
    pub segments: Vec<Segment<S>>,
}

impl<S: Real> AgentTrajectory<S> {
    /// Exact state at time `t`; `t <= 0` yields the pre-history value.
    pub fn evaluate(&self, t: S) -> Result<S> {
        if t <= S::zero() {
            return Ok(self.pre_history);
        }
        let last_end = self.segments.last().map(|s| s.t_end).unwrap_or(S::zero());
        if t > last_end + S::pattern_tol() {
            return Err(Error::BeyondHorizon {
                t: t.to_f64().unwrap_or(f64::NAN),
                horizon: last_end.to_f64().unwrap_or(f64::NAN),
            });
        }
        let idx = match self
            .segments
            .binary_search_by(|s| s.t_start.partial_cmp(&t).unwrap())
        {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        };
        Ok(self.segments[idx].value_at(t))
    }

    /// Evaluation during simulation: the last segment extends indefinitely.
    fn evaluate_open(&self, t: S) -> S {
        if t <= S::zero() || self.segments.is_empty() {
            return self.pre_history;
        }
        let idx = match self
            .segments
            .binary_search_by(|s| s.t_start.partial_cmp(&t).unwrap())
        {
            Ok(k) => k,
            Err(0) => 0,
            Err(k) => k - 1,
        };
        self.segments[idx].value_at(t)
    }
}

/// One neighbor reading used by an update.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadRecord<S> {
    pub neighbor: usize,
    /// Update index of the reader at which this reading arrived.
    pub update_index: usize,
    /// Send time `t_k^i - tau_ij^k`; negative values read the pre-history.
    pub effective_time: S,
    pub value: S,
}

/// The reading with the largest effective (send) time; ties break toward
/// the latest arrival.
pub fn most_recent_data_filter<S: Real>(history: &[ReadRecord<S>]) -> &ReadRecord<S> {
    assert!(!history.is_empty(), "filter needs at least one record");
    history
        .iter()
        .reduce(|best, r| {
            if r.effective_time > best.effective_time
                || (r.effective_time == best.effective_time && r.update_index >= best.update_index)
            {
                r
            } else {
                best
            }
        })
        .unwrap()
}

/// Relaxation target for one update: the normalized-weight combination of
/// the neighbor readings, or `None` when nothing was received (the agent
/// holds its state).
pub fn step_agent<S: Real>(
    i: usize,
    reads: &[ReadRecord<S>],
    g: &DirectedWeightedGraph<S>,
) -> Result<Option<S>> {
    if reads.is_empty() {
        return Ok(None);
    }
    let received: Vec<usize> = reads.iter().map(|r| r.neighbor).collect();
    let row = normalize_weights(g, &received, i)?;
    Ok(Some(reads.iter().map(|r| row[r.neighbor] * r.value).sum()))
}

/// Everything the augmented oracle needs to re-express one update: its
/// time, the readings actually used (post strategy filtering), and the
/// normalized weight row, with `(i, 1)` standing for an idle hold.
#[derive(Debug, Clone)]
pub struct UpdateInfo<S> {
    pub time: S,
    pub reads: Vec<ReadRecord<S>>,
    /// `(source agent, weight)` pairs summing to one.
    pub row: Vec<(usize, S)>,
}

/// Result of the per-interval event-count check against the applicable
/// window bound.
#[derive(Debug, Clone, Copy)]
pub struct IntervalCheck {
    pub max_count: u64,
    pub bound: Option<u64>,
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput<S> {
    pub trajectories: Vec<AgentTrajectory<S>>,
    /// Merged global events restricted to the horizon.
    pub events: GlobalEventSequence<S>,
    /// Full state vector at each event time.
    pub event_states: Vec<Vec<S>>,
    /// Per agent, per update index (updates within the horizon only).
    pub updates: Vec<Vec<UpdateInfo<S>>>,
    pub interval_check: IntervalCheck,
}

impl<S: Real> RunOutput<S> {
    pub fn final_state(&self) -> &[S] {
        self.event_states.last().expect("at least the t = 0 event")
    }
}

/// Simulate a resolved scenario. Deterministic; all reads at an event use
/// trajectory values determined strictly before that event, so the
/// processing order of co-located updates is immaterial.
pub fn run<S: Real>(scenario: &Scenario<S>) -> Result<RunOutput<S>> {
    let n = scenario.n;
    let tol = S::pattern_tol();
    let horizon = scenario.horizon;

    let mut trajectories: Vec<AgentTrajectory<S>> = scenario
        .x0
        .iter()
        .map(|&x| AgentTrajectory {
            pre_history: x,
            segments: Vec::new(),
        })
        .collect();

    // all updates inside the horizon, chronological, ties by agent index
    let mut update_queue: Vec<(S, usize, usize)> = Vec::new();
    for (i, sch) in scenario.schedules.iter().enumerate() {
        for (k, &t) in sch.times.iter().enumerate() {
            if t <= horizon + tol {
                update_queue.push((t, i, k));
            }
        }
    }
    update_queue.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let mut updates: Vec<Vec<UpdateInfo<S>>> = vec![Vec::new(); n];
    let mut history: Vec<Vec<Vec<ReadRecord<S>>>> = vec![vec![Vec::new(); n]; n];

    for &(t, i, k) in &update_queue {
        debug_assert_eq!(updates[i].len(), k);
        let mut chosen: Vec<ReadRecord<S>> = Vec::new();
        for &(j, tau) in &scenario.reads[i][k] {
            let e = t - tau;
            let record = ReadRecord {
                neighbor: j,
                update_index: k,
                effective_time: e,
                value: trajectories[j].evaluate_open(e),
            };
            match scenario.strategy {
                Strategy::Plain => chosen.push(record),
                Strategy::MostRecentData => {
                    history[i][j].push(record);
                    chosen.push(most_recent_data_filter(&history[i][j]).clone());
                }
            }
        }

        let x_now = trajectories[i].evaluate_open(t);
        let (target, row) = match step_agent(i, &chosen, &scenario.graph)? {
            Some(u) => {
                let received: Vec<usize> = chosen.iter().map(|r| r.neighbor).collect();
                let full_row = normalize_weights(&scenario.graph, &received, i)?;
                let row = chosen
                    .iter()
                    .map(|r| (r.neighbor, full_row[r.neighbor]))
                    .collect();
                (u, row)
            }
            None => (x_now, vec![(i, S::one())]),
        };

        if let Some(prev) = trajectories[i].segments.last_mut() {
            prev.t_end = t;
        }
        trajectories[i].segments.push(Segment {
            t_start: t,
            t_end: horizon,
            x_start: x_now,
            target,
        });
        updates[i].push(UpdateInfo {
            time: t,
            reads: chosen,
            row,
        });
    }

    for tr in &mut trajectories {
        if let Some(last) = tr.segments.last_mut() {
            last.t_end = last.t_end.max(horizon);
        }
    }

    // merged event sequence, trimmed to the horizon
    let full = scenario.merged_events();
    let cut = full
        .times
        .iter()
        .position(|&t| t > horizon + tol)
        .unwrap_or(full.times.len());
    let events = GlobalEventSequence {
        times: full.times[..cut].to_vec(),
        annotations: full.annotations[..cut].to_vec(),
    };

    let event_states = events
        .times
        .iter()
        .map(|&t| {
            trajectories
                .iter()
                .map(|tr| tr.evaluate(t))
                .collect::<Result<Vec<S>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let interval_check = match scenario.interval_bound() {
        Some(bound) => {
            let (max_count, violations) =
                scheduler::check_interval_counts(&scenario.schedules, &events, bound);
            IntervalCheck {
                max_count,
                bound: Some(bound),
                violations,
            }
        }
        None => IntervalCheck {
            max_count: 0,
            bound: None,
            violations: 0,
        },
    };

    Ok(RunOutput {
        trajectories,
        events,
        event_states,
        updates,
        interval_check,
    })
}
