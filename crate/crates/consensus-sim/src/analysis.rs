//! Run post-processing: consensus detection, topology-window condition
//! checks, and the closed-form group value for the fixed synchronous case.

use crate::dynamics::RunOutput;
use crate::graph::DirectedWeightedGraph;
use crate::matrices::{
    normalize_weights, sia_budget, stationary_vector, StochasticMatrix, SIA_TOL,
};
use crate::scenario::Scenario;
use crate::scheduler::GlobalEventSequence;
use crate::{real, Error, Real, Result};

/// Max-min disagreement of a state vector.
pub fn spread<S: Real>(x: &[S]) -> S {
    let mut lo = S::infinity();
    let mut hi = S::neg_infinity();
    for &v in x {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if x.is_empty() {
        S::zero()
    } else {
        hi - lo
    }
}

/// Earliest event time after which the disagreement stays below `tol` at
/// every remaining event and at the horizon. `None` if the run never
/// settles.
pub fn detect_consensus<S: Real>(run: &RunOutput<S>, tol: S) -> Option<S> {
    if tol <= S::zero() {
        return None;
    }
    let spreads: Vec<S> = run.event_states.iter().map(|x| spread(x)).collect();
    let final_ok = spread(run.final_state()) < tol;
    if !final_ok {
        return None;
    }
    // walk backwards to find the last event whose spread breaks tolerance
    let mut settle = 0usize;
    for (k, &s) in spreads.iter().enumerate() {
        if s >= tol {
            settle = k + 1;
        }
    }
    if settle >= run.events.times.len() {
        None
    } else {
        Some(run.events.times[settle])
    }
}

/// Outcome of the rolling-window union test.
#[derive(Debug, Clone)]
pub struct UnionCheck<S> {
    pub holds: bool,
    /// First failing window `[start, start + window)`, when any.
    pub witness: Option<(S, S)>,
}

/// The communication graph in force at time `t`: for each agent, the edges
/// of the reception set of its latest update at or before `t`.
fn active_graph_at<S: Real>(scenario: &Scenario<S>, t: S) -> Result<DirectedWeightedGraph<S>> {
    let n = scenario.n;
    let mut weights = vec![S::zero(); n * n];
    for i in 0..n {
        if let Some(k) = scenario.schedules[i].latest_update_at(t) {
            for j in scenario.received(i, k) {
                weights[i * n + j] = scenario.graph.weight(i, j);
            }
        }
    }
    DirectedWeightedGraph::new(n, weights)
}

/// Union of the communication graphs in force over `[t0, t0 + window)`.
fn window_union<S: Real>(
    scenario: &Scenario<S>,
    t0: S,
    window: S,
) -> Result<DirectedWeightedGraph<S>> {
    let n = scenario.n;
    let mut weights = vec![S::zero(); n * n];
    let end = t0 + window;
    for i in 0..n {
        let times = &scenario.schedules[i].times;
        for (k, &t_k) in times.iter().enumerate() {
            // interval of validity of update k: [t_k, t_{k+1}), the final
            // one extending indefinitely
            if t_k >= end {
                break;
            }
            if let Some(&t_next) = times.get(k + 1) {
                if t_next <= t0 {
                    continue;
                }
            }
            for j in scenario.received(i, k) {
                weights[i * n + j] = scenario.graph.weight(i, j);
            }
        }
    }
    DirectedWeightedGraph::new(n, weights)
}

/// True iff the union of the communication graphs over every length-`window`
/// interval starting at an event time within the horizon has a spanning
/// tree. Reports the first failing window otherwise.
pub fn check_union_condition<S: Real>(scenario: &Scenario<S>, window: S) -> Result<UnionCheck<S>> {
    if window <= S::zero() {
        return Err(Error::InvalidParameter(format!(
            "window {window} must be positive"
        )));
    }
    let tol = S::pattern_tol();
    let events = scenario.merged_events();
    // the active graph only changes at event times, so this grid of window
    // starts is exhaustive
    for &t0 in &events.times {
        if t0 + window > scenario.horizon + tol {
            break;
        }
        let union = window_union(scenario, t0, window)?;
        if union.has_spanning_tree().is_none() {
            return Ok(UnionCheck {
                holds: false,
                witness: Some((t0, t0 + window)),
            });
        }
    }
    Ok(UnionCheck {
        holds: true,
        witness: None,
    })
}

/// Block condition over the merged event sequence: split the events after
/// `t_0` into consecutive blocks of `eps`, keep within each block only the
/// events whose following gap is at least `tau_v`, and require the union of
/// the graphs active at the kept events to have a spanning tree. Keeping
/// every admissible event makes the union maximal, so the subset search is
/// exact.
pub fn check_equivalent_condition<S: Real>(
    events: &GlobalEventSequence<S>,
    scenario: &Scenario<S>,
    eps: usize,
    tau_v: S,
) -> Result<bool> {
    if eps == 0 {
        return Err(Error::InvalidParameter("eps must be at least 1".into()));
    }
    if tau_v <= S::zero() {
        return Err(Error::InvalidParameter(format!(
            "tau_v {tau_v} must be positive"
        )));
    }
    let n = scenario.n;
    let times = &events.times;
    let mut block_start = 1usize;
    // only full blocks whose every event has a known following gap count;
    // the terminal event's gap is cut off by the horizon
    while block_start + eps < times.len() {
        let mut weights = vec![S::zero(); n * n];
        let mut any = false;
        for s in block_start..block_start + eps {
            // only events followed by a gap of at least tau_v admit the
            // persistence argument
            if times[s + 1] - times[s] < tau_v {
                continue;
            }
            let g = active_graph_at(scenario, times[s])?;
            for (w, &v) in weights.iter_mut().zip(g.weights()) {
                *w = w.max(v);
            }
            any = true;
        }
        if !any {
            return Ok(false);
        }
        let union = DirectedWeightedGraph::new(n, weights)?;
        if union.has_spanning_tree().is_none() {
            return Ok(false);
        }
        block_start += eps;
    }
    Ok(true)
}

/// Normalized weight matrix of the full graph (every neighbor heard).
pub fn full_reception_matrix<S: Real>(g: &DirectedWeightedGraph<S>) -> Result<StochasticMatrix<S>> {
    let n = g.n();
    let mut entries = Vec::with_capacity(n * n);
    for i in 0..n {
        let received = g.neighbors(i)?;
        entries.extend(normalize_weights(g, &received, i)?);
    }
    StochasticMatrix::new(n, entries)
}

/// The consensus value of the fixed synchronous system: the stationary
/// vector of the normalized weight matrix applied to the initial state.
/// Errors when the matrix fails SIA certification, in which case no single
/// group value exists.
pub fn predicted_group_value<S: Real>(g: &DirectedWeightedGraph<S>, x0: &[S]) -> Result<S> {
    if x0.len() != g.n() {
        return Err(Error::DimensionMismatch(format!(
            "state length {} vs {} agents",
            x0.len(),
            g.n()
        )));
    }
    let a = full_reception_matrix(g)?;
    if !crate::matrices::is_sia(&a, sia_budget(a.n()), real(SIA_TOL)) {
        return Err(Error::SiaCertification);
    }
    let f = stationary_vector(&a, real(1e-13))?;
    Ok(f.iter().zip(x0).map(|(&fi, &xi)| fi * xi).sum())
}
