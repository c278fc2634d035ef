//! Block companion-form reformulation of a simulated run.
//!
//! Each consecutive event pair `(t_k, t_{k+1})` is advanced by a stochastic
//! block matrix: the first block row carries `e^{-h}` on the current state
//! plus `(1 - e^{-h})` times normalized weights placed in the window slot
//! matching each read's effective time; sub-diagonal identity blocks shift
//! the window. Iterating these matrices from the stacked initial state is
//! an independent reconstruction of the simulator's event states.

use std::collections::VecDeque;
use std::ops::Range;

use crate::dynamics::RunOutput;
use crate::matrices::{lambda, left_product, StochasticMatrix};
use crate::{real, Error, Real, Result};

/// The event-advance matrix `pi(h, A_1..A_m)` in compressed form: only the
/// first block row is stored, as per-agent `(slot, source, weight)` triples
/// with weights summing to one. Slots are 1-based; slot `s` addresses the
/// window entry `x(t_{k-s+1})`.
#[derive(Debug, Clone)]
pub struct PiMatrix<S> {
    n: usize,
    m: usize,
    h: S,
    rows: Vec<Vec<(usize, usize, S)>>,
}

impl<S: Real> PiMatrix<S> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> S {
        self.h
    }

    pub fn from_rows(n: usize, m: usize, h: S, rows: Vec<Vec<(usize, usize, S)>>) -> Result<Self> {
        if h <= S::zero() {
            return Err(Error::InvalidParameter(format!(
                "step h = {h} must be positive"
            )));
        }
        if rows.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} rows, got {}",
                rows.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            let mut sum = S::zero();
            for &(slot, j, w) in row {
                if slot == 0 || slot > m || j >= n {
                    return Err(Error::DimensionMismatch(format!(
                        "row {i}: slot {slot} / source {j} out of range"
                    )));
                }
                if w < S::zero() {
                    return Err(Error::NotStochastic(format!(
                        "row {i}: negative weight {w}"
                    )));
                }
                sum = sum + w;
            }
            if (sum - S::one()).abs() > real(1e-10) {
                return Err(Error::NotStochastic(format!(
                    "row {i} weights sum to {sum}"
                )));
            }
        }
        Ok(Self { n, m, h, rows })
    }

    /// Build from explicit dense blocks `A_1..A_m` (row-major, `n x n`
    /// each). The block sum must be stochastic.
    pub fn build_pi(h: S, n: usize, blocks: &[Vec<S>]) -> Result<Self> {
        let m = blocks.len();
        if m == 0 || blocks.iter().any(|b| b.len() != n * n) {
            return Err(Error::DimensionMismatch("blocks must be n x n".into()));
        }
        let mut sum = vec![S::zero(); n * n];
        for b in blocks {
            for (s, &v) in sum.iter_mut().zip(b) {
                *s = *s + v;
            }
        }
        StochasticMatrix::new(n, sum)?;
        let rows = (0..n)
            .map(|i| {
                let mut row = Vec::new();
                for (s, b) in blocks.iter().enumerate() {
                    for j in 0..n {
                        let w = b[i * n + j];
                        if w > S::zero() {
                            row.push((s + 1, j, w));
                        }
                    }
                }
                row
            })
            .collect();
        Self::from_rows(n, m, h, rows)
    }

    /// Dense `A_s` blocks (block sum is the event's normalized weight
    /// pattern).
    pub fn blocks(&self) -> Vec<Vec<S>> {
        let mut blocks = vec![vec![S::zero(); self.n * self.n]; self.m];
        for (i, row) in self.rows.iter().enumerate() {
            for &(slot, j, w) in row {
                blocks[slot - 1][i * self.n + j] = blocks[slot - 1][i * self.n + j] + w;
            }
        }
        blocks
    }

    /// Assembled `mn x mn` stochastic matrix.
    pub fn assemble(&self) -> Result<StochasticMatrix<S>> {
        let (n, m) = (self.n, self.m);
        let dim = n * m;
        let decay = (-self.h).exp();
        let gain = S::one() - decay;
        let mut entries = vec![S::zero(); dim * dim];
        for (i, row) in self.rows.iter().enumerate() {
            entries[i * dim + i] = decay;
            for &(slot, j, w) in row {
                let col = (slot - 1) * n + j;
                entries[i * dim + col] = entries[i * dim + col] + gain * w;
            }
        }
        for s in 1..m {
            for j in 0..n {
                entries[(s * n + j) * dim + (s - 1) * n + j] = S::one();
            }
        }
        StochasticMatrix::new(dim, entries)
    }

    /// New first block for a window `[x(t_k), x(t_{k-1}), ...]`.
    pub fn apply_window(&self, window: &VecDeque<Vec<S>>) -> Vec<S> {
        debug_assert_eq!(window.len(), self.m);
        let decay = (-self.h).exp();
        let gain = S::one() - decay;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let combo: S = row
                    .iter()
                    .map(|&(slot, j, w)| w * window[slot - 1][j])
                    .sum();
                decay * window[0][i] + gain * combo
            })
            .collect()
    }
}

/// Where one first-block coefficient of an event matrix points.
enum SlotRef {
    Event(usize),
    PreHistory,
}

/// First-block coefficients for every agent at event `k`, before slot
/// assignment.
fn event_row_refs<S: Real>(run: &RunOutput<S>, k: usize) -> Result<Vec<Vec<(SlotRef, usize, S)>>> {
    let t_k = run.events.times[k];
    let tol = S::pattern_tol();
    run.updates
        .iter()
        .enumerate()
        .map(|(i, ups)| {
            // governing update: the latest one at or before t_k
            let s = ups.partition_point(|u| u.time <= t_k + tol);
            if s == 0 {
                return Err(Error::InvalidParameter(format!(
                    "agent {i} has no update before event {k}"
                )));
            }
            let info = &ups[s - 1];
            if info.reads.is_empty() {
                // idle hold: full weight on the agent's own state at its
                // governing update time
                let r = run
                    .events
                    .index_of(info.time)
                    .map(SlotRef::Event)
                    .unwrap_or(SlotRef::PreHistory);
                return Ok(vec![(r, i, S::one())]);
            }
            info.reads
                .iter()
                .map(|read| {
                    let w = info
                        .row
                        .iter()
                        .find(|&&(j, _)| j == read.neighbor)
                        .map(|&(_, w)| w)
                        .ok_or_else(|| {
                            Error::InvalidParameter(format!(
                                "read from {} missing in weight row of agent {i}",
                                read.neighbor
                            ))
                        })?;
                    let slot = if read.effective_time <= tol {
                        SlotRef::PreHistory
                    } else {
                        match run.events.index_of(read.effective_time) {
                            Some(r) => SlotRef::Event(r),
                            None => {
                                return Err(Error::InvalidParameter(format!(
                                    "read time {} of agent {i} is not an event",
                                    read.effective_time
                                )))
                            }
                        }
                    };
                    Ok((slot, read.neighbor, w))
                })
                .collect()
        })
        .collect()
}

/// Smallest window depth covering every read of the run. The theoretical
/// bound `m_hat` always suffices; the empirical depth keeps the matrices
/// small.
pub fn required_window<S: Real>(run: &RunOutput<S>) -> Result<usize> {
    let mut m = 1usize;
    for k in 0..run.events.times.len().saturating_sub(1) {
        for row in event_row_refs(run, k)? {
            for (slot, _, _) in row {
                let lookback = match slot {
                    SlotRef::Event(r) => k - r + 1,
                    SlotRef::PreHistory => k + 1,
                };
                m = m.max(lookback);
            }
        }
    }
    Ok(m)
}

/// Re-express a run as the event-advance matrices acting on windows of
/// depth `m`. Produces one matrix per consecutive event pair.
pub fn decompose_run<S: Real>(run: &RunOutput<S>, m: usize) -> Result<Vec<PiMatrix<S>>> {
    (0..run.events.times.len().saturating_sub(1))
        .map(|k| event_pi(run, k, m))
        .collect()
}

fn event_pi<S: Real>(run: &RunOutput<S>, k: usize, m: usize) -> Result<PiMatrix<S>> {
    let h = run.events.times[k + 1] - run.events.times[k];
    let rows = event_row_refs(run, k)?
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(slot, j, w)| {
                    let s = match slot {
                        SlotRef::Event(r) => k - r + 1,
                        // the initial window repeats x(0), so any
                        // pre-history read maps to the deepest slot while
                        // that slot is still virtual
                        SlotRef::PreHistory => {
                            if k + 1 > m {
                                return Err(Error::WindowTooSmall {
                                    m,
                                    event: k,
                                    lookback: k + 1,
                                });
                            }
                            m
                        }
                    };
                    if s == 0 || s > m {
                        return Err(Error::WindowTooSmall {
                            m,
                            event: k,
                            lookback: s,
                        });
                    }
                    Ok((s, j, w))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    PiMatrix::from_rows(run.updates.len(), m, h, rows)
}

#[derive(Debug, Clone)]
pub struct OracleOutput<S> {
    pub m: usize,
    pub times: Vec<S>,
    /// First window block at each event: the reconstructed `x(t_k)`.
    pub states: Vec<Vec<S>>,
    /// Running max/min over the whole stacked window at each event.
    pub window_max: Vec<S>,
    pub window_min: Vec<S>,
}

/// Iterate the window recursion from the stacked initial state (`x(0)`
/// repeated `m` times). `m = None` uses the empirically required depth.
pub fn oracle_run<S: Real>(run: &RunOutput<S>, m: Option<usize>) -> Result<OracleOutput<S>> {
    let m = match m {
        Some(m) => m.max(required_window(run)?),
        None => required_window(run)?,
    };
    let x0 = run
        .event_states
        .first()
        .ok_or_else(|| Error::InvalidParameter("run has no events".into()))?
        .clone();
    let mut window: VecDeque<Vec<S>> = (0..m).map(|_| x0.clone()).collect();
    let mut states = vec![x0];
    let mut window_max = Vec::new();
    let mut window_min = Vec::new();
    let stats = |w: &VecDeque<Vec<S>>| {
        let mut hi = S::neg_infinity();
        let mut lo = S::infinity();
        for block in w {
            for &v in block {
                hi = hi.max(v);
                lo = lo.min(v);
            }
        }
        (hi, lo)
    };
    let (hi, lo) = stats(&window);
    window_max.push(hi);
    window_min.push(lo);

    for k in 0..run.events.times.len() - 1 {
        let pi = event_pi(run, k, m)?;
        let first = pi.apply_window(&window);
        window.pop_back();
        window.push_front(first.clone());
        states.push(first);
        let (hi, lo) = stats(&window);
        window_max.push(hi);
        window_min.push(lo);
    }
    Ok(OracleOutput {
        m,
        times: run.events.times.clone(),
        states,
        window_max,
        window_min,
    })
}

/// Product-of-window contraction certificate: the bound is the product of
/// the scrambling coefficients of the per-window left products, and it
/// dominates the row disagreement of the total product. Certification
/// requires every window product to be scrambling, which makes the running
/// bound strictly decreasing window over window.
pub fn consensus_certificate<S: Real>(
    pis: &[PiMatrix<S>],
    windows: &[Range<usize>],
) -> Result<(S, bool)> {
    let mut bound = S::one();
    let mut certified = !windows.is_empty();
    for w in windows {
        let assembled = pis[w.clone()]
            .iter()
            .map(PiMatrix::assemble)
            .collect::<Result<Vec<_>>>()?;
        let product = left_product(&assembled)?;
        let lw = lambda(&product);
        bound = bound * lw;
        if lw >= S::one() {
            certified = false;
        }
    }
    Ok((bound, certified))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::delta;
    use crate::scenario::{self, ScheduleSpec, Strategy};
    use approx::assert_abs_diff_eq;

    #[test]
    fn build_pi_single_block_is_eq5_matrix() {
        let a = crate::matrices::tests::example2_normalized();
        let h = 0.7;
        let pi = PiMatrix::build_pi(h, 4, &[a.entries().to_vec()]).unwrap();
        let assembled = pi.assemble().unwrap();
        let decay = (-h).exp();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { decay } else { 0.0 } + (1.0 - decay) * a.get(i, j);
                assert_abs_diff_eq!(assembled.get(i, j), expect, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn build_pi_identity_first_block_shift() {
        let n = 2;
        let ident: Vec<f64> = vec![1., 0., 0., 1.];
        let zero = vec![0.; 4];
        let pi = PiMatrix::build_pi(0.3, n, &[ident, zero.clone(), zero]).unwrap();
        let assembled = pi.assemble().unwrap();
        assert_eq!(assembled.n(), 6);
        // rows are stochastic by construction of the type; first block row
        // references only the current block
        for i in 0..n {
            for col in n..6 {
                assert_eq!(assembled.get(i, col), 0.0);
            }
        }
    }

    #[test]
    fn build_pi_random_split_rows_sum_to_one() {
        let a = crate::matrices::tests::example2_normalized();
        // split the pattern across three blocks by column index
        let n = 4;
        let mut blocks = vec![vec![0.0; n * n]; 3];
        for i in 0..n {
            for j in 0..n {
                blocks[(i + j) % 3][i * n + j] = a.get(i, j);
            }
        }
        let pi = PiMatrix::build_pi(0.4, n, &blocks).unwrap();
        let assembled = pi.assemble().unwrap();
        for i in 0..assembled.n() {
            let s: f64 = assembled.row(i).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn build_pi_rejects_non_stochastic_sum() {
        let bad = vec![vec![0.5, 0.0, 0.0, 0.5]];
        assert!(PiMatrix::build_pi(0.5, 2, &bad).is_err());
        let a = vec![vec![0.5, 0.5, 0.5, 0.5]];
        assert!(PiMatrix::build_pi(-0.1, 2, &a).is_err());
    }

    #[test]
    fn synchronous_no_delay_needs_window_one() {
        let mut cfg = scenario::example_fixed(3);
        cfg.schedule = ScheduleSpec::Synchronous;
        cfg.horizon = 20.0;
        let run = crate::dynamics::run(&cfg.resolve(None).unwrap()).unwrap();
        assert_eq!(required_window(&run).unwrap(), 1);
        let pis = decompose_run(&run, 1).unwrap();
        // each advance matrix is exactly the synchronous closed-form matrix
        let a = crate::matrices::tests::example2_normalized();
        for pi in &pis {
            let assembled = pi.assemble().unwrap();
            let decay = (-pi.h()).exp();
            for i in 0..4 {
                for j in 0..4 {
                    let expect = if i == j { decay } else { 0.0 } + (1.0 - decay) * a.get(i, j);
                    assert_abs_diff_eq!(assembled.get(i, j), expect, epsilon = 1e-13);
                }
            }
        }
    }

    #[test]
    fn oracle_matches_simulator_on_delayed_run() {
        let mut cfg = scenario::example_delay(5, Strategy::Plain, 21);
        cfg.n = 3;
        cfg.weights = vec![0., 1., 1., 1., 0., 0., 0., 1., 0.];
        cfg.initial_state = vec![1., 2., 3.];
        cfg.horizon = 25.0;
        let run = crate::dynamics::run(&cfg.resolve(None).unwrap()).unwrap();
        let oracle = oracle_run(&run, None).unwrap();
        for (sim, rec) in run.event_states.iter().zip(&oracle.states) {
            for (a, b) in sim.iter().zip(rec) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn oracle_window_depth_modes_are_equivalent() {
        let cfg = scenario::example_delay(3, Strategy::Plain, 8);
        let mut cfg = cfg;
        cfg.horizon = 15.0;
        let run = crate::dynamics::run(&cfg.resolve(None).unwrap()).unwrap();
        let small = oracle_run(&run, None).unwrap();
        let large = oracle_run(&run, Some(small.m + 10)).unwrap();
        for (a, b) in small.states.iter().zip(&large.states) {
            for (x, y) in a.iter().zip(b) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn identical_initial_states_stay_stacked_constant() {
        let mut cfg = scenario::example_delay(4, Strategy::Plain, 2);
        cfg.initial_state = vec![1.5; 4];
        cfg.horizon = 10.0;
        let run = crate::dynamics::run(&cfg.resolve(None).unwrap()).unwrap();
        let oracle = oracle_run(&run, None).unwrap();
        for s in &oracle.states {
            for &v in s {
                assert_abs_diff_eq!(v, 1.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn counterexample_oracle_never_contracts_below_one() {
        let run =
            crate::dynamics::run(&scenario::counterexample(20).resolve(None).unwrap()).unwrap();
        let oracle = oracle_run(&run, None).unwrap();
        for s in &oracle.states {
            assert!((s[0] - s[1]).abs() >= 1.0);
        }
    }

    #[test]
    fn decomposed_pis_are_stochastic_and_match_weight_pattern() {
        let cfg = scenario::example_switching(5);
        let mut cfg = cfg;
        cfg.horizon = 20.0;
        let run = crate::dynamics::run(&cfg.resolve(None).unwrap()).unwrap();
        let m = required_window(&run).unwrap();
        let pis = decompose_run(&run, m).unwrap();
        for pi in pis.iter().take(30) {
            let assembled = pi.assemble().unwrap();
            for i in 0..assembled.n() {
                let s: f64 = assembled.row(i).iter().sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
            let blocks = pi.blocks();
            let mut sum = [0.0; 16];
            for b in &blocks {
                for (acc, v) in sum.iter_mut().zip(b) {
                    *acc += v;
                }
            }
            // block sum is row-stochastic (the event's weight pattern)
            for i in 0..4 {
                let s: f64 = sum[i * 4..(i + 1) * 4].iter().sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn delta_of_growing_products_is_non_increasing() {
        let mut cfg = scenario::example_fixed(6);
        cfg.horizon = 8.0;
        let run = crate::dynamics::run(&cfg.resolve(None).unwrap()).unwrap();
        let m = required_window(&run).unwrap();
        let pis = decompose_run(&run, m).unwrap();
        let assembled: Vec<_> = pis.iter().take(12).map(|p| p.assemble().unwrap()).collect();
        let mut prev = f64::INFINITY;
        let mut acc = assembled[0].clone();
        for next in &assembled[1..] {
            acc = next.matmul(&acc).unwrap();
            let d = delta(&acc);
            assert!(d <= prev + 1e-12);
            prev = d;
        }
    }

    #[test]
    fn window_too_small_is_reported() {
        let cfg = scenario::example_delay(5, Strategy::Plain, 1);
        let mut cfg = cfg;
        cfg.horizon = 12.0;
        let run = crate::dynamics::run(&cfg.resolve(None).unwrap()).unwrap();
        let m = required_window(&run).unwrap();
        assert!(m > 1);
        assert!(matches!(
            decompose_run(&run, 1),
            Err(Error::WindowTooSmall { .. })
        ));
    }

    #[test]
    fn certificate_of_scrambling_window() {
        let flat = vec![vec![0.5, 0.5, 0.5, 0.5]];
        let pi = PiMatrix::build_pi(1.0, 2, &flat).unwrap();
        let (bound, certified) = consensus_certificate(&[pi], &[0..1]).unwrap();
        assert!(certified);
        assert!(bound < 1.0);
    }

    #[test]
    fn certificate_without_communication_fails() {
        let ident = vec![vec![1., 0., 0., 1.]];
        let pi = PiMatrix::build_pi(1.0, 2, &ident).unwrap();
        let pis = vec![pi.clone(), pi];
        let (bound, certified) = consensus_certificate(&pis, &[0..1, 1..2]).unwrap();
        assert!(!certified);
        assert_abs_diff_eq!(bound, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn certificate_on_switching_scenario_windows() {
        let mut cfg = scenario::example_switching(2);
        cfg.horizon = 40.0;
        let run = crate::dynamics::run(&cfg.resolve(None).unwrap()).unwrap();
        let m = required_window(&run).unwrap();
        let pis = decompose_run(&run, m).unwrap();
        // windows spanning two full phase periods of every agent: gaps are
        // at most 0.9, so 8 updates fit in 7.2 seconds of events
        let span = 12.0;
        let mut windows = Vec::new();
        let mut start = 0usize;
        let times = &run.events.times;
        let mut boundary = span;
        for k in 0..pis.len() {
            if times[k + 1] >= boundary {
                windows.push(start..k + 1);
                start = k + 1;
                boundary += span;
            }
        }
        assert!(windows.len() >= 2);
        let (bound, certified) = consensus_certificate(&pis, &windows).unwrap();
        assert!(certified, "bound = {bound}");
        assert!(bound < 1.0);
    }
}
