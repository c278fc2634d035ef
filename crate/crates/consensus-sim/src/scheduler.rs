//! Update-time generation, delay assignment, global event merging, and the
//! window-size constants bounding events per update interval.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::{real, Error, Real, Result};

/// Seed-derivation purposes. One master seed plus a (purpose, index) pair
/// yields an independent stream, so adding agents or toggling delays never
/// perturbs existing streams.
#[derive(Debug, Clone, Copy)]
pub enum StreamPurpose {
    Schedule = 1,
    Delay = 2,
    Topology = 3,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic sub-stream for (master seed, purpose, index).
pub fn substream(master: u64, purpose: StreamPurpose, index: u64) -> ChaCha12Rng {
    let mixed = splitmix64(splitmix64(master ^ (purpose as u64).rotate_left(32)) ^ index);
    ChaCha12Rng::seed_from_u64(mixed)
}

/// Per-agent strictly increasing update times starting at zero.
#[derive(Debug, Clone)]
pub struct UpdateSchedule<S> {
    pub agent: usize,
    pub times: Vec<S>,
}

impl<S: Real> UpdateSchedule<S> {
    /// Build from explicit times; validates `t_0 = 0` and strict increase.
    /// Gap bounds are not enforced here so that unbounded-gap sequences can
    /// be expressed.
    pub fn from_times(agent: usize, times: Vec<S>) -> Result<Self> {
        match times.first() {
            Some(&t0) if t0 == S::zero() => {}
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "schedule for agent {agent} must start at 0"
                )))
            }
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(format!(
                "schedule for agent {agent} must be strictly increasing"
            )));
        }
        Ok(Self { agent, times })
    }

    /// Index of the latest update time `<= t` (within tolerance).
    pub fn latest_update_at(&self, t: S) -> Option<usize> {
        let tol = S::pattern_tol();
        let mut ans = None;
        for (k, &tk) in self.times.iter().enumerate() {
            if tk <= t + tol {
                ans = Some(k);
            } else {
                break;
            }
        }
        ans
    }
}

/// Draw asynchronous schedules with gaps uniform in `[tau_min, tau_max]`,
/// one independent stream per agent, each extending one event past the
/// horizon.
pub fn generate_schedules<S: Real>(
    n: usize,
    tau_min: S,
    tau_max: S,
    seed: u64,
    horizon: S,
) -> Result<Vec<UpdateSchedule<S>>> {
    validate_bounds(tau_min, tau_max, horizon)?;
    (0..n)
        .map(|agent| {
            let mut rng = substream(seed, StreamPurpose::Schedule, agent as u64);
            Ok(UpdateSchedule {
                agent,
                times: draw_times(&mut rng, tau_min, tau_max, horizon),
            })
        })
        .collect()
}

/// Synchronous variant: every agent shares one gap stream.
pub fn generate_synchronous_schedules<S: Real>(
    n: usize,
    tau_min: S,
    tau_max: S,
    seed: u64,
    horizon: S,
) -> Result<Vec<UpdateSchedule<S>>> {
    validate_bounds(tau_min, tau_max, horizon)?;
    let mut rng = substream(seed, StreamPurpose::Schedule, u64::MAX);
    let times = draw_times(&mut rng, tau_min, tau_max, horizon);
    Ok((0..n)
        .map(|agent| UpdateSchedule {
            agent,
            times: times.clone(),
        })
        .collect())
}

fn validate_bounds<S: Real>(tau_min: S, tau_max: S, horizon: S) -> Result<()> {
    if !(tau_min > S::zero() && tau_min <= tau_max) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < tau_min <= tau_max, got [{tau_min}, {tau_max}]"
        )));
    }
    if horizon < S::zero() {
        return Err(Error::InvalidParameter("negative horizon".into()));
    }
    Ok(())
}

fn draw_times<S: Real>(rng: &mut ChaCha12Rng, tau_min: S, tau_max: S, horizon: S) -> Vec<S> {
    let mut times = vec![S::zero()];
    let span = tau_max - tau_min;
    while *times.last().unwrap() <= horizon {
        let u: f64 = rng.gen();
        let gap = tau_min + span * real::<S>(u);
        let next = *times.last().unwrap() + gap;
        times.push(next);
    }
    times
}

/// Per-update communication delays: for agent `i`'s update `k`, one
/// `(neighbor, delay)` entry per successfully received neighbor.
#[derive(Debug, Clone)]
pub struct DelayAssignment<S> {
    /// `per_agent[i][k]` lists `(j, tau)` for the reads at `t_k^i`.
    pub per_agent: Vec<Vec<Vec<(usize, S)>>>,
}

impl<S: Real> DelayAssignment<S> {
    pub fn max_delay(&self) -> S {
        self.per_agent
            .iter()
            .flatten()
            .flatten()
            .map(|&(_, d)| d)
            .fold(S::zero(), S::max)
    }
}

/// One merged global event: agents updating here and delayed reads whose
/// effective time resolves here.
#[derive(Debug, Clone, Default)]
pub struct EventAnnotation {
    /// `(agent, update index)` pairs updating at this instant.
    pub updates: Vec<(usize, usize)>,
    /// `(agent, update index, neighbor)` reads resolving to this instant.
    pub reads: Vec<(usize, usize, usize)>,
}

/// Sorted deduplicated union of all update times and nonnegative read times.
#[derive(Debug, Clone)]
pub struct GlobalEventSequence<S> {
    pub times: Vec<S>,
    pub annotations: Vec<EventAnnotation>,
}

impl<S: Real> GlobalEventSequence<S> {
    /// Index of the event equal to `t` within the merge tolerance.
    pub fn index_of(&self, t: S) -> Option<usize> {
        let tol = real::<S>(10.0) * S::pattern_tol();
        match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(k) => Some(k),
            Err(ins) => {
                if ins < self.times.len() && (self.times[ins] - t).abs() <= tol {
                    Some(ins)
                } else if ins > 0 && (self.times[ins - 1] - t).abs() <= tol {
                    Some(ins - 1)
                } else {
                    None
                }
            }
        }
    }
}

/// Merge schedules (and, when present, delayed read times) into the global
/// event sequence. Times within the pattern tolerance collapse into one
/// event; annotations within an event are ordered by ascending agent index.
pub fn merge_events<S: Real>(
    schedules: &[UpdateSchedule<S>],
    delays: Option<&DelayAssignment<S>>,
) -> GlobalEventSequence<S> {
    enum Tag {
        Update(usize, usize),
        Read(usize, usize, usize),
    }
    let mut raw: Vec<(S, Tag)> = Vec::new();
    for (i, s) in schedules.iter().enumerate() {
        for (k, &t) in s.times.iter().enumerate() {
            raw.push((t, Tag::Update(i, k)));
            if let Some(d) = delays {
                for &(j, tau) in &d.per_agent[i][k] {
                    let read = t - tau;
                    if read >= S::zero() {
                        raw.push((read, Tag::Read(i, k, j)));
                    }
                }
            }
        }
    }
    raw.sort_by(|a, b| {
        let (ia, ka) = match a.1 {
            Tag::Update(i, k) | Tag::Read(i, k, _) => (i, k),
        };
        let (ib, kb) = match b.1 {
            Tag::Update(i, k) | Tag::Read(i, k, _) => (i, k),
        };
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(ia.cmp(&ib))
            .then(ka.cmp(&kb))
    });

    let tol = S::pattern_tol();
    let mut times: Vec<S> = Vec::new();
    let mut annotations: Vec<EventAnnotation> = Vec::new();
    for (t, tag) in raw {
        let fresh = match times.last() {
            Some(&last) => t - last > tol,
            None => true,
        };
        if fresh {
            times.push(t);
            annotations.push(EventAnnotation::default());
        }
        let ann = annotations.last_mut().unwrap();
        match tag {
            Tag::Update(i, k) => ann.updates.push((i, k)),
            Tag::Read(i, k, j) => ann.reads.push((i, k, j)),
        }
    }
    GlobalEventSequence { times, annotations }
}

/// The bounds on events per update interval:
/// `m_check = (floor(tau_max/tau_min) + 1)(n - 1) + 1` without delays,
/// `m_tilde = m_check * n * (K(n - 1) + 1)` with delays, and the window
/// depth `m_hat = (K + 1) * m_tilde`.
pub fn window_constants<S: Real>(
    n: usize,
    tau_min: S,
    tau_max: S,
    k_delay: u64,
) -> (u64, u64, u64) {
    let ratio = (tau_max / tau_min).floor().to_f64().unwrap() as u64;
    let m_check = (ratio + 1) * (n as u64 - 1) + 1;
    let m_tilde = m_check * n as u64 * (k_delay * (n as u64 - 1) + 1);
    let m_hat = if k_delay == 0 {
        m_tilde
    } else {
        (k_delay + 1) * m_tilde
    };
    (m_check, m_tilde, m_hat)
}

/// Count the global events inside every complete update interval of every
/// agent and return the maximum count together with the number of intervals
/// exceeding `bound`.
pub fn check_interval_counts<S: Real>(
    schedules: &[UpdateSchedule<S>],
    events: &GlobalEventSequence<S>,
    bound: u64,
) -> (u64, usize) {
    let mut max_count = 0u64;
    let mut violations = 0usize;
    let horizon = match events.times.last() {
        Some(&t) => t,
        None => return (0, 0),
    };
    for s in schedules {
        for w in s.times.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if hi > horizon {
                break;
            }
            let count = events.times.iter().filter(|&&t| t >= lo && t < hi).count() as u64;
            max_count = max_count.max(count);
            if count > bound {
                violations += 1;
            }
        }
    }
    (max_count, violations)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_uniform_gives_integer_grid() {
        let s = generate_schedules(2, 1.0, 1.0, 7, 5.0).unwrap();
        for schedule in &s {
            for (k, &t) in schedule.times.iter().enumerate() {
                assert!((t - k as f64).abs() < 1e-12);
            }
            assert!(*schedule.times.last().unwrap() > 5.0);
        }
    }

    #[test]
    fn schedules_are_deterministic_per_seed() {
        let a = generate_schedules::<f64>(3, 0.2, 0.9, 42, 20.0).unwrap();
        let b = generate_schedules::<f64>(3, 0.2, 0.9, 42, 20.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.times, y.times);
        }
        let c = generate_schedules::<f64>(3, 0.2, 0.9, 43, 20.0).unwrap();
        assert_ne!(a[0].times, c[0].times);
    }

    #[test]
    fn adding_agents_preserves_existing_streams() {
        let small = generate_schedules::<f64>(2, 0.2, 0.9, 11, 10.0).unwrap();
        let large = generate_schedules::<f64>(5, 0.2, 0.9, 11, 10.0).unwrap();
        for i in 0..2 {
            assert_eq!(small[i].times, large[i].times);
        }
    }

    #[test]
    fn gaps_stay_in_range_over_many_draws() {
        let s = generate_schedules::<f64>(4, 0.2, 0.9, 3, 2_000.0).unwrap();
        let mut draws = 0;
        for schedule in &s {
            for w in schedule.times.windows(2) {
                let gap = w[1] - w[0];
                assert!((0.2..=0.9).contains(&gap), "gap {gap} out of range");
                draws += 1;
            }
        }
        assert!(draws > 10_000);
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(generate_schedules::<f64>(2, 0.0, 0.9, 1, 5.0).is_err());
        assert!(generate_schedules::<f64>(2, 0.9, 0.2, 1, 5.0).is_err());
    }

    #[test]
    fn merge_dedups_simultaneous_updates() {
        let a = UpdateSchedule::from_times(0, vec![0.0, 1.0, 2.0]).unwrap();
        let b = UpdateSchedule::from_times(1, vec![0.0, 1.0, 2.0]).unwrap();
        let ev = merge_events(&[a, b], None);
        assert_eq!(ev.times, vec![0.0, 1.0, 2.0]);
        for ann in &ev.annotations {
            assert_eq!(ann.updates.len(), 2);
            assert_eq!(ann.updates[0].0, 0);
            assert_eq!(ann.updates[1].0, 1);
        }
    }

    #[test]
    fn merge_without_delays_is_union_of_update_times() {
        let s = generate_schedules::<f64>(3, 0.2, 0.9, 5, 10.0).unwrap();
        let ev = merge_events(&s, None);
        let mut oracle: Vec<f64> = s.iter().flat_map(|x| x.times.iter().copied()).collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        oracle.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        assert_eq!(ev.times, oracle);
    }

    #[test]
    fn merge_with_delays_matches_sort_dedup_oracle() {
        let s = generate_schedules::<f64>(3, 0.2, 0.9, 9, 8.0).unwrap();
        let mut rng = substream(9, StreamPurpose::Delay, 0);
        let per_agent: Vec<Vec<Vec<(usize, f64)>>> = s
            .iter()
            .enumerate()
            .map(|(i, sch)| {
                sch.times
                    .iter()
                    .map(|_| {
                        (0..3)
                            .filter(|&j| j != i)
                            .map(|j| (j, rng.gen::<f64>()))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let d = DelayAssignment { per_agent };
        let ev = merge_events(&s, Some(&d));

        let mut oracle: Vec<f64> = Vec::new();
        for (i, sch) in s.iter().enumerate() {
            for (k, &t) in sch.times.iter().enumerate() {
                oracle.push(t);
                for &(_, tau) in &d.per_agent[i][k] {
                    if t - tau >= 0.0 {
                        oracle.push(t - tau);
                    }
                }
            }
        }
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        oracle.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        assert_eq!(ev.times.len(), oracle.len());
        for (x, y) in ev.times.iter().zip(&oracle) {
            assert!((x - y).abs() <= 1e-12);
        }
        assert!(ev.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn window_constants_examples() {
        let (m_check, _, _) = window_constants::<f64>(4, 0.2, 0.9, 0);
        assert_eq!(m_check, 16);
        let (m2, _, _) = window_constants::<f64>(2, 0.5, 0.5, 0);
        assert_eq!(m2, 3);
        let (mc, mt, mh) = window_constants::<f64>(3, 0.2, 0.9, 0);
        assert_eq!(mt, mc * 3);
        assert_eq!(mh, mt);
        let (mc4, mt4, mh4) = window_constants::<f64>(4, 0.2, 0.9, 10);
        assert_eq!(mc4, 16);
        assert_eq!(mt4, 16 * 4 * 31);
        assert_eq!(mh4, 11 * mt4);
    }

    #[test]
    fn interval_counts_respect_lemma_bound() {
        let s = generate_schedules::<f64>(4, 0.2, 0.9, 17, 50.0).unwrap();
        let ev = merge_events(&s, None);
        let (m_check, _, _) = window_constants::<f64>(4, 0.2, 0.9, 0);
        let (max_count, violations) = check_interval_counts(&s, &ev, m_check);
        assert!(max_count <= m_check);
        assert_eq!(violations, 0);
    }
}
