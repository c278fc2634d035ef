//! Scenario configuration and resolution.
//!
//! A [`ScenarioConfig`] is the declarative run description (agent count,
//! timing bounds, topology rule, delay policy, seed). Resolving it samples
//! every random choice into a [`Scenario`]: concrete update schedules,
//! per-update reception sets, and per-read delays. Everything downstream of
//! a `Scenario` is deterministic.

use rand::Rng;

use crate::graph::DirectedWeightedGraph;
use crate::scheduler::{self, DelayAssignment, GlobalEventSequence, StreamPurpose, UpdateSchedule};
use crate::{real, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Plain,
    MostRecentData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelayPolicy<S> {
    None,
    Uniform,
    AlwaysMax,
    /// Explicit `(agent, update index, neighbor) -> delay` entries; pairs
    /// not listed default to zero.
    Explicit(Vec<(usize, usize, usize, S)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSpec<S> {
    Asynchronous,
    Synchronous,
    /// One explicit time list per agent.
    Explicit(Vec<Vec<S>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    /// Every base neighbor received at every update.
    Fixed,
    /// `phases[agent][k mod period]` is the reception set at update `k`.
    Periodic {
        period: usize,
        phases: Vec<Vec<Vec<usize>>>,
    },
    /// Each base edge received independently with the given probability.
    Random { availability: f64 },
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig<S> {
    pub n: usize,
    pub tau_min: S,
    pub tau_max: S,
    /// Delay bound factor: `tau_d = k_delay * tau_min`.
    pub k_delay: u64,
    pub weights: Vec<S>,
    pub topology: TopologySpec,
    pub initial_state: Vec<S>,
    pub strategy: Strategy,
    pub delay_policy: DelayPolicy<S>,
    pub schedule: ScheduleSpec<S>,
    pub seed: u64,
    pub horizon: S,
    pub sample_dt: S,
}

impl<S: Real> ScenarioConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("agent count must be positive".into()));
        }
        if !(self.tau_min > S::zero() && self.tau_min <= self.tau_max) {
            return Err(Error::Config(format!(
                "need 0 < tau_u_min <= tau_u_max, got [{}, {}]",
                self.tau_min, self.tau_max
            )));
        }
        if self.initial_state.len() != self.n {
            return Err(Error::Config(format!(
                "initial_state has {} entries for {} agents",
                self.initial_state.len(),
                self.n
            )));
        }
        if self.horizon < S::zero() {
            return Err(Error::Config("horizon must be nonnegative".into()));
        }
        if self.sample_dt <= S::zero() {
            return Err(Error::Config("sample_dt must be positive".into()));
        }
        DirectedWeightedGraph::new(self.n, self.weights.clone())?;
        if let TopologySpec::Periodic { period, phases } = &self.topology {
            if *period == 0 || phases.len() != self.n {
                return Err(Error::Config("periodic topology shape mismatch".into()));
            }
            if phases.iter().any(|p| p.len() != *period) {
                return Err(Error::Config(
                    "each agent needs one reception set per phase".into(),
                ));
            }
        }
        if let TopologySpec::Random { availability } = self.topology {
            if !(0.0..=1.0).contains(&availability) {
                return Err(Error::Config("availability must be in [0, 1]".into()));
            }
        }
        if let ScheduleSpec::Explicit(lists) = &self.schedule {
            if lists.len() != self.n {
                return Err(Error::Config("one explicit time list per agent".into()));
            }
        }
        Ok(())
    }

    pub fn tau_d(&self) -> S {
        real::<S>(self.k_delay as f64) * self.tau_min
    }

    /// Sample all random choices into a concrete scenario. `seed_override`
    /// replaces the config seed when given.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<Scenario<S>> {
        self.validate()?;
        let seed = seed_override.unwrap_or(self.seed);
        let graph = DirectedWeightedGraph::new(self.n, self.weights.clone())?;

        let schedules = match &self.schedule {
            ScheduleSpec::Asynchronous => scheduler::generate_schedules(
                self.n,
                self.tau_min,
                self.tau_max,
                seed,
                self.horizon,
            )?,
            ScheduleSpec::Synchronous => scheduler::generate_synchronous_schedules(
                self.n,
                self.tau_min,
                self.tau_max,
                seed,
                self.horizon,
            )?,
            ScheduleSpec::Explicit(lists) => lists
                .iter()
                .enumerate()
                .map(|(agent, times)| UpdateSchedule::from_times(agent, times.clone()))
                .collect::<Result<Vec<_>>>()?,
        };

        // reception sets per (agent, update)
        let mut received: Vec<Vec<Vec<usize>>> = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let base = graph.neighbors(i)?;
            let mut rng = scheduler::substream(seed, StreamPurpose::Topology, i as u64);
            let per_update = schedules[i]
                .times
                .iter()
                .enumerate()
                .map(|(k, _)| match &self.topology {
                    TopologySpec::Fixed => Ok(base.clone()),
                    TopologySpec::Periodic { period, phases } => {
                        let set = &phases[i][k % period];
                        for &j in set {
                            if !base.contains(&j) {
                                return Err(Error::Config(format!(
                                    "phase reception {j} is not a base neighbor of {i}"
                                )));
                            }
                        }
                        Ok(set.clone())
                    }
                    TopologySpec::Random { availability } => Ok(base
                        .iter()
                        .copied()
                        .filter(|_| rng.gen::<f64>() < *availability)
                        .collect()),
                })
                .collect::<Result<Vec<_>>>()?;
            received.push(per_update);
        }

        // delays per (agent, update, received neighbor)
        let tau_d = self.tau_d();
        let mut reads: Vec<Vec<Vec<(usize, S)>>> = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut rng = scheduler::substream(seed, StreamPurpose::Delay, i as u64);
            let per_update = received[i]
                .iter()
                .enumerate()
                .map(|(k, set)| {
                    set.iter()
                        .map(|&j| {
                            let tau = match &self.delay_policy {
                                DelayPolicy::None => S::zero(),
                                DelayPolicy::Uniform => real::<S>(rng.gen::<f64>()) * tau_d,
                                DelayPolicy::AlwaysMax => tau_d,
                                DelayPolicy::Explicit(list) => list
                                    .iter()
                                    .find(|&&(a, u, nb, _)| a == i && u == k && nb == j)
                                    .map(|&(_, _, _, d)| d)
                                    .unwrap_or(S::zero()),
                            };
                            (j, tau)
                        })
                        .collect()
                })
                .collect();
            reads.push(per_update);
        }

        let has_delays = !matches!(self.delay_policy, DelayPolicy::None) && self.k_delay > 0;
        Ok(Scenario {
            n: self.n,
            tau_min: self.tau_min,
            tau_max: self.tau_max,
            k_delay: self.k_delay,
            horizon: self.horizon,
            strategy: self.strategy,
            x0: self.initial_state.clone(),
            graph,
            schedules,
            reads,
            has_delays,
            explicit_schedule: matches!(self.schedule, ScheduleSpec::Explicit(_)),
        })
    }
}

/// Fully resolved scenario: all randomness sampled, ready to simulate.
#[derive(Debug, Clone)]
pub struct Scenario<S> {
    pub n: usize,
    pub tau_min: S,
    pub tau_max: S,
    pub k_delay: u64,
    pub horizon: S,
    pub strategy: Strategy,
    pub x0: Vec<S>,
    pub graph: DirectedWeightedGraph<S>,
    pub schedules: Vec<UpdateSchedule<S>>,
    /// `reads[i][k]` lists `(neighbor, delay)` for agent `i`'s update `k`.
    pub reads: Vec<Vec<Vec<(usize, S)>>>,
    pub has_delays: bool,
    pub explicit_schedule: bool,
}

impl<S: Real> Scenario<S> {
    pub fn received(&self, i: usize, k: usize) -> Vec<usize> {
        self.reads[i][k].iter().map(|&(j, _)| j).collect()
    }

    pub fn delay_assignment(&self) -> DelayAssignment<S> {
        DelayAssignment {
            per_agent: self.reads.clone(),
        }
    }

    pub fn merged_events(&self) -> GlobalEventSequence<S> {
        let d = self.delay_assignment();
        scheduler::merge_events(&self.schedules, Some(&d))
    }

    /// Lemma bound applicable to this scenario's per-interval event counts,
    /// undefined for explicit schedules with unbounded gaps.
    pub fn interval_bound(&self) -> Option<u64> {
        if self.explicit_schedule {
            return None;
        }
        let (m_check, m_tilde, _) =
            scheduler::window_constants(self.n, self.tau_min, self.tau_max, self.k_delay);
        Some(if self.has_delays { m_tilde } else { m_check })
    }
}

// ---------------------------------------------------------------------------
// Built-in scenarios

/// Fixed four-agent topology, no delays, asynchronous updates.
pub fn example_fixed(seed: u64) -> ScenarioConfig<f64> {
    ScenarioConfig {
        n: 4,
        tau_min: 0.2,
        tau_max: 0.9,
        k_delay: 0,
        weights: vec![
            0., 1., 1., 0., //
            1., 0., 0., 0., //
            0., 1., 0., 0., //
            0., 0., 1., 0.,
        ],
        topology: TopologySpec::Fixed,
        initial_state: vec![5., 6., 7., 8.],
        strategy: Strategy::Plain,
        delay_policy: DelayPolicy::None,
        schedule: ScheduleSpec::Asynchronous,
        seed,
        horizon: 100.0,
        sample_dt: 0.5,
    }
}

/// Two agents swapping state with update gaps `ln 2^(k+3)`; the unbounded
/// gaps keep the disagreement above one forever.
pub fn counterexample(events: usize) -> ScenarioConfig<f64> {
    let mut times = vec![0.0];
    for k in 0..events {
        let gap = ((k + 3) as f64) * std::f64::consts::LN_2;
        times.push(times[times.len() - 1] + gap);
    }
    let horizon = *times.last().unwrap();
    ScenarioConfig {
        n: 2,
        tau_min: 1.0,
        tau_max: horizon,
        k_delay: 0,
        weights: vec![0., 1., 1., 0.],
        topology: TopologySpec::Fixed,
        initial_state: vec![1., -1.],
        strategy: Strategy::Plain,
        delay_policy: DelayPolicy::None,
        schedule: ScheduleSpec::Explicit(vec![times.clone(), times]),
        seed: 0,
        horizon,
        sample_dt: 1.0,
    }
}

/// Fixed topology with random delays bounded by `tau_d = k_delay * 0.2`.
pub fn example_delay(k_delay: u64, strategy: Strategy, seed: u64) -> ScenarioConfig<f64> {
    let mut cfg = example_fixed(seed);
    cfg.k_delay = k_delay;
    cfg.delay_policy = DelayPolicy::Uniform;
    cfg.strategy = strategy;
    cfg.horizon = 40.0;
    cfg
}

/// Four-phase switching reception schedule with delays bounded by 2.
pub fn example_switching(seed: u64) -> ScenarioConfig<f64> {
    let empty = Vec::new;
    let phases = vec![
        // agent 0 hears 1 at updates 4k, hears 2 at updates 4k+2
        vec![vec![1], empty(), vec![2], empty()],
        // agent 1 hears 0 at updates 4k+1
        vec![empty(), vec![0], empty(), empty()],
        // agent 2 hears 1 at updates 4k+2
        vec![empty(), empty(), vec![1], empty()],
        // agent 3 hears 2 at updates 4k+3
        vec![empty(), empty(), empty(), vec![2]],
    ];
    ScenarioConfig {
        n: 4,
        tau_min: 0.2,
        tau_max: 0.9,
        k_delay: 10,
        weights: vec![
            0., 1., 1., 0., //
            1., 0., 0., 0., //
            0., 1., 0., 0., //
            0., 0., 1., 0.,
        ],
        topology: TopologySpec::Periodic { period: 4, phases },
        initial_state: vec![5., 6., 7., 8.],
        strategy: Strategy::Plain,
        delay_policy: DelayPolicy::Uniform,
        schedule: ScheduleSpec::Asynchronous,
        seed,
        horizon: 200.0,
        sample_dt: 0.5,
    }
}

// ---------------------------------------------------------------------------
// Config file format: flat key-value lines under [scenario] / [topology]
// sections, `#` comments, vectors and matrix rows as bracketed lists.

pub fn parse_config<S: Real>(text: &str) -> Result<ScenarioConfig<S>> {
    let mut n = None;
    let mut tau_min = None;
    let mut tau_max = None;
    let mut k_delay = 0u64;
    let mut seed = 0u64;
    let mut horizon = None;
    let mut sample_dt = real::<S>(0.5);
    let mut initial_state = None;
    let mut strategy = Strategy::Plain;
    let mut delay_policy = DelayPolicy::None;
    let mut schedule_kind = "asynchronous".to_string();
    let mut explicit_times: Vec<(usize, Vec<S>)> = Vec::new();
    let mut explicit_delays: Vec<(usize, usize, usize, S)> = Vec::new();
    let mut topology_kind = "fixed".to_string();
    let mut weights_rows: Vec<Vec<S>> = Vec::new();
    let mut period = None;
    let mut availability = None;
    let mut phase_lines: Vec<(usize, usize, Vec<usize>)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim();
        let value = value.trim();
        let bad = |what: &str| Error::Config(format!("line {}: bad {what}: {value}", lineno + 1));
        match key {
            "n" => n = Some(value.parse::<usize>().map_err(|_| bad("integer"))?),
            "tau_u_min" => tau_min = Some(parse_scalar::<S>(value).ok_or_else(|| bad("number"))?),
            "tau_u_max" => tau_max = Some(parse_scalar::<S>(value).ok_or_else(|| bad("number"))?),
            "K" => k_delay = value.parse().map_err(|_| bad("integer"))?,
            "seed" => seed = value.parse().map_err(|_| bad("integer"))?,
            "horizon" => horizon = Some(parse_scalar::<S>(value).ok_or_else(|| bad("number"))?),
            "sample_dt" => sample_dt = parse_scalar::<S>(value).ok_or_else(|| bad("number"))?,
            "initial_state" => {
                initial_state = Some(parse_vector::<S>(value).ok_or_else(|| bad("vector"))?)
            }
            "strategy" => {
                strategy = match value {
                    "plain" => Strategy::Plain,
                    "most-recent-data" => Strategy::MostRecentData,
                    _ => return Err(bad("strategy")),
                }
            }
            "delay_policy" => {
                delay_policy = match value {
                    "none" => DelayPolicy::None,
                    "uniform" => DelayPolicy::Uniform,
                    "always-max" => DelayPolicy::AlwaysMax,
                    "explicit" => DelayPolicy::Explicit(Vec::new()),
                    _ => return Err(bad("delay policy")),
                }
            }
            "schedule" => schedule_kind = value.to_string(),
            "delay" => {
                // `delay = <agent> <update> <neighbor> <seconds>`, 1-based agents
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 4 {
                    return Err(bad("delay entry"));
                }
                let a: usize = parts[0].parse().map_err(|_| bad("delay entry"))?;
                let k: usize = parts[1].parse().map_err(|_| bad("delay entry"))?;
                let j: usize = parts[2].parse().map_err(|_| bad("delay entry"))?;
                let d = parse_scalar::<S>(parts[3]).ok_or_else(|| bad("delay entry"))?;
                if a == 0 || j == 0 {
                    return Err(bad("delay entry (agents are 1-based)"));
                }
                explicit_delays.push((a - 1, k, j - 1, d));
            }
            "kind" => topology_kind = value.to_string(),
            "weights" => weights_rows.push(parse_vector::<S>(value).ok_or_else(|| bad("row"))?),
            "period" => period = Some(value.parse::<usize>().map_err(|_| bad("integer"))?),
            "availability" => availability = Some(value.parse::<f64>().map_err(|_| bad("number"))?),
            "phase" => {
                // `phase = <agent> <k mod period> [j, ...]`, 1-based agents
                let (head, list) = value.split_once('[').ok_or_else(|| bad("phase entry"))?;
                let parts: Vec<&str> = head.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(bad("phase entry"));
                }
                let a: usize = parts[0].parse().map_err(|_| bad("phase entry"))?;
                let ph: usize = parts[1].parse().map_err(|_| bad("phase entry"))?;
                let list = list.trim_end_matches(']');
                let mut set = Vec::new();
                for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let j: usize = item.parse().map_err(|_| bad("phase entry"))?;
                    if j == 0 {
                        return Err(bad("phase entry (agents are 1-based)"));
                    }
                    set.push(j - 1);
                }
                if a == 0 {
                    return Err(bad("phase entry (agents are 1-based)"));
                }
                phase_lines.push((a - 1, ph, set));
            }
            k if k.starts_with("times_") => {
                let a: usize = k[6..].parse().map_err(|_| bad("times key"))?;
                if a == 0 {
                    return Err(bad("times key (agents are 1-based)"));
                }
                explicit_times.push((
                    a - 1,
                    parse_vector::<S>(value).ok_or_else(|| bad("vector"))?,
                ));
            }
            _ => {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{key}`",
                    lineno + 1
                )))
            }
        }
    }

    let n = n.ok_or_else(|| Error::Config("missing key `n`".into()))?;
    let tau_min = tau_min.ok_or_else(|| Error::Config("missing key `tau_u_min`".into()))?;
    let tau_max = tau_max.ok_or_else(|| Error::Config("missing key `tau_u_max`".into()))?;
    let horizon = horizon.ok_or_else(|| Error::Config("missing key `horizon`".into()))?;
    let initial_state =
        initial_state.ok_or_else(|| Error::Config("missing key `initial_state`".into()))?;
    if weights_rows.len() != n {
        return Err(Error::Config(format!(
            "expected {n} weight rows, got {}",
            weights_rows.len()
        )));
    }
    if weights_rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config("weight rows must have n entries".into()));
    }
    let weights = weights_rows.into_iter().flatten().collect();

    let topology = match topology_kind.as_str() {
        "fixed" => TopologySpec::Fixed,
        "random" => TopologySpec::Random {
            availability: availability
                .ok_or_else(|| Error::Config("random topology needs `availability`".into()))?,
        },
        "periodic" => {
            let period =
                period.ok_or_else(|| Error::Config("periodic topology needs `period`".into()))?;
            let mut phases = vec![vec![Vec::new(); period]; n];
            for (a, ph, set) in phase_lines {
                if a >= n || ph >= period {
                    return Err(Error::Config(format!(
                        "phase entry out of range: agent {} phase {ph}",
                        a + 1
                    )));
                }
                phases[a][ph] = set;
            }
            TopologySpec::Periodic { period, phases }
        }
        other => return Err(Error::Config(format!("unknown topology kind `{other}`"))),
    };

    let schedule = match schedule_kind.as_str() {
        "asynchronous" => ScheduleSpec::Asynchronous,
        "synchronous" => ScheduleSpec::Synchronous,
        "explicit" => {
            let mut lists = vec![Vec::new(); n];
            for (a, times) in explicit_times {
                if a >= n {
                    return Err(Error::Config(format!("times for unknown agent {}", a + 1)));
                }
                lists[a] = times;
            }
            ScheduleSpec::Explicit(lists)
        }
        other => return Err(Error::Config(format!("unknown schedule kind `{other}`"))),
    };

    if let DelayPolicy::Explicit(ref mut list) = delay_policy {
        *list = explicit_delays;
    }

    let cfg = ScenarioConfig {
        n,
        tau_min,
        tau_max,
        k_delay,
        weights,
        topology,
        initial_state,
        strategy,
        delay_policy,
        schedule,
        seed,
        horizon,
        sample_dt,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn parse_scalar<S: Real>(s: &str) -> Option<S> {
    s.parse::<f64>().ok().and_then(S::from_f64)
}

fn parse_vector<S: Real>(s: &str) -> Option<Vec<S>> {
    let inner = s.trim().strip_prefix('[')?.strip_suffix(']')?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(parse_scalar::<S>)
        .collect()
}
