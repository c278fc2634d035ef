//! Command-line front end: run configured scenarios, reproduce the built-in
//! experiments, check topology conditions, and sweep seeds in batch.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analysis::{check_union_condition, detect_consensus, predicted_group_value, spread};
use crate::dynamics::{self, RunOutput};
use crate::scenario::{self, parse_config, ScenarioConfig, Strategy, TopologySpec};
use crate::scheduler::window_constants;
use crate::{Error, Result};

pub const SEED_ENV: &str = "CONSENSUS_SIM_SEED";

#[derive(Parser)]
#[command(
    name = "consensus-sim",
    version,
    about = "Asynchronous consensus simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario config and write trajectories, events, and a
    /// summary report.
    Run {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a built-in experiment and print a pass/fail line per check.
    Reproduce {
        /// One of: example-fixed, counterexample, example-delay,
        /// example-switching
        name: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Test the rolling-window union spanning-tree condition.
    Check {
        config: PathBuf,
        /// Window length T in seconds
        #[arg(long)]
        window: f64,
    },
    /// Run one scenario across a seed range (half-open, e.g. 0..100).
    Batch {
        config: PathBuf,
        #[arg(long)]
        seeds: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Entry point; returns the process exit code (0 success / condition holds,
/// 1 validation error, 2 condition or check failure).
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out } => run_command(&config, &out).map(|()| true),
        Command::Reproduce { name, out } => reproduce_command(&name, &out),
        Command::Check { config, window } => check_command(&config, window),
        Command::Batch { config, seeds, out } => {
            batch_command(&config, &seeds, &out).map(|()| true)
        }
    };
    match outcome {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse::<u64>().map(Some).map_err(|_| {
            Error::Config(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))
        }),
        Err(_) => Ok(None),
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig<f64>> {
    let text = fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn run_command(config: &Path, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let sc = cfg.resolve(seed_override()?)?;
    let run = dynamics::run(&sc)?;
    write_outputs(&cfg, &sc, &run, out)?;
    println!("wrote {}", out.join("summary.txt").display());
    Ok(())
}

pub fn check_command(config: &Path, window: f64) -> Result<bool> {
    let cfg = load_config(config)?;
    let sc = cfg.resolve(seed_override()?)?;
    let check = check_union_condition(&sc, window)?;
    if check.holds {
        println!("union condition holds for window {window}");
    } else {
        let (a, b) = check.witness.unwrap();
        println!("union condition fails: no spanning tree over [{a}, {b})");
    }
    Ok(check.holds)
}

pub fn batch_command(config: &Path, seeds: &str, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let (a, b) = seeds
        .split_once("..")
        .and_then(|(a, b)| Some((a.trim().parse::<u64>().ok()?, b.trim().parse::<u64>().ok()?)))
        .filter(|(a, b)| a < b)
        .ok_or_else(|| {
            Error::Config(format!(
                "seed range must look like A..B with A < B, got {seeds:?}"
            ))
        })?;
    fs::create_dir_all(out)?;
    let mut summary = String::from("seed,final_value,consensus_time,final_spread\n");
    let mut finals = String::new();
    for seed in a..b {
        let run = dynamics::run(&cfg.resolve(Some(seed))?)?;
        let final_state = run.final_state();
        let value = final_state[0];
        let time = detect_consensus(&run, 1e-6)
            .map(|t| t.to_string())
            .unwrap_or_else(|| "none".into());
        let _ = writeln!(summary, "{seed},{value},{time},{}", spread(final_state));
        let _ = writeln!(finals, "{value}");
    }
    fs::write(out.join("batch_summary.csv"), summary)?;
    fs::write(out.join("final_values.txt"), finals)?;
    println!("wrote {}", out.join("batch_summary.csv").display());
    Ok(())
}

/// Sample grid for trajectory output: multiples of `sample_dt`, every event
/// time, and the horizon itself.
fn sample_times(cfg: &ScenarioConfig<f64>, run: &RunOutput<f64>) -> Vec<f64> {
    let mut times = vec![0.0];
    if cfg.sample_dt > 0.0 {
        let mut k = 1u64;
        loop {
            let t = k as f64 * cfg.sample_dt;
            if t > cfg.horizon + 1e-12 {
                break;
            }
            times.push(t);
            k += 1;
        }
    }
    times.extend_from_slice(&run.events.times);
    times.push(cfg.horizon);
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    times
}

pub fn write_outputs(
    cfg: &ScenarioConfig<f64>,
    sc: &crate::Scenario64,
    run: &RunOutput<f64>,
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;

    let mut traj = String::from("t");
    for i in 1..=sc.n {
        let _ = write!(traj, ",x_{i}");
    }
    traj.push('\n');
    for &t in &sample_times(cfg, run) {
        let _ = write!(traj, "{t}");
        for tr in &run.trajectories {
            let _ = write!(traj, ",{}", tr.evaluate(t)?);
        }
        traj.push('\n');
    }
    fs::write(out.join("trajectories.csv"), traj)?;

    let mut events = String::from("t,agent,received_set,read_times\n");
    for (t, ann) in run.events.times.iter().zip(&run.events.annotations) {
        for &(i, k) in &ann.updates {
            let info = &run.updates[i][k];
            let received: Vec<String> = info
                .reads
                .iter()
                .map(|r| (r.neighbor + 1).to_string())
                .collect();
            let read_times: Vec<String> = info
                .reads
                .iter()
                .map(|r| r.effective_time.to_string())
                .collect();
            let _ = writeln!(
                events,
                "{t},{},{},{}",
                i + 1,
                received.join("|"),
                read_times.join("|")
            );
        }
    }
    fs::write(out.join("events.csv"), events)?;

    fs::write(out.join("summary.txt"), summary_report(cfg, sc, run)?)?;
    Ok(())
}

fn summary_report(
    cfg: &ScenarioConfig<f64>,
    sc: &crate::Scenario64,
    run: &RunOutput<f64>,
) -> Result<String> {
    let final_state = run.final_state();
    let mut s = String::new();
    let _ = writeln!(s, "n = {}", sc.n);
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "horizon = {}", sc.horizon);
    let _ = writeln!(s, "events = {}", run.events.times.len());
    let _ = writeln!(
        s,
        "final_state = {}",
        final_state
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    let _ = writeln!(s, "final_spread = {}", spread(final_state));
    let _ = writeln!(
        s,
        "consensus_time = {}",
        detect_consensus(run, 1e-6)
            .map(|t| t.to_string())
            .unwrap_or_else(|| "none".into())
    );
    if matches!(cfg.topology, TopologySpec::Fixed) {
        match predicted_group_value(&sc.graph, &cfg.initial_state) {
            Ok(v) => {
                let _ = writeln!(s, "predicted_value = {v}");
                let _ = writeln!(s, "predicted_abs_error = {}", (final_state[0] - v).abs());
            }
            Err(_) => {
                let _ = writeln!(s, "predicted_value = unavailable");
            }
        }
    }
    // a window long enough for every agent to cycle all its patterns
    let (m_single, _, _) = window_constants(sc.n, sc.tau_min, sc.tau_max, sc.k_delay);
    let window = (m_single as f64 * sc.tau_max).min(sc.horizon);
    if window > 0.0 {
        let check = check_union_condition(sc, window)?;
        let _ = writeln!(s, "union_condition_window = {window}");
        let _ = writeln!(
            s,
            "union_condition = {}",
            if check.holds { "holds" } else { "fails" }
        );
    }
    let _ = writeln!(s, "interval_max_count = {}", run.interval_check.max_count);
    if let Some(bound) = run.interval_check.bound {
        let _ = writeln!(s, "interval_bound = {bound}");
        let _ = writeln!(s, "interval_violations = {}", run.interval_check.violations);
    }
    Ok(s)
}

struct CheckList {
    all_pass: bool,
}

impl CheckList {
    fn new() -> Self {
        Self { all_pass: true }
    }

    fn check(&mut self, name: &str, pass: bool) {
        println!("check {name}: {}", if pass { "PASS" } else { "FAIL" });
        self.all_pass &= pass;
    }
}

pub fn reproduce_command(name: &str, out: &Path) -> Result<bool> {
    let seed = seed_override()?;
    let mut checks = CheckList::new();
    match name {
        "example-fixed" => {
            let cfg = scenario::example_fixed(seed.unwrap_or(1));
            let sc = cfg.resolve(None)?;
            let run = dynamics::run(&sc)?;
            write_outputs(&cfg, &sc, &run, out)?;
            let consensus = detect_consensus(&run, 1e-6);
            checks.check("consensus within horizon (tol 1e-6)", consensus.is_some());
            let f = run.final_state()[0];
            checks.check("final value within initial hull [5, 8]", (5.0..=8.0).contains(&f));
            let mut finals = Vec::new();
            for s in 0..100 {
                let run = dynamics::run(&scenario::example_fixed(s).resolve(None)?)?;
                finals.push(run.final_state()[0]);
            }
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / finals.len() as f64;
            checks.check("final values vary across 100 seeds", var > 0.0);
        }
        "counterexample" => {
            let cfg = scenario::counterexample(30);
            let sc = cfg.resolve(None)?;
            let run = dynamics::run(&sc)?;
            write_outputs(&cfg, &sc, &run, out)?;
            let spreads: Vec<f64> = run.event_states.iter().map(|x| spread(x)).collect();
            let min = spreads.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.check("spread at least 1.0 at every event", min >= 1.0);
            let expected = [2.0, 2.0 * 0.75, 2.0 * 0.75 * 0.875];
            let first_three_ok = spreads.len() >= 3
                && expected
                    .iter()
                    .zip(&spreads)
                    .all(|(e, s)| (e - s).abs() < 1e-12);
            checks.check("first three spreads match the exact recursion", first_three_ok);
        }
        "example-delay" => {
            // matched seeds across the four (delay bound, strategy)
            // variants; compare disagreement at a fixed mid-run instant
            let seeds: Vec<u64> = (0..20).map(|s| seed.unwrap_or(100) + s).collect();
            let variants = [
                (10u64, Strategy::Plain, "k10-plain"),
                (10, Strategy::MostRecentData, "k10-mrd"),
                (50, Strategy::Plain, "k50-plain"),
                (50, Strategy::MostRecentData, "k50-mrd"),
            ];
            let mut medians = Vec::new();
            for (k, strategy, label) in variants {
                let mut spreads = Vec::new();
                for (idx, &s) in seeds.iter().enumerate() {
                    let cfg = scenario::example_delay(k, strategy, s);
                    let sc = cfg.resolve(None)?;
                    let run = dynamics::run(&sc)?;
                    let state: Vec<f64> = run
                        .trajectories
                        .iter()
                        .map(|tr| tr.evaluate(30.0))
                        .collect::<Result<_>>()?;
                    spreads.push(spread(&state));
                    if idx == 0 {
                        write_outputs(&cfg, &sc, &run, &out.join(label))?;
                    }
                }
                spreads.sort_by(|a, b| a.partial_cmp(b).unwrap());
                medians.push(spreads[spreads.len() / 2]);
            }
            checks.check("smaller delay bound no slower (plain)", medians[0] <= medians[2]);
            checks.check(
                "most-recent-data no slower than plain (small delays)",
                medians[1] <= medians[0],
            );
            checks.check(
                "most-recent-data no slower than plain (large delays)",
                medians[3] <= medians[2],
            );
        }
        "example-switching" => {
            let cfg = scenario::example_switching(seed.unwrap_or(1));
            let sc = cfg.resolve(None)?;
            let run = dynamics::run(&sc)?;
            write_outputs(&cfg, &sc, &run, out)?;
            let union = check_union_condition(&sc, 8.0 * 0.9)?;
            checks.check("union condition holds over one full phase cycle", union.holds);
            checks.check(
                "consensus within horizon (tol 1e-4)",
                detect_consensus(&run, 1e-4).is_some(),
            );
        }
        other => {
            return Err(Error::Config(format!(
                "unknown scenario {other:?}; expected example-fixed, counterexample, example-delay, or example-switching"
            )))
        }
    }
    Ok(checks.all_pass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScheduleSpec;

    fn fixed_cfg_text() -> &'static str {
        "n = 4\ntau_u_min = 0.2\ntau_u_max = 0.9\nK = 0\nseed = 1\nhorizon = 100\nsample_dt = 0.5\ninitial_state = [5, 6, 7, 8]\nstrategy = plain\ndelay_policy = none\nschedule = asynchronous\n\n[weights]\nweights = [0, 1, 1, 0]\nweights = [1, 0, 0, 0]\nweights = [0, 1, 0, 0]\nweights = [0, 0, 1, 0]\n\n[topology]\nkind = fixed\n"
    }

    #[test]
    fn run_command_outputs_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("fixed.cfg");
        fs::write(&config, fixed_cfg_text()).unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        run_command(&config, &out_a).unwrap();
        run_command(&config, &out_b).unwrap();
        for name in ["trajectories.csv", "events.csv", "summary.txt"] {
            let a = fs::read(out_a.join(name)).unwrap();
            let b = fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between reruns");
        }
    }

    #[test]
    fn zero_horizon_single_trajectory_row() {
        let cfg = {
            let mut c = scenario::example_fixed(1);
            c.horizon = 0.0;
            c
        };
        let sc = cfg.resolve(None).unwrap();
        let run = dynamics::run(&sc).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&cfg, &sc, &run, dir.path()).unwrap();
        let traj = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        let lines: Vec<&str> = traj.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "t,x_1,x_2,x_3,x_4");
        assert_eq!(lines[1], "0,5,6,7,8");
    }

    #[test]
    fn trajectory_rows_roundtrip_and_cover_events() {
        let mut cfg = scenario::example_fixed(5);
        cfg.horizon = 10.0;
        let sc = cfg.resolve(None).unwrap();
        let run = dynamics::run(&sc).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&cfg, &sc, &run, dir.path()).unwrap();
        let traj = fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        let rows: Vec<Vec<f64>> = traj
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        // every event time appears and every parsed value matches the
        // trajectory exactly (full round-trip precision)
        for &t in &run.events.times {
            assert!(rows.iter().any(|r| r[0] == t), "missing event time {t}");
        }
        for row in &rows {
            for (i, tr) in run.trajectories.iter().enumerate() {
                assert_eq!(row[i + 1], tr.evaluate(row[0]).unwrap());
            }
        }
    }

    #[test]
    fn batch_single_seed_matches_run_summary() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("fixed.cfg");
        fs::write(&config, fixed_cfg_text()).unwrap();
        batch_command(&config, "7..8", dir.path()).unwrap();
        let summary = fs::read_to_string(dir.path().join("batch_summary.csv")).unwrap();
        let mut lines = summary.lines();
        assert_eq!(
            lines.next().unwrap(),
            "seed,final_value,consensus_time,final_spread"
        );
        let row = lines.next().unwrap();
        assert!(row.starts_with("7,"));
        let cfg = load_config(&config).unwrap();
        let run = dynamics::run(&cfg.resolve(Some(7)).unwrap()).unwrap();
        let value: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(value, run.final_state()[0]);
        let finals = fs::read_to_string(dir.path().join("final_values.txt")).unwrap();
        assert_eq!(finals.lines().count(), 1);
    }

    #[test]
    fn batch_identical_seed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("fixed.cfg");
        fs::write(&config, fixed_cfg_text()).unwrap();
        let out_a = dir.path().join("a");
        let out_b = dir.path().join("b");
        batch_command(&config, "3..6", &out_a).unwrap();
        batch_command(&config, "3..6", &out_b).unwrap();
        assert_eq!(
            fs::read(out_a.join("batch_summary.csv")).unwrap(),
            fs::read(out_b.join("batch_summary.csv")).unwrap()
        );
    }

    #[test]
    fn bad_seed_range_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("fixed.cfg");
        fs::write(&config, fixed_cfg_text()).unwrap();
        for bad in ["5", "9..3", "a..b", "3..3"] {
            assert!(
                batch_command(&config, bad, dir.path()).is_err(),
                "{bad} accepted"
            );
        }
    }

    #[test]
    fn summary_reports_predicted_value_for_fixed_topology() {
        let mut cfg = scenario::example_fixed(2);
        cfg.schedule = ScheduleSpec::Synchronous;
        cfg.horizon = 120.0;
        let sc = cfg.resolve(None).unwrap();
        let run = dynamics::run(&sc).unwrap();
        let report = summary_report(&cfg, &sc, &run).unwrap();
        assert!(report.contains("predicted_value = "));
        let err: f64 = report
            .lines()
            .find_map(|l| l.strip_prefix("predicted_abs_error = "))
            .unwrap()
            .parse()
            .unwrap();
        assert!(err < 1e-6, "predicted error {err}");
    }

    #[test]
    fn reproduce_counterexample_passes() {
        let dir = tempfile::tempdir().unwrap();
        assert!(reproduce_command("counterexample", dir.path()).unwrap());
        assert!(dir.path().join("trajectories.csv").exists());
    }

    #[test]
    fn reproduce_unknown_name_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(reproduce_command("example-unknown", dir.path()).is_err());
    }
}
