//! Convergence study: tuning cost as a function of swarm size.
//!
//! For each particle count the study tunes the scenario's first channel
//! once (same seed for every count, so runs differ only in swarm size) and
//! records the first iteration that closes 95% of the run's fitness gap,
//! plus wall-clock time. The seconds column measures this machine, so it
//! is the one output that is not reproducible byte for byte.

use std::fmt::Write as _;
use std::time::Instant;

use retune_core::pid::PidConfig;
use retune_core::pso::{run_pso, ChannelModel};
use retune_core::sim::Scenario;

pub const STUDY_HEADER: &str = "particles,iterations_to_threshold,seconds";

/// Residual fraction of the first-to-final fitness gap that counts as
/// converged.
pub const THRESHOLD_FRAC: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub particles: usize,
    pub iterations_to_threshold: usize,
    pub seconds: f64,
}

/// Runs the study on the scenario's first channel.
pub fn convergence_study(scenario: &Scenario, counts: &[usize]) -> Result<Vec<StudyRow>, String> {
    let ch = scenario
        .channels
        .first()
        .ok_or_else(|| String::from("convergence study needs at least one channel"))?;
    let plant = ch.plant.build().map_err(|e| e.to_string())?;
    let model = ChannelModel {
        plant,
        map: ch.map.clone(),
        ref_v: ch.reference.value_at(0.0),
        pid: PidConfig {
            dt: scenario.dt,
            ..ch.pid
        },
        window_s: scenario.eval_window_s,
    };
    let mut rows = Vec::with_capacity(counts.len());
    for &count in counts {
        if count == 0 {
            return Err(String::from("particle counts must be >= 1"));
        }
        let mut config = scenario.pso.clone();
        config.n_particles = count;
        config.seed = scenario.seed;
        let start = Instant::now();
        let (_, trace) = run_pso(&model, &config, &scenario.weights, &scenario.ladder);
        let seconds = start.elapsed().as_secs_f64();
        rows.push(StudyRow {
            particles: count,
            iterations_to_threshold: trace
                .iterations_to_threshold(THRESHOLD_FRAC)
                .unwrap_or(config.n_iterations),
            seconds,
        });
    }
    Ok(rows)
}

pub fn study_csv(rows: &[StudyRow]) -> String {
    let mut out = String::from(STUDY_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{}",
            r.particles, r.iterations_to_threshold, r.seconds
        )
        .expect("string write");
    }
    out
}
