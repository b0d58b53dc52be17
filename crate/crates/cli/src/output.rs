//! CSV renderers and atomic file writes.
//!
//! Column layouts are fixed:
//! - telemetry: `t,channel,ref_v,y_v,u_v,error_v,kp_code,ki_code,kd_code,mode,event`
//! - events: `t,channel,kind`
//! - metrics: `channel,overshoot,settling_time,iae,ise`
//! - swarm trace: `iteration,kp,ki,kd,fitness`
//!
//! Floats use Rust's shortest round-trip formatting, which is
//! deterministic, so equal seeds give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use retune_core::pso::SwarmTrace;
use retune_core::sim::{ChannelSummary, TelemetryRecord};
use retune_core::supervisor::SupervisorEvent;

pub const TELEMETRY_HEADER: &str = "t,channel,ref_v,y_v,u_v,error_v,kp_code,ki_code,kd_code,mode,event";
pub const EVENTS_HEADER: &str = "t,channel,kind";
pub const METRICS_HEADER: &str = "channel,overshoot,settling_time,iae,ise";
pub const SWARM_TRACE_HEADER: &str = "iteration,kp,ki,kd,fitness";

pub fn telemetry_csv(records: &[TelemetryRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(TELEMETRY_HEADER);
    out.push('\n');
    let mut event_buf = String::new();
    for r in records {
        event_buf.clear();
        for (i, kind) in r.events.iter().enumerate() {
            if i > 0 {
                event_buf.push(';');
            }
            event_buf.push_str(kind.as_str());
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.channel,
            r.ref_v,
            r.y_v,
            r.u_v,
            r.error_v,
            r.kp_code,
            r.ki_code,
            r.kd_code,
            r.mode.as_str(),
            event_buf,
        )
        .expect("string write");
    }
    out
}

pub fn events_csv(events: &[SupervisorEvent]) -> String {
    let mut out = String::from(EVENTS_HEADER);
    out.push('\n');
    for e in events {
        writeln!(out, "{},{},{}", e.time, e.channel, e.kind.as_str()).expect("string write");
    }
    out
}

pub fn metrics_csv(summaries: &[ChannelSummary]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for s in summaries {
        let settling = match s.metrics.settling_time {
            Some(t) => format!("{t}"),
            None => String::from("nan"),
        };
        writeln!(
            out,
            "{},{},{},{},{}",
            s.label, s.metrics.overshoot, settling, s.metrics.iae, s.metrics.ise
        )
        .expect("string write");
    }
    out
}

pub fn swarm_trace_csv(trace: &SwarmTrace) -> String {
    let mut out = String::from(SWARM_TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iteration, r.best_x[0], r.best_x[1], r.best_x[2], r.best_f
        )
        .expect("string write");
    }
    out
}

/// Writes through a temp file in the same directory and renames into
/// place, so a failed run never leaves a partial output.
pub fn write_atomic(path: &Path, contents: &str) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
