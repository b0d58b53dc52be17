//! Disturbance detection and two-tier recovery across N channels.
//!
//! Each channel's loop is watched by a comparator with hysteresis. A
//! comparator trip starts a grace period of `t_o` seconds in which the PID
//! keeps running with its current gains (tier 1). If the error is back
//! inside the band before the deadline the channel simply returns to
//! nominal; if not, the channel is queued for the single shared swarm tuner
//! (tier 2). The allocator grants the tuner FIFO, one channel at a time.
//!
//! After a tuning pass the channel gets a fresh grace period under its new
//! gains; if even those fail to bring the error back in band the channel is
//! queued again, tagged [`EventKind::Requeued`] instead of a second
//! escalation so the escalation/detection pairing stays one-to-one.
//!
//! Times are tracked as step indices internally; event timestamps are
//! `step * dt` seconds.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::plants::abs;

/// Where a channel currently stands in the recovery protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Nominal,
    PidRecovery,
    AwaitingTuner,
    Tuning,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Nominal => "Nominal",
            Mode::PidRecovery => "PidRecovery",
            Mode::AwaitingTuner => "AwaitingTuner",
            Mode::Tuning => "Tuning",
        }
    }
}

/// Comparator threshold, recovery deadline, and channel count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorConfig {
    /// Comparator trip threshold in volts.
    pub epsilon_v: f64,
    /// Recovery requires the error back under `epsilon_v - hysteresis_v`.
    pub hysteresis_v: f64,
    /// Grace period in seconds before escalating to the tuner.
    pub t_o: f64,
    pub n_channels: usize,
}

impl SupervisorConfig {
    /// Defaults except `t_o`, which is pinned to three time equivalents of
    /// the given evaluation window.
    pub fn with_window(eval_window_s: f64) -> Self {
        Self {
            epsilon_v: 0.2,
            hysteresis_v: 0.05,
            t_o: 3.0 * eval_window_s,
            n_channels: 3,
        }
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.epsilon_v > 0.0) {
            return Err("epsilon_v must be > 0");
        }
        if !(self.hysteresis_v >= 0.0 && self.hysteresis_v < self.epsilon_v) {
            return Err("hysteresis_v must be in [0, epsilon_v)");
        }
        if !(self.t_o > 0.0) {
            return Err("t_o must be > 0");
        }
        if self.n_channels < 1 {
            return Err("n_channels must be >= 1");
        }
        Ok(())
    }
}

/// Comparator with hysteresis: trips when `|y - ref|` exceeds `epsilon_v`,
/// and once tripped only clears below `epsilon_v - hysteresis_v`.
pub fn compare(y_v: f64, ref_v: f64, config: &SupervisorConfig, was_disturbed: bool) -> bool {
    let e = abs(y_v - ref_v);
    if was_disturbed {
        e >= config.epsilon_v - config.hysteresis_v
    } else {
        e > config.epsilon_v
    }
}

/// What happened to a channel and when.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    DisturbanceDetected,
    PidRecovered,
    EscalatedToPso,
    TuningStarted,
    TuningFinished,
    Requeued,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::DisturbanceDetected => "DisturbanceDetected",
            EventKind::PidRecovered => "PidRecovered",
            EventKind::EscalatedToPso => "EscalatedToPso",
            EventKind::TuningStarted => "TuningStarted",
            EventKind::TuningFinished => "TuningFinished",
            EventKind::Requeued => "Requeued",
        }
    }

    /// True for the kinds that involve the shared tuner.
    pub fn is_tuner_event(&self) -> bool {
        matches!(
            self,
            EventKind::EscalatedToPso
                | EventKind::TuningStarted
                | EventKind::TuningFinished
                | EventKind::Requeued
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupervisorEvent {
    /// Seconds.
    pub time: f64,
    pub channel: usize,
    pub kind: EventKind,
}

/// Per-channel protocol state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelState {
    pub mode: Mode,
    pub mode_entered_step: u64,
    /// Escalation deadline; meaningful only in `PidRecovery`.
    pub deadline_step: u64,
    /// Escalations in the current disturbance episode; resets on recovery.
    episode_escalations: u32,
}

impl ChannelState {
    fn new() -> Self {
        Self {
            mode: Mode::Nominal,
            mode_entered_step: 0,
            deadline_step: 0,
            episode_escalations: 0,
        }
    }
}

/// FIFO queue of channels waiting for the tuner plus the active grant.
///
/// Invariants are hard assertions: at most one active, no duplicates, the
/// active channel never queued.
#[derive(Debug, Clone, Default)]
pub struct TunerAllocator {
    queue: VecDeque<usize>,
    active: Option<usize>,
}

impl TunerAllocator {
    pub fn active(&self) -> Option<usize> {
        self.active
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    fn enqueue(&mut self, channel: usize) {
        assert!(
            !self.queue.contains(&channel),
            "channel {channel} queued twice"
        );
        assert_ne!(
            self.active,
            Some(channel),
            "active channel {channel} re-queued"
        );
        self.queue.push_back(channel);
    }

    fn grant(&mut self) -> Option<usize> {
        if self.active.is_some() {
            return None;
        }
        let channel = self.queue.pop_front()?;
        self.active = Some(channel);
        Some(channel)
    }

    fn release(&mut self, channel: usize) {
        assert_eq!(
            self.active,
            Some(channel),
            "released channel {channel} was not active"
        );
        self.active = None;
    }
}

/// Result of one supervisory step.
#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub events: Vec<SupervisorEvent>,
    /// Channel granted the tuner this step, if any; the caller starts a
    /// tuning run for it.
    pub granted: Option<usize>,
}

/// The per-channel state machines plus the shared tuner allocator,
/// advanced once per simulation step from a pre-step snapshot.
#[derive(Debug, Clone)]
pub struct Supervisor {
    config: SupervisorConfig,
    dt: f64,
    t_o_steps: u64,
    channels: Vec<ChannelState>,
    alloc: TunerAllocator,
}

impl Supervisor {
    pub fn new(config: SupervisorConfig, dt: f64) -> Result<Self, &'static str> {
        config.validate()?;
        if !(dt > 0.0) {
            return Err("dt must be > 0");
        }
        let t_o_steps = (libm::round(config.t_o / dt) as u64).max(1);
        Ok(Self {
            config,
            dt,
            t_o_steps,
            channels: alloc::vec![ChannelState::new(); config.n_channels],
            alloc: TunerAllocator::default(),
        })
    }

    pub fn config(&self) -> &SupervisorConfig {
        &self.config
    }

    pub fn mode(&self, channel: usize) -> Mode {
        self.channels[channel].mode
    }

    pub fn state(&self, channel: usize) -> &ChannelState {
        &self.channels[channel]
    }

    pub fn allocator(&self) -> &TunerAllocator {
        &self.alloc
    }

    fn time_of(&self, step: u64) -> f64 {
        step as f64 * self.dt
    }

    /// Advances every channel from the same pre-step snapshot of
    /// `(y_v, ref_v)` pairs, then hands the tuner to the queue head if it
    /// is idle. Channels are processed in index order, which is also the
    /// FIFO admission order for simultaneous escalations.
    pub fn step(&mut self, measurements: &[(f64, f64)], step: u64) -> StepOutcome {
        assert_eq!(
            measurements.len(),
            self.channels.len(),
            "one measurement per channel"
        );
        let mut out = StepOutcome::default();
        let t = self.time_of(step);
        for (id, &(y_v, ref_v)) in measurements.iter().enumerate() {
            let ch = &mut self.channels[id];
            match ch.mode {
                Mode::Nominal => {
                    if compare(y_v, ref_v, &self.config, false) {
                        ch.mode = Mode::PidRecovery;
                        ch.mode_entered_step = step;
                        ch.deadline_step = step + self.t_o_steps;
                        ch.episode_escalations = 0;
                        out.events.push(SupervisorEvent {
                            time: t,
                            channel: id,
                            kind: EventKind::DisturbanceDetected,
                        });
                    }
                }
                Mode::PidRecovery => {
                    if !compare(y_v, ref_v, &self.config, true) {
                        ch.mode = Mode::Nominal;
                        ch.mode_entered_step = step;
                        ch.episode_escalations = 0;
                        out.events.push(SupervisorEvent {
                            time: t,
                            channel: id,
                            kind: EventKind::PidRecovered,
                        });
                    } else if step >= ch.deadline_step {
                        let kind = if ch.episode_escalations == 0 {
                            EventKind::EscalatedToPso
                        } else {
                            EventKind::Requeued
                        };
                        ch.episode_escalations += 1;
                        ch.mode = Mode::AwaitingTuner;
                        ch.mode_entered_step = step;
                        self.alloc.enqueue(id);
                        out.events.push(SupervisorEvent {
                            time: t,
                            channel: id,
                            kind,
                        });
                    }
                }
                // queued channels wait their turn even if the error drifts
                // back in band; the tuner run they asked for still happens
                Mode::AwaitingTuner | Mode::Tuning => {}
            }
        }
        if let Some(id) = self.alloc.grant() {
            self.channels[id].mode = Mode::Tuning;
            self.channels[id].mode_entered_step = step;
            out.events.push(SupervisorEvent {
                time: t,
                channel: id,
                kind: EventKind::TuningStarted,
            });
            out.granted = Some(id);
        }
        out
    }

    /// Marks a tuning run finished: the tuner is released and the channel
    /// gets a fresh grace period under its newly installed gains.
    pub fn complete_tuning(&mut self, channel: usize, step: u64) -> Vec<SupervisorEvent> {
        assert_eq!(
            self.channels[channel].mode,
            Mode::Tuning,
            "channel {channel} finished tuning but was not in Tuning"
        );
        self.alloc.release(channel);
        let ch = &mut self.channels[channel];
        ch.mode = Mode::PidRecovery;
        ch.mode_entered_step = step;
        ch.deadline_step = step + self.t_o_steps;
        alloc::vec![SupervisorEvent {
            time: self.time_of(step),
            channel,
            kind: EventKind::TuningFinished,
        }]
    }
}
