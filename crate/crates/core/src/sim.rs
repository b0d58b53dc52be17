//! Fixed-step scenario engine.
//!
//! Wires N independent loops (plant, sensor map, PID) to the supervisor and
//! the shared tuner, injects disturbances, and records one telemetry row
//! per channel per step. Step order is fixed: sense, supervise, control,
//! actuate, integrate. A tuning grant runs the swarm search immediately but
//! charges its simulated cost (`n_iterations * evaluation window`) to the
//! timeline; the channel keeps running on its old gains until the new code
//! installs at the end of that interval.
//!
//! Channels are identified by their configured label (the `[channel.N]`
//! section number); internally they are dense indices.

use alloc::string::String;
use alloc::vec::Vec;

use crate::pid::{ComponentLadder, GainCode, PidConfig, PidController, PidError};
use crate::plants::{abs, FirstOrderPlant, Plant, PlantError, SecondOrderPlant, SensorMap};
use crate::pso::{run_pso, ChannelModel, FitnessWeights, PsoConfig, SwarmTrace};
use crate::rng::splitmix64;
use crate::supervisor::{EventKind, Mode, Supervisor, SupervisorConfig, SupervisorEvent};

/// Validation failures, one named problem per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub problems: Vec<String>,
}

impl core::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "invalid scenario:")?;
        for p in &self.problems {
            write!(f, "\n  {p}")?;
        }
        Ok(())
    }
}

impl core::error::Error for ValidationError {}

/// Scenario execution errors.
#[derive(Debug)]
pub enum SimError {
    Validation(ValidationError),
    Plant(PlantError),
    Pid(PidError),
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::Validation(e) => write!(f, "{e}"),
            SimError::Plant(e) => write!(f, "plant fault: {e}"),
            SimError::Pid(e) => write!(f, "controller fault: {e}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<PlantError> for SimError {
    fn from(e: PlantError) -> Self {
        SimError::Plant(e)
    }
}

impl From<PidError> for SimError {
    fn from(e: PidError) -> Self {
        SimError::Pid(e)
    }
}

/// Plant parameters before construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlantConfig {
    FirstOrder { gain: f64, tau: f64 },
    SecondOrder { omega_n: f64, zeta: f64, gain: f64 },
}

impl PlantConfig {
    pub fn build(&self) -> Result<Plant, PlantError> {
        match *self {
            PlantConfig::FirstOrder { gain, tau } => {
                Ok(Plant::FirstOrder(FirstOrderPlant::new(gain, tau)?))
            }
            PlantConfig::SecondOrder {
                omega_n,
                zeta,
                gain,
            } => Ok(Plant::SecondOrder(SecondOrderPlant::new(
                omega_n, zeta, gain,
            )?)),
        }
    }
}

/// Reference signal for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefSpec {
    Constant(f64),
    Step { from: f64, to: f64, at: f64 },
}

impl RefSpec {
    pub fn value_at(&self, t: f64) -> f64 {
        match *self {
            RefSpec::Constant(v) => v,
            RefSpec::Step { from, to, at } => {
                if t < at {
                    from
                } else {
                    to
                }
            }
        }
    }

    fn levels(&self) -> (f64, f64) {
        match *self {
            RefSpec::Constant(v) => (v, v),
            RefSpec::Step { from, to, .. } => (from.min(to), from.max(to)),
        }
    }
}

/// One control channel: plant, sensor map, initial gains, reference.
#[derive(Debug, Clone)]
pub struct ChannelConfig {
    /// User-facing id; the `[channel.N]` section number.
    pub label: u32,
    pub name: String,
    pub plant: PlantConfig,
    pub map: SensorMap,
    pub initial_code: GainCode,
    pub reference: RefSpec,
    /// Actuator limits and derivative filter; `dt` is overridden by the
    /// scenario step.
    pub pid: PidConfig,
    /// Start at the reference with the integrator preloaded to hold it,
    /// rather than cold at zero (a cold start trips the comparator at
    /// t = 0 by construction).
    pub start_at_reference: bool,
    /// Shaft teeth for tachometer channels; reported, not fed back.
    pub tach_teeth: Option<u32>,
}

impl ChannelConfig {
    /// DC motor speed loop: 5 V drive tops out at 3000 RPM, tau 0.5 s.
    pub fn motor_default(label: u32) -> Self {
        Self {
            label,
            name: String::from("motor"),
            plant: PlantConfig::FirstOrder {
                gain: 600.0,
                tau: 0.5,
            },
            map: SensorMap::tachometer_default(),
            initial_code: GainCode::new(4, 1, 0).unwrap(),
            reference: RefSpec::Constant(2.5),
            pid: PidConfig::default(),
            start_at_reference: true,
            tach_teeth: Some(2),
        }
    }

    /// Temperature loop: slow first-order plant, 30 degC per volt.
    pub fn temperature_default(label: u32) -> Self {
        Self {
            label,
            name: String::from("temperature"),
            plant: PlantConfig::FirstOrder {
                gain: 30.0,
                tau: 20.0,
            },
            map: SensorMap::temperature_default(),
            initial_code: GainCode::new(15, 1, 0).unwrap(),
            reference: RefSpec::Constant(2.5),
            pid: PidConfig::default(),
            start_at_reference: true,
            tach_teeth: None,
        }
    }

    /// Gyroscope rate loop: second-order plant, full drive reaches full
    /// scale (23.27 rad/s at 5 V).
    pub fn gyroscope_default(label: u32) -> Self {
        Self {
            label,
            name: String::from("gyro"),
            plant: PlantConfig::SecondOrder {
                omega_n: 20.0,
                zeta: 0.7,
                gain: 4.654,
            },
            map: SensorMap::gyroscope_default(),
            initial_code: GainCode::new(7, 0, 2).unwrap(),
            reference: RefSpec::Constant(3.5),
            pid: PidConfig::default(),
            start_at_reference: true,
            tach_teeth: None,
        }
    }
}

/// How a disturbance enters the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceKind {
    /// Additive volts on the measured output between `start` and `stop`.
    Pulse,
    /// Additive volts on the measured output from `start` onward.
    SustainedStep,
    /// Multiplies a plant parameter at `start`; this is the kind that
    /// genuinely requires retuning rather than mere rejection.
    ParameterShift,
}

/// Which parameter a [`DisturbanceKind::ParameterShift`] scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShiftTarget {
    #[default]
    Gain,
    Tau,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceSpec {
    /// Channel label (not index).
    pub channel: u32,
    pub kind: DisturbanceKind,
    pub start: f64,
    /// Pulse only.
    pub stop: Option<f64>,
    /// Volts for the signal kinds, multiplier for a parameter shift.
    pub magnitude: f64,
    pub shift_target: ShiftTarget,
}

/// A complete experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    pub channels: Vec<ChannelConfig>,
    pub disturbances: Vec<DisturbanceSpec>,
    pub supervisor: SupervisorConfig,
    pub pso: PsoConfig,
    pub weights: FitnessWeights,
    pub ladder: ComponentLadder,
    /// Fitness evaluation window in seconds; one "time equivalent".
    pub eval_window_s: f64,
}

impl Scenario {
    /// The stock three-channel setup: motor, temperature, gyro.
    pub fn default_three_channel() -> Self {
        let ladder = ComponentLadder::default();
        let eval_window_s = 5.0;
        Self {
            duration: 300.0,
            dt: 1e-3,
            seed: 42,
            channels: alloc::vec![
                ChannelConfig::motor_default(1),
                ChannelConfig::temperature_default(2),
                ChannelConfig::gyroscope_default(3),
            ],
            disturbances: Vec::new(),
            supervisor: SupervisorConfig::with_window(eval_window_s),
            pso: PsoConfig::for_ladder(&ladder),
            weights: FitnessWeights::default(),
            ladder,
            eval_window_s,
        }
    }

    /// Simulated steps, endpoints included (`floor(duration/dt)` plus the
    /// t = 0 snapshot).
    pub fn n_steps(&self) -> u64 {
        libm::floor(self.duration / self.dt + 1e-9) as u64
    }

    /// Simulated cost of one tuning run, in steps.
    pub fn tuning_steps(&self) -> u64 {
        let per_window = libm::round(self.eval_window_s / self.dt).max(1.0);
        (self.pso.n_iterations as f64 * per_window) as u64
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut problems = Vec::new();
        if !(self.duration > 0.0) {
            problems.push(String::from("sim.duration: must be > 0"));
        }
        if !(self.dt > 0.0) {
            problems.push(String::from("sim.dt: must be > 0"));
        } else if self.dt > self.duration {
            problems.push(String::from("sim.dt: must be <= duration"));
        }
        if !(self.eval_window_s > 0.0) {
            problems.push(String::from("pso.eval_window: must be > 0"));
        }
        if self.channels.is_empty() {
            problems.push(String::from("channel: at least one required"));
        }
        for ch in &self.channels {
            let sec = ch.label;
            match ch.plant {
                PlantConfig::FirstOrder { gain, tau } => {
                    if !(tau > 0.0) {
                        problems.push(alloc::format!("channel.{sec}.tau: must be > 0"));
                    }
                    if ch.start_at_reference && gain == 0.0 {
                        problems.push(alloc::format!(
                            "channel.{sec}.gain: must be nonzero to start at reference"
                        ));
                    }
                }
                PlantConfig::SecondOrder { omega_n, zeta, gain } => {
                    if !(omega_n > 0.0) {
                        problems.push(alloc::format!("channel.{sec}.omega_n: must be > 0"));
                    }
                    if !(zeta > 0.0) {
                        problems.push(alloc::format!("channel.{sec}.zeta: must be > 0"));
                    }
                    if ch.start_at_reference && gain == 0.0 {
                        problems.push(alloc::format!(
                            "channel.{sec}.gain: must be nonzero to start at reference"
                        ));
                    }
                }
            }
            if let Err(e) = ch.pid.validate() {
                problems.push(alloc::format!("channel.{sec}.pid: {e}"));
            }
            let (lo, hi) = ch.reference.levels();
            if lo < ch.map.v_min - 1e-9 || hi > ch.map.v_max + 1e-9 {
                problems.push(alloc::format!(
                    "channel.{sec}.reference: outside the sensor swing [{}, {}]",
                    ch.map.v_min,
                    ch.map.v_max
                ));
            }
            if self.channels.iter().filter(|c| c.label == sec).count() > 1 {
                problems.push(alloc::format!("channel.{sec}: duplicate label"));
            }
        }
        if let Err(e) = self.supervisor.validate() {
            problems.push(alloc::format!("supervisor.{e}"));
        }
        if self.supervisor.n_channels != self.channels.len() {
            problems.push(alloc::format!(
                "supervisor.n_channels: {} does not match {} configured channels",
                self.supervisor.n_channels,
                self.channels.len()
            ));
        }
        if let Err(e) = self.pso.validate() {
            problems.push(alloc::format!("pso.{e}"));
        }
        if let Err(e) = self.weights.validate() {
            problems.push(alloc::format!("fitness.{e}"));
        }
        if let Err(e) = self.ladder.validate() {
            problems.push(alloc::format!("ladder: {e}"));
        }
        for (i, d) in self.disturbances.iter().enumerate() {
            let sec = i + 1;
            if !self.channels.iter().any(|c| c.label == d.channel) {
                problems.push(alloc::format!(
                    "disturbance.{sec}.channel: no channel labeled {}",
                    d.channel
                ));
            }
            if !(d.start >= 0.0 && d.start < self.duration) {
                problems.push(alloc::format!(
                    "disturbance.{sec}.start: must lie in [0, duration)"
                ));
            }
            match (d.kind, d.stop) {
                (DisturbanceKind::Pulse, Some(stop)) => {
                    if !(stop > d.start) {
                        problems.push(alloc::format!(
                            "disturbance.{sec}.stop: must be > start"
                        ));
                    }
                }
                (DisturbanceKind::Pulse, None) => {
                    problems.push(alloc::format!("disturbance.{sec}.stop: required for pulse"));
                }
                (_, Some(_)) => {
                    problems.push(alloc::format!(
                        "disturbance.{sec}.stop: only valid for pulse"
                    ));
                }
                (_, None) => {}
            }
            if !d.magnitude.is_finite() {
                problems.push(alloc::format!("disturbance.{sec}.magnitude: must be finite"));
            }
            if d.kind == DisturbanceKind::ParameterShift && !(d.magnitude > 0.0) {
                problems.push(alloc::format!(
                    "disturbance.{sec}.magnitude: shift multiplier must be > 0"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { problems })
        }
    }
}

/// One row of the telemetry table.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryRecord {
    pub t: f64,
    /// Channel label.
    pub channel: u32,
    pub ref_v: f64,
    pub y_v: f64,
    pub u_v: f64,
    pub error_v: f64,
    pub kp_code: u8,
    pub ki_code: u8,
    pub kd_code: u8,
    pub mode: Mode,
    /// Events emitted for this channel this step, in order.
    pub events: Vec<EventKind>,
}

/// Aggregate quality measures for one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Peak excess over the reference, normalized by the reference span.
    pub overshoot: f64,
    /// First entry into the +-epsilon_v band that is never left again;
    /// `None` when the run ends outside the band.
    pub settling_time: Option<f64>,
    /// Volt-seconds.
    pub iae: f64,
    /// Volt^2-seconds.
    pub ise: f64,
}

/// Final per-channel summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSummary {
    pub label: u32,
    pub name: String,
    pub final_mode: Mode,
    pub metrics: Metrics,
    /// Tachometer output frequency at the final speed, when applicable.
    pub final_tach_hz: Option<f64>,
}

/// Everything a scenario run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub telemetry: Vec<TelemetryRecord>,
    /// All supervisor events; `channel` carries the label.
    pub events: Vec<SupervisorEvent>,
    pub summaries: Vec<ChannelSummary>,
    /// One trace per tuning run, tagged with the channel label.
    pub tuning_traces: Vec<(u32, SwarmTrace)>,
}

struct LiveChannel {
    cfg: ChannelConfig,
    plant: Plant,
    controller: PidController,
}

struct PendingTuning {
    idx: usize,
    complete_step: u64,
    code: GainCode,
}

fn step_at_or_after(t: f64, dt: f64) -> u64 {
    libm::ceil(t / dt - 1e-9).max(0.0) as u64
}

/// Runs a scenario to completion.
pub fn run_scenario(scenario: &Scenario) -> Result<RunResult, SimError> {
    scenario.validate().map_err(SimError::Validation)?;
    let dt = scenario.dt;
    let n_steps = scenario.n_steps();
    let n_ch = scenario.channels.len();

    let mut live = Vec::with_capacity(n_ch);
    for cfg in &scenario.channels {
        let mut plant = cfg.plant.build()?;
        let pid_config = PidConfig {
            dt,
            ..cfg.pid
        };
        let mut controller = PidController::from_code(cfg.initial_code, &scenario.ladder, pid_config);
        if cfg.start_at_reference {
            let ref0 = cfg.reference.value_at(0.0);
            let y0 = cfg.map.to_physical(ref0)?;
            plant.set_resting_output(y0);
            controller.preload_for_hold(y0 / plant.dc_gain());
        }
        live.push(LiveChannel {
            cfg: cfg.clone(),
            plant,
            controller,
        });
    }

    let sup_config = SupervisorConfig {
        n_channels: n_ch,
        ..scenario.supervisor
    };
    let mut supervisor = Supervisor::new(sup_config, dt).expect("validated config");

    // disturbances resolved to channel indices and step windows
    struct ActiveDisturbance {
        idx: usize,
        kind: DisturbanceKind,
        start_step: u64,
        stop_step: Option<u64>,
        magnitude: f64,
        shift_target: ShiftTarget,
    }
    let disturbances: Vec<ActiveDisturbance> = scenario
        .disturbances
        .iter()
        .map(|d| ActiveDisturbance {
            idx: scenario
                .channels
                .iter()
                .position(|c| c.label == d.channel)
                .expect("validated label"),
            kind: d.kind,
            start_step: step_at_or_after(d.start, dt),
            stop_step: d.stop.map(|s| step_at_or_after(s, dt)),
            magnitude: d.magnitude,
            shift_target: d.shift_target,
        })
        .collect();

    let tuning_steps = scenario.tuning_steps();
    let mut pending: Option<PendingTuning> = None;
    let mut tuning_counter: u64 = 0;

    let mut telemetry = Vec::with_capacity((n_steps as usize + 1) * n_ch);
    let mut events: Vec<SupervisorEvent> = Vec::new();
    let mut tuning_traces = Vec::new();

    let mut measurements = alloc::vec![(0.0, 0.0); n_ch];
    let mut step_events: Vec<Vec<EventKind>> = alloc::vec![Vec::new(); n_ch];

    for k in 0..=n_steps {
        let t = k as f64 * dt;
        for ev in step_events.iter_mut() {
            ev.clear();
        }

        // parameter shifts fire once, at the first step at or after start
        for d in &disturbances {
            if d.kind == DisturbanceKind::ParameterShift && d.start_step == k {
                match d.shift_target {
                    ShiftTarget::Gain => live[d.idx].plant.scale_gain(d.magnitude),
                    ShiftTarget::Tau => live[d.idx].plant.scale_tau(d.magnitude),
                }
            }
        }

        // sense: sensor voltage plus any active additive disturbances
        for (i, ch) in live.iter().enumerate() {
            let mut y_v = ch.cfg.map.to_voltage(ch.plant.output());
            for d in &disturbances {
                if d.idx != i {
                    continue;
                }
                let active = match d.kind {
                    DisturbanceKind::Pulse => {
                        k >= d.start_step && k < d.stop_step.unwrap_or(u64::MAX)
                    }
                    DisturbanceKind::SustainedStep => k >= d.start_step,
                    DisturbanceKind::ParameterShift => false,
                };
                if active {
                    y_v += d.magnitude;
                }
            }
            let ref_v = ch.cfg.reference.value_at(t);
            measurements[i] = (y_v, ref_v);
        }

        // completed tuning installs its code and frees the tuner before the
        // supervisor runs, so a queued channel can be granted this same step
        if let Some(p) = &pending {
            if p.complete_step == k {
                let p = pending.take().unwrap();
                live[p.idx]
                    .controller
                    .install_code(p.code, &scenario.ladder);
                for ev in supervisor.complete_tuning(p.idx, k) {
                    step_events[ev.channel].push(ev.kind);
                    events.push(SupervisorEvent {
                        channel: live[ev.channel].cfg.label as usize,
                        ..ev
                    });
                }
            }
        }

        // supervise
        let outcome = supervisor.step(&measurements, k);
        for ev in &outcome.events {
            step_events[ev.channel].push(ev.kind);
            events.push(SupervisorEvent {
                channel: live[ev.channel].cfg.label as usize,
                ..*ev
            });
        }
        if let Some(idx) = outcome.granted {
            // snapshot the channel as it stands (including any parameter
            // shifts) and search on a quiescent replica
            let ch = &live[idx];
            let model = ChannelModel {
                plant: ch.plant.clone(),
                map: ch.cfg.map.clone(),
                ref_v: ch.cfg.reference.value_at(t),
                pid: ch.controller.config,
                window_s: scenario.eval_window_s,
            };
            let mut pso_config = scenario.pso.clone();
            pso_config.seed = splitmix64(
                scenario.seed ^ splitmix64(((ch.cfg.label as u64) << 32) | tuning_counter),
            );
            tuning_counter += 1;
            let (code, trace) = run_pso(&model, &pso_config, &scenario.weights, &scenario.ladder);
            tuning_traces.push((ch.cfg.label, trace));
            pending = Some(PendingTuning {
                idx,
                complete_step: k + tuning_steps,
                code,
            });
        }

        // control, record, integrate
        for (i, ch) in live.iter_mut().enumerate() {
            let (y_v, ref_v) = measurements[i];
            let error_v = ref_v - y_v;
            let u_v = ch.controller.step(error_v)?;
            telemetry.push(TelemetryRecord {
                t,
                channel: ch.cfg.label,
                ref_v,
                y_v,
                u_v,
                error_v,
                kp_code: ch.controller.code.kp_code,
                ki_code: ch.controller.code.ki_code,
                kd_code: ch.controller.code.kd_code,
                mode: supervisor.mode(i),
                events: step_events[i].clone(),
            });
            if k < n_steps {
                ch.plant.step(u_v, dt)?;
            }
        }
    }

    let mut summaries = Vec::with_capacity(n_ch);
    for (i, ch) in live.iter().enumerate() {
        let rows: Vec<&TelemetryRecord> = telemetry
            .iter()
            .filter(|r| r.channel == ch.cfg.label)
            .collect();
        let metrics = compute_metrics_rows(&rows, scenario.supervisor.epsilon_v);
        let final_tach_hz = ch.cfg.tach_teeth.map(|teeth| {
            let rpm = ch.plant.output().max(0.0);
            rpm * teeth as f64 / 60.0
        });
        summaries.push(ChannelSummary {
            label: ch.cfg.label,
            name: ch.cfg.name.clone(),
            final_mode: supervisor.mode(i),
            metrics,
            final_tach_hz,
        });
    }

    Ok(RunResult {
        telemetry,
        events,
        summaries,
        tuning_traces,
    })
}

/// Metrics over one channel's telemetry: trapezoidal IAE/ISE, normalized
/// overshoot, and the settling time into the comparator band.
pub fn compute_metrics(records: &[TelemetryRecord], epsilon_v: f64) -> Metrics {
    let rows: Vec<&TelemetryRecord> = records.iter().collect();
    compute_metrics_rows(&rows, epsilon_v)
}

fn compute_metrics_rows(rows: &[&TelemetryRecord], epsilon_v: f64) -> Metrics {
    assert!(!rows.is_empty(), "metrics need at least one record");
    let mut iae = 0.0;
    let mut ise = 0.0;
    let mut peak_over: f64 = 0.0;
    let mut ref_lo = f64::INFINITY;
    let mut ref_hi = f64::NEG_INFINITY;
    for pair in rows.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let dt = b.t - a.t;
        iae += 0.5 * dt * (abs(a.error_v) + abs(b.error_v));
        ise += 0.5 * dt * (a.error_v * a.error_v + b.error_v * b.error_v);
    }
    for r in rows {
        peak_over = peak_over.max(r.y_v - r.ref_v);
        ref_lo = ref_lo.min(r.ref_v);
        ref_hi = ref_hi.max(r.ref_v);
    }
    let mut span = ref_hi - ref_lo;
    if span < 1e-12 {
        span = abs(rows[0].ref_v);
    }
    let overshoot = if span > 1e-12 {
        peak_over.max(0.0) / span
    } else {
        0.0
    };

    // the sample after the last out-of-band excursion decides settling
    let last_outside = rows.iter().rposition(|r| abs(r.error_v) > epsilon_v);
    let settling_time = match last_outside {
        None => Some(rows[0].t),
        Some(i) if i + 1 < rows.len() => Some(rows[i + 1].t),
        Some(_) => None,
    };
    Metrics {
        overshoot,
        settling_time,
        iae,
        ise,
    }
}
