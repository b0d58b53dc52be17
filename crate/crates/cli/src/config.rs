//! Scenario file parsing.
//!
//! Scenarios are TOML with numbered sections for channels and disturbances:
//!
//! ```toml
//! [sim]
//! duration = 60.0
//! dt = 0.001
//! seed = 42
//!
//! [channel.1]
//! preset = "motor"            # motor | temperature | gyro
//! code = [4, 1, 0]
//!
//! [disturbance.1]
//! channel = 1
//! kind = "pulse"              # pulse | step | parameter_shift
//! start = 30.0
//! stop = 40.0
//! magnitude = 1.0
//! ```
//!
//! Every key has a documented default; an empty file is the stock
//! three-channel setup (motor, temperature, gyro). Unknown keys are
//! rejected, naming the key; malformed values are rejected with the line
//! number from the TOML parser.

use std::collections::BTreeMap;

use serde::Deserialize;

use retune_core::pid::{AntiWindup, ComponentLadder, GainCode, PidConfig};
use retune_core::plants::{SensorKind, SensorMap};
use retune_core::sim::{
    ChannelConfig, DisturbanceKind, DisturbanceSpec, PlantConfig, RefSpec, Scenario, ShiftTarget,
};
use retune_core::supervisor::SupervisorConfig;
use retune_core::pso::{FitnessWeights, PsoConfig};

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    sim: Option<RawSim>,
    pso: Option<RawPso>,
    fitness: Option<RawFitness>,
    supervisor: Option<RawSupervisor>,
    ladder: Option<RawLadder>,
    pid: Option<RawPid>,
    channel: Option<BTreeMap<String, RawChannel>>,
    disturbance: Option<BTreeMap<String, RawDisturbance>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSim {
    duration: Option<f64>,
    dt: Option<f64>,
    seed: Option<u64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPso {
    particles: Option<usize>,
    iterations: Option<usize>,
    w: Option<f64>,
    c1: Option<f64>,
    c2: Option<f64>,
    eval_window: Option<f64>,
    bounds_lo: Option<[f64; 3]>,
    bounds_hi: Option<[f64; 3]>,
    v_max: Option<[f64; 3]>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFitness {
    alpha: Option<f64>,
    beta: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSupervisor {
    epsilon_v: Option<f64>,
    hysteresis_v: Option<f64>,
    t_o: Option<f64>,
    n_channels: Option<usize>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLadder {
    r1: Option<f64>,
    r2_min: Option<f64>,
    r2_max: Option<f64>,
    ri_min: Option<f64>,
    ri_max: Option<f64>,
    ci: Option<f64>,
    rd_min: Option<f64>,
    rd_max: Option<f64>,
    cd: Option<f64>,
}

#[derive(Debug, Deserialize, Default, Clone, Copy)]
#[serde(deny_unknown_fields)]
struct RawPid {
    u_min: Option<f64>,
    u_max: Option<f64>,
    d_filter_n: Option<f64>,
    anti_windup: Option<RawAntiWindup>,
}

#[derive(Debug, Deserialize, Clone, Copy)]
#[serde(rename_all = "snake_case")]
enum RawAntiWindup {
    Clamp,
    ConditionalIntegration,
}

impl From<RawAntiWindup> for AntiWindup {
    fn from(raw: RawAntiWindup) -> Self {
        match raw {
            RawAntiWindup::Clamp => AntiWindup::Clamp,
            RawAntiWindup::ConditionalIntegration => AntiWindup::ConditionalIntegration,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    preset: Option<String>,
    name: Option<String>,
    plant: Option<String>,
    gain: Option<f64>,
    tau: Option<f64>,
    omega_n: Option<f64>,
    zeta: Option<f64>,
    kind: Option<String>,
    scale: Option<f64>,
    offset: Option<f64>,
    v_min: Option<f64>,
    v_max: Option<f64>,
    phys_min: Option<f64>,
    phys_max: Option<f64>,
    reference: Option<f64>,
    ref_step_to: Option<f64>,
    ref_step_at: Option<f64>,
    code: Option<Vec<u8>>,
    teeth: Option<u32>,
    start_at_reference: Option<bool>,
    u_min: Option<f64>,
    u_max: Option<f64>,
    d_filter_n: Option<f64>,
    anti_windup: Option<RawAntiWindup>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawDisturbance {
    channel: Option<u32>,
    kind: Option<String>,
    start: Option<f64>,
    stop: Option<f64>,
    magnitude: Option<f64>,
    param: Option<String>,
}

/// A scenario-file problem, already formatted for the user.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn sorted_sections<T>(
    map: Option<BTreeMap<String, T>>,
    section: &str,
) -> Result<Vec<(u32, T)>, ConfigError> {
    let mut out = Vec::new();
    if let Some(map) = map {
        for (key, value) in map {
            let label: u32 = key.parse().map_err(|_| {
                ConfigError(format!(
                    "{section}.{key}: section label must be a positive integer"
                ))
            })?;
            if label == 0 {
                return Err(ConfigError(format!(
                    "{section}.{key}: section label must be >= 1"
                )));
            }
            out.push((label, value));
        }
    }
    out.sort_by_key(|(label, _)| *label);
    Ok(out)
}

fn build_channel(
    label: u32,
    raw: &RawChannel,
    global_pid: &RawPid,
) -> Result<ChannelConfig, ConfigError> {
    let sec = format!("channel.{label}");
    let preset = raw.preset.as_deref().unwrap_or("motor");
    let mut ch = match preset {
        "motor" => ChannelConfig::motor_default(label),
        "temperature" => ChannelConfig::temperature_default(label),
        "gyro" => ChannelConfig::gyroscope_default(label),
        other => {
            return Err(ConfigError(format!(
                "{sec}.preset: unknown preset `{other}` (motor, temperature, gyro)"
            )))
        }
    };
    if let Some(name) = &raw.name {
        ch.name = name.clone();
    }

    // plant: either retype it or tweak the preset's parameters in kind
    if let Some(kind) = raw.plant.as_deref() {
        ch.plant = match kind {
            "first_order" => PlantConfig::FirstOrder {
                gain: raw.gain.unwrap_or(600.0),
                tau: raw.tau.unwrap_or(0.5),
            },
            "second_order" => PlantConfig::SecondOrder {
                omega_n: raw.omega_n.unwrap_or(20.0),
                zeta: raw.zeta.unwrap_or(0.7),
                gain: raw.gain.unwrap_or(4.654),
            },
            other => {
                return Err(ConfigError(format!(
                    "{sec}.plant: unknown plant `{other}` (first_order, second_order)"
                )))
            }
        };
    } else {
        match &mut ch.plant {
            PlantConfig::FirstOrder { gain, tau } => {
                if let Some(g) = raw.gain {
                    *gain = g;
                }
                if let Some(t) = raw.tau {
                    *tau = t;
                }
                if raw.omega_n.is_some() || raw.zeta.is_some() {
                    return Err(ConfigError(format!(
                        "{sec}.omega_n/zeta: not valid for a first_order plant"
                    )));
                }
            }
            PlantConfig::SecondOrder {
                omega_n,
                zeta,
                gain,
            } => {
                if let Some(g) = raw.gain {
                    *gain = g;
                }
                if let Some(w) = raw.omega_n {
                    *omega_n = w;
                }
                if let Some(z) = raw.zeta {
                    *zeta = z;
                }
                if raw.tau.is_some() {
                    return Err(ConfigError(format!(
                        "{sec}.tau: not valid for a second_order plant"
                    )));
                }
            }
        }
    }

    // sensor map: any override rebuilds the whole map so consistency is
    // re-checked
    let map_touched = raw.kind.is_some()
        || raw.scale.is_some()
        || raw.offset.is_some()
        || raw.v_min.is_some()
        || raw.v_max.is_some()
        || raw.phys_min.is_some()
        || raw.phys_max.is_some();
    if map_touched {
        let kind = match raw.kind.as_deref() {
            None => ch.map.kind,
            Some("temperature") => SensorKind::Temperature,
            Some("gyroscope") => SensorKind::Gyroscope,
            Some("tachometer") => SensorKind::Tachometer,
            Some(other) => {
                return Err(ConfigError(format!(
                    "{sec}.kind: unknown sensor kind `{other}`"
                )))
            }
        };
        ch.map = SensorMap::new(
            kind,
            raw.scale.unwrap_or(ch.map.scale),
            raw.offset.unwrap_or(ch.map.offset_volts),
            raw.v_min.unwrap_or(ch.map.v_min),
            raw.v_max.unwrap_or(ch.map.v_max),
            raw.phys_min.unwrap_or(ch.map.physical_min),
            raw.phys_max.unwrap_or(ch.map.physical_max),
        )
        .map_err(|e| ConfigError(format!("{sec}: sensor map: {e}")))?;
    }

    match (raw.ref_step_to, raw.ref_step_at) {
        (None, None) => {
            if let Some(v) = raw.reference {
                ch.reference = RefSpec::Constant(v);
            }
        }
        (Some(to), Some(at)) => {
            let from = raw.reference.unwrap_or(match ch.reference {
                RefSpec::Constant(v) => v,
                RefSpec::Step { from, .. } => from,
            });
            ch.reference = RefSpec::Step { from, to, at };
        }
        _ => {
            return Err(ConfigError(format!(
                "{sec}.ref_step_to/ref_step_at: both required for a step reference"
            )))
        }
    }

    if let Some(code) = &raw.code {
        if code.len() != 3 {
            return Err(ConfigError(format!(
                "{sec}.code: expected three 4-bit values [kp, ki, kd]"
            )));
        }
        ch.initial_code = GainCode::new(code[0], code[1], code[2])
            .map_err(|e| ConfigError(format!("{sec}.code: {e}")))?;
    }
    if let Some(teeth) = raw.teeth {
        if teeth == 0 {
            return Err(ConfigError(format!("{sec}.teeth: must be >= 1")));
        }
        ch.tach_teeth = Some(teeth);
    }
    if let Some(s) = raw.start_at_reference {
        ch.start_at_reference = s;
    }

    let defaults = PidConfig::default();
    ch.pid = PidConfig {
        dt: defaults.dt, // overridden by the scenario dt at run time
        u_min: raw.u_min.or(global_pid.u_min).unwrap_or(defaults.u_min),
        u_max: raw.u_max.or(global_pid.u_max).unwrap_or(defaults.u_max),
        d_filter_n: raw
            .d_filter_n
            .or(global_pid.d_filter_n)
            .unwrap_or(defaults.d_filter_n),
        anti_windup: raw
            .anti_windup
            .or(global_pid.anti_windup)
            .map(AntiWindup::from)
            .unwrap_or(defaults.anti_windup),
    };
    Ok(ch)
}

fn build_disturbance(label: u32, raw: &RawDisturbance) -> Result<DisturbanceSpec, ConfigError> {
    let sec = format!("disturbance.{label}");
    let channel = raw
        .channel
        .ok_or_else(|| ConfigError(format!("{sec}.channel: required")))?;
    let kind = match raw.kind.as_deref() {
        Some("pulse") => DisturbanceKind::Pulse,
        Some("step") => DisturbanceKind::SustainedStep,
        Some("parameter_shift") => DisturbanceKind::ParameterShift,
        Some(other) => {
            return Err(ConfigError(format!(
                "{sec}.kind: unknown kind `{other}` (pulse, step, parameter_shift)"
            )))
        }
        None => return Err(ConfigError(format!("{sec}.kind: required"))),
    };
    let shift_target = match raw.param.as_deref() {
        None => ShiftTarget::default(),
        Some("gain") => ShiftTarget::Gain,
        Some("tau") => ShiftTarget::Tau,
        Some(other) => {
            return Err(ConfigError(format!(
                "{sec}.param: unknown target `{other}` (gain, tau)"
            )))
        }
    };
    if raw.param.is_some() && kind != DisturbanceKind::ParameterShift {
        return Err(ConfigError(format!(
            "{sec}.param: only valid for parameter_shift"
        )));
    }
    Ok(DisturbanceSpec {
        channel,
        kind,
        start: raw
            .start
            .ok_or_else(|| ConfigError(format!("{sec}.start: required")))?,
        stop: raw.stop,
        magnitude: raw.magnitude.unwrap_or(1.0),
        shift_target,
    })
}

/// Parses scenario text into a validated [`Scenario`].
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
    build_scenario(raw)
}

fn build_scenario(raw: RawConfig) -> Result<Scenario, ConfigError> {
    let mut scenario = Scenario::default_three_channel();

    let ladder_raw = raw.ladder.unwrap_or_default();
    let defaults = ComponentLadder::default();
    scenario.ladder = ComponentLadder {
        r1_fixed: ladder_raw.r1.unwrap_or(defaults.r1_fixed),
        r2_min: ladder_raw.r2_min.unwrap_or(defaults.r2_min),
        r2_max: ladder_raw.r2_max.unwrap_or(defaults.r2_max),
        ri_min: ladder_raw.ri_min.unwrap_or(defaults.ri_min),
        ri_max: ladder_raw.ri_max.unwrap_or(defaults.ri_max),
        ci_fixed: ladder_raw.ci.unwrap_or(defaults.ci_fixed),
        rd_min: ladder_raw.rd_min.unwrap_or(defaults.rd_min),
        rd_max: ladder_raw.rd_max.unwrap_or(defaults.rd_max),
        cd_fixed: ladder_raw.cd.unwrap_or(defaults.cd_fixed),
    };

    let sim_raw = raw.sim.unwrap_or_default();
    if let Some(d) = sim_raw.duration {
        scenario.duration = d;
    }
    if let Some(dt) = sim_raw.dt {
        scenario.dt = dt;
    }
    if let Some(seed) = sim_raw.seed {
        scenario.seed = seed;
    }

    let pso_raw = raw.pso.unwrap_or_default();
    scenario.eval_window_s = pso_raw.eval_window.unwrap_or(5.0);
    let mut pso = PsoConfig::for_ladder(&scenario.ladder);
    if let Some(lo) = pso_raw.bounds_lo {
        pso.bounds_lo = lo;
    }
    if let Some(hi) = pso_raw.bounds_hi {
        pso.bounds_hi = hi;
    }
    if pso_raw.bounds_lo.is_some() || pso_raw.bounds_hi.is_some() {
        for i in 0..3 {
            pso.v_max[i] = 0.25 * (pso.bounds_hi[i] - pso.bounds_lo[i]);
        }
    }
    if let Some(v) = pso_raw.v_max {
        pso.v_max = v;
    }
    if let Some(n) = pso_raw.particles {
        pso.n_particles = n;
    }
    if let Some(n) = pso_raw.iterations {
        pso.n_iterations = n;
    }
    if let Some(w) = pso_raw.w {
        pso.w = w;
    }
    if let Some(c) = pso_raw.c1 {
        pso.c1 = c;
    }
    if let Some(c) = pso_raw.c2 {
        pso.c2 = c;
    }
    pso.seed = scenario.seed;
    scenario.pso = pso;

    let fit_raw = raw.fitness.unwrap_or_default();
    scenario.weights = FitnessWeights {
        alpha: fit_raw.alpha.unwrap_or(1.0),
        beta: fit_raw.beta.unwrap_or(1.0),
    };

    // channels before the supervisor so n_channels can default to the count
    let channel_sections = sorted_sections(raw.channel, "channel")?;
    let global_pid = raw.pid.unwrap_or_default();
    if !channel_sections.is_empty() {
        let mut channels = Vec::with_capacity(channel_sections.len());
        for (label, raw_ch) in &channel_sections {
            channels.push(build_channel(*label, raw_ch, &global_pid)?);
        }
        scenario.channels = channels;
    } else if global_pid.u_min.is_some()
        || global_pid.u_max.is_some()
        || global_pid.d_filter_n.is_some()
        || global_pid.anti_windup.is_some()
    {
        for ch in &mut scenario.channels {
            let d = ch.pid;
            ch.pid = PidConfig {
                dt: d.dt,
                u_min: global_pid.u_min.unwrap_or(d.u_min),
                u_max: global_pid.u_max.unwrap_or(d.u_max),
                d_filter_n: global_pid.d_filter_n.unwrap_or(d.d_filter_n),
                anti_windup: global_pid
                    .anti_windup
                    .map(AntiWindup::from)
                    .unwrap_or(d.anti_windup),
            };
        }
    }

    let sup_raw = raw.supervisor.unwrap_or_default();
    let sup_defaults = SupervisorConfig::with_window(scenario.eval_window_s);
    scenario.supervisor = SupervisorConfig {
        epsilon_v: sup_raw.epsilon_v.unwrap_or(sup_defaults.epsilon_v),
        hysteresis_v: sup_raw.hysteresis_v.unwrap_or(sup_defaults.hysteresis_v),
        t_o: sup_raw.t_o.unwrap_or(sup_defaults.t_o),
        n_channels: sup_raw.n_channels.unwrap_or(scenario.channels.len()),
    };

    let disturbance_sections = sorted_sections(raw.disturbance, "disturbance")?;
    scenario.disturbances = disturbance_sections
        .iter()
        .map(|(label, raw_d)| build_disturbance(*label, raw_d))
        .collect::<Result<Vec<_>, _>>()?;

    scenario
        .validate()
        .map_err(|e| ConfigError(e.to_string()))?;
    Ok(scenario)
}
