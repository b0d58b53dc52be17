//! Discrete PID controller on a quantized gain lattice.
//!
//! Gains are not free parameters: each axis is realized by a 4-bit tunable
//! component ladder, so only 16 values per axis exist. The ladders mirror
//! the analog blocks they stand in for: `kp = R2/R1`, `ki = 1/(Ri*Ci)`,
//! `kd = Rd*Cd`, with the 4-bit code selecting the tunable resistor on a
//! linear 16-level ladder. Codes raise component values, so `kp` and `kd`
//! grow with their codes while `ki` falls with its code; [`encode_gains`]
//! hides that orientation from callers.
//!
//! The three analog stages are inverting and a fourth unity inverter
//! restores sign, so the composite is modeled non-inverting and all gains
//! are non-negative magnitudes.

use crate::plants::abs;

/// Errors from the controller step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PidError {
    /// The error input was NaN or infinite.
    NonFiniteError,
    /// A configuration field violated its constraint.
    InvalidConfig(&'static str),
}

impl core::fmt::Display for PidError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PidError::NonFiniteError => write!(f, "controller error input is not finite"),
            PidError::InvalidConfig(what) => write!(f, "invalid PID config: {what}"),
        }
    }
}

impl core::error::Error for PidError {}

/// Component values backing the three tunable gain blocks.
///
/// Each `*_min`/`*_max` pair is a 16-level linear ladder indexed by a 4-bit
/// code; the `*_fixed` values are not tunable.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLadder {
    pub r1_fixed: f64,
    pub r2_min: f64,
    pub r2_max: f64,
    pub ri_min: f64,
    pub ri_max: f64,
    pub ci_fixed: f64,
    pub rd_min: f64,
    pub rd_max: f64,
    pub cd_fixed: f64,
}

impl Default for ComponentLadder {
    /// Spans kp in [0.1, 10], ki in [0.1, 20] 1/s, kd in [0.001, 0.5] s.
    fn default() -> Self {
        Self {
            r1_fixed: 10_000.0,
            r2_min: 1_000.0,
            r2_max: 100_000.0,
            ri_min: 50_000.0,
            ri_max: 10_000_000.0,
            ci_fixed: 1e-6,
            rd_min: 1_000.0,
            rd_max: 500_000.0,
            cd_fixed: 1e-6,
        }
    }
}

impl ComponentLadder {
    pub fn validate(&self) -> Result<(), PidError> {
        let fields = [
            self.r1_fixed,
            self.r2_min,
            self.r2_max,
            self.ri_min,
            self.ri_max,
            self.ci_fixed,
            self.rd_min,
            self.rd_max,
            self.cd_fixed,
        ];
        if fields.iter().any(|&v| !(v > 0.0)) {
            return Err(PidError::InvalidConfig("ladder values must be > 0"));
        }
        if !(self.r2_min < self.r2_max && self.ri_min < self.ri_max && self.rd_min < self.rd_max)
        {
            return Err(PidError::InvalidConfig("ladder min must be < max"));
        }
        Ok(())
    }

    fn ladder_value(min: f64, max: f64, code: u8) -> f64 {
        min + code as f64 * (max - min) / 15.0
    }

    pub fn kp_at(&self, code: u8) -> f64 {
        Self::ladder_value(self.r2_min, self.r2_max, code) / self.r1_fixed
    }

    pub fn ki_at(&self, code: u8) -> f64 {
        1.0 / (Self::ladder_value(self.ri_min, self.ri_max, code) * self.ci_fixed)
    }

    pub fn kd_at(&self, code: u8) -> f64 {
        Self::ladder_value(self.rd_min, self.rd_max, code) * self.cd_fixed
    }

    /// Achievable `(min, max)` per gain axis. Note ki's minimum sits at
    /// code 15, not code 0.
    pub fn kp_range(&self) -> (f64, f64) {
        (self.kp_at(0), self.kp_at(15))
    }

    pub fn ki_range(&self) -> (f64, f64) {
        (self.ki_at(15), self.ki_at(0))
    }

    pub fn kd_range(&self) -> (f64, f64) {
        (self.kd_at(0), self.kd_at(15))
    }
}

/// Three 4-bit register fields selecting the achievable gain triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GainCode {
    pub kp_code: u8,
    pub ki_code: u8,
    pub kd_code: u8,
}

impl GainCode {
    pub fn new(kp_code: u8, ki_code: u8, kd_code: u8) -> Result<Self, PidError> {
        if kp_code > 15 || ki_code > 15 || kd_code > 15 {
            return Err(PidError::InvalidConfig("gain codes must fit in 4 bits"));
        }
        Ok(Self {
            kp_code,
            ki_code,
            kd_code,
        })
    }
}

/// Continuous controller gains for `C(s) = kp + ki/s + kd*s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    /// 1/seconds.
    pub ki: f64,
    /// Seconds.
    pub kd: f64,
}

/// Gains selected by a code on a ladder.
pub fn decode_gains(code: GainCode, ladder: &ComponentLadder) -> PidGains {
    PidGains {
        kp: ladder.kp_at(code.kp_code),
        ki: ladder.ki_at(code.ki_code),
        kd: ladder.kd_at(code.kd_code),
    }
}

fn nearest_code(target: f64, value_at: impl Fn(u8) -> f64) -> u8 {
    let mut best = 0u8;
    let mut best_err = f64::INFINITY;
    for code in 0..16u8 {
        let err = abs(value_at(code) - target);
        // strict improvement keeps the lower code on ties
        if err < best_err {
            best_err = err;
            best = code;
        }
    }
    best
}

/// Nearest achievable code per axis, minimizing absolute gain error
/// independently on each axis; ties break toward the lower code and
/// out-of-range targets clamp to an endpoint code.
pub fn encode_gains(target: PidGains, ladder: &ComponentLadder) -> GainCode {
    GainCode {
        kp_code: nearest_code(target.kp, |c| ladder.kp_at(c)),
        ki_code: nearest_code(target.ki, |c| ladder.ki_at(c)),
        kd_code: nearest_code(target.kd, |c| ladder.kd_at(c)),
    }
}

/// Anti-windup strategy for the integrator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AntiWindup {
    /// Freeze the integrator while the output is saturated and the error
    /// pushes further into saturation.
    #[default]
    Clamp,
    /// Freeze the integrator whenever the output is saturated.
    ConditionalIntegration,
}

/// Step size, actuator limits, and derivative filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidConfig {
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Derivative filter coefficient; the filtered difference recurrence is
    /// `d <- (d_prev + n*(e - e_prev)) / (1 + n*dt)`.
    pub d_filter_n: f64,
    pub anti_windup: AntiWindup,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            u_min: -5.0,
            u_max: 5.0,
            d_filter_n: 10.0,
            anti_windup: AntiWindup::Clamp,
        }
    }
}

impl PidConfig {
    pub fn validate(&self) -> Result<(), PidError> {
        if !(self.dt > 0.0) {
            return Err(PidError::InvalidConfig("dt must be > 0"));
        }
        if !(self.u_min < self.u_max) {
            return Err(PidError::InvalidConfig("u_min must be < u_max"));
        }
        if !(self.d_filter_n > 0.0) {
            return Err(PidError::InvalidConfig("d_filter_n must be > 0"));
        }
        Ok(())
    }
}

/// Integrator, previous error, and derivative filter memory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PidState {
    /// Volt-seconds.
    pub integrator: f64,
    pub prev_error: f64,
    /// Volts/second.
    pub d_filter_state: f64,
}

impl PidState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// One controller update: trapezoidal integral, filtered backward-difference
/// derivative, output clamped to the actuator range.
pub fn pid_step(
    state: &mut PidState,
    error: f64,
    gains: &PidGains,
    config: &PidConfig,
) -> Result<f64, PidError> {
    if !error.is_finite() {
        return Err(PidError::NonFiniteError);
    }
    let d = (state.d_filter_state + config.d_filter_n * (error - state.prev_error))
        / (1.0 + config.d_filter_n * config.dt);
    let increment = 0.5 * config.dt * (error + state.prev_error);
    let integrator = state.integrator + increment;

    let u_raw = gains.kp * error + gains.ki * integrator + gains.kd * d;
    let u = u_raw.clamp(config.u_min, config.u_max);

    let windup = match config.anti_windup {
        AntiWindup::Clamp => {
            (u_raw > config.u_max && error > 0.0) || (u_raw < config.u_min && error < 0.0)
        }
        AntiWindup::ConditionalIntegration => u_raw > config.u_max || u_raw < config.u_min,
    };
    if !windup {
        state.integrator = integrator;
    }
    state.prev_error = error;
    state.d_filter_state = d;
    Ok(u)
}

/// A channel's controller: current code, decoded gains, and loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct PidController {
    pub code: GainCode,
    pub gains: PidGains,
    pub config: PidConfig,
    pub state: PidState,
}

impl PidController {
    pub fn from_code(code: GainCode, ladder: &ComponentLadder, config: PidConfig) -> Self {
        Self {
            code,
            gains: decode_gains(code, ladder),
            config,
            state: PidState::default(),
        }
    }

    pub fn step(&mut self, error: f64) -> Result<f64, PidError> {
        pid_step(&mut self.state, error, &self.gains, &self.config)
    }

    /// Installs a new code bumplessly: the filter memory carries over and
    /// the integrator is rescaled so its contribution `ki * integrator` is
    /// continuous across the swap (carrying the raw value instead would
    /// step the output by `ki_new / ki_old`).
    pub fn install_code(&mut self, code: GainCode, ladder: &ComponentLadder) {
        let old_ki = self.gains.ki;
        self.code = code;
        self.gains = decode_gains(code, ladder);
        if self.gains.ki > 0.0 && old_ki > 0.0 {
            self.state.integrator *= old_ki / self.gains.ki;
        }
    }

    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// Seeds the integrator so the controller holds `u_hold` at zero error.
    /// No-op when ki is zero (nothing can hold).
    pub fn preload_for_hold(&mut self, u_hold: f64) {
        if self.gains.ki > 0.0 {
            self.state.integrator = u_hold / self.gains.ki;
        }
    }
}
