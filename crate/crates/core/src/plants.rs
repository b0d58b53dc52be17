//! Behavioral plant models and sensor voltage mappings.
//!
//! Three channel kinds are modeled: a DC motor speed loop read through a
//! tachometer, a temperature loop, and a gyroscope rate loop. Each plant is
//! a low-order linear system advanced by its exact zero-order-hold
//! discretization, so plant accuracy is independent of the controller's
//! step size. The sensor map converts between physical units and the 0-5 V
//! signal domain the controllers and comparators operate in.

use libm::{cos, cosh, exp, sin, sinh, sqrt};

/// Errors from plant stepping and sensor conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlantError {
    /// Step size must be strictly positive.
    NonPositiveDt,
    /// Voltage handed to [`SensorMap::to_physical`] lies outside the swing.
    VoltageOutOfRange { v: f64, v_min: f64, v_max: f64 },
    /// A constructor argument violated its constraint.
    InvalidParameter(&'static str),
}

impl core::fmt::Display for PlantError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            PlantError::NonPositiveDt => write!(f, "step size dt must be > 0"),
            PlantError::VoltageOutOfRange { v, v_min, v_max } => {
                write!(f, "voltage {v} V outside swing [{v_min}, {v_max}] V")
            }
            PlantError::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
        }
    }
}

impl core::error::Error for PlantError {}

/// Which physical device a channel is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensorKind {
    Temperature,
    Gyroscope,
    Tachometer,
}

impl SensorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SensorKind::Temperature => "temperature",
            SensorKind::Gyroscope => "gyroscope",
            SensorKind::Tachometer => "tachometer",
        }
    }
}

/// Linear physical-unit to voltage mapping with saturation at the swing
/// limits.
///
/// The map is `v = offset_volts + scale * x` where `x` is the physical value
/// and `offset_volts` is the voltage at the physical zero reference. The
/// mapping must carry `[physical_min, physical_max]` exactly onto
/// `[v_min, v_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorMap {
    pub kind: SensorKind,
    /// Volts per physical unit, strictly positive.
    pub scale: f64,
    /// Voltage at physical zero.
    pub offset_volts: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub physical_min: f64,
    pub physical_max: f64,
}

/// Endpoint/span consistency tolerance, in volts.
const MAP_TOL_V: f64 = 1e-6;

impl SensorMap {
    pub fn new(
        kind: SensorKind,
        scale: f64,
        offset_volts: f64,
        v_min: f64,
        v_max: f64,
        physical_min: f64,
        physical_max: f64,
    ) -> Result<Self, PlantError> {
        if !(v_min < v_max) {
            return Err(PlantError::InvalidParameter("v_min must be < v_max"));
        }
        if !(physical_min < physical_max) {
            return Err(PlantError::InvalidParameter(
                "physical_min must be < physical_max",
            ));
        }
        if !(scale > 0.0) {
            return Err(PlantError::InvalidParameter("scale must be > 0"));
        }
        let span_err = scale * (physical_max - physical_min) - (v_max - v_min);
        if abs(span_err) > MAP_TOL_V {
            return Err(PlantError::InvalidParameter(
                "scale * physical span must equal voltage swing",
            ));
        }
        let align_err = offset_volts + scale * physical_min - v_min;
        if abs(align_err) > MAP_TOL_V {
            return Err(PlantError::InvalidParameter(
                "offset must place physical_min at v_min",
            ));
        }
        Ok(Self {
            kind,
            scale,
            offset_volts,
            v_min,
            v_max,
            physical_min,
            physical_max,
        })
    }

    /// AD22100-style temperature map: 22.5 mV/degC, -50..150 degC onto
    /// 0.25..4.75 V, zero reference at 0 degC.
    pub fn temperature_default() -> Self {
        Self::new(SensorKind::Temperature, 0.0225, 1.375, 0.25, 4.75, -50.0, 150.0)
            .expect("default map is consistent")
    }

    /// Rate gyro map: 107.42 mV/(rad/s), +-23.27 rad/s around a 2.5 V
    /// midpoint. The swing endpoints are the exact images of the rate
    /// limits (4.99966 V, not the nominal 5 V).
    pub fn gyroscope_default() -> Self {
        let scale = 0.10742;
        let half_span = 23.27 * scale;
        Self::new(
            SensorKind::Gyroscope,
            scale,
            2.5,
            2.5 - half_span,
            2.5 + half_span,
            -23.27,
            23.27,
        )
        .expect("default map is consistent")
    }

    /// Motor speed map: 0..3000 RPM onto 0..5 V.
    pub fn tachometer_default() -> Self {
        Self::new(SensorKind::Tachometer, 5.0 / 3000.0, 0.0, 0.0, 5.0, 0.0, 3000.0)
            .expect("default map is consistent")
    }

    /// Converts a physical value to volts, saturating at the swing limits.
    pub fn to_voltage(&self, x: f64) -> f64 {
        let v = self.offset_volts + self.scale * x;
        v.clamp(self.v_min, self.v_max)
    }

    /// Unclamped image of `x`; used for divergence detection where the
    /// saturated value would hide how far gone the plant is.
    pub fn to_voltage_unclamped(&self, x: f64) -> f64 {
        self.offset_volts + self.scale * x
    }

    /// Exact inverse of the unclamped map on the valid swing.
    pub fn to_physical(&self, v: f64) -> Result<f64, PlantError> {
        if v < self.v_min || v > self.v_max {
            return Err(PlantError::VoltageOutOfRange {
                v,
                v_min: self.v_min,
                v_max: self.v_max,
            });
        }
        Ok((v - self.offset_volts) / self.scale)
    }

    /// Full voltage swing `v_max - v_min`.
    pub fn swing(&self) -> f64 {
        self.v_max - self.v_min
    }
}

/// Tachometer pulse train parameters.
///
/// The output frequency is informational; the speed loop itself is closed
/// on the RPM-to-voltage map, treating frequency-to-voltage conversion as
/// ideal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TachSpec {
    pub teeth: u32,
    pub rpm: f64,
}

impl TachSpec {
    pub fn new(teeth: u32, rpm: f64) -> Result<Self, PlantError> {
        if teeth < 1 {
            return Err(PlantError::InvalidParameter("teeth must be >= 1"));
        }
        if !(rpm >= 0.0) {
            return Err(PlantError::InvalidParameter("rpm must be >= 0"));
        }
        Ok(Self { teeth, rpm })
    }

    /// Pulse frequency in Hz: `rpm * teeth / 60`.
    pub fn frequency_hz(&self) -> f64 {
        self.rpm * self.teeth as f64 / 60.0
    }
}

/// First-order lag `tau * dy/dt + y = gain * u`, stepped by exact ZOH:
/// `y <- y * e^(-dt/tau) + gain * u * (1 - e^(-dt/tau))`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOrderPlant {
    gain: f64,
    tau: f64,
    y: f64,
    disc: Option<FirstOrderDisc>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct FirstOrderDisc {
    dt: f64,
    a: f64,
    b: f64,
}

impl FirstOrderPlant {
    pub fn new(gain: f64, tau: f64) -> Result<Self, PlantError> {
        if !(tau > 0.0) {
            return Err(PlantError::InvalidParameter("tau must be > 0"));
        }
        Ok(Self {
            gain,
            tau,
            y: 0.0,
            disc: None,
        })
    }

    pub fn output(&self) -> f64 {
        self.y
    }

    pub fn set_output(&mut self, y: f64) {
        self.y = y;
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_gain(&mut self, gain: f64) {
        self.gain = gain;
        self.disc = None;
    }

    pub fn set_tau(&mut self, tau: f64) {
        self.tau = tau;
        self.disc = None;
    }

    pub fn step(&mut self, u: f64, dt: f64) -> Result<f64, PlantError> {
        if !(dt > 0.0) {
            return Err(PlantError::NonPositiveDt);
        }
        let d = match self.disc {
            Some(d) if d.dt == dt => d,
            _ => {
                let a = exp(-dt / self.tau);
                let d = FirstOrderDisc {
                    dt,
                    a,
                    b: self.gain * (1.0 - a),
                };
                self.disc = Some(d);
                d
            }
        };
        self.y = d.a * self.y + d.b * u;
        Ok(self.y)
    }
}

/// Second-order plant `y'' + 2*zeta*omega_n*y' + omega_n^2*y =
/// omega_n^2*gain*u`, stepped by the exact matrix exponential of the 2x2
/// state matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderPlant {
    omega_n: f64,
    zeta: f64,
    gain: f64,
    y: f64,
    dy: f64,
    disc: Option<SecondOrderDisc>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct SecondOrderDisc {
    dt: f64,
    // state update: [y, dy] <- ad * [y, dy] + bd * u
    ad: [f64; 4],
    bd: [f64; 2],
}

impl SecondOrderPlant {
    pub fn new(omega_n: f64, zeta: f64, gain: f64) -> Result<Self, PlantError> {
        if !(omega_n > 0.0) {
            return Err(PlantError::InvalidParameter("omega_n must be > 0"));
        }
        if !(zeta > 0.0) {
            return Err(PlantError::InvalidParameter("zeta must be > 0"));
        }
        Ok(Self {
            omega_n,
            zeta,
            gain,
            y: 0.0,
            dy: 0.0,
            disc: None,
        })
    }

    pub fn output(&self) -> f64 {
        self.y
    }

    pub fn state(&self) -> (f64, f64) {
        (self.y, self.dy)
    }

    pub fn set_state(&mut self, y: f64, dy: f64) {
        self.y = y;
        self.dy = dy;
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn set_gain(&mut self, gain: f64) {
        self.gain = gain;
        self.disc = None;
    }

    /// Exact ZOH discretization of the state matrix
    /// `A = [[0, 1], [-w^2, -2*zeta*w]]`, `B = [0, w^2*gain]`.
    ///
    /// With `alpha = zeta*w`, `e^(A dt) = e^(-alpha dt) *
    /// [[g0 + alpha*g1, g1], [-w^2*g1, g0 - alpha*g1]]` where `g0`/`g1` are
    /// the circular, hyperbolic, or critical-damping pair depending on the
    /// sign of `zeta^2 - 1`, and `Bd = A^-1 (Ad - I) B`.
    fn discretize(&self, dt: f64) -> SecondOrderDisc {
        let w = self.omega_n;
        let alpha = self.zeta * w;
        let delta = self.zeta * self.zeta - 1.0;
        let (g0, g1) = if delta < -1e-9 {
            let wd = w * sqrt(-delta);
            (cos(wd * dt), sin(wd * dt) / wd)
        } else if delta > 1e-9 {
            let wd = w * sqrt(delta);
            (cosh(wd * dt), sinh(wd * dt) / wd)
        } else {
            (1.0, dt)
        };
        let e = exp(-alpha * dt);
        let ad = [
            e * (g0 + alpha * g1),
            e * g1,
            e * (-w * w * g1),
            e * (g0 - alpha * g1),
        ];
        let bd = [
            self.gain * (1.0 - ad[3] - 2.0 * alpha * ad[1]),
            self.gain * w * w * ad[1],
        ];
        SecondOrderDisc { dt, ad, bd }
    }

    pub fn step(&mut self, u: f64, dt: f64) -> Result<f64, PlantError> {
        if !(dt > 0.0) {
            return Err(PlantError::NonPositiveDt);
        }
        let d = match self.disc {
            Some(d) if d.dt == dt => d,
            _ => {
                let d = self.discretize(dt);
                self.disc = Some(d);
                d
            }
        };
        let (y, dy) = (self.y, self.dy);
        self.y = d.ad[0] * y + d.ad[1] * dy + d.bd[0] * u;
        self.dy = d.ad[2] * y + d.ad[3] * dy + d.bd[1] * u;
        Ok(self.y)
    }
}

/// Either plant order behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Plant {
    FirstOrder(FirstOrderPlant),
    SecondOrder(SecondOrderPlant),
}

impl Plant {
    pub fn step(&mut self, u: f64, dt: f64) -> Result<f64, PlantError> {
        match self {
            Plant::FirstOrder(p) => p.step(u, dt),
            Plant::SecondOrder(p) => p.step(u, dt),
        }
    }

    pub fn output(&self) -> f64 {
        match self {
            Plant::FirstOrder(p) => p.output(),
            Plant::SecondOrder(p) => p.output(),
        }
    }

    /// Steady-state output per volt of held input.
    pub fn dc_gain(&self) -> f64 {
        match self {
            Plant::FirstOrder(p) => p.gain(),
            Plant::SecondOrder(p) => p.gain(),
        }
    }

    /// Places the plant at rest at output `y` (zero velocity for second
    /// order).
    pub fn set_resting_output(&mut self, y: f64) {
        match self {
            Plant::FirstOrder(p) => p.set_output(y),
            Plant::SecondOrder(p) => p.set_state(y, 0.0),
        }
    }

    /// Resets to the quiescent state (output and derivatives zero).
    pub fn reset(&mut self) {
        self.set_resting_output(0.0);
    }

    pub fn scale_gain(&mut self, factor: f64) {
        match self {
            Plant::FirstOrder(p) => p.set_gain(p.gain() * factor),
            Plant::SecondOrder(p) => p.set_gain(p.gain() * factor),
        }
    }

    /// Scales the dominant time constant. For the second-order plant this
    /// scales `1/omega_n`, which stretches the response the same way.
    pub fn scale_tau(&mut self, factor: f64) {
        match self {
            Plant::FirstOrder(p) => p.set_tau(p.tau() * factor),
            Plant::SecondOrder(p) => {
                let w = p.omega_n / factor;
                p.omega_n = w;
                p.disc = None;
            }
        }
    }
}

pub(crate) fn abs(x: f64) -> f64 {
    if x < 0.0 {
        -x
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_order_one_step_matches_analytic() {
        // y = 1 - e^(-1) for K=1, tau=1, u=1, dt=1 from rest
        let mut p = FirstOrderPlant::new(1.0, 1.0).unwrap();
        let y = p.step(1.0, 1.0).unwrap();
        assert!((y - 0.6321205588285577).abs() < 1e-15);
    }

    #[test]
    fn first_order_converges_to_dc_gain() {
        let mut p = FirstOrderPlant::new(3.0, 0.2).unwrap();
        let y = p.step(2.0, 1e6).unwrap();
        assert!((y - 6.0).abs() < 1e-9);
    }

    #[test]
    fn zero_input_keeps_zero_state() {
        let mut p1 = FirstOrderPlant::new(2.0, 1.0).unwrap();
        let mut p2 = SecondOrderPlant::new(10.0, 0.7, 2.0).unwrap();
        for _ in 0..100 {
            assert_eq!(p1.step(0.0, 0.05).unwrap(), 0.0);
            assert_eq!(p2.step(0.0, 0.05).unwrap(), 0.0);
        }
    }

    #[test]
    fn non_positive_dt_rejected() {
        let mut p = FirstOrderPlant::new(1.0, 1.0).unwrap();
        assert_eq!(p.step(1.0, 0.0), Err(PlantError::NonPositiveDt));
        assert_eq!(p.step(1.0, -0.1), Err(PlantError::NonPositiveDt));
    }

    #[test]
    fn zoh_split_step_is_exact_first_order() {
        let mut whole = FirstOrderPlant::new(1.7, 0.4).unwrap();
        let mut halves = whole.clone();
        whole.set_output(0.3);
        halves.set_output(0.3);
        let u = -0.8;
        let y1 = whole.step(u, 0.02).unwrap();
        halves.step(u, 0.01).unwrap();
        let y2 = halves.step(u, 0.01).unwrap();
        assert!((y1 - y2).abs() <= 1e-12 * y1.abs().max(1.0));
    }

    #[test]
    fn second_order_matches_fine_euler() {
        // Independent route: dense forward-Euler integration of the same ODE.
        for &(w, z) in &[(20.0, 0.7), (5.0, 1.0), (3.0, 2.5)] {
            let mut p = SecondOrderPlant::new(w, z, 1.5).unwrap();
            p.set_state(0.2, -0.1);
            let u = 0.6;
            let dt = 0.05;
            let exact = p.clone().step(u, dt).unwrap();

            let n = 200_000;
            let h = dt / n as f64;
            let (mut y, mut dy) = (0.2, -0.1);
            for _ in 0..n {
                let ddy = -2.0 * z * w * dy - w * w * y + w * w * 1.5 * u;
                y += h * dy;
                dy += h * ddy;
            }
            assert!(
                (exact - y).abs() < 1e-4,
                "w={w} z={z}: exact {exact} vs euler {y}"
            );
        }
    }

    #[test]
    fn second_order_settles_to_dc_gain() {
        let mut p = SecondOrderPlant::new(20.0, 0.7, 4.654).unwrap();
        for _ in 0..10_000 {
            p.step(2.0, 0.01).unwrap();
        }
        assert!((p.output() - 9.308).abs() < 1e-6);
    }

    #[test]
    fn second_order_bounded_under_bounded_input() {
        // 1e5 steps of seeded pseudo-random input in [-5, 5].
        let mut p = SecondOrderPlant::new(20.0, 0.7, 4.654).unwrap();
        let mut state = 0x1234_5678_u64;
        let mut max_abs: f64 = 0.0;
        for _ in 0..100_000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = ((state >> 11) as f64 / (1u64 << 53) as f64) * 10.0 - 5.0;
            let y = p.step(u, 0.001).unwrap();
            max_abs = max_abs.max(abs(y));
        }
        assert!(max_abs.is_finite());
        assert!(max_abs < 1_000.0, "unexpected blow-up: {max_abs}");
    }

    #[test]
    fn temperature_span_matches_swing() {
        let m = SensorMap::temperature_default();
        let span = m.to_voltage(150.0) - m.to_voltage(-50.0);
        assert!((span - 4.5).abs() < 1e-12);
        assert!((span - (4.75 - 0.25)).abs() < 1e-12);
    }

    #[test]
    fn gyro_full_scale_voltage() {
        let m = SensorMap::gyroscope_default();
        // 2.5 + 23.27 * 0.10742 = 4.9996634
        let v = m.to_voltage(23.27);
        assert!((v - 4.9996634).abs() < 1e-9);
    }

    #[test]
    fn saturation_clamps_to_swing() {
        let m = SensorMap::tachometer_default();
        assert_eq!(m.to_voltage(3010.0), 5.0);
        assert_eq!(m.to_voltage(-10.0), 0.0);
    }

    #[test]
    fn round_trip_in_range() {
        let m = SensorMap::temperature_default();
        for &x in &[-50.0, -12.5, 0.0, 37.0, 150.0] {
            let back = m.to_physical(m.to_voltage(x)).unwrap();
            assert!((back - x).abs() < 1e-9);
        }
    }

    #[test]
    fn gyro_midpoint_is_zero_rate() {
        let m = SensorMap::gyroscope_default();
        assert_eq!(m.to_physical(2.5).unwrap(), 0.0);
    }

    #[test]
    fn temperature_v_min_maps_to_physical_min() {
        let m = SensorMap::temperature_default();
        assert!((m.to_physical(0.25).unwrap() - (-50.0)).abs() < 1e-9);
    }

    #[test]
    fn out_of_swing_voltage_rejected() {
        let m = SensorMap::tachometer_default();
        assert!(matches!(
            m.to_physical(5.2),
            Err(PlantError::VoltageOutOfRange { .. })
        ));
    }

    #[test]
    fn inconsistent_map_rejected() {
        // span mismatch: scale*span = 2 but swing = 5
        assert!(SensorMap::new(SensorKind::Tachometer, 1.0, 0.0, 0.0, 5.0, 0.0, 2.0).is_err());
    }

    #[test]
    fn tach_frequency_formula() {
        assert_eq!(TachSpec::new(2, 3000.0).unwrap().frequency_hz(), 100.0);
        assert_eq!(TachSpec::new(7, 0.0).unwrap().frequency_hz(), 0.0);
        assert_eq!(TachSpec::new(1, 60.0).unwrap().frequency_hz(), 1.0);
    }

    #[test]
    fn tach_spec_validation() {
        assert!(TachSpec::new(0, 100.0).is_err());
        assert!(TachSpec::new(2, -1.0).is_err());
    }
}
