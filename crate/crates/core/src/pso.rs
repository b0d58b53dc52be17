//! Particle swarm optimization over the 3-D gain space.
//!
//! Candidates are scored by simulating a fresh closed loop of the target
//! channel's model over a fixed window; the fitness is
//! `F = beta * Error + alpha * sys_overshoot` with Error the integral of
//! absolute error (IAE) and overshoot the peak excess over the reference
//! normalized by the reference span. The search runs in continuous gain
//! space; the final best is quantized onto the 4-bit ladder and re-scored.
//!
//! Random draws follow a fixed layout so runs are reproducible bit for bit:
//! at init each particle draws its three position components then its three
//! velocity components; each iteration draws, per particle in index order,
//! three `R1` components then three `R2` components. Best-reductions run in
//! particle-index order after all evaluations, which is what keeps a future
//! parallel evaluation path equivalent to the sequential one.

use alloc::vec::Vec;

use crate::pid::{
    decode_gains, encode_gains, pid_step, ComponentLadder, GainCode, PidConfig, PidGains,
    PidState,
};
use crate::plants::{abs, Plant, SensorMap};
use crate::rng::Rng;

/// Fitness returned when a candidate drives the loop past ten output
/// swings; large enough to lose against any sane candidate.
pub const DIVERGENCE_PENALTY: f64 = 1e9;

/// Swarm size, iteration budget, coefficients, and search box.
#[derive(Debug, Clone, PartialEq)]
pub struct PsoConfig {
    pub n_particles: usize,
    pub n_iterations: usize,
    /// Inertia weight.
    pub w: f64,
    /// Cognitive (local-best) acceleration.
    pub c1: f64,
    /// Social (global-best) acceleration.
    pub c2: f64,
    /// Componentwise lower bounds over (kp, ki, kd).
    pub bounds_lo: [f64; 3],
    pub bounds_hi: [f64; 3],
    /// Componentwise velocity clamp.
    pub v_max: [f64; 3],
    pub seed: u64,
}

impl PsoConfig {
    /// 50 particles, 50 iterations, constriction-style coefficients, with
    /// the search box and velocity clamp derived from the bounds.
    pub fn with_bounds(bounds_lo: [f64; 3], bounds_hi: [f64; 3]) -> Self {
        let mut v_max = [0.0; 3];
        for i in 0..3 {
            v_max[i] = 0.25 * (bounds_hi[i] - bounds_lo[i]);
        }
        Self {
            n_particles: 50,
            n_iterations: 50,
            w: 0.729,
            c1: 1.49445,
            c2: 1.49445,
            bounds_lo,
            bounds_hi,
            v_max,
            seed: 0,
        }
    }

    /// Search box spanning exactly the gains the ladder can realize.
    pub fn for_ladder(ladder: &ComponentLadder) -> Self {
        let (kp_lo, kp_hi) = ladder.kp_range();
        let (ki_lo, ki_hi) = ladder.ki_range();
        let (kd_lo, kd_hi) = ladder.kd_range();
        Self::with_bounds([kp_lo, ki_lo, kd_lo], [kp_hi, ki_hi, kd_hi])
    }

    pub fn validate(&self) -> Result<(), &'static str> {
        if self.n_particles < 1 {
            return Err("n_particles must be >= 1");
        }
        if self.n_iterations < 1 {
            return Err("n_iterations must be >= 1");
        }
        for i in 0..3 {
            if !(self.bounds_lo[i] < self.bounds_hi[i]) {
                return Err("bounds_lo must be < bounds_hi componentwise");
            }
            if !(self.v_max[i] > 0.0) {
                return Err("v_max must be > 0 componentwise");
            }
        }
        if !(self.w >= 0.0 && self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err("w, c1, c2 must be >= 0");
        }
        Ok(())
    }
}

/// Relative weights on the two fitness terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessWeights {
    /// Weight on overshoot.
    pub alpha: f64,
    /// Weight on integrated absolute error.
    pub beta: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

impl FitnessWeights {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err("alpha and beta must be >= 0");
        }
        if !(self.alpha + self.beta > 0.0) {
            return Err("alpha + beta must be > 0");
        }
        Ok(())
    }
}

/// Anything the swarm can score.
pub trait Objective {
    fn evaluate(&self, x: [f64; 3]) -> f64;
}

impl<F: Fn([f64; 3]) -> f64> Objective for F {
    fn evaluate(&self, x: [f64; 3]) -> f64 {
        self(x)
    }
}

/// Everything a fitness evaluation needs to rebuild the channel's loop:
/// plant model, sensor map, reference level, controller timing, and the
/// evaluation window.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub plant: Plant,
    pub map: SensorMap,
    /// Reference voltage the replica tracks from quiescent.
    pub ref_v: f64,
    pub pid: PidConfig,
    /// Evaluation window in seconds; also the "time equivalent" unit of
    /// the supervisory layer.
    pub window_s: f64,
}

impl ChannelModel {
    pub fn window_steps(&self) -> u64 {
        let steps = libm::round(self.window_s / self.pid.dt) as i64;
        steps.max(1) as u64
    }

    /// Closed-loop fitness of a gain triple: fresh plant and controller
    /// state, a 0 -> `ref_v` step, IAE plus normalized overshoot.
    pub fn evaluate_fitness(&self, gains: PidGains, weights: &FitnessWeights) -> f64 {
        let dt = self.pid.dt;
        let steps = self.window_steps();
        let mut plant = self.plant.clone();
        plant.reset();
        let mut state = PidState::default();

        let divergence_limit = 10.0 * self.map.swing();
        let span = abs(self.ref_v);

        let mut iae = 0.0;
        let mut prev_abs_e = None;
        let mut peak_over: f64 = 0.0;
        for k in 0..=steps {
            let y = plant.output();
            if abs(self.map.to_voltage_unclamped(y)) > divergence_limit {
                return DIVERGENCE_PENALTY;
            }
            let y_v = self.map.to_voltage(y);
            let e = self.ref_v - y_v;
            let abs_e = abs(e);
            if let Some(prev) = prev_abs_e {
                iae += 0.5 * dt * (prev + abs_e);
            }
            prev_abs_e = Some(abs_e);
            peak_over = peak_over.max(y_v - self.ref_v);

            if k < steps {
                // gains are finite and y_v is clamped, so the step cannot fault
                let u = pid_step(&mut state, e, &gains, &self.pid)
                    .unwrap_or(self.pid.u_min);
                let _ = plant.step(u, dt);
            }
        }
        // overshoot is normalized by the reference span; a zero reference
        // has no span, so the term drops out
        let overshoot = if span > 1e-12 {
            peak_over.max(0.0) / span
        } else {
            0.0
        };
        weights.beta * iae + weights.alpha * overshoot
    }
}

/// One swarm member.
#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub x: [f64; 3],
    pub v: [f64; 3],
    pub best_x: [f64; 3],
    pub best_f: f64,
}

/// Global-best history, one record per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// 1-based iteration index.
    pub iteration: usize,
    pub best_x: [f64; 3],
    pub best_f: f64,
}

/// Result of quantizing the continuous best onto the ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizedBest {
    pub code: GainCode,
    /// Fitness of the decoded (quantized) gains, re-evaluated.
    pub fitness: f64,
}

/// Per-iteration convergence record plus, for gain searches, the quantized
/// hand-off.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmTrace {
    pub records: Vec<TraceRecord>,
    pub quantized: Option<QuantizedBest>,
}

impl SwarmTrace {
    /// First iteration whose global best has closed all but `frac` of the
    /// gap between the first and final recorded fitness. The trace is
    /// non-increasing, so the first hit persists.
    pub fn iterations_to_threshold(&self, frac: f64) -> Option<usize> {
        let first = self.records.first()?;
        let last = self.records.last()?;
        let threshold = last.best_f + frac * (first.best_f - last.best_f);
        self.records
            .iter()
            .find(|r| r.best_f <= threshold)
            .map(|r| r.iteration)
    }
}

/// New velocity from inertia plus the two best-attraction terms; `r1`/`r2`
/// are the per-component uniform draws. Clamped to the velocity box.
pub fn velocity_update(
    v: [f64; 3],
    x: [f64; 3],
    local_best: [f64; 3],
    global_best: [f64; 3],
    r1: [f64; 3],
    r2: [f64; 3],
    config: &PsoConfig,
) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        let vi = config.w * v[i]
            + config.c1 * r1[i] * (local_best[i] - x[i])
            + config.c2 * r2[i] * (global_best[i] - x[i]);
        out[i] = vi.clamp(-config.v_max[i], config.v_max[i]);
    }
    out
}

/// New position `x + v`, clamped into the search box; the velocity
/// component is zeroed wherever the clamp engaged.
pub fn position_update(x: [f64; 3], v: [f64; 3], config: &PsoConfig) -> ([f64; 3], [f64; 3]) {
    let mut x_out = [0.0; 3];
    let mut v_out = v;
    for i in 0..3 {
        let xi = x[i] + v[i];
        if xi < config.bounds_lo[i] {
            x_out[i] = config.bounds_lo[i];
            v_out[i] = 0.0;
        } else if xi > config.bounds_hi[i] {
            x_out[i] = config.bounds_hi[i];
            v_out[i] = 0.0;
        } else {
            x_out[i] = xi;
        }
    }
    (x_out, v_out)
}

/// Swarm state between iterations.
pub struct Swarm {
    pub particles: Vec<Particle>,
    pub global_best_x: [f64; 3],
    pub global_best_f: f64,
    config: PsoConfig,
    rng: Rng,
}

impl Swarm {
    /// Draws and scores the initial population: positions uniform in the
    /// search box, velocities uniform in the velocity box, local bests at
    /// the initial positions, global best the index-order argmin.
    pub fn init<O: Objective>(config: &PsoConfig, objective: &O) -> Self {
        let mut rng = Rng::seed_from_u64(config.seed);
        let mut particles = Vec::with_capacity(config.n_particles);
        for _ in 0..config.n_particles {
            let mut x = [0.0; 3];
            for i in 0..3 {
                x[i] = rng.uniform(config.bounds_lo[i], config.bounds_hi[i]);
            }
            let mut v = [0.0; 3];
            for i in 0..3 {
                v[i] = rng.uniform(-config.v_max[i], config.v_max[i]);
            }
            particles.push(Particle {
                x,
                v,
                best_x: x,
                best_f: f64::INFINITY,
            });
        }
        for p in particles.iter_mut() {
            p.best_f = objective.evaluate(p.x);
        }
        let mut global_best_x = particles[0].best_x;
        let mut global_best_f = particles[0].best_f;
        for p in particles.iter().skip(1) {
            if p.best_f < global_best_f {
                global_best_f = p.best_f;
                global_best_x = p.best_x;
            }
        }
        Self {
            particles,
            global_best_x,
            global_best_f,
            config: config.clone(),
            rng,
        }
    }

    /// One synchronous iteration: move every particle (consuming its six
    /// draws), evaluate, then reduce bests in particle-index order.
    pub fn iterate<O: Objective>(&mut self, objective: &O) {
        for p in self.particles.iter_mut() {
            let mut r1 = [0.0; 3];
            let mut r2 = [0.0; 3];
            for r in r1.iter_mut() {
                *r = self.rng.uniform01();
            }
            for r in r2.iter_mut() {
                *r = self.rng.uniform01();
            }
            let v = velocity_update(
                p.v,
                p.x,
                p.best_x,
                self.global_best_x,
                r1,
                r2,
                &self.config,
            );
            let (x, v) = position_update(p.x, v, &self.config);
            p.x = x;
            p.v = v;
        }
        let fitness: Vec<f64> = self
            .particles
            .iter()
            .map(|p| objective.evaluate(p.x))
            .collect();
        for (p, &f) in self.particles.iter_mut().zip(fitness.iter()) {
            if f < p.best_f {
                p.best_f = f;
                p.best_x = p.x;
            }
            if f < self.global_best_f {
                self.global_best_f = f;
                self.global_best_x = p.x;
            }
        }
    }

    /// Runs the configured number of iterations, recording the global best
    /// after each.
    pub fn run<O: Objective>(&mut self, objective: &O) -> SwarmTrace {
        let mut records = Vec::with_capacity(self.config.n_iterations);
        for iteration in 1..=self.config.n_iterations {
            self.iterate(objective);
            debug_assert!(
                records
                    .last()
                    .map(|r: &TraceRecord| self.global_best_f <= r.best_f)
                    .unwrap_or(true),
                "global best regressed"
            );
            records.push(TraceRecord {
                iteration,
                best_x: self.global_best_x,
                best_f: self.global_best_f,
            });
        }
        SwarmTrace {
            records,
            quantized: None,
        }
    }
}

/// Optimizes an arbitrary objective; returns the continuous best position
/// and the trace.
pub fn optimize<O: Objective>(objective: &O, config: &PsoConfig) -> ([f64; 3], SwarmTrace) {
    let mut swarm = Swarm::init(config, objective);
    let trace = swarm.run(objective);
    (swarm.global_best_x, trace)
}

/// Tunes a channel: searches the continuous gain box, quantizes the best
/// triple onto the ladder, re-scores the quantized gains, and reports both
/// in the trace.
pub fn run_pso(
    channel: &ChannelModel,
    config: &PsoConfig,
    weights: &FitnessWeights,
    ladder: &ComponentLadder,
) -> (GainCode, SwarmTrace) {
    let objective = |x: [f64; 3]| {
        channel.evaluate_fitness(
            PidGains {
                kp: x[0],
                ki: x[1],
                kd: x[2],
            },
            weights,
        )
    };
    let (best_x, mut trace) = optimize(&objective, config);
    let code = encode_gains(
        PidGains {
            kp: best_x[0],
            ki: best_x[1],
            kd: best_x[2],
        },
        ladder,
    );
    let quantized_gains = decode_gains(code, ladder);
    let fitness = channel.evaluate_fitness(quantized_gains, weights);
    trace.quantized = Some(QuantizedBest { code, fitness });
    (code, trace)
}
