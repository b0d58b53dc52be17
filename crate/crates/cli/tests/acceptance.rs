//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line (run with `--nocapture` to see them on success).
//!
//! The heavier criteria simulate closed loops at full resolution; the
//! whole suite is sized for minutes, not hours.

use retune_core::pid::{decode_gains, encode_gains, ComponentLadder, GainCode, PidConfig, PidGains, PidState};
use retune_core::plants::{FirstOrderPlant, Plant, SensorMap, TachSpec};
use retune_core::pso::{optimize, run_pso, ChannelModel, FitnessWeights, PsoConfig};
use retune_core::sim::{
    run_scenario, ChannelConfig, DisturbanceKind, DisturbanceSpec, RefSpec, Scenario, ShiftTarget,
    TelemetryRecord,
};
use retune_core::supervisor::{EventKind, Mode, SupervisorConfig, SupervisorEvent};

fn check(name: &str, cond: bool, detail: String) {
    if cond {
        if detail.is_empty() {
            println!("ACCEPTANCE {name}: PASS");
        } else {
            println!("ACCEPTANCE {name}: PASS ({detail})");
        }
    } else {
        println!("ACCEPTANCE {name}: FAIL ({detail})");
        panic!("{name} failed: {detail}");
    }
}

fn motor_model() -> ChannelModel {
    ChannelModel {
        plant: Plant::FirstOrder(FirstOrderPlant::new(600.0, 0.5).unwrap()),
        map: SensorMap::tachometer_default(),
        ref_v: 2.5,
        pid: PidConfig::default(),
        window_s: 5.0,
    }
}

fn times_of(events: &[SupervisorEvent], channel: usize, kind: EventKind) -> Vec<f64> {
    events
        .iter()
        .filter(|e| e.channel == channel && e.kind == kind)
        .map(|e| e.time)
        .collect()
}

fn iae_over(rows: &[&TelemetryRecord], t0: f64, t1: f64) -> f64 {
    let mut iae = 0.0;
    for pair in rows.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if a.t >= t0 && b.t <= t1 {
            iae += 0.5 * (b.t - a.t) * (a.error_v.abs() + b.error_v.abs());
        }
    }
    iae
}

/// Criterion 1: on the default DC-motor channel the quantized swarm result
/// is within 5% of the exhaustive minimum over all 4096 codes, for at
/// least 18 of 20 seeds.
#[test]
fn criterion_01_pso_vs_exhaustive_oracle() {
    let ladder = ComponentLadder::default();
    let channel = motor_model();
    let weights = FitnessWeights::default();

    // independent brute-force oracle over the whole 16^3 lattice
    let mut grid_best = f64::INFINITY;
    for kp in 0..16u8 {
        for ki in 0..16u8 {
            for kd in 0..16u8 {
                let gains = decode_gains(GainCode::new(kp, ki, kd).unwrap(), &ladder);
                grid_best = grid_best.min(channel.evaluate_fitness(gains, &weights));
            }
        }
    }

    let mut hits = 0;
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..20 {
        let mut config = PsoConfig::for_ladder(&ladder);
        config.seed = seed;
        let (_, trace) = run_pso(&channel, &config, &weights, &ladder);
        let quantized = trace.quantized.expect("quantized result").fitness;
        let ratio = quantized / grid_best;
        worst_ratio = worst_ratio.max(ratio);
        if quantized <= 1.05 * grid_best {
            hits += 1;
        }
    }
    check(
        "criterion 1 (PSO vs exhaustive oracle)",
        hits >= 18,
        format!("{hits}/20 seeds within 1.05x (worst ratio {worst_ratio:.4}, grid best {grid_best:.6})"),
    );
}

/// Criterion 2: the global-best trace has exactly 50 records and is
/// non-increasing, for every channel and seed tried.
#[test]
fn criterion_02_monotone_convergence() {
    let ladder = ComponentLadder::default();
    let weights = FitnessWeights::default();
    let channels = [
        ("motor", motor_model()),
        ("temperature", {
            let cfg = ChannelConfig::temperature_default(1);
            ChannelModel {
                plant: cfg.plant.build().unwrap(),
                map: cfg.map,
                ref_v: 2.5,
                pid: PidConfig::default(),
                window_s: 5.0,
            }
        }),
        ("gyro", {
            let cfg = ChannelConfig::gyroscope_default(1);
            ChannelModel {
                plant: cfg.plant.build().unwrap(),
                map: cfg.map,
                ref_v: 3.5,
                pid: PidConfig::default(),
                window_s: 5.0,
            }
        }),
    ];
    for (name, channel) in &channels {
        for seed in 0..3 {
            let mut config = PsoConfig::for_ladder(&ladder);
            config.seed = seed;
            let (_, trace) = run_pso(channel, &config, &weights, &ladder);
            assert_eq!(trace.records.len(), 50, "{name} seed {seed}: trace length");
            for pair in trace.records.windows(2) {
                assert!(
                    pair[1].best_f <= pair[0].best_f,
                    "{name} seed {seed}: fitness regressed at iteration {}",
                    pair[1].iteration
                );
            }
        }
    }
    check(
        "criterion 2 (monotone convergence, 50-record traces)",
        true,
        String::new(),
    );
}

/// Criterion 3: a pulse from t = 6 to t = 8 time equivalents on a
/// well-tuned motor channel never wakes the tuner, and the error re-enters
/// the band within 3 time equivalents of each excursion.
#[test]
fn criterion_03_case1_pulse_without_tuner() {
    let te = 5.0; // one time equivalent = the 5 s evaluation window
    let mut s = Scenario::default_three_channel();
    s.duration = 12.0 * te;
    s.channels.truncate(1);
    s.supervisor.n_channels = 1;
    s.disturbances = vec![DisturbanceSpec {
        channel: 1,
        kind: DisturbanceKind::Pulse,
        start: 6.0 * te,
        stop: Some(8.0 * te),
        magnitude: 1.0,
        shift_target: ShiftTarget::default(),
    }];
    let r = run_scenario(&s).unwrap();

    let tuner_events: Vec<_> = r.events.iter().filter(|e| e.kind.is_tuner_event()).collect();
    let detections = times_of(&r.events, 1, EventKind::DisturbanceDetected);
    let recoveries = times_of(&r.events, 1, EventKind::PidRecovered);
    let mut all_recovered_in_time = !detections.is_empty();
    for td in &detections {
        let recovered = recoveries
            .iter()
            .any(|tr| *tr > *td && *tr - *td <= 3.0 * te + s.dt);
        all_recovered_in_time &= recovered;
    }
    check(
        "criterion 3 (case 1: pulse handled without tuner)",
        tuner_events.is_empty() && all_recovered_in_time,
        format!(
            "tuner events {:?}, detections {detections:?}, recoveries {recoveries:?}",
            tuner_events
        ),
    );
}

/// Criterion 4: doubling the plant gain under detuned gains escalates
/// exactly once, exactly t_o after detection, and the tuned gains at least
/// halve the windowed IAE.
#[test]
fn criterion_04_case2_parameter_shift_escalates_and_retunes() {
    let mut s = Scenario::default_three_channel();
    s.duration = 300.0;
    s.channels = vec![ChannelConfig::temperature_default(1)];
    s.channels[0].initial_code = GainCode::new(0, 15, 0).unwrap(); // sluggish
    s.supervisor.n_channels = 1;
    s.disturbances = vec![DisturbanceSpec {
        channel: 1,
        kind: DisturbanceKind::ParameterShift,
        start: 20.0,
        stop: None,
        magnitude: 2.0,
        shift_target: ShiftTarget::Gain,
    }];
    let r = run_scenario(&s).unwrap();

    let detections = times_of(&r.events, 1, EventKind::DisturbanceDetected);
    let escalations = times_of(&r.events, 1, EventKind::EscalatedToPso);
    let started = times_of(&r.events, 1, EventKind::TuningStarted);
    let finished = times_of(&r.events, 1, EventKind::TuningFinished);

    assert_eq!(escalations.len(), 1, "exactly one escalation: {escalations:?}");
    assert_eq!(started.len(), 1);
    assert_eq!(finished.len(), 1);
    let t_detect = detections[0];
    let t_escalate = escalations[0];
    let deadline_ok = (t_escalate - t_detect - s.supervisor.t_o).abs() <= s.dt + 1e-9;

    let rows: Vec<&TelemetryRecord> = r.telemetry.iter().filter(|r| r.channel == 1).collect();
    let pre_iae = iae_over(&rows, t_detect, t_detect + 5.0);
    let t_install = finished[0];
    let post_iae = iae_over(&rows, t_install, t_install + 5.0);

    check(
        "criterion 4 (case 2: escalation and retune)",
        deadline_ok && post_iae <= 0.5 * pre_iae,
        format!(
            "detect {t_detect:.3}, escalate {t_escalate:.3} (t_o {}), pre IAE {pre_iae:.4}, post IAE {post_iae:.4}",
            s.supervisor.t_o
        ),
    );
}

/// Criterion 5: three simultaneous disturbances share the single tuner in
/// FIFO order, one at a time, and nobody waits more than two tuning
/// intervals.
#[test]
fn criterion_05_single_tuner_multiplexing() {
    let window = 1.0;
    let mut s = Scenario::default_three_channel();
    s.duration = 30.0;
    s.eval_window_s = window;
    s.supervisor = SupervisorConfig {
        n_channels: 3,
        ..SupervisorConfig::with_window(window)
    };
    s.pso.n_particles = 15;
    s.pso.n_iterations = 5;
    // three fast channels, all detuned so every one escalates
    let mut motor2 = ChannelConfig::motor_default(3);
    motor2.plant = retune_core::sim::PlantConfig::FirstOrder {
        gain: 600.0,
        tau: 0.25,
    };
    s.channels = vec![
        ChannelConfig::motor_default(1),
        ChannelConfig::gyroscope_default(2),
        motor2,
    ];
    for ch in &mut s.channels {
        ch.initial_code = GainCode::new(0, 15, 0).unwrap();
    }
    s.disturbances = (1..=3)
        .map(|label| DisturbanceSpec {
            channel: label,
            kind: DisturbanceKind::ParameterShift,
            start: 1.0,
            stop: None,
            magnitude: 2.0,
            shift_target: ShiftTarget::Gain,
        })
        .collect();
    let r = run_scenario(&s).unwrap();

    let escal: Vec<(f64, usize)> = r
        .events
        .iter()
        .filter(|e| e.kind == EventKind::EscalatedToPso)
        .map(|e| (e.time, e.channel))
        .collect();
    let starts: Vec<(f64, usize)> = r
        .events
        .iter()
        .filter(|e| e.kind == EventKind::TuningStarted)
        .map(|e| (e.time, e.channel))
        .collect();
    let requeues = r
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Requeued)
        .count();
    assert_eq!(escal.len(), 3, "all three channels escalate: {:?}", r.events);
    assert_eq!(starts.len(), 3, "three tuning sessions: {starts:?}");
    assert_eq!(requeues, 0, "no channel needed a second pass");

    // FIFO: service order equals escalation order
    let escal_order: Vec<usize> = escal.iter().map(|(_, c)| *c).collect();
    let start_order: Vec<usize> = starts.iter().map(|(_, c)| *c).collect();
    assert_eq!(escal_order, start_order, "FIFO order violated");

    // at most one channel tuning at any step, and the tuning intervals are
    // disjoint by construction of the mode column
    let mut by_time: std::collections::BTreeMap<u64, usize> = std::collections::BTreeMap::new();
    for row in &r.telemetry {
        if row.mode == Mode::Tuning {
            *by_time.entry((row.t / s.dt).round() as u64).or_insert(0) += 1;
        }
    }
    let max_simultaneous = by_time.values().copied().max().unwrap_or(0);
    assert!(max_simultaneous <= 1, "two channels tuning at once");

    // wait bound: grant no later than two tuning intervals after escalation
    let tuning_interval = s.pso.n_iterations as f64 * window;
    let mut worst_wait: f64 = 0.0;
    for (te, ch) in &escal {
        let ts = starts
            .iter()
            .find(|(_, c)| c == ch)
            .map(|(t, _)| *t)
            .expect("every escalated channel is served");
        worst_wait = worst_wait.max(ts - te);
    }
    check(
        "criterion 5 (single-tuner FIFO multiplexing)",
        worst_wait <= 2.0 * tuning_interval + 0.5 * s.dt,
        format!("worst wait {worst_wait:.3} s vs bound {:.3} s", 2.0 * tuning_interval),
    );
}

/// Criterion 6: the physical mappings hit their published values.
#[test]
fn criterion_06_table_mappings() {
    let gyro = SensorMap::gyroscope_default();
    let gyro_v = gyro.to_voltage(23.27);
    let gyro_ok = (gyro_v - 4.9997).abs() <= 1e-3;

    let temp = SensorMap::temperature_default();
    let span = temp.to_voltage(150.0) - temp.to_voltage(-50.0);
    let temp_ok = (span - 4.5).abs() <= 1e-3;

    let tach = TachSpec::new(2, 3000.0).unwrap();
    let tach_ok = tach.frequency_hz() == 100.0;

    check(
        "criterion 6 (sensor table mappings)",
        gyro_ok && temp_ok && tach_ok,
        format!("gyro {gyro_v} V, temp span {span} V, tach {} Hz", tach.frequency_hz()),
    );
}

/// Criterion 7: 10^4 random in-range gain triples quantize within half the
/// local lattice spacing per axis; lattice points round-trip exactly.
#[test]
fn criterion_07_quantization_round_trip() {
    let ladder = ComponentLadder::default();

    // exact round trips for every one of the 4096 codes
    for kp in 0..16u8 {
        for ki in 0..16u8 {
            for kd in 0..16u8 {
                let code = GainCode::new(kp, ki, kd).unwrap();
                assert_eq!(
                    encode_gains(decode_gains(code, &ladder), &ladder),
                    code,
                    "lattice point failed to round-trip"
                );
            }
        }
    }

    let mut axis_values = |f: &dyn Fn(u8) -> f64| -> Vec<f64> {
        let mut v: Vec<f64> = (0..16u8).map(f).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    };
    let kp_vals = axis_values(&|c| ladder.kp_at(c));
    let ki_vals = axis_values(&|c| ladder.ki_at(c));
    let kd_vals = axis_values(&|c| ladder.kd_at(c));
    let half_local_gap = |vals: &[f64], t: f64| -> f64 {
        let i = vals
            .iter()
            .rposition(|&v| v <= t)
            .unwrap_or(0)
            .min(vals.len() - 2);
        0.5 * (vals[i + 1] - vals[i])
    };

    // deterministic pseudo-random in-range triples
    let mut state = 0x5eed_u64;
    let mut next01 = move || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let (kp_lo, kp_hi) = ladder.kp_range();
    let (ki_lo, ki_hi) = ladder.ki_range();
    let (kd_lo, kd_hi) = ladder.kd_range();
    for _ in 0..10_000 {
        let target = PidGains {
            kp: kp_lo + next01() * (kp_hi - kp_lo),
            ki: ki_lo + next01() * (ki_hi - ki_lo),
            kd: kd_lo + next01() * (kd_hi - kd_lo),
        };
        let got = decode_gains(encode_gains(target, &ladder), &ladder);
        assert!(
            (got.kp - target.kp).abs() <= half_local_gap(&kp_vals, target.kp) + 1e-12,
            "kp {} -> {}",
            target.kp,
            got.kp
        );
        assert!(
            (got.ki - target.ki).abs() <= half_local_gap(&ki_vals, target.ki) + 1e-12,
            "ki {} -> {}",
            target.ki,
            got.ki
        );
        assert!(
            (got.kd - target.kd).abs() <= half_local_gap(&kd_vals, target.kd) + 1e-12,
            "kd {} -> {}",
            target.kd,
            got.kd
        );
    }
    check("criterion 7 (quantization round trip)", true, String::new());
}

/// Criterion 8: equal seeds give byte-identical CSVs, including across
/// a run that escalates and tunes.
#[test]
fn criterion_08_determinism() {
    let scenario_text = r#"
[sim]
duration = 8.0
seed = 1234

[pso]
particles = 8
iterations = 4
eval_window = 0.5

[channel.1]
preset = "motor"
code = [0, 15, 0]

[channel.2]
preset = "gyro"

[disturbance.1]
channel = 1
kind = "parameter_shift"
start = 0.5
magnitude = 2.0
"#;
    let scenario = retune_cli::config::parse_scenario(scenario_text).unwrap();
    let render = |s: &Scenario| {
        let r = run_scenario(s).unwrap();
        let mut blob = retune_cli::output::telemetry_csv(&r.telemetry);
        blob.push_str(&retune_cli::output::events_csv(&r.events));
        blob.push_str(&retune_cli::output::metrics_csv(&r.summaries));
        for (_, trace) in &r.tuning_traces {
            blob.push_str(&retune_cli::output::swarm_trace_csv(trace));
        }
        blob
    };
    let a = render(&scenario);
    let b = render(&scenario);
    check(
        "criterion 8 (byte-identical reruns)",
        a == b && !a.is_empty(),
        format!("{} bytes compared", a.len()),
    );
}

/// Criterion 9: halving dt from 2 ms to 1 ms shrinks the worst deviation
/// from the analytic continuous closed loop by at least 1.9x.
#[test]
fn criterion_09_discretization_convergence() {
    use num_complex::Complex64;

    // PI loop on a first-order plant in voltage units
    let (kv, tau, kp, ki, r) = (1.0, 0.5, 2.0, 4.0, 1.0);

    let continuous = |t: f64| -> f64 {
        let b = 1.0 + kv * kp;
        let c = kv * ki;
        let disc = Complex64::new(b * b - 4.0 * tau * c, 0.0).sqrt();
        let p1 = (Complex64::new(-b, 0.0) + disc) / (2.0 * tau);
        let p2 = (Complex64::new(-b, 0.0) - disc) / (2.0 * tau);
        let residue = |p: Complex64, q: Complex64| {
            Complex64::new(kv, 0.0) * (Complex64::new(kp, 0.0) * p + ki) * r
                / (tau * p * (p - q))
        };
        let y = Complex64::new(r, 0.0)
            + residue(p1, p2) * (p1 * t).exp()
            + residue(p2, p1) * (p2 * t).exp();
        y.re
    };

    let max_err = |dt: f64| -> f64 {
        let mut plant = FirstOrderPlant::new(kv, tau).unwrap();
        let gains = PidGains { kp, ki, kd: 0.0 };
        let config = PidConfig {
            dt,
            u_min: -1e9,
            u_max: 1e9,
            ..PidConfig::default()
        };
        let mut state = PidState::default();
        let steps = (3.0 / dt).round() as u64;
        let mut worst: f64 = 0.0;
        for k in 0..=steps {
            let t = k as f64 * dt;
            let y = plant.output();
            worst = worst.max((y - continuous(t)).abs());
            if k < steps {
                let u = retune_core::pid::pid_step(&mut state, r - y, &gains, &config).unwrap();
                plant.step(u, dt).unwrap();
            }
        }
        worst
    };

    let e_coarse = max_err(2e-3);
    let e_fine = max_err(1e-3);
    let ratio = e_coarse / e_fine;
    check(
        "criterion 9 (discretization convergence)",
        ratio >= 1.9,
        format!("error {e_coarse:.2e} at 2 ms vs {e_fine:.2e} at 1 ms, ratio {ratio:.3}"),
    );
}

/// Criterion 10: on the synthetic convex objective, the 50-particle swarm
/// needs no more iterations (in the median over 20 seeds) than the
/// 10-particle swarm to close 95% of its fitness gap.
#[test]
fn criterion_10_convergence_study_shape() {
    let target = [6.5, 3.25, 8.0];
    let objective = move |x: [f64; 3]| {
        (x[0] - target[0]).powi(2) + (x[1] - target[1]).powi(2) + (x[2] - target[2]).powi(2)
    };
    let median_iters = |count: usize| -> f64 {
        let mut iters: Vec<f64> = (0..20)
            .map(|seed| {
                let mut config = PsoConfig::with_bounds([0.0; 3], [10.0; 3]);
                config.n_particles = count;
                config.seed = seed;
                let (_, trace) = optimize(&objective, &config);
                trace.iterations_to_threshold(0.05).unwrap() as f64
            })
            .collect();
        iters.sort_by(|a, b| a.partial_cmp(b).unwrap());
        0.5 * (iters[9] + iters[10])
    };
    let m10 = median_iters(10);
    let m50 = median_iters(50);
    check(
        "criterion 10 (convergence study shape)",
        m50 <= m10,
        format!("median iterations-to-threshold: 50 particles {m50}, 10 particles {m10}"),
    );
}
