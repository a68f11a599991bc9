//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::hash::{Hash, Hasher};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use formation_core::consensus::{integrator_consensus_sim, Saturation};
use formation_core::controller::{heading_rate, Unicycle};
use formation_core::graph::Graph;
use formation_core::gvf::{field, field_derivative, Behavior, Branch, GvfGains};
use formation_core::oscillation::{
    amplitude_model, average_parametric_velocity, average_parametric_velocity_elliptic, epsilon, fit_ka,
    OscillationConfig, OscillationState,
};
use formation_core::path::{ParametricPath, StraightLinePath};
use formation_core::sim::{self, MemorySink, NullSink, RunOptions, Scenario, TelemetryRecord, TelemetrySink};

const FIG6: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/fig6.scn"));
const TWO_DRONE: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/two-drone-experiment.scn"));

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// Saturated consensus on the reference tree from 200 random starts.
/// Returns the outcome of the convergence check and of the Lyapunov check.
fn consensus_suite() -> (Outcome, Outcome) {
    let start = Instant::now();
    let graph = Graph::reference_tree();
    let sat = Saturation::new(10.0, 1.0).unwrap();
    let mut worst_edge: f64 = 0.0;
    let mut worst_input: f64 = 0.0;
    let mut worst_final: f64 = 0.0;
    let mut worst_rise = f64::NEG_INFINITY;
    for seed in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0: Vec<f64> = (0..8).map(|_| rng.gen_range(-100.0..=100.0)).collect();
        let target = x0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let traj = integrator_consensus_sim(&graph, &sat, &x0, 0.01, 150.0, 1).unwrap();
        worst_edge = worst_edge.max(traj.final_max_edge_error());
        worst_input = worst_input.max(traj.final_max_input());
        for &x in traj.final_state() {
            worst_final = worst_final.max((x - target).abs());
        }
        for w in traj.lyapunov.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    let elapsed = start.elapsed();
    let convergence = outcome(
        worst_edge < 1e-3 && worst_input < 1e-3 && worst_final < 1e-6 && within(elapsed, 10.0),
        format!(
            "max edge error {worst_edge:.2e} m, max |u| {worst_input:.2e}, max |x - max x0| {worst_final:.2e} m, {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
    let lyapunov = outcome(worst_rise <= 1e-9, format!("largest single-step increase of V {worst_rise:.2e}"));
    (convergence, lyapunov)
}

fn elliptic_oracle() -> Outcome {
    let start = Instant::now();
    let (v, w) = (16.0, 0.6);
    let cfg = OscillationConfig::new(v, w, 1.35).unwrap();
    let max = v / w;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let a = max * i as f64 / 99.0;
        let q = average_parametric_velocity(&cfg, a).unwrap();
        let e = average_parametric_velocity_elliptic(&cfg, a).unwrap();
        worst = worst.max((q - e).abs());
    }
    let at_zero = average_parametric_velocity(&cfg, 0.0).unwrap();
    let at_max = average_parametric_velocity(&cfg, max).unwrap();
    let endpoint_err = (at_zero - v).abs().max((at_max - 2.0 * v / PI).abs());
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-9 * v && endpoint_err < 1e-9 * v && within(elapsed, 1.0),
        format!(
            "quadrature vs closed form {worst:.2e} m/s, endpoints {endpoint_err:.2e} m/s, {:.3} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn ka_calibration() -> Outcome {
    let start = Instant::now();
    let fits: Vec<f64> = [0.3, 0.6].iter().map(|&w| fit_ka(16.0, w, 200).unwrap().k_a).collect();
    let elapsed = start.elapsed();
    outcome(
        fits.iter().all(|k| (1.30..=1.40).contains(k)) && within(elapsed, 1.0),
        format!("k_A = {:.4} (w = 0.3), {:.4} (w = 0.6), {:.3} s", fits[0], fits[1], elapsed.as_secs_f64()),
    )
}

fn experiment_constant() -> Outcome {
    let eps = epsilon(16.0, 1.35).unwrap();
    let a = amplitude_model(16.0, 0.6, 1.35, eps);
    outcome((a - 26.7).abs() <= 0.1, format!("A(eps) = {a:.4} m at eps = {eps:.4} m/s"))
}

fn single_drone() -> Outcome {
    let start = Instant::now();
    let text = r#"
        speed_m_s = 16.0
        [integration]
        dt_s = 0.01
        t_end_s = 60.0
        [oscillation]
        w_gamma_rad_s = 0.6
        k_a = 1.35
        [consensus]
        k_u = 0.06
        r_m = 50.0
        [[drones]]
        id = 1
        path = { origin_m = [0.0, 0.0], heading_rad = 0.4 }
        initial_path_parameter_m = 0.0
        initial_offset_m = 100.0
        initial_heading_rad = 2.5
    "#;
    let scenario = Scenario::from_toml_str(text).unwrap();
    let mut probe = MemorySink::default();
    let summary = sim::run(&scenario, &mut probe, RunOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let v = 16.0;
    let speed_err = (summary.min_ground_speed_m_s - v).abs().max((summary.max_ground_speed_m_s - v).abs());
    // heading-derived speed at every recorded tick
    let heading_speed_err = probe
        .records
        .iter()
        .map(|r| (Vector2::new(r.drones[0].heading.cos(), r.drones[0].heading.sin()) * v).norm() - v)
        .fold(0.0f64, |m, e| m.max(e.abs()));
    let first_phi = probe.records[0].drones[0].phi;
    let final_phi = summary.final_max_abs_phi_m;
    let gamma_zero = probe.records.iter().all(|r| r.drones[0].gamma == 0.0);
    outcome(
        final_phi < 0.1
            && speed_err < 1e-9
            && heading_speed_err < 1e-9
            && summary.max_step_displacement_m <= v * 0.01 + 1e-12
            && gamma_zero
            && (first_phi - 100.0).abs() < 1e-9
            && within(elapsed, 2.0),
        format!(
            "|phi(60 s)| = {final_phi:.2e} m from {first_phi:.1} m, speed error {:.2e} m/s, {:.2} s",
            speed_err.max(heading_speed_err),
            elapsed.as_secs_f64()
        ),
    )
}

fn oscillation_realization() -> Outcome {
    let (v, w, amplitude) = (16.0, 0.6, 15.0);
    let cfg = OscillationConfig::new(v, w, 1.35).unwrap();
    let osc = OscillationState::with_amplitude(amplitude);
    let path = StraightLinePath::new(Vector2::new(0.0, 0.0), 0.0);
    let gains = GvfGains { k_e: 1.0 };
    let k_n = 1.0;
    let dt = 0.01;
    let period = cfg.period();
    let mut vehicle = Unicycle::new(Vector2::zeros(), 0.0, v);
    let settle = 10.0 * period;
    let total = settle + period;
    let steps = (total / dt).round() as usize;
    let settle_steps = (settle / dt).round() as usize;
    let mut x_start = 0.0;
    let mut worst_track: f64 = 0.0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let behavior = Behavior::from_oscillation(&osc, w, t);
        let p = vehicle.position;
        if k == settle_steps {
            x_start = path.parameter_of(&p);
        }
        if k >= settle_steps {
            worst_track = worst_track.max((path.phi(&p) - behavior.gamma).abs());
        }
        if k == steps {
            break;
        }
        let sample = field(&path, &gains, v, &behavior, &p);
        let p_dot = vehicle.velocity();
        let f_dot = field_derivative(&path, &gains, v, &behavior, &p, &p_dot);
        vehicle = vehicle.step(heading_rate(k_n, v, &p_dot, &sample.f, &f_dot), dt, &Vector2::zeros());
    }
    let x_end = path.parameter_of(&vehicle.position);
    let measured = (x_end - x_start) / period;
    let expected = average_parametric_velocity(&cfg, amplitude).unwrap();
    let rel = (measured - expected).abs() / expected;
    outcome(
        rel < 0.03 && worst_track < 0.02 * amplitude,
        format!(
            "measured {measured:.4} m/s vs {expected:.4} m/s ({:.2} %), max |phi - gamma| {worst_track:.3} m ({:.2} % of A)",
            rel * 100.0,
            worst_track / amplitude * 100.0
        ),
    )
}

/// Behaviour with a quadratic amplitude profile `A(t) = a0 + a1 t + a2 t²/2`.
fn quadratic_behavior(a: [f64; 3], w: f64, t: f64) -> Behavior {
    let amp = a[0] + a[1] * t + 0.5 * a[2] * t * t;
    let rate = a[1] + a[2] * t;
    let (s, c) = (w * t).sin_cos();
    Behavior {
        gamma: amp * s,
        gamma_dot: rate * s + amp * w * c,
        gamma_ddot: a[2] * s + 2.0 * rate * w * c - amp * w * w * s,
    }
}

fn field_derivative_check() -> Outcome {
    let (v, w) = (16.0, 0.6);
    let gains = GvfGains { k_e: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut interior = 0;
    let mut exterior = 0;
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    while interior + exterior < 1000 {
        let path = StraightLinePath::new(
            Vector2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)),
            rng.gen_range(-PI..PI),
        );
        let coeffs = [rng.gen_range(0.0..20.0), rng.gen_range(-1.0..1.0), rng.gen_range(-0.2..0.2)];
        let t = rng.gen_range(0.0..20.0);
        let want_exterior = exterior < interior;
        let offset = if want_exterior {
            rng.gen_range(-80.0..80.0)
        } else {
            rng.gen_range(-15.0..15.0)
        };
        let p = path.point_at(rng.gen_range(-100.0..100.0)) + path.gradient(&Vector2::zeros()) * offset;
        let heading: f64 = rng.gen_range(-PI..PI);
        let p_dot = Vector2::new(heading.cos(), heading.sin()) * v;

        let behavior = quadratic_behavior(coeffs, w, t);
        let sample = field(&path, &gains, v, &behavior, &p);
        let margin = (sample.beta.norm() - v).abs() / v;
        // stay clear of the branch boundary, where the field is not differentiable
        if margin < 0.05 {
            continue;
        }
        let branch_ok = |q: &Vector2<f64>, tt: f64| field(&path, &gains, v, &quadratic_behavior(coeffs, w, tt), q).branch == sample.branch;
        let (p_plus, p_minus) = (p + p_dot * h, p - p_dot * h);
        if !branch_ok(&p_plus, t + h) || !branch_ok(&p_minus, t - h) {
            continue;
        }
        match sample.branch {
            Branch::Interior if !want_exterior => interior += 1,
            Branch::Exterior if want_exterior => exterior += 1,
            _ => continue,
        }
        let f_plus = field(&path, &gains, v, &quadratic_behavior(coeffs, w, t + h), &p_plus).f;
        let f_minus = field(&path, &gains, v, &quadratic_behavior(coeffs, w, t - h), &p_minus).f;
        let numeric = (f_plus - f_minus) / (2.0 * h);
        let analytic = field_derivative(&path, &gains, v, &behavior, &p, &p_dot);
        worst = worst.max((numeric - analytic).norm());
    }
    outcome(
        worst < 1e-4 * v * w,
        format!("{interior} interior + {exterior} exterior states, worst mismatch {worst:.2e} (limit {:.2e})", 1e-4 * v * w),
    )
}

fn formation_scenario() -> Scenario {
    Scenario::from_toml_str(FIG6).unwrap()
}

fn eight_drone_formation() -> Outcome {
    let scenario = formation_scenario();
    let violations = scenario.validate();
    let start = Instant::now();
    let summary = sim::run(&scenario, &mut NullSink, RunOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let max_amp = summary.final_amplitudes_m.iter().cloned().fold(0.0, f64::max);
    outcome(
        violations.is_empty()
            && summary.final_max_pairwise_parameter_m < 1.0
            && max_amp < 0.5
            && summary.final_max_abs_phi_m < 0.5
            && summary.max_abs_omega_rad_s < 1.5
            && within(elapsed, 30.0),
        format!(
            "pairwise {:.2e} m, max A {max_amp:.2e} m, max |phi| {:.2e} m, max |omega| {:.3} rad/s, settled at {:?} s, {:.2} s",
            summary.final_max_pairwise_parameter_m,
            summary.final_max_abs_phi_m,
            summary.max_abs_omega_rad_s,
            summary.settling_time_s,
            elapsed.as_secs_f64()
        ),
    )
}

/// Hashes the bit patterns of every record.
#[derive(Default)]
struct Digest {
    hashes: Vec<u64>,
    last: Option<TelemetryRecord>,
}

impl TelemetrySink for Digest {
    fn record(&mut self, record: &TelemetryRecord) -> Result<(), sim::SimError> {
        let mut h = DefaultHasher::new();
        for v in record.values() {
            v.to_bits().hash(&mut h);
        }
        for d in &record.drones {
            d.branch.hash(&mut h);
        }
        self.hashes.push(h.finish());
        self.last = Some(record.clone());
        Ok(())
    }
}

fn determinism() -> Outcome {
    let mut scenario = formation_scenario();
    scenario.integration.telemetry_every_ticks = 1;
    let digest = |parallel: bool| {
        let mut d = Digest::default();
        sim::run(&scenario, &mut d, RunOptions { parallel }).unwrap();
        d
    };
    let a = digest(false);
    let b = digest(false);
    let c = digest(true);
    let same = |x: &Digest, y: &Digest| {
        x.hashes == y.hashes
            && x.last.as_ref().map(TelemetryRecord::values).map(|v| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>())
                == y.last.as_ref().map(TelemetryRecord::values).map(|v| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>())
    };
    outcome(
        a.hashes.len() == 60001 && same(&a, &b) && same(&a, &c),
        format!(
            "{} records; repeat run identical: {}, parallel run identical: {}",
            a.hashes.len(),
            same(&a, &b),
            same(&a, &c)
        ),
    )
}

fn wind_robustness() -> Outcome {
    let mut scenario = Scenario::from_toml_str(TWO_DRONE).unwrap();
    scenario.wind = Some(sim::WindSection { velocity_m_s: [0.0, 3.5] });
    let mut sink = MemorySink::default();
    let summary = sim::run(&scenario, &mut sink, RunOptions::default()).unwrap();
    outcome(
        summary.final_max_pairwise_parameter_m < 2.0,
        format!(
            "3.5 m/s crosswind: final pairwise difference {:.2e} m, ground speed {:.2}..{:.2} m/s",
            summary.final_max_pairwise_parameter_m, summary.min_ground_speed_m_s, summary.max_ground_speed_m_s
        ),
    )
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags such as `--nocapture`; listing is the only one that matters.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let (c1, c2) = consensus_suite();
    let results = [
        ("1 saturated consensus on the reference tree", c1),
        ("2 Lyapunov function non-increasing", c2),
        ("3 elliptic-integral oracle", elliptic_oracle()),
        ("4 k_A calibration", ka_calibration()),
        ("5 amplitude at minimum velocity", experiment_constant()),
        ("6 single-drone path following", single_drone()),
        ("7 oscillation realization", oscillation_realization()),
        ("8 field derivative", field_derivative_check()),
        ("9 eight-drone formation", eight_drone_formation()),
        ("10 determinism", determinism()),
        ("wind robustness", wind_robustness()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
